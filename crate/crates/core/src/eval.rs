//! Classification and latent-space quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    /// Builds the matrix from prediction/label pairs.
    pub fn from_predictions(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::shape_of(&[labels.len()], &[preds.len()]));
        }
        let mut cm = Self::new(classes);
        for (&p, &t) in preds.iter().zip(labels) {
            if p >= classes {
                return Err(Error::InvalidLabel { value: p, num_classes: classes });
            }
            if t >= classes {
                return Err(Error::InvalidLabel { value: t, num_classes: classes });
            }
            cm.counts[t * classes + p] += 1;
        }
        Ok(cm)
    }

    /// Builds a matrix directly from rows of counts (each row a true class).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        for r in rows {
            if r.len() != classes {
                return Err(Error::shape_of(&[classes], &[r.len()]));
            }
        }
        Ok(Self { classes, counts: rows.iter().flatten().copied().collect() })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn row_sum(&self, true_class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(true_class, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Row-normalized percentage view; rows with no samples stay zero.
    pub fn percent_rows(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|t| {
                let total = self.row_sum(t);
                (0..self.classes)
                    .map(|p| {
                        if total == 0 {
                            0.0
                        } else {
                            100.0 * self.get(t, p) as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Trace over total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    let correct: u64 = (0..cm.classes()).map(|c| cm.get(c, c)).sum();
    Ok(correct as f64 / total as f64)
}

/// Per-class F1 plus the unweighted macro mean. Classes with zero
/// precision+recall contribute an F1 of 0.
pub fn f1_scores(cm: &ConfusionMatrix) -> (Vec<f64>, f64) {
    let k = cm.classes();
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.get(c, c) as f64;
        let col = cm.col_sum(c) as f64;
        let row = cm.row_sum(c) as f64;
        let precision = if col > 0.0 { tp / col } else { 0.0 };
        let recall = if row > 0.0 { tp / row } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(f1);
    }
    let macro_f1 = per_class.iter().sum::<f64>() / k as f64;
    (per_class, macro_f1)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn cluster_ids(labels: &[usize]) -> Vec<usize> {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Mean silhouette coefficient over all points (Euclidean distance).
/// Points in singleton clusters contribute 0.
pub fn silhouette(embeddings: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if embeddings.len() != labels.len() {
        return Err(Error::shape_of(&[labels.len()], &[embeddings.len()]));
    }
    let ids = cluster_ids(labels);
    if ids.len() < 2 {
        return Err(Error::InvalidConfig("silhouette needs at least two clusters".into()));
    }
    let n = embeddings.len();
    let mut total = 0.0;
    for i in 0..n {
        // distance sums from point i to each cluster, accumulated in index order
        let mut sums: Vec<f64> = vec![0.0; ids.len()];
        let mut counts: Vec<usize> = vec![0; ids.len()];
        for j in 0..n {
            if i == j {
                continue;
            }
            let cid = ids.iter().position(|&c| c == labels[j]).unwrap();
            sums[cid] += euclidean(&embeddings[i], &embeddings[j]);
            counts[cid] += 1;
        }
        let own = ids.iter().position(|&c| c == labels[i]).unwrap();
        if counts[own] == 0 {
            continue; // singleton cluster contributes 0
        }
        let a = sums[own] / counts[own] as f64;
        let mut b = f64::INFINITY;
        for (cid, _) in ids.iter().enumerate() {
            if cid != own && counts[cid] > 0 {
                b = b.min(sums[cid] / counts[cid] as f64);
            }
        }
        total += (b - a) / a.max(b);
    }
    Ok(total / n as f64)
}

/// Davies-Bouldin index: centroids are cluster means, dispersion is the mean
/// Euclidean distance to the centroid; lower is better. Coincident centroids
/// yield `f64::INFINITY`.
pub fn davies_bouldin(embeddings: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if embeddings.len() != labels.len() {
        return Err(Error::shape_of(&[labels.len()], &[embeddings.len()]));
    }
    let ids = cluster_ids(labels);
    if ids.len() < 2 {
        return Err(Error::InvalidConfig("davies_bouldin needs at least two clusters".into()));
    }
    let dim = embeddings[0].len();

    let mut centroids = vec![vec![0.0; dim]; ids.len()];
    let mut counts = vec![0usize; ids.len()];
    for (point, &label) in embeddings.iter().zip(labels) {
        let cid = ids.iter().position(|&c| c == label).unwrap();
        for (acc, v) in centroids[cid].iter_mut().zip(point) {
            *acc += v;
        }
        counts[cid] += 1;
    }
    for (centroid, &count) in centroids.iter_mut().zip(&counts) {
        for v in centroid.iter_mut() {
            *v /= count as f64;
        }
    }

    let mut dispersion = vec![0.0; ids.len()];
    for (point, &label) in embeddings.iter().zip(labels) {
        let cid = ids.iter().position(|&c| c == label).unwrap();
        dispersion[cid] += euclidean(point, &centroids[cid]);
    }
    for (s, &count) in dispersion.iter_mut().zip(&counts) {
        *s /= count as f64;
    }

    let k = ids.len();
    let mut sum = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = euclidean(&centroids[i], &centroids[j]);
            let ratio = if d > 0.0 { (dispersion[i] + dispersion[j]) / d } else { f64::INFINITY };
            worst = worst.max(ratio);
        }
        sum += worst;
    }
    Ok(sum / k as f64)
}

/// Full metrics bundle for one evaluated model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
}

impl MetricsReport {
    /// Classification metrics from a confusion matrix; cluster indices are
    /// attached separately when embeddings are available.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let k = cm.classes();
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        for c in 0..k {
            let tp = cm.get(c, c) as f64;
            let col = cm.col_sum(c) as f64;
            let row = cm.row_sum(c) as f64;
            precision.push(if col > 0.0 { tp / col } else { 0.0 });
            recall.push(if row > 0.0 { tp / row } else { 0.0 });
        }
        let (per_class_f1, macro_f1) = f1_scores(cm);
        Ok(Self {
            accuracy: accuracy(cm)?,
            per_class_precision: precision,
            per_class_recall: recall,
            per_class_f1,
            macro_f1,
            silhouette: None,
            davies_bouldin: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force silhouette from the definition, via an explicit distance
    /// matrix. Written independently of the implementation above.
    fn silhouette_oracle(points: &[Vec<f64>], labels: &[usize]) -> f64 {
        let n = points.len();
        let mut dist = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for d in 0..points[i].len() {
                    s += (points[i][d] - points[j][d]).powi(2);
                }
                dist[i][j] = s.sqrt();
            }
        }
        let mut total = 0.0;
        for i in 0..n {
            let own: Vec<usize> =
                (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if own.is_empty() {
                continue;
            }
            let a = own.iter().map(|&j| dist[i][j]).sum::<f64>() / own.len() as f64;
            let mut b = f64::INFINITY;
            let mut others: Vec<usize> = labels.to_vec();
            others.sort_unstable();
            others.dedup();
            for &c in &others {
                if c == labels[i] {
                    continue;
                }
                let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                if members.is_empty() {
                    continue;
                }
                let m = members.iter().map(|&j| dist[i][j]).sum::<f64>() / members.len() as f64;
                if m < b {
                    b = m;
                }
            }
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    /// Brute-force Davies-Bouldin from the definition.
    fn db_oracle(points: &[Vec<f64>], labels: &[usize]) -> f64 {
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let dim = points[0].len();
        let centroid = |c: usize| -> Vec<f64> {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            let mut acc = vec![0.0; dim];
            for p in &members {
                for d in 0..dim {
                    acc[d] += p[d];
                }
            }
            for v in acc.iter_mut() {
                *v /= members.len() as f64;
            }
            acc
        };
        let disp = |c: usize, center: &[f64]| -> f64 {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            let mut acc = 0.0;
            for p in &members {
                let mut s = 0.0;
                for d in 0..dim {
                    s += (p[d] - center[d]).powi(2);
                }
                acc += s.sqrt();
            }
            acc / members.len() as f64
        };
        let centers: Vec<Vec<f64>> = classes.iter().map(|&c| centroid(c)).collect();
        let disps: Vec<f64> = classes.iter().zip(&centers).map(|(&c, ct)| disp(c, ct)).collect();
        let mut sum = 0.0;
        for i in 0..classes.len() {
            let mut worst: f64 = 0.0;
            for j in 0..classes.len() {
                if i == j {
                    continue;
                }
                let mut s = 0.0;
                for d in 0..dim {
                    s += (centers[i][d] - centers[j][d]).powi(2);
                }
                let dist = s.sqrt();
                let r = if dist > 0.0 { (disps[i] + disps[j]) / dist } else { f64::INFINITY };
                if r > worst {
                    worst = r;
                }
            }
            sum += worst;
        }
        sum / classes.len() as f64
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        loop {
            let points: Vec<Vec<f64>> =
                (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let mut distinct = labels.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.len() >= 2 {
                return (points, labels);
            }
        }
    }

    #[test]
    fn confusion_matrix_basics() {
        let labels = [0, 1, 2, 3, 4, 5, 6];
        let cm = ConfusionMatrix::from_predictions(&labels, &labels, 7).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        let (f1, macro_f1) = f1_scores(&cm);
        assert!(f1.iter().all(|&v| v == 1.0));
        assert_eq!(macro_f1, 1.0);

        // everything predicted as class 0
        let preds = [0usize; 7];
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 7).unwrap();
        for p in 1..7 {
            assert_eq!(cm.col_sum(p), 0);
        }
        assert_eq!(cm.col_sum(0), 7);
    }

    #[test]
    fn percent_rows_sum_to_100() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let labels: Vec<usize> = (0..700).map(|i| i % 7).collect();
        let preds: Vec<usize> = labels.iter().map(|&l| if rng.gen_bool(0.8) { l } else { rng.gen_range(0..7) }).collect();
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 7).unwrap();
        for row in cm.percent_rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn prediction_label_length_mismatch() {
        assert!(ConfusionMatrix::from_predictions(&[0, 1], &[0], 7).is_err());
    }

    #[test]
    fn single_error_in_100() {
        let mut preds: Vec<usize> = (0..100).map(|i| i % 7).collect();
        let labels = preds.clone();
        preds[0] = (labels[0] + 1) % 7;
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 7).unwrap();
        assert!((accuracy(&cm).unwrap() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn uniform_random_predictions_land_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let labels: Vec<usize> = (0..8400).map(|i| i % 7).collect();
        let preds: Vec<usize> = (0..8400).map(|_| rng.gen_range(0..7)).collect();
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 7).unwrap();
        assert!((accuracy(&cm).unwrap() - 1.0 / 7.0).abs() < 0.03);
    }

    #[test]
    fn f1_and_accuracy_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<usize> = (0..350).map(|i| i % 7).collect();
        let preds: Vec<usize> =
            labels.iter().map(|&l| if rng.gen_bool(0.7) { l } else { rng.gen_range(0..7) }).collect();
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 7).unwrap();
        let perm_preds: Vec<usize> = preds.iter().map(|&p| perm[p]).collect();
        let perm_labels: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let cm2 = ConfusionMatrix::from_predictions(&perm_preds, &perm_labels, 7).unwrap();

        assert_eq!(accuracy(&cm).unwrap(), accuracy(&cm2).unwrap());
        let (f1a, macro_a) = f1_scores(&cm);
        let (f1b, macro_b) = f1_scores(&cm2);
        for c in 0..7 {
            assert_eq!(f1a[c], f1b[perm[c]]);
        }
        assert!((macro_a - macro_b).abs() < 1e-15);
    }

    #[test]
    fn silhouette_separated_and_interleaved() {
        // two tight clusters far apart
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for i in 0..5 {
            points.push(vec![i as f64 * 0.01, 0.0]);
            labels.push(0);
            points.push(vec![100.0 + i as f64 * 0.01, 0.0]);
            labels.push(1);
        }
        assert!(silhouette(&points, &labels).unwrap() > 0.9);

        // two fully interleaved clusters drawn from the same region
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let points: Vec<Vec<f64>> =
            (0..60).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let labels: Vec<usize> = (0..60).map(|i| i % 2).collect();
        assert!(silhouette(&points, &labels).unwrap().abs() < 0.05);
    }

    #[test]
    fn silhouette_matches_oracle_on_hand_instance() {
        let points = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![8.0, 8.0],
            vec![9.0, 8.0],
            vec![8.0, 9.0],
        ];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let got = silhouette(&points, &labels).unwrap();
        let want = silhouette_oracle(&points, &labels);
        assert_eq!(got, want);
    }

    #[test]
    fn cluster_indices_match_oracles_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..25 {
            let (points, labels) = random_instance(&mut rng, 4 + case % 7, 2 + case % 3);
            let s = silhouette(&points, &labels).unwrap();
            assert_eq!(s, silhouette_oracle(&points, &labels), "case {case}");
            let db = davies_bouldin(&points, &labels).unwrap();
            assert_eq!(db, db_oracle(&points, &labels), "case {case}");
        }
    }

    #[test]
    fn db_zero_dispersion_and_scale_invariance() {
        // point clusters: zero dispersion, so the index is 0
        let points = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![5.0, 5.0], vec![5.0, 5.0]];
        let labels = vec![0, 0, 1, 1];
        assert_eq!(davies_bouldin(&points, &labels).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (points, labels) = random_instance(&mut rng, 9, 3);
        let base = davies_bouldin(&points, &labels).unwrap();
        let doubled: Vec<Vec<f64>> =
            points.iter().map(|p| p.iter().map(|v| v * 2.0).collect()).collect();
        let scaled = davies_bouldin(&doubled, &labels).unwrap();
        assert!((base - scaled).abs() < 1e-12, "{base} vs {scaled}");
    }

    #[test]
    fn db_coincident_centroids_are_infinite() {
        let points = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let labels = vec![0, 0, 1, 1]; // both centroids at the origin
        assert!(davies_bouldin(&points, &labels).unwrap().is_infinite());
    }

    #[test]
    fn silhouette_monotone_in_separation() {
        let base = |sep: f64| -> f64 {
            let mut points = Vec::new();
            let mut labels = Vec::new();
            for i in 0..8 {
                let dx = (i % 4) as f64 * 0.2;
                let dy = (i / 4) as f64 * 0.2;
                points.push(vec![dx, dy]);
                labels.push(0);
                points.push(vec![sep + dx, dy]);
                labels.push(1);
            }
            silhouette(&points, &labels).unwrap()
        };
        let mut prev = base(1.0);
        for sep in [2.0, 4.0, 8.0, 16.0] {
            let s = base(sep);
            assert!(s > prev, "silhouette must grow with separation ({s} vs {prev})");
            prev = s;
        }
    }

    #[test]
    fn single_cluster_is_an_error() {
        let points = vec![vec![0.0], vec![1.0]];
        assert!(silhouette(&points, &[0, 0]).is_err());
        assert!(davies_bouldin(&points, &[1, 1]).is_err());
    }
}
