//! Synthetic paired thermal/depth gesture frames, normalization statistics
//! and the on-disk dataset format.

mod format;
mod templates;

pub use format::{load_dataset, save_dataset};
pub use templates::GestureClass;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FusionStrategy;
use crate::tensor::Tensor;

/// Sensor grid side length.
pub const GRID: usize = 8;
/// Cells per frame.
pub const CELLS: usize = GRID * GRID;
/// Thermopile measurement range in degrees Celsius.
pub const THERMAL_RANGE_C: (f32, f32) = (0.0, 80.0);

/// One synchronized sample: an 8x8 temperature matrix (degrees C), an 8x8
/// distance map (mm) and the gesture label.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub thermal: [f32; CELLS],
    pub depth: [f32; CELLS],
    pub label: u8,
}

impl FramePair {
    pub fn class(&self) -> GestureClass {
        GestureClass::from_id(self.label as usize).expect("label validated on construction")
    }
}

/// An in-memory collection of frame pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<FramePair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label as usize).collect()
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> [usize; GestureClass::COUNT] {
        let mut counts = [0; GestureClass::COUNT];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }
}

/// Spatial and amplitude jitter applied per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    /// Maximum translation in cells along each axis (drawn uniformly from
    /// `-max_shift_cells..=max_shift_cells`).
    pub max_shift_cells: i8,
    /// Standard deviation of the multiplicative thermal-contrast jitter.
    pub scale_std: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { max_shift_cells: 1, scale_std: 0.15 }
    }
}

/// Parameters of the synthetic renderer.
///
/// Noise defaults follow datasheet-style assumptions: the thermal standard
/// deviation reads the sensor's +/-2.5 C accuracy as a 3-sigma bound
/// (2.5 / 3 ~= 0.83 C); the depth noise default is 20 mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub samples_per_class: usize,
    /// Uniform range the hand distance is drawn from, in mm.
    pub hand_distance_mm: (f64, f64),
    pub hand_temp_mean_c: f64,
    pub hand_temp_std_c: f64,
    pub ambient_temp_c: f64,
    pub thermal_noise_std_c: f64,
    pub depth_noise_std_mm: f64,
    pub background_depth_mm: f64,
    /// Peak magnitude of the orientation-dependent vertical temperature
    /// gradient over the hand (fingertips run cooler than the palm).
    pub thermal_gradient_c: f64,
    pub jitter: JitterConfig,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 1200,
            hand_distance_mm: (120.0, 450.0),
            hand_temp_mean_c: 33.5,
            hand_temp_std_c: 0.8,
            ambient_temp_c: 24.0,
            thermal_noise_std_c: 2.5 / 3.0,
            depth_noise_std_mm: 20.0,
            background_depth_mm: 1500.0,
            thermal_gradient_c: 2.5,
            jitter: JitterConfig::default(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("samples_per_class must be positive".into()));
        }
        let (lo, hi) = self.hand_distance_mm;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidConfig(format!("bad hand distance range ({lo}, {hi})")));
        }
        if self.background_depth_mm <= 0.0 {
            return Err(Error::InvalidConfig("background depth must be positive".into()));
        }
        for (name, v) in [
            ("hand_temp_std_c", self.hand_temp_std_c),
            ("thermal_noise_std_c", self.thermal_noise_std_c),
            ("depth_noise_std_mm", self.depth_noise_std_mm),
            ("jitter.scale_std", self.jitter.scale_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Renders the full balanced dataset. Samples are generated on independent
/// RNG substreams keyed by their global index, so parallel rendering is
/// bitwise identical to sequential rendering.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let total = config.samples_per_class * GestureClass::COUNT;
    let samples: Vec<FramePair> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let class = GestureClass::ALL[idx / config.samples_per_class];
            render_sample(config, class, idx as u64)
        })
        .collect();
    Ok(Dataset { samples })
}

fn render_sample(config: &GeneratorConfig, class: GestureClass, index: u64) -> FramePair {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index.wrapping_add(1));

    let (lo, hi) = config.hand_distance_mm;
    let distance = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let hand_temp = sample_normal(&mut rng, config.hand_temp_mean_c, config.hand_temp_std_c);
    let contrast_scale = if config.jitter.scale_std > 0.0 {
        sample_normal(&mut rng, 1.0, config.jitter.scale_std).clamp(0.5, 1.5)
    } else {
        1.0
    };
    let max_shift = config.jitter.max_shift_cells as i32;
    let (dy, dx) = if max_shift > 0 {
        (rng.gen_range(-max_shift..=max_shift), rng.gen_range(-max_shift..=max_shift))
    } else {
        (0, 0)
    };

    let thermal_mask = class.thermal_mask();
    let depth_mask = class.depth_mask();
    let orientation = class.thermal_orientation();

    let mut thermal = [0f32; CELLS];
    let mut depth = [0f32; CELLS];
    for y in 0..GRID {
        for x in 0..GRID {
            // cells shifted in from outside the template read as empty
            let sy = y as i32 - dy;
            let sx = x as i32 - dx;
            let (t_occ, d_occ) = if (0..GRID as i32).contains(&sy) && (0..GRID as i32).contains(&sx)
            {
                (
                    thermal_mask[sy as usize][sx as usize] as f64 / 2.0,
                    depth_mask[sy as usize][sx as usize] as f64 / 2.0,
                )
            } else {
                (0.0, 0.0)
            };

            let mut t = config.ambient_temp_c
                + t_occ * contrast_scale * (hand_temp - config.ambient_temp_c);
            if t_occ > 0.0 {
                // fingertips (top rows in the canonical orientation) run cooler
                t -= t_occ
                    * orientation
                    * config.thermal_gradient_c
                    * (3.5 - sy as f64)
                    / 3.5;
            }
            t += sample_normal(&mut rng, 0.0, config.thermal_noise_std_c);

            let mut d = if d_occ > 0.0 { distance } else { config.background_depth_mm };
            d += sample_normal(&mut rng, 0.0, config.depth_noise_std_mm);

            let i = y * GRID + x;
            thermal[i] = (t as f32).clamp(THERMAL_RANGE_C.0, THERMAL_RANGE_C.1);
            depth[i] = (d as f32).max(1.0);
        }
    }
    FramePair { thermal, depth, label: class.id() as u8 }
}

fn sample_normal(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("validated std").sample(rng)
}

/// Noiseless canonical rendering of a class template (mid-range distance,
/// mean temperature, no jitter). Used to reason about template structure.
pub fn canonical_frames(config: &GeneratorConfig, class: GestureClass) -> FramePair {
    let mut quiet = config.clone();
    quiet.hand_temp_std_c = 0.0;
    quiet.thermal_noise_std_c = 0.0;
    quiet.depth_noise_std_mm = 0.0;
    quiet.jitter = JitterConfig { max_shift_cells: 0, scale_std: 0.0 };
    quiet.hand_distance_mm = {
        let (lo, hi) = config.hand_distance_mm;
        let mid = 0.5 * (lo + hi);
        (mid, mid)
    };
    render_sample(&quiet, class, 0)
}

/// Per-channel normalization statistics (z-score parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Stats that leave inputs unchanged.
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

fn strategy_channels(strategy: FusionStrategy) -> Vec<fn(&FramePair, usize) -> f64> {
    fn thermal(f: &FramePair, i: usize) -> f64 {
        f.thermal[i] as f64
    }
    fn depth(f: &FramePair, i: usize) -> f64 {
        f.depth[i] as f64
    }
    match strategy {
        FusionStrategy::IrOnly => vec![thermal],
        FusionStrategy::TofOnly => vec![depth],
        _ => vec![thermal, depth],
    }
}

/// Mean and standard deviation per model input channel over a training
/// subset. The standard deviation is floored at 1e-6 so constant channels
/// normalize to zero.
pub fn compute_normalization(samples: &[&FramePair], strategy: FusionStrategy) -> Result<ChannelStats> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("normalization subset"));
    }
    let channels = strategy_channels(strategy);
    let n = (samples.len() * CELLS) as f64;
    let mut mean = Vec::with_capacity(channels.len());
    let mut std = Vec::with_capacity(channels.len());
    for read in &channels {
        let mut sum = 0.0;
        for s in samples {
            for i in 0..CELLS {
                sum += read(s, i);
            }
        }
        let mu = sum / n;
        let mut ss = 0.0;
        for s in samples {
            for i in 0..CELLS {
                let d = read(s, i) - mu;
                ss += d * d;
            }
        }
        mean.push(mu);
        std.push((ss / n).sqrt().max(1e-6));
    }
    Ok(ChannelStats { mean, std })
}

/// Stacks the strategy's channels into a raw `[8, 8, c]` tensor
/// (channel 0 thermal, channel 1 depth for fused inputs).
pub fn fuse_frame(frame: &FramePair, strategy: FusionStrategy) -> Tensor {
    let channels = strategy_channels(strategy);
    let c = channels.len();
    Tensor::from_fn(&[GRID, GRID, c], |i| channels[i % c](frame, i / c))
}

/// Z-scores a frame into the model input tensor.
pub fn apply_normalization(
    frame: &FramePair,
    strategy: FusionStrategy,
    stats: &ChannelStats,
) -> Result<Tensor> {
    let mut t = fuse_frame(frame, strategy);
    let c = stats.channels();
    if t.shape()[2] != c {
        return Err(Error::shape_of(&[GRID, GRID, c], t.shape()));
    }
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        let ch = i % c;
        *v = (*v - stats.mean[ch]) / stats.std[ch];
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GeneratorConfig {
        GeneratorConfig { samples_per_class: 10, seed: 7, ..GeneratorConfig::default() }
    }

    #[test]
    fn default_config_yields_balanced_classes() {
        let cfg = GeneratorConfig { samples_per_class: 12, ..GeneratorConfig::default() };
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 84);
        assert_eq!(ds.class_counts(), [12; 7]);
    }

    #[test]
    fn full_scale_count_is_8400() {
        // checked arithmetically to keep the test fast
        let cfg = GeneratorConfig::default();
        assert_eq!(cfg.samples_per_class * GestureClass::COUNT, 8400);
    }

    #[test]
    fn noiseless_config_renders_identical_samples_per_class() {
        let cfg = GeneratorConfig {
            samples_per_class: 5,
            hand_temp_std_c: 0.0,
            thermal_noise_std_c: 0.0,
            depth_noise_std_mm: 0.0,
            hand_distance_mm: (250.0, 250.0),
            jitter: JitterConfig { max_shift_cells: 0, scale_std: 0.0 },
            ..GeneratorConfig::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        for class in 0..7 {
            let base = &ds.samples[class * 5];
            for j in 1..5 {
                assert_eq!(&ds.samples[class * 5 + j], base);
            }
        }
    }

    #[test]
    fn sensor_ranges_are_clamped() {
        let cfg = GeneratorConfig {
            samples_per_class: 20,
            thermal_noise_std_c: 40.0, // force excursions past both limits
            depth_noise_std_mm: 500.0,
            seed: 3,
            ..GeneratorConfig::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        for s in &ds.samples {
            for &t in &s.thermal {
                assert!((0.0..=80.0).contains(&t));
            }
            for &d in &s.depth {
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn same_seed_is_bitwise_deterministic() {
        let cfg = small_config();
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&GeneratorConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn canonical_templates_encode_the_ambiguity_pairs() {
        let cfg = GeneratorConfig::default();
        let one = canonical_frames(&cfg, GestureClass::One);
        let peace = canonical_frames(&cfg, GestureClass::Peace);
        assert_eq!(one.thermal, peace.thermal, "thermal-identical pair");
        assert_ne!(one.depth, peace.depth);

        let stop = canonical_frames(&cfg, GestureClass::Stop);
        let inv = canonical_frames(&cfg, GestureClass::StopInv);
        assert_eq!(stop.depth, inv.depth, "depth-identical pair");
        assert_ne!(stop.thermal, inv.thermal);
    }

    #[test]
    fn normalization_statistics_and_floor() {
        let cfg = small_config();
        let ds = generate_dataset(&cfg).unwrap();
        let refs: Vec<&FramePair> = ds.samples.iter().collect();
        let stats = compute_normalization(&refs, FusionStrategy::Early).unwrap();
        assert_eq!(stats.channels(), 2);

        // normalized training subset is zero-mean unit-variance per channel
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        let n = (ds.len() * CELLS) as f64;
        for s in &ds.samples {
            let t = apply_normalization(s, FusionStrategy::Early, &stats).unwrap();
            for (i, v) in t.data().iter().enumerate() {
                sums[i % 2] += v;
                sq[i % 2] += v * v;
            }
        }
        for ch in 0..2 {
            let mean = sums[ch] / n;
            let var = sq[ch] / n - mean * mean;
            assert!(mean.abs() < 1e-9, "channel {ch} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "channel {ch} std {}", var.sqrt());
        }

        // constant channel normalizes to zeros through the std floor
        let flat = FramePair { thermal: [25.0; CELLS], depth: [300.0; CELLS], label: 0 };
        let stats = compute_normalization(&[&flat], FusionStrategy::IrOnly).unwrap();
        assert_eq!(stats.std[0], 1e-6);
        let t = apply_normalization(&flat, FusionStrategy::IrOnly, &stats).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_subset_is_an_error() {
        assert!(compute_normalization(&[], FusionStrategy::Early).is_err());
    }

    #[test]
    fn fused_tensor_channel_order() {
        let frame = FramePair { thermal: [30.0; CELLS], depth: [200.0; CELLS], label: 2 };
        let t = fuse_frame(&frame, FusionStrategy::Vanilla);
        assert_eq!(t.shape(), &[8, 8, 2]);
        assert_eq!(t.at3(0, 0, 0), 30.0, "channel 0 is thermal");
        assert_eq!(t.at3(0, 0, 1), 200.0, "channel 1 is depth");
        let ir = fuse_frame(&frame, FusionStrategy::IrOnly);
        assert_eq!(ir.shape(), &[8, 8, 1]);
        assert_eq!(ir.at3(3, 3, 0), 30.0);
        let tof = fuse_frame(&frame, FusionStrategy::TofOnly);
        assert_eq!(tof.at3(3, 3, 0), 200.0);
    }
}
