//! Horizontal-flip augmentation for hand laterality.

use rand::Rng;

use crate::data::{FramePair, GRID};

/// Mirrors both channels along the width axis; the label is unchanged.
pub fn hflip(frame: &FramePair) -> FramePair {
    let mut out = frame.clone();
    for y in 0..GRID {
        for x in 0..GRID {
            out.thermal[y * GRID + x] = frame.thermal[y * GRID + (GRID - 1 - x)];
            out.depth[y * GRID + x] = frame.depth[y * GRID + (GRID - 1 - x)];
        }
    }
    out
}

/// Flips with the given probability. Both channels flip together or not at
/// all; they are never flipped independently.
pub fn augment_hflip(frame: &FramePair, flip_probability: f64, rng: &mut impl Rng) -> FramePair {
    if flip_probability > 0.0 && rng.gen_bool(flip_probability) {
        hflip(frame)
    } else {
        frame.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CELLS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame() -> FramePair {
        let mut thermal = [0f32; CELLS];
        let mut depth = [0f32; CELLS];
        for i in 0..CELLS {
            thermal[i] = i as f32;
            depth[i] = 1000.0 - i as f32;
        }
        FramePair { thermal, depth, label: 3 }
    }

    #[test]
    fn flip_is_an_involution() {
        let f = frame();
        assert_eq!(hflip(&hflip(&f)), f);
        assert_ne!(hflip(&f), f);
        assert_eq!(hflip(&f).label, f.label);
    }

    #[test]
    fn symmetric_frame_is_a_fixed_point() {
        let mut f = frame();
        for y in 0..GRID {
            for x in 0..GRID {
                let v = (y * GRID + x.min(GRID - 1 - x)) as f32;
                f.thermal[y * GRID + x] = v;
                f.depth[y * GRID + x] = v * 2.0;
            }
        }
        assert_eq!(hflip(&f), f);
    }

    #[test]
    fn channels_flip_together() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = frame();
        let flipped = hflip(&f);
        for _ in 0..50 {
            let out = augment_hflip(&f, 0.5, &mut rng);
            // either both channels flipped or neither
            assert!(out == f || out == flipped);
        }
        // probability endpoints
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment_hflip(&f, 0.0, &mut rng), f);
        assert_eq!(augment_hflip(&f, 1.0, &mut rng), flipped);
    }
}
