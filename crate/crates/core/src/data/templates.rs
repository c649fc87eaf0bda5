//! Gesture class definitions and their 8x8 occupancy templates.
//!
//! Templates are hand-drawn silhouettes, not measured data. Two deliberate
//! ambiguity pairs are built in so that fusion is provably informative:
//! `One`/`Peace` share the thermal template exactly (their merged warm blob
//! is indistinguishable at this resolution) and differ only in depth, while
//! `Stop`/`StopInv` share the depth template exactly and differ only in the
//! orientation of the thermal gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven static gesture classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureClass {
    Call,
    Fist,
    Okay,
    One,
    Peace,
    Stop,
    StopInv,
}

impl GestureClass {
    pub const COUNT: usize = 7;

    pub const ALL: [GestureClass; 7] = [
        GestureClass::Call,
        GestureClass::Fist,
        GestureClass::Okay,
        GestureClass::One,
        GestureClass::Peace,
        GestureClass::Stop,
        GestureClass::StopInv,
    ];

    pub fn id(&self) -> usize {
        *self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or(Error::InvalidLabel { value: id, num_classes: Self::COUNT })
    }

    pub fn name(&self) -> &'static str {
        match self {
            GestureClass::Call => "Call",
            GestureClass::Fist => "Fist",
            GestureClass::Okay => "Okay",
            GestureClass::One => "One",
            GestureClass::Peace => "Peace",
            GestureClass::Stop => "Stop",
            GestureClass::StopInv => "Stop Inv",
        }
    }

    /// Thermal occupancy in half-steps (0 = ambient, 1 = half contrast,
    /// 2 = full contrast), row-major top to bottom.
    pub fn thermal_mask(&self) -> &'static [[u8; 8]; 8] {
        match self {
            GestureClass::Call => &CALL_MASK,
            GestureClass::Fist => &FIST_MASK,
            GestureClass::Okay => &OKAY_MASK,
            // One and Peace blur into the same warm blob at 8x8.
            GestureClass::One | GestureClass::Peace => &ONE_PEACE_THERMAL,
            GestureClass::Stop | GestureClass::StopInv => &STOP_MASK,
        }
    }

    /// Depth occupancy (0 = background, nonzero = hand).
    pub fn depth_mask(&self) -> &'static [[u8; 8]; 8] {
        match self {
            GestureClass::Call => &CALL_MASK,
            GestureClass::Fist => &FIST_MASK,
            GestureClass::Okay => &OKAY_MASK,
            GestureClass::One => &ONE_DEPTH,
            GestureClass::Peace => &PEACE_DEPTH,
            // Stop and its inverted variant present the same silhouette to
            // the depth sensor.
            GestureClass::Stop | GestureClass::StopInv => &STOP_MASK,
        }
    }

    /// Sign of the vertical thermal gradient: +1 fingertips up (cooler top),
    /// -1 inverted.
    pub fn thermal_orientation(&self) -> f64 {
        match self {
            GestureClass::StopInv => -1.0,
            _ => 1.0,
        }
    }
}

impl std::fmt::Display for GestureClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// Thumb and pinky extended, middle fingers folded.
const CALL_MASK: [[u8; 8]; 8] = [
    [2, 0, 0, 0, 0, 0, 2, 0],
    [2, 0, 0, 0, 0, 0, 2, 0],
    [2, 2, 0, 0, 0, 2, 2, 0],
    [0, 2, 2, 2, 2, 2, 0, 0],
    [0, 2, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 0, 0, 0],
    [0, 0, 2, 2, 2, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
];

// Compact closed hand.
const FIST_MASK: [[u8; 8]; 8] = [
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 2, 2, 2, 2, 2, 2, 0],
    [0, 2, 2, 2, 2, 2, 2, 0],
    [0, 2, 2, 2, 2, 2, 2, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
];

// Thumb-index ring with three raised fingers.
const OKAY_MASK: [[u8; 8]; 8] = [
    [0, 0, 0, 2, 0, 2, 0, 2],
    [0, 0, 0, 2, 0, 2, 0, 2],
    [0, 0, 0, 2, 2, 2, 2, 2],
    [0, 2, 2, 0, 0, 2, 2, 0],
    [0, 2, 0, 0, 0, 2, 2, 0],
    [0, 2, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
];

// Single raised index finger over the palm.
const ONE_DEPTH: [[u8; 8]; 8] = [
    [0, 0, 0, 2, 0, 0, 0, 0],
    [0, 0, 0, 2, 0, 0, 0, 0],
    [0, 0, 0, 2, 0, 0, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 0, 2, 2, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
];

// Two splayed fingers over the same palm.
const PEACE_DEPTH: [[u8; 8]; 8] = [
    [0, 0, 2, 0, 0, 2, 0, 0],
    [0, 0, 2, 0, 0, 2, 0, 0],
    [0, 0, 2, 0, 0, 2, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 0, 2, 2, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
];

// Heat diffusion merges one or two raised fingers into one half-intensity
// blob; shared by `One` and `Peace` by construction.
const ONE_PEACE_THERMAL: [[u8; 8]; 8] = [
    [0, 0, 1, 1, 1, 1, 0, 0],
    [0, 0, 1, 1, 1, 1, 0, 0],
    [0, 0, 1, 1, 1, 1, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 1, 2, 2, 1, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
];

// Open palm, fingers spread; shared by `Stop` and `StopInv`.
const STOP_MASK: [[u8; 8]; 8] = [
    [0, 2, 2, 2, 2, 2, 2, 0],
    [0, 2, 2, 2, 2, 2, 2, 0],
    [0, 2, 2, 2, 2, 2, 2, 0],
    [0, 2, 2, 2, 2, 2, 2, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 2, 2, 2, 2, 0, 0],
    [0, 0, 0, 2, 2, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_seven_classes_with_fixed_names() {
        let names: Vec<&str> = GestureClass::ALL.iter().map(|c| c.name()).collect();
        assert_eq!(names, ["Call", "Fist", "Okay", "One", "Peace", "Stop", "Stop Inv"]);
        for (i, class) in GestureClass::ALL.iter().enumerate() {
            assert_eq!(class.id(), i);
            assert_eq!(GestureClass::from_id(i).unwrap(), *class);
        }
        assert!(GestureClass::from_id(7).is_err());
    }

    #[test]
    fn ambiguity_pairs_are_structural() {
        // thermal-identical pair: separable only in depth
        assert_eq!(GestureClass::One.thermal_mask(), GestureClass::Peace.thermal_mask());
        assert_eq!(
            GestureClass::One.thermal_orientation(),
            GestureClass::Peace.thermal_orientation()
        );
        assert_ne!(GestureClass::One.depth_mask(), GestureClass::Peace.depth_mask());

        // depth-identical pair: separable only by thermal orientation
        assert_eq!(GestureClass::Stop.depth_mask(), GestureClass::StopInv.depth_mask());
        assert_ne!(
            GestureClass::Stop.thermal_orientation(),
            GestureClass::StopInv.thermal_orientation()
        );
    }

    #[test]
    fn unambiguous_classes_differ_in_both_modalities() {
        use GestureClass::*;
        for (a, b) in [(Call, Fist), (Call, Okay), (Fist, Okay), (Fist, One), (Okay, Peace)] {
            assert_ne!(a.depth_mask(), b.depth_mask(), "{a} vs {b}");
        }
    }
}
