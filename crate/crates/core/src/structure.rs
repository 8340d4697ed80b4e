//! Scene-structure covariates computed from ground-truth boxes.
//!
//! Two overlap measures are provided: the mean IoU over unordered pairs and
//! the mean over boxes of each box's largest IoU with any other box. Both
//! are 0 for fewer than two boxes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eval::iou;
use crate::model::{Annotation, NormalizedBox};
use crate::scalar::Scalar;

pub fn fish_count<T>(annotations: &[Annotation<T>]) -> usize {
    annotations.len()
}

pub fn pairwise_overlap_mean<T: Scalar>(boxes: &[NormalizedBox<T>]) -> T {
    let n = boxes.len();
    if n < 2 {
        return T::zero();
    }
    let mut sum = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            sum = sum + iou(&boxes[i], &boxes[j]);
        }
    }
    sum / T::from_count(n * (n - 1) / 2)
}

pub fn max_overlap_mean<T: Scalar>(boxes: &[NormalizedBox<T>]) -> T {
    let n = boxes.len();
    if n < 2 {
        return T::zero();
    }
    let mut best = vec![T::zero(); n];
    for i in 0..n {
        for j in i + 1..n {
            let v = iou(&boxes[i], &boxes[j]);
            best[i] = best[i].max(v);
            best[j] = best[j].max(v);
        }
    }
    best.into_iter().sum::<T>() / T::from_count(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DensityBin {
    #[serde(rename = "0")]
    Empty,
    #[serde(rename = "1")]
    Single,
    #[serde(rename = "2-3")]
    Few,
    #[serde(rename = "4-7")]
    Several,
    #[serde(rename = "8+")]
    Crowded,
}

impl DensityBin {
    pub const ALL: [DensityBin; 5] = [
        DensityBin::Empty,
        DensityBin::Single,
        DensityBin::Few,
        DensityBin::Several,
        DensityBin::Crowded,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DensityBin::Empty => "0",
            DensityBin::Single => "1",
            DensityBin::Few => "2-3",
            DensityBin::Several => "4-7",
            DensityBin::Crowded => "8+",
        }
    }
}

impl fmt::Display for DensityBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn density_bin(count: usize) -> DensityBin {
    match count {
        0 => DensityBin::Empty,
        1 => DensityBin::Single,
        2..=3 => DensityBin::Few,
        4..=7 => DensityBin::Several,
        _ => DensityBin::Crowded,
    }
}
