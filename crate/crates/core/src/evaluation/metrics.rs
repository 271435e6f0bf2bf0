use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::segmentation::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("ground truth is {gt:?} but prediction is {pred:?}")]
pub struct DimensionMismatch {
    pub gt: (usize, usize),
    pub pred: (usize, usize),
}

fn check(gt: &BinaryMask, pred: &BinaryMask) -> Result<(), DimensionMismatch> {
    if gt.dim() == pred.dim() {
        Ok(())
    } else {
        Err(DimensionMismatch {
            gt: gt.dim(),
            pred: pred.dim(),
        })
    }
}

fn intersection(a: &BinaryMask, b: &BinaryMask) -> usize {
    a.as_array().iter().zip(b.as_array()).filter(|(&x, &y)| x && y).count()
}

/// Intersection over union; two empty masks score 1.
pub fn jaccard(gt: &BinaryMask, pred: &BinaryMask) -> Result<f64, DimensionMismatch> {
    check(gt, pred)?;
    let inter = intersection(gt, pred);
    let union = gt.count() + pred.count() - inter;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FVariant {
    /// Precision and recall over mask pixels.
    Region,
    /// Precision and recall over boundary pixels, matched within a pixel tolerance.
    Boundary,
}

impl FVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            FVariant::Region => "region",
            FVariant::Boundary => "boundary",
        }
    }
}

impl fmt::Display for FVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "region" => Ok(FVariant::Region),
            "boundary" => Ok(FVariant::Boundary),
            _ => Err(format!("unknown F variant `{s}` (expected region or boundary)")),
        }
    }
}

/// `⌈0.008 · diagonal⌉` pixels.
pub fn default_tolerance(height: usize, width: usize) -> usize {
    (0.008 * (height as f64).hypot(width as f64)).ceil() as usize
}

/// 3×3 erosion; pixels outside the grid count as background.
pub fn erode(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.dim();
    BinaryMask::from_fn(h, w, |y, x| {
        y > 0
            && x > 0
            && y + 1 < h
            && x + 1 < w
            && (y - 1..=y + 1).all(|yy| (x - 1..=x + 1).all(|xx| mask.get(yy, xx)))
    })
}

/// Foreground pixels with at least one background pixel (or the image edge)
/// in their 8-neighbourhood.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let eroded = erode(mask);
    let (h, w) = mask.dim();
    BinaryMask::from_fn(h, w, |y, x| mask.get(y, x) && !eroded.get(y, x))
}

/// Pixels of `src` lying within Euclidean distance `tol` of some pixel of `dst`.
fn matched(src: &BinaryMask, dst: &BinaryMask, tol: usize) -> usize {
    if dst.is_empty() {
        return 0;
    }
    let t = tol as isize;
    let disk: Vec<(isize, isize)> = (-t..=t)
        .flat_map(|dy| (-t..=t).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= t * t)
        .collect();
    let (h, w) = (src.height() as isize, src.width() as isize);
    src.as_array()
        .indexed_iter()
        .filter(|(_, &v)| v)
        .filter(|((y, x), _)| {
            disk.iter().any(|(dy, dx)| {
                let (yy, xx) = (*y as isize + dy, *x as isize + dx);
                yy >= 0 && xx >= 0 && yy < h && xx < w && dst.get(yy as usize, xx as usize)
            })
        })
        .count()
}

fn ratio(num: usize, den: usize, both_empty: bool) -> f64 {
    match den {
        0 if both_empty => 1.0,
        0 => 0.0,
        _ => num as f64 / den as f64,
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// F-measure of `pred` against `gt`. `tolerance_px` only affects the
/// boundary variant.
pub fn f_measure(gt: &BinaryMask, pred: &BinaryMask, variant: FVariant, tolerance_px: usize) -> Result<f64, DimensionMismatch> {
    check(gt, pred)?;
    Ok(match variant {
        FVariant::Region => {
            // 2PR/(P+R) with P = I/|pred| and R = I/|gt| reduces to 2I/(|gt|+|pred|).
            let (g, p) = (gt.count(), pred.count());
            if g + p == 0 {
                1.0
            } else {
                (2 * intersection(gt, pred)) as f64 / (g + p) as f64
            }
        }
        FVariant::Boundary => {
            let (gb, pb) = (boundary(gt), boundary(pred));
            let both_empty = gb.is_empty() && pb.is_empty();
            let precision = ratio(matched(&pb, &gb, tolerance_px), pb.count(), both_empty);
            let recall = ratio(matched(&gb, &pb, tolerance_px), gb.count(), both_empty);
            harmonic(precision, recall)
        }
    })
}

/// Per-frame J, F and their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub j: f64,
    pub f: f64,
    pub jf: f64,
}

impl FrameScore {
    pub fn new(j: f64, f: f64) -> Self {
        FrameScore { j, f, jf: (j + f) / 2.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks() -> (BinaryMask, BinaryMask) {
        (BinaryMask::rect(4, 4, 0, 0, 2, 2), BinaryMask::rect(4, 4, 0, 1, 2, 3))
    }

    #[test]
    fn offset_blocks() {
        let (gt, pred) = blocks();
        assert_eq!(jaccard(&gt, &pred).unwrap(), 2.0 / 6.0);
        assert_eq!(f_measure(&gt, &pred, FVariant::Region, 0).unwrap(), 0.5);
    }

    #[test]
    fn identical_masks_score_one() {
        let m = BinaryMask::rect(10, 12, 2, 3, 7, 9);
        assert_eq!(jaccard(&m, &m).unwrap(), 1.0);
        for v in [FVariant::Region, FVariant::Boundary] {
            assert_eq!(f_measure(&m, &m, v, 0).unwrap(), 1.0);
        }
    }

    #[test]
    fn empty_conventions() {
        let e = BinaryMask::empty(5, 5);
        let m = BinaryMask::rect(5, 5, 1, 1, 3, 3);
        for v in [FVariant::Region, FVariant::Boundary] {
            assert_eq!(f_measure(&e, &e, v, 1).unwrap(), 1.0);
            assert_eq!(f_measure(&e, &m, v, 1).unwrap(), 0.0);
            assert_eq!(f_measure(&m, &e, v, 1).unwrap(), 0.0);
        }
        assert_eq!(jaccard(&e, &e).unwrap(), 1.0);
        assert_eq!(jaccard(&m, &e).unwrap(), 0.0);
    }

    #[test]
    fn boundary_of_a_block_is_its_ring() {
        let m = BinaryMask::rect(6, 6, 1, 1, 5, 5);
        let b = boundary(&m);
        assert_eq!(b.count(), 12);
        assert!(!b.get(2, 2) && b.get(1, 1) && b.get(4, 2));
        let edge = BinaryMask::rect(3, 3, 0, 0, 3, 3);
        assert_eq!(boundary(&edge).count(), 8);
    }

    #[test]
    fn tolerance_absorbs_small_shifts() {
        let gt = BinaryMask::rect(20, 20, 5, 5, 15, 15);
        let pred = BinaryMask::rect(20, 20, 6, 5, 16, 15);
        assert!(f_measure(&gt, &pred, FVariant::Boundary, 0).unwrap() < 1.0);
        assert_eq!(f_measure(&gt, &pred, FVariant::Boundary, 1).unwrap(), 1.0);
    }

    #[test]
    fn default_tolerance_values() {
        assert_eq!(default_tolerance(480, 854), 8);
        assert_eq!(default_tolerance(24, 32), 1);
        assert_eq!(default_tolerance(120, 160), 2);
    }

    #[test]
    fn dimension_mismatch() {
        let a = BinaryMask::empty(3, 4);
        let b = BinaryMask::empty(4, 3);
        assert_eq!(jaccard(&a, &b), Err(DimensionMismatch { gt: (3, 4), pred: (4, 3) }));
        assert!(f_measure(&a, &b, FVariant::Boundary, 2).is_err());
    }
}
