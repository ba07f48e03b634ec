//! Patch extraction, exhaustive ℓ₂ block matching inside a local window,
//! and scatter/gather between images and similarity matrices.
//!
//! A similarity matrix stacks `k` flattened `s×s` patches as columns;
//! column 0 is always the reference patch itself. Matching searches every
//! candidate whose patch fits in the image and whose center lies in the
//! `window×window` box centered on the reference patch center — for
//! top-left coordinates that is simply a `±(window-1)/2` box, whatever
//! the patch parity.

use ndarray::{Array2, ArrayView1, ArrayView2};
use std::fmt;

/// Matching geometry: patch side `s` (patches are `s×s`), target group
/// size `k`, odd search window `κ`, and reference-grid stride `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    pub patch_side: usize,
    pub group_size: usize,
    pub window: usize,
    pub stride: usize,
}

impl PatchGeometry {
    fn validate(&self) -> Result<(), PatchError> {
        if self.patch_side == 0 {
            return Err(PatchError::InvalidGeometry("patch side must be positive".into()));
        }
        if self.group_size == 0 {
            return Err(PatchError::InvalidGeometry("group size must be positive".into()));
        }
        if self.stride == 0 || self.stride > self.patch_side {
            return Err(PatchError::InvalidGeometry(format!(
                "stride must be in 1..={} (larger strides leave pixels uncovered), got {}",
                self.patch_side, self.stride
            )));
        }
        if self.window % 2 == 0 || self.window < self.patch_side {
            return Err(PatchError::InvalidGeometry(format!(
                "window must be odd and at least the patch side, got {} for patch {}",
                self.window, self.patch_side
            )));
        }
        Ok(())
    }
}

/// A matched group: the `n×k` similarity matrix plus the top-left image
/// coordinates of each member column. `coords[0]` is the reference.
#[derive(Debug, Clone)]
pub struct PatchGroup {
    pub matrix: Array2<f64>,
    pub coords: Vec<(usize, usize)>,
}

/// Errors from geometry validation and patch placement.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchError {
    ImageTooSmall {
        image: (usize, usize),
        patch_side: usize,
    },
    InvalidGeometry(String),
}

impl fmt::Display for PatchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchError::ImageTooSmall { image, patch_side } => write!(
                f,
                "image {}x{} is smaller than the {patch_side}x{patch_side} patch",
                image.0, image.1
            ),
            PatchError::InvalidGeometry(msg) => write!(f, "invalid patch geometry: {msg}"),
        }
    }
}

impl std::error::Error for PatchError {}

// ============================================================================
// Reference grid
// ============================================================================

/// Top-left corners of the reference patches: a `stride`-spaced grid over
/// the valid offsets, with the last valid row and column always included
/// so border pixels are covered by at least one reference group.
pub fn reference_positions(
    height: usize,
    width: usize,
    geometry: &PatchGeometry,
) -> Result<Vec<(usize, usize)>, PatchError> {
    geometry.validate()?;
    let s = geometry.patch_side;
    if height < s || width < s {
        return Err(PatchError::ImageTooSmall {
            image: (height, width),
            patch_side: s,
        });
    }
    let axis = |len: usize| -> Vec<usize> {
        let last = len - s;
        let mut offsets: Vec<usize> = (0..=last).step_by(geometry.stride).collect();
        if *offsets.last().expect("at least offset 0") != last {
            offsets.push(last);
        }
        offsets
    };
    let rows = axis(height);
    let cols = axis(width);
    let mut positions = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            positions.push((r, c));
        }
    }
    Ok(positions)
}

// ============================================================================
// Block matching
// ============================================================================

/// Finds the `group_size` patches closest to the reference in squared ℓ₂
/// distance, searching the clipped window around it. The reference is
/// always column 0; remaining slots are filled best-first, ties broken by
/// row-major candidate order. The group shrinks when the window holds
/// fewer candidates than requested.
pub fn block_match(
    image: ArrayView2<f64>,
    reference: (usize, usize),
    geometry: &PatchGeometry,
) -> PatchGroup {
    let s = geometry.patch_side;
    let (height, width) = image.dim();
    debug_assert!(reference.0 + s <= height && reference.1 + s <= width);
    let half = (geometry.window - 1) / 2;
    let row_lo = reference.0.saturating_sub(half);
    let row_hi = (reference.0 + half).min(height - s);
    let col_lo = reference.1.saturating_sub(half);
    let col_hi = (reference.1 + half).min(width - s);

    let ref_patch = image.slice(ndarray::s![
        reference.0..reference.0 + s,
        reference.1..reference.1 + s
    ]);
    // (distance, row-major rank) pairs; the row-major rank is the loop
    // order, so it doubles as the tie-breaker.
    let mut candidates: Vec<(f64, usize, (usize, usize))> = Vec::new();
    let mut rank = 0usize;
    for r in row_lo..=row_hi {
        for c in col_lo..=col_hi {
            if (r, c) == reference {
                rank += 1;
                continue;
            }
            let patch = image.slice(ndarray::s![r..r + s, c..c + s]);
            let mut dist = 0.0;
            for (a, b) in patch.iter().zip(ref_patch.iter()) {
                let diff = a - b;
                dist += diff * diff;
            }
            candidates.push((dist, rank, (r, c)));
            rank += 1;
        }
    }
    candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = geometry.group_size.saturating_sub(1).min(candidates.len());
    let mut coords = Vec::with_capacity(keep + 1);
    coords.push(reference);
    coords.extend(candidates[..keep].iter().map(|&(_, _, pos)| pos));
    let matrix = extract_group(image, &coords, s);
    PatchGroup { matrix, coords }
}

/// Gathers the patches at `coords` from `image` into an `n×k` matrix
/// (columns are row-major flattened patches).
pub fn extract_group(
    image: ArrayView2<f64>,
    coords: &[(usize, usize)],
    patch_side: usize,
) -> Array2<f64> {
    let n = patch_side * patch_side;
    let mut matrix = Array2::zeros((n, coords.len()));
    for (j, &(r, c)) in coords.iter().enumerate() {
        let patch = image.slice(ndarray::s![r..r + patch_side, c..c + patch_side]);
        for (idx, &v) in patch.iter().enumerate() {
            matrix[(idx, j)] = v;
        }
    }
    matrix
}

// ============================================================================
// Aggregation
// ============================================================================

/// Per-pixel weighted-sum accumulator: a numerator and denominator grid,
/// normalized once all groups have been scattered.
#[derive(Debug, Clone)]
pub struct PixelAccumulator {
    numerators: Array2<f64>,
    denominators: Array2<f64>,
}

impl PixelAccumulator {
    pub fn zeros(height: usize, width: usize) -> Self {
        PixelAccumulator {
            numerators: Array2::zeros((height, width)),
            denominators: Array2::zeros((height, width)),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, weighted_value: f64, weight: f64) {
        self.numerators[(row, col)] += weighted_value;
        self.denominators[(row, col)] += weight;
    }

    pub fn denominator(&self, row: usize, col: usize) -> f64 {
        self.denominators[(row, col)]
    }

    /// Pixel-wise normalized estimate. Every pixel must have been covered
    /// by at least one scattered patch.
    pub fn normalized(&self) -> Array2<f64> {
        let mut out = self.numerators.clone();
        for (o, d) in out.iter_mut().zip(self.denominators.iter()) {
            assert!(*d > 0.0, "pixel left uncovered by aggregation");
            *o /= d;
        }
        out
    }
}

/// Scatters one denoised group back into the accumulator: every pixel of
/// column `j`'s patch receives `(weights[j] · value, weights[j])`.
pub fn scatter_group(
    group: &PatchGroup,
    denoised: ArrayView2<f64>,
    weights: ArrayView1<f64>,
    patch_side: usize,
    accum: &mut PixelAccumulator,
) {
    debug_assert_eq!(denoised.ncols(), group.coords.len());
    debug_assert_eq!(weights.len(), group.coords.len());
    for (j, &(r, c)) in group.coords.iter().enumerate() {
        let w = weights[j];
        debug_assert!(w.is_finite() && w > 0.0);
        for pr in 0..patch_side {
            for pc in 0..patch_side {
                let value = denoised[(pr * patch_side + pc, j)];
                accum.add(r + pr, c + pc, w * value, w);
            }
        }
    }
}
