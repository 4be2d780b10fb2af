//! Block partition of the decision space and exact Euclidean projections.
//!
//! The decision vector lives in `R^n` split into `b` contiguous blocks; the
//! feasible region is a Cartesian product of one closed convex set per block,
//! which makes the full projection block-separable. Every descriptor is
//! validated once at construction so the projection hot path never fails.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::dot;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("block structure needs at least one block")]
    EmptyBlocks,
    #[error("block {index} has size zero")]
    ZeroBlockSize { index: usize },
    #[error("block {index}: lower bound exceeds upper bound at coordinate {coordinate}")]
    BoundsOrder { index: usize, coordinate: usize },
    #[error("block {index}: bounds must describe a nonempty set")]
    EmptyBounds { index: usize },
    #[error("block {index}: radius must be positive and finite, got {radius}")]
    BadRadius { index: usize, radius: f64 },
    #[error("block {index}: halfspace normal must be nonzero and finite")]
    BadNormal { index: usize },
    #[error("block {index}: descriptor contains a non-finite entry")]
    NonFiniteDescriptor { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid block id {block} (block count {count})")]
    InvalidBlock { block: usize, count: usize },
}

/// Partition of `R^n` into contiguous blocks of the given sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self, GeometryError> {
        if sizes.is_empty() {
            return Err(GeometryError::EmptyBlocks);
        }
        if let Some(index) = sizes.iter().position(|&s| s == 0) {
            return Err(GeometryError::ZeroBlockSize { index });
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut dim = 0;
        for &s in &sizes {
            offsets.push(dim);
            dim += s;
        }
        Ok(Self { sizes, offsets, dim })
    }

    /// Total dimension n.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of blocks b.
    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn block_dim(&self, block: usize) -> usize {
        self.sizes[block]
    }

    /// Coordinate range `[offset, offset + size)` of a block.
    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        let off = self.offsets[block];
        off..off + self.sizes[block]
    }

    pub fn check_block(&self, block: usize) -> Result<(), GeometryError> {
        if block < self.sizes.len() {
            Ok(())
        } else {
            Err(GeometryError::InvalidBlock { block, count: self.sizes.len() })
        }
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch { expected: self.dim, got: x.len() })
        }
    }

    /// Places `y` into the coordinates of the given block, zeros elsewhere.
    pub fn embed(&self, block: usize, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.sizes[block]);
        let mut x = vec![0.0; self.dim];
        x[self.range(block)].copy_from_slice(y);
        x
    }

    /// Copies the block coordinates out of `x`.
    pub fn extract(&self, block: usize, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        x[self.range(block)].to_vec()
    }

    /// Borrowing variant of [`extract`](Self::extract).
    pub fn block_slice<'a>(&self, block: usize, x: &'a [f64]) -> &'a [f64] {
        &x[self.range(block)]
    }
}

/// One closed convex set per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BlockSet {
    /// All of `R^d`.
    Free { dim: usize },
    /// Coordinate bounds; infinite entries are allowed.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Euclidean ball of positive radius.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{ y >= 0, sum(y) = radius }`.
    Simplex { dim: usize, radius: f64 },
    /// `{ y : normal . y <= offset }`.
    Halfspace { normal: Vec<f64>, offset: f64 },
}

impl BlockSet {
    pub fn dim(&self) -> usize {
        match self {
            BlockSet::Free { dim } | BlockSet::Simplex { dim, .. } => *dim,
            BlockSet::Box { lower, .. } => lower.len(),
            BlockSet::Ball { center, .. } => center.len(),
            BlockSet::Halfspace { normal, .. } => normal.len(),
        }
    }

    fn validate(&self, index: usize) -> Result<(), GeometryError> {
        match self {
            BlockSet::Free { dim } => {
                if *dim == 0 {
                    return Err(GeometryError::ZeroBlockSize { index });
                }
            }
            BlockSet::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(GeometryError::DimensionMismatch {
                        expected: lower.len().max(1),
                        got: upper.len(),
                    });
                }
                for (c, (lo, hi)) in lower.iter().zip(upper).enumerate() {
                    if lo.is_nan() || hi.is_nan() {
                        return Err(GeometryError::NonFiniteDescriptor { index });
                    }
                    if lo > hi {
                        return Err(GeometryError::BoundsOrder { index, coordinate: c });
                    }
                    // A coordinate pinned at +inf or -inf has no nearest point.
                    if *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                        return Err(GeometryError::EmptyBounds { index });
                    }
                }
            }
            BlockSet::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(GeometryError::ZeroBlockSize { index });
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(GeometryError::NonFiniteDescriptor { index });
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeometryError::BadRadius { index, radius: *radius });
                }
            }
            BlockSet::Simplex { dim, radius } => {
                if *dim == 0 {
                    return Err(GeometryError::ZeroBlockSize { index });
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeometryError::BadRadius { index, radius: *radius });
                }
            }
            BlockSet::Halfspace { normal, offset } => {
                if normal.is_empty() {
                    return Err(GeometryError::ZeroBlockSize { index });
                }
                if normal.iter().any(|c| !c.is_finite()) || !offset.is_finite() {
                    return Err(GeometryError::NonFiniteDescriptor { index });
                }
                if normal.iter().all(|&c| c == 0.0) {
                    return Err(GeometryError::BadNormal { index });
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection, in place. `y.len()` must equal `self.dim()`.
    pub fn project_in_place(&self, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim());
        match self {
            BlockSet::Free { .. } => {}
            BlockSet::Box { lower, upper } => {
                for ((v, lo), hi) in y.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(*lo, *hi);
                }
            }
            BlockSet::Ball { center, radius } => {
                let dist = y
                    .iter()
                    .zip(center)
                    .map(|(v, c)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt();
                if dist > *radius {
                    let scale = radius / dist;
                    for (v, c) in y.iter_mut().zip(center) {
                        *v = c + (*v - c) * scale;
                    }
                }
            }
            BlockSet::Simplex { radius, .. } => project_simplex(y, *radius),
            BlockSet::Halfspace { normal, offset } => {
                let slack = dot(normal, y) - offset;
                if slack > 0.0 {
                    let scale = slack / normal.iter().map(|a| a * a).sum::<f64>();
                    for (v, a) in y.iter_mut().zip(normal) {
                        *v -= scale * a;
                    }
                }
            }
        }
    }

    /// Membership test with an absolute tolerance.
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        debug_assert_eq!(y.len(), self.dim());
        match self {
            BlockSet::Free { .. } => true,
            BlockSet::Box { lower, upper } => y
                .iter()
                .zip(lower)
                .zip(upper)
                .all(|((v, lo), hi)| *v >= lo - tol && *v <= hi + tol),
            BlockSet::Ball { center, radius } => {
                let dist = y
                    .iter()
                    .zip(center)
                    .map(|(v, c)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt();
                dist <= radius + tol
            }
            BlockSet::Simplex { radius, .. } => {
                y.iter().all(|&v| v >= -tol)
                    && (y.iter().sum::<f64>() - radius).abs() <= tol * radius.max(1.0)
            }
            BlockSet::Halfspace { normal, offset } => {
                dot(normal, y) - offset <= tol * (1.0 + offset.abs())
            }
        }
    }

    /// Coordinate bounds enclosing the set (used for sampling and for
    /// calibrating noise envelopes); free directions report infinities.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            BlockSet::Free { dim } => {
                (vec![f64::NEG_INFINITY; *dim], vec![f64::INFINITY; *dim])
            }
            BlockSet::Box { lower, upper } => (lower.clone(), upper.clone()),
            BlockSet::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            BlockSet::Simplex { dim, radius } => (vec![0.0; *dim], vec![*radius; *dim]),
            BlockSet::Halfspace { normal, .. } => {
                let d = normal.len();
                (vec![f64::NEG_INFINITY; d], vec![f64::INFINITY; d])
            }
        }
    }
}

/// Projection onto `{ y >= 0, sum(y) = radius }` by sort and threshold.
fn project_simplex(y: &mut [f64], radius: f64) {
    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - radius) / (i + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        }
    }
    for v in y.iter_mut() {
        *v = (*v - threshold).max(0.0);
    }
}

/// Cartesian product of per-block convex sets, with the derived
/// [`BlockStructure`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    blocks: Vec<BlockSet>,
    structure: BlockStructure,
}

impl FeasibleSet {
    pub fn new(blocks: Vec<BlockSet>) -> Result<Self, GeometryError> {
        if blocks.is_empty() {
            return Err(GeometryError::EmptyBlocks);
        }
        for (i, b) in blocks.iter().enumerate() {
            b.validate(i)?;
        }
        let structure = BlockStructure::new(blocks.iter().map(BlockSet::dim).collect())?;
        Ok(Self { blocks, structure })
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn block(&self, block: usize) -> &BlockSet {
        &self.blocks[block]
    }

    pub fn blocks(&self) -> &[BlockSet] {
        &self.blocks
    }

    /// Projects the coordinates of one block, in place.
    pub fn project_block_in_place(&self, block: usize, y: &mut [f64]) {
        self.blocks[block].project_in_place(y);
    }

    pub fn project_block(&self, block: usize, y: &[f64]) -> Vec<f64> {
        let mut out = y.to_vec();
        self.project_block_in_place(block, &mut out);
        out
    }

    /// Projects onto the full product set, block by block.
    pub fn project_in_place(&self, x: &mut [f64]) -> Result<(), GeometryError> {
        self.structure.check_dim(x)?;
        for (i, set) in self.blocks.iter().enumerate() {
            set.project_in_place(&mut x[self.structure.range(i)]);
        }
        Ok(())
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.structure.dim()
            && self
                .blocks
                .iter()
                .enumerate()
                .all(|(i, set)| set.contains(&x[self.structure.range(i)], tol))
    }

    /// Product of the per-block bounding boxes.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lower = Vec::with_capacity(self.structure.dim());
        let mut upper = Vec::with_capacity(self.structure.dim());
        for b in &self.blocks {
            let (lo, hi) = b.bounding_box();
            lower.extend(lo);
            upper.extend(hi);
        }
        (lower, upper)
    }

    /// Convenience: a set made of `Free` blocks matching `sizes`.
    pub fn all_free(sizes: &[usize]) -> Result<Self, GeometryError> {
        Self::new(sizes.iter().map(|&dim| BlockSet::Free { dim }).collect())
    }
}
