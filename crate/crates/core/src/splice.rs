//! Context splicing of feature frames.

use crate::Matrix;

/// Left/right context, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplicingConfig {
    pub left: usize,
    pub right: usize,
}

impl SplicingConfig {
    pub fn new(left: usize, right: usize) -> Self {
        Self { left, right }
    }

    /// Symmetric context for an odd total window (15 → 7/7).
    pub fn symmetric_window(window: usize) -> Option<Self> {
        (window % 2 == 1).then(|| Self::new(window / 2, window / 2))
    }

    pub fn window(&self) -> usize {
        self.left + self.right + 1
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.window() * input_dim
    }
}

/// Writes the spliced row for frame `t` into `out`, replicating the first
/// and last frame at the edges.
pub fn splice_row(feats: &Matrix, cfg: SplicingConfig, t: usize, out: &mut [f32]) {
    let dim = feats.cols();
    let last = feats.rows() as isize - 1;
    debug_assert_eq!(out.len(), cfg.output_dim(dim));
    for (slot, offset) in (-(cfg.left as isize)..=cfg.right as isize).enumerate() {
        let src = (t as isize + offset).clamp(0, last) as usize;
        out[slot * dim..(slot + 1) * dim].copy_from_slice(feats.row(src));
    }
}

/// Splices every frame: row `t` becomes frames `t-L ..= t+R` concatenated.
pub fn splice(feats: &Matrix, cfg: SplicingConfig) -> Matrix {
    let mut out = Matrix::zeros(feats.rows(), cfg.output_dim(feats.cols()));
    for t in 0..feats.rows() {
        splice_row(feats, cfg, t, out.row_mut(t));
    }
    out
}
