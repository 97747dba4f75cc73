//! Acoustic scoring for the decoder: posteriors from a model, converted to
//! scaled log pseudo-likelihoods by dividing out the pdf priors.

use alloc::format;

use crate::dataset::PriorVector;
use crate::mlp::MlpModel;
use crate::{Error, Matrix, Result};

pub const DEFAULT_LOG_EPSILON: f64 = 1e-10;
/// Row-sum tolerance accepted for posteriors that crossed a wire.
pub const POSTERIOR_ROW_TOLERANCE: f32 = 1e-3;

/// `T x K` per-frame pdf posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix(Matrix);

impl PosteriorMatrix {
    /// Checks entries are non-negative and rows sum to one within `tolerance`.
    pub fn new(m: Matrix, tolerance: f32) -> Result<Self> {
        for (t, row) in m.iter_rows().enumerate() {
            let sum: f32 = row.iter().sum();
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) || (sum - 1.0).abs() > tolerance {
                return Err(Error::Config(format!(
                    "posterior row {t} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn num_frames(&self) -> usize {
        self.0.rows()
    }

    pub fn num_pdfs(&self) -> usize {
        self.0.cols()
    }
}

/// `T x K` log pseudo-likelihoods, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LoglikeMatrix(Matrix);

impl LoglikeMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        m.check_finite()?;
        Ok(Self(m))
    }

    #[inline]
    pub fn get(&self, frame: usize, pdf: usize) -> f32 {
        self.0.row(frame)[pdf]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn num_frames(&self) -> usize {
        self.0.rows()
    }

    pub fn num_pdfs(&self) -> usize {
        self.0.cols()
    }
}

/// Something that maps spliced frames to posteriors.
pub trait AcousticModel {
    type Error: From<Error>;

    fn propagate(&self, spliced: &Matrix) -> core::result::Result<PosteriorMatrix, Self::Error>;
}

/// In-process forward propagation.
#[derive(Debug, Clone)]
pub struct LocalBackend {
    model: MlpModel,
}

impl LocalBackend {
    pub fn new(model: MlpModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }
}

impl AcousticModel for LocalBackend {
    type Error = Error;

    fn propagate(&self, spliced: &Matrix) -> Result<PosteriorMatrix> {
        local_propagate(&self.model, spliced)
    }
}

pub fn local_propagate(model: &MlpModel, spliced: &Matrix) -> Result<PosteriorMatrix> {
    Ok(PosteriorMatrix(model.forward(spliced)?))
}

/// `log(post + eps) - log(prior)` per entry.
pub fn loglikes(post: &PosteriorMatrix, priors: &PriorVector, eps: f64) -> Result<LoglikeMatrix> {
    if post.num_pdfs() != priors.num_pdfs() {
        return Err(Error::DimMismatch { expected: priors.num_pdfs(), actual: post.num_pdfs() });
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config("log epsilon must be positive".into()));
    }
    let log_priors: alloc::vec::Vec<f64> = priors.probs().iter().map(|&p| libm::log(p)).collect();
    let mut out = Matrix::zeros(post.num_frames(), post.num_pdfs());
    for t in 0..post.num_frames() {
        let src = post.0.row(t);
        for (k, dst) in out.row_mut(t).iter_mut().enumerate() {
            *dst = (libm::log(f64::from(src[k]) + eps) - log_priors[k]) as f32;
        }
    }
    LoglikeMatrix::new(out)
}
