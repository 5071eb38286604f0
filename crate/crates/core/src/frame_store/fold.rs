//! Folding a batch-normalization layer into the convolution that precedes it.
//!
//! A convolution applied to an unwrapped `k×k×C_prev` patch `f` is the affine
//! map `W_conv·f + b_conv`; batch normalization is a second affine map on its
//! output. Their composition is a single affine map with
//! `W = W_bn·W_conv` and `b = W_bn·b_conv + b_bn`.

use nalgebra::{DMatrix, DVector};

use super::FrameError;

/// Parameters of a convolution followed by batch normalization.
#[derive(Debug, Clone)]
pub struct ConvFoldInput {
    /// `C × (C_prev·k²)`
    pub w_conv: DMatrix<f64>,
    /// length `C`
    pub b_conv: DVector<f64>,
    /// `C × C`
    pub w_bn: DMatrix<f64>,
    /// length `C`
    pub b_bn: DVector<f64>,
}

/// The single affine layer equivalent to conv + batch-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedConv {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl FoldedConv {
    /// Evaluates `weight·f + bias` on one unwrapped patch.
    pub fn apply(&self, patch: &DVector<f64>) -> DVector<f64> {
        &self.weight * patch + &self.bias
    }
}

impl ConvFoldInput {
    fn check(&self) -> Result<(), FrameError> {
        let channels = self.w_conv.nrows();
        let mismatch = |what, expected, found| {
            Err(FrameError::DimensionMismatch {
                frame: None,
                what,
                expected,
                found,
            })
        };
        if self.b_conv.len() != channels {
            return mismatch("b_conv", channels, self.b_conv.len());
        }
        if self.w_bn.nrows() != channels {
            return mismatch("w_bn rows", channels, self.w_bn.nrows());
        }
        if self.w_bn.ncols() != channels {
            return mismatch("w_bn cols", channels, self.w_bn.ncols());
        }
        if self.b_bn.len() != channels {
            return mismatch("b_bn", channels, self.b_bn.len());
        }
        let finite = self.w_conv.iter().all(|v| v.is_finite())
            && self.b_conv.iter().all(|v| v.is_finite())
            && self.w_bn.iter().all(|v| v.is_finite())
            && self.b_bn.iter().all(|v| v.is_finite());
        if !finite {
            return Err(FrameError::Malformed {
                frame: None,
                reason: "non-finite layer parameter".into(),
            });
        }
        Ok(())
    }
}

/// Collapses conv + batch-norm into one affine layer.
pub fn fold_batchnorm(input: &ConvFoldInput) -> Result<FoldedConv, FrameError> {
    input.check()?;
    let weight = &input.w_bn * &input.w_conv;
    let bias = &input.w_bn * &input.b_conv + &input.b_bn;
    Ok(FoldedConv { weight, bias })
}

/// Builds the `W_bn`, `b_bn` pair for an inference-mode batch-norm layer from
/// its per-channel statistics: `γ·(x − μ)/√(σ² + eps) + β`.
pub fn batchnorm_affine(
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
    eps: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), FrameError> {
    let c = gamma.len();
    for (what, len) in [
        ("beta", beta.len()),
        ("mean", mean.len()),
        ("var", var.len()),
    ] {
        if len != c {
            return Err(FrameError::DimensionMismatch {
                frame: None,
                what,
                expected: c,
                found: len,
            });
        }
    }
    let scale: Vec<f64> = (0..c).map(|i| gamma[i] / (var[i] + eps).sqrt()).collect();
    let w = DMatrix::from_diagonal(&DVector::from_vec(scale.clone()));
    let b = DVector::from_iterator(c, (0..c).map(|i| beta[i] - scale[i] * mean[i]));
    Ok((w, b))
}
