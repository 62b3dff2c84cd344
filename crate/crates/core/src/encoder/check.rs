use crate::corpus::MaskedBatch;
use crate::error::Result;
use crate::numerics::{grad_check_cross_entropy, GradCheckOptions, GradCheckReport, IGNORE_ID};

use super::model::Encoder;
use super::train::{mlm_logits, Resources};

/// Largest model the finite-difference check accepts.
pub const GRADCHECK_MAX_PARAMS: usize = 100_000;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Central-difference check of the full MLM loss (embeddings through the
/// output head) against backpropagation, with dropout off. `fault` scales
/// one parameter's analytic gradient to exercise the failure path.
pub fn gradcheck_mlm(
    encoder: &Encoder,
    batches: &[MaskedBatch],
    res: &Resources,
    epsilon: f64,
    fault: Option<&str>,
) -> Result<GradCheckReport> {
    let mut params = encoder.params.clone();
    let logits = |tape: &mut _, vars: &_| mlm_logits(encoder, tape, vars, batches, res, None);
    let opts = GradCheckOptions { only: None, corrupt: fault };
    grad_check_cross_entropy(logits, &mut params, epsilon, IGNORE_ID, &opts)
}
