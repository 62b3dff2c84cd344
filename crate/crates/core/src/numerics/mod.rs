//! Dense tensors, a reverse-mode tape, and a finite-difference gradient
//! checker. Every model component is built on these.
//!
//! The free functions here are value-level conveniences; each one runs the
//! corresponding tape op on a throwaway tape so there is a single
//! implementation of the math.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{
    cross_entropy_difference, grad_check, grad_check_cross_entropy, grad_check_with, relative_error, GradCheckOptions,
    GradCheckReport, ParamCheck,
};
pub use params::{ParamStore, ParamVars};
pub use tape::{normal_cdf, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// Label value excluded from the loss.
pub const IGNORE_ID: i64 = -100;

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.matmul(b)
}

pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    x.softmax(axis)
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (x, g, b) = (tape.constant(x.clone()), tape.constant(gain.clone()), tape.constant(bias.clone()));
    let y = tape.layer_norm(x, g, b, eps)?;
    Ok(tape.value(y).clone())
}

pub fn gelu(x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.constant(x.clone());
    let y = tape.gelu(x)?;
    Ok(tape.value(y).clone())
}

/// Max over all `T−w+1` window responses of `filters · window + bias`.
/// `seq` is `[T×E]`, `filters` is `[F×(w·E)]`; the result is `[F]`.
pub fn conv1d_maxpool(seq: &Tensor, filters: &Tensor, bias: &Tensor, width: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let seq_len = seq.shape()[0];
    let (s, f, b) = (tape.constant(seq.clone()), tape.constant(filters.clone()), tape.constant(bias.clone()));
    let y = tape.conv1d_maxpool(s, f, b, width, seq_len)?;
    let out = tape.value(y);
    Ok(Tensor::vector(out.data().to_vec()))
}

pub fn cross_entropy_masked(logits: &Tensor, labels: &[i64], ignore_id: i64) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let y = tape.cross_entropy_masked(l, labels, ignore_id)?;
    Ok(tape.value(y).data()[0])
}
