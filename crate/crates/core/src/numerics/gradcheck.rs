//! Central-difference verification of tape gradients.

use std::collections::BTreeMap;

use super::params::{ParamStore, ParamVars};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Worst component of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    /// Parameters at or above `tol`.
    pub fn failures(&self, tol: f64) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(move |p| p.max_rel_error.partial_cmp(&tol) != Some(std::cmp::Ordering::Less))
    }
}

/// Relative error with a `1e-8` floor on the denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckOptions<'a> {
    /// Only these parameters are perturbed; all when `None`.
    pub only: Option<&'a [String]>,
    /// Test hook: scales the analytic gradient of this parameter by 1.5.
    pub corrupt: Option<&'a str>,
}

/// Compares tape gradients of `f` against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`, component by component.
pub fn grad_check<F>(f: F, params: &mut ParamStore, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    grad_check_with(f, params, epsilon, &GradCheckOptions::default())
}

pub fn grad_check_with<F>(
    f: F,
    params: &mut ParamStore,
    epsilon: f64,
    opts: &GradCheckOptions<'_>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    let analytic = analytic_grads(params, |tape, vars| f(tape, vars))?;
    let eval = |params: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let loss = f(&mut tape, &vars)?;
        let v = tape.value(loss).data()[0];
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "loss".into() });
        }
        Ok(v)
    };
    compare(params, epsilon, opts, analytic, eval, |plus, minus| plus - minus)
}

/// Like [`grad_check_with`] for a masked cross-entropy loss over the logits
/// and labels returned by `f`.
///
/// The loss difference `f(θ+ε) − f(θ−ε)` is formed from the two logit
/// matrices directly (see [`cross_entropy_difference`]) instead of
/// subtracting two rounded loss values, which keeps the rounding noise of a
/// loss near `ln V` out of small gradient components.
pub fn grad_check_cross_entropy<F>(
    f: F,
    params: &mut ParamStore,
    epsilon: f64,
    ignore_id: i64,
    opts: &GradCheckOptions<'_>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<(Var, Vec<i64>)>,
{
    let analytic = analytic_grads(params, |tape, vars| {
        let (logits, labels) = f(tape, vars)?;
        tape.cross_entropy_masked(logits, &labels, ignore_id)
    })?;
    let eval = |params: &ParamStore| -> Result<(Tensor, Vec<i64>)> {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let (logits, labels) = f(&mut tape, &vars)?;
        Ok((tape.value(logits).clone(), labels))
    };
    compare(params, epsilon, opts, analytic, eval, |plus, minus| {
        cross_entropy_difference(&plus.0, &minus.0, &plus.1, ignore_id)
    })
}

/// `CE(a) − CE(b)` for two logit matrices sharing `labels`, where CE is the
/// mean over labeled rows of `logsumexp(row) − row[label]`. Per row this is
/// `ln1p(Σ_j softmax(b)_j · expm1(a_j − b_j)) − (a_y − b_y)`, which stays
/// accurate when `a` and `b` are close.
pub fn cross_entropy_difference(a: &Tensor, b: &Tensor, labels: &[i64], ignore_id: i64) -> f64 {
    let v = a.last_dim();
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        if y == ignore_id {
            continue;
        }
        let (ra, rb) = (a.row(i), b.row(i));
        let m = rb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let mut delta = 0.0;
        for j in 0..v {
            let e = (rb[j] - m).exp();
            sum += e;
            delta += e * (ra[j] - rb[j]).exp_m1();
        }
        let y = y as usize;
        total += (delta / sum).ln_1p() - (ra[y] - rb[y]);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn analytic_grads<G>(params: &ParamStore, loss: G) -> Result<BTreeMap<String, Tensor>>
where
    G: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let l = loss(&mut tape, &vars)?;
    if !tape.value(l).is_finite() {
        return Err(Error::NonFinite { op: "loss".into() });
    }
    tape.backward(l)?;
    Ok(vars.grads(&tape))
}

fn compare<T, E, D>(
    params: &mut ParamStore,
    epsilon: f64,
    opts: &GradCheckOptions<'_>,
    mut analytic: BTreeMap<String, Tensor>,
    eval: E,
    diff: D,
) -> Result<GradCheckReport>
where
    E: Fn(&ParamStore) -> Result<T>,
    D: Fn(&T, &T) -> f64,
{
    if let Some(name) = opts.corrupt {
        if let Some(g) = analytic.get_mut(name) {
            g.data_mut().iter_mut().for_each(|v| *v *= 1.5);
        }
    }
    let names: Vec<String> = match opts.only {
        Some(only) => only.to_vec(),
        None => params.names().map(str::to_string).collect(),
    };
    let mut report = GradCheckReport::default();
    for name in names {
        let grad = analytic.get(&name).ok_or_else(|| Error::MissingParam(name.clone()))?;
        let mut worst =
            ParamCheck { name: name.clone(), max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
        for i in 0..grad.numel() {
            let orig = params.get(&name)?.data()[i];
            params.get_mut(&name)?.data_mut()[i] = orig + epsilon;
            let plus = eval(params);
            params.get_mut(&name)?.data_mut()[i] = orig - epsilon;
            let minus = eval(params);
            params.get_mut(&name)?.data_mut()[i] = orig;
            let numeric = diff(&plus?, &minus?) / (2.0 * epsilon);
            if !numeric.is_finite() {
                return Err(Error::NonFinite { op: "loss".into() });
            }
            let a = grad.data()[i];
            let err = relative_error(a, numeric);
            if i == 0 || err > worst.max_rel_error {
                worst.max_rel_error = err;
                worst.worst_index = i;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        report.params.push(worst);
    }
    Ok(report)
}
