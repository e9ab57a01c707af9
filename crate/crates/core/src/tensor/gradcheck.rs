use super::{BoundParams, ParamStore, Tape, Tensor, Var};
use crate::error::{ensure, Result};

/// Gradient magnitudes below this are compared in absolute terms.
///
/// Central differences in `f64` carry roughly `1e-16 * |loss| / h` of
/// round-off, so relative error is only meaningful above this scale.
pub const MAGNITUDE_FLOOR: f64 = 1e-4;

/// `|analytic - numeric| / max(|analytic|, |numeric|, MAGNITUDE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// `(input, element)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
}

/// Compares tape gradients of a scalar function against central finite differences.
///
/// `f` builds the loss from leaves bound to `inputs`, in order. Every element
/// of every input is perturbed by `±step`.
pub fn grad_check<F>(inputs: &[Tensor<f64>], f: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    ensure!(tape.value(loss).len() == 1, "grad_check function must return a scalar");
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt(v);
        for e in 0..inputs[i].len() {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + step;
            let up = eval(&work)?;
            work[i].data_mut()[e] = orig - step;
            let down = eval(&work)?;
            work[i].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[e];
            let rel = relative_error(a, numeric);
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((i, e));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// [`grad_check`] over every tensor of a parameter store, bound by name.
///
/// `worst` in the report indexes parameters in name order.
pub fn grad_check_params<F>(params: &ParamStore<f64>, f: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &BoundParams) -> Result<Var>,
{
    let names: Vec<String> = params.names().cloned().collect();
    let inputs: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    grad_check(
        &inputs,
        |tape, vars| {
            let bound: BoundParams = names.iter().cloned().zip(vars.iter().copied()).collect();
            f(tape, &bound)
        },
        step,
    )
}
