//! Central-difference gradient checking. Runs in f64 only; f32 rounding
//! noise would swamp the comparison thresholds.

use crate::optim::{Grads, ParamSet};

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coordinates_checked: usize,
}

/// Compare `analytic` against a central-difference estimate of the
/// gradient of `value_fn` at `params`, one coordinate at a time.
///
/// Returns the max over all coordinates of |a - n| / max(|a|, |n|, 1e-8).
pub fn finite_diff_gradcheck(
    params: &ParamSet<f64>,
    value_fn: impl Fn(&ParamSet<f64>) -> f64,
    analytic: &Grads<f64>,
    step: f64,
) -> GradCheckOutcome {
    let mut work = params.clone();
    let mut outcome = GradCheckOutcome {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coordinates_checked: 0,
    };

    let names: Vec<String> = params.names().map(|s| s.to_string()).collect();
    for name in &names {
        let base = params.get(name).expect("param exists").clone();
        for idx in 0..base.len() {
            let orig = base.data()[idx];

            let mut plus = base.clone();
            plus.data_mut()[idx] = orig + step;
            work.set_value(name, plus).expect("param exists");
            let f_plus = value_fn(&work);

            let mut minus = base.clone();
            minus.data_mut()[idx] = orig - step;
            work.set_value(name, minus).expect("param exists");
            let f_minus = value_fn(&work);

            work.set_value(name, base.clone()).expect("param exists");

            let numeric = (f_plus - f_minus) / (2.0 * step);
            let analytic_v = analytic
                .get(name)
                .map(|t| t.data()[idx])
                .unwrap_or(0.0);
            let rel = (analytic_v - numeric).abs()
                / analytic_v.abs().max(numeric.abs()).max(1e-8);
            outcome.coordinates_checked += 1;
            if rel > outcome.max_rel_err {
                outcome.max_rel_err = rel;
                outcome.worst_param = name.clone();
                outcome.worst_index = idx;
            }
        }
    }
    outcome
}
