//! Central finite-difference verification of tape gradients.

use crate::autodiff::{Parameterized, Tape, Var};
use crate::error::{PanError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry.
    pub worst_entry: String,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
    /// Entries skipped because a non-differentiable point lies within one
    /// step of the parameter value.
    pub kinks_skipped: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheckOptions {
    /// Negates the analytic gradient before comparison. Negative control
    /// for harnesses that must prove they can fail.
    pub flip_sign: bool,
    /// Skips a disagreeing entry when a one-sided difference matches the
    /// analytic value far better than the central one. On smooth ground the
    /// central difference is the more accurate, so this happens only when
    /// the probe straddles a kink such as a ReLU hinge or `|x|` at zero.
    pub skip_kinks: bool,
}

/// Magnitudes below this are compared absolutely: central differences of an
/// O(1) loss carry roundoff near `eps / step`.
pub const REL_FLOOR: f64 = 1e-6;
const KINK_PROBE_ABOVE: f64 = 1e-6;
const KINK_SIDE_ADVANTAGE: f64 = 4.0;

pub fn finite_diff_check<T, M, F>(model: &M, step: T, loss: F) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Parameterized<T> + Clone,
    F: Fn(&mut Tape<T>, &M) -> Result<Var>,
{
    finite_diff_check_with(model, step, GradCheckOptions::default(), loss)
}

pub fn finite_diff_check_with<T, M, F>(
    model: &M,
    step: T,
    options: GradCheckOptions,
    loss: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Parameterized<T> + Clone,
    F: Fn(&mut Tape<T>, &M) -> Result<Var>,
{
    if !(step > T::zero()) {
        return Err(PanError::contract("finite-difference step must be positive"));
    }
    let mut tape = Tape::new();
    let out = loss(&mut tape, model)?;
    let grads = tape.backward(out)?;

    let eval = |m: &M, entry: &str| -> Result<T> {
        let mut t = Tape::new();
        let o = loss(&mut t, m)?;
        let v = t.value(o).item();
        if !v.is_finite() {
            return Err(PanError::Numeric(format!("loss is {v} while probing {entry}")));
        }
        Ok(v)
    };

    let mut shapes = Vec::new();
    model.visit_params(&mut |name, m| shapes.push((name.to_string(), m.len())));

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_entry: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
        kinks_skipped: 0,
    };
    let base = eval(model, "the unperturbed model")?;
    for (name, len) in shapes {
        for idx in 0..len {
            let entry = format!("{name}[{idx}]");
            let perturbed = |delta: T| {
                let mut m = model.clone();
                m.visit_params_mut(&mut |n, p| {
                    if n == name {
                        p.as_mut_slice()[idx] += delta;
                    }
                });
                m
            };
            let plus = eval(&perturbed(step), &entry)?;
            let minus = eval(&perturbed(-step), &entry)?;
            let numeric = ((plus - minus) / (step + step)).to_f64_lossy();
            let mut analytic = grads
                .get(&name)
                .map_or(0.0, |g| g.as_slice()[idx].to_f64_lossy());
            if options.flip_sign {
                analytic = -analytic;
            }
            let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            if options.skip_kinks && rel > KINK_PROBE_ABOVE {
                let forward = ((plus - base) / step).to_f64_lossy();
                let backward = ((base - minus) / step).to_f64_lossy();
                let sided = (analytic - forward).abs().min((analytic - backward).abs());
                if sided * KINK_SIDE_ADVANTAGE < (analytic - numeric).abs() {
                    report.kinks_skipped += 1;
                    continue;
                }
            }
            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst_entry.is_empty() {
                report.max_rel_error = rel;
                report.worst_entry = entry;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
