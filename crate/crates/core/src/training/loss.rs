//! The pair objective: link BCE plus weighted masked attribute BCE.

use crate::autodiff::{Tape, Var};
use crate::error::{PanError, Result};
use crate::linalg::{bce, masked_bce_mean, Matrix};
use crate::scalar::Scalar;

fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if !(lambda >= T::zero()) {
        return Err(PanError::Contract(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(())
}

/// Loss of a single pair. `rho` may be longer than `pair_labels`; only its
/// prefix is supervised.
pub fn total_loss<T: Scalar>(
    e: T,
    p: T,
    pair_labels: &[T],
    pair_mask: &[T],
    rho: &[T],
    lambda: T,
) -> Result<T> {
    check_lambda(lambda)?;
    if rho.len() < pair_labels.len() {
        return Err(PanError::Length {
            op: "total_loss",
            expected: pair_labels.len(),
            actual: rho.len(),
        });
    }
    let link = bce(p, e);
    if lambda == T::zero() || pair_mask.iter().all(|&m| m == T::zero()) {
        return Ok(link);
    }
    let attr = masked_bce_mean(&rho[..pair_labels.len()], pair_labels, pair_mask)?;
    Ok(link + lambda * attr)
}

/// Supervision targets for a batch of pairs, already padded to the
/// condition count with zero mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTargets<T: Scalar = f64> {
    pub labels: Matrix<T>,
    pub mask: Matrix<T>,
}

impl<T: Scalar> AttributeTargets<T> {
    pub fn any_labeled(&self) -> bool {
        self.mask.as_slice().iter().any(|&m| m != T::zero())
    }
}

/// Records the batch-mean objective. The attribute term is left off the tape
/// entirely when it cannot contribute, which keeps those runs bit-identical to
/// unsupervised ones.
pub fn batch_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    p: Var,
    rho: Var,
    links: &[T],
    targets: Option<&AttributeTargets<T>>,
    lambda: T,
) -> Result<Var> {
    check_lambda(lambda)?;
    let n = links.len();
    let ones = Matrix::filled(n, 1, T::one());
    let link = tape.bce_rows(p, Matrix::new(n, 1, links.to_vec())?, ones)?;
    let link = tape.mean(link)?;
    match targets {
        Some(t) if lambda != T::zero() && t.any_labeled() => {
            let attr = tape.bce_rows(rho, t.labels.clone(), t.mask.clone())?;
            let attr = tape.mean(attr)?;
            let attr = tape.scale(attr, lambda)?;
            tape.add(link, attr)
        }
        _ => Ok(link),
    }
}

/// `max(d(a, p) - d(a, n) + margin, 0)` averaged over rows.
pub fn triplet_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    anchor: Var,
    positive: Var,
    negative: Var,
    margin: T,
) -> Result<Var> {
    let dp = tape.sub(anchor, positive)?;
    let dp = tape.row_norm(dp)?;
    let dn = tape.sub(anchor, negative)?;
    let dn = tape.row_norm(dn)?;
    let gap = tape.sub(dp, dn)?;
    let gap = tape.add_const(gap, margin)?;
    let hinge = tape.relu(gap)?;
    tape.mean(hinge)
}
