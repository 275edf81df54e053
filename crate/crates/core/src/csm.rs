//! Concept-conditioned similarity module.
//!
//! From the joint representation `x = |h_i - h_j|` the module predicts
//! per-condition similarities `rho = sigmoid(W1ᵀx + b1)`, relevance weights
//! `omega = softmax(W2ᵀx + b2)`, and the pair score `p = rhoᵀomega` (or the
//! plain mean of `rho` when relevance is disabled).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Parameterized, Tape, Var};
use crate::error::{PanError, Result};
use crate::linalg::{Elementwise, Matrix};
use crate::rng::{rng_from_seed, PanRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CsmParameters<T: Scalar = f64> {
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    Unsupervised,
    Supervised,
    /// Supervised conditions come first, followed by `m_unsup` latent ones.
    Hybrid { m_sup: usize, m_unsup: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsmConfig {
    pub m: usize,
    pub supervision: Supervision,
    pub relevance_enabled: bool,
}

impl CsmConfig {
    pub fn unsupervised(m: usize) -> Self {
        Self {
            m,
            supervision: Supervision::Unsupervised,
            relevance_enabled: true,
        }
    }

    pub fn supervised(m: usize) -> Self {
        Self {
            m,
            supervision: Supervision::Supervised,
            relevance_enabled: true,
        }
    }

    pub fn hybrid(m_sup: usize, m_unsup: usize) -> Self {
        Self {
            m: m_sup + m_unsup,
            supervision: Supervision::Hybrid { m_sup, m_unsup },
            relevance_enabled: true,
        }
    }

    pub fn with_relevance(mut self, enabled: bool) -> Self {
        self.relevance_enabled = enabled;
        self
    }

    /// Number of leading conditions that receive attribute loss.
    pub fn supervised_len(&self) -> usize {
        match self.supervision {
            Supervision::Unsupervised => 0,
            Supervision::Supervised => self.m,
            Supervision::Hybrid { m_sup, .. } => m_sup,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(PanError::contract("condition count must be at least 1"));
        }
        if let Supervision::Hybrid { m_sup, m_unsup } = self.supervision {
            if m_sup + m_unsup != self.m {
                return Err(PanError::contract(format!(
                    "hybrid split {m_sup}+{m_unsup} does not add up to m={}",
                    self.m
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsmOutput<T: Scalar = f64> {
    pub rho: Vec<T>,
    pub omega: Vec<T>,
    pub p: T,
}

impl<T: Scalar> CsmParameters<T> {
    pub fn feature_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn conditions(&self) -> usize {
        self.w1.cols()
    }

    pub fn zeros(d: usize, m: usize) -> Self {
        Self {
            w1: Matrix::zeros(d, m),
            b1: Matrix::zeros(1, m),
            w2: Matrix::zeros(d, m),
            b2: Matrix::zeros(1, m),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1.shape() != self.w2.shape() {
            return Err(PanError::dim("csm weights", self.w1.shape(), self.w2.shape()));
        }
        let m = self.w1.cols();
        for b in [&self.b1, &self.b2] {
            if b.shape() != (1, m) {
                return Err(PanError::dim("csm bias", b.shape(), (1, m)));
            }
        }
        if m == 0 {
            return Err(PanError::contract("condition count must be at least 1"));
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Result<CsmVars> {
        Ok(CsmVars {
            w1: tape.param("csm.w1", self.w1.clone())?,
            b1: tape.param("csm.b1", self.b1.clone())?,
            w2: tape.param("csm.w2", self.w2.clone())?,
            b2: tape.param("csm.b2", self.b2.clone())?,
        })
    }
}

impl<T: Scalar> Parameterized<T> for CsmParameters<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>)) {
        f("csm.w1", &self.w1);
        f("csm.b1", &self.b1);
        f("csm.w2", &self.w2);
        f("csm.b2", &self.b2);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>)) {
        f("csm.w1", &mut self.w1);
        f("csm.b1", &mut self.b1);
        f("csm.w2", &mut self.w2);
        f("csm.b2", &mut self.b2);
    }
}

/// Uniform `[-1/sqrt(d), 1/sqrt(d)]` weights, zero biases.
pub fn init_params<T: Scalar>(d: usize, m: usize, seed: u64) -> Result<CsmParameters<T>> {
    init_params_with(d, m, &mut rng_from_seed(seed))
}

pub fn init_params_with<T: Scalar>(d: usize, m: usize, rng: &mut PanRng) -> Result<CsmParameters<T>> {
    if d == 0 || m == 0 {
        return Err(PanError::contract(format!(
            "csm needs d >= 1 and m >= 1, got d={d}, m={m}"
        )));
    }
    let bound = 1.0 / (d as f64).sqrt();
    let mut draw = |rows, cols| {
        let data = (0..rows * cols)
            .map(|_| T::lit(rng.random_range(-bound..=bound)))
            .collect();
        Matrix::from_raw(rows, cols, data)
    };
    let w1 = draw(d, m);
    let w2 = draw(d, m);
    Ok(CsmParameters {
        w1,
        b1: Matrix::zeros(1, m),
        w2,
        b2: Matrix::zeros(1, m),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CsmVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct CsmTapeOutput {
    pub rho: Var,
    pub omega: Var,
    /// `n x 1` pair scores.
    pub p: Var,
}

/// Records the module on a tape for `n` stacked pairs (`hi`, `hj` are `n x d`).
pub fn forward_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &CsmVars,
    hi: Var,
    hj: Var,
    relevance_enabled: bool,
) -> Result<CsmTapeOutput> {
    let diff = tape.sub(hi, hj)?;
    let joint = tape.abs(diff)?;
    let z1 = tape.matmul(joint, vars.w1)?;
    let z1 = tape.add_row_broadcast(z1, vars.b1)?;
    let rho = tape.sigmoid(z1)?;
    let z2 = tape.matmul(joint, vars.w2)?;
    let z2 = tape.add_row_broadcast(z2, vars.b2)?;
    let omega = tape.row_softmax(z2)?;
    let p = if relevance_enabled {
        let weighted = tape.mul(rho, omega)?;
        tape.row_sum(weighted)?
    } else {
        let m = tape.value(rho).cols();
        let total = tape.row_sum(rho)?;
        tape.scale(total, T::one() / T::from_usize_lossy(m))?
    };
    Ok(CsmTapeOutput { rho, omega, p })
}

/// Matrix form of the module for stacked pairs, sharing kernels with the tape.
pub fn forward_rows<T: Scalar>(
    hi: &Matrix<T>,
    hj: &Matrix<T>,
    params: &CsmParameters<T>,
    relevance_enabled: bool,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    let d = params.feature_dim();
    if hi.cols() != d || hj.cols() != d {
        return Err(PanError::Contract(format!(
            "csm expects feature dimension d={d}, got {} and {}",
            hi.cols(),
            hj.cols()
        )));
    }
    let joint = hi
        .elementwise(Elementwise::Subtract, Some(hj))?
        .elementwise(Elementwise::Abs, None)?;
    let rho = joint
        .matmul(&params.w1)?
        .add_row_broadcast(&params.b1)?
        .elementwise(Elementwise::Sigmoid, None)?;
    let omega = joint.matmul(&params.w2)?.add_row_broadcast(&params.b2)?.row_softmax()?;
    let p = if relevance_enabled {
        rho.elementwise(Elementwise::Multiply, Some(&omega))?.row_sums()
    } else {
        rho.row_sums().scale(T::one() / T::from_usize_lossy(rho.cols()))
    };
    Ok((rho, omega, p))
}

pub fn csm_forward<T: Scalar>(
    h_i: &[T],
    h_j: &[T],
    params: &CsmParameters<T>,
    config: &CsmConfig,
) -> Result<CsmOutput<T>> {
    let d = params.feature_dim();
    if h_i.len() != d || h_j.len() != d {
        return Err(PanError::Contract(format!(
            "csm expects feature dimension d={d}, got {} and {}",
            h_i.len(),
            h_j.len()
        )));
    }
    let hi = Matrix::from_raw(1, d, h_i.to_vec());
    let hj = Matrix::from_raw(1, d, h_j.to_vec());
    let (rho, omega, p) = forward_rows(&hi, &hj, params, config.relevance_enabled)?;
    Ok(CsmOutput {
        rho: rho.into_vec(),
        omega: omega.into_vec(),
        p: p.item(),
    })
}

pub fn csm_batch_forward<T: Scalar>(
    pairs: &[(usize, usize)],
    features: &Matrix<T>,
    params: &CsmParameters<T>,
    config: &CsmConfig,
) -> Result<Vec<CsmOutput<T>>> {
    let (left, right): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    let hi = features.gather_rows(&left)?;
    let hj = features.gather_rows(&right)?;
    let (rho, omega, p) = forward_rows(&hi, &hj, params, config.relevance_enabled)?;
    Ok((0..pairs.len())
        .map(|r| CsmOutput {
            rho: rho.row(r).to_vec(),
            omega: omega.row(r).to_vec(),
            p: p.get(r, 0),
        })
        .collect())
}
