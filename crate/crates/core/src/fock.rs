//! Truncated bosonic operators and states on `span{|0>, …, |N−1>}`.
//!
//! Operators are built directly at the truncated size. For polynomials in the
//! annihilation operator this is the same as projecting the infinite operator,
//! because `a` only ever lowers the Fock index.

use num_complex::Complex64;

use crate::analysis::coefficient_c;
use crate::error::{Error, Result};
use crate::matcore::{CMatrix, C64};

/// Number of retained Fock states `N` (at least 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockDim(usize);

impl FockDim {
    pub fn new(n_fock: usize) -> Result<Self> {
        if n_fock < 2 {
            return Err(Error::InvalidArgument(format!(
                "Fock truncation must keep at least 2 states, got {n_fock}"
            )));
        }
        Ok(FockDim(n_fock))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Pure state amplitudes in the Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[k] = C64::new(1.0, 0.0);
        StateVector { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|ψ><ψ|`
    pub fn projector(&self) -> CMatrix {
        CMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    fn normalized(mut self) -> Self {
        let n = self.norm();
        for z in &mut self.amplitudes {
            *z /= n;
        }
        self
    }
}

/// A state built from a truncated infinite series, together with the
/// probability mass that fell outside the truncation before renormalizing.
#[derive(Debug, Clone)]
pub struct TruncatedState {
    pub state: StateVector,
    pub leakage: f64,
}

/// Minimum retained mass before a truncated coherent state is rejected.
const MIN_RETAINED_MASS: f64 = 0.99;

pub fn annihilation(dim: FockDim) -> CMatrix {
    let n = dim.get();
    let mut a = CMatrix::zeros(n);
    for k in 0..n - 1 {
        a[(k, k + 1)] = C64::new(((k + 1) as f64).sqrt(), 0.0);
    }
    a
}

pub fn creation(dim: FockDim) -> CMatrix {
    annihilation(dim).dagger()
}

/// `a†a = diag(0, 1, …, N−1)`
pub fn number_op(dim: FockDim) -> CMatrix {
    let diag: Vec<f64> = (0..dim.get()).map(|k| k as f64).collect();
    CMatrix::from_real_diag(&diag)
}

/// Parity operator `diag((−1)^n)`.
pub fn parity_op(dim: FockDim) -> CMatrix {
    let diag: Vec<f64> = (0..dim.get())
        .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    CMatrix::from_real_diag(&diag)
}

/// Un-normalized truncated coherent amplitudes `e^{−|α|²/2} α^n/√(n!)`,
/// accumulated as a running product so `n!` never overflows.
fn coherent_amplitudes(n: usize, alpha: C64) -> Vec<C64> {
    let mut v = Vec::with_capacity(n);
    let mut cur = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for k in 0..n {
        v.push(cur);
        cur = cur * alpha / ((k + 1) as f64).sqrt();
    }
    v
}

fn retained_mass(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Coherent state `|α>` truncated to `dim` levels and renormalized.
pub fn coherent_state(dim: FockDim, alpha: Complex64) -> Result<TruncatedState> {
    let raw = coherent_amplitudes(dim.get(), alpha);
    let retained = retained_mass(&raw);
    if retained < MIN_RETAINED_MASS {
        return Err(Error::LeakageTooLarge { retained });
    }
    Ok(TruncatedState {
        state: StateVector { amplitudes: raw }.normalized(),
        leakage: (1.0 - retained).max(0.0),
    })
}

/// Even cat state `(|α> + |−α>)/‖·‖`, truncated and renormalized.
pub fn cat_state_plus(dim: FockDim, alpha: Complex64) -> Result<TruncatedState> {
    let plus = coherent_amplitudes(dim.get(), alpha);
    let minus = coherent_amplitudes(dim.get(), -alpha);
    let retained = retained_mass(&plus);
    if retained < MIN_RETAINED_MASS {
        return Err(Error::LeakageTooLarge { retained });
    }
    let amplitudes = plus.iter().zip(&minus).map(|(a, b)| a + b).collect();
    Ok(TruncatedState {
        state: StateVector { amplitudes }.normalized(),
        leakage: (1.0 - retained).max(0.0),
    })
}

/// `a^l − alpha_sq·Id` on the truncated space. With `alpha_sq = 0` this is the
/// `l`-photon loss jump operator.
pub fn truncated_power_loss(dim: FockDim, l: usize, alpha_sq: Complex64) -> Result<CMatrix> {
    let n = dim.get();
    if l == 0 || l >= n {
        return Err(Error::InvalidArgument(format!(
            "photon-loss order must satisfy 1 <= l < {n}, got {l}"
        )));
    }
    let mut m = CMatrix::zeros(n);
    for k in l..n {
        m[(k - l, k)] = C64::new(coefficient_c(l, k).sqrt(), 0.0);
    }
    Ok(m.shift_diag(-alpha_sq))
}
