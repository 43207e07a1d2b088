//! Lindblad generator `L(ρ) = −i[H, ρ] + Σ_j D[L_j](ρ)`.
//!
//! The model stores the effective drift `G = −iH − ½Q`, `Q = Σ_j L_j†L_j`,
//! so that `L(ρ) = Gρ + ρG† + Σ_j L_j ρ L_j†`.

use crate::error::{Error, Result};
use crate::matcore::{expm, CMatrix, C64};

/// Largest dimension for which the vectorized superoperator may be built.
pub const ORACLE_MAX_DIM: usize = 16;

#[derive(Debug, Clone)]
pub struct LindbladModel {
    dim: usize,
    hamiltonian: CMatrix,
    jumps: Vec<CMatrix>,
    jumps_dag: Vec<CMatrix>,
    drift: CMatrix,
    drift_dag: CMatrix,
    q: CMatrix,
}

impl LindbladModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    pub fn jumps_dag(&self) -> &[CMatrix] {
        &self.jumps_dag
    }

    pub fn n_dissipators(&self) -> usize {
        self.jumps.len()
    }

    /// `G = −iH − ½ Σ L_j†L_j`
    pub fn effective_g(&self) -> &CMatrix {
        &self.drift
    }

    pub fn effective_g_dag(&self) -> &CMatrix {
        &self.drift_dag
    }

    /// `Q = Σ L_j†L_j`
    pub fn dissipation_q(&self) -> &CMatrix {
        &self.q
    }

    fn check_dim(&self, m: &CMatrix) -> Result<()> {
        if m.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: m.dim(),
            });
        }
        Ok(())
    }
}

/// Validates and assembles a model. `H` is symmetrized once its Hermiticity
/// residual is within `1e-10·max(1, ‖H‖_F)`.
pub fn build_model(hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Result<LindbladModel> {
    let dim = hamiltonian.dim();
    for l in &jumps {
        if l.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: l.dim(),
            });
        }
    }
    let residual = hamiltonian.hermiticity_residual();
    if residual > 1e-10 * hamiltonian.frobenius_norm().max(1.0) {
        return Err(Error::NonHermitianHamiltonian { residual });
    }
    let hamiltonian = hamiltonian.hermitian_part();
    let jumps_dag: Vec<CMatrix> = jumps.iter().map(CMatrix::dagger).collect();
    let mut q = CMatrix::zeros(dim);
    for (l, ld) in jumps.iter().zip(&jumps_dag) {
        q = &q + &(ld * l);
    }
    let q = q.hermitian_part();
    let mut drift = hamiltonian.scale(C64::new(0.0, -1.0));
    drift.axpy_real(-0.5, &q);
    let drift_dag = drift.dagger();
    Ok(LindbladModel {
        dim,
        hamiltonian,
        jumps,
        jumps_dag,
        drift,
        drift_dag,
        q,
    })
}

/// `seed + scale·L(ρ)`, accumulated term by term into the seed (zero when
/// absent). Costs `2N_d + 2` products and `N_d + 2` additions.
pub(crate) fn accumulate_lindbladian(
    m: &LindbladModel,
    rho: &CMatrix,
    scale: f64,
    seed: Option<CMatrix>,
) -> CMatrix {
    let mut acc = seed.unwrap_or_else(|| CMatrix::zeros(m.dim));
    acc.axpy_real(scale, &(&m.drift * rho));
    acc.axpy_real(scale, &(rho * &m.drift_dag));
    for (l, ld) in m.jumps.iter().zip(&m.jumps_dag) {
        acc.axpy_real(scale, &(&(l * rho) * ld));
    }
    acc
}

pub fn apply_lindbladian(m: &LindbladModel, rho: &CMatrix) -> Result<CMatrix> {
    m.check_dim(rho)?;
    Ok(accumulate_lindbladian(m, rho, 1.0, None))
}

/// Column-stacked superoperator `K` with `K·vec(ρ) = vec(L(ρ))`, using
/// `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.
pub fn vectorize_superop(m: &LindbladModel) -> Result<CMatrix> {
    if m.dim > ORACLE_MAX_DIM {
        return Err(Error::DimTooLarge {
            dim: m.dim,
            max: ORACLE_MAX_DIM,
        });
    }
    let id = CMatrix::identity(m.dim);
    let mut k = CMatrix::kron(&id, &m.drift);
    k = &k + &CMatrix::kron(&m.drift.conj(), &id);
    for l in &m.jumps {
        k = &k + &CMatrix::kron(&l.conj(), l);
    }
    Ok(k)
}

/// Exact semigroup `e^{tL}` applied to a density matrix through the
/// vectorized generator. Output is symmetrized.
pub fn exact_channel(m: &LindbladModel, t: f64, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let prop = ExactPropagator::new(m, t)?;
    prop.apply(rho)
}

/// `e^{tK}` computed once and applied to many states.
#[derive(Debug, Clone)]
pub struct ExactPropagator {
    dim: usize,
    prop: CMatrix,
}

impl ExactPropagator {
    pub fn new(m: &LindbladModel, t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("time must be >= 0, got {t}")));
        }
        let k = vectorize_superop(m)?;
        Ok(ExactPropagator {
            dim: m.dim,
            prop: expm(&k.scale_real(t))?,
        })
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        let out = self.prop.matvec(&rho.as_matrix().vec_columns());
        let mat = CMatrix::unvec_columns(&out)?.hermitian_part();
        Ok(DensityMatrix::from_raw(mat))
    }
}

/// A (possibly approximate) quantum state.
///
/// Constructors that take user input validate Hermiticity and unit trace;
/// states produced by time steppers are wrapped as-is via [`DensityMatrix::from_raw`]
/// since non-structure-preserving schemes may legitimately leave the cone.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        let norm = mat.frobenius_norm();
        let residual = mat.hermiticity_residual();
        if residual > 1e-10 * norm {
            return Err(Error::InvalidState(format!(
                "Hermiticity residual {residual:.3e}"
            )));
        }
        let tr = mat.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        Ok(DensityMatrix(mat))
    }

    pub fn from_raw(mat: CMatrix) -> Self {
        DensityMatrix(mat)
    }

    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CMatrix::outer(amplitudes, amplitudes))
    }

    pub fn fock(dim: usize, k: usize) -> Self {
        let mut m = CMatrix::zeros(dim);
        m[(k, k)] = C64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(CMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.0.hermiticity_residual()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = crate::matcore::herm_eig(&self.0.hermitian_part())?;
        Ok(eig.eigenvalues[0])
    }

    /// Population `<k|ρ|k>`.
    pub fn population(&self, k: usize) -> f64 {
        self.0[(k, k)].re
    }
}
