//! Fixed-step time steppers for `ρ' = L(ρ)`.
//!
//! Seven schemes are provided: explicit Euler of order 1 and 2, classical RK4,
//! the trace-renormalized Kraus schemes of order 1 and 2 ("Lu–Cao"), and the
//! linear quantum-channel schemes QC-1 and QC-2 obtained by right-multiplying
//! each Kraus operator by `S^{-1/2}`, `S = Σ M_j†M_j`.
//!
//! Kraus operators depend only on `(model, dt)` and are built once per stepper.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{accumulate_lindbladian, DensityMatrix, LindbladModel};
use crate::matcore::{normalize_gram, spectral_norm, CMatrix, LuFactor, C64, INV_SQRT_FLOOR};
use crate::reference::Trajectory;

/// Frobenius norm beyond which an explicit run is declared divergent.
pub const BLOWUP_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeTag {
    Euler1,
    Euler2,
    LuCao1,
    LuCao2,
    Qc1,
    Qc2,
    Rk4,
}

impl SchemeTag {
    pub const ALL: [SchemeTag; 7] = [
        SchemeTag::Euler1,
        SchemeTag::Euler2,
        SchemeTag::LuCao1,
        SchemeTag::LuCao2,
        SchemeTag::Qc1,
        SchemeTag::Qc2,
        SchemeTag::Rk4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeTag::Euler1 => "euler1",
            SchemeTag::Euler2 => "euler2",
            SchemeTag::LuCao1 => "lucao1",
            SchemeTag::LuCao2 => "lucao2",
            SchemeTag::Qc1 => "qc1",
            SchemeTag::Qc2 => "qc2",
            SchemeTag::Rk4 => "rk4",
        }
    }

    /// Nominal global order.
    pub fn order(self) -> u32 {
        match self {
            SchemeTag::Euler1 | SchemeTag::LuCao1 | SchemeTag::Qc1 => 1,
            SchemeTag::Euler2 | SchemeTag::LuCao2 | SchemeTag::Qc2 => 2,
            SchemeTag::Rk4 => 4,
        }
    }
}

impl fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        SchemeTag::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| Error::BadConfig(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelTag {
    Qc1,
    Qc2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyTag {
    LuCao1,
    LuCao2,
}

/// Kraus operators with their adjoints cached.
#[derive(Debug, Clone)]
struct KrausOps {
    ops: Vec<CMatrix>,
    ops_dag: Vec<CMatrix>,
}

impl KrausOps {
    fn new(ops: Vec<CMatrix>) -> Self {
        let ops_dag = ops.iter().map(CMatrix::dagger).collect();
        KrausOps { ops, ops_dag }
    }

    /// `Σ_j M_j ρ M_j†`: two products per operator, one addition per
    /// operator after the first.
    fn sandwich_sum(&self, rho: &CMatrix) -> CMatrix {
        let mut terms = self
            .ops
            .iter()
            .zip(&self.ops_dag)
            .map(|(m, md)| &(m * rho) * md);
        let mut acc = terms.next().expect("at least one Kraus operator");
        for t in terms {
            acc.axpy_real(1.0, &t);
        }
        acc
    }

    /// `Σ_j M_j†M_j`
    fn gram_sum(&self) -> CMatrix {
        let n = self.ops[0].dim();
        let mut s = CMatrix::zeros(n);
        for (m, md) in self.ops.iter().zip(&self.ops_dag) {
            s = &s + &(md * m);
        }
        s
    }
}

/// A CPTP step `ρ ↦ Σ_j M̃_j ρ M̃_j†` with `Σ_j M̃_j†M̃_j = Id`.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    kraus: KrausOps,
    pub dt: f64,
    pub tag: ChannelTag,
}

impl KrausChannel {
    pub fn dim(&self) -> usize {
        self.kraus.ops[0].dim()
    }

    pub fn kraus_ops(&self) -> &[CMatrix] {
        &self.kraus.ops
    }

    /// `‖Σ M̃_j†M̃_j − Id‖_F`
    pub fn completeness_residual(&self) -> f64 {
        self.kraus.gram_sum().distance(&CMatrix::identity(self.dim()))
    }

    /// Largest operator norm among the Kraus operators.
    pub fn max_operator_norm(&self) -> Result<f64> {
        self.kraus
            .ops
            .iter()
            .map(spectral_norm)
            .try_fold(0.0f64, |acc, n| Ok(acc.max(n?)))
    }
}

/// A completely positive but not trace-preserving Kraus family, normalized
/// by the output trace at application time.
#[derive(Debug, Clone)]
pub struct KrausFamily {
    kraus: KrausOps,
    pub dt: f64,
    pub tag: FamilyTag,
}

impl KrausFamily {
    pub fn dim(&self) -> usize {
        self.kraus.ops[0].dim()
    }

    pub fn kraus_ops(&self) -> &[CMatrix] {
        &self.kraus.ops
    }

    /// `S = Σ M_j†M_j`
    pub fn normalizer(&self) -> CMatrix {
        self.kraus.gram_sum()
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn check_state_dim(m: &LindbladModel, rho: &CMatrix) -> Result<()> {
    if rho.dim() != m.dim() {
        return Err(Error::DimMismatch {
            expected: m.dim(),
            found: rho.dim(),
        });
    }
    Ok(())
}

/// Cayley transform `(Id − i dt/2 H)(Id + i dt/2 H)^{-1}`. The two factors
/// commute, so this is the solution of `(Id + i dt/2 H) X = Id − i dt/2 H`.
pub fn cayley(h: &CMatrix, dt: f64) -> Result<CMatrix> {
    let half = C64::new(0.0, dt / 2.0);
    let id = CMatrix::identity(h.dim());
    let mut plus = id.clone();
    plus.axpy(half, h);
    let mut minus = id;
    minus.axpy(-half, h);
    LuFactor::new(&plus)?.solve(&minus)
}

/// Right-multiplies every operator by `S^{-1/2}`, `S = Σ M_k† M_k`.
fn normalize(ops: Vec<CMatrix>) -> Result<KrausOps> {
    Ok(KrausOps::new(normalize_gram(&ops, INV_SQRT_FLOOR)?))
}

/// First-order operators: `M_0 = Cayley(H)(Id − dt/2 Q)`, `M_j = √dt L_j`.
fn qc1_operators(m: &LindbladModel, dt: f64) -> Result<Vec<CMatrix>> {
    let mut damp = CMatrix::identity(m.dim());
    damp.axpy_real(-dt / 2.0, m.dissipation_q());
    let m0 = &cayley(m.hamiltonian(), dt)? * &damp;
    let mut ops = vec![m0];
    ops.extend(m.jumps().iter().map(|l| l.scale_real(dt.sqrt())));
    Ok(ops)
}

/// Order-one Kraus family: `M_0 = Id + dt G`, `M_j = √dt L_j`.
fn lucao1_operators(m: &LindbladModel, dt: f64) -> Vec<CMatrix> {
    let mut m0 = CMatrix::identity(m.dim());
    m0.axpy_real(dt, m.effective_g());
    let mut ops = vec![m0];
    ops.extend(m.jumps().iter().map(|l| l.scale_real(dt.sqrt())));
    ops
}

/// Order-two Kraus family (`1 + N_d + N_d²` operators):
///
/// - `M_0 = Id + dt G + dt²/2 G²`
/// - `M_j = √dt (Id + dt/2 G) L_j (Id + dt/2 G)`, one per jump
/// - `√(dt²/2) L_i L_j` for every ordered pair `(i, j)`
///
/// The middle operators use the midpoint form so that the single-jump
/// contribution matches `dt J + dt²/2 (G₀J + JG₀)` of the second-order
/// Dyson expansion, `G₀ρ = Gρ + ρG†`.
fn order2_operators(m: &LindbladModel, dt: f64) -> Vec<CMatrix> {
    let n = m.dim();
    let g = m.effective_g();
    let g2 = g * g;
    let mut m0 = CMatrix::identity(n);
    m0.axpy_real(dt, g);
    m0.axpy_real(dt * dt / 2.0, &g2);
    let mut half_step = CMatrix::identity(n);
    half_step.axpy_real(dt / 2.0, g);

    let mut ops = vec![m0];
    for l in m.jumps() {
        ops.push((&(&half_step * l) * &half_step).scale_real(dt.sqrt()));
    }
    let pair_scale = (dt * dt / 2.0).sqrt();
    for li in m.jumps() {
        for lj in m.jumps() {
            ops.push((li * lj).scale_real(pair_scale));
        }
    }
    ops
}

pub fn build_qc1(m: &LindbladModel, dt: f64) -> Result<KrausChannel> {
    check_dt(dt)?;
    let ops = qc1_operators(m, dt)?;
    let s = KrausOps::new(ops.clone()).gram_sum();
    // With a unitary Cayley factor, S = Id + dt²/4 Q² exactly.
    let q = m.dissipation_q();
    let mut expected = CMatrix::identity(m.dim());
    expected.axpy_real(dt * dt / 4.0, &(q * q));
    let gap = s.distance(&expected);
    if gap > 1e-10 * expected.frobenius_norm() {
        return Err(Error::InvalidArgument(format!(
            "QC-1 normalizer deviates from Id + dt²/4 Q² by {gap:.3e}"
        )));
    }
    Ok(KrausChannel {
        kraus: normalize(ops)?,
        dt,
        tag: ChannelTag::Qc1,
    })
}

pub fn build_qc2(m: &LindbladModel, dt: f64) -> Result<KrausChannel> {
    check_dt(dt)?;
    Ok(KrausChannel {
        kraus: normalize(order2_operators(m, dt))?,
        dt,
        tag: ChannelTag::Qc2,
    })
}

pub fn build_lucao(m: &LindbladModel, dt: f64, order: u32) -> Result<KrausFamily> {
    check_dt(dt)?;
    let (ops, tag) = match order {
        1 => (lucao1_operators(m, dt), FamilyTag::LuCao1),
        2 => (order2_operators(m, dt), FamilyTag::LuCao2),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "Kraus family order must be 1 or 2, got {order}"
            )))
        }
    };
    Ok(KrausFamily {
        kraus: KrausOps::new(ops),
        dt,
        tag,
    })
}

pub fn apply_kraus(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != ch.dim() {
        return Err(Error::DimMismatch {
            expected: ch.dim(),
            found: rho.dim(),
        });
    }
    Ok(DensityMatrix::from_raw(ch.kraus.sandwich_sum(rho.as_matrix())))
}

/// Smallest trace accepted before renormalization.
const MIN_TRACE: f64 = 1e-14;

pub fn apply_lucao(f: &KrausFamily, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != f.dim() {
        return Err(Error::DimMismatch {
            expected: f.dim(),
            found: rho.dim(),
        });
    }
    let out = f.kraus.sandwich_sum(rho.as_matrix());
    let trace = out.trace().re;
    if !(trace > MIN_TRACE) {
        return Err(Error::DegenerateTrace { trace });
    }
    Ok(DensityMatrix::from_raw(out.scale_real(1.0 / trace)))
}

/// Explicit Taylor step of order 1 or 2.
pub fn step_euler(m: &LindbladModel, dt: f64, order: u32, rho: &CMatrix) -> Result<CMatrix> {
    check_state_dim(m, rho)?;
    let l1 = accumulate_lindbladian(m, rho, 1.0, None);
    let mut out = rho.clone();
    out.axpy_real(dt, &l1);
    match order {
        1 => {}
        2 => {
            let l2 = accumulate_lindbladian(m, &l1, 1.0, None);
            out.axpy_real(dt * dt / 2.0, &l2);
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "Euler order must be 1 or 2, got {order}"
            )))
        }
    }
    Ok(out)
}

/// Classical four-stage Runge–Kutta. The last stage is accumulated straight
/// into the partial sum `ρ + dt/6 (k1 + 2k2 + 2k3)`.
pub fn step_rk4(m: &LindbladModel, dt: f64, rho: &CMatrix) -> Result<CMatrix> {
    check_state_dim(m, rho)?;
    let k1 = accumulate_lindbladian(m, rho, 1.0, None);
    let mut y = rho.clone();
    y.axpy_real(dt / 2.0, &k1);
    let k2 = accumulate_lindbladian(m, &y, 1.0, None);
    let mut y = rho.clone();
    y.axpy_real(dt / 2.0, &k2);
    let k3 = accumulate_lindbladian(m, &y, 1.0, None);
    let mut y = rho.clone();
    y.axpy_real(dt, &k3);

    let mut partial = rho.clone();
    partial.axpy_real(dt / 6.0, &k1);
    partial.axpy_real(dt / 3.0, &k2);
    partial.axpy_real(dt / 3.0, &k3);
    Ok(accumulate_lindbladian(m, &y, dt / 6.0, Some(partial)))
}

#[derive(Debug, Clone)]
enum Kernel {
    Explicit,
    Channel(KrausChannel),
    Family(KrausFamily),
}

/// A scheme bound to a model and a step size, with Kraus operators prebuilt.
#[derive(Debug, Clone)]
pub struct Stepper {
    tag: SchemeTag,
    model: LindbladModel,
    dt: f64,
    kernel: Kernel,
}

impl Stepper {
    pub fn new(tag: SchemeTag, model: LindbladModel, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let kernel = match tag {
            SchemeTag::Euler1 | SchemeTag::Euler2 | SchemeTag::Rk4 => Kernel::Explicit,
            SchemeTag::LuCao1 => Kernel::Family(build_lucao(&model, dt, 1)?),
            SchemeTag::LuCao2 => Kernel::Family(build_lucao(&model, dt, 2)?),
            SchemeTag::Qc1 => Kernel::Channel(build_qc1(&model, dt)?),
            SchemeTag::Qc2 => Kernel::Channel(build_qc2(&model, dt)?),
        };
        Ok(Stepper {
            tag,
            model,
            dt,
            kernel,
        })
    }

    pub fn tag(&self) -> SchemeTag {
        self.tag
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn model(&self) -> &LindbladModel {
        &self.model
    }

    pub fn channel(&self) -> Option<&KrausChannel> {
        match &self.kernel {
            Kernel::Channel(c) => Some(c),
            _ => None,
        }
    }

    pub fn family(&self) -> Option<&KrausFamily> {
        match &self.kernel {
            Kernel::Family(f) => Some(f),
            _ => None,
        }
    }

    /// One step of size `dt`.
    pub fn step(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let m = &self.model;
        let mat = rho.as_matrix();
        match (&self.kernel, self.tag) {
            (Kernel::Channel(ch), _) => apply_kraus(ch, rho),
            (Kernel::Family(f), _) => apply_lucao(f, rho),
            (Kernel::Explicit, SchemeTag::Euler1) => {
                step_euler(m, self.dt, 1, mat).map(DensityMatrix::from_raw)
            }
            (Kernel::Explicit, SchemeTag::Euler2) => {
                step_euler(m, self.dt, 2, mat).map(DensityMatrix::from_raw)
            }
            (Kernel::Explicit, _) => step_rk4(m, self.dt, mat).map(DensityMatrix::from_raw),
        }
    }
}

fn diverged(rho: &DensityMatrix) -> bool {
    let norm = rho.as_matrix().frobenius_norm();
    !(norm <= BLOWUP_NORM)
}

/// Runs `n_steps` steps, recording the state every `record_every` steps and
/// at the end. A run whose Frobenius norm exceeds [`BLOWUP_NORM`] (or turns
/// non-finite) stops early and comes back with `blowup_flag` set.
pub fn integrate(
    s: &Stepper,
    rho0: &DensityMatrix,
    n_steps: usize,
    record_every: usize,
) -> Result<Trajectory> {
    if rho0.dim() != s.model.dim() {
        return Err(Error::DimMismatch {
            expected: s.model.dim(),
            found: rho0.dim(),
        });
    }
    if record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be positive".into()));
    }
    let start = Instant::now();
    let mut times = vec![0.0];
    let mut states = vec![rho0.clone()];
    let mut rho = rho0.clone();
    let mut blowup = false;
    for k in 1..=n_steps {
        rho = s.step(&rho)?;
        if diverged(&rho) {
            blowup = true;
            break;
        }
        if k % record_every == 0 || k == n_steps {
            times.push(step_time(k, s.dt));
            states.push(rho.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        blowup_flag: blowup,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Time reached after `k` steps of size `dt`. Shared by the schemes and the
/// reference grid so both land on bit-identical sample times.
pub fn step_time(k: usize, dt: f64) -> f64 {
    k as f64 * dt
}
