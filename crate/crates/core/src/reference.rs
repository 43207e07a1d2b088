//! Adaptive Dormand–Prince 5(4) integration of `ρ' = L(ρ)`, used as the
//! ground truth for every error measurement.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::lindblad::{accumulate_lindbladian, DensityMatrix, LindbladModel};
use crate::matcore::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdaptiveConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub safety: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            rtol: 1e-12,
            atol: 1e-12,
            dt_init: 1e-4,
            dt_min: 1e-14,
            safety: 0.9,
            max_steps: 50_000_000,
        }
    }
}

impl AdaptiveConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        AdaptiveConfig {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol > 0.0
            && self.dt_min > 0.0
            && self.dt_init > 0.0
            && self.safety > 0.0
            && self.safety < 1.0
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid adaptive config {self:?}")))
        }
    }
}

/// Time-stamped states from a stepper or the reference solver.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub blowup_flag: bool,
    /// Seconds.
    pub wall_time: f64,
}

impl Trajectory {
    /// Index of the sample at `t`, matched up to a relative `1e-12`.
    pub fn find_time(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * t.abs().max(1.0);
        let idx = self.times.partition_point(|&s| s < t - tol);
        (idx < self.times.len() && (self.times[idx] - t).abs() <= tol).then_some(idx)
    }

    pub fn state_at(&self, t: f64) -> Option<&DensityMatrix> {
        self.find_time(t).map(|i| &self.states[i])
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const FACTOR_MIN: f64 = 0.2;
const FACTOR_MAX: f64 = 5.0;

/// `y + h Σ a_i k_i`, with the linear combination done in one pass.
fn combine(y: &CMatrix, h: f64, terms: &[(f64, &CMatrix)]) -> CMatrix {
    let n = y.dim();
    let mut data: Vec<_> = y.as_slice().to_vec();
    for &(a, k) in terms {
        let c = h * a;
        for (d, &v) in data.iter_mut().zip(k.as_slice()) {
            *d += v * c;
        }
    }
    CMatrix::from_row_major(n, data).unwrap_or_else(|_| CMatrix::zeros(n).scale_real(f64::NAN))
}

fn rhs(m: &LindbladModel, y: &CMatrix) -> CMatrix {
    accumulate_lindbladian(m, y, 1.0, None)
}

/// Mixed elementwise error norm `max |Δ| / (atol + rtol·max(|y_old|, |y_new|))`.
fn error_norm(err: &CMatrix, y_old: &CMatrix, y_new: &CMatrix, cfg: &AdaptiveConfig) -> f64 {
    err.as_slice()
        .iter()
        .zip(y_old.as_slice().iter().zip(y_new.as_slice()))
        .map(|(e, (a, b))| e.norm() / (cfg.atol + cfg.rtol * a.norm().max(b.norm())))
        .fold(0.0, f64::max)
}

/// Integrates from `t = 0` and emits the state at every requested sample time,
/// shortening steps so each sample is hit exactly.
pub fn solve_reference(
    m: &LindbladModel,
    rho0: &DensityMatrix,
    sample_times: &[f64],
    cfg: &AdaptiveConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if rho0.dim() != m.dim() {
        return Err(Error::DimMismatch {
            expected: m.dim(),
            found: rho0.dim(),
        });
    }
    if sample_times.first().is_some_and(|&t| t < 0.0)
        || sample_times.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::InvalidArgument(
            "sample times must be non-negative and strictly ascending".into(),
        ));
    }

    let start = Instant::now();
    let mut times = Vec::with_capacity(sample_times.len());
    let mut states = Vec::with_capacity(sample_times.len());

    let mut t = 0.0;
    let mut y = rho0.as_matrix().clone();
    let mut k1 = rhs(m, &y);
    let mut h = cfg.dt_init;
    let mut steps = 0usize;

    for &target in sample_times {
        while t < target {
            let remaining = target - t;
            // Land exactly on the sample when the proposed step reaches it.
            let hitting = h >= remaining * (1.0 - 1e-12);
            let step = if hitting { remaining } else { h };
            if step < cfg.dt_min && !hitting {
                return Err(Error::StepUnderflow { t, dt: step });
            }
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::MaxStepsExceeded {
                    max_steps: cfg.max_steps,
                    t,
                });
            }

            let y2 = combine(&y, step, &[(A21, &k1)]);
            let k2 = rhs(m, &y2);
            let y3 = combine(&y, step, &[(A31, &k1), (A32, &k2)]);
            let k3 = rhs(m, &y3);
            let y4 = combine(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            let k4 = rhs(m, &y4);
            let y5 = combine(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            let k5 = rhs(m, &y5);
            let y6 = combine(
                &y,
                step,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            );
            let k6 = rhs(m, &y6);
            let y_new = combine(
                &y,
                step,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let k7 = rhs(m, &y_new);
            let err = combine(
                &CMatrix::zeros(y.dim()),
                step,
                &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
            );
            let err_norm = error_norm(&err, &y, &y_new, cfg);
            if !err_norm.is_finite() {
                h = step * FACTOR_MIN;
                if h < cfg.dt_min {
                    return Err(Error::StepUnderflow { t, dt: h });
                }
                continue;
            }

            let factor = if err_norm == 0.0 {
                FACTOR_MAX
            } else {
                (cfg.safety * err_norm.powf(-0.2)).clamp(FACTOR_MIN, FACTOR_MAX)
            };
            if err_norm <= 1.0 {
                t = if hitting { target } else { t + step };
                y = y_new;
                k1 = k7;
                // A step truncated to hit a sample keeps the controller's
                // proposal instead of shrinking it.
                h = if hitting { h.max(step * factor) } else { step * factor };
            } else {
                h = step * factor.min(1.0);
                if h < cfg.dt_min {
                    return Err(Error::StepUnderflow { t, dt: h });
                }
            }
        }
        let state = y.hermitian_part();
        let tr = state.trace().re;
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "reference trace drifted to {tr} at t = {target}"
            )));
        }
        times.push(target);
        states.push(DensityMatrix::from_raw(state));
    }

    Ok(Trajectory {
        times,
        states,
        blowup_flag: false,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
