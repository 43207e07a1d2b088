//! CFL thresholds, error sweeps against a reference trajectory, slope fits
//! and the per-step operation-count model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{DensityMatrix, LindbladModel};
use crate::matcore::trace_norm;
use crate::reference::Trajectory;
use crate::schemes::{integrate, step_time, SchemeTag, Stepper};

/// Step counts up to this many are sampled at every step; longer runs are
/// sampled at about this many uniformly spaced steps.
pub const MAX_SAMPLES: usize = 200;

/// Default slope-fit window.
pub const ERR_LO: f64 = 1e-8;
pub const ERR_HI: f64 = 1e-2;

/// Falling factorial `c_k = k (k−1) … (k−l+1)`; zero when `k < l`.
pub fn coefficient_c(l: usize, k: usize) -> f64 {
    (0..l).map(|j| k as f64 - j as f64).product::<f64>().max(0.0)
}

/// Largest explicit-Euler step that keeps the `|n><n|` mode of `l`-photon
/// loss from growing: `2 / c_n`.
pub fn cfl_threshold(l: usize, n: usize) -> Result<f64> {
    if l == 0 || n < l {
        return Err(Error::InvalidArgument(format!(
            "CFL threshold needs 1 <= l <= n, got l = {l}, n = {n}"
        )));
    }
    Ok(2.0 / coefficient_c(l, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub dt: f64,
    pub n_steps: usize,
    /// `+∞` for runs that blew up or failed.
    pub sup_error: f64,
    pub wall_time: f64,
    pub blowup: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub scheme: SchemeTag,
    pub dim: usize,
    pub model_id: String,
    /// Sorted by `dt`, largest first.
    pub points: Vec<ErrorPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub matrix_mults: u64,
    pub matrix_adds: u64,
}

/// `n_steps = round(T / dt)` (at least one).
pub fn steps_for(t_final: f64, dt: f64) -> usize {
    ((t_final / dt).round() as usize).max(1)
}

/// Record stride for a run of `n_steps` steps.
pub fn record_stride(n_steps: usize) -> usize {
    n_steps.div_ceil(MAX_SAMPLES).max(1)
}

/// Times at which a run of `n_steps` steps over `[0, T]` is compared with the
/// reference: every `record_stride` steps plus the final step.
pub fn sample_times(t_final: f64, n_steps: usize) -> Vec<f64> {
    let dt = t_final / n_steps as f64;
    let stride = record_stride(n_steps);
    let mut ks: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    if *ks.last().unwrap() != n_steps {
        ks.push(n_steps);
    }
    ks.into_iter().map(|k| step_time(k, dt)).collect()
}

/// Union of the sample grids of every `dt` in the sweep; the reference must
/// be computed on this grid.
pub fn required_sample_times(t_final: f64, dt_list: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = dt_list
        .iter()
        .flat_map(|&dt| sample_times(t_final, steps_for(t_final, dt)))
        .collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// `n` log-uniform values from `dt_max` down to `dt_min`.
pub fn log_sweep(dt_max: f64, dt_min: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![dt_max];
    }
    let (a, b) = (dt_max.ln(), dt_min.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// One sweep point: run `tag` with `dt` snapped to `T/n_steps` and take the
/// largest trace distance to the reference over the sample grid.
pub fn error_point(
    m: &LindbladModel,
    tag: SchemeTag,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
    reference: &Trajectory,
) -> Result<ErrorPoint> {
    let n_steps = steps_for(t_final, dt);
    let dt = t_final / n_steps as f64;
    for t in sample_times(t_final, n_steps) {
        if reference.find_time(t).is_none() {
            return Err(Error::GridMismatch { time: t });
        }
    }
    let start = Instant::now();
    let blown = |wall_time: f64| ErrorPoint {
        dt,
        n_steps,
        sup_error: f64::INFINITY,
        wall_time,
        blowup: true,
    };
    let stepper = match Stepper::new(tag, m.clone(), dt) {
        Ok(s) => s,
        Err(Error::NotPositiveDefinite { .. }) | Err(Error::Singular { .. }) => {
            return Ok(blown(start.elapsed().as_secs_f64()))
        }
        Err(e) => return Err(e),
    };
    let traj = match integrate(&stepper, rho0, n_steps, record_stride(n_steps)) {
        Ok(t) => t,
        Err(Error::DegenerateTrace { .. }) => return Ok(blown(start.elapsed().as_secs_f64())),
        Err(e) => return Err(e),
    };
    let wall_time = start.elapsed().as_secs_f64();
    if traj.blowup_flag {
        return Ok(blown(wall_time));
    }
    let mut sup_error: f64 = 0.0;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let reference_state = reference
            .state_at(*t)
            .ok_or(Error::GridMismatch { time: *t })?;
        let diff = (state.as_matrix() - reference_state.as_matrix()).hermitian_part();
        if !diff.is_finite() {
            return Ok(blown(wall_time));
        }
        sup_error = sup_error.max(trace_norm(&diff)?);
    }
    Ok(ErrorPoint {
        dt,
        n_steps,
        sup_error,
        wall_time,
        blowup: false,
    })
}

pub fn error_curve(
    m: &LindbladModel,
    tag: SchemeTag,
    rho0: &DensityMatrix,
    t_final: f64,
    dt_list: &[f64],
    reference: &Trajectory,
    model_id: &str,
) -> Result<ErrorCurve> {
    let mut points = dt_list
        .iter()
        .map(|&dt| error_point(m, tag, rho0, t_final, dt, reference))
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| b.dt.total_cmp(&a.dt));
    Ok(ErrorCurve {
        scheme: tag,
        dim: m.dim(),
        model_id: model_id.to_string(),
        points,
    })
}

/// Least-squares slope of `log(sup_error)` against `log(dt)` over the points
/// whose error lies in `[err_lo, err_hi]`.
pub fn estimate_order(curve: &ErrorCurve, err_lo: f64, err_hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| !p.blowup && p.sup_error >= err_lo && p.sup_error <= err_hi)
        .map(|p| (p.dt.ln(), p.sup_error.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientPoints {
            found: pts.len(),
            needed: 4,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Matrix products and additions per step, as functions of the number of
/// dissipators `N_d`.
pub fn opcount(tag: SchemeTag, n_dissipators: u64) -> OpCount {
    let nd = n_dissipators;
    let (matrix_mults, matrix_adds) = match tag {
        SchemeTag::Euler1 => (2 * nd + 2, nd + 3),
        SchemeTag::Euler2 => (4 * nd + 4, 2 * nd + 6),
        SchemeTag::LuCao1 | SchemeTag::Qc1 => (2 * nd + 2, nd),
        SchemeTag::LuCao2 | SchemeTag::Qc2 => (2 * nd * nd + 2 * nd + 2, 2 * nd * nd + 2 * nd),
        SchemeTag::Rk4 => (8 * nd + 8, 4 * nd + 14),
    };
    OpCount {
        matrix_mults,
        matrix_adds,
    }
}
