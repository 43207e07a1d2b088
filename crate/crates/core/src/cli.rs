//! Configuration-driven benchmark runner: builds the experiment models,
//! computes a reference per dimension, sweeps schemes over step sizes and
//! writes a CSV plus a metadata JSON.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{error_point, log_sweep, required_sample_times, ErrorPoint, MAX_SAMPLES};
use crate::error::{Error, Result};
use crate::fock::{annihilation, cat_state_plus, creation, truncated_power_loss, FockDim};
use crate::lindblad::{build_model, DensityMatrix, LindbladModel};
use crate::matcore::{CMatrix, C64};
use crate::reference::{solve_reference, AdaptiveConfig};
use crate::schemes::SchemeTag;

pub const CSV_HEADER: &str = "experiment,scheme,dim,dt,n_steps,sup_error,wall_time_s,blowup";

/// Environment variable capping the worker count (0 = one per core).
pub const THREADS_ENV: &str = "BENCH_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    CatPrep,
    ZGate,
    PhotonLossCfl,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::CatPrep => "cat_prep",
            Experiment::ZGate => "z_gate",
            Experiment::PhotonLossCfl => "photon_loss_cfl",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cat_prep" => Ok(Experiment::CatPrep),
            "z_gate" => Ok(Experiment::ZGate),
            "photon_loss_cfl" => Ok(Experiment::PhotonLossCfl),
            other => Err(Error::BadConfig(format!("unknown experiment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSweep {
    Range { dt_max: f64, dt_min: f64, count: usize },
    List(Vec<f64>),
}

impl DtSweep {
    pub fn values(&self) -> Vec<f64> {
        match self {
            DtSweep::Range { dt_max, dt_min, count } => log_sweep(*dt_max, *dt_min, *count),
            DtSweep::List(v) => v.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DtSweep::Range { dt_max, dt_min, count } => {
                if !(*dt_min > 0.0 && dt_max > dt_min) || *count < 2 {
                    return Err(Error::BadConfig(format!(
                        "dt sweep needs dt_max > dt_min > 0 and count >= 2, got ({dt_max}, {dt_min}, {count})"
                    )));
                }
            }
            DtSweep::List(v) => {
                if v.is_empty() || v.iter().any(|&dt| !(dt > 0.0 && dt.is_finite())) {
                    return Err(Error::BadConfig("dt list must be non-empty and positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub alpha: f64,
    pub epsilon_z: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub l: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha: 2.0,
            epsilon_z: 0.2,
            kappa1: 0.01,
            kappa2: 1.0,
            l: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceTolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ReferenceTolerances {
    fn default() -> Self {
        ReferenceTolerances {
            rtol: 1e-12,
            atol: 1e-12,
        }
    }
}

/// Initial state override. Only honoured by `photon_loss_cfl`; the other
/// experiments have a fixed initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    MaximallyMixed,
    Fock(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub experiment: Experiment,
    pub dims: Vec<usize>,
    pub schemes: Vec<SchemeTag>,
    pub dt_sweep: DtSweep,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub reference: ReferenceTolerances,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl BenchmarkConfig {
    /// The full parameter sweep for one experiment.
    pub fn preset(experiment: Experiment) -> Self {
        let params = ModelParams::default();
        let t_final = default_t_final(experiment, &params);
        let (dims, schemes, params) = match experiment {
            Experiment::PhotonLossCfl => (
                vec![32, 64, 128],
                vec![SchemeTag::Euler1, SchemeTag::Qc1],
                ModelParams { alpha: 0.0, ..params },
            ),
            _ => (vec![32, 64, 128], SchemeTag::ALL.to_vec(), params),
        };
        BenchmarkConfig {
            experiment,
            dims,
            schemes,
            dt_sweep: DtSweep::Range {
                dt_max: t_final / 5.0,
                dt_min: t_final / 1e5,
                count: 40,
            },
            t_final: None,
            params,
            reference: ReferenceTolerances::default(),
            output_dir: default_output_dir(),
            seed: 0,
            initial_state: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchmarkConfig =
            serde_json::from_str(text).map_err(|e| Error::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn final_time(&self) -> f64 {
        self.t_final
            .unwrap_or_else(|| default_t_final(self.experiment, &self.params))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::BadConfig("scheme list is empty".into()));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d < 2) {
            return Err(Error::BadConfig(format!(
                "dims must be non-empty and each at least 2, got {:?}",
                self.dims
            )));
        }
        self.dt_sweep.validate()?;
        let t = self.final_time();
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::BadConfig(format!("final time must be positive, got {t}")));
        }
        let p = &self.params;
        if !(p.kappa1 >= 0.0 && p.kappa2 >= 0.0 && p.alpha.is_finite() && p.epsilon_z.is_finite()) {
            return Err(Error::BadConfig(format!("invalid model parameters {p:?}")));
        }
        if self.reference.rtol <= 0.0 || self.reference.atol <= 0.0 {
            return Err(Error::BadConfig("reference tolerances must be positive".into()));
        }
        Ok(())
    }

    fn adaptive(&self) -> AdaptiveConfig {
        AdaptiveConfig::with_tolerances(self.reference.rtol, self.reference.atol)
    }
}

fn default_t_final(experiment: Experiment, p: &ModelParams) -> f64 {
    match experiment {
        Experiment::CatPrep | Experiment::PhotonLossCfl => 1.0,
        Experiment::ZGate => PI / (4.0 * p.alpha * p.epsilon_z),
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Lindblad model of `cfg.experiment` at truncation `dim`.
pub fn experiment_model(cfg: &BenchmarkConfig, dim: usize) -> Result<LindbladModel> {
    let fd = FockDim::new(dim).map_err(|e| Error::BadConfig(e.to_string()))?;
    let p = &cfg.params;
    let alpha_sq = real(p.alpha * p.alpha);
    match cfg.experiment {
        Experiment::CatPrep => {
            let jump = truncated_power_loss(fd, 2, alpha_sq)?;
            build_model(CMatrix::zeros(dim), vec![jump])
        }
        Experiment::ZGate => {
            let h = (&annihilation(fd) + &creation(fd)).scale_real(p.epsilon_z);
            let two_photon = truncated_power_loss(fd, 2, alpha_sq)?.scale_real(p.kappa2.sqrt());
            let one_photon = annihilation(fd).scale_real(p.kappa1.sqrt());
            build_model(h, vec![two_photon, one_photon])
        }
        Experiment::PhotonLossCfl => {
            let jump = truncated_power_loss(fd, p.l, real(0.0))
                .map_err(|e| Error::BadConfig(e.to_string()))?;
            build_model(CMatrix::zeros(dim), vec![jump])
        }
    }
}

fn initial_state(cfg: &BenchmarkConfig, dim: usize) -> Result<DensityMatrix> {
    match cfg.experiment {
        Experiment::CatPrep => Ok(DensityMatrix::fock(dim, 0)),
        Experiment::ZGate => {
            let fd = FockDim::new(dim).map_err(|e| Error::BadConfig(e.to_string()))?;
            let cat = cat_state_plus(fd, real(cfg.params.alpha))?;
            DensityMatrix::pure(&cat.state.amplitudes)
        }
        Experiment::PhotonLossCfl => match cfg.initial_state.unwrap_or(InitialState::MaximallyMixed) {
            InitialState::MaximallyMixed => Ok(DensityMatrix::maximally_mixed(dim)),
            InitialState::Fock(k) if k < dim => Ok(DensityMatrix::fock(dim, k)),
            InitialState::Fock(k) => Err(Error::BadConfig(format!("Fock state {k} outside dim {dim}"))),
        },
    }
}

/// Model, initial state and final time of `cfg.experiment` at truncation `dim`.
pub fn build_experiment(
    cfg: &BenchmarkConfig,
    dim: usize,
) -> Result<(LindbladModel, DensityMatrix, f64)> {
    let model = experiment_model(cfg, dim)?;
    let rho0 = initial_state(cfg, dim)?;
    Ok((model, rho0, cfg.final_time()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub experiment: Experiment,
    pub scheme: SchemeTag,
    pub dim: usize,
    pub point: ErrorPoint,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        let p = &self.point;
        format!(
            "{},{},{},{:.16e},{},{:.16e},{:.16e},{}",
            self.experiment, self.scheme, self.dim, p.dt, p.n_steps, p.sup_error, p.wall_time, p.blowup
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
    pub rows: Vec<BenchRow>,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    library: &'static str,
    version: &'static str,
    started_utc: String,
    config: &'a BenchmarkConfig,
    final_time: f64,
    dt_values: Vec<f64>,
    reference_solver: &'static str,
    reference_rtol: f64,
    reference_atol: f64,
    sample_grid: String,
    error_metric: &'static str,
    rows: usize,
    error: Option<String>,
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::BadConfig(format!("{THREADS_ENV} must be an integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::BadConfig(e.to_string()))
}

fn run_cells(cfg: &BenchmarkConfig, pool: &rayon::ThreadPool, rows: &mut Vec<BenchRow>) -> Result<()> {
    let dts = cfg.dt_sweep.values();
    for &dim in &cfg.dims {
        let (model, rho0, t_final) = build_experiment(cfg, dim)?;
        let samples = required_sample_times(t_final, &dts);
        let reference = solve_reference(&model, &rho0, &samples, &cfg.adaptive()).map_err(|e| {
            Error::InvalidState(format!("reference for {} at dim {dim} failed: {e}", cfg.experiment))
        })?;

        let cells: Vec<(SchemeTag, f64)> = cfg
            .schemes
            .iter()
            .flat_map(|&s| dts.iter().map(move |&dt| (s, dt)))
            .collect();
        let results: Vec<Result<BenchRow>> = pool.install(|| {
            cells
                .par_iter()
                .map(|&(scheme, dt)| {
                    error_point(&model, scheme, &rho0, t_final, dt, &reference).map(|point| BenchRow {
                        experiment: cfg.experiment,
                        scheme,
                        dim,
                        point,
                    })
                })
                .collect()
        });

        let mut dim_rows = Vec::with_capacity(results.len());
        let mut first_err = None;
        for (r, (scheme, dt)) in results.into_iter().zip(&cells) {
            match r {
                Ok(row) => dim_rows.push(row),
                Err(e) if first_err.is_none() => {
                    first_err = Some(Error::InvalidState(format!(
                        "{scheme} at dim {dim}, dt {dt:e} failed: {e}"
                    )))
                }
                Err(_) => {}
            }
        }
        let scheme_rank = |s: SchemeTag| cfg.schemes.iter().position(|&x| x == s).unwrap_or(usize::MAX);
        dim_rows.sort_by(|a, b| {
            scheme_rank(a.scheme)
                .cmp(&scheme_rank(b.scheme))
                .then(b.point.dt.total_cmp(&a.point.dt))
        });
        rows.extend(dim_rows);
        if let Some(e) = first_err {
            return Err(e);
        }
    }
    Ok(())
}

fn unique_stem(dir: &Path, experiment: Experiment, stamp: &str) -> String {
    let base = format!("{experiment}_{stamp}");
    let mut stem = base.clone();
    let mut k = 1;
    while dir.join(format!("{stem}.csv")).exists() {
        stem = format!("{base}_{k}");
        k += 1;
    }
    stem
}

/// Runs the whole sweep. Output files are written even when a cell fails;
/// the first failure is returned after writing.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let started = chrono::Utc::now();
    let pool = worker_pool()?;

    let mut rows = Vec::new();
    let outcome = run_cells(cfg, &pool, &mut rows);

    let stem = unique_stem(
        &cfg.output_dir,
        cfg.experiment,
        &started.format("%Y%m%dT%H%M%S%.3fZ").to_string(),
    );
    let csv_path = cfg.output_dir.join(format!("{stem}.csv"));
    let meta_path = cfg.output_dir.join(format!("{stem}.meta.json"));

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    fs::write(&csv_path, csv)?;

    let meta = RunMeta {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        started_utc: started.to_rfc3339(),
        config: cfg,
        final_time: cfg.final_time(),
        dt_values: cfg.dt_sweep.values(),
        reference_solver: "dormand-prince 5(4), adaptive",
        reference_rtol: cfg.reference.rtol,
        reference_atol: cfg.reference.atol,
        sample_grid: format!(
            "dt snapped to T/round(T/dt); every step when n_steps <= {MAX_SAMPLES}, \
             otherwise every ceil(n_steps/{MAX_SAMPLES}) steps plus the final step"
        ),
        error_metric: "max over sample times of the trace norm of (rho - rho_ref)",
        rows: rows.len(),
        error: outcome.as_ref().err().map(|e| e.to_string()),
    };
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;

    outcome.map(|()| RunOutput {
        csv_path,
        meta_path,
        rows,
    })
}

/// Parses a comma-separated list such as `32,64` or `qc1,euler1`.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| Error::BadConfig(format!("{p:?}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_gate_default_time() {
        let cfg = BenchmarkConfig::preset(Experiment::ZGate);
        assert!((cfg.final_time() - PI / 1.6).abs() < 1e-15);
        assert!((cfg.final_time() - 1.9635).abs() < 1e-4);
    }

    #[test]
    fn cat_prep_model_shape() {
        let cfg = BenchmarkConfig::preset(Experiment::CatPrep);
        let (m, rho0, t) = build_experiment(&cfg, 32).unwrap();
        assert_eq!(m.n_dissipators(), 1);
        assert_eq!(m.jumps()[0].dim(), 32);
        assert_eq!(rho0.population(0), 1.0);
        assert_eq!(t, 1.0);
        assert_eq!(m.hamiltonian().max_abs(), 0.0);
    }

    #[test]
    fn z_gate_rates_enter_as_square_roots() {
        let cfg = BenchmarkConfig::preset(Experiment::ZGate);
        let (m, rho0, _) = build_experiment(&cfg, 16).unwrap();
        let fd = FockDim::new(16).unwrap();
        let a = annihilation(fd);
        let two = (&a * &a).shift_diag(real(-4.0));
        assert!(m.jumps()[0].distance(&two) < 1e-13);
        assert!(m.jumps()[1].distance(&a.scale_real(0.1)) < 1e-15);
        let h = (&a + &a.dagger()).scale_real(0.2);
        assert!(m.hamiltonian().distance(&h) < 1e-15);
        assert!((rho0.trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn photon_loss_initial_states() {
        let mut cfg = BenchmarkConfig::preset(Experiment::PhotonLossCfl);
        let (_, rho0, _) = build_experiment(&cfg, 8).unwrap();
        assert!((rho0.population(7) - 0.125).abs() < 1e-15);
        cfg.initial_state = Some(InitialState::Fock(3));
        let (_, rho0, _) = build_experiment(&cfg, 8).unwrap();
        assert_eq!(rho0.population(3), 1.0);
        cfg.initial_state = Some(InitialState::Fock(9));
        assert!(matches!(build_experiment(&cfg, 8), Err(Error::BadConfig(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = BenchmarkConfig::preset(Experiment::CatPrep);
        cfg.schemes.clear();
        assert!(matches!(cfg.validate(), Err(Error::BadConfig(_))));

        let mut cfg = BenchmarkConfig::preset(Experiment::CatPrep);
        cfg.dims = vec![1];
        assert!(cfg.validate().is_err());
        cfg.dims = vec![4];
        cfg.dt_sweep = DtSweep::Range { dt_max: 1e-3, dt_min: 1e-2, count: 4 };
        assert!(cfg.validate().is_err());
        cfg.dt_sweep = DtSweep::Range { dt_max: 1e-2, dt_min: 1e-3, count: 1 };
        assert!(cfg.validate().is_err());
        cfg.dt_sweep = DtSweep::List(vec![]);
        assert!(cfg.validate().is_err());
        cfg.dt_sweep = DtSweep::List(vec![0.1, 0.05]);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{
            "experiment": "z_gate",
            "dims": [8],
            "schemes": ["qc1", "euler2"],
            "dt_sweep": {"dt_max": 0.1, "dt_min": 0.001, "count": 3},
            "T": 0.5,
            "params": {"kappa1": 0.0},
            "output_dir": "out"
        }"#;
        let cfg = BenchmarkConfig::from_json(text).unwrap();
        assert_eq!(cfg.experiment, Experiment::ZGate);
        assert_eq!(cfg.schemes, vec![SchemeTag::Qc1, SchemeTag::Euler2]);
        assert_eq!(cfg.final_time(), 0.5);
        assert_eq!(cfg.params.kappa1, 0.0);
        assert_eq!(cfg.params.alpha, 2.0);
        assert_eq!(cfg.dt_sweep.values().len(), 3);
        let back = BenchmarkConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let list = r#"{"experiment":"cat_prep","dims":[4],"schemes":["rk4"],"dt_sweep":[0.1,0.01]}"#;
        let cfg = BenchmarkConfig::from_json(list).unwrap();
        assert_eq!(cfg.dt_sweep, DtSweep::List(vec![0.1, 0.01]));
        assert!(BenchmarkConfig::from_json(r#"{"experiment":"nope"}"#).is_err());
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list::<usize>("32, 64").unwrap(), vec![32, 64]);
        assert_eq!(
            parse_list::<SchemeTag>("qc1,Lu-Cao 2").unwrap(),
            vec![SchemeTag::Qc1, SchemeTag::LuCao2]
        );
        assert!(parse_list::<SchemeTag>("qc9").is_err());
    }

    #[test]
    fn csv_row_format() {
        let row = BenchRow {
            experiment: Experiment::CatPrep,
            scheme: SchemeTag::Qc2,
            dim: 32,
            point: ErrorPoint {
                dt: 0.1,
                n_steps: 10,
                sup_error: f64::INFINITY,
                wall_time: 0.5,
                blowup: true,
            },
        };
        assert_eq!(
            row.to_csv(),
            "cat_prep,qc2,32,1.0000000000000001e-1,10,inf,5.0000000000000000e-1,true"
        );
        let dt: f64 = row.to_csv().split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(dt, 0.1);
    }
}
