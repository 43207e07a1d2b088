//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL` line to
//! stderr (uncaptured) before asserting.

use std::io::Write;
use std::time::Instant;

use qchannel::analysis::{
    cfl_threshold, error_curve, error_point, estimate_order, log_sweep, opcount,
    required_sample_times, ERR_HI, ERR_LO,
};
use qchannel::cli::{build_experiment, experiment_model, BenchmarkConfig, Experiment};
use qchannel::fock::{truncated_power_loss, FockDim};
use qchannel::lindblad::exact_channel;
use qchannel::matcore::{op_tally, trace_norm};
use qchannel::reference::{solve_reference, AdaptiveConfig};
use qchannel::schemes::{build_qc1, build_qc2};
use qchannel::{build_model, integrate, CMatrix, DensityMatrix, LindbladModel, SchemeTag, Stepper, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id}: {verdict} - {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn experiment(exp: Experiment, dim: usize) -> (LindbladModel, DensityMatrix, f64) {
    build_experiment(&BenchmarkConfig::preset(exp), dim).unwrap()
}

#[test]
fn criterion_1_cptp_completeness() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for exp in [Experiment::CatPrep, Experiment::ZGate] {
        for dim in [8, 32, 128] {
            let m = experiment_model(&BenchmarkConfig::preset(exp), dim).unwrap();
            for dt in [1e-4, 1e-2, 1e-1] {
                for ch in [build_qc1(&m, dt).unwrap(), build_qc2(&m, dt).unwrap()] {
                    let r = ch.completeness_residual();
                    let scaled = r / dim as f64;
                    worst = worst.max(scaled);
                    pass &= r <= 1e-11 * dim as f64;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    report(1, pass, &format!("max residual/dim {worst:.2e}, {secs:.1} s"));
    assert!(pass);
}

#[test]
fn criterion_2_structure_preservation() {
    let (m, rho0, _) = experiment(Experiment::CatPrep, 32);
    let stepper = Stepper::new(SchemeTag::Qc1, m, 1e-2).unwrap();
    let traj = integrate(&stepper, &rho0, 1000, 1).unwrap();
    let (mut tr, mut eig, mut herm): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for s in &traj.states {
        tr = tr.max((s.trace().re - 1.0).abs());
        eig = eig.min(s.min_eigenvalue().unwrap());
        herm = herm.max(s.hermiticity_residual());
    }
    let pass = traj.states.len() == 1001 && !traj.blowup_flag && tr <= 1e-10 && eig >= -1e-9 && herm <= 1e-10;
    report(
        2,
        pass,
        &format!("trace dev {tr:.1e}, min eig {eig:.1e}, herm {herm:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_convergence_orders() {
    let (m, rho0, t_final) = experiment(Experiment::CatPrep, 32);
    assert_eq!(t_final, 1.0);
    let dts = log_sweep(t_final / 5.0, t_final / 1e5, 40);
    let threshold = cfl_threshold(2, 31).unwrap();
    let euler_dts: Vec<f64> = dts.iter().copied().filter(|&dt| dt < threshold).collect();
    let reference = solve_reference(
        &m,
        &rho0,
        &required_sample_times(t_final, &dts),
        &AdaptiveConfig::with_tolerances(1e-12, 1e-12),
    )
    .unwrap();
    let slope = |tag, dts: &[f64]| {
        let curve = error_curve(&m, tag, &rho0, t_final, dts, &reference, "cat_prep").unwrap();
        estimate_order(&curve, ERR_LO, ERR_HI).unwrap()
    };
    let qc1 = slope(SchemeTag::Qc1, &dts);
    let qc2 = slope(SchemeTag::Qc2, &dts);
    let euler = slope(SchemeTag::Euler1, &euler_dts);
    let pass = (0.85..=1.15).contains(&qc1) && (1.8..=2.2).contains(&qc2) && (0.85..=1.15).contains(&euler);
    report(3, pass, &format!("slopes qc1 {qc1:.3}, qc2 {qc2:.3}, euler1 {euler:.3}"));
    assert!(pass);
}

#[test]
fn criterion_4_cfl_dichotomy() {
    let mut pass = true;
    let mut details = Vec::new();
    for (dim, unstable, stable) in [(32, 3e-3, 1e-3), (64, 7.2e-4, 2.4e-4), (128, 1.75e-4, 5.9e-5)] {
        let threshold = cfl_threshold(2, dim - 1).unwrap();
        assert!(unstable > threshold && stable < threshold);
        let (m, rho0, t_final) = experiment(Experiment::CatPrep, dim);
        let reference = solve_reference(
            &m,
            &rho0,
            &required_sample_times(t_final, &[unstable, stable]),
            &AdaptiveConfig::with_tolerances(1e-10, 1e-10),
        )
        .unwrap();
        let bad = error_point(&m, SchemeTag::Euler1, &rho0, t_final, unstable, &reference).unwrap();
        let good = error_point(&m, SchemeTag::Euler1, &rho0, t_final, stable, &reference).unwrap();
        let ok = (bad.blowup || bad.sup_error > 1.0) && !good.blowup && good.sup_error < 1e-1;
        pass &= ok;
        details.push(format!(
            "dim {dim}: dt {unstable:.2e} -> {:.1e}, dt {stable:.2e} -> {:.1e}",
            bad.sup_error, good.sup_error
        ));
    }
    report(4, pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_5_large_step_robustness() {
    let mut pass = true;
    let mut details = Vec::new();
    for dim in [32, 64, 128] {
        let (m, rho0, t_final) = experiment(Experiment::ZGate, dim);
        let dt1 = t_final / 80.0;
        let dt2 = t_final / 19.0;
        let reference = solve_reference(
            &m,
            &rho0,
            &required_sample_times(t_final, &[dt1, dt2]),
            &AdaptiveConfig::with_tolerances(1e-12, 1e-12),
        )
        .unwrap();
        let p1 = error_point(&m, SchemeTag::Qc1, &rho0, t_final, dt1, &reference).unwrap();
        let p2 = error_point(&m, SchemeTag::Qc2, &rho0, t_final, dt2, &reference).unwrap();
        assert_eq!((p1.n_steps, p2.n_steps), (80, 19));
        pass &= p1.sup_error <= 1.5e-2 && p2.sup_error <= 1.5e-2;
        details.push(format!("dim {dim}: qc1 {:.2e}, qc2 {:.2e}", p1.sup_error, p2.sup_error));
    }
    report(5, pass, &details.join("; "));
    assert!(pass);
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

#[test]
fn criterion_6_local_error_ratios() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut pass = true;
    let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 4];
    let tags = [SchemeTag::Qc1, SchemeTag::LuCao1, SchemeTag::Qc2, SchemeTag::LuCao2];
    for _ in 0..5 {
        let h = random_matrix(&mut rng, 4).hermitian_part();
        let jumps = (0..2).map(|_| random_matrix(&mut rng, 4).scale_real(0.5)).collect();
        let m = build_model(h, jumps).unwrap();
        let x = random_matrix(&mut rng, 4);
        let p = &x * &x.dagger();
        let tr = p.trace().re;
        let rho = DensityMatrix::new(p.scale_real(1.0 / tr).hermitian_part()).unwrap();
        for (i, tag) in tags.into_iter().enumerate() {
            let local = |dt: f64| {
                let s = Stepper::new(tag, m.clone(), dt).unwrap();
                let got = s.step(&rho).unwrap();
                let want = exact_channel(&m, dt, &rho).unwrap();
                trace_norm(&(got.as_matrix() - want.as_matrix())).unwrap()
            };
            let (lo, hi) = if tag.order() == 1 { (3.5, 4.5) } else { (7.0, 9.0) };
            for dt in [1e-2, 5e-3, 2.5e-3] {
                let ratio = local(dt) / local(dt / 2.0);
                ranges[i].0 = ranges[i].0.min(ratio);
                ranges[i].1 = ranges[i].1.max(ratio);
                pass &= (lo..=hi).contains(&ratio);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 10.0;
    let detail = tags
        .iter()
        .zip(&ranges)
        .map(|(t, r)| format!("{t} [{:.2}, {:.2}]", r.0, r.1))
        .collect::<Vec<_>>()
        .join(", ");
    report(6, pass, &format!("{detail}, {secs:.1} s"));
    assert!(pass);
}

#[test]
fn criterion_7_steady_state_support() {
    let fd = FockDim::new(16).unwrap();
    let jump = truncated_power_loss(fd, 2, C64::new(0.0, 0.0)).unwrap();
    let m = build_model(CMatrix::zeros(16), vec![jump]).unwrap();
    let stepper = Stepper::new(SchemeTag::Qc1, m, 1e-2).unwrap();
    let traj = integrate(&stepper, &DensityMatrix::maximally_mixed(16), 5000, 5000).unwrap();
    let last = traj.final_state();
    assert!((traj.times.last().unwrap() - 50.0).abs() < 1e-9);
    let outside: f64 = (2..16).map(|k| last.population(k)).sum();
    let pass = outside <= 1e-6;
    report(7, pass, &format!("population outside span(|0>,|1>) {outside:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_8_operation_counts() {
    let mut pass = true;
    let mut mismatches = Vec::new();
    for n_d in [1usize, 2] {
        let fd = FockDim::new(6).unwrap();
        let mut jumps = vec![truncated_power_loss(fd, 2, C64::new(1.0, 0.0)).unwrap()];
        if n_d == 2 {
            jumps.push(truncated_power_loss(fd, 1, C64::new(0.0, 0.0)).unwrap());
        }
        let h = (&jumps[0] + &jumps[0].dagger()).scale_real(0.1);
        let m = build_model(h, jumps).unwrap();
        let rho = DensityMatrix::maximally_mixed(6);
        for tag in SchemeTag::ALL {
            let s = Stepper::new(tag, m.clone(), 1e-2).unwrap();
            let before = op_tally();
            s.step(&rho).unwrap();
            let used = op_tally() - before;
            let want = opcount(tag, n_d as u64);
            if used.matmuls != want.matrix_mults || used.adds != want.matrix_adds {
                pass = false;
                mismatches.push(format!(
                    "{tag} N_d={n_d}: measured ({}, {}) vs model ({}, {})",
                    used.matmuls, used.adds, want.matrix_mults, want.matrix_adds
                ));
            }
        }
    }
    let detail = if mismatches.is_empty() {
        "all schemes match at N_d in {1, 2}".to_string()
    } else {
        mismatches.join("; ")
    };
    report(8, pass, &detail);
    assert!(pass, "{detail}");
}
