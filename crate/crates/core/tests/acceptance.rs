//! Acceptance suite. Each test checks one criterion at its stated tolerance
//! and prints a single `criterion N [PASS|FAIL]` line before asserting.
//!
//! Replications default to 2000 per cell; set `RDSS_ACCEPTANCE_R` (for
//! example to 50000) for a full-scale run. Binomial tolerances follow R.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdss_core::diss::{calibration_table, diss_m, population_h_rot};
use rdss_core::inference::{cv_from_fit, flci_from_fit, folded_normal_cv, ContinuityFit};
use rdss_core::local_randomization::{permutation_test, PermutationConfig, WindowData};
use rdss_core::regression::{local_poly_fit, se_of_linear_functional};
use rdss_core::simulation::{
    generate_dataset, run_cell, run_cell_with_threads, CellOutput, CellSpec, Dgp, MeanFunction,
    RunningVariable, M_BAR_TARGETS,
};
use rdss_core::{affine_transform, bandwidth, Kernel, RdSample, Side};

const SEED: u64 = 1;

fn replications() -> usize {
    std::env::var("RDSS_ACCEPTANCE_R")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(2000)
}

fn report(id: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id} [{tag}] {detail}");
}

/// RV2 / mu2 cells at every target DISS, computed once per test binary.
fn rv2_mu2_cells() -> &'static [CellOutput] {
    static CELLS: OnceLock<Vec<CellOutput>> = OnceLock::new();
    CELLS.get_or_init(|| {
        let r = replications();
        M_BAR_TARGETS
            .iter()
            .map(|&m| run_cell(&CellSpec::new(RunningVariable::Rv2, MeanFunction::Mu2, m, r, SEED)).unwrap())
            .collect()
    })
}

fn cell(m_bar: f64) -> &'static CellOutput {
    rv2_mu2_cells().iter().find(|c| c.spec.m_bar == m_bar).unwrap()
}

fn binomial_slack(p: f64, r: usize) -> f64 {
    3.0 * (p * (1.0 - p) / r as f64).sqrt()
}

#[test]
fn criterion_1_table_one_sample_sizes_and_bandwidths() {
    let expected: [(RunningVariable, [usize; 5], [f64; 5]); 3] = [
        (RunningVariable::Rv1, [40, 101, 140, 256, 354], [0.124, 0.103, 0.097, 0.086, 0.080]),
        (RunningVariable::Rv2, [56, 140, 194, 354, 490], [0.072, 0.060, 0.056, 0.050, 0.046]),
        (RunningVariable::Rv3, [140, 354, 494, 905, 1254], [0.034, 0.028, 0.026, 0.023, 0.022]),
    ];
    let start = Instant::now();
    let mut n_mismatch = Vec::new();
    let mut h_mismatch = Vec::new();
    for (rv, ns, hs) in &expected {
        let beta = rv.beta();
        let rows = calibration_table(&beta, &M_BAR_TARGETS).unwrap();
        for (k, row) in rows.iter().enumerate() {
            if row.n != ns[k] {
                n_mismatch.push(format!("{}@{}: {} vs {}", rv.label(), row.target, row.n, ns[k]));
            }
            let h = population_h_rot(beta.sigma_star(), ns[k]);
            let rounded = (h * 1000.0).round() / 1000.0;
            if (rounded - hs[k]).abs() > 0.0005 {
                h_mismatch.push(format!("{}@{}: {rounded} vs {}", rv.label(), row.target, hs[k]));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = n_mismatch.is_empty() && h_mismatch.is_empty() && elapsed < 1.0;
    report(
        1,
        pass,
        &format!(
            "n mismatches {}/15 [{}]; h_ROT mismatches {}/15; {elapsed:.3}s",
            n_mismatch.len(),
            n_mismatch.join(", "),
            h_mismatch.len()
        ),
    );
    assert!(h_mismatch.is_empty(), "h_ROT mismatches: {h_mismatch:?}");
    assert!(elapsed < 1.0);
    assert!(n_mismatch.is_empty(), "n mismatches: {n_mismatch:?}");
}

/// Left limit at the cutoff by two-point linear extrapolation.
fn left_limit(mu: MeanFunction) -> f64 {
    let e = 1e-9;
    2.0 * mu.eval_unchecked(-e) - mu.eval_unchecked(-2.0 * e)
}

#[test]
fn criterion_2_mean_functions() {
    let mut problems = Vec::new();
    for mu in MeanFunction::ALL {
        let jump = mu.eval(0.0).unwrap() - left_limit(mu);
        if (jump - 0.1).abs() > 1e-9 {
            problems.push(format!("{mu} jump {jump}"));
        }
    }
    let m1 = MeanFunction::Mu1.max_abs_second_derivative();
    let m2 = MeanFunction::Mu2.max_abs_second_derivative();
    let m3 = MeanFunction::Mu3.max_abs_second_derivative();
    if (m1 - 2.0).abs() > 1e-12 {
        problems.push(format!("mu1 max|mu''| {m1}"));
    }
    if (m2 - 233.26).abs() > 0.01 {
        problems.push(format!("mu2 max|mu''| {m2}"));
    }
    if (m3 - 9.8).abs() > 1e-9 {
        problems.push(format!("mu3 max|mu''| {m3}"));
    }

    let step = 1e-4;
    let mut worst: f64 = 0.0;
    for mu in MeanFunction::ALL {
        let knots = mu.breakpoints();
        for k in 1..20_000 {
            let x = -1.0 + k as f64 * step;
            if x + step > 1.0 || knots.iter().any(|&b| (x - b).abs() <= 2.0 * step) {
                continue;
            }
            let f = |t: f64| mu.eval_unchecked(t);
            let fd = (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step);
            let exact = mu.second_derivative(x);
            worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
        }
    }
    if worst > 1e-4 {
        problems.push(format!("finite-difference error {worst:.2e}"));
    }
    report(
        2,
        problems.is_empty(),
        &format!(
            "max|mu''| = {m1}, {m2:.4}, {m3} (mu3 quoted bound {} differs from the analytic 9.8); worst FD rel err {worst:.1e} {}",
            MeanFunction::Mu3.curvature_bound_paper(),
            problems.join("; ")
        ),
    );
    assert!(problems.is_empty(), "{problems:?}");
}

#[test]
fn criterion_3_success_rates() {
    let r = replications();
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    let at_least = |c: &CellOutput, method: &str, target: f64, failures: &mut Vec<String>| {
        let rate = c.result(method).unwrap().interval_success_rate;
        let floor = target - binomial_slack(target, r);
        if rate < floor {
            failures.push(format!("{method}@{}: {rate:.4} < {floor:.4}", c.spec.m_bar));
        }
        rate
    };
    let c10 = cell(10.0);
    for m in ["IK/CV", "IK/RBC"] {
        let rate = at_least(c10, m, 0.96, &mut failures);
        lines.push(format!("{m}@10={rate:.4}"));
    }
    for c in rv2_mu2_cells().iter().filter(|c| c.spec.m_bar >= 27.0) {
        for res in c.results.iter().filter(|res| !res.method.starts_with("LR")) {
            at_least(c, &res.method, 0.99, &mut failures);
        }
        let min = c
            .results
            .iter()
            .filter(|res| !res.method.starts_with("LR"))
            .map(|res| res.interval_success_rate)
            .fold(1.0, f64::min);
        lines.push(format!("min continuity@{}={min:.4}", c.spec.m_bar));
    }
    for c in rv2_mu2_cells() {
        let rate = c.result("LR5").unwrap().interval_success_rate;
        if rate < 1.0 {
            failures.push(format!("LR5@{}: {rate:.4}", c.spec.m_bar));
        }
    }
    lines.push("LR5 all cells = 1".into());
    report(3, failures.is_empty(), &format!("{} {}", lines.join(", "), failures.join("; ")));
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn criterion_4_bandwidth_ordering() {
    let mut failures = Vec::new();
    let bw = |c: &CellOutput, m: &str| c.result(m).unwrap().median_bw;
    for c in rv2_mu2_cells() {
        let (ik, ak) = (bw(c, "IK/CV"), bw(c, "AK/CV"));
        if ik <= ak {
            failures.push(format!("IK {ik:.4} <= AK {ak:.4} at {}", c.spec.m_bar));
        }
    }
    let (lr10, ak10) = (bw(cell(10.0), "LR5"), bw(cell(10.0), "AK/CV"));
    let (lr57, ik57) = (bw(cell(57.0), "LR5"), bw(cell(57.0), "IK/CV"));
    if lr10 <= ak10 {
        failures.push(format!("LR5 {lr10:.4} <= AK {ak10:.4} at 10"));
    }
    if lr57 >= ik57 {
        failures.push(format!("LR5 {lr57:.4} >= IK {ik57:.4} at 57"));
    }
    report(
        4,
        failures.is_empty(),
        &format!("LR5@10 {lr10:.4} vs AK {ak10:.4}; LR5@57 {lr57:.4} vs IK {ik57:.4} {}", failures.join("; ")),
    );
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn criterion_5_operating_characteristics() {
    let c = cell(27.0);
    let get = |m: &str| c.result(m).unwrap();
    let mut failures = Vec::new();
    let ik_cv = get("IK/CV");
    let ak_flci = get("AK/FLCI");
    if ik_cv.coverage >= 0.95 {
        failures.push(format!("IK/CV coverage {:.3}", ik_cv.coverage));
    }
    if ak_flci.coverage < 0.93 {
        failures.push(format!("AK/FLCI coverage {:.3}", ak_flci.coverage));
    }
    if ak_flci.median_width <= ik_cv.median_width {
        failures.push("AK/FLCI width not above IK/CV".into());
    }
    for sel in ["IK", "AK"] {
        let (rbc, cv) = (get(&format!("{sel}/RBC")), get(&format!("{sel}/CV")));
        if rbc.median_width <= cv.median_width {
            failures.push(format!("{sel}/RBC width {:.3} <= CV {:.3}", rbc.median_width, cv.median_width));
        }
    }
    let lr = cell(10.0).result("LR5").unwrap();
    if (lr.coverage - 0.53).abs() > 0.07 {
        failures.push(format!("LR5@10 coverage {:.3} outside 0.53 +/- 0.07", lr.coverage));
    }
    if (lr.median_width - 0.33).abs() > 0.05 {
        failures.push(format!("LR5@10 width {:.3} outside 0.33 +/- 0.05", lr.median_width));
    }
    report(
        5,
        failures.is_empty(),
        &format!(
            "IK/CV cov {:.3} w {:.3}; AK/FLCI cov {:.3} w {:.3}; LR5@10 cov {:.3} w {:.3} {}",
            ik_cv.coverage,
            ik_cv.median_width,
            ak_flci.coverage,
            ak_flci.median_width,
            lr.coverage,
            lr.median_width,
            failures.join("; ")
        ),
    );
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn criterion_6_large_sample_consistency() {
    let mut spec = CellSpec::new(RunningVariable::Rv1, MeanFunction::Mu1, 10.0, 200, SEED)
        .with_methods(vec!["IK/CV".parse().unwrap()]);
    spec.n = Some(20_000);
    let out = run_cell(&spec).unwrap();
    let res = out.result("IK/CV").unwrap();
    let band = 3.0 * res.mcse.coverage;
    let pass = res.bias.abs() <= 0.005 && (res.coverage - 0.95).abs() <= band;
    report(
        6,
        pass,
        &format!("bias {:+.5}, coverage {:.3} (band +/- {band:.3}), r {}", res.bias, res.coverage, res.r_common),
    );
    assert!(pass);
}

/// Dense normal-equations oracle: builds X'WX and X'Wy by explicit loops
/// and solves by Gaussian elimination with partial pivoting.
fn normal_equations_intercept(u: &[f64], y: &[f64], w: &[f64], degree: usize) -> f64 {
    let p = degree + 1;
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..u.len() {
        for r in 0..p {
            for c in 0..p {
                a[r][c] += w[i] * u[i].powi((r + c) as i32);
            }
            a[r][p] += w[i] * u[i].powi(r as i32) * y[i];
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for row in col + 1..p {
            let f = a[row][col] / a[col][col];
            for k in col..=p {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for row in (0..p).rev() {
        let s: f64 = (row + 1..p).map(|k| a[row][k] * beta[k]).sum();
        beta[row] = (a[row][p] - s) / a[row][row];
    }
    beta[0]
}

#[test]
fn criterion_7_oracle_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failures = Vec::new();

    // local polynomial fits against the dense oracle
    let mut worst_fit: f64 = 0.0;
    for design in 0..100 {
        let n = rng.random_range(20..80);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin() + rng.random_range(-0.3..0.3)).collect();
        let s = RdSample::new(x, y, 0.0).unwrap();
        let degree = 1 + design % 2;
        let h = rng.random_range(0.5..1.5);
        let kernel = [Kernel::Triangular, Kernel::Uniform, Kernel::Epanechnikov][design % 3];
        let side = if design % 4 < 2 { Side::Below } else { Side::Above };
        let Ok(fit) = local_poly_fit(&s, side, degree, h, kernel) else {
            failures.push(format!("design {design} failed to fit"));
            continue;
        };
        let (mut u, mut yy, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..s.len() {
            let ui = s.x()[i] / h;
            if s.side_of(i) == side && kernel.weight(ui) > 0.0 {
                u.push(ui);
                yy.push(s.y()[i]);
                w.push(kernel.weight(ui));
            }
        }
        let oracle = normal_equations_intercept(&u, &yy, &w, degree);
        let err = (fit.fitted_at_cutoff - oracle).abs() / oracle.abs().max(1.0);
        worst_fit = worst_fit.max(err);
    }
    if worst_fit > 1e-9 {
        failures.push(format!("fit error {worst_fit:.2e}"));
    }

    // exact versus Monte Carlo permutation p-values
    let mut worst_perm: f64 = 0.0;
    for k in 0..100u64 {
        let n_c = rng.random_range(3..8);
        let n_t = rng.random_range(3..8);
        let effect = rng.random_range(-0.5..0.5);
        let control: Vec<f64> = (0..n_c).map(|_| rng.random_range(0.0..1.0)).collect();
        let treated: Vec<f64> = (0..n_t).map(|_| effect + rng.random_range(0.0..1.0)).collect();
        let data = WindowData::new(control, treated).unwrap();
        let exact = permutation_test(&data, 0.0, &PermutationConfig::default()).unwrap();
        let mc_config = PermutationConfig {
            max_exact: 0,
            n_mc: 999,
            seed: 1000 + k,
        };
        let mc = permutation_test(&data, 0.0, &mc_config).unwrap();
        let p = exact.p_value;
        let slack = 3.0 * (p * (1.0 - p) / 999.0).sqrt();
        let diff = (mc.p_value - p).abs();
        worst_perm = worst_perm.max(if diff == 0.0 { 0.0 } else { diff / slack });
    }
    if worst_perm > 1.0 {
        failures.push(format!("permutation discrepancy {worst_perm:.2} slack units"));
    }

    // standard error against a plain loop
    let mut worst_se: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..300);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut acc = 0.0;
        for i in 0..n {
            acc += w[i] * w[i] * s2[i];
        }
        let got = se_of_linear_functional(&w, &s2).unwrap();
        worst_se = worst_se.max((got - acc.sqrt()).abs() / acc.sqrt().max(1e-300));
    }
    if worst_se > 1e-12 {
        failures.push(format!("se error {worst_se:.2e}"));
    }
    report(
        7,
        failures.is_empty(),
        &format!(
            "fit rel err {worst_fit:.1e}; perm worst {worst_perm:.2} of slack; se rel err {worst_se:.1e} {}",
            failures.join("; ")
        ),
    );
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn criterion_8_determinism_across_thread_counts() {
    let spec = CellSpec::new(RunningVariable::Rv2, MeanFunction::Mu2, 27.0, 60, 7);
    let render = |out: &CellOutput| {
        let mut s = serde_json::to_string(out).unwrap();
        s.push_str(&serde_json::to_string(&out.records).unwrap());
        s
    };
    let one = render(&run_cell_with_threads(&spec, Some(1)).unwrap());
    let four = render(&run_cell_with_threads(&spec, Some(4)).unwrap());
    let pass = one == four;
    report(8, pass, &format!("1 vs 4 threads, {} bytes", one.len()));
    assert!(pass);
}

#[test]
fn criterion_9_invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();

    let dgp = Dgp::new(RunningVariable::Rv2, MeanFunction::Mu2);
    let base = generate_dataset(&dgp, 300, &mut rng).unwrap();
    let m0 = diss_m(&base).unwrap().m;
    for _ in 0..50 {
        let a = rng.random_range(0.01..100.0);
        let b = rng.random_range(-50.0..50.0);
        let m = diss_m(&affine_transform(&base, a, b).unwrap()).unwrap().m;
        if m != m0 {
            failures.push(format!("diss {m} vs {m0} at a={a}, b={b}"));
        }
    }

    let mut checked = 0;
    for _ in 0..50 {
        let s = generate_dataset(&dgp, 200, &mut rng).unwrap();
        let Some(h) = bandwidth::ik_bandwidth(&s, Kernel::Triangular).value() else { continue };
        let Ok(fit) = ContinuityFit::new(&s, h, Kernel::Triangular) else { continue };
        let Ok(bound) = bandwidth::estimate_m_hat(&s) else { continue };
        let (Ok(cv), Ok(flci)) = (cv_from_fit(&fit, 0.05), flci_from_fit(&s, &fit, 0.05, bound)) else {
            continue;
        };
        checked += 1;
        if flci.ci_lower > cv.ci_lower || flci.ci_upper < cv.ci_upper {
            failures.push(format!("FLCI [{}, {}] misses CV [{}, {}]", flci.ci_lower, flci.ci_upper, cv.ci_lower, cv.ci_upper));
        }
    }
    if checked < 40 {
        failures.push(format!("only {checked} fits succeeded"));
    }

    let cv0 = folded_normal_cv(0.0, 0.05).unwrap().cv;
    if (cv0 - 1.959964).abs() > 1e-6 {
        failures.push(format!("cv(0) = {cv0}"));
    }
    report(
        9,
        failures.is_empty(),
        &format!("diss m={m0} over 50 transforms; FLCI contains CV on {checked} fits; cv(0)={cv0:.7} {}", failures.join("; ")),
    );
    assert!(failures.is_empty(), "{failures:?}");
}
