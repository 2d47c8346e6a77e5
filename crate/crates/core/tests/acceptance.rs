//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line to
//! stdout (bypassing the harness capture) before asserting.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use kplane_core::checks::{adjointness_trials, exterior_suite, AdjointCase};
use kplane_core::currents::{pair, simplex_to_dirac, SimplexCurrent};
use kplane_core::exterior::{binomial, induced_map, symbol_constant};
use kplane_core::fields::{AnalyticForm, FormField, FormTerm, GridSpec, Monomial};
use kplane_core::format::write_field;
use kplane_core::multiplier::{apply_q, decay_check, multiplier_matrix, MultiplierSpec};
use kplane_core::pipeline::{
    boundedness_check, form_family, holder_check, invert, pair_via_projections, q_alpha, ExperimentConfig, Report,
};

fn verdict(criterion: u32, passed: bool, detail: &str) {
    let line = format!("criterion {criterion}: {} {detail}\n", if passed { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).expect("valid acceptance config")
}

/// Unnormalized n-d DFT, one axis at a time, straight from rustfft.
fn dft(data: &[Complex64], shape: &[usize]) -> Vec<Complex64> {
    let mut out = data.to_vec();
    let mut planner = FftPlanner::new();
    let total: usize = shape.iter().product();
    let mut stride = 1;
    for &len in shape.iter().rev() {
        let fft = planner.plan_fft_forward(len);
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        for start in 0..total {
            if (start / stride) % len != 0 {
                continue;
            }
            for (j, l) in line.iter_mut().enumerate() {
                *l = out[start + j * stride];
            }
            fft.process(&mut line);
            for (j, l) in line.iter().enumerate() {
                out[start + j * stride] = *l;
            }
        }
        stride *= len;
    }
    out
}

#[test]
fn criterion_1_discrete_fourier_identity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (n, k, m) in [(2, 1, 0), (3, 2, 1), (4, 2, 1), (4, 3, 2)] {
        let npts = 32;
        let grid = GridSpec::new(n, 2.0, npts).unwrap();
        let c = binomial(n, m);
        let data: Vec<f64> = (0..grid.sites() * c).map(|_| rng.gen::<f64>() - 0.5).collect();
        let field = FormField::new(grid, m, data).unwrap();
        let spec = MultiplierSpec::new(n, k, m).unwrap().with_padding(1);
        let out = apply_q(&field, &spec).unwrap();
        let shape = vec![npts; n];
        let channel = |f: &FormField, comp: usize| {
            let buf: Vec<Complex64> = (0..grid.sites()).map(|s| Complex64::new(f.site(s)[comp], 0.0)).collect();
            dft(&buf, &shape)
        };
        let fin: Vec<Vec<Complex64>> = (0..c).map(|i| channel(&field, i)).collect();
        let fout: Vec<Vec<Complex64>> = (0..c).map(|i| channel(&out, i)).collect();
        let period = 2.0 * grid.half_width;
        let scale = fin.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        let mut xi = vec![0.0; n];
        let mut err: f64 = 0.0;
        let mut norm: f64 = 0.0;
        for site in 0..grid.sites() {
            let mut rest = site;
            let mut nyquist = Vec::new();
            for axis in (0..n).rev() {
                let j = rest % npts;
                rest /= npts;
                let signed = if j < npts / 2 { j as f64 } else { j as f64 - npts as f64 };
                xi[axis] = signed / period;
                if j == npts / 2 {
                    nyquist.push(axis);
                }
            }
            // real data force the ±Nyquist aliases to share one symbol: their mean
            let mut mult = DMatrix::<f64>::zeros(c, c);
            let flips = 1usize << nyquist.len();
            for mask in 0..flips {
                let mut x = xi.clone();
                for (b, &axis) in nyquist.iter().enumerate() {
                    if (mask >> b) & 1 == 1 {
                        x[axis] = -x[axis];
                    }
                }
                mult += multiplier_matrix(&x, &spec).unwrap().matrix();
            }
            mult /= flips as f64;
            norm = norm.max(mult.amax());
            for row in 0..c {
                let expected: Complex64 = (0..c).map(|col| fin[col][site] * mult[(row, col)]).sum();
                err = err.max((fout[row][site] - expected).norm());
            }
        }
        worst = worst.max(err / (scale * norm));
    }
    let elapsed = start.elapsed();
    let passed = worst <= 1e-9 && elapsed < Duration::from_secs(10);
    verdict(1, passed, &format!("max relative bin error {worst:.2e}, {:.1}s", elapsed.as_secs_f64()));
    assert!(passed);
}

#[test]
fn criterion_2_line_transform_inversion() {
    let start = Instant::now();
    let cfg = config(
        r#"{"n": 2, "k": 1, "m": 0,
            "grid": {"half_width": 4.0, "points_per_axis": 128, "perp_points": 257, "padding": 4},
            "planes": {"mode": "fixed", "count": 360}}"#,
    );
    let constant = symbol_constant(2, 1, 0).unwrap();
    let inv = invert(&cfg.build_form().unwrap(), &cfg).unwrap();
    let elapsed = start.elapsed();
    let passed = (constant - PI).abs() < 1e-14 && inv.rel_l2_error <= 0.03 && elapsed < Duration::from_secs(60);
    verdict(
        2,
        passed,
        &format!("h = {constant:.15}, relative L2 error {:.4}, {:.1}s", inv.rel_l2_error, elapsed.as_secs_f64()),
    );
    assert!(passed);
}

fn vector_config(count: usize) -> ExperimentConfig {
    config(&format!(
        r#"{{"n": 3, "k": 2, "m": 1,
            "grid": {{"half_width": 1.25, "points_per_axis": 48, "plane_half_width": 2.5,
                      "plane_points_per_axis": 96, "perp_points": 65, "perp_half_width": 3.0, "padding": 2}},
            "planes": {{"mode": "haar", "count": {count}, "seed": 0}},
            "form": {{"kind": "gaussian", "index": [0]}}}}"#
    ))
}

#[test]
fn criterion_3_vector_inversion() {
    let start = Instant::now();
    let cfg = vector_config(500);
    let alpha = cfg.build_form().unwrap();
    let base = invert(&alpha, &cfg).unwrap().rel_l2_error;
    let doubled = invert(&alpha, &vector_config(1000)).unwrap().rel_l2_error;
    let elapsed = start.elapsed();
    let passed = base <= 0.10 && doubled < base && elapsed < Duration::from_secs(900);
    verdict(
        3,
        passed,
        &format!("relative L2 error {base:.4} (500 planes), {doubled:.4} (1000 planes), {:.0}s", elapsed.as_secs_f64()),
    );
    assert!(passed);
}

#[test]
fn criterion_4_current_pairing() {
    let start = Instant::now();
    let cfg = config(
        r#"{"n": 3, "k": 2, "m": 1,
            "grid": {"half_width": 2.0, "points_per_axis": 48, "perp_points": 129, "perp_half_width": 4.0, "padding": 2},
            "planes": {"mode": "haar", "count": 400, "seed": 4}}"#,
    );
    let alpha = AnalyticForm::new(
        3,
        1,
        vec![FormTerm { index: vec![1], poly: vec![Monomial { coeff: 1.0, powers: vec![1, 0, 0] }], width: 1.0 }],
    )
    .unwrap();
    let circle = simplex_to_dirac(&SimplexCurrent::circle(3, 1.0, 512, [0, 1], &[0.0; 3]).unwrap(), 2).unwrap();
    // on the unit circle x₀ dx₁ = cos²t dt and e^{−π|x|²} = e^{−π}
    let curve = PI * (-PI).exp();
    let direct = pair(&circle, &alpha).unwrap();
    let r = pair_via_projections(&circle, &alpha, &cfg).unwrap();
    let tol = (3.0 * r.std_error).max(0.05 * curve.abs());
    let elapsed = start.elapsed();
    let passed = (direct - curve).abs() < 1e-4
        && (r.truth - direct).abs() < 1e-15
        && (r.estimate - curve).abs() <= tol
        && elapsed < Duration::from_secs(900);
    verdict(
        4,
        passed,
        &format!(
            "estimate {:.5} ± {:.5}, direct {direct:.5}, curve {curve:.5}, {:.0}s",
            r.estimate,
            r.std_error,
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_5_adjointness() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (n, k, m) in [(2, 1, 0), (3, 1, 0), (3, 2, 0), (3, 2, 1), (4, 2, 1)] {
        let case = AdjointCase::standard(n, k, m);
        let gap = adjointness_trials(&case, 5, 17)
            .unwrap()
            .iter()
            .map(|t| t.relative_gap)
            .fold(0.0, f64::max);
        lines.push(format!("({n},{k},{m}) {gap:.1e}"));
        worst = worst.max(gap);
    }
    let elapsed = start.elapsed();
    let passed = worst <= 0.02 && elapsed < Duration::from_secs(300);
    verdict(5, passed, &format!("max gap {worst:.2e} [{}], {:.0}s", lines.join(", "), elapsed.as_secs_f64()));
    assert!(passed);
}

/// `det A[rows, cols]` by Laplace expansion.
fn minor(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    let mut total = 0.0;
    for (j, &c) in cols.iter().enumerate() {
        let rest: Vec<usize> = cols.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, v)| *v).collect();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * a[(rows[0], c)] * minor(a, &rows[1..], &rest);
    }
    total
}

fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in subsets(n, m - 1) {
            if rest.first().is_none_or(|r| *r > first) {
                let mut s = vec![first];
                s.extend(rest);
                out.push(s);
            }
        }
    }
    out
}

#[test]
fn criterion_6_exterior_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut minor_err: f64 = 0.0;
    for n in 1..=5 {
        for m in 0..=n {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let induced = induced_map(&a, m).unwrap();
            let basis = subsets(n, m);
            for (i, rows) in basis.iter().enumerate() {
                for (j, cols) in basis.iter().enumerate() {
                    minor_err = minor_err.max((induced.matrix()[(i, j)] - minor(&a, rows, cols)).abs());
                }
            }
        }
    }
    let suites = exterior_suite(5, 4, 6).unwrap();
    let elapsed = start.elapsed();
    let passed = minor_err <= 1e-10 && suites.iter().all(|s| s.passed) && elapsed < Duration::from_secs(5);
    let detail: Vec<String> = suites.iter().map(|s| format!("{} {:.1e}/{}", s.name, s.max_error, s.checks)).collect();
    verdict(
        6,
        passed,
        &format!("minors {minor_err:.1e}, {}, {:.2}s", detail.join(", "), elapsed.as_secs_f64()),
    );
    assert!(passed);
}

#[test]
fn criterion_7_decay_and_holder() {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    // decay of 𝒬α: the bounded ratio |𝒬α|⟨x⟩ⁿ under grid doubling
    for (n, k, m) in [(2, 1, 0), (3, 2, 1)] {
        let base = if n == 2 { 64 } else { 24 };
        let maxima: Vec<f64> = [base, 2 * base]
            .iter()
            .map(|&pts| {
                let cfg = config(&format!(
                    r#"{{"n": {n}, "k": {k}, "m": {m},
                        "grid": {{"half_width": 4.0, "points_per_axis": {pts}, "perp_points": 9, "padding": 2}},
                        "planes": {{"mode": "haar", "count": 1}}}}"#
                ));
                let q = q_alpha(&cfg.build_form().unwrap(), &cfg).unwrap();
                decay_check(&q, 0.5).unwrap().max_ratio
            })
            .collect();
        let drift = (maxima[1] - maxima[0]).abs() / maxima[0];
        ok &= maxima.iter().all(|v| v.is_finite()) && drift <= 0.2;
        notes.push(format!("decay ({n},{k},{m}) drift {drift:.3}"));
    }

    // Hölder continuity in the plane
    for (n, k, m, pts) in [(2, 1, 0, 64), (3, 2, 1, 32)] {
        let cfg = config(&format!(
            r#"{{"n": {n}, "k": {k}, "m": {m},
                "grid": {{"half_width": 3.0, "points_per_axis": {pts}, "perp_points": 97, "perp_half_width": 6.0, "padding": 2}},
                "planes": {{"mode": "haar", "count": 1, "seed": 3}},
                "holder": {{"theta": 0.5, "pairs": 200, "probes": 4}}}}"#
        ));
        let r = holder_check(&cfg.build_form().unwrap(), &cfg, 0.5).unwrap();
        let monotone = r.by_theta[2].1 >= r.by_theta[0].1;
        ok &= r.passed && monotone;
        notes.push(format!("holder ({n},{k},{m}) drift {:.3} max {:.3e}", r.drift, r.max_ratio_doubled));
    }

    // boundedness of ℛ*ℛ from L² to Ḣ^{n−k}
    let cfg = config(
        r#"{"n": 2, "k": 1, "m": 0,
            "grid": {"half_width": 4.0, "points_per_axis": 64, "perp_points": 129, "padding": 2},
            "planes": {"mode": "fixed", "count": 180, "seed": 5}}"#,
    );
    let family = form_family(2, 0, 10, 5).unwrap();
    let b = boundedness_check(&family, &cfg).unwrap();
    ok &= b.passed;
    notes.push(format!("bounds sup {:.4} refinement {:.3} dilation {:.3}", b.sup, b.max_refinement_gap, b.dilation_gap));

    let elapsed = start.elapsed();
    let passed = ok && elapsed < Duration::from_secs(600);
    verdict(7, passed, &format!("{}, {:.0}s", notes.join("; "), elapsed.as_secs_f64()));
    assert!(passed);
}

fn reproducible_run(cfg: &ExperimentConfig) -> (String, Vec<u8>) {
    let alpha = cfg.build_form().unwrap();
    let inv = invert(&alpha, cfg).unwrap();
    let holder = holder_check(&alpha, cfg, 0.5).unwrap();
    let results = serde_json::json!({ "rel_l2_error": inv.rel_l2_error, "holder": holder });
    let mut report = Report::new("acceptance", Some(cfg), results, None, std::time::SystemTime::now()).unwrap();
    report.timestamps = kplane_core::pipeline::Timestamps { started_unix: 0.0, finished_unix: 0.0, elapsed_seconds: 0.0 };
    let mut bytes = Vec::new();
    write_field(&mut bytes, &inv.reconstruction).unwrap();
    (report.to_json().unwrap(), bytes)
}

#[test]
fn criterion_8_reproducibility() {
    let cfg = config(
        r#"{"n": 3, "k": 2, "m": 1,
            "grid": {"half_width": 2.0, "points_per_axis": 16, "perp_points": 33, "padding": 2},
            "planes": {"mode": "haar", "count": 40, "seed": 8},
            "holder": {"pairs": 20, "probes": 2}}"#,
    );
    let first = reproducible_run(&cfg);
    let second = reproducible_run(&cfg);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let threaded = pool.install(|| reproducible_run(&cfg));
    let passed = first == second && first == threaded;
    verdict(8, passed, &format!("report {} bytes, field {} bytes, identical across runs and thread counts", first.0.len(), first.1.len()));
    assert!(passed);
}
