//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Built with `harness = false` so the lines are always printed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use newtonspec::assembly::{assemble_mass, assemble_stiffness, default_quadrature_order, weak_residual_lr_x};
use newtonspec::eigensolve::{smallest_eigenpairs, EigenOptions, SolverMethod};
use newtonspec::immersion::{GeometrySample, SurfaceSpec};
use newtonspec::mesh::generate;
use newtonspec::newton::{hypersurface_oracle_matrix, identity_defects, newton_tensor};
use newtonspec::verify::{check_theorem, report_to_json, VerificationReport, VerifyConfig, LEMMA_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Spec = SurfaceSpec<f64>;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

fn in_range(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn run(spec: &Spec, r: usize, level: usize) -> (VerificationReport, Duration) {
    let start = Instant::now();
    let report = check_theorem(
        spec,
        &VerifyConfig {
            r,
            level,
            ..VerifyConfig::default()
        },
    )
    .unwrap_or_else(|e| panic!("{spec} r={r} level {level}: {e}"));
    (report, start.elapsed())
}

fn sphere2() -> Spec {
    SurfaceSpec::sphere(2, 1.0).unwrap()
}

fn sphere3() -> Spec {
    SurfaceSpec::sphere(3, 1.0).unwrap()
}

fn ellipsoid2() -> Spec {
    SurfaceSpec::ellipsoid(&[1.0, 1.0, 1.5]).unwrap()
}

fn ellipsoid3() -> Spec {
    SurfaceSpec::ellipsoid(&[1.0, 1.0, 1.0, 1.3]).unwrap()
}

fn clifford() -> Spec {
    let a = 0.5f64.sqrt();
    SurfaceSpec::clifford_torus(a, a).unwrap()
}

fn flat_torus() -> Spec {
    SurfaceSpec::flat_torus(1.0, 1.0).unwrap()
}

fn criterion_1(report: &VerificationReport, elapsed: Duration) -> Outcome {
    let lambda1 = report.eigenvalues[0];
    let cluster = report.clusters[0].len();
    let ratio = report.thm1.slack_ratio;
    let pass = report.mesh.vertices == 2562
        && within(lambda1, 2.0, 0.01)
        && cluster == 3
        && in_range(ratio, 0.98, 1.00)
        && elapsed < Duration::from_secs(10);
    Outcome::new(
        pass,
        format!(
            "S2 level 4 ({} vertices): lambda_1 = {lambda1:.8} (x{cluster}), thm1 ratio {ratio:.6}, {:.2} s",
            report.mesh.vertices,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(report: &VerificationReport, elapsed: Duration) -> Outcome {
    let lambda1 = report.eigenvalues[0];
    let ratio = report.thm1.slack_ratio;
    let pass = report.mesh.elements >= 8192
        && within(lambda1, 3.0, 0.03)
        && in_range(ratio, 0.97, 1.00)
        && elapsed < Duration::from_secs(180);
    Outcome::new(
        pass,
        format!(
            "S3 r=2 level 3 ({} tets): lambda_1 = {lambda1:.8}, thm1 ratio {ratio:.6}, {:.2} s",
            report.mesh.elements,
            elapsed.as_secs_f64()
        ),
    )
}

/// Nonzero generalized eigenvalues of `(K, diag(m))` by a dense symmetric solve.
fn dense_oracle(k: &DMatrix<f64>, m: &[f64], count: usize) -> Vec<f64> {
    let scale: Vec<f64> = m.iter().map(|x| 1.0 / x.sqrt()).collect();
    let c = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| scale[i] * k[(i, j)] * scale[j]);
    let mut values: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values[1..=count].to_vec()
}

fn criterion_3(levels: &[(usize, VerificationReport)]) -> Outcome {
    let ratios: Vec<f64> = levels.iter().map(|(_, rep)| rep.thm1.slack_ratio).collect();
    let strict = levels.iter().all(|(_, rep)| rep.thm1.pass && rep.thm1.slack_ratio < 1.0);
    let changes: Vec<f64> = ratios.windows(2).map(|w| ((w[1] - w[0]) / w[0]).abs()).collect();
    let stable = changes.iter().all(|&c| c < 0.01);

    let spec = ellipsoid2();
    let mesh = generate(&spec, 2).unwrap();
    let k = assemble_stiffness(&mesh, 0, default_quadrature_order(0)).unwrap();
    let m = assemble_mass(&mesh, true).unwrap();
    let count = 6;
    let mut opts = EigenOptions::with_k(count);
    opts.method = SolverMethod::Lobpcg;
    let iterative = smallest_eigenpairs(&k, &m, &opts).unwrap();
    let oracle = dense_oracle(&k.to_dense(), &m.diagonal(), count);
    let worst = iterative
        .eigenvalues
        .iter()
        .zip(&oracle)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);

    Outcome::new(
        strict && stable && worst <= 1e-8,
        format!(
            "ellipsoid(1,1,1.5) thm1 ratios {ratios:.6?} (changes {:?}), level-2 {} vs dense rel {worst:.2e}",
            changes.iter().map(|c| format!("{c:.2e}")).collect::<Vec<_>>(),
            iterative.solver_name
        ),
    )
}

fn criterion_4(report: &VerificationReport) -> Outcome {
    let checks = [&report.thm1, &report.thm2, &report.cor1];
    let pass = report.ellipticity_min > 0.0
        && checks.iter().all(|c| c.pass && c.slack_ratio <= 1.01)
        && report.cor2.pass
        && report.cor2.lhs < report.cor2.rhs;
    Outcome::new(
        pass,
        format!(
            "ellipsoid(1,1,1,1.3) r=2 level 3: ellipticity {:.4}, ratios thm1 {:.4} thm2 {:.4} cor1 {:.4} cor2 {:.4}",
            report.ellipticity_min,
            report.thm1.slack_ratio,
            report.thm2.slack_ratio,
            report.cor1.slack_ratio,
            report.cor2.slack_ratio
        ),
    )
}

fn criterion_5(report: &VerificationReport) -> Outcome {
    let (l1, l2) = (report.eigenvalues[0], report.eigenvalues[1]);
    let (t1, t2) = (report.thm1.slack_ratio, report.thm2.slack_ratio);
    let pass = report.level >= 4
        && report.c == 1
        && within(l1, 2.0, 0.02)
        && within(l2, 2.0, 0.02)
        && in_range(t2, 0.98, 1.00)
        && within(t1, 1.0, 0.02);
    Outcome::new(
        pass,
        format!("Clifford torus level {}: lambda_1,2 = {l1:.10}, {l2:.10}, thm2 ratio {t2:.12}, thm1 ratio {t1:.12}", report.level),
    )
}

fn criterion_6(report: &VerificationReport) -> Outcome {
    let lambda1 = report.eigenvalues[0];
    let ratio = report.thm1.slack_ratio;
    Outcome::new(
        within(lambda1, 1.0, 0.01) && in_range(ratio, 0.97, 1.01),
        format!("flat torus level {}: lambda_1 = {lambda1:.12}, thm1 ratio {ratio:.12}", report.level),
    )
}

fn random_forms(rng: &mut ChaCha8Rng, n: usize, codim: usize) -> Vec<DMatrix<f64>> {
    (0..codim)
        .map(|_| {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            (&a + a.transpose()) * 0.5
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut trace, mut contraction) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=4);
        let codim = rng.gen_range(1..=3);
        let r = 2 * rng.gen_range(0..=(n - 1) / 2);
        let sample = GeometrySample::from_components(random_forms(&mut rng, n, codim));
        let nd = newton_tensor(&sample, r).unwrap();
        let d = identity_defects(&sample, &nd).unwrap();
        trace = trace.max(d.trace);
        contraction = contraction.max(d.contraction);
    }
    let mut oracle_gap = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=4);
        let r = 2 * rng.gen_range(0..=(n - 1) / 2);
        let forms = random_forms(&mut rng, n, 1);
        let expect = hypersurface_oracle_matrix(&forms[0], r);
        let got = newton_tensor(&GeometrySample::from_components(forms), r).unwrap().t_r;
        oracle_gap = oracle_gap.max((got - expect).amax());
    }
    Outcome::new(
        trace <= 1e-10 && contraction <= 1e-10 && oracle_gap <= 1e-12,
        format!("trace defect {trace:.2e}, contraction defect {contraction:.2e}, T^r vs recursion {oracle_gap:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let cases: Vec<(Spec, usize, Vec<usize>)> = vec![
        (sphere2(), 0, vec![2, 3, 4, 5]),
        (ellipsoid2(), 0, vec![2, 3, 4, 5]),
        (sphere3(), 0, vec![1, 2, 3, 4]),
        (sphere3(), 2, vec![1, 2, 3, 4]),
        (ellipsoid3(), 0, vec![1, 2, 3, 4]),
        (ellipsoid3(), 2, vec![1, 2, 3, 4]),
        (flat_torus(), 0, vec![0, 1, 2, 3]),
        (SurfaceSpec::flat_torus(1.0, 0.5).unwrap(), 0, vec![0, 1, 2, 3]),
        (clifford(), 0, vec![0, 1, 2, 3]),
        (SurfaceSpec::clifford_torus(0.6, 0.8).unwrap(), 0, vec![0, 1, 2, 3]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (spec, r, levels) in cases {
        let residuals: Vec<_> = levels
            .iter()
            .map(|&level| {
                let mesh = generate(&spec, level).unwrap();
                weak_residual_lr_x(&mesh, r, default_quadrature_order(r), true).unwrap()
            })
            .collect();
        let roundoff = residuals.iter().all(|w| w.relative <= 1e-12);
        let totals: Vec<f64> = residuals.iter().map(|w| w.total).collect();
        let monotone = totals.windows(2).all(|w| w[1] < w[0]);
        let last = totals.len() - 1;
        let order = (totals[last - 1] / totals[last]).log2();
        let ok = roundoff || (monotone && order >= 1.0);
        pass &= ok;
        if roundoff {
            let worst = residuals.iter().map(|w| w.relative).fold(0.0, f64::max);
            parts.push(format!("{spec} r={r} roundoff {worst:.1e}"));
        } else {
            parts.push(format!(
                "{spec} r={r} {}order {order:.3}",
                if monotone { "" } else { "NOT MONOTONE " }
            ));
        }
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_9(reports: &[&VerificationReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for report in reports {
        let lemma = &report.lemma;
        let ok = lemma.trials == 100
            && lemma.worst_rayleigh_violation <= LEMMA_TOL
            && lemma.worst_delta_violation <= LEMMA_TOL
            && lemma.delta_star_minimizes;
        pass &= ok;
        parts.push(format!(
            "{} r={} {}",
            report.surface,
            report.r,
            if ok { "ok" } else { "VIOLATED" }
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_10() -> Outcome {
    let cases = [(ellipsoid2(), 0, 3), (ellipsoid3(), 2, 2), (clifford(), 0, 2)];
    let mut pass = true;
    for (spec, r, level) in &cases {
        let mut outputs = Vec::new();
        for threads in [1, 4, 1, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            outputs.push(pool.install(|| report_to_json(&run(spec, *r, *level).0)));
        }
        pass &= outputs.windows(2).all(|w| w[0] == w[1]);
    }
    Outcome::new(
        pass,
        format!("{} surfaces x (1, 4, 1, 4) threads, byte-compared", cases.len()),
    )
}

fn main() -> ExitCode {
    let mut outcomes: Vec<(usize, Outcome)> = Vec::new();

    let (c1, t1) = run(&sphere2(), 0, 4);
    outcomes.push((1, criterion_1(&c1, t1)));
    let (c2, t2) = run(&sphere3(), 2, 3);
    outcomes.push((2, criterion_2(&c2, t2)));
    let c3: Vec<(usize, VerificationReport)> = (3..=5).map(|l| (l, run(&ellipsoid2(), 0, l).0)).collect();
    outcomes.push((3, criterion_3(&c3)));
    let c4 = run(&ellipsoid3(), 2, 3).0;
    outcomes.push((4, criterion_4(&c4)));
    let c5 = run(&clifford(), 0, 4).0;
    outcomes.push((5, criterion_5(&c5)));
    let c6 = run(&flat_torus(), 0, 3).0;
    outcomes.push((6, criterion_6(&c6)));
    outcomes.push((7, criterion_7()));
    outcomes.push((8, criterion_8()));

    let extra = [
        run(&sphere3(), 0, 2).0,
        run(&SurfaceSpec::flat_torus(1.0, 0.5).unwrap(), 0, 2).0,
        run(&SurfaceSpec::clifford_torus(0.6, 0.8).unwrap(), 0, 2).0,
    ];
    let mut lemma_reports = vec![&c1, &c2, &c3[2].1, &c4, &c5, &c6];
    lemma_reports.extend(extra.iter());
    outcomes.push((9, criterion_9(&lemma_reports)));
    outcomes.push((10, criterion_10()));

    let mut failed = 0;
    for (id, outcome) in &outcomes {
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2}: {tag}  {}", outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
