//! Integral quantities of the eigenvalue bounds, the bound checks themselves, convergence
//! studies and report I/O.

mod report;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_mass, assemble_stiffness, coordinate_fields, default_quadrature_order, weak_residual_with,
};
use crate::eigensolve::{smallest_eigenpairs, EigenOptions, SpectralResult};
use crate::error::{Error, Result};
use crate::immersion::{sample_geometry, SurfaceKind, SurfacePoint, SurfaceSpec};
use crate::linalg::SparseSymMatrix;
use crate::mesh::{generate_with_base, quadrature, SimplicialMesh, DEFAULT_TORUS_BASE};
use crate::newton::{identity_defects, mean_curvature, newton_tensor};
use crate::scalar::{binomial, Real};

pub use report::{
    emit_report, parse_report, report_to_csv, report_to_json, to_fixed_json, InequalityCheck, MeshCounts,
    ReportFormat, ResidualSummary, SolverSummary, Timings, VerificationReport, SCHEMA,
};

/// Integrals entering the bounds, accumulated by quadrature on the flat elements with the
/// integrands evaluated at the corresponding surface points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralBundle {
    pub vol: f64,
    pub int_h_r: f64,
    pub int_hnext2_plus_c_hr2: f64,
    pub int_s_r: f64,
    pub int_h2_plus_c: f64,
    /// `(n - r) C(n, r)`.
    pub c_r: f64,
}

/// Pointwise quantities gathered alongside the integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointwiseSummary {
    pub ellipticity_min: f64,
    pub trace_max_abs: f64,
    pub contraction_max_abs: f64,
}

pub fn c_r(n: usize, r: usize) -> u64 {
    (n - r) as u64 * binomial(n, r)
}

/// Integrals and pointwise identity defects over the mesh. Fails with `NotElliptic` if `T^r`
/// loses positivity at a quadrature point.
pub fn integrate<T: Real>(
    mesh: &SimplicialMesh<T>,
    r: usize,
    quadrature_order: usize,
) -> Result<(IntegralBundle, PointwiseSummary)> {
    let n = mesh.dim();
    let c = T::lit(f64::from(mesh.surface().ambient().curvature()));
    let rule = quadrature::<T>(quadrature_order, n)?;

    struct Partial<T> {
        sums: [T; 5],
        margin: (T, Vec<T>),
        trace: T,
        contraction: T,
    }

    let partials: Vec<Partial<T>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let measure = mesh.element_measure(e)?;
            let mut sums = [T::zero(); 5];
            let mut margin = (T::max_value().expect("bounded float"), Vec::new());
            let mut trace = T::zero();
            let mut contraction = T::zero();
            for (point, weight) in rule.points.iter().zip(&rule.weights) {
                let sample = mesh.sample(e, point)?;
                let nd = newton_tensor(&sample, r)?;
                let h2 = mean_curvature(&sample).norm_squared();
                let w = *weight * measure;
                sums[0] += w;
                sums[1] += w * nd.h_r;
                sums[2] += w * (nd.h_next_norm2 + c * nd.h_r * nd.h_r);
                sums[3] += w * nd.s_r;
                sums[4] += w * (h2 + c);
                if nd.ellipticity_margin < margin.0 {
                    margin = (nd.ellipticity_margin, sample.position.as_slice().to_vec());
                }
                let defects = identity_defects(&sample, &nd)?;
                trace = trace.max(defects.trace);
                contraction = contraction.max(defects.contraction);
            }
            Ok(Partial {
                sums,
                margin,
                trace,
                contraction,
            })
        })
        .collect::<Result<_>>()?;

    let mut sums = [T::zero(); 5];
    let mut margin = (T::max_value().expect("bounded float"), Vec::new());
    let mut trace = T::zero();
    let mut contraction = T::zero();
    for p in partials {
        for (s, v) in sums.iter_mut().zip(p.sums) {
            *s += v;
        }
        if p.margin.0 < margin.0 {
            margin = p.margin;
        }
        trace = trace.max(p.trace);
        contraction = contraction.max(p.contraction);
    }
    if !(margin.0 > T::zero()) {
        return Err(Error::NotElliptic {
            point: margin.1.iter().map(|x| x.as_f64()).collect(),
            margin: margin.0.as_f64(),
        });
    }
    Ok((
        IntegralBundle {
            vol: sums[0].as_f64(),
            int_h_r: sums[1].as_f64(),
            int_hnext2_plus_c_hr2: sums[2].as_f64(),
            int_s_r: sums[3].as_f64(),
            int_h2_plus_c: sums[4].as_f64(),
            c_r: c_r(n, r) as f64,
        },
        PointwiseSummary {
            ellipticity_min: margin.0.as_f64(),
            trace_max_abs: trace.as_f64(),
            contraction_max_abs: contraction.as_f64(),
        },
    ))
}

/// Right-hand sides of the four bounds for given integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundValues {
    /// `c(r) int (|H_{r+1}|^2 + c H_r^2)`, compared with `lambda_1 int H_r`.
    pub thm1_rhs: f64,
    /// `(n / vol) sqrt((n - r) int S_r int (|H|^2 + c))`, compared with `sum_{i<=n} sqrt(lambda_i)`.
    pub thm2_rhs: f64,
    /// `(n - r) / vol^2 int S_r int (|H|^2 + c)`, compared with `lambda_1`.
    pub cor1_rhs: f64,
    /// `n^2` times `cor1_rhs`, compared strictly with `lambda_n`.
    pub cor2_rhs: f64,
}

pub fn bound_values(n: usize, r: usize, ints: &IntegralBundle) -> BoundValues {
    let nf = n as f64;
    let nr = (n - r) as f64;
    let product = ints.int_s_r * ints.int_h2_plus_c;
    let cor1 = nr / (ints.vol * ints.vol) * product;
    BoundValues {
        thm1_rhs: ints.c_r * ints.int_hnext2_plus_c_hr2,
        thm2_rhs: nf / ints.vol * (nr * product).sqrt(),
        cor1_rhs: cor1,
        cor2_rhs: nf * nf * cor1,
    }
}

/// Minimizer of `delta a + b / (4 delta)` predicted from the integrals:
/// `(n/2) sqrt(int (|H|^2 + c) / ((n - r) int S_r))`.
pub fn delta_star(n: usize, r: usize, ints: &IntegralBundle) -> f64 {
    0.5 * n as f64 * (ints.int_h2_plus_c / ((n - r) as f64 * ints.int_s_r)).sqrt()
}

/// Surfaces on which the bounds are attained, so the discrete ratio may exceed 1 by
/// discretization error: round spheres (c = 0) and the minimal Clifford torus (c = 1). The
/// flat torus with equal radii is included because it is minimal in a round hypersphere and
/// attains the classical bound as well.
pub fn is_equality_case<T: Real>(spec: &SurfaceSpec<T>) -> bool {
    let p = spec.params();
    let all_equal = p.windows(2).all(|w| (w[0] - w[1]).abs() <= T::tol(1e-12) * w[0].abs());
    match spec.kind() {
        SurfaceKind::Sphere => true,
        SurfaceKind::Ellipsoid | SurfaceKind::FlatTorusR4 | SurfaceKind::CliffordTorusS3 => all_equal,
        SurfaceKind::HyperplanePatch => false,
    }
}

/// Exact `lambda_1` of `L_r` when it is known in closed form.
pub fn analytic_lambda1<T: Real>(spec: &SurfaceSpec<T>, r: usize) -> Option<f64> {
    let p: Vec<f64> = spec.params().iter().map(|x| x.as_f64()).collect();
    let n = spec.dim();
    match spec.kind() {
        SurfaceKind::Sphere => Some(sphere_lambda1(n, r, p[0])),
        SurfaceKind::Ellipsoid if is_equality_case(spec) => Some(sphere_lambda1(n, r, p[0])),
        SurfaceKind::FlatTorusR4 | SurfaceKind::CliffordTorusS3 if r == 0 => {
            Some((1.0 / (p[0] * p[0])).min(1.0 / (p[1] * p[1])))
        }
        _ => None,
    }
}

fn sphere_lambda1(n: usize, r: usize, radius: f64) -> f64 {
    binomial(n - 1, r) as f64 * radius.powi(-(r as i32)) * n as f64 / (radius * radius)
}

/// Settings of one verification run.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub r: usize,
    pub level: usize,
    /// Number of nonzero eigenvalues to compute; at least `n` are always computed.
    pub eigs: Option<usize>,
    pub tol: f64,
    /// Quadrature order; `None` picks the default for `r`.
    pub quadrature: Option<usize>,
    pub lumped: bool,
    pub seed: u64,
    /// Allowance on equality cases for the slack ratio.
    pub tol_discr: f64,
    pub lemma_trials: usize,
    pub torus_base: usize,
    pub record_timings: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            r: 0,
            level: 3,
            eigs: None,
            tol: 1e-8,
            quadrature: None,
            lumped: true,
            seed: 0x5eed,
            tol_discr: 0.03,
            lemma_trials: 100,
            torus_base: DEFAULT_TORUS_BASE,
            record_timings: false,
        }
    }
}

impl VerifyConfig {
    fn quadrature_order(&self) -> usize {
        self.quadrature.unwrap_or_else(|| default_quadrature_order(self.r))
    }

    fn eigen_options<T>(&self, n: usize) -> EigenOptions<T> {
        let mut opts = EigenOptions::with_k(self.eigs.unwrap_or(n + 2).max(n));
        opts.tol = self.tol;
        opts.seed = self.seed;
        opts
    }
}

/// Outcome of the discrete lemma checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub trials: usize,
    /// `lambda_1` of `(K_r, M_lumped)`.
    pub lambda1: f64,
    /// Worst `(lhs - rhs) / rhs` of `lambda_1 h^T K_r h <= |K_r h|^2_{M^-1}` over random `h`.
    pub worst_rayleigh_violation: f64,
    /// Worst relative violation of the `delta` inequality over random `h` and the `delta` grid.
    pub worst_delta_violation: f64,
    /// Relative gap of the first inequality at `h = u_1`.
    pub eigenvector_gap: f64,
    pub delta_star: f64,
    /// Exponents `e` of the grid `2^e delta_star`.
    pub delta_exponents: Vec<i32>,
    /// Summed margin `rhs - lhs` of the `delta` inequality over the centred coordinate
    /// functions, one per grid point.
    pub coordinate_margins: Vec<f64>,
    pub delta_star_minimizes: bool,
    pub pass: bool,
}

/// Relative violation budget of the lemma checks.
pub const LEMMA_TOL: f64 = 1e-10;

/// `base` for `f64`, loosened to `1e4` ulps for coarser scalar types.
pub fn precision_tol<T: Real>(base: f64) -> f64 {
    base.max(1e4 * T::EPS)
}

/// Discrete analogues of the lemma with lumped mass: for `h` M-orthogonal to constants,
/// `lambda_1 h^T K_r h <= (K_r h)^T M^-1 (K_r h)` and for every `delta > 0`,
/// `sqrt(lambda_1) h^T K_0 h <= delta h^T K_r h + (K_0 h)^T M^-1 (K_0 h) / (4 delta)`.
#[allow(clippy::too_many_arguments)]
pub fn check_lemma<T: Real>(
    mesh: &SimplicialMesh<T>,
    k_r: &SparseSymMatrix<T>,
    k_0: &SparseSymMatrix<T>,
    lumped_mass: &SparseSymMatrix<T>,
    lambda1: T,
    u1: &[T],
    delta_star: f64,
    trials: usize,
    seed: u64,
) -> Result<LemmaCheck> {
    if !lumped_mass.is_diagonal() {
        return Err(Error::InvalidMass("lemma check needs a lumped mass matrix".into()));
    }
    let md = lumped_mass.diagonal();
    let dual = |v: &[T]| -> T { v.iter().zip(&md).map(|(x, m)| *x * *x / *m).sum() };
    let total: T = md.iter().copied().sum();
    let centre = |h: &mut Vec<T>| {
        let mean = h.iter().zip(&md).map(|(x, m)| *x * *m).sum::<T>() / total;
        h.iter_mut().for_each(|x| *x -= mean);
    };
    let exponents: Vec<i32> = (-6..=6).collect();
    let deltas: Vec<T> = exponents
        .iter()
        .map(|&e| T::lit(delta_star * 2f64.powi(e)))
        .collect();
    let sqrt_l = lambda1.max(T::zero()).sqrt();
    let four = T::lit(4.0);

    let rel = |lhs: T, rhs: T| -> f64 {
        let scale = rhs.abs().max(lhs.abs());
        if scale > T::zero() {
            ((lhs - rhs) / scale).as_f64()
        } else {
            0.0
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_rayleigh = f64::NEG_INFINITY;
    let mut worst_delta = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut h: Vec<T> = (0..md.len()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        centre(&mut h);
        let krh = k_r.mul_vec(&h);
        let k0h = k_0.mul_vec(&h);
        let a_r: T = h.iter().zip(&krh).map(|(x, y)| *x * *y).sum();
        let a_0: T = h.iter().zip(&k0h).map(|(x, y)| *x * *y).sum();
        worst_rayleigh = worst_rayleigh.max(rel(lambda1 * a_r, dual(&krh)));
        let b = dual(&k0h);
        for &d in &deltas {
            worst_delta = worst_delta.max(rel(sqrt_l * a_0, d * a_r + b / (four * d)));
        }
    }

    let ku = k_r.mul_vec(u1);
    let a_u: T = u1.iter().zip(&ku).map(|(x, y)| *x * *y).sum();
    let eigenvector_gap = rel(lambda1 * a_u, dual(&ku)).abs();

    let mut margins = vec![T::zero(); deltas.len()];
    for mut h in coordinate_fields(mesh) {
        centre(&mut h);
        let krh = k_r.mul_vec(&h);
        let k0h = k_0.mul_vec(&h);
        let a_r: T = h.iter().zip(&krh).map(|(x, y)| *x * *y).sum();
        let a_0: T = h.iter().zip(&k0h).map(|(x, y)| *x * *y).sum();
        let b = dual(&k0h);
        for (m, &d) in margins.iter_mut().zip(&deltas) {
            *m += d * a_r + b / (four * d) - sqrt_l * a_0;
        }
    }
    let centre_index = exponents.iter().position(|&e| e == 0).expect("grid contains 0");
    let argmin = (0..margins.len())
        .min_by(|&a, &b| margins[a].partial_cmp(&margins[b]).expect("finite margins"))
        .expect("non-empty grid");

    let worst_rayleigh = worst_rayleigh.max(0.0);
    let worst_delta = worst_delta.max(0.0);
    Ok(LemmaCheck {
        trials,
        lambda1: lambda1.as_f64(),
        worst_rayleigh_violation: worst_rayleigh,
        worst_delta_violation: worst_delta,
        eigenvector_gap,
        delta_star,
        delta_exponents: exponents,
        coordinate_margins: margins.iter().map(|m| m.as_f64()).collect(),
        delta_star_minimizes: argmin == centre_index,
        pass: worst_rayleigh <= precision_tol::<T>(LEMMA_TOL) && worst_delta <= precision_tol::<T>(LEMMA_TOL),
    })
}

fn inequality(lhs: f64, rhs: f64, allowance: f64, strict: bool) -> InequalityCheck {
    let slack_ratio = lhs / rhs;
    let pass = if strict { lhs < rhs } else { slack_ratio <= 1.0 + allowance };
    InequalityCheck {
        lhs,
        rhs,
        slack_ratio,
        pass,
    }
}

/// Meshes the surface, assembles and solves `-L_r u = lambda u`, evaluates both inequalities of
/// the theorem and the two corollaries, the pointwise and weak identities, and the lemma.
pub fn check_theorem<T: Real>(spec: &SurfaceSpec<T>, config: &VerifyConfig) -> Result<VerificationReport> {
    let started = Instant::now();
    let mesh = generate_with_base(spec, config.level, config.torus_base)?;
    check_theorem_on_mesh(&mesh, config, started)
}

fn check_theorem_on_mesh<T: Real>(
    mesh: &SimplicialMesh<T>,
    config: &VerifyConfig,
    started: Instant,
) -> Result<VerificationReport> {
    let spec = mesh.surface();
    let n = spec.dim();
    let r = config.r;
    let quad = config.quadrature_order();
    let t_mesh = started.elapsed().as_secs_f64();

    let clock = Instant::now();
    let k_r = assemble_stiffness(mesh, r, quad)?;
    let mass = assemble_mass(mesh, config.lumped)?;
    let t_assemble = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let spectrum: SpectralResult<T> = smallest_eigenpairs(&k_r, &mass, &config.eigen_options(n))?;
    let t_solve = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (ints, pointwise) = integrate(mesh, r, quad)?;
    let weak = weak_residual_with(mesh, r, &k_r, &mass)?;
    let t_integrate = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let lumped = if config.lumped { mass.clone() } else { assemble_mass(mesh, true)? };
    let (lambda1_lumped, u1) = if config.lumped {
        (spectrum.eigenvalues[0], spectrum.eigenvectors[0].clone())
    } else {
        let mut opts = config.eigen_options::<T>(n);
        opts.k = 1;
        let s = smallest_eigenpairs(&k_r, &lumped, &opts)?;
        (s.eigenvalues[0], s.eigenvectors[0].clone())
    };
    let k_0 = if r == 0 { k_r.clone() } else { assemble_stiffness(mesh, 0, 1)? };
    let lemma = check_lemma(
        mesh,
        &k_r,
        &k_0,
        &lumped,
        lambda1_lumped,
        &u1,
        delta_star(n, r, &ints),
        config.lemma_trials,
        config.seed,
    )?;
    let t_lemma = clock.elapsed().as_secs_f64();

    let lambdas: Vec<f64> = spectrum.eigenvalues.iter().map(|x| x.as_f64()).collect();
    let bounds = bound_values(n, r, &ints);
    let equality = is_equality_case(spec);
    let allowance = if equality { config.tol_discr } else { 0.0 };
    let sum_sqrt: f64 = lambdas[..n].iter().map(|l| l.sqrt()).sum();
    let chain = sum_sqrt >= n as f64 * lambdas[0].sqrt();

    let thm1 = inequality(lambdas[0] * ints.int_h_r, bounds.thm1_rhs, allowance, false);
    let thm2 = inequality(sum_sqrt, bounds.thm2_rhs, allowance, false);
    let cor1 = inequality(lambdas[0], bounds.cor1_rhs, allowance, false);
    let cor2 = inequality(lambdas[n - 1], bounds.cor2_rhs, 0.0, true);
    let residuals = ResidualSummary {
        trace_max_abs: pointwise.trace_max_abs,
        contraction_max_abs: pointwise.contraction_max_abs,
        weak_lr_x: weak.total.as_f64(),
        weak_lr_x_relative: weak.relative.as_f64(),
    };
    let id_tol = precision_tol::<T>(IDENTITY_TOL);
    let identities_pass = residuals.trace_max_abs <= id_tol && residuals.contraction_max_abs <= id_tol;
    let pass = thm1.pass && thm2.pass && cor1.pass && cor2.pass && chain && lemma.pass && identities_pass;

    Ok(VerificationReport {
        schema: SCHEMA.to_string(),
        surface: spec.to_string(),
        n,
        big_n: spec.ambient().dim(),
        c: spec.ambient().curvature(),
        r,
        level: mesh.level(),
        mesh: MeshCounts {
            vertices: mesh.n_vertices(),
            elements: mesh.n_elements(),
        },
        quadrature_order: quad,
        mass: if config.lumped { "lumped" } else { "consistent" }.to_string(),
        equality_case: equality,
        tol_discr: config.tol_discr,
        eigenvalues: lambdas,
        clusters: spectrum.clusters.clone(),
        solver: SolverSummary {
            name: spectrum.solver_name.clone(),
            iterations: spectrum.iterations,
            max_residual: spectrum.residuals.iter().fold(0.0, |m, x| m.max(x.as_f64())),
        },
        integrals: ints,
        thm1,
        thm2,
        cor1,
        cor2,
        eigenvalue_chain_holds: chain,
        identity_residuals: residuals,
        ellipticity_min: pointwise.ellipticity_min,
        lemma_check_pass: lemma.pass,
        lemma,
        pass,
        timings: config.record_timings.then_some(Timings {
            mesh: t_mesh,
            assemble: t_assemble,
            solve: t_solve,
            integrate: t_integrate,
            lemma: t_lemma,
        }),
    })
}

/// Bound on the pointwise algebraic identity defects.
pub const IDENTITY_TOL: f64 = 1e-10;

/// One level of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub vertices: usize,
    pub eigenvalues: Vec<f64>,
    pub thm1_slack_ratio: f64,
    pub thm2_slack_ratio: f64,
    pub trace_max_abs: f64,
    pub contraction_max_abs: f64,
    pub weak_lr_x: f64,
    pub weak_lr_x_relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub surface: String,
    pub r: usize,
    pub rows: Vec<ConvergenceRow>,
    /// Reference for `lambda_1`: the closed form when known, else the finest level.
    pub lambda1_reference: f64,
    pub lambda1_reference_is_analytic: bool,
    /// `log2(e_l / e_{l+1})` of the `lambda_1` error between successive levels.
    pub lambda1_orders: Vec<f64>,
    /// `log2(rho_l / rho_{l+1})` of the weak residual.
    pub weak_orders: Vec<f64>,
}

/// Runs [`check_theorem`] on every level in `levels` (ascending) and tabulates observed orders.
pub fn converge<T: Real>(
    spec: &SurfaceSpec<T>,
    levels: &[usize],
    config: &VerifyConfig,
) -> Result<ConvergenceTable> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("levels must be non-empty and strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let cfg = VerifyConfig {
            level,
            ..config.clone()
        };
        let report = check_theorem(spec, &cfg)?;
        log::info!(
            "level {level}: lambda_1 = {:.12}, thm1 ratio {:.6}",
            report.eigenvalues[0],
            report.thm1.slack_ratio
        );
        rows.push(ConvergenceRow {
            level,
            vertices: report.mesh.vertices,
            eigenvalues: report.eigenvalues,
            thm1_slack_ratio: report.thm1.slack_ratio,
            thm2_slack_ratio: report.thm2.slack_ratio,
            trace_max_abs: report.identity_residuals.trace_max_abs,
            contraction_max_abs: report.identity_residuals.contraction_max_abs,
            weak_lr_x: report.identity_residuals.weak_lr_x,
            weak_lr_x_relative: report.identity_residuals.weak_lr_x_relative,
        });
    }
    let analytic = analytic_lambda1(spec, config.r);
    let reference = analytic.unwrap_or_else(|| rows.last().expect("non-empty").eigenvalues[0]);
    let errors: Vec<f64> = rows
        .iter()
        .map(|row| (row.eigenvalues[0] - reference).abs())
        .collect();
    let usable = if analytic.is_some() { errors.len() } else { errors.len() - 1 };
    let orders = |v: &[f64]| -> Vec<f64> { v.windows(2).map(|w| (w[0] / w[1]).log2()).collect() };
    let weak: Vec<f64> = rows.iter().map(|row| row.weak_lr_x).collect();
    Ok(ConvergenceTable {
        surface: spec.to_string(),
        r: config.r,
        lambda1_orders: orders(&errors[..usable]),
        weak_orders: orders(&weak),
        rows,
        lambda1_reference: reference,
        lambda1_reference_is_analytic: analytic.is_some(),
    })
}

/// Low spectrum of `L_r` without the inequality checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub surface: String,
    pub r: usize,
    pub level: usize,
    pub mesh: MeshCounts,
    pub mass: String,
    pub eigenvalues: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
    pub solver: SolverSummary,
}

/// The `eigs` smallest nonzero eigenvalues (default `n + 2`) on the mesh at `config.level`.
pub fn spectrum<T: Real>(spec: &SurfaceSpec<T>, config: &VerifyConfig) -> Result<SpectrumReport> {
    let mesh = generate_with_base(spec, config.level, config.torus_base)?;
    let k_r = assemble_stiffness(&mesh, config.r, config.quadrature_order())?;
    let mass = assemble_mass(&mesh, config.lumped)?;
    let result: SpectralResult<T> = smallest_eigenpairs(&k_r, &mass, &config.eigen_options(spec.dim()))?;
    Ok(SpectrumReport {
        surface: spec.to_string(),
        r: config.r,
        level: config.level,
        mesh: MeshCounts {
            vertices: mesh.n_vertices(),
            elements: mesh.n_elements(),
        },
        mass: if config.lumped { "lumped" } else { "consistent" }.to_string(),
        eigenvalues: result.eigenvalues.iter().map(|x| x.as_f64()).collect(),
        clusters: result.clusters.clone(),
        solver: SolverSummary {
            name: result.solver_name.clone(),
            iterations: result.iterations,
            max_residual: result.residuals.iter().map(|x| x.as_f64()).fold(0.0, f64::max),
        },
    })
}

/// Worst pointwise identity defects for one even `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub r: usize,
    pub trace_max_abs: f64,
    pub contraction_max_abs: f64,
    pub ellipticity_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityScan {
    pub surface: String,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<IdentityRow>,
    pub pass: bool,
}

impl IdentityScan {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            2
        }
    }
}

/// Evaluates the trace and contraction identities at `samples` random surface points for every
/// even `r <= n - 1`. No mesh is involved.
pub fn identity_scan<T: Real>(spec: &SurfaceSpec<T>, samples: usize, seed: u64) -> Result<IdentityScan> {
    let n = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..samples)
        .map(|_| spec.random_point(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    let geometry = points
        .iter()
        .map(|p| sample_geometry(spec, SurfacePoint::Ambient(p)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for r in (0..n).step_by(2) {
        let mut row = IdentityRow {
            r,
            trace_max_abs: 0.0,
            contraction_max_abs: 0.0,
            ellipticity_min: f64::INFINITY,
        };
        for sample in &geometry {
            let nd = newton_tensor(sample, r)?;
            let d = identity_defects(sample, &nd)?;
            row.trace_max_abs = row.trace_max_abs.max(d.trace.as_f64());
            row.contraction_max_abs = row.contraction_max_abs.max(d.contraction.as_f64());
            row.ellipticity_min = row.ellipticity_min.min(nd.ellipticity_margin.as_f64());
        }
        rows.push(row);
    }
    let tol = precision_tol::<T>(IDENTITY_TOL);
    let pass = rows
        .iter()
        .all(|row| row.trace_max_abs <= tol && row.contraction_max_abs <= tol);
    Ok(IdentityScan {
        surface: spec.to_string(),
        samples,
        seed,
        rows,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;
    use std::f64::consts::PI;

    #[test]
    fn c_r_values() {
        assert_eq!(c_r(2, 0), 2);
        assert_eq!(c_r(3, 2), 3);
        assert_eq!(c_r(4, 2), 12);
    }

    #[test]
    fn sphere_integrals() {
        let spec = SurfaceSpec::sphere(2, 1.0).unwrap();
        let mesh = generate(&spec, 4).unwrap();
        let (ints, pw) = integrate(&mesh, 0, 1).unwrap();
        assert!((ints.vol - 4.0 * PI).abs() / (4.0 * PI) < 5e-3);
        assert!((ints.int_hnext2_plus_c_hr2 - 4.0 * PI).abs() / (4.0 * PI) < 5e-3);
        assert!((ints.int_hnext2_plus_c_hr2 - ints.vol).abs() < 1e-12 * ints.vol);
        assert!(pw.trace_max_abs < 1e-12);
        assert_eq!(pw.ellipticity_min, 1.0);
    }

    #[test]
    fn flat_torus_integrals() {
        let spec = SurfaceSpec::flat_torus(1.0, 1.0).unwrap();
        let mesh = generate(&spec, 2).unwrap();
        let (ints, _) = integrate(&mesh, 0, 2).unwrap();
        // every grid triangle has area chord^2 / 2 with chord = 2 sin(pi / 32)
        let chord = 2.0 * (PI / 32.0).sin();
        assert!((ints.vol - 1024.0 * chord * chord).abs() < 1e-10);
        assert!((ints.int_h2_plus_c - 0.5 * ints.vol).abs() < 1e-12);
        assert!((ints.int_h2_plus_c - 2.0 * PI * PI).abs() / (2.0 * PI * PI) < 1e-2);
    }

    #[test]
    fn three_sphere_r2_integrals() {
        let spec = SurfaceSpec::sphere(3, 1.0).unwrap();
        let mesh = generate(&spec, 1).unwrap();
        let (ints, pw) = integrate(&mesh, 2, 2).unwrap();
        assert!((ints.int_h_r - ints.vol).abs() < 1e-12 * ints.vol);
        assert!((ints.int_hnext2_plus_c_hr2 - ints.vol).abs() < 1e-12 * ints.vol);
        assert!((ints.int_s_r - 3.0 * ints.vol).abs() < 1e-12 * ints.vol);
        assert!(pw.contraction_max_abs < 1e-12);
        assert!((pw.ellipticity_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_are_equal_on_exact_sphere_data() {
        // exact unit 2-sphere data with lambda_1 = 2
        let ints = IntegralBundle {
            vol: 4.0 * PI,
            int_h_r: 4.0 * PI,
            int_hnext2_plus_c_hr2: 4.0 * PI,
            int_s_r: 4.0 * PI,
            int_h2_plus_c: 4.0 * PI,
            c_r: 2.0,
        };
        let b = bound_values(2, 0, &ints);
        assert!((2.0 * ints.int_h_r / b.thm1_rhs - 1.0).abs() < 1e-15);
        assert!((2.0 * 2f64.sqrt() / b.thm2_rhs - 1.0).abs() < 1e-15);
        assert!((2.0 / b.cor1_rhs - 1.0).abs() < 1e-15);
        assert!((delta_star(2, 0, &ints) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn equality_cases() {
        assert!(is_equality_case(&SurfaceSpec::<f64>::sphere(3, 2.0).unwrap()));
        assert!(is_equality_case(&SurfaceSpec::<f64>::flat_torus(1.0, 1.0).unwrap()));
        assert!(!is_equality_case(&SurfaceSpec::<f64>::flat_torus(1.0, 0.5).unwrap()));
        assert!(!is_equality_case(&SurfaceSpec::<f64>::ellipsoid(&[1.0, 1.0, 1.5]).unwrap()));
        assert_eq!(analytic_lambda1(&SurfaceSpec::<f64>::sphere(3, 1.0).unwrap(), 2), Some(3.0));
        assert_eq!(analytic_lambda1(&SurfaceSpec::<f64>::sphere(2, 2.0).unwrap(), 0), Some(0.5));
    }

    #[test]
    fn sphere_report_passes() {
        let spec = SurfaceSpec::sphere(2, 1.0).unwrap();
        let config = VerifyConfig {
            level: 2,
            ..VerifyConfig::default()
        };
        let report = check_theorem(&spec, &config).unwrap();
        assert!(report.pass, "{report:#?}");
        assert!(report.thm1.slack_ratio > 0.98 && report.thm1.slack_ratio <= 1.0);
        assert!(report.lemma.delta_star_minimizes);
        assert!(report.lemma.eigenvector_gap < 1e-8);
        assert_eq!(report.clusters[0], vec![0, 1, 2]);
        assert!(report.timings.is_none());
    }

    #[test]
    fn lemma_rejects_consistent_mass() {
        let spec = SurfaceSpec::sphere(2, 1.0).unwrap();
        let mesh = generate(&spec, 0).unwrap();
        let k = assemble_stiffness(&mesh, 0, 1).unwrap();
        let m = assemble_mass(&mesh, false).unwrap();
        let u = vec![0.0; mesh.n_vertices()];
        assert!(check_lemma(&mesh, &k, &k, &m, 1.0, &u, 1.0, 1, 0).is_err());
    }

    #[test]
    fn convergence_table_orders() {
        let spec = SurfaceSpec::sphere(2, 1.0).unwrap();
        let config = VerifyConfig {
            lumped: false,
            lemma_trials: 2,
            ..VerifyConfig::default()
        };
        let table = converge(&spec, &[1, 2, 3], &config).unwrap();
        assert!(table.lambda1_reference_is_analytic);
        assert_eq!(table.lambda1_orders.len(), 2);
        assert!((table.lambda1_orders[1] - 2.0).abs() < 0.3, "{:?}", table.lambda1_orders);
        assert!(converge(&spec, &[2, 1], &config).is_err());
    }
}
