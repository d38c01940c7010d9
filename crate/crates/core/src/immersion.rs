//! Catalog of closed test submanifolds and their exact pointwise geometry.
//!
//! Two flavours of immersion are supported. Implicit surfaces (spheres and ellipsoids) are level
//! sets `F(x) = 1` and are evaluated at an ambient point; their second fundamental form is the
//! tangential restriction of `Hess F / |grad F|`. Parametric surfaces (the tori and the flat
//! patch) are evaluated from chart partials, with the normal frame given in closed form.
//!
//! For surfaces of the unit sphere (`c = 1`) every vector lives in `R^{N+1}` and the radial
//! direction is excluded from the normal bundle, so `h^a_ij` is the second fundamental form
//! relative to `S^N`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

const ON_SURFACE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-12;

/// Space form `R^N(c)` with `c` in {0, 1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AmbientSpace {
    curvature: u8,
    dim: usize,
}

impl AmbientSpace {
    pub fn new(curvature: i32, dim: usize) -> Result<Self> {
        match curvature {
            0 | 1 if dim > 0 => Ok(Self {
                curvature: curvature as u8,
                dim,
            }),
            0 | 1 => Err(Error::InvalidSpec("ambient dimension must be positive".into())),
            _ => Err(Error::InvalidSpec(format!(
                "curvature c = {curvature} not supported (need c in {{0, 1}})"
            ))),
        }
    }

    pub fn euclidean(dim: usize) -> Self {
        Self { curvature: 0, dim }
    }

    pub fn unit_sphere(dim: usize) -> Self {
        Self { curvature: 1, dim }
    }

    /// The curvature `c`.
    pub fn curvature(&self) -> u8 {
        self.curvature
    }

    /// The dimension `N` of the space form.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of Cartesian coordinates used for points: `N` for `R^N`, `N + 1` for `S^N`.
    pub fn coordinate_dim(&self) -> usize {
        self.dim + self.curvature as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceKind {
    Sphere,
    Ellipsoid,
    FlatTorusR4,
    CliffordTorusS3,
    HyperplanePatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    Implicit,
    Parametric,
}

/// A validated member of the surface catalog.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceSpec<T> {
    kind: SurfaceKind,
    dim: usize,
    params: Vec<T>,
    ambient: AmbientSpace,
}

impl<T: Real> SurfaceSpec<T> {
    pub fn new(
        kind: SurfaceKind,
        dim: usize,
        params: Vec<T>,
        ambient: AmbientSpace,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            dim,
            params,
            ambient,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Round sphere of radius `radius` in `R^{n+1}`.
    pub fn sphere(dim: usize, radius: T) -> Result<Self> {
        Self::new(
            SurfaceKind::Sphere,
            dim,
            vec![radius],
            AmbientSpace::euclidean(dim + 1),
        )
    }

    /// Ellipsoid `sum x_i^2 / a_i^2 = 1`; the dimension is `semi_axes.len() - 1`.
    pub fn ellipsoid(semi_axes: &[T]) -> Result<Self> {
        let big_n = semi_axes.len();
        if big_n < 2 {
            return Err(Error::InvalidSpec("ellipsoid needs at least two semi-axes".into()));
        }
        Self::new(
            SurfaceKind::Ellipsoid,
            big_n - 1,
            semi_axes.to_vec(),
            AmbientSpace::euclidean(big_n),
        )
    }

    /// `S^1(r1) x S^1(r2)` in `R^4`.
    pub fn flat_torus(r1: T, r2: T) -> Result<Self> {
        Self::new(
            SurfaceKind::FlatTorusR4,
            2,
            vec![r1, r2],
            AmbientSpace::euclidean(4),
        )
    }

    /// `S^1(r1) x S^1(r2)` in `S^3`, which requires `r1^2 + r2^2 = 1`.
    pub fn clifford_torus(r1: T, r2: T) -> Result<Self> {
        Self::new(
            SurfaceKind::CliffordTorusS3,
            2,
            vec![r1, r2],
            AmbientSpace::unit_sphere(3),
        )
    }

    /// The coordinate hyperplane `x_{n+1} = 0` in `R^{n+1}`. Has no closed mesh.
    pub fn hyperplane_patch(dim: usize) -> Result<Self> {
        Self::new(
            SurfaceKind::HyperplanePatch,
            dim,
            Vec::new(),
            AmbientSpace::euclidean(dim + 1),
        )
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidSpec(msg));
        if self.dim == 0 || self.dim >= self.ambient.dim() {
            return invalid(format!(
                "dimension {} must satisfy 0 < n < N = {}",
                self.dim,
                self.ambient.dim()
            ));
        }
        if self.params.iter().any(|p| !(*p > T::zero()) || !p.is_finite()) {
            return invalid("shape parameters must be positive and finite".into());
        }
        let c = self.ambient.curvature();
        let n = self.dim;
        let big_n = self.ambient.dim();
        match self.kind {
            SurfaceKind::Sphere => {
                if !(2..=3).contains(&n) || self.params.len() != 1 || c != 0 || big_n != n + 1 {
                    return invalid("sphere needs n in {2,3}, one radius, and ambient R^{n+1}".into());
                }
            }
            SurfaceKind::Ellipsoid => {
                if !(2..=3).contains(&n) || self.params.len() != n + 1 || c != 0 || big_n != n + 1
                {
                    return invalid(
                        "ellipsoid needs n in {2,3}, n+1 semi-axes, and ambient R^{n+1}".into(),
                    );
                }
            }
            SurfaceKind::FlatTorusR4 => {
                if n != 2 || self.params.len() != 2 || c != 0 || big_n != 4 {
                    return invalid("flat torus needs two radii in R^4".into());
                }
            }
            SurfaceKind::CliffordTorusS3 => {
                if n != 2 || self.params.len() != 2 || c != 1 || big_n != 3 {
                    return invalid("Clifford torus needs two radii in S^3".into());
                }
                let (r1, r2) = (self.params[0], self.params[1]);
                if (r1 * r1 + r2 * r2 - T::one()).abs() > T::tol(1e-12) {
                    return invalid(format!(
                        "Clifford torus radii must satisfy r1^2 + r2^2 = 1 (got {})",
                        r1 * r1 + r2 * r2
                    ));
                }
            }
            SurfaceKind::HyperplanePatch => {
                if !self.params.is_empty() || c != 0 || big_n != n + 1 {
                    return invalid("hyperplane patch takes no parameters and lives in R^{n+1}".into());
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn ambient(&self) -> AmbientSpace {
        self.ambient
    }

    pub fn codim(&self) -> usize {
        self.ambient.dim() - self.dim
    }

    pub fn flavor(&self) -> Flavor {
        match self.kind {
            SurfaceKind::Sphere | SurfaceKind::Ellipsoid => Flavor::Implicit,
            _ => Flavor::Parametric,
        }
    }

    /// Whether the surface is closed (and so can be meshed).
    pub fn is_closed(&self) -> bool {
        self.kind != SurfaceKind::HyperplanePatch
    }

    /// Semi-axes of an implicit surface (a sphere repeats its radius).
    fn semi_axes(&self) -> Vec<T> {
        match self.kind {
            SurfaceKind::Sphere => vec![self.params[0]; self.dim + 1],
            _ => self.params.clone(),
        }
    }

    /// `F(p) = sum p_i^2 / a_i^2` for implicit surfaces.
    pub fn implicit_value(&self, p: &[T]) -> Result<T> {
        if self.flavor() != Flavor::Implicit {
            return Err(Error::Unsupported(format!("{:?} is not implicit", self.kind)));
        }
        let axes = self.semi_axes();
        if p.len() != axes.len() {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, expected {}",
                p.len(),
                axes.len()
            )));
        }
        Ok(p.iter().zip(&axes).map(|(x, a)| (*x / *a) * (*x / *a)).sum())
    }

    /// Closest-in-chart projection of an ambient point to an implicit surface: the point is
    /// pulled back to the unit sphere by the axis scaling, normalized, and pushed forward.
    pub fn project(&self, p: &[T]) -> Result<Vec<T>> {
        if self.flavor() != Flavor::Implicit {
            return Err(Error::Unsupported(format!(
                "{:?} is projected through its parameters",
                self.kind
            )));
        }
        let axes = self.semi_axes();
        let y: Vec<T> = p.iter().zip(&axes).map(|(x, a)| *x / *a).collect();
        let norm = y.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm <= T::tol(PIVOT_TOL) {
            return Err(Error::DegenerateFrame {
                pivot: norm.as_f64(),
            });
        }
        Ok(y.iter().zip(&axes).map(|(v, a)| *v / norm * *a).collect())
    }

    /// Ambient position of a parametric surface.
    pub fn eval_params(&self, params: &[T]) -> Result<Vec<T>> {
        Ok(self.param_jet(params)?.position.iter().copied().collect())
    }

    /// Chart parameters of an ambient point of a parametric surface.
    pub fn params_of(&self, p: &[T]) -> Result<Vec<T>> {
        let dim = self.ambient.coordinate_dim();
        if p.len() != dim {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        let params = match self.kind {
            SurfaceKind::FlatTorusR4 | SurfaceKind::CliffordTorusS3 => {
                vec![p[1].atan2(p[0]), p[3].atan2(p[2])]
            }
            SurfaceKind::HyperplanePatch => p[..self.dim].to_vec(),
            _ => {
                return Err(Error::Unsupported(format!(
                    "{:?} has no global chart",
                    self.kind
                )))
            }
        };
        let back = self.eval_params(&params)?;
        let residual = back
            .iter()
            .zip(p)
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum::<T>()
            .sqrt();
        if residual > T::tol(ON_SURFACE_TOL) {
            return Err(Error::OffSurface {
                residual: residual.as_f64(),
            });
        }
        Ok(params)
    }

    /// Uniformly random parameters (parametric) or a random direction pushed onto the surface
    /// (implicit). Returns the ambient point.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<T>> {
        match self.flavor() {
            Flavor::Implicit => {
                let dim = self.ambient.coordinate_dim();
                loop {
                    let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let r2: f64 = y.iter().map(|v| v * v).sum();
                    if r2 > 1e-4 && r2 <= 1.0 {
                        let y: Vec<T> = y.into_iter().map(T::lit).collect();
                        return self.project(&y);
                    }
                }
            }
            Flavor::Parametric => {
                let params: Vec<T> = (0..self.dim)
                    .map(|_| {
                        if self.kind == SurfaceKind::HyperplanePatch {
                            T::lit(rng.gen_range(-2.0..2.0))
                        } else {
                            T::lit(rng.gen_range(0.0..std::f64::consts::TAU))
                        }
                    })
                    .collect();
                self.eval_params(&params)
            }
        }
    }

    /// Position, first and second partials, and closed-form normal frame of a parametric surface.
    fn param_jet(&self, params: &[T]) -> Result<ParamJet<T>> {
        if self.flavor() != Flavor::Parametric {
            return Err(Error::Unsupported(format!("{:?} has no global chart", self.kind)));
        }
        if params.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.dim,
                params.len()
            )));
        }
        let dim = self.ambient.coordinate_dim();
        let zero = || DVector::<T>::zeros(dim);
        match self.kind {
            SurfaceKind::HyperplanePatch => {
                let mut position = zero();
                let mut d1 = Vec::with_capacity(self.dim);
                for (i, u) in params.iter().enumerate() {
                    position[i] = *u;
                    let mut e = zero();
                    e[i] = T::one();
                    d1.push(e);
                }
                let mut normal = zero();
                normal[self.dim] = T::one();
                Ok(ParamJet {
                    position,
                    d2: vec![vec![zero(); self.dim]; self.dim],
                    d1,
                    normals: vec![normal],
                })
            }
            SurfaceKind::FlatTorusR4 | SurfaceKind::CliffordTorusS3 => {
                let (r1, r2) = (self.params[0], self.params[1]);
                let (su, cu) = params[0].sin_cos();
                let (sv, cv) = params[1].sin_cos();
                let z = T::zero();
                let v4 = |a: T, b: T, c: T, d: T| DVector::from_vec(vec![a, b, c, d]);
                let position = v4(r1 * cu, r1 * su, r2 * cv, r2 * sv);
                let xu = v4(-r1 * su, r1 * cu, z, z);
                let xv = v4(z, z, -r2 * sv, r2 * cv);
                let xuu = v4(-r1 * cu, -r1 * su, z, z);
                let xvv = v4(z, z, -r2 * cv, -r2 * sv);
                let normals = if self.kind == SurfaceKind::FlatTorusR4 {
                    // each normal points at the axis of its circle factor
                    vec![v4(-cu, -su, z, z), v4(z, z, -cv, -sv)]
                } else {
                    vec![v4(-r2 * cu, -r2 * su, r1 * cv, r1 * sv)]
                };
                Ok(ParamJet {
                    position,
                    d1: vec![xu, xv],
                    d2: vec![vec![xuu, zero()], vec![zero(), xvv]],
                    normals,
                })
            }
            _ => unreachable!(),
        }
    }
}

impl<T: Real> fmt::Display for SurfaceSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            SurfaceKind::Sphere => "sphere",
            SurfaceKind::Ellipsoid => "ellipsoid",
            SurfaceKind::FlatTorusR4 => "flattorus",
            SurfaceKind::CliffordTorusS3 => "cliffordtorus",
            SurfaceKind::HyperplanePatch => "hyperplane",
        };
        let params: Vec<String> = self.params.iter().map(|p| format!("{p}")).collect();
        write!(f, "{name}:{}", params.join(","))?;
        if matches!(self.kind, SurfaceKind::Sphere | SurfaceKind::HyperplanePatch) {
            write!(f, "@{}", self.dim)?;
        }
        Ok(())
    }
}

/// Parses the command-line surface syntax: `sphere:R`, `sphere:R@3`, `ellipsoid:a1,a2,...`,
/// `flattorus:r1,r2`, `cliffordtorus:r1,r2`, `hyperplane:@n`. A sphere is two-dimensional
/// unless an `@n` suffix says otherwise.
impl<T: Real> FromStr for SurfaceSpec<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidSpec(format!("expected <name>:<params>, got {s:?}")))?;
        let (list, dim) = match rest.split_once('@') {
            Some((list, d)) => (
                list,
                Some(d.trim().parse::<usize>().map_err(|_| {
                    Error::InvalidSpec(format!("bad dimension suffix in {s:?}"))
                })?),
            ),
            None => (rest, None),
        };
        let values = list
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::InvalidSpec(format!("bad number {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        let expect = |count: usize| -> Result<()> {
            if values.len() == count {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!(
                    "{name} takes {count} parameter(s), got {}",
                    values.len()
                )))
            }
        };
        let no_dim = || -> Result<()> {
            match dim {
                None => Ok(()),
                Some(_) => Err(Error::InvalidSpec(format!("{name} takes no @n suffix"))),
            }
        };
        match name.trim().to_ascii_lowercase().as_str() {
            "sphere" => {
                expect(1)?;
                Self::sphere(dim.unwrap_or(2), values[0])
            }
            "ellipsoid" => {
                no_dim()?;
                Self::ellipsoid(&values)
            }
            "flattorus" => {
                no_dim()?;
                expect(2)?;
                Self::flat_torus(values[0], values[1])
            }
            "cliffordtorus" => {
                no_dim()?;
                expect(2)?;
                Self::clifford_torus(values[0], values[1])
            }
            "hyperplane" => {
                expect(0)?;
                Self::hyperplane_patch(dim.unwrap_or(2))
            }
            other => Err(Error::InvalidSpec(format!("unknown surface {other:?}"))),
        }
    }
}

struct ParamJet<T: Real> {
    position: DVector<T>,
    d1: Vec<DVector<T>>,
    d2: Vec<Vec<DVector<T>>>,
    normals: Vec<DVector<T>>,
}

/// Where to evaluate the geometry.
#[derive(Clone, Copy, Debug)]
pub enum SurfacePoint<'a, T> {
    Params(&'a [T]),
    Ambient(&'a [T]),
}

/// First- and second-order data of the immersion at one point.
///
/// `second_fundamental[a]` holds the symmetric `n x n` matrix `h^a_ij` in the orthonormal
/// frames. `B_ij = sum_a h^a_ij e_a` is rebuilt on demand by [`GeometrySample::b_vector`].
#[derive(Clone, Debug, PartialEq)]
pub struct GeometrySample<T: Real> {
    pub position: DVector<T>,
    pub tangent_frame: Vec<DVector<T>>,
    pub normal_frame: Vec<DVector<T>>,
    pub second_fundamental: Vec<DMatrix<T>>,
    /// `sqrt(det g)` of the chart for parametric surfaces, 1 for implicit ones.
    pub measure_weight: T,
}

impl<T: Real> GeometrySample<T> {
    pub fn dim(&self) -> usize {
        self.tangent_frame.len()
    }

    pub fn codim(&self) -> usize {
        self.normal_frame.len()
    }

    /// Builds a sample directly from frame components, for synthetic tests of the algebra.
    /// Frames are the canonical ones in `R^{n+codim}`.
    pub fn from_components(second_fundamental: Vec<DMatrix<T>>) -> Self {
        let codim = second_fundamental.len();
        let n = second_fundamental.first().map_or(0, |h| h.nrows());
        let dim = n + codim;
        let unit = |k: usize| {
            let mut e = DVector::zeros(dim);
            e[k] = T::one();
            e
        };
        Self {
            position: DVector::zeros(dim),
            tangent_frame: (0..n).map(unit).collect(),
            normal_frame: (n..dim).map(unit).collect(),
            second_fundamental,
            measure_weight: T::one(),
        }
    }

    /// `B_ij` as an ambient vector.
    pub fn b_vector(&self, i: usize, j: usize) -> DVector<T> {
        let mut out = DVector::zeros(self.position.len());
        for (h, e) in self.second_fundamental.iter().zip(&self.normal_frame) {
            out.axpy(h[(i, j)], e, T::one());
        }
        out
    }

    /// `<B_ij, B_kl> = sum_a h^a_ij h^a_kl`.
    pub fn b_inner(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        self.second_fundamental
            .iter()
            .map(|h| h[(i, j)] * h[(k, l)])
            .sum()
    }

    /// Rotates the tangent frame by the orthogonal matrix `q` (`e'_i = sum_k e_k q_ki`) and
    /// transforms `h` by the matching congruence.
    pub fn rotate_tangent(&self, q: &DMatrix<T>) -> Self {
        let n = self.dim();
        let tangent_frame = (0..n)
            .map(|i| {
                let mut v = DVector::zeros(self.position.len());
                for k in 0..n {
                    v.axpy(q[(k, i)], &self.tangent_frame[k], T::one());
                }
                v
            })
            .collect();
        let second_fundamental = self
            .second_fundamental
            .iter()
            .map(|h| q.transpose() * h * q)
            .collect();
        Self {
            tangent_frame,
            second_fundamental,
            ..self.clone()
        }
    }

    /// Negates the normal `e_a` and with it `h^a`.
    pub fn flip_normal(&self, alpha: usize) -> Self {
        let mut out = self.clone();
        out.normal_frame[alpha] = -out.normal_frame[alpha].clone();
        out.second_fundamental[alpha] = -out.second_fundamental[alpha].clone();
        out
    }

    /// Largest violation of the frame orthonormality, symmetry, and (for `c = 1`) the
    /// sphere constraints.
    pub fn invariant_defect(&self, curvature: u8) -> T {
        let mut worst = T::zero();
        let mut bump = |v: T| {
            if v.abs() > worst {
                worst = v.abs();
            }
        };
        let all: Vec<&DVector<T>> = self
            .tangent_frame
            .iter()
            .chain(self.normal_frame.iter())
            .collect();
        for (a, u) in all.iter().enumerate() {
            for (b, v) in all.iter().enumerate() {
                let target = if a == b { T::one() } else { T::zero() };
                bump(u.dot(v) - target);
            }
            if curvature == 1 {
                bump(u.dot(&self.position));
            }
        }
        if curvature == 1 {
            bump(self.position.norm() - T::one());
        }
        for h in &self.second_fundamental {
            bump((h - h.transpose()).amax());
        }
        worst
    }
}

/// Evaluates the frames and second fundamental form of `spec` at `point`.
pub fn sample_geometry<T: Real>(
    spec: &SurfaceSpec<T>,
    point: SurfacePoint<'_, T>,
) -> Result<GeometrySample<T>> {
    match spec.flavor() {
        Flavor::Implicit => match point {
            SurfacePoint::Ambient(p) => implicit_sample(spec, p),
            SurfacePoint::Params(_) => Err(Error::Unsupported(format!(
                "{:?} is implicit; pass an ambient point",
                spec.kind()
            ))),
        },
        Flavor::Parametric => {
            let params = match point {
                SurfacePoint::Params(u) => u.to_vec(),
                SurfacePoint::Ambient(p) => spec.params_of(p)?,
            };
            parametric_sample(spec, &params)
        }
    }
}

fn implicit_sample<T: Real>(spec: &SurfaceSpec<T>, p: &[T]) -> Result<GeometrySample<T>> {
    let value = spec.implicit_value(p)?;
    let residual = (value - T::one()).abs();
    if residual > T::tol(ON_SURFACE_TOL) {
        return Err(Error::OffSurface {
            residual: residual.as_f64(),
        });
    }
    let axes = spec.semi_axes();
    let dim = axes.len();
    let two = T::lit(2.0);
    let grad = DVector::from_iterator(dim, p.iter().zip(&axes).map(|(x, a)| two * *x / (*a * *a)));
    let grad_norm = grad.norm();
    if grad_norm <= T::tol(PIVOT_TOL) {
        return Err(Error::DegenerateFrame {
            pivot: grad_norm.as_f64(),
        });
    }
    let normal = -grad / grad_norm;
    let tangent = complete_orthonormal(std::slice::from_ref(&normal), spec.dim(), dim)?;
    let hess_diag: Vec<T> = axes.iter().map(|a| two / (*a * *a)).collect();
    let n = spec.dim();
    let h = DMatrix::from_fn(n, n, |i, j| {
        let s: T = (0..dim)
            .map(|k| tangent[i][k] * hess_diag[k] * tangent[j][k])
            .sum();
        s / grad_norm
    });
    Ok(GeometrySample {
        position: DVector::from_column_slice(p),
        tangent_frame: tangent,
        normal_frame: vec![normal],
        second_fundamental: vec![symmetrize(h)],
        measure_weight: T::one(),
    })
}

fn parametric_sample<T: Real>(spec: &SurfaceSpec<T>, params: &[T]) -> Result<GeometrySample<T>> {
    let jet = spec.param_jet(params)?;
    let n = spec.dim();
    // Gram-Schmidt on the chart partials: d1 = E R with R upper triangular.
    let mut frame: Vec<DVector<T>> = Vec::with_capacity(n);
    let mut r = DMatrix::<T>::zeros(n, n);
    for (a, da) in jet.d1.iter().enumerate() {
        let mut v = da.clone();
        for (b, e) in frame.iter().enumerate() {
            let c = e.dot(da);
            r[(b, a)] = c;
            v.axpy(-c, e, T::one());
        }
        let norm = v.norm();
        if norm <= T::tol(PIVOT_TOL) {
            return Err(Error::DegenerateFrame {
                pivot: norm.as_f64(),
            });
        }
        r[(a, a)] = norm;
        frame.push(v / norm);
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateFrame { pivot: 0.0 })?;
    let second_fundamental = jet
        .normals
        .iter()
        .map(|nu| {
            let chart = DMatrix::from_fn(n, n, |a, b| jet.d2[a][b].dot(nu));
            symmetrize(r_inv.transpose() * chart * &r_inv)
        })
        .collect();
    let measure_weight = (0..n).map(|a| r[(a, a)]).product();
    Ok(GeometrySample {
        position: jet.position,
        tangent_frame: frame,
        normal_frame: jet.normals,
        second_fundamental,
        measure_weight,
    })
}

fn symmetrize<T: Real>(h: DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    (&h + h.transpose()) * half
}

/// Extends the orthonormal set `fixed` by `count` vectors drawn from the canonical basis of
/// `R^dim`, always taking the basis vector with the largest remaining component.
pub fn complete_orthonormal<T: Real>(
    fixed: &[DVector<T>],
    count: usize,
    dim: usize,
) -> Result<Vec<DVector<T>>> {
    let mut chosen: Vec<DVector<T>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(T, DVector<T>)> = None;
        for k in 0..dim {
            let mut v = DVector::zeros(dim);
            v[k] = T::one();
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for f in fixed.iter().chain(chosen.iter()) {
                    let c = f.dot(&v);
                    v.axpy(-c, f, T::one());
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, v));
            }
        }
        let (pivot, v) = best.ok_or(Error::DegenerateFrame { pivot: 0.0 })?;
        if pivot <= T::tol(PIVOT_TOL) {
            return Err(Error::DegenerateFrame {
                pivot: pivot.as_f64(),
            });
        }
        chosen.push(v / pivot);
    }
    Ok(chosen)
}

/// How the normal frame is oriented for a catalog surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalOrientation {
    /// Closed hypersurfaces: the normal points inward, so the unit sphere has `h_ij = +delta_ij`.
    Inward,
    /// The flat patch uses the last canonical basis vector.
    CanonicalLast,
    /// Product of circles in `R^4`: one normal per circle factor, pointing at its axis.
    FactorInward,
    /// Torus in `S^3`: the unit normal `(-r2 x1/r1, r1 x2/r2)` tangent to the sphere.
    SphereTangent,
}

impl NormalOrientation {
    pub fn describe(self) -> &'static str {
        match self {
            Self::Inward => "inward normal; unit sphere has h_ij = +delta_ij",
            Self::CanonicalLast => "normal is the last canonical basis vector",
            Self::FactorInward => "one normal per circle factor, pointing at the circle's center",
            Self::SphereTangent => "normal tangent to S^3, orthogonal to the position vector",
        }
    }
}

pub fn normal_orientation<T: Real>(spec: &SurfaceSpec<T>) -> NormalOrientation {
    match spec.kind() {
        SurfaceKind::Sphere | SurfaceKind::Ellipsoid => NormalOrientation::Inward,
        SurfaceKind::HyperplanePatch => NormalOrientation::CanonicalLast,
        SurfaceKind::FlatTorusR4 => NormalOrientation::FactorInward,
        SurfaceKind::CliffordTorusS3 => NormalOrientation::SphereTangent,
    }
}
