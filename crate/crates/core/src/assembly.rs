//! Linear-element stiffness and mass matrices for `-L_r` on a simplicial mesh.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{EnvelopeCholesky, SparseSymMatrix};
use crate::mesh::{quadrature, SimplicialMesh};
use crate::newton::newton_tensor;
use crate::scalar::Real;

/// Quadrature order used when the caller does not choose one: the coefficient is constant for
/// `r = 0`.
pub fn default_quadrature_order(r: usize) -> usize {
    if r == 0 {
        1
    } else {
        2
    }
}

/// Orthonormal basis of an element's plane together with its edge vectors in that basis.
struct ElementFrame<T: Real> {
    basis: DMatrix<T>,
    /// `basis^T * edges`, upper triangular.
    edges_local: DMatrix<T>,
    measure: T,
}

fn element_frame<T: Real>(mesh: &SimplicialMesh<T>, e: usize) -> Result<ElementFrame<T>> {
    let measure = mesh.element_measure(e)?;
    let edges = mesh.edge_matrix(e);
    let qr = edges.clone().qr();
    let basis = qr.q();
    let edges_local = basis.transpose() * edges;
    Ok(ElementFrame {
        basis,
        edges_local,
        measure,
    })
}

/// Hat-function gradients in the element basis, one column per local vertex.
fn hat_gradients<T: Real>(frame: &ElementFrame<T>) -> Result<DMatrix<T>> {
    let n = frame.edges_local.nrows();
    let inv_t = frame
        .edges_local
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateElement {
            element: usize::MAX,
            measure: frame.measure.as_f64(),
        })?
        .transpose();
    let mut grads = DMatrix::zeros(n, n + 1);
    for k in 0..n {
        let col = inv_t.column(k);
        grads.set_column(k + 1, &col);
        for d in 0..n {
            grads[(d, 0)] -= col[d];
        }
    }
    Ok(grads)
}

/// Nearest orthogonal map from the tangent frame at a surface point onto the element plane.
fn polar_transport<T: Real>(basis: &DMatrix<T>, tangent: &[DVector<T>]) -> DMatrix<T> {
    let frame = DMatrix::from_columns(tangent);
    let a = basis.transpose() * frame;
    let svd = a.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    u * v_t
}

struct ElementBlock<T> {
    triplets: Vec<(usize, usize, T)>,
    worst: Option<(T, Vec<T>)>,
}

/// Stiffness matrix `K[a][b] = sum_e sum_q w_q |e| <T^r(q) grad phi_a, grad phi_b>` with the
/// Newton tensor carried onto each flat element by the polar factor of the tangent-to-element
/// map. Fails with `NotElliptic` if `T^r` is not positive definite at some quadrature point.
pub fn assemble_stiffness<T: Real>(
    mesh: &SimplicialMesh<T>,
    r: usize,
    quadrature_order: usize,
) -> Result<SparseSymMatrix<T>> {
    let n = mesh.dim();
    if !r.is_multiple_of(2) || r + 1 > n {
        return Err(Error::InvalidOrder {
            order: r,
            dim: n,
            reason: "stiffness needs even r with 0 <= r <= n - 1",
        });
    }
    let rule = quadrature::<T>(quadrature_order, n)?;
    let blocks: Vec<Result<ElementBlock<T>>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let frame = element_frame(mesh, e).map_err(|err| match err {
                Error::DegenerateElement { measure, .. } => Error::DegenerateElement { element: e, measure },
                other => other,
            })?;
            let grads = hat_gradients(&frame).map_err(|_| Error::DegenerateElement {
                element: e,
                measure: frame.measure.as_f64(),
            })?;
            let mut coefficient = DMatrix::<T>::zeros(n, n);
            let mut worst: Option<(T, Vec<T>)> = None;
            if r == 0 {
                coefficient.fill_with_identity();
            } else {
                for (point, weight) in rule.points.iter().zip(&rule.weights) {
                    let sample = mesh.sample(e, point)?;
                    let nd = newton_tensor(&sample, r)?;
                    if nd.ellipticity_margin <= T::zero()
                        && worst.as_ref().is_none_or(|(m, _)| nd.ellipticity_margin < *m)
                    {
                        worst = Some((nd.ellipticity_margin, sample.position.as_slice().to_vec()));
                    }
                    let q = polar_transport(&frame.basis, &sample.tangent_frame);
                    coefficient += (&q * &nd.t_r * q.transpose()) * *weight;
                }
                coefficient = (&coefficient + coefficient.transpose()) * T::lit(0.5);
            }
            let local = grads.transpose() * coefficient * &grads * frame.measure;
            let el = mesh.element(e);
            let mut triplets = Vec::with_capacity((n + 1) * (n + 2) / 2);
            for a in 0..=n {
                for b in a..=n {
                    triplets.push((el[a], el[b], local[(a, b)]));
                }
            }
            Ok(ElementBlock { triplets, worst })
        })
        .collect();

    let mut triplets = Vec::with_capacity(mesh.n_elements() * (n + 1) * (n + 2) / 2);
    let mut worst: Option<(T, Vec<T>)> = None;
    for block in blocks {
        let block = block?;
        if let Some((m, p)) = block.worst {
            if worst.as_ref().is_none_or(|(w, _)| m < *w) {
                worst = Some((m, p));
            }
        }
        triplets.extend(block.triplets);
    }
    if let Some((margin, point)) = worst {
        return Err(not_elliptic(margin, &point));
    }
    Ok(SparseSymMatrix::from_triplets(mesh.n_vertices(), triplets))
}

fn not_elliptic<T: Real>(margin: T, point: &[T]) -> Error {
    Error::NotElliptic {
        point: point.iter().map(|x| x.as_f64()).collect(),
        margin: margin.as_f64(),
    }
}

/// Consistent P1 mass matrix, or its row-sum lumped diagonal.
pub fn assemble_mass<T: Real>(mesh: &SimplicialMesh<T>, lumped: bool) -> Result<SparseSymMatrix<T>> {
    let n = mesh.dim();
    let measures: Vec<T> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| mesh.element_measure(e))
        .collect::<Result<_>>()?;
    if lumped {
        let mut diag = vec![T::zero(); mesh.n_vertices()];
        let share = T::from_usize_lossy(n + 1);
        for (e, m) in measures.iter().enumerate() {
            for &v in mesh.element(e) {
                diag[v] += *m / share;
            }
        }
        return Ok(SparseSymMatrix::from_diagonal(&diag));
    }
    let denom = T::from_usize_lossy((n + 1) * (n + 2));
    let mut triplets = Vec::with_capacity(mesh.n_elements() * (n + 1) * (n + 2) / 2);
    for (e, m) in measures.iter().enumerate() {
        let el = mesh.element(e);
        let off = *m / denom;
        for a in 0..=n {
            triplets.push((el[a], el[a], off + off));
            for b in a + 1..=n {
                triplets.push((el[a], el[b], off));
            }
        }
    }
    Ok(SparseSymMatrix::from_triplets(mesh.n_vertices(), triplets))
}

/// Per-vertex values of each Cartesian coordinate.
pub fn coordinate_fields<T: Real>(mesh: &SimplicialMesh<T>) -> Vec<Vec<T>> {
    (0..mesh.coord_dim())
        .map(|a| (0..mesh.n_vertices()).map(|i| mesh.vertex(i)[a]).collect())
        .collect()
}

/// Residual of the weak identity `L_r x = (r+1) S_{r+1} - c (n-r) S_r x`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakResidual<T> {
    /// `|| -K x_A - M g_A ||` in the `M^{-1}` norm, per coordinate.
    pub per_coordinate: Vec<T>,
    /// l2 combination over coordinates.
    pub total: T,
    /// `total` divided by the `M^{-1}` norm of the right-hand side `M g`.
    pub relative: T,
}

pub fn weak_residual_lr_x<T: Real>(
    mesh: &SimplicialMesh<T>,
    r: usize,
    quadrature_order: usize,
    lumped: bool,
) -> Result<WeakResidual<T>> {
    let stiffness = assemble_stiffness(mesh, r, quadrature_order)?;
    let mass = assemble_mass(mesh, lumped)?;
    weak_residual_with(mesh, r, &stiffness, &mass)
}

/// As [`weak_residual_lr_x`] with the stiffness for `r` and a mass matrix already assembled.
pub fn weak_residual_with<T: Real>(
    mesh: &SimplicialMesh<T>,
    r: usize,
    stiffness: &SparseSymMatrix<T>,
    mass: &SparseSymMatrix<T>,
) -> Result<WeakResidual<T>> {
    let lumped = mass.is_diagonal();
    let n = mesh.dim();
    let c = T::lit(f64::from(mesh.surface().ambient().curvature()));
    let dim = mesh.coord_dim();
    let nv = mesh.n_vertices();

    let rhs: Vec<Vec<T>> = {
        let rows: Vec<Vec<T>> = (0..nv)
            .into_par_iter()
            .map(|i| {
                let sample = mesh.vertex_sample(i)?;
                let nd = newton_tensor(&sample, r)?;
                let s_next = nd.s_next_ambient(&sample);
                let radial = c * T::from_usize_lossy(n - r) * nd.s_r;
                Ok((0..dim)
                    .map(|a| T::from_usize_lossy(r + 1) * s_next[a] - radial * mesh.vertex(i)[a])
                    .collect())
            })
            .collect::<Result<_>>()?;
        (0..dim).map(|a| rows.iter().map(|row| row[a]).collect()).collect()
    };

    let inverse_norm2: Box<dyn Fn(&[T]) -> T> = if lumped {
        let diag = mass.diagonal();
        Box::new(move |v: &[T]| v.iter().zip(&diag).map(|(x, m)| *x * *x / *m).sum())
    } else {
        let chol = EnvelopeCholesky::factor(mass).map_err(|e| Error::InvalidMass(e.to_string()))?;
        Box::new(move |v: &[T]| {
            let w = chol.solve(v);
            v.iter().zip(&w).map(|(x, y)| *x * *y).sum()
        })
    };

    let mut per_coordinate = Vec::with_capacity(dim);
    let mut scale2 = T::zero();
    for (x, g) in coordinate_fields(mesh).iter().zip(&rhs) {
        let kx = stiffness.mul_vec(x);
        let mg = mass.mul_vec(g);
        let res: Vec<T> = kx.iter().zip(&mg).map(|(a, b)| -*a - *b).collect();
        per_coordinate.push(inverse_norm2(&res).max(T::zero()).sqrt());
        scale2 += inverse_norm2(&mg);
    }
    let total = per_coordinate.iter().map(|v| *v * *v).sum::<T>().sqrt();
    let scale = scale2.max(T::zero()).sqrt();
    let relative = if scale > T::zero() { total / scale } else { total };
    Ok(WeakResidual {
        per_coordinate,
        total,
        relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::SurfaceSpec;
    use crate::mesh::generate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Classical cotangent Laplacian: K_ij = -(cot a + cot b)/2 over the two opposite angles.
    fn cotangent_oracle(mesh: &SimplicialMesh<f64>) -> DMatrix<f64> {
        let nv = mesh.n_vertices();
        let mut k = DMatrix::zeros(nv, nv);
        let sub = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(a, b)| a - b).collect() };
        let dot = |p: &[f64], q: &[f64]| -> f64 { p.iter().zip(q).map(|(a, b)| a * b).sum() };
        for e in 0..mesh.n_elements() {
            let el = mesh.element(e);
            for corner in 0..3 {
                let (o, i, j) = (el[corner], el[(corner + 1) % 3], el[(corner + 2) % 3]);
                let u = sub(mesh.vertex(i), mesh.vertex(o));
                let v = sub(mesh.vertex(j), mesh.vertex(o));
                let cos = dot(&u, &v);
                let sin = (dot(&u, &u) * dot(&v, &v) - cos * cos).sqrt();
                let w = 0.5 * cos / sin;
                k[(i, j)] -= w;
                k[(j, i)] -= w;
                k[(i, i)] += w;
                k[(j, j)] += w;
            }
        }
        k
    }

    fn relative_gap(a: &SparseSymMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a.to_dense() - b).abs().max() / b.abs().max()
    }

    #[test]
    fn r0_matches_cotangent_weights() {
        let spec = SurfaceSpec::sphere(2, 1.0).unwrap();
        for level in [0, 1] {
            let mesh = generate(&spec, level).unwrap();
            let k = assemble_stiffness(&mesh, 0, 1).unwrap();
            assert!(relative_gap(&k, &cotangent_oracle(&mesh)) < 1e-10);
        }
        let ellipsoid = SurfaceSpec::ellipsoid(&[1.0, 0.7, 1.4]).unwrap();
        let mesh = generate(&ellipsoid, 1).unwrap();
        let k = assemble_stiffness(&mesh, 0, 2).unwrap();
        assert!(relative_gap(&k, &cotangent_oracle(&mesh)) < 1e-10);
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let cases = [
            (SurfaceSpec::sphere(2, 2.0).unwrap(), 0, 2),
            (SurfaceSpec::ellipsoid(&[1.0, 1.2, 0.8, 1.1]).unwrap(), 2, 1),
            (SurfaceSpec::clifford_torus(0.6, 0.8).unwrap(), 0, 1),
            (SurfaceSpec::flat_torus(1.0, 0.5).unwrap(), 0, 1),
        ];
        for (spec, r, level) in cases {
            let mesh = generate(&spec, level).unwrap();
            let k = assemble_stiffness(&mesh, r, default_quadrature_order(r)).unwrap();
            let worst = k.row_sums().iter().fold(0.0f64, |m, v: &f64| m.max(v.abs()));
            assert!(worst <= 1e-9 * k.max_abs(), "{spec}: {worst}");
            assert_eq!(k.to_dense(), k.to_dense().transpose());
        }
    }

    #[test]
    fn umbilic_three_sphere_r2_matches_r0() {
        let spec = SurfaceSpec::sphere(3, 1.0).unwrap();
        let mesh = generate(&spec, 1).unwrap();
        let k0 = assemble_stiffness(&mesh, 0, 1).unwrap();
        let k2 = assemble_stiffness(&mesh, 2, 2).unwrap();
        assert!(relative_gap(&k2, &k0.to_dense()) < 1e-9);
    }

    #[test]
    fn odd_order_is_rejected() {
        let mesh = generate(&SurfaceSpec::sphere(3, 1.0).unwrap(), 0).unwrap();
        assert!(matches!(assemble_stiffness(&mesh, 1, 1), Err(Error::InvalidOrder { .. })));
        assert!(matches!(assemble_stiffness(&mesh, 4, 1), Err(Error::InvalidOrder { .. })));
    }

    #[test]
    fn non_elliptic_error_carries_point() {
        let err = not_elliptic(-0.25, &[1.0, 0.0, 0.0]);
        match err {
            Error::NotElliptic { point, margin } => {
                assert_eq!(point, vec![1.0, 0.0, 0.0]);
                assert_eq!(margin, -0.25);
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn single_triangle_mass() {
        let spec = SurfaceSpec::sphere(2, 1.0).unwrap();
        let mut mesh = generate(&spec, 0).unwrap();
        // collapse the mesh to its first element: a unit right triangle
        let tri = crate::mesh::tests_support::single_triangle(&mut mesh);
        let m = assemble_mass(&tri, false).unwrap().to_dense();
        let expect = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]) * (0.5 / 12.0);
        assert!((m - expect).abs().max() < 1e-16);
        let lumped = assemble_mass(&tri, true).unwrap();
        assert_eq!(lumped.diagonal(), vec![1.0 / 6.0; 3]);
    }

    #[test]
    fn mass_totals() {
        let spec = SurfaceSpec::sphere(2, 1.0).unwrap();
        let mesh = generate(&spec, 3).unwrap();
        let measure = mesh.total_measure().unwrap();
        let ones = vec![1.0; mesh.n_vertices()];
        for lumped in [true, false] {
            let m = assemble_mass(&mesh, lumped).unwrap();
            let total: f64 = m.bilinear(&ones, &ones);
            assert!((total - measure).abs() < 1e-12);
            let exact = 4.0 * std::f64::consts::PI;
            assert!((total - exact).abs() / exact < 5e-3);
        }
    }

    #[test]
    fn stiffness_is_positive_semidefinite() {
        let spec = SurfaceSpec::ellipsoid(&[1.0, 0.8, 1.3, 1.0]).unwrap();
        let mesh = generate(&spec, 1).unwrap();
        let k = assemble_stiffness(&mesh, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm2: f64 = x.iter().map(|v| v * v).sum();
            assert!(k.bilinear(&x, &x) >= -1e-9 * k.max_abs() * norm2);
        }
    }

    #[test]
    fn assembly_is_thread_count_independent() {
        let spec = SurfaceSpec::ellipsoid(&[1.0, 0.9, 1.2]).unwrap();
        let mesh = generate(&spec, 2).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| assemble_stiffness(&mesh, 0, 2).unwrap())
        };
        let (a, b) = (run(1), run(4));
        let bits = |m: &SparseSymMatrix<f64>| m.entries().map(|(i, j, v)| (i, j, v.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn sphere_weak_residual_decreases() {
        let spec = SurfaceSpec::sphere(2, 1.0).unwrap();
        let res: Vec<f64> = (2..=4)
            .map(|l| weak_residual_lr_x(&generate(&spec, l).unwrap(), 0, 1, true).unwrap().total)
            .collect();
        for w in res.windows(2) {
            assert!(w[1] < w[0]);
            assert!((w[0] / w[1]).log2() >= 0.9, "{res:?}");
        }
    }

    #[test]
    fn torus_weak_residual_is_roundoff() {
        for spec in [
            SurfaceSpec::flat_torus(1.0, 1.0).unwrap(),
            SurfaceSpec::clifford_torus(0.5f64.sqrt(), 0.5f64.sqrt()).unwrap(),
        ] {
            let mesh = generate(&spec, 1).unwrap();
            let res = weak_residual_lr_x(&mesh, 0, 1, true).unwrap();
            assert!(res.relative < 1e-12, "{spec}: {}", res.relative);
        }
    }
}
