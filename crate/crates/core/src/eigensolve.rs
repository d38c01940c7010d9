//! Bottom of the spectrum of `K u = lambda M u` for symmetric PSD `K` and SPD `M`.
//!
//! Large problems go through LOBPCG preconditioned by a shifted sparse Cholesky factor;
//! small ones (or on request) through a dense generalized eigensolver. The kernel, or any
//! other supplied subspace, is projected out in the `M` inner product at every step.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{EnvelopeCholesky, SparseSymMatrix};
use crate::scalar::Real;

/// Subspace removed from the problem before solving.
#[derive(Clone, Debug, PartialEq)]
pub enum Deflation<T> {
    /// The constant vector (kernel of a stiffness matrix on a connected closed mesh).
    Constants,
    /// Arbitrary vectors, each of the problem dimension.
    Vectors(Vec<Vec<T>>),
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    /// Dense below `dense_threshold` unknowns, LOBPCG above.
    Auto,
    Dense,
    Lobpcg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenOptions<T> {
    pub k: usize,
    /// Residual tolerance relative to `lambda + 1`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub deflation: Deflation<T>,
    pub method: SolverMethod,
    pub dense_threshold: usize,
}

impl<T> Default for EigenOptions<T> {
    fn default() -> Self {
        Self {
            k: 1,
            tol: 1e-8,
            max_iter: 1000,
            seed: 0x5eed,
            deflation: Deflation::Constants,
            method: SolverMethod::Auto,
            dense_threshold: 128,
        }
    }
}

impl<T> EigenOptions<T> {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }
}

/// Relative gap below which neighbouring eigenvalues are reported as one cluster.
pub const CLUSTER_GAP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralResult<T> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// `M`-orthonormal.
    pub eigenvectors: Vec<Vec<T>>,
    /// `||K u - lambda M u||` in the inverse-diagonal-mass norm, over `||u||_M`.
    pub residuals: Vec<T>,
    pub iterations: usize,
    pub solver_name: String,
    /// Index groups of numerically equal eigenvalues.
    pub clusters: Vec<Vec<usize>>,
}

impl<T: Real> SpectralResult<T> {
    /// Multiplicity of the cluster containing eigenvalue `i`.
    pub fn multiplicity(&self, i: usize) -> usize {
        self.clusters
            .iter()
            .find(|c| c.contains(&i))
            .map_or(1, Vec::len)
    }
}

/// `(v^T K v) / (v^T M v)`.
pub fn rayleigh_quotient<T: Real>(k: &SparseSymMatrix<T>, m: &SparseSymMatrix<T>, v: &[T]) -> Result<T> {
    let den = m.bilinear(v, v);
    if v.iter().all(|x| *x == T::zero()) || !(den > T::zero()) {
        return Err(Error::InvalidInput("Rayleigh quotient of a zero vector".into()));
    }
    Ok(k.bilinear(v, v) / den)
}

pub fn smallest_eigenpairs<T: Real>(
    k: &SparseSymMatrix<T>,
    m: &SparseSymMatrix<T>,
    options: &EigenOptions<T>,
) -> Result<SpectralResult<T>> {
    let dim = k.dim();
    if m.dim() != dim {
        return Err(Error::InvalidInput(format!(
            "stiffness has dimension {dim}, mass {}",
            m.dim()
        )));
    }
    check_mass(m)?;
    let z = deflation_basis(&options.deflation, dim)?;
    if options.k == 0 || options.k + z.ncols() > dim {
        return Err(Error::InvalidInput(format!(
            "cannot take {} eigenpairs from dimension {dim} with {} deflated directions",
            options.k,
            z.ncols()
        )));
    }
    let dense = match options.method {
        SolverMethod::Dense => true,
        SolverMethod::Lobpcg => false,
        SolverMethod::Auto => dim <= options.dense_threshold,
    };
    let (values, vectors, iterations, name) = if dense {
        let (l, v) = dense_solve(k, m, &z, options.k)?;
        (l, v, 0, "dense-generalized")
    } else {
        let (l, v, it) = lobpcg(k, m, &z, options)?;
        (l, v, it, "lobpcg-cholesky-shift")
    };
    let residuals = residual_norms(k, m, &values, &vectors);
    let clusters = cluster(&values);
    log::debug!(
        "{name}: {} pairs after {iterations} iterations, worst residual {:e}",
        values.len(),
        residuals.iter().fold(T::zero(), |a, b| a.max(*b))
    );
    Ok(SpectralResult {
        eigenvalues: values,
        eigenvectors: (0..vectors.ncols()).map(|c| vectors.column(c).iter().copied().collect()).collect(),
        residuals,
        iterations,
        solver_name: name.to_string(),
        clusters,
    })
}

fn check_mass<T: Real>(m: &SparseSymMatrix<T>) -> Result<()> {
    if m.is_diagonal() {
        if let Some(i) = m.diagonal().iter().position(|d| !(*d > T::zero())) {
            return Err(Error::InvalidMass(format!("non-positive diagonal entry at {i}")));
        }
        return Ok(());
    }
    EnvelopeCholesky::factor(m)
        .map(|_| ())
        .map_err(|e| Error::InvalidMass(e.to_string()))
}

fn deflation_basis<T: Real>(deflation: &Deflation<T>, dim: usize) -> Result<DMatrix<T>> {
    match deflation {
        Deflation::None => Ok(DMatrix::zeros(dim, 0)),
        Deflation::Constants => Ok(DMatrix::from_element(dim, 1, T::one())),
        Deflation::Vectors(vs) => {
            if let Some(v) = vs.iter().find(|v| v.len() != dim) {
                return Err(Error::InvalidInput(format!(
                    "deflation vector of length {} for dimension {dim}",
                    v.len()
                )));
            }
            Ok(DMatrix::from_fn(dim, vs.len(), |i, j| vs[j][i]))
        }
    }
}

/// Removes the `M`-projection onto `span(z)` from every column of `x`.
fn project_out<T: Real>(x: &mut DMatrix<T>, z: &DMatrix<T>, mz: &DMatrix<T>, gram_inv: &DMatrix<T>) {
    if z.ncols() == 0 {
        return;
    }
    let coeff = gram_inv * (mz.transpose() * &*x);
    *x -= z * coeff;
}

struct Deflator<T: Real> {
    z: DMatrix<T>,
    mz: DMatrix<T>,
    gram_inv: DMatrix<T>,
}

impl<T: Real> Deflator<T> {
    fn new(z: &DMatrix<T>, m: &SparseSymMatrix<T>) -> Result<Self> {
        let mz = m.mul_block(z);
        let gram = z.transpose() * &mz;
        let gram_inv = if z.ncols() == 0 {
            gram
        } else {
            gram.try_inverse()
                .ok_or_else(|| Error::InvalidInput("deflation vectors are linearly dependent".into()))?
        };
        Ok(Self {
            z: z.clone(),
            mz,
            gram_inv,
        })
    }

    fn apply(&self, x: &mut DMatrix<T>) {
        project_out(x, &self.z, &self.mz, &self.gram_inv);
        // second pass for the rounding left by the first
        project_out(x, &self.z, &self.mz, &self.gram_inv);
    }
}

/// Dense generalized solve restricted to the `M`-orthogonal complement of `z`.
fn dense_solve<T: Real>(
    k: &SparseSymMatrix<T>,
    m: &SparseSymMatrix<T>,
    z: &DMatrix<T>,
    count: usize,
) -> Result<(Vec<T>, DMatrix<T>)> {
    let dim = k.dim();
    let chol = m
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::InvalidMass("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidMass("singular mass factor".into()))?;
    let mut c = &l_inv * k.to_dense() * l_inv.transpose();
    c = (&c + c.transpose()) * T::lit(0.5);
    // y = L^T u; the constraint z^T M u = 0 becomes (L^T z)^T y = 0
    let w = l.transpose() * z;
    if w.ncols() > 0 {
        let q = w.qr().q();
        let proj = DMatrix::<T>::identity(dim, dim) - &q * q.transpose();
        let shift = T::one() + T::lit(2.0) * c.abs().max();
        c = &proj * &c * &proj + &q * q.transpose() * shift;
        c = (&c + c.transpose()) * T::lit(0.5);
    }
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite spectrum"));
    let chosen = &order[..count];
    let values = chosen.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(dim, count, |r, c| eig.eigenvectors[(r, chosen[c])]);
    let u = l_inv.transpose() * y;
    Ok((values, u))
}

enum Preconditioner<T: Real> {
    Cholesky(EnvelopeCholesky<T>),
    Jacobi(Vec<T>),
}

impl<T: Real> Preconditioner<T> {
    fn new(k: &SparseSymMatrix<T>, m: &SparseSymMatrix<T>) -> Self {
        let dim = k.dim();
        let md = m.diagonal();
        let scaled_trace: T = k.diagonal().iter().zip(&md).map(|(a, b)| *a / *b).sum();
        let sigma = T::lit(1e-2) * scaled_trace / T::from_usize_lossy(dim);
        let shifted = k.add_scaled(sigma, m);
        match EnvelopeCholesky::factor(&shifted) {
            Ok(chol) => Self::Cholesky(chol),
            Err(e) => {
                log::warn!("shifted factorization failed ({e}); falling back to Jacobi");
                Self::Jacobi(shifted.diagonal())
            }
        }
    }

    fn apply(&self, r: &DMatrix<T>) -> DMatrix<T> {
        let cols: Vec<Vec<T>> = (0..r.ncols())
            .into_par_iter()
            .map(|c| {
                let col: Vec<T> = r.column(c).iter().copied().collect();
                match self {
                    Self::Cholesky(chol) => chol.solve(&col),
                    Self::Jacobi(d) => col.iter().zip(d).map(|(x, y)| *x / *y).collect(),
                }
            })
            .collect();
        DMatrix::from_fn(r.nrows(), r.ncols(), |i, c| cols[c][i])
    }
}

/// `M`-orthonormal basis of the column span of `s` (twice-applied SVQB). Columns that are
/// numerically dependent are dropped.
fn svqb<T: Real>(s: &DMatrix<T>, m: &SparseSymMatrix<T>) -> DMatrix<T> {
    let drop = T::lit(T::EPS.sqrt() * 1e-2);
    let mut basis = s.clone();
    for _ in 0..2 {
        let ms = m.mul_block(&basis);
        let mut gram = basis.transpose() * ms;
        gram = (&gram + gram.transpose()) * T::lit(0.5);
        let scale: Vec<T> = (0..gram.nrows())
            .map(|i| {
                let g = gram[(i, i)];
                if g > T::zero() {
                    T::one() / g.sqrt()
                } else {
                    T::zero()
                }
            })
            .collect();
        let scaled = DMatrix::from_fn(gram.nrows(), gram.ncols(), |i, j| gram[(i, j)] * scale[i] * scale[j]);
        let eig = SymmetricEigen::new(scaled);
        let top = eig.eigenvalues.iter().fold(T::zero(), |a, b| a.max(*b));
        let mut keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > drop * top)
            .collect();
        keep.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite"));
        let transform = DMatrix::from_fn(gram.nrows(), keep.len(), |i, c| {
            let j = keep[c];
            scale[i] * eig.eigenvectors[(i, j)] / eig.eigenvalues[j].sqrt()
        });
        basis *= transform;
    }
    basis
}

fn column_norms_dual<T: Real>(r: &DMatrix<T>, md: &[T]) -> Vec<T> {
    (0..r.ncols())
        .map(|c| {
            r.column(c)
                .iter()
                .zip(md)
                .map(|(x, d)| *x * *x / *d)
                .sum::<T>()
                .sqrt()
        })
        .collect()
}

#[allow(clippy::type_complexity)]
fn lobpcg<T: Real>(
    k: &SparseSymMatrix<T>,
    m: &SparseSymMatrix<T>,
    z: &DMatrix<T>,
    options: &EigenOptions<T>,
) -> Result<(Vec<T>, DMatrix<T>, usize)> {
    let dim = k.dim();
    let want = options.k;
    let block = (want + (want / 2).max(2)).min(dim - z.ncols());
    let deflator = Deflator::new(z, m)?;
    let precond = Preconditioner::new(k, m);
    let md = m.diagonal();
    let tol = T::lit(options.tol);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut x = DMatrix::from_fn(dim, block, |_, _| T::lit(rng.gen_range(-1.0..1.0)));
    deflator.apply(&mut x);
    x = svqb(&x, m);
    let mut p: Option<DMatrix<T>> = None;
    let mut best = vec![f64::INFINITY; want];

    for iteration in 1..=options.max_iter {
        // Rayleigh-Ritz on span(X, W, P)
        let kx = k.mul_block(&x);
        let mx = m.mul_block(&x);
        let mut small = x.transpose() * &kx;
        small = (&small + small.transpose()) * T::lit(0.5);
        let lambda = DVector::from_iterator(x.ncols(), (0..x.ncols()).map(|i| small[(i, i)]));
        let mut r = kx - mx * DMatrix::from_diagonal(&lambda);

        let norms = column_norms_dual(&r, &md);
        let converged = (0..want).all(|i| norms[i] <= tol * (lambda[i].abs() + T::one()));
        for (b, n) in best.iter_mut().zip(&norms) {
            *b = b.min(n.as_f64());
        }
        if converged {
            let mut values: Vec<T> = lambda.iter().take(want).copied().collect();
            let mut vectors = x.columns(0, want).into_owned();
            sort_pairs(&mut values, &mut vectors);
            return Ok((values, vectors, iteration));
        }
        if iteration % 50 == 0 {
            log::debug!("lobpcg iteration {iteration}: residuals {:?}", &norms[..want]);
        }

        deflator.apply(&mut r);
        let mut w = precond.apply(&r);
        deflator.apply(&mut w);

        let mut span_cols = vec![x.clone(), w];
        if let Some(p) = &p {
            span_cols.push(p.clone());
        }
        let total: usize = span_cols.iter().map(|b| b.ncols()).sum();
        let mut s = DMatrix::zeros(dim, total);
        let mut col = 0;
        for blockm in &span_cols {
            s.columns_mut(col, blockm.ncols()).copy_from(blockm);
            col += blockm.ncols();
        }
        deflator.apply(&mut s);
        let s = svqb(&s, m);
        let ks = k.mul_block(&s);
        let mut reduced = s.transpose() * ks;
        reduced = (&reduced + reduced.transpose()) * T::lit(0.5);
        let eig = SymmetricEigen::new(reduced);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite"));
        let coeffs = DMatrix::from_fn(s.ncols(), block, |i, c| eig.eigenvectors[(i, order[c])]);
        let x_new = &s * coeffs;
        // search direction: the part of the update outside the previous iterate
        let overlap = mx_transpose(&x, m, &x_new);
        let p_new = &x_new - &x * overlap;
        p = Some(p_new);
        x = x_new;
    }
    Err(Error::NotConverged {
        iterations: options.max_iter,
        residuals: best,
    })
}

fn mx_transpose<T: Real>(x: &DMatrix<T>, m: &SparseSymMatrix<T>, y: &DMatrix<T>) -> DMatrix<T> {
    x.transpose() * m.mul_block(y)
}

fn sort_pairs<T: Real>(values: &mut Vec<T>, vectors: &mut DMatrix<T>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, c| vectors[(r, order[c])]);
    *values = sorted_values;
    *vectors = sorted_vectors;
}

fn residual_norms<T: Real>(
    k: &SparseSymMatrix<T>,
    m: &SparseSymMatrix<T>,
    values: &[T],
    vectors: &DMatrix<T>,
) -> Vec<T> {
    let md = m.diagonal();
    let kv = k.mul_block(vectors);
    let mv = m.mul_block(vectors);
    (0..values.len())
        .map(|c| {
            let norm_m = vectors.column(c).dot(&mv.column(c)).max(T::zero()).sqrt();
            let r: Vec<T> = (0..k.dim()).map(|i| kv[(i, c)] - values[c] * mv[(i, c)]).collect();
            let dual = r.iter().zip(&md).map(|(x, d)| *x * *x / *d).sum::<T>().sqrt();
            dual / norm_m
        })
        .collect()
}

fn cluster<T: Real>(values: &[T]) -> Vec<Vec<usize>> {
    let gap = T::lit(CLUSTER_GAP);
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(group) if {
                let prev = values[*group.last().expect("non-empty group")];
                (*v - prev).abs() <= gap * v.abs().max(prev.abs())
            } =>
            {
                group.push(i)
            }
            _ => out.push(vec![i]),
        }
    }
    out
}
