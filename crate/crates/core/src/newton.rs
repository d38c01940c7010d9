//! Newton tensors and higher-order mean curvatures in arbitrary codimension.
//!
//! Every quantity is computed by expanding the generalized-Kronecker-symbol formulas directly.
//! Only index tuples with pairwise distinct entries contribute, and the upper tuple must then
//! be a permutation of the lower one, so the sum runs over distinct lower tuples and signed
//! permutations. Pair products `<B_ij, B_kl>` are tabulated once per sample.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::immersion::GeometrySample;
use crate::scalar::{binomial, factorial, Real};

/// Generalized Kronecker symbol `delta^{upper}_{lower}`: the determinant of the matrix
/// `[delta(upper_a, lower_b)]`.
pub fn generalized_kronecker(upper: &[usize], lower: &[usize]) -> Result<i32> {
    if upper.len() != lower.len() {
        return Err(Error::InvalidIndex(format!(
            "tuples of different length ({} vs {})",
            upper.len(),
            lower.len()
        )));
    }
    let k = upper.len();
    let mut perm = Vec::with_capacity(k);
    for u in upper {
        match lower.iter().position(|l| l == u) {
            Some(pos) => perm.push(pos),
            None => return Ok(0),
        }
    }
    // a repeat in either tuple shows up as a repeated position
    let mut seen = vec![false; k];
    for &p in &perm {
        if seen[p] {
            return Ok(0);
        }
        seen[p] = true;
    }
    if lower.iter().enumerate().any(|(a, x)| lower[..a].contains(x)) {
        return Ok(0);
    }
    Ok(permutation_sign(&perm))
}

fn permutation_sign(perm: &[usize]) -> i32 {
    let mut visited = vec![false; perm.len()];
    let mut sign = 1;
    for start in 0..perm.len() {
        if visited[start] {
            continue;
        }
        let mut len = 0;
        let mut at = start;
        while !visited[at] {
            visited[at] = true;
            at = perm[at];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// All permutations of `0..k` with their signs.
fn signed_permutations(k: usize) -> Vec<(Vec<usize>, i32)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<(Vec<usize>, i32)>) {
        if prefix.len() == used.len() {
            out.push((prefix.clone(), permutation_sign(prefix)));
            return;
        }
        for x in 0..used.len() {
            if !used[x] {
                used[x] = true;
                prefix.push(x);
                rec(prefix, used, out);
                prefix.pop();
                used[x] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// Tabulated `<B_ij, B_kl>`.
struct PairTable<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> PairTable<T> {
    fn new(sample: &GeometrySample<T>) -> Self {
        let n = sample.dim();
        let mut data = Vec::with_capacity(n * n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        data.push(sample.b_inner(i, j, k, l));
                    }
                }
            }
        }
        Self { n, data }
    }

    #[inline]
    fn get(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        self.data[((i * self.n + j) * self.n + k) * self.n + l]
    }
}

/// One Kronecker-contracted sum
/// `(1/m!) sum delta^{j_1..j_m [j]}_{i_1..i_m [i]} <B,B>...<B,B> [h_{i_m j_m}]`
/// over `m` summed index pairs, optionally with a free pair `(i, j)` appended and the last
/// summed pair contracted against a single normal component `tail`.
struct Expansion<'a, T> {
    pairs: &'a PairTable<T>,
    perms: Vec<(Vec<usize>, i32)>,
    summed: usize,
    tail: Option<&'a DMatrix<T>>,
}

impl<'a, T: Real> Expansion<'a, T> {
    fn new(
        pairs: &'a PairTable<T>,
        summed: usize,
        free: bool,
        tail: Option<&'a DMatrix<T>>,
    ) -> Self {
        debug_assert_eq!(summed % 2 == 1, tail.is_some());
        Self {
            pairs,
            perms: signed_permutations(summed + usize::from(free)),
            summed,
            tail,
        }
    }

    fn eval(&self, free: Option<(usize, usize)>) -> T {
        let n = self.pairs.n;
        let mut lower = Vec::with_capacity(self.summed + 1);
        let mut total = T::zero();
        self.walk(n, free, &mut lower, &mut total);
        total / T::lit(factorial(self.summed) as f64)
    }

    fn walk(&self, n: usize, free: Option<(usize, usize)>, lower: &mut Vec<usize>, total: &mut T) {
        if lower.len() == self.summed {
            let mut full = lower.clone();
            if let Some((i, _)) = free {
                full.push(i);
            }
            for (perm, sign) in &self.perms {
                if let Some((_, j)) = free {
                    if full[perm[self.summed]] != j {
                        continue;
                    }
                }
                let upper = |a: usize| full[perm[a]];
                let mut term = T::lit(f64::from(*sign));
                let paired = self.summed - usize::from(self.tail.is_some());
                for p in (0..paired).step_by(2) {
                    term *= self
                        .pairs
                        .get(full[p], upper(p), full[p + 1], upper(p + 1));
                }
                if let Some(h) = self.tail {
                    let last = self.summed - 1;
                    term *= h[(full[last], upper(last))];
                }
                *total += term;
            }
            return;
        }
        for x in 0..n {
            if lower.contains(&x) || free.is_some_and(|(i, _)| i == x) {
                continue;
            }
            lower.push(x);
            self.walk(n, free, lower, total);
            lower.pop();
        }
    }
}

/// Newton tensor `T^r` and the curvature scalars attached to it at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonData<T: Real> {
    pub r: usize,
    /// Orthonormal-frame components `T^r_ij`.
    pub t_r: DMatrix<T>,
    pub s_r: T,
    pub h_r: T,
    /// Components of the vector `S_{r+1}` on the normal frame.
    pub s_next: DVector<T>,
    /// `|H_{r+1}|^2`.
    pub h_next_norm2: T,
    /// Smallest eigenvalue of `T^r`.
    pub ellipticity_margin: T,
}

impl<T: Real> NewtonData<T> {
    /// `S_{r+1}` as an ambient vector.
    pub fn s_next_ambient(&self, sample: &GeometrySample<T>) -> DVector<T> {
        let mut out = DVector::zeros(sample.position.len());
        for (s, e) in self.s_next.iter().zip(&sample.normal_frame) {
            out.axpy(*s, e, T::one());
        }
        out
    }
}

/// Mixed tensors `T^{r-1}_a`, one `n x n` matrix per normal direction.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedNewtonData<T: Real> {
    pub r_minus_1: usize,
    pub t_alpha: Vec<DMatrix<T>>,
}

fn check_even_order(r: usize, n: usize) -> Result<()> {
    if !r.is_multiple_of(2) {
        return Err(Error::InvalidOrder {
            order: r,
            dim: n,
            reason: "r must be even",
        });
    }
    if n == 0 || r > n - 1 {
        return Err(Error::InvalidOrder {
            order: r,
            dim: n,
            reason: "need 0 <= r <= n - 1",
        });
    }
    Ok(())
}

/// `T^r`, `S_r`, `S_{r+1}` and their normalizations at one sample.
pub fn newton_tensor<T: Real>(sample: &GeometrySample<T>, r: usize) -> Result<NewtonData<T>> {
    let n = sample.dim();
    check_even_order(r, n)?;
    let pairs = PairTable::new(sample);

    let t_r = if r == 0 {
        DMatrix::identity(n, n)
    } else {
        let tensor = Expansion::new(&pairs, r, true, None);
        let mut t = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = tensor.eval(Some((i, j)));
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        t
    };

    let s_r = if r == 0 {
        T::one()
    } else {
        Expansion::new(&pairs, r, false, None).eval(None)
    };

    let s_next = DVector::from_iterator(
        sample.codim(),
        sample
            .second_fundamental
            .iter()
            .map(|h| Expansion::new(&pairs, r + 1, false, Some(h)).eval(None)),
    );

    let h_r = s_r / T::lit(binomial(n, r) as f64);
    let c_next = T::lit(binomial(n, r + 1) as f64);
    let h_next_norm2 = s_next.norm_squared() / (c_next * c_next);
    let ellipticity_margin = smallest_eigenvalue(&t_r);

    Ok(NewtonData {
        r,
        t_r,
        s_r,
        h_r,
        s_next,
        h_next_norm2,
        ellipticity_margin,
    })
}

/// `T^{r-1}_a` for odd `r - 1`.
pub fn mixed_newton_tensor<T: Real>(
    sample: &GeometrySample<T>,
    r_minus_1: usize,
) -> Result<MixedNewtonData<T>> {
    let n = sample.dim();
    if r_minus_1 % 2 != 1 || r_minus_1 > n - 1 {
        return Err(Error::InvalidOrder {
            order: r_minus_1,
            dim: n,
            reason: "r - 1 must be odd with 1 <= r - 1 <= n - 1",
        });
    }
    let pairs = PairTable::new(sample);
    let t_alpha = sample
        .second_fundamental
        .iter()
        .map(|h| {
            let tensor = Expansion::new(&pairs, r_minus_1, true, Some(h));
            let mut t = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = tensor.eval(Some((i, j)));
                    t[(i, j)] = v;
                    t[(j, i)] = v;
                }
            }
            t
        })
        .collect();
    Ok(MixedNewtonData {
        r_minus_1,
        t_alpha,
    })
}

/// Classical codimension-one Newton transformation `P_r = S_r I - A P_{r-1}`, `P_0 = I`, for a
/// symmetric shape operator `A`. The elementary symmetric functions come from the power sums
/// `tr(A^k)` through Newton's identities, so no eigen-decomposition is involved.
pub fn hypersurface_oracle_matrix<T: Real>(shape: &DMatrix<T>, r: usize) -> DMatrix<T> {
    let n = shape.nrows();
    let mut power = DMatrix::identity(n, n);
    let mut power_sums = Vec::with_capacity(r);
    for _ in 0..r {
        power = &power * shape;
        power_sums.push(power.trace());
    }
    let mut elem = vec![T::one()];
    for k in 1..=r {
        let mut acc = T::zero();
        for i in 1..=k {
            let term = elem[k - i] * power_sums[i - 1];
            acc += if i % 2 == 1 { term } else { -term };
        }
        elem.push(acc / T::from_usize_lossy(k));
    }
    let mut p = DMatrix::identity(n, n);
    for e in elem.iter().skip(1) {
        p = DMatrix::identity(n, n) * *e - shape * &p;
    }
    p
}

/// [`hypersurface_oracle_matrix`] for a diagonal shape operator.
pub fn hypersurface_oracle<T: Real>(principal_curvatures: &[T], r: usize) -> DMatrix<T> {
    let shape = DMatrix::from_diagonal(&DVector::from_column_slice(principal_curvatures));
    hypersurface_oracle_matrix(&shape, r)
}

/// `sum_ij T^r_ij e_i e_j^T` as a symmetric ambient matrix.
pub fn ambient_pushforward<T: Real>(sample: &GeometrySample<T>, nd: &NewtonData<T>) -> DMatrix<T> {
    let dim = sample.position.len();
    let frame = DMatrix::from_columns(&sample.tangent_frame);
    let out = &frame * &nd.t_r * frame.transpose();
    debug_assert_eq!(out.nrows(), dim);
    (&out + out.transpose()) * T::lit(0.5)
}

/// Mean curvature vector `H = (1/n) sum_i B_ii` on the normal frame.
pub fn mean_curvature<T: Real>(sample: &GeometrySample<T>) -> DVector<T> {
    let n = T::from_usize_lossy(sample.dim());
    DVector::from_iterator(
        sample.codim(),
        sample.second_fundamental.iter().map(|h| h.trace() / n),
    )
}

/// Pointwise defects of the algebraic identities relating `T^r`, `S_r` and `S_{r+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityDefects<T> {
    /// `|trace(T^r) - (n - r) S_r|`.
    pub trace: T,
    /// Worst of `|S_r - (1/r) sum T^{r-1}_a h^a|` and
    /// `max_a |(1/(r+1)) sum T^r_ij h^a_ij - S^a_{r+1}|`.
    pub contraction: T,
}

pub fn identity_defects<T: Real>(
    sample: &GeometrySample<T>,
    nd: &NewtonData<T>,
) -> Result<IdentityDefects<T>> {
    let n = sample.dim();
    let r = nd.r;
    let trace = (nd.t_r.trace() - T::from_usize_lossy(n - r) * nd.s_r).abs();
    let mut contraction = T::zero();
    let r1 = T::from_usize_lossy(r + 1);
    for (h, s) in sample.second_fundamental.iter().zip(nd.s_next.iter()) {
        let d = (nd.t_r.component_mul(h).sum() / r1 - *s).abs();
        contraction = contraction.max(d);
    }
    if r >= 2 {
        let mixed = mixed_newton_tensor(sample, r - 1)?;
        let sum: T = mixed
            .t_alpha
            .iter()
            .zip(&sample.second_fundamental)
            .map(|(t, h)| t.component_mul(h).sum())
            .sum();
        contraction = contraction.max((sum / T::from_usize_lossy(r) - nd.s_r).abs());
    }
    Ok(IdentityDefects { trace, contraction })
}

pub(crate) fn smallest_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    match m.nrows() {
        0 => T::zero(),
        1 => m[(0, 0)],
        _ => m
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b)),
    }
}
