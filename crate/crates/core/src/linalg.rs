//! Dense linear-algebra helpers on top of `nalgebra`.
//!
//! Everything here works on small dynamic matrices (`N <= 32`); no attempt is
//! made to exploit sparsity.

use nalgebra::{Complex, ComplexField, DMatrix, Dyn, SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<C64>;

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn real_part(a: &CMat) -> RMat {
    a.map(|z| z.re)
}

/// Entry-wise 2-norm (Frobenius) of a complex matrix.
pub fn cnorm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn symmetrize(a: &RMat) -> RMat {
    (a + a.transpose()) * 0.5
}

pub fn max_asymmetry(a: &RMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Largest absolute entry of `A^T A - 1`.
pub fn orthogonality_defect(v: &RMat) -> f64 {
    let g = v.transpose() * v - RMat::identity(v.ncols(), v.ncols());
    g.amax()
}

/// Convergence threshold handed to the bidiagonal QR iteration. The library
/// default (machine epsilon) can stop early on complex input with clustered
/// singular values, leaving reconstruction errors around 1e-3.
const SVD_EPS: f64 = 1e-20;
const SVD_MAX_ITER: usize = 100_000;

/// Singular value decomposition with a tight convergence threshold.
///
/// Rectangular input is first reduced to its square triangular QR factor:
/// the bidiagonal iteration is unreliable on tall, nearly orthonormal complex
/// blocks (reconstruction errors near 1e-2) but accurate on the factor.
pub fn svd<T>(a: &DMatrix<T>, compute_u: bool, compute_v: bool) -> SVD<T, Dyn, Dyn>
where
    T: ComplexField<RealField = f64>,
{
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.adjoint(), compute_v, compute_u);
        return SVD {
            u: t.v_t.map(|vt| vt.adjoint()),
            v_t: t.u.map(|u| u.adjoint()),
            singular_values: t.singular_values,
        };
    }
    if m > n {
        let qr = a.clone().qr();
        let inner = square_svd(&qr.r(), compute_u, compute_v);
        return SVD {
            u: inner.u.map(|u| qr.q() * u),
            v_t: inner.v_t,
            singular_values: inner.singular_values,
        };
    }
    square_svd(a, compute_u, compute_v)
}

fn square_svd<T>(a: &DMatrix<T>, compute_u: bool, compute_v: bool) -> SVD<T, Dyn, Dyn>
where
    T: ComplexField<RealField = f64>,
{
    a.clone()
        .try_svd(compute_u, compute_v, SVD_EPS, SVD_MAX_ITER)
        .unwrap_or_else(|| a.clone().svd(compute_u, compute_v))
}

pub fn singular_values<T>(a: &DMatrix<T>) -> Vec<f64>
where
    T: ComplexField<RealField = f64>,
{
    svd(a, false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Operator-norm deviation `||U^dagger U - 1||_2` of a complex matrix.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let g = u.adjoint() * u - CMat::identity(u.ncols(), u.ncols());
    singular_values(&g).into_iter().fold(0.0, f64::max)
}

/// Eigendecomposition of a real symmetric matrix with ascending eigenvalues.
pub fn sorted_symmetric_eigen(a: &RMat) -> (Vec<f64>, RMat) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = RMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `V diag(phases) V^T` for a real orthogonal `V`.
pub fn spectral_synthesis(vectors: &RMat, phases: &[C64]) -> CMat {
    let n = vectors.nrows();
    let mut out = CMat::zeros(n, n);
    for (k, &p) in phases.iter().enumerate() {
        let v = vectors.column(k);
        for i in 0..n {
            let vi = p * v[i];
            for j in 0..n {
                out[(i, j)] += vi * v[j];
            }
        }
    }
    out
}

/// Moore-Penrose pseudoinverse with singular values below `rcond * sigma_max`
/// discarded. Returns the pseudoinverse and the 2-norm condition number.
pub fn pinv(a: &CMat, rcond: f64) -> (CMat, f64) {
    let svd = svd(a, true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let cutoff = rcond * smax;
    let mut out = CMat::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..a.ncols() {
            let vik = vt[(k, i)].conj() * inv;
            for j in 0..a.nrows() {
                out[(i, j)] += vik * u[(j, k)].conj();
            }
        }
    }
    (out, cond)
}

/// Nearest orthogonal matrix in Frobenius norm (polar factor `U W^T`).
pub fn nearest_orthogonal(a: &RMat) -> RMat {
    let svd = svd(a, true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
}

/// Exponential of a real skew-symmetric matrix; the result is re-projected
/// onto the orthogonal group to remove Padé round-off.
pub fn expm_skew(k: &RMat) -> RMat {
    let e = k.clone().exp();
    let defect = orthogonality_defect(&e);
    if defect > 1e-14 {
        nearest_orthogonal(&e)
    } else {
        e
    }
}

/// Eigenvalues of a general complex square matrix via the complex Schur form.
pub fn complex_eigenvalues(a: &CMat) -> Vec<C64> {
    let n = a.nrows();
    if n == 1 {
        return vec![a[(0, 0)]];
    }
    let schur = nalgebra::Schur::new(a.clone());
    let (_, t) = schur.unpack();
    (0..n).map(|i| t[(i, i)]).collect()
}

/// Haar-random real orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> RMat {
    let g = RMat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar-random unitary (Mezzadri's recipe).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = CMat::from_fn(n, n, |_, _| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal) * scale,
            rng.sample::<f64, _>(StandardNormal) * scale,
        )
    });
    let (mut q, r) = g.qr().unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Random skew-symmetric matrix with i.i.d. Gaussian upper entries of the given scale.
pub fn random_skew<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> RMat {
    let mut k = RMat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let x = rng.sample::<f64, _>(StandardNormal) * scale;
            k[(i, j)] = x;
            k[(j, i)] = -x;
        }
    }
    k
}

/// Frobenius inner product of two real matrices.
pub fn dot(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
