//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// One draw from CN(0, 1).
pub fn cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Vector of i.i.d. CN(0, var) entries.
pub fn cn_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, var: f64) -> CVec {
    let s = var.sqrt();
    CVec::from_fn(len, |_, _| cn01(rng) * s)
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// max |A - A^H| relative to max |A|.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            scale = scale.max(m[(i, j)].norm());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Low-rank factor `F` with `F F^H ~= R` for a Hermitian PSD `R`.
///
/// Diagonal-pivoted Cholesky; stops once the largest remaining diagonal
/// entry drops below `rel_tol * tr(R)`. Works for rank-deficient
/// matrices, where plain Cholesky fails.
pub fn psd_factor(r: &CMat, rel_tol: f64) -> CMat {
    let n = r.nrows();
    let mut d: Vec<f64> = (0..n).map(|i| r[(i, i)].re.max(0.0)).collect();
    let tol = rel_tol * d.iter().sum::<f64>();
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    let mut used = vec![false; n];
    loop {
        let (p, &dp) = match d
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
        {
            Some(x) => x,
            None => break,
        };
        if dp <= tol || dp <= 0.0 {
            break;
        }
        let s = dp.sqrt();
        let mut col = vec![ZERO; n];
        for i in 0..n {
            if used[i] {
                continue;
            }
            let mut v = r[(i, p)];
            for c in &cols {
                v -= c[i] * c[p].conj();
            }
            col[i] = v / s;
        }
        col[p] = Complex64::new(s, 0.0);
        used[p] = true;
        for i in 0..n {
            if !used[i] {
                d[i] -= col[i].norm_sqr();
            }
        }
        d[p] = 0.0;
        cols.push(col);
    }
    let rank = cols.len();
    CMat::from_fn(n, rank.max(1), |i, j| if j < rank { cols[j][i] } else { ZERO })
}
