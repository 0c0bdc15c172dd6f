//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Uniform sample on the unit sphere S^{d-1}.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let v = std_gaussian(rng, d);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Standard Gaussian vector N(0, I_d).
pub fn std_gaussian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        g
    })
}

/// Orthonormalizes the columns of a Gaussian d x k matrix via QR.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> DMatrix<f64> {
    assert!(k <= d);
    let g = DMatrix::from_fn(d, k, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        x
    });
    let qr = g.qr();
    let mut q = qr.q();
    fix_column_signs(&mut q);
    q
}

/// Flips column signs so the first entry of largest magnitude is positive.
/// Makes orthonormal frames (and eigenvector outputs) deterministic.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let lead = col
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap_or(0.0);
        if lead < 0.0 {
            col.neg_mut();
        }
    }
}

/// tan of the angle between a vector and a unit direction.
pub fn tan_angle(a: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let c = a.dot(v).abs();
    if c == 0.0 {
        return f64::INFINITY;
    }
    let proj = a - v * a.dot(v);
    proj.norm() / c
}

/// sin of the largest principal angle between the column spans of `x`
/// and `u` (both with orthonormal columns): ||(I - XX^T) U||_2.
pub fn sin_principal_angle(x: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    let proj = u - x * (x.transpose() * u);
    proj.norm() // spectral norm of a thin residual; use 2-norm via SVD
        .min(svd_spectral_norm(&proj))
}

fn svd_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values[0]
}

/// Max absolute entry of X^T X - I; orthonormality defect.
pub fn orthonormality_defect(x: &DMatrix<f64>) -> f64 {
    let g = x.transpose() * x - DMatrix::identity(x.ncols(), x.ncols());
    g.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Least-squares slope and its standard error for y = a + b x.
pub fn linfit_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let dof = (xs.len().max(3) - 2) as f64;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (a + b * x);
            e * e
        })
        .sum();
    let se = (ss_res / dof / sxx).sqrt();
    (b, se)
}

/// Median of a slice (averages the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Double factorial n!! (n odd), as used in Gaussian moments.
pub fn double_factorial(n: u32) -> f64 {
    let mut out = 1.0;
    let mut k = n;
    while k > 1 {
        out *= k as f64;
        k -= 2;
    }
    out
}

/// Binomial coefficient as f64.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Number of k-subsets of [n] as usize (exact for the sizes used here).
pub fn choose(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i as u128 + 1);
    }
    out as usize
}
