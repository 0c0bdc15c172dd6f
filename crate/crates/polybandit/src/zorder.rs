//! Zeroth-order gradient-style estimators.
//!
//! All stochastic algorithms here share one primitive: probe the reward at
//! Gaussian-perturbed actions and average `reward * probe` to estimate a
//! matrix-vector or tensor-vector product. Probes are drawn with variance
//! 1/m per coordinate and the whole batch is re-sampled if any probe leaves
//! the unit ball, so every perturbed action stays feasible.

use crate::env::{Action, BanditSession};
use crate::util::{binomial, double_factorial};
use crate::{Error, Result};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Batch-level knobs for one estimator call.
#[derive(Debug, Clone, Copy)]
pub struct BatchParams {
    /// Number of probes (pulls are n for the matrix estimator, 2n for the
    /// tensor estimator with its control action).
    pub n: usize,
    /// Inverse-variance scale of the probes: z ~ N(0, I_d / m).
    pub m: f64,
}

/// Default probe scale m = ceil(c_m * d * ln(n/delta)), floored so a batch
/// of n probes stays inside the unit ball with probability ~0.95: the
/// chi-square tail P(|z|^2 m >= d + 2 sqrt(d x) + 2 x) <= e^{-x} at
/// x = ln(20 n) keeps whole-batch resampling rare for any c_m.
pub fn default_m(c_m: f64, d: usize, n: usize, delta: f64) -> f64 {
    let formula = c_m * d as f64 * ((n.max(2) as f64) / delta).ln();
    let x = (20.0 * n.max(2) as f64).ln();
    let floor = d as f64 + 2.0 * (d as f64 * x).sqrt() + 2.0 * x;
    formula.max(floor).ceil()
}

/// A batch of Gaussian probes with the rewards observed on them.
#[derive(Debug, Clone)]
pub struct ProbeBatch {
    pub n: usize,
    pub m: f64,
    pub probes: Vec<DVector<f64>>,
    pub rewards: Vec<f64>,
    pub control_rewards: Vec<f64>,
    /// Whole-batch resamples forced by an out-of-ball probe.
    pub resamples: u32,
}

const MAX_BATCH_RESAMPLES: u32 = 100;

/// Draws n probes z_i ~ N(0, I_d / m), re-sampling the whole batch while
/// any probe has norm above 1.
pub fn sample_probes<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: f64,
    d: usize,
) -> Result<ProbeBatch> {
    assert!(n >= 1 && m >= 1.0);
    let scale = 1.0 / m.sqrt();
    let mut resamples = 0u32;
    'batch: loop {
        let mut probes = Vec::with_capacity(n);
        for _ in 0..n {
            let z = DVector::from_fn(d, |_, _| {
                let g: f64 = StandardNormal.sample(rng);
                g * scale
            });
            if z.norm() > 1.0 {
                resamples += 1;
                if resamples >= MAX_BATCH_RESAMPLES {
                    return Err(Error::ProbeResampleLimit(resamples));
                }
                continue 'batch;
            }
            probes.push(z);
        }
        return Ok(ProbeBatch {
            n,
            m,
            probes,
            rewards: Vec::new(),
            control_rewards: Vec::new(),
            resamples,
        });
    }
}

/// Estimates (1/2) M a for a quadratic session by playing (a + z_i)/2 and
/// averaging m * r_i * z_i. Consumes n pulls.
pub fn estimate_matrix_action<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    a: &DVector<f64>,
    params: BatchParams,
) -> Result<DVector<f64>> {
    let d = a.len();
    let mut batch = sample_probes(rng, params.n, params.m, d)?;
    let mut acc = DVector::zeros(d);
    for z in &batch.probes {
        let action = Action::Vector((a + z) * 0.5);
        let r = session.pull(&action)?;
        batch.rewards.push(r);
        acc += z * r;
    }
    Ok(acc * (params.m / params.n as f64))
}

/// Empirical operator G_n for a degree-p symmetric session:
/// G_n(a) = (m/n) sum_i (r_i - r'_i) z_i with perturbed action
/// (1 - 1/2p) a + z_i/2p and control action z_i/2p. Consumes 2n pulls.
pub fn estimate_tensor_g<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    a: &DVector<f64>,
    p: u32,
    params: BatchParams,
) -> Result<DVector<f64>> {
    assert!(p >= 2);
    let d = a.len();
    let zeta = 1.0 / (2.0 * p as f64);
    let mut batch = sample_probes(rng, params.n, params.m, d)?;
    let mut acc = DVector::zeros(d);
    for z in &batch.probes {
        let perturbed = Action::Vector(a * (1.0 - zeta) + z * zeta);
        let r = session.pull(&perturbed)?;
        // Control action with fresh independent noise; removes the pure-probe
        // tensor term from the average.
        let control = Action::Vector(z * zeta);
        let r_ctl = session.pull(&control)?;
        batch.rewards.push(r);
        batch.control_rewards.push(r_ctl);
        acc += z * (r - r_ctl);
    }
    Ok(acc * (params.m / params.n as f64))
}

/// Population operator G(a) for a symmetric degree-p model: the exact
/// expectation of [`estimate_tensor_g`] with the trailing odd term dropped
/// (for even p that term acts as a matrix product and is treated as noise).
///
/// G(a) = sum_{s=0}^{floor((p-3)/2)} (1-z)^{p-2s-1} z^{2s+1} C(p,2s+1)
///        (2s+1)!! m^{-s} sum_j lambda_j (v_j^T a)^{p-2s-1} v_j,  z = 1/2p.
///
/// The double factorial is the Gaussian moment E[(z^T v)^{2s+1} (z^T v)] m^{s+1};
/// with it, the s-indexed sum reproduces E[G_n] exactly for odd p.
/// Test oracle and infinite-sample ablation only.
pub fn closed_form_g(
    lambdas: &[f64],
    frame: &nalgebra::DMatrix<f64>,
    a: &DVector<f64>,
    p: u32,
    m: f64,
) -> Result<DVector<f64>> {
    if p < 3 {
        return Err(Error::InvalidParameter("closed-form G needs p >= 3".into()));
    }
    let d = a.len();
    let zeta = 1.0 / (2.0 * p as f64);
    let mut out = DVector::zeros(d);
    let s_max = (p as i64 - 3).div_euclid(2);
    for s in 0..=s_max {
        let s = s as u32;
        let coeff = (1.0 - zeta).powi((p - 2 * s - 1) as i32)
            * zeta.powi((2 * s + 1) as i32)
            * binomial(p, 2 * s + 1)
            * double_factorial(2 * s + 1)
            / m.powi(s as i32);
        let power = (p - 2 * s - 1) as i32;
        for (j, &lam) in lambdas.iter().enumerate() {
            let c = frame.column(j).dot(a);
            out.axpy(coeff * lam * c.powi(power), &frame.column(j).into_owned(), 1.0);
        }
    }
    Ok(out)
}

/// The exact expectation term dropped by [`closed_form_g`] for even p
/// (the s = p/2 - 1 summand). Zero vector for odd p.
pub fn even_p_bias_term(
    lambdas: &[f64],
    frame: &nalgebra::DMatrix<f64>,
    a: &DVector<f64>,
    p: u32,
    m: f64,
) -> DVector<f64> {
    let d = a.len();
    let mut out = DVector::zeros(d);
    if !p.is_multiple_of(2) {
        return out;
    }
    let zeta = 1.0 / (2.0 * p as f64);
    let coeff = (1.0 - zeta)
        * zeta.powi((p - 1) as i32)
        * binomial(p, p - 1)
        * double_factorial(p - 1)
        / m.powi((p / 2 - 1) as i32);
    for (j, &lam) in lambdas.iter().enumerate() {
        let c = frame.column(j).dot(a);
        out.axpy(coeff * lam * c, &frame.column(j).into_owned(), 1.0);
    }
    out
}
