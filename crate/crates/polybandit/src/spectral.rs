//! Quadratic-reward solvers: noisy power method and noisy subspace
//! iteration, their gap-free variants, the shift / asymmetric reductions,
//! and the explore-then-commit wrapper.
//!
//! Batch sizes and iteration counts follow the gap-parameterized formulas
//! n = c_n d^2 ln(d/delta) / (lambda_1 (1 - alpha) eps)^2 and
//! L = floor(c_l boost ln(d/eps)) + 1 with boost = 1 in the gap regime and
//! boost = 2/eps^2 in the gap-free regime (alpha = 1 - eps^2/2). The
//! spectrum parameters (lambda_1, alpha) are oracle inputs from the config;
//! an n-doubling schedule covers the agnostic case.

use crate::env::{Action, BanditSession, ModelKind, RewardModel};
use crate::util::{fix_column_signs, orthonormality_defect, tan_angle, unit_sphere};
use crate::zorder::{default_m, estimate_matrix_action, BatchParams};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Tunable constants; `c_*` defaults were pinned once on d = 8.
#[derive(Debug, Clone)]
pub struct SpectralConfig {
    pub c_n: f64,
    pub c_l: f64,
    pub c_m: f64,
    pub delta: f64,
    /// Multiplies the iteration count (gap-free mode raises it).
    pub boost: f64,
    /// Replace the sampled estimator by the exact product (ablations/tests;
    /// consumes no pulls).
    pub exact_oracle: bool,
    /// Added as `shift * a` to the matrix-action estimate (PSD shift).
    pub shift: f64,
    /// Per-iteration batch size override (budget-driven ETC runs).
    pub batch_override: Option<usize>,
    /// Iteration-count override (budget-driven ETC runs).
    pub iters_override: Option<usize>,
    /// Fixed start iterate instead of a random sphere point.
    pub start: Option<DVector<f64>>,
    /// Stop as soon as the iterate's true suboptimality falls below this
    /// (harness measurement; needs the visible model).
    pub stop_at_subopt: Option<f64>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            c_n: 8.0,
            c_l: 4.0,
            c_m: 4.0,
            delta: 0.1,
            boost: 1.0,
            exact_oracle: false,
            shift: 0.0,
            batch_override: None,
            iters_override: None,
            start: None,
            stop_at_subopt: None,
        }
    }
}

/// Spectrum facts the theorems parameterize by; supplied from the config
/// (oracle mode) rather than estimated.
#[derive(Debug, Clone, Copy)]
pub struct OracleParams {
    pub lambda1: f64,
    /// alpha = |lambda_2 / lambda_1| (0 for rank-1).
    pub alpha: f64,
}

/// Per-iteration diagnostics (model-visible quantities filled by the run).
#[derive(Debug, Clone)]
pub struct IterDiag {
    pub iter: usize,
    pub samples: u64,
    pub tan_theta: f64,
    pub suboptimality: f64,
    pub g_norm: f64,
    pub vg_norm: f64,
}

#[derive(Debug, Clone)]
pub struct NpmResult {
    pub a_hat: DVector<f64>,
    pub samples_used: u64,
    pub diags: Vec<IterDiag>,
    /// First pull count at which `stop_at_subopt` was met, if it was.
    pub first_hit: Option<u64>,
}

fn normalize_signed(mut v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    let lead = v
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap_or(0.0);
    if lead < 0.0 {
        v.neg_mut();
    }
    v
}

/// Noisy power method for the bandit eigenvalue problem.
///
/// Runs L iterations of estimate-then-normalize from a uniform sphere start
/// and returns the final unit iterate. `eps` is the target tan-angle.
pub fn run_npm<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    eps: f64,
    oracle: OracleParams,
    cfg: &SpectralConfig,
) -> Result<NpmResult> {
    if !(0.0..0.5).contains(&eps) && cfg.boost <= 1.0 {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    if oracle.alpha >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "degenerate gap: alpha = {} >= 1",
            oracle.alpha
        )));
    }
    let d = session.model().dim();
    let gap = (oracle.lambda1 + cfg.shift) * (1.0 - oracle.alpha);
    let n = cfg.batch_override.unwrap_or_else(|| {
        (cfg.c_n * (d * d) as f64 * (d as f64 / cfg.delta).ln() / (gap * gap * eps * eps)).ceil()
            as usize
    });
    let iters = cfg.iters_override.unwrap_or_else(|| (cfg.c_l * cfg.boost * (d as f64 / eps).ln()).floor() as usize + 1);
    let m = default_m(cfg.c_m, d, n, cfg.delta);

    let v1 = session.model().direction(0, 0);
    let (r_star, _) = session.model().optimal_reward();
    let start0 = session.steps();
    let mut a = match &cfg.start {
        Some(a0) => normalize_signed(a0.clone()),
        None => unit_sphere(rng, d),
    };
    let mut diags = Vec::with_capacity(iters);
    let mut first_hit = None;
    for l in 0..iters {
        let est = if cfg.exact_oracle {
            session.model().matrix() * &a + &a * cfg.shift
        } else {
            let y = estimate_matrix_action(session, rng, &a, BatchParams { n, m })?;
            y * 2.0 + &a * cfg.shift
        };
        // Model-visible error of the product estimate, for telemetry.
        let truth = session.model().matrix() * &a + &a * cfg.shift;
        let g = &est - &truth;
        let g_norm = g.norm();
        let vg_norm = {
            let v = session.model().frame(0);
            (v.transpose() * &g).norm()
        };
        a = normalize_signed(est);
        let tan = tan_angle(&a, &v1);
        let f = session.model().eval_unchecked(&Action::Vector(a.clone()));
        let subopt = (r_star - f).max(0.0);
        let samples = session.steps() - start0;
        diags.push(IterDiag { iter: l + 1, samples, tan_theta: tan, suboptimality: subopt, g_norm, vg_norm });
        if let Some(thresh) = cfg.stop_at_subopt {
            if subopt <= thresh && first_hit.is_none() {
                first_hit = Some(samples);
                break;
            }
        }
    }
    Ok(NpmResult { a_hat: a, samples_used: session.steps() - start0, diags, first_hit })
}

/// Gap-free variant: alpha = 1 - eps^2/2 with `eps` the angle-scale
/// parameter; the returned action has expected suboptimality at most
/// lambda_1 * eps^2 <= eps on success. Requires a PSD spectrum (or a
/// shift via `cfg.shift`).
pub fn run_npm_gap_free<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    eps: f64,
    lambda1: f64,
    cfg: &SpectralConfig,
) -> Result<NpmResult> {
    let alpha = 1.0 - eps * eps / 2.0;
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("eps = {eps} >= sqrt(2) makes alpha <= 0")));
    }
    let mut cfg = cfg.clone();
    if cfg.boost <= 1.0 {
        cfg.boost = 2.0 / (eps * eps);
    }
    run_npm(session, rng, eps, OracleParams { lambda1, alpha }, &cfg)
}

/// Agnostic n-doubling schedule: reruns the power method with doubling
/// batch sizes, keeping the iterate whose estimated reward is best.
pub fn run_npm_doubling<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    eps: f64,
    n0: usize,
    rounds: usize,
    n_eval: usize,
    cfg: &SpectralConfig,
) -> Result<NpmResult> {
    let mut best: Option<(f64, NpmResult)> = None;
    let start0 = session.steps();
    for r in 0..rounds {
        let mut c = cfg.clone();
        c.batch_override = Some(n0 << r);
        let res = run_npm(session, rng, eps, OracleParams { lambda1: 1.0, alpha: 0.0 }, &c)?;
        let mut est = 0.0;
        let action = Action::Vector(res.a_hat.clone());
        for _ in 0..n_eval {
            est += session.pull(&action)?;
        }
        est /= n_eval as f64;
        if best.as_ref().is_none_or(|(b, _)| est > *b) {
            best = Some((est, res));
        }
    }
    let (_, mut res) = best.expect("at least one round");
    res.samples_used = session.steps() - start0;
    Ok(res)
}

/// Shifted spectrum (lambda_j + |lambda_k|, same frame): the PSD reduction
/// for models with negative trailing eigenvalues. Returned as raw parts
/// since the shifted spectrum may leave the playable class.
pub fn shift_psd(model: &RewardModel) -> (Vec<f64>, DMatrix<f64>, f64) {
    assert_eq!(model.kind(), ModelKind::Ev);
    let shift = model.lambdas().last().unwrap().abs();
    let lambdas = model.lambdas().iter().map(|l| l + shift).collect();
    (lambdas, model.frame(0).clone(), shift)
}

/// Embeds a (possibly asymmetric) d1 x d2 matrix into the symmetric block
/// matrix [[0, Mt^T], [Mt, 0]] and returns it as an EV model of dimension
/// d1 + d2; its eigenvalues are the signed singular values of the input.
pub fn asym_to_sym(mtilde: &DMatrix<f64>) -> Result<RewardModel> {
    let (d2, d1) = (mtilde.nrows(), mtilde.ncols());
    let d = d1 + d2;
    let svd = mtilde.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    if svd.singular_values[0] > 1.0 + 1e-12 {
        return Err(Error::InvalidModel("spectral norm exceeds 1".into()));
    }
    let mut lambdas = Vec::new();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let s = 1.0 / 2.0f64.sqrt();
    for i in 0..svd.singular_values.len() {
        let sigma = svd.singular_values[i];
        if sigma <= 1e-14 {
            continue;
        }
        let vi = vt.row(i).transpose();
        let ui = u.column(i).into_owned();
        let mut plus = DVector::zeros(d);
        plus.rows_mut(0, d1).copy_from(&(s * &vi));
        plus.rows_mut(d1, d2).copy_from(&(s * &ui));
        let mut minus = DVector::zeros(d);
        minus.rows_mut(0, d1).copy_from(&(s * &vi));
        minus.rows_mut(d1, d2).copy_from(&(-s * &ui));
        lambdas.push(sigma);
        cols.push(plus);
        lambdas.push(-sigma);
        cols.push(minus);
    }
    let frame = DMatrix::from_columns(&cols);
    RewardModel::new_spectral(ModelKind::Ev, d, 2, lambdas, vec![frame])
}

#[derive(Debug, Clone)]
pub struct SubspaceResult {
    pub a_hat: DMatrix<f64>,
    pub x_frame: DMatrix<f64>,
    pub samples_used: u64,
    pub diags: Vec<IterDiag>,
}

/// Noisy subspace iteration for the low-rank linear reward.
///
/// Plays rank-1 probe actions X(s) z_i^T (Frobenius norm = |z_i| <= 1,
/// asserted rather than rescaled), re-orthonormalizes via QR each round,
/// and returns the normalized estimate A_hat = Y X_L^T / |Y X_L^T|_F.
pub fn run_subspace_iteration<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    k: usize,
    eps: f64,
    lambda_k: f64,
    cfg: &SpectralConfig,
) -> Result<SubspaceResult> {
    let d = session.model().dim();
    let k_prime = 2 * k;
    if k_prime > d {
        return Err(Error::InvalidParameter(format!("k' = {k_prime} exceeds d = {d}")));
    }
    let n = cfg.batch_override.unwrap_or_else(|| {
        let logt = (d as f64 / cfg.delta).ln();
        (cfg.c_n * (d * d) as f64 * logt * logt / (lambda_k * lambda_k * eps * eps)).ceil() as usize
    });
    let iters = cfg.iters_override.unwrap_or_else(|| (cfg.c_l * cfg.boost * (d as f64 / eps).ln()).floor() as usize + 1);
    subspace_loop(session, rng, k_prime, n, iters, eps, cfg)
}

fn subspace_loop<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    k_prime: usize,
    n: usize,
    iters: usize,
    _eps: f64,
    cfg: &SpectralConfig,
) -> Result<SubspaceResult> {
    let d = session.model().dim();
    let m = default_m(cfg.c_m, d, n, cfg.delta);
    let truth = session.model().matrix();
    let v_frame = session.model().frame(0).clone();
    let start0 = session.steps();
    let mut x = crate::util::random_orthonormal(rng, d, k_prime);
    let mut diags = Vec::new();
    let mut y = DMatrix::zeros(d, k_prime);
    for l in 0..=iters {
        y = estimate_subspace_product(session, rng, &x, n, m, cfg)?;
        let g = &y - &truth * &x;
        let diag = IterDiag {
            iter: l + 1,
            samples: session.steps() - start0,
            tan_theta: crate::util::sin_principal_angle(&x, &v_frame),
            suboptimality: 0.0,
            g_norm: g.clone().svd(false, false).singular_values[0],
            vg_norm: (v_frame.transpose() * &g).svd(false, false).singular_values[0],
        };
        diags.push(diag);
        if l == iters {
            break;
        }
        let qr = y.clone().qr();
        x = qr.q();
        fix_column_signs(&mut x);
        debug_assert!(orthonormality_defect(&x) <= 1e-9);
    }
    // Final product uses the last orthonormal frame: A = Y_fin X_L^T.
    let a = &y * x.transpose();
    let norm = a.norm();
    let a_hat = if norm > 0.0 { a / norm } else { a };
    Ok(SubspaceResult { a_hat, x_frame: x, samples_used: session.steps() - start0, diags })
}

/// One subspace estimation round: probes are shared across columns.
fn estimate_subspace_product<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    x: &DMatrix<f64>,
    n: usize,
    m: f64,
    cfg: &SpectralConfig,
) -> Result<DMatrix<f64>> {
    let d = x.nrows();
    if cfg.exact_oracle {
        return Ok(session.model().matrix() * x);
    }
    let kind = session.model().kind();
    let batch = crate::zorder::sample_probes(rng, n, m, d)?;
    let mut y = DMatrix::zeros(d, x.ncols());
    for s in 0..x.ncols() {
        let col = x.column(s).into_owned();
        let mut acc = DVector::zeros(d);
        match kind {
            ModelKind::Lr => {
                for z in &batch.probes {
                    debug_assert!((&col * z.transpose()).norm() <= 1.0 + 1e-9);
                    let r = session.pull(&Action::Matrix(&col * z.transpose()))?;
                    acc += z * r;
                }
                acc *= m / n as f64;
            }
            ModelKind::Ev => {
                // Rank-1 vector probes (X(s) + z)/2; scale 2m/n restores MX(s).
                for z in &batch.probes {
                    let r = session.pull(&Action::Vector((&col + z) * 0.5))?;
                    acc += z * r;
                }
                acc *= 2.0 * m / n as f64;
            }
            _ => return Err(Error::ActionKindMismatch),
        }
        y.set_column(s, &acc);
    }
    Ok(y)
}

/// Gap-free subspace iteration modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapFreeMode {
    /// Extract a unit-vector action from the symmetrized product estimate.
    EvTopVector,
    /// Low-rank linear output with the gap-free batch parameterization.
    LrMatrix,
}

#[derive(Debug, Clone)]
pub struct GapFreeOutcome {
    pub action: Action,
    pub samples_used: u64,
}

/// Gap-free subspace iteration.
///
/// EV mode returns argmax_{|a|=1} a^T sym(Y X^T) a via a dense
/// eigendecomposition of the symmetrized estimate; the quadratic form only
/// sees the symmetric part, so the symmetrization is the exact maximizer.
pub fn run_gap_free_subspace<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    k: usize,
    eps: f64,
    mode: GapFreeMode,
    cfg: &SpectralConfig,
) -> Result<GapFreeOutcome> {
    let d = session.model().dim();
    let start0 = session.steps();
    match mode {
        GapFreeMode::EvTopVector => {
            let n = cfg.batch_override.unwrap_or_else(|| {
                let logt = (d as f64 / cfg.delta).ln();
                (cfg.c_n * (d * d) as f64 * logt / (eps * eps)).ceil() as usize
            });
            let iters = cfg.iters_override.unwrap_or_else(|| (cfg.c_l * cfg.boost * (d as f64 / eps).ln()).floor() as usize + 1);
            let res = subspace_loop(session, rng, 2 * k, n, iters, eps, cfg)?;
            let m = session.model().matrix();
            let y = if cfg.exact_oracle {
                &m * &res.x_frame
            } else {
                let mprobe = default_m(cfg.c_m, d, n, cfg.delta);
                estimate_subspace_product(session, rng, &res.x_frame, n, mprobe, cfg)?
            };
            let prod = &y * res.x_frame.transpose();
            let sym = (&prod + prod.transpose()) * 0.5;
            let eig = nalgebra::SymmetricEigen::new(sym);
            let (mut best_i, mut best_v) = (0, f64::NEG_INFINITY);
            for i in 0..d {
                if eig.eigenvalues[i] > best_v {
                    best_v = eig.eigenvalues[i];
                    best_i = i;
                }
            }
            let a = normalize_signed(eig.eigenvectors.column(best_i).into_owned());
            Ok(GapFreeOutcome { action: Action::Vector(a), samples_used: session.steps() - start0 })
        }
        GapFreeMode::LrMatrix => {
            let r_star = session.r_star();
            let n = cfg.batch_override.unwrap_or_else(|| {
                (cfg.c_n * (d * d * k * k) as f64 / (r_star * r_star * eps.powi(4))).ceil() as usize
            });
            let iters = cfg.iters_override.unwrap_or_else(|| (cfg.c_l * cfg.boost * (d as f64 / eps).ln()).floor() as usize + 1);
            let res = subspace_loop(session, rng, 2 * k, n, iters, eps, cfg)?;
            Ok(GapFreeOutcome {
                action: Action::Matrix(res.a_hat),
                samples_used: session.steps() - start0,
            })
        }
    }
}

/// k-restart scheduler: runs the EV-mode gap-free iteration with
/// k' = 2, 4, ..., 2k and keeps the action with the best estimated reward.
/// At least one restart hits a sub-gap >= lambda_1 / k (telescoping).
pub fn run_gap_free_k_restart<R: Rng + ?Sized>(
    session: &mut BanditSession,
    rng: &mut R,
    k: usize,
    eps: f64,
    n_eval: usize,
    cfg: &SpectralConfig,
) -> Result<GapFreeOutcome> {
    // Pigeonhole check on the visible spectrum: max_l (|l_l| - |l_{l+1}|) >= l_1/k.
    let lambdas = session.model().lambdas();
    if lambdas.len() > 1 {
        let max_gap = lambdas
            .windows(2)
            .map(|w| w[0].abs() - w[1].abs())
            .fold(lambdas.last().unwrap().abs(), f64::max);
        debug_assert!(max_gap >= lambdas[0].abs() / lambdas.len() as f64 - 1e-12);
    }
    let start0 = session.steps();
    let mut best: Option<(f64, Action)> = None;
    for l in 1..=k {
        let out = run_gap_free_subspace(session, rng, l, eps, GapFreeMode::EvTopVector, cfg)?;
        let mut est = 0.0;
        for _ in 0..n_eval {
            est += session.pull(&out.action)?;
        }
        est /= n_eval.max(1) as f64;
        if best.as_ref().is_none_or(|(b, _)| est > *b) {
            best = Some((est, out.action));
        }
    }
    let (_, action) = best.expect("k >= 1");
    Ok(GapFreeOutcome { action, samples_used: session.steps() - start0 })
}

/// Explore-then-commit tail: plays `action` for the remaining horizon.
#[derive(Debug, Clone, Copy)]
pub struct EtcOutcome {
    pub explored: u64,
    pub committed: u64,
    /// Exploration consumed more than the horizon.
    pub overran: bool,
}

pub fn etc_commit(session: &mut BanditSession, action: &Action, horizon: u64) -> Result<EtcOutcome> {
    let used = session.steps();
    if used > horizon {
        return Ok(EtcOutcome { explored: used, committed: 0, overran: true });
    }
    session.set_phase(1);
    let remaining = horizon - used;
    session.pull_repeated(action, remaining)?;
    Ok(EtcOutcome { explored: used, committed: remaining, overran: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_random_model, SpectrumSpec};
    use crate::stream::stream;
    use approx::assert_relative_eq;

    fn ev_model(d: usize, lambdas: Vec<f64>, seed: u64) -> RewardModel {
        let k = lambdas.len();
        make_random_model(ModelKind::Ev, d, k, 2, &SpectrumSpec::Explicit(lambdas), seed).unwrap()
    }

    #[test]
    fn npm_noiseless_rank1_converges_hard() {
        let d = 8;
        let model = ev_model(d, vec![1.0], 3);
        let v1 = model.direction(0, 0);
        let mut session = BanditSession::new(model, 0.0, 10);
        let mut rng = stream(11, &[1]);
        let cfg = SpectralConfig { exact_oracle: true, ..Default::default() };
        let res = run_npm(
            &mut session,
            &mut rng,
            1e-7,
            OracleParams { lambda1: 1.0, alpha: 0.0 },
            &cfg,
        )
        .unwrap();
        assert!(tan_angle(&res.a_hat, &v1) <= 1e-6);
        assert_eq!(res.samples_used, 0, "exact oracle consumes no pulls");
    }

    #[test]
    fn npm_sampled_rank1_reaches_target() {
        let d = 8;
        let model = ev_model(d, vec![1.0], 5);
        let v1 = model.direction(0, 0);
        let mut session = BanditSession::new(model, 0.1, 12);
        let mut rng = stream(13, &[2]);
        let cfg = SpectralConfig { c_n: 1.0, c_m: 0.5, ..Default::default() };
        let res = run_npm(
            &mut session,
            &mut rng,
            0.1,
            OracleParams { lambda1: 1.0, alpha: 0.0 },
            &cfg,
        )
        .unwrap();
        assert!(
            tan_angle(&res.a_hat, &v1) <= 0.1,
            "tan angle {}",
            tan_angle(&res.a_hat, &v1)
        );
    }

    #[test]
    fn npm_fixed_point_start() {
        let d = 6;
        let model = ev_model(d, vec![1.0, 0.4], 7);
        let v1 = model.direction(0, 0);
        let mut session = BanditSession::new(model, 0.0, 14);
        let mut rng = stream(15, &[3]);
        let cfg = SpectralConfig {
            exact_oracle: true,
            start: Some(v1.clone()),
            ..Default::default()
        };
        let res = run_npm(
            &mut session,
            &mut rng,
            0.05,
            OracleParams { lambda1: 1.0, alpha: 0.4 },
            &cfg,
        )
        .unwrap();
        for diag in &res.diags {
            assert!(diag.tan_theta <= 0.05);
        }
    }

    #[test]
    fn npm_rejects_degenerate_gap_and_bad_eps() {
        let model = ev_model(4, vec![1.0], 9);
        let mut session = BanditSession::new(model, 0.0, 16);
        let mut rng = stream(17, &[4]);
        let cfg = SpectralConfig::default();
        assert!(run_npm(&mut session, &mut rng, 0.1, OracleParams { lambda1: 1.0, alpha: 1.0 }, &cfg)
            .is_err());
        assert!(run_npm(&mut session, &mut rng, 0.7, OracleParams { lambda1: 1.0, alpha: 0.0 }, &cfg)
            .is_err());
        // Gap-free rejects eps >= sqrt(2).
        assert!(run_npm_gap_free(&mut session, &mut rng, 1.5, 1.0, &cfg).is_err());
    }

    #[test]
    fn npm_monotone_alignment_noiseless() {
        // Exact-oracle contraction: tan theta shrinks by |l2|/l1 each step
        // for a diagonal rank-2 model.
        let d = 5;
        let model = ev_model(d, vec![1.0, -0.5], 21);
        let v1 = model.direction(0, 0);
        let mut session = BanditSession::new(model, 0.0, 18);
        let mut rng = stream(19, &[5]);
        let cfg = SpectralConfig { exact_oracle: true, ..Default::default() };
        let res = run_npm(
            &mut session,
            &mut rng,
            1e-6,
            OracleParams { lambda1: 1.0, alpha: 0.5 },
            &cfg,
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for diag in &res.diags {
            if prev.is_finite() && prev > 1e-12 {
                assert!(
                    diag.tan_theta <= 0.5 * prev + 1e-12,
                    "contraction violated: {} -> {}",
                    prev,
                    diag.tan_theta
                );
            }
            prev = diag.tan_theta;
        }
        let _ = v1;
    }

    #[test]
    fn shift_preserves_top_eigvector() {
        let d = 6;
        let model = ev_model(d, vec![1.0, -0.5], 23);
        let (lambdas, frame, shift) = shift_psd(&model);
        assert_relative_eq!(shift, 0.5);
        assert_relative_eq!(lambdas[0], 1.5);
        assert_relative_eq!(lambdas[1], 0.0);
        // Dense eigendecomposition oracle on the shifted matrix.
        let shifted = model.matrix() + DMatrix::identity(d, d) * shift;
        let eig = nalgebra::SymmetricEigen::new(shifted);
        let mut top = 0;
        for i in 0..d {
            if eig.eigenvalues[i] > eig.eigenvalues[top] {
                top = i;
            }
        }
        let v_top = eig.eigenvectors.column(top).into_owned();
        assert!(tan_angle(&v_top, &model.direction(0, 0)) <= 1e-8);
        let _ = frame;
    }

    #[test]
    fn asym_to_sym_spectrum() {
        // 1x1 exchange case.
        let m1 = DMatrix::from_row_slice(1, 1, &[1.0]);
        let model = asym_to_sym(&m1).unwrap();
        let mut eigs: Vec<f64> = model.lambdas().to_vec();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_relative_eq!(eigs[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(eigs[1], -1.0, epsilon = 1e-12);

        // diag(0.9, 0.4) -> {±0.9, ±0.4}; checked against a dense oracle.
        let m2 = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.4]);
        let model2 = asym_to_sym(&m2).unwrap();
        let dense = model2.matrix();
        let eig = nalgebra::SymmetricEigen::new(dense.clone());
        let mut got: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        got.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let want = [0.9, 0.4, -0.4, -0.9];
        for (g, w) in got.iter().zip(want.iter()) {
            assert_relative_eq!(g, w, epsilon = 1e-10);
        }
        // Top eigenvector = (v; u)/sqrt(2) for the top singular pair.
        let top_vec = model2.direction(0, 0);
        let expect = DVector::from_vec(vec![
            1.0 / 2.0f64.sqrt(),
            0.0,
            1.0 / 2.0f64.sqrt(),
            0.0,
        ]);
        assert!(tan_angle(&top_vec, &expect) <= 1e-10);
    }

    #[test]
    fn asym_random_spectrum_identity() {
        let mut rng = stream(25, &[6]);
        for trial in 0..20 {
            let d1 = 2 + (trial % 3);
            let d2 = 2 + (trial % 2);
            let mut mt = DMatrix::from_fn(d2, d1, |_, _| {
                rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
            });
            let top = mt.clone().svd(false, false).singular_values[0];
            mt /= top * 1.25;
            let model = asym_to_sym(&mt).unwrap();
            let eig = nalgebra::SymmetricEigen::new(model.matrix());
            let mut got: Vec<f64> = eig.eigenvalues.iter().map(|x| x.abs()).collect();
            got.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let svd = mt.clone().svd(false, false);
            let mut want: Vec<f64> = svd.singular_values.iter().cloned().collect();
            want.extend(want.clone());
            want.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (g, w) in got.iter().zip(want.iter()) {
                assert_relative_eq!(g, w, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn subspace_noiseless_recovers_low_rank() {
        // d=6, k=2 diagonal-aligned model; exact-oracle iteration must hit
        // machine-precision recovery of A* = M / |M|_F.
        let d = 6;
        let model = make_random_model(
            ModelKind::Lr,
            d,
            2,
            2,
            &SpectrumSpec::Explicit(vec![0.8, 0.6]),
            31,
        )
        .unwrap();
        let a_star = model.matrix() / model.matrix().norm();
        let mut session = BanditSession::new(model, 0.0, 20);
        let mut rng = stream(21, &[7]);
        let cfg = SpectralConfig { exact_oracle: true, ..Default::default() };
        let res = run_subspace_iteration(&mut session, &mut rng, 2, 1e-8, 0.6, &cfg).unwrap();
        assert!((res.a_hat - a_star).norm() <= 1e-6);
        for diag in &res.diags {
            let _ = diag;
        }
    }

    #[test]
    fn subspace_qr_invariant_and_probe_validity() {
        let d = 6;
        let model = make_random_model(
            ModelKind::Lr,
            d,
            2,
            2,
            &SpectrumSpec::Explicit(vec![0.7, 0.5]),
            37,
        )
        .unwrap();
        let mut session = BanditSession::new(model, 0.1, 22);
        let mut rng = stream(23, &[8]);
        let cfg = SpectralConfig {
            c_n: 0.4,
            c_m: 0.5,
            batch_override: Some(4000),
            ..Default::default()
        };
        let res = run_subspace_iteration(&mut session, &mut rng, 2, 0.3, 0.5, &cfg).unwrap();
        assert!(orthonormality_defect(&res.x_frame) <= 1e-9);
    }

    #[test]
    fn regret_identity_low_rank() {
        // r* - <M, A> = (r*/2) |A - A*|_F^2 for unit-Frobenius actions.
        let d = 6;
        let model = make_random_model(
            ModelKind::Lr,
            d,
            2,
            2,
            &SpectrumSpec::Explicit(vec![0.8, 0.6]),
            41,
        )
        .unwrap();
        let (r_star, a_star) = model.optimal_reward();
        let a_star = match a_star {
            Action::Matrix(m) => m,
            _ => unreachable!(),
        };
        let mut rng = stream(29, &[9]);
        for _ in 0..50 {
            let mut raw = DMatrix::from_fn(d, d, |_, _| {
                rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
            });
            raw /= raw.norm();
            let f = model.eval_mean(&Action::Matrix(raw.clone())).unwrap();
            let lhs = r_star - f;
            let rhs = r_star / 2.0 * (raw - &a_star).norm_squared();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn gap_free_ev_mode_noiseless() {
        let d = 6;
        let model = ev_model(d, vec![1.0, 0.9, 0.1], 43);
        let mut session = BanditSession::new(model, 0.0, 24);
        let mut rng = stream(25, &[10]);
        let cfg = SpectralConfig {
            batch_override: Some(20_000),
            c_m: 0.5,
            boost: 4.0,
            ..Default::default()
        };
        let out =
            run_gap_free_subspace(&mut session, &mut rng, 3, 0.1, GapFreeMode::EvTopVector, &cfg)
                .unwrap();
        let f = session.model().eval_mean(&out.action).unwrap();
        assert!(f >= 0.99, "reward {f}");
    }

    #[test]
    fn etc_commit_flat_after_optimal() {
        let model = ev_model(4, vec![1.0], 47);
        let (_, a_star) = model.optimal_reward();
        let mut session = BanditSession::new(model, 0.0, 26).with_recording(1);
        session.pull(&a_star).unwrap();
        let before = session.ledger().cumulative();
        let out = etc_commit(&mut session, &a_star, 50).unwrap();
        assert!(!out.overran);
        assert_eq!(session.steps(), 50);
        assert_relative_eq!(session.ledger().cumulative(), before, epsilon = 1e-12);
    }

    #[test]
    fn etc_overrun_flagged() {
        let model = ev_model(4, vec![1.0], 49);
        let (_, a_star) = model.optimal_reward();
        let mut session = BanditSession::new(model, 0.0, 27);
        for _ in 0..10 {
            session.pull(&a_star).unwrap();
        }
        let out = etc_commit(&mut session, &a_star, 5).unwrap();
        assert!(out.overran);
    }
}
