//! Degree-p homogeneous polynomial bandits: phased elimination with
//! zeroth-order exploration (symmetric case), the two-phase burn-in
//! variant, and alternating power iteration (asymmetric case).
//!
//! Stages halve a target accuracy eps_s = 2^{-s}; inside a stage every
//! surviving candidate is pushed through normalize(G_n(a)) updates, its
//! reward is re-estimated, and candidates below the stage threshold are
//! dropped. The final pool feeds the finite-arm UCB.

use crate::baselines::candidate_set_etc;
use crate::env::{Action, BanditSession, ModelKind};
use crate::stream::{stream, tag};
use crate::util::unit_sphere;
use crate::zorder::{closed_form_g, default_m, estimate_tensor_g, sample_probes, BatchParams};
use crate::{Error, Result};
use nalgebra::DVector;

/// How the elimination threshold's reward scale is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HintMode {
    /// Supplied from the config (oracle mode: the scale lambda_1 is known).
    Oracle(f64),
    /// max over the pool of the current stage's estimated rewards.
    Empirical,
}

#[derive(Debug, Clone)]
pub struct TensorConfig {
    /// Batch constant for n_s (desk-scale; exponents in d are fixed).
    pub c_n: f64,
    /// Initial pool size constant: L0 = ceil(c_l * k * ln(1/delta)).
    pub c_l: f64,
    /// Stage count: S = c_s * ceil(log2(1/eps)) + 1.
    pub c_s: f64,
    pub c_m: f64,
    pub delta: f64,
    pub hint: HintMode,
    /// Replaces G_n by the closed-form population operator (no pulls).
    pub exact_oracle: bool,
    /// Inner zeroth-order steps per stage; default ceil(2 ln(2d)).
    pub inner_override: Option<usize>,
    /// Hard cap on any single batch size.
    pub batch_cap: usize,
    /// Initial pool size override (asymmetric initialization grows like
    /// (2k ln(p/delta))^p and needs desk-scale control).
    pub pool_override: Option<usize>,
}

impl Default for TensorConfig {
    fn default() -> Self {
        TensorConfig {
            c_n: 1.0,
            c_l: 4.0,
            c_s: 1.0,
            c_m: 4.0,
            delta: 0.1,
            hint: HintMode::Empirical,
            exact_oracle: false,
            inner_override: None,
            batch_cap: 50_000_000,
            pool_override: None,
        }
    }
}

/// Candidate pool state after a stage.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub stage: usize,
    pub eps_tilde: f64,
    pub candidates: Vec<DVector<f64>>,
    pub rewards: Vec<f64>,
    pub n_s: usize,
    pub m_s: f64,
}

/// Stage telemetry row.
#[derive(Debug, Clone)]
pub struct StageRow {
    pub stage: usize,
    pub candidate: usize,
    pub steps: usize,
    pub samples: u64,
    pub r_n: f64,
    pub tan_theta: f64,
    pub kept: bool,
}

/// L0 uniform-sphere candidates; with probability 1 - delta at least one
/// satisfies max_{j != 1} |v_j^T a| <= 0.5 |v_1^T a| and |v_1^T a| >= 1/sqrt(d).
pub fn init_candidates<R: rand::Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    k: usize,
    delta: f64,
    c_l: f64,
) -> Vec<DVector<f64>> {
    let l0 = (c_l * k as f64 * (1.0 / delta).ln()).ceil().max(1.0) as usize;
    (0..l0).map(|_| unit_sphere(rng, d)).collect()
}

/// The good-initialization predicate, checkable when the model is visible.
pub fn meets_initial_condition(model: &crate::env::RewardModel, a: &DVector<f64>) -> bool {
    let v1 = model.direction(0, 0);
    let c1 = v1.dot(a).abs();
    if c1 < 1.0 / (model.dim() as f64).sqrt() {
        return false;
    }
    (1..model.rank()).all(|j| model.direction(0, j).dot(a).abs() <= 0.5 * c1)
}

/// Connects a tan-angle guarantee to a regret bound:
/// r* - r(a) <= r* min(2, p zeta^2).
pub fn angle_to_regret(zeta: f64, p: u32, r_star: f64) -> f64 {
    assert!(zeta >= 0.0);
    r_star * (p as f64 * zeta * zeta).min(2.0)
}

/// Batch size for the d^p-regime stages (the literal post-multiplication
/// by ln^3(n/delta) included).
pub fn phase1_batch_size(c_n: f64, d: usize, p: u32, lambda1: f64, eps: f64, delta: f64) -> usize {
    let base = c_n * (d as f64).powi(p as i32) * (d as f64 / delta).ln()
        / (lambda1 * lambda1 * eps * eps);
    (base * (base.max(2.0) / delta).ln().powi(3)).ceil() as usize
}

/// Batch size for the refinement stages: scales as d^2, not d^p. Log
/// factors are absorbed into the constant so the d^2 ratio is exact.
pub fn phase2_batch_size(c_n2: f64, d: usize, lambda1: f64, eps: f64) -> usize {
    (c_n2 * (d * d) as f64 / (lambda1 * lambda1 * eps * eps)).ceil() as usize
}

fn normalize(mut v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    v
}

/// Runs elimination stages on an existing pool, halving eps_tilde from
/// `pool.eps_tilde` until it is at most `target_eps`. The stage batch size
/// comes from `batch_size(eps)`; the elimination predicate keeps a
/// candidate iff r_n >= hint (1 - p eps^power) with `power` = 2 for the
/// symmetric algorithm.
#[allow(clippy::too_many_arguments)]
fn run_stages(
    session: &mut BanditSession,
    seed: u64,
    p: u32,
    mut pool: CandidatePool,
    target_eps: f64,
    max_extra_stages: usize,
    batch_size: &dyn Fn(f64) -> usize,
    cfg: &TensorConfig,
    rows: &mut Vec<StageRow>,
) -> Result<CandidatePool> {
    let d = session.model().dim();
    let v1 = session.model().direction(0, 0);
    let inner = cfg
        .inner_override
        .unwrap_or_else(|| (2.0 * (2.0 * d as f64).ln()).ceil() as usize)
        .max(1);
    let mut stages_done = 0;
    while pool.eps_tilde > target_eps && stages_done < max_extra_stages {
        let s = pool.stage + 1;
        let eps_t = pool.eps_tilde / 2.0;
        let n_s = batch_size(eps_t).min(cfg.batch_cap).max(1);
        let m_s = default_m(cfg.c_m, d, n_s, cfg.delta);
        let params = BatchParams { n: n_s, m: m_s };
        let mut updated: Vec<DVector<f64>> = Vec::with_capacity(pool.candidates.len());
        let mut r_ns: Vec<f64> = Vec::with_capacity(pool.candidates.len());
        let mut samples_per: Vec<u64> = Vec::with_capacity(pool.candidates.len());
        for (ci, cand) in pool.candidates.iter().enumerate() {
            let mut rng_c = stream(seed, &[tag::PROBES, s as u64, ci as u64]);
            let start = session.steps();
            let mut a = cand.clone();
            for _ in 0..inner {
                let g = if cfg.exact_oracle {
                    closed_form_g(
                        session.model().lambdas(),
                        session.model().frame(0),
                        &a,
                        p,
                        m_s,
                    )?
                } else {
                    estimate_tensor_g(session, &mut rng_c, &a, p, params)?
                };
                let gn = g.norm();
                if gn <= 1e-300 {
                    break;
                }
                a = normalize(g);
            }
            let r_n = if cfg.exact_oracle {
                session.model().eval_unchecked(&Action::Vector(a.clone()))
            } else {
                let action = Action::Vector(a.clone());
                let mut sum = 0.0;
                for _ in 0..n_s {
                    sum += session.pull(&action)?;
                }
                sum / n_s as f64
            };
            samples_per.push(session.steps() - start);
            r_ns.push(r_n);
            updated.push(a);
        }
        let hint = match cfg.hint {
            HintMode::Oracle(h) => h,
            HintMode::Empirical => r_ns.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        let threshold = hint * (1.0 - p as f64 * eps_t * eps_t);
        let mut kept_c = Vec::new();
        let mut kept_r = Vec::new();
        for (ci, (a, &r_n)) in updated.iter().zip(&r_ns).enumerate() {
            let kept = r_n >= threshold;
            rows.push(StageRow {
                stage: s,
                candidate: ci,
                steps: inner,
                samples: samples_per[ci],
                r_n,
                tan_theta: crate::util::tan_angle(a, &v1),
                kept,
            });
            if kept {
                kept_c.push(a.clone());
                kept_r.push(r_n);
            }
        }
        if kept_c.is_empty() {
            return Err(Error::EmptyPool(s));
        }
        debug_assert!(kept_c.len() <= pool.candidates.len());
        pool = CandidatePool {
            stage: s,
            eps_tilde: eps_t,
            candidates: kept_c,
            rewards: kept_r,
            n_s,
            m_s,
        };
        stages_done += 1;
    }
    Ok(pool)
}

/// Phased elimination with zeroth-order exploration for symmetric
/// degree-p reward. Returns the surviving pool; at least one member has
/// tan theta(a, a*) <= eps_tilde_S with high probability.
pub fn run_phased_elimination(
    session: &mut BanditSession,
    seed: u64,
    p: u32,
    k: usize,
    eps: f64,
    cfg: &TensorConfig,
) -> Result<(CandidatePool, Vec<StageRow>)> {
    assert!(matches!(session.model().kind(), ModelKind::Sym));
    assert!(p >= 3, "p = 2 belongs to the quadratic solvers");
    assert!((0.0..1.0).contains(&eps));
    let d = session.model().dim();
    let mut init_rng = stream(seed, &[tag::INIT]);
    let candidates = match cfg.pool_override {
        Some(l0) => (0..l0).map(|_| unit_sphere(&mut init_rng, d)).collect(),
        None => init_candidates(&mut init_rng, d, k, cfg.delta, cfg.c_l),
    };
    let pool = CandidatePool {
        stage: 0,
        eps_tilde: 1.0,
        candidates,
        rewards: Vec::new(),
        n_s: 0,
        m_s: 0.0,
    };
    let lambda1 = match cfg.hint {
        HintMode::Oracle(h) => h,
        HintMode::Empirical => 1.0,
    };
    let s_total = (cfg.c_s * (1.0 / eps).log2().ceil()).ceil() as usize + 1;
    let batch = |e: f64| phase1_batch_size(cfg.c_n, d, p, lambda1, e, cfg.delta);
    let mut rows = Vec::new();
    let out = run_stages(session, seed, p, pool, eps, s_total, &batch, cfg, &mut rows)?;
    Ok((out, rows))
}

#[derive(Debug, Clone)]
pub struct BurnInOutcome {
    pub pool: CandidatePool,
    pub rows: Vec<StageRow>,
    /// Pulls consumed by phases 1 and 2.
    pub explored: u64,
    /// Horizon was too small to finish phase 1 at the requested accuracy.
    pub underbudget: bool,
    pub best_arm: Option<usize>,
}

/// Two-phase variant: a coarse d^p-cost phase reaching v_1^T a >= 1 - 1/p,
/// then d^2-cost refinement stages at a horizon-tuned accuracy, then
/// finite-arm UCB on the surviving pool for the rest of the horizon.
#[allow(clippy::too_many_arguments)]
pub fn run_burn_in(
    session: &mut BanditSession,
    seed: u64,
    p: u32,
    k: usize,
    horizon: u64,
    c_n2: f64,
    eps2_scale: f64,
    cfg: &TensorConfig,
) -> Result<BurnInOutcome> {
    let d = session.model().dim();
    let lambda1 = match cfg.hint {
        HintMode::Oracle(h) => h,
        HintMode::Empirical => 1.0,
    };
    // Phase 1: coarse target eps = 1/p at the d^p batch scale.
    let eps1 = 1.0 / p as f64;
    let (pool, mut rows) = run_phased_elimination(session, seed, p, k, eps1, cfg)?;
    session.set_phase(1);
    // Phase 2: horizon-tuned accuracy, d^2 batches.
    let eps2 = (eps2_scale * (k as f64).powf(0.25) * (d as f64).sqrt()
        / (lambda1.sqrt() * (horizon as f64).powf(0.25)))
    .min(eps1 / 2.0)
    .max(1e-6);
    let batch2 = |e: f64| phase2_batch_size(c_n2, d, lambda1, e, );
    let pool = run_stages(session, seed ^ 0x9e3779b9, p, pool, eps2, 40, &batch2, cfg, &mut rows)?;
    let explored = session.steps();
    let underbudget = explored > horizon;
    let mut best_arm = None;
    if !underbudget {
        session.set_phase(2);
        let arms: Vec<Action> =
            pool.candidates.iter().map(|a| Action::Vector(a.clone())).collect();
        let out = candidate_set_etc(session, &arms, horizon, cfg.delta)?;
        best_arm = Some(out.best_arm);
    }
    Ok(BurnInOutcome { pool, rows, explored, underbudget, best_arm })
}

/// Alternating tensor power iteration for the asymmetric class.
///
/// Per slot q the update estimates T(a(1), .., I, .., a(p)) by replacing
/// slot q with Gaussian probes and averaging (m/n) sum r z_i, then
/// normalizes; slots are cycled, and stages eliminate candidates with
/// r_n < hint (1 - p eps_s).
pub fn run_alternating_power(
    session: &mut BanditSession,
    seed: u64,
    p: u32,
    k: usize,
    eps: f64,
    cfg: &TensorConfig,
) -> Result<(Vec<DVector<f64>>, Vec<StageRow>)> {
    assert!(matches!(session.model().kind(), ModelKind::Asym));
    assert!(p >= 3);
    let d = session.model().dim();
    let pu = p as usize;
    let mut init_rng = stream(seed, &[tag::INIT, 1]);
    let l0 = cfg.pool_override.unwrap_or_else(|| {
        ((2.0 * k as f64 * (p as f64 / cfg.delta).ln()).powi(p as i32)).ceil().min(512.0) as usize
    });
    let mut pool: Vec<Vec<DVector<f64>>> = (0..l0)
        .map(|_| (0..pu).map(|_| unit_sphere(&mut init_rng, d)).collect())
        .collect();
    let cycles = cfg
        .inner_override
        .unwrap_or_else(|| (2.0 * (2.0 * d as f64).ln()).ceil() as usize)
        .max(1);
    let s_total = (cfg.c_s * (1.0 / eps).log2().ceil()).ceil() as usize + 1;
    let mut rows = Vec::new();
    let mut eps_t = 1.0;
    let mut stage = 0;
    let mut last_rewards: Vec<f64> = Vec::new();
    while eps_t > eps && stage < s_total {
        stage += 1;
        eps_t /= 2.0;
        let n_s = {
            let base = cfg.c_n * (d as f64).powi(p as i32) * (d as f64 / cfg.delta).ln()
                / (eps_t * eps_t);
            ((base * (base.max(2.0) / cfg.delta).ln().powi(3)).ceil() as usize)
                .min(cfg.batch_cap)
                .max(1)
        };
        let m_s = default_m(cfg.c_m, d, n_s, cfg.delta);
        let mut r_ns = Vec::with_capacity(pool.len());
        let mut samples_per = Vec::with_capacity(pool.len());
        for (ci, tuple) in pool.iter_mut().enumerate() {
            let mut rng_c = stream(seed, &[tag::PROBES, stage as u64, ci as u64]);
            let start = session.steps();
            for _ in 0..cycles {
                for q in 0..pu {
                    let y = if cfg.exact_oracle {
                        exact_slot_contraction(session.model(), tuple, q)
                    } else {
                        let batch = sample_probes(&mut rng_c, n_s, m_s, d)?;
                        let mut acc = DVector::zeros(d);
                        for z in &batch.probes {
                            let mut probe_tuple = tuple.clone();
                            probe_tuple[q] = z.clone();
                            let r = session.pull(&Action::Tuple(probe_tuple))?;
                            acc += z * r;
                        }
                        acc * (m_s / n_s as f64)
                    };
                    if y.norm() > 1e-300 {
                        tuple[q] = normalize(y);
                    }
                }
            }
            let r_n = if cfg.exact_oracle {
                session.model().eval_unchecked(&Action::Tuple(tuple.clone()))
            } else {
                let action = Action::Tuple(tuple.clone());
                let mut sum = 0.0;
                for _ in 0..n_s {
                    sum += session.pull(&action)?;
                }
                sum / n_s as f64
            };
            r_ns.push(r_n);
            samples_per.push(session.steps() - start);
        }
        let hint = match cfg.hint {
            HintMode::Oracle(h) => h,
            HintMode::Empirical => r_ns.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        let threshold = hint * (1.0 - p as f64 * eps_t);
        let mut kept = Vec::new();
        let mut kept_r = Vec::new();
        for (ci, tuple) in pool.iter().enumerate() {
            let keep = r_ns[ci] >= threshold;
            let tan = (0..pu)
                .map(|q| crate::util::tan_angle(&tuple[q], &session.model().direction(q, 0)))
                .fold(0.0f64, f64::max);
            rows.push(StageRow {
                stage,
                candidate: ci,
                steps: cycles * pu,
                samples: samples_per[ci],
                r_n: r_ns[ci],
                tan_theta: tan,
                kept: keep,
            });
            if keep {
                kept.push(tuple.clone());
                kept_r.push(r_ns[ci]);
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyPool(stage));
        }
        pool = kept;
        last_rewards = kept_r;
    }
    let best = last_rewards
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok((pool.swap_remove(best), rows))
}

/// Exact slot contraction T(a(1), .., I, .., a(p)) for tests and ablations.
pub fn exact_slot_contraction(
    model: &crate::env::RewardModel,
    tuple: &[DVector<f64>],
    slot: usize,
) -> DVector<f64> {
    let mut out = DVector::zeros(model.dim());
    for j in 0..model.rank() {
        let mut coeff = model.lambdas()[j];
        for (q, a) in tuple.iter().enumerate() {
            if q != slot {
                coeff *= model.direction(q, j).dot(a);
            }
        }
        out.axpy(coeff, &model.direction(slot, j), 1.0);
    }
    out
}
