//! Noiseless polynomial bandits: tensorized features, identification from
//! random actions, low-rank polynomial fitting, and the hard-case
//! construction where optimism needs C(d, p) - 1 vertex plays while random
//! play identifies the model in a handful of actions.

use crate::env::{Action, BanditSession, ModelKind, RewardModel};
use crate::stream::{stream, tag};
use crate::util::std_gaussian;
use crate::{Error, Result};
use nalgebra::DVector;
use rand::Rng;

/// Identification tolerance for "predicted reward differs from observed".
/// Noiseless arithmetic only; never valid with sigma_noise > 0.
pub const IDENTIFY_TOL: f64 = 1e-9;

/// Full outer power of the lifted action [1, a], flattened row-major:
/// entry at multi-index (i_1, ..., i_p) sits at sum_q i_q (d+1)^(p-1-q).
pub fn tensorize(a: &DVector<f64>, p: u32, cap: usize) -> Result<DVector<f64>> {
    let d1 = a.len() + 1;
    let dim = d1.checked_pow(p).ok_or(Error::FeatureCapExceeded(usize::MAX, cap))?;
    if dim > cap {
        return Err(Error::FeatureCapExceeded(dim, cap));
    }
    let mut lifted = DVector::zeros(d1);
    lifted[0] = 1.0;
    lifted.rows_mut(1, a.len()).copy_from(a);
    let mut out = DVector::from_element(1, 1.0);
    for _ in 0..p {
        let mut next = DVector::zeros(out.len() * d1);
        for i in 0..out.len() {
            for j in 0..d1 {
                next[i * d1 + j] = out[i] * lifted[j];
            }
        }
        out = next;
    }
    Ok(out)
}

/// Default feature cap (10^7 entries).
pub const TENSORIZE_CAP: usize = 10_000_000;

/// A lifted sample: action, flattened feature, observed reward.
#[derive(Debug, Clone)]
pub struct TensorizedSample {
    pub action: DVector<f64>,
    pub features: DVector<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct IdentifyOutcome {
    pub alpha_hat: Vec<usize>,
    pub actions_used: u64,
    /// Confidence-set size after each action.
    pub set_sizes: Vec<usize>,
}

/// Identifies the ground truth of a hard-case session by playing random
/// actions from conv(A_0, 0) and discarding every multi-index whose
/// prediction disagrees with the observation.
pub fn identify_finite_class(
    session: &mut BanditSession,
    seed: u64,
) -> Result<IdentifyOutcome> {
    assert_eq!(session.model().kind(), ModelKind::HardCase);
    assert_eq!(session.sigma_noise(), 0.0, "identification needs noiseless rewards");
    let mut rng = stream(seed, &[tag::IDENTIFY]);
    let n_vertices = session.model().vertices().len();
    let d = session.model().dim();
    let mut live: Vec<usize> = (0..n_vertices).collect();
    let mut set_sizes = Vec::new();
    let cap = 10 * d as u64;
    let mut used = 0;
    while live.len() > 1 {
        if used >= cap {
            return Err(Error::NotSeparated(used));
        }
        // Positive-measure sampler over conv(A_0, 0): exponential weights
        // normalized to the simplex, scaled into the interior.
        let mut w: Vec<f64> = (0..n_vertices)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let sum: f64 = w.iter().sum();
        let scale: f64 = rng.random_range(0.1..0.9);
        for x in &mut w {
            *x *= scale / sum;
        }
        let coords = session.model().hardcase_coords(&w);
        let obs = session.pull(&Action::VertexWeights(w))?;
        used += 1;
        live.retain(|&idx| {
            let pred =
                RewardModel::hardcase_predict(&session.model().vertices()[idx], &coords);
            (pred - obs).abs() <= IDENTIFY_TOL
        });
        set_sizes.push(live.len());
        if live.is_empty() {
            return Err(Error::NotSeparated(used));
        }
    }
    Ok(IdentifyOutcome {
        alpha_hat: session.model().vertices()[live[0]].clone(),
        actions_used: used,
        set_sizes,
    })
}

/// Tie-breaking order among equal-UCB vertices; the lower bound is a
/// worst-case statement, so the order is a first-class parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Ground-truth vertex is chosen last.
    Adversarial,
    /// Smallest lexicographic index first.
    Lexicographic,
    /// Uniformly random among the argmax set.
    Uniform(u64),
}

#[derive(Debug, Clone)]
pub struct HardCaseRun {
    pub plays: u64,
    /// Every played action was a vertex (asserted by construction plus the
    /// sampled interior certificate).
    pub all_vertex_plays: bool,
    /// Number of interior points certified to have UCB < 1.
    pub certificates: u64,
    pub set_sizes: Vec<usize>,
}

/// Simulates the UCB algorithm on the hard case exactly.
///
/// UCB_t(a) = max over surviving models of the predicted reward. On
/// vertices this is 1 for surviving indices and 0 otherwise, and interior
/// points have UCB strictly below 1 (checked on sampled convex
/// combinations), so the argmax is always a surviving vertex and the
/// tie-break decides which.
pub fn ucb_hard_case_run(
    model: &RewardModel,
    tie_break: TieBreak,
    certificates_per_run: usize,
) -> Result<HardCaseRun> {
    assert_eq!(model.kind(), ModelKind::HardCase);
    let vertices = model.vertices();
    let n = vertices.len();
    let star = vertices
        .iter()
        .position(|v| v == model.alpha_star())
        .expect("alpha_star enumerated");
    let mut live: Vec<usize> = (0..n).collect();
    let mut cert_rng = stream(
        match tie_break {
            TieBreak::Uniform(s) => s,
            _ => 0,
        },
        &[tag::IDENTIFY, 7],
    );
    let mut tie_rng = stream(
        match tie_break {
            TieBreak::Uniform(s) => s,
            _ => 1,
        },
        &[tag::IDENTIFY, 8],
    );
    let per_step = (certificates_per_run / n.max(1)).max(1);
    let mut plays = 0u64;
    let mut certificates = 0u64;
    let mut set_sizes = Vec::new();
    while live.len() > 1 {
        // Sampled interior certificate: random non-vertex convex
        // combinations must have UCB < 1 while some vertex attains >= 1.
        for _ in 0..per_step {
            let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - cert_rng.random::<f64>()).ln()).collect();
            let sum: f64 = w.iter().sum();
            for x in &mut w {
                *x /= sum;
            }
            let coords = model.hardcase_coords(&w);
            let ucb_interior = live
                .iter()
                .map(|&idx| RewardModel::hardcase_predict(&vertices[idx], &coords))
                .fold(f64::NEG_INFINITY, f64::max);
            if ucb_interior >= 1.0 {
                return Ok(HardCaseRun {
                    plays,
                    all_vertex_plays: false,
                    certificates,
                    set_sizes,
                });
            }
            certificates += 1;
        }
        // Vertex UCB: 1 on surviving vertices, 0 elsewhere; pick per order.
        let chosen = match tie_break {
            TieBreak::Adversarial => *live
                .iter()
                .find(|&&idx| idx != star)
                .unwrap_or(&star),
            TieBreak::Lexicographic => live[0],
            TieBreak::Uniform(_) => live[tie_rng.random_range(0..live.len())],
        };
        plays += 1;
        if chosen == star {
            // Reward 1 identifies the ground truth: every other model
            // predicted 0 on this vertex.
            live = vec![star];
        } else {
            live.retain(|&idx| idx != chosen);
        }
        set_sizes.push(live.len());
    }
    Ok(HardCaseRun { plays, all_vertex_plays: true, certificates, set_sizes })
}

/// Regret certificate for the noiseless identify-then-commit runner.
pub fn regret_bound_noiseless(t: u64, dim_v: u64) -> u64 {
    t.min(2 * dim_v)
}

/// Fitted low-rank polynomial sum_i lambda_i <v_i, [1, a]>^p.
#[derive(Debug, Clone)]
pub struct PolyFit {
    pub p: u32,
    pub lambdas: Vec<f64>,
    /// Unit directions in R^{d+1} (lifted coordinates).
    pub directions: Vec<DVector<f64>>,
    pub residual_rms: f64,
    pub restarts_used: usize,
}

impl PolyFit {
    pub fn predict(&self, a: &DVector<f64>) -> f64 {
        let mut lifted = DVector::zeros(a.len() + 1);
        lifted[0] = 1.0;
        lifted.rows_mut(1, a.len()).copy_from(a);
        self.lambdas
            .iter()
            .zip(&self.directions)
            .map(|(l, v)| l * v.dot(&lifted).powi(self.p as i32))
            .sum()
    }

    /// Converts signed weights s_i (w_i^T x)^p into (lambda_i, v_i) pairs.
    fn from_weights(w: &[DVector<f64>], signs: &[f64], p: u32) -> PolyFit {
        let mut lambdas = Vec::with_capacity(w.len());
        let mut dirs = Vec::with_capacity(w.len());
        for (wi, s) in w.iter().zip(signs) {
            let norm = wi.norm();
            if norm <= 1e-12 {
                lambdas.push(0.0);
                dirs.push(DVector::zeros(wi.len()));
            } else {
                lambdas.push(s * norm.powi(p as i32));
                dirs.push(wi / norm);
            }
        }
        PolyFit { p, lambdas, directions: dirs, residual_rms: 0.0, restarts_used: 0 }
    }
}

/// One Levenberg-Marquardt pass on f(a) = sum_i s_i (w_i^T lifted)^p with
/// fixed signs s_i (odd p absorbs signs into w; even p needs them free).
fn lm_fit(
    samples: &[TensorizedSample],
    k: usize,
    p: u32,
    d: usize,
    init: &[DVector<f64>],
    signs: &[f64],
    max_iters: usize,
) -> (Vec<DVector<f64>>, f64) {
    let n = samples.len();
    let dim = d + 1;
    let nw = k * dim;
    let lifted: Vec<DVector<f64>> = samples
        .iter()
        .map(|s| {
            let mut l = DVector::zeros(dim);
            l[0] = 1.0;
            l.rows_mut(1, d).copy_from(&s.action);
            l
        })
        .collect();
    let mut w: Vec<DVector<f64>> = init.to_vec();
    let mut mu = 1e-3;
    let resid = |w: &[DVector<f64>]| -> DVector<f64> {
        DVector::from_fn(n, |t, _| {
            let pred: f64 = w
                .iter()
                .zip(signs)
                .map(|(wi, s)| s * wi.dot(&lifted[t]).powi(p as i32))
                .sum();
            pred - samples[t].reward
        })
    };
    let mut r = resid(&w);
    let mut sse = r.norm_squared();
    for _ in 0..max_iters {
        // Jacobian: d res_t / d w_i = s_i p (w_i^T x_t)^{p-1} x_t.
        let mut jac = nalgebra::DMatrix::zeros(n, nw);
        for t in 0..n {
            for (i, wi) in w.iter().enumerate() {
                let c = signs[i] * p as f64 * wi.dot(&lifted[t]).powi(p as i32 - 1);
                for j in 0..dim {
                    jac[(t, i * dim + j)] = c * lifted[t][j];
                }
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..12 {
            let lhs = &jtj + nalgebra::DMatrix::identity(nw, nw) * mu;
            if let Some(delta) = lhs.lu().solve(&(-&jtr)) {
                let mut w_new = w.clone();
                for i in 0..k {
                    for j in 0..dim {
                        w_new[i][j] += delta[i * dim + j];
                    }
                }
                let r_new = resid(&w_new);
                let sse_new = r_new.norm_squared();
                if sse_new < sse {
                    w = w_new;
                    r = r_new;
                    sse = sse_new;
                    mu = (mu * 0.33).max(1e-12);
                    improved = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !improved || sse < 1e-24 {
            break;
        }
    }
    (w, (sse / n as f64).sqrt())
}

/// Fits a rank-k degree-p polynomial to noiseless samples by multi-restart
/// Levenberg-Marquardt; restarts cycle through sign patterns when p is
/// even. Acceptance is functional (residuals), never parameter identity:
/// the parameterization has sign/permutation/scale symmetries.
pub fn fit_lowrank_polynomial(
    samples: &[TensorizedSample],
    k: usize,
    p: u32,
    d: usize,
    seed: u64,
    restarts: usize,
) -> Result<PolyFit> {
    assert!(samples.len() > 2 * d * k, "need at least 2dk + 1 samples");
    let max_reward = samples.iter().map(|s| s.reward.abs()).fold(0.0f64, f64::max);
    if max_reward == 0.0 {
        // All-zero rewards: the zero polynomial fits exactly.
        let zero = vec![DVector::zeros(d + 1); k];
        let mut fit = PolyFit::from_weights(&zero, &vec![1.0; k], p);
        fit.residual_rms = 0.0;
        return Ok(fit);
    }
    let mut best: Option<(f64, Vec<DVector<f64>>, Vec<f64>)> = None;
    let mut used = restarts;
    for restart in 0..restarts {
        let mut rng = stream(seed, &[tag::FIT, restart as u64]);
        let init: Vec<DVector<f64>> =
            (0..k).map(|_| std_gaussian(&mut rng, d + 1) * 0.5).collect();
        let signs: Vec<f64> = if p.is_multiple_of(2) {
            (0..k).map(|i| if restart >> i & 1 == 1 { -1.0 } else { 1.0 }).collect()
        } else {
            vec![1.0; k]
        };
        let (w, rms) = lm_fit(samples, k, p, d, &init, &signs, 300);
        if best.as_ref().is_none_or(|(b, _, _)| rms < *b) {
            best = Some((rms, w, signs));
        }
        if best.as_ref().unwrap().0 <= 1e-9 {
            used = restart + 1;
            break;
        }
    }
    let (rms, w, signs) = best.unwrap();
    // Success means reproducing the samples to numerical precision.
    if rms > 1e-6 {
        return Err(Error::FitFailed { residual: rms, restarts });
    }
    let mut fit = PolyFit::from_weights(&w, &signs, p);
    fit.residual_rms = rms;
    fit.restarts_used = used;
    Ok(fit)
}

/// Committed-action search: multi-start projected gradient ascent on the
/// fitted polynomial over the unit ball.
pub fn argmax_fitted(fit: &PolyFit, d: usize, seed: u64) -> DVector<f64> {
    let mut starts: Vec<DVector<f64>> = Vec::new();
    for v in &fit.directions {
        let spatial = v.rows(1, d).into_owned();
        let n = spatial.norm();
        if n > 1e-9 {
            starts.push(&spatial / n);
            starts.push(-&spatial / n);
        }
    }
    let mut rng = stream(seed, &[tag::FIT, 999]);
    for _ in 0..6 {
        starts.push(crate::util::unit_sphere(&mut rng, d));
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for start in starts {
        let mut a = start.clone();
        let mut step = 0.5;
        let mut f_cur = fit.predict(&a);
        for _ in 0..300 {
            // Gradient of sum lambda_i (v_i^T lifted)^p in the spatial block.
            let mut lifted = DVector::zeros(d + 1);
            lifted[0] = 1.0;
            lifted.rows_mut(1, d).copy_from(&a);
            let mut grad = DVector::zeros(d);
            for (l, v) in fit.lambdas.iter().zip(&fit.directions) {
                let c = l * fit.p as f64 * v.dot(&lifted).powi(fit.p as i32 - 1);
                grad += v.rows(1, d).into_owned() * c;
            }
            let mut trial = &a + &grad * step;
            let norm = trial.norm();
            if norm > 1.0 {
                trial /= norm;
            }
            let f_trial = fit.predict(&trial);
            if f_trial > f_cur + 1e-15 {
                a = trial;
                f_cur = f_trial;
            } else {
                step *= 0.5;
                if step < 1e-9 {
                    break;
                }
            }
        }
        if best.as_ref().is_none_or(|(b, _)| f_cur > *b) {
            best = Some((f_cur, a));
        }
    }
    best.unwrap().1
}

#[derive(Debug, Clone)]
pub struct ItcOutcome {
    pub explored: u64,
    pub fit_residual: f64,
    pub held_out_max_err: f64,
    pub committed_suboptimality: f64,
    pub cumulative_regret: f64,
    pub bound: u64,
}

/// Identify-then-commit for the noiseless low-rank polynomial family:
/// 2dk + 1 random exploration actions, a multi-restart fit, and a commit
/// to the fitted argmax for the remaining horizon.
pub fn identify_then_commit(
    session: &mut BanditSession,
    seed: u64,
    k: usize,
    horizon: u64,
    explore_radius: f64,
    restarts: usize,
) -> Result<ItcOutcome> {
    assert_eq!(session.model().kind(), ModelKind::PolyLowRank);
    assert_eq!(session.sigma_noise(), 0.0);
    let d = session.model().dim();
    let p = session.model().degree();
    let t0 = (2 * d * k + 1) as u64;
    let mut rng = stream(seed, &[tag::IDENTIFY, 2]);
    let mut samples = Vec::with_capacity(t0 as usize);
    for _ in 0..t0 {
        // Gaussian direction scaled into a radius-limited ball: positive
        // density, and the bounded radius caps per-step exploration regret.
        let dir = crate::util::unit_sphere(&mut rng, d);
        let r: f64 = explore_radius * rng.random::<f64>().powf(1.0 / d as f64);
        let a = dir * r;
        let reward = session.pull(&Action::Vector(a.clone()))?;
        samples.push(TensorizedSample { features: DVector::zeros(0), action: a, reward });
    }
    let fit = fit_lowrank_polynomial(&samples, k, p, d, seed, restarts)?;
    let a_commit = argmax_fitted(&fit, d, seed);
    let committed_suboptimality =
        session.r_star() - session.model().eval_unchecked(&Action::Vector(a_commit.clone()));
    // Held-out check: fresh random actions, exact model available.
    let mut held_out_max_err = 0.0f64;
    for _ in 0..200 {
        let a = crate::env::random_ball_action(&mut rng, d);
        let truth = session.model().eval_unchecked(&Action::Vector(a.clone()));
        held_out_max_err = held_out_max_err.max((fit.predict(&a) - truth).abs());
    }
    session.set_phase(1);
    if session.steps() < horizon {
        session.pull_repeated(&Action::Vector(a_commit), horizon - session.steps())?;
    }
    Ok(ItcOutcome {
        explored: t0,
        fit_residual: fit.residual_rms,
        held_out_max_err,
        committed_suboptimality,
        cumulative_regret: session.ledger().cumulative(),
        bound: regret_bound_noiseless(horizon, (d * k) as u64),
    })
}
