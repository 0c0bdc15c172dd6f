//! Comparison algorithms and regret-conversion utilities: finite-arm UCB,
//! lifted-feature LinUCB over a candidate grid, and the PAC-to-regret
//! tuning used by every explore-then-commit runner.

use crate::env::{Action, BanditSession};
use crate::util::unit_sphere;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Per-arm statistics for the finite UCB index policy.
#[derive(Debug, Clone)]
pub struct ArmStats {
    pub pulls: Vec<u64>,
    pub means: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FiniteUcbOutcome {
    pub stats: ArmStats,
    pub best_arm: usize,
}

/// Finite-arm UCB with the index mu_hat(i) + sqrt(ln(TK/delta) / N(i)).
///
/// Every arm is pulled once up front (the +1 initialization), then the
/// index policy runs until the session has consumed `until` total pulls.
/// Ties break deterministically toward the lower arm index.
pub fn run_finite_ucb(
    session: &mut BanditSession,
    arms: &[Action],
    until: u64,
    delta: f64,
) -> Result<FiniteUcbOutcome> {
    if arms.is_empty() {
        return Err(Error::InvalidParameter("empty arm list".into()));
    }
    let k = arms.len();
    let horizon = until.saturating_sub(session.steps()).max(1);
    let bonus_num = ((horizon as f64 * k as f64) / delta).ln().max(0.0);
    let mut pulls = vec![0u64; k];
    let mut sums = vec![0.0f64; k];
    for (i, arm) in arms.iter().enumerate() {
        if session.steps() >= until {
            break;
        }
        sums[i] += session.pull(arm)?;
        pulls[i] += 1;
    }
    while session.steps() < until {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..k {
            let score = if pulls[i] == 0 {
                f64::INFINITY
            } else {
                sums[i] / pulls[i] as f64 + (bonus_num / pulls[i] as f64).sqrt()
            };
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        sums[best] += session.pull(&arms[best])?;
        pulls[best] += 1;
    }
    let means: Vec<f64> =
        sums.iter().zip(&pulls).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
    let best_arm = (0..k)
        .max_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap())
        .unwrap_or(0);
    Ok(FiniteUcbOutcome { stats: ArmStats { pulls, means }, best_arm })
}

/// Runs finite UCB over a candidate pool for the residual horizon.
pub fn candidate_set_etc(
    session: &mut BanditSession,
    pool: &[Action],
    horizon: u64,
    delta: f64,
) -> Result<FiniteUcbOutcome> {
    session.set_phase(1);
    run_finite_ucb(session, pool, horizon, delta)
}

/// Multisets of size p over {0..=d} in lexicographic order; exponent vectors
/// of the degree-p monomials of the lifted action [1, a].
fn monomial_multisets(d: usize, p: u32) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; p as usize];
    loop {
        out.push(cur.clone());
        let mut i = p as usize;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < d {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..p as usize {
            cur[j] = cur[i];
        }
    }
}

/// Lifted feature map: the degree-p monomials of [1, a], one coordinate per
/// multiset. Spans the same linear space as the full tensor lift without
/// the repeated coordinates.
pub struct LiftedFeatures {
    d: usize,
    multisets: Vec<Vec<usize>>,
}

impl LiftedFeatures {
    pub fn new(d: usize, p: u32, cap: usize) -> Result<Self> {
        let multisets = monomial_multisets(d, p);
        if multisets.len() > cap {
            return Err(Error::FeatureCapExceeded(multisets.len(), cap));
        }
        Ok(LiftedFeatures { d, multisets })
    }

    pub fn dim(&self) -> usize {
        self.multisets.len()
    }

    pub fn features(&self, a: &DVector<f64>) -> DVector<f64> {
        assert_eq!(a.len(), self.d);
        let mut out = DVector::zeros(self.multisets.len());
        for (j, ms) in self.multisets.iter().enumerate() {
            let mut v = 1.0;
            for &i in ms {
                if i > 0 {
                    v *= a[i - 1];
                }
            }
            out[j] = v;
        }
        out
    }

    /// For p = 2: reconstructs the symmetric quadratic-form matrix encoded
    /// by a coefficient vector in this basis (degree-2 part only).
    pub fn quadratic_matrix(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d);
        for (j, ms) in self.multisets.iter().enumerate() {
            if ms.len() == 2 && ms[0] > 0 && ms[1] > 0 {
                let (i0, i1) = (ms[0] - 1, ms[1] - 1);
                if i0 == i1 {
                    m[(i0, i0)] += theta[j];
                } else {
                    m[(i0, i1)] += theta[j] / 2.0;
                    m[(i1, i0)] += theta[j] / 2.0;
                }
            }
        }
        m
    }

    /// Packed coefficients of a quadratic form (audit helper).
    pub fn pack_quadratic(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let mut theta = DVector::zeros(self.multisets.len());
        for (j, ms) in self.multisets.iter().enumerate() {
            if ms.len() == 2 && ms[0] > 0 && ms[1] > 0 {
                let (i0, i1) = (ms[0] - 1, ms[1] - 1);
                theta[j] = if i0 == i1 { m[(i0, i0)] } else { 2.0 * m[(i0, i1)] };
            }
        }
        theta
    }
}

/// LinUCB configuration.
#[derive(Debug, Clone)]
pub struct LinUcbConfig {
    pub lambda_ridge: f64,
    /// Grid size over the unit sphere (seeded; recorded in trace metadata).
    pub grid_size: usize,
    pub grid_seed: u64,
    /// Scales the ellipsoid width beta_t.
    pub c_beta: f64,
    pub delta: f64,
    /// Feature-dimension cap.
    pub cap: usize,
    /// Evaluate the implied action every this many steps (p = 2 only).
    pub check_every: u64,
    /// Stop when the implied action's true suboptimality falls below this.
    pub stop_at_subopt: Option<f64>,
    /// Run the (cubic-cost) confidence-coverage audit.
    pub audit_coverage: bool,
}

impl Default for LinUcbConfig {
    fn default() -> Self {
        LinUcbConfig {
            lambda_ridge: 1.0,
            grid_size: 256,
            grid_seed: 0,
            c_beta: 1.0,
            delta: 0.1,
            cap: 10_000_000,
            check_every: 64,
            stop_at_subopt: None,
            audit_coverage: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinUcbOutcome {
    pub steps: u64,
    pub first_hit: Option<u64>,
    /// Fraction of audited steps with |theta - theta_hat|_V <= beta_t
    /// (p = 2 only; needs the visible model).
    pub coverage: f64,
    pub implied_action: Option<DVector<f64>>,
}

/// LinUCB over lifted polynomial features with a sphere-grid action set.
///
/// Ridge estimate plus ellipsoid bonus; the optimistic argmax runs over the
/// grid (the sup over the continuous ball is intractable). The implied
/// action (p = 2) is the top eigenvector of the symmetrized quadratic part
/// of the ridge estimate, which is the exact ball argmax of the estimate.
pub fn run_lin_ucb(
    session: &mut BanditSession,
    p: u32,
    horizon: u64,
    cfg: &LinUcbConfig,
) -> Result<LinUcbOutcome> {
    let d = session.model().dim();
    let lift = LiftedFeatures::new(d, p, cfg.cap)?;
    let dim = lift.dim();
    // The grid must span the lifted feature space or the ridge estimate is
    // confined to a proper subspace; grid_size = 0 asks for 4x the feature
    // dimension.
    let grid_size = if cfg.grid_size == 0 { 4 * dim } else { cfg.grid_size };
    let mut grid_rng = crate::stream::stream(cfg.grid_seed, &[crate::stream::tag::GRID]);
    let mut grid: Vec<DVector<f64>> = Vec::with_capacity(grid_size);
    for i in 0..d.min(grid_size / 2) {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        grid.push(e);
    }
    while grid.len() < grid_size {
        grid.push(unit_sphere(&mut grid_rng, d));
    }
    let feats: Vec<DVector<f64>> = grid.iter().map(|a| lift.features(a)).collect();

    // Ridge state: V^{-1}, b, theta_hat, and per-arm caches of V^{-1} phi
    // and phi^T V^{-1} phi, all maintained under Sherman-Morrison updates.
    let mut vinv = DMatrix::<f64>::identity(dim, dim) / cfg.lambda_ridge;
    let mut b = DVector::<f64>::zeros(dim);
    let mut theta_hat = DVector::<f64>::zeros(dim);
    let mut w: Vec<DVector<f64>> = feats.iter().map(|f| f / cfg.lambda_ridge).collect();
    let mut q: Vec<f64> = feats.iter().zip(&w).map(|(f, wf)| f.dot(wf)).collect();

    let (r_star, _) = session.model().optimal_reward();
    let truth_theta = if p == 2 && cfg.audit_coverage {
        Some(lift.pack_quadratic(&session.model().matrix()))
    } else {
        None
    };
    let sigma = session.sigma_noise().max(1e-3);
    let start0 = session.steps();
    let mut first_hit = None;
    let mut implied = None;
    let mut covered: u64 = 0;
    let mut audited: u64 = 0;
    let mut t: u64 = 0;
    while t < horizon {
        t += 1;
        let beta = cfg.c_beta
            * (sigma * (dim as f64 * ((1.0 + t as f64) / cfg.delta).ln()).sqrt()
                + cfg.lambda_ridge.sqrt());
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for g in 0..grid.len() {
            let score = theta_hat.dot(&feats[g]) + beta * q[g].max(0.0).sqrt();
            if score > best_score {
                best_score = score;
                best = g;
            }
        }
        let r = session.pull(&Action::Vector(grid[best].clone()))?;
        // Sherman-Morrison update with u = phi_best.
        let u = feats[best].clone();
        let kvec = &vinv * &u;
        let denom = 1.0 + u.dot(&kvec);
        b += &u * r;
        // theta' = V'^{-1} b' with V'^{-1} = vinv - k k^T / denom.
        theta_hat = &vinv * &b - &kvec * (kvec.dot(&b) / denom);
        for g in 0..grid.len() {
            let kphi = kvec.dot(&feats[g]);
            w[g] -= &kvec * (kphi / denom);
            q[g] -= kphi * kphi / denom;
        }
        vinv -= &kvec * kvec.transpose() / denom;

        let checkpoint = t.is_multiple_of(cfg.check_every) || t == horizon;
        if checkpoint {
            if let Some(truth) = &truth_theta {
                audited += 1;
                let diff = truth - &theta_hat;
                if let Some(vx) = vinv.clone().lu().solve(&diff) {
                    let dist = diff.dot(&vx).max(0.0).sqrt();
                    if dist <= beta {
                        covered += 1;
                    }
                }
            }
            if p == 2 {
                let m_hat = lift.quadratic_matrix(&theta_hat);
                let eig = nalgebra::SymmetricEigen::new(m_hat);
                let mut top = 0;
                for i in 0..d {
                    if eig.eigenvalues[i] > eig.eigenvalues[top] {
                        top = i;
                    }
                }
                let a = eig.eigenvectors.column(top).into_owned();
                let f = session.model().eval_unchecked(&Action::Vector(a.clone()));
                implied = Some(a);
                if let Some(thresh) = cfg.stop_at_subopt {
                    if r_star - f <= thresh && first_hit.is_none() {
                        first_hit = Some(session.steps() - start0);
                        break;
                    }
                }
            }
        }
    }
    let coverage = if audited > 0 { covered as f64 / audited as f64 } else { 1.0 };
    Ok(LinUcbOutcome { steps: session.steps() - start0, first_hit, coverage, implied_action: implied })
}

/// PAC-to-regret tuning for an angle-accuracy explorer taking A * zeta^{-a}
/// actions: zeta = (A / (T p))^{1/(a+2)}, T1 = A zeta^{-a}, and the regret
/// bound T^{a/(a+2)} p^{a/(a+2)} A^{2/(a+2)} r*.
#[derive(Debug, Clone, Copy)]
pub struct PacTuning {
    pub zeta: f64,
    pub explore_len: f64,
    pub bound: f64,
}

pub fn pac_to_regret(a_const: f64, a_exp: f64, p: f64, t: f64, r_star: f64) -> PacTuning {
    assert!(a_const > 0.0 && a_exp > 0.0 && t >= 1.0);
    let zeta = (a_const / (t * p)).powf(1.0 / (a_exp + 2.0));
    let explore_len = a_const * zeta.powf(-a_exp);
    let bound = t.powf(a_exp / (a_exp + 2.0))
        * p.powf(a_exp / (a_exp + 2.0))
        * a_const.powf(2.0 / (a_exp + 2.0))
        * r_star;
    PacTuning { zeta, explore_len, bound }
}

/// Reward-accuracy variant: an explorer reaching eps-optimal reward with
/// B eps^{-b} samples is tuned at eps = (B r*/T)^{1/(1+b)}.
pub fn pac_to_regret_reward(b_const: f64, b_exp: f64, t: f64, r_star: f64) -> PacTuning {
    assert!(b_const > 0.0 && b_exp > 0.0 && t >= 1.0);
    let eps = (b_const * r_star / t).powf(1.0 / (1.0 + b_exp));
    let explore_len = b_const * eps.powf(-b_exp);
    let bound = b_const.powf(1.0 / (1.0 + b_exp))
        * t.powf(b_exp / (1.0 + b_exp))
        * r_star.powf(1.0 / (1.0 + b_exp));
    PacTuning { zeta: eps, explore_len, bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_random_model, ModelKind, SpectrumSpec};
    use approx::assert_relative_eq;

    fn arm(v: Vec<f64>) -> Action {
        Action::Vector(DVector::from_vec(v))
    }

    #[test]
    fn single_arm_and_full_init_round() {
        let model = make_random_model(
            ModelKind::Ev,
            3,
            1,
            2,
            &SpectrumSpec::Explicit(vec![1.0]),
            3,
        )
        .unwrap();
        let gap = 1.0 - model.eval_mean(&arm(vec![1.0, 0.0, 0.0])).unwrap();
        let mut session = crate::env::BanditSession::new(model, 0.0, 5);
        let out = run_finite_ucb(&mut session, &[arm(vec![1.0, 0.0, 0.0])], 100, 0.1).unwrap();
        assert_eq!(out.stats.pulls[0], 100);
        assert_relative_eq!(session.ledger().cumulative(), 100.0 * gap, epsilon = 1e-9);

        let model = make_random_model(
            ModelKind::Ev,
            4,
            1,
            2,
            &SpectrumSpec::Explicit(vec![1.0]),
            7,
        )
        .unwrap();
        let mut session = crate::env::BanditSession::new(model, 1.0, 9);
        let arms: Vec<Action> = (0..4)
            .map(|i| {
                let mut v = vec![0.0; 4];
                v[i] = 1.0;
                arm(v)
            })
            .collect();
        let out = run_finite_ucb(&mut session, &arms, 4, 0.1).unwrap();
        assert!(out.stats.pulls.iter().all(|&n| n == 1), "each arm pulled once first");
    }

    #[test]
    fn two_arm_gap_rarely_pulls_suboptimal() {
        // Gap 0.5 at sigma = 1, T = 10^4: the suboptimal arm gets o(T) pulls.
        let mut failures = 0;
        for seed in 0..40 {
            let model = make_random_model(
                ModelKind::Ev,
                2,
                1,
                2,
                &SpectrumSpec::Explicit(vec![1.0]),
                1000,
            )
            .unwrap();
            let v1 = model.direction(0, 0);
            // Second arm at 45 degrees: f = cos^2(45) = 1/2, gap 0.5.
            let orth = DVector::from_vec(vec![-v1[1], v1[0]]);
            let v2 = (&v1 + &orth) / (&v1 + &orth).norm();
            let arms = vec![Action::Vector(v1), Action::Vector(v2)];
            let mut session = crate::env::BanditSession::new(model, 1.0, seed);
            let out = run_finite_ucb(&mut session, &arms, 10_000, 0.1).unwrap();
            if out.stats.pulls[1] > 200 {
                failures += 1;
            }
        }
        assert!(failures <= 2, "suboptimal arm overdrawn in {failures}/40 seeds");
    }

    #[test]
    fn feature_dims() {
        let lift = LiftedFeatures::new(3, 2, 1000).unwrap();
        assert_eq!(lift.dim(), 10); // C(3+2, 2)
        let lift32 = LiftedFeatures::new(32, 2, 1000).unwrap();
        assert_eq!(lift32.dim(), 561);
        assert!(LiftedFeatures::new(32, 4, 1000).is_err());
    }

    #[test]
    fn lift_matches_quadratic_form() {
        let model = make_random_model(
            ModelKind::Ev,
            5,
            2,
            2,
            &SpectrumSpec::Explicit(vec![0.9, -0.4]),
            11,
        )
        .unwrap();
        let lift = LiftedFeatures::new(5, 2, 1000).unwrap();
        let theta = lift.pack_quadratic(&model.matrix());
        let mut rng = crate::stream::stream(13, &[1]);
        for _ in 0..50 {
            let a = crate::env::random_ball_action(&mut rng, 5);
            let f = model.eval_mean(&Action::Vector(a.clone())).unwrap();
            assert_relative_eq!(theta.dot(&lift.features(&a)), f, epsilon = 1e-10);
            let m = lift.quadratic_matrix(&theta);
            assert_relative_eq!((a.transpose() * &m * &a)[(0, 0)], f, epsilon = 1e-10);
        }
    }

    #[test]
    fn linucb_noiseless_identifies_quickly() {
        let model = make_random_model(
            ModelKind::Ev,
            4,
            1,
            2,
            &SpectrumSpec::Explicit(vec![1.0]),
            17,
        )
        .unwrap();
        let mut session = crate::env::BanditSession::new(model, 0.0, 19);
        let cfg = LinUcbConfig {
            grid_size: 64,
            check_every: 8,
            stop_at_subopt: Some(0.05),
            ..Default::default()
        };
        let out = run_lin_ucb(&mut session, 2, 4000, &cfg).unwrap();
        assert!(out.first_hit.is_some(), "noiseless LinUCB should identify");
        assert!(out.first_hit.unwrap() <= 2000);
    }

    #[test]
    fn linucb_coverage_audit() {
        let model = make_random_model(
            ModelKind::Ev,
            4,
            2,
            2,
            &SpectrumSpec::Explicit(vec![0.9, 0.4]),
            23,
        )
        .unwrap();
        let mut session = crate::env::BanditSession::new(model, 0.1, 29);
        let cfg = LinUcbConfig {
            grid_size: 64,
            check_every: 16,
            audit_coverage: true,
            ..Default::default()
        };
        let out = run_lin_ucb(&mut session, 2, 3000, &cfg).unwrap();
        assert!(out.coverage >= 0.9, "coverage {}", out.coverage);
    }

    #[test]
    fn pac_tuning_values() {
        let t = pac_to_regret(1.0, 2.0, 2.0, 16.0, 1.0);
        assert_relative_eq!(t.zeta, 32f64.powf(-0.25), epsilon = 1e-12);
        assert_relative_eq!(t.zeta, 0.4204482076, epsilon = 1e-9);
        assert_relative_eq!(t.explore_len, 32f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(t.bound, 4.0 * 2.0f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn pac_tuning_monotone() {
        let mut prev_zeta = f64::INFINITY;
        for &t in &[16.0, 64.0, 256.0, 1024.0] {
            let tune = pac_to_regret(1.0, 2.0, 2.0, t, 1.0);
            assert!(tune.zeta < prev_zeta);
            prev_zeta = tune.zeta;
        }
        let b1 = pac_to_regret(1.0, 2.0, 2.0, 100.0, 1.0).bound;
        let b2 = pac_to_regret(4.0, 2.0, 2.0, 100.0, 1.0).bound;
        assert!(b2 > b1, "bound increases in A");
    }

    #[test]
    fn pac_formulas_dual_route() {
        // Identity checks plus an independent ln-domain evaluation route.
        let mut rng = crate::stream::stream(31, &[2]);
        use rand::Rng as _;
        for _ in 0..100 {
            let a_const = 10f64.powf(rng.random_range(-2.0..3.0));
            let a_exp: f64 = rng.random_range(0.5..4.0);
            let p = rng.random_range(2.0..6.0f64).floor();
            let t = 10f64.powf(rng.random_range(1.0..7.0));
            let r_star = rng.random_range(0.1..1.0);
            let tune = pac_to_regret(a_const, a_exp, p, t, r_star);
            assert_relative_eq!(
                tune.zeta.powf(a_exp + 2.0) * t * p,
                a_const,
                max_relative = 1e-10
            );
            assert_relative_eq!(
                tune.explore_len * tune.zeta.powf(a_exp),
                a_const,
                max_relative = 1e-10
            );
            let log_bound = (a_exp / (a_exp + 2.0)) * (t.ln() + p.ln())
                + (2.0 / (a_exp + 2.0)) * a_const.ln()
                + r_star.ln();
            assert_relative_eq!(tune.bound.ln(), log_bound, max_relative = 1e-10);
        }
    }

    #[test]
    fn candidate_etc_flat_on_optimal_pool() {
        let model = make_random_model(
            ModelKind::Ev,
            3,
            1,
            2,
            &SpectrumSpec::Explicit(vec![1.0]),
            37,
        )
        .unwrap();
        let (_, a_star) = model.optimal_reward();
        let mut session = crate::env::BanditSession::new(model, 0.0, 41);
        candidate_set_etc(&mut session, &[a_star], 200, 0.1).unwrap();
        assert_relative_eq!(session.ledger().cumulative(), 0.0, epsilon = 1e-10);
        assert!(candidate_set_etc(&mut session, &[], 300, 0.1).is_err());
    }
}
