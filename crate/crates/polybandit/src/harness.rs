//! Experiment orchestration: config ingestion, seeded runs, CSV traces,
//! scaling-exponent estimation, and the pieces behind the CLI.
//!
//! Every run is keyed by (config, seed) and fully reproducible: the model,
//! the noise stream, and every probe stream derive from counter-based
//! generators, so sweep workers can execute in any order.

use crate::baselines::{self, LinUcbConfig};
use crate::env::{make_random_model, Action, BanditSession, ModelKind, SpectrumSpec};
use crate::noiseless::{self, TieBreak};
use crate::rl;
use crate::spectral::{self, OracleParams, SpectralConfig};
use crate::stream::stream;
use crate::tensor::{self, HintMode, TensorConfig};
use crate::util::{linfit_slope, median};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Environment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: ModelKind,
    pub d: usize,
    pub k: usize,
    pub p: u32,
    /// Explicit spectrum; empty means a sampled one.
    #[serde(default)]
    pub spectrum: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma_noise: f64,
}

fn default_sigma() -> f64 {
    1.0
}

/// Tunable algorithm constants with the pinned defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Constants {
    #[serde(default = "default_cn")]
    pub c_n: f64,
    #[serde(default = "default_cl")]
    pub c_l: f64,
    #[serde(default = "default_cm")]
    pub c_m: f64,
    #[serde(default = "default_cs")]
    pub c_s: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_cn() -> f64 {
    8.0
}
fn default_cl() -> f64 {
    4.0
}
fn default_cm() -> f64 {
    4.0
}
fn default_cs() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.1
}

impl Default for Constants {
    fn default() -> Self {
        Constants { c_n: 8.0, c_l: 4.0, c_m: 4.0, c_s: 1.0, delta: 0.1 }
    }
}

/// Algorithm to dispatch, with its tuning. Externally tagged in the
/// config: `[algorithm.npm-etc]` (or `algorithm = "optimal-replay"`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    /// Replay the optimal action (sanity baseline).
    OptimalReplay,
    /// Noisy power method, horizon-tuned explore-then-commit.
    NpmEtc {
        /// Explorer constant A in T1 = A zeta^{-2} (calibrated).
        a_const: f64,
        /// Oracle alpha = |lambda_2/lambda_1|.
        #[serde(default)]
        alpha: f64,
        #[serde(default = "one")]
        lambda1: f64,
        #[serde(default)]
        constants: Constants,
    },
    /// Gap-free power method ETC (reward-accuracy explorer, b = 4).
    GapFreeEtc {
        b_const: f64,
        #[serde(default = "one")]
        lambda1: f64,
        #[serde(default)]
        constants: Constants,
    },
    /// Low-rank subspace iteration ETC.
    SubspaceEtc {
        b_const: f64,
        #[serde(default = "one")]
        lambda_k: f64,
        #[serde(default)]
        constants: Constants,
    },
    /// Subspace iteration at formula batch sizes; records |A_hat - A*|_F.
    SubspaceMeasure {
        eps: f64,
        #[serde(default = "one")]
        lambda_k: f64,
        #[serde(default)]
        constants: Constants,
    },
    /// Noisy power method until the iterate is eps-optimal (measurement).
    NpmMeasure {
        eps: f64,
        #[serde(default)]
        alpha: f64,
        #[serde(default = "one")]
        lambda1: f64,
        #[serde(default)]
        constants: Constants,
    },
    /// LinUCB until the implied action is eps-optimal (measurement).
    LinUcbMeasure {
        eps: f64,
        #[serde(default = "default_grid")]
        grid_size: usize,
        #[serde(default = "one")]
        lambda_ridge: f64,
        #[serde(default = "one")]
        c_beta: f64,
        #[serde(default = "default_check")]
        check_every: u64,
    },
    /// LinUCB played for the whole horizon (regret baseline).
    LinUcb {
        #[serde(default = "default_grid")]
        grid_size: usize,
        #[serde(default = "one")]
        lambda_ridge: f64,
        #[serde(default = "one")]
        c_beta: f64,
    },
    /// Phased elimination + candidate-set UCB for symmetric tensors.
    PhasedElim {
        eps: f64,
        #[serde(default)]
        r_star_hint: Option<f64>,
        #[serde(default)]
        constants: Constants,
        #[serde(default)]
        batch_cap: Option<usize>,
    },
    /// Two-phase burn-in variant.
    BurnIn {
        c_n2: f64,
        #[serde(default = "one")]
        eps2_scale: f64,
        #[serde(default)]
        r_star_hint: Option<f64>,
        #[serde(default)]
        constants: Constants,
        #[serde(default)]
        batch_cap: Option<usize>,
    },
    /// Alternating power iteration for asymmetric tensors.
    AltPower {
        eps: f64,
        #[serde(default)]
        pool: Option<usize>,
        #[serde(default)]
        r_star_hint: Option<f64>,
        #[serde(default)]
        constants: Constants,
        #[serde(default)]
        batch_cap: Option<usize>,
    },
    /// Finite-arm UCB over a seeded sphere grid.
    FiniteUcb {
        #[serde(default = "default_grid")]
        grid_size: usize,
    },
    /// Noiseless identify-then-commit for low-rank polynomials.
    IdentifyCommit {
        #[serde(default = "default_radius")]
        explore_radius: f64,
        #[serde(default = "default_restarts")]
        restarts: usize,
    },
    /// Hard-case UCB simulation.
    HardcaseUcb {
        #[serde(default = "default_tiebreak")]
        tiebreak: String,
    },
    /// Hard-case random-play identification.
    HardcaseRandom,
    /// Generative-model RL policy learning.
    RlLearn {
        h: usize,
        eps: f64,
        #[serde(default = "default_states")]
        n_states: usize,
        #[serde(default = "default_actions")]
        n_actions: usize,
        #[serde(default = "default_kappa")]
        kappa_tilde: f64,
        #[serde(default = "default_rl_cn")]
        c_n: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn default_grid() -> usize {
    256
}
fn default_check() -> u64 {
    64
}
fn default_radius() -> f64 {
    0.7
}
fn default_restarts() -> usize {
    20
}
fn default_tiebreak() -> String {
    "adversarial".into()
}
fn default_states() -> usize {
    6
}
fn default_actions() -> usize {
    4
}
fn default_kappa() -> f64 {
    1.5
}
fn default_rl_cn() -> f64 {
    0.5
}

/// One experiment: environment, algorithm, horizon, seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    pub algorithm: AlgorithmSpec,
    pub horizon: u64,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Trace rows recorded (downsampled to about this many).
    #[serde(default = "default_rows")]
    pub max_rows: u64,
}

fn default_rows() -> u64 {
    4096
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// One (t, regret) trace with its metadata echo.
#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub meta: Vec<(String, String)>,
    pub rows: Vec<crate::env::TraceRow>,
    pub final_regret: f64,
    pub steps: u64,
    /// Extra per-algorithm outputs (JSON).
    pub extras: serde_json::Value,
    /// Per-iteration spectral diagnostics, when the algorithm emits them.
    pub diag_rows: Vec<spectral::IterDiag>,
    /// Stage telemetry from the tensor algorithms.
    pub stage_rows: Vec<tensor::StageRow>,
}

impl RegretTrace {
    /// RFC-4180 data table; metadata goes to the sidecar file.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,cumulative_regret,instantaneous_regret,phase")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                row.t, row.cumulative_regret, row.instantaneous_regret, row.phase
            )?;
        }
        Ok(())
    }

    pub fn write_meta_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "key,value")?;
        for (k, v) in &self.meta {
            let escaped = v.replace('"', "\"\"");
            writeln!(w, "{k},\"{escaped}\"")?;
        }
        Ok(())
    }

    /// Iteration diagnostics: (l, samples, tan_theta, g_norm estimate).
    pub fn write_diag_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,samples,tan_theta,suboptimality,g_norm,vg_norm")?;
        for d in &self.diag_rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                d.iter, d.samples, d.tan_theta, d.suboptimality, d.g_norm, d.vg_norm
            )?;
        }
        Ok(())
    }

    /// Stage telemetry: (stage, candidate, steps, samples, r_n, tan_theta).
    pub fn write_stages_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "stage,candidate,steps,samples,r_n,tan_theta,kept")?;
        for r in &self.stage_rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.stage, r.candidate, r.steps, r.samples, r.r_n, r.tan_theta, r.kept
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let meta_path = path.with_extension("meta.csv");
        let f = std::fs::File::create(meta_path)?;
        self.write_meta_csv(std::io::BufWriter::new(f))?;
        if !self.diag_rows.is_empty() {
            let f = std::fs::File::create(path.with_extension("diag.csv"))?;
            self.write_diag_csv(std::io::BufWriter::new(f))?;
        }
        if !self.stage_rows.is_empty() {
            let f = std::fs::File::create(path.with_extension("stages.csv"))?;
            self.write_stages_csv(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

fn build_model(env: &EnvSpec, seed: u64) -> Result<crate::env::RewardModel> {
    let spectrum = if env.spectrum.is_empty() {
        SpectrumSpec::Sampled { top: 1.0, decay: 0.5, signed: false }
    } else {
        SpectrumSpec::Explicit(env.spectrum.clone())
    };
    make_random_model(env.kind, env.d, env.k, env.p, &spectrum, seed)
}

fn grid_actions(d: usize, size: usize, seed: u64) -> Vec<Action> {
    let mut rng = stream(seed, &[crate::stream::tag::GRID, 1]);
    let mut out = Vec::with_capacity(size);
    for i in 0..d.min(size / 2) {
        let mut e = nalgebra::DVector::zeros(d);
        e[i] = 1.0;
        out.push(Action::Vector(e));
    }
    while out.len() < size {
        out.push(Action::Vector(crate::util::unit_sphere(&mut rng, d)));
    }
    out
}

/// Runs one (config, seed) pair and returns the trace. Deterministic.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<RegretTrace> {
    let model_seed = seed ^ 0x517c_c1b7_2722_0a95;
    let stride = (config.horizon / config.max_rows.max(1)).max(1);
    let mut extras = serde_json::Map::new();
    let mut meta: Vec<(String, String)> = vec![
        ("name".into(), config.name.clone()),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("seed".into(), seed.to_string()),
        ("sigma_noise".into(), config.env.sigma_noise.to_string()),
        (
            "config_json".into(),
            serde_json::to_string(config).map_err(|e| Error::Config(e.to_string()))?,
        ),
    ];

    // Hard-case algorithms do not run through a session.
    match &config.algorithm {
        AlgorithmSpec::HardcaseUcb { tiebreak } => {
            let model = build_model(&config.env, model_seed)?;
            let tb = match tiebreak.as_str() {
                "adversarial" => TieBreak::Adversarial,
                "lex" | "lexicographic" => TieBreak::Lexicographic,
                "uniform" => TieBreak::Uniform(seed),
                other => return Err(Error::Config(format!("unknown tiebreak {other}"))),
            };
            let run = noiseless::ucb_hard_case_run(&model, tb, 1000)?;
            extras.insert("plays".into(), run.plays.into());
            extras.insert("all_vertex_plays".into(), run.all_vertex_plays.into());
            extras.insert("certificates".into(), run.certificates.into());
            // Each non-ground-truth vertex play has instantaneous regret 1.
            let rows = (1..=run.plays)
                .step_by(stride as usize)
                .map(|t| crate::env::TraceRow {
                    t,
                    cumulative_regret: t as f64,
                    instantaneous_regret: 1.0,
                    phase: 0,
                })
                .collect();
            return Ok(RegretTrace {
                meta,
                rows,
                final_regret: run.plays as f64,
                steps: run.plays,
                extras: extras.into(),
                diag_rows: Vec::new(),
                stage_rows: Vec::new(),
            });
        }
        AlgorithmSpec::HardcaseRandom => {
            let model = build_model(&config.env, model_seed)?;
            let mut session = BanditSession::new(model, 0.0, seed).with_recording(1);
            let out = noiseless::identify_finite_class(&mut session, seed)?;
            extras.insert("plays".into(), out.actions_used.into());
            extras.insert(
                "alpha_hat".into(),
                serde_json::to_value(&out.alpha_hat).unwrap_or_default(),
            );
            let rows = session.rows().unwrap_or(&[]).to_vec();
            let final_regret = session.ledger().cumulative();
            return Ok(RegretTrace {
                meta,
                rows,
                final_regret,
                steps: session.steps(),
                extras: extras.into(),
                diag_rows: Vec::new(),
                stage_rows: Vec::new(),
            });
        }
        AlgorithmSpec::RlLearn { h, eps, n_states, n_actions, kappa_tilde, c_n } => {
            let mdp = rl::make_bellman_complete_mdp(
                config.env.d,
                config.env.k,
                *h,
                *n_states,
                *n_actions,
                *kappa_tilde,
                model_seed,
            )?;
            let cfg = rl::RecoveryConfig { c_n: *c_n, ..Default::default() };
            let out = rl::learn_policy(&mdp, *eps, seed, &cfg)?;
            extras.insert("samples_total".into(), out.samples_total.into());
            extras.insert("value_gap".into(), out.value_gap.into());
            extras.insert("q1_sup_err".into(), out.q1_sup_err.into());
            let levels: Vec<serde_json::Value> = out
                .levels
                .iter()
                .map(|l| {
                    serde_json::json!({
                        "level": l.level,
                        "samples": l.samples,
                        "spectral_err": l.spectral_err,
                        "value_gap_so_far": l.value_gap_so_far,
                    })
                })
                .collect();
            extras.insert("levels".into(), levels.into());
            return Ok(RegretTrace {
                meta,
                rows: Vec::new(),
                final_regret: 0.0,
                steps: out.samples_total,
                extras: extras.into(),
                diag_rows: Vec::new(),
                stage_rows: Vec::new(),
            });
        }
        _ => {}
    }

    let model = build_model(&config.env, model_seed)?;
    meta.push(("model_json".into(), model.to_json_compact()));
    let mut session =
        BanditSession::new(model, config.env.sigma_noise, seed).with_recording(stride);
    let horizon = config.horizon;
    let mut rng = stream(seed, &[crate::stream::tag::PROBES, 0xA1]);
    let mut diag_rows: Vec<spectral::IterDiag> = Vec::new();
    let mut stage_rows: Vec<tensor::StageRow> = Vec::new();

    match &config.algorithm {
        AlgorithmSpec::OptimalReplay => {
            let (_, a_star) = session.model().optimal_reward();
            session.pull_repeated(&a_star, horizon)?;
        }
        AlgorithmSpec::NpmEtc { a_const, alpha, lambda1, constants } => {
            let tune = baselines::pac_to_regret(*a_const, 2.0, 2.0, horizon as f64, *lambda1);
            let d = config.env.d;
            // Horizon-independent iteration count: the commit quality then
            // tracks the batch size n ~ T1/L ~ sqrt(T), matching the tuned
            // zeta^2 decay.
            let iters = (constants.c_l * (d as f64).ln() / (1.0 - alpha).max(0.05))
                .ceil()
                .max(2.0) as usize;
            let n = ((tune.explore_len / iters as f64).ceil() as usize).max(8);
            let cfg = SpectralConfig {
                c_n: constants.c_n,
                c_l: constants.c_l,
                c_m: constants.c_m,
                delta: constants.delta,
                batch_override: Some(n),
                iters_override: Some(iters),
                ..Default::default()
            };
            let res = spectral::run_npm(
                &mut session,
                &mut rng,
                tune.zeta.min(0.49),
                OracleParams { lambda1: *lambda1, alpha: *alpha },
                &cfg,
            )?;
            extras.insert("explore_len".into(), res.samples_used.into());
            extras.insert("zeta".into(), tune.zeta.into());
            extras.insert("bound".into(), tune.bound.into());
            diag_rows = res.diags.clone();
            let out = spectral::etc_commit(&mut session, &Action::Vector(res.a_hat), horizon)?;
            extras.insert("overran".into(), out.overran.into());
        }
        AlgorithmSpec::GapFreeEtc { b_const, lambda1, constants } => {
            let tune =
                baselines::pac_to_regret_reward(*b_const, 4.0, horizon as f64, *lambda1);
            let eps_ang = (tune.zeta / lambda1).sqrt().min(1.2);
            let d = config.env.d;
            let boost = 2.0 / (eps_ang * eps_ang);
            let iters =
                (constants.c_l * boost * (d as f64 / eps_ang).ln()).floor().max(1.0) as usize + 1;
            let n = ((tune.explore_len / iters as f64).ceil() as usize).max(4);
            let cfg = SpectralConfig {
                c_n: constants.c_n,
                c_l: constants.c_l,
                c_m: constants.c_m,
                delta: constants.delta,
                boost,
                batch_override: Some(n),
                iters_override: Some(iters),
                ..Default::default()
            };
            let res =
                spectral::run_npm_gap_free(&mut session, &mut rng, eps_ang, *lambda1, &cfg)?;
            extras.insert("explore_len".into(), res.samples_used.into());
            extras.insert("eps_reward".into(), tune.zeta.into());
            diag_rows = res.diags.clone();
            let out = spectral::etc_commit(&mut session, &Action::Vector(res.a_hat), horizon)?;
            extras.insert("overran".into(), out.overran.into());
        }
        AlgorithmSpec::SubspaceEtc { b_const, lambda_k, constants } => {
            let r_star = session.r_star();
            let tune = baselines::pac_to_regret_reward(*b_const, 1.0, horizon as f64, r_star);
            // eps_reward = r* eps^2 / 2 relates the Frobenius accuracy.
            let eps = (2.0 * tune.zeta / r_star).sqrt().min(0.9);
            let d = config.env.d;
            let iters = (constants.c_l * (d as f64 / eps).ln()).floor().max(1.0) as usize + 1;
            let per_round = (config.env.k * 2) * (iters + 1);
            let n = ((tune.explore_len / per_round as f64).ceil() as usize).max(8);
            let cfg = SpectralConfig {
                c_n: constants.c_n,
                c_l: constants.c_l,
                c_m: constants.c_m,
                delta: constants.delta,
                batch_override: Some(n),
                iters_override: Some(iters),
                ..Default::default()
            };
            let res = spectral::run_subspace_iteration(
                &mut session,
                &mut rng,
                config.env.k,
                eps,
                *lambda_k,
                &cfg,
            )?;
            extras.insert("explore_len".into(), res.samples_used.into());
            let out = spectral::etc_commit(&mut session, &Action::Matrix(res.a_hat), horizon)?;
            extras.insert("overran".into(), out.overran.into());
        }
        AlgorithmSpec::SubspaceMeasure { eps, lambda_k, constants } => {
            let cfg = SpectralConfig {
                c_n: constants.c_n,
                c_l: constants.c_l,
                c_m: constants.c_m,
                delta: constants.delta,
                ..Default::default()
            };
            let res = spectral::run_subspace_iteration(
                &mut session,
                &mut rng,
                config.env.k,
                *eps,
                *lambda_k,
                &cfg,
            )?;
            let (_, a_star) = session.model().optimal_reward();
            let a_star = match a_star {
                Action::Matrix(m) => m,
                _ => return Err(Error::ActionKindMismatch),
            };
            extras.insert("frob_err".into(), (&res.a_hat - a_star).norm().into());
            extras.insert("samples".into(), res.samples_used.into());
            diag_rows = res.diags.clone();
        }
        AlgorithmSpec::NpmMeasure { eps, alpha, lambda1, constants } => {
            let cfg = SpectralConfig {
                c_n: constants.c_n,
                c_l: constants.c_l,
                c_m: constants.c_m,
                delta: constants.delta,
                stop_at_subopt: Some(*eps * lambda1),
                ..Default::default()
            };
            let res = spectral::run_npm(
                &mut session,
                &mut rng,
                (*eps).min(0.49),
                OracleParams { lambda1: *lambda1, alpha: *alpha },
                &cfg,
            )?;
            diag_rows = res.diags.clone();
            match res.first_hit {
                Some(t) => extras.insert("samples_to_eps".into(), t.into()),
                None => extras.insert("samples_to_eps".into(), serde_json::Value::Null),
            };
        }
        AlgorithmSpec::LinUcbMeasure { eps, grid_size, lambda_ridge, c_beta, check_every } => {
            let lcfg = LinUcbConfig {
                lambda_ridge: *lambda_ridge,
                grid_size: *grid_size,
                grid_seed: seed,
                c_beta: *c_beta,
                check_every: *check_every,
                stop_at_subopt: Some(*eps * session.r_star()),
                ..Default::default()
            };
            meta.push(("grid_size".into(), grid_size.to_string()));
            let out = baselines::run_lin_ucb(&mut session, config.env.p, horizon, &lcfg)?;
            match out.first_hit {
                Some(t) => extras.insert("samples_to_eps".into(), t.into()),
                None => extras.insert("samples_to_eps".into(), serde_json::Value::Null),
            };
        }
        AlgorithmSpec::LinUcb { grid_size, lambda_ridge, c_beta } => {
            let lcfg = LinUcbConfig {
                lambda_ridge: *lambda_ridge,
                grid_size: *grid_size,
                grid_seed: seed,
                c_beta: *c_beta,
                ..Default::default()
            };
            meta.push(("grid_size".into(), grid_size.to_string()));
            baselines::run_lin_ucb(&mut session, config.env.p, horizon, &lcfg)?;
        }
        AlgorithmSpec::PhasedElim { eps, r_star_hint, constants, batch_cap } => {
            let cfg = TensorConfig {
                c_n: constants.c_n,
                c_l: constants.c_l,
                c_s: constants.c_s,
                c_m: constants.c_m,
                delta: constants.delta,
                hint: match r_star_hint {
                    Some(h) => HintMode::Oracle(*h),
                    None => HintMode::Empirical,
                },
                batch_cap: batch_cap.unwrap_or(50_000_000),
                ..Default::default()
            };
            let (pool, rows) = tensor::run_phased_elimination(
                &mut session,
                seed,
                config.env.p,
                config.env.k,
                *eps,
                &cfg,
            )?;
            stage_rows = rows.clone();
            extras.insert("pool_size".into(), pool.candidates.len().into());
            extras.insert("explored".into(), session.steps().into());
            extras.insert(
                "best_alignment".into(),
                rows.iter()
                    .filter(|r| r.kept)
                    .map(|r| r.tan_theta)
                    .fold(f64::INFINITY, f64::min)
                    .into(),
            );
            if session.steps() < horizon {
                let arms: Vec<Action> =
                    pool.candidates.iter().map(|c| Action::Vector(c.clone())).collect();
                baselines::candidate_set_etc(&mut session, &arms, horizon, constants.delta)?;
            }
        }
        AlgorithmSpec::BurnIn { c_n2, eps2_scale, r_star_hint, constants, batch_cap } => {
            let cfg = TensorConfig {
                c_n: constants.c_n,
                c_l: constants.c_l,
                c_s: constants.c_s,
                c_m: constants.c_m,
                delta: constants.delta,
                hint: match r_star_hint {
                    Some(h) => HintMode::Oracle(*h),
                    None => HintMode::Empirical,
                },
                batch_cap: batch_cap.unwrap_or(50_000_000),
                ..Default::default()
            };
            let out = tensor::run_burn_in(
                &mut session,
                seed,
                config.env.p,
                config.env.k,
                horizon,
                *c_n2,
                *eps2_scale,
                &cfg,
            )?;
            extras.insert("explored".into(), out.explored.into());
            extras.insert("underbudget".into(), out.underbudget.into());
            extras.insert("pool_size".into(), out.pool.candidates.len().into());
            stage_rows = out.rows.clone();
        }
        AlgorithmSpec::AltPower { eps, pool, r_star_hint, constants, batch_cap } => {
            let cfg = TensorConfig {
                c_n: constants.c_n,
                c_l: constants.c_l,
                c_s: constants.c_s,
                c_m: constants.c_m,
                delta: constants.delta,
                hint: match r_star_hint {
                    Some(h) => HintMode::Oracle(*h),
                    None => HintMode::Empirical,
                },
                pool_override: *pool,
                batch_cap: batch_cap.unwrap_or(50_000_000),
                ..Default::default()
            };
            let (tuple, rows) = tensor::run_alternating_power(
                &mut session,
                seed,
                config.env.p,
                config.env.k,
                *eps,
                &cfg,
            )?;
            stage_rows = rows;
            let f = session.model().eval_unchecked(&Action::Tuple(tuple.clone()));
            extras.insert("final_reward".into(), f.into());
            if session.steps() < horizon {
                spectral::etc_commit(&mut session, &Action::Tuple(tuple), horizon)?;
            }
        }
        AlgorithmSpec::FiniteUcb { grid_size } => {
            let arms = grid_actions(config.env.d, *grid_size, seed);
            meta.push(("grid_size".into(), grid_size.to_string()));
            baselines::run_finite_ucb(&mut session, &arms, horizon, 0.1)?;
        }
        AlgorithmSpec::IdentifyCommit { explore_radius, restarts } => {
            let out = noiseless::identify_then_commit(
                &mut session,
                seed,
                config.env.k,
                horizon,
                *explore_radius,
                *restarts,
            )?;
            extras.insert("explored".into(), out.explored.into());
            extras.insert("held_out_max_err".into(), out.held_out_max_err.into());
            extras.insert("fit_residual".into(), out.fit_residual.into());
            extras.insert("bound".into(), out.bound.into());
            extras.insert(
                "committed_suboptimality".into(),
                out.committed_suboptimality.into(),
            );
        }
        AlgorithmSpec::HardcaseUcb { .. }
        | AlgorithmSpec::HardcaseRandom
        | AlgorithmSpec::RlLearn { .. } => unreachable!("handled above"),
    }

    let rows = session.rows().unwrap_or(&[]).to_vec();
    Ok(RegretTrace {
        meta,
        rows,
        final_regret: session.ledger().cumulative(),
        steps: session.steps(),
        extras: extras.into(),
        diag_rows,
        stage_rows,
    })
}

/// Sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    D,
    T,
    H,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d" => Ok(Axis::D),
            "t" => Ok(Axis::T),
            "h" => Ok(Axis::H),
            other => Err(Error::Config(format!("unknown axis {other}"))),
        }
    }
}

/// What a sweep aggregates per seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    FinalRegret,
    SamplesToEps,
    TotalSamples,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub median_metric: f64,
    pub per_seed: Vec<f64>,
    /// Seeds whose metric was unavailable (e.g. never reached eps).
    pub censored: usize,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub points: Vec<SweepPoint>,
    pub slope: f64,
    pub slope_stderr: f64,
}

fn patched(config: &ExperimentConfig, axis: Axis, value: f64) -> ExperimentConfig {
    let mut c = config.clone();
    match axis {
        Axis::D => c.env.d = value as usize,
        Axis::T => c.horizon = value as u64,
        Axis::H => {
            if let AlgorithmSpec::RlLearn { h, .. } = &mut c.algorithm {
                *h = value as usize;
            }
        }
    }
    c
}

fn metric_of(trace: &RegretTrace, metric: Metric) -> Option<f64> {
    match metric {
        Metric::FinalRegret => Some(trace.final_regret),
        Metric::TotalSamples => trace
            .extras
            .get("samples_total")
            .and_then(|v| v.as_u64())
            .map(|v| v as f64)
            .or(Some(trace.steps as f64)),
        Metric::SamplesToEps => {
            trace.extras.get("samples_to_eps").and_then(|v| v.as_u64()).map(|v| v as f64)
        }
    }
}

/// Runs the grid (>= 3 axis points), medians >= the configured seeds, and
/// fits a log-log least-squares slope over the medians.
pub fn sweep(
    config: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    metric: Metric,
) -> Result<SweepSummary> {
    if values.len() < 3 {
        return Err(Error::Config("sweep needs at least 3 axis points".into()));
    }
    let seeds: Vec<u64> =
        if config.seeds.is_empty() { (0..20).collect() } else { config.seeds.clone() };
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let cfg = patched(config, axis, v);
        let results: Vec<Option<f64>> = seeds
            .par_iter()
            .map(|&s| run(&cfg, s).ok().and_then(|t| metric_of(&t, metric)))
            .collect();
        let per_seed: Vec<f64> = results.iter().flatten().cloned().collect();
        let censored = results.len() - per_seed.len();
        if per_seed.is_empty() {
            return Err(Error::Config(format!("no usable runs at axis value {v}")));
        }
        points.push(SweepPoint { axis_value: v, median_metric: median(&per_seed), per_seed, censored });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.axis_value.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median_metric.max(1e-300).ln()).collect();
    let (slope, slope_stderr) = linfit_slope(&xs, &ys);
    Ok(SweepSummary { points, slope, slope_stderr })
}

/// Merges traces into a comparison CSV: first column t, one column per
/// trace (values forward-filled; `NA` marks gaps before a trace starts).
pub fn report<W: Write>(traces: &[(String, Vec<(u64, f64)>)], mut w: W) -> Result<()> {
    let mut ts: Vec<u64> = traces.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.0)).collect();
    ts.sort_unstable();
    ts.dedup();
    write!(w, "t")?;
    for (name, _) in traces {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    let mut cursors = vec![0usize; traces.len()];
    for &t in &ts {
        write!(w, "{t}")?;
        for (i, (_, rows)) in traces.iter().enumerate() {
            while cursors[i] + 1 < rows.len() && rows[cursors[i] + 1].0 <= t {
                cursors[i] += 1;
            }
            if rows.is_empty() || rows[cursors[i]].0 > t {
                write!(w, ",NA")?;
            } else {
                write!(w, ",{}", rows[cursors[i]].1)?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads the (t, cumulative_regret) columns back from a trace CSV.
pub fn read_trace_csv(path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let t: u64 = rec[0].parse().map_err(|_| Error::Config("bad t column".into()))?;
        let c: f64 =
            rec[1].parse().map_err(|_| Error::Config("bad cumulative column".into()))?;
        out.push((t, c));
    }
    Ok(out)
}
