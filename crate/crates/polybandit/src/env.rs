//! Reward models, action validation, noisy evaluation, and the regret ledger.
//!
//! A [`RewardModel`] holds the ground-truth parameters of one reward class;
//! a [`BanditSession`] wraps a model with a noise law, step counter, and
//! cumulative-regret ledger. Algorithms only see sessions (pull access);
//! the harness may additionally inspect the model for diagnostics.

use crate::stream::{stream, tag};
use crate::util::{choose, random_orthonormal, unit_sphere};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Norm tolerance for action validation and model invariants.
pub const NORM_TOL: f64 = 1e-9;

/// Reward function classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Quadratic form a^T M a over the unit ball, M symmetric rank k.
    Ev,
    /// Linear reward <M, A> over the Frobenius unit ball, M symmetric rank k.
    Lr,
    /// Symmetric degree-p form sum_j lambda_j (v_j^T a)^p over the unit ball.
    Sym,
    /// Asymmetric degree-p form over p-tuples of unit-ball vectors.
    Asym,
    /// Low-rank polynomial sum_j lambda_j <v_j, [1,a]>^p, noiseless family.
    PolyLowRank,
    /// Finite multi-index class over polytope vertices (noiseless).
    HardCase,
}

/// Ground-truth reward parameters.
///
/// `frames` holds one orthonormal d x k frame for Ev/Lr/Sym/PolyLowRank and
/// p frames (one per slot) for Asym. Hard-case models instead store the
/// ground-truth multi-index `alpha_star` and the enumerated vertex set.
#[derive(Debug, Clone)]
pub struct RewardModel {
    kind: ModelKind,
    d: usize,
    k: usize,
    p: u32,
    lambdas: Vec<f64>,
    frames: Vec<DMatrix<f64>>,
    alpha_star: Vec<usize>,
    vertices: Vec<Vec<usize>>,
    seed: Option<u64>,
}

/// Cap on the enumerated hard-case vertex set.
const HARDCASE_VERTEX_CAP: usize = 1_000_000;

impl RewardModel {
    /// Builds a spectral-family model (everything except the hard case).
    pub fn new_spectral(
        kind: ModelKind,
        d: usize,
        p: u32,
        lambdas: Vec<f64>,
        frames: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if kind == ModelKind::HardCase {
            return Err(Error::InvalidModel("use new_hard_case".into()));
        }
        let k = lambdas.len();
        let model = RewardModel {
            kind,
            d,
            k,
            p,
            lambdas,
            frames,
            alpha_star: Vec::new(),
            vertices: Vec::new(),
            seed: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Builds a hard-case model with ground truth `alpha_star`
    /// (a strictly increasing p-tuple of 0-based coordinates).
    pub fn new_hard_case(d: usize, p: u32, alpha_star: Vec<usize>) -> Result<Self> {
        let pu = p as usize;
        if pu == 0 || pu > d {
            return Err(Error::InvalidModel(format!("need 1 <= p <= d, got p={p}, d={d}")));
        }
        if choose(d, pu) > HARDCASE_VERTEX_CAP {
            return Err(Error::InvalidModel(format!(
                "C({d},{p}) vertices exceed the cap {HARDCASE_VERTEX_CAP}"
            )));
        }
        if alpha_star.len() != pu
            || alpha_star.windows(2).any(|w| w[0] >= w[1])
            || alpha_star.iter().any(|&i| i >= d)
        {
            return Err(Error::InvalidModel(
                "alpha_star must be a strictly increasing p-tuple over [d]".into(),
            ));
        }
        let vertices = enumerate_multi_indices(d, pu);
        Ok(RewardModel {
            kind: ModelKind::HardCase,
            d,
            k: 1,
            p,
            lambdas: vec![1.0],
            frames: Vec::new(),
            alpha_star,
            vertices,
            seed: None,
        })
    }

    fn validate(&self) -> Result<()> {
        let (d, k, p) = (self.d, self.k, self.p);
        if d == 0 || k == 0 {
            return Err(Error::InvalidModel("d and k must be positive".into()));
        }
        if k > d {
            return Err(Error::InvalidModel(format!("k={k} exceeds d={d}")));
        }
        if p < 2 {
            return Err(Error::InvalidModel("p must be at least 2".into()));
        }
        if matches!(self.kind, ModelKind::Ev | ModelKind::Lr) && p != 2 {
            return Err(Error::InvalidModel("EV/LR require p = 2".into()));
        }
        if self.kind == ModelKind::Lr && 2 * k > d {
            return Err(Error::InvalidModel(format!("LR requires k <= d/2, got k={k}, d={d}")));
        }
        // Spectrum: |lambda_1| >= ... >= |lambda_k| > 0, lambda_1 <= 1.
        let l = &self.lambdas;
        if l.windows(2).any(|w| w[0].abs() + 1e-15 < w[1].abs()) {
            return Err(Error::InvalidModel("eigenvalues must be ordered by magnitude".into()));
        }
        if l[k - 1] == 0.0 {
            return Err(Error::InvalidModel("lambda_k = 0 is degenerate".into()));
        }
        if l[0].abs() > 1.0 + 1e-12 {
            return Err(Error::InvalidModel(format!("lambda_1 = {} exceeds 1", l[0])));
        }
        match self.kind {
            ModelKind::Ev | ModelKind::Sym | ModelKind::PolyLowRank => {
                if l[0] <= 0.0 {
                    return Err(Error::InvalidModel("lambda_1 must be positive".into()));
                }
            }
            ModelKind::Lr => {
                let frob2: f64 = l.iter().map(|x| x * x).sum();
                if frob2 > 1.0 + 1e-9 {
                    return Err(Error::InvalidModel(format!(
                        "implied |M|_F = {} exceeds 1",
                        frob2.sqrt()
                    )));
                }
            }
            _ => {}
        }
        // Frames: one for symmetric families, p for the asymmetric one.
        let want = if self.kind == ModelKind::Asym { p as usize } else { 1 };
        if self.frames.len() != want {
            return Err(Error::InvalidModel(format!(
                "expected {want} frame(s), got {}",
                self.frames.len()
            )));
        }
        for f in &self.frames {
            if f.nrows() != d || f.ncols() != k {
                return Err(Error::InvalidModel("frame shape mismatch".into()));
            }
            if crate::util::orthonormality_defect(f) > NORM_TOL {
                return Err(Error::InvalidModel("frame is not orthonormal within 1e-9".into()));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn rank(&self) -> usize {
        self.k
    }
    pub fn degree(&self) -> u32 {
        self.p
    }
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Orthonormal frame for slot `q` (0 for the symmetric families).
    pub fn frame(&self, q: usize) -> &DMatrix<f64> {
        &self.frames[q]
    }

    /// Direction `j` of slot-`q`'s frame.
    pub fn direction(&self, q: usize, j: usize) -> DVector<f64> {
        self.frames[q].column(j).into_owned()
    }

    /// The ground-truth multi-index of a hard-case model.
    pub fn alpha_star(&self) -> &[usize] {
        &self.alpha_star
    }

    /// Enumerated hard-case vertex index set, in lexicographic order.
    pub fn vertices(&self) -> &[Vec<usize>] {
        &self.vertices
    }

    /// Materializes M = sum_j lambda_j v_j v_j^T for the quadratic families.
    pub fn matrix(&self) -> DMatrix<f64> {
        assert!(matches!(self.kind, ModelKind::Ev | ModelKind::Lr));
        let v = &self.frames[0];
        let mut m = DMatrix::zeros(self.d, self.d);
        for j in 0..self.k {
            let col = v.column(j);
            m += self.lambdas[j] * col * col.transpose();
        }
        m
    }

    /// Flattened lifted parameter theta = sum_j lambda_j [0, v_j]^{tensor p},
    /// row-major over (d+1)^p entries. Only sensible for small lifts.
    pub fn lifted_theta(&self, cap: usize) -> Result<DVector<f64>> {
        assert!(matches!(self.kind, ModelKind::Sym | ModelKind::PolyLowRank));
        let dim = (self.d + 1).pow(self.p);
        if dim > cap {
            return Err(Error::FeatureCapExceeded(dim, cap));
        }
        let mut theta = DVector::zeros(dim);
        for j in 0..self.k {
            let mut lifted = DVector::zeros(self.d + 1);
            lifted.rows_mut(1, self.d).copy_from(&self.frames[0].column(j));
            let mut outer = DVector::from_element(1, self.lambdas[j]);
            for _ in 0..self.p {
                outer = kron_vec(&outer, &lifted);
            }
            theta += outer;
        }
        Ok(theta)
    }

    /// Noiseless mean reward of a valid action.
    pub fn eval_mean(&self, a: &Action) -> Result<f64> {
        self.validate_action(a)?;
        Ok(self.eval_unchecked(a))
    }

    pub(crate) fn eval_unchecked(&self, a: &Action) -> f64 {
        match (&self.kind, a) {
            (ModelKind::Ev, Action::Vector(x)) => {
                let v = &self.frames[0];
                (0..self.k).map(|j| {
                    let c = v.column(j).dot(x);
                    self.lambdas[j] * c * c
                })
                .sum()
            }
            (ModelKind::Lr, Action::Matrix(m)) => {
                let v = &self.frames[0];
                (0..self.k)
                    .map(|j| {
                        let col = v.column(j);
                        self.lambdas[j] * (col.transpose() * m * col)[(0, 0)]
                    })
                    .sum()
            }
            (ModelKind::Sym | ModelKind::PolyLowRank, Action::Vector(x)) => {
                let v = &self.frames[0];
                (0..self.k)
                    .map(|j| self.lambdas[j] * v.column(j).dot(x).powi(self.p as i32))
                    .sum()
            }
            (ModelKind::Asym, Action::Tuple(xs)) => (0..self.k)
                .map(|j| {
                    let prod: f64 = (0..self.p as usize)
                        .map(|q| self.frames[q].column(j).dot(&xs[q]))
                        .product();
                    self.lambdas[j] * prod
                })
                .sum(),
            (ModelKind::HardCase, Action::VertexWeights(w)) => {
                let coords = self.hardcase_coords(w);
                self.alpha_star.iter().map(|&i| coords[i]).product()
            }
            _ => unreachable!("validated action kind"),
        }
    }

    /// Dense coordinates of a hard-case convex-combination action.
    pub fn hardcase_coords(&self, w: &[f64]) -> DVector<f64> {
        let mut x = DVector::zeros(self.d);
        for (wb, beta) in w.iter().zip(&self.vertices) {
            if *wb != 0.0 {
                for &i in beta {
                    x[i] += *wb;
                }
            }
        }
        x
    }

    /// Reward a hard-case model `alpha` predicts on coordinates `x`.
    pub fn hardcase_predict(alpha: &[usize], x: &DVector<f64>) -> f64 {
        alpha.iter().map(|&i| x[i]).product()
    }

    /// Checks that the action matches this model's action set.
    pub fn validate_action(&self, a: &Action) -> Result<()> {
        match (&self.kind, a) {
            (ModelKind::Ev | ModelKind::Sym | ModelKind::PolyLowRank, Action::Vector(x)) => {
                if x.len() != self.d {
                    return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
                }
                let n = x.norm();
                if n > 1.0 + NORM_TOL {
                    return Err(Error::NormViolation { set: "unit ball", norm: n });
                }
                Ok(())
            }
            (ModelKind::Lr, Action::Matrix(m)) => {
                if m.nrows() != self.d || m.ncols() != self.d {
                    return Err(Error::DimensionMismatch { expected: self.d, got: m.nrows() });
                }
                let n = m.norm();
                if n > 1.0 + NORM_TOL {
                    return Err(Error::NormViolation { set: "Frobenius ball", norm: n });
                }
                Ok(())
            }
            (ModelKind::Asym, Action::Tuple(xs)) => {
                if xs.len() != self.p as usize {
                    return Err(Error::DimensionMismatch { expected: self.p as usize, got: xs.len() });
                }
                for x in xs {
                    if x.len() != self.d {
                        return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
                    }
                    let n = x.norm();
                    if n > 1.0 + NORM_TOL {
                        return Err(Error::NormViolation { set: "unit ball (slot)", norm: n });
                    }
                }
                Ok(())
            }
            (ModelKind::HardCase, Action::VertexWeights(w)) => {
                if w.len() != self.vertices.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.vertices.len(),
                        got: w.len(),
                    });
                }
                let sum: f64 = w.iter().sum();
                if w.iter().any(|&x| x < -NORM_TOL) || sum > 1.0 + NORM_TOL {
                    return Err(Error::NormViolation { set: "vertex simplex", norm: sum });
                }
                Ok(())
            }
            _ => Err(Error::ActionKindMismatch),
        }
    }

    /// Optimal mean reward and an action attaining it.
    pub fn optimal_reward(&self) -> (f64, Action) {
        match self.kind {
            ModelKind::Ev | ModelKind::Sym | ModelKind::PolyLowRank => {
                (self.lambdas[0], Action::Vector(self.direction(0, 0)))
            }
            ModelKind::Lr => {
                let m = self.matrix();
                let r = m.norm();
                (r, Action::Matrix(m / r))
            }
            ModelKind::Asym => {
                let mut slots: Vec<DVector<f64>> =
                    (0..self.p as usize).map(|q| self.direction(q, 0)).collect();
                // Any single-slot flip fixes a negative product; slot 1 is canonical.
                if self.lambdas[0] < 0.0 {
                    slots[0] = -&slots[0];
                }
                (self.lambdas[0].abs(), Action::Tuple(slots))
            }
            ModelKind::HardCase => {
                let idx = self
                    .vertices
                    .iter()
                    .position(|v| v == &self.alpha_star)
                    .expect("alpha_star is enumerated");
                let mut w = vec![0.0; self.vertices.len()];
                w[idx] = 1.0;
                (1.0, Action::VertexWeights(w))
            }
        }
    }

    /// JSON document for reproducibility (kind, sizes, spectrum, frames).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc()).expect("model serializes")
    }

    /// Single-line JSON form, for trace metadata.
    pub fn to_json_compact(&self) -> String {
        serde_json::to_string(&self.doc()).expect("model serializes")
    }

    fn doc(&self) -> ModelDoc {
        ModelDoc {
            kind: self.kind,
            d: self.d,
            k: self.k,
            p: self.p,
            lambdas: self.lambdas.clone(),
            frames_row_major: self
                .frames
                .iter()
                .map(|f| f.transpose().as_slice().to_vec())
                .collect(),
            alpha_star: self.alpha_star.clone(),
            seed: self.seed,
        }
    }

    /// Rebuilds a model from its JSON document.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(s).map_err(|e| Error::InvalidModel(e.to_string()))?;
        let mut model = if doc.kind == ModelKind::HardCase {
            Self::new_hard_case(doc.d, doc.p, doc.alpha_star)?
        } else {
            let frames = doc
                .frames_row_major
                .iter()
                .map(|rows| DMatrix::from_row_slice(doc.d, doc.k, rows))
                .collect();
            Self::new_spectral(doc.kind, doc.d, doc.p, doc.lambdas, frames)?
        };
        model.seed = doc.seed;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    kind: ModelKind,
    d: usize,
    k: usize,
    p: u32,
    lambdas: Vec<f64>,
    frames_row_major: Vec<Vec<f64>>,
    alpha_star: Vec<usize>,
    seed: Option<u64>,
}

fn kron_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[i * b.len() + j] = a[i] * b[j];
        }
    }
    out
}

/// All strictly increasing p-tuples over [d], lexicographic.
pub fn enumerate_multi_indices(d: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(choose(d, p));
    let mut cur = (0..p).collect::<Vec<_>>();
    loop {
        out.push(cur.clone());
        // advance
        let mut i = p;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + d - p {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..p {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Spectrum specification for the instance generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumSpec {
    /// Eigenvalues given explicitly, ordered by magnitude.
    Explicit(Vec<f64>),
    /// lambda_1 = top, remaining magnitudes decay geometrically by `decay`
    /// with alternating-sign option. For LR the spectrum is rescaled to
    /// Frobenius norm `top`.
    Sampled { top: f64, decay: f64, signed: bool },
}

/// Generates a random instance; deterministic for a fixed seed.
pub fn make_random_model(
    kind: ModelKind,
    d: usize,
    k: usize,
    p: u32,
    spectrum: &SpectrumSpec,
    seed: u64,
) -> Result<RewardModel> {
    let mut rng = stream(seed, &[tag::ENV_MODEL]);
    if kind == ModelKind::HardCase {
        let pu = p as usize;
        if pu > d {
            return Err(Error::InvalidModel("p exceeds d".into()));
        }
        // Random strictly increasing p-tuple.
        let mut idx: Vec<usize> = (0..d).collect();
        let mut alpha = Vec::with_capacity(pu);
        for _ in 0..pu {
            let j = rng.random_range(0..idx.len());
            alpha.push(idx.swap_remove(j));
        }
        alpha.sort_unstable();
        let mut m = RewardModel::new_hard_case(d, p, alpha)?;
        m.seed = Some(seed);
        return Ok(m);
    }
    let lambdas = match spectrum {
        SpectrumSpec::Explicit(l) => l.clone(),
        SpectrumSpec::Sampled { top, decay, signed } => {
            let mut l = Vec::with_capacity(k);
            let mut mag = *top;
            for j in 0..k {
                let sign = if *signed && j > 0 && rng.random::<bool>() { -1.0 } else { 1.0 };
                l.push(sign * mag);
                mag *= decay;
            }
            if kind == ModelKind::Lr {
                let frob = l.iter().map(|x| x * x).sum::<f64>().sqrt();
                let scale = top / frob;
                for x in &mut l {
                    *x *= scale;
                }
            }
            l
        }
    };
    let n_frames = if kind == ModelKind::Asym { p as usize } else { 1 };
    let frames: Vec<DMatrix<f64>> =
        (0..n_frames).map(|_| random_orthonormal(&mut rng, d, k)).collect();
    let mut m = RewardModel::new_spectral(kind, d, p, lambdas, frames)?;
    m.seed = Some(seed);
    Ok(m)
}

/// Actions, one payload per action set.
#[derive(Debug, Clone)]
pub enum Action {
    /// Unit-ball vector.
    Vector(DVector<f64>),
    /// Frobenius-unit-ball matrix.
    Matrix(DMatrix<f64>),
    /// One unit-ball vector per tensor slot.
    Tuple(Vec<DVector<f64>>),
    /// Convex-combination weights over the hard-case vertex set.
    VertexWeights(Vec<f64>),
}

impl Action {
    pub fn vector(&self) -> &DVector<f64> {
        match self {
            Action::Vector(v) => v,
            _ => panic!("not a vector action"),
        }
    }
}

/// Running regret account.
#[derive(Debug, Clone)]
pub struct RegretLedger {
    t: u64,
    cumulative: f64,
    r_star: f64,
    recent: std::collections::VecDeque<f64>,
}

const LEDGER_RING: usize = 64;

impl RegretLedger {
    pub fn new(r_star: f64) -> Self {
        RegretLedger { t: 0, cumulative: 0.0, r_star, recent: Default::default() }
    }

    /// Adds one instantaneous regret r* - f(a).
    pub fn record(&mut self, mean_reward: f64) {
        // Clamp float dust; true increments lie in [0, 2 r*].
        let inst = (self.r_star - mean_reward).max(0.0);
        debug_assert!(inst <= 2.0 * self.r_star + 1e-9);
        self.t += 1;
        self.cumulative += inst;
        if self.recent.len() == LEDGER_RING {
            self.recent.pop_front();
        }
        self.recent.push_back(inst);
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }
    pub fn r_star(&self) -> f64 {
        self.r_star
    }
    pub fn recent(&self) -> impl Iterator<Item = &f64> {
        self.recent.iter()
    }
}

/// One recorded trace row (downsampled by the session's stride).
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: u64,
    pub cumulative_regret: f64,
    pub instantaneous_regret: f64,
    pub phase: u8,
}

/// Environment handle: model + noise law + counters + ledger + RNG stream.
///
/// Single-owner and single-threaded; run independent sessions in parallel.
pub struct BanditSession {
    model: RewardModel,
    sigma_noise: f64,
    noise_rng: ChaCha12Rng,
    budget: Option<u64>,
    ledger: RegretLedger,
    r_star: f64,
    rows: Option<Vec<TraceRow>>,
    stride: u64,
    phase: u8,
}

impl BanditSession {
    pub fn new(model: RewardModel, sigma_noise: f64, seed: u64) -> Self {
        let (r_star, _) = model.optimal_reward();
        BanditSession {
            model,
            sigma_noise,
            noise_rng: stream(seed, &[tag::ENV_NOISE]),
            budget: None,
            ledger: RegretLedger::new(r_star),
            r_star,
            rows: None,
            stride: 1,
            phase: 0,
        }
    }

    /// Caps the total number of pulls; further pulls error out.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    /// Records (t, regret) rows every `stride` pulls.
    pub fn with_recording(mut self, stride: u64) -> Self {
        self.rows = Some(Vec::new());
        self.stride = stride.max(1);
        self
    }

    /// Tags subsequent rows with an algorithm-phase id.
    pub fn set_phase(&mut self, phase: u8) {
        self.phase = phase;
    }

    pub fn model(&self) -> &RewardModel {
        &self.model
    }
    pub fn r_star(&self) -> f64 {
        self.r_star
    }
    pub fn sigma_noise(&self) -> f64 {
        self.sigma_noise
    }
    pub fn steps(&self) -> u64 {
        self.ledger.steps()
    }
    pub fn ledger(&self) -> &RegretLedger {
        &self.ledger
    }
    pub fn rows(&self) -> Option<&[TraceRow]> {
        self.rows.as_deref()
    }
    pub fn budget_remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.ledger.steps()))
    }

    /// Plays one action: returns mean reward plus Gaussian noise, advances
    /// the step counter, and charges the regret ledger.
    pub fn pull(&mut self, a: &Action) -> Result<f64> {
        self.model.validate_action(a)?;
        if let Some(b) = self.budget {
            if self.ledger.steps() >= b {
                return Err(Error::BudgetExhausted(b));
            }
        }
        let mean = self.model.eval_unchecked(a);
        let noise: f64 = if self.sigma_noise > 0.0 {
            self.sigma_noise * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut self.noise_rng)
        } else {
            0.0
        };
        self.ledger.record(mean);
        if let Some(rows) = self.rows.as_mut() {
            let t = self.ledger.steps();
            if t.is_multiple_of(self.stride) || t == 1 {
                rows.push(TraceRow {
                    t,
                    cumulative_regret: self.ledger.cumulative(),
                    instantaneous_regret: (self.r_star - mean).max(0.0),
                    phase: self.phase,
                });
            }
        }
        Ok(mean + noise)
    }

    /// Plays `a` for all remaining budgeted steps (commit phase helper).
    pub fn pull_repeated(&mut self, a: &Action, times: u64) -> Result<()> {
        for _ in 0..times {
            self.pull(a)?;
        }
        Ok(())
    }
}

/// Uniform random unit-ball action for a vector-action model.
pub fn random_ball_action<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    let dir = unit_sphere(rng, d);
    let r: f64 = rng.random::<f64>().powf(1.0 / d as f64);
    dir * r
}
