//! The IMDP data model: states, a hyperrectangular action space, interval
//! transition and reward bounds given as expressions of the action, a
//! discount factor, and an optional action-space pessimistic relaxation
//! overlay. Includes JSON file ingestion and sampling-based validation.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, Expression};

/// Errors from loading or constructing a model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("expression error at {path}: {source}")]
    Expr {
        path: String,
        #[source]
        source: ExprError,
    },
}

fn schema_err(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Schema { path: path.into(), message: message.into() }
}

/// A hyperrectangle `[lower, upper]` in action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ActionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() {
            return Err(schema_err("action_space", "lower and upper have different lengths"));
        }
        if lower.is_empty() {
            return Err(schema_err("action_space", "action space must have dimension >= 1"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(schema_err("action_space", format!("non-finite bound in dimension {i}")));
            }
            if lo > hi {
                return Err(schema_err(
                    "action_space",
                    format!("lower {lo} exceeds upper {hi} in dimension {i}"),
                ));
            }
        }
        Ok(ActionBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, a: &[f64], tol: f64) -> bool {
        a.len() == self.dim()
            && a.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= lo - tol && *x <= hi + tol)
    }

    /// Componentwise clamp; the orthogonal projection onto a box.
    pub fn project(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
            .collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// The l-infinity diameter of the box: its longest side.
    pub fn max_side(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }

    pub fn contains_box(&self, inner: &ActionBox) -> bool {
        self.dim() == inner.dim()
            && self
                .lower
                .iter()
                .zip(&inner.lower)
                .all(|(outer, inn)| outer <= inn)
            && self
                .upper
                .iter()
                .zip(&inner.upper)
                .all(|(outer, inn)| outer >= inn)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| if lo == hi { *lo } else { rng.random_range(*lo..=*hi) })
            .collect()
    }

    /// Uniform Cartesian grid with `resolution` points per non-collapsed
    /// dimension, in lexicographic order (first dimension most significant).
    pub fn grid(&self, resolution: usize) -> Result<ActionGrid, ModelError> {
        if resolution == 0 {
            return Err(schema_err("grid", "resolution must be >= 1"));
        }
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(self.dim());
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if lo == hi {
                axes.push(vec![*lo]);
            } else {
                if resolution < 2 {
                    return Err(schema_err(
                        "grid",
                        "resolution must be >= 2 per non-collapsed dimension",
                    ));
                }
                let step = (hi - lo) / (resolution - 1) as f64;
                axes.push((0..resolution).map(|i| lo + step * i as f64).collect());
            }
        }
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        loop {
            points.push(idx.iter().zip(&axes).map(|(i, axis)| axis[*i]).collect());
            // lexicographic increment, last dimension fastest
            let mut d = axes.len();
            loop {
                if d == 0 {
                    return Ok(ActionGrid { points });
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// Materialized action grid in lexicographic order.
#[derive(Debug, Clone)]
pub struct ActionGrid {
    pub points: Vec<Vec<f64>>,
}

impl ActionGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Constants of the relaxation overlay; any subset may be supplied.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RelaxConstants {
    /// Strong-concavity modulus of the relaxed lower rewards.
    pub strong_concavity: Option<f64>,
    /// Smoothness (gradient Lipschitz) constant.
    pub smoothness: Option<f64>,
    /// Upper bound on the lower rewards.
    pub reward_cap: Option<f64>,
}

/// Action-space pessimistic relaxation overlay: an enlarged convex action
/// box, concave/convex surrogate transition bounds, and concave surrogate
/// lower rewards. The overlay carries no upper-reward surrogate.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub action_box: ActionBox,
    pub trans_lower: Vec<Vec<Expression>>,
    pub trans_upper: Vec<Vec<Expression>>,
    pub reward_lower: Vec<Expression>,
    pub constants: RelaxConstants,
}

/// An interval Markov decision process with expression-valued bounds.
///
/// Transition grids are indexed `[from][to]`. Models are immutable after
/// construction; shared read access from many threads is safe.
#[derive(Debug, Clone)]
pub struct ImdpModel {
    states: Vec<String>,
    action_dim: usize,
    action_box: ActionBox,
    gamma: f64,
    trans_lower: Vec<Vec<Expression>>,
    trans_upper: Vec<Vec<Expression>>,
    reward_lower: Vec<Expression>,
    reward_upper: Vec<Expression>,
    relaxation: Option<Relaxation>,
}

/// A read view of one IMDP: either the base model or its relaxation
/// overlay. All solver operations run against a view.
#[derive(Debug, Clone, Copy)]
pub struct ImdpView<'a> {
    pub states: &'a [String],
    pub action_dim: usize,
    pub action_box: &'a ActionBox,
    pub gamma: f64,
    pub trans_lower: &'a [Vec<Expression>],
    pub trans_upper: &'a [Vec<Expression>],
    pub reward_lower: &'a [Expression],
    /// Absent on relaxed views: the overlay defines no upper rewards.
    pub reward_upper: Option<&'a [Expression]>,
    pub constants: Option<&'a RelaxConstants>,
}

impl ImdpModel {
    /// Programmatic constructor; performs the same structural checks as
    /// [`load_model`]. Transition entries absent from `transitions` default
    /// to the degenerate interval `[0, 0]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        states: Vec<String>,
        action_dim: usize,
        action_box: ActionBox,
        gamma: f64,
        transitions: Vec<(usize, usize, Expression, Expression)>,
        rewards: Vec<(Expression, Expression)>,
        relaxation: Option<Relaxation>,
    ) -> Result<Self, ModelError> {
        let n = states.len();
        if n == 0 {
            return Err(schema_err("states", "at least one state is required"));
        }
        {
            let mut seen = std::collections::BTreeSet::new();
            for s in &states {
                if !seen.insert(s) {
                    return Err(schema_err("states", format!("duplicate state name `{s}`")));
                }
            }
        }
        if action_dim == 0 {
            return Err(schema_err("action_dim", "action_dim must be >= 1"));
        }
        if action_box.dim() != action_dim {
            return Err(schema_err("action_space", "dimension does not match action_dim"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(schema_err("gamma", format!("gamma out of range: {gamma} (expected 0 <= gamma < 1)")));
        }
        let zero = Expression::constant(0.0, action_dim);
        let mut trans_lower = vec![vec![zero.clone(); n]; n];
        let mut trans_upper = vec![vec![zero.clone(); n]; n];
        let mut filled = vec![vec![false; n]; n];
        for (from, to, lo, hi) in transitions {
            if from >= n || to >= n {
                return Err(schema_err("transitions", "state index out of range"));
            }
            if filled[from][to] {
                return Err(schema_err(
                    "transitions",
                    format!("duplicate entry for `{}` -> `{}`", states[from], states[to]),
                ));
            }
            filled[from][to] = true;
            trans_lower[from][to] = lo;
            trans_upper[from][to] = hi;
        }
        if rewards.len() != n {
            return Err(schema_err("rewards", format!("expected {n} reward entries, got {}", rewards.len())));
        }
        let (reward_lower, reward_upper) = rewards.into_iter().unzip();
        let model = ImdpModel {
            states,
            action_dim,
            action_box,
            gamma,
            trans_lower,
            trans_upper,
            reward_lower,
            reward_upper,
            relaxation: None,
        };
        let mut model = model;
        if let Some(relax) = relaxation {
            model.attach_relaxation(relax)?;
        }
        Ok(model)
    }

    /// Attaches a relaxation overlay, checking structural invariants
    /// (box inclusion, dimensions, constant ordering).
    pub fn attach_relaxation(&mut self, relax: Relaxation) -> Result<(), ModelError> {
        let n = self.states.len();
        if relax.action_box.dim() != self.action_dim {
            return Err(schema_err("relaxation.action_space", "dimension does not match action_dim"));
        }
        if !relax.action_box.contains_box(&self.action_box) {
            return Err(schema_err(
                "relaxation.action_space",
                "relaxed action box must contain the base action box",
            ));
        }
        if relax.trans_lower.len() != n || relax.trans_upper.len() != n {
            return Err(schema_err("relaxation.transitions", "transition grid has wrong size"));
        }
        if relax.reward_lower.len() != n {
            return Err(schema_err("relaxation.rewards", "one lower reward per state is required"));
        }
        if let (Some(c), Some(l)) = (relax.constants.strong_concavity, relax.constants.smoothness) {
            if !(c > 0.0 && c <= l) {
                return Err(schema_err("relaxation.constants", format!("need 0 < c <= L, got c={c}, L={l}")));
            }
        }
        self.relaxation = Some(relax);
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    pub fn relaxation(&self) -> Option<&Relaxation> {
        self.relaxation.as_ref()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// View of the base model.
    pub fn base_view(&self) -> ImdpView<'_> {
        ImdpView {
            states: &self.states,
            action_dim: self.action_dim,
            action_box: &self.action_box,
            gamma: self.gamma,
            trans_lower: &self.trans_lower,
            trans_upper: &self.trans_upper,
            reward_lower: &self.reward_lower,
            reward_upper: Some(&self.reward_upper),
            constants: None,
        }
    }

    /// View of the relaxation overlay; errors when none is attached.
    pub fn relaxed_view(&self) -> Result<ImdpView<'_>, ModelError> {
        let relax = self
            .relaxation
            .as_ref()
            .ok_or_else(|| schema_err("relaxation", "model has no relaxation overlay"))?;
        Ok(ImdpView {
            states: &self.states,
            action_dim: self.action_dim,
            action_box: &relax.action_box,
            gamma: self.gamma,
            trans_lower: &relax.trans_lower,
            trans_upper: &relax.trans_upper,
            reward_lower: &relax.reward_lower,
            reward_upper: None,
            constants: Some(&relax.constants),
        })
    }
}

impl<'a> ImdpView<'a> {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Lower/upper transition bounds out of state `s` at action `a`,
    /// indexed by successor state.
    pub fn bounds_at(&self, s: usize, a: &[f64]) -> Result<crate::bellman::BoundsRow, ExprError> {
        let n = self.n_states();
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for to in 0..n {
            lower.push(self.trans_lower[s][to].value(a)?);
            upper.push(self.trans_upper[s][to].value(a)?);
        }
        Ok(crate::bellman::BoundsRow { lower, upper })
    }

    /// Bounds plus their action gradients, each indexed by successor state.
    pub fn bounds_grad_at(
        &self,
        s: usize,
        a: &[f64],
    ) -> Result<(crate::bellman::BoundsRow, Vec<Vec<f64>>, Vec<Vec<f64>>), ExprError> {
        let n = self.n_states();
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut grad_lower = Vec::with_capacity(n);
        let mut grad_upper = Vec::with_capacity(n);
        for to in 0..n {
            let lo = self.trans_lower[s][to].eval(a)?;
            let hi = self.trans_upper[s][to].eval(a)?;
            lower.push(lo.value);
            upper.push(hi.value);
            grad_lower.push(lo.gradient);
            grad_upper.push(hi.gradient);
        }
        Ok((crate::bellman::BoundsRow { lower, upper }, grad_lower, grad_upper))
    }

    pub fn reward_lower_at(&self, s: usize, a: &[f64]) -> Result<f64, ExprError> {
        self.reward_lower[s].value(a)
    }

    pub fn reward_upper_at(&self, s: usize, a: &[f64]) -> Result<Option<f64>, ExprError> {
        match self.reward_upper {
            Some(upper) => Ok(Some(upper[s].value(a)?)),
            None => Ok(None),
        }
    }
}

// ---------------------------------------------------------------------------
// JSON file format

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    states: Vec<String>,
    action_dim: usize,
    action_space: RawBox,
    gamma: f64,
    transitions: Vec<RawTransition>,
    rewards: Vec<RawReward>,
    #[serde(default)]
    relaxation: Option<RawRelaxation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    from: String,
    to: String,
    lower: String,
    upper: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReward {
    state: String,
    lower: String,
    upper: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRelaxation {
    action_space: RawBox,
    transitions: Vec<RawTransition>,
    rewards: Vec<RawRewardLower>,
    #[serde(default)]
    constants: Option<RawConstants>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRewardLower {
    state: String,
    lower: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    #[serde(default)]
    c: Option<f64>,
    #[serde(default, rename = "L")]
    l: Option<f64>,
    #[serde(default)]
    m: Option<f64>,
}

/// Loads a model (and its optional relaxation overlay) from a JSON file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ImdpModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ModelError::FileNotFound(path.display().to_string())
        } else {
            ModelError::Io { path: path.display().to_string(), source: e }
        }
    })?;
    load_model_str(&text)
}

/// Loads a model from JSON text.
pub fn load_model_str(text: &str) -> Result<ImdpModel, ModelError> {
    let raw: RawModel = serde_json::from_str(text)?;
    let action_dim = raw.action_dim;
    build_model(raw, action_dim)
}

fn build_model(raw: RawModel, action_dim: usize) -> Result<ImdpModel, ModelError> {
    let index_of = |name: &str, path: &str| -> Result<usize, ModelError> {
        raw.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| schema_err(path, format!("unknown state name `{name}`")))
    };

    let parse_expr = |text: &str, path: String| -> Result<Expression, ModelError> {
        Expression::parse(text, action_dim).map_err(|source| ModelError::Expr { path, source })
    };

    let mut transitions = Vec::with_capacity(raw.transitions.len());
    for (i, t) in raw.transitions.iter().enumerate() {
        let from = index_of(&t.from, &format!("transitions[{i}].from"))?;
        let to = index_of(&t.to, &format!("transitions[{i}].to"))?;
        let lo = parse_expr(&t.lower, format!("transitions[{i}].lower"))?;
        let hi = parse_expr(&t.upper, format!("transitions[{i}].upper"))?;
        transitions.push((from, to, lo, hi));
    }

    let n = raw.states.len();
    let mut rewards: Vec<Option<(Expression, Expression)>> = vec![None; n];
    for (i, r) in raw.rewards.iter().enumerate() {
        let s = index_of(&r.state, &format!("rewards[{i}].state"))?;
        if rewards[s].is_some() {
            return Err(schema_err(format!("rewards[{i}]"), format!("duplicate reward for state `{}`", r.state)));
        }
        let lo = parse_expr(&r.lower, format!("rewards[{i}].lower"))?;
        let hi = parse_expr(&r.upper, format!("rewards[{i}].upper"))?;
        rewards[s] = Some((lo, hi));
    }
    let mut reward_pairs = Vec::with_capacity(n);
    for (s, entry) in rewards.into_iter().enumerate() {
        match entry {
            Some(pair) => reward_pairs.push(pair),
            None => {
                return Err(schema_err("rewards", format!("missing reward for state `{}`", raw.states[s])));
            }
        }
    }

    let relaxation = match &raw.relaxation {
        None => None,
        Some(rel) => {
            let action_box = ActionBox::new(rel.action_space.lower.clone(), rel.action_space.upper.clone())?;
            let zero = Expression::constant(0.0, action_dim);
            let mut trans_lower = vec![vec![zero.clone(); n]; n];
            let mut trans_upper = vec![vec![zero.clone(); n]; n];
            let mut filled = vec![vec![false; n]; n];
            for (i, t) in rel.transitions.iter().enumerate() {
                let from = index_of(&t.from, &format!("relaxation.transitions[{i}].from"))?;
                let to = index_of(&t.to, &format!("relaxation.transitions[{i}].to"))?;
                if filled[from][to] {
                    return Err(schema_err(
                        format!("relaxation.transitions[{i}]"),
                        format!("duplicate entry for `{}` -> `{}`", t.from, t.to),
                    ));
                }
                filled[from][to] = true;
                trans_lower[from][to] = parse_expr(&t.lower, format!("relaxation.transitions[{i}].lower"))?;
                trans_upper[from][to] = parse_expr(&t.upper, format!("relaxation.transitions[{i}].upper"))?;
            }
            let mut reward_lower: Vec<Option<Expression>> = vec![None; n];
            for (i, r) in rel.rewards.iter().enumerate() {
                let s = index_of(&r.state, &format!("relaxation.rewards[{i}].state"))?;
                if reward_lower[s].is_some() {
                    return Err(schema_err(
                        format!("relaxation.rewards[{i}]"),
                        format!("duplicate reward for state `{}`", r.state),
                    ));
                }
                reward_lower[s] = Some(parse_expr(&r.lower, format!("relaxation.rewards[{i}].lower"))?);
            }
            let mut lowers = Vec::with_capacity(n);
            for (s, entry) in reward_lower.into_iter().enumerate() {
                match entry {
                    Some(e) => lowers.push(e),
                    None => {
                        return Err(schema_err(
                            "relaxation.rewards",
                            format!("missing reward for state `{}`", raw.states[s]),
                        ));
                    }
                }
            }
            let constants = match &rel.constants {
                None => RelaxConstants::default(),
                Some(c) => RelaxConstants {
                    strong_concavity: c.c,
                    smoothness: c.l,
                    reward_cap: c.m,
                },
            };
            Some(Relaxation { action_box, trans_lower, trans_upper, reward_lower: lowers, constants })
        }
    };

    let action_box = ActionBox::new(raw.action_space.lower.clone(), raw.action_space.upper.clone())?;
    ImdpModel::new(raw.states, action_dim, action_box, raw.gamma, transitions, reward_pairs, relaxation)
}

// ---------------------------------------------------------------------------
// sampling-based validation

/// The kind of condition a [`Violation`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `0 <= P_lo <= P_hi <= 1` at a sampled action.
    IntervalOrder,
    /// Row-sum consistency `sum P_lo <= 1 <= sum P_hi`.
    RowSum,
    /// `R_lo <= R_hi` at a sampled action.
    RewardOrder,
    /// Overlay dominance: `P_lo <= P_lo_cv`, `P_hi_cv <= P_hi`, `R_lo <= R_lo_cv` on the base box.
    OverlayDominance,
    /// Overlay must itself be a consistent IMDP on its own box.
    OverlayIntervalOrder,
    OverlayRowSum,
    /// Midpoint second-difference concavity test.
    Concavity,
    /// Midpoint second-difference convexity test.
    Convexity,
    /// An expression failed to evaluate at a sampled action.
    EvalFailure,
}

/// One violated condition with a witnessing action point (or pair).
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub check: CheckKind,
    pub location: String,
    pub witness: Vec<Vec<f64>>,
    pub detail: String,
}

/// Deterministic (seeded) validation report.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub seed: u64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const VAL_TOL: f64 = 1e-9;

/// Checks interval ordering, row-sum consistency, reward ordering, overlay
/// dominance, and overlay curvature at `samples` seeded random action
/// points. Violations are report content, not errors.
pub fn validate(model: &ImdpModel, samples: usize, seed: u64) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let n = model.n_states();
    let base = model.base_view();

    let fail = |violations: &mut Vec<Violation>, check, location: String, witness: Vec<Vec<f64>>, detail: String| {
        violations.push(Violation { check, location, witness, detail });
    };

    // base model pointwise checks over A
    for _ in 0..samples {
        let a = model.action_box.sample(&mut rng);
        for s in 0..n {
            let mut sum_lo = 0.0;
            let mut sum_hi = 0.0;
            let mut row_ok = true;
            for to in 0..n {
                let lo = model.trans_lower[s][to].value(&a);
                let hi = model.trans_upper[s][to].value(&a);
                let (lo, hi) = match (lo, hi) {
                    (Ok(lo), Ok(hi)) => (lo, hi),
                    (Err(e), _) | (_, Err(e)) => {
                        fail(
                            &mut violations,
                            CheckKind::EvalFailure,
                            format!("transitions {} -> {}", model.states[s], model.states[to]),
                            vec![a.clone()],
                            e.to_string(),
                        );
                        row_ok = false;
                        continue;
                    }
                };
                sum_lo += lo;
                sum_hi += hi;
                if lo < -VAL_TOL || hi > 1.0 + VAL_TOL || lo > hi + VAL_TOL {
                    fail(
                        &mut violations,
                        CheckKind::IntervalOrder,
                        format!("transitions {} -> {}", model.states[s], model.states[to]),
                        vec![a.clone()],
                        format!("interval [{lo}, {hi}] violates 0 <= lower <= upper <= 1"),
                    );
                }
            }
            if row_ok && (sum_lo > 1.0 + VAL_TOL || sum_hi < 1.0 - VAL_TOL) {
                fail(
                    &mut violations,
                    CheckKind::RowSum,
                    format!("transitions from {}", model.states[s]),
                    vec![a.clone()],
                    format!("row sums [{sum_lo}, {sum_hi}] do not straddle 1"),
                );
            }
            match (model.reward_lower[s].value(&a), model.reward_upper[s].value(&a)) {
                (Ok(lo), Ok(hi)) => {
                    if lo > hi + VAL_TOL {
                        fail(
                            &mut violations,
                            CheckKind::RewardOrder,
                            format!("rewards {}", model.states[s]),
                            vec![a.clone()],
                            format!("lower {lo} exceeds upper {hi}"),
                        );
                    }
                }
                (Err(e), _) | (_, Err(e)) => {
                    fail(
                        &mut violations,
                        CheckKind::EvalFailure,
                        format!("rewards {}", model.states[s]),
                        vec![a.clone()],
                        e.to_string(),
                    );
                }
            }
        }
    }

    let Some(relax) = model.relaxation() else {
        return ValidationReport { samples, seed, violations };
    };

    // overlay dominance over the base box A
    for _ in 0..samples {
        let a = model.action_box.sample(&mut rng);
        for s in 0..n {
            for to in 0..n {
                let pairs = [
                    (&model.trans_lower[s][to], &relax.trans_lower[s][to], "lower", false),
                    (&relax.trans_upper[s][to], &model.trans_upper[s][to], "upper", true),
                ];
                for (small, large, which, overlay_first) in pairs {
                    match (small.value(&a), large.value(&a)) {
                        (Ok(x), Ok(y)) => {
                            if x > y + VAL_TOL {
                                let detail = if overlay_first {
                                    format!("overlay upper {x} exceeds base upper {y}")
                                } else {
                                    format!("base lower {x} exceeds overlay lower {y}")
                                };
                                fail(
                                    &mut violations,
                                    CheckKind::OverlayDominance,
                                    format!("{} bound {} -> {}", which, model.states[s], model.states[to]),
                                    vec![a.clone()],
                                    detail,
                                );
                            }
                        }
                        (Err(e), _) | (_, Err(e)) => fail(
                            &mut violations,
                            CheckKind::EvalFailure,
                            format!("overlay transitions {} -> {}", model.states[s], model.states[to]),
                            vec![a.clone()],
                            e.to_string(),
                        ),
                    }
                }
            }
            match (model.reward_lower[s].value(&a), relax.reward_lower[s].value(&a)) {
                (Ok(base_lo), Ok(cv_lo)) => {
                    if base_lo > cv_lo + VAL_TOL {
                        fail(
                            &mut violations,
                            CheckKind::OverlayDominance,
                            format!("rewards {}", model.states[s]),
                            vec![a.clone()],
                            format!("base lower reward {base_lo} exceeds overlay lower reward {cv_lo}"),
                        );
                    }
                }
                (Err(e), _) | (_, Err(e)) => fail(
                    &mut violations,
                    CheckKind::EvalFailure,
                    format!("overlay rewards {}", model.states[s]),
                    vec![a.clone()],
                    e.to_string(),
                ),
            }
        }
    }

    // the overlay must itself be a consistent IMDP on its own box
    for _ in 0..samples {
        let a = relax.action_box.sample(&mut rng);
        for s in 0..n {
            let mut sum_lo = 0.0;
            let mut sum_hi = 0.0;
            let mut row_ok = true;
            for to in 0..n {
                match (relax.trans_lower[s][to].value(&a), relax.trans_upper[s][to].value(&a)) {
                    (Ok(lo), Ok(hi)) => {
                        sum_lo += lo;
                        sum_hi += hi;
                        if lo < -VAL_TOL || hi > 1.0 + VAL_TOL || lo > hi + VAL_TOL {
                            fail(
                                &mut violations,
                                CheckKind::OverlayIntervalOrder,
                                format!("overlay transitions {} -> {}", model.states[s], model.states[to]),
                                vec![a.clone()],
                                format!("interval [{lo}, {hi}] violates 0 <= lower <= upper <= 1"),
                            );
                        }
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        fail(
                            &mut violations,
                            CheckKind::EvalFailure,
                            format!("overlay transitions {} -> {}", model.states[s], model.states[to]),
                            vec![a.clone()],
                            e.to_string(),
                        );
                        row_ok = false;
                    }
                }
            }
            if row_ok && (sum_lo > 1.0 + VAL_TOL || sum_hi < 1.0 - VAL_TOL) {
                fail(
                    &mut violations,
                    CheckKind::OverlayRowSum,
                    format!("overlay transitions from {}", model.states[s]),
                    vec![a.clone()],
                    format!("row sums [{sum_lo}, {sum_hi}] do not straddle 1"),
                );
            }
        }
    }

    // curvature: R_lo_cv and P_lo_cv concave, P_hi_cv convex on the overlay box
    let mut curvature = |violations: &mut Vec<Violation>,
                         rng: &mut ChaCha8Rng,
                         expr: &Expression,
                         location: String,
                         concave: bool| {
        for _ in 0..samples {
            let x = relax.action_box.sample(rng);
            let y = relax.action_box.sample(rng);
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let (fx, fy, fm) = match (expr.value(&x), expr.value(&y), expr.value(&mid)) {
                (Ok(fx), Ok(fy), Ok(fm)) => (fx, fy, fm),
                (Err(e), ..) | (_, Err(e), _) | (.., Err(e)) => {
                    violations.push(Violation {
                        check: CheckKind::EvalFailure,
                        location: location.clone(),
                        witness: vec![x, y],
                        detail: e.to_string(),
                    });
                    continue;
                }
            };
            let avg = 0.5 * (fx + fy);
            let bad = if concave { fm < avg - VAL_TOL } else { fm > avg + VAL_TOL };
            if bad {
                violations.push(Violation {
                    check: if concave { CheckKind::Concavity } else { CheckKind::Convexity },
                    location: location.clone(),
                    witness: vec![x, y],
                    detail: format!(
                        "midpoint value {fm} vs endpoint average {avg} fails the {} test",
                        if concave { "concavity" } else { "convexity" }
                    ),
                });
            }
        }
    };

    for s in 0..n {
        curvature(
            &mut violations,
            &mut rng,
            &relax.reward_lower[s],
            format!("overlay reward {}", model.states[s]),
            true,
        );
        for to in 0..n {
            curvature(
                &mut violations,
                &mut rng,
                &relax.trans_lower[s][to],
                format!("overlay lower bound {} -> {}", model.states[s], model.states[to]),
                true,
            );
            curvature(
                &mut violations,
                &mut rng,
                &relax.trans_upper[s][to],
                format!("overlay upper bound {} -> {}", model.states[s], model.states[to]),
                false,
            );
        }
    }

    ValidationReport { samples, seed, violations }
}

/// Map from state name to a per-state quantity, in model state order.
pub fn named<T: Clone>(states: &[String], values: &[T]) -> BTreeMap<String, T> {
    states.iter().cloned().zip(values.iter().cloned()).collect()
}
