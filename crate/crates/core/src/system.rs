//! Regimes, typed transitions between them, and the regime graph.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::admissibility::AdmissibilityConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::protected::ProtectedCore;
use crate::symbolic::{Goal, Rename, Theory};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegimeId(pub String);

impl RegimeId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for RegimeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArrowId(pub String);

impl ArrowId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for ArrowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Regime-variation cost. `Infinite` marks transitions outside the
/// finite-cost subgraph and absorbs under addition.
///
/// Serializes as a number, or as the string `"infinite"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Finite(f64),
    Infinite,
}

impl Cost {
    pub const ZERO: Cost = Cost::Finite(0.0);

    pub fn is_finite(&self) -> bool {
        matches!(self, Cost::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Cost::Finite(c) => Some(*c),
            Cost::Infinite => None,
        }
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        match (self, rhs) {
            (Cost::Finite(a), Cost::Finite(b)) => Cost::Finite(a + b),
            _ => Cost::Infinite,
        }
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, Add::add)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(c) => write!(f, "{c}"),
            Cost::Infinite => f.write_str("infinite"),
        }
    }
}

impl Serialize for Cost {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cost::Finite(c) => s.serialize_f64(*c),
            Cost::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for Cost {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct CostVisitor;
        impl Visitor<'_> for CostVisitor {
            type Value = Cost;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative number or \"infinite\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Cost, E> {
                if v.is_finite() && v >= 0.0 {
                    Ok(Cost::Finite(v))
                } else {
                    Err(E::custom(format!("cost {v} must be finite and nonnegative")))
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Cost, E> {
                self.visit_f64(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Cost, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Cost, E> {
                if v.eq_ignore_ascii_case("infinite") {
                    Ok(Cost::Infinite)
                } else {
                    Err(E::custom(format!("unknown cost `{v}`")))
                }
            }
        }
        d.deserialize_any(CostVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemorySpec {
    Inert,
    RetainedCompetence { floor: f64 },
    BackgroundTheory { theory: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorKind {
    QuadraticLoss { x: Matrix, y: Vec<f64> },
    ProxyScore { name: String },
    LogicalGoal { goal: Goal },
}

impl EvaluatorKind {
    pub fn is_scalar(&self) -> bool {
        !matches!(self, EvaluatorKind::LogicalGoal { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorSpec {
    pub kind: EvaluatorKind,
    pub protected: ProtectedCore,
}

/// Runtime memory carried along a trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryState {
    /// Named scalar summaries, e.g. certified retained competence.
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background: Option<Theory>,
    /// Symbolic hypothesis for logical regimes.
    pub hypothesis: Theory,
}

impl MemoryState {
    pub fn with_metric(mut self, name: impl Into<String>, value: f64) -> Self {
        self.metrics.insert(name.into(), value);
        self
    }

    pub fn with_background(mut self, background: Theory) -> Self {
        self.background = Some(background);
        self
    }

    pub fn with_hypothesis(mut self, hypothesis: Theory) -> Self {
        self.hypothesis = hypothesis;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapStep {
    /// Regime whose local data (e.g. its loss) the map uses.
    pub regime: RegimeId,
    pub map: StateMap,
}

/// State transport τ_S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateMap {
    Identity,
    /// `s ↦ A s + b`.
    Linear {
        a: Matrix,
        b: Vec<f64>,
    },
    /// One gradient step on the quadratic loss of the regime it is applied in.
    GradientStep {
        eta: f64,
    },
    /// Leaves the numeric state alone and renames the symbolic hypothesis.
    SyntacticInclusion {
        rename: Rename,
    },
    /// Composite produced by path concatenation, applied left to right.
    Sequence {
        steps: Vec<MapStep>,
    },
}

impl StateMap {
    /// Output dimension for an input of dimension `input_dim` applied in `regime`.
    pub fn output_dim(&self, graph: &RegimeGraph, regime: &RegimeId, input_dim: usize) -> Result<usize> {
        match self {
            StateMap::Identity | StateMap::SyntacticInclusion { .. } => Ok(input_dim),
            StateMap::Linear { a, b } => {
                linalg::check_len(a.cols(), input_dim)?;
                linalg::check_len(a.rows(), b.len())?;
                Ok(a.rows())
            }
            StateMap::GradientStep { .. } => {
                let r = graph.regime(regime)?;
                match &r.evaluator.kind {
                    EvaluatorKind::QuadraticLoss { x, .. } => {
                        linalg::check_len(x.cols(), input_dim)?;
                        Ok(input_dim)
                    }
                    _ => Err(Error::InvalidInput(format!(
                        "gradient step needs a quadratic loss in regime `{regime}`"
                    ))),
                }
            }
            StateMap::Sequence { steps } => steps
                .iter()
                .try_fold(input_dim, |d, step| step.map.output_dim(graph, &step.regime, d)),
        }
    }

    /// Applies the map to the numeric state and the symbolic hypothesis.
    pub fn apply(
        &self,
        graph: &RegimeGraph,
        regime: &RegimeId,
        state: &[f64],
        hypothesis: &Theory,
    ) -> Result<(Vec<f64>, Theory)> {
        match self {
            StateMap::Identity => Ok((state.to_vec(), hypothesis.clone())),
            StateMap::Linear { a, b } => {
                linalg::check_len(a.rows(), b.len())?;
                let out = linalg::add(&a.mul_vec(state)?, b);
                Ok((out, hypothesis.clone()))
            }
            StateMap::GradientStep { eta } => {
                let r = graph.regime(regime)?;
                match &r.evaluator.kind {
                    EvaluatorKind::QuadraticLoss { x, y } => {
                        Ok((gradient_step(x, y, *eta, state)?, hypothesis.clone()))
                    }
                    _ => Err(Error::InvalidInput(format!(
                        "gradient step needs a quadratic loss in regime `{regime}`"
                    ))),
                }
            }
            StateMap::SyntacticInclusion { rename } => {
                rename.check_injective(&hypothesis.vocabulary())?;
                Ok((state.to_vec(), hypothesis.rename(rename)))
            }
            StateMap::Sequence { steps } => {
                let mut acc = (state.to_vec(), hypothesis.clone());
                for step in steps {
                    acc = step.map.apply(graph, &step.regime, &acc.0, &acc.1)?;
                }
                Ok(acc)
            }
        }
    }

    fn into_steps(self, regime: &RegimeId) -> Vec<MapStep> {
        match self {
            StateMap::Identity => Vec::new(),
            StateMap::Sequence { steps } => steps,
            other => vec![MapStep {
                regime: regime.clone(),
                map: other,
            }],
        }
    }

    /// `second ∘ first`, where `first` runs in `first_regime` and `second` in `second_regime`.
    pub fn compose(first: &StateMap, first_regime: &RegimeId, second: &StateMap, second_regime: &RegimeId) -> StateMap {
        match (first, second) {
            (StateMap::Identity, m) | (m, StateMap::Identity) if !matches!(m, StateMap::GradientStep { .. }) => {
                m.clone()
            }
            (StateMap::Linear { a: a1, b: b1 }, StateMap::Linear { a: a2, b: b2 }) => {
                match (a2.matmul(a1), a2.mul_vec(b1)) {
                    (Ok(a), Ok(ab)) if ab.len() == b2.len() => StateMap::Linear {
                        a,
                        b: linalg::add(&ab, b2),
                    },
                    _ => Self::sequence(first, first_regime, second, second_regime),
                }
            }
            (StateMap::SyntacticInclusion { rename: r1 }, StateMap::SyntacticInclusion { rename: r2 }) => {
                StateMap::SyntacticInclusion { rename: r1.then(r2) }
            }
            _ => Self::sequence(first, first_regime, second, second_regime),
        }
    }

    fn sequence(first: &StateMap, first_regime: &RegimeId, second: &StateMap, second_regime: &RegimeId) -> StateMap {
        let mut steps = first.clone().into_steps(first_regime);
        steps.extend(second.clone().into_steps(second_regime));
        match steps.len() {
            0 => StateMap::Identity,
            _ => StateMap::Sequence { steps },
        }
    }
}

/// `w − η Xᵀ(Xw − y)`.
pub fn gradient_step(x: &Matrix, y: &[f64], eta: f64, w: &[f64]) -> Result<Vec<f64>> {
    linalg::check_len(x.rows(), y.len())?;
    let residual = linalg::sub(&x.mul_vec(w)?, y);
    let grad = x.tr_mul_vec(&residual)?;
    Ok(w.iter().zip(&grad).map(|(wi, gi)| wi - eta * gi).collect())
}

/// Memory transport τ_M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryMap {
    Identity,
    /// Renames the background theory.
    Rename {
        rename: Rename,
    },
    /// Switches memory semantics; `BackgroundTheory` loads the named theory.
    Replace {
        memory: MemorySpec,
    },
    /// Records metric values measured after the update.
    SetMetrics {
        metrics: BTreeMap<String, f64>,
    },
    Sequence {
        steps: Vec<MemoryMap>,
    },
}

impl MemoryMap {
    pub fn apply(&self, theories: &BTreeMap<String, Theory>, memory: &MemoryState) -> Result<MemoryState> {
        let mut out = memory.clone();
        match self {
            MemoryMap::Identity => {}
            MemoryMap::Rename { rename } => {
                if let Some(bg) = &memory.background {
                    rename.check_injective(&bg.vocabulary())?;
                    out.background = Some(bg.rename(rename));
                }
            }
            MemoryMap::Replace { memory: spec } => match spec {
                MemorySpec::Inert => {
                    out.metrics.clear();
                    out.background = None;
                }
                MemorySpec::RetainedCompetence { .. } => out.background = None,
                MemorySpec::BackgroundTheory { theory } => {
                    let t = theories
                        .get(theory)
                        .ok_or_else(|| Error::MissingMemoryField(format!("theory `{theory}`")))?;
                    out.background = Some(t.clone());
                }
            },
            MemoryMap::SetMetrics { metrics } => {
                out.metrics.extend(metrics.iter().map(|(k, v)| (k.clone(), *v)));
            }
            MemoryMap::Sequence { steps } => {
                for step in steps {
                    out = step.apply(theories, &out)?;
                }
            }
        }
        Ok(out)
    }

    pub fn compose(first: &MemoryMap, second: &MemoryMap) -> MemoryMap {
        match (first, second) {
            (MemoryMap::Identity, m) | (m, MemoryMap::Identity) => m.clone(),
            (MemoryMap::Rename { rename: r1 }, MemoryMap::Rename { rename: r2 }) => {
                MemoryMap::Rename { rename: r1.then(r2) }
            }
            _ => {
                let mut steps = Vec::new();
                for m in [first, second] {
                    match m {
                        MemoryMap::Sequence { steps: s } => steps.extend(s.iter().cloned()),
                        other => steps.push(other.clone()),
                    }
                }
                MemoryMap::Sequence { steps }
            }
        }
    }
}

/// Evaluator gauge τ_Y, a monotone transport of comparison values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gauge {
    Identity,
    Affine { scale: f64, shift: f64 },
}

impl Gauge {
    pub fn apply(&self, v: f64) -> f64 {
        match self {
            Gauge::Identity => v,
            Gauge::Affine { scale, shift } => scale * v + shift,
        }
    }

    pub fn is_defined(&self) -> bool {
        match self {
            Gauge::Identity => true,
            Gauge::Affine { scale, shift } => scale.is_finite() && shift.is_finite(),
        }
    }

    pub fn is_monotone(&self) -> bool {
        match self {
            Gauge::Identity => true,
            Gauge::Affine { scale, .. } => *scale > 0.0,
        }
    }

    /// `second ∘ first`.
    pub fn compose(first: Gauge, second: Gauge) -> Gauge {
        match (first, second) {
            (Gauge::Identity, g) | (g, Gauge::Identity) => g,
            (Gauge::Affine { scale: a1, shift: b1 }, Gauge::Affine { scale: a2, shift: b2 }) => Gauge::Affine {
                scale: a2 * a1,
                shift: a2 * b1 + b2,
            },
        }
    }
}

/// A typed arrow τ: source ⇝ target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub id: ArrowId,
    pub source: RegimeId,
    pub target: RegimeId,
    pub state_map: StateMap,
    pub memory_map: MemoryMap,
    pub gauge: Gauge,
    pub structural_cost: Cost,
}

impl Transition {
    pub fn identity(id: impl Into<String>, source: RegimeId, target: RegimeId) -> Self {
        Self {
            id: ArrowId::new(id),
            source,
            target,
            state_map: StateMap::Identity,
            memory_map: MemoryMap::Identity,
            gauge: Gauge::Identity,
            structural_cost: Cost::ZERO,
        }
    }

    pub fn with_state_map(mut self, m: StateMap) -> Self {
        self.state_map = m;
        self
    }

    pub fn with_memory_map(mut self, m: MemoryMap) -> Self {
        self.memory_map = m;
        self
    }

    pub fn with_gauge(mut self, g: Gauge) -> Self {
        self.gauge = g;
        self
    }

    pub fn with_cost(mut self, c: Cost) -> Self {
        self.structural_cost = c;
        self
    }

    pub fn is_identity(&self) -> bool {
        self.source == self.target
            && self.state_map == StateMap::Identity
            && self.memory_map == MemoryMap::Identity
            && self.gauge == Gauge::Identity
    }
}

/// Path-level concatenation `t2 ∘ t1`.
pub fn concat_path(t1: &Transition, t2: &Transition) -> Result<Transition> {
    if t1.target != t2.source {
        return Err(Error::NonComposable {
            first: t1.id.to_string(),
            end: t1.target.to_string(),
            second: t2.id.to_string(),
            start: t2.source.to_string(),
        });
    }
    Ok(Transition {
        id: ArrowId(format!("{};{}", t1.id, t2.id)),
        source: t1.source.clone(),
        target: t2.target.clone(),
        state_map: StateMap::compose(&t1.state_map, &t1.source, &t2.state_map, &t2.source),
        memory_map: MemoryMap::compose(&t1.memory_map, &t2.memory_map),
        gauge: Gauge::compose(t1.gauge, t2.gauge),
        structural_cost: t1.structural_cost + t2.structural_cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub id: RegimeId,
    pub state_dim: usize,
    #[serde(default)]
    pub obs_dim: usize,
    #[serde(default)]
    pub act_dim: usize,
    pub memory: MemorySpec,
    pub evaluator: EvaluatorSpec,
    /// Explicit semantic anchor μ(r); otherwise derived from the evaluator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
    /// Local update applied on steps without a regime switch.
    #[serde(default = "identity_map")]
    pub update: StateMap,
}

fn identity_map() -> StateMap {
    StateMap::Identity
}

impl Regime {
    pub fn new(id: impl Into<String>, state_dim: usize, memory: MemorySpec, evaluator: EvaluatorSpec) -> Self {
        Self {
            id: RegimeId::new(id),
            state_dim,
            obs_dim: 0,
            act_dim: 0,
            memory,
            evaluator,
            anchor: None,
            update: StateMap::Identity,
        }
    }

    pub fn with_anchor(mut self, anchor: Vec<f64>) -> Self {
        self.anchor = Some(anchor);
        self
    }

    pub fn with_update(mut self, update: StateMap) -> Self {
        self.update = update;
        self
    }

    pub fn protected(&self) -> &ProtectedCore {
        &self.evaluator.protected
    }

    /// Semantic anchor: explicit anchor, else the least-squares minimizer of
    /// a quadratic loss, else the centre of a scalar floor.
    pub fn semantic_anchor(&self) -> Result<Vec<f64>> {
        if let Some(a) = &self.anchor {
            return Ok(a.clone());
        }
        if let EvaluatorKind::QuadraticLoss { x, y } = &self.evaluator.kind {
            return linalg::least_squares(x, y);
        }
        if let ProtectedCore::ScalarFloor { anchor, .. } = &self.evaluator.protected {
            return Ok(anchor.clone());
        }
        Err(Error::InvalidInput(format!(
            "regime `{}` has no semantic anchor",
            self.id
        )))
    }

    /// Checks carrier typing of the evaluator, protected core and memory.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidRegime {
            id: self.id.to_string(),
            reason,
        };
        match &self.memory {
            MemorySpec::RetainedCompetence { floor } if !floor.is_finite() => {
                return Err(bad("retained-competence floor must be finite".into()))
            }
            _ => {}
        }
        if let EvaluatorKind::QuadraticLoss { x, y } = &self.evaluator.kind {
            if x.cols() != self.state_dim || x.rows() != y.len() {
                return Err(bad(format!(
                    "quadratic loss is {}x{} with {} targets, state_dim is {}",
                    x.rows(),
                    x.cols(),
                    y.len(),
                    self.state_dim
                )));
            }
        }
        self.evaluator.protected.validate().map_err(|e| bad(e.to_string()))?;
        match &self.evaluator.protected {
            ProtectedCore::ScalarFloor { anchor, .. } if anchor.len() != self.state_dim => {
                return Err(bad(format!(
                    "scalar floor anchor has dimension {}, state_dim is {}",
                    anchor.len(),
                    self.state_dim
                )))
            }
            ProtectedCore::RetentionFloor { .. } if !matches!(self.memory, MemorySpec::RetainedCompetence { .. }) => {
                return Err(bad("retention floor needs retained-competence memory".into()))
            }
            ProtectedCore::LogicalCore { .. } if !matches!(self.memory, MemorySpec::BackgroundTheory { .. }) => {
                return Err(bad("logical core needs background-theory memory".into()))
            }
            _ => {}
        }
        if let Some(a) = &self.anchor {
            if a.len() != self.state_dim {
                return Err(bad(format!("anchor has dimension {}", a.len())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimeGraph {
    pub regimes: BTreeMap<RegimeId, Regime>,
    pub arrows: Vec<Transition>,
}

impl RegimeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn regime(&self, id: &RegimeId) -> Result<&Regime> {
        self.regimes.get(id).ok_or_else(|| Error::UnknownRegime(id.to_string()))
    }

    pub fn arrow(&self, id: &ArrowId) -> Result<&Transition> {
        self.arrows
            .iter()
            .find(|t| &t.id == id)
            .ok_or_else(|| Error::UnknownArrow(id.to_string()))
    }

    /// Returns a new graph containing `r`.
    pub fn add_regime(&self, r: Regime) -> Result<RegimeGraph> {
        if self.regimes.contains_key(&r.id) {
            return Err(Error::DuplicateRegimeId(r.id.to_string()));
        }
        r.validate()?;
        let mut out = self.clone();
        out.regimes.insert(r.id.clone(), r);
        Ok(out)
    }

    /// Returns a new graph containing `t`; both endpoints must exist.
    pub fn add_arrow(&self, t: Transition) -> Result<RegimeGraph> {
        self.regime(&t.source)?;
        self.regime(&t.target)?;
        if self.arrows.iter().any(|a| a.id == t.id) {
            return Err(Error::InvalidInput(format!("arrow `{}` is already present", t.id)));
        }
        let mut out = self.clone();
        out.arrows.push(t);
        Ok(out)
    }

    pub fn finite_cost_subgraph(&self) -> RegimeGraph {
        RegimeGraph {
            regimes: self.regimes.clone(),
            arrows: self
                .arrows
                .iter()
                .filter(|t| t.structural_cost.is_finite())
                .cloned()
                .collect(),
        }
    }
}

/// The expanded learning object: regime graph, admissibility configuration,
/// and the named theories background-theory memories refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSystem {
    pub label: String,
    pub graph: RegimeGraph,
    pub admissibility: AdmissibilityConfig,
    #[serde(default)]
    pub theories: BTreeMap<String, Theory>,
}

impl RegimeSystem {
    pub fn new(label: impl Into<String>, graph: RegimeGraph, admissibility: AdmissibilityConfig) -> Self {
        Self {
            label: label.into(),
            graph,
            admissibility,
            theories: BTreeMap::new(),
        }
    }

    pub fn with_theory(mut self, name: impl Into<String>, theory: Theory) -> Self {
        self.theories.insert(name.into(), theory);
        self
    }

    pub fn regime(&self, id: &RegimeId) -> Result<&Regime> {
        self.graph.regime(id)
    }

    /// Background theory a regime declares, if any.
    pub fn declared_background(&self, id: &RegimeId) -> Option<&Theory> {
        match &self.graph.regimes.get(id)?.memory {
            MemorySpec::BackgroundTheory { theory } => self.theories.get(theory),
            _ => None,
        }
    }
}
