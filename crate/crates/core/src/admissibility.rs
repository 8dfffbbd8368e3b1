//! The admissibility certificate Γ.
//!
//! A certificate is computed extensionally from a transition and the
//! (state, memory) pair it is applied to. Each failing clause is reported;
//! an inadmissible transition always carries infinite cost.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::protected::{evaluate_core, protected_equivalent_under, ProtectedCore};
use crate::symbolic::{Theory, FINITE_SYMBOLIC_COST};
use crate::system::{
    Cost, EvaluatorKind, EvaluatorSpec, MemoryMap, MemorySpec, MemoryState, Regime, RegimeGraph, RegimeId,
    RegimeSystem, StateMap, Transition,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostMode {
    /// Use the arrow's structural cost.
    Declared,
    /// `c0 · ‖μ(target) − μ(source)‖²`.
    AnchorShift { c0: f64 },
    /// Finite iff admissible.
    EntailmentGate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityConfig {
    pub cost_mode: CostMode,
}

impl AdmissibilityConfig {
    pub fn new(cost_mode: CostMode) -> Result<Self> {
        if let CostMode::AnchorShift { c0 } = cost_mode {
            if !(c0 > 0.0 && c0.is_finite()) {
                return Err(Error::InvalidInput(format!("anchor-shift scale {c0} must be positive")));
            }
        }
        Ok(Self { cost_mode })
    }

    pub fn declared() -> Self {
        Self {
            cost_mode: CostMode::Declared,
        }
    }
}

/// One clause of the certificate definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    IllTyped,
    TransportUnrealizable,
    EvaluatorIncompatible,
    ProtectedViolated,
    ComparisonUndefined,
    CompositionIneligible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub clause: FailureReason,
    /// Segment index within a chain, when certified as part of one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    pub detail: String,
}

impl Failure {
    pub fn new(clause: FailureReason, detail: impl Into<String>) -> Self {
        Self {
            clause,
            segment: None,
            detail: detail.into(),
        }
    }

    fn at(mut self, segment: usize) -> Self {
        self.segment = Some(segment);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub admissible: bool,
    pub cost: Cost,
    pub reasons: Vec<Failure>,
}

impl Certificate {
    pub fn admitted(cost: Cost) -> Self {
        Self {
            admissible: true,
            cost,
            reasons: Vec::new(),
        }
    }

    /// Inadmissible certificate; `reasons` must be nonempty.
    pub fn rejected(reasons: Vec<Failure>) -> Self {
        debug_assert!(!reasons.is_empty());
        Self {
            admissible: false,
            cost: Cost::Infinite,
            reasons,
        }
    }

    fn from_reasons(reasons: Vec<Failure>, cost: Cost) -> Self {
        if reasons.is_empty() {
            Self::admitted(cost)
        } else {
            Self::rejected(reasons)
        }
    }

    pub fn has(&self, clause: FailureReason) -> bool {
        self.reasons.iter().any(|r| r.clause == clause)
    }
}

/// Applies the transition's state and memory maps.
pub fn transport(
    system: &RegimeSystem,
    t: &Transition,
    state: &[f64],
    memory: &MemoryState,
) -> Result<(Vec<f64>, MemoryState)> {
    let (s, hypothesis) = t.state_map.apply(&system.graph, &t.source, state, &memory.hypothesis)?;
    let mut m = t.memory_map.apply(&system.theories, memory)?;
    m.hypothesis = hypothesis;
    Ok((s, m))
}

fn background_for<'a>(
    system: &'a RegimeSystem,
    target: &RegimeId,
    memory: Option<&'a MemoryState>,
) -> Option<&'a Theory> {
    memory
        .and_then(|m| m.background.as_ref())
        .or_else(|| system.declared_background(target))
}

/// A certificate together with the transported pair, when transport succeeded.
pub(crate) struct Step {
    pub certificate: Certificate,
    pub transported: Option<(Vec<f64>, MemoryState)>,
}

pub(crate) fn certify_step(system: &RegimeSystem, t: &Transition, state: &[f64], memory: &MemoryState) -> Result<Step> {
    let src = system.regime(&t.source)?;
    let dst = system.regime(&t.target)?;
    let mut reasons = Vec::new();

    // (i) typing on the local carriers
    let typed = if state.len() != src.state_dim {
        reasons.push(Failure::new(
            FailureReason::IllTyped,
            format!(
                "state has dimension {}, regime `{}` expects {}",
                state.len(),
                src.id,
                src.state_dim
            ),
        ));
        false
    } else {
        match t.state_map.output_dim(&system.graph, &t.source, state.len()) {
            Ok(d) if d == dst.state_dim => true,
            Ok(d) => {
                reasons.push(Failure::new(
                    FailureReason::IllTyped,
                    format!(
                        "state map yields dimension {d}, regime `{}` expects {}",
                        dst.id, dst.state_dim
                    ),
                ));
                false
            }
            Err(e) => {
                reasons.push(Failure::new(FailureReason::IllTyped, e.to_string()));
                false
            }
        }
    };

    // (ii) realizability of the transport
    if !t.structural_cost.is_finite() {
        reasons.push(Failure::new(
            FailureReason::TransportUnrealizable,
            "arrow lies outside the finite-cost subgraph",
        ));
    }
    let transported = if typed {
        match transport(system, t, state, memory) {
            Ok((s, m)) if s.iter().all(|x| x.is_finite()) => Some((s, m)),
            Ok(_) => {
                reasons.push(Failure::new(
                    FailureReason::TransportUnrealizable,
                    "transported state is not finite",
                ));
                None
            }
            Err(e) => {
                reasons.push(Failure::new(FailureReason::TransportUnrealizable, e.to_string()));
                None
            }
        }
    } else {
        None
    };

    // (iii) evaluator transport must be monotone
    if !t.gauge.is_monotone() {
        reasons.push(Failure::new(
            FailureReason::EvaluatorIncompatible,
            "evaluator gauge is not strictly increasing",
        ));
    }

    // (iv) protected core preserved
    let bg = background_for(system, &t.target, transported.as_ref().map(|(_, m)| m));
    if !protected_equivalent_under(src.protected(), dst.protected(), bg) {
        reasons.push(Failure::new(
            FailureReason::ProtectedViolated,
            format!("protected cores of `{}` and `{}` are not equivalent", src.id, dst.id),
        ));
    }
    if let Some((s, m)) = &transported {
        match evaluate_core(dst.protected(), s, m) {
            Ok(true) => {}
            Ok(false) => reasons.push(Failure::new(
                FailureReason::ProtectedViolated,
                format!("transported pair violates the protected core of `{}`", dst.id),
            )),
            Err(e) => reasons.push(Failure::new(FailureReason::ProtectedViolated, e.to_string())),
        }
    }

    // (v) cross-regime comparison defined
    if !t.gauge.is_defined() {
        reasons.push(Failure::new(
            FailureReason::ComparisonUndefined,
            "evaluator gauge has non-finite parameters",
        ));
    }

    // (vi) primitive arrows are always composition-eligible

    let cost = match system.admissibility.cost_mode {
        CostMode::Declared => t.structural_cost,
        CostMode::EntailmentGate => Cost::Finite(FINITE_SYMBOLIC_COST),
        CostMode::AnchorShift { c0 } => match anchor_shift(src, dst) {
            Ok(d2) => Cost::Finite(c0 * d2),
            Err(e) => {
                reasons.push(Failure::new(FailureReason::ComparisonUndefined, e.to_string()));
                Cost::Infinite
            }
        },
    };

    let certificate = Certificate::from_reasons(reasons, cost);
    Ok(Step {
        certificate,
        transported,
    })
}

fn anchor_shift(src: &Regime, dst: &Regime) -> Result<f64> {
    linalg::dist_sq(&dst.semantic_anchor()?, &src.semantic_anchor()?)
}

/// Certifies one transition applied to `(state, memory)`.
pub fn certify(system: &RegimeSystem, t: &Transition, state: &[f64], memory: &MemoryState) -> Result<Certificate> {
    Ok(certify_step(system, t, state, memory)?.certificate)
}

/// Per-segment outcome of a chain certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub certificate: Certificate,
    pub segments: Vec<Certificate>,
    /// Pair after each successfully transported segment.
    pub states: Vec<(Vec<f64>, MemoryState)>,
}

/// Certifies a composable path segment by segment on the evolving pair.
pub fn chain_certify(
    system: &RegimeSystem,
    path: &[Transition],
    state: &[f64],
    memory: &MemoryState,
) -> Result<Certificate> {
    Ok(chain_certify_trace(system, path, state, memory)?.certificate)
}

pub fn chain_certify_trace(
    system: &RegimeSystem,
    path: &[Transition],
    state: &[f64],
    memory: &MemoryState,
) -> Result<ChainTrace> {
    for w in path.windows(2) {
        if w[0].target != w[1].source {
            return Err(Error::NonComposable {
                first: w[0].id.to_string(),
                end: w[0].target.to_string(),
                second: w[1].id.to_string(),
                start: w[1].source.to_string(),
            });
        }
    }
    let Some(first) = path.first() else {
        return Ok(ChainTrace {
            certificate: Certificate::admitted(Cost::ZERO),
            segments: Vec::new(),
            states: Vec::new(),
        });
    };
    let origin: &ProtectedCore = system.regime(&first.source)?.protected();

    let mut reasons = Vec::new();
    let mut cost = Cost::ZERO;
    let mut segments = Vec::with_capacity(path.len());
    let mut states = Vec::with_capacity(path.len());
    let mut current = (state.to_vec(), memory.clone());
    for (k, t) in path.iter().enumerate() {
        let step = certify_step(system, t, &current.0, &current.1)?;
        reasons.extend(step.certificate.reasons.iter().cloned().map(|r| r.at(k)));
        cost = cost + step.certificate.cost;
        segments.push(step.certificate);

        let dst = system.regime(&t.target)?;
        let bg = background_for(system, &t.target, step.transported.as_ref().map(|(_, m)| m));
        if !protected_equivalent_under(origin, dst.protected(), bg) {
            reasons.push(
                Failure::new(
                    FailureReason::CompositionIneligible,
                    format!("protected core of `{}` is not equivalent to the chain origin's", dst.id),
                )
                .at(k),
            );
        }

        match step.transported {
            Some(next) => {
                states.push(next.clone());
                current = next;
            }
            None => {
                if k + 1 < path.len() {
                    reasons.push(
                        Failure::new(
                            FailureReason::TransportUnrealizable,
                            "segments after an untransportable segment were not evaluated",
                        )
                        .at(k + 1),
                    );
                }
                break;
            }
        }
    }
    Ok(ChainTrace {
        certificate: Certificate::from_reasons(reasons, cost),
        segments,
        states,
    })
}

/// Bounds on the probability that every transition in a chain certifies,
/// given per-transition conditional failure probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacBound {
    /// `∏(1 − δ_k)`.
    pub product: f64,
    /// `max(0, 1 − Σδ_k)`.
    pub union: f64,
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    match deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        Some(d) => Err(Error::OutOfRangeDelta(*d)),
        None => Ok(()),
    }
}

pub fn pac_chain_bound(deltas: &[f64]) -> Result<PacBound> {
    check_deltas(deltas)?;
    let product = deltas.iter().map(|d| 1.0 - d).product();
    let union = (1.0 - deltas.iter().sum::<f64>()).max(0.0);
    Ok(PacBound { product, union })
}

/// Fraction of `trials` simulated chains in which every transition
/// certifies, transition `k` succeeding with probability `1 − δ_k`.
///
/// Trial `i` draws from its own ChaCha stream, so the result depends only
/// on `seed` and not on evaluation order.
pub fn simulate_pac_chain(deltas: &[f64], trials: usize, seed: u64) -> Result<f64> {
    check_deltas(deltas)?;
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    let successes = (0..trials)
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            deltas.iter().all(|d| rng.gen::<f64>() >= *d)
        })
        .count();
    Ok(successes as f64 / trials as f64)
}

/// A continual-learning update candidate, summarized by the retained
/// competence it leaves behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateUpdate {
    pub label: String,
    pub retained_competence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionDemo {
    pub proxy_gain: f64,
    /// New-regime proxy score after each candidate (identical by construction).
    pub proxy_after: (f64, f64),
    pub a: Certificate,
    pub b: Certificate,
}

pub const RETENTION_METRIC: &str = "retained_competence";

/// Two updates with the same proxy gain, gated by a retained-competence floor.
pub fn retention_gate_demo(
    proxy_gain: f64,
    candidate_a: &CandidateUpdate,
    candidate_b: &CandidateUpdate,
    floor: f64,
) -> Result<RetentionDemo> {
    let regime = |id: &str| {
        Regime::new(
            id,
            1,
            MemorySpec::RetainedCompetence { floor },
            EvaluatorSpec {
                kind: EvaluatorKind::ProxyScore {
                    name: "new_regime_score".into(),
                },
                protected: ProtectedCore::RetentionFloor {
                    metric: RETENTION_METRIC.into(),
                    floor,
                },
            },
        )
    };
    let graph = RegimeGraph::new()
        .add_regime(regime("previous"))?
        .add_regime(regime("current"))?;
    let system = RegimeSystem::new("retention gate", graph, AdmissibilityConfig::declared());

    let arrow = |c: &CandidateUpdate| {
        Transition::identity(c.label.clone(), RegimeId::new("previous"), RegimeId::new("current"))
            .with_state_map(StateMap::Linear {
                a: Matrix::identity(1),
                b: vec![proxy_gain],
            })
            .with_memory_map(MemoryMap::SetMetrics {
                metrics: BTreeMap::from([(RETENTION_METRIC.to_string(), c.retained_competence)]),
            })
    };
    let start = MemoryState::default().with_metric(RETENTION_METRIC, 1.0);
    let step_a = certify_step(&system, &arrow(candidate_a), &[0.0], &start)?;
    let step_b = certify_step(&system, &arrow(candidate_b), &[0.0], &start)?;
    let proxy = |s: &Step| s.transported.as_ref().map_or(f64::NAN, |(x, _)| x[0]);
    Ok(RetentionDemo {
        proxy_gain,
        proxy_after: (proxy(&step_a), proxy(&step_b)),
        a: step_a.certificate,
        b: step_b.certificate,
    })
}
