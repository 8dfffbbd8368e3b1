//! Protected evaluative cores and protected equivalence.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::symbolic::{self, Atom, Goal, Theory};
use crate::system::MemoryState;

/// Absolute tolerance for comparing scalar core parameters.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtectedCore {
    /// Holds iff `‖s − anchor‖ ≤ radius`.
    ScalarFloor { anchor: Vec<f64>, radius: f64 },
    /// Holds iff the named memory metric is at least `floor`.
    RetentionFloor { metric: String, floor: f64 },
    /// Holds iff hypothesis ∪ background ⊨ goal.
    LogicalCore { goal: Goal },
    /// The core is the whole evaluator; there is no separate gate.
    EvaluatorItself,
}

impl ProtectedCore {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProtectedCore::ScalarFloor { anchor, radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidInput(format!("radius {radius} must be positive")));
                }
                if anchor.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidInput("anchor must be finite".into()));
                }
            }
            ProtectedCore::RetentionFloor { floor, .. } if !floor.is_finite() => {
                return Err(Error::InvalidInput("retention floor must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether this core acts as a hard admissibility gate.
    pub fn is_gate(&self) -> bool {
        !matches!(self, ProtectedCore::EvaluatorItself)
    }
}

/// Canonical form of a core: variant plus normalized parameters.
///
/// Equal classes imply [`protected_equivalent`]; the converse holds for
/// cores whose parameters agree exactly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtectedClass {
    ScalarFloor { anchor: Vec<u64>, radius: u64 },
    RetentionFloor { metric: String, floor: u64 },
    LogicalCore { goal: BTreeSet<Atom> },
    EvaluatorItself,
}

fn canonical_bits(x: f64) -> u64 {
    // −0.0 and 0.0 share a class.
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

impl From<&ProtectedCore> for ProtectedClass {
    fn from(core: &ProtectedCore) -> Self {
        match core {
            ProtectedCore::ScalarFloor { anchor, radius } => ProtectedClass::ScalarFloor {
                anchor: anchor.iter().copied().map(canonical_bits).collect(),
                radius: canonical_bits(*radius),
            },
            ProtectedCore::RetentionFloor { metric, floor } => ProtectedClass::RetentionFloor {
                metric: metric.clone(),
                floor: canonical_bits(*floor),
            },
            ProtectedCore::LogicalCore { goal } => ProtectedClass::LogicalCore {
                goal: goal.atoms().clone(),
            },
            ProtectedCore::EvaluatorItself => ProtectedClass::EvaluatorItself,
        }
    }
}

/// Evaluates the protected predicate on a (state, memory) pair.
pub fn evaluate_core(core: &ProtectedCore, state: &[f64], memory: &MemoryState) -> Result<bool> {
    match core {
        ProtectedCore::ScalarFloor { anchor, radius } => {
            let d2 = linalg::dist_sq(state, anchor).map_err(|_| Error::DimensionMismatch {
                expected: anchor.len(),
                found: state.len(),
            })?;
            Ok(d2.sqrt() <= *radius)
        }
        ProtectedCore::RetentionFloor { metric, floor } => memory
            .metrics
            .get(metric)
            .map(|v| v >= floor)
            .ok_or_else(|| Error::MissingMemoryField(metric.clone())),
        ProtectedCore::LogicalCore { goal } => {
            let background = memory
                .background
                .as_ref()
                .ok_or_else(|| Error::MissingMemoryField("background".into()))?;
            Ok(symbolic::entails(&memory.hypothesis.union(background), goal))
        }
        ProtectedCore::EvaluatorItself => Ok(true),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQUIVALENCE_TOLERANCE
}

/// Protected equivalence without a background theory; logical cores are
/// equivalent only when their goals coincide.
pub fn protected_equivalent(a: &ProtectedCore, b: &ProtectedCore) -> bool {
    protected_equivalent_under(a, b, None)
}

/// Protected equivalence; logical goals are compared by mutual entailment
/// under the shared `background`.
pub fn protected_equivalent_under(a: &ProtectedCore, b: &ProtectedCore, background: Option<&Theory>) -> bool {
    use ProtectedCore::*;
    match (a, b) {
        (ScalarFloor { anchor: a1, radius: r1 }, ScalarFloor { anchor: a2, radius: r2 }) => {
            a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| close(*x, *y)) && close(*r1, *r2)
        }
        (RetentionFloor { metric: m1, floor: f1 }, RetentionFloor { metric: m2, floor: f2 }) => {
            m1 == m2 && close(*f1, *f2)
        }
        (LogicalCore { goal: g1 }, LogicalCore { goal: g2 }) => {
            if g1 == g2 {
                return true;
            }
            let empty = Theory::new();
            let bg = background.unwrap_or(&empty);
            symbolic::entails(&bg.union(&g1.as_facts()), g2) && symbolic::entails(&bg.union(&g2.as_facts()), g1)
        }
        (EvaluatorItself, EvaluatorItself) => true,
        _ => false,
    }
}
