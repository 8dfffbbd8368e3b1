//! TOML scenario files.
//!
//! ```toml
//! [system]
//! label = "two-regime witness"
//! horizon = 40                  # positive number of steps
//! seed = 7                      # recorded in the report
//! initial_regime = "a"
//! initial_state = [2.0, 0.0]
//! cost_mode = { kind = "anchor_shift", c0 = 3.0 }   # or "declared" (default), "entailment_gate"
//!
//! [system.initial_memory]       # optional
//! metrics = { retained_competence = 1.0 }
//! hypothesis = "-> p"
//!
//! [system.theories]             # named background theories
//! base = "p -> q"
//!
//! [[regimes]]
//! id = "a"
//! state_dim = 2
//! memory = { kind = "inert" }   # default; or retained_competence / background_theory
//! evaluator = { kind = "quadratic_loss", x = [[1.0, 0.0], [0.0, 1.0]], y = [0.0, 0.0] }
//! protected = { kind = "scalar_floor", anchor = [0.0, 0.0], radius = 10.0 }
//! contraction = 0.5             # or `update = { kind = "gradient_step", eta = 0.1 }`
//!
//! [[arrows]]
//! id = "ab"
//! source = "a"
//! target = "b"
//! cost = 0.0                    # or "infinite"; state_map, memory_map, gauge default to identity
//!
//! [[schedule]]
//! step = 10
//! arrow = "ab"
//!
//! [drift]                       # optional
//! alpha = 0.25
//! delta = 0.0
//! beta = 1.0
//! ```
//!
//! Every step applies the current regime's update. At a scheduled step the
//! updated state is then transported through the named arrow.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admissibility::{AdmissibilityConfig, CostMode};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::protected::ProtectedCore;
use crate::stability::DriftParams;
use crate::symbolic::Theory;
use crate::system::{
    ArrowId, Cost, EvaluatorKind, EvaluatorSpec, Gauge, MemoryMap, MemorySpec, MemoryState, Regime, RegimeGraph,
    RegimeId, RegimeSystem, StateMap, Transition,
};

fn declared() -> CostMode {
    CostMode::Declared
}

fn inert() -> MemorySpec {
    MemorySpec::Inert
}

fn identity_map() -> StateMap {
    StateMap::Identity
}

fn identity_memory() -> MemoryMap {
    MemoryMap::Identity
}

fn identity_gauge() -> Gauge {
    Gauge::Identity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub label: String,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    pub initial_regime: RegimeId,
    pub initial_state: Vec<f64>,
    #[serde(default = "declared")]
    pub cost_mode: CostMode,
    #[serde(default)]
    pub initial_memory: MemoryState,
    #[serde(default)]
    pub theories: BTreeMap<String, Theory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub id: RegimeId,
    pub state_dim: usize,
    #[serde(default)]
    pub obs_dim: usize,
    #[serde(default)]
    pub act_dim: usize,
    #[serde(default = "inert")]
    pub memory: MemorySpec,
    pub evaluator: EvaluatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected: Option<ProtectedCore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
    /// Exact contraction toward the semantic anchor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<StateMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrowSpec {
    pub id: ArrowId,
    pub source: RegimeId,
    pub target: RegimeId,
    #[serde(default = "identity_map")]
    pub state_map: StateMap,
    #[serde(default = "identity_memory")]
    pub memory_map: MemoryMap,
    #[serde(default = "identity_gauge")]
    pub gauge: Gauge,
    #[serde(default = "zero_cost")]
    pub cost: Cost,
}

fn zero_cost() -> Cost {
    Cost::ZERO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub step: usize,
    pub arrow: ArrowId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSection,
    #[serde(default)]
    pub regimes: Vec<RegimeSpec>,
    #[serde(default)]
    pub arrows: Vec<ArrowSpec>,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftParams>,
}

/// A validated scenario with its regime system assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledScenario {
    pub system: RegimeSystem,
    pub horizon: usize,
    pub seed: u64,
    pub initial_regime: RegimeId,
    pub initial_state: Vec<f64>,
    pub initial_memory: MemoryState,
    pub schedule: BTreeMap<usize, ArrowId>,
    pub drift: Option<DriftParams>,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidScenario(vec![e.to_string()]))
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Validates the scenario, listing every problem found.
    pub fn compile(&self) -> Result<CompiledScenario> {
        let mut problems = Vec::new();
        let sys = &self.system;
        if sys.horizon == 0 {
            problems.push("horizon must be positive".to_string());
        }
        let admissibility = AdmissibilityConfig::new(sys.cost_mode).unwrap_or_else(|e| {
            problems.push(e.to_string());
            AdmissibilityConfig::declared()
        });

        let mut graph = RegimeGraph::new();
        for spec in &self.regimes {
            match build_regime(spec, &sys.theories) {
                Ok(r) => match graph.add_regime(r) {
                    Ok(g) => graph = g,
                    Err(e) => problems.push(e.to_string()),
                },
                Err(msgs) => problems.extend(msgs),
            }
        }
        if self.regimes.is_empty() {
            problems.push("at least one regime is required".into());
        }
        for a in &self.arrows {
            let t = Transition {
                id: a.id.clone(),
                source: a.source.clone(),
                target: a.target.clone(),
                state_map: a.state_map.clone(),
                memory_map: a.memory_map.clone(),
                gauge: a.gauge,
                structural_cost: a.cost,
            };
            match graph.add_arrow(t) {
                Ok(g) => graph = g,
                Err(e) => problems.push(format!("arrow `{}`: {e}", a.id)),
            }
        }

        match graph.regimes.get(&sys.initial_regime) {
            None => problems.push(format!("initial regime `{}` is not declared", sys.initial_regime)),
            Some(r) if r.state_dim != sys.initial_state.len() => problems.push(format!(
                "initial state has dimension {}, regime `{}` expects {}",
                sys.initial_state.len(),
                r.id,
                r.state_dim
            )),
            Some(_) => {}
        }

        let mut schedule = BTreeMap::new();
        let mut at = sys.initial_regime.clone();
        let mut last: Option<usize> = None;
        for entry in &self.schedule {
            if last.is_some_and(|l| entry.step <= l) {
                problems.push(format!("schedule step {} is not strictly increasing", entry.step));
            }
            if entry.step >= sys.horizon {
                problems.push(format!(
                    "schedule step {} is outside horizon {}",
                    entry.step, sys.horizon
                ));
            }
            last = Some(entry.step);
            match graph.arrow(&entry.arrow) {
                Ok(t) => {
                    if t.source != at {
                        problems.push(format!(
                            "arrow `{}` at step {} leaves `{}` but the run is in `{at}`",
                            t.id, entry.step, t.source
                        ));
                    }
                    at = t.target.clone();
                }
                Err(e) => problems.push(format!("schedule step {}: {e}", entry.step)),
            }
            schedule.insert(entry.step, entry.arrow.clone());
        }

        if self.drift.is_some() {
            for r in graph.regimes.values() {
                if r.semantic_anchor().is_err() {
                    problems.push(format!(
                        "drift verification needs a semantic anchor for regime `{}`",
                        r.id
                    ));
                }
            }
        }

        if !problems.is_empty() {
            return Err(Error::InvalidScenario(problems));
        }
        let mut system = RegimeSystem::new(sys.label.clone(), graph, admissibility);
        system.theories = sys.theories.clone();
        Ok(CompiledScenario {
            system,
            horizon: sys.horizon,
            seed: sys.seed,
            initial_regime: sys.initial_regime.clone(),
            initial_state: sys.initial_state.clone(),
            initial_memory: sys.initial_memory.clone(),
            schedule,
            drift: self.drift,
        })
    }
}

fn build_regime(spec: &RegimeSpec, theories: &BTreeMap<String, Theory>) -> std::result::Result<Regime, Vec<String>> {
    let mut problems = Vec::new();
    let Some(protected) = spec.protected.clone() else {
        return Err(vec![format!(
            "regime `{}`: every regime must declare a protected core",
            spec.id
        )]);
    };
    if let MemorySpec::BackgroundTheory { theory } = &spec.memory {
        if !theories.contains_key(theory) {
            problems.push(format!("regime `{}`: unknown theory `{theory}`", spec.id));
        }
    }
    let mut r = Regime::new(
        spec.id.0.clone(),
        spec.state_dim,
        spec.memory.clone(),
        EvaluatorSpec {
            kind: spec.evaluator.clone(),
            protected,
        },
    );
    r.obs_dim = spec.obs_dim;
    r.act_dim = spec.act_dim;
    r.anchor = spec.anchor.clone();
    match (spec.contraction, &spec.update) {
        (Some(_), Some(_)) => problems.push(format!(
            "regime `{}`: set either `contraction` or `update`, not both",
            spec.id
        )),
        (Some(alpha), None) => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                problems.push(format!("regime `{}`: contraction {alpha} must lie in (0, 1]", spec.id));
            } else {
                match r.semantic_anchor() {
                    Ok(mu) => {
                        let k = (1.0 - alpha).sqrt();
                        r.update = StateMap::Linear {
                            a: Matrix::scaled_identity(spec.state_dim, k),
                            b: mu.iter().map(|m| (1.0 - k) * m).collect(),
                        };
                    }
                    Err(e) => problems.push(format!("regime `{}`: contraction needs an anchor: {e}", spec.id)),
                }
            }
        }
        (None, Some(u)) => r.update = u.clone(),
        (None, None) => {}
    }
    if problems.is_empty() {
        Ok(r)
    } else {
        Err(problems)
    }
}
