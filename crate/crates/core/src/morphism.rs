//! Structure-preserving maps between regime systems and the one-regime
//! Mitchell collapse.
//!
//! Protected-equivalence preservation is decided exactly over the finite
//! regime set. Admissibility preservation quantifies over continuous state
//! spaces and is checked on samples; reports say which kind of evidence
//! backs each verdict.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admissibility::{certify, chain_certify_trace, AdmissibilityConfig, Certificate, CostMode, Failure};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::protected::{protected_equivalent_under, ProtectedCore};
use crate::system::{
    ArrowId, EvaluatorSpec, MemoryMap, MemorySpec, MemoryState, Regime, RegimeGraph, RegimeId, RegimeSystem, Transition,
};

/// Per-regime state carrier map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CarrierMap {
    Identity,
    /// `s ↦ A s + b`.
    Linear {
        a: Matrix,
        b: Vec<f64>,
    },
}

impl CarrierMap {
    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        match self {
            CarrierMap::Identity => Ok(s.to_vec()),
            CarrierMap::Linear { a, b } => {
                linalg::check_len(a.rows(), b.len())?;
                Ok(linalg::add(&a.mul_vec(s)?, b))
            }
        }
    }

    /// `second ∘ first`.
    pub fn compose(first: &CarrierMap, second: &CarrierMap) -> Result<CarrierMap> {
        Ok(match (first, second) {
            (CarrierMap::Identity, m) | (m, CarrierMap::Identity) => m.clone(),
            (CarrierMap::Linear { a: a1, b: b1 }, CarrierMap::Linear { a: a2, b: b2 }) => CarrierMap::Linear {
                a: a2.matmul(a1)?,
                b: linalg::add(&a2.mul_vec(b1)?, b2),
            },
        })
    }
}

/// A morphism `F = (F_R, F_S, F_M, F_T)`. Missing state or memory maps are
/// the identity; regime and transition maps must be total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmlMorphism {
    pub regime_map: BTreeMap<RegimeId, RegimeId>,
    #[serde(default)]
    pub state_maps: BTreeMap<RegimeId, CarrierMap>,
    #[serde(default)]
    pub memory_maps: BTreeMap<RegimeId, MemoryMap>,
    pub transition_map: BTreeMap<ArrowId, ArrowId>,
    /// Claimed protected-faithfulness.
    #[serde(default)]
    pub faithful: bool,
}

impl GmlMorphism {
    pub fn identity(system: &RegimeSystem) -> Self {
        Self {
            regime_map: system.graph.regimes.keys().map(|r| (r.clone(), r.clone())).collect(),
            state_maps: BTreeMap::new(),
            memory_maps: BTreeMap::new(),
            transition_map: system
                .graph
                .arrows
                .iter()
                .map(|t| (t.id.clone(), t.id.clone()))
                .collect(),
            faithful: true,
        }
    }

    pub fn map_regime(&self, r: &RegimeId) -> Result<&RegimeId> {
        self.regime_map
            .get(r)
            .ok_or_else(|| Error::PartialMap(format!("regime `{r}` has no image")))
    }

    pub fn map_arrow_id(&self, a: &ArrowId) -> Result<&ArrowId> {
        self.transition_map
            .get(a)
            .ok_or_else(|| Error::PartialMap(format!("arrow `{a}` has no image")))
    }

    pub fn map_state(&self, r: &RegimeId, s: &[f64]) -> Result<Vec<f64>> {
        self.state_maps.get(r).map_or_else(|| Ok(s.to_vec()), |m| m.apply(s))
    }

    pub fn map_memory(&self, dst: &RegimeSystem, r: &RegimeId, m: &MemoryState) -> Result<MemoryState> {
        self.memory_maps
            .get(r)
            .map_or_else(|| Ok(m.clone()), |f| f.apply(&dst.theories, m))
    }

    /// Image of a source arrow in `dst`, checking endpoint compatibility.
    pub fn map_arrow<'a>(&self, dst: &'a RegimeSystem, t: &Transition) -> Result<&'a Transition> {
        let image = dst.graph.arrow(self.map_arrow_id(&t.id)?)?;
        let (src, tgt) = (self.map_regime(&t.source)?, self.map_regime(&t.target)?);
        if &image.source != src || &image.target != tgt {
            return Err(Error::InvalidInput(format!(
                "arrow `{}` maps to `{}` ({} ⇝ {}), expected {src} ⇝ {tgt}",
                t.id, image.id, image.source, image.target
            )));
        }
        Ok(image)
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &GmlMorphism) -> Result<GmlMorphism> {
        let mut regime_map = BTreeMap::new();
        let mut state_maps = BTreeMap::new();
        let mut memory_maps = BTreeMap::new();
        for (r, mid) in &self.regime_map {
            regime_map.insert(r.clone(), other.map_regime(mid)?.clone());
            let s1 = self.state_maps.get(r).cloned().unwrap_or(CarrierMap::Identity);
            let s2 = other.state_maps.get(mid).cloned().unwrap_or(CarrierMap::Identity);
            let s = CarrierMap::compose(&s1, &s2)?;
            if s != CarrierMap::Identity {
                state_maps.insert(r.clone(), s);
            }
            let m1 = self.memory_maps.get(r).cloned().unwrap_or(MemoryMap::Identity);
            let m2 = other.memory_maps.get(mid).cloned().unwrap_or(MemoryMap::Identity);
            let m = MemoryMap::compose(&m1, &m2);
            if m != MemoryMap::Identity {
                memory_maps.insert(r.clone(), m);
            }
        }
        let transition_map = self
            .transition_map
            .iter()
            .map(|(a, mid)| Ok((a.clone(), other.map_arrow_id(mid)?.clone())))
            .collect::<Result<_>>()?;
        Ok(GmlMorphism {
            regime_map,
            state_maps,
            memory_maps,
            transition_map,
            faithful: self.faithful && other.faithful,
        })
    }

    fn check_total(&self, src: &RegimeSystem, dst: &RegimeSystem) -> Result<()> {
        for r in src.graph.regimes.keys() {
            dst.regime(self.map_regime(r)?)?;
        }
        for t in &src.graph.arrows {
            self.map_arrow(dst, t)?;
        }
        Ok(())
    }
}

/// Generator of test pairs `(state, memory)` for a regime.
pub trait SampleSource {
    /// Samples for `regime`; `index` distinguishes regimes for seeding.
    fn samples(&self, regime: &Regime, index: u64) -> Vec<(Vec<f64>, MemoryState)>;
}

/// Uniform samples in a box around each regime's anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSampler {
    pub seed: u64,
    pub count: usize,
    pub half_width: f64,
    #[serde(default)]
    pub memory: MemoryState,
}

impl SampleSource for BoxSampler {
    fn samples(&self, regime: &Regime, index: u64) -> Vec<(Vec<f64>, MemoryState)> {
        let centre = match regime.protected() {
            ProtectedCore::ScalarFloor { anchor, .. } => anchor.clone(),
            _ => regime.semantic_anchor().unwrap_or_else(|_| vec![0.0; regime.state_dim]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        (0..self.count)
            .map(|_| {
                let s = centre
                    .iter()
                    .map(|c| c + self.half_width * (2.0 * rng.gen::<f64>() - 1.0))
                    .collect();
                (s, self.memory.clone())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub arrow: ArrowId,
    pub state: Vec<f64>,
    pub memory: MemoryState,
    pub reasons: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    VerifiedStructurally,
    SampledNoCounterexample { samples: usize },
    Refuted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphismReport {
    pub equivalence: Evidence,
    /// Source pairs that are equivalent but whose images are not.
    pub equivalence_violations: Vec<(RegimeId, RegimeId)>,
    pub admissibility: Evidence,
    pub counterexamples: Vec<Counterexample>,
}

impl MorphismReport {
    pub fn passed(&self) -> bool {
        self.equivalence_violations.is_empty() && self.counterexamples.is_empty()
    }
}

fn equivalent_in(system: &RegimeSystem, a: &RegimeId, b: &RegimeId) -> Result<bool> {
    let ra = system.regime(a)?;
    let rb = system.regime(b)?;
    let bg = system.declared_background(b).or_else(|| system.declared_background(a));
    Ok(protected_equivalent_under(ra.protected(), rb.protected(), bg))
}

/// Arrow, sampled pair, and the source and image certificates.
type SampledPair = (ArrowId, Vec<f64>, MemoryState, Certificate, Certificate);

/// Pairs `(source, image)` of certificates over all sampled arrow applications.
fn sampled_pairs(
    src: &RegimeSystem,
    dst: &RegimeSystem,
    m: &GmlMorphism,
    samples: &dyn SampleSource,
) -> Result<Vec<SampledPair>> {
    let index: BTreeMap<&RegimeId, u64> = src.graph.regimes.keys().zip(0..).collect();
    let mut out = Vec::new();
    for t in &src.graph.arrows {
        let image = m.map_arrow(dst, t)?;
        let regime = src.regime(&t.source)?;
        for (s, mem) in samples.samples(regime, index[&t.source]) {
            let src_cert = certify(src, t, &s, &mem)?;
            let dst_cert = match (m.map_state(&t.source, &s), m.map_memory(dst, &t.source, &mem)) {
                (Ok(s2), Ok(m2)) => certify(dst, image, &s2, &m2)?,
                (Err(e), _) | (_, Err(e)) => Certificate::rejected(vec![Failure::new(
                    crate::admissibility::FailureReason::IllTyped,
                    format!("carrier map failed: {e}"),
                )]),
            };
            out.push((t.id.clone(), s, mem, src_cert, dst_cert));
        }
    }
    Ok(out)
}

/// Checks that `m` preserves protected equivalence and admissibility.
pub fn check_morphism(
    src: &RegimeSystem,
    dst: &RegimeSystem,
    m: &GmlMorphism,
    samples: &dyn SampleSource,
) -> Result<MorphismReport> {
    m.check_total(src, dst)?;
    let mut equivalence_violations = Vec::new();
    for a in src.graph.regimes.keys() {
        for b in src.graph.regimes.keys() {
            if equivalent_in(src, a, b)? && !equivalent_in(dst, m.map_regime(a)?, m.map_regime(b)?)? {
                equivalence_violations.push((a.clone(), b.clone()));
            }
        }
    }
    let pairs = sampled_pairs(src, dst, m, samples)?;
    let checked = pairs.len();
    let counterexamples: Vec<Counterexample> = pairs
        .into_iter()
        .filter(|(_, _, _, sc, dc)| sc.admissible && !dc.admissible)
        .map(|(arrow, state, memory, _, dc)| Counterexample {
            arrow,
            state,
            memory,
            reasons: dc.reasons,
        })
        .collect();
    Ok(MorphismReport {
        equivalence: if equivalence_violations.is_empty() {
            Evidence::VerifiedStructurally
        } else {
            Evidence::Refuted
        },
        equivalence_violations,
        admissibility: if counterexamples.is_empty() {
            Evidence::SampledNoCounterexample { samples: checked }
        } else {
            Evidence::Refuted
        },
        counterexamples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryImage {
    /// The source path is inadmissible, so nothing is claimed about its image.
    Vacuous { source: Certificate },
    Mapped {
        path: Vec<Transition>,
        certificate: Certificate,
    },
}

impl TrajectoryImage {
    pub fn image_admissible(&self) -> Option<bool> {
        match self {
            TrajectoryImage::Vacuous { .. } => None,
            TrajectoryImage::Mapped { certificate, .. } => Some(certificate.admissible),
        }
    }
}

/// Maps a path started at `(state, memory)` and chain-certifies the image.
pub fn map_trajectory(
    src: &RegimeSystem,
    dst: &RegimeSystem,
    m: &GmlMorphism,
    path: &[Transition],
    state: &[f64],
    memory: &MemoryState,
) -> Result<TrajectoryImage> {
    let source = chain_certify_trace(src, path, state, memory)?.certificate;
    if !source.admissible {
        return Ok(TrajectoryImage::Vacuous { source });
    }
    let mapped: Vec<Transition> = path
        .iter()
        .map(|t| m.map_arrow(dst, t).cloned())
        .collect::<Result<_>>()?;
    let (s0, m0) = match path.first() {
        Some(t) => (m.map_state(&t.source, state)?, m.map_memory(dst, &t.source, memory)?),
        None => (state.to_vec(), memory.clone()),
    };
    let certificate = chain_certify_trace(dst, &mapped, &s0, &m0)?.certificate;
    Ok(TrajectoryImage::Mapped {
        path: mapped,
        certificate,
    })
}

/// Whether `m` reflects protected equivalence and admissibility on samples.
pub fn is_protected_faithful(
    src: &RegimeSystem,
    dst: &RegimeSystem,
    m: &GmlMorphism,
    samples: &dyn SampleSource,
) -> Result<bool> {
    m.check_total(src, dst)?;
    for a in src.graph.regimes.keys() {
        for b in src.graph.regimes.keys() {
            if equivalent_in(dst, m.map_regime(a)?, m.map_regime(b)?)? && !equivalent_in(src, a, b)? {
                return Ok(false);
            }
        }
    }
    Ok(sampled_pairs(src, dst, m, samples)?
        .iter()
        .all(|(_, _, _, sc, dc)| !dc.admissible || sc.admissible))
}

/// Fixed experience / task / performance triple of the one-regime image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitchellTuple {
    pub experience: String,
    pub task: String,
    /// Performance measure; its protected core is the evaluator itself.
    pub evaluator: EvaluatorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerationConditions {
    pub single_regime: bool,
    pub identity_transitions_only: bool,
    pub inert_memory: bool,
    pub single_scalar_evaluator: bool,
    pub core_is_evaluator: bool,
    pub fixed_task_and_experience: bool,
}

impl DegenerationConditions {
    pub fn all(&self) -> bool {
        self.single_regime
            && self.identity_transitions_only
            && self.inert_memory
            && self.single_scalar_evaluator
            && self.core_is_evaluator
            && self.fixed_task_and_experience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducibilityConditions {
    pub single_protected_class: bool,
    pub transitions_trivial_on_core: bool,
    pub memory_not_admissibility_relevant: bool,
    pub common_scalar_representative: bool,
    pub ordinary_comparison: bool,
}

impl ReducibilityConditions {
    pub fn all(&self) -> bool {
        self.single_protected_class
            && self.transitions_trivial_on_core
            && self.memory_not_admissibility_relevant
            && self.common_scalar_representative
            && self.ordinary_comparison
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Obstruction {
    AdmissibilityCriticalMemory,
    QuotientRestrictedComparability,
    NonAggregableProtectedCores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CollapseVerdict {
    Faithful,
    Lossy { obstructions: Vec<Obstruction> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub degeneration: DegenerationConditions,
    pub reducibility: ReducibilityConditions,
    pub verdict: CollapseVerdict,
    /// Number of protected-equivalence classes among the regimes.
    pub protected_classes: usize,
    /// One-regime image: every arrow becomes an identity loop.
    pub image: RegimeSystem,
}

/// Groups regimes into protected-equivalence classes by representative.
fn protected_classes(system: &RegimeSystem) -> Result<Vec<Vec<RegimeId>>> {
    let mut classes: Vec<Vec<RegimeId>> = Vec::new();
    for id in system.graph.regimes.keys() {
        let mut placed = false;
        for class in &mut classes {
            if equivalent_in(system, &class[0], id)? {
                class.push(id.clone());
                placed = true;
                break;
            }
        }
        if !placed {
            classes.push(vec![id.clone()]);
        }
    }
    Ok(classes)
}

fn reads_memory(core: &ProtectedCore) -> bool {
    matches!(core, ProtectedCore::RetentionFloor { .. })
}

/// Collapses the regime graph to one node and classifies the collapse.
pub fn mitchell_collapse(src: &RegimeSystem) -> Result<(MitchellTuple, CollapseReport)> {
    let regimes: Vec<&Regime> = src.graph.regimes.values().collect();
    let first = *regimes
        .first()
        .ok_or_else(|| Error::InvalidInput("system has no regimes".into()))?;
    let arrows = &src.graph.arrows;

    let classes = protected_classes(src)?;
    let class_of = |r: &RegimeId| classes.iter().position(|c| c.contains(r));
    let same_kind = regimes.iter().all(|r| r.evaluator.kind == first.evaluator.kind);
    let scalar = first.evaluator.kind.is_scalar();
    let inert = regimes.iter().all(|r| r.memory == MemorySpec::Inert);

    let degeneration = DegenerationConditions {
        single_regime: regimes.len() == 1,
        identity_transitions_only: arrows.iter().all(Transition::is_identity),
        inert_memory: inert && regimes.iter().all(|r| !reads_memory(r.protected())),
        single_scalar_evaluator: same_kind && scalar,
        core_is_evaluator: regimes.iter().all(|r| r.protected() == &ProtectedCore::EvaluatorItself),
        fixed_task_and_experience: regimes.len() == 1 && arrows.iter().all(|t| t.memory_map == MemoryMap::Identity),
    };

    let mut cross_class = false;
    let mut trivial_on_core = true;
    for t in arrows {
        if class_of(&t.source) != class_of(&t.target) {
            cross_class = true;
            trivial_on_core = false;
        }
    }
    let memory_critical = regimes
        .iter()
        .any(|r| reads_memory(r.protected()) || matches!(r.memory, MemorySpec::RetainedCompetence { .. }));
    let hard_gate = matches!(src.admissibility.cost_mode, CostMode::EntailmentGate)
        || regimes
            .iter()
            .any(|r| matches!(r.protected(), ProtectedCore::LogicalCore { .. }));

    let reducibility = ReducibilityConditions {
        single_protected_class: classes.len() <= 1,
        transitions_trivial_on_core: trivial_on_core,
        memory_not_admissibility_relevant: !memory_critical,
        common_scalar_representative: same_kind && scalar,
        ordinary_comparison: arrows.iter().all(|t| t.gauge == crate::system::Gauge::Identity),
    };

    let mut obstructions = Vec::new();
    if memory_critical {
        obstructions.push(Obstruction::AdmissibilityCriticalMemory);
    }
    if classes.len() > 1 && cross_class {
        obstructions.push(Obstruction::QuotientRestrictedComparability);
    }
    if hard_gate {
        obstructions.push(Obstruction::NonAggregableProtectedCores);
    }
    let verdict = if reducibility.all() && obstructions.is_empty() {
        CollapseVerdict::Faithful
    } else {
        CollapseVerdict::Lossy { obstructions }
    };

    let evaluator = EvaluatorSpec {
        kind: first.evaluator.kind.clone(),
        protected: ProtectedCore::EvaluatorItself,
    };
    let mut node = Regime::new(
        first.id.0.clone(),
        first.state_dim,
        MemorySpec::Inert,
        evaluator.clone(),
    );
    node.obs_dim = first.obs_dim;
    node.act_dim = first.act_dim;
    node.anchor = first.anchor.clone();
    let mut graph = RegimeGraph::new().add_regime(node)?;
    let loops = if arrows.is_empty() {
        vec![ArrowId::new(format!("id_{}", first.id))]
    } else {
        arrows.iter().map(|t| t.id.clone()).collect()
    };
    for id in loops {
        graph = graph.add_arrow(Transition::identity(id.0, first.id.clone(), first.id.clone()))?;
    }
    let image = RegimeSystem::new(
        format!("{} (collapsed)", src.label),
        graph,
        AdmissibilityConfig::declared(),
    );

    let tuple = MitchellTuple {
        experience: format!("{}: trajectories over {} regime(s)", src.label, regimes.len()),
        task: src.label.clone(),
        evaluator,
    };
    let report = CollapseReport {
        degeneration,
        reducibility,
        verdict,
        protected_classes: classes.len(),
        image,
    };
    Ok((tuple, report))
}
