//! Executes compiled scenarios through the certificate gate and emits reports.

use serde::{Deserialize, Serialize};

use crate::admissibility::{certify_step, Certificate, Failure, FailureReason};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scenario::{CompiledScenario, Scenario};
use crate::stability::{verify_drift, DriftReport, TrajectoryRecord};
use crate::system::{Cost, RegimeId};

/// State at time `t` and the step taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub regime: RegimeId,
    pub state: Vec<f64>,
    /// `‖s_t − μ(r_t)‖²`, when the regime has a semantic anchor.
    pub w: Option<f64>,
    /// Cost of the step leaving `t`; zero for the final record.
    pub cost: Cost,
    /// Certificate of the transition scheduled at `t`, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
}

impl StepRecord {
    pub fn admissible(&self) -> bool {
        self.certificate.as_ref().is_none_or(|c| c.admissible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Completed,
    TerminatedAt { step: usize, reasons: Vec<Failure> },
}

impl Verdict {
    pub fn reasons(&self) -> &[Failure] {
        match self {
            Verdict::Completed => &[],
            Verdict::TerminatedAt { reasons, .. } => reasons,
        }
    }

    pub fn has(&self, clause: FailureReason) -> bool {
        self.reasons().iter().any(|r| r.clause == clause)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub horizon: usize,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftReport>,
}

impl RunReport {
    /// Report with no records.
    pub fn empty(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            horizon: 0,
            seed: 0,
            records: Vec::new(),
            verdict: Verdict::Completed,
            drift: None,
        }
    }

    /// Completed with no drift violations.
    pub fn succeeded(&self) -> bool {
        self.verdict == Verdict::Completed && self.drift.as_ref().is_none_or(DriftReport::passed)
    }
}

fn discrepancy(c: &CompiledScenario, regime: &RegimeId, s: &[f64]) -> Result<Option<f64>> {
    match c.system.regime(regime)?.semantic_anchor() {
        Ok(mu) => Ok(Some(linalg::dist_sq(s, &mu)?)),
        Err(_) => Ok(None),
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunReport> {
    run_compiled(&scenario.compile()?)
}

pub fn run_compiled(c: &CompiledScenario) -> Result<RunReport> {
    let graph = &c.system.graph;
    let mut regime = c.initial_regime.clone();
    let mut state = c.initial_state.clone();
    let mut memory = c.initial_memory.clone();
    let mut records = Vec::with_capacity(c.horizon + 1);
    let mut verdict = Verdict::Completed;

    for t in 0..c.horizon {
        let w = discrepancy(c, &regime, &state)?;
        let here = c.system.regime(&regime)?;
        let (updated, hypothesis) = here.update.apply(graph, &regime, &state, &memory.hypothesis)?;
        let mut record = StepRecord {
            t,
            regime: regime.clone(),
            state: std::mem::take(&mut state),
            w,
            cost: Cost::ZERO,
            certificate: None,
        };
        memory.hypothesis = hypothesis;
        state = updated;

        if let Some(arrow_id) = c.schedule.get(&t) {
            let arrow = graph.arrow(arrow_id)?;
            let step = certify_step(&c.system, arrow, &state, &memory)?;
            record.cost = step.certificate.cost;
            let admitted = step.certificate.admissible;
            if !admitted {
                verdict = Verdict::TerminatedAt {
                    step: t,
                    reasons: step.certificate.reasons.clone(),
                };
            }
            record.certificate = Some(step.certificate);
            records.push(record);
            if !admitted {
                break;
            }
            let (s, m) = step
                .transported
                .ok_or_else(|| Error::InvalidInput("admissible step without a transported pair".into()))?;
            state = s;
            memory = m;
            regime = arrow.target.clone();
        } else {
            records.push(record);
        }
    }
    if verdict == Verdict::Completed {
        records.push(StepRecord {
            t: c.horizon,
            w: discrepancy(c, &regime, &state)?,
            regime,
            state,
            cost: Cost::ZERO,
            certificate: None,
        });
    }

    let drift = match (&verdict, c.drift) {
        (Verdict::Completed, Some(p)) => Some(verify_drift(&p, &trajectory(&records, c.seed)?)),
        _ => None,
    };
    Ok(RunReport {
        label: c.system.label.clone(),
        horizon: c.horizon,
        seed: c.seed,
        records,
        verdict,
        drift,
    })
}

/// Drift trajectory of a completed run.
pub fn trajectory(records: &[StepRecord], seed: u64) -> Result<TrajectoryRecord> {
    let w_values = records
        .iter()
        .map(|r| {
            r.w.ok_or_else(|| Error::InvalidTrajectory(format!("no drift value at t = {}", r.t)))
        })
        .collect::<Result<Vec<_>>>()?;
    let costs = records[..records.len().saturating_sub(1)]
        .iter()
        .map(|r| {
            r.cost
                .finite()
                .ok_or_else(|| Error::InvalidTrajectory(format!("infinite cost at t = {}", r.t)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut traj = TrajectoryRecord::new(w_values, costs)?;
    traj.seed = Some(seed);
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown report format `{other}`"))),
        }
    }
}

/// Serializes a report. JSON carries everything; CSV carries one row per record.
pub fn emit_report(r: &RunReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(r).expect("reports serialize");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t", "regime", "W", "cost", "admissible"])
                .expect("in-memory write");
            for rec in &r.records {
                w.write_record([
                    rec.t.to_string(),
                    rec.regime.to_string(),
                    rec.w.map(|w| w.to_string()).unwrap_or_default(),
                    rec.cost.to_string(),
                    rec.admissible().to_string(),
                ])
                .expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
[system]
label = "toy"
horizon = 3
initial_regime = "r0"
initial_state = [3.0]

[[regimes]]
id = "r0"
state_dim = 1
evaluator = { kind = "quadratic_loss", x = [[1.0]], y = [0.0] }
protected = { kind = "scalar_floor", anchor = [0.0], radius = 1.0 }

[[regimes]]
id = "r1"
state_dim = 1
evaluator = { kind = "quadratic_loss", x = [[1.0]], y = [0.0] }
protected = { kind = "scalar_floor", anchor = [0.0], radius = 1.0 }

[[arrows]]
id = "step"
source = "r0"
target = "r1"
state_map = { kind = "gradient_step", eta = 2.5 }

[[schedule]]
step = 0
arrow = "step"
"#;

    #[test]
    fn toy_terminates_at_switch() {
        let report = run_scenario(&TOY.parse().unwrap()).unwrap();
        assert!(matches!(report.verdict, Verdict::TerminatedAt { step: 0, .. }));
        assert!(report.verdict.has(FailureReason::ProtectedViolated));
        assert_eq!(report.records.len(), 1);
        let csv = String::from_utf8(emit_report(&report, ReportFormat::Csv)).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().ends_with("infinite,false"));
    }

    #[test]
    fn completed_run_has_horizon_plus_one_rows() {
        let text = TOY
            .replace("eta = 2.5", "eta = 0.5")
            .replace("initial_state = [3.0]", "initial_state = [0.5]");
        let report = run_scenario(&text.parse().unwrap()).unwrap();
        assert_eq!(report.verdict, Verdict::Completed);
        assert_eq!(report.records.len(), 4);
        assert_eq!(report.records[1].regime, RegimeId::new("r1"));
        let csv = String::from_utf8(emit_report(&report, ReportFormat::Csv)).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn empty_report_is_header_only() {
        let csv = emit_report(&RunReport::empty("none"), ReportFormat::Csv);
        assert_eq!(String::from_utf8(csv).unwrap(), "t,regime,W,cost,admissible\n");
    }

    #[test]
    fn missing_protected_core_is_rejected() {
        let text = TOY.replacen(
            "protected = { kind = \"scalar_floor\", anchor = [0.0], radius = 1.0 }\n",
            "",
            1,
        );
        match run_scenario(&text.parse().unwrap()) {
            Err(Error::InvalidScenario(msgs)) => {
                assert!(msgs
                    .iter()
                    .any(|m| m.contains("every regime must declare a protected core")))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schedule_problems_are_listed() {
        let text = TOY
            .replace("step = 0", "step = 9")
            .replace("horizon = 3", "horizon = 0");
        match text.parse::<Scenario>().unwrap().compile() {
            Err(Error::InvalidScenario(msgs)) => assert!(msgs.len() >= 2, "{msgs:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_is_deterministic() {
        let s: Scenario = TOY.parse().unwrap();
        let a = emit_report(&run_scenario(&s).unwrap(), ReportFormat::Json);
        let b = emit_report(&run_scenario(&s).unwrap(), ReportFormat::Json);
        assert_eq!(a, b);
    }
}
