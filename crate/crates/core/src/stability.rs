//! Drift-based stability bounds and trajectory verification.
//!
//! A drift functional `W_t ≥ 0` obeys, in expectation,
//! `W_{t+1} ≤ (1 − α) W_t + δ + β d_t`. Unrolling gives
//! `(1 − α)ⁿ W₀ + δ/α + β Σ (1 − α)^{n−1−k} d_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REL_TOL: f64 = 1e-9;
const ABS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDriftParams")]
pub struct DriftParams {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
}

#[derive(Deserialize)]
struct RawDriftParams {
    alpha: f64,
    delta: f64,
    beta: f64,
}

impl TryFrom<RawDriftParams> for DriftParams {
    type Error = Error;

    fn try_from(r: RawDriftParams) -> Result<Self> {
        DriftParams::new(r.alpha, r.delta, r.beta)
    }
}

impl DriftParams {
    pub fn new(alpha: f64, delta: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParams(format!("alpha = {alpha} must lie in (0, 1]")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "delta = {delta} must be finite and nonnegative"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "beta = {beta} must be finite and nonnegative"
            )));
        }
        Ok(Self { alpha, delta, beta })
    }

    /// Right-hand side of the one-step drift inequality.
    pub fn step_bound(&self, w: f64, cost: f64) -> f64 {
        (1.0 - self.alpha) * w + self.delta + self.beta * cost
    }
}

/// Observed drift values `W_0..W_n` and the `n` costs between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct TrajectoryRecord {
    pub w_values: Vec<f64>,
    pub costs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    w_values: Vec<f64>,
    costs: Vec<f64>,
    #[serde(default)]
    seed: Option<u64>,
}

impl TryFrom<RawTrajectory> for TrajectoryRecord {
    type Error = Error;

    fn try_from(r: RawTrajectory) -> Result<Self> {
        let mut t = TrajectoryRecord::new(r.w_values, r.costs)?;
        t.seed = r.seed;
        Ok(t)
    }
}

fn check_nonnegative(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        Some(i) => Err(Error::InvalidTrajectory(format!(
            "{what}[{i}] = {} is not a finite nonnegative number",
            values[i]
        ))),
        None => Ok(()),
    }
}

impl TrajectoryRecord {
    pub fn new(w_values: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        if w_values.is_empty() {
            return Err(Error::InvalidTrajectory("w_values must be nonempty".into()));
        }
        if costs.len() + 1 != w_values.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} drift values need {} costs, found {}",
                w_values.len(),
                w_values.len() - 1,
                costs.len()
            )));
        }
        check_nonnegative("w_values", &w_values)?;
        check_nonnegative("costs", &costs)?;
        Ok(Self {
            w_values,
            costs,
            seed: None,
        })
    }

    pub fn horizon(&self) -> usize {
        self.costs.len()
    }
}

fn check_bound_inputs(w0: f64, costs: &[f64]) -> Result<()> {
    if !(w0 >= 0.0 && w0.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "W0 = {w0} must be finite and nonnegative"
        )));
    }
    check_nonnegative("costs", costs).map_err(|e| Error::InvalidParams(e.to_string()))
}

/// `Σ_k (1 − α)^{n−1−k} d_k` by Horner's rule.
fn discounted_costs(alpha: f64, costs: &[f64]) -> f64 {
    costs.iter().fold(0.0, |acc, d| acc * (1.0 - alpha) + d)
}

/// Closed-form upper bound on `E[W_n]` with `n = costs.len()`; `n = 0` gives `W₀`.
pub fn theorem_bound(p: &DriftParams, w0: f64, costs: &[f64]) -> Result<f64> {
    check_bound_inputs(w0, costs)?;
    if costs.is_empty() {
        return Ok(w0);
    }
    let n = costs.len() as i32;
    Ok((1.0 - p.alpha).powi(n) * w0 + p.delta / p.alpha + p.beta * discounted_costs(p.alpha, costs))
}

/// Value of the drift recurrence run with equality, before the geometric
/// series over `δ` is relaxed to `δ/α`.
pub fn unrolled_bound(p: &DriftParams, w0: f64, costs: &[f64]) -> Result<f64> {
    check_bound_inputs(w0, costs)?;
    let n = costs.len() as i32;
    let f = 1.0 - p.alpha;
    let noise: f64 = (0..n).map(|k| f.powi(k)).sum::<f64>() * p.delta;
    Ok(f.powi(n) * w0 + noise + p.beta * discounted_costs(p.alpha, costs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostProfile {
    /// `d_t ≤ d_bar` for all t.
    UniformlyBounded { d_bar: f64 },
    /// `d_t → 0`.
    Vanishing,
    /// `d_t → 0` and `δ = 0`.
    VanishingAndNoiseless,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AsymptoticLimit {
    /// `limsup E[W_t] ≤ value`.
    LimsupAtMost { value: f64 },
    /// `E[W_t] → value`.
    ConvergesTo { value: f64 },
}

impl AsymptoticLimit {
    pub fn value(&self) -> f64 {
        match self {
            AsymptoticLimit::LimsupAtMost { value } | AsymptoticLimit::ConvergesTo { value } => *value,
        }
    }
}

pub fn asymptotic_class(p: &DriftParams, profile: CostProfile) -> Result<AsymptoticLimit> {
    match profile {
        CostProfile::UniformlyBounded { d_bar } => {
            if !(d_bar >= 0.0 && d_bar.is_finite()) {
                return Err(Error::InconsistentProfile(format!(
                    "cost ceiling {d_bar} must be nonnegative"
                )));
            }
            Ok(AsymptoticLimit::LimsupAtMost {
                value: (p.delta + p.beta * d_bar) / p.alpha,
            })
        }
        CostProfile::Vanishing => Ok(AsymptoticLimit::LimsupAtMost {
            value: p.delta / p.alpha,
        }),
        CostProfile::VanishingAndNoiseless if p.delta > 0.0 => Err(Error::InconsistentProfile(format!(
            "noiseless profile requires delta = 0, got {}",
            p.delta
        ))),
        CostProfile::VanishingAndNoiseless => Ok(AsymptoticLimit::ConvergesTo { value: 0.0 }),
    }
}

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + REL_TOL * rhs.abs().max(lhs.abs()) + ABS_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub params: DriftParams,
    /// Indices `t + 1` at which `W_{t+1}` exceeds the one-step recurrence.
    pub violations: Vec<usize>,
    pub final_value: f64,
    pub bound: f64,
    pub final_within_bound: bool,
}

impl DriftReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.final_within_bound
    }
}

/// Checks a trajectory pathwise against the drift recurrence and the closed-form bound.
pub fn verify_drift(p: &DriftParams, traj: &TrajectoryRecord) -> DriftReport {
    let w = &traj.w_values;
    let violations = w
        .windows(2)
        .zip(&traj.costs)
        .enumerate()
        .filter(|(_, (pair, d))| !within(pair[1], p.step_bound(pair[0], **d)))
        .map(|(t, _)| t + 1)
        .collect();
    let final_value = *w.last().expect("trajectory is nonempty");
    // Inputs were validated when the record was built.
    let bound = theorem_bound(p, w[0], &traj.costs).unwrap_or(f64::INFINITY);
    DriftReport {
        params: *p,
        violations,
        final_value,
        bound,
        final_within_bound: within(final_value, bound),
    }
}

/// Monte Carlo summary of a noisy drift recurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyEstimate {
    /// Mean of `W_t` over trials, `t = 0..=n`.
    pub mean_path: Vec<f64>,
    pub final_std: f64,
    pub trials: usize,
}

/// Runs `W_{t+1} = (1 − α) W_t + ξ_t + β d_t` with `ξ_t ~ Uniform[0, 2δ]`.
///
/// Trial `i` uses stream `i` of a ChaCha generator keyed by `seed`.
pub fn simulate_noisy(p: &DriftParams, w0: f64, costs: &[f64], trials: usize, seed: u64) -> Result<NoisyEstimate> {
    check_bound_inputs(w0, costs)?;
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be positive".into()));
    }
    let mut sums = vec![0.0; costs.len() + 1];
    let mut final_sq = 0.0;
    for i in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut w = w0;
        sums[0] += w;
        for (t, d) in costs.iter().enumerate() {
            let noise = if p.delta > 0.0 {
                rng.gen_range(0.0..2.0 * p.delta)
            } else {
                0.0
            };
            w = (1.0 - p.alpha) * w + noise + p.beta * d;
            sums[t + 1] += w;
        }
        final_sq += w * w;
    }
    let m = trials as f64;
    let mean_path: Vec<f64> = sums.into_iter().map(|s| s / m).collect();
    let final_mean = *mean_path.last().expect("nonempty");
    let var = (final_sq / m - final_mean * final_mean).max(0.0) * m / (m - 1.0).max(1.0);
    Ok(NoisyEstimate {
        mean_path,
        final_std: var.sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, d: f64, b: f64) -> DriftParams {
        DriftParams::new(a, d, b).unwrap()
    }

    #[test]
    fn bound_examples() {
        assert_eq!(theorem_bound(&p(1.0, 0.0, 0.0), 5.0, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let b = theorem_bound(&p(0.5, 0.0, 1.0), 1.0, &[0.1, 0.1]).unwrap();
        assert!((b - 0.40).abs() < 1e-15);
        let b = theorem_bound(&p(0.5, 0.2, 0.0), 0.0, &[0.0, 0.0]).unwrap();
        assert!((b - 0.4).abs() < 1e-15);
        assert_eq!(theorem_bound(&p(0.5, 0.2, 1.0), 3.0, &[]).unwrap(), 3.0);
    }

    #[test]
    fn invalid_params() {
        assert!(DriftParams::new(0.0, 0.0, 0.0).is_err());
        assert!(DriftParams::new(1.5, 0.0, 0.0).is_err());
        assert!(DriftParams::new(0.5, -0.1, 0.0).is_err());
        assert!(DriftParams::new(0.5, 0.0, f64::NAN).is_err());
        assert!(serde_json::from_str::<DriftParams>(r#"{"alpha":2,"delta":0,"beta":0}"#).is_err());
        assert!(theorem_bound(&p(0.5, 0.0, 0.0), -1.0, &[]).is_err());
    }

    #[test]
    fn asymptotic_examples() {
        let a = asymptotic_class(&p(0.5, 0.1, 1.0), CostProfile::UniformlyBounded { d_bar: 0.2 }).unwrap();
        assert!((a.value() - 0.6).abs() < 1e-15);
        let a = asymptotic_class(&p(0.5, 0.1, 1.0), CostProfile::Vanishing).unwrap();
        assert!((a.value() - 0.2).abs() < 1e-15);
        assert_eq!(
            asymptotic_class(&p(0.5, 0.0, 1.0), CostProfile::VanishingAndNoiseless).unwrap(),
            AsymptoticLimit::ConvergesTo { value: 0.0 }
        );
        assert!(matches!(
            asymptotic_class(&p(0.5, 0.1, 1.0), CostProfile::VanishingAndNoiseless),
            Err(Error::InconsistentProfile(_))
        ));
    }

    #[test]
    fn exact_contraction_has_no_violations() {
        let params = p(0.3, 0.0, 0.0);
        let w: Vec<f64> = (0..20).map(|t| 4.0 * 0.7f64.powi(t)).collect();
        let traj = TrajectoryRecord::new(w, vec![0.0; 19]).unwrap();
        let rep = verify_drift(&params, &traj);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn spike_is_reported() {
        let params = p(0.5, 0.0, 0.0);
        let traj = TrajectoryRecord::new(vec![1.0, 0.5, 3.0, 1.5], vec![0.0; 3]).unwrap();
        let rep = verify_drift(&params, &traj);
        assert_eq!(rep.violations, vec![2]);
        assert!(!rep.passed());
    }

    #[test]
    fn trajectory_validation() {
        assert!(TrajectoryRecord::new(vec![], vec![]).is_err());
        assert!(TrajectoryRecord::new(vec![1.0, 1.0], vec![]).is_err());
        assert!(TrajectoryRecord::new(vec![1.0, -1.0], vec![0.0]).is_err());
        assert!(serde_json::from_str::<TrajectoryRecord>(r#"{"w_values":[1,2],"costs":[]}"#).is_err());
    }

    #[test]
    fn unrolled_matches_bound_when_noiseless() {
        let params = p(0.25, 0.0, 2.0);
        let costs = [0.3, 0.0, 1.0, 0.5];
        let a = unrolled_bound(&params, 2.0, &costs).unwrap();
        let b = theorem_bound(&params, 2.0, &costs).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn noisy_mean_is_seed_deterministic() {
        let params = p(0.5, 0.1, 1.0);
        let a = simulate_noisy(&params, 1.0, &[0.1; 10], 200, 3).unwrap();
        let b = simulate_noisy(&params, 1.0, &[0.1; 10], 200, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean_path.len(), 11);
    }
}
