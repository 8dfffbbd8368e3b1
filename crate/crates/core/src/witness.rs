//! Anchor-based convex witness, the two-regime regression example, the
//! scalarization obstruction and the covering-number capacity check.

use serde::{Deserialize, Serialize};

use crate::admissibility::{Certificate, Failure, FailureReason};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::stability::{DriftParams, TrajectoryRecord};
use crate::system::{self, Cost, RegimeId};

/// A regime whose update contracts `‖s − μ‖²` by exactly `1 − α` per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoredRegime {
    pub regime: RegimeId,
    pub anchor: Vec<f64>,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

impl AnchoredRegime {
    pub fn new(regime: impl Into<String>, anchor: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if anchor.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("anchor must be finite".into()));
        }
        Ok(Self {
            regime: RegimeId::new(regime),
            anchor,
            alpha,
        })
    }

    /// `‖s − μ‖²`.
    pub fn discrepancy(&self, s: &[f64]) -> Result<f64> {
        linalg::dist_sq(s, &self.anchor)
    }
}

/// `μ + √(1 − α)(s − μ)`.
pub fn contractive_step(s: &[f64], r: &AnchoredRegime) -> Result<Vec<f64>> {
    linalg::check_len(r.anchor.len(), s.len())?;
    let k = (1.0 - r.alpha).sqrt();
    Ok(s.iter().zip(&r.anchor).map(|(si, mi)| mi + k * (si - mi)).collect())
}

/// Open interval `(0, upper)` of valid Young-split parameters; `None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRange {
    pub upper: Option<f64>,
}

impl EpsilonRange {
    pub fn contains(&self, eps: f64) -> bool {
        eps > 0.0 && self.upper.map_or(eps.is_finite(), |u| eps < u)
    }

    /// Midpoint of the interval, or 1 when unbounded.
    pub fn default_epsilon(&self) -> f64 {
        self.upper.map_or(1.0, |u| u / 2.0)
    }
}

pub fn epsilon_range(alpha: f64) -> Result<EpsilonRange> {
    check_alpha(alpha)?;
    Ok(EpsilonRange {
        upper: (alpha < 1.0).then(|| alpha / (1.0 - alpha)),
    })
}

/// `(1 + 1/ε)‖μ_src − μ_dst‖²`.
pub fn transport_overhead(eps: f64, mu_src: &[f64], mu_dst: &[f64]) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEpsilon(eps));
    }
    Ok((1.0 + 1.0 / eps) * linalg::dist_sq(mu_src, mu_dst)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessRun {
    pub trajectory: TrajectoryRecord,
    /// Regime occupied at each `t = 0..=n`.
    pub regimes: Vec<RegimeId>,
    /// `α_eff = 1 − max_r (1 + ε_r)(1 − α_r)`, `δ = 0`, `β = 1`.
    pub effective: DriftParams,
    pub states: Vec<Vec<f64>>,
}

/// Effective drift parameters for a family of anchored regimes.
pub fn effective_params(regimes: &[AnchoredRegime]) -> Result<DriftParams> {
    let mut worst: f64 = 0.0;
    for r in regimes {
        let eps = epsilon_range(r.alpha)?.default_epsilon();
        worst = worst.max((1.0 + eps) * (1.0 - r.alpha));
    }
    DriftParams::new(1.0 - worst, 0.0, 1.0)
}

/// Runs the witness dynamics. At each scheduled step the state first
/// contracts in the departing regime and then the process moves to the
/// next regime in cyclic order; the switch cost is the transport overhead
/// with the departing regime's default ε.
pub fn simulate_witness(regimes: &[AnchoredRegime], schedule: &[usize], s0: &[f64], n: usize) -> Result<WitnessRun> {
    let first = regimes
        .first()
        .ok_or_else(|| Error::InvalidInput("at least one regime is required".into()))?;
    for r in regimes {
        linalg::check_len(s0.len(), r.anchor.len())?;
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "switch schedule must be strictly increasing".into(),
        ));
    }
    if let Some(&last) = schedule.last() {
        if last >= n {
            return Err(Error::InvalidInput(format!(
                "switch at step {last} is outside horizon {n}"
            )));
        }
    }
    let effective = effective_params(regimes)?;

    let mut current = 0;
    let mut s = s0.to_vec();
    let mut w_values = vec![first.discrepancy(&s)?];
    let mut costs = Vec::with_capacity(n);
    let mut visited = vec![first.regime.clone()];
    let mut states = vec![s.clone()];
    let mut next_switch = schedule.iter().peekable();
    for t in 0..n {
        let here = &regimes[current];
        s = contractive_step(&s, here)?;
        let cost = if next_switch.next_if_eq(&&t).is_some() {
            let eps = epsilon_range(here.alpha)?.default_epsilon();
            current = (current + 1) % regimes.len();
            transport_overhead(eps, &here.anchor, &regimes[current].anchor)?
        } else {
            0.0
        };
        costs.push(cost);
        w_values.push(regimes[current].discrepancy(&s)?);
        visited.push(regimes[current].regime.clone());
        states.push(s.clone());
    }
    Ok(WitnessRun {
        trajectory: TrajectoryRecord::new(w_values, costs)?,
        regimes: visited,
        effective,
        states,
    })
}

/// One regime of the two-regime least-squares example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRegime {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub eta: f64,
    /// Protected anchor `w̄`.
    pub anchor: Vec<f64>,
    pub radius: f64,
    pub c0: f64,
}

impl RegressionRegime {
    pub fn new(x: Matrix, y: Vec<f64>, eta: f64, anchor: Vec<f64>, radius: f64, c0: f64) -> Result<Self> {
        linalg::check_len(x.rows(), y.len())?;
        linalg::check_len(x.cols(), anchor.len())?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidInput(format!("step size {eta} must be positive")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("radius {radius} must be positive")));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::InvalidInput(format!("cost scale {c0} must be positive")));
        }
        Ok(Self {
            x,
            y,
            eta,
            anchor,
            radius,
            c0,
        })
    }

    /// Scalar instance `X = 1`, `y = 0`, `w̄ = 0`, `ρ = 1`, `c0 = 1`.
    pub fn scalar(eta: f64) -> Result<Self> {
        Self::new(Matrix::identity(1), vec![0.0], eta, vec![0.0], 1.0, 1.0)
    }

    pub fn loss(&self, w: &[f64]) -> Result<f64> {
        let r = linalg::sub(&self.x.mul_vec(w)?, &self.y);
        Ok(0.5 * linalg::norm_sq(&r))
    }

    pub fn minimizer(&self) -> Result<Vec<f64>> {
        linalg::least_squares(&self.x, &self.y)
    }
}

/// `w − ηXᵀ(Xw − y)`.
pub fn gradient_transport(w: &[f64], r: &RegressionRegime) -> Result<Vec<f64>> {
    system::gradient_step(&r.x, &r.y, r.eta, w)
}

/// Squared-distance contraction of the gradient step toward the minimizer:
/// `1 − max_i (1 − ηλ_i)²` over eigenvalues of `XᵀX`. Nonpositive values
/// mean the step does not contract.
pub fn gradient_contraction(r: &RegressionRegime) -> Result<f64> {
    let eig = linalg::symmetric_eigenvalues(&r.x.gram())?;
    let worst = eig.iter().map(|l| (1.0 - r.eta * l).powi(2)).fold(0.0, f64::max);
    Ok(1.0 - worst)
}

/// Gradient-step transport gated by `‖τ(w) − w̄‖ ≤ ρ`. With a target regime
/// the cost is `c0‖w₁* − w₀*‖²`; otherwise it is zero.
pub fn toy_admissible(w: &[f64], r: &RegressionRegime, target: Option<&RegressionRegime>) -> Result<Certificate> {
    let moved = gradient_transport(w, r)?;
    let dist = linalg::dist_sq(&moved, &r.anchor)?.sqrt();
    if dist > r.radius {
        return Ok(Certificate::rejected(vec![Failure::new(
            FailureReason::ProtectedViolated,
            format!(
                "transported weights lie at distance {dist} from the protected anchor, radius {}",
                r.radius
            ),
        )]));
    }
    let cost = match target {
        Some(t) => r.c0 * linalg::dist_sq(&t.minimizer()?, &r.minimizer()?)?,
        None => 0.0,
    };
    Ok(Certificate::admitted(Cost::Finite(cost)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    /// Maximizer of `u·s − λ·1{s > b}` over the grid.
    pub penalty_argmax: f64,
    pub penalty_value: f64,
    /// Maximizer of `u·s` over compliant candidates `s ≤ b`, if any.
    pub gated_argmax: Option<f64>,
    pub gated_value: Option<f64>,
    /// The penalized optimum crosses the protected boundary.
    pub divergence: bool,
}

/// Compares a finite-penalty scalarization against hard gating on a grid.
/// Ties between a violating and a compliant candidate favor the compliant one.
pub fn scalarization_obstruction(u: f64, b: f64, lambda: f64, grid: &[f64]) -> Result<ObstructionReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("candidate grid must be nonempty".into()));
    }
    if !(u > 0.0 && lambda > 0.0) || grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(
            "slope and penalty must be positive, grid finite".into(),
        ));
    }
    let best = |it: &mut dyn Iterator<Item = (f64, f64)>| {
        it.fold(None, |acc: Option<(f64, f64)>, (s, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((s, v)),
        })
    };
    let gated = best(&mut grid.iter().filter(|s| **s <= b).map(|s| (*s, u * s)));
    let violating = best(&mut grid.iter().filter(|s| **s > b).map(|s| (*s, u * s - lambda)));
    let divergence = match (violating, gated) {
        (Some((_, v)), Some((_, g))) => v > g,
        (Some(_), None) => true,
        (None, _) => false,
    };
    let (penalty_argmax, penalty_value) = if divergence {
        violating.expect("divergence implies a violating candidate")
    } else {
        gated.expect("no divergence implies a compliant candidate")
    };
    Ok(ObstructionReport {
        penalty_argmax,
        penalty_value,
        gated_argmax: gated.map(|g| g.0),
        gated_value: gated.map(|g| g.1),
        divergence,
    })
}

/// Parameters of the transported covering-number inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityCheck {
    pub dimension: usize,
    pub diameter: f64,
    pub resolution: f64,
    pub transport_regularity: f64,
    pub innovation: f64,
}

impl CapacityCheck {
    pub fn new(
        dimension: usize,
        diameter: f64,
        resolution: f64,
        transport_regularity: f64,
        innovation: f64,
    ) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidResolution(format!(
                "diameter {diameter} must be positive"
            )));
        }
        if !(resolution > 0.0 && resolution <= diameter) {
            return Err(Error::InvalidResolution(format!(
                "resolution {resolution} must lie in (0, {diameter}]"
            )));
        }
        if !(transport_regularity > 0.0 && transport_regularity.is_finite()) {
            return Err(Error::InvalidResolution(format!(
                "transport regularity {transport_regularity} must be positive"
            )));
        }
        if !(innovation >= 0.0 && innovation.is_finite()) {
            return Err(Error::InvalidResolution(format!(
                "innovation {innovation} must be nonnegative"
            )));
        }
        Ok(Self {
            dimension,
            diameter,
            resolution,
            transport_regularity,
            innovation,
        })
    }

    /// Capacity data for the anchored witness: isometric transport, no innovation.
    pub fn witness(dimension: usize, diameter: f64, resolution: f64) -> Result<Self> {
        Self::new(dimension, diameter, resolution, 1.0, 0.0)
    }
}

/// `d · ln(1 + 2·diam·L_τ/ε) + C_new`.
pub fn covering_bound(c: &CapacityCheck) -> Result<f64> {
    let c = CapacityCheck::new(
        c.dimension,
        c.diameter,
        c.resolution,
        c.transport_regularity,
        c.innovation,
    )?;
    let eps = c.resolution / c.transport_regularity;
    Ok(c.dimension as f64 * (2.0 * c.diameter / eps).ln_1p() + c.innovation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regime(anchor: Vec<f64>, alpha: f64) -> AnchoredRegime {
        AnchoredRegime::new("r", anchor, alpha).unwrap()
    }

    #[test]
    fn contraction_examples() {
        let r = regime(vec![1.0, -1.0], 0.75);
        assert_eq!(contractive_step(&[1.0, -1.0], &r).unwrap(), vec![1.0, -1.0]);
        let out = contractive_step(&[3.0, -1.0], &r).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-15 && out[1] == -1.0);
        let full = regime(vec![0.5], 1.0);
        assert_eq!(contractive_step(&[9.0], &full).unwrap(), vec![0.5]);
        assert!(contractive_step(&[0.0], &r).is_err());
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_range(0.5).unwrap().upper, Some(1.0));
        assert_eq!(epsilon_range(1.0).unwrap().upper, None);
        assert!((epsilon_range(0.2).unwrap().upper.unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(epsilon_range(0.0), Err(Error::InvalidAlpha(0.0)));
        assert_eq!(epsilon_range(1.0).unwrap().default_epsilon(), 1.0);
    }

    #[test]
    fn overhead_examples() {
        assert_eq!(transport_overhead(0.3, &[1.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(transport_overhead(1.0, &[0.0, 0.0], &[2.0, 0.0]).unwrap(), 8.0);
        assert_eq!(transport_overhead(0.5, &[0.0], &[1.0]).unwrap(), 3.0);
        assert_eq!(transport_overhead(0.0, &[0.0], &[1.0]), Err(Error::InvalidEpsilon(0.0)));
    }

    #[test]
    fn single_regime_decays_geometrically() {
        let r = regime(vec![0.0], 0.5);
        let run = simulate_witness(&[r], &[], &[2.0], 5).unwrap();
        for (t, w) in run.trajectory.w_values.iter().enumerate() {
            assert!((w - 4.0 * 0.5f64.powi(t as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_anchors_switch_for_free() {
        let a = AnchoredRegime::new("a", vec![1.0], 0.5).unwrap();
        let b = AnchoredRegime::new("b", vec![1.0], 0.5).unwrap();
        let run = simulate_witness(&[a, b], &[1, 3], &[3.0], 6).unwrap();
        assert!(run.trajectory.costs.iter().all(|c| *c == 0.0));
        assert_eq!(run.regimes[2], RegimeId::new("b"));
        assert_eq!(run.regimes[4], RegimeId::new("a"));
    }

    #[test]
    fn schedule_validation() {
        let r = regime(vec![0.0], 0.5);
        assert!(simulate_witness(std::slice::from_ref(&r), &[3, 3], &[0.0], 5).is_err());
        assert!(simulate_witness(std::slice::from_ref(&r), &[5], &[0.0], 5).is_err());
        assert!(simulate_witness(&[r], &[], &[0.0, 0.0], 5).is_err());
        assert!(simulate_witness(&[], &[], &[0.0], 5).is_err());
    }

    #[test]
    fn effective_alpha_is_half_for_midpoint() {
        let p = effective_params(&[regime(vec![0.0], 0.4)]).unwrap();
        assert!((p.alpha - 0.2).abs() < 1e-15);
        assert_eq!(p.delta, 0.0);
        assert_eq!(p.beta, 1.0);
    }

    #[test]
    fn gradient_examples() {
        let r = RegressionRegime::scalar(0.5).unwrap();
        assert_eq!(gradient_transport(&[0.5], &r).unwrap(), vec![0.25]);
        let r2 = RegressionRegime::scalar(2.0).unwrap();
        assert_eq!(gradient_transport(&[1.0], &r2).unwrap(), vec![-1.0]);
        let x = Matrix::from_rows(vec![vec![1.0, 2.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r3 = RegressionRegime::new(x, vec![1.0, 2.0, 3.0], 0.1, vec![0.0, 0.0], 10.0, 1.0).unwrap();
        let w = r3.minimizer().unwrap();
        let moved = gradient_transport(&w, &r3).unwrap();
        assert!(linalg::dist_sq(&w, &moved).unwrap() < 1e-20);
    }

    #[test]
    fn toy_certificates() {
        let r = RegressionRegime::scalar(0.5).unwrap();
        assert!(toy_admissible(&[0.5], &r, None).unwrap().admissible);
        let r = RegressionRegime::scalar(0.1).unwrap();
        let cert = toy_admissible(&[2.0], &r, None).unwrap();
        assert!(cert.has(FailureReason::ProtectedViolated));
        assert_eq!(cert.cost, Cost::Infinite);
    }

    #[test]
    fn toy_cost_uses_minimizers() {
        let r0 = RegressionRegime::scalar(0.5).unwrap();
        let r1 = RegressionRegime::new(Matrix::identity(1), vec![0.5], 0.5, vec![0.0], 1.0, 1.0).unwrap();
        let cert = toy_admissible(&[0.5], &r0, Some(&r1)).unwrap();
        assert_eq!(cert.cost, Cost::Finite(0.25));
        let singular = RegressionRegime::new(Matrix::zeros(1, 1), vec![0.0], 0.5, vec![0.0], 1.0, 1.0).unwrap();
        assert_eq!(toy_admissible(&[0.5], &r0, Some(&singular)), Err(Error::SingularDesign));
    }

    #[test]
    fn obstruction_examples() {
        let rep = scalarization_obstruction(2.0, 1.0, 2.0, &[0.5, 1.0, 3.0]).unwrap();
        assert!(rep.divergence);
        assert_eq!((rep.penalty_argmax, rep.penalty_value), (3.0, 4.0));
        assert_eq!((rep.gated_argmax, rep.gated_value), (Some(1.0), Some(2.0)));
        let rep = scalarization_obstruction(2.0, 1.0, 6.5, &[0.5, 1.0, 3.0]).unwrap();
        assert!(!rep.divergence);
        let rep = scalarization_obstruction(2.0, 1.0, 0.1, &[0.5, 1.0]).unwrap();
        assert!(!rep.divergence);
        assert!(scalarization_obstruction(2.0, 1.0, 2.0, &[]).is_err());
    }

    #[test]
    fn covering_examples() {
        let c = CapacityCheck::witness(2, 2.0, 1.0).unwrap();
        assert!((covering_bound(&c).unwrap() - 2.0 * 5f64.ln()).abs() < 1e-12);
        let c = CapacityCheck::new(0, 2.0, 1.0, 1.0, 0.7).unwrap();
        assert_eq!(covering_bound(&c).unwrap(), 0.7);
        assert!(matches!(
            CapacityCheck::new(1, 1.0, 2.0, 1.0, 0.0),
            Err(Error::InvalidResolution(_))
        ));
        assert!(CapacityCheck::new(1, 1.0, 0.0, 1.0, 0.0).is_err());
    }
}
