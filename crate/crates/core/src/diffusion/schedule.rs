use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};
use crate::pianoroll::LatentRoll;
use crate::scalar::Scalar;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_FIRST: f64 = 8.5e-4;
pub const DEFAULT_BETA_LAST: f64 = 1.2e-2;

/// How the backward noise scale between consecutive steps is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// `η·√((1−ᾱ_prev)/(1−ᾱ_t))·√(1−ᾱ_t/ᾱ_prev)`.
    #[default]
    Common,
    /// `η·√(β_{t−1}/β_t)·√(1−ᾱ_t/ᾱ_{t−1})` for consecutive steps, 0 at `t = 1`.
    /// Non-consecutive jumps fall back to [`SigmaRule::Common`].
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_first: f64,
    pub beta_last: f64,
    pub eta: f64,
    pub sigma_rule: SigmaRule,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            beta_first: DEFAULT_BETA_FIRST,
            beta_last: DEFAULT_BETA_LAST,
            eta: 1.0,
            sigma_rule: SigmaRule::Common,
        }
    }
}

impl ScheduleConfig {
    pub fn build<S: Scalar>(&self) -> Result<NoiseSchedule<S>> {
        let mut sched = linear_schedule(self.steps, self.beta_first, self.beta_last, self.eta)?;
        sched.set_sigma_rule(self.sigma_rule);
        Ok(sched)
    }
}

/// Variance schedule indexed by `t ∈ [1, T]`; `ᾱ_0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<S = f64> {
    betas: Vec<S>,
    alpha_bars: Vec<S>,
    sigmas: Vec<S>,
    eta: S,
    rule: SigmaRule,
}

/// Linearly spaced β from `beta_first` to `beta_last` over `steps` steps.
pub fn linear_schedule<S: Scalar>(steps: usize, beta_first: f64, beta_last: f64, eta: f64) -> Result<NoiseSchedule<S>> {
    if steps == 0 {
        return Err(FtgError::Schedule("need at least one step".into()));
    }
    if !(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0) {
        return Err(FtgError::Schedule(format!("need 0 < beta_first <= beta_last < 1, got {beta_first}, {beta_last}")));
    }
    let betas = (0..steps)
        .map(|i| {
            let frac = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
            S::lit(beta_first + (beta_last - beta_first) * frac)
        })
        .collect();
    NoiseSchedule::from_betas(betas, eta)
}

impl<S: Scalar> NoiseSchedule<S> {
    /// Builds a schedule from explicit β values. Values in `[0, 1)` are accepted
    /// so the `β = 0` limit can be represented.
    pub fn from_betas(betas: Vec<S>, eta: f64) -> Result<Self> {
        if betas.is_empty() {
            return Err(FtgError::Schedule("need at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b >= S::zero() && b < S::one())) {
            return Err(FtgError::Schedule(format!("beta {b} outside [0, 1)")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(FtgError::Schedule(format!("eta {eta} outside [0, 1]")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(S::one());
        let mut acc = S::one();
        for &b in &betas {
            acc = acc * (S::one() - b);
            alpha_bars.push(acc);
        }
        let mut sched = Self { betas, alpha_bars, sigmas: Vec::new(), eta: S::lit(eta), rule: SigmaRule::Common };
        sched.rebuild_sigmas();
        Ok(sched)
    }

    fn rebuild_sigmas(&mut self) {
        let eta = self.eta;
        self.sigmas = std::iter::once(S::zero())
            .chain((1..=self.steps()).map(|t| self.sigma_between(t, t - 1, eta)))
            .collect();
    }

    pub fn set_sigma_rule(&mut self, rule: SigmaRule) {
        self.rule = rule;
        self.rebuild_sigmas();
    }

    pub fn sigma_rule(&self) -> SigmaRule {
        self.rule
    }

    pub fn eta(&self) -> S {
        self.eta
    }

    /// `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(FtgError::StepOutOfRange { t, max: self.steps() });
        }
        Ok(())
    }

    /// `β_t` for `t ∈ [1, T]`.
    pub fn beta(&self, t: usize) -> S {
        self.betas[t - 1]
    }

    pub fn betas(&self) -> &[S] {
        &self.betas
    }

    /// `ᾱ_t` for `t ∈ [0, T]`.
    pub fn alpha_bar(&self, t: usize) -> S {
        self.alpha_bars[t]
    }

    /// `σ_t` for the consecutive step `t → t−1` at the schedule's own `η`.
    pub fn sigma(&self, t: usize) -> S {
        self.sigmas[t]
    }

    /// Backward noise scale for a jump `t → prev` (`prev < t`) at stochasticity `eta`.
    pub fn sigma_between(&self, t: usize, prev: usize, eta: S) -> S {
        if eta == S::zero() {
            return S::zero();
        }
        let a_t = self.alpha_bar(t);
        let a_prev = self.alpha_bar(prev);
        if self.rule == SigmaRule::Literal && prev + 1 == t {
            if t == 1 {
                return S::zero();
            }
            let ratio = self.beta(t - 1) / self.beta(t);
            return eta * ratio.sqrt() * (S::one() - a_t / a_prev).max(S::zero()).sqrt();
        }
        let denom = S::one() - a_t;
        if denom <= S::zero() {
            return S::zero();
        }
        let v = (S::one() - a_prev) / denom * (S::one() - a_t / a_prev);
        eta * v.max(S::zero()).sqrt()
    }
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
pub fn forward_noise<S: Scalar>(
    x0: &LatentRoll<S>,
    t: usize,
    eps: &LatentRoll<S>,
    sched: &NoiseSchedule<S>,
) -> Result<LatentRoll<S>> {
    sched.check_step(t)?;
    let a = sched.alpha_bar(t);
    let (sa, sb) = (a.sqrt(), (S::one() - a).sqrt());
    x0.zip_with(eps, |x, e| sa * x + sb * e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_step_hand_product() {
        let s = NoiseSchedule::<f64>::from_betas(vec![0.1; 4], 1.0).unwrap();
        let expect = [1.0, 0.9, 0.81, 0.729, 0.6561];
        for (t, e) in expect.iter().enumerate() {
            assert!((s.alpha_bar(t) - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_beta_limit() {
        let s = NoiseSchedule::<f64>::from_betas(vec![0.0; 5], 1.0).unwrap();
        assert!((0..=5).all(|t| s.alpha_bar(t) == 1.0));
    }

    #[test]
    fn default_endpoint_is_small() {
        let s: NoiseSchedule = linear_schedule(1000, DEFAULT_BETA_FIRST, DEFAULT_BETA_LAST, 1.0).unwrap();
        let mut reference = 1.0f64;
        for i in 0..1000 {
            reference *= 1.0 - (8.5e-4 + (1.2e-2 - 8.5e-4) * i as f64 / 999.0);
        }
        assert!((s.alpha_bar(1000) - reference).abs() < 1e-15);
        assert!(s.alpha_bar(1000) < 0.05);
    }

    #[test]
    fn bad_ranges() {
        assert!(linear_schedule::<f64>(10, 0.0, 0.1, 1.0).is_err());
        assert!(linear_schedule::<f64>(10, 0.2, 0.1, 1.0).is_err());
        assert!(linear_schedule::<f64>(10, 0.1, 1.0, 1.0).is_err());
        assert!(linear_schedule::<f64>(0, 0.1, 0.2, 1.0).is_err());
        assert!(linear_schedule::<f64>(10, 0.1, 0.2, 1.5).is_err());
    }

    #[test]
    fn sigma_rules() {
        let mut s: NoiseSchedule = linear_schedule(50, 1e-3, 2e-2, 1.0).unwrap();
        for t in 1..=50 {
            let a_t = s.alpha_bar(t);
            let a_p = s.alpha_bar(t - 1);
            let common = ((1.0 - a_p) / (1.0 - a_t) * (1.0 - a_t / a_p)).sqrt();
            assert!((s.sigma(t) - common).abs() < 1e-15);
        }
        assert_eq!(s.sigma(1), 0.0);
        s.set_sigma_rule(SigmaRule::Literal);
        assert_eq!(s.sigma(1), 0.0);
        for t in 2..=50 {
            // ratio √(β_{t−1}/β_t) times √β_t reduces to √β_{t−1}
            assert!((s.sigma(t) - s.beta(t - 1).sqrt()).abs() < 1e-12);
        }
        let eta0: NoiseSchedule = linear_schedule(50, 1e-3, 2e-2, 0.0).unwrap();
        assert!((1..=50).all(|t| eta0.sigma(t) == 0.0));
    }

    #[test]
    fn forward_noise_cases() {
        let s: NoiseSchedule = NoiseSchedule::from_betas(vec![0.1; 4], 1.0).unwrap();
        let shape = crate::pianoroll::Shape::roll(2, 3);
        let x0 = LatentRoll::from_vec(shape, (0..12).map(|i| i as f64 / 7.0).collect()).unwrap();
        let eps = LatentRoll::from_vec(shape, (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        let zero = LatentRoll::zeros(shape);
        let out = forward_noise(&x0, 3, &zero, &s).unwrap();
        for (o, x) in out.data().iter().zip(x0.data()) {
            assert_eq!(*o, 0.729f64.sqrt() * x);
        }
        let out = forward_noise(&x0, 2, &eps, &s).unwrap();
        for i in 0..12 {
            let want = 0.81f64.sqrt() * x0.data()[i] + 0.19f64.sqrt() * eps.data()[i];
            assert!((out.data()[i] - want).abs() < 1e-15);
        }
        assert!(forward_noise(&x0, 0, &eps, &s).is_err());
        assert!(forward_noise(&x0, 5, &eps, &s).is_err());
    }
}
