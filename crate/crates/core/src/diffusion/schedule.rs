use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
    Exp,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Exp => "exp",
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            "exp" => Ok(ScheduleKind::Exp),
            other => Err(Error::Param(format!("unknown schedule '{other}' (linear, cosine, exp)"))),
        }
    }
}

const BETA_MIN: f64 = 1e-4;
const BETA_MAX: f64 = 0.02;
const COSINE_OFFSET: f64 = 0.008;
const COSINE_BETA_CAP: f64 = 0.999;
/// Residual signal the linear and exp schedules must fall below at step T.
const MAX_FINAL_ALPHA_BAR: f64 = 0.01;
/// Level a rescaled schedule is solved to hit, safely under the bound.
const RESCALED_ALPHA_BAR: f64 = 0.005;

fn final_log_alpha_bar(beta: &[f64], c: f64) -> f64 {
    beta.iter().map(|b| (1.0 - (c * b).min(COSINE_BETA_CAP)).ln()).sum()
}

/// Short chains cannot destroy the signal with the standard endpoints, so
/// they are stretched by the factor that brings `abar_T` to
/// [`RESCALED_ALPHA_BAR`]. Chains that already qualify are left untouched.
fn stretch(beta: Vec<f64>) -> Vec<f64> {
    if final_log_alpha_bar(&beta, 1.0) < MAX_FINAL_ALPHA_BAR.ln() {
        return beta;
    }
    let target = RESCALED_ALPHA_BAR.ln();
    let (mut lo, mut hi) = (1.0, 2.0);
    while final_log_alpha_bar(&beta, hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if final_log_alpha_bar(&beta, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    beta.into_iter().map(|b| (hi * b).min(COSINE_BETA_CAP)).collect()
}

/// Forward-process noise levels. Steps are 1-based: `beta(1)..beta(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

pub fn make_schedule(kind: ScheduleKind, steps: usize) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::Param(format!("diffusion needs at least 2 steps, got {steps}")));
    }
    let last = (steps - 1) as f64;
    let beta: Vec<f64> = match kind {
        ScheduleKind::Linear => stretch(
            (0..steps)
                .map(|i| BETA_MIN + (BETA_MAX - BETA_MIN) * i as f64 / last)
                .collect(),
        ),
        ScheduleKind::Exp => stretch(
            (0..steps)
                .map(|i| BETA_MIN * (BETA_MAX / BETA_MIN).powf(i as f64 / last))
                .collect(),
        ),
        ScheduleKind::Cosine => {
            let f = |t: f64| ((t / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2).cos().powi(2);
            let f0 = f(0.0);
            (1..=steps)
                .map(|t| {
                    let b = 1.0 - (f(t as f64) / f0) / (f((t - 1) as f64) / f0);
                    b.clamp(0.0, COSINE_BETA_CAP)
                })
                .collect()
        }
    };
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule {
        kind,
        beta,
        alpha,
        alpha_bar,
    })
}

impl NoiseSchedule {
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Param(format!("step {t} outside [1, {}]", self.steps())));
        }
        Ok(())
    }

    /// Small JSON descriptor that rebuilds the schedule exactly.
    pub fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "kind": self.kind, "steps": self.steps() })
    }
}

/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn forward_noise(x0: &[f64], t: usize, eps: &[f64], s: &NoiseSchedule) -> Result<Vec<f64>> {
    s.check_step(t)?;
    if x0.len() != eps.len() {
        return Err(Error::shape("forward_noise", x0.len(), eps.len()));
    }
    let (a, b) = (s.alpha_bar(t).sqrt(), (1.0 - s.alpha_bar(t)).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Noise implied by a clean-signal estimate: `(x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t)`.
pub fn implied_noise(x_t: &[f64], x0_hat: &[f64], t: usize, s: &NoiseSchedule) -> Result<Vec<f64>> {
    s.check_step(t)?;
    let (a, b) = (s.alpha_bar(t).sqrt(), (1.0 - s.alpha_bar(t)).sqrt());
    Ok(x_t.iter().zip(x0_hat).map(|(x, x0)| (x - a * x0) / b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Rng;

    #[test]
    fn linear_endpoints() {
        let s = make_schedule(ScheduleKind::Linear, 500).unwrap();
        assert_eq!(s.beta(1), 1e-4);
        assert!((s.beta(500) - 0.02).abs() < 1e-17);
    }

    #[test]
    fn long_linear_chain_keeps_standard_endpoints() {
        let s = make_schedule(ScheduleKind::Linear, 500).unwrap();
        assert!(s.alpha_bar(500) < 0.01);
        let short = make_schedule(ScheduleKind::Linear, 100).unwrap();
        assert!((short.alpha_bar(100) - 0.005).abs() < 1e-9);
        assert!((short.beta(100) / short.beta(1) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn first_alpha_bar_is_one_minus_beta() {
        for kind in [ScheduleKind::Linear, ScheduleKind::Cosine, ScheduleKind::Exp] {
            let s = make_schedule(kind, 50).unwrap();
            assert_eq!(s.alpha_bar(1), 1.0 - s.beta(1));
        }
    }

    #[test]
    fn alpha_bar_is_the_running_product() {
        let s = make_schedule(ScheduleKind::Linear, 10).unwrap();
        let mut prod = 1.0;
        for t in 1..=10 {
            prod *= 1.0 - s.beta(t);
        }
        assert!((s.alpha_bar(10) - prod).abs() < 1e-15);
        // Still an evenly spaced ramp with the standard 200:1 span.
        let step = s.beta(2) - s.beta(1);
        for t in 2..=10 {
            assert!((s.beta(t) - s.beta(t - 1) - step).abs() < 1e-15);
        }
        assert!((s.beta(10) / s.beta(1) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn monotone_and_nearly_destroyed() {
        for kind in [ScheduleKind::Linear, ScheduleKind::Cosine, ScheduleKind::Exp] {
            for steps in [100, 500, 1000] {
                let s = make_schedule(kind, steps).unwrap();
                for t in 1..=steps {
                    assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0, "{kind:?} beta({t})");
                    if t > 1 {
                        assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                    }
                }
                assert!(s.alpha_bar(steps) < 0.01, "{kind:?} T={steps}: {}", s.alpha_bar(steps));
            }
        }
    }

    #[test]
    fn too_few_steps() {
        assert!(make_schedule(ScheduleKind::Linear, 1).is_err());
    }

    #[test]
    fn noiseless_branch_and_scalar_oracle() {
        let s = make_schedule(ScheduleKind::Linear, 10).unwrap();
        let x0 = [1.5, -2.0, 0.25];
        let xt = forward_noise(&x0, 3, &[0.0; 3], &s).unwrap();
        for (a, b) in xt.iter().zip(&x0) {
            assert_eq!(*a, s.alpha_bar(3).sqrt() * b);
        }
        let eps = [0.3, -0.7, 1.1];
        let xt = forward_noise(&x0, 5, &eps, &s).unwrap();
        let ab: f64 = (1..=5).map(|t| 1.0 - s.beta(t)).product();
        for k in 0..3 {
            assert!((xt[k] - (ab.sqrt() * x0[k] + (1.0 - ab).sqrt() * eps[k])).abs() < 1e-14);
        }
        assert!(forward_noise(&x0, 0, &eps, &s).is_err());
        assert!(forward_noise(&x0, 11, &eps, &s).is_err());
    }

    #[test]
    fn implied_noise_inverts_forward_noise() {
        let s = make_schedule(ScheduleKind::Linear, 500).unwrap();
        let mut rng = Rng::new(9);
        for _ in 0..1000 {
            let t = 1 + rng.below(500);
            let x0: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
            let eps: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
            let xt = forward_noise(&x0, t, &eps, &s).unwrap();
            let back = implied_noise(&xt, &x0, t, &s).unwrap();
            let err = back.iter().zip(&eps).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "t={t} err={err}");
        }
    }
}
