//! Seeded disturbance generators.
//!
//! All sampling uses `ChaCha8Rng::seed_from_u64(seed)`. A uniform draw is
//! `(next_u64() >> 11) * 2^-53`, which lies in `[0, 1)`. Poisson variates are
//! produced by inversion with a sequential pmf search that stops at `w_max`,
//! so mass above the cap lands on `w_max`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_rate(name: &str, lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonModel {
    pub lambda: f64,
    pub w_max: usize,
}

impl PoissonModel {
    pub fn new(lambda: f64, w_max: usize) -> Result<Self> {
        let m = PoissonModel { lambda, w_max };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate("lambda", self.lambda)
    }

    /// Probability of each value in `0..=w_max` after clamping.
    pub fn pmf(&self) -> Vec<f64> {
        truncated_poisson_pmf(self.lambda, self.w_max)
    }

    pub fn mean(&self) -> f64 {
        self.pmf().iter().enumerate().map(|(w, p)| w as f64 * p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Low,
    High,
}

impl Regime {
    fn other(self) -> Regime {
        match self {
            Regime::Low => Regime::High,
            Regime::High => Regime::Low,
        }
    }
}

/// Two-regime hidden Markov model with Poisson emissions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmmModel {
    pub lambda_low: f64,
    pub lambda_high: f64,
    /// Probability of staying in the current regime.
    pub persistence: f64,
    #[serde(default)]
    pub initial_regime: Regime,
    pub w_max: usize,
}

impl HmmModel {
    pub fn validate(&self) -> Result<()> {
        check_rate("lambda_low", self.lambda_low)?;
        check_rate("lambda_high", self.lambda_high)?;
        if !(0.0..=1.0).contains(&self.persistence) {
            return Err(Error::InvalidParameter(format!(
                "persistence must lie in [0, 1], got {}",
                self.persistence
            )));
        }
        Ok(())
    }

    fn rate(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Low => self.lambda_low,
            Regime::High => self.lambda_high,
        }
    }
}

/// `P(min(X, w_max) = w)` for `X ~ Poisson(lambda)`.
pub fn truncated_poisson_pmf(lambda: f64, w_max: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(w_max + 1);
    let mut p = (-lambda).exp();
    let mut below = 0.0;
    for w in 0..w_max {
        pmf.push(p);
        below += p;
        p *= lambda / (w + 1) as f64;
    }
    pmf.push((1.0 - below).max(0.0));
    pmf
}

struct Uniform(ChaCha8Rng);

impl Uniform {
    fn new(seed: u64) -> Self {
        Uniform(ChaCha8Rng::seed_from_u64(seed))
    }

    fn next(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn poisson(&mut self, lambda: f64, w_max: usize) -> usize {
        let u = self.next();
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let mut x = 0;
        while u >= cdf && x < w_max {
            x += 1;
            p *= lambda / x as f64;
            cdf += p;
        }
        x
    }
}

/// `n` independent clamped Poisson draws.
pub fn sample_iid(model: &PoissonModel, n: usize, seed: u64) -> Result<Vec<usize>> {
    model.validate()?;
    let mut rng = Uniform::new(seed);
    Ok((0..n).map(|_| rng.poisson(model.lambda, model.w_max)).collect())
}

/// Disturbances and the regime that emitted each. Each step emits from the
/// current regime, then keeps it with probability `persistence`.
pub fn sample_hmm(model: &HmmModel, n: usize, seed: u64) -> Result<(Vec<usize>, Vec<Regime>)> {
    model.validate()?;
    let mut rng = Uniform::new(seed);
    let mut regime = model.initial_regime;
    let mut ws = Vec::with_capacity(n);
    let mut regimes = Vec::with_capacity(n);
    for _ in 0..n {
        ws.push(rng.poisson(model.rate(regime), model.w_max));
        regimes.push(regime);
        if rng.next() >= model.persistence {
            regime = regime.other();
        }
    }
    Ok((ws, regimes))
}

/// Either generator, as it appears in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DisturbanceModel {
    Poisson(PoissonModel),
    Hmm(HmmModel),
}

impl DisturbanceModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            DisturbanceModel::Poisson(m) => m.validate(),
            DisturbanceModel::Hmm(m) => m.validate(),
        }
    }

    pub fn w_max(&self) -> usize {
        match self {
            DisturbanceModel::Poisson(m) => m.w_max,
            DisturbanceModel::Hmm(m) => m.w_max,
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        match self {
            DisturbanceModel::Poisson(m) => sample_iid(m, n, seed),
            DisturbanceModel::Hmm(m) => Ok(sample_hmm(m, n, seed)?.0),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DisturbanceModel::Poisson(_) => "poisson",
            DisturbanceModel::Hmm(_) => "hmm",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_rate_gives_zeros() {
        let ws = sample_iid(&PoissonModel::new(0.0, 10).unwrap(), 500, 3).unwrap();
        assert!(ws.iter().all(|&w| w == 0));
    }

    #[test]
    fn same_seed_same_sequence() {
        let m = PoissonModel::new(5.0, 30).unwrap();
        assert_eq!(sample_iid(&m, 1000, 42).unwrap(), sample_iid(&m, 1000, 42).unwrap());
        assert_ne!(sample_iid(&m, 1000, 42).unwrap(), sample_iid(&m, 1000, 43).unwrap());
    }

    #[test]
    fn pinned_prefix() {
        // Guards the documented generator against silent changes.
        let m = PoissonModel::new(5.0, 30).unwrap();
        assert_eq!(sample_iid(&m, 12, 0).unwrap(), vec![6, 5, 6, 2, 8, 5, 7, 9, 7, 3, 8, 7]);
        let h = HmmModel {
            lambda_low: 4.0,
            lambda_high: 7.0,
            persistence: 0.9,
            initial_regime: Regime::Low,
            w_max: 25,
        };
        let (ws, regimes) = sample_hmm(&h, 12, 1).unwrap();
        assert_eq!(ws, vec![3, 4, 3, 4, 6, 4, 2, 4, 9, 12, 6, 6]);
        assert_eq!(regimes[8..], [Regime::Low, Regime::High, Regime::High, Regime::High]);
    }

    #[test]
    fn sample_mean_matches_truncated_mean() {
        let m = PoissonModel::new(5.0, 30).unwrap();
        let ws = sample_iid(&m, 100_000, 7).unwrap();
        let mean = ws.iter().sum::<usize>() as f64 / ws.len() as f64;
        assert!((mean - m.mean()).abs() < 0.05, "{mean} vs {}", m.mean());
    }

    #[test]
    fn clamping_piles_mass_on_cap() {
        let pmf = truncated_poisson_pmf(10.0, 3);
        assert_eq!(pmf.len(), 4);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(pmf[3] > 0.98);
        let ws = sample_iid(&PoissonModel::new(10.0, 3).unwrap(), 10_000, 1).unwrap();
        let frac = ws.iter().filter(|&&w| w == 3).count() as f64 / 10_000.0;
        assert!((frac - pmf[3]).abs() < 0.01);
    }

    #[test]
    fn hmm_absorbing_regime() {
        let m = HmmModel {
            lambda_low: 2.0,
            lambda_high: 9.0,
            persistence: 1.0,
            initial_regime: Regime::Low,
            w_max: 25,
        };
        let (ws, regimes) = sample_hmm(&m, 20_000, 5).unwrap();
        assert!(regimes.iter().all(|&r| r == Regime::Low));
        let mean = ws.iter().sum::<usize>() as f64 / ws.len() as f64;
        assert!((mean - 2.0).abs() < 0.05);
    }

    #[test]
    fn hmm_equal_rates_match_iid_distribution() {
        let m = HmmModel {
            lambda_low: 4.0,
            lambda_high: 4.0,
            persistence: 0.5,
            initial_regime: Regime::High,
            w_max: 12,
        };
        let (ws, _) = sample_hmm(&m, 50_000, 9).unwrap();
        let pmf = truncated_poisson_pmf(4.0, 12);
        for (w, p) in pmf.iter().enumerate() {
            let f = ws.iter().filter(|&&x| x == w).count() as f64 / ws.len() as f64;
            assert!((f - p).abs() < 0.01, "w={w}");
        }
    }

    #[test]
    fn hmm_persistence_and_occupancy() {
        let m = HmmModel {
            lambda_low: 4.0,
            lambda_high: 7.0,
            persistence: 0.9,
            initial_regime: Regime::Low,
            w_max: 25,
        };
        let n = 100_000;
        let (_, regimes) = sample_hmm(&m, n, 2024).unwrap();
        let stays = regimes.windows(2).filter(|p| p[0] == p[1]).count() as f64 / (n - 1) as f64;
        assert!((stays - 0.9).abs() < 0.01, "{stays}");
        let low = regimes.iter().filter(|&&r| r == Regime::Low).count() as f64 / n as f64;
        assert!((low - 0.5).abs() < 0.02, "{low}");
    }

    #[test]
    fn model_descriptor_json() {
        let m: DisturbanceModel =
            serde_json::from_str(r#"{"kind":"hmm","lambda_low":4,"lambda_high":7,"persistence":0.9,"w_max":25}"#)
                .unwrap();
        assert_eq!(m.kind(), "hmm");
        assert_eq!(m.w_max(), 25);
        assert!(PoissonModel::new(-1.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn samples_stay_in_range(lambda in 0.0f64..40.0, w_max in 0usize..30, seed: u64) {
            let ws = sample_iid(&PoissonModel::new(lambda, w_max).unwrap(), 200, seed).unwrap();
            prop_assert!(ws.iter().all(|&w| w <= w_max));
        }
    }
}
