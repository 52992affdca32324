//! Baseline state-feedback policies: expected-reward MDP, worst-case robust,
//! and the clairvoyant optimum on a fixed path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sup_distance, Scalar};
use crate::system::System;

/// Probability vector over the disturbance alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceDistribution<T> {
    probabilities: Vec<T>,
}

impl<T: Scalar> DisturbanceDistribution<T> {
    pub fn new(probabilities: Vec<T>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        let mut total = T::zero();
        for (w, &p) in probabilities.iter().enumerate() {
            if !p.is_finite_value() || p < T::zero() {
                return Err(Error::InvalidDistribution(format!(
                    "probability of disturbance {w} is {p:?}"
                )));
            }
            total = total + p;
        }
        if (total - T::one()).abs() > T::sum_tolerance() {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total:?}, not 1"
            )));
        }
        Ok(DisturbanceDistribution { probabilities })
    }

    pub fn point_mass(num_disturbances: usize, w: usize) -> Result<Self> {
        if w >= num_disturbances {
            return Err(Error::IndexOutOfRange {
                what: "disturbance",
                index: w,
                size: num_disturbances,
            });
        }
        let mut p = vec![T::zero(); num_disturbances];
        p[w] = T::one();
        Ok(DisturbanceDistribution { probabilities: p })
    }

    pub fn uniform(num_disturbances: usize) -> Result<Self> {
        if num_disturbances == 0 {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        let p = T::one() / T::of_usize(num_disturbances);
        Ok(DisturbanceDistribution {
            probabilities: vec![p; num_disturbances],
        })
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    fn check_against(&self, system: &System<T>) -> Result<()> {
        if self.len() != system.num_disturbances() {
            return Err(Error::TableSize {
                field: "distribution".into(),
                expected: system.num_disturbances(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// Parses `{"probabilities": [...]}`.
pub fn load_distribution(text: &str) -> Result<DisturbanceDistribution<f64>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct File {
        probabilities: Vec<f64>,
    }
    let file: File = serde_json::from_str(text).map_err(Error::from_json)?;
    DisturbanceDistribution::new(file.probabilities)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig<T> {
    pub epsilon: T,
    pub max_sweeps: usize,
}

impl<T: Scalar> BaselineConfig<T> {
    pub fn new(epsilon: T) -> Self {
        BaselineConfig {
            epsilon,
            max_sweeps: 1_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite_value() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {:?}",
                self.epsilon
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Memoryless policy with its value vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePolicy<T> {
    pub actions: Vec<usize>,
    pub values: Vec<T>,
    pub sweeps: usize,
    pub converged: bool,
    /// Certified `||V - V*||` bound.
    pub error_bound: T,
}

fn value_iteration<T: Scalar>(
    system: &System<T>,
    config: &BaselineConfig<T>,
    q: impl Fn(usize, usize, &[T]) -> T,
) -> Result<StatePolicy<T>> {
    config.validate()?;
    let (ns, na) = (system.num_states(), system.num_actions());
    let gamma = system.gamma();
    let threshold = config.epsilon * (T::one() - gamma) / gamma;
    let greedy = |values: &[T], out: &mut [T], actions: &mut [usize]| {
        for s in 0..ns {
            let mut best = q(s, 0, values);
            let mut arg = 0;
            for a in 1..na {
                let v = q(s, a, values);
                if v > best {
                    best = v;
                    arg = a;
                }
            }
            out[s] = best;
            actions[s] = arg;
        }
    };
    let mut values = vec![T::zero(); ns];
    let mut next = vec![T::zero(); ns];
    let mut actions = vec![0usize; ns];
    let mut residual = T::zero();
    for sweep in 1..=config.max_sweeps {
        greedy(&values, &mut next, &mut actions);
        residual = sup_distance(&values, &next);
        std::mem::swap(&mut values, &mut next);
        if residual <= threshold {
            return Ok(StatePolicy {
                actions,
                values,
                sweeps: sweep,
                converged: true,
                error_bound: gamma * residual / (T::one() - gamma),
            });
        }
    }
    Ok(StatePolicy {
        actions,
        values,
        sweeps: config.max_sweeps,
        converged: false,
        error_bound: gamma * residual / (T::one() - gamma),
    })
}

/// `V(s) = max_a sum_w P(w) [r(s, a, w) + gamma V(f(s, a, w))]`.
pub fn mdp_value_iteration<T: Scalar>(
    system: &System<T>,
    dist: &DisturbanceDistribution<T>,
    config: &BaselineConfig<T>,
) -> Result<StatePolicy<T>> {
    dist.check_against(system)?;
    let gamma = system.gamma();
    let p = dist.probabilities();
    value_iteration(system, config, |s, a, values| {
        let mut total = T::zero();
        for (w, &pw) in p.iter().enumerate() {
            if pw != T::zero() {
                total = total + pw * (system.reward(s, a, w) + gamma * values[system.next_state(s, a, w)]);
            }
        }
        total
    })
}

/// `V(s) = max_a min_w [r(s, a, w) + gamma V(f(s, a, w))]`.
pub fn robust_value_iteration<T: Scalar>(
    system: &System<T>,
    config: &BaselineConfig<T>,
) -> Result<StatePolicy<T>> {
    let gamma = system.gamma();
    value_iteration(system, config, |s, a, values| {
        let mut worst = system.reward(s, a, 0) + gamma * values[system.next_state(s, a, 0)];
        for w in 1..system.num_disturbances() {
            let v = system.reward(s, a, w) + gamma * values[system.next_state(s, a, w)];
            if v < worst {
                worst = v;
            }
        }
        worst
    })
}

/// Value of a fixed state policy under `dist`, by iterating its evaluation
/// operator to the same tolerance.
pub fn evaluate_state_policy<T: Scalar>(
    system: &System<T>,
    dist: &DisturbanceDistribution<T>,
    actions: &[usize],
    config: &BaselineConfig<T>,
) -> Result<Vec<T>> {
    dist.check_against(system)?;
    config.validate()?;
    if actions.len() != system.num_states() {
        return Err(Error::TableSize {
            field: "state policy".into(),
            expected: system.num_states(),
            found: actions.len(),
        });
    }
    let gamma = system.gamma();
    let threshold = config.epsilon * (T::one() - gamma) / gamma;
    let p = dist.probabilities();
    let mut values = vec![T::zero(); system.num_states()];
    for _ in 0..config.max_sweeps {
        let next: Vec<T> = (0..system.num_states())
            .map(|s| {
                let a = actions[s];
                p.iter().enumerate().fold(T::zero(), |acc, (w, &pw)| {
                    acc + pw * (system.reward(s, a, w) + gamma * values[system.next_state(s, a, w)])
                })
            })
            .collect();
        let residual = sup_distance(&values, &next);
        values = next;
        if residual <= threshold {
            break;
        }
    }
    Ok(values)
}

/// Best `T`-step return on a fully known path, by backward induction over
/// `(time, state)`. Returns the value and an optimal action sequence
/// (ties to the lowest action).
pub fn clairvoyant_path_value<T: Scalar>(
    system: &System<T>,
    s0: usize,
    path: &[usize],
    discounted: bool,
) -> Result<(T, Vec<usize>)> {
    if path.is_empty() {
        return Err(Error::EmptySequence);
    }
    system.check_state(s0)?;
    for &w in path {
        system.check_disturbance(w)?;
    }
    let ns = system.num_states();
    let weight = if discounted { system.gamma() } else { T::one() };
    let horizon = path.len();
    let mut choice = vec![0usize; horizon * ns];
    let mut value = vec![T::zero(); ns];
    for t in (0..horizon).rev() {
        let w = path[t];
        let mut current = vec![T::zero(); ns];
        for s in 0..ns {
            let score = |a: usize| system.reward(s, a, w) + weight * value[system.next_state(s, a, w)];
            let mut best = score(0);
            let mut arg = 0;
            for a in 1..system.num_actions() {
                let v = score(a);
                if v > best {
                    best = v;
                    arg = a;
                }
            }
            current[s] = best;
            choice[t * ns + s] = arg;
        }
        value = current;
    }
    let mut actions = Vec::with_capacity(horizon);
    let mut s = s0;
    for (t, &w) in path.iter().enumerate() {
        let a = choice[t * ns + s];
        actions.push(a);
        s = system.next_state(s, a, w);
    }
    Ok((value[s0], actions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{matching_pennies, random_system, zero_reward_system};
    use crate::system::SystemSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> BaselineConfig<f64> {
        BaselineConfig::new(1e-9)
    }

    #[test]
    fn distribution_validation() {
        assert!(DisturbanceDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(DisturbanceDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(DisturbanceDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(DisturbanceDistribution::<f64>::point_mass(2, 2).is_err());
        assert!(load_distribution(r#"{"probabilities":[0.25,0.75]}"#).is_ok());
    }

    #[test]
    fn single_action_mdp_value_is_forced_return() {
        // One action, two states swapped every step, rewards 1 and 3.
        let spec = SystemSpec::from_fn(2, 1, 1, 0.5, |s, _, _| (1 - s, if s == 0 { 1.0 } else { 3.0 }));
        let sys = System::new(spec).unwrap();
        let dist = DisturbanceDistribution::new(vec![1.0]).unwrap();
        let pol = mdp_value_iteration(&sys, &dist, &cfg()).unwrap();
        // V0 = 1 + 0.5 V1, V1 = 3 + 0.5 V0.
        assert!((pol.values[0] - 10.0 / 3.0).abs() < 1e-8);
        assert!((pol.values[1] - 14.0 / 3.0).abs() < 1e-8);
        assert_eq!(pol.actions, vec![0, 0]);
    }

    #[test]
    fn point_mass_mdp_matches_robust_on_singleton_alphabet() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = random_system(&mut rng, 4, 3, 3, 0.8);
        let restricted = System::new(SystemSpec::from_fn(4, 3, 1, 0.8, |s, a, _| {
            (sys.next_state(s, a, 2), sys.reward(s, a, 2))
        }))
        .unwrap();
        let mdp = mdp_value_iteration(&sys, &DisturbanceDistribution::point_mass(3, 2).unwrap(), &cfg()).unwrap();
        let robust = robust_value_iteration(&restricted, &cfg()).unwrap();
        assert_eq!(mdp.actions, robust.actions);
        assert!(sup_distance(&mdp.values, &robust.values) < 1e-12);
    }

    #[test]
    fn robust_matching_pennies_is_zero() {
        let pol = robust_value_iteration(&matching_pennies(0.9), &cfg()).unwrap();
        assert_eq!(pol.values, vec![0.0]);
        assert_eq!(pol.actions, vec![0]);
    }

    #[test]
    fn mdp_dominates_random_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sys = random_system(&mut rng, 5, 3, 4, 0.9);
        let dist = DisturbanceDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let c = BaselineConfig::new(1e-8);
        let opt = mdp_value_iteration(&sys, &dist, &c).unwrap();
        for _ in 0..10 {
            let actions: Vec<usize> = (0..5).map(|_| rng.gen_range(0..3)).collect();
            let v = evaluate_state_policy(&sys, &dist, &actions, &c).unwrap();
            for s in 0..5 {
                assert!(opt.values[s] >= v[s] - 2e-8);
            }
        }
    }

    #[test]
    fn clairvoyant_examples() {
        let mp = matching_pennies(0.5);
        let (v, actions) = clairvoyant_path_value(&mp, 0, &[1, 0, 1], false).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(actions, vec![1, 0, 1]);
        let zero = zero_reward_system(3, 2, 2, 0.9);
        assert_eq!(clairvoyant_path_value(&zero, 1, &[0, 1], true).unwrap().0, 0.0);
        assert!(matches!(clairvoyant_path_value(&mp, 0, &[], false), Err(Error::EmptySequence)));
    }

    #[test]
    fn clairvoyant_discounting() {
        let mp = matching_pennies(0.5);
        let (v, _) = clairvoyant_path_value(&mp, 0, &[0, 0, 0], true).unwrap();
        assert_eq!(v, 1.75);
    }
}
