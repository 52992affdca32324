//! Small reference systems used by the verification suites and tests.

use rand::Rng;

use crate::scalar::Scalar;
use crate::system::{System, SystemSpec};

/// One state, two actions, two disturbances; reward 1 when the action
/// matches the disturbance and 0 otherwise.
pub fn matching_pennies(gamma: f64) -> System<f64> {
    matching_pennies_in(gamma)
}

pub fn matching_pennies_in<T: Scalar>(gamma: f64) -> System<T> {
    let spec = SystemSpec::from_fn(1, 2, 2, T::of(gamma), |_, a, w| {
        (0, if a == w { T::one() } else { T::zero() })
    });
    System::new(spec).expect("matching pennies is valid")
}

/// Every reward is zero; the next state cycles through `s + a + w`.
pub fn zero_reward_system(
    num_states: usize,
    num_actions: usize,
    num_disturbances: usize,
    gamma: f64,
) -> System<f64> {
    let spec = SystemSpec::from_fn(num_states, num_actions, num_disturbances, gamma, |s, a, w| {
        ((s + a + w) % num_states, 0.0)
    });
    System::new(spec).expect("zero-reward system is valid")
}

/// Uniform random transitions and rewards in `[-1, 1]`.
pub fn random_system<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    num_disturbances: usize,
    gamma: f64,
) -> System<f64> {
    let spec = SystemSpec::from_fn(num_states, num_actions, num_disturbances, gamma, |_, _, _| {
        (rng.gen_range(0..num_states), rng.gen_range(-1.0..=1.0))
    });
    System::new(spec).expect("random system is valid")
}

/// Random system whose rewards are integers in `[-4, 4]`, usable with exact
/// scalar types.
pub fn random_integer_system<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    num_disturbances: usize,
    gamma: T,
) -> System<T> {
    let spec = SystemSpec::from_fn(num_states, num_actions, num_disturbances, gamma, |_, _, _| {
        let r: i32 = rng.gen_range(-4..=4);
        (rng.gen_range(0..num_states), T::of(r as f64))
    });
    System::new(spec).expect("random system is valid")
}
