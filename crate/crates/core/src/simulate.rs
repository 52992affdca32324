use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::system::System;

/// One closed-loop run. `states` has one more entry than the other vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub disturbances: Vec<usize>,
    pub rewards: Vec<T>,
    /// `sum_t weight^t r_t`.
    pub discounted_return: T,
    /// `sum_t r_t`.
    pub total_return: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Recomputes every transition and reward against `system`.
    pub fn is_consistent(&self, system: &System<T>) -> bool {
        (0..self.len()).all(|t| {
            let (s, a, w) = (self.states[t], self.actions[t], self.disturbances[t]);
            system.next_state(s, a, w) == self.states[t + 1] && system.reward(s, a, w) == self.rewards[t]
        })
    }
}

/// Runs `controller` from `s0` against the disturbance sequence `path`,
/// discounting by `weight` (pass `1` for the plain sum).
pub fn rollout<T: Scalar, C: Controller + ?Sized>(
    system: &System<T>,
    controller: &mut C,
    s0: usize,
    path: &[usize],
    weight: T,
) -> Result<Trajectory<T>> {
    system.check_state(s0)?;
    if let Some(&w) = path.iter().find(|&&w| w >= system.num_disturbances()) {
        return Err(Error::IndexOutOfRange {
            what: "disturbance",
            index: w,
            size: system.num_disturbances(),
        });
    }
    controller.reset(s0)?;
    let n = path.len();
    let mut traj = Trajectory {
        states: Vec::with_capacity(n + 1),
        actions: Vec::with_capacity(n),
        disturbances: path.to_vec(),
        rewards: Vec::with_capacity(n),
        discounted_return: T::zero(),
        total_return: T::zero(),
    };
    let mut s = s0;
    let mut discount = T::one();
    let mut prev = None;
    traj.states.push(s);
    for &w in path {
        let a = controller.step(prev)?;
        system.check_action(a)?;
        let r = system.reward(s, a, w);
        traj.actions.push(a);
        traj.rewards.push(r);
        traj.total_return = traj.total_return + r;
        traj.discounted_return = traj.discounted_return + discount * r;
        discount = discount * weight;
        s = system.next_state(s, a, w);
        traj.states.push(s);
        prev = Some(w);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::OpenLoopController;
    use crate::fixtures::{random_system, zero_reward_system};
    use crate::system::SystemSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_reward_rollout() {
        let sys = zero_reward_system(3, 2, 2, 0.9);
        let mut c = OpenLoopController::new(vec![1, 0, 1]);
        let tr = rollout(&sys, &mut c, 0, &[0, 1, 1], 0.9).unwrap();
        assert_eq!(tr.total_return, 0.0);
        assert!(tr.is_consistent(&sys));
    }

    #[test]
    fn forced_return_is_direct_sum() {
        let spec = SystemSpec::from_fn(2, 1, 2, 0.5, |s, _, w| ((s + w) % 2, (s * 2 + w) as f64));
        let sys = System::new(spec).unwrap();
        let path = [1, 1, 0, 1];
        let mut c = OpenLoopController::new(vec![0; 4]);
        let tr = rollout(&sys, &mut c, 0, &path, 0.5).unwrap();
        // States 0,1,0,0,1; rewards 1,3,0,1.
        assert_eq!(tr.states, vec![0, 1, 0, 0, 1]);
        assert_eq!(tr.total_return, 5.0);
        assert_eq!(tr.discounted_return, 1.0 + 1.5 + 0.0 + 0.125);
    }

    #[test]
    fn rejects_out_of_range_disturbance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = random_system(&mut rng, 2, 2, 2, 0.5);
        let mut c = OpenLoopController::new(vec![0; 3]);
        assert!(rollout(&sys, &mut c, 0, &[0, 2, 1], 1.0).is_err());
    }
}
