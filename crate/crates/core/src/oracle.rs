//! Brute-force references for the dynamic programs, usable only on tiny
//! instances.
//!
//! The game tree works on full histories: every leaf replays the whole
//! action and disturbance record from `s0` and sums raw rewards, so it shares
//! no state compression with the solvers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augmented::{aligned_regret_cost, augmented_transition, weighted_regret_cost, AugmentedState};
use crate::baseline::clairvoyant_path_value;
use crate::controller::{benchmark_response, Controller};
use crate::error::{Error, Result};
use crate::finite::FiniteValueStack;
use crate::fixtures::random_system;
use crate::scalar::Scalar;
use crate::simulate::rollout;
use crate::system::System;

/// Leaf budget for every enumeration in this module.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

fn checked_pow(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

/// Number of leaves of the history tree with `n` stages.
pub fn history_tree_leaves(num_actions: usize, num_disturbances: usize, k: usize, n: usize) -> u128 {
    checked_pow(num_actions * num_disturbances, n).saturating_mul(checked_pow(num_actions, n.saturating_sub(k)))
}

fn guard(leaves: u128) -> Result<()> {
    if leaves > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            leaves,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

struct HistoryTree<'a, T> {
    system: &'a System<T>,
    s0: usize,
    k: usize,
    stages: usize,
    causal_weight: Vec<T>,
    benchmark_weight: Vec<T>,
    finite_tail: bool,
    actions: Vec<usize>,
    disturbances: Vec<usize>,
    benchmark: Vec<usize>,
}

impl<T: Scalar> HistoryTree<'_, T> {
    fn best_block(&self, s: usize, block: &[usize]) -> T {
        let Some((&w, rest)) = block.split_first() else {
            return T::zero();
        };
        let mut best: Option<T> = None;
        for a in 0..self.system.num_actions() {
            let v = self.system.reward(s, a, w) + self.best_block(self.system.next_state(s, a, w), rest);
            if best.is_none_or(|b| v > b) {
                best = Some(v);
            }
        }
        best.expect("nonempty action alphabet")
    }

    fn leaf(&self) -> T {
        let sys = self.system;
        let mut total = T::zero();
        let mut s = self.s0;
        for t in 0..self.stages {
            let (a, w) = (self.actions[t], self.disturbances[t]);
            total = total - self.causal_weight[t] * sys.reward(s, a, w);
            s = sys.next_state(s, a, w);
        }
        let mut s = self.s0;
        for (j, &a) in self.benchmark.iter().enumerate() {
            let w = self.disturbances[j];
            total = total + self.benchmark_weight[j] * sys.reward(s, a, w);
            s = sys.next_state(s, a, w);
        }
        if self.finite_tail {
            total = total + self.best_block(s, &self.disturbances[self.benchmark.len()..]);
        }
        total
    }

    fn causal_node(&mut self, t: usize, alpha: Option<T>, mut beta: Option<T>) -> T {
        if t == self.stages {
            return self.leaf();
        }
        let mut best: Option<T> = None;
        for a in 0..self.system.num_actions() {
            self.actions.push(a);
            let v = self.adversary_node(t, alpha, beta);
            self.actions.pop();
            if best.is_none_or(|b| v < b) {
                best = Some(v);
            }
            if beta.is_none_or(|b| v < b) {
                beta = Some(v);
            }
            if let (Some(lo), Some(hi)) = (alpha, beta) {
                if hi <= lo {
                    break;
                }
            }
        }
        best.expect("nonempty action alphabet")
    }

    fn adversary_node(&mut self, t: usize, mut alpha: Option<T>, beta: Option<T>) -> T {
        let benchmark_moves = if t >= self.k { self.system.num_actions() } else { 1 };
        let mut best: Option<T> = None;
        'outer: for w in 0..self.system.num_disturbances() {
            self.disturbances.push(w);
            for b in 0..benchmark_moves {
                if t >= self.k {
                    self.benchmark.push(b);
                }
                let v = self.causal_node(t + 1, alpha, beta);
                if t >= self.k {
                    self.benchmark.pop();
                }
                if best.is_none_or(|m| v > m) {
                    best = Some(v);
                }
                if alpha.is_none_or(|m| v > m) {
                    alpha = Some(v);
                }
                if let (Some(lo), Some(hi)) = (alpha, beta) {
                    if hi <= lo {
                        self.disturbances.pop();
                        break 'outer;
                    }
                }
            }
            self.disturbances.pop();
        }
        best.expect("nonempty disturbance alphabet")
    }
}

/// Finite-horizon regret game value from `s0`, by exhaustive backward
/// induction over full histories. Each stage the causal player picks an
/// action knowing the whole past; the adversary then picks the disturbance
/// and, from stage `k` on, the benchmark action for stage `t - k`. The
/// benchmark's last `k` stages are planned on the known final block.
pub fn history_tree_regret<T: Scalar>(system: &System<T>, s0: usize, k: usize, horizon: usize) -> Result<T> {
    if k == 0 {
        return Err(Error::ZeroLookahead);
    }
    if k >= horizon {
        return Err(Error::HorizonTooShort { k, horizon });
    }
    system.check_state(s0)?;
    guard(history_tree_leaves(system.num_actions(), system.num_disturbances(), k, horizon))?;
    let mut tree = HistoryTree {
        system,
        s0,
        k,
        stages: horizon,
        causal_weight: vec![T::one(); horizon],
        benchmark_weight: vec![T::one(); horizon],
        finite_tail: true,
        actions: Vec::with_capacity(horizon),
        disturbances: Vec::with_capacity(horizon),
        benchmark: Vec::with_capacity(horizon),
    };
    Ok(tree.causal_node(0, None, None))
}

/// Discounted game truncated after `stages` stages: causal rewards weighted
/// `gamma^t`, the benchmark's stage-`j` reward weighted `gamma^j`. Returns
/// the value and the bound on its distance from the infinite-horizon value,
/// `gamma^(stages-k) (1 + gamma^k) r_max / (1 - gamma)`.
pub fn history_tree_regret_discounted<T: Scalar>(
    system: &System<T>,
    s0: usize,
    k: usize,
    stages: usize,
) -> Result<(T, T)> {
    if k == 0 {
        return Err(Error::ZeroLookahead);
    }
    if k >= stages {
        return Err(Error::HorizonTooShort { k, horizon: stages });
    }
    system.check_state(s0)?;
    guard(history_tree_leaves(system.num_actions(), system.num_disturbances(), k, stages))?;
    let gamma = system.gamma();
    let powers: Vec<T> = (0..stages).map(|t| gamma.pow_u(t)).collect();
    let mut tree = HistoryTree {
        system,
        s0,
        k,
        stages,
        causal_weight: powers.clone(),
        benchmark_weight: powers,
        finite_tail: false,
        actions: Vec::with_capacity(stages),
        disturbances: Vec::with_capacity(stages),
        benchmark: Vec::with_capacity(stages),
    };
    let value = tree.causal_node(0, None, None);
    let bound = gamma.pow_u(stages - k) * (T::one() + gamma.pow_u(k)) * system.r_max() / (T::one() - gamma);
    Ok((value, bound))
}

/// Result of [`worst_case_realized_regret`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase<T> {
    /// Largest benchmark-minus-causal return over all sequences.
    pub regret: T,
    /// First sequence (in lexicographic order) attaining it.
    pub witness: Vec<usize>,
    /// Number of sequences attaining it exactly.
    pub attained: usize,
    /// Largest clairvoyant-minus-causal return, for comparison only.
    pub clairvoyant_regret: T,
}

/// Return of the game-semantics benchmark along a fixed path: at stage
/// `t >= k` the benchmark action for `t - k` maximizes reward plus the
/// stage-`t+1` value at the realized disturbance; the last `k` stages follow
/// the best plan on the known block.
pub fn game_benchmark_return<T: Scalar>(
    system: &System<T>,
    stack: &FiniteValueStack<T>,
    s0: usize,
    causal_actions: &[usize],
    path: &[usize],
) -> Result<(T, Vec<usize>)> {
    let config = stack.config();
    let (k, horizon) = (config.k, config.horizon);
    if path.len() != horizon || causal_actions.len() != horizon {
        return Err(Error::InvalidParameter(format!("path length must equal the horizon {horizon}")));
    }
    let space = stack.space();
    let nw = system.num_disturbances();
    let mut s_c = s0;
    let mut s_l = s0;
    let mut code = 0usize;
    let mut total = T::zero();
    let mut chosen = Vec::with_capacity(horizon - k);
    for t in 0..horizon {
        let (a, w) = (causal_actions[t], path[t]);
        if t >= k {
            let a_l = benchmark_response(system, space, T::one(), stack.stage(t + 1), (s_c, s_l, code), a, w);
            let w0 = space.oldest(code);
            total = total + system.reward(s_l, a_l, w0);
            s_l = system.next_state(s_l, a_l, w0);
            code = space.shift(code, w);
            chosen.push(a_l);
        } else {
            code = code * nw + w;
        }
        s_c = system.next_state(s_c, a, w);
    }
    let (tail, tail_actions) = clairvoyant_path_value(system, s_l, &path[horizon - k..], false)?;
    chosen.extend(tail_actions);
    Ok((total + tail, chosen))
}

/// Exhausts `W^T`, running `controller` from `s0` on each sequence and
/// scoring it against the game-semantics benchmark of `stack`.
pub fn worst_case_realized_regret<T: Scalar, C: Controller + ?Sized>(
    system: &System<T>,
    stack: &FiniteValueStack<T>,
    controller: &mut C,
    s0: usize,
) -> Result<WorstCase<T>> {
    let horizon = stack.config().horizon;
    let nw = system.num_disturbances();
    guard(checked_pow(nw, horizon))?;
    let count = checked_pow(nw, horizon) as usize;
    let mut best: Option<WorstCase<T>> = None;
    for index in 0..count {
        let path = crate::augmented::decode_digits(index, horizon, nw);
        let traj = rollout(system, controller, s0, &path, T::one())?;
        let (bench, _) = game_benchmark_return(system, stack, s0, &traj.actions, &path)?;
        let regret = bench - traj.total_return;
        let (clair, _) = clairvoyant_path_value(system, s0, &path, false)?;
        let clair_regret = clair - traj.total_return;
        match &mut best {
            None => {
                best = Some(WorstCase {
                    regret,
                    witness: path,
                    attained: 1,
                    clairvoyant_regret: clair_regret,
                })
            }
            Some(b) => {
                if regret > b.regret {
                    b.regret = regret;
                    b.witness = path;
                    b.attained = 1;
                } else if regret == b.regret {
                    b.attained += 1;
                }
                if clair_regret > b.clairvoyant_regret {
                    b.clairvoyant_regret = clair_regret;
                }
            }
        }
    }
    Ok(best.expect("at least one sequence"))
}

/// Outcome of [`decomposition_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub trials: usize,
    /// Largest finite-horizon identity error.
    pub max_finite_error: f64,
    /// Largest truncated discounted identity error.
    pub max_discounted_error: f64,
    /// Trials whose error exceeded the tolerance.
    pub violations: Vec<String>,
}

impl DecompositionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Both sides of the return-difference decomposition for given action and
/// disturbance sequences. With `discounted` the stage weight is the system's
/// `gamma`, otherwise `1`. Left: `sum_t g^t (r^L_t - r^C_t)`. Right: the
/// causal prefix, aligned costs propagated through the augmented state, and
/// the benchmark tail.
pub fn decomposition_sides<T: Scalar>(
    system: &System<T>,
    s0: usize,
    k: usize,
    causal: &[usize],
    benchmark: &[usize],
    path: &[usize],
    discounted: bool,
) -> Result<(T, T)> {
    let n = path.len();
    if causal.len() != n || benchmark.len() != n {
        return Err(Error::InvalidParameter("sequence lengths differ".into()));
    }
    if k == 0 {
        return Err(Error::ZeroLookahead);
    }
    if k >= n {
        return Err(Error::HorizonTooShort { k, horizon: n });
    }
    let sys = system;
    let gamma = if discounted { system.gamma() } else { T::one() };

    let mut lhs = T::zero();
    let (mut s_c, mut s_l) = (s0, s0);
    let mut weight = T::one();
    let mut causal_rewards = Vec::with_capacity(n);
    let mut bench_rewards = Vec::with_capacity(n);
    for t in 0..n {
        let rc = sys.reward(s_c, causal[t], path[t]);
        let rl = sys.reward(s_l, benchmark[t], path[t]);
        causal_rewards.push(rc);
        bench_rewards.push(rl);
        lhs = lhs + weight * (rl - rc);
        weight = weight * gamma;
        s_c = sys.next_state(s_c, causal[t], path[t]);
        s_l = sys.next_state(s_l, benchmark[t], path[t]);
    }

    let mut rhs = T::zero();
    let mut weight = T::one();
    let mut s_c = s0;
    for t in 0..k {
        rhs = rhs - weight * causal_rewards[t];
        weight = weight * gamma;
        s_c = sys.next_state(s_c, causal[t], path[t]);
    }
    let mut x = AugmentedState {
        s_c,
        s_l: s0,
        window: path[..k].to_vec(),
    };
    let mut weight = T::one();
    for t in k..n {
        let rho = if discounted {
            aligned_regret_cost(sys, &x, causal[t], benchmark[t - k], path[t], k)?
        } else {
            weighted_regret_cost(sys, x.s_c, x.s_l, x.window[0], causal[t], benchmark[t - k], path[t], T::one())
        };
        rhs = rhs + weight * rho;
        weight = weight * gamma;
        x = augmented_transition(sys, &x, causal[t], benchmark[t - k], path[t])?;
    }
    let mut weight = gamma.pow_u(n - k);
    for reward in &bench_rewards[n - k..] {
        rhs = rhs + weight * *reward;
        weight = weight * gamma;
    }
    Ok((lhs, rhs))
}

/// Checks both decomposition identities on `trials` random systems with
/// random action and disturbance sequences of length `horizon`.
pub fn decomposition_check(k: usize, horizon: usize, trials: usize, seed: u64, tolerance: f64) -> Result<DecompositionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DecompositionReport {
        trials,
        max_finite_error: 0.0,
        max_discounted_error: 0.0,
        violations: Vec::new(),
    };
    for trial in 0..trials {
        let ns = rng.gen_range(1..=4);
        let na = rng.gen_range(1..=4);
        let nw = rng.gen_range(1..=4);
        let gamma = [0.5, 0.9, 0.995][rng.gen_range(0..3)];
        let system = random_system(&mut rng, ns, na, nw, gamma);
        let s0 = rng.gen_range(0..ns);
        let causal: Vec<usize> = (0..horizon).map(|_| rng.gen_range(0..na)).collect();
        let benchmark: Vec<usize> = (0..horizon).map(|_| rng.gen_range(0..na)).collect();
        let path: Vec<usize> = (0..horizon).map(|_| rng.gen_range(0..nw)).collect();
        for discounted in [false, true] {
            let (lhs, rhs) = decomposition_sides(&system, s0, k, &causal, &benchmark, &path, discounted)?;
            let err = (lhs - rhs).abs();
            let max = if !discounted {
                &mut report.max_finite_error
            } else {
                &mut report.max_discounted_error
            };
            *max = max.max(err);
            if err.is_nan() || err > tolerance {
                report.violations.push(format!(
                    "trial {trial}: discounted={discounted} gamma={gamma}, |S|={ns} |A|={na} |W|={nw} s0={s0} causal={causal:?} benchmark={benchmark:?} path={path:?} lhs={lhs} rhs={rhs}"
                ));
            }
        }
    }
    Ok(report)
}
