//! Discounted infinite-horizon regret: the Regret–Bellman operator on the
//! augmented space, its certified fixed point, the stationary policy read off
//! the fixed point, and the `k`-stage prefix recursion giving the optimal
//! regret.

use serde::{Deserialize, Serialize};

use crate::augmented::{AugmentedSpace, AugmentedState};
use crate::error::{Error, Result};
use crate::kernel::RegretKernel;
use crate::prefix::{prefix_backward, PrefixTables};
use crate::scalar::{max_of, min_of, sup_distance, Scalar};
use crate::system::System;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    #[default]
    Synchronous,
    /// Gauss–Seidel sweeps followed by a synchronous verification sweep.
    InPlace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingRule {
    /// Stop once `||J_{n+1} - J_n|| <= eps (1 - gamma) / gamma`.
    #[default]
    Residual,
    /// Stop once the two-sided bounds
    /// `TJ + gamma/(1-gamma) [min(TJ-J), max(TJ-J)]` on the fixed point are
    /// within `2 eps`, and return their midpoint. Needs only the span of the
    /// increment to shrink, which is usually much faster than the sup-norm.
    SpanBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub k: usize,
    /// Target sup-norm distance of the returned table from the fixed point.
    pub epsilon: T,
    pub max_sweeps: usize,
    pub sweep_mode: SweepMode,
    pub stopping: StoppingRule,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(k: usize, epsilon: T) -> Self {
        SolverConfig {
            k,
            epsilon,
            max_sweeps: 1_000_000,
            sweep_mode: SweepMode::Synchronous,
            stopping: StoppingRule::Residual,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::ZeroLookahead);
        }
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite_value() {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dense value function over the augmented space.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<T> {
    space: AugmentedSpace,
    gamma: T,
    values: Vec<T>,
    /// Certified sup-norm distance to the fixed point, when known.
    pub error_bound: Option<T>,
}

impl<T: Scalar> ValueTable<T> {
    pub fn zeros(system: &System<T>, k: usize) -> Result<Self> {
        let space = AugmentedSpace::for_system(system, k)?;
        Ok(Self::from_parts(space, system.gamma(), vec![T::zero(); space.len()]))
    }

    pub fn from_values(system: &System<T>, k: usize, values: Vec<T>) -> Result<Self> {
        let space = AugmentedSpace::for_system(system, k)?;
        if values.len() != space.len() {
            return Err(Error::TableSize {
                field: "value table".into(),
                expected: space.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite_value()) {
            return Err(Error::InvalidParameter(format!("value table entry {i} is not finite")));
        }
        Ok(Self::from_parts(space, system.gamma(), values))
    }

    pub(crate) fn from_parts(space: AugmentedSpace, gamma: T, values: Vec<T>) -> Self {
        ValueTable {
            space,
            gamma,
            values,
            error_bound: None,
        }
    }

    pub fn k(&self) -> usize {
        self.space.k()
    }
    pub fn gamma(&self) -> T {
        self.gamma
    }
    pub fn space(&self) -> &AugmentedSpace {
        &self.space
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn into_values(self) -> Vec<T> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: &AugmentedState) -> Result<T> {
        Ok(self.values[self.space.index(x)?])
    }

    fn check_against(&self, system: &System<T>) -> Result<()> {
        let expected = AugmentedSpace::for_system(system, self.k())?;
        if expected != self.space {
            return Err(Error::TableSize {
                field: "value table".into(),
                expected: expected.len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Stationary selector `x -> a*(x)` for stages `t >= k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationaryPolicy {
    k: usize,
    actions: Vec<usize>,
}

impl StationaryPolicy {
    pub fn from_actions<T: Scalar>(system: &System<T>, k: usize, actions: Vec<usize>) -> Result<Self> {
        let space = AugmentedSpace::for_system(system, k)?;
        if actions.len() != space.len() {
            return Err(Error::TableSize {
                field: "policy".into(),
                expected: space.len(),
                found: actions.len(),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= system.num_actions()) {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                size: system.num_actions(),
            });
        }
        Ok(StationaryPolicy { k, actions })
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
    #[inline]
    pub fn action_at(&self, index: usize) -> usize {
        self.actions[index]
    }
}

/// Result of [`solve_fixed_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint<T> {
    pub table: ValueTable<T>,
    pub sweeps: usize,
    /// Sup-norm increment of the last synchronous sweep.
    pub residual: T,
    /// Certified `||table - J*||`. Valid even when `converged` is false.
    pub error_bound: T,
    /// Whether `error_bound <= epsilon` was reached within `max_sweeps`.
    pub converged: bool,
}

pub(crate) fn discounted_kernel<T: Scalar>(system: &System<T>, k: usize) -> Result<RegretKernel<'_, T>> {
    let space = AugmentedSpace::for_system(system, k)?;
    let gamma = system.gamma();
    Ok(RegretKernel::new(system, space, gamma.pow_u(k), gamma))
}

/// One application of the Regret–Bellman operator. Returns `(TJ, ||TJ - J||)`.
pub fn apply_regret_bellman<T: Scalar>(
    system: &System<T>,
    table: &ValueTable<T>,
) -> Result<(ValueTable<T>, T)> {
    table.check_against(system)?;
    if let Some(i) = table.values.iter().position(|v| !v.is_finite_value()) {
        return Err(Error::InvalidParameter(format!("value table entry {i} is not finite")));
    }
    let kernel = discounted_kernel(system, table.k())?;
    let mut out = vec![T::zero(); table.len()];
    kernel.backup(&table.values, &mut out, None);
    let residual = sup_distance(&out, &table.values);
    Ok((ValueTable::from_parts(table.space, system.gamma(), out), residual))
}

/// Value iteration from `J = 0` until the configured stopping rule certifies
/// `||J - J*|| <= epsilon`.
pub fn solve_fixed_point<T: Scalar>(system: &System<T>, config: &SolverConfig<T>) -> Result<FixedPoint<T>> {
    config.validate()?;
    let kernel = discounted_kernel(system, config.k)?;
    let space = *kernel.space();
    let gamma = system.gamma();
    let one = T::one();
    let threshold = config.epsilon * (one - gamma) / gamma;
    let mut current = vec![T::zero(); space.len()];
    let mut next = vec![T::zero(); space.len()];
    let mut sweeps = 0;
    let mut residual = T::zero();
    let mut bound = T::zero();

    let finish = |mut values: Vec<T>, sweeps, residual, bound: T, converged| {
        for v in values.iter_mut() {
            // keeps -0.0 out of serialized tables
            if *v == T::zero() {
                *v = T::zero();
            }
        }
        let mut table = ValueTable::from_parts(space, gamma, values);
        table.error_bound = Some(bound);
        FixedPoint {
            table,
            sweeps,
            residual,
            error_bound: bound,
            converged,
        }
    };

    while sweeps < config.max_sweeps {
        if config.sweep_mode == SweepMode::InPlace {
            let mut delta = T::zero();
            for i in 0..space.len() {
                let (v, _) = kernel.backup_at(i, &current);
                delta = max_of(delta, (v - current[i]).abs());
                current[i] = v;
            }
            sweeps += 1;
            if delta > threshold && sweeps < config.max_sweeps {
                continue;
            }
        }
        kernel.backup(&current, &mut next, None);
        sweeps += 1;
        residual = sup_distance(&next, &current);
        bound = gamma * residual / (one - gamma);
        match config.stopping {
            StoppingRule::Residual => {
                if residual <= threshold {
                    return Ok(finish(next, sweeps, residual, bound, true));
                }
            }
            StoppingRule::SpanBound => {
                let (lo, hi) = next.iter().zip(&current).fold(
                    (next[0] - current[0], next[0] - current[0]),
                    |(lo, hi), (&a, &b)| (min_of(lo, a - b), max_of(hi, a - b)),
                );
                let scale = gamma / (one - gamma);
                let two = one + one;
                let span_bound = scale * (hi - lo) / two;
                if span_bound <= config.epsilon {
                    let shift = scale * (lo + hi) / two;
                    next.iter_mut().for_each(|v| *v = *v + shift);
                    return Ok(finish(next, sweeps, residual, span_bound, true));
                }
            }
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(finish(current, sweeps, residual, bound, false))
}

/// Minimizing causal action of the operator at every augmented state, ties
/// to the lowest index.
pub fn extract_stationary_policy<T: Scalar>(
    system: &System<T>,
    table: &ValueTable<T>,
) -> Result<StationaryPolicy> {
    table.check_against(system)?;
    let kernel = discounted_kernel(system, table.k())?;
    let mut scratch = vec![T::zero(); table.len()];
    let mut actions = vec![0usize; table.len()];
    kernel.backup(&table.values, &mut scratch, Some(&mut actions));
    Ok(StationaryPolicy {
        k: table.k(),
        actions,
    })
}

/// Prefix recursion terminated by `G_k(s, w) = J((s, s0, w))`, with stage
/// weights `gamma^t`. Returns the tables and `G_0(s0)`.
pub fn prefix_dp<T: Scalar>(
    system: &System<T>,
    table: &ValueTable<T>,
    s0: usize,
) -> Result<(PrefixTables<T>, T)> {
    table.check_against(system)?;
    system.check_state(s0)?;
    let space = table.space;
    let nwin = space.window_count();
    let mut terminal = Vec::with_capacity(system.num_states() * nwin);
    for s in 0..system.num_states() {
        for code in 0..nwin {
            terminal.push(table.values[space.raw_index(s, s0, code)]);
        }
    }
    let gamma = system.gamma();
    let prefix = prefix_backward(system, table.k(), s0, terminal, |t| gamma.pow_u(t));
    let regret = prefix.regret();
    Ok((prefix, regret))
}

/// Fixed point plus stationary policy for one `(system, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretSolution<T> {
    pub fixed_point: FixedPoint<T>,
    pub policy: StationaryPolicy,
}

impl<T: Scalar> RegretSolution<T> {
    pub fn k(&self) -> usize {
        self.policy.k
    }
    pub fn table(&self) -> &ValueTable<T> {
        &self.fixed_point.table
    }
}

pub fn solve_regret<T: Scalar>(system: &System<T>, config: &SolverConfig<T>) -> Result<RegretSolution<T>> {
    let fixed_point = solve_fixed_point(system, config)?;
    let policy = extract_stationary_policy(system, &fixed_point.table)?;
    Ok(RegretSolution { fixed_point, policy })
}
