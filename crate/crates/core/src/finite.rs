//! Finite-horizon regret (`gamma = 1`): tail value of the benchmark's last
//! `k` rewards, backward regret stages `J_T..J_k`, and the prefix recursion
//! down to `G_0(s0)`.

use crate::augmented::AugmentedSpace;
use crate::discounted::ValueTable;
use crate::error::{Error, Result};
use crate::kernel::RegretKernel;
use crate::prefix::{prefix_backward, PrefixTables};
use crate::scalar::{max_of, Scalar};
use crate::system::System;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteSolverConfig {
    pub k: usize,
    pub horizon: usize,
}

impl FiniteSolverConfig {
    pub fn new(k: usize, horizon: usize) -> Result<Self> {
        let cfg = FiniteSolverConfig { k, horizon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::ZeroLookahead);
        }
        if self.k >= self.horizon {
            return Err(Error::HorizonTooShort {
                k: self.k,
                horizon: self.horizon,
            });
        }
        Ok(())
    }
}

/// `Psi_k(s, w_0..w_{k-1})`: best undiscounted `k`-step return from `s` on a
/// fully known disturbance block. Indexed `s * |W|^k + code`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailTable<T> {
    k: usize,
    window_count: usize,
    values: Vec<T>,
}

impl<T: Scalar> TailTable<T> {
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    #[inline]
    pub fn value_by_code(&self, s: usize, code: usize) -> T {
        self.values[s * self.window_count + code]
    }
}

pub fn tail_value<T: Scalar>(system: &System<T>, k: usize) -> Result<TailTable<T>> {
    let space = AugmentedSpace::for_system(system, k)?;
    let (ns, na) = (system.num_states(), system.num_actions());
    let nwin = space.window_count();
    let mut values = vec![T::zero(); ns * nwin];
    let mut to_go = vec![T::zero(); ns];
    let mut scratch = vec![T::zero(); ns];
    for code in 0..nwin {
        let block = space.decode_window(code);
        to_go.iter_mut().for_each(|v| *v = T::zero());
        for &w in block.iter().rev() {
            for (s, slot) in scratch.iter_mut().enumerate() {
                let mut best = system.reward(s, 0, w) + to_go[system.next_state(s, 0, w)];
                for a in 1..na {
                    best = max_of(best, system.reward(s, a, w) + to_go[system.next_state(s, a, w)]);
                }
                *slot = best;
            }
            std::mem::swap(&mut to_go, &mut scratch);
        }
        for s in 0..ns {
            values[s * nwin + code] = to_go[s];
        }
    }
    Ok(TailTable {
        k,
        window_count: nwin,
        values,
    })
}

/// Stage tables `J_t` for `t = k..=T` and selectors for `t = k..T-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteValueStack<T> {
    config: FiniteSolverConfig,
    tail: TailTable<T>,
    stages: Vec<Vec<T>>,
    selectors: Vec<Vec<usize>>,
    space: AugmentedSpace,
}

impl<T: Scalar> FiniteValueStack<T> {
    pub fn config(&self) -> FiniteSolverConfig {
        self.config
    }
    pub fn space(&self) -> &AugmentedSpace {
        &self.space
    }
    pub fn tail(&self) -> &TailTable<T> {
        &self.tail
    }

    /// `J_t` for `k <= t <= T`.
    pub fn stage(&self, t: usize) -> &[T] {
        &self.stages[t - self.config.k]
    }

    /// `J_t` wrapped as a value table (its `gamma` field is meaningless here).
    pub fn stage_table(&self, t: usize) -> ValueTable<T> {
        ValueTable::from_parts(self.space, T::one(), self.stage(t).to_vec())
    }

    /// Minimizing causal action at stage `t`, `k <= t < T`.
    pub fn selectors(&self, t: usize) -> &[usize] {
        &self.selectors[t - self.config.k]
    }

    /// Rebuilds a stack from stored stage tables and selectors.
    pub fn from_parts(
        system: &System<T>,
        config: FiniteSolverConfig,
        stages: Vec<Vec<T>>,
        selectors: Vec<Vec<usize>>,
    ) -> Result<Self> {
        config.validate()?;
        let space = AugmentedSpace::for_system(system, config.k)?;
        let n_stages = config.horizon - config.k + 1;
        if stages.len() != n_stages || selectors.len() != n_stages - 1 {
            return Err(Error::ArtifactMismatch(format!(
                "expected {} stage tables and {} selector tables",
                n_stages,
                n_stages - 1
            )));
        }
        for table in &stages {
            if table.len() != space.len() {
                return Err(Error::TableSize {
                    field: "stage table".into(),
                    expected: space.len(),
                    found: table.len(),
                });
            }
        }
        for sel in &selectors {
            if sel.len() != space.len() || sel.iter().any(|&a| a >= system.num_actions()) {
                return Err(Error::ArtifactMismatch("invalid stage selector table".into()));
            }
        }
        Ok(FiniteValueStack {
            config,
            tail: tail_value(system, config.k)?,
            stages,
            selectors,
            space,
        })
    }
}

fn terminal_stage<T: Scalar>(space: &AugmentedSpace, tail: &TailTable<T>) -> Vec<T> {
    let mut out = vec![T::zero(); space.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let (_, s_l, code) = space.split(i);
        *slot = tail.value_by_code(s_l, code);
    }
    out
}

/// Backward regret recursion from `J_T(x) = Psi_k(s_l, window)` down to `J_k`.
pub fn backward_regret_dp<T: Scalar>(
    system: &System<T>,
    config: &FiniteSolverConfig,
    tail: &TailTable<T>,
) -> Result<FiniteValueStack<T>> {
    config.validate()?;
    if tail.k != config.k {
        return Err(Error::InvalidParameter(format!(
            "tail built for k = {} but config has k = {}",
            tail.k, config.k
        )));
    }
    let space = AugmentedSpace::for_system(system, config.k)?;
    let kernel = RegretKernel::new(system, space, T::one(), T::one());
    let n_stages = config.horizon - config.k + 1;
    let mut stages: Vec<Vec<T>> = Vec::with_capacity(n_stages);
    let mut selectors: Vec<Vec<usize>> = Vec::with_capacity(n_stages - 1);
    stages.push(terminal_stage(&space, tail));
    for _ in config.k..config.horizon {
        let mut values = vec![T::zero(); space.len()];
        let mut sel = vec![0usize; space.len()];
        kernel.backup(stages.last().expect("terminal stage"), &mut values, Some(&mut sel));
        stages.push(values);
        selectors.push(sel);
    }
    stages.reverse();
    selectors.reverse();
    Ok(FiniteValueStack {
        config: *config,
        tail: tail.clone(),
        stages,
        selectors,
        space,
    })
}

/// Prefix recursion with unit weights and terminal `G_k(s, w) = J_k((s, s0, w))`.
/// Returns the tables and `Reg*_{T,k}(s0) = G_0(s0)`.
pub fn finite_prefix_dp<T: Scalar>(
    system: &System<T>,
    stack: &FiniteValueStack<T>,
    s0: usize,
) -> Result<(PrefixTables<T>, T)> {
    system.check_state(s0)?;
    let k = stack.config.k;
    Ok(prefix_from_stage(system, &stack.space, stack.stage(k), k, s0))
}

fn prefix_from_stage<T: Scalar>(
    system: &System<T>,
    space: &AugmentedSpace,
    stage_k: &[T],
    k: usize,
    s0: usize,
) -> (PrefixTables<T>, T) {
    let nwin = space.window_count();
    let mut terminal = Vec::with_capacity(system.num_states() * nwin);
    for s in 0..system.num_states() {
        for code in 0..nwin {
            terminal.push(stage_k[space.raw_index(s, s0, code)]);
        }
    }
    let prefix = prefix_backward(system, k, s0, terminal, |_| T::one());
    let regret = prefix.regret();
    (prefix, regret)
}

/// `G_0(s0)` with two rolling stage buffers instead of the full stack.
pub fn finite_regret_value<T: Scalar>(
    system: &System<T>,
    config: &FiniteSolverConfig,
    s0: usize,
) -> Result<T> {
    config.validate()?;
    system.check_state(s0)?;
    let tail = tail_value(system, config.k)?;
    let space = AugmentedSpace::for_system(system, config.k)?;
    let kernel = RegretKernel::new(system, space, T::one(), T::one());
    let mut current = terminal_stage(&space, &tail);
    let mut next = vec![T::zero(); space.len()];
    for _ in config.k..config.horizon {
        kernel.backup(&current, &mut next, None);
        std::mem::swap(&mut current, &mut next);
    }
    Ok(prefix_from_stage(system, &space, &current, config.k, s0).1)
}

/// Everything needed to run the finite-horizon controller from `s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSolution<T> {
    pub stack: FiniteValueStack<T>,
    pub prefix: PrefixTables<T>,
    pub regret: T,
}

pub fn solve_finite<T: Scalar>(
    system: &System<T>,
    config: &FiniteSolverConfig,
    s0: usize,
) -> Result<FiniteSolution<T>> {
    let tail = tail_value(system, config.k)?;
    let stack = backward_regret_dp(system, config, &tail)?;
    let (prefix, regret) = finite_prefix_dp(system, &stack, s0)?;
    Ok(FiniteSolution { stack, prefix, regret })
}
