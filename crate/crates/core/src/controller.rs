//! Online controllers.
//!
//! Every controller follows the same protocol: [`Controller::reset`] with the
//! initial state, then one [`Controller::step`] per time step. The first step
//! receives `None`; each later step receives the disturbance realized during
//! the previous step and returns the next action.

use crate::augmented::AugmentedSpace;
use crate::discounted::{prefix_dp, RegretSolution};
use crate::error::{Error, Result};
use crate::finite::{finite_prefix_dp, FiniteValueStack};
use crate::prefix::PrefixTables;
use crate::scalar::Scalar;
use crate::system::System;

pub trait Controller {
    fn reset(&mut self, s0: usize) -> Result<()>;
    fn step(&mut self, realized: Option<usize>) -> Result<usize>;
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn reset(&mut self, s0: usize) -> Result<()> {
        (**self).reset(s0)
    }
    fn step(&mut self, realized: Option<usize>) -> Result<usize> {
        (**self).step(realized)
    }
}

/// Validates the step protocol and returns the disturbance to apply, if any.
fn take_realized<T: Scalar>(
    system: &System<T>,
    t: usize,
    realized: Option<usize>,
) -> Result<Option<usize>> {
    match (t, realized) {
        (0, None) => Ok(None),
        (0, Some(_)) => Err(Error::Protocol("no disturbance precedes the first step".into())),
        (_, None) => Err(Error::Protocol(format!("step {t} needs the previous disturbance"))),
        (_, Some(w)) => {
            system.check_disturbance(w)?;
            Ok(Some(w))
        }
    }
}

/// `argmax_{a_l} r(s_l, a_l, w_0) + cont * next(f(s_c, a_c, w), f(s_l, a_l, w_0), shift(window, w))`,
/// ties to the lowest action.
pub(crate) fn benchmark_response<T: Scalar>(
    system: &System<T>,
    space: &AugmentedSpace,
    continuation: T,
    next: &[T],
    (s_c, s_l, code): (usize, usize, usize),
    a_c: usize,
    w: usize,
) -> usize {
    let w0 = space.oldest(code);
    let sc_next = system.next_state(s_c, a_c, w);
    let code_next = space.shift(code, w);
    let score = |a_l: usize| {
        system.reward(s_l, a_l, w0)
            + continuation * next[space.raw_index(sc_next, system.next_state(s_l, a_l, w0), code_next)]
    };
    let mut best = score(0);
    let mut arg = 0;
    for a_l in 1..system.num_actions() {
        let v = score(a_l);
        if v > best {
            best = v;
            arg = a_l;
        }
    }
    arg
}

/// Causal state, lagged benchmark state and disturbance window.
#[derive(Debug, Clone, Copy)]
struct Tracking {
    space: AugmentedSpace,
    s_c: usize,
    s_l: usize,
    /// Holds `min(t, k)` digits.
    code: usize,
    t: usize,
    last_action: usize,
    last_benchmark_action: Option<usize>,
}

impl Tracking {
    fn new(space: AugmentedSpace, s0: usize) -> Self {
        Tracking {
            space,
            s_c: s0,
            s_l: s0,
            code: 0,
            t: 0,
            last_action: 0,
            last_benchmark_action: None,
        }
    }

    /// Applies the previous step's action and disturbance. `respond` picks
    /// the benchmark action for the stage that just ended (only called once
    /// the window is full).
    fn advance<T: Scalar>(
        &mut self,
        system: &System<T>,
        w: usize,
        respond: impl FnOnce(usize, (usize, usize, usize), usize, usize) -> usize,
    ) {
        let prev = self.t - 1;
        let a = self.last_action;
        if prev >= self.space.k() {
            let a_l = respond(prev, (self.s_c, self.s_l, self.code), a, w);
            self.s_l = system.next_state(self.s_l, a_l, self.space.oldest(self.code));
            self.code = self.space.shift(self.code, w);
            self.last_benchmark_action = Some(a_l);
        } else {
            self.code = self.code * system.num_disturbances() + w;
        }
        self.s_c = system.next_state(self.s_c, a, w);
    }

    fn window(&self) -> Vec<usize> {
        let len = self.t.saturating_sub(1).min(self.space.k());
        crate::augmented::decode_digits(self.code, len, self.space.num_disturbances())
    }
}

macro_rules! tracking_accessors {
    () => {
        /// Current causal state `s^C_t`.
        pub fn causal_state(&self) -> usize {
            self.track.s_c
        }
        /// Benchmark state `s^L_{t-k}` (the initial state while `t <= k`).
        pub fn benchmark_state(&self) -> usize {
            self.track.s_l
        }
        /// Disturbances held in the tracking window, oldest first.
        pub fn window(&self) -> Vec<usize> {
            self.track.window()
        }
        /// Number of actions issued since the last reset.
        pub fn elapsed(&self) -> usize {
            self.track.t
        }
        /// Benchmark action chosen at the most recent window update.
        pub fn last_benchmark_action(&self) -> Option<usize> {
            self.track.last_benchmark_action
        }
    };
}

/// Regret-optimal controller for the discounted problem: prefix selectors for
/// `t < k`, the stationary policy afterwards.
#[derive(Debug, Clone)]
pub struct RegretController<'a, T> {
    system: &'a System<T>,
    solution: &'a RegretSolution<T>,
    prefix: PrefixTables<T>,
    track: Tracking,
}

impl<'a, T: Scalar> RegretController<'a, T> {
    pub fn new(system: &'a System<T>, solution: &'a RegretSolution<T>, s0: usize) -> Result<Self> {
        let (prefix, _) = prefix_dp(system, solution.table(), s0)?;
        Ok(RegretController {
            system,
            solution,
            prefix,
            track: Tracking::new(*solution.table().space(), s0),
        })
    }

    pub fn prefix(&self) -> &PrefixTables<T> {
        &self.prefix
    }

    tracking_accessors!();
}

impl<T: Scalar> Controller for RegretController<'_, T> {
    fn reset(&mut self, s0: usize) -> Result<()> {
        self.system.check_state(s0)?;
        if self.prefix.initial_state() != s0 {
            self.prefix = prefix_dp(self.system, self.solution.table(), s0)?.0;
        }
        self.track = Tracking::new(self.track.space, s0);
        Ok(())
    }

    fn step(&mut self, realized: Option<usize>) -> Result<usize> {
        if let Some(w) = take_realized(self.system, self.track.t, realized)? {
            let (system, table) = (self.system, self.solution.table());
            let gamma = system.gamma();
            self.track.advance(system, w, |_, x, a, w| {
                benchmark_response(system, table.space(), gamma, table.values(), x, a, w)
            });
        }
        let t = self.track.t;
        let k = self.track.space.k();
        let action = if t < k {
            self.prefix.selector_by_code(t, self.track.s_c, self.track.code)
        } else {
            let idx = self.track.space.raw_index(self.track.s_c, self.track.s_l, self.track.code);
            self.solution.policy.action_at(idx)
        };
        self.track.last_action = action;
        self.track.t += 1;
        Ok(action)
    }
}

/// Time-indexed regret-optimal controller for a finite horizon `T`.
#[derive(Debug, Clone)]
pub struct FiniteRegretController<'a, T> {
    system: &'a System<T>,
    stack: &'a FiniteValueStack<T>,
    prefix: PrefixTables<T>,
    track: Tracking,
}

impl<'a, T: Scalar> FiniteRegretController<'a, T> {
    pub fn new(system: &'a System<T>, stack: &'a FiniteValueStack<T>, s0: usize) -> Result<Self> {
        let (prefix, _) = finite_prefix_dp(system, stack, s0)?;
        Ok(FiniteRegretController {
            system,
            stack,
            prefix,
            track: Tracking::new(*stack.space(), s0),
        })
    }

    pub fn prefix(&self) -> &PrefixTables<T> {
        &self.prefix
    }

    tracking_accessors!();
}

/// Controller built from a solved finite-horizon stack.
pub fn extract_finite_policy<'a, T: Scalar>(
    system: &'a System<T>,
    stack: &'a FiniteValueStack<T>,
    s0: usize,
) -> Result<FiniteRegretController<'a, T>> {
    FiniteRegretController::new(system, stack, s0)
}

impl<T: Scalar> Controller for FiniteRegretController<'_, T> {
    fn reset(&mut self, s0: usize) -> Result<()> {
        self.system.check_state(s0)?;
        if self.prefix.initial_state() != s0 {
            self.prefix = finite_prefix_dp(self.system, self.stack, s0)?.0;
        }
        self.track = Tracking::new(self.track.space, s0);
        Ok(())
    }

    fn step(&mut self, realized: Option<usize>) -> Result<usize> {
        let horizon = self.stack.config().horizon;
        if self.track.t >= horizon {
            return Err(Error::HorizonExhausted { horizon });
        }
        if let Some(w) = take_realized(self.system, self.track.t, realized)? {
            let (system, stack) = (self.system, self.stack);
            self.track.advance(system, w, |stage, x, a, w| {
                benchmark_response(system, stack.space(), T::one(), stack.stage(stage + 1), x, a, w)
            });
        }
        let t = self.track.t;
        let k = self.track.space.k();
        let action = if t < k {
            self.prefix.selector_by_code(t, self.track.s_c, self.track.code)
        } else {
            let idx = self.track.space.raw_index(self.track.s_c, self.track.s_l, self.track.code);
            self.stack.selectors(t)[idx]
        };
        self.track.last_action = action;
        self.track.t += 1;
        Ok(action)
    }
}

/// Memoryless state-feedback controller.
#[derive(Debug, Clone)]
pub struct StateFeedbackController<'a, T> {
    system: &'a System<T>,
    actions: &'a [usize],
    state: usize,
    t: usize,
    last_action: usize,
}

impl<'a, T: Scalar> StateFeedbackController<'a, T> {
    pub fn new(system: &'a System<T>, actions: &'a [usize]) -> Result<Self> {
        if actions.len() != system.num_states() {
            return Err(Error::TableSize {
                field: "state policy".into(),
                expected: system.num_states(),
                found: actions.len(),
            });
        }
        for &a in actions {
            system.check_action(a)?;
        }
        Ok(StateFeedbackController {
            system,
            actions,
            state: 0,
            t: 0,
            last_action: 0,
        })
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl<T: Scalar> Controller for StateFeedbackController<'_, T> {
    fn reset(&mut self, s0: usize) -> Result<()> {
        self.system.check_state(s0)?;
        self.state = s0;
        self.t = 0;
        Ok(())
    }

    fn step(&mut self, realized: Option<usize>) -> Result<usize> {
        if let Some(w) = take_realized(self.system, self.t, realized)? {
            self.state = self.system.next_state(self.state, self.last_action, w);
        }
        self.last_action = self.actions[self.state];
        self.t += 1;
        Ok(self.last_action)
    }
}

/// Plays a fixed action sequence regardless of observations.
#[derive(Debug, Clone)]
pub struct OpenLoopController {
    actions: Vec<usize>,
    t: usize,
}

impl OpenLoopController {
    pub fn new(actions: Vec<usize>) -> Self {
        OpenLoopController { actions, t: 0 }
    }
}

impl Controller for OpenLoopController {
    fn reset(&mut self, _s0: usize) -> Result<()> {
        self.t = 0;
        Ok(())
    }

    fn step(&mut self, _realized: Option<usize>) -> Result<usize> {
        let a = *self.actions.get(self.t).ok_or(Error::HorizonExhausted {
            horizon: self.actions.len(),
        })?;
        self.t += 1;
        Ok(a)
    }
}
