//! Min-max backup over the augmented space.
//!
//! A backup evaluates, for every `x = (s_c, s_l, window)`,
//!
//! ```text
//! min_{a_c} max_{w, a_l} { r(s_l, a_l, w_0) - cw * r(s_c, a_c, w) + cont * J(x+) }
//! ```
//!
//! The benchmark maximization only sees `(s_l, w_0)` through the multiset of
//! `(f(s_l, a_l, w_0), r(s_l, a_l, w_0))` pairs. Pairs with the same profile
//! up to an additive reward offset are grouped, so the inner max is computed
//! once per group instead of once per benchmark state. The offset is pulled
//! out of the min-max, which also lets every `s_l` in a group share one
//! causal minimization.

use crate::augmented::{weighted_regret_cost, AugmentedSpace};
use crate::scalar::{max_of, Scalar};
use crate::system::System;

/// Benchmark move profiles, grouped by `(next state, reward - base)` lists.
#[derive(Debug, Clone)]
struct BenchmarkGroups<T> {
    /// Indexed by `s_l * |W| + w_0`.
    pair_group: Vec<usize>,
    pair_base: Vec<T>,
    /// Slot of the pair's group inside `by_oldest[w_0]`.
    pair_slot: Vec<usize>,
    /// Per group: sorted `(next, delta)` with `delta <= 0`.
    groups: Vec<Vec<(usize, T)>>,
    /// Distinct groups reachable for each oldest disturbance.
    by_oldest: Vec<Vec<usize>>,
}

impl<T: Scalar> BenchmarkGroups<T> {
    fn build(system: &System<T>) -> Self {
        let (ns, na, nw) = (system.num_states(), system.num_actions(), system.num_disturbances());
        let mut pair_group = vec![0; ns * nw];
        let mut pair_base = vec![T::zero(); ns * nw];
        let mut pair_slot = vec![0; ns * nw];
        let mut groups: Vec<Vec<(usize, T)>> = Vec::new();
        let mut by_oldest: Vec<Vec<usize>> = vec![Vec::new(); nw];
        let mut best: Vec<Option<T>> = vec![None; ns];
        for s_l in 0..ns {
            for w0 in 0..nw {
                let base = (1..na).fold(system.reward(s_l, 0, w0), |m, a| {
                    max_of(m, system.reward(s_l, a, w0))
                });
                best.iter_mut().for_each(|b| *b = None);
                for a in 0..na {
                    let next = system.next_state(s_l, a, w0);
                    let delta = system.reward(s_l, a, w0) - base;
                    best[next] = Some(match best[next] {
                        Some(d) => max_of(d, delta),
                        None => delta,
                    });
                }
                let profile: Vec<(usize, T)> = best
                    .iter()
                    .enumerate()
                    .filter_map(|(next, d)| d.map(|d| (next, d)))
                    .collect();
                let g = match groups.iter().position(|p| *p == profile) {
                    Some(g) => g,
                    None => {
                        groups.push(profile);
                        groups.len() - 1
                    }
                };
                let slots = &mut by_oldest[w0];
                let slot = match slots.iter().position(|&h| h == g) {
                    Some(j) => j,
                    None => {
                        slots.push(g);
                        slots.len() - 1
                    }
                };
                let pair = s_l * nw + w0;
                pair_group[pair] = g;
                pair_base[pair] = base;
                pair_slot[pair] = slot;
            }
        }
        BenchmarkGroups {
            pair_group,
            pair_base,
            pair_slot,
            groups,
            by_oldest,
        }
    }
}

/// Backup operator with causal reward weight `cw` and continuation weight
/// `cont`. The discounted operator uses `(gamma^k, gamma)`, the
/// finite-horizon stages use `(1, 1)`.
#[derive(Debug, Clone)]
pub(crate) struct RegretKernel<'a, T> {
    system: &'a System<T>,
    space: AugmentedSpace,
    groups: BenchmarkGroups<T>,
    causal_weight: T,
    continuation: T,
}

impl<'a, T: Scalar> RegretKernel<'a, T> {
    pub(crate) fn new(
        system: &'a System<T>,
        space: AugmentedSpace,
        causal_weight: T,
        continuation: T,
    ) -> Self {
        RegretKernel {
            system,
            space,
            groups: BenchmarkGroups::build(system),
            causal_weight,
            continuation,
        }
    }

    pub(crate) fn space(&self) -> &AugmentedSpace {
        &self.space
    }

    /// Applies the operator to `next`, writing values (and optionally the
    /// lowest-index minimizing causal action) for every augmented state.
    pub(crate) fn backup(&self, next: &[T], out: &mut [T], mut policy: Option<&mut [usize]>) {
        let sys = self.system;
        let space = &self.space;
        let (ns, na, nw) = (sys.num_states(), sys.num_actions(), sys.num_disturbances());
        let nwin = space.window_count();
        let ng = self.groups.groups.len();
        debug_assert_eq!(next.len(), space.len());
        debug_assert_eq!(out.len(), space.len());

        // Benchmark side: best continuation per (s_c', window', group).
        let mut bench = vec![T::zero(); ns * nwin * ng];
        for sp in 0..ns {
            for win in 0..nwin {
                let row = (sp * nwin + win) * ng;
                for (g, profile) in self.groups.groups.iter().enumerate() {
                    let mut best: Option<T> = None;
                    for &(nx, delta) in profile {
                        let v = delta + self.continuation * next[space.raw_index(sp, nx, win)];
                        best = Some(match best {
                            Some(b) => max_of(b, v),
                            None => v,
                        });
                    }
                    bench[row + g] = best.expect("every group has at least one move");
                }
            }
        }

        let widest = self.groups.by_oldest.iter().map(Vec::len).max().unwrap_or(0);
        let mut inner = vec![T::zero(); widest];
        let mut best = vec![T::zero(); widest];
        let mut arg = vec![0usize; widest];
        for s_c in 0..ns {
            for win in 0..nwin {
                let w0 = space.oldest(win);
                let slots = &self.groups.by_oldest[w0];
                for a in 0..na {
                    for w in 0..nw {
                        let sp = sys.next_state(s_c, a, w);
                        let causal = -(self.causal_weight * sys.reward(s_c, a, w));
                        let row = (sp * nwin + space.shift(win, w)) * ng;
                        for (j, &g) in slots.iter().enumerate() {
                            let v = causal + bench[row + g];
                            if w == 0 || v > inner[j] {
                                inner[j] = v;
                            }
                        }
                    }
                    for j in 0..slots.len() {
                        if a == 0 || inner[j] < best[j] {
                            best[j] = inner[j];
                            arg[j] = a;
                        }
                    }
                }
                for s_l in 0..ns {
                    let pair = s_l * nw + w0;
                    let j = self.groups.pair_slot[pair];
                    debug_assert_eq!(slots[j], self.groups.pair_group[pair]);
                    let idx = space.raw_index(s_c, s_l, win);
                    out[idx] = self.groups.pair_base[pair] + best[j];
                    if let Some(p) = policy.as_deref_mut() {
                        p[idx] = arg[j];
                    }
                }
            }
        }
    }

    /// Direct evaluation of `max_{w, a_l} { rho + cont * J(x+) }` for one
    /// state and causal action, without any grouping.
    pub(crate) fn q_value(&self, index: usize, a_c: usize, next: &[T]) -> T {
        let sys = self.system;
        let (s_c, s_l, code) = self.space.split(index);
        let w0 = self.space.oldest(code);
        let mut best: Option<T> = None;
        for w in 0..sys.num_disturbances() {
            let sc_next = sys.next_state(s_c, a_c, w);
            let code_next = self.space.shift(code, w);
            for a_l in 0..sys.num_actions() {
                let rho =
                    weighted_regret_cost(sys, s_c, s_l, w0, a_c, a_l, w, self.causal_weight);
                let sl_next = sys.next_state(s_l, a_l, w0);
                let v = rho
                    + self.continuation * next[self.space.raw_index(sc_next, sl_next, code_next)];
                best = Some(match best {
                    Some(b) => max_of(b, v),
                    None => v,
                });
            }
        }
        best.expect("nonempty alphabets")
    }

    /// Direct min-max at one state; ties go to the lowest action.
    pub(crate) fn backup_at(&self, index: usize, next: &[T]) -> (T, usize) {
        let mut best = self.q_value(index, 0, next);
        let mut arg = 0;
        for a in 1..self.system.num_actions() {
            let v = self.q_value(index, a, next);
            if v < best {
                best = v;
                arg = a;
            }
        }
        (best, arg)
    }
}
