//! Backward recursion over the first `k` stages, before the tracking state
//! holds a full disturbance window.

use crate::augmented::{decode_digits, encode_digits};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::system::System;

/// `G_t(s, w_0..w_{t-1})` for `t = 0..=k`, plus the minimizing causal action
/// for every `t < k`. Built for one initial state `s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixTables<T> {
    k: usize,
    s0: usize,
    num_disturbances: usize,
    levels: Vec<Vec<T>>,
    selectors: Vec<Vec<usize>>,
}

impl<T: Scalar> PrefixTables<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn initial_state(&self) -> usize {
        self.s0
    }

    /// `G_0(s0)`.
    pub fn regret(&self) -> T {
        self.levels[0][self.s0]
    }

    /// Dense table of level `t`, indexed `s * |W|^t + prefix code`.
    pub fn level(&self, t: usize) -> &[T] {
        &self.levels[t]
    }

    fn slot(&self, t: usize, s: usize, prefix: &[usize]) -> Result<usize> {
        if t > self.k {
            return Err(Error::InvalidParameter(format!("prefix level {t} > k = {}", self.k)));
        }
        if prefix.len() != t {
            return Err(Error::InvalidParameter(format!(
                "prefix at level {t} must have {t} entries, got {}",
                prefix.len()
            )));
        }
        let width = self.levels[t].len() / self.num_states();
        if s >= self.num_states() {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: s,
                size: self.num_states(),
            });
        }
        Ok(s * width + encode_digits(prefix, self.num_disturbances)?)
    }

    fn num_states(&self) -> usize {
        self.levels[0].len()
    }

    pub fn value(&self, t: usize, s: usize, prefix: &[usize]) -> Result<T> {
        let i = self.slot(t, s, prefix)?;
        Ok(self.levels[t][i])
    }

    pub fn selector(&self, t: usize, s: usize, prefix: &[usize]) -> Result<usize> {
        if t >= self.k {
            return Err(Error::InvalidParameter(format!(
                "prefix selectors exist only for t < k = {}",
                self.k
            )));
        }
        let i = self.slot(t, s, prefix)?;
        Ok(self.selectors[t][i])
    }

    #[inline]
    pub(crate) fn selector_by_code(&self, t: usize, s: usize, code: usize) -> usize {
        let width = self.levels[t].len() / self.num_states();
        self.selectors[t][s * width + code]
    }

    /// All prefixes of length `t` in table order.
    pub fn prefixes(&self, t: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
        let width = self.levels[t].len() / self.num_states();
        (0..width).map(move |c| decode_digits(c, t, self.num_disturbances))
    }
}

/// Runs the prefix recursion
/// `G_t(s, p) = min_a max_w { G_{t+1}(f(s, a, w), p ++ [w]) - weight(t) r(s, a, w) }`
/// from the terminal level `G_k`, given densely as `s * |W|^k + code`.
pub(crate) fn prefix_backward<T: Scalar>(
    system: &System<T>,
    k: usize,
    s0: usize,
    terminal: Vec<T>,
    weight: impl Fn(usize) -> T,
) -> PrefixTables<T> {
    let (ns, na, nw) = (system.num_states(), system.num_actions(), system.num_disturbances());
    let mut levels: Vec<Vec<T>> = vec![Vec::new(); k + 1];
    let mut selectors: Vec<Vec<usize>> = vec![Vec::new(); k];
    levels[k] = terminal;
    let mut width = levels[k].len() / ns;
    for t in (0..k).rev() {
        let next_width = width;
        width /= nw;
        let c = weight(t);
        let mut level = vec![T::zero(); ns * width];
        let mut sel = vec![0usize; ns * width];
        for s in 0..ns {
            for code in 0..width {
                let mut best: Option<(T, usize)> = None;
                for a in 0..na {
                    let mut worst: Option<T> = None;
                    for w in 0..nw {
                        let sp = system.next_state(s, a, w);
                        let v = levels[t + 1][sp * next_width + code * nw + w]
                            - c * system.reward(s, a, w);
                        worst = Some(match worst {
                            Some(m) if m >= v => m,
                            _ => v,
                        });
                    }
                    let worst = worst.expect("nonempty disturbance alphabet");
                    match best {
                        Some((b, _)) if b <= worst => {}
                        _ => best = Some((worst, a)),
                    }
                }
                let (v, a) = best.expect("nonempty action alphabet");
                level[s * width + code] = v;
                sel[s * width + code] = a;
            }
        }
        levels[t] = level;
        selectors[t] = sel;
    }
    PrefixTables {
        k,
        s0,
        num_disturbances: nw,
        levels,
        selectors,
    }
}
