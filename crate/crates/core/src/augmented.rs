//! Tracking state `x = (s_c, s_l, window)` pairing the causal controller's
//! state with the lagged benchmark state and the last `k` disturbances.
//!
//! Dense layout: `s_c` outermost, then `s_l`, then the window digits in base
//! `|W|` with the oldest disturbance most significant.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::system::System;

/// Upper bound on the number of augmented states a solver will allocate.
pub const MAX_AUGMENTED_STATES: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AugmentedState {
    pub s_c: usize,
    pub s_l: usize,
    /// Oldest first; length exactly `k`.
    pub window: Vec<usize>,
}

/// Index arithmetic for `S x S x W^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedSpace {
    num_states: usize,
    num_disturbances: usize,
    k: usize,
    windows: usize,
    /// `|W|^(k-1)`, the weight of the oldest window digit.
    lead: usize,
}

impl AugmentedSpace {
    pub fn new(num_states: usize, num_disturbances: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroLookahead);
        }
        let too_large = || {
            Error::StateSpaceTooLarge(format!(
                "|S|^2 |W|^k with |S|={num_states}, |W|={num_disturbances}, k={k}"
            ))
        };
        let mut windows = 1usize;
        for _ in 0..k {
            windows = windows.checked_mul(num_disturbances).ok_or_else(too_large)?;
        }
        let len = num_states
            .checked_mul(num_states)
            .and_then(|n| n.checked_mul(windows))
            .ok_or_else(too_large)?;
        if len > MAX_AUGMENTED_STATES {
            return Err(too_large());
        }
        Ok(AugmentedSpace {
            num_states,
            num_disturbances,
            k,
            windows,
            lead: windows / num_disturbances.max(1),
        })
    }

    pub fn for_system<T: Scalar>(system: &System<T>, k: usize) -> Result<Self> {
        Self::new(system.num_states(), system.num_disturbances(), k)
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }
    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    #[inline]
    pub fn num_disturbances(&self) -> usize {
        self.num_disturbances
    }
    /// `|W|^k`.
    #[inline]
    pub fn window_count(&self) -> usize {
        self.windows
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.num_states * self.num_states * self.windows
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub(crate) fn raw_index(&self, s_c: usize, s_l: usize, code: usize) -> usize {
        (s_c * self.num_states + s_l) * self.windows + code
    }

    #[inline]
    pub(crate) fn split(&self, index: usize) -> (usize, usize, usize) {
        let code = index % self.windows;
        let pair = index / self.windows;
        (pair / self.num_states, pair % self.num_states, code)
    }

    /// Oldest disturbance `w_0` of an encoded window.
    #[inline]
    pub fn oldest(&self, code: usize) -> usize {
        code / self.lead
    }

    /// Drops the oldest disturbance and appends `w`.
    #[inline]
    pub fn shift(&self, code: usize, w: usize) -> usize {
        (code % self.lead) * self.num_disturbances + w
    }

    pub fn encode_window(&self, window: &[usize]) -> Result<usize> {
        if window.len() != self.k {
            return Err(Error::InvalidParameter(format!(
                "window has length {} but k = {}",
                window.len(),
                self.k
            )));
        }
        encode_digits(window, self.num_disturbances)
    }

    pub fn decode_window(&self, code: usize) -> Vec<usize> {
        decode_digits(code, self.k, self.num_disturbances)
    }

    pub fn index(&self, x: &AugmentedState) -> Result<usize> {
        for (what, s) in [("causal state", x.s_c), ("benchmark state", x.s_l)] {
            if s >= self.num_states {
                return Err(Error::IndexOutOfRange {
                    what,
                    index: s,
                    size: self.num_states,
                });
            }
        }
        let code = self.encode_window(&x.window)?;
        Ok(self.raw_index(x.s_c, x.s_l, code))
    }

    pub fn decode(&self, index: usize) -> Result<AugmentedState> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange {
                what: "augmented state",
                index,
                size: self.len(),
            });
        }
        let (s_c, s_l, code) = self.split(index);
        Ok(AugmentedState {
            s_c,
            s_l,
            window: self.decode_window(code),
        })
    }
}

/// Base-`radix` code of `digits`, most significant first.
pub(crate) fn encode_digits(digits: &[usize], radix: usize) -> Result<usize> {
    digits.iter().try_fold(0usize, |acc, &d| {
        if d >= radix {
            return Err(Error::IndexOutOfRange {
                what: "disturbance",
                index: d,
                size: radix,
            });
        }
        Ok(acc * radix + d)
    })
}

pub(crate) fn decode_digits(mut code: usize, len: usize, radix: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = code % radix;
        code /= radix;
    }
    out
}

/// `r(s_l, a_l, w_0) - weight * r(s_c, a_c, w)`.
#[inline]
pub(crate) fn weighted_regret_cost<T: Scalar>(
    system: &System<T>,
    s_c: usize,
    s_l: usize,
    w0: usize,
    a_c: usize,
    a_l: usize,
    w: usize,
    causal_weight: T,
) -> T {
    system.reward(s_l, a_l, w0) - causal_weight * system.reward(s_c, a_c, w)
}

/// Aligned per-stage regret: the benchmark's reward at the lagged time minus
/// the causal reward discounted by `gamma^k`.
pub fn aligned_regret_cost<T: Scalar>(
    system: &System<T>,
    x: &AugmentedState,
    a_c: usize,
    a_l: usize,
    w: usize,
    k: usize,
) -> Result<T> {
    check_move(system, x, a_c, a_l, w, k)?;
    Ok(weighted_regret_cost(
        system,
        x.s_c,
        x.s_l,
        x.window[0],
        a_c,
        a_l,
        w,
        system.gamma().pow_u(k),
    ))
}

/// `(f(s_c, a_c, w), f(s_l, a_l, w_0), window[1..] ++ [w])`.
pub fn augmented_transition<T: Scalar>(
    system: &System<T>,
    x: &AugmentedState,
    a_c: usize,
    a_l: usize,
    w: usize,
) -> Result<AugmentedState> {
    check_move(system, x, a_c, a_l, w, x.window.len())?;
    let mut window = Vec::with_capacity(x.window.len());
    window.extend_from_slice(&x.window[1..]);
    window.push(w);
    Ok(AugmentedState {
        s_c: system.next_state(x.s_c, a_c, w),
        s_l: system.next_state(x.s_l, a_l, x.window[0]),
        window,
    })
}

fn check_move<T: Scalar>(
    system: &System<T>,
    x: &AugmentedState,
    a_c: usize,
    a_l: usize,
    w: usize,
    k: usize,
) -> Result<()> {
    if k == 0 {
        return Err(Error::ZeroLookahead);
    }
    if x.window.len() != k {
        return Err(Error::InvalidParameter(format!(
            "window has length {} but k = {k}",
            x.window.len()
        )));
    }
    system.check_state(x.s_c)?;
    system.check_state(x.s_l)?;
    system.check_action(a_c)?;
    system.check_action(a_l)?;
    system.check_disturbance(w)?;
    for &d in &x.window {
        system.check_disturbance(d)?;
    }
    Ok(())
}
