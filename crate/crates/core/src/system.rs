//! Finite disturbance-driven systems `s' = f(s, a, w)` with rewards `r(s, a, w)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{max_of, Scalar};

/// Schema version written to and expected from system files.
pub const SYSTEM_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<String>,
}

/// Raw, unchecked description of a system. Tables are dense and flattened in
/// `[s][a][w]` row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec<T> {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_disturbances: usize,
    pub transition: Vec<usize>,
    pub reward: Vec<T>,
    pub gamma: T,
    pub labels: Option<Labels>,
}

impl<T: Scalar> SystemSpec<T> {
    /// Builds a spec by evaluating `dynamics(s, a, w) -> (next, reward)` on
    /// every triple.
    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        num_disturbances: usize,
        gamma: T,
        mut dynamics: impl FnMut(usize, usize, usize) -> (usize, T),
    ) -> Self {
        let n = num_states * num_actions * num_disturbances;
        let mut transition = Vec::with_capacity(n);
        let mut reward = Vec::with_capacity(n);
        for s in 0..num_states {
            for a in 0..num_actions {
                for w in 0..num_disturbances {
                    let (next, r) = dynamics(s, a, w);
                    transition.push(next);
                    reward.push(r);
                }
            }
        }
        SystemSpec {
            num_states,
            num_actions,
            num_disturbances,
            transition,
            reward,
            gamma,
            labels: None,
        }
    }

    /// Converts the reward table and discount to another scalar type.
    pub fn cast<U: Scalar>(&self) -> SystemSpec<U> {
        SystemSpec {
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_disturbances: self.num_disturbances,
            transition: self.transition.clone(),
            reward: self.reward.iter().map(|r| U::of(r.as_f64())).collect(),
            gamma: U::of(self.gamma.as_f64()),
            labels: self.labels.clone(),
        }
    }

    fn coords(&self, flat: usize) -> (usize, usize, usize) {
        let w = flat % self.num_disturbances;
        let a = (flat / self.num_disturbances) % self.num_actions;
        let s = flat / (self.num_disturbances * self.num_actions);
        (s, a, w)
    }
}

/// A [`SystemSpec`] whose invariants have been checked. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct System<T> {
    spec: SystemSpec<T>,
    r_max: T,
}

/// Checks every invariant of `spec` and computes `r_max`.
pub fn validate_system<T: Scalar>(spec: SystemSpec<T>) -> Result<System<T>> {
    if spec.num_states == 0 || spec.num_actions == 0 || spec.num_disturbances == 0 {
        return Err(Error::InvalidParameter(format!(
            "alphabets must be nonempty (|S|={}, |A|={}, |W|={})",
            spec.num_states, spec.num_actions, spec.num_disturbances
        )));
    }
    if !(spec.gamma > T::zero() && spec.gamma < T::one()) || !spec.gamma.is_finite_value() {
        return Err(Error::InvalidGamma(spec.gamma.as_f64()));
    }
    let expected = spec
        .num_states
        .checked_mul(spec.num_actions)
        .and_then(|n| n.checked_mul(spec.num_disturbances))
        .ok_or_else(|| Error::InvalidParameter("table size overflows".into()))?;
    if spec.transition.len() != expected {
        return Err(Error::TableSize {
            field: "transition".into(),
            expected,
            found: spec.transition.len(),
        });
    }
    if spec.reward.len() != expected {
        return Err(Error::TableSize {
            field: "reward".into(),
            expected,
            found: spec.reward.len(),
        });
    }
    let mut r_max = T::zero();
    for (flat, (&next, &r)) in spec.transition.iter().zip(&spec.reward).enumerate() {
        let (s, a, w) = spec.coords(flat);
        if next >= spec.num_states {
            return Err(Error::TransitionOutOfRange {
                s,
                a,
                w,
                target: next as i64,
                num_states: spec.num_states,
            });
        }
        if !r.is_finite_value() {
            return Err(Error::NonFiniteReward { s, a, w });
        }
        r_max = max_of(r_max, r.abs());
    }
    if let Some(labels) = &spec.labels {
        for (field, got, want) in [
            ("labels.states", labels.states.len(), spec.num_states),
            ("labels.actions", labels.actions.len(), spec.num_actions),
            ("labels.disturbances", labels.disturbances.len(), spec.num_disturbances),
        ] {
            if got != 0 && got != want {
                return Err(Error::TableSize {
                    field: field.into(),
                    expected: want,
                    found: got,
                });
            }
        }
    }
    Ok(System { spec, r_max })
}

impl<T: Scalar> System<T> {
    pub fn new(spec: SystemSpec<T>) -> Result<Self> {
        validate_system(spec)
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.spec.num_states
    }
    #[inline]
    pub fn num_actions(&self) -> usize {
        self.spec.num_actions
    }
    #[inline]
    pub fn num_disturbances(&self) -> usize {
        self.spec.num_disturbances
    }
    #[inline]
    pub fn gamma(&self) -> T {
        self.spec.gamma
    }
    /// Exact maximum of `|r(s, a, w)|` over the table.
    #[inline]
    pub fn r_max(&self) -> T {
        self.r_max
    }

    #[inline]
    fn flat(&self, s: usize, a: usize, w: usize) -> usize {
        (s * self.spec.num_actions + a) * self.spec.num_disturbances + w
    }

    #[inline]
    pub fn next_state(&self, s: usize, a: usize, w: usize) -> usize {
        self.spec.transition[self.flat(s, a, w)]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, w: usize) -> T {
        self.spec.reward[self.flat(s, a, w)]
    }

    pub fn spec(&self) -> &SystemSpec<T> {
        &self.spec
    }

    pub fn into_spec(self) -> SystemSpec<T> {
        self.spec
    }

    /// Same system with a different discount factor.
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.gamma = gamma;
        validate_system(spec)
    }

    pub(crate) fn check_state(&self, s: usize) -> Result<()> {
        if s < self.num_states() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "state",
                index: s,
                size: self.num_states(),
            })
        }
    }

    pub(crate) fn check_disturbance(&self, w: usize) -> Result<()> {
        if w < self.num_disturbances() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "disturbance",
                index: w,
                size: self.num_disturbances(),
            })
        }
    }

    pub(crate) fn check_action(&self, a: usize) -> Result<()> {
        if a < self.num_actions() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                size: self.num_actions(),
            })
        }
    }
}

/// Lost-sales inventory instance: stock level, order quantity and demand are
/// all capped integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventoryParams {
    pub s_max: usize,
    pub a_max: usize,
    pub w_max: usize,
    pub holding: f64,
    pub penalty: f64,
    pub gamma: f64,
}

impl InventoryParams {
    /// Holding cost 1, lost-sales penalty 9, discount 0.995.
    pub fn reference(s_max: usize, a_max: usize, w_max: usize) -> Self {
        InventoryParams {
            s_max,
            a_max,
            w_max,
            holding: 1.0,
            penalty: 9.0,
            gamma: 0.995,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_max < 1 {
            return Err(Error::InvalidParameter("s_max must be at least 1".into()));
        }
        for (name, v) in [("holding", self.holding), ("penalty", self.penalty)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} cost must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidGamma(self.gamma));
        }
        Ok(())
    }
}

/// `s' = min((s - w)^+ + a, s_max)`, `r = -(h (s - w)^+ + p (w - s)^+)`.
pub fn build_inventory_system<T: Scalar>(params: &InventoryParams) -> Result<SystemSpec<T>> {
    params.validate()?;
    let h = T::of(params.holding);
    let p = T::of(params.penalty);
    Ok(SystemSpec::from_fn(
        params.s_max + 1,
        params.a_max + 1,
        params.w_max + 1,
        T::of(params.gamma),
        |s, a, w| {
            let left = s.saturating_sub(w);
            let short = w.saturating_sub(s);
            let next = (left + a).min(params.s_max);
            let cost = h * T::of_usize(left) + p * T::of_usize(short);
            (next, -cost)
        },
    ))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    version: u64,
    num_states: usize,
    num_actions: usize,
    num_disturbances: usize,
    gamma: f64,
    transition: Vec<Vec<Vec<i64>>>,
    reward: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<u64>,
}

fn flatten<V: Copy>(
    field: &str,
    table: &[Vec<Vec<V>>],
    dims: (usize, usize, usize),
) -> Result<Vec<V>> {
    let mismatch = |path: String, expected: usize, found: usize| Error::TableSize {
        field: path,
        expected,
        found,
    };
    if table.len() != dims.0 {
        return Err(mismatch(field.to_string(), dims.0, table.len()));
    }
    let mut out = Vec::with_capacity(dims.0 * dims.1 * dims.2);
    for (s, by_action) in table.iter().enumerate() {
        if by_action.len() != dims.1 {
            return Err(mismatch(format!("{field}[{s}]"), dims.1, by_action.len()));
        }
        for (a, by_w) in by_action.iter().enumerate() {
            if by_w.len() != dims.2 {
                return Err(mismatch(format!("{field}[{s}][{a}]"), dims.2, by_w.len()));
            }
            out.extend_from_slice(by_w);
        }
    }
    Ok(out)
}

/// Parses the JSON system format. The result is not validated beyond shape.
pub fn load_system(text: &str) -> Result<SystemSpec<f64>> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(Error::from_json)?;
    match probe.version {
        None => {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "missing field `version`".into(),
            })
        }
        Some(v) if v != SYSTEM_SCHEMA_VERSION => {
            return Err(Error::SchemaVersion {
                found: v,
                expected: SYSTEM_SCHEMA_VERSION,
            })
        }
        Some(_) => {}
    }
    let file: SystemFile = serde_json::from_str(text).map_err(Error::from_json)?;
    let dims = (file.num_states, file.num_actions, file.num_disturbances);
    let raw = flatten("transition", &file.transition, dims)?;
    let reward = flatten("reward", &file.reward, dims)?;
    let mut transition = Vec::with_capacity(raw.len());
    for (flat, &t) in raw.iter().enumerate() {
        if t < 0 || t as u64 >= file.num_states as u64 {
            let w = flat % dims.2;
            let a = (flat / dims.2) % dims.1;
            let s = flat / (dims.2 * dims.1);
            return Err(Error::TransitionOutOfRange {
                s,
                a,
                w,
                target: t,
                num_states: file.num_states,
            });
        }
        transition.push(t as usize);
    }
    Ok(SystemSpec {
        num_states: file.num_states,
        num_actions: file.num_actions,
        num_disturbances: file.num_disturbances,
        transition,
        reward,
        gamma: file.gamma,
        labels: file.labels,
    })
}

/// Serializes to the JSON system format (`version` 1).
pub fn save_system<T: Scalar>(spec: &SystemSpec<T>) -> String {
    let (ns, na, nw) = (spec.num_states, spec.num_actions, spec.num_disturbances);
    let nest = |flat: Vec<i64>| -> Vec<Vec<Vec<i64>>> {
        flat.chunks(na * nw)
            .map(|by_s| by_s.chunks(nw).map(|c| c.to_vec()).collect())
            .collect()
    };
    let transition = nest(spec.transition.iter().map(|&t| t as i64).collect());
    let reward: Vec<Vec<Vec<f64>>> = spec
        .reward
        .chunks(na * nw)
        .map(|by_s| {
            by_s.chunks(nw)
                .map(|c| c.iter().map(|r| r.as_f64()).collect())
                .collect()
        })
        .collect();
    let file = SystemFile {
        version: SYSTEM_SCHEMA_VERSION,
        num_states: ns,
        num_actions: na,
        num_disturbances: nw,
        gamma: spec.gamma.as_f64(),
        transition,
        reward,
        labels: spec.labels.clone(),
    };
    let mut text = serde_json::to_string(&file).expect("system serialization cannot fail");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degenerate() -> SystemSpec<f64> {
        SystemSpec::from_fn(1, 1, 1, 0.9, |_, _, _| (0, 0.0))
    }

    #[test]
    fn degenerate_system_is_valid() {
        let sys = validate_system(degenerate()).unwrap();
        assert_eq!(sys.r_max(), 0.0);
    }

    #[test]
    fn out_of_range_transition_is_rejected() {
        let mut spec = SystemSpec::from_fn(2, 1, 1, 0.9, |_, _, _| (0, 0.0));
        spec.transition[0] = 5;
        let err = validate_system(spec).unwrap_err();
        assert!(err.to_string().contains("out-of-range transition"), "{err}");
        assert!(matches!(err, Error::TransitionOutOfRange { s: 0, a: 0, w: 0, .. }));
    }

    #[test]
    fn bad_gamma_and_sizes_are_rejected() {
        let mut spec = degenerate();
        spec.gamma = 1.0;
        assert!(matches!(validate_system(spec), Err(Error::InvalidGamma(_))));
        let mut spec = degenerate();
        spec.reward.push(1.0);
        assert!(matches!(validate_system(spec), Err(Error::TableSize { .. })));
    }

    #[test]
    fn non_finite_reward_reports_coordinate() {
        let mut spec = SystemSpec::from_fn(2, 2, 2, 0.5, |_, _, _| (0, 1.0));
        spec.reward[5] = f64::NAN; // (1, 0, 1)
        match validate_system(spec) {
            Err(Error::NonFiniteReward { s, a, w }) => assert_eq!((s, a, w), (1, 0, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inventory_reference_instance() {
        let params = InventoryParams {
            s_max: 10,
            a_max: 10,
            w_max: 10,
            holding: 1.0,
            penalty: 9.0,
            gamma: 0.995,
        };
        let sys = validate_system(build_inventory_system::<f64>(&params).unwrap()).unwrap();
        assert_eq!(sys.r_max(), 90.0);
        assert_eq!(sys.reward(5, 0, 3), -2.0);
        assert_eq!(sys.next_state(5, 0, 3), 2);
        assert_eq!(sys.reward(2, 4, 5), -27.0);
        assert_eq!(sys.next_state(2, 4, 5), 4);
        assert_eq!(sys.gamma(), 0.995);
    }

    #[test]
    fn inventory_rejects_bad_params() {
        let mut p = InventoryParams::reference(0, 3, 3);
        assert!(build_inventory_system::<f64>(&p).is_err());
        p.s_max = 2;
        p.penalty = f64::INFINITY;
        assert!(build_inventory_system::<f64>(&p).is_err());
    }

    #[test]
    fn round_trip_degenerate_and_inventory() {
        let spec = degenerate();
        assert_eq!(load_system(&save_system(&spec)).unwrap(), spec);
        let inv = build_inventory_system::<f64>(&InventoryParams::reference(6, 4, 7)).unwrap();
        assert_eq!(load_system(&save_system(&inv)).unwrap(), inv);
    }

    #[test]
    fn missing_reward_table_names_the_field() {
        let text = r#"{"version":1,"num_states":1,"num_actions":1,"num_disturbances":1,
                       "gamma":0.9,"transition":[[[0]]]}"#;
        let err = load_system(text).unwrap_err();
        assert!(err.to_string().contains("reward"), "{err}");
    }

    #[test]
    fn version_mismatch_and_ragged_tables() {
        let text = r#"{"version":2}"#;
        assert!(matches!(load_system(text), Err(Error::SchemaVersion { found: 2, .. })));
        let text = r#"{"version":1,"num_states":1,"num_actions":1,"num_disturbances":2,
                       "gamma":0.9,"transition":[[[0]]],"reward":[[[0.0,1.0]]]}"#;
        let err = load_system(text).unwrap_err();
        assert!(err.to_string().contains("transition[0][0]"), "{err}");
        let text = r#"{"version":1,"num_states":1,"num_actions":1,"num_disturbances":1,
                       "gamma":0.9,"transition":[[[-1]]],"reward":[[[0.0]]]}"#;
        assert!(matches!(load_system(text), Err(Error::TransitionOutOfRange { .. })));
    }

    #[test]
    fn parse_error_carries_line() {
        let err = load_system("{\n\"version\": 1,\n oops }").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert!(line >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
