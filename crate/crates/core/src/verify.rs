//! Randomized property suites over small systems.
//!
//! Each suite returns a [`SuiteResult`]; failing instances are serialized
//! with the system file format so they can be replayed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::extract_finite_policy;
use crate::discounted::{apply_regret_bellman, prefix_dp, solve_fixed_point, SolverConfig, ValueTable};
use crate::error::{Error, Result};
use crate::finite::{solve_finite, FiniteSolverConfig};
use crate::fixtures::random_system;
use crate::oracle::{decomposition_check, history_tree_leaves, history_tree_regret, worst_case_realized_regret, ENUMERATION_LIMIT};
use crate::scalar::sup_distance;
use crate::system::{save_system, System};

/// Gammas cycled through by the discounted suites.
pub const SUITE_GAMMAS: [f64; 3] = [0.5, 0.9, 0.995];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Systems in the contraction and fixed-point suites.
    pub contraction_systems: usize,
    pub contraction_pairs: usize,
    /// Largest `|S|`, `|A|`, `|W|` of the contraction systems.
    pub contraction_size: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub max_disturbances: usize,
    pub max_k: usize,
    pub max_horizon: usize,
    pub systems_per_cell: usize,
    pub decomposition_trials: usize,
    pub decomposition_horizon: usize,
    pub epsilon: f64,
    /// Overrides every per-suite tolerance when set.
    pub tolerance: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            contraction_systems: 20,
            contraction_pairs: 100,
            contraction_size: 4,
            max_states: 3,
            max_actions: 3,
            max_disturbances: 3,
            max_k: 2,
            max_horizon: 5,
            systems_per_cell: 50,
            decomposition_trials: 100,
            decomposition_horizon: 6,
            epsilon: 1e-6,
            tolerance: None,
        }
    }
}

impl VerifyConfig {
    /// Rejects grids whose brute-force enumeration would exceed the budget.
    pub fn validate(&self) -> Result<()> {
        if self.max_k == 0 {
            return Err(Error::ZeroLookahead);
        }
        if self.max_horizon <= 1 {
            return Err(Error::HorizonTooShort {
                k: 1,
                horizon: self.max_horizon,
            });
        }
        if self.max_states == 0 || self.max_actions == 0 || self.max_disturbances == 0 || self.contraction_size == 0 {
            return Err(Error::InvalidParameter("grid bounds must be at least 1".into()));
        }
        if self.decomposition_horizon < 2 {
            return Err(Error::InvalidParameter("decomposition horizon must be at least 2".into()));
        }
        let leaves = history_tree_leaves(self.max_actions, self.max_disturbances, 1, self.max_horizon);
        if leaves > ENUMERATION_LIMIT {
            return Err(Error::GuardExceeded {
                leaves,
                limit: ENUMERATION_LIMIT,
            });
        }
        let paths = (self.max_disturbances as u128).saturating_pow(self.max_horizon as u32);
        if paths > ENUMERATION_LIMIT {
            return Err(Error::GuardExceeded {
                leaves: paths,
                limit: ENUMERATION_LIMIT,
            });
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return Err(Error::InvalidParameter(format!("tolerance must be >= 0, got {t}")));
            }
        }
        Ok(())
    }

    fn tol(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub checked: usize,
    pub tolerance: f64,
    /// Largest observed violation measure (`<= tolerance` passes).
    pub worst: f64,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &str, tolerance: f64) -> Self {
        SuiteResult {
            name: name.into(),
            checked: 0,
            tolerance,
            worst: f64::NEG_INFINITY,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Records one check whose violation measure is `excess` (`<= tolerance`
    /// passes).
    fn record(&mut self, excess: f64, describe: impl FnOnce() -> String) {
        self.checked += 1;
        if excess > self.worst || excess.is_nan() {
            self.worst = excess;
        }
        if excess.is_nan() || excess > self.tolerance {
            if self.failures.len() < 10 {
                self.failures.push(describe());
            } else if self.failures.len() == 10 {
                self.failures.push("further failures omitted".into());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }
}

fn instance(system: &System<f64>, extra: String) -> String {
    format!("{extra} system={}", save_system(system.spec()).trim_end())
}

fn random_table(rng: &mut ChaCha8Rng, system: &System<f64>, k: usize) -> Result<ValueTable<f64>> {
    let len = crate::augmented::AugmentedSpace::for_system(system, k)?.len();
    let values = (0..len).map(|_| rng.gen_range(-5.0..5.0)).collect();
    ValueTable::from_values(system, k, values)
}

struct SmallInstance {
    system: System<f64>,
    k: usize,
}

fn contraction_instances(config: &VerifyConfig, rng: &mut ChaCha8Rng) -> Vec<SmallInstance> {
    let n = config.contraction_size;
    (0..config.contraction_systems)
        .map(|i| {
            let gamma = SUITE_GAMMAS[i % SUITE_GAMMAS.len()];
            let (ns, na, nw) = (rng.gen_range(1..=n), rng.gen_range(1..=n), rng.gen_range(1..=n));
            let system = random_system(rng, ns, na, nw, gamma);
            SmallInstance {
                system,
                k: rng.gen_range(1..=config.max_k),
            }
        })
        .collect()
}

/// `||TJ - TJ'|| <= gamma ||J - J'|| + tol` on random table pairs.
pub fn contraction_suite(config: &VerifyConfig) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut suite = SuiteResult::new("contraction", config.tol(1e-12));
    for inst in contraction_instances(config, &mut rng) {
        let gamma = inst.system.gamma();
        for pair in 0..config.contraction_pairs {
            let a = random_table(&mut rng, &inst.system, inst.k)?;
            let b = random_table(&mut rng, &inst.system, inst.k)?;
            let (ta, _) = apply_regret_bellman(&inst.system, &a)?;
            let (tb, _) = apply_regret_bellman(&inst.system, &b)?;
            let lhs = sup_distance(ta.values(), tb.values());
            let rhs = gamma * sup_distance(a.values(), b.values());
            suite.record(lhs - rhs, || {
                instance(&inst.system, format!("k={} pair={pair} lhs={lhs} gamma*dist={rhs}", inst.k))
            });
        }
    }
    Ok(suite)
}

/// Certified fixed points on the contraction systems. Returns the
/// certification suite and the discounted nonnegativity checks.
pub fn fixed_point_suite(config: &VerifyConfig) -> Result<(SuiteResult, SuiteResult)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eps = config.epsilon;
    let mut cert = SuiteResult::new("fixed-point", config.tol(1e-12));
    let mut nonneg = SuiteResult::new("nonnegativity-discounted", config.tol(2.0 * eps));
    for inst in contraction_instances(config, &mut rng) {
        let gamma = inst.system.gamma();
        let fp = solve_fixed_point(&inst.system, &SolverConfig::new(inst.k, eps))?;
        let (_, moved) = apply_regret_bellman(&inst.system, &fp.table)?;
        let allowed = eps * (1.0 - gamma) / gamma;
        let excess = (fp.error_bound - eps).max(moved - allowed).max(if fp.converged { 0.0 } else { f64::INFINITY });
        cert.record(excess, || {
            instance(
                &inst.system,
                format!("k={} bound={} moved={moved} allowed={allowed}", inst.k, fp.error_bound),
            )
        });
        for s0 in 0..inst.system.num_states() {
            let (_, g0) = prefix_dp(&inst.system, &fp.table, s0)?;
            nonneg.record(-g0, || instance(&inst.system, format!("k={} s0={s0} G0={g0}", inst.k)));
        }
    }
    Ok((cert, nonneg))
}

/// Finite-horizon checks on the exhaustive grid: prefix DP against the
/// history tree, realized-regret tightness of the extracted controller, and
/// nonnegativity.
pub fn oracle_suites(config: &VerifyConfig) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut oracle = SuiteResult::new("oracle-equivalence", config.tol(1e-9));
    let mut realized = SuiteResult::new("realized-regret", config.tol(1e-9));
    let mut nonneg = SuiteResult::new("nonnegativity-finite", config.tol(2.0 * config.epsilon));
    for ns in 1..=config.max_states {
        for na in 1..=config.max_actions {
            for nw in 1..=config.max_disturbances {
                for k in 1..=config.max_k {
                    for horizon in k + 1..=config.max_horizon {
                        for i in 0..config.systems_per_cell {
                            let gamma = SUITE_GAMMAS[i % SUITE_GAMMAS.len()];
                            let system = random_system(&mut rng, ns, na, nw, gamma);
                            let s0 = rng.gen_range(0..ns);
                            let sol = solve_finite(&system, &FiniteSolverConfig::new(k, horizon)?, s0)?;
                            let tree = history_tree_regret(&system, s0, k, horizon)?;
                            let g0 = sol.regret;
                            let label = || format!("k={k} T={horizon} s0={s0} G0={g0}");
                            oracle.record((g0 - tree).abs(), || instance(&system, format!("{} tree={tree}", label())));
                            nonneg.record(-g0, || instance(&system, label()));
                            let mut ctl = extract_finite_policy(&system, &sol.stack, s0)?;
                            let wc = worst_case_realized_regret(&system, &sol.stack, &mut ctl, s0)?;
                            realized.record((wc.regret - g0).abs(), || {
                                instance(&system, format!("{} realized={} witness={:?}", label(), wc.regret, wc.witness))
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(vec![oracle, realized, nonneg])
}

/// Both return-difference identities on random instances.
pub fn decomposition_suite(config: &VerifyConfig) -> Result<SuiteResult> {
    let tol = config.tol(1e-12);
    let mut suite = SuiteResult::new("decomposition", tol);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let horizon = config.decomposition_horizon;
    for trial in 0..config.decomposition_trials {
        let k = rng.gen_range(1..horizon);
        let report = decomposition_check(k, horizon, 1, rng.gen(), tol)?;
        let worst = report.max_finite_error.max(report.max_discounted_error);
        suite.record(worst, || format!("trial {trial} k={k}: {}", report.violations.join("; ")));
    }
    Ok(suite)
}

pub fn run_verification(config: &VerifyConfig) -> Result<VerifyReport> {
    config.validate()?;
    let mut suites = vec![contraction_suite(config)?];
    let (cert, nonneg_discounted) = fixed_point_suite(config)?;
    suites.push(cert);
    suites.extend(oracle_suites(config)?);
    suites.push(decomposition_suite(config)?);
    suites.push(nonneg_discounted);
    Ok(VerifyReport { suites })
}
