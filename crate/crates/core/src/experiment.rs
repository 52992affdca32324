//! Closed-loop experiments over controller and disturbance-model grids.
//!
//! Cells run in the order controller, model, seed. Seed `i` of every model
//! uses generator seed `base_seed + i`, so all controllers face the same
//! sequences. Numbers are written with 12 significant digits.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{
    clairvoyant_path_value, mdp_value_iteration, robust_value_iteration, BaselineConfig, DisturbanceDistribution,
};
use crate::controller::{Controller, OpenLoopController, RegretController, StateFeedbackController};
use crate::discounted::{solve_regret, RegretSolution, SolverConfig, StoppingRule, SweepMode};
use crate::disturbance::{truncated_poisson_pmf, DisturbanceModel, HmmModel, PoissonModel, Regime};
use crate::error::{Error, Result};
use crate::simulate::rollout;
use crate::system::{build_inventory_system, load_system, InventoryParams, System};

pub const STEP_HEADER: &str =
    "controller,model,param_lambda,param_lambda_low,param_lambda_high,persistence,seed,t,reward,cum_reward,avg_reward";
pub const AGGREGATE_HEADER: &str = "controller,model,param_lambda,param_lambda_low,param_lambda_high,persistence,mean_avg_reward,stderr_avg_reward,n_seeds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    Inventory(InventoryParams),
    /// Path to a system file, resolved by the caller.
    Path(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControllerSpec {
    /// Expected-reward policy designed for a clamped Poisson rate, or for an
    /// explicit distribution over the disturbance alphabet.
    Mdp {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probabilities: Option<Vec<f64>>,
    },
    Robust,
    Regret { k: usize },
    /// Best action sequence for each sampled path, known in advance.
    Clairvoyant,
}

impl ControllerSpec {
    pub fn id(&self) -> String {
        match self {
            ControllerSpec::Mdp { lambda: Some(l), .. } => format!("mdp(lambda={})", format_number(*l)),
            ControllerSpec::Mdp { .. } => "mdp(custom)".into(),
            ControllerSpec::Robust => "robust".into(),
            ControllerSpec::Regret { k } => format!("regret(k={k})"),
            ControllerSpec::Clairvoyant => "clairvoyant".into(),
        }
    }
}

/// Disturbance model as written in configs; `w_max` defaults to the largest
/// disturbance of the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Poisson {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_max: Option<usize>,
    },
    Hmm {
        lambda_low: f64,
        lambda_high: f64,
        persistence: f64,
        #[serde(default)]
        initial_regime: Regime,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_max: Option<usize>,
    },
}

impl ModelSpec {
    pub fn resolve(&self, num_disturbances: usize) -> Result<DisturbanceModel> {
        let top = num_disturbances - 1;
        let pick = |w: Option<usize>| -> Result<usize> {
            let w = w.unwrap_or(top);
            if w > top {
                return Err(Error::InvalidParameter(format!(
                    "model w_max {w} exceeds the largest disturbance {top}"
                )));
            }
            Ok(w)
        };
        let model = match *self {
            ModelSpec::Poisson { lambda, w_max } => DisturbanceModel::Poisson(PoissonModel {
                lambda,
                w_max: pick(w_max)?,
            }),
            ModelSpec::Hmm {
                lambda_low,
                lambda_high,
                persistence,
                initial_regime,
                w_max,
            } => DisturbanceModel::Hmm(HmmModel {
                lambda_low,
                lambda_high,
                persistence,
                initial_regime,
                w_max: pick(w_max)?,
            }),
        };
        model.validate()?;
        Ok(model)
    }
}

fn default_epsilon() -> f64 {
    1e-6
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSource,
    pub controllers: Vec<ControllerSpec>,
    pub models: Vec<ModelSpec>,
    pub horizon: usize,
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub initial_state: usize,
    /// Solver tolerance shared by every controller.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub stopping: StoppingRule,
    #[serde(default)]
    pub sweep_mode: SweepMode,
    #[serde(default = "default_true")]
    pub write_steps: bool,
    /// Output directory, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(Error::from_json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.controllers.is_empty() {
            return Err(Error::InvalidParameter("experiment needs at least one controller".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("experiment needs at least one disturbance model".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidParameter("seeds must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        for c in &self.controllers {
            match c {
                ControllerSpec::Regret { k: 0 } => return Err(Error::ZeroLookahead),
                ControllerSpec::Mdp { lambda, probabilities } if lambda.is_some() == probabilities.is_some() => {
                    return Err(Error::InvalidParameter(
                        "mdp controller needs exactly one of lambda or probabilities".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization cannot fail");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Builds the system, reading `Path` sources through `read`.
    pub fn load_system(&self, read: impl FnOnce(&str) -> Result<String>) -> Result<System<f64>> {
        let spec = match &self.system {
            SystemSource::Inventory(p) => build_inventory_system(p)?,
            SystemSource::Path(path) => load_system(&read(path)?)?,
        };
        System::new(spec)
    }
}

/// `%.12g`-style formatting.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    } else {
        format!("{}e{}{:02}", trim_fraction(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn model_columns(model: &DisturbanceModel) -> String {
    match model {
        DisturbanceModel::Poisson(m) => format!("poisson,{},,,", format_number(m.lambda)),
        DisturbanceModel::Hmm(m) => format!(
            "hmm,,{},{},{}",
            format_number(m.lambda_low),
            format_number(m.lambda_high),
            format_number(m.persistence)
        ),
    }
}

/// Per-controller solve outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerReport {
    pub id: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret: Option<f64>,
}

/// Mean and standard error of the final average reward over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub controller: String,
    pub model: DisturbanceModel,
    pub mean_avg_reward: f64,
    pub stderr_avg_reward: f64,
    pub n_seeds: usize,
}

impl AggregateRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.controller,
            model_columns(&self.model),
            format_number(self.mean_avg_reward),
            format_number(self.stderr_avg_reward),
            self.n_seeds
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub aggregates: Vec<AggregateRow>,
    pub controllers: Vec<ControllerReport>,
    pub step_records: usize,
}

impl ExperimentOutcome {
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from(AGGREGATE_HEADER);
        out.push('\n');
        for row in &self.aggregates {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn find(&self, controller: &str, model: &DisturbanceModel) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|r| r.controller == controller && &r.model == model)
    }

    pub fn all_converged(&self) -> bool {
        self.controllers.iter().all(|c| c.status == "ok")
    }
}

/// Run manifest: enough to reproduce the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub package: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub controllers: Vec<ControllerReport>,
    pub step_records: usize,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Self {
        Manifest {
            config_sha256: config.hash(),
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seeds: (0..config.seeds as u64).map(|i| config.base_seed + i).collect(),
            controllers: outcome.controllers.clone(),
            step_records: outcome.step_records,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        s.push('\n');
        s
    }
}

enum Prepared {
    StateFeedback(Vec<usize>),
    Regret(Box<RegretSolution<f64>>),
    Clairvoyant,
}

fn prepare(system: &System<f64>, spec: &ControllerSpec, config: &ExperimentConfig) -> (ControllerReport, Option<Prepared>) {
    let mut report = ControllerReport {
        id: spec.id(),
        status: "ok".into(),
        sweeps: None,
        error_bound: None,
        regret: None,
    };
    let baseline = BaselineConfig::new(config.epsilon);
    let result: Result<Prepared> = (|| match spec {
        ControllerSpec::Mdp { lambda, probabilities } => {
            let p = match (lambda, probabilities) {
                (Some(l), _) => truncated_poisson_pmf(*l, system.num_disturbances() - 1),
                (_, Some(p)) => p.clone(),
                _ => unreachable!("validated"),
            };
            let policy = mdp_value_iteration(system, &DisturbanceDistribution::new(p)?, &baseline)?;
            report.sweeps = Some(policy.sweeps);
            report.error_bound = Some(policy.error_bound);
            if !policy.converged {
                return Err(Error::InvalidParameter("value iteration did not converge".into()));
            }
            Ok(Prepared::StateFeedback(policy.actions))
        }
        ControllerSpec::Robust => {
            let policy = robust_value_iteration(system, &baseline)?;
            report.sweeps = Some(policy.sweeps);
            report.error_bound = Some(policy.error_bound);
            if !policy.converged {
                return Err(Error::InvalidParameter("value iteration did not converge".into()));
            }
            Ok(Prepared::StateFeedback(policy.actions))
        }
        ControllerSpec::Regret { k } => {
            let mut solver = SolverConfig::new(*k, config.epsilon);
            solver.stopping = config.stopping;
            solver.sweep_mode = config.sweep_mode;
            let solution = solve_regret(system, &solver)?;
            report.sweeps = Some(solution.fixed_point.sweeps);
            report.error_bound = Some(solution.fixed_point.error_bound);
            if !solution.fixed_point.converged {
                return Err(Error::InvalidParameter("regret value iteration did not converge".into()));
            }
            let (_, regret) = crate::discounted::prefix_dp(system, solution.table(), config.initial_state)?;
            report.regret = Some(regret);
            Ok(Prepared::Regret(Box::new(solution)))
        }
        ControllerSpec::Clairvoyant => Ok(Prepared::Clairvoyant),
    })();
    match result {
        Ok(p) => (report, Some(p)),
        Err(e) => {
            report.status = format!("failed: {e}");
            (report, None)
        }
    }
}

/// Runs every cell, streaming step records (with header) into `steps` when
/// `write_steps` is set. Controllers that fail to solve are reported and
/// skipped.
pub fn run_experiment<W: Write>(
    system: &System<f64>,
    config: &ExperimentConfig,
    steps: &mut W,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    system.check_state(config.initial_state)?;
    let models = config
        .models
        .iter()
        .map(|m| m.resolve(system.num_disturbances()))
        .collect::<Result<Vec<_>>>()?;
    if config.write_steps {
        writeln!(steps, "{STEP_HEADER}")?;
    }
    let s0 = config.initial_state;
    let mut paths: Vec<Vec<Vec<usize>>> = Vec::with_capacity(models.len());
    for model in &models {
        paths.push(
            (0..config.seeds as u64)
                .map(|i| model.sample(config.horizon, config.base_seed + i))
                .collect::<Result<_>>()?,
        );
    }
    let mut outcome = ExperimentOutcome {
        aggregates: Vec::new(),
        controllers: Vec::new(),
        step_records: 0,
    };
    for spec in &config.controllers {
        let (report, prepared) = prepare(system, spec, config);
        let id = report.id.clone();
        outcome.controllers.push(report);
        let Some(prepared) = prepared else { continue };
        let mut controller: Box<dyn Controller + '_> = match &prepared {
            Prepared::StateFeedback(actions) => Box::new(StateFeedbackController::new(system, actions)?),
            Prepared::Regret(solution) => Box::new(RegretController::new(system, solution, s0)?),
            Prepared::Clairvoyant => Box::new(OpenLoopController::new(Vec::new())),
        };
        for (model, model_paths) in models.iter().zip(&paths) {
            let columns = model_columns(model);
            let mut finals = Vec::with_capacity(config.seeds);
            for (i, path) in model_paths.iter().enumerate() {
                let seed = config.base_seed + i as u64;
                if let Prepared::Clairvoyant = prepared {
                    let (_, actions) = clairvoyant_path_value(system, s0, path, false)?;
                    controller = Box::new(OpenLoopController::new(actions));
                }
                let traj = rollout(system, &mut controller, s0, path, 1.0)?;
                let mut cum = 0.0;
                for (t, &r) in traj.rewards.iter().enumerate() {
                    cum += r;
                    if config.write_steps {
                        writeln!(
                            steps,
                            "{id},{columns},{seed},{t},{},{},{}",
                            format_number(r),
                            format_number(cum),
                            format_number(cum / (t + 1) as f64)
                        )?;
                    }
                }
                outcome.step_records += traj.rewards.len();
                finals.push(cum / config.horizon as f64);
            }
            let n = finals.len() as f64;
            let mean = finals.iter().sum::<f64>() / n;
            let stderr = if finals.len() > 1 {
                (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            outcome.aggregates.push(AggregateRow {
                controller: id.clone(),
                model: *model,
                mean_avg_reward: mean,
                stderr_avg_reward: stderr,
                n_seeds: finals.len(),
            });
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digit_formatting() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(2.0), "2");
        assert_eq!(format_number(-27.5), "-27.5");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(123456789012345.0), "1.23456789012e+14");
        assert_eq!(format_number(1.5e-7), "1.5e-07");
        assert_eq!(format_number(-3978.009999999997), "-3978.01");
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::parse(
            r#"{
                "system": {"inventory": {"s_max": 4, "a_max": 4, "w_max": 5, "holding": 1, "penalty": 9, "gamma": 0.9}},
                "controllers": [{"kind": "robust"}, {"kind": "regret", "k": 1}],
                "models": [{"kind": "poisson", "lambda": 1}, {"kind": "poisson", "lambda": 2},
                           {"kind": "hmm", "lambda_low": 1, "lambda_high": 3, "persistence": 0.9}],
                "horizon": 10,
                "seeds": 1
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn record_counting_contract() {
        let config = small_config();
        let system = config.load_system(|_| unreachable!()).unwrap();
        let mut buf = Vec::new();
        let outcome = run_experiment(&system, &config, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 60);
        assert_eq!(outcome.step_records, 60);
        assert_eq!(outcome.aggregates.len(), 6);
        assert!(outcome.all_converged());
        assert!(text.lines().nth(1).unwrap().starts_with("robust,poisson,1,,,,0,0,"));
        assert!(outcome.aggregate_csv().lines().nth(3).unwrap().starts_with("robust,hmm,,1,3,0.9,"));
    }

    #[test]
    fn identical_runs_are_byte_identical() {
        let config = small_config();
        let system = config.load_system(|_| unreachable!()).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let oa = run_experiment(&system, &config, &mut a).unwrap();
        let ob = run_experiment(&system, &config, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa.aggregate_csv(), ob.aggregate_csv());
        assert_eq!(config.hash(), small_config().hash());
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::parse(r#"{"system": {"path": "x"}, "controllers": [], "models": [], "horizon": 1, "seeds": 1}"#).is_err());
        let mut c = small_config();
        c.controllers.push(ControllerSpec::Mdp {
            lambda: None,
            probabilities: None,
        });
        assert!(c.validate().is_err());
        let system = small_config().load_system(|_| unreachable!()).unwrap();
        let bad = ModelSpec::Poisson {
            lambda: 1.0,
            w_max: Some(99),
        };
        assert!(bad.resolve(system.num_disturbances()).is_err());
    }

    #[test]
    fn clairvoyant_dominates_on_each_path() {
        let mut config = small_config();
        config.controllers = vec![ControllerSpec::Robust, ControllerSpec::Clairvoyant];
        config.write_steps = false;
        let system = config.load_system(|_| unreachable!()).unwrap();
        let outcome = run_experiment(&system, &config, &mut std::io::sink()).unwrap();
        for model in config.models.iter().map(|m| m.resolve(6).unwrap()) {
            let r = outcome.find("robust", &model).unwrap();
            let c = outcome.find("clairvoyant", &model).unwrap();
            assert!(c.mean_avg_reward >= r.mean_avg_reward);
        }
    }
}
