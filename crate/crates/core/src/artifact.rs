//! JSON container for solved tables and policies.
//!
//! Fields appear in this order: `format_version`, `kind`, `spec_hash`, `k`,
//! `horizon`, `gamma`, `epsilon`, `residual_bound`, `sweeps`, `converged`,
//! `regret`, `values`, `policy`, `stages`. Fields that do not apply to a kind
//! are omitted. `spec_hash` is the SHA-256 of the system file produced by
//! [`save_system`](crate::system::save_system).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::StatePolicy;
use crate::discounted::{FixedPoint, RegretSolution, SolverConfig, StationaryPolicy, ValueTable};
use crate::error::{Error, Result};
use crate::finite::FiniteSolution;
use crate::system::{save_system, System};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Regret,
    FiniteRegret,
    Mdp,
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretEntry {
    pub s0: usize,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub t: usize,
    pub values: Vec<f64>,
    /// Absent for the terminal stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub format_version: u32,
    pub kind: ArtifactKind,
    pub spec_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regret: Vec<RegretEntry>,
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageEntry>,
}

pub fn spec_hash(system: &System<f64>) -> String {
    hex::encode(Sha256::digest(save_system(system.spec()).as_bytes()))
}

impl Artifact {
    pub fn from_regret(
        system: &System<f64>,
        config: &SolverConfig<f64>,
        solution: &RegretSolution<f64>,
        regret: Vec<RegretEntry>,
    ) -> Self {
        let fp = &solution.fixed_point;
        Artifact {
            format_version: ARTIFACT_FORMAT_VERSION,
            kind: ArtifactKind::Regret,
            spec_hash: spec_hash(system),
            k: Some(solution.k()),
            horizon: None,
            gamma: system.gamma(),
            epsilon: Some(config.epsilon),
            residual_bound: Some(fp.error_bound),
            sweeps: Some(fp.sweeps),
            converged: fp.converged,
            regret,
            values: fp.table.values().to_vec(),
            policy: solution.policy.actions().to_vec(),
            stages: Vec::new(),
        }
    }

    /// Stores `J_k` as `values` and every stage in `stages`.
    pub fn from_finite(system: &System<f64>, solution: &FiniteSolution<f64>, regret: Vec<RegretEntry>) -> Self {
        let config = solution.stack.config();
        let stages = (config.k..=config.horizon)
            .map(|t| StageEntry {
                t,
                values: solution.stack.stage(t).to_vec(),
                policy: (t < config.horizon).then(|| solution.stack.selectors(t).to_vec()),
            })
            .collect();
        Artifact {
            format_version: ARTIFACT_FORMAT_VERSION,
            kind: ArtifactKind::FiniteRegret,
            spec_hash: spec_hash(system),
            k: Some(config.k),
            horizon: Some(config.horizon),
            gamma: 1.0,
            epsilon: None,
            residual_bound: None,
            sweeps: None,
            converged: true,
            regret,
            values: solution.stack.stage(config.k).to_vec(),
            policy: solution.stack.selectors(config.k).to_vec(),
            stages,
        }
    }

    pub fn from_state_policy(system: &System<f64>, kind: ArtifactKind, epsilon: f64, policy: &StatePolicy<f64>) -> Self {
        Artifact {
            format_version: ARTIFACT_FORMAT_VERSION,
            kind,
            spec_hash: spec_hash(system),
            k: None,
            horizon: None,
            gamma: system.gamma(),
            epsilon: Some(epsilon),
            residual_bound: Some(policy.error_bound),
            sweeps: Some(policy.sweeps),
            converged: policy.converged,
            regret: Vec::new(),
            values: policy.values.clone(),
            policy: policy.actions.clone(),
            stages: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("artifact serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: Artifact = serde_json::from_str(text).map_err(Error::from_json)?;
        if artifact.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(Error::SchemaVersion {
                found: artifact.format_version as u64,
                expected: ARTIFACT_FORMAT_VERSION as u64,
            });
        }
        Ok(artifact)
    }

    /// Fails unless the artifact was solved for `system`.
    pub fn check_system(&self, system: &System<f64>) -> Result<()> {
        let expected = spec_hash(system);
        if self.spec_hash != expected {
            return Err(Error::ArtifactMismatch(format!(
                "artifact was solved for system {}, not {}",
                self.spec_hash, expected
            )));
        }
        Ok(())
    }

    /// Rebuilds a discounted solution from a `regret` artifact.
    pub fn to_regret_solution(&self, system: &System<f64>) -> Result<RegretSolution<f64>> {
        self.check_system(system)?;
        let k = match (self.kind, self.k) {
            (ArtifactKind::Regret, Some(k)) => k,
            _ => return Err(Error::ArtifactMismatch("not a discounted regret artifact".into())),
        };
        let mut table = ValueTable::from_values(system, k, self.values.clone())?;
        table.error_bound = self.residual_bound;
        let policy = StationaryPolicy::from_actions(system, k, self.policy.clone())?;
        let error_bound = self.residual_bound.unwrap_or(f64::INFINITY);
        let gamma = system.gamma();
        Ok(RegretSolution {
            fixed_point: FixedPoint {
                table,
                sweeps: self.sweeps.unwrap_or(0),
                residual: error_bound * (1.0 - gamma) / gamma,
                error_bound,
                converged: self.converged,
            },
            policy,
        })
    }

    /// State-feedback actions of an `mdp` or `robust` artifact.
    pub fn state_actions(&self, system: &System<f64>) -> Result<Vec<usize>> {
        self.check_system(system)?;
        if !matches!(self.kind, ArtifactKind::Mdp | ArtifactKind::Robust) {
            return Err(Error::ArtifactMismatch("not a state-feedback artifact".into()));
        }
        if self.policy.len() != system.num_states() {
            return Err(Error::TableSize {
                field: "policy".into(),
                expected: system.num_states(),
                found: self.policy.len(),
            });
        }
        Ok(self.policy.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discounted::solve_regret;
    use crate::finite::{solve_finite, FiniteSolverConfig};
    use crate::fixtures::{matching_pennies, random_system};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regret_artifact_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sys = random_system(&mut rng, 3, 2, 2, 0.7);
        let config = SolverConfig::new(2, 1e-8);
        let sol = solve_regret(&sys, &config).unwrap();
        let art = Artifact::from_regret(&sys, &config, &sol, vec![RegretEntry { s0: 0, regret: 1.25 }]);
        let text = art.to_json();
        let back = Artifact::from_json(&text).unwrap();
        assert_eq!(back, art);
        assert_eq!(back.to_json(), text);
        let rebuilt = back.to_regret_solution(&sys).unwrap();
        assert_eq!(rebuilt.table().values(), sol.table().values());
        assert_eq!(rebuilt.policy, sol.policy);
        let header: Vec<&str> = text.trim_start_matches('{').split(',').take(3).collect();
        assert_eq!(header[0], r#""format_version":1"#);
        assert_eq!(header[1], r#""kind":"regret""#);
    }

    #[test]
    fn mismatched_system_is_rejected() {
        let mp = matching_pennies(0.5);
        let sol = solve_regret(&mp, &SolverConfig::new(1, 1e-6)).unwrap();
        let art = Artifact::from_regret(&mp, &SolverConfig::new(1, 1e-6), &sol, Vec::new());
        let other = matching_pennies(0.6);
        assert!(matches!(art.to_regret_solution(&other), Err(Error::ArtifactMismatch(_))));
    }

    #[test]
    fn finite_artifact_lists_every_stage() {
        let mp = matching_pennies(0.5);
        let sol = solve_finite(&mp, &FiniteSolverConfig::new(1, 4).unwrap(), 0).unwrap();
        let art = Artifact::from_finite(&mp, &sol, vec![RegretEntry { s0: 0, regret: sol.regret }]);
        assert_eq!(art.stages.len(), 4);
        assert!(art.stages[3].policy.is_none());
        assert_eq!(art.horizon, Some(4));
        assert!(Artifact::from_json(&art.to_json().replace("\"format_version\":1", "\"format_version\":7")).is_err());
    }
}
