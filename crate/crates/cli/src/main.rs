//! `regretctl` command-line tool.
//!
//! Exit codes: 0 success, 1 parse or validation error, 2 solver did not
//! converge (outputs are still written), 3 I/O error, 4 verification failure.
//! Results go to stdout as JSON lines; diagnostics go to stderr.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use regretctl::artifact::{Artifact, ArtifactKind, RegretEntry};
use regretctl::experiment::{run_experiment, ExperimentConfig, Manifest};
use regretctl::verify::{run_verification, VerifyConfig};
use regretctl::{
    build_inventory_system, load_distribution, load_system, mdp_value_iteration, prefix_dp, robust_value_iteration,
    rollout, sample_hmm, sample_iid, save_system, solve_finite, solve_regret, BaselineConfig, Controller, Error,
    FiniteSolverConfig, HmmModel, InventoryParams, PoissonModel, Regime, RegretController, SolverConfig,
    StateFeedbackController, StoppingRule, SweepMode, System, System64,
};

const EXIT_INVALID: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Io(_)) { EXIT_IO } else { EXIT_INVALID };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(name = "regretctl", version, about = "Regret-optimal control for finite-state systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a system file and print its sizes and reward bound.
    Validate {
        /// System file (JSON).
        #[arg(long)]
        system: PathBuf,
    },
    /// Write the lost-sales inventory system.
    InventoryGen(InventoryArgs),
    /// Solve the discounted regret problem or a baseline and write an artifact.
    Solve(SolveArgs),
    /// Solve the finite-horizon regret problem and write an artifact.
    SolveFinite(SolveFiniteArgs),
    /// Roll out a solved policy on a disturbance sequence.
    Simulate(SimulateArgs),
    /// Run an experiment config and write step, aggregate and manifest files.
    Experiment(ExperimentArgs),
    /// Run the randomized property and oracle suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct InventoryArgs {
    #[arg(long)]
    s_max: usize,
    #[arg(long)]
    a_max: usize,
    #[arg(long)]
    w_max: usize,
    /// Holding cost per unit left over.
    #[arg(long, default_value_t = 1.0)]
    holding: f64,
    /// Penalty per unit of unmet demand.
    #[arg(long, default_value_t = 9.0)]
    penalty: f64,
    #[arg(long, default_value_t = 0.995)]
    gamma: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Regret,
    Mdp,
    Robust,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stopping {
    Residual,
    SpanBound,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    Synchronous,
    InPlace,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long, value_enum, default_value = "regret")]
    mode: Mode,
    /// Lookahead depth of the benchmark (regret mode).
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Replaces the discount factor stored in the system file.
    #[arg(long)]
    gamma: Option<f64>,
    /// Target sup-norm distance from the exact fixed point.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_sweeps: usize,
    #[arg(long, value_enum, default_value = "residual")]
    stopping: Stopping,
    #[arg(long, value_enum, default_value = "synchronous")]
    sweep_mode: Sweep,
    /// Disturbance distribution file `{"probabilities": [...]}` (mdp mode).
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Initial states to report; all states when absent.
    #[arg(long, value_delimiter = ',')]
    s0: Vec<usize>,
    /// Artifact file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveFiniteArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    horizon: usize,
    /// Initial state whose prefix tables drive the controller.
    #[arg(long, value_delimiter = ',')]
    s0: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    system: PathBuf,
    /// Artifact from `solve` (regret, mdp or robust).
    #[arg(long)]
    artifact: PathBuf,
    /// JSON array of disturbance indices.
    #[arg(long, conflicts_with_all = ["lambda", "hmm"])]
    disturbances: Option<PathBuf>,
    /// Sample i.i.d. clamped Poisson demand with this rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Sample from a two-regime model: `low,high,persistence`.
    #[arg(long, value_delimiter = ',')]
    hmm: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    s0: usize,
    /// Per-step CSV output; stdout summary only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed count.
    #[arg(long)]
    seeds: Option<usize>,
    /// Overrides the config's horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Skip the per-step CSV.
    #[arg(long)]
    no_steps: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    max_states: usize,
    #[arg(long, default_value_t = 3)]
    max_actions: usize,
    #[arg(long, default_value_t = 3)]
    max_disturbances: usize,
    #[arg(long, default_value_t = 2)]
    max_k: usize,
    #[arg(long, default_value_t = 5)]
    max_horizon: usize,
    #[arg(long, default_value_t = 50)]
    systems_per_cell: usize,
    #[arg(long, default_value_t = 20)]
    contraction_systems: usize,
    #[arg(long, default_value_t = 100)]
    contraction_pairs: usize,
    #[arg(long, default_value_t = 100)]
    decomposition_trials: usize,
    /// Replaces every per-suite tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Also write the full report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn write(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("cannot write {}: {e}", path.display()),
    }
}

fn load(path: &Path, gamma: Option<f64>) -> CliResult<System64> {
    let mut spec = load_system(&read(path)?)?;
    if let Some(g) = gamma {
        spec.gamma = g;
    }
    Ok(System::new(spec)?)
}

fn initial_states(system: &System64, requested: &[usize]) -> Vec<usize> {
    if requested.is_empty() {
        (0..system.num_states()).collect()
    } else {
        requested.to_vec()
    }
}

fn validate(system: &Path) -> CliResult {
    let sys = load(system, None)?;
    println!(
        "{}",
        json!({
            "valid": true,
            "num_states": sys.num_states(),
            "num_actions": sys.num_actions(),
            "num_disturbances": sys.num_disturbances(),
            "gamma": sys.gamma(),
            "r_max": sys.r_max(),
        })
    );
    Ok(())
}

fn inventory_gen(args: InventoryArgs) -> CliResult {
    let params = InventoryParams {
        s_max: args.s_max,
        a_max: args.a_max,
        w_max: args.w_max,
        holding: args.holding,
        penalty: args.penalty,
        gamma: args.gamma,
    };
    let text = save_system(&build_inventory_system::<f64>(&params)?);
    match args.out {
        Some(path) => write(&path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn solve(args: SolveArgs) -> CliResult {
    let sys = load(&args.system, args.gamma)?;
    let baseline = BaselineConfig {
        epsilon: args.epsilon,
        max_sweeps: args.max_sweeps,
    };
    let (artifact, converged) = match args.mode {
        Mode::Regret => {
            let mut config = SolverConfig::new(args.k, args.epsilon);
            config.max_sweeps = args.max_sweeps;
            config.stopping = match args.stopping {
                Stopping::Residual => StoppingRule::Residual,
                Stopping::SpanBound => StoppingRule::SpanBound,
            };
            config.sweep_mode = match args.sweep_mode {
                Sweep::Synchronous => SweepMode::Synchronous,
                Sweep::InPlace => SweepMode::InPlace,
            };
            let solution = solve_regret(&sys, &config)?;
            let mut entries = Vec::new();
            for s0 in initial_states(&sys, &args.s0) {
                let (_, regret) = prefix_dp(&sys, solution.table(), s0)?;
                println!("{}", json!({ "s0": s0, "regret": regret }));
                entries.push(RegretEntry { s0, regret });
            }
            let converged = solution.fixed_point.converged;
            (Artifact::from_regret(&sys, &config, &solution, entries), converged)
        }
        Mode::Mdp => {
            let Some(dist_path) = args.dist else {
                return Err(Failure::invalid("mdp mode requires --dist <FILE>"));
            };
            let dist = load_distribution(&read(&dist_path)?)?;
            let policy = mdp_value_iteration(&sys, &dist, &baseline)?;
            println!("{}", json!({ "sweeps": policy.sweeps, "converged": policy.converged, "error_bound": policy.error_bound }));
            (
                Artifact::from_state_policy(&sys, ArtifactKind::Mdp, args.epsilon, &policy),
                policy.converged,
            )
        }
        Mode::Robust => {
            let policy = robust_value_iteration(&sys, &baseline)?;
            println!("{}", json!({ "sweeps": policy.sweeps, "converged": policy.converged, "error_bound": policy.error_bound }));
            (
                Artifact::from_state_policy(&sys, ArtifactKind::Robust, args.epsilon, &policy),
                policy.converged,
            )
        }
    };
    write(&args.out, &artifact.to_json())?;
    if !converged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!("no certificate within {} sweeps; artifact written with converged=false", args.max_sweeps),
        });
    }
    Ok(())
}

fn solve_finite_cmd(args: SolveFiniteArgs) -> CliResult {
    let sys = load(&args.system, None)?;
    let config = FiniteSolverConfig::new(args.k, args.horizon)?;
    let states = initial_states(&sys, &args.s0);
    let solution = solve_finite(&sys, &config, states[0])?;
    let mut entries = Vec::new();
    for s0 in states {
        let (_, regret) = regretctl::finite_prefix_dp(&sys, &solution.stack, s0)?;
        println!("{}", json!({ "s0": s0, "regret": regret }));
        entries.push(RegretEntry { s0, regret });
    }
    write(&args.out, &Artifact::from_finite(&sys, &solution, entries).to_json())
}

fn simulate(args: SimulateArgs) -> CliResult {
    let sys = load(&args.system, None)?;
    let artifact = Artifact::from_json(&read(&args.artifact)?)?;
    let w_max = sys.num_disturbances() - 1;
    let path: Vec<usize> = match (&args.disturbances, args.lambda, &args.hmm) {
        (Some(file), _, _) => serde_json::from_str(&read(file)?)
            .map_err(|e| Failure::invalid(format!("{}: {e}", file.display())))?,
        (None, Some(lambda), _) => sample_iid(&PoissonModel::new(lambda, w_max)?, args.horizon, args.seed)?,
        (None, None, Some(h)) => {
            if h.len() != 3 {
                return Err(Failure::invalid("--hmm takes low,high,persistence"));
            }
            let model = HmmModel {
                lambda_low: h[0],
                lambda_high: h[1],
                persistence: h[2],
                initial_regime: Regime::Low,
                w_max,
            };
            sample_hmm(&model, args.horizon, args.seed)?.0
        }
        _ => return Err(Failure::invalid("give one of --disturbances, --lambda or --hmm")),
    };
    let solution;
    let actions;
    let mut controller: Box<dyn Controller + '_> = match artifact.kind {
        ArtifactKind::Regret => {
            solution = artifact.to_regret_solution(&sys)?;
            Box::new(RegretController::new(&sys, &solution, args.s0)?)
        }
        ArtifactKind::Mdp | ArtifactKind::Robust => {
            actions = artifact.state_actions(&sys)?;
            Box::new(StateFeedbackController::new(&sys, &actions)?)
        }
        ArtifactKind::FiniteRegret => {
            return Err(Failure::invalid("simulate takes discounted or baseline artifacts"));
        }
    };
    let traj = rollout(&sys, &mut controller, args.s0, &path, sys.gamma())?;
    if let Some(out) = &args.out {
        let file = fs::File::create(out).map_err(|e| io_failure(out, e))?;
        let mut w = BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "t,state,action,disturbance,reward")?;
            for t in 0..traj.len() {
                writeln!(
                    w,
                    "{t},{},{},{},{}",
                    traj.states[t],
                    traj.actions[t],
                    traj.disturbances[t],
                    regretctl::experiment::format_number(traj.rewards[t])
                )?;
            }
            w.flush()
        };
        body().map_err(|e| io_failure(out, e))?;
    }
    println!(
        "{}",
        json!({
            "steps": traj.len(),
            "total_return": traj.total_return,
            "discounted_return": traj.discounted_return,
            "final_state": traj.states[traj.len()],
        })
    );
    Ok(())
}

fn experiment(args: ExperimentArgs) -> CliResult {
    let text = read(&args.config)?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seeds) = args.seeds {
        config.seeds = seeds;
    }
    if let Some(horizon) = args.horizon {
        config.horizon = horizon;
    }
    if args.no_steps {
        config.write_steps = false;
    }
    config.validate()?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let out_dir = match (&args.out, &config.output) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => PathBuf::from("experiment-out"),
    };
    let system = config.load_system(|p| {
        let path = base.join(p);
        fs::read_to_string(&path).map_err(Error::Io)
    })?;
    fs::create_dir_all(&out_dir).map_err(|e| io_failure(&out_dir, e))?;
    let steps_path = out_dir.join("steps.csv");
    let outcome = if config.write_steps {
        let file = fs::File::create(&steps_path).map_err(|e| io_failure(&steps_path, e))?;
        let mut w = BufWriter::new(file);
        let outcome = run_experiment(&system, &config, &mut w)?;
        w.flush().map_err(|e| io_failure(&steps_path, e))?;
        outcome
    } else {
        run_experiment(&system, &config, &mut std::io::sink())?
    };
    write(&out_dir.join("aggregate.csv"), &outcome.aggregate_csv())?;
    write(&out_dir.join("manifest.json"), &Manifest::new(&config, &outcome).to_json())?;
    for c in &outcome.controllers {
        println!("{}", json!({ "controller": c.id, "status": c.status, "sweeps": c.sweeps }));
    }
    if !outcome.all_converged() {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: "at least one controller failed to solve; see manifest.json".into(),
        });
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> CliResult {
    let config = VerifyConfig {
        seed: args.seed,
        contraction_systems: args.contraction_systems,
        contraction_pairs: args.contraction_pairs,
        max_states: args.max_states,
        max_actions: args.max_actions,
        max_disturbances: args.max_disturbances,
        max_k: args.max_k,
        max_horizon: args.max_horizon,
        systems_per_cell: args.systems_per_cell,
        decomposition_trials: args.decomposition_trials,
        tolerance: args.tolerance,
        ..VerifyConfig::default()
    };
    let report = run_verification(&config)?;
    for s in &report.suites {
        println!(
            "{}",
            json!({ "suite": s.name, "passed": s.passed(), "checked": s.checked, "worst": s.worst, "tolerance": s.tolerance })
        );
        for f in &s.failures {
            eprintln!("{}: {f}", s.name);
        }
    }
    if let Some(path) = &args.report {
        let mut text = serde_json::to_string_pretty(&report).expect("report serialization cannot fail");
        text.push('\n');
        write(path, &text)?;
    }
    if !report.passed() {
        return Err(Failure {
            code: EXIT_VERIFY,
            message: "verification failed".into(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Validate { system } => validate(&system),
        Command::InventoryGen(a) => inventory_gen(a),
        Command::Solve(a) => solve(a),
        Command::SolveFinite(a) => solve_finite_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
