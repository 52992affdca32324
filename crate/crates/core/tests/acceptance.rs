//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p regretctl-core --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regretctl::artifact::{Artifact, RegretEntry};
use regretctl::disturbance::DisturbanceModel;
use regretctl::experiment::{run_experiment, ExperimentConfig, ExperimentOutcome, Manifest};
use regretctl::fixtures::{matching_pennies, random_system};
use regretctl::oracle::{history_tree_regret, history_tree_regret_discounted};
use regretctl::verify::{contraction_suite, decomposition_suite, fixed_point_suite, oracle_suites, SuiteResult, VerifyConfig};
use regretctl::{build_inventory_system, prefix_dp, solve_finite, solve_regret, FiniteSolverConfig, SolverConfig, System};

const EPSILON: f64 = 1e-6;
const CONTRACTION_TOL: f64 = 1e-12;
const FIXED_POINT_TOL: f64 = 1e-12;
const FINITE_CLOSED_FORM_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-9;
const REALIZED_TOL: f64 = 1e-9;
const DECOMPOSITION_TOL: f64 = 1e-12;
const NONNEG_TOL: f64 = 2.0 * EPSILON;

const CONTRACTION_BUDGET: Duration = Duration::from_secs(10);
const ORACLE_BUDGET: Duration = Duration::from_secs(5 * 60);
const FIGURE_BUDGET: Duration = Duration::from_secs(30 * 60);

struct Ledger {
    lines: Vec<(String, bool, String)>,
}

impl Ledger {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((name.into(), pass, detail));
    }
}

fn within(suite: &SuiteResult, tol: f64, expected: usize) -> bool {
    suite.checked == expected && suite.failures.is_empty() && suite.worst <= tol
}

fn describe(suite: &SuiteResult, elapsed: Duration) -> String {
    format!("{} checks, worst {:e}, {:.2?}", suite.checked, suite.worst, elapsed)
}

fn matching_pennies_closed_form() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for gamma in [0.5, 0.9] {
        let mp = matching_pennies(gamma);
        let exact = 1.0 / (1.0 - gamma);
        let (tree, bound) = history_tree_regret_discounted(&mp, 0, 1, 8).unwrap();
        let confirmed = (tree - exact).abs() <= bound;
        let sol = solve_regret(&mp, &SolverConfig::new(1, EPSILON)).unwrap();
        let (_, g0) = prefix_dp(&mp, sol.table(), 0).unwrap();
        ok &= confirmed && (g0 - exact).abs() <= 2.0 * EPSILON;
        parts.push(format!("gamma={gamma} G0={g0} tree8={tree:.6}±{bound:.3}"));
    }
    let mp = matching_pennies(0.5);
    for horizon in [2usize, 3, 4] {
        let tree = history_tree_regret(&mp, 0, 1, horizon).unwrap();
        let sol = solve_finite(&mp, &FiniteSolverConfig::new(1, horizon).unwrap(), 0).unwrap();
        let t = horizon as f64;
        ok &= (tree - t).abs() <= FINITE_CLOSED_FORM_TOL && (sol.regret - t).abs() <= FINITE_CLOSED_FORM_TOL;
        parts.push(format!("T={horizon} G0={} tree={tree}", sol.regret));
    }
    (ok, parts.join("; "))
}

fn figure_config() -> ExperimentConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/fig1.json");
    ExperimentConfig::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Cell {
    mean: f64,
    se: f64,
}

fn cell(outcome: &ExperimentOutcome, controller: &str, lambda: f64) -> Cell {
    let row = outcome
        .aggregates
        .iter()
        .find(|r| r.controller == controller && matches!(r.model, DisturbanceModel::Poisson(m) if m.lambda == lambda))
        .unwrap_or_else(|| panic!("no row for {controller} at lambda={lambda}"));
    Cell {
        mean: row.mean_avg_reward,
        se: row.stderr_avg_reward,
    }
}

/// `a` beats `b` by more than one standard error of either.
fn beats(a: &Cell, b: &Cell) -> bool {
    a.mean - b.mean > a.se.max(b.se)
}

fn figure_orderings() -> (bool, String) {
    let mut config = figure_config();
    config.write_steps = false;
    let started = Instant::now();
    let system = config.load_system(|_| unreachable!()).unwrap();
    let outcome = run_experiment(&system, &config, &mut std::io::sink()).unwrap();
    let elapsed = started.elapsed();
    let (mdp, robust, regrets) = ("mdp(lambda=5)", "robust", ["regret(k=1)", "regret(k=2)"]);

    let design = cell(&outcome, mdp, 5.0);
    let a = [robust, regrets[0], regrets[1]]
        .iter()
        .all(|c| beats(&design, &cell(&outcome, c, 5.0)));

    let gaps: Vec<f64> = (5..=12)
        .map(|l| cell(&outcome, robust, l as f64).mean - cell(&outcome, mdp, l as f64).mean)
        .collect();
    let b = gaps.windows(2).all(|w| w[1] > w[0]);

    let winners: Vec<String> = (1..=12)
        .flat_map(|l| regrets.iter().map(move |r| (l, *r)))
        .filter(|&(l, r)| {
            let x = cell(&outcome, r, l as f64);
            beats(&x, &cell(&outcome, mdp, l as f64)) && beats(&x, &cell(&outcome, robust, l as f64))
        })
        .map(|(l, r)| format!("{r}@{l}"))
        .collect();
    let c = !winners.is_empty();

    let in_time = elapsed < FIGURE_BUDGET && outcome.all_converged();
    let gaps: Vec<String> = gaps.iter().map(|g| format!("{g:.3}")).collect();
    (
        a && b && c && in_time,
        format!(
            "(a) {a} mdp@5={:.3}±{:.3}; (b) {b} robust-mdp for lambda 5..12 = [{}]; (c) {c} winners {winners:?}; {elapsed:.2?}",
            design.mean,
            design.se,
            gaps.join(", ")
        ),
    )
}

fn determinism() -> (bool, String) {
    let mut config = figure_config();
    config.horizon = 150;
    config.seeds = 2;
    let run = || {
        let system = config.load_system(|_| unreachable!()).unwrap();
        let mut steps = Vec::new();
        let outcome = run_experiment(&system, &config, &mut steps).unwrap();
        let manifest = Manifest::new(&config, &outcome).to_json();
        let art_system = build_inventory_system::<f64>(&regretctl::InventoryParams {
            s_max: 6,
            a_max: 6,
            w_max: 8,
            holding: 1.0,
            penalty: 9.0,
            gamma: 0.95,
        })
        .unwrap();
        let art_system = System::new(art_system).unwrap();
        let solver = SolverConfig::new(1, EPSILON);
        let sol = solve_regret(&art_system, &solver).unwrap();
        let (_, g0) = prefix_dp(&art_system, sol.table(), 0).unwrap();
        let artifact = Artifact::from_regret(&art_system, &solver, &sol, vec![RegretEntry { s0: 0, regret: g0 }]).to_json();
        (steps, outcome.aggregate_csv(), manifest, artifact)
    };
    let first = run();
    let second = run();
    let same = first == second && !first.0.is_empty();
    (
        same,
        format!("steps {} bytes, aggregate {} bytes, manifest {} bytes, artifact {} bytes", first.0.len(), first.1.len(), first.2.len(), first.3.len()),
    )
}

/// Printed only: is G0 nondecreasing in k on small random systems?
fn lookahead_monotonicity() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut checked, mut violations) = (0, 0);
    for _ in 0..200 {
        let (ns, na, nw) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let system = random_system(&mut rng, ns, na, nw, 0.5);
        let s0 = rng.gen_range(0..ns);
        let g: Vec<f64> = (1..=3)
            .map(|k| solve_finite(&system, &FiniteSolverConfig::new(k, 5).unwrap(), s0).unwrap().regret)
            .collect();
        checked += 1;
        if g.windows(2).any(|w| w[1] < w[0] - 1e-9) {
            violations += 1;
        }
    }
    format!("finite T=5, k=1..3: {violations} of {checked} systems decrease somewhere")
}

#[test]
fn acceptance() {
    let config = VerifyConfig::default();
    assert_eq!(config.epsilon, EPSILON);
    let mut ledger = Ledger { lines: Vec::new() };
    let contraction_checks = config.contraction_systems * config.contraction_pairs;
    let grid_checks = 27 * (4 + 3) * config.systems_per_cell;

    let started = Instant::now();
    let contraction = contraction_suite(&config).unwrap();
    let elapsed = started.elapsed();
    ledger.record(
        "1 contraction",
        within(&contraction, CONTRACTION_TOL, contraction_checks) && elapsed < CONTRACTION_BUDGET,
        describe(&contraction, elapsed),
    );

    let started = Instant::now();
    let (certified, nonneg_discounted) = fixed_point_suite(&config).unwrap();
    ledger.record(
        "2 fixed-point certification",
        within(&certified, FIXED_POINT_TOL, config.contraction_systems),
        describe(&certified, started.elapsed()),
    );

    let (ok, detail) = matching_pennies_closed_form();
    ledger.record("3 matching-pennies closed form", ok, detail);

    let started = Instant::now();
    let grid = oracle_suites(&config).unwrap();
    let elapsed = started.elapsed();
    let by_name = |name: &str| grid.iter().find(|s| s.name == name).unwrap();
    let oracle = by_name("oracle-equivalence");
    ledger.record(
        "4 oracle equivalence",
        within(oracle, ORACLE_TOL, grid_checks) && elapsed < ORACLE_BUDGET,
        describe(oracle, elapsed),
    );
    let realized = by_name("realized-regret");
    ledger.record(
        "5 realized-regret tightness",
        within(realized, REALIZED_TOL, grid_checks),
        describe(realized, elapsed),
    );

    let started = Instant::now();
    let decomposition = decomposition_suite(&config).unwrap();
    ledger.record(
        "6 decomposition identities",
        within(&decomposition, DECOMPOSITION_TOL, config.decomposition_trials),
        describe(&decomposition, started.elapsed()),
    );

    let nonneg_finite = by_name("nonnegativity-finite");
    let worst = nonneg_finite.worst.max(nonneg_discounted.worst);
    ledger.record(
        "7 nonnegativity",
        nonneg_finite.failures.is_empty() && nonneg_discounted.failures.is_empty() && worst <= NONNEG_TOL,
        format!(
            "{} finite + {} discounted values, largest -G0 {worst:e}",
            nonneg_finite.checked, nonneg_discounted.checked
        ),
    );

    let (ok, detail) = figure_orderings();
    ledger.record("8 inventory orderings", ok, detail);

    let (ok, detail) = determinism();
    ledger.record("9 determinism", ok, detail);

    println!("NOTE lookahead monotonicity: {}", lookahead_monotonicity());

    let failed: Vec<&str> = ledger.lines.iter().filter(|l| !l.1).map(|l| l.0.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
