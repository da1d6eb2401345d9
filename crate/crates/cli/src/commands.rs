use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use msopt_core::bundle::{Problem, ProblemBundle};
use msopt_core::dp_solvers::{
    mdp_backward_induction, sddp_recursion, value_iteration, MdpError, MdpSpec, StagewiseProblem, StagewiseSolution,
};
use msopt_core::generate::{random_interchange, rng};
use msopt_core::policy::{ClassKind, Policy, DEFAULT_ENUMERATION_CAP};
use msopt_core::value_process::{brute_force_parallel, check_bounded_below, TableMethod, ValueTables, DEFAULT_TABLE_CAP};
use msopt_core::verification::{
    check_dynamic_relations, interchange_gap, verify_with_tables, DynamicReport, InterchangeInstance,
    InterchangeReport, MartingaleReport, Verdict,
};

use crate::{Cli, Command, Method, Outcome, EXIT_INCONCLUSIVE, EXIT_NEGATIVE, EXIT_OK};

/// `auto` cross-checks with enumeration up to this many policies.
const AUTO_BRUTE_LIMIT: u128 = 100_000;
const AGREEMENT_TOL: f64 = 1e-9;
/// Slack allowed on `lhs ≤ rhs` in the interchange demo.
const INTERCHANGE_SLACK: f64 = 1e-12;
const INTERCHANGE_CAP: u128 = 1_000_000;

pub fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Solve { policy_out } => solve(cli, policy_out.as_deref()),
        Command::Verify => verify(cli),
        Command::DynamicCheck => dynamic_check(cli),
        Command::DemoInterchange { random } => demo_interchange(cli, *random),
        Command::MdpSolve { horizon } => mdp_solve(cli, *horizon),
        Command::ValueIterate { epsilon, max_iters } => value_iterate(cli, *epsilon, *max_iters),
        Command::SddpSolve => sddp_solve(cli),
        Command::Validate => validate(cli),
    }
}

fn to_json<T: Serialize>(report: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

fn read(path: Option<&Path>, what: &str) -> Result<String> {
    let path = path.ok_or_else(|| anyhow!("--{what} is required"))?;
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, path: Option<&Path>) -> Result<T> {
    let name = path.map(|p| p.display().to_string()).unwrap_or_default();
    serde_json::from_str(text).with_context(|| format!("parsing {name}"))
}

fn load_problem(cli: &Cli) -> Result<Problem> {
    let path = cli.input.as_deref();
    let bundle: ProblemBundle = parse(&read(path, "input")?, path)?;
    Ok(bundle.resolve()?)
}

/// The policy named by `--policy`, or the bundle's first candidate.
fn load_policy(cli: &Cli, problem: &Problem) -> Result<(Policy, String)> {
    match cli.policy.as_deref() {
        Some(path) => {
            let policy: Policy = parse(&read(Some(path), "policy")?, Some(path))?;
            Ok((policy, path.display().to_string()))
        }
        None => problem
            .policies
            .first()
            .cloned()
            .map(|p| (p, "bundle candidate 0".to_string()))
            .ok_or_else(|| anyhow!("--policy is required when the bundle has no candidate policies")),
    }
}

fn kind_name(kind: ClassKind) -> &'static str {
    match kind {
        ClassKind::Nodewise => "nodewise",
        ClassKind::HistoryBlind => "history_blind",
    }
}

fn method_name(m: TableMethod) -> &'static str {
    match m {
        TableMethod::Backward => "backward",
        TableMethod::Definitional => "definitional",
    }
}

#[derive(Serialize)]
struct BruteSummary {
    value: f64,
    policy: Policy,
    index: u128,
    evaluated: u128,
}

#[derive(Serialize)]
struct SolveReport {
    command: &'static str,
    class_kind: &'static str,
    decomposable: bool,
    policy_count: u128,
    tolerance: f64,
    methods: Vec<&'static str>,
    value: f64,
    policy: Policy,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_force: Option<BruteSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_optimum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matches_expected: Option<bool>,
}

fn solve(cli: &Cli, policy_out: Option<&Path>) -> Result<Outcome> {
    let p = load_problem(cli)?;
    check_bounded_below(&p.tree, &p.cost, &p.class, DEFAULT_TABLE_CAP)?;
    let count = p.class.count();
    let decomposable = p.class.is_decomposable();
    let run_backward = match cli.method {
        Method::Backward if !decomposable => bail!("backward recursion needs a decomposable class; use --method brute"),
        Method::Backward => true,
        Method::Brute => false,
        Method::Auto => decomposable,
    };
    let run_brute = match cli.method {
        Method::Brute => true,
        Method::Backward => false,
        Method::Auto => !decomposable || count <= AUTO_BRUTE_LIMIT,
    };
    let mut methods = Vec::new();
    let backward = if run_backward {
        methods.push("backward");
        let tables = ValueTables::backward(&p.tree, &p.cost, &p.class, DEFAULT_TABLE_CAP)?;
        Some((tables.root_value(), tables.greedy_policy(&p.tree, &p.class)))
    } else {
        None
    };
    let brute = if run_brute {
        methods.push("brute");
        let bf = brute_force_parallel(&p.tree, &p.cost, &p.class, DEFAULT_ENUMERATION_CAP)?;
        Some(BruteSummary { value: bf.value, policy: bf.policy, index: bf.index, evaluated: bf.evaluated })
    } else {
        None
    };
    let (value, policy, brute_force) = match (backward, brute) {
        (Some((v, pol)), b) => (v, pol, b),
        (None, Some(b)) => (b.value, b.policy.clone(), None),
        (None, None) => unreachable!("at least one method runs"),
    };
    let agreement = brute_force.as_ref().map(|b| (b.value - value).abs() <= AGREEMENT_TOL);
    let matches_expected = p.expected_optimum.map(|e| (e - value).abs() <= cli.tolerance);
    let code = if agreement == Some(false) || matches_expected == Some(false) { EXIT_NEGATIVE } else { EXIT_OK };
    if let Some(path) = policy_out {
        std::fs::write(path, to_json(&policy)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = SolveReport {
        command: "solve",
        class_kind: kind_name(p.class.kind()),
        decomposable,
        policy_count: count,
        tolerance: cli.tolerance,
        methods: methods.clone(),
        value,
        policy,
        brute_force,
        agreement,
        expected_optimum: p.expected_optimum,
        matches_expected,
    };
    let mut text = format!("optimal value: {value}\nmethods: {}\npolicies in class: {count}\n", methods.join(", "));
    if let Some(a) = agreement {
        let _ = writeln!(text, "methods agree within {AGREEMENT_TOL:e}: {a}");
    }
    if let Some(m) = matches_expected {
        let _ = writeln!(text, "matches recorded optimum: {m}");
    }
    text.push_str("policy:\n");
    for (n, d) in report.policy.decisions().iter().enumerate() {
        let _ = writeln!(text, "  node {n}: {d:?}");
    }
    Ok(Outcome { code, json: to_json(&report)?, text })
}

#[derive(Serialize)]
struct VerifyOutput {
    command: &'static str,
    policy_source: String,
    class_kind: &'static str,
    table_method: &'static str,
    policy_count: u128,
    report: MartingaleReport,
}

fn verdict_code(v: Option<Verdict>) -> u8 {
    match v {
        Some(Verdict::Optimal) => EXIT_OK,
        Some(Verdict::NotOptimal) => EXIT_NEGATIVE,
        _ => EXIT_INCONCLUSIVE,
    }
}

fn verify(cli: &Cli) -> Result<Outcome> {
    let p = load_problem(cli)?;
    let (policy, policy_source) = load_policy(cli, &p)?;
    p.class.contains(&policy).context("policy is not in the class")?;
    let tables = ValueTables::for_class(&p.tree, &p.cost, &p.class)?;
    let report = verify_with_tables(&p.tree, &p.cost, &p.class, &tables, &policy, cli.tolerance)?;
    let code = verdict_code(report.verdict);
    let mut text = format!(
        "classification: {:?}\nverdict: {:?}\n",
        report.classification,
        report.verdict.unwrap_or(Verdict::Inconclusive)
    );
    if let (Some(a), Some(b)) = (report.policy_value, report.optimal_value) {
        let _ = writeln!(text, "policy value: {a}\noptimal value: {b}");
    }
    for s in &report.per_stage_slack {
        let _ = writeln!(text, "  stage {}: slack in [{}, {}]", s.t, s.min_slack, s.max_slack);
    }
    if let Some(w) = &report.witness {
        let proc = w.process.as_deref().unwrap_or("process");
        let _ = writeln!(text, "witness: node {} (stage {}), {proc} slack {}", w.node, w.stage, w.slack);
    }
    if let Some(e) = &report.explanation {
        let _ = writeln!(text, "{e}");
    }
    let out = VerifyOutput {
        command: "verify",
        policy_source,
        class_kind: kind_name(p.class.kind()),
        table_method: method_name(tables.method()),
        policy_count: p.class.count(),
        report,
    };
    Ok(Outcome { code, json: to_json(&out)?, text })
}

#[derive(Serialize)]
struct DynamicOutput {
    command: &'static str,
    policy_source: String,
    class_kind: &'static str,
    report: DynamicReport,
}

fn dynamic_check(cli: &Cli) -> Result<Outcome> {
    let p = load_problem(cli)?;
    let (policy, policy_source) = load_policy(cli, &p)?;
    p.class.contains(&policy).context("policy is not in the class")?;
    let report = check_dynamic_relations(&p.tree, &p.cost, &p.class, &policy, cli.tolerance)?;
    let code = if report.inequalities_hold { EXIT_OK } else { EXIT_NEGATIVE };
    let mut text = format!(
        "inequalities hold: {}\nequality everywhere: {}\n",
        report.inequalities_hold, report.equality_everywhere
    );
    for s in &report.stages {
        let _ = writeln!(
            text,
            "  stage {}: pre-decision gap [{}, {}], post-decision gap [{}, {}]",
            s.t, s.pre_decision.min_gap, s.pre_decision.max_gap, s.post_decision.min_gap, s.post_decision.max_gap
        );
    }
    let out = DynamicOutput { command: "dynamic-check", policy_source, class_kind: kind_name(p.class.kind()), report };
    Ok(Outcome { code, json: to_json(&out)?, text })
}

#[derive(Serialize)]
struct InterchangeOutput {
    command: &'static str,
    source: String,
    tolerance: f64,
    instance: InterchangeInstance,
    nodewise: InterchangeReport,
    history_blind: InterchangeReport,
}

fn demo_interchange(cli: &Cli, random: bool) -> Result<Outcome> {
    let (instance, source) = match (&cli.input, random) {
        (Some(_), true) => bail!("--input and --random are exclusive"),
        (Some(path), false) => (parse(&read(Some(path), "input")?, Some(path))?, path.display().to_string()),
        (None, true) => (random_interchange(&mut rng(cli.seed), 5, 4), format!("random (seed {})", cli.seed)),
        (None, false) => (InterchangeInstance::builtin(), "builtin".to_string()),
    };
    let nodewise = interchange_gap(&instance.probs, &instance.nodewise_family(INTERCHANGE_CAP)?, cli.tolerance)?;
    let history_blind = interchange_gap(&instance.probs, &instance.history_blind_family()?, cli.tolerance)?;
    let ok = nodewise.lhs <= nodewise.rhs + INTERCHANGE_SLACK && history_blind.lhs <= history_blind.rhs + INTERCHANGE_SLACK;
    let mut text = format!("data: {source}\n");
    for (name, r) in [("nodewise", &nodewise), ("history_blind", &history_blind)] {
        let _ = writeln!(text, "{name}: lhs {} rhs {} gap {} ({} members)", r.lhs, r.rhs, r.gap, r.members);
    }
    let out = InterchangeOutput { command: "demo-interchange", source, tolerance: cli.tolerance, instance, nodewise, history_blind };
    Ok(Outcome { code: if ok { EXIT_OK } else { EXIT_NEGATIVE }, json: to_json(&out)?, text })
}

fn load_mdp(cli: &Cli) -> Result<MdpSpec> {
    let path = cli.input.as_deref();
    let mdp: MdpSpec = parse(&read(path, "input")?, path)?;
    mdp.validate()?;
    Ok(mdp)
}

#[derive(Serialize)]
struct MdpSolveOutput {
    command: &'static str,
    horizon: usize,
    gamma: f64,
    values: Vec<Vec<f64>>,
    policy: Vec<Vec<usize>>,
}

fn mdp_solve(cli: &Cli, horizon: Option<usize>) -> Result<Outcome> {
    let mdp = load_mdp(cli)?;
    let horizon = horizon
        .or(mdp.stage_tables())
        .ok_or_else(|| anyhow!("--horizon is required for a stationary cost"))?;
    let fh = mdp_backward_induction(&mdp, horizon)?;
    let mut text = format!("horizon {horizon}, gamma {}\n", mdp.gamma);
    for (t, v) in fh.values.iter().enumerate() {
        let _ = writeln!(text, "  t={t}: {v:?}");
    }
    let out = MdpSolveOutput { command: "mdp-solve", horizon, gamma: mdp.gamma, values: fh.values, policy: fh.policy };
    Ok(Outcome { code: EXIT_OK, json: to_json(&out)?, text })
}

#[derive(Serialize)]
struct ValueIterateOutput {
    command: &'static str,
    gamma: f64,
    epsilon: f64,
    max_iters: usize,
    converged: bool,
    iterations: usize,
    threshold: Option<f64>,
    residuals: Vec<f64>,
    ratios: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<Vec<usize>>,
    /// `K / (1 - |γ|)`.
    bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    within_bound: Option<bool>,
}

fn value_iterate(cli: &Cli, epsilon: f64, max_iters: usize) -> Result<Outcome> {
    let mdp = load_mdp(cli)?;
    if epsilon.is_nan() || epsilon <= 0.0 {
        bail!("--epsilon must be positive");
    }
    let bound = mdp.bound() / (1.0 - mdp.gamma.abs());
    let mut out = ValueIterateOutput {
        command: "value-iterate",
        gamma: mdp.gamma,
        epsilon,
        max_iters,
        converged: false,
        iterations: 0,
        threshold: None,
        residuals: Vec::new(),
        ratios: Vec::new(),
        values: None,
        policy: None,
        bound,
        within_bound: None,
    };
    let code = match value_iteration(&mdp, epsilon, max_iters) {
        Ok(vi) => {
            let sup = vi.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let within = sup <= bound + epsilon;
            out.converged = true;
            out.iterations = vi.iterations;
            out.threshold = vi.threshold.is_finite().then_some(vi.threshold);
            out.residuals = vi.residuals;
            out.ratios = vi.ratios;
            out.values = Some(vi.values);
            out.policy = Some(vi.policy);
            out.within_bound = Some(within);
            if within {
                EXIT_OK
            } else {
                EXIT_NEGATIVE
            }
        }
        Err(MdpError::NotConverged { iterations, residuals, .. }) => {
            out.iterations = iterations;
            out.ratios = residuals.windows(2).take_while(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
            out.residuals = residuals;
            EXIT_NEGATIVE
        }
        Err(e) => return Err(e.into()),
    };
    let mut text = format!("converged: {} after {} iterations\n", out.converged, out.iterations);
    if let Some(v) = &out.values {
        let _ = writeln!(text, "values: {v:?}");
    }
    let _ = writeln!(text, "bound K/(1-|gamma|): {bound}");
    for (k, r) in out.residuals.iter().enumerate() {
        let _ = writeln!(text, "  residual {}: {r:e}", k + 1);
    }
    Ok(Outcome { code, json: to_json(&out)?, text })
}

#[derive(Serialize)]
struct SddpOutput {
    command: &'static str,
    horizon: usize,
    gamma: f64,
    root_value: f64,
    solution: StagewiseSolution,
}

fn sddp_solve(cli: &Cli) -> Result<Outcome> {
    let path = cli.input.as_deref();
    let problem: StagewiseProblem = parse(&read(path, "input")?, path)?;
    problem.validate()?;
    let solution = sddp_recursion(&problem)?;
    let root_value = solution.root_value();
    let text = format!("horizon {}, gamma {}\nroot value: {root_value}\n", problem.horizon(), problem.gamma);
    let out = SddpOutput { command: "sddp-solve", horizon: problem.horizon(), gamma: problem.gamma, root_value, solution };
    Ok(Outcome { code: EXIT_OK, json: to_json(&out)?, text })
}

#[derive(Serialize)]
struct ValidateOutput {
    command: &'static str,
    kind: &'static str,
    valid: bool,
    problems: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policy_count: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposable: Option<bool>,
}

fn validate(cli: &Cli) -> Result<Outcome> {
    let path = cli.input.as_deref();
    let text = read(path, "input")?;
    let value: serde_json::Value = parse(&text, path)?;
    let has = |k: &str| value.get(k).is_some();
    let mut out = ValidateOutput {
        command: "validate",
        kind: "",
        valid: true,
        problems: Vec::new(),
        nodes: None,
        horizon: None,
        policy_count: None,
        decomposable: None,
    };
    if has("tree") {
        out.kind = "bundle";
        let bundle: ProblemBundle = parse(&text, path)?;
        out.nodes = Some(bundle.tree.len());
        out.horizon = Some(bundle.tree.horizon());
        match bundle.resolve() {
            Err(e) => out.problems.push(e.to_string()),
            Ok(p) => {
                out.policy_count = Some(p.class.count());
                out.decomposable = Some(p.class.is_decomposable());
                if let Err(e) = check_bounded_below(&p.tree, &p.cost, &p.class, DEFAULT_TABLE_CAP) {
                    out.problems.push(e.to_string());
                }
                for (i, pol) in p.policies.iter().enumerate() {
                    if let Err(e) = p.class.contains(pol) {
                        out.problems.push(format!("candidate policy {i}: {e}"));
                    }
                }
            }
        }
    } else if has("kernel") {
        out.kind = "mdp";
        let mdp: MdpSpec = parse(&text, path)?;
        if let Err(e) = mdp.validate() {
            out.problems.push(e.to_string());
        }
    } else if has("stages") {
        out.kind = "stagewise";
        let problem: StagewiseProblem = parse(&text, path)?;
        out.horizon = Some(problem.horizon());
        if let Err(e) = problem.validate() {
            out.problems.push(e.to_string());
        }
    } else if has("probs") {
        out.kind = "interchange";
        let inst: InterchangeInstance = parse(&text, path)?;
        if let Err(e) = inst.history_blind_family() {
            out.problems.push(e.to_string());
        }
    } else if has("decisions") {
        out.kind = "policy";
        parse::<Policy>(&text, path)?;
    } else {
        bail!("unrecognized input: expected a bundle, MDP, stagewise problem, interchange data or policy");
    }
    out.valid = out.problems.is_empty();
    let mut summary = format!("{}: {}\n", out.kind, if out.valid { "valid" } else { "invalid" });
    for p in &out.problems {
        let _ = writeln!(summary, "  {p}");
    }
    Ok(Outcome { code: if out.valid { EXIT_OK } else { EXIT_NEGATIVE }, json: to_json(&out)?, text: summary })
}
