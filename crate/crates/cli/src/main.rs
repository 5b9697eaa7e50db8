//! `rlnd`: validate, solve and analyse take-back network instances.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rlnd_core::builders::{build_system_model, ModelArtifacts};
use rlnd_core::domain::FacilityTier;
use rlnd_core::geo::{distance_matrix, distances_csv, read_facilities_csv, read_points_csv, DEFAULT_EARTH_RADIUS_KM};
use rlnd_core::milp::{BranchAndBound, MilpOptions, MilpSolver, SolveStatus};
use rlnd_core::multiobjective::{epsilon_sweep, BiObjective, UserFamily, DEFAULT_GRID, DEFAULT_THETA};
use rlnd_core::robust::{capacity_preset, robustify, violation_bound, UncertaintySpec};
use rlnd_core::scenarios::{run_suite, run_system, run_user, ModelRun, ScenarioSuite};
use rlnd_core::{bundled, NetworkInstance, ObjectiveKind};

#[derive(Parser, Debug)]
#[command(name = "rlnd", version, about = "Take-back network design: MILP solves, Pareto fronts, robust counterparts")]
struct Cli {
    /// Accepted for pipeline compatibility; every solve is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Branch-and-bound node budget.
    #[arg(long, global = true, default_value_t = MilpOptions::default().node_budget)]
    node_budget: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an instance file and list every problem found.
    Validate {
        /// Instance JSON, or `example` for the bundled two-area network.
        instance: String,
    },
    /// Solve the system- or user-optimum model.
    Solve {
        instance: String,
        #[arg(long, value_enum, default_value_t = Model::System)]
        model: Model,
        #[arg(long, default_value_t = ObjectiveKind::Cost)]
        objective: ObjectiveKind,
        /// Directory for breakdown.csv, flows.csv, throughput.csv and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the tagged system model in LP format.
        #[arg(long)]
        lp: Option<PathBuf>,
    },
    /// Cost/emission front by the augmented epsilon-constraint method.
    Pareto {
        #[arg(default_value = "example")]
        instance: String,
        #[arg(long, value_enum, default_value_t = Model::System)]
        model: Model,
        /// Number of grid intervals V.
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        /// Slack reward theta.
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Budgeted-uncertainty counterpart of the system model.
    Robust {
        #[arg(default_value = "example")]
        instance: String,
        /// Uncertainty spec JSON; without it every declared capacity row is
        /// perturbed by `--deviation`.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        deviation: f64,
        /// Budgets to solve; each is clipped to the row size.
        #[arg(long, num_args = 1.., default_values_t = vec![0.0, 1.0, 2.0])]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = ObjectiveKind::Cost)]
        objective: ObjectiveKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario file or suite and write comparison reports.
    Scenario {
        /// Scenario or suite JSON, or `example` for the bundled suite.
        spec: String,
        #[arg(long)]
        report_dir: PathBuf,
        /// Base instance used when the spec names none.
        #[arg(long)]
        base: Option<String>,
    },
    /// Great-circle distance tables between points and facilities.
    Distances {
        /// CSV `id,lat,lon[,population]`.
        #[arg(long)]
        points: PathBuf,
        /// CSV `id,lat,lon[,tier]`.
        #[arg(long)]
        facilities: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EARTH_RADIUS_KM)]
        radius: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    System,
    User,
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn load_instance(arg: &str) -> AnyResult<NetworkInstance> {
    if arg == "example" {
        return Ok(bundled::example_network());
    }
    Ok(NetworkInstance::from_json(&fs::read_to_string(arg).map_err(|e| format!("{arg}: {e}"))?)?)
}

fn exit_for(status: SolveStatus) -> ExitCode {
    match status {
        SolveStatus::Optimal => ExitCode::SUCCESS,
        SolveStatus::Infeasible => ExitCode::from(2),
        SolveStatus::BudgetExceeded => ExitCode::from(3),
        SolveStatus::Unbounded | SolveStatus::NumericallyUnstable => ExitCode::from(1),
    }
}

fn status_label(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::BudgetExceeded => "budget-exceeded",
        SolveStatus::NumericallyUnstable => "numerically-unstable",
    }
}

/// Stdout writes that tolerate a closed pipe (`rlnd ... | head`).
fn say(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emit(out: Option<&Path>, text: &str) -> AnyResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => say(text),
    }
    Ok(())
}

fn run_report(inst: &NetworkInstance, run: &ModelRun) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "instance: {}", inst.name);
    let _ = writeln!(s, "model: {}  objective: {}  status: {}", run.model, run.objective, status_label(run.status));
    if let Some(b) = &run.breakdown {
        let _ = writeln!(s, "total cost: {:.2}", b.total_cost);
        let _ = writeln!(s, "total emission: {:.2}", b.total_emission);
        let _ = writeln!(s, "fixed cost: {:.2}  resale revenue: {:.2}  emission offset: {:.2}", b.fixed_cost.sum(), b.resale_revenue.sum(), b.emission_offset.sum());
    }
    for tier in FacilityTier::ALL {
        let _ = writeln!(s, "open {}: {}", tier.label(), run.open[tier as usize].join(" "));
    }
    for tier in FacilityTier::ALL {
        let totals = run.throughput.totals(tier);
        if !totals.is_empty() {
            let cells: Vec<String> = totals.iter().map(|v| format!("{v:.2}")).collect();
            let _ = writeln!(s, "inflow {} (kg): {}", tier.label(), cells.join(" "));
        }
    }
    s
}

fn throughput_csv(inst: &NetworkInstance, run: &ModelRun) -> String {
    let mut s = String::from("tier,facility,item,kg\n");
    for tier in FacilityTier::ALL {
        for (f, items) in run.throughput.tiers[tier as usize].iter().enumerate() {
            for (k, kg) in items.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{}", tier.label(), inst.facilities(tier)[f], inst.items(tier)[k], kg);
            }
        }
    }
    s
}

fn solve(
    instance: &str,
    model: Model,
    objective: ObjectiveKind,
    out: Option<PathBuf>,
    lp: Option<PathBuf>,
    solver: &dyn MilpSolver,
) -> AnyResult<ExitCode> {
    let inst = load_instance(instance)?;
    if let Some(path) = lp {
        fs::write(path, build_system_model(&inst, objective)?.tagged_lp())?;
    }
    let run = match model {
        Model::System => run_system(&inst, objective, solver)?,
        Model::User => run_user(&inst, objective, solver)?,
    };
    let report = run_report(&inst, &run);
    say(&report);
    if let Some(b) = &run.breakdown {
        say(&b.to_csv());
    }
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("report.txt"), &report)?;
        if let Some(b) = &run.breakdown {
            fs::write(dir.join("breakdown.csv"), b.to_csv())?;
        }
        let mut flows = String::from("variable,value\n");
        for f in &run.flows {
            let _ = writeln!(flows, "{},{}", f.variable, f.value);
        }
        fs::write(dir.join("flows.csv"), flows)?;
        fs::write(dir.join("throughput.csv"), throughput_csv(&inst, &run))?;
    }
    Ok(exit_for(run.status))
}

fn pareto(instance: &str, model: Model, grid: usize, theta: f64, out: Option<PathBuf>, solver: &dyn MilpSolver) -> AnyResult<ExitCode> {
    let inst = load_instance(instance)?;
    let front = match model {
        Model::System => epsilon_sweep(&BiObjective::system(&inst)?, grid, theta, solver)?,
        Model::User => epsilon_sweep(&UserFamily { instance: &inst }, grid, theta, solver)?,
    };
    emit(out.as_deref(), &front.to_csv())?;
    eprintln!(
        "payoff: emission range [{:.2}, {:.2}], step {:.4}; {} points, {} grid points skipped",
        front.payoff.em_min,
        front.payoff.em_max,
        front.delta_epsilon(),
        front.points.len(),
        front.skipped.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn robust(
    instance: &str,
    spec: Option<PathBuf>,
    deviation: f64,
    gammas: &[f64],
    objective: ObjectiveKind,
    out: Option<PathBuf>,
    solver: &dyn MilpSolver,
) -> AnyResult<ExitCode> {
    let inst = load_instance(instance)?;
    let art: ModelArtifacts = build_system_model(&inst, objective)?;
    let base = match spec {
        Some(p) => UncertaintySpec::from_json(&fs::read_to_string(p)?)?,
        None => capacity_preset(&art, deviation, 1.0),
    };
    if base.rows.is_empty() {
        eprintln!("note: no uncertain rows; every budget gives the nominal model");
    }
    let widest = base.rows.iter().map(|r| r.entries.len()).max().unwrap_or(0);
    let mut csv = String::from("gamma,status,objective,total_cost,total_emission,violation_bound\n");
    let mut worst = SolveStatus::Optimal;
    for &g in gammas {
        let rob = robustify(&art, &base.with_gamma(g))?;
        let sol = solver.solve(&rob.model);
        let b = rob.breakdown(&sol);
        let bound = if widest > 0 { violation_bound(g.min(widest as f64), widest) } else { 0.0 };
        let _ = writeln!(
            csv,
            "{g},{},{},{},{},{bound}",
            status_label(sol.status),
            if sol.has_point() { sol.objective.to_string() } else { String::new() },
            b.as_ref().map_or(String::new(), |b| b.total_cost.to_string()),
            b.as_ref().map_or(String::new(), |b| b.total_emission.to_string()),
        );
        if sol.status != SolveStatus::Optimal && worst == SolveStatus::Optimal {
            worst = sol.status;
        }
    }
    emit(out.as_deref(), &csv)?;
    Ok(exit_for(worst))
}

fn scenario(spec: &str, report_dir: &Path, base: Option<String>, solver: &dyn MilpSolver) -> AnyResult<ExitCode> {
    let (suite, dir) = if spec == "example" {
        (bundled::example_suite(), PathBuf::from("."))
    } else {
        ScenarioSuite::load(spec)?
    };
    let base = load_instance(base.as_deref().unwrap_or("example"))?;
    let report = run_suite(&suite, &base, &dir, solver)?;
    report.write_dir(report_dir)?;
    say(&report.to_text());
    Ok(exit_for(report.worst_status()))
}

fn distances(points: &Path, facilities: &Path, radius: f64, out: Option<PathBuf>) -> AnyResult<ExitCode> {
    let pts = read_points_csv(fs::File::open(points)?)?;
    let fac = read_facilities_csv(fs::File::open(facilities)?)?;
    let mut text = String::new();
    let pairs = [(&pts, &fac[0], "residence", "dropoff"), (&fac[0], &fac[1], "dropoff", "primary"), (&fac[1], &fac[2], "primary", "secondary")];
    for (from, to, a, b) in pairs {
        if from.is_empty() || to.is_empty() {
            continue;
        }
        let m = distance_matrix(from, to, radius)?;
        let _ = writeln!(text, "# {a} -> {b}");
        text.push_str(&distances_csv(from, to, &m));
    }
    emit(out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> AnyResult<ExitCode> {
    let solver = BranchAndBound::new(MilpOptions { node_budget: cli.node_budget, ..MilpOptions::default() });
    match cli.command {
        Command::Validate { instance } => {
            let inst = load_instance(&instance)?;
            let report = inst.validate();
            if report.is_valid() {
                say(&format!("{}: valid\n", inst.name));
                Ok(ExitCode::SUCCESS)
            } else {
                for issue in &report.issues {
                    say(&format!("{issue}\n"));
                }
                say(&format!("{}: {} issue(s)\n", inst.name, report.issues.len()));
                Ok(ExitCode::from(1))
            }
        }
        Command::Solve { instance, model, objective, out, lp } => solve(&instance, model, objective, out, lp, &solver),
        Command::Pareto { instance, model, grid, theta, out } => pareto(&instance, model, grid, theta, out, &solver),
        Command::Robust { instance, spec, deviation, gamma, objective, out } => {
            robust(&instance, spec, deviation, &gamma, objective, out, &solver)
        }
        Command::Scenario { spec, report_dir, base } => scenario(&spec, &report_dir, base, &solver),
        Command::Distances { points, facilities, radius, out } => distances(&points, &facilities, radius, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap's own usage code (2) would collide with "infeasible".
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
