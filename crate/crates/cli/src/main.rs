use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use kvdamage::integrator::{check_energy_inequality, RunError, RunOptions};
use kvdamage::material::{
    semiconvexity_constant, stored_hessian_psd_check, visco_damage_nonconvexity_witness, PsdSampleSpec,
};
use kvdamage::scenario::{load_scenario, run_convergence_study, write_outputs, Scenario, ScenarioError, StudyError, StudyOptions};

#[derive(Parser)]
#[command(name = "kvdamage", version, about = "Dynamic damage in Kelvin-Voigt viscoelastic solids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the energy ledger and field dumps.
    Run {
        /// Scenario file, `file:PATH` or `builtin:NAME`.
        scenario: String,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Refuse steps above the critical step.
        #[arg(long)]
        strict_tau0: bool,
    },
    /// Step-halving convergence study.
    Study {
        scenario: String,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Compare only on [0, WINDOW].
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Print the critical step, the semiconvexity constant and the pointwise convexity checks.
    Tau0 {
        scenario: String,
        /// Added quadratic for the visco-damage witness search.
        #[arg(long, default_value_t = 1e6)]
        witness_k: f64,
    },
}

enum Failure {
    Validation(String),
    Solver(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Solver(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Step { .. } => Failure::Solver(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Scenario(s) => s.into(),
            StudyError::Run { level, source } => match Failure::from(source) {
                Failure::Solver(m) => Failure::Solver(format!("level {level}: {m}")),
                other => other,
            },
            StudyError::Invalid(m) => Failure::Validation(m),
        }
    }
}

fn load(spec: &str, tau: Option<f64>) -> Result<Scenario, Failure> {
    let mut sc = load_scenario(spec)?;
    if let Some(t) = tau {
        sc = sc.with_tau(t)?;
    }
    for w in &sc.warnings {
        warn!("{w}");
    }
    Ok(sc)
}

fn run(spec: &str, tau: Option<f64>, out: Option<PathBuf>, strict: bool) -> Result<(), Failure> {
    let sc = load(spec, tau)?;
    let dir = out
        .or_else(|| sc.file.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(sc.name()));
    info!("{}: tau = {:e}, {} steps, tau0 = {:e}", sc.name(), sc.tau, sc.n_steps, sc.model.tau0);
    let output = match sc.run(&RunOptions { strict_tau0: strict }) {
        Ok(o) => o,
        Err(e) => {
            if let Some(p) = e.partial() {
                write_outputs(&sc, p, &dir)?;
                warn!("steps completed before the failure written to {}", dir.display());
            }
            return Err(e.into());
        }
    };
    let files = write_outputs(&sc, &output, &dir)?;
    let check = check_energy_inequality(&output.report, sc.tau, sc.model.tau0, 1e-8);
    let iters: usize = output.stats.iter().map(|s| s.newton_iters).sum();
    println!("scenario        {}", sc.name());
    println!("tau             {:e} ({} steps)", sc.tau, sc.n_steps);
    println!("tau0            {:e}", sc.model.tau0);
    println!("certified       {}", sc.is_certified());
    println!("newton iters    {iters}");
    println!(
        "energy ineq     worst margin {:e} (tolerance {:e}, {})",
        check.worst,
        check.tolerance,
        if !check.certified { "advisory" } else if check.pass { "pass" } else { "FAIL" }
    );
    println!("files           {} in {}", files.len(), dir.display());
    Ok(())
}

fn study(spec: &str, levels: usize, window: Option<f64>, tau: Option<f64>) -> Result<(), Failure> {
    let sc = load(spec, tau)?;
    let res = run_convergence_study(&sc, &StudyOptions { levels, window, ..Default::default() })?;
    println!("window [0, {}]", res.window_end);
    println!("{:>12} {:>7} {:>8} {:>10}", "tau", "steps", "newton", "certified");
    for l in &res.levels {
        println!("{:>12.4e} {:>7} {:>8} {:>10}", l.tau, l.n_steps, l.newton_iters, l.certified);
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ");
    println!("u diffs        {}", fmt(&res.u_diffs));
    println!("u orders       {}", fmt(&res.u_orders));
    println!("alpha diffs    {}", fmt(&res.alpha_diffs));
    println!("alpha orders   {}", fmt(&res.alpha_orders));
    println!("monotone       {}", res.cauchy_monotone);
    println!("apriori bounds {}", if res.apriori_uniform { "uniform" } else { "not uniform" });
    if let Some(s) = &res.staggered {
        println!("staggered      distance {:.4e} at tau {:.4e} ({} sweeps)", s.distance, s.tau, s.sweeps);
    }
    if let Some(o) = &res.oscillator {
        println!("oscillator     errors {} orders {}", fmt(&o.errors), fmt(&o.orders));
    }
    Ok(())
}

fn tau0(spec: &str, witness_k: f64) -> Result<(), Failure> {
    let sc = load(spec, None)?;
    let m = &sc.model.material;
    println!("tau0            {:e}", sc.model.tau0);
    match semiconvexity_constant(m) {
        Ok(k) => {
            println!("K               {k:e}");
            let r = stored_hessian_psd_check(&m.degradation, &m.elastic, k, &PsdSampleSpec::default());
            println!(
                "stored energy   {} (min eigenvalue {:e}, tolerance {:e}, {} samples, worst alpha {})",
                if r.passed { "convex" } else { "NOT convex" },
                r.min_eigenvalue,
                r.tolerance,
                r.samples,
                r.worst_alpha
            );
        }
        Err(e) => println!("K               unavailable: {e}"),
    }
    match visco_damage_nonconvexity_witness(&m.degradation, &m.elastic, witness_k, None) {
        Ok(w) => println!(
            "visco-damage    nonconvex with K = {witness_k:e}: min eigenvalue {:e} at alpha {}, |e| >= {:e}",
            w.min_eig, w.alpha, w.onset_magnitude
        ),
        Err(e) => println!("visco-damage    no witness with K = {witness_k:e}: {e}"),
    }
    println!("scenario tau    {:e} ({})", sc.tau, if sc.is_certified() { "certified" } else { "uncertified" });
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, tau, out, strict_tau0 } => run(&scenario, tau, out, strict_tau0),
        Command::Study { scenario, levels, window, tau } => study(&scenario, levels, window, tau),
        Command::Tau0 { scenario, witness_k } => tau0(&scenario, witness_k),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
