use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use regime_kernel::admissibility::{pac_chain_bound, simulate_pac_chain};
use regime_kernel::morphism::mitchell_collapse;
use regime_kernel::runner::{emit_report, run_scenario, ReportFormat, RunReport, Verdict};
use regime_kernel::scenario::Scenario;
use regime_kernel::stability::{verify_drift, DriftParams, TrajectoryRecord};
use regime_kernel::symbolic::{entails, least_model_trace, Goal, TheoryFile};
use regime_kernel::witness::{simulate_witness, AnchoredRegime};
use regime_kernel::{Error, Result};

/// Run and verify regime-variation scenarios.
#[derive(Parser)]
#[command(name = "regime", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file through the certificate gate.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a JSON trajectory (`w_values`, `costs`) against the drift bound.
    VerifyBound {
        trajectory: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Decide Horn entailment; without --goal, checks the file's `?` lines.
    Entail {
        theory: PathBuf,
        #[arg(long)]
        goal: Option<String>,
        /// Print the forward-chaining derivation.
        #[arg(long)]
        trace: bool,
    },
    /// One-regime collapse of a scenario's system and its classification.
    Collapse { scenario: PathBuf },
    /// Built-in anchored witness: cycle through anchors, switching periodically.
    Witness {
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Anchors separated by `;`, coordinates by `,`.
        #[arg(long, default_value = "0,0;1,1")]
        anchors: String,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        switch_every: usize,
        /// Initial state; defaults to the first anchor shifted by 1 in each coordinate.
        #[arg(long)]
        start: Option<String>,
    },
    /// Chain success bounds for per-transition failure probabilities.
    Pac {
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        /// Also estimate the success rate with this many simulated chains.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run several scenarios in parallel and write one report per file.
    Batch {
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        /// Directory for `<stem>.json` / `<stem>.csv` reports.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("`{x}`: {e}")))
        })
        .collect()
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidInput(e.to_string());
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(io),
        None => std::io::stdout().write_all(bytes).map_err(io),
    }
}

fn print_json(v: &serde_json::Value) {
    let mut text = serde_json::to_string_pretty(v).expect("json values serialize");
    text.push('\n');
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn report_ext(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
    }
}

fn summary(path: &Path, r: &Result<RunReport>) -> String {
    match r {
        Ok(rep) => match &rep.verdict {
            Verdict::Completed if rep.succeeded() => format!("{}: COMPLETED", path.display()),
            Verdict::Completed => format!("{}: COMPLETED with drift violations", path.display()),
            Verdict::TerminatedAt { step, .. } => format!("{}: TERMINATED_AT {step}", path.display()),
        },
        Err(e) => format!("{}: error: {e}", path.display()),
    }
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { scenario, format, out } => {
            let report = run_scenario(&Scenario::load(&scenario)?)?;
            write_output(out.as_deref(), &emit_report(&report, format))?;
            Ok(status(report.succeeded()))
        }
        Command::VerifyBound {
            trajectory,
            alpha,
            delta,
            beta,
        } => {
            let text = std::fs::read_to_string(&trajectory)
                .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", trajectory.display())))?;
            let traj: TrajectoryRecord =
                serde_json::from_str(&text).map_err(|e| Error::InvalidTrajectory(e.to_string()))?;
            let report = verify_drift(&DriftParams::new(alpha, delta, beta)?, &traj);
            print_json(&serde_json::to_value(&report).expect("reports serialize"));
            Ok(status(report.passed()))
        }
        Command::Entail { theory, goal, trace } => {
            let text = std::fs::read_to_string(&theory)
                .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", theory.display())))?;
            let file = TheoryFile::parse(&text)?;
            let goals: Vec<Goal> = match goal {
                Some(g) => vec![g.parse()?],
                None => file.goals.clone(),
            };
            if goals.is_empty() {
                return Err(Error::InvalidInput("no goal given and none in the file".into()));
            }
            if trace {
                for d in least_model_trace(&file.theory) {
                    println!("{}\t{}", d.atom, d.clause);
                }
            }
            let mut all = true;
            for g in &goals {
                let ok = entails(&file.theory, g);
                all &= ok;
                println!("{g}: {}", if ok { "entailed" } else { "not entailed" });
            }
            Ok(status(all))
        }
        Command::Collapse { scenario } => {
            let compiled = Scenario::load(&scenario)?.compile()?;
            let (tuple, report) = mitchell_collapse(&compiled.system)?;
            print_json(&json!({ "mitchell_tuple": tuple, "report": report }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Witness {
            alpha,
            anchors,
            steps,
            switch_every,
            start,
        } => {
            let regimes = anchors
                .split(';')
                .enumerate()
                .map(|(i, a)| AnchoredRegime::new(format!("r{i}"), parse_vector(a)?, alpha))
                .collect::<Result<Vec<_>>>()?;
            let s0 = match start {
                Some(s) => parse_vector(&s)?,
                None => regimes[0].anchor.iter().map(|x| x + 1.0).collect(),
            };
            let schedule: Vec<usize> = if switch_every == 0 {
                Vec::new()
            } else {
                (1..).map(|k| k * switch_every).take_while(|t| *t < steps).collect()
            };
            let run = simulate_witness(&regimes, &schedule, &s0, steps)?;
            let drift = verify_drift(&run.effective, &run.trajectory);
            print_json(&json!({
                "trajectory": run.trajectory,
                "regimes": run.regimes,
                "effective": run.effective,
                "drift": drift,
                "cost_convention": "costs hold beta * d_T; verified with beta = 1",
            }));
            Ok(status(drift.passed()))
        }
        Command::Pac { deltas, trials, seed } => {
            let bound = pac_chain_bound(&deltas)?;
            let empirical = trials.map(|m| simulate_pac_chain(&deltas, m, seed)).transpose()?;
            print_json(&json!({
                "product": bound.product,
                "union": bound.union,
                "empirical": empirical,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Batch {
            scenarios,
            format,
            out_dir,
        } => {
            let results: Vec<Result<RunReport>> = std::thread::scope(|scope| {
                let handles: Vec<_> = scenarios
                    .iter()
                    .map(|p| scope.spawn(move || run_scenario(&Scenario::load(p)?)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join()
                            .unwrap_or_else(|_| Err(Error::InvalidInput("worker panicked".into())))
                    })
                    .collect()
            });
            let mut code = ExitCode::SUCCESS;
            let mut any_error = false;
            for (path, result) in scenarios.iter().zip(&results) {
                println!("{}", summary(path, result));
                match result {
                    Ok(rep) => {
                        if let Some(dir) = &out_dir {
                            let stem = path.file_stem().map_or("report".into(), |s| s.to_string_lossy());
                            let target = dir.join(format!("{stem}.{}", report_ext(format)));
                            write_output(Some(&target), &emit_report(rep, format))?;
                        }
                        if !rep.succeeded() {
                            code = ExitCode::from(2);
                        }
                    }
                    Err(_) => any_error = true,
                }
            }
            Ok(if any_error { ExitCode::FAILURE } else { code })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
