use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use manifold_descent::bench::{self, RunSetup, SweepSpec};
use manifold_descent::config::{Config, Experiment, OutputFormat};
use manifold_descent::svg::{line_plot, PlotOptions, Series};
use manifold_descent::{output, suite};
use manifold_descent_core::diagnostics::diagnose;
use manifold_descent_core::integrate::simulate;
use manifold_descent_core::{MethodSpec, Termination, Trajectory};

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

/// Simulate accelerated gradient flows and check their certificates.
#[derive(Parser, Debug)]
#[command(name = "manifold-descent", version)]
struct Cli {
    /// TOML config file. Without one, built-in defaults are used.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set integrator.h=0.01`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Write an SVG plot of f(x(t)).
    #[arg(long, global = true, conflicts_with = "no_plot")]
    plot: bool,
    #[arg(long, global = true)]
    no_plot: bool,
    /// Logarithmic y axis in plots.
    #[arg(long, global = true)]
    log_y: bool,
    /// Perturbation seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Record wall time per run (makes summaries non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate `[method]` and write the trajectory and its diagnostics.
    Run,
    /// Run every `[[methods]]` entry from the same start.
    Compare,
    /// Evaluate `[[methods]]` templates on the `[sweep]` alpha x beta grid.
    Sweep,
    /// Terminal error statistics under per-step perturbations.
    Persist,
    /// Run the built-in verification suite.
    Check,
}

fn load(cli: &Cli) -> Result<Experiment> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path, &cli.set)?,
        None => Config::from_toml("", &cli.set)?,
    };
    let o = &mut cfg.output;
    if let Some(dir) = &cli.out {
        o.dir = dir.clone();
    }
    if let Some(f) = cli.format {
        o.format = f;
    }
    if cli.plot {
        o.plot = true;
    }
    if cli.no_plot {
        o.plot = false;
    }
    o.log_y |= cli.log_y;
    o.timing |= cli.timing;
    if let Some(seed) = cli.seed {
        cfg.perturbation.seed = seed;
    }
    Ok(cfg.validate()?)
}

fn setup(e: &Experiment) -> RunSetup {
    let c = &e.config;
    RunSetup {
        objective: e.objective.clone(),
        x0: e.x0.clone(),
        integrator: c.integrator,
        diagnostics: c.diagnostics,
        perturbation: c.perturbation.is_active().then_some(c.perturbation),
        timing: c.output.timing,
    }
}

fn methods_or(e: &Experiment, default: &[MethodSpec]) -> Vec<MethodSpec> {
    if e.config.methods.is_empty() {
        default.to_vec()
    } else {
        e.config.methods.clone()
    }
}

fn plot(trajs: &[&Trajectory], names: &[String], e: &Experiment, title: &str) -> String {
    let series: Vec<Series> = trajs
        .iter()
        .zip(names)
        .map(|(t, n)| Series {
            name: n.clone(),
            x: &t.times,
            y: &t.f_vals,
        })
        .collect();
    line_plot(
        &series,
        &PlotOptions {
            title,
            x_label: "t",
            y_label: "f(x(t))",
            log_y: e.config.output.log_y,
        },
    )
}

fn cmd_run(e: &Experiment) -> Result<u8> {
    let c = &e.config;
    let perturbation = c.perturbation.is_active().then_some(&c.perturbation);
    let traj = simulate(&c.method, &e.objective, &e.x0, &c.integrator, perturbation)?;
    let report = diagnose(&traj, &c.diagnostics);
    let mut files = Vec::new();
    if c.output.format.csv() {
        files.push(("traj.csv".to_string(), output::trajectory_csv(&traj)?));
    }
    if c.output.format.json() {
        files.push(("traj.json".to_string(), output::trajectory_json(&traj)?));
    }
    files.push(("report.json".to_string(), output::report_json(&traj, &report)?));
    if c.output.plot {
        let name = bench::label(&c.method);
        files.push(("fig.svg".to_string(), plot(&[&traj], std::slice::from_ref(&name), e, &name)));
    }
    output::write_all(&c.output.dir, &files)?;
    for v in &report.verdicts {
        println!("{:<20} {}", v.name, if v.pass { "pass" } else { "fail" });
    }
    println!("terminated_by        {}", traj.terminated_by.name());
    Ok(if traj.terminated_by == Termination::Divergence {
        EXIT_DIVERGED
    } else {
        0
    })
}

fn summary_files(stem: &str, recs: &[bench::RunRecord], format: OutputFormat) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    if format.csv() {
        files.push((format!("{stem}.csv"), output::summary_csv(recs)?));
    }
    if format.json() {
        files.push((format!("{stem}.json"), output::summary_json(recs)?));
    }
    Ok(files)
}

fn print_records(recs: &[bench::RunRecord]) {
    for r in recs {
        println!(
            "{:<40} settle {:>10.4}  gap {:>11.3e}  {}",
            r.label, r.settling_time, r.terminal_gap, r.verdicts
        );
    }
}

fn divergence_code(recs: &[bench::RunRecord]) -> u8 {
    if recs.iter().any(|r| r.diverged()) {
        EXIT_DIVERGED
    } else {
        0
    }
}

fn cmd_compare(e: &Experiment) -> Result<u8> {
    let methods = methods_or(
        e,
        &[
            MethodSpec::GdFlow,
            MethodSpec::Hbf { lambda: 2.0 },
            MethodSpec::Proposed { alpha: 1.0, beta: 0.9 },
        ],
    );
    let runs = bench::compare_with_trajectories(&methods, &setup(e))?;
    let recs: Vec<bench::RunRecord> = runs.iter().map(|(r, _)| r.clone()).collect();
    let mut files = summary_files("summary", &recs, e.config.output.format)?;
    if e.config.output.plot {
        let trajs: Vec<&Trajectory> = runs.iter().map(|(_, t)| t).collect();
        let names: Vec<String> = recs.iter().map(|r| r.label.clone()).collect();
        files.push(("fig.svg".to_string(), plot(&trajs, &names, e, "compare")));
    }
    output::write_all(&e.config.output.dir, &files)?;
    print_records(&recs);
    Ok(divergence_code(&recs))
}

fn cmd_sweep(e: &Experiment) -> Result<u8> {
    let c = &e.config;
    let spec = SweepSpec {
        alphas: c.sweep.alphas.clone(),
        betas: c.sweep.betas.clone(),
        methods: methods_or(
            e,
            &[
                MethodSpec::Pni { alpha: 1.0, beta: 1.0 },
                MethodSpec::Proposed { alpha: 1.0, beta: 1.0 },
            ],
        ),
        seeds: c.sweep.seeds.clone(),
    };
    let recs = bench::sweep(&spec, &setup(e))?;
    output::write_all(&c.output.dir, &summary_files("sweep", &recs, c.output.format)?)?;
    print_records(&recs);
    Ok(divergence_code(&recs))
}

fn cmd_persist(e: &Experiment) -> Result<u8> {
    let c = &e.config;
    let methods = methods_or(
        e,
        &[
            MethodSpec::Pni { alpha: 1.0, beta: 0.9 },
            MethodSpec::Proposed { alpha: 1.0, beta: 0.9 },
        ],
    );
    let mut s = setup(e);
    s.perturbation = None;
    let rows = bench::persistence_experiment(&c.persist.deltas, &c.persist.seeds, &methods, &s, c.perturbation)?;
    let mut files = Vec::new();
    if c.output.format.csv() {
        files.push(("persist.csv".to_string(), output::persist_csv(&rows)?));
    }
    if c.output.format.json() {
        files.push(("persist.json".to_string(), output::persist_json(&rows)?));
    }
    output::write_all(&c.output.dir, &files)?;
    for r in &rows {
        println!(
            "delta {:<8e} {:<32} median {:.3e}  max {:.3e}",
            r.delta, r.label, r.median_distance, r.max_distance
        );
    }
    Ok(if rows.iter().any(|r| r.diverged > 0) {
        EXIT_DIVERGED
    } else {
        0
    })
}

fn cmd_check() -> u8 {
    let outcomes = suite::run_all();
    for o in &outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.pass) {
        0
    } else {
        EXIT_CHECK_FAILED
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exp = match load(&cli) {
        Ok(e) => e,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match cli.command {
        Command::Run => cmd_run(&exp),
        Command::Compare => cmd_compare(&exp),
        Command::Sweep => cmd_sweep(&exp),
        Command::Persist => cmd_persist(&exp),
        Command::Check => Ok(cmd_check()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
