use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use coalctl_core::harness::{
    self, export, import_steps, load_config, plot_comparison, plot_trace, run, synthesize_all, GainStore,
    RunOptions, SimConfig, Trace,
};
use coalctl_core::Error;

/// Coalitional control with online topology switching.
#[derive(Parser)]
#[command(name = "coalctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design and certify gains for every topology.
    Synth(Common),
    /// Simulate the closed loop with the topology supervisor.
    Run(RunArgs),
    /// Coalitional run against forced all-links and no-links baselines.
    Compare(Common),
    /// Redraw figures from a `steps.csv` in the output directory.
    Plot(PlotArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Gain store to read (run, compare) or write (synth). Synthesized on
    /// the fly when absent for run and compare.
    #[arg(long)]
    gains: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    no_plots: bool,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Hold this topology index for the whole run.
    #[arg(long)]
    topology: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Aborted(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(Error::Config { .. } | Error::VertexBudget { .. }) => 2,
            Failure::Core(Error::Infeasible { .. } | Error::Assumption(_)) => 3,
            Failure::Core(Error::Numerical { .. }) | Failure::Aborted(_) => 4,
            Failure::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Aborted(why) => write!(f, "run aborted: {why}"),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn mkdir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })?;
    Ok(())
}

fn write(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(())
}

fn setup(common: &Common) -> CliResult<SimConfig> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.resolved.seed = seed;
    }
    mkdir(&common.out)?;
    write(&common.out.join("config.resolved.toml"), &cfg.echo())?;
    Ok(cfg)
}

fn gains(cfg: &SimConfig, path: Option<&Path>) -> CliResult<GainStore> {
    match path {
        Some(p) if p.exists() => Ok(GainStore::load(p)?),
        _ => {
            let store = synthesize_all(cfg)?;
            if let Some(p) = path {
                store.save(p)?;
            }
            Ok(store)
        }
    }
}

fn print_store(store: &GainStore) {
    for r in &store.records {
        match r.design() {
            Some(d) => println!(
                "{:<4} {:<22} certified  beta={:.4} sigma={:.4e} margin={:.3e}",
                r.topology.label(),
                r.topology.to_string(),
                d.observer.beta,
                d.observer.sigma,
                d.certificate.margin
            ),
            None => println!("{:<4} {:<22} removed", r.topology.label(), r.topology.to_string()),
        }
    }
}

fn save_run(cfg: &SimConfig, trace: &Trace, dir: &Path, plots: bool) -> CliResult {
    export(trace, dir)?;
    let summary = serde_json::json!({
        "metrics": trace.metrics,
        "aborted": trace.aborted,
        "steps": trace.steps.len(),
        "topology_sequence": trace.switches.iter().map(|d| (d.k, d.chosen)).collect::<Vec<_>>(),
    });
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary).expect("json"))?;
    if plots {
        plot_trace(trace, dir, cfg.platoon.map(|p| p.n_cars))?;
    }
    Ok(())
}

fn check_aborted(trace: &Trace) -> CliResult {
    match &trace.aborted {
        Some(why) => Err(Failure::Aborted(why.clone())),
        None => Ok(()),
    }
}

fn synth_cmd(c: &Common) -> CliResult {
    let cfg = setup(c)?;
    let path = c.gains.clone().unwrap_or_else(|| c.out.join("gains.json"));
    let store = synthesize_all(&cfg)?;
    store.save(&path)?;
    print_store(&store);
    println!("gains written to {}", path.display());
    Ok(())
}

fn run_cmd(a: &RunArgs) -> CliResult {
    let cfg = setup(&a.common)?;
    let store = gains(&cfg, a.common.gains.as_deref())?;
    let trace = run(
        &cfg,
        &store,
        &RunOptions {
            forced_topology: a.topology,
            ..Default::default()
        },
    )?;
    save_run(&cfg, &trace, &a.common.out, !a.common.no_plots)?;
    let m = &trace.metrics;
    println!(
        "J_x = {:.4e}  J_e = {:.4e}  comm = {:.4e}  J_total = {:.4e}",
        m.j_x, m.j_e, m.comm_cost, m.j_total
    );
    info!("outputs in {}", a.common.out.display());
    check_aborted(&trace)
}

fn compare_cmd(c: &Common) -> CliResult {
    let cfg = setup(c)?;
    let store = gains(&cfg, c.gains.as_deref())?;
    let grand = store.grand_index();
    let variants = [
        ("coalitional", None),
        ("all_links", Some(grand)),
        ("no_links", Some(0)),
    ];
    let mut traces = Vec::new();
    for (name, forced) in variants {
        let trace = run(
            &cfg,
            &store,
            &RunOptions {
                forced_topology: forced,
                ..Default::default()
            },
        )?;
        let dir = c.out.join(name);
        save_run(&cfg, &trace, &dir, !c.no_plots)?;
        traces.push((name, trace));
    }
    let mut table = String::from("run,J_x,J_e,comm_cost,J_total\n");
    println!("{:<12} {:>12} {:>12} {:>12} {:>12}", "run", "J_x", "J_e", "comm", "J_total");
    for (name, t) in &traces {
        let m = &t.metrics;
        println!(
            "{:<12} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            name, m.j_x, m.j_e, m.comm_cost, m.j_total
        );
        table.push_str(&format!("{name},{},{},{},{}\n", m.j_x, m.j_e, m.comm_cost, m.j_total));
    }
    write(&c.out.join("comparison.csv"), &table)?;
    if !c.no_plots {
        let refs: Vec<(&str, &Trace)> = traces.iter().map(|(n, t)| (*n, t)).collect();
        plot_comparison(&refs, c.out.join("comparison.svg"))?;
    }
    traces.iter().try_for_each(|(_, t)| check_aborted(t))
}

fn plot_cmd(a: &PlotArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let steps = import_steps(a.out.join(harness::export::STEPS_FILE), cfg.plant.nx(), cfg.plant.nu())?;
    let costs = harness::CostModel::from_config(&cfg);
    let trace = Trace {
        dt: cfg.dt,
        n_topologies: cfg.n_topologies(),
        metrics: harness::metrics(&steps, &costs),
        steps,
        switches: Vec::new(),
        aborted: None,
    };
    for p in plot_trace(&trace, &a.out, cfg.platoon.map(|p| p.n_cars))? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(c) => synth_cmd(c),
        Command::Run(a) => run_cmd(a),
        Command::Compare(c) => compare_cmd(c),
        Command::Plot(a) => plot_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
