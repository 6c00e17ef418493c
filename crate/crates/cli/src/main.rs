//! `macgen`: generate, verify and report gate-level multipliers, fused MACs
//! and prefix adders.
//!
//! Exit codes: 0 success (solver limits reached with a usable answer are
//! reported as warnings), 1 other failure, 2 usage or configuration error,
//! 3 infeasible ILP, 4 verification failure, 5 solver stopped without any
//! feasible answer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use macgen::config::Config;
use macgen::ct_wire::{histogram_svg, samples_csv, sample_random_wirings, zero_arrivals};
use macgen::ilp::IlpError;
use macgen::netlist::Netlist;
use macgen::pipeline::{
    corpus_csv, fdc_corpus, fit_timing, generate, generate_adder, sweep, sweep_csv, write_design, GenSpec, Strategy,
};
use macgen::tech::GateDelays;
use macgen::verify::{check_equivalence, Mode, VerifyOptions, VerifyReport};
use macgen::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "macgen", version, about = "Gate-level multiplier, fused MAC and prefix-adder generator")]
struct Cli {
    /// TOML file with delays, FDC coefficients, area weights and solver limits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unsigned N x N multiplier.
    GenMult(GenArgs),
    /// Fused multiply-accumulate a * b + c.
    GenMac {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        acc_width: usize,
    },
    /// Prefix adder for given input arrival times.
    GenAdder {
        #[command(flatten)]
        gen: GenArgs,
        /// Comma-separated arrival time per bit (default all zero).
        #[arg(long, value_delimiter = ',')]
        arrivals: Vec<f64>,
    },
    /// Re-check an emitted netlist against its declared function.
    Verify {
        netlist: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Auto)]
        mode: ModeArg,
        /// Random vectors, on top of the corner cases.
        #[arg(long, default_value_t = 1_000_000)]
        vectors: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to write a counterexample, if one is found.
        #[arg(long)]
        counterexample: Option<PathBuf>,
    },
    /// Area and longest-path report of an emitted netlist.
    Report {
        netlist: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Strategy x width grid with Pareto marking.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        widths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "area,timing,tradeoff")]
        strategies: Vec<String>,
        #[arg(long, default_value_t = 0)]
        acc_width: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Fit FDC coefficients on a generated corpus of prefix adders.
    FitTiming {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Randomly reshaped adders per width, besides the four classic ones.
        #[arg(long, default_value_t = 4)]
        random_per_width: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long)]
    width: usize,
    #[arg(long, default_value = "tradeoff")]
    strategy: String,
    /// Adder deadline from its earliest input, in gate-delay units.
    #[arg(long)]
    target_delay: Option<f64>,
    /// `internal`, or `external:<path>` for a command-line MILP solver
    /// (`external` alone reads MACGEN_SOLVER).
    #[arg(long, default_value = "internal")]
    solver: String,
    /// Seconds per ILP solve.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Seed for random-wiring sampling and verification vectors.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Module and file name.
    #[arg(long)]
    name: Option<String>,
    /// Also sample this many random wirings of the tree and write their
    /// delay histogram.
    #[arg(long, default_value_t = 0)]
    wiring_samples: usize,
    /// Random vectors for the post-generation check.
    #[arg(long, default_value_t = 100_000)]
    verify_vectors: u64,
    #[arg(long)]
    no_verify: bool,
}

#[derive(ValueEnum, Clone, Copy)]
enum ModeArg {
    Auto,
    Exhaustive,
    Random,
}

#[derive(ValueEnum, Clone, Copy)]
enum Format {
    Json,
    Csv,
}

enum Failure {
    Error(Error),
    Verify(VerifyReport),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidWidth(_) | Error::InvalidAccWidth { .. } | Error::StageLimit { .. } => 2,
        Error::Ilp(IlpError::SolverMissing { .. }) => 2,
        Error::Infeasible(_) => 3,
        Error::Verify(_) => 4,
        Error::NoIncumbent(_) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(rep)) => {
            eprintln!("verification FAILED after {} vectors", rep.vectors);
            if let Some(cx) = rep.counterexample {
                eprintln!("counterexample: {}", serde_json::to_string(&cx).unwrap_or_default());
            }
            ExitCode::from(4)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Error> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn apply_gen_flags(cfg: &mut Config, g: &GenArgs) -> Result<Strategy, Error> {
    if let Some(t) = g.time_limit {
        cfg.solver.time_limit_s = t;
    }
    match g.solver.as_str() {
        "internal" => cfg.solver.external = None,
        "external" => {
            let s = macgen::ilp::ExternalSolver::from_env()?;
            cfg.solver.external = Some(s.executable.display().to_string());
        }
        s => match s.strip_prefix("external:") {
            Some(p) if !p.is_empty() => cfg.solver.external = Some(p.to_string()),
            _ => return Err(Error::Config(format!("--solver must be internal or external:<path>, got {s:?}"))),
        },
    }
    cfg.validate()?;
    g.strategy.parse()
}

fn post_check(nl: &Netlist, g: &GenArgs) -> Result<(), Failure> {
    if g.no_verify {
        return Ok(());
    }
    let rep = check_equivalence(nl, &VerifyOptions { mode: None, vectors: g.verify_vectors, seed: g.seed })?;
    if !rep.passed {
        return Err(Failure::Verify(rep));
    }
    println!("verify: {:?} over {} vectors, pass", rep.mode, rep.vectors);
    Ok(())
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn gen_multiplier(cfg: &Config, g: &GenArgs, acc_width: usize) -> Result<(), Failure> {
    let mut cfg = cfg.clone();
    let strategy = apply_gen_flags(&mut cfg, g)?;
    let spec = GenSpec { width: g.width, acc_width, strategy, target_delay: g.target_delay, name: g.name.clone() };
    let d = generate(&spec, &cfg)?;
    for w in &d.report.warnings {
        eprintln!("warning: {w}");
    }
    let files = write_design(&g.out_dir, &d.netlist, &d.report)?;
    print_files(&files);
    if g.wiring_samples > 0 {
        let arr = zero_arrivals(&d.assignment);
        let (samples, stats) = sample_random_wirings(&d.assignment, &cfg.delay_table(), &arr, g.wiring_samples, g.seed);
        let stem = g.out_dir.join(&d.netlist.name);
        let csv = stem.with_extension("wiring.csv");
        let svg = stem.with_extension("wiring.svg");
        std::fs::write(&csv, samples_csv(&samples))?;
        let title = format!("{} random wirings; chosen wiring {}", samples.len(), d.report.wiring.delay);
        std::fs::write(&svg, histogram_svg(&samples, 30, &title))?;
        print_files(&[csv, svg]);
        println!("random wirings: min {} max {} mean {:.3}", stats.min, stats.max, stats.mean);
    }
    let r = &d.report;
    println!(
        "{}: {} stages (bound {}), {} 3:2 + {} 2:2, tree delay {}, adder {} nodes, area {}, delay {}",
        r.name, r.stages, r.stage_bound, r.full_adders, r.half_adders, r.ct_delay, r.cpa.nodes, r.area.total, r.delay
    );
    post_check(&d.netlist, g)
}

#[derive(Serialize)]
struct AdderReport<'a> {
    cpa: &'a macgen::pipeline::CpaSummary,
    area: macgen::netlist::AreaReport,
    timing: macgen::netlist::TimingReport,
}

fn gen_adder(cfg: &Config, g: &GenArgs, arrivals: &[f64]) -> Result<(), Failure> {
    let mut cfg = cfg.clone();
    let strategy = apply_gen_flags(&mut cfg, g)?;
    let (nl, _, summary) = generate_adder(g.width, arrivals, strategy, g.target_delay, g.name.clone(), &cfg)?;
    let ins = BTreeMap::from([("a".to_string(), arrivals.to_vec()), ("b".to_string(), arrivals.to_vec())]);
    let report = AdderReport { cpa: &summary, area: nl.area(&cfg.area), timing: nl.timing(&cfg.gate_delays, &ins)? };
    if !summary.met {
        eprintln!("warning: adder misses its budget: worst cost {} > {}", summary.worst_cost, summary.budget);
    }
    print_files(&write_design(&g.out_dir, &nl, &report)?);
    println!("{}: {} prefix nodes, depth {}, area {}, delay {}", nl.name, summary.nodes, summary.max_depth, report.area.total, report.timing.max);
    post_check(&nl, g)
}

fn read_netlist(path: &Path) -> Result<Netlist, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Netlist::from_json(&text)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::GenMult(g) => gen_multiplier(&cfg, g, 0),
        Command::GenMac { gen, acc_width } => {
            if *acc_width == 0 {
                return Err(Error::Config("--acc-width must be positive for a MAC".into()).into());
            }
            gen_multiplier(&cfg, gen, *acc_width)
        }
        Command::GenAdder { gen, arrivals } => gen_adder(&cfg, gen, arrivals),
        Command::Verify { netlist, mode, vectors, seed, counterexample } => {
            let nl = read_netlist(netlist)?;
            let mode = match mode {
                ModeArg::Auto => None,
                ModeArg::Exhaustive => Some(Mode::Exhaustive),
                ModeArg::Random => Some(Mode::Random),
            };
            let rep = check_equivalence(&nl, &VerifyOptions { mode, vectors: *vectors, seed: *seed })?;
            if let (Some(path), Some(cx)) = (counterexample, &rep.counterexample) {
                std::fs::write(path, serde_json::to_string_pretty(cx)? + "\n")?;
            }
            if !rep.passed {
                return Err(Failure::Verify(rep));
            }
            println!("{}: {:?} over {} vectors, pass", nl.name, rep.mode, rep.vectors);
            Ok(())
        }
        Command::Report { netlist, format } => {
            let nl = read_netlist(netlist)?;
            let area = nl.area(&cfg.area);
            let timing = nl.timing(&cfg.gate_delays, &BTreeMap::new())?;
            match format {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Out<'a> {
                        name: &'a str,
                        area: macgen::netlist::AreaReport,
                        timing: macgen::netlist::TimingReport,
                    }
                    println!("{}", serde_json::to_string_pretty(&Out { name: &nl.name, area, timing })?);
                }
                Format::Csv => {
                    println!("port,bit,arrival");
                    for (p, times) in nl.outputs.iter().zip(&timing.outputs) {
                        for (i, t) in times.iter().enumerate() {
                            println!("{},{i},{t}", p.name);
                        }
                    }
                }
            }
            Ok(())
        }
        Command::Sweep { widths, strategies, acc_width, out_dir } => {
            let strategies = strategies.iter().map(|s| s.parse()).collect::<Result<Vec<Strategy>, Error>>()?;
            let pts = sweep(widths, *acc_width, &strategies, &cfg)?;
            std::fs::create_dir_all(out_dir)?;
            let path = out_dir.join("sweep.csv");
            std::fs::write(&path, sweep_csv(&pts))?;
            print_files(&[path]);
            println!("{} points, {} on a per-width Pareto front", pts.len(), pts.iter().filter(|p| p.pareto).count());
            Ok(())
        }
        Command::FitTiming { seed, random_per_width, iterations, out_dir } => {
            let corpus = fdc_corpus(*seed, *random_per_width, &GateDelays::logical_effort())?;
            let fit = fit_timing(&corpus, &cfg.fdc, *iterations)?;
            std::fs::create_dir_all(out_dir)?;
            let csv = out_dir.join("fdc_corpus.csv");
            let json = out_dir.join("fdc_fit.json");
            std::fs::write(&csv, corpus_csv(&corpus, &fit.features))?;
            #[derive(Serialize)]
            struct Out<'a> {
                adders: usize,
                fdc: &'a macgen::cpa::FitReport,
                depth_only: &'a macgen::cpa::DepthFit,
                iterations: usize,
            }
            let out = Out { adders: corpus.len(), fdc: &fit.fdc, depth_only: &fit.depth, iterations: fit.iterations };
            std::fs::write(&json, serde_json::to_string_pretty(&out)? + "\n")?;
            print_files(&[csv, json]);
            let m = fit.fdc.model;
            println!(
                "{} adders, {} samples: FDC R2 {:.4} MAPE {:.2}% (k0 {:.3} k1 {:.3} k2 {:.3} k3 {:.3} b {:.3}); depth-only R2 {:.4} MAPE {:.2}%",
                corpus.len(),
                fit.fdc.samples,
                fit.fdc.r2,
                fit.fdc.mape,
                m.k0,
                m.k1,
                m.k2,
                m.k3,
                m.b,
                fit.depth.r2,
                fit.depth.mape
            );
            Ok(())
        }
    }
}
