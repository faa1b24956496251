//! Command-line front end: single decodes, seeded benchmarks, parameter
//! sweeps and the verification suite.
//!
//! Config-content errors exit with code 2 and a machine-readable JSON
//! object on stderr; runtime failures exit with code 1.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sjd_core::bench::{emit_report, run_bench, sweep, BenchConfig, SeedSpec};
use sjd_core::decoder::DecodeMode;
use sjd_core::model::ModelSpec;
use sjd_core::oracle::run_suite;
use sjd_core::spatial_init::{GridGeom, InitStrategy};
use sjd_core::{bench, EngineError};

#[derive(Parser)]
#[command(
    name = "sjd",
    version,
    about = "Speculative Jacobi decoding engine over synthetic token models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single decode; prints a JSON summary, optionally writing the
    /// trace CSV and a PGM of the token grid under --out.
    Decode(RunArgs),
    /// Run every seed against one configuration and aggregate.
    Bench(RunArgs),
    /// Run the Cartesian product of the sweep axes declared in the config.
    Sweep(RunArgs),
    /// Verify the accept-or-resample identity and the end-to-end decoding
    /// law; prints a JSON verdict.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON benchmark config (model, decode template, seeds,
    /// sweep axes, out_dir).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model: preset name (hash, hash-sharp, ngram), inline JSON, or a path
    /// to a JSON file.
    #[arg(long)]
    model: Option<String>,
    /// Decoding mode: ar, jacobi, sjd, sjdpp.
    #[arg(long)]
    mode: Option<String>,
    /// Jacobi window size W.
    #[arg(long)]
    window: Option<usize>,
    /// Top-K truncation.
    #[arg(long)]
    topk: Option<usize>,
    /// Sampling temperature.
    #[arg(long)]
    temp: Option<f64>,
    /// Reuse threshold tau (sjdpp).
    #[arg(long)]
    tau: Option<f64>,
    /// Init strategy: random, h_repeat, v_repeat, h_sample, v_sample.
    #[arg(long)]
    init: Option<String>,
    /// Grid as HxW, e.g. 16x16.
    #[arg(long)]
    grid: Option<String>,
    /// Run seed (decode) or base seed (bench/sweep).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of derived seeds for bench/sweep.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory for report.json / trace.csv / tokens.pgm.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Monte Carlo trials per decoding law check.
    #[arg(long, default_value_t = 500_000)]
    trials: u64,
    /// Base seed for the suite.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional path for the JSON verdict.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_model(text: &str) -> Result<ModelSpec, EngineError> {
    if let Some(spec) = ModelSpec::preset(text) {
        return Ok(spec);
    }
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return serde_json::from_str(trimmed)
            .map_err(|e| EngineError::InvalidConfig(format!("bad model JSON: {e}")));
    }
    let path = PathBuf::from(text);
    if path.exists() {
        let body = fs::read_to_string(&path)?;
        return serde_json::from_str(&body)
            .map_err(|e| EngineError::InvalidConfig(format!("bad model JSON in {text}: {e}")));
    }
    Err(EngineError::InvalidConfig(format!(
        "unknown model {text:?}: expected a preset (hash, hash-sharp, ngram), inline JSON, or a JSON file path"
    )))
}

fn parse_grid(text: &str) -> Result<GridGeom, EngineError> {
    let bad = || EngineError::InvalidConfig(format!("bad grid {text:?}; expected HxW, e.g. 16x16"));
    let (h, w) = text.split_once('x').ok_or_else(bad)?;
    let height = h.parse().map_err(|_| bad())?;
    let width = w.parse().map_err(|_| bad())?;
    Ok(GridGeom::new(height, width))
}

/// Assemble the effective bench config from the config file plus flag
/// overrides.
fn build_config(args: &RunArgs) -> Result<BenchConfig, EngineError> {
    let mut config = match &args.config {
        Some(path) => {
            let body = fs::read_to_string(path)?;
            serde_json::from_str::<BenchConfig>(&body).map_err(|e| {
                EngineError::InvalidConfig(format!("bad config {}: {e}", path.display()))
            })?
        }
        None => {
            let model_text = args.model.as_deref().ok_or_else(|| {
                EngineError::InvalidConfig("a model is required: pass --config or --model".into())
            })?;
            BenchConfig::new(parse_model(model_text)?, Default::default())
        }
    };
    if args.config.is_some() {
        if let Some(model_text) = &args.model {
            config.model = parse_model(model_text)?;
        }
    }
    if let Some(mode) = &args.mode {
        config.decode.mode = mode.parse::<DecodeMode>()?;
    }
    if let Some(w) = args.window {
        config.decode.window = w;
    }
    if let Some(k) = args.topk {
        config.decode.top_k = k;
    }
    if let Some(t) = args.temp {
        config.decode.temperature = t;
    }
    if let Some(tau) = args.tau {
        config.decode.reuse_threshold = tau;
    }
    if let Some(init) = &args.init {
        config.decode.init = init.parse::<InitStrategy>()?;
    }
    if let Some(grid) = &args.grid {
        config.decode.grid = parse_grid(grid)?;
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    Ok(config)
}

fn cmd_decode(args: &RunArgs) -> Result<(), EngineError> {
    let mut config = build_config(args)?;
    if let Some(seed) = args.seed {
        config.decode.seed = seed;
    }
    config.sweep = None;
    config.seeds = SeedSpec::List(vec![config.decode.seed]);

    let report = run_bench(&config)?;
    let run = &report.cells[0].runs[0];
    let summary = serde_json::json!({
        "mode": config.decode.mode.name(),
        "grid": { "height": config.decode.grid.height, "width": config.decode.grid.width },
        "seed": run.seed,
        "steps": run.steps,
        "step_compression": run.step_compression,
        "logprob_mean": run.logprob_mean,
        "logprob_std": run.logprob_std,
        "tokens": run.tokens,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);

    if let Some(out) = &config.out_dir {
        let paths = emit_report(&report, out)?;
        let pgm = out.join("tokens.pgm");
        bench::write_pgm(&run.tokens, config.decode.grid, config.model.vocab_size(), &pgm)?;
        eprintln!(
            "wrote {}, {}, {}",
            paths.json.display(),
            paths.csv.display(),
            pgm.display()
        );
    }
    Ok(())
}

fn cmd_bench(args: &RunArgs, sweeping: bool) -> Result<(), EngineError> {
    let mut config = build_config(args)?;
    if args.seed.is_some() || args.seeds.is_some() {
        config.seeds =
            SeedSpec::Base { base: args.seed.unwrap_or(0), count: args.seeds.unwrap_or(1) };
    }
    let started = Instant::now();
    let report = if sweeping { sweep(&config)? } else { run_bench(&config)? };
    eprintln!(
        "{} finished in {:.2}s ({} cells)",
        if sweeping { "sweep" } else { "bench" },
        started.elapsed().as_secs_f64(),
        report.cells.len()
    );
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &config.out_dir {
        let paths = emit_report(&report, out)?;
        eprintln!("wrote {}, {}", paths.json.display(), paths.csv.display());
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), EngineError> {
    let verdict = run_suite(args.trials, args.seed)?;
    let body = serde_json::to_string_pretty(&verdict)?;
    println!("{body}");
    if let Some(out) = &args.out {
        fs::write(out, format!("{body}\n"))?;
    }
    if !verdict.pass {
        return Err(EngineError::InvalidConfig(
            "oracle suite failed; see the verdict on stdout".into(),
        ));
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decode(args) => cmd_decode(args),
        Command::Bench(args) => cmd_bench(args, false),
        Command::Sweep(args) => cmd_bench(args, true),
        Command::Oracle(args) => cmd_oracle(args),
    };
    if let Err(err) = result {
        let payload = serde_json::json!({ "error": err.to_string(), "kind": err.kind() });
        eprintln!("{payload}");
        std::process::exit(if err.kind() == "config" { 2 } else { 1 });
    }
}
