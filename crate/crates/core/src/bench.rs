//! Benchmark harness: multi-seed runs, parameter sweeps, aggregation and
//! report emission.
//!
//! Reports are deterministic: the same `BenchConfig` always produces
//! byte-identical JSON and CSV. Wall-clock time is therefore never written
//! into report files; the CLI logs it to stderr instead. The CSV trace
//! column order is frozen as
//! `run_id,iter,accepted_count,committed_by_resample,reused_count,resampled_count,fresh_count,nfe_so_far,n_so_far`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode_counted, DecodeConfig, IterationRecord, RunResult};
use crate::model::{Model, ModelSpec, TokenId};
use crate::rng::derive_seed;
use crate::spatial_init::{GridGeom, InitStrategy};
use crate::{EngineError, Result};

/// Maximum number of sweep cells.
pub const SWEEP_CELL_LIMIT: usize = 10_000;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Either an explicit seed list or a `(base, count)` pair expanded through
/// `derive_seed(base, i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Base { base: u64, count: u64 },
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Base { base: 0, count: 1 }
    }
}

impl SeedSpec {
    pub fn expand(&self) -> Result<Vec<u64>> {
        let seeds = match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Base { base, count } => (0..*count).map(|i| derive_seed(*base, i)).collect(),
        };
        if seeds.is_empty() {
            return Err(EngineError::InvalidConfig("at least one seed is required".into()));
        }
        Ok(seeds)
    }
}

/// Optional sweep axes; the sweep takes the Cartesian product of all
/// present axes in the fixed order window, tau, top_k, sharpness, init.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepAxes {
    pub window: Option<Vec<usize>>,
    pub tau: Option<Vec<f64>>,
    pub top_k: Option<Vec<usize>>,
    pub sharpness: Option<Vec<f64>>,
    pub init: Option<Vec<InitStrategy>>,
}

impl SweepAxes {
    /// True when no axis is declared.
    pub fn is_empty(&self) -> bool {
        self.window.is_none()
            && self.tau.is_none()
            && self.top_k.is_none()
            && self.sharpness.is_none()
            && self.init.is_none()
    }

    fn validate(&self) -> Result<()> {
        fn check<T>(axis: &Option<Vec<T>>, name: &str) -> Result<()> {
            if let Some(v) = axis {
                if v.is_empty() {
                    return Err(EngineError::InvalidConfig(format!(
                        "sweep axis {name} must be non-empty when present"
                    )));
                }
            }
            Ok(())
        }
        check(&self.window, "window")?;
        check(&self.tau, "tau")?;
        check(&self.top_k, "top_k")?;
        check(&self.sharpness, "sharpness")?;
        check(&self.init, "init")
    }

    fn cell_count(&self) -> usize {
        fn len<T>(axis: &Option<Vec<T>>) -> usize {
            axis.as_ref().map_or(1, Vec::len)
        }
        len(&self.window) * len(&self.tau) * len(&self.top_k) * len(&self.sharpness) * len(&self.init)
    }
}

/// Full benchmark configuration: model, decode template, seeds, optional
/// sweep axes and output location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default)]
    pub sweep: Option<SweepAxes>,
    /// Where to write report.json / trace.csv. Not part of the run's
    /// identity, so it is accepted from config files but never echoed into
    /// reports (reports stay byte-identical wherever they land).
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(model: ModelSpec, decode: DecodeConfig) -> Self {
        Self { model, decode, seeds: SeedSpec::default(), sweep: None, out_dir: None }
    }
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// Knob overrides identifying one sweep cell (all `None` for a plain bench).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CellParams {
    pub window: Option<usize>,
    pub tau: Option<f64>,
    pub top_k: Option<usize>,
    pub sharpness: Option<f64>,
    pub init: Option<InitStrategy>,
}

/// Per-configuration aggregates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregates {
    pub runs: usize,
    pub mean_step_compression: f64,
    pub std_step_compression: f64,
    pub mean_nfe: f64,
    /// Pooled over every committed token of every run.
    pub logprob_mean: f64,
    pub logprob_std: f64,
    /// Tokens committed per iteration (accepted + resample-committed),
    /// histogrammed across all runs.
    pub accept_hist: BTreeMap<usize, u64>,
    pub total_reused: u64,
    pub total_resampled: u64,
    pub total_fresh: u64,
}

/// One decode run inside a report row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub run_id: usize,
    pub seed: u64,
    pub tokens_generated: usize,
    pub steps: usize,
    pub step_compression: f64,
    pub logprob_mean: f64,
    pub logprob_std: f64,
    pub reused: u64,
    pub resampled: u64,
    pub fresh: u64,
    #[serde(skip)]
    pub trace: Vec<IterationRecord>,
    #[serde(skip)]
    pub tokens: Vec<TokenId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    pub params: CellParams,
    pub aggregates: Aggregates,
    pub runs: Vec<RunRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub cells: Vec<CellReport>,
    /// Index into `cells` of the cell with the lowest mean NFE.
    pub argmin_nfe_cell: Option<usize>,
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Aggregate a set of completed runs.
pub fn compute_stats(runs: &[RunResult]) -> Result<Aggregates> {
    if runs.is_empty() {
        return Err(EngineError::InvalidConfig("cannot aggregate zero runs".into()));
    }
    let n = runs.len() as f64;
    let mean_s = runs.iter().map(|r| r.step_compression).sum::<f64>() / n;
    let var_s =
        runs.iter().map(|r| (r.step_compression - mean_s).powi(2)).sum::<f64>() / n;
    let mean_nfe = runs.iter().map(|r| r.steps as f64).sum::<f64>() / n;

    // Pool committed-logprob moments over all tokens of all runs.
    let total_tokens: f64 = runs.iter().map(|r| r.tokens.len() as f64).sum();
    let pooled_mean =
        runs.iter().map(|r| r.logprob_mean * r.tokens.len() as f64).sum::<f64>() / total_tokens;
    let pooled_sq = runs
        .iter()
        .map(|r| (r.logprob_std.powi(2) + r.logprob_mean.powi(2)) * r.tokens.len() as f64)
        .sum::<f64>()
        / total_tokens;
    let pooled_var = (pooled_sq - pooled_mean.powi(2)).max(0.0);

    let mut accept_hist = BTreeMap::new();
    let mut total_reused = 0u64;
    let mut total_resampled = 0u64;
    let mut total_fresh = 0u64;
    for run in runs {
        for rec in &run.iteration_trace {
            *accept_hist.entry(rec.accepted_count + rec.committed_by_resample).or_insert(0) += 1;
            total_reused += rec.reused_count as u64;
            total_resampled += rec.resampled_count as u64;
            total_fresh += rec.fresh_count as u64;
        }
    }

    Ok(Aggregates {
        runs: runs.len(),
        mean_step_compression: mean_s,
        std_step_compression: var_s.sqrt(),
        mean_nfe,
        logprob_mean: pooled_mean,
        logprob_std: pooled_var.sqrt(),
        accept_hist,
        total_reused,
        total_resampled,
        total_fresh,
    })
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

fn run_cell(
    model: &Model,
    decode_cfg: &DecodeConfig,
    seeds: &[u64],
    params: CellParams,
    run_id_base: usize,
) -> Result<CellReport> {
    let results: Vec<(RunResult, u64)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = decode_cfg.clone();
            cfg.seed = seed;
            decode_counted(model, &cfg)
        })
        .collect::<Result<_>>()?;

    // The decoder's iteration count and the model module's forward-pass
    // meter are independent; a report is only valid when they agree.
    for (result, model_nfe) in &results {
        if result.steps as u64 != *model_nfe {
            return Err(EngineError::CounterMismatch {
                decoder: result.steps as u64,
                model: *model_nfe,
            });
        }
    }

    let run_results: Vec<RunResult> = results.iter().map(|(r, _)| r.clone()).collect();
    let aggregates = compute_stats(&run_results)?;
    let runs = results
        .into_iter()
        .zip(seeds)
        .enumerate()
        .map(|(i, ((r, _), &seed))| RunRow {
            run_id: run_id_base + i,
            seed,
            tokens_generated: r.tokens.len(),
            steps: r.steps,
            step_compression: r.step_compression,
            logprob_mean: r.logprob_mean,
            logprob_std: r.logprob_std,
            reused: r.iteration_trace.iter().map(|t| t.reused_count as u64).sum(),
            resampled: r.iteration_trace.iter().map(|t| t.resampled_count as u64).sum(),
            fresh: r.iteration_trace.iter().map(|t| t.fresh_count as u64).sum(),
            trace: r.iteration_trace,
            tokens: r.tokens,
        })
        .collect();
    Ok(CellReport { params, aggregates, runs })
}

fn argmin_nfe(cells: &[CellReport]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.aggregates
                .mean_nfe
                .partial_cmp(&b.aggregates.mean_nfe)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
}

/// Execute every seed against a single configuration cell.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    if config.sweep.as_ref().is_some_and(|s| !s.is_empty()) {
        return Err(EngineError::InvalidConfig(
            "config declares sweep axes; use the sweep operation".into(),
        ));
    }
    let seeds = config.seeds.expand()?;
    let model = Model::build(config.model.clone())?;
    config.decode.validate(model.vocab_size())?;
    let cell = run_cell(&model, &config.decode, &seeds, CellParams::default(), 0)?;
    let cells = vec![cell];
    let argmin = argmin_nfe(&cells);
    Ok(BenchReport { config: config.clone(), cells, argmin_nfe_cell: argmin })
}

/// Execute the Cartesian product of the configured sweep axes.
pub fn sweep(config: &BenchConfig) -> Result<BenchReport> {
    let axes = match &config.sweep {
        Some(a) if !a.is_empty() => a.clone(),
        _ => {
            return Err(EngineError::InvalidConfig(
                "sweep requires at least one non-empty axis".into(),
            ))
        }
    };
    axes.validate()?;
    let cells_total = axes.cell_count();
    if cells_total > SWEEP_CELL_LIMIT {
        return Err(EngineError::SweepGuard { cells: cells_total, limit: SWEEP_CELL_LIMIT });
    }
    if axes.sharpness.is_some() && !matches!(config.model, ModelSpec::HashLogit { .. }) {
        return Err(EngineError::InvalidConfig(
            "sharpness axis applies to hash-logit models only".into(),
        ));
    }

    let seeds = config.seeds.expand()?;
    let base_model = Model::build(config.model.clone())?;
    config.decode.validate(base_model.vocab_size())?;

    fn axis<T: Copy>(v: &Option<Vec<T>>) -> Vec<Option<T>> {
        match v {
            Some(list) => list.iter().copied().map(Some).collect(),
            None => vec![None],
        }
    }

    let mut cells = Vec::with_capacity(cells_total);
    let mut run_id = 0usize;
    for &window in &axis(&axes.window) {
        for &tau in &axis(&axes.tau) {
            for &top_k in &axis(&axes.top_k) {
                for &sharpness in &axis(&axes.sharpness) {
                    for &init in &axis(&axes.init) {
                        let params = CellParams { window, tau, top_k, sharpness, init };
                        let mut decode_cfg = config.decode.clone();
                        if let Some(w) = window {
                            decode_cfg.window = w;
                        }
                        if let Some(t) = tau {
                            decode_cfg.reuse_threshold = t;
                        }
                        if let Some(k) = top_k {
                            decode_cfg.top_k = k;
                        }
                        if let Some(i) = init {
                            decode_cfg.init = i;
                        }
                        let cell = match sharpness {
                            Some(beta) => {
                                let mut spec = config.model.clone();
                                let ModelSpec::HashLogit { sharpness: s, .. } = &mut spec else {
                                    unreachable!("checked above");
                                };
                                *s = beta;
                                let model = Model::build(spec)?;
                                decode_cfg.validate(model.vocab_size())?;
                                run_cell(&model, &decode_cfg, &seeds, params, run_id)?
                            }
                            None => {
                                decode_cfg.validate(base_model.vocab_size())?;
                                run_cell(&base_model, &decode_cfg, &seeds, params, run_id)?
                            }
                        };
                        run_id += cell.runs.len();
                        cells.push(cell);
                    }
                }
            }
        }
    }

    let argmin = argmin_nfe(&cells);
    Ok(BenchReport { config: config.clone(), cells, argmin_nfe_cell: argmin })
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// Paths written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmittedPaths {
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Serialize the report to `report.json` and the per-iteration trace rows
/// to `trace.csv` under `out_dir`.
pub fn emit_report(report: &BenchReport, out_dir: &Path) -> Result<EmittedPaths> {
    fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join("report.json");
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    fs::write(&json_path, json)?;

    let csv_path = out_dir.join("trace.csv");
    let mut csv = String::new();
    csv.push_str(
        "run_id,iter,accepted_count,committed_by_resample,reused_count,resampled_count,fresh_count,nfe_so_far,n_so_far\n",
    );
    for cell in &report.cells {
        for run in &cell.runs {
            let mut n_so_far = 0usize;
            for rec in &run.trace {
                n_so_far += rec.accepted_count + rec.committed_by_resample;
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    run.run_id,
                    rec.j,
                    rec.accepted_count,
                    rec.committed_by_resample,
                    rec.reused_count,
                    rec.resampled_count,
                    rec.fresh_count,
                    rec.j + 1,
                    n_so_far,
                ));
            }
        }
    }
    fs::write(&csv_path, csv)?;
    Ok(EmittedPaths { json: json_path, csv: csv_path })
}

/// Dump a token grid as a binary PGM image, mapping token `t` to gray
/// `floor(t * 255 / (V - 1))`.
pub fn write_pgm(tokens: &[TokenId], geom: GridGeom, vocab: u32, path: &Path) -> Result<()> {
    if tokens.len() != geom.len() {
        return Err(EngineError::InvalidConfig(format!(
            "token count {} does not match grid {}x{}",
            tokens.len(),
            geom.height,
            geom.width
        )));
    }
    let mut file = fs::File::create(path)?;
    write!(file, "P5\n{} {}\n255\n", geom.width, geom.height)?;
    let bytes: Vec<u8> = tokens
        .iter()
        .map(|&t| ((u64::from(t) * 255) / u64::from(vocab - 1)) as u8)
        .collect();
    file.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::DecodeMode;

    fn base_config(mode: DecodeMode) -> BenchConfig {
        BenchConfig::new(
            ModelSpec::hash_logit(16, 2, 3.0, 5),
            DecodeConfig {
                mode,
                window: 4,
                top_k: 8,
                grid: GridGeom::new(4, 4),
                ..DecodeConfig::default()
            },
        )
    }

    #[test]
    fn ar_bench_reports_unit_compression() {
        let config = base_config(DecodeMode::Ar);
        let report = run_bench(&config).unwrap();
        let agg = &report.cells[0].aggregates;
        assert_eq!(agg.runs, 1);
        assert_eq!(agg.mean_step_compression, 1.0);
        assert_eq!(agg.std_step_compression, 0.0);
        assert_eq!(agg.mean_nfe, 16.0);
    }

    #[test]
    fn histogram_counts_every_iteration() {
        let config = base_config(DecodeMode::Sjd);
        let report = run_bench(&config).unwrap();
        let cell = &report.cells[0];
        let total_iterations: u64 = cell.aggregates.accept_hist.values().sum();
        let steps: usize = cell.runs.iter().map(|r| r.steps).sum();
        assert_eq!(total_iterations, steps as u64);
        // Commits conserve the budget.
        let committed: usize = cell.runs[0]
            .trace
            .iter()
            .map(|r| r.accepted_count + r.committed_by_resample)
            .sum();
        assert_eq!(committed, 16);
    }

    #[test]
    fn bench_rejects_sweep_axes() {
        let mut config = base_config(DecodeMode::Sjd);
        config.sweep = Some(SweepAxes { window: Some(vec![1, 2]), ..Default::default() });
        assert!(run_bench(&config).is_err());
    }

    #[test]
    fn sweep_single_window_axis_has_one_row_per_cell() {
        let mut config = base_config(DecodeMode::Sjd);
        config.sweep = Some(SweepAxes { window: Some(vec![1]), ..Default::default() });
        let report = sweep(&config).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.cells[0].params.window, Some(1));
        // W = 1 commits exactly one token per step.
        assert_eq!(report.cells[0].aggregates.mean_step_compression, 1.0);
        assert_eq!(report.argmin_nfe_cell, Some(0));
    }

    #[test]
    fn sweep_requires_an_axis() {
        let config = base_config(DecodeMode::Sjd);
        assert!(sweep(&config).is_err());
    }

    #[test]
    fn sweep_guard_rejects_oversized_products() {
        let mut config = base_config(DecodeMode::Sjd);
        config.sweep = Some(SweepAxes {
            window: Some((1..=30).collect()),
            top_k: Some((1..=16).collect()),
            tau: Some(vec![0.0; 30]),
            ..Default::default()
        });
        assert!(matches!(sweep(&config), Err(EngineError::SweepGuard { .. })));
    }

    #[test]
    fn sharpness_axis_requires_hash_model() {
        let mut config = base_config(DecodeMode::Sjd);
        config.model = ModelSpec::preset("ngram").unwrap();
        config.decode.top_k = 8;
        config.sweep = Some(SweepAxes { sharpness: Some(vec![1.0, 2.0]), ..Default::default() });
        assert!(sweep(&config).is_err());
    }

    #[test]
    fn tau_sweep_reuse_rate_shrinks_as_threshold_grows() {
        // Reuse keeps a surviving token when its confidence exceeds tau, so
        // raising tau can only reduce the fraction of survivor decisions
        // that keep. Absolute totals are confounded by run length (low tau
        // finishes in fewer iterations and so sees fewer survivors), hence
        // the rate is the monotone quantity.
        let mut config = base_config(DecodeMode::Sjdpp);
        config.seeds = SeedSpec::Base { base: 3, count: 8 };
        config.sweep =
            Some(SweepAxes { tau: Some(vec![0.0, 0.5, 1e9]), ..Default::default() });
        let report = sweep(&config).unwrap();
        let rates: Vec<f64> = report
            .cells
            .iter()
            .map(|c| {
                let a = &c.aggregates;
                a.total_reused as f64 / (a.total_reused + a.total_resampled).max(1) as f64
            })
            .collect();
        assert!(rates[0] >= rates[1] && rates[1] >= rates[2], "{rates:?}");
        assert!(report.cells[0].aggregates.total_reused > 0);
        assert_eq!(report.cells[2].aggregates.total_reused, 0);
    }

    #[test]
    fn window_sweep_nfe_drops_to_a_noisy_plateau() {
        // Widening the window cuts NFE steeply at first and then flattens
        // into a plateau where neighboring cells trade places; window size
        // itself is costless in step accounting.
        let mut config = BenchConfig::new(
            ModelSpec::hash_logit(8, 2, 8.0, 3),
            DecodeConfig {
                mode: DecodeMode::Sjd,
                top_k: 8,
                grid: GridGeom::new(16, 16),
                ..DecodeConfig::default()
            },
        );
        config.seeds = SeedSpec::Base { base: 42, count: 50 };
        config.sweep = Some(SweepAxes {
            window: Some(vec![1, 2, 4, 8, 16, 32, 64]),
            ..Default::default()
        });
        let report = sweep(&config).unwrap();
        let nfe: Vec<f64> = report.cells.iter().map(|c| c.aggregates.mean_nfe).collect();
        assert_eq!(nfe[0], 256.0); // W = 1 is plain one-token-per-step
        let argmin = report.argmin_nfe_cell.unwrap();
        assert!(report.cells[argmin].params.window.unwrap() > 1);
        assert!(nfe[argmin] < 0.8 * nfe[0], "windowing should cut NFE hard: {nfe:?}");
        let non_monotone = nfe.windows(2).any(|w| w[1] > w[0]);
        assert!(non_monotone, "expected a bump somewhere on the plateau: {nfe:?}");
    }

    #[test]
    fn init_axis_sweeps_all_strategies() {
        let mut config = base_config(DecodeMode::Sjd);
        config.model = ModelSpec::preset("ngram").unwrap();
        config.decode.top_k = 8;
        config.seeds = SeedSpec::Base { base: 11, count: 4 };
        config.sweep = Some(SweepAxes {
            init: Some(InitStrategy::ALL.to_vec()),
            ..Default::default()
        });
        let report = sweep(&config).unwrap();
        assert_eq!(report.cells.len(), 5);
        for (cell, strategy) in report.cells.iter().zip(InitStrategy::ALL) {
            assert_eq!(cell.params.init, Some(strategy));
            assert!(cell.aggregates.mean_step_compression >= 1.0);
        }
        // run_ids stay globally unique across cells.
        let ids: Vec<usize> =
            report.cells.iter().flat_map(|c| c.runs.iter().map(|r| r.run_id)).collect();
        assert_eq!(ids, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn compute_stats_rejects_empty_input() {
        assert!(compute_stats(&[]).is_err());
    }

    #[test]
    fn compute_stats_single_run_has_zero_spread() {
        let config = base_config(DecodeMode::Sjd);
        let report = run_bench(&config).unwrap();
        assert_eq!(report.cells[0].aggregates.std_step_compression, 0.0);
    }

    #[test]
    fn seed_specs_expand() {
        assert_eq!(SeedSpec::List(vec![5, 6]).expand().unwrap(), vec![5, 6]);
        let derived = SeedSpec::Base { base: 9, count: 3 }.expand().unwrap();
        assert_eq!(derived.len(), 3);
        assert_eq!(derived[0], derive_seed(9, 0));
        assert!(SeedSpec::List(vec![]).expand().is_err());
        assert!(SeedSpec::Base { base: 0, count: 0 }.expand().is_err());
    }

    #[test]
    fn bench_config_json_round_trip() {
        let mut config = base_config(DecodeMode::Sjdpp);
        config.seeds = SeedSpec::List(vec![1, 2, 3]);
        config.sweep = Some(SweepAxes { window: Some(vec![2, 4]), ..Default::default() });
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: BenchConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn report_emission_is_deterministic() {
        let mut config = base_config(DecodeMode::Sjdpp);
        config.seeds = SeedSpec::Base { base: 1, count: 4 };
        let report_a = run_bench(&config).unwrap();
        let report_b = run_bench(&config).unwrap();

        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let paths_a = emit_report(&report_a, dir_a.path()).unwrap();
        let paths_b = emit_report(&report_b, dir_b.path()).unwrap();
        assert_eq!(fs::read(&paths_a.json).unwrap(), fs::read(&paths_b.json).unwrap());
        assert_eq!(fs::read(&paths_a.csv).unwrap(), fs::read(&paths_b.csv).unwrap());
    }

    #[test]
    fn ar_trace_csv_has_one_row_per_token() {
        let config = base_config(DecodeMode::Ar);
        let report = run_bench(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report, dir.path()).unwrap();
        let csv = fs::read_to_string(&paths.csv).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 1 + 16);
        assert!(rows[1].starts_with("0,0,1,0,"));
        let last = rows.last().unwrap();
        assert!(last.ends_with(",16,16"), "{last}");
    }

    #[test]
    fn pgm_of_constant_grid_is_constant_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        let tokens = vec![3u32; 6];
        write_pgm(&tokens, GridGeom::new(2, 3), 8, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let gray = (3u64 * 255 / 7) as u8;
        assert!(bytes[header.len()..].iter().all(|&b| b == gray));
    }

    #[test]
    fn pgm_rejects_mismatched_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pgm");
        assert!(write_pgm(&[1, 2, 3], GridGeom::new(2, 2), 8, &path).is_err());
    }
}
