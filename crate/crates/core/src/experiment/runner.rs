use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::plan::ExperimentPlan;
use crate::baselines::{run_scheme, SchemeSpec};
use crate::channel::draw_realization;
use crate::error::{Error, Result};
use crate::optimizers::ConvergenceTrace;
use crate::sim::{build_stack, Direction};

pub const RESULT_HEADER: [&str; 12] = [
    "sweep_axis",
    "sweep_value",
    "scheme",
    "direction",
    "trial",
    "seed",
    "sum_rate_bpshz",
    "runtime_ms",
    "outer_iters",
    "min_fronthaul_slack",
    "min_power_slack",
    "scenario_hash",
];

pub const ERROR_HEADER: [&str; 7] = [
    "sweep_axis",
    "sweep_value",
    "scheme",
    "direction",
    "trial",
    "seed",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub scheme: String,
    pub direction: Direction,
    pub trial: usize,
    pub seed: u64,
    pub sum_rate: f64,
    pub runtime_ms: f64,
    pub outer_iters: usize,
    pub min_fronthaul_slack: f64,
    pub min_power_slack: f64,
    pub scenario_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub scheme: String,
    pub direction: Direction,
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub direction: Direction,
    pub sweep_value: f64,
    pub scheme: String,
    pub trial: usize,
    pub trace: ConvergenceTrace,
}

impl TraceRecord {
    /// `traces/<direction>/<axis>=<value>/trace_<scheme>_<trial>.csv`
    pub fn relative_path(&self, axis: &str) -> PathBuf {
        PathBuf::from("traces")
            .join(self.direction.as_str())
            .join(format!("{axis}={}", self.sweep_value))
            .join(format!("trace_{}_{}.csv", self.scheme, self.trial))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub errors: Vec<ErrorRow>,
    pub traces: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Stream files into this directory as tasks complete.
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub trace: bool,
    pub timing: bool,
}

impl RunOptions {
    pub fn from_plan(plan: &ExperimentPlan) -> Self {
        RunOptions {
            out: Some(plan.output.dir.clone()),
            workers: 1,
            trace: plan.output.trace,
            timing: plan.output.timing,
        }
    }
}

/// Seed of trial `trial`, shared by every scheme and sweep value.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    let mut z = base.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_task(
    plan: &ExperimentPlan,
    specs: &[SchemeSpec],
    value_idx: usize,
    trial: usize,
    opts: &RunOptions,
) -> ResultTable {
    let axis = plan.sweep.axis.as_str().to_string();
    let value = plan.sweep.values[value_idx];
    let seed = trial_seed(plan.seed, trial);
    let settings = plan.ao_settings();
    let mut out = ResultTable::default();
    let prepared = (|| -> Result<_> {
        let config = plan.config_at(value_idx)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (_, channels) = draw_realization(&config, &mut rng)?;
        let stack = build_stack(&config.geometry()?, config.num_aps, seed)?;
        Ok((config, channels, stack))
    })();
    for spec in specs {
        for &direction in plan.direction.directions() {
            let scheme = spec.to_string();
            let fail = |message: String| ErrorRow {
                sweep_axis: axis.clone(),
                sweep_value: value,
                scheme: scheme.clone(),
                direction,
                trial,
                seed,
                message,
            };
            let (config, channels, stack) = match &prepared {
                Ok(p) => p,
                Err(e) => {
                    out.errors.push(fail(e.to_string()));
                    continue;
                }
            };
            let start = Instant::now();
            match run_scheme(*spec, config, channels, stack, &settings, direction) {
                Ok(r) => {
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    out.rows.push(ResultRow {
                        sweep_axis: axis.clone(),
                        sweep_value: value,
                        scheme: scheme.clone(),
                        direction,
                        trial,
                        seed,
                        sum_rate: r.sum_rate,
                        runtime_ms: if opts.timing { ms } else { 0.0 },
                        outer_iters: r.outer_iters,
                        min_fronthaul_slack: r.slacks.fronthaul,
                        min_power_slack: r.slacks.power,
                        scenario_hash: channels.digest(),
                    });
                    if opts.trace {
                        out.traces.push(TraceRecord {
                            direction,
                            sweep_value: value,
                            scheme: scheme.clone(),
                            trial,
                            trace: r.trace,
                        });
                    }
                }
                Err(e) => out.errors.push(fail(e.to_string())),
            }
        }
    }
    out
}

struct Sink {
    dir: PathBuf,
    axis: String,
    timing: bool,
    results: csv::Writer<File>,
    errors: csv::Writer<File>,
}

impl Sink {
    fn create(dir: &Path, axis: &str, timing: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut results = csv::Writer::from_path(dir.join("results.csv"))?;
        results.write_record(RESULT_HEADER)?;
        let mut errors = csv::Writer::from_path(dir.join("errors.csv"))?;
        errors.write_record(ERROR_HEADER)?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            axis: axis.to_string(),
            timing,
            results,
            errors,
        })
    }

    fn append(&mut self, t: &ResultTable) -> Result<()> {
        for r in &t.rows {
            self.results.write_record([
                r.sweep_axis.clone(),
                r.sweep_value.to_string(),
                r.scheme.clone(),
                r.direction.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                r.sum_rate.to_string(),
                r.runtime_ms.to_string(),
                r.outer_iters.to_string(),
                r.min_fronthaul_slack.to_string(),
                r.min_power_slack.to_string(),
                r.scenario_hash.clone(),
            ])?;
        }
        for e in &t.errors {
            self.errors.write_record([
                e.sweep_axis.clone(),
                e.sweep_value.to_string(),
                e.scheme.clone(),
                e.direction.to_string(),
                e.trial.to_string(),
                e.seed.to_string(),
                e.message.clone(),
            ])?;
        }
        for tr in &t.traces {
            let path = self.dir.join(tr.relative_path(&self.axis));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            tr.trace.write_csv(&path, self.timing)?;
        }
        self.results.flush()?;
        self.errors.flush()?;
        Ok(())
    }
}

/// Runs every (sweep value, trial) task, with all schemes and directions of
/// a task sharing one channel realization. Rows come out in plan order
/// whatever the worker count.
pub fn run_plan(plan: &ExperimentPlan, opts: &RunOptions) -> Result<ResultTable> {
    plan.validate()?;
    if opts.workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let specs = plan.scheme_specs()?;
    let tasks: Vec<(usize, usize)> = (0..plan.sweep.values.len())
        .flat_map(|v| (0..plan.trials).map(move |t| (v, t)))
        .collect();
    let mut sink = match &opts.out {
        Some(dir) => Some(Sink::create(dir, plan.sweep.axis.as_str(), opts.timing)?),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start workers: {e}")))?;
    let (tx, rx) = mpsc::channel::<(usize, ResultTable)>();
    let mut table = ResultTable::default();
    std::thread::scope(|scope| -> Result<()> {
        let specs = &specs;
        let tasks = &tasks;
        scope.spawn(move || {
            pool.install(|| {
                tasks
                    .par_iter()
                    .enumerate()
                    .for_each_with(tx, |tx, (idx, &(v, t))| {
                        let _ = tx.send((idx, run_task(plan, specs, v, t, opts)));
                    });
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (idx, part) in rx {
            pending.insert(idx, part);
            while let Some(part) = pending.remove(&next) {
                if let Some(s) = sink.as_mut() {
                    s.append(&part)?;
                }
                table.rows.extend(part.rows);
                table.errors.extend(part.errors);
                table.traces.extend(part.traces);
                next += 1;
            }
        }
        if next != tasks.len() {
            return Err(Error::Plan(
                "a worker stopped before finishing its tasks".into(),
            ));
        }
        Ok(())
    })?;
    Ok(table)
}

/// Writes `results.csv`, `errors.csv` and any traces of `table` into `dir`.
pub fn emit_results(
    table: &ResultTable,
    plan: &ExperimentPlan,
    dir: &Path,
    timing: bool,
) -> Result<()> {
    let mut sink = Sink::create(dir, plan.sweep.axis.as_str(), timing)?;
    sink.append(table)
}

/// Mean sum-rate per (sweep value, scheme, direction) in first-seen order.
pub fn summarize(table: &ResultTable) -> Vec<(f64, String, Direction, f64, usize)> {
    let mut out: Vec<(f64, String, Direction, f64, usize)> = Vec::new();
    for r in &table.rows {
        match out
            .iter_mut()
            .find(|e| e.0 == r.sweep_value && e.1 == r.scheme && e.2 == r.direction)
        {
            Some(e) => {
                e.3 += r.sum_rate;
                e.4 += 1;
            }
            None => out.push((r.sweep_value, r.scheme.clone(), r.direction, r.sum_rate, 1)),
        }
    }
    for e in &mut out {
        e.3 /= e.4 as f64;
    }
    out
}

/// Writes a human-readable summary line per group.
pub fn write_summary(table: &ResultTable, axis: &str, w: &mut impl Write) -> Result<()> {
    for (v, scheme, dir, mean, n) in summarize(table) {
        writeln!(
            w,
            "{axis}={v:<8} {:<8} {scheme:<26} mean sum-rate {mean:.4} bps/Hz over {n} trials",
            dir.as_str()
        )?;
    }
    Ok(())
}
