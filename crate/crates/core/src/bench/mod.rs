//! Batch experiments on Edwards-Anderson lattices.
//!
//! Instance `k` of size `dims` is `gen_ea_slab(dims, seed + k, boundary)`;
//! every method runs on it with run seed `seed + k`. Exact minima come from
//! exhaustive search when the instance is small enough.

mod record;
mod report;
mod spec;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

pub use record::{relative_error, BenchRecord, RecordKey};
pub use report::{
    emit_report, fmt_f64, parse_records, parse_summary, parse_timings, provenance_line,
    render_plot, render_records, render_scaling, render_summary, render_timing_summary,
    render_timings, scaling_fits, summarize_timings, TimingRow, TimingSummaryRow, PLOT_COLUMNS,
    RECORD_COLUMNS, SCALING_COLUMNS, SUMMARY_COLUMNS, TIMING_COLUMNS, TIMING_SUMMARY_COLUMNS,
};
pub use spec::{
    sha256_hex, Dims, ExperimentSpec, Method, MAX_SPEC_INSTANCES, MAX_SPEC_ITERATIONS,
    MAX_SPEC_SPINS,
};
pub use stats::{
    fit_scaling, percentile, summarize, BatchSummary, GroupKey, ScalingFit, SummaryRow,
    BOOTSTRAP_RESAMPLES,
};

use crate::anneal;
use crate::error::{Error, Result};
use crate::oracle::{brute_force_min, MAX_EXACT_SPINS};
use crate::qubo::{gen_ea_slab, QuboInstance};
use crate::sa::simulated_annealing;

/// Seed of the bootstrap in the scaling fits written by [`run_experiment`].
pub const FIT_SEED: u64 = 0;

fn instance_id(dims: Dims, seed: u64) -> String {
    format!("{dims}-{seed}")
}

/// Runs one method on one instance.
pub fn run_method(
    spec: &ExperimentSpec,
    inst: &QuboInstance,
    method: Method,
    iterations: usize,
    seed: u64,
) -> Result<(f64, f64, f64, f64)> {
    let start = Instant::now();
    let (energy, loop_seconds, per_iter) = match method {
        Method::Sa => {
            let cfg = spec.sa_config(iterations, seed);
            let t = Instant::now();
            let sol = simulated_annealing(inst, &cfg)?;
            let loop_s = t.elapsed().as_secs_f64();
            (sol.energy, loop_s, loop_s / iterations as f64)
        }
        Method::Gcs | Method::Product => {
            let res = anneal::solve(inst, &spec.anneal_config(method, iterations, seed))?;
            let loop_s: f64 = res.step_seconds.iter().sum();
            // the first step is a warmup
            let timed = &res.step_seconds[1.min(res.step_seconds.len() - 1)..];
            let per = timed.iter().sum::<f64>() / timed.len() as f64;
            (res.solution.energy, loop_s, per)
        }
    };
    let total = start.elapsed().as_secs_f64();
    Ok((
        energy,
        (total - loop_seconds).max(0.0),
        loop_seconds,
        per_iter,
    ))
}

struct Job {
    dims: Dims,
    seed: u64,
    todo: Vec<(Method, usize)>,
}

fn plan(spec: &ExperimentSpec, done: &BTreeSet<RecordKey>) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &dims in &spec.sizes {
        for k in 0..spec.instances as u64 {
            let seed = spec.seed.wrapping_add(k);
            let id = instance_id(dims, seed);
            let todo: Vec<_> = spec
                .methods
                .iter()
                .flat_map(|&m| spec.iterations.iter().map(move |&it| (m, it)))
                .filter(|&(m, it)| !done.contains(&(id.clone(), m, it)))
                .collect();
            if !todo.is_empty() {
                jobs.push(Job { dims, seed, todo });
            }
        }
    }
    jobs
}

fn run_job(spec: &ExperimentSpec, job: &Job) -> Result<Vec<BenchRecord>> {
    let inst = gen_ea_slab(job.dims.0, job.seed, spec.boundary)?;
    let e0 = if spec.exact && inst.n() <= MAX_EXACT_SPINS {
        Some(brute_force_min(&inst)?.0)
    } else {
        None
    };
    let id = instance_id(job.dims, job.seed);
    let mut out = Vec::with_capacity(job.todo.len());
    for &(method, iterations) in &job.todo {
        let (energy, setup, loop_s, per) = run_method(spec, &inst, method, iterations, job.seed)?;
        if let Some(e0) = e0 {
            if energy < e0 {
                return Err(Error::Numeric(format!(
                    "{method} on {id} reported {energy} below the exact minimum {e0}"
                )));
            }
        }
        out.push(BenchRecord {
            instance: id.clone(),
            n: inst.n(),
            instance_seed: job.seed,
            method,
            iterations,
            run_seed: job.seed,
            config_digest: spec.method_digest(method),
            energy,
            e0,
            epsilon: e0.and_then(|e0| relative_error(energy, e0)),
            setup_seconds: Some(setup),
            loop_seconds: Some(loop_s),
            per_iteration_seconds: Some(per),
        });
    }
    log::info!("finished {id} ({} runs)", out.len());
    Ok(out)
}

fn sort_records(records: &mut [BenchRecord]) {
    records.sort_by(|a, b| a.order().cmp(&b.order()));
}

/// Runs every (instance, method, iterations) combination in memory.
/// Instances are processed in parallel; the result is sorted.
pub fn run_batch(spec: &ExperimentSpec) -> Result<Vec<BenchRecord>> {
    spec.validate()?;
    let jobs = plan(spec, &BTreeSet::new());
    let mut records: Vec<BenchRecord> = jobs
        .par_iter()
        .map(|j| run_job(spec, j))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    sort_records(&mut records);
    Ok(records)
}

/// Files produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<BenchRecord>,
    /// Runs performed by this call (0 when everything was already present).
    pub computed: usize,
    pub summary: BatchSummary,
    pub timing_summary: Vec<TimingSummaryRow>,
    pub fits: Vec<(Method, usize, ScalingFit)>,
    pub files: Vec<PathBuf>,
}

fn read_existing(dir: &Path, digest: &str) -> Result<(Vec<BenchRecord>, Vec<TimingRow>)> {
    let rec_path = dir.join("records.csv");
    if !rec_path.exists() {
        return Ok((Vec::new(), Vec::new()));
    }
    let (found, records) = parse_records(&std::fs::read_to_string(&rec_path)?)?;
    if found.as_deref() != Some(digest) {
        return Err(Error::Validation(format!(
            "{} belongs to a different experiment (digest {}); use a fresh output directory",
            rec_path.display(),
            found.unwrap_or_else(|| "missing".into())
        )));
    }
    let tim_path = dir.join("timings.csv");
    let timings = if tim_path.exists() {
        parse_timings(&std::fs::read_to_string(&tim_path)?)?.1
    } else {
        Vec::new()
    };
    Ok((records, timings))
}

/// Runs a batch into `dir`, resuming from any records already there.
///
/// New records are appended as instances finish, so an interrupted run
/// loses at most the instances in flight. On completion every table is
/// rewritten in canonical order.
pub fn run_experiment(spec: &ExperimentSpec, dir: impl AsRef<Path>) -> Result<ExperimentOutput> {
    spec.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let digest = spec.digest();
    let (mut records, mut timings) = read_existing(dir, &digest)?;
    let done: BTreeSet<RecordKey> = records.iter().map(BenchRecord::key).collect();
    let jobs = plan(spec, &done);
    if !jobs.is_empty() && records.is_empty() {
        std::fs::write(dir.join("records.csv"), render_records(&[], &digest))?;
        std::fs::write(dir.join("timings.csv"), render_timings(&[], &digest))?;
    }

    let appender = Mutex::new(());
    let fresh: Vec<BenchRecord> = jobs
        .par_iter()
        .map(|job| {
            let recs = run_job(spec, job)?;
            let rows: Vec<TimingRow> = recs.iter().filter_map(TimingRow::from_record).collect();
            let _guard = appender.lock().expect("appender lock");
            for (name, text) in [
                ("records.csv", report::render_record_rows(&recs)),
                ("timings.csv", report::render_timing_rows(&rows)),
            ] {
                OpenOptions::new()
                    .append(true)
                    .open(dir.join(name))?
                    .write_all(text.as_bytes())?;
            }
            Ok(recs)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let computed = fresh.len();
    timings.extend(fresh.iter().filter_map(TimingRow::from_record));
    records.extend(fresh);

    // keep only what the spec asks for, in canonical order
    let wanted: BTreeSet<RecordKey> = plan(spec, &BTreeSet::new())
        .iter()
        .flat_map(|j| {
            let id = instance_id(j.dims, j.seed);
            j.todo
                .iter()
                .map(move |&(m, it)| (id.clone(), m, it))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut by_key: BTreeMap<RecordKey, BenchRecord> = BTreeMap::new();
    for r in records {
        if wanted.contains(&r.key()) {
            by_key.insert(r.key(), r);
        }
    }
    let mut records: Vec<BenchRecord> = by_key.into_values().collect();
    sort_records(&mut records);
    let mut timing_by_key: BTreeMap<RecordKey, TimingRow> = BTreeMap::new();
    for t in timings {
        let key = (t.instance.clone(), t.method, t.iterations);
        if wanted.contains(&key) {
            timing_by_key.insert(key, t);
        }
    }
    let mut timings: Vec<TimingRow> = timing_by_key.into_values().collect();
    timings.sort_by(|a, b| {
        (a.n, &a.instance, a.method, a.iterations).cmp(&(b.n, &b.instance, b.method, b.iterations))
    });

    let summary = summarize(&records);
    let timing_summary = summarize_timings(&timings);
    let fits = scaling_fits(&timing_summary, FIT_SEED);

    std::fs::write(dir.join("records.csv"), render_records(&records, &digest))?;
    std::fs::write(dir.join("timings.csv"), render_timings(&timings, &digest))?;
    emit_report(&summary, dir, &digest)?;
    std::fs::write(
        dir.join("timing_summary.csv"),
        render_timing_summary(&timing_summary, &digest),
    )?;
    std::fs::write(dir.join("scaling.csv"), render_scaling(&fits, &digest))?;
    let files = [
        "records.csv",
        "timings.csv",
        "summary.csv",
        "plot.csv",
        "timing_summary.csv",
        "scaling.csv",
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect();
    Ok(ExperimentOutput {
        records,
        computed,
        summary,
        timing_summary,
        fits,
        files,
    })
}
