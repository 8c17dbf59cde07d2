use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::aggregate;
use super::config::{context_steps, ExperimentConfig, Sweep, MAX_FAILURE_FRACTION};
use super::records::{read_records, write_records, EnergyRecord, RecordKey, SliceDiagnostics, TrialRecord, TrialStatus};
use crate::backend::{generate_slice, rollout, Generator, ProbeReport, SliceOutput, TrialContext};
use crate::codec::{context_prompt, quantize, reconstruct};
use crate::error::{Error, Result};
use crate::grid_ic::{build_grids, sample_random_ic, IcParams, IcSeed, InitialCondition, SpatialGrid, TimeGrid};
use crate::metrics::{energy_deviation, ic_energy, mean_entropy, write_metrics_csv, IC_QUADRATURE_INTERVALS};
use crate::solvers::{reference_solution, CacheKey, SolutionCache, SolutionField, Stepper};

/// One schedulable piece of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unit {
    pub axis_value: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub trial: usize,
    pub generation: usize,
}

impl Unit {
    fn key(&self) -> RecordKey {
        (self.axis_value, self.trial, self.generation)
    }
}

/// All units of a configuration in key order.
pub fn units(cfg: &ExperimentConfig) -> Vec<Unit> {
    let mut out = Vec::new();
    for (n_x, n_t) in cfg.sweep.grids() {
        let axis_value = match cfg.sweep {
            Sweep::Output { .. } => n_x,
            _ => n_t,
        };
        for trial in 0..cfg.trials {
            for generation in 0..cfg.sweep.generations() {
                out.push(Unit {
                    axis_value,
                    n_x,
                    n_t,
                    trial,
                    generation,
                });
            }
        }
    }
    out.sort_by_key(Unit::key);
    out
}

/// Executes units against a backend. Trial-level failures become failed
/// records; backend failures abort.
pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    backend: Arc<dyn Generator>,
    prompts_dir: Option<PathBuf>,
    cache: Option<SolutionCache>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, backend: Arc<dyn Generator>) -> Self {
        Self {
            cfg,
            backend,
            prompts_dir: None,
            cache: None,
        }
    }

    /// Dump prompts to `dir` and cache reference solutions under `cache`.
    pub fn with_outputs(mut self, prompts_dir: PathBuf, cache: Option<SolutionCache>) -> Self {
        self.prompts_dir = Some(prompts_dir);
        self.cache = cache;
        self
    }

    pub fn initial_condition(&self, trial: usize) -> Result<InitialCondition> {
        let (low, high) = self.cfg.ic_bounds();
        let params = IcParams::new(self.cfg.domain.half_width, self.cfg.ic_knots(), low, high);
        sample_random_ic(IcSeed::trial(self.cfg.seed, trial), params, self.cfg.pde.boundary)
    }

    /// Refined reference on the given grids, cached when a cache is set.
    pub fn reference(&self, ic: &InitialCondition, spatial: &SpatialGrid, time: &TimeGrid) -> Result<SolutionField> {
        let pde = &self.cfg.pde;
        let (rx, rt) = self.cfg.reference.resolve(pde, spatial, time)?;
        let fingerprint = ic.fingerprint();
        let key = CacheKey {
            pde,
            scheme: pde.reference_scheme(),
            ic_fingerprint: &fingerprint,
            spatial,
            time,
            refine: (rx, rt),
        };
        if let Some(cache) = &self.cache {
            if let Some(f) = cache.load(&key)? {
                return Ok(f);
            }
        }
        let field = reference_solution(pde, ic, spatial, time, rx, rt)?;
        if let Some(cache) = &self.cache {
            cache.store(&key, &field)?;
        }
        Ok(field)
    }

    pub fn run_unit(&self, unit: Unit) -> Result<TrialRecord> {
        let started = Instant::now();
        let cfg = self.cfg;
        let pde = cfg.pde;
        let ic = self.initial_condition(unit.trial)?;
        let (spatial, time) = build_grids(cfg.domain.half_width, unit.n_x, cfg.domain.t_final, unit.n_t)?;
        let rollout_sweep = matches!(cfg.sweep, Sweep::MultiStep { .. } | Sweep::Energy { .. });
        let n_context = if rollout_sweep { context_steps(unit.n_t) } else { unit.n_t };
        let targets: Vec<usize> = (n_context..=unit.n_t).collect();

        let mut record = TrialRecord {
            experiment: cfg.sweep.name().into(),
            axis_value: unit.axis_value,
            trial: unit.trial,
            generation: unit.generation,
            n_x: unit.n_x,
            n_t: unit.n_t,
            context_steps: n_context,
            target_levels: targets.clone(),
            seed: IcSeed::trial(cfg.seed, unit.trial),
            ic: ic.record().clone(),
            ic_fingerprint: ic.fingerprint(),
            range: crate::codec::QuantRange::new(0.0, 0.0)?,
            dx: spatial.dx(),
            dt: time.dt(),
            status: TrialStatus::Ok,
            predicted: Vec::new(),
            predicted_codes: Vec::new(),
            reference: Vec::new(),
            reference_exact: Vec::new(),
            baselines: BTreeMap::new(),
            baseline_failures: BTreeMap::new(),
            entropy: Vec::new(),
            distributions: Vec::new(),
            diagnostics: Vec::new(),
            energy: None,
            prompt_file: None,
            wall_clock_ms: 0,
        };

        let field = match self.reference(&ic, &spatial, &time) {
            Ok(f) => f,
            Err(e) => {
                record.status = TrialStatus::Failed {
                    reason: format!("reference solve: {e}"),
                };
                return Ok(record);
            }
        };
        let q = quantize(field.values())?;
        let recon = reconstruct(&q);
        record.range = q.range();
        record.reference = targets.iter().map(|&j| recon.column(j).to_vec()).collect();
        record.reference_exact = targets.iter().map(|&j| field.column(j)).collect();

        let prompt = context_prompt(&q, n_context, cfg.codec.trailing_semicolon)?;
        if let Some(dir) = &self.prompts_dir {
            let name = format!("{}_{}_m{:04}.txt", cfg.sweep.name(), unit.axis_value, unit.trial);
            let path = dir.join(&name);
            if !path.exists() {
                fs::write(&path, prompt.as_str())?;
            }
            record.prompt_file = Some(format!("prompts/{name}"));
        }

        // classical baselines start from the reconstructed context
        let start = recon.column(n_context - 1).to_vec();
        let earlier = (n_context >= 2).then(|| recon.column(n_context - 2).to_vec());
        for scheme in cfg.baseline_schemes() {
            let stepper = Stepper::new(pde, scheme, unit.n_x, spatial.dx(), time.dt())?;
            let mut cols = Vec::with_capacity(targets.len());
            match stepper.march(&start, earlier.as_deref(), targets.len(), |j, c| {
                if j > 0 {
                    cols.push(c.to_vec())
                }
            }) {
                Ok(()) => {
                    record.baselines.insert(scheme.name().into(), cols);
                }
                Err(e) => {
                    record.baseline_failures.insert(scheme.name().into(), e.to_string());
                }
            }
        }

        let trial_ctx = TrialContext {
            pde,
            spatial: spatial.clone(),
            time: time.clone(),
            range: q.range(),
        };
        let generated: Result<Vec<SliceOutput>> = if rollout_sweep {
            rollout(self.backend.as_ref(), &trial_ctx, prompt.as_str(), cfg.generation, targets.len())
        } else {
            generate_slice(self.backend.as_ref(), &trial_ctx, prompt.as_str(), cfg.generation, 0).map(|s| vec![s])
        };
        let slices = match generated {
            Ok(s) => s,
            Err(e) if e.is_backend() => return Err(e),
            Err(e) => {
                record.status = TrialStatus::Failed { reason: e.to_string() };
                record.wall_clock_ms = started.elapsed().as_millis() as u64;
                return Ok(record);
            }
        };

        for s in &slices {
            record.predicted.push(s.codes.iter().map(|c| q.range().decode(*c)).collect());
            record.predicted_codes.push(s.codes.clone());
            record.entropy.push(
                s.aligned
                    .then(|| mean_entropy(&s.distributions, unit.n_x, cfg.metrics.log_base).ok())
                    .flatten(),
            );
            record.distributions.push(s.distributions.clone());
            record.diagnostics.push(SliceDiagnostics {
                attempts: s.attempts,
                ood: s.report.ood.clone(),
                short_groups: s.report.short_groups.len(),
                raw_tail: s.report.raw_tail.clone(),
                aligned: s.aligned,
            });
        }

        if let Sweep::Energy { .. } = cfg.sweep {
            let e0 = ic_energy(&ic, cfg.domain.half_width, IC_QUADRATURE_INTERVALS);
            let dx = spatial.dx();
            let deviation = |cols: &[Vec<f64>]| -> Result<Vec<f64>> {
                let m = Array2::from_shape_fn((unit.n_x, cols.len()), |(i, j)| cols[j][i]);
                energy_deviation(&m, dx, e0)
            };
            match deviation(&record.predicted) {
                Ok(backend) => {
                    let mut baselines = BTreeMap::new();
                    for (name, cols) in &record.baselines {
                        baselines.insert(name.clone(), deviation(cols)?);
                    }
                    record.energy = Some(EnergyRecord {
                        e0,
                        backend,
                        reference: deviation(&record.reference_exact)?,
                        baselines,
                    });
                }
                Err(e) => {
                    record.status = TrialStatus::Failed { reason: e.to_string() };
                }
            }
        }
        record.wall_clock_ms = started.elapsed().as_millis() as u64;
        Ok(record)
    }

    /// Runs units on a pool of `jobs` workers. `sink` receives every record
    /// as soon as it is complete.
    pub fn run_units(
        &self,
        units: &[Unit],
        jobs: usize,
        sink: Option<&(dyn Fn(&TrialRecord) -> Result<()> + Sync)>,
    ) -> Result<Vec<TrialRecord>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        let abort = AtomicBool::new(false);
        let fatal: Mutex<Option<Error>> = Mutex::new(None);
        let records: Vec<TrialRecord> = pool.install(|| {
            units
                .par_iter()
                .filter_map(|u| {
                    if abort.load(Ordering::SeqCst) {
                        return None;
                    }
                    let r = self.run_unit(*u).and_then(|r| {
                        if let Some(sink) = sink {
                            sink(&r)?;
                        }
                        Ok(r)
                    });
                    match r {
                        Ok(r) => {
                            if let TrialStatus::Failed { reason } = &r.status {
                                log::warn!("trial {:?} failed: {reason}", u.key());
                            }
                            Some(r)
                        }
                        Err(e) => {
                            abort.store(true, Ordering::SeqCst);
                            fatal.lock().unwrap().get_or_insert(e);
                            None
                        }
                    }
                })
                .collect()
        });
        match fatal.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(records),
        }
    }
}

fn run_sweep(cfg: &ExperimentConfig, backend: Arc<dyn Generator>, jobs: usize) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let all = units(cfg);
    let mut records = Runner::new(cfg, backend).run_units(&all, jobs, None)?;
    records.sort_by_key(TrialRecord::key);
    check_failures(&records, all.len())?;
    Ok(records)
}

fn expect_sweep(cfg: &ExperimentConfig, name: &str) -> Result<()> {
    if cfg.sweep.name() != name {
        return Err(Error::Config(format!("expected a {name} sweep, got {}", cfg.sweep.name())));
    }
    Ok(())
}

/// One-step predictions of column `N_T` for every `N_T` in the sweep.
pub fn run_one_step_context_sweep(cfg: &ExperimentConfig, backend: Arc<dyn Generator>, jobs: usize) -> Result<Vec<TrialRecord>> {
    expect_sweep(cfg, "context")?;
    run_sweep(cfg, backend, jobs)
}

/// One-step predictions at fixed `N_T` for every `N_X` in the sweep.
pub fn run_one_step_output_sweep(cfg: &ExperimentConfig, backend: Arc<dyn Generator>, jobs: usize) -> Result<Vec<TrialRecord>> {
    expect_sweep(cfg, "output")?;
    run_sweep(cfg, backend, jobs)
}

/// Rollouts from the first `floor(2 N_T / 3)` slices, `generations` per IC.
pub fn run_multistep(cfg: &ExperimentConfig, backend: Arc<dyn Generator>, jobs: usize) -> Result<Vec<TrialRecord>> {
    expect_sweep(cfg, "multi_step")?;
    run_sweep(cfg, backend, jobs)
}

/// Neumann heat rollouts with energy deviations.
pub fn run_energy_experiment(cfg: &ExperimentConfig, backend: Arc<dyn Generator>, jobs: usize) -> Result<Vec<TrialRecord>> {
    expect_sweep(cfg, "energy")?;
    run_sweep(cfg, backend, jobs)
}

fn check_failures(records: &[TrialRecord], total: usize) -> Result<()> {
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if total > 0 && failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::ExcessiveFailures { failed, total });
    }
    Ok(())
}

/// Persisted description of a run, written before any trial starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub config: ExperimentConfig,
    pub run_dir: String,
    pub created_at: u64,
    pub tool_version: String,
    pub probe: Option<ProbeReport>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, config_path: Option<&Path>, run_dir: &Path, probe: Option<ProbeReport>) -> Self {
        Self {
            config_path: config_path.map(|p| p.display().to_string()),
            config: config.clone(),
            run_dir: run_dir.display().to_string(),
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            probe,
        }
    }

    pub fn path(run_dir: &Path) -> PathBuf {
        run_dir.join("manifest.json")
    }

    pub fn load(run_dir: &Path) -> Result<Option<Self>> {
        let p = Self::path(run_dir);
        if !p.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
    }

    pub fn store(&self, run_dir: &Path) -> Result<()> {
        fs::write(Self::path(run_dir), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub skipped: usize,
    pub completed: usize,
    pub failed: usize,
}

/// Runs an experiment inside `run_dir`, writing `records.jsonl`, prompt
/// dumps and `metrics.csv`. With `resume`, successful records already in
/// `records.jsonl` are kept and their units skipped.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    backend: Arc<dyn Generator>,
    run_dir: &Path,
    jobs: usize,
    resume: bool,
) -> Result<RunSummary> {
    cfg.validate()?;
    let prompts = run_dir.join("prompts");
    fs::create_dir_all(&prompts)?;
    let records_path = run_dir.join("records.jsonl");
    let mut kept: Vec<TrialRecord> = if resume && records_path.exists() {
        read_records(&records_path)?.into_iter().filter(TrialRecord::is_ok).collect()
    } else {
        Vec::new()
    };
    let done: HashSet<RecordKey> = kept.iter().map(TrialRecord::key).collect();
    let all = units(cfg);
    let todo: Vec<Unit> = all.iter().copied().filter(|u| !done.contains(&u.key())).collect();
    write_records(&records_path, &kept)?;

    let file = Mutex::new(OpenOptions::new().append(true).open(&records_path)?);
    let sink = |r: &TrialRecord| -> Result<()> {
        let line = serde_json::to_string(r)?;
        let mut f = file.lock().unwrap();
        writeln!(f, "{line}")?;
        Ok(())
    };
    let cache = SolutionCache::new(run_dir.join("cache"))?;
    let runner = Runner::new(cfg, backend).with_outputs(prompts, Some(cache));
    let outcome = runner.run_units(&todo, jobs, Some(&sink));
    drop(file);

    let fresh = match outcome {
        Ok(r) => r,
        Err(e) => {
            // keep whatever finished for a later resume
            if let Ok(partial) = read_records(&records_path) {
                write_records(&records_path, &dedup(partial))?;
            }
            return Err(e);
        }
    };
    let summary = RunSummary {
        total: all.len(),
        skipped: kept.len(),
        completed: fresh.iter().filter(|r| r.is_ok()).count(),
        failed: fresh.iter().filter(|r| !r.is_ok()).count(),
    };
    kept.extend(fresh);
    let records = dedup(kept);
    write_records(&records_path, &records)?;
    let rows = aggregate(&cfg.run_id, &records, cfg.metrics)?;
    write_metrics_csv(&rows, File::create(run_dir.join("metrics.csv"))?)?;
    check_failures(&records, all.len())?;
    Ok(summary)
}

/// Sorted by key; the last record of a key wins.
fn dedup(records: Vec<TrialRecord>) -> Vec<TrialRecord> {
    let mut by_key = BTreeMap::new();
    for r in records {
        by_key.insert(r.key(), r);
    }
    by_key.into_values().collect()
}
