//! Benchmark harness: budgeted runs, gamma sweeps, paired comparisons and
//! theory-versus-Monte-Carlo checks, all writing CSV.
//!
//! Budget convention: `budget` counts every oracle query, including the two
//! endpoint queries `u([n])`, `u(∅)` for estimators that need them, so such an
//! estimator draws `budget - 2` coalitions. Both counts go to the metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{run_estimator, EstimatorDescriptor, EstimatorKind, KernelVariant};
use crate::exact::{
    ame_bound_params, ame_mse, concentration_bound, exact_semivalue, framework_bound_params,
    residual_mse, theoretical_mse, ExactReport, MAX_EXACT_N,
};
use crate::games::{parse_game, Complement, Game, Shifted, UtilityOracle};
use crate::sampling::{trial_seed, RandomSource};
use crate::weights::{d_msr, SemiValueSpec};

/// The bench CSV header, in column order.
pub const CSV_HEADER: &str =
    "estimator,game,semivalue,trial,seed,budget,checkpoint,rel_err,sq_err,theory_mse,gamma_hat,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Run,
    SweepGamma,
    Paired,
    VerifyBounds,
    VerifyMse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn items(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn default_semivalue() -> OneOrMany {
    OneOrMany::One("shapley".into())
}
fn default_trials() -> usize {
    10
}
fn default_seed() -> u64 {
    2026
}
fn default_checkpoints() -> Vec<f64> {
    vec![1.0]
}
fn default_true() -> bool {
    true
}

/// Default per-player budget multiplier.
pub const DEFAULT_BUDGET_PER_PLAYER: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub kind: ExperimentKind,
    pub game: String,
    #[serde(default = "default_semivalue")]
    pub semivalue: OneOrMany,
    #[serde(default)]
    pub estimators: Vec<String>,
    /// Total queries per estimator run.
    pub budget: Option<u64>,
    /// Total queries per player; the budget is this times `n`.
    pub budget_per_player: Option<u64>,
    /// Number of coalitions for `verify-*` runs (overrides the budget rule).
    pub samples: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Budget fractions in `(0, 1]`, strictly increasing.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    /// Constant added to every utility.
    #[serde(default)]
    pub shift: f64,
    /// Use `U([n] \ S)` in place of `U(S)`.
    #[serde(default)]
    pub complement: bool,
    #[serde(default = "default_true")]
    pub truth: bool,
    /// Record wall time; off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    pub gamma_grid: Option<Vec<f64>>,
    pub epsilons: Option<Vec<f64>>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ConfigFile {
    #[serde(default)]
    experiment: Vec<ExperimentConfig>,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, game: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ExperimentKind::Run,
            game: game.into(),
            semivalue: default_semivalue(),
            estimators: vec!["base".into()],
            budget: None,
            budget_per_player: None,
            samples: None,
            trials: default_trials(),
            seed: default_seed(),
            checkpoints: default_checkpoints(),
            shift: 0.0,
            complement: false,
            truth: true,
            timing: false,
            gamma_grid: None,
            epsilons: None,
            output: None,
        }
    }

    /// Parses every `[[experiment]]` section of a TOML document.
    pub fn parse_all(text: &str) -> Result<Vec<Self>> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.experiment.is_empty() {
            return Err(Error::Config("no [[experiment]] sections".into()));
        }
        for c in &file.experiment {
            c.validate()?;
        }
        Ok(file.experiment)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<Self>> {
        Self::parse_all(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(format!("{}: {m}", self.name)));
        if self.budget.is_some() && self.budget_per_player.is_some() {
            return err("set either budget or budget_per_player, not both".into());
        }
        if self.trials == 0 {
            return err("trials must be >= 1".into());
        }
        if self.checkpoints.is_empty()
            || self.checkpoints.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
            || self.checkpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return err("checkpoints must be strictly increasing in (0, 1]".into());
        }
        if self.kind != ExperimentKind::SweepGamma && self.estimators.is_empty() {
            return err("no estimators".into());
        }
        for e in &self.estimators {
            EstimatorDescriptor::parse(e)?;
        }
        Ok(())
    }

    fn total_budget(&self, n: usize) -> u64 {
        self.budget.unwrap_or_else(|| {
            self.budget_per_player.unwrap_or(DEFAULT_BUDGET_PER_PLAYER) * n as u64
        })
    }

    /// Coalitions drawn by `descriptor`: `samples` if set, else the budget
    /// minus endpoint queries.
    pub fn sample_count(&self, descriptor: &EstimatorDescriptor, n: usize) -> Result<u64> {
        if let Some(t) = self.samples {
            return Ok(t);
        }
        let endpoints = if descriptor.needs_endpoints() { 2 } else { 0 };
        let b = self.total_budget(n);
        if b <= endpoints {
            return Err(Error::Config(format!(
                "{}: budget {b} leaves no samples for {descriptor}",
                self.name
            )));
        }
        Ok(b - endpoints)
    }

    /// Sample counts at each checkpoint fraction.
    pub fn checkpoint_samples(&self, total: u64) -> Result<Vec<u64>> {
        let out: Vec<u64> = self
            .checkpoints
            .iter()
            .map(|f| ((f * total as f64).round() as u64).max(1))
            .collect();
        if out.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "{}: checkpoints collapse after rounding at {total} samples",
                self.name
            )));
        }
        Ok(out)
    }
}

/// One row of the bench CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub estimator: String,
    pub game: String,
    pub semivalue: String,
    pub trial: usize,
    pub seed: u64,
    pub budget: u64,
    pub checkpoint: f64,
    pub rel_err: Option<f64>,
    pub sq_err: Option<f64>,
    pub theory_mse: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub wall_ms: f64,
}

/// Mean and sample standard deviation across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub semivalue: String,
    pub checkpoint: f64,
    pub budget: u64,
    pub trials: usize,
    pub rel_err_mean: Option<f64>,
    pub rel_err_std: Option<f64>,
    pub mse: Option<f64>,
    pub mse_se: Option<f64>,
    pub theory_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiRow {
    pub estimator: String,
    pub semivalue: String,
    pub trial: usize,
    pub checkpoint: f64,
    pub player: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub summary: Vec<SummaryRow>,
    /// Raw estimates, kept only when no ground truth is computed.
    pub phi: Vec<PhiRow>,
    pub meta: serde_json::Value,
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `<stem>.<suffix>` next to `path`, e.g. `out.csv` -> `out.summary.csv`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_header_only(path: &Path, header: &str) -> Result<()> {
    std::fs::write(path, format!("{header}\n"))?;
    Ok(())
}

impl ExperimentOutput {
    /// Writes the records to `path` and the summary, metadata and (without
    /// ground truth) raw estimates to sidecar files.
    pub fn write(&self, path: &Path) -> Result<()> {
        if self.records.is_empty() {
            write_header_only(path, CSV_HEADER)?;
        } else {
            write_csv(path, &self.records)?;
        }
        write_csv(&sidecar(path, "summary.csv"), &self.summary)?;
        if !self.phi.is_empty() {
            write_csv(&sidecar(path, "phi.csv"), &self.phi)?;
        }
        let meta = serde_json::to_string_pretty(&self.meta).expect("metadata is valid JSON");
        std::fs::write(sidecar(path, "meta.json"), meta + "\n")?;
        Ok(())
    }
}

/// A config with its game, specs and ground truth resolved.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub game: Arc<dyn Game>,
    pub n: usize,
    pub specs: Vec<SemiValueSpec>,
    pub truths: Vec<Option<ExactReport>>,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut game = parse_game(&config.game)?;
        if config.complement {
            game = Arc::new(Complement(game));
        }
        if config.shift != 0.0 {
            game = Arc::new(Shifted {
                inner: game,
                shift: config.shift,
            });
        }
        let n = game.n();
        let specs = config
            .semivalue
            .items()
            .iter()
            .map(|d| SemiValueSpec::from_descriptor(d, n))
            .collect::<Result<Vec<_>>>()?;
        let truths = if config.truth {
            if n > MAX_EXACT_N {
                return Err(Error::TooLarge {
                    what: "ground truth (set truth = false)",
                    n,
                    limit: MAX_EXACT_N,
                });
            }
            let oracle = UtilityOracle::new(game.clone());
            specs
                .iter()
                .map(|s| exact_semivalue(&oracle, s).map(Some))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![None; specs.len()]
        };
        Ok(Self {
            config: config.clone(),
            game,
            n,
            specs,
            truths,
        })
    }

    fn descriptors(&self) -> Result<Vec<EstimatorDescriptor>> {
        self.config
            .estimators
            .iter()
            .map(|e| EstimatorDescriptor::parse(e))
            .collect()
    }

    /// Runs `descriptor` on spec `k` for every trial; records in trial order.
    pub fn run_trials(
        &self,
        descriptor: &EstimatorDescriptor,
        k: usize,
    ) -> Result<(Vec<ExperimentRecord>, Vec<PhiRow>)> {
        let spec = &self.specs[k];
        let truth = self.truths[k].as_ref();
        let samples = self.config.sample_count(descriptor, self.n)?;
        let cps = self.config.checkpoint_samples(samples)?;
        let theory: Vec<Option<f64>> = match truth {
            Some(r) => cps
                .iter()
                .map(|t| theory_mse(descriptor, spec, r, *t))
                .collect::<Result<_>>()?,
            None => vec![None; cps.len()],
        };
        let expected_final = samples + if descriptor.needs_endpoints() { 2 } else { 0 };
        let per_trial: Vec<(Vec<ExperimentRecord>, Vec<PhiRow>)> = (0..self.config.trials)
            .into_par_iter()
            .map(|trial| {
                let oracle = UtilityOracle::new(self.game.clone());
                let seed = trial_seed(self.config.seed, trial as u64);
                let ests = run_estimator(descriptor, spec, &oracle, RandomSource::new(seed), &cps)?;
                let last = ests.last().expect("at least one checkpoint");
                if last.queries_used != expected_final || oracle.query_count() != expected_final {
                    return Err(Error::Estimator(format!(
                        "budget mismatch for {descriptor}: {} queries, expected {expected_final}",
                        oracle.query_count()
                    )));
                }
                let mut records = Vec::with_capacity(ests.len());
                let mut phi = Vec::new();
                for ((est, frac), th) in ests.iter().zip(&self.config.checkpoints).zip(&theory) {
                    let (rel, sq) = match truth {
                        Some(r) => {
                            let sq: f64 = est
                                .phi_hat
                                .iter()
                                .zip(&r.phi)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum();
                            let rel = if r.phi_norm_sq > 0.0 {
                                (sq / r.phi_norm_sq).sqrt()
                            } else {
                                sq.sqrt()
                            };
                            (Some(rel), Some(sq))
                        }
                        None => {
                            phi.extend(est.phi_hat.iter().enumerate().map(|(i, v)| PhiRow {
                                estimator: descriptor.to_string(),
                                semivalue: spec.label(),
                                trial,
                                checkpoint: *frac,
                                player: i,
                                value: *v,
                            }));
                            (None, None)
                        }
                    };
                    records.push(ExperimentRecord {
                        estimator: descriptor.to_string(),
                        game: self.game.describe(),
                        semivalue: spec.label(),
                        trial,
                        seed,
                        budget: est.queries_used,
                        checkpoint: *frac,
                        rel_err: rel,
                        sq_err: sq,
                        theory_mse: *th,
                        gamma_hat: est.gamma_hat,
                        wall_ms: if self.config.timing { est.elapsed_ms } else { 0.0 },
                    });
                }
                Ok((records, phi))
            })
            .collect::<Result<_>>()?;
        let mut records = Vec::new();
        let mut phi = Vec::new();
        for (r, p) in per_trial {
            records.extend(r);
            phi.extend(p);
        }
        Ok((records, phi))
    }

    fn meta(&self, descriptors: &[EstimatorDescriptor]) -> Result<serde_json::Value> {
        let mut per_est = serde_json::Map::new();
        for d in descriptors {
            let samples = self.config.sample_count(d, self.n)?;
            let endpoint_queries = if d.needs_endpoints() { 2 } else { 0 };
            let mut warnings: Vec<String> = self.specs.iter().flat_map(|s| d.warnings(s)).collect();
            if d.paired && samples % 2 == 1 {
                warnings.push(format!(
                    "odd sample count {samples}: the last coalition is an unpaired draw"
                ));
            }
            per_est.insert(
                d.to_string(),
                serde_json::json!({
                    "queries_total": samples + endpoint_queries,
                    "samples": samples,
                    "endpoint_queries": endpoint_queries,
                    "checkpoint_samples": self.config.checkpoint_samples(samples)?,
                    "warnings": warnings,
                }),
            );
        }
        Ok(serde_json::json!({
            "name": self.config.name,
            "kind": self.config.kind,
            "game": self.game.describe(),
            "n": self.n,
            "semivalues": self.specs.iter().map(|s| s.label()).collect::<Vec<_>>(),
            "trials": self.config.trials,
            "seed": self.config.seed,
            "seed_derivation": "seed ^ splitmix64(trial)",
            "budget_convention": "budget counts all queries, endpoint queries included; samples = budget - endpoint_queries",
            "rel_err": "||phi_hat - phi||_2 / ||phi||_2 (absolute norm when phi = 0)",
            "estimators": per_est,
        }))
    }
}

/// Closed-form MSE of `descriptor` after `t` samples, where one exists.
pub fn theory_mse(
    descriptor: &EstimatorDescriptor,
    spec: &SemiValueSpec,
    report: &ExactReport,
    t: u64,
) -> Result<Option<f64>> {
    let t = t as usize;
    let paired = descriptor.paired;
    let n = spec.n() as f64;
    let q = match descriptor.size_distribution(spec) {
        Some(q) => q,
        None => {
            return match descriptor.kind {
                EstimatorKind::Ame(w) => ame_mse(report, w, t).map(Some),
                _ => Ok(None),
            }
        }
    };
    let lambda = (report.u_full - report.u_empty) / n;
    let u_empty = report.u_empty;
    let value = match descriptor.kind {
        EstimatorKind::Base | EstimatorKind::Msr => theoretical_mse(report, spec, &q, t, paired)?,
        EstimatorKind::Gamma(g) => residual_mse(report, spec, &q, &move |_| g, t, paired)?,
        EstimatorKind::ShapIq => residual_mse(report, spec, &q, &move |_| u_empty, t, paired)?,
        EstimatorKind::Kernel(KernelVariant::Vanilla) => {
            residual_mse(report, spec, &q, &|_| 0.0, t, paired)?
        }
        EstimatorKind::Kernel(_) => {
            residual_mse(report, spec, &q, &move |s| lambda * s as f64, t, paired)?
        }
        EstimatorKind::Adalina | EstimatorKind::AdalinaAll | EstimatorKind::Ame(_) => return Ok(None),
    };
    Ok(Some(value))
}

/// Groups records by (estimator, semivalue, checkpoint) in first-seen order.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, String, u64), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.estimator.clone(), r.semivalue.clone(), r.checkpoint.to_bits());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let rel: Option<Vec<f64>> = rows.iter().map(|r| r.rel_err).collect();
            let sq: Option<Vec<f64>> = rows.iter().map(|r| r.sq_err).collect();
            let (rel_mean, rel_std) = match &rel {
                Some(v) => {
                    let (m, s) = mean_std(v);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            let (mse, mse_se) = match &sq {
                Some(v) => {
                    let (m, s) = mean_std(v);
                    (Some(m), Some(s / (v.len() as f64).sqrt()))
                }
                None => (None, None),
            };
            SummaryRow {
                estimator: key.0.clone(),
                semivalue: key.1.clone(),
                checkpoint: f64::from_bits(key.2),
                budget: rows[0].budget,
                trials: rows.len(),
                rel_err_mean: rel_mean,
                rel_err_std: rel_std,
                mse,
                mse_se,
                theory_mse: rows[0].theory_mse,
            }
        })
        .collect()
}

/// Runs every (semivalue, estimator) pair of a config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let prepared = Prepared::new(config)?;
    let descriptors = prepared.descriptors()?;
    run_descriptors(&prepared, &descriptors)
}

fn run_descriptors(prepared: &Prepared, descriptors: &[EstimatorDescriptor]) -> Result<ExperimentOutput> {
    for d in descriptors {
        for s in &prepared.specs {
            d.validate(s)?;
        }
    }
    let mut records = Vec::new();
    let mut phi = Vec::new();
    for k in 0..prepared.specs.len() {
        for d in descriptors {
            let (r, p) = prepared.run_trials(d, k)?;
            records.extend(r);
            phi.extend(p);
        }
    }
    Ok(ExperimentOutput {
        summary: summarize(&records),
        meta: prepared.meta(descriptors)?,
        records,
        phi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub semivalue: String,
    pub gamma: f64,
    pub rel_err_mean: f64,
    pub rel_err_std: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub theory_mse: f64,
    pub gamma_star: f64,
    pub argmin: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub output: ExperimentOutput,
    pub rows: Vec<SweepRow>,
    /// Per semivalue: (label, γ*, empirical argmin, grid step, within one step).
    pub verdicts: Vec<(String, f64, f64, f64, bool)>,
}

impl SweepReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        self.output.write(path)?;
        write_csv(&sidecar(path, "sweep.csv"), &self.rows)
    }
}

/// Default grid: `γ* + k Δ` for `k = -5..=5` with `Δ` a fifth of the
/// standard deviation of `u_S` under `q̃` (1 when that is zero).
pub fn default_gamma_grid(report: &ExactReport) -> Vec<f64> {
    let second = report.tilde_second_moment;
    let var = second - report.gamma_star * report.gamma_star;
    // Rounding leaves a tiny residue for constant utilities.
    let step = if var > 1e-12 * second { 0.2 * var.sqrt() } else { 1.0 };
    (-5..=5).map(|k| report.gamma_star + k as f64 * step).collect()
}

/// Runs `gamma:<v>` for each grid value on common trial seeds; the argmin
/// is taken over empirical MSE.
pub fn sweep_gamma(config: &ExperimentConfig, grid: Option<&[f64]>) -> Result<SweepReport> {
    let mut config = config.clone();
    config.kind = ExperimentKind::SweepGamma;
    let config = &config;
    let prepared = Prepared::new(config)?;
    for s in &prepared.specs {
        if !s.is_symmetric() {
            return Err(Error::Config(format!(
                "gamma sweep needs a symmetric semi-value, got {}",
                s.label()
            )));
        }
    }
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut all_desc = Vec::new();
    for k in 0..prepared.specs.len() {
        let report = prepared.truths[k]
            .as_ref()
            .ok_or_else(|| Error::Config("gamma sweep needs ground truth".into()))?;
        let grid: Vec<f64> = match grid.or(config.gamma_grid.as_deref()) {
            Some(g) => g.to_vec(),
            None => default_gamma_grid(report),
        };
        if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("gamma grid must be strictly increasing with >= 2 points".into()));
        }
        let mut best = (f64::INFINITY, 0usize);
        let mut spec_rows = Vec::new();
        for (gi, g) in grid.iter().enumerate() {
            let d = EstimatorDescriptor::new(EstimatorKind::Gamma(*g));
            let (r, _) = prepared.run_trials(&d, k)?;
            let last: Vec<&ExperimentRecord> = r
                .iter()
                .filter(|x| x.checkpoint == *config.checkpoints.last().unwrap())
                .collect();
            let rel: Vec<f64> = last.iter().map(|x| x.rel_err.unwrap()).collect();
            let sq: Vec<f64> = last.iter().map(|x| x.sq_err.unwrap()).collect();
            let (rm, rs) = mean_std(&rel);
            let (mse, sd) = mean_std(&sq);
            if mse < best.0 {
                best = (mse, gi);
            }
            spec_rows.push(SweepRow {
                semivalue: prepared.specs[k].label(),
                gamma: *g,
                rel_err_mean: rm,
                rel_err_std: rs,
                mse,
                mse_se: sd / (sq.len() as f64).sqrt(),
                theory_mse: last[0].theory_mse.unwrap_or(f64::NAN),
                gamma_star: report.gamma_star,
                argmin: false,
            });
            records.extend(r);
            if k == 0 {
                all_desc.push(d);
            }
        }
        spec_rows[best.1].argmin = true;
        let argmin = grid[best.1];
        let step = grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0f64, f64::max);
        verdicts.push((
            prepared.specs[k].label(),
            report.gamma_star,
            argmin,
            step,
            (argmin - report.gamma_star).abs() <= step * (1.0 + 1e-12),
        ));
        rows.extend(spec_rows);
    }
    let mut meta = prepared.meta(&all_desc)?;
    meta["sweep"] = serde_json::json!(verdicts
        .iter()
        .map(|(s, g, a, st, ok)| serde_json::json!({
            "semivalue": s, "gamma_star": g, "argmin": a, "grid_step": st, "within_one_step": ok
        }))
        .collect::<Vec<_>>());
    Ok(SweepReport {
        output: ExperimentOutput {
            summary: summarize(&records),
            records,
            phi: Vec::new(),
            meta,
        },
        rows,
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub estimator: String,
    pub semivalue: String,
    pub checkpoint: f64,
    pub unpaired_rel_err: f64,
    pub paired_rel_err: f64,
    pub unpaired_mse: f64,
    pub unpaired_mse_se: f64,
    pub paired_mse: f64,
    pub paired_mse_se: f64,
    pub unpaired_theory: Option<f64>,
    pub paired_theory: Option<f64>,
    pub cross_moment: f64,
    /// Sign of `E_q̃[u_S u_{[n]\S}]`: 1, -1 or 0.
    pub cross_sign: i8,
    pub predicted_paired_better: Option<bool>,
    pub empirical_paired_better: bool,
    pub ordering_matches: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct PairedReport {
    pub output: ExperimentOutput,
    pub rows: Vec<PairedRow>,
}

impl PairedReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        self.output.write(path)?;
        write_csv(&sidecar(path, "paired.csv"), &self.rows)
    }
}

/// Runs each estimator with and without paired sampling on common seeds.
pub fn compare_paired(config: &ExperimentConfig) -> Result<PairedReport> {
    let prepared = Prepared::new(config)?;
    let base: Vec<EstimatorDescriptor> = prepared
        .descriptors()?
        .into_iter()
        .map(|mut d| {
            d.paired = false;
            d
        })
        .collect();
    let mut both = Vec::new();
    for d in &base {
        both.push(*d);
        both.push(d.paired());
    }
    let output = run_descriptors(&prepared, &both)?;
    let mut rows = Vec::new();
    for (k, spec) in prepared.specs.iter().enumerate() {
        let report = prepared.truths[k]
            .as_ref()
            .ok_or_else(|| Error::Config("paired comparison needs ground truth".into()))?;
        for d in &base {
            let q = d
                .size_distribution(spec)
                .ok_or_else(|| Error::Config(format!("{d} has no size distribution to pair")))?;
            let cross = report.moments(spec, &q)?.tilde_cross;
            let find = |name: String, cp: f64| {
                output
                    .summary
                    .iter()
                    .find(|r| r.estimator == name && r.semivalue == spec.label() && r.checkpoint == cp)
                    .cloned()
                    .expect("summary row for every run")
            };
            for cp in &config.checkpoints {
                let u = find(d.to_string(), *cp);
                let p = find(d.paired().to_string(), *cp);
                let (um, pm) = (u.mse.unwrap(), p.mse.unwrap());
                let predicted = match (u.theory_mse, p.theory_mse) {
                    (Some(a), Some(b)) => Some(b < a),
                    _ => None,
                };
                rows.push(PairedRow {
                    estimator: d.to_string(),
                    semivalue: spec.label(),
                    checkpoint: *cp,
                    unpaired_rel_err: u.rel_err_mean.unwrap(),
                    paired_rel_err: p.rel_err_mean.unwrap(),
                    unpaired_mse: um,
                    unpaired_mse_se: u.mse_se.unwrap(),
                    paired_mse: pm,
                    paired_mse_se: p.mse_se.unwrap(),
                    unpaired_theory: u.theory_mse,
                    paired_theory: p.theory_mse,
                    cross_moment: cross,
                    cross_sign: if cross > 0.0 { 1 } else if cross < 0.0 { -1 } else { 0 },
                    predicted_paired_better: predicted,
                    empirical_paired_better: pm < um,
                    ordering_matches: predicted.map(|p| p == (pm < um)),
                });
            }
        }
    }
    Ok(PairedReport { output, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub estimator: String,
    pub semivalue: String,
    pub samples: u64,
    pub trials: usize,
    pub epsilon: f64,
    pub frequency: f64,
    pub bound: f64,
    pub threshold: f64,
    pub violation: bool,
}

#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub output: ExperimentOutput,
    pub rows: Vec<BoundRow>,
}

impl BoundsReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violation).count()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.output.write(path)?;
        write_csv(&sidecar(path, "bounds.csv"), &self.rows)
    }
}

/// `(σ^2, c_vec)` of the tail bound for estimators that have one.
pub fn bound_params(descriptor: &EstimatorDescriptor, spec: &SemiValueSpec, c: f64) -> Result<(f64, f64)> {
    if descriptor.paired {
        return Err(Error::Config("tail bounds assume independent samples".into()));
    }
    match descriptor.kind {
        EstimatorKind::Base => Ok(framework_bound_params(spec, c)),
        EstimatorKind::Msr => {
            let nd = spec.n() as f64 * d_msr(spec);
            Ok((nd * c * c, 2.0 * c * nd.sqrt()))
        }
        EstimatorKind::Ame(w) => Ok(ame_bound_params(spec.n(), w, c)),
        _ => Err(Error::Config(format!("no tail bound for {descriptor}"))),
    }
}

/// Empirical tail frequencies `P(‖φ̂ - φ‖ >= ε)` against the bound; a
/// violation is a frequency above `bound + 3 sqrt(bound (1 - bound) / trials)`.
///
/// The default grid is ten evenly spaced points up to the validity limit.
pub fn verify_bounds(config: &ExperimentConfig, epsilons: Option<&[f64]>) -> Result<BoundsReport> {
    let mut cfg = config.clone();
    cfg.checkpoints = vec![1.0];
    let prepared = Prepared::new(&cfg)?;
    let c = prepared
        .game
        .sup_bound()
        .ok_or_else(|| Error::Config("tail bounds need a game with a known sup bound".into()))?;
    let descriptors = prepared.descriptors()?;
    let output = run_descriptors(&prepared, &descriptors)?;
    let mut rows = Vec::new();
    for spec in prepared.specs.iter() {
        for d in &descriptors {
            let (sigma2, c_vec) = bound_params(d, spec, c)?;
            let t = cfg.sample_count(d, prepared.n)?;
            let errors: Vec<f64> = output
                .records
                .iter()
                .filter(|r| r.estimator == d.to_string() && r.semivalue == spec.label())
                .map(|r| r.sq_err.map(f64::sqrt))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Config("tail bounds need ground truth".into()))?;
            let max = 3.0 * sigma2 / c_vec;
            let grid: Vec<f64> = match epsilons.or(cfg.epsilons.as_deref()) {
                Some(g) => g.to_vec(),
                None => (1..=10).map(|k| max * k as f64 / 10.0).collect(),
            };
            let trials = errors.len();
            for eps in grid {
                let bound = concentration_bound(t as usize, eps, sigma2, c_vec)?;
                let freq = errors.iter().filter(|e| **e >= eps).count() as f64 / trials as f64;
                let b = bound.min(1.0);
                let threshold = bound + 3.0 * (b * (1.0 - b) / trials as f64).sqrt();
                rows.push(BoundRow {
                    estimator: d.to_string(),
                    semivalue: spec.label(),
                    samples: t,
                    trials,
                    epsilon: eps,
                    frequency: freq,
                    bound,
                    threshold,
                    violation: freq > threshold,
                });
            }
        }
    }
    Ok(BoundsReport { output, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub estimator: String,
    pub semivalue: String,
    pub samples: u64,
    pub trials: usize,
    pub empirical_mse: f64,
    pub standard_error: f64,
    pub theory_mse: Option<f64>,
    pub z_score: Option<f64>,
    pub within_3se: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct MseReport {
    pub output: ExperimentOutput,
    pub rows: Vec<MseRow>,
}

impl MseReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        self.output.write(path)?;
        write_csv(&sidecar(path, "mse.csv"), &self.rows)
    }
}

/// Empirical MSE with its standard error next to the closed form.
pub fn verify_mse(config: &ExperimentConfig) -> Result<MseReport> {
    let mut cfg = config.clone();
    cfg.checkpoints = vec![1.0];
    let prepared = Prepared::new(&cfg)?;
    let descriptors = prepared.descriptors()?;
    let output = run_descriptors(&prepared, &descriptors)?;
    let mut rows = Vec::new();
    for s in &output.summary {
        let mse = s
            .mse
            .ok_or_else(|| Error::Config("MSE verification needs ground truth".into()))?;
        let se = s.mse_se.unwrap_or(0.0);
        let z = s.theory_mse.map(|t| if se > 0.0 { (mse - t) / se } else { 0.0 });
        let d = EstimatorDescriptor::parse(&s.estimator)?;
        rows.push(MseRow {
            estimator: s.estimator.clone(),
            semivalue: s.semivalue.clone(),
            samples: cfg.sample_count(&d, prepared.n)?,
            trials: s.trials,
            empirical_mse: mse,
            standard_error: se,
            theory_mse: s.theory_mse,
            z_score: z,
            within_3se: z.map(|z| z.abs() <= 3.0),
        });
    }
    Ok(MseReport { output, rows })
}
