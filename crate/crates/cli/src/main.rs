use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semival::exact::exact_semivalue;
use semival::experiment::{
    compare_paired, run_experiment, sweep_gamma, verify_bounds, verify_mse, ExperimentConfig,
    ExperimentKind, OneOrMany,
};
use semival::games::{parse_game, UtilityOracle};
use semival::SemiValueSpec;

/// Semi-value estimation benchmarks.
#[derive(Parser, Debug)]
#[command(name = "semival", version, about)]
struct Cli {
    /// Base seed; trial t uses seed ^ splitmix64(t).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials per estimator.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Total queries per player (budget = this * n).
    #[arg(long, global = true)]
    budget_per_player: Option<u64>,
    /// Output CSV path (a directory when the config holds several experiments).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the exact semi-value and moments as a field,index,value CSV.
    Exact {
        #[arg(long)]
        game: String,
        #[arg(long, default_value = "shapley")]
        semivalue: String,
    },
    /// Budgeted estimator runs with error-vs-budget checkpoints.
    Run(ExpArgs),
    /// Sweep the fixed residual gamma around its optimum.
    SweepGamma {
        #[command(flatten)]
        exp: ExpArgs,
        /// Gamma grid (defaults to 11 points centred on the exact optimum).
        #[arg(long = "gamma", value_delimiter = ',', allow_hyphen_values = true)]
        gamma: Vec<f64>,
    },
    /// Paired versus independent sampling on common seeds.
    Paired(ExpArgs),
    /// Empirical tail frequencies against the concentration bound.
    VerifyBounds {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long = "epsilon", value_delimiter = ',')]
        epsilon: Vec<f64>,
    },
    /// Empirical MSE against the closed form.
    VerifyMse(ExpArgs),
}

#[derive(Args, Debug, Clone)]
struct ExpArgs {
    /// TOML file with [[experiment]] sections; inline flags build one otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only run the named experiment from the config file.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    game: Option<String>,
    #[arg(long = "semivalue")]
    semivalue: Vec<String>,
    #[arg(long = "estimator")]
    estimator: Vec<String>,
    /// Absolute query budget (overrides --budget-per-player).
    #[arg(long)]
    budget: Option<u64>,
    /// Exact sample count for verification runs.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<f64>,
    #[arg(long)]
    complement: bool,
    /// Skip ground truth and emit raw estimates.
    #[arg(long)]
    no_truth: bool,
    /// Record wall time (makes the CSV nondeterministic).
    #[arg(long)]
    timing: bool,
}

impl Cli {
    fn configs(&self, exp: &ExpArgs, kind: Option<ExperimentKind>) -> Result<Vec<ExperimentConfig>> {
        let mut configs = match &exp.config {
            Some(path) => {
                let mut all = ExperimentConfig::load(path)
                    .with_context(|| format!("loading {}", path.display()))?;
                if let Some(name) = &exp.name {
                    all.retain(|c| &c.name == name);
                    if all.is_empty() {
                        bail!("no experiment named {name} in {}", path.display());
                    }
                }
                all
            }
            None => {
                let game = exp.game.clone().context("--game or --config is required")?;
                let mut c = ExperimentConfig::new(exp.name.clone().unwrap_or_else(|| "cli".into()), game);
                if !exp.semivalue.is_empty() {
                    c.semivalue = OneOrMany::Many(exp.semivalue.clone());
                }
                if !exp.estimator.is_empty() {
                    c.estimators = exp.estimator.clone();
                }
                vec![c]
            }
        };
        for c in &mut configs {
            if let Some(k) = kind {
                c.kind = k;
            }
            if let Some(s) = self.seed {
                c.seed = s;
            }
            if let Some(t) = self.trials {
                c.trials = t;
            }
            if let Some(b) = exp.budget {
                c.budget = Some(b);
                c.budget_per_player = None;
            } else if let Some(b) = self.budget_per_player {
                c.budget = None;
                c.budget_per_player = Some(b);
            }
            if exp.samples.is_some() {
                c.samples = exp.samples;
            }
            if !exp.checkpoints.is_empty() {
                c.checkpoints = exp.checkpoints.clone();
            }
            if let Some(s) = exp.shift {
                c.shift = s;
            }
            c.complement |= exp.complement;
            c.truth &= !exp.no_truth;
            c.timing |= exp.timing;
            c.validate()?;
        }
        Ok(configs)
    }

    fn output_path(&self, config: &ExperimentConfig, several: bool) -> PathBuf {
        match (&self.out, several) {
            (Some(p), false) => p.clone(),
            (Some(dir), true) => dir.join(format!("{}.csv", config.name)),
            (None, _) => config
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.name))),
        }
    }
}

fn run_one(
    config: &ExperimentConfig,
    path: &Path,
    gamma: &[f64],
    epsilon: &[f64],
    stdout: &mut impl Write,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let name = &config.name;
    match config.kind {
        ExperimentKind::Run => {
            let out = run_experiment(config)?;
            out.write(path)?;
            for s in &out.summary {
                writeln!(
                    stdout,
                    "{name}: {} {} @{}: rel_err {} ± {}",
                    s.estimator,
                    s.semivalue,
                    s.checkpoint,
                    fmt_opt(s.rel_err_mean),
                    fmt_opt(s.rel_err_std)
                )?;
            }
        }
        ExperimentKind::SweepGamma => {
            let grid = (!gamma.is_empty()).then_some(gamma);
            let rep = sweep_gamma(config, grid)?;
            rep.write(path)?;
            for (spec, star, argmin, step, ok) in &rep.verdicts {
                writeln!(
                    stdout,
                    "{name}: {spec}: gamma* {star:.6} argmin {argmin:.6} step {step:.6} within one step: {ok}"
                )?;
            }
        }
        ExperimentKind::Paired => {
            let rep = compare_paired(config)?;
            rep.write(path)?;
            for r in &rep.rows {
                writeln!(
                    stdout,
                    "{name}: {} {} @{}: unpaired {:.4e} paired {:.4e} cross {:+.4e} ordering matches: {}",
                    r.estimator,
                    r.semivalue,
                    r.checkpoint,
                    r.unpaired_mse,
                    r.paired_mse,
                    r.cross_moment,
                    r.ordering_matches.map_or("n/a".into(), |b| b.to_string())
                )?;
            }
        }
        ExperimentKind::VerifyBounds => {
            let grid = (!epsilon.is_empty()).then_some(epsilon);
            let rep = verify_bounds(config, grid)?;
            rep.write(path)?;
            writeln!(stdout, "{name}: {} violations in {} checks", rep.violations(), rep.rows.len())?;
        }
        ExperimentKind::VerifyMse => {
            let rep = verify_mse(config)?;
            rep.write(path)?;
            for r in &rep.rows {
                writeln!(
                    stdout,
                    "{name}: {} {}: empirical {:.4e} ± {:.2e} theory {} z {}",
                    r.estimator,
                    r.semivalue,
                    r.empirical_mse,
                    r.standard_error,
                    fmt_opt(r.theory_mse),
                    fmt_opt(r.z_score)
                )?;
            }
        }
    }
    writeln!(stdout, "{name}: wrote {}", path.display())?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4e}"))
}

fn exact(game: &str, semivalue: &str, out: Option<&Path>) -> Result<()> {
    let game = parse_game(game)?;
    let spec = SemiValueSpec::from_descriptor(semivalue, game.n())?;
    let report = exact_semivalue(&UtilityOracle::new(game), &spec)?;
    let mut text = String::from("field,index,value\n");
    text.push_str(&format!("n,0,{}\n", report.n));
    for (field, i, v) in report.rows() {
        text.push_str(&format!("{field},{i},{v}\n"));
    }
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (exp, kind, gamma, epsilon) = match &cli.command {
        Command::Exact { game, semivalue } => return exact(game, semivalue, cli.out.as_deref()),
        Command::Run(e) => (e, None, &[][..], &[][..]),
        Command::SweepGamma { exp, gamma } => (exp, Some(ExperimentKind::SweepGamma), &gamma[..], &[][..]),
        Command::Paired(e) => (e, Some(ExperimentKind::Paired), &[][..], &[][..]),
        Command::VerifyBounds { exp, epsilon } => {
            (exp, Some(ExperimentKind::VerifyBounds), &[][..], &epsilon[..])
        }
        Command::VerifyMse(e) => (e, Some(ExperimentKind::VerifyMse), &[][..], &[][..]),
    };
    let configs = cli.configs(exp, kind)?;
    let several = configs.len() > 1;
    let mut stdout = std::io::stdout().lock();
    for c in &configs {
        let path = cli.output_path(c, several);
        run_one(c, &path, gamma, epsilon, &mut stdout).with_context(|| format!("experiment {}", c.name))?;
    }
    Ok(())
}
