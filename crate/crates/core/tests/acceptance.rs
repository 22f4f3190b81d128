//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semival::estimators::{exact_expectation, run_estimator};
use semival::exact::{exact_semivalue, expected_single_sample};
use semival::experiment::{
    compare_paired, run_experiment, sweep_gamma, verify_bounds, ExperimentConfig, ExperimentKind, OneOrMany, Prepared,
};
use semival::games::{ConstantGame, Game, TableGame, UnanimitySum, UtilityOracle, WeightedVotingGame};
use semival::weights::{d_msr, d_star, dispersion, q_msr, q_star, tilde_q, z_coefficients, SizeDistribution};
use semival::{Coalition, EstimatorDescriptor, RandomSource, SemiValueSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spec(d: &str, n: usize) -> SemiValueSpec {
    SemiValueSpec::from_descriptor(d, n).unwrap()
}

fn oracle(game: impl Game + 'static) -> UtilityOracle {
    UtilityOracle::from_game(game)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn c1_exact_oracle() -> Outcome {
    let start = Instant::now();
    let vote = oracle(WeightedVotingGame::new(vec![2.0, 1.0, 1.0], 3.0).unwrap());
    let phi = exact_semivalue(&vote, &SemiValueSpec::shapley(3).unwrap()).unwrap().phi;
    let vote_err = max_abs_diff(&phi, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]);
    let mut unanimity_err: f64 = 0.0;
    for (n, members) in [(5usize, vec![0usize, 2, 3]), (8, vec![1, 7]), (10, (0..10).collect())] {
        let t = Coalition::from_members(n, members.iter().copied());
        let game = oracle(UnanimitySum::new(n, vec![(t, 1.0)]).unwrap());
        let phi = exact_semivalue(&game, &SemiValueSpec::shapley(n).unwrap()).unwrap().phi;
        let k = members.len() as f64;
        let want: Vec<f64> = (0..n).map(|i| if members.contains(&i) { 1.0 / k } else { 0.0 }).collect();
        unanimity_err = unanimity_err.max(max_abs_diff(&phi, &want));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        vote_err <= 1e-12 && unanimity_err <= 1e-12 && secs < 1.0,
        format!("voting err {vote_err:.1e}, unanimity err {unanimity_err:.1e}, {secs:.3}s"),
    )
}

fn c2_unbiasedness() -> Outcome {
    let start = Instant::now();
    let n = 10;
    let specs = ["shapley", "banzhaf:0.5", "banzhaf:0.8", "beta:2,2"];
    let suite = [
        "base", "gamma:0.37", "adalina", "adalina-all", "kernel:vanilla", "kernel:leverage",
        "kernel:modified", "shapiq", "ame:0.5", "ame:0.8", "msr",
    ];
    let mut checked = 0;
    let mut failures: Vec<(String, f64)> = Vec::new();
    for seed in [11u64, 12, 13] {
        let game = oracle(TableGame::random(n, seed, -1.0, 1.0).unwrap());
        for sd in specs {
            let sp = spec(sd, n);
            let phi = exact_semivalue(&game, &sp).unwrap().phi;
            for e in suite {
                let d: EstimatorDescriptor = e.parse().unwrap();
                if d.validate(&sp).is_err() {
                    continue;
                }
                let expect = exact_expectation(&d, &sp, &game, 1).unwrap();
                let err = max_abs_diff(&expect, &phi);
                checked += 1;
                if err.is_nan() || err > 1e-9 {
                    let key = format!("{e} under {sd}");
                    match failures.iter_mut().find(|(k, _)| *k == key) {
                        Some(f) => f.1 = f.1.max(err),
                        None => failures.push((key, err)),
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut detail = format!("{checked} (game, semivalue, estimator) cases, {secs:.1}s");
    if !failures.is_empty() {
        let list: Vec<String> = failures.iter().map(|(k, e)| format!("{k} ({e:.2e})")).collect();
        detail.push_str(&format!("; biased at T=1: {}", list.join(", ")));
    }
    check(failures.is_empty() && secs < 30.0, detail)
}

fn c3_z_norm() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in [5usize, 50, 308] {
        for sd in ["shapley", "banzhaf:0.5", "banzhaf:0.8", "beta:2,2", "beta:4,1"] {
            let sp = spec(sd, n);
            for (q, target) in [(q_star(&sp), n as f64 * d_star(&sp)), (q_msr(&sp), n as f64 * d_msr(&sp))] {
                let z = z_coefficients(&q, &sp).unwrap();
                for s in q.support() {
                    if q.prob(s) == 0.0 {
                        continue;
                    }
                    let (a, b) = z.get(s);
                    let norm = a * a * s as f64 + b * b * (n - s) as f64;
                    worst = worst.max((norm - target).abs() / target);
                    count += 1;
                }
            }
        }
    }
    check(worst <= 1e-9, format!("{count} sizes, worst relative deviation {worst:.1e}"))
}

fn perturbed(q: &SizeDistribution, rng: &mut ChaCha8Rng) -> SizeDistribution {
    let w: Vec<f64> = q.probs().iter().map(|p| p * (rng.random_range(-0.5..0.5f64)).exp()).collect();
    let total: f64 = w.iter().sum();
    SizeDistribution::new(q.lo(), q.hi(), w.iter().map(|x| x / total).collect(), "perturbed").unwrap()
}

fn c4_distribution_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut fixed_err, mut msr_err, mut min_gap): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for n in [8usize, 64, 512] {
        for sd in ["shapley", "banzhaf:0.5", "banzhaf:0.7", "beta:2,2", "beta:4,1"] {
            let sp = spec(sd, n);
            let q = q_star(&sp);
            let tq = tilde_q(&q, &sp).unwrap();
            fixed_err = fixed_err.max(max_abs_diff(q.probs(), tq.probs()));
            let ds = d_star(&sp);
            let lhs = d_msr(&sp).sqrt();
            let rhs = sp.m(1) + ds.sqrt() + sp.m(n);
            msr_err = msr_err.max((lhs - rhs).abs() / rhs);
            for _ in 0..20 {
                let d = dispersion(&perturbed(&q, &mut rng), &sp).unwrap();
                min_gap = min_gap.min((d - ds) / ds);
            }
        }
    }
    check(
        fixed_err <= 1e-10 && msr_err <= 1e-10 && min_gap > 0.0,
        format!(
            "|q~ - q*| {fixed_err:.1e}, msr identity {msr_err:.1e}, min (D(q) - D*)/D* over 300 perturbations {min_gap:.2e}"
        ),
    )
}

fn config(name: &str, game: &str, estimators: &[&str]) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(name, game);
    c.estimators = estimators.iter().map(|s| s.to_string()).collect();
    c
}

fn c5_mse() -> Outcome {
    let start = Instant::now();
    let (t, trials) = (64u64, 20_000usize);
    let mut c = config("mse", "randtable:12,5", &["base"]);
    c.samples = Some(t);
    c.trials = trials;
    let prepared = Prepared::new(&c).unwrap();
    let report = prepared.truths[0].as_ref().unwrap();
    let sp = &prepared.specs[0];
    let n = sp.n() as f64;
    let theory = (n * d_star(sp) * report.tilde_second_moment - report.varphi_norm_sq) / t as f64;
    let (records, _) = prepared.run_trials(&"base".parse().unwrap(), 0).unwrap();
    let sq: Vec<f64> = records.iter().map(|r| r.sq_err.unwrap()).collect();
    let (mse, se) = mean_se(&sq);
    let z = (mse - theory) / se;
    let secs = start.elapsed().as_secs_f64();
    check(
        z.abs() <= 3.0 && secs < 300.0,
        format!("empirical {mse:.5e} ± {se:.1e}, closed form {theory:.5e}, z = {z:+.2}, {secs:.1}s"),
    )
}

struct PairedOutcome {
    unpaired: (f64, f64),
    paired: (f64, f64),
    unpaired_theory: f64,
    paired_theory: f64,
    cross: f64,
}

fn paired_run(game: &str, shift: f64, t: u64, trials: usize) -> PairedOutcome {
    let mut c = config("paired", game, &["base"]);
    c.samples = Some(t);
    c.trials = trials;
    c.shift = shift;
    let prepared = Prepared::new(&c).unwrap();
    let report = prepared.truths[0].as_ref().unwrap();
    let sp = &prepared.specs[0];
    let nd = sp.n() as f64 * d_star(sp);
    let tf = t as f64;
    let rows = compare_paired(&c).unwrap().rows;
    let r = &rows[0];
    PairedOutcome {
        unpaired: (r.unpaired_mse, r.unpaired_mse_se),
        paired: (r.paired_mse, r.paired_mse_se),
        unpaired_theory: (nd * report.tilde_second_moment - report.varphi_norm_sq) / tf,
        paired_theory: (nd * (report.tilde_second_moment - report.cross_moment) - 2.0 * report.varphi_norm_sq) / tf,
        cross: report.cross_moment,
    }
}

fn c6_paired() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vote12.txt");
    std::fs::write(&path, "quota=25\nweights=9 8 7 6 5 4 4 3 3 2 1 1\n").unwrap();
    let (t, trials) = (64u64, 20_000usize);
    let pos = paired_run(&format!("wvg:@{}", path.display()), 1.0, t, trials);

    // Corner game with the strongest predicted degradation among seeds 0..64.
    let sp = SemiValueSpec::shapley(12).unwrap();
    let nd = 12.0 * d_star(&sp);
    let (seed, _) = (0u64..64)
        .map(|seed| {
            let r = exact_semivalue(&oracle(semival::games::CornerCase::new(12, 1.0, seed).unwrap()), &sp).unwrap();
            (seed, -nd * r.cross_moment - r.varphi_norm_sq)
        })
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let neg = paired_run(&format!("corner:12,1,{seed}"), 0.0, t, trials);

    let z = |emp: (f64, f64), th: f64| (emp.0 - th) / emp.1;
    let zs = [
        z(pos.unpaired, pos.unpaired_theory),
        z(pos.paired, pos.paired_theory),
        z(neg.unpaired, neg.unpaired_theory),
        z(neg.paired, neg.paired_theory),
    ];
    let ok = pos.cross > 0.0
        && pos.paired.0 < pos.unpaired.0
        && neg.cross < 0.0
        && neg.paired.0 > neg.unpaired.0
        && zs.iter().all(|z| z.abs() <= 3.0);
    check(
        ok,
        format!(
            "voting+1: cross {:+.3e}, paired {:.3e} < unpaired {:.3e}; corner seed {seed}: cross {:+.3e}, paired {:.3e} > unpaired {:.3e}; z = [{}]",
            pos.cross,
            pos.paired.0,
            pos.unpaired.0,
            neg.cross,
            neg.paired.0,
            neg.unpaired.0,
            zs.iter().map(|z| format!("{z:+.2}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// `E[f(s) z_S]` by enumeration, with `z` built by hand for the Shapley weights.
fn shapley_null_direct(n: usize, f: &dyn Fn(usize) -> f64) -> Vec<f64> {
    let m = 1.0 / n as f64;
    let nf = n as f64;
    let r: Vec<f64> = (1..n)
        .map(|s| nf.sqrt() * (m / (s as f64).sqrt()).hypot(m / ((n - s) as f64).sqrt()))
        .collect();
    let total: f64 = r.iter().sum();
    let mut out = vec![0.0; n];
    for mask in 1u64..(1 << n) - 1 {
        let s = mask.count_ones() as usize;
        let q = r[s - 1] / total;
        let (a, b) = (nf * m / (q * s as f64), nf * m / (q * (n - s) as f64));
        let w = q / binomial(n, s) * f(s);
        for (i, o) in out.iter_mut().enumerate() {
            *o += w * if mask >> i & 1 == 1 { a } else { -b };
        }
    }
    out
}

fn c7_null_space() -> Outcome {
    let n = 10;
    let sp = SemiValueSpec::shapley(n).unwrap();
    let q = q_star(&sp);
    let zero = oracle(ConstantGame { n, c: 0.0 });
    let fs: [(&str, &dyn Fn(usize) -> f64); 3] = [
        ("s", &|s| s as f64),
        ("s^2", &|s| (s * s) as f64),
        ("2^s", &|s| 2f64.powi(s as i32)),
    ];
    let mut worst: f64 = 0.0;
    for (_, f) in fs {
        let lib = expected_single_sample(&sp, &q, &zero, f).unwrap();
        let direct = shapley_null_direct(n, f);
        worst = worst.max(lib.iter().chain(&direct).map(|v| v.abs()).fold(0.0, f64::max));
    }
    check(worst <= 1e-10, format!("max |E[f(s) z_S]| over f in {{s, s^2, 2^s}}: {worst:.1e}"))
}

fn c8_mean_z() -> Outcome {
    let n = 8;
    let one = oracle(ConstantGame { n, c: 1.0 });
    let w: f64 = 0.7;
    let sp = spec("banzhaf:0.7", n);
    // m_1 = (1-w)^(n-1), m_n = w^(n-1) for weighted Banzhaf.
    let gap = (1.0 - w).powi(n as i32 - 1) - w.powi(n as i32 - 1);
    let ez = expected_single_sample(&sp, &q_star(&sp), &one, &|_| 0.0).unwrap();
    let asym_err = max_abs_diff(&ez, &vec![gap; n]);
    let mut sym_err: f64 = 0.0;
    for sd in ["shapley", "banzhaf:0.5", "beta:2,2", "beta:3,3"] {
        let sp = spec(sd, n);
        let ez = expected_single_sample(&sp, &q_star(&sp), &one, &|_| 0.0).unwrap();
        sym_err = sym_err.max(ez.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    check(
        asym_err <= 1e-10 && sym_err <= 1e-10,
        format!("banzhaf:0.7 E[z] - (m1 - mn) = {asym_err:.1e} (m1 - mn = {gap:.4}), symmetric max |E[z]| = {sym_err:.1e}"),
    )
}

fn c9_adalina() -> Outcome {
    let (t, trials) = (128u64, 2_000usize);
    let base_game = "randtable:12,9";
    let probe = Prepared::new(&config("probe", base_game, &["base"])).unwrap();
    let values = TableGame::random(12, 9, 0.0, 1.0).unwrap();
    let range = values.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let shift = 10.0 * range - probe.truths[0].as_ref().unwrap().gamma_star;

    let mut c = config("adalina", base_game, &["base"]);
    c.samples = Some(t);
    c.trials = trials;
    c.shift = shift;
    let prepared = Prepared::new(&c).unwrap();
    let report = prepared.truths[0].as_ref().unwrap();
    let gamma = report.gamma_star;
    let sp = &prepared.specs[0];
    let sup = prepared.game.sup_bound().unwrap();
    let sq = |d: &str| -> Vec<f64> {
        let (r, _) = prepared.run_trials(&d.parse().unwrap(), 0).unwrap();
        r.iter().map(|x| x.sq_err.unwrap()).collect()
    };
    let ada = sq("adalina");
    let opt = sq(&format!("gamma:{gamma}"));
    let zero = sq("base");
    let diff: Vec<f64> = ada.iter().zip(&opt).map(|(a, o)| a - o).collect();
    let (mse_a, _) = mean_se(&ada);
    let (mse_o, _) = mean_se(&opt);
    let (mse_0, _) = mean_se(&zero);
    let (d_mean, d_se) = mean_se(&diff);
    let n = sp.n() as f64;
    let slack = 6.0 * n * d_star(sp) * sup * sup / (t as f64 * (t as f64 - 1.0));
    let ratio = mse_0 / mse_a;
    check(
        d_mean <= slack + 3.0 * d_se && ratio >= 10.0,
        format!(
            "gamma* = {gamma:.3} (10x range {range:.3}); MSE adalina {mse_a:.3e}, gamma* {mse_o:.3e}, excess {d_mean:.2e} <= {slack:.2e} + 3*{d_se:.1e}; base/adalina = {ratio:.0}x"
        ),
    )
}

fn c10_tails() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut total_violations = 0;
    let mut total_rows = 0;
    for (sv, est) in [("shapley", "base"), ("banzhaf:0.3", "ame:0.3")] {
        let mut c = config("tails", "corner:10,1,21", &[est]);
        c.semivalue = OneOrMany::One(sv.into());
        c.samples = Some(256);
        c.trials = 50_000;
        let rep = verify_bounds(&c, None).unwrap();
        total_violations += rep.violations();
        total_rows += rep.rows.len();
        let worst = rep
            .rows
            .iter()
            .map(|r| r.frequency / r.threshold.min(1.0))
            .fold(0.0, f64::max);
        lines.push(format!("{est}: {} violations / {} eps, max freq/threshold {worst:.3}", rep.violations(), rep.rows.len()));
    }
    check(
        total_violations == 0 && total_rows == 20,
        format!("{}; {:.1}s", lines.join("; "), start.elapsed().as_secs_f64()),
    )
}

fn c11_sweep() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (game, offset) in [("randtable:10,31", 0.0), ("corner:10,1,8", 0.0), ("randtable:10,32", 0.37)] {
        let mut c = config("sweep", game, &[]);
        c.kind = ExperimentKind::SweepGamma;
        c.budget_per_player = Some(100);
        c.trials = 300;
        let grid = if offset != 0.0 {
            let truth = Prepared::new(&c).unwrap().truths[0].clone().unwrap();
            let step = semival::experiment::default_gamma_grid(&truth)[1] - semival::experiment::default_gamma_grid(&truth)[0];
            Some((-5..=5).map(|k| truth.gamma_star + (k as f64 + offset) * step).collect::<Vec<_>>())
        } else {
            None
        };
        let rep = sweep_gamma(&c, grid.as_deref()).unwrap();
        for (_, star, argmin, step, within) in &rep.verdicts {
            ok &= *within;
            lines.push(format!("{game}: gamma* {star:.4} argmin {argmin:.4} step {step:.4}"));
        }
    }
    check(ok, lines.join("; "))
}

/// Counts calls independently of the oracle's own counter.
struct Tally<G> {
    inner: G,
    calls: Arc<AtomicU64>,
}

impl<G: Game> Game for Tally<G> {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn value(&self, s: &Coalition) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.value(s)
    }
    fn sup_bound(&self) -> Option<f64> {
        self.inner.sup_bound()
    }
    fn describe(&self) -> String {
        self.inner.describe()
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn c12_determinism() -> Outcome {
    let estimators = [
        "base", "gamma:0.25", "adalina", "adalina-all", "kernel:vanilla", "kernel:leverage",
        "kernel:modified", "shapiq", "msr", "base+paired", "adalina+paired",
    ];
    let mut a = config("det", "corner:9,1,3", &estimators);
    a.budget_per_player = Some(31);
    a.trials = 8;
    a.checkpoints = vec![0.25, 0.5, 1.0];
    let mut b = config("det-ame", "randtable:9,4", &["ame:0.3", "base"]);
    b.semivalue = OneOrMany::One("banzhaf:0.3".into());
    b.trials = 5;
    b.budget = Some(200);

    let dirs: Vec<_> = [1usize, 4]
        .iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(*threads).build().unwrap();
            pool.install(|| {
                for c in [&a, &b] {
                    run_experiment(c).unwrap().write(&dir.path().join(format!("{}.csv", c.name))).unwrap();
                }
            });
            dir
        })
        .collect();
    let first = read_all(dirs[0].path());
    let identical = first == read_all(dirs[1].path()) && first.len() >= 6;

    let mut honest = true;
    let mut checked = 0;
    for c in [&a, &b] {
        let out = run_experiment(c).unwrap();
        let prepared = Prepared::new(c).unwrap();
        for r in &out.records {
            let d: EstimatorDescriptor = r.estimator.parse().unwrap();
            let samples = c.sample_count(&d, prepared.n).unwrap();
            let cps = c.checkpoint_samples(samples).unwrap();
            let k = c.checkpoints.iter().position(|f| *f == r.checkpoint).unwrap();
            let endpoints = if d.needs_endpoints() { 2 } else { 0 };
            honest &= r.budget == cps[k] + endpoints;
            checked += 1;
        }
        for e in &c.estimators {
            let d: EstimatorDescriptor = e.parse().unwrap();
            let calls = Arc::new(AtomicU64::new(0));
            let game = Tally {
                inner: semival::games::parse_game(&c.game).map(|g| TableGame::tabulate(g.as_ref()).unwrap()).unwrap(),
                calls: calls.clone(),
            };
            let before = calls.load(Ordering::Relaxed);
            let o = oracle(game);
            let samples = c.sample_count(&d, prepared.n).unwrap();
            let cps = c.checkpoint_samples(samples).unwrap();
            let est = run_estimator(&d, &prepared.specs[0], &o, RandomSource::for_trial(c.seed, 0), &cps).unwrap();
            let used = calls.load(Ordering::Relaxed) - before;
            honest &= est.last().unwrap().queries_used == used && used == c.sample_count(&d, prepared.n).unwrap()
                + if d.needs_endpoints() { 2 } else { 0 };
            checked += 1;
        }
    }
    check(
        identical && honest,
        format!(
            "{} output files byte-identical across 1 and 4 threads: {identical}; {checked} budget checks honest: {honest}",
            first.len()
        ),
    )
}

fn main() {
    // Panics are reported on the criterion's line instead.
    std::panic::set_hook(Box::new(|_| {}));
    let criteria: [Criterion; 12] = [
        ("exact oracle correctness", c1_exact_oracle),
        ("enumerated unbiasedness at T=1", c2_unbiasedness),
        ("z-norm invariant", c3_z_norm),
        ("distribution identities", c4_distribution_identities),
        ("closed-form MSE of the base estimator", c5_mse),
        ("paired sampling", c6_paired),
        ("null space of E[f(s) z_S]", c7_null_space),
        ("mean of z_S", c8_mean_z),
        ("adaptive gamma (Adalina)", c9_adalina),
        ("concentration tails", c10_tails),
        ("gamma sweep argmin", c11_sweep),
        ("determinism and budget honesty", c12_determinism),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = Vec::new();
    let total = Instant::now();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(o) => o,
            Err(e) => Err(format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            )),
        };
        let elapsed = start.elapsed();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(id);
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {tag} [{}] {name}: {detail}", fmt_secs(elapsed));
    }
    println!("acceptance: {} failed {:?} in {}", failed.len(), failed, fmt_secs(total.elapsed()));
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn fmt_secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}
