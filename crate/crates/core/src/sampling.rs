//! Seeded random sources and coalition streams.
//!
//! Every random draw goes through [`RandomSource`], a ChaCha8 stream keyed by
//! a 64-bit seed. Trial `t` of an experiment with seed `s` uses
//! `s ^ splitmix64(t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::weights::SizeDistribution;

/// The splitmix64 output function applied to `x` (one step from state `x`).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `trial` of a run seeded with `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed ^ splitmix64(trial)
}

#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_trial(seed: u64, trial: u64) -> Self {
        Self::new(trial_seed(seed, trial))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Cumulative table for drawing sizes from a [`SizeDistribution`].
#[derive(Debug, Clone)]
pub struct SizeSampler {
    lo: usize,
    cdf: Vec<f64>,
}

impl SizeSampler {
    pub fn new(q: &SizeDistribution) -> Self {
        let mut acc = 0.0;
        let cdf = q
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { lo: q.lo(), cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let idx = self.cdf.partition_point(|c| *c <= u);
        self.lo + idx.min(self.cdf.len() - 1)
    }
}

/// Uniform fixed-size subsets by partial Fisher-Yates over a reused index array.
#[derive(Debug, Clone)]
pub struct SubsetSampler {
    idx: Vec<usize>,
}

impl SubsetSampler {
    pub fn new(n: usize) -> Self {
        Self {
            idx: (0..n).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> Coalition {
        let n = self.idx.len();
        assert!(s <= n, "subset size {s} exceeds n = {n}");
        // Draw the smaller side; the index array may start in any order.
        let (k, take_complement) = if 2 * s > n { (n - s, true) } else { (s, false) };
        let mut c = Coalition::empty(n);
        for j in 0..k {
            let pick = rng.random_range(j..n);
            self.idx.swap(j, pick);
            c.insert(self.idx[j]);
        }
        if take_complement {
            c.complement()
        } else {
            c
        }
    }
}

pub fn sample_size<R: Rng + ?Sized>(q: &SizeDistribution, rng: &mut R) -> usize {
    SizeSampler::new(q).sample(rng)
}

pub fn sample_subset<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Coalition {
    SubsetSampler::new(n).sample(s, rng)
}

pub fn bernoulli_subset<R: Rng + ?Sized>(n: usize, w: f64, rng: &mut R) -> Coalition {
    let mut c = Coalition::empty(n);
    for i in 0..n {
        if rng.random::<f64>() < w {
            c.insert(i);
        }
    }
    c
}

/// How an estimator's coalitions are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingPlan {
    /// Size from `q`, then a uniform subset of that size.
    Sizes(SizeDistribution),
    /// Each player independently with probability `w`.
    Bernoulli(f64),
}

impl SamplingPlan {
    pub fn label(&self) -> String {
        match self {
            SamplingPlan::Sizes(q) => q.label().to_string(),
            SamplingPlan::Bernoulli(w) => format!("bernoulli:{w}"),
        }
    }
}

enum Draw {
    Sizes(SizeSampler, SubsetSampler),
    Bernoulli(f64),
}

/// A stream of coalitions, optionally emitting each draw's complement next.
pub struct CoalitionStream {
    n: usize,
    source: RandomSource,
    draw: Draw,
    paired: bool,
    pending: Option<Coalition>,
}

impl CoalitionStream {
    pub fn new(n: usize, plan: &SamplingPlan, source: RandomSource, paired: bool) -> Result<Self> {
        let draw = match plan {
            SamplingPlan::Sizes(q) => {
                if q.hi() > n {
                    return Err(Error::Sampling(format!(
                        "size support up to {} exceeds n = {n}",
                        q.hi()
                    )));
                }
                if paired && !q.is_symmetric(n) {
                    return Err(Error::Sampling(
                        "paired sampling needs q_s = q_(n-s)".into(),
                    ));
                }
                Draw::Sizes(SizeSampler::new(q), SubsetSampler::new(n))
            }
            SamplingPlan::Bernoulli(w) => {
                if !(*w > 0.0 && *w < 1.0) {
                    return Err(Error::Sampling(format!("Bernoulli rate must be in (0, 1), got {w}")));
                }
                if paired {
                    return Err(Error::Sampling(
                        "paired sampling is defined for size distributions only".into(),
                    ));
                }
                Draw::Bernoulli(*w)
            }
        };
        Ok(Self {
            n,
            source,
            draw,
            paired,
            pending: None,
        })
    }

    pub fn is_paired(&self) -> bool {
        self.paired
    }

    pub fn next_coalition(&mut self) -> Coalition {
        if let Some(c) = self.pending.take() {
            return c;
        }
        let rng = self.source.rng();
        let c = match &mut self.draw {
            Draw::Sizes(sizes, subsets) => {
                let s = sizes.sample(rng);
                subsets.sample(s, rng)
            }
            Draw::Bernoulli(w) => bernoulli_subset(self.n, *w, rng),
        };
        if self.paired {
            self.pending = Some(c.complement());
        }
        c
    }
}

impl Iterator for CoalitionStream {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        Some(self.next_coalition())
    }
}
