//! Streaming semi-value estimators with `Θ(n)` state.
//!
//! Every estimator consumes `(S, u_S)` pairs through [`Estimator::ingest`]
//! and produces a snapshot through [`Estimator::finalize`]. Estimators that
//! close with an offset term need `u_[n]` and `u_∅`, passed as [`Endpoints`].
//!
//! Descriptor grammar: `base`, `gamma:<value>`, `adalina`, `adalina-all`,
//! `kernel:vanilla|leverage|modified`, `shapiq`, `ame:<w>`, `msr`, each with
//! an optional `+paired` suffix (not allowed for `ame`).

use std::fmt;
use std::str::FromStr;

use crate::coalition::Coalition;
use crate::error::{parse_err, Error, Result};
use crate::games::UtilityOracle;
use crate::sampling::{CoalitionStream, RandomSource, SamplingPlan};
use crate::weights::{
    choose, q_kernel, q_msr, q_star, q_uniform, z_coefficients, Family, SemiValueSpec,
    SizeDistribution, ZCoefficients,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoints {
    pub u_full: f64,
    pub u_empty: f64,
}

pub trait Estimator: Send {
    fn n(&self) -> usize;
    fn ingest(&mut self, s: &Coalition, u: f64) -> Result<()>;
    /// Current estimate; does not consume or modify the running state.
    fn finalize(&self, endpoints: Option<Endpoints>) -> Result<Vec<f64>>;
    fn samples(&self) -> u64;
    fn gamma_hat(&self) -> Option<f64>;
    /// Number of `f64` slots held, independent of the sample count.
    fn state_len(&self) -> usize;
}

#[inline]
fn running(x: &mut f64, new: f64, inv_t: f64) {
    *x = (1.0 - inv_t) * *x + inv_t * new;
}

/// Constant subtracted from `u_S` before weighting by `z_S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Residual {
    Zero,
    Fixed(f64),
    /// `γ = u_∅`
    Empty,
    /// `γ = γ̂`, the running mean of `u_S`
    Adaptive,
}

/// Size-dependent term subtracted from `u_S`.
#[derive(Clone)]
pub enum SizeShift {
    None,
    /// `λ s` with `λ = (u_[n] - u_∅) / n`, applied at finalize.
    KernelLambda,
    /// `f(s)` applied at ingest.
    Function(std::sync::Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for SizeShift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeShift::None => f.write_str("None"),
            SizeShift::KernelLambda => f.write_str("KernelLambda"),
            SizeShift::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// `mean((u - γ - shift(s)) z) + offset`, covering every estimator except AME.
#[derive(Debug, Clone)]
pub struct LinearEstimator {
    n: usize,
    z: ZCoefficients,
    m1: f64,
    mn: f64,
    residual: Residual,
    shift: SizeShift,
    uses_offset: bool,
    /// Bound on `‖(u - λ s) z‖` checked at ingest, given `sup |u|`.
    norm_check: Option<(f64, f64)>,
    t: u64,
    phi_hat: Vec<f64>,
    v_hat: Vec<f64>,
    sz_hat: Vec<f64>,
    gamma_hat: f64,
}

impl LinearEstimator {
    pub fn new(
        spec: &SemiValueSpec,
        q: &SizeDistribution,
        residual: Residual,
        shift: SizeShift,
        uses_offset: bool,
    ) -> Result<Self> {
        let n = spec.n();
        if uses_offset && q.includes_endpoints() {
            return Err(Error::Estimator(
                "offset estimators sample sizes in [1, n-1]".into(),
            ));
        }
        let z = z_coefficients(q, spec)?;
        Ok(Self {
            n,
            z,
            m1: spec.m(1),
            mn: spec.m(n),
            residual,
            uses_offset,
            norm_check: None,
            t: 0,
            phi_hat: vec![0.0; n],
            v_hat: if residual == Residual::Zero { Vec::new() } else { vec![0.0; n] },
            sz_hat: if matches!(shift, SizeShift::KernelLambda) { vec![0.0; n] } else { Vec::new() },
            gamma_hat: 0.0,
            shift,
        })
    }

    /// Rejects samples with `(|u| + (2C/n) s) ‖z_S‖ > limit`.
    pub fn with_norm_check(mut self, sup: f64, limit: f64) -> Self {
        self.norm_check = Some((sup, limit));
        self
    }

    fn gamma(&self, endpoints: Option<Endpoints>) -> Result<f64> {
        Ok(match self.residual {
            Residual::Zero => 0.0,
            Residual::Fixed(g) => g,
            Residual::Adaptive => self.gamma_hat,
            Residual::Empty => need(endpoints)?.u_empty,
        })
    }
}

fn need(endpoints: Option<Endpoints>) -> Result<Endpoints> {
    endpoints.ok_or_else(|| Error::Estimator("this estimator needs u([n]) and u(∅) to finalize".into()))
}

impl Estimator for LinearEstimator {
    fn n(&self) -> usize {
        self.n
    }

    fn ingest(&mut self, s: &Coalition, u: f64) -> Result<()> {
        let size = s.len();
        if !self.z.support().contains(&size) {
            return Err(Error::Estimator(format!(
                "coalition of size {size} outside the sampling support"
            )));
        }
        if let Some((sup, limit)) = self.norm_check {
            let bound = (u.abs() + 2.0 * sup * size as f64 / self.n as f64) * self.z.norm_sq(size).sqrt();
            if bound > limit * (1.0 + 1e-12) {
                return Err(Error::Estimator(format!(
                    "per-sample norm bound {bound} exceeds {limit}"
                )));
            }
        }
        let u = match &self.shift {
            SizeShift::Function(f) => u - f(size),
            _ => u,
        };
        self.t += 1;
        let inv_t = 1.0 / self.t as f64;
        let (a, b) = self.z.get(size);
        let track_v = !self.v_hat.is_empty();
        let track_s = !self.sz_hat.is_empty();
        let sf = size as f64;
        for i in 0..self.n {
            let zi = if s.contains(i) { a } else { -b };
            running(&mut self.phi_hat[i], u * zi, inv_t);
            if track_v {
                running(&mut self.v_hat[i], zi, inv_t);
            }
            if track_s {
                running(&mut self.sz_hat[i], sf * zi, inv_t);
            }
        }
        running(&mut self.gamma_hat, u, inv_t);
        Ok(())
    }

    fn finalize(&self, endpoints: Option<Endpoints>) -> Result<Vec<f64>> {
        if self.t == 0 {
            return Err(Error::Estimator("finalize before any sample".into()));
        }
        let gamma = self.gamma(endpoints)?;
        let lambda = match self.shift {
            SizeShift::KernelLambda => {
                let e = need(endpoints)?;
                (e.u_full - e.u_empty) / self.n as f64
            }
            _ => 0.0,
        };
        let offset = if self.uses_offset {
            let e = need(endpoints)?;
            self.mn * (e.u_full - gamma) - self.m1 * (e.u_empty - gamma)
        } else {
            0.0
        };
        Ok((0..self.n)
            .map(|i| {
                let mut v = self.phi_hat[i] + offset;
                if !self.v_hat.is_empty() {
                    v -= gamma * self.v_hat[i];
                }
                if !self.sz_hat.is_empty() {
                    v -= lambda * self.sz_hat[i];
                }
                v
            })
            .collect())
    }

    fn samples(&self) -> u64 {
        self.t
    }

    fn gamma_hat(&self) -> Option<f64> {
        (self.residual == Residual::Adaptive).then_some(self.gamma_hat)
    }

    fn state_len(&self) -> usize {
        self.phi_hat.len() + self.v_hat.len() + self.sz_hat.len() + 1
    }
}

/// `X_i = u/w` for members, `-u/(1-w)` otherwise, over Bernoulli(`w`) subsets.
#[derive(Debug, Clone)]
pub struct AmeEstimator {
    n: usize,
    w: f64,
    norm_sq_limit: Option<f64>,
    t: u64,
    phi_hat: Vec<f64>,
}

impl AmeEstimator {
    pub fn new(n: usize, w: f64) -> Result<Self> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Estimator(format!("AME needs 0 < w < 1, got {w}")));
        }
        Ok(Self {
            n,
            w,
            norm_sq_limit: None,
            t: 0,
            phi_hat: vec![0.0; n],
        })
    }

    /// Rejects samples with `‖X‖^2 > n C^2 / min(w, 1-w)^2`.
    pub fn with_sup_bound(mut self, c: f64) -> Self {
        let lo = self.w.min(1.0 - self.w);
        self.norm_sq_limit = Some(self.n as f64 * c * c / (lo * lo));
        self
    }
}

impl Estimator for AmeEstimator {
    fn n(&self) -> usize {
        self.n
    }

    fn ingest(&mut self, s: &Coalition, u: f64) -> Result<()> {
        let (a, b) = (u / self.w, -u / (1.0 - self.w));
        if let Some(limit) = self.norm_sq_limit {
            let k = s.len() as f64;
            let norm_sq = k * a * a + (self.n as f64 - k) * b * b;
            if norm_sq > limit * (1.0 + 1e-12) {
                return Err(Error::Estimator(format!(
                    "AME sample norm^2 {norm_sq} exceeds {limit}"
                )));
            }
        }
        self.t += 1;
        let inv_t = 1.0 / self.t as f64;
        for i in 0..self.n {
            running(&mut self.phi_hat[i], if s.contains(i) { a } else { b }, inv_t);
        }
        Ok(())
    }

    fn finalize(&self, _: Option<Endpoints>) -> Result<Vec<f64>> {
        if self.t == 0 {
            return Err(Error::Estimator("finalize before any sample".into()));
        }
        Ok(self.phi_hat.clone())
    }

    fn samples(&self) -> u64 {
        self.t
    }

    fn gamma_hat(&self) -> Option<f64> {
        None
    }

    fn state_len(&self) -> usize {
        self.phi_hat.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelVariant {
    Vanilla,
    Leverage,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Base,
    Gamma(f64),
    Adalina,
    AdalinaAll,
    Kernel(KernelVariant),
    ShapIq,
    Ame(f64),
    Msr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorDescriptor {
    pub kind: EstimatorKind,
    pub paired: bool,
}

impl EstimatorDescriptor {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, paired: false }
    }

    pub fn paired(mut self) -> Self {
        self.paired = true;
        self
    }

    pub fn parse(input: &str) -> Result<Self> {
        let s = input.trim();
        let (body, paired) = match s.strip_suffix("+paired") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| parse_err("estimator", input, e.to_string()))
        };
        let kind = match body.split_once(':') {
            None => match body {
                "base" => EstimatorKind::Base,
                "adalina" => EstimatorKind::Adalina,
                "adalina-all" => EstimatorKind::AdalinaAll,
                "shapiq" => EstimatorKind::ShapIq,
                "msr" => EstimatorKind::Msr,
                _ => return Err(parse_err("estimator", input, "unknown estimator")),
            },
            Some(("gamma", v)) => EstimatorKind::Gamma(num(v)?),
            Some(("ame", v)) => {
                let w = num(v)?;
                if !(w > 0.0 && w < 1.0) {
                    return Err(parse_err("estimator", input, "AME needs 0 < w < 1"));
                }
                EstimatorKind::Ame(w)
            }
            Some(("kernel", v)) => EstimatorKind::Kernel(match v {
                "vanilla" => KernelVariant::Vanilla,
                "leverage" => KernelVariant::Leverage,
                "modified" => KernelVariant::Modified,
                _ => return Err(parse_err("estimator", input, "unknown kernel variant")),
            }),
            Some(_) => return Err(parse_err("estimator", input, "unknown estimator")),
        };
        if paired && matches!(kind, EstimatorKind::Ame(_)) {
            return Err(parse_err("estimator", input, "AME draws Bernoulli subsets and cannot be paired"));
        }
        Ok(Self { kind, paired })
    }

    /// Whether finalize needs `u_[n]` and `u_∅` (two extra queries).
    pub fn needs_endpoints(&self) -> bool {
        !matches!(
            self.kind,
            EstimatorKind::AdalinaAll | EstimatorKind::Ame(_) | EstimatorKind::Msr
        )
    }

    pub fn size_distribution(&self, spec: &SemiValueSpec) -> Option<SizeDistribution> {
        let n = spec.n();
        Some(match self.kind {
            EstimatorKind::Base
            | EstimatorKind::Gamma(_)
            | EstimatorKind::Adalina
            | EstimatorKind::Kernel(KernelVariant::Modified) => q_star(spec),
            EstimatorKind::AdalinaAll | EstimatorKind::Msr => q_msr(spec),
            EstimatorKind::Kernel(KernelVariant::Vanilla) | EstimatorKind::ShapIq => q_kernel(n),
            EstimatorKind::Kernel(KernelVariant::Leverage) => q_uniform(n),
            EstimatorKind::Ame(_) => return None,
        })
    }

    pub fn plan(&self, spec: &SemiValueSpec) -> Result<SamplingPlan> {
        self.validate(spec)?;
        Ok(match self.kind {
            EstimatorKind::Ame(w) => SamplingPlan::Bernoulli(w),
            _ => SamplingPlan::Sizes(self.size_distribution(spec).expect("size-based estimator")),
        })
    }

    pub fn validate(&self, spec: &SemiValueSpec) -> Result<()> {
        match self.kind {
            EstimatorKind::Kernel(_) if !spec.family().is_shapley() => {
                return Err(Error::Estimator(format!(
                    "{self} approximates the Shapley value only, got {}",
                    spec.label()
                )))
            }
            EstimatorKind::Ame(w) => match spec.family() {
                Family::WeightedBanzhaf { w: sw } if (sw - w).abs() <= 1e-12 => {}
                _ => {
                    return Err(Error::Estimator(format!(
                        "{self} estimates banzhaf:{w}, got {}",
                        spec.label()
                    )))
                }
            },
            _ => {}
        }
        if self.paired {
            let q = self.size_distribution(spec).expect("paired estimators are size-based");
            if !spec.is_symmetric() || !q.is_symmetric(spec.n()) {
                return Err(Error::Estimator(format!(
                    "{self} needs a symmetric semi-value, got {}",
                    spec.label()
                )));
            }
        }
        Ok(())
    }

    /// Metadata warnings for a valid but unguaranteed combination.
    pub fn warnings(&self, spec: &SemiValueSpec) -> Vec<String> {
        let mut w = Vec::new();
        if self.kind == EstimatorKind::Adalina && (spec.m(1) - spec.m(spec.n())).abs() > 1e-12 {
            w.push(format!(
                "adalina on {} (m_1 != m_n): no MSE improvement guarantee",
                spec.label()
            ));
        }
        w
    }

    /// Builds the estimator; `sup_bound` enables the per-sample norm checks.
    pub fn build(&self, spec: &SemiValueSpec, sup_bound: Option<f64>) -> Result<Box<dyn Estimator>> {
        self.validate(spec)?;
        let n = spec.n();
        if let EstimatorKind::Ame(w) = self.kind {
            let mut e = AmeEstimator::new(n, w)?;
            if let Some(c) = sup_bound {
                e = e.with_sup_bound(c);
            }
            return Ok(Box::new(e));
        }
        let q = self.size_distribution(spec).expect("size-based estimator");
        let (residual, shift, offset) = match self.kind {
            EstimatorKind::Base => (Residual::Zero, SizeShift::None, true),
            EstimatorKind::Gamma(g) => (Residual::Fixed(g), SizeShift::None, true),
            EstimatorKind::Adalina => (Residual::Adaptive, SizeShift::None, true),
            EstimatorKind::AdalinaAll => (Residual::Adaptive, SizeShift::None, false),
            EstimatorKind::Msr => (Residual::Zero, SizeShift::None, false),
            EstimatorKind::ShapIq => (Residual::Empty, SizeShift::None, true),
            EstimatorKind::Kernel(KernelVariant::Vanilla) => (Residual::Zero, SizeShift::None, true),
            EstimatorKind::Kernel(_) => (Residual::Zero, SizeShift::KernelLambda, true),
            EstimatorKind::Ame(_) => unreachable!(),
        };
        let mut est = LinearEstimator::new(spec, &q, residual, shift, offset)?;
        if let (EstimatorKind::Kernel(KernelVariant::Leverage), Some(c)) = (self.kind, sup_bound) {
            est = est.with_norm_check(c, 6.0 * n as f64 * c);
        }
        Ok(Box::new(est))
    }
}

impl FromStr for EstimatorDescriptor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for EstimatorDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EstimatorKind::Base => write!(f, "base")?,
            EstimatorKind::Gamma(g) => write!(f, "gamma:{g}")?,
            EstimatorKind::Adalina => write!(f, "adalina")?,
            EstimatorKind::AdalinaAll => write!(f, "adalina-all")?,
            EstimatorKind::Kernel(v) => write!(
                f,
                "kernel:{}",
                match v {
                    KernelVariant::Vanilla => "vanilla",
                    KernelVariant::Leverage => "leverage",
                    KernelVariant::Modified => "modified",
                }
            )?,
            EstimatorKind::ShapIq => write!(f, "shapiq")?,
            EstimatorKind::Ame(w) => write!(f, "ame:{w}")?,
            EstimatorKind::Msr => write!(f, "msr")?,
        }
        if self.paired {
            write!(f, "+paired")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateMeta {
    pub estimator: String,
    pub q: String,
    pub paired: bool,
    pub seed: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub phi_hat: Vec<f64>,
    /// Oracle counter delta when the snapshot was taken.
    pub queries_used: u64,
    pub samples: u64,
    pub gamma_hat: Option<f64>,
    /// Wall time from the start of the run to this snapshot.
    pub elapsed_ms: f64,
    pub meta: EstimateMeta,
}

/// Draws `samples` coalitions from a stream seeded by `source`, snapshotting
/// after each count in `checkpoints` (ascending, last equal to `samples`).
///
/// Endpoint queries happen once, at the first snapshot.
pub fn run_estimator(
    descriptor: &EstimatorDescriptor,
    spec: &SemiValueSpec,
    oracle: &UtilityOracle,
    source: RandomSource,
    checkpoints: &[u64],
) -> Result<Vec<Estimate>> {
    let n = spec.n();
    if oracle.n() != n {
        return Err(Error::InvalidSpec("oracle and spec disagree on n".into()));
    }
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] == 0 {
        return Err(Error::Estimator(
            "checkpoints must be positive and strictly increasing".into(),
        ));
    }
    let plan = descriptor.plan(spec)?;
    let seed = source.seed();
    let mut stream = CoalitionStream::new(n, &plan, source, descriptor.paired)?;
    let mut est = descriptor.build(spec, oracle.sup_bound())?;
    let meta = EstimateMeta {
        estimator: descriptor.to_string(),
        q: plan.label(),
        paired: descriptor.paired,
        seed,
        warnings: descriptor.warnings(spec),
    };
    let start = oracle.query_count();
    let clock = std::time::Instant::now();
    let mut endpoints = None;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut t = 0u64;
    for &cp in checkpoints {
        while t < cp {
            let c = stream.next_coalition();
            let u = oracle.evaluate(&c);
            est.ingest(&c, u)?;
            t += 1;
        }
        if descriptor.needs_endpoints() && endpoints.is_none() {
            endpoints = Some(Endpoints {
                u_full: oracle.evaluate(&Coalition::full(n)),
                u_empty: oracle.evaluate(&Coalition::empty(n)),
            });
        }
        out.push(Estimate {
            phi_hat: est.finalize(endpoints)?,
            queries_used: oracle.query_count() - start,
            samples: t,
            gamma_hat: est.gamma_hat(),
            elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
            meta: meta.clone(),
        });
    }
    Ok(out)
}

/// Exact expectation of the finalized estimate after `t ∈ {1, 2}` samples,
/// by enumerating every sample path and running the estimator on it.
pub fn exact_expectation(
    descriptor: &EstimatorDescriptor,
    spec: &SemiValueSpec,
    oracle: &UtilityOracle,
    t: usize,
) -> Result<Vec<f64>> {
    let n = spec.n();
    if n > 12 {
        return Err(Error::TooLarge {
            what: "estimator expectation",
            n,
            limit: 12,
        });
    }
    if !(1..=2).contains(&t) {
        return Err(Error::Estimator(format!("exact expectation supports t = 1 or 2, got {t}")));
    }
    let plan = descriptor.plan(spec)?;
    let masks = 1u64 << n;
    let values: Vec<f64> = (0..masks)
        .map(|m| oracle.evaluate(&Coalition::from_mask(n, m)))
        .collect();
    let prob: Vec<f64> = (0..masks)
        .map(|m| {
            let s = m.count_ones() as usize;
            match &plan {
                SamplingPlan::Sizes(q) => q.prob(s) / choose(n, s),
                SamplingPlan::Bernoulli(w) => w.powi(s as i32) * (1.0 - w).powi((n - s) as i32),
            }
        })
        .collect();
    let endpoints = Some(Endpoints {
        u_full: values[(masks - 1) as usize],
        u_empty: values[0],
    });
    let full = masks - 1;
    let mut acc = vec![0.0; n];
    let mut add = |path: &[u64], weight: f64| -> Result<()> {
        let mut est = descriptor.build(spec, None)?;
        for &m in path {
            est.ingest(&Coalition::from_mask(n, m), values[m as usize])?;
        }
        for (a, v) in acc.iter_mut().zip(est.finalize(endpoints)?) {
            *a += weight * v;
        }
        Ok(())
    };
    for m1 in (0..masks).filter(|m| prob[*m as usize] > 0.0) {
        let p1 = prob[m1 as usize];
        match (t, descriptor.paired) {
            (1, _) => add(&[m1], p1)?,
            (_, true) => add(&[m1, full & !m1], p1)?,
            _ => {
                for m2 in (0..masks).filter(|m| prob[*m as usize] > 0.0) {
                    add(&[m1, m2], p1 * prob[m2 as usize])?;
                }
            }
        }
    }
    Ok(acc)
}
