//! Semi-value weights, size distributions and dispersion constants.
//!
//! Sizes are 1-based throughout: `p(s)` and `m(s)` are defined for
//! `s = 1..=n` and read as zero outside that range, which is exactly the
//! `x/0 := 0` convention needed at the endpoints `s = 0` and `s = n`.

use std::fmt;
use std::path::Path;

use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{parse_err, Error, Result};

/// Tolerance on `sum(m) = 1` for constructed specs.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Explicit `p` vectors are renormalized when `sum(m)` is this close to 1.
pub const EXPLICIT_TOL: f64 = 1e-8;
/// Tolerance used to decide symmetry of `p` and `q`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// `ln C(n, k)` through log-gamma.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `C(n, k)` as a float; exact for the small arguments used in enumeration.
pub fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        // After step i the product is C(n, i + 1), an integer.
        acc = acc * (n - i) as f64 / (i + 1) as f64;
        if acc < 9.0e15 {
            acc = acc.round();
        }
    }
    acc
}

/// Harmonic number `H_k = 1 + 1/2 + ... + 1/k`.
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|j| 1.0 / j as f64).sum()
}

/// A semi-value family.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `p_s = B(beta + s - 1, alpha + n - s) / B(alpha, beta)`; `(1, 1)` is Shapley.
    BetaShapley { alpha: f64, beta: f64 },
    /// `p_s = w^(s-1) (1 - w)^(n-s)`; `w = 1/2` is the Banzhaf value.
    WeightedBanzhaf { w: f64 },
    /// User-supplied `p_1..p_n`.
    ExplicitP(Vec<f64>),
}

impl Family {
    pub fn shapley() -> Self {
        Family::BetaShapley {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn banzhaf() -> Self {
        Family::WeightedBanzhaf { w: 0.5 }
    }

    /// Parses `shapley`, `beta:<alpha>,<beta>`, `banzhaf:<w>` (plain
    /// `banzhaf` means `w = 1/2`) or `explicit:@<path>`.
    pub fn parse(input: &str) -> Result<Self> {
        let s = input.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head, rest) {
            ("shapley", None) => Ok(Family::shapley()),
            ("banzhaf", None) => Ok(Family::banzhaf()),
            ("banzhaf", Some(w)) => {
                let w = parse_f64("semi-value", input, w)?;
                Ok(Family::WeightedBanzhaf { w })
            }
            ("beta", Some(args)) => {
                let (a, b) = args
                    .split_once(',')
                    .ok_or_else(|| parse_err("semi-value", input, "expected beta:<alpha>,<beta>"))?;
                Ok(Family::BetaShapley {
                    alpha: parse_f64("semi-value", input, a)?,
                    beta: parse_f64("semi-value", input, b)?,
                })
            }
            ("explicit", Some(path)) => {
                let path = path
                    .strip_prefix('@')
                    .ok_or_else(|| parse_err("semi-value", input, "expected explicit:@<path>"))?;
                Family::read_explicit(path)
            }
            _ => Err(parse_err("semi-value", input, "unknown semi-value family")),
        }
    }

    /// Reads whitespace-separated `p_1 .. p_n` from a text file.
    pub fn read_explicit(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let p = text
            .split_whitespace()
            .map(|tok| parse_f64("explicit p value", tok, tok))
            .collect::<Result<Vec<_>>>()?;
        Ok(Family::ExplicitP(p))
    }

    /// Player count fixed by the family itself (explicit vectors only).
    pub fn fixed_n(&self) -> Option<usize> {
        match self {
            Family::ExplicitP(p) => Some(p.len()),
            _ => None,
        }
    }

    pub fn is_shapley(&self) -> bool {
        matches!(self, Family::BetaShapley { alpha, beta } if *alpha == 1.0 && *beta == 1.0)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            _ if self.is_shapley() => write!(f, "shapley"),
            Family::BetaShapley { alpha, beta } => write!(f, "beta:{alpha},{beta}"),
            Family::WeightedBanzhaf { w } => write!(f, "banzhaf:{w}"),
            Family::ExplicitP(_) => write!(f, "explicit"),
        }
    }
}

fn parse_f64(what: &'static str, input: &str, tok: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|e| parse_err(what, input, e.to_string()))
}

/// A semi-value instance on `n` players.
#[derive(Debug, Clone)]
pub struct SemiValueSpec {
    n: usize,
    family: Family,
    p: Vec<f64>,
    m: Vec<f64>,
    symmetric: bool,
}

/// Builds `p` and `m = C(n-1, s-1) p` for a family on `n` players.
pub fn build_semivalue(family: Family, n: usize) -> Result<SemiValueSpec> {
    if n < 2 {
        return Err(Error::InvalidSpec(format!("need n >= 2 players, got {n}")));
    }
    let log_choose: Vec<f64> = (1..=n).map(|s| ln_choose(n - 1, s - 1)).collect();
    let mut m = match &family {
        Family::BetaShapley { alpha, beta } => {
            if !(*alpha > 0.0 && alpha.is_finite() && *beta > 0.0 && beta.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "Beta Shapley needs alpha > 0 and beta > 0, got ({alpha}, {beta})"
                )));
            }
            let ln_norm = ln_beta(*alpha, *beta);
            (1..=n)
                .map(|s| {
                    let lp = ln_beta(beta + (s - 1) as f64, alpha + (n - s) as f64) - ln_norm;
                    (lp + log_choose[s - 1]).exp()
                })
                .collect::<Vec<_>>()
        }
        Family::WeightedBanzhaf { w } => {
            if !(*w > 0.0 && *w < 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "weighted Banzhaf needs 0 < w < 1, got {w}"
                )));
            }
            let (lw, l1w) = (w.ln(), (1.0 - w).ln());
            (1..=n)
                .map(|s| ((s - 1) as f64 * lw + (n - s) as f64 * l1w + log_choose[s - 1]).exp())
                .collect()
        }
        Family::ExplicitP(p) => {
            if p.len() != n {
                return Err(Error::InvalidSpec(format!(
                    "explicit p has {} entries but n = {n}",
                    p.len()
                )));
            }
            if let Some(bad) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "explicit p entries must be finite and >= 0, found {bad}"
                )));
            }
            let m: Vec<f64> = p
                .iter()
                .zip(&log_choose)
                .map(|(p, lc)| p * lc.exp())
                .collect();
            let total: f64 = m.iter().sum();
            if (total - 1.0).abs() > EXPLICIT_TOL {
                return Err(Error::InvalidSpec(format!(
                    "explicit p gives sum(m) = {total}, expected 1 within {EXPLICIT_TOL}"
                )));
            }
            m
        }
    };

    // The measure is a probability measure, so sum(m) = 1 up to rounding in
    // the log-space evaluation; renormalizing removes that rounding.
    let total: f64 = m.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::InvalidSpec(format!("weights sum to {total}")));
    }
    m.iter_mut().for_each(|v| *v /= total);
    let p: Vec<f64> = m
        .iter()
        .zip(&log_choose)
        .map(|(m, lc)| m * (-lc).exp())
        .collect();

    let symmetric = (0..n).all(|i| close(p[i], p[n - 1 - i], SYMMETRY_TOL));
    Ok(SemiValueSpec {
        n,
        family,
        p,
        m,
        symmetric,
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

impl SemiValueSpec {
    /// Parses a family descriptor and builds it for `n` players.
    pub fn from_descriptor(descriptor: &str, n: usize) -> Result<Self> {
        build_semivalue(Family::parse(descriptor)?, n)
    }

    pub fn shapley(n: usize) -> Result<Self> {
        build_semivalue(Family::shapley(), n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// `p_s` for `s = 1..=n`, zero otherwise.
    pub fn p(&self, s: usize) -> f64 {
        if (1..=self.n).contains(&s) {
            self.p[s - 1]
        } else {
            0.0
        }
    }

    /// `m_s = C(n-1, s-1) p_s` for `s = 1..=n`, zero otherwise.
    pub fn m(&self, s: usize) -> f64 {
        if (1..=self.n).contains(&s) {
            self.m[s - 1]
        } else {
            0.0
        }
    }

    pub fn p_vec(&self) -> &[f64] {
        &self.p
    }

    pub fn m_vec(&self) -> &[f64] {
        &self.m
    }

    /// `p_s = p_{n+1-s}` for all `s`.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `m_1 - m_n`, the common entry of `E[z_S]`.
    pub fn endpoint_gap(&self) -> f64 {
        self.m(1) - self.m(self.n)
    }

    pub fn label(&self) -> String {
        self.family.to_string()
    }

    /// `r_s = sqrt(n (m_s^2 / s + m_{s+1}^2 / (n - s)))` for `0 <= s <= n`,
    /// with `x/0 := 0`. So `r_0 = m_1` and `r_n = m_n`.
    pub fn size_root(&self, s: usize) -> f64 {
        let n = self.n;
        let inner = if s > 0 { self.m(s) / (s as f64).sqrt() } else { 0.0 };
        let outer = if s < n {
            self.m(s + 1) / ((n - s) as f64).sqrt()
        } else {
            0.0
        };
        (n as f64).sqrt() * inner.hypot(outer)
    }
}

/// A probability vector over coalition sizes `lo..=hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeDistribution {
    lo: usize,
    hi: usize,
    probs: Vec<f64>,
    label: String,
}

impl SizeDistribution {
    /// Validates an already-normalized vector.
    pub fn new(lo: usize, hi: usize, probs: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if hi < lo || probs.len() != hi - lo + 1 {
            return Err(Error::InvalidDistribution(format!(
                "support [{lo}, {hi}] does not match {} probabilities",
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "probabilities must be finite and >= 0, found {bad}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self {
            lo,
            hi,
            probs,
            label: label.into(),
        })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(
        lo: usize,
        hi: usize,
        weights: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(lo, hi, probs, label)
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn support(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Probability of size `s`, zero outside the support.
    pub fn prob(&self, s: usize) -> f64 {
        if (self.lo..=self.hi).contains(&s) {
            self.probs[s - self.lo]
        } else {
            0.0
        }
    }

    /// `q_s = q_{n-s}` over the support (which must itself be symmetric).
    pub fn is_symmetric(&self, n: usize) -> bool {
        self.lo + self.hi == n
            && self
                .support()
                .all(|s| close(self.prob(s), self.prob(n - s), SYMMETRY_TOL))
    }

    /// True for the `[0, n]` support used by the MSR estimators.
    pub fn includes_endpoints(&self) -> bool {
        self.lo == 0
    }

    fn check_support(&self, n: usize) -> Result<()> {
        let ok = (self.lo == 1 && self.hi + 1 == n) || (self.lo == 0 && self.hi == n);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!(
                "support [{}, {}] is neither [1, n-1] nor [0, n] for n = {n}",
                self.lo, self.hi
            )))
        }
    }
}

impl fmt::Display for SizeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// The dispersion-minimizing distribution on `[1, n-1]`: `q*_s ∝ r_s`.
pub fn q_star(spec: &SemiValueSpec) -> SizeDistribution {
    let n = spec.n();
    let roots: Vec<f64> = (1..n).map(|s| spec.size_root(s)).collect();
    SizeDistribution::from_weights(1, n - 1, roots, "qstar")
        .expect("size roots of a valid spec are positive")
}

/// The MSR distribution on `[0, n]`: `q̄_s ∝ r_s`, endpoints included.
pub fn q_msr(spec: &SemiValueSpec) -> SizeDistribution {
    let n = spec.n();
    let roots: Vec<f64> = (0..=n).map(|s| spec.size_root(s)).collect();
    SizeDistribution::from_weights(0, n, roots, "msr")
        .expect("size roots of a valid spec are positive")
}

/// Uniform over `[1, n-1]` (leverage-score kernelSHAP).
pub fn q_uniform(n: usize) -> SizeDistribution {
    assert!(n >= 2);
    SizeDistribution::from_weights(1, n - 1, vec![1.0; n - 1], "uniform")
        .expect("uniform weights are positive")
}

/// `q_s = n / (2 H_{n-1} s (n - s))`, the vanilla kernelSHAP and SHAP-IQ choice.
pub fn q_kernel(n: usize) -> SizeDistribution {
    assert!(n >= 2);
    let norm = 2.0 * harmonic(n - 1);
    let probs = (1..n)
        .map(|s| n as f64 / (norm * s as f64 * (n - s) as f64))
        .collect::<Vec<_>>();
    SizeDistribution::from_weights(1, n - 1, probs, "kernel").expect("kernel weights are positive")
}

/// `D(q) = sum_s r_s^2 / q_s`; over `[0, n]` this is `D^MSR(q)`.
pub fn dispersion(q: &SizeDistribution, spec: &SemiValueSpec) -> Result<f64> {
    q.check_support(spec.n())?;
    let mut total = 0.0;
    for s in q.support() {
        let r = spec.size_root(s);
        if r == 0.0 {
            continue;
        }
        let qs = q.prob(s);
        if qs == 0.0 {
            return Err(Error::InfiniteDispersion { size: s });
        }
        total += r * r / qs;
    }
    Ok(total)
}

/// `D* = (sum_{s=1}^{n-1} r_s)^2`, the minimum of `D` over `[1, n-1]`.
pub fn d_star(spec: &SemiValueSpec) -> f64 {
    let total: f64 = (1..spec.n()).map(|s| spec.size_root(s)).sum();
    total * total
}

/// `D^MSR = (sum_{s=0}^{n} r_s)^2 = (m_1 + sqrt(D*) + m_n)^2`.
pub fn d_msr(spec: &SemiValueSpec) -> f64 {
    let total: f64 = (0..=spec.n()).map(|s| spec.size_root(s)).sum();
    total * total
}

/// `q̃_s ∝ r_s^2 / q_s`: the law under which `E||u_S z_S||^2 = n D(q) E[u^2]`.
pub fn tilde_q(q: &SizeDistribution, spec: &SemiValueSpec) -> Result<SizeDistribution> {
    q.check_support(spec.n())?;
    let mut weights = Vec::with_capacity(q.probs().len());
    for s in q.support() {
        let r = spec.size_root(s);
        let qs = q.prob(s);
        if r == 0.0 {
            weights.push(0.0);
        } else if qs == 0.0 {
            return Err(Error::InfiniteDispersion { size: s });
        } else {
            weights.push(r * r / qs);
        }
    }
    SizeDistribution::from_weights(q.lo(), q.hi(), weights, format!("tilde({})", q.label()))
}

/// Per-size coefficients of `z_S`: `(z_S)_i = a_s` for members and `-b_s`
/// for non-members, with `a_s = n m_s / (q_s s)` and
/// `b_s = n m_{s+1} / (q_s (n - s))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZCoefficients {
    n: usize,
    lo: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

pub fn z_coefficients(q: &SizeDistribution, spec: &SemiValueSpec) -> Result<ZCoefficients> {
    let n = spec.n();
    q.check_support(n)?;
    let mut a = Vec::with_capacity(q.probs().len());
    let mut b = Vec::with_capacity(q.probs().len());
    for s in q.support() {
        let qs = q.prob(s);
        if qs == 0.0 {
            if spec.size_root(s) > 0.0 {
                return Err(Error::InfiniteDispersion { size: s });
            }
            a.push(0.0);
            b.push(0.0);
            continue;
        }
        let nf = n as f64;
        a.push(if s > 0 {
            nf * spec.m(s) / (qs * s as f64)
        } else {
            0.0
        });
        b.push(if s < n {
            nf * spec.m(s + 1) / (qs * (n - s) as f64)
        } else {
            0.0
        });
    }
    Ok(ZCoefficients { n, lo: q.lo(), a, b })
}

impl ZCoefficients {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.lo + self.a.len() - 1
    }

    /// `(a_s, b_s)`; sizes outside the support give `(0, 0)`.
    pub fn get(&self, s: usize) -> (f64, f64) {
        if self.support().contains(&s) {
            (self.a[s - self.lo], self.b[s - self.lo])
        } else {
            (0.0, 0.0)
        }
    }

    /// `||z_S||^2 = s a_s^2 + (n - s) b_s^2`.
    pub fn norm_sq(&self, s: usize) -> f64 {
        let (a, b) = self.get(s);
        s as f64 * a * a + (self.n - s) as f64 * b * b
    }

    /// `sum_{|S| = s} (z_S)_i`, identical for every player `i`.
    pub fn size_class_sum(&self, s: usize) -> f64 {
        let (a, b) = self.get(s);
        let n = self.n;
        let members = if s >= 1 { choose(n - 1, s - 1) } else { 0.0 };
        let outsiders = if s < n { choose(n - 1, s) } else { 0.0 };
        members * a - outsiders * b
    }
}
