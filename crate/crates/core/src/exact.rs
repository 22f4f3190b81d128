//! Brute-force ground truth and closed-form theoretical quantities.

use rayon::prelude::*;

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::games::UtilityOracle;
use crate::weights::{choose, dispersion, q_star, tilde_q, z_coefficients, SemiValueSpec, SizeDistribution};

/// Largest `n` accepted by [`exact_semivalue`].
pub const MAX_EXACT_N: usize = 22;
/// Largest `n` accepted by [`expected_single_sample`].
pub const MAX_EXPECTATION_N: usize = 18;

const BLOCK_BITS: u32 = 12;

/// Sums of utilities grouped by coalition size, collected in one pass.
#[derive(Debug, Clone)]
pub struct SizeSums {
    n: usize,
    /// `sum_{|S|=s} u_S`
    pub first: Vec<f64>,
    /// `sum_{|S|=s} u_S^2`
    pub second: Vec<f64>,
    /// `sum_{|S|=s} u_S u_{[n]\S}`
    pub cross: Vec<f64>,
    /// `member[i * (n + 1) + s] = sum_{|S|=s, i ∈ S} u_S`
    member: Vec<f64>,
}

impl SizeSums {
    fn zeros(n: usize) -> Self {
        Self {
            n,
            first: vec![0.0; n + 1],
            second: vec![0.0; n + 1],
            cross: vec![0.0; n + 1],
            member: vec![0.0; n * (n + 1)],
        }
    }

    fn add(&mut self, other: &SizeSums) {
        let pairs = [
            (&mut self.first, &other.first),
            (&mut self.second, &other.second),
            (&mut self.cross, &other.cross),
            (&mut self.member, &other.member),
        ];
        for (dst, src) in pairs {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    fn record(&mut self, mask: u64, u: f64, u_comp: f64) {
        let s = mask.count_ones() as usize;
        let stride = self.n + 1;
        self.first[s] += u;
        self.second[s] += u * u;
        self.cross[s] += u * u_comp;
        let mut rest = mask;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            self.member[i * stride + s] += u;
        }
    }

    pub fn member(&self, i: usize, s: usize) -> f64 {
        self.member[i * (self.n + 1) + s]
    }
}

/// Moments of `u_S` under a size distribution `q` and its companion `q̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `E_q[u_S]`
    pub mean: f64,
    /// `E_q[u_S^2]`
    pub second: f64,
    /// `E_q̃[u_S]`, the MSE-optimal constant control variate
    pub tilde_mean: f64,
    /// `E_q̃[u_S^2]`
    pub tilde_second: f64,
    /// `E_q̃[u_S u_{[n]\S}]`
    pub tilde_cross: f64,
    /// `D(q)`, or `D^MSR(q)` for `[0, n]` support
    pub dispersion: f64,
}

#[derive(Debug, Clone)]
pub struct ExactReport {
    pub n: usize,
    pub phi: Vec<f64>,
    pub varphi: Vec<f64>,
    pub u_full: f64,
    pub u_empty: f64,
    /// `E_q̃[u_S]` under the report's `q` (equal to `E_{q*}[u_S]` under `q*`)
    pub gamma_star: f64,
    /// `E_q[u_S^2]`
    pub second_moment: f64,
    /// `E_q̃[u_S^2]`
    pub tilde_second_moment: f64,
    /// `E_q̃[u_S u_{[n]\S}]`
    pub cross_moment: f64,
    pub phi_norm_sq: f64,
    pub varphi_norm_sq: f64,
    pub q: SizeDistribution,
    pub sums: SizeSums,
}

/// Exact semi-value and moments under `q*`.
pub fn exact_semivalue(oracle: &UtilityOracle, spec: &SemiValueSpec) -> Result<ExactReport> {
    exact_semivalue_with(oracle, spec, &q_star(spec))
}

/// Exact semi-value with moments under a supplied `q`; one query per subset.
pub fn exact_semivalue_with(
    oracle: &UtilityOracle,
    spec: &SemiValueSpec,
    q: &SizeDistribution,
) -> Result<ExactReport> {
    let n = spec.n();
    if oracle.n() != n {
        return Err(Error::InvalidSpec(format!(
            "oracle has n = {} but spec has n = {n}",
            oracle.n()
        )));
    }
    if n > MAX_EXACT_N {
        return Err(Error::TooLarge {
            what: "exact enumeration",
            n,
            limit: MAX_EXACT_N,
        });
    }
    let sums = enumerate(oracle, n);

    let mut phi = vec![0.0; n];
    for (i, out) in phi.iter_mut().enumerate() {
        let mut acc = 0.0;
        for s in 0..=n {
            let inside = sums.member(i, s);
            let outside = sums.first[s] - inside;
            acc += spec.p(s) * inside - spec.p(s + 1) * outside;
        }
        *out = acc;
    }
    let u_full = sums.first[n];
    let u_empty = sums.first[0];
    let shift = spec.m(n) * u_full - spec.m(1) * u_empty;
    let varphi: Vec<f64> = phi.iter().map(|v| v - shift).collect();

    let mo = moments(&sums, spec, q)?;
    Ok(ExactReport {
        n,
        phi_norm_sq: phi.iter().map(|v| v * v).sum(),
        varphi_norm_sq: varphi.iter().map(|v| v * v).sum(),
        phi,
        varphi,
        u_full,
        u_empty,
        gamma_star: mo.tilde_mean,
        second_moment: mo.second,
        tilde_second_moment: mo.tilde_second,
        cross_moment: mo.tilde_cross,
        q: q.clone(),
        sums,
    })
}

fn enumerate(oracle: &UtilityOracle, n: usize) -> SizeSums {
    let full: u64 = (1u64 << n) - 1;
    let half: u64 = 1u64 << (n - 1);
    let block = 1u64 << BLOCK_BITS;
    let blocks = half.div_ceil(block);
    let partials: Vec<SizeSums> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = SizeSums::zeros(n);
            for mask in b * block..((b + 1) * block).min(half) {
                let comp = full & !mask;
                let u = oracle.evaluate(&Coalition::from_mask(n, mask));
                let uc = oracle.evaluate(&Coalition::from_mask(n, comp));
                acc.record(mask, u, uc);
                acc.record(comp, uc, u);
            }
            acc
        })
        .collect();
    let mut total = SizeSums::zeros(n);
    for p in &partials {
        total.add(p);
    }
    total
}

fn moments(sums: &SizeSums, spec: &SemiValueSpec, q: &SizeDistribution) -> Result<Moments> {
    let n = spec.n();
    let qt = tilde_q(q, spec)?;
    let mut mo = Moments {
        mean: 0.0,
        second: 0.0,
        tilde_mean: 0.0,
        tilde_second: 0.0,
        tilde_cross: 0.0,
        dispersion: dispersion(q, spec)?,
    };
    for s in q.support() {
        let c = choose(n, s);
        let (w, wt) = (q.prob(s) / c, qt.prob(s) / c);
        mo.mean += w * sums.first[s];
        mo.second += w * sums.second[s];
        mo.tilde_mean += wt * sums.first[s];
        mo.tilde_second += wt * sums.second[s];
        mo.tilde_cross += wt * sums.cross[s];
    }
    Ok(mo)
}

impl ExactReport {
    /// Moments of this game's utilities under another size distribution.
    pub fn moments(&self, spec: &SemiValueSpec, q: &SizeDistribution) -> Result<Moments> {
        moments(&self.sums, spec, q)
    }

    /// `‖E[u_S z_S]‖^2`: `‖φ̃‖^2` on `[1, n-1]`, `‖φ‖^2` on `[0, n]`.
    fn target_norm_sq(&self, q: &SizeDistribution) -> f64 {
        if q.includes_endpoints() {
            self.phi_norm_sq
        } else {
            self.varphi_norm_sq
        }
    }

    /// Labeled `(field, index, value)` rows; scalars use index 0.
    pub fn rows(&self) -> Vec<(&'static str, usize, f64)> {
        let mut rows = Vec::new();
        rows.extend(self.phi.iter().enumerate().map(|(i, v)| ("phi", i, *v)));
        rows.extend(self.varphi.iter().enumerate().map(|(i, v)| ("varphi", i, *v)));
        rows.extend([
            ("u_full", 0, self.u_full),
            ("u_empty", 0, self.u_empty),
            ("gamma_star", 0, self.gamma_star),
            ("second_moment", 0, self.second_moment),
            ("tilde_second_moment", 0, self.tilde_second_moment),
            ("cross_moment", 0, self.cross_moment),
            ("phi_norm_sq", 0, self.phi_norm_sq),
            ("varphi_norm_sq", 0, self.varphi_norm_sq),
        ]);
        rows
    }
}

pub fn gamma_star(report: &ExactReport) -> f64 {
    report.gamma_star
}

fn check_paired(spec: &SemiValueSpec, q: &SizeDistribution) -> Result<()> {
    if !spec.is_symmetric() || !q.is_symmetric(spec.n()) {
        return Err(Error::InvalidSpec(
            "paired sampling needs a symmetric semi-value and q_s = q_(n-s)".into(),
        ));
    }
    Ok(())
}

fn combine_paired(t: usize, var_pair: f64, var_single: f64) -> f64 {
    let pairs = (t / 2) as f64;
    let rem = (t % 2) as f64;
    (4.0 * pairs * var_pair + rem * var_single) / (t as f64 * t as f64)
}

/// Closed-form MSE of the base estimator (MSR estimator on `[0, n]` support)
/// after `t` samples.
///
/// Unpaired: `(n D(q) E_q̃[u^2] - ‖φ̃‖^2) / t`. Paired:
/// `(n D(q) (E_q̃[u^2] - E_q̃[u u^c]) - 2 ‖φ̃‖^2) / t` for even `t`; an odd
/// final sample is an ordinary single draw.
pub fn theoretical_mse(
    report: &ExactReport,
    spec: &SemiValueSpec,
    q: &SizeDistribution,
    t: usize,
    paired: bool,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::Estimator("MSE needs t >= 1".into()));
    }
    let mo = report.moments(spec, q)?;
    let nd = spec.n() as f64 * mo.dispersion;
    let target = report.target_norm_sq(q);
    let var_single = nd * mo.tilde_second - target;
    if !paired {
        return Ok(var_single / t as f64);
    }
    check_paired(spec, q)?;
    let var_pair = nd * (mo.tilde_second - mo.tilde_cross) / 2.0 - target;
    Ok(combine_paired(t, var_pair, var_single))
}

/// MSE of `mean((u_S - g(|S|)) z_S)` plus its deterministic offset, computed
/// from per-size sums (independent of the closed form above).
pub fn residual_mse(
    report: &ExactReport,
    spec: &SemiValueSpec,
    q: &SizeDistribution,
    shift: &dyn Fn(usize) -> f64,
    t: usize,
    paired: bool,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::Estimator("MSE needs t >= 1".into()));
    }
    let n = spec.n();
    let z = z_coefficients(q, spec)?;
    let sums = &report.sums;

    let mut mean = vec![0.0; n];
    let mut single_sq = 0.0;
    let mut pair_sq = 0.0;
    for s in q.support() {
        let c = choose(n, s);
        let w = q.prob(s) / c;
        if w == 0.0 {
            continue;
        }
        let g = shift(s);
        let (a, b) = z.get(s);
        let norm = z.norm_sq(s);
        single_sq += w * norm * (sums.second[s] - 2.0 * g * sums.first[s] + c * g * g);

        let (cin, cout) = (
            if s >= 1 { choose(n - 1, s - 1) } else { 0.0 },
            if s < n { choose(n - 1, s) } else { 0.0 },
        );
        for (i, m) in mean.iter_mut().enumerate() {
            let inside = sums.member(i, s) - g * cin;
            let outside = (sums.first[s] - sums.member(i, s)) - g * cout;
            *m += w * (a * inside - b * outside);
        }

        if paired {
            let dg = shift(n - s) - g;
            let diff_sq = sums.second[s] + sums.second[n - s] - 2.0 * sums.cross[s];
            let diff = sums.first[s] - sums.first[n - s];
            pair_sq += w * norm * (diff_sq + 2.0 * dg * diff + c * dg * dg) / 4.0;
        }
    }
    let mean_sq: f64 = mean.iter().map(|v| v * v).sum();
    let var_single = single_sq - mean_sq;
    if !paired {
        return Ok(var_single / t as f64);
    }
    check_paired(spec, q)?;
    Ok(combine_paired(t, pair_sq - mean_sq, var_single))
}

/// MSE of the AME estimator with Bernoulli(`w`) subsets after `t` samples;
/// `report` must be built for the weighted Banzhaf value with the same `w`.
pub fn ame_mse(report: &ExactReport, w: f64, t: usize) -> Result<f64> {
    if !(w > 0.0 && w < 1.0) || t == 0 {
        return Err(Error::Estimator(format!("AME MSE needs 0 < w < 1 and t >= 1 (w = {w}, t = {t})")));
    }
    let n = report.n;
    let second: f64 = (0..=n)
        .map(|s| {
            let (sf, nf) = (s as f64, n as f64);
            let prob = w.powi(s as i32) * (1.0 - w).powi((n - s) as i32);
            prob * (sf / (w * w) + (nf - sf) / ((1.0 - w) * (1.0 - w))) * report.sums.second[s]
        })
        .sum();
    Ok((second - report.phi_norm_sq) / t as f64)
}

/// `2 exp(-t ε^2 / (4 σ^2))`, defined for `ε <= 3 σ^2 / c_vec` where `c_vec`
/// bounds the norm of each centered summand.
pub fn concentration_bound(t: usize, epsilon: f64, sigma2: f64, c_vec: f64) -> Result<f64> {
    let max = 3.0 * sigma2 / c_vec;
    if !(epsilon > 0.0) || epsilon > max * (1.0 + 1e-12) {
        return Err(Error::OutOfRange { epsilon, max });
    }
    Ok(2.0 * (-(t as f64) * epsilon * epsilon / (4.0 * sigma2)).exp())
}

/// `(σ^2, c_vec) = (n D* C^2, 2 C sqrt(n D*))` for the framework estimator under `q*`.
pub fn framework_bound_params(spec: &SemiValueSpec, c: f64) -> (f64, f64) {
    let nd = spec.n() as f64 * crate::weights::d_star(spec);
    (nd * c * c, 2.0 * c * nd.sqrt())
}

/// `(σ^2, c_vec) = (c^2, 2c)` with `c^2 = n C^2 / min(w, 1-w)^2` for AME.
pub fn ame_bound_params(n: usize, w: f64, c: f64) -> (f64, f64) {
    let lo = w.min(1.0 - w);
    let c2 = n as f64 * c * c / (lo * lo);
    (c2, 2.0 * c2.sqrt())
}

/// `sum_S q_s C(n,s)^-1 (u_S - shift(|S|)) z_S` by direct enumeration.
pub fn expected_single_sample(
    spec: &SemiValueSpec,
    q: &SizeDistribution,
    oracle: &UtilityOracle,
    shift: &dyn Fn(usize) -> f64,
) -> Result<Vec<f64>> {
    let n = spec.n();
    if n > MAX_EXPECTATION_N {
        return Err(Error::TooLarge {
            what: "single-sample expectation",
            n,
            limit: MAX_EXPECTATION_N,
        });
    }
    if oracle.n() != n {
        return Err(Error::InvalidSpec("oracle and spec disagree on n".into()));
    }
    let z = z_coefficients(q, spec)?;
    let mut out = vec![0.0; n];
    for mask in 0..1u64 << n {
        let c = Coalition::from_mask(n, mask);
        let s = c.len();
        let w = q.prob(s) / choose(n, s);
        if w == 0.0 {
            continue;
        }
        let r = w * (oracle.evaluate(&c) - shift(s));
        let (a, b) = z.get(s);
        for (i, o) in out.iter_mut().enumerate() {
            *o += if c.contains(i) { r * a } else { -r * b };
        }
    }
    Ok(out)
}
