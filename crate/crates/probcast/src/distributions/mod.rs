//! Probability distribution components.
//!
//! A [`Distribution`] provides log-density, CDF, quantile, and sampling.
//! Quantiles of continuous families are generalized CDF inverses computed by
//! bisection; the binned and negative binomial families use exact discrete
//! inverses. All operations return `-inf`/0/1 outside the support instead
//! of failing.

mod bijection;

pub use bijection::Bijection;

use rand::Rng;
use rand_distr::Distribution as RandDistribution;
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Gaussian { mean: f64, std_dev: f64 },
    StudentT { dof: f64, loc: f64, scale: f64 },
    Gamma { shape: f64, rate: f64 },
    /// Parameterized by mean and dispersion: variance = mean + dispersion·mean².
    NegativeBinomial { mean: f64, dispersion: f64 },
    /// Quantized distribution over `values`, one per bin. The CDF treats a
    /// bin as covered once `z` passes its upper edge; density is the
    /// probability of the containing (left-closed, right-open) bin.
    Binned { edges: Vec<f64>, values: Vec<f64>, probs: Vec<f64> },
    Transformed { base: Box<Distribution>, bijection: Bijection },
    Mixture { weights: Vec<f64>, components: Vec<Distribution> },
}

impl Distribution {
    pub fn gaussian(mean: f64, std_dev: f64) -> Result<Self> {
        let d = Distribution::Gaussian { mean, std_dev };
        d.validate()?;
        Ok(d)
    }

    pub fn student_t(dof: f64, loc: f64, scale: f64) -> Result<Self> {
        let d = Distribution::StudentT { dof, loc, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let d = Distribution::Gamma { shape, rate };
        d.validate()?;
        Ok(d)
    }

    pub fn negative_binomial(mean: f64, dispersion: f64) -> Result<Self> {
        let d = Distribution::NegativeBinomial { mean, dispersion };
        d.validate()?;
        Ok(d)
    }

    pub fn binned(edges: Vec<f64>, values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let mut d = Distribution::Binned { edges, values, probs };
        d.validate()?;
        if let Distribution::Binned { probs, .. } = &mut d {
            normalize_simplex(probs);
        }
        Ok(d)
    }

    pub fn transformed(base: Distribution, bijection: Bijection) -> Result<Self> {
        base.validate()?;
        Ok(Distribution::Transformed { base: Box::new(base), bijection })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<Distribution>) -> Result<Self> {
        let mut d = Distribution::Mixture { weights, components };
        d.validate()?;
        if let Distribution::Mixture { weights, .. } = &mut d {
            normalize_simplex(weights);
        }
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Gaussian { mean, std_dev } => {
                if !mean.is_finite() || !std_dev.is_finite() || *std_dev <= 0.0 {
                    return Err(Error::validation(format!("gaussian requires finite mean and std_dev > 0, got ({mean}, {std_dev})")));
                }
            }
            Distribution::StudentT { dof, loc, scale } => {
                if !(*dof > 2.0) || !loc.is_finite() || !scale.is_finite() || *scale <= 0.0 {
                    return Err(Error::validation(format!(
                        "student-t requires dof > 2, finite loc, scale > 0, got ({dof}, {loc}, {scale})"
                    )));
                }
            }
            Distribution::Gamma { shape, rate } => {
                if !(*shape > 0.0) || !(*rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
                    return Err(Error::validation(format!("gamma requires shape > 0 and rate > 0, got ({shape}, {rate})")));
                }
            }
            Distribution::NegativeBinomial { mean, dispersion } => {
                if !(*mean > 0.0) || !(*dispersion > 0.0) || !mean.is_finite() || !dispersion.is_finite() {
                    return Err(Error::validation(format!(
                        "negative binomial requires mean > 0 and dispersion > 0, got ({mean}, {dispersion})"
                    )));
                }
            }
            Distribution::Binned { edges, values, probs } => {
                if values.is_empty() || edges.len() != values.len() + 1 || probs.len() != values.len() {
                    return Err(Error::validation("binned requires B+1 edges, B values, B probs with B >= 1"));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::validation("binned edges must be strictly ascending"));
                }
                check_simplex(probs, "binned probs")?;
                for (i, v) in values.iter().enumerate() {
                    if !(edges[i] <= *v && *v <= edges[i + 1]) {
                        return Err(Error::validation(format!("binned value {v} lies outside bin [{}, {}]", edges[i], edges[i + 1])));
                    }
                }
            }
            Distribution::Transformed { base, .. } => base.validate()?,
            Distribution::Mixture { weights, components } => {
                if components.is_empty() || weights.len() != components.len() {
                    return Err(Error::validation("mixture requires one weight per component"));
                }
                check_simplex(weights, "mixture weights")?;
                for c in components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Natural-log density (probability mass for discrete families).
    /// Returns `-inf` outside the support, never an error.
    pub fn log_density(&self, z: f64) -> f64 {
        match self {
            Distribution::Gaussian { mean, std_dev } => {
                let u = (z - mean) / std_dev;
                -std_dev.ln() - 0.5 * LN_2PI - 0.5 * u * u
            }
            Distribution::StudentT { dof, loc, scale } => {
                let v = *dof;
                let u = (z - loc) / scale;
                ln_gamma((v + 1.0) / 2.0)
                    - ln_gamma(v / 2.0)
                    - 0.5 * (v * std::f64::consts::PI).ln()
                    - scale.ln()
                    - (v + 1.0) / 2.0 * (1.0 + u * u / v).ln()
            }
            Distribution::Gamma { shape, rate } => {
                if z <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    shape * rate.ln() - ln_gamma(*shape) + (shape - 1.0) * z.ln() - rate * z
                }
            }
            Distribution::NegativeBinomial { .. } => {
                let k = z.round();
                if k < 0.0 || (z - k).abs() > 1e-9 {
                    return f64::NEG_INFINITY;
                }
                let (r, p) = self.neg_bin_natural();
                ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0) + r * p.ln() + k * (1.0 - p).ln()
            }
            Distribution::Binned { edges, probs, .. } => {
                if z < edges[0] || z > *edges.last().unwrap() {
                    return f64::NEG_INFINITY;
                }
                // Left-closed, right-open bins; the top edge falls in the last bin.
                let idx = match edges.binary_search_by(|e| e.partial_cmp(&z).unwrap()) {
                    Ok(i) => i.min(probs.len() - 1),
                    Err(i) => i - 1,
                };
                if probs[idx] > 0.0 {
                    probs[idx].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Distribution::Transformed { base, bijection } => match bijection.inverse(z) {
                Ok(x) => match bijection.log_deriv_forward(x) {
                    Ok(ld) => base.log_density(x) - ld,
                    Err(_) => f64::NEG_INFINITY,
                },
                Err(_) => f64::NEG_INFINITY,
            },
            Distribution::Mixture { weights, components } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, c)| w.ln() + c.log_density(z))
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }

    /// Cumulative distribution function; monotone with limits 0 and 1.
    pub fn cdf(&self, z: f64) -> f64 {
        if z.is_nan() {
            return f64::NAN;
        }
        match self {
            Distribution::Gaussian { mean, std_dev } => {
                let u = (z - mean) / std_dev;
                0.5 * erfc(-u / std::f64::consts::SQRT_2)
            }
            Distribution::StudentT { dof, loc, scale } => {
                let v = *dof;
                let u = (z - loc) / scale;
                if u.is_infinite() {
                    return if u > 0.0 { 1.0 } else { 0.0 };
                }
                let x = v / (v + u * u);
                let tail = 0.5 * beta_reg(v / 2.0, 0.5, x);
                if u >= 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
            Distribution::Gamma { shape, rate } => {
                if z <= 0.0 {
                    0.0
                } else if z.is_infinite() {
                    1.0
                } else {
                    gamma_lr(*shape, rate * z)
                }
            }
            Distribution::NegativeBinomial { .. } => {
                if z < 0.0 {
                    return 0.0;
                }
                if z.is_infinite() {
                    return 1.0;
                }
                let (r, p) = self.neg_bin_natural();
                beta_reg(r, z.floor() + 1.0, p)
            }
            Distribution::Binned { edges, probs, .. } => {
                // Mass of bins whose entire extent lies at or below z.
                probs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| edges[i + 1] <= z)
                    .map(|(_, p)| p)
                    .sum()
            }
            Distribution::Transformed { base, bijection } => {
                let (lo, hi) = bijection.range();
                if z <= lo {
                    0.0
                } else if z >= hi {
                    1.0
                } else {
                    match bijection.inverse(z) {
                        Ok(x) => base.cdf(x),
                        Err(_) => 0.0,
                    }
                }
            }
            Distribution::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.cdf(z))
                .sum(),
        }
    }

    /// Generalized inverse of the CDF: the smallest `z` with `cdf(z) >= q`.
    /// Continuous families are solved by bisection.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!("quantile level must lie in (0, 1), got {q}")));
        }
        match self {
            Distribution::Binned { values, probs, .. } => {
                let mut cum = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    cum += p;
                    if cum >= q - 1e-12 {
                        return Ok(*v);
                    }
                }
                Ok(*values.last().unwrap())
            }
            Distribution::NegativeBinomial { mean, dispersion } => {
                let var = mean + dispersion * mean * mean;
                let mut hi = (mean + 10.0 * var.sqrt() + 10.0).ceil() as i64;
                while self.cdf(hi as f64) < q {
                    hi = hi.saturating_mul(2);
                    if hi > (1i64 << 60) {
                        return Err(Error::numerics(None, "negative binomial quantile bracket overflow".to_string()));
                    }
                }
                let mut lo = -1i64; // cdf(-1) = 0 < q
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if self.cdf(mid as f64) >= q {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(hi as f64)
            }
            Distribution::Transformed { base, bijection } => bijection.forward(base.quantile(q)?),
            _ => Ok(self.bisect_quantile(q)),
        }
    }

    /// Draw `n` samples. Deterministic given the RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.sample_one(rng));
        }
        out
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Gaussian { mean, std_dev } => {
                rand_distr::Normal::new(*mean, *std_dev).expect("validated").sample(rng)
            }
            Distribution::StudentT { dof, loc, scale } => {
                loc + scale * rand_distr::StudentT::new(*dof).expect("validated").sample(rng)
            }
            Distribution::Gamma { shape, rate } => {
                rand_distr::Gamma::new(*shape, 1.0 / rate).expect("validated").sample(rng)
            }
            Distribution::NegativeBinomial { .. } => {
                let (r, p) = self.neg_bin_natural();
                let lambda: f64 = rand_distr::Gamma::new(r, (1.0 - p) / p).expect("validated").sample(rng);
                if lambda <= 0.0 {
                    0.0
                } else {
                    rand_distr::Poisson::new(lambda).expect("positive rate").sample(rng)
                }
            }
            Distribution::Binned { values, probs, .. } => {
                let idx = sample_categorical(probs, rng);
                values[idx]
            }
            Distribution::Transformed { base, bijection } => {
                let x = base.sample_one(rng);
                bijection.forward(x).unwrap_or(f64::NAN)
            }
            Distribution::Mixture { weights, components } => {
                let idx = sample_categorical(weights, rng);
                components[idx].sample_one(rng)
            }
        }
    }

    /// Support bounds (used for bracketing and numerical integration).
    pub fn support(&self) -> (f64, f64) {
        match self {
            Distribution::Gaussian { .. } | Distribution::StudentT { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Distribution::Gamma { .. } | Distribution::NegativeBinomial { .. } => (0.0, f64::INFINITY),
            Distribution::Binned { edges, .. } => (edges[0], *edges.last().unwrap()),
            Distribution::Transformed { base, bijection } => {
                let (blo, bhi) = base.support();
                let (rlo, rhi) = bijection.range();
                let lo = bijection.forward(blo).unwrap_or(rlo).max(rlo);
                let hi = bijection.forward(bhi).unwrap_or(rhi).min(rhi);
                (lo, hi)
            }
            Distribution::Mixture { components, .. } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for c in components {
                    let (l, h) = c.support();
                    lo = lo.min(l);
                    hi = hi.max(h);
                }
                (lo, hi)
            }
        }
    }

    /// A finite point near the bulk of the mass, used to seed bracketing.
    fn center_hint(&self) -> f64 {
        match self {
            Distribution::Gaussian { mean, .. } => *mean,
            Distribution::StudentT { loc, .. } => *loc,
            Distribution::Gamma { shape, rate } => shape / rate,
            Distribution::NegativeBinomial { mean, .. } => *mean,
            Distribution::Binned { values, .. } => values[values.len() / 2],
            Distribution::Transformed { base, bijection } => {
                bijection.forward(base.center_hint()).unwrap_or(1.0)
            }
            Distribution::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.center_hint())
                .sum(),
        }
    }

    fn scale_hint(&self) -> f64 {
        let s = match self {
            Distribution::Gaussian { std_dev, .. } => *std_dev,
            Distribution::StudentT { scale, .. } => *scale,
            Distribution::Gamma { shape, rate } => (shape.sqrt() / rate).max(1.0 / rate),
            Distribution::NegativeBinomial { mean, dispersion } => (mean + dispersion * mean * mean).sqrt(),
            Distribution::Binned { edges, .. } => edges[edges.len() - 1] - edges[0],
            Distribution::Transformed { base, .. } => base.scale_hint(),
            Distribution::Mixture { components, .. } => components
                .iter()
                .map(|c| c.scale_hint())
                .fold(0.0f64, f64::max),
        };
        if s.is_finite() && s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Bisection on the CDF, maintaining `cdf(hi) >= q > cdf(lo)` and
    /// returning the upper end so the generalized-inverse law
    /// `cdf(quantile(q)) >= q` holds.
    fn bisect_quantile(&self, q: f64) -> f64 {
        let (support_lo, support_hi) = self.support();
        let center = self.center_hint();
        let mut step = self.scale_hint();

        let mut lo = center - step;
        let mut hi = center + step;
        for _ in 0..2000 {
            if lo <= support_lo || self.cdf(lo) < q {
                break;
            }
            step *= 2.0;
            lo = center - step;
        }
        lo = lo.max(support_lo);
        step = self.scale_hint();
        for _ in 0..2000 {
            if hi >= support_hi || self.cdf(hi) >= q {
                break;
            }
            step *= 2.0;
            hi = center + step;
        }
        hi = hi.min(support_hi);

        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if !mid.is_finite() || mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) >= q {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Convert (mean, dispersion) to the classic (size r, success p).
    fn neg_bin_natural(&self) -> (f64, f64) {
        match self {
            Distribution::NegativeBinomial { mean, dispersion } => {
                let r = 1.0 / dispersion;
                let p = r / (r + mean);
                (r, p)
            }
            _ => unreachable!("neg_bin_natural on non-negative-binomial"),
        }
    }
}

fn check_simplex(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::validation(format!("{what} must be non-negative and finite")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::validation(format!("{what} must sum to 1 (got {total})")));
    }
    Ok(())
}

fn normalize_simplex(probs: &mut [f64]) {
    let total: f64 = probs.iter().sum();
    for p in probs {
        *p /= total;
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
