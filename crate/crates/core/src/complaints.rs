//! Complaint-count distributions on a truncated support `{0, ..., c_max}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TampaError};

pub const DEFAULT_C_MAX: usize = 30;

const MASS_TOLERANCE: f64 = 1e-9;

/// Probability mass function over `{0, ..., c_max}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ComplaintPmf {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ComplaintPmf {
    type Error = TampaError;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        ComplaintPmf::new(probs)
    }
}

impl From<ComplaintPmf> for Vec<f64> {
    fn from(p: ComplaintPmf) -> Self {
        p.probs
    }
}

impl ComplaintPmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(TampaError::InvalidPmf("empty support".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(TampaError::InvalidPmf(format!("negative or non-finite mass {bad}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(TampaError::InvalidPmf(format!("masses sum to {total}")));
        }
        Ok(ComplaintPmf { probs })
    }

    /// Normalises non-negative weights into a pmf.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(TampaError::InvalidPmf("weights must be non-negative with positive sum".into()));
        }
        Ok(ComplaintPmf {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn delta(at: usize, c_max: usize) -> Self {
        let mut probs = vec![0.0; c_max + 1];
        probs[at.min(c_max)] = 1.0;
        ComplaintPmf { probs }
    }

    /// Uniform on `{lo, ..., hi}`.
    pub fn uniform(lo: usize, hi: usize, c_max: usize) -> Self {
        assert!(lo <= hi && hi <= c_max, "uniform range {lo}..={hi} outside 0..={c_max}");
        let mass = 1.0 / (hi - lo + 1) as f64;
        let mut probs = vec![0.0; c_max + 1];
        probs[lo..=hi].fill(mass);
        ComplaintPmf { probs }
    }

    pub fn c_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn cdf(&self) -> Vec<f64> {
        self.probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (n, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return n;
            }
        }
        // rounding left a sliver above the last cumulative value
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }

    /// Binomial thinning: every count survives independently with
    /// probability `keep`. The mean scales by exactly `keep`.
    pub fn thin(&self, keep: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&keep) {
            return Err(TampaError::InvalidRatio(keep));
        }
        let c_max = self.c_max();
        let binom = pascal(c_max);
        let mut out = vec![0.0; c_max + 1];
        for (n, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (m, slot) in out.iter_mut().enumerate().take(n + 1) {
                let i = i32::try_from(m).expect("support fits in i32");
                let j = i32::try_from(n - m).expect("support fits in i32");
                *slot += p * binom[n][m] * keep.powi(i) * (1.0 - keep).powi(j);
            }
        }
        Ok(ComplaintPmf { probs: out })
    }

    fn check_support(&self, other: &ComplaintPmf) -> Result<()> {
        if self.c_max() != other.c_max() {
            return Err(TampaError::SupportMismatch(self.c_max(), other.c_max()));
        }
        Ok(())
    }
}

fn pascal(n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut row = vec![1.0; i + 1];
        for k in 1..i {
            row[k] = rows[i - 1][k - 1] + rows[i - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// Sup-norm distance between the two CDFs.
pub fn kolmogorov_distance(p: &ComplaintPmf, q: &ComplaintPmf) -> Result<f64> {
    p.check_support(q)?;
    let (mut fp, mut fq, mut best) = (0.0, 0.0, 0.0f64);
    for (a, b) in p.probs.iter().zip(&q.probs) {
        fp += a;
        fq += b;
        best = best.max((fp - fq).abs());
    }
    Ok(best.min(1.0))
}

/// Sup-norm distance between the mass functions themselves.
pub fn pmf_sup_distance(p: &ComplaintPmf, q: &ComplaintPmf) -> Result<f64> {
    p.check_support(q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

pub fn tv_distance(p: &ComplaintPmf, q: &ComplaintPmf) -> Result<f64> {
    p.check_support(q)?;
    let s: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * s).min(1.0))
}

/// Prior-weighted online estimate of a complaint pmf.
///
/// The prior counts as `prior_weight` pseudo-samples; after `n` updates the
/// estimate is `(M * prior + sum of point masses) / (M + n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimator {
    pmf: ComplaintPmf,
    prior_weight: u32,
    samples_seen: u64,
}

impl EmpiricalEstimator {
    pub fn new(prior: ComplaintPmf, prior_weight: u32) -> Result<Self> {
        if prior_weight == 0 {
            return Err(TampaError::validation("prior_weight", "must be at least 1"));
        }
        Ok(EmpiricalEstimator {
            pmf: prior,
            prior_weight,
            samples_seen: 0,
        })
    }

    pub fn pmf(&self) -> &ComplaintPmf {
        &self.pmf
    }

    pub fn prior_weight(&self) -> u32 {
        self.prior_weight
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    /// Absorbs one observation; values above `c_max` are clamped.
    pub fn update(&mut self, obs: usize) {
        let obs = obs.min(self.pmf.c_max());
        let denom = f64::from(self.prior_weight) + self.samples_seen as f64 + 1.0;
        let keep = (denom - 1.0) / denom;
        for p in &mut self.pmf.probs {
            *p *= keep;
        }
        self.pmf.probs[obs] += 1.0 / denom;
        self.samples_seen += 1;
    }

    /// Forgets everything before a change: the estimate becomes `recent`,
    /// weighted as the `samples` observations it was built from.
    pub fn restart(&mut self, recent: ComplaintPmf, samples: u64) -> Result<()> {
        if recent.c_max() != self.pmf.c_max() {
            return Err(TampaError::validation("recent", "support differs from the estimate"));
        }
        self.pmf = recent;
        self.prior_weight = u32::try_from(samples.max(1)).unwrap_or(u32::MAX);
        self.samples_seen = 0;
        Ok(())
    }

    /// Estimator for a sub-edge carrying fraction `keep` of the complaints.
    pub fn thinned(&self, keep: f64) -> Result<Self> {
        Ok(EmpiricalEstimator {
            pmf: self.pmf.thin(keep)?,
            prior_weight: self.prior_weight,
            samples_seen: 0,
        })
    }
}

/// Plain counts of the observations since the last reset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl CountHistogram {
    pub fn new(c_max: usize) -> Self {
        CountHistogram {
            counts: vec![0; c_max + 1],
            total: 0,
        }
    }

    pub fn push(&mut self, obs: usize) {
        let i = obs.min(self.counts.len() - 1);
        self.counts[i] += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn clear(&mut self) {
        self.counts.fill(0);
        self.total = 0;
    }

    /// Empirical pmf, or `None` before the first observation.
    pub fn to_pmf(&self) -> Option<ComplaintPmf> {
        if self.total == 0 {
            return None;
        }
        let t = self.total as f64;
        Some(ComplaintPmf {
            probs: self.counts.iter().map(|&c| c as f64 / t).collect(),
        })
    }
}
