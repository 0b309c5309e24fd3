//! Per-edge distribution-shift tests and their network-wide aggregation.
//!
//! Each edge compares a prior snapshot against the empirical distribution of
//! the counts observed since that snapshot was taken. The threshold follows
//! the DKW bound for the number of samples behind the empirical side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::complaints::{
    kolmogorov_distance, pmf_sup_distance, ComplaintPmf, CountHistogram, EmpiricalEstimator,
};
use crate::error::{Result, TampaError};
use crate::graph::{Edge, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QPolicyRepr", into = "QPolicyRepr")]
pub enum ThresholdPolicy {
    /// `q(t) = sqrt(3 / (2t))`.
    Dkw,
    Fixed(f64),
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum QPolicyRepr {
    Fixed(f64),
    Named(QPolicyName),
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum QPolicyName {
    Dkw,
}

impl TryFrom<QPolicyRepr> for ThresholdPolicy {
    type Error = String;

    fn try_from(r: QPolicyRepr) -> std::result::Result<Self, String> {
        match r {
            QPolicyRepr::Named(QPolicyName::Dkw) => Ok(ThresholdPolicy::Dkw),
            QPolicyRepr::Fixed(q) if q > 0.0 && q <= 1.0 => Ok(ThresholdPolicy::Fixed(q)),
            QPolicyRepr::Fixed(q) => Err(format!("fixed q must lie in (0, 1], got {q}")),
        }
    }
}

impl From<ThresholdPolicy> for QPolicyRepr {
    fn from(p: ThresholdPolicy) -> Self {
        match p {
            ThresholdPolicy::Dkw => QPolicyRepr::Named(QPolicyName::Dkw),
            ThresholdPolicy::Fixed(q) => QPolicyRepr::Fixed(q),
        }
    }
}

impl ThresholdPolicy {
    pub fn threshold(&self, samples: u64) -> Result<f64> {
        match *self {
            ThresholdPolicy::Dkw => dkw_threshold(samples),
            ThresholdPolicy::Fixed(q) => Ok(q),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    All,
    Any,
    Fraction(f64),
}

impl Aggregator {
    pub fn fires(&self, shifted: usize, total: usize) -> bool {
        match *self {
            Aggregator::All => shifted == total,
            Aggregator::Any => shifted > 0,
            Aggregator::Fraction(theta) => shifted as f64 >= theta * total as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceForm {
    Cdf,
    Pmf,
}

impl DistanceForm {
    pub fn distance(&self, p: &ComplaintPmf, q: &ComplaintPmf) -> Result<f64> {
        match self {
            DistanceForm::Cdf => kolmogorov_distance(p, q),
            DistanceForm::Pmf => pmf_sup_distance(p, q),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    #[serde(default = "default_policy")]
    pub q_policy: ThresholdPolicy,
    #[serde(default = "default_aggregator")]
    pub aggregator: Aggregator,
    #[serde(default = "default_distance")]
    pub distance: DistanceForm,
}

fn default_policy() -> ThresholdPolicy {
    ThresholdPolicy::Dkw
}
fn default_aggregator() -> Aggregator {
    Aggregator::All
}
fn default_distance() -> DistanceForm {
    DistanceForm::Cdf
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            q_policy: default_policy(),
            aggregator: default_aggregator(),
            distance: default_distance(),
        }
    }
}

impl ShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if let ThresholdPolicy::Fixed(q) = self.q_policy {
            if !(q > 0.0 && q <= 1.0) {
                return Err(TampaError::validation("detector.q_policy", "fixed q must lie in (0, 1]"));
            }
        }
        if let Aggregator::Fraction(theta) = self.aggregator {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(TampaError::validation(
                    "detector.aggregator",
                    "fraction must lie in (0, 1]",
                ));
            }
        }
        Ok(())
    }
}

pub fn dkw_threshold(samples: u64) -> Result<f64> {
    if samples == 0 {
        return Err(TampaError::NoSamples);
    }
    Ok((3.0 / (2.0 * samples as f64)).sqrt())
}

pub fn dkw_event(prior: &ComplaintPmf, current: &ComplaintPmf, q: f64, form: DistanceForm) -> Result<bool> {
    Ok(form.distance(prior, current)? >= q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSnapshot {
    pub pmfs: BTreeMap<Edge, ComplaintPmf>,
    pub time: u32,
    /// Observations made after this minute count towards the test.
    pub sample_origin: u32,
}

/// Snapshot of the current estimates, taken at `time`.
pub fn reset_prior(estimators: &BTreeMap<Edge, EmpiricalEstimator>, time: u32) -> PriorSnapshot {
    PriorSnapshot {
        pmfs: estimators.iter().map(|(&e, est)| (e, est.pmf().clone())).collect(),
        time,
        sample_origin: time,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDistance {
    pub from: NodeId,
    pub to: NodeId,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub t: u32,
    pub q: f64,
    /// In ascending edge order.
    pub distances: Vec<EdgeDistance>,
    pub shifted: usize,
    pub fired: bool,
}

pub fn network_divergence(
    snapshot: &PriorSnapshot,
    current: &BTreeMap<Edge, ComplaintPmf>,
    q: f64,
    config: &ShiftConfig,
) -> Result<DivergenceReport> {
    if snapshot.pmfs.len() != current.len() || !snapshot.pmfs.keys().eq(current.keys()) {
        return Err(TampaError::EdgeSetMismatch);
    }
    let mut distances = Vec::with_capacity(current.len());
    let mut shifted = 0;
    for ((&(from, to), prior), cur) in snapshot.pmfs.iter().zip(current.values()) {
        let distance = config.distance.distance(prior, cur)?;
        if distance >= q {
            shifted += 1;
        }
        distances.push(EdgeDistance { from, to, distance });
    }
    Ok(DivergenceReport {
        t: snapshot.time,
        q,
        fired: config.aggregator.fires(shifted, current.len()),
        distances,
        shifted,
    })
}

/// Stateful wrapper: holds the snapshot and the histograms of the counts
/// seen since it was taken.
#[derive(Clone, Debug)]
pub struct ShiftMonitor {
    config: ShiftConfig,
    snapshot: PriorSnapshot,
    histograms: BTreeMap<Edge, CountHistogram>,
    calls: u64,
}

impl ShiftMonitor {
    pub fn new(config: ShiftConfig, estimators: &BTreeMap<Edge, EmpiricalEstimator>, time: u32) -> Self {
        let mut m = ShiftMonitor {
            config,
            snapshot: reset_prior(estimators, time),
            histograms: BTreeMap::new(),
            calls: 0,
        };
        m.rebuild_histograms();
        m
    }

    fn rebuild_histograms(&mut self) {
        self.histograms = self
            .snapshot
            .pmfs
            .iter()
            .map(|(&e, p)| (e, CountHistogram::new(p.c_max())))
            .collect();
    }

    pub fn reset(&mut self, estimators: &BTreeMap<Edge, EmpiricalEstimator>, time: u32) {
        self.snapshot = reset_prior(estimators, time);
        self.rebuild_histograms();
    }

    pub fn snapshot(&self) -> &PriorSnapshot {
        &self.snapshot
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn samples(&self) -> u64 {
        self.histograms.values().map(CountHistogram::total).min().unwrap_or(0)
    }

    /// Empirical pmf of the counts on `e` since the last reset, with their number.
    pub fn recent(&self, e: Edge) -> Option<(ComplaintPmf, u64)> {
        let h = self.histograms.get(&e)?;
        Some((h.to_pmf()?, h.total()))
    }

    pub fn observe(&mut self, counts: &BTreeMap<Edge, usize>) -> Result<()> {
        if counts.len() != self.histograms.len() {
            return Err(TampaError::EdgeSetMismatch);
        }
        for (e, h) in self.histograms.iter_mut() {
            let c = counts.get(e).ok_or(TampaError::EdgeSetMismatch)?;
            h.push(*c);
        }
        Ok(())
    }

    /// Test at minute `t`; `None` until at least one sample has arrived.
    pub fn check(&mut self, t: u32) -> Result<Option<DivergenceReport>> {
        let n = self.samples();
        if n == 0 {
            return Ok(None);
        }
        let q = self.config.q_policy.threshold(n)?;
        let current = self
            .histograms
            .iter()
            .map(|(&e, h)| (e, h.to_pmf().expect("non-empty histogram")))
            .collect::<BTreeMap<_, _>>();
        self.calls += 1;
        let mut report = network_divergence(&self.snapshot, &current, q, &self.config)?;
        report.t = t;
        Ok(Some(report))
    }
}
