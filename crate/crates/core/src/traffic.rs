//! Travel-time fields, travel-time predictors and the synthetic complaint
//! generator.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::complaints::ComplaintPmf;
use crate::error::{Result, TampaError};
use crate::graph::{Edge, EdgeSplit, EdgeWeighting, PatrolGraph};
use crate::planner::PlanningWindow;
use crate::rng::{self, TAG_TRAVEL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficParams {
    /// Free-flow multiplier applied to each edge's minimum travel time.
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default = "default_diurnal_amplitude")]
    pub diurnal_amplitude: f64,
    /// Period of the diurnal sinusoid in minutes.
    #[serde(default = "default_diurnal_period")]
    pub diurnal_period: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
}

fn default_base() -> f64 {
    1.3
}
fn default_diurnal_amplitude() -> f64 {
    0.2
}
fn default_diurnal_period() -> f64 {
    1440.0
}
fn default_noise_std() -> f64 {
    0.05
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            base: default_base(),
            diurnal_amplitude: default_diurnal_amplitude(),
            diurnal_period: default_diurnal_period(),
            noise_std: default_noise_std(),
        }
    }
}

impl TrafficParams {
    pub fn diurnal(&self, t: u32) -> f64 {
        self.diurnal_amplitude * (2.0 * PI * f64::from(t) / self.diurnal_period).sin()
    }
}

/// Travel time `mu[e][t]` for every edge and minute `0..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct TravelTimeField {
    horizon: u32,
    series: BTreeMap<Edge, Vec<f64>>,
    mtt: BTreeMap<Edge, f64>,
}

impl TravelTimeField {
    pub fn from_series(
        horizon: u32,
        series: BTreeMap<Edge, Vec<f64>>,
        mtt: BTreeMap<Edge, f64>,
    ) -> Result<Self> {
        for (e, s) in &series {
            if s.len() != horizon as usize + 1 {
                return Err(TampaError::validation(
                    format!("travel_times[{}-{}]", e.0, e.1),
                    format!("expected {} samples, got {}", horizon + 1, s.len()),
                ));
            }
            if !mtt.contains_key(e) {
                return Err(TampaError::validation(
                    format!("travel_times[{}-{}]", e.0, e.1),
                    "missing minimum travel time",
                ));
            }
        }
        Ok(TravelTimeField {
            horizon,
            series,
            mtt,
        })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn get(&self, e: Edge, t: u32) -> Option<f64> {
        self.series.get(&e).and_then(|s| s.get(t as usize)).copied()
    }

    pub fn mtt(&self, e: Edge) -> Option<f64> {
        self.mtt.get(&e).copied()
    }

    pub fn mtt_map(&self) -> &BTreeMap<Edge, f64> {
        &self.mtt
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.series.keys().copied()
    }

    /// Snapshot of every edge at minute `t` (clamped to the horizon).
    pub fn weighting_at(&self, t: u32) -> EdgeWeighting {
        let t = t.min(self.horizon) as usize;
        EdgeWeighting::from_map(self.series.iter().map(|(e, s)| (*e, s[t])).collect())
    }

    /// Splits the series and minimum travel times proportionally.
    pub fn apply_split(&mut self, split: &EdgeSplit) {
        split.apply(&mut self.series, |s, f| s.iter().map(|v| v * f).collect());
        split.apply(&mut self.mtt, |m, f| m * f);
    }
}

/// `mu[e][t] = max(mtt[e], base * mtt[e] * (1 + diurnal(t) + eps))` with one
/// seeded Gaussian stream per edge.
pub fn generate_travel_times(
    mtt: &BTreeMap<Edge, f64>,
    params: &TrafficParams,
    horizon: u32,
    seed: u64,
) -> Result<TravelTimeField> {
    let noise = if params.noise_std > 0.0 {
        Some(Normal::new(0.0, params.noise_std).map_err(|e| {
            TampaError::validation("traffic.noise_std", e.to_string())
        })?)
    } else {
        None
    };
    let mut series = BTreeMap::new();
    for (&e, &floor) in mtt {
        let mut rng = rng::stream(seed, &[TAG_TRAVEL, rng::edge_key(e)]);
        let base = params.base * floor;
        let s: Vec<f64> = (0..=horizon)
            .map(|t| {
                let eps = noise.map_or(0.0, |n| n.sample(&mut rng));
                (base * (1.0 + params.diurnal(t) + eps)).max(floor)
            })
            .collect();
        series.insert(e, s);
    }
    TravelTimeField::from_series(horizon, series, mtt.clone())
}

/// Complaint weight change taking effect at minute `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftEvent {
    pub t: u32,
    pub weights: BTreeMap<Edge, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplaintProcessParams {
    pub weights: BTreeMap<Edge, f64>,
    pub noise_mean: f64,
    pub noise_std: f64,
    pub cap: usize,
    /// Sorted by strictly increasing `t`.
    pub shifts: Vec<ShiftEvent>,
}

impl ComplaintProcessParams {
    pub fn stationary(weights: BTreeMap<Edge, f64>) -> Self {
        ComplaintProcessParams {
            weights,
            noise_mean: 0.5,
            noise_std: 0.2,
            cap: crate::complaints::DEFAULT_C_MAX,
            shifts: Vec::new(),
        }
    }

    /// Weights in force at minute `t`.
    pub fn weights_at(&self, t: u32) -> &BTreeMap<Edge, f64> {
        self.shifts
            .iter()
            .rev()
            .find(|s| s.t <= t)
            .map_or(&self.weights, |s| &s.weights)
    }

    fn noise(&self) -> Result<Normal<f64>> {
        Normal::new(self.noise_mean, self.noise_std)
            .map_err(|e| TampaError::validation("complaints.noise_std", e.to_string()))
    }

    /// Exact pmf of one edge's per-minute count at minute `t`.
    pub fn pmf(&self, e: Edge, t: u32) -> ComplaintPmf {
        let w = self.weights_at(t).get(&e).copied().unwrap_or(0.0);
        complaint_pmf(w, self.noise_mean, self.noise_std, self.cap)
    }
}

/// One count per edge: `min(max(round(F * U(0,1) * (1 + n)), 0), cap)` with
/// `n ~ N(noise_mean, noise_std)`. Edges are visited in ascending order and
/// each draws one uniform and one normal, whatever its weight.
pub fn generate_complaints<R: Rng + ?Sized>(
    params: &ComplaintProcessParams,
    t: u32,
    rng: &mut R,
) -> Result<BTreeMap<Edge, usize>> {
    let noise = params.noise()?;
    let cap = params.cap as f64;
    Ok(params
        .weights_at(t)
        .iter()
        .map(|(&e, &w)| {
            let u: f64 = rng.random();
            let n = noise.sample(rng);
            let c = (w * u * (1.0 + n)).round().clamp(0.0, cap);
            (e, c as usize)
        })
        .collect())
}

/// Distribution of `min(max(round(w * U * (1 + n)), 0), cap)`.
///
/// Conditional on the noise, `w * U * (1 + n)` is uniform, so each count's
/// mass is an interval length; the noise is integrated out with composite
/// Simpson over +-9 standard deviations.
pub fn complaint_pmf(weight: f64, noise_mean: f64, noise_std: f64, cap: usize) -> ComplaintPmf {
    if weight <= 0.0 {
        return ComplaintPmf::delta(0, cap);
    }
    let mut acc = vec![0.0; cap + 1];
    if noise_std <= 0.0 {
        rounded_uniform_masses(weight * (1.0 + noise_mean), 1.0, &mut acc);
    } else {
        const INTERVALS: usize = 6000;
        let lo = noise_mean - 9.0 * noise_std;
        let h = 18.0 * noise_std / INTERVALS as f64;
        for i in 0..=INTERVALS {
            let n = lo + i as f64 * h;
            let z = (n - noise_mean) / noise_std;
            let density = (-0.5 * z * z).exp();
            let simpson = match i {
                0 | INTERVALS => 1.0,
                _ if i % 2 == 1 => 4.0,
                _ => 2.0,
            };
            rounded_uniform_masses(weight * (1.0 + n), simpson * density, &mut acc);
        }
    }
    ComplaintPmf::from_weights(&acc).expect("positive total mass")
}

/// Adds `scale * P(clamp(round(s * U)) = m)` to `out[m]`.
fn rounded_uniform_masses(s: f64, scale: f64, out: &mut [f64]) {
    let cap = out.len() - 1;
    if s <= 0.5 {
        // s*U lies in [min(s,0), max(s,0)] and rounds (or clamps) to 0
        out[0] += scale;
        return;
    }
    for (m, slot) in out.iter_mut().enumerate() {
        let lo = (m as f64 - 0.5).max(0.0);
        let hi = if m == cap { f64::INFINITY } else { m as f64 + 0.5 };
        if lo >= s {
            break;
        }
        *slot += scale * (hi.min(s) - lo) / s;
    }
}

/// Per-slot travel-time predictions for a planning window.
pub trait Predictor {
    /// One weighting per slot, covering every edge of `graph`.
    fn predict(&self, graph: &PatrolGraph, window: &PlanningWindow) -> Result<Vec<EdgeWeighting>>;
}

/// Reads the ground-truth field at each slot's start minute.
#[derive(Clone, Debug)]
pub struct OraclePredictor<'a> {
    field: &'a TravelTimeField,
}

pub fn oracle_predictor(field: &TravelTimeField) -> OraclePredictor<'_> {
    OraclePredictor { field }
}

impl Predictor for OraclePredictor<'_> {
    fn predict(&self, graph: &PatrolGraph, window: &PlanningWindow) -> Result<Vec<EdgeWeighting>> {
        if window.end() > self.field.horizon() {
            return Err(TampaError::WindowOutOfRange {
                start: window.start,
                end: window.end(),
                horizon: self.field.horizon(),
            });
        }
        (0..window.slots)
            .map(|k| {
                let t = window.slot_time(k);
                graph
                    .edges()
                    .map(|e| {
                        self.field.get(e, t).map(|mu| (e, mu)).ok_or_else(|| {
                            TampaError::InvalidState(format!("no travel times for edge ({}, {})", e.0, e.1))
                        })
                    })
                    .collect::<Result<BTreeMap<_, _>>>()
                    .map(EdgeWeighting::from_map)
            })
            .collect()
    }
}

/// Repeats the most recent observation of each edge across the window.
#[derive(Clone, Debug, Default)]
pub struct PersistencePredictor {
    last: BTreeMap<Edge, f64>,
    mtt: BTreeMap<Edge, f64>,
}

pub fn persistence_predictor(
    history: &BTreeMap<Edge, Vec<f64>>,
    mtt: &BTreeMap<Edge, f64>,
) -> PersistencePredictor {
    let mut p = PersistencePredictor {
        last: BTreeMap::new(),
        mtt: mtt.clone(),
    };
    for (&e, series) in history {
        if let Some(&mu) = series.last() {
            p.observe(e, mu);
        }
    }
    p
}

impl PersistencePredictor {
    pub fn observe(&mut self, e: Edge, mu: f64) {
        self.last.insert(e, mu);
    }

    pub fn apply_split(&mut self, split: &EdgeSplit) {
        split.apply(&mut self.last, |m, f| m * f);
        split.apply(&mut self.mtt, |m, f| m * f);
    }

    fn current(&self, e: Edge) -> Result<f64> {
        let floor = self.mtt.get(&e).copied().ok_or_else(|| {
            TampaError::InvalidState(format!("no minimum travel time for edge ({}, {})", e.0, e.1))
        })?;
        Ok(self.last.get(&e).copied().unwrap_or(floor).max(floor))
    }
}

impl Predictor for PersistencePredictor {
    fn predict(&self, graph: &PatrolGraph, window: &PlanningWindow) -> Result<Vec<EdgeWeighting>> {
        let snapshot = graph
            .edges()
            .map(|e| self.current(e).map(|mu| (e, mu)))
            .collect::<Result<BTreeMap<_, _>>>()
            .map(EdgeWeighting::from_map)?;
        Ok(vec![snapshot; window.slots])
    }
}
