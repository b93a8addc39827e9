//! Evidence accumulation: a belief vector over a fixed condition set is
//! updated multiplicatively whenever a detector finds evidence in the
//! trajectory, and the most likely condition is read off by argmax.
//!
//! Two instantiations ship here. The triage predictor tracks
//! `{selective, opportunistic}` from ignored and on-sight green victims. The
//! location predictor scores the neighbors of the current area by degree,
//! distance from the rescuer and whether they were visited already.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{
    area_transitions, to_triage_sequence, EventKind, Strategy, Tick, Trajectory, TICKS_PER_SECOND,
};
use crate::geometry::Point;
use crate::world::{AreaGraph, AreaId, Severity, VictimId};

#[derive(Debug, Error, PartialEq)]
pub enum EvidenceError {
    #[error("belief needs at least 2 conditions, got {0}")]
    TooFewConditions(usize),
    #[error("expected {expected} weights, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weights must be positive and finite")]
    BadWeight,
    #[error("duplicate condition label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid evidence config: {0}")]
    BadConfig(String),
}

/// Non-negative, unit-sum likelihood over `d` conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Normalizes non-negative scores. Returns `None` when all are zero.
    pub fn from_scores(scores: Vec<f64>) -> Option<Self> {
        let total: f64 = scores.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        Some(Self(scores.into_iter().map(|s| s / total).collect()))
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Lifts every entry to at least `floor` (water-filling), keeping the
    /// vector on the simplex. `floor` must be below `1 / d`.
    pub fn with_floor(&self, floor: f64) -> Self {
        let d = self.0.len();
        if floor <= 0.0 || d == 0 {
            return self.clone();
        }
        let mut clamped = vec![false; d];
        loop {
            let fixed = clamped.iter().filter(|&&c| c).count() as f64 * floor;
            let free_mass: f64 = self
                .0
                .iter()
                .zip(&clamped)
                .filter(|(_, &c)| !c)
                .map(|(v, _)| v)
                .sum();
            let scale = if free_mass > 0.0 { (1.0 - fixed) / free_mass } else { 0.0 };
            let mut changed = false;
            for i in 0..d {
                if !clamped[i] && self.0[i] * scale < floor {
                    clamped[i] = true;
                    changed = true;
                }
            }
            if !changed {
                let out = (0..d)
                    .map(|i| if clamped[i] { floor } else { self.0[i] * scale })
                    .collect();
                return Self(out);
            }
        }
    }
}

/// Uniform prior over `d` conditions.
pub fn init_belief(d: usize) -> Result<BeliefVector, EvidenceError> {
    if d < 2 {
        return Err(EvidenceError::TooFewConditions(d));
    }
    Ok(BeliefVector(vec![1.0 / d as f64; d]))
}

/// Multiplicative update with renormalization: `b'_i = b_i w_i / sum_j b_j w_j`.
pub fn apply_update(b: &BeliefVector, weights: &[f64]) -> Result<BeliefVector, EvidenceError> {
    if weights.len() != b.len() {
        return Err(EvidenceError::DimensionMismatch {
            expected: b.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(EvidenceError::BadWeight);
    }
    let scores: Vec<f64> = b.0.iter().zip(weights).map(|(b, w)| b * w).collect();
    BeliefVector::from_scores(scores).ok_or(EvidenceError::BadWeight)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionSet {
    labels: Vec<String>,
}

impl ConditionSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, EvidenceError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(EvidenceError::DuplicateLabel(l.clone()));
            }
        }
        if labels.len() < 2 {
            return Err(EvidenceError::TooFewConditions(labels.len()));
        }
        Ok(Self { labels })
    }

    pub fn strategies() -> Self {
        Self::new(Strategy::ALL.map(Strategy::as_str)).expect("two distinct labels")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Label of the most likely condition (lowest index on ties).
pub fn predict<'c>(b: &BeliefVector, conds: &'c ConditionSet) -> &'c str {
    &conds.labels[b.argmax()]
}

/// A piece of evidence found in a trajectory. `tick` is the first tick at
/// which the evidence is observable from the trajectory prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct Evidence {
    pub id: String,
    pub tick: Tick,
    pub victim: Option<VictimId>,
}

/// Finds evidence of one kind. Detectors must be causal: an evidence at tick
/// `k` may only depend on the trajectory up to `k`.
pub trait Detector: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, traj: &Trajectory) -> Vec<Evidence>;
}

/// Who was alive and untriaged when.
struct VictimTimeline {
    severity: BTreeMap<VictimId, Severity>,
    expiry_tick: BTreeMap<VictimId, Tick>,
    completed: BTreeMap<VictimId, Tick>,
}

impl VictimTimeline {
    fn new(traj: &Trajectory) -> Self {
        let severity = traj.meta.victims.iter().map(|v| (v.id, v.severity)).collect();
        let expiry_tick = traj
            .meta
            .victims
            .iter()
            .filter_map(|v| {
                v.expiry_s
                    .map(|e| (v.id, (e * TICKS_PER_SECOND as f64 - 1e-6).ceil().max(0.0) as Tick))
            })
            .collect();
        let mut completed = BTreeMap::new();
        for e in &traj.events {
            if let EventKind::TriageComplete(v) = e.kind {
                completed.entry(v).or_insert(e.tick);
            }
        }
        Self {
            severity,
            expiry_tick,
            completed,
        }
    }

    fn is_green(&self, v: VictimId) -> bool {
        self.severity.get(&v) == Some(&Severity::Green)
    }

    /// A yellow victim neither triaged nor expired at `tick`.
    fn live_yellow_at(&self, tick: Tick) -> bool {
        self.severity.iter().any(|(id, s)| {
            *s == Severity::Yellow
                && self.completed.get(id).is_none_or(|&c| c > tick)
                && self.expiry_tick.get(id).is_none_or(|&x| x > tick)
        })
    }
}

/// A green victim seen while yellows were alive, not triaged within the
/// grace window nor before the rescuer left the area.
pub struct IgnoredGreen {
    pub grace_ticks: Tick,
}

impl Detector for IgnoredGreen {
    fn name(&self) -> &str {
        "ignored_green"
    }

    fn detect(&self, traj: &Trajectory) -> Vec<Evidence> {
        let timeline = VictimTimeline::new(traj);
        let last = traj.observations.last().map_or(0, |o| o.tick);
        let mut out = Vec::new();
        for (i, e) in traj.events.iter().enumerate() {
            let EventKind::VictimSeen(v) = e.kind else { continue };
            if !timeline.is_green(v) || !timeline.live_yellow_at(e.tick) {
                continue;
            }
            let exit = traj.events[i + 1..]
                .iter()
                .find(|x| matches!(x.kind, EventKind::AreaExit(_)))
                .map(|x| x.tick);
            let Some(exit) = exit else { continue };
            let deadline = exit.max(e.tick + self.grace_ticks);
            if deadline > last {
                continue;
            }
            let started = traj.events[i + 1..]
                .iter()
                .take_while(|x| x.tick <= deadline)
                .any(|x| x.kind == EventKind::TriageStart(v));
            if !started {
                out.push(Evidence {
                    id: self.name().to_string(),
                    tick: deadline,
                    victim: Some(v),
                });
            }
        }
        out.sort_by_key(|e| e.tick);
        out
    }
}

/// A green victim triaged in the same area visit in which it was sighted,
/// while yellows were alive.
pub struct GreenTriagedOnSight;

impl Detector for GreenTriagedOnSight {
    fn name(&self) -> &str {
        "green_triaged_on_sight"
    }

    fn detect(&self, traj: &Trajectory) -> Vec<Evidence> {
        let timeline = VictimTimeline::new(traj);
        let mut sighted_this_visit: BTreeSet<VictimId> = BTreeSet::new();
        let mut out = Vec::new();
        for e in &traj.events {
            match e.kind {
                EventKind::AreaExit(_) => sighted_this_visit.clear(),
                EventKind::VictimSeen(v) => {
                    sighted_this_visit.insert(v);
                }
                EventKind::TriageStart(v)
                    if timeline.is_green(v)
                        && sighted_this_visit.contains(&v)
                        && timeline.live_yellow_at(e.tick) =>
                {
                    out.push(Evidence {
                        id: self.name().to_string(),
                        tick: e.tick,
                        victim: Some(v),
                    });
                }
                _ => {}
            }
        }
        out
    }
}

pub struct LibraryEntry {
    pub detector: Box<dyn Detector>,
    /// Multiplicative update applied when the detector fires.
    pub weights: Vec<f64>,
}

/// Detectors paired with their belief updates.
pub struct EvidenceLibrary {
    pub conditions: ConditionSet,
    pub entries: Vec<LibraryEntry>,
    /// Minimum belief kept on every condition after each update; 0 disables.
    pub belief_floor: f64,
}

/// Belief after each applied evidence.
#[derive(Clone, Debug)]
pub struct BeliefTrace {
    pub prior: BeliefVector,
    pub steps: Vec<(Evidence, BeliefVector)>,
}

impl BeliefTrace {
    /// Belief holding at `tick` (all evidence with tick <= `tick` applied).
    pub fn belief_at(&self, tick: Tick) -> &BeliefVector {
        let n = self.steps.partition_point(|(e, _)| e.tick <= tick);
        if n == 0 {
            &self.prior
        } else {
            &self.steps[n - 1].1
        }
    }

    pub fn first_evidence_tick(&self) -> Option<Tick> {
        self.steps.first().map(|(e, _)| e.tick)
    }
}

impl EvidenceLibrary {
    pub fn new(conditions: ConditionSet, belief_floor: f64) -> Self {
        Self {
            conditions,
            entries: Vec::new(),
            belief_floor,
        }
    }

    pub fn add(&mut self, detector: Box<dyn Detector>, weights: Vec<f64>) -> Result<(), EvidenceError> {
        if weights.len() != self.conditions.len() {
            return Err(EvidenceError::DimensionMismatch {
                expected: self.conditions.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(EvidenceError::BadWeight);
        }
        self.entries.push(LibraryEntry { detector, weights });
        Ok(())
    }

    /// Runs every detector and folds their evidence into the belief in time
    /// order (library order within a tick).
    pub fn run(&self, traj: &Trajectory) -> BeliefTrace {
        let mut found: Vec<(Evidence, usize)> = Vec::new();
        for (k, entry) in self.entries.iter().enumerate() {
            found.extend(entry.detector.detect(traj).into_iter().map(|e| (e, k)));
        }
        found.sort_by_key(|(e, k)| (e.tick, *k));
        let prior = init_belief(self.conditions.len()).expect("condition set has >= 2 labels");
        let mut belief = prior.clone();
        let mut steps = Vec::with_capacity(found.len());
        for (e, k) in found {
            belief = apply_update(&belief, &self.entries[k].weights)
                .expect("library weights are validated")
                .with_floor(self.belief_floor);
            steps.push((e, belief.clone()));
        }
        BeliefTrace { prior, steps }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Hop count between the rescuer's area and the candidate.
    Hops,
    /// Meters from the rescuer to the candidate's centroid.
    Centroid,
    /// Meters from the rescuer to the nearest point of the candidate.
    Boundary,
    /// Meters from the rescuer to the doorway into the candidate.
    Door,
}

/// Numeric parameters of the shipped evidence library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceConfig {
    pub ignored_green_weight: f64,
    pub on_sight_weight: f64,
    pub grace_window_s: f64,
    pub belief_floor: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub rho: f64,
    pub distance: DistanceMetric,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        Self {
            ignored_green_weight: 3.0,
            on_sight_weight: 3.0,
            grace_window_s: 4.0,
            belief_floor: 0.3,
            alpha: 0.75,
            lambda: 16.0,
            rho: 0.05,
            distance: DistanceMetric::Door,
        }
    }
}

impl EvidenceConfig {
    pub fn validate(&self) -> Result<(), EvidenceError> {
        let bad = |m: &str| Err(EvidenceError::BadConfig(m.to_string()));
        if !(self.ignored_green_weight > 0.0 && self.on_sight_weight > 0.0) {
            return bad("weights must be positive");
        }
        if !(self.grace_window_s >= 0.0) {
            return bad("grace window must be non-negative");
        }
        if !(0.0..0.5).contains(&self.belief_floor) {
            return bad("belief_floor must lie in [0, 0.5)");
        }
        if !(self.lambda > 0.0 && self.rho > 0.0 && self.alpha.is_finite()) {
            return bad("lambda and rho must be positive");
        }
        Ok(())
    }

    /// The triage library: ignored greens favor selective, on-sight green
    /// triage favors opportunistic.
    pub fn triage_library(&self) -> EvidenceLibrary {
        let mut lib = EvidenceLibrary::new(ConditionSet::strategies(), self.belief_floor);
        let grace_ticks = (self.grace_window_s * TICKS_PER_SECOND as f64).round() as Tick;
        lib.add(
            Box::new(IgnoredGreen { grace_ticks }),
            vec![self.ignored_green_weight, 1.0],
        )
        .expect("two weights");
        lib.add(Box::new(GreenTriagedOnSight), vec![1.0, self.on_sight_weight])
            .expect("two weights");
        lib
    }
}

/// Per-element triage predictions for one trajectory.
#[derive(Clone, Debug)]
pub struct TriageRun {
    pub ticks: Vec<Tick>,
    pub beliefs: Vec<BeliefVector>,
    pub predictions: Vec<Strategy>,
    /// Index of the first element at or after the first evidence.
    pub first_informed: Option<usize>,
    pub trace: BeliefTrace,
}

/// Evidence-accumulation triage prediction at every element of the
/// trajectory's triage sequence.
pub fn run_triage_predictor(traj: &Trajectory, config: &EvidenceConfig) -> TriageRun {
    let trace = config.triage_library().run(traj);
    let seq = to_triage_sequence(traj);
    let ticks: Vec<Tick> = seq.elements.iter().map(|e| e.tick).collect();
    let beliefs: Vec<BeliefVector> = ticks.iter().map(|&k| trace.belief_at(k).clone()).collect();
    let predictions = beliefs.iter().map(|b| Strategy::from_index(b.argmax())).collect();
    let first_informed = trace
        .first_evidence_tick()
        .and_then(|f| ticks.iter().position(|&k| k >= f));
    TriageRun {
        ticks,
        beliefs,
        predictions,
        first_informed,
        trace,
    }
}

/// One next-area prediction, made when the rescuer enters `current`.
#[derive(Clone, Debug)]
pub struct LocationPrediction {
    pub tick: Tick,
    pub current: AreaId,
    /// `None` when the current area has no neighbors.
    pub predicted: Option<AreaId>,
    pub actual: AreaId,
    pub belief: Option<BeliefVector>,
}

impl LocationPrediction {
    pub fn correct(&self) -> bool {
        self.predicted == Some(self.actual)
    }
}

/// Scores every neighbor `a` of `current` as
/// `degree(a)^alpha * exp(-distance(a) / lambda) * rho^visited(a)`, measured
/// from `position`, and normalizes. `None` when `current` has no neighbors.
pub fn score_neighbors(
    graph: &AreaGraph,
    current: AreaId,
    position: Point,
    visited: &BTreeSet<AreaId>,
    config: &EvidenceConfig,
) -> Option<BeliefVector> {
    let hops = (config.distance == DistanceMetric::Hops).then(|| graph.hops_from(current));
    let scores: Vec<f64> = (0..graph.len())
        .map(|a| {
            if !graph.has_edge(current, a) {
                return 0.0;
            }
            let distance = match (config.distance, &hops) {
                (_, Some(h)) => h[a].unwrap_or(u32::MAX) as f64,
                (DistanceMetric::Boundary, None) => graph.area(a).bounds.distance_to(position),
                (DistanceMetric::Door, None) => graph
                    .door(current, a)
                    .map_or(f64::INFINITY, |d| d.distance(position)),
                _ => position.distance(graph.centroid(a)),
            };
            let visited_factor = if visited.contains(&a) { config.rho } else { 1.0 };
            (graph.degree(a) as f64).powf(config.alpha) * (-distance / config.lambda).exp() * visited_factor
        })
        .collect();
    BeliefVector::from_scores(scores)
}

/// Predicts the best-scoring neighbor (lowest id on ties) on entering each
/// area, from the position at entry. One prediction per area transition.
pub fn run_location_predictor(
    traj: &Trajectory,
    graph: &AreaGraph,
    config: &EvidenceConfig,
) -> Vec<LocationPrediction> {
    let transitions = area_transitions(traj);
    let Some(first) = traj.observations.first() else {
        return Vec::new();
    };
    let mut visited: BTreeSet<AreaId> = BTreeSet::from([first.area]);
    let mut entry = (first.tick, first.area);
    let mut out = Vec::with_capacity(transitions.len());
    for &(tick, _, to) in &transitions {
        let (entered_at, current) = entry;
        let position = traj
            .observation_at(entered_at)
            .map(|o| o.position)
            .unwrap_or(first.position);
        let belief = score_neighbors(graph, current, position, &visited, config);
        out.push(LocationPrediction {
            tick: entered_at,
            current,
            predicted: belief.as_ref().map(BeliefVector::argmax),
            actual: to,
            belief,
        });
        visited.insert(to);
        entry = (tick, to);
    }
    out
}
