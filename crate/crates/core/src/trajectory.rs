//! Rescuer trajectories: 5 Hz observations, discrete events and optional
//! per-observation strategy labels.
//!
//! Time is stored as an integer tick count (one tick = 0.2 s) so that logs
//! round-trip exactly.
//!
//! # Log format
//!
//! A trajectory log is UTF-8 JSON lines. The first line is the `meta`
//! record, followed by one `obs` record per observation, followed by one
//! `event` record per event:
//!
//! ```text
//! {"record":"meta","version":1,"map":"damaged-office","perturbation_set":"none","seed":7,"config":null,"victims":[{"id":0,"severity":"yellow","expiry_s":420.0}],"labeled":true}
//! {"record":"obs","t":0.0,"x":24.5,"y":7.0,"area":0,"fov":[],"label":"selective"}
//! {"record":"event","t":0.0,"kind":"area_enter","area":0}
//! {"record":"event","t":12.4,"kind":"victim_seen","victim":3}
//! ```
//!
//! Event kinds are `victim_seen`, `triage_start`, `triage_complete` (with a
//! `victim` field) and `area_enter`, `area_exit` (with an `area` field).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Point;
use crate::world::{AreaGraph, AreaId, AreaKind, Severity, VictimId};

/// Seconds per observation.
pub const TICK_S: f64 = 0.2;
pub const TICKS_PER_SECOND: u32 = 5;
/// A victim out of view for longer than this starts a new sighting episode.
pub const SIGHTING_GAP_TICKS: u32 = 10;
pub const LOG_VERSION: u32 = 1;

pub type Tick = u32;

pub fn tick_to_seconds(tick: Tick) -> f64 {
    tick as f64 / TICKS_PER_SECOND as f64
}

/// Nearest tick to `t` seconds, or `None` if `t` is not a multiple of 0.2 s.
pub fn seconds_to_tick(t: f64) -> Option<Tick> {
    let scaled = t * TICKS_PER_SECOND as f64;
    let rounded = scaled.round();
    if !t.is_finite() || rounded < 0.0 || (scaled - rounded).abs() > 1e-6 || rounded > u32::MAX as f64 {
        return None;
    }
    Some(rounded as Tick)
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: timestamp regression ({prev} s then {t} s)")]
    TimestampRegression { line: usize, prev: f64, t: f64 },
    #[error("line {line}: observations must be 0.2 s apart ({prev} s then {t} s)")]
    IrregularSampling { line: usize, prev: f64, t: f64 },
    #[error("line {line}: unknown event kind `{kind}`")]
    UnknownEventKind { line: usize, kind: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Selective,
    Opportunistic,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Selective, Strategy::Opportunistic];

    pub fn index(self) -> usize {
        match self {
            Strategy::Selective => 0,
            Strategy::Opportunistic => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Strategy::Selective
        } else {
            Strategy::Opportunistic
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Strategy::Selective => Strategy::Opportunistic,
            Strategy::Opportunistic => Strategy::Selective,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Selective => "selective",
            Strategy::Opportunistic => "opportunistic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub tick: Tick,
    pub position: Point,
    pub area: AreaId,
    /// Sorted ascending.
    pub fov_victims: Vec<VictimId>,
}

impl Observation {
    pub fn t(&self) -> f64 {
        tick_to_seconds(self.tick)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    VictimSeen(VictimId),
    TriageStart(VictimId),
    TriageComplete(VictimId),
    AreaEnter(AreaId),
    AreaExit(AreaId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub tick: Tick,
    pub kind: EventKind,
}

impl Event {
    pub fn t(&self) -> f64 {
        tick_to_seconds(self.tick)
    }
}

/// What the observer knows about each victim in the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VictimRecord {
    pub id: VictimId,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryMeta {
    pub map: String,
    pub perturbation_set: String,
    pub seed: u64,
    /// Summary of the generating configuration; `null` for imported logs.
    pub config: serde_json::Value,
    pub victims: Vec<VictimRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub observations: Vec<Observation>,
    pub events: Vec<Event>,
    /// One ground-truth label per observation, when known.
    pub labels: Option<Vec<Strategy>>,
}

impl Trajectory {
    pub fn severity_of(&self, victim: VictimId) -> Option<Severity> {
        self.meta
            .victims
            .iter()
            .find(|v| v.id == victim)
            .map(|v| v.severity)
    }

    /// Observation at `tick`, if inside the recorded range.
    pub fn observation_at(&self, tick: Tick) -> Option<&Observation> {
        let first = self.observations.first()?.tick;
        let idx = tick.checked_sub(first)? as usize;
        self.observations.get(idx)
    }

    pub fn label_at(&self, tick: Tick) -> Option<Strategy> {
        let first = self.observations.first()?.tick;
        let idx = tick.checked_sub(first)? as usize;
        self.labels.as_ref()?.get(idx).copied()
    }

    pub fn duration_s(&self) -> f64 {
        match (self.observations.first(), self.observations.last()) {
            (Some(a), Some(b)) => tick_to_seconds(b.tick - a.tick),
            _ => 0.0,
        }
    }

    /// Checks the structural invariants of the data model.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let first = self
            .observations
            .first()
            .ok_or_else(|| TrajectoryError::Invalid("trajectory has no observations".into()))?;
        for (i, w) in self.observations.windows(2).enumerate() {
            if w[1].tick != w[0].tick + 1 {
                return Err(TrajectoryError::Invalid(format!(
                    "observation {} is not 0.2 s after its predecessor",
                    i + 1
                )));
            }
        }
        let last = self.observations.last().map_or(first.tick, |o| o.tick);
        let mut prev = first.tick;
        for e in &self.events {
            if e.tick < prev || e.tick > last {
                return Err(TrajectoryError::Invalid(format!(
                    "event at {} s is out of order or outside the observation range",
                    e.t()
                )));
            }
            prev = e.tick;
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.observations.len() {
                return Err(TrajectoryError::Invalid(
                    "label count differs from observation count".into(),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the serialized log, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(serialize(self).as_bytes()))
    }
}

// ---------------------------------------------------------------------------
// Serialization

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Meta {
        version: u32,
        map: String,
        perturbation_set: String,
        seed: u64,
        config: serde_json::Value,
        victims: Vec<VictimRecord>,
        labeled: bool,
    },
    Obs {
        t: f64,
        x: f64,
        y: f64,
        area: AreaId,
        fov: Vec<VictimId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<Strategy>,
    },
    Event {
        t: f64,
        kind: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        victim: Option<VictimId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        area: Option<AreaId>,
    },
}

fn event_record(e: &Event) -> Record {
    let (kind, victim, area) = match e.kind {
        EventKind::VictimSeen(v) => ("victim_seen", Some(v), None),
        EventKind::TriageStart(v) => ("triage_start", Some(v), None),
        EventKind::TriageComplete(v) => ("triage_complete", Some(v), None),
        EventKind::AreaEnter(a) => ("area_enter", None, Some(a)),
        EventKind::AreaExit(a) => ("area_exit", None, Some(a)),
    };
    Record::Event {
        t: e.t(),
        kind: kind.to_string(),
        victim,
        area,
    }
}

/// Renders a trajectory as a line-delimited log document.
pub fn serialize(traj: &Trajectory) -> String {
    let mut out = String::new();
    let meta = Record::Meta {
        version: LOG_VERSION,
        map: traj.meta.map.clone(),
        perturbation_set: traj.meta.perturbation_set.clone(),
        seed: traj.meta.seed,
        config: traj.meta.config.clone(),
        victims: traj.meta.victims.clone(),
        labeled: traj.labels.is_some(),
    };
    push_line(&mut out, &meta);
    for (i, o) in traj.observations.iter().enumerate() {
        let rec = Record::Obs {
            t: o.t(),
            x: o.position.x,
            y: o.position.y,
            area: o.area,
            fov: o.fov_victims.clone(),
            label: traj.labels.as_ref().map(|l| l[i]),
        };
        push_line(&mut out, &rec);
    }
    for e in &traj.events {
        push_line(&mut out, &event_record(e));
    }
    out
}

fn push_line(out: &mut String, rec: &Record) {
    out.push_str(&serde_json::to_string(rec).expect("records serialize"));
    out.push('\n');
}

/// Parses a log document produced by [`serialize`] (or written by hand in
/// the same format).
pub fn deserialize(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut meta: Option<(TrajectoryMeta, bool)> = None;
    let mut observations = Vec::new();
    let mut labels = Vec::new();
    let mut events: Vec<Event> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| TrajectoryError::Malformed { line, message };
        let rec: Record = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
        match rec {
            Record::Meta {
                version,
                map,
                perturbation_set,
                seed,
                config,
                victims,
                labeled,
            } => {
                if meta.is_some() || !observations.is_empty() || !events.is_empty() {
                    return Err(malformed("meta record must come first and only once".into()));
                }
                if version != LOG_VERSION {
                    return Err(malformed(format!("unsupported log version {version}")));
                }
                meta = Some((
                    TrajectoryMeta {
                        map,
                        perturbation_set,
                        seed,
                        config,
                        victims,
                    },
                    labeled,
                ));
            }
            Record::Obs {
                t,
                x,
                y,
                area,
                fov,
                label,
            } => {
                let Some((_, labeled)) = &meta else {
                    return Err(malformed("observation before meta record".into()));
                };
                if !events.is_empty() {
                    return Err(malformed("observation after event records".into()));
                }
                let tick = seconds_to_tick(t)
                    .ok_or_else(|| malformed(format!("time {t} is not a multiple of 0.2 s")))?;
                if let Some(prev) = observations.last().map(|o: &Observation| o.tick) {
                    if tick <= prev {
                        return Err(TrajectoryError::TimestampRegression {
                            line,
                            prev: tick_to_seconds(prev),
                            t,
                        });
                    }
                    if tick != prev + 1 {
                        return Err(TrajectoryError::IrregularSampling {
                            line,
                            prev: tick_to_seconds(prev),
                            t,
                        });
                    }
                }
                match (labeled, label) {
                    (true, Some(l)) => labels.push(l),
                    (false, None) => {}
                    (true, None) => return Err(malformed("missing label".into())),
                    (false, Some(_)) => return Err(malformed("label in unlabeled log".into())),
                }
                let mut fov_victims = fov;
                if fov_victims.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(malformed("fov ids must be strictly ascending".into()));
                }
                fov_victims.shrink_to_fit();
                observations.push(Observation {
                    tick,
                    position: Point::new(x, y),
                    area,
                    fov_victims,
                });
            }
            Record::Event {
                t,
                kind,
                victim,
                area,
            } => {
                if meta.is_none() {
                    return Err(malformed("event before meta record".into()));
                }
                let tick = seconds_to_tick(t)
                    .ok_or_else(|| malformed(format!("time {t} is not a multiple of 0.2 s")))?;
                if let Some(prev) = events.last() {
                    if tick < prev.tick {
                        return Err(TrajectoryError::TimestampRegression {
                            line,
                            prev: prev.t(),
                            t,
                        });
                    }
                }
                let need_victim = || victim.ok_or_else(|| malformed(format!("`{kind}` needs a victim")));
                let need_area = || area.ok_or_else(|| malformed(format!("`{kind}` needs an area")));
                let kind = match kind.as_str() {
                    "victim_seen" => EventKind::VictimSeen(need_victim()?),
                    "triage_start" => EventKind::TriageStart(need_victim()?),
                    "triage_complete" => EventKind::TriageComplete(need_victim()?),
                    "area_enter" => EventKind::AreaEnter(need_area()?),
                    "area_exit" => EventKind::AreaExit(need_area()?),
                    _ => return Err(TrajectoryError::UnknownEventKind { line, kind }),
                };
                events.push(Event { tick, kind });
            }
        }
    }

    let (meta, labeled) = meta.ok_or_else(|| TrajectoryError::Invalid("missing meta record".into()))?;
    let traj = Trajectory {
        meta,
        observations,
        events,
        labels: labeled.then_some(labels),
    };
    traj.validate()?;
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Decision points

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKind {
    Triage,
    Navigation,
    General,
}

impl DecisionKind {
    pub const ALL: [DecisionKind; 3] = [
        DecisionKind::Triage,
        DecisionKind::Navigation,
        DecisionKind::General,
    ];
}

/// The trigger behind a decision point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecisionContext {
    /// A victim entered the field of view.
    VictimSighted(VictimId),
    /// The rescuer is in a corridor next to a room it has not entered yet.
    RoomEntrance { corridor: AreaId, room: AreaId },
    TriageFinished(VictimId),
    LeftRoom(AreaId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionPoint {
    pub tick: Tick,
    pub kind: DecisionKind,
    pub context: DecisionContext,
}

impl DecisionPoint {
    pub fn t(&self) -> f64 {
        tick_to_seconds(self.tick)
    }
}

/// Triage, navigation and general decision points, in time order.
///
/// Navigation triggers are approximated without door geometry: each time the
/// rescuer enters a corridor, one point is emitted per adjacent room that it
/// has not entered so far.
pub fn extract_decision_points(traj: &Trajectory, graph: &AreaGraph) -> Vec<DecisionPoint> {
    let mut points = Vec::new();
    // a victim sighting starts when it enters the view after a gap
    let mut last_in_view: BTreeMap<VictimId, Tick> = BTreeMap::new();
    for o in &traj.observations {
        for &v in &o.fov_victims {
            let fresh = last_in_view
                .get(&v)
                .is_none_or(|&k| o.tick > k + SIGHTING_GAP_TICKS);
            if fresh {
                points.push(DecisionPoint {
                    tick: o.tick,
                    kind: DecisionKind::Triage,
                    context: DecisionContext::VictimSighted(v),
                });
            }
            last_in_view.insert(v, o.tick);
        }
    }
    let sighted: BTreeSet<(Tick, VictimId)> = points
        .iter()
        .filter_map(|p| match p.context {
            DecisionContext::VictimSighted(v) => Some((p.tick, v)),
            _ => None,
        })
        .collect();
    let mut entered: BTreeSet<AreaId> = BTreeSet::new();
    for e in &traj.events {
        match e.kind {
            EventKind::AreaEnter(a) => {
                entered.insert(a);
                if a < graph.len() && graph.area(a).kind == AreaKind::Corridor {
                    for room in graph.neighbors(a) {
                        if graph.area(room).kind != AreaKind::Corridor && !entered.contains(&room) {
                            points.push(DecisionPoint {
                                tick: e.tick,
                                kind: DecisionKind::Navigation,
                                context: DecisionContext::RoomEntrance { corridor: a, room },
                            });
                        }
                    }
                }
            }
            EventKind::TriageComplete(v) => points.push(DecisionPoint {
                tick: e.tick,
                kind: DecisionKind::General,
                context: DecisionContext::TriageFinished(v),
            }),
            EventKind::AreaExit(a) => {
                if a < graph.len() && graph.area(a).kind != AreaKind::Corridor {
                    points.push(DecisionPoint {
                        tick: e.tick,
                        kind: DecisionKind::General,
                        context: DecisionContext::LeftRoom(a),
                    });
                }
            }
            EventKind::VictimSeen(v) => {
                if !sighted.contains(&(e.tick, v)) {
                    points.push(DecisionPoint {
                        tick: e.tick,
                        kind: DecisionKind::Triage,
                        context: DecisionContext::VictimSighted(v),
                    });
                }
            }
            EventKind::TriageStart(_) => {}
        }
    }
    points.sort_by_key(|p| p.tick);
    points
}

/// Uniformly samples up to `k` points of each kind without replacement.
/// The result is in time order.
pub fn sample_decision_points(points: &[DecisionPoint], k: usize, seed: u64) -> Vec<DecisionPoint> {
    assert!(k >= 1, "sample size must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::new();
    for kind in DecisionKind::ALL {
        let of_kind: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == kind)
            .map(|(i, _)| i)
            .collect();
        let n = of_kind.len();
        if n <= k {
            chosen.extend(of_kind);
        } else {
            chosen.extend(sample(&mut rng, n, k).into_iter().map(|j| of_kind[j]));
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| points[i]).collect()
}

// ---------------------------------------------------------------------------
// Model inputs

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriageElementKind {
    Seen,
    Completed,
}

/// One element of the irregularly spaced triage sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TriageElement {
    pub tick: Tick,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// 0 for green, 1 for yellow.
    pub severity: f64,
    pub victim: VictimId,
    pub kind: TriageElementKind,
    pub label: Option<Strategy>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TriageSequence {
    pub elements: Vec<TriageElement>,
}

impl TriageSequence {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// True when the trajectory had no qualifying events.
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> Option<Vec<Strategy>> {
        self.elements.iter().map(|e| e.label).collect()
    }
}

/// One element per `VictimSeen` and `TriageComplete` event, in time order.
/// Positions are the rescuer's position at the event tick.
pub fn to_triage_sequence(traj: &Trajectory) -> TriageSequence {
    let severities: BTreeMap<VictimId, Severity> =
        traj.meta.victims.iter().map(|v| (v.id, v.severity)).collect();
    let elements = traj
        .events
        .iter()
        .filter_map(|e| {
            let (victim, kind) = match e.kind {
                EventKind::VictimSeen(v) => (v, TriageElementKind::Seen),
                EventKind::TriageComplete(v) => (v, TriageElementKind::Completed),
                _ => return None,
            };
            let obs = traj.observation_at(e.tick)?;
            let severity = match severities.get(&victim) {
                Some(Severity::Yellow) => 1.0,
                _ => 0.0,
            };
            Some(TriageElement {
                tick: e.tick,
                t: e.t(),
                x: obs.position.x,
                y: obs.position.y,
                severity,
                victim,
                kind,
                label: traj.label_at(e.tick),
            })
        })
        .collect();
    TriageSequence { elements }
}

/// Run-length compressed area stream of the observations.
pub fn to_area_sequence(traj: &Trajectory) -> Vec<AreaId> {
    let mut out: Vec<AreaId> = Vec::new();
    for o in &traj.observations {
        if out.last() != Some(&o.area) {
            out.push(o.area);
        }
    }
    out
}

/// Area transitions: `(tick of entering the next area, from, to)`.
pub fn area_transitions(traj: &Trajectory) -> Vec<(Tick, AreaId, AreaId)> {
    traj.observations
        .windows(2)
        .filter(|w| w[0].area != w[1].area)
        .map(|w| (w[1].tick, w[0].area, w[1].area))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(events: Vec<Event>, areas: &[AreaId]) -> Trajectory {
        let observations = areas
            .iter()
            .enumerate()
            .map(|(i, &a)| Observation {
                tick: i as Tick,
                position: Point::new(i as f64, 0.5),
                area: a,
                fov_victims: vec![],
            })
            .collect::<Vec<_>>();
        let n = observations.len();
        Trajectory {
            meta: TrajectoryMeta {
                map: "test".into(),
                perturbation_set: "none".into(),
                seed: 0,
                config: serde_json::Value::Null,
                victims: vec![
                    VictimRecord { id: 1, severity: Severity::Green, expiry_s: None },
                    VictimRecord { id: 2, severity: Severity::Yellow, expiry_s: Some(420.0) },
                ],
            },
            observations,
            events,
            labels: Some(vec![Strategy::Selective; n]),
        }
    }

    #[test]
    fn tick_conversion_is_exact() {
        for k in 0..5000u32 {
            assert_eq!(seconds_to_tick(tick_to_seconds(k)), Some(k));
        }
        assert_eq!(tick_to_seconds(62), 12.4);
        assert_eq!(seconds_to_tick(0.3), None);
        assert_eq!(seconds_to_tick(-0.2), None);
    }

    #[test]
    fn run_length_rule() {
        let t = tiny(vec![], &[3, 3, 4, 4, 3]);
        assert_eq!(to_area_sequence(&t), vec![3, 4, 3]);
        let t = tiny(vec![], &[5, 5, 5]);
        assert_eq!(to_area_sequence(&t), vec![5]);
    }

    #[test]
    fn triage_sequence_counts_seen_and_complete() {
        let mut ev = Vec::new();
        for (k, kind) in [
            (1, EventKind::VictimSeen(1)),
            (2, EventKind::VictimSeen(2)),
            (3, EventKind::TriageStart(2)),
            (4, EventKind::VictimSeen(1)),
            (8, EventKind::TriageComplete(2)),
            (9, EventKind::TriageStart(1)),
            (12, EventKind::TriageComplete(1)),
        ] {
            ev.push(Event { tick: k, kind });
        }
        let t = tiny(ev, &[0; 13]);
        let seq = to_triage_sequence(&t);
        assert_eq!(seq.len(), 5);
        assert_eq!(seq.elements[1].severity, 1.0);
        assert_eq!(seq.elements[0].severity, 0.0);
        assert_eq!(seq.elements[4].x, 12.0);
        let gaps: BTreeSet<Tick> = seq.elements.windows(2).map(|w| w[1].tick - w[0].tick).collect();
        assert!(gaps.len() > 1, "event-driven spacing is irregular");
    }

    #[test]
    fn empty_triage_sequence_is_flagged() {
        let t = tiny(vec![], &[0, 0]);
        assert!(to_triage_sequence(&t).is_empty());
    }

    #[test]
    fn round_trip_and_errors() {
        let t = tiny(
            vec![
                Event { tick: 0, kind: EventKind::AreaEnter(0) },
                Event { tick: 2, kind: EventKind::VictimSeen(1) },
            ],
            &[0, 0, 0],
        );
        let doc = serialize(&t);
        assert_eq!(deserialize(&doc).unwrap(), t);

        let lines: Vec<&str> = doc.lines().collect();
        let swapped = [lines[0], lines[2], lines[1], lines[3], lines[4], lines[5]].join("\n");
        assert!(matches!(
            deserialize(&swapped),
            Err(TrajectoryError::TimestampRegression { .. })
        ));

        let bad_kind = doc.replace("victim_seen", "victim_waved");
        assert!(matches!(
            deserialize(&bad_kind),
            Err(TrajectoryError::UnknownEventKind { .. })
        ));

        assert!(matches!(
            deserialize("{not json}"),
            Err(TrajectoryError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn sampling_saturates_and_is_deterministic() {
        let pts: Vec<DecisionPoint> = (0..40)
            .map(|i| DecisionPoint {
                tick: i,
                kind: DecisionKind::ALL[(i % 3) as usize],
                context: DecisionContext::TriageFinished(i),
            })
            .collect();
        let s = sample_decision_points(&pts, 5, 9);
        assert_eq!(s.len(), 15);
        assert_eq!(s, sample_decision_points(&pts, 5, 9));
        assert!(s.windows(2).all(|w| w[0].tick <= w[1].tick));
        let all = sample_decision_points(&pts, 100, 9);
        assert_eq!(all, pts);
    }
}
