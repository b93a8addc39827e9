//! The damaged office building: area graph, victims, perturbations and the
//! mission clock.
//!
//! Maps are declared in a JSON map-spec document (see [`MapSpec`]). Area
//! geometry is a set of axis-aligned rectangles with disjoint interiors; an
//! edge between two areas means a doorway in the wall they share.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Rect};

pub type AreaId = usize;
pub type VictimId = u32;

/// Default map shipped with the crate.
pub const DEFAULT_MAP: &str = include_str!("../data/default_map.json");

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("map document is malformed: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("area ids must be contiguous from 0, found {0:?}")]
    NonContiguousIds(Vec<AreaId>),
    #[error("duplicate area name `{0}`")]
    DuplicateName(String),
    #[error("area {0} has a degenerate rectangle")]
    DegenerateRect(AreaId),
    #[error("areas `{0}` and `{1}` overlap")]
    Overlap(String, String),
    #[error("edge ({0}, {1}) references an unknown area")]
    UnknownArea(AreaId, AreaId),
    #[error("self edge on area {0}")]
    SelfEdge(AreaId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(AreaId, AreaId),
    #[error("areas {0} and {1} do not share a wall")]
    NotAdjacent(AreaId, AreaId),
    #[error("victim {0} lies outside every area")]
    VictimOutside(VictimId),
    #[error("duplicate victim id {0}")]
    DuplicateVictim(VictimId),
    #[error("victim {0}: {1}")]
    BadVictim(VictimId, &'static str),
    #[error("graph is disconnected; unreachable areas {0:?}")]
    Disconnected(Vec<AreaId>),
    #[error("blockage on missing edge ({0}, {1})")]
    MissingEdge(AreaId, AreaId),
    #[error("opening on already connected pair ({0}, {1})")]
    AlreadyConnected(AreaId, AreaId),
    #[error("fire on unknown area {0}")]
    UnknownFireArea(AreaId),
    #[error("unknown perturbation set `{0}`")]
    UnknownPerturbationSet(String),
    #[error("perturbation set `{0}`: {1}")]
    InvalidPerturbationSet(String, Box<WorldError>),
    #[error("position ({0}, {1}) is outside every area")]
    OutsideMap(f64, f64),
    #[error("area {1} is unreachable from area {0}")]
    Unreachable(AreaId, AreaId),
    #[error("invalid area id {0}")]
    InvalidArea(AreaId),
}

pub type Result<T, E = WorldError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaKind {
    Room,
    Corridor,
    Elevator,
    Bathroom,
    Stairwell,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AreaSegment {
    pub id: AreaId,
    pub name: String,
    pub kind: AreaKind,
    pub bounds: Rect,
}

/// Areas plus undirected connectivity and the set of areas on fire.
///
/// Edges are stored as ordered pairs `(lo, hi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AreaGraph {
    areas: Vec<AreaSegment>,
    edges: BTreeSet<(AreaId, AreaId)>,
    hazards: BTreeSet<AreaId>,
}

fn edge_key(a: AreaId, b: AreaId) -> (AreaId, AreaId) {
    (a.min(b), a.max(b))
}

impl AreaGraph {
    /// Builds a graph, checking every structural invariant except connectivity.
    pub fn new(areas: Vec<AreaSegment>, edges: &[(AreaId, AreaId)]) -> Result<Self> {
        let mut sorted = areas;
        sorted.sort_by_key(|a| a.id);
        if sorted.iter().enumerate().any(|(i, a)| a.id != i) {
            return Err(WorldError::NonContiguousIds(
                sorted.iter().map(|a| a.id).collect(),
            ));
        }
        let mut names = BTreeSet::new();
        for a in &sorted {
            if !names.insert(a.name.as_str()) {
                return Err(WorldError::DuplicateName(a.name.clone()));
            }
            let r = a.bounds;
            if !(r.width() > 0.0 && r.height() > 0.0 && r.min.is_finite() && r.max.is_finite()) {
                return Err(WorldError::DegenerateRect(a.id));
            }
        }
        for (i, a) in sorted.iter().enumerate() {
            for b in &sorted[i + 1..] {
                if a.bounds.interiors_overlap(&b.bounds) {
                    return Err(WorldError::Overlap(a.name.clone(), b.name.clone()));
                }
            }
        }
        let n = sorted.len();
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(WorldError::UnknownArea(a, b));
            }
            if a == b {
                return Err(WorldError::SelfEdge(a));
            }
            if sorted[a].bounds.shared_wall_midpoint(&sorted[b].bounds).is_none() {
                return Err(WorldError::NotAdjacent(a, b));
            }
            if !set.insert(edge_key(a, b)) {
                return Err(WorldError::DuplicateEdge(a, b));
            }
        }
        Ok(Self {
            areas: sorted,
            edges: set,
            hazards: BTreeSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    pub fn areas(&self) -> &[AreaSegment] {
        &self.areas
    }

    pub fn area(&self, id: AreaId) -> &AreaSegment {
        &self.areas[id]
    }

    pub fn area_by_name(&self, name: &str) -> Option<AreaId> {
        self.areas.iter().position(|a| a.name == name)
    }

    pub fn edges(&self) -> impl Iterator<Item = (AreaId, AreaId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn hazards(&self) -> &BTreeSet<AreaId> {
        &self.hazards
    }

    pub fn is_hazard(&self, id: AreaId) -> bool {
        self.hazards.contains(&id)
    }

    pub fn has_edge(&self, a: AreaId, b: AreaId) -> bool {
        self.edges.contains(&edge_key(a, b))
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, id: AreaId) -> Vec<AreaId> {
        let mut out: Vec<AreaId> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn degree(&self, id: AreaId) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == id || b == id).count()
    }

    pub fn centroid(&self, id: AreaId) -> Point {
        self.areas[id].bounds.centroid()
    }

    /// Doorway point between two connected areas: the midpoint of their
    /// shared wall.
    pub fn door(&self, a: AreaId, b: AreaId) -> Option<Point> {
        self.areas[a]
            .bounds
            .shared_wall_midpoint(&self.areas[b].bounds)
    }

    /// Point `inset` meters inside `a`, just in front of its door to `b`.
    pub fn threshold(&self, a: AreaId, b: AreaId, inset: f64) -> Option<Point> {
        let door = self.door(a, b)?;
        Some(self.areas[a].bounds.inset_from_wall(door, inset))
    }

    fn check_id(&self, id: AreaId) -> Result<()> {
        if id < self.areas.len() {
            Ok(())
        } else {
            Err(WorldError::InvalidArea(id))
        }
    }

    /// Area containing `p`. Points on shared walls resolve to the lowest id.
    pub fn area_of(&self, p: Point) -> Result<AreaId> {
        self.areas
            .iter()
            .find(|a| a.bounds.contains(p))
            .map(|a| a.id)
            .ok_or(WorldError::OutsideMap(p.x, p.y))
    }

    /// Breadth-first hop counts from `from`; `None` for unreachable areas.
    pub fn hops_from(&self, from: AreaId) -> Vec<Option<u32>> {
        let adjacency = self.adjacency();
        let mut dist = vec![None; self.areas.len()];
        if from >= self.areas.len() {
            return dist;
        }
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn adjacency(&self) -> Vec<Vec<AreaId>> {
        let mut adj = vec![Vec::new(); self.areas.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        self.unreachable_from_first().is_empty()
    }

    fn unreachable_from_first(&self) -> Vec<AreaId> {
        if self.areas.is_empty() {
            return Vec::new();
        }
        self.hops_from(0)
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// Minimum-hop path including both endpoints. Among equally short paths
    /// the lexicographically smallest id sequence is returned.
    pub fn shortest_path(&self, from: AreaId, to: AreaId) -> Result<Vec<AreaId>> {
        self.check_id(from)?;
        self.check_id(to)?;
        let to_target = self.hops_from(to);
        let Some(mut remaining) = to_target[from] else {
            return Err(WorldError::Unreachable(from, to));
        };
        let adjacency = self.adjacency();
        let mut path = vec![from];
        let mut current = from;
        while remaining > 0 {
            // adjacency lists are sorted, so the first match is the smallest id
            current = *adjacency[current]
                .iter()
                .find(|&&v| to_target[v] == Some(remaining - 1))
                .expect("BFS layer has a predecessor");
            path.push(current);
            remaining -= 1;
        }
        Ok(path)
    }

    /// Returns a new graph with `ps` applied in order. The original graph is
    /// left untouched. The result must stay connected.
    pub fn apply_perturbations(&self, ps: &[Perturbation]) -> Result<AreaGraph> {
        let mut next = self.clone();
        for p in ps {
            match *p {
                Perturbation::Blockage { edge: [a, b] } => {
                    if !next.edges.remove(&edge_key(a, b)) {
                        return Err(WorldError::MissingEdge(a, b));
                    }
                }
                Perturbation::Opening { edge: [a, b] } => {
                    next.check_id(a)?;
                    next.check_id(b)?;
                    if a == b {
                        return Err(WorldError::SelfEdge(a));
                    }
                    if next.has_edge(a, b) {
                        return Err(WorldError::AlreadyConnected(a, b));
                    }
                    if next.door(a, b).is_none() {
                        return Err(WorldError::NotAdjacent(a, b));
                    }
                    next.edges.insert(edge_key(a, b));
                }
                Perturbation::Fire { area } => {
                    if area >= next.areas.len() {
                        return Err(WorldError::UnknownFireArea(area));
                    }
                    next.hazards.insert(area);
                }
            }
        }
        let unreachable = next.unreachable_from_first();
        if !unreachable.is_empty() {
            return Err(WorldError::Disconnected(unreachable));
        }
        Ok(next)
    }

    /// Corridor-anchored zones: every corridor anchors one zone, and every
    /// other area joins the zone of its nearest corridor by hops (ties to the
    /// lower corridor id). Areas that cannot reach any corridor form
    /// singleton zones anchored on themselves.
    pub fn zone_decomposition(&self) -> Zones {
        let corridors: Vec<AreaId> = self
            .areas
            .iter()
            .filter(|a| a.kind == AreaKind::Corridor)
            .map(|a| a.id)
            .collect();
        let hop_tables: Vec<Vec<Option<u32>>> =
            corridors.iter().map(|&c| self.hops_from(c)).collect();

        let mut zones: Vec<Zone> = corridors
            .iter()
            .map(|&c| Zone {
                anchor: c,
                members: Vec::new(),
            })
            .collect();
        let mut zone_of = vec![usize::MAX; self.areas.len()];
        let mut singletons = Vec::new();
        for area in &self.areas {
            let best = hop_tables
                .iter()
                .enumerate()
                .filter_map(|(z, table)| table[area.id].map(|d| (d, corridors[z], z)))
                .min();
            match best {
                Some((_, _, z)) => {
                    zones[z].members.push(area.id);
                    zone_of[area.id] = z;
                }
                None => singletons.push(area.id),
            }
        }
        for id in singletons {
            zone_of[id] = zones.len();
            zones.push(Zone {
                anchor: id,
                members: vec![id],
            });
        }
        Zones { zones, zone_of }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Zone {
    pub anchor: AreaId,
    /// Ascending ids, anchor included.
    pub members: Vec<AreaId>,
}

/// A partition of the areas into zones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Zones {
    pub zones: Vec<Zone>,
    zone_of: Vec<usize>,
}

impl Zones {
    pub fn zone_of(&self, area: AreaId) -> usize {
        self.zone_of[area]
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }
}

/// A structural change to the building.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Perturbation {
    /// Removes an existing edge.
    Blockage { edge: [AreaId; 2] },
    /// Adds an edge between two geometrically adjacent areas.
    Opening { edge: [AreaId; 2] },
    /// Marks an area as on fire.
    Fire { area: AreaId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Green,
    Yellow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VictimState {
    Untriaged,
    Triaged,
    Expired,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Victim {
    pub id: VictimId,
    pub position: Point,
    pub severity: Severity,
    pub state: VictimState,
    /// Seconds after mission start; yellow victims only.
    pub expiry_time: Option<f64>,
}

impl Victim {
    pub fn is_live_untriaged(&self) -> bool {
        self.state == VictimState::Untriaged
    }
}

/// Mission timing and scoring defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub mission_duration_s: f64,
    pub yellow_expiry_s: f64,
    pub green_triage_s: f64,
    pub yellow_triage_s: f64,
    pub green_points: u32,
    pub yellow_points: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            mission_duration_s: 900.0,
            yellow_expiry_s: 420.0,
            green_triage_s: 7.5,
            yellow_triage_s: 15.0,
            green_points: 10,
            yellow_points: 30,
        }
    }
}

impl WorldConfig {
    pub fn triage_seconds(&self, severity: Severity) -> f64 {
        match severity {
            Severity::Green => self.green_triage_s,
            Severity::Yellow => self.yellow_triage_s,
        }
    }

    pub fn points(&self, severity: Severity) -> u32 {
        match severity {
            Severity::Green => self.green_points,
            Severity::Yellow => self.yellow_points,
        }
    }
}

/// Mutable mission state, advanced by [`step_world`].
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub clock: f64,
    pub mission_duration: f64,
    pub victims: Vec<Victim>,
    pub rescuer_position: Point,
    pub score: u32,
}

impl WorldState {
    pub fn new(victims: Vec<Victim>, start: Point, mission_duration: f64) -> Self {
        Self {
            clock: 0.0,
            mission_duration,
            victims,
            rescuer_position: start,
            score: 0,
        }
    }

    pub fn victim(&self, id: VictimId) -> Option<&Victim> {
        self.victims.iter().find(|v| v.id == id)
    }

    /// Marks a victim triaged and adds its points. Returns false when the
    /// victim is not untriaged.
    pub fn complete_triage(&mut self, id: VictimId, config: &WorldConfig) -> bool {
        let Some(v) = self.victims.iter_mut().find(|v| v.id == id) else {
            return false;
        };
        if v.state != VictimState::Untriaged {
            return false;
        }
        v.state = VictimState::Triaged;
        self.score += config.points(v.severity);
        true
    }

    pub fn live_yellows_remain(&self) -> bool {
        self.victims
            .iter()
            .any(|v| v.severity == Severity::Yellow && v.state == VictimState::Untriaged)
    }
}

/// Advances the clock by `dt` (clamped at mission end) and expires every
/// untriaged yellow victim whose expiry time has been reached.
pub fn step_world(state: &WorldState, dt: f64) -> WorldState {
    assert!(dt > 0.0, "step_world requires dt > 0");
    let mut next = state.clone();
    next.clock = (state.clock + dt).min(state.mission_duration);
    for v in &mut next.victims {
        if v.state == VictimState::Untriaged
            && v.severity == Severity::Yellow
            && v.expiry_time.is_some_and(|e| e <= next.clock + 1e-9)
        {
            v.state = VictimState::Expired;
        }
    }
    next
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct AreaSpec {
    id: AreaId,
    name: String,
    kind: AreaKind,
    rect: [f64; 4],
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct VictimSpec {
    id: VictimId,
    pos: [f64; 2],
    severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expiry_s: Option<f64>,
}

/// The map-spec document.
#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default)]
    name: Option<String>,
    areas: Vec<AreaSpec>,
    #[serde(default)]
    edges: Vec<[AreaId; 2]>,
    #[serde(default)]
    victims: Vec<VictimSpec>,
    #[serde(default)]
    perturbations: BTreeMap<String, Vec<Perturbation>>,
}

/// A loaded map: the unperturbed graph, the victim roster and named
/// perturbation sets.
#[derive(Clone, Debug)]
pub struct World {
    pub name: String,
    pub graph: AreaGraph,
    pub victims: Vec<Victim>,
    pub perturbation_sets: BTreeMap<String, Vec<Perturbation>>,
}

impl World {
    /// Graph after applying the named perturbation set. The empty name and
    /// `none` both select the unperturbed graph when no such set is declared.
    pub fn perturbed(&self, set: &str) -> Result<AreaGraph> {
        match self.perturbation_sets.get(set) {
            Some(ps) => self.graph.apply_perturbations(ps),
            None if set.is_empty() || set == "none" => Ok(self.graph.clone()),
            None => Err(WorldError::UnknownPerturbationSet(set.to_string())),
        }
    }

    /// Area containing each victim, indexed like `self.victims`.
    pub fn victim_areas(&self) -> Vec<AreaId> {
        self.victims
            .iter()
            .map(|v| self.graph.area_of(v.position).expect("validated at load"))
            .collect()
    }

    pub fn default_map() -> Self {
        load_map(DEFAULT_MAP).expect("shipped map is valid")
    }
}

/// Parses and validates a map-spec document.
pub fn load_map(text: &str) -> Result<World> {
    load_map_with(text, &WorldConfig::default())
}

pub fn load_map_with(text: &str, config: &WorldConfig) -> Result<World> {
    let spec: MapSpec = serde_json::from_str(text)?;
    let areas = spec
        .areas
        .into_iter()
        .map(|a| AreaSegment {
            id: a.id,
            name: a.name,
            kind: a.kind,
            bounds: Rect::new(a.rect[0], a.rect[1], a.rect[2], a.rect[3]),
        })
        .collect();
    let edges: Vec<(AreaId, AreaId)> = spec.edges.iter().map(|e| (e[0], e[1])).collect();
    let graph = AreaGraph::new(areas, &edges)?;

    let mut seen = BTreeSet::new();
    let mut victims = Vec::with_capacity(spec.victims.len());
    for v in spec.victims {
        if !seen.insert(v.id) {
            return Err(WorldError::DuplicateVictim(v.id));
        }
        let position = Point::new(v.pos[0], v.pos[1]);
        if graph.area_of(position).is_err() {
            return Err(WorldError::VictimOutside(v.id));
        }
        let expiry_time = match v.severity {
            Severity::Yellow => Some(v.expiry_s.unwrap_or(config.yellow_expiry_s)),
            Severity::Green if v.expiry_s.is_some() => {
                return Err(WorldError::BadVictim(v.id, "green victims do not expire"))
            }
            Severity::Green => None,
        };
        victims.push(Victim {
            id: v.id,
            position,
            severity: v.severity,
            state: VictimState::Untriaged,
            expiry_time,
        });
    }
    victims.sort_by_key(|v| v.id);

    let unreachable = graph.unreachable_from_first();
    if !unreachable.is_empty() {
        return Err(WorldError::Disconnected(unreachable));
    }
    for (name, ps) in &spec.perturbations {
        graph
            .apply_perturbations(ps)
            .map_err(|e| WorldError::InvalidPerturbationSet(name.clone(), Box::new(e)))?;
    }
    Ok(World {
        name: spec.name.unwrap_or_else(|| "map".to_string()),
        graph,
        victims,
        perturbation_sets: spec.perturbations,
    })
}
