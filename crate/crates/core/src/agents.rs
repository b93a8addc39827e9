//! Faux-human rescuer agents.
//!
//! An agent explores the building by planning over area sequences, picks
//! subgoals soft-optimally (Boltzmann over utilities), and triages victims
//! according to a selective or opportunistic policy that may flip once at a
//! fixed time. Every run is deterministic in its seed.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::trajectory::{
    Event, EventKind, Observation, Strategy, Tick, Trajectory, TrajectoryMeta, VictimRecord,
    SIGHTING_GAP_TICKS, TICKS_PER_SECOND, TICK_S,
};
use crate::world::{
    step_world, AreaGraph, AreaId, AreaKind, Severity, Victim, VictimState, World, WorldConfig,
    WorldError, WorldState, Zones,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("cannot sample from an empty utility vector")]
    EmptyUtilities,
    #[error("utility {0} is not finite")]
    NonFiniteUtility(f64),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("invalid agent config: {0}")]
    BadConfig(String),
    #[error("invalid dataset config: {0}")]
    BadDataset(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    FrontierGreedy,
    ZonePlanner,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriagePolicy {
    pub kind: Strategy,
    /// Mission time at which the policy flips to the other kind.
    #[serde(default)]
    pub switch_time: Option<f64>,
}

impl TriagePolicy {
    pub fn fixed(kind: Strategy) -> Self {
        Self {
            kind,
            switch_time: None,
        }
    }

    pub fn kind_at(&self, t: f64) -> Strategy {
        match self.switch_time {
            Some(s) if t >= s => self.kind.flipped(),
            _ => self.kind,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub triage: TriagePolicy,
    pub temperature: f64,
    pub planner: PlannerKind,
    pub seed: u64,
    /// Meters per second.
    pub speed: f64,
    pub fov_degrees: f64,
    pub fov_range_m: f64,
    /// Utility subtracted from frontier targets that are on fire.
    pub hazard_penalty: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            triage: TriagePolicy::fixed(Strategy::Opportunistic),
            temperature: 1.0,
            planner: PlannerKind::Mixed,
            seed: 0,
            speed: 2.0,
            fov_degrees: 90.0,
            fov_range_m: 10.0,
            hazard_penalty: 2.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, mission_duration: f64) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::BadConfig(m.to_string()));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad("speed must be positive");
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees <= 360.0 && self.fov_range_m > 0.0) {
            return bad("field of view must be a positive cone");
        }
        if let Some(s) = self.triage.switch_time {
            if !(s > 0.0 && s < mission_duration) {
                return bad("switch_time must lie inside the mission");
            }
        }
        Ok(())
    }
}

/// Samples index `i` with probability `exp(u_i / T) / sum_j exp(u_j / T)`.
pub fn boltzmann_sample<R: Rng + ?Sized>(
    utilities: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<usize, AgentError> {
    if utilities.is_empty() {
        return Err(AgentError::EmptyUtilities);
    }
    if !(temperature > 0.0) {
        return Err(AgentError::BadTemperature(temperature));
    }
    if let Some(&u) = utilities.iter().find(|u| !u.is_finite()) {
        return Err(AgentError::NonFiniteUtility(u));
    }
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = utilities
        .iter()
        .map(|u| ((u - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return Ok(i);
        }
        r -= w;
    }
    // rounding fell off the end; return the last non-zero weight
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
}

/// Planning context for one perturbed graph: zones and all-pairs hop counts.
#[derive(Clone, Debug)]
pub struct Planner {
    pub graph: AreaGraph,
    pub zones: Zones,
    hops: Vec<Vec<Option<u32>>>,
}

impl Planner {
    pub fn new(graph: AreaGraph) -> Self {
        let hops = (0..graph.len()).map(|a| graph.hops_from(a)).collect();
        let zones = graph.zone_decomposition();
        Self { graph, zones, hops }
    }

    pub fn hops(&self, from: AreaId, to: AreaId) -> u32 {
        self.hops[from][to].unwrap_or(u32::MAX)
    }

    /// Unvisited areas adjacent to a visited area (or to `current` when
    /// nothing is visited), by hop distance from `current`, ties by id.
    pub fn frontier_candidates(&self, visited: &BTreeSet<AreaId>, current: AreaId) -> Vec<AreaId> {
        let sources: Vec<AreaId> = if visited.is_empty() {
            vec![current]
        } else {
            visited.iter().copied().collect()
        };
        let mut frontier = BTreeSet::new();
        for s in sources {
            for n in self.graph.neighbors(s) {
                if !visited.contains(&n) && n != current {
                    frontier.insert(n);
                }
            }
        }
        let mut out: Vec<AreaId> = frontier.into_iter().collect();
        out.sort_by_key(|&a| (self.hops(current, a), a));
        out
    }

    /// Sorts by hop count, then by how far each area is from `position`.
    fn nearest_first(&self, mut areas: Vec<AreaId>, current: AreaId, position: Point) -> Vec<AreaId> {
        let key = |a: AreaId| {
            (
                self.hops(current, a),
                self.graph.area(a).bounds.distance_to(position),
            )
        };
        areas.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b)));
        areas
    }

    fn zone_rooms(&self, visited: &BTreeSet<AreaId>, current: AreaId, position: Point) -> Vec<AreaId> {
        let zone = &self.zones.zones[self.zones.zone_of(current)];
        let pending = zone
            .members
            .iter()
            .copied()
            .filter(|&a| a != current && !visited.contains(&a))
            .collect();
        self.nearest_first(pending, current, position)
    }

    fn frontier_pick<R: Rng + ?Sized>(
        &self,
        config: &AgentConfig,
        visited: &BTreeSet<AreaId>,
        current: AreaId,
        rng: &mut R,
    ) -> Vec<AreaId> {
        let candidates = self.frontier_candidates(visited, current);
        if candidates.is_empty() {
            return Vec::new();
        }
        let utilities: Vec<f64> = candidates
            .iter()
            .map(|&a| {
                let penalty = if self.graph.is_hazard(a) {
                    config.hazard_penalty
                } else {
                    0.0
                };
                -(self.hops(current, a) as f64) - penalty
            })
            .collect();
        let i = boltzmann_sample(&utilities, config.temperature, rng)
            .expect("frontier utilities are finite and non-empty");
        vec![candidates[i]]
    }

    /// Ordered subgoal areas for the agent standing at the centroid of
    /// `current`.
    pub fn plan_room_sequence<R: Rng + ?Sized>(
        &self,
        config: &AgentConfig,
        visited: &BTreeSet<AreaId>,
        current: AreaId,
        rng: &mut R,
    ) -> Vec<AreaId> {
        let here = self.graph.centroid(current);
        self.plan_from(config, visited, current, here, rng)
    }

    /// Ordered subgoal areas for the agent standing at `position` in `current`.
    pub fn plan_from<R: Rng + ?Sized>(
        &self,
        config: &AgentConfig,
        visited: &BTreeSet<AreaId>,
        current: AreaId,
        position: Point,
        rng: &mut R,
    ) -> Vec<AreaId> {
        match config.planner {
            PlannerKind::FrontierGreedy => self.frontier_pick(config, visited, current, rng),
            PlannerKind::ZonePlanner => {
                let mut plan = self.zone_rooms(visited, current, position);
                let own = self.zones.zone_of(current);
                let next_zone = self
                    .zones
                    .zones
                    .iter()
                    .enumerate()
                    .filter(|&(z, zone)| {
                        z != own && zone.members.iter().any(|m| !visited.contains(m))
                    })
                    .map(|(_, zone)| zone.anchor)
                    .min_by_key(|&anchor| (self.hops(current, anchor), anchor));
                if let Some(anchor) = next_zone {
                    plan.push(anchor);
                }
                plan
            }
            PlannerKind::Mixed => {
                let plan = self.zone_rooms(visited, current, position);
                if plan.is_empty() {
                    self.frontier_pick(config, visited, current, rng)
                } else {
                    plan
                }
            }
        }
    }
}

pub fn frontier_candidates(graph: &AreaGraph, visited: &BTreeSet<AreaId>, current: AreaId) -> Vec<AreaId> {
    Planner::new(graph.clone()).frontier_candidates(visited, current)
}

pub fn plan_room_sequence<R: Rng + ?Sized>(
    graph: &AreaGraph,
    config: &AgentConfig,
    visited: &BTreeSet<AreaId>,
    current: AreaId,
    rng: &mut R,
) -> Vec<AreaId> {
    Planner::new(graph.clone()).plan_room_sequence(config, visited, current, rng)
}

/// Whether an agent following `kind` triages `victim` now.
///
/// `live_yellows_remain` is true while any yellow victim is neither triaged
/// nor expired.
pub fn decide_triage(victim: &Victim, kind: Strategy, live_yellows_remain: bool) -> bool {
    if victim.state != VictimState::Untriaged {
        return false;
    }
    match kind {
        Strategy::Opportunistic => true,
        Strategy::Selective => victim.severity == Severity::Yellow || !live_yellows_remain,
    }
}

/// A world loaded together with the perturbation set the agent runs in.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub world: World,
    pub perturbation_set: String,
    pub world_config: WorldConfig,
    pub planner: Planner,
    pub start_area: AreaId,
    victim_areas: Vec<AreaId>,
}

impl Scenario {
    pub fn new(world: World, perturbation_set: &str) -> Result<Self, AgentError> {
        Self::with_config(world, perturbation_set, WorldConfig::default())
    }

    pub fn with_config(
        world: World,
        perturbation_set: &str,
        world_config: WorldConfig,
    ) -> Result<Self, AgentError> {
        let graph = world.perturbed(perturbation_set)?;
        let start_area = graph
            .areas()
            .iter()
            .find(|a| a.kind == AreaKind::Stairwell)
            .map_or(0, |a| a.id);
        let victim_areas = world.victim_areas();
        Ok(Self {
            world,
            perturbation_set: perturbation_set.to_string(),
            world_config,
            planner: Planner::new(graph),
            start_area,
            victim_areas,
        })
    }

    pub fn graph(&self) -> &AreaGraph {
        &self.planner.graph
    }

    pub fn victim_records(&self) -> Vec<VictimRecord> {
        self.world
            .victims
            .iter()
            .map(|v| VictimRecord {
                id: v.id,
                severity: v.severity,
                expiry_s: v.expiry_time,
            })
            .collect()
    }
}

/// Walking stays this far off walls when passing through a doorway.
const DOOR_INSET_M: f64 = 0.5;

#[derive(Clone, Debug)]
enum Action {
    Move(Point),
    Scan(u8),
    StartTriage(usize),
    Triage { victim: usize, remaining: u32 },
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    config: &'a AgentConfig,
    rng: ChaCha8Rng,
    state: WorldState,
    tick: Tick,
    max_tick: Tick,
    position: Point,
    heading: f64,
    area: AreaId,
    visited: BTreeSet<AreaId>,
    known: BTreeSet<usize>,
    last_visible: Vec<Option<Tick>>,
    actions: VecDeque<Action>,
    walking_to_victim: Option<usize>,
    /// The queued route leads to an exploration target, not a victim.
    exploring: bool,
    observations: Vec<Observation>,
    events: Vec<Event>,
    labels: Vec<Strategy>,
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d < -PI {
        d += 2.0 * PI;
    }
    d.abs()
}

fn triage_ticks(seconds: f64) -> u32 {
    (seconds * TICKS_PER_SECOND as f64 - 1e-9).ceil().max(1.0) as u32
}

impl<'a> Simulation<'a> {
    fn new(scenario: &'a Scenario, config: &'a AgentConfig) -> Self {
        let start = scenario.graph().centroid(scenario.start_area);
        let state = WorldState::new(
            scenario.world.victims.clone(),
            start,
            scenario.world_config.mission_duration_s,
        );
        let max_tick = (scenario.world_config.mission_duration_s * TICKS_PER_SECOND as f64).floor() as Tick;
        Self {
            scenario,
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            state,
            tick: 0,
            max_tick,
            position: start,
            heading: PI / 2.0,
            area: scenario.start_area,
            visited: BTreeSet::from([scenario.start_area]),
            known: BTreeSet::new(),
            last_visible: vec![None; scenario.world.victims.len()],
            actions: VecDeque::from([Action::Scan(4)]),
            walking_to_victim: None,
            exploring: false,
            observations: Vec::new(),
            events: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn now(&self) -> f64 {
        self.tick as f64 * TICK_S
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(Event {
            tick: self.tick,
            kind,
        });
    }

    fn policy_kind(&self) -> Strategy {
        self.config.triage.kind_at(self.now())
    }

    fn update_fov(&mut self) -> Vec<u32> {
        let half = self.config.fov_degrees.to_radians() / 2.0;
        let mut visible = Vec::new();
        for (i, v) in self.scenario.world.victims.iter().enumerate() {
            if self.scenario.victim_areas[i] != self.area {
                continue;
            }
            let d = self.position.distance(v.position);
            if d > self.config.fov_range_m {
                continue;
            }
            let in_cone = d < 1e-9 || {
                let bearing = (v.position.y - self.position.y).atan2(v.position.x - self.position.x);
                angle_diff(bearing, self.heading) <= half + 1e-12
            };
            if !in_cone {
                continue;
            }
            visible.push(v.id);
            let state = self.state.victims[i].state;
            let new_episode = match self.last_visible[i] {
                None => true,
                Some(k) => self.tick > k + SIGHTING_GAP_TICKS,
            };
            let was_visible = self.last_visible[i] == Some(self.tick.wrapping_sub(1));
            if state == VictimState::Untriaged && new_episode && !was_visible {
                self.emit(EventKind::VictimSeen(v.id));
                self.known.insert(i);
            }
            self.last_visible[i] = Some(self.tick);
        }
        visible.sort_unstable();
        visible
    }

    fn record(&mut self, fov: Vec<u32>) {
        self.observations.push(Observation {
            tick: self.tick,
            position: self.position,
            area: self.area,
            fov_victims: fov,
        });
        self.labels.push(self.policy_kind());
    }

    fn triageable(&self, i: usize) -> bool {
        decide_triage(
            &self.state.victims[i],
            self.policy_kind(),
            self.state.live_yellows_remain(),
        )
    }

    fn route_to(&self, target_area: AreaId, end: Point) -> VecDeque<Action> {
        let graph = self.scenario.graph();
        let path = graph
            .shortest_path(self.area, target_area)
            .expect("scenario graph is connected");
        let mut out = VecDeque::new();
        for w in path.windows(2) {
            for (a, b) in [(w[0], w[1]), (w[1], w[0])] {
                let p = graph.threshold(a, b, DOOR_INSET_M).expect("edges have doors");
                out.push_back(Action::Move(p));
            }
        }
        out.push_back(Action::Move(end));
        out
    }

    /// Chooses new actions when idle or when a triage opportunity appears.
    fn decide(&mut self) -> bool {
        if matches!(
            self.actions.front(),
            Some(Action::Triage { .. } | Action::StartTriage(_))
        ) || self.walking_to_victim.is_some()
        {
            return true;
        }
        // nearest known victim in this area that the policy wants triaged
        let here: Vec<usize> = self
            .known
            .iter()
            .copied()
            .filter(|&i| self.scenario.victim_areas[i] == self.area && self.triageable(i))
            .collect();
        if let Some(&i) = here.iter().min_by(|&&a, &&b| {
            let da = self.position.distance(self.state.victims[a].position);
            let db = self.position.distance(self.state.victims[b].position);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        }) {
            self.actions.clear();
            self.exploring = false;
            self.actions.push_back(Action::Move(self.state.victims[i].position));
            self.actions.push_back(Action::StartTriage(i));
            self.walking_to_victim = Some(i);
            return true;
        }
        if !self.actions.is_empty() {
            return true;
        }
        // a remembered victim elsewhere that is now worth going back for
        let elsewhere = self
            .known
            .iter()
            .copied()
            .filter(|&i| self.triageable(i))
            .min_by_key(|&i| {
                let a = self.scenario.victim_areas[i];
                (self.scenario.planner.hops(self.area, a), i)
            });
        if let Some(i) = elsewhere {
            let a = self.scenario.victim_areas[i];
            self.actions = self.route_to(a, self.state.victims[i].position);
            self.exploring = false;
            return true;
        }
        let plan = self.scenario.planner.plan_from(
            self.config,
            &self.visited,
            self.area,
            self.position,
            &mut self.rng,
        );
        match plan.first() {
            Some(&target) => {
                let graph = self.scenario.graph();
                if graph.area(target).kind == AreaKind::Corridor {
                    // corridors are searched from the doorway
                    self.actions = self.route_to(target, self.position);
                    self.actions.pop_back();
                } else {
                    self.actions = self.route_to(target, graph.centroid(target));
                }
                self.actions.push_back(Action::Scan(4));
                self.exploring = true;
                true
            }
            None => false,
        }
    }

    /// Executes one tick of the action queue.
    fn act(&mut self) {
        let mut budget = self.config.speed * TICK_S;
        loop {
            match self.actions.front_mut() {
                Some(Action::Move(target)) => {
                    let target = *target;
                    if budget <= 0.0 {
                        break;
                    }
                    let d = self.position.distance(target);
                    if d > 1e-12 {
                        self.heading = (target.y - self.position.y).atan2(target.x - self.position.x);
                    }
                    if d <= budget {
                        self.position = target;
                        budget -= d;
                        self.actions.pop_front();
                    } else {
                        let f = budget / d;
                        self.position = Point::new(
                            self.position.x + (target.x - self.position.x) * f,
                            self.position.y + (target.y - self.position.y) * f,
                        );
                        budget = 0.0;
                    }
                }
                Some(Action::Scan(n)) => {
                    // only start a scan on a tick without movement
                    if budget < self.config.speed * TICK_S {
                        break;
                    }
                    self.heading += PI / 2.0;
                    *n -= 1;
                    if *n == 0 {
                        self.actions.pop_front();
                    }
                    break;
                }
                Some(Action::StartTriage(i)) => {
                    let i = *i;
                    if budget < self.config.speed * TICK_S {
                        break;
                    }
                    self.actions.pop_front();
                    self.walking_to_victim = None;
                    let v = &self.state.victims[i];
                    if v.state != VictimState::Untriaged {
                        self.known.remove(&i);
                        break;
                    }
                    let ticks = triage_ticks(self.scenario.world_config.triage_seconds(v.severity));
                    let id = v.id;
                    self.emit(EventKind::TriageStart(id));
                    self.actions.push_front(Action::Triage {
                        victim: i,
                        remaining: ticks,
                    });
                    break;
                }
                Some(Action::Triage { victim, remaining }) => {
                    let i = *victim;
                    *remaining -= 1;
                    let done = *remaining == 0;
                    if self.state.victims[i].state != VictimState::Untriaged {
                        // expired while being treated
                        self.actions.pop_front();
                        self.known.remove(&i);
                        self.actions.push_back(Action::Scan(4));
                    } else if done {
                        self.actions.pop_front();
                        self.state.complete_triage(self.state.victims[i].id, &self.scenario.world_config);
                        self.known.remove(&i);
                        let id = self.state.victims[i].id;
                        self.emit(EventKind::TriageComplete(id));
                        self.actions.push_back(Action::Scan(4));
                    }
                    break;
                }
                None => break,
            }
        }
        self.state.rescuer_position = self.position;
    }

    fn run(mut self) -> Trajectory {
        self.emit(EventKind::AreaEnter(self.area));
        let fov = self.update_fov();
        self.record(fov);

        while self.tick < self.max_tick {
            if !self.decide() {
                break;
            }
            self.tick += 1;
            self.state = step_world(&self.state, TICK_S);
            for (i, v) in self.state.victims.iter().enumerate() {
                if v.state == VictimState::Expired {
                    self.known.remove(&i);
                }
            }
            if let Some(i) = self.walking_to_victim {
                if self.state.victims[i].state != VictimState::Untriaged {
                    self.walking_to_victim = None;
                    self.actions.clear();
                }
            }
            self.act();
            let area = self
                .scenario
                .graph()
                .area_of(self.position)
                .expect("movement stays inside the building");
            if area != self.area {
                self.emit(EventKind::AreaExit(self.area));
                self.area = area;
                self.visited.insert(area);
                self.emit(EventKind::AreaEnter(area));
                let kind = self.scenario.graph().area(area).kind;
                if self.exploring && kind == AreaKind::Corridor {
                    // look around from the doorway and choose afresh
                    self.actions.clear();
                    self.exploring = false;
                }
            }
            let fov = self.update_fov();
            self.record(fov);
        }

        Trajectory {
            meta: TrajectoryMeta {
                map: self.scenario.world.name.clone(),
                perturbation_set: self.scenario.perturbation_set.clone(),
                seed: self.config.seed,
                config: serde_json::to_value(self.config).expect("config serializes"),
                victims: self.scenario.victim_records(),
            },
            observations: self.observations,
            events: self.events,
            labels: Some(self.labels),
        }
    }
}

/// Runs one faux-human agent through the scenario.
pub fn generate_trajectory(scenario: &Scenario, config: &AgentConfig) -> Result<Trajectory, AgentError> {
    config.validate(scenario.world_config.mission_duration_s)?;
    Ok(Simulation::new(scenario, config).run())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyMix {
    pub selective: f64,
    pub opportunistic: f64,
    pub switching: f64,
}

impl Default for PolicyMix {
    fn default() -> Self {
        Self {
            selective: 0.375,
            opportunistic: 0.375,
            switching: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerMix {
    pub frontier_greedy: f64,
    pub zone_planner: f64,
    pub mixed: f64,
}

impl Default for PlannerMix {
    fn default() -> Self {
        Self {
            frontier_greedy: 0.2,
            zone_planner: 0.4,
            mixed: 0.4,
        }
    }
}

/// How a batch of faux trajectories is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub count: usize,
    pub seed: u64,
    pub policy_mix: PolicyMix,
    pub temperature_range: [f64; 2],
    pub planner_mix: PlannerMix,
    /// `default` or a path to a map-spec document.
    pub map: String,
    pub perturbation_set: String,
    /// Switch times are drawn uniformly from this window, in seconds.
    pub switch_window: [f64; 2],
    pub speed: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            policy_mix: PolicyMix::default(),
            temperature_range: [0.5, 2.0],
            planner_mix: PlannerMix::default(),
            map: "default".to_string(),
            perturbation_set: "none".to_string(),
            switch_window: [90.0, 420.0],
            speed: 2.0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::BadDataset(m.to_string()));
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        let p = &self.policy_mix;
        if [p.selective, p.opportunistic, p.switching]
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
            || p.selective + p.opportunistic + p.switching <= 0.0
        {
            return bad("policy_mix weights must be non-negative with positive sum");
        }
        let q = &self.planner_mix;
        if [q.frontier_greedy, q.zone_planner, q.mixed]
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
            || q.frontier_greedy + q.zone_planner + q.mixed <= 0.0
        {
            return bad("planner_mix weights must be non-negative with positive sum");
        }
        let [lo, hi] = self.temperature_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad("temperature_range must be positive and ordered");
        }
        let [lo, hi] = self.switch_window;
        if !(lo > 0.0 && hi >= lo) {
            return bad("switch_window must be positive and ordered");
        }
        Ok(())
    }

    /// The agent configuration drawn for `seed`.
    pub fn sample_agent(&self, seed: u64) -> AgentConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let p = &self.policy_mix;
        let r = rng.gen::<f64>() * (p.selective + p.opportunistic + p.switching);
        let triage = if r < p.selective {
            TriagePolicy::fixed(Strategy::Selective)
        } else if r < p.selective + p.opportunistic {
            TriagePolicy::fixed(Strategy::Opportunistic)
        } else {
            let kind = if rng.gen_bool(0.5) {
                Strategy::Selective
            } else {
                Strategy::Opportunistic
            };
            let [lo, hi] = self.switch_window;
            // whole seconds keep the switch on a tick boundary
            let switch = (lo + rng.gen::<f64>() * (hi - lo)).round();
            TriagePolicy {
                kind,
                switch_time: Some(switch),
            }
        };
        let [tlo, thi] = self.temperature_range;
        let temperature = tlo + rng.gen::<f64>() * (thi - tlo);
        let q = &self.planner_mix;
        let r = rng.gen::<f64>() * (q.frontier_greedy + q.zone_planner + q.mixed);
        let planner = if r < q.frontier_greedy {
            PlannerKind::FrontierGreedy
        } else if r < q.frontier_greedy + q.zone_planner {
            PlannerKind::ZonePlanner
        } else {
            PlannerKind::Mixed
        };
        AgentConfig {
            triage,
            temperature,
            planner,
            seed,
            speed: self.speed,
            ..AgentConfig::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub count: usize,
    pub selective_starts: usize,
    pub opportunistic_starts: usize,
    pub switching: usize,
    /// Observation-level label counts.
    pub selective_observations: usize,
    pub opportunistic_observations: usize,
}

impl DatasetSummary {
    pub fn from_trajectories(trajs: &[Trajectory]) -> Self {
        let mut s = DatasetSummary {
            count: trajs.len(),
            ..Default::default()
        };
        for t in trajs {
            let Some(labels) = &t.labels else { continue };
            match labels.first() {
                Some(Strategy::Selective) => s.selective_starts += 1,
                Some(Strategy::Opportunistic) => s.opportunistic_starts += 1,
                None => {}
            }
            if labels.windows(2).any(|w| w[0] != w[1]) {
                s.switching += 1;
            }
            for l in labels {
                match l {
                    Strategy::Selective => s.selective_observations += 1,
                    Strategy::Opportunistic => s.opportunistic_observations += 1,
                }
            }
        }
        s
    }
}

/// Generates `config.count` trajectories with seeds `seed..seed + count`.
pub fn generate_dataset(
    scenario: &Scenario,
    config: &DatasetConfig,
) -> Result<(Vec<Trajectory>, DatasetSummary), AgentError> {
    config.validate()?;
    let trajs = (0..config.count as u64)
        .map(|i| generate_trajectory(scenario, &config.sample_agent(config.seed + i)))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = DatasetSummary::from_trajectories(&trajs);
    Ok((trajs, summary))
}
