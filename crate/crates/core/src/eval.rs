//! Accuracy protocol for triage-strategy and next-location predictors, and
//! comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evidence::{run_location_predictor, run_triage_predictor, EvidenceConfig};
use crate::neural::{NeuralError, TransformerModel, TriageModel};
use crate::trajectory::{area_transitions, to_area_sequence, to_triage_sequence, Strategy, Trajectory};
use crate::world::{AreaGraph, AreaId};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory {0} has unlabeled triage events")]
    Unlabeled(usize),
    #[error("trajectory {index} does not fit the map: {reason}")]
    MapMismatch { index: usize, reason: String },
    #[error("predictor returned {got} predictions for {expected} decision steps")]
    CountMismatch { expected: usize, got: usize },
    #[error("no reports to tabulate")]
    NoReports,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Triage,
    NextLocation,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Triage => "triage",
            Task::NextLocation => "next_location",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Task::Triage => "Triage strategy",
            Task::NextLocation => "Next location",
        }
    }
}

/// Which triage events are scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriageScope {
    All,
    /// Events at or after the trajectory's first discriminative evidence as
    /// detected by the given library configuration; trajectories without
    /// evidence contribute nothing.
    AfterFirstEvidence(EvidenceConfig),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub index: usize,
    pub seed: u64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub correct: usize,
    pub total: usize,
    pub per_trajectory: Vec<TrajectoryScore>,
}

impl TaskResult {
    /// `correct / total`; 0 when nothing was scored.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn push(&mut self, index: usize, seed: u64, correct: usize, total: usize) {
        self.correct += correct;
        self.total += total;
        self.per_trajectory.push(TrajectoryScore {
            index,
            seed,
            correct,
            total,
        });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub results: BTreeMap<Task, TaskResult>,
}

impl MethodReport {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            results: BTreeMap::new(),
        }
    }

    pub fn with(mut self, task: Task, result: TaskResult) -> Self {
        self.results.insert(task, result);
        self
    }

    pub fn accuracy(&self, task: Task) -> Option<f64> {
        self.results.get(&task).map(TaskResult::accuracy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
    /// Short hashes of every configuration that influenced the numbers.
    pub fingerprints: BTreeMap<String, String>,
    pub trajectories: usize,
}

/// First 16 hex digits of the SHA-256 of `value`'s JSON form.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

// ---------------------------------------------------------------------------
// Predictors

/// Predicts one strategy per element of the trajectory's triage sequence.
pub trait TriagePredictor {
    fn name(&self) -> String;
    fn predict(&self, index: usize, traj: &Trajectory) -> Result<Vec<Strategy>, EvalError>;
}

/// Predicts one next area per area transition of the trajectory; `None`
/// abstains (scored as wrong).
pub trait LocationPredictor {
    fn name(&self) -> String;
    fn predict(&self, index: usize, traj: &Trajectory, graph: &AreaGraph) -> Result<Vec<Option<AreaId>>, EvalError>;
}

pub struct EvidenceTriage(pub EvidenceConfig);

impl TriagePredictor for EvidenceTriage {
    fn name(&self) -> String {
        "Evidence accumulation".into()
    }

    fn predict(&self, _: usize, traj: &Trajectory) -> Result<Vec<Strategy>, EvalError> {
        Ok(run_triage_predictor(traj, &self.0).predictions)
    }
}

pub struct NeuralTriage(pub TriageModel);

impl TriagePredictor for NeuralTriage {
    fn name(&self) -> String {
        self.0.arch.variant.display_name().into()
    }

    fn predict(&self, _: usize, traj: &Trajectory) -> Result<Vec<Strategy>, EvalError> {
        let seq = to_triage_sequence(traj);
        if seq.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.0.predict(&seq.elements)?)
    }
}

pub struct ConstantTriage(pub Strategy);

impl TriagePredictor for ConstantTriage {
    fn name(&self) -> String {
        format!("Always {}", self.0.as_str())
    }

    fn predict(&self, _: usize, traj: &Trajectory) -> Result<Vec<Strategy>, EvalError> {
        Ok(vec![self.0; to_triage_sequence(traj).len()])
    }
}

/// Fair coin per event, seeded by `seed` and the trajectory index.
pub struct RandomTriage {
    pub seed: u64,
}

impl TriagePredictor for RandomTriage {
    fn name(&self) -> String {
        "Random guess".into()
    }

    fn predict(&self, index: usize, traj: &Trajectory) -> Result<Vec<Strategy>, EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Ok((0..to_triage_sequence(traj).len())
            .map(|_| Strategy::from_index(rng.gen_range(0..2)))
            .collect())
    }
}

/// Reads the ground truth.
pub struct OracleTriage;

impl TriagePredictor for OracleTriage {
    fn name(&self) -> String {
        "Oracle".into()
    }

    fn predict(&self, index: usize, traj: &Trajectory) -> Result<Vec<Strategy>, EvalError> {
        to_triage_sequence(traj).labels().ok_or(EvalError::Unlabeled(index))
    }
}

pub struct EvidenceLocation(pub EvidenceConfig);

impl LocationPredictor for EvidenceLocation {
    fn name(&self) -> String {
        "Evidence accumulation".into()
    }

    fn predict(&self, _: usize, traj: &Trajectory, graph: &AreaGraph) -> Result<Vec<Option<AreaId>>, EvalError> {
        Ok(run_location_predictor(traj, graph, &self.0)
            .into_iter()
            .map(|p| p.predicted)
            .collect())
    }
}

pub struct TransformerLocation(pub TransformerModel);

impl LocationPredictor for TransformerLocation {
    fn name(&self) -> String {
        "Transformer".into()
    }

    fn predict(&self, _: usize, traj: &Trajectory, _: &AreaGraph) -> Result<Vec<Option<AreaId>>, EvalError> {
        let seq = to_area_sequence(traj);
        (1..seq.len())
            .map(|i| Ok(Some(self.0.predict_next(&seq[..i])?)))
            .collect()
    }
}

/// Uniform choice among the current area's neighbors, seeded per trajectory.
pub struct UniformNeighbors {
    pub seed: u64,
}

impl LocationPredictor for UniformNeighbors {
    fn name(&self) -> String {
        "Uniform over neighbors".into()
    }

    fn predict(&self, index: usize, traj: &Trajectory, graph: &AreaGraph) -> Result<Vec<Option<AreaId>>, EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Ok(area_transitions(traj)
            .into_iter()
            .map(|(_, from, _)| {
                let n = graph.neighbors(from);
                (!n.is_empty()).then(|| n[rng.gen_range(0..n.len())])
            })
            .collect())
    }
}

/// Always predicts the most frequent destination area of a training set.
pub struct MajorityArea {
    pub area: AreaId,
}

impl MajorityArea {
    /// Most frequent transition target across `sequences`; lowest id on ties.
    pub fn fit(sequences: &[Vec<AreaId>]) -> Option<Self> {
        let mut counts: BTreeMap<AreaId, usize> = BTreeMap::new();
        for s in sequences {
            for &a in s.iter().skip(1) {
                *counts.entry(a).or_default() += 1;
            }
        }
        let best = counts.values().copied().max()?;
        counts
            .into_iter()
            .find(|&(_, c)| c == best)
            .map(|(area, _)| Self { area })
    }
}

impl LocationPredictor for MajorityArea {
    fn name(&self) -> String {
        "Majority area".into()
    }

    fn predict(&self, _: usize, traj: &Trajectory, _: &AreaGraph) -> Result<Vec<Option<AreaId>>, EvalError> {
        Ok(vec![Some(self.area); area_transitions(traj).len()])
    }
}

/// Reads the actual next area.
pub struct OracleLocation;

impl LocationPredictor for OracleLocation {
    fn name(&self) -> String {
        "Oracle".into()
    }

    fn predict(&self, _: usize, traj: &Trajectory, _: &AreaGraph) -> Result<Vec<Option<AreaId>>, EvalError> {
        Ok(area_transitions(traj).into_iter().map(|(_, _, to)| Some(to)).collect())
    }
}

// ---------------------------------------------------------------------------
// Protocol

/// Fraction of scored triage events whose prediction equals the label
/// active at that event.
pub fn evaluate_triage(
    predictor: &dyn TriagePredictor,
    data: &[Trajectory],
    scope: &TriageScope,
) -> Result<TaskResult, EvalError> {
    let mut result = TaskResult::default();
    for (i, traj) in data.iter().enumerate() {
        let labels = to_triage_sequence(traj).labels().ok_or(EvalError::Unlabeled(i))?;
        let start = match scope {
            TriageScope::All => 0,
            TriageScope::AfterFirstEvidence(cfg) => run_triage_predictor(traj, cfg).first_informed.unwrap_or(labels.len()),
        };
        let preds = predictor.predict(i, traj)?;
        if preds.len() != labels.len() {
            return Err(EvalError::CountMismatch {
                expected: labels.len(),
                got: preds.len(),
            });
        }
        let correct = (start..labels.len()).filter(|&k| preds[k] == labels[k]).count();
        result.push(i, traj.meta.seed, correct, labels.len() - start);
    }
    Ok(result)
}

fn check_map(index: usize, traj: &Trajectory, graph: &AreaGraph) -> Result<(), EvalError> {
    let mismatch = |reason: String| EvalError::MapMismatch { index, reason };
    if let Some(o) = traj.observations.iter().find(|o| o.area >= graph.len()) {
        return Err(mismatch(format!("area {} outside a map of {}", o.area, graph.len())));
    }
    if let Some((_, a, b)) = area_transitions(traj).into_iter().find(|&(_, a, b)| !graph.has_edge(a, b)) {
        return Err(mismatch(format!("transition {a} -> {b} is not an edge")));
    }
    Ok(())
}

/// Fraction of area transitions where the predicted next area equals the
/// area actually entered.
pub fn evaluate_location(
    predictor: &dyn LocationPredictor,
    data: &[Trajectory],
    graph: &AreaGraph,
) -> Result<TaskResult, EvalError> {
    let mut result = TaskResult::default();
    for (i, traj) in data.iter().enumerate() {
        check_map(i, traj, graph)?;
        let actual: Vec<AreaId> = area_transitions(traj).into_iter().map(|(_, _, to)| to).collect();
        let preds = predictor.predict(i, traj, graph)?;
        if preds.len() != actual.len() {
            return Err(EvalError::CountMismatch {
                expected: actual.len(),
                got: preds.len(),
            });
        }
        let correct = preds.iter().zip(&actual).filter(|(p, a)| **p == Some(**a)).count();
        result.push(i, traj.meta.seed, correct, actual.len());
    }
    Ok(result)
}

/// Expected accuracy of uniform guessing among neighbors: the mean of
/// `1 / degree(from)` over all transitions.
pub fn uniform_neighbors_expected(data: &[Trajectory], graph: &AreaGraph) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for traj in data {
        for (_, from, _) in area_transitions(traj) {
            sum += 1.0 / graph.degree(from).max(1) as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

// ---------------------------------------------------------------------------
// Tables

/// Percentage with two decimals, e.g. `98.80%`.
pub fn format_percent(accuracy: f64) -> String {
    format!("{:.2}%", accuracy * 100.0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComparisonTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ComparisonTable {
    pub fn fixed_width(&self) -> String {
        let cols = self.header.len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.header[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (c, cell) in cells.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[c]);
                }
            }
            s.trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        let total: usize = widths.iter().sum::<usize>() + 2 * (cols - 1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn csv(&self) -> String {
        let esc = |s: &String| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        };
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&r.iter().map(esc).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Rows are methods and columns are the tasks any report covers, in task
/// order. Missing cells render as `-`.
pub fn comparison_table(reports: &[MethodReport]) -> Result<ComparisonTable, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut tasks: Vec<Task> = reports.iter().flat_map(|r| r.results.keys().copied()).collect();
    tasks.sort();
    tasks.dedup();
    let header = std::iter::once("Method".to_string())
        .chain(tasks.iter().map(|t| t.title().to_string()))
        .collect();
    let rows = reports
        .iter()
        .map(|r| {
            std::iter::once(r.method.clone())
                .chain(tasks.iter().map(|&t| r.accuracy(t).map_or("-".into(), format_percent)))
                .collect()
        })
        .collect();
    Ok(ComparisonTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_formatting() {
        assert_eq!(format_percent(0.988), "98.80%");
        assert_eq!(format_percent(1.0), "100.00%");
        assert_eq!(format_percent(0.0), "0.00%");
    }

    #[test]
    fn single_cell_table() {
        let r = MethodReport::new("Evidence").with(
            Task::Triage,
            TaskResult {
                correct: 247,
                total: 250,
                per_trajectory: vec![],
            },
        );
        let t = comparison_table(&[r]).unwrap();
        assert_eq!(t.rows, vec![vec!["Evidence".to_string(), "98.80%".to_string()]]);
        assert_eq!(t.csv(), "Method,Triage strategy\nEvidence,98.80%\n");
        assert!(t.fixed_width().contains("98.80%"));
        assert!(matches!(comparison_table(&[]), Err(EvalError::NoReports)));
    }

    #[test]
    fn missing_cells_dash() {
        let a = MethodReport::new("A").with(Task::Triage, TaskResult::default());
        let b = MethodReport::new("B").with(Task::NextLocation, TaskResult::default());
        let t = comparison_table(&[a, b]).unwrap();
        assert_eq!(t.header.len(), 3);
        assert_eq!(t.rows[0][2], "-");
        assert_eq!(t.rows[1][1], "-");
    }
}
