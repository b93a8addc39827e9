use rescue_mind::agents::{generate_dataset, DatasetConfig, PolicyMix, Scenario};
use rescue_mind::eval::{
    comparison_table, evaluate_location, evaluate_triage, uniform_neighbors_expected, ConstantTriage,
    EvalError, EvidenceLocation, EvidenceTriage, MajorityArea, MethodReport, OracleLocation, OracleTriage,
    RandomTriage, Task, TaskResult, TriageScope, UniformNeighbors,
};
use rescue_mind::evidence::EvidenceConfig;
use rescue_mind::trajectory::{to_area_sequence, to_triage_sequence, Strategy, Trajectory};
use rescue_mind::world::{AreaGraph, World};

fn data(count: usize, seed: u64, mix: PolicyMix) -> (AreaGraph, Vec<Trajectory>) {
    let sc = Scenario::new(World::default_map(), "none").unwrap();
    let cfg = DatasetConfig {
        count,
        seed,
        policy_mix: mix,
        ..DatasetConfig::default()
    };
    (sc.graph().clone(), generate_dataset(&sc, &cfg).unwrap().0)
}

fn balanced() -> PolicyMix {
    PolicyMix {
        selective: 0.5,
        opportunistic: 0.5,
        switching: 0.0,
    }
}

fn within_three_sigma(r: &TaskResult, p: f64) -> bool {
    let n = r.total as f64;
    let sigma = (p * (1.0 - p) / n).sqrt();
    (r.accuracy() - p).abs() <= 3.0 * sigma
}

fn assert_conserved(r: &TaskResult) {
    let correct: usize = r.per_trajectory.iter().map(|s| s.correct).sum();
    let total: usize = r.per_trajectory.iter().map(|s| s.total).sum();
    assert_eq!((correct, total), (r.correct, r.total));
    assert!((0.0..=1.0).contains(&r.accuracy()));
    assert_eq!(r.accuracy(), correct as f64 / total as f64);
}

#[test]
fn oracles_score_one() {
    let (g, trajs) = data(10, 0, PolicyMix::default());
    let t = evaluate_triage(&OracleTriage, &trajs, &TriageScope::All).unwrap();
    assert_eq!(t.accuracy(), 1.0);
    let l = evaluate_location(&OracleLocation, &trajs, &g).unwrap();
    assert_eq!(l.accuracy(), 1.0);
    let events: usize = trajs.iter().map(|t| to_triage_sequence(t).len()).sum();
    assert_eq!(t.total, events);
}

/// Draws from the selective and opportunistic pools, always topping up the
/// class with fewer events, so event labels end up split evenly.
fn event_balanced(count: usize) -> Vec<Trajectory> {
    let (_, pool) = data(count, 4000, balanced());
    let (mut sel, mut opp): (Vec<_>, Vec<_>) = pool
        .into_iter()
        .partition(|t| t.labels.as_ref().unwrap()[0] == Strategy::Selective);
    let (mut out, mut n_sel, mut n_opp) = (Vec::new(), 0, 0);
    loop {
        let (from, n) = if n_sel <= n_opp { (&mut sel, &mut n_sel) } else { (&mut opp, &mut n_opp) };
        let Some(t) = from.pop() else { break };
        *n += to_triage_sequence(&t).len();
        out.push(t);
    }
    out
}

#[test]
fn chance_baselines_sit_at_one_half() {
    let trajs = event_balanced(300);
    let sel = evaluate_triage(&ConstantTriage(Strategy::Selective), &trajs, &TriageScope::All).unwrap();
    let opp = evaluate_triage(&ConstantTriage(Strategy::Opportunistic), &trajs, &TriageScope::All).unwrap();
    assert_eq!(sel.correct + opp.correct, sel.total);
    assert!(sel.total > 2000);
    assert!(within_three_sigma(&sel, 0.5), "constant selective {}", sel.accuracy());
    for seed in 0..3 {
        let r = evaluate_triage(&RandomTriage { seed }, &trajs, &TriageScope::All).unwrap();
        assert!(within_three_sigma(&r, 0.5), "random {seed}: {}", r.accuracy());
    }
}

#[test]
fn uniform_neighbor_baseline_matches_its_expectation() {
    let (g, trajs) = data(100, 600, PolicyMix::default());
    let expected = uniform_neighbors_expected(&trajs, &g);
    let r = evaluate_location(&UniformNeighbors { seed: 3 }, &trajs, &g).unwrap();
    let (mut var, mut n) = (0.0, 0.0);
    for t in &trajs {
        for w in to_area_sequence(t).windows(2) {
            let p = 1.0 / g.degree(w[0]) as f64;
            var += p * (1.0 - p);
            n += 1.0;
        }
    }
    let sigma = var.sqrt() / n;
    assert!((r.accuracy() - expected).abs() <= 3.0 * sigma, "{} vs {expected}", r.accuracy());
}

#[test]
fn totals_are_conserved_and_runs_repeat() {
    let (g, trajs) = data(15, 700, PolicyMix::default());
    let cfg = EvidenceConfig::default();
    let scope = TriageScope::AfterFirstEvidence(cfg.clone());
    let areas: Vec<Vec<usize>> = trajs.iter().map(to_area_sequence).collect();
    let majority = MajorityArea::fit(&areas).unwrap();
    let run = || {
        vec![
            evaluate_triage(&EvidenceTriage(cfg.clone()), &trajs, &scope).unwrap(),
            evaluate_triage(&RandomTriage { seed: 1 }, &trajs, &TriageScope::All).unwrap(),
            evaluate_location(&EvidenceLocation(cfg.clone()), &trajs, &g).unwrap(),
            evaluate_location(&UniformNeighbors { seed: 1 }, &trajs, &g).unwrap(),
            evaluate_location(&majority, &trajs, &g).unwrap(),
        ]
    };
    let first = run();
    first.iter().for_each(assert_conserved);
    assert_eq!(first, run());
    let transitions: usize = areas.iter().map(|a| a.len() - 1).sum();
    assert!(first[2..].iter().all(|r| r.total == transitions));
}

#[test]
fn foreign_maps_are_rejected() {
    let (_, trajs) = data(3, 800, PolicyMix::default());
    let blocked = World::default_map().perturbed("alpha").unwrap();
    let used_blocked_edge = trajs
        .iter()
        .flat_map(|t| to_area_sequence(t).windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>())
        .any(|(a, b)| !blocked.has_edge(a, b));
    let r = evaluate_location(&OracleLocation, &trajs, &blocked);
    assert_eq!(used_blocked_edge, matches!(r, Err(EvalError::MapMismatch { .. })));

    let mut off_map = trajs.clone();
    off_map[2].observations[5].area = 40;
    let g = World::default_map().graph;
    assert!(matches!(
        evaluate_location(&OracleLocation, &off_map, &g),
        Err(EvalError::MapMismatch { index: 2, .. })
    ));
}

#[test]
fn unlabeled_data_is_rejected() {
    let (_, mut trajs) = data(2, 900, PolicyMix::default());
    trajs[1].labels = None;
    assert!(matches!(
        evaluate_triage(&OracleTriage, &trajs, &TriageScope::All),
        Err(EvalError::Unlabeled(1))
    ));
}

#[test]
fn variant_table_has_one_column() {
    let reports: Vec<MethodReport> = [("LSTM + Time2Vec", 7074), ("LSTM + RNN-ODE", 6744), ("LSTM + RNNDecay", 6303)]
        .into_iter()
        .map(|(name, correct)| {
            MethodReport::new(name).with(
                Task::Triage,
                TaskResult {
                    correct,
                    total: 10_000,
                    per_trajectory: Vec::new(),
                },
            )
        })
        .collect();
    let table = comparison_table(&reports).unwrap();
    assert_eq!(table.header.len(), 2);
    assert_eq!(table.rows.len(), 3);
    let text = table.fixed_width();
    for cell in ["70.74%", "67.44%", "63.03%"] {
        assert!(text.contains(cell), "{text}");
    }
    assert_eq!(table.csv().lines().count(), 4);
}
