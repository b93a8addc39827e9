use proptest::prelude::*;
use rescue_mind::agents::{generate_dataset, DatasetConfig, Scenario};
use rescue_mind::geometry::Point;
use rescue_mind::trajectory::{
    deserialize, extract_decision_points, serialize, to_area_sequence, to_triage_sequence, DecisionContext,
    DecisionKind, Event, EventKind, Observation, Strategy, Trajectory, TrajectoryError, TrajectoryMeta,
};
use rescue_mind::world::World;

const TWO_OBS: &str = include_str!("fixtures/two_obs.jsonl");

fn dataset(count: usize, seed: u64) -> (Scenario, Vec<Trajectory>) {
    let sc = Scenario::new(World::default_map(), "none").unwrap();
    let cfg = DatasetConfig {
        count,
        seed,
        ..DatasetConfig::default()
    };
    let trajs = generate_dataset(&sc, &cfg).unwrap().0;
    (sc, trajs)
}

/// A trajectory standing in the start area for `n` ticks.
fn idle(n: u32, events: Vec<Event>) -> Trajectory {
    Trajectory {
        meta: TrajectoryMeta {
            map: "damaged-office".into(),
            perturbation_set: "none".into(),
            seed: 0,
            config: serde_json::Value::Null,
            victims: Vec::new(),
        },
        observations: (0..n)
            .map(|tick| Observation {
                tick,
                position: Point::new(24.5, 6.0),
                area: 0,
                fov_victims: Vec::new(),
            })
            .collect(),
        events,
        labels: None,
    }
}

#[test]
fn golden_fixture_parses_and_reserializes() {
    let t = deserialize(TWO_OBS).unwrap();
    assert_eq!(t.observations.len(), 2);
    assert_eq!(t.observations[0].t(), 12.2);
    assert_eq!(t.observations[1].fov_victims, vec![1]);
    assert_eq!(t.labels, Some(vec![Strategy::Selective; 2]));
    assert_eq!(t.events, vec![Event { tick: 62, kind: EventKind::VictimSeen(1) }]);
    assert_eq!(serialize(&t), TWO_OBS);
}

#[test]
fn single_sighting_gives_one_triage_point() {
    let t = deserialize(TWO_OBS).unwrap();
    let g = World::default_map().graph;
    let points = extract_decision_points(&t, &g);
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].kind, DecisionKind::Triage);
    assert_eq!(points[0].t(), 12.4);
    assert_eq!(points[0].context, DecisionContext::VictimSighted(1));
}

#[test]
fn completion_gives_general_point() {
    let t = idle(
        201,
        vec![
            Event { tick: 150, kind: EventKind::TriageStart(4) },
            Event { tick: 200, kind: EventKind::TriageComplete(4) },
        ],
    );
    let points = extract_decision_points(&t, &World::default_map().graph);
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].kind, DecisionKind::General);
    assert_eq!(points[0].t(), 40.0);
}

#[test]
fn idle_trajectory_has_one_area() {
    let t = idle(50, Vec::new());
    assert_eq!(to_area_sequence(&t), vec![0]);
    assert!(extract_decision_points(&t, &World::default_map().graph).is_empty());
    assert!(to_triage_sequence(&t).is_empty());
}

#[test]
fn decreasing_time_is_rejected() {
    let lines: Vec<&str> = TWO_OBS.lines().collect();
    let swapped = [lines[0], lines[2], lines[1]].join("\n");
    assert!(matches!(
        deserialize(&swapped),
        Err(TrajectoryError::TimestampRegression { line: 3, .. })
    ));
    let unknown = TWO_OBS.replace("victim_seen", "victim_waved");
    assert!(matches!(deserialize(&unknown), Err(TrajectoryError::UnknownEventKind { line: 4, .. })));
    let broken = TWO_OBS.replace("\"fov\":[1]", "\"fov\":[1");
    assert!(matches!(deserialize(&broken), Err(TrajectoryError::Malformed { line: 3, .. })));
}

#[test]
fn decision_points_per_trajectory_are_in_the_hundreds() {
    let (sc, trajs) = dataset(40, 500);
    let mut counts: Vec<usize> = trajs.iter().map(|t| extract_decision_points(t, sc.graph()).len()).collect();
    counts.sort_unstable();
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let median = counts[counts.len() / 2];
    assert!((100.0..=600.0).contains(&mean), "mean {mean}");
    assert!((100..=600).contains(&median), "median {median}");
    assert!(*counts.last().unwrap() <= 600);
}

#[test]
fn decision_points_are_ordered_and_unduplicated() {
    let (sc, trajs) = dataset(10, 520);
    for t in &trajs {
        let points = extract_decision_points(t, sc.graph());
        assert!(points.windows(2).all(|w| w[0].tick <= w[1].tick));
        let mut keys: Vec<_> = points.iter().map(|p| (p.tick, p.kind, format!("{:?}", p.context))).collect();
        let n = keys.len();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), n);
    }
}

#[test]
fn triage_sequences_match_their_events() {
    let (_, trajs) = dataset(10, 540);
    for t in &trajs {
        let seq = to_triage_sequence(t);
        let qualifying = t
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::VictimSeen(_) | EventKind::TriageComplete(_)))
            .count();
        assert_eq!(seq.len(), qualifying);
        for e in &seq.elements {
            let o = t.observation_at(e.tick).unwrap();
            assert_eq!((e.x, e.y), (o.position.x, o.position.y));
            assert_eq!(e.label, t.label_at(e.tick));
        }
        let gaps: Vec<f64> = seq.elements.windows(2).map(|w| w[1].t - w[0].t).collect();
        assert!(gaps.iter().any(|&g| (g - 0.2).abs() > 1e-9));
    }
}

#[test]
fn area_sequences_follow_edges() {
    let (sc, trajs) = dataset(10, 560);
    for t in &trajs {
        let seq = to_area_sequence(t);
        assert!(seq.windows(2).all(|w| w[0] != w[1] && sc.graph().has_edge(w[0], w[1])));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_field_change_changes_the_hash(
        seed in 0u64..1000,
        obs in 0usize..200,
        dx in prop::sample::select(vec![-0.5f64, 0.25, 1e-9]),
        field in 0usize..4,
    ) {
        let (_, trajs) = dataset(1, seed);
        let t = &trajs[0];
        let mut u = t.clone();
        let i = obs % u.observations.len();
        match field {
            0 => u.observations[i].position.x += dx,
            1 => u.meta.seed += 1,
            2 => u.labels.as_mut().unwrap()[i] = t.labels.as_ref().unwrap()[i].flipped(),
            _ => u.events.truncate(u.events.len().saturating_sub(1)),
        }
        prop_assume!(u != *t);
        prop_assert_ne!(t.content_hash(), u.content_hash());
        prop_assert_eq!(deserialize(&serialize(&u)).unwrap(), u);
    }
}
