use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rescue_mind::agents::{generate_dataset, Scenario};
use rescue_mind::eval::{
    comparison_table, evaluate_location, evaluate_triage, fingerprint, format_percent, EvidenceLocation,
    EvidenceTriage, LocationPredictor, MajorityArea, MethodReport, NeuralTriage, RandomTriage, Task, TransformerLocation,
    TriagePredictor, TriageScope, UniformNeighbors,
};
use rescue_mind::evidence::score_neighbors;
use rescue_mind::neural::{
    train_transformer, train_triage, Checkpoint, SavedModel, TransformerArch, TransformerModel, TriageArch,
    TriageModel, TriageVariant,
};
use rescue_mind::trajectory::{
    extract_decision_points, serialize, tick_to_seconds, to_area_sequence, to_triage_sequence, EventKind,
    Strategy, Trajectory,
};
use rescue_mind::world::{AreaGraph, AreaId, World};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{self, Manifest, ManifestEntry, MANIFEST};
use crate::{
    EvaluateArgs, GenDataArgs, InspectArgs, MapArgs, ModelKind, PredictArgs, PredictMethod, PredictTask,
    TrainArgs, TriageScopeArg,
};

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?.dataset;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.count {
        cfg.count = c;
    }
    if let Some(m) = a.map.map {
        cfg.map = m;
    }
    if let Some(p) = a.map.perturbations {
        cfg.perturbation_set = p;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let world = io::load_world(&cfg.map)?;
    let scenario = Scenario::new(world, &cfg.perturbation_set).map_err(|e| CliError::Usage(e.to_string()))?;
    let (trajs, summary) = generate_dataset(&scenario, &cfg).map_err(CliError::data)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    let mut files = Vec::with_capacity(trajs.len());
    for (i, t) in trajs.iter().enumerate() {
        let file = format!("traj_{i:05}.jsonl");
        io::atomic_write(&a.out.join(&file), serialize(t).as_bytes())?;
        let labels = t.labels.as_deref().unwrap_or(&[]);
        files.push(ManifestEntry {
            file,
            seed: t.meta.seed,
            content_hash: t.content_hash(),
            start_label: labels.first().map(|s| s.as_str().to_string()),
            switching: labels.windows(2).any(|w| w[0] != w[1]),
            selective_observations: labels.iter().filter(|&&s| s == Strategy::Selective).count(),
            opportunistic_observations: labels.iter().filter(|&&s| s == Strategy::Opportunistic).count(),
        });
    }
    let manifest = Manifest {
        seed: cfg.seed,
        map: cfg.map.clone(),
        perturbations: cfg.perturbation_set.clone(),
        count: trajs.len(),
        config: cfg.clone(),
        summary: summary.clone(),
        files,
    };
    io::write_json(&a.out.join(MANIFEST), &manifest)?;
    println!(
        "wrote {} trajectories to {} (seed {}; {} selective, {} opportunistic, {} switching)",
        summary.count,
        a.out.display(),
        cfg.seed,
        summary.selective_starts,
        summary.opportunistic_starts,
        summary.switching
    );
    Ok(())
}

pub fn loss_log_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".loss.log");
    checkpoint.with_file_name(name)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?.train;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = io::read_dataset(&a.data)?;
    let (model, report) = match a.model {
        ModelKind::Transformer => {
            let arch = TransformerArch {
                window: cfg.window,
                ..TransformerArch::default()
            };
            let seqs: Vec<Vec<AreaId>> = data.trajectories.iter().map(to_area_sequence).collect();
            if let Some(&bad) = seqs.iter().flatten().find(|&&x| x >= arch.vocab) {
                return Err(CliError::Data(format!("area {bad} outside the {} area vocabulary", arch.vocab)));
            }
            let mut m = TransformerModel::new(arch, cfg.seed);
            let r = train_transformer(&mut m, &seqs, &cfg)?;
            (SavedModel::Transformer(m), r)
        }
        kind => {
            let variant = match kind {
                ModelKind::Time2vec => TriageVariant::Time2Vec,
                ModelKind::Decay => TriageVariant::Decay,
                _ => TriageVariant::Ode,
            };
            let seqs: Vec<_> = data.trajectories.iter().map(to_triage_sequence).collect();
            let mut m = TriageModel::new(TriageArch::from_config(variant, &cfg), cfg.seed, false);
            let r = train_triage(&mut m, &seqs, &cfg)?;
            (SavedModel::Triage(m), r)
        }
    };
    let ck = Checkpoint { model, config: cfg };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    io::atomic_write(&a.out, &ck.to_bytes())?;
    let mut log = String::new();
    for (i, l) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(log, "{}\t{l}", i + 1);
    }
    io::atomic_write(&loss_log_path(&a.out), log.as_bytes())?;
    print!("{log}");
    println!(
        "saved {} checkpoint to {} (seed {}, {} parameters, {} steps)",
        ck.model.kind(),
        a.out.display(),
        ck.config.seed,
        ck.model.params().count(),
        report.steps
    );
    Ok(())
}

fn graph_for(map: &MapArgs, manifest: Option<&Manifest>) -> Result<AreaGraph> {
    let name = map
        .map
        .clone()
        .or_else(|| manifest.map(|m| m.map.clone()))
        .unwrap_or_else(|| "default".into());
    let set = map
        .perturbations
        .clone()
        .or_else(|| manifest.map(|m| m.perturbations.clone()))
        .unwrap_or_else(|| "none".into());
    io::load_graph(&name, &set)
}

/// Graph for a single trajectory: flags first, then the shipped map when
/// the log names it.
fn graph_for_trajectory(map: &MapArgs, traj: &Trajectory) -> Result<AreaGraph> {
    let set = map
        .perturbations
        .clone()
        .unwrap_or_else(|| traj.meta.perturbation_set.clone());
    match &map.map {
        Some(m) => io::load_graph(m, &set),
        None if traj.meta.map == World::default_map().name => io::load_graph("default", &set),
        None => Err(CliError::Usage(format!(
            "trajectory was recorded on map `{}`; pass --map",
            traj.meta.map
        ))),
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Method {
    Evidence,
    Baseline,
    NeuralAll,
    Triage(TriageVariant),
    Transformer,
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m = match part {
            "evidence" => Method::Evidence,
            "baseline" => Method::Baseline,
            "neural" => Method::NeuralAll,
            "neural:transformer" => Method::Transformer,
            other => match other.strip_prefix("neural:").and_then(TriageVariant::parse) {
                Some(v) => Method::Triage(v),
                None => return Err(CliError::Usage(format!("unknown method `{other}`"))),
            },
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no methods selected".into()));
    }
    Ok(out)
}

#[derive(Serialize)]
struct ReportTable {
    title: String,
    methods: Vec<MethodReport>,
}

#[derive(Serialize)]
struct ReportFile {
    seed: u64,
    triage_scope: String,
    trajectories: usize,
    fingerprints: BTreeMap<String, String>,
    tables: Vec<ReportTable>,
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let methods = parse_methods(&a.methods)?;
    let data = io::read_dataset(&a.data)?;
    let graph = graph_for(&a.map, data.manifest.as_ref())?;
    let trajs = &data.trajectories;

    let mut fingerprints = BTreeMap::new();
    fingerprints.insert("evidence".to_string(), fingerprint(&cfg.evidence));
    if let Some(m) = &data.manifest {
        fingerprints.insert("dataset".to_string(), fingerprint(&m.config));
    }
    let mut triage_models: BTreeMap<TriageVariant, TriageModel> = BTreeMap::new();
    let mut transformer: Option<TransformerModel> = None;
    for path in &a.checkpoint {
        let ck = Checkpoint::load(path).map_err(CliError::data)?;
        let label = match &ck.model {
            SavedModel::Triage(m) => format!("neural:{}", m.arch.variant.as_str()),
            SavedModel::Transformer(_) => "neural:transformer".to_string(),
        };
        fingerprints.insert(label, fingerprint(&ck.model.params().tensors));
        match ck.model {
            SavedModel::Triage(m) => {
                triage_models.insert(m.arch.variant, m);
            }
            SavedModel::Transformer(m) => transformer = Some(m),
        }
    }
    let want_all_neural = methods.contains(&Method::NeuralAll);
    if want_all_neural && triage_models.is_empty() && transformer.is_none() {
        return Err(CliError::Data("method `neural` needs at least one --checkpoint".into()));
    }
    for m in &methods {
        match m {
            Method::Triage(v) if !triage_models.contains_key(v) => {
                return Err(CliError::Data(format!("missing checkpoint for neural:{}", v.as_str())))
            }
            Method::Transformer if transformer.is_none() => {
                return Err(CliError::Data("missing checkpoint for neural:transformer".into()))
            }
            _ => {}
        }
    }

    let scope = match a.triage_scope {
        TriageScopeArg::All => TriageScope::All,
        TriageScopeArg::AfterEvidence => TriageScope::AfterFirstEvidence(cfg.evidence.clone()),
    };
    let triage = |p: &dyn TriagePredictor| evaluate_triage(p, trajs, &scope).map_err(CliError::from_eval);
    let location = |p: &dyn LocationPredictor| evaluate_location(p, trajs, &graph).map_err(CliError::from_eval);

    let mut main = Vec::new();
    if methods.contains(&Method::Evidence) {
        main.push(
            MethodReport::new("Evidence accumulation")
                .with(Task::Triage, triage(&EvidenceTriage(cfg.evidence.clone()))?)
                .with(Task::NextLocation, location(&EvidenceLocation(cfg.evidence.clone()))?),
        );
    }
    let variants: Vec<TriageVariant> = TriageVariant::ALL
        .into_iter()
        .filter(|v| triage_models.contains_key(v) && (want_all_neural || methods.contains(&Method::Triage(*v))))
        .collect();
    let use_transformer = transformer.is_some() && (want_all_neural || methods.contains(&Method::Transformer));
    let mut variant_rows = Vec::new();
    for v in &variants {
        let model = triage_models[v].clone();
        variant_rows.push(MethodReport::new(v.display_name()).with(Task::Triage, triage(&NeuralTriage(model))?));
    }
    if !variants.is_empty() || use_transformer {
        let mut row = MethodReport::new("Neural");
        if let Some(first) = variant_rows.first() {
            row = row.with(Task::Triage, first.results[&Task::Triage].clone());
        }
        if let Some(t) = transformer.clone().filter(|_| use_transformer) {
            row = row.with(Task::NextLocation, location(&TransformerLocation(t))?);
        }
        main.push(row);
    }
    let mut location_baselines = Vec::new();
    if methods.contains(&Method::Baseline) {
        main.push(
            MethodReport::new("Baseline")
                .with(Task::Triage, triage(&RandomTriage { seed: a.seed })?)
                .with(Task::NextLocation, location(&UniformNeighbors { seed: a.seed })?),
        );
        let uniform = main.last().expect("baseline row just pushed").results[&Task::NextLocation].clone();
        location_baselines.push(MethodReport::new("Uniform over neighbors").with(Task::NextLocation, uniform));
        let seqs: Vec<Vec<AreaId>> = trajs.iter().map(to_area_sequence).collect();
        if let Some(maj) = MajorityArea::fit(&seqs) {
            location_baselines.push(MethodReport::new(maj.name()).with(Task::NextLocation, location(&maj)?));
        }
    }

    let mut tables = vec![ReportTable {
        title: "Strategy prediction accuracy".into(),
        methods: main,
    }];
    if variant_rows.len() > 1 {
        tables.push(ReportTable {
            title: "Triage model variants".into(),
            methods: variant_rows,
        });
    }
    if !location_baselines.is_empty() {
        tables.push(ReportTable {
            title: "Next-location baselines".into(),
            methods: location_baselines,
        });
    }

    let mut csv = String::from("table,method,task,correct,total,accuracy\n");
    for t in &tables {
        if t.methods.is_empty() {
            continue;
        }
        let rendered = comparison_table(&t.methods).map_err(CliError::from_eval)?;
        println!("{}\n{}", t.title, rendered.fixed_width());
        for m in &t.methods {
            for (task, r) in &m.results {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    t.title,
                    m.method,
                    task.as_str(),
                    r.correct,
                    r.total,
                    format_percent(r.accuracy())
                );
            }
        }
    }
    println!(
        "{} trajectories, seed {}, triage scope {}",
        trajs.len(),
        a.seed,
        scope_name(a.triage_scope)
    );
    if let Some(out) = &a.out {
        io::atomic_write(out, csv.as_bytes())?;
        let report = ReportFile {
            seed: a.seed,
            triage_scope: scope_name(a.triage_scope).into(),
            trajectories: trajs.len(),
            fingerprints,
            tables,
        };
        io::write_json(&out.with_extension("json"), &report)?;
    }
    Ok(())
}

fn scope_name(s: TriageScopeArg) -> &'static str {
    match s {
        TriageScopeArg::All => "all",
        TriageScopeArg::AfterEvidence => "after-evidence",
    }
}

impl CliError {
    fn from_eval(e: rescue_mind::eval::EvalError) -> Self {
        match e {
            rescue_mind::eval::EvalError::Neural(n) => n.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn load_model(path: Option<&Path>) -> Result<SavedModel> {
    let path = path.ok_or_else(|| CliError::Usage("--checkpoint is required for neural methods".into()))?;
    Ok(Checkpoint::load(path).map_err(CliError::data)?.model)
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let traj = io::read_trajectory(&a.trajectory)?;
    let graph = graph_for_trajectory(&a.map, &traj)?;
    let points = extract_decision_points(&traj, &graph);
    let mut records: Vec<Value> = Vec::with_capacity(points.len());
    let base = |tick, kind| {
        json!({
            "tick": tick,
            "t": tick_to_seconds(tick),
            "kind": kind,
        })
    };
    match (a.task, a.method) {
        (PredictTask::Triage, PredictMethod::Evidence) => {
            let trace = cfg.evidence.triage_library().run(&traj);
            for p in &points {
                let b = trace.belief_at(p.tick);
                let mut r = base(p.tick, p.kind);
                r["task"] = json!("triage");
                r["predicted"] = json!(Strategy::from_index(b.argmax()).as_str());
                r["belief"] = json!(b.values());
                records.push(r);
            }
        }
        (PredictTask::Triage, PredictMethod::Neural) => {
            let SavedModel::Triage(model) = load_model(a.checkpoint.as_deref())? else {
                return Err(CliError::Usage("triage prediction needs a triage checkpoint".into()));
            };
            let seq = to_triage_sequence(&traj);
            let probs = if seq.is_empty() {
                Vec::new()
            } else {
                model.probabilities(&seq.elements)?
            };
            for p in &points {
                let k = seq.elements.iter().take_while(|e| e.tick <= p.tick).count();
                let pr = if k == 0 { [0.5, 0.5] } else { probs[k - 1] };
                let predicted = if pr[1] > pr[0] {
                    Strategy::Opportunistic
                } else {
                    Strategy::Selective
                };
                let mut r = base(p.tick, p.kind);
                r["task"] = json!("triage");
                r["predicted"] = json!(predicted.as_str());
                r["probabilities"] = json!(pr);
                records.push(r);
            }
        }
        (PredictTask::Location, method) => {
            let transformer = match method {
                PredictMethod::Neural => match load_model(a.checkpoint.as_deref())? {
                    SavedModel::Transformer(m) => Some(m),
                    SavedModel::Triage(_) => {
                        return Err(CliError::Usage("location prediction needs a transformer checkpoint".into()))
                    }
                },
                PredictMethod::Evidence => None,
            };
            let obs = &traj.observations;
            let first_tick = obs.first().map_or(0, |o| o.tick);
            let mut visited = BTreeSet::new();
            let mut areas: Vec<AreaId> = Vec::new();
            let mut entry = 0usize;
            let mut idx = 0usize;
            for p in &points {
                let target = (p.tick - first_tick) as usize;
                while idx <= target.min(obs.len().saturating_sub(1)) && idx < obs.len() {
                    let o = &obs[idx];
                    if areas.last() != Some(&o.area) {
                        areas.push(o.area);
                        entry = idx;
                    }
                    visited.insert(o.area);
                    idx += 1;
                }
                let mut r = base(p.tick, p.kind);
                r["task"] = json!("next_location");
                let current = *areas.last().expect("decision points lie inside the observations");
                match &transformer {
                    Some(m) => {
                        let probs = m.next_distribution(&areas)?;
                        let best = argmax(&probs);
                        r["predicted"] = json!(best);
                        r["probabilities"] = json!(probs);
                    }
                    None => {
                        let belief = score_neighbors(&graph, current, obs[entry].position, &visited, &cfg.evidence);
                        r["predicted"] = json!(belief.as_ref().map(|b| b.argmax()));
                        r["belief"] = json!(belief.as_ref().map(|b| b.values().to_vec()));
                    }
                }
                r["current"] = json!(current);
                records.push(r);
            }
        }
    }
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).map_err(CliError::data)?);
        text.push('\n');
    }
    match &a.out {
        Some(path) => io::atomic_write(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let traj = io::read_trajectory(&a.trajectory)?;
    let graph = graph_for_trajectory(&a.map, &traj)?;
    let name = |id: AreaId| {
        if id < graph.len() {
            graph.area(id).name.clone()
        } else {
            format!("area {id}")
        }
    };
    let victim = |v: u32| match traj.severity_of(v) {
        Some(s) => format!("victim {v} ({})", format!("{s:?}").to_lowercase()),
        None => format!("victim {v}"),
    };
    let mut out = String::new();
    let _ = writeln!(out, "map:           {} ({})", traj.meta.map, traj.meta.perturbation_set);
    let _ = writeln!(out, "seed:          {}", traj.meta.seed);
    let _ = writeln!(out, "duration:      {:.1} s", traj.duration_s());
    let _ = writeln!(out, "observations:  {}", traj.observations.len());
    if let Some(labels) = &traj.labels {
        let start = labels.first().map_or("-", |s| s.as_str());
        let switch = labels.windows(2).position(|w| w[0] != w[1]).map(|i| traj.observations[i + 1].t());
        match switch {
            Some(t) => {
                let _ = writeln!(out, "strategy:      {start}, switches at {t:.1} s");
            }
            None => {
                let _ = writeln!(out, "strategy:      {start}");
            }
        }
    }
    let _ = writeln!(out, "\nevents ({}):", traj.events.len());
    for e in &traj.events {
        let what = match e.kind {
            EventKind::VictimSeen(v) => format!("saw {}", victim(v)),
            EventKind::TriageStart(v) => format!("started triage of {}", victim(v)),
            EventKind::TriageComplete(v) => format!("finished triage of {}", victim(v)),
            EventKind::AreaEnter(id) => format!("entered {}", name(id)),
            EventKind::AreaExit(id) => format!("left {}", name(id)),
        };
        let _ = writeln!(out, "  {:>7.1}s  {what}", e.t());
    }
    let points = extract_decision_points(&traj, &graph);
    let _ = writeln!(out, "\ndecision points ({}):", points.len());
    for p in &points {
        let _ = writeln!(
            out,
            "  {:>7.1}s  {:<10}  {:?}",
            p.t(),
            format!("{:?}", p.kind).to_lowercase(),
            p.context
        );
    }
    print!("{out}");
    Ok(())
}
