use sem_core::env::{shortest_path_oracle, GridWorld, TaskId, WorldConfig};
use sem_core::harness::{
    eval_by_appearance, heatmap, load_checkpoint, run_episodes, save_checkpoint, Checkpoint, EvalOptions, NetworkAgent,
    OracleAgent, RunConfig,
};
use sem_core::net::{ModelConfig, ModelKind, Network};
use sem_core::trainer::worker_seed;

#[test]
fn checkpoint_file_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let net = Network::<f32>::new(ModelConfig::tiny(kind), 3).unwrap();
        let path = dir.path().join(format!("{kind}.bin"));
        let cfg = RunConfig {
            model: kind,
            ..RunConfig::default()
        };
        save_checkpoint(&path, &net, &cfg, &TaskId::TAXI, 77).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params, *net.params());
        loaded.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        let back = loaded.network().unwrap();
        assert_eq!(back.count_params(&[]), net.count_params(&[]));
    }
}

#[test]
fn manifest_lists_every_canonical_name() {
    let net = Network::<f32>::new(ModelConfig::default(), 0).unwrap();
    let ckpt = Checkpoint::new(&net, &RunConfig::default(), &TaskId::TAXI, 0);
    let names: Vec<&str> = ckpt.manifest.params.iter().map(|p| p.name.as_str()).collect();
    let canonical: Vec<&str> = net.params().names().collect();
    assert_eq!(names, canonical);
    let total: usize = ckpt.manifest.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    assert_eq!(total, net.count_params(&[]));
    assert_eq!(ckpt.manifest.tasks.len(), TaskId::COUNT);
}

#[test]
fn missing_checkpoint_is_a_file_error() {
    let err = load_checkpoint(std::path::Path::new("/nonexistent/checkpoint.bin")).unwrap_err();
    assert!(matches!(err, sem_core::Error::File { .. }));
}

/// Expected steps for every assignment an optimal agent handles, computed
/// from shortest-path distances at the moment of assignment.
fn expected_oracle_steps(opts: &EvalOptions) -> Vec<Vec<(TaskId, usize)>> {
    (0..opts.runs)
        .map(|r| {
            let mut w = GridWorld::generate(worker_seed(opts.seed, r), opts.world_config()).unwrap();
            let mut out = Vec::new();
            let mut pending = None;
            while !w.is_done() {
                if pending.is_none() {
                    let task = w.current_task();
                    let taxi = w.taxi();
                    let dist = |goal| shortest_path_oracle(&w, taxi, goal).unwrap();
                    let steps = match task {
                        TaskId::ReachP => dist(w.passenger().pos().unwrap()),
                        TaskId::ReachD => dist(w.target()),
                        TaskId::PickupP => dist(w.passenger().pos().unwrap()) + 1,
                        TaskId::DropoffP => dist(w.target()) + 1,
                        _ => unreachable!(),
                    };
                    pending = Some((task, steps));
                }
                let out_step = w.step(OracleAgent::action(&w)).unwrap();
                if out_step.completion {
                    out.push(pending.take().unwrap());
                }
            }
            out
        })
        .collect()
}

#[test]
fn optimal_agent_reports_shortest_path_lengths() {
    let opts = EvalOptions::new(12, 8, 150, 4);
    let report = eval_by_appearance(&mut OracleAgent, &opts).unwrap();
    let expected = expected_oracle_steps(&opts);
    for (trace, exp) in report.traces.iter().zip(&expected) {
        let got: Vec<(TaskId, usize)> = trace.attempts.iter().filter_map(|a| Some((a.task, a.steps?))).collect();
        assert_eq!(&got, exp);
    }
    assert_eq!(report.runs, 12);
    let reach_d: Vec<usize> = expected.iter().flatten().filter(|(t, _)| *t == TaskId::ReachD).map(|(_, s)| *s).collect();
    let mean = reach_d.iter().sum::<usize>() as f64 / reach_d.len() as f64;
    assert!((report.mean_steps(TaskId::ReachD, 1..=usize::MAX).unwrap() - mean).abs() < 1e-12);
}

#[test]
fn evaluation_is_repeatable_and_independent_of_batching() {
    let net = Network::<f32>::new(ModelConfig::tiny(ModelKind::Sem), 8).unwrap();
    let opts = EvalOptions::new(70, 8, 60, 2);
    let a = eval_by_appearance(&mut NetworkAgent::new(&net, 5), &opts).unwrap();
    let b = eval_by_appearance(&mut NetworkAgent::new(&net, 5), &opts).unwrap();
    assert_eq!(a, b);
    let few = eval_by_appearance(&mut NetworkAgent::new(&net, 5), &EvalOptions { runs: 3, ..opts.clone() }).unwrap();
    assert_eq!(&few.traces[..], &a.traces[..3]);
    let tail = a.traces[64..].to_vec();
    assert_eq!(tail.len(), 6);
}

#[test]
fn heatmap_counts_every_reach_target_step() {
    let cfg = WorldConfig::taxi(8, 120);
    let net = Network::<f32>::new(ModelConfig::tiny(ModelKind::Sem), 9).unwrap();
    let [before, after] = heatmap(&mut NetworkAgent::new(&net, 1), 21, 10, &cfg).unwrap();
    // Independent count of ReachD steps over the same runs.
    let base = GridWorld::generate(21, cfg).unwrap().snapshot();
    let worlds: Vec<GridWorld> = (0..10).map(|r| base.to_world(21 + r).unwrap()).collect();
    let mut steps = 0u64;
    run_episodes(&mut NetworkAgent::new(&net, 1), worlds, |_, w, _, _| {
        steps += (w.current_task() == TaskId::ReachD) as u64;
    })
    .unwrap();
    assert_eq!(before.total() + after.total(), steps);
    for g in [&before, &after] {
        if !g.is_empty() {
            assert!((g.normalized().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for (i, &c) in g.counts.iter().enumerate() {
            assert!(c == 0 || base.cells[i / 8].as_bytes()[i % 8] != b'#');
        }
    }
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"map_size": 8, "learning_rat": 0.1}"#).unwrap();
    let err = RunConfig::load(&p).unwrap_err().to_string();
    assert!(err.contains("learning_rat") && err.contains("learning_rate"), "{err}");
}
