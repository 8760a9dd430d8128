use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sem_core::env::{TaskId, WorldConfig};
use sem_core::net::{ModelConfig, ModelKind, Network};
use sem_core::numerics::ParamStore;
use sem_core::trainer::{
    collect_rollout, compute_returns, finetune_continual, is_head_param, worker_seed, TrainConfig, Trainer, Worker,
};

fn tiny_config(kind: ModelKind) -> ModelConfig {
    ModelConfig::tiny(kind)
}

fn small_train(seed: u64) -> TrainConfig {
    TrainConfig {
        n_workers: 3,
        n_steps: 5,
        map_size: 6,
        episode_len: 12,
        total_steps: 3 * 5 * 4,
        seed,
        ..TrainConfig::default()
    }
}

fn workers(n: usize, episode_len: usize) -> Vec<Worker> {
    (0..n)
        .map(|i| Worker::new(worker_seed(9, i), WorldConfig::taxi(6, episode_len), 2).unwrap())
        .collect()
}

#[test]
fn two_workers_three_steps_give_six_transitions() {
    let net = Network::<f32>::new(tiny_config(ModelKind::Sem), 1).unwrap();
    let mut ws = workers(2, 2);
    let mut state = net.initial_state(2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let buf = collect_rollout(&mut ws, &net, &mut state, &mut rng, 3).unwrap();
    assert_eq!(buf.len(), 6);
    assert_eq!((buf.n_workers, buf.n_steps), (2, 3));
    for v in [buf.rewards.len(), buf.values.len(), buf.dones.len(), buf.completions.len(), buf.actions.len()] {
        assert_eq!(v, 6);
    }
    // Two-step episodes end on the second step of every worker.
    assert_eq!(buf.dones, vec![false, false, true, true, false, false]);
    assert_eq!(buf.unroll.steps(), 3);
}

#[test]
fn episode_end_cuts_the_bootstrap() {
    // Worker 0 ends its episode on the final step, worker 1 does not.
    let rewards = [-0.1, -0.1, -0.1, -0.1];
    let dones = [false, false, true, false];
    let values = [0.0; 4];
    let (ret, _) = compute_returns(&rewards, &dones, &values, &[5.0, 5.0], 0.5, 2);
    assert_eq!(ret[2], -0.1);
    assert_eq!(ret[3], -0.1 + 0.5 * 5.0);
}

#[test]
fn rollouts_are_reproducible() {
    let net = Network::<f32>::new(tiny_config(ModelKind::Sem), 2).unwrap();
    let run = || {
        let mut ws = workers(3, 7);
        let mut state = net.initial_state(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let buf = collect_rollout(&mut ws, &net, &mut state, &mut rng, 10).unwrap();
        (buf.actions, buf.rewards, buf.values, buf.log_probs, buf.dones, buf.bootstrap)
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_learning_rate_leaves_parameters_identical() {
    let net = Network::<f32>::new(tiny_config(ModelKind::Sem), 3).unwrap();
    let before = net.params().clone();
    let mut t = Trainer::new(
        net,
        TrainConfig {
            learning_rate: 0.0,
            ..small_train(1)
        },
    )
    .unwrap();
    t.iterate().unwrap();
    for ((_, a), (_, b)) in t.network().params().iter().zip(before.iter()) {
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    let run = || {
        let net = Network::<f32>::new(tiny_config(ModelKind::Sem), 5).unwrap();
        let mut t = Trainer::new(net, small_train(8)).unwrap();
        let mut logs = Vec::new();
        t.run(|l| {
            let mut l = l.clone();
            l.wall_clock = 0.0;
            logs.push(l);
            Ok(())
        })
        .unwrap();
        (logs, t.into_network().into_params())
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

fn frozen_values(p: &ParamStore<f32>) -> Vec<(String, Vec<f32>)> {
    p.iter()
        .filter(|(n, _)| !is_head_param(n))
        .map(|(n, p)| (n.to_string(), p.value.data().to_vec()))
        .collect()
}

#[test]
fn finetuning_trains_only_heads_and_task_embedding() {
    let net = Network::<f32>::new(tiny_config(ModelKind::Sem), 6).unwrap();
    let before = net.params().clone();
    let tasks = [TaskId::ReachP, TaskId::PickupP, TaskId::ReachD, TaskId::DropoffP, TaskId::ReachC];
    let t = finetune_continual(net, &tasks, &small_train(2), 60, |_| Ok(())).unwrap();
    let after = t.network().params();
    let trainable: Vec<&str> = after.iter().filter(|(_, p)| !p.frozen).map(|(n, _)| n).collect();
    assert_eq!(
        trainable,
        ["e_task.emb", "head.pol.w", "head.pol.b", "head.val.w", "head.val.b", "head.comp.w", "head.comp.b"]
    );
    assert_eq!(frozen_values(&before), frozen_values(after));
    assert_ne!(before.by_name("head.pol.w").unwrap().value, after.by_name("head.pol.w").unwrap().value);
    assert_eq!(t.config().tasks, TaskId::ALL.to_vec());
}

#[test]
fn finetuning_requires_reach_cargo() {
    let net = Network::<f32>::new(tiny_config(ModelKind::Sem), 6).unwrap();
    let res = finetune_continual(net, &TaskId::TAXI, &small_train(2), 60, |_| Ok(()));
    assert!(matches!(res, Err(sem_core::Error::Precondition(_))));
}

#[test]
fn every_model_trains_without_error() {
    for kind in ModelKind::ALL {
        let net = Network::<f32>::new(tiny_config(kind), 7).unwrap();
        let mut t = Trainer::new(net, small_train(3)).unwrap();
        let log = t.iterate().unwrap();
        assert!(log.loss.total.is_finite() && log.grad_norm.is_finite(), "{kind}");
    }
}

proptest! {
    #[test]
    fn returns_equal_brute_force_sums(
        rewards in prop::collection::vec(-1.0f64..1.0, 20),
        done_at in prop::option::of(0usize..20),
        boot in -5.0f64..5.0,
        gamma in 0.5f64..1.0,
    ) {
        let mut dones = vec![false; 20];
        if let Some(d) = done_at {
            dones[d] = true;
        }
        let values = vec![0.25; 20];
        let (ret, adv) = compute_returns(&rewards, &dones, &values, &[boot], gamma, 1);
        for t in 0..20 {
            let end = (t..20).find(|&k| dones[k]);
            let last = end.unwrap_or(19);
            let mut expect: f64 = (t..=last).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum();
            if end.is_none() {
                expect += gamma.powi((20 - t) as i32) * boot;
            }
            prop_assert!((ret[t] - expect).abs() < 1e-12);
            prop_assert!((adv[t] - (ret[t] - 0.25)).abs() < 1e-15);
        }
    }
}
