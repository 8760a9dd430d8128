use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{a2c_loss, LossWeights};
use crate::env::{Action, GridWorld, TaskId, WorldSnapshot};
use crate::error::Result;
use crate::net::{AgentState, ModelConfig, ModelKind, Network, StepBatch, Unroll};
use crate::numerics::gradcheck::{grad_check, GradCheckOptions, GradReport};
use crate::numerics::{ParamStore, Real};

/// Fixed inputs for a short unroll: per-step batches, actions, loss targets
/// and a nonzero starting state that does not depend on the parameters.
pub struct ToyUnroll {
    pub steps: Vec<StepBatch<f64>>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    pub completions: Vec<bool>,
}

/// Two scripted workers over three steps. Worker 0 completes ReachP and
/// PickupP back to back, so the task memory is gated twice; worker 1 acts
/// from water and its two-step episode ends, so the last step starts a new
/// episode.
pub fn toy_unroll(seed: u64) -> Result<ToyUnroll> {
    let w0 = WorldSnapshot::from_layout(&["TP...", ".....", "..#..", ".~...", "....D"], TaskId::ReachP, 50, &TaskId::TAXI)?;
    let w1 = WorldSnapshot::from_layout(&["~~...", "~T.P.", "..#..", ".....", "D...."], TaskId::ReachP, 2, &TaskId::TAXI)?;
    let mut worlds: Vec<GridWorld> = vec![w0.to_world(seed)?, w1.to_world(seed + 1)?];
    let script = [[Action::Right, Action::Up], [Action::Pickup, Action::Left], [Action::Down, Action::Right]];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d_prev = [false; 2];
    let mut a_prev: [Option<Action>; 2] = [None; 2];
    let mut start = [false; 2];
    let mut out = ToyUnroll {
        steps: Vec::new(),
        actions: Vec::new(),
        returns: Vec::new(),
        advantages: Vec::new(),
        completions: Vec::new(),
    };
    for acts in script {
        let mut batch = StepBatch::new();
        for (i, w) in worlds.iter_mut().enumerate() {
            batch.push(&w.observe(), w.current_task(), d_prev[i], a_prev[i], start[i]);
            let res = w.step(acts[i])?;
            out.actions.push(acts[i].code());
            out.completions.push(res.completion);
            out.returns.push(rng.random_range(-1.0..1.0));
            out.advantages.push(rng.random_range(-1.0..1.0));
            d_prev[i] = res.completion;
            a_prev[i] = Some(acts[i]);
            start[i] = false;
            if res.episode_done {
                w.reset()?;
                d_prev[i] = false;
                a_prev[i] = None;
                start[i] = true;
            }
        }
        out.steps.push(batch);
    }
    Ok(out)
}

fn random_state(net: &Network<f64>, batch: usize, seed: u64) -> AgentState<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut s = net.initial_state(batch);
    let fill = |l: &mut crate::numerics::LstmCellState<f64>, rng: &mut ChaCha8Rng| {
        for x in l.h.data_mut().iter_mut().chain(l.c.data_mut().iter_mut()) {
            *x = rng.random_range(-0.5..0.5);
        }
    };
    match &mut s {
        AgentState::Sem { sem, tsm } => {
            fill(sem, &mut rng);
            fill(tsm, &mut rng);
        }
        AgentState::Single { core } => fill(core, &mut rng),
    }
    s
}

/// Total loss of the unroll and, when `record` is set, the unroll itself.
pub fn unroll_loss<F: Real>(
    net: &Network<F>,
    toy: &ToyUnroll,
    state: &AgentState<F>,
    weights: &LossWeights,
    mut record: Option<&mut Unroll<F>>,
) -> Result<(f64, super::loss::LossGrads<F>)> {
    let mut state = state.clone();
    let (mut logits, mut values, mut comp) = (Vec::new(), Vec::new(), Vec::new());
    for batch in &toy.steps {
        let b: StepBatch<F> = StepBatch {
            grids: batch.grids.iter().map(|&x| F::of(x)).collect(),
            carrying: batch.carrying.iter().map(|&x| F::of(x)).collect(),
            tasks: batch.tasks.clone(),
            d_prev: batch.d_prev.clone(),
            a_prev: batch.a_prev.clone(),
            episode_start: batch.episode_start.clone(),
        };
        let (out, next) = net.step(&b, &state, record.as_deref_mut())?;
        state = next;
        logits.extend(out.logits);
        values.extend(out.values);
        comp.extend(out.comp_logits);
    }
    let (terms, grads) = a2c_loss(
        &logits,
        &values,
        &comp,
        &toy.actions,
        &toy.returns,
        &toy.advantages,
        &toy.completions,
        weights,
    )?;
    Ok((terms.total, grads))
}

/// Finite-difference check of the reverse pass of a narrow network of
/// `kind` through the combined actor-critic loss over a scripted
/// three-step unroll. Runs in 64-bit.
pub fn network_grad_check(kind: ModelKind, seed: u64, opts: &GradCheckOptions) -> Result<GradReport> {
    let cfg = ModelConfig::tiny(kind);
    let mut net = Network::<f64>::new(cfg.clone(), seed)?;
    // Zero biases on mostly-empty views put conv pre-activations exactly on
    // the ReLU kink, where central differences are meaningless.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5);
    for (name, p) in net.params_mut().iter_mut() {
        if name.ends_with(".b") {
            p.value.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.2..0.2));
        }
    }
    let toy = toy_unroll(seed)?;
    let state = random_state(&net, 2, seed);
    let weights = LossWeights {
        value: 0.5,
        entropy: 0.01,
        completion: 0.5,
    };
    let mut rec = Unroll::new();
    let (_, grads) = unroll_loss(&net, &toy, &state, &weights, Some(&mut rec))?;
    net.params_mut().zero_grads();
    net.backward(&rec, &grads.d_logits, &grads.d_values, &grads.d_comp)?;
    let mut store: ParamStore<f64> = net.params().clone();
    grad_check(&mut store, opts, |p| {
        let probe = Network::from_params(cfg.clone(), p.clone()).expect("same layout");
        unroll_loss(&probe, &toy, &state, &weights, None).expect("probe loss").0
    })
}
