use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{shortest_path_oracle, Action, GridWorld, Pos, TaskId};
use crate::error::Result;
use crate::net::{AgentState, Network, StepBatch};
use crate::numerics::Real;
use crate::trainer::sample_action;

/// Something that picks actions for a batch of worlds advancing in
/// lockstep. `episode_start[i]` marks the first step of an episode in row
/// `i`; `d_prev`/`a_prev` are the environment's completion signal and the
/// action taken on the previous step.
pub trait Agent {
    fn begin(&mut self, batch: usize, run_ids: &[usize]);
    fn act(
        &mut self,
        worlds: &[GridWorld],
        d_prev: &[bool],
        a_prev: &[Option<Action>],
        episode_start: &[bool],
    ) -> Result<Vec<Action>>;
}

/// Runs a network policy. Action sampling uses one generator per run so
/// results do not depend on how runs are batched.
pub struct NetworkAgent<'a, F> {
    net: &'a Network<F>,
    seed: u64,
    pub greedy: bool,
    /// Feed `d̂ > 0.5` from the previous step back as `d_prev` instead of
    /// the environment signal.
    pub use_predicted_completion: bool,
    state: Option<AgentState<F>>,
    rngs: Vec<ChaCha8Rng>,
    predicted: Vec<bool>,
}

impl<'a, F: Real> NetworkAgent<'a, F> {
    pub fn new(net: &'a Network<F>, seed: u64) -> Self {
        NetworkAgent {
            net,
            seed,
            greedy: false,
            use_predicted_completion: false,
            state: None,
            rngs: Vec::new(),
            predicted: Vec::new(),
        }
    }
}

impl<F: Real> Agent for NetworkAgent<'_, F> {
    fn begin(&mut self, batch: usize, run_ids: &[usize]) {
        self.state = Some(self.net.initial_state(batch));
        self.rngs = run_ids
            .iter()
            .map(|&r| ChaCha8Rng::seed_from_u64(self.seed ^ (r as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)))
            .collect();
        self.predicted = vec![false; batch];
    }

    fn act(
        &mut self,
        worlds: &[GridWorld],
        d_prev: &[bool],
        a_prev: &[Option<Action>],
        episode_start: &[bool],
    ) -> Result<Vec<Action>> {
        let mut input = StepBatch::new();
        for (i, w) in worlds.iter().enumerate() {
            let d = if self.use_predicted_completion {
                self.predicted[i] && !episode_start[i]
            } else {
                d_prev[i]
            };
            input.push(&w.observe(), w.current_task(), d, a_prev[i], episode_start[i]);
        }
        let state = self.state.take().expect("begin called before act");
        let (out, next) = self.net.step(&input, &state, None)?;
        self.state = Some(next);
        let mut actions = Vec::with_capacity(worlds.len());
        for i in 0..worlds.len() {
            self.predicted[i] = out.comp_probs[i].to_f64() > 0.5;
            let probs = out.policy(i);
            let a = if self.greedy {
                (0..probs.len())
                    .max_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite policy"))
                    .expect("non-empty policy")
            } else {
                sample_action(probs, &mut self.rngs[i])
            };
            actions.push(Action::ALL[a]);
        }
        Ok(actions)
    }
}

/// Full-knowledge agent that follows shortest paths; the reference for
/// step counts.
#[derive(Clone, Debug, Default)]
pub struct OracleAgent;

impl OracleAgent {
    pub fn action(world: &GridWorld) -> Action {
        let taxi = world.taxi();
        let goal = match world.current_task() {
            TaskId::ReachP => world.passenger().pos(),
            TaskId::ReachC => world.cargo().pos(),
            TaskId::ReachD => Some(world.target()),
            // A relocation can separate the taxi from the object it is
            // about to pick up.
            TaskId::PickupP | TaskId::PickupC => {
                let item = if world.current_task() == TaskId::PickupP {
                    world.passenger()
                } else {
                    world.cargo()
                };
                match item.pos() {
                    Some(p) if p != taxi => Some(p),
                    _ => return Action::Pickup,
                }
            }
            TaskId::DropoffP | TaskId::DeliverC => {
                if taxi == world.target() {
                    return Action::Dropoff;
                }
                Some(world.target())
            }
        };
        let Some(goal) = goal else { return Action::Pickup };
        let here = shortest_path_oracle(world, taxi, goal);
        for a in [Action::Up, Action::Down, Action::Left, Action::Right] {
            let (dr, dc) = a.delta().expect("move");
            let (r, c) = (taxi.row as isize + dr, taxi.col as isize + dc);
            if r < 0 || c < 0 || r as usize >= world.height() || c as usize >= world.width() {
                continue;
            }
            let next = Pos::new(r as usize, c as usize);
            if !world.cell(next).passable() {
                continue;
            }
            if let (Some(d), Some(h)) = (shortest_path_oracle(world, next, goal), here) {
                if d + 1 == h {
                    return a;
                }
            }
        }
        Action::Pickup
    }
}

impl Agent for OracleAgent {
    fn begin(&mut self, _batch: usize, _run_ids: &[usize]) {}

    fn act(&mut self, worlds: &[GridWorld], _: &[bool], _: &[Option<Action>], _: &[bool]) -> Result<Vec<Action>> {
        Ok(worlds.iter().map(OracleAgent::action).collect())
    }
}

/// Agent that always issues the same action.
#[derive(Clone, Copy, Debug)]
pub struct FixedAgent(pub Action);

impl Agent for FixedAgent {
    fn begin(&mut self, _batch: usize, _run_ids: &[usize]) {}

    fn act(&mut self, worlds: &[GridWorld], _: &[bool], _: &[Option<Action>], _: &[bool]) -> Result<Vec<Action>> {
        Ok(vec![self.0; worlds.len()])
    }
}

