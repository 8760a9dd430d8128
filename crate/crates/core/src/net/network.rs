use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::state::{AgentState, CoreRecord, StepBatch, StepOutput, Unroll};
use super::{ModelConfig, ModelKind};
use crate::env::{Action, TaskId, CHANNELS, VIEW};
use crate::error::{Error, Result};
use crate::numerics::affine::forward_rows;
use crate::numerics::conv::{chw_to_hwc, conv3x3_relu_forward};
use crate::numerics::flstm::pre_forward;
use crate::numerics::lstm::cell_forward;
use crate::numerics::softmax::softmax_row;
use crate::numerics::{matmul, LstmCellState, ParamId, ParamStore, Real, Tensor, Trans};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum CoreIds {
    Sem {
        env_w: ParamId,
        env_b: ParamId,
        w1: ParamId,
        w2: ParamId,
        b: ParamId,
    },
    Lstm {
        w: ParamId,
        b: ParamId,
    },
    Factorized {
        w1: ParamId,
        w2: ParamId,
        b: ParamId,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Ids {
    pub conv1_w: ParamId,
    pub conv1_b: ParamId,
    pub conv2_w: ParamId,
    pub conv2_b: ParamId,
    pub emb: ParamId,
    pub core: CoreIds,
    pub pol_w: ParamId,
    pub pol_b: ParamId,
    pub val_w: ParamId,
    pub val_b: ParamId,
    pub comp_w: ParamId,
    pub comp_b: ParamId,
}

#[derive(Clone, Copy)]
enum Init {
    Zero,
    /// `U(-1/√fan_in, 1/√fan_in)`.
    FanIn(usize),
    Unit,
}

/// Canonical parameter names and shapes, in checkpoint order.
pub fn param_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let od = cfg.obs_dim();
    let r = cfg.embed_dim;
    let a = Action::COUNT;
    let fd = cfg.feature_dim();
    let mut out: Vec<(&str, Vec<usize>, Init)> = vec![
        ("e_obs.conv1.w", vec![cfg.conv1, CHANNELS, 3, 3], Init::FanIn(CHANNELS * 9)),
        ("e_obs.conv1.b", vec![cfg.conv1], Init::Zero),
        ("e_obs.conv2.w", vec![cfg.conv2, cfg.conv1, 3, 3], Init::FanIn(cfg.conv1 * 9)),
        ("e_obs.conv2.b", vec![cfg.conv2], Init::Zero),
        ("e_task.emb", vec![TaskId::COUNT, r], Init::Unit),
    ];
    match cfg.kind {
        ModelKind::Sem => {
            let (he, ht) = (cfg.env_hidden, cfg.task_hidden);
            out.extend([
                ("rnn_env.w", vec![4 * he, od + he], Init::FanIn(od + he)),
                ("rnn_env.b", vec![4 * he], Init::Zero),
                ("rnn_task.w1", vec![4 * ht, r], Init::FanIn(r)),
                ("rnn_task.w2", vec![r, od + he + ht], Init::FanIn(od + he + ht)),
                ("rnn_task.b", vec![4 * ht], Init::Zero),
            ]);
        }
        ModelKind::Multitask | ModelKind::BaselineConcat => {
            let h = cfg.core_hidden();
            out.extend([
                ("rnn.w", vec![4 * h, od + r + h], Init::FanIn(od + r + h)),
                ("rnn.b", vec![4 * h], Init::Zero),
            ]);
        }
        ModelKind::BaselineFactorized => {
            let h = cfg.core_hidden();
            out.extend([
                ("rnn.w1", vec![4 * h, r], Init::FanIn(r)),
                ("rnn.w2", vec![r, od + h], Init::FanIn(od + h)),
                ("rnn.b", vec![4 * h], Init::Zero),
            ]);
        }
    }
    out.extend([
        ("head.pol.w", vec![a, fd], Init::FanIn(fd)),
        ("head.pol.b", vec![a], Init::Zero),
        ("head.val.w", vec![1, fd], Init::FanIn(fd)),
        ("head.val.b", vec![1], Init::Zero),
        ("head.comp.w", vec![1, fd], Init::FanIn(fd)),
        ("head.comp.b", vec![1], Init::Zero),
    ]);
    out.into_iter().map(|(n, s, i)| (n.to_string(), s, i)).collect()
}

/// Actor-critic network with a completion head. Owns its parameters;
/// forward steps take `&self` so rollouts can share one snapshot.
#[derive(Clone, Debug)]
pub struct Network<F> {
    config: ModelConfig,
    params: ParamStore<F>,
    pub(crate) ids: Ids,
    materialize: bool,
}

impl<F: Real> Network<F> {
    /// Fresh weights: fan-in uniform matrices, zero biases, task embeddings
    /// uniform in `[-1, 1]`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape, init) in layout(&config) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zero => vec![F::ZERO; n],
                Init::FanIn(fan) => {
                    let bound = 1.0 / (fan as f64).sqrt();
                    (0..n).map(|_| F::of(rng.random_range(-bound..bound))).collect()
                }
                Init::Unit => (0..n).map(|_| F::of(rng.random_range(-1.0..1.0))).collect(),
            };
            params.insert(&name, Tensor::from_vec(&shape, data)?);
        }
        Self::from_params(config, params)
    }

    /// Wraps existing parameters after checking every canonical name and
    /// shape is present and nothing else is.
    pub fn from_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self> {
        config.validate()?;
        let expect = layout(&config);
        if params.len() != expect.len() {
            return Err(Error::Config(format!(
                "{} model expects {} parameters, found {}",
                config.kind,
                expect.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &expect {
            let p = params
                .by_name(name)
                .ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
            if p.shape() != shape.as_slice() {
                return Err(Error::dim("parameter shape", p.shape(), shape));
            }
        }
        let id = |n: &str| params.id(n).expect("checked above");
        let core = match config.kind {
            ModelKind::Sem => CoreIds::Sem {
                env_w: id("rnn_env.w"),
                env_b: id("rnn_env.b"),
                w1: id("rnn_task.w1"),
                w2: id("rnn_task.w2"),
                b: id("rnn_task.b"),
            },
            ModelKind::Multitask | ModelKind::BaselineConcat => CoreIds::Lstm {
                w: id("rnn.w"),
                b: id("rnn.b"),
            },
            ModelKind::BaselineFactorized => CoreIds::Factorized {
                w1: id("rnn.w1"),
                w2: id("rnn.w2"),
                b: id("rnn.b"),
            },
        };
        let ids = Ids {
            conv1_w: id("e_obs.conv1.w"),
            conv1_b: id("e_obs.conv1.b"),
            conv2_w: id("e_obs.conv2.w"),
            conv2_b: id("e_obs.conv2.b"),
            emb: id("e_task.emb"),
            core,
            pol_w: id("head.pol.w"),
            pol_b: id("head.pol.b"),
            val_w: id("head.val.w"),
            val_b: id("head.val.b"),
            comp_w: id("head.comp.w"),
            comp_b: id("head.comp.b"),
        };
        Ok(Network {
            config,
            params,
            ids,
            materialize: false,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<F> {
        self.params
    }

    /// Scalar count over the named groups; an empty filter counts all.
    pub fn count_params(&self, groups: &[&str]) -> usize {
        self.params.count(groups)
    }

    /// Computes factorized layers by building `W1·diag(v)·W2` for every
    /// row instead of the fused product. Diagnostic only: much slower.
    pub fn set_materialized(&mut self, on: bool) {
        self.materialize = on;
    }

    pub fn cast<G: Real>(&self) -> Network<G> {
        Network {
            config: self.config.clone(),
            params: self.params.cast(),
            ids: self.ids,
            materialize: self.materialize,
        }
    }

    pub fn initial_state(&self, batch: usize) -> AgentState<F> {
        match self.config.kind {
            ModelKind::Sem => AgentState::Sem {
                sem: LstmCellState::zeros_batch(batch, self.config.env_hidden),
                tsm: LstmCellState::zeros_batch(batch, self.config.task_hidden),
            },
            _ => AgentState::Single {
                core: LstmCellState::zeros_batch(batch, self.config.core_hidden()),
            },
        }
    }

    fn check_state(&self, state: &AgentState<F>, batch: usize) -> Result<()> {
        let want = self.initial_state(batch).signature();
        let got = state.signature();
        if want != got {
            let flat = |v: &[(usize, usize)]| v.iter().flat_map(|&(a, b)| [a, b]).collect::<Vec<_>>();
            return Err(Error::dim("agent state", &flat(&got), &flat(&want)));
        }
        Ok(())
    }

    fn check_batch(&self, input: &StepBatch<F>) -> Result<()> {
        let b = input.len();
        let grid = CHANNELS * VIEW * VIEW;
        if input.grids.len() != b * grid
            || input.carrying.len() != b * 2
            || input.d_prev.len() != b
            || input.a_prev.len() != b
            || input.episode_start.len() != b
        {
            return Err(Error::dim("step batch", &[input.grids.len(), input.carrying.len()], &[b * grid, b * 2]));
        }
        if let Some(&t) = input.tasks.iter().find(|&&t| t >= TaskId::COUNT) {
            return Err(Error::UnknownTask(t));
        }
        if let Some(a) = input.a_prev.iter().flatten().find(|&&a| a >= Action::COUNT) {
            return Err(Error::Usage(format!("previous action code {a} out of range")));
        }
        Ok(())
    }

    /// One synchronous step for a batch of agents. Rows flagged
    /// `episode_start` begin from a zero state; the task memory (SEM) or the
    /// whole core (multitask) is also cleared after a completion. When
    /// `record` is given the activations are appended for [`Network::backward`].
    pub fn step(
        &self,
        input: &StepBatch<F>,
        state: &AgentState<F>,
        record: Option<&mut Unroll<F>>,
    ) -> Result<(StepOutput<F>, AgentState<F>)> {
        self.check_batch(input)?;
        let b = input.len();
        self.check_state(state, b)?;
        let cfg = &self.config;
        let p = &self.params;
        let ids = &self.ids;
        let area = VIEW * VIEW;
        let (c1, c2) = (cfg.conv1, cfg.conv2);

        let mut x0 = vec![F::ZERO; b * area * CHANNELS];
        chw_to_hwc(&input.grids, b, CHANNELS, area, &mut x0);
        let mut a1 = vec![F::ZERO; b * area * c1];
        conv3x3_relu_forward(&x0, b, VIEW, CHANNELS, p.value(ids.conv1_w), p.value(ids.conv1_b), c1, &mut a1);
        let mut a2 = vec![F::ZERO; b * area * c2];
        conv3x3_relu_forward(&a1, b, VIEW, c1, p.value(ids.conv2_w), p.value(ids.conv2_b), c2, &mut a2);

        let od = cfg.obs_dim();
        let co = cfg.conv_out();
        let mut oh = vec![F::ZERO; b * od];
        for r in 0..b {
            let row = &mut oh[r * od..(r + 1) * od];
            row[..co].copy_from_slice(&a2[r * co..(r + 1) * co]);
            row[co] = input.carrying[2 * r];
            row[co + 1] = input.carrying[2 * r + 1];
            if input.d_prev[r] {
                row[co + 2] = F::ONE;
            }
            if let Some(a) = input.a_prev[r] {
                row[co + 3 + a] = F::ONE;
            }
        }

        let outer: Vec<bool> = input.episode_start.iter().map(|&s| !s).collect();
        let inner: Vec<bool> = outer.iter().zip(&input.d_prev).map(|(&o, &d)| o && !d).collect();
        let r = cfg.embed_dim;
        let emb = p.value(ids.emb);
        let mut v = Vec::with_capacity(b * r);
        for &t in &input.tasks {
            v.extend_from_slice(&emb[t * r..(t + 1) * r]);
        }

        let (cores, feat, next) = match (ids.core, state) {
            (CoreIds::Sem { env_w, env_b, w1, w2, b: tb }, AgentState::Sem { sem, tsm }) => {
                let (he, ht) = (cfg.env_hidden, cfg.task_hidden);
                let za = concat_cols(&[(&oh, od), (&gated(sem.h.data(), &outer, he), he)], b);
                let (rec_a, h_a) = self.lstm(za, gated(sem.c.data(), &outer, he), env_w, env_b, b, he);
                let zb = concat_cols(&[(&oh, od), (&h_a, he), (&gated(tsm.h.data(), &inner, ht), ht)], b);
                let (rec_b, h_b) = self.flstm(zb, v, gated(tsm.c.data(), &inner, ht), (w1, w2, tb), b, ht);
                let feat = concat_cols(&[(&h_a, he), (&h_b, ht)], b);
                let next = AgentState::Sem {
                    sem: cell_state(h_a, rec_a.c.clone(), b, he),
                    tsm: cell_state(h_b, rec_b.c.clone(), b, ht),
                };
                (vec![rec_a, rec_b], feat, next)
            }
            (CoreIds::Lstm { w, b: lb }, AgentState::Single { core }) => {
                let h = cfg.core_hidden();
                let keep = if cfg.kind.resets_on_completion() { &inner } else { &outer };
                let z = concat_cols(&[(&oh, od), (&v, r), (&gated(core.h.data(), keep, h), h)], b);
                let (rec, hn) = self.lstm(z, gated(core.c.data(), keep, h), w, lb, b, h);
                let next = AgentState::Single {
                    core: cell_state(hn.clone(), rec.c.clone(), b, h),
                };
                (vec![rec], hn, next)
            }
            (CoreIds::Factorized { w1, w2, b: fb }, AgentState::Single { core }) => {
                let h = cfg.core_hidden();
                let keep = if cfg.kind.resets_on_completion() { &inner } else { &outer };
                let z = concat_cols(&[(&oh, od), (&gated(core.h.data(), keep, h), h)], b);
                let (rec, hn) = self.flstm(z, v, gated(core.c.data(), keep, h), (w1, w2, fb), b, h);
                let next = AgentState::Single {
                    core: cell_state(hn.clone(), rec.c.clone(), b, h),
                };
                (vec![rec], hn, next)
            }
            _ => unreachable!("state signature checked"),
        };

        let fd = cfg.feature_dim();
        let na = Action::COUNT;
        let mut logits = vec![F::ZERO; b * na];
        forward_rows(&feat, b, fd, p.value(ids.pol_w), p.value(ids.pol_b), na, &mut logits);
        let mut values = vec![F::ZERO; b];
        forward_rows(&feat, b, fd, p.value(ids.val_w), p.value(ids.val_b), 1, &mut values);
        let mut comp_logits = vec![F::ZERO; b];
        forward_rows(&feat, b, fd, p.value(ids.comp_w), p.value(ids.comp_b), 1, &mut comp_logits);
        let mut probs = vec![F::ZERO; b * na];
        for (lr, pr) in logits.chunks_exact(na).zip(probs.chunks_exact_mut(na)) {
            softmax_row(lr, pr);
        }
        let comp_probs = comp_logits.iter().map(|x| x.sigmoid()).collect();

        if let Some(rec) = record {
            if rec.steps == 0 {
                rec.batch = b;
                rec.obs_dim = od;
                rec.env_hidden = if cfg.kind == ModelKind::Sem { cfg.env_hidden } else { 0 };
                rec.cores = vec![CoreRecord::default(); cores.len()];
            } else if rec.batch != b {
                return Err(Error::dim("unroll batch", &[b], &[rec.batch]));
            }
            rec.steps += 1;
            rec.tasks.extend_from_slice(&input.tasks);
            rec.keep_outer.extend_from_slice(&outer);
            rec.keep_inner.extend_from_slice(&inner);
            rec.x0.extend(x0);
            rec.a1.extend(a1);
            rec.a2.extend(a2);
            for (dst, src) in rec.cores.iter_mut().zip(cores) {
                dst.append(src);
            }
            rec.feat.extend(feat);
            rec.logits.extend_from_slice(&logits);
            rec.values.extend_from_slice(&values);
            rec.comp_logits.extend_from_slice(&comp_logits);
        }

        Ok((
            StepOutput {
                logits,
                probs,
                values,
                comp_logits,
                comp_probs,
            },
            next,
        ))
    }

    fn lstm(&self, z: Vec<F>, c_prev: Vec<F>, w: ParamId, bias: ParamId, batch: usize, hidden: usize) -> (CoreRecord<F>, Vec<F>) {
        let zc = z.len() / batch;
        let mut gates = vec![F::ZERO; batch * 4 * hidden];
        forward_rows(&z, batch, zc, self.params.value(w), self.params.value(bias), 4 * hidden, &mut gates);
        let mut c = vec![F::ZERO; batch * hidden];
        let mut h = vec![F::ZERO; batch * hidden];
        cell_forward(&mut gates, &c_prev, batch, hidden, &mut c, &mut h);
        let rec = CoreRecord {
            z,
            gates,
            c_prev,
            c,
            ..CoreRecord::default()
        };
        (rec, h)
    }

    fn flstm(
        &self,
        z: Vec<F>,
        v: Vec<F>,
        c_prev: Vec<F>,
        (w1, w2, bias): (ParamId, ParamId, ParamId),
        batch: usize,
        hidden: usize,
    ) -> (CoreRecord<F>, Vec<F>) {
        let zc = z.len() / batch;
        let rank = self.config.embed_dim;
        let g4 = 4 * hidden;
        let (w1v, w2v, bv) = (self.params.value(w1), self.params.value(w2), self.params.value(bias));
        let mut u = vec![F::ZERO; batch * rank];
        let mut s = vec![F::ZERO; batch * rank];
        let mut gates = vec![F::ZERO; batch * g4];
        pre_forward(&z, batch, zc, &v, rank, w1v, w2v, bv, g4, &mut u, &mut s, &mut gates);
        if self.materialize {
            let mut scaled = vec![F::ZERO; g4 * rank];
            let mut wg = vec![F::ZERO; g4 * zc];
            for row in 0..batch {
                let vr = &v[row * rank..(row + 1) * rank];
                for (dst, src) in scaled.chunks_exact_mut(rank).zip(w1v.chunks_exact(rank)) {
                    for k in 0..rank {
                        dst[k] = src[k] * vr[k];
                    }
                }
                matmul(g4, rank, zc, &scaled, Trans::N, w2v, Trans::N, &mut wg);
                forward_rows(&z[row * zc..(row + 1) * zc], 1, zc, &wg, bv, g4, &mut gates[row * g4..(row + 1) * g4]);
            }
        }
        let mut c = vec![F::ZERO; batch * hidden];
        let mut h = vec![F::ZERO; batch * hidden];
        cell_forward(&mut gates, &c_prev, batch, hidden, &mut c, &mut h);
        let rec = CoreRecord {
            z,
            v,
            u,
            s,
            gates,
            c_prev,
            c,
        };
        (rec, h)
    }
}

/// Row-wise concatenation of `[batch, width]` blocks.
pub(crate) fn concat_cols<F: Real>(parts: &[(&[F], usize)], batch: usize) -> Vec<F> {
    let total: usize = parts.iter().map(|p| p.1).sum();
    let mut out = Vec::with_capacity(batch * total);
    for r in 0..batch {
        for &(data, w) in parts {
            out.extend_from_slice(&data[r * w..(r + 1) * w]);
        }
    }
    out
}

/// Copy of `x` with the rows whose `keep` flag is false zeroed.
fn gated<F: Real>(x: &[F], keep: &[bool], width: usize) -> Vec<F> {
    let mut out = x.to_vec();
    for (row, &k) in out.chunks_exact_mut(width).zip(keep) {
        if !k {
            row.fill(F::ZERO);
        }
    }
    out
}

fn cell_state<F: Real>(h: Vec<F>, c: Vec<F>, batch: usize, hidden: usize) -> LstmCellState<F> {
    LstmCellState {
        h: Tensor::from_vec(&[batch, hidden], h).expect("state shape"),
        c: Tensor::from_vec(&[batch, hidden], c).expect("state shape"),
    }
}
