//! Per-agent actor-critic learner.
//!
//! A discrete-action variant of DDPG: the actor emits five logits, the
//! critic scores `(actor input, action embedding)`. Bootstrap targets use the
//! target actor's argmax action; the actor is trained through a softmax-
//! weighted action embedding so the critic's input gradient reaches the
//! logits.

mod reward;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::encoding::{EmbeddingTables, ACTION_DIM, ACTOR_INPUT_DIM, CRITIC_INPUT_DIM};
use crate::error::Result;
use crate::gridworld::Action;
use crate::neural::{
    soft_update, Adam, Deltas, ForwardCache, Gradients, Mlp, Transition, TransitionStore,
};

pub use reward::{
    combined_move_reward, extrinsic_reward, known_map_distance, normalized_extrinsic, step_reward,
    DistanceSource, RewardParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrainConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
}

impl Default for BrainConfig {
    fn default() -> Self {
        BrainConfig {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            tau: 1e-3,
            batch_size: 64,
            replay_capacity: 100_000,
        }
    }
}

/// Linear ε decay from `start` to `end` over `anneal_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if step >= self.anneal_steps {
            return self.end;
        }
        let frac = (step as f64 / self.anneal_steps as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

/// Diagnostics from one learning update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

/// Index of the largest logit; ties go to the lowest index.
pub fn greedy_action(logits: &[f64]) -> Action {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = i;
        }
    }
    Action::from_index(best).unwrap_or(Action::Stay)
}

/// Row-wise argmax of a logits matrix.
fn argmax_rows(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| greedy_action(r.as_slice().unwrap_or(&r.to_vec())).index())
        .collect()
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

#[derive(Debug, Clone)]
pub struct AgentBrain {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    pub replay: TransitionStore,
    config: BrainConfig,
    /// Action embeddings, one row per action.
    actions: Array2<f64>,
    workspace: Workspace,
}

/// A sampled minibatch laid out as matrices.
#[derive(Debug, Clone, Default)]
struct Batch {
    states: Array2<f64>,
    actions: Vec<usize>,
    rewards: Array1<f64>,
    next_states: Array2<f64>,
    not_done: Array1<f64>,
}

/// Buffers reused across updates.
#[derive(Debug, Clone, Default)]
struct Workspace {
    batch: Batch,
    next_input: Array2<f64>,
    stacked: Array2<f64>,
    target_actor: ForwardCache,
    target_critic: ForwardCache,
    actor: ForwardCache,
    critic: ForwardCache,
    deltas: Deltas,
    critic_grads: Gradients,
    actor_grads: Gradients,
}

fn reshape(a: &mut Array2<f64>, shape: (usize, usize)) {
    if a.dim() != shape {
        *a = Array2::zeros(shape);
    }
}

impl Batch {
    fn fill_from_rows(&mut self, store: &TransitionStore, rows: &[usize]) {
        let b = rows.len();
        reshape(&mut self.states, (b, ACTOR_INPUT_DIM));
        reshape(&mut self.next_states, (b, ACTOR_INPUT_DIM));
        for (i, &r) in rows.iter().enumerate() {
            self.states
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(store.state(r)));
            self.next_states
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(store.next_state(r)));
        }
        self.actions.clear();
        self.actions.extend(rows.iter().map(|&r| store.action(r)));
        self.rewards = rows.iter().map(|&r| store.reward(r)).collect();
        self.not_done = rows
            .iter()
            .map(|&r| if store.done(r) { 0.0 } else { 1.0 })
            .collect();
    }

    fn from_transitions(batch: &[&Transition]) -> Batch {
        let b = batch.len();
        let mut states = Array2::zeros((b, ACTOR_INPUT_DIM));
        let mut next_states = Array2::zeros((b, ACTOR_INPUT_DIM));
        for (i, t) in batch.iter().enumerate() {
            states
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.state[..]));
            next_states
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.next_state[..]));
        }
        Batch {
            states,
            actions: batch.iter().map(|t| t.action).collect(),
            rewards: batch.iter().map(|t| t.reward).collect(),
            next_states,
            not_done: batch
                .iter()
                .map(|t| if t.done { 0.0 } else { 1.0 })
                .collect(),
        }
    }
}

impl AgentBrain {
    pub fn new<R: Rng + ?Sized>(
        config: BrainConfig,
        tables: &EmbeddingTables,
        rng: &mut R,
    ) -> Result<AgentBrain> {
        let actor = Mlp::two_hidden(ACTOR_INPUT_DIM, Action::ALL.len(), rng)?;
        let critic = Mlp::two_hidden(CRITIC_INPUT_DIM, 1, rng)?;
        let mut actions = Array2::zeros((Action::ALL.len(), ACTION_DIM));
        for a in Action::ALL {
            actions
                .row_mut(a.index())
                .assign(&ndarray::ArrayView1::from(tables.action_embedding(a)));
        }
        Ok(AgentBrain {
            actor_opt: Adam::new(&actor, config.actor_lr),
            critic_opt: Adam::new(&critic, config.critic_lr),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            replay: TransitionStore::new(config.replay_capacity, ACTOR_INPUT_DIM),
            config,
            actions,
            workspace: Workspace::default(),
        })
    }

    pub fn config(&self) -> &BrainConfig {
        &self.config
    }

    pub fn set_learning_rates(&mut self, actor_lr: f64, critic_lr: f64) {
        self.actor_opt.set_lr(actor_lr);
        self.critic_opt.set_lr(critic_lr);
    }

    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.actor.predict_one(input)
    }

    /// ε-greedy over the actor's logits. One uniform draw is always consumed;
    /// a second picks the random action when exploring.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        input: &[f64],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Action> {
        if rng.gen::<f64>() < epsilon {
            let i = rng.gen_range(0..Action::ALL.len());
            return Ok(Action::ALL[i]);
        }
        Ok(greedy_action(&self.logits(input)?))
    }

    pub fn remember(&mut self, t: &Transition) -> Result<()> {
        self.replay.push(t)
    }

    /// After aggregation the target copies follow the online networks and
    /// the optimizer moments restart from zero.
    pub fn sync_after_aggregation(&mut self) {
        self.target_actor = self.actor.clone();
        self.target_critic = self.critic.clone();
        self.actor_opt.reset();
        self.critic_opt.reset();
    }

    fn critic_rows(&self, states: ArrayView2<f64>, action_embed: ArrayView2<f64>) -> Array2<f64> {
        let b = states.nrows();
        let mut x = Array2::zeros((b, CRITIC_INPUT_DIM));
        x.slice_mut(s![.., ..ACTOR_INPUT_DIM]).assign(&states);
        x.slice_mut(s![.., ACTOR_INPUT_DIM..]).assign(&action_embed);
        x
    }

    fn embed_actions(&self, actions: &[usize]) -> Array2<f64> {
        self.actions.select(Axis(0), actions)
    }

    /// Bootstrapped targets `r + γ·(1 − done)·Q'(s', argmax π'(s'))`.
    fn targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        let mut ws = Workspace::default();
        self.targets_with(
            batch,
            &mut ws.next_input,
            &mut ws.target_actor,
            &mut ws.target_critic,
        )
    }

    fn targets_with(
        &self,
        batch: &Batch,
        next_input: &mut Array2<f64>,
        actor_cache: &mut ForwardCache,
        critic_cache: &mut ForwardCache,
    ) -> Result<Array1<f64>> {
        self.target_actor
            .forward_into(batch.next_states.view(), actor_cache)?;
        let next_actions = argmax_rows(actor_cache.output().view());
        self.fill_critic_rows(next_input, batch.next_states.view(), &next_actions);
        self.target_critic
            .forward_into(next_input.view(), critic_cache)?;
        let q_next = critic_cache.output().column(0);
        Ok(&batch.rewards + &(self.config.gamma * &batch.not_done * q_next))
    }

    /// `[state | embedding(action)]` rows written into `out`.
    fn fill_critic_rows(&self, out: &mut Array2<f64>, states: ArrayView2<f64>, actions: &[usize]) {
        reshape(out, (states.nrows(), CRITIC_INPUT_DIM));
        out.slice_mut(s![.., ..ACTOR_INPUT_DIM]).assign(&states);
        for (i, &a) in actions.iter().enumerate() {
            out.slice_mut(s![i, ACTOR_INPUT_DIM..])
                .assign(&self.actions.row(a));
        }
    }

    /// Critic TD targets for a set of transitions.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Array1<f64>> {
        self.targets(&Batch::from_transitions(batch))
    }

    /// Mean squared TD error of the online critic against fixed targets, and
    /// its parameter gradient.
    pub fn critic_loss_and_grad(
        &self,
        batch: &[&Transition],
        targets: &Array1<f64>,
    ) -> Result<(f64, Gradients)> {
        let b = Batch::from_transitions(batch);
        let x = self.critic_rows(b.states.view(), self.embed_actions(&b.actions).view());
        let (q, cache) = self.critic.forward(x.view())?;
        let err = &q.column(0) - targets;
        let n = batch.len() as f64;
        let loss = err.mapv(|e| e * e).sum() / n;
        let dq = (err * (2.0 / n)).insert_axis(Axis(1));
        Ok((loss, self.critic.backward(&cache, dq.view())))
    }

    /// Sample a minibatch and apply one critic and one actor step. `None`
    /// while the buffer holds fewer than `batch_size` transitions.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<LossReport>> {
        let Some(rows) = self.replay.sample_rows(self.config.batch_size, rng) else {
            return Ok(None);
        };
        let mut ws = std::mem::take(&mut self.workspace);
        ws.batch.fill_from_rows(&self.replay, &rows);
        let report = self.apply_update(&mut ws);
        self.workspace = ws;
        report.map(Some)
    }

    /// One update on an explicit minibatch.
    pub fn update_on_batch(&mut self, batch: &[&Transition]) -> Result<LossReport> {
        let mut ws = std::mem::take(&mut self.workspace);
        ws.batch = Batch::from_transitions(batch);
        let report = self.apply_update(&mut ws);
        self.workspace = ws;
        report
    }

    /// Losses and parameter gradients for critic and actor on a minibatch,
    /// without applying them.
    pub fn loss_gradients(
        &self,
        batch: &[&Transition],
    ) -> Result<(LossReport, Gradients, Gradients)> {
        let mut ws = Workspace {
            batch: Batch::from_transitions(batch),
            ..Workspace::default()
        };
        let report = self.gradients_into(&mut ws)?;
        Ok((report, ws.critic_grads, ws.actor_grads))
    }

    fn apply_update(&mut self, ws: &mut Workspace) -> Result<LossReport> {
        let report = self.gradients_into(ws)?;
        self.critic_opt.step(&mut self.critic, &ws.critic_grads)?;
        self.actor_opt.step(&mut self.actor, &ws.actor_grads)?;
        soft_update(&mut self.target_critic, &self.critic, self.config.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.config.tau)?;
        Ok(report)
    }

    /// Losses for `ws.batch`; gradients land in `ws.critic_grads` and
    /// `ws.actor_grads`.
    fn gradients_into(&self, ws: &mut Workspace) -> Result<LossReport> {
        let Workspace {
            batch,
            next_input,
            stacked,
            target_actor,
            target_critic,
            actor,
            critic,
            deltas,
            critic_grads,
            actor_grads,
        } = ws;
        let n = batch.actions.len();
        let y = self.targets_with(batch, next_input, target_actor, target_critic)?;

        // Actor: softmax-weighted action embedding.
        self.actor.forward_into(batch.states.view(), actor)?;
        let probs = softmax_rows(actor.output());
        let soft_actions = probs.dot(&self.actions);

        // One critic pass over stored actions (rows 0..n) and soft actions (n..2n).
        reshape(stacked, (2 * n, CRITIC_INPUT_DIM));
        stacked
            .slice_mut(s![..n, ..ACTOR_INPUT_DIM])
            .assign(&batch.states);
        for (i, &a) in batch.actions.iter().enumerate() {
            stacked
                .slice_mut(s![i, ACTOR_INPUT_DIM..])
                .assign(&self.actions.row(a));
        }
        stacked
            .slice_mut(s![n.., ..ACTOR_INPUT_DIM])
            .assign(&batch.states);
        stacked
            .slice_mut(s![n.., ACTOR_INPUT_DIM..])
            .assign(&soft_actions);
        self.critic.forward_into(stacked.view(), critic)?;
        let q_all = critic.output();

        let q = q_all.slice(s![..n, 0]);
        let err = &q - &y;
        let critic_loss = err.mapv(|e| e * e).sum() / n as f64;
        let dq = (err * (2.0 / n as f64)).insert_axis(Axis(1));
        self.critic
            .backward_rows_into(critic, 0..n, dq.view(), critic_grads, deltas);

        let q_soft = q_all.slice(s![n.., 0]);
        let actor_loss = -q_soft.sum() / n as f64;
        let dq_soft = Array2::from_elem((n, 1), -1.0 / n as f64);
        let d_soft = self.critic.input_gradient_with(
            critic,
            n..2 * n,
            ACTOR_INPUT_DIM..CRITIC_INPUT_DIM,
            dq_soft.view(),
            deltas,
        );
        let d_probs = d_soft.dot(&self.actions.t());
        // softmax Jacobian: dz_j = p_j (dp_j − Σ_k p_k dp_k)
        let inner = (&probs * &d_probs).sum_axis(Axis(1)).insert_axis(Axis(1));
        let d_logits = &probs * &(&d_probs - &inner);
        self.actor
            .backward_rows_into(actor, 0..n, d_logits.view(), actor_grads, deltas);

        Ok(LossReport {
            critic_loss,
            actor_loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_argmax_and_ties() {
        assert_eq!(greedy_action(&[0.1, 3.0, -1.0, 0.0, 0.0]), Action::Right);
        assert_eq!(greedy_action(&[0.5; 5]), Action::Left);
        let shifted: Vec<f64> = [0.1, 3.0, -1.0, 0.0, 0.0]
            .iter()
            .map(|v| v + 17.0)
            .collect();
        assert_eq!(greedy_action(&shifted), Action::Right);
    }

    #[test]
    fn epsilon_schedule() {
        let s = EpsilonSchedule {
            start: 0.9,
            end: 0.05,
            anneal_steps: 100,
        };
        assert_eq!(s.value(0), 0.9);
        assert!((s.value(50) - 0.475).abs() < 1e-12);
        assert_eq!(s.value(100), 0.05);
        assert_eq!(s.value(1_000), 0.05);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&ndarray::array![[1.0, 2.0, 3.0], [1000.0, 1000.0, -1000.0]]);
        for r in p.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        assert!((p[[1, 0]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn update_waits_for_a_full_batch() {
        let tables = EmbeddingTables::build(1, 4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut brain = AgentBrain::new(BrainConfig::default(), &tables, &mut rng).unwrap();
        for _ in 0..63 {
            brain
                .remember(&Transition {
                    state: vec![0.0; ACTOR_INPUT_DIM],
                    action: 0,
                    reward: 0.0,
                    next_state: vec![0.0; ACTOR_INPUT_DIM],
                    done: false,
                })
                .unwrap();
        }
        let before = brain.actor.clone();
        assert!(brain.update(&mut rng).unwrap().is_none());
        assert_eq!(brain.actor, before);
    }
}
