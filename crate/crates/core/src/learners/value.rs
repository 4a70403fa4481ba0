//! IQL, VDN and QMIX-lite over a shared feed-forward agent network.
//!
//! Agent input is `obs ++ one_hot(agent id) ++ one_hot(last action)`; every
//! agent of the team shares the same parameters.

use ndarray::{Array2, ArrayView2};
use sha2::{Digest, Sha256};

use super::checkpoint::{Checkpoint, CheckpointManifest, CheckpointTeam, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use super::{
    epsilon_greedy, masked_argmax, masked_max, Algo, Episode, EpisodeBatch, Learner, LearnerConfig, LearnerError,
    MixerKind, QmixMixer, ReplayBuffer, TeamSpec,
};
use crate::env::ActionMask;
use crate::nn::{clip_grad_norm, Adam, Mlp};
use crate::rng::{derive_seed, derived_rng, streams, Rng};

/// Additive mixing: `Σ q_i`, summed left to right from 0.
pub fn vdn_mix(q: &[f64]) -> f64 {
    q.iter().fold(0.0, |acc, &v| acc + v)
}

#[derive(Debug, Clone)]
pub struct ValueLearner {
    algo: Algo,
    spec: TeamSpec,
    config: LearnerConfig,
    seed: u64,
    agent: Mlp,
    target_agent: Mlp,
    agent_opt: Adam,
    mixer: Option<QmixMixer>,
    target_mixer: Option<QmixMixer>,
    mixer_opt: Option<Adam>,
    buffer: ReplayBuffer,
    rng: Rng,
    train_steps: u64,
    env_steps: u64,
    frozen: bool,
}

/// Loss value and gradients for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub loss: f64,
    pub agent: Vec<f64>,
    pub mixer: Option<Vec<f64>>,
}

impl ValueLearner {
    pub fn new(algo: Algo, spec: &TeamSpec, config: LearnerConfig, seed: u64) -> Result<Self, LearnerError> {
        if !algo.is_trainable() {
            return Err(LearnerError::NotTrainable(algo));
        }
        config.validate()?;
        let info = spec.info;
        let mut widths = vec![info.obs_len + info.n_agents + info.n_actions];
        widths.extend(&config.hidden);
        widths.push(info.n_actions);
        let agent = Mlp::init(&widths, derive_seed(seed, streams::INIT, 0))?;
        let mixer = match algo {
            Algo::Qmix => Some(QmixMixer::new(
                config.mixer,
                info.n_agents,
                info.state_len,
                config.mixer_embed,
                derive_seed(seed, streams::INIT, 1),
            )?),
            _ => None,
        };
        Ok(Self::assemble(algo, spec, config, seed, agent, mixer))
    }

    fn assemble(
        algo: Algo,
        spec: &TeamSpec,
        config: LearnerConfig,
        seed: u64,
        agent: Mlp,
        mixer: Option<QmixMixer>,
    ) -> Self {
        ValueLearner {
            algo,
            spec: spec.clone(),
            seed,
            target_agent: agent.clone(),
            agent_opt: Adam::new(agent.n_params(), config.lr),
            target_mixer: mixer.clone(),
            mixer_opt: mixer.as_ref().map(|m| Adam::new(m.n_params(), config.lr)),
            mixer,
            agent,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            rng: derived_rng(seed, streams::TRAINING, 0),
            train_steps: 0,
            env_steps: 0,
            frozen: false,
            config,
        }
    }

    /// Replaces the mixer (and its target) and resets its optimizer; used to
    /// install the identity mixer.
    pub fn set_mixer(&mut self, mixer: QmixMixer) {
        self.mixer_opt = Some(Adam::new(mixer.n_params(), self.config.lr));
        self.target_mixer = Some(mixer.clone());
        self.mixer = Some(mixer);
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn agent_net(&self) -> &Mlp {
        &self.agent
    }

    pub fn mixer(&self) -> Option<&QmixMixer> {
        self.mixer.as_ref()
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn input_len(&self) -> usize {
        let i = self.spec.info;
        i.obs_len + i.n_agents + i.n_actions
    }

    fn fill_input(&self, row: &mut [f64], obs: impl Iterator<Item = f64>, agent: usize, last: Option<usize>) {
        let i = self.spec.info;
        for (dst, v) in row.iter_mut().zip(obs) {
            *dst = v;
        }
        row[i.obs_len + agent] = 1.0;
        if let Some(a) = last {
            row[i.obs_len + i.n_agents + a] = 1.0;
        }
    }

    /// Per-agent Q-values for the current step.
    pub fn q_values(&self, observations: &[Vec<f64>], last_actions: &[Option<usize>]) -> Result<Array2<f64>, LearnerError> {
        let n = observations.len();
        let mut x = Array2::zeros((n, self.input_len()));
        for (i, o) in observations.iter().enumerate() {
            let mut row = x.row_mut(i);
            let row = row.as_slice_mut().expect("contiguous");
            self.fill_input(row, o.iter().copied(), i, last_actions.get(i).copied().flatten());
        }
        Ok(self.agent.forward_batch(x.view())?.output().clone())
    }

    /// Input rows for every time point of every episode, in
    /// `(episode, t, agent)` order.
    fn batch_inputs(&self, batch: &EpisodeBatch<'_>) -> Array2<f64> {
        let n = self.spec.info.n_agents;
        let rows: usize = batch.episodes.iter().map(|e| (e.len() + 1) * n).sum();
        let mut x = Array2::zeros((rows, self.input_len()));
        let mut r = 0;
        for ep in &batch.episodes {
            for t in 0..=ep.len() {
                for i in 0..n {
                    let mut row = x.row_mut(r);
                    let row = row.as_slice_mut().expect("contiguous");
                    self.fill_input(row, ep.obs(t, i).iter().map(|&v| f64::from(v)), i, ep.last_action(t, i));
                    r += 1;
                }
            }
        }
        x
    }

    /// Bootstrapped per-agent value of the next step, `max_a Q_target`
    /// (or the double-Q variant).
    fn next_value(&self, ep: &Episode, t: usize, i: usize, q_online: ArrayView2<'_, f64>, q_target: ArrayView2<'_, f64>, row: usize) -> f64 {
        let mask = ep.avail(t + 1, i);
        let tq = q_target.row(row);
        let tq = tq.as_slice().expect("contiguous");
        if self.config.double_q {
            let oq = q_online.row(row);
            let a = masked_argmax(oq.as_slice().expect("contiguous"), mask).unwrap_or(0);
            tq[a]
        } else {
            masked_max(tq, mask)
        }
    }

    /// Loss and gradients on a batch without touching any parameters.
    pub fn loss_and_grads(&self, batch: &EpisodeBatch<'_>) -> Result<LossGrads, LearnerError> {
        let n = self.spec.info.n_agents;
        let gamma = self.config.gamma;
        let x = self.batch_inputs(batch);
        let online = self.agent.forward_batch(x.view())?;
        let target = self.target_agent.forward_batch(x.view())?;
        let q = online.output();
        let qt = target.output();
        let mut grad_out = Array2::zeros(q.dim());

        let loss = match self.algo {
            Algo::Iql => {
                let count = (batch.filled_steps() * n) as f64;
                let mut sum = 0.0;
                let mut base = 0;
                for (b, ep) in batch.episodes.iter().enumerate() {
                    for t in 0..ep.len() {
                        for i in 0..n {
                            let row = base + t * n + i;
                            let a = ep.action(t, i);
                            let next = if batch.terminal(b, t) {
                                0.0
                            } else {
                                gamma * self.next_value(ep, t, i, q.view(), qt.view(), row + n)
                            };
                            let y = ep.rewards[t] + next;
                            let err = q[[row, a]] - y;
                            sum += err * err;
                            grad_out[[row, a]] = 2.0 * err / count;
                        }
                    }
                    base += (ep.len() + 1) * n;
                }
                sum / count
            }
            Algo::Vdn | Algo::Qmix => {
                let steps = batch.filled_steps();
                let count = steps as f64;
                let mut chosen = Array2::zeros((steps, n));
                let mut next_max = Array2::zeros((steps, n));
                let mut rows = Vec::with_capacity(steps);
                let mut base = 0;
                let mut s = 0;
                for (b, ep) in batch.episodes.iter().enumerate() {
                    for t in 0..ep.len() {
                        for i in 0..n {
                            let row = base + t * n + i;
                            chosen[[s, i]] = q[[row, ep.action(t, i)]];
                            if !batch.terminal(b, t) {
                                next_max[[s, i]] = self.next_value(ep, t, i, q.view(), qt.view(), row + n);
                            }
                        }
                        rows.push((b, t, base + t * n));
                        s += 1;
                    }
                    base += (ep.len() + 1) * n;
                }
                let (q_tot, next_tot, mixer_cache) = match self.algo {
                    Algo::Vdn => {
                        let qt: Vec<f64> = chosen.rows().into_iter().map(|r| vdn_mix(r.as_slice().expect("row"))).collect();
                        let nt: Vec<f64> = next_max.rows().into_iter().map(|r| vdn_mix(r.as_slice().expect("row"))).collect();
                        (qt, nt, None)
                    }
                    _ => {
                        let (cur_s, next_s) = self.batch_states(batch);
                        let mixer = self.mixer.as_ref().expect("qmix has a mixer");
                        let target_mixer = self.target_mixer.as_ref().expect("qmix has a mixer");
                        let (qt, cache) = mixer.forward_batch(chosen.view(), cur_s.view())?;
                        let (nt, _) = target_mixer.forward_batch(next_max.view(), next_s.view())?;
                        (qt, nt, Some(cache))
                    }
                };
                let mut sum = 0.0;
                let mut dtot = vec![0.0; steps];
                for (k, &(b, t, _)) in rows.iter().enumerate() {
                    let next = if batch.terminal(b, t) { 0.0 } else { gamma * next_tot[k] };
                    let y = batch.reward(b, t) + next;
                    let err = q_tot[k] - y;
                    sum += err * err;
                    dtot[k] = 2.0 * err / count;
                }
                let (dq, mixer_grads) = match &mixer_cache {
                    None => {
                        let mut dq = Array2::zeros((steps, n));
                        for k in 0..steps {
                            for i in 0..n {
                                dq[[k, i]] = dtot[k];
                            }
                        }
                        (dq, None)
                    }
                    Some(cache) => {
                        let mixer = self.mixer.as_ref().expect("qmix has a mixer");
                        let (g, dq) = mixer.backward_batch(cache, &dtot)?;
                        (dq, Some(g))
                    }
                };
                for (k, &(b, t, row0)) in rows.iter().enumerate() {
                    let ep = batch.episodes[b];
                    for i in 0..n {
                        grad_out[[row0 + i, ep.action(t, i)]] = dq[[k, i]];
                    }
                }
                let (agent_grads, _) = self.agent.backward_batch(&online, grad_out.view())?;
                return Ok(LossGrads {
                    loss: sum / count,
                    agent: agent_grads,
                    mixer: mixer_grads,
                });
            }
            other => return Err(LearnerError::NotTrainable(other)),
        };
        let (agent_grads, _) = self.agent.backward_batch(&online, grad_out.view())?;
        Ok(LossGrads {
            loss,
            agent: agent_grads,
            mixer: None,
        })
    }

    /// Current and next global states for every filled step.
    fn batch_states(&self, batch: &EpisodeBatch<'_>) -> (Array2<f64>, Array2<f64>) {
        let steps = batch.filled_steps();
        let sl = self.spec.info.state_len;
        let mut cur = Array2::zeros((steps, sl));
        let mut next = Array2::zeros((steps, sl));
        let mut k = 0;
        for ep in &batch.episodes {
            for t in 0..ep.len() {
                for (dst, &v) in cur.row_mut(k).iter_mut().zip(ep.state(t)) {
                    *dst = f64::from(v);
                }
                for (dst, &v) in next.row_mut(k).iter_mut().zip(ep.state(t + 1)) {
                    *dst = f64::from(v);
                }
                k += 1;
            }
        }
        (cur, next)
    }

    /// Applies one optimizer step with the given gradients.
    pub fn apply_gradients(&mut self, mut grads: LossGrads) -> Result<(), LearnerError> {
        let train_mixer = self.config.train_mixer && grads.mixer.is_some();
        // joint gradient norm over everything that is being trained
        let na = grads.agent.len();
        let mut joint = std::mem::take(&mut grads.agent);
        if train_mixer {
            joint.extend(grads.mixer.as_ref().expect("checked"));
        }
        clip_grad_norm(&mut joint, self.config.grad_clip);
        let mut params = self.agent.params().to_vec();
        self.agent_opt.step(&mut params, &joint[..na])?;
        self.agent.params_mut().copy_from_slice(&params);
        if train_mixer {
            let mixer = self.mixer.as_mut().expect("checked");
            let opt = self.mixer_opt.as_mut().expect("mixer optimizer");
            let mut mp = mixer.params_flat();
            opt.step(&mut mp, &joint[na..])?;
            mixer.set_params_flat(&mp);
        }
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.config.target_interval) {
            self.update_targets();
        }
        Ok(())
    }

    pub fn update_targets(&mut self) {
        self.target_agent = self.agent.clone();
        self.target_mixer = self.mixer.clone();
    }

    /// Samples a minibatch and performs one update; `None` while the buffer
    /// holds fewer than `batch_size` episodes.
    pub fn try_train_step(&mut self) -> Result<Option<f64>, LearnerError> {
        if self.frozen {
            return Ok(None);
        }
        let Some(batch) = self.buffer.sample(self.config.batch_size, &mut self.rng) else {
            return Ok(None);
        };
        let grads = self.loss_and_grads(&batch)?;
        let loss = grads.loss;
        self.apply_gradients(grads)?;
        Ok(Some(loss))
    }

    pub fn from_checkpoint(ck: Checkpoint, spec: &TeamSpec) -> Result<Self, LearnerError> {
        ck.check_compatible(spec)?;
        let mut config = ck.config;
        config.validate()?;
        let algo = ck.manifest.algo;
        if !algo.is_trainable() {
            return Err(LearnerError::NotTrainable(algo));
        }
        if ck.agent.input_len() != spec.info.obs_len + spec.info.n_agents + spec.info.n_actions
            || ck.agent.output_len() != spec.info.n_actions
        {
            return Err(LearnerError::CheckpointFormat("agent network shape".into()));
        }
        if (algo == Algo::Qmix) != ck.mixer.is_some() {
            return Err(LearnerError::CheckpointFormat("mixer presence does not match algorithm".into()));
        }
        config.hidden = ck.agent.widths()[1..ck.agent.widths().len() - 1].to_vec();
        let mut l = Self::assemble(algo, spec, config, ck.manifest.seed, ck.agent, ck.mixer);
        l.target_agent = ck.target_agent;
        l.agent_opt = ck.agent_opt;
        if let Some(m) = ck.target_mixer {
            l.target_mixer = Some(m);
        }
        if let Some(o) = ck.mixer_opt {
            l.mixer_opt = Some(o);
        }
        l.train_steps = ck.manifest.train_steps;
        l.env_steps = ck.manifest.env_steps;
        Ok(l)
    }
}

impl Learner for ValueLearner {
    fn algo(&self) -> Algo {
        self.algo
    }

    fn act(
        &self,
        observations: &[Vec<f64>],
        masks: &[ActionMask],
        last_actions: &[Option<usize>],
        epsilon: f64,
        rng: &mut Rng,
    ) -> Result<Vec<usize>, LearnerError> {
        let q = self.q_values(observations, last_actions)?;
        masks
            .iter()
            .enumerate()
            .map(|(i, m)| epsilon_greedy(q.row(i).as_slice().expect("contiguous"), m, epsilon, rng))
            .collect()
    }

    fn observe(&mut self, episode: Episode) {
        if self.frozen {
            return;
        }
        self.env_steps += episode.len() as u64;
        self.buffer.push(episode);
    }

    fn train_step(&mut self) -> Option<f64> {
        self.try_train_step().expect("batch shapes are fixed by construction")
    }

    fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn freeze(&mut self) {
        self.frozen = true;
        self.buffer = ReplayBuffer::new(1);
    }

    fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.algo.as_str().as_bytes());
        h.update(self.agent.param_hash().as_bytes());
        if let Some(m) = &self.mixer {
            for p in m.params_flat() {
                h.update(p.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn checkpoint(&self) -> Option<Checkpoint> {
        let info = self.spec.info;
        Some(Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            manifest: CheckpointManifest {
                algo: self.algo,
                scenario: self.spec.scenario.clone(),
                mode: None,
                seed: self.seed,
                env_steps: self.env_steps,
                train_steps: self.train_steps,
            },
            team: CheckpointTeam {
                n_agents: info.n_agents,
                obs_len: info.obs_len,
                state_len: info.state_len,
                n_actions: info.n_actions,
            },
            config: self.config.clone(),
            agent: self.agent.clone(),
            target_agent: self.target_agent.clone(),
            agent_opt: self.agent_opt.clone(),
            mixer: self.mixer.clone(),
            target_mixer: self.target_mixer.clone(),
            mixer_opt: self.mixer_opt.clone(),
        })
    }

    fn buffered(&self) -> usize {
        self.buffer.len()
    }

    fn clone_box(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}

impl MixerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MixerKind::TwoLayer => "two_layer",
            MixerKind::OneLayer => "one_layer",
        }
    }
}
