//! Imitation warm start and the asynchronous actor-critic training loop.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::Problem;
use super::net::{NetConfig, PolicyValueNet};
use super::policy::masked_distribution;
use super::rollout::{accumulate_gradients, worker_rollout, Gradients, LossWeights, RewardMix};
use super::search::bfs_plan;
use super::{greedy_rollout, PlanError};
use crate::expert::Trajectory;
use crate::gail::{pair_features, Discriminator, ReplayBuffer};
use crate::lattice::{apply_action, mismatch_count, Action, Configuration};
use crate::nn::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub workers: usize,
    pub gamma: f64,
    pub batch: usize,
    /// Steps per rollout (and per episode).
    pub t_max: usize,
    pub buffer: usize,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Global environment-step budget.
    pub total_steps: u64,
    /// Hard target copy every this many global steps, on top of soft updates.
    pub target_interval: Option<u64>,
    pub entropy: f64,
    pub value_coef: f64,
    pub max_grad_norm: Option<f64>,
    /// Initial imitation weight, annealed linearly to 0.
    pub lambda: f64,
    pub disc_lr: f64,
    /// New imitator pairs between discriminator updates.
    pub disc_interval: usize,
    pub bootstrap_from_target: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            workers: 32,
            gamma: 0.99,
            batch: 64,
            t_max: 24,
            buffer: 480_000,
            tau: 1e-3,
            lr_actor: 1e-5,
            lr_critic: 2e-5,
            total_steps: 200_000,
            target_interval: None,
            entropy: 0.01,
            value_coef: 0.5,
            max_grad_norm: Some(40.0),
            lambda: 0.5,
            disc_lr: 1e-3,
            disc_interval: 64,
            bootstrap_from_target: true,
        }
    }
}

impl Hyperparameters {
    /// Settings for small instances on a desktop CPU.
    pub fn desk() -> Hyperparameters {
        Hyperparameters {
            workers: 4,
            lr_actor: 1e-3,
            lr_critic: 2e-3,
            total_steps: 100_000,
            tau: 1e-2,
            ..Hyperparameters::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |what| Err(PlanError::InvalidHyperparameter(what));
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch == 0 || self.t_max == 0 || self.buffer == 0 || self.total_steps == 0 || self.disc_interval == 0 {
            return bad("counts must be positive");
        }
        if self.target_interval == Some(0) {
            return bad("target interval must be positive");
        }
        for (v, what) in [
            (self.lr_actor, "actor learning rate must be positive"),
            (self.lr_critic, "critic learning rate must be positive"),
            (self.disc_lr, "discriminator learning rate must be positive"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(what);
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.entropy < 0.0 || self.value_coef < 0.0 {
            return bad("loss weights must be non-negative");
        }
        Ok(())
    }

    fn loss_weights(&self) -> LossWeights {
        LossWeights {
            gamma: self.gamma,
            entropy: self.entropy,
            value: self.value_coef,
            bootstrap_from_target: self.bootstrap_from_target,
        }
    }
}

/// Episode starts: `base` perturbed by `0..=max_perturb` random legal moves.
#[derive(Clone, Debug, PartialEq)]
pub struct StartDistribution {
    pub base: Configuration,
    pub max_perturb: usize,
}

impl StartDistribution {
    pub fn fixed(base: Configuration) -> StartDistribution {
        StartDistribution { base, max_perturb: 0 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, problem: &Problem, rng: &mut R) -> Result<Configuration, PlanError> {
        let k = rng.gen_range(0..=self.max_perturb);
        let mut state = self.base.clone();
        for _ in 0..k {
            let legal = problem.legal(&state);
            let Some((_, a)) = legal.choose(rng) else {
                break;
            };
            state = apply_action(&state, a)?;
        }
        Ok(state)
    }
}

/// One SGD step on the shared parameters, atomic with respect to other
/// workers' updates.
pub fn apply_async_update(shared: &Mutex<PolicyValueNet>, grads: &Gradients, lr_actor: f64, lr_critic: f64) {
    let mut net = shared.lock().expect("shared net lock");
    sgd(&mut net, grads, lr_actor, lr_critic);
}

fn sgd(net: &mut PolicyValueNet, grads: &Gradients, lr_actor: f64, lr_critic: f64) {
    assert_eq!(grads.theta.len(), net.theta.len(), "theta gradient length");
    assert_eq!(grads.theta_v.len(), net.theta_v.len(), "theta_v gradient length");
    for (p, g) in net.theta.iter_mut().zip(&grads.theta) {
        *p -= lr_actor * g;
    }
    for (p, g) in net.theta_v.iter_mut().zip(&grads.theta_v) {
        *p -= lr_critic * g;
    }
}

/// Soft target update, or a full copy when `hard`.
pub fn sync_target(net: &mut PolicyValueNet, tau: f64, hard: bool) {
    if hard {
        net.hard_sync_target();
    } else {
        net.soft_sync_target(tau);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub gamma: f64,
    pub value_coef: f64,
    /// Stop between epochs once passed.
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            epochs: 20,
            lr: 1e-3,
            batch: 64,
            gamma: 0.99,
            value_coef: 0.5,
            deadline: None,
        }
    }
}

struct BcSample {
    input: Vec<f64>,
    legal: Vec<usize>,
    action: usize,
    ret: f64,
}

fn representable(problem: &Problem, state: &Configuration, action: &Action) -> Option<usize> {
    let idx = problem.action_index(action)?;
    problem.legal(state).iter().any(|(i, _)| *i == idx).then_some(idx)
}

/// Expert pairs the problem can encode: states inside the box and actions
/// that are legal there. Walks that drift outside are dropped.
pub fn usable_pairs(problem: &Problem, dataset: &[Trajectory]) -> Vec<(Configuration, Action)> {
    crate::expert::expert_pairs(dataset)
        .into_iter()
        .filter(|(s, a)| representable(problem, s, a).is_some())
        .collect()
}

fn bc_samples(problem: &Problem, dataset: &[Trajectory], gamma: f64) -> Result<Vec<BcSample>, PlanError> {
    let mut out = Vec::new();
    for traj in dataset {
        let rewards: Vec<f64> = traj
            .transitions
            .iter()
            .map(|t| mismatch_count(&t.next_state, &problem.target).map(|m| -(m as f64)))
            .collect::<Result<_, _>>()?;
        let mut g = 0.0;
        let mut returns = vec![0.0; rewards.len()];
        for i in (0..rewards.len()).rev() {
            g = rewards[i] + gamma * g;
            returns[i] = g;
        }
        for (t, ret) in traj.transitions.iter().zip(returns) {
            let Some(action) = representable(problem, &t.state, &t.action) else {
                continue;
            };
            out.push(BcSample {
                input: problem.encode(&t.state)?.data,
                legal: problem.legal(&t.state).into_iter().map(|(i, _)| i).collect(),
                action,
                ret,
            });
        }
    }
    Ok(out)
}

/// Mean negative log-likelihood of the expert actions.
pub fn imitation_nll(
    net: &PolicyValueNet,
    problem: &Problem,
    pairs: &[(Configuration, Action)],
) -> Result<f64, PlanError> {
    let mut total = 0.0;
    for (s, a) in pairs {
        let legal: Vec<usize> = problem.legal(s).into_iter().map(|(i, _)| i).collect();
        let out = net.forward(&problem.encode(s)?.data)?;
        let p = masked_distribution(&out.logits, &legal)?;
        let idx = problem
            .action_index(a)
            .ok_or(PlanError::Gail(crate::gail::GailError::UnindexedAction(*a)))?;
        total -= p[idx].ln();
    }
    Ok(total / pairs.len().max(1) as f64)
}

/// Behavior cloning: minimizes the masked NLL of expert actions and fits
/// the value head to Monte-Carlo returns. Returns the mean NLL seen in
/// each epoch.
pub fn pretrain_imitation<R: Rng + ?Sized>(
    net: &mut PolicyValueNet,
    problem: &Problem,
    dataset: &[Trajectory],
    opts: &PretrainOptions,
    rng: &mut R,
) -> Result<Vec<f64>, PlanError> {
    if opts.epochs == 0 {
        return Ok(vec![]);
    }
    let samples = bc_samples(problem, dataset, opts.gamma)?;
    if samples.is_empty() {
        return Err(PlanError::EmptyDataset);
    }
    let mut adam_t = Adam::new(net.theta.len(), opts.lr);
    let mut adam_v = Adam::new(net.theta_v.len(), opts.lr);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    for _ in 0..opts.epochs {
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        order.shuffle(rng);
        let mut epoch_nll = 0.0;
        for chunk in order.chunks(opts.batch.max(1)) {
            let mut g = Gradients::zeros(net);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let s = &samples[i];
                let out = net.forward(&s.input)?;
                let p = masked_distribution(&out.logits, &s.legal)?;
                epoch_nll -= p[s.action].ln();
                let mut d_logits = vec![0.0; out.logits.len()];
                for &j in &s.legal {
                    d_logits[j] = scale * (p[j] - if j == s.action { 1.0 } else { 0.0 });
                }
                let d_value = scale * opts.value_coef * (out.value - s.ret);
                net.backward(&out, &d_logits, d_value, &mut g.theta, &mut g.theta_v);
            }
            if !g.is_finite() {
                return Err(PlanError::NonFiniteGradient);
            }
            adam_t.step(&mut net.theta, &g.theta);
            adam_v.step(&mut net.theta_v, &g.theta_v);
        }
        history.push(epoch_nll / samples.len() as f64);
    }
    net.hard_sync_target();
    Ok(history)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub global_step: u64,
    pub episode: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub final_mismatch: usize,
    pub wall_ms: u64,
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpisodeMetrics>, PlanError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_io)?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| PlanError::Io(csv_io(e))))
        .collect()
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub net: NetConfig,
    pub pretrain: PretrainOptions,
    pub metrics_path: Option<PathBuf>,
    /// Wall-clock budget; training stops early (incomplete) when exceeded.
    pub budget: Option<Duration>,
    /// External abort flag.
    pub stop: Option<Arc<AtomicBool>>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: PolicyValueNet,
    pub discriminator: Discriminator,
    pub metrics: Vec<EpisodeMetrics>,
    pub pretrain_nll: Vec<f64>,
    pub global_steps: u64,
    /// False when stopped by the budget or the abort flag.
    pub completed: bool,
}

struct EpisodeMsg {
    global_step: u64,
    ret: f64,
    final_mismatch: usize,
    pairs: Vec<(Configuration, Action)>,
}

struct Shared<'a> {
    problem: &'a Problem,
    starts: &'a StartDistribution,
    hyper: &'a Hyperparameters,
    net: Mutex<PolicyValueNet>,
    disc: RwLock<Arc<Discriminator>>,
    steps: AtomicU64,
    stop: AtomicBool,
    external_stop: Option<Arc<AtomicBool>>,
    deadline: Option<Instant>,
}

impl Shared<'_> {
    fn should_stop(&self) -> bool {
        if self.stop.load(Ordering::SeqCst) {
            return true;
        }
        let halt = self.external_stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst))
            || self.deadline.is_some_and(|d| Instant::now() >= d);
        if halt {
            self.stop.store(true, Ordering::SeqCst);
        }
        halt
    }

    /// Rollout → gradients → shared update → target sync. `None` once the
    /// step budget is spent.
    fn worker_iteration(&self, rng: &mut ChaCha8Rng) -> Result<Option<EpisodeMsg>, PlanError> {
        let hyper = self.hyper;
        let t = self.steps.load(Ordering::SeqCst);
        if t >= hyper.total_steps {
            return Ok(None);
        }
        let snapshot = self.net.lock().expect("shared net lock").clone();
        let disc = Arc::clone(&self.disc.read().expect("discriminator lock"));
        let lambda = hyper.lambda * (1.0 - t as f64 / hyper.total_steps as f64).max(0.0);
        let start = self.starts.sample(self.problem, rng)?;
        let mix = RewardMix {
            discriminator: Some(&disc),
            lambda,
        };
        let rollout = worker_rollout(&snapshot, self.problem, &start, hyper.t_max, rng, mix)?;
        let grads = if rollout.steps.is_empty() {
            None
        } else {
            let mut g = accumulate_gradients(&snapshot, self.problem, &rollout, &hyper.loss_weights())?;
            if let Some(max) = hyper.max_grad_norm {
                let n = g.norm();
                if n > max {
                    g.scale(max / n);
                }
            }
            Some(g)
        };
        let n = rollout.steps.len().max(1) as u64;
        let global_step = {
            let mut net = self.net.lock().expect("shared net lock");
            if let Some(g) = &grads {
                sgd(&mut net, g, hyper.lr_actor, hyper.lr_critic);
            }
            let before = self.steps.fetch_add(n, Ordering::SeqCst);
            let after = before + n;
            net.soft_sync_target(hyper.tau);
            if hyper.target_interval.is_some_and(|i| before / i != after / i) {
                net.hard_sync_target();
            }
            after
        };
        Ok(Some(EpisodeMsg {
            global_step,
            ret: rollout.env_return(),
            final_mismatch: rollout.final_mismatch,
            pairs: rollout.steps.into_iter().map(|s| (s.state, s.action)).collect(),
        }))
    }
}

/// Sole owner of the discriminator and the metrics stream.
struct Coordinator<'a> {
    problem: &'a Problem,
    hyper: &'a Hyperparameters,
    disc: Discriminator,
    expert: Vec<Vec<f64>>,
    buffer: ReplayBuffer<(Configuration, Action)>,
    pending: usize,
    rng: ChaCha8Rng,
    metrics: Vec<EpisodeMetrics>,
    writer: Option<csv::Writer<File>>,
    started: Instant,
}

impl Coordinator<'_> {
    fn handle(&mut self, msg: EpisodeMsg, slot: &RwLock<Arc<Discriminator>>) -> Result<(), PlanError> {
        self.pending += msg.pairs.len();
        for p in msg.pairs {
            self.buffer.push(p);
        }
        let mut changed = false;
        while self.pending >= self.hyper.disc_interval
            && self.buffer.len() >= self.hyper.batch.min(self.hyper.disc_interval)
        {
            self.pending -= self.hyper.disc_interval;
            let imitator: Vec<Vec<f64>> = self
                .buffer
                .sample(&mut self.rng, self.hyper.batch)
                .iter()
                .map(|(s, a)| pair_features(self.problem, s, a))
                .collect::<Result<_, _>>()?;
            let expert: Vec<Vec<f64>> = (0..self.hyper.batch)
                .map(|_| self.expert[self.rng.gen_range(0..self.expert.len())].clone())
                .collect();
            self.disc.update(&expert, &imitator, self.hyper.disc_lr)?;
            changed = true;
        }
        if changed {
            *slot.write().expect("discriminator lock") = Arc::new(self.disc.clone());
        }
        let row = EpisodeMetrics {
            global_step: msg.global_step,
            episode: self.metrics.len() as u64,
            ret: msg.ret,
            final_mismatch: msg.final_mismatch,
            wall_ms: self.started.elapsed().as_millis() as u64,
        };
        if let Some(w) = &mut self.writer {
            w.serialize(&row).map_err(csv_io)?;
        }
        self.metrics.push(row);
        Ok(())
    }
}

/// Imitation warm start followed by asynchronous actor-critic training with
/// an online discriminator. One worker runs sequentially and is fully
/// deterministic for a given seed.
pub fn train(
    problem: &Problem,
    starts: &StartDistribution,
    expert: &[Trajectory],
    hyper: &Hyperparameters,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainOutcome, PlanError> {
    hyper.validate()?;
    if expert.is_empty() {
        return Err(PlanError::EmptyDataset);
    }
    let started = Instant::now();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let dims = problem.bounds.dims();
    let mut net = PolicyValueNet::init(
        problem.channels(),
        dims,
        problem.n_actions(),
        opts.net.clone(),
        &mut master,
    );
    let disc = Discriminator::for_problem(problem, &mut master);
    let pretrain = PretrainOptions {
        deadline: opts.budget.map(|b| started + b),
        ..opts.pretrain
    };
    let pretrain_nll = pretrain_imitation(&mut net, problem, expert, &pretrain, &mut master)?;

    let expert_features: Vec<Vec<f64>> = usable_pairs(problem, expert)
        .iter()
        .map(|(s, a)| pair_features(problem, s, a))
        .collect::<Result<_, _>>()?;
    if expert_features.is_empty() {
        return Err(PlanError::EmptyDataset);
    }
    let writer = match &opts.metrics_path {
        Some(p) => Some(csv::Writer::from_path(p).map_err(csv_io)?),
        None => None,
    };
    let mut coord = Coordinator {
        problem,
        hyper,
        disc: disc.clone(),
        expert: expert_features,
        buffer: ReplayBuffer::new(hyper.buffer),
        pending: 0,
        rng: ChaCha8Rng::seed_from_u64(master.next_u64()),
        metrics: Vec::new(),
        writer,
        started,
    };
    let shared = Shared {
        problem,
        starts,
        hyper,
        net: Mutex::new(net),
        disc: RwLock::new(Arc::new(disc)),
        steps: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        external_stop: opts.stop.clone(),
        deadline: opts.budget.map(|b| started + b),
    };
    let mut worker_rngs: Vec<ChaCha8Rng> = (0..hyper.workers)
        .map(|_| ChaCha8Rng::seed_from_u64(master.next_u64()))
        .collect();

    if hyper.workers == 1 {
        let rng = &mut worker_rngs[0];
        while !shared.should_stop() {
            match shared.worker_iteration(rng)? {
                Some(msg) => coord.handle(msg, &shared.disc)?,
                None => break,
            }
        }
    } else {
        let (tx, rx) = mpsc::channel::<EpisodeMsg>();
        let errors: Mutex<Vec<PlanError>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for mut rng in worker_rngs.drain(..) {
                let tx = tx.clone();
                let shared = &shared;
                let errors = &errors;
                scope.spawn(move || {
                    while !shared.should_stop() {
                        match shared.worker_iteration(&mut rng) {
                            Ok(Some(msg)) => {
                                if tx.send(msg).is_err() {
                                    break;
                                }
                            }
                            Ok(None) => break,
                            Err(e) => {
                                errors.lock().expect("error list").push(e);
                                shared.stop.store(true, Ordering::SeqCst);
                                break;
                            }
                        }
                    }
                });
            }
            drop(tx);
            for msg in rx {
                if let Err(e) = coord.handle(msg, &shared.disc) {
                    errors.lock().expect("error list").push(e);
                    shared.stop.store(true, Ordering::SeqCst);
                }
            }
        });
        if let Some(e) = errors.into_inner().expect("error list").into_iter().next() {
            return Err(e);
        }
    }
    if let Some(w) = &mut coord.writer {
        w.flush()?;
    }
    let global_steps = shared.steps.load(Ordering::SeqCst);
    Ok(TrainOutcome {
        net: shared.net.into_inner().expect("shared net lock"),
        discriminator: coord.disc,
        metrics: coord.metrics,
        pretrain_nll,
        global_steps,
        completed: global_steps >= hyper.total_steps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalEpisode {
    pub start: Configuration,
    /// Shortest plan length from an exhaustive search.
    pub optimal: usize,
    /// Greedy plan length when the policy reached the target.
    pub steps: Option<usize>,
    pub final_mismatch: usize,
}

impl EvalEpisode {
    /// Reached the target within `factor ×` the optimal length.
    pub fn within(&self, factor: usize) -> bool {
        self.steps.is_some_and(|s| s <= factor * self.optimal.max(1))
    }
}

/// Greedy evaluation from `episodes` seeded starts.
pub fn evaluate_greedy(
    net: &PolicyValueNet,
    problem: &Problem,
    starts: &StartDistribution,
    episodes: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<EvalEpisode>, PlanError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes)
        .map(|_| {
            let start = starts.sample(problem, &mut rng)?;
            let optimal = bfs_plan(&start, &problem.target, problem.policy, None, 2_000_000)?.len();
            let (actions, final_mismatch) = greedy_rollout(net, problem, &start, max_steps)?;
            Ok(EvalEpisode {
                start,
                optimal,
                steps: (final_mismatch == 0).then_some(actions.len()),
                final_mismatch,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{generate_dataset, WalkOptions};
    use crate::lattice::{ModulePose, OrientPolicy};

    fn config(cells: &[[i32; 3]]) -> Configuration {
        let modules = cells
            .iter()
            .enumerate()
            .map(|(i, c)| ModulePose::new(i as u32, *c, "m"))
            .collect();
        Configuration::new(0, modules)
    }

    fn line3() -> Configuration {
        config(&[[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    }

    fn ell3() -> Configuration {
        config(&[[0, 0, 0], [1, 0, 0], [1, 1, 0]])
    }

    fn small_net() -> NetConfig {
        NetConfig {
            conv_filters: 2,
            hidden: vec![16],
        }
    }

    fn dataset(problem: &Problem, seed: u64) -> Vec<Trajectory> {
        let opts = WalkOptions {
            policy: OrientPolicy::default(),
            bounds: Some(problem.bounds),
        };
        generate_dataset(&problem.target, 20, 1..=3, seed, &opts).unwrap()
    }

    fn quick_hyper(workers: usize) -> Hyperparameters {
        Hyperparameters {
            workers,
            total_steps: 300,
            t_max: 6,
            batch: 8,
            disc_interval: 8,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            ..Hyperparameters::default()
        }
    }

    #[test]
    fn defaults_validate_and_bad_values_reject() {
        Hyperparameters::default().validate().unwrap();
        Hyperparameters::desk().validate().unwrap();
        let bad = [
            Hyperparameters {
                workers: 0,
                ..Default::default()
            },
            Hyperparameters {
                gamma: 1.5,
                ..Default::default()
            },
            Hyperparameters {
                tau: 0.0,
                ..Default::default()
            },
            Hyperparameters {
                lr_actor: -1.0,
                ..Default::default()
            },
            Hyperparameters {
                lambda: 2.0,
                ..Default::default()
            },
            Hyperparameters {
                target_interval: Some(0),
                ..Default::default()
            },
        ];
        for h in bad {
            assert!(
                matches!(h.validate(), Err(PlanError::InvalidHyperparameter(_))),
                "{h:?}"
            );
        }
    }

    #[test]
    fn concurrent_updates_sum_exactly() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let net = PolicyValueNet::zeros(
            problem.channels(),
            problem.bounds.dims(),
            problem.n_actions(),
            small_net(),
        );
        let mut g = Gradients::zeros(&net);
        g.theta.iter_mut().for_each(|x| *x = -1.0);
        g.theta_v.iter_mut().for_each(|x| *x = 2.0);
        let shared = Mutex::new(net);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..25 {
                        apply_async_update(&shared, &g, 0.5, 0.25);
                    }
                });
            }
        });
        let net = shared.into_inner().unwrap();
        assert!(net.theta.iter().all(|&x| x == 100.0));
        assert!(net.theta_v.iter().all(|&x| x == -100.0));
    }

    #[test]
    fn sync_target_soft_and_hard() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let mut net = PolicyValueNet::zeros(
            problem.channels(),
            problem.bounds.dims(),
            problem.n_actions(),
            small_net(),
        );
        net.theta.iter_mut().for_each(|x| *x = 1.0);
        sync_target(&mut net, 0.25, false);
        assert!(net.theta_target[..net.theta.len()]
            .iter()
            .all(|&x| (x - 0.25).abs() < 1e-15));
        sync_target(&mut net, 0.25, true);
        assert!(net.theta_target[..net.theta.len()].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn start_distribution_stays_legal() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let dist = StartDistribution {
            base: line3(),
            max_perturb: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let s = dist.sample(&problem, &mut rng).unwrap();
            assert!(problem.encode(&s).is_ok());
        }
        assert_eq!(
            StartDistribution::fixed(line3()).sample(&problem, &mut rng).unwrap(),
            line3()
        );
    }

    #[test]
    fn pretraining_lowers_expert_nll() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let data = dataset(&problem, 7);
        let pairs = usable_pairs(&problem, &data);
        assert_eq!(pairs.len(), crate::expert::expert_pairs(&data).len());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = PolicyValueNet::init(
            problem.channels(),
            problem.bounds.dims(),
            problem.n_actions(),
            small_net(),
            &mut rng,
        );
        let before = imitation_nll(&net, &problem, &pairs).unwrap();
        let opts = PretrainOptions {
            epochs: 30,
            lr: 3e-3,
            batch: 16,
            ..Default::default()
        };
        let hist = pretrain_imitation(&mut net, &problem, &data, &opts, &mut rng).unwrap();
        let after = imitation_nll(&net, &problem, &pairs).unwrap();
        assert_eq!(hist.len(), 30);
        assert!(after < 0.7 * before, "{before} -> {after}");
        assert_eq!(net.theta_target[..net.theta.len()], net.theta[..]);
    }

    #[test]
    fn single_worker_is_deterministic() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let data = dataset(&problem, 3);
        let starts = StartDistribution {
            base: line3(),
            max_perturb: 1,
        };
        let opts = TrainOptions {
            net: small_net(),
            pretrain: PretrainOptions {
                epochs: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = train(&problem, &starts, &data, &quick_hyper(1), 11, &opts).unwrap();
        let b = train(&problem, &starts, &data, &quick_hyper(1), 11, &opts).unwrap();
        assert!(a.completed && a.global_steps >= 300);
        assert_eq!(a.net.theta, b.net.theta);
        assert_eq!(a.discriminator.omega, b.discriminator.omega);
        let strip = |m: &[EpisodeMetrics]| {
            m.iter()
                .map(|e| (e.global_step, e.ret, e.final_mismatch))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.metrics), strip(&b.metrics));
        let c = train(&problem, &starts, &data, &quick_hyper(1), 12, &opts).unwrap();
        assert_ne!(a.net.theta, c.net.theta);
    }

    #[test]
    fn parallel_workers_write_metrics() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let data = dataset(&problem, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let opts = TrainOptions {
            net: small_net(),
            metrics_path: Some(path.clone()),
            pretrain: PretrainOptions {
                epochs: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train(
            &problem,
            &StartDistribution::fixed(line3()),
            &data,
            &quick_hyper(4),
            5,
            &opts,
        )
        .unwrap();
        assert!(out.completed);
        let read = read_metrics(&path).unwrap();
        assert_eq!(read, out.metrics);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("global_step,episode,return,final_mismatch,wall_ms"));
        assert!(out.net.theta.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn stop_flag_halts_training() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let data = dataset(&problem, 4);
        let stop = Arc::new(AtomicBool::new(true));
        let opts = TrainOptions {
            net: small_net(),
            stop: Some(stop),
            pretrain: PretrainOptions {
                epochs: 0,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train(
            &problem,
            &StartDistribution::fixed(line3()),
            &data,
            &quick_hyper(2),
            5,
            &opts,
        )
        .unwrap();
        assert!(!out.completed);
        assert_eq!(out.global_steps, 0);
    }

    #[test]
    fn empty_expert_set_is_rejected() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let r = train(
            &problem,
            &StartDistribution::fixed(line3()),
            &[],
            &quick_hyper(1),
            0,
            &TrainOptions::default(),
        );
        assert!(matches!(r, Err(PlanError::EmptyDataset)));
    }

    #[test]
    fn greedy_evaluation_reports_optimum() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = PolicyValueNet::init(
            problem.channels(),
            problem.bounds.dims(),
            problem.n_actions(),
            small_net(),
            &mut rng,
        );
        let eps = evaluate_greedy(&net, &problem, &StartDistribution::fixed(line3()), 3, 0, 6).unwrap();
        assert_eq!(eps.len(), 3);
        for e in eps {
            assert_eq!(e.optimal, 1);
            assert_eq!(e.steps.is_some(), e.final_mismatch == 0);
        }
    }

    fn one_pair(problem: &Problem) -> Vec<Trajectory> {
        let legal = problem.legal(&line3());
        let action = legal[legal.len() / 2].1;
        vec![Trajectory::replay(line3(), &[action]).unwrap()]
    }

    #[test]
    fn single_pair_is_overfit() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let data = one_pair(&problem);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = PolicyValueNet::init(
            problem.channels(),
            problem.bounds.dims(),
            problem.n_actions(),
            small_net(),
            &mut rng,
        );
        let opts = PretrainOptions {
            epochs: 60,
            lr: 1e-2,
            ..Default::default()
        };
        pretrain_imitation(&mut net, &problem, &data, &opts, &mut rng).unwrap();
        let t = &data[0].transitions[0];
        let out = net.forward(&problem.encode(&t.state).unwrap().data).unwrap();
        let legal: Vec<usize> = problem.legal(&t.state).into_iter().map(|(i, _)| i).collect();
        assert_eq!(
            crate::planner::greedy_index(&out.logits, &legal).unwrap(),
            problem.action_index(&t.action).unwrap()
        );
    }

    #[test]
    fn zero_epochs_leave_net_unchanged() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = PolicyValueNet::init(
            problem.channels(),
            problem.bounds.dims(),
            problem.n_actions(),
            small_net(),
            &mut rng,
        );
        let before = net.clone();
        let opts = PretrainOptions {
            epochs: 0,
            ..Default::default()
        };
        assert!(
            pretrain_imitation(&mut net, &problem, &dataset(&problem, 1), &opts, &mut rng)
                .unwrap()
                .is_empty()
        );
        assert_eq!(net.theta, before.theta);
        assert_eq!(net.theta_target, before.theta_target);
    }

    #[test]
    fn nll_decreases_monotonically_on_fixed_batch() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let data = dataset(&problem, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = PolicyValueNet::init(
            problem.channels(),
            problem.bounds.dims(),
            problem.n_actions(),
            small_net(),
            &mut rng,
        );
        // One batch per epoch, so each entry is the loss before that epoch's step.
        let opts = PretrainOptions {
            epochs: 25,
            lr: 1e-4,
            batch: 10_000,
            ..Default::default()
        };
        let hist = pretrain_imitation(&mut net, &problem, &data, &opts, &mut rng).unwrap();
        assert!(hist.windows(2).all(|w| w[1] < w[0]), "{hist:?}");
    }

    #[test]
    fn sgd_is_linear() {
        let problem = Problem::new(&ell3(), &[&line3()], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = PolicyValueNet::init(
            problem.channels(),
            problem.bounds.dims(),
            problem.n_actions(),
            small_net(),
            &mut rng,
        );
        let zero = Gradients::zeros(&net);
        let shared = Mutex::new(net.clone());
        apply_async_update(&shared, &zero, 0.1, 0.1);
        assert_eq!(shared.lock().unwrap().theta, net.theta);
        let mut g1 = Gradients::zeros(&net);
        let mut g2 = Gradients::zeros(&net);
        for (i, x) in g1.theta.iter_mut().chain(&mut g1.theta_v).enumerate() {
            *x = (i % 7) as f64 * 0.125;
        }
        for (i, x) in g2.theta.iter_mut().chain(&mut g2.theta_v).enumerate() {
            *x = (i % 5) as f64 * -0.25;
        }
        let mut sum = g1.clone();
        sum.theta.iter_mut().zip(&g2.theta).for_each(|(a, b)| *a += b);
        sum.theta_v.iter_mut().zip(&g2.theta_v).for_each(|(a, b)| *a += b);
        let seq = Mutex::new(net.clone());
        apply_async_update(&seq, &g1, 0.5, 0.25);
        apply_async_update(&seq, &g2, 0.5, 0.25);
        let once = Mutex::new(net);
        apply_async_update(&once, &sum, 0.5, 0.25);
        let (a, b) = (seq.into_inner().unwrap(), once.into_inner().unwrap());
        assert!(a.theta.iter().zip(&b.theta).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(a.theta_v.iter().zip(&b.theta_v).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}
