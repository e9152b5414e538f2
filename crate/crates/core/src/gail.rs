//! Adversarial imitation: a discriminator over encoded (state, action)
//! pairs and the imitation reward derived from it.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::lattice::{Action, Configuration};
use crate::nn::{sigmoid, softplus, Sequential};
use crate::planner::encoding::{EncodeError, Problem};

/// Upper clamp on the imitation reward.
pub const REWARD_MAX: f64 = 10.0;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
/// Pair-buffer capacity.
pub const BUFFER_CAPACITY: usize = 480_000;
pub const DEFAULT_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GailError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("action {0} has no index in this problem")]
    UnindexedAction(Action),
    #[error("feature length {got} does not match discriminator input {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite discriminator gradient")]
    NonFiniteGradient,
}

/// Feed-forward tanh network with a single logit; `D = σ(logit)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    net: Sequential,
    hidden: Vec<usize>,
    pub omega: Vec<f64>,
}

impl Discriminator {
    /// Glorot weights scaled down so the initial output is near 0.5.
    pub fn new<R: Rng + ?Sized>(input_len: usize, hidden: &[usize], rng: &mut R) -> Discriminator {
        let net = Sequential::mlp(input_len, hidden, 1);
        let omega = net.init_params(rng, 0.1);
        Discriminator {
            net,
            hidden: hidden.to_vec(),
            omega,
        }
    }

    pub fn for_problem<R: Rng + ?Sized>(problem: &Problem, rng: &mut R) -> Discriminator {
        Discriminator::new(problem.input_len() + problem.n_actions(), &DEFAULT_HIDDEN, rng)
    }

    pub fn input_len(&self) -> usize {
        self.net.input_len()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// `[input, hidden..., 1]`.
    pub fn layer_sizes(&self) -> Vec<u32> {
        let mut s = vec![self.input_len() as u32];
        s.extend(self.hidden.iter().map(|&h| h as u32));
        s.push(1);
        s
    }

    pub fn from_layer_sizes(sizes: &[u32], omega: Vec<f64>) -> Option<Discriminator> {
        let (&input, rest) = sizes.split_first()?;
        let (&out, hidden) = rest.split_last()?;
        if out != 1 {
            return None;
        }
        let hidden: Vec<usize> = hidden.iter().map(|&h| h as usize).collect();
        let net = Sequential::mlp(input as usize, &hidden, 1);
        (net.param_count() == omega.len()).then_some(Discriminator { net, hidden, omega })
    }

    fn check(&self, x: &[f64]) -> Result<(), GailError> {
        if x.len() == self.input_len() {
            Ok(())
        } else {
            Err(GailError::Dimension {
                expected: self.input_len(),
                got: x.len(),
            })
        }
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64, GailError> {
        self.check(x)?;
        Ok(self.net.forward(&self.omega, x).output()[0])
    }

    /// `D(x)`, kept strictly inside (0, 1).
    pub fn prob(&self, x: &[f64]) -> Result<f64, GailError> {
        Ok(sigmoid(self.logit(x)?).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// `−log(1 − D)`, clamped at [`REWARD_MAX`].
    pub fn reward(&self, x: &[f64]) -> Result<f64, GailError> {
        Ok(softplus(self.logit(x)?).min(REWARD_MAX))
    }

    /// `−mean_E log D − mean_I log(1 − D)`, computed from logits.
    pub fn loss(&self, expert: &[Vec<f64>], imitator: &[Vec<f64>]) -> Result<f64, GailError> {
        Ok(self.loss_and_grad_inner(expert, imitator, false)?.0)
    }

    pub fn loss_and_grad(&self, expert: &[Vec<f64>], imitator: &[Vec<f64>]) -> Result<(f64, Vec<f64>), GailError> {
        self.loss_and_grad_inner(expert, imitator, true)
    }

    fn loss_and_grad_inner(
        &self,
        expert: &[Vec<f64>],
        imitator: &[Vec<f64>],
        want_grad: bool,
    ) -> Result<(f64, Vec<f64>), GailError> {
        if expert.is_empty() || imitator.is_empty() {
            return Err(GailError::EmptyBatch);
        }
        let mut grad = if want_grad {
            vec![0.0; self.param_count()]
        } else {
            Vec::new()
        };
        let mut loss = 0.0;
        // −log σ(z) = softplus(−z); −log(1 − σ(z)) = softplus(z).
        for (batch, sign) in [(expert, -1.0), (imitator, 1.0)] {
            let n = batch.len() as f64;
            for x in batch {
                self.check(x)?;
                let acts = self.net.forward(&self.omega, x);
                let z = acts.output()[0];
                loss += softplus(sign * z) / n;
                if want_grad {
                    let dz = sign * sigmoid(sign * z) / n;
                    self.net.backward_params(&self.omega, &acts, &[dz], &mut grad);
                }
            }
        }
        Ok((loss, grad))
    }

    /// One gradient-descent step; returns the loss before the step.
    pub fn update(&mut self, expert: &[Vec<f64>], imitator: &[Vec<f64>], lr: f64) -> Result<f64, GailError> {
        let (loss, grad) = self.loss_and_grad(expert, imitator)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(GailError::NonFiniteGradient);
        }
        for (w, g) in self.omega.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
        Ok(loss)
    }
}

/// Encoded state followed by a one-hot action index.
pub fn pair_features(problem: &Problem, s: &Configuration, a: &Action) -> Result<Vec<f64>, GailError> {
    let idx = problem.action_index(a).ok_or(GailError::UnindexedAction(*a))?;
    let mut x = problem.encode(s)?.data;
    let base = x.len();
    x.resize(base + problem.n_actions(), 0.0);
    x[base + idx] = 1.0;
    Ok(x)
}

fn featurize(problem: &Problem, batch: &[(Configuration, Action)]) -> Result<Vec<Vec<f64>>, GailError> {
    batch.iter().map(|(s, a)| pair_features(problem, s, a)).collect()
}

pub fn discriminator_forward(
    d: &Discriminator,
    problem: &Problem,
    s: &Configuration,
    a: &Action,
) -> Result<f64, GailError> {
    d.prob(&pair_features(problem, s, a)?)
}

pub fn discriminator_loss(
    d: &Discriminator,
    problem: &Problem,
    expert: &[(Configuration, Action)],
    imitator: &[(Configuration, Action)],
) -> Result<f64, GailError> {
    d.loss(&featurize(problem, expert)?, &featurize(problem, imitator)?)
}

pub fn update_discriminator(
    d: &Discriminator,
    problem: &Problem,
    expert: &[(Configuration, Action)],
    imitator: &[(Configuration, Action)],
    lr: f64,
) -> Result<Discriminator, GailError> {
    let mut next = d.clone();
    next.update(&featurize(problem, expert)?, &featurize(problem, imitator)?, lr)?;
    Ok(next)
}

pub fn imitation_reward(d: &Discriminator, problem: &Problem, s: &Configuration, a: &Action) -> Result<f64, GailError> {
    d.reward(&pair_features(problem, s, a)?)
}

/// FIFO buffer of imitator pairs; the oldest entries drop out at capacity.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> ReplayBuffer<T> {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: VecDeque::new(),
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Up to `n` distinct entries drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<T> {
        let n = n.min(self.items.len());
        sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect()
    }
}
