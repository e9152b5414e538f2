//! Episode rollouts and the n-step advantage actor-critic gradient.

use rand::Rng;

use super::encoding::Problem;
use super::net::PolicyValueNet;
use super::policy::{masked_distribution, sample_index};
use super::PlanError;
use crate::gail::{pair_features, Discriminator};
use crate::lattice::{apply_action, mismatch_count, Action, Configuration};

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Configuration,
    pub action: Action,
    pub index: usize,
    pub legal: Vec<usize>,
    /// Blended training reward.
    pub reward: f64,
    /// `−mismatch(s′, target)`.
    pub env_reward: f64,
    pub next_state: Configuration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub steps: Vec<Step>,
    /// Goal reached; no bootstrap past the last step.
    pub terminal: bool,
    pub final_state: Configuration,
    pub final_mismatch: usize,
}

impl Rollout {
    pub fn env_return(&self) -> f64 {
        self.steps.iter().map(|s| s.env_reward).sum()
    }
}

/// Reward blending: `λ·imitation + (1 − λ)·environment`.
#[derive(Clone, Copy, Debug)]
pub struct RewardMix<'a> {
    pub discriminator: Option<&'a Discriminator>,
    pub lambda: f64,
}

impl RewardMix<'_> {
    pub const ENV_ONLY: RewardMix<'static> = RewardMix {
        discriminator: None,
        lambda: 0.0,
    };
}

/// Samples up to `t_max` steps from the masked policy. Stops early at the
/// goal or when no legal action remains.
pub fn worker_rollout<R: Rng + ?Sized>(
    net: &PolicyValueNet,
    problem: &Problem,
    start: &Configuration,
    t_max: usize,
    rng: &mut R,
    mix: RewardMix<'_>,
) -> Result<Rollout, PlanError> {
    let mut state = start.clone();
    let mut mismatch = mismatch_count(&state, &problem.target)?;
    let mut steps = Vec::new();
    while mismatch > 0 && steps.len() < t_max {
        let legal = problem.legal(&state);
        if legal.is_empty() {
            break;
        }
        let indices: Vec<usize> = legal.iter().map(|(i, _)| *i).collect();
        let enc = problem.encode(&state)?;
        let out = net.forward(&enc.data)?;
        let probs = masked_distribution(&out.logits, &indices)?;
        let index = sample_index(&probs, &indices, rng);
        let action = legal.iter().find(|(i, _)| *i == index).expect("sampled legal").1;
        let next = apply_action(&state, &action)?;
        mismatch = mismatch_count(&next, &problem.target)?;
        let env_reward = -(mismatch as f64);
        let reward = match mix.discriminator {
            Some(d) if mix.lambda > 0.0 => {
                let r_imit = d.reward(&pair_features(problem, &state, &action)?)?;
                mix.lambda * r_imit + (1.0 - mix.lambda) * env_reward
            }
            _ => env_reward,
        };
        steps.push(Step {
            state: state.clone(),
            action,
            index,
            legal: indices,
            reward,
            env_reward,
            next_state: next.clone(),
        });
        state = next;
    }
    Ok(Rollout {
        terminal: mismatch == 0,
        steps,
        final_state: state,
        final_mismatch: mismatch,
    })
}

/// Loss weights for the actor-critic objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub gamma: f64,
    pub entropy: f64,
    pub value: f64,
    /// Bootstrap the truncated tail from the target parameters.
    pub bootstrap_from_target: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gamma: 0.99,
            entropy: 0.01,
            value: 0.5,
            bootstrap_from_target: true,
        }
    }
}

/// Per-step n-step return `R_i` and advantage `R_i − V(s_i)`.
pub fn rollout_targets(
    net: &PolicyValueNet,
    problem: &Problem,
    rollout: &Rollout,
    w: &LossWeights,
) -> Result<Vec<(f64, f64)>, PlanError> {
    let mut r = if rollout.terminal || rollout.steps.is_empty() {
        0.0
    } else {
        let enc = problem.encode(&rollout.final_state)?;
        if w.bootstrap_from_target {
            net.target_value(&enc.data)?
        } else {
            net.forward(&enc.data)?.value
        }
    };
    let mut out = vec![(0.0, 0.0); rollout.steps.len()];
    for (i, step) in rollout.steps.iter().enumerate().rev() {
        r = step.reward + w.gamma * r;
        let v = net.forward(&problem.encode(&step.state)?.data)?.value;
        out[i] = (r, r - v);
    }
    Ok(out)
}

/// `Σ_i [−A_i log π(a_i|s_i) − β H(π(·|s_i)) + c·½(R_i − V(s_i))²]` with the
/// targets held fixed. The gradient of this surrogate is what
/// [`accumulate_gradients`] returns.
pub fn surrogate_objective(
    net: &PolicyValueNet,
    theta: &[f64],
    theta_v: &[f64],
    problem: &Problem,
    rollout: &Rollout,
    targets: &[(f64, f64)],
    w: &LossWeights,
) -> Result<f64, PlanError> {
    let mut total = 0.0;
    for (step, &(ret, adv)) in rollout.steps.iter().zip(targets) {
        let out = net.forward_with(theta, theta_v, &problem.encode(&step.state)?.data)?;
        let p = masked_distribution(&out.logits, &step.legal)?;
        let entropy: f64 = step
            .legal
            .iter()
            .map(|&j| p[j])
            .filter(|&q| q > 0.0)
            .map(|q| -q * q.ln())
            .sum();
        total += -adv * p[step.index].ln() - w.entropy * entropy + w.value * 0.5 * (ret - out.value).powi(2);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub theta: Vec<f64>,
    pub theta_v: Vec<f64>,
}

impl Gradients {
    pub fn zeros(net: &PolicyValueNet) -> Gradients {
        Gradients {
            theta: vec![0.0; net.theta.len()],
            theta_v: vec![0.0; net.theta_v.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.theta
            .iter()
            .chain(&self.theta_v)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.theta.iter_mut().chain(&mut self.theta_v).for_each(|g| *g *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.theta_v).all(|g| g.is_finite())
    }
}

/// Accumulates `∂/∂θ` and `∂/∂θ_v` of the surrogate over the rollout.
pub fn accumulate_gradients(
    net: &PolicyValueNet,
    problem: &Problem,
    rollout: &Rollout,
    w: &LossWeights,
) -> Result<Gradients, PlanError> {
    let targets = rollout_targets(net, problem, rollout, w)?;
    let mut g = Gradients::zeros(net);
    for (step, &(ret, adv)) in rollout.steps.iter().zip(&targets) {
        let out = net.forward(&problem.encode(&step.state)?.data)?;
        let p = masked_distribution(&out.logits, &step.legal)?;
        let entropy: f64 = step
            .legal
            .iter()
            .map(|&j| p[j])
            .filter(|&q| q > 0.0)
            .map(|q| -q * q.ln())
            .sum();
        let mut d_logits = vec![0.0; out.logits.len()];
        for &j in &step.legal {
            let pj = p[j];
            let onehot = if j == step.index { 1.0 } else { 0.0 };
            let ent = if pj > 0.0 {
                w.entropy * pj * (pj.ln() + entropy)
            } else {
                0.0
            };
            d_logits[j] = adv * (pj - onehot) + ent;
        }
        let d_value = w.value * (out.value - ret);
        net.backward(&out, &d_logits, d_value, &mut g.theta, &mut g.theta_v);
    }
    if !g.is_finite() {
        return Err(PlanError::NonFiniteGradient);
    }
    Ok(g)
}
