//! Sequence planner: state encoding, masked policy/value network, rollouts
//! and the asynchronous imitation + actor-critic training loop, plus greedy
//! planning with a search fallback.

pub mod encoding;
mod net;
mod policy;
mod rollout;
mod search;
mod train;

pub use encoding::{encode_state, EncodeError, Problem, StateEncoding};
pub use net::{DimensionMismatch, NetConfig, NetOutput, PolicyValueNet};
pub use policy::{greedy_index, masked_distribution, sample_index, MaskError};
pub use rollout::{
    accumulate_gradients, rollout_targets, surrogate_objective, worker_rollout, Gradients, LossWeights, RewardMix,
    Rollout, Step,
};
pub use search::{astar_plan, bfs_plan, SearchLimits};
pub use train::{
    apply_async_update, evaluate_greedy, imitation_nll, pretrain_imitation, read_metrics, sync_target, train,
    usable_pairs, EpisodeMetrics, EvalEpisode, Hyperparameters, PretrainOptions, StartDistribution, TrainOptions,
    TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::gail::GailError;
use crate::lattice::{apply_action, mismatch_count, Action, Configuration, LatticeError};

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
    #[error(transparent)]
    Gail(#[from] GailError),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("no plan found (best mismatch {best_mismatch})")]
    NoPlan { best_mismatch: usize },
    #[error("search budget exceeded after {nodes} nodes")]
    BudgetExceeded { nodes: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(&'static str),
    #[error("expert dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a plan came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    Policy,
    Search,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub actions: Vec<Action>,
    pub source: PlanSource,
    /// Mismatch the greedy policy stopped at, if it ran and failed.
    pub policy_mismatch: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanOptions {
    pub max_steps: usize,
    pub fallback: bool,
    /// Instances up to this size use optimal search; larger ones weighted.
    pub exact_search_modules: usize,
    pub search: SearchLimits,
    pub large_weight: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            max_steps: crate::expert::DEFAULT_MAX_STEPS,
            fallback: true,
            exact_search_modules: 6,
            search: SearchLimits::default(),
            large_weight: 2.0,
        }
    }
}

/// Greedy rollout of the masked policy. Returns the actions and the final
/// mismatch; stops on a revisited state.
pub fn greedy_rollout(
    net: &PolicyValueNet,
    problem: &Problem,
    start: &Configuration,
    max_steps: usize,
) -> Result<(Vec<Action>, usize), PlanError> {
    let mut state = start.clone();
    let mut seen = std::collections::HashSet::from([state.shape_key()]);
    let mut actions = Vec::new();
    let mut mismatch = mismatch_count(&state, &problem.target)?;
    while mismatch > 0 && actions.len() < max_steps {
        let legal = problem.legal(&state);
        let indices: Vec<usize> = legal.iter().map(|(i, _)| *i).collect();
        let out = net.forward(&problem.encode(&state)?.data)?;
        let Some(best) = greedy_index(&out.logits, &indices) else {
            break;
        };
        let action = legal.iter().find(|(i, _)| *i == best).expect("legal index").1;
        state = apply_action(&state, &action)?;
        actions.push(action);
        mismatch = mismatch_count(&state, &problem.target)?;
        if !seen.insert(state.shape_key()) {
            break;
        }
    }
    Ok((actions, mismatch))
}

/// Greedy policy plan, falling back to configuration search when the policy
/// fails (or no network is given) and `opts.fallback` is set.
pub fn plan(
    net: Option<&PolicyValueNet>,
    problem: &Problem,
    start: &Configuration,
    opts: &PlanOptions,
) -> Result<Plan, PlanError> {
    let mut policy_mismatch = None;
    if let Some(net) = net {
        let (actions, mismatch) = greedy_rollout(net, problem, start, opts.max_steps)?;
        if mismatch == 0 {
            return Ok(Plan {
                actions,
                source: PlanSource::Policy,
                policy_mismatch: None,
            });
        }
        policy_mismatch = Some(mismatch);
    }
    if mismatch_count(start, &problem.target)? == 0 {
        return Ok(Plan {
            actions: vec![],
            source: PlanSource::Policy,
            policy_mismatch: None,
        });
    }
    if !opts.fallback {
        return Err(PlanError::NoPlan {
            best_mismatch: policy_mismatch.unwrap_or(mismatch_count(start, &problem.target)?),
        });
    }
    let mut limits = opts.search;
    limits.policy = problem.policy;
    if start.len() > opts.exact_search_modules {
        limits.weight = opts.large_weight;
    }
    let actions = astar_plan(start, &problem.target, None, &limits)?;
    Ok(Plan {
        actions,
        source: PlanSource::Search,
        policy_mismatch,
    })
}
