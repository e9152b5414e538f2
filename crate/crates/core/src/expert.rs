//! Expert demonstrations: random walks away from the target, reversed so
//! that each trajectory ends at the target configuration.

use std::io::{BufRead, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{apply_action, legal_actions, Action, Bounds, Configuration, LatticeError, OrientPolicy};

/// Default maximum walk length ("footsteps").
pub const DEFAULT_MAX_STEPS: usize = 24;

#[derive(Debug, thiserror::Error)]
pub enum ExpertError {
    #[error("walk length must be at least 1")]
    ZeroSteps,
    #[error("walk-length range {0:?} is empty or starts at zero")]
    BadRange(RangeInclusive<usize>),
    #[error("dataset must contain at least one trajectory")]
    EmptyDataset,
    #[error("no legal action at step {step}")]
    DeadEnd { step: usize },
    #[error("transition {step} cannot be undone by a feasible action")]
    Irreversible { step: usize },
    #[error("trajectory does not chain at transition {step}")]
    Broken { step: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// One step `state --action--> next_state`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub state: Configuration,
    pub action: Action,
    pub next_state: Configuration,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub start: Configuration,
    pub goal: Configuration,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    /// Replays `actions` from `start`, failing on the first infeasible one.
    pub fn replay(start: Configuration, actions: &[Action]) -> Result<Trajectory, LatticeError> {
        let mut transitions = Vec::with_capacity(actions.len());
        let mut state = start.clone();
        for action in actions {
            let next_state = apply_action(&state, action)?;
            transitions.push(Transition {
                state: std::mem::replace(&mut state, next_state.clone()),
                action: *action,
                next_state,
            });
        }
        Ok(Trajectory {
            start,
            goal: state,
            transitions,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.transitions.iter().map(|t| t.action).collect()
    }

    /// Start state followed by every successor state.
    pub fn states(&self) -> Vec<&Configuration> {
        std::iter::once(&self.start)
            .chain(self.transitions.iter().map(|t| &t.next_state))
            .collect()
    }

    /// Checks the chaining invariants and that every action re-applies.
    pub fn check(&self) -> Result<(), ExpertError> {
        let mut current = &self.start;
        for (step, t) in self.transitions.iter().enumerate() {
            if &t.state != current || apply_action(&t.state, &t.action)? != t.next_state {
                return Err(ExpertError::Broken { step });
            }
            current = &t.next_state;
        }
        if current != &self.goal {
            return Err(ExpertError::Broken {
                step: self.transitions.len(),
            });
        }
        Ok(())
    }

    pub fn to_record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            format_version: crate::FORMAT_VERSION,
            start: self.start.clone(),
            goal: self.goal.clone(),
            actions: self.actions(),
        }
    }

    pub fn from_record(record: TrajectoryRecord) -> Result<Trajectory, ExpertError> {
        let traj = Trajectory::replay(record.start, &record.actions)?;
        if traj.goal != record.goal {
            return Err(ExpertError::Broken { step: traj.len() });
        }
        Ok(traj)
    }
}

/// One line of a dataset file; intermediate states are rebuilt by replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    #[serde(default = "crate::format_version")]
    pub format_version: u32,
    pub start: Configuration,
    pub goal: Configuration,
    pub actions: Vec<Action>,
}

/// Knobs shared by walk generation and dataset building.
#[derive(Clone, Copy, Debug, Default)]
pub struct WalkOptions {
    pub policy: OrientPolicy,
    /// Keep every visited state inside this anchor-relative box.
    pub bounds: Option<Bounds>,
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A walk of exactly `steps` uniformly drawn feasible actions from `target`.
pub fn random_walk(target: &Configuration, steps: usize, seed: u64) -> Result<Trajectory, ExpertError> {
    random_walk_with(target, steps, &mut rng_from_seed(seed), &WalkOptions::default())
}

pub fn random_walk_with<R: Rng + ?Sized>(
    target: &Configuration,
    steps: usize,
    rng: &mut R,
    opts: &WalkOptions,
) -> Result<Trajectory, ExpertError> {
    if steps == 0 {
        return Err(ExpertError::ZeroSteps);
    }
    let mut actions = Vec::with_capacity(steps);
    let mut state = target.clone();
    for step in 0..steps {
        let legal = legal_actions(&state, opts.policy, opts.bounds.as_ref());
        let action = *legal.choose(rng).ok_or(ExpertError::DeadEnd { step })?;
        state = apply_action(&state, &action)?;
        actions.push(action);
    }
    Ok(Trajectory::replay(target.clone(), &actions)?)
}

/// The trajectory that undoes `traj`, step by step, under the default policy.
pub fn reverse_trajectory(traj: &Trajectory) -> Result<Trajectory, ExpertError> {
    reverse_trajectory_with(traj, OrientPolicy::PreserveWorld)
}

/// Reverses `traj`. Output transition `t` undoes input transition `n - 1 - t`
/// using the first enumerated action (by mover, anchor, face) that restores
/// the earlier state exactly.
pub fn reverse_trajectory_with(traj: &Trajectory, policy: OrientPolicy) -> Result<Trajectory, ExpertError> {
    let n = traj.transitions.len();
    let mut actions = Vec::with_capacity(n);
    for (k, t) in traj.transitions.iter().rev().enumerate() {
        let step = n - 1 - k;
        let inverse = crate::lattice::enumerate_actions(&t.next_state, policy)
            .into_iter()
            .filter(|a| a.mover == t.action.mover)
            .find(|a| apply_action(&t.next_state, a).is_ok_and(|s| s == t.state))
            .ok_or(ExpertError::Irreversible { step })?;
        actions.push(inverse);
    }
    let out = Trajectory::replay(traj.goal.clone(), &actions)?;
    debug_assert_eq!(out.goal, traj.start);
    Ok(out)
}

/// `count` reversed walks from `target`, lengths uniform in `steps`.
///
/// Each trajectory draws its own seed from a master generator so the dataset
/// is a pure function of `(target, count, steps, seed, opts)`.
pub fn generate_dataset(
    target: &Configuration,
    count: usize,
    steps: RangeInclusive<usize>,
    seed: u64,
    opts: &WalkOptions,
) -> Result<Vec<Trajectory>, ExpertError> {
    if count == 0 {
        return Err(ExpertError::EmptyDataset);
    }
    if steps.is_empty() || *steps.start() == 0 {
        return Err(ExpertError::BadRange(steps));
    }
    let mut master = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let traj_seed = master.next_u64();
            let mut rng = rng_from_seed(traj_seed);
            let f = rng.gen_range(steps.clone());
            let walk = random_walk_with(target, f, &mut rng, opts)?;
            reverse_trajectory_with(&walk, opts.policy)
        })
        .collect()
}

/// Every (state, action) pair of the dataset, in order.
pub fn expert_pairs(dataset: &[Trajectory]) -> Vec<(Configuration, Action)> {
    dataset
        .iter()
        .flat_map(|t| t.transitions.iter().map(|tr| (tr.state.clone(), tr.action)))
        .collect()
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &[Trajectory]) -> Result<(), crate::Error> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for traj in dataset {
        serde_json::to_writer(&mut out, &traj.to_record())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, crate::Error> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord = serde_json::from_str(&line)?;
        out.push(Trajectory::from_record(record)?);
    }
    Ok(out)
}
