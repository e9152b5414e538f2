use std::fmt;

use serde::{Deserialize, Serialize};

use super::{graph, Configuration, Face, LatticeError, ModuleId, Orientation, OrientationError};

/// Detach `mover` and re-attach it beside `face` of `anchor`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub mover: ModuleId,
    pub anchor: ModuleId,
    pub face: Face,
    pub new_orient: Orientation,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} -> {}:{})", self.mover, self.anchor, self.face)
    }
}

/// How the mover is oriented after placement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientPolicy {
    /// The mover keeps its world-frame orientation. Every action is reversible.
    #[default]
    PreserveWorld,
    /// The mover adopts the anchor module's orientation. Not reversible in
    /// general; kept for experiments.
    AlignWithAnchor,
}

impl OrientPolicy {
    pub fn orient_for(self, config: &Configuration, mover: ModuleId, anchor: ModuleId) -> Option<Orientation> {
        match self {
            OrientPolicy::PreserveWorld => config.module(mover).map(|m| m.orient),
            OrientPolicy::AlignWithAnchor => config.module(anchor).map(|m| m.orient),
        }
    }
}

/// The feasibility rule an action broke.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum InfeasibleRule {
    #[error("module {0} does not exist")]
    UnknownModule(ModuleId),
    #[error("the reference module cannot move")]
    MoverIsReference,
    #[error("mover and anchor are the same module")]
    SelfAnchor,
    #[error("mover is an articulation module")]
    Articulation,
    #[error("destination cell {0:?} is occupied by module {1}")]
    DestinationOccupied(super::Cell, ModuleId),
    #[error("action leaves the configuration unchanged")]
    NoChange,
    #[error("new orientation is invalid: {0}")]
    BadOrientation(OrientationError),
}

/// All feasible actions, sorted by (mover, anchor, face).
pub fn enumerate_actions(config: &Configuration, policy: OrientPolicy) -> Vec<Action> {
    let occupancy = config.occupancy();
    let mut out = Vec::new();
    for mover_id in graph::removable_modules(config) {
        let mover = config.module(mover_id).expect("removable module exists");
        for anchor in config.modules().iter().filter(|m| m.id != mover_id) {
            let Some(new_orient) = policy.orient_for(config, mover_id, anchor.id) else {
                continue;
            };
            for face in Face::ALL {
                let dest = anchor.neighbor_cell(face);
                match occupancy.get(&dest) {
                    Some(&other) if other != mover_id => continue,
                    _ => {}
                }
                if dest == mover.pos && new_orient == mover.orient {
                    continue;
                }
                out.push(Action {
                    mover: mover_id,
                    anchor: anchor.id,
                    face,
                    new_orient,
                });
            }
        }
    }
    out
}

fn check_feasible(config: &Configuration, action: &Action) -> Result<super::Cell, InfeasibleRule> {
    let mover = config
        .module(action.mover)
        .ok_or(InfeasibleRule::UnknownModule(action.mover))?;
    let anchor = config
        .module(action.anchor)
        .ok_or(InfeasibleRule::UnknownModule(action.anchor))?;
    if action.mover == config.anchor_id {
        return Err(InfeasibleRule::MoverIsReference);
    }
    if action.mover == action.anchor {
        return Err(InfeasibleRule::SelfAnchor);
    }
    action.new_orient.check().map_err(InfeasibleRule::BadOrientation)?;
    if !graph::removable_modules(config).contains(&action.mover) {
        return Err(InfeasibleRule::Articulation);
    }
    let dest = anchor.neighbor_cell(action.face);
    if let Some(other) = config.occupant(dest).filter(|&o| o != action.mover) {
        return Err(InfeasibleRule::DestinationOccupied(dest, other));
    }
    if dest == mover.pos && action.new_orient == mover.orient {
        return Err(InfeasibleRule::NoChange);
    }
    Ok(dest)
}

/// Returns the configuration after `action`; the input is untouched.
pub fn apply_action(config: &Configuration, action: &Action) -> Result<Configuration, LatticeError> {
    let dest = check_feasible(config, action).map_err(|rule| LatticeError::Infeasible {
        action: action.to_string(),
        rule,
    })?;
    let mut next = config.clone();
    let m = next.module_mut(action.mover).expect("mover checked");
    m.pos = dest;
    m.orient = action.new_orient;
    Ok(next)
}

/// Number of modules whose anchor-relative cell or orientation differs.
pub fn mismatch_count(config: &Configuration, target: &Configuration) -> Result<usize, LatticeError> {
    if config.len() != target.len() || config.ids().ne(target.ids()) {
        return Err(LatticeError::IdSetMismatch);
    }
    let a = config.shape_key();
    let b = target.shape_key();
    Ok(a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count())
}
