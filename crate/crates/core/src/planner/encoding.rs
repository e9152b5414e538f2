//! Fixed-size tensor encoding of (state, target) and the canonical action
//! index space.

use crate::lattice::{legal_actions, Action, Bounds, Cell, Configuration, Face, ModuleId, OrientPolicy};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("module {id} at anchor-relative cell {cell:?} lies outside the encoding box")]
    OutOfBox { id: ModuleId, cell: Cell },
    #[error("configuration modules do not match the problem's module set")]
    ModuleSetMismatch,
}

/// Channel-major `[channel][x][y][z]` tensor.
///
/// Channels: current occupancy, target occupancy, match mask (current cell
/// of every module already at its target cell and orientation), then one
/// channel per function tag with `+1` at each tagged module's current cell
/// and `−0.5` at its target cell.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEncoding {
    pub dims: [usize; 3],
    pub channels: usize,
    pub data: Vec<f64>,
}

impl StateEncoding {
    pub fn volume(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let v = self.volume();
        &self.data[c * v..(c + 1) * v]
    }
}

pub const BASE_CHANNELS: usize = 3;

fn voxel(bounds: &Bounds, rel: Cell) -> usize {
    let d = bounds.dims();
    let x = (rel[0] - bounds.min[0]) as usize;
    let y = (rel[1] - bounds.min[1]) as usize;
    let z = (rel[2] - bounds.min[2]) as usize;
    (x * d[1] + y) * d[2] + z
}

/// Encodes `config` against `target` inside `bounds`, both translated so
/// their anchor sits at the box origin offset. `tags` fixes the tag-channel
/// order.
pub fn encode_state(
    config: &Configuration,
    target: &Configuration,
    bounds: &Bounds,
    tags: &[String],
) -> Result<StateEncoding, EncodeError> {
    if config.len() != target.len() || config.ids().ne(target.ids()) {
        return Err(EncodeError::ModuleSetMismatch);
    }
    let dims = bounds.dims();
    let vol: usize = dims.iter().product();
    let channels = BASE_CHANNELS + tags.len();
    let mut data = vec![0.0; channels * vol];
    for (m, t) in config.modules().iter().zip(target.modules()) {
        let rel = config.relative_pos(m.id).expect("anchor present");
        let trel = target.relative_pos(t.id).expect("anchor present");
        for (id, cell) in [(m.id, rel), (t.id, trel)] {
            if !bounds.contains(cell) {
                return Err(EncodeError::OutOfBox { id, cell });
            }
        }
        let (cur, tgt) = (voxel(bounds, rel), voxel(bounds, trel));
        data[cur] = 1.0;
        data[vol + tgt] = 1.0;
        if rel == trel && m.orient == t.orient {
            data[2 * vol + cur] = 1.0;
        }
        if let Some(k) = tags.iter().position(|tag| *tag == m.function) {
            data[(BASE_CHANNELS + k) * vol + cur] += 1.0;
            data[(BASE_CHANNELS + k) * vol + tgt] -= 0.5;
        }
    }
    Ok(StateEncoding { dims, channels, data })
}

/// A fixed planning instance: target, encoding box, tag order and the
/// module slots that define the action index space.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub target: Configuration,
    pub bounds: Bounds,
    pub tags: Vec<String>,
    pub slots: Vec<ModuleId>,
    pub policy: OrientPolicy,
}

impl Problem {
    /// Box covering `target` and every `starts` configuration with `margin`
    /// free cells on each side.
    pub fn new(target: &Configuration, starts: &[&Configuration], margin: i32) -> Problem {
        let mut all: Vec<&Configuration> = vec![target];
        all.extend_from_slice(starts);
        Problem {
            target: target.clone(),
            bounds: Bounds::covering(&all, margin),
            tags: target.function_tags(),
            slots: target.ids().collect(),
            policy: OrientPolicy::PreserveWorld,
        }
    }

    pub fn channels(&self) -> usize {
        BASE_CHANNELS + self.tags.len()
    }

    pub fn input_len(&self) -> usize {
        self.channels() * self.bounds.dims().iter().product::<usize>()
    }

    pub fn n_actions(&self) -> usize {
        self.slots.len() * self.slots.len() * 6
    }

    pub fn encode(&self, config: &Configuration) -> Result<StateEncoding, EncodeError> {
        encode_state(config, &self.target, &self.bounds, &self.tags)
    }

    /// `(mover_slot · N + anchor_slot) · 6 + face − 1`.
    pub fn action_index(&self, action: &Action) -> Option<usize> {
        let n = self.slots.len();
        let m = self.slots.binary_search(&action.mover).ok()?;
        let a = self.slots.binary_search(&action.anchor).ok()?;
        Some((m * n + a) * 6 + usize::from(action.face.index()) - 1)
    }

    /// Inverse of [`Problem::action_index`] for a given state; the new
    /// orientation follows the problem's policy.
    pub fn action_at(&self, config: &Configuration, index: usize) -> Option<Action> {
        let n = self.slots.len();
        if index >= self.n_actions() {
            return None;
        }
        let face = Face::new((index % 6) as u8 + 1)?;
        let pair = index / 6;
        let (mover, anchor) = (self.slots[pair / n], self.slots[pair % n]);
        Some(Action {
            mover,
            anchor,
            face,
            new_orient: self.policy.orient_for(config, mover, anchor)?,
        })
    }

    /// Legal actions inside the box with their indices, in index order.
    pub fn legal(&self, config: &Configuration) -> Vec<(usize, Action)> {
        let mut out: Vec<(usize, Action)> = legal_actions(config, self.policy, Some(&self.bounds))
            .into_iter()
            .map(|a| (self.action_index(&a).expect("module in problem"), a))
            .collect();
        out.sort_by_key(|(i, _)| *i);
        out
    }
}
