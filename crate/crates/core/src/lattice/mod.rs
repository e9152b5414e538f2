//! Lattice configurations of cube modules and the action space over them.
//!
//! A [`Configuration`] places modules on an integer lattice (side length
//! `L = 1`). One module, the anchor, is fixed and defines the reference frame;
//! all comparisons between configurations are made relative to it.
//!
//! An [`Action`] detaches a mover module and re-attaches it on face `k` of an
//! anchor module `j`. The feasibility rules are:
//!
//! * the mover is not the configuration's anchor module and is not an
//!   articulation module (removing it keeps the rest connected),
//! * the destination cell beside face `k` of module `j` is empty once the
//!   mover has been lifted out,
//! * the result is a valid configuration different from the input.

mod actions;
mod geometry;
mod graph;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use actions::{apply_action, enumerate_actions, mismatch_count, Action, InfeasibleRule, OrientPolicy};
pub use geometry::{Cell, Direction, Face, Orientation, OrientationError};
pub use graph::{is_connected, removable_modules};

pub(crate) use geometry::{add, sub};

/// Integer module identifier.
pub type ModuleId = u32;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("unknown module id {0}")]
    UnknownModule(ModuleId),
    #[error("configurations do not contain the same module ids")]
    IdSetMismatch,
    #[error("infeasible action {action}: {rule}")]
    Infeasible { action: String, rule: InfeasibleRule },
}

/// One module: lattice cell, face orientation and function tag.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModulePose {
    pub id: ModuleId,
    pub pos: Cell,
    pub orient: Orientation,
    #[serde(default)]
    pub function: String,
}

impl ModulePose {
    pub fn new(id: ModuleId, pos: Cell, function: impl Into<String>) -> ModulePose {
        ModulePose {
            id,
            pos,
            orient: Orientation::IDENTITY,
            function: function.into(),
        }
    }

    /// Cell on the far side of `face`.
    pub fn neighbor_cell(&self, face: Face) -> Cell {
        add(self.pos, self.orient.direction(face).vector())
    }
}

/// The first violated invariant found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("module id {0} appears more than once")]
    DuplicateId(ModuleId),
    #[error("anchor module {0} is not present")]
    MissingAnchor(ModuleId),
    #[error("module {id} has an invalid orientation: {reason}")]
    BadOrientation { id: ModuleId, reason: OrientationError },
    #[error("modules {first} and {second} both occupy cell {cell:?}")]
    Overlap {
        cell: Cell,
        first: ModuleId,
        second: ModuleId,
    },
    #[error("modules {unreachable:?} are not face-connected to the rest")]
    Disconnected { unreachable: Vec<ModuleId> },
}

/// A spacecraft state: the module set plus the fixed reference module.
///
/// Modules are kept sorted by id, so two configurations holding the same
/// modules compare equal regardless of input order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "RawConfiguration")]
pub struct Configuration {
    pub anchor_id: ModuleId,
    modules: Vec<ModulePose>,
}

#[derive(Deserialize)]
struct RawConfiguration {
    anchor_id: ModuleId,
    modules: Vec<ModulePose>,
}

impl From<RawConfiguration> for Configuration {
    fn from(raw: RawConfiguration) -> Self {
        Configuration::new(raw.anchor_id, raw.modules)
    }
}

/// Key identifying a configuration up to translation of the anchor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShapeKey(Vec<(ModuleId, Cell, Orientation)>);

impl Configuration {
    pub fn new(anchor_id: ModuleId, mut modules: Vec<ModulePose>) -> Configuration {
        modules.sort_by_key(|m| m.id);
        Configuration { anchor_id, modules }
    }

    /// Convenience builder: identity-oriented modules with ids `0..n` at the
    /// given cells, all tagged `function`, anchored on id 0.
    pub fn from_cells(cells: &[Cell], function: &str) -> Configuration {
        let modules = cells
            .iter()
            .enumerate()
            .map(|(i, &c)| ModulePose::new(i as ModuleId, c, function))
            .collect();
        Configuration::new(0, modules)
    }

    pub fn modules(&self) -> &[ModulePose] {
        &self.modules
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ModuleId> + '_ {
        self.modules.iter().map(|m| m.id)
    }

    pub fn module(&self, id: ModuleId) -> Option<&ModulePose> {
        self.modules
            .binary_search_by_key(&id, |m| m.id)
            .ok()
            .map(|i| &self.modules[i])
    }

    pub(crate) fn module_mut(&mut self, id: ModuleId) -> Option<&mut ModulePose> {
        self.modules
            .binary_search_by_key(&id, |m| m.id)
            .ok()
            .map(move |i| &mut self.modules[i])
    }

    /// Position of the module within the id-sorted order.
    pub fn slot_of(&self, id: ModuleId) -> Option<usize> {
        self.modules.binary_search_by_key(&id, |m| m.id).ok()
    }

    pub fn anchor(&self) -> Option<&ModulePose> {
        self.module(self.anchor_id)
    }

    /// Id of the module occupying `cell`, if any.
    pub fn occupant(&self, cell: Cell) -> Option<ModuleId> {
        self.modules.iter().find(|m| m.pos == cell).map(|m| m.id)
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.modules.iter().any(|m| m.pos == cell)
    }

    pub(crate) fn occupancy(&self) -> HashMap<Cell, ModuleId> {
        self.modules.iter().map(|m| (m.pos, m.id)).collect()
    }

    /// Position relative to the anchor module.
    pub fn relative_pos(&self, id: ModuleId) -> Option<Cell> {
        let anchor = self.anchor()?;
        self.module(id).map(|m| sub(m.pos, anchor.pos))
    }

    pub fn shape_key(&self) -> ShapeKey {
        let origin = self.anchor().map(|a| a.pos).unwrap_or([0, 0, 0]);
        ShapeKey(
            self.modules
                .iter()
                .map(|m| (m.id, sub(m.pos, origin), m.orient))
                .collect(),
        )
    }

    /// Equal up to translation of the anchor frame.
    pub fn same_shape(&self, other: &Configuration) -> bool {
        self.anchor_id == other.anchor_id && self.shape_key() == other.shape_key()
    }

    /// Sorted, de-duplicated function tags.
    pub fn function_tags(&self) -> Vec<String> {
        let tags: BTreeSet<&str> = self.modules.iter().map(|m| m.function.as_str()).collect();
        tags.into_iter().map(str::to_owned).collect()
    }

    /// Faces of `id` whose outward direction points at an empty cell.
    pub fn exposed_faces(&self, id: ModuleId) -> Result<Vec<Face>, LatticeError> {
        let m = self.module(id).ok_or(LatticeError::UnknownModule(id))?;
        Ok(Face::ALL
            .into_iter()
            .filter(|&f| !self.is_occupied(m.neighbor_cell(f)))
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ConfigDocument {
            format_version: crate::FORMAT_VERSION,
            config: self.clone(),
        })
        .expect("configuration serializes")
    }

    pub fn from_json(text: &str) -> Result<Configuration, serde_json::Error> {
        let doc: ConfigDocument = serde_json::from_str(text)?;
        Ok(doc.config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Configuration, crate::Error> {
        let text = std::fs::read_to_string(path)?;
        Ok(Configuration::from_json(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), crate::Error> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "anchor {} [", self.anchor_id)?;
        for (i, m) in self.modules.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}@({},{},{})", m.id, m.pos[0], m.pos[1], m.pos[2])?;
        }
        f.write_str("]")
    }
}

/// Axis-aligned box of cells, expressed relative to the anchor module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Cell,
    pub max: Cell,
}

impl Bounds {
    /// Smallest box holding every configuration (anchor-relative), grown by
    /// `margin` cells on each side.
    pub fn covering(configs: &[&Configuration], margin: i32) -> Bounds {
        let mut min = [i32::MAX; 3];
        let mut max = [i32::MIN; 3];
        for c in configs {
            for m in c.modules() {
                let r = c.relative_pos(m.id).unwrap_or(m.pos);
                for k in 0..3 {
                    min[k] = min[k].min(r[k]);
                    max[k] = max[k].max(r[k]);
                }
            }
        }
        if min[0] > max[0] {
            return Bounds {
                min: [0; 3],
                max: [0; 3],
            };
        }
        Bounds {
            min: [min[0] - margin, min[1] - margin, min[2] - margin],
            max: [max[0] + margin, max[1] + margin, max[2] + margin],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            (self.max[0] - self.min[0] + 1) as usize,
            (self.max[1] - self.min[1] + 1) as usize,
            (self.max[2] - self.min[2] + 1) as usize,
        ]
    }

    pub fn contains(&self, rel: Cell) -> bool {
        (0..3).all(|k| rel[k] >= self.min[k] && rel[k] <= self.max[k])
    }

    pub fn contains_config(&self, config: &Configuration) -> bool {
        config
            .ids()
            .all(|id| config.relative_pos(id).is_some_and(|r| self.contains(r)))
    }
}

/// Feasible actions, optionally restricted to destinations inside `bounds`.
pub fn legal_actions(config: &Configuration, policy: OrientPolicy, bounds: Option<&Bounds>) -> Vec<Action> {
    let mut actions = enumerate_actions(config, policy);
    if let (Some(b), Some(anchor)) = (bounds, config.anchor()) {
        actions.retain(|a| {
            let dest = config
                .module(a.anchor)
                .expect("enumerated anchor")
                .neighbor_cell(a.face);
            b.contains(sub(dest, anchor.pos))
        });
    }
    actions
}

fn default_format_version() -> u32 {
    crate::FORMAT_VERSION
}

/// On-disk configuration document.
#[derive(Serialize, Deserialize)]
struct ConfigDocument {
    #[serde(default = "default_format_version")]
    format_version: u32,
    #[serde(flatten)]
    config: Configuration,
}

/// Checks every configuration invariant and reports the first violation.
pub fn validate(config: &Configuration) -> Result<(), Violation> {
    for w in config.modules.windows(2) {
        if w[0].id == w[1].id {
            return Err(Violation::DuplicateId(w[0].id));
        }
    }
    if config.anchor().is_none() {
        return Err(Violation::MissingAnchor(config.anchor_id));
    }
    for m in &config.modules {
        m.orient
            .check()
            .map_err(|reason| Violation::BadOrientation { id: m.id, reason })?;
    }
    let mut seen: HashMap<Cell, ModuleId> = HashMap::new();
    for m in &config.modules {
        if let Some(&first) = seen.get(&m.pos) {
            return Err(Violation::Overlap {
                cell: m.pos,
                first,
                second: m.id,
            });
        }
        seen.insert(m.pos, m.id);
    }
    let unreachable = graph::unreachable_from_anchor(config);
    if !unreachable.is_empty() {
        return Err(Violation::Disconnected { unreachable });
    }
    Ok(())
}
