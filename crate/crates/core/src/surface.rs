//! Graph of exposed module interfaces the assembly arm walks on.
//!
//! Vertices are exposed faces numbered `C·6 + I`. Edges join faces the arm
//! can step between in one move:
//!
//! * same module, perpendicular faces, with the diagonal cell beyond the
//!   shared edge empty (a convex edge with nothing pinching it);
//! * coplanar faces of two face-adjacent modules;
//! * faces across a concave corner: module A at `p`, module B at `p+d+e`,
//!   A's `d` face and B's `−e` face both bordering the empty cell `p+d`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::lattice::{apply_action, Action, Cell, Configuration, Direction, Face, LatticeError, ModuleId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SurfaceError {
    #[error("face index {0} out of range 1..=6")]
    FaceOutOfRange(u8),
    #[error("interface {0} is not an exposed face of the configuration")]
    UnknownInterface(InterfaceId),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Interface number `C·6 + I` for module `C` and face `I ∈ 1..=6`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InterfaceId(pub u32);

impl InterfaceId {
    pub fn new(module: ModuleId, face: Face) -> InterfaceId {
        InterfaceId(module * 6 + u32::from(face.index()))
    }

    pub fn module(self) -> ModuleId {
        (self.0 - 1) / 6
    }

    pub fn face(self) -> Face {
        Face::new(((self.0 - 1) % 6 + 1) as u8).expect("always in range")
    }

    pub fn decode(self) -> (ModuleId, Face) {
        (self.module(), self.face())
    }
}

impl fmt::Display for InterfaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn interface_id(module: ModuleId, face: u8) -> Result<InterfaceId, SurfaceError> {
    let face = Face::new(face).ok_or(SurfaceError::FaceOutOfRange(face))?;
    Ok(InterfaceId::new(module, face))
}

/// World-space placement of one interface, in lattice units. Module `m`
/// occupies the unit cube centered on `m.pos`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfacePose {
    pub id: InterfaceId,
    pub center: [f64; 3],
    pub normal: Direction,
}

pub fn interface_pose(config: &Configuration, id: InterfaceId) -> Option<InterfacePose> {
    let (module, face) = id.decode();
    let m = config.module(module)?;
    let normal = m.orient.direction(face);
    let n = normal.unit();
    let center = [0, 1, 2].map(|i| f64::from(m.pos[i]) + 0.5 * n[i]);
    Some(InterfacePose { id, center, normal })
}

/// Which edge rules [`build_map`] applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeRules {
    pub same_module: bool,
    pub coplanar: bool,
    pub concave: bool,
}

impl Default for EdgeRules {
    fn default() -> EdgeRules {
        EdgeRules {
            same_module: true,
            coplanar: true,
            concave: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SurfaceGraph {
    vertices: BTreeSet<InterfaceId>,
    edges: BTreeMap<InterfaceId, BTreeSet<InterfaceId>>,
    rules: Option<EdgeRules>,
    /// Interface the arm base is docked on.
    pub fixed_end: Option<InterfaceId>,
}

impl SurfaceGraph {
    pub fn vertices(&self) -> &BTreeSet<InterfaceId> {
        &self.vertices
    }

    pub fn contains(&self, v: InterfaceId) -> bool {
        self.vertices.contains(&v)
    }

    pub fn neighbors(&self, v: InterfaceId) -> impl Iterator<Item = InterfaceId> + '_ {
        self.edges.get(&v).into_iter().flatten().copied()
    }

    pub fn has_edge(&self, u: InterfaceId, v: InterfaceId) -> bool {
        self.edges.get(&u).is_some_and(|s| s.contains(&v))
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edge_list(&self) -> Vec<(InterfaceId, InterfaceId)> {
        self.edges
            .iter()
            .flat_map(|(&u, vs)| vs.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Every edge has unit weight.
    pub fn weight(&self, u: InterfaceId, v: InterfaceId) -> Option<u32> {
        self.has_edge(u, v).then_some(1)
    }

    pub fn is_connected(&self) -> bool {
        let Some(&first) = self.vertices.iter().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([first]);
        let mut stack = vec![first];
        while let Some(u) = stack.pop() {
            for v in self.neighbors(u) {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen.len() == self.vertices.len()
    }

    /// Text dump: a `vertices:` header line, then one `u v 1` line per edge.
    pub fn dump(&self) -> String {
        let mut out = String::from("vertices:");
        for v in &self.vertices {
            write!(out, " {v}").expect("write to string");
        }
        out.push('\n');
        for (u, v) in self.edge_list() {
            writeln!(out, "{u} {v} 1").expect("write to string");
        }
        out
    }

    fn add_edge(&mut self, u: InterfaceId, v: InterfaceId) {
        self.edges.entry(u).or_default().insert(v);
        self.edges.entry(v).or_default().insert(u);
    }

    fn remove_vertex(&mut self, v: InterfaceId) {
        self.vertices.remove(&v);
        if let Some(ns) = self.edges.remove(&v) {
            for n in ns {
                if let Some(set) = self.edges.get_mut(&n) {
                    set.remove(&v);
                    if set.is_empty() {
                        self.edges.remove(&n);
                    }
                }
            }
        }
    }
}

struct Lookup<'a> {
    config: &'a Configuration,
    cells: HashMap<Cell, ModuleId>,
}

impl<'a> Lookup<'a> {
    fn new(config: &'a Configuration) -> Self {
        Lookup {
            config,
            cells: config.occupancy(),
        }
    }

    fn occupied(&self, c: Cell) -> bool {
        self.cells.contains_key(&c)
    }

    fn at(&self, c: Cell) -> Option<ModuleId> {
        self.cells.get(&c).copied()
    }

    fn face_toward(&self, id: ModuleId, dir: Direction) -> InterfaceId {
        let m = self.config.module(id).expect("module from occupancy");
        InterfaceId::new(id, m.orient.face_toward(dir).expect("valid orientation"))
    }

    fn exposed(&self, id: ModuleId) -> impl Iterator<Item = Direction> + '_ {
        let pos = self.config.module(id).expect("known module").pos;
        Direction::ALL
            .into_iter()
            .filter(move |d| !self.occupied(shift(pos, *d)))
    }

    /// Edges incident to module `id` under `rules`, each as (own face, other face).
    fn edges_of(&self, id: ModuleId, rules: EdgeRules) -> Vec<(InterfaceId, InterfaceId)> {
        let pos = self.config.module(id).expect("known module").pos;
        let mut out = Vec::new();
        for d in self.exposed(id) {
            let own = self.face_toward(id, d);
            for e in Direction::ALL.into_iter().filter(|e| d.is_perpendicular(*e)) {
                let side = shift(pos, e);
                let diagonal = shift(shift(pos, d), e);
                if rules.same_module && !self.occupied(side) && !self.occupied(diagonal) {
                    out.push((own, self.face_toward(id, e)));
                }
                if rules.coplanar {
                    if let Some(other) = self.at(side) {
                        if !self.occupied(shift(side, d)) {
                            out.push((own, self.face_toward(other, d)));
                        }
                    }
                }
                if rules.concave {
                    if let Some(other) = self.at(diagonal) {
                        out.push((own, self.face_toward(other, e.opposite())));
                    }
                }
            }
        }
        out
    }
}

fn shift(c: Cell, d: Direction) -> Cell {
    let v = d.vector();
    [c[0] + v[0], c[1] + v[1], c[2] + v[2]]
}

pub fn build_map(config: &Configuration) -> SurfaceGraph {
    build_map_with(config, EdgeRules::default())
}

pub fn build_map_with(config: &Configuration, rules: EdgeRules) -> SurfaceGraph {
    let look = Lookup::new(config);
    let mut g = SurfaceGraph {
        rules: Some(rules),
        ..SurfaceGraph::default()
    };
    for m in config.modules() {
        for d in look.exposed(m.id) {
            g.vertices.insert(look.face_toward(m.id, d));
        }
    }
    for m in config.modules() {
        for (u, v) in look.edges_of(m.id, rules) {
            g.add_edge(u, v);
        }
    }
    g
}

/// Applies `action` and patches `g` locally. Exposure and edge rules only
/// look one cell away (diagonals included), so only the mover and modules in
/// the 3×3×3 neighborhoods of its old and new cells are recomputed.
pub fn update_map(
    g: &SurfaceGraph,
    before: &Configuration,
    action: &Action,
) -> Result<(SurfaceGraph, Configuration), SurfaceError> {
    let after = apply_action(before, action)?;
    let rules = g.rules.unwrap_or_default();
    let old = before.module(action.mover).expect("applied").pos;
    let new = after.module(action.mover).expect("applied").pos;

    let mut touched = BTreeSet::from([action.mover]);
    for (center, config) in [(old, before), (new, &after)] {
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(id) = config.occupant([center[0] + dx, center[1] + dy, center[2] + dz]) {
                        touched.insert(id);
                    }
                }
            }
        }
    }

    let mut out = g.clone();
    out.rules = Some(rules);
    for &id in &touched {
        for face in Face::ALL {
            out.remove_vertex(InterfaceId::new(id, face));
        }
    }
    let look = Lookup::new(&after);
    for &id in &touched {
        for d in look.exposed(id) {
            out.vertices.insert(look.face_toward(id, d));
        }
    }
    for &id in &touched {
        for (u, v) in look.edges_of(id, rules) {
            out.add_edge(u, v);
        }
    }
    if out.fixed_end.is_some_and(|f| !out.vertices.contains(&f)) {
        out.fixed_end = None;
    }
    Ok((out, after))
}
