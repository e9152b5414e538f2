//! A* walking paths over the surface graph and the local approach motion
//! (lift off the source face, sweep, dock onto the target face).

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;

use nalgebra::{Rotation3, Unit, Vector3};

use crate::lattice::Configuration;
use crate::surface::{interface_pose, InterfaceId, InterfacePose, SurfaceGraph};

/// Default lift-off distance from an interface, in lattice units.
pub const DEFAULT_CLEARANCE: f64 = 0.5;
/// Arc via points per quarter turn of sweep.
pub const VIA_PER_QUARTER: usize = 8;
const MIN_VIA: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RouteError {
    #[error("interface {0} is not in the surface graph")]
    UnknownInterface(InterfaceId),
    #[error("no path from {0} to {1}")]
    Unreachable(InterfaceId, InterfaceId),
    #[error("source and target interfaces coincide")]
    Degenerate,
    #[error("clearance must be positive and finite, got {0}")]
    BadClearance(f64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfacePath {
    pub nodes: Vec<InterfaceId>,
    pub cost: u32,
}

/// Twice the face center, as integers.
fn doubled_center(config: &Configuration, id: InterfaceId) -> Option<[i64; 3]> {
    let (module, face) = id.decode();
    let m = config.module(module)?;
    let n = m.orient.direction(face).vector();
    Some([0, 1, 2].map(|i| 2 * i64::from(m.pos[i]) + i64::from(n[i])))
}

fn doubled_manhattan(a: [i64; 3], b: [i64; 3]) -> i64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).sum()
}

/// Manhattan distance between the two interface centers, in lattice units.
/// Every surface-graph step moves a face center by exactly 1 in this metric,
/// so the heuristic is admissible and consistent.
pub fn manhattan_h(n: InterfaceId, goal: InterfaceId, config: &Configuration) -> Result<f64, RouteError> {
    let a = doubled_center(config, n).ok_or(RouteError::UnknownInterface(n))?;
    let b = doubled_center(config, goal).ok_or(RouteError::UnknownInterface(goal))?;
    Ok(doubled_manhattan(a, b) as f64 / 2.0)
}

/// Shortest unit-weight path; ties broken toward smaller interface ids.
pub fn astar(
    g: &SurfaceGraph,
    start: InterfaceId,
    goal: InterfaceId,
    config: &Configuration,
) -> Result<SurfacePath, RouteError> {
    for v in [start, goal] {
        if !g.contains(v) {
            return Err(RouteError::UnknownInterface(v));
        }
    }
    let goal_c = doubled_center(config, goal).ok_or(RouteError::UnknownInterface(goal))?;
    let h = |v: InterfaceId| -> Result<i64, RouteError> {
        let c = doubled_center(config, v).ok_or(RouteError::UnknownInterface(v))?;
        Ok(doubled_manhattan(c, goal_c))
    };

    // Costs doubled so f = 2g + 2h stays integral.
    let mut best: HashMap<InterfaceId, i64> = HashMap::from([(start, 0)]);
    let mut parent: HashMap<InterfaceId, InterfaceId> = HashMap::new();
    let mut open = BinaryHeap::from([Reverse((h(start)?, start))]);
    while let Some(Reverse((_, u))) = open.pop() {
        let gu = best[&u];
        if u == goal {
            let mut nodes = vec![goal];
            let mut cur = goal;
            while let Some(&p) = parent.get(&cur) {
                nodes.push(p);
                cur = p;
            }
            nodes.reverse();
            return Ok(SurfacePath {
                cost: (gu / 2) as u32,
                nodes,
            });
        }
        for v in g.neighbors(u) {
            let gv = gu + 2;
            if best.get(&v).is_none_or(|&old| gv < old) {
                best.insert(v, gv);
                parent.insert(v, u);
                open.push(Reverse((gv + h(v)?, v)));
            }
        }
    }
    Err(RouteError::Unreachable(start, goal))
}

/// Where the tool ends up when docked: the target face center, approached
/// along `approach` (the negated target normal).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dock {
    pub point: [f64; 3],
    pub approach: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproachPlan {
    pub start: [f64; 3],
    pub p1: [f64; 3],
    pub p2: [f64; 3],
    /// P1, the arc via points, then P2.
    pub arc: Vec<[f64; 3]>,
    pub dock: Dock,
    pub clearance: f64,
    /// Sweep angle from source normal to target normal, radians.
    pub sweep: f64,
}

impl ApproachPlan {
    /// All waypoints in order with their phase label.
    pub fn waypoints(&self) -> Vec<(&'static str, [f64; 3])> {
        let mut out = vec![("depart", self.start)];
        out.extend(self.arc.iter().map(|&p| ("transfer", p)));
        out.push(("dock", self.dock.point));
        out
    }

    /// CSV rows `phase,x,y,z` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase,x,y,z\n");
        for (phase, p) in self.waypoints() {
            writeln!(out, "{phase},{},{},{}", p[0], p[1], p[2]).expect("write to string");
        }
        out
    }
}

fn v3(p: [f64; 3]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

fn arr(v: Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Rotation axis taking `ns` onto `nt` by the shorter sweep. For opposite
/// normals the axis is chosen so the sweep bulges toward the target.
fn sweep_axis(ns: Vector3<f64>, nt: Vector3<f64>, displacement: Vector3<f64>) -> Option<Unit<Vector3<f64>>> {
    let cross = ns.cross(&nt);
    if cross.norm() > 1e-9 {
        return Some(Unit::new_normalize(cross));
    }
    if ns.dot(&nt) > 0.0 {
        return None;
    }
    let lateral = displacement - ns * ns.dot(&displacement);
    if lateral.norm() > 1e-9 {
        return Some(Unit::new_normalize(ns.cross(&lateral)));
    }
    let helper = if ns.x.abs() < 0.5 { Vector3::x() } else { Vector3::y() };
    Some(Unit::new_normalize(ns.cross(&helper)))
}

/// Lift to P1 on the source normal, sweep to P2 on the target normal, dock.
///
/// The sweep rotates about an axis perpendicular to both normals through a
/// pivot chosen so the rotation maps P1 onto P2 (plus a linear slide along
/// the axis when the points are offset along it).
pub fn approach_waypoints(
    source: &InterfacePose,
    target: &InterfacePose,
    clearance: f64,
) -> Result<ApproachPlan, RouteError> {
    if !(clearance > 0.0 && clearance.is_finite()) {
        return Err(RouteError::BadClearance(clearance));
    }
    let cs = v3(source.center);
    let ct = v3(target.center);
    if (cs - ct).norm() < 1e-12 {
        return Err(RouteError::Degenerate);
    }
    let ns = v3(source.normal.unit());
    let nt = v3(target.normal.unit());
    let p1 = cs + ns * clearance;
    let p2 = ct + nt * clearance;

    let (arc, sweep) = match sweep_axis(ns, nt, p2 - p1) {
        None => {
            let n = MIN_VIA + 1;
            let pts = (0..=n).map(|i| arr(p1.lerp(&p2, i as f64 / n as f64))).collect();
            (pts, 0.0)
        }
        Some(k) => {
            let phi = ns.angle(&nt);
            let along = |p: Vector3<f64>| k.dot(&p);
            let flat = |p: Vector3<f64>| p - k.into_inner() * along(p);
            let (a1, a2) = (along(p1), along(p2));
            let (q1, q2) = (flat(p1), flat(p2));
            let rot = Rotation3::from_axis_angle(&k, phi);
            // (I − R) c = q2 − R q1, solved in the plane orthogonal to k.
            let u = ns;
            let w = k.cross(&u);
            let b = q2 - rot * q1;
            let (bu, bw) = (b.dot(&u), b.dot(&w));
            let (cs_, sn) = (phi.cos(), phi.sin());
            let (a, s) = (1.0 - cs_, sn);
            let det = a * a + s * s;
            let cu = (a * bu - s * bw) / det;
            let cw = (s * bu + a * bw) / det;
            let pivot = u * cu + w * cw;
            let vias = ((VIA_PER_QUARTER as f64 * phi / std::f64::consts::FRAC_PI_2).round() as usize).max(MIN_VIA);
            let n = vias + 1;
            let pts = (0..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    let r = Rotation3::from_axis_angle(&k, phi * t);
                    let p = pivot + r * (q1 - pivot) + k.into_inner() * (a1 + t * (a2 - a1));
                    arr(p)
                })
                .collect::<Vec<_>>();
            (pts, phi)
        }
    };
    let mut arc = arc;
    // Pin the ends exactly.
    arc[0] = arr(p1);
    *arc.last_mut().expect("non-empty") = arr(p2);
    Ok(ApproachPlan {
        start: source.center,
        p1: arr(p1),
        p2: arr(p2),
        arc,
        dock: Dock {
            point: target.center,
            approach: arr(-nt),
        },
        clearance,
        sweep,
    })
}

/// Approach between two interfaces of `config`.
pub fn approach_between(
    config: &Configuration,
    source: InterfaceId,
    target: InterfaceId,
    clearance: f64,
) -> Result<ApproachPlan, RouteError> {
    let s = interface_pose(config, source).ok_or(RouteError::UnknownInterface(source))?;
    let t = interface_pose(config, target).ok_or(RouteError::UnknownInterface(target))?;
    approach_waypoints(&s, &t, clearance)
}

/// Euclidean distance from `p` to the unit cube centered on `cell`.
pub fn distance_to_cell(p: [f64; 3], cell: [i32; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let d = (p[i] - f64::from(cell[i])).abs() - 0.5;
            d.max(0.0).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}
