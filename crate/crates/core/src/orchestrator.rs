//! End-to-end pipeline: sequence planning, arm routing per move, joint
//! trajectories, and the replay trace.
//!
//! The arm stands on one exposed interface (its base). For each move it
//! grasps the mover on the face whose outward normal matches the base
//! normal, so in the arm frame the tool always points straight down and the
//! module is carried without rotation. A base is accepted only when every
//! phase of the move tracks through inverse kinematics without a joint jump.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{
    cartesian_line_trajectory, cartesian_path_trajectory, forward_kinematics, inverse_kinematics_near,
    joint_trajectory, select_branch, ArmGeometry, EndPose, JointVector, KinematicsError, DEFAULT_DT,
    DEFAULT_SEGMENT_TIME, MAX_JOINT_STEP,
};
use crate::lattice::{
    apply_action, mismatch_count, validate, Action, Cell, Configuration, Direction, LatticeError, ModuleId,
    Orientation, Violation,
};
use crate::planner::{plan, Plan, PlanError, PlanOptions, PlanSource, PolicyValueNet, Problem};
use crate::route::{approach_waypoints, astar, ApproachPlan, RouteError, SurfacePath, DEFAULT_CLEARANCE};
use crate::surface::{build_map, interface_pose, update_map, InterfaceId, InterfacePose, SurfaceError, SurfaceGraph};
use crate::FORMAT_VERSION;

/// Joint gap tolerated between consecutive phases when building a step.
const PHASE_TOL: f64 = 1e-9;
/// Joint gap that makes a trace replay fail.
pub const CONTINUITY_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("invalid configuration: {0}")]
    Invalid(#[from] Violation),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("no exposed interface to mount the arm on")]
    NoBase,
    #[error("step {step}: no base interface reaches the mover for {action}")]
    UnreachablePick { step: usize, action: Action },
    #[error("step {step}: joint gap {gap} between phases")]
    Continuity { step: usize, gap: f64 },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, OrchestratorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    /// Base relocation along the surface graph.
    Walk,
    /// Unloaded approach and grasp.
    Pick,
    /// Lift, transfer and dock of the carried module.
    Place,
    /// Release and return to the rest posture.
    Return,
}

/// Joint samples of one phase, times local to the phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTrajectory {
    pub phase: Phase,
    pub samples: Vec<(f64, JointVector)>,
}

impl PhaseTrajectory {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HandlingStep {
    pub action: Action,
    /// Base interface the arm works from.
    pub base: InterfaceId,
    /// Base relocation before the move; starts at the previous base.
    pub arm_walk: SurfacePath,
    /// Mover face the tool grasps.
    pub grasp: InterfaceId,
    /// Tool approach from the base to the grasp face.
    pub pick: ApproachPlan,
    /// Carried module's docking face: lifted along the grasp normal, swept,
    /// docked onto anchor face k.
    pub place: ApproachPlan,
    /// Pick, place and return, in order.
    pub trajectories: Vec<PhaseTrajectory>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    pub plan: PlanOptions,
    pub arm: ArmGeometry,
    pub clearance: f64,
    pub segment_time: f64,
    pub dt: f64,
    /// Time per surface-graph hop while walking.
    pub hop_time: f64,
    pub initial_base: Option<InterfaceId>,
    /// Free cells around start and target in the planning box.
    pub margin: i32,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            plan: PlanOptions::default(),
            arm: ArmGeometry::default(),
            clearance: DEFAULT_CLEARANCE,
            segment_time: DEFAULT_SEGMENT_TIME,
            dt: DEFAULT_DT,
            hop_time: 0.5,
            initial_base: None,
            margin: 1,
        }
    }
}

/// Arm base frame: origin at the base interface center, `z` along its
/// outward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseFrame {
    pub origin: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl BaseFrame {
    pub fn on(pose: &InterfacePose) -> BaseFrame {
        let z = v3(pose.normal.unit());
        let x = [Vector3::x(), Vector3::y(), Vector3::z()]
            .into_iter()
            .find(|a| a.dot(&z) == 0.0)
            .expect("axis-aligned normal");
        BaseFrame {
            origin: v3(pose.center),
            rotation: Matrix3::from_columns(&[x, z.cross(&x), z]),
        }
    }

    pub fn to_arm(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.origin)
    }

    pub fn to_world(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.origin + self.rotation * p
    }
}

fn v3(p: [f64; 3]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

fn arr(v: Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn cell_f(c: Cell) -> Vector3<f64> {
    Vector3::new(f64::from(c[0]), f64::from(c[1]), f64::from(c[2]))
}

fn step_cell(c: Cell, d: Direction) -> Cell {
    let v = d.vector();
    [c[0] + v[0], c[1] + v[1], c[2] + v[2]]
}

/// Rest posture between moves: arm straight up.
pub const HOME: JointVector = JointVector::ZERO;

/// Planned sequence plus the arm work for every move.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconfiguration {
    pub plan: Plan,
    pub initial_base: InterfaceId,
    pub steps: Vec<HandlingStep>,
}

/// Plans the module sequence (policy when given, search otherwise) and
/// routes the arm for every move.
pub fn plan_reconfiguration(
    start: &Configuration,
    target: &Configuration,
    policy: Option<(&PolicyValueNet, &Problem)>,
    opts: &PipelineOptions,
) -> Result<Reconfiguration> {
    validate(start)?;
    validate(target)?;
    mismatch_count(start, target)?;
    let plan = match policy {
        Some((net, problem)) => plan(Some(net), problem, start, &opts.plan)?,
        None => {
            let problem = Problem::new(target, &[start], opts.margin);
            plan(None, &problem, start, &opts.plan)?
        }
    };
    let (initial_base, steps) = route_actions(start, &plan.actions, opts)?;
    Ok(Reconfiguration {
        plan,
        initial_base,
        steps,
    })
}

/// Default base: the lowest exposed interface of the reference module, or
/// the lowest exposed interface overall.
pub fn default_base(graph: &SurfaceGraph, config: &Configuration) -> Option<InterfaceId> {
    let vs = graph.vertices();
    vs.iter()
        .find(|v| v.module() == config.anchor_id)
        .or_else(|| vs.iter().next())
        .copied()
}

/// Arm work for a fixed action sequence. The surface map is patched
/// incrementally after each move.
pub fn route_actions(
    start: &Configuration,
    actions: &[Action],
    opts: &PipelineOptions,
) -> Result<(InterfaceId, Vec<HandlingStep>)> {
    let mut config = start.clone();
    let mut graph = build_map(start);
    let mut base = match opts.initial_base {
        Some(b) if graph.contains(b) => b,
        Some(_) => return Err(OrchestratorError::NoBase),
        None => default_base(&graph, start).ok_or(OrchestratorError::NoBase)?,
    };
    let initial = base;
    graph.fixed_end = Some(base);
    let mut steps = Vec::with_capacity(actions.len());
    for (i, action) in actions.iter().enumerate() {
        let (mut next_graph, after) = update_map(&graph, &config, action)?;
        let step = handle_step(i, &config, &after, &graph, &next_graph, base, action, opts)?;
        base = step.base;
        next_graph.fixed_end = Some(base);
        graph = next_graph;
        config = after;
        steps.push(step);
    }
    Ok((initial, steps))
}

#[allow(clippy::too_many_arguments)]
fn handle_step(
    index: usize,
    before: &Configuration,
    after: &Configuration,
    graph: &SurfaceGraph,
    next_graph: &SurfaceGraph,
    current_base: InterfaceId,
    action: &Action,
    opts: &PipelineOptions,
) -> Result<HandlingStep> {
    let mover = before
        .module(action.mover)
        .ok_or(LatticeError::UnknownModule(action.mover))?;
    let src = mover.pos;
    let dest = after.module(action.mover).expect("applied action keeps ids").pos;
    let geo = &opts.arm;
    let reach = geo.a2 + geo.a3;
    // The wrist sits d5 above a downward tool; the shoulder d1 above the base.
    let wrist_ok = |p: Vector3<f64>| (p + Vector3::z() * (geo.d5 - geo.d1)).norm() <= reach - 1e-9;

    let mut candidates = Vec::new();
    for &b in graph.vertices() {
        if b.module() == action.mover || !next_graph.contains(b) {
            continue;
        }
        let pose = interface_pose(before, b).ok_or(SurfaceError::UnknownInterface(b))?;
        let n = pose.normal;
        if before.is_occupied(step_cell(src, n)) || after.is_occupied(step_cell(dest, n)) {
            continue;
        }
        let frame = BaseFrame::on(&pose);
        let half = v3(n.unit()) * 0.5;
        if !wrist_ok(frame.to_arm(cell_f(src) + half)) || !wrist_ok(frame.to_arm(cell_f(dest) + half)) {
            continue;
        }
        match astar(graph, current_base, b, before) {
            Ok(path) => candidates.push((path.cost, b, path)),
            Err(RouteError::Unreachable(..)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    candidates.sort_by_key(|(cost, b, _)| (*cost, *b));
    for (_, b, path) in candidates {
        match build_motion(before, action, b, opts) {
            Ok((grasp, pick, place, trajectories)) => {
                return Ok(HandlingStep {
                    action: *action,
                    base: b,
                    arm_walk: path,
                    grasp,
                    pick,
                    place,
                    trajectories,
                })
            }
            Err(OrchestratorError::Kinematics(_) | OrchestratorError::Route(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(OrchestratorError::UnreachablePick {
        step: index,
        action: *action,
    })
}

/// Appends `seg` (local times from 0) to `acc`, dropping its first sample,
/// which duplicates the last one already there.
fn append(acc: &mut Vec<(f64, JointVector)>, seg: Vec<(f64, JointVector)>) -> Result<()> {
    let Some(&(t0, last)) = acc.last() else {
        acc.extend(seg);
        return Ok(());
    };
    let gap = seg.first().map_or(0.0, |s| s.1.max_abs_diff(&last));
    if gap > PHASE_TOL {
        return Err(OrchestratorError::Continuity { step: usize::MAX, gap });
    }
    acc.extend(seg.into_iter().skip(1).map(|(t, q)| (t0 + t, q)));
    Ok(())
}

fn polyline_at(points: &[Vector3<f64>], s: f64) -> Vector3<f64> {
    let lengths: Vec<f64> = points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = lengths.iter().sum();
    if total == 0.0 {
        return points[0];
    }
    let mut rest = s.clamp(0.0, 1.0) * total;
    for (w, len) in points.windows(2).zip(&lengths) {
        if rest <= *len && *len > 0.0 {
            return w[0].lerp(&w[1], rest / len);
        }
        rest -= len;
    }
    *points.last().expect("non-empty polyline")
}

type Motion = (InterfaceId, ApproachPlan, ApproachPlan, Vec<PhaseTrajectory>);

fn build_motion(before: &Configuration, action: &Action, base: InterfaceId, opts: &PipelineOptions) -> Result<Motion> {
    let geo = &opts.arm;
    let (t_seg, dt, c) = (opts.segment_time, opts.dt, opts.clearance);
    let mover = before.module(action.mover).expect("mover exists");
    let anchor = before
        .module(action.anchor)
        .ok_or(LatticeError::UnknownModule(action.anchor))?;
    let base_pose = interface_pose(before, base).ok_or(SurfaceError::UnknownInterface(base))?;
    let n = base_pose.normal;
    let k = anchor.orient.direction(action.face);
    let (nv, kv) = (v3(n.unit()), v3(k.unit()));
    let src = cell_f(mover.pos);

    let grasp = InterfaceId::new(mover.id, mover.orient.face_toward(n).expect("bijective orientation"));
    let grasp_pose = interface_pose(before, grasp).ok_or(SurfaceError::UnknownInterface(grasp))?;
    let pick = approach_waypoints(&base_pose, &grasp_pose, c)?;
    let dock_face = mover.orient.face_toward(k.opposite()).expect("bijective orientation");
    let place_source = InterfacePose {
        id: InterfaceId::new(mover.id, dock_face),
        center: arr(src - kv * 0.5),
        normal: n,
    };
    let anchor_face = InterfaceId::new(anchor.id, action.face);
    let anchor_pose = interface_pose(before, anchor_face).ok_or(SurfaceError::UnknownInterface(anchor_face))?;
    let place = approach_waypoints(&place_source, &anchor_pose, c)?;

    let frame = BaseFrame::on(&base_pose);
    let g_arm = frame.to_arm(v3(grasp_pose.center));
    // Tool down, rolled so θ5 starts at zero on the grasp's base angle.
    let (s1, c1) = g_arm.y.atan2(g_arm.x).sin_cos();
    let rot = Matrix3::new(-c1, -s1, 0.0, -s1, c1, 0.0, 0.0, 0.0, -1.0);
    let pose_at = |p: Vector3<f64>| EndPose::new(rot, frame.to_arm(p));
    let ik = |p: Vector3<f64>, near: &JointVector| -> Result<JointVector> {
        let sols = inverse_kinematics_near(&pose_at(p), geo, near)?;
        Ok(select_branch(&sols, near)?)
    };
    // Rest-to-rest quintic, slowed so no sample step exceeds half the jump
    // guard (peak quintic speed is 1.875·Δ/T).
    let joint_move_in = |q0: &JointVector, q1: &JointVector, t_min: f64| -> Result<Vec<(f64, JointVector)>> {
        let t = t_min.max(1.875 * q0.max_abs_diff(q1) * dt / (0.5 * MAX_JOINT_STEP));
        Ok(joint_trajectory(q0, q1, t, dt, geo)?
            .into_iter()
            .map(|s| (s.t, s.q))
            .collect())
    };
    let joint_move = |q0: &JointVector, q1: &JointVector| joint_move_in(q0, q1, t_seg);
    let line = |a: Vector3<f64>, b: Vector3<f64>, q: &JointVector| -> Result<Vec<(f64, JointVector)>> {
        Ok(cartesian_line_trajectory(&pose_at(a), &pose_at(b), t_seg, dt, q, geo)?)
    };
    let last = |v: &[(f64, JointVector)]| v.last().expect("non-empty trajectory").1;

    // Pick: joint move to the pre-grasp point, then straight down.
    let pre = v3(pick.p2);
    let grasp_pt = v3(pick.dock.point);
    let q_pre = ik(pre, &HOME)?;
    let mut pick_s = joint_move(&HOME, &q_pre)?;
    append(&mut pick_s, line(pre, grasp_pt, &q_pre)?)?;

    // Place: the tool rides at a fixed offset from the docking face point.
    let offset = kv * 0.5 + nv * 0.5;
    let tool = |p: [f64; 3]| v3(p) + offset;
    let arc: Vec<Vector3<f64>> = place.arc.iter().map(|&p| tool(p)).collect();
    let (p1, p2, docked) = (arc[0], *arc.last().expect("arc"), tool(place.dock.point));
    let mut place_s = line(grasp_pt, p1, &last(&pick_s))?;
    let q = last(&place_s);
    let sweep = match cartesian_path_trajectory(|s| pose_at(polyline_at(&arc, s)), t_seg, dt, &q, geo) {
        Ok(s) => s,
        // No continuous Cartesian branch (e.g. the wrist would fold past a
        // limit over the base axis): joint-space quintics between the via
        // points instead.
        Err(_) => {
            let t_via = (t_seg / (arc.len() - 1) as f64).max(dt);
            let mut acc = vec![(0.0, q)];
            let mut cur = q;
            for &p in &arc[1..] {
                let next = ik(p, &cur)?;
                append(&mut acc, joint_move_in(&cur, &next, t_via)?)?;
                cur = next;
            }
            acc
        }
    };
    append(&mut place_s, sweep)?;
    let dock_s = line(p2, docked, &last(&place_s))?;
    append(&mut place_s, dock_s)?;

    // Return: back off along the grasp normal, then home.
    let mut ret_s = line(docked, docked + nv * c, &last(&place_s))?;
    let home_s = joint_move(&last(&ret_s), &HOME)?;
    append(&mut ret_s, home_s)?;

    let trajectories = vec![
        PhaseTrajectory {
            phase: Phase::Pick,
            samples: pick_s,
        },
        PhaseTrajectory {
            phase: Phase::Place,
            samples: place_s,
        },
        PhaseTrajectory {
            phase: Phase::Return,
            samples: ret_s,
        },
    ];
    for w in trajectories.windows(2) {
        let gap = last(&w[0].samples).max_abs_diff(&w[1].samples[0].1);
        if gap > PHASE_TOL {
            return Err(OrchestratorError::Continuity { step: usize::MAX, gap });
        }
    }
    Ok((grasp, pick, place, trajectories))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub generator: String,
    pub seed: u64,
    pub plan_source: PlanSource,
    pub arm: ArmGeometry,
    pub initial_base: u32,
    pub start: Configuration,
    pub target: Configuration,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleFrame {
    pub id: ModuleId,
    /// World position of the module center.
    pub pos: [f64; 3],
    pub orient: Orientation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub joints: [f64; 5],
    pub base: u32,
    pub phase: Phase,
    /// Index of the lattice configuration in effect: 0 is the start, `i + 1`
    /// follows action `i`.
    pub state: usize,
    pub modules: Vec<ModuleFrame>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub frames: Vec<Frame>,
}

fn module_frames(config: &Configuration) -> Vec<ModuleFrame> {
    config
        .modules()
        .iter()
        .map(|m| ModuleFrame {
            id: m.id,
            pos: arr(cell_f(m.pos)),
            orient: m.orient,
        })
        .collect()
}

/// Kinematic replay of `recon` from `start`. The carried module follows the
/// tool during the place phase.
pub fn execute_plan(
    start: &Configuration,
    target: &Configuration,
    recon: &Reconfiguration,
    seed: u64,
    opts: &PipelineOptions,
) -> Result<Trace> {
    let header = TraceHeader {
        format_version: FORMAT_VERSION,
        generator: concat!("reconfig ", env!("CARGO_PKG_VERSION")).to_string(),
        seed,
        plan_source: recon.plan.source,
        arm: opts.arm,
        initial_base: recon.initial_base.0,
        start: start.clone(),
        target: target.clone(),
        actions: recon.steps.iter().map(|s| s.action).collect(),
    };
    let mut frames = vec![Frame {
        t: 0.0,
        joints: HOME.0,
        base: recon.initial_base.0,
        phase: Phase::Idle,
        state: 0,
        modules: module_frames(start),
    }];
    let mut config = start.clone();
    for (i, step) in recon.steps.iter().enumerate() {
        let after = apply_action(&config, &step.action)?;
        let mut t = frames.last().expect("frames").t;
        let mut joints = JointVector(frames.last().expect("frames").joints);
        if step.arm_walk.nodes.first().map(|b| b.0) != Some(frames.last().expect("frames").base) {
            return Err(OrchestratorError::InvalidTrace(format!(
                "step {i}: walk starts off the current base"
            )));
        }
        for hop in step.arm_walk.nodes.iter().skip(1) {
            t += opts.hop_time;
            frames.push(Frame {
                t,
                joints: joints.0,
                base: hop.0,
                phase: Phase::Walk,
                state: i,
                modules: module_frames(&config),
            });
        }
        let base_pose = interface_pose(&config, step.base).ok_or(SurfaceError::UnknownInterface(step.base))?;
        let frame = BaseFrame::on(&base_pose);
        let half_n = v3(base_pose.normal.unit()) * 0.5;
        for traj in &step.trajectories {
            let Some(&(_, q0)) = traj.samples.first() else {
                continue;
            };
            let gap = q0.max_abs_diff(&joints);
            if gap > CONTINUITY_TOL {
                return Err(OrchestratorError::Continuity { step: i, gap });
            }
            let t0 = t;
            for &(lt, q) in traj.samples.iter().skip(1) {
                t = t0 + lt;
                let (state, mut modules) = match traj.phase {
                    Phase::Return => (i + 1, module_frames(&after)),
                    _ => (i, module_frames(&config)),
                };
                if traj.phase == Phase::Place {
                    let tip = frame.to_world(forward_kinematics(&q, &opts.arm).translation);
                    let m = modules.iter_mut().find(|m| m.id == step.action.mover).expect("mover");
                    m.pos = arr(tip - half_n);
                }
                frames.push(Frame {
                    t,
                    joints: q.0,
                    base: step.base.0,
                    phase: traj.phase,
                    state,
                    modules,
                });
                joints = q;
            }
        }
        config = after;
    }
    let trace = Trace { header, frames };
    trace.validate()?;
    Ok(trace)
}

impl Trace {
    /// Lattice configurations by state index.
    pub fn states(&self) -> Result<Vec<Configuration>> {
        let mut out = vec![self.header.start.clone()];
        for a in &self.header.actions {
            let next = apply_action(out.last().expect("non-empty"), a)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Strictly increasing time, valid lattice state per frame, module
    /// positions on their cells outside transport, continuous joints and a
    /// final state equal to the target.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OrchestratorError::InvalidTrace(msg));
        if self.header.format_version != FORMAT_VERSION {
            return bad(format!("format_version {}", self.header.format_version));
        }
        let states = self.states()?;
        for s in &states {
            validate(s)?;
        }
        let Some(last) = self.frames.last() else {
            return bad("no frames".into());
        };
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].t.partial_cmp(&w[0].t) != Some(std::cmp::Ordering::Greater) {
                return bad(format!("time not increasing at frame {}", i + 1));
            }
            let gap = JointVector(w[1].joints).max_abs_diff(&JointVector(w[0].joints));
            if w[1].base == w[0].base && gap > crate::kinematics::MAX_JOINT_STEP {
                return bad(format!("joint jump {gap} at frame {}", i + 1));
            }
        }
        for (i, f) in self.frames.iter().enumerate() {
            let Some(state) = states.get(f.state) else {
                return bad(format!("frame {i} refers to state {}", f.state));
            };
            if f.modules.len() != state.len() {
                return bad(format!("frame {i} has {} modules", f.modules.len()));
            }
            for m in &f.modules {
                let Some(cell) = state.module(m.id) else {
                    return bad(format!("frame {i} has unknown module {}", m.id));
                };
                let carried =
                    f.phase == Phase::Place && self.header.actions.get(f.state).is_some_and(|a| a.mover == m.id);
                if !carried && m.pos != arr(cell_f(cell.pos)) {
                    return bad(format!("frame {i}: module {} off its cell", m.id));
                }
            }
        }
        if last.state != states.len() - 1 {
            return bad("trace ends before the last action".into());
        }
        if mismatch_count(states.last().expect("non-empty"), &self.header.target)? != 0 {
            return bad("final configuration differs from the target".into());
        }
        Ok(())
    }

    pub fn final_configuration(&self) -> Result<Configuration> {
        Ok(self.states()?.pop().expect("non-empty"))
    }
}

/// JSON lines: the header, then one frame per line.
pub fn write_trace<W: Write>(w: &mut W, trace: &Trace) -> Result<()> {
    serde_json::to_writer(&mut *w, &trace.header)?;
    w.write_all(b"\n")?;
    for f in &trace.frames {
        serde_json::to_writer(&mut *w, f)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Trace> {
    let mut lines = r.lines();
    let header: TraceHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(OrchestratorError::InvalidTrace("empty file".into())),
    };
    let mut frames = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            frames.push(serde_json::from_str(&line)?);
        }
    }
    Ok(Trace { header, frames })
}

pub fn export_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace(&mut w, trace)?;
    w.flush()?;
    Ok(())
}

pub fn import_trace(path: impl AsRef<Path>) -> Result<Trace> {
    read_trace(BufReader::new(File::open(path)?))
}

/// Wavefront OBJ with one unit cube (8 vertices, 12 triangles) per module.
pub fn scene_mesh(config: &Configuration) -> String {
    const TRIS: [[usize; 3]; 12] = [
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    let mut out = String::new();
    for (i, m) in config.modules().iter().enumerate() {
        writeln!(out, "o module_{}", m.id).expect("write to string");
        let r = m.orient.matrix();
        for corner in 0..8 {
            let body = [
                (corner & 1) as f64 - 0.5,
                ((corner >> 1) & 1) as f64 - 0.5,
                ((corner >> 2) & 1) as f64 - 0.5,
            ];
            let p: [f64; 3] = std::array::from_fn(|row| {
                f64::from(m.pos[row]) + (0..3).map(|col| f64::from(r[row][col]) * body[col]).sum::<f64>()
            });
            writeln!(out, "v {} {} {}", p[0], p[1], p[2]).expect("write to string");
        }
        for tri in TRIS {
            let [a, b, c] = tri.map(|v| i * 8 + v + 1);
            writeln!(out, "f {a} {b} {c}").expect("write to string");
        }
    }
    out
}

/// Scene export: the configuration JSON, plus an OBJ mesh when `mesh` is
/// given.
pub fn export_scene(config: &Configuration, path: impl AsRef<Path>, mesh: Option<&Path>) -> Result<()> {
    std::fs::write(path, config.to_json() + "\n")?;
    if let Some(m) = mesh {
        std::fs::write(m, scene_mesh(config))?;
    }
    Ok(())
}
