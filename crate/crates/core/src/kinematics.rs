//! Five-joint assembly arm: forward/inverse kinematics and quintic
//! trajectory generation.
//!
//! Chain (base frame, lengths in lattice units `L`):
//!
//! ```text
//! T = Rz(θ1) · Tz(d1) · Ry(θ2) · Tz(a2) · Ry(θ3) · Tz(a3) · Ry(θ4) · Tz(d5) · Rz(θ5)
//! ```
//!
//! Yaw at the base, three parallel pitch joints, roll about the tool axis.
//! The zero pose points straight up with the tool at `(0, 0, d1+a2+a3+d5)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("joint {joint} = {value} outside its limits{}", at.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    LimitViolation { joint: usize, value: f64, at: Option<f64> },
    #[error("pose rotation is not orthonormal")]
    NotOrthonormal,
    #[error("no IK solutions to choose from")]
    EmptySolutions,
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("sample step must satisfy 0 < dt <= T, got {0}")]
    BadStep(f64),
    #[error("pose unreachable at t = {0}")]
    Unreachable(f64),
    #[error("joint jump of {jump} rad at t = {t}")]
    Discontinuity { t: f64, jump: f64 },
}

/// Largest allowed joint step between consecutive Cartesian samples.
pub const MAX_JOINT_STEP: f64 = 0.2;
pub const DEFAULT_SEGMENT_TIME: f64 = 2.0;
pub const DEFAULT_DT: f64 = 0.02;
const POSE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    pub l: f64,
    pub d1: f64,
    pub a2: f64,
    pub a3: f64,
    pub d5: f64,
    /// Symmetric limit per joint: `|θi| <= limits[i]`.
    pub limits: [f64; 5],
}

impl Default for ArmGeometry {
    fn default() -> Self {
        ArmGeometry::with_unit(1.0)
    }
}

impl ArmGeometry {
    /// Link lengths 1, 1.5, 1.5 and 1 module lengths.
    pub fn with_unit(l: f64) -> ArmGeometry {
        ArmGeometry {
            l,
            d1: l,
            a2: 1.5 * l,
            a3: 1.5 * l,
            d5: l,
            limits: [PI; 5],
        }
    }

    pub fn reach(&self) -> f64 {
        self.d1 + self.a2 + self.a3 + self.d5
    }

    pub fn check_limits(&self, q: &JointVector) -> Result<(), KinematicsError> {
        for (i, (&v, &lim)) in q.0.iter().zip(&self.limits).enumerate() {
            if v.is_nan() || v.abs() > lim {
                return Err(KinematicsError::LimitViolation {
                    joint: i + 1,
                    value: v,
                    at: None,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub [f64; 5]);

impl JointVector {
    pub const ZERO: JointVector = JointVector([0.0; 5]);

    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Homogeneous end-effector pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl EndPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> EndPose {
        EndPose { rotation, translation }
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).abs().max() < tol && (r.determinant() - 1.0).abs() < tol
    }

    /// Largest element-wise difference of the 4×4 matrices.
    pub fn max_diff(&self, other: &EndPose) -> f64 {
        (self.matrix() - other.matrix()).abs().max()
    }

    /// Tool axis (third rotation column).
    pub fn tool_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }
}

fn rot_z(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_y(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Tool pose for joint angles `q`. Limits are not checked here; see
/// [`forward_kinematics_checked`].
pub fn forward_kinematics(q: &JointVector, geo: &ArmGeometry) -> EndPose {
    let [t1, t2, t3, t4, t5] = q.0;
    let psi = t2 + t3;
    let chi = psi + t4;
    let r = geo.a2 * t2.sin() + geo.a3 * psi.sin() + geo.d5 * chi.sin();
    let z = geo.d1 + geo.a2 * t2.cos() + geo.a3 * psi.cos() + geo.d5 * chi.cos();
    let (s1, c1) = t1.sin_cos();
    EndPose {
        rotation: rot_z(t1) * rot_y(chi) * rot_z(t5),
        translation: Vector3::new(r * c1, r * s1, z),
    }
}

pub fn forward_kinematics_checked(q: &JointVector, geo: &ArmGeometry) -> Result<EndPose, KinematicsError> {
    geo.check_limits(q)?;
    Ok(forward_kinematics(q, geo))
}

/// Wraps into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// All closed-form joint solutions reaching `pose` (up to four: base
/// half-turn × elbow sign). Every returned branch is verified through FK.
pub fn inverse_kinematics(pose: &EndPose, geo: &ArmGeometry) -> Result<Vec<JointVector>, KinematicsError> {
    ik_with_free_base(pose, geo, 0.0)
}

/// Like [`inverse_kinematics`], but when the wrist and tool axis are both
/// on the base axis (so `θ1` is free) the base keeps `current`'s angle.
pub fn inverse_kinematics_near(
    pose: &EndPose,
    geo: &ArmGeometry,
    current: &JointVector,
) -> Result<Vec<JointVector>, KinematicsError> {
    ik_with_free_base(pose, geo, current.0[0])
}

fn ik_with_free_base(pose: &EndPose, geo: &ArmGeometry, free_base: f64) -> Result<Vec<JointVector>, KinematicsError> {
    if !pose.is_orthonormal(1e-9) {
        return Err(KinematicsError::NotOrthonormal);
    }
    let p = pose.translation;
    let zt = pose.tool_axis();
    let w = p - zt * geo.d5;
    let eps = 1e-12 * geo.l.max(1.0);

    let base = if w.xy().norm() > eps {
        w.y.atan2(w.x)
    } else if zt.xy().norm() > 1e-12 {
        zt.y.atan2(zt.x)
    } else {
        free_base
    };
    let mut out: Vec<JointVector> = Vec::new();
    for t1 in [base, base + PI] {
        let (s1, c1) = t1.sin_cos();
        // Position and tool axis must lie in the arm's vertical plane.
        let off_plane = (-s1 * w.x + c1 * w.y).abs().max((-s1 * zt.x + c1 * zt.y).abs());
        if off_plane > POSE_TOL {
            continue;
        }
        let rw = c1 * w.x + s1 * w.y;
        let h = w.z - geo.d1;
        let chi = (c1 * zt.x + s1 * zt.y).atan2(zt.z);
        let d = (rw * rw + h * h - geo.a2 * geo.a2 - geo.a3 * geo.a3) / (2.0 * geo.a2 * geo.a3);
        if d.abs() > 1.0 + 1e-9 {
            continue;
        }
        let acos = d.clamp(-1.0, 1.0).acos();
        for t3 in [acos, -acos] {
            let t2 = rw.atan2(h) - (geo.a3 * t3.sin()).atan2(geo.a2 + geo.a3 * t3.cos());
            let t4 = chi - t2 - t3;
            let m = rot_y(-chi) * rot_z(-t1) * pose.rotation;
            let t5 = m[(1, 0)].atan2(m[(0, 0)]);
            let q = JointVector([t1, t2, t3, t4, t5].map(wrap_angle));
            if geo.check_limits(&q).is_err() {
                continue;
            }
            if forward_kinematics(&q, geo).max_diff(pose) >= POSE_TOL * geo.l {
                continue;
            }
            if out.iter().all(|o| o.max_abs_diff(&q) > 1e-9) {
                out.push(q);
            }
        }
    }
    Ok(out)
}

/// The solution nearest `current` in max-norm; ties go to the
/// lexicographically smaller joint vector.
pub fn select_branch(solutions: &[JointVector], current: &JointVector) -> Result<JointVector, KinematicsError> {
    solutions
        .iter()
        .copied()
        .min_by(|a, b| {
            a.max_abs_diff(current)
                .total_cmp(&b.max_abs_diff(current))
                .then_with(|| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        })
        .ok_or(KinematicsError::EmptySolutions)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuinticSegment {
    pub coeffs: [f64; 6],
    pub duration: f64,
}

impl QuinticSegment {
    /// Position, velocity and acceleration at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let a = &self.coeffs;
        let pos = a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * (a[4] + t * a[5]))));
        let vel = a[1] + t * (2.0 * a[2] + t * (3.0 * a[3] + t * (4.0 * a[4] + t * 5.0 * a[5])));
        let acc = 2.0 * a[2] + t * (6.0 * a[3] + t * (12.0 * a[4] + t * 20.0 * a[5]));
        (pos, vel, acc)
    }
}

/// Boundary state of one joint: angle, rate, acceleration.
pub type Boundary = (f64, f64, f64);

pub fn quintic_coeffs(start: Boundary, end: Boundary, duration: f64) -> Result<QuinticSegment, KinematicsError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(KinematicsError::NonPositiveDuration(duration));
    }
    let (x0, v0, a0) = start;
    let (x1, v1, a1) = end;
    let t = duration;
    let h = x1 - x0;
    let (t2, t3) = (t * t, t * t * t);
    let coeffs = [
        x0,
        v0,
        a0 / 2.0,
        (20.0 * h - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3),
        (-30.0 * h + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t3 * t),
        (12.0 * h - 6.0 * (v1 + v0) * t + (a1 - a0) * t2) / (2.0 * t3 * t2),
    ];
    Ok(QuinticSegment { coeffs, duration })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: JointVector,
    pub qd: [f64; 5],
}

fn sample_times(duration: f64, dt: f64) -> Result<Vec<f64>, KinematicsError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(KinematicsError::NonPositiveDuration(duration));
    }
    if !(dt > 0.0 && dt <= duration) {
        return Err(KinematicsError::BadStep(dt));
    }
    let n = (duration / dt - 1e-9).ceil() as usize;
    let mut ts: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    ts.push(duration);
    Ok(ts)
}

/// Rest-to-rest quintic per joint, sampled every `dt` with the end time
/// included exactly.
pub fn joint_trajectory(
    q0: &JointVector,
    q1: &JointVector,
    duration: f64,
    dt: f64,
    geo: &ArmGeometry,
) -> Result<Vec<TrajectorySample>, KinematicsError> {
    let times = sample_times(duration, dt)?;
    let segs: Vec<QuinticSegment> = (0..5)
        .map(|j| quintic_coeffs((q0.0[j], 0.0, 0.0), (q1.0[j], 0.0, 0.0), duration))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let mut q = [0.0; 5];
        let mut qd = [0.0; 5];
        for j in 0..5 {
            let (p, v, _) = segs[j].eval(t);
            q[j] = p;
            qd[j] = v;
        }
        if i + 1 == times.len() {
            q = q1.0;
        }
        let q = JointVector(q);
        geo.check_limits(&q).map_err(|e| match e {
            KinematicsError::LimitViolation { joint, value, .. } => KinematicsError::LimitViolation {
                joint,
                value,
                at: Some(t),
            },
            other => other,
        })?;
        out.push(TrajectorySample { t, q, qd });
    }
    Ok(out)
}

/// Quintic time scaling `s(τ) = 10τ³ − 15τ⁴ + 6τ⁵` on `[0, 1]`.
pub fn time_scaling(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Pose on the straight segment between `a` and `b` at path parameter `s`.
pub fn interpolate_pose(a: &EndPose, b: &EndPose, s: f64) -> EndPose {
    // Closed-form conversion; the iterative one stalls on half turns.
    let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(a.rotation));
    let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(b.rotation));
    let q = qa.try_slerp(&qb, s, 1e-12).unwrap_or(qa);
    EndPose {
        rotation: q.to_rotation_matrix().into_inner(),
        translation: a.translation.lerp(&b.translation, s),
    }
}

fn track_path(
    path: &impl Fn(f64) -> EndPose,
    duration: f64,
    dt: f64,
    current: &JointVector,
    geo: &ArmGeometry,
) -> Result<Vec<(f64, JointVector)>, KinematicsError> {
    let times = sample_times(duration, dt)?;
    let mut prev = *current;
    let mut out = Vec::with_capacity(times.len());
    for t in times {
        let target = path(time_scaling(t / duration));
        let sols = inverse_kinematics_near(&target, geo, &prev)?;
        if sols.is_empty() {
            return Err(KinematicsError::Unreachable(t));
        }
        let q = select_branch(&sols, &prev)?;
        let jump = q.max_abs_diff(&prev);
        if jump >= MAX_JOINT_STEP {
            return Err(KinematicsError::Discontinuity { t, jump });
        }
        out.push((t, q));
        prev = q;
    }
    Ok(out)
}

/// Tracks `path(s)`, `s ∈ [0, 1]`, with quintic time scaling, choosing at
/// each sample the IK branch nearest the previous one (starting from
/// `current`). A failing run is retried once at half the step.
pub fn cartesian_path_trajectory(
    path: impl Fn(f64) -> EndPose,
    duration: f64,
    dt: f64,
    current: &JointVector,
    geo: &ArmGeometry,
) -> Result<Vec<(f64, JointVector)>, KinematicsError> {
    match track_path(&path, duration, dt, current, geo) {
        Ok(samples) => Ok(samples),
        Err(KinematicsError::Unreachable(_) | KinematicsError::Discontinuity { .. }) => {
            track_path(&path, duration, dt / 2.0, current, geo)
        }
        Err(e) => Err(e),
    }
}

/// Straight-line Cartesian motion with slerped orientation.
pub fn cartesian_line_trajectory(
    pose0: &EndPose,
    pose1: &EndPose,
    duration: f64,
    dt: f64,
    current: &JointVector,
    geo: &ArmGeometry,
) -> Result<Vec<(f64, JointVector)>, KinematicsError> {
    cartesian_path_trajectory(|s| interpolate_pose(pose0, pose1, s), duration, dt, current, geo)
}

/// CSV rows `t,theta1,..,theta5`.
pub fn trajectory_csv<'a>(samples: impl IntoIterator<Item = (f64, &'a JointVector)>) -> String {
    let mut out = String::from("t,theta1,theta2,theta3,theta4,theta5\n");
    for (t, q) in samples {
        write!(out, "{t}").expect("write to string");
        for v in q.0 {
            write!(out, ",{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn geo() -> ArmGeometry {
        ArmGeometry::default()
    }

    #[test]
    fn zero_pose() {
        let p = forward_kinematics(&JointVector::ZERO, &geo());
        assert_eq!(p.translation, Vector3::new(0.0, 0.0, 5.0));
        assert_eq!(p.rotation, Matrix3::identity());
    }

    #[test]
    fn yaw_only() {
        let p = forward_kinematics(&JointVector([FRAC_PI_2, 0.0, 0.0, 0.0, 0.0]), &geo());
        assert!((p.translation - Vector3::new(0.0, 0.0, 5.0)).norm() < 1e-15);
        assert!((p.rotation - rot_z(FRAC_PI_2)).abs().max() < 1e-15);
    }

    #[test]
    fn limits_enforced() {
        let g = ArmGeometry {
            limits: [1.0; 5],
            ..geo()
        };
        let err = forward_kinematics_checked(&JointVector([0.0, 0.0, 1.5, 0.0, 0.0]), &g).unwrap_err();
        assert!(matches!(err, KinematicsError::LimitViolation { joint: 3, .. }));
    }

    #[test]
    fn rotation_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = JointVector(std::array::from_fn(|_| rng.gen_range(-PI..PI)));
            assert!(forward_kinematics(&q, &geo()).is_orthonormal(1e-9));
        }
    }

    #[test]
    fn ik_at_zero_contains_zero() {
        let sols = inverse_kinematics(&forward_kinematics(&JointVector::ZERO, &geo()), &geo()).unwrap();
        assert!(
            sols.iter().any(|q| q.max_abs_diff(&JointVector::ZERO) < 1e-9),
            "{sols:?}"
        );
    }

    #[test]
    fn ik_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let q = JointVector(std::array::from_fn(|_| rng.gen_range(-3.0..3.0)));
            let pose = forward_kinematics(&q, &geo());
            let sols = inverse_kinematics(&pose, &geo()).unwrap();
            assert!(!sols.is_empty(), "{q:?}");
            for s in &sols {
                assert!(forward_kinematics(s, &geo()).max_diff(&pose) < 1e-6);
            }
        }
    }

    #[test]
    fn free_base_follows_current() {
        // Arm straight up: any θ1 works, with θ5 absorbing the difference.
        let pose = forward_kinematics(&JointVector::ZERO, &geo());
        let current = JointVector([0.7, 0.0, 0.0, 0.0, 0.0]);
        let sols = inverse_kinematics_near(&pose, &geo(), &current).unwrap();
        let best = select_branch(&sols, &current).unwrap();
        assert!(
            (best.0[0] - 0.7).abs() < 1e-12 && (best.0[4] + 0.7).abs() < 1e-12,
            "{best:?}"
        );
        assert!(forward_kinematics(&best, &geo()).max_diff(&pose) < 1e-12);
    }

    #[test]
    fn interpolation_keeps_half_turn_rotations() {
        let down = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        let a = EndPose::new(down, Vector3::new(1.0, 0.0, 0.5));
        let b = EndPose::new(down, Vector3::new(1.0, 0.0, 0.0));
        for s in [0.0, 0.3, 1.0] {
            let p = interpolate_pose(&a, &b, s);
            assert!((p.rotation - down).abs().max() < 1e-15, "{}", p.rotation);
        }
    }

    #[test]
    fn ik_out_of_reach_and_bad_pose() {
        let far = EndPose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 100.0));
        assert_eq!(inverse_kinematics(&far, &geo()), Ok(vec![]));
        let skew = EndPose::new(Matrix3::identity() * 2.0, Vector3::zeros());
        assert_eq!(inverse_kinematics(&skew, &geo()), Err(KinematicsError::NotOrthonormal));
    }

    #[test]
    fn branch_selection() {
        let a = JointVector([0.0, 0.5, 1.0, 0.0, 0.0]);
        let b = JointVector([0.0, 1.5, -1.0, 0.0, 0.0]);
        assert_eq!(select_branch(&[a], &b), Ok(a));
        assert_eq!(select_branch(&[a, b], &b), Ok(b));
        let near_b = JointVector([0.0, 1.4, -0.8, 0.0, 0.0]);
        assert_eq!(select_branch(&[a, b], &near_b), Ok(b));
        // Equidistant: lexicographically smaller wins.
        let mid = JointVector([0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(select_branch(&[b, a], &mid), Ok(a));
        assert_eq!(select_branch(&[], &mid), Err(KinematicsError::EmptySolutions));
    }

    #[test]
    fn rest_to_rest_coefficients() {
        let (d, t) = (0.7, 2.0);
        let s = quintic_coeffs((0.0, 0.0, 0.0), (d, 0.0, 0.0), t).unwrap();
        let expected = [
            0.0,
            0.0,
            0.0,
            10.0 * d / t.powi(3),
            -15.0 * d / t.powi(4),
            6.0 * d / t.powi(5),
        ];
        for (a, b) in s.coeffs.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let flat = quintic_coeffs((0.3, 0.0, 0.0), (0.3, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(flat.coeffs, [0.3, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            quintic_coeffs((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), 0.0),
            Err(KinematicsError::NonPositiveDuration(0.0))
        );
    }

    #[test]
    fn joint_trajectory_shape() {
        let q0 = JointVector([0.0, 0.2, 0.4, -0.3, 0.1]);
        let q1 = JointVector([0.5, -0.2, 0.9, 0.3, -0.4]);
        let samples = joint_trajectory(&q0, &q1, 2.0, 0.02, &geo()).unwrap();
        assert_eq!(samples.len(), 101);
        assert_eq!(samples[0].q, q0);
        assert_eq!(samples.last().unwrap().q, q1);
        assert_eq!(samples.last().unwrap().t, 2.0);
        assert!(samples[0].qd.iter().all(|v| v.abs() < 1e-15));
        assert!(samples.last().unwrap().qd.iter().all(|v| v.abs() < 1e-12));
        let peak = samples
            .iter()
            .max_by(|a, b| a.qd[0].abs().total_cmp(&b.qd[0].abs()))
            .unwrap();
        assert!((peak.t - 1.0).abs() < 1e-9);
        let same = joint_trajectory(&q0, &q0, 1.0, 0.1, &geo()).unwrap();
        assert!(same.iter().all(|s| s.q == q0));
    }

    #[test]
    fn joint_trajectory_errors() {
        let g = ArmGeometry {
            limits: [1.0; 5],
            ..geo()
        };
        let err = joint_trajectory(
            &JointVector::ZERO,
            &JointVector([0.0, 0.0, 0.0, 0.0, 1.0]),
            1.0,
            2.0,
            &g,
        );
        assert_eq!(err, Err(KinematicsError::BadStep(2.0)));
        // Joint 5 crosses its limit partway through.
        let over = joint_trajectory(
            &JointVector::ZERO,
            &JointVector([0.0, 0.0, 0.0, 0.0, 1.2]),
            1.0,
            0.1,
            &g,
        );
        assert!(matches!(
            over,
            Err(KinematicsError::LimitViolation {
                joint: 5,
                at: Some(_),
                ..
            })
        ));
    }

    #[test]
    fn cartesian_line_midpoint_and_constant() {
        let g = geo();
        let q0 = JointVector([0.3, 0.4, 0.8, 0.9, 0.2]);
        let q1 = JointVector([0.3, 0.6, 0.5, 1.1, 0.2]);
        let p0 = forward_kinematics(&q0, &g);
        let p1 = forward_kinematics(&q1, &g);
        let samples = cartesian_line_trajectory(&p0, &p1, 2.0, 0.02, &q0, &g).unwrap();
        let (t_mid, q_mid) = samples[50];
        assert_eq!(t_mid, 1.0);
        let mid = forward_kinematics(&q_mid, &g).translation;
        assert!((mid - (p0.translation + p1.translation) / 2.0).norm() < 1e-9);
        let still = cartesian_line_trajectory(&p0, &p0, 1.0, 0.1, &q0, &g).unwrap();
        assert!(still.iter().all(|(_, q)| q.max_abs_diff(&q0) < 1e-9));
    }

    #[test]
    fn csv_dump() {
        let csv = trajectory_csv([(0.0, &JointVector::ZERO)]);
        assert_eq!(csv, "t,theta1,theta2,theta3,theta4,theta5\n0,0,0,0,0,0\n");
    }
}
