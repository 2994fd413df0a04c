//! Ground contacts, smoothed sliding friction and the quasi-static force balance.
//!
//! The body is treated as massless: at every instant the friction forces at
//! the contacts must cancel, in force and in moment about the vertical axis.
//! The unknown is the planar rigid velocity that, superposed on the shape
//! change, achieves that balance.

use nalgebra::{Matrix3, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{BodyShape, PlanarPose, RobotSpec};

/// Maximum Newton iterations per solve.
pub const MAX_ITERATIONS: usize = 100;
/// Residual tolerance relative to `μ·M·g` (and `μ·M·g·L` for the moment).
pub const RELATIVE_TOLERANCE: f64 = 1e-6;

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const COINCIDENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionParams {
    pub mu: f64,
    /// Speed below which the friction law is smoothed, mm/s.
    pub smoothing_eps: f64,
    /// Centerline samples at most this high count as contacts, mm.
    pub contact_height_eps: f64,
}

impl Default for FrictionParams {
    fn default() -> Self {
        Self {
            mu: 0.3,
            smoothing_eps: 0.1,
            contact_height_eps: 20.0,
        }
    }
}

impl FrictionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu", self.mu),
            ("smoothing_eps", self.smoothing_eps),
            ("contact_height_eps", self.contact_height_eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidFriction(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    /// Index into the shape's centerline.
    pub index: usize,
    /// mm.
    pub position: Point3<f64>,
    /// N.
    pub normal_load: f64,
    /// Horizontal shape-change velocity at this point, mm/s.
    pub body_velocity_offset: Vector2<f64>,
}

/// Centerline samples within the contact band, sharing the body weight equally.
///
/// The shape must already rest on the ground, so at least one sample qualifies.
pub fn detect_contacts(shape: &BodyShape, spec: &RobotSpec, params: &FrictionParams) -> Vec<ContactPoint> {
    let idx: Vec<usize> = shape
        .centerline
        .iter()
        .enumerate()
        .filter(|(_, p)| p.z <= params.contact_height_eps)
        .map(|(i, _)| i)
        .collect();
    let load = spec.weight() / idx.len().max(1) as f64;
    idx.into_iter()
        .map(|i| ContactPoint {
            index: i,
            position: shape.centerline[i],
            normal_load: load,
            body_velocity_offset: Vector2::zeros(),
        })
        .collect()
}

/// Fills each contact's offset from a per-centerline-point velocity field.
pub fn attach_offsets(contacts: &mut [ContactPoint], velocities: &[Vector3<f64>]) {
    for c in contacts {
        c.body_velocity_offset = velocities[c.index].xy();
    }
}

/// Smoothed Coulomb friction opposing sliding velocity `u`, N.
pub fn friction_force(u: &Vector2<f64>, load: f64, params: &FrictionParams) -> Vector2<f64> {
    let denom = (u.norm_squared() + params.smoothing_eps * params.smoothing_eps).sqrt();
    u * (-params.mu * load / denom)
}

/// Planar rigid velocity about the contact centroid, in the frame the contacts are given in.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyMotion {
    /// mm/s.
    pub vx: f64,
    /// mm/s.
    pub vy: f64,
    /// rad/s.
    pub omega: f64,
}

impl BodyMotion {
    pub const ZERO: Self = Self {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.omega)
    }

    fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

/// Outcome of a converged force balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub motion: BodyMotion,
    /// Point about which `motion` is expressed, mm.
    pub centroid: Vector2<f64>,
    pub iterations: usize,
    /// Norm of the net friction force, N.
    pub force_residual: f64,
    /// Net friction moment about the centroid, N·mm.
    pub moment_residual: f64,
    /// `Σ f·u`, N·mm/s; never positive.
    pub friction_power: f64,
}

/// Sliding velocity at each contact for a candidate rigid motion.
fn contact_velocities(x: &Vector3<f64>, q: &[Vector2<f64>], contacts: &[ContactPoint]) -> Vec<Vector2<f64>> {
    q.iter()
        .zip(contacts)
        .map(|(q, c)| Vector2::new(x.x - x.z * q.y, x.y + x.z * q.x) + c.body_velocity_offset)
        .collect()
}

struct Balance<'a> {
    contacts: &'a [ContactPoint],
    q: Vec<Vector2<f64>>,
    params: &'a FrictionParams,
    weight: f64,
    length: f64,
}

impl Balance<'_> {
    /// Net force (N) and moment (N·mm).
    fn net(&self, x: &Vector3<f64>) -> (Vector2<f64>, f64) {
        let u = contact_velocities(x, &self.q, self.contacts);
        let mut force = Vector2::zeros();
        let mut moment = 0.0;
        for ((u, q), c) in u.iter().zip(&self.q).zip(self.contacts) {
            let f = friction_force(u, c.normal_load, self.params);
            force += f;
            moment += q.perp(&f);
        }
        (force, moment)
    }

    /// Dimensionless residual: force over `μW`, moment over `μWL`.
    fn scaled(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let (f, m) = self.net(x);
        let s = self.params.mu * self.weight;
        Vector3::new(f.x / s, f.y / s, m / (s * self.length))
    }

    /// Smoothed dissipation rate over `μW`, mm/s. Convex, and its gradient is
    /// the negated residual, so descent on it drives the balance to zero.
    fn dissipation(&self, x: &Vector3<f64>) -> f64 {
        let e2 = self.params.smoothing_eps * self.params.smoothing_eps;
        contact_velocities(x, &self.q, self.contacts)
            .iter()
            .zip(self.contacts)
            .map(|(u, c)| c.normal_load / self.weight * (u.norm_squared() + e2).sqrt())
            .sum()
    }

    fn power(&self, x: &Vector3<f64>) -> f64 {
        contact_velocities(x, &self.q, self.contacts)
            .iter()
            .zip(self.contacts)
            .map(|(u, c)| friction_force(u, c.normal_load, self.params).dot(u))
            .sum()
    }

    fn jacobian(&self, x: &Vector3<f64>, pinned_spin: bool) -> Matrix3<f64> {
        let mut jac = Matrix3::zeros();
        for k in 0..3 {
            if pinned_spin && k == 2 {
                continue;
            }
            let h = 1e-6 * x[k].abs().max(1.0);
            let mut e = Vector3::zeros();
            e[k] = h;
            let col = (self.scaled(&(x + e)) - self.scaled(&(x - e))) / (2.0 * h);
            jac.set_column(k, &col);
        }
        if pinned_spin {
            jac.row_mut(2).fill(0.0);
            jac.column_mut(2).fill(0.0);
            jac[(2, 2)] = 1.0;
        }
        jac
    }
}

/// Finds the planar rigid motion that balances friction at the contacts.
///
/// `length_scale` (mm) sets the moment tolerance; `guess` seeds the Newton
/// iteration. A single contact, or contacts that all coincide, cannot resist
/// rotation, so the spin is held at zero there.
pub fn solve_quasi_static(
    contacts: &[ContactPoint],
    params: &FrictionParams,
    length_scale: f64,
    guess: BodyMotion,
) -> Result<SolverReport> {
    if contacts.is_empty() {
        return Err(Error::InvalidConfig("force balance needs at least one contact".into()));
    }
    let n = contacts.len() as f64;
    let centroid = contacts
        .iter()
        .fold(Vector2::zeros(), |acc, c| acc + c.position.xy().coords)
        / n;
    let q: Vec<Vector2<f64>> = contacts.iter().map(|c| c.position.xy().coords - centroid).collect();
    let weight: f64 = contacts.iter().map(|c| c.normal_load).sum();
    let balance = Balance {
        contacts,
        q,
        params,
        weight,
        length: length_scale,
    };
    let force_tol = RELATIVE_TOLERANCE * params.mu * weight;
    let moment_tol = force_tol * length_scale;

    let report = |x: &Vector3<f64>, iterations: usize| {
        let (f, m) = balance.net(x);
        SolverReport {
            motion: BodyMotion::from_vector(x),
            centroid,
            iterations,
            force_residual: f.norm(),
            moment_residual: m.abs(),
            friction_power: balance.power(x),
        }
    };

    if contacts.len() == 1 {
        let v = contacts[0].body_velocity_offset;
        return Ok(report(&Vector3::new(-v.x, -v.y, 0.0), 0));
    }

    let pinned_spin = balance.q.iter().all(|q| q.norm() < COINCIDENT_TOL);
    let mut x = guess.as_vector();
    if pinned_spin || !x.iter().all(|v| v.is_finite()) {
        x = Vector3::new(x.x, x.y, 0.0);
        if !x.iter().all(|v| v.is_finite()) {
            x = Vector3::zeros();
        }
    }

    for it in 0..=MAX_ITERATIONS {
        let r = report(&x, it);
        if r.force_residual < force_tol && r.moment_residual < moment_tol {
            return Ok(r);
        }
        if it == MAX_ITERATIONS {
            return Err(Error::SolverDiverged {
                iterations: it,
                force_residual: r.force_residual,
                moment_residual: r.moment_residual,
            });
        }
        let mut res = balance.scaled(&x);
        if pinned_spin {
            res.z = 0.0;
        }
        let grad = Vector3::new(-res.x, -res.y, -res.z * length_scale);
        let jac = balance.jacobian(&x, pinned_spin);
        let mut dir = jac.lu().solve(&(-res)).unwrap_or(-grad);
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) || !dir.iter().all(|v| v.is_finite()) {
            dir = -grad;
            slope = grad.dot(&dir);
        }
        let d0 = balance.dissipation(&x);
        let mut step = 1.0;
        while step > MIN_STEP {
            if balance.dissipation(&(x + dir * step)) <= d0 + ARMIJO_C * step * slope {
                break;
            }
            step *= 0.5;
        }
        x += dir * step;
    }
    unreachable!("loop returns on its last iteration")
}

/// Integrates a constant body-frame twist over `dt` with the exact SE(2) exponential.
pub fn advance_pose(pose: &PlanarPose, motion: &BodyMotion, dt: f64) -> PlanarPose {
    let th = motion.omega * dt;
    let (vx, vy) = (motion.vx * dt, motion.vy * dt);
    let local = if th.abs() < 1e-12 {
        Vector2::new(vx, vy)
    } else {
        let sa = th.sin() / th;
        let ca = (1.0 - th.cos()) / th;
        Vector2::new(sa * vx - ca * vy, ca * vx + sa * vy)
    };
    let (s, c) = pose.heading.sin_cos();
    PlanarPose::new(
        pose.x + c * local.x - s * local.y,
        pose.y + s * local.x + c * local.y,
        pose.heading + th,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{forward_kinematics, JointConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn contact(x: f64, y: f64, load: f64, v: (f64, f64)) -> ContactPoint {
        ContactPoint {
            index: 0,
            position: Point3::new(x, y, 0.0),
            normal_load: load,
            body_velocity_offset: Vector2::new(v.0, v.1),
        }
    }

    #[test]
    fn straight_body_is_all_contact() {
        let spec = RobotSpec::default();
        let shape = forward_kinematics(&spec, &[JointConfig::STRAIGHT; 12]).unwrap();
        let cs = detect_contacts(&shape, &spec, &FrictionParams::default());
        assert_eq!(cs.len(), shape.centerline.len());
        let total: f64 = cs.iter().map(|c| c.normal_load).sum();
        assert!(((total - spec.weight()) / spec.weight()).abs() < 1e-9);
    }

    #[test]
    fn load_is_shared_equally() {
        let spec = RobotSpec::default();
        let mut shape = forward_kinematics(&spec, &[JointConfig::STRAIGHT; 12]).unwrap();
        let params = FrictionParams {
            contact_height_eps: 2.0,
            ..FrictionParams::default()
        };
        for (i, p) in shape.centerline.iter_mut().enumerate() {
            p.z = if [3, 40, 90].contains(&i) { 0.0 } else { 10.0 };
        }
        let cs = detect_contacts(&shape, &spec, &params);
        assert_eq!(cs.iter().map(|c| c.index).collect::<Vec<_>>(), vec![3, 40, 90]);
        for c in &cs {
            assert_abs_diff_eq!(c.normal_load, spec.weight() / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn friction_law_examples() {
        let p = FrictionParams::default();
        assert_eq!(friction_force(&Vector2::zeros(), 5.0, &p), Vector2::zeros());
        let f = friction_force(&Vector2::new(10.0 * p.smoothing_eps, 0.0), 1.0, &p);
        assert_abs_diff_eq!(f.norm() / p.mu, 10.0 / 101f64.sqrt(), epsilon = 1e-15);
        assert!(f.norm() / p.mu > 0.995);
        let f = friction_force(&Vector2::new(3.0, 0.0), 2.0, &p);
        assert!(f.x < 0.0 && f.y == 0.0);
    }

    #[test]
    fn no_shape_change_means_no_motion() {
        let p = FrictionParams::default();
        let cs = [contact(0.0, 0.0, 1.0, (0.0, 0.0)), contact(100.0, 20.0, 1.0, (0.0, 0.0))];
        let r = solve_quasi_static(&cs, &p, 1250.0, BodyMotion::ZERO).unwrap();
        assert_eq!(r.motion, BodyMotion::ZERO);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn opposed_offsets_along_a_line_cancel() {
        let p = FrictionParams::default();
        let cs = [contact(-50.0, 0.0, 1.0, (5.0, 0.0)), contact(50.0, 0.0, 1.0, (-5.0, 0.0))];
        let r = solve_quasi_static(&cs, &p, 1250.0, BodyMotion::ZERO).unwrap();
        assert!(r.motion.vx.abs() < 1e-9 && r.motion.vy.abs() < 1e-9 && r.motion.omega.abs() < 1e-9);
        // both contacts slide far above the smoothing speed, so friction is
        // nearly saturated and the residual tolerance pins vx only loosely
        let r = solve_quasi_static(&cs, &p, 1250.0, BodyMotion::new(1.0, -2.0, 0.01)).unwrap();
        assert!(r.motion.vx.abs() < 1e-2 && r.motion.vy.abs() < 1e-5 && r.motion.omega.abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn single_contact_is_held_still() {
        let p = FrictionParams::default();
        let cs = [contact(3.0, 4.0, 21.7, (7.5, 0.0))];
        let r = solve_quasi_static(&cs, &p, 1250.0, BodyMotion::ZERO).unwrap();
        assert_eq!(r.motion, BodyMotion::new(-7.5, -0.0, 0.0));
        assert_eq!(r.force_residual, 0.0);
    }

    #[test]
    fn coincident_contacts_do_not_spin() {
        let p = FrictionParams::default();
        let cs = [contact(1.0, 1.0, 1.0, (2.0, 0.0)), contact(1.0, 1.0, 1.0, (4.0, 1.0))];
        let r = solve_quasi_static(&cs, &p, 1250.0, BodyMotion::new(0.0, 0.0, 3.0)).unwrap();
        assert_eq!(r.motion.omega, 0.0);
        assert!(r.force_residual < 1e-6 * p.mu * 2.0);
    }

    #[test]
    fn rotating_offsets_are_cancelled_by_spin() {
        let p = FrictionParams::default();
        let cs = [contact(0.0, 100.0, 1.0, (5.0, 0.0)), contact(0.0, -100.0, 1.0, (-5.0, 0.0))];
        let r = solve_quasi_static(&cs, &p, 1250.0, BodyMotion::ZERO).unwrap();
        assert_abs_diff_eq!(r.motion.omega, 0.05, epsilon = 1e-6);
        assert!(r.motion.vx.abs() < 1e-9);
    }

    #[test]
    fn empty_contact_set_is_an_error() {
        assert!(solve_quasi_static(&[], &FrictionParams::default(), 1.0, BodyMotion::ZERO).is_err());
    }

    #[test]
    fn pose_integration_examples() {
        let p = PlanarPose::new(1.0, 2.0, 0.3);
        assert_eq!(advance_pose(&p, &BodyMotion::ZERO, 0.5), p);
        let q = advance_pose(&PlanarPose::default(), &BodyMotion::new(10.0, 0.0, 0.0), 1.0);
        assert_eq!(q, PlanarPose::new(10.0, 0.0, 0.0));
        let r = advance_pose(&PlanarPose::new(4.0, 5.0, 0.0), &BodyMotion::new(0.0, 0.0, PI), 1.0);
        assert_abs_diff_eq!(r.x, 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.y, 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.heading, PI, epsilon = 1e-15);
    }

    #[test]
    fn constant_twist_traces_a_circle() {
        // v = 10 mm/s, ω = 0.1 rad/s: circle of radius 100 mm about (0, 100)
        let m = BodyMotion::new(10.0, 0.0, 0.1);
        let mut pose = PlanarPose::default();
        for _ in 0..100 {
            pose = advance_pose(&pose, &m, 0.05);
        }
        let direct = advance_pose(&PlanarPose::default(), &m, 5.0);
        assert_abs_diff_eq!(pose.x, direct.x, epsilon = 1e-9);
        assert_abs_diff_eq!(pose.y, direct.y, epsilon = 1e-9);
        assert_abs_diff_eq!((pose.x.powi(2) + (pose.y - 100.0).powi(2)).sqrt(), 100.0, epsilon = 1e-9);
    }

    fn contact_set() -> impl Strategy<Value = Vec<ContactPoint>> {
        prop::collection::vec(
            (-600.0..600.0f64, -300.0..300.0f64, -80.0..80.0f64, -80.0..80.0f64),
            2..40,
        )
        .prop_map(|v| {
            let load = 21.68 / v.len() as f64;
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, vx, vy))| ContactPoint {
                    index: i,
                    position: Point3::new(x, y, 0.0),
                    normal_load: load,
                    body_velocity_offset: Vector2::new(vx, vy),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn solutions_balance_and_dissipate(cs in contact_set(), g in (-50.0..50.0f64, -50.0..50.0f64, -0.5..0.5f64)) {
            let p = FrictionParams::default();
            let w: f64 = cs.iter().map(|c| c.normal_load).sum();
            let r = solve_quasi_static(&cs, &p, 1250.0, BodyMotion::new(g.0, g.1, g.2)).unwrap();
            prop_assert!(r.force_residual < 1e-6 * p.mu * w);
            prop_assert!(r.moment_residual < 1e-6 * p.mu * w * 1250.0);
            prop_assert!(r.friction_power <= 0.0);
            let q: Vec<_> = cs.iter().map(|c| c.position.xy().coords - r.centroid).collect();
            let x = Vector3::new(r.motion.vx, r.motion.vy, r.motion.omega);
            for (u, c) in contact_velocities(&x, &q, &cs).iter().zip(&cs) {
                let f = friction_force(u, c.normal_load, &p);
                prop_assert!(f.norm() <= p.mu * c.normal_load * (1.0 + 1e-12));
                prop_assert!(f.dot(u) <= 0.0);
            }
        }

        #[test]
        fn mirror_symmetry_gives_no_sideways_motion(
            half in prop::collection::vec((-600.0..600.0f64, 1.0..300.0f64, -80.0..80.0f64, -80.0..80.0f64), 1..20),
            axial in prop::collection::vec((-600.0..600.0f64, -80.0..80.0f64), 0..5),
        ) {
            let mut pts = Vec::new();
            for &(x, y, vx, vy) in &half {
                pts.push((x, y, vx, vy));
                pts.push((x, -y, vx, -vy));
            }
            for &(x, vx) in &axial {
                pts.push((x, 0.0, vx, 0.0));
            }
            let load = 21.68 / pts.len() as f64;
            let cs: Vec<ContactPoint> = pts
                .into_iter()
                .map(|(x, y, vx, vy)| contact(x, y, load, (vx, vy)))
                .collect();
            let r = solve_quasi_static(&cs, &FrictionParams::default(), 1250.0, BodyMotion::ZERO).unwrap();
            prop_assert!(r.motion.vy.abs() < 1e-9);
            prop_assert!(r.motion.omega.abs() < 1e-9);
        }
    }
}
