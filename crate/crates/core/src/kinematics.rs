//! Chain geometry and forward kinematics.
//!
//! Frames follow a head-centred convention: `x` points where the head faces,
//! `y` to the robot's left and `z` up. The body extends from the head along
//! `−x`, so [`BACKBONE`] is the local tangent direction from head to tail.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tendon::{JointGeometry, SpiralHandedness};

/// Local backbone tangent, pointing from the head towards the tail.
pub const BACKBONE: Vector3<f64> = Vector3::new(-1.0, 0.0, 0.0);

/// Points with `z` below this height count as supporting the body during rest.
pub const SUPPORT_TOL: f64 = 1e-6;

const REST_MAX_ITERATIONS: usize = 100;
const ARC_SAMPLES: usize = 3;

/// Geometric and inertial description of the module chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub module_count: usize,
    /// Rigid motor and housing segment length, mm.
    pub module_length: f64,
    pub joint_geometry: JointGeometry,
    /// Moment arm of the globally routed tendons, mm.
    pub housing_radius: f64,
    /// kg.
    pub total_mass: f64,
    /// mm.
    pub total_length: f64,
    pub friction_coefficient: f64,
    /// m/s².
    pub gravity: f64,
    pub spiral_handedness: SpiralHandedness,
}

impl Default for RobotSpec {
    fn default() -> Self {
        let joint_geometry = JointGeometry::default();
        let module_count = 13;
        let total_length = 1250.0;
        Self {
            module_count,
            module_length: Self::module_length_for(module_count, total_length, &joint_geometry),
            joint_geometry,
            housing_radius: 25.0,
            total_mass: 2.21,
            total_length,
            friction_coefficient: 0.3,
            gravity: 9.81,
            spiral_handedness: SpiralHandedness::Right,
        }
    }
}

impl RobotSpec {
    /// Module length that makes the chain add up to `total_length`.
    pub fn module_length_for(module_count: usize, total_length: f64, geom: &JointGeometry) -> f64 {
        let joints = module_count.saturating_sub(1) as f64;
        (total_length - joints * geom.span()) / module_count as f64
    }

    pub fn joint_count(&self) -> usize {
        self.module_count.saturating_sub(1)
    }

    /// Body weight in newtons.
    pub fn weight(&self) -> f64 {
        self.total_mass * self.gravity
    }

    /// Length implied by the module and joint dimensions.
    pub fn chain_length(&self) -> f64 {
        self.module_count as f64 * self.module_length
            + self.joint_count() as f64 * self.joint_geometry.span()
    }

    pub fn validate(&self) -> Result<()> {
        if self.module_count < 2 {
            return Err(Error::InvalidSpec(format!(
                "module_count must be at least 2, got {}",
                self.module_count
            )));
        }
        self.joint_geometry.validate()?;
        for (name, v) in [
            ("module_length", self.module_length),
            ("housing_radius", self.housing_radius),
            ("total_mass", self.total_mass),
            ("total_length", self.total_length),
            ("friction_coefficient", self.friction_coefficient),
            ("gravity", self.gravity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        let chain = self.chain_length();
        if (chain - self.total_length).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "total_length {} does not match module and joint lengths ({chain})",
                self.total_length
            )));
        }
        Ok(())
    }

    /// Number of centerline segments used along each rigid module.
    pub fn module_subdivisions(&self) -> usize {
        (self.module_length / self.joint_geometry.l).floor() as usize + 1
    }

    /// Number of centerline samples produced by [`forward_kinematics`].
    pub fn centerline_len(&self) -> usize {
        1 + self.module_count * self.module_subdivisions() + self.joint_count() * (ARC_SAMPLES + 2)
    }
}

/// Actuated shape of one joint, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointConfig {
    /// Bend in the body plane, positive to the left.
    pub lateral_bend: f64,
    /// Bend out of the body plane, positive upward-concave.
    pub vertical_bend: f64,
    /// Right-handed twist about the backbone tangent.
    pub axial_twist: f64,
}

impl JointConfig {
    pub const STRAIGHT: Self = Self {
        lateral_bend: 0.0,
        vertical_bend: 0.0,
        axial_twist: 0.0,
    };

    pub fn new(lateral_bend: f64, vertical_bend: f64, axial_twist: f64) -> Self {
        Self {
            lateral_bend,
            vertical_bend,
            axial_twist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.lateral_bend, self.vertical_bend, self.axial_twist] {
            if !v.is_finite() || v.abs() >= std::f64::consts::PI {
                return Err(Error::BendOutOfRange { theta: v });
            }
        }
        Ok(())
    }

    /// Rotation vector of the arc: lateral bend about local `z`, vertical bend
    /// about local `y`, signed so both curl the backbone towards their positive side.
    pub fn bend_vector(&self) -> Vector3<f64> {
        Vector3::new(0.0, self.vertical_bend, -self.lateral_bend)
    }
}

/// Position along a constant-curvature arc of length `l` with total rotation
/// vector `omega` (perpendicular to the backbone), at fraction `f` of the arc.
fn arc_point(omega: &Vector3<f64>, l: f64, f: f64) -> Vector3<f64> {
    let w = omega * f;
    let phi = w.norm();
    let (c1, c2) = if phi < 1e-4 {
        let p2 = phi * phi;
        (1.0 - p2 / 6.0 + p2 * p2 / 120.0, 0.5 - p2 / 24.0 + p2 * p2 / 720.0)
    } else {
        (phi.sin() / phi, (1.0 - phi.cos()) / (phi * phi))
    };
    (BACKBONE * c1 + w.cross(&BACKBONE) * c2) * (l * f)
}

fn translation_along(len: f64) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::from(BACKBONE * len), UnitQuaternion::identity())
}

/// Pose of the distal joint face relative to the proximal one.
pub fn joint_transform(config: &JointConfig, geom: &JointGeometry) -> Isometry3<f64> {
    let omega = config.bend_vector();
    let tip = arc_point(&omega, geom.l, 1.0);
    let arc = Isometry3::from_parts(
        Translation3::from(tip),
        UnitQuaternion::from_scaled_axis(omega),
    );
    let twist = Isometry3::from_parts(
        Translation3::identity(),
        UnitQuaternion::from_scaled_axis(BACKBONE * config.axial_twist),
    );
    translation_along(geom.a) * arc * twist * translation_along(geom.a)
}

/// World-frame realisation of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyShape {
    /// Pose of each module's head-side face, head first.
    pub frames: Vec<Isometry3<f64>>,
    /// Sampled backbone points, head first.
    pub centerline: Vec<Point3<f64>>,
    /// Exact backbone arc length from the head to each centerline point, mm.
    pub arc_length: Vec<f64>,
    /// s.
    pub timestamp: f64,
}

impl BodyShape {
    /// Applies a rigid motion to every frame and point.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> BodyShape {
        BodyShape {
            frames: self.frames.iter().map(|f| iso * f).collect(),
            centerline: self.centerline.iter().map(|p| iso * p).collect(),
            arc_length: self.arc_length.clone(),
            timestamp: self.timestamp,
        }
    }

    pub fn min_z(&self) -> f64 {
        self.centerline
            .iter()
            .map(|p| p.z)
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean horizontal position of the centerline samples.
    pub fn planar_centroid(&self) -> Vector2<f64> {
        let n = self.centerline.len().max(1) as f64;
        self.centerline
            .iter()
            .fold(Vector2::zeros(), |acc, p| acc + p.xy().coords)
            / n
    }

    /// Total length of the sampled polyline.
    pub fn polyline_length(&self) -> f64 {
        self.centerline
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    /// Heading (rad) the head faces, from the head frame's `x` axis.
    pub fn head_heading(&self) -> f64 {
        let fwd = self.frames[0].rotation * Vector3::x();
        fwd.y.atan2(fwd.x)
    }
}

/// Composes modules and joints from the head (at the origin, identity
/// orientation) to the tail and samples the backbone.
pub fn forward_kinematics(spec: &RobotSpec, configs: &[JointConfig]) -> Result<BodyShape> {
    let joints = spec.joint_count();
    if configs.len() != joints {
        return Err(Error::JointCountMismatch {
            expected: joints,
            actual: configs.len(),
        });
    }
    let geom = &spec.joint_geometry;
    let nsub = spec.module_subdivisions();
    let cap = spec.centerline_len();

    let mut frames = Vec::with_capacity(spec.module_count);
    let mut centerline = Vec::with_capacity(cap);
    let mut arc_length = Vec::with_capacity(cap);
    let mut pose = Isometry3::<f64>::identity();
    let mut s = 0.0;
    centerline.push(Point3::origin());
    arc_length.push(0.0);

    for m in 0..spec.module_count {
        frames.push(pose);
        for k in 1..=nsub {
            let ds = spec.module_length * k as f64 / nsub as f64;
            centerline.push(pose * Point3::from(BACKBONE * ds));
            arc_length.push(s + ds);
        }
        pose *= translation_along(spec.module_length);
        s += spec.module_length;
        if m == joints {
            break;
        }

        let cfg = &configs[m];
        pose *= translation_along(geom.a);
        s += geom.a;
        centerline.push(pose * Point3::origin());
        arc_length.push(s);
        let omega = cfg.bend_vector();
        for k in 1..=ARC_SAMPLES {
            let f = k as f64 / ARC_SAMPLES as f64;
            centerline.push(pose * Point3::from(arc_point(&omega, geom.l, f)));
            arc_length.push(s + geom.l * f);
        }
        let arc = Isometry3::from_parts(
            Translation3::from(arc_point(&omega, geom.l, 1.0)),
            UnitQuaternion::from_scaled_axis(omega),
        );
        let twist = Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_scaled_axis(BACKBONE * cfg.axial_twist),
        );
        pose = pose * arc * twist * translation_along(geom.a);
        s += geom.l + geom.a;
        centerline.push(pose * Point3::origin());
        arc_length.push(s);
    }

    Ok(BodyShape {
        frames,
        centerline,
        arc_length,
        timestamp: 0.0,
    })
}

/// Translates the shape vertically so its lowest centerline point touches `z = 0`.
pub fn settle_on_ground(shape: &BodyShape) -> BodyShape {
    let dz = shape.min_z();
    shape.transformed(&Isometry3::translation(0.0, 0.0, -dz))
}

/// 2-D convex hull by monotone chain, counter-clockwise, without colinear points.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut lower: Vec<Vector2<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// How the support polygon relates to the centroid.
enum Support {
    Stable,
    /// Tip about the horizontal line through `pivot` with direction `axis`.
    Tip {
        pivot: Vector2<f64>,
        axis: Vector2<f64>,
    },
}

fn classify_support(hull: &[Vector2<f64>], c: &Vector2<f64>) -> Support {
    let perp = |v: Vector2<f64>| Vector2::new(-v.y, v.x);
    if hull.len() == 1 {
        let dv = c - hull[0];
        if dv.norm() < 1e-9 {
            return Support::Stable;
        }
        return Support::Tip {
            pivot: hull[0],
            axis: perp(dv),
        };
    }
    let edges = if hull.len() == 2 { 1 } else { hull.len() };
    let mut inside = hull.len() >= 3;
    let mut best: Option<(f64, Vector2<f64>, bool, Vector2<f64>)> = None;
    for i in 0..edges {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let e = b - a;
        if hull.len() >= 3 && e.perp(&(c - a)) < -1e-12 {
            inside = false;
        }
        let t = ((c - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
        let q = a + e * t;
        let dist = (c - q).norm();
        if best.is_none_or(|(bd, ..)| dist < bd) {
            best = Some((dist, q, t <= 0.0 || t >= 1.0, e));
        }
    }
    let (dist, q, at_vertex, e) = best.expect("hull has at least one edge");
    if inside || (hull.len() == 2 && dist < 1e-9) {
        return Support::Stable;
    }
    let axis = if at_vertex { perp(c - q) } else { e };
    Support::Tip { pivot: q, axis }
}

/// Settles the shape and rolls it rigidly until the centroid lies over the
/// support polygon. `warm` is applied first so successive ticks start from the
/// previous resting attitude. Returns the rested shape and the total rotation
/// applied about the origin before the final translation.
pub fn rest_on_ground(shape: &BodyShape, warm: &UnitQuaternion<f64>) -> (BodyShape, UnitQuaternion<f64>) {
    let mut cur = shape.transformed(&Isometry3::from_parts(Translation3::identity(), *warm));
    let mut rot = *warm;
    for _ in 0..REST_MAX_ITERATIONS {
        cur = settle_on_ground(&cur);
        let c = cur.planar_centroid();
        let support: Vec<Vector2<f64>> = cur
            .centerline
            .iter()
            .filter(|p| p.z < SUPPORT_TOL)
            .map(|p| p.xy().coords)
            .collect();
        let hull = convex_hull(&support);
        let (pivot, axis) = match classify_support(&hull, &c) {
            Support::Stable => break,
            Support::Tip { pivot, axis } => (pivot, axis),
        };
        let mut u = Vector3::new(axis.x, axis.y, 0.0).normalize();
        let pivot3 = Vector3::new(pivot.x, pivot.y, 0.0);
        let hc = Vector3::new(c.x - pivot.x, c.y - pivot.y, 0.0);
        if u.cross(&hc).z > 0.0 {
            u = -u;
        }
        let angle = cur
            .centerline
            .iter()
            .filter_map(|p| {
                let y = p.coords - pivot3;
                let w = u.cross(&y).z;
                (y.z > SUPPORT_TOL && w < 0.0).then(|| y.z.atan2(-w))
            })
            .fold(f64::INFINITY, f64::min);
        if !angle.is_finite() {
            break;
        }
        let q = UnitQuaternion::from_scaled_axis(u * angle);
        let about_pivot = Isometry3::translation(pivot3.x, pivot3.y, 0.0)
            * Isometry3::from_parts(Translation3::identity(), q)
            * Isometry3::translation(-pivot3.x, -pivot3.y, 0.0);
        cur = cur.transformed(&about_pivot);
        rot = q * rot;
    }
    (settle_on_ground(&cur), rot)
}

/// Planar rigid pose: position in mm and heading in rad.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.x, self.y, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.heading),
        )
    }

    /// Unit vector the pose faces.
    pub fn forward(&self) -> Vector2<f64> {
        Vector2::new(self.heading.cos(), self.heading.sin())
    }
}

/// Arc-length-weighted mean heading of the horizontal backbone tangents,
/// oriented towards the head.
pub fn body_heading(shape: &BodyShape) -> f64 {
    let mut prev: Option<f64> = None;
    let mut sum = 0.0;
    let mut weight = 0.0;
    for w in shape.centerline.windows(2) {
        let d = w[0].xy() - w[1].xy();
        let len = d.norm();
        if len < 1e-12 {
            continue;
        }
        let mut ang = d.y.atan2(d.x);
        if let Some(p) = prev {
            ang = p + (ang - p + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
                - std::f64::consts::PI;
        }
        prev = Some(ang);
        sum += ang * len;
        weight += len;
    }
    if weight > 0.0 {
        sum / weight
    } else {
        0.0
    }
}

/// Pose of the body's planar frame: origin at the horizontal centroid of the
/// centerline, `x` along the mean body axis towards the head.
pub fn planar_frame(shape: &BodyShape) -> PlanarPose {
    let c = shape.planar_centroid();
    PlanarPose::new(c.x, c.y, body_heading(shape))
}

/// Expresses the shape in its own planar frame. Returns the re-expressed shape
/// and the planar frame it was measured in.
pub fn to_planar_frame(shape: &BodyShape) -> (BodyShape, PlanarPose) {
    let frame = planar_frame(shape);
    (shape.transformed(&frame.to_isometry().inverse()), frame)
}

/// Finite-difference shape velocity split into a rigid part and the residual
/// deformation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeVelocity {
    /// Per-point velocity with the rigid part removed, mm/s.
    pub offsets: Vec<Vector3<f64>>,
    /// Removed mean translation, mm/s.
    pub translation: Vector3<f64>,
    /// Removed rotation rate about the vertical axis through the planar centroid of `prev`, rad/s.
    pub spin: f64,
}

/// Per-point velocity `(next − prev)/dt` with the rigid part removed.
pub fn shape_velocity(prev: &BodyShape, next: &BodyShape, dt: f64) -> Result<Vec<Vector3<f64>>> {
    shape_velocity_decomposed(prev, next, dt).map(|v| v.offsets)
}

/// Raw per-point velocity `(next − prev)/dt`.
pub fn raw_shape_velocity(prev: &BodyShape, next: &BodyShape, dt: f64) -> Result<Vec<Vector3<f64>>> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTimeStep(dt));
    }
    if prev.centerline.len() != next.centerline.len() {
        return Err(Error::SamplingMismatch {
            prev: prev.centerline.len(),
            next: next.centerline.len(),
        });
    }
    Ok(prev
        .centerline
        .iter()
        .zip(&next.centerline)
        .map(|(a, b)| (b - a) / dt)
        .collect())
}

/// Like [`shape_velocity`], also returning the removed rigid twist: the mean
/// translation and the least-squares rotation about the vertical axis.
pub fn shape_velocity_decomposed(
    prev: &BodyShape,
    next: &BodyShape,
    dt: f64,
) -> Result<ShapeVelocity> {
    let raw = raw_shape_velocity(prev, next, dt)?;
    let n = raw.len().max(1) as f64;
    let translation = raw.iter().fold(Vector3::zeros(), |acc, v| acc + v) / n;
    let c = prev.planar_centroid();
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, v) in prev.centerline.iter().zip(&raw) {
        let r = p.xy().coords - c;
        num += r.perp(&v.xy());
        den += r.norm_squared();
    }
    let spin = if den > 0.0 { num / den } else { 0.0 };
    let offsets = prev
        .centerline
        .iter()
        .zip(&raw)
        .map(|(p, v)| {
            let r = p.xy().coords - c;
            v - translation - Vector3::new(-r.y, r.x, 0.0) * spin
        })
        .collect();
    Ok(ShapeVelocity {
        offsets,
        translation,
        spin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn straight(spec: &RobotSpec) -> Vec<JointConfig> {
        vec![JointConfig::STRAIGHT; spec.joint_count()]
    }

    #[test]
    fn default_spec_is_consistent() {
        let spec = RobotSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.joint_count(), 12);
        assert_abs_diff_eq!(spec.module_length, (1250.0 - 12.0 * 34.0) / 13.0, epsilon = 1e-12);
        assert_eq!(spec.module_subdivisions(), 4);
        assert_eq!(spec.centerline_len(), 113);
    }

    #[test]
    fn inconsistent_length_is_rejected() {
        let spec = RobotSpec {
            total_length: 1251.0,
            ..RobotSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        let spec = RobotSpec {
            module_count: 1,
            ..RobotSpec::default()
        };
        assert!(spec.validate().is_err());
        let spec = RobotSpec {
            friction_coefficient: 0.0,
            ..RobotSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_joint_is_pure_translation() {
        let t = joint_transform(&JointConfig::STRAIGHT, &JointGeometry::default());
        assert_abs_diff_eq!(t.translation.vector, Vector3::new(-34.0, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(t.rotation.angle(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quarter_turn_arc_chord() {
        let geom = JointGeometry::default();
        let t = joint_transform(&JointConfig::new(FRAC_PI_2, 0.0, 0.0), &geom);
        let rho = 40.0 / PI;
        // proximal offset along the backbone, chord, then distal offset now pointing left
        let expected = Vector3::new(-(geom.a + rho), rho + geom.a, 0.0);
        assert_abs_diff_eq!(t.translation.vector, expected, epsilon = 1e-12);
        let axis = t.rotation.axis().unwrap();
        assert_abs_diff_eq!(t.rotation.angle(), FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(axis.into_inner(), -Vector3::z(), epsilon = 1e-12);
    }

    #[test]
    fn pure_twist_does_not_displace() {
        let t = joint_transform(&JointConfig::new(0.0, 0.0, FRAC_PI_4), &JointGeometry::default());
        assert_abs_diff_eq!(t.translation.vector, Vector3::new(-34.0, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(t.rotation.angle(), FRAC_PI_4, epsilon = 1e-12);
        let axis = t.rotation.axis().unwrap().into_inner();
        assert_abs_diff_eq!(axis, BACKBONE, epsilon = 1e-12);
    }

    #[test]
    fn upward_bend_lifts_distal_end() {
        let t = joint_transform(&JointConfig::new(0.0, 0.3, 0.0), &JointGeometry::default());
        assert!(t.translation.vector.z > 0.0);
        assert_abs_diff_eq!(t.translation.vector.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn straight_chain_spans_total_length() {
        let spec = RobotSpec::default();
        let shape = forward_kinematics(&spec, &straight(&spec)).unwrap();
        assert_eq!(shape.frames.len(), 13);
        assert_eq!(shape.centerline.len(), 113);
        let tail = shape.centerline.last().unwrap();
        assert_abs_diff_eq!(tail.x, -1250.0, epsilon = 1e-9);
        for p in &shape.centerline {
            assert!(p.y.abs() < 1e-9 && p.z.abs() < 1e-9);
        }
        for f in &shape.frames {
            assert!(f.translation.vector.yz().norm() < 1e-9);
        }
    }

    #[test]
    fn four_quarter_bends_reverse_heading() {
        let spec = RobotSpec::default();
        let mut cfg = straight(&spec);
        for c in cfg.iter_mut().take(4) {
            c.lateral_bend = FRAC_PI_4;
        }
        let shape = forward_kinematics(&spec, &cfg).unwrap();
        let before = shape.frames[0].rotation * BACKBONE;
        let after = shape.frames[4].rotation * BACKBONE;
        assert_abs_diff_eq!(before.dot(&after), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn alternating_bends_keep_head_and_tail_parallel() {
        let spec = RobotSpec::default();
        let cfg: Vec<JointConfig> = (0..12)
            .map(|j| JointConfig::new(if j % 2 == 0 { 0.7 } else { -0.7 }, 0.0, 0.0))
            .collect();
        let shape = forward_kinematics(&spec, &cfg).unwrap();
        let rel = shape.frames[0].rotation.inverse() * shape.frames[12].rotation;
        assert_abs_diff_eq!(rel.angle(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wrong_config_count_is_rejected() {
        let spec = RobotSpec::default();
        let err = forward_kinematics(&spec, &[JointConfig::STRAIGHT; 3]).unwrap_err();
        assert_eq!(err, Error::JointCountMismatch { expected: 12, actual: 3 });
    }

    #[test]
    fn settle_translates_onto_plane() {
        let spec = RobotSpec::default();
        let shape = forward_kinematics(&spec, &straight(&spec)).unwrap();
        let raised = shape.transformed(&Isometry3::translation(0.0, 0.0, 5.0));
        let settled = settle_on_ground(&raised);
        for (a, b) in settled.centerline.iter().zip(&shape.centerline) {
            assert_abs_diff_eq!(a.coords, b.coords, epsilon = 1e-12);
        }
        let sunk = shape.transformed(&Isometry3::translation(0.0, 0.0, -3.0));
        assert_abs_diff_eq!(settle_on_ground(&sunk).min_z(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn convex_hull_drops_interior_points() {
        let pts = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(0.5, 0.5),
            Vector2::new(0.5, 0.0),
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(!hull.contains(&Vector2::new(0.5, 0.5)));
    }

    #[test]
    fn rest_tips_an_unsupported_arch_onto_its_side() {
        // curled up and sideways: a plain settle leaves it unsupported
        let spec = RobotSpec::default();
        let cfg = vec![JointConfig::new(0.2, 0.15, 0.0); 12];
        let shape = forward_kinematics(&spec, &cfg).unwrap();
        let (rested, rot) = rest_on_ground(&shape, &UnitQuaternion::identity());
        assert!(rot.angle() > 0.01);
        assert_abs_diff_eq!(rested.min_z(), 0.0, epsilon = 1e-9);
        let hull = convex_hull(
            &rested
                .centerline
                .iter()
                .filter(|p| p.z < SUPPORT_TOL)
                .map(|p| p.xy().coords)
                .collect::<Vec<_>>(),
        );
        assert!(matches!(
            classify_support(&hull, &rested.planar_centroid()),
            Support::Stable
        ));
    }

    #[test]
    fn rest_leaves_flat_body_alone() {
        let spec = RobotSpec::default();
        let cfg: Vec<JointConfig> = (0..12)
            .map(|j| JointConfig::new(0.5 * (j as f64).sin(), 0.0, 0.0))
            .collect();
        let shape = forward_kinematics(&spec, &cfg).unwrap();
        let (rested, rot) = rest_on_ground(&shape, &UnitQuaternion::identity());
        assert_eq!(rot, UnitQuaternion::identity());
        assert_eq!(rested.centerline, settle_on_ground(&shape).centerline);
    }

    #[test]
    fn planar_frame_of_straight_body_faces_head() {
        let spec = RobotSpec::default();
        let shape = forward_kinematics(&spec, &straight(&spec)).unwrap();
        let rotated = shape.transformed(&PlanarPose::new(10.0, -4.0, 2.0).to_isometry());
        let frame = planar_frame(&rotated);
        assert_abs_diff_eq!(frame.heading, 2.0, epsilon = 1e-12);
        let (local, _) = to_planar_frame(&rotated);
        assert_abs_diff_eq!(local.planar_centroid().norm(), 0.0, epsilon = 1e-9);
        assert!(local.centerline[0].x > 0.0);
    }

    #[test]
    fn identical_shapes_have_zero_velocity() {
        let spec = RobotSpec::default();
        let shape = forward_kinematics(&spec, &straight(&spec)).unwrap();
        let v = shape_velocity(&shape, &shape, 0.01).unwrap();
        assert!(v.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn rigid_translation_is_removed() {
        let spec = RobotSpec::default();
        let cfg: Vec<JointConfig> = (0..12).map(|j| JointConfig::new(0.1 * j as f64, 0.0, 0.0)).collect();
        let shape = forward_kinematics(&spec, &cfg).unwrap();
        let moved = shape.transformed(&Isometry3::translation(1.0, 0.0, 0.0));
        let raw = raw_shape_velocity(&shape, &moved, 1.0).unwrap();
        for v in &raw {
            assert_abs_diff_eq!(*v, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-9);
        }
        let dec = shape_velocity_decomposed(&shape, &moved, 1.0).unwrap();
        assert_abs_diff_eq!(dec.translation, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-9);
        for v in &dec.offsets {
            assert!(v.norm() < 1e-9);
        }
    }

    #[test]
    fn small_rigid_rotation_is_removed() {
        let spec = RobotSpec::default();
        let cfg: Vec<JointConfig> = (0..12).map(|j| JointConfig::new(0.3 * (j as f64).cos(), 0.0, 0.0)).collect();
        let shape = forward_kinematics(&spec, &cfg).unwrap();
        let c = shape.planar_centroid();
        let rot = Isometry3::translation(c.x, c.y, 0.0)
            * PlanarPose::new(0.0, 0.0, 1e-7).to_isometry()
            * Isometry3::translation(-c.x, -c.y, 0.0);
        let dec = shape_velocity_decomposed(&shape, &shape.transformed(&rot), 1e-3).unwrap();
        assert_abs_diff_eq!(dec.spin, 1e-4, epsilon = 1e-10);
        for v in &dec.offsets {
            assert!(v.norm() < 1e-6);
        }
    }

    #[test]
    fn velocity_rejects_bad_inputs() {
        let spec = RobotSpec::default();
        let shape = forward_kinematics(&spec, &straight(&spec)).unwrap();
        assert_eq!(
            shape_velocity(&shape, &shape, 0.0).unwrap_err(),
            Error::NonPositiveTimeStep(0.0)
        );
        let mut short = shape.clone();
        short.centerline.pop();
        assert!(matches!(
            shape_velocity(&shape, &short, 0.1),
            Err(Error::SamplingMismatch { prev: 113, next: 112 })
        ));
    }

    fn config_strategy() -> impl Strategy<Value = JointConfig> {
        let r = -3.1..3.1f64;
        (r.clone(), r.clone(), r).prop_map(|(a, b, c)| JointConfig::new(a, b, c))
    }

    proptest! {
        #[test]
        fn arc_length_is_preserved(cfg in prop::collection::vec(config_strategy(), 12)) {
            let spec = RobotSpec::default();
            let shape = forward_kinematics(&spec, &cfg).unwrap();
            let last = *shape.arc_length.last().unwrap();
            prop_assert!(((last - spec.total_length) / spec.total_length).abs() < 1e-9);
            let poly = shape.polyline_length();
            prop_assert!(poly <= spec.total_length * (1.0 + 1e-12));
            prop_assert!(poly >= 0.99 * spec.total_length);
            for w in shape.centerline.windows(2) {
                prop_assert!((w[1] - w[0]).norm() < spec.joint_geometry.l);
            }
        }

        #[test]
        fn single_joint_tip_matches_chord(theta in prop::num::f64::NORMAL.prop_map(|x| x.abs() % 3.1 + 1e-3), sign in prop::bool::ANY) {
            let geom = JointGeometry::default();
            let theta = if sign { theta } else { -theta };
            let t = joint_transform(&JointConfig::new(theta, 0.0, 0.0), &geom);
            // strip the rigid offsets, leaving the arc chord
            let tip = t.translation.vector - BACKBONE * geom.a - t.rotation * (BACKBONE * geom.a);
            let x = geom.l / theta.abs();
            let chord = 2.0 * x * (theta.abs() / 2.0).sin();
            prop_assert!((tip.norm() - chord).abs() < 1e-9);
        }

        #[test]
        fn later_joints_do_not_move_earlier_frames(
            cfg in prop::collection::vec(config_strategy(), 12),
            j in 0usize..12,
            delta in config_strategy(),
        ) {
            let spec = RobotSpec::default();
            let a = forward_kinematics(&spec, &cfg).unwrap();
            let mut cfg2 = cfg.clone();
            cfg2[j] = delta;
            let b = forward_kinematics(&spec, &cfg2).unwrap();
            prop_assert_eq!(&a.frames[..=j], &b.frames[..=j]);
        }

        #[test]
        fn settle_is_idempotent_isometry(cfg in prop::collection::vec(config_strategy(), 12)) {
            let spec = RobotSpec::default();
            let shape = forward_kinematics(&spec, &cfg).unwrap();
            let once = settle_on_ground(&shape);
            let twice = settle_on_ground(&once);
            prop_assert_eq!(&once.centerline, &twice.centerline);
            prop_assert!(once.min_z().abs() < 1e-12);
            for k in [0usize, 17, 56, 112] {
                let d0 = (shape.centerline[k] - shape.centerline[0]).norm();
                let d1 = (once.centerline[k] - once.centerline[0]).norm();
                prop_assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }
}
