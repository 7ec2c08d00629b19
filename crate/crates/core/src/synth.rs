//! Synthetic multi-camera RGBD scenes with exact ground truth.
//!
//! Bodies are unions of capsules and spheres. Depth is rendered per pixel by
//! analytic ray intersection, so the measured depth at a joint is the body
//! *surface*, one local radius in front of the joint center. Keypoints are only
//! emitted for joints whose surface is the nearest thing along their pixel ray.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth::{sample_depth, CrossParams, DepthImage};
use crate::geometry::{CameraCalibration, GeometryError, Pixel, Point3};
use crate::metrics::JointSet;
use crate::skeleton::{Keypoint2D, Pose2D, SkeletonDefinition, MAX_DEPTH_OFFSET};

/// Longest admissible limb, meters.
pub const MAX_LIMB_LENGTH: f64 = 0.8;
/// Tallest admissible person, meters.
pub const MAX_HEIGHT: f64 = 2.0;

/// Landmarks the body model can place. A skeleton may use any subset, by name.
pub const LANDMARKS: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("could not place {0} persons without overlap")]
    Placement(usize),
    #[error("skeleton joint `{0}` is not a landmark of the synthetic body")]
    UnknownJoint(String),
    #[error("invalid scene configuration: {0}")]
    Config(String),
    #[error("implausible body: {0}")]
    Body(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-pixel Gaussian depth noise, meters.
    pub depth_sigma: f64,
    /// Gaussian keypoint noise per axis, pixels.
    pub pixel_sigma: f64,
    pub keypoint_dropout: f64,
    /// Probability that a depth pixel is invalidated.
    pub depth_holes: f64,
    /// Also emit keypoints hidden behind another surface, as a detector
    /// trained to predict occluded joints would.
    pub occluded_keypoints: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            depth_sigma: 0.0,
            pixel_sigma: 0.0,
            keypoint_dropout: 0.0,
            depth_holes: 0.0,
            occluded_keypoints: false,
        }
    }
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub person_count: usize,
    pub camera_count: usize,
    /// Horizontal distance of every camera from the scene center, meters.
    pub camera_ring_radius: f64,
    pub camera_height: f64,
    /// Height of the point all cameras look at.
    pub target_height: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub focal_px: f64,
    /// Persons stand within this distance of the center (fraction of the ring radius).
    pub placement_fraction: f64,
    /// Persons orbit the center at this rate, radians per frame.
    pub orbit_rate: f64,
    pub limb_radius: f64,
    pub torso_radius: f64,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            person_count: 3,
            camera_count: 5,
            camera_ring_radius: 3.0,
            camera_height: 2.0,
            target_height: 0.9,
            image_width: 640,
            image_height: 480,
            focal_px: 420.0,
            placement_fraction: 0.3,
            orbit_rate: 0.0,
            limb_radius: 0.04,
            torso_radius: 0.06,
            noise: NoiseConfig::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.into()));
        if self.person_count < 1 || self.camera_count < 1 {
            return bad("person_count and camera_count must be at least 1");
        }
        let n = &self.noise;
        for p in [n.keypoint_dropout, n.depth_holes] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if n.depth_sigma < 0.0 || n.pixel_sigma < 0.0 {
            return bad("noise sigmas must be non-negative");
        }
        if !(self.camera_ring_radius > 0.0 && self.focal_px > 0.0) {
            return bad("ring radius and focal length must be positive");
        }
        if self.limb_radius <= 0.0 || self.torso_radius <= 0.0 {
            return bad("radii must be positive");
        }
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image size must be non-zero");
        }
        Ok(())
    }
}

/// Pose parameters of one synthetic person.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    /// Floor position (x, y).
    pub root: [f64; 2],
    /// Heading around the world z axis, radians.
    pub yaw: f64,
    pub scale: f64,
    /// Arm abduction, left and right, radians.
    pub arm_abduction: [f64; 2],
    /// Arm forward flexion, left and right, radians.
    pub arm_flexion: [f64; 2],
    pub elbow_flexion: [f64; 2],
    pub knee_bend: f64,
    pub stance: f64,
}

impl Default for PoseParams {
    fn default() -> Self {
        Self {
            root: [0.0, 0.0],
            yaw: 0.0,
            scale: 1.0,
            arm_abduction: [0.35, 0.35],
            arm_flexion: [0.1, 0.1],
            elbow_flexion: [0.3, 0.3],
            knee_bend: 0.1,
            stance: 0.05,
        }
    }
}

impl PoseParams {
    /// Largest horizontal reach of the body from its root, used for spacing.
    pub const FOOTPRINT: f64 = 0.62;

    fn sample<R: Rng>(rng: &mut R, root: [f64; 2]) -> Self {
        let mut side = || {
            (
                rng.random_range(0.2..0.75),
                rng.random_range(-0.3..0.8),
                rng.random_range(0.0..1.4),
            )
        };
        let (la, lf, le) = side();
        let (ra, rf, re) = side();
        Self {
            root,
            yaw: rng.random_range(-PI..PI),
            scale: rng.random_range(0.92..1.06),
            arm_abduction: [la, ra],
            arm_flexion: [lf, rf],
            elbow_flexion: [le, re],
            knee_bend: rng.random_range(0.0..0.5),
            stance: rng.random_range(0.0..0.15),
        }
    }
}

/// A capsule between `a` and `b` (a sphere when they coincide).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Point3,
    pub b: Point3,
    pub radius: f64,
}

impl Capsule {
    fn distance_to_axis(&self, p: &Point3) -> f64 {
        let ba = self.b - self.a;
        let len2 = ba.norm_squared();
        let t = if len2 > 0.0 {
            ((p - self.a).dot(&ba) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p - (self.a + ba * t)).norm()
    }

    /// Smallest positive `t` with `t·dir` on the surface (ray from the origin).
    /// With `dir.z == 1`, `t` is the camera-frame depth.
    fn intersect(&self, dir: &Vector3<f64>) -> Option<f64> {
        let dd = dir.norm_squared();
        let r2 = self.radius * self.radius;
        let sphere = |c: &Point3| -> Option<f64> {
            let oc = -c.coords;
            let b = dir.dot(&oc);
            let h = b * b - dd * (oc.norm_squared() - r2);
            if h < 0.0 {
                return None;
            }
            let t = (-b - h.sqrt()) / dd;
            (t > 0.0).then_some(t)
        };
        let ba = self.b - self.a;
        let baba = ba.norm_squared();
        if baba < 1e-18 {
            return sphere(&self.a);
        }
        let oa = -self.a.coords;
        let bard = ba.dot(dir);
        let baoa = ba.dot(&oa);
        let rdoa = dir.dot(&oa);
        let qa = baba * dd - bard * bard;
        let qb = baba * rdoa - baoa * bard;
        let qc = baba * oa.norm_squared() - baoa * baoa - r2 * baba;
        let h = qb * qb - qa * qc;
        if h < 0.0 {
            return None;
        }
        if qa.abs() > 1e-18 {
            let t = (-qb - h.sqrt()) / qa;
            let y = baoa + t * bard;
            if y > 0.0 && y < baba {
                return (t > 0.0).then_some(t);
            }
            return sphere(if y <= 0.0 { &self.a } else { &self.b });
        }
        // ray parallel to the axis: only the caps can be hit
        match (sphere(&self.a), sphere(&self.b)) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }
}

/// Landmark positions plus the capsule geometry of one body.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPerson {
    /// World positions, indexed like [`LANDMARKS`].
    pub landmarks: [Point3; 17],
    pub limb_radius: f64,
    pub torso_radius: f64,
}

const HEAD_RADIUS: f64 = 0.09;
const NECK_RADIUS: f64 = 0.05;
const SPINE_RADIUS: f64 = 0.09;

fn landmark(name: &str) -> Option<usize> {
    LANDMARKS.iter().position(|l| *l == name)
}

impl SyntheticPerson {
    pub fn from_params(p: &PoseParams, limb_radius: f64, torso_radius: f64) -> Self {
        let s = p.scale;
        let up = Vector3::z();
        let fwd = Vector3::new(p.yaw.cos(), p.yaw.sin(), 0.0);
        let left = Vector3::new(-p.yaw.sin(), p.yaw.cos(), 0.0);
        let root = Vector3::new(p.root[0], p.root[1], 0.0);

        let leg = 0.42 * s;
        let ankle_z = 0.08 * s;
        let drop = 2.0 * leg * (1.0 - (p.knee_bend / 2.0).cos());
        let hip_z = ankle_z + 2.0 * leg - drop;
        let at = |f: f64, l: f64, z: f64| Point3::from(root + fwd * f + left * l + up * z);

        let mut lm = [Point3::origin(); 17];
        let head = at(0.0, 0.0, (1.62 * s - drop).min(hip_z + 0.70 * s));
        lm[0] = head;
        for (i, sgn) in [(1, 1.0), (2, -1.0)] {
            lm[i] =
                Point3::from(head.coords + fwd * 0.075 * s + left * sgn * 0.03 * s + up * 0.03 * s);
        }
        for (i, sgn) in [(3, 1.0), (4, -1.0)] {
            lm[i] = Point3::from(head.coords + left * sgn * 0.075 * s);
        }
        let shoulder_z = hip_z + 0.53 * s;
        for (k, sgn) in [(0usize, 1.0), (1, -1.0)] {
            let side = left * sgn;
            let shoulder = Point3::from(root + side * 0.19 * s + up * shoulder_z);
            let (abd, flex, elbow) = (p.arm_abduction[k], p.arm_flexion[k], p.elbow_flexion[k]);
            let upper =
                fwd * (flex.sin() * abd.cos()) + side * abd.sin() - up * (flex.cos() * abd.cos());
            let elbow_pt = shoulder + upper * 0.30 * s;
            let perp = (fwd - upper * fwd.dot(&upper)).normalize();
            let fore = (upper * elbow.cos() + perp * elbow.sin()).normalize();
            let wrist = elbow_pt + fore * 0.27 * s;
            lm[5 + k] = shoulder;
            lm[7 + k] = elbow_pt;
            lm[9 + k] = wrist;

            let hip = Point3::from(root + side * 0.10 * s + up * hip_z);
            let ankle = Point3::from(root + side * (0.10 * s + p.stance) + up * ankle_z);
            let d = ankle - hip;
            let half = d * 0.5;
            let bulge = (leg * leg - half.norm_squared()).max(0.0).sqrt();
            let knee_dir = (fwd - d.normalize() * fwd.dot(&d.normalize())).normalize();
            lm[11 + k] = hip;
            lm[13 + k] = hip + half + knee_dir * bulge;
            lm[15 + k] = ankle;
        }
        Self {
            landmarks: lm,
            limb_radius,
            torso_radius,
        }
    }

    pub fn landmark(&self, name: &str) -> Option<Point3> {
        landmark(name).map(|i| self.landmarks[i])
    }

    /// Ground-truth joint positions in skeleton order.
    pub fn joints_for(&self, skel: &SkeletonDefinition) -> Result<Vec<Point3>, SynthError> {
        skel.joint_names()
            .iter()
            .map(|n| {
                self.landmark(n)
                    .ok_or_else(|| SynthError::UnknownJoint(n.clone()))
            })
            .collect()
    }

    /// Body primitives.
    pub fn capsules(&self) -> Vec<Capsule> {
        let l = &self.landmarks;
        let (lr, tr) = (self.limb_radius, self.torso_radius);
        let cap = |a: usize, b: usize, radius: f64| Capsule {
            a: l[a],
            b: l[b],
            radius,
        };
        let mid = |a: usize, b: usize| Point3::from((l[a].coords + l[b].coords) / 2.0);
        let neck = mid(5, 6);
        let pelvis = mid(11, 12);
        let up = (neck - pelvis).normalize();
        vec![
            Capsule {
                a: l[0],
                b: l[0],
                radius: HEAD_RADIUS,
            },
            Capsule {
                a: l[0],
                b: neck,
                radius: NECK_RADIUS,
            },
            Capsule {
                a: pelvis + up * 0.12,
                b: neck - up * 0.08,
                radius: SPINE_RADIUS,
            },
            cap(5, 6, tr),
            cap(11, 12, tr),
            cap(5, 11, tr),
            cap(6, 12, tr),
            cap(5, 7, lr),
            cap(7, 9, lr),
            cap(6, 8, lr),
            cap(8, 10, lr),
            cap(11, 13, lr),
            cap(13, 15, lr),
            cap(12, 14, lr),
            cap(14, 16, lr),
        ]
    }

    /// Depth of `p` below the body surface: max over primitives of `radius - distance to axis`.
    pub fn local_radius(&self, p: &Point3) -> f64 {
        self.capsules()
            .iter()
            .map(|c| c.radius - c.distance_to_axis(p))
            .fold(f64::MIN, f64::max)
            .max(0.0)
    }

    /// Surface-to-center offsets per skeleton joint, clamped to the admissible range.
    pub fn surface_offsets(&self, skel: &SkeletonDefinition) -> Result<Vec<f64>, SynthError> {
        Ok(self
            .joints_for(skel)?
            .iter()
            .map(|p| self.local_radius(p).clamp(0.0, MAX_DEPTH_OFFSET))
            .collect())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let l = &self.landmarks;
        for (a, b) in [
            (5, 7),
            (7, 9),
            (6, 8),
            (8, 10),
            (11, 13),
            (13, 15),
            (12, 14),
            (14, 16),
            (5, 11),
            (6, 12),
        ] {
            let len = (l[a] - l[b]).norm();
            if len >= MAX_LIMB_LENGTH {
                return Err(SynthError::Body(format!(
                    "{}–{} is {len:.3} m",
                    LANDMARKS[a], LANDMARKS[b]
                )));
            }
        }
        let top = l[0].z + HEAD_RADIUS;
        let bottom = l[15].z.min(l[16].z) - self.limb_radius;
        if top - bottom >= MAX_HEIGHT {
            return Err(SynthError::Body(format!("height {:.3} m", top - bottom)));
        }
        Ok(())
    }

    pub fn transformed(&self, t: &crate::geometry::RigidTransform) -> Self {
        let mut out = self.clone();
        for p in out.landmarks.iter_mut() {
            *p = t.apply(p);
        }
        out
    }
}

/// Offsets for a skeleton that exactly match the synthetic body's surface model.
pub fn matching_offsets(
    skel: &SkeletonDefinition,
    cfg: &SceneConfig,
) -> Result<SkeletonDefinition, SynthError> {
    let person =
        SyntheticPerson::from_params(&PoseParams::default(), cfg.limb_radius, cfg.torso_radius);
    let offsets = person.surface_offsets(skel)?;
    skel.with_depth_offsets(offsets)
        .map_err(|e| SynthError::Config(e.to_string()))
}

/// Cameras evenly spaced on a horizontal ring, all looking at the center.
pub fn ring_cameras(cfg: &SceneConfig) -> Result<Vec<CameraCalibration>, SynthError> {
    let n = cfg.camera_count;
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            let center = Point3::new(
                cfg.camera_ring_radius * a.cos(),
                cfg.camera_ring_radius * a.sin(),
                cfg.camera_height,
            );
            Ok(CameraCalibration::look_at(
                k as u32,
                cfg.image_width,
                cfg.image_height,
                cfg.focal_px,
                center,
                Point3::new(0.0, 0.0, cfg.target_height),
                Vector3::z(),
            )?)
        })
        .collect()
}

fn mix(seed: u64, a: u64, b: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ stream.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, frame: u64, view: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, frame, view, stream))
}

/// Persons and cameras of one frame. A pure function of `(cfg, frame_index)`.
pub fn generate_scene(
    cfg: &SceneConfig,
    frame_index: u64,
) -> Result<(Vec<SyntheticPerson>, Vec<CameraCalibration>), SynthError> {
    cfg.validate()?;
    let cams = ring_cameras(cfg)?;
    let mut rng = rng_for(cfg.seed, 0, 0, 1);
    let radius = cfg.placement_fraction * cfg.camera_ring_radius;
    let min_gap = 2.0 * PoseParams::FOOTPRINT;
    let mut roots: Vec<[f64; 2]> = Vec::new();
    let mut restarts = 0;
    let mut tries = 0;
    while roots.len() < cfg.person_count {
        if tries == 200 {
            restarts += 1;
            if restarts == 200 {
                return Err(SynthError::Placement(cfg.person_count));
            }
            roots.clear();
            tries = 0;
        }
        tries += 1;
        let r = radius * rng.random::<f64>().sqrt();
        let a = rng.random_range(-PI..PI);
        let cand = [r * a.cos(), r * a.sin()];
        if roots
            .iter()
            .all(|q| ((q[0] - cand[0]).powi(2) + (q[1] - cand[1]).powi(2)).sqrt() >= min_gap)
        {
            roots.push(cand);
            tries = 0;
        }
    }
    let params: Vec<PoseParams> = roots
        .iter()
        .map(|&r| PoseParams::sample(&mut rng, r))
        .collect();
    let spin = cfg.orbit_rate * frame_index as f64;
    let persons = params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut p = *p;
            let (c, s) = (spin.cos(), spin.sin());
            p.root = [c * p.root[0] - s * p.root[1], s * p.root[0] + c * p.root[1]];
            p.yaw += spin;
            if cfg.orbit_rate != 0.0 {
                let swing = 0.2 * (0.3 * frame_index as f64 + i as f64).sin();
                p.arm_flexion[0] += swing;
                p.arm_flexion[1] -= swing;
            }
            let person = SyntheticPerson::from_params(&p, cfg.limb_radius, cfg.torso_radius);
            person.validate()?;
            Ok(person)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok((persons, cams))
}

/// Noise-free depth image of the persons seen from `calib`.
pub fn render_depth(persons: &[SyntheticPerson], calib: &CameraCalibration) -> DepthImage {
    let mut img = DepthImage::for_camera(calib);
    let (w, h) = (calib.width as i64, calib.height as i64);
    for person in persons {
        for cap in person.capsules() {
            let a = calib.world_to_camera(&cap.a);
            let b = calib.world_to_camera(&cap.b);
            let local = Capsule {
                a,
                b,
                radius: cap.radius,
            };
            let lo = a.coords.inf(&b.coords).add_scalar(-cap.radius);
            let hi = a.coords.sup(&b.coords).add_scalar(cap.radius);
            if hi.z <= 0.0 {
                continue;
            }
            let (mut x0, mut x1, mut y0, mut y1) = (0, w - 1, 0, h - 1);
            if lo.z > 1e-3 {
                let (mut umin, mut umax, mut vmin, mut vmax) =
                    (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
                for corner in 0..8 {
                    let c = Point3::new(
                        if corner & 1 == 0 { lo.x } else { hi.x },
                        if corner & 2 == 0 { lo.y } else { hi.y },
                        if corner & 4 == 0 { lo.z } else { hi.z },
                    );
                    let px = calib.project_camera(&c);
                    umin = umin.min(px.u);
                    umax = umax.max(px.u);
                    vmin = vmin.min(px.v);
                    vmax = vmax.max(px.v);
                }
                x0 = (umin.floor() as i64 - 1).max(0);
                x1 = (umax.ceil() as i64 + 1).min(w - 1);
                y0 = (vmin.floor() as i64 - 1).max(0);
                y1 = (vmax.ceil() as i64 + 1).min(h - 1);
            }
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dir = Vector3::new(
                        (x as f64 - calib.cx) / calib.fx,
                        (y as f64 - calib.cy) / calib.fy,
                        1.0,
                    );
                    if let Some(t) = local.intersect(&dir) {
                        let cur = img.get(x as u32, y as u32);
                        let t = t as f32;
                        if cur == 0.0 || t < cur {
                            img.set(x as u32, y as u32, t);
                        }
                    }
                }
            }
        }
    }
    img
}

/// Visibility tolerance for a joint of local radius `r`.
pub fn visibility_epsilon(r: f64) -> f64 {
    0.5 * r + 0.02
}

/// Keypoints of every person that has at least one visible joint, in person order.
///
/// A joint is visible when the rendered depth at its pixel is within
/// [`visibility_epsilon`] of its surface depth and the cross-median around it
/// (default cross) is within one limb radius of that surface depth.
/// Also returns, for each emitted pose, the index of the person it belongs to.
pub fn project_keypoints<R: Rng>(
    persons: &[SyntheticPerson],
    calib: &CameraCalibration,
    depth: &DepthImage,
    skel: &SkeletonDefinition,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<(Vec<Pose2D>, Vec<usize>), SynthError> {
    let mut poses = Vec::new();
    let mut owners = Vec::new();
    let pixel_noise = Normal::new(0.0, noise.pixel_sigma.max(1e-12)).expect("valid sigma");
    for (pi, person) in persons.iter().enumerate() {
        let mut pose = Pose2D::new(calib.view_id);
        for (j, p) in person.joints_for(skel)?.iter().enumerate() {
            let Ok((px, z)) = calib.project(p) else {
                continue;
            };
            if !calib.contains(px) {
                continue;
            }
            if !noise.occluded_keypoints && !visible(person, p, px, z, depth) {
                continue;
            }
            let mut pixel = px;
            let mut confidence = 1.0;
            if noise.pixel_sigma > 0.0 {
                let (du, dv) = (pixel_noise.sample(rng), pixel_noise.sample(rng));
                pixel = Pixel::new(px.u + du, px.v + dv);
                let e = (du * du + dv * dv).sqrt() / noise.pixel_sigma;
                confidence = (1.0 - 0.15 * e).clamp(0.05, 1.0);
            }
            if noise.keypoint_dropout > 0.0 && rng.random::<f64>() < noise.keypoint_dropout {
                continue;
            }
            pose.insert(Keypoint2D {
                joint: j,
                pixel,
                confidence,
            });
        }
        if !pose.is_empty() {
            poses.push(pose);
            owners.push(pi);
        }
    }
    Ok((poses, owners))
}

fn visible(person: &SyntheticPerson, p: &Point3, px: Pixel, z: f64, depth: &DepthImage) -> bool {
    let r = person.local_radius(p);
    let (u, v) = px.rounded();
    let seen = depth.get(u as u32, v as u32) as f64;
    if seen <= 0.0 || (seen - (z - r)).abs() > visibility_epsilon(r) {
        return false;
    }
    // near a silhouette edge the pixel can be visible while its
    // neighborhood belongs to a farther surface
    let sampled = sample_depth(depth, px, &CrossParams::default());
    sampled.is_some_and(|d| (d - (z - r)).abs() <= person.limb_radius)
}

/// Adds sensor noise and holes to a rendered image.
pub fn corrupt_depth<R: Rng>(img: &mut DepthImage, noise: &NoiseConfig, rng: &mut R) {
    if noise.depth_sigma <= 0.0 && noise.depth_holes <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, noise.depth_sigma.max(1e-12)).expect("valid sigma");
    for d in img.values_mut() {
        if *d <= 0.0 {
            continue;
        }
        if noise.depth_holes > 0.0 && rng.random::<f64>() < noise.depth_holes {
            *d = 0.0;
            continue;
        }
        if noise.depth_sigma > 0.0 {
            let v = *d as f64 + normal.sample(rng);
            *d = if v > 0.0 { v as f32 } else { 0.0 };
        }
    }
}

/// Everything observed and known about one synthetic frame.
#[derive(Debug, Clone)]
pub struct SyntheticFrame {
    pub frame_index: u64,
    pub calibrations: Vec<CameraCalibration>,
    pub persons: Vec<SyntheticPerson>,
    /// Per view, in calibration order.
    pub depth: Vec<DepthImage>,
    pub detections: Vec<Vec<Pose2D>>,
    /// Per view, the person index of every detection.
    pub owners: Vec<Vec<usize>>,
    /// Joint positions per person, skeleton order.
    pub ground_truth: Vec<JointSet>,
}

/// Renders and annotates an explicit scene.
pub fn observe(
    frame_index: u64,
    persons: Vec<SyntheticPerson>,
    calibrations: Vec<CameraCalibration>,
    skel: &SkeletonDefinition,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<SyntheticFrame, SynthError> {
    use rayon::prelude::*;
    type ViewObservation = (DepthImage, Vec<Pose2D>, Vec<usize>);
    let per_view: Vec<Result<ViewObservation, SynthError>> = calibrations
        .par_iter()
        .map(|calib| {
            let mut img = render_depth(&persons, calib);
            let mut rng = rng_for(seed, frame_index, calib.view_id as u64, 2);
            let (poses, owners) = project_keypoints(&persons, calib, &img, skel, noise, &mut rng)?;
            corrupt_depth(&mut img, noise, &mut rng);
            Ok((img, poses, owners))
        })
        .collect();
    let mut depth = Vec::new();
    let mut detections = Vec::new();
    let mut owners = Vec::new();
    for r in per_view {
        let (d, p, o) = r?;
        depth.push(d);
        detections.push(p);
        owners.push(o);
    }
    let ground_truth = persons
        .iter()
        .map(|p| Ok(p.joints_for(skel)?.into_iter().map(Some).collect()))
        .collect::<Result<Vec<JointSet>, SynthError>>()?;
    Ok(SyntheticFrame {
        frame_index,
        calibrations,
        persons,
        depth,
        detections,
        owners,
        ground_truth,
    })
}

/// Generates and renders frame `frame_index` of the configured scene.
pub fn synthesize_frame(
    cfg: &SceneConfig,
    skel: &SkeletonDefinition,
    frame_index: u64,
) -> Result<SyntheticFrame, SynthError> {
    let (persons, cams) = generate_scene(cfg, frame_index)?;
    observe(frame_index, persons, cams, skel, &cfg.noise, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::coco13;

    #[test]
    fn scenes_are_deterministic() {
        let cfg = SceneConfig {
            seed: 42,
            ..Default::default()
        };
        let a = generate_scene(&cfg, 3).unwrap();
        let b = generate_scene(&cfg, 3).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let skel = SkeletonDefinition::coco13();
        let noisy = SceneConfig {
            noise: NoiseConfig {
                depth_sigma: 0.01,
                pixel_sigma: 1.0,
                keypoint_dropout: 0.1,
                depth_holes: 0.05,
                occluded_keypoints: false,
            },
            camera_count: 2,
            ..cfg
        };
        let fa = synthesize_frame(&noisy, &skel, 1).unwrap();
        let fb = synthesize_frame(&noisy, &skel, 1).unwrap();
        assert_eq!(fa.depth, fb.depth);
        assert_eq!(fa.detections, fb.detections);
    }

    #[test]
    fn ring_geometry() {
        let cfg = SceneConfig {
            camera_count: 4,
            camera_ring_radius: 3.0,
            ..Default::default()
        };
        let cams = ring_cameras(&cfg).unwrap();
        for (k, c) in cams.iter().enumerate() {
            let p = c.center();
            assert!(((p.x * p.x + p.y * p.y).sqrt() - 3.0).abs() < 1e-12);
            let ang = p.y.atan2(p.x);
            let want = k as f64 * PI / 2.0;
            let diff = (ang - want + PI).rem_euclid(2.0 * PI) - PI;
            assert!(diff.abs() < 1e-12);
        }
    }

    #[test]
    fn bodies_respect_limits() {
        for seed in 0..20 {
            let cfg = SceneConfig {
                seed,
                person_count: 3,
                ..Default::default()
            };
            let (persons, _) = generate_scene(&cfg, 0).unwrap();
            for p in &persons {
                p.validate().unwrap();
            }
        }
    }

    #[test]
    fn crowded_placement_fails() {
        let cfg = SceneConfig {
            person_count: 30,
            ..Default::default()
        };
        assert!(matches!(
            generate_scene(&cfg, 0),
            Err(SynthError::Placement(30))
        ));
    }

    #[test]
    fn sphere_on_axis_depth() {
        let calib = CameraCalibration::identity(0, 64, 48, 60.0, 32.0, 24.0);
        let mut person = SyntheticPerson::from_params(&PoseParams::default(), 0.04, 0.06);
        // move the whole body far away except the head, placed on the optical axis
        for p in person.landmarks.iter_mut() {
            *p = Point3::new(p.x, p.y, -50.0);
        }
        person.landmarks[0] = Point3::new(0.0, 0.0, 2.5);
        for i in 1..5 {
            person.landmarks[i] = Point3::new(0.0, 0.0, 2.5);
        }
        let img = render_depth(&[person], &calib);
        assert!((img.get(32, 24) as f64 - (2.5 - HEAD_RADIUS)).abs() < 1e-6);
        assert_eq!(render_depth(&[], &calib).valid_count(), 0);
    }

    #[test]
    fn capsule_intersection_matches_brute_force() {
        let cap = Capsule {
            a: Point3::new(-0.2, 0.1, 2.0),
            b: Point3::new(0.3, -0.1, 2.4),
            radius: 0.07,
        };
        let mut hits = 0;
        for i in 0..40 {
            for k in 0..40 {
                let dir = Vector3::new(-0.2 + 0.0125 * i as f64, -0.15 + 0.0075 * k as f64, 1.0);
                // coarse march, then bisect the first inside/outside transition
                let inside = |t: f64| cap.distance_to_axis(&Point3::from(dir * t)) <= cap.radius;
                let mut reference = None;
                let mut t = 1.5;
                while t < 3.0 {
                    if inside(t) {
                        let (mut lo, mut hi) = (t - 1e-3, t);
                        for _ in 0..40 {
                            let mid = 0.5 * (lo + hi);
                            if inside(mid) {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        reference = Some(hi);
                        break;
                    }
                    t += 1e-3;
                }
                match (cap.intersect(&dir), reference) {
                    (Some(a), Some(b)) => {
                        hits += 1;
                        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                    }
                    (None, None) => {}
                    (a, b) => {
                        // grazing rays may disagree within the march step
                        let t = a.or(b).unwrap();
                        let d = cap.distance_to_axis(&Point3::from(dir * t));
                        assert!((d - cap.radius).abs() < 1e-4, "{a:?} vs {b:?}");
                    }
                }
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn frontal_person_emits_everything_and_dropout_empties() {
        let skel = SkeletonDefinition::coco13();
        let person = SyntheticPerson::from_params(&PoseParams::default(), 0.04, 0.06);
        let calib = CameraCalibration::look_at(
            0,
            640,
            480,
            420.0,
            Point3::new(3.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, 0.9),
            Vector3::z(),
        )
        .unwrap();
        let img = render_depth(std::slice::from_ref(&person), &calib);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (poses, _) = project_keypoints(
            std::slice::from_ref(&person),
            &calib,
            &img,
            &skel,
            &NoiseConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(poses.len(), 1);
        assert_eq!(poses[0].len(), 13);
        for (j, kp) in &poses[0].keypoints {
            let (px, _) = calib
                .project(&person.joints_for(&skel).unwrap()[*j])
                .unwrap();
            assert_eq!(kp.pixel, px);
        }
        let drop_all = NoiseConfig {
            keypoint_dropout: 1.0,
            ..Default::default()
        };
        let (poses, _) =
            project_keypoints(&[person], &calib, &img, &skel, &drop_all, &mut rng).unwrap();
        assert!(poses.is_empty());
    }

    #[test]
    fn occluded_joint_omitted_and_front_person_wins() {
        let skel = SkeletonDefinition::coco13();
        let calib = CameraCalibration::look_at(
            0,
            640,
            480,
            420.0,
            Point3::new(4.0, 0.0, 1.0),
            Point3::new(0.0, 0.0, 0.9),
            Vector3::z(),
        )
        .unwrap();
        let back = SyntheticPerson::from_params(&PoseParams::default(), 0.04, 0.06);
        let front = SyntheticPerson::from_params(
            &PoseParams {
                root: [1.5, 0.0],
                ..Default::default()
            },
            0.04,
            0.06,
        );
        let persons = vec![back.clone(), front.clone()];
        let img = render_depth(&persons, &calib);
        // per-pixel minimum of the two single-person renders
        let a = render_depth(std::slice::from_ref(&back), &calib);
        let b = render_depth(std::slice::from_ref(&front), &calib);
        for (i, &v) in img.values().iter().enumerate() {
            let (x, y) = (a.values()[i], b.values()[i]);
            let want = match (x > 0.0, y > 0.0) {
                (true, true) => x.min(y),
                (true, false) => x,
                (false, true) => y,
                _ => 0.0,
            };
            assert_eq!(v, want);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (poses, owners) = project_keypoints(
            &persons,
            &calib,
            &img,
            &skel,
            &NoiseConfig::default(),
            &mut rng,
        )
        .unwrap();
        let back_pose = poses
            .iter()
            .zip(&owners)
            .find(|(_, &o)| o == 0)
            .map(|(p, _)| p);
        let hidden = back_pose.is_none_or(|p| !p.keypoints.contains_key(&coco13::NOSE));
        assert!(hidden, "head of the rear person is behind the front person");

        let leak = NoiseConfig {
            occluded_keypoints: true,
            ..Default::default()
        };
        let (poses, owners) =
            project_keypoints(&persons, &calib, &img, &skel, &leak, &mut rng).unwrap();
        let back_pose = poses
            .iter()
            .zip(&owners)
            .find(|(_, &o)| o == 0)
            .map(|(p, _)| p)
            .unwrap();
        assert_eq!(back_pose.len(), 13);
    }

    #[test]
    fn local_radius_matches_primitives() {
        let skel = SkeletonDefinition::coco13();
        let p = SyntheticPerson::from_params(&PoseParams::default(), 0.04, 0.06);
        let off = p.surface_offsets(&skel).unwrap();
        assert!((off[coco13::NOSE] - HEAD_RADIUS).abs() < 1e-12);
        assert!((off[coco13::L_SHOULDER] - 0.06).abs() < 1e-12);
        assert!((off[coco13::L_HIP] - 0.06).abs() < 1e-12);
        assert!((off[coco13::R_KNEE] - 0.04).abs() < 1e-12);
        assert!((off[coco13::L_WRIST] - 0.04).abs() < 1e-12);
    }
}
