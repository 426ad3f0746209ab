use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Point3, Pose, Trajectory, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// Quarter circle around the scene center, always looking at it.
    Orbit,
    /// Forward motion along a gentle curve, heading along the tangent.
    ForwardArc,
    /// Sideways sweep on a shallow curve while yawing across the scene.
    Pan,
    Static,
    /// Straight sideways line without rotation.
    Linear,
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 5] =
        [TrajectoryKind::Orbit, TrajectoryKind::ForwardArc, TrajectoryKind::Pan, TrajectoryKind::Static, TrajectoryKind::Linear];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::Orbit => "orbit",
            TrajectoryKind::ForwardArc => "forward-arc",
            TrajectoryKind::Pan => "pan",
            TrajectoryKind::Static => "static",
            TrajectoryKind::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_static: usize,
    pub n_dynamic: usize,
    pub trajectory_kind: TrajectoryKind,
    pub num_frames: u32,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub orbit_radius: f64,
    /// Minimum fraction of frames in which every generated point is visible.
    pub min_visible_fraction: f64,
    /// Share of dynamic points that drift linearly instead of oscillating.
    /// Drifting points stay slow so they remain in view, which keeps their
    /// epipolar violation under the motion-mask threshold.
    pub linear_fraction: f64,
    /// Speed range of linearly moving dynamic points, scene units per frame.
    pub linear_speed: (f64, f64),
    /// Amplitude range of oscillating dynamic points, scene units.
    pub wobble_amplitude: (f64, f64),
    /// Period range of oscillating dynamic points, frames.
    pub wobble_period: (f64, f64),
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_static: 200,
            n_dynamic: 86,
            trajectory_kind: TrajectoryKind::Orbit,
            num_frames: 60,
            fps: 12.0,
            width: 640,
            height: 360,
            focal: 500.0,
            orbit_radius: 6.0,
            min_visible_fraction: 0.6,
            linear_fraction: 0.0,
            linear_speed: (0.02, 0.06),
            wobble_amplitude: (0.5, 1.0),
            wobble_period: (8.0, 16.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Linear { velocity: Vec3 },
    Sinusoidal { amplitude: Vec3, period_frames: f64, phase: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicPoint {
    pub origin: Point3,
    pub motion: Motion,
}

impl DynamicPoint {
    pub fn at(&self, frame: f64) -> Point3 {
        match self.motion {
            Motion::Linear { velocity } => self.origin + velocity * frame,
            Motion::Sinusoidal { amplitude, period_frames, phase } => {
                self.origin + amplitude * ((2.0 * PI * frame / period_frames + phase).sin() - phase.sin())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub seed: u64,
    pub config: SceneConfig,
    pub static_points: Vec<Point3>,
    pub dynamic_points: Vec<DynamicPoint>,
    pub gt_trajectory: Trajectory,
    pub intrinsics: CameraIntrinsics,
}

impl SynthScene {
    pub fn num_frames(&self) -> u32 {
        self.config.num_frames
    }

    pub fn fps(&self) -> f64 {
        self.config.fps
    }

    pub fn pose(&self, frame: u32) -> Pose {
        *self.gt_trajectory.pose(frame).expect("ground truth is fully registered")
    }

    /// Point `i` at `frame`; static points first, then dynamic ones.
    pub fn point(&self, i: usize, frame: u32) -> Point3 {
        if i < self.static_points.len() {
            self.static_points[i]
        } else {
            self.dynamic_points[i - self.static_points.len()].at(frame as f64)
        }
    }

    pub fn num_points(&self) -> usize {
        self.static_points.len() + self.dynamic_points.len()
    }

    pub fn is_dynamic(&self, i: usize) -> bool {
        i >= self.static_points.len()
    }

    /// Projection of point `i` at `frame` when it is in front and inside the frame.
    pub fn observe(&self, i: usize, frame: u32) -> Option<crate::geometry::Point2> {
        let pose = self.pose(frame);
        let pc = pose.transform(&self.point(i, frame));
        if pc.z < 0.1 {
            return None;
        }
        let px = self.intrinsics.project(&pc)?;
        self.intrinsics.contains(&px).then_some(px)
    }

    /// Same scene with every point and camera moved by a rigid transform.
    /// Projections are unchanged.
    pub fn rigidly_moved(&self, rotation: &UnitQuaternion<f64>, translation: &Vec3) -> Self {
        let mv = |p: &Point3| Point3::from(rotation * p.coords + translation);
        let mut out = self.clone();
        out.static_points = self.static_points.iter().map(mv).collect();
        out.dynamic_points = self
            .dynamic_points
            .iter()
            .map(|d| DynamicPoint {
                origin: mv(&d.origin),
                motion: match d.motion {
                    Motion::Linear { velocity } => Motion::Linear { velocity: rotation * velocity },
                    Motion::Sinusoidal { amplitude, period_frames, phase } => {
                        Motion::Sinusoidal { amplitude: rotation * amplitude, period_frames, phase }
                    }
                },
            })
            .collect();
        let world_to_old = Pose::new(rotation.inverse(), -(rotation.inverse() * translation));
        out.gt_trajectory.frames = self.gt_trajectory.frames.iter().map(|(f, p)| (*f, p.map(|p| p.compose(&world_to_old)))).collect();
        out
    }
}

/// World-to-camera pose at `eye` looking at `target`; world `-y` is up.
pub fn look_at(eye: &Vec3, target: &Vec3) -> Pose {
    let z = (target - eye).normalize();
    let up = Vec3::new(0.0, -1.0, 0.0);
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let cam_to_world = Matrix3::from_columns(&[x, y, z]);
    let r = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(cam_to_world.transpose()));
    Pose::from_center(r, eye)
}

fn camera_path(cfg: &SceneConfig) -> Vec<Pose> {
    let n = cfg.num_frames.max(1);
    let s = |i: u32| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
    (0..n)
        .map(|i| {
            let u = s(i);
            match cfg.trajectory_kind {
                TrajectoryKind::Orbit => {
                    let theta = -PI / 4.0 + u * PI / 2.0;
                    let eye = Vec3::new(cfg.orbit_radius * theta.sin(), -1.0, -cfg.orbit_radius * theta.cos());
                    look_at(&eye, &Vec3::zeros())
                }
                TrajectoryKind::ForwardArc => {
                    // arc of radius 20 curving right, 3 units long
                    let (radius, len) = (20.0, 3.0);
                    let phi = u * len / radius;
                    let eye = Vec3::new(radius * (1.0 - phi.cos()), -0.3 * u, radius * phi.sin() - 3.0);
                    let heading = Vec3::new(phi.sin(), 0.0, phi.cos());
                    look_at(&eye, &(eye + heading))
                }
                TrajectoryKind::Pan => {
                    let x = -1.5 + 3.0 * u;
                    let eye = Vec3::new(x, -0.2, -6.0 + 0.25 * x * x);
                    let yaw = (-15.0 + 30.0 * u).to_radians();
                    look_at(&eye, &(eye + Vec3::new(yaw.sin(), 0.05, yaw.cos())))
                }
                TrajectoryKind::Static => look_at(&Vec3::new(0.0, -1.0, -6.0), &Vec3::zeros()),
                TrajectoryKind::Linear => {
                    let eye = Vec3::new(-1.5 + 3.0 * u, -1.0, -6.0);
                    look_at(&eye, &(eye + Vec3::new(0.0, 0.16, 1.0)))
                }
            }
        })
        .collect()
}

fn sample_in_box(rng: &mut ChaCha8Rng) -> Point3 {
    Point3::new(rng.random_range(-2.5..2.5), rng.random_range(-1.6..1.6), rng.random_range(-2.0..2.0))
}

fn visible_fraction(poses: &[Pose], k: &CameraIntrinsics, at: impl Fn(u32) -> Point3) -> f64 {
    let seen = poses
        .iter()
        .enumerate()
        .filter(|(f, pose)| {
            let pc = pose.transform(&at(*f as u32));
            pc.z >= 0.1 && k.project(&pc).is_some_and(|p| k.contains(&p))
        })
        .count();
    seen as f64 / poses.len() as f64
}

/// Generates a scene; identical seeds and configs give identical scenes.
pub fn gen_scene(seed: u64, config: &SceneConfig) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = CameraIntrinsics::centered(config.focal, config.width, config.height).expect("valid synthetic intrinsics");
    let poses = camera_path(config);
    let min_vis = config.min_visible_fraction;

    let mut static_points = Vec::with_capacity(config.n_static);
    let mut attempts = 0usize;
    while static_points.len() < config.n_static {
        attempts += 1;
        assert!(attempts < 1_000_000, "cannot place visible static points for this trajectory");
        let p = sample_in_box(&mut rng);
        if visible_fraction(&poses, &k, |_| p) >= min_vis {
            static_points.push(p);
        }
    }

    let mut dynamic_points = Vec::with_capacity(config.n_dynamic);
    while dynamic_points.len() < config.n_dynamic {
        attempts += 1;
        assert!(attempts < 2_000_000, "cannot place visible dynamic points for this trajectory");
        let origin = sample_in_box(&mut rng);
        let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if dir.norm() < 1e-3 {
            continue;
        }
        let dir = dir.normalize();
        let (origin, motion) = if rng.random_bool(config.linear_fraction.clamp(0.0, 1.0)) {
            let velocity = dir * rng.random_range(config.linear_speed.0..=config.linear_speed.1);
            // sampled position is the midpoint of the path
            (origin - velocity * (config.num_frames as f64 / 2.0), Motion::Linear { velocity })
        } else {
            let motion = Motion::Sinusoidal {
                amplitude: dir * rng.random_range(config.wobble_amplitude.0..=config.wobble_amplitude.1),
                period_frames: rng.random_range(config.wobble_period.0..=config.wobble_period.1),
                phase: rng.random_range(0.0..2.0 * PI),
            };
            (origin, motion)
        };
        let d = DynamicPoint { origin, motion };
        if visible_fraction(&poses, &k, |f| d.at(f as f64)) >= min_vis {
            dynamic_points.push(d);
        }
    }

    SynthScene {
        seed,
        config: config.clone(),
        static_points,
        dynamic_points,
        gt_trajectory: Trajectory::from_poses(poses, config.fps),
        intrinsics: k,
    }
}
