//! Seeded synthetic dynamic scenes and filter fixtures with known ground truth.

mod fixtures;
mod model;
mod scene;
mod tracks;

pub use fixtures::{make_filter_fixture, FixtureKind};
pub use model::{ground_truth_model, perturb_poses};
pub use scene::{gen_scene, look_at, DynamicPoint, Motion, SceneConfig, SynthScene, TrajectoryKind};
pub use tracks::{flow_pair, project_tracks, SynthTracks, TrackConfig};
