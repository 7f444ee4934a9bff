//! A small differentiable detector over synthetic scenes.
//!
//! Each scene is the unit square tiled by a `grid_size x grid_size` grid of
//! fixed candidate boxes. Every candidate carries a noisy feature vector
//! describing its overlap with nearby objects; a three-layer feed-forward
//! head maps it to one objectness logit and four box offsets.

mod checkpoint;
mod model;
mod scene;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{forward, predict, CandidateOutput, Dense, ToyModel, OUTPUT_DIM};
pub use scene::{generate_scene, generate_scenes, Scene, SceneConfig, FEATURE_DIM};
pub use train::{mean_loss, train, TrainConfig, TrainOutput};
