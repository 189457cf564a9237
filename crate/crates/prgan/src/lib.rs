//! Learning generative models of 3D voxel shapes from unlabeled 2D silhouettes.
//!
//! A 3D voxel generator is trained adversarially against a 2D image
//! discriminator; the two are joined by a differentiable projection that rotates
//! the generated grid to one of eight azimuthal views and integrates occupancy
//! along each line of sight.
//!
//! Module map:
//! - [`autodiff`]: tape-based reverse-mode differentiation and ADAM
//! - [`projection`]: rotation by nearest-neighbor resampling and soft projection
//! - [`networks`]: generator, discriminator, and the 2D/3D baselines
//! - [`training`]: adversarial optimization with adaptive discriminator skipping
//! - [`dataset`]: procedural shapes, mesh voxelization, and silhouette rendering
//! - [`evaluation`]: maximum mean discrepancy on binarized samples
//! - [`inference`]: encoder network, shape/view prediction, and interpolation
//! - [`io`]: checkpoint, voxel, PGM, OBJ, and manifest formats

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod io;
pub mod networks;
pub mod projection;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::NdValue;

/// Seeded RNG used everywhere a seed is accepted.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
