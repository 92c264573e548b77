//! Benchmark worlds: exact-oracle Gaussian-mixture instances and the
//! procedural ColorMNIST composition benchmark.

pub mod colormnist;
pub mod font;
pub mod gmm2d;

pub use colormnist::{gen_colormnist, ColorMnistDataset, ColorMnistSpec, SlotInfo};
pub use gmm2d::{gen_gmm2d, Gmm2dSample, Gmm2dSpec};
