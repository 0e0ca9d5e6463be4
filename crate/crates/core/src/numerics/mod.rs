//! Dense matrix algebra, a reverse-mode gradient tape, a symmetric
//! eigensolver, and a seeded random number source.

pub mod eigen;
pub mod matrix;
pub mod rng;
pub mod tape;

pub use eigen::symmetric_eigen;
pub use matrix::Matrix;
pub use rng::SeededRng;
pub use tape::{Gradients, NodeId, Tape};
