//! Maps on the Hamming cube: pair statistics, rigidity constants, interval
//! trees, and subcube extraction certificates.

pub mod catalog;
pub mod cube;
pub mod concentration;
pub mod error;
pub mod extraction;
pub mod report;
pub mod rigidity;
pub mod spaces;
pub mod tree;
pub mod type_stats;

pub use cube::{Cube, CubePoint, SignedInterval};
pub use error::{Error, Result};
pub use spaces::{LipschitzMap, LpSpace, MapOnCube, MapPair, NormExponent, Point, Space, TabulatedSpace};
