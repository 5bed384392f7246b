//! Invariance feedback entropy of finite uncertain systems, data-rate-limited
//! coder-controllers, and rate bounds for uncertain linear systems.

pub mod cli;
pub mod codec;
pub mod covers;
pub mod detoracle;
pub mod entropy;
pub mod io;
pub mod error;
pub mod linear;
pub mod random;
pub mod rate;
pub mod refine;
pub mod set;
pub mod system;

pub use error::{Error, Result};
pub use rate::LogRate;
pub use set::StateSet;
pub use system::{FiniteSystem, TargetSet};
