pub mod dbr;
pub mod error;
pub mod fock;
pub mod gleason;
pub mod hardy;
pub mod index;
pub mod linalg;
pub mod onevar;
pub mod realization;
pub mod report;

pub use error::{Error, Result};
pub use index::{MultiIndex, Poly, Word};
