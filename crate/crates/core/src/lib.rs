//! Entanglement of purification and visible state compression codes.

pub mod battery;
pub mod channels;
pub mod ensemble;
pub mod eop;
pub mod error;
pub mod optim;
pub mod oracle;
pub mod qmat;
pub mod random;
pub mod viscode;

pub use error::{Error, Result};
