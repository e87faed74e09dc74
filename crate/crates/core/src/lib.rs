//! Codes for the adversarial torn-paper channel with edit errors.

pub mod bitword;
pub mod channel;
pub mod codec;
pub mod decoder;
pub mod error;
pub mod experiment;
pub mod gf;
pub mod listdec;
pub mod markers;
pub mod rs;
pub mod structure;

pub use bitword::{BitWord, EditKind, EditOp, EditScript};
pub use error::{Error, Result, Stage};
