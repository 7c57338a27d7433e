#![allow(clippy::needless_range_loop)]

pub mod datagen;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod kb;
pub mod nn;
pub mod numerical;
pub mod reasoner;
pub mod train;

pub use error::{Error, Result};
