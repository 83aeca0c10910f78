pub mod config;
pub mod derotation;
pub mod error;
pub mod eval;
pub mod flow;
pub mod image;
pub mod io;
pub mod model;
pub mod observer;
pub mod pipeline;
pub mod plot;
pub mod sim;
pub mod tau;
pub mod tracker;

pub use error::{Error, Result};
