pub mod config;
pub mod direct;
pub mod error;
pub mod field;
pub mod grid;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod operators;
pub mod params;
pub mod pipeline;
pub mod positivity;
pub mod prototype;
pub mod scaling;
pub mod store;
pub mod talenti;
pub mod verify;

pub use error::{PsflowError, Result};
pub use field::Field;
pub use grid::{Grid, GridMode};
pub use params::{make_params, FlowParams, Tolerances};
