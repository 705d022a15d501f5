pub mod curves;
pub mod duality;
pub mod error;
pub mod graph;
pub mod measure;
pub mod modulus;
mod optim;
pub mod primal;
pub mod space;
pub mod plans;
pub mod gradients;
pub mod io;
pub mod acceptance;
