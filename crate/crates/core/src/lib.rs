pub mod blackbox;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod kernels;
pub mod posterior;
pub mod ptg;
pub mod sampling;
pub mod space;
