pub mod bitstream;
pub mod codebook;
pub mod error;
pub mod estimator;
pub mod simulate;
pub mod theory;
