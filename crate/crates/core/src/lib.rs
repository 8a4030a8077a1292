pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod gibbs;
pub mod model;
pub mod samplers;
pub mod spline;
pub mod stats;
