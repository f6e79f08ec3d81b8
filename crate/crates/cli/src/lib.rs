//! Library surface of the command-line front end: the scenario file format
//! and the sweep/search runners. The binary in `main.rs` is a thin argument
//! layer over these.

pub mod run;
pub mod scnfile;
