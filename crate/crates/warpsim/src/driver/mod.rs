//! Everything between the CLI and the core model: kernel generators, config
//! files, kernel-file directives, and the run/sweep orchestration.

pub mod config;
pub mod gen;
pub mod kernel_file;
pub mod runner;

pub use config::{parse_config, parse_machine_label, ConfigFileError, FileConfig};
pub use gen::{generate, GenError, GeneratedKernel, KernelClass, DATA_BASE, INPUT_BASE, OUTPUT_BASE};
pub use kernel_file::{parse_kernel_text, KernelFile, KernelFileError};
pub use runner::{run, sweep, DriverError, RunSpec, SweepSpec};
