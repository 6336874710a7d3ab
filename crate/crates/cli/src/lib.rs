//! Library side of the `sysid` command-line tool.

pub mod config;
pub mod run;
pub mod simulate;
pub mod table;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const INPUT_ERROR: u8 = 2;
    pub const NOT_CONVERGED: u8 = 3;
}
