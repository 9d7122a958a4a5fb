//! File I/O, the power-study runner, and the verification suites behind
//! the CLI.

mod calfile;
mod csv;
mod power;
mod verify;

pub use calfile::{calibration_from_bytes, calibration_to_bytes, read_calibration, write_calibration};
pub use csv::{parse_sample_csv, parse_sample_str};
pub use power::{
    calibrate_statistics, power_study, power_study_with, CalibratedTests, PowerStudyConfig,
    PowerStudyResult, RejectionRate, TestKind,
};
pub use verify::{run_verify, VerifyReport};
