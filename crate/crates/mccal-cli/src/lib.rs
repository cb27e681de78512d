//! The `mccal` command-line pipeline: `demo` trains a small MC-dropout
//! classifier and dumps logits, `fit` finds the temperature, `evaluate`
//! writes the calibration report, `reliability` and `reject` emit plot
//! data, and `oracle` audits the metric implementations.

pub mod args;
pub mod commands;
pub mod oracle;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

/// Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let kind = err.kind();
            let _ = err.print();
            return match kind {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::run(&cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                mccal::Error::Io(_) => 2,
                _ => 1,
            }
        }
    }
}
