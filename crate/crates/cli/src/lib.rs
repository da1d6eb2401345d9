//! Command-line front end for `msopt-core`.
//!
//! Every command produces an [`Outcome`]: an exit code, a JSON report and a
//! short human-readable summary. Exit codes are 0 for success, 1 for a
//! negative finding, 2 for an inconclusive verdict and 3 for input errors.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

pub use commands::execute;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NEGATIVE: u8 = 1;
pub const EXIT_INCONCLUSIVE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "msopt", version, about = "Multistage stochastic optimization on finite scenario trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Problem file (bundle, MDP, stagewise problem or interchange data).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Policy file for `verify` and `dynamic-check`.
    #[arg(long, global = true)]
    pub policy: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = msopt_core::verification::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, global = true, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print the JSON report instead of the summary.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Backward,
    Brute,
    Auto,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal value and an argmin policy of a problem bundle.
    Solve {
        /// Write the argmin policy to this file.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Martingale test of a policy's value processes.
    Verify,
    /// Dynamic relations between consecutive value processes along a policy.
    DynamicCheck,
    /// Minimum of expectations against expectation of minima.
    DemoInterchange {
        /// Use seeded random data instead of the builtin example.
        #[arg(long)]
        random: bool,
    },
    /// Finite-horizon backward induction on an MDP.
    MdpSolve {
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Value iteration on a discounted MDP.
    ValueIterate {
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
    },
    /// Backward recursion on a stagewise-independent problem.
    SddpSolve,
    /// Structural checks on any supported input file.
    Validate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub json: String,
    pub text: String,
}

impl Outcome {
    pub fn render(&self, json: bool) -> &str {
        if json {
            &self.json
        } else {
            &self.text
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// code with the text for stdout and stderr.
pub fn run<I, T>(args: I) -> (u8, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() { (code, String::new(), text) } else { (code, text, String::new()) };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let mut text = out.render(cli.json).to_string();
            if !text.ends_with('\n') {
                text.push('\n');
            }
            (out.code, text, String::new())
        }
        Err(e) => (EXIT_INPUT, String::new(), format!("error: {e:#}\n")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_demo_runs_without_input() {
        let (code, out, err) = run(["msopt", "demo-interchange"]);
        assert_eq!((code, err.as_str()), (EXIT_OK, ""));
        assert!(out.contains("gap 4"));
    }

    #[test]
    fn bad_flags_are_input_errors() {
        let (code, _, err) = run(["msopt", "solve", "--method", "fastest"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(!err.is_empty());
    }
}
