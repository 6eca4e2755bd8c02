//! The `coexist` command line: `derive`, `verify`, `simulate`, `emit-sql`.
//!
//! Exit status is 0 on success, 1 when the input is well-formed but a
//! derivation, law or expectation fails, and 2 for usage and I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use coexist_core::datalog::parse_program;
use coexist_core::derive::{derive_all, derive_unchecked, BxSpec, DeriveOptions, DerivedBx};
use coexist_core::runtime::{run_script, ScriptError};
use coexist_core::sqlgen;
use coexist_core::verify::{check_derived, Mode, Universe};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// File names written by `derive`, in pipeline order.
pub const DERIVED_FILES: [&str; 4] = ["get.dl", "putdelta_prime.dl", "undef.dl", "get_prime.dl"];

#[derive(Debug, Parser)]
#[command(
    name = "coexist",
    version,
    about = "Derive, verify and simulate co-existing schema versions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive get, putdelta', undef and get' from a putdelta spec.
    Derive {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        bound: Bound,
    },
    /// Check GetPut, PutGet and totality by bounded enumeration.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        /// Read get.dl, undef.dl and get_prime.dl from this directory
        /// instead of deriving them.
        #[arg(long)]
        derived: Option<PathBuf>,
        /// Print the reports as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        bound: Bound,
    },
    /// Replay a .cosx script against an in-memory multi-version store.
    Simulate {
        #[arg(long)]
        script: PathBuf,
        #[command(flatten)]
        bound: Bound,
    },
    /// Write <view>.view.sql and <view>.triggers.sql per view.
    EmitSql {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        derived: Option<PathBuf>,
        #[command(flatten)]
        bound: Bound,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exhaustive,
    Sampled,
}

/// Verification bounds. The joint bound applies to totality over
/// `(s, v_ud)`; both share the mode, seed and keys.
#[derive(Debug, Clone, Args)]
pub struct Bound {
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub min: i64,
    #[arg(long, default_value_t = 10, allow_negative_numbers = true)]
    pub max: i64,
    #[arg(long, default_value_t = 3)]
    pub max_size: usize,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub joint_min: i64,
    #[arg(long, default_value_t = 6, allow_negative_numbers = true)]
    pub joint_max: i64,
    #[arg(long, default_value_t = 2)]
    pub joint_max_size: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exhaustive)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cases per law in sampled mode.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Values for columns no comparison constrains; empty for none.
    #[arg(long, value_delimiter = ',', default_value = "k1")]
    pub keys: Vec<String>,
}

impl Bound {
    pub fn options(&self) -> Result<DeriveOptions, String> {
        let mode = match self.mode {
            ModeArg::Exhaustive => Mode::Exhaustive,
            ModeArg::Sampled => Mode::Sampled {
                count: self.samples,
                seed: self.seed,
            },
        };
        let keys: Vec<String> = self
            .keys
            .iter()
            .filter(|k| !k.is_empty())
            .cloned()
            .collect();
        let make = |min, max, size| {
            Universe::range(min, max, size)
                .map(|u| u.with_keys(keys.clone()).with_mode(mode))
                .map_err(|e| e.to_string())
        };
        Ok(DeriveOptions {
            universe: make(self.min, self.max, self.max_size)?,
            joint: make(self.joint_min, self.joint_max, self.joint_max_size)?,
        })
    }
}

/// A failure carrying its exit status.
struct Failure(i32, String);

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

fn failed(msg: impl Into<String>) -> Failure {
    Failure(EXIT_FAILURE, msg.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn make_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))
}

fn load_spec(path: &Path) -> Result<BxSpec, Failure> {
    BxSpec::parse(&read(path)?).map_err(|e| failed(format!("error: {e}")))
}

fn load_derived(spec: &BxSpec, dir: &Path) -> Result<DerivedBx, Failure> {
    let program = |name: &str| {
        let path = dir.join(name);
        parse_program(&read(&path)?).map_err(|e| failed(format!("error: {}: {e}", path.display())))
    };
    let (get, undef, get_prime) = (
        program("get.dl")?,
        program("undef.dl")?,
        program("get_prime.dl")?,
    );
    DerivedBx::from_programs(spec, &get, &undef, &get_prime)
        .map_err(|e| failed(format!("error: {e}")))
}

/// Writes the four derived programs into `out`.
pub fn cmd_derive(
    spec: &Path,
    out: &Path,
    options: &DeriveOptions,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    finish(
        (|| {
            let spec = load_spec(spec)?;
            let derived = derive_all(&spec, options).map_err(|e| failed(format!("error: {e}")))?;
            make_dir(out)?;
            let programs = [
                derived.get(),
                derived.putdelta_prime(),
                derived.undef(),
                derived.get_prime(),
            ];
            for (name, p) in DERIVED_FILES.iter().zip(programs) {
                let path = out.join(name);
                write_file(&path, &p.to_string())?;
                let _ = writeln!(stdout, "wrote {}", path.display());
            }
            Ok(())
        })(),
        stderr,
    )
}

/// Runs GetPut and PutGet over `options.universe` and totality over
/// `options.joint`; exit 0 iff every law holds.
pub fn cmd_verify(
    spec: &Path,
    derived: Option<&Path>,
    options: &DeriveOptions,
    json: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    finish(
        (|| {
            let spec = load_spec(spec)?;
            let bx = match derived {
                Some(dir) => load_derived(&spec, dir)?,
                None => derive_unchecked(&spec).map_err(|e| failed(format!("error: {e}")))?,
            };
            let reports = check_derived(&bx, &options.universe, &options.joint)
                .map_err(|e| failed(format!("error: {e}")))?;
            if json {
                let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
                let _ = writeln!(stdout, "{text}");
            } else {
                for r in &reports {
                    let _ = writeln!(stdout, "{r}");
                }
            }
            if reports.iter().all(|r| r.cases == 0) {
                let _ = writeln!(stdout, "warning: no views to verify; 0 cases checked");
            }
            if reports.iter().all(|r| r.passed()) {
                Ok(())
            } else {
                Err(failed(""))
            }
        })(),
        stderr,
    )
}

/// Replays a script; exit 0 iff every `expect` holds.
pub fn cmd_simulate(
    script: &Path,
    options: &DeriveOptions,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    finish(
        (|| {
            let text = read(script)?;
            let base = script.parent().unwrap_or(Path::new("."));
            match run_script(&text, base, options) {
                Ok(report) => {
                    let _ = write!(stdout, "{}", report.output);
                    Ok(())
                }
                Err(e @ ScriptError::Io { .. }) => Err(usage(format!("error: {e}"))),
                Err(e) => Err(failed(format!("error: {e}"))),
            }
        })(),
        stderr,
    )
}

/// Writes SQL for every view into `out`.
pub fn cmd_emit_sql(
    spec: &Path,
    derived: Option<&Path>,
    out: &Path,
    options: &DeriveOptions,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    finish(
        (|| {
            let spec = load_spec(spec)?;
            let bx = match derived {
                Some(dir) => load_derived(&spec, dir)?,
                None => derive_all(&spec, options).map_err(|e| failed(format!("error: {e}")))?,
            };
            let artifacts = sqlgen::emit(&bx).map_err(|e| failed(format!("error: {e}")))?;
            make_dir(out)?;
            for a in artifacts {
                let paths = a
                    .write_to(out)
                    .map_err(|e| usage(format!("cannot write into {}: {e}", out.display())))?;
                for p in paths {
                    let _ = writeln!(stdout, "wrote {}", p.display());
                }
            }
            Ok(())
        })(),
        stderr,
    )
}

fn finish(outcome: Outcome, stderr: &mut dyn Write) -> i32 {
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure(code, msg)) => {
            if !msg.is_empty() {
                let _ = writeln!(stderr, "{}", msg.trim_end());
            }
            code
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    let bound = match &cli.command {
        Command::Derive { bound, .. }
        | Command::Verify { bound, .. }
        | Command::Simulate { bound, .. }
        | Command::EmitSql { bound, .. } => bound,
    };
    let options = match bound.options() {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    match &cli.command {
        Command::Derive { spec, out, .. } => cmd_derive(spec, out, &options, stdout, stderr),
        Command::Verify {
            spec,
            derived,
            json,
            ..
        } => cmd_verify(spec, derived.as_deref(), &options, *json, stdout, stderr),
        Command::Simulate { script, .. } => cmd_simulate(script, &options, stdout, stderr),
        Command::EmitSql {
            spec, out, derived, ..
        } => cmd_emit_sql(spec, derived.as_deref(), out, &options, stdout, stderr),
    }
}
