//! The `cch` command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible configuration,
//! 3 validation failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::asymptotic::{asymptotic_risk, cch_mi_gap, AsymptoticContext};
use crate::error::{Error, Result};
use crate::gaussian_model::{derive_population_model, sample_dataset, validate_feasibility, CorrelationSpec};
use crate::harness::{emit_csv, emit_figure_pair, grid_means, run_sweep, SweepConfig};
use crate::mi::{ksg_mi, ross_mi};
use crate::regression::{fit_teacher_population, TeacherWeights};
use crate::rng::derive_seed;
use crate::validation::{monte_carlo_excess_risk, run_validation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "cch", version, about = "Cross-modal distillation in a jointly Gaussian linear model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone, Copy)]
struct SpecArgs {
    #[arg(long, allow_hyphen_values = true)]
    sigma12: f64,
    #[arg(long, default_value_t = 0.9, allow_hyphen_values = true)]
    sigma13: f64,
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    sigma23: f64,
    #[arg(long, default_value_t = 100)]
    p: usize,
}

impl SpecArgs {
    fn spec(&self) -> CorrelationSpec {
        CorrelationSpec { sigma12: self.sigma12, sigma13: self.sigma13, sigma23: self.sigma23, p: self.p }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum EstimatorArg {
    /// Ross when the file has a `label` column, KSG otherwise
    Auto,
    Ksg,
    Ross,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum TeacherArg {
    Population,
    Zero,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sweep described by a JSON config; write CSV and optional SVG panels
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Prefix for `<prefix>mse.svg` and `<prefix>mi.svg`
        #[arg(long)]
        svg: Option<String>,
        /// Override the config's master seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate mutual information from a CSV (x_*, y_* columns, or a label column)
    Mi {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Auto)]
        estimator: EstimatorArg,
    },
    /// Asymptotic and Monte-Carlo excess risk at one parameter point
    Risk {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = TeacherArg::Population)]
        teacher: TeacherArg,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo versus closed-form agreement suite
    Validate {
        #[arg(long)]
        quick: bool,
    },
    /// Feasibility diagnostics for a correlation triple
    CheckSpec {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Sample a dataset and write it as CSV (x1_*, x2_*, y)
    Dataset {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// Entry point used by the binary.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`cli_main`] with explicit output streams.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match cmd {
        Command::Sweep { config, out: csv_path, svg, seed } => {
            let mut cfg = SweepConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let records = run_sweep(&cfg)?;
            emit_csv(&records, &csv_path)?;
            writeln!(out, "wrote {} records to {}", records.len(), csv_path.display()).map_err(io)?;
            if let Some(prefix) = svg {
                for path in emit_figure_pair(&records, &prefix, cfg.sweep_variable.label())? {
                    writeln!(out, "wrote {}", path.display()).map_err(io)?;
                }
            }
            writeln!(out, "{:>12} {:>14} {:>14} {:>12}", cfg.sweep_variable.label(), "mse_kd", "mse_no_kd", "mi_gap").map_err(io)?;
            let (kd, base, gap) = (grid_means(&records, "mse_kd"), grid_means(&records, "mse_no_kd"), grid_means(&records, "mi_gap"));
            for i in 0..kd.len() {
                writeln!(out, "{:>12.4} {:>14.6e} {:>14.6e} {:>12.5}", kd[i].0, kd[i].1, base[i].1, gap[i].1).map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Mi { file, k, seed, estimator } => {
            let (x, y, labels) = read_mi_csv(&file)?;
            let use_ross = match estimator {
                EstimatorArg::Auto => labels.is_some(),
                EstimatorArg::Ross => true,
                EstimatorArg::Ksg => false,
            };
            let est = if use_ross {
                let labels = labels.ok_or_else(|| Error::Config("ross needs a `label` column".into()))?;
                let cont = x.or(y).ok_or_else(|| Error::Config("no x_* or y_* columns".into()))?;
                ross_mi(&cont, &labels, k, seed)?
            } else {
                let (x, y) = x.zip(y).ok_or_else(|| Error::Config("ksg needs x_* and y_* columns".into()))?;
                ksg_mi(&x, &y, k, seed)?
            };
            writeln!(out, "estimator={:?} k={} n={} mi_nats={:.6}", est.estimator, est.k, est.n, est.value).map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Risk { spec, n, lambda, teacher, reps, seed } => {
            let spec = spec.spec();
            spec.check()?;
            let model = derive_population_model(&spec)?;
            let teacher = match teacher {
                TeacherArg::Population => fit_teacher_population(&model)?.0,
                TeacherArg::Zero => TeacherWeights::zeros(spec.p),
            };
            let kappa = n as f64 / spec.p as f64;
            let r = asymptotic_risk(&AsymptoticContext::new(&model, kappa, &teacher, lambda)?)?;
            let seeds: Vec<u64> = (0..reps as u64).map(|i| derive_seed(seed, &[i])).collect();
            let mc = monte_carlo_excess_risk(&model, Some(&spec), &teacher, lambda, n, &seeds)?;
            writeln!(out, "kappa              {kappa}").map_err(io)?;
            writeln!(out, "regime             {:?}", r.regime).map_err(io)?;
            writeln!(out, "noise_var          {:.6e}", model.noise_var).map_err(io)?;
            writeln!(out, "sigma_bar_sq       {:.6e}", r.sigma_bar_sq).map_err(io)?;
            writeln!(out, "bias_term          {:.6e}", r.bias_term).map_err(io)?;
            writeln!(out, "variance_term      {:.6e}", r.variance_term).map_err(io)?;
            writeln!(out, "asymptotic_risk    {:.6e}", r.total).map_err(io)?;
            if let (Some(tau), Some(omega)) = (r.tau, r.omega) {
                writeln!(out, "tau                {tau:.6e}").map_err(io)?;
                writeln!(out, "omega              {omega:.6e}").map_err(io)?;
            }
            writeln!(out, "monte_carlo_risk   {:.6e} (se {:.2e}, {} reps)", mc.mean, mc.se, reps).map_err(io)?;
            if spec.sigma23 != 0.0 {
                let gap = cch_mi_gap(&model, &teacher)?;
                writeln!(out, "mi_gap             {:.6}", gap.gap).map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Validate { quick } => {
            let report = run_validation(quick);
            write!(out, "{}", report.table()).map_err(io)?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::CheckSpec { spec } => {
            let report = validate_feasibility(&spec.spec());
            writeln!(out, "sigma12={} sigma13={} sigma23={} p={}", spec.sigma12, spec.sigma13, spec.sigma23, spec.p).map_err(io)?;
            writeln!(out, "phi={:.6} v={:.6} joint_psd={} feasible={}", report.phi, report.v, report.joint_psd, report.feasible)
                .map_err(io)?;
            writeln!(out, "{}", report.message).map_err(io)?;
            Ok(if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
        }
        Command::Dataset { spec, n, seed, out: path } => {
            let data = sample_dataset(&spec.spec(), n, seed)?;
            data.write_csv(&path)?;
            writeln!(out, "wrote {n} rows to {}", path.display()).map_err(io)?;
            Ok(EXIT_OK)
        }
    }
}

type MiColumns = (Option<DMatrix<f64>>, Option<DMatrix<f64>>, Option<Vec<i64>>);

/// Columns `x_*` and `y_*` become matrices; a `label` column becomes integer labels.
fn read_mi_csv(path: &std::path::Path) -> Result<MiColumns> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let pick = |prefix: &str| -> Vec<usize> { (0..header.len()).filter(|&i| header[i].starts_with(prefix)).collect() };
    let (xi, yi) = (pick("x_"), pick("y_"));
    let li = header.iter().position(|h| h == "label");
    if let Some(bad) = (0..header.len()).find(|i| !xi.contains(i) && !yi.contains(i) && Some(*i) != li) {
        return Err(Error::Config(format!("unexpected column `{}`", header[bad])));
    }
    let (mut xs, mut ys, mut ls) = (Vec::new(), Vec::new(), Vec::new());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| Error::Config(format!("row {}: `{}` is not a number", rows + 1, &rec[i])))
        };
        for &i in &xi {
            xs.push(num(i)?);
        }
        for &i in &yi {
            ys.push(num(i)?);
        }
        if let Some(i) = li {
            ls.push(rec[i].trim().parse::<i64>().map_err(|_| Error::Config(format!("row {}: bad label `{}`", rows + 1, &rec[i])))?);
        }
        rows += 1;
    }
    let mat = |v: Vec<f64>, d: usize| (d > 0).then(|| DMatrix::from_row_slice(rows, d, &v));
    Ok((mat(xs, xi.len()), mat(ys, yi.len()), li.map(|_| ls)))
}
