//! Command-line front end: exact ARFIMA simulation, the four criterion
//! fits, pseudo-true parameters, limiting-objective contours, limit-law
//! draws, and the full Monte Carlo harness.
//!
//! JSON-valued arguments accept either inline JSON (starting with `{`) or a
//! path to a JSON file. AR/MA coefficients follow the plus-sign convention
//! `phi(z) = 1 + phi_1 z + ...`; the process mean is fixed at zero. Thread
//! count is controlled by the RAYON_NUM_THREADS environment variable only.

use anyhow::{bail, Context, Result};
use arfima::asymptotics::{build_limit_law, sample_w_sum, LawOptions, LimitCase, WConstVariant};
use arfima::estimators::{estimate, EstimateOptions, EstimatorKind};
use arfima::experiment::{emit_report, run_monte_carlo, ExperimentConfig};
use arfima::model::{ArfimaSpec, FamilySpec};
use arfima::pseudo_true::{q_contour_grid, solve_pseudo_true, MisSpecPair, SolveOptions};
use arfima::simulate::{standard_normals, SimulationPlan, Simulator};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "arfima", version, about = "ARFIMA estimation under mis-specification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw exact Gaussian ARFIMA samples; CSV has one column per replication
    Simulate {
        /// ArfimaSpec JSON: {"p":..,"d":..,"q":..,"phi":[..],"theta":[..],"sigma2":..}
        #[arg(long)]
        spec: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one criterion to a series read from a CSV column
    Estimate {
        #[arg(long)]
        method: EstimatorKind,
        /// family orders as "p,q"
        #[arg(long)]
        family: String,
        #[arg(long = "in")]
        input: PathBuf,
        /// zero-based column of the input CSV
        #[arg(long, default_value_t = 0)]
        column: usize,
        /// output JSON path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for the pseudo-true parameters of a mis-specified fit
    PseudoTrue {
        #[arg(long)]
        tdgp: String,
        #[arg(long)]
        family: String,
        /// series truncation tolerance
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the limiting objective on a (d, beta) grid (families with
    /// exactly one ARMA parameter)
    Contour {
        #[arg(long)]
        tdgp: String,
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 0.01)]
        d_min: f64,
        #[arg(long, default_value_t = 0.49)]
        d_max: f64,
        #[arg(long, default_value_t = 60)]
        d_steps: usize,
        #[arg(long, default_value_t = -0.9)]
        beta_min: f64,
        #[arg(long, default_value_t = 0.9)]
        beta_max: f64,
        #[arg(long, default_value_t = 60)]
        beta_steps: usize,
        /// output prefix: writes <prefix>_q.csv, <prefix>_d.csv, <prefix>_beta.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Draws from the case-appropriate limit law plus its JSON metadata
    AsymptoticDist {
        /// MisSpecPair JSON: {"tdgp": {...}, "family": {"p":..,"q":..}}
        #[arg(long)]
        pair: String,
        #[arg(long)]
        method: EstimatorKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// replications of the internal FML run that calibrates the
        /// truncation point (severe-mis-specification case only)
        #[arg(long, default_value_t = 1000)]
        sn_reps: usize,
        /// use the general g0(0)/g1(0) weight instead of the (1+theta0^2)
        /// variant used for the published tables
        #[arg(long, default_value_t = false)]
        general_w_const: bool,
        #[arg(long)]
        out_draws: PathBuf,
        #[arg(long)]
        out_law: Option<PathBuf>,
    },
    /// Full Monte Carlo experiment from an ExperimentConfig JSON
    MonteCarlo {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { spec, n, seed, reps, out } => {
            let spec: ArfimaSpec = read_json(&spec)?;
            let plan = SimulationPlan { spec, n, seed, replications: reps };
            let sim = Simulator::new(plan).context("building simulator")?;
            let draws: Vec<Vec<f64>> = (0..reps).map(|r| sim.draw(r)).collect();
            let mut csv = String::new();
            for t in 0..n {
                let row: Vec<String> = draws.iter().map(|d| d[t].to_string()).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            std::fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Estimate { method, family, input, column, out } => {
            let family = parse_family(&family)?;
            let y = read_csv_column(&input, column)?;
            let res = estimate(method, family, &y, &EstimateOptions::default())
                .context("estimation failed")?;
            write_json_or_stdout(&res, out.as_deref())?;
        }
        Command::PseudoTrue { tdgp, family, tol, out } => {
            let tdgp: ArfimaSpec = read_json(&tdgp)?;
            let family = parse_family(&family)?;
            let pair = MisSpecPair::new(tdgp, family);
            let sol = solve_pseudo_true(
                &pair,
                &SolveOptions { series_tol: tol, ..Default::default() },
            )?;
            write_json_or_stdout(&sol, out.as_deref())?;
        }
        Command::Contour {
            tdgp,
            family,
            d_min,
            d_max,
            d_steps,
            beta_min,
            beta_max,
            beta_steps,
            out,
        } => {
            let tdgp: ArfimaSpec = read_json(&tdgp)?;
            let family = parse_family(&family)?;
            if family.l() != 1 {
                bail!("contour grids need a family with exactly one ARMA parameter");
            }
            let pair = MisSpecPair::new(tdgp, family);
            let d_grid: Vec<f64> = linspace(d_min, d_max, d_steps);
            let beta_axis: Vec<f64> = linspace(beta_min, beta_max, beta_steps);
            let beta_grid: Vec<Vec<f64>> = beta_axis.iter().map(|&b| vec![b]).collect();
            let q = q_contour_grid(&pair, &d_grid, &beta_grid);
            let stem = out.to_string_lossy();
            let matrix: String = q
                .iter()
                .map(|row| {
                    row.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n"
                })
                .collect();
            std::fs::write(format!("{stem}_q.csv"), matrix)?;
            std::fs::write(format!("{stem}_d.csv"), axis_csv(&d_grid))?;
            std::fs::write(format!("{stem}_beta.csv"), axis_csv(&beta_axis))?;
        }
        Command::AsymptoticDist {
            pair,
            method,
            n,
            samples,
            seed,
            sn_reps,
            general_w_const,
            out_draws,
            out_law,
        } => {
            let pair: MisSpecPair = read_json(&pair)?;
            let sol = solve_pseudo_true(&pair, &SolveOptions::default())?;
            let w_const = if general_w_const {
                WConstVariant::Theorem2General
            } else {
                WConstVariant::PaperSection52
            };
            // severe mis-specification needs the empirical S_n from an FML run
            let s_n = if sol.d_star > 0.25 + arfima::asymptotics::CASE2_BAND {
                eprintln!(
                    "calibrating truncation point from an FML run (R = {sn_reps}, n = {n})"
                );
                let cfg = ExperimentConfig {
                    pair: pair.clone(),
                    methods: vec![EstimatorKind::Fml],
                    n_list: vec![n],
                    replications: sn_reps,
                    seed,
                    case_flags: Default::default(),
                };
                let rep = run_monte_carlo(&cfg)?;
                let cell = rep.cell(EstimatorKind::Fml, n).expect("fml cell");
                let rate = (n as f64).powf(1.0 - 2.0 * sol.d_star) / (n as f64).ln();
                Some(rate * rate * cell.variance)
            } else {
                None
            };
            let law = build_limit_law(&pair, &sol, n, method, &LawOptions { s_n, w_const })?;
            let draws: Vec<f64> = match law.case {
                LimitCase::One => {
                    let scale = law.d_scale();
                    sample_w_sum(law.sampler.as_ref().unwrap(), samples, seed)
                        .iter()
                        .map(|w| scale * w)
                        .collect()
                }
                LimitCase::Two | LimitCase::Three => {
                    let sd = law.d_scale().abs();
                    standard_normals(seed, 0, samples).iter().map(|z| sd * z).collect()
                }
            };
            std::fs::write(&out_draws, axis_csv(&draws))?;
            write_json_or_stdout(&law, out_law.as_deref())?;
        }
        Command::MonteCarlo { config, out } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let report = run_monte_carlo(&cfg)?;
            emit_report(&report, &out)?;
            let excluded: usize = report.cells.iter().map(|c| c.excluded).sum();
            eprintln!(
                "wrote {} (pseudo-true d1 = {:.6}, dstar = {:.6}, {} replications excluded)",
                out.display(),
                report.pseudo_true.eta1.d,
                report.pseudo_true.d_star,
                excluded
            );
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    };
    serde_json::from_str(&text).context("parsing JSON argument")
}

fn parse_family(s: &str) -> Result<FamilySpec> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        bail!("family must be given as p,q");
    }
    Ok(FamilySpec::new(parts[0].trim().parse()?, parts[1].trim().parse()?))
}

fn read_csv_column(path: &PathBuf, column: usize) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut y = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line
            .split(',')
            .nth(column)
            .with_context(|| format!("line {} has no column {column}", lineno + 1))?;
        match field.trim().parse::<f64>() {
            Ok(v) => y.push(v),
            // tolerate a single header line
            Err(_) if lineno == 0 => continue,
            Err(e) => bail!("line {}: {e}", lineno + 1),
        }
    }
    Ok(y)
}

fn write_json_or_stdout<T: serde::Serialize>(value: &T, out: Option<&std::path::Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, json)
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn linspace(a: f64, b: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 2);
    (0..steps).map(|i| a + (b - a) * i as f64 / (steps - 1) as f64).collect()
}

fn axis_csv(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}\n")).collect()
}
