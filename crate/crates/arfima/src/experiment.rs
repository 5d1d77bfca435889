//! Monte Carlo orchestration: paired-design replications across the four
//! estimators, bias/variance/MSE/relative-efficiency tables against the
//! pseudo-true value, standardized statistics under the case-appropriate
//! limit law, and file emission.

use crate::asymptotics::{
    build_limit_law, kde_limit_density, AsymError, LawOptions, LimitCase, LimitLaw, WConstVariant,
};
use crate::estimators::{estimate, EstimateOptions, EstimatorKind};
use crate::kde;
use crate::model::EtaVector;
use crate::pseudo_true::{solve_pseudo_true, MisSpecPair, PseudoTrueError, PseudoTrueSolution, SolveOptions};
use crate::simulate::{SimulateError, SimulationPlan, Simulator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    PseudoTrue(#[from] PseudoTrueError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Asym(#[from] AsymError),
    #[error("{failed}/{total} replications failed for {method} at n = {n} (threshold 2%)")]
    TooManyFailures { method: &'static str, n: usize, failed: usize, total: usize },
    #[error("standardized statistics need a law built for n = {0}")]
    CaseMismatch(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CaseFlags {
    pub w_const_variant: WConstVariant,
    pub report_standardized: bool,
}

impl Default for CaseFlags {
    fn default() -> Self {
        CaseFlags { w_const_variant: WConstVariant::PaperSection52, report_standardized: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pair: MisSpecPair,
    pub methods: Vec<EstimatorKind>,
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub case_flags: CaseFlags,
}

/// Per (method, n) summary. The bias/variance/MSE formulas use the 1/R
/// population convention, so `mse = bias^2 + variance` holds exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CellReport {
    pub method: EstimatorKind,
    pub n: usize,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub rel_eff_vs_fml: f64,
    pub excluded: usize,
    pub d_hat_samples: Vec<f64>,
    pub standardized_samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub pair: MisSpecPair,
    pub seed: u64,
    pub replications: usize,
    pub pseudo_true: PseudoTrueSolution,
    pub cells: Vec<CellReport>,
    /// limit laws per (n, method), present when standardized stats are on
    pub laws: Vec<LimitLaw>,
}

impl MonteCarloReport {
    pub fn cell(&self, method: EstimatorKind, n: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.n == n)
    }

    pub fn law(&self, method: EstimatorKind, n: usize) -> Option<&LimitLaw> {
        self.laws.iter().find(|l| l.kind == method && l.n == n)
    }
}

fn per_n_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Run the full experiment: solve the pseudo-true value once, simulate R
/// paired series per sample size (every method sees the same draws), fit
/// each method, and aggregate.
///
/// Per-replication estimator failures are excluded with a count; a failure
/// rate of 2% or more aborts the run.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloReport, ExperimentError> {
    if cfg.replications < 2 {
        return Err(ExperimentError::BadConfig("replications must be >= 2".into()));
    }
    if cfg.n_list.is_empty() || cfg.methods.is_empty() {
        return Err(ExperimentError::BadConfig("n_list and methods must be nonempty".into()));
    }
    let sol = solve_pseudo_true(&cfg.pair, &SolveOptions::default())?;
    let d1 = sol.eta1.d;
    let r_total = cfg.replications;

    let mut cells: Vec<CellReport> = Vec::new();
    let mut laws: Vec<LimitLaw> = Vec::new();
    for &n in &cfg.n_list {
        let plan = SimulationPlan {
            spec: cfg.pair.tdgp.clone(),
            n,
            seed: per_n_seed(cfg.seed, n),
            replications: r_total,
        };
        let sim = Simulator::new(plan)?;
        // paired design: one draw per replication, every method fits it
        let fits: Vec<Vec<Option<f64>>> = (0..r_total)
            .into_par_iter()
            .map(|r| {
                let y = sim.draw(r);
                cfg.methods
                    .iter()
                    .map(|&kind| {
                        estimate(kind, cfg.pair.family, &y, &EstimateOptions::default())
                            .ok()
                            .map(|res| res.eta_hat.d)
                    })
                    .collect()
            })
            .collect();

        let mut mse_fml: Option<f64> = None;
        let mut n_cells: Vec<CellReport> = Vec::new();
        for (m_idx, &method) in cfg.methods.iter().enumerate() {
            let d_hats: Vec<f64> = fits.iter().filter_map(|row| row[m_idx]).collect();
            let failed = r_total - d_hats.len();
            if (failed as f64) / (r_total as f64) >= 0.02 {
                return Err(ExperimentError::TooManyFailures {
                    method: method.name(),
                    n,
                    failed,
                    total: r_total,
                });
            }
            let r = d_hats.len() as f64;
            let mean = kahan_sum(d_hats.iter().copied()) / r;
            let msq = kahan_sum(d_hats.iter().map(|v| v * v)) / r;
            let bias = mean - d1;
            let variance = msq - mean * mean;
            let mse = bias * bias + variance;
            if method == EstimatorKind::Fml {
                mse_fml = Some(mse);
            }
            n_cells.push(CellReport {
                method,
                n,
                bias,
                variance,
                mse,
                rel_eff_vs_fml: f64::NAN,
                excluded: failed,
                d_hat_samples: d_hats,
                standardized_samples: None,
            });
        }
        for cell in n_cells.iter_mut() {
            if let Some(fml) = mse_fml {
                cell.rel_eff_vs_fml = cell.mse / fml;
            }
        }

        if cfg.case_flags.report_standardized {
            // the truncation point is tuned on the FML statistic and kept
            // for every method
            let s_n = n_cells
                .iter()
                .find(|c| c.method == EstimatorKind::Fml)
                .map(|c| {
                    let rate = (n as f64).powf(1.0 - 2.0 * sol.d_star) / (n as f64).ln();
                    rate * rate * c.variance
                });
            let opts = LawOptions { s_n, w_const: cfg.case_flags.w_const_variant };
            for cell in n_cells.iter_mut() {
                let law = build_limit_law(&cfg.pair, &sol, n, cell.method, &opts)?;
                cell.standardized_samples =
                    Some(standardized_samples(&cell.d_hat_samples, &law, d1, n)?);
                laws.push(law);
            }
        }
        cells.extend(n_cells);
    }
    Ok(MonteCarloReport {
        pair: cfg.pair.clone(),
        seed: cfg.seed,
        replications: r_total,
        pseudo_true: sol,
        cells,
        laws,
    })
}

/// Case-appropriate standardization of raw estimates:
/// case 1: rate (d_hat - d1 - mu_n), case 2/3: rate (d_hat - d1).
pub fn standardized_samples(
    d_hats: &[f64],
    law: &LimitLaw,
    d1: f64,
    n: usize,
) -> Result<Vec<f64>, ExperimentError> {
    if law.n != n {
        return Err(ExperimentError::CaseMismatch(n));
    }
    let rate = law.rate();
    let shift = match law.case {
        LimitCase::One => d1 + law.mu_n.as_ref().expect("case 1 carries mu_n")[0],
        _ => d1,
    };
    Ok(d_hats.iter().map(|&d| rate * (d - shift)).collect())
}

/// Bias/MSE of each cell converted from the pseudo-true reference d1 to the
/// true d0: `bias_d0 = bias_d1 - dstar`, `mse_d0 = mse_d1 + dstar^2 -
/// 2 dstar bias_d1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvertedCell {
    pub method: EstimatorKind,
    pub n: usize,
    pub bias_d0: f64,
    pub mse_d0: f64,
}

pub fn bias_mse_to_true(report: &MonteCarloReport) -> Vec<ConvertedCell> {
    let dstar = report.pseudo_true.d_star;
    report
        .cells
        .iter()
        .map(|c| ConvertedCell {
            method: c.method,
            n: c.n,
            bias_d0: c.bias - dstar,
            mse_d0: c.mse + dstar * dstar - 2.0 * dstar * c.bias,
        })
        .collect()
}

/// Write the report to `dir`: full JSON, a bias/MSE table, a relative
/// efficiency table, and (when standardized statistics are present) one
/// density CSV per sample size with a `limit` column.
pub fn emit_report(report: &MonteCarloReport, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;

    let methods: Vec<EstimatorKind> = {
        let mut seen = Vec::new();
        for c in &report.cells {
            if !seen.contains(&c.method) {
                seen.push(c.method);
            }
        }
        seen
    };
    let theta0 = report.pair.tdgp.theta.first().copied().unwrap_or(0.0);
    let mut ns: Vec<usize> = report.cells.iter().map(|c| c.n).collect();
    ns.dedup();

    // bias/MSE table: (dstar, theta0, n) then Bias/MSE per method
    let mut table = String::from("dstar,theta0,n");
    for m in &methods {
        table.push_str(&format!(",bias_{0},mse_{0}", m.name()));
    }
    table.push('\n');
    for &n in &ns {
        table.push_str(&format!("{},{},{}", report.pseudo_true.d_star, theta0, n));
        for m in &methods {
            let c = report.cell(*m, n).expect("cell exists");
            table.push_str(&format!(",{},{}", c.bias, c.mse));
        }
        table.push('\n');
    }
    std::fs::write(dir.join("bias_mse.csv"), table)?;

    let mut eff = String::from("dstar,theta0,n");
    for m in &methods {
        eff.push_str(&format!(",releff_{}", m.name()));
    }
    eff.push('\n');
    for &n in &ns {
        eff.push_str(&format!("{},{},{}", report.pseudo_true.d_star, theta0, n));
        for m in &methods {
            eff.push_str(&format!(",{}", report.cell(*m, n).expect("cell").rel_eff_vs_fml));
        }
        eff.push('\n');
    }
    std::fs::write(dir.join("relative_efficiency.csv"), eff)?;

    for &n in &ns {
        let has_std = methods
            .iter()
            .all(|m| report.cell(*m, n).map_or(false, |c| c.standardized_samples.is_some()));
        if !has_std {
            continue;
        }
        let pooled: Vec<f64> = methods
            .iter()
            .flat_map(|m| {
                report.cell(*m, n).unwrap().standardized_samples.as_ref().unwrap().clone()
            })
            .collect();
        let lo = pooled.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
        let hi = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let grid: Vec<f64> = (0..401).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect();
        let mut csv = String::from("x");
        for m in &methods {
            csv.push_str(&format!(",{}", m.name()));
        }
        csv.push_str(",limit\n");
        let densities: Vec<Vec<f64>> = methods
            .iter()
            .map(|m| {
                kde::kernel_density(
                    report.cell(*m, n).unwrap().standardized_samples.as_ref().unwrap(),
                    &grid,
                )
                .unwrap_or_else(|_| vec![f64::NAN; grid.len()])
            })
            .collect();
        let law = report
            .law(methods[0], n)
            .expect("law present when standardized stats are on");
        let limit = kde_limit_density(law, &grid, report.seed ^ 0xD1CE);
        for (i, &x) in grid.iter().enumerate() {
            csv.push_str(&format!("{x}"));
            for d in &densities {
                csv.push_str(&format!(",{}", d[i]));
            }
            csv.push_str(&format!(",{}\n", limit[i]));
        }
        std::fs::write(dir.join(format!("density_n{n}.csv")), csv)?;
    }
    Ok(())
}

impl From<serde_json::Error> for ExperimentError {
    fn from(e: serde_json::Error) -> Self {
        ExperimentError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

fn kahan_sum<I: Iterator<Item = f64>>(iter: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in iter {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Convenience: the pseudo-true eta for synthetic tests.
pub fn eta_of(d: f64, beta: Vec<f64>) -> EtaVector {
    EtaVector { d, beta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArfimaSpec, FamilySpec};

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            pair: MisSpecPair::new(
                ArfimaSpec::tdgp(0.2, vec![], vec![-0.3], 1.0).unwrap(),
                FamilySpec::new(0, 0),
            ),
            methods: EstimatorKind::ALL.to_vec(),
            n_list: vec![64],
            replications: 30,
            seed: 4242,
            case_flags: CaseFlags { report_standardized: true, ..Default::default() },
        }
    }

    #[test]
    fn small_run_identities() {
        let report = run_monte_carlo(&small_cfg()).unwrap();
        for cell in &report.cells {
            assert!(
                (cell.mse - (cell.bias * cell.bias + cell.variance)).abs() < 1e-12,
                "mse identity violated"
            );
            assert_eq!(cell.excluded, 0);
            assert_eq!(cell.d_hat_samples.len(), 30);
        }
        let fml = report.cell(EstimatorKind::Fml, 64).unwrap();
        assert!((fml.rel_eff_vs_fml - 1.0).abs() < 1e-15);
        // case 3 here: standardized = sqrt(n) (d_hat - d1)
        let law = report.law(EstimatorKind::Css, 64).unwrap();
        assert_eq!(law.case, LimitCase::Three);
        let css = report.cell(EstimatorKind::Css, 64).unwrap();
        let std = css.standardized_samples.as_ref().unwrap();
        let d1 = report.pseudo_true.eta1.d;
        for (s, d) in std.iter().zip(&css.d_hat_samples) {
            assert!((s - 8.0 * (d - d1)).abs() < 1e-12);
        }
    }

    #[test]
    fn determinism_bytes() {
        let a = serde_json::to_vec(&run_monte_carlo(&small_cfg()).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_monte_carlo(&small_cfg()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_two_replication_run() {
        let mut cfg = small_cfg();
        cfg.replications = 2;
        cfg.case_flags.report_standardized = false;
        let report = run_monte_carlo(&cfg).unwrap();
        for cell in &report.cells {
            assert!((cell.mse - (cell.bias * cell.bias + cell.variance)).abs() < 1e-12);
        }
    }

    #[test]
    fn conversion_to_true_reference() {
        let report = run_monte_carlo(&small_cfg()).unwrap();
        let conv = bias_mse_to_true(&report);
        let d0 = report.pair.tdgp.d;
        for (cell, conv) in report.cells.iter().zip(&conv) {
            // recompute from raw samples
            let r = cell.d_hat_samples.len() as f64;
            let bias_raw =
                cell.d_hat_samples.iter().map(|d| d - d0).sum::<f64>() / r;
            let mse_raw =
                cell.d_hat_samples.iter().map(|d| (d - d0) * (d - d0)).sum::<f64>() / r;
            assert!((conv.bias_d0 - bias_raw).abs() < 1e-12);
            assert!((conv.mse_d0 - mse_raw).abs() < 1e-12, "{} vs {mse_raw}", conv.mse_d0);
            // sign case: negative bias with positive dstar grows in magnitude
            if cell.bias < 0.0 && report.pseudo_true.d_star > 0.0 {
                assert!(conv.bias_d0.abs() > cell.bias.abs());
            }
        }
        // dstar = 0: tables identical
        let cfg0 = ExperimentConfig {
            pair: MisSpecPair::new(
                ArfimaSpec::tdgp(0.2, vec![], vec![], 1.0).unwrap(),
                FamilySpec::new(0, 0),
            ),
            methods: vec![EstimatorKind::Fml],
            n_list: vec![64],
            replications: 10,
            seed: 7,
            case_flags: CaseFlags::default(),
        };
        let rep0 = run_monte_carlo(&cfg0).unwrap();
        assert!(rep0.pseudo_true.d_star.abs() < 1e-7);
        let conv0 = bias_mse_to_true(&rep0);
        for (c, v) in rep0.cells.iter().zip(&conv0) {
            assert!((c.bias - v.bias_d0).abs() < 1e-6);
            assert!((c.mse - v.mse_d0).abs() < 1e-7);
        }
    }

    #[test]
    fn standardized_case_mismatch_rejected() {
        let report = run_monte_carlo(&small_cfg()).unwrap();
        let law = report.law(EstimatorKind::Fml, 64).unwrap();
        assert!(matches!(
            standardized_samples(&[0.1], law, 0.0, 128),
            Err(ExperimentError::CaseMismatch(128))
        ));
    }

    #[test]
    fn emit_and_round_trip() {
        let report = run_monte_carlo(&small_cfg()).unwrap();
        let dir = std::env::temp_dir().join(format!("arfima_report_{}", std::process::id()));
        emit_report(&report, &dir).unwrap();
        let back: MonteCarloReport =
            serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap())
                .unwrap();
        assert_eq!(back.cells, report.cells);
        // CSV column count = 3 + 2 * |methods|
        let table = std::fs::read_to_string(dir.join("bias_mse.csv")).unwrap();
        let header_cols = table.lines().next().unwrap().split(',').count();
        assert_eq!(header_cols, 3 + 2 * 4);
        // density CSV: rows = grid length, density integrates to about 1
        let dens = std::fs::read_to_string(dir.join("density_n64.csv")).unwrap();
        let lines: Vec<&str> = dens.lines().collect();
        assert_eq!(lines.len(), 1 + 401);
        let mut xs = Vec::new();
        let mut fml = Vec::new();
        for line in &lines[1..] {
            let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            xs.push(cols[0]);
            fml.push(cols[1]);
        }
        let mut integral = 0.0;
        for i in 1..xs.len() {
            integral += 0.5 * (fml[i] + fml[i - 1]) * (xs[i] - xs[i - 1]);
        }
        assert!((integral - 1.0).abs() < 0.02, "integral {integral}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
