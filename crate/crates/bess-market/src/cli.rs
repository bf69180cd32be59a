//! Command-line front end.
//!
//! Five subcommands: `solve` evaluates one market instance, `verify` runs
//! the numerical self-checks, `calibrate` fits the model to an hourly CSV,
//! `report` tabulates how the distortions and the price of anarchy move
//! with the fast share, and `synth` writes a synthetic hourly series with
//! known ground truth.
//!
//! Every knob can also come from a JSON config file (`--config`); explicit
//! flags win over the file. The RNG seed resolves flag, then config file,
//! then the `BESS_MARKET_SEED` environment variable, then [`DEFAULT_SEED`].
//!
//! Exit codes: 0 on success, 1 when the requested work ran but failed
//! (a verification check, an invalid parameter), 2 when inputs could not be
//! read or parsed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::calibration::{
    CalibrationConfig, CalibrationReport, FuelMix, HourlySeries, PriceFitHours, SynthConfig,
    generate_synthetic, mean_profile, quarterly_report,
};
use crate::demand::{DemandMoments, JointDemand, NormalJointDemand};
use crate::market::{DispatchSchedule, SupplyCurve};
use crate::oracle::{
    ScenarioTree, check_conditional_identities, monte_carlo_cost, monte_carlo_profit,
    schedule_foc_residuals, solve_centralized, solve_decentralized,
};
use crate::regimes::{
    Regime, RegimeReport, centralized_schedule, cost_centralized, cost_decentralized,
    decentralized_schedule, distortion_metrics, mean_dominated_poa, regime_report,
};
use crate::{Error, Result};

/// Seed used when neither flag, config file, nor environment provides one.
pub const DEFAULT_SEED: u64 = 7;

/// Environment variable consulted for the seed.
pub const SEED_ENV_VAR: &str = "BESS_MARKET_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(
    name = "bess-market",
    version,
    about = "Two-settlement electricity market with a strategic battery",
    propagate_version = true
)]
struct Cli {
    /// JSON file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// RNG seed; wins over the config file and BESS_MARKET_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one market instance: schedules, costs, distortions, PoA.
    Solve(SolveArgs),
    /// Run the numerical self-checks and report PASS/FAIL per family.
    Verify(VerifyArgs),
    /// Fit the model to an hourly demand/price CSV plus a fuel mix.
    Calibrate(CalibrateArgs),
    /// Tabulate distortions and price of anarchy against the fast share.
    Report(ReportArgs),
    /// Generate a synthetic hourly series with known ground truth.
    Synth(SynthArgs),
}

#[derive(clap::Args, Debug)]
struct SolveArgs {
    /// Marginal-cost intercept ($/MWh).
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Marginal-cost slope ($/MWh per MW).
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Fast fleet share in (0, 1].
    #[arg(long, allow_negative_numbers = true)]
    k_f: Option<f64>,
    /// First-period mean demand.
    #[arg(long, allow_negative_numbers = true)]
    mu1: Option<f64>,
    /// Second-period mean demand.
    #[arg(long, allow_negative_numbers = true)]
    mu2: Option<f64>,
    /// First-period demand standard deviation (default 0).
    #[arg(long, allow_negative_numbers = true)]
    sigma1: Option<f64>,
    /// Second-period demand standard deviation (default 0).
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    /// Demand correlation (default 0).
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Sequential information share; defaults to |rho| (the normal case).
    #[arg(long, allow_negative_numbers = true)]
    rho_s: Option<f64>,
    /// Cross-check the closed forms against a scenario-tree solve.
    #[arg(long)]
    numeric: bool,
    /// Quadrature points per stage for --numeric.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct VerifyArgs {
    /// Random fixtures for the closed-form/numeric comparison.
    #[arg(long)]
    fixtures: Option<usize>,
    /// Monte Carlo draws for the sampling checks.
    #[arg(long)]
    draws: Option<u64>,
    /// Quadrature points per stage.
    #[arg(long)]
    nodes: Option<usize>,
    /// Override every check family's tolerance with this value.
    #[arg(long, allow_negative_numbers = true)]
    tolerance: Option<f64>,
}

#[derive(clap::Args, Debug)]
struct CalibrateArgs {
    /// Hourly CSV: timestamp,net_demand_mw,da_price_usd_per_mwh.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Fuel-mix JSON: {"shares": {...}, "fast_fuels": [...]}.
    #[arg(long, value_name = "PATH")]
    fuel_mix: PathBuf,
    /// Skip the price fit and use this intercept (requires --beta).
    #[arg(long, requires = "beta", allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Skip the price fit and use this slope (requires --alpha).
    #[arg(long, requires = "alpha", allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Hour of day for the first model period (default: detected).
    #[arg(long)]
    peak_hour: Option<u32>,
    /// Hour of day for the second model period (default: detected).
    #[arg(long)]
    offpeak_hour: Option<u32>,
    /// Bins for the empirical conditional decomposition.
    #[arg(long)]
    bins: Option<usize>,
    /// Which priced hours feed the supply-curve fit.
    #[arg(long, value_enum)]
    price_hours: Option<PriceHours>,
    /// Where to write the mean daily profile CSV (default: next to the
    /// input, with a "_profile.csv" suffix).
    #[arg(long, value_name = "PATH")]
    profile_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PriceHours {
    All,
    PeakOffpeak,
}

#[derive(clap::Args, Debug)]
struct ReportArgs {
    /// Grid points over the fast share (0, 1].
    #[arg(long)]
    points: Option<usize>,
    /// Optional demand means for an instance-specific PoA column.
    #[arg(long, allow_negative_numbers = true)]
    mu1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Supply-curve parameters for the instance column.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Write the table here instead of stdout.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    /// Where to write the generated CSV.
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
    #[arg(long)]
    days: Option<u32>,
    /// First day of the series (YYYY-MM-DD).
    #[arg(long)]
    start_date: Option<chrono::NaiveDate>,
    #[arg(long)]
    peak_hour: Option<u32>,
    #[arg(long)]
    offpeak_hour: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    mu_peak: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu_offpeak: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma_peak: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma_offpeak: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    price_noise: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    utc_offset_hours: Option<i32>,
}

/// Defaults file: any subset of the flags, same names, snake_case.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    format: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
    k_f: Option<f64>,
    mu1: Option<f64>,
    mu2: Option<f64>,
    sigma1: Option<f64>,
    sigma2: Option<f64>,
    rho: Option<f64>,
    rho_s: Option<f64>,
    nodes: Option<usize>,
    fixtures: Option<usize>,
    draws: Option<u64>,
    tolerance: Option<f64>,
    peak_hour: Option<u32>,
    offpeak_hour: Option<u32>,
    bins: Option<usize>,
    points: Option<usize>,
    days: Option<u32>,
    start_date: Option<chrono::NaiveDate>,
    mu_peak: Option<f64>,
    mu_offpeak: Option<f64>,
    sigma_peak: Option<f64>,
    sigma_offpeak: Option<f64>,
    price_noise: Option<f64>,
    utc_offset_hours: Option<i32>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Ingest {
            path: path.display().to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    fn format(&self) -> Result<Option<Format>> {
        match self.format.as_deref() {
            None => Ok(None),
            Some("text") => Ok(Some(Format::Text)),
            Some("json") => Ok(Some(Format::Json)),
            Some("csv") => Ok(Some(Format::Csv)),
            Some(other) => Err(Error::invalid(format!(
                "config format must be text, json, or csv, got {other:?}"
            ))),
        }
    }
}

fn resolve_seed(flag: Option<u64>, config: &RunConfig) -> Result<u64> {
    if let Some(s) = flag.or(config.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(raw) => raw.trim().parse().map_err(|_| {
            Error::invalid(format!(
                "{SEED_ENV_VAR} must be an unsigned integer, got {raw:?}"
            ))
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let format = match cli.format {
        Some(f) => f,
        None => config.format()?.unwrap_or(Format::Text),
    };
    let seed = resolve_seed(cli.seed, &config)?;
    match cli.command {
        Command::Solve(args) => run_solve(args, &config, format).map(|()| true),
        Command::Verify(args) => run_verify(args, &config, format, seed),
        Command::Calibrate(args) => run_calibrate(args, &config, format).map(|()| true),
        Command::Report(args) => run_report(args, &config, format).map(|()| true),
        Command::Synth(args) => run_synth(args, &config, format, seed).map(|()| true),
    }
}

fn require(name: &str, flag: Option<f64>, cfg: Option<f64>) -> Result<f64> {
    flag.or(cfg)
        .ok_or_else(|| Error::invalid(format!("--{name} is required (flag or config file)")))
}

// ---------------------------------------------------------------------------
// solve

#[derive(Serialize)]
struct ScheduleSummary {
    z1_da: f64,
    expected_z1_rt: f64,
    /// Real-time rule: z = base + demand_gain (d1 - mu1) + cond_gain (m - mu2).
    base: f64,
    demand_gain: f64,
    cond_gain: f64,
}

impl ScheduleSummary {
    fn new(schedule: &DispatchSchedule, expected_rt: f64) -> Self {
        ScheduleSummary {
            z1_da: schedule.z1_da,
            expected_z1_rt: expected_rt,
            base: schedule.rt.base,
            demand_gain: schedule.rt.demand_gain,
            cond_gain: schedule.rt.cond_gain,
        }
    }
}

#[derive(Serialize)]
struct NumericCrossCheck {
    nodes: usize,
    centralized_z1_da: f64,
    centralized_cost: f64,
    centralized_foc_residual_max: f64,
    decentralized_z1_da: f64,
    decentralized_profit: f64,
    decentralized_foc_residual_max: f64,
    degenerate: bool,
}

#[derive(Serialize)]
struct SolveOutput {
    supply: SupplyCurve,
    moments: DemandMoments,
    report: RegimeReport,
    centralized: ScheduleSummary,
    decentralized: ScheduleSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    numeric: Option<NumericCrossCheck>,
}

fn run_solve(args: SolveArgs, config: &RunConfig, format: Format) -> Result<()> {
    let alpha = require("alpha", args.alpha, config.alpha)?;
    let beta = require("beta", args.beta, config.beta)?;
    let k_f = require("k-f", args.k_f, config.k_f)?;
    let mu1 = require("mu1", args.mu1, config.mu1)?;
    let mu2 = require("mu2", args.mu2, config.mu2)?;
    let sigma1 = args.sigma1.or(config.sigma1).unwrap_or(0.0);
    let sigma2 = args.sigma2.or(config.sigma2).unwrap_or(0.0);
    let rho = args.rho.or(config.rho).unwrap_or(0.0);

    let curve = SupplyCurve::new(alpha, beta, k_f)?;
    let moments = match args.rho_s.or(config.rho_s) {
        Some(rho_s) => DemandMoments::new(mu1, mu2, sigma1, sigma2, rho, rho_s)?,
        None => DemandMoments::normal(mu1, mu2, sigma1, sigma2, rho)?,
    };
    let report = regime_report(&curve, &moments);

    let dist = JointDemand::normal(mu1, mu2, sigma1, sigma2, rho)?;
    let cn = centralized_schedule(&dist);
    let dcn = decentralized_schedule(&curve, &dist);
    // Affine rules have zero-mean surprise terms, so E[z_rt] is the base
    // for the profit maximizer and zero for the cost minimizer.
    let output = SolveOutput {
        supply: curve,
        moments,
        report,
        centralized: ScheduleSummary::new(&cn, 0.0),
        decentralized: ScheduleSummary::new(&dcn, dcn.rt.base),
        numeric: if args.numeric {
            let nodes = args.nodes.or(config.nodes).unwrap_or(16);
            let nd = NormalJointDemand::new(mu1, mu2, sigma1, sigma2, rho)?;
            let tree = ScenarioTree::from_normal(&nd, nodes, nodes)?;
            let c = solve_centralized(&curve, &tree)?;
            let d = solve_decentralized(&curve, &tree)?;
            Some(NumericCrossCheck {
                nodes,
                centralized_z1_da: c.z1_da,
                centralized_cost: c.objective,
                centralized_foc_residual_max: c.foc_residual_max,
                decentralized_z1_da: d.z1_da,
                decentralized_profit: d.objective,
                decentralized_foc_residual_max: d.foc_residual_max,
                degenerate: c.degenerate || d.degenerate,
            })
        } else {
            None
        },
    };

    match format {
        Format::Json => print_json(&output),
        Format::Csv => {
            println!("regime,cost,savings,z1_da,expected_z1_rt");
            println!("no_battery,{},,,", output.report.cost_no_battery);
            println!(
                "centralized,{},{},{},{}",
                output.report.cost_centralized,
                output.report.gap_centralized,
                output.centralized.z1_da,
                output.centralized.expected_z1_rt
            );
            println!(
                "decentralized,{},{},{},{}",
                output.report.cost_decentralized,
                output.report.gap_decentralized,
                output.decentralized.z1_da,
                output.decentralized.expected_z1_rt
            );
            Ok(())
        }
        Format::Text => {
            let r = &output.report;
            println!("supply curve: alpha {alpha:.4}, beta {beta:.6}, fast share {k_f:.4}");
            println!(
                "demand: mu = ({mu1:.4}, {mu2:.4}), sigma = ({sigma1:.4}, {sigma2:.4}), rho = {rho:.4}, rho_s = {:.4}",
                moments.rho_s
            );
            println!();
            println!("expected generation cost");
            println!("  no battery     {:>18.6}", r.cost_no_battery);
            println!(
                "  centralized    {:>18.6}  (saves {:.6})",
                r.cost_centralized, r.gap_centralized
            );
            println!(
                "  decentralized  {:>18.6}  (saves {:.6})",
                r.cost_decentralized, r.gap_decentralized
            );
            println!();
            let fmt_rule = |s: &ScheduleSummary| {
                format!(
                    "z_da {:.6}, E[z_rt] {:.6}, rt rule: {:.6} + {:.4} (d1 - mu1) {} {:.4} (m - mu2)",
                    s.z1_da,
                    s.expected_z1_rt,
                    s.base,
                    s.demand_gain,
                    if s.cond_gain < 0.0 { "-" } else { "+" },
                    s.cond_gain.abs()
                )
            };
            println!("centralized schedule:   {}", fmt_rule(&output.centralized));
            println!(
                "decentralized schedule: {}",
                fmt_rule(&output.decentralized)
            );
            println!();
            let (w, s, rr) = r.distortions().as_whole_percent();
            println!(
                "distortions: withholds {w}% of the arbitrage volume, shifts {s}% of it \
                 to real time, halves surprise response ({rr}%)"
            );
            match r.price_of_anarchy {
                Some(poa) => println!(
                    "price of anarchy: {poa:.4} (centralized savings exceed decentralized by {:.1}%)",
                    (poa - 1.0) * 100.0
                ),
                None => println!("price of anarchy: n/a (the battery has nothing to arbitrage)"),
            }
            if let Some(n) = &output.numeric {
                println!();
                println!(
                    "numeric cross-check ({0}x{0} tree): centralized z_da {1:.9} (cost {2:.6}), \
                     decentralized z_da {3:.9} (profit {4:.6}), max FOC residual {5:.2e}{6}",
                    n.nodes,
                    n.centralized_z1_da,
                    n.centralized_cost,
                    n.decentralized_z1_da,
                    n.decentralized_profit,
                    n.centralized_foc_residual_max
                        .max(n.decentralized_foc_residual_max),
                    if n.degenerate { " [degenerate]" } else { "" }
                );
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// verify

/// One self-check family's outcome.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation, in the family's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Serialize)]
struct VerifyOutput {
    seed: u64,
    fixtures: usize,
    draws: u64,
    checks: Vec<CheckResult>,
    passed: bool,
}

/// A randomly drawn market instance for verification.
#[derive(Clone, Copy, Debug)]
pub struct VerifyFixture {
    pub curve: SupplyCurve,
    pub moments: DemandMoments,
}

/// Deterministic fixture sample covering the supported parameter ranges.
/// The fast share stays strictly below one: an all-fast fleet leaves the
/// centralized day-ahead/real-time split undetermined (only the total
/// matters), which is exercised separately.
pub fn sample_fixtures(count: usize, seed: u64) -> Vec<VerifyFixture> {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let alpha = rng.random_range(0.0..50.0);
            let beta = 5.0 - rng.random_range(0.0..5.0); // (0, 5]
            let k_f = rng.random_range(0.05..1.0);
            let mu1 = rng.random_range(0.0..50_000.0);
            let mu2 = rng.random_range(0.0..50_000.0);
            let sigma1 = rng.random_range(0.0..5_000.0);
            let sigma2 = rng.random_range(0.0..5_000.0);
            let rho = rng.random_range(-0.95..0.95);
            VerifyFixture {
                curve: SupplyCurve::new(alpha, beta, k_f).expect("ranges are valid"),
                moments: DemandMoments::normal(mu1, mu2, sigma1, sigma2, rho)
                    .expect("ranges are valid"),
            }
        })
        .collect()
}

/// Runs the four check families. Exposed so integration tests can run the
/// exact battery the CLI runs.
pub fn run_checks(
    fixtures: usize,
    draws: u64,
    nodes: usize,
    seed: u64,
    tolerance_override: Option<f64>,
) -> Result<Vec<CheckResult>> {
    let sampled = sample_fixtures(fixtures, seed);
    let tol = |default: f64| tolerance_override.unwrap_or(default);
    let mut checks = Vec::new();

    // Family 1: closed-form schedules and costs vs. independent tree solves.
    {
        let tolerance = tol(1e-6);
        let mut worst = 0.0f64;
        for f in &sampled {
            let m = f.moments;
            let nd = NormalJointDemand::new(m.mu1, m.mu2, m.sigma1, m.sigma2, m.rho)?;
            let dist = JointDemand::Normal(nd.clone());
            let tree = ScenarioTree::from_normal(&nd, nodes, nodes)?;
            let scale = 1.0 + m.mu1.abs() + m.mu2.abs();

            let cn = solve_centralized(&f.curve, &tree)?;
            let cs = centralized_schedule(&dist);
            worst = worst.max((cn.z1_da - cs.z1_da).abs() / scale);
            for (node, &z) in tree.nodes.iter().zip(&cn.z1_rt) {
                worst = worst.max((z - cs.rt.discharge(node.d1)).abs() / scale);
            }
            let cost = cost_centralized(&f.curve, &m);
            worst = worst.max((cn.objective - cost).abs() / cost.abs().max(1.0));

            let dn = solve_decentralized(&f.curve, &tree)?;
            let ds = decentralized_schedule(&f.curve, &dist);
            worst = worst.max((dn.z1_da - ds.z1_da).abs() / scale);
            for (node, &z) in tree.nodes.iter().zip(&dn.z1_rt) {
                worst = worst.max((z - ds.rt.discharge(node.d1)).abs() / scale);
            }
            let cost = cost_decentralized(&f.curve, &m);
            let at_solution = crate::oracle::expected_cost(&f.curve, &tree, dn.z1_da, &dn.z1_rt);
            worst = worst.max((at_solution - cost).abs() / cost.abs().max(1.0));
        }
        checks.push(CheckResult {
            name: "dispatch and cost: closed form vs numeric",
            passed: worst <= tolerance,
            worst,
            tolerance,
            detail: format!("{fixtures} fixtures, {nodes}x{nodes} trees, relative"),
        });
    }

    // Family 2: stationarity residuals of the closed-form schedules.
    {
        let tolerance = tol(1e-10);
        let mut worst = 0.0f64;
        for f in &sampled {
            let m = f.moments;
            let nd = NormalJointDemand::new(m.mu1, m.mu2, m.sigma1, m.sigma2, m.rho)?;
            let dist = JointDemand::Normal(nd.clone());
            let tree = ScenarioTree::from_normal(&nd, nodes, nodes)?;
            for (regime, schedule) in [
                (Regime::Centralized, centralized_schedule(&dist)),
                (
                    Regime::Decentralized,
                    decentralized_schedule(&f.curve, &dist),
                ),
            ] {
                let res = schedule_foc_residuals(&f.curve, &tree, regime, &schedule)?;
                for r in res {
                    worst = worst.max(r.abs());
                }
            }
        }
        checks.push(CheckResult {
            name: "first-order conditions of closed-form schedules",
            passed: worst <= tolerance,
            worst,
            tolerance,
            detail: format!("{fixtures} fixtures, absolute residual"),
        });
    }

    // Family 3: Monte Carlo agreement on a canonical stochastic instance.
    {
        let tolerance = tol(4.0);
        let curve = SupplyCurve::new(1.0, 2.0, 0.5)?;
        let dist = JointDemand::normal(3.0, 1.0, 1.0, 1.0, 0.0)?;
        let m = dist.moments();
        let zero = DispatchSchedule::zero(m.mu1, m.mu2);
        let nb = monte_carlo_cost(&curve, &zero, &dist, draws, seed)?;
        let z_nb = (nb.mean - crate::regimes::cost_no_battery(&curve, &m)).abs()
            / nb.stderr.max(f64::MIN_POSITIVE);

        let cn = centralized_schedule(&dist);
        let cn_cost = monte_carlo_cost(&curve, &cn, &dist, draws, seed.wrapping_add(1))?;
        let z_cn = (cn_cost.mean - cost_centralized(&curve, &m)).abs()
            / cn_cost.stderr.max(f64::MIN_POSITIVE);
        let cn_profit = monte_carlo_profit(&curve, &cn, &dist, draws, seed.wrapping_add(2))?;
        let z_profit = cn_profit.mean.abs() / cn_profit.stderr.max(f64::MIN_POSITIVE);

        let dcn = decentralized_schedule(&curve, &dist);
        let dcn_cost = monte_carlo_cost(&curve, &dcn, &dist, draws, seed.wrapping_add(3))?;
        let z_dcn = (dcn_cost.mean - cost_decentralized(&curve, &m)).abs()
            / dcn_cost.stderr.max(f64::MIN_POSITIVE);

        let worst = z_nb.max(z_cn).max(z_profit).max(z_dcn);
        checks.push(CheckResult {
            name: "Monte Carlo costs and break-even profit",
            passed: worst <= tolerance,
            worst,
            tolerance,
            detail: format!("{draws} draws, standard-error units"),
        });
    }

    // Family 4: conditional-moment identities by simulation.
    {
        let tolerance = tol(4.0);
        let mut worst = 0.0f64;
        for (i, &rho) in [-0.5, 0.0, 0.8].iter().enumerate() {
            let dist = JointDemand::normal(3.0, 1.0, 1.0, 2.0, rho)?;
            let checks_one =
                check_conditional_identities(&dist, draws, seed.wrapping_add(10 + i as u64))?;
            for c in checks_one {
                let slack = c.stderr.max(f64::MIN_POSITIVE);
                worst = worst.max((c.estimate - c.target).abs() / slack);
            }
        }
        checks.push(CheckResult {
            name: "conditional-moment identities",
            passed: worst <= tolerance,
            worst,
            tolerance,
            detail: format!("7 identities x 3 correlations, {draws} draws, standard-error units"),
        });
    }

    Ok(checks)
}

fn run_verify(args: VerifyArgs, config: &RunConfig, format: Format, seed: u64) -> Result<bool> {
    let fixtures = args.fixtures.or(config.fixtures).unwrap_or(100);
    let draws = args.draws.or(config.draws).unwrap_or(200_000);
    let nodes = args.nodes.or(config.nodes).unwrap_or(16);
    let tolerance = args.tolerance.or(config.tolerance);

    let checks = run_checks(fixtures, draws, nodes, seed, tolerance)?;
    let passed = checks.iter().all(|c| c.passed);
    let output = VerifyOutput {
        seed,
        fixtures,
        draws,
        checks,
        passed,
    };

    match format {
        Format::Json => print_json(&output)?,
        Format::Csv => {
            println!("check,passed,worst,tolerance,detail");
            for c in &output.checks {
                println!(
                    "{},{},{:e},{:e},{}",
                    c.name.replace(',', ";"),
                    c.passed,
                    c.worst,
                    c.tolerance,
                    c.detail.replace(',', ";")
                );
            }
            println!("overall,{},,,", output.passed);
        }
        Format::Text => {
            println!("self-checks (seed {seed})");
            for (i, c) in output.checks.iter().enumerate() {
                println!(
                    "[{}/{}] {:<48} {}  worst {:.3e} vs tolerance {:.1e}  ({})",
                    i + 1,
                    output.checks.len(),
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.worst,
                    c.tolerance,
                    c.detail
                );
            }
            println!("overall: {}", if output.passed { "PASS" } else { "FAIL" });
        }
    }
    Ok(passed)
}

// ---------------------------------------------------------------------------
// calibrate

fn run_calibrate(args: CalibrateArgs, config: &RunConfig, format: Format) -> Result<()> {
    let series = HourlySeries::read_csv(&args.input)?;
    let mix = FuelMix::read_json(&args.fuel_mix)?;
    let cal_config = CalibrationConfig {
        peak_hour: args.peak_hour.or(config.peak_hour),
        offpeak_hour: args.offpeak_hour.or(config.offpeak_hour),
        bin_count: args
            .bins
            .or(config.bins)
            .unwrap_or(crate::demand::DEFAULT_BIN_COUNT),
        price_fit_hours: match args.price_hours {
            Some(PriceHours::PeakOffpeak) => PriceFitHours::PeakOffpeakOnly,
            Some(PriceHours::All) | None => PriceFitHours::AllHours,
        },
    };
    let supply_override = match (args.alpha.or(config.alpha), args.beta.or(config.beta)) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let report = quarterly_report(&series, &mix, &cal_config, supply_override)?;

    // The mean daily profile ("duck curve") goes to a sibling CSV so the
    // period choice can be eyeballed.
    let profile_path = args.profile_out.clone().unwrap_or_else(|| {
        let stem = args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "series".to_string());
        args.input.with_file_name(format!("{stem}_profile.csv"))
    });
    write_profile_csv(&profile_path, &mean_profile(&series))?;

    match format {
        Format::Json => print_json(&report)?,
        Format::Csv => {
            println!(
                "year,quarter,days,mu1,mu2,sigma1,sigma2,rho,cost_no_battery,cost_centralized,cost_decentralized,price_of_anarchy"
            );
            for q in &report.quarters {
                println!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    q.year,
                    q.quarter,
                    q.days,
                    q.moments.mu1,
                    q.moments.mu2,
                    q.moments.sigma1,
                    q.moments.sigma2,
                    q.moments.rho,
                    q.regimes.cost_no_battery,
                    q.regimes.cost_centralized,
                    q.regimes.cost_decentralized,
                    q.regimes
                        .price_of_anarchy
                        .map(|p| p.to_string())
                        .unwrap_or_default()
                );
            }
        }
        Format::Text => print_calibration_text(&report, &profile_path),
    }
    Ok(())
}

fn print_calibration_text(report: &CalibrationReport, profile_path: &Path) {
    println!(
        "fast share k_f = {:.4}; supply curve alpha = {:.4}, beta = {:.6}",
        report.k_f, report.alpha, report.beta
    );
    println!(
        "periods: peak hour {:02}:00, off-peak hour {:02}:00",
        report.peak_hour, report.offpeak_hour
    );
    println!();
    println!("quarter     days   mu_peak      mu_offpeak   sigma_pk   sigma_off  rho      PoA");
    for q in &report.quarters {
        println!(
            "{}-Q{}     {:>4}   {:>10.1}   {:>10.1}   {:>8.1}   {:>8.1}   {:>6.3}   {}",
            q.year,
            q.quarter,
            q.days,
            q.moments.mu1,
            q.moments.mu2,
            q.moments.sigma1,
            q.moments.sigma2,
            q.moments.rho,
            q.regimes
                .price_of_anarchy
                .map(|p| format!("{p:.4}"))
                .unwrap_or_else(|| "n/a".to_string())
        );
    }
    println!();
    match report.annual_average_poa {
        Some(poa) => println!("average price of anarchy over defined quarters: {poa:.4}"),
        None => println!("no quarter defines a price of anarchy"),
    }
    if let Some(q) = report.quarters.first() {
        let (w, s, rr) = q.regimes.distortions().as_whole_percent();
        println!(
            "strategic distortions at k_f = {:.2}: withholds {w}%, shifts {s}% to real time, \
             halves surprise response ({rr}%)",
            report.k_f
        );
    }
    println!("mean daily profile written to {}", profile_path.display());
    for w in &report.warnings {
        println!("warning: {w}");
    }
}

fn write_profile_csv(path: &Path, profile: &[(u32, f64)]) -> Result<()> {
    use std::io::Write;
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(out, "hour,mean_net_demand_mw").map_err(|e| Error::io(path, e))?;
    for &(h, mean) in profile {
        writeln!(out, "{h},{mean}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report

fn run_report(args: ReportArgs, config: &RunConfig, format: Format) -> Result<()> {
    let points = args.points.or(config.points).unwrap_or(100);
    if points < 2 {
        return Err(Error::invalid("--points must be at least 2"));
    }

    // Optional instance-specific PoA column.
    let instance = match (args.mu1.or(config.mu1), args.mu2.or(config.mu2)) {
        (Some(mu1), Some(mu2)) => {
            let sigma1 = args.sigma1.or(config.sigma1).unwrap_or(0.0);
            let sigma2 = args.sigma2.or(config.sigma2).unwrap_or(0.0);
            let rho = args.rho.or(config.rho).unwrap_or(0.0);
            let alpha = args.alpha.or(config.alpha).unwrap_or(0.0);
            let beta = args.beta.or(config.beta).unwrap_or(1.0);
            Some((
                DemandMoments::normal(mu1, mu2, sigma1, sigma2, rho)?,
                alpha,
                beta,
            ))
        }
        (None, None) => None,
        _ => {
            return Err(Error::invalid(
                "an instance column needs both --mu1 and --mu2",
            ));
        }
    };

    #[derive(Serialize)]
    struct Row {
        k_f: f64,
        quantity_withholding: f64,
        shift_da_to_rt: f64,
        rt_responsiveness_reduction: f64,
        mean_dominated_poa: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        instance_poa: Option<f64>,
    }

    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        // Grid over (0, 1]: the all-slow endpoint is an analytic limit, not
        // a market the clearing equations accept.
        let k_f = (i + 1) as f64 / points as f64;
        let d = distortion_metrics(k_f)?;
        let instance_poa = instance.as_ref().and_then(|(m, alpha, beta)| {
            let curve = SupplyCurve::new(*alpha, *beta, k_f).ok()?;
            crate::regimes::price_of_anarchy(&curve, m)
        });
        rows.push(Row {
            k_f,
            quantity_withholding: d.quantity_withholding,
            shift_da_to_rt: d.shift_da_to_rt,
            rt_responsiveness_reduction: d.rt_responsiveness_reduction,
            mean_dominated_poa: mean_dominated_poa(k_f),
            instance_poa,
        });
    }

    let render_csv = |rows: &[Row]| -> String {
        let mut s = String::new();
        let with_instance = instance.is_some();
        s.push_str("k_f,quantity_withholding,shift_da_to_rt,rt_responsiveness_reduction,mean_dominated_poa");
        if with_instance {
            s.push_str(",instance_poa");
        }
        s.push('\n');
        for r in rows {
            s.push_str(&format!(
                "{},{},{},{},{}",
                r.k_f,
                r.quantity_withholding,
                r.shift_da_to_rt,
                r.rt_responsiveness_reduction,
                r.mean_dominated_poa
            ));
            if with_instance {
                s.push(',');
                if let Some(p) = r.instance_poa {
                    s.push_str(&p.to_string());
                }
            }
            s.push('\n');
        }
        s
    };

    let body = match format {
        Format::Json => serde_json::to_string_pretty(&rows)
            .map(|s| s + "\n")
            .map_err(|e| Error::invalid(format!("could not serialize report: {e}")))?,
        Format::Csv | Format::Text => render_csv(&rows),
    };
    match &args.output {
        Some(path) => std::fs::write(path, body).map_err(|e| Error::io(path, e))?,
        None => print!("{body}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

fn run_synth(args: SynthArgs, config: &RunConfig, format: Format, seed: u64) -> Result<()> {
    let defaults = SynthConfig::default();
    let synth = SynthConfig {
        start_date: args
            .start_date
            .or(config.start_date)
            .unwrap_or(defaults.start_date),
        days: args.days.or(config.days).unwrap_or(defaults.days),
        peak_hour: args
            .peak_hour
            .or(config.peak_hour)
            .unwrap_or(defaults.peak_hour),
        offpeak_hour: args
            .offpeak_hour
            .or(config.offpeak_hour)
            .unwrap_or(defaults.offpeak_hour),
        mu_peak: args.mu_peak.or(config.mu_peak).unwrap_or(defaults.mu_peak),
        mu_offpeak: args
            .mu_offpeak
            .or(config.mu_offpeak)
            .unwrap_or(defaults.mu_offpeak),
        sigma_peak: args
            .sigma_peak
            .or(config.sigma_peak)
            .unwrap_or(defaults.sigma_peak),
        sigma_offpeak: args
            .sigma_offpeak
            .or(config.sigma_offpeak)
            .unwrap_or(defaults.sigma_offpeak),
        rho: args.rho.or(config.rho).unwrap_or(defaults.rho),
        alpha: args.alpha.or(config.alpha).unwrap_or(defaults.alpha),
        beta: args.beta.or(config.beta).unwrap_or(defaults.beta),
        price_noise: args
            .price_noise
            .or(config.price_noise)
            .unwrap_or(defaults.price_noise),
        utc_offset_hours: args
            .utc_offset_hours
            .or(config.utc_offset_hours)
            .unwrap_or(defaults.utc_offset_hours),
    };
    let series = generate_synthetic(&synth, seed)?;
    series.write_csv(&args.output)?;

    #[derive(Serialize)]
    struct SynthSummary {
        path: String,
        hours: usize,
        days: u32,
        seed: u64,
        config: SynthConfig,
    }
    let summary = SynthSummary {
        path: args.output.display().to_string(),
        hours: series.len(),
        days: synth.days,
        seed,
        config: synth,
    };
    match format {
        Format::Json => print_json(&summary)?,
        Format::Csv | Format::Text => {
            println!(
                "wrote {} hours ({} days, seed {}) to {}",
                summary.hours, summary.days, summary.seed, summary.path
            );
        }
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("could not serialize output: {e}")))?;
    println!("{body}");
    Ok(())
}
