use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ca_isac::channel::{sigma_for_snr, simulate_bands, Target, TargetScene};
use ca_isac::config::{make_table3_config, CaConfig, Scheme};
use ca_isac::crlb::{crlb_sweep, CrlbMethod};
use ca_isac::grid::write_grid_csv;
use ca_isac::harness::{
    run_sweep, snapshot_spectra, write_spectrum_csv, write_sweep_csv, ExperimentSpec, Method,
    Placement,
};
use ca_isac::sparse::SolverOptions;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

#[derive(Parser)]
#[command(
    name = "ca-isac",
    version,
    about = "Carrier-aggregated OFDM radar sensing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the reference configuration as TOML.
    DefaultConfig,
    /// Simulate both bands and write their channel-information matrices.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: TargetArgs,
        /// SNR in dB; omit for a noiseless channel.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
    },
    /// Single-shot range/velocity estimate; writes both spectra.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// SNR in dB; omit for a noiseless channel.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
    },
    /// Cramér-Rao bounds over SNR and, optionally, low-band spacing.
    Crlb {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "-30:5:10", allow_hyphen_values = true)]
        snr: String,
        /// Low-band subcarrier spacings in Hz (same syntax as --snr).
        #[arg(long)]
        spacing: Option<String>,
        #[arg(long, value_enum, default_value_t = BoundMethod::ClosedForm)]
        method: BoundMethod,
    },
    /// Monte-Carlo RMSE sweep over SNR.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Methods to run: CA1..CA4, high-block, high-comb (comma list).
        #[arg(long, default_value = "CA1", value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// RMSE sweep of all four aggregation schemes on one SNR grid.
    ComparePilots {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults to the reference numerology.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-pattern the configuration for this scheme (CA1..CA4).
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (directory for simulate/estimate). Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TargetArgs {
    /// Target range (m).
    #[arg(long, default_value_t = 117.0)]
    range: f64,
    /// Target radial velocity (m/s).
    #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
    velocity: f64,
    /// Gain magnitude.
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    /// Gain phase (rad).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    gain_phase: f64,
}

impl TargetArgs {
    fn target(&self) -> Target {
        Target::new(self.range, self.velocity)
            .with_gain(Complex64::from_polar(self.gain, self.gain_phase))
    }
}

#[derive(Args)]
struct SolverArgs {
    /// lambda = scale * ||A^H d||_inf.
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Fixed lambda (overrides --lambda-scale).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            lambda_scale: self.lambda_scale.unwrap_or(d.lambda_scale),
            lambda: self.lambda,
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// "start:step:stop" or a comma list, in dB.
    #[arg(long, default_value = "-30:5:10", allow_hyphen_values = true)]
    snr: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Draw each trial's target uniformly within one bin around --range/--velocity.
    #[arg(long)]
    random_placement: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundMethod {
    ClosedForm,
    Oracle,
}

/// Parses `"start:step:stop"` (inclusive) or `"a,b,c"`.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    let values = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad range {spec:?}"))?;
        let [start, step, stop] = parts[..] else {
            bail!("range must be start:step:stop, got {spec:?}");
        };
        ensure!(
            step > 0.0 && stop >= start,
            "range {spec:?} needs step > 0 and stop >= start"
        );
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + i as f64 * step).collect()
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("bad list {spec:?}"))?
    };
    ensure!(!values.is_empty(), "empty grid");
    ensure!(
        values.iter().all(|v| v.is_finite()),
        "grid values must be finite"
    );
    Ok(values)
}

fn load_config(common: &Common) -> Result<CaConfig> {
    let cfg = match &common.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            CaConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => make_table3_config(),
    };
    let cfg = match common.scheme {
        Some(s) => Method::Scheme(s).config(&cfg),
        None => cfg,
    };
    Ok(cfg.validate()?)
}

fn sigma(snr: Option<f64>, target: &Target) -> f64 {
    snr.map_or(0.0, |s| sigma_for_snr(s, target.gain))
}

fn with_output(
    out: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
        }
    }
    Ok(())
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn run_experiment(common: &Common, args: &SweepArgs, methods: Vec<Method>) -> Result<()> {
    let cfg = load_config(common)?;
    ensure!(args.trials >= 1, "--trials must be >= 1");
    let mut spec = ExperimentSpec::new(cfg, methods, args.target.target(), parse_grid(&args.snr)?);
    spec.trials = args.trials;
    spec.master_seed = common.seed;
    spec.solver = args.solver.options();
    if args.random_placement {
        spec.placement = Placement::one_bin(&cfg);
    }
    let result = run_sweep(&spec)?;
    for r in &result.rows {
        log::info!("{} {} dB: {:.3}s", r.method, r.snr_db, r.wall_time_s);
    }
    with_output(common.out.as_deref(), |w| write_sweep_csv(w, &result))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DefaultConfig => {
            print!("{}", make_table3_config().to_toml());
        }
        Command::Simulate {
            common,
            target,
            snr,
        } => {
            let cfg = load_config(&common)?;
            let t = target.target();
            let scene = TargetScene::single(t, sigma(snr, &t), common.seed);
            let (lo, hi) = simulate_bands(&cfg, &scene)?;
            let dir = out_dir(&common.out)?;
            for (name, d) in [("low.csv", &lo), ("high.csv", &hi)] {
                let path = dir.join(name);
                with_output(Some(&path), |w| write_grid_csv(w, &d.values, &d.mask))?;
            }
            println!("wrote {}", dir.display());
        }
        Command::Estimate {
            common,
            target,
            solver,
            snr,
        } => {
            let cfg = load_config(&common)?;
            let t = target.target();
            let snr_db = snr.unwrap_or(f64::INFINITY);
            let snap = snapshot_spectra(&cfg, t, snr_db, common.seed, &solver.options())?;
            let dir = out_dir(&common.out)?;
            with_output(Some(&dir.join("range.csv")), |w| {
                write_spectrum_csv(w, &snap.range)
            })?;
            with_output(Some(&dir.join("velocity.csv")), |w| {
                write_spectrum_csv(w, &snap.velocity)
            })?;
            let mean = |es: &[ca_isac::estimators::Estimate]| {
                es.iter().map(|e| e.value).sum::<f64>() / es.len() as f64
            };
            println!(
                "{}: range {:.6} m, velocity {:.6} m/s",
                cfg.scheme,
                mean(&snap.range),
                mean(&snap.velocity)
            );
        }
        Command::Crlb {
            common,
            snr,
            spacing,
            method,
        } => {
            let base = match &common.config {
                Some(_) => load_config(&common)?,
                None => make_table3_config(),
            };
            let schemes = match common.scheme {
                Some(s) => vec![s],
                None => Scheme::ALL.to_vec(),
            };
            let snrs = parse_grid(&snr)?;
            let spacings = match &spacing {
                Some(s) => parse_grid(s)?,
                None => vec![base.low.spacing_hz],
            };
            let method = match method {
                BoundMethod::ClosedForm => CrlbMethod::ClosedForm,
                BoundMethod::Oracle => CrlbMethod::Oracle,
            };
            let mut tables = Vec::new();
            for s in schemes {
                let cfg = Method::Scheme(s).config(&base);
                tables.push((s, crlb_sweep(&cfg, &snrs, &spacings, method)?));
            }
            with_output(common.out.as_deref(), |w| {
                writeln!(
                    w,
                    "scheme,snr_db,low_spacing_hz,high_spacing_hz,crlb_r,crlb_v,rcrlb_r,rcrlb_v,method"
                )?;
                for (s, rows) in &tables {
                    for r in rows {
                        let b = &r.report;
                        writeln!(
                            w,
                            "{s},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                            r.snr_db,
                            r.low_spacing_hz,
                            r.high_spacing_hz,
                            b.crlb_range,
                            b.crlb_velocity,
                            b.rcrlb_range,
                            b.rcrlb_velocity,
                            b.method.name()
                        )?;
                    }
                }
                Ok(())
            })?;
        }
        Command::Sweep {
            common,
            sweep,
            methods,
        } => run_experiment(&common, &sweep, methods)?,
        Command::ComparePilots { common, sweep } => {
            let methods = Scheme::ALL.iter().map(|&s| Method::Scheme(s)).collect();
            run_experiment(&common, &sweep, methods)?
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(Cli::parse())
}
