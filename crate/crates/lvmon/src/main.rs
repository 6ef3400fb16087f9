//! `lvmon`: QAM signal-quality simulation and blind L-value-histogram
//! monitoring from the command line.

use clap::{Args, Parser, Subcommand};
use lvmon::blind::{EstimatorConfig, HistogramFile};
use lvmon::channel::ChannelSnr;
use lvmon::demapper::DemapMetric;
use lvmon::harness::{
    self, build_constellation, ft_preset, point_seed, PointPlan, SweepConfig,
};
use lvmon::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lvmon", version, about = "QAM signal-quality metrics and blind L-value monitoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one operating point and print metrics plus blind estimates.
    Simulate(SimulateArgs),
    /// Run a (n_bin x SNR) sweep from a TOML config and write result rows.
    Sweep(SweepArgs),
    /// Estimate blind ASI and Q from an exported histogram JSON file.
    Estimate(EstimateArgs),
    /// Resolve the auxiliary-channel SNR for a FEC-threshold ASI target.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct PointArgs {
    /// Modulation format: qpsk, 16qam, 64qam, 256qam, ps-16qam, ps-64qam, ps-256qam.
    #[arg(long)]
    format: String,
    /// Symbol entropy in bpcu (required for ps- formats).
    #[arg(long)]
    entropy: Option<f64>,
    /// L-value bins.
    #[arg(long, default_value_t = 256)]
    n_bin: usize,
    /// Saturation level l_max; delta_l = 2*l_max/(n_bin-1).
    #[arg(long, default_value_t = 13.0)]
    l_max: f64,
    /// Explicit L-value step size (overrides --l-max).
    #[arg(long)]
    delta_l: Option<f64>,
    /// Receive quantization levels per dimension (64..=1024).
    #[arg(long, default_value_t = 1024)]
    y_quant_levels: usize,
    /// Demapper arithmetic: maxlog or sum.
    #[arg(long, default_value = "maxlog")]
    metric: String,
    /// Auxiliary channel SNR in dB (skips calibration).
    #[arg(long)]
    aux_snr_db: Option<f64>,
    /// Calibrate the auxiliary SNR to this matched ASI target.
    #[arg(long)]
    aux_asi_target: Option<f64>,
    /// FEC threshold preset: ft1 (0.93), ft2 (0.86), ft3 (0.78).
    #[arg(long)]
    fec_threshold: Option<String>,
    /// L-value samples.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl PointArgs {
    fn to_sweep_config(&self, snr_db: Vec<f64>, noiseless: bool) -> lvmon::Result<SweepConfig> {
        Ok(SweepConfig {
            format: self.format.clone(),
            entropy_bpcu: self.entropy,
            snr_db,
            noiseless,
            n_bin: vec![self.n_bin],
            l_max: self.l_max,
            delta_l: self.delta_l,
            y_quant_levels: self.y_quant_levels,
            metric: self.metric.parse::<DemapMetric>()?,
            aux_snr_db: self.aux_snr_db,
            aux_asi_target: self.aux_asi_target,
            fec_threshold: self.fec_threshold.clone(),
            n_lvalues: self.samples,
            seed: self.seed,
            compute_gmi: true,
            refine_fit: true,
            use_measured_marginal: false,
            out_csv: None,
            out_json: None,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    point: PointArgs,
    /// Channel SNR in dB.
    #[arg(long, required_unless_present = "noiseless")]
    snr_db: Option<f64>,
    /// Noiseless channel (y = x).
    #[arg(long)]
    noiseless: bool,
    /// Skip the GMI/NGMI computation.
    #[arg(long)]
    no_gmi: bool,
    /// Also print per-tributary blind estimates.
    #[arg(long)]
    per_tributary: bool,
    /// Write the captured |L| histogram to this JSON file.
    #[arg(long)]
    histogram_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the CSV output path ("-" for stdout).
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Override the JSON output path.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Histogram JSON file exported by the capture path.
    histogram: PathBuf,
    /// FEC-threshold ASI for the margin report.
    #[arg(long, default_value_t = 0.86)]
    fec_threshold: f64,
    /// Disable local refinement after the exhaustive candidate search.
    #[arg(long)]
    no_refine: bool,
    /// Candidate means in the bank (0 keeps the default grid).
    #[arg(long, default_value_t = 0)]
    grid_mu: usize,
    /// Candidate sigmas in the bank (0 keeps the default grid).
    #[arg(long, default_value_t = 0)]
    grid_sigma: usize,
    /// Weight the conditional entropy by the measured |L| pmf.
    #[arg(long)]
    measured_marginal: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    point: PointArgs,
    /// ASI target; defaults to the ft2 preset when neither this nor a preset
    /// is given through the point flags.
    #[arg(long)]
    target: Option<f64>,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> lvmon::Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Estimate(args) => estimate(args),
        Command::Calibrate(args) => calibrate(args),
    }
}

fn fmt_opt(v: Option<f64>, width: usize, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.prec$}"),
        None => format!("{:>width$}", "-"),
    }
}

fn simulate(args: SimulateArgs) -> lvmon::Result<()> {
    let snr_grid = args.snr_db.map(|v| vec![v]).unwrap_or_default();
    let mut cfg = args.point.to_sweep_config(snr_grid, args.noiseless)?;
    cfg.compute_gmi = !args.no_gmi;
    let c = build_constellation(&cfg.format, cfg.entropy_bpcu)?;
    let aux_snr_db = harness::resolve_aux_snr(&cfg, &c)?;
    let quantizer = match cfg.delta_l {
        Some(dl) => lvmon::LQuantizer::new(cfg.n_bin[0], dl)?,
        None => lvmon::LQuantizer::with_l_max(cfg.n_bin[0], cfg.l_max)?,
    };
    let snr = if args.noiseless {
        ChannelSnr::Noiseless
    } else {
        ChannelSnr::Db(args.snr_db.unwrap())
    };
    let plan = PointPlan {
        constellation: &c,
        format: cfg.format.clone(),
        quantizer: quantizer.clone(),
        snr,
        aux_snr_db,
        y_quant_levels: cfg.y_quant_levels,
        metric: cfg.metric,
        n_lvalues: cfg.n_lvalues,
        seed: point_seed(cfg.seed, 0),
        compute_gmi: cfg.compute_gmi,
        estimator: EstimatorConfig::default(),
    };
    let (report, est, hist) = harness::run_point(&plan)?;

    println!("format        : {} (H = {:.6} bpcu)", cfg.format, c.prior().entropy_bpcu());
    match snr {
        ChannelSnr::Db(v) => println!("snr_db        : {v:.3}"),
        ChannelSnr::Noiseless => println!("snr_db        : noiseless"),
    }
    println!("aux_snr_db    : {aux_snr_db:.3}");
    println!(
        "quantizer     : n_bin={} delta_l={:.6} l_max={:.4}",
        quantizer.n_bin(),
        quantizer.delta_l(),
        quantizer.l_max()
    );
    println!("samples       : {}", report.sample_count);
    println!("asi           : {:.6}", report.asi);
    println!("gmi_bpcu      : {}", fmt_opt(report.gmi_bpcu, 0, 6));
    println!("ngmi          : {}", fmt_opt(report.ngmi, 0, 6));
    println!("s_opt         : {}", fmt_opt(report.s_opt, 0, 4));
    println!("ber_pre       : {:.6e}", report.ber_pre);
    println!("q_ber_db      : {}", fmt_opt(report.q_ber_db, 0, 4));
    println!("asi_hat       : {:.6}   (err {:+.6})", est.asi_hat, est.asi_hat - report.asi);
    println!("q_hat_db      : {}", fmt_opt(est.q_hat_db, 0, 4));
    println!("mu_hat        : {}", fmt_opt(est.mu_hat, 0, 4));
    println!("sigma_hat     : {}", fmt_opt(est.sigma_hat, 0, 4));
    println!("rho           : {:.6}", est.rho);
    println!("fit_residual  : {:.3e}", est.fit_residual);

    if args.per_tributary {
        // Rebuild the L-values for the per-tributary view.
        use lvmon::channel::{transmit, ChannelConfig};
        use lvmon::demapper::{demap, DemapperConfig};
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(plan.seed);
        let n_sym = cfg.n_lvalues.div_ceil(c.bits_per_symbol());
        let (x, _) = c.sample_symbols(n_sym, &mut rng);
        let y = transmit(&x, &ChannelConfig { snr }, &mut rng);
        let dcfg = DemapperConfig::new(aux_snr_db, cfg.y_quant_levels, quantizer.clone())?
            .with_metric(cfg.metric);
        let l = demap(&y, &c, &dcfg)?;
        for (t, e) in lvmon::blind::estimate_per_tributary(&l, &quantizer, &plan.estimator)?
            .iter()
            .enumerate()
        {
            println!(
                "tributary {t}   : asi_hat={:.6} q_hat_db={} rho={:.4}",
                e.asi_hat,
                fmt_opt(e.q_hat_db, 0, 4),
                e.rho
            );
        }
    }

    if let Some(path) = args.histogram_out {
        let meta = serde_json::json!({
            "format": cfg.format,
            "entropy_bpcu": c.prior().entropy_bpcu(),
            "snr_db": args.snr_db,
            "aux_snr_db": aux_snr_db,
            "seed": cfg.seed,
        });
        HistogramFile::from_histogram(&hist, meta).write(&path)?;
        println!("histogram     : written to {}", path.display());
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> lvmon::Result<()> {
    let mut cfg = SweepConfig::from_toml_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(p) = args.out_csv {
        cfg.out_csv = Some(p);
    }
    if let Some(p) = args.out_json {
        cfg.out_json = Some(p);
    }
    let rows = harness::run_sweep(&cfg)?;
    match &cfg.out_csv {
        Some(p) if p.as_os_str() != "-" => {
            harness::write_rows_csv(&rows, p)?;
            eprintln!("wrote {} rows to {}", rows.len(), p.display());
        }
        _ => print!("{}", harness::rows_to_csv(&rows)?),
    }
    if let Some(p) = &cfg.out_json {
        harness::write_rows_json(&rows, p)?;
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> lvmon::Result<()> {
    let file = HistogramFile::read(&args.histogram)?;
    let hist = file.into_histogram()?;
    let mut cfg = EstimatorConfig {
        refine: !args.no_refine,
        use_measured_marginal: args.measured_marginal,
        ..EstimatorConfig::default()
    };
    if args.grid_mu > 0 && args.grid_sigma > 0 {
        let q = hist.quantizer();
        cfg.grid = Some(lvmon::CandidateGrid {
            n_mu: args.grid_mu,
            n_sigma: args.grid_sigma,
            mu_max: 2.0 * q.l_max(),
            sigma_max: q.l_max(),
        });
    }
    if !(args.fec_threshold > 0.0 && args.fec_threshold < 1.0) {
        return Err(Error::Config(format!(
            "fec threshold {} must lie in (0, 1)",
            args.fec_threshold
        )));
    }
    let est = lvmon::blind::estimate(&hist, &cfg)?;
    println!("asi_hat       : {:.6}", est.asi_hat);
    println!("q_hat_db      : {}", fmt_opt(est.q_hat_db, 0, 4));
    println!("margin        : {:+.6}  (vs threshold {:.3})", est.asi_hat - args.fec_threshold, args.fec_threshold);
    println!("mu_hat        : {}", fmt_opt(est.mu_hat, 0, 4));
    println!("sigma_hat     : {}", fmt_opt(est.sigma_hat, 0, 4));
    println!("rho           : {:.6}", est.rho);
    println!("fit_residual  : {:.3e}", est.fit_residual);
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> lvmon::Result<()> {
    let mut cfg = args.point.to_sweep_config(vec![0.0], false)?;
    if let Some(t) = args.target {
        cfg.aux_asi_target = Some(t);
        cfg.aux_snr_db = None;
    } else if cfg.aux_asi_target.is_none() && cfg.fec_threshold.is_none() && cfg.aux_snr_db.is_none()
    {
        cfg.fec_threshold = Some("ft2".into());
    }
    let c = build_constellation(&cfg.format, cfg.entropy_bpcu)?;
    let target = match (cfg.aux_asi_target, &cfg.fec_threshold) {
        (Some(t), _) => t,
        (None, Some(name)) => ft_preset(name)?,
        (None, None) => {
            return Err(Error::Config("calibrate needs --target or --fec-threshold".into()))
        }
    };
    let aux = harness::resolve_aux_snr(&cfg, &c)?;
    println!("format        : {} (H = {:.6} bpcu)", cfg.format, c.prior().entropy_bpcu());
    println!("asi_target    : {target:.4}");
    println!("aux_snr_db    : {aux:.4}");
    Ok(())
}
