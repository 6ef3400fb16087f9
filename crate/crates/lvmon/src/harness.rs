//! Sweep orchestration: declarative configuration, reproducible seeding,
//! per-point simulation, and CSV/JSON result output.

use crate::blind::{self, BlindEstimate, EstimatorConfig, LHistogram};
use crate::channel::{calibrate_aux_snr, transmit, CalibrationOptions, ChannelConfig, ChannelSnr};
use crate::constellation::Constellation;
use crate::demapper::{bits_flat, demap, symmetrize, DemapMetric, DemapperConfig, LQuantizer};
use crate::metrics::{self, MetricsReport};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Output row schema identifier; bump when columns change.
pub const ROW_SCHEMA: &str = "lvmon-row-v1";

/// FEC-threshold ASI presets.
pub fn ft_preset(name: &str) -> Result<f64> {
    match name.to_ascii_lowercase().as_str() {
        "ft1" | "ft#1" => Ok(0.93),
        "ft2" | "ft#2" => Ok(0.86),
        "ft3" | "ft#3" => Ok(0.78),
        other => Err(Error::Config(format!(
            "unknown FEC threshold preset '{other}' (expected ft1, ft2, or ft3)"
        ))),
    }
}

/// Builds a constellation from a format name plus optional shaping entropy.
///
/// Recognized names: `qpsk`, `16qam`, `64qam`, `256qam` and their `ps-`
/// prefixed shaped variants (which require `entropy_bpcu`).
pub fn build_constellation(format: &str, entropy_bpcu: Option<f64>) -> Result<Constellation> {
    let norm: String = format
        .to_ascii_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    let (shaped, base) = match norm.strip_prefix("ps") {
        Some(rest) => (true, rest),
        None => (false, norm.as_str()),
    };
    let m = match base {
        "qpsk" | "4qam" | "qam4" => 2,
        "16qam" | "qam16" => 4,
        "64qam" | "qam64" => 6,
        "256qam" | "qam256" => 8,
        other => {
            return Err(Error::Config(format!("unknown modulation format '{other}'")));
        }
    };
    if shaped {
        let h = entropy_bpcu.ok_or_else(|| {
            Error::Config(format!("shaped format '{format}' needs entropy_bpcu"))
        })?;
        Constellation::ps_qam(m, h)
    } else {
        if let Some(h) = entropy_bpcu {
            if (h - m as f64).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "uniform format '{format}' cannot take entropy {h}"
                )));
            }
        }
        Constellation::uniform_qam(m)
    }
}

/// Derives an order-independent per-point seed from the master seed via a
/// splitmix64-style finalizer, so points may run in any order or in parallel.
pub fn point_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn default_n_bins() -> Vec<usize> {
    vec![256]
}
fn default_l_max() -> f64 {
    13.0
}
fn default_y_quant() -> usize {
    1024
}
fn default_n_lvalues() -> usize {
    1_000_000
}
fn default_seed() -> u64 {
    1
}
fn default_true() -> bool {
    true
}

/// Declarative sweep configuration; the TOML config file maps to this struct
/// and CLI flags override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Modulation format name, e.g. "16qam" or "ps-64qam".
    pub format: String,
    #[serde(default)]
    pub entropy_bpcu: Option<f64>,
    /// Channel SNR grid in dB.
    pub snr_db: Vec<f64>,
    /// Replace the AWGN channel by a noiseless pass (ignores `snr_db` values
    /// for noise, but one row per grid entry is still produced).
    #[serde(default)]
    pub noiseless: bool,
    /// L-value bin counts to sweep.
    #[serde(default = "default_n_bins")]
    pub n_bin: Vec<usize>,
    /// Saturation level; `delta_l = 2*l_max/(n_bin-1)` per bin count.
    #[serde(default = "default_l_max")]
    pub l_max: f64,
    /// Explicit step size; overrides `l_max` when set.
    #[serde(default)]
    pub delta_l: Option<f64>,
    #[serde(default = "default_y_quant")]
    pub y_quant_levels: usize,
    #[serde(default)]
    pub metric: DemapMetric,
    /// Auxiliary-channel SNR; wins over the ASI-target options when set.
    #[serde(default)]
    pub aux_snr_db: Option<f64>,
    /// Calibrate the auxiliary SNR to this matched-decoding ASI.
    #[serde(default)]
    pub aux_asi_target: Option<f64>,
    /// Named FEC threshold preset (ft1/ft2/ft3) as the ASI target.
    #[serde(default)]
    pub fec_threshold: Option<String>,
    /// L-value samples per sweep point.
    #[serde(default = "default_n_lvalues")]
    pub n_lvalues: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Compute GMI/NGMI per point (the blind path never needs them).
    #[serde(default = "default_true")]
    pub compute_gmi: bool,
    #[serde(default = "default_true")]
    pub refine_fit: bool,
    #[serde(default)]
    pub use_measured_marginal: bool,
    #[serde(default)]
    pub out_csv: Option<PathBuf>,
    #[serde(default)]
    pub out_json: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Short hash of the canonical serialized config, recorded per row for
    /// exact replay.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            grid: None,
            refine: self.refine_fit,
            use_measured_marginal: self.use_measured_marginal,
            ..EstimatorConfig::default()
        }
    }

    fn quantizer_for(&self, n_bin: usize) -> Result<LQuantizer> {
        match self.delta_l {
            Some(dl) => LQuantizer::new(n_bin, dl),
            None => LQuantizer::with_l_max(n_bin, self.l_max),
        }
    }
}

/// One result row: configuration echo, ground-truth metrics, and the blind
/// estimate side by side.
#[derive(Debug, Clone, Serialize)]
pub struct PointRow {
    pub schema: String,
    pub config_hash: String,
    pub point_index: usize,
    pub format: String,
    pub entropy_bpcu: f64,
    pub snr_db: Option<f64>,
    pub noiseless: bool,
    pub aux_snr_db: f64,
    pub n_bin: usize,
    pub delta_l: f64,
    pub y_quant_levels: usize,
    pub metric: String,
    pub n_lvalues: usize,
    pub seed: u64,
    pub gmi_bpcu: Option<f64>,
    pub ngmi: Option<f64>,
    pub s_opt: Option<f64>,
    pub asi: f64,
    pub ber_pre: f64,
    pub q_ber_db: Option<f64>,
    pub asi_hat: f64,
    pub q_hat_db: Option<f64>,
    pub mu_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub rho: f64,
    pub fit_residual: f64,
    pub asi_err: f64,
    pub q_err_db: Option<f64>,
}

/// Everything needed to simulate one sweep point.
pub struct PointPlan<'a> {
    pub constellation: &'a Constellation,
    pub format: String,
    pub quantizer: LQuantizer,
    pub snr: ChannelSnr,
    pub aux_snr_db: f64,
    pub y_quant_levels: usize,
    pub metric: DemapMetric,
    pub n_lvalues: usize,
    pub seed: u64,
    pub compute_gmi: bool,
    pub estimator: EstimatorConfig,
}

/// Simulates one operating point: ground-truth metrics plus blind estimate.
pub fn run_point(plan: &PointPlan) -> Result<(MetricsReport, BlindEstimate, LHistogram)> {
    let c = plan.constellation;
    let m = c.bits_per_symbol();
    let n_sym = plan.n_lvalues.div_ceil(m);
    let mut rng = ChaCha12Rng::seed_from_u64(plan.seed);
    let (x, labels) = c.sample_symbols(n_sym, &mut rng);
    let y = transmit(&x, &ChannelConfig { snr: plan.snr }, &mut rng);
    let cfg = DemapperConfig::new(plan.aux_snr_db, plan.y_quant_levels, plan.quantizer.clone())?
        .with_metric(plan.metric);
    let l = demap(&y, c, &cfg)?;

    let tx_bits = bits_flat(&labels, m);
    let ber = metrics::ber_pre(&tx_bits, &l.hard_decisions())?;
    let q_ber_db = metrics::q_from_ber(ber).ok().map(|q| q.db);
    let l_a = symmetrize(&l, &labels)?;
    let asi = metrics::asi(&l_a, &plan.quantizer)?;
    let (gmi_bpcu, ngmi, s_opt) = if plan.compute_gmi {
        let est = metrics::gmi(&l, &labels, c)?;
        let ngmi = metrics::ngmi(est.gmi_bpcu, c.prior().entropy_bpcu(), m);
        (Some(est.gmi_bpcu), Some(ngmi), Some(est.s_opt))
    } else {
        (None, None, None)
    };
    let report = MetricsReport {
        gmi_bpcu,
        ngmi,
        asi,
        ber_pre: ber,
        q_ber_db,
        s_opt,
        sample_count: n_sym * m,
    };

    let hist = blind::build_histogram(&l, &plan.quantizer)?;
    let estimate = blind::estimate(&hist, &plan.estimator)?;
    Ok((report, estimate, hist))
}

fn row_from(
    plan: &PointPlan,
    point_index: usize,
    report: &MetricsReport,
    est: &BlindEstimate,
    config_hash: &str,
) -> PointRow {
    PointRow {
        schema: ROW_SCHEMA.into(),
        config_hash: config_hash.into(),
        point_index,
        format: plan.format.clone(),
        entropy_bpcu: plan.constellation.prior().entropy_bpcu(),
        snr_db: match plan.snr {
            ChannelSnr::Db(v) => Some(v),
            ChannelSnr::Noiseless => None,
        },
        noiseless: matches!(plan.snr, ChannelSnr::Noiseless),
        aux_snr_db: plan.aux_snr_db,
        n_bin: plan.quantizer.n_bin(),
        delta_l: plan.quantizer.delta_l(),
        y_quant_levels: plan.y_quant_levels,
        metric: match plan.metric {
            DemapMetric::Sum => "sum".into(),
            DemapMetric::MaxLog => "maxlog".into(),
        },
        n_lvalues: report.sample_count,
        seed: plan.seed,
        gmi_bpcu: report.gmi_bpcu,
        ngmi: report.ngmi,
        s_opt: report.s_opt,
        asi: report.asi,
        ber_pre: report.ber_pre,
        q_ber_db: report.q_ber_db,
        asi_hat: est.asi_hat,
        q_hat_db: est.q_hat_db,
        mu_hat: est.mu_hat,
        sigma_hat: est.sigma_hat,
        rho: est.rho,
        fit_residual: est.fit_residual,
        asi_err: est.asi_hat - report.asi,
        q_err_db: match (est.q_hat_db, report.q_ber_db) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        },
    }
}

/// Resolves the auxiliary SNR for a config: explicit value, ASI target, or
/// FEC-threshold preset, in that order.
///
/// Calibration always runs on a 256-bin reference quantizer at the configured
/// `l_max`, cached by the caller per (format, target).
pub fn resolve_aux_snr(cfg: &SweepConfig, c: &Constellation) -> Result<f64> {
    if let Some(db) = cfg.aux_snr_db {
        return Ok(db);
    }
    let target = match (cfg.aux_asi_target, &cfg.fec_threshold) {
        (Some(t), _) => t,
        (None, Some(name)) => ft_preset(name)?,
        (None, None) => {
            return Err(Error::Config(
                "no auxiliary channel given: set aux_snr_db, aux_asi_target, or fec_threshold"
                    .into(),
            ));
        }
    };
    let reference = LQuantizer::with_l_max(256, cfg.l_max)?;
    let opts = CalibrationOptions {
        y_quant_levels: cfg.y_quant_levels,
        metric: cfg.metric,
        ..CalibrationOptions::default()
    };
    calibrate_aux_snr(c, target, &reference, &opts)
}

/// Runs the full sweep: every (n_bin, snr) pair becomes one row, simulated
/// with an independent per-point seed. Points run in parallel; the row order
/// and contents are identical to a serial run.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<PointRow>> {
    if cfg.snr_db.is_empty() && !cfg.noiseless {
        return Err(Error::Config("snr_db grid is empty".into()));
    }
    if cfg.n_bin.is_empty() {
        return Err(Error::Config("n_bin list is empty".into()));
    }
    if cfg.n_lvalues < 10_000 {
        return Err(Error::Config(format!(
            "n_lvalues {} too small; need at least 10000",
            cfg.n_lvalues
        )));
    }
    let c = build_constellation(&cfg.format, cfg.entropy_bpcu)?;
    let aux_snr_db = resolve_aux_snr(cfg, &c)?;
    let config_hash = cfg.hash();

    let snrs: Vec<ChannelSnr> = if cfg.noiseless {
        vec![ChannelSnr::Noiseless; cfg.snr_db.len().max(1)]
    } else {
        cfg.snr_db.iter().map(|&v| ChannelSnr::Db(v)).collect()
    };
    let mut plans = Vec::new();
    for &n_bin in &cfg.n_bin {
        let quantizer = cfg.quantizer_for(n_bin)?;
        for &snr in &snrs {
            plans.push((quantizer.clone(), snr));
        }
    }
    let rows: Result<Vec<PointRow>> = plans
        .into_par_iter()
        .enumerate()
        .map(|(idx, (quantizer, snr))| {
            let plan = PointPlan {
                constellation: &c,
                format: cfg.format.clone(),
                quantizer,
                snr,
                aux_snr_db,
                y_quant_levels: cfg.y_quant_levels,
                metric: cfg.metric,
                n_lvalues: cfg.n_lvalues,
                seed: point_seed(cfg.seed, idx as u64),
                compute_gmi: cfg.compute_gmi,
                estimator: cfg.estimator_config(),
            };
            let (report, est, _) = run_point(&plan)?;
            Ok(row_from(&plan, idx, &report, &est, &config_hash))
        })
        .collect();
    let mut rows = rows?;
    rows.sort_by_key(|r| r.point_index);
    Ok(rows)
}

/// Serializes rows as CSV with a fixed, versioned column set.
pub fn rows_to_csv(rows: &[PointRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Usage(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Usage(format!("csv not utf-8: {e}")))
}

pub fn write_rows_csv(rows: &[PointRow], path: &Path) -> Result<()> {
    let text = rows_to_csv(rows)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_rows_json(rows: &[PointRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), rows)?;
    Ok(())
}
