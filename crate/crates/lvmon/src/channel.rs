//! Complex additive white Gaussian noise channel and the FEC-threshold SNR
//! calibration used to pin the demapper's auxiliary channel.

use crate::constellation::Constellation;
use crate::demapper::{demap, symmetrize, DemapMetric, DemapperConfig, LQuantizer};
use crate::metrics::asi;
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Channel SNR specification: Es/N0 per complex symbol, or a noiseless pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSnr {
    Db(f64),
    Noiseless,
}

impl ChannelSnr {
    /// Total complex noise variance (zero when noiseless).
    pub fn n0(&self) -> f64 {
        match self {
            ChannelSnr::Db(snr_db) => 10f64.powf(-snr_db / 10.0),
            ChannelSnr::Noiseless => 0.0,
        }
    }
}

/// Channel configuration. Signal average energy is assumed to be one, so the
/// per-dimension noise variance is `10^(-snr_db/10) / 2`.
#[derive(Debug, Clone)]
pub struct ChannelConfig {
    pub snr: ChannelSnr,
}

/// Adds circularly symmetric complex Gaussian noise to a symbol sequence.
pub fn transmit<R: Rng>(x: &[Complex64], cfg: &ChannelConfig, rng: &mut R) -> Vec<Complex64> {
    match cfg.snr {
        ChannelSnr::Noiseless => x.to_vec(),
        ChannelSnr::Db(_) => {
            let sigma = (cfg.snr.n0() / 2.0).sqrt();
            x.iter()
                .map(|&v| {
                    let wr: f64 = rng.sample(StandardNormal);
                    let wi: f64 = rng.sample(StandardNormal);
                    v + Complex64::new(sigma * wr, sigma * wi)
                })
                .collect()
        }
    }
}

/// Options for the auxiliary-SNR calibration.
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// L-value samples per bisection probe.
    pub n_lvalues: usize,
    /// Fixed probe seed; reusing the same noise across probes keeps the
    /// Monte-Carlo ASI monotone in SNR so bisection converges cleanly.
    pub seed: u64,
    /// ASI tolerance at the returned SNR.
    pub tolerance: f64,
    /// SNR search bracket in dB.
    pub bracket: (f64, f64),
    pub y_quant_levels: usize,
    pub metric: DemapMetric,
    pub max_iter: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            n_lvalues: 1_000_000,
            seed: 0x5EED_CA11,
            tolerance: 0.002,
            bracket: (-5.0, 25.0),
            y_quant_levels: 1024,
            metric: DemapMetric::default(),
            max_iter: 60,
        }
    }
}

/// Matched-decoding ASI at one probe SNR.
fn matched_asi(
    c: &Constellation,
    snr_db: f64,
    quantizer: &LQuantizer,
    opts: &CalibrationOptions,
) -> Result<f64> {
    let n_sym = opts.n_lvalues.div_ceil(c.bits_per_symbol());
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let (x, labels) = c.sample_symbols(n_sym, &mut rng);
    let ch = ChannelConfig { snr: ChannelSnr::Db(snr_db) };
    let y = transmit(&x, &ch, &mut rng);
    let cfg = DemapperConfig::new(snr_db, opts.y_quant_levels, quantizer.clone())?
        .with_metric(opts.metric);
    let l = demap(&y, c, &cfg)?;
    let la = symmetrize(&l, &labels)?;
    asi(&la, quantizer)
}

/// Finds the SNR at which the matched-decoding ASI of `c` equals
/// `target_asi`, by bisection with Monte-Carlo ASI evaluation.
///
/// This maps a FEC-threshold ASI (e.g. the presets 0.93 / 0.86 / 0.78) to the
/// auxiliary-channel SNR a deployed demapper would be pinned to.
pub fn calibrate_aux_snr(
    c: &Constellation,
    target_asi: f64,
    quantizer: &LQuantizer,
    opts: &CalibrationOptions,
) -> Result<f64> {
    if !(target_asi > 0.0 && target_asi < 1.0) {
        return Err(Error::Config(format!(
            "target ASI {target_asi} must lie strictly inside (0, 1)"
        )));
    }
    let (mut lo, mut hi) = opts.bracket;
    let asi_lo = matched_asi(c, lo, quantizer, opts)?;
    let asi_hi = matched_asi(c, hi, quantizer, opts)?;
    if asi_lo > target_asi || asi_hi < target_asi {
        return Err(Error::Config(format!(
            "target ASI {target_asi} not bracketed: ASI({lo} dB) = {asi_lo:.4}, ASI({hi} dB) = {asi_hi:.4}"
        )));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..opts.max_iter {
        mid = 0.5 * (lo + hi);
        let a = matched_asi(c, mid, quantizer, opts)?;
        if (a - target_asi).abs() <= opts.tolerance {
            return Ok(mid);
        }
        if a < target_asi {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    let a = matched_asi(c, mid, quantizer, opts)?;
    if (a - target_asi).abs() <= opts.tolerance {
        Ok(mid)
    } else {
        Err(Error::Numeric(format!(
            "calibration did not reach ASI {target_asi} within {} (got {a:.4} at {mid:.3} dB)",
            opts.tolerance
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_is_identity() {
        let x = vec![Complex64::new(0.3, -0.4), Complex64::new(-1.0, 0.2)];
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let y = transmit(&x, &ChannelConfig { snr: ChannelSnr::Noiseless }, &mut rng);
        assert_eq!(x, y);
    }

    #[test]
    fn noise_variance_matches_snr() {
        let n = 1_000_000usize;
        let x = vec![Complex64::new(0.0, 0.0); n];
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let y = transmit(&x, &ChannelConfig { snr: ChannelSnr::Db(10.0) }, &mut rng);
        let var: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        assert!((var - 0.1).abs() / 0.1 < 0.01, "empirical N0 = {var}");
    }

    #[test]
    fn noise_is_reproducible_and_length_preserving() {
        let x = vec![Complex64::new(1.0, 1.0); 1000];
        let cfg = ChannelConfig { snr: ChannelSnr::Db(5.0) };
        let mut a = ChaCha12Rng::seed_from_u64(9);
        let mut b = ChaCha12Rng::seed_from_u64(9);
        let ya = transmit(&x, &cfg, &mut a);
        let yb = transmit(&x, &cfg, &mut b);
        assert_eq!(ya.len(), x.len());
        assert_eq!(ya, yb);
    }

    #[test]
    fn noise_is_white() {
        let n = 200_000usize;
        let x = vec![Complex64::new(0.0, 0.0); n];
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n0 = 0.25f64;
        let y = transmit(
            &x,
            &ChannelConfig { snr: ChannelSnr::Db(-10.0 * n0.log10()) },
            &mut rng,
        );
        for lag in 1..=3 {
            let corr: Complex64 =
                y[..n - lag].iter().zip(&y[lag..]).map(|(a, b)| a * b.conj()).sum::<Complex64>()
                    / (n - lag) as f64;
            let bound = 5.0 * n0 / (n as f64).sqrt();
            assert!(corr.norm() < bound, "lag {lag}: {} vs {bound}", corr.norm());
        }
    }

    #[test]
    fn calibration_rejects_boundary_targets() {
        let c = Constellation::uniform_qam(2).unwrap();
        let q = LQuantizer::with_l_max(256, 13.0).unwrap();
        let opts = CalibrationOptions::default();
        assert!(calibrate_aux_snr(&c, 1.0, &q, &opts).is_err());
        assert!(calibrate_aux_snr(&c, 0.0, &q, &opts).is_err());
    }

    #[test]
    fn calibration_is_self_consistent_and_monotone() {
        let c = Constellation::uniform_qam(2).unwrap();
        let q = LQuantizer::with_l_max(256, 13.0).unwrap();
        let opts = CalibrationOptions {
            n_lvalues: 250_000,
            tolerance: 0.003,
            ..Default::default()
        };
        let mut last = f64::NEG_INFINITY;
        for target in [0.70, 0.78, 0.86, 0.90, 0.93] {
            let snr = calibrate_aux_snr(&c, target, &q, &opts).unwrap();
            assert!(snr > last, "calibrated SNR must grow with the target");
            last = snr;
            let a = matched_asi(&c, snr, &q, &opts).unwrap();
            assert!((a - target).abs() <= opts.tolerance);
        }
    }
}
