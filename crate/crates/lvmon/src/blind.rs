//! Blind ASI and Q-factor estimation from |L|-value histograms.
//!
//! The estimator sees only the histogram of L-value magnitudes captured ahead
//! of the soft FEC decoder, with no knowledge of the transmitted bits. It
//! assumes the signed L-value distribution is approximately Gaussian (at least
//! in the left tail that drives the metric), discretizes a bank of Gaussian
//! candidates onto the quantizer's level set with the observed overload mass
//! pinned at the saturation bin, picks the candidate whose folded pmf is
//! closest to the measured histogram in least squares, and reads the ASI and
//! Q-factor off the winning candidate.

use crate::demapper::{LMatrix, LQuantizer};
use crate::math::{erfc, erfc_inv, normal_cdf};
use crate::metrics::asi_from_signed_pmf;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Histogram of |L| values over the positive half of the quantizer level set.
#[derive(Debug, Clone)]
pub struct LHistogram {
    quantizer: LQuantizer,
    counts: Vec<u64>,
    total: u64,
}

impl LHistogram {
    /// Wraps raw counts ordered ascending in |l|; length must be `n_bin/2`.
    pub fn from_counts(quantizer: LQuantizer, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != quantizer.n_bin() / 2 {
            return Err(Error::Usage(format!(
                "expected {} magnitude bins, got {}",
                quantizer.n_bin() / 2,
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Usage("histogram has no samples".into()));
        }
        Ok(Self { quantizer, counts, total })
    }

    pub fn quantizer(&self) -> &LQuantizer {
        &self.quantizer
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Overload mass: fraction of samples saturated at l_max.
    pub fn rho(&self) -> f64 {
        *self.counts.last().unwrap() as f64 / self.total as f64
    }

    /// Relative frequencies over the positive level set.
    pub fn abs_pmf(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }
}

/// Pools |L| over all tributaries and samples into a histogram.
pub fn build_histogram(l: &LMatrix, q: &LQuantizer) -> Result<LHistogram> {
    histogram_of(l.values().iter().copied(), q)
}

/// Histogram of a single tributary's |L| values.
pub fn build_histogram_for_tributary(
    l: &LMatrix,
    q: &LQuantizer,
    tributary: usize,
) -> Result<LHistogram> {
    if tributary >= l.m() {
        return Err(Error::Usage(format!(
            "tributary {tributary} out of range for m={}",
            l.m()
        )));
    }
    let m = l.m();
    histogram_of(
        l.values().iter().copied().skip(tributary).step_by(m),
        q,
    )
}

fn histogram_of(values: impl Iterator<Item = f64>, q: &LQuantizer) -> Result<LHistogram> {
    let mut counts = vec![0u64; q.n_bin() / 2];
    let mut total = 0u64;
    for v in values {
        counts[q.abs_index(v)] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Usage("cannot build a histogram from no L-values".into()));
    }
    Ok(LHistogram { quantizer: q.clone(), counts, total })
}

/// The (mu, sigma) search grid for the candidate bank.
///
/// `n_mu` means uniformly spaced over `(0, mu_max]` and `n_sigma` standard
/// deviations over `(0, sigma_max]`; the bank size is their product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub n_mu: usize,
    pub n_sigma: usize,
    pub mu_max: f64,
    pub sigma_max: f64,
}

impl CandidateGrid {
    /// Default 8192-candidate grid: 128 means over (0, 2*l_max] by 64 sigmas
    /// over (0, l_max], covering both sub-range and overload-heavy regimes.
    pub fn default_for(q: &LQuantizer) -> Self {
        Self {
            n_mu: 128,
            n_sigma: 64,
            mu_max: 2.0 * q.l_max(),
            sigma_max: q.l_max(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_mu * self.n_sigma
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn mu_step(&self) -> f64 {
        self.mu_max / self.n_mu as f64
    }

    fn sigma_step(&self) -> f64 {
        self.sigma_max / self.n_sigma as f64
    }
}

/// A Gaussian candidate discretized onto the level set, with the observed
/// overload mass pinned at +l_max.
#[derive(Debug, Clone)]
pub struct GaussianCandidate {
    pub mu: f64,
    pub sigma: f64,
    /// Pmf over the full signed level set, ascending.
    pub pmf: Vec<f64>,
    /// Folded pmf over the positive levels: `pmf(-l) + pmf(l)`.
    pub abs_pmf: Vec<f64>,
}

impl GaussianCandidate {
    /// Discretizes `exp(-(l-mu)^2 / (2 sigma^2))` by cell integrals of width
    /// `delta_l`; the -l_max cell integrates the entire left tail, the +l_max
    /// cell is replaced by the pinned overload mass `rho`, and the interior is
    /// renormalized to `1 - rho`.
    ///
    /// Returns `None` when the interior mass underflows to zero (candidates
    /// far outside the level set), which no histogram with interior mass can
    /// match anyway.
    pub fn discretize(q: &LQuantizer, mu: f64, sigma: f64, rho: f64) -> Option<Self> {
        debug_assert!(sigma > 0.0);
        let n = q.n_bin();
        let dl = q.delta_l();
        let mut raw = vec![0.0f64; n];
        for (i, slot) in raw.iter_mut().enumerate() {
            let level = q.level(i);
            let hi = normal_cdf((level + dl / 2.0 - mu) / sigma);
            let lo = if i == 0 {
                0.0
            } else {
                normal_cdf((level - dl / 2.0 - mu) / sigma)
            };
            *slot = (hi - lo).max(0.0);
        }
        let interior: f64 = raw[..n - 1].iter().sum();
        if interior <= f64::MIN_POSITIVE {
            return None;
        }
        let mut pmf = vec![0.0f64; n];
        for i in 0..n - 1 {
            pmf[i] = (1.0 - rho) * raw[i] / interior;
        }
        pmf[n - 1] = rho;
        let half = n / 2;
        let abs_pmf: Vec<f64> = (0..half).map(|j| pmf[half + j] + pmf[half - 1 - j]).collect();
        Some(Self { mu, sigma, pmf, abs_pmf })
    }
}

/// Builds the candidate bank for a histogram's observed overload mass.
pub fn candidate_bank(
    q: &LQuantizer,
    grid: &CandidateGrid,
    rho: f64,
) -> Result<Vec<GaussianCandidate>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Degenerate(format!(
            "overload mass {rho} leaves no interior probability to fit"
        )));
    }
    if grid.is_empty() {
        return Err(Error::Config("candidate grid is empty".into()));
    }
    let mu_step = grid.mu_step();
    let sigma_step = grid.sigma_step();
    let bank: Vec<GaussianCandidate> = (0..grid.len())
        .into_par_iter()
        .filter_map(|k| {
            let mu = mu_step * (k / grid.n_sigma + 1) as f64;
            let sigma = sigma_step * (k % grid.n_sigma + 1) as f64;
            GaussianCandidate::discretize(q, mu, sigma, rho)
        })
        .collect();
    if bank.is_empty() {
        return Err(Error::Degenerate("no usable candidates on the grid".into()));
    }
    Ok(bank)
}

/// Sum of squared differences between the measured and candidate folded pmfs.
pub fn residual(abs_pmf_measured: &[f64], cand: &GaussianCandidate) -> f64 {
    abs_pmf_measured
        .iter()
        .zip(&cand.abs_pmf)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Exhaustive least-squares search over the bank.
///
/// Returns the winning index and its residual; ties break to the smallest
/// index.
pub fn fit(hist: &LHistogram, bank: &[GaussianCandidate]) -> Result<(usize, f64)> {
    if bank.is_empty() {
        return Err(Error::Usage("candidate bank is empty".into()));
    }
    let meas = hist.abs_pmf();
    let residuals: Vec<f64> = bank.par_iter().map(|c| residual(&meas, c)).collect();
    let mut best = 0usize;
    for (k, &r) in residuals.iter().enumerate() {
        if r < residuals[best] {
            best = k;
        }
    }
    Ok((best, residuals[best]))
}

/// Local grid refinement around a coarse winner.
///
/// Re-searches exhaustively on a `span x span` grid centered on the current
/// best, shrinking the step each round; the center is always a grid point, so
/// an exactly-matching coarse candidate is never displaced.
fn refine(
    meas: &[f64],
    q: &LQuantizer,
    rho: f64,
    start: &GaussianCandidate,
    start_residual: f64,
    steps: (f64, f64),
    cfg: &EstimatorConfig,
) -> (GaussianCandidate, f64) {
    let (mut d_mu, mut d_sigma) = steps;
    let (rounds, span) = (cfg.refine_rounds, cfg.refine_span);
    let mut best = start.clone();
    let mut best_res = start_residual;
    let half_span = (span - 1) / 2;
    for _ in 0..rounds {
        let center_mu = best.mu;
        let center_sigma = best.sigma;
        for i in 0..span {
            let mu = center_mu + d_mu * (i as f64 / half_span as f64 - 1.0);
            if mu <= 0.0 {
                continue;
            }
            for j in 0..span {
                let sigma = center_sigma + d_sigma * (j as f64 / half_span as f64 - 1.0);
                if sigma <= 0.0 {
                    continue;
                }
                if let Some(c) = GaussianCandidate::discretize(q, mu, sigma, rho) {
                    let r = residual(meas, &c);
                    if r < best_res {
                        best_res = r;
                        best = c;
                    }
                }
            }
        }
        d_mu /= half_span as f64;
        d_sigma /= half_span as f64;
    }
    (best, best_res)
}

/// ASI of the fitted candidate's signed pmf.
///
/// With `use_measured_marginal`, the conditional-entropy weights come from the
/// measured |L| pmf instead of the candidate's own folded pmf; the per-bin
/// sign split still comes from the candidate.
pub fn blind_asi(hist: &LHistogram, cand: &GaussianCandidate, use_measured_marginal: bool) -> f64 {
    if !use_measured_marginal {
        return asi_from_signed_pmf(&cand.pmf);
    }
    let meas = hist.abs_pmf();
    let half = cand.pmf.len() / 2;
    let mut asi = 1.0;
    for (j, &w) in meas.iter().enumerate().take(half) {
        let fit_abs = cand.abs_pmf[j];
        if w > 0.0 && fit_abs > 0.0 {
            let q_neg = cand.pmf[half - 1 - j] / fit_abs;
            asi -= w * crate::math::binary_entropy(q_neg);
        }
    }
    asi
}

/// Q-factor estimate from the fitted Gaussian, in dB.
///
/// `BER_gauss = erfc(mu / (sqrt(2) sigma)) / 2` is the fitted distribution's
/// negative-side mass; the `(1 - rho)` factor discounts the quantizer-overload
/// peak before converting back through the Q-factor map. Pass `rho = 0.0` for
/// the uncorrected variant.
pub fn blind_q_db(cand: &GaussianCandidate, rho: f64) -> Result<f64> {
    if !cand.mu.is_finite() || cand.mu <= 0.0 {
        return Err(Error::OutOfDomain(format!(
            "fitted mean {} is not positive; Q estimate undefined",
            cand.mu
        )));
    }
    let ber_gauss = 0.5 * erfc(cand.mu / (2f64.sqrt() * cand.sigma));
    let arg = 2.0 * (1.0 - rho) * ber_gauss;
    if !(arg > 0.0 && arg < 1.0) {
        return Err(Error::OutOfDomain(format!(
            "erfc_inv argument {arg} outside (0, 1); Q estimate flagged"
        )));
    }
    let q_lin = 2f64.sqrt() * erfc_inv(arg);
    Ok(20.0 * q_lin.log10())
}

/// Blind estimate for one histogram.
#[derive(Debug, Clone, Serialize)]
pub struct BlindEstimate {
    pub asi_hat: f64,
    pub q_hat_db: Option<f64>,
    pub mu_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub rho: f64,
    pub fit_residual: f64,
}

/// Estimator knobs; the defaults reproduce the reference behavior.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// Candidate grid; `None` selects [`CandidateGrid::default_for`].
    pub grid: Option<CandidateGrid>,
    /// Local refinement after the exhaustive search.
    pub refine: bool,
    pub refine_rounds: usize,
    pub refine_span: usize,
    /// Weight the conditional entropy by the measured |L| pmf.
    pub use_measured_marginal: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            grid: None,
            refine: true,
            refine_rounds: 2,
            refine_span: 9,
            use_measured_marginal: false,
        }
    }
}

/// Runs the full blind estimation pipeline on a histogram.
///
/// A fully saturated histogram (all mass in the overload bin) short-circuits
/// to `asi_hat = 1` with no Q estimate, since every candidate collapses to the
/// same degenerate pmf there.
pub fn estimate(hist: &LHistogram, cfg: &EstimatorConfig) -> Result<BlindEstimate> {
    let rho = hist.rho();
    if rho >= 1.0 {
        return Ok(BlindEstimate {
            asi_hat: 1.0,
            q_hat_db: None,
            mu_hat: None,
            sigma_hat: None,
            rho,
            fit_residual: 0.0,
        });
    }
    let q = hist.quantizer();
    let grid = cfg
        .grid
        .clone()
        .unwrap_or_else(|| CandidateGrid::default_for(q));
    let bank = candidate_bank(q, &grid, rho)?;
    let (k_hat, coarse_res) = fit(hist, &bank)?;
    let (winner, fit_residual) = if cfg.refine {
        let meas = hist.abs_pmf();
        refine(
            &meas,
            q,
            rho,
            &bank[k_hat],
            coarse_res,
            (grid.mu_step(), grid.sigma_step()),
            cfg,
        )
    } else {
        (bank[k_hat].clone(), coarse_res)
    };
    let asi_hat = blind_asi(hist, &winner, cfg.use_measured_marginal);
    let q_hat_db = blind_q_db(&winner, rho).ok();
    Ok(BlindEstimate {
        asi_hat,
        q_hat_db,
        mu_hat: Some(winner.mu),
        sigma_hat: Some(winner.sigma),
        rho,
        fit_residual,
    })
}

/// Per-tributary estimates behind the same pipeline; pooled estimation is the
/// default elsewhere since per-tributary averaging brings no accuracy gain.
pub fn estimate_per_tributary(
    l: &LMatrix,
    q: &LQuantizer,
    cfg: &EstimatorConfig,
) -> Result<Vec<BlindEstimate>> {
    (0..l.m())
        .map(|t| estimate(&build_histogram_for_tributary(l, q, t)?, cfg))
        .collect()
}

/// On-disk histogram format: the export contract between the DSP capture
/// memory and this estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramFile {
    pub n_bin: usize,
    pub delta_l: f64,
    /// Counts over the positive levels, ascending in l.
    pub counts_abs: Vec<u64>,
    pub total: u64,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl HistogramFile {
    pub fn from_histogram(hist: &LHistogram, meta: serde_json::Value) -> Self {
        Self {
            n_bin: hist.quantizer().n_bin(),
            delta_l: hist.quantizer().delta_l(),
            counts_abs: hist.counts().to_vec(),
            total: hist.total(),
            meta,
        }
    }

    pub fn into_histogram(self) -> Result<LHistogram> {
        let q = LQuantizer::new(self.n_bin, self.delta_l)?;
        let hist = LHistogram::from_counts(q, self.counts_abs)?;
        if hist.total() != self.total {
            return Err(Error::Usage(format!(
                "histogram file total {} does not match counts sum {}",
                self.total,
                hist.total()
            )));
        }
        Ok(hist)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(
            std::fs::File::open(path)?,
        ))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}
