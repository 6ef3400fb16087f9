//! Bitwise soft demapping to quantized L-values.
//!
//! The demapper assumes a circular Gaussian auxiliary channel at a fixed SNR
//! (which may differ from the true channel SNR), quantizes the received
//! symbols to a uniform per-dimension grid, computes per-tributary L-values,
//! and quantizes them onto the discrete mid-rise set used by the soft FEC
//! decoder and the histogram monitor.

use crate::constellation::{label_bit, Constellation};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Uniform mid-rise L-value quantizer.
///
/// The level set is `{-l_max, -l_max + delta_l, ..., l_max}` with
/// `l_max = (n_bin - 1) * delta_l / 2`. `n_bin` must be even, which places the
/// levels symmetrically about zero with no zero level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LQuantizer {
    n_bin: usize,
    delta_l: f64,
}

impl LQuantizer {
    pub fn new(n_bin: usize, delta_l: f64) -> Result<Self> {
        if n_bin < 2 || !n_bin.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_bin must be even and >= 2, got {n_bin}"
            )));
        }
        if !delta_l.is_finite() || delta_l <= 0.0 {
            return Err(Error::Config(format!("delta_l must be positive, got {delta_l}")));
        }
        Ok(Self { n_bin, delta_l })
    }

    /// Quantizer with a given saturation level; `delta_l = 2*l_max/(n_bin-1)`.
    pub fn with_l_max(n_bin: usize, l_max: f64) -> Result<Self> {
        if !l_max.is_finite() || l_max <= 0.0 {
            return Err(Error::Config(format!("l_max must be positive, got {l_max}")));
        }
        if n_bin < 2 {
            return Err(Error::Config(format!("n_bin must be >= 2, got {n_bin}")));
        }
        Self::new(n_bin, 2.0 * l_max / (n_bin - 1) as f64)
    }

    pub fn n_bin(&self) -> usize {
        self.n_bin
    }

    pub fn delta_l(&self) -> f64 {
        self.delta_l
    }

    pub fn l_max(&self) -> f64 {
        (self.n_bin - 1) as f64 * self.delta_l / 2.0
    }

    /// Level value at index `idx` (ascending, 0 = -l_max).
    pub fn level(&self, idx: usize) -> f64 {
        (idx as f64 - (self.n_bin - 1) as f64 / 2.0) * self.delta_l
    }

    /// All levels in ascending order.
    pub fn levels(&self) -> Vec<f64> {
        (0..self.n_bin).map(|i| self.level(i)).collect()
    }

    /// Positive half of the level set, ascending (`delta_l/2, 3*delta_l/2, ...`).
    pub fn positive_levels(&self) -> Vec<f64> {
        (0..self.n_bin / 2)
            .map(|j| (j as f64 + 0.5) * self.delta_l)
            .collect()
    }

    /// Index of the nearest level; saturates at the ends, ties round toward
    /// +infinity.
    pub fn index_of(&self, l: f64) -> usize {
        let half = (self.n_bin - 1) as f64 / 2.0;
        let idx = (l / self.delta_l + half + 0.5).floor();
        if idx < 0.0 {
            0
        } else if idx >= self.n_bin as f64 {
            self.n_bin - 1
        } else {
            idx as usize
        }
    }

    /// Quantizes to the nearest element of the level set.
    pub fn quantize(&self, l: f64) -> f64 {
        self.level(self.index_of(l))
    }

    /// Index into the positive half for a value already in the level set.
    pub fn abs_index(&self, l: f64) -> usize {
        let idx = self.index_of(l);
        let half = self.n_bin / 2;
        if idx >= half {
            idx - half
        } else {
            half - 1 - idx
        }
    }
}

/// Demapper arithmetic: exact log-sum over the label groups, or the max-log
/// approximation common in deployed DSP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemapMetric {
    Sum,
    #[default]
    MaxLog,
}

impl std::str::FromStr for DemapMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" | "log-map" | "logmap" => Ok(DemapMetric::Sum),
            "maxlog" | "max-log" => Ok(DemapMetric::MaxLog),
            other => Err(Error::Config(format!("unknown demap metric '{other}'"))),
        }
    }
}

/// Demapper configuration.
#[derive(Debug, Clone)]
pub struct DemapperConfig {
    /// Auxiliary-channel SNR in dB (Es/N0 per complex symbol).
    pub aux_snr_db: f64,
    /// Input quantization levels per dimension (64..=1024).
    pub y_quant_levels: usize,
    pub quantizer: LQuantizer,
    pub metric: DemapMetric,
}

impl DemapperConfig {
    pub fn new(aux_snr_db: f64, y_quant_levels: usize, quantizer: LQuantizer) -> Result<Self> {
        if !(64..=1024).contains(&y_quant_levels) {
            return Err(Error::Config(format!(
                "y_quant_levels must be in 64..=1024, got {y_quant_levels}"
            )));
        }
        Ok(Self {
            aux_snr_db,
            y_quant_levels,
            quantizer,
            metric: DemapMetric::default(),
        })
    }

    pub fn with_metric(mut self, metric: DemapMetric) -> Self {
        self.metric = metric;
        self
    }

    fn aux_n0(&self) -> f64 {
        10f64.powf(-self.aux_snr_db / 10.0)
    }
}

/// L-values for a block of symbols, row-major `n_sym x m`, all in the
/// quantizer level set.
#[derive(Debug, Clone)]
pub struct LMatrix {
    values: Vec<f64>,
    m: usize,
}

impl LMatrix {
    pub fn new(values: Vec<f64>, m: usize) -> Result<Self> {
        if m == 0 || !values.len().is_multiple_of(m) {
            return Err(Error::Usage(format!(
                "value count {} is not a multiple of m={m}",
                values.len()
            )));
        }
        Ok(Self { values, m })
    }

    pub fn n_sym(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    /// Hard decisions from the L-value signs: `L >= 0` decides bit 0.
    pub fn hard_decisions(&self) -> Vec<u8> {
        self.values.iter().map(|&l| if l >= 0.0 { 0 } else { 1 }).collect()
    }
}

/// Receive-side quantization grid for one dimension.
///
/// The grid spans the outermost constellation coordinate plus four standard
/// deviations of the auxiliary-channel noise, so that clipping of noisy
/// samples is negligible at and above the threshold operating region.
#[derive(Debug, Clone)]
pub struct YGrid {
    min: f64,
    step: f64,
    n: usize,
}

impl YGrid {
    pub fn for_constellation(c: &Constellation, cfg: &DemapperConfig) -> Self {
        let max_coord = c
            .points()
            .iter()
            .flat_map(|p| [p.re.abs(), p.im.abs()])
            .fold(0.0, f64::max);
        let sigma_dim = (cfg.aux_n0() / 2.0).sqrt();
        let r = max_coord + 4.0 * sigma_dim;
        let n = cfg.y_quant_levels;
        YGrid {
            min: -r,
            step: 2.0 * r / (n - 1) as f64,
            n,
        }
    }

    pub fn index_of(&self, y: f64) -> usize {
        let idx = ((y - self.min) / self.step).round();
        if idx < 0.0 {
            0
        } else if idx >= self.n as f64 {
            self.n - 1
        } else {
            idx as usize
        }
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.min + idx as f64 * self.step
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Unquantized per-tributary L-values for a received symbol, computed from the
/// full two-dimensional sum over the constellation.
///
/// This is the reference path; the table-driven path used by [`demap`] must
/// agree with it on product-form constellations.
pub fn llr_exact(
    y: Complex64,
    c: &Constellation,
    aux_snr_db: f64,
    metric: DemapMetric,
) -> Vec<f64> {
    let n0 = 10f64.powf(-aux_snr_db / 10.0);
    let m = c.bits_per_symbol();
    let terms: Vec<f64> = c
        .points()
        .iter()
        .zip(c.prior().pmf())
        .map(|(x, p)| p.ln() - (y - x).norm_sqr() / n0)
        .collect();
    (0..m)
        .map(|i| {
            let group = |b: u8| {
                let it = terms
                    .iter()
                    .zip(c.labels())
                    .filter(move |(_, &lab)| label_bit(lab, i, m) == b)
                    .map(|(&t, _)| t);
                match metric {
                    DemapMetric::MaxLog => it.fold(f64::NEG_INFINITY, f64::max),
                    DemapMetric::Sum => log_sum_exp(it),
                }
            };
            group(0) - group(1)
        })
        .collect()
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(it: I) -> f64 {
    let mx = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + it.map(|t| (t - mx).exp()).sum::<f64>().ln()
}

/// Per-dimension L-value lookup table over the receive grid.
pub struct DimTable {
    pub grid: YGrid,
    /// `grid.len() x bits` unquantized L-values, row-major.
    pub llr: Vec<f64>,
    pub bits: usize,
}

/// Builds the per-dimension table for a product-form constellation.
pub fn build_dim_table(c: &Constellation, cfg: &DemapperConfig) -> Option<DimTable> {
    let dim = c.dimension()?;
    let grid = YGrid::for_constellation(c, cfg);
    let n0 = cfg.aux_n0();
    let k = dim.bits;
    let lnp: Vec<f64> = dim.pmf.iter().map(|p| p.ln()).collect();
    let mut llr = vec![0.0; grid.len() * k];
    for g in 0..grid.len() {
        let yv = grid.value(g);
        let terms: Vec<f64> = dim
            .levels
            .iter()
            .zip(&lnp)
            .map(|(&a, &lp)| lp - (yv - a) * (yv - a) / n0)
            .collect();
        for t in 0..k {
            let group = |b: u32| {
                let it = terms
                    .iter()
                    .enumerate()
                    .filter(move |(li, _)| (dim.labels[*li] >> (k - 1 - t)) & 1 == b)
                    .map(|(_, &v)| v);
                match cfg.metric {
                    DemapMetric::MaxLog => it.fold(f64::NEG_INFINITY, f64::max),
                    DemapMetric::Sum => log_sum_exp_vec(it),
                }
            };
            llr[g * k + t] = group(0) - group(1);
        }
    }
    Some(DimTable { grid, llr, bits: k })
}

fn log_sum_exp_vec<I: Iterator<Item = f64>>(it: I) -> f64 {
    let vals: Vec<f64> = it.collect();
    let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + vals.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
}

/// Demaps received symbols to quantized L-values.
///
/// The label convention puts the first `m/2` tributaries on the in-phase
/// dimension and the rest on the quadrature dimension, sign bit first.
pub fn demap(y: &[Complex64], c: &Constellation, cfg: &DemapperConfig) -> Result<LMatrix> {
    let m = c.bits_per_symbol();
    let q = &cfg.quantizer;
    let mut values = Vec::with_capacity(y.len() * m);
    if let Some(tab) = build_dim_table(c, cfg) {
        let k = tab.bits;
        for &yy in y {
            let gi = tab.grid.index_of(yy.re);
            let gq = tab.grid.index_of(yy.im);
            for t in 0..k {
                values.push(q.quantize(tab.llr[gi * k + t]));
            }
            for t in 0..k {
                values.push(q.quantize(tab.llr[gq * k + t]));
            }
        }
    } else {
        // Generic fallback: quantize y on the same grid, then the full 2-D sum.
        let grid = YGrid::for_constellation(c, cfg);
        for &yy in y {
            let yq = Complex64::new(
                grid.value(grid.index_of(yy.re)),
                grid.value(grid.index_of(yy.im)),
            );
            for l in llr_exact(yq, c, cfg.aux_snr_db, cfg.metric) {
                values.push(q.quantize(l));
            }
        }
    }
    LMatrix::new(values, m)
}

/// Symmetrized a-posteriori L-values: per-sample sign flip by the transmitted
/// bit, pooled across all tributaries.
pub fn symmetrize(l: &LMatrix, labels: &[u32]) -> Result<Vec<f64>> {
    if labels.len() != l.n_sym() {
        return Err(Error::Usage(format!(
            "label count {} does not match symbol count {}",
            labels.len(),
            l.n_sym()
        )));
    }
    let m = l.m();
    let mut out = Vec::with_capacity(l.values().len());
    for (row, &lab) in labels.iter().enumerate() {
        for (i, &lv) in l.row(row).iter().enumerate() {
            let b = label_bit(lab, i, m);
            out.push(if b == 0 { lv } else { -lv });
        }
    }
    Ok(out)
}

/// Flattens per-symbol labels into a bit sequence matching the L-value layout.
pub fn bits_flat(labels: &[u32], m: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(labels.len() * m);
    for &lab in labels {
        for i in 0..m {
            out.push(label_bit(lab, i, m));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{transmit, ChannelConfig, ChannelSnr};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn quantizer256() -> LQuantizer {
        LQuantizer::with_l_max(256, 13.0).unwrap()
    }

    #[test]
    fn quantizer_levels_midrise() {
        let q = LQuantizer::new(4, 1.0).unwrap();
        assert_eq!(q.levels(), vec![-1.5, -0.5, 0.5, 1.5]);
        assert!((q.l_max() - 1.5).abs() < 1e-15);
        assert!(LQuantizer::new(5, 1.0).is_err(), "odd n_bin rejected");
    }

    #[test]
    fn quantize_tie_saturation_nearest() {
        let q = LQuantizer::new(4, 1.0).unwrap();
        // Mid-rise boundary at zero: tie breaks toward +.
        assert_eq!(q.quantize(0.0), 0.5);
        // Saturation.
        assert_eq!(q.quantize(1e6), 1.5);
        assert_eq!(q.quantize(-1e6), -1.5);
        // Nearest level.
        let q2 = LQuantizer::new(2, 1.0).unwrap();
        assert_eq!(q2.quantize(0.3), 0.5);
    }

    #[test]
    fn abs_index_maps_both_signs() {
        let q = LQuantizer::new(8, 0.5).unwrap();
        for j in 0..4 {
            let l = (j as f64 + 0.5) * 0.5;
            assert_eq!(q.abs_index(l), j);
            assert_eq!(q.abs_index(-l), j);
        }
    }

    #[test]
    fn qpsk_llr_matches_closed_form() {
        // Antipodal per-dimension signaling: L = 4*a*y/N0 with a = 1/sqrt(2).
        let c = Constellation::uniform_qam(2).unwrap();
        let aux_snr_db = 7.0;
        let n0 = 10f64.powf(-aux_snr_db / 10.0);
        let a = 1.0 / 2f64.sqrt();
        for &(yr, yi) in &[(0.3, -0.8), (-1.1, 0.05), (0.0, 1.4)] {
            let y = Complex64::new(yr, yi);
            let l = llr_exact(y, &c, aux_snr_db, DemapMetric::Sum);
            // Sign-bit labels put 1 on the positive level, so bit 0 favors
            // negative y: L = -4*a*y/N0.
            let expect_i = -4.0 * a * yr / n0;
            let expect_q = -4.0 * a * yi / n0;
            assert!((l[0] - expect_i).abs() < 1e-10 * expect_i.abs().max(1.0));
            assert!((l[1] - expect_q).abs() < 1e-10 * expect_q.abs().max(1.0));
            // QPSK has one point per label group, so max-log is identical.
            let lm = llr_exact(y, &c, aux_snr_db, DemapMetric::MaxLog);
            assert!((l[0] - lm[0]).abs() < 1e-12 && (l[1] - lm[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn table_path_matches_exact_path() {
        let c = Constellation::ps_qam(6, 4.1).unwrap();
        let cfg = DemapperConfig::new(9.0, 256, quantizer256()).unwrap();
        let tab = build_dim_table(&c, &cfg).unwrap();
        let k = tab.bits;
        for g in (0..tab.grid.len()).step_by(37) {
            let yv = tab.grid.value(g);
            let y = Complex64::new(yv, tab.grid.value(0));
            let exact = llr_exact(y, &c, cfg.aux_snr_db, cfg.metric);
            for (t, &reference) in exact.iter().enumerate().take(k) {
                let rel = tab.llr[g * k + t].abs().max(1.0);
                assert!(
                    (tab.llr[g * k + t] - reference).abs() < 1e-9 * rel,
                    "g={g} t={t}: table {} vs exact {reference}",
                    tab.llr[g * k + t]
                );
            }
        }
    }

    #[test]
    fn noiseless_matched_high_snr_saturates_with_label_signs() {
        let c = Constellation::uniform_qam(4).unwrap();
        let cfg = DemapperConfig::new(30.0, 256, quantizer256()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let (x, labels) = c.sample_symbols(64, &mut rng);
        let l = demap(&x, &c, &cfg).unwrap();
        let lmax = cfg.quantizer.l_max();
        for (row, &lab) in labels.iter().enumerate() {
            for (i, &lv) in l.row(row).iter().enumerate() {
                let expect = if label_bit(lab, i, 4) == 0 { lmax } else { -lmax };
                assert_eq!(lv, expect, "row {row} trib {i}");
            }
        }
    }

    #[test]
    fn symmetrize_sign_rules() {
        let l = LMatrix::new(vec![1.5, -0.5, 2.5, 0.5], 2).unwrap();
        // Labels 00 and 11 (m = 2).
        let la = symmetrize(&l, &[0b00, 0b11]).unwrap();
        assert_eq!(la, vec![1.5, -0.5, -2.5, -0.5]);
        // Flipping a single bit flips exactly that sample.
        let la2 = symmetrize(&l, &[0b10, 0b11]).unwrap();
        assert_eq!(la2[0], -1.5);
        assert_eq!(la2[1..], la[1..]);
        assert!(symmetrize(&l, &[0]).is_err(), "shape mismatch");
    }

    #[test]
    fn label_symmetry_y_and_negated_y() {
        // For uniform square QAM with Gray labels, histograms of symmetrized
        // L-values from y and -y agree within sampling noise.
        let c = Constellation::uniform_qam(4).unwrap();
        let q = LQuantizer::with_l_max(32, 13.0).unwrap();
        let cfg = DemapperConfig::new(10.0, 256, q.clone()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let (x, labels) = c.sample_symbols(20_000, &mut rng);
        let ch = ChannelConfig { snr: ChannelSnr::Db(10.0) };
        let y = transmit(&x, &ch, &mut rng);
        let neg: Vec<Complex64> = y.iter().map(|v| -v).collect();
        let neg_labels: Vec<u32> = labels.iter().map(|&l| l ^ 0b1010).collect(); // flip both sign bits
        let la1 = symmetrize(&demap(&y, &c, &cfg).unwrap(), &labels).unwrap();
        let la2 = symmetrize(&demap(&neg, &c, &cfg).unwrap(), &neg_labels).unwrap();
        let n = la1.len() as f64;
        let mut h1 = vec![0f64; 32];
        let mut h2 = vec![0f64; 32];
        for &v in &la1 {
            h1[q.index_of(v)] += 1.0 / n;
        }
        for &v in &la2 {
            h2[q.index_of(v)] += 1.0 / n;
        }
        for (a, b) in h1.iter().zip(&h2) {
            assert!((a - b).abs() < 6.0 / n.sqrt(), "{a} vs {b}");
        }
    }

    #[test]
    fn overload_mass_nonincreasing_in_l_max() {
        let c = Constellation::ps_qam(6, 4.1).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (x, _) = c.sample_symbols(30_000, &mut rng);
        let ch = ChannelConfig { snr: ChannelSnr::Db(10.0) };
        let y = transmit(&x, &ch, &mut rng);
        let dl = 0.25;
        let mut last = f64::INFINITY;
        for n_bin in [32usize, 64, 128] {
            let q = LQuantizer::new(n_bin, dl).unwrap();
            let cfg = DemapperConfig::new(9.5, 256, q.clone()).unwrap();
            let l = demap(&y, &c, &cfg).unwrap();
            let lmax = q.l_max();
            let rho = l.values().iter().filter(|&&v| v.abs() >= lmax - 1e-12).count() as f64
                / l.values().len() as f64;
            assert!(rho <= last + 1e-12, "rho must not grow as l_max grows");
            last = rho;
        }
    }

    #[test]
    fn soft_error_probability_tracks_ber_when_matched() {
        // With matched SNR and fine quantization, the posterior probability of
        // the hard decision being wrong, 1/(1+e^{|L|}), averages to the bit
        // error probability.
        let c = Constellation::uniform_qam(4).unwrap();
        let q = LQuantizer::with_l_max(256, 20.0).unwrap();
        for &snr in &[8.0f64, 10.0, 12.0] {
            let cfg = DemapperConfig::new(snr, 1024, q.clone())
                .unwrap()
                .with_metric(DemapMetric::Sum);
            let mut rng = ChaCha12Rng::seed_from_u64(31);
            let n_sym = 200_000;
            let (x, labels) = c.sample_symbols(n_sym, &mut rng);
            let ch = ChannelConfig { snr: ChannelSnr::Db(snr) };
            let y = transmit(&x, &ch, &mut rng);
            let l = demap(&y, &c, &cfg).unwrap();
            let la = symmetrize(&l, &labels).unwrap();
            let soft: f64 =
                la.iter().map(|&v| 1.0 / (1.0 + v.abs().exp())).sum::<f64>() / la.len() as f64;
            let hard = la.iter().filter(|&&v| v < 0.0).count() as f64 / la.len() as f64;
            let sigma = (hard * (1.0 - hard) / la.len() as f64).sqrt();
            assert!(
                (soft - hard).abs() < 3.0 * sigma + 2e-4,
                "snr={snr}: soft {soft} vs hard {hard}"
            );
        }
    }
}
