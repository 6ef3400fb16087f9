//! Ground-truth signal-quality metrics computed with knowledge of the
//! transmitted bits: GMI, NGMI, ASI, pre-FEC BER, and Q-factors.
//!
//! The GMI is evaluated in the L-value domain through the bitwise factorized
//! metric, so quantization and demapper mismatch affect it exactly as they
//! affect the live receiver path.

use crate::constellation::Constellation;
use crate::demapper::{LMatrix, LQuantizer};
use crate::math::{binary_entropy, erfc_inv, golden_section_max, softplus};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Q-factor in linear and dB (20*log10) form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QFactor {
    pub linear: f64,
    pub db: f64,
}

/// Converts a bit error rate to the SNR-like Q-factor
/// `Q = sqrt(2) * erfc_inv(2 * ber)`.
pub fn q_from_ber(ber: f64) -> Result<QFactor> {
    if !(ber > 0.0 && ber < 0.5) {
        return Err(Error::OutOfDomain(format!(
            "Q-factor undefined for BER {ber}; need 0 < BER < 0.5"
        )));
    }
    let linear = 2f64.sqrt() * erfc_inv(2.0 * ber);
    Ok(QFactor {
        linear,
        db: 20.0 * linear.log10(),
    })
}

/// Hamming-mismatch fraction between two equal-length bit sequences.
pub fn ber_pre(b: &[u8], b_hat: &[u8]) -> Result<f64> {
    if b.len() != b_hat.len() {
        return Err(Error::Usage(format!(
            "bit sequence lengths differ: {} vs {}",
            b.len(),
            b_hat.len()
        )));
    }
    if b.is_empty() {
        return Err(Error::Usage("empty bit sequences".into()));
    }
    let errors = b.iter().zip(b_hat).filter(|(x, y)| x != y).count();
    Ok(errors as f64 / b.len() as f64)
}

/// Post-FEC BER is the same counting operation applied to externally supplied
/// decoded/source bit pairs.
pub fn ber_post(d: &[u8], d_hat: &[u8]) -> Result<f64> {
    ber_pre(d, d_hat)
}

/// Statistical Q-factor `|mu0 - mu1| / (sigma0 + sigma1)` with the class
/// partition given by the true transmitted bits.
pub fn statistical_q(samples: &[f64], bits: &[u8]) -> Result<f64> {
    if samples.len() != bits.len() {
        return Err(Error::Usage("samples and bits lengths differ".into()));
    }
    let split: (Vec<f64>, Vec<f64>) = samples
        .iter()
        .zip(bits)
        .partition_map(|(&s, &b)| if b == 0 { Ok(s) } else { Err(s) });
    class_q(&split.0, &split.1)
}

/// Blind statistical Q-factor: samples are partitioned by their sign
/// (threshold at zero) instead of the unknown transmitted bits.
pub fn blind_statistical_q(samples: &[f64]) -> Result<f64> {
    let (c0, c1): (Vec<f64>, Vec<f64>) = samples.iter().partition(|&&s| s >= 0.0);
    class_q(&c0, &c1)
}

fn class_q(c0: &[f64], c1: &[f64]) -> Result<f64> {
    if c0.is_empty() || c1.is_empty() {
        return Err(Error::Degenerate(
            "statistical Q undefined: one decision class is empty".into(),
        ));
    }
    let stat = |v: &[f64]| {
        let n = v.len() as f64;
        let mu = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
        (mu, var.sqrt())
    };
    let (mu0, s0) = stat(c0);
    let (mu1, s1) = stat(c1);
    if s0 + s1 == 0.0 {
        return Err(Error::Degenerate(
            "statistical Q undefined: zero spread in both classes".into(),
        ));
    }
    Ok((mu0 - mu1).abs() / (s0 + s1))
}

// Small local stand-in for itertools::partition_map.
trait PartitionMap: Iterator {
    fn partition_map<A, B, F>(self, f: F) -> (Vec<A>, Vec<B>)
    where
        Self: Sized,
        F: Fn(Self::Item) -> std::result::Result<A, B>,
    {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for item in self {
            match f(item) {
                Ok(x) => a.push(x),
                Err(y) => b.push(y),
            }
        }
        (a, b)
    }
}
impl<I: Iterator> PartitionMap for I {}

/// Result of the GMI maximization over the metric scaling `s`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GmiEstimate {
    pub gmi_bpcu: f64,
    pub s_opt: f64,
    /// True when the maximizer landed at the search-bracket edge, which
    /// suggests a non-unimodal or saturated objective.
    pub bracket_edge: bool,
}

const S_BRACKET: (f64, f64) = (0.01, 5.0);
const S_TOL: f64 = 1e-4;
const GMI_PAR_CHUNK: usize = 16_384;

/// Per-sample evidence for the bitwise GMI: log posteriors of both bit values
/// for every tributary, plus the transmitted label.
struct GmiEvidence<'a> {
    lp0: Vec<f64>,
    lp1: Vec<f64>,
    labels: &'a [u32],
    ln_prior: Vec<f64>,
    m: usize,
}

impl<'a> GmiEvidence<'a> {
    fn new(l: &LMatrix, labels: &'a [u32], c: &Constellation) -> Result<Self> {
        if labels.len() != l.n_sym() {
            return Err(Error::Usage("label count does not match L-matrix".into()));
        }
        let m = l.m();
        if m != c.bits_per_symbol() {
            return Err(Error::Usage("L-matrix width differs from constellation order".into()));
        }
        let lp0: Vec<f64> = l.values().iter().map(|&v| -softplus(-v)).collect();
        let lp1: Vec<f64> = l.values().iter().map(|&v| -softplus(v)).collect();
        let ln_prior: Vec<f64> = (0..1u32 << m).map(|lab| c.label_prob(lab).ln()).collect();
        Ok(Self { lp0, lp1, labels, ln_prior, m })
    }

    /// Mean of the bitwise metric at scaling `s`, in bits per channel use.
    fn rate_at(&self, s: f64) -> f64 {
        let m = self.m;
        let nlab = 1usize << m;
        let n_sym = self.labels.len();
        // Fixed-size chunks with an ordered reduction keep the float sum
        // independent of the thread schedule.
        let chunk_sums: Vec<f64> = (0..n_sym.div_ceil(GMI_PAR_CHUNK))
            .into_par_iter()
            .map(|ci| {
                let lo = ci * GMI_PAR_CHUNK;
                let hi = (lo + GMI_PAR_CHUNK).min(n_sym);
                let mut acc = 0.0;
                let mut u = vec![0.0f64; nlab];
                for sym in lo..hi {
                    let base = sym * m;
                    for (lab, slot) in u.iter_mut().enumerate() {
                        let mut t = 0.0;
                        for i in 0..m {
                            t += if (lab >> (m - 1 - i)) & 1 == 0 {
                                self.lp0[base + i]
                            } else {
                                self.lp1[base + i]
                            };
                        }
                        *slot = t;
                    }
                    let tx = self.labels[sym] as usize;
                    let num = s * (u[tx] - self.ln_prior[tx]);
                    let mut mx = f64::NEG_INFINITY;
                    for (lab, slot) in u.iter_mut().enumerate() {
                        let a = (1.0 - s) * self.ln_prior[lab] + s * *slot;
                        *slot = a;
                        if a > mx {
                            mx = a;
                        }
                    }
                    let den = mx + u.iter().map(|&a| (a - mx).exp()).sum::<f64>().ln();
                    acc += num - den;
                }
                acc
            })
            .collect();
        chunk_sums.iter().sum::<f64>() / (n_sym as f64 * std::f64::consts::LN_2)
    }
}

/// Bitwise-metric mutual information at a fixed scaling `s`, in bpcu.
///
/// Exposed separately so independent finite-sum evaluations can be compared
/// against the same evidence.
pub fn gmi_at_s(l: &LMatrix, labels: &[u32], c: &Constellation, s: f64) -> Result<f64> {
    Ok(GmiEvidence::new(l, labels, c)?.rate_at(s))
}

/// Monte-Carlo GMI: maximizes the bitwise metric over `s` in (0.01, 5] by
/// golden-section search.
pub fn gmi(l: &LMatrix, labels: &[u32], c: &Constellation) -> Result<GmiEstimate> {
    let ev = GmiEvidence::new(l, labels, c)?;
    let (s_opt, gmi_bpcu, bracket_edge) =
        golden_section_max(|s| ev.rate_at(s), S_BRACKET.0, S_BRACKET.1, S_TOL);
    Ok(GmiEstimate { gmi_bpcu, s_opt, bracket_edge })
}

/// Normalized GMI: `1 - (H(B) - GMI)/m`.
pub fn ngmi(gmi_bpcu: f64, entropy_bpcu: f64, m: usize) -> f64 {
    1.0 - (entropy_bpcu - gmi_bpcu) / m as f64
}

/// Asymmetric information of a pmf over the full (signed) L-value set, given
/// in ascending level order.
///
/// `ASI = 1 - H(L_a | |L_a|)`; empty magnitude bins contribute zero.
pub fn asi_from_signed_pmf(pmf: &[f64]) -> f64 {
    debug_assert!(pmf.len().is_multiple_of(2));
    let half = pmf.len() / 2;
    let mut asi = 1.0;
    for j in 0..half {
        let p_pos = pmf[half + j];
        let p_neg = pmf[half - 1 - j];
        let p_abs = p_pos + p_neg;
        if p_abs > 0.0 {
            asi -= p_abs * binary_entropy(p_neg / p_abs);
        }
    }
    asi
}

/// ASI from symmetrized L-value samples already in the quantizer level set.
pub fn asi(l_a: &[f64], q: &LQuantizer) -> Result<f64> {
    if l_a.is_empty() {
        return Err(Error::Usage("ASI needs at least one sample".into()));
    }
    let mut counts = vec![0u64; q.n_bin()];
    for &v in l_a {
        counts[q.index_of(v)] += 1;
    }
    let total = l_a.len() as f64;
    let pmf: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    Ok(asi_from_signed_pmf(&pmf))
}

/// Ground-truth metrics for one operating point.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub gmi_bpcu: Option<f64>,
    pub ngmi: Option<f64>,
    pub asi: f64,
    pub ber_pre: f64,
    pub q_ber_db: Option<f64>,
    pub s_opt: Option<f64>,
    pub sample_count: usize,
}
