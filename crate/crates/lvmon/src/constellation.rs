//! QAM constellations with Gray bit labeling and (optionally shaped) symbol
//! priors.
//!
//! Square QAM is built as the product of two identical PAM dimensions. Each
//! dimension carries `m/2` label bits in binary-reflected Gray order with the
//! sign bit first, so amplitude shaping leaves the sign bits uniform.
//! Probabilistic shaping draws symbols i.i.d. from a Maxwell-Boltzmann prior
//! whose rate parameter is solved by bisection on the symbol entropy.

use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;

const ENERGY_TOL: f64 = 1e-12;
const ENTROPY_TOL: f64 = 1e-6;
const LAMBDA_MAX_ITER: usize = 200;

/// Binary-reflected Gray code.
pub fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

/// Bit `i` (0-based, MSB first) of an `m`-bit label.
pub fn label_bit(label: u32, i: usize, m: usize) -> u8 {
    ((label >> (m - 1 - i)) & 1) as u8
}

/// Symbol prior: pmf over the constellation points and its entropy.
#[derive(Debug, Clone)]
pub struct SymbolPrior {
    pmf: Vec<f64>,
    entropy_bpcu: f64,
}

impl SymbolPrior {
    fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > ENERGY_TOL {
            return Err(Error::Numeric(format!("prior pmf sums to {sum}, not 1")));
        }
        if pmf.iter().any(|&p| p <= 0.0) {
            return Err(Error::Config(
                "prior pmf must be strictly positive on every point".into(),
            ));
        }
        let entropy_bpcu = -pmf.iter().map(|&p| p * p.log2()).sum::<f64>();
        Ok(Self { pmf, entropy_bpcu })
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Symbol entropy in bits per channel use.
    pub fn entropy_bpcu(&self) -> f64 {
        self.entropy_bpcu
    }
}

/// One-dimensional PAM factor shared by the I and Q dimensions of square QAM.
#[derive(Debug, Clone)]
pub struct PamDimension {
    /// Amplitude levels in ascending order (already energy-normalized).
    pub levels: Vec<f64>,
    /// Gray label of each level, `bits` bits with the sign bit as MSB.
    pub labels: Vec<u32>,
    /// Per-level prior.
    pub pmf: Vec<f64>,
    /// Label bits per dimension (m/2).
    pub bits: usize,
}

/// A complex constellation with bit labeling and symbol prior.
#[derive(Debug, Clone)]
pub struct Constellation {
    points: Vec<Complex64>,
    labels: Vec<u32>,
    point_of_label: Vec<usize>,
    m: usize,
    prior: SymbolPrior,
    dim: Option<PamDimension>,
    shaping_lambda: Option<f64>,
    cdf: Vec<f64>,
}

impl Constellation {
    /// Gray-labeled square QAM with uniform prior and unit average energy.
    ///
    /// `m` is the number of bits per complex symbol; 2 gives QPSK, 4/6/8 give
    /// 16/64/256-QAM.
    pub fn uniform_qam(m: usize) -> Result<Self> {
        if !matches!(m, 2 | 4 | 6 | 8) {
            return Err(Error::Config(format!(
                "unsupported modulation order m={m}; expected one of 2, 4, 6, 8"
            )));
        }
        Self::from_dimension_lambda(m, 0.0)
    }

    /// Square QAM with a Maxwell-Boltzmann amplitude prior solved so that the
    /// symbol entropy equals `target_entropy` bpcu (within 1e-6).
    ///
    /// The two sign bits stay uniform, so the reachable entropy range is
    /// `(2, m]`; `target_entropy == m` recovers the uniform constellation.
    pub fn ps_qam(m: usize, target_entropy: f64) -> Result<Self> {
        if !matches!(m, 4 | 6 | 8) {
            return Err(Error::Config(format!(
                "unsupported modulation order m={m} for shaping; expected 4, 6, or 8"
            )));
        }
        if !(target_entropy > 2.0 && target_entropy <= m as f64) {
            return Err(Error::Config(format!(
                "target entropy {target_entropy} outside (2, {m}] bpcu"
            )));
        }
        let lambda = solve_lambda(m, target_entropy)?;
        Self::from_dimension_lambda(m, lambda)
    }

    /// Builds a constellation from explicit points, labels, and prior.
    ///
    /// The labeling must be a bijection onto m-bit strings and the pmf must be
    /// strictly positive. Points are rescaled to unit average energy under the
    /// prior. No per-dimension product structure is assumed, so demapping
    /// falls back to the generic two-dimensional path.
    pub fn from_parts(points: Vec<Complex64>, labels: Vec<u32>, pmf: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(format!("point count {n} is not a power of two")));
        }
        let m = n.trailing_zeros() as usize;
        if labels.len() != n || pmf.len() != n {
            return Err(Error::Config("points, labels, pmf lengths differ".into()));
        }
        let mut point_of_label = vec![usize::MAX; n];
        for (p, &lab) in labels.iter().enumerate() {
            if lab as usize >= n || point_of_label[lab as usize] != usize::MAX {
                return Err(Error::Config("labeling is not a bijection".into()));
            }
            point_of_label[lab as usize] = p;
        }
        let sum: f64 = pmf.iter().sum();
        let pmf: Vec<f64> = pmf.iter().map(|p| p / sum).collect();
        let prior = SymbolPrior::from_pmf(pmf)?;
        let energy: f64 = prior
            .pmf
            .iter()
            .zip(&points)
            .map(|(p, x)| p * x.norm_sqr())
            .sum();
        let scale = 1.0 / energy.sqrt();
        let points: Vec<Complex64> = points.into_iter().map(|x| x * scale).collect();
        let mut c = Self {
            points,
            labels,
            point_of_label,
            m,
            prior,
            dim: None,
            shaping_lambda: None,
            cdf: Vec::new(),
        };
        c.assert_bit_priors_interior()?;
        c.cdf = cumulative(&c.prior.pmf);
        Ok(c)
    }

    fn from_dimension_lambda(m: usize, lambda: f64) -> Result<Self> {
        let bits = m / 2;
        let n1 = 1usize << bits;
        // Integer grid +/-1, +/-3, ... before normalization.
        let raw: Vec<f64> = (0..n1).map(|i| (2 * i as i64 - (n1 as i64 - 1)) as f64).collect();
        let w: Vec<f64> = raw.iter().map(|&a| (-lambda * a * a).exp()).collect();
        let wsum: f64 = w.iter().sum();
        let dim_pmf: Vec<f64> = w.iter().map(|&v| v / wsum).collect();
        let e_dim: f64 = dim_pmf.iter().zip(&raw).map(|(p, a)| p * a * a).sum();
        let scale = 1.0 / (2.0 * e_dim).sqrt();
        let levels: Vec<f64> = raw.iter().map(|&a| a * scale).collect();
        let dim_labels: Vec<u32> = (0..n1 as u32).map(gray).collect();

        let n = n1 * n1;
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut pmf = Vec::with_capacity(n);
        for i in 0..n1 {
            for q in 0..n1 {
                points.push(Complex64::new(levels[i], levels[q]));
                labels.push((dim_labels[i] << bits) | dim_labels[q]);
                pmf.push(dim_pmf[i] * dim_pmf[q]);
            }
        }
        let mut point_of_label = vec![usize::MAX; n];
        for (p, &lab) in labels.iter().enumerate() {
            point_of_label[lab as usize] = p;
        }
        let prior = SymbolPrior::from_pmf(pmf)?;
        let mut c = Self {
            points,
            labels,
            point_of_label,
            m,
            prior,
            dim: Some(PamDimension {
                levels,
                labels: dim_labels,
                pmf: dim_pmf,
                bits,
            }),
            shaping_lambda: if lambda > 0.0 { Some(lambda) } else { None },
            cdf: Vec::new(),
        };
        c.assert_bit_priors_interior()?;
        c.cdf = cumulative(&c.prior.pmf);
        Ok(c)
    }

    fn assert_bit_priors_interior(&self) -> Result<()> {
        for i in 0..self.m {
            let p0 = self.bit_prior(i);
            if !(p0 > 0.0 && p0 < 1.0) {
                return Err(Error::Config(format!(
                    "bit prior for tributary {i} is {p0}; every tributary needs both bit values"
                )));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// m-bit label of each point, parallel to [`Self::points`].
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Bits per complex symbol.
    pub fn bits_per_symbol(&self) -> usize {
        self.m
    }

    pub fn prior(&self) -> &SymbolPrior {
        &self.prior
    }

    /// Per-dimension PAM factor; `None` for hand-built constellations.
    pub fn dimension(&self) -> Option<&PamDimension> {
        self.dim.as_ref()
    }

    /// Maxwell-Boltzmann rate parameter, if shaped.
    pub fn shaping_lambda(&self) -> Option<f64> {
        self.shaping_lambda
    }

    /// Point index carrying a given label.
    pub fn point_of_label(&self, label: u32) -> usize {
        self.point_of_label[label as usize]
    }

    /// Prior probability of a label.
    pub fn label_prob(&self, label: u32) -> f64 {
        self.prior.pmf[self.point_of_label(label)]
    }

    /// Average symbol energy under the prior (1 after construction).
    pub fn energy(&self) -> f64 {
        self.prior
            .pmf
            .iter()
            .zip(&self.points)
            .map(|(p, x)| p * x.norm_sqr())
            .sum()
    }

    /// Exact marginal probability that tributary `i` (0-based) carries a 0.
    pub fn bit_prior(&self, i: usize) -> f64 {
        assert!(i < self.m, "tributary index {i} out of range");
        self.prior
            .pmf
            .iter()
            .zip(&self.labels)
            .filter(|(_, &lab)| label_bit(lab, i, self.m) == 0)
            .map(|(p, _)| p)
            .sum()
    }

    /// Draws `n_sym` i.i.d. symbols from the prior.
    ///
    /// Returns the complex symbols and their m-bit labels. Deterministic for a
    /// fixed generator state.
    pub fn sample_symbols<R: Rng>(&self, n_sym: usize, rng: &mut R) -> (Vec<Complex64>, Vec<u32>) {
        let mut xs = Vec::with_capacity(n_sym);
        let mut labels = Vec::with_capacity(n_sym);
        for _ in 0..n_sym {
            let u: f64 = rng.random();
            let idx = self.cdf.partition_point(|&c| c < u).min(self.points.len() - 1);
            xs.push(self.points[idx]);
            labels.push(self.labels[idx]);
        }
        (xs, labels)
    }
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

/// Symbol entropy of the Maxwell-Boltzmann-shaped constellation at `lambda`.
fn entropy_at_lambda(m: usize, lambda: f64) -> f64 {
    let bits = m / 2;
    let n1 = 1usize << bits;
    let raw: Vec<f64> = (0..n1).map(|i| (2 * i as i64 - (n1 as i64 - 1)) as f64).collect();
    let w: Vec<f64> = raw.iter().map(|&a| (-lambda * a * a).exp()).collect();
    let wsum: f64 = w.iter().sum();
    let h_dim: f64 = -w
        .iter()
        .map(|&v| {
            let p = v / wsum;
            p * p.log2()
        })
        .sum::<f64>();
    2.0 * h_dim
}

/// Solves the Maxwell-Boltzmann rate parameter so that the symbol entropy hits
/// `target` bpcu. Entropy is strictly decreasing in lambda, so plain bisection
/// on [0, hi] converges; hi is grown until it brackets.
fn solve_lambda(m: usize, target: f64) -> Result<f64> {
    if (entropy_at_lambda(m, 0.0) - target).abs() <= ENTROPY_TOL {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut grow = 0;
    while entropy_at_lambda(m, hi) > target {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::Numeric(
                "failed to bracket the shaping rate parameter".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..LAMBDA_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let h = entropy_at_lambda(m, mid);
        if (h - target).abs() <= ENTROPY_TOL {
            return Ok(mid);
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Bisection halves the interval 200 times; entropy is continuous, so the
    // midpoint is within tolerance unless the target sits on a discontinuity.
    let mid = 0.5 * (lo + hi);
    if (entropy_at_lambda(m, mid) - target).abs() <= ENTROPY_TOL {
        Ok(mid)
    } else {
        Err(Error::Numeric(format!(
            "entropy bisection did not converge for target {target}"
        )))
    }
}
