//! Symbol mapping, LMMSE equalization and hard-decision error counting.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, DdError, Result};
use crate::{CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Bpsk,
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl std::str::FromStr for ConstellationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Self::Bpsk),
            "qpsk" => Ok(Self::Qpsk),
            "16qam" | "qam16" => Ok(Self::Qam16),
            other => Err(format!("unknown constellation `{other}`")),
        }
    }
}

/// Unit-average-energy Gray-labelled constellation. The point at index `i`
/// carries label `i`, most significant bit first.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: ConstellationKind,
    points: Vec<C64>,
    bits_per_symbol: usize,
}

/// Gray-coded 4-PAM level for two bits.
fn pam4(b0: u8, b1: u8) -> f64 {
    match (b0, b1) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        _ => 3.0,
    }
}

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        let bit = |label: usize, bits: usize, i: usize| ((label >> (bits - 1 - i)) & 1) as u8;
        let (bits_per_symbol, points): (usize, Vec<C64>) = match kind {
            ConstellationKind::Bpsk => (1, vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]),
            ConstellationKind::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                (
                    2,
                    (0..4)
                        .map(|l| {
                            C64::new(
                                (1.0 - 2.0 * f64::from(bit(l, 2, 0))) * s,
                                (1.0 - 2.0 * f64::from(bit(l, 2, 1))) * s,
                            )
                        })
                        .collect(),
                )
            }
            ConstellationKind::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                (
                    4,
                    (0..16)
                        .map(|l| {
                            C64::new(
                                pam4(bit(l, 4, 0), bit(l, 4, 1)) * s,
                                pam4(bit(l, 4, 2), bit(l, 4, 3)) * s,
                            )
                        })
                        .collect(),
                )
            }
        };
        Self { kind, points, bits_per_symbol }
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    fn label_bits(&self, index: usize, out: &mut Vec<u8>) {
        for i in 0..self.bits_per_symbol {
            out.push(((index >> (self.bits_per_symbol - 1 - i)) & 1) as u8);
        }
    }

    /// Maps bits (0/1, MSB first per symbol) to points.
    pub fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        if bits.len() % self.bits_per_symbol != 0 {
            return Err(DdError::InvalidConfig(format!(
                "{} bits is not a multiple of {} bits per symbol",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|chunk| {
                let idx = chunk.iter().fold(0usize, |acc, b| (acc << 1) | usize::from(*b & 1));
                self.points[idx]
            })
            .collect())
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Hard-decision demapping.
pub fn demap(symbols: &[C64], c: &Constellation) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * c.bits_per_symbol);
    for z in symbols {
        c.label_bits(c.nearest(*z), &mut bits);
    }
    bits
}

pub fn count_bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
        + a.len().abs_diff(b.len()) as u64
}

/// Precomputed LMMSE filter `W = Hᴴ (H Hᴴ + σ² I)⁻¹` for one channel and
/// noise level. At `σ² = 0` this is `H⁻¹`.
#[derive(Debug, Clone)]
pub struct LmmseEqualizer {
    filter: CMatrix,
}

/// Relative pivot size below which the noiseless system counts as singular.
const SINGULAR_RCOND: f64 = 1e-12;

impl LmmseEqualizer {
    pub fn new(h: &CMatrix, noise_variance: f64) -> Result<Self> {
        if !h.is_square() {
            return Err(DdError::SizeMismatch { expected: h.nrows(), got: h.ncols() });
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(DdError::InvalidConfig(format!("noise variance {noise_variance} must be finite and >= 0")));
        }
        let n = h.nrows();
        let filter = if noise_variance == 0.0 {
            let lu = h.clone().full_piv_lu();
            let pivots: Vec<f64> = lu.u().diagonal().iter().map(|v| v.norm()).collect();
            let max = pivots.iter().cloned().fold(0.0, f64::max);
            let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
            if n == 0 || !(min > SINGULAR_RCOND * max) {
                return Err(DdError::Singular(format!(
                    "effective channel is rank deficient (pivot ratio {:.3e})",
                    if max > 0.0 { min / max } else { 0.0 }
                )));
            }
            lu.try_inverse()
                .ok_or_else(|| DdError::Singular("effective channel is not invertible".into()))?
        } else {
            let h_adj = h.adjoint();
            let mut gram = h * &h_adj;
            for i in 0..n {
                gram[(i, i)] += C64::new(noise_variance, 0.0);
            }
            let chol = gram
                .cholesky()
                .ok_or_else(|| DdError::Singular("regularized Gram matrix is not positive definite".into()))?;
            h_adj * chol.inverse()
        };
        Ok(Self { filter })
    }

    pub fn equalize(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len(self.filter.ncols(), y.len())?;
        Ok((&self.filter * DVector::from_column_slice(y)).as_slice().to_vec())
    }
}

pub fn lmmse_equalize(h: &CMatrix, y: &[C64], noise_variance: f64) -> Result<Vec<C64>> {
    LmmseEqualizer::new(h, noise_variance)?.equalize(y)
}

/// Bit-error tally at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub waveform: String,
    /// Es/N0 in dB; `None` for a noiseless run.
    pub snr_db: Option<f64>,
    pub eb_n0_db: Option<f64>,
    pub trials: u64,
    pub bits_total: u64,
    pub bit_errors: u64,
    pub ber: f64,
}

impl DetectionReport {
    pub fn new(waveform: &str, snr_db: Option<f64>, bits_per_symbol: usize, trials: u64, bits_total: u64, bit_errors: u64) -> Result<Self> {
        if bits_total == 0 {
            return Err(DdError::Empty("bit count"));
        }
        Ok(Self {
            waveform: waveform.to_string(),
            snr_db,
            eb_n0_db: snr_db.map(|s| s - 10.0 * (bits_per_symbol as f64).log10()),
            trials,
            bits_total,
            bit_errors,
            ber: bit_errors as f64 / bits_total as f64,
        })
    }

    pub const CSV_HEADER: &'static str = "waveform,snr_db,eb_n0_db,trials,bits,errors,ber";

    pub fn csv_row(&self) -> String {
        let db = |v: Option<f64>| v.map_or_else(|| "inf".to_string(), |v| format!("{v:.4}"));
        format!(
            "{},{},{},{},{},{},{:.9e}",
            self.waveform,
            db(self.snr_db),
            db(self.eb_n0_db),
            self.trials,
            self.bits_total,
            self.bit_errors,
            self.ber
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn constellations_have_unit_energy_and_gray_labels() {
        for kind in [ConstellationKind::Bpsk, ConstellationKind::Qpsk, ConstellationKind::Qam16] {
            let cst = Constellation::new(kind);
            let pts = cst.points();
            assert_eq!(pts.len(), 1 << cst.bits_per_symbol());
            let e = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((e - 1.0).abs() < 1e-12);
            // nearest neighbours differ in exactly one bit
            let dmin = pts
                .iter()
                .enumerate()
                .flat_map(|(i, a)| pts.iter().skip(i + 1).map(move |b| (a - b).norm()))
                .fold(f64::INFINITY, f64::min);
            for (i, a) in pts.iter().enumerate() {
                for (j, b) in pts.iter().enumerate() {
                    if i != j && ((a - b).norm() - dmin).abs() < 1e-12 {
                        assert_eq!((i ^ j).count_ones(), 1, "{kind:?} {i} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn demap_exact_points_and_ties() {
        for kind in [ConstellationKind::Bpsk, ConstellationKind::Qpsk, ConstellationKind::Qam16] {
            let cst = Constellation::new(kind);
            let bits: Vec<u8> = (0..cst.points().len())
                .flat_map(|i| {
                    let mut b = Vec::new();
                    cst.label_bits(i, &mut b);
                    b
                })
                .collect();
            let syms = cst.map(&bits).unwrap();
            assert_eq!(syms, cst.points());
            assert_eq!(demap(&syms, &cst), bits);
        }
        let qpsk = Constellation::new(ConstellationKind::Qpsk);
        assert_eq!(demap(&[c(0.0, 0.0)], &qpsk), vec![0, 0]);
        assert!(qpsk.map(&[1, 0, 1]).is_err());
    }

    #[test]
    fn lmmse_identity_and_zero_forcing() {
        let y = vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 3.0)];
        assert_eq!(lmmse_equalize(&CMatrix::identity(3, 3), &y, 0.0).unwrap(), y);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut h = CMatrix::from_fn(8, 8, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        for i in 0..8 {
            h[(i, i)] += c(3.0, 0.0);
        }
        let x: Vec<C64> = (0..8).map(|i| c(i as f64, 1.0)).collect();
        let y = &h * DVector::from_column_slice(&x);
        let xh = lmmse_equalize(&h, y.as_slice(), 0.0).unwrap();
        assert!(xh.iter().zip(&x).all(|(a, b)| (a - b).norm() < 1e-8));
    }

    #[test]
    fn lmmse_shrinks_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = CMatrix::from_fn(6, 6, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>()));
        let y: Vec<C64> = (0..6).map(|i| c(1.0, i as f64)).collect();
        let norms: Vec<f64> = [1e3, 1e4, 1e5]
            .iter()
            .map(|&s| lmmse_equalize(&h, &y, s).unwrap().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }

    #[test]
    fn lmmse_reports_singular() {
        let mut h = CMatrix::identity(4, 4);
        h[(3, 3)] = c(0.0, 0.0);
        assert!(matches!(lmmse_equalize(&h, &[c(1.0, 0.0); 4], 0.0), Err(DdError::Singular(_))));
        // regularization makes it solvable
        assert!(lmmse_equalize(&h, &[c(1.0, 0.0); 4], 0.1).is_ok());
        assert!(lmmse_equalize(&h, &[c(1.0, 0.0); 3], 0.1).is_err());
        assert!(lmmse_equalize(&h, &[c(1.0, 0.0); 4], -1.0).is_err());
    }

    #[test]
    fn noiseless_identity_chain_has_no_errors() {
        let cst = Constellation::new(ConstellationKind::Qam16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<u8> = (0..4000).map(|_| rng.random_range(0..2u8)).collect();
        let syms = cst.map(&bits).unwrap();
        assert_eq!(count_bit_errors(&demap(&syms, &cst), &bits), 0);
    }

    #[test]
    fn report_fields() {
        let r = DetectionReport::new("afdm", Some(10.0), 2, 5, 1000, 7).unwrap();
        assert_eq!(r.ber, 0.007);
        assert!((r.eb_n0_db.unwrap() - (10.0 - 10.0 * 2f64.log10())).abs() < 1e-12);
        assert_eq!(r.csv_row(), "afdm,10.0000,6.9897,5,1000,7,7.000000000e-3");
        assert!(DetectionReport::new("afdm", None, 2, 1, 0, 0).is_err());
        let r = DetectionReport::new("otfs", None, 2, 1, 10, 0).unwrap();
        assert!(r.csv_row().starts_with("otfs,inf,inf,"));
    }
}
