//! Unitary building blocks shared by both modems.
//!
//! Conventions:
//! - the normalized DFT has entries `exp(-j2π mn/N) / √N`;
//! - a chirp diagonal with parameter `c` has entries `exp(-j2π c n²)`;
//! - the DAFT is `A = Λ(c2) · F · Λ(c1)`, its inverse `Λ(c1)ᴴ · Fᴴ · Λ(c2)ᴴ`;
//! - grids are vectorized column-major.
//!
//! Power-of-two lengths go through `rustfft`; other lengths use a direct
//! `O(N²)` sum. Every routine has a `_counted` variant that accumulates the
//! work into an [`OpCounter`] owned by the caller.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, DdError, Result};
use crate::{CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

/// Complex-operation tally for one counted computation.
///
/// Multiplications are split by origin: `fft_multiplies` for the transform
/// stages and `diagonal_multiplies` for chirp or pulse-shaping diagonals. The
/// `1/√N` normalization is a real scaling and is not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub fft_multiplies: u64,
    pub diagonal_multiplies: u64,
    pub complex_adds: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn complex_multiplies(&self) -> u64 {
        self.fft_multiplies + self.diagonal_multiplies
    }

    /// Cost of one length-`n` DFT: `(n/2)·log2(n)` multiplies and `n·log2(n)`
    /// adds for radix-2 lengths, `n²` multiplies and `n(n-1)` adds otherwise.
    pub fn record_dft(&mut self, n: usize) {
        let n = n as u64;
        if n.is_power_of_two() {
            let stages = u64::from(n.trailing_zeros());
            self.fft_multiplies += n / 2 * stages;
            self.complex_adds += n * stages;
        } else {
            self.fft_multiplies += n * n;
            self.complex_adds += n * n.saturating_sub(1);
        }
    }

    pub fn record_diagonal(&mut self, n: usize) {
        self.diagonal_multiplies += n as u64;
    }

    pub fn merge(&mut self, other: &OpCounter) {
        self.fft_multiplies += other.fft_multiplies;
        self.diagonal_multiplies += other.diagonal_multiplies;
        self.complex_adds += other.complex_adds;
    }
}

/// `exp(-j2π·frac)`, with `frac` reduced to `[0, 1)` first so that large
/// arguments keep their precision.
pub(crate) fn unit_phase(frac: f64) -> C64 {
    let r = frac.rem_euclid(1.0);
    C64::from_polar(1.0, -2.0 * PI * r)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match direction {
            Direction::Forward => p.plan_fft_forward(n),
            Direction::Inverse => p.plan_fft_inverse(n),
        }
    })
}

fn direct_dft(buf: &mut [C64], direction: Direction) {
    let n = buf.len();
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Inverse => -1.0,
    };
    let roots: Vec<C64> = (0..n)
        .map(|k| unit_phase(sign * k as f64 / n as f64))
        .collect();
    let input = buf.to_vec();
    for (m, out) in buf.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (i, v) in input.iter().enumerate() {
            acc += v * roots[(m * i) % n];
        }
        *out = acc;
    }
}

/// Normalized in-place DFT of `buf`.
pub(crate) fn dft_in_place(buf: &mut [C64], direction: Direction, counter: &mut OpCounter) {
    let n = buf.len();
    if n.is_power_of_two() {
        plan(n, direction).process(buf);
    } else {
        direct_dft(buf, direction);
    }
    let scale = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
    counter.record_dft(n);
}

pub fn dft_apply(x: &[C64], direction: Direction) -> Result<Vec<C64>> {
    dft_apply_counted(x, direction, &mut OpCounter::new())
}

pub fn dft_apply_counted(
    x: &[C64],
    direction: Direction,
    counter: &mut OpCounter,
) -> Result<Vec<C64>> {
    if x.is_empty() {
        return Err(DdError::Empty("DFT input"));
    }
    let mut buf = x.to_vec();
    dft_in_place(&mut buf, direction, counter);
    Ok(buf)
}

/// The `N x N` normalized DFT matrix, materialized on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DftMatrix {
    size: usize,
}

impl DftMatrix {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(DdError::Empty("DFT size"));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entry(&self, m: usize, n: usize) -> C64 {
        let k = (m * n) % self.size;
        unit_phase(k as f64 / self.size as f64) / (self.size as f64).sqrt()
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        if self.size > crate::MAX_DENSE_N {
            return Err(DdError::TooLarge(self.size));
        }
        Ok(CMatrix::from_fn(self.size, self.size, |m, n| self.entry(m, n)))
    }
}

/// Diagonal quadratic chirp `diag(exp(-j2π c n²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChirpDiagonal {
    c: f64,
    entries: Vec<C64>,
}

impl ChirpDiagonal {
    pub fn new(size: usize, c: f64) -> Result<Self> {
        if size == 0 {
            return Err(DdError::Empty("chirp size"));
        }
        if !c.is_finite() {
            return Err(DdError::InvalidConfig(format!("chirp parameter {c} is not finite")));
        }
        let entries = (0..size)
            .map(|n| {
                let nn = (n * n) as f64;
                unit_phase(c * nn)
            })
            .collect();
        Ok(Self { c, entries })
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn center_frequency(&self) -> f64 {
        self.c
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    /// Multiplies `buf` by the diagonal, or by its conjugate.
    pub(crate) fn apply_in_place(&self, buf: &mut [C64], conjugate: bool, counter: &mut OpCounter) {
        for (v, d) in buf.iter_mut().zip(&self.entries) {
            *v *= if conjugate { d.conj() } else { *d };
        }
        counter.record_diagonal(buf.len());
    }

    pub fn to_dense(&self) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.entries))
    }
}

/// The `N`-point discrete affine Fourier transform `A = Λ(c2) F Λ(c1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DaftOperator {
    c1: f64,
    c2: f64,
    chirp1: ChirpDiagonal,
    chirp2: ChirpDiagonal,
}

impl DaftOperator {
    pub fn new(size: usize, c1: f64, c2: f64) -> Result<Self> {
        Ok(Self {
            c1,
            c2,
            chirp1: ChirpDiagonal::new(size, c1)?,
            chirp2: ChirpDiagonal::new(size, c2)?,
        })
    }

    pub fn size(&self) -> usize {
        self.chirp1.size()
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// Dense `A`, built from the dense factors.
    pub fn to_dense(&self) -> Result<CMatrix> {
        let f = DftMatrix::new(self.size())?.to_dense()?;
        Ok(self.chirp2.to_dense() * f * self.chirp1.to_dense())
    }
}

pub fn daft_apply(x: &[C64], op: &DaftOperator, direction: Direction) -> Result<Vec<C64>> {
    daft_apply_counted(x, op, direction, &mut OpCounter::new())
}

pub fn daft_apply_counted(
    x: &[C64],
    op: &DaftOperator,
    direction: Direction,
    counter: &mut OpCounter,
) -> Result<Vec<C64>> {
    check_len(op.size(), x.len())?;
    let mut buf = x.to_vec();
    match direction {
        Direction::Forward => {
            op.chirp1.apply_in_place(&mut buf, false, counter);
            dft_in_place(&mut buf, Direction::Forward, counter);
            op.chirp2.apply_in_place(&mut buf, false, counter);
        }
        Direction::Inverse => {
            op.chirp2.apply_in_place(&mut buf, true, counter);
            dft_in_place(&mut buf, Direction::Inverse, counter);
            op.chirp1.apply_in_place(&mut buf, true, counter);
        }
    }
    Ok(buf)
}

fn transform_columns(m: &mut CMatrix, direction: Direction, counter: &mut OpCounter) {
    for mut col in m.column_iter_mut() {
        dft_in_place(col.as_mut_slice(), direction, counter);
    }
}

fn transform_rows(m: &mut CMatrix, direction: Direction, counter: &mut OpCounter) {
    let mut row = vec![C64::new(0.0, 0.0); m.ncols()];
    for r in 0..m.nrows() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
        dft_in_place(&mut row, direction, counter);
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
}

/// `F_K · X · F_Lᴴ` for a `K x L` grid.
///
/// `X · F_Lᴴ` is an inverse DFT along each row because `F_L` is symmetric.
pub fn isfft(grid: &CMatrix) -> Result<CMatrix> {
    isfft_counted(grid, &mut OpCounter::new())
}

pub fn isfft_counted(grid: &CMatrix, counter: &mut OpCounter) -> Result<CMatrix> {
    if grid.is_empty() {
        return Err(DdError::Empty("ISFFT grid"));
    }
    let mut out = grid.clone();
    transform_columns(&mut out, Direction::Forward, counter);
    transform_rows(&mut out, Direction::Inverse, counter);
    Ok(out)
}

/// `F_Kᴴ · Y · F_L`, the inverse of [`isfft`].
pub fn sfft(grid: &CMatrix) -> Result<CMatrix> {
    if grid.is_empty() {
        return Err(DdError::Empty("SFFT grid"));
    }
    let mut counter = OpCounter::new();
    let mut out = grid.clone();
    transform_columns(&mut out, Direction::Inverse, &mut counter);
    transform_rows(&mut out, Direction::Forward, &mut counter);
    Ok(out)
}

/// Inverse-DFT each row of a grid in place (`X · F_Lᴴ`).
pub(crate) fn idft_rows(m: &mut CMatrix, counter: &mut OpCounter) {
    transform_rows(m, Direction::Inverse, counter);
}

/// Forward-DFT each row of a grid in place (`X · F_L`).
pub(crate) fn dft_rows(m: &mut CMatrix, counter: &mut OpCounter) {
    transform_rows(m, Direction::Forward, counter);
}

/// Column-major stacking of a grid.
pub fn vectorize(grid: &CMatrix) -> Vec<C64> {
    grid.as_slice().to_vec()
}

pub fn devectorize(x: &[C64], rows: usize, cols: usize) -> Result<CMatrix> {
    if rows == 0 || cols == 0 {
        return Err(DdError::Empty("grid dimensions"));
    }
    check_len(rows * cols, x.len())?;
    Ok(CMatrix::from_column_slice(rows, cols, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn norm(x: &[C64]) -> f64 {
        x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn impulse_transforms_to_flat() {
        let x = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let y = dft_apply(&x, Direction::Forward).unwrap();
        assert!(max_diff(&y, &[c(0.5, 0.0); 4]) < 1e-15);
    }

    #[test]
    fn flat_transforms_to_impulse() {
        // sum_n 1·e^{-j2π mn/4} / 2 = 2 at m = 0 and 0 elsewhere
        let y = dft_apply(&[c(1.0, 0.0); 4], Direction::Forward).unwrap();
        assert!(max_diff(&y, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]) < 1e-15);
    }

    #[test]
    fn dft_rejects_empty() {
        assert!(matches!(dft_apply(&[], Direction::Forward), Err(DdError::Empty(_))));
        assert!(DftMatrix::new(0).is_err());
    }

    #[test]
    fn dft_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [16, 12, 7] {
            let x = random_vec(&mut rng, n);
            let y = dft_apply(&dft_apply(&x, Direction::Forward).unwrap(), Direction::Inverse).unwrap();
            assert!(max_diff(&x, &y) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn dft_matches_dense_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [8, 6, 1] {
            let f = DftMatrix::new(n).unwrap().to_dense().unwrap();
            let x = random_vec(&mut rng, n);
            let dense = &f * nalgebra::DVector::from_column_slice(&x);
            let fast = dft_apply(&x, Direction::Forward).unwrap();
            assert!(max_diff(dense.as_slice(), &fast) < 1e-12);
            let dense_inv = f.adjoint() * nalgebra::DVector::from_column_slice(&x);
            let fast_inv = dft_apply(&x, Direction::Inverse).unwrap();
            assert!(max_diff(dense_inv.as_slice(), &fast_inv) < 1e-12);
        }
    }

    #[test]
    fn dft_matrix_unitary_and_symmetric() {
        for n in [1, 2, 5, 16, 64] {
            let f = DftMatrix::new(n).unwrap().to_dense().unwrap();
            assert_eq!(f, f.transpose());
            let g = &f * f.adjoint();
            let eye = CMatrix::identity(n, n);
            assert!((g - eye).iter().all(|v| v.norm() < 1e-12), "n={n}");
        }
    }

    #[test]
    fn chirp_properties() {
        let d = ChirpDiagonal::new(32, 0.37).unwrap();
        assert!(d.entries().iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
        let id = ChirpDiagonal::new(8, 0.0).unwrap();
        assert!(id.entries().iter().all(|v| *v == c(1.0, 0.0)));
        assert!(ChirpDiagonal::new(4, f64::NAN).is_err());
    }

    #[test]
    fn daft_reduces_to_dft_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_vec(&mut rng, 16);
        let op = DaftOperator::new(16, 0.0, 0.0).unwrap();
        for dir in [Direction::Forward, Direction::Inverse] {
            assert_eq!(daft_apply(&x, &op, dir).unwrap(), dft_apply(&x, dir).unwrap());
        }
    }

    #[test]
    fn daft_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_vec(&mut rng, 16);
        let op = DaftOperator::new(16, 1.0 / 8.0, 1.0 / 32.0).unwrap();
        let y = daft_apply(&x, &op, Direction::Forward).unwrap();
        let z = daft_apply(&y, &op, Direction::Inverse).unwrap();
        assert!(max_diff(&x, &z) < 1e-12);
    }

    #[test]
    fn daft_two_point_hand_value() {
        // A = F2·diag(1, e^{-jπ/2}); A·(1,0) = first column of F2 = (1,1)/√2
        let op = DaftOperator::new(2, 0.25, 0.0).unwrap();
        let y = daft_apply(&[c(1.0, 0.0), c(0.0, 0.0)], &op, Direction::Forward).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(max_diff(&y, &[c(h, 0.0), c(h, 0.0)]) < 1e-15);
        // second column picks up the chirp: F2·(0, -j) = (-j, j)/√2
        let y = daft_apply(&[c(0.0, 0.0), c(1.0, 0.0)], &op, Direction::Forward).unwrap();
        assert!(max_diff(&y, &[c(0.0, -h), c(0.0, h)]) < 1e-15);
    }

    #[test]
    fn daft_matches_dense_and_inverse_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = DaftOperator::new(12, 0.21, 0.033).unwrap();
        let a = op.to_dense().unwrap();
        let eye = CMatrix::identity(12, 12);
        assert!((&a * a.adjoint() - eye).iter().all(|v| v.norm() < 1e-12));
        let x = random_vec(&mut rng, 12);
        let xv = nalgebra::DVector::from_column_slice(&x);
        let fwd = daft_apply(&x, &op, Direction::Forward).unwrap();
        assert!(max_diff((&a * &xv).as_slice(), &fwd) < 1e-12);
        let inv = daft_apply(&x, &op, Direction::Inverse).unwrap();
        assert!(max_diff((a.adjoint() * &xv).as_slice(), &inv) < 1e-12);
    }

    #[test]
    fn daft_size_mismatch() {
        let op = DaftOperator::new(8, 0.1, 0.0).unwrap();
        assert!(matches!(
            daft_apply(&[c(1.0, 0.0); 4], &op, Direction::Forward),
            Err(DdError::SizeMismatch { expected: 8, got: 4 })
        ));
    }

    #[test]
    fn daft_counts_two_diagonals() {
        for n in [8usize, 64, 1024] {
            let op = DaftOperator::new(n, 0.1, 0.2).unwrap();
            let mut counter = OpCounter::new();
            daft_apply_counted(&vec![c(1.0, 0.0); n], &op, Direction::Inverse, &mut counter).unwrap();
            assert_eq!(counter.diagonal_multiplies, 2 * n as u64);
            let stages = n.trailing_zeros() as u64;
            assert_eq!(counter.fft_multiplies, n as u64 / 2 * stages);
        }
        let mut counter = OpCounter::new();
        dft_apply_counted(&[c(1.0, 0.0); 6], Direction::Forward, &mut counter).unwrap();
        assert_eq!(counter.fft_multiplies, 36);
    }

    #[test]
    fn isfft_cases() {
        let zero = CMatrix::zeros(3, 5);
        assert_eq!(isfft(&zero).unwrap(), zero);

        let mut x = CMatrix::zeros(2, 2);
        x[(0, 0)] = c(1.0, 0.0);
        let y = isfft(&x).unwrap();
        assert!(y.iter().all(|v| (v - c(0.5, 0.0)).norm() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = CMatrix::from_column_slice(4, 6, &random_vec(&mut rng, 24));
        let back = sfft(&isfft(&g).unwrap()).unwrap();
        assert!((back - &g).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn isfft_matches_dense_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = CMatrix::from_column_slice(4, 3, &random_vec(&mut rng, 12));
        let fk = DftMatrix::new(4).unwrap().to_dense().unwrap();
        let fl = DftMatrix::new(3).unwrap().to_dense().unwrap();
        let dense = &fk * &g * fl.adjoint();
        assert!((dense - isfft(&g).unwrap()).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn vectorize_column_major() {
        let x = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let v = vectorize(&x);
        assert_eq!(v, vec![c(1.0, 0.0), c(3.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert_eq!(devectorize(&v, 2, 2).unwrap(), x);
        assert!(devectorize(&v, 3, 2).is_err());
    }

    #[test]
    fn vectorize_kronecker_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let a = CMatrix::from_column_slice(2, 2, &random_vec(&mut rng, 4));
            let x = CMatrix::from_column_slice(2, 2, &random_vec(&mut rng, 4));
            let b = CMatrix::from_column_slice(2, 2, &random_vec(&mut rng, 4));
            let lhs = vectorize(&(&a * &x * &b));
            let rhs = b.transpose().kronecker(&a) * nalgebra::DVector::from_column_slice(&vectorize(&x));
            assert!(max_diff(&lhs, rhs.as_slice()) < 1e-12);
        }
    }

    #[test]
    fn round_trip_3x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = CMatrix::from_column_slice(3, 4, &random_vec(&mut rng, 12));
        assert_eq!(devectorize(&vectorize(&x), 3, 4).unwrap(), x);
    }

    #[test]
    fn transforms_preserve_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in [8usize, 16, 64] {
            let op = DaftOperator::new(n, 0.3, 0.01).unwrap();
            for _ in 0..20 {
                let x = random_vec(&mut rng, n);
                let nx = norm(&x);
                for y in [
                    dft_apply(&x, Direction::Forward).unwrap(),
                    dft_apply(&x, Direction::Inverse).unwrap(),
                    daft_apply(&x, &op, Direction::Forward).unwrap(),
                    daft_apply(&x, &op, Direction::Inverse).unwrap(),
                ] {
                    assert!((norm(&y) - nx).abs() <= 1e-10 * nx);
                }
            }
        }
    }
}
