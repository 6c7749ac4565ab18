//! Least-squares channel-impulse-response estimation from a training block
//! and frequency-domain deconvolution.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{Sample, SampledSignal};

/// Known symbols `b[k1..=km]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBlock {
    pub symbols: Vec<Complex64>,
    pub first_index: usize,
}

impl TrainingBlock {
    pub fn new(symbols: Vec<Complex64>, first_index: usize) -> Self {
        Self { symbols, first_index }
    }

    /// `k_m - k_1`.
    pub fn span(&self) -> usize {
        self.symbols.len().saturating_sub(1)
    }

    pub fn last_index(&self) -> usize {
        self.first_index + self.span()
    }

    pub fn check_rank_condition(&self, l: usize) -> Result<()> {
        if self.symbols.is_empty() || self.span() < 2 * l {
            return Err(Error::RankCondition {
                span: self.span(),
                required: 2 * l,
            });
        }
        Ok(())
    }

    /// Received-sample indices the estimator uses, `k1 + L ..= km`.
    pub fn observation_range(&self, l: usize) -> std::ops::RangeInclusive<usize> {
        self.first_index + l..=self.last_index()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CirEstimate {
    pub taps: Vec<Complex64>,
    /// Diagonal of `(B^H B)^{-1}`; multiply by the noise variance for tap
    /// error variances.
    pub gram_inverse_diag: Vec<f64>,
}

impl CirEstimate {
    /// Wraps known taps (no covariance information).
    pub fn from_taps(taps: Vec<Complex64>) -> Self {
        Self {
            taps,
            gram_inverse_diag: Vec::new(),
        }
    }

    /// `L`, the number of taps minus one.
    pub fn order(&self) -> usize {
        self.taps.len().saturating_sub(1)
    }

    /// `sigma^2 diag((B^H B)^{-1})`.
    pub fn tap_variances(&self, noise_variance: f64) -> Vec<f64> {
        self.gram_inverse_diag.iter().map(|v| v * noise_variance).collect()
    }

    /// Writes `tap_index,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "tap_index,re,im")?;
        for (i, t) in self.taps.iter().enumerate() {
            writeln!(out, "{i},{:e},{:e}", t.re, t.im)?;
        }
        Ok(())
    }
}

/// Banded Toeplitz matrix with row `j = [b[k1+L+j], ..., b[k1+j]]`, shape
/// `(km - k1 - L + 1) x (L + 1)`.
pub fn build_convolution_matrix(training: &TrainingBlock, l: usize) -> Result<DMatrix<Complex64>> {
    training.check_rank_condition(l)?;
    let b = &training.symbols;
    let rows = training.span() - l + 1;
    Ok(DMatrix::from_fn(rows, l + 1, |j, c| b[l + j - c]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsConfig {
    /// Largest accepted 2-norm condition number of `B`.
    pub condition_cap: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self { condition_cap: 1e10 }
    }
}

/// `argmin |r - B h|` through a QR factorization of `B`.
///
/// `received` holds the samples `r[k1+L ..= km]`, aligned with the rows of
/// [`build_convolution_matrix`].
pub fn ls_estimate(received: &[Complex64], training: &TrainingBlock, l: usize, cfg: LsConfig) -> Result<CirEstimate> {
    let b = build_convolution_matrix(training, l)?;
    if received.len() != b.nrows() {
        return Err(Error::LengthMismatch {
            expected: b.nrows(),
            got: received.len(),
        });
    }
    if received.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite);
    }
    let sv = b.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 0.0) || smax == 0.0 {
        return Err(Error::RankDeficient);
    }
    let cond = smax / smin;
    if cond > cfg.condition_cap {
        return Err(Error::IllConditioned {
            cond,
            cap: cfg.condition_cap,
        });
    }
    let qr = b.qr();
    let q = qr.q();
    let r = qr.r();
    let rhs = q.adjoint() * DVector::from_column_slice(received);
    let h = r.solve_upper_triangular(&rhs).ok_or(Error::RankDeficient)?;
    // (B^H B)^{-1} = R^{-1} R^{-H}; its diagonal is the squared row norms of R^{-1}
    let n = l + 1;
    let rinv = r
        .solve_upper_triangular(&DMatrix::<Complex64>::identity(n, n))
        .ok_or(Error::RankDeficient)?;
    let gram_inverse_diag = (0..n)
        .map(|i| rinv.row(i).iter().map(|z| z.norm_sqr()).sum())
        .collect();
    Ok(CirEstimate {
        taps: h.iter().copied().collect(),
        gram_inverse_diag,
    })
}

/// Division rule for [`deconvolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Deconvolution {
    /// `R / H`; fails on a spectral null.
    Plain,
    /// `R H* / (|H|^2 + eps * max|H|^2)`.
    Regularized { epsilon: f64 },
}

impl Default for Deconvolution {
    fn default() -> Self {
        Deconvolution::Regularized { epsilon: 1e-8 }
    }
}

/// Bins with `|H|^2` below this fraction of the peak count as nulls in plain
/// division.
const NULL_FLOOR: f64 = 1e-24;

/// Inverts the CIR in the frequency domain on a DFT the length of `r`;
/// output has the same length and time origin. A convolution with the
/// `L + 1` taps followed by this is the identity whenever the transmitted
/// part is at most `len(r) - L` samples long.
pub fn deconvolve<T: Sample>(r: &SampledSignal<T>, h: &CirEstimate, mode: Deconvolution) -> Result<SampledSignal<T>> {
    let n = r.len();
    if h.taps.is_empty() {
        return Err(Error::invalid("empty channel estimate"));
    }
    if h.taps.len() > n {
        return Err(Error::invalid(format!(
            "channel estimate has {} taps but the signal only {n} samples",
            h.taps.len()
        )));
    }
    let x: Vec<Complex64> = r.samples().iter().map(|s| s.to_complex()).collect();
    let mut spec = dsp::fft_padded(&x, n);
    let hf = dsp::fft_padded(&h.taps, n);
    let peak = hf.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::SpectralNull { bin: 0 });
    }
    match mode {
        Deconvolution::Plain => {
            for (k, (s, g)) in spec.iter_mut().zip(&hf).enumerate() {
                if g.norm_sqr() <= NULL_FLOOR * peak {
                    return Err(Error::SpectralNull { bin: k });
                }
                *s /= g;
            }
        }
        Deconvolution::Regularized { epsilon } => {
            if !(epsilon >= 0.0 && epsilon.is_finite()) {
                return Err(Error::invalid(format!("regularization must be >= 0, got {epsilon}")));
            }
            let guard = epsilon * peak;
            for (k, (s, g)) in spec.iter_mut().zip(&hf).enumerate() {
                let den = g.norm_sqr() + guard;
                if den <= NULL_FLOOR * peak {
                    return Err(Error::SpectralNull { bin: k });
                }
                *s = *s * g.conj() / den;
            }
        }
    }
    dsp::ifft_in_place(&mut spec);
    r.with_samples(spec.into_iter().map(T::from_complex).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn convolution_matrix_shapes() {
        let t = TrainingBlock::new(vec![c(1.0), c(2.0), c(3.0)], 0);
        let b0 = build_convolution_matrix(&t, 0).unwrap();
        assert_eq!(b0.shape(), (3, 1));
        assert_eq!(b0[(2, 0)], c(3.0));
        let ones = TrainingBlock::new(vec![c(1.0); 5], 4);
        let b1 = build_convolution_matrix(&ones, 1).unwrap();
        assert_eq!(b1.shape(), (4, 2));
        assert!(b1.iter().all(|z| *z == c(1.0)));
        let short = TrainingBlock::new(vec![c(1.0); 4], 0);
        assert!(matches!(
            build_convolution_matrix(&short, 2),
            Err(Error::RankCondition { span: 3, required: 4 })
        ));
    }

    #[test]
    fn matrix_times_taps_is_convolution() {
        let mut g = rng::from_seed(5);
        let b: Vec<Complex64> = (0..15).map(|_| Complex64::new(g.random(), g.random())).collect();
        let h: Vec<Complex64> = (0..3).map(|_| Complex64::new(g.random(), g.random())).collect();
        let t = TrainingBlock::new(b.clone(), 0);
        let m = build_convolution_matrix(&t, 2).unwrap();
        let y = &m * DVector::from_column_slice(&h);
        let full = dsp::linear_convolution(&b, &h);
        for (j, v) in y.iter().enumerate() {
            assert!((v - full[j + 2]).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_channel_is_recovered() {
        let t = TrainingBlock::new(vec![c(1.0), c(-1.0), c(1.0), c(1.0)], 0);
        let est = ls_estimate(&t.symbols, &t, 0, LsConfig::default()).unwrap();
        assert!((est.taps[0] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn constant_training_is_rank_deficient() {
        let t = TrainingBlock::new(vec![c(1.0); 6], 0);
        let r = vec![c(2.0); 5];
        assert!(matches!(
            ls_estimate(&r, &t, 1, LsConfig::default()),
            Err(Error::RankDeficient | Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn delta_deconvolution_is_identity() {
        let x = SampledSignal::new(vec![1.0, -2.0, 0.5, 3.0, 0.0], 1.0, 0.0).unwrap();
        let y = deconvolve(&x, &CirEstimate::from_taps(vec![c(1.0)]), Deconvolution::Plain).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_null_is_guarded() {
        // [1, 1] vanishes at the Nyquist bin of an even-length DFT
        let x = SampledSignal::new(vec![1.0, 0.0, 2.0, 1.0, 0.0, 0.0], 1.0, 0.0).unwrap();
        let h = CirEstimate::from_taps(vec![c(1.0), c(1.0)]);
        assert!(matches!(
            deconvolve(&x, &h, Deconvolution::Plain),
            Err(Error::SpectralNull { bin: 3 })
        ));
        assert!(matches!(
            deconvolve(&x, &h, Deconvolution::Regularized { epsilon: 0.0 }),
            Err(Error::SpectralNull { .. })
        ));
        let y = deconvolve(&x, &h, Deconvolution::Regularized { epsilon: 1e-6 }).unwrap();
        assert!(y.samples().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn csv_rows() {
        let est = CirEstimate::from_taps(vec![c(1.0), Complex64::new(0.0, -0.5)]);
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("tap_index,re,im"));
        assert_eq!(text.lines().count(), 3);
    }
}
