use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar sample type carried by a [`SampledSignal`].
pub trait Sample: Copy + Send + Sync + std::fmt::Debug + 'static {
    fn to_complex(self) -> Complex64;
    fn from_complex(z: Complex64) -> Self;
    fn norm_sqr(self) -> f64;
    fn is_finite(self) -> bool;
    fn zero() -> Self;
}

impl Sample for f64 {
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_complex(z: Complex64) -> Self {
        z.re
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn zero() -> Self {
        0.0
    }
}

impl Sample for Complex64 {
    fn to_complex(self) -> Complex64 {
        self
    }
    fn from_complex(z: Complex64) -> Self {
        z
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

/// Uniform sampling instants `t0 + n * sample_period`, `n < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub sample_period: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, sample_period: f64, len: usize) -> Result<Self> {
        if !(sample_period > 0.0 && sample_period.is_finite()) || !t0.is_finite() {
            return Err(Error::invalid(format!(
                "bad time grid: t0={t0}, sample period={sample_period}"
            )));
        }
        Ok(Self {
            t0,
            sample_period,
            len,
        })
    }

    pub fn time_at(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.sample_period
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|n| self.time_at(n))
    }

    /// Samples `f` on the grid.
    pub fn sample<T: Sample>(&self, f: impl Fn(f64) -> T) -> Result<SampledSignal<T>> {
        SampledSignal::new(self.times().map(f).collect(), self.sample_period, self.t0)
    }
}

/// A uniformly sampled waveform: `samples[n]` is the value at `t0 + n * sample_period`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal<T = f64> {
    samples: Vec<T>,
    sample_period: f64,
    t0: f64,
}

impl<T: Sample> SampledSignal<T> {
    pub fn new(samples: Vec<T>, sample_period: f64, t0: f64) -> Result<Self> {
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(Error::invalid(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        if !t0.is_finite() || samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            samples,
            sample_period,
            t0,
        })
    }

    pub fn zeros(len: usize, sample_period: f64, t0: f64) -> Result<Self> {
        Self::new(vec![T::zero(); len], sample_period, t0)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.sample_period
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|n| self.time_at(n))
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            sample_period: self.sample_period,
            len: self.len(),
        }
    }

    /// Discrete energy `sum |x[n]|^2`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Replaces the samples, keeping the time base.
    pub fn with_samples<U: Sample>(&self, samples: Vec<U>) -> Result<SampledSignal<U>> {
        SampledSignal::new(samples, self.sample_period, self.t0)
    }

    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> SampledSignal<U> {
        SampledSignal {
            samples: self.samples.iter().map(|&s| f(s)).collect(),
            sample_period: self.sample_period,
            t0: self.t0,
        }
    }

    /// Smallest interval `[t_lo, t_hi]` holding all but `1 - fraction` of the
    /// energy, trimmed equally from both ends.
    pub fn energy_support(&self, fraction: f64) -> (f64, f64) {
        let total = self.energy();
        if total == 0.0 || self.is_empty() {
            return (self.t0, self.t0);
        }
        let tail = 0.5 * (1.0 - fraction) * total;
        let mut acc = 0.0;
        let mut lo = 0;
        for (n, s) in self.samples.iter().enumerate() {
            acc += s.norm_sqr();
            if acc > tail {
                lo = n;
                break;
            }
        }
        acc = 0.0;
        let mut hi = self.len() - 1;
        for (n, s) in self.samples.iter().enumerate().rev() {
            acc += s.norm_sqr();
            if acc > tail {
                hi = n;
                break;
            }
        }
        (self.time_at(lo), self.time_at(hi))
    }
}

impl SampledSignal<f64> {
    /// Writes `t_s,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t_s,value")?;
        for (t, v) in self.times().zip(&self.samples) {
            writeln!(out, "{t:e},{v:e}")?;
        }
        Ok(())
    }
}

impl SampledSignal<Complex64> {
    /// Writes `t_s,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t_s,re,im")?;
        for (t, v) in self.times().zip(&self.samples) {
            writeln!(out, "{t:e},{:e},{:e}", v.re, v.im)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_time_base() {
        assert!(SampledSignal::new(vec![1.0], 0.0, 0.0).is_err());
        assert!(SampledSignal::new(vec![1.0], -1.0, 0.0).is_err());
        assert!(SampledSignal::new(vec![f64::NAN], 1.0, 0.0).is_err());
    }

    #[test]
    fn energy_support_of_single_spike() {
        let mut x = vec![0.0; 11];
        x[4] = 2.0;
        let s = SampledSignal::new(x, 0.5, 1.0).unwrap();
        assert_eq!(s.energy(), 4.0);
        assert_eq!(s.energy_support(0.99), (3.0, 3.0));
    }

    #[test]
    fn csv_header() {
        let s = SampledSignal::new(vec![1.0, 2.0], 1e-15, 0.0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,value\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
