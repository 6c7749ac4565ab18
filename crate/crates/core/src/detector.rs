//! Energy detector deciding between pulse-based (H0) and carrier-based (H1)
//! transmission, with closed-form error probabilities through the
//! noncentral chi-squared law and seeded Monte-Carlo estimates.
//!
//! With `r~[n] = r[n] / sigma`, the sum `A = sum r~[n]^2` is noncentral
//! chi-squared with `N` degrees of freedom and noncentrality
//! `lambda_i = sum (s_i[n] / sigma)^2`. The statistic is
//! `T = (sigma^2 / N) A = (1/N) sum r[n]^2`, and
//!
//! ```text
//! Pe1 = P(T > eta | H0)  = Q_{N/2}(sqrt(lambda0), sqrt(N eta / sigma^2))
//! Pe2 = P(T <= eta | H1) = 1 - Q_{N/2}(sqrt(lambda1), sqrt(N eta / sigma^2))
//! ```

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::SampledSignal;
use crate::specfun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    /// Pulse-based modulation.
    H0,
    /// Carrier-based modulation.
    H1,
}

/// Degrees of freedom of the energy sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DofMode {
    /// Real passband samples, `N` degrees of freedom.
    #[default]
    Passband,
    /// Complex baseband samples, `2N` degrees of freedom.
    Baseband,
}

/// How an SNR in dB maps to noise and noncentrality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseNormalization {
    /// `sigma^2 = 10^(-dB/10)` and `lambda = sum (s/sigma)^2`.
    #[default]
    Scaled,
    /// `sigma = 10^(-dB/10)` and `lambda = sum s^2` (noise-independent).
    /// Reproduces the published error-probability figures.
    Unscaled,
}

impl NoiseNormalization {
    pub fn noise_variance(self, snr_db: f64) -> f64 {
        match self {
            NoiseNormalization::Scaled => 10f64.powf(-snr_db / 10.0),
            NoiseNormalization::Unscaled => 10f64.powf(-snr_db / 5.0),
        }
    }

    pub fn noncentrality(self, energy: f64, noise_variance: f64) -> f64 {
        match self {
            NoiseNormalization::Scaled => energy / noise_variance,
            NoiseNormalization::Unscaled => energy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub window_len: usize,
    pub threshold: f64,
    pub noise_variance: f64,
    pub dof_mode: DofMode,
}

impl DetectorConfig {
    pub fn new(window_len: usize, threshold: f64, noise_variance: f64) -> Result<Self> {
        let cfg = Self {
            window_len,
            threshold,
            noise_variance,
            dof_mode: DofMode::Passband,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_dof_mode(mut self, mode: DofMode) -> Self {
        self.dof_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::invalid("detector window must hold at least one sample"));
        }
        if !(self.threshold >= 0.0) || self.threshold.is_nan() {
            return Err(Error::invalid(format!("threshold must be >= 0, got {}", self.threshold)));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be > 0, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    pub fn dof(&self) -> f64 {
        match self.dof_mode {
            DofMode::Passband => self.window_len as f64,
            DofMode::Baseband => 2.0 * self.window_len as f64,
        }
    }

    /// Threshold on the normalized energy sum, `N eta / sigma^2`.
    pub fn normalized_threshold(&self) -> f64 {
        self.window_len as f64 * self.threshold / self.noise_variance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub decision: Hypothesis,
}

/// `(1/N) sum r[n]^2` over a window of exactly `N` samples.
pub fn test_statistic(r: &[f64], config: &DetectorConfig) -> Result<f64> {
    if r.len() != config.window_len {
        return Err(Error::LengthMismatch {
            expected: config.window_len,
            got: r.len(),
        });
    }
    Ok(r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64)
}

/// H1 iff the statistic exceeds the threshold; ties go to H0.
pub fn decide(statistic: f64, config: &DetectorConfig) -> Hypothesis {
    if statistic > config.threshold {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

pub fn run_test(r: &[f64], config: &DetectorConfig) -> Result<TestOutcome> {
    let statistic = test_statistic(r, config)?;
    Ok(TestOutcome {
        statistic,
        decision: decide(statistic, config),
    })
}

/// `sum (s[n] / sigma)^2`.
pub fn noncentrality(clean: &SampledSignal, noise_variance: f64) -> Result<f64> {
    if !(noise_variance > 0.0 && noise_variance.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be > 0, got {noise_variance}")));
    }
    Ok(clean.energy() / noise_variance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralityPair {
    pub lambda0: f64,
    pub lambda1: f64,
}

/// `P(T > eta | H0)`.
pub fn type1_error(config: &DetectorConfig, lambda0: f64) -> Result<f64> {
    config.validate()?;
    let x = config.normalized_threshold();
    specfun::marcum_q(config.dof() / 2.0, lambda0.sqrt(), x.sqrt())
}

/// `P(T <= eta | H1)`.
pub fn type2_error(config: &DetectorConfig, lambda1: f64) -> Result<f64> {
    config.validate()?;
    let x = config.normalized_threshold();
    let params = specfun::ChiSquaredParams::new(config.dof(), lambda1)?;
    specfun::noncentral_chisq_cdf(x, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    Snr,
    Eta,
}

/// One-dimensional sweep: `grid` over `variable` with the other variable
/// held at `fixed` (SNR in dB or threshold).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub grid: Vec<f64>,
    pub fixed: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("sweep grid is empty"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) || !self.fixed.is_finite() {
            return Err(Error::NonFinite);
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sweep grid must be strictly increasing"));
        }
        Ok(())
    }

    fn point(&self, v: f64) -> (f64, f64) {
        match self.variable {
            SweepVar::Snr => (v, self.fixed),
            SweepVar::Eta => (self.fixed, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub sweep_var: f64,
    pub pe1_analytic: f64,
    pub pe2_analytic: f64,
    pub pe1_mc: Option<f64>,
    pub pe2_mc: Option<f64>,
    pub trials: usize,
}

/// Error counts from a Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorCounts {
    pub type1: usize,
    pub type2: usize,
    pub trials: usize,
}

impl ErrorCounts {
    pub fn pe1(&self) -> f64 {
        self.type1 as f64 / self.trials as f64
    }

    pub fn pe2(&self) -> f64 {
        self.type2 as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub value: f64,
    pub pe1: f64,
    pub pe2: f64,
}

/// Clean H0/H1 windows plus the noise convention; the unit the sweeps,
/// Monte-Carlo runs and Pareto search work on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDetection {
    s0: Vec<f64>,
    s1: Vec<f64>,
    energy0: f64,
    energy1: f64,
    pub normalization: NoiseNormalization,
    pub dof_mode: DofMode,
}

impl ModeDetection {
    pub fn new(s0: &SampledSignal, s1: &SampledSignal) -> Result<Self> {
        if s0.len() != s1.len() {
            return Err(Error::LengthMismatch {
                expected: s0.len(),
                got: s1.len(),
            });
        }
        if s0.is_empty() {
            return Err(Error::invalid("empty detection window"));
        }
        Ok(Self {
            s0: s0.samples().to_vec(),
            s1: s1.samples().to_vec(),
            energy0: s0.energy(),
            energy1: s1.energy(),
            normalization: NoiseNormalization::Scaled,
            dof_mode: DofMode::Passband,
        })
    }

    pub fn with_normalization(mut self, n: NoiseNormalization) -> Self {
        self.normalization = n;
        self
    }

    pub fn with_dof_mode(mut self, mode: DofMode) -> Self {
        self.dof_mode = mode;
        self
    }

    pub fn window_len(&self) -> usize {
        self.s0.len()
    }

    pub fn energies(&self) -> (f64, f64) {
        (self.energy0, self.energy1)
    }

    pub fn config(&self, snr_db: f64, eta: f64) -> Result<DetectorConfig> {
        let sigma2 = self.normalization.noise_variance(snr_db);
        Ok(DetectorConfig::new(self.window_len(), eta, sigma2)?.with_dof_mode(self.dof_mode))
    }

    pub fn noncentralities(&self, snr_db: f64) -> NoncentralityPair {
        let sigma2 = self.normalization.noise_variance(snr_db);
        NoncentralityPair {
            lambda0: self.normalization.noncentrality(self.energy0, sigma2),
            lambda1: self.normalization.noncentrality(self.energy1, sigma2),
        }
    }

    /// `(Pe1, Pe2)` from the closed forms.
    pub fn analytic(&self, snr_db: f64, eta: f64) -> Result<(f64, f64)> {
        let cfg = self.config(snr_db, eta)?;
        let l = self.noncentralities(snr_db);
        Ok((type1_error(&cfg, l.lambda0)?, type2_error(&cfg, l.lambda1)?))
    }

    /// Simulated statistics `T` under H0 and H1, `trials` each.
    ///
    /// Each trial draws `r~[n] = m[n] + Z[n]` with the normalized mean `m`
    /// implied by the noise convention (`s/sigma` or `s`) and forms
    /// `T = (sigma^2/N) sum r~^2`. Baseband mode adds `N` zero-mean
    /// quadrature components.
    pub fn simulate_statistics<R: Rng + ?Sized>(
        &self,
        snr_db: f64,
        trials: usize,
        rng: &mut R,
    ) -> (Vec<f64>, Vec<f64>) {
        let sigma2 = self.normalization.noise_variance(snr_db);
        let scale = match self.normalization {
            NoiseNormalization::Scaled => 1.0 / sigma2.sqrt(),
            NoiseNormalization::Unscaled => 1.0,
        };
        let n = self.window_len();
        let extra = match self.dof_mode {
            DofMode::Passband => 0,
            DofMode::Baseband => n,
        };
        let m0: Vec<f64> = self.s0.iter().map(|s| s * scale).collect();
        let m1: Vec<f64> = self.s1.iter().map(|s| s * scale).collect();
        let norm = sigma2 / n as f64;
        let mut draw = |m: &[f64]| -> f64 {
            let mut a = 0.0;
            for &mu in m {
                let z: f64 = rng.sample(StandardNormal);
                a += (mu + z) * (mu + z);
            }
            for _ in 0..extra {
                let z: f64 = rng.sample(StandardNormal);
                a += z * z;
            }
            norm * a
        };
        let mut t0 = Vec::with_capacity(trials);
        let mut t1 = Vec::with_capacity(trials);
        for _ in 0..trials {
            t0.push(draw(&m0));
            t1.push(draw(&m1));
        }
        (t0, t1)
    }

    /// Error counts at each threshold, sharing one set of trials.
    pub fn monte_carlo<R: Rng + ?Sized>(
        &self,
        snr_db: f64,
        etas: &[f64],
        trials: usize,
        rng: &mut R,
    ) -> Vec<ErrorCounts> {
        let (t0, t1) = self.simulate_statistics(snr_db, trials, rng);
        etas.iter()
            .map(|&eta| ErrorCounts {
                type1: t0.iter().filter(|&&t| t > eta).count(),
                type2: t1.iter().filter(|&&t| t <= eta).count(),
                trials,
            })
            .collect()
    }

    /// Analytic curves over the grid, plus Monte-Carlo columns when
    /// `trials > 0`. Cell `i` draws from stream `i` of `seed`, so the table
    /// does not depend on the worker count.
    pub fn error_sweep(&self, spec: &SweepSpec, trials: usize, seed: u64) -> Result<Vec<SweepRow>> {
        spec.validate()?;
        spec.grid
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let (snr_db, eta) = spec.point(v);
                let (pe1, pe2) = self.analytic(snr_db, eta)?;
                let (pe1_mc, pe2_mc) = if trials > 0 {
                    let mut r = rng::stream(seed, i as u64);
                    let c = self.monte_carlo(snr_db, &[eta], trials, &mut r)[0];
                    (Some(c.pe1()), Some(c.pe2()))
                } else {
                    (None, None)
                };
                Ok(SweepRow {
                    sweep_var: v,
                    pe1_analytic: pe1,
                    pe2_analytic: pe2,
                    pe1_mc,
                    pe2_mc,
                    trials,
                })
            })
            .collect()
    }

    /// All points in `[lo, hi]` where `Pe1 = Pe2`, located by scanning
    /// `steps` intervals for sign changes and bisecting each to `tol`.
    pub fn crossings(
        &self,
        variable: SweepVar,
        fixed: f64,
        lo: f64,
        hi: f64,
        steps: usize,
        tol: f64,
    ) -> Result<Vec<Crossing>> {
        if !(hi > lo) || steps == 0 || !(tol > 0.0) {
            return Err(Error::invalid("crossing search needs lo < hi, steps >= 1, tol > 0"));
        }
        let spec = SweepSpec {
            variable,
            grid: Vec::new(),
            fixed,
        };
        let diff = |v: f64| -> Result<f64> {
            let (s, e) = spec.point(v);
            let (a, b) = self.analytic(s, e)?;
            Ok(a - b)
        };
        let h = (hi - lo) / steps as f64;
        let mut out = Vec::new();
        let mut x0 = lo;
        let mut d0 = diff(x0)?;
        if d0 == 0.0 {
            out.push(x0);
        }
        for i in 1..=steps {
            let x1 = if i == steps { hi } else { lo + i as f64 * h };
            let d1 = diff(x1)?;
            if d1 == 0.0 {
                out.push(x1);
            } else if d0 != 0.0 && d0.signum() != d1.signum() {
                let (mut a, mut b, mut da) = (x0, x1, d0);
                while b - a > tol {
                    let m = 0.5 * (a + b);
                    let dm = diff(m)?;
                    if dm == 0.0 {
                        a = m;
                        b = m;
                        break;
                    }
                    if dm.signum() == da.signum() {
                        a = m;
                        da = dm;
                    } else {
                        b = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
            x0 = x1;
            d0 = d1;
        }
        out.into_iter()
            .map(|v| {
                let (s, e) = spec.point(v);
                let (pe1, pe2) = self.analytic(s, e)?;
                Ok(Crossing { value: v, pe1, pe2 })
            })
            .collect()
    }

    /// First crossing on `[lo, hi]`, to 1e-5 in the swept variable.
    pub fn pareto_point(&self, variable: SweepVar, fixed: f64, lo: f64, hi: f64) -> Result<Crossing> {
        self.crossings(variable, fixed, lo, hi, 200, 1e-5)?
            .into_iter()
            .next()
            .ok_or(Error::NoCrossing { lo, hi })
    }
}

/// Writes `sweep_var,pe1_analytic,pe2_analytic,pe1_mc,pe2_mc,trials`.
/// Monte-Carlo fields are empty when no trials were run.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "sweep_var,pe1_analytic,pe2_analytic,pe1_mc,pe2_mc,trials")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{:.10e},{:.10e},{},{},{}",
            r.sweep_var,
            r.pe1_analytic,
            r.pe2_analytic,
            opt(r.pe1_mc),
            opt(r.pe2_mc),
            r.trials
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, eta: f64, s2: f64) -> DetectorConfig {
        DetectorConfig::new(n, eta, s2).unwrap()
    }

    #[test]
    fn statistic_examples() {
        let c = cfg(4, 0.1, 0.25);
        assert_eq!(test_statistic(&[0.0; 4], &c).unwrap(), 0.0);
        assert!((test_statistic(&[0.5; 4], &c).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(test_statistic(&[0.0; 3], &c), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn tie_goes_to_h0() {
        let c = cfg(4, 0.1, 1.0);
        assert_eq!(decide(0.0, &c), Hypothesis::H0);
        assert_eq!(decide(0.1, &c), Hypothesis::H0);
        assert_eq!(decide(0.2, &c), Hypothesis::H1);
    }

    #[test]
    fn noncentrality_examples() {
        let z = SampledSignal::new(vec![0.0; 10], 1.0, 0.0).unwrap();
        assert_eq!(noncentrality(&z, 0.3).unwrap(), 0.0);
        let s2: f64 = 0.3;
        let s = SampledSignal::new(vec![s2.sqrt(); 40], 1.0, 0.0).unwrap();
        assert!((noncentrality(&s, s2).unwrap() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn error_limits() {
        assert!((type1_error(&cfg(40, 0.0, 1.0), 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(type2_error(&cfg(40, 0.0, 1.0), 3.0).unwrap().abs() < 1e-15);
        assert!(type1_error(&cfg(40, 1e6, 1.0), 3.0).unwrap() < 1e-300);
    }

    #[test]
    fn equal_noncentralities_are_complementary() {
        for eta in [0.01, 0.5, 1.0, 2.0] {
            let c = cfg(12, eta, 0.7);
            let sum = type1_error(&c, 5.0).unwrap() + type2_error(&c, 5.0).unwrap();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn baseband_mode_doubles_dof() {
        let c = cfg(10, 1.0, 1.0).with_dof_mode(DofMode::Baseband);
        assert_eq!(c.dof(), 20.0);
        let p = type1_error(&c, 0.0).unwrap();
        let want = specfun::central_chisq_sf(10.0, 20.0).unwrap();
        assert!((p - want).abs() < 1e-12);
    }

    #[test]
    fn equal_signals_cross_at_one_half() {
        let s = SampledSignal::new(vec![0.3; 20], 1.0, 0.0).unwrap();
        let md = ModeDetection::new(&s, &s).unwrap();
        let c = md.pareto_point(SweepVar::Eta, 5.0, 1e-3, 5.0).unwrap();
        assert!((c.pe1 - 0.5).abs() < 1e-4 && (c.pe2 - 0.5).abs() < 1e-4);
    }

    #[test]
    fn sweep_validation_and_csv() {
        let s0 = SampledSignal::new(vec![0.1; 8], 1.0, 0.0).unwrap();
        let s1 = SampledSignal::new(vec![0.5; 8], 1.0, 0.0).unwrap();
        let md = ModeDetection::new(&s0, &s1).unwrap();
        let empty = SweepSpec {
            variable: SweepVar::Snr,
            grid: vec![],
            fixed: 0.1,
        };
        assert!(md.error_sweep(&empty, 10, 1).is_err());
        let spec = SweepSpec {
            variable: SweepVar::Eta,
            grid: vec![0.05, 0.1, 0.2],
            fixed: 3.0,
        };
        let rows = md.error_sweep(&spec, 200, 1).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("sweep_var,pe1_analytic,pe2_analytic,pe1_mc,pe2_mc,trials\n"));
        assert_eq!(rows, md.error_sweep(&spec, 200, 1).unwrap());
    }
}
