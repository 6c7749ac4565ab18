//! Transmit waveforms for the two signalling modes: on-off keyed Gaussian
//! femtosecond pulses (PBM) and raised-cosine shaped symbols on a carrier
//! (CBM), plus the symbol alphabets and additive white Gaussian noise.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{SampledSignal, TimeGrid};

/// `a * exp(-(t - b)^2 / (2 c^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPulseParams {
    pub amplitude: f64,
    pub center: f64,
    pub spread: f64,
}

impl GaussianPulseParams {
    pub fn new(amplitude: f64, center: f64, spread: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid(format!("pulse amplitude must be > 0, got {amplitude}")));
        }
        if !(spread > 0.0 && spread.is_finite()) || !center.is_finite() {
            return Err(Error::invalid(format!("pulse spread must be > 0, got {spread}")));
        }
        Ok(Self {
            amplitude,
            center,
            spread,
        })
    }

    /// Peak value 1.
    pub fn unit_peak(center: f64, spread: f64) -> Result<Self> {
        Self::new(1.0, center, spread)
    }

    /// Amplitude `1 / sqrt(2 pi c^2)`, so the pulse integrates to one.
    pub fn unit_area(center: f64, spread: f64) -> Result<Self> {
        Self::new(1.0 / (2.0 * PI * spread * spread).sqrt(), center, spread)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.spread;
        self.amplitude * (-0.5 * u * u).exp()
    }
}

pub fn gaussian_pulse(params: &GaussianPulseParams, grid: &TimeGrid) -> Result<SampledSignal> {
    grid.sample(|t| params.eval(t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaisedCosineParams {
    pub period: f64,
    pub rolloff: f64,
}

impl RaisedCosineParams {
    pub fn new(period: f64, rolloff: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::invalid(format!("symbol period must be > 0, got {period}")));
        }
        if !(0.0..1.0).contains(&rolloff) {
            return Err(Error::invalid(format!("roll-off must lie in [0, 1), got {rolloff}")));
        }
        Ok(Self { period, rolloff })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let x = t / self.period;
        let a = self.rolloff;
        let den = 1.0 - (2.0 * a * x).powi(2);
        if den.abs() < 1e-8 {
            // limit at t = ±T/(2α)
            return PI / 4.0 * sinc(1.0 / (2.0 * a));
        }
        sinc(x) * (PI * a * x).cos() / den
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

pub fn raised_cosine(params: &RaisedCosineParams, grid: &TimeGrid) -> Result<SampledSignal> {
    grid.sample(|t| params.eval(t))
}

/// Slot timing and carrier shared by both modulation modes.
///
/// Slot `k` covers `[kT, (k+1)T)`; pulses and raised-cosine envelopes are
/// centred at `kT + pulse_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotConfig {
    pub period: f64,
    pub samples_per_slot: usize,
    pub slots: usize,
    pub carrier_hz: f64,
    pub carrier_phase: f64,
    pub pulse_offset: f64,
}

impl SlotConfig {
    pub fn new(period: f64, samples_per_slot: usize, slots: usize) -> Result<Self> {
        let cfg = Self {
            period,
            samples_per_slot,
            slots,
            carrier_hz: 0.0,
            carrier_phase: 0.0,
            pulse_offset: period / 2.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_carrier(mut self, carrier_hz: f64, carrier_phase: f64) -> Self {
        self.carrier_hz = carrier_hz;
        self.carrier_phase = carrier_phase;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid(format!("slot period must be > 0, got {}", self.period)));
        }
        if self.samples_per_slot == 0 || self.slots == 0 {
            return Err(Error::invalid("samples per slot and slot count must be >= 1"));
        }
        if !(self.carrier_hz >= 0.0 && self.carrier_hz.is_finite()) || !self.pulse_offset.is_finite() {
            return Err(Error::invalid("carrier and pulse offset must be finite"));
        }
        Ok(())
    }

    pub fn sample_period(&self) -> f64 {
        self.period / self.samples_per_slot as f64
    }

    /// Samples in the whole observation interval.
    pub fn window_len(&self) -> usize {
        self.samples_per_slot * self.slots
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: 0.0,
            sample_period: self.sample_period(),
            len: self.window_len(),
        }
    }

    pub fn slot_center(&self, k: usize) -> f64 {
        k as f64 * self.period + self.pulse_offset
    }
}

/// On-off keyed pulse train, one pulse per slot whose bit is set.
/// `pulse.center` is the offset of the pulse inside its slot.
pub fn modulate_pbm(pulse: &GaussianPulseParams, slots: &SlotConfig, bits: &[bool]) -> Result<SampledSignal> {
    slots.validate()?;
    if bits.len() != slots.slots {
        return Err(Error::LengthMismatch {
            expected: slots.slots,
            got: bits.len(),
        });
    }
    if pulse.spread > slots.period / 10.0 {
        log::warn!(
            "pulse spread {:e} s exceeds a tenth of the slot period {:e} s",
            pulse.spread,
            slots.period
        );
    }
    let grid = slots.grid();
    let mut out = vec![0.0; grid.len];
    for (k, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        let p = GaussianPulseParams {
            center: k as f64 * slots.period + pulse.center,
            ..*pulse
        };
        for (n, v) in out.iter_mut().enumerate() {
            *v += p.eval(grid.time_at(n));
        }
    }
    SampledSignal::new(out, grid.sample_period, grid.t0)
}

/// Raised-cosine shaped symbols on the carrier:
/// `Re{ sum_k b[k] q(t - kT - offset) e^{i(2 pi fc t + phi)} }`.
/// Real symbols reduce to `sum_k b[k] q(...) cos(2 pi fc t + phi)`.
pub fn modulate_cbm(rc: &RaisedCosineParams, slots: &SlotConfig, symbols: &[Complex64]) -> Result<SampledSignal> {
    slots.validate()?;
    if symbols.len() != slots.slots {
        return Err(Error::LengthMismatch {
            expected: slots.slots,
            got: symbols.len(),
        });
    }
    let nyquist = 0.5 / slots.sample_period();
    if slots.carrier_hz >= nyquist {
        return Err(Error::Aliasing {
            carrier_hz: slots.carrier_hz,
            nyquist_hz: nyquist,
        });
    }
    let grid = slots.grid();
    let samples = grid
        .times()
        .map(|t| {
            let env: Complex64 = symbols
                .iter()
                .enumerate()
                .map(|(k, b)| b * rc.eval(t - slots.slot_center(k)))
                .sum();
            let carrier = Complex64::from_polar(1.0, 2.0 * PI * slots.carrier_hz * t + slots.carrier_phase);
            (env * carrier).re
        })
        .collect();
    SampledSignal::new(samples, grid.sample_period, grid.t0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Bpsk,
    Qpsk,
    Psk8,
    Psk16,
    Qam16,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Bpsk, Scheme::Qpsk, Scheme::Psk8, Scheme::Psk16, Scheme::Qam16];

    pub fn order(self) -> usize {
        match self {
            Scheme::Bpsk => 2,
            Scheme::Qpsk => 4,
            Scheme::Psk8 => 8,
            Scheme::Psk16 | Scheme::Qam16 => 16,
        }
    }

    /// 1 for BPSK (real axis), 2 otherwise.
    pub fn dim(self) -> usize {
        if self == Scheme::Bpsk {
            1
        } else {
            2
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bpsk => "BPSK",
            Scheme::Qpsk => "QPSK",
            Scheme::Psk8 => "8-PSK",
            Scheme::Psk16 => "16-PSK",
            Scheme::Qam16 => "16-QAM",
        }
    }

    /// Lower-case identifier without punctuation, e.g. `8psk`.
    pub fn key(self) -> &'static str {
        match self {
            Scheme::Bpsk => "bpsk",
            Scheme::Qpsk => "qpsk",
            Scheme::Psk8 => "8psk",
            Scheme::Psk16 => "16psk",
            Scheme::Qam16 => "16qam",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "bpsk" | "2psk" => Ok(Scheme::Bpsk),
            "qpsk" | "4psk" | "4qam" => Ok(Scheme::Qpsk),
            "8psk" | "psk8" => Ok(Scheme::Psk8),
            "16psk" | "psk16" => Ok(Scheme::Psk16),
            "16qam" | "qam16" => Ok(Scheme::Qam16),
            _ => Err(Error::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub scheme: Scheme,
    pub points: Vec<Complex64>,
    pub dim: usize,
}

impl Constellation {
    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Draws `n` equiprobable symbols.
    pub fn random_symbols<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Complex64> {
        (0..n)
            .map(|_| self.points[rng.random_range(0..self.points.len())])
            .collect()
    }
}

/// Unit average energy alphabets. QPSK sits at odd multiples of pi/4, the
/// other PSK sets start at phase 0, 16-QAM is the `{±1, ±3}^2 / sqrt(10)` grid.
pub fn constellation(scheme: Scheme) -> Constellation {
    let psk = |m: usize, offset: f64| -> Vec<Complex64> {
        (0..m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64 + offset))
            .collect()
    };
    let points = match scheme {
        Scheme::Bpsk => vec![Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)],
        Scheme::Qpsk => psk(4, PI / 4.0),
        Scheme::Psk8 => psk(8, 0.0),
        Scheme::Psk16 => psk(16, 0.0),
        Scheme::Qam16 => {
            let levels = [-3.0, -1.0, 1.0, 3.0];
            let s = 10f64.sqrt();
            levels
                .iter()
                .flat_map(|&i| levels.iter().map(move |&q| Complex64::new(i / s, q / s)))
                .collect()
        }
    };
    Constellation {
        scheme,
        points,
        dim: scheme.dim(),
    }
}

/// Adds i.i.d. `N(0, sigma^2)` samples drawn from the seeded stream.
pub fn add_awgn(signal: &SampledSignal, sigma: f64, seed: u64) -> Result<SampledSignal> {
    add_awgn_with(signal, sigma, &mut rng::from_seed(seed))
}

pub fn add_awgn_with<R: Rng + ?Sized>(signal: &SampledSignal, sigma: f64, rng: &mut R) -> Result<SampledSignal> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(signal.clone());
    }
    let noisy = signal
        .samples()
        .iter()
        .map(|&x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    signal.with_samples(noisy)
}

/// Adds circular complex Gaussian noise of total variance `sigma^2`
/// (`sigma^2 / 2` per component).
pub fn add_complex_awgn_with<R: Rng + ?Sized>(
    signal: &SampledSignal<Complex64>,
    sigma: f64,
    rng: &mut R,
) -> Result<SampledSignal<Complex64>> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(signal.clone());
    }
    let s = sigma / SQRT_2;
    let noisy = signal
        .samples()
        .iter()
        .map(|&x| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            x + Complex64::new(s * re, s * im)
        })
        .collect();
    signal.with_samples(noisy)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise std must be >= 0, got {sigma}")));
    }
    Ok(())
}
