//! THz line-of-sight channel: spreading loss, molecular absorption and a flat
//! point-dipole antenna factor, realized on a DFT grid.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{Sample, SampledSignal};

pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Reference temperature (K) and pressure (atm) for absorption scaling.
pub const T_STP: f64 = 273.15;
pub const P0_ATM: f64 = 1.0;

/// Tabulated absorption coefficient `k(f)` in 1/m, recorded at a given
/// pressure and temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionTable {
    entries: Vec<(f64, f64)>,
    pub pressure_atm: f64,
    pub temperature_k: f64,
}

impl AbsorptionTable {
    pub fn new(entries: Vec<(f64, f64)>, pressure_atm: f64, temperature_k: f64) -> Result<Self> {
        check_conditions(pressure_atm, temperature_k)?;
        check_samples(&entries, "absorption coefficient")?;
        Ok(Self {
            entries,
            pressure_atm,
            temperature_k,
        })
    }

    /// Reads a `freq_hz,k_per_m` CSV.
    pub fn from_csv(path: &Path, pressure_atm: f64, temperature_k: f64) -> Result<Self> {
        Self::new(read_pairs(path, "freq_hz", "k_per_m")?, pressure_atm, temperature_k)
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn span(&self) -> (f64, f64) {
        (self.entries[0].0, self.entries[self.entries.len() - 1].0)
    }

    /// Linear interpolation; frequencies outside the table are an error.
    pub fn interpolate(&self, f: f64) -> Result<f64> {
        interpolate(&self.entries, f)
    }
}

/// One absorbing species: number density and cross-section samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GasLine {
    pub q_per_m3: f64,
    sigma: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
struct GasSidecar {
    #[serde(rename = "Q_per_m3")]
    q_per_m3: f64,
    pressure_atm: f64,
    #[serde(rename = "temperature_K")]
    temperature_k: f64,
}

impl GasLine {
    pub fn new(q_per_m3: f64, sigma: Vec<(f64, f64)>) -> Result<Self> {
        if !(q_per_m3 >= 0.0 && q_per_m3.is_finite()) {
            return Err(Error::invalid(format!("molecule density must be >= 0, got {q_per_m3}")));
        }
        check_samples(&sigma, "cross-section")?;
        Ok(Self { q_per_m3, sigma })
    }

    /// Reads a `freq_hz,cross_section_m2` CSV and its key-value sidecar
    /// (`Q_per_m3`, `pressure_atm`, `temperature_K`). Returns the line and
    /// the (pressure, temperature) it was recorded at.
    pub fn from_files(csv: &Path, sidecar: &Path) -> Result<(Self, f64, f64)> {
        let text = std::fs::read_to_string(sidecar)?;
        let meta: GasSidecar = toml::from_str(&text).map_err(|e| Error::Parse {
            line: e.span().map(|s| line_of(&text, s.start)).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        check_conditions(meta.pressure_atm, meta.temperature_k)?;
        let line = Self::new(meta.q_per_m3, read_pairs(csv, "freq_hz", "cross_section_m2")?)?;
        Ok((line, meta.pressure_atm, meta.temperature_k))
    }

    pub fn cross_section(&self, f: f64) -> Result<f64> {
        interpolate(&self.sigma, f)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].lines().count().max(1)
}

/// Where `k(f)` comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum AbsorptionSource {
    Table(AbsorptionTable),
    /// Sum over gas species; an empty list means a lossless medium.
    Lines(Vec<GasLine>),
}

impl AbsorptionSource {
    pub fn lossless() -> Self {
        AbsorptionSource::Lines(Vec::new())
    }
}

/// `k(f)` in 1/m at pressure `p` (atm) and temperature `temp` (K).
///
/// Gas lines give `(p/p0)(T_stp/T) sum_i Q_i sigma_i(f)`. A table is
/// interpolated and rescaled by the same pressure/temperature ratio relative
/// to the conditions it was recorded at.
pub fn absorption_coefficient(source: &AbsorptionSource, p: f64, temp: f64, f: f64) -> Result<f64> {
    check_conditions(p, temp)?;
    match source {
        AbsorptionSource::Table(t) => {
            let scale = (p / t.pressure_atm) * (t.temperature_k / temp);
            Ok(scale * t.interpolate(f)?)
        }
        AbsorptionSource::Lines(lines) => {
            let mut sum = 0.0;
            for line in lines {
                sum += line.q_per_m3 * line.cross_section(f)?;
            }
            Ok((p / P0_ATM) * (T_STP / temp) * sum)
        }
    }
}

/// `exp(-i 2 pi f d / c) / sqrt(4 pi d^2)`.
pub fn spreading_loss(f: f64, d: f64) -> Result<Complex64> {
    check_distance(d)?;
    let mag = 1.0 / (4.0 * PI * d * d).sqrt();
    Ok(Complex64::from_polar(mag, -2.0 * PI * f * d / SPEED_OF_LIGHT))
}

/// `exp(-k d / 2)`.
pub fn molecular_absorption(d: f64, k: f64) -> Result<f64> {
    check_distance(d)?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::domain(format!("absorption coefficient must be >= 0, got {k}")));
    }
    Ok((-k * d / 2.0).exp())
}

/// Flat point-dipole magnitude `lambda0 / sqrt(4 pi)` with `lambda0 = c / f0`.
pub fn antenna_factor(f0: f64) -> f64 {
    SPEED_OF_LIGHT / f0 / (4.0 * PI).sqrt()
}

/// DFT grid: `len` bins at spacing `1 / (len * sample_period)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub len: usize,
    pub sample_period: f64,
}

impl FrequencyGrid {
    pub fn new(len: usize, sample_period: f64) -> Result<Self> {
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::invalid(format!("DFT length must be a power of two >= 2, got {len}")));
        }
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(Error::invalid(format!("sample period must be > 0, got {sample_period}")));
        }
        Ok(Self { len, sample_period })
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len as f64 * self.sample_period)
    }

    /// Non-negative frequency of bin `k <= len/2`.
    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * self.spacing()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditions {
    pub pressure_atm: f64,
    pub temperature_k: f64,
}

impl Default for Conditions {
    fn default() -> Self {
        Self {
            pressure_atm: P0_ATM,
            temperature_k: 296.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    distance: f64,
    design_freq: f64,
    antenna: f64,
    absorption: AbsorptionSource,
    conditions: Conditions,
    grid: FrequencyGrid,
}

impl ChannelModel {
    pub fn new(
        distance: f64,
        design_freq: f64,
        absorption: AbsorptionSource,
        conditions: Conditions,
        grid: FrequencyGrid,
    ) -> Result<Self> {
        check_distance(distance)?;
        if !(design_freq > 0.0 && design_freq.is_finite()) {
            return Err(Error::invalid(format!("antenna design frequency must be > 0, got {design_freq}")));
        }
        check_conditions(conditions.pressure_atm, conditions.temperature_k)?;
        Ok(Self {
            distance,
            design_freq,
            antenna: antenna_factor(design_freq),
            absorption,
            conditions,
            grid,
        })
    }

    /// Replaces the point-dipole antenna magnitude.
    pub fn with_antenna_factor(mut self, factor: f64) -> Self {
        self.antenna = factor;
        self
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn design_freq(&self) -> f64 {
        self.design_freq
    }

    pub fn antenna(&self) -> f64 {
        self.antenna
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn absorption(&self) -> &AbsorptionSource {
        &self.absorption
    }

    /// Propagation delay `d / c`.
    pub fn delay(&self) -> f64 {
        self.distance / SPEED_OF_LIGHT
    }

    /// `H(f)` at a single non-negative frequency.
    pub fn gain_at(&self, f: f64) -> Result<Complex64> {
        let k = absorption_coefficient(
            &self.absorption,
            self.conditions.pressure_atm,
            self.conditions.temperature_k,
            f,
        )?;
        Ok(self.antenna * spreading_loss(f, self.distance)? * molecular_absorption(self.distance, k)?)
    }

    /// Gains on all DFT bins, Hermitian-symmetric so the impulse response is
    /// real. DC and (for even lengths) Nyquist bins keep only their real part.
    pub fn frequency_response(&self) -> Result<Vec<Complex64>> {
        let n = self.grid.len;
        let half = n / 2;
        let mut h = vec![Complex64::new(0.0, 0.0); n];
        for (k, g) in h.iter_mut().enumerate().take(half + 1) {
            *g = self.gain_at(self.grid.bin_freq(k))?;
        }
        h[0] = Complex64::new(h[0].re, 0.0);
        if n.is_multiple_of(2) {
            h[half] = Complex64::new(h[half].re, 0.0);
        }
        for k in 1..n.div_ceil(2) {
            h[n - k] = h[k].conj();
        }
        Ok(h)
    }

    /// Inverse DFT (with the `1/N` factor) of the frequency response.
    pub fn impulse_response(&self) -> Result<SampledSignal> {
        let mut h = self.frequency_response()?;
        dsp::ifft_in_place(&mut h);
        into_real(h, self.grid.sample_period, 0.0)
    }

    /// Circular filtering of `signal` on the channel grid. The signal is
    /// zero-padded to the grid length; output has the grid length and the
    /// input's time origin.
    pub fn filter(&self, signal: &SampledSignal) -> Result<SampledSignal> {
        check_period(signal.sample_period(), self.grid.sample_period)?;
        let n = self.grid.len;
        if signal.len() > n {
            return Err(Error::invalid(format!(
                "signal of {} samples does not fit the {n}-point channel grid",
                signal.len()
            )));
        }
        let x: Vec<Complex64> = signal.samples().iter().map(|&v| v.to_complex()).collect();
        let mut spec = dsp::fft_padded(&x, n);
        for (s, g) in spec.iter_mut().zip(self.frequency_response()?) {
            *s *= g;
        }
        dsp::ifft_in_place(&mut spec);
        into_real(spec, signal.sample_period(), signal.t0())
    }

    /// Symbol-rate complex baseband equivalent around `carrier_hz`.
    ///
    /// `H(fc + f)` is sampled on a `1/T`-wide band, inverted, and the
    /// `n_taps` consecutive taps holding the most energy are kept and scaled
    /// to unit norm.
    pub fn baseband_taps(&self, carrier_hz: f64, symbol_period: f64, n_taps: usize) -> Result<BasebandChannel> {
        if n_taps == 0 {
            return Err(Error::invalid("need at least one tap"));
        }
        if !(symbol_period > 0.0) || !(carrier_hz > 0.5 / symbol_period) {
            return Err(Error::invalid("carrier must exceed half the symbol rate"));
        }
        let m = (4 * n_taps).max(64).next_power_of_two();
        let df = 1.0 / (m as f64 * symbol_period);
        let mut h = Vec::with_capacity(m);
        for j in 0..m {
            let f = if j < m / 2 { j as f64 } else { j as f64 - m as f64 } * df;
            h.push(self.gain_at(carrier_hz + f)?);
        }
        dsp::ifft_in_place(&mut h);
        let total: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        let window = |s: usize| (0..n_taps).map(|l| h[(s + l) % m].norm_sqr()).sum::<f64>();
        let start = (0..m)
            .max_by(|&a, &b| window(a).total_cmp(&window(b)).then(b.cmp(&a)))
            .unwrap_or(0);
        let kept: Vec<Complex64> = (0..n_taps).map(|l| h[(start + l) % m]).collect();
        let norm = kept.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::SpectralNull { bin: 0 });
        }
        Ok(BasebandChannel {
            taps: kept.iter().map(|z| z / norm).collect(),
            gain: norm,
            captured_fraction: norm * norm / total,
            offset: start,
        })
    }
}

/// Output of [`ChannelModel::baseband_taps`].
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandChannel {
    /// Unit-norm taps.
    pub taps: Vec<Complex64>,
    /// Norm of the kept taps before scaling.
    pub gain: f64,
    /// Share of the band-limited response energy inside the kept taps.
    pub captured_fraction: f64,
    /// Symbol index of the first kept tap.
    pub offset: usize,
}

/// Linear convolution; output length `len(x) + len(h) - 1`, time origins add.
pub fn convolve<T: Sample>(x: &SampledSignal<T>, h: &SampledSignal<T>) -> Result<SampledSignal<T>> {
    check_period(x.sample_period(), h.sample_period())?;
    let a: Vec<Complex64> = x.samples().iter().map(|s| s.to_complex()).collect();
    let b: Vec<Complex64> = h.samples().iter().map(|s| s.to_complex()).collect();
    let y = dsp::linear_convolution(&a, &b);
    SampledSignal::new(
        y.into_iter().map(T::from_complex).collect(),
        x.sample_period(),
        x.t0() + h.t0(),
    )
}

fn into_real(z: Vec<Complex64>, sample_period: f64, t0: f64) -> Result<SampledSignal> {
    let peak = z.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let resid = z.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if resid > 1e-10 * peak.max(f64::MIN_POSITIVE) {
        return Err(Error::invalid(format!(
            "inverse transform not real: imaginary residue {resid:e} vs peak {peak:e}"
        )));
    }
    SampledSignal::new(z.into_iter().map(|v| v.re).collect(), sample_period, t0)
}

fn check_period(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) {
        return Err(Error::SamplePeriodMismatch(a, b));
    }
    Ok(())
}

fn check_distance(d: f64) -> Result<()> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::domain(format!("distance must be > 0, got {d}")));
    }
    Ok(())
}

fn check_conditions(p: f64, temp: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) || !(temp > 0.0 && temp.is_finite()) {
        return Err(Error::domain(format!(
            "pressure and temperature must be > 0, got p={p} atm, T={temp} K"
        )));
    }
    Ok(())
}

fn check_samples(entries: &[(f64, f64)], what: &str) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::invalid(format!("{what} table is empty")));
    }
    for w in entries.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::invalid(format!(
                "{what} frequencies must be strictly increasing ({:e} then {:e})",
                w[0].0, w[1].0
            )));
        }
    }
    if entries.iter().any(|&(f, v)| !f.is_finite() || !(v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("{what} values must be finite and >= 0")));
    }
    Ok(())
}

fn interpolate(entries: &[(f64, f64)], f: f64) -> Result<f64> {
    let lo = entries[0].0;
    let hi = entries[entries.len() - 1].0;
    if !(f >= lo && f <= hi) {
        return Err(Error::OutOfRange {
            freq_hz: f,
            lo_hz: lo,
            hi_hz: hi,
        });
    }
    let i = entries.partition_point(|&(x, _)| x <= f);
    if i == entries.len() {
        return Ok(entries[i - 1].1);
    }
    let (x0, y0) = entries[i - 1];
    let (x1, y1) = entries[i];
    Ok(y0 + (y1 - y0) * (f - x0) / (x1 - x0))
}

fn read_pairs(path: &Path, col_f: &str, col_v: &str) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_error)?;
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let idx = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column `{name}` in {}", path.display()),
        })
    };
    let (i_f, i_v) = (idx(col_f)?, idx(col_v)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("bad number in column {i}"),
                })
        };
        out.push((field(i_f)?, field(i_v)?));
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            msg: format!("{other:?}"),
        },
    }
}
