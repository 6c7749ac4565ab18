//! Experiment configuration: one TOML file per scenario, with defaults for
//! the published simulation setup (1 ps slots, 40 samples per slot, three
//! slots, 5 THz carrier, roll-off 0.8, 20 fs pulses, 1 mm link at 1.6 THz).

use std::path::{Path, PathBuf};

use nanorx::classify::EmConfig;
use nanorx::detector::{DofMode, NoiseNormalization, SweepVar};
use nanorx::waveform::Scheme;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ChannelResponse,
    ModeDetect,
    Classify,
    Predict,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::ChannelResponse => "channel-response",
            Scenario::ModeDetect => "mode-detect",
            Scenario::Classify => "classify",
            Scenario::Predict => "predict",
        }
    }
}

/// Either an explicit list or an inclusive `start..=stop` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if *step <= 0.0 || step.is_nan() || stop < start || !start.is_finite() || !stop.is_finite() {
                    return Err(HarnessError::config(format!(
                        "grid range needs start <= stop and step > 0, got {start}..{stop} by {step}"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|i| start + i as f64 * step).collect()
            }
        };
        if v.is_empty() {
            return Err(HarnessError::config("grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::config("grid must be finite and strictly increasing"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseScale {
    /// Peak amplitude one.
    UnitPeak,
    /// Amplitude `1 / sqrt(2 pi sigma^2)`.
    UnitArea,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformConfig {
    pub period_s: f64,
    pub samples_per_slot: usize,
    pub slots: usize,
    pub carrier_hz: f64,
    pub carrier_phase_rad: f64,
    pub rolloff: f64,
    pub pulse_spread_s: f64,
    pub pulse_scale: PulseScale,
    /// BPSK symbols, one per slot; `+1` also sets the pulse bit.
    pub symbols: Vec<f64>,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            period_s: 1e-12,
            samples_per_slot: 40,
            slots: 3,
            carrier_hz: 5e12,
            carrier_phase_rad: 0.0,
            rolloff: 0.8,
            pulse_spread_s: 20e-15,
            pulse_scale: PulseScale::UnitPeak,
            symbols: vec![-1.0, 1.0, -1.0],
        }
    }
}

impl WaveformConfig {
    pub fn sample_period(&self) -> f64 {
        self.period_s / self.samples_per_slot as f64
    }

    fn validate(&self) -> Result<()> {
        if self.symbols.len() != self.slots {
            return Err(HarnessError::config(format!(
                "waveform.symbols has {} entries for {} slots",
                self.symbols.len(),
                self.slots
            )));
        }
        if self.symbols.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(HarnessError::config("waveform.symbols must be +1 or -1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasLineFiles {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub distance_m: f64,
    pub design_freq_hz: f64,
    /// `freq_hz,k_per_m` table recorded at `table_pressure_atm` and
    /// `table_temperature_k`.
    pub absorption_table: Option<PathBuf>,
    pub table_pressure_atm: f64,
    pub table_temperature_k: f64,
    pub gas_lines: Vec<GasLineFiles>,
    /// Explicitly request a medium without absorption.
    pub lossless: bool,
    pub pressure_atm: f64,
    pub temperature_k: f64,
    pub fft_len: usize,
    /// Defaults to the waveform sample period.
    pub sample_period_s: Option<f64>,
    /// Test pulse for the channel-response scenario.
    pub pulse_center_s: f64,
    pub pulse_spread_s: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            distance_m: 1e-3,
            design_freq_hz: 1.6e12,
            absorption_table: None,
            table_pressure_atm: 1.0,
            table_temperature_k: 296.0,
            gas_lines: Vec::new(),
            lossless: false,
            pressure_atm: 1.0,
            temperature_k: 296.0,
            fft_len: 1024,
            sample_period_s: None,
            pulse_center_s: 800e-15,
            pulse_spread_s: 100e-15,
        }
    }
}

impl ChannelConfig {
    fn validate(&self) -> Result<()> {
        let sources =
            self.absorption_table.is_some() as usize + !self.gas_lines.is_empty() as usize + self.lossless as usize;
        if sources != 1 {
            return Err(HarnessError::config(
                "channel needs exactly one of absorption_table, gas_lines or lossless = true",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Scaled,
    Unscaled,
}

impl From<Normalization> for NoiseNormalization {
    fn from(n: Normalization) -> Self {
        match n {
            Normalization::Scaled => NoiseNormalization::Scaled,
            Normalization::Unscaled => NoiseNormalization::Unscaled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dof {
    Passband,
    Baseband,
}

impl From<Dof> for DofMode {
    fn from(d: Dof) -> Self {
        match d {
            Dof::Passband => DofMode::Passband,
            Dof::Baseband => DofMode::Baseband,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    Snr,
    Eta,
}

impl From<SweepVariable> for SweepVar {
    fn from(v: SweepVariable) -> Self {
        match v {
            SweepVariable::Snr => SweepVar::Snr,
            SweepVariable::Eta => SweepVar::Eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub normalization: Normalization,
    pub dof: Dof,
    pub sweep: SweepVariable,
    pub grid: Grid,
    /// One curve per value of the other variable (threshold or SNR in dB).
    pub fixed: Vec<f64>,
    /// Monte-Carlo trials per grid point; 0 skips the simulation columns.
    pub trials: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            normalization: Normalization::Scaled,
            dof: Dof::Passband,
            sweep: SweepVariable::Snr,
            grid: Grid::Range {
                start: 0.0,
                stop: 12.0,
                step: 0.5,
            },
            fixed: vec![0.05, 0.1, 0.2],
            trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifyPath {
    Awgn,
    Thz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeconvolutionMode {
    Plain,
    Regularized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub schemes: Vec<String>,
    pub snr_db: Grid,
    pub trials: usize,
    pub symbols: usize,
    pub channel: ClassifyPath,
    /// Symbol-spaced taps kept from the THz channel.
    pub taps: usize,
    pub training_len: usize,
    pub deconvolution: DeconvolutionMode,
    pub epsilon: f64,
    pub genie_variance: bool,
    /// Template database file; defaults to the built-in four schemes.
    pub templates: Option<PathBuf>,
    pub em: EmConfig,
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self {
            schemes: ["BPSK", "QPSK", "8-PSK", "16-QAM"].map(String::from).to_vec(),
            snr_db: Grid::Range {
                start: 0.0,
                stop: 14.0,
                step: 2.0,
            },
            trials: 500,
            symbols: 256,
            channel: ClassifyPath::Awgn,
            taps: 3,
            training_len: 32,
            deconvolution: DeconvolutionMode::Regularized,
            epsilon: 1e-8,
            genie_variance: true,
            templates: None,
            em: EmConfig {
                max_iterations: 50,
                ..EmConfig::default()
            },
        }
    }
}

impl ClassifySection {
    pub fn parsed_schemes(&self) -> Result<Vec<Scheme>> {
        if self.schemes.is_empty() {
            return Err(HarnessError::config("classify.schemes is empty"));
        }
        self.schemes
            .iter()
            .map(|s| s.parse().map_err(|_| HarnessError::config(format!("unknown scheme `{s}`"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    /// Chain file: a label row followed by five probability rows.
    pub chain: Option<PathBuf>,
    pub initial: Vec<f64>,
    pub steps: usize,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            chain: None,
            initial: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub waveform: WaveformConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default)]
    pub predict: PredictSection,
}

/// File contents before the seed and scenario are known; CLI flags fill
/// them in.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Scenario>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    waveform: WaveformConfig,
    #[serde(default)]
    channel: ChannelConfig,
    #[serde(default)]
    detector: DetectorSection,
    #[serde(default)]
    classify: ClassifySection,
    #[serde(default)]
    predict: PredictSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    /// Parses TOML text; relative paths are taken against `base`.
    pub fn from_toml(text: &str, scenario: Scenario, base: &Path, ov: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        Self::from_raw(raw, scenario, base, ov)
    }

    pub fn load(path: &Path, scenario: Scenario, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        let raw: RawConfig = toml::from_str(&text).map_err(|e| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_raw(raw, scenario, base, ov)
    }

    /// Built-in defaults for `scenario`.
    pub fn defaults(scenario: Scenario, ov: &Overrides) -> Result<Self> {
        let raw = RawConfig {
            channel: ChannelConfig {
                lossless: true,
                ..ChannelConfig::default()
            },
            ..RawConfig::default()
        };
        Self::from_raw(raw, scenario, Path::new("."), ov)
    }

    fn from_raw(raw: RawConfig, scenario: Scenario, base: &Path, ov: &Overrides) -> Result<Self> {
        if let Some(s) = raw.scenario {
            if s != scenario {
                return Err(HarnessError::config(format!(
                    "config is for `{}` but `{}` was requested",
                    s.name(),
                    scenario.name()
                )));
            }
        }
        let seed = ov
            .seed
            .or(raw.seed)
            .ok_or_else(|| HarnessError::config("a seed is required (config `seed` or --seed)"))?;
        let mut cfg = ExperimentConfig {
            scenario,
            seed,
            out: ov.out.clone().or(raw.out),
            waveform: raw.waveform,
            channel: raw.channel,
            detector: raw.detector,
            classify: raw.classify,
            predict: raw.predict,
        };
        if let Some(t) = ov.trials {
            match scenario {
                Scenario::ModeDetect => cfg.detector.trials = t,
                Scenario::Classify => cfg.classify.trials = t,
                _ => log::warn!("--trials has no effect on {}", scenario.name()),
            }
        }
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.channel.absorption_table.as_mut() {
            fix(p);
        }
        for g in &mut self.channel.gas_lines {
            fix(&mut g.csv);
            fix(&mut g.sidecar);
        }
        if let Some(p) = self.classify.templates.as_mut() {
            fix(p);
        }
        if let Some(p) = self.predict.chain.as_mut() {
            fix(p);
        }
    }

    /// Structural checks that do not need the input files.
    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        match self.scenario {
            Scenario::ChannelResponse => self.channel.validate()?,
            Scenario::ModeDetect => {
                self.detector.grid.values()?;
                if self.detector.fixed.is_empty() {
                    return Err(HarnessError::config("detector.fixed is empty"));
                }
            }
            Scenario::Classify => {
                let c = &self.classify;
                c.parsed_schemes()?;
                c.snr_db.values()?;
                if c.trials == 0 {
                    return Err(HarnessError::config("classify.trials must be >= 1"));
                }
                if c.channel == ClassifyPath::Thz {
                    self.channel.validate()?;
                }
            }
            Scenario::Predict => {
                if self.predict.chain.is_none() {
                    return Err(HarnessError::config("predict.chain is required"));
                }
                if self.predict.initial.len() != nanorx::predict::STATES {
                    return Err(HarnessError::config("predict.initial needs five entries"));
                }
                if self.predict.steps == 0 {
                    return Err(HarnessError::config("predict.steps must be >= 1"));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
