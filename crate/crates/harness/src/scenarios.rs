//! Scenario runners. Each builds its pipeline from the configuration,
//! computes every table in memory and returns the files to write, so a
//! failure leaves no partial output behind.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nanorx::channel::{AbsorptionSource, AbsorptionTable, ChannelModel, Conditions, FrequencyGrid, GasLine};
use nanorx::classify::{self, ClassifyChannel, PccConfig, TemplateDatabase};
use nanorx::detector::{self, ModeDetection, SweepSpec};
use nanorx::equalize::Deconvolution;
use nanorx::predict::{self, MarkovChain, StateVector};
use nanorx::rng;
use nanorx::waveform::{self, GaussianPulseParams, RaisedCosineParams, SlotConfig};
use nanorx::SampledSignal;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{ClassifyPath, DeconvolutionMode, ExperimentConfig, PulseScale, Scenario, WaveformConfig};
use crate::error::{HarnessError, Result};
use crate::plots;

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub body: Vec<u8>,
}

impl Artifact {
    fn new(name: &str, body: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.to_string(),
            body: body.into(),
        }
    }

    pub fn is_csv(&self) -> bool {
        self.name.ends_with(".csv")
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    cfg.validate()?;
    let mut out = match cfg.scenario {
        Scenario::ChannelResponse => channel_response(cfg)?,
        Scenario::ModeDetect => mode_detect(cfg)?,
        Scenario::Classify => classify_sweep(cfg)?,
        Scenario::Predict => predict_chain(cfg)?,
    };
    out.push(Artifact::new("plot.py", plots::script(cfg.scenario)));
    out.push(Artifact::new("metadata.toml", metadata(cfg)));
    Ok(out)
}

#[derive(Serialize)]
struct Metadata<'a> {
    toolkit: Toolkit,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Toolkit {
    name: &'static str,
    version: &'static str,
}

fn metadata(cfg: &ExperimentConfig) -> String {
    let m = Metadata {
        toolkit: Toolkit {
            name: "nanorx",
            version: env!("CARGO_PKG_VERSION"),
        },
        config: cfg,
    };
    format!(
        "# resolved configuration; rerun with this file to reproduce the tables\n{}",
        toml::to_string(&m).unwrap_or_default()
    )
}

fn csv<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> nanorx::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Slot layout and carrier from the waveform block.
pub fn slot_config(w: &WaveformConfig) -> Result<SlotConfig> {
    Ok(SlotConfig::new(w.period_s, w.samples_per_slot, w.slots)?.with_carrier(w.carrier_hz, w.carrier_phase_rad))
}

/// Pulse-based and carrier-based windows for the configured BPSK symbols.
pub fn waveforms(w: &WaveformConfig) -> Result<(SampledSignal, SampledSignal)> {
    let slots = slot_config(w)?;
    let pulse = match w.pulse_scale {
        PulseScale::UnitPeak => GaussianPulseParams::unit_peak(slots.pulse_offset, w.pulse_spread_s)?,
        PulseScale::UnitArea => GaussianPulseParams::unit_area(slots.pulse_offset, w.pulse_spread_s)?,
    };
    let rc = RaisedCosineParams::new(w.period_s, w.rolloff)?;
    let bits: Vec<bool> = w.symbols.iter().map(|&b| b > 0.0).collect();
    let syms: Vec<Complex64> = w.symbols.iter().map(|&b| Complex64::new(b, 0.0)).collect();
    let s0 = waveform::modulate_pbm(&pulse, &slots, &bits)?;
    let s1 = waveform::modulate_cbm(&rc, &slots, &syms)?;
    Ok((s0, s1))
}

pub fn mode_detection(cfg: &ExperimentConfig) -> Result<ModeDetection> {
    let (s0, s1) = waveforms(&cfg.waveform)?;
    Ok(ModeDetection::new(&s0, &s1)?
        .with_normalization(cfg.detector.normalization.into())
        .with_dof_mode(cfg.detector.dof.into()))
}

fn require_file(path: &std::path::Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(HarnessError::config(format!("{what} `{}` not found", path.display())));
    }
    Ok(())
}

/// Absorption source named by the channel block; input files are read here.
pub fn absorption(cfg: &ExperimentConfig) -> Result<AbsorptionSource> {
    let c = &cfg.channel;
    if let Some(path) = &c.absorption_table {
        require_file(path, "absorption table")?;
        return Ok(AbsorptionSource::Table(AbsorptionTable::from_csv(
            path,
            c.table_pressure_atm,
            c.table_temperature_k,
        )?));
    }
    if !c.gas_lines.is_empty() {
        for g in &c.gas_lines {
            require_file(&g.csv, "gas line table")?;
            require_file(&g.sidecar, "gas line sidecar")?;
        }
        let lines = c
            .gas_lines
            .iter()
            .map(|g| {
                let (line, p, t) = GasLine::from_files(&g.csv, &g.sidecar)?;
                log::debug!("{}: recorded at {p} atm, {t} K", g.csv.display());
                Ok(line)
            })
            .collect::<nanorx::Result<_>>()?;
        return Ok(AbsorptionSource::Lines(lines));
    }
    if c.lossless {
        return Ok(AbsorptionSource::lossless());
    }
    Err(HarnessError::config("no absorption source configured"))
}

pub fn channel_model(cfg: &ExperimentConfig) -> Result<ChannelModel> {
    let c = &cfg.channel;
    let ts = c.sample_period_s.unwrap_or_else(|| cfg.waveform.sample_period());
    let grid = FrequencyGrid::new(c.fft_len, ts)?;
    Ok(ChannelModel::new(
        c.distance_m,
        c.design_freq_hz,
        absorption(cfg)?,
        Conditions {
            pressure_atm: c.pressure_atm,
            temperature_k: c.temperature_k,
        },
        grid,
    )?)
}

fn channel_response(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let ch = channel_model(cfg)?;
    let grid = ch.grid();
    let h = ch.frequency_response()?;
    let mut fr = String::from("freq_hz,re,im,magnitude_db\n");
    for (k, g) in h.iter().enumerate().take(grid.len / 2 + 1) {
        let db = 20.0 * g.norm().max(f64::MIN_POSITIVE).log10();
        writeln!(fr, "{:e},{:e},{:e},{:.6}", grid.bin_freq(k), g.re, g.im, db).ok();
    }
    let ir = ch.impulse_response()?;
    let ir_csv = csv(|b| ir.write_csv(b))?;

    let c = &cfg.channel;
    let pulse = GaussianPulseParams::unit_peak(c.pulse_center_s, c.pulse_spread_s)?;
    let tgrid = nanorx::TimeGrid::new(0.0, grid.sample_period, grid.len)?;
    let x = waveform::gaussian_pulse(&pulse, &tgrid)?;
    let y = ch.filter(&x)?;
    let mut pr = String::from("t_s,input,output\n");
    for ((t, a), b) in x.times().zip(x.samples()).zip(y.samples()) {
        writeln!(pr, "{t:e},{a:e},{b:e}").ok();
    }
    let (e_in, e_out) = (x.energy(), y.energy());
    let (lo, hi) = y.energy_support(0.99);
    let summary = format!(
        "input_energy,output_energy,energy_ratio,delay_s,support_start_s,support_end_s\n{e_in:e},{e_out:e},{:e},{:e},{lo:e},{hi:e}\n",
        e_out / e_in,
        ch.delay()
    );
    Ok(vec![
        Artifact::new("frequency_response.csv", fr),
        Artifact::new("impulse_response.csv", ir_csv),
        Artifact::new("pulse_response.csv", pr),
        Artifact::new("summary.csv", summary),
    ])
}

fn mode_detect(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let d = &cfg.detector;
    let md = mode_detection(cfg)?;
    let grid = d.grid.values()?;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let mut out = Vec::new();

    let (s0, s1) = waveforms(&cfg.waveform)?;
    let mut wf = String::from("t_s,pbm,cbm\n");
    for ((t, a), b) in s0.times().zip(s0.samples()).zip(s1.samples()) {
        writeln!(wf, "{t:e},{a:e},{b:e}").ok();
    }
    out.push(Artifact::new("waveforms.csv", wf));

    let mut pareto = String::from("fixed,crossing,pe1,pe2\n");
    for (k, &fixed) in d.fixed.iter().enumerate() {
        let spec = SweepSpec {
            variable: d.sweep.into(),
            grid: grid.clone(),
            fixed,
        };
        let rows = md.error_sweep(&spec, d.trials, rng::derive_seed(cfg.seed, k as u64))?;
        out.push(Artifact::new(
            &format!("sweep_{k}.csv"),
            csv(|b| detector::write_sweep_csv(&rows, b))?,
        ));
        let crossings = if hi > lo {
            md.crossings(d.sweep.into(), fixed, lo, hi, 400, 1e-6)?
        } else {
            Vec::new()
        };
        if crossings.is_empty() {
            log::warn!("no Pe1 = Pe2 crossing on [{lo}, {hi}] for fixed value {fixed}");
            writeln!(pareto, "{fixed},,,").ok();
        }
        for c in crossings {
            writeln!(pareto, "{fixed},{:.6},{:.6e},{:.6e}", c.value, c.pe1, c.pe2).ok();
        }
    }
    out.push(Artifact::new("pareto.csv", pareto));
    Ok(out)
}

/// Classification sweep settings and template database from the config.
pub fn pcc_setup(cfg: &ExperimentConfig) -> Result<(PccConfig, TemplateDatabase)> {
    let c = &cfg.classify;
    let schemes = c.parsed_schemes()?;
    let db = match &c.templates {
        Some(p) => {
            require_file(p, "template database")?;
            TemplateDatabase::load(p)?
        }
        None => TemplateDatabase::for_schemes(&schemes),
    };
    let channel = match c.channel {
        ClassifyPath::Awgn => ClassifyChannel::Awgn,
        ClassifyPath::Thz => {
            let bb = channel_model(cfg)?.baseband_taps(cfg.waveform.carrier_hz, cfg.waveform.period_s, c.taps)?;
            log::info!(
                "baseband channel: {} taps holding {:.4} of the band energy",
                bb.taps.len(),
                bb.captured_fraction
            );
            ClassifyChannel::Thz {
                taps: bb.taps,
                training_len: c.training_len,
                deconvolution: match c.deconvolution {
                    DeconvolutionMode::Plain => Deconvolution::Plain,
                    DeconvolutionMode::Regularized => Deconvolution::Regularized { epsilon: c.epsilon },
                },
            }
        }
    };
    let pcc = PccConfig {
        schemes,
        snr_db: c.snr_db.values()?,
        trials: c.trials,
        symbols: c.symbols,
        channel,
        em: c.em,
        genie_variance: c.genie_variance,
        seed: cfg.seed,
    };
    pcc.validate()?;
    Ok((pcc, db))
}

fn classify_sweep(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let (pcc, db) = pcc_setup(cfg)?;
    let (points, records) = classify::pcc_sweep(&pcc, &db)?;

    let mut table = String::from("scheme,snr_db,pcc,std_err,correct,trials\n");
    for p in &points {
        writeln!(
            table,
            "{},{},{:.6},{:.6},{},{}",
            p.scheme.key(),
            p.snr_db,
            p.pcc(),
            p.std_err(),
            p.correct,
            p.trials
        )
        .ok();
    }

    // mean D_sym per (true scheme, SNR, template), in grid order
    let mut sums: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in &records {
        let si = pcc.schemes.iter().position(|&s| s == r.true_scheme).unwrap_or(0);
        let gi = pcc.snr_db.iter().position(|&v| v == r.snr_db).unwrap_or(0);
        let acc = sums.entry((si, gi)).or_insert_with(|| vec![0.0; db.len()]);
        for (a, d) in acc.iter_mut().zip(&r.divergences) {
            *a += d;
        }
    }
    let mut kld = String::from("true_scheme,snr_db,template,mean_dsym\n");
    for ((si, gi), acc) in &sums {
        for (t, a) in db.templates().iter().zip(acc) {
            writeln!(
                kld,
                "{},{},{},{:.10e}",
                pcc.schemes[*si].key(),
                pcc.snr_db[*gi],
                t.scheme.key(),
                a / pcc.trials as f64
            )
            .ok();
        }
    }

    let mut pair = String::from("snr_db,template_a,template_b,dsym\n");
    for &snr in &pcc.snr_db {
        let d = classify::template_divergences(&db, 10f64.powf(-snr / 10.0) / 2.0)?;
        for (i, a) in db.templates().iter().enumerate() {
            for (j, b) in db.templates().iter().enumerate().skip(i + 1) {
                writeln!(pair, "{snr},{},{},{:.10e}", a.scheme.key(), b.scheme.key(), d[i][j]).ok();
            }
        }
    }

    Ok(vec![
        Artifact::new("pcc.csv", table),
        Artifact::new("kld_vs_snr.csv", kld),
        Artifact::new("template_dsym.csv", pair),
        Artifact::new("trials.csv", csv(|b| classify::write_trials_csv(&records, &db, b))?),
    ])
}

fn predict_chain(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let p = &cfg.predict;
    let path = p
        .chain
        .as_ref()
        .ok_or_else(|| HarnessError::config("predict.chain is required"))?;
    require_file(path, "chain file")?;
    let chain = MarkovChain::load(path)?;
    let init: [f64; predict::STATES] = p
        .initial
        .clone()
        .try_into()
        .map_err(|_| HarnessError::config("predict.initial needs five entries"))?;
    let s0 = StateVector::normalized(init)?;
    let mut out = String::from("step");
    for l in chain.labels() {
        write!(out, ",p_{}", l.key()).ok();
    }
    out.push_str(",predicted\n");
    let mut row = |k: usize, s: &StateVector| {
        write!(out, "{k}").ok();
        for v in s.probabilities() {
            write!(out, ",{v:.12}").ok();
        }
        writeln!(out, ",{}", chain.labels()[s.argmax()]).ok();
    };
    row(0, &s0);
    for k in 1..=p.steps {
        row(k, &predict::step(&s0, &chain, k)?);
    }
    Ok(vec![Artifact::new("trajectory.csv", out)])
}

/// Writes all artifacts into `dir`, creating it if needed.
pub fn write_artifacts(dir: &std::path::Path, artifacts: &[Artifact]) -> Result<()> {
    let io = |path: &std::path::Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.body).map_err(io(&path))?;
    }
    Ok(())
}
