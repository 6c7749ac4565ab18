use std::io::Write;

use nanorx::channel::{
    absorption_coefficient, spreading_loss, AbsorptionSource, AbsorptionTable, ChannelModel, Conditions,
    FrequencyGrid, GasLine, T_STP,
};
use nanorx::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use rustfft::FftPlanner;

fn table() -> AbsorptionTable {
    // a smooth bump around 1.6 THz
    let entries = (0..=200)
        .map(|i| {
            let f = i as f64 * 0.1e12;
            (f, 0.5 + 40.0 * (-((f - 1.6e12) / 0.2e12).powi(2)).exp())
        })
        .collect();
    AbsorptionTable::new(entries, 1.0, 296.0).unwrap()
}

fn model(src: AbsorptionSource) -> ChannelModel {
    let grid = FrequencyGrid::new(1024, 1.0 / 40e12).unwrap();
    ChannelModel::new(1e-3, 1.6e12, src, Conditions::default(), grid).unwrap()
}

fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
    path
}

#[test]
fn round_trip_reproduces_gains() {
    let ch = model(AbsorptionSource::Table(table()));
    let h = ch.frequency_response().unwrap();
    let ir = ch.impulse_response().unwrap();
    let mut spec: Vec<Complex64> = ir.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(spec.len()).process(&mut spec);
    let peak = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (a, b) in spec.iter().zip(&h) {
        assert!((a - b).norm() <= 1e-9 * peak);
    }
    let time_energy: f64 = ir.samples().iter().map(|v| v * v).sum();
    let freq_energy: f64 = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.len() as f64;
    assert!((time_energy / freq_energy - 1.0).abs() < 1e-9);
}

#[test]
fn lossless_channel_only_spreads() {
    let ch = model(AbsorptionSource::lossless());
    let g = ch.gain_at(1e12).unwrap();
    let want = ch.antenna() / (4.0 * std::f64::consts::PI * 1e-6f64).sqrt();
    assert!((g.norm() / want - 1.0).abs() < 1e-12);
}

#[test]
fn table_loads_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_file(
        &dir,
        "k.csv",
        "# synthetic\nfreq_hz, k_per_m\n1.0e12, 0.5\n2.0e12, 1.5\n3.0e12, 1.0\n",
    );
    let t = AbsorptionTable::from_csv(&path, 1.0, 296.0).unwrap();
    assert_eq!(t.entries().len(), 3);
    assert!((t.interpolate(1.5e12).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(t.interpolate(3.5e12), Err(Error::OutOfRange { .. })));
    // doubling pressure doubles k
    let src = AbsorptionSource::Table(t);
    let k = absorption_coefficient(&src, 2.0, 296.0, 2e12).unwrap();
    assert!((k - 3.0).abs() < 1e-12);
}

#[test]
fn gas_line_loads_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_file(&dir, "h2o.csv", "freq_hz,cross_section_m2\n1e12,5e-27\n2e12,5e-27\n");
    let meta = write_file(&dir, "h2o.toml", "Q_per_m3 = 2e25\npressure_atm = 1.0\ntemperature_K = 273.15\n");
    let (line, p, temp) = GasLine::from_files(&csv, &meta).unwrap();
    assert_eq!((p, temp), (1.0, T_STP));
    let k = absorption_coefficient(&AbsorptionSource::Lines(vec![line]), p, temp, 1.5e12).unwrap();
    assert!((k - 0.1).abs() < 1e-12);
}

#[test]
fn malformed_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_file(&dir, "bad.csv", "freq_hz,k_per_m\n1e12,0.1\n2e12,abc\n");
    assert!(matches!(AbsorptionTable::from_csv(&bad, 1.0, 296.0), Err(Error::Parse { line: 3, .. })));
    let unsorted = write_file(&dir, "u.csv", "freq_hz,k_per_m\n2e12,0.1\n1e12,0.2\n");
    assert!(AbsorptionTable::from_csv(&unsorted, 1.0, 296.0).is_err());
    let missing = dir.path().join("nope.csv");
    assert!(AbsorptionTable::from_csv(&missing, 1.0, 296.0).is_err());
}

proptest! {
    #[test]
    fn absorption_gain_is_a_loss(f in 0.0..20e12f64, p in 0.1..3.0f64, temp in 200.0..400.0f64) {
        let ch = ChannelModel::new(
            1e-3,
            1.6e12,
            AbsorptionSource::Table(table()),
            Conditions { pressure_atm: p, temperature_k: temp },
            FrequencyGrid::new(64, 1.0 / 40e12).unwrap(),
        )
        .unwrap();
        let k = absorption_coefficient(ch.absorption(), p, temp, f).unwrap();
        let g = nanorx::channel::molecular_absorption(ch.distance(), k).unwrap();
        prop_assert!(g > 0.0 && g <= 1.0);
    }

    #[test]
    fn spreading_magnitude_ignores_frequency(f1 in 0.0..1e13f64, f2 in 0.0..1e13f64, d in 1e-4..1.0f64) {
        let a = spreading_loss(f1, d).unwrap().norm();
        let b = spreading_loss(f2, d).unwrap().norm();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}
