use nanorx::waveform::{
    add_awgn, constellation, gaussian_pulse, modulate_cbm, GaussianPulseParams, RaisedCosineParams, Scheme,
    SlotConfig,
};
use nanorx::TimeGrid;
use num_complex::Complex64;
use proptest::prelude::*;

fn slots(n_slots: usize) -> SlotConfig {
    SlotConfig::new(1e-12, 40, n_slots).unwrap().with_carrier(5e12, 0.3)
}

#[test]
fn constellations_have_unit_energy_and_distinct_points() {
    for s in Scheme::ALL {
        let c = constellation(s);
        assert_eq!(c.points.len(), s.order());
        assert!((c.average_energy() - 1.0).abs() < 1e-12, "{s}");
        for (i, a) in c.points.iter().enumerate() {
            for b in &c.points[i + 1..] {
                assert!((a - b).norm() > 1e-6);
            }
        }
    }
}

#[test]
fn unit_area_pulse_integrates_to_one() {
    let sp = 20e-15;
    let p = GaussianPulseParams::unit_area(0.0, sp).unwrap();
    let n = 1601;
    let dt = 16.0 * sp / (n - 1) as f64;
    let grid = TimeGrid::new(-8.0 * sp, dt, n).unwrap();
    let s = gaussian_pulse(&p, &grid).unwrap();
    let v = s.samples();
    let trap = dt * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]));
    assert!((trap - 1.0).abs() < 1e-6);
}

#[test]
fn noise_has_requested_spread() {
    let zero = nanorx::SampledSignal::zeros(200_000, 1.0, 0.0).unwrap();
    let y = add_awgn(&zero, 0.7, 3).unwrap();
    let n = y.len() as f64;
    let mean = y.samples().iter().sum::<f64>() / n;
    let var = y.samples().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.01);
    assert!((var / 0.49 - 1.0).abs() < 0.02);
    assert_eq!(y, add_awgn(&zero, 0.7, 3).unwrap());
}

fn symbol() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

proptest! {
    #[test]
    fn carrier_modulation_is_linear(
        x in prop::collection::vec(symbol(), 4),
        y in prop::collection::vec(symbol(), 4),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        alpha in 0.0..0.99f64,
    ) {
        let cfg = slots(4);
        let rc = RaisedCosineParams::new(1e-12, alpha).unwrap();
        let mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let sx = modulate_cbm(&rc, &cfg, &x).unwrap();
        let sy = modulate_cbm(&rc, &cfg, &y).unwrap();
        let sm = modulate_cbm(&rc, &cfg, &mix).unwrap();
        for ((u, v), w) in sx.samples().iter().zip(sy.samples()).zip(sm.samples()) {
            prop_assert!((a * u + b * v - w).abs() <= 1e-12 * (1.0 + w.abs()) * 10.0);
        }
    }

    #[test]
    fn raised_cosine_vanishes_at_other_symbol_instants(k in 1i32..20, alpha in 0.0..0.99f64) {
        let rc = RaisedCosineParams::new(1e-12, alpha).unwrap();
        prop_assert!(rc.eval(k as f64 * 1e-12).abs() < 1e-9);
        prop_assert!((rc.eval(0.0) - 1.0).abs() < 1e-12);
    }
}
