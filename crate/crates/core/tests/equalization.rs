use nalgebra::DVector;
use nanorx::equalize::{
    build_convolution_matrix, deconvolve, ls_estimate, CirEstimate, Deconvolution, LsConfig, TrainingBlock,
};
use nanorx::{rng, Error, SampledSignal};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn conv(x: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); x.len() + h.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in h.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

fn pm_one<R: Rng>(g: &mut R, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(if g.random::<bool>() { 1.0 } else { -1.0 }, 0.0))
        .collect()
}

fn cnum() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

#[test]
fn noisy_estimates_follow_gram_inverse() {
    let mut g = rng::from_seed(21);
    let l = 3;
    let train = TrainingBlock::new(pm_one(&mut g, 24), 0);
    let h = vec![
        Complex64::new(0.9, 0.1),
        Complex64::new(-0.4, 0.3),
        Complex64::new(0.2, 0.0),
        Complex64::new(0.05, -0.1),
    ];
    let clean = conv(&train.symbols, &h);
    let rows: Vec<Complex64> = clean[l..train.symbols.len()].to_vec();
    let sigma2 = 0.1;
    let trials = 10_000;
    let mut sq = vec![0.0; l + 1];
    let mut diag = Vec::new();
    for _ in 0..trials {
        let noisy: Vec<Complex64> = rows
            .iter()
            .map(|z| {
                let s = (sigma2 / 2.0f64).sqrt();
                z + Complex64::new(s * g.sample::<f64, _>(StandardNormal), s * g.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let est = ls_estimate(&noisy, &train, l, LsConfig::default()).unwrap();
        for (acc, (a, b)) in sq.iter_mut().zip(est.taps.iter().zip(&h)) {
            *acc += (a - b).norm_sqr();
        }
        diag = est.tap_variances(sigma2);
    }
    for (s, d) in sq.iter().zip(&diag) {
        let emp = s / trials as f64;
        assert!((emp / d - 1.0).abs() < 0.05, "{emp} vs {d}");
    }
}

#[test]
fn short_training_is_rejected() {
    let t = TrainingBlock::new(vec![Complex64::new(1.0, 0.0); 7], 10);
    assert!(matches!(
        ls_estimate(&[Complex64::new(0.0, 0.0); 4], &t, 4, LsConfig::default()),
        Err(Error::RankCondition { span: 6, required: 8 })
    ));
}

proptest! {
    #[test]
    fn noiseless_estimate_is_exact(h in prop::collection::vec(cnum(), 1..6), extra in 0usize..20, seed in any::<u64>()) {
        let l = h.len() - 1;
        let mut g = rng::from_seed(seed);
        let train = TrainingBlock::new(pm_one(&mut g, 2 * l + 1 + extra), 0);
        let full = conv(&train.symbols, &h);
        let r = &full[l..train.symbols.len()];
        match ls_estimate(r, &train, l, LsConfig::default()) {
            Ok(est) => {
                for (a, b) in est.taps.iter().zip(&h) {
                    prop_assert!((a - b).norm() <= 1e-9);
                }
            }
            // short random +-1 blocks can be rank deficient
            Err(Error::RankDeficient | Error::IllConditioned { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn residual_is_orthogonal_to_columns(r in prop::collection::vec(cnum(), 14), seed in any::<u64>()) {
        let l = 2;
        let mut g = rng::from_seed(seed);
        let syms: Vec<Complex64> = (0..16).map(|_| Complex64::new(g.random::<f64>() - 0.5, g.random::<f64>() - 0.5)).collect();
        let train = TrainingBlock::new(syms, 0);
        let est = ls_estimate(&r, &train, l, LsConfig::default()).unwrap();
        let b = build_convolution_matrix(&train, l).unwrap();
        let resid = DVector::from_column_slice(&r) - &b * DVector::from_column_slice(&est.taps);
        let ip = b.adjoint() * &resid;
        let scale = b.norm() * DVector::from_column_slice(&r).norm();
        prop_assert!(ip.iter().all(|z| z.norm() <= 1e-9 * scale.max(1.0)));
    }

    #[test]
    fn deconvolution_undoes_convolution(
        x in prop::collection::vec(cnum(), 8..40),
        tail in prop::collection::vec(cnum(), 0..4),
    ) {
        // dominant first tap keeps the spectrum away from zero
        let mut h = vec![Complex64::new(2.0, 0.0)];
        h.extend(tail.iter().map(|z| z * 0.3));
        let y = conv(&x, &h);
        let r = SampledSignal::new(y, 1.0, 0.0).unwrap();
        let est = CirEstimate::from_taps(h.clone());
        for mode in [Deconvolution::Plain, Deconvolution::Regularized { epsilon: 0.0 }] {
            let back = deconvolve(&r, &est, mode).unwrap();
            let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let err = back.samples()[..x.len()]
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            prop_assert!(err <= 1e-8 * norm);
            prop_assert!(back.samples()[x.len()..].iter().all(|z| z.norm() <= 1e-8 * norm));
        }
    }

    #[test]
    fn guarded_division_stays_finite(x in prop::collection::vec(-1.0..1.0f64, 8..32)) {
        // [1, -1] has a null at DC
        let h = CirEstimate::from_taps(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
        let r = SampledSignal::new(x, 1.0, 0.0).unwrap();
        let is_null = matches!(deconvolve(&r, &h, Deconvolution::Plain), Err(Error::SpectralNull { .. }));
        prop_assert!(is_null);
        let y = deconvolve(&r, &h, Deconvolution::default()).unwrap();
        prop_assert!(y.samples().iter().all(|v| v.is_finite()));
    }
}
