use nalgebra::{Matrix5, RowVector5};
use nanorx::predict::{predict_modulation, step, MarkovChain, StateVector, STATES};
use nanorx::rng;
use proptest::prelude::*;
use rand::Rng;

fn random_chain(seed: u64) -> MarkovChain {
    let mut g = rng::from_seed(seed);
    let mut p = [[0.0; STATES]; STATES];
    for row in p.iter_mut() {
        // a few structural zeros
        for v in row.iter_mut() {
            *v = if g.random::<f64>() < 0.2 { 0.0 } else { g.random::<f64>() };
        }
        row[g.random_range(0..STATES)] += 0.1;
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    MarkovChain::new(p).unwrap()
}

fn random_state(seed: u64) -> StateVector {
    let mut g = rng::stream(seed, 1);
    StateVector::normalized(std::array::from_fn(|_| g.random::<f64>() + 1e-3)).unwrap()
}

fn power_oracle(s: &StateVector, chain: &MarkovChain, k: u32) -> RowVector5<f64> {
    let p = Matrix5::from_fn(|i, j| chain.matrix()[i][j]);
    RowVector5::from_row_slice(s.probabilities()) * p.pow(k)
}

#[test]
fn thousand_chains_stay_on_the_simplex() {
    for seed in 0..1000 {
        let chain = random_chain(seed);
        let out = step(&random_state(seed), &chain, 1 + (seed % 7) as usize).unwrap();
        let p = out.probabilities();
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn matches_matrix_power(seed in any::<u64>(), k in 1u32..30) {
        let chain = random_chain(seed);
        let s = random_state(seed);
        let got = step(&s, &chain, k as usize).unwrap();
        let want = power_oracle(&s, &chain, k);
        for (a, b) in got.probabilities().iter().zip(want.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn chapman_kolmogorov(seed in any::<u64>(), a in 1usize..20, b in 1usize..20) {
        let chain = random_chain(seed);
        let s = random_state(seed);
        let joint = step(&s, &chain, a + b).unwrap();
        let split = step(&step(&s, &chain, a).unwrap(), &chain, b).unwrap();
        for (x, y) in joint.probabilities().iter().zip(split.probabilities()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn prediction_ignores_scale(seed in any::<u64>(), c in 1e-3..1e3f64) {
        let chain = random_chain(seed);
        let s = random_state(seed);
        let scaled = StateVector::normalized(s.probabilities().map(|v| v * c)).unwrap();
        prop_assert_eq!(predict_modulation(&s, &chain), predict_modulation(&scaled, &chain));
    }
}
