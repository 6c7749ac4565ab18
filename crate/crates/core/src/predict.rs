//! Five-state channel-quality Markov chain used to predict the next
//! modulation scheme: `s[k+1] = s[k] P`, pick the most likely state.

use std::path::Path;

use crate::error::{Error, Result};
use crate::waveform::Scheme;

pub const STATES: usize = 5;
const TOL: f64 = 1e-12;

pub type Matrix = [[f64; STATES]; STATES];

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    p: Matrix,
    labels: [Scheme; STATES],
}

impl MarkovChain {
    /// Checks entries lie in `[0, 1]` and rows sum to one within 1e-12.
    pub fn new(p: Matrix) -> Result<Self> {
        for (i, row) in p.iter().enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::NotStochastic(format!("row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > TOL {
                return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { p, labels: Scheme::ALL })
    }

    pub fn with_labels(mut self, labels: [Scheme; STATES]) -> Self {
        self.labels = labels;
        self
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn labels(&self) -> &[Scheme; STATES] {
        &self.labels
    }

    /// Parses a label row followed by five rows of five whitespace-separated
    /// probabilities. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (lno, label_line) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "empty chain file".into(),
        })?;
        let labels: Vec<Scheme> = label_line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_>>()?;
        let labels: [Scheme; STATES] = labels.try_into().map_err(|v: Vec<Scheme>| Error::Parse {
            line: lno,
            msg: format!("expected {STATES} labels, found {}", v.len()),
        })?;
        let mut p = [[0.0; STATES]; STATES];
        for row in p.iter_mut() {
            let (lno, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: format!("expected {STATES} matrix rows"),
            })?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: lno,
                        msg: format!("bad probability `{t}`"),
                    })
                })
                .collect::<Result<_>>()?;
            if vals.len() != STATES {
                return Err(Error::Parse {
                    line: lno,
                    msg: format!("expected {STATES} entries, found {}", vals.len()),
                });
            }
            row.copy_from_slice(&vals);
        }
        if let Some((lno, _)) = lines.next() {
            return Err(Error::Parse {
                line: lno,
                msg: "trailing content after matrix".into(),
            });
        }
        Ok(Self::new(p)?.with_labels(labels))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector([f64; STATES]);

impl StateVector {
    pub fn new(p: [f64; STATES]) -> Result<Self> {
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("state probabilities must be finite and >= 0"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > TOL {
            return Err(Error::invalid(format!("state probabilities sum to {sum}")));
        }
        Ok(Self(p))
    }

    /// Certainly in state `i`.
    pub fn unit(i: usize) -> Self {
        let mut p = [0.0; STATES];
        p[i] = 1.0;
        Self(p)
    }

    /// Scales non-negative weights to sum to one.
    pub fn normalized(w: [f64; STATES]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || !(sum > 0.0) {
            return Err(Error::invalid("weights must be >= 0 with a positive sum"));
        }
        Ok(Self(w.map(|v| v / sum)))
    }

    pub fn probabilities(&self) -> &[f64; STATES] {
        &self.0
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..STATES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// `s P^k`, renormalized after every multiplication.
pub fn step(s: &StateVector, chain: &MarkovChain, k: usize) -> Result<StateVector> {
    if k == 0 {
        return Err(Error::invalid("step count must be >= 1"));
    }
    let p = chain.matrix();
    let mut v = s.0;
    for _ in 0..k {
        let mut next = [0.0; STATES];
        for (i, &vi) in v.iter().enumerate() {
            for (j, n) in next.iter_mut().enumerate() {
                *n += vi * p[i][j];
            }
        }
        let sum: f64 = next.iter().sum();
        v = next.map(|x| x / sum);
    }
    Ok(StateVector(v))
}

/// Most likely state after one step.
pub fn predict_modulation(s: &StateVector, chain: &MarkovChain) -> usize {
    step(s, chain, 1).map(|v| v.argmax()).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: Matrix = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ];

    #[test]
    fn identity_and_uniform_chains() {
        let id = MarkovChain::new(IDENTITY).unwrap();
        let s = StateVector::new([0.1, 0.2, 0.3, 0.25, 0.15]).unwrap();
        assert_eq!(step(&s, &id, 9).unwrap(), s);
        assert_eq!(predict_modulation(&StateVector::unit(3), &id), 3);
        let uni = MarkovChain::new([[0.2; STATES]; STATES]).unwrap();
        let out = step(&s, &uni, 1).unwrap();
        assert!(out.probabilities().iter().all(|v| (v - 0.2).abs() < 1e-15));
        assert_eq!(predict_modulation(&s, &uni), 0);
    }

    #[test]
    fn hand_computed_prediction() {
        let mut p = [[0.2; STATES]; STATES];
        p[0] = [0.1, 0.6, 0.1, 0.1, 0.1];
        let chain = MarkovChain::new(p).unwrap();
        let s = StateVector::new([0.7, 0.3, 0.0, 0.0, 0.0]).unwrap();
        let next = step(&s, &chain, 1).unwrap();
        let want = [0.13, 0.48, 0.13, 0.13, 0.13];
        for (a, b) in next.probabilities().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(predict_modulation(&s, &chain), 1);
    }

    #[test]
    fn rejects_non_stochastic() {
        let mut p = IDENTITY;
        p[2][2] = 0.9;
        assert!(matches!(MarkovChain::new(p), Err(Error::NotStochastic(_))));
        p[2] = [1.1, -0.1, 0.0, 0.0, 0.0];
        assert!(MarkovChain::new(p).is_err());
    }

    #[test]
    fn parses_chain_file() {
        let text = "# cqi chain\nBPSK QPSK 8-PSK 16-PSK 16-QAM\n\
                    0.5 0.5 0 0 0\n0.25 0.5 0.25 0 0\n0 0.25 0.5 0.25 0\n0 0 0.25 0.5 0.25\n0 0 0 0.5 0.5\n";
        let chain = MarkovChain::parse(text).unwrap();
        assert_eq!(chain.labels()[4], Scheme::Qam16);
        assert_eq!(chain.matrix()[1][2], 0.25);
        assert!(matches!(
            MarkovChain::parse("BPSK QPSK\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad_row = text.replace("0 0 0 0.5 0.5", "0 0 0 0.5");
        assert!(matches!(MarkovChain::parse(&bad_row), Err(Error::Parse { line: 7, .. })));
    }
}
