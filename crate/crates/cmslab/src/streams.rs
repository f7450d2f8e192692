//! Element-probability models and deterministic i.i.d. stream sampling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::util::kahan_sum;

/// Probability model over element ids `0..m`.
///
/// Text form: `uniform:m` | `step:mh,mc,G` | `zipf:m,beta`.
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    Uniform {
        m: usize,
    },
    /// Hot elements occupy ids `[0, m_hot)` and are `gap` times more
    /// probable than cold ones.
    Step {
        m_hot: usize,
        m_cold: usize,
        gap: f64,
    },
    /// Element of rank `i` (id `i - 1`) has probability proportional to
    /// `1 / i^beta`.
    Zipf {
        m: usize,
        beta: f64,
    },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("malformed distribution spec `{0}`")]
    Malformed(String),
    #[error("distribution needs at least one element")]
    EmptySupport,
    #[error("step distribution needs at least one hot and one cold element")]
    EmptyStepClass,
    #[error("gap factor {0} must be greater than 1")]
    GapNotAboveOne(f64),
    #[error("zipf skewness {0} must be finite and non-negative")]
    InvalidSkew(f64),
}

impl Distribution {
    pub fn uniform(m: usize) -> Result<Self, DistributionError> {
        if m == 0 {
            return Err(DistributionError::EmptySupport);
        }
        Ok(Distribution::Uniform { m })
    }

    pub fn step(m_hot: usize, m_cold: usize, gap: f64) -> Result<Self, DistributionError> {
        if m_hot == 0 || m_cold == 0 {
            return Err(DistributionError::EmptyStepClass);
        }
        if !gap.is_finite() || gap <= 1.0 {
            return Err(DistributionError::GapNotAboveOne(gap));
        }
        Ok(Distribution::Step { m_hot, m_cold, gap })
    }

    pub fn zipf(m: usize, beta: f64) -> Result<Self, DistributionError> {
        if m == 0 {
            return Err(DistributionError::EmptySupport);
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(DistributionError::InvalidSkew(beta));
        }
        Ok(Distribution::Zipf { m, beta })
    }

    /// Parses `uniform:m` | `step:mh,mc,G` | `zipf:m,beta`.
    pub fn parse(text: &str) -> Result<Self, DistributionError> {
        let malformed = || DistributionError::Malformed(text.to_string());
        let (name, args) = text.trim().split_once(':').ok_or_else(malformed)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        match (name.trim(), args.as_slice()) {
            ("uniform", [m]) => Distribution::uniform(m.parse().map_err(|_| malformed())?),
            ("step", [mh, mc, g]) => Distribution::step(
                mh.parse().map_err(|_| malformed())?,
                mc.parse().map_err(|_| malformed())?,
                g.parse().map_err(|_| malformed())?,
            ),
            ("zipf", [m, beta]) => Distribution::zipf(
                m.parse().map_err(|_| malformed())?,
                beta.parse().map_err(|_| malformed())?,
            ),
            _ => Err(malformed()),
        }
    }

    /// Number of distinct elements.
    pub fn num_elements(&self) -> usize {
        match *self {
            Distribution::Uniform { m } => m,
            Distribution::Step { m_hot, m_cold, .. } => m_hot + m_cold,
            Distribution::Zipf { m, .. } => m,
        }
    }

    /// Per-element probabilities, id order. Sums to 1 within 1e-12 and is
    /// non-increasing for `Step` and `Zipf`.
    pub fn probabilities(&self) -> Vec<f64> {
        match *self {
            Distribution::Uniform { m } => vec![1.0 / m as f64; m],
            Distribution::Step { m_hot, m_cold, gap } => {
                let q = 1.0 / (gap * m_hot as f64 + m_cold as f64);
                let mut p = vec![gap * q; m_hot];
                p.resize(m_hot + m_cold, q);
                p
            }
            Distribution::Zipf { m, beta } => {
                let weights: Vec<f64> = (1..=m).map(|i| (i as f64).powf(-beta)).collect();
                let norm = kahan_sum(weights.iter().copied());
                weights.into_iter().map(|w| w / norm).collect()
            }
        }
    }
}

impl FromStr for Distribution {
    type Err = DistributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Distribution::parse(s)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Distribution::Uniform { m } => write!(f, "uniform:{m}"),
            Distribution::Step { m_hot, m_cold, gap } => {
                write!(f, "step:{m_hot},{m_cold},{gap}")
            }
            Distribution::Zipf { m, beta } => write!(f, "zipf:{m},{beta}"),
        }
    }
}

/// A stream to sample: distribution, length, seed.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamSpec {
    pub distribution: Distribution,
    pub length: u64,
    pub seed: u64,
}

/// Walker/Vose alias table; one uniform index plus one uniform real per draw.
#[derive(Clone, Debug)]
struct AliasTable {
    cutoff: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    fn new(probabilities: &[f64]) -> AliasTable {
        let m = probabilities.len();
        assert!(m >= 1 && m <= u32::MAX as usize);
        let mut cutoff = vec![0.0f64; m];
        let mut alias: Vec<u32> = (0..m as u32).collect();
        let mut scaled: Vec<f64> = probabilities.iter().map(|&p| p * m as f64).collect();
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            cutoff[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1.0 up to rounding residue.
        for i in small.into_iter().chain(large) {
            cutoff[i] = 1.0;
        }
        AliasTable { cutoff, alias }
    }

    #[inline]
    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        let j = rng.random_range(0..self.cutoff.len());
        if rng.random::<f64>() < self.cutoff[j] {
            j as u32
        } else {
            self.alias[j]
        }
    }
}

/// Endless i.i.d. sampler over element ids, deterministic in the seed.
#[derive(Clone, Debug)]
pub struct Sampler {
    table: AliasTable,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(distribution: &Distribution, seed: u64) -> Sampler {
        Sampler {
            table: AliasTable::new(&distribution.probabilities()),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Iterator for Sampler {
    type Item = u32;

    #[inline]
    fn next(&mut self) -> Option<u32> {
        Some(self.table.sample(&mut self.rng))
    }
}

/// Materializes the stream described by `spec`.
pub fn sample_stream(spec: &StreamSpec) -> Vec<u32> {
    Sampler::new(&spec.distribution, spec.seed)
        .take(spec.length as usize)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn uniform_probabilities() {
        assert_eq!(
            Distribution::uniform(4).unwrap().probabilities(),
            vec![0.25; 4]
        );
    }

    #[test]
    fn step_masses_balance_when_gap_matches_ratio() {
        // 10x more cold elements, each hot element 10x more likely: both
        // classes carry half the input mass.
        let d = Distribution::step(100, 1000, 10.0).unwrap();
        let p = d.probabilities();
        let hot: f64 = p[..100].iter().sum();
        let cold: f64 = p[100..].iter().sum();
        assert_close(hot, 0.5, 1e-12);
        assert_close(cold, 0.5, 1e-12);
        assert_close(p[0] / p[100], 10.0, 1e-12);
    }

    #[test]
    fn zipf_zero_skew_is_uniform() {
        let p = Distribution::zipf(50, 0.0).unwrap().probabilities();
        for &x in &p {
            assert_close(x, 1.0 / 50.0, 1e-15);
        }
    }

    #[test]
    fn zipf_small_case_matches_hand_computation() {
        // beta = 1, m = 3: weights 1, 1/2, 1/3; norm 11/6.
        let p = Distribution::zipf(3, 1.0).unwrap().probabilities();
        assert_close(p[0], 6.0 / 11.0, 1e-15);
        assert_close(p[1], 3.0 / 11.0, 1e-15);
        assert_close(p[2], 2.0 / 11.0, 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one_and_are_sorted() {
        let cases = [
            Distribution::uniform(100_000).unwrap(),
            Distribution::step(137, 99_863, 17.5).unwrap(),
            Distribution::zipf(100_000, 0.7).unwrap(),
            Distribution::zipf(12_345, 1.3).unwrap(),
        ];
        for d in cases {
            let p = d.probabilities();
            assert_eq!(p.len(), d.num_elements());
            let total = kahan_sum(p.iter().copied());
            assert_close(total, 1.0, 1e-12);
            assert!(
                p.windows(2).all(|w| w[0] >= w[1]),
                "not non-increasing: {d}"
            );
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert_eq!(
            Distribution::uniform(0),
            Err(DistributionError::EmptySupport)
        );
        assert_eq!(
            Distribution::step(0, 10, 2.0),
            Err(DistributionError::EmptyStepClass)
        );
        assert_eq!(
            Distribution::step(10, 0, 2.0),
            Err(DistributionError::EmptyStepClass)
        );
        assert_eq!(
            Distribution::step(10, 10, 1.0),
            Err(DistributionError::GapNotAboveOne(1.0))
        );
        assert_eq!(
            Distribution::zipf(10, -0.5),
            Err(DistributionError::InvalidSkew(-0.5))
        );
    }

    #[test]
    fn parse_and_display_round_trip() {
        for text in ["uniform:818", "step:100,1000,10", "zipf:1000,0.7"] {
            let d = Distribution::parse(text).unwrap();
            assert_eq!(d.to_string(), text);
        }
        assert_eq!(
            Distribution::parse("step: 100 , 1000 , 10"),
            Ok(Distribution::Step {
                m_hot: 100,
                m_cold: 1000,
                gap: 10.0
            })
        );
        for bad in [
            "",
            "uniform",
            "uniform:",
            "poisson:4",
            "zipf:10",
            "step:1,2",
            "uniform:x",
        ] {
            assert!(Distribution::parse(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn empty_stream() {
        let spec = StreamSpec {
            distribution: Distribution::uniform(5).unwrap(),
            length: 0,
            seed: 1,
        };
        assert!(sample_stream(&spec).is_empty());
    }

    #[test]
    fn equal_seeds_reproduce_bit_identically() {
        let spec = StreamSpec {
            distribution: Distribution::zipf(100, 0.7).unwrap(),
            length: 10_000,
            seed: 77,
        };
        assert_eq!(sample_stream(&spec), sample_stream(&spec));
        let other = StreamSpec {
            seed: 78,
            ..spec.clone()
        };
        assert_ne!(sample_stream(&spec), sample_stream(&other));
    }

    fn histogram(ids: &[u32], m: usize) -> Vec<u64> {
        let mut h = vec![0u64; m];
        for &id in ids {
            h[id as usize] += 1;
        }
        h
    }

    #[test]
    fn uniform_frequencies_concentrate() {
        let m = 100;
        let n = 1_000_000u64;
        let spec = StreamSpec {
            distribution: Distribution::uniform(m).unwrap(),
            length: n,
            seed: 42,
        };
        let h = histogram(&sample_stream(&spec), m);
        let expect = n as f64 / m as f64;
        let sigma = (expect * (1.0 - 1.0 / m as f64)).sqrt();
        for &count in &h {
            assert!(
                (count as f64 - expect).abs() < 5.0 * sigma,
                "count {count} too far from {expect}"
            );
        }
    }

    #[test]
    fn zipf_top_rank_frequency_matches_probability() {
        let m = 1000;
        let n = 1_000_000u64;
        let d = Distribution::zipf(m, 0.7).unwrap();
        let p = d.probabilities();
        let spec = StreamSpec {
            distribution: d,
            length: n,
            seed: 42,
        };
        let h = histogram(&sample_stream(&spec), m);
        let observed = h[0] as f64 / n as f64;
        assert!(
            (observed - p[0]).abs() / p[0] < 0.05,
            "rank-1 frequency {observed} vs probability {}",
            p[0]
        );
    }

    #[test]
    fn chi_square_sanity() {
        let m = 100usize;
        let n = 1_000_000u64;
        for d in [
            Distribution::uniform(m).unwrap(),
            Distribution::step(10, 90, 10.0).unwrap(),
            Distribution::zipf(m, 0.7).unwrap(),
        ] {
            let p = d.probabilities();
            let spec = StreamSpec {
                distribution: d.clone(),
                length: n,
                seed: 4242,
            };
            let h = histogram(&sample_stream(&spec), m);
            let chi2: f64 = h
                .iter()
                .zip(&p)
                .map(|(&obs, &pi)| {
                    let exp = pi * n as f64;
                    (obs as f64 - exp).powi(2) / exp
                })
                .sum();
            // df = 99; mean 99, sd ~ sqrt(198); 5 sigma above the mean.
            assert!(chi2 < 170.0, "chi-square {chi2} too large for {d}");
        }
    }
}
