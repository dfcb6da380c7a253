use rand::seq::index;

use crate::nn::Rng;
use crate::{Error, Result};

/// Candidate classes for a sampled softmax: the distinct batch positives plus
/// a uniform sample without replacement from the other classes, `s` in
/// total, returned in ascending order.
pub fn sample_candidates(classes: usize, s: usize, positives: &[usize], rng: &mut Rng) -> Result<Vec<usize>> {
    if s > classes {
        return Err(Error::Config(format!("candidate count {s} exceeds {classes} classes")));
    }
    let mut chosen = vec![false; classes];
    let mut n_pos = 0;
    for &y in positives {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        if !chosen[y] {
            chosen[y] = true;
            n_pos += 1;
        }
    }
    if n_pos > s {
        return Err(Error::Config(format!(
            "candidate count {s} is below the {n_pos} distinct batch positives"
        )));
    }
    let rest: Vec<usize> = (0..classes).filter(|&c| !chosen[c]).collect();
    for i in index::sample(rng, rest.len(), s - n_pos) {
        chosen[rest[i]] = true;
    }
    Ok((0..classes).filter(|&c| chosen[c]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_count_returns_every_class() {
        let c = sample_candidates(9, 9, &[3, 3, 1], &mut Rng::new(1)).unwrap();
        assert_eq!(c, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn positives_are_kept_and_size_is_exact() {
        let mut rng = Rng::new(2);
        for _ in 0..50 {
            let c = sample_candidates(100, 20, &[5, 99, 5, 0], &mut rng).unwrap();
            assert_eq!(c.len(), 20);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
            for p in [0, 5, 99] {
                assert!(c.binary_search(&p).is_ok());
            }
        }
    }

    #[test]
    fn invalid_requests_error() {
        let mut rng = Rng::new(3);
        assert!(sample_candidates(5, 6, &[], &mut rng).is_err());
        assert!(sample_candidates(5, 1, &[0, 1], &mut rng).is_err());
        assert!(sample_candidates(5, 3, &[7], &mut rng).is_err());
    }

    #[test]
    fn inclusion_frequency_matches_binomial() {
        let (l, s, draws) = (10_000usize, 512usize, 1_000usize);
        let pos: Vec<usize> = (0..64).map(|i| i * 150).collect();
        let mut counts = vec![0u32; l];
        let mut rng = Rng::new(4);
        for _ in 0..draws {
            for c in sample_candidates(l, s, &pos, &mut rng).unwrap() {
                counts[c] += 1;
            }
        }
        let p = (s - pos.len()) as f64 / (l - pos.len()) as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        let mut outside = 0;
        for (c, &n) in counts.iter().enumerate() {
            if pos.contains(&c) {
                assert_eq!(n as usize, draws);
            } else if (f64::from(n) - mean).abs() > 3.0 * sd {
                outside += 1;
            }
        }
        // 3 sigma covers ~99.7% of a binomial; allow for the tails
        assert!(outside < (l as f64 * 0.006) as usize, "{outside} labels outside 3 sigma");
    }
}
