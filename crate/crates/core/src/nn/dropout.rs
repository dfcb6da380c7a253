use super::{Matrix, Rng};
use crate::{Error, Result};

/// Inverted dropout over a vector.
///
/// Returns the output and the applied mask; mask entries are `0` for dropped
/// units and `1 / (1 - rate)` for survivors (all ones at inference).
pub fn dropout_apply(
    x: &[f64],
    rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
        .collect();
    let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((out, mask))
}

/// In-place inverted dropout over a matrix; returns the mask.
pub fn dropout_matrix(x: &mut Matrix, rate: f64, rng: &mut Rng) -> Result<Matrix> {
    check_rate(rate)?;
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Matrix::zeros(x.rows(), x.cols());
    for (v, m) in x.as_mut_slice().iter_mut().zip(mask.as_mut_slice()) {
        if rng.uniform() < rate {
            *v = 0.0;
        } else {
            *m = keep;
            *v *= keep;
        }
    }
    Ok(mask)
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_and_inference_are_identity() {
        let x = [1.0, -2.0, 3.5];
        let mut rng = Rng::new(1);
        assert_eq!(dropout_apply(&x, 0.0, true, &mut rng).unwrap().0, x);
        let (out, mask) = dropout_apply(&x, 0.5, false, &mut rng).unwrap();
        assert_eq!(out, x);
        assert_eq!(mask, vec![1.0; 3]);
    }

    #[test]
    fn rejects_rate_of_one() {
        let mut rng = Rng::new(1);
        assert!(matches!(
            dropout_apply(&[1.0], 1.0, true, &mut rng),
            Err(Error::InvalidRate(_))
        ));
    }

    #[test]
    fn fixed_seed_gives_fixed_mask() {
        let x = vec![1.0; 64];
        let a = dropout_apply(&x, 0.5, true, &mut Rng::new(9)).unwrap();
        let b = dropout_apply(&x, 0.5, true, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expected_output_equals_input() {
        let x = [0.3, -1.2, 2.0, 5.0];
        let mut rng = Rng::new(3);
        let trials = 100_000;
        let mut acc = [0.0; 4];
        for _ in 0..trials {
            let (out, _) = dropout_apply(&x, 0.5, true, &mut rng).unwrap();
            for (a, o) in acc.iter_mut().zip(out) {
                *a += o;
            }
        }
        for (a, v) in acc.iter().zip(x) {
            let mean = a / trials as f64;
            assert!((mean - v).abs() <= 0.02 * v.abs(), "mean {mean} vs {v}");
        }
    }
}
