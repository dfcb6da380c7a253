use super::{Matrix, Rng};
use crate::{Error, Result};

/// He initialization: Gaussian entries with mean 0 and variance `2 / fan_in`.
pub fn he_init(fan_in: usize, rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    if fan_in == 0 {
        return Err(Error::Config("fan_in must be at least 1".into()));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| std * rng.normal()).collect();
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_is_two_over_fan_in() {
        let m = he_init(200, 1000, 100, &mut Rng::new(11)).unwrap();
        let n = m.len() as f64;
        let mean = m.sum() / n;
        let var = m.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.01).abs() < 0.05 * 0.01, "variance {var}");
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = he_init(10, 4, 4, &mut Rng::new(5)).unwrap();
        let b = he_init(10, 4, 4, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_fan_in_is_rejected() {
        assert!(he_init(0, 1, 1, &mut Rng::new(0)).is_err());
    }
}
