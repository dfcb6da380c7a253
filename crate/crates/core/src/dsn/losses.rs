use crate::nn::{loss, Matrix};
use crate::{Error, Result};

/// Soft subspace orthogonality penalty `‖H_c H_pᵀ‖_F²`.
pub fn difference_loss(h_c: &Matrix, h_p: &Matrix) -> Result<f64> {
    check_pair(h_c, h_p)?;
    Ok(h_c.matmul_t(h_p).frobenius_sq())
}

/// Difference loss with its gradients `(loss, dH_c, dH_p)`.
///
/// With `M = H_c H_pᵀ`: `dH_c = 2 M H_p` and `dH_p = 2 Mᵀ H_c`.
pub fn difference_loss_grads(h_c: &Matrix, h_p: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    check_pair(h_c, h_p)?;
    let m = h_c.matmul_t(h_p);
    let mut d_c = m.matmul(h_p);
    d_c.scale(2.0);
    let mut d_p = m.t_matmul(h_c);
    d_p.scale(2.0);
    Ok((m.frobenius_sq(), d_c, d_p))
}

fn check_pair(h_c: &Matrix, h_p: &Matrix) -> Result<()> {
    if h_c.shape() != h_p.shape() {
        return Err(Error::shape(format!(
            "shared {:?} and private {:?} codes differ in shape",
            h_c.shape(),
            h_p.shape()
        )));
    }
    Ok(())
}

/// Domain-classification cross-entropy of discriminator probabilities
/// `d_hat` against domain labels `d`; probabilities are clamped at 1e-12.
pub fn similarity_loss(d_hat: &[f64], d: &[f64]) -> Result<f64> {
    if d_hat.len() != d.len() {
        return Err(Error::shape("discriminator outputs and domain labels differ in length"));
    }
    Ok(loss::binary_cross_entropy(d_hat, d))
}

/// `Σ_i ‖v_{y_i} - h_i‖²` over softmax weight rows `v` and item codes `h`.
pub fn item_anchor_loss(v: &Matrix, labels: &[usize], item_codes: &Matrix) -> Result<f64> {
    check_anchor(v, labels, item_codes)?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            v.row(y)
                .iter()
                .zip(item_codes.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum())
}

pub(crate) fn check_anchor(v: &Matrix, labels: &[usize], item_codes: &Matrix) -> Result<()> {
    if item_codes.rows() != labels.len() || item_codes.cols() != v.cols() {
        return Err(Error::shape("item codes must be one code_dim row per label"));
    }
    for &y in labels {
        if y >= v.rows() {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: v.rows(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Rng;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn orthogonal_rows_give_zero() {
        let mut c = Matrix::zeros(2, 64);
        let mut p = Matrix::zeros(2, 64);
        c.set(0, 0, 1.0);
        c.set(1, 1, 2.0);
        p.set(0, 2, 3.0);
        p.set(1, 3, -1.0);
        assert_eq!(difference_loss(&c, &p).unwrap(), 0.0);
    }

    #[test]
    fn identical_unit_rows_give_one() {
        let mut c = Matrix::zeros(1, 64);
        c.set(0, 0, 1.0);
        assert_eq!(difference_loss(&c, &c).unwrap(), 1.0);
    }

    #[test]
    fn difference_matches_double_loop() {
        let mut rng = Rng::new(5);
        let c = random(3, 64, &mut rng);
        let p = random(3, 64, &mut rng);
        let mut brute = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..64).map(|k| c.get(i, k) * p.get(j, k)).sum();
                brute += dot * dot;
            }
        }
        assert!((difference_loss(&c, &p).unwrap() - brute).abs() < 1e-10);
    }

    #[test]
    fn difference_grads_match_finite_differences() {
        let mut rng = Rng::new(6);
        let c = random(3, 5, &mut rng);
        let p = random(3, 5, &mut rng);
        let (_, dc, dp) = difference_loss_grads(&c, &p).unwrap();
        let eps = 1e-6;
        for idx in 0..15 {
            let mut plus = c.clone();
            plus.as_mut_slice()[idx] += eps;
            let mut minus = c.clone();
            minus.as_mut_slice()[idx] -= eps;
            let fd = (difference_loss(&plus, &p).unwrap() - difference_loss(&minus, &p).unwrap()) / (2.0 * eps);
            assert!((fd - dc.as_slice()[idx]).abs() < 1e-5 * fd.abs().max(1.0));
            let mut plus = p.clone();
            plus.as_mut_slice()[idx] += eps;
            let mut minus = p.clone();
            minus.as_mut_slice()[idx] -= eps;
            let fd = (difference_loss(&c, &plus).unwrap() - difference_loss(&c, &minus).unwrap()) / (2.0 * eps);
            assert!((fd - dp.as_slice()[idx]).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        assert!(difference_loss(&Matrix::zeros(2, 4), &Matrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn half_probability_gives_ln2() {
        for d in [0.0, 1.0] {
            let l = similarity_loss(&[0.5], &[d]).unwrap();
            assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_prediction_is_bounded_by_the_clamp() {
        let l = similarity_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(l >= 0.0 && l < 1e-11);
        let worst = similarity_loss(&[0.0], &[1.0]).unwrap();
        assert!((worst - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn anchor_loss_cases() {
        let mut rng = Rng::new(9);
        let v = random(6, 64, &mut rng);
        let labels = [4, 0, 4, 2];
        let codes = v.select_rows(&labels);
        assert_eq!(item_anchor_loss(&v, &labels, &codes).unwrap(), 0.0);

        let mut one = Matrix::zeros(1, 64);
        one.set(0, 0, 1.0);
        assert_eq!(item_anchor_loss(&one, &[0], &Matrix::zeros(1, 64)).unwrap(), 1.0);

        let codes = random(4, 64, &mut rng);
        let mut brute = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            for k in 0..64 {
                brute += (v.get(y, k) - codes.get(i, k)).powi(2);
            }
        }
        assert!((item_anchor_loss(&v, &labels, &codes).unwrap() - brute).abs() < 1e-10);
    }

    #[test]
    fn anchor_label_out_of_range() {
        let v = Matrix::zeros(3, 2);
        assert!(matches!(
            item_anchor_loss(&v, &[3], &Matrix::zeros(1, 2)),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }
}
