//! Gradient reversal: identity forward, negated gradient backward.

use super::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrlMode {
    /// Negate gradients flowing back through the layer (adversarial training).
    Reverse,
    /// Plain identity in both directions; the graph's true gradient.
    Identity,
}

pub fn grl_forward(x: &Matrix) -> Matrix {
    x.clone()
}

pub fn grl_backward(upstream: &Matrix) -> Matrix {
    upstream.neg()
}

impl GrlMode {
    pub fn backward(self, upstream: Matrix) -> Matrix {
        match self {
            GrlMode::Reverse => grl_backward(&upstream),
            GrlMode::Identity => upstream,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_is_identity_backward_negates() {
        let x = Matrix::row_vector(&[1.0, 2.0]);
        assert_eq!(grl_forward(&x), x);
        let g = Matrix::row_vector(&[0.5, -1.0]);
        assert_eq!(grl_backward(&g).as_slice(), &[-0.5, 1.0]);
        let z = Matrix::zeros(1, 3);
        assert!(grl_backward(&z).as_slice().iter().all(|v| *v == 0.0));
    }
}
