use super::Matrix;

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub adam_m: Matrix,
    pub adam_v: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Matrix::zeros(rows, cols))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam {
            lr,
            ..Adam::default()
        }
    }

    /// One bias-corrected Adam update at step `t` (1-based) from `p.grad`.
    pub fn step(&self, p: &mut Param, t: u64) {
        debug_assert!(t >= 1);
        let tf = t as f64;
        let c1 = 1.0 - self.beta1.powf(tf);
        let c2 = 1.0 - self.beta2.powf(tf);
        let grad = p.grad.as_slice();
        let m = p.adam_m.as_mut_slice();
        let v = p.adam_v.as_mut_slice();
        let w = p.value.as_mut_slice();
        for i in 0..w.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = Param::new(Matrix::row_vector(&[0.5, -2.0]));
        let before = p.value.clone();
        let adam = Adam::default();
        for t in 1..=5 {
            adam.step(&mut p, t);
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::new(Matrix::row_vector(&[0.0]));
        p.grad = Matrix::row_vector(&[1.0]);
        Adam::default().step(&mut p, 1);
        let delta = p.value.get(0, 0);
        assert!((delta + 1e-3).abs() < 1e-8, "delta {delta}");
    }

    #[test]
    fn constant_positive_gradient_decreases_value_each_step() {
        let mut p = Param::new(Matrix::row_vector(&[1.0]));
        let adam = Adam::default();
        let mut prev = p.value.get(0, 0);
        for t in 1..=3 {
            p.grad = Matrix::row_vector(&[0.3]);
            adam.step(&mut p, t);
            let now = p.value.get(0, 0);
            assert!(now < prev);
            prev = now;
        }
    }
}
