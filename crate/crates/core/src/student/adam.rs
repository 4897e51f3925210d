//! Adaptive-moment optimizer with bias correction.

use crate::student::layers::Elem;

/// Adam over a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam<T: Elem> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Elem> Adam<T> {
    pub fn new(lr: f64, shapes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: shapes.iter().map(|&n| vec![T::ZERO; n]).collect(),
            v: shapes.iter().map(|&n| vec![T::ZERO; n]).collect(),
            t: 0,
        }
    }

    /// One update step; `params` and `grads` must match the construction
    /// shapes, tensor for tensor.
    pub fn step(&mut self, params: &mut [&mut Vec<T>], grads: &[Vec<T>]) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let b1 = T::from_f64(self.beta1);
        let b1c = T::from_f64(1.0 - self.beta1);
        let b2 = T::from_f64(self.beta2);
        let b2c = T::from_f64(1.0 - self.beta2);
        let inv_bc1 = T::from_f64(1.0 / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for (pi, p) in params.iter_mut().enumerate() {
            let g = &grads[pi];
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            for i in 0..p.len() {
                m[i] = b1 * m[i] + b1c * g[i];
                v[i] = b2 * v[i] + b2c * g[i] * g[i];
                let mhat = m[i] * inv_bc1;
                let vhat = v[i] * inv_bc2;
                p[i] = p[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        // f(x) = (x - 3)^2, gradient 2(x - 3).
        let mut x = vec![0.0f64];
        let mut opt = Adam::new(0.1, &[1]);
        for _ in 0..500 {
            let g = vec![2.0 * (x[0] - 3.0)];
            let mut refs = [&mut x];
            opt.step(&mut refs, &[g]);
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction, the first Adam step is ~lr * sign(g).
        let mut x = vec![1.0f32];
        let mut opt = Adam::new(0.01, &[1]);
        let g = vec![42.0f32];
        let mut refs = [&mut x];
        opt.step(&mut refs, &[g]);
        assert!((x[0] - (1.0 - 0.01)).abs() < 1e-5);
    }
}
