use crate::nn::Parameters;
use crate::scalar::Scalar;

/// Adam moments for one model, in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<P: Parameters<T>>(model: &P, beta1: f64, beta2: f64) -> Self {
        let zeros: Vec<Vec<T>> = model.params().iter().map(|(_, p)| vec![T::zero(); p.len()]).collect();
        Adam {
            beta1,
            beta2,
            eps: 1e-8,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// Replaces the step count and moments; shapes must match the current ones.
    pub fn restore(&mut self, steps: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> bool {
        let same = |a: &[Vec<T>], b: &[Vec<T>]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len());
        if !same(&self.m, &m) || !same(&self.v, &v) {
            return false;
        }
        self.steps = steps;
        self.m = m;
        self.v = v;
        true
    }

    /// One bias-corrected update from the accumulated gradients.
    pub fn step<P: Parameters<T>>(&mut self, model: &mut P, lr: f64) {
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::lit(1.0 - self.beta1.powi(t));
        let bc2 = T::lit(1.0 - self.beta2.powi(t));
        let step = T::lit(lr) / bc1;
        let eps = T::lit(self.eps);
        let inv_sqrt_bc2 = T::one() / bc2.sqrt();
        for ((_, p), (m, v)) in model.params_mut().into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((w, &g), m), v) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                *w -= step * *m / (v.sqrt() * inv_sqrt_bc2 + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    struct Quad(Param<f64>);
    impl Parameters<f64> for Quad {
        fn params(&self) -> Vec<(String, &Param<f64>)> {
            vec![("x".into(), &self.0)]
        }
        fn params_mut(&mut self) -> Vec<(String, &mut Param<f64>)> {
            vec![("x".into(), &mut self.0)]
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut q = Quad(Param::new(vec![1.0, -2.0]));
        q.0.grad = vec![0.5, -3.0];
        let mut opt = Adam::new(&q, 0.9, 0.999);
        opt.step(&mut q, 0.1);
        assert!((q.0.value[0] - 0.9).abs() < 1e-6);
        assert!((q.0.value[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut q = Quad(Param::new(vec![3.0]));
        let mut opt = Adam::new(&q, 0.9, 0.999);
        for _ in 0..2000 {
            q.0.grad = vec![2.0 * (q.0.value[0] - 1.0)];
            opt.step(&mut q, 0.01);
        }
        assert!((q.0.value[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_rate_is_a_no_op() {
        let mut q = Quad(Param::new(vec![0.123, 4.5]));
        q.0.grad = vec![1.0, -1.0];
        let mut opt = Adam::new(&q, 0.5, 0.999);
        opt.step(&mut q, 0.0);
        assert_eq!(q.0.value, vec![0.123, 4.5]);
    }
}
