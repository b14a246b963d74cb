//! Adam optimizer state for the GAN loops.

pub struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(param_sizes: &[usize], lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            m: param_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: param_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }

    /// One update over parallel slices of parameters and gradients.
    pub fn step(&mut self, params: Vec<&mut [f32]>, grads: &[Vec<f32>]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((param, grad), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
            for i in 0..param.len() {
                let g = grad[i] as f64;
                let mi = self.beta1 * m[i] as f64 + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v[i] as f64 + (1.0 - self.beta2) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = self.lr * (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
                param[i] -= update as f32;
            }
        }
    }
}
