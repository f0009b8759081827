use super::ParamVisitor;

/// Adaptive moment estimation with bias correction. Moment buffers are
/// indexed by visitation order, so the walk passed to [`Adam::step`] must
/// be the same fixed walk every step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over every (param, grad) pair the walk yields; gradients
    /// are zeroed as they are consumed.
    pub fn step(&mut self, visit: impl FnOnce(&mut ParamVisitor<'_>)) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let m = &mut self.m;
        let v = &mut self.v;
        let mut i = 0usize;
        visit(&mut |p, g| {
            m[i] = b1 * m[i] + (1.0 - b1) * *g;
            v[i] = b2 * v[i] + (1.0 - b2) * *g * *g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            *g = 0.0;
            i += 1;
        });
        assert_eq!(i, m.len(), "walk visited {i} params, optimizer holds {}", m.len());
    }
}
