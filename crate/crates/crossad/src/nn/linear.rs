use super::{init_uniform, visit_pair, ParamVisitor};
use ndarray::{Array1, Array2};
use rand::Rng;

/// Affine layer `y = x·Wᵀ + b` over (batch, features) matrices.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    gw: Array2<f64>,
    gb: Array1<f64>,
    cache: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let w = Array2::from_shape_vec(
            (out_dim, in_dim),
            init_uniform(rng, out_dim * in_dim, in_dim),
        )
        .expect("shape matches");
        let b = Array1::from_vec(init_uniform(rng, out_dim, in_dim));
        Linear {
            gw: Array2::zeros(w.dim()),
            gb: Array1::zeros(b.dim()),
            w,
            b,
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let y = self.forward(x);
        self.cache = Some(x.clone());
        y
    }

    /// Accumulate parameter gradients, return the input gradient.
    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let x = self
            .cache
            .take()
            .expect("backward without preceding forward_train");
        self.gw += &gy.t().dot(&x);
        self.gb += &gy.sum_axis(ndarray::Axis(0));
        gy.dot(&self.w)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        visit_pair(&mut self.w, &mut self.gw, &mut self.b, &mut self.gb, f);
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}
