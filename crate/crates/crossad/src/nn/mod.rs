//! Minimal deterministic neural-network layers with explicit forward and
//! backward passes in f64.
//!
//! Every layer follows the same protocol: `forward` is pure;
//! `forward_train` additionally caches what `backward` needs; `backward`
//! consumes the cache, accumulates parameter gradients, and returns the
//! input gradient. Parameters and their gradients are reachable through
//! `visit_params`, which walks them in a fixed order shared by the
//! optimizer and the checkpoint format.

mod adam;
mod conv;
mod linear;

pub use adam::Adam;
pub use conv::CausalConv1d;
pub use linear::Linear;

use ndarray::{Array1, Array2};
use rand::Rng;

/// Visitor over (parameter, gradient) pairs, in a fixed order.
pub type ParamVisitor<'a> = dyn FnMut(&mut f64, &mut f64) + 'a;

pub(crate) fn visit_pair(
    w: &mut Array2<f64>,
    gw: &mut Array2<f64>,
    b: &mut Array1<f64>,
    gb: &mut Array1<f64>,
    f: &mut ParamVisitor<'_>,
) {
    for (p, g) in w.iter_mut().zip(gw.iter_mut()) {
        f(p, g);
    }
    for (p, g) in b.iter_mut().zip(gb.iter_mut()) {
        f(p, g);
    }
}

/// Uniform fan-in initialization: U[−1/√fan_in, 1/√fan_in].
pub(crate) fn init_uniform(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Elementwise ReLU.
pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient of ReLU given its output: passes where the output is
/// positive.
pub fn relu_backward(gy: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &out| {
        if out <= 0.0 {
            *g = 0.0;
        }
    });
    gx
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
