use super::{init_uniform, visit_pair, ParamVisitor};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;

/// Causal dilated 1-D convolution over (batch, time, channels) tensors
/// with implicit left zero-padding, so output timestep t sees only inputs
/// at t, t−d, ..., t−(k−1)·d.
///
/// Implemented as im2col plus one GEMM: weights are stored (out_ch,
/// in_ch·k), with tap j of kernel position j reading input offset
/// −(k−1−j)·d (j = k−1 is the current timestep).
#[derive(Debug, Clone)]
pub struct CausalConv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    gw: Array2<f64>,
    gb: Array1<f64>,
    cache: Option<Cols>,
}

#[derive(Debug, Clone)]
struct Cols {
    cols: Array2<f64>,
    batch: usize,
    time: usize,
}

impl CausalConv1d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_ch * kernel;
        let w = Array2::from_shape_vec(
            (out_ch, fan_in),
            init_uniform(rng, out_ch * fan_in, fan_in),
        )
        .expect("shape matches");
        let b = Array1::from_vec(init_uniform(rng, out_ch, fan_in));
        CausalConv1d {
            in_ch,
            out_ch,
            kernel,
            dilation,
            gw: Array2::zeros(w.dim()),
            gb: Array1::zeros(b.dim()),
            w,
            b,
            cache: None,
        }
    }

    fn im2col(&self, x: &Array3<f64>) -> Array2<f64> {
        let (batch, time, _) = x.dim();
        let k = self.kernel;
        let d = self.dilation;
        let mut cols = Array2::<f64>::zeros((batch * time, self.in_ch * k));
        for b in 0..batch {
            for t in 0..time {
                let row = b * time + t;
                for j in 0..k {
                    let back = (k - 1 - j) * d;
                    if back > t {
                        continue;
                    }
                    let src_t = t - back;
                    for c in 0..self.in_ch {
                        cols[[row, c * k + j]] = x[[b, src_t, c]];
                    }
                }
            }
        }
        cols
    }

    fn apply(&self, cols: &Array2<f64>, batch: usize, time: usize) -> Array3<f64> {
        let y_flat = cols.dot(&self.w.t()) + &self.b;
        y_flat
            .into_shape_with_order((batch, time, self.out_ch))
            .expect("flat length matches")
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (batch, time, in_ch) = x.dim();
        assert_eq!(in_ch, self.in_ch, "channel mismatch");
        self.apply(&self.im2col(x), batch, time)
    }

    pub fn forward_train(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let (batch, time, in_ch) = x.dim();
        assert_eq!(in_ch, self.in_ch, "channel mismatch");
        let cols = self.im2col(x);
        let y = self.apply(&cols, batch, time);
        self.cache = Some(Cols { cols, batch, time });
        y
    }

    pub fn backward(&mut self, gy: &Array3<f64>) -> Array3<f64> {
        let Cols { cols, batch, time } = self
            .cache
            .take()
            .expect("backward without preceding forward_train");
        let gy_flat = gy
            .to_owned()
            .into_shape_with_order((batch * time, self.out_ch))
            .expect("gy shape");
        self.gw += &gy_flat.t().dot(&cols);
        self.gb += &gy_flat.sum_axis(ndarray::Axis(0));
        let gcols = gy_flat.dot(&self.w);

        let k = self.kernel;
        let d = self.dilation;
        let mut gx = Array3::<f64>::zeros((batch, time, self.in_ch));
        for b in 0..batch {
            for t in 0..time {
                let row = b * time + t;
                for j in 0..k {
                    let back = (k - 1 - j) * d;
                    if back > t {
                        continue;
                    }
                    let src_t = t - back;
                    for c in 0..self.in_ch {
                        gx[[b, src_t, c]] += gcols[[row, c * k + j]];
                    }
                }
            }
        }
        gx
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        visit_pair(&mut self.w, &mut self.gw, &mut self.b, &mut self.gb, f);
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::{collect_grads, max_param_rel_err};
    use super::*;
    use ndarray::{arr1, arr2, Array3};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::RefCell;

    fn seq(values: &[f64]) -> Array3<f64> {
        Array3::from_shape_vec((1, values.len(), 1), values.to_vec()).unwrap()
    }

    #[test]
    fn two_tap_conv_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = CausalConv1d::new(1, 1, 2, 1, &mut rng);
        // y[t] = 2·x[t−1] + 3·x[t] + 1, x[−1] = 0
        c.w = arr2(&[[2.0, 3.0]]);
        c.b = arr1(&[1.0]);
        let y = c.forward(&seq(&[1.0, 2.0, 3.0]));
        assert_eq!(y[[0, 0, 0]], 3.0 * 1.0 + 1.0);
        assert_eq!(y[[0, 1, 0]], 2.0 * 1.0 + 3.0 * 2.0 + 1.0);
        assert_eq!(y[[0, 2, 0]], 2.0 * 2.0 + 3.0 * 3.0 + 1.0);
    }

    #[test]
    fn dilation_reaches_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = CausalConv1d::new(1, 1, 2, 2, &mut rng);
        // y[t] = x[t−2] + x[t]
        c.w = arr2(&[[1.0, 1.0]]);
        c.b = arr1(&[0.0]);
        let y = c.forward(&seq(&[1.0, 10.0, 100.0, 1000.0]));
        assert_eq!(y[[0, 0, 0]], 1.0);
        assert_eq!(y[[0, 1, 0]], 10.0);
        assert_eq!(y[[0, 2, 0]], 101.0);
        assert_eq!(y[[0, 3, 0]], 1010.0);
    }

    #[test]
    fn output_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = CausalConv1d::new(2, 3, 3, 2, &mut rng);
        let mut x = Array3::from_shape_fn((1, 12, 2), |(_, t, ch)| (t * 2 + ch) as f64 * 0.1);
        let y1 = c.forward(&x);
        x[[0, 7, 0]] += 100.0;
        x[[0, 7, 1]] -= 50.0;
        let y2 = c.forward(&x);
        for t in 0..7 {
            for o in 0..3 {
                assert_eq!(y1[[0, t, o]], y2[[0, t, o]], "leak at t={t}");
            }
        }
        assert_ne!(y1[[0, 7, 0]], y2[[0, 7, 0]]);
    }

    #[test]
    fn kernel_one_equals_per_timestep_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = CausalConv1d::new(3, 2, 1, 1, &mut rng);
        let x = Array3::from_shape_fn((2, 5, 3), |(b, t, ch)| (b + t * 3 + ch) as f64 * 0.3 - 1.0);
        let y = c.forward(&x);
        for b in 0..2 {
            for t in 0..5 {
                for o in 0..2 {
                    let manual: f64 = (0..3).map(|i| c.w[[o, i]] * x[[b, t, i]]).sum::<f64>()
                        + c.b[o];
                    assert!((y[[b, t, o]] - manual).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn batch_rows_do_not_couple() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = CausalConv1d::new(2, 4, 3, 2, &mut rng);
        let a = Array3::from_shape_fn((1, 10, 2), |(_, t, ch)| (t + ch) as f64 * 0.2);
        let b = Array3::from_shape_fn((1, 10, 2), |(_, t, ch)| (t * ch) as f64 * -0.1 + 1.0);
        let mut both = Array3::zeros((2, 10, 2));
        both.slice_mut(ndarray::s![0, .., ..]).assign(&a.index_axis(ndarray::Axis(0), 0));
        both.slice_mut(ndarray::s![1, .., ..]).assign(&b.index_axis(ndarray::Axis(0), 0));
        let y = c.forward(&both);
        let ya = c.forward(&a);
        let yb = c.forward(&b);
        assert_eq!(y.index_axis(ndarray::Axis(0), 0), ya.index_axis(ndarray::Axis(0), 0));
        assert_eq!(y.index_axis(ndarray::Axis(0), 1), yb.index_axis(ndarray::Axis(0), 0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = RefCell::new(CausalConv1d::new(2, 3, 3, 2, &mut rng));
        let x = Array3::from_shape_fn((2, 8, 2), |(b, t, ch)| {
            ((b * 31 + t * 7 + ch * 3) as f64 * 0.17).sin()
        });
        let r = Array3::from_shape_fn((2, 8, 3), |(b, t, o)| {
            ((b * 13 + t * 5 + o * 11) as f64 * 0.29).cos()
        });

        let loss = || (c.borrow().forward(&x).into_owned() * &r).sum();
        c.borrow_mut().forward_train(&x);
        let gx = c.borrow_mut().backward(&r);

        let analytic = collect_grads(|f| c.borrow_mut().visit_params(f));
        let worst = max_param_rel_err(loss, |f| c.borrow_mut().visit_params(f), &analytic, 1e-5);
        assert!(worst < 1e-7, "param grad rel err {worst}");

        // input gradient against finite differences
        let mut worst_in = 0.0f64;
        let mut x_var = x.clone();
        for b in 0..2 {
            for t in 0..8 {
                for ch in 0..2 {
                    let h = 1e-5;
                    x_var[[b, t, ch]] += h;
                    let up = (c.borrow().forward(&x_var).into_owned() * &r).sum();
                    x_var[[b, t, ch]] -= 2.0 * h;
                    let down = (c.borrow().forward(&x_var).into_owned() * &r).sum();
                    x_var[[b, t, ch]] += h;
                    let numeric = (up - down) / (2.0 * h);
                    worst_in = worst_in
                        .max(super::super::gradcheck::rel_err(gx[[b, t, ch]], numeric));
                }
            }
        }
        assert!(worst_in < 1e-7, "input grad rel err {worst_in}");
    }
}
