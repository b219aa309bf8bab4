//! Fully connected networks with manual reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

/// Activation applied to the last layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `lo + (hi - lo) * sigmoid(z)`, keeps actions inside their bounds.
    ScaledSigmoid { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// in x out
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Gradients with the same layout as the network.
pub type Grads = Vec<Dense>;

/// Intermediate values of a batched forward pass.
pub struct Cache {
    /// Input of every layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    /// Uniform fan-in initialisation; the last layer is drawn from
    /// +-`last_scale` so the initial output sits near the middle of its range.
    pub fn new(sizes: &[usize], output: OutputActivation, last_scale: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
                let bound = if k + 1 == n { last_scale } else { 1.0 / (fan_in as f64).sqrt() };
                Dense {
                    w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..=bound)),
                    b: Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..=bound)),
                }
            })
            .collect();
        Self { layers, output }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.ncols())
    }

    pub fn zeros_like(&self) -> Grads {
        self.layers
            .iter()
            .map(|l| Dense {
                w: Array2::zeros(l.w.raw_dim()),
                b: Array1::zeros(l.b.raw_dim()),
            })
            .collect()
    }

    fn activate_output(&self, z: &mut Array2<f64>) {
        if let OutputActivation::ScaledSigmoid { lo, hi } = self.output {
            z.mapv_inplace(|v| lo + (hi - lo) * sigmoid(v));
        }
    }

    /// Batched forward pass, one sample per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w) + &l.b;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else {
                self.activate_output(&mut z);
            }
            h = z;
        }
        h
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("input length matches");
        self.forward(view).into_raw_vec_and_offset().0
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Cache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.w) + &l.b;
            let mut a = z.clone();
            if k < last {
                a.mapv_inplace(|v| v.max(0.0));
            } else {
                self.activate_output(&mut a);
            }
            inputs.push(std::mem::replace(&mut h, a));
            pre.push(z);
        }
        Cache { inputs, pre, output: h }
    }

    /// Gradients of a loss with respect to parameters and inputs, given the
    /// loss gradient `d_out` with respect to the network output.
    pub fn backward(&self, cache: &Cache, d_out: ArrayView2<f64>) -> (Grads, Array2<f64>) {
        let last = self.layers.len() - 1;
        let mut delta = d_out.to_owned();
        if let OutputActivation::ScaledSigmoid { lo, hi } = self.output {
            delta.zip_mut_with(&cache.pre[last], |d, &z| {
                let s = sigmoid(z);
                *d *= (hi - lo) * s * (1.0 - s);
            });
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let gw = cache.inputs[k].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            let mut d_in = delta.dot(&l.w.t());
            if k > 0 {
                d_in.zip_mut_with(&cache.pre[k - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            grads.push(Dense { w: gw, b: gb });
            delta = d_in;
        }
        grads.reverse();
        (grads, delta)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.parameter_count(), "flat parameter length");
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = *it.next().unwrap());
            l.b.iter_mut().for_each(|x| *x = *it.next().unwrap());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
    }
}

/// theta' <- tau theta + (1 - tau) theta'
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        t.w.zip_mut_with(&o.w, |a, &b| *a = tau * b + (1.0 - tau) * *a);
        t.b.zip_mut_with(&o.b, |a, &b| *a = tau * b + (1.0 - tau) * *a);
    }
}

pub fn flatten_grads(g: &Grads) -> Vec<f64> {
    g.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied()).collect()
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: net.zeros_like(),
            v: net.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (k, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.w)
                .and(&grads[k].w)
                .and(&mut self.m[k].w)
                .and(&mut self.v[k].w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&grads[k].b)
                .and(&mut self.m[k].b)
                .and(&mut self.v[k].b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}
