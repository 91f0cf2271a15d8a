//! Dense ReLU network with a linear head, generic over the float type.

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub(crate) fn cast<T: Float>(v: f64) -> T {
    T::from(v).expect("value representable in the float type")
}

/// Fully connected layer; `w` is `inputs × outputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Float> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![T::zero(); inputs * outputs],
            b: vec![T::zero(); outputs],
        }
    }

    /// He-uniform weights, zero biases.
    pub fn he_uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / inputs.max(1) as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| cast(rng.random_range(-limit..limit)))
            .collect();
        Self {
            inputs,
            outputs,
            w,
            b: vec![T::zero(); outputs],
        }
    }

    /// `out = a·W + b` for a batch of `rows` inputs.
    fn forward(&self, a: &[T], rows: usize, out: &mut Vec<T>) {
        let (ni, no) = (self.inputs, self.outputs);
        out.clear();
        out.resize(rows * no, T::zero());
        for r in 0..rows {
            let o = &mut out[r * no..(r + 1) * no];
            o.copy_from_slice(&self.b);
            for (i, &av) in a[r * ni..(r + 1) * ni].iter().enumerate() {
                if av != T::zero() {
                    for (ov, &wv) in o.iter_mut().zip(&self.w[i * no..(i + 1) * no]) {
                        *ov = *ov + av * wv;
                    }
                }
            }
        }
    }
}

/// Hidden layers use ReLU; dropout, when enabled, acts on the input of the
/// output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net<T> {
    pub layers: Vec<Dense<T>>,
    pub dropout: f64,
}

/// Per-layer activations of one batch.
pub(crate) struct Cache<T> {
    /// `acts[0]` is the input; `acts[l]` is what layer `l` consumes.
    acts: Vec<Vec<T>>,
    /// ReLU outputs before dropout, for the layer feeding the head.
    pre_drop: Vec<T>,
    /// Inverted-dropout multipliers (0 or `1/(1-p)`), empty when off.
    mask: Vec<T>,
    pub(crate) out: Vec<T>,
}

impl<T> Default for Cache<T> {
    fn default() -> Self {
        Self {
            acts: Vec::new(),
            pre_drop: Vec::new(),
            mask: Vec::new(),
            out: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub w: Vec<Vec<T>>,
    pub b: Vec<Vec<T>>,
}

impl<T: Float> Grads<T> {
    pub fn zeros_like(net: &Net<T>) -> Self {
        Self {
            w: net.layers.iter().map(|l| vec![T::zero(); l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![T::zero(); l.b.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut v = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            v.extend_from_slice(w);
            v.extend_from_slice(b);
        }
        v
    }
}

impl<T: Float> Net<T> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.w);
            v.extend_from_slice(&l.b);
        }
        v
    }

    pub fn set_params(&mut self, p: &[T]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    fn has_dropout(&self) -> bool {
        self.layers.len() > 1 && self.dropout > 0.0
    }

    /// Forward pass; `mask` supplies dropout multipliers in training mode.
    pub(crate) fn forward_cached(&self, x: &[T], rows: usize, mask: Option<&[T]>, cache: &mut Cache<T>) {
        let last = self.layers.len() - 1;
        cache.acts.resize_with(self.layers.len(), Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        cache.mask.clear();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = std::mem::take(&mut cache.out);
            layer.forward(&cache.acts[l], rows, &mut out);
            if l == last {
                cache.out = out;
                break;
            }
            out.iter_mut().for_each(|v| *v = v.max(T::zero()));
            if l + 1 == last {
                if let Some(m) = mask {
                    cache.pre_drop.clear();
                    cache.pre_drop.extend_from_slice(&out);
                    cache.mask.extend_from_slice(m);
                    for (v, &k) in out.iter_mut().zip(m) {
                        *v = *v * k;
                    }
                }
            }
            cache.acts[l + 1] = out;
        }
    }

    /// Evaluation-mode prediction of a batch.
    pub fn predict_batch(&self, x: &[T], rows: usize) -> Vec<T> {
        let mut cache = Cache::default();
        self.forward_cached(x, rows, None, &mut cache);
        cache.out
    }

    /// Draw an inverted-dropout mask for the head's input.
    pub(crate) fn draw_mask(&self, rows: usize, rng: &mut impl Rng) -> Option<Vec<T>> {
        if !self.has_dropout() {
            return None;
        }
        let width = self.layers[self.layers.len() - 1].inputs;
        let keep = 1.0 - self.dropout;
        let scale: T = cast(1.0 / keep);
        Some(
            (0..rows * width)
                .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                .collect(),
        )
    }

    /// Mean squared error over all outputs of the batch and its gradient.
    pub(crate) fn loss_grad(
        &self,
        x: &[T],
        y: &[T],
        rows: usize,
        mask: Option<&[T]>,
        cache: &mut Cache<T>,
        grads: &mut Grads<T>,
    ) -> T {
        self.forward_cached(x, rows, mask, cache);
        let k = self.output_dim();
        let denom: T = cast((rows * k) as f64);
        let two: T = cast(2.0);
        let mut loss = T::zero();
        let mut delta: Vec<T> = cache
            .out
            .iter()
            .zip(y)
            .map(|(&p, &t)| {
                let e = p - t;
                loss = loss + e * e;
                two * e / denom
            })
            .collect();
        loss = loss / denom;

        let last = self.layers.len() - 1;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (ni, no) = (layer.inputs, layer.outputs);
            let a = &cache.acts[l];
            let gw = &mut grads.w[l];
            let gb = &mut grads.b[l];
            gw.iter_mut().for_each(|g| *g = T::zero());
            gb.iter_mut().for_each(|g| *g = T::zero());
            for r in 0..rows {
                let d = &delta[r * no..(r + 1) * no];
                for (g, &dv) in gb.iter_mut().zip(d) {
                    *g = *g + dv;
                }
                for (i, &av) in a[r * ni..(r + 1) * ni].iter().enumerate() {
                    if av != T::zero() {
                        for (g, &dv) in gw[i * no..(i + 1) * no].iter_mut().zip(d) {
                            *g = *g + av * dv;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            // back through W, dropout and the ReLU that produced `a`
            let mut prev = vec![T::zero(); rows * ni];
            let dropped = l == last && !cache.mask.is_empty();
            for r in 0..rows {
                let d = &delta[r * no..(r + 1) * no];
                for i in 0..ni {
                    let idx = r * ni + i;
                    let alive = if dropped {
                        cache.pre_drop[idx] > T::zero()
                    } else {
                        a[idx] > T::zero()
                    };
                    if !alive {
                        continue;
                    }
                    let mut s = T::zero();
                    for (&wv, &dv) in layer.w[i * no..(i + 1) * no].iter().zip(d) {
                        s = s + wv * dv;
                    }
                    prev[idx] = if dropped { s * cache.mask[idx] } else { s };
                }
            }
            delta = prev;
        }
        loss
    }

    /// Loss without gradients, evaluation mode.
    pub fn loss(&self, x: &[T], y: &[T], rows: usize) -> T {
        let out = self.predict_batch(x, rows);
        let denom: T = cast(out.len() as f64);
        out.iter()
            .zip(y)
            .fold(T::zero(), |s, (&p, &t)| s + (p - t) * (p - t))
            / denom
    }

    /// Loss and flat gradient in evaluation mode.
    pub fn loss_and_gradient(&self, x: &[T], y: &[T], rows: usize) -> (T, Vec<T>) {
        let mut cache = Cache::default();
        let mut grads = Grads::zeros_like(self);
        let loss = self.loss_grad(x, y, rows, None, &mut cache, &mut grads);
        (loss, grads.flatten())
    }
}

/// Adam state for every parameter of a network.
pub(crate) struct Adam<T> {
    m: Grads<T>,
    v: Grads<T>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<T: Float> Adam<T> {
    pub(crate) fn new(net: &Net<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub(crate) fn step(&mut self, net: &mut Net<T>, g: &Grads<T>) {
        self.t += 1;
        let (b1, b2) = (cast::<T>(self.beta1), cast::<T>(self.beta2));
        let one = T::one();
        let c1: T = cast(1.0 - self.beta1.powi(self.t));
        let c2: T = cast(1.0 - self.beta2.powi(self.t));
        let lr: T = cast(self.lr);
        let eps: T = cast(self.eps);
        let update = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            update(&mut layer.w, &g.w[l], &mut self.m.w[l], &mut self.v.w[l]);
            update(&mut layer.b, &g.b[l], &mut self.m.b[l], &mut self.v.b[l]);
        }
    }
}
