//! Feed-forward network forecaster trained with Adam and early stopping.

mod network;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use network::{Dense, Net};

use crate::linear::Standardizer;
use crate::rng::stream;
use crate::{Error, Matrix, Result};

use network::{Adam, Cache, Grads};

const SNAPSHOT_VERSION: u32 = 1;
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    /// Widths of the dense layers of each block. No blocks gives a linear
    /// model.
    pub blocks: Vec<Vec<usize>>,
    /// Dropout rate on the output of the last block.
    pub dropout: f64,
    pub output_dim: usize,
}

impl MlpArchitecture {
    pub fn new(blocks: Vec<Vec<usize>>, dropout: f64) -> Self {
        Self {
            blocks,
            dropout,
            output_dim: crate::HORIZON,
        }
    }

    pub fn linear() -> Self {
        Self::new(Vec::new(), 0.0)
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparam(m));
        if self.blocks.len() > 3 {
            return bad(format!("at most 3 blocks, got {}", self.blocks.len()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.is_empty() || b.len() > 3 {
                return bad(format!("block {i} must have 1 to 3 layers, has {}", b.len()));
            }
            if b.contains(&0) {
                return bad(format!("block {i} has a zero-width layer"));
            }
        }
        if !(0.0..=0.5).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 0.5], got {}", self.dropout));
        }
        if self.output_dim == 0 {
            return bad("output_dim must be >= 1".into());
        }
        Ok(())
    }

    /// Network with He-uniform weights drawn from `rng`.
    pub fn init<T: num_traits::Float>(&self, input_dim: usize, rng: &mut impl rand::Rng) -> Net<T> {
        let mut layers = Vec::new();
        let mut prev = input_dim;
        for w in self.hidden_widths() {
            layers.push(Dense::he_uniform(prev, w, rng));
            prev = w;
        }
        layers.push(Dense::he_uniform(prev, self.output_dim, rng));
        Net {
            layers,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            patience: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparam(m));
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam parameters out of range".into());
        }
        Ok(())
    }
}

/// Losses after an epoch, in standardized target units. Epoch 0 is the
/// initial network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs × outputs`, row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub version: u32,
    pub arch: MlpArchitecture,
    pub layers: Vec<LayerWeights>,
    pub x_std: Standardizer,
    pub y_std: Standardizer,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

fn to_f32(m: &Matrix, std: &Standardizer) -> Vec<f32> {
    let mut v = Vec::with_capacity(m.rows() * m.cols());
    for row in m.iter_rows() {
        v.extend(std.transform_row(row).into_iter().map(|x| x as f32));
    }
    v
}

/// Mean squared error over all outputs, accumulated in double precision.
fn mse(net: &Net<f32>, x: &[f32], y: &[f32], rows: usize) -> f64 {
    let (d, k) = (net.input_dim(), net.output_dim());
    let mut sum = 0.0f64;
    let mut start = 0;
    while start < rows {
        let end = (start + EVAL_CHUNK).min(rows);
        let out = net.predict_batch(&x[start * d..end * d], end - start);
        for (p, t) in out.iter().zip(&y[start * k..end * k]) {
            let e = (*p - *t) as f64;
            sum += e * e;
        }
        start = end;
    }
    sum / (rows * k) as f64
}

/// Train on `(x_train, y_train)`, stopping early on validation MSE.
///
/// Inputs and targets are z-scored with training statistics. After each
/// epoch the validation loss is compared with the best so far; training
/// stops once `patience` consecutive epochs fail to improve it or
/// `max_epochs` is reached, and the best weights are restored.
pub fn mlp_fit(
    x_train: &Matrix,
    y_train: &Matrix,
    x_val: &Matrix,
    y_val: &Matrix,
    arch: &MlpArchitecture,
    config: &TrainConfig,
) -> Result<MlpModel> {
    arch.validate()?;
    config.validate()?;
    let (n, d) = x_train.shape();
    if y_train.rows() != n || x_val.rows() != y_val.rows() {
        return Err(Error::ShapeMismatch("feature and target rows differ".into()));
    }
    if x_val.cols() != d || y_val.cols() != y_train.cols() || y_train.cols() != arch.output_dim {
        return Err(Error::ShapeMismatch(format!(
            "train {}x{}, val {}x{}, targets {} and {}, output_dim {}",
            n,
            d,
            x_val.rows(),
            x_val.cols(),
            y_train.cols(),
            y_val.cols(),
            arch.output_dim
        )));
    }
    if x_val.rows() == 0 {
        return Err(Error::InsufficientData("validation set is empty".into()));
    }
    if !x_train.all_finite() || !y_train.all_finite() || !x_val.all_finite() || !y_val.all_finite() {
        return Err(Error::NonFiniteInput);
    }

    let x_std = Standardizer::fit(x_train)?;
    let y_std = Standardizer::fit(y_train)?;
    let xt = to_f32(x_train, &x_std);
    let yt = to_f32(y_train, &y_std);
    let xv = to_f32(x_val, &x_std);
    let yv = to_f32(y_val, &y_std);
    let k = arch.output_dim;
    let n_val = x_val.rows();

    let mut net: Net<f32> = arch.init(d, &mut stream(config.seed, &[0]));
    let mut adam = Adam::new(&net, config.learning_rate, config.beta1, config.beta2, config.eps);
    let mut cache = Cache::default();
    let mut grads = Grads::zeros_like(&net);

    let first = EpochRecord {
        epoch: 0,
        train_mse: mse(&net, &xt, &yt, n),
        val_mse: mse(&net, &xv, &yv, n_val),
    };
    if !first.val_mse.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    let mut history = vec![first];
    let mut best = (0, first.val_mse, net.clone());
    let mut stale = 0;

    let mut order: Vec<usize> = (0..n).collect();
    let mut bx = Vec::new();
    let mut by = Vec::new();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut stream(config.seed, &[1, epoch as u64]));
        let mut drop_rng = stream(config.seed, &[2, epoch as u64]);
        for batch in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            for &i in batch {
                bx.extend_from_slice(&xt[i * d..(i + 1) * d]);
                by.extend_from_slice(&yt[i * k..(i + 1) * k]);
            }
            let mask = net.draw_mask(batch.len(), &mut drop_rng);
            let loss = net.loss_grad(&bx, &by, batch.len(), mask.as_deref(), &mut cache, &mut grads);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.step(&mut net, &grads);
        }
        let rec = EpochRecord {
            epoch,
            train_mse: mse(&net, &xt, &yt, n),
            val_mse: mse(&net, &xv, &yv, n_val),
        };
        if !rec.val_mse.is_finite() || !rec.train_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(rec);
        if rec.val_mse < best.1 {
            best = (epoch, rec.val_mse, net.clone());
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            break;
        }
    }

    let (best_epoch, best_val_mse, net) = best;
    Ok(MlpModel {
        version: SNAPSHOT_VERSION,
        arch: arch.clone(),
        layers: net
            .layers
            .into_iter()
            .map(|l| LayerWeights {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: l.w,
                bias: l.b,
            })
            .collect(),
        x_std,
        y_std,
        history,
        best_epoch,
        best_val_mse,
    })
}

pub fn mlp_predict(model: &MlpModel, x: &[f64]) -> Vec<f64> {
    model.predict(x)
}

impl MlpModel {
    pub fn net(&self) -> Net<f32> {
        Net {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    w: l.weights.clone(),
                    b: l.bias.clone(),
                })
                .collect(),
            dropout: self.arch.dropout,
        }
    }

    /// Evaluation-mode forecast in original units.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let xs: Vec<f32> = self.x_std.transform_row(x).into_iter().map(|v| v as f32).collect();
        let out = self.net().predict_batch(&xs, 1);
        let z: Vec<f64> = out.into_iter().map(f64::from).collect();
        self.y_std.inverse_row(&z)
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Matrix {
        let net = self.net();
        let mut data = Vec::with_capacity(x.rows() * self.arch.output_dim);
        for row in x.iter_rows() {
            let xs: Vec<f32> = self.x_std.transform_row(row).into_iter().map(|v| v as f32).collect();
            let z: Vec<f64> = net.predict_batch(&xs, 1).into_iter().map(f64::from).collect();
            data.extend(self.y_std.inverse_row(&z));
        }
        Matrix::from_vec(x.rows(), self.arch.output_dim, data).expect("rows of output_dim values")
    }

    /// Validation MSE of the stored weights in standardized units, computed
    /// exactly as during training.
    pub fn evaluate(&self, x: &Matrix, y: &Matrix) -> f64 {
        let xs = to_f32(x, &self.x_std);
        let ys = to_f32(y, &self.y_std);
        mse(&self.net(), &xs, &ys, x.rows())
    }

    pub fn write_history_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_mse,val_mse")?;
        for r in &self.history {
            writeln!(w, "{},{},{}", r.epoch, r.train_mse, r.val_mse)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != SNAPSHOT_VERSION {
            return Err(Error::InvalidParam(format!("unsupported MLP snapshot version {}", m.version)));
        }
        for l in &m.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::ShapeMismatch(format!(
                    "layer {}x{} with {} weights and {} biases",
                    l.inputs,
                    l.outputs,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
        }
        Ok(m)
    }
}

/// Largest relative difference between backpropagated gradients and
/// central finite differences (step `1e-5`) over every parameter, in
/// double precision with dropout off.
///
/// The relative error of a parameter is `|a - f| / max(|a|, |f|, 1e-7)`, so
/// parameters whose true gradient is zero are judged on absolute error.
///
/// Biases are drawn with magnitude in `[0.05, 0.5]` rather than zero. With
/// zero biases a layer whose inputs are all dead sits exactly on the ReLU
/// kink, where a central difference sees half a slope.
pub fn grad_check(arch: &MlpArchitecture, x: &Matrix, y: &Matrix, seed: u64) -> Result<f64> {
    if x.rows() != y.rows() || y.cols() != arch.output_dim {
        return Err(Error::ShapeMismatch("batch does not fit the architecture".into()));
    }
    let mut net: Net<f64> = arch.init(x.cols(), &mut stream(seed, &[0]));
    net.dropout = 0.0;
    let mut rng = stream(seed, &[1]);
    for b in net.layers.iter_mut().flat_map(|l| l.b.iter_mut()) {
        let m: f64 = rng.random_range(0.05..=0.5);
        *b = if rng.random::<bool>() { m } else { -m };
    }
    Ok(grad_check_net(&net, x, y))
}

pub fn grad_check_net(net: &Net<f64>, x: &Matrix, y: &Matrix) -> f64 {
    const H: f64 = 1e-5;
    let rows = x.rows();
    let (_, analytic) = net.loss_and_gradient(x.as_slice(), y.as_slice(), rows);
    let theta = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut p = theta.clone();
        p[i] = theta[i] + H;
        probe.set_params(&p);
        let up = probe.predict_batch(x.as_slice(), rows);
        p[i] = theta[i] - H;
        probe.set_params(&p);
        let down = probe.predict_batch(x.as_slice(), rows);
        // loss(up) - loss(down) summed per output, without cancelling two totals
        let diff: f64 = up
            .iter()
            .zip(&down)
            .zip(y.as_slice())
            .map(|((&u, &d), &t)| (u - d) * (u + d - 2.0 * t))
            .sum();
        let f = diff / up.len() as f64 / (2.0 * H);
        let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = stream(seed, &[]);
        Matrix::from_vec(n, d, (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    fn arch(blocks: Vec<Vec<usize>>, out: usize) -> MlpArchitecture {
        MlpArchitecture {
            blocks,
            dropout: 0.0,
            output_dim: out,
        }
    }

    #[test]
    fn linear_net_gradients_match_finite_differences() {
        let x = gaussian(4, 3, 1);
        let y = gaussian(4, 2, 2);
        let err = grad_check(&arch(vec![], 2), &x, &y, 3).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn small_relu_nets_pass_the_gradient_check() {
        for seed in 0..10 {
            let x = gaussian(6, 5, seed);
            let y = gaussian(6, 3, seed + 100);
            let err = grad_check(&arch(vec![vec![8, 6]], 3), &x, &y, seed).unwrap();
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    #[test]
    fn single_precision_gradients_agree_with_double() {
        let x = gaussian(5, 4, 7);
        let y = gaussian(5, 2, 8);
        let a = arch(vec![vec![6]], 2);
        let net64: Net<f64> = a.init(4, &mut stream(1, &[]));
        let net32 = Net {
            layers: net64
                .layers
                .iter()
                .map(|l| Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    w: l.w.iter().map(|&v| v as f32).collect(),
                    b: l.b.iter().map(|&v| v as f32).collect(),
                })
                .collect(),
            dropout: 0.0,
        };
        let (_, g64) = net64.loss_and_gradient(x.as_slice(), y.as_slice(), 5);
        let x32: Vec<f32> = x.as_slice().iter().map(|&v| v as f32).collect();
        let y32: Vec<f32> = y.as_slice().iter().map(|&v| v as f32).collect();
        let (_, g32) = net32.loss_and_gradient(&x32, &y32, 5);
        for (a, b) in g64.iter().zip(&g32) {
            let rel = (a - *b as f64).abs() / a.abs().max(1e-3);
            assert!(rel < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_inputs_give_zero_first_layer_weight_gradients() {
        let x = Matrix::zeros(4, 3);
        let y = gaussian(4, 2, 1);
        let net: Net<f64> = arch(vec![vec![5]], 2).init(3, &mut stream(2, &[]));
        let (_, g) = net.loss_and_gradient(x.as_slice(), y.as_slice(), 4);
        assert!(g[..15].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_changes_along_the_gradient_to_first_order() {
        let x = gaussian(8, 4, 3);
        let y = gaussian(8, 2, 4);
        let mut net: Net<f64> = arch(vec![vec![6]], 2).init(4, &mut stream(5, &[]));
        let (l0, g) = net.loss_and_gradient(x.as_slice(), y.as_slice(), 8);
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let h = 1e-6;
        let theta: Vec<f64> = net.params().iter().zip(&g).map(|(p, gi)| p - h * gi).collect();
        net.set_params(&theta);
        let l1 = net.loss(x.as_slice(), y.as_slice(), 8);
        let predicted = h * gg;
        assert!(((l0 - l1) - predicted).abs() < 1e-3 * predicted, "{} vs {predicted}", l0 - l1);
    }

    /// Averaging training-mode outputs over every dropout mask, weighted by
    /// its probability, gives the evaluation-mode output.
    #[test]
    fn dropout_is_unbiased_over_all_masks() {
        let p = 0.3;
        let width = 4;
        let a = MlpArchitecture {
            blocks: vec![vec![width]],
            dropout: p,
            output_dim: 2,
        };
        let net: Net<f64> = a.init(3, &mut stream(9, &[]));
        let x = [0.7, -1.2, 2.0];
        let eval = net.predict_batch(&x, 1);
        let mut expect = [0.0; 2];
        for bits in 0u32..(1 << width) {
            let mask: Vec<f64> = (0..width)
                .map(|j| if bits >> j & 1 == 1 { 1.0 / (1.0 - p) } else { 0.0 })
                .collect();
            let kept = bits.count_ones() as i32;
            let prob = (1.0 - p).powi(kept) * p.powi(width as i32 - kept);
            let mut cache = Cache::default();
            net.forward_cached(&x, 1, Some(&mask), &mut cache);
            for (e, o) in expect.iter_mut().zip(&cache.out) {
                *e += prob * o;
            }
        }
        for (a, b) in eval.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_network_predicts_zero() {
        let arch = arch(vec![vec![3]], 2);
        let model = MlpModel {
            version: SNAPSHOT_VERSION,
            arch,
            layers: vec![
                LayerWeights {
                    inputs: 2,
                    outputs: 3,
                    weights: vec![0.0; 6],
                    bias: vec![0.0; 3],
                },
                LayerWeights {
                    inputs: 3,
                    outputs: 2,
                    weights: vec![0.0; 6],
                    bias: vec![0.0; 2],
                },
            ],
            x_std: Standardizer {
                mean: vec![0.0; 2],
                scale: vec![1.0; 2],
            },
            y_std: Standardizer {
                mean: vec![0.0; 2],
                scale: vec![1.0; 2],
            },
            history: Vec::new(),
            best_epoch: 0,
            best_val_mse: 0.0,
        };
        assert_eq!(model.predict(&[3.0, -4.0]), vec![0.0, 0.0]);
    }

    /// Two-layer toy evaluated by hand from its serialized weights.
    #[test]
    fn prediction_matches_a_manual_forward_pass() {
        let model = MlpModel::from_json(
            r#"{"version":1,"arch":{"blocks":[[2]],"dropout":0.25,"output_dim":1},
            "layers":[{"inputs":2,"outputs":2,"weights":[1.0,-1.0,0.5,2.0],"bias":[0.0,0.5]},
                      {"inputs":2,"outputs":1,"weights":[3.0,-2.0],"bias":[1.0]}],
            "x_std":{"mean":[1.0,0.0],"scale":[2.0,1.0]},
            "y_std":{"mean":[10.0],"scale":[4.0]},
            "history":[],"best_epoch":0,"best_val_mse":0.0}"#,
        )
        .unwrap();
        let x = [5.0, -1.0];
        let z = [(x[0] - 1.0) / 2.0, (x[1] - 0.0) / 1.0];
        let h1 = (z[0] * 1.0 + z[1] * 0.5 + 0.0f64).max(0.0);
        let h2 = (-z[0] + z[1] * 2.0 + 0.5f64).max(0.0);
        let out = 3.0 * h1 - 2.0 * h2 + 1.0;
        let want = out * 4.0 + 10.0;
        let got = model.predict(&x);
        assert!((got[0] - want).abs() < 1e-5, "{} vs {want}", got[0]);
    }

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: 40,
            patience: 5,
            batch_size: 16,
            learning_rate: 1e-2,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn patience_zero_runs_one_epoch() {
        let x = gaussian(40, 3, 1);
        let y = gaussian(40, 2, 2);
        let cfg = TrainConfig {
            patience: 0,
            ..small_config(1)
        };
        let m = mlp_fit(&x, &y, &x, &y, &arch(vec![vec![4]], 2), &cfg).unwrap();
        assert_eq!(m.history.len(), 2);
        assert_eq!(m.history.last().unwrap().epoch, 1);
    }

    #[test]
    fn best_weights_are_restored() {
        let x = gaussian(120, 5, 3);
        let y = gaussian(120, 2, 4);
        let (xt, xv) = (x.slice_rows(0, 90), x.slice_rows(90, 120));
        let (yt, yv) = (y.slice_rows(0, 90), y.slice_rows(90, 120));
        let m = mlp_fit(&xt, &yt, &xv, &yv, &arch(vec![vec![16, 16]], 2), &small_config(7)).unwrap();
        let min = m.history.iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(m.best_val_mse, min);
        assert_eq!(m.history[m.best_epoch].val_mse, min);
        let back = MlpModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.evaluate(&xv, &yv), min);
    }

    #[test]
    fn same_seed_same_weights() {
        let x = gaussian(60, 4, 5);
        let y = gaussian(60, 2, 6);
        let a = MlpArchitecture {
            blocks: vec![vec![8], vec![8]],
            dropout: 0.2,
            output_dim: 2,
        };
        let m1 = mlp_fit(&x, &y, &x, &y, &a, &small_config(3)).unwrap();
        let m2 = mlp_fit(&x, &y, &x, &y, &a, &small_config(3)).unwrap();
        assert_eq!(m1.layers, m2.layers);
        let m3 = mlp_fit(&x, &y, &x, &y, &a, &small_config(4)).unwrap();
        assert_ne!(m1.layers, m3.layers);
    }

    #[test]
    fn history_csv_has_one_row_per_epoch() {
        let x = gaussian(30, 2, 1);
        let y = gaussian(30, 1, 2);
        let m = mlp_fit(&x, &y, &x, &y, &arch(vec![vec![3]], 1), &small_config(0)).unwrap();
        let mut buf = Vec::new();
        m.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("epoch,train_mse,val_mse"));
        assert_eq!(text.lines().count(), m.history.len() + 1);
    }

    #[test]
    fn constant_targets_are_learned() {
        let x = gaussian(64, 3, 2);
        let y = Matrix::from_vec(64, 2, vec![5.0; 128]).unwrap();
        let cfg = TrainConfig {
            max_epochs: 300,
            patience: 30,
            ..small_config(1)
        };
        let m = mlp_fit(&x, &y, &x, &y, &arch(vec![vec![8]], 2), &cfg).unwrap();
        assert!(m.best_val_mse < 1e-6, "{}", m.best_val_mse);
        for v in m.predict(&[0.3, 9.0, -2.0]) {
            assert!((v - 5.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn linear_hook_recovers_a_linear_map() {
        let x = gaussian(400, 6, 11);
        let rows: Vec<Vec<f64>> = x
            .iter_rows()
            .map(|r| vec![2.0 * r[0] - r[3] + 4.0, 0.5 * r[1] + 1.0])
            .collect();
        let y = Matrix::from_rows(&rows).unwrap();
        let (xt, xv) = (x.slice_rows(0, 300), x.slice_rows(300, 400));
        let (yt, yv) = (y.slice_rows(0, 300), y.slice_rows(300, 400));
        let cfg = TrainConfig {
            max_epochs: 300,
            patience: 30,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 2,
            ..Default::default()
        };
        let m = mlp_fit(&xt, &yt, &xv, &yv, &arch(vec![], 2), &cfg).unwrap();
        // standardized targets have unit variance, so this is relative MSE
        assert!(m.best_val_mse < 1e-3, "{}", m.best_val_mse);
    }

    #[test]
    fn shape_and_hyperparameter_errors() {
        let x = gaussian(10, 3, 1);
        let y = gaussian(10, 2, 2);
        let a = arch(vec![vec![4]], 3);
        assert!(matches!(mlp_fit(&x, &y, &x, &y, &a, &small_config(0)), Err(Error::ShapeMismatch(_))));
        let a = arch(vec![vec![4]; 4], 2);
        assert!(matches!(mlp_fit(&x, &y, &x, &y, &a, &small_config(0)), Err(Error::InvalidHyperparam(_))));
        let empty = Matrix::zeros(0, 3);
        let empty_y = Matrix::zeros(0, 2);
        assert!(mlp_fit(&x, &y, &empty, &empty_y, &arch(vec![], 2), &small_config(0)).is_err());
    }
}
