//! Small fully connected network trained by full-batch Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
    LogSigmoid,
}

/// Logistic function without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// `-log(1 + exp(-x))` in a form that neither overflows nor loses the tail.
#[inline]
pub fn logsigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu(x),
            Activation::LogSigmoid => logsigmoid(x),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        let s = sigmoid(x);
        match self {
            Activation::Silu => s * (1.0 + x * (1.0 - s)),
            // d/dx -log(1 + e^-x) = 1 - sigmoid(x)
            Activation::LogSigmoid => sigmoid(-x),
        }
    }
}

/// Dense layer, `weights` row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks(self.n_in).zip(&self.biases)) {
            *o = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    /// Network outputs are multiplied by these to give coefficients.
    pub output_scale: Vec<f64>,
}

/// Hidden layer widths used throughout.
pub const HIDDEN: [usize; 2] = [50, 10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the normalized mean-squared error reaches this value.
    pub tolerance: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    /// Stop after this many epochs without a new best loss.
    pub patience: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 50_000,
            tolerance: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 42,
            patience: 5_000,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                path: format!("rom.training.{path}"),
                message,
            })
        };
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", format!("must be > 0, got {}", self.learning_rate));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1", "Adam betas must lie in [0, 1)".into());
        }
        if !(self.eps_adam > 0.0) {
            return bad("eps_adam", "must be > 0".into());
        }
        Ok(())
    }
}

/// Parameter-shaped gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(model: &AnnModel) -> Self {
        Self {
            layers: model.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        }
    }
}

impl AnnModel {
    /// Network with all parameters zero and identity scalings.
    pub fn zeros(n_inputs: usize, n_outputs: usize, activation: Activation) -> Self {
        let sizes = [n_inputs, HIDDEN[0], HIDDEN[1], n_outputs];
        Self {
            layers: sizes.windows(2).map(|s| Layer::zeros(s[0], s[1])).collect(),
            activation,
            input_min: vec![0.0; n_inputs],
            input_max: vec![1.0; n_inputs],
            output_scale: vec![1.0; n_outputs],
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(n_inputs: usize, n_outputs: usize, activation: Activation, seed: u64) -> Self {
        let mut model = Self::zeros(n_inputs, n_outputs, activation);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let a = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-a..a);
            }
        }
        model
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_scale.len()
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Raw network output for an already normalized input.
    pub fn forward_normalized(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.n_out];
            layer.apply(&a, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        a
    }

    /// Predicted coefficients at physical input `x`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let y = self.forward_normalized(&self.normalize_input(x));
        y.iter().zip(&self.output_scale).map(|(v, s)| v * s).collect()
    }

    /// Mean-squared error over samples and outputs, with its gradient.
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let n_out = self.n_outputs();
        let norm = 1.0 / (inputs.len() * n_out) as f64;
        let mut loss = 0.0;
        let nl = self.layers.len();
        for (x, y) in inputs.iter().zip(targets) {
            // Forward pass keeping pre-activations and activations.
            let mut acts: Vec<Vec<f64>> = vec![x.clone()];
            let mut pres: Vec<Vec<f64>> = Vec::with_capacity(nl);
            for (i, layer) in self.layers.iter().enumerate() {
                let mut z = vec![0.0; layer.n_out];
                layer.apply(&acts[i], &mut z);
                let a = if i + 1 < nl {
                    z.iter().map(|&v| self.activation.apply(v)).collect()
                } else {
                    z.clone()
                };
                pres.push(z);
                acts.push(a);
            }
            let out = &acts[nl];
            let mut delta: Vec<f64> = out.iter().zip(y).map(|(o, t)| 2.0 * norm * (o - t)).collect();
            loss += out.iter().zip(y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() * norm;
            for i in (0..nl).rev() {
                let layer = &self.layers[i];
                let g = &mut grads.layers[i];
                for (r, d) in delta.iter().enumerate() {
                    g.biases[r] += d;
                    let row = &mut g.weights[r * layer.n_in..(r + 1) * layer.n_in];
                    for (gw, a) in row.iter_mut().zip(&acts[i]) {
                        *gw += d * a;
                    }
                }
                if i > 0 {
                    let mut next = vec![0.0; layer.n_in];
                    for (r, d) in delta.iter().enumerate() {
                        let row = &layer.weights[r * layer.n_in..(r + 1) * layer.n_in];
                        for (nx, w) in next.iter_mut().zip(row) {
                            *nx += d * w;
                        }
                    }
                    for (nx, z) in next.iter_mut().zip(&pres[i - 1]) {
                        *nx *= self.activation.derivative(*z);
                    }
                    delta = next;
                }
            }
        }
        (loss, grads)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
            .copied()
            .collect()
    }

    pub fn set_params(&mut self, values: &[f64]) {
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
            .copied()
            .collect()
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    cfg: TrainingConfig,
}

impl Adam {
    pub fn new(n_params: usize, cfg: TrainingConfig) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            cfg,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= c.learning_rate * mh / (vh.sqrt() + c.eps_adam);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub loss_history: Vec<f64>,
    pub epochs: usize,
    pub final_loss: f64,
}

/// Train a `[n_in, 50, 10, n_out]` network on `(inputs, targets)`.
pub fn ann_train(
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    activation: Activation,
    cfg: &TrainingConfig,
) -> Result<(AnnModel, TrainingReport)> {
    cfg.validate()?;
    let ns = inputs.len();
    if ns < 2 || targets.len() != ns {
        return Err(Error::Pipeline(format!(
            "network training needs at least 2 matching samples, got {} inputs and {} targets",
            ns,
            targets.len()
        )));
    }
    let n_in = inputs[0].len();
    let n_out = targets[0].len();
    let mut model = AnnModel::xavier(n_in, n_out, activation, cfg.seed);
    for d in 0..n_in {
        let lo = inputs.iter().map(|x| x[d]).fold(f64::INFINITY, f64::min);
        let hi = inputs.iter().map(|x| x[d]).fold(f64::NEG_INFINITY, f64::max);
        model.input_min[d] = lo;
        model.input_max[d] = if hi > lo { hi } else { lo + 1.0 };
    }
    for k in 0..n_out {
        let m = targets.iter().map(|y| y[k].abs()).fold(0.0, f64::max);
        model.output_scale[k] = if m > 0.0 { m } else { 1.0 };
    }
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| model.normalize_input(x)).collect();
    let ys: Vec<Vec<f64>> = targets
        .iter()
        .map(|y| y.iter().zip(&model.output_scale).map(|(v, s)| v / s).collect())
        .collect();

    let mut adam = Adam::new(model.n_params(), *cfg);
    let mut params = model.params();
    let mut best = f64::INFINITY;
    let mut best_params = params.clone();
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut epochs = 0;
    for epoch in 0..cfg.max_epochs {
        let (loss, grads) = model.loss_and_gradient(&xs, &ys);
        if !loss.is_finite() {
            return Err(Error::Training { epoch });
        }
        history.push(loss);
        epochs = epoch + 1;
        if loss < best {
            best = loss;
            best_params.copy_from_slice(&params);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if loss <= cfg.tolerance || since_best >= cfg.patience {
            break;
        }
        adam.step(&mut params, &grads.flat());
        model.set_params(&params);
    }
    model.set_params(&best_params);
    Ok((
        model,
        TrainingReport {
            loss_history: history,
            epochs,
            final_loss: best,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!((logsigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((silu(1.0) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((logsigmoid(-50.0) + 50.0).abs() < 1e-15);
        let tail = logsigmoid(50.0);
        assert!((tail + (-50.0f64).exp()).abs() < 1e-35, "{tail}");
        for x in [-700.0, 700.0] {
            assert!(silu(x).is_finite() && logsigmoid(x).is_finite());
        }
    }

    #[test]
    fn activation_derivatives_match_differences() {
        for act in [Activation::Silu, Activation::LogSigmoid] {
            for x in [-3.0, -0.4, 0.0, 0.7, 2.5] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut model = AnnModel::zeros(1, 3, Activation::Silu);
        model.output_scale = vec![2.0, 5.0, 7.0];
        assert_eq!(model.forward(&[0.3]), vec![0.0; 3]);
        assert_eq!(model.sizes(), vec![1, 50, 10, 3]);
    }

    #[test]
    fn single_path_by_hand() {
        let mut model = AnnModel::zeros(1, 1, Activation::Silu);
        model.input_min = vec![1.0];
        model.input_max = vec![3.0];
        model.output_scale = vec![4.0];
        model.layers[0].weights[7] = 1.5;
        model.layers[0].biases[7] = -0.2;
        model.layers[1].weights[2 * 50 + 7] = 0.8;
        model.layers[2].weights[2] = -1.1;
        model.layers[2].biases[0] = 0.05;
        let x = (2.0 - 1.0) / 2.0;
        let a1 = silu(1.5 * x - 0.2);
        // The other hidden units of the second layer see zero input: silu(0) = 0.
        let a2 = silu(0.8 * a1);
        let expected = 4.0 * (-1.1 * a2 + 0.05);
        assert!((model.forward(&[2.0])[0] - expected).abs() < 1e-14);
        assert_eq!(model.forward(&[2.0]), model.forward(&[2.0]));
    }

    #[test]
    fn backprop_matches_central_differences() {
        for act in [Activation::Silu, Activation::LogSigmoid] {
            let model = AnnModel::xavier(1, 3, act, 9);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let xs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
            let ys: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let (_, g) = model.loss_and_gradient(&xs, &ys);
            let g = g.flat();
            let p0 = model.params();
            let mut probe = model.clone();
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] = p0[i] + h;
                probe.set_params(&p);
                let lp = probe.loss_and_gradient(&xs, &ys).0;
                p[i] = p0[i] - h;
                probe.set_params(&p);
                let lm = probe.loss_and_gradient(&xs, &ys).0;
                let fd = (lp - lm) / (2.0 * h);
                // Symmetric relative difference, the usual gradient-check metric.
                let rel = (fd - g[i]).abs() / (fd.abs() + g[i].abs()).max(1e-12);
                worst = worst.max(rel);
                assert!(rel <= 1e-5, "{act:?} param {i}: {fd} vs {}", g[i]);
            }
            eprintln!("{act:?}: worst relative gradient difference {worst:e}");
        }
    }

    #[test]
    fn adam_with_zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(3, TrainingConfig::default());
        let mut p = vec![0.3, -1.2, 5.0];
        let before = p.clone();
        for _ in 0..10 {
            adam.step(&mut p, &[0.0; 3]);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_target_is_learned() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![0.5 + 0.3 * i as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|_| vec![0.7, -0.2]).collect();
        let cfg = TrainingConfig {
            tolerance: 1e-10,
            ..TrainingConfig::default()
        };
        let (_, report) = ann_train(&xs, &ys, Activation::Silu, &cfg).unwrap();
        assert!(report.final_loss <= 1e-10, "{}", report.final_loss);
    }

    #[test]
    fn smooth_target_reaches_tolerance() {
        let xs: Vec<Vec<f64>> = (0..11).map(|i| vec![0.5 + 0.15 * i as f64]).collect();
        let ys: Vec<Vec<f64>> = (0..11).map(|i| vec![(std::f64::consts::PI * i as f64 / 10.0).sin()]).collect();
        let (a, report) = ann_train(&xs, &ys, Activation::Silu, &TrainingConfig::default()).unwrap();
        assert!(report.final_loss <= 1e-4, "{}", report.final_loss);
        assert!(report.final_loss < report.loss_history[0]);
        let (b, _) = ann_train(&xs, &ys, Activation::Silu, &TrainingConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
