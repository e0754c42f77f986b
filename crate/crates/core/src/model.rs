//! Multilayer perceptron classifier with a feature tap before the head,
//! plus an exponential-moving-average shadow used for evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Widths of the hidden layers before the feature layer.
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub classes: usize,
    pub seed: u64,
    /// Take features after the feature layer's ReLU (otherwise before it).
    pub features_after_activation: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden: vec![256],
            feature_dim: 128,
            classes,
            seed: 0,
            features_after_activation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::config("layer widths must be ≥ 1"));
        }
        if self.feature_dim < 2 || self.classes < 2 {
            return Err(Error::config(format!(
                "need feature_dim ≥ 2 and classes ≥ 2 (got {} and {})",
                self.feature_dim, self.classes
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.feature_dim);
        w.push(self.classes);
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: ModelConfig,
    layers: Vec<Linear>,
}

/// Parameter leaves of one model inside a graph.
#[derive(Clone, Debug)]
pub struct BoundParams(Vec<Var>);

/// Forward-pass outputs inside a graph.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub features: Var,
    pub logits: Var,
    pub probs: Var,
}

/// Graph-free forward outputs, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub rows: usize,
    pub features: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Inference {
    pub fn feature_row(&self, i: usize) -> &[f64] {
        let f = self.features.len() / self.rows.max(1);
        &self.features[i * f..(i + 1) * f]
    }

    pub fn prob_row(&self, i: usize) -> &[f64] {
        let c = self.probs.len() / self.rows.max(1);
        &self.probs[i * c..(i + 1) * c]
    }
}

impl Mlp {
    /// Uniform `±sqrt(6/(fan_in+fan_out))` weights, zero biases.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, &[purpose::INIT]);
        let widths = config.widths();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let values = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
                Linear {
                    weight: Tensor::from_vec(vec![fan_in, fan_out], values).expect("sized"),
                    bias: Tensor::zeros(vec![fan_out]),
                }
            })
            .collect();
        Ok(Mlp { config, layers })
    }

    /// Rebuilds a model from stored parameters, checking shapes.
    pub fn from_params(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        let mut model = Mlp::new(config)?;
        if params.len() != model.layers.len() * 2 {
            return Err(Error::shape("model", format!("expected {} tensors, got {}", model.layers.len() * 2, params.len())));
        }
        for (slot, p) in model.params_mut().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::shape("model", format!("{:?} vs {:?}", slot.shape(), p.shape())));
            }
            *slot = p;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(Tensor::zero_grad);
    }

    /// Inserts the parameters as gradient-tracking leaves.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams(self.params().map(|p| g.leaf(p.clone(), true)).collect())
    }

    /// Adds the graph's parameter gradients into the model's grad buffers.
    pub fn absorb_grads(&mut self, g: &Graph, bound: &BoundParams) {
        for (p, &v) in self.params_mut().zip(&bound.0) {
            if let Some(grad) = g.grad(v) {
                for (d, s) in p.grad_mut().iter_mut().zip(grad) {
                    *d += s;
                }
            }
        }
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.config.input_dim {
            return Err(Error::config(format!(
                "input width {} does not match model input {}",
                width, self.config.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, bound: &BoundParams, x: Var) -> Result<ForwardOutput> {
        match g.shape(x) {
            [_, w] => self.check_width(*w)?,
            s => return Err(Error::config(format!("input batch must be a matrix, got {:?}", s))),
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        let mut features = x;
        for l in 0..last {
            let z = g.affine(h, bound.0[2 * l], bound.0[2 * l + 1])?;
            h = g.relu(z)?;
            if l == last - 1 {
                features = if self.config.features_after_activation { h } else { z };
            }
        }
        let logits = g.affine(h, bound.0[2 * last], bound.0[2 * last + 1])?;
        let probs = g.softmax_rows(logits)?;
        Ok(ForwardOutput { features, logits, probs })
    }

    /// Forward pass without recording a graph.
    pub fn infer(&self, x: &[f64], rows: usize) -> Result<Inference> {
        if rows == 0 {
            return Ok(Inference { rows, features: Vec::new(), probs: Vec::new() });
        }
        self.check_width(x.len() / rows)?;
        if !x.len().is_multiple_of(rows) {
            return Err(Error::config("ragged input batch"));
        }
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        let mut features = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let (d, o) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            let mut z = kernels::affine(&h, rows, layer.weight.values(), d, o, layer.bias.values());
            if l == last {
                let mut probs = vec![0.0; z.len()];
                if !kernels::softmax_rows(&z, o, &mut probs) {
                    return Err(Error::NonFinite("infer"));
                }
                return Ok(Inference { rows, features, probs });
            }
            if l == last - 1 && !self.config.features_after_activation {
                features = z.clone();
            }
            kernels::relu_inplace(&mut z);
            if l == last - 1 && self.config.features_after_activation {
                features = z.clone();
            }
            h = z;
        }
        unreachable!("model has at least one layer")
    }
}

/// Shadow copy `s ← decay·s + (1−decay)·p` of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaState {
    shadow: Mlp,
    decay: f64,
}

impl EmaState {
    pub fn new(model: &Mlp, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::config(format!("EMA decay {decay} outside [0, 1]")));
        }
        let mut shadow = model.clone();
        shadow.zero_grad();
        Ok(EmaState { shadow, decay })
    }

    pub fn from_shadow(shadow: Mlp, decay: f64) -> Self {
        EmaState { shadow, decay }
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn shadow(&self) -> &Mlp {
        &self.shadow
    }

    pub fn update(&mut self, model: &Mlp) {
        self.update_with_decay(model, self.decay);
    }

    /// Interpolates with an explicit decay for this step.
    pub fn update_with_decay(&mut self, model: &Mlp, decay: f64) {
        for (s, p) in self.shadow.params_mut().zip(model.params()) {
            for (sv, &pv) in s.values_mut().iter_mut().zip(p.values()) {
                *sv = decay * *sv + (1.0 - decay) * pv;
            }
        }
    }

    /// Class distributions from the shadow parameters; no graph is built.
    pub fn predict_eval(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        Ok(self.shadow.infer(x, rows)?.probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            input_dim: 5,
            hidden: vec![7],
            feature_dim: 4,
            classes: 3,
            seed: 1,
            features_after_activation: true,
        }
    }

    fn batch(rows: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn deterministic_init_within_bounds() {
        let a = Mlp::new(small()).unwrap();
        assert_eq!(a, Mlp::new(small()).unwrap());
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(a.layers()[0].weight.values().iter().all(|w| w.abs() < limit));
        assert_ne!(a, Mlp::new(ModelConfig { seed: 2, ..small() }).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Mlp::new(ModelConfig { classes: 1, ..small() }).is_err());
        assert!(Mlp::new(ModelConfig { feature_dim: 1, ..small() }).is_err());
    }

    #[test]
    fn zero_head_gives_uniform_probs() {
        let mut m = Mlp::new(small()).unwrap();
        let head = m.layers_mut().last_mut().unwrap();
        head.weight.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let out = m.infer(&batch(4, 5, 3), 4).unwrap();
        assert!(out.probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn rows_are_batch_independent() {
        let m = Mlp::new(small()).unwrap();
        let x = batch(8, 5, 4);
        let all = m.infer(&x, 8).unwrap();
        let one = m.infer(&x[..5], 1).unwrap();
        for (a, b) in one.probs.iter().zip(all.prob_row(0)) {
            assert!((a - b).abs() <= 1e-15);
        }
        for (a, b) in one.features.iter().zip(all.feature_row(0)) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn graph_and_inference_paths_agree() {
        let m = Mlp::new(ModelConfig { features_after_activation: false, ..small() }).unwrap();
        let x = batch(6, 5, 5);
        let mut g = Graph::new();
        let bound = m.bind(&mut g);
        let xv = g.constant(Tensor::from_vec(vec![6, 5], x.clone()).unwrap());
        let out = m.forward(&mut g, &bound, xv).unwrap();
        let inf = m.infer(&x, 6).unwrap();
        assert_eq!(g.values(out.probs), &inf.probs[..]);
        assert_eq!(g.values(out.features), &inf.features[..]);
        assert!(inf.features.iter().any(|&f| f < 0.0));
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let m = Mlp::new(small()).unwrap();
        let mut g = Graph::new();
        let bound = m.bind(&mut g);
        let x = g.constant(Tensor::zeros(vec![2, 4]));
        assert!(matches!(m.forward(&mut g, &bound, x), Err(Error::Config(_))));
        assert!(m.infer(&[0.0; 8], 2).is_err());
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let mut m = Mlp::new(small()).unwrap();
        // nonzero biases keep pre-activations off the ReLU kink
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for l in m.layers_mut() {
            l.bias.values_mut().iter_mut().for_each(|b| *b = rng.gen_range(0.05..0.3));
        }
        let x = Tensor::from_vec(vec![3, 5], batch(3, 5, 6)).unwrap();
        let labels = [0usize, 2, 1];
        let loss_of = |m: &Mlp| -> (f64, Vec<Vec<f64>>) {
            let mut g = Graph::new();
            let bound = m.bind(&mut g);
            let xv = g.constant(x.clone());
            let out = m.forward(&mut g, &bound, xv).unwrap();
            let mut t = Tensor::zeros(vec![3, 3]);
            for (i, &l) in labels.iter().enumerate() {
                t.values_mut()[i * 3 + l] = 1.0;
            }
            let tv = g.constant(t);
            let lp = g.log(out.probs).unwrap();
            let picked = g.mul(lp, tv).unwrap();
            let s = g.sum(picked).unwrap();
            let loss = g.scale(s, -1.0 / 3.0).unwrap();
            g.backward(loss).unwrap();
            let grads = bound.0.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect();
            (g.item(loss), grads)
        };
        let (_, analytic) = loss_of(&m);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for p in 0..analytic.len() {
            for k in 0..analytic[p].len() {
                let mut plus = m.clone();
                plus.params_mut().nth(p).unwrap().values_mut()[k] += eps;
                let mut minus = m.clone();
                minus.params_mut().nth(p).unwrap().values_mut()[k] -= eps;
                let numeric = (loss_of(&plus).0 - loss_of(&minus).0) / (2.0 * eps);
                let a = analytic[p][k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn ema_endpoints_and_closed_form() {
        let start = Mlp::new(small()).unwrap();
        let target = Mlp::new(ModelConfig { seed: 9, ..small() }).unwrap();

        let mut ema = EmaState::new(&start, 0.0).unwrap();
        ema.update(&target);
        assert_eq!(ema.shadow().params().collect::<Vec<_>>().len(), 6);
        for (s, p) in ema.shadow().params().zip(target.params()) {
            assert_eq!(s.values(), p.values());
        }

        let mut ema = EmaState::new(&start, 1.0).unwrap();
        ema.update(&target);
        for (s, p) in ema.shadow().params().zip(start.params()) {
            assert_eq!(s.values(), p.values());
        }

        let decay: f64 = 0.999;
        let mut ema = EmaState::new(&start, decay).unwrap();
        for _ in 0..100 {
            ema.update(&target);
        }
        let w = decay.powi(100);
        for ((s, a), b) in ema.shadow().params().zip(start.params()).zip(target.params()) {
            for ((sv, av), bv) in s.values().iter().zip(a.values()).zip(b.values()) {
                assert!((sv - (w * av + (1.0 - w) * bv)).abs() < 1e-12);
            }
        }
        assert!(EmaState::new(&start, 1.5).is_err());
    }

    #[test]
    fn predict_eval_uses_shadow_and_leaves_model_alone() {
        let model = Mlp::new(small()).unwrap();
        let before = model.clone();
        let other = Mlp::new(ModelConfig { seed: 4, ..small() }).unwrap();
        let ema = EmaState::from_shadow(other.clone(), 0.9);
        let x = batch(2, 5, 1);
        assert_eq!(ema.predict_eval(&x, 2).unwrap(), other.infer(&x, 2).unwrap().probs);
        assert_eq!(model, before);
    }
}
