//! Multilayer perceptron regressor: tanh hidden layers, identity output,
//! squared-error loss, Adam on shuffled mini-batches.
//!
//! Inputs and the target are standardized with statistics stored in the model.
//! The output layer starts at zero, so an untrained model predicts the training
//! mean.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::forest::check_training_data;
use crate::error::{Error, Result};
use crate::rng::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    sizes: Vec<usize>,
    /// Per layer, `out × in` row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

/// Per-layer activations of one forward pass (index 0 is the standardized input).
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Randomly initialized network with identity standardization.
    pub fn random(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut m = Self::initialized(sizes, seed)?;
        let mut r = rng(seed, 7);
        let last = m.weights.len() - 1;
        for w in &mut m.weights[last] {
            *w = r.random_range(-1.0..1.0);
        }
        for b in m.biases.iter_mut().flatten() {
            *b = r.random_range(-0.5..0.5);
        }
        Ok(m)
    }

    fn initialized(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("invalid layer sizes {sizes:?}")));
        }
        let mut r = rng(seed, 0);
        let layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let w = if l + 1 == layers {
                vec![0.0; fan_in * fan_out]
            } else {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..fan_in * fan_out).map(|_| r.random_range(-limit..limit)).collect()
            };
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            x_mean: vec![0.0; sizes[0]],
            x_scale: vec![1.0; sizes[0]],
            y_mean: 0.0,
            y_scale: 1.0,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_features(&self) -> usize {
        self.sizes[0]
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.x_mean.iter().zip(&self.x_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn forward(&self, input: Vec<f64>) -> Trace {
        let layers = self.weights.len();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input);
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = &acts[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>();
            }
            debug_assert_eq!(z.len(), n_out);
            if l + 1 < layers {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            acts.push(z);
        }
        Trace { acts }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        let out = self.forward(self.standardize(x)).acts.pop().unwrap()[0];
        Ok(out * self.y_scale + self.y_mean)
    }

    /// Number of trainable parameters.
    pub fn parameter_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for l in 0..self.weights.len() {
            p.extend_from_slice(&self.weights[l]);
            p.extend_from_slice(&self.biases[l]);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "{} parameters for a network with {}",
                p.len(),
                self.parameter_count()
            )));
        }
        let mut k = 0;
        for l in 0..self.weights.len() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Mean of `½(ŷ − y)²` over the batch in standardized units, and its gradient
    /// with respect to [`parameters`](Self::parameters).
    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
        let layers = self.weights.len();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut loss = 0.0;
        let n = x.len() as f64;
        for (row, &target) in x.iter().zip(y) {
            let trace = self.forward(self.standardize(row));
            let t = (target - self.y_mean) / self.y_scale;
            let err = trace.acts[layers][0] - t;
            loss += 0.5 * err * err;
            let mut delta = vec![err / n];
            for l in (0..layers).rev() {
                let n_in = self.sizes[l];
                let a = &trace.acts[l];
                for (o, &d) in delta.iter().enumerate() {
                    gb[l][o] += d;
                    let g = &mut gw[l][o * n_in..(o + 1) * n_in];
                    for (gi, ai) in g.iter_mut().zip(a) {
                        *gi += d * ai;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut prev = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // tanh' = 1 − tanh²
                for (p, a) in prev.iter_mut().zip(a) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        let mut grad = Vec::with_capacity(self.parameter_count());
        for l in 0..layers {
            grad.extend_from_slice(&gw[l]);
            grad.extend_from_slice(&gb[l]);
        }
        (loss / n, grad)
    }

    pub fn loss(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let layers = self.weights.len();
        x.iter()
            .zip(y)
            .map(|(row, &target)| {
                let out = self.forward(self.standardize(row)).acts[layers][0];
                0.5 * (out - (target - self.y_mean) / self.y_scale).powi(2)
            })
            .sum::<f64>()
            / x.len() as f64
    }

    /// Text form: header, layer sizes, standardization, then each layer's
    /// weights (row-major) and biases.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut s = String::from("bogwatch-mlp 1\n");
        let sizes: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "layers {}", sizes.join(" "));
        let _ = writeln!(s, "x_mean {}", join(&self.x_mean));
        let _ = writeln!(s, "x_scale {}", join(&self.x_scale));
        let _ = writeln!(s, "y {:?} {:?}", self.y_mean, self.y_scale);
        for l in 0..self.weights.len() {
            let _ = writeln!(s, "W{l} {}", join(&self.weights[l]));
            let _ = writeln!(s, "b{l} {}", join(&self.biases[l]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Data(format!("MLP file: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(format!("expected {name}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let floats = |v: Vec<String>, n: usize, what: &str| -> Result<Vec<f64>> {
            let out = v
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("bad number in {what}")))?;
            if out.len() != n {
                return Err(bad(format!("{what} needs {n} values, got {}", out.len())));
            }
            Ok(out)
        };
        if field("bogwatch-mlp")? != ["1"] {
            return Err(bad("unsupported version".into()));
        }
        let sizes = field("layers")?
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad layer size".into()))?;
        let mut m = Self::initialized(&sizes, 0)?;
        m.x_mean = floats(field("x_mean")?, sizes[0], "x_mean")?;
        m.x_scale = floats(field("x_scale")?, sizes[0], "x_scale")?;
        let y = floats(field("y")?, 2, "y")?;
        (m.y_mean, m.y_scale) = (y[0], y[1]);
        for l in 0..sizes.len() - 1 {
            m.weights[l] = floats(field(&format!("W{l}"))?, sizes[l] * sizes[l + 1], "weights")?;
            m.biases[l] = floats(field(&format!("b{l}"))?, sizes[l + 1], "biases")?;
        }
        if lines.next().is_some() {
            return Err(bad("trailing content".into()));
        }
        Ok(m)
    }
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub fn train_mlp(x: &[Vec<f64>], y: &[f64], cfg: &MlpConfig) -> Result<MlpModel> {
    let d = check_training_data(x, y)?;
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter("batch size and learning rate must be positive".into()));
    }
    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut model = MlpModel::initialized(&sizes, cfg.seed)?;
    for j in 0..d {
        (model.x_mean[j], model.x_scale[j]) = mean_and_scale(x.iter().map(|r| r[j]));
    }
    (model.y_mean, model.y_scale) = mean_and_scale(y.iter().copied());

    let mut params = model.parameters();
    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut shuffle_rng = rng(cfg.seed, 1);
    let (mut bx, mut by) = (Vec::with_capacity(cfg.batch_size), Vec::with_capacity(cfg.batch_size));
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(batch.iter().map(|&i| x[i].clone()));
            by.extend(batch.iter().map(|&i| y[i]));
            let (loss, grad) = model.loss_and_gradient(&bx, &by);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            for k in 0..params.len() {
                m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * grad[k];
                m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
                params[k] -= cfg.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + ADAM_EPS);
            }
            model.set_parameters(&params)?;
        }
        if !epoch_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        log::trace!("mlp epoch {epoch}: loss {:.6}", epoch_loss / x.len() as f64);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Largest relative deviation between analytic and central-difference gradients.
    pub(crate) fn gradient_check(model: &MlpModel, x: &[Vec<f64>], y: &[f64], h: f64) -> f64 {
        let (_, analytic) = model.loss_and_gradient(x, y);
        let base = model.parameters();
        let mut probe = model.clone();
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + h;
            probe.set_parameters(&p).unwrap();
            let up = probe.loss(x, y);
            p[k] = base[k] - h;
            probe.set_parameters(&p).unwrap();
            let down = probe.loss(x, y);
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic[k].abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((analytic[k] - numeric).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = MlpModel::random(&[2, 8, 1], 11).unwrap();
        let mut r = rng(5, 5);
        let x: Vec<Vec<f64>> = (0..6).map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        assert!(gradient_check(&m, &x, &y, 1e-5) < 1e-4);
    }

    #[test]
    fn learns_xor() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let cfg = MlpConfig {
            hidden: vec![8],
            learning_rate: 1e-2,
            epochs: 3000,
            batch_size: 4,
            seed: 3,
        };
        let m = train_mlp(&x, &y, &cfg).unwrap();
        let mse = x.iter().zip(&y).map(|(r, t)| (m.predict(r).unwrap() - t).powi(2)).sum::<f64>() / 4.0;
        assert!(mse < 0.05, "mse {mse}");
    }

    #[test]
    fn zero_epochs_predicts_the_training_mean() {
        let x = vec![vec![1.0, 5.0], vec![2.0, 3.0], vec![4.0, 0.0]];
        let y = vec![60.0, 70.0, 95.0];
        let cfg = MlpConfig {
            epochs: 0,
            ..MlpConfig::default()
        };
        let m = train_mlp(&x, &y, &cfg).unwrap();
        assert!((m.predict(&[9.0, 9.0]).unwrap() - 75.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_names_the_epoch() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let cfg = MlpConfig {
            hidden: vec![4],
            learning_rate: 1e308,
            epochs: 5,
            batch_size: 2,
            seed: 0,
        };
        assert!(matches!(train_mlp(&x, &y, &cfg), Err(Error::Divergence { epoch: 1 | 2 })));
    }

    #[test]
    fn text_round_trip_and_determinism() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 0.5 - r[1]).collect();
        let cfg = MlpConfig {
            epochs: 5,
            ..MlpConfig::default()
        };
        let m = train_mlp(&x, &y, &cfg).unwrap();
        assert_eq!(m, train_mlp(&x, &y, &cfg).unwrap());
        assert_eq!(MlpModel::from_text(&m.to_text()).unwrap(), m);
        assert!(matches!(m.predict(&[1.0]), Err(Error::Shape(_))));
    }
}
