//! Logistic regression and two-hidden-layer ReLU networks trained with
//! plain mini-batch gradient descent on binary cross-entropy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{GesdError, Result};
use crate::seed;

/// Anything that maps a feature vector to a score. Explainers only see
/// models through this trait.
pub trait ScoreModel: Sync {
    fn n_features(&self) -> usize;

    fn score(&self, x: &[f64]) -> f64;

    /// Scores a row-major batch into `out` (one entry per row).
    fn score_batch(&self, rows: &[f64], out: &mut [f64]) {
        let d = self.n_features();
        for (row, o) in rows.chunks_exact(d).zip(out.iter_mut()) {
            *o = self.score(row);
        }
    }

    /// For each mask, the mean score over the row-major `background` rows
    /// with the masked-in features replaced by those of `x`.
    fn coalition_means(&self, x: &[f64], background: &[f64], masks: &[Vec<bool>], out: &mut [f64]) {
        let d = self.n_features();
        let nb = background.len() / d;
        let mut rows = Vec::with_capacity(background.len());
        let mut scores = vec![0.0; nb];
        for (mask, o) in masks.iter().zip(out.iter_mut()) {
            rows.clear();
            for b in background.chunks_exact(d) {
                rows.extend(b.iter().zip(x).zip(mask).map(|((&bv, &xv), &m)| if m { xv } else { bv }));
            }
            self.score_batch(&rows, &mut scores);
            *o = scores.iter().sum::<f64>() / nb as f64;
        }
    }
}

/// Wraps a closure as a [`ScoreModel`].
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnModel { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScoreModel for FnModel<F> {
    fn n_features(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

/// Model family plus hidden widths (ignored for logistic regression).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_hidden")]
    pub hidden_widths: [usize; 2],
}

fn default_hidden() -> [usize; 2] {
    [32, 16]
}

impl ModelSpec {
    pub fn logistic() -> Self {
        ModelSpec {
            kind: ModelKind::Logistic,
            hidden_widths: default_hidden(),
        }
    }

    pub fn mlp() -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            hidden_widths: default_hidden(),
        }
    }

    pub fn architecture(&self, n_features: usize) -> Vec<usize> {
        match self.kind {
            ModelKind::Logistic => vec![n_features, 1],
            ModelKind::Mlp => vec![n_features, self.hidden_widths[0], self.hidden_widths[1], 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: u32, seed: u64) -> Result<Self> {
        let cfg = TrainConfig {
            learning_rate,
            epochs,
            batch_size: 32,
            seed,
            l2_penalty: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GesdError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(GesdError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(GesdError::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(GesdError::InvalidConfig(format!(
                "l2 penalty must be non-negative, got {}",
                self.l2_penalty
            )));
        }
        Ok(())
    }
}

/// A trained (or hand-built) classifier. Parameters are stored layer by
/// layer: the `out x in` weight matrix row-major, then the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Classifier {
    pub kind: ModelKind,
    pub architecture: Vec<usize>,
    pub threshold: f64,
    pub parameters: Vec<f64>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn parameter_count(architecture: &[usize]) -> usize {
    architecture.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Classifier {
    pub fn from_parameters(
        kind: ModelKind,
        architecture: Vec<usize>,
        parameters: Vec<f64>,
        threshold: f64,
    ) -> Result<Self> {
        let model = Classifier {
            kind,
            architecture,
            threshold,
            parameters,
            train_config: None,
            seed: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Logistic model with the given weights and bias.
    pub fn logistic(weights: Vec<f64>, bias: f64, threshold: f64) -> Result<Self> {
        let d = weights.len();
        let mut p = weights;
        p.push(bias);
        Classifier::from_parameters(ModelKind::Logistic, vec![d, 1], p, threshold)
    }

    pub fn validate(&self) -> Result<()> {
        let arch = &self.architecture;
        let expected_layers = match self.kind {
            ModelKind::Logistic => 2,
            ModelKind::Mlp => 4,
        };
        if arch.len() != expected_layers || arch.contains(&0) || arch[arch.len() - 1] != 1 {
            return Err(GesdError::InvalidConfig(format!(
                "architecture {arch:?} does not fit a {:?} model",
                self.kind
            )));
        }
        let expected = parameter_count(arch);
        if self.parameters.len() != expected {
            return Err(GesdError::DimensionMismatch {
                expected,
                got: self.parameters.len(),
            });
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(GesdError::InvalidConfig(format!(
                "threshold must lie in [0,1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.threshold = threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.architecture[0]
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(GesdError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn logit(&self, x: &[f64], a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
        a.clear();
        a.extend_from_slice(x);
        self.forward_from(0, 0, a, b)
    }

    /// Runs layers `first..` on the activations in `a`; `offset` is where
    /// layer `first` starts in the parameter vector.
    fn forward_from(&self, first: usize, mut offset: usize, a: &mut Vec<f64>, b: &mut Vec<f64>) -> f64 {
        let last = self.architecture.len() - 2;
        for (l, w) in self.architecture.windows(2).enumerate().skip(first) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.parameters[offset..offset + fan_in * fan_out];
            let biases = &self.parameters[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            b.clear();
            for (o, bias) in biases.iter().enumerate() {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let z = row.iter().zip(a.iter()).map(|(w, v)| w * v).sum::<f64>() + bias;
                b.push(if l == last { z } else { z.max(0.0) });
            }
            std::mem::swap(a, b);
        }
        a[0]
    }

    /// Batched version of [`Self::forward_from`]: `input` holds `n` rows of
    /// width `architecture[first]` and on return its first `n` entries are
    /// the logits. `scratch` is reused between layers.
    fn forward_batch(&self, first: usize, mut offset: usize, input: &mut Vec<f64>, scratch: &mut Vec<f64>, n: usize) {
        let last = self.architecture.len() - 2;
        for l in first..=last {
            let (fan_in, fan_out) = (self.architecture[l], self.architecture[l + 1]);
            let w = &self.parameters[offset..offset + fan_in * fan_out];
            let bias = &self.parameters[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            scratch.clear();
            for _ in 0..n {
                scratch.extend_from_slice(bias);
            }
            assert!(input.len() >= n * fan_in);
            // SAFETY: input is n x fan_in row-major, w is fan_out x fan_in
            // row-major (read transposed), scratch is n x fan_out; all
            // lengths are checked above or set by construction.
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    fan_in,
                    fan_out,
                    1.0,
                    input.as_ptr(),
                    fan_in as isize,
                    1,
                    w.as_ptr(),
                    1,
                    fan_in as isize,
                    1.0,
                    scratch.as_mut_ptr(),
                    fan_out as isize,
                    1,
                );
            }
            if l != last {
                scratch.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(input, scratch);
        }
    }

    pub fn predict_score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.score(x))
    }

    /// 1 iff the score reaches the threshold (the boundary is positive).
    pub fn predict_label(&self, x: &[f64]) -> Result<u8> {
        Ok(label_for(self.predict_score(x)?, self.threshold))
    }

    pub fn scores(&self, ds: &TabularDataset) -> Result<Vec<f64>> {
        if ds.n_features() != self.input_dim() {
            return Err(GesdError::DimensionMismatch {
                expected: self.input_dim(),
                got: ds.n_features(),
            });
        }
        let mut out = vec![0.0; ds.n_rows()];
        self.score_batch(ds.features(), &mut out);
        Ok(out)
    }

    /// Mean binary cross-entropy (plus the L2 term, if configured) on a dataset.
    pub fn loss(&self, ds: &TabularDataset) -> Result<f64> {
        let l2 = self.train_config.map_or(0.0, |c| c.l2_penalty);
        let idx: Vec<usize> = (0..ds.n_rows()).collect();
        Ok(loss_and_gradient(&self.architecture, &self.parameters, ds.features(), ds.labels(), &idx, l2, None))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| GesdError::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GesdError::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let model: Classifier = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

pub fn label_for(score: f64, threshold: f64) -> u8 {
    u8::from(score >= threshold)
}

impl ScoreModel for Classifier {
    fn n_features(&self) -> usize {
        self.input_dim()
    }

    fn score(&self, x: &[f64]) -> f64 {
        let mut a = Vec::with_capacity(64);
        let mut b = Vec::with_capacity(64);
        sigmoid(self.logit(x, &mut a, &mut b))
    }

    fn score_batch(&self, rows: &[f64], out: &mut [f64]) {
        let d = self.input_dim();
        let (mut input, mut scratch) = (Vec::new(), Vec::new());
        for (chunk, o) in rows.chunks(BATCH_ROWS * d).zip(out.chunks_mut(BATCH_ROWS)) {
            input.clear();
            input.extend_from_slice(chunk);
            let n = chunk.len() / d;
            self.forward_batch(0, 0, &mut input, &mut scratch, n);
            for (o, z) in o.iter_mut().zip(&input) {
                *o = sigmoid(*z);
            }
        }
    }

    /// Uses linearity of the first layer: each coalition row differs from
    /// either `x` or its background row in at most `d/2` columns, so only
    /// those columns are added to a cached pre-activation.
    fn coalition_means(&self, x: &[f64], background: &[f64], masks: &[Vec<bool>], out: &mut [f64]) {
        let d = self.input_dim();
        let h = self.architecture[1];
        let w = &self.parameters[..d * h];
        let bias = &self.parameters[d * h..d * h + h];
        let mut columns = vec![0.0; d * h];
        for o in 0..h {
            for j in 0..d {
                columns[j * h + o] = w[o * d + j];
            }
        }
        let pre = |row: &[f64]| -> Vec<f64> {
            (0..h)
                .map(|o| w[o * d..(o + 1) * d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + bias[o])
                .collect()
        };
        let zx = pre(x);
        let zb: Vec<Vec<f64>> = background.chunks_exact(d).map(pre).collect();
        let nb = zb.len();
        let single_layer = self.architecture.len() == 2;
        let per_chunk = (BATCH_ROWS / nb).max(1);
        let (mut z, mut scratch) = (Vec::new(), Vec::new());
        let mut cols = Vec::with_capacity(d);
        for (chunk, out) in masks.chunks(per_chunk).zip(out.chunks_mut(per_chunk)) {
            z.clear();
            for mask in chunk {
                let inside = mask.iter().filter(|&&m| m).count();
                let from_background = 2 * inside <= d;
                cols.clear();
                cols.extend((0..d).filter(|&j| mask[j] == from_background));
                for (bg, zbk) in background.chunks_exact(d).zip(&zb) {
                    let start = z.len();
                    let sign = if from_background {
                        z.extend_from_slice(zbk);
                        1.0
                    } else {
                        z.extend_from_slice(&zx);
                        -1.0
                    };
                    let zr = &mut z[start..];
                    for &j in &cols {
                        let delta = sign * (x[j] - bg[j]);
                        if delta != 0.0 {
                            for (zo, c) in zr.iter_mut().zip(&columns[j * h..(j + 1) * h]) {
                                *zo += delta * c;
                            }
                        }
                    }
                }
            }
            let n = chunk.len() * nb;
            if !single_layer {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
                self.forward_batch(1, d * h + h, &mut z, &mut scratch, n);
            }
            for (o, logits) in out.iter_mut().zip(z[..n].chunks_exact(nb)) {
                *o = logits.iter().map(|&l| sigmoid(l)).sum::<f64>() / nb as f64;
            }
        }
    }
}

/// Rows per dense forward pass.
const BATCH_ROWS: usize = 1024;

/// Mean BCE over `batch` rows; when `grad` is given it receives the
/// gradient with respect to every parameter. L2 applies to weights only.
fn loss_and_gradient(
    arch: &[usize],
    params: &[f64],
    features: &[f64],
    labels: &[u8],
    batch: &[usize],
    l2: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let d = arch[0];
    let n_layers = arch.len() - 1;
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for w in arch.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    // activations per layer (index 0 is the input)
    let mut acts: Vec<Vec<f64>> = arch.iter().map(|&w| vec![0.0; w]).collect();
    let mut deltas: Vec<Vec<f64>> = arch.iter().map(|&w| vec![0.0; w]).collect();
    let mut total = 0.0;
    for &i in batch {
        acts[0].copy_from_slice(&features[i * d..(i + 1) * d]);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (arch[l], arch[l + 1]);
            let w = &params[offsets[l]..offsets[l] + fan_in * fan_out];
            let b = &params[offsets[l] + fan_in * fan_out..offsets[l] + fan_in * fan_out + fan_out];
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            for o in 0..fan_out {
                let z = w[o * fan_in..(o + 1) * fan_in]
                    .iter()
                    .zip(input)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + b[o];
                next[0][o] = if l + 1 == n_layers { z } else { z.max(0.0) };
            }
        }
        let z = acts[n_layers][0];
        let y = f64::from(labels[i]);
        total += softplus(z) - y * z;

        let Some(g) = grad.as_deref_mut() else { continue };
        deltas[n_layers][0] = sigmoid(z) - y;
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (arch[l], arch[l + 1]);
            let wo = offsets[l];
            let bo = wo + fan_in * fan_out;
            for o in 0..fan_out {
                let delta = deltas[l + 1][o];
                if delta == 0.0 {
                    continue;
                }
                let gw = &mut g[wo + o * fan_in..wo + (o + 1) * fan_in];
                for (gv, a) in gw.iter_mut().zip(&acts[l]) {
                    *gv += delta * a;
                }
                g[bo + o] += delta;
            }
            if l > 0 {
                let w = &params[wo..wo + fan_in * fan_out];
                let (lower, upper) = deltas.split_at_mut(l + 1);
                let upper = &upper[0];
                for k in 0..fan_in {
                    let mut s = 0.0;
                    for o in 0..fan_out {
                        s += w[o * fan_in + k] * upper[o];
                    }
                    // ReLU derivative, taken as 0 at the kink
                    lower[l][k] = if acts[l][k] > 0.0 { s } else { 0.0 };
                }
            }
        }
    }
    let m = batch.len() as f64;
    let mut reg = 0.0;
    for l in 0..n_layers {
        let w = &params[offsets[l]..offsets[l] + arch[l] * arch[l + 1]];
        reg += w.iter().map(|v| v * v).sum::<f64>();
    }
    if let Some(g) = grad {
        g.iter_mut().for_each(|v| *v /= m);
        if l2 > 0.0 {
            for l in 0..n_layers {
                let range = offsets[l]..offsets[l] + arch[l] * arch[l + 1];
                for (gv, w) in g[range.clone()].iter_mut().zip(&params[range]) {
                    *gv += l2 * w;
                }
            }
        }
    }
    total / m + 0.5 * l2 * reg
}

fn initial_parameters(arch: &[usize], rng: &mut impl Rng) -> Vec<f64> {
    let mut params = Vec::with_capacity(parameter_count(arch));
    for w in arch.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    params
}

/// Trains a classifier with threshold 0.5. Deterministic for a fixed seed:
/// the initialization and every epoch's shuffle come from one seeded stream.
pub fn train(spec: &ModelSpec, data: &TabularDataset, cfg: &TrainConfig) -> Result<Classifier> {
    cfg.validate()?;
    let arch = spec.architecture(data.n_features());
    let mut rng = seed::rng(cfg.seed);
    let mut params = initial_parameters(&arch, &mut rng);
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let loss = loss_and_gradient(
                &arch,
                &params,
                data.features(),
                data.labels(),
                batch,
                cfg.l2_penalty,
                Some(&mut grad),
            );
            if !loss.is_finite() {
                return Err(GesdError::Diverged {
                    learning_rate: cfg.learning_rate,
                });
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(GesdError::Diverged {
            learning_rate: cfg.learning_rate,
        });
    }
    Ok(Classifier {
        kind: spec.kind,
        architecture: arch,
        threshold: 0.5,
        parameters: params,
        train_config: Some(*cfg),
        seed: Some(cfg.seed),
    })
}

/// Largest relative gap between the analytic loss gradient and central
/// finite differences (step 1e-5) over all parameters. The relative error
/// of one coordinate is `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn gradient_check(model: &Classifier, features: &[f64], labels: &[u8]) -> Result<f64> {
    let d = model.input_dim();
    if features.len() != labels.len() * d {
        return Err(GesdError::DimensionMismatch {
            expected: labels.len() * d,
            got: features.len(),
        });
    }
    let l2 = model.train_config.map_or(0.0, |c| c.l2_penalty);
    let batch: Vec<usize> = (0..labels.len()).collect();
    let arch = &model.architecture;
    let mut analytic = vec![0.0; model.parameters.len()];
    loss_and_gradient(arch, &model.parameters, features, labels, &batch, l2, Some(&mut analytic));
    let h = 1e-5;
    let mut params = model.parameters.clone();
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let orig = params[k];
        params[k] = orig + h;
        let up = loss_and_gradient(arch, &params, features, labels, &batch, l2, None);
        params[k] = orig - h;
        let down = loss_and_gradient(arch, &params, features, labels, &batch, l2, None);
        params[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn separable(n: usize, seed: u64) -> TabularDataset {
        let mut rng = seed::rng(seed);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for i in 0..n {
            let a: f64 = rng.random_range(-2.0..2.0);
            let b: f64 = rng.random_range(-2.0..2.0);
            // margin around the separating line a + b = 0
            let shift = if a + b >= 0.0 { 0.5 } else { -0.5 };
            feats.push(vec![a + shift, b + shift]);
            labels.push(u8::from(a + b >= 0.0));
            groups.push(i % 2);
        }
        TabularDataset::new(feats, labels, groups, vec!["a".into(), "b".into()], "g", vec!["0".into(), "1".into()]).unwrap()
    }

    #[test]
    fn logistic_separates_toy_data() {
        let ds = separable(200, 3);
        let cfg = TrainConfig::new(0.1, 200, 7).unwrap();
        let model = train(&ModelSpec::logistic(), &ds, &cfg).unwrap();
        let correct = ds
            .rows()
            .zip(ds.labels())
            .filter(|(x, &y)| model.predict_label(x).unwrap() == y)
            .count();
        assert!(correct as f64 / ds.n_rows() as f64 >= 0.99);

        let mut init = model.clone();
        init.parameters = initial_parameters(&init.architecture, &mut seed::rng(7));
        assert!(model.loss(&ds).unwrap() < init.loss(&ds).unwrap());
    }

    #[test]
    fn zero_epochs_rejected() {
        assert!(matches!(TrainConfig::new(0.1, 0, 1), Err(GesdError::InvalidConfig(_))));
        assert!(TrainConfig::new(0.0, 5, 1).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = separable(64, 5);
        let cfg = TrainConfig::new(0.05, 10, 11).unwrap();
        let a = train(&ModelSpec::mlp(), &ds, &cfg).unwrap();
        let b = train(&ModelSpec::mlp(), &ds, &cfg).unwrap();
        assert_eq!(a.parameters, b.parameters);
        assert_eq!(a.architecture, vec![2, 32, 16, 1]);
    }

    #[test]
    fn score_examples() {
        let zero = Classifier::logistic(vec![0.0; 3], 0.0, 0.5).unwrap();
        assert_eq!(zero.predict_score(&[4.0, -1.0, 9.0]).unwrap(), 0.5);
        let m = Classifier::logistic(vec![1.0, 0.0], 0.0, 0.5).unwrap();
        assert_eq!(m.predict_score(&[0.0, 0.0]).unwrap(), 0.5);
        let mut prev = 0.0;
        for i in -10..=10 {
            let s = m.predict_score(&[i as f64 * 0.5, 3.0]).unwrap();
            assert!(s > prev);
            prev = s;
        }
        assert!(matches!(m.predict_score(&[1.0]), Err(GesdError::DimensionMismatch { .. })));
    }

    #[test]
    fn label_threshold_examples() {
        assert_eq!(label_for(0.6, 0.5), 1);
        assert_eq!(label_for(0.5, 0.5), 1);
        assert_eq!(label_for(0.49, 0.5), 0);
    }

    #[test]
    fn label_matches_score_on_grid() {
        let m = Classifier::logistic(vec![1.3, -0.7], 0.1, 0.5).unwrap();
        for ti in 0..=20 {
            let tau = ti as f64 / 20.0;
            let m = m.clone().with_threshold(tau).unwrap();
            for xi in -10..=10 {
                for yi in -10..=10 {
                    let x = [xi as f64 * 0.3, yi as f64 * 0.3];
                    let s = m.predict_score(&x).unwrap();
                    assert_eq!(m.predict_label(&x).unwrap() == 1, s >= tau);
                }
            }
        }
    }

    fn random_batch(d: usize, n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
        let mut rng = seed::rng(seed);
        let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        (x, y)
    }

    #[test]
    fn gradient_check_mlp_and_logistic() {
        let (x, y) = random_batch(5, 8, 21);
        let arch = ModelSpec::mlp().architecture(5);
        let mlp = Classifier::from_parameters(ModelKind::Mlp, arch.clone(), initial_parameters(&arch, &mut seed::rng(4)), 0.5).unwrap();
        assert!(gradient_check(&mlp, &x, &y).unwrap() < 1e-4);

        let arch = ModelSpec::logistic().architecture(5);
        let lr = Classifier::from_parameters(ModelKind::Logistic, arch.clone(), initial_parameters(&arch, &mut seed::rng(4)), 0.5).unwrap();
        assert!(gradient_check(&lr, &x, &y).unwrap() < 1e-6);
    }

    #[test]
    fn balanced_zero_weight_bias_gradient_vanishes() {
        let (x, _) = random_batch(3, 8, 2);
        let y = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let model = Classifier::logistic(vec![0.0; 3], 0.0, 0.5).unwrap();
        let mut g = vec![0.0; 4];
        loss_and_gradient(&model.architecture, &model.parameters, &x, &y, &(0..8).collect::<Vec<_>>(), 0.0, Some(&mut g));
        assert!(g[3].abs() < 1e-12);
    }

    #[test]
    fn coalition_fast_path_matches_row_scoring() {
        let (x, _) = random_batch(7, 1, 21);
        let (bg, _) = random_batch(7, 6, 22);
        let mut rng = seed::rng(23);
        let masks: Vec<Vec<bool>> = (0..40).map(|_| (0..7).map(|_| rng.random::<bool>()).collect()).collect();
        for spec in [ModelSpec::logistic(), ModelSpec::mlp()] {
            let arch = spec.architecture(7);
            let params = initial_parameters(&arch, &mut rng);
            let model = Classifier::from_parameters(spec.kind, arch, params, 0.5).unwrap();
            let plain = FnModel::new(7, |r: &[f64]| model.score(r));
            let mut fast = vec![0.0; masks.len()];
            let mut slow = vec![0.0; masks.len()];
            model.coalition_means(&x, &bg, &masks, &mut fast);
            plain.coalition_means(&x, &bg, &masks, &mut slow);
            for (f, s) in fast.iter().zip(&slow) {
                assert!((f - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip_preserves_parameters() {
        let ds = separable(32, 9);
        let model = train(&ModelSpec::mlp(), &ds, &TrainConfig::new(0.05, 3, 1).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        model.save_json(&p).unwrap();
        assert_eq!(Classifier::load_json(&p).unwrap(), model);
    }

    #[test]
    fn rejects_wrong_parameter_count() {
        assert!(Classifier::from_parameters(ModelKind::Logistic, vec![2, 1], vec![0.0; 2], 0.5).is_err());
        assert!(Classifier::from_parameters(ModelKind::Mlp, vec![2, 1], vec![0.0; 3], 0.5).is_err());
    }

    #[test]
    fn diverges_on_huge_inputs() {
        let feats = (0..8).map(|_| vec![1e300]).collect();
        let ds = TabularDataset::new(feats, vec![0, 1, 0, 1, 0, 1, 0, 1], vec![0, 1, 0, 1, 0, 1, 0, 1], vec!["x".into()], "g", vec!["a".into(), "b".into()]).unwrap();
        let err = train(&ModelSpec::logistic(), &ds, &TrainConfig::new(0.1, 5, 1).unwrap()).unwrap_err();
        assert!(matches!(err, GesdError::Diverged { learning_rate } if learning_rate == 0.1));
    }

    proptest::proptest! {
        #[test]
        fn score_stays_in_unit_interval(w in proptest::collection::vec(-50.0f64..50.0, 3), x in proptest::collection::vec(-1e3f64..1e3, 3)) {
            let m = Classifier::logistic(w, 0.3, 0.5).unwrap();
            let s = m.predict_score(&x).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
