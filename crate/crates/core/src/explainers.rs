//! Model-agnostic feature attributions: KernelSHAP (exact coalition
//! enumeration for small `d`, kernel-weighted sampling otherwise) and
//! tabular LIME, plus the element-wise average of the two.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{GesdError, Result};
use crate::models::ScoreModel;
use crate::seed;

/// Above this many features KernelSHAP samples coalitions instead of
/// enumerating all `2^d - 2` of them.
pub const EXACT_SHAP_MAX_FEATURES: usize = 11;

const SINGULAR_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplanationSource {
    Shap,
    Lime,
    Aggregated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationVector {
    pub attributions: Vec<f64>,
    pub source: ExplanationSource,
    /// Expected model output over the background (SHAP only; 0 otherwise).
    pub base_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainerConfig {
    /// Coalition budget for sampled KernelSHAP (`d > 11`); must be at least `2d + 2`.
    pub shap_samples: usize,
    pub lime_samples: usize,
    /// LIME kernel width in standardized units; `None` means `0.75 * sqrt(d)`.
    pub lime_kernel_width: Option<f64>,
    pub lime_ridge: f64,
    /// Number of training rows used as the SHAP background.
    pub background_size: usize,
    pub seed: u64,
    /// L2-normalize SHAP and LIME vectors before averaging them.
    pub normalize_before_aggregation: bool,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            shap_samples: 256,
            lime_samples: 500,
            lime_kernel_width: None,
            lime_ridge: 1.0,
            background_size: 50,
            seed: 0,
            normalize_before_aggregation: false,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shap_samples == 0 || self.lime_samples == 0 || self.background_size == 0 {
            return Err(GesdError::InvalidConfig(
                "explainer sample counts and background size must be positive".into(),
            ));
        }
        if let Some(w) = self.lime_kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(GesdError::InvalidConfig(format!(
                    "LIME kernel width must be positive, got {w}"
                )));
            }
        }
        if !(self.lime_ridge >= 0.0) {
            return Err(GesdError::InvalidConfig("LIME ridge must be non-negative".into()));
        }
        Ok(())
    }
}

/// Training-data state shared by all explanations of one audit: the SHAP
/// background rows and the per-feature spread used by LIME.
#[derive(Debug, Clone)]
pub struct ExplainerContext {
    pub config: ExplainerConfig,
    n_features: usize,
    background: Vec<f64>,
    feature_std: Vec<f64>,
}

impl ExplainerContext {
    /// Samples `background_size` rows of `train` (all rows when fewer) with
    /// the config seed and records per-feature population std.
    pub fn new(train: &TabularDataset, config: ExplainerConfig) -> Result<Self> {
        config.validate()?;
        let n = train.n_rows();
        let mut rng = seed::rng(seed::derive_seed(config.seed, &[0xB4C6]));
        let mut rows: Vec<usize> = if n <= config.background_size {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, config.background_size).into_vec()
        };
        rows.sort_unstable();
        let mut background = Vec::with_capacity(rows.len() * train.n_features());
        for &i in &rows {
            background.extend_from_slice(train.row(i));
        }
        let d = train.n_features();
        let nf = n as f64;
        let feature_std = (0..d)
            .map(|j| {
                let mean = train.rows().map(|r| r[j]).sum::<f64>() / nf;
                (train.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / nf).sqrt()
            })
            .collect();
        Ok(ExplainerContext {
            config,
            n_features: d,
            background,
            feature_std,
        })
    }

    /// Context with explicit background rows and LIME spreads.
    pub fn from_parts(
        config: ExplainerConfig,
        background: Vec<Vec<f64>>,
        feature_std: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let d = feature_std.len();
        if d == 0 || background.is_empty() {
            return Err(GesdError::InvalidConfig("empty background or feature set".into()));
        }
        let mut flat = Vec::with_capacity(background.len() * d);
        for row in &background {
            if row.len() != d {
                return Err(GesdError::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Ok(ExplainerContext {
            config,
            n_features: d,
            background: flat,
            feature_std,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn background(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.background.chunks_exact(self.n_features)
    }

    pub fn n_background(&self) -> usize {
        self.background.len() / self.n_features
    }

    pub fn feature_std(&self) -> &[f64] {
        &self.feature_std
    }

    pub fn kernel_width(&self) -> f64 {
        self.config
            .lime_kernel_width
            .unwrap_or(0.75 * (self.n_features as f64).sqrt())
    }

    /// Random-stream seed for the `index`-th explained instance.
    pub fn instance_seed(&self, index: u64) -> u64 {
        seed::derive_seed(self.config.seed, &[index])
    }

    fn check<M: ScoreModel + ?Sized>(&self, model: &M, x: &[f64]) -> Result<()> {
        for got in [model.n_features(), x.len()] {
            if got != self.n_features {
                return Err(GesdError::DimensionMismatch {
                    expected: self.n_features,
                    got,
                });
            }
        }
        Ok(())
    }
}

/// A coalition design: rows are 0/1 membership masks with regression weights.
struct Coalitions {
    masks: Vec<Vec<bool>>,
    weights: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn shapley_kernel(d: usize, s: usize) -> f64 {
    (d - 1) as f64 / (binomial(d, s) * s as f64 * (d - s) as f64)
}

fn exhaustive_coalitions(d: usize) -> Coalitions {
    let total = 1usize << d;
    let mut masks = Vec::with_capacity(total - 2);
    let mut weights = Vec::with_capacity(total - 2);
    for bits in 1..total - 1 {
        let mask: Vec<bool> = (0..d).map(|j| bits >> j & 1 == 1).collect();
        let s = bits.count_ones() as usize;
        masks.push(mask);
        weights.push(shapley_kernel(d, s));
    }
    Coalitions { masks, weights }
}

/// Kernel-weighted coalition sampling: coalition sizes whose subsets fit in
/// the budget are enumerated outright (small and large sizes first, paired
/// with their complements); the remaining budget is spent on random subsets
/// drawn in complementary pairs.
fn sampled_coalitions(d: usize, budget: usize, rng: &mut impl Rng) -> Coalitions {
    let n_sizes = (d - 1).div_ceil(2);
    let n_paired = (d - 1) / 2;
    let mut size_weight: Vec<f64> = (1..=n_sizes)
        .map(|s| (d - 1) as f64 / (s * (d - s)) as f64)
        .collect();
    for w in size_weight.iter_mut().take(n_paired) {
        *w *= 2.0;
    }
    let norm: f64 = size_weight.iter().sum();
    size_weight.iter_mut().for_each(|w| *w /= norm);

    let mut masks = Vec::new();
    let mut weights = Vec::new();
    let mut left = budget as f64;
    let mut remaining = size_weight.clone();
    let mut full_sizes = 0;
    for s in 1..=n_sizes {
        let paired = s <= n_paired;
        let n_subsets = binomial(d, s) * if paired { 2.0 } else { 1.0 };
        if left * remaining[s - 1] / n_subsets < 1.0 - 1e-8 {
            break;
        }
        full_sizes += 1;
        left -= n_subsets;
        if remaining[s - 1] < 1.0 {
            let scale = 1.0 - remaining[s - 1];
            remaining.iter_mut().for_each(|w| *w /= scale);
        }
        let mut w = size_weight[s - 1] / binomial(d, s);
        if paired {
            w /= 2.0;
        }
        for combo in Combinations::new(d, s) {
            let mut mask = vec![false; d];
            for j in combo {
                mask[j] = true;
            }
            if paired {
                masks.push(mask.iter().map(|b| !b).collect());
                weights.push(w);
            }
            masks.push(mask);
            weights.push(w);
        }
    }

    let fixed = masks.len();
    let mut left = budget.saturating_sub(fixed);
    if full_sizes < n_sizes && left > 0 {
        let mut size_probs: Vec<f64> = size_weight.clone();
        for w in size_probs.iter_mut().take(n_paired) {
            *w /= 2.0;
        }
        let size_probs = &size_probs[full_sizes..];
        let dist = WeightedIndex::new(size_probs).expect("positive size weights");
        let mut seen: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut draws = 0;
        let mut features: Vec<usize> = (0..d).collect();
        while left > 0 && draws < 4 * budget {
            draws += 1;
            let s = dist.sample(rng) + full_sizes + 1;
            features.shuffle(rng);
            let mut mask = vec![false; d];
            for &j in &features[..s] {
                mask[j] = true;
            }
            let mut add = |mask: Vec<bool>, masks: &mut Vec<Vec<bool>>, weights: &mut Vec<f64>| -> bool {
                match seen.get(&mask) {
                    Some(&at) => {
                        weights[at] += 1.0;
                        false
                    }
                    None => {
                        seen.insert(mask.clone(), masks.len());
                        masks.push(mask);
                        weights.push(1.0);
                        true
                    }
                }
            };
            let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
            if add(mask, &mut masks, &mut weights) {
                left -= 1;
            }
            if left > 0 && s <= n_paired && add(complement, &mut masks, &mut weights) {
                left -= 1;
            }
        }
        let weight_left: f64 = size_weight[full_sizes..].iter().sum();
        let sampled: f64 = weights[fixed..].iter().sum();
        if sampled > 0.0 {
            weights[fixed..].iter_mut().for_each(|w| *w *= weight_left / sampled);
        }
    }
    Coalitions { masks, weights }
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Value of each coalition: mean model score with coalition features taken
/// from `x` and the rest from each background row.
fn coalition_values<M: ScoreModel + ?Sized>(
    model: &M,
    x: &[f64],
    ctx: &ExplainerContext,
    masks: &[Vec<bool>],
) -> Vec<f64> {
    let mut values = vec![0.0; masks.len()];
    model.coalition_means(x, &ctx.background, masks, &mut values);
    values
}

/// `(X^T X, X^T y)` for a row-major `n x k` matrix `X`.
fn normal_equations(x: &[f64], y: &[f64], n: usize, k: usize) -> (DMatrix<f64>, DVector<f64>) {
    assert!(x.len() == n * k && y.len() == n);
    let mut a = vec![0.0; k * k];
    let mut r = vec![0.0; k];
    // SAFETY: x is n x k row-major (read transposed as k x n), y is n x 1,
    // outputs are k x k and k x 1 row-major; lengths asserted above.
    unsafe {
        matrixmultiply::dgemm(k, n, k, 1.0, x.as_ptr(), 1, k as isize, x.as_ptr(), k as isize, 1, 0.0, a.as_mut_ptr(), k as isize, 1);
        matrixmultiply::dgemm(k, n, 1, 1.0, x.as_ptr(), 1, k as isize, y.as_ptr(), 1, 1, 0.0, r.as_mut_ptr(), 1, 1);
    }
    (DMatrix::from_row_slice(k, k, &a), DVector::from_vec(r))
}

/// Solves `(A + ridge I) b = r` by Cholesky, retrying once with
/// [`SINGULAR_RIDGE`] added when the system is singular.
fn solve_spd(mut a: DMatrix<f64>, rhs: DVector<f64>, ridge: f64, what: &str) -> Result<DVector<f64>> {
    for i in 0..a.nrows() {
        a[(i, i)] += ridge;
    }
    if let Some(ch) = a.clone().cholesky() {
        let sol = ch.solve(&rhs);
        if sol.iter().all(|v| v.is_finite()) {
            return Ok(sol);
        }
    }
    for i in 0..a.nrows() {
        a[(i, i)] += SINGULAR_RIDGE;
    }
    a.cholesky()
        .map(|ch| ch.solve(&rhs))
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| GesdError::SingularSystem(what.to_string()))
}

/// KernelSHAP attributions of `model` at `x`.
///
/// The weighted least-squares fit is solved with the efficiency constraint
/// eliminated, so `base_value + sum(attributions) == f(x)` up to rounding.
/// `stream_seed` only matters when coalitions are sampled.
pub fn explain_shap<M: ScoreModel + ?Sized>(
    model: &M,
    x: &[f64],
    ctx: &ExplainerContext,
    stream_seed: u64,
) -> Result<ExplanationVector> {
    ctx.check(model, x)?;
    let d = ctx.n_features;
    let mut base_scores = vec![0.0; ctx.n_background()];
    model.score_batch(&ctx.background, &mut base_scores);
    let base_value = base_scores.iter().sum::<f64>() / base_scores.len() as f64;
    let fx = model.score(x);
    let total = fx - base_value;
    if d == 1 {
        return Ok(ExplanationVector {
            attributions: vec![total],
            source: ExplanationSource::Shap,
            base_value,
        });
    }

    let design = if d <= EXACT_SHAP_MAX_FEATURES {
        exhaustive_coalitions(d)
    } else {
        if ctx.config.shap_samples < 2 * d + 2 {
            return Err(GesdError::InvalidConfig(format!(
                "shap_samples = {} is below 2d+2 = {} for d = {d}",
                ctx.config.shap_samples,
                2 * d + 2
            )));
        }
        let mut rng = seed::rng(seed::derive_seed(stream_seed, &[0x5A4F]));
        sampled_coalitions(d, ctx.config.shap_samples, &mut rng)
    };
    let values = coalition_values(model, x, ctx, &design.masks);

    // eliminate the last feature through the efficiency constraint
    let k = d - 1;
    let n = design.masks.len();
    let mut xw = vec![0.0; n * k];
    let mut yw = vec![0.0; n];
    for (i, ((mask, &w), &v)) in design.masks.iter().zip(&design.weights).zip(&values).enumerate() {
        let sw = w.sqrt();
        let last = if mask[k] { 1.0 } else { 0.0 };
        for j in 0..k {
            xw[i * k + j] = sw * ((if mask[j] { 1.0 } else { 0.0 }) - last);
        }
        yw[i] = sw * ((v - base_value) - last * total);
    }
    let (a, r) = normal_equations(&xw, &yw, n, k);
    let phi = solve_spd(a, r, 0.0, "KernelSHAP")?;
    let mut attributions: Vec<f64> = phi.iter().copied().collect();
    attributions.push(total - attributions.iter().sum::<f64>());
    Ok(ExplanationVector {
        attributions,
        source: ExplanationSource::Shap,
        base_value,
    })
}

/// Perturbed samples around `x` (the first sample is `x` itself) and their
/// kernel weights `exp(-dist^2 / width^2)`, with distances measured in units
/// of each feature's training spread.
pub fn lime_neighborhood(
    x: &[f64],
    ctx: &ExplainerContext,
    stream_seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if x.len() != ctx.n_features {
        return Err(GesdError::DimensionMismatch {
            expected: ctx.n_features,
            got: x.len(),
        });
    }
    if ctx.feature_std.iter().all(|&s| s == 0.0) {
        return Err(GesdError::DegenerateSpread(format!(
            "every feature has zero training spread ({:?})",
            ctx.config
        )));
    }
    let width = ctx.kernel_width();
    let mut rng = seed::rng(seed::derive_seed(stream_seed, &[0x11AE]));
    let mut samples = Vec::with_capacity(ctx.config.lime_samples);
    let mut weights = Vec::with_capacity(ctx.config.lime_samples);
    samples.push(x.to_vec());
    weights.push(1.0);
    for _ in 1..ctx.config.lime_samples {
        let mut z = Vec::with_capacity(x.len());
        let mut dist2 = 0.0;
        for (&xj, &sj) in x.iter().zip(&ctx.feature_std) {
            let e: f64 = StandardNormal.sample(&mut rng);
            if sj > 0.0 {
                dist2 += e * e;
                z.push(xj + sj * e);
            } else {
                z.push(xj);
            }
        }
        samples.push(z);
        weights.push((-dist2 / (width * width)).exp());
    }
    Ok((samples, weights))
}

/// LIME attributions: weighted ridge regression of the model score on the
/// neighborhood samples; features with zero training spread get 0.
pub fn explain_lime<M: ScoreModel + ?Sized>(
    model: &M,
    x: &[f64],
    ctx: &ExplainerContext,
    stream_seed: u64,
) -> Result<ExplanationVector> {
    ctx.check(model, x)?;
    let (samples, weights) = lime_neighborhood(x, ctx, stream_seed)?;
    let d = ctx.n_features;
    let mut flat = Vec::with_capacity(samples.len() * d);
    for s in &samples {
        flat.extend_from_slice(s);
    }
    let mut y = vec![0.0; samples.len()];
    model.score_batch(&flat, &mut y);

    let mut attributions = vec![0.0; d];
    if y.iter().all(|&v| v == y[0]) {
        return Ok(ExplanationVector {
            attributions,
            source: ExplanationSource::Lime,
            base_value: 0.0,
        });
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return Err(GesdError::DegenerateSpread(format!(
            "all kernel weights vanished (width {}, {:?})",
            ctx.kernel_width(),
            ctx.config
        )));
    }
    let active: Vec<usize> = (0..d).filter(|&j| ctx.feature_std[j] > 0.0).collect();
    let k = active.len();
    let mut mean_x = vec![0.0; k];
    let mut mean_y = 0.0;
    for ((s, &w), &yv) in samples.iter().zip(&weights).zip(&y) {
        for (m, &j) in mean_x.iter_mut().zip(&active) {
            *m += w * s[j];
        }
        mean_y += w * yv;
    }
    mean_x.iter_mut().for_each(|m| *m /= wsum);
    mean_y /= wsum;

    let n = samples.len();
    let mut xw = vec![0.0; n * k];
    let mut yw = vec![0.0; n];
    for (i, ((s, &w), &yv)) in samples.iter().zip(&weights).zip(&y).enumerate() {
        let sw = w.sqrt();
        for (c, &j) in active.iter().enumerate() {
            xw[i * k + c] = sw * (s[j] - mean_x[c]);
        }
        yw[i] = sw * (yv - mean_y);
    }
    let (a, r) = normal_equations(&xw, &yw, n, k);
    let beta = solve_spd(a, r, ctx.config.lime_ridge, "LIME")?;
    for (i, &j) in active.iter().enumerate() {
        attributions[j] = beta[i];
    }
    Ok(ExplanationVector {
        attributions,
        source: ExplanationSource::Lime,
        base_value: 0.0,
    })
}

fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter().map(|a| a / norm).collect()
    } else {
        v.to_vec()
    }
}

/// Element-wise mean of a SHAP and a LIME explanation.
pub fn aggregate(shap: &ExplanationVector, lime: &ExplanationVector) -> Result<ExplanationVector> {
    aggregate_with(shap, lime, false)
}

pub fn aggregate_with(
    shap: &ExplanationVector,
    lime: &ExplanationVector,
    normalize: bool,
) -> Result<ExplanationVector> {
    if shap.attributions.len() != lime.attributions.len() {
        return Err(GesdError::DimensionMismatch {
            expected: shap.attributions.len(),
            got: lime.attributions.len(),
        });
    }
    let (a, b) = if normalize {
        (l2_normalized(&shap.attributions), l2_normalized(&lime.attributions))
    } else {
        (shap.attributions.clone(), lime.attributions.clone())
    };
    Ok(ExplanationVector {
        attributions: a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect(),
        source: ExplanationSource::Aggregated,
        base_value: 0.0,
    })
}

/// SHAP, LIME and aggregated explanations of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSet {
    pub shap: ExplanationVector,
    pub lime: ExplanationVector,
    pub aggregated: ExplanationVector,
}

pub fn explain_all<M: ScoreModel + ?Sized>(
    model: &M,
    x: &[f64],
    ctx: &ExplainerContext,
    stream_seed: u64,
) -> Result<ExplanationSet> {
    let shap = explain_shap(model, x, ctx, stream_seed)?;
    let lime = explain_lime(model, x, ctx, stream_seed)?;
    let aggregated = aggregate_with(&shap, &lime, ctx.config.normalize_before_aggregation)?;
    Ok(ExplanationSet {
        shap,
        lime,
        aggregated,
    })
}
