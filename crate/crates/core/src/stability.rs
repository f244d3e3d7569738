//! Explanation stability under input perturbation and its disparity
//! across sensitive groups (GESD).

use rayon::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{baseline_vector, group_partition, BaselineKind, TabularDataset};
use crate::error::{GesdError, Result};
use crate::explainers::{explain_all, ExplainerConfig, ExplainerContext, ExplanationSet};
use crate::models::{label_for, Classifier, ScoreModel};
use crate::seed;

/// How per-perturbation distances become one stability score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVariant {
    /// Mean over perturbations of `1 / (1 + d_i)`.
    #[default]
    PerPerturbation,
    /// `1 / (1 + mean d_i)`.
    AveragedDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub num_perturbations: usize,
    /// Gaussian noise scale in standardized-feature units.
    pub gaussian_scale: f64,
    /// Probability that a feature is replaced by the baseline.
    pub mask_probability: f64,
    pub baseline: BaselineKind,
    /// Number of evaluation rows audited.
    pub sample_size: usize,
    pub seed: u64,
    pub variant: StabilityVariant,
    /// Discard perturbations that flip the predicted label (resampling up
    /// to five times the budget).
    pub rejection_filter: bool,
    /// Allocate the sampled rows to groups proportionally, at least one each.
    pub stratified: bool,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            num_perturbations: 20,
            gaussian_scale: 0.05,
            mask_probability: 0.1,
            baseline: BaselineKind::Mean,
            sample_size: 100,
            seed: 0,
            variant: StabilityVariant::PerPerturbation,
            rejection_filter: false,
            stratified: true,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_perturbations == 0 {
            return Err(GesdError::InvalidConfig("num_perturbations must be at least 1".into()));
        }
        if self.sample_size == 0 {
            return Err(GesdError::InvalidConfig("sample_size must be at least 1".into()));
        }
        if !(self.gaussian_scale >= 0.0 && self.gaussian_scale.is_finite()) {
            return Err(GesdError::InvalidConfig(format!(
                "gaussian_scale must be a non-negative finite number, got {}",
                self.gaussian_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(GesdError::InvalidConfig(format!(
                "mask_probability must lie in [0, 1], got {}",
                self.mask_probability
            )));
        }
        Ok(())
    }
}

/// `M * (x + eps) + (1 - M) * baseline` with `eps ~ N(0, sigma^2)` and
/// `P(M_j = 0) = p`. Noise is drawn before the mask for every coordinate.
pub fn perturb(x: &[f64], baseline: &[f64], sigma: f64, p: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if x.len() != baseline.len() {
        return Err(GesdError::DimensionMismatch {
            expected: baseline.len(),
            got: x.len(),
        });
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(x.iter()
        .zip(baseline)
        .map(|(&xj, &bj)| {
            let eps = sigma * normal.sample(rng);
            let keep = rng.random::<f64>() >= p;
            if keep {
                xj + eps
            } else {
                bj
            }
        })
        .collect())
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean L1 distance between the explanation of `x` and the explanations of
/// its perturbations. `explain` is called once for `x`, then once per
/// perturbation.
pub fn instance_instability<F>(mut explain: F, x: &[f64], perturbed: &[Vec<f64>]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if perturbed.is_empty() {
        return Err(GesdError::InvalidConfig("no perturbations supplied".into()));
    }
    let original = explain(x)?;
    let mut total = 0.0;
    for (index, xt) in perturbed.iter().enumerate() {
        let e = explain(xt).map_err(|source| GesdError::Perturbation {
            index,
            source: Box::new(source),
        })?;
        total += l1(&original, &e);
    }
    Ok(total / perturbed.len() as f64)
}

/// `1 / (1 + delta)`.
pub fn instance_stability(delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(GesdError::InvalidConfig(format!(
            "instability must be non-negative, got {delta}"
        )));
    }
    Ok(1.0 / (1.0 + delta))
}

fn stability_from_distances(distances: &[f64], variant: StabilityVariant) -> f64 {
    let n = distances.len() as f64;
    match variant {
        StabilityVariant::PerPerturbation => distances.iter().map(|d| 1.0 / (1.0 + d)).sum::<f64>() / n,
        StabilityVariant::AveragedDistance => 1.0 / (1.0 + distances.iter().sum::<f64>() / n),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    /// Row position in the evaluation dataset.
    pub instance_index: usize,
    pub row_id: usize,
    pub group: usize,
    /// `1/stability - 1`, so that `stability = 1 / (1 + instability)`.
    pub instability: f64,
    /// Stability of the aggregated explanation.
    pub stability: f64,
    /// Mean L1 distance of the aggregated explanation.
    pub mean_distance: f64,
    pub shap_stability: f64,
    pub lime_stability: f64,
    /// Perturbations actually used (differs from the budget only with the
    /// rejection filter).
    pub perturbations_used: usize,
}

/// Which explanation the stability is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Shap,
    Lime,
    Combined,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Shap, Channel::Lime, Channel::Combined];

    pub fn of(self, r: &StabilityRecord) -> f64 {
        match self {
            Channel::Shap => r.shap_stability,
            Channel::Lime => r.lime_stability,
            Channel::Combined => r.stability,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Shap => "shap",
            Channel::Lime => "lime",
            Channel::Combined => "combined",
        }
    }
}

/// Mean stability per group over `values` tagged with group indices.
pub fn group_means(values: &[(usize, f64)], k: usize) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for &(g, s) in values {
        if g >= k {
            return Err(GesdError::InvalidDataset(format!("group index {g} out of range for {k} groups")));
        }
        sums[g] += s;
        counts[g] += 1;
    }
    if let Some(group) = counts.iter().position(|&c| c == 0) {
        return Err(GesdError::EmptyGroupInSample { group });
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

pub fn group_stability(records: &[StabilityRecord], k: usize) -> Result<Vec<f64>> {
    let values: Vec<(usize, f64)> = records.iter().map(|r| (r.group, r.stability)).collect();
    group_means(&values, k)
}

/// `|S_0 - S_1|` for two groups, the population variance of the group means
/// otherwise.
pub fn gesd(group_stabilities: &[f64]) -> Result<f64> {
    match group_stabilities.len() {
        0 | 1 => Err(GesdError::TooFewGroups(group_stabilities.len())),
        2 => Ok((group_stabilities[0] - group_stabilities[1]).abs()),
        _ => gesd_variance(group_stabilities),
    }
}

/// Population variance of the group means, for any `K >= 2`.
pub fn gesd_variance(group_stabilities: &[f64]) -> Result<f64> {
    let k = group_stabilities.len();
    if k < 2 {
        return Err(GesdError::TooFewGroups(k));
    }
    // shifted by the first value so equal inputs give exactly zero
    let shift = group_stabilities[0];
    let mean = group_stabilities.iter().map(|s| s - shift).sum::<f64>() / k as f64;
    Ok(group_stabilities.iter().map(|s| (s - shift - mean).powi(2)).sum::<f64>() / k as f64)
}

/// Rows to audit: within each group, the rows with the smallest
/// content-derived hash, so identical rows are picked identically
/// regardless of position. Returned in ascending row order.
pub fn sample_rows(ds: &TabularDataset, m: usize, stratified: bool, seed_: u64) -> Result<Vec<usize>> {
    let n = ds.n_rows();
    let key = |i: usize| (seed::content_seed(seed_, ds.row(i)), i);
    let mut chosen: Vec<usize> = if m >= n {
        (0..n).collect()
    } else if stratified {
        let parts = group_partition(ds);
        let k = parts.len();
        if m < k {
            return Err(GesdError::InvalidConfig(format!(
                "sample_size {m} cannot cover {k} groups"
            )));
        }
        let quotas = allocate(&parts.iter().map(Vec::len).collect::<Vec<_>>(), m);
        let mut out = Vec::with_capacity(m);
        for (part, &q) in parts.iter().zip(&quotas) {
            let mut keyed: Vec<_> = part.iter().map(|&i| key(i)).collect();
            keyed.sort_unstable();
            out.extend(keyed.into_iter().take(q).map(|(_, i)| i));
        }
        out
    } else {
        let mut keyed: Vec<_> = (0..n).map(key).collect();
        keyed.sort_unstable();
        keyed.into_iter().take(m).map(|(_, i)| i).collect()
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Proportional allocation of `m` slots with at least one per non-empty
/// group; leftovers go to the largest remainders, lower index first.
fn allocate(sizes: &[usize], m: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut quota: Vec<usize> = sizes
        .iter()
        .map(|&s| if s == 0 { 0 } else { (s * m / n).clamp(1, s) })
        .collect();
    loop {
        let used: usize = quota.iter().sum();
        if used == m {
            break;
        }
        if used > m {
            // shave the largest quota still above one
            let g = (0..sizes.len()).filter(|&g| quota[g] > 1).max_by_key(|&g| (quota[g], usize::MAX - g)).expect("m >= k");
            quota[g] -= 1;
        } else {
            let g = (0..sizes.len())
                .filter(|&g| quota[g] < sizes[g])
                .max_by(|&a, &b| {
                    let ra = sizes[a] as f64 * m as f64 / n as f64 - quota[a] as f64;
                    let rb = sizes[b] as f64 * m as f64 / n as f64 - quota[b] as f64;
                    ra.total_cmp(&rb).then(b.cmp(&a))
                })
                .expect("m < n");
            quota[g] += 1;
        }
    }
    quota
}

/// State shared by all instances of one audit.
pub struct Auditor<'a, M: ScoreModel + ?Sized> {
    pub model: &'a M,
    pub context: ExplainerContext,
    pub baseline: Vec<f64>,
    pub config: PerturbationConfig,
    /// Decision threshold, used only by the rejection filter.
    pub threshold: f64,
}

impl<'a, M: ScoreModel + ?Sized> Auditor<'a, M> {
    pub fn new(
        model: &'a M,
        train: &TabularDataset,
        config: PerturbationConfig,
        explainer: ExplainerConfig,
        threshold: f64,
    ) -> Result<Self> {
        config.validate()?;
        let context = ExplainerContext::new(train, explainer)?;
        let baseline = baseline_vector(train, config.baseline).values;
        Ok(Auditor {
            model,
            context,
            baseline,
            config,
            threshold,
        })
    }

    fn perturbations(&self, x: &[f64], stream: u64) -> Result<Vec<Vec<f64>>> {
        let cfg = &self.config;
        let mut rng = seed::rng(seed::derive_seed(stream, &[0x9E27]));
        let n = cfg.num_perturbations;
        if !cfg.rejection_filter {
            return (0..n)
                .map(|_| perturb(x, &self.baseline, cfg.gaussian_scale, cfg.mask_probability, &mut rng))
                .collect();
        }
        let label = label_for(self.model.score(x), self.threshold);
        let mut kept = Vec::with_capacity(n);
        let mut first = Vec::new();
        for _ in 0..5 * n {
            let xt = perturb(x, &self.baseline, cfg.gaussian_scale, cfg.mask_probability, &mut rng)?;
            if label_for(self.model.score(&xt), self.threshold) == label {
                kept.push(xt);
                if kept.len() == n {
                    break;
                }
            } else if first.len() < n {
                first.push(xt);
            }
        }
        Ok(if kept.is_empty() { first } else { kept })
    }

    /// Stability record of one instance. The same explainer stream is used
    /// for `x` and every perturbation, so identical inputs give identical
    /// explanations.
    pub fn record(&self, x: &[f64], instance_index: usize, row_id: usize, group: usize) -> Result<StabilityRecord> {
        let stream = seed::content_seed(self.config.seed, x);
        let explain_stream = seed::content_seed(self.context.config.seed, x);
        let perturbed = self.perturbations(x, stream)?;
        let original = explain_all(self.model, x, &self.context, explain_stream)?;
        let mut dist = [Vec::new(), Vec::new(), Vec::new()];
        for (index, xt) in perturbed.iter().enumerate() {
            let e: ExplanationSet = explain_all(self.model, xt, &self.context, explain_stream).map_err(|source| {
                GesdError::Perturbation {
                    index,
                    source: Box::new(source),
                }
            })?;
            dist[0].push(l1(&original.shap.attributions, &e.shap.attributions));
            dist[1].push(l1(&original.lime.attributions, &e.lime.attributions));
            dist[2].push(l1(&original.aggregated.attributions, &e.aggregated.attributions));
        }
        let variant = self.config.variant;
        let stability = stability_from_distances(&dist[2], variant);
        Ok(StabilityRecord {
            instance_index,
            row_id,
            group,
            instability: 1.0 / stability - 1.0,
            stability,
            mean_distance: dist[2].iter().sum::<f64>() / dist[2].len() as f64,
            shap_stability: stability_from_distances(&dist[0], variant),
            lime_stability: stability_from_distances(&dist[1], variant),
            perturbations_used: perturbed.len(),
        })
    }

    /// Records for the given rows of `eval`, in the given order. Rows are
    /// processed in parallel on the current rayon pool.
    pub fn records(&self, eval: &TabularDataset, rows: &[usize]) -> Result<Vec<StabilityRecord>>
    where
        M: Sync,
    {
        rows.par_iter()
            .map(|&i| self.record(eval.row(i), i, eval.row_ids()[i], eval.groups()[i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub group_stabilities: Vec<f64>,
    pub gesd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesdReport {
    pub k: usize,
    pub group_values: Vec<String>,
    pub group_sizes: Vec<usize>,
    /// Combined-explanation group means.
    pub group_stabilities: Vec<f64>,
    pub overall_mean: f64,
    pub gesd: f64,
    /// Variance form evaluated on the same group means.
    pub gesd_variance: f64,
    pub shap: ChannelSummary,
    pub lime: ChannelSummary,
    pub variant: StabilityVariant,
    pub perturbation: PerturbationConfig,
    pub explainer: ExplainerConfig,
    pub per_instance: Vec<StabilityRecord>,
}

impl GesdReport {
    pub fn from_records(
        records: Vec<StabilityRecord>,
        group_values: Vec<String>,
        perturbation: PerturbationConfig,
        explainer: ExplainerConfig,
    ) -> Result<Self> {
        let k = group_values.len();
        if k < 2 {
            return Err(GesdError::TooFewGroups(k));
        }
        let summary = |c: Channel| -> Result<ChannelSummary> {
            let v: Vec<(usize, f64)> = records.iter().map(|r| (r.group, c.of(r))).collect();
            let group_stabilities = group_means(&v, k)?;
            let gesd = gesd(&group_stabilities)?;
            Ok(ChannelSummary { group_stabilities, gesd })
        };
        let combined = summary(Channel::Combined)?;
        let mut group_sizes = vec![0; k];
        for r in &records {
            group_sizes[r.group] += 1;
        }
        Ok(GesdReport {
            k,
            group_values,
            group_sizes,
            overall_mean: combined.group_stabilities.iter().sum::<f64>() / k as f64,
            gesd_variance: gesd_variance(&combined.group_stabilities)?,
            gesd: combined.gesd,
            group_stabilities: combined.group_stabilities,
            shap: summary(Channel::Shap)?,
            lime: summary(Channel::Lime)?,
            variant: perturbation.variant,
            perturbation,
            explainer,
            per_instance: records,
        })
    }

    /// Per-group stability samples of one channel.
    pub fn samples(&self, channel: Channel) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.k];
        for r in &self.per_instance {
            out[r.group].push(channel.of(r));
        }
        out
    }
}

/// Full audit: sample rows of `eval`, score their explanation stability and
/// summarize per group. Deterministic for fixed configs.
pub fn gesd_audit<M: ScoreModel + ?Sized + Sync>(
    model: &M,
    threshold: f64,
    eval: &TabularDataset,
    train: &TabularDataset,
    pcfg: &PerturbationConfig,
    ecfg: &ExplainerConfig,
) -> Result<GesdReport> {
    if eval.n_groups() < 2 {
        return Err(GesdError::TooFewGroups(eval.n_groups()));
    }
    let auditor = Auditor::new(model, train, pcfg.clone(), ecfg.clone(), threshold)?;
    let rows = sample_rows(eval, pcfg.sample_size, pcfg.stratified, pcfg.seed)?;
    let records = auditor.records(eval, &rows)?;
    GesdReport::from_records(records, eval.group_values().to_vec(), pcfg.clone(), ecfg.clone())
}

/// [`gesd_audit`] for a classifier, using its own threshold.
pub fn audit_classifier(
    model: &Classifier,
    eval: &TabularDataset,
    train: &TabularDataset,
    pcfg: &PerturbationConfig,
    ecfg: &ExplainerConfig,
) -> Result<GesdReport> {
    gesd_audit(model, model.threshold, eval, train, pcfg, ecfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FnModel;
    use rand_distr::StandardNormal;

    fn toy(n_per_group: usize, seed_: u64) -> TabularDataset {
        let mut rng = seed::rng(seed_);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for g in 0..2 {
            for i in 0..n_per_group {
                rows.push((0..3).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>());
                labels.push((i % 2) as u8);
                groups.push(g);
            }
        }
        TabularDataset::new(
            rows,
            labels,
            groups,
            vec!["a".into(), "b".into(), "c".into()],
            "g",
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    fn small_explainer() -> ExplainerConfig {
        ExplainerConfig {
            lime_samples: 100,
            background_size: 10,
            ..ExplainerConfig::default()
        }
    }

    #[test]
    fn perturb_identity_and_full_mask() {
        let x = [1.0, -2.0, 3.5];
        let b = [0.1, 0.2, 0.3];
        let mut rng = seed::rng(1);
        assert_eq!(perturb(&x, &b, 0.0, 0.0, &mut rng).unwrap(), x.to_vec());
        assert_eq!(perturb(&x, &b, 0.3, 1.0, &mut rng).unwrap(), b.to_vec());
        assert!(perturb(&x, &b[..2], 0.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn perturb_reproduces_seeded_noise() {
        let sigma = 0.1;
        let x = vec![0.5; 10_000];
        let mut rng = seed::rng(42);
        let xt = perturb(&x, &x, sigma, 0.0, &mut rng).unwrap();
        // regenerate the same stream: one normal then one uniform per coordinate
        let mut again = seed::rng(42);
        for (j, v) in xt.iter().enumerate() {
            let e: f64 = StandardNormal.sample(&mut again);
            let _: f64 = again.random();
            assert_eq!(*v, x[j] + sigma * e);
            assert!((v - x[j]).abs() < 6.0 * sigma);
        }
    }

    #[test]
    fn planted_explanations_give_mean_distance() {
        let table = |x: &[f64]| -> Result<Vec<f64>> {
            Ok(match x[0] as i32 {
                0 => vec![0.0, 0.0],
                1 => vec![1.0, 0.0],
                _ => vec![0.0, 2.0],
            })
        };
        let mut calls = 0;
        let counting = |x: &[f64]| {
            calls += 1;
            table(x)
        };
        let delta = instance_instability(counting, &[0.0], &[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(delta, 1.5);
        assert_eq!(calls, 3);
    }

    #[test]
    fn explainer_errors_carry_perturbation_index() {
        let failing = |x: &[f64]| -> Result<Vec<f64>> {
            if x[0] > 1.5 {
                Err(GesdError::SingularSystem("stub".into()))
            } else {
                Ok(vec![x[0]])
            }
        };
        let err = instance_instability(failing, &[0.0], &[vec![1.0], vec![2.0]]).unwrap_err();
        assert!(matches!(err, GesdError::Perturbation { index: 1, .. }));
    }

    #[test]
    fn stability_examples() {
        assert_eq!(instance_stability(0.0).unwrap(), 1.0);
        assert_eq!(instance_stability(1.0).unwrap(), 0.5);
        assert_eq!(instance_stability(3.0).unwrap(), 0.25);
        assert!(instance_stability(-0.1).is_err());
        assert!(instance_stability(f64::NAN).is_err());
    }

    #[test]
    fn group_and_gesd_examples() {
        let g = group_means(&[(0, 1.0), (0, 0.5), (1, 0.25)], 2).unwrap();
        assert_eq!(g, vec![0.75, 0.25]);
        assert_eq!(group_means(&[(0, 0.3), (1, 0.3), (1, 0.3)], 2).unwrap(), vec![0.3, 0.3]);
        assert!(matches!(group_means(&[(0, 1.0)], 2), Err(GesdError::EmptyGroupInSample { group: 1 })));
        assert!((gesd(&[0.8, 0.6]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(gesd(&[0.4, 0.4, 0.4]).unwrap(), 0.0);
        assert!((gesd(&[0.9, 0.8, 0.7]).unwrap() - 0.02 / 3.0).abs() < 1e-15);
        assert!(matches!(gesd(&[0.5]), Err(GesdError::TooFewGroups(1))));
    }

    #[test]
    fn allocation_is_proportional_with_floor_of_one() {
        assert_eq!(allocate(&[50, 50], 10), vec![5, 5]);
        assert_eq!(allocate(&[99, 1], 10), vec![9, 1]);
        assert_eq!(allocate(&[7, 3], 5), vec![4, 1]);
        assert_eq!(allocate(&[1, 1, 98], 3), vec![1, 1, 1]);
        assert_eq!(allocate(&[310, 690], 30).iter().sum::<usize>(), 30);
    }

    #[test]
    fn identity_perturbation_gives_zero_gesd() {
        let ds = toy(10, 3);
        let model = FnModel::new(3, |x: &[f64]| crate::models::sigmoid(x[0] - 2.0 * x[1] * x[2]));
        let pcfg = PerturbationConfig {
            gaussian_scale: 0.0,
            mask_probability: 0.0,
            num_perturbations: 3,
            sample_size: 8,
            ..PerturbationConfig::default()
        };
        let r = gesd_audit(&model, 0.5, &ds, &ds, &pcfg, &small_explainer()).unwrap();
        assert_eq!(r.gesd, 0.0);
        assert!(r.per_instance.iter().all(|x| x.stability == 1.0 && x.instability == 0.0));
        assert_eq!(r.group_sizes, vec![4, 4]);
    }

    #[test]
    fn audit_is_reproducible_and_consistent() {
        let ds = toy(12, 4);
        let model = FnModel::new(3, |x: &[f64]| crate::models::sigmoid(x[0] + x[1] * x[2]));
        let pcfg = PerturbationConfig {
            num_perturbations: 4,
            sample_size: 10,
            gaussian_scale: 0.3,
            ..PerturbationConfig::default()
        };
        let a = gesd_audit(&model, 0.5, &ds, &ds, &pcfg, &small_explainer()).unwrap();
        let b = gesd_audit(&model, 0.5, &ds, &ds, &pcfg, &small_explainer()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let diff = a.group_stabilities[0] - a.group_stabilities[1];
        assert!((a.gesd_variance - diff * diff / 4.0).abs() < 1e-12);
        assert!((a.overall_mean - (a.group_stabilities[0] + a.group_stabilities[1]) / 2.0).abs() < 1e-12);
        for r in &a.per_instance {
            assert!(r.stability > 0.0 && r.stability <= 1.0);
            assert!((r.stability - 1.0 / (1.0 + r.instability)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejection_filter_keeps_label() {
        let ds = toy(6, 5);
        let model = FnModel::new(3, |x: &[f64]| crate::models::sigmoid(10.0 * x[0]));
        let pcfg = PerturbationConfig {
            num_perturbations: 5,
            gaussian_scale: 0.5,
            rejection_filter: true,
            ..PerturbationConfig::default()
        };
        let auditor = Auditor::new(&model, &ds, pcfg, small_explainer(), 0.5).unwrap();
        let x = [0.05, 0.0, 0.0];
        let kept = auditor.perturbations(&x, 7).unwrap();
        assert!(!kept.is_empty() && kept.len() <= 5);
        assert!(kept.iter().all(|xt| label_for(model.score(xt), 0.5) == 1));
    }

    #[test]
    fn variants_follow_jensen() {
        let d = [0.0, 2.0];
        let per = stability_from_distances(&d, StabilityVariant::PerPerturbation);
        let avg = stability_from_distances(&d, StabilityVariant::AveragedDistance);
        assert!((per - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(avg, 0.5);
        assert!(per >= avg);
    }

    proptest::proptest! {
        #[test]
        fn gesd_invariant_under_relabeling(s in proptest::collection::vec(0.01f64..1.0, 2..6), rot in 0usize..6) {
            let mut t = s.clone();
            let r = rot % t.len();
            t.rotate_left(r);
            proptest::prop_assert!((gesd(&s).unwrap() - gesd(&t).unwrap()).abs() < 1e-15);
        }

        #[test]
        fn two_group_variance_identity(a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let v = gesd_variance(&[a, b]).unwrap();
            proptest::prop_assert!((v - (a - b).powi(2) / 4.0).abs() < 1e-12);
        }

        #[test]
        fn stability_in_unit_interval(delta in 0.0f64..1e6) {
            let s = instance_stability(delta).unwrap();
            proptest::prop_assert!(s > 0.0 && s <= 1.0);
            proptest::prop_assert_eq!(s == 1.0, delta == 0.0);
        }
    }
}
