//! Outcome fairness, utility and the Mann-Whitney rank test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{GesdError, Result};
use crate::models::label_for;

/// Scores, true labels, thresholded predictions and group indices of one
/// evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub predicted: Vec<u8>,
    pub groups: Vec<usize>,
}

impl PredictionSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, predicted: Vec<u8>, groups: Vec<usize>) -> Result<Self> {
        let n = scores.len();
        for len in [labels.len(), predicted.len(), groups.len()] {
            if len != n {
                return Err(GesdError::DimensionMismatch { expected: n, got: len });
            }
        }
        if labels.iter().chain(&predicted).any(|&v| v > 1) {
            return Err(GesdError::InvalidDataset("labels and predictions must be 0 or 1".into()));
        }
        Ok(PredictionSet {
            scores,
            labels,
            predicted,
            groups,
        })
    }

    /// Thresholds `scores` at `threshold` (a score equal to it is positive).
    pub fn from_scores(scores: Vec<f64>, labels: Vec<u8>, groups: Vec<usize>, threshold: f64) -> Result<Self> {
        let predicted = scores.iter().map(|&s| label_for(s, threshold)).collect();
        Self::new(scores, labels, predicted, groups)
    }

    /// Only the predictions are known; scores are set to the predictions.
    pub fn from_predictions(predicted: Vec<u8>, labels: Vec<u8>, groups: Vec<usize>) -> Result<Self> {
        let scores = predicted.iter().map(|&p| f64::from(p)).collect();
        Self::new(scores, labels, predicted, groups)
    }

    fn check_two_groups(&self) -> Result<()> {
        let mut seen = [false; 2];
        for &g in &self.groups {
            if g > 1 {
                return Err(GesdError::UndefinedMetric(format!(
                    "binary group metrics need groups 0 and 1, found group {g}"
                )));
            }
            seen[g] = true;
        }
        match seen.iter().position(|s| !s) {
            Some(g) => Err(GesdError::UndefinedMetric(format!("group {g} has no rows"))),
            None => Ok(()),
        }
    }

    fn positive_rate(&self, keep: impl Fn(usize) -> bool) -> Option<f64> {
        let (mut pos, mut n) = (0usize, 0usize);
        for i in (0..self.predicted.len()).filter(|&i| keep(i)) {
            n += 1;
            pos += usize::from(self.predicted[i]);
        }
        (n > 0).then(|| pos as f64 / n as f64)
    }
}

/// `|P(Y^=1 | G=0) - P(Y^=1 | G=1)|`.
pub fn dp_difference(p: &PredictionSet) -> Result<f64> {
    p.check_two_groups()?;
    let r0 = p.positive_rate(|i| p.groups[i] == 0).expect("checked");
    let r1 = p.positive_rate(|i| p.groups[i] == 1).expect("checked");
    Ok((r0 - r1).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EodVariant {
    /// Largest gap over `y = 0` and `y = 1`.
    #[default]
    MaxOverLabels,
    /// Gap at `y = 1` only (true-positive rates).
    PositiveOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EodResult {
    pub value: f64,
    pub variant: EodVariant,
    /// `(group, y)` strata with no rows; their gap counts as 0.
    pub empty_strata: Vec<(usize, u8)>,
}

/// Equalized-odds difference.
pub fn eod_difference(p: &PredictionSet, variant: EodVariant) -> Result<EodResult> {
    p.check_two_groups()?;
    let ys: &[u8] = match variant {
        EodVariant::MaxOverLabels => &[0, 1],
        EodVariant::PositiveOnly => &[1],
    };
    let mut value: f64 = 0.0;
    let mut empty_strata = Vec::new();
    for &y in ys {
        let rate = |g: usize| p.positive_rate(|i| p.groups[i] == g && p.labels[i] == y);
        match (rate(0), rate(1)) {
            (Some(a), Some(b)) => value = value.max((a - b).abs()),
            (a, b) => {
                if a.is_none() {
                    empty_strata.push((0, y));
                }
                if b.is_none() {
                    empty_strata.push((1, y));
                }
            }
        }
    }
    Ok(EodResult {
        value,
        variant,
        empty_strata,
    })
}

/// Pair counts `(greater, tied)` of positive-vs-negative score comparisons.
fn pair_counts(scores: &[f64], labels: &[u8]) -> Result<(f64, f64, f64)> {
    if scores.len() != labels.len() {
        return Err(GesdError::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let mut neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(GesdError::UndefinedMetric("AUC needs both positive and negative labels".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GesdError::UndefinedMetric("NaN score".into()));
    }
    neg.sort_by(f64::total_cmp);
    let (mut greater, mut tied) = (0u64, 0u64);
    for s in &pos {
        let below = neg.partition_point(|v| v < s);
        let not_above = neg.partition_point(|v| v <= s);
        greater += below as u64;
        tied += (not_above - below) as u64;
    }
    Ok((greater as f64, tied as f64, (pos.len() * neg.len()) as f64))
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (g, t, total) = pair_counts(scores, labels)?;
    Ok((g + 0.5 * t) / total)
}

/// AUC with ties counted as losses.
pub fn auc_strict(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (g, _, total) = pair_counts(scores, labels)?;
    Ok(g / total)
}

/// F1 score of class 1; 0 when precision and recall are both 0.
pub fn f1(p: &PredictionSet) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&y, &yh) in p.labels.iter().zip(&p.predicted) {
        match (y, yh) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    /// Exact when `n_a + n_b <= 12` and there are no ties.
    #[default]
    Auto,
    Exact,
    Asymptotic,
}

/// Largest combined sample size for which the exact null is used by default.
pub const EXACT_MAX_TOTAL: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Rank-sum statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `values` and the tie-correction sum `sum(t^3 - t)`.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Number of ways the first `m` of `m + n` distinct ranks give each value
/// `U = 0..=m*n`.
fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    // f[i][j][u]: i items from the first sample, j from the second
    let max_u = m * n;
    let mut prev: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n + 1];
    for row in prev.iter_mut() {
        row[0] = 1.0;
    }
    for i in 1..=m {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n + 1];
        cur[0][0] = 1.0;
        for j in 1..=n {
            for u in 0..=i * j {
                // largest element belongs to the first sample (adds j) or the second
                let from_a = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = from_a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// Two-sided Mann-Whitney U test.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    mann_whitney_u_with(a, b, PValueMethod::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: PValueMethod) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(GesdError::UndefinedMetric("Mann-Whitney needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(GesdError::UndefinedMetric("NaN in Mann-Whitney sample".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&all);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u_a = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let nab = (na * nb) as f64;
    let u_b = nab - u_a;
    let exact = match method {
        PValueMethod::Exact => {
            if ties > 0.0 {
                return Err(GesdError::UndefinedMetric("exact p-value requires tie-free samples".into()));
            }
            true
        }
        PValueMethod::Asymptotic => false,
        PValueMethod::Auto => ties == 0.0 && na + nb <= EXACT_MAX_TOTAL,
    };
    let p_value = if exact {
        let (m, n) = (na.min(nb), na.max(nb));
        let counts = u_distribution(m, n);
        let total: f64 = counts.iter().sum();
        let u_min = u_a.min(u_b).round() as usize;
        let tail: f64 = counts[..=u_min].iter().sum();
        (2.0 * tail / total).min(1.0)
    } else {
        let n = (na + nb) as f64;
        let mu = nab / 2.0;
        let var = nab / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
        if !(var > 0.0) {
            1.0
        } else {
            let z = (u_a.max(u_b) - mu - 0.5) / var.sqrt();
            // two-sided: 2 * normal survival at z
            erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
        }
    };
    Ok(MannWhitney {
        u: u_a,
        p_value,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(pred: &[u8], labels: &[u8], groups: &[usize]) -> PredictionSet {
        PredictionSet::from_predictions(pred.to_vec(), labels.to_vec(), groups.to_vec()).unwrap()
    }

    #[test]
    fn dp_examples() {
        assert_eq!(dp_difference(&ps(&[1, 0, 1, 0], &[0; 4], &[0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(dp_difference(&ps(&[1, 1, 0, 0], &[0; 4], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(dp_difference(&ps(&[1, 0, 1, 1, 0, 0], &[0; 6], &[0, 0, 1, 1, 1, 1])).unwrap(), 0.0);
        assert!(dp_difference(&ps(&[1, 0], &[0, 0], &[0, 0])).is_err());
    }

    #[test]
    fn eod_examples() {
        let labels = [1, 1, 0, 0, 1, 1, 0, 0];
        let groups = [0, 0, 0, 0, 1, 1, 1, 1];
        // perfect classifier
        let r = eod_difference(&ps(&labels, &labels, &groups), EodVariant::MaxOverLabels).unwrap();
        assert_eq!(r.value, 0.0);
        // TPR 1.0 vs 0.5, FPR 0.5 in both groups
        let pred = [1, 1, 1, 0, 1, 0, 0, 1];
        let p = ps(&pred, &labels, &groups);
        let tpr = |g: usize| {
            let idx: Vec<usize> = (0..8).filter(|&i| groups[i] == g && labels[i] == 1).collect();
            idx.iter().filter(|&&i| pred[i] == 1).count() as f64 / idx.len() as f64
        };
        let fpr = |g: usize| {
            let idx: Vec<usize> = (0..8).filter(|&i| groups[i] == g && labels[i] == 0).collect();
            idx.iter().filter(|&&i| pred[i] == 1).count() as f64 / idx.len() as f64
        };
        let oracle = (tpr(0) - tpr(1)).abs().max((fpr(0) - fpr(1)).abs());
        let r = eod_difference(&p, EodVariant::MaxOverLabels).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.value, oracle);
        assert!(r.empty_strata.is_empty());
        assert_eq!(eod_difference(&p, EodVariant::PositiveOnly).unwrap().value, 0.5);
    }

    #[test]
    fn eod_flags_empty_strata() {
        let p = ps(&[1, 0, 1, 0], &[1, 1, 1, 0], &[0, 0, 1, 1]);
        let r = eod_difference(&p, EodVariant::MaxOverLabels).unwrap();
        assert_eq!(r.empty_strata, vec![(0, 0)]);
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert_eq!(auc_strict(&[0.5, 0.5], &[1, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.8, 0.4, 0.6, 0.2], &[1, 1, 0, 0]).unwrap(), 0.75);
        assert!(auc(&[0.3, 0.4], &[1, 1]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(&ps(&[1, 0, 1], &[1, 0, 1], &[0, 1, 0])), 1.0);
        assert_eq!(f1(&ps(&[0, 0, 0], &[1, 0, 1], &[0, 1, 0])), 0.0);
        // TP=1, FP=1, FN=1
        assert_eq!(f1(&ps(&[1, 1, 0], &[1, 0, 1], &[0, 1, 0])), 0.5);
    }

    #[test]
    fn mann_whitney_small_exact() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
        let s = mann_whitney_u(&[3.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!(s.u, 4.0);
        assert_eq!(s.p_value, r.p_value);
    }

    #[test]
    fn mann_whitney_identical_samples() {
        let a = [0.3, 0.5, 0.7, 0.9];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert!(!r.exact);
        assert_eq!(r.p_value, 1.0);
        let c = [0.4; 6];
        assert_eq!(mann_whitney_u(&c, &c).unwrap().p_value, 1.0);
    }

    #[test]
    fn u_distribution_counts() {
        assert_eq!(u_distribution(2, 2), vec![1.0, 1.0, 2.0, 1.0, 1.0]);
        let total: f64 = u_distribution(5, 7).iter().sum();
        assert_eq!(total, 792.0);
    }

    #[test]
    fn exact_and_asymptotic_agree_at_five_by_five() {
        for shift in 0..6 {
            let a: Vec<f64> = (0..5).map(|i| (2 * i) as f64 + shift as f64 * 0.7).collect();
            let b: Vec<f64> = (0..5).map(|i| (2 * i + 1) as f64 + 0.01).collect();
            let e = mann_whitney_u_with(&a, &b, PValueMethod::Exact).unwrap();
            let n = mann_whitney_u_with(&a, &b, PValueMethod::Asymptotic).unwrap();
            assert!((e.p_value - n.p_value).abs() < 0.03, "{e:?} {n:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn auc_complement(raw in proptest::collection::vec((0u32..64, 0u8..2), 2..40)) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 64.0).collect();
            let mut labels: Vec<u8> = raw.iter().map(|(_, l)| *l).collect();
            labels[0] = 0;
            labels[1] = 1;
            let flipped: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
            let sum = auc(&scores, &labels).unwrap() + auc(&flipped, &labels).unwrap();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn group_metrics_symmetric_under_swap(raw in proptest::collection::vec((0u8..2, 0u8..2, 0usize..2), 4..40)) {
            let mut pred: Vec<u8> = raw.iter().map(|r| r.0).collect();
            let labels: Vec<u8> = raw.iter().map(|r| r.1).collect();
            let mut groups: Vec<usize> = raw.iter().map(|r| r.2).collect();
            groups[0] = 0;
            groups[1] = 1;
            pred[0] = pred[0].min(1);
            let p = ps(&pred, &labels, &groups);
            let swapped: Vec<usize> = groups.iter().map(|g| 1 - g).collect();
            let q = ps(&pred, &labels, &swapped);
            proptest::prop_assert_eq!(dp_difference(&p).unwrap(), dp_difference(&q).unwrap());
            proptest::prop_assert_eq!(
                eod_difference(&p, EodVariant::MaxOverLabels).unwrap().value,
                eod_difference(&q, EodVariant::MaxOverLabels).unwrap().value
            );
        }

        #[test]
        fn mann_whitney_p_symmetric(a in proptest::collection::vec(0u32..20, 1..15), b in proptest::collection::vec(0u32..20, 1..15)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_u(&a, &b).unwrap();
            let ba = mann_whitney_u(&b, &a).unwrap();
            proptest::prop_assert_eq!(ab.p_value.to_bits(), ba.p_value.to_bits());
            proptest::prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
            proptest::prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
        }
    }
}
