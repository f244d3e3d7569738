//! Picking one solution from a three-objective Pareto front.
//!
//! Fronts are normalized per objective to `[0, 1]` in the order
//! `(AUC, DP, GESD)`, with AUC flipped so that every column is minimized.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{GesdError, Result};

/// Scores within this distance of the best are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Raw objectives of one front member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawObjectives {
    pub auc: f64,
    pub dp: f64,
    pub gesd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFront {
    /// Rows in `(1 - AUC, DP, GESD)` orientation, min-max scaled.
    pub values: Vec<[f64; 3]>,
    /// Per-column minimum of the raw `(AUC, DP, GESD)` values.
    pub raw_min: [f64; 3],
    pub raw_max: [f64; 3],
    /// Columns with zero range (normalized to 0).
    pub constant: [bool; 3],
}

impl NormalizedFront {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn normalize_front(front: &[RawObjectives]) -> Result<NormalizedFront> {
    if front.is_empty() {
        return Err(GesdError::InvalidDataset("cannot normalize an empty front".into()));
    }
    let raw: Vec<[f64; 3]> = front.iter().map(|o| [o.auc, o.dp, o.gesd]).collect();
    let mut raw_min = [f64::INFINITY; 3];
    let mut raw_max = [f64::NEG_INFINITY; 3];
    for r in &raw {
        for c in 0..3 {
            if !r[c].is_finite() {
                return Err(GesdError::InvalidDataset("non-finite objective in front".into()));
            }
            raw_min[c] = raw_min[c].min(r[c]);
            raw_max[c] = raw_max[c].max(r[c]);
        }
    }
    let constant = [0, 1, 2].map(|c| raw_max[c] == raw_min[c]);
    let values = raw
        .iter()
        .map(|r| {
            [0, 1, 2].map(|c| {
                if constant[c] {
                    0.0
                } else if c == 0 {
                    (raw_max[0] - r[0]) / (raw_max[0] - raw_min[0])
                } else {
                    (r[c] - raw_min[c]) / (raw_max[c] - raw_min[c])
                }
            })
        })
        .collect();
    Ok(NormalizedFront {
        values,
        raw_min,
        raw_max,
        constant,
    })
}

/// Weights on the normalized `(AUC, DP, GESD)` columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights(pub [f64; 3]);

impl Default for SelectionWeights {
    fn default() -> Self {
        SelectionWeights([0.4, 0.3, 0.3])
    }
}

impl SelectionWeights {
    pub fn new(w: [f64; 3]) -> Result<Self> {
        let s = SelectionWeights(w);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !(*w >= 0.0)) || (self.0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GesdError::InvalidConfig(format!(
                "selection weights must be non-negative and sum to 1, got {:?}",
                self.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    #[default]
    Chebyshev,
    Linear,
    Elbow,
    Hypervolume,
}

impl std::str::FromStr for SelectionMethod {
    type Err = GesdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chebyshev" => Ok(SelectionMethod::Chebyshev),
            "linear" => Ok(SelectionMethod::Linear),
            "elbow" => Ok(SelectionMethod::Elbow),
            "hypervolume" => Ok(SelectionMethod::Hypervolume),
            other => Err(GesdError::InvalidConfig(format!("unknown selection method `{other}`"))),
        }
    }
}

fn lex(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Index of the best score (`minimize` or maximize); ties within
/// [`TIE_TOLERANCE`] go to the lexicographically smallest normalized row.
fn pick(nf: &NormalizedFront, scores: &[f64], minimize: bool) -> usize {
    let best = scores
        .iter()
        .copied()
        .fold(if minimize { f64::INFINITY } else { f64::NEG_INFINITY }, |a, b| {
            if minimize {
                a.min(b)
            } else {
                a.max(b)
            }
        });
    (0..scores.len())
        .filter(|&i| (scores[i] - best).abs() <= TIE_TOLERANCE)
        .min_by(|&a, &b| lex(&nf.values[a], &nf.values[b]))
        .expect("non-empty front")
}

pub fn linear_scores(nf: &NormalizedFront, w: &SelectionWeights) -> Vec<f64> {
    nf.values.iter().map(|f| (0..3).map(|i| w.0[i] * f[i]).sum()).collect()
}

pub fn linear_scalarization_select(nf: &NormalizedFront, w: &SelectionWeights) -> usize {
    pick(nf, &linear_scores(nf, w), true)
}

/// Component-wise minimum of the normalized front.
pub fn ideal_point(nf: &NormalizedFront) -> [f64; 3] {
    let mut z = [f64::INFINITY; 3];
    for f in &nf.values {
        for i in 0..3 {
            z[i] = z[i].min(f[i]);
        }
    }
    z
}

/// `max_i w_i |f_i - z_i|`.
pub fn chebyshev_score(f: &[f64; 3], w: &SelectionWeights, ideal: &[f64; 3]) -> f64 {
    (0..3).map(|i| w.0[i] * (f[i] - ideal[i]).abs()).fold(0.0, f64::max)
}

pub fn chebyshev_scores(nf: &NormalizedFront, w: &SelectionWeights, ideal: &[f64; 3]) -> Vec<f64> {
    nf.values.iter().map(|f| chebyshev_score(f, w, ideal)).collect()
}

pub fn chebyshev_select(nf: &NormalizedFront, w: &SelectionWeights, ideal: Option<[f64; 3]>) -> usize {
    let z = ideal.unwrap_or_else(|| ideal_point(nf));
    pick(nf, &chebyshev_scores(nf, w, &z), true)
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

fn point_segment_distance(p: &[f64; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = ((0..3).map(|i| (p[i] - a[i]) * ab[i]).sum::<f64>() / len2).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    dist(p, &q)
}

/// Outcome of the chord-distance elbow rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowResult {
    pub index: usize,
    /// Endpoints of the chord (the farthest-apart pair), if one was formed.
    pub chord: Option<(usize, usize)>,
    pub distances: Vec<f64>,
    /// True when the linear-scalarization winner was returned instead.
    pub fallback: bool,
}

/// The point farthest from the chord joining the two most distant front
/// members; fronts of size two or less, or without any point off the chord,
/// fall back to linear scalarization.
pub fn elbow_select(nf: &NormalizedFront, w: &SelectionWeights) -> ElbowResult {
    let n = nf.len();
    let fallback = |distances: Vec<f64>, chord| ElbowResult {
        index: linear_scalarization_select(nf, w),
        chord,
        distances,
        fallback: true,
    };
    if n <= 2 {
        return fallback(vec![0.0; n], None);
    }
    let mut ends = (0, 0);
    let mut far = -1.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(&nf.values[i], &nf.values[j]);
            let better = d > far + TIE_TOLERANCE
                || ((d - far).abs() <= TIE_TOLERANCE
                    && lex_pair(nf, (i, j), ends) == Ordering::Less);
            if better {
                far = far.max(d);
                ends = (i, j);
            }
        }
    }
    let (a, b) = (nf.values[ends.0], nf.values[ends.1]);
    let distances: Vec<f64> = nf.values.iter().map(|p| point_segment_distance(p, &a, &b)).collect();
    if distances.iter().all(|&d| d <= TIE_TOLERANCE) {
        return fallback(distances, Some(ends));
    }
    ElbowResult {
        index: pick(nf, &distances, false),
        chord: Some(ends),
        distances,
        fallback: false,
    }
}

/// Orders endpoint pairs by content so the chord does not depend on storage order.
fn lex_pair(nf: &NormalizedFront, p: (usize, usize), q: (usize, usize)) -> Ordering {
    let key = |(i, j): (usize, usize)| {
        let (a, b) = (&nf.values[i], &nf.values[j]);
        if lex(a, b) == Ordering::Greater {
            (*b, *a)
        } else {
            (*a, *b)
        }
    };
    let (pa, pb) = key(p);
    let (qa, qb) = key(q);
    lex(&pa, &qa).then(lex(&pb, &qb))
}

/// Area dominated by 2-D points (minimization) inside `reference`.
fn area_2d(points: &mut [[f64; 2]], reference: [f64; 2]) -> f64 {
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut best_y = reference[1];
    for i in 0..points.len() {
        best_y = best_y.min(points[i][1]);
        let next_x = if i + 1 < points.len() { points[i + 1][0] } else { reference[0] };
        area += (next_x - points[i][0]) * (reference[1] - best_y);
    }
    area
}

/// Exact hypervolume dominated by `points` (minimization) and bounded by
/// `reference`. Points not strictly inside the reference box are ignored.
pub fn hypervolume_3d(points: &[[f64; 3]], reference: [f64; 3]) -> f64 {
    let mut inside: Vec<[f64; 3]> = points
        .iter()
        .copied()
        .filter(|p| (0..3).all(|i| p[i] < reference[i]))
        .collect();
    inside.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut volume = 0.0;
    let mut slab: Vec<[f64; 2]> = Vec::with_capacity(inside.len());
    let mut i = 0;
    while i < inside.len() {
        let z = inside[i][2];
        while i < inside.len() && inside[i][2] == z {
            slab.push([inside[i][0], inside[i][1]]);
            i += 1;
        }
        let next_z = if i < inside.len() { inside[i][2] } else { reference[2] };
        let mut work = slab.clone();
        volume += area_2d(&mut work, [reference[0], reference[1]]) * (next_z - z);
    }
    volume
}

/// Number of points outside the reference box.
pub fn reference_violations(points: &[[f64; 3]], reference: [f64; 3]) -> usize {
    points.iter().filter(|p| (0..3).any(|i| p[i] >= reference[i])).count()
}

pub const DEFAULT_REFERENCE: [f64; 3] = [1.1, 1.1, 1.1];

/// Exclusive contribution of each point: `HV(all) - HV(all without it)`.
pub fn hypervolume_contributions(points: &[[f64; 3]], reference: [f64; 3]) -> Vec<f64> {
    let total = hypervolume_3d(points, reference);
    (0..points.len())
        .map(|i| {
            let rest: Vec<[f64; 3]> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| *p)
                .collect();
            (total - hypervolume_3d(&rest, reference)).max(0.0)
        })
        .collect()
}

pub fn hypervolume_select(nf: &NormalizedFront, reference: [f64; 3]) -> usize {
    pick(nf, &hypervolume_contributions(&nf.values, reference), false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: SelectionMethod,
    pub index: usize,
    pub weights: SelectionWeights,
    pub ideal: [f64; 3],
    pub reference: [f64; 3],
    pub normalized: NormalizedFront,
    /// Per-candidate score of the chosen method (lower is better for
    /// linear and Chebyshev, higher for elbow and hypervolume).
    pub scores: Vec<f64>,
    /// How the choice was made, in words.
    pub rule: String,
    pub elbow_fallback: bool,
}

/// Runs `method` on a raw front and records everything needed to audit the choice.
pub fn select(
    front: &[RawObjectives],
    method: SelectionMethod,
    weights: SelectionWeights,
    ideal: Option<[f64; 3]>,
    reference: [f64; 3],
) -> Result<Selection> {
    weights.validate()?;
    let nf = normalize_front(front)?;
    let z = ideal.unwrap_or_else(|| ideal_point(&nf));
    let (index, scores, rule, elbow_fallback) = match method {
        SelectionMethod::Chebyshev => {
            let s = chebyshev_scores(&nf, &weights, &z);
            (pick(&nf, &s, true), s, "argmin of max_i w_i |f_i - z_i|".to_string(), false)
        }
        SelectionMethod::Linear => {
            let s = linear_scores(&nf, &weights);
            (pick(&nf, &s, true), s, "argmin of sum_i w_i f_i".to_string(), false)
        }
        SelectionMethod::Elbow => {
            let e = elbow_select(&nf, &weights);
            let rule = if e.fallback {
                "front too small or collinear: linear scalarization winner".to_string()
            } else {
                "argmax distance to the chord joining the two farthest-apart points".to_string()
            };
            (e.index, e.distances, rule, e.fallback)
        }
        SelectionMethod::Hypervolume => {
            let s = hypervolume_contributions(&nf.values, reference);
            (pick(&nf, &s, false), s, "argmax exclusive hypervolume contribution".to_string(), false)
        }
    };
    Ok(Selection {
        method,
        index,
        weights,
        ideal: z,
        reference,
        normalized: nf,
        scores,
        rule,
        elbow_fallback,
    })
}
