//! NSGA-II over model configurations `(learning rate, epochs, threshold)`
//! minimizing `(DP, GESD, -AUC)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{ErrorKind, GesdError, Result};
use crate::explainers::ExplainerConfig;
use crate::metrics::{auc, dp_difference, eod_difference, f1, EodVariant, PredictionSet};
use crate::models::{train, Classifier, ModelSpec, ScoreModel, TrainConfig};
use crate::seed;
use crate::selection::hypervolume_3d;
use crate::stability::{gesd_audit, GesdReport, PerturbationConfig};

/// GESD assigned to failed evaluations so they are dominated.
pub const GESD_SENTINEL: f64 = 10.0;

/// Reference point for the per-generation hypervolume in `(DP, GESD, -AUC)`.
pub const HISTORY_REFERENCE: [f64; 3] = [1.0, 1.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub learning_rate: f64,
    pub epochs: u32,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenomeBounds {
    pub learning_rate: [f64; 2],
    pub epochs: [u32; 2],
    pub threshold: [f64; 2],
}

impl Default for GenomeBounds {
    fn default() -> Self {
        GenomeBounds {
            learning_rate: [1e-4, 1e-1],
            epochs: [10, 200],
            threshold: [0.3, 0.7],
        }
    }
}

impl GenomeBounds {
    pub fn validate(&self) -> Result<()> {
        let [g0, g1] = self.learning_rate;
        let [r0, r1] = self.epochs;
        let [t0, t1] = self.threshold;
        if !(g0 > 0.0 && g0 <= g1 && g1.is_finite()) || r0 == 0 || r0 > r1 || !(0.0 <= t0 && t0 <= t1 && t1 <= 1.0) {
            return Err(GesdError::InvalidConfig(format!("invalid genome bounds {self:?}")));
        }
        Ok(())
    }

    /// Search-space bounds: `log10(learning rate)`, epochs, threshold.
    pub fn lower(&self) -> [f64; 3] {
        [self.learning_rate[0].log10(), f64::from(self.epochs[0]), self.threshold[0]]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.learning_rate[1].log10(), f64::from(self.epochs[1]), self.threshold[1]]
    }

    pub fn encode(&self, g: &Genome) -> [f64; 3] {
        [g.learning_rate.log10(), f64::from(g.epochs), g.threshold]
    }

    /// Clips to bounds and rounds the epoch gene.
    pub fn decode(&self, v: [f64; 3]) -> Genome {
        let (lo, hi) = (self.lower(), self.upper());
        let c = |i: usize| v[i].clamp(lo[i], hi[i]);
        Genome {
            learning_rate: 10f64.powf(c(0)).clamp(self.learning_rate[0], self.learning_rate[1]),
            epochs: c(1).round() as u32,
            threshold: c(2),
        }
    }

    pub fn contains(&self, g: &Genome) -> bool {
        (self.learning_rate[0]..=self.learning_rate[1]).contains(&g.learning_rate)
            && (self.epochs[0]..=self.epochs[1]).contains(&g.epochs)
            && (self.threshold[0]..=self.threshold[1]).contains(&g.threshold)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Genome {
        let (lo, hi) = (self.lower(), self.upper());
        Genome {
            learning_rate: 10f64.powf(rng.random_range(lo[0]..=hi[0])),
            epochs: rng.random_range(self.epochs[0]..=self.epochs[1]),
            threshold: rng.random_range(lo[2]..=hi[2]),
        }
    }
}

/// `(DP, GESD, -AUC)`, all minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub dp: f64,
    pub gesd: f64,
    pub neg_auc: f64,
}

impl ObjectiveVector {
    pub fn worst() -> Self {
        ObjectiveVector {
            dp: 1.0,
            gesd: GESD_SENTINEL,
            neg_auc: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dp, self.gesd, self.neg_auc]
    }

    pub fn auc(&self) -> f64 {
        -self.neg_auc
    }
}

/// Component-wise `<=` with at least one strict `<`.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

/// Partition into non-dominated fronts, front 0 first; indices ascend
/// within each front.
pub fn fast_nondominated_sort<P: AsRef<[f64]>>(points: &[P]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (points[i].as_ref(), points[j].as_ref());
            if dominates(a, b) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if dominates(b, a) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front.
pub fn crowding_distance<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    if n == 0 {
        return Vec::new();
    }
    let m = front[0].as_ref().len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let v = |i: usize| front[i].as_ref()[k];
        order.sort_by(|&a, &b| v(a).total_cmp(&v(b)).then(a.cmp(&b)));
        let (lo, hi) = (v(order[0]), v(order[n - 1]));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if hi == lo {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if dist[i].is_finite() {
                dist[i] += (v(order[w + 1]) - v(order[w - 1])) / (hi - lo);
            }
        }
    }
    // exact duplicates share one distance
    for i in 0..n {
        for j in 0..i {
            if front[i].as_ref() == front[j].as_ref() {
                let d = dist[i].max(dist[j]);
                dist[i] = d;
                dist[j] = d;
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoeaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub sbx_eta: f64,
    pub mutation_eta: f64,
    /// Per-gene mutation probability; `None` means one over the genome length.
    pub mutation_prob: Option<f64>,
    pub master_seed: u64,
    pub bounds: GenomeBounds,
}

impl Default for MoeaConfig {
    fn default() -> Self {
        MoeaConfig {
            population_size: 40,
            generations: 25,
            crossover_prob: 0.9,
            sbx_eta: 15.0,
            mutation_eta: 20.0,
            mutation_prob: None,
            master_seed: 0,
            bounds: GenomeBounds::default(),
        }
    }
}

impl MoeaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.population_size % 2 == 1 {
            return Err(GesdError::InvalidConfig(format!(
                "population_size must be a positive even number, got {}",
                self.population_size
            )));
        }
        let probs = [Some(self.crossover_prob), self.mutation_prob];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(GesdError::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if !(self.sbx_eta > 0.0 && self.mutation_eta > 0.0) {
            return Err(GesdError::InvalidConfig("distribution indices must be positive".into()));
        }
        self.bounds.validate()
    }

    pub fn mutation_probability(&self) -> f64 {
        self.mutation_prob.unwrap_or(1.0 / 3.0)
    }
}

/// SBX spread factor for a uniform draw `u`.
pub fn sbx_beta(u: f64, eta: f64) -> f64 {
    if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    }
}

/// SBX on encoded genes with explicit per-gene draws, before clipping.
pub fn sbx_genes(p1: [f64; 3], p2: [f64; 3], u: [f64; 3], eta: f64) -> ([f64; 3], [f64; 3]) {
    let mut c1 = p1;
    let mut c2 = p2;
    for i in 0..3 {
        let b = sbx_beta(u[i], eta);
        let mid = 0.5 * (p1[i] + p2[i]);
        let half = 0.5 * b * (p2[i] - p1[i]);
        c1[i] = mid - half;
        c2[i] = mid + half;
    }
    (c1, c2)
}

/// Simulated binary crossover, applied to the pair with probability
/// `crossover_prob`; children are clipped and the epoch gene rounded.
pub fn sbx_crossover(p1: &Genome, p2: &Genome, cfg: &MoeaConfig, rng: &mut impl Rng) -> (Genome, Genome) {
    let b = &cfg.bounds;
    if rng.random::<f64>() >= cfg.crossover_prob {
        return (*p1, *p2);
    }
    let u = [rng.random(), rng.random(), rng.random()];
    let (c1, c2) = sbx_genes(b.encode(p1), b.encode(p2), u, cfg.sbx_eta);
    (b.decode(c1), b.decode(c2))
}

/// Bounded polynomial mutation of one gene with draw `u`.
pub fn polynomial_mutate_gene(y: f64, lo: f64, hi: f64, u: f64, eta: f64) -> f64 {
    if hi <= lo {
        return y;
    }
    let span = hi - lo;
    let (d1, d2) = ((y - lo) / span, (hi - y) / span);
    let pow = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(pow) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(pow)
    };
    (y + dq * span).clamp(lo, hi)
}

pub fn polynomial_mutation(g: &Genome, cfg: &MoeaConfig, rng: &mut impl Rng) -> Genome {
    let b = &cfg.bounds;
    let (lo, hi) = (b.lower(), b.upper());
    let mut v = b.encode(g);
    let p = cfg.mutation_probability();
    for i in 0..3 {
        if rng.random::<f64>() < p {
            let u = rng.random();
            v[i] = polynomial_mutate_gene(v[i], lo[i], hi[i], u, cfg.mutation_eta);
        }
    }
    b.decode(v)
}

/// Extra metrics recorded with an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub auc: f64,
    pub f1: f64,
    pub dp: f64,
    pub eod: f64,
    pub eod_empty_strata: Vec<(usize, u8)>,
    pub gesd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: ObjectiveVector,
    /// Set when training or auditing failed numerically and the worst-case
    /// objectives were substituted.
    pub failure: Option<String>,
    pub metrics: Option<ModelMetrics>,
}

impl Evaluation {
    pub fn objectives_only(objectives: ObjectiveVector) -> Self {
        Evaluation {
            objectives,
            failure: None,
            metrics: None,
        }
    }

    fn failed(reason: String) -> Self {
        Evaluation {
            objectives: ObjectiveVector::worst(),
            failure: Some(reason),
            metrics: None,
        }
    }
}

/// What the optimizer minimizes.
pub trait Problem: Sync {
    fn evaluate(&self, genome: &Genome, eval_seed: u64) -> Result<Evaluation>;
}

/// Objectives of a fitted model on `test`; GESD is audited on `test` with
/// `train` as explainer background.
pub fn evaluate_model<M: ScoreModel + ?Sized + Sync>(
    model: &M,
    threshold: f64,
    train_data: &TabularDataset,
    test: &TabularDataset,
    pcfg: &PerturbationConfig,
    ecfg: &ExplainerConfig,
    eod_variant: EodVariant,
) -> Result<(Evaluation, GesdReport)> {
    let mut scores = vec![0.0; test.n_rows()];
    model.score_batch(test.features(), &mut scores);
    let preds = PredictionSet::from_scores(scores, test.labels().to_vec(), test.groups().to_vec(), threshold)?;
    let dp = dp_difference(&preds)?;
    let eod = eod_difference(&preds, eod_variant)?;
    let auc_value = auc(&preds.scores, &preds.labels)?;
    let report = gesd_audit(model, threshold, test, train_data, pcfg, ecfg)?;
    let evaluation = Evaluation {
        objectives: ObjectiveVector {
            dp,
            gesd: report.gesd,
            neg_auc: -auc_value,
        },
        failure: None,
        metrics: Some(ModelMetrics {
            auc: auc_value,
            f1: f1(&preds),
            dp,
            eod: eod.value,
            eod_empty_strata: eod.empty_strata,
            gesd: report.gesd,
        }),
    };
    Ok((evaluation, report))
}

/// Seeds of the audit streams used for an evaluation.
pub fn audit_seeds(eval_seed: u64) -> (u64, u64) {
    (seed::derive_seed(eval_seed, &[1]), seed::derive_seed(eval_seed, &[2]))
}

/// Trains a model per genome and scores it; numeric failures become the
/// worst-case objective vector.
pub struct FeuProblem<'a> {
    pub train: &'a TabularDataset,
    pub test: &'a TabularDataset,
    pub model: ModelSpec,
    pub batch_size: usize,
    pub l2_penalty: f64,
    /// Perturbation settings used inside the loop (seed is replaced per evaluation).
    pub perturbation: PerturbationConfig,
    pub explainer: ExplainerConfig,
    pub eod_variant: EodVariant,
}

impl FeuProblem<'_> {
    pub fn train_config(&self, genome: &Genome, eval_seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: genome.learning_rate,
            epochs: genome.epochs,
            batch_size: self.batch_size,
            seed: eval_seed,
            l2_penalty: self.l2_penalty,
        }
    }

    pub fn fit(&self, genome: &Genome, eval_seed: u64) -> Result<Classifier> {
        let model = train(&self.model, self.train, &self.train_config(genome, eval_seed))?;
        model.with_threshold(genome.threshold)
    }

    /// Trains and audits with explicit perturbation settings (the seed is
    /// replaced by one derived from `eval_seed`). Errors propagate.
    pub fn audit(&self, genome: &Genome, eval_seed: u64, perturbation: &PerturbationConfig) -> Result<(Classifier, Evaluation, GesdReport)> {
        let model = self.fit(genome, eval_seed)?;
        let (ps, es) = audit_seeds(eval_seed);
        let pcfg = PerturbationConfig {
            seed: ps,
            ..perturbation.clone()
        };
        let ecfg = ExplainerConfig {
            seed: es,
            ..self.explainer.clone()
        };
        let (e, report) = evaluate_model(&model, genome.threshold, self.train, self.test, &pcfg, &ecfg, self.eod_variant)?;
        Ok((model, e, report))
    }
}

impl Problem for FeuProblem<'_> {
    fn evaluate(&self, genome: &Genome, eval_seed: u64) -> Result<Evaluation> {
        match self.audit(genome, eval_seed, &self.perturbation) {
            Ok((_, e, _)) => Ok(e),
            Err(e) if e.kind() == ErrorKind::Numeric => {
                log::warn!("evaluation of {genome:?} failed: {e}");
                Ok(Evaluation::failed(e.to_string()))
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    pub evaluation: Evaluation,
    pub rank: usize,
    /// `f64::INFINITY` at front extremes; serialized as `null`.
    #[serde(with = "infinite_as_null")]
    pub crowding: f64,
    pub eval_seed: u64,
    /// Generation in which the individual was created.
    pub generation: usize,
}

impl Individual {
    pub fn objectives(&self) -> [f64; 3] {
        self.evaluation.objectives.as_array()
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Objectives with AUC in its natural sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportedObjectives {
    pub dp: f64,
    pub gesd: f64,
    pub auc: f64,
}

/// One front member as written to `front.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontEntry {
    pub genome: Genome,
    pub objectives: ReportedObjectives,
    pub rank: usize,
    #[serde(with = "infinite_as_null")]
    pub crowding: f64,
    pub eval_seed: u64,
    pub generation: usize,
    pub failure: Option<String>,
    pub metrics: Option<ModelMetrics>,
}

impl From<&Individual> for FrontEntry {
    fn from(ind: &Individual) -> Self {
        let o = ind.evaluation.objectives;
        FrontEntry {
            genome: ind.genome,
            objectives: ReportedObjectives {
                dp: o.dp,
                gesd: o.gesd,
                auc: o.auc(),
            },
            rank: ind.rank,
            crowding: ind.crowding,
            eval_seed: ind.eval_seed,
            generation: ind.generation,
            failure: ind.evaluation.failure.clone(),
            metrics: ind.evaluation.metrics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub evaluations: usize,
    pub best: ObjectiveVector,
    pub mean: ObjectiveVector,
    pub front_size: usize,
    /// Hypervolume of front 0 against [`HISTORY_REFERENCE`].
    pub hypervolume: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Final front 0, in population order.
    pub front: Vec<Individual>,
    pub population: Vec<Individual>,
    pub history: Vec<GenerationStats>,
}

fn evaluate_all<P: Problem + ?Sized>(problem: &P, genomes: &[Genome], cfg: &MoeaConfig, generation: usize) -> Result<Vec<Individual>> {
    genomes
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let eval_seed = seed::derive_seed(cfg.master_seed, &[generation as u64, i as u64]);
            let evaluation = problem.evaluate(g, eval_seed)?;
            Ok(Individual {
                genome: *g,
                evaluation,
                rank: 0,
                crowding: 0.0,
                eval_seed,
                generation,
            })
        })
        .collect()
}

/// Assigns rank and crowding in place and returns the fronts.
fn rank_population(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let points: Vec<[f64; 3]> = pop.iter().map(Individual::objectives).collect();
    let fronts = fast_nondominated_sort(&points);
    for (r, front) in fronts.iter().enumerate() {
        let pts: Vec<[f64; 3]> = front.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&pts)) {
            pop[i].rank = r;
            pop[i].crowding = d;
        }
    }
    fronts
}

/// Binary tournament on (rank, crowding); full ties keep the first draw.
fn tournament<'p>(pop: &'p [Individual], rng: &mut impl Rng) -> &'p Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if b.rank < a.rank || (b.rank == a.rank && b.crowding > a.crowding) {
        b
    } else {
        a
    }
}

fn stats(pop: &[Individual], generation: usize, evaluations: usize) -> GenerationStats {
    let n = pop.len() as f64;
    let mut best = [f64::INFINITY; 3];
    let mut sum = [0.0; 3];
    let mut failures = 0;
    for ind in pop {
        if ind.evaluation.failure.is_some() {
            failures += 1;
        }
        let o = ind.objectives();
        for k in 0..3 {
            best[k] = best[k].min(o[k]);
            sum[k] += o[k];
        }
    }
    let front: Vec<[f64; 3]> = pop.iter().filter(|i| i.rank == 0).map(Individual::objectives).collect();
    let v = |a: [f64; 3]| ObjectiveVector {
        dp: a[0],
        gesd: a[1],
        neg_auc: a[2],
    };
    GenerationStats {
        generation,
        evaluations,
        best: v(best),
        mean: v([sum[0] / n, sum[1] / n, sum[2] / n]),
        front_size: front.len(),
        hypervolume: hypervolume_3d(&front, HISTORY_REFERENCE),
        failures,
    }
}

/// When the merged front 0 overflows, keep for every previous front-0 member
/// itself or the first new front member weakly dominating it, so the kept
/// front never loses hypervolume.
fn elite_representatives(merged: &[Individual], elite: &[usize], front: &[usize]) -> Vec<usize> {
    let mut keep = Vec::new();
    for &e in elite {
        let target = merged[e].objectives();
        let rep = if front.contains(&e) {
            e
        } else {
            *front
                .iter()
                .find(|&&j| {
                    let o = merged[j].objectives();
                    o.iter().zip(&target).all(|(a, b)| a <= b)
                })
                .expect("dominated elite has a dominator in front 0")
        };
        if !keep.contains(&rep) {
            keep.push(rep);
        }
    }
    keep
}

/// NSGA-II main loop. Evaluations within a generation run on the current
/// rayon pool; results depend only on `cfg.master_seed`.
pub fn nsga2_run<P: Problem + ?Sized>(cfg: &MoeaConfig, problem: &P) -> Result<RunResult> {
    cfg.validate()?;
    let n = cfg.population_size;
    let mut init_rng = seed::rng(seed::derive_seed(cfg.master_seed, &[0xA11]));
    let genomes: Vec<Genome> = (0..n).map(|_| cfg.bounds.sample(&mut init_rng)).collect();
    let mut pop = evaluate_all(problem, &genomes, cfg, 0)?;
    rank_population(&mut pop);
    let mut evaluations = n;
    let mut history = vec![stats(&pop, 0, evaluations)];
    log::info!("generation 0: front size {}", history[0].front_size);

    for generation in 1..=cfg.generations {
        let mut rng = seed::rng(seed::derive_seed(cfg.master_seed, &[0x0FF5, generation as u64]));
        let mut children = Vec::with_capacity(n);
        while children.len() < n {
            let p1 = tournament(&pop, &mut rng).genome;
            let p2 = tournament(&pop, &mut rng).genome;
            let (c1, c2) = sbx_crossover(&p1, &p2, cfg, &mut rng);
            children.push(polynomial_mutation(&c1, cfg, &mut rng));
            children.push(polynomial_mutation(&c2, cfg, &mut rng));
        }
        let offspring = evaluate_all(problem, &children, cfg, generation)?;
        evaluations += n;

        let elite: Vec<usize> = (0..n).filter(|&i| pop[i].rank == 0).collect();
        let mut merged = pop;
        merged.extend(offspring);
        let fronts = rank_population(&mut merged);
        let mut keep: Vec<usize> = Vec::with_capacity(n);
        for (r, front) in fronts.into_iter().enumerate() {
            if keep.len() + front.len() <= n {
                keep.extend(front);
                continue;
            }
            if r == 0 {
                keep = elite_representatives(&merged, &elite, &front);
            }
            let mut last: Vec<usize> = front.into_iter().filter(|i| !keep.contains(i)).collect();
            last.sort_by(|&a, &b| merged[b].crowding.total_cmp(&merged[a].crowding).then(a.cmp(&b)));
            last.truncate(n - keep.len());
            keep.extend(last);
            break;
        }
        keep.sort_unstable();
        pop = keep.into_iter().map(|i| merged[i].clone()).collect();
        rank_population(&mut pop);
        let s = stats(&pop, generation, evaluations);
        log::info!(
            "generation {generation}: front size {}, hypervolume {:.4}",
            s.front_size,
            s.hypervolume
        );
        history.push(s);
    }
    let front = pop.iter().filter(|i| i.rank == 0).cloned().collect();
    Ok(RunResult {
        front,
        population: pop,
        history,
    })
}
