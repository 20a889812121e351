//! Grid search and transform-subset sweeps.
//!
//! Every `(configuration, split)` pair is an independent job seeded from the
//! master seed and the configuration label, so jobs can run in any order on
//! any number of threads and still produce the same result.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{mean_std, stratified_splits, Dataset};
use crate::model::{Mlp, DEFAULT_HIDDEN};
use crate::policy::{PolicyConfig, PolicyKind};
use crate::rng::{hash_str, hash_words, RngStream};
use crate::trainer::{evaluate, train, TrainConfig, TrainReport};
use crate::transforms::{resolve_list, Magnitude, TransformId, TransformSpec, UCR_SET};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub kinds: Vec<PolicyKind>,
    pub magnitudes: Vec<u8>,
    pub alphas: Vec<usize>,
    pub n_splits: usize,
    pub split_fraction: f64,
    /// Catalog the policies draw from; Identity must come first.
    pub transforms: Vec<TransformId>,
    /// Subset sweep: numbers of extra transforms besides Identity.
    pub subset_sizes: Vec<usize>,
    pub subset_repetitions: usize,
    pub hidden: usize,
    /// Template for every run; its policy is replaced per configuration.
    pub train: TrainConfig,
    pub seed: u64,
}

impl SearchPlan {
    pub fn new(seed: u64) -> Self {
        Self {
            kinds: PolicyKind::ALL.to_vec(),
            magnitudes: vec![1, 5, 10, 15, 20],
            alphas: vec![1, 2],
            n_splits: 5,
            split_fraction: 0.8,
            transforms: UCR_SET.to_vec(),
            subset_sizes: Vec::new(),
            subset_repetitions: 5,
            hidden: DEFAULT_HIDDEN,
            train: TrainConfig::new(PolicyConfig::none(seed), seed),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |key: &str, msg: &str| Err(Error::Config { key: key.into(), msg: msg.into() });
        if self.kinds.is_empty() {
            return cfg("policies", "no policy kinds to search");
        }
        if self.n_splits == 0 {
            return cfg("splits", "need at least one split");
        }
        let augmenting = self.kinds.iter().any(|k| *k != PolicyKind::None);
        if augmenting && self.magnitudes.is_empty() {
            return cfg("magnitudes", "no magnitude candidates");
        }
        if self.kinds.contains(&PolicyKind::AlphaTrimmed) && self.alphas.is_empty() {
            return cfg("alphas", "no alpha candidates");
        }
        if self.transforms.first() != Some(&TransformId::Identity) {
            return cfg("transforms", "the catalog must start with identity");
        }
        if self.hidden == 0 {
            return cfg("hidden", "must be at least 1");
        }
        Ok(())
    }
}

/// One point of the grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub kind: PolicyKind,
    /// `None` for the unaugmented baseline.
    pub magnitude: Option<u8>,
    pub alpha: usize,
    pub transforms: Vec<TransformId>,
}

impl Configuration {
    /// Full label, including the transform list; seeds are derived from it.
    pub fn label(&self) -> String {
        let mut s = self.name();
        if self.kind != PolicyKind::None {
            let names: Vec<&str> = self.transforms.iter().map(|t| t.name()).collect();
            s.push_str(&format!("/[{}]", names.join(",")));
        }
        s
    }

    /// Short display name such as `alpha_trimmed/M=5/alpha=1`.
    pub fn name(&self) -> String {
        let mut s = self.kind.name().to_string();
        if let Some(m) = self.magnitude {
            s.push_str(&format!("/M={m}"));
        }
        if self.kind == PolicyKind::AlphaTrimmed {
            s.push_str(&format!("/alpha={}", self.alpha));
        }
        s
    }

    /// Resolved policy with the given seed.
    pub fn policy(&self, seed: u64) -> Result<PolicyConfig> {
        if self.kind == PolicyKind::None {
            return Ok(PolicyConfig::none(seed));
        }
        let magnitude = self.magnitude.map_or(Magnitude::Fixed, Magnitude::Level);
        let specs: Vec<TransformSpec> = resolve_list(&self.transforms, magnitude)?;
        let policy = PolicyConfig::new(self.kind, specs, magnitude, seed).with_alpha(self.alpha);
        policy.validate()?;
        Ok(policy)
    }

    fn tie_key(&self) -> (u8, usize, usize) {
        let order = PolicyKind::ALL.iter().position(|k| *k == self.kind).unwrap_or(usize::MAX);
        (self.magnitude.unwrap_or(0), order, self.alpha)
    }
}

/// Grid points in canonical order: baseline once, then per kind every M
/// (and for α-trimmed every α).
pub fn configurations(plan: &SearchPlan) -> Vec<Configuration> {
    let mut out = Vec::new();
    for &kind in &plan.kinds {
        let base = Configuration { kind, magnitude: None, alpha: 0, transforms: plan.transforms.clone() };
        match kind {
            PolicyKind::None => out.push(Configuration { transforms: vec![TransformId::Identity], ..base }),
            PolicyKind::AlphaTrimmed => {
                for &m in &plan.magnitudes {
                    for &alpha in &plan.alphas {
                        if 2 * alpha >= plan.transforms.len() {
                            log::warn!("alpha={alpha} too deep for {} versions; skipped", plan.transforms.len());
                            continue;
                        }
                        out.push(Configuration { magnitude: Some(m), alpha, ..base.clone() });
                    }
                }
            }
            _ => {
                for &m in &plan.magnitudes {
                    out.push(Configuration { magnitude: Some(m), ..base.clone() });
                }
            }
        }
    }
    out
}

/// Seed of the `(configuration, split)` job.
pub fn run_seed(master: u64, config: &Configuration, split: usize) -> u64 {
    hash_words(hash_str(master, &config.label()), &[split as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: usize,
    pub split: usize,
    pub seed: u64,
    pub val_accuracy: Option<f64>,
    pub val_f1: Option<f64>,
    pub test_accuracy: Option<f64>,
    #[serde(skip)]
    pub test_probabilities: Option<Vec<Vec<f64>>>,
    pub report: Option<TrainReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: Configuration,
    pub label: String,
    pub mean_val_accuracy: f64,
    pub std_val_accuracy: f64,
    pub failed: bool,
    pub mean_test_accuracy: Option<f64>,
    /// Accuracy of the split models' averaged probabilities on the test set.
    pub ensemble_test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub dataset: String,
    pub seed: u64,
    pub configs: Vec<ConfigSummary>,
    pub runs: Vec<RunResult>,
    pub best: Option<usize>,
    pub run_count: usize,
    /// Per split: validation class counts.
    pub split_class_counts: Vec<Vec<usize>>,
}

/// One training job on a fixed train/validation pair.
pub fn run_one(
    plan: &SearchPlan,
    config: &Configuration,
    split: usize,
    train_set: &Dataset,
    val_set: &Dataset,
    test_set: Option<&Dataset>,
) -> RunResult {
    let seed = run_seed(plan.seed, config, split);
    let mut result = RunResult {
        config: 0,
        split,
        seed,
        val_accuracy: None,
        val_f1: None,
        test_accuracy: None,
        test_probabilities: None,
        report: None,
        error: None,
    };
    let attempt = || -> Result<(f64, f64, Option<(f64, Vec<Vec<f64>>)>, TrainReport)> {
        let policy = config.policy(hash_words(seed, &[1]))?;
        let mut cfg = plan.train.clone();
        cfg.policy = policy;
        cfg.seed = hash_words(seed, &[2]);
        let model = Mlp::new(
            train_set.series_len(),
            plan.hidden,
            train_set.n_classes,
            &RngStream::new(hash_words(seed, &[3])),
        );
        let outcome = train(&cfg, train_set, val_set, model).map_err(|f| f.error)?;
        let val = evaluate(&outcome.model, val_set)?;
        let test = test_set
            .map(|t| evaluate(&outcome.model, t).map(|e| (e.accuracy, e.probabilities)))
            .transpose()?;
        Ok((val.accuracy, val.f1, test, outcome.report))
    };
    match attempt() {
        Ok((acc, f1, test, report)) => {
            result.val_accuracy = Some(acc);
            result.val_f1 = Some(f1);
            if let Some((a, p)) = test {
                result.test_accuracy = Some(a);
                result.test_probabilities = Some(p);
            }
            result.report = Some(report);
        }
        Err(e) => {
            log::warn!("{} split {split} failed: {e}", config.name());
            result.error = Some(e.to_string());
        }
    }
    result
}

/// Train every configuration on every split; `test_set`, if given, is
/// scored by each run and by the per-configuration ensemble.
pub fn grid_search(plan: &SearchPlan, dataset: &Dataset, test_set: Option<&Dataset>) -> Result<SearchResult> {
    plan.validate()?;
    run_grid(plan, &configurations(plan), dataset, test_set)
}

fn run_grid(plan: &SearchPlan, configs: &[Configuration], dataset: &Dataset, test_set: Option<&Dataset>) -> Result<SearchResult> {
    if dataset.is_empty() {
        return Err(Error::domain("empty dataset"));
    }
    dataset.validate()?;
    let splits = stratified_splits(dataset, plan.split_fraction, plan.n_splits, plan.seed)?;
    let jobs: Vec<(usize, usize)> =
        (0..configs.len()).flat_map(|c| (0..splits.len()).map(move |s| (c, s))).collect();
    let runs: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let (tr, va) = &splits[s];
            RunResult { config: c, ..run_one(plan, &configs[c], s, tr, va, test_set) }
        })
        .collect();

    let summaries: Vec<ConfigSummary> = configs
        .iter()
        .enumerate()
        .map(|(c, config)| summarize(config, runs.iter().filter(|r| r.config == c), test_set))
        .collect();
    Ok(SearchResult {
        dataset: dataset.name.clone(),
        seed: plan.seed,
        best: select_best(&summaries),
        run_count: runs.len(),
        configs: summaries,
        runs,
        split_class_counts: splits.iter().map(|(_, v)| v.class_counts()).collect(),
    })
}

fn summarize<'a>(config: &Configuration, runs: impl Iterator<Item = &'a RunResult>, test_set: Option<&Dataset>) -> ConfigSummary {
    let runs: Vec<&RunResult> = runs.collect();
    let failed = runs.iter().any(|r| r.error.is_some());
    let accs: Vec<f64> = runs.iter().filter_map(|r| r.val_accuracy).collect();
    let (mean, std) = if accs.is_empty() || failed { (f64::NAN, f64::NAN) } else { mean_std(&accs) };
    let mut summary = ConfigSummary {
        config: config.clone(),
        label: config.name(),
        mean_val_accuracy: mean,
        std_val_accuracy: std,
        failed,
        mean_test_accuracy: None,
        ensemble_test_accuracy: None,
    };
    if let (Some(test), false) = (test_set, failed) {
        let tests: Vec<f64> = runs.iter().filter_map(|r| r.test_accuracy).collect();
        summary.mean_test_accuracy = Some(tests.iter().sum::<f64>() / tests.len() as f64);
        let probs: Vec<&Vec<Vec<f64>>> = runs.iter().filter_map(|r| r.test_probabilities.as_ref()).collect();
        let correct = test
            .samples
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                let classes = probs[0][*i].len();
                let avg: Vec<f64> = (0..classes).map(|j| probs.iter().map(|p| p[*i][j]).sum::<f64>()).collect();
                let pred = (0..classes).fold(0, |b, j| if avg[j] > avg[b] { j } else { b });
                pred == s.label
            })
            .count();
        summary.ensemble_test_accuracy = Some(correct as f64 / test.len() as f64);
    }
    summary
}

/// Highest mean validation accuracy; ties go to the smaller M, then policy
/// order, then smaller α. Failed configurations never win.
pub fn select_best(summaries: &[ConfigSummary]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in summaries.iter().enumerate() {
        if s.failed || !s.mean_val_accuracy.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &summaries[b];
                let better = s.mean_val_accuracy > cur.mean_val_accuracy
                    || (s.mean_val_accuracy == cur.mean_val_accuracy && s.config.tie_key() < cur.config.tie_key());
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// One summary row per policy (and α): the best M of that group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub accuracy: f64,
    pub optimal_m: Option<u8>,
    pub config: usize,
}

impl SearchResult {
    /// Best M per policy group. Accuracy is the ensemble test accuracy when a
    /// test set was scored, else mean validation accuracy.
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, s) in self.configs.iter().enumerate() {
            let name = match s.config.kind {
                PolicyKind::AlphaTrimmed => format!("alpha_trimmed(alpha={})", s.config.alpha),
                k => k.name().to_string(),
            };
            match groups.iter_mut().find(|(n, _)| *n == name) {
                Some((_, members)) => members.push(i),
                None => groups.push((name, vec![i])),
            }
        }
        groups
            .into_iter()
            .filter_map(|(policy, members)| {
                let subset: Vec<ConfigSummary> = members.iter().map(|&i| self.configs[i].clone()).collect();
                let b = members[select_best(&subset)?];
                let s = &self.configs[b];
                Some(SummaryRow {
                    policy,
                    accuracy: s.ensemble_test_accuracy.unwrap_or(s.mean_val_accuracy),
                    optimal_m: s.config.magnitude,
                    config: b,
                })
            })
            .collect()
    }

    /// CSV `dataset,policy,accuracy,optimal_m`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset", "policy", "accuracy", "optimal_m"])?;
        for row in self.summary_rows() {
            w.write_record([
                self.dataset.clone(),
                row.policy,
                format!("{:.4}", row.accuracy),
                row.optimal_m.map_or_else(|| "-".to_string(), |m| m.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub kind: PolicyKind,
    pub size: usize,
    pub repetition: usize,
    pub transforms: Vec<TransformId>,
    pub mean_val_accuracy: f64,
    pub std_val_accuracy: f64,
    pub failed: bool,
}

/// Random subsets of the catalog's extra transforms, `n` per size, always
/// with Identity first and in catalog order.
pub fn random_subset(catalog: &[TransformId], size: usize, repetition: usize, seed: u64) -> Result<Vec<TransformId>> {
    let extras = &catalog[1..];
    if size > extras.len() {
        return Err(Error::domain(format!("subset size {size} exceeds the {} available transforms", extras.len())));
    }
    let stream = RngStream::new(hash_str(seed, "subset")).sample(size as u64).transform(repetition as u64);
    let mut picked = index::sample(&mut stream.rng(), extras.len(), size).into_vec();
    picked.sort_unstable();
    Ok(std::iter::once(catalog[0]).chain(picked.into_iter().map(|i| extras[i])).collect())
}

/// Validation accuracy against subset size for every augmenting kind in the
/// plan, at the first M candidate and first α (reduced when the subset is
/// too small to trim).
pub fn subset_sweep(plan: &SearchPlan, dataset: &Dataset) -> Result<Vec<SweepPoint>> {
    plan.validate()?;
    if plan.subset_sizes.is_empty() || plan.subset_repetitions == 0 {
        return Err(Error::Config { key: "subset_sizes".into(), msg: "no subset sizes or repetitions".into() });
    }
    let m = *plan.magnitudes.first().ok_or_else(|| Error::domain("no magnitude"))?;
    let alpha = plan.alphas.first().copied().unwrap_or(1);
    let mut configs = Vec::new();
    let mut points = Vec::new();
    for &kind in plan.kinds.iter().filter(|k| **k != PolicyKind::None) {
        for &size in &plan.subset_sizes {
            for rep in 0..plan.subset_repetitions {
                let transforms = random_subset(&plan.transforms, size, rep, plan.seed)?;
                let alpha = if kind == PolicyKind::AlphaTrimmed { alpha.min(size / 2) } else { 0 };
                configs.push(Configuration { kind, magnitude: Some(m), alpha, transforms: transforms.clone() });
                points.push((kind, size, rep, transforms));
            }
        }
    }
    let result = run_grid(plan, &configs, dataset, None)?;
    Ok(points
        .into_iter()
        .zip(result.configs)
        .map(|((kind, size, repetition, transforms), s)| SweepPoint {
            kind,
            size,
            repetition,
            transforms,
            mean_val_accuracy: s.mean_val_accuracy,
            std_val_accuracy: s.std_val_accuracy,
            failed: s.failed,
        })
        .collect())
}

/// CSV `policy,size,repetition,transforms,mean_val_accuracy,std_val_accuracy`.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "size", "repetition", "transforms", "mean_val_accuracy", "std_val_accuracy"])?;
    for p in points {
        let names: Vec<&str> = p.transforms.iter().map(|t| t.name()).collect();
        w.write_record([
            p.kind.name().to_string(),
            p.size.to_string(),
            p.repetition.to_string(),
            names.join(";"),
            p.mean_val_accuracy.to_string(),
            p.std_val_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sine_vs_sawtooth, stratified_split};

    fn small_plan(seed: u64) -> SearchPlan {
        let mut plan = SearchPlan::new(seed);
        plan.magnitudes = vec![1, 5];
        plan.n_splits = 2;
        plan.hidden = 8;
        plan.train.batch_size = 16;
        plan.train.max_epochs = 4;
        plan.train.optimizer.lr = 5e-3;
        plan
    }

    fn data() -> Dataset {
        sine_vs_sawtooth(40, 24, 8.0, 0.2, 5).unwrap().znormalized()
    }

    #[test]
    fn grid_layout_and_run_count() {
        let plan = small_plan(1);
        let configs = configurations(&plan);
        // none + 2 waugment + 2x2 alpha + 2 randaugment
        assert_eq!(configs.len(), 1 + 2 + 4 + 2);
        let mut plan = small_plan(1);
        plan.kinds = vec![PolicyKind::WAugment];
        let r = grid_search(&plan, &data(), None).unwrap();
        assert_eq!(r.run_count, 4);
        for c in 0..2 {
            for s in 0..2 {
                assert_eq!(r.runs.iter().filter(|x| x.config == c && x.split == s).count(), 1);
            }
        }
    }

    #[test]
    fn single_cell_equals_direct_train() {
        let mut plan = small_plan(3);
        plan.kinds = vec![PolicyKind::RandAugment];
        plan.magnitudes = vec![5];
        plan.n_splits = 1;
        let ds = data();
        let r = grid_search(&plan, &ds, None).unwrap();
        let config = &configurations(&plan)[0];
        let seed = run_seed(plan.seed, config, 0);
        let (tr, va) = stratified_split(&ds, 0.8, RngStream::new(plan.seed).split(0).key()).unwrap();
        let mut cfg = plan.train.clone();
        cfg.policy = config.policy(hash_words(seed, &[1])).unwrap();
        cfg.seed = hash_words(seed, &[2]);
        let model = Mlp::new(24, 8, 2, &RngStream::new(hash_words(seed, &[3])));
        let out = train(&cfg, &tr, &va, model).unwrap();
        let acc = evaluate(&out.model, &va).unwrap().accuracy;
        assert_eq!(r.runs[0].val_accuracy, Some(acc));
        assert_eq!(r.configs[0].mean_val_accuracy, acc);
    }

    #[test]
    fn ties_prefer_small_m_then_policy_order() {
        let mk = |kind, m: Option<u8>, acc| ConfigSummary {
            config: Configuration { kind, magnitude: m, alpha: 1, transforms: vec![] },
            label: String::new(),
            mean_val_accuracy: acc,
            std_val_accuracy: 0.0,
            failed: false,
            mean_test_accuracy: None,
            ensemble_test_accuracy: None,
        };
        let s = vec![
            mk(PolicyKind::RandAugment, Some(5), 0.9),
            mk(PolicyKind::WAugment, Some(10), 0.9),
            mk(PolicyKind::AlphaTrimmed, Some(5), 0.9),
            mk(PolicyKind::WAugment, Some(5), 0.9),
            mk(PolicyKind::WAugment, Some(1), 0.8),
        ];
        assert_eq!(select_best(&s), Some(3));
        let mut failed = s.clone();
        failed[3].failed = true;
        assert_eq!(select_best(&failed), Some(2));
    }

    #[test]
    fn search_is_deterministic() {
        let mut plan = small_plan(8);
        plan.kinds = vec![PolicyKind::None, PolicyKind::AlphaTrimmed];
        plan.alphas = vec![1];
        let ds = data();
        let a = grid_search(&plan, &ds, Some(&ds)).unwrap();
        let b = grid_search(&plan, &ds, Some(&ds)).unwrap();
        assert_eq!(a.best, b.best);
        let strip = |r: &SearchResult| -> Vec<Option<f64>> { r.runs.iter().map(|x| x.val_accuracy).collect() };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.summary_rows(), b.summary_rows());
        let mut buf = Vec::new();
        a.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dataset,policy,accuracy,optimal_m\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn failed_configuration_is_marked() {
        let mut plan = small_plan(2);
        plan.kinds = vec![PolicyKind::None, PolicyKind::WAugment];
        plan.magnitudes = vec![5];
        plan.n_splits = 1;
        // magnify needs length >= 152, so every augmented run fails
        plan.transforms = vec![TransformId::Identity, TransformId::Magnify];
        let r = grid_search(&plan, &data(), None).unwrap();
        assert!(!r.configs[0].failed);
        assert!(r.configs[1].failed);
        assert_eq!(r.best, Some(0));
    }

    #[test]
    fn subsets() {
        let s = random_subset(&UCR_SET, 3, 0, 1).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0], TransformId::Identity);
        let pos: Vec<usize> = s.iter().map(|t| UCR_SET.iter().position(|u| u == t).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(random_subset(&UCR_SET, 0, 0, 1).unwrap(), vec![TransformId::Identity]);
        assert_eq!(random_subset(&UCR_SET, 8, 0, 1).unwrap(), UCR_SET.to_vec());
        assert!(random_subset(&UCR_SET, 9, 0, 1).is_err());

        let mut plan = small_plan(4);
        plan.kinds = vec![PolicyKind::AlphaTrimmed];
        plan.subset_sizes = vec![0, 2];
        plan.subset_repetitions = 2;
        plan.n_splits = 1;
        let points = subset_sweep(&plan, &data()).unwrap();
        assert_eq!(points.len(), 4);
        assert!(points.iter().all(|p| !p.failed));
    }
}
