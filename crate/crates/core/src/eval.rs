//! Evaluation protocol: stratified k-fold cross-validation with repeats,
//! accuracy statistics and two baselines (1-NN and plain NMF + 1-NN).

use std::fmt::Write as _;

use ndarray::{concatenate, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{fold_in, predict_labels};
use crate::model::{BlockDims, FitStatus, Hyperparams, MultiViewDataset};
use crate::solver::fit;

/// Splits the labeled instances into `k` disjoint folds, stratified by class.
///
/// Each class is shuffled and dealt round-robin, continuing where the previous
/// class stopped, so per-class and total fold sizes differ by at most one.
/// Unlabeled instances belong to no fold. Folds are returned sorted.
pub fn stratified_kfold(labels: &[Option<usize>], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let num_classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for (j, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            by_class[*c].push(j);
        }
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                folds: k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for j in members {
            folds[next].push(j);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidData("accuracy of an empty prediction".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Feature space searched by the nearest-neighbor baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSpace {
    View(usize),
    /// All views stacked feature-wise.
    Concatenated,
}

fn feature_matrix(dataset: &MultiViewDataset, space: FeatureSpace) -> Result<Array2<f64>> {
    match space {
        FeatureSpace::View(v) if v < dataset.num_views() => Ok(dataset.view(v).clone()),
        FeatureSpace::View(v) => Err(Error::InvalidData(format!(
            "view {v} requested, dataset has {}",
            dataset.num_views()
        ))),
        FeatureSpace::Concatenated => {
            let views: Vec<_> = dataset.views().iter().map(|x| x.view()).collect();
            Ok(concatenate(Axis(0), &views).expect("views share the instance axis"))
        }
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// 1-NN over the columns of `features` (features × instances). Ties go to
/// the training instance listed first.
fn nearest_neighbor(
    features: &Array2<f64>,
    train: &[(usize, usize)],
    test: &[usize],
) -> Vec<usize> {
    test.iter()
        .map(|&t| {
            let q = features.column(t);
            let mut best = (f64::INFINITY, 0);
            for &(j, label) in train {
                let d = sq_dist(q, features.column(j));
                if d < best.0 {
                    best = (d, label);
                }
            }
            best.1
        })
        .collect()
}

fn labeled_training(
    dataset: &MultiViewDataset,
    train_idx: &[usize],
) -> Result<Vec<(usize, usize)>> {
    let mut sorted = train_idx.to_vec();
    sorted.sort_unstable();
    let train: Vec<(usize, usize)> = sorted
        .into_iter()
        .filter_map(|j| dataset.labels()[j].map(|l| (j, l)))
        .collect();
    if train.is_empty() {
        return Err(Error::InvalidData("no labeled training instances".into()));
    }
    Ok(train)
}

/// Labels each test instance with the label of its Euclidean-nearest labeled
/// training instance; ties go to the lowest training index.
pub fn knn_baseline(
    dataset: &MultiViewDataset,
    train_idx: &[usize],
    test_idx: &[usize],
    space: FeatureSpace,
) -> Result<Vec<usize>> {
    let features = feature_matrix(dataset, space)?;
    let train = labeled_training(dataset, train_idx)?;
    Ok(nearest_neighbor(&features, &train, test_idx))
}

/// Settings of the plain-NMF baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfBaseline {
    pub view: usize,
    pub rank: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl NmfBaseline {
    pub fn new(view: usize, rank: usize) -> Self {
        Self {
            view,
            rank,
            max_iters: 300,
            rel_tol: 1e-5,
            seed: 0,
        }
    }

    /// The factorization with only a view-specific discriminative block and
    /// every penalty switched off, which is plain NMF.
    pub fn hyperparams(&self) -> Result<Hyperparams> {
        let mut hp = Hyperparams::new(BlockDims::new(0, 0, self.rank, 0)?);
        hp.alpha = 0.0;
        hp.beta = 0.0;
        hp.gamma = 0.0;
        hp.max_iters = self.max_iters;
        hp.rel_tol = self.rel_tol;
        hp.seed = self.seed;
        Ok(hp)
    }
}

/// Plain NMF on one view of the training instances, fold-in for the test
/// instances, then 1-NN on the coefficients.
pub fn nmf_baseline(
    dataset: &MultiViewDataset,
    train_idx: &[usize],
    test_idx: &[usize],
    settings: &NmfBaseline,
) -> Result<Vec<usize>> {
    let hp = settings.hyperparams()?;
    let x = feature_matrix(dataset, FeatureSpace::View(settings.view))?;
    let labeled = labeled_training(dataset, train_idx)?;
    let mut train_cols = train_idx.to_vec();
    train_cols.sort_unstable();
    let unsupervised = MultiViewDataset::new(
        vec![x.select(Axis(1), &train_cols)],
        vec![None; train_cols.len()],
        dataset.num_classes(),
    )?;
    let (model, _) = fit(&unsupervised, &hp)?;
    let folded = fold_in(&model, &[x.select(Axis(1), test_idx)], &hp)?;

    // Rows of H become columns of the 1-NN feature matrix: training first.
    let h = concatenate(
        Axis(0),
        &[
            model.coefficients.h_sd[0].view(),
            folded.coefficients.h_sd[0].view(),
        ],
    )
    .expect("equal widths")
    .reversed_axes();
    let train_pos: Vec<(usize, usize)> = labeled
        .iter()
        .map(|&(j, l)| {
            (
                train_cols
                    .binary_search(&j)
                    .expect("labeled subset of train"),
                l,
            )
        })
        .collect();
    let test_pos: Vec<usize> = (train_cols.len()..train_cols.len() + test_idx.len()).collect();
    Ok(nearest_neighbor(&h, &train_pos, &test_pos))
}

/// A classifier evaluated by [`cross_validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Factorization(Hyperparams),
    Knn(FeatureSpace),
    Nmf(NmfBaseline),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Factorization(_) => "mvdlcsl".into(),
            Method::Knn(FeatureSpace::View(v)) => format!("knn_view{v}"),
            Method::Knn(FeatureSpace::Concatenated) => "knn_cat".into(),
            Method::Nmf(s) => format!("nmf_view{}", s.view),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    /// Seed of the fold assignment; repeat `r` uses a seed derived from it.
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl CvConfig {
    pub fn new(folds: usize, repeats: usize) -> Self {
        Self {
            folds,
            repeats,
            seed: 0,
            jobs: 1,
        }
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed ^ (repeat as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }
}

/// What a single fold hands to the learner.
#[derive(Debug)]
pub struct FoldContext<'a> {
    pub repeat: usize,
    pub fold: usize,
    pub train_idx: &'a [usize],
    pub test_idx: &'a [usize],
    /// Labels over all instances with the test fold masked out.
    pub masked_labels: &'a [Option<usize>],
    /// The dataset the learner is fitted on.
    pub train_set: &'a MultiViewDataset,
}

impl FoldContext<'_> {
    /// True if no test label is visible in the masked labels and the
    /// training set carries exactly the masked labels.
    pub fn masking_holds(&self) -> bool {
        self.test_idx
            .iter()
            .all(|&j| self.masked_labels[j].is_none())
            && self.train_set.num_instances() == self.train_idx.len()
            && self
                .train_idx
                .iter()
                .zip(self.train_set.labels())
                .all(|(&j, l)| self.masked_labels[j] == *l)
            && self.train_idx.iter().all(|j| !self.test_idx.contains(j))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: f64,
    /// Solver status of the factorization fit, when there is one.
    pub status: Option<FitStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub method: String,
    /// Scores in (repeat, fold) order.
    pub scores: Vec<FoldScore>,
    pub mean: f64,
    /// Population standard deviation of the fold scores.
    pub std: f64,
}

impl CvReport {
    pub fn repeat_means(&self) -> Vec<f64> {
        let repeats = self.scores.iter().map(|s| s.repeat + 1).max().unwrap_or(0);
        (0..repeats)
            .map(|r| {
                let v: Vec<f64> = self
                    .scores
                    .iter()
                    .filter(|s| s.repeat == r)
                    .map(|s| s.accuracy)
                    .collect();
                mean_std(&v).0
            })
            .collect()
    }
}

fn evaluate_fold(
    dataset: &MultiViewDataset,
    method: &Method,
    ctx: &FoldContext<'_>,
) -> Result<(Vec<usize>, Option<FitStatus>)> {
    match method {
        Method::Factorization(hp) => {
            let (model, trace) = fit(ctx.train_set, hp)?;
            let test_views: Vec<Array2<f64>> = dataset
                .views()
                .iter()
                .map(|x| x.select(Axis(1), ctx.test_idx))
                .collect();
            let folded = fold_in(&model, &test_views, hp)?;
            Ok((
                predict_labels(&model, &folded.coefficients),
                Some(trace.status),
            ))
        }
        Method::Knn(space) => {
            let (combined, train, test) = stack_held_out(dataset, ctx)?;
            Ok((knn_baseline(&combined, &train, &test, *space)?, None))
        }
        Method::Nmf(settings) => {
            let (combined, train, test) = stack_held_out(dataset, ctx)?;
            Ok((nmf_baseline(&combined, &train, &test, settings)?, None))
        }
    }
}

/// The fold's training set with the held-out instances appended unlabeled,
/// plus the index ranges of both parts.
fn stack_held_out(
    dataset: &MultiViewDataset,
    ctx: &FoldContext<'_>,
) -> Result<(MultiViewDataset, Vec<usize>, Vec<usize>)> {
    let views = dataset
        .views()
        .iter()
        .zip(ctx.train_set.views())
        .map(|(x, train)| {
            concatenate(
                Axis(1),
                &[train.view(), x.select(Axis(1), ctx.test_idx).view()],
            )
            .expect("same feature count")
        })
        .collect();
    let n_train = ctx.train_set.num_instances();
    let mut labels = ctx.train_set.labels().to_vec();
    labels.extend(std::iter::repeat_n(None, ctx.test_idx.len()));
    let combined = MultiViewDataset::new(views, labels, dataset.num_classes())?;
    Ok((
        combined,
        (0..n_train).collect(),
        (n_train..n_train + ctx.test_idx.len()).collect(),
    ))
}

/// [`cross_validate_observed`] without an observer.
pub fn cross_validate(
    dataset: &MultiViewDataset,
    method: &Method,
    cfg: &CvConfig,
) -> Result<CvReport> {
    cross_validate_observed(dataset, method, cfg, |_| {})
}

/// Repeated stratified k-fold cross-validation.
///
/// For each repeat the labeled instances are split into folds. Each fold in
/// turn is held out: its labels are masked, the learner is fitted on all other
/// instances (unlabeled ones included) and the held-out instances are
/// predicted inductively. `observer` sees every fold's context before the fit.
pub fn cross_validate_observed<F>(
    dataset: &MultiViewDataset,
    method: &Method,
    cfg: &CvConfig,
    observer: F,
) -> Result<CvReport>
where
    F: Fn(&FoldContext<'_>) + Sync,
{
    if cfg.repeats == 0 {
        return Err(Error::InvalidData("need at least one repeat".into()));
    }
    let mut tasks = Vec::new();
    for repeat in 0..cfg.repeats {
        let folds = stratified_kfold(dataset.labels(), cfg.folds, cfg.repeat_seed(repeat))?;
        for (fold, test) in folds.into_iter().enumerate() {
            tasks.push((repeat, fold, test));
        }
    }

    let run = |(repeat, fold, test): &(usize, usize, Vec<usize>)| -> Result<FoldScore> {
        let wrap = |e: Error| Error::Fold {
            repeat: *repeat,
            fold: *fold,
            source: Box::new(e),
        };
        let mut masked = dataset.labels().to_vec();
        for &j in test {
            masked[j] = None;
        }
        let train: Vec<usize> = (0..dataset.num_instances())
            .filter(|j| test.binary_search(j).is_err())
            .collect();
        let train_set = dataset
            .with_labels(masked.clone())
            .and_then(|d| d.select(&train))
            .map_err(wrap)?;
        let ctx = FoldContext {
            repeat: *repeat,
            fold: *fold,
            train_idx: &train,
            test_idx: test,
            masked_labels: &masked,
            train_set: &train_set,
        };
        observer(&ctx);
        let (predicted, status) = evaluate_fold(dataset, method, &ctx).map_err(wrap)?;
        let truth: Vec<usize> = test
            .iter()
            .map(|&j| dataset.labels()[j].expect("folds hold labeled instances"))
            .collect();
        Ok(FoldScore {
            repeat: *repeat,
            fold: *fold,
            accuracy: accuracy(&predicted, &truth).map_err(wrap)?,
            status,
        })
    };

    let results: Vec<Result<FoldScore>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidData(format!("cannot start {} workers: {e}", cfg.jobs)))?;
        pool.install(|| tasks.par_iter().map(run).collect())
    } else {
        tasks.iter().map(run).collect()
    };
    let scores = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&scores.iter().map(|s| s.accuracy).collect::<Vec<_>>());
    Ok(CvReport {
        method: method.name(),
        scores,
        mean,
        std,
    })
}

pub const RESULTS_HEADER: &str = "method,dataset,repeat,fold,accuracy";

/// Results table: one row per fold, then `mean` and `std` summary rows
/// (population std) for each report.
pub fn results_csv(dataset_name: &str, reports: &[CvReport]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in reports {
        for s in &r.scores {
            writeln!(
                out,
                "{},{dataset_name},{},{},{}",
                r.method, s.repeat, s.fold, s.accuracy
            )
            .unwrap();
        }
    }
    for r in reports {
        writeln!(out, "{},{dataset_name},mean,,{}", r.method, r.mean).unwrap();
        writeln!(out, "{},{dataset_name},std,,{}", r.method, r.std).unwrap();
    }
    out
}

/// One line of a grid file: `name=value` pairs separated by commas or
/// whitespace, e.g. `alpha=0.1, beta=0.01, gamma=1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub settings: Vec<(String, f64)>,
}

impl GridPoint {
    pub fn label(&self) -> String {
        self.settings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn apply(&self, base: &Hyperparams) -> Result<Hyperparams> {
        let mut hp = base.clone();
        for (key, value) in &self.settings {
            let count = || -> Result<usize> {
                if *value >= 0.0 && value.fract() == 0.0 {
                    Ok(*value as usize)
                } else {
                    Err(Error::InvalidHyperparams(format!(
                        "{key} must be a non-negative integer"
                    )))
                }
            };
            match key.as_str() {
                "alpha" => hp.alpha = *value,
                "beta" => hp.beta = *value,
                "gamma" => hp.gamma = *value,
                "lambda" => hp.lambda_ridge = *value,
                "k1" => hp.dims.k1 = count()?,
                "k2" => hp.dims.k2 = count()?,
                "k3" => hp.dims.k3 = count()?,
                "k4" => hp.dims.k4 = count()?,
                "max_iters" => hp.max_iters = count()?,
                "tol" => hp.rel_tol = *value,
                other => {
                    return Err(Error::InvalidHyperparams(format!(
                        "unknown grid parameter '{other}'"
                    )))
                }
            }
        }
        hp.validate()?;
        Ok(hp)
    }
}

/// Parses a grid file; blank lines and `#` comments are skipped.
pub fn parse_grid(text: &str) -> Result<Vec<GridPoint>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let mut settings = Vec::new();
        for item in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
        {
            let (k, v) = item.split_once('=').ok_or_else(|| {
                Error::InvalidHyperparams(format!(
                    "grid line {}: expected name=value, got '{item}'",
                    i + 1
                ))
            })?;
            let v: f64 = v.parse().map_err(|_| {
                Error::InvalidHyperparams(format!("grid line {}: cannot parse '{v}'", i + 1))
            })?;
            settings.push((k.trim().to_string(), v));
        }
        points.push(GridPoint { settings });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ten_instances_five_folds_one_per_class_each() {
        let labels: Vec<Option<usize>> = (0..10).map(|j| Some(j % 2)).collect();
        let folds = stratified_kfold(&labels, 5, 3).unwrap();
        for f in &folds {
            assert_eq!(f.len(), 2);
            let classes: Vec<usize> = f.iter().map(|&j| j % 2).collect();
            assert!(classes.contains(&0) && classes.contains(&1));
        }
    }

    #[test]
    fn small_class_is_named() {
        let labels = vec![Some(0); 10]
            .into_iter()
            .chain(vec![Some(1); 3])
            .collect::<Vec<_>>();
        match stratified_kfold(&labels, 5, 0) {
            Err(Error::ClassTooSmall {
                class,
                count,
                folds,
            }) => assert_eq!((class, count, folds), (1, 3, 5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unlabeled_instances_are_not_in_any_fold() {
        let mut labels: Vec<Option<usize>> = (0..20).map(|j| Some(j % 2)).collect();
        labels[3] = None;
        labels[4] = None;
        let folds = stratified_kfold(&labels, 3, 1).unwrap();
        let all: Vec<usize> = folds.concat();
        assert_eq!(all.len(), 18);
        assert!(!all.contains(&3) && !all.contains(&4));
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(matches!(
            accuracy(&[0], &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn knn_copies_exact_match_and_breaks_ties_low() {
        // instances: 0 at (0,0) class 0, 1 at (2,0) class 1, 2 at (0,0) test,
        // 3 at (1,0) equidistant from 0 and 1.
        let x = array![[0.0, 2.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.0]];
        let ds = MultiViewDataset::new(vec![x], vec![Some(0), Some(1), None, None], 2).unwrap();
        let pred = knn_baseline(&ds, &[1, 0], &[2, 3], FeatureSpace::View(0)).unwrap();
        assert_eq!(pred, vec![0, 0]);
        let ds = ds.with_labels(vec![Some(1), Some(0), None, None]).unwrap();
        let pred = knn_baseline(&ds, &[0, 1], &[3], FeatureSpace::Concatenated).unwrap();
        assert_eq!(pred, vec![1]);
    }

    #[test]
    fn grid_lines_parse_and_apply() {
        let grid = parse_grid("# sweep\nalpha=0.5, gamma=0\n\nbeta=0.01 k3=3\n").unwrap();
        assert_eq!(grid.len(), 2);
        let base = Hyperparams::new(BlockDims::new(1, 1, 1, 1).unwrap());
        let hp = grid[0].apply(&base).unwrap();
        assert_eq!((hp.alpha, hp.gamma, hp.beta), (0.5, 0.0, 0.1));
        assert_eq!(grid[1].apply(&base).unwrap().dims.k3, 3);
        assert!(parse_grid("alpha").is_err());
        assert!(parse_grid("delta=1").unwrap()[0].apply(&base).is_err());
        assert!(parse_grid("k1=1.5").unwrap()[0].apply(&base).is_err());
    }

    #[test]
    fn results_table_has_summary_rows() {
        let report = CvReport {
            method: "m".into(),
            scores: vec![
                FoldScore {
                    repeat: 0,
                    fold: 0,
                    accuracy: 1.0,
                    status: None,
                },
                FoldScore {
                    repeat: 0,
                    fold: 1,
                    accuracy: 0.5,
                    status: None,
                },
            ],
            mean: 0.75,
            std: 0.25,
        };
        let text = results_csv("d", &[report]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RESULTS_HEADER);
        assert_eq!(lines[1], "m,d,0,0,1");
        assert_eq!(lines[3], "m,d,mean,,0.75");
        assert_eq!(lines[4], "m,d,std,,0.25");
    }
}
