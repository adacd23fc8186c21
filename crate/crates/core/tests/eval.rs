use mvdlcsl::eval::{
    cross_validate, knn_baseline, stratified_kfold, CvConfig, FeatureSpace, Method,
};
use mvdlcsl::synthetic::{generate_synthetic, SyntheticSpec};
use mvdlcsl::{BlockDims, Hyperparams, MultiViewDataset};
use ndarray::Array2;

#[test]
fn folds_partition_every_labeled_instance() {
    let syn = generate_synthetic(&SyntheticSpec::planted_default(0)).unwrap();
    for seed in 0..5 {
        let folds = stratified_kfold(syn.dataset.labels(), 5, seed).unwrap();
        let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..200).collect::<Vec<_>>());
        for fold in &folds {
            let mut per_class = [0usize; 4];
            for &j in fold {
                per_class[syn.labels[j]] += 1;
            }
            assert_eq!(per_class, [10; 4]);
        }
    }
}

#[test]
fn label_loss_matters_when_noise_is_high() {
    let mut spec = SyntheticSpec::planted_default(7);
    spec.noise = 1.0;
    spec.dims = BlockDims::new(4, 8, 4, 8).unwrap();
    let syn = generate_synthetic(&spec).unwrap();
    let mut hp = Hyperparams::new(spec.dims);
    hp.max_iters = 100;
    let cfg = CvConfig::new(5, 1);

    let full = cross_validate(&syn.dataset, &Method::Factorization(hp.clone()), &cfg).unwrap();
    let knn = cross_validate(&syn.dataset, &Method::Knn(FeatureSpace::Concatenated), &cfg).unwrap();
    hp.gamma = 0.0;
    let unsupervised = cross_validate(&syn.dataset, &Method::Factorization(hp), &cfg).unwrap();

    assert!(
        full.mean > knn.mean,
        "factorization {} vs knn {}",
        full.mean,
        knn.mean
    );
    assert!(
        full.mean > unsupervised.mean,
        "gamma=1 {} vs gamma=0 {}",
        full.mean,
        unsupervised.mean
    );
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let syn = generate_synthetic(&SyntheticSpec::planted_default(5)).unwrap();
    let mut hp = Hyperparams::new(syn.planted.dims());
    hp.max_iters = 15;
    let method = Method::Factorization(hp);
    let mut cfg = CvConfig::new(4, 2);
    let serial = cross_validate(&syn.dataset, &method, &cfg).unwrap();
    cfg.jobs = 3;
    let parallel = cross_validate(&syn.dataset, &method, &cfg).unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn exact_class_templates_are_classified_perfectly() {
    let c = 3;
    let n = 30;
    let templates = [
        Array2::from_shape_fn((6, c), |(i, k)| if i % c == k { 2.0 } else { 0.1 }),
        Array2::from_shape_fn((4, c), |(i, k)| if (i + 1) % c == k { 1.5 } else { 0.2 }),
    ];
    let labels: Vec<usize> = (0..n).map(|j| j % c).collect();
    let views = templates
        .iter()
        .map(|t| Array2::from_shape_fn((t.nrows(), n), |(i, j)| t[[i, labels[j]]]))
        .collect();
    let ds = MultiViewDataset::new(views, labels.iter().map(|&l| Some(l)).collect(), c).unwrap();

    // Fold-in has no label term, so spare non-discriminative blocks could
    // absorb the template; give the model exactly the data's rank.
    let mut hp = Hyperparams::new(BlockDims::new(3, 0, 3, 0).unwrap());
    hp.max_iters = 100;
    let report = cross_validate(&ds, &Method::Factorization(hp), &CvConfig::new(5, 2)).unwrap();
    assert_eq!(report.mean, 1.0);
    assert_eq!(report.std, 0.0);

    let all: Vec<usize> = (0..n).collect();
    let (train, test) = all.split_at(15);
    let pred = knn_baseline(&ds, train, test, FeatureSpace::View(1)).unwrap();
    assert_eq!(pred, &labels[15..]);
}
