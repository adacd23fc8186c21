use mvdlcsl::eval::{accuracy, stratified_kfold};
use mvdlcsl::inference::argmax_columns;
use mvdlcsl::io::{read_view_csv, write_view_csv};
use mvdlcsl::objective::{
    is_column_stochastic, orthogonality_penalty, shift_columns, softmax_columns,
};
use mvdlcsl::{BlockDims, FactorModel};
use ndarray::{concatenate, Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(
    max_rows: usize,
    max_cols: usize,
    lo: f64,
    hi: f64,
) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(lo..hi, r * c)
            .prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_is_column_stochastic_and_shift_invariant(
        z in matrix(6, 8, -50.0, 50.0),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax_columns(z.view());
        prop_assert!(is_column_stochastic(p.view(), 1e-12));
        let delta: Vec<f64> = (0..z.ncols()).map(|j| shift * (j as f64 - 1.5)).collect();
        let q = softmax_columns(shift_columns(z.view(), &delta).view());
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_survives_strictly_increasing_maps(z in matrix(5, 7, -5.0, 5.0)) {
        let mapped = z.mapv(|x| 2.0 * x.exp() + 1.0);
        prop_assert_eq!(argmax_columns(z.view()), argmax_columns(mapped.view()));
    }

    #[test]
    fn orthogonality_penalty_sums_all_column_inner_products(
        m in 1usize..12, k1 in 0usize..4, k3 in 0usize..4, seed in any::<u64>(),
    ) {
        prop_assume!(k1 + k3 > 0);
        let dims = BlockDims::new(k1, 1, k3, 1).unwrap();
        let mut model = FactorModel::zeros(&[m], 3, 2, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.bases[0].w_cd.mapv_inplace(|_| rng.random::<f64>());
        model.bases[0].w_sd.mapv_inplace(|_| rng.random::<f64>());
        let wd = concatenate(Axis(1), &[model.bases[0].w_cd.view(), model.bases[0].w_sd.view()]).unwrap();
        let mut expected = 0.0;
        for a in wd.columns() {
            for b in wd.columns() {
                expected += a.dot(&b);
            }
        }
        let got = orthogonality_penalty(&model, 0);
        prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    #[test]
    fn view_files_round_trip_every_value(
        x in matrix(4, 5, 0.0, 1.0),
        exponent in -300i32..300,
    ) {
        let x = x.mapv(|v| v * 10f64.powi(exponent));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        write_view_csv(&path, &x).unwrap();
        prop_assert_eq!(read_view_csv(&path).unwrap(), x);
    }

    #[test]
    fn stratified_folds_partition_labeled_instances(
        labels in prop::collection::vec(prop::option::weighted(0.8, 0usize..3), 30..80),
        k in 2usize..4,
        seed in any::<u64>(),
    ) {
        let counts = (0..3).map(|c| labels.iter().filter(|l| **l == Some(c)).count());
        prop_assume!(counts.clone().all(|n| n == 0 || n >= k));
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        let labeled: Vec<usize> = (0..labels.len()).filter(|&j| labels[j].is_some()).collect();
        prop_assert_eq!(all, labeled);
        for class in 0..3 {
            let per_fold: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&j| labels[j] == Some(class)).count())
                .collect();
            let lo = per_fold.iter().min().unwrap();
            let hi = per_fold.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn accuracy_is_a_fraction(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50)) {
        let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let a = accuracy(&p, &t).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(accuracy(&t, &t).unwrap(), 1.0);
    }
}
