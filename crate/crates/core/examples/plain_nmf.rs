//! With a single view-specific discriminative block and every penalty off,
//! the solver is ordinary non-negative matrix factorization.

use mvdlcsl::eval::NmfBaseline;
use mvdlcsl::solver::fit;
use mvdlcsl::MultiViewDataset;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mvdlcsl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = Array2::from_shape_simple_fn((6, 2), || rng.random_range(0.1..1.0));
    let h = Array2::from_shape_simple_fn((10, 2), || rng.random_range(0.1..1.0));
    let x = w.dot(&h.t());
    let ds = MultiViewDataset::new(vec![x.clone()], vec![None; 10], 2)?;

    let mut settings = NmfBaseline::new(0, 2);
    settings.max_iters = 500;
    settings.rel_tol = 1e-15;
    let (model, trace) = fit(&ds, &settings.hyperparams()?)?;

    let approx = model.bases[0].w_sd.dot(&model.coefficients.h_sd[0].t());
    let err = (&x - &approx).mapv(|d| d * d).sum();
    println!(
        "rank-2 target, {} iterations ({:?})",
        trace.records.len(),
        trace.status
    );
    println!("squared reconstruction error {err:.3e}");
    Ok(())
}
