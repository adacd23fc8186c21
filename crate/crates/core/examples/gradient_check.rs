//! Compare every analytic block gradient with central finite differences.

use mvdlcsl::objective::{grad_basis, grad_coef, grad_proj};
use mvdlcsl::synthetic::{generate_synthetic, SyntheticSpec};
use mvdlcsl::{init_model, total_objective, BlockDims, BlockId, Hyperparams, LossMode};
use ndarray::Array2;

fn main() -> mvdlcsl::Result<()> {
    let spec = SyntheticSpec {
        num_instances: 12,
        num_classes: 3,
        view_dims: vec![5, 4],
        dims: BlockDims::new(2, 1, 2, 1)?,
        noise: 0.05,
        separation: 1.0,
        seed: 1,
    };
    let mut ds = generate_synthetic(&spec)?.dataset;
    let mut labels = ds.labels().to_vec();
    labels[0] = None;
    ds = ds.with_labels(labels)?;

    for mode in [LossMode::CrossEntropy, LossMode::SquaredError] {
        let mut hp = Hyperparams::new(spec.dims);
        hp.loss_mode = mode;
        let mut model = init_model(&ds, &hp)?;
        // Non-zero projections so the label terms contribute.
        for id in model.block_ids() {
            if let BlockId::Proj(_) = id {
                model.block_mut(id).mapv_inplace(|_| 0.3);
            }
        }
        println!("{mode:?}");
        for id in model.block_ids() {
            let analytic = match id {
                BlockId::Basis { view, kind } => grad_basis(&model, &ds, &hp, view, kind),
                BlockId::Coef(b) => grad_coef(&model, &ds, &hp, b),
                BlockId::Proj(b) => grad_proj(&model, &ds, &hp, b),
            };
            let h = 1e-6;
            let mut numeric = Array2::zeros(analytic.dim());
            for ((i, j), g) in numeric.indexed_iter_mut() {
                let x = model.block(id)[[i, j]];
                model.block_mut(id)[[i, j]] = x + h;
                let up = total_objective(&model, &ds, &hp).total;
                model.block_mut(id)[[i, j]] = x - h;
                let down = total_objective(&model, &ds, &hp).total;
                model.block_mut(id)[[i, j]] = x;
                *g = (up - down) / (2.0 * h);
            }
            let diff = (&analytic - &numeric).mapv(|d| d * d).sum().sqrt();
            let scale = numeric.mapv(|d| d * d).sum().sqrt().max(1e-12);
            println!("  {id:?}: relative error {:.2e}", diff / scale);
        }
    }
    Ok(())
}
