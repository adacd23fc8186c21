//! Fit the model to a planted dataset and inspect the result.
//!
//! Run with `cargo run --release --example fit_synthetic`.

use mvdlcsl::eval::accuracy;
use mvdlcsl::inference::predict_labels;
use mvdlcsl::solver::fit;
use mvdlcsl::synthetic::{generate_synthetic, SyntheticSpec};
use mvdlcsl::{total_objective, validate, Hyperparams};

fn main() -> mvdlcsl::Result<()> {
    let spec = SyntheticSpec::planted_default(7);
    let syn = generate_synthetic(&spec)?;
    let ds = &syn.dataset;
    println!(
        "{} instances, views {:?}, {} classes",
        ds.num_instances(),
        ds.view_dims(),
        ds.num_classes()
    );

    let hp = Hyperparams::new(spec.dims);
    let (model, trace) = fit(ds, &hp)?;

    let totals = trace.totals();
    println!("initial objective {:.6e}", trace.initial.total);
    for (i, t) in totals.iter().enumerate().filter(|(i, _)| i % 50 == 0) {
        println!("  iteration {:>3}: {t:.6e}", i + 1);
    }
    println!("{:?} after {} iterations", trace.status, totals.len());

    let parts = total_objective(&model, ds, &hp);
    println!(
        "reconstruction {:.4e}  orthogonality {:.4e}  sparsity {:.4e}  label loss {:.4e}",
        parts.reconstruction, parts.orthogonality, parts.sparsity, parts.label_loss
    );

    let predicted = predict_labels(&model, &model.coefficients);
    println!(
        "training accuracy {:.4}",
        accuracy(&predicted, &syn.labels)?
    );
    println!("constraint violations: {}", validate(&model, ds).len());
    Ok(())
}
