//! Fit on part of the data, then classify unseen instances by folding them
//! into the frozen model.

use mvdlcsl::eval::accuracy;
use mvdlcsl::inference::{fold_in, predict_labels, predict_proba};
use mvdlcsl::solver::fit;
use mvdlcsl::synthetic::{generate_synthetic, SyntheticSpec};
use mvdlcsl::Hyperparams;

fn main() -> mvdlcsl::Result<()> {
    let spec = SyntheticSpec::planted_default(3);
    let syn = generate_synthetic(&spec)?;
    let train: Vec<usize> = (0..160).collect();
    let test: Vec<usize> = (160..200).collect();

    let hp = Hyperparams::new(spec.dims);
    let (model, _) = fit(&syn.dataset.select(&train)?, &hp)?;

    let unseen = syn.dataset.select(&test)?;
    let folded = fold_in(&model, unseen.views(), &hp)?;
    println!(
        "fold-in: {:?} after {} iterations",
        folded.status, folded.iterations
    );

    let proba = predict_proba(&model, &folded.coefficients);
    let predicted = predict_labels(&model, &folded.coefficients);
    for (k, &j) in test.iter().take(5).enumerate() {
        let p: Vec<String> = proba.column(k).iter().map(|x| format!("{x:.3}")).collect();
        println!(
            "instance {j}: true {} predicted {} [{}]",
            syn.labels[j],
            predicted[k],
            p.join(" ")
        );
    }
    let truth: Vec<usize> = test.iter().map(|&j| syn.labels[j]).collect();
    println!("held-out accuracy {:.4}", accuracy(&predicted, &truth)?);
    Ok(())
}
