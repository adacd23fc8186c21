//! Write a dataset, a fitted model, its trace and its embeddings to disk,
//! then read them back.

use mvdlcsl::io::{
    export_embeddings, export_trace, load_dataset, load_model, load_trace, save_dataset, save_model,
};
use mvdlcsl::solver::fit;
use mvdlcsl::synthetic::{generate_synthetic, SyntheticSpec};
use mvdlcsl::Hyperparams;

fn main() -> mvdlcsl::Result<()> {
    let dir = std::env::temp_dir().join("mvdlcsl-save-and-load");
    let spec = SyntheticSpec::planted_default(1);
    let ds = generate_synthetic(&spec)?.dataset;

    let manifest = save_dataset(&ds, &dir, "planted")?;
    let loaded = load_dataset(&manifest)?;
    println!(
        "dataset {} round-trips: {}",
        manifest.display(),
        loaded == ds
    );

    let mut hp = Hyperparams::new(spec.dims);
    hp.max_iters = 50;
    let (model, trace) = fit(&loaded, &hp)?;

    let model_path = dir.join("model.json");
    save_model(&model, &model_path)?;
    println!("model round-trips: {}", load_model(&model_path)? == model);

    let trace_path = dir.join("trace.csv");
    export_trace(&trace, &trace_path)?;
    println!("trace rows: {}", load_trace(&trace_path)?.len());

    let emb_path = dir.join("embeddings.csv");
    export_embeddings(&model, &loaded, &emb_path)?;
    println!("embeddings written to {}", emb_path.display());
    Ok(())
}
