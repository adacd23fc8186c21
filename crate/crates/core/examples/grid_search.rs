//! Cross-validate a small hyperparameter grid given in the grid-file syntax.

use mvdlcsl::eval::{cross_validate, parse_grid, CvConfig, Method};
use mvdlcsl::synthetic::{generate_synthetic, SyntheticSpec};
use mvdlcsl::Hyperparams;

const GRID: &str = "
# alpha, beta and gamma around the defaults
alpha=0.1 beta=0.1 gamma=1
alpha=0.01 beta=0.1 gamma=1
alpha=0.1 beta=0.01 gamma=0.1
alpha=0.1 beta=0.1 gamma=0
";

fn main() -> mvdlcsl::Result<()> {
    let mut spec = SyntheticSpec::planted_default(7);
    spec.noise = 0.3;
    let ds = generate_synthetic(&spec)?.dataset;
    let mut base = Hyperparams::new(spec.dims);
    base.max_iters = 80;
    let cfg = CvConfig::new(5, 1);
    for point in parse_grid(GRID)? {
        let report = cross_validate(&ds, &Method::Factorization(point.apply(&base)?), &cfg)?;
        println!(
            "{:<32} {:.4} +- {:.4}",
            point.label(),
            report.mean,
            report.std
        );
    }
    Ok(())
}
