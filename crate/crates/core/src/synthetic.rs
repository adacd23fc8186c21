//! Planted-model generator.
//!
//! Data is drawn from the same four-block structure the solver fits, so the
//! generating factors and labels serve as ground truth in tests.

use log::warn;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockDims, Coefficients, FactorModel, MultiViewDataset, Projection, ViewBases};
use crate::objective::reconstruct_with;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_instances: usize,
    pub num_classes: usize,
    /// Feature dimension of each view.
    pub view_dims: Vec<usize>,
    pub dims: BlockDims,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Offset added to a class's own discriminative components.
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// n = 200, c = 4, two views of 30 and 40 features, K = (4, 2, 4, 2),
    /// σ = 0.01, δ = 1.
    pub fn planted_default(seed: u64) -> Self {
        Self {
            num_instances: 200,
            num_classes: 4,
            view_dims: vec![30, 40],
            dims: BlockDims {
                k1: 4,
                k2: 2,
                k3: 4,
                k4: 2,
            },
            noise: 0.01,
            separation: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.num_instances == 0 || self.num_classes < 2 || self.view_dims.is_empty() {
            return Err(Error::InvalidData(
                "synthetic spec needs n >= 1, c >= 2 and at least one view".into(),
            ));
        }
        if self.view_dims.contains(&0) {
            return Err(Error::InvalidData(
                "every view needs at least one feature".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidData(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidData(format!(
                "separation must be > 0, got {}",
                self.separation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    /// Fully labeled dataset.
    pub dataset: MultiViewDataset,
    /// Generating factors; projection blocks are zero.
    pub planted: FactorModel,
    pub labels: Vec<usize>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, high: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() * high)
}

/// Discriminative coefficients: component `k` belongs to class `k mod c`; a
/// row gets `δ + U(0, 0.1)` on its class's components and `U(0, 0.1)` elsewhere.
fn discriminative(
    rng: &mut ChaCha8Rng,
    labels: &[usize],
    k: usize,
    c: usize,
    delta: f64,
) -> Array2<f64> {
    let mut h = uniform(rng, labels.len(), k, 0.1);
    for (j, &class) in labels.iter().enumerate() {
        for comp in 0..k {
            if comp % c == class {
                h[[j, comp]] += delta;
            }
        }
    }
    h
}

/// Draws a dataset from the planted four-block model. Labels are assigned
/// round-robin; noise is clamped at zero.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let dims = spec.dims;
    let c = spec.num_classes;
    if dims.k1 + dims.k3 < c {
        warn!(
            "k1 + k3 = {} < {c} classes: some classes get no discriminative component",
            dims.k1 + dims.k3
        );
    }
    let n = spec.num_instances;
    let nv = spec.view_dims.len();
    let labels: Vec<usize> = (0..n).map(|j| j % c).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let bases: Vec<ViewBases> = spec
        .view_dims
        .iter()
        .map(|&m| ViewBases {
            w_cd: uniform(&mut rng, m, dims.k1, 1.0),
            w_cn: uniform(&mut rng, m, dims.k2, 1.0),
            w_sd: uniform(&mut rng, m, dims.k3, 1.0),
            w_sn: uniform(&mut rng, m, dims.k4, 1.0),
        })
        .collect();
    let h_cd = discriminative(&mut rng, &labels, dims.k1, c, spec.separation);
    let h_cn = uniform(&mut rng, n, dims.k2, 1.0);
    let h_sd = (0..nv)
        .map(|_| discriminative(&mut rng, &labels, dims.k3, c, spec.separation))
        .collect();
    let h_sn = (0..nv)
        .map(|_| uniform(&mut rng, n, dims.k4, 1.0))
        .collect();
    let coefficients = Coefficients {
        h_cd,
        h_cn,
        h_sd,
        h_sn,
    };

    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidData(e.to_string()))?;
    let views = bases
        .iter()
        .enumerate()
        .map(|(v, b)| {
            let mut x = reconstruct_with(b, &coefficients, v);
            if spec.noise > 0.0 {
                x.mapv_inplace(|e| (e + noise.sample(&mut rng)).max(0.0));
            }
            x
        })
        .collect();

    let dataset = MultiViewDataset::new(views, labels.iter().map(|&l| Some(l)).collect(), c)?;
    let planted = FactorModel {
        bases,
        coefficients,
        projection: Projection {
            b_cd: Array2::zeros((c, dims.k1)),
            b_sd: vec![Array2::zeros((c, dims.k3)); nv],
        },
        num_classes: c,
        hyperparams: None,
        fit_info: None,
    };
    Ok(Synthetic {
        dataset,
        planted,
        labels,
    })
}
