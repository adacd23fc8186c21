//! Predictions from a fitted model and inductive fold-in of unseen instances.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::frobenius_sq;
use crate::model::{
    init_scales, BlockId, CoefBlock, Coefficients, FactorModel, FitStatus, Hyperparams, ViewBases,
};
use crate::objective::{
    grad_coef_data_terms, logits_with, residual_with, softmax_columns, sparsity_with,
};
use crate::solver::{backtrack, relative_change, StepOutcome, StepPolicy};

/// How per-view predictions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Average of the per-view softmax probabilities.
    #[default]
    Probability,
    /// Softmax of the averaged per-view logits.
    Logit,
}

/// `c × n` class probabilities for the instances described by `coefficients`,
/// averaged uniformly over views.
pub fn predict_proba(model: &FactorModel, coefficients: &Coefficients) -> Array2<f64> {
    predict_proba_with(model, coefficients, Aggregation::Probability)
}

pub fn predict_proba_with(
    model: &FactorModel,
    coefficients: &Coefficients,
    aggregation: Aggregation,
) -> Array2<f64> {
    let nv = model.num_views();
    let shape = (model.num_classes, coefficients.num_instances());
    match aggregation {
        Aggregation::Probability => {
            let mut p = Array2::zeros(shape);
            for v in 0..nv {
                p += &softmax_columns(logits_with(&model.projection, coefficients, v).view());
            }
            p / nv as f64
        }
        Aggregation::Logit => {
            let mut z = Array2::zeros(shape);
            for v in 0..nv {
                z += &logits_with(&model.projection, coefficients, v);
            }
            softmax_columns((z / nv as f64).view())
        }
    }
}

/// Column-wise argmax; ties go to the lowest class index.
pub fn argmax_columns(p: ArrayView2<f64>) -> Vec<usize> {
    p.axis_iter(Axis(1))
        .map(|col| {
            let mut best = 0;
            for (i, &x) in col.iter().enumerate() {
                if x > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn predict_labels(model: &FactorModel, coefficients: &Coefficients) -> Vec<usize> {
    argmax_columns(predict_proba(model, coefficients).view())
}

/// `[H_CD | H_SD(1) | … | H_SD(n_v)]`, one row per instance.
pub fn discriminative_features(model: &FactorModel) -> Array2<f64> {
    features_of(&model.coefficients)
}

pub fn features_of(coefficients: &Coefficients) -> Array2<f64> {
    let mut blocks = vec![coefficients.h_cd.view()];
    blocks.extend(coefficients.h_sd.iter().map(|h| h.view()));
    concatenate(Axis(1), &blocks).expect("coefficient blocks share the instance axis")
}

/// Result of folding unseen instances into a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldIn {
    pub coefficients: Coefficients,
    pub iterations: usize,
    pub objective: f64,
    pub status: FitStatus,
}

/// Seed offset separating fold-in initialization from model initialization.
const FOLD_IN_SEED_SALT: u64 = 0x5eed_f01d;

fn check_new_views(model: &FactorModel, new_views: &[Array2<f64>]) -> Result<usize> {
    if new_views.len() != model.num_views() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} views, got {}",
            model.num_views(),
            new_views.len()
        )));
    }
    let n = new_views[0].ncols();
    for (v, (x, bases)) in new_views.iter().zip(&model.bases).enumerate() {
        if x.nrows() != bases.num_features() || x.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "view {v}: expected {} features x {n} instances, got {}x{}",
                bases.num_features(),
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().any(|&e| !e.is_finite() || e < 0.0) {
            return Err(Error::InvalidData(format!(
                "view {v} contains negative or non-finite entries"
            )));
        }
    }
    Ok(n)
}

/// Infers coefficients for unseen instances with the bases and projections
/// frozen, minimizing reconstruction error plus the β-weighted sparsity term.
pub fn fold_in(model: &FactorModel, new_views: &[Array2<f64>], hp: &Hyperparams) -> Result<FoldIn> {
    let n = check_new_views(model, new_views)?;
    let dims = model.dims();
    let scales = init_scales(new_views, dims.total());
    let common = scales.iter().sum::<f64>() / scales.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ FOLD_IN_SEED_SALT);
    let init = Coefficients::random(&mut rng, n, model.num_views(), dims, common, &scales);
    fold_in_from(model, new_views, hp, init)
}

fn fold_in_objective(
    bases: &[ViewBases],
    coefficients: &Coefficients,
    views: &[Array2<f64>],
    beta: f64,
) -> f64 {
    let recon: f64 = views
        .iter()
        .enumerate()
        .map(|(v, x)| frobenius_sq(residual_with(&bases[v], coefficients, v, x.view()).view()))
        .sum();
    recon + beta * sparsity_with(coefficients)
}

/// [`fold_in`] starting from the given coefficients.
pub fn fold_in_from(
    model: &FactorModel,
    new_views: &[Array2<f64>],
    hp: &Hyperparams,
    init: Coefficients,
) -> Result<FoldIn> {
    hp.validate()?;
    let n = check_new_views(model, new_views)?;
    let dims = model.dims();
    if init.num_instances() != n || init.num_views() != model.num_views() {
        return Err(Error::DimensionMismatch(
            "initial coefficients do not match the new instances".into(),
        ));
    }
    let bases = &model.bases;
    let mut coefficients = init;
    let ids: Vec<CoefBlock> = coefficients
        .block_ids()
        .into_iter()
        .filter(|b| dims.width(b.kind()) > 0)
        .collect();
    let mut policy = StepPolicy::from_hyperparams(hp);
    let mut f = fold_in_objective(bases, &coefficients, new_views, hp.beta);
    let mut status = FitStatus::MaxIters;
    let mut iterations = 0;

    for _ in 0..hp.max_iters {
        iterations += 1;
        let prev = f;
        let mut progressed = false;
        for &block in &ids {
            let residuals: Vec<Array2<f64>> = new_views
                .iter()
                .enumerate()
                .map(|(v, x)| residual_with(&bases[v], &coefficients, v, x.view()))
                .collect();
            let current = coefficients.block(block).clone();
            let grad = grad_coef_data_terms(bases, &residuals, hp.beta, block, current.dim());
            let id = BlockId::Coef(block);
            let (accepted, outcome) = backtrack(
                &current,
                &grad,
                true,
                policy.start_step(id),
                policy.shrink,
                policy.max_backtracks,
                f,
                |cand| {
                    let mut swap = cand.clone();
                    std::mem::swap(coefficients.block_mut(block), &mut swap);
                    let value = fold_in_objective(bases, &coefficients, new_views, hp.beta);
                    std::mem::swap(coefficients.block_mut(block), &mut swap);
                    value
                },
            );
            if let (Some((cand, f_new)), StepOutcome::Descent { step, backtracks }) =
                (accepted, outcome)
            {
                policy.record(id, step, backtracks);
                *coefficients.block_mut(block) = cand;
                f = f_new;
                progressed = true;
            }
        }
        if relative_change(prev, f) < hp.rel_tol {
            status = FitStatus::Converged;
            break;
        }
        if !progressed {
            status = FitStatus::Stalled;
            break;
        }
    }
    Ok(FoldIn {
        coefficients,
        iterations,
        objective: f,
        status,
    })
}
