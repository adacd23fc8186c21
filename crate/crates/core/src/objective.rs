//! Objective terms, softmax predictor and analytic gradients.
//!
//! The objective minimized by the solver is
//!
//! ```text
//! f = Σ_v ‖R(v)‖²_F + α Σ_v ‖W_D(v)ᵀ W_D(v)‖₁,₁ + β ‖H_D‖₁,₁ + γ Σ_v L(v)
//! ```
//!
//! with `R(v)` the reconstruction residual of view `v`, `W_D(v) = [W_CD(v) W_SD(v)]`,
//! `H_D = [H_CD H_SD(1) … H_SD(n_v)]`, and `L(v)` the label loss of view `v`
//! over labeled instances: cross-entropy of `softmax(B_CD H_CDᵀ + B_SD(v) H_SD(v)ᵀ)`
//! or, in squared-error mode, `‖(Y − B_CD H_CDᵀ − B_SD(v) H_SD(v)ᵀ) M‖²_F`.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::linalg::frobenius_sq;
use crate::model::{
    BlockKind, CoefBlock, Coefficients, FactorModel, Hyperparams, LossMode, MultiViewDataset,
    ProjBlock, Projection, ViewBases,
};

/// Probabilities are floored at this value before taking the log.
pub const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub reconstruction: f64,
    pub orthogonality: f64,
    pub sparsity: f64,
    pub label_loss: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    pub fn new(
        reconstruction: f64,
        orthogonality: f64,
        sparsity: f64,
        label_loss: f64,
        hp: &Hyperparams,
    ) -> Self {
        Self {
            reconstruction,
            orthogonality,
            sparsity,
            label_loss,
            total: reconstruction
                + hp.alpha * orthogonality
                + hp.beta * sparsity
                + hp.gamma * label_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxOutput {
    /// `c × n` logits.
    pub logits: Array2<f64>,
    /// `c × n` column-stochastic probabilities.
    pub probs: Array2<f64>,
}

fn check_view(model: &FactorModel, dataset: &MultiViewDataset, v: usize) -> Result<()> {
    if v >= dataset.num_views() || v >= model.num_views() {
        return Err(Error::DimensionMismatch(format!(
            "view {v} out of range (model has {}, dataset has {})",
            model.num_views(),
            dataset.num_views()
        )));
    }
    let x = dataset.view(v);
    if model.bases[v].num_features() != x.nrows() || model.num_instances() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "view {v}: model is {}x{}, data is {}x{}",
            model.bases[v].num_features(),
            model.num_instances(),
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

/// `X − Σ_blocks W Hᵀ` for one view given explicit bases and coefficients.
pub fn residual_with(
    bases: &ViewBases,
    coefficients: &Coefficients,
    v: usize,
    x: ArrayView2<f64>,
) -> Array2<f64> {
    let mut r = x.to_owned();
    for kind in BlockKind::ALL {
        let w = bases.block(kind);
        if w.ncols() == 0 {
            continue;
        }
        let h = coefficients.for_view(v, kind);
        ndarray::linalg::general_mat_mul(-1.0, w, &h.t(), 1.0, &mut r);
    }
    r
}

/// `Σ_blocks W Hᵀ` for one view, an `m_v × n` matrix.
pub fn reconstruct_with(bases: &ViewBases, coefficients: &Coefficients, v: usize) -> Array2<f64> {
    let zeros = Array2::zeros((bases.num_features(), coefficients.num_instances()));
    -residual_with(bases, coefficients, v, zeros.view())
}

/// Reconstruction residual `R(v) = X(v) − W_CD H_CDᵀ − W_CN H_CNᵀ − W_SD H_SDᵀ − W_SN H_SNᵀ`.
pub fn residual(model: &FactorModel, dataset: &MultiViewDataset, v: usize) -> Result<Array2<f64>> {
    check_view(model, dataset, v)?;
    Ok(residual_with(
        &model.bases[v],
        &model.coefficients,
        v,
        dataset.view(v).view(),
    ))
}

/// `B_CD H_CDᵀ + B_SD(v) H_SD(v)ᵀ`, a `c × n` matrix.
pub fn logits_with(projection: &Projection, coefficients: &Coefficients, v: usize) -> Array2<f64> {
    projection.b_cd.dot(&coefficients.h_cd.t()) + projection.b_sd[v].dot(&coefficients.h_sd[v].t())
}

pub fn softmax_logits(model: &FactorModel, v: usize) -> Array2<f64> {
    logits_with(&model.projection, &model.coefficients, v)
}

/// Column-wise softmax, stabilized by subtracting each column's maximum.
pub fn softmax_columns(z: ArrayView2<f64>) -> Array2<f64> {
    let mut p = z.to_owned();
    for mut col in p.axis_iter_mut(Axis(1)) {
        let max = col.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        col.mapv_inplace(|x| (x - max).exp());
        let sum = col.sum();
        col.mapv_inplace(|x| x / sum);
    }
    p
}

pub fn softmax_output(model: &FactorModel, v: usize) -> SoftmaxOutput {
    let logits = softmax_logits(model, v);
    let probs = softmax_columns(logits.view());
    SoftmaxOutput { logits, probs }
}

/// `−Σ_{labeled j} ln p[y_j, j]`; unlabeled columns are skipped.
pub fn cross_entropy(probs: ArrayView2<f64>, labels: &[Option<usize>]) -> f64 {
    labels
        .iter()
        .enumerate()
        .filter_map(|(j, l)| l.map(|c| -probs[[c, j]].max(PROB_FLOOR).ln()))
        .sum()
}

/// Squared error `Σ_{labeled j} ‖y_j − z_j‖²`.
pub fn squared_label_error(logits: ArrayView2<f64>, labels: &[Option<usize>]) -> f64 {
    labels
        .iter()
        .enumerate()
        .filter_map(|(j, l)| {
            l.map(|class| {
                logits
                    .column(j)
                    .iter()
                    .enumerate()
                    .map(|(i, z)| {
                        let y = if i == class { 1.0 } else { 0.0 };
                        (y - z) * (y - z)
                    })
                    .sum::<f64>()
            })
        })
        .sum()
}

/// Row sums of `[W_CD W_SD]`, the vector `s` with `‖W_Dᵀ W_D‖₁,₁ = ‖s‖²`.
pub fn discriminative_row_sums(bases: &ViewBases) -> ndarray::Array1<f64> {
    bases.w_cd.sum_axis(Axis(1)) + bases.w_sd.sum_axis(Axis(1))
}

/// `‖W_D(v)ᵀ W_D(v)‖₁,₁` for non-negative `W_D(v) = [W_CD(v) W_SD(v)]`,
/// evaluated as the squared norm of its row sums.
pub fn orthogonality_penalty(model: &FactorModel, v: usize) -> f64 {
    let s = discriminative_row_sums(&model.bases[v]);
    s.dot(&s)
}

pub fn sparsity_with(coefficients: &Coefficients) -> f64 {
    coefficients.h_cd.sum() + coefficients.h_sd.iter().map(|h| h.sum()).sum::<f64>()
}

/// Entry sum of `H_CD` and every `H_SD(v)`; the L1,1 norm for non-negative blocks.
pub fn sparsity_penalty(model: &FactorModel) -> f64 {
    sparsity_with(&model.coefficients)
}

/// Zeroes the columns of unlabeled instances.
fn mask_columns(mut m: Array2<f64>, labels: &[Option<usize>]) -> Array2<f64> {
    for (j, l) in labels.iter().enumerate() {
        if l.is_none() {
            m.column_mut(j).fill(0.0);
        }
    }
    m
}

/// `Q(v) = softmax(B_CD H_CDᵀ + B_SD(v) H_SD(v)ᵀ) − Y` on labeled columns,
/// zero on unlabeled ones.
pub fn q_matrix(model: &FactorModel, dataset: &MultiViewDataset, v: usize) -> Array2<f64> {
    let p = softmax_columns(softmax_logits(model, v).view());
    mask_columns(p - dataset.label_matrix(), dataset.labels())
}

/// Derivative of the unweighted label loss of view `v` with respect to its
/// logits: `Q(v)` for cross-entropy, `2 (Z − Y) M` for squared error.
pub fn label_logit_grad(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    v: usize,
    mode: LossMode,
) -> Array2<f64> {
    match mode {
        LossMode::CrossEntropy => q_matrix(model, dataset, v),
        LossMode::SquaredError => {
            let z = softmax_logits(model, v);
            mask_columns((z - dataset.label_matrix()) * 2.0, dataset.labels())
        }
    }
}

/// Unweighted label loss summed over views.
pub fn label_loss(model: &FactorModel, dataset: &MultiViewDataset, mode: LossMode) -> f64 {
    (0..model.num_views())
        .map(|v| {
            let z = softmax_logits(model, v);
            match mode {
                LossMode::CrossEntropy => {
                    cross_entropy(softmax_columns(z.view()).view(), dataset.labels())
                }
                LossMode::SquaredError => squared_label_error(z.view(), dataset.labels()),
            }
        })
        .sum()
}

/// Every objective term of the model on `dataset`.
pub fn total_objective(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
) -> ObjectiveBreakdown {
    let nv = model.num_views();
    let reconstruction = (0..nv)
        .map(|v| {
            frobenius_sq(
                residual_with(
                    &model.bases[v],
                    &model.coefficients,
                    v,
                    dataset.view(v).view(),
                )
                .view(),
            )
        })
        .sum();
    let orthogonality = (0..nv).map(|v| orthogonality_penalty(model, v)).sum();
    let sparsity = sparsity_penalty(model);
    let label = label_loss(model, dataset, hp.loss_mode);
    ObjectiveBreakdown::new(reconstruction, orthogonality, sparsity, label, hp)
}

/// Gradient of the γ-weighted label term with respect to a coefficient block.
///
/// For `H_CD` this is `γ Σ_v G(v)ᵀ B_CD`, for `H_SD(v)` it is `γ G(v)ᵀ B_SD(v)`,
/// where `G(v)` is [`label_logit_grad`]. Non-discriminative blocks get zeros.
pub fn label_grad_h(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    block: CoefBlock,
) -> Array2<f64> {
    label_grad_h_mode(model, dataset, hp.gamma, hp.loss_mode, block)
}

fn label_grad_h_mode(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    gamma: f64,
    mode: LossMode,
    block: CoefBlock,
) -> Array2<f64> {
    let shape = model.coefficients.block(block).dim();
    if gamma == 0.0 || shape.1 == 0 {
        return Array2::zeros(shape);
    }
    match block {
        CoefBlock::Cd => {
            let mut g = Array2::zeros(shape);
            for v in 0..model.num_views() {
                let q = label_logit_grad(model, dataset, v, mode);
                ndarray::linalg::general_mat_mul(
                    gamma,
                    &q.t(),
                    &model.projection.b_cd,
                    1.0,
                    &mut g,
                );
            }
            g
        }
        CoefBlock::Sd(v) => {
            let q = label_logit_grad(model, dataset, v, mode);
            q.t().dot(&model.projection.b_sd[v]) * gamma
        }
        CoefBlock::Cn | CoefBlock::Sn(_) => Array2::zeros(shape),
    }
}

/// Cross-entropy part of the coefficient gradient, `γ Σ_v Q(v)ᵀ B_CD` or
/// `γ Q(v)ᵀ B_SD(v)`.
pub fn ce_grad_h_block(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    gamma: f64,
    block: CoefBlock,
) -> Array2<f64> {
    label_grad_h_mode(model, dataset, gamma, LossMode::CrossEntropy, block)
}

/// Gradient of the full objective with respect to the basis block `kind` of view `v`:
/// `−2 R(v) H + 2α s 1ᵀ` for discriminative blocks, `−2 R(v) H` otherwise.
pub fn grad_basis(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    v: usize,
    kind: BlockKind,
) -> Array2<f64> {
    let r = residual_with(
        &model.bases[v],
        &model.coefficients,
        v,
        dataset.view(v).view(),
    );
    let h = model.coefficients.for_view(v, kind);
    let mut g = r.dot(h) * -2.0;
    if kind.is_discriminative() && hp.alpha != 0.0 {
        let s = discriminative_row_sums(&model.bases[v]) * (2.0 * hp.alpha);
        for mut col in g.axis_iter_mut(Axis(1)) {
            col += &s;
        }
    }
    g
}

/// Reconstruction-plus-sparsity gradient of a coefficient block given
/// precomputed residuals. Shared blocks sum over views.
pub(crate) fn grad_coef_data_terms(
    bases: &[ViewBases],
    residuals: &[Array2<f64>],
    beta: f64,
    block: CoefBlock,
    shape: (usize, usize),
) -> Array2<f64> {
    let mut g = Array2::zeros(shape);
    if shape.1 == 0 {
        return g;
    }
    let views: Vec<usize> = match block {
        CoefBlock::Cd | CoefBlock::Cn => (0..bases.len()).collect(),
        CoefBlock::Sd(v) | CoefBlock::Sn(v) => vec![v],
    };
    let kind = block.kind();
    for v in views {
        ndarray::linalg::general_mat_mul(
            -2.0,
            &residuals[v].t(),
            bases[v].block(kind),
            1.0,
            &mut g,
        );
    }
    if kind.is_discriminative() && beta != 0.0 {
        g.mapv_inplace(|x| x + beta);
    }
    g
}

/// Gradient of the full objective with respect to a coefficient block.
pub fn grad_coef(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    block: CoefBlock,
) -> Array2<f64> {
    let residuals: Vec<Array2<f64>> = (0..model.num_views())
        .map(|v| {
            residual_with(
                &model.bases[v],
                &model.coefficients,
                v,
                dataset.view(v).view(),
            )
        })
        .collect();
    let shape = model.coefficients.block(block).dim();
    let mut g = grad_coef_data_terms(&model.bases, &residuals, hp.beta, block, shape);
    if block.kind().is_discriminative() {
        g += &label_grad_h(model, dataset, hp, block);
    }
    g
}

/// Gradient of the full objective with respect to a projection block:
/// `γ Σ_v G(v) H_CD` for `B_CD`, `γ G(v) H_SD(v)` for `B_SD(v)`.
pub fn grad_proj(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    block: ProjBlock,
) -> Array2<f64> {
    let shape = model.projection.block(block).dim();
    if hp.gamma == 0.0 || shape.1 == 0 {
        return Array2::zeros(shape);
    }
    let g = match block {
        ProjBlock::Cd => {
            let mut g = Array2::zeros(shape);
            for v in 0..model.num_views() {
                let q = label_logit_grad(model, dataset, v, hp.loss_mode);
                g += &q.dot(&model.coefficients.h_cd);
            }
            g
        }
        ProjBlock::Sd(v) => {
            label_logit_grad(model, dataset, v, hp.loss_mode).dot(&model.coefficients.h_sd[v])
        }
    };
    g * hp.gamma
}

/// `true` when every column of `p` sums to one within `tol`.
pub fn is_column_stochastic(p: ArrayView2<f64>, tol: f64) -> bool {
    p.axis_iter(Axis(1))
        .all(|col| (col.sum() - 1.0).abs() <= tol)
        && p.iter().all(|&x| (0.0..=1.0).contains(&x))
}

/// Adds `delta[j]` to every entry of column `j`.
pub fn shift_columns(z: ArrayView2<f64>, delta: &[f64]) -> Array2<f64> {
    let mut out = z.to_owned();
    Zip::from(out.axis_iter_mut(Axis(1)))
        .and(delta)
        .for_each(|mut col, &d| col += d);
    out
}
