//! Projected block coordinate descent.
//!
//! Every W and H block takes a projected gradient step `[X − η ∇f]₊` whose
//! step size is found by backtracking until the total objective does not
//! increase. Projection blocks first try the closed-form ridge solution and
//! fall back to an unprojected gradient step when the closed form would raise
//! the objective. The objective is therefore non-increasing block by block.

use std::collections::HashMap;

use log::{debug, info};
use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg::ridge_right;
use crate::model::{
    init_model, BlockId, BlockKind, CoefBlock, FactorModel, FitInfo, FitStatus, Hyperparams,
    MultiViewDataset, ProjBlock,
};
use crate::objective::{grad_basis, grad_coef, grad_proj, total_objective, ObjectiveBreakdown};

/// Backtracking step-size control with a per-block warm start.
#[derive(Debug, Clone)]
pub struct StepPolicy {
    pub initial_step: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    last_accepted: HashMap<BlockId, f64>,
}

impl StepPolicy {
    pub fn new(initial_step: f64, shrink: f64, max_backtracks: usize) -> Self {
        Self {
            initial_step,
            shrink,
            max_backtracks,
            last_accepted: HashMap::new(),
        }
    }

    pub fn from_hyperparams(hp: &Hyperparams) -> Self {
        Self::new(hp.initial_step, hp.step_shrink, hp.max_backtracks)
    }

    /// First trial step for `id`: the last accepted step, or the initial one.
    pub fn start_step(&self, id: BlockId) -> f64 {
        self.last_accepted
            .get(&id)
            .copied()
            .unwrap_or(self.initial_step)
    }

    pub fn last_accepted(&self, id: BlockId) -> Option<f64> {
        self.last_accepted.get(&id).copied()
    }

    pub(crate) fn record(&mut self, id: BlockId, step: f64, backtracks: usize) {
        // A step accepted on the first trial is allowed to grow next time.
        let next = if backtracks == 0 {
            step / self.shrink
        } else {
            step
        };
        self.last_accepted.insert(id, next);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// A step of size `step` was accepted after `backtracks` shrinks.
    Descent { step: f64, backtracks: usize },
    /// The closed-form projection solve was accepted.
    ClosedForm,
    /// The projected gradient vanishes; the block is left unchanged.
    Stationary,
    /// No trial step kept the objective from increasing; block unchanged.
    Failed { backtracks: usize },
}

impl StepOutcome {
    pub fn made_progress(&self) -> bool {
        matches!(self, StepOutcome::Descent { .. } | StepOutcome::ClosedForm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockStep {
    pub outcome: StepOutcome,
    /// Total objective after the update.
    pub objective: f64,
}

/// Searches `[x − η g]₊` (or `x − η g` when `project` is false) for the
/// first `η = start · shrink^t` whose objective does not exceed `f_old`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backtrack(
    current: &Array2<f64>,
    grad: &Array2<f64>,
    project: bool,
    start: f64,
    shrink: f64,
    max_backtracks: usize,
    f_old: f64,
    mut eval: impl FnMut(&Array2<f64>) -> f64,
) -> (Option<(Array2<f64>, f64)>, StepOutcome) {
    let stationary = if project {
        current
            .iter()
            .zip(grad.iter())
            .all(|(&x, &g)| g == 0.0 || (x <= 0.0 && g > 0.0))
    } else {
        grad.iter().all(|&g| g == 0.0)
    };
    if stationary {
        return (None, StepOutcome::Stationary);
    }
    let mut step = start;
    for t in 0..=max_backtracks {
        let mut cand = current - &(grad * step);
        if project {
            cand.mapv_inplace(|x| x.max(0.0));
        }
        if cand == *current {
            // the step is too small to move any entry
            return (None, StepOutcome::Failed { backtracks: t });
        }
        let f_new = eval(&cand);
        if f_new.is_finite() && f_new <= f_old {
            return (
                Some((cand, f_new)),
                StepOutcome::Descent {
                    step,
                    backtracks: t,
                },
            );
        }
        step *= shrink;
    }
    (
        None,
        StepOutcome::Failed {
            backtracks: max_backtracks,
        },
    )
}

/// Objective of `model` with `candidate` temporarily substituted for block `id`.
fn objective_with(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    id: BlockId,
    candidate: &Array2<f64>,
) -> f64 {
    let mut swap = candidate.clone();
    std::mem::swap(model.block_mut(id), &mut swap);
    let f = total_objective(model, dataset, hp).total;
    std::mem::swap(model.block_mut(id), &mut swap);
    f
}

fn gradient_step(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    id: BlockId,
    grad: Array2<f64>,
    policy: &mut StepPolicy,
    f_old: f64,
) -> BlockStep {
    let project = !matches!(id, BlockId::Proj(_));
    let current = model.block(id).clone();
    let (accepted, outcome) = backtrack(
        &current,
        &grad,
        project,
        policy.start_step(id),
        policy.shrink,
        policy.max_backtracks,
        f_old,
        |cand| objective_with(model, dataset, hp, id, cand),
    );
    match accepted {
        Some((cand, f_new)) => {
            if let StepOutcome::Descent { step, backtracks } = outcome {
                policy.record(id, step, backtracks);
            }
            *model.block_mut(id) = cand;
            BlockStep {
                outcome,
                objective: f_new,
            }
        }
        None => BlockStep {
            outcome,
            objective: f_old,
        },
    }
}

fn ensure_block_step_possible(model: &FactorModel, dataset: &MultiViewDataset) -> Result<()> {
    if model.num_views() != dataset.num_views() || model.num_instances() != dataset.num_instances()
    {
        return Err(Error::DimensionMismatch(format!(
            "model has {} views x {} instances, dataset has {} x {}",
            model.num_views(),
            model.num_instances(),
            dataset.num_views(),
            dataset.num_instances()
        )));
    }
    Ok(())
}

/// One projected-gradient update of basis block `kind` in view `v`.
pub fn update_basis_block(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    v: usize,
    kind: BlockKind,
    policy: &mut StepPolicy,
) -> Result<BlockStep> {
    ensure_block_step_possible(model, dataset)?;
    let f_old = total_objective(model, dataset, hp).total;
    Ok(basis_step(model, dataset, hp, v, kind, policy, f_old))
}

fn basis_step(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    v: usize,
    kind: BlockKind,
    policy: &mut StepPolicy,
    f_old: f64,
) -> BlockStep {
    let grad = grad_basis(model, dataset, hp, v, kind);
    gradient_step(
        model,
        dataset,
        hp,
        BlockId::Basis { view: v, kind },
        grad,
        policy,
        f_old,
    )
}

/// One projected-gradient update of a coefficient block.
pub fn update_coefficient_block(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    block: CoefBlock,
    policy: &mut StepPolicy,
) -> Result<BlockStep> {
    ensure_block_step_possible(model, dataset)?;
    let f_old = total_objective(model, dataset, hp).total;
    Ok(coef_step(model, dataset, hp, block, policy, f_old))
}

fn coef_step(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    block: CoefBlock,
    policy: &mut StepPolicy,
    f_old: f64,
) -> BlockStep {
    let grad = grad_coef(model, dataset, hp, block);
    gradient_step(
        model,
        dataset,
        hp,
        BlockId::Coef(block),
        grad,
        policy,
        f_old,
    )
}

/// Labeled-column restriction of a coefficient block (`n_lab × k`).
fn labeled_rows(h: &Array2<f64>, labeled: &[usize]) -> Array2<f64> {
    h.select(Axis(0), labeled)
}

fn labeled_targets(dataset: &MultiViewDataset, labeled: &[usize]) -> Array2<f64> {
    dataset.label_matrix().select(Axis(1), labeled)
}

fn require_labels(dataset: &MultiViewDataset) -> Result<Vec<usize>> {
    let labeled = dataset.labeled_indices();
    if labeled.is_empty() {
        return Err(Error::InvalidData(
            "projection solves need at least one labeled instance".into(),
        ));
    }
    Ok(labeled)
}

/// Closed-form common projection over labeled columns:
/// `B_CD = (1/n_v) Σ_v (Y − B_SD(v) H_SD(v)ᵀ) H_CD (H_CDᵀ H_CD + λI)⁻¹`.
pub fn solve_b_cd(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
) -> Result<Array2<f64>> {
    let c = model.num_classes;
    let k1 = model.coefficients.h_cd.ncols();
    if k1 == 0 {
        return Ok(Array2::zeros((c, 0)));
    }
    let labeled = require_labels(dataset)?;
    let y = labeled_targets(dataset, &labeled);
    let nv = model.num_views();
    let mut target = Array2::<f64>::zeros(y.dim());
    for v in 0..nv {
        let h_sd = labeled_rows(&model.coefficients.h_sd[v], &labeled);
        target += &(&y - &model.projection.b_sd[v].dot(&h_sd.t()));
    }
    target /= nv as f64;
    let h_cd = labeled_rows(&model.coefficients.h_cd, &labeled);
    ridge_right(target.view(), h_cd.view(), hp.lambda_ridge)
}

/// Closed-form view-specific projection over labeled columns:
/// `B_SD(v) = (Y − B_CD H_CDᵀ) H_SD(v) (H_SD(v)ᵀ H_SD(v) + λI)⁻¹`.
pub fn solve_b_sd(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    v: usize,
    hp: &Hyperparams,
) -> Result<Array2<f64>> {
    let c = model.num_classes;
    let k3 = model.coefficients.h_sd[v].ncols();
    if k3 == 0 {
        return Ok(Array2::zeros((c, 0)));
    }
    let labeled = require_labels(dataset)?;
    let y = labeled_targets(dataset, &labeled);
    let h_cd = labeled_rows(&model.coefficients.h_cd, &labeled);
    let target = &y - &model.projection.b_cd.dot(&h_cd.t());
    let h_sd = labeled_rows(&model.coefficients.h_sd[v], &labeled);
    ridge_right(target.view(), h_sd.view(), hp.lambda_ridge)
}

/// Updates a projection block: the closed form is kept when it does not raise
/// the objective, otherwise a backtracked gradient step is taken.
pub fn update_projection_block(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    block: ProjBlock,
    policy: &mut StepPolicy,
) -> Result<BlockStep> {
    ensure_block_step_possible(model, dataset)?;
    let f_old = total_objective(model, dataset, hp).total;
    proj_step(model, dataset, hp, block, policy, f_old)
}

fn proj_step(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
    block: ProjBlock,
    policy: &mut StepPolicy,
    f_old: f64,
) -> Result<BlockStep> {
    let closed = match block {
        ProjBlock::Cd => solve_b_cd(model, dataset, hp)?,
        ProjBlock::Sd(v) => solve_b_sd(model, dataset, v, hp)?,
    };
    let id = BlockId::Proj(block);
    let f_closed = objective_with(model, dataset, hp, id, &closed);
    if f_closed.is_finite() && f_closed <= f_old {
        *model.block_mut(id) = closed;
        return Ok(BlockStep {
            outcome: StepOutcome::ClosedForm,
            objective: f_closed,
        });
    }
    let grad = grad_proj(model, dataset, hp, block);
    Ok(gradient_step(model, dataset, hp, id, grad, policy, f_old))
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub objective: ObjectiveBreakdown,
    /// Smallest and largest accepted gradient step this iteration (0 if none).
    pub min_step: f64,
    pub max_step: f64,
    pub backtracks: usize,
    pub failed_blocks: usize,
    pub closed_form_accepted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    /// Objective of the initial model, before the first iteration.
    pub initial: ObjectiveBreakdown,
    pub records: Vec<IterationRecord>,
    pub status: FitStatus,
}

impl SolverTrace {
    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective.total).collect()
    }

    /// Relative objective change at each iteration, against the previous one
    /// (the initial objective for iteration 1).
    pub fn relative_changes(&self) -> Vec<f64> {
        let mut prev = self.initial.total;
        self.records
            .iter()
            .map(|r| {
                let change = relative_change(prev, r.objective.total);
                prev = r.objective.total;
                change
            })
            .collect()
    }

    /// First iteration whose relative change falls below `tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.relative_changes()
            .iter()
            .position(|&c| c < tol)
            .map(|i| self.records[i].iteration)
    }

    /// True if no total increases by more than `rel_slack` relative, starting
    /// from the initial objective.
    pub fn is_monotone(&self, rel_slack: f64) -> bool {
        let mut prev = self.initial.total;
        self.records.iter().all(|r| {
            let ok = r.objective.total <= prev + rel_slack * prev.abs();
            prev = r.objective.total;
            ok
        })
    }

    pub fn final_objective(&self) -> ObjectiveBreakdown {
        self.records.last().map_or(self.initial, |r| r.objective)
    }
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

struct IterationStats {
    min_step: f64,
    max_step: f64,
    backtracks: usize,
    failed: usize,
    closed_form: usize,
    progressed: usize,
}

impl IterationStats {
    fn new() -> Self {
        Self {
            min_step: f64::INFINITY,
            max_step: 0.0,
            backtracks: 0,
            failed: 0,
            closed_form: 0,
            progressed: 0,
        }
    }

    fn absorb(&mut self, step: &BlockStep) {
        match step.outcome {
            StepOutcome::Descent { step, backtracks } => {
                self.min_step = self.min_step.min(step);
                self.max_step = self.max_step.max(step);
                self.backtracks += backtracks;
                self.progressed += 1;
            }
            StepOutcome::ClosedForm => {
                self.closed_form += 1;
                self.progressed += 1;
            }
            StepOutcome::Stationary => {}
            StepOutcome::Failed { backtracks } => {
                self.backtracks += backtracks;
                self.failed += 1;
            }
        }
    }
}

/// Initializes a model and runs [`fit_from`].
pub fn fit(dataset: &MultiViewDataset, hp: &Hyperparams) -> Result<(FactorModel, SolverTrace)> {
    let mut model = init_model(dataset, hp)?;
    let trace = fit_from(&mut model, dataset, hp)?;
    Ok((model, trace))
}

/// Runs block coordinate descent on `model` in place.
///
/// Update order per iteration: `W_CD(v)`, `W_CN(v)`, `W_SD(v)`, `W_SN(v)` for
/// all views, then `H_CD`, `H_CN`, `H_SD(v)`, `H_SN(v)`, then `B_CD` and
/// `B_SD(v)`. Stops when the relative objective change drops below
/// `hp.rel_tol`, after `hp.max_iters` iterations, or when no block makes
/// progress in a whole iteration.
pub fn fit_from(
    model: &mut FactorModel,
    dataset: &MultiViewDataset,
    hp: &Hyperparams,
) -> Result<SolverTrace> {
    hp.validate()?;
    if hp.gamma > 0.0 {
        dataset.check_labels_cover_classes()?;
    }
    let violations = crate::model::validate(model, dataset);
    if let Some(first) = violations.first() {
        return Err(Error::InvalidData(format!(
            "initial model is invalid ({} violations, first: {first})",
            violations.len()
        )));
    }

    let nv = model.num_views();
    let dims = model.dims();
    let mut basis_ids = Vec::new();
    for kind in BlockKind::ALL {
        if dims.width(kind) > 0 {
            basis_ids.extend((0..nv).map(|v| (v, kind)));
        }
    }
    let coef_ids: Vec<CoefBlock> = model
        .coefficients
        .block_ids()
        .into_iter()
        .filter(|b| dims.width(b.kind()) > 0)
        .collect();
    let mut proj_ids = Vec::new();
    if dataset.num_labeled() > 0 {
        if dims.k1 > 0 {
            proj_ids.push(ProjBlock::Cd);
        }
        if dims.k3 > 0 {
            proj_ids.extend((0..nv).map(ProjBlock::Sd));
        }
    }

    let mut policy = StepPolicy::from_hyperparams(hp);
    let initial = total_objective(model, dataset, hp);
    let mut f = initial.total;
    let mut records = Vec::new();
    let mut status = FitStatus::MaxIters;

    for iteration in 1..=hp.max_iters {
        let mut stats = IterationStats::new();
        for &(v, kind) in &basis_ids {
            let step = basis_step(model, dataset, hp, v, kind, &mut policy, f);
            f = step.objective;
            stats.absorb(&step);
        }
        for &block in &coef_ids {
            let step = coef_step(model, dataset, hp, block, &mut policy, f);
            f = step.objective;
            stats.absorb(&step);
        }
        for &block in &proj_ids {
            let step = proj_step(model, dataset, hp, block, &mut policy, f)?;
            f = step.objective;
            stats.absorb(&step);
        }

        let objective = total_objective(model, dataset, hp);
        let prev = records
            .last()
            .map_or(initial.total, |r: &IterationRecord| r.objective.total);
        info!("iteration {iteration}: objective {:.10e}", objective.total);
        debug!(
            "iteration {iteration}: steps [{:.3e}, {:.3e}], backtracks {}, failed {}",
            stats.min_step, stats.max_step, stats.backtracks, stats.failed
        );
        records.push(IterationRecord {
            iteration,
            objective,
            min_step: if stats.min_step.is_finite() {
                stats.min_step
            } else {
                0.0
            },
            max_step: stats.max_step,
            backtracks: stats.backtracks,
            failed_blocks: stats.failed,
            closed_form_accepted: stats.closed_form,
        });
        if relative_change(prev, objective.total) < hp.rel_tol {
            status = FitStatus::Converged;
            break;
        }
        if stats.progressed == 0 {
            status = FitStatus::Stalled;
            break;
        }
    }

    let trace = SolverTrace {
        initial,
        records,
        status,
    };
    model.hyperparams = Some(hp.clone());
    model.fit_info = Some(FitInfo {
        iterations: trace.records.len(),
        final_objective: trace.final_objective().total,
        status,
    });
    Ok(trace)
}
