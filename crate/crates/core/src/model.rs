//! Domain types: multi-view datasets, the four-part block layout of the
//! factorization, hyperparameters, and invariant checks.
//!
//! Each view `v` is stored as an `m_v × n` matrix (features × instances) and
//! approximated by
//!
//! ```text
//! X(v) ≈ W_CD(v) H_CDᵀ + W_CN(v) H_CNᵀ + W_SD(v) H_SD(v)ᵀ + W_SN(v) H_SN(v)ᵀ
//! ```
//!
//! Basis blocks are per view. The common coefficient blocks `H_CD`, `H_CN` and
//! the common projection `B_CD` are stored once and shared by every view,
//! which lets views have different feature dimensions.

use std::fmt;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label value used for unlabeled instances in external formats.
pub const UNLABELED: i64 = -1;

/// Non-negative multi-view data sharing one instance axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Array2<f64>>,
    labels: Vec<Option<usize>>,
    num_classes: usize,
}

impl MultiViewDataset {
    /// Builds a dataset from `m_v × n` view matrices. `None` marks an
    /// unlabeled instance.
    pub fn new(
        views: Vec<Array2<f64>>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidData("at least one view is required".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidData(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        let n = views[0].ncols();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no instances".into()));
        }
        for (v, x) in views.iter().enumerate() {
            if x.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "view {v} has {} instances, view 0 has {n}",
                    x.ncols()
                )));
            }
            if let Some(((r, c), &value)) = x
                .indexed_iter()
                .find(|(_, &value)| !value.is_finite() || value < 0.0)
            {
                return Err(Error::InvalidData(format!(
                    "view {v}, feature {r}, instance {c}: entry {value} is not a finite non-negative number"
                )));
            }
        }
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: n,
            });
        }
        if let Some((j, class)) = labels
            .iter()
            .enumerate()
            .find_map(|(j, l)| l.filter(|&c| c >= num_classes).map(|c| (j, c)))
        {
            return Err(Error::InvalidData(format!(
                "instance {j} has label {class}, outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            views,
            labels,
            num_classes,
        })
    }

    /// Same as [`MultiViewDataset::new`] but with labels in the external
    /// integer convention (`-1` is unlabeled).
    pub fn from_raw_labels(
        views: Vec<Array2<f64>>,
        raw_labels: &[i64],
        num_classes: usize,
    ) -> Result<Self> {
        let labels = raw_labels
            .iter()
            .enumerate()
            .map(|(j, &l)| match l {
                UNLABELED => Ok(None),
                l if l >= 0 => Ok(Some(l as usize)),
                l => Err(Error::InvalidData(format!(
                    "instance {j} has label {l}; only -1 marks unlabeled"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(views, labels, num_classes)
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Array2<f64> {
        &self.views[v]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// Labels in the external convention, `-1` for unlabeled.
    pub fn raw_labels(&self) -> Vec<i64> {
        self.labels
            .iter()
            .map(|l| l.map_or(UNLABELED, |c| c as i64))
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn num_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|x| x.nrows()).collect()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(j, l)| l.map(|_| j))
            .collect()
    }

    pub fn num_labeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// One-hot `c × n` label matrix; unlabeled columns are all zero.
    pub fn label_matrix(&self) -> Array2<f64> {
        let mut y = Array2::zeros((self.num_classes, self.num_instances()));
        for (j, label) in self.labels.iter().enumerate() {
            if let Some(c) = label {
                y[[*c, j]] = 1.0;
            }
        }
        y
    }

    /// Number of labeled instances per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for c in self.labels.iter().flatten() {
            counts[*c] += 1;
        }
        counts
    }

    /// Fails unless every class has at least one labeled instance.
    pub fn check_labels_cover_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&count| count == 0) {
            Some(class) => Err(Error::InvalidData(format!(
                "class {class} has no labeled instance"
            ))),
            None => Ok(()),
        }
    }

    /// Replaces the labels, keeping the views.
    pub fn with_labels(&self, labels: Vec<Option<usize>>) -> Result<Self> {
        Self::new(self.views.clone(), labels, self.num_classes)
    }

    /// Dataset restricted to the given instance columns, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&j) = indices.iter().find(|&&j| j >= self.num_instances()) {
            return Err(Error::DimensionMismatch(format!(
                "instance index {j} out of range for {} instances",
                self.num_instances()
            )));
        }
        let views = self
            .views
            .iter()
            .map(|x| x.select(ndarray::Axis(1), indices))
            .collect();
        let labels = indices.iter().map(|&j| self.labels[j]).collect();
        Self::new(views, labels, self.num_classes)
    }
}

/// The four factor groups of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    /// Common discriminative.
    Cd,
    /// Common non-discriminative.
    Cn,
    /// View-specific discriminative.
    Sd,
    /// View-specific non-discriminative.
    Sn,
}

impl BlockKind {
    pub const ALL: [BlockKind; 4] = [BlockKind::Cd, BlockKind::Cn, BlockKind::Sd, BlockKind::Sn];

    pub fn is_discriminative(self) -> bool {
        matches!(self, BlockKind::Cd | BlockKind::Sd)
    }

    pub fn is_common(self) -> bool {
        matches!(self, BlockKind::Cd | BlockKind::Cn)
    }

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Cd => "CD",
            BlockKind::Cn => "CN",
            BlockKind::Sd => "SD",
            BlockKind::Sn => "SN",
        }
    }
}

/// Latent factor counts per block group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    pub k4: usize,
}

impl BlockDims {
    pub fn new(k1: usize, k2: usize, k3: usize, k4: usize) -> Result<Self> {
        let dims = Self { k1, k2, k3, k4 };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 + self.k3 == 0 {
            return Err(Error::InvalidHyperparams(
                "at least one discriminative factor (k1 + k3 >= 1) is required".into(),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.k1 + self.k2 + self.k3 + self.k4
    }

    pub fn width(&self, kind: BlockKind) -> usize {
        match kind {
            BlockKind::Cd => self.k1,
            BlockKind::Cn => self.k2,
            BlockKind::Sd => self.k3,
            BlockKind::Sn => self.k4,
        }
    }
}

/// Which label loss supervises the discriminative blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    CrossEntropy,
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Weight of the discriminative-basis orthogonality penalty.
    pub alpha: f64,
    /// Weight of the L1 sparsity penalty on discriminative coefficients.
    pub beta: f64,
    /// Weight of the label loss.
    pub gamma: f64,
    /// Ridge term of the closed-form projection solves.
    pub lambda_ridge: f64,
    pub dims: BlockDims,
    pub loss_mode: LossMode,
    pub max_iters: usize,
    /// Stop once the relative objective change falls below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub initial_step: f64,
    pub step_shrink: f64,
    pub max_backtracks: usize,
}

impl Hyperparams {
    /// Defaults: α = β = 0.1, γ = 1, λ = 1e-6, cross-entropy loss,
    /// 300 iterations, tolerance 1e-5.
    pub fn new(dims: BlockDims) -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            gamma: 1.0,
            lambda_ridge: 1e-6,
            dims,
            loss_mode: LossMode::CrossEntropy,
            max_iters: 300,
            rel_tol: 1e-5,
            seed: 0,
            initial_step: 1.0,
            step_shrink: 0.5,
            max_backtracks: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let bad = |what: &str| Err(Error::InvalidHyperparams(what.to_string()));
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return bad(&format!("{name} must be finite and >= 0, got {value}"));
            }
        }
        if !(self.lambda_ridge > 0.0 && self.lambda_ridge.is_finite()) {
            return bad("lambda_ridge must be > 0");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return bad("rel_tol must be > 0");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step must be > 0");
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0, 1)");
        }
        if self.max_backtracks == 0 {
            return bad("max_backtracks must be >= 1");
        }
        Ok(())
    }
}

/// Basis blocks of one view, each `m_v × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBases {
    pub w_cd: Array2<f64>,
    pub w_cn: Array2<f64>,
    pub w_sd: Array2<f64>,
    pub w_sn: Array2<f64>,
}

impl ViewBases {
    pub fn block(&self, kind: BlockKind) -> &Array2<f64> {
        match kind {
            BlockKind::Cd => &self.w_cd,
            BlockKind::Cn => &self.w_cn,
            BlockKind::Sd => &self.w_sd,
            BlockKind::Sn => &self.w_sn,
        }
    }

    pub fn block_mut(&mut self, kind: BlockKind) -> &mut Array2<f64> {
        match kind {
            BlockKind::Cd => &mut self.w_cd,
            BlockKind::Cn => &mut self.w_cn,
            BlockKind::Sd => &mut self.w_sd,
            BlockKind::Sn => &mut self.w_sn,
        }
    }

    pub fn num_features(&self) -> usize {
        self.w_cd.nrows()
    }
}

/// Addresses one coefficient block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefBlock {
    Cd,
    Cn,
    Sd(usize),
    Sn(usize),
}

impl CoefBlock {
    pub fn kind(self) -> BlockKind {
        match self {
            CoefBlock::Cd => BlockKind::Cd,
            CoefBlock::Cn => BlockKind::Cn,
            CoefBlock::Sd(_) => BlockKind::Sd,
            CoefBlock::Sn(_) => BlockKind::Sn,
        }
    }
}

/// Coefficient blocks, each `n × k`. `h_cd` and `h_cn` are shared by all views.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub h_cd: Array2<f64>,
    pub h_cn: Array2<f64>,
    pub h_sd: Vec<Array2<f64>>,
    pub h_sn: Vec<Array2<f64>>,
}

impl Coefficients {
    pub fn num_instances(&self) -> usize {
        self.h_cd.nrows()
    }

    pub fn num_views(&self) -> usize {
        self.h_sd.len()
    }

    pub fn block(&self, id: CoefBlock) -> &Array2<f64> {
        match id {
            CoefBlock::Cd => &self.h_cd,
            CoefBlock::Cn => &self.h_cn,
            CoefBlock::Sd(v) => &self.h_sd[v],
            CoefBlock::Sn(v) => &self.h_sn[v],
        }
    }

    pub fn block_mut(&mut self, id: CoefBlock) -> &mut Array2<f64> {
        match id {
            CoefBlock::Cd => &mut self.h_cd,
            CoefBlock::Cn => &mut self.h_cn,
            CoefBlock::Sd(v) => &mut self.h_sd[v],
            CoefBlock::Sn(v) => &mut self.h_sn[v],
        }
    }

    /// The coefficient block that pairs with basis `kind` in view `v`.
    pub fn for_view(&self, v: usize, kind: BlockKind) -> &Array2<f64> {
        match kind {
            BlockKind::Cd => &self.h_cd,
            BlockKind::Cn => &self.h_cn,
            BlockKind::Sd => &self.h_sd[v],
            BlockKind::Sn => &self.h_sn[v],
        }
    }

    /// Every block id in update order: CD, CN, SD(v) for all v, SN(v) for all v.
    pub fn block_ids(&self) -> Vec<CoefBlock> {
        let nv = self.num_views();
        let mut ids = vec![CoefBlock::Cd, CoefBlock::Cn];
        ids.extend((0..nv).map(CoefBlock::Sd));
        ids.extend((0..nv).map(CoefBlock::Sn));
        ids
    }
}

/// Addresses one label projection block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjBlock {
    Cd,
    Sd(usize),
}

/// Label projections: `B_CD` (`c × k1`, shared) and `B_SD(v)` (`c × k3`).
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub b_cd: Array2<f64>,
    pub b_sd: Vec<Array2<f64>>,
}

impl Projection {
    pub fn block(&self, id: ProjBlock) -> &Array2<f64> {
        match id {
            ProjBlock::Cd => &self.b_cd,
            ProjBlock::Sd(v) => &self.b_sd[v],
        }
    }

    pub fn block_mut(&mut self, id: ProjBlock) -> &mut Array2<f64> {
        match id {
            ProjBlock::Cd => &mut self.b_cd,
            ProjBlock::Sd(v) => &mut self.b_sd[v],
        }
    }
}

/// Any block of a [`FactorModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockId {
    Basis { view: usize, kind: BlockKind },
    Coef(CoefBlock),
    Proj(ProjBlock),
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockId::Basis { view, kind } => write!(f, "W_{}({view})", kind.name()),
            BlockId::Coef(CoefBlock::Cd) => write!(f, "H_CD"),
            BlockId::Coef(CoefBlock::Cn) => write!(f, "H_CN"),
            BlockId::Coef(CoefBlock::Sd(v)) => write!(f, "H_SD({v})"),
            BlockId::Coef(CoefBlock::Sn(v)) => write!(f, "H_SN({v})"),
            BlockId::Proj(ProjBlock::Cd) => write!(f, "B_CD"),
            BlockId::Proj(ProjBlock::Sd(v)) => write!(f, "B_SD({v})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    /// Relative objective change fell below the tolerance.
    Converged,
    /// Iteration budget exhausted.
    MaxIters,
    /// No block could find a descent step during a whole iteration.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub iterations: usize,
    pub final_objective: f64,
    pub status: FitStatus,
}

/// All blocks of the four-part factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub bases: Vec<ViewBases>,
    pub coefficients: Coefficients,
    pub projection: Projection,
    pub num_classes: usize,
    /// Hyperparameters the model was fitted with, when known.
    pub hyperparams: Option<Hyperparams>,
    pub fit_info: Option<FitInfo>,
}

/// Read-only view of every block that participates in view `v`.
#[derive(Debug, Clone, Copy)]
pub struct ViewBlocks<'a> {
    pub w_cd: &'a Array2<f64>,
    pub w_cn: &'a Array2<f64>,
    pub w_sd: &'a Array2<f64>,
    pub w_sn: &'a Array2<f64>,
    pub h_cd: &'a Array2<f64>,
    pub h_cn: &'a Array2<f64>,
    pub h_sd: &'a Array2<f64>,
    pub h_sn: &'a Array2<f64>,
    pub b_cd: &'a Array2<f64>,
    pub b_sd: &'a Array2<f64>,
}

/// Mutable counterpart of [`ViewBlocks`]. Writes to shared blocks are seen by
/// every view.
#[derive(Debug)]
pub struct ViewBlocksMut<'a> {
    pub w_cd: ArrayViewMut2<'a, f64>,
    pub w_cn: ArrayViewMut2<'a, f64>,
    pub w_sd: ArrayViewMut2<'a, f64>,
    pub w_sn: ArrayViewMut2<'a, f64>,
    pub h_cd: ArrayViewMut2<'a, f64>,
    pub h_cn: ArrayViewMut2<'a, f64>,
    pub h_sd: ArrayViewMut2<'a, f64>,
    pub h_sn: ArrayViewMut2<'a, f64>,
    pub b_cd: ArrayViewMut2<'a, f64>,
    pub b_sd: ArrayViewMut2<'a, f64>,
}

impl FactorModel {
    /// All-zero model with the shapes implied by the arguments.
    pub fn zeros(view_dims: &[usize], n: usize, num_classes: usize, dims: BlockDims) -> Self {
        let bases = view_dims
            .iter()
            .map(|&m| ViewBases {
                w_cd: Array2::zeros((m, dims.k1)),
                w_cn: Array2::zeros((m, dims.k2)),
                w_sd: Array2::zeros((m, dims.k3)),
                w_sn: Array2::zeros((m, dims.k4)),
            })
            .collect();
        let nv = view_dims.len();
        Self {
            bases,
            coefficients: Coefficients::zeros(n, nv, dims),
            projection: Projection {
                b_cd: Array2::zeros((num_classes, dims.k1)),
                b_sd: vec![Array2::zeros((num_classes, dims.k3)); nv],
            },
            num_classes,
            hyperparams: None,
            fit_info: None,
        }
    }

    pub fn num_views(&self) -> usize {
        self.bases.len()
    }

    pub fn num_instances(&self) -> usize {
        self.coefficients.num_instances()
    }

    pub fn dims(&self) -> BlockDims {
        BlockDims {
            k1: self.coefficients.h_cd.ncols(),
            k2: self.coefficients.h_cn.ncols(),
            k3: self.projection.b_sd.first().map_or(0, |b| b.ncols()),
            k4: self.bases.first().map_or(0, |b| b.w_sn.ncols()),
        }
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.bases.iter().map(ViewBases::num_features).collect()
    }

    pub fn view(&self, v: usize) -> ViewBlocks<'_> {
        let w = &self.bases[v];
        let h = &self.coefficients;
        ViewBlocks {
            w_cd: &w.w_cd,
            w_cn: &w.w_cn,
            w_sd: &w.w_sd,
            w_sn: &w.w_sn,
            h_cd: &h.h_cd,
            h_cn: &h.h_cn,
            h_sd: &h.h_sd[v],
            h_sn: &h.h_sn[v],
            b_cd: &self.projection.b_cd,
            b_sd: &self.projection.b_sd[v],
        }
    }

    pub fn view_mut(&mut self, v: usize) -> ViewBlocksMut<'_> {
        let w = &mut self.bases[v];
        let h = &mut self.coefficients;
        let b = &mut self.projection;
        ViewBlocksMut {
            w_cd: w.w_cd.view_mut(),
            w_cn: w.w_cn.view_mut(),
            w_sd: w.w_sd.view_mut(),
            w_sn: w.w_sn.view_mut(),
            h_cd: h.h_cd.view_mut(),
            h_cn: h.h_cn.view_mut(),
            h_sd: h.h_sd[v].view_mut(),
            h_sn: h.h_sn[v].view_mut(),
            b_cd: b.b_cd.view_mut(),
            b_sd: b.b_sd[v].view_mut(),
        }
    }

    pub fn block(&self, id: BlockId) -> &Array2<f64> {
        match id {
            BlockId::Basis { view, kind } => self.bases[view].block(kind),
            BlockId::Coef(c) => self.coefficients.block(c),
            BlockId::Proj(p) => self.projection.block(p),
        }
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut Array2<f64> {
        match id {
            BlockId::Basis { view, kind } => self.bases[view].block_mut(kind),
            BlockId::Coef(c) => self.coefficients.block_mut(c),
            BlockId::Proj(p) => self.projection.block_mut(p),
        }
    }

    /// Every block id with its expected shape, for validation and persistence.
    pub fn block_ids(&self) -> Vec<BlockId> {
        let nv = self.num_views();
        let mut ids = Vec::new();
        for v in 0..nv {
            for kind in BlockKind::ALL {
                ids.push(BlockId::Basis { view: v, kind });
            }
        }
        ids.extend(self.coefficients.block_ids().into_iter().map(BlockId::Coef));
        ids.push(BlockId::Proj(ProjBlock::Cd));
        ids.extend((0..nv).map(|v| BlockId::Proj(ProjBlock::Sd(v))));
        ids
    }
}

impl Coefficients {
    pub fn zeros(n: usize, num_views: usize, dims: BlockDims) -> Self {
        Self {
            h_cd: Array2::zeros((n, dims.k1)),
            h_cn: Array2::zeros((n, dims.k2)),
            h_sd: vec![Array2::zeros((n, dims.k3)); num_views],
            h_sn: vec![Array2::zeros((n, dims.k4)); num_views],
        }
    }

    /// Strictly positive random coefficients: uniform on (0, 1] times `scale`.
    pub(crate) fn random(
        rng: &mut ChaCha8Rng,
        n: usize,
        num_views: usize,
        dims: BlockDims,
        common_scale: f64,
        view_scales: &[f64],
    ) -> Self {
        let h_cd = uniform_positive(rng, n, dims.k1, common_scale);
        let h_cn = uniform_positive(rng, n, dims.k2, common_scale);
        let h_sd = (0..num_views)
            .map(|v| uniform_positive(rng, n, dims.k3, view_scales[v]))
            .collect();
        let h_sn = (0..num_views)
            .map(|v| uniform_positive(rng, n, dims.k4, view_scales[v]))
            .collect();
        Self {
            h_cd,
            h_cn,
            h_sd,
            h_sn,
        }
    }
}

pub(crate) fn uniform_positive(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    scale: f64,
) -> Array2<f64> {
    // random::<f64>() is in [0, 1); flipping gives (0, 1].
    Array2::from_shape_simple_fn((rows, cols), || (1.0 - rng.random::<f64>()) * scale)
}

/// Smallest scale applied to random initial blocks.
pub const INIT_SCALE_FLOOR: f64 = 1e-8;

/// Per-view init scale `sqrt(mean(X(v)) / K)`, floored at [`INIT_SCALE_FLOOR`].
pub(crate) fn init_scales(views: &[Array2<f64>], total_factors: usize) -> Vec<f64> {
    views
        .iter()
        .map(|x| {
            let mean = x.mean().unwrap_or(0.0);
            (mean / total_factors as f64).sqrt().max(INIT_SCALE_FLOOR)
        })
        .collect()
}

/// Random strictly positive W/H blocks scaled to the data, zero B blocks.
///
/// Shared coefficient blocks use the mean of the per-view scales.
pub fn init_model(dataset: &MultiViewDataset, hp: &Hyperparams) -> Result<FactorModel> {
    hp.validate()?;
    let n = dataset.num_instances();
    if let Some(v) = dataset.views().iter().position(|x| x.ncols() != n) {
        return Err(Error::DimensionMismatch(format!(
            "view {v} has {} instances, expected {n}",
            dataset.view(v).ncols()
        )));
    }
    let dims = hp.dims;
    let scales = init_scales(dataset.views(), dims.total());
    let common_scale = scales.iter().sum::<f64>() / scales.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);

    let bases = dataset
        .view_dims()
        .iter()
        .zip(&scales)
        .map(|(&m, &s)| ViewBases {
            w_cd: uniform_positive(&mut rng, m, dims.k1, s),
            w_cn: uniform_positive(&mut rng, m, dims.k2, s),
            w_sd: uniform_positive(&mut rng, m, dims.k3, s),
            w_sn: uniform_positive(&mut rng, m, dims.k4, s),
        })
        .collect();
    let nv = dataset.num_views();
    let coefficients = Coefficients::random(&mut rng, n, nv, dims, common_scale, &scales);
    let c = dataset.num_classes();
    Ok(FactorModel {
        bases,
        coefficients,
        projection: Projection {
            b_cd: Array2::zeros((c, dims.k1)),
            b_sd: vec![Array2::zeros((c, dims.k3)); nv],
        },
        num_classes: c,
        hyperparams: Some(hp.clone()),
        fit_info: None,
    })
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    NonNegative,
    Finite,
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    ViewCount {
        expected: usize,
        found: usize,
    },
    ClassCount {
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Human-readable block name, e.g. `W_CD(0)`.
    pub block: String,
    /// `(row, col)` of the offending entry for entry-wise rules.
    pub index: Option<(usize, usize)>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.block)?;
        if let Some((r, c)) = self.index {
            write!(f, "[{r}, {c}]")?;
        }
        match &self.rule {
            Rule::NonNegative => write!(f, ": entry is negative"),
            Rule::Finite => write!(f, ": entry is not finite"),
            Rule::Shape { expected, found } => write!(
                f,
                ": shape {}x{}, expected {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Rule::ViewCount { expected, found } => {
                write!(f, ": model has {found} views, dataset has {expected}")
            }
            Rule::ClassCount { expected, found } => {
                write!(f, ": model has {found} classes, dataset has {expected}")
            }
        }
    }
}

/// Lists every broken invariant of `model` relative to `dataset`. An empty
/// list means the model is valid.
pub fn validate(model: &FactorModel, dataset: &MultiViewDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let nv = dataset.num_views();
    let structural = [
        (model.bases.len(), "bases"),
        (model.coefficients.h_sd.len(), "H_SD"),
        (model.coefficients.h_sn.len(), "H_SN"),
        (model.projection.b_sd.len(), "B_SD"),
    ];
    for (found, block) in structural {
        if found != nv {
            out.push(Violation {
                block: block.to_string(),
                index: None,
                rule: Rule::ViewCount {
                    expected: nv,
                    found,
                },
            });
        }
    }
    if !out.is_empty() {
        return out;
    }
    if model.num_classes != dataset.num_classes() {
        out.push(Violation {
            block: "model".into(),
            index: None,
            rule: Rule::ClassCount {
                expected: dataset.num_classes(),
                found: model.num_classes,
            },
        });
    }

    let dims = model.dims();
    let n = dataset.num_instances();
    let c = dataset.num_classes();
    let m = dataset.view_dims();
    for id in model.block_ids() {
        let expected = match id {
            BlockId::Basis { view, kind } => (m[view], dims.width(kind)),
            BlockId::Coef(cb) => (n, dims.width(cb.kind())),
            BlockId::Proj(ProjBlock::Cd) => (c, dims.k1),
            BlockId::Proj(ProjBlock::Sd(_)) => (c, dims.k3),
        };
        let block = model.block(id);
        let found = block.dim();
        if found != expected {
            out.push(Violation {
                block: id.to_string(),
                index: None,
                rule: Rule::Shape { expected, found },
            });
            continue;
        }
        let sign_constrained = !matches!(id, BlockId::Proj(_));
        check_entries(block.view(), &id.to_string(), sign_constrained, &mut out);
    }
    out
}

fn check_entries(block: ArrayView2<f64>, name: &str, non_negative: bool, out: &mut Vec<Violation>) {
    for ((r, c), &value) in block.indexed_iter() {
        let rule = if !value.is_finite() {
            Rule::Finite
        } else if non_negative && value < 0.0 {
            Rule::NonNegative
        } else {
            continue;
        };
        out.push(Violation {
            block: name.to_string(),
            index: Some((r, c)),
            rule,
        });
    }
}
