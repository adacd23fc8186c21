//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints exactly one PASS / FAIL / SKIP line; the process exits non-zero if
//! any criterion fails.
//!
//! The real-data check (criterion 8) reads the manifest named by
//! `MVDLCSL_CORNELL`, falling back to `data/cornell/manifest.toml`.

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvdlcsl::eval::{cross_validate, cross_validate_observed, CvConfig, Method};
use mvdlcsl::io::{
    export_trace, load_dataset, load_model, load_trace, model_to_json, save_dataset, save_model,
    write_trace_rows,
};
use mvdlcsl::objective::{grad_basis, grad_coef, grad_proj};
use mvdlcsl::solver::{fit, solve_b_cd, solve_b_sd, SolverTrace};
use mvdlcsl::synthetic::{generate_synthetic, SyntheticSpec};
use mvdlcsl::{
    total_objective, BlockDims, BlockId, Coefficients, FactorModel, Hyperparams, LossMode,
    MultiViewDataset, Projection, ViewBases,
};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Criterion<'a> = (&'a str, Box<dyn Fn() -> Verdict + 'a>);

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(lo..hi))
}

/// Random model and dataset: n ≤ 10, c ≤ 4, m_v ≤ 8, each k ≤ 3, two views.
/// Factor entries stay well inside the positive orthant so central
/// differences never cross the boundary.
fn random_problem(
    rng: &mut ChaCha8Rng,
    mode: LossMode,
) -> (FactorModel, MultiViewDataset, Hyperparams) {
    let n = rng.random_range(4..=10);
    let c = rng.random_range(2..=4);
    let m: Vec<usize> = (0..2).map(|_| rng.random_range(2..=8)).collect();
    let dims = loop {
        let d = BlockDims {
            k1: rng.random_range(0..=3),
            k2: rng.random_range(0..=3),
            k3: rng.random_range(0..=3),
            k4: rng.random_range(0..=3),
        };
        if d.k1 + d.k3 > 0 {
            break d;
        }
    };
    let views: Vec<Array2<f64>> = m.iter().map(|&mv| uniform(rng, mv, n, 0.0, 2.0)).collect();
    let labels: Vec<Option<usize>> = (0..n)
        .map(|j| {
            if j % 4 == 3 {
                None
            } else {
                Some(rng.random_range(0..c))
            }
        })
        .collect();
    let dataset = MultiViewDataset::new(views, labels, c).unwrap();
    let bases = m
        .iter()
        .map(|&mv| ViewBases {
            w_cd: uniform(rng, mv, dims.k1, 0.2, 1.2),
            w_cn: uniform(rng, mv, dims.k2, 0.2, 1.2),
            w_sd: uniform(rng, mv, dims.k3, 0.2, 1.2),
            w_sn: uniform(rng, mv, dims.k4, 0.2, 1.2),
        })
        .collect();
    let coefficients = Coefficients {
        h_cd: uniform(rng, n, dims.k1, 0.2, 1.2),
        h_cn: uniform(rng, n, dims.k2, 0.2, 1.2),
        h_sd: (0..2).map(|_| uniform(rng, n, dims.k3, 0.2, 1.2)).collect(),
        h_sn: (0..2).map(|_| uniform(rng, n, dims.k4, 0.2, 1.2)).collect(),
    };
    let projection = Projection {
        b_cd: uniform(rng, c, dims.k1, -1.0, 1.0),
        b_sd: (0..2)
            .map(|_| uniform(rng, c, dims.k3, -1.0, 1.0))
            .collect(),
    };
    let mut hp = Hyperparams::new(dims);
    hp.alpha = rng.random_range(0.1..1.0);
    hp.beta = rng.random_range(0.1..1.0);
    hp.gamma = rng.random_range(0.1..2.0);
    hp.loss_mode = mode;
    let model = FactorModel {
        bases,
        coefficients,
        projection,
        num_classes: c,
        hyperparams: None,
        fit_info: None,
    };
    (model, dataset, hp)
}

fn analytic_gradient(
    model: &FactorModel,
    ds: &MultiViewDataset,
    hp: &Hyperparams,
    id: BlockId,
) -> Array2<f64> {
    match id {
        BlockId::Basis { view, kind } => grad_basis(model, ds, hp, view, kind),
        BlockId::Coef(b) => grad_coef(model, ds, hp, b),
        BlockId::Proj(b) => grad_proj(model, ds, hp, b),
    }
}

fn central_difference(
    model: &mut FactorModel,
    ds: &MultiViewDataset,
    hp: &Hyperparams,
    id: BlockId,
    h: f64,
) -> Array2<f64> {
    let shape = model.block(id).dim();
    let mut g = Array2::zeros(shape);
    for i in 0..shape.0 {
        for j in 0..shape.1 {
            let x = model.block(id)[[i, j]];
            model.block_mut(id)[[i, j]] = x + h;
            let up = total_objective(model, ds, hp).total;
            model.block_mut(id)[[i, j]] = x - h;
            let down = total_objective(model, ds, hp).total;
            model.block_mut(id)[[i, j]] = x;
            g[[i, j]] = (up - down) / (2.0 * h);
        }
    }
    g
}

fn norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn criterion_gradients() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut blocks = 0;
    for inst in 0..20 {
        let mode = if inst % 2 == 0 {
            LossMode::CrossEntropy
        } else {
            LossMode::SquaredError
        };
        let (mut model, ds, hp) = random_problem(&mut rng, mode);
        for id in model.block_ids() {
            if model.block(id).is_empty() {
                continue;
            }
            let a = analytic_gradient(&model, &ds, &hp, id);
            let fd = central_difference(&mut model, &ds, &hp, id, 1e-6);
            let scale = norm(&a).max(norm(&fd));
            let rel = if scale == 0.0 {
                0.0
            } else {
                norm(&(&a - &fd)) / scale
            };
            blocks += 1;
            if rel > worst.0 {
                worst = (rel, format!("instance {inst} {id}"));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst.0 < 1e-5 && elapsed < Duration::from_secs(10),
        format!(
            "{blocks} blocks, worst relative error {:.2e} ({}), {:.2?}",
            worst.0, worst.1, elapsed
        ),
    )
}

fn planted_hp(mode: LossMode) -> Hyperparams {
    let mut hp = Hyperparams::new(BlockDims::new(4, 2, 4, 2).unwrap());
    hp.loss_mode = mode;
    hp
}

struct PlantedRuns {
    traces: Vec<(LossMode, u64, SolverTrace)>,
    elapsed: Duration,
}

fn planted_runs() -> PlantedRuns {
    let start = Instant::now();
    let mut traces = Vec::new();
    for mode in [LossMode::CrossEntropy, LossMode::SquaredError] {
        for seed in 0..10 {
            let syn = generate_synthetic(&SyntheticSpec::planted_default(seed)).unwrap();
            let mut hp = planted_hp(mode);
            hp.seed = seed;
            let (_, trace) = fit(&syn.dataset, &hp).unwrap();
            traces.push((mode, seed, trace));
        }
    }
    PlantedRuns {
        traces,
        elapsed: start.elapsed(),
    }
}

fn criterion_monotone(runs: &PlantedRuns) -> Verdict {
    let bad: Vec<String> = runs
        .traces
        .iter()
        .filter(|(_, _, t)| !t.is_monotone(1e-10))
        .map(|(m, s, _)| format!("{m:?}/{s}"))
        .collect();
    verdict(
        bad.is_empty() && runs.elapsed < Duration::from_secs(120),
        format!(
            "{} runs, {} non-monotone {:?}, {:.2?}",
            runs.traces.len(),
            bad.len(),
            bad,
            runs.elapsed
        ),
    )
}

fn criterion_convergence(runs: &PlantedRuns) -> Verdict {
    let mut detail = Vec::new();
    let mut within = 0;
    for (_, seed, trace) in runs
        .traces
        .iter()
        .filter(|(m, _, _)| *m == LossMode::CrossEntropy)
    {
        let first = trace.first_below(1e-4);
        if first.is_some_and(|it| it <= 100) {
            within += 1;
        }
        let at_100 = trace.relative_changes().get(99).copied().unwrap_or(0.0);
        detail.push(format!(
            "seed {seed}: first<1e-4 at {}, change at 100 = {at_100:.1e}",
            first.map_or("never".to_string(), |i| i.to_string())
        ));
    }
    verdict(
        within >= 9,
        format!(
            "{within}/10 seeds within 100 iterations [{}]",
            detail.join("; ")
        ),
    )
}

fn criterion_oracle_recovery() -> Verdict {
    let syn = generate_synthetic(&SyntheticSpec::planted_default(7)).unwrap();
    let cfg = CvConfig::new(5, 3);
    let default = cross_validate(
        &syn.dataset,
        &Method::Factorization(planted_hp(LossMode::CrossEntropy)),
        &cfg,
    )
    .unwrap();
    let mut ce = planted_hp(LossMode::CrossEntropy);
    ce.max_iters = 100;
    let mut mse = planted_hp(LossMode::SquaredError);
    mse.max_iters = 100;
    let ce = cross_validate(&syn.dataset, &Method::Factorization(ce), &cfg).unwrap();
    let mse = cross_validate(&syn.dataset, &Method::Factorization(mse), &cfg).unwrap();
    verdict(
        default.mean >= 0.95 && ce.mean >= mse.mean - 0.01,
        format!(
            "CV accuracy {:.4} +- {:.4}; at 100 iterations CE {:.4} vs MSE {:.4}",
            default.mean, default.std, ce.mean, mse.mean
        ),
    )
}

fn dense(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// `T H (HᵀH + λI)⁻¹` through nalgebra's LU inverse.
fn ridge_oracle(t: &DMatrix<f64>, h: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let k = h.ncols();
    let gram = h.transpose() * h + DMatrix::identity(k, k) * lambda;
    t * h * gram.try_inverse().expect("ridge system is invertible")
}

fn max_abs_diff(a: &Array2<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), b.shape());
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[[i, j]] - b[(i, j)]).abs());
        }
    }
    worst
}

fn criterion_b_solves() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..20 {
        let (model, ds, mut hp) = random_problem(&mut rng, LossMode::SquaredError);
        hp.lambda_ridge = rng.random_range(1e-3..1.0);
        let labeled = ds.labeled_indices();
        let y_full = ds.label_matrix();
        let c = model.num_classes;
        let y = DMatrix::from_fn(c, labeled.len(), |i, j| y_full[[i, labeled[j]]]);
        let rows =
            |h: &Array2<f64>| DMatrix::from_fn(labeled.len(), h.ncols(), |i, j| h[[labeled[i], j]]);
        let h_cd = rows(&model.coefficients.h_cd);

        if model.dims().k1 > 0 {
            let mut target = DMatrix::zeros(c, labeled.len());
            for v in 0..2 {
                target += &y
                    - dense(&model.projection.b_sd[v])
                        * rows(&model.coefficients.h_sd[v]).transpose();
            }
            target /= 2.0;
            let oracle = ridge_oracle(&target, &h_cd, hp.lambda_ridge);
            worst = worst.max(max_abs_diff(
                &solve_b_cd(&model, &ds, &hp).unwrap(),
                &oracle,
            ));
            checked += 1;
        }
        if model.dims().k3 > 0 {
            for v in 0..2 {
                let target = &y - dense(&model.projection.b_cd) * h_cd.transpose();
                let oracle =
                    ridge_oracle(&target, &rows(&model.coefficients.h_sd[v]), hp.lambda_ridge);
                worst = worst.max(max_abs_diff(
                    &solve_b_sd(&model, &ds, v, &hp).unwrap(),
                    &oracle,
                ));
                checked += 1;
            }
        }
    }
    verdict(
        worst < 1e-8,
        format!("{checked} solves, max abs difference {worst:.2e}"),
    )
}

fn criterion_nmf_reduction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = uniform(&mut rng, 6, 2, 0.1, 1.0);
    let h = uniform(&mut rng, 10, 2, 0.1, 1.0);
    let x = w.dot(&h.t());
    let ds = MultiViewDataset::new(vec![x], vec![None; 10], 2).unwrap();
    let mut hp = Hyperparams::new(BlockDims::new(0, 0, 2, 0).unwrap());
    hp.alpha = 0.0;
    hp.beta = 0.0;
    hp.gamma = 0.0;
    hp.max_iters = 500;
    hp.rel_tol = 1e-15;
    let (_, trace) = fit(&ds, &hp).unwrap();
    let last = trace.final_objective();
    verdict(
        last.reconstruction < 1e-6 && trace.records.len() <= 500,
        format!(
            "reconstruction {:.3e} after {} iterations ({:?})",
            last.reconstruction,
            trace.records.len(),
            trace.status
        ),
    )
}

fn criterion_protocol() -> Verdict {
    let syn = generate_synthetic(&SyntheticSpec::planted_default(7)).unwrap();
    let cfg = CvConfig::new(5, 10);
    let audits = Mutex::new(Vec::new());
    let report = cross_validate_observed(
        &syn.dataset,
        &Method::Factorization(planted_hp(LossMode::CrossEntropy)),
        &cfg,
        |ctx| audits.lock().unwrap().push(ctx.masking_holds()),
    );
    let report = match report {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(format!("evaluation failed: {e}")),
    };
    let audits = audits.into_inner().unwrap();
    let clean = audits.iter().all(|&a| a);
    verdict(
        report.scores.len() == 50
            && audits.len() == 50
            && clean
            && report.mean.is_finite()
            && report.std.is_finite(),
        format!(
            "{} fold scores, accuracy {:.4} +- {:.4} (population std), masking audit {}/{} clean",
            report.scores.len(),
            report.mean,
            report.std,
            audits.iter().filter(|&&a| a).count(),
            audits.len()
        ),
    )
}

fn criterion_real_data() -> Verdict {
    let path = std::env::var_os("MVDLCSL_CORNELL")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/cornell/manifest.toml")
        });
    if !path.exists() {
        return Verdict::Skip(format!("no dataset at {}", path.display()));
    }
    let ds = match load_dataset(&path) {
        Ok(ds) => ds,
        Err(e) => return Verdict::Fail(format!("cannot load {}: {e}", path.display())),
    };
    let hp = planted_hp(LossMode::CrossEntropy);
    match cross_validate(&ds, &Method::Factorization(hp), &CvConfig::new(5, 10)) {
        Ok(r) => verdict(
            (0.65..=0.85).contains(&r.mean),
            format!(
                "{} instances, accuracy {:.4} +- {:.4}",
                ds.num_instances(),
                r.mean,
                r.std
            ),
        ),
        Err(e) => Verdict::Fail(format!("evaluation failed: {e}")),
    }
}

fn criterion_round_trips() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let syn = generate_synthetic(&SyntheticSpec::planted_default(3)).unwrap();
    let manifest = save_dataset(&syn.dataset, dir.path().join("data"), "planted").unwrap();
    let dataset_ok = load_dataset(&manifest).unwrap() == syn.dataset;

    let mut hp = planted_hp(LossMode::CrossEntropy);
    hp.max_iters = 5;
    hp.dims.k2 = 0;
    let (model, trace) = fit(&syn.dataset, &hp).unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&model, &model_path).unwrap();
    let loaded = load_model(&model_path).unwrap();
    let model_ok = loaded == model && model_to_json(&loaded) == model_to_json(&model);

    let first = dir.path().join("trace.csv");
    let second = dir.path().join("trace2.csv");
    export_trace(&trace, &first).unwrap();
    write_trace_rows(&load_trace(&first).unwrap(), &second).unwrap();
    let trace_ok = std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap();
    verdict(
        dataset_ok && model_ok && trace_ok,
        format!("dataset {dataset_ok}, model {model_ok}, trace byte-identical {trace_ok}"),
    )
}

fn main() {
    let planted = planted_runs();
    let criteria: Vec<Criterion> = vec![
        ("gradient fidelity", Box::new(criterion_gradients)),
        (
            "monotone descent",
            Box::new(|| criterion_monotone(&planted)),
        ),
        (
            "convergence within 100 iterations",
            Box::new(|| criterion_convergence(&planted)),
        ),
        ("oracle recovery", Box::new(criterion_oracle_recovery)),
        (
            "closed-form projection solves",
            Box::new(criterion_b_solves),
        ),
        ("reduction to plain NMF", Box::new(criterion_nmf_reduction)),
        ("cross-validation protocol", Box::new(criterion_protocol)),
        ("real data (Cornell)", Box::new(criterion_real_data)),
        ("format round-trips", Box::new(criterion_round_trips)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        match check() {
            Verdict::Pass(d) => println!("criterion {n} {name}: PASS ({d})"),
            Verdict::Skip(d) => println!("criterion {n} {name}: SKIP ({d})"),
            Verdict::Fail(d) => {
                println!("criterion {n} {name}: FAIL ({d})");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed or skipped");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
