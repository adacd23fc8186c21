//! File formats: dataset manifests and view CSVs, model documents, and
//! trace / embedding exports.
//!
//! A dataset on disk is a TOML manifest next to its data files:
//!
//! ```toml
//! name = "toy"
//! num_classes = 2
//! views = ["view0.csv", "view1.csv"]
//! labels = "labels.txt"
//! ```
//!
//! View files hold one instance per row and one feature per column, with no
//! header. The labels file has one integer per line; `-1` marks an unlabeled
//! instance. Relative paths resolve against the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::discriminative_features;
use crate::model::{
    BlockDims, Coefficients, FactorModel, FitInfo, Hyperparams, MultiViewDataset, Projection,
    ViewBases,
};
use crate::objective::ObjectiveBreakdown;
use crate::solver::SolverTrace;

/// Version written into, and required from, model documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub const TRACE_HEADER: &str = "iteration,total,reconstruction,orthogonality,sparsity,label_loss";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub num_classes: usize,
    pub views: Vec<PathBuf>,
    /// Missing labels load as all-unlabeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::InvalidData(format!(
                "manifest '{}' lists no views",
                self.name
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidData(format!(
                "manifest '{}': num_classes must be at least 2",
                self.name
            )));
        }
        Ok(())
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| {
        let line = e
            .span()
            .map_or(0, |span| text[..span.start].matches('\n').count() + 1);
        parse_error(path, line, e.message())
    })?;
    manifest.validate()?;
    Ok(manifest)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a headerless CSV view file and returns it as features × instances.
pub fn read_view_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, field) in line.split(',').enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                parse_error(
                    path,
                    i + 1,
                    format!("column {}: cannot parse '{}'", col + 1, field.trim()),
                )
            })?;
            if !value.is_finite() {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("column {}: non-finite value", col + 1),
                ));
            }
            if value < 0.0 {
                return Err(Error::NegativeEntry {
                    path: path.to_path_buf(),
                    row: rows.len() + 1,
                    col: col + 1,
                    value,
                });
            }
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, 0, "file has no data rows"));
    }
    let (n, m) = (rows.len(), rows[0].len());
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let instances = Array2::from_shape_vec((n, m), data).expect("rows have equal length");
    Ok(instances.reversed_axes().as_standard_layout().into_owned())
}

/// Shortest text that parses back to exactly `x`, switching to exponent
/// notation for very small or very large magnitudes.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Writes a features × instances matrix as one instance per line.
pub fn write_view_csv(path: impl AsRef<Path>, x: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for j in 0..x.ncols() {
        let fields: Vec<String> = x.column(j).iter().map(|&v| format_number(v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_string(path.as_ref(), &out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<i64>()
                .map_err(|_| parse_error(path, i + 1, format!("cannot parse label '{}'", l.trim())))
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        writeln!(out, "{l}").unwrap();
    }
    write_string(path.as_ref(), &out)
}

/// Loads the dataset described by a manifest file.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<MultiViewDataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let views = manifest
        .views
        .iter()
        .map(|p| read_view_csv(resolve(base, p)))
        .collect::<Result<Vec<_>>>()?;
    let n = views[0].ncols();
    for (v, x) in views.iter().enumerate().skip(1) {
        if x.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}: view {v} has {} instances, view 0 has {n}",
                manifest_path.display(),
                x.ncols()
            )));
        }
    }
    let labels = match &manifest.labels {
        Some(p) => read_labels(resolve(base, p))?,
        None => vec![crate::model::UNLABELED; n],
    };
    MultiViewDataset::from_raw_labels(views, &labels, manifest.num_classes)
}

/// Writes `dataset` into `dir` as `manifest.toml`, `view{v}.csv` and
/// `labels.txt`; returns the manifest path.
pub fn save_dataset(
    dataset: &MultiViewDataset,
    dir: impl AsRef<Path>,
    name: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut views = Vec::new();
    for (v, x) in dataset.views().iter().enumerate() {
        let file = PathBuf::from(format!("view{v}.csv"));
        write_view_csv(dir.join(&file), x)?;
        views.push(file);
    }
    write_labels(dir.join("labels.txt"), &dataset.raw_labels())?;
    let manifest = DatasetManifest {
        name: name.to_string(),
        num_classes: dataset.num_classes(),
        views,
        labels: Some(PathBuf::from("labels.txt")),
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidData(e.to_string()))?;
    write_string(&path, &text)?;
    Ok(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct Matrix {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl Matrix {
    fn from_array(a: &Array2<f64>) -> Self {
        Self {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }

    fn into_array(self, what: &str) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data).map_err(|_| {
            Error::InvalidData(format!(
                "{what}: entry count does not match {}x{}",
                self.rows, self.cols
            ))
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BasesDoc {
    w_cd: Matrix,
    w_cn: Matrix,
    w_sd: Matrix,
    w_sn: Matrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    num_classes: usize,
    num_instances: usize,
    dims: BlockDims,
    view_dims: Vec<usize>,
    hyperparams: Option<Hyperparams>,
    fit_info: Option<FitInfo>,
    bases: Vec<BasesDoc>,
    h_cd: Matrix,
    h_cn: Matrix,
    h_sd: Vec<Matrix>,
    h_sn: Vec<Matrix>,
    b_cd: Matrix,
    b_sd: Vec<Matrix>,
}

fn model_doc(model: &FactorModel) -> ModelDoc {
    let c = &model.coefficients;
    ModelDoc {
        format_version: MODEL_FORMAT_VERSION,
        num_classes: model.num_classes,
        num_instances: model.num_instances(),
        dims: model.dims(),
        view_dims: model.view_dims(),
        hyperparams: model.hyperparams.clone(),
        fit_info: model.fit_info.clone(),
        bases: model
            .bases
            .iter()
            .map(|b| BasesDoc {
                w_cd: Matrix::from_array(&b.w_cd),
                w_cn: Matrix::from_array(&b.w_cn),
                w_sd: Matrix::from_array(&b.w_sd),
                w_sn: Matrix::from_array(&b.w_sn),
            })
            .collect(),
        h_cd: Matrix::from_array(&c.h_cd),
        h_cn: Matrix::from_array(&c.h_cn),
        h_sd: c.h_sd.iter().map(Matrix::from_array).collect(),
        h_sn: c.h_sn.iter().map(Matrix::from_array).collect(),
        b_cd: Matrix::from_array(&model.projection.b_cd),
        b_sd: model
            .projection
            .b_sd
            .iter()
            .map(Matrix::from_array)
            .collect(),
    }
}

fn expect_shape(a: &Array2<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if a.dim() != (rows, cols) {
        return Err(Error::InvalidData(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn model_from_doc(doc: ModelDoc) -> Result<FactorModel> {
    let nv = doc.view_dims.len();
    if doc.bases.len() != nv || doc.h_sd.len() != nv || doc.h_sn.len() != nv || doc.b_sd.len() != nv
    {
        return Err(Error::InvalidData(format!(
            "model document lists {nv} views but per-view block counts disagree"
        )));
    }
    let d = doc.dims;
    let n = doc.num_instances;
    let c = doc.num_classes;
    let mut bases = Vec::with_capacity(nv);
    for (v, b) in doc.bases.into_iter().enumerate() {
        let m = doc.view_dims[v];
        let vb = ViewBases {
            w_cd: b.w_cd.into_array("W_CD")?,
            w_cn: b.w_cn.into_array("W_CN")?,
            w_sd: b.w_sd.into_array("W_SD")?,
            w_sn: b.w_sn.into_array("W_SN")?,
        };
        expect_shape(&vb.w_cd, m, d.k1, &format!("W_CD({v})"))?;
        expect_shape(&vb.w_cn, m, d.k2, &format!("W_CN({v})"))?;
        expect_shape(&vb.w_sd, m, d.k3, &format!("W_SD({v})"))?;
        expect_shape(&vb.w_sn, m, d.k4, &format!("W_SN({v})"))?;
        bases.push(vb);
    }
    let coefficients = Coefficients {
        h_cd: doc.h_cd.into_array("H_CD")?,
        h_cn: doc.h_cn.into_array("H_CN")?,
        h_sd: doc
            .h_sd
            .into_iter()
            .map(|m| m.into_array("H_SD"))
            .collect::<Result<_>>()?,
        h_sn: doc
            .h_sn
            .into_iter()
            .map(|m| m.into_array("H_SN"))
            .collect::<Result<_>>()?,
    };
    expect_shape(&coefficients.h_cd, n, d.k1, "H_CD")?;
    expect_shape(&coefficients.h_cn, n, d.k2, "H_CN")?;
    for v in 0..nv {
        expect_shape(&coefficients.h_sd[v], n, d.k3, &format!("H_SD({v})"))?;
        expect_shape(&coefficients.h_sn[v], n, d.k4, &format!("H_SN({v})"))?;
    }
    let projection = Projection {
        b_cd: doc.b_cd.into_array("B_CD")?,
        b_sd: doc
            .b_sd
            .into_iter()
            .map(|m| m.into_array("B_SD"))
            .collect::<Result<_>>()?,
    };
    expect_shape(&projection.b_cd, c, d.k1, "B_CD")?;
    for (v, b) in projection.b_sd.iter().enumerate() {
        expect_shape(b, c, d.k3, &format!("B_SD({v})"))?;
    }
    Ok(FactorModel {
        bases,
        coefficients,
        projection,
        num_classes: c,
        hyperparams: doc.hyperparams,
        fit_info: doc.fit_info,
    })
}

pub fn model_to_json(model: &FactorModel) -> String {
    serde_json::to_string_pretty(&model_doc(model)).expect("model documents always serialize")
}

/// Parses a model document. `path` only labels error messages.
pub fn model_from_json(text: &str, path: &Path) -> Result<FactorModel> {
    let json_error = |e: serde_json::Error| parse_error(path, e.line(), e.to_string());
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| parse_error(path, 0, "missing format_version"))?;
    if found != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let doc: ModelDoc =
        serde_json::from_value(value).map_err(|e| parse_error(path, 0, e.to_string()))?;
    model_from_doc(doc)
}

pub fn save_model(model: &FactorModel, path: impl AsRef<Path>) -> Result<()> {
    let mut text = model_to_json(model);
    text.push('\n');
    write_string(path.as_ref(), &text)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FactorModel> {
    let path = path.as_ref();
    model_from_json(&read_to_string(path)?, path)
}

/// One line of an exported trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: ObjectiveBreakdown,
}

pub fn trace_rows(trace: &SolverTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            iteration: r.iteration,
            objective: r.objective,
        })
        .collect()
}

/// Formats rows with 17 significant digits, enough to reproduce every value.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let o = &r.objective;
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.iteration, o.total, o.reconstruction, o.orthogonality, o.sparsity, o.label_loss
        )
        .unwrap();
    }
    out
}

pub fn export_trace(trace: &SolverTrace, path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &trace_csv(&trace_rows(trace)))
}

pub fn write_trace_rows(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    write_string(path.as_ref(), &trace_csv(rows))
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => {
            return Err(parse_error(
                path,
                1,
                format!("expected header '{TRACE_HEADER}'"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let iteration = fields[0]
            .parse()
            .map_err(|_| parse_error(path, i + 1, "bad iteration number"))?;
        let mut vals = [0.0; 5];
        for (slot, f) in vals.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .map_err(|_| parse_error(path, i + 1, format!("cannot parse '{f}'")))?;
        }
        rows.push(TraceRow {
            iteration,
            objective: ObjectiveBreakdown {
                total: vals[0],
                reconstruction: vals[1],
                orthogonality: vals[2],
                sparsity: vals[3],
                label_loss: vals[4],
            },
        });
    }
    Ok(rows)
}

/// Embedding table: instance index, raw label, then the discriminative
/// features `[H_CD | H_SD(1) | … ]` of that instance.
pub fn embeddings_csv(model: &FactorModel, dataset: &MultiViewDataset) -> Result<String> {
    if model.num_instances() != dataset.num_instances() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} instances, dataset has {}",
            model.num_instances(),
            dataset.num_instances()
        )));
    }
    let features = discriminative_features(model);
    let mut out = String::from("instance,label");
    for f in 0..features.ncols() {
        write!(out, ",f{f}").unwrap();
    }
    out.push('\n');
    for (j, label) in dataset.raw_labels().iter().enumerate() {
        write!(out, "{j},{label}").unwrap();
        for &x in features.row(j) {
            write!(out, ",{}", format_number(x)).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_embeddings(
    model: &FactorModel,
    dataset: &MultiViewDataset,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_string(path.as_ref(), &embeddings_csv(model, dataset)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn view_csv_is_transposed_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        fs::write(&p, "1,2,3\n4,5,6\n").unwrap();
        let x = read_view_csv(&p).unwrap();
        assert_eq!(x, array![[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]]);
    }

    #[test]
    fn negative_entry_names_its_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        fs::write(&p, "1,2\n3,-0.5\n").unwrap();
        match read_view_csv(&p) {
            Err(Error::NegativeEntry {
                row, col, value, ..
            }) => {
                assert_eq!((row, col), (2, 2));
                assert_eq!(value, -0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_report_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(
            read_view_csv(&p),
            Err(Error::Parse { line: 2, .. })
        ));
        fs::write(&p, "1,2\n3,x\n").unwrap();
        assert!(matches!(
            read_view_csv(&p),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn manifest_missing_labels_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("v.csv"), "1,2\n3,4\n").unwrap();
        let m = dir.path().join("m.toml");
        fs::write(
            &m,
            "name = \"x\"\nnum_classes = 2\nviews = [\"v.csv\"]\nlabels = \"nope.txt\"\n",
        )
        .unwrap();
        match load_dataset(&m) {
            Err(Error::Io { path, .. }) => assert!(path.ends_with("nope.txt")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_without_labels_loads_unlabeled() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("v.csv"), "1,2\n3,4\n0,1\n").unwrap();
        let m = dir.path().join("m.toml");
        fs::write(&m, "name = \"x\"\nnum_classes = 2\nviews = [\"v.csv\"]\n").unwrap();
        let ds = load_dataset(&m).unwrap();
        assert_eq!(ds.num_instances(), 3);
        assert_eq!(ds.num_labeled(), 0);
    }

    #[test]
    fn instance_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "1\n2\n").unwrap();
        fs::write(dir.path().join("b.csv"), "1\n2\n3\n").unwrap();
        let m = dir.path().join("m.toml");
        fs::write(
            &m,
            "name = \"x\"\nnum_classes = 2\nviews = [\"a.csv\", \"b.csv\"]\n",
        )
        .unwrap();
        assert!(matches!(load_dataset(&m), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn trace_lines_have_seventeen_digits() {
        let rows = [TraceRow {
            iteration: 1,
            objective: ObjectiveBreakdown {
                total: 0.1,
                reconstruction: 1.0 / 3.0,
                orthogonality: 0.0,
                sparsity: 2.5,
                label_loss: 1e-300,
            },
        }];
        let text = trace_csv(&rows);
        let line = text.lines().nth(1).unwrap();
        assert!(line.starts_with("1,1.0000000000000001e-1,3.3333333333333331e-1,"));
    }
}
