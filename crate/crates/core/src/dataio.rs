//! Reading regression datasets and writing experiment results.
//!
//! Two input formats are supported. Sparse text has one sample per line,
//! `label idx:val idx:val ...`, with 1-based feature indices; absent
//! features are zero and the column count is the largest index seen. Dense
//! CSV has the target in the first column and features after it, with an
//! optional header row that is recognised by any non-numeric field.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::harness::{CellResult, CellStatus, ExperimentResult};
use crate::problem::ProblemInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    SparseText,
    DenseCsv,
}

impl DataFormat {
    pub fn name(self) -> &'static str {
        match self {
            DataFormat::SparseText => "sparse",
            DataFormat::DenseCsv => "csv",
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sparse" | "sparse-text" => Ok(DataFormat::SparseText),
            "csv" | "dense-csv" => Ok(DataFormat::DenseCsv),
            other => Err(Error::InvalidArgument(format!(
                "unknown data format `{other}` (expected sparse or csv)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetMode {
    Scalar,
    /// Integer labels in `[0, k)` expanded to indicator rows.
    OneHot(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub format: DataFormat,
    pub target_mode: TargetMode,
}

impl DatasetFile {
    pub fn new(path: impl Into<PathBuf>, format: DataFormat) -> Self {
        Self {
            path: path.into(),
            format,
            target_mode: TargetMode::Scalar,
        }
    }

    pub fn one_hot(self, classes: usize) -> Self {
        Self {
            target_mode: TargetMode::OneHot(classes),
            ..self
        }
    }
}

/// Raw parsed contents: features, labels and the 1-based source line of
/// each sample.
struct RawData {
    a: DMatrix<f64>,
    labels: Vec<f64>,
    lines: Vec<usize>,
}

fn parse_number(token: &str, path: &Path, line: usize, column: usize) -> Result<f64> {
    let v: f64 = token.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        reason: format!("`{token}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            reason: format!("`{token}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_sparse(text: &str, path: &Path) -> Result<RawData> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut lines = Vec::new();
    let mut width = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let mut tokens = body
            .split_whitespace()
            .map(|tok| (tok.as_ptr() as usize - body.as_ptr() as usize + 1, tok));

        let (col, label) = tokens.next().expect("non-empty line has a token");
        labels.push(parse_number(label, path, line, col)?);

        let mut entries = Vec::new();
        for (col, tok) in tokens {
            let bad = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                column: col,
                reason,
            };
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| bad(format!("expected idx:val, got `{tok}`")))?;
            let index: usize = i
                .parse()
                .map_err(|_| bad(format!("feature index `{i}` is not a positive integer")))?;
            if index == 0 {
                return Err(bad("feature indices start at 1".into()));
            }
            let value = parse_number(v, path, line, col + i.len() + 1)?;
            width = width.max(index);
            entries.push((index - 1, value));
        }
        rows.push(entries);
        lines.push(line);
    }

    let mut a = DMatrix::zeros(rows.len(), width);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            a[(r, c)] = v;
        }
    }
    Ok(RawData { a, labels, lines })
}

fn parse_dense(text: &str, path: &Path) -> Result<RawData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut lines = Vec::new();
    let mut width = None;

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                column: 1,
                reason: "need a target and at least one feature".into(),
            });
        }
        match width {
            None => width = Some(record.len() - 1),
            Some(w) if w + 1 != record.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: record.len().min(w + 1) + 1,
                    reason: format!("expected {} fields, found {}", w + 1, record.len()),
                })
            }
            Some(_) => {}
        }
        let mut fields = record.iter().enumerate();
        let (_, target) = fields.next().expect("record has fields");
        labels.push(parse_number(target, path, line, 1)?);
        for (c, field) in fields {
            values.push(parse_number(field, path, line, c + 1)?);
        }
        lines.push(line);
    }

    let d = width.unwrap_or(0);
    let a = DMatrix::from_row_slice(labels.len(), d, &values);
    Ok(RawData { a, labels, lines })
}

fn one_hot(raw: &RawData, classes: usize, path: &Path) -> Result<DMatrix<f64>> {
    let mut y = DMatrix::zeros(raw.labels.len(), classes);
    for (r, (&label, &line)) in raw.labels.iter().zip(&raw.lines).enumerate() {
        let class = label as usize;
        if label < 0.0 || label.fract() != 0.0 || class >= classes {
            return Err(Error::LabelOutOfRange {
                path: path.to_path_buf(),
                line,
                label: format!("{label}"),
                classes,
            });
        }
        y[(r, class)] = 1.0;
    }
    Ok(y)
}

/// Parses `text` as if it were the contents of `file.path`.
pub fn parse(file: &DatasetFile, text: &str) -> Result<ProblemInstance> {
    let path = &file.path;
    let raw = match file.format {
        DataFormat::SparseText => parse_sparse(text, path)?,
        DataFormat::DenseCsv => parse_dense(text, path)?,
    };
    let y = DVector::from_column_slice(&raw.labels);
    match file.target_mode {
        TargetMode::Scalar => ProblemInstance::new(raw.a, y),
        TargetMode::OneHot(0) => Err(Error::InvalidArgument("one-hot needs at least one class".into())),
        TargetMode::OneHot(k) => {
            let targets = one_hot(&raw, k, path)?;
            ProblemInstance::with_targets(raw.a, y, targets)
        }
    }
}

pub fn load(file: &DatasetFile) -> Result<ProblemInstance> {
    let text = fs::read_to_string(&file.path).map_err(|e| Error::io(&file.path, e))?;
    parse(file, &text)
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `y` and `A` as dense CSV with a header row `y,x1,...,xd`.
pub fn save_dense_csv(p: &ProblemInstance, path: &Path) -> Result<()> {
    let mut out = String::from("y");
    for j in 1..=p.d() {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for i in 0..p.n() {
        out.push_str(&format_f64(p.y()[i]));
        for j in 0..p.d() {
            out.push(',');
            out.push_str(&format_f64(p.a()[(i, j)]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const RESULTS_HEADER: [&str; 12] = [
    "family",
    "m",
    "estimator",
    "reps",
    "mean_pred_err",
    "std_pred_err",
    "mean_sa_err",
    "std_sa_err",
    "mean_shrink_factor",
    "bound_exact_classical",
    "bound_lower_general",
    "bound_upper_sa",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), format_f64)
}

fn result_row(cell: &CellResult, n: usize) -> [String; 12] {
    let ok = cell.status == CellStatus::Ok;
    let stat = |v: Option<f64>| opt(v.filter(|_| ok));
    let scale = |b: crate::bounds::BoundValue| opt(b.value().map(|v| v / n as f64));
    [
        cell.family.name().to_string(),
        cell.m.to_string(),
        cell.estimator.name().to_string(),
        if ok { cell.reps().to_string() } else { "0".into() },
        stat(cell.mean_pred_err()),
        stat(cell.std_pred_err()),
        stat(cell.mean_sa_err()),
        stat(cell.std_sa_err()),
        stat(cell.mean_shrink_factor()),
        scale(cell.bounds.exact_classical),
        scale(cell.bounds.general_lower),
        scale(cell.bounds.upper_sa),
    ]
}

/// Results as CSV text. Errors are the per-rep values already divided by
/// `n`; bound columns are divided by `n` as well so both share one scale.
/// Rows are ordered by family name, then `m`, then estimator name.
pub fn results_csv(results: &ExperimentResult) -> Result<Vec<u8>> {
    let mut cells: Vec<&CellResult> = results.cells.iter().collect();
    cells.sort_by(|a, b| {
        (a.family.name(), a.m, a.estimator.name()).cmp(&(b.family.name(), b.m, b.estimator.name()))
    });
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(RESULTS_HEADER)?;
    for cell in cells {
        writer.write_record(result_row(cell, results.n))?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("flushing csv buffer: {e}")))
}

pub fn write_results_csv(results: &ExperimentResult, path: &Path) -> Result<()> {
    if results.cells.is_empty() {
        return Err(Error::InvalidArgument("no results to write".into()));
    }
    let bytes = results_csv(results)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse(text: &str) -> Result<ProblemInstance> {
        parse(&DatasetFile::new("t.txt", DataFormat::SparseText), text)
    }

    fn dense(text: &str) -> Result<ProblemInstance> {
        parse(&DatasetFile::new("t.csv", DataFormat::DenseCsv), text)
    }

    #[test]
    fn sparse_row_is_densified() {
        let p = sparse("2.5 1:1 3:4\n1 2:1\n0 1:1 2:1\n-1 3:2\n").unwrap();
        assert_eq!(p.d(), 3);
        assert_eq!(p.a().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 4.0]);
        assert_eq!(p.y()[0], 2.5);
    }

    #[test]
    fn dense_header_is_detected() {
        let raw = parse_dense("y,f1\n3,1\n", Path::new("t.csv")).unwrap();
        assert_eq!(raw.a, DMatrix::from_row_slice(1, 1, &[1.0]));
        assert_eq!(raw.labels, vec![3.0]);

        let p = dense("y,f1\n3,1\n4,2\n").unwrap();
        assert_eq!(p.n(), 2);
        let headless = dense("3,1\n4,2\n").unwrap();
        assert_eq!(p.a(), headless.a());
    }

    #[test]
    fn one_hot_expansion() {
        let file = DatasetFile::new("t.csv", DataFormat::DenseCsv).one_hot(3);
        let p = parse(&file, "0,1\n2,5\n1,2\n").unwrap();
        let y = p.targets().unwrap();
        assert_eq!(y.rows(0, 2).into_owned(), DMatrix::from_row_slice(2, 3, &[1., 0., 0., 0., 0., 1.]));
        assert_eq!(p.y().as_slice(), &[0.0, 2.0, 1.0]);
    }

    #[test]
    fn label_out_of_range() {
        let file = DatasetFile::new("t.csv", DataFormat::DenseCsv).one_hot(2);
        match parse(&file, "0,1\n2,5\n1,2\n") {
            Err(Error::LabelOutOfRange { line: 2, classes: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse(&file, "0,1\n0.5,5\n1,2\n"), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn parse_errors_carry_position() {
        match sparse("1 1:2\n2 1:x\n") {
            Err(Error::Parse { line: 2, column: 5, .. }) => {}
            other => panic!("{other:?}"),
        }
        match sparse("1 1:2\n2  0:1\n") {
            Err(Error::Parse { line: 2, column: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        match dense("1,2\n3,abc\n") {
            Err(Error::Parse { line: 2, column: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(dense("1,2\n3\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let p = sparse("# header\n1 1:1\n\n2 1:2 2:1 # trailing\n3 2:5\n").unwrap();
        assert_eq!(p.n(), 3);
        assert_eq!(p.a()[(1, 1)], 1.0);
    }

    #[test]
    fn format_is_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456789.12345679] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
