//! Loading expression matrices and turning raw counts into model input.
//!
//! Two on-disk layouts are supported:
//!
//! * **dense CSV**: one row per cell. An optional header row carries gene
//!   names and an optional first column carries cell names; both are
//!   detected by non-numeric tokens.
//! * **sparse triplet**: a header line `rows cols nnz` followed by `nnz`
//!   lines `row col value` with 1-based indices.
//!
//! Labels files hold one integer per line in cell order.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::diffcore::DenseMatrix;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("reading {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("matrix has no cells or no genes")]
    Empty,
    #[error("every gene was filtered out")]
    AllGenesFiltered,
    #[error("only {0} gene(s) remain after filtering; at least 2 are required")]
    TooFewGenes(usize),
    #[error("cells with zero total count: {0:?}")]
    ZeroTotalCells(Vec<usize>),
    #[error("top_genes = {requested} exceeds the {available} genes left after filtering")]
    TooManyTopGenes { requested: usize, available: usize },
    #[error("{what} has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("negative count {value} at cell {cell}, gene {gene}")]
    Negative { cell: usize, gene: usize, value: f64 },
}

/// On-disk matrix layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    DenseCsv,
    SparseTriplet,
}

impl FromStr for MatrixFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense-csv" => Ok(MatrixFormat::DenseCsv),
            "sparse-triplet" => Ok(MatrixFormat::SparseTriplet),
            other => Err(format!(
                "unknown format `{other}` (expected dense-csv or sparse-triplet)"
            )),
        }
    }
}

/// Cells × genes nonnegative counts with identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    counts: DenseMatrix,
    gene_ids: Vec<String>,
    cell_ids: Vec<String>,
    labels: Option<Vec<usize>>,
}

impl ExpressionMatrix {
    /// Wraps a count matrix, synthesizing `cell_i` / `gene_j` identifiers.
    pub fn new(counts: DenseMatrix) -> Result<Self, IngestError> {
        let gene_ids = (0..counts.cols()).map(|j| format!("gene_{j}")).collect();
        let cell_ids = (0..counts.rows()).map(|i| format!("cell_{i}")).collect();
        Self::with_ids(counts, gene_ids, cell_ids)
    }

    pub fn with_ids(counts: DenseMatrix, gene_ids: Vec<String>, cell_ids: Vec<String>) -> Result<Self, IngestError> {
        if gene_ids.len() != counts.cols() {
            return Err(IngestError::Length {
                what: "gene_ids",
                got: gene_ids.len(),
                expected: counts.cols(),
            });
        }
        if cell_ids.len() != counts.rows() {
            return Err(IngestError::Length {
                what: "cell_ids",
                got: cell_ids.len(),
                expected: counts.rows(),
            });
        }
        for i in 0..counts.rows() {
            for (j, &v) in counts.row(i).iter().enumerate() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(IngestError::Negative {
                        cell: i,
                        gene: j,
                        value: v,
                    });
                }
            }
        }
        Ok(ExpressionMatrix {
            counts,
            gene_ids,
            cell_ids,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self, IngestError> {
        if labels.len() != self.counts.rows() {
            return Err(IngestError::Length {
                what: "labels",
                got: labels.len(),
                expected: self.counts.rows(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Dense CSV with a `cell` corner header, gene names, and cell ids;
    /// reads back through [`parse_dense_csv`].
    pub fn to_dense_csv(&self) -> String {
        let mut out = String::from("cell");
        for g in &self.gene_ids {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (i, id) in self.cell_ids.iter().enumerate() {
            out.push_str(id);
            for v in self.counts.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn counts(&self) -> &DenseMatrix {
        &self.counts
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_cells(&self) -> usize {
        self.counts.rows()
    }

    pub fn n_genes(&self) -> usize {
        self.counts.cols()
    }
}

/// Gene ranking used when keeping only the top genes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GeneSelection {
    /// Largest column sum of library-normalized counts.
    #[default]
    TotalExpression,
    /// Largest variance of the final (log-transformed) values.
    Variance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub min_cells_per_gene: usize,
    pub top_genes: Option<usize>,
    pub normalize_target: f64,
    pub log_transform: bool,
    pub gene_selection: GeneSelection,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_cells_per_gene: 3,
            top_genes: None,
            normalize_target: 1e4,
            log_transform: true,
            gene_selection: GeneSelection::TotalExpression,
        }
    }
}

/// Result of [`preprocess`].
#[derive(Clone, Debug)]
pub struct Preprocessed {
    /// Model input, cells × kept genes.
    pub x: DenseMatrix,
    /// Raw library size of each cell over the median library size.
    pub size_factors: Vec<f64>,
    /// Indices into the raw gene axis, strictly increasing.
    pub kept_genes: Vec<usize>,
}

impl Preprocessed {
    /// Raw counts restricted to the kept genes, aligned with `x`.
    pub fn raw_counts(&self, raw: &ExpressionMatrix) -> DenseMatrix {
        raw.counts().select_columns(&self.kept_genes)
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Filters genes, normalizes each cell to a fixed library size, applies
/// `log1p`, and optionally keeps the top genes.
pub fn preprocess(raw: &ExpressionMatrix, cfg: &PreprocessConfig) -> Result<Preprocessed, IngestError> {
    let counts = raw.counts();
    let (n, g) = counts.shape();
    if n == 0 || g == 0 {
        return Err(IngestError::Empty);
    }

    let totals = counts.row_sums();
    let zero_cells: Vec<usize> = (0..n).filter(|&i| totals[i] <= 0.0).collect();
    if !zero_cells.is_empty() {
        return Err(IngestError::ZeroTotalCells(zero_cells));
    }
    let med = median(&totals);
    let size_factors: Vec<f64> = totals.iter().map(|t| t / med).collect();

    let mut expressed_in = vec![0usize; g];
    for i in 0..n {
        for (c, &v) in expressed_in.iter_mut().zip(counts.row(i)) {
            if v > 0.0 {
                *c += 1;
            }
        }
    }
    let min_cells = cfg.min_cells_per_gene.max(1);
    let mut kept: Vec<usize> = (0..g).filter(|&j| expressed_in[j] >= min_cells).collect();
    if kept.is_empty() {
        return Err(IngestError::AllGenesFiltered);
    }
    if kept.len() < 2 {
        return Err(IngestError::TooFewGenes(kept.len()));
    }

    let mut x = counts.select_columns(&kept);
    let kept_totals = x.row_sums();
    let zero_after: Vec<usize> = (0..n).filter(|&i| kept_totals[i] <= 0.0).collect();
    if !zero_after.is_empty() {
        return Err(IngestError::ZeroTotalCells(zero_after));
    }
    for (i, total) in kept_totals.iter().enumerate() {
        let s = cfg.normalize_target / total;
        x.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    let normalized_sums = x.col_sums();
    if cfg.log_transform {
        x.map_inplace(f64::ln_1p);
    }

    if let Some(top) = cfg.top_genes {
        if top > kept.len() {
            return Err(IngestError::TooManyTopGenes {
                requested: top,
                available: kept.len(),
            });
        }
        if top < 2 {
            return Err(IngestError::TooFewGenes(top));
        }
        let score: Vec<f64> = match cfg.gene_selection {
            GeneSelection::TotalExpression => normalized_sums,
            GeneSelection::Variance => column_variances(&x),
        };
        let mut order: Vec<usize> = (0..kept.len()).collect();
        // Highest score first; ties keep the lower column index.
        order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
        let mut chosen: Vec<usize> = order[..top].to_vec();
        chosen.sort_unstable();
        x = x.select_columns(&chosen);
        kept = chosen.iter().map(|&c| kept[c]).collect();
    }

    Ok(Preprocessed {
        x,
        size_factors,
        kept_genes: kept,
    })
}

fn column_variances(x: &DenseMatrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let means: Vec<f64> = x.col_sums().iter().map(|s| s / n).collect();
    let mut var = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for ((v, &xv), &m) in var.iter_mut().zip(x.row(i)).zip(&means) {
            *v += (xv - m) * (xv - m);
        }
    }
    var.iter().map(|v| v / n).collect()
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_count(token: &str, line: usize) -> Result<f64, IngestError> {
    let v: f64 = token.trim().parse().map_err(|_| IngestError::Parse {
        line,
        message: format!("`{}` is not a number", token.trim()),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Parse {
            line,
            message: format!("non-finite count `{}`", token.trim()),
        });
    }
    if v < 0.0 {
        return Err(IngestError::Parse {
            line,
            message: format!("negative count {v}"),
        });
    }
    Ok(v)
}

fn is_numeric(token: &str) -> bool {
    token.trim().parse::<f64>().is_ok()
}

/// Reads a matrix from disk.
pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<ExpressionMatrix, IngestError> {
    let text = read(path.as_ref())?;
    match format {
        MatrixFormat::DenseCsv => parse_dense_csv(&text),
        MatrixFormat::SparseTriplet => parse_sparse_triplet(&text),
    }
}

/// Parses dense CSV text; see the module docs for the layout.
pub fn parse_dense_csv(text: &str) -> Result<ExpressionMatrix, IngestError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    let mut header: Option<Vec<String>> = None;
    if let Some(&(_, first)) = lines.peek() {
        let tokens: Vec<&str> = first.split(',').collect();
        // A header has at least one non-numeric token past the first column.
        if tokens.iter().skip(1).any(|t| !is_numeric(t)) || (tokens.len() == 1 && !is_numeric(tokens[0])) {
            header = Some(tokens.iter().map(|t| t.trim().to_string()).collect());
            lines.next();
        }
    }

    let mut has_id_column: Option<bool> = None;
    let mut cell_ids = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in lines {
        let tokens: Vec<&str> = line.split(',').collect();
        let id_col = *has_id_column.get_or_insert_with(|| !is_numeric(tokens[0]));
        let values = if id_col {
            cell_ids.push(tokens[0].trim().to_string());
            &tokens[1..]
        } else {
            &tokens[..]
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(IngestError::Parse {
                    line: lineno,
                    message: format!("row has {} values, expected {w}", values.len()),
                })
            }
            _ => {}
        }
        for t in values {
            data.push(parse_count(t, lineno)?);
        }
    }
    let cols = width.ok_or(IngestError::Empty)?;
    let rows = data.len() / cols.max(1);
    if rows == 0 || cols == 0 {
        return Err(IngestError::Empty);
    }
    let counts = DenseMatrix::from_vec(rows, cols, data).expect("rectangular by construction");

    let gene_ids = match header {
        Some(h) => {
            let names: Vec<String> = if h.len() == cols + 1 { h[1..].to_vec() } else { h };
            if names.len() != cols {
                return Err(IngestError::Parse {
                    line: 1,
                    message: format!("header has {} names for {cols} columns", names.len()),
                });
            }
            names
        }
        None => (0..cols).map(|j| format!("gene_{j}")).collect(),
    };
    let cell_ids = if has_id_column == Some(true) {
        cell_ids
    } else {
        (0..rows).map(|i| format!("cell_{i}")).collect()
    };
    ExpressionMatrix::with_ids(counts, gene_ids, cell_ids)
}

/// Parses sparse triplet text; see the module docs for the layout.
pub fn parse_sparse_triplet(text: &str) -> Result<ExpressionMatrix, IngestError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%') && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(IngestError::Empty)?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| IngestError::Parse {
            line: hline,
            message: "header must be `rows cols nnz`".into(),
        })?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(IngestError::Parse {
            line: hline,
            message: "header must be `rows cols nnz`".into(),
        });
    };
    if rows == 0 || cols == 0 {
        return Err(IngestError::Empty);
    }
    let mut counts = DenseMatrix::zeros(rows, cols);
    let mut seen = 0usize;
    for (lineno, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(IngestError::Parse {
                line: lineno,
                message: format!("expected `row col value`, got {} fields", tokens.len()),
            });
        }
        let index = |t: &str, bound: usize, what: &str| -> Result<usize, IngestError> {
            let v: usize = t.parse().map_err(|_| IngestError::Parse {
                line: lineno,
                message: format!("bad {what} index `{t}`"),
            })?;
            if v == 0 || v > bound {
                return Err(IngestError::Parse {
                    line: lineno,
                    message: format!("{what} index {v} outside 1..={bound}"),
                });
            }
            Ok(v - 1)
        };
        let r = index(tokens[0], rows, "row")?;
        let c = index(tokens[1], cols, "column")?;
        let v = parse_count(tokens[2], lineno)?;
        counts[(r, c)] += v;
        seen += 1;
    }
    if seen != nnz {
        return Err(IngestError::Parse {
            line: hline,
            message: format!("header declares {nnz} entries, found {seen}"),
        });
    }
    ExpressionMatrix::new(counts)
}

/// Reads one nonnegative integer label per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>, IngestError> {
    parse_labels(&read(path.as_ref())?)
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| IngestError::Parse {
                line: i + 1,
                message: format!("`{}` is not a nonnegative integer label", l.trim()),
            })
        })
        .collect()
}

/// Centers each column and divides by its population standard deviation.
/// Constant columns become all zeros.
pub fn standardize_columns(x: &DenseMatrix) -> DenseMatrix {
    let n = x.rows().max(1) as f64;
    let means: Vec<f64> = x.col_sums().iter().map(|s| s / n).collect();
    let mut var = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for ((v, &m), &xi) in var.iter_mut().zip(&means).zip(x.row(i)) {
            *v += (xi - m) * (xi - m);
        }
    }
    let inv_sd: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();
    let mut out = x.clone();
    for i in 0..out.rows() {
        for ((o, &m), &s) in out.row_mut(i).iter_mut().zip(&means).zip(&inv_sd) {
            *o = (*o - m) * s;
        }
    }
    out
}

/// One label per line, the inverse of [`parse_labels`].
pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 2);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}
