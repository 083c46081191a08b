//! Class label embeddings: the query matrix the decoder projects onto.
//!
//! Embeddings either come from a text file (one class per line: name followed
//! by the vector) or are drawn from the seeded generator and normalized to
//! unit L2 norm per row. Row order defines class index order.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("duplicate class name {0:?}")]
    DuplicateClassName(String),
    #[error("expected {expected} classes, file has {found}")]
    WrongClassCount { expected: usize, found: usize },
    #[error("class {name:?} has {found} values, expected {expected}")]
    WrongWidth {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("class count must be >= 1")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct LabelEmbeddings {
    pub class_names: Vec<String>,
    /// C x d, one row per class.
    pub values: Matrix,
}

impl LabelEmbeddings {
    pub fn num_classes(&self) -> usize {
        self.values.rows()
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }

    /// Deterministic embeddings: per-class standard-normal rows scaled to
    /// unit L2 norm.
    pub fn seeded(class_names: Vec<String>, width: usize, seed: u64) -> Result<Self, LabelError> {
        check_unique(&class_names)?;
        if class_names.is_empty() {
            return Err(LabelError::Empty);
        }
        let mut rng = Rng::derive(seed, "label-embeddings");
        let mut values = Matrix::zeros(class_names.len(), width);
        for i in 0..class_names.len() {
            let row: Vec<f64> = (0..width).map(|_| rng.normal()).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (j, x) in row.iter().enumerate() {
                values.set(i, j, x / norm);
            }
        }
        Ok(LabelEmbeddings {
            class_names,
            values,
        })
    }

    /// Load embeddings verbatim from a whitespace-separated text file.
    pub fn from_file(
        path: &Path,
        expected_classes: usize,
        expected_width: usize,
    ) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, expected_classes, expected_width)
    }

    pub fn parse(
        text: &str,
        expected_classes: usize,
        expected_width: usize,
    ) -> Result<Self, LabelError> {
        let mut class_names = Vec::new();
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| LabelError::Parse {
                    line: idx + 1,
                    message: "empty line".into(),
                })?
                .to_string();
            let mut row = Vec::new();
            for token in parts {
                let v: f64 = token.parse().map_err(|_| LabelError::Parse {
                    line: idx + 1,
                    message: format!("bad float {token:?}"),
                })?;
                row.push(v);
            }
            if row.len() != expected_width {
                return Err(LabelError::WrongWidth {
                    name,
                    expected: expected_width,
                    found: row.len(),
                });
            }
            class_names.push(name);
            rows.push(row);
        }
        if class_names.len() != expected_classes {
            return Err(LabelError::WrongClassCount {
                expected: expected_classes,
                found: class_names.len(),
            });
        }
        check_unique(&class_names)?;
        Ok(LabelEmbeddings {
            class_names,
            values: Matrix::from_rows(&rows),
        })
    }

    /// Render in the same format `from_file` reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, name) in self.class_names.iter().enumerate() {
            out.push_str(name);
            for j in 0..self.values.cols() {
                let _ = write!(out, " {}", self.values.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

/// Default class names for synthetic data: class_00, class_01, ...
pub fn default_class_names(num_classes: usize) -> Vec<String> {
    (0..num_classes).map(|i| format!("class_{i:02}")).collect()
}

fn check_unique(names: &[String]) -> Result<(), LabelError> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(LabelError::DuplicateClassName(name.clone()));
        }
    }
    Ok(())
}
