//! Samples, splits and CSV ingestion.
//!
//! A [`Dataset`] is an ordered list of labeled points of one dimension. The
//! same type serves regression (real targets) and classification (targets
//! validated to exactly `-1.0` or `+1.0` on construction).

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in d-dimensional feature space with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("point must have at least one coordinate"));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {c}")));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Point,
    pub y: f64,
}

impl LabeledExample {
    pub fn new(x: Point, y: f64) -> Self {
        LabeledExample { x, y }
    }
}

/// A nonempty, dimension-consistent sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    task: Task,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, task: Task) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::invalid("dataset is empty"))?;
        let dim = first.x.dim();
        for ex in &examples {
            if ex.x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ex.x.dim(),
                });
            }
            check_label(ex.y, task)?;
        }
        Ok(Dataset { examples, task })
    }

    /// Builds a dataset from parallel lists of coordinates and labels.
    pub fn from_parts(points: Vec<Vec<f64>>, labels: Vec<f64>, task: Task) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: labels.len(),
            });
        }
        let examples = points
            .into_iter()
            .zip(labels)
            .map(|(x, y)| Ok(LabeledExample::new(Point::new(x)?, y)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(examples, task)
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.examples[0].x.dim()
    }

    pub fn points(&self) -> Vec<Point> {
        self.examples.iter().map(|e| e.x.clone()).collect()
    }

    pub fn labels(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.examples.iter().map(|e| e.y))
    }

    /// Same points with new labels. Used to probe label invariance.
    pub fn with_labels(&self, labels: &[f64]) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        let examples = self
            .examples
            .iter()
            .zip(labels)
            .map(|(e, &y)| LabeledExample::new(e.x.clone(), y))
            .collect();
        Dataset::new(examples, self.task)
    }

    /// `self` followed by `other`: the combined sample S = S_in ∪ S_out
    /// with in-sample indices first.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.task != other.task {
            return Err(Error::invalid("cannot combine datasets of different tasks"));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let mut examples = self.examples.clone();
        examples.extend(other.examples.iter().cloned());
        Ok(Dataset {
            examples,
            task: self.task,
        })
    }

    /// The dataset with example `index` removed, or `None` if that would
    /// leave it empty.
    pub fn without(&self, index: usize) -> Option<Self> {
        if self.len() <= 1 || index >= self.len() {
            return None;
        }
        let mut examples = self.examples.clone();
        examples.remove(index);
        Some(Dataset {
            examples,
            task: self.task,
        })
    }
}

fn check_label(y: f64, task: Task) -> Result<()> {
    if !y.is_finite() {
        return Err(Error::invalid(format!("non-finite label {y}")));
    }
    if task == Task::Classification && y != 1.0 && y != -1.0 {
        return Err(Error::invalid(format!(
            "classification label {y} is not -1 or +1"
        )));
    }
    Ok(())
}

/// In-sample / out-of-sample pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    pub s_in: Dataset,
    pub s_out: Dataset,
}

impl SplitPair {
    pub fn new(s_in: Dataset, s_out: Dataset) -> Result<Self> {
        if s_in.task() != s_out.task() {
            return Err(Error::invalid("split halves have different tasks"));
        }
        if s_in.dim() != s_out.dim() {
            return Err(Error::DimensionMismatch {
                expected: s_in.dim(),
                found: s_out.dim(),
            });
        }
        Ok(SplitPair { s_in, s_out })
    }

    /// S = S_in ∪ S_out, in-sample examples first.
    pub fn combined(&self) -> Dataset {
        // Both halves were validated against each other on construction.
        self.s_in
            .concat(&self.s_out)
            .expect("split halves share task and dimension")
    }
}

/// Partitions `d` into the examples at `in_indices` and the rest, both in
/// original order. Duplicate indices are ignored.
pub fn split_by_indices(d: &Dataset, in_indices: &[usize]) -> Result<SplitPair> {
    let chosen: BTreeSet<usize> = in_indices.iter().copied().collect();
    if chosen.is_empty() {
        return Err(Error::invalid("in-sample index set is empty"));
    }
    if let Some(&bad) = chosen.iter().find(|&&i| i >= d.len()) {
        return Err(Error::invalid(format!(
            "index {bad} out of range for dataset of {} examples",
            d.len()
        )));
    }
    if chosen.len() == d.len() {
        return Err(Error::invalid("out-of-sample complement is empty"));
    }
    let (inside, outside): (Vec<_>, Vec<_>) = d
        .examples()
        .iter()
        .enumerate()
        .partition(|(i, _)| chosen.contains(i));
    let strip = |v: Vec<(usize, &LabeledExample)>| v.into_iter().map(|(_, e)| e.clone()).collect();
    SplitPair::new(
        Dataset::new(strip(inside), d.task())?,
        Dataset::new(strip(outside), d.task())?,
    )
}

/// Reads a dataset: each row holds the feature columns followed by a single
/// label column. Row numbers in errors are 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, task: Task, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, task, has_header).map_err(|e| match e {
        Error::Csv { row, message, .. } => Error::Csv {
            path: path.to_path_buf(),
            row,
            message,
        },
        other => other,
    })
}

/// [`load_csv`] over any reader; errors carry an empty path.
pub fn read_csv<R: Read>(reader: R, task: Task, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut examples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(row, e.to_string())
        })?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() < 2 {
            return Err(csv_error(row, "expected at least one feature and a label"));
        }
        let values = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| csv_error(row, format!("cannot parse {field:?} as a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (label, coords) = values.split_last().expect("record has at least two fields");
        check_label(*label, task).map_err(|e| csv_error(row, e.to_string()))?;
        let x = Point::new(coords.to_vec()).map_err(|e| csv_error(row, e.to_string()))?;
        examples.push(LabeledExample::new(x, *label));
    }
    Dataset::new(examples, task)
}

fn csv_error(row: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        path: Default::default(),
        row,
        message: message.into(),
    }
}

/// Writes `d` in the layout accepted by [`load_csv`] (no header).
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    write_rows(d, &mut file).map_err(io_err)?;
    file.flush().map_err(io_err)
}

fn write_rows<W: Write>(d: &Dataset, out: &mut W) -> std::io::Result<()> {
    for ex in d.examples() {
        let mut fields: Vec<String> = ex.x.coords().iter().map(|c| format!("{c:?}")).collect();
        fields.push(format!("{:?}", ex.y));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
