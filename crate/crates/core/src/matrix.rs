//! Dense row-major matrices and the validated wrappers built on top of them.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row sum tolerance for a [`ProbMatrix`] built in memory.
pub const ROW_SUM_TOL: f64 = 1e-5;

/// Row sum tolerance applied when probabilities come from an export file.
pub const LOAD_ROW_SUM_TOL: f64 = 1e-4;

/// Plain dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let expected = rows.checked_mul(cols).ok_or(Error::Config(
            alloc::format!("matrix shape {rows}x{cols} overflows"),
        ))?;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "matrix data length",
                expected,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: alloc::vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    what: "row length",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on 0
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { what, index }),
            None => Ok(()),
        }
    }
}

impl AsRef<Matrix> for Matrix {
    fn as_ref(&self) -> &Matrix {
        self
    }
}

/// N x K matrix of per-sample class probabilities for one model.
///
/// Every row lies in `[0, 1]` and sums to one within [`ROW_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix(Matrix);

impl ProbMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_matrix(Matrix::new(rows, cols, data)?)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(rows)?)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        check_shape(&m)?;
        check_entries(&m)?;
        for (i, row) in m.iter_rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::RowSum { row: i, sum });
            }
        }
        Ok(Self(m))
    }

    /// Validates rows against `tol` and then rescales each row to sum to one.
    ///
    /// Used for exported probabilities whose rows carry float32 round-off.
    pub fn from_loaded(m: Matrix, tol: f64) -> Result<Self> {
        check_shape(&m)?;
        check_entries(&m)?;
        let mut m = m;
        for i in 0..m.rows() {
            let row = m.row_mut(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::RowSum { row: i, sum });
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(Self(m))
    }

    /// Keeps only the listed class columns and renormalizes every row.
    ///
    /// For probabilities produced by a softmax this equals the softmax taken
    /// over the reduced class set. Rows with no mass left become uniform.
    pub fn restrict_classes(&self, classes: &[usize]) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::ShapeMismatch {
                what: "restricted class count (minimum)",
                expected: 2,
                found: classes.len(),
            });
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= self.cols()) {
            return Err(Error::LabelOutOfRange {
                index: 0,
                label: bad,
                num_classes: self.cols(),
            });
        }
        let k = classes.len();
        let mut data = Vec::with_capacity(self.rows() * k);
        let mut row_buf = alloc::vec![0.0; k];
        for row in self.0.iter_rows() {
            for (dst, &c) in row_buf.iter_mut().zip(classes) {
                *dst = row[c];
            }
            let sum: f64 = row_buf.iter().sum();
            if sum > 0.0 {
                data.extend(row_buf.iter().map(|v| v / sum));
            } else {
                data.extend(core::iter::repeat_n(1.0 / k as f64, k));
            }
        }
        Ok(Self(Matrix::new(self.rows(), k, data)?))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("probability matrix row selection"));
        }
        Ok(Self(self.0.select_rows(indices)))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

impl AsRef<Matrix> for ProbMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

fn check_shape(m: &Matrix) -> Result<()> {
    if m.rows() == 0 {
        return Err(Error::Empty("probability matrix"));
    }
    if m.cols() < 2 {
        return Err(Error::ShapeMismatch {
            what: "class count (minimum)",
            expected: 2,
            found: m.cols(),
        });
    }
    Ok(())
}

fn check_entries(m: &Matrix) -> Result<()> {
    m.ensure_finite("probability matrix")?;
    for (i, row) in m.iter_rows().enumerate() {
        if let Some((j, &v)) = row.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ProbabilityOutOfRange {
                row: i,
                col: j,
                value: v,
            });
        }
    }
    Ok(())
}

/// Unnormalized fused class scores. Only the per-row argmax is meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(Matrix);

impl ScoreMatrix {
    pub fn new(m: Matrix) -> Self {
        Self(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Copy with every row divided by its sum. Display only; argmax is unchanged.
    pub fn normalized(&self) -> Matrix {
        let mut m = self.0.clone();
        for i in 0..m.rows() {
            let row = m.row_mut(i);
            let sum: f64 = row.iter().sum();
            if sum != 0.0 {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        m
    }
}

impl AsRef<Matrix> for ScoreMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// N x d image features of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        m.ensure_finite("feature matrix")?;
        Ok(Self(m))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self(self.0.select_rows(indices))
    }
}

/// K x d text embeddings, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddings(Matrix);

impl ClassEmbeddings {
    pub fn new(m: Matrix) -> Result<Self> {
        m.ensure_finite("class embeddings")?;
        Ok(Self(m))
    }

    pub fn num_classes(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Ground-truth labels; each value is in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    values: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(values: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((index, &label)) = values.iter().enumerate().find(|(_, &v)| v >= num_classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        Ok(Self {
            values,
            num_classes,
        })
    }

    #[inline]
    pub fn values(&self) -> &[usize] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: indices.iter().map(|&i| self.values[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}
