//! Dense row-major matrices over any scalar.

use std::fmt;

use crate::literal::{self, LiteralError};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeError {
    pub op: &'static str,
    pub left: (usize, usize),
    pub right: (usize, usize),
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "shape mismatch in {}: {}x{} vs {}x{}",
            self.op, self.left.0, self.left.1, self.right.0, self.right.1
        )
    }
}

impl std::error::Error for ShapeError {}

impl<T: Clone> Matrix<T> {
    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Matrix { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    /// Copies `src` into this matrix with its top-left corner at `(r, c)`.
    pub fn put_block(&mut self, r: usize, c: usize, src: &Matrix<T>) {
        for i in 0..src.rows {
            for j in 0..src.cols {
                self.set(r + i, c + j, src.get(i, j).clone());
            }
        }
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize, ctx: T::Ctx) -> Self {
        Matrix::filled(rows, cols, T::zero_with(ctx))
    }

    pub fn identity(n: usize, ctx: T::Ctx) -> Self {
        let mut m = Self::zeros(n, n, ctx);
        for i in 0..n {
            m.set(i, i, T::one_with(ctx));
        }
        m
    }

    /// Product that skips zero entries of either factor.
    pub fn matmul(&self, o: &Matrix<T>, ctx: T::Ctx) -> Result<Matrix<T>, ShapeError> {
        if self.cols != o.rows {
            return Err(ShapeError { op: "matmul", left: self.shape(), right: o.shape() });
        }
        let mut out = Self::zeros(self.rows, o.cols, ctx);
        let mut touched = vec![false; o.cols];
        for i in 0..self.rows {
            touched.iter_mut().for_each(|t| *t = false);
            for t in 0..self.cols {
                let a = self.get(i, t);
                if a.is_zero_value() {
                    continue;
                }
                for j in 0..o.cols {
                    let b = o.get(t, j);
                    if b.is_zero_value() {
                        continue;
                    }
                    let p = a.mul(b);
                    let k = i * o.cols + j;
                    out.data[k] = if touched[j] { out.data[k].add(&p) } else { p };
                    touched[j] = true;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, o: &Matrix<T>) -> Result<Matrix<T>, ShapeError> {
        if self.shape() != o.shape() {
            return Err(ShapeError { op: "add", left: self.shape(), right: o.shape() });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn scale(&self, c: &T) -> Matrix<T> {
        self.map(|v| v.mul(c))
    }

    /// Copy with extra zero columns appended up to `cols`.
    pub fn pad_cols(&self, cols: usize, ctx: T::Ctx) -> Matrix<T> {
        let mut m = Self::zeros(self.rows, cols.max(self.cols), ctx);
        m.put_block(0, 0, self);
        m
    }

    /// `max |a - b|` over entries, as f64.
    pub fn max_abs_diff(&self, o: &Matrix<T>) -> f64 {
        assert_eq!(self.shape(), o.shape());
        self.data.iter().zip(&o.data).map(|(a, b)| a.sub(b).magnitude().to_f64()).fold(0.0, f64::max)
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        Ok(())
    }
}

/// Errors from the `mat` text format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatrixTextError {
    Syntax { line: usize, msg: String },
    Literal { line: usize, err: LiteralError },
}

impl fmt::Display for MatrixTextError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixTextError::Syntax { line, msg } => write!(f, "line {line}: {msg}"),
            MatrixTextError::Literal { line, err } => write!(f, "line {line}: {err}"),
        }
    }
}

impl std::error::Error for MatrixTextError {}

/// Writes `mat <rows> <cols>` followed by one line per row.
pub fn write_matrix(m: &Matrix<String>, out: &mut String) {
    out.push_str(&format!("mat {} {}\n", m.rows, m.cols));
    for i in 0..m.rows {
        out.push_str(&m.row(i).join(" "));
        out.push('\n');
    }
}

/// Reads one `mat` block from a line iterator of `(line_no, text)` pairs, comments stripped.
pub fn read_matrix<'a, I>(lines: &mut I) -> Result<Matrix<String>, MatrixTextError>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (ln, header) = lines
        .next()
        .ok_or(MatrixTextError::Syntax { line: 0, msg: "expected `mat` header".into() })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let (r, c) = match toks.as_slice() {
        ["mat", r, c] => match (r.parse::<usize>(), c.parse::<usize>()) {
            (Ok(r), Ok(c)) => (r, c),
            _ => return Err(MatrixTextError::Syntax { line: ln, msg: "bad matrix shape".into() }),
        },
        _ => return Err(MatrixTextError::Syntax { line: ln, msg: "expected `mat <rows> <cols>`".into() }),
    };
    let mut data = Vec::with_capacity(r * c);
    for _ in 0..r {
        let (ln, text) =
            lines.next().ok_or(MatrixTextError::Syntax { line: ln, msg: "missing matrix row".into() })?;
        let row: Vec<&str> = text.split_whitespace().collect();
        if row.len() != c {
            return Err(MatrixTextError::Syntax { line: ln, msg: format!("expected {c} entries, got {}", row.len()) });
        }
        for t in row {
            literal::parse_rational(t).map_err(|err| MatrixTextError::Literal { line: ln, err })?;
            data.push(t.to_string());
        }
    }
    Ok(Matrix::from_vec(r, c, data))
}

/// Non-empty lines with `#` comments removed, numbered from 1.
pub fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            None
        } else {
            Some((i + 1, l))
        }
    })
}

pub fn parse_matrix_entries<T: Scalar>(m: &Matrix<String>, ctx: T::Ctx) -> Matrix<T> {
    m.map(|s| T::parse_literal(s, ctx).expect("entries validated on read"))
}
