//! Real conic programs in the standard form
//!
//! ```text
//! minimize    c^T x
//! subject to  s = b - A x,  s in K = K_1 x ... x K_p
//! ```
//!
//! with `K_i` one of the zero cone, the nonnegative orthant, the
//! second-order cone or the cone of real PSD matrices stored as `svec`
//! (lower triangle, column major, off-diagonals scaled by `sqrt(2)`).

mod cones;
mod solver;

pub use cones::{project_cone, project_dual_cone, smat, svec, ConeError};
pub use solver::{solve, Solution, SolveStatus, SolverError, SolverSettings};

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `s = 0`.
    Zero(usize),
    /// `s >= 0`.
    NonNeg(usize),
    /// `s[0] >= ||s[1..]||`; the argument is the total length.
    Soc(usize),
    /// Real symmetric PSD block; the argument is the side length.
    Psd(usize),
}

impl Cone {
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::Soc(n) => n,
            Cone::Psd(n) => n * (n + 1) / 2,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::NonNeg(_) => "nonneg",
            Cone::Soc(_) => "soc",
            Cone::Psd(_) => "psd",
        }
    }

    fn size(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::Soc(n) | Cone::Psd(n) => n,
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        DenseMatrix { rows: rows.len(), cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = A x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// `out = A^T y`
    pub fn mul_t_vec(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Named contiguous range of variables, for decoding solutions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub c: Vec<f64>,
    /// Constant added to `c^T x` when reporting objectives.
    pub c_offset: f64,
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub var_names: Vec<VarBlock>,
    /// Label per cone block, same length as `cones`.
    pub cone_labels: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProgramError {
    #[error("cone rows {cone_rows} do not match constraint rows {rows}")]
    RowMismatch { cone_rows: usize, rows: usize },
    #[error("objective length {0} does not match {1} variables")]
    ObjectiveMismatch(usize, usize),
    #[error("constraint matrix has {0} columns but the program has {1} variables")]
    ColumnMismatch(usize, usize),
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
}

impl ConicProgram {
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let cone_rows: usize = self.cones.iter().map(Cone::rows).sum();
        if cone_rows != self.b.len() || self.a.rows != self.b.len() {
            return Err(ProgramError::RowMismatch { cone_rows, rows: self.a.rows });
        }
        if self.c.len() != self.num_vars {
            return Err(ProgramError::ObjectiveMismatch(self.c.len(), self.num_vars));
        }
        if self.a.cols != self.num_vars {
            return Err(ProgramError::ColumnMismatch(self.a.cols, self.num_vars));
        }
        if !self.c.iter().all(|v| v.is_finite()) {
            return Err(ProgramError::NonFinite("objective"));
        }
        if !self.b.iter().all(|v| v.is_finite()) || !self.a.data.iter().all(|v| v.is_finite()) {
            return Err(ProgramError::NonFinite("constraints"));
        }
        Ok(())
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.var_names.iter().find(|b| b.name == name)
    }

    /// Values of the named block in `x`.
    pub fn block_values<'a>(&self, name: &str, x: &'a [f64]) -> Option<&'a [f64]> {
        self.block(name).map(|b| &x[b.offset..b.offset + b.len])
    }

    /// `s = b - A x`.
    pub fn slack(&self, x: &[f64]) -> Vec<f64> {
        let mut ax = vec![0.0; self.num_rows()];
        self.a.mul_vec(x, &mut ax);
        self.b.iter().zip(&ax).map(|(b, a)| b - a).collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x) + self.c_offset
    }

    /// Plain-text summary: cone sizes, variable blocks and nonzero counts.
    /// Stable across runs so it can be diffed in regression tests.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conic-program v1");
        let _ = writeln!(out, "vars {}", self.num_vars);
        let _ = writeln!(out, "rows {}", self.num_rows());
        let _ = writeln!(out, "nnz_a {}", self.a.nnz());
        let _ = writeln!(out, "nnz_b {}", self.b.iter().filter(|v| **v != 0.0).count());
        let _ = writeln!(out, "nnz_c {}", self.c.iter().filter(|v| **v != 0.0).count());
        for blk in &self.var_names {
            let _ = writeln!(out, "var {} offset={} len={}", blk.name, blk.offset, blk.len);
        }
        let mut row = 0;
        for (cone, label) in self.cones.iter().zip(&self.cone_labels) {
            let rows = cone.rows();
            let nnz = (row..row + rows)
                .map(|i| self.a.row(i).iter().filter(|v| **v != 0.0).count())
                .sum::<usize>();
            let _ = writeln!(
                out,
                "cone {} size={} rows={} nnz={} label={}",
                cone.tag(),
                cone.size(),
                rows,
                nnz,
                label
            );
            row += rows;
        }
        out
    }
}
