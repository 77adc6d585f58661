//! Standard-form semidefinite programming with an embedded primal-dual
//! interior-point solver and SDPA sparse-format interchange.
//!
//! The problem solved is
//! ```text
//! minimize    sum_b <C_b, X_b> + c_f' u
//! subject to  sum_b <A_{i,b}, X_b> + B_i' u = b_i,   i = 1..m
//!             X_b >= 0 (PSD per block),  u free
//! ```
//! Blocks are either dense PSD blocks or diagonal (linear-cone) blocks.
//! Free variables are handled natively by the solver; they are split into
//! differences of nonnegatives only on SDPA export.

mod sdpa;
mod solver;

#[cfg(test)]
mod tests;

pub use sdpa::{export_sdpa, format_sdpa, import_solution, parse_sdpa, SdpaParseError};
pub use solver::{solve, SolveOptions};

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("matrix data not symmetric within 1e-12 in block {0}")]
    NotSymmetric(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] SdpaParseError),
}

/// A cone block: dense PSD or diagonal (componentwise nonnegative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Block {
    Psd(usize),
    Diag(usize),
}

impl Block {
    pub fn dim(self) -> usize {
        match self {
            Block::Psd(n) | Block::Diag(n) => n,
        }
    }
}

/// Sparse symmetric matrix entries for one block of one constraint or of the
/// objective: `(row, col, value)` with `row <= col`; the value applies to both
/// symmetric positions.
pub type SymEntries = Vec<(usize, usize, f64)>;

/// One equality row: per-block sparse symmetric data plus free-variable
/// coefficients.
#[derive(Debug, Clone, Default)]
pub struct RowData {
    /// `(block index, entries)` for blocks with nonzero data.
    pub blocks: Vec<(usize, SymEntries)>,
    /// `(free variable index, coefficient)`.
    pub free: Vec<(usize, f64)>,
}

/// An SDP in standard primal form with an optional free-variable component.
#[derive(Debug, Clone)]
pub struct SdpStandardForm {
    pub blocks: Vec<Block>,
    pub free_dim: usize,
    /// Objective per block (sparse symmetric entries).
    pub c_blocks: Vec<SymEntries>,
    /// Objective on free variables.
    pub c_free: Vec<f64>,
    /// Constant added to the reported objective value.
    pub obj_const: f64,
    pub rows: Vec<RowData>,
    pub b: Vec<f64>,
}

impl SdpStandardForm {
    pub fn new(blocks: Vec<Block>, free_dim: usize) -> Self {
        let nb = blocks.len();
        SdpStandardForm {
            blocks,
            free_dim,
            c_blocks: vec![Vec::new(); nb],
            c_free: vec![0.0; free_dim],
            obj_const: 0.0,
            rows: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, row: RowData, rhs: f64) {
        self.rows.push(row);
        self.b.push(rhs);
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.c_blocks.len() != self.blocks.len() {
            return Err(SdpError::Dimension("c_blocks vs blocks".into()));
        }
        if self.c_free.len() != self.free_dim {
            return Err(SdpError::Dimension("c_free vs free_dim".into()));
        }
        if self.rows.len() != self.b.len() {
            return Err(SdpError::Dimension("rows vs b".into()));
        }
        for row in &self.rows {
            for &(bi, ref entries) in &row.blocks {
                let dim = self
                    .blocks
                    .get(bi)
                    .ok_or_else(|| SdpError::Dimension(format!("block {bi}")))?
                    .dim();
                for &(r, c, _) in entries {
                    if r > c || c >= dim {
                        return Err(SdpError::Dimension(format!(
                            "entry ({r},{c}) in block {bi} of dim {dim}"
                        )));
                    }
                    if matches!(self.blocks[bi], Block::Diag(_)) && r != c {
                        return Err(SdpError::Dimension(format!(
                            "off-diagonal entry in diagonal block {bi}"
                        )));
                    }
                }
            }
            for &(fi, _) in &row.free {
                if fi >= self.free_dim {
                    return Err(SdpError::Dimension(format!("free index {fi}")));
                }
            }
        }
        Ok(())
    }

    /// Dense symmetric matrix of one block of one row (test/diagnostic use).
    pub fn row_block_dense(&self, row: usize, block: usize) -> Array2<f64> {
        let dim = self.blocks[block].dim();
        let mut out = Array2::zeros((dim, dim));
        if let Some((_, entries)) = self.rows[row].blocks.iter().find(|&&(bi, _)| bi == block)
        {
            for &(r, c, v) in entries {
                out[(r, c)] = v;
                out[(c, r)] = v;
            }
        }
        out
    }
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SdpStatus {
    Optimal,
    /// Converged to relaxed tolerances after the interior-point iteration
    /// stopped making progress; the iterate is usable but its KKT residuals
    /// are looser than the target tolerances.
    NearOptimal,
    Infeasible,
    DualInfeasible,
    MaxIter,
    NumericalTrouble,
}

/// Primal-dual solution with KKT residuals.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal matrix per block (diagonal blocks stored as dense diagonal).
    pub x_blocks: Vec<Array2<f64>>,
    /// Free-variable values.
    pub x_free: Array1<f64>,
    /// Dual vector for the equality constraints.
    pub y: Array1<f64>,
    /// Dual slack per block.
    pub s_blocks: Vec<Array2<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    /// Scaled duality gap.
    pub gap: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iterations: usize,
}
