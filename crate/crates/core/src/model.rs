use nalgebra::{DMatrix, DVector};

use crate::dict::Dictionary;
use crate::error::{KoopmanError, Result};

/// A finite Koopman matrix over a dictionary, acting as `Ψ(x_{t+1}) ≈ K Ψ(x_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    dict: Dictionary,
    matrix: DMatrix<f64>,
}

impl KoopmanModel {
    pub fn new(dict: Dictionary, matrix: DMatrix<f64>) -> Result<Self> {
        let n = dict.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(KoopmanError::DimensionMismatch {
                expected: n,
                actual: if matrix.nrows() != n {
                    matrix.nrows()
                } else {
                    matrix.ncols()
                },
            });
        }
        Ok(Self { dict, matrix })
    }

    pub fn zeros(dict: Dictionary) -> Self {
        let n = dict.len();
        Self {
            dict,
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(dict: Dictionary) -> Self {
        let n = dict.len();
        Self {
            dict,
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_parts(self) -> (Dictionary, DMatrix<f64>) {
        (self.dict, self.matrix)
    }

    /// `K Ψ(x)`.
    pub fn advance_observables(&self, x: &[f64]) -> Result<DVector<f64>> {
        let psi = DVector::from_vec(self.dict.evaluate(x)?);
        Ok(&self.matrix * psi)
    }

    /// One-step state prediction read off the coordinate entries of `K Ψ(x)`.
    pub fn predict_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        let next = self.advance_observables(x)?;
        Ok((0..self.dict.var_count())
            .map(|v| next[self.dict.variable_index(v)])
            .collect())
    }
}
