//! Orthogonal Procrustes alignment between two embeddings of the same
//! vocabulary.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Procrustes {
    /// Orthogonal k×k map minimizing `‖AT − B‖_F`.
    pub rotation: DMatrix<f64>,
    /// `‖AT − B‖_F` at the optimum.
    pub residual: f64,
}

/// Solves `min_T ‖AT − B‖_F` over orthogonal `T`: with `AᵀB = UΣVᵀ`, `T = UVᵀ`.
pub fn orthogonal_procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Procrustes> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let svd = (a.transpose() * b).svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let rotation = u * v_t;
    let residual = (a * &rotation - b).norm();
    Ok(Procrustes { rotation, residual })
}
