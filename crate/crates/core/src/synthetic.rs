//! Planted-rank symmetric matrices for checking the selection criteria
//! against a known answer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `M = B diag(d) Bᵀ + σ E` where `B` is a random n×rank orthonormal basis,
/// `d` decays geometrically from `top` to `bottom`, `σ = noise · top`, and `E`
/// is a symmetric Gaussian matrix scaled to spectral norm ≈ 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedSpec {
    pub n: usize,
    pub rank: usize,
    pub top: f64,
    pub bottom: f64,
    /// Noise level relative to `top`.
    pub noise: f64,
}

impl PlantedSpec {
    pub fn planted_values(&self) -> Vec<f64> {
        if self.rank == 1 {
            return vec![self.top];
        }
        let ratio = (self.bottom / self.top).powf(1.0 / (self.rank - 1) as f64);
        (0..self.rank).map(|i| self.top * ratio.powi(i as i32)).collect()
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// n×k matrix with orthonormal columns, Haar-distributed up to signs.
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(k <= n, "cannot fit {k} orthonormal columns in dimension {n}");
    gaussian_matrix(n, k, rng).qr().q()
}

/// Symmetric Gaussian matrix whose spectrum fills roughly [-1, 1].
pub fn unit_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    // (G + Gᵀ)/√2 has off-diagonal variance 1, so its edge sits at 2√n.
    (&g + g.transpose()) / (std::f64::consts::SQRT_2 * 2.0 * (n as f64).sqrt())
}

pub fn planted_symmetric<R: Rng + ?Sized>(basis: &DMatrix<f64>, spec: &PlantedSpec, rng: &mut R) -> DMatrix<f64> {
    assert_eq!(basis.shape(), (spec.n, spec.rank));
    let d = DMatrix::from_diagonal(&DVector::from_vec(spec.planted_values()));
    let mut m = basis * d * basis.transpose();
    if spec.noise > 0.0 {
        m += unit_noise(spec.n, rng) * (spec.noise * spec.top);
    }
    // Exact symmetry regardless of rounding in the products above.
    let t = m.transpose();
    (m + t) * 0.5
}

/// Two matrices sharing one planted component with independent noise.
pub fn planted_pair(spec: &PlantedSpec, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = random_orthonormal(spec.n, spec.rank, &mut rng);
    let a = planted_symmetric(&basis, spec, &mut rng);
    let b = planted_symmetric(&basis, spec, &mut rng);
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_values_span_top_to_bottom() {
        let spec = PlantedSpec { n: 10, rank: 5, top: 8.0, bottom: 0.5, noise: 0.0 };
        let v = spec.planted_values();
        assert_eq!(v.len(), 5);
        assert!((v[0] - 8.0).abs() < 1e-12 && (v[4] - 0.5).abs() < 1e-12);
        assert!(v.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn noise_has_unit_scale_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = unit_noise(400, &mut rng);
        let eig = e.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!((0.9..1.15).contains(&top), "spectral norm {top}");
    }

    #[test]
    fn pair_is_symmetric_and_shares_signal() {
        let spec = PlantedSpec { n: 50, rank: 3, top: 1.0, bottom: 0.5, noise: 0.01 };
        let (a, b) = planted_pair(&spec, 4);
        assert_eq!(a, a.transpose());
        assert!((&a - &b).norm() < 0.1 * a.norm());
        assert_ne!(a, b);
    }
}
