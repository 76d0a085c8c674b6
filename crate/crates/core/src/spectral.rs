//! Truncated spectral decompositions of symmetric signal matrices and the
//! oracle matrices derived from them.
//!
//! For a symmetric `M = Q Λ Qᵀ` the SVD is `M = U D Vᵀ` with `U = Q` and
//! `D = |Λ|` after reordering by magnitude. Only `U` and `D` are retained.
//!
//! Small matrices (order at most [`SvdOptions::dense_threshold`]) are
//! decomposed exactly with a dense symmetric eigensolver. Larger ones use a
//! randomized range finder with power iterations, followed by an exact SVD
//! of the projected problem.

use std::io::{self, Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cooccurrence::{read_exact, read_u64, SignalMatrix};
use crate::error::{Error, Result};

/// Magic prefix of the spectrum cache format.
pub const SVD_MAGIC: &[u8; 8] = b"SVD00001";

/// A real symmetric matrix that can be multiplied against dense blocks.
pub trait SymmetricOperator: Sync {
    fn order(&self) -> usize;

    /// `self * block`
    fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64>;

    fn to_dense(&self) -> DMatrix<f64>;

    fn all_finite(&self) -> bool;
}

impl SymmetricOperator for SignalMatrix {
    fn order(&self) -> usize {
        self.n()
    }

    fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, width) = block.shape();
        assert_eq!(n, self.n(), "operator/block order mismatch");
        // Row-major copy so each output row is an axpy over contiguous rows.
        let rows = block.transpose();
        let src = rows.as_slice();
        let mut out = vec![0.0; n * width];
        out.par_chunks_mut(width.max(1)).enumerate().for_each(|(i, dst)| {
            for (j, v) in self.row(i) {
                let s = &src[j * width..(j + 1) * width];
                for (d, x) in dst.iter_mut().zip(s) {
                    *d += v * x;
                }
            }
        });
        DMatrix::from_row_slice(n, width, &out)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        SignalMatrix::to_dense(self)
    }

    fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn order(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        self * block
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SvdOptions {
    /// Extra test vectors beyond the requested rank.
    pub oversample: usize,
    /// Power iterations, each followed by re-orthonormalization.
    pub power_iters: usize,
    /// Orders up to this value are decomposed exactly.
    pub dense_threshold: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            oversample: 10,
            power_iters: 6,
            dense_threshold: 2000,
        }
    }
}

/// Top singular pairs of a symmetric matrix: `U` (n×r, orthonormal columns)
/// and `D` (descending, non-negative).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    u: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl SpectralDecomposition {
    /// Wraps precomputed factors, checking shapes, ordering and
    /// orthonormality (`‖UᵀU − I‖_F ≤ 1e-8`).
    pub fn new(u: DMatrix<f64>, singular_values: Vec<f64>) -> Result<Self> {
        if u.ncols() != singular_values.len() {
            return Err(Error::dim(format!(
                "U has {} columns but {} singular values were given",
                u.ncols(),
                singular_values.len()
            )));
        }
        if singular_values.iter().any(|d| !d.is_finite() || *d < 0.0) || u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("spectral factors".into()));
        }
        if singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::format("singular values not in descending order"));
        }
        let r = u.ncols();
        let defect = (u.transpose() * &u - DMatrix::<f64>::identity(r, r)).norm();
        if defect > 1e-8 {
            return Err(Error::format(format!("U columns not orthonormal (defect {defect:.3e})")));
        }
        Ok(SpectralDecomposition { u, singular_values })
    }

    /// Matrix order n.
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// Retained rank r.
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `SVD00001` layout: magic, u64 n, u64 r, D as f64[r], U row-major
    /// f64[n·r], little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(SVD_MAGIC)?;
        out.write_all(&(self.n() as u64).to_le_bytes())?;
        out.write_all(&(self.rank() as u64).to_le_bytes())?;
        for d in &self.singular_values {
            out.write_all(&d.to_le_bytes())?;
        }
        for i in 0..self.n() {
            for j in 0..self.rank() {
                out.write_all(&self.u[(i, j)].to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut input, &mut magic, "magic")?;
        if &magic != SVD_MAGIC {
            return Err(Error::format(format!(
                "bad spectrum magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let n = read_u64(&mut input, "order")? as usize;
        let r = read_u64(&mut input, "rank")? as usize;
        if r > n {
            return Err(Error::format(format!("rank {r} exceeds order {n}")));
        }
        let mut f = [0u8; 8];
        let mut d = Vec::with_capacity(r);
        for _ in 0..r {
            read_exact(&mut input, &mut f, "singular values")?;
            d.push(f64::from_le_bytes(f));
        }
        let mut u = DMatrix::zeros(n, r);
        for i in 0..n {
            for j in 0..r {
                read_exact(&mut input, &mut f, "singular vectors")?;
                u[(i, j)] = f64::from_le_bytes(f);
            }
        }
        Self::new(u, d)
    }
}

/// Top-`r` decomposition with default [`SvdOptions`].
pub fn truncated_svd<M: SymmetricOperator + ?Sized>(signal: &M, r: usize, seed: u64) -> Result<SpectralDecomposition> {
    truncated_svd_with(signal, r, seed, &SvdOptions::default())
}

pub fn truncated_svd_with<M: SymmetricOperator + ?Sized>(
    signal: &M,
    r: usize,
    seed: u64,
    options: &SvdOptions,
) -> Result<SpectralDecomposition> {
    let n = signal.order();
    if r == 0 {
        return Err(Error::dim("requested rank must be positive"));
    }
    if r > n {
        return Err(Error::dim(format!("requested rank {r} exceeds matrix order {n}")));
    }
    if !signal.all_finite() {
        return Err(Error::NonFinite("signal matrix".into()));
    }
    let (u, d) = if n <= options.dense_threshold {
        dense_svd(signal.to_dense(), r)
    } else {
        randomized_svd(signal, r, seed, options)
    };
    Ok(SpectralDecomposition {
        u,
        singular_values: d,
    })
}

fn dense_svd(m: DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>) {
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });
    order.truncate(r);
    let mut u = eig.eigenvectors.select_columns(&order);
    let d = order.iter().map(|&i| eig.eigenvalues[i].abs()).collect();
    fix_signs(&mut u);
    (u, d)
}

fn randomized_svd<M: SymmetricOperator + ?Sized>(
    signal: &M,
    r: usize,
    seed: u64,
    options: &SvdOptions,
) -> (DMatrix<f64>, Vec<f64>) {
    let n = signal.order();
    let width = (r + options.oversample).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(n, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(signal.apply(&omega));
    for _ in 0..options.power_iters {
        // M is symmetric, so Mᵀ Q = M Q.
        let z = orthonormalize(signal.apply(&q));
        q = orthonormalize(signal.apply(&z));
    }

    // B = Qᵀ M is width×n. Its transpose M Q = Q₂ R is tall, so with
    // R = W Σ Vᵀ the left singular vectors of B are the columns of V.
    let (_, r_factor) = thin_qr(signal.apply(&q));
    let svd = r_factor.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    order.truncate(r);
    let w = v_t.transpose().select_columns(&order);
    let mut u = &q * w;
    let d = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    fix_signs(&mut u);
    (u, d)
}

fn orthonormalize(block: DMatrix<f64>) -> DMatrix<f64> {
    thin_qr(block).0
}

/// Thin QR of a tall block. Cholesky QR applied twice is all matrix
/// products; Householder QR takes over when the block is too ill-conditioned
/// for it.
fn thin_qr(block: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let width = block.ncols();
    let twice = cholesky_qr(&block).and_then(|(q1, r1)| cholesky_qr(&q1).map(|(q2, r2)| (q2, r2 * r1)));
    if let Some((q, r)) = twice {
        let defect = (q.transpose() * &q - DMatrix::identity(width, width)).norm();
        if defect <= 1e-10 {
            return (q, r);
        }
    }
    let qr = block.qr();
    (qr.q(), qr.r())
}

fn cholesky_qr(y: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let gram = y.transpose() * y;
    let l = gram.cholesky()?.l();
    let width = l.nrows();
    let r_inv = l.transpose().solve_upper_triangular(&DMatrix::identity(width, width))?;
    if !r_inv.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((y * r_inv, l.transpose()))
}

/// Flips each column so its largest-magnitude entry is positive.
fn fix_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleParams {
    /// Exponent applied to the singular values, in [0, 1].
    pub alpha_exponent: f64,
    /// Number of leading components kept.
    pub k: usize,
}

impl OracleParams {
    pub fn new(alpha_exponent: f64, k: usize) -> Self {
        OracleParams { alpha_exponent, k }
    }
}

/// n×k stand-in for an embedding: `U[:, ..k] · diag(D[..k])^α`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleMatrix(DMatrix<f64>);

impl OracleMatrix {
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        OracleMatrix(values)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

impl std::ops::Deref for OracleMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl AsRef<DMatrix<f64>> for OracleMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn oracle_matrix(decomp: &SpectralDecomposition, params: &OracleParams) -> Result<OracleMatrix> {
    let k = params.k;
    if k == 0 || k > decomp.rank() {
        return Err(Error::dim(format!(
            "oracle dimension {k} outside 1..={} (retained rank)",
            decomp.rank()
        )));
    }
    if !(0.0..=1.0).contains(&params.alpha_exponent) {
        return Err(Error::param(format!(
            "alpha exponent {} outside [0, 1]",
            params.alpha_exponent
        )));
    }
    let scale = DVector::from_iterator(
        k,
        decomp.singular_values[..k].iter().map(|d| d.powf(params.alpha_exponent)),
    );
    let mut x = decomp.u.columns(0, k).into_owned();
    for (mut col, s) in x.column_iter_mut().zip(scale.iter()) {
        col *= *s;
    }
    Ok(OracleMatrix(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{planted_symmetric, random_orthonormal, PlantedSpec};
    use approx::assert_relative_eq;

    fn subspace_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a * a.transpose() - b * b.transpose()).norm()
    }

    #[test]
    fn diagonal_matrix() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let d = truncated_svd(&m, 2, 0).unwrap();
        assert_eq!(d.singular_values(), &[4.0, 1.0]);
        assert_relative_eq!(d.u().clone(), DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn negative_eigenvalues_become_singular_values() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let d = truncated_svd(&m, 2, 0).unwrap();
        assert_relative_eq!(d.singular_values()[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(d.singular_values()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_one_spectrum() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let m = &v * v.transpose();
        let d = truncated_svd(&m, 4, 0).unwrap();
        assert_relative_eq!(d.singular_values()[0], v.norm_squared(), max_relative = 1e-12);
        for &s in &d.singular_values()[1..] {
            assert!(s.abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_rank_and_non_finite() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(truncated_svd(&m, 4, 0), Err(Error::Dimension(_))));
        assert!(matches!(truncated_svd(&m, 0, 0), Err(Error::Dimension(_))));
        let mut bad = m.clone();
        bad[(1, 1)] = f64::NAN;
        assert!(matches!(truncated_svd(&bad, 1, 0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let d = truncated_svd(&m, 2, 0).unwrap();
        for col in d.u().column_iter() {
            let max = col.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn randomized_matches_dense_on_sparse_matrix() {
        use rand::Rng;
        let n = 500;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut m = DMatrix::<f64>::zeros(n, n);
        for _ in 0..6000 {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let v: f64 = rng.gen_range(0.0..1.0);
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        // Ten dominant sparse rank-one terms so the leading values are separated.
        for t in 0..10 {
            let support: Vec<usize> = (0..25).map(|_| rng.gen_range(0..n)).collect();
            let weight = 60.0 * 0.8f64.powi(t);
            for &i in &support {
                for &j in &support {
                    m[(i, j)] += weight / 25.0;
                }
            }
        }
        let exact = truncated_svd_with(&m, 50, 1, &SvdOptions::default()).unwrap();
        let approx = truncated_svd_with(&m, 50, 1, &SvdOptions { dense_threshold: 0, ..Default::default() }).unwrap();
        let pairs = exact.singular_values().iter().zip(approx.singular_values());
        for (i, (a, b)) in pairs.enumerate() {
            let tol = if i < 10 { 1e-6 } else { 5e-2 };
            assert_relative_eq!(*a, *b, max_relative = tol);
        }
    }

    #[test]
    fn randomized_recovers_subspace_with_spectral_gap() {
        let spec = PlantedSpec {
            n: 400,
            rank: 20,
            top: 10.0,
            bottom: 2.0,
            noise: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = random_orthonormal(spec.n, spec.rank, &mut rng);
        let m = planted_symmetric(&basis, &spec, &mut rng);
        let exact = truncated_svd(&m, 20, 0).unwrap();
        let approx = truncated_svd_with(&m, 20, 9, &SvdOptions { dense_threshold: 0, ..Default::default() }).unwrap();
        let pairs = exact.singular_values().iter().zip(approx.singular_values());
        for (i, (a, b)) in pairs.enumerate() {
            let tol = if i < 10 { 1e-6 } else { 1e-2 };
            assert_relative_eq!(*a, *b, max_relative = tol);
        }
        assert!(subspace_gap(exact.u(), approx.u()) < 1e-4);
        assert!((approx.u().tr_mul(approx.u()) - DMatrix::identity(20, 20)).norm() <= 1e-8);
    }

    #[test]
    fn randomized_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = random_orthonormal(120, 8, &mut rng);
        let spec = PlantedSpec { n: 120, rank: 8, top: 5.0, bottom: 1.0, noise: 0.05 };
        let m = planted_symmetric(&basis, &spec, &mut rng);
        let opts = SvdOptions { dense_threshold: 0, ..Default::default() };
        let a = truncated_svd_with(&m, 6, 77, &opts).unwrap();
        let b = truncated_svd_with(&m, 6, 77, &opts).unwrap();
        assert!(a.singular_values().iter().zip(b.singular_values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.u(), b.u());
    }

    #[test]
    fn oracle_examples() {
        let d = SpectralDecomposition::new(DMatrix::identity(2, 2), vec![4.0, 1.0]).unwrap();
        let x = oracle_matrix(&d, &OracleParams::new(0.5, 1)).unwrap();
        assert_eq!(x.as_matrix(), &DMatrix::from_column_slice(2, 1, &[2.0, 0.0]));
        let x0 = oracle_matrix(&d, &OracleParams::new(0.0, 2)).unwrap();
        assert_eq!(x0.as_matrix(), d.u());
        assert!(matches!(oracle_matrix(&d, &OracleParams::new(0.5, 3)), Err(Error::Dimension(_))));
        assert!(matches!(oracle_matrix(&d, &OracleParams::new(1.5, 1)), Err(Error::Parameter(_))));
    }

    #[test]
    fn oracle_column_norms_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let basis = random_orthonormal(60, 10, &mut rng);
        let spec = PlantedSpec { n: 60, rank: 10, top: 9.0, bottom: 1.0, noise: 0.0 };
        let m = planted_symmetric(&basis, &spec, &mut rng);
        let d = truncated_svd(&m, 10, 0).unwrap();
        for alpha in [0.0, 0.25, 0.5, 1.0] {
            let x = oracle_matrix(&d, &OracleParams::new(alpha, 10)).unwrap();
            for (i, col) in x.column_iter().enumerate() {
                assert_relative_eq!(col.norm(), d.singular_values()[i].powf(alpha), max_relative = 1e-8);
            }
        }
        let x = oracle_matrix(&d, &OracleParams::new(1.0, 10)).unwrap();
        let d2 = DMatrix::from_diagonal(&DVector::from_iterator(10, d.singular_values().iter().map(|s| s * s)));
        let expect = d.u() * d2 * d.u().transpose();
        assert_relative_eq!(x.as_matrix() * x.transpose(), expect, epsilon = 1e-9);
    }

    #[test]
    fn spectrum_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = random_orthonormal(30, 4, &mut rng);
        let d = SpectralDecomposition::new(basis, vec![3.0, 2.0, 1.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], SVD_MAGIC);
        assert_eq!(buf.len(), 24 + 8 * 4 + 8 * 30 * 4);
        assert_eq!(SpectralDecomposition::read_binary(&buf[..]).unwrap(), d);
        assert!(SpectralDecomposition::read_binary(&buf[..40]).is_err());
    }
}
