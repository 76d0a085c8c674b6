//! Post-processing functions applied to oracle matrices: all-but-the-top
//! (ABTT) and conceptor negation (CN).
//!
//! Both methods are affine in the rows of their input once fitted:
//! `Y = (X − 1μᵀ) T` for ABTT and `Y = X T` for CN, with `T` a k×k matrix
//! computed from `XᵀX` and the column sums of `X`. [`PostTransform`] exposes
//! that form so Gram matrices of post-processed embeddings can be obtained
//! without materializing `Y`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostprocMethod {
    Abtt,
    #[default]
    Cn,
    Identity,
}

impl std::str::FromStr for PostprocMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abtt" => Ok(PostprocMethod::Abtt),
            "cn" => Ok(PostprocMethod::Cn),
            "identity" => Ok(PostprocMethod::Identity),
            other => Err(Error::param(format!("unknown post-processing method {other:?}"))),
        }
    }
}

/// How many principal components ABTT removes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AbttComponents {
    /// max(1, round(k / 100))
    #[default]
    Auto,
    Fixed(usize),
}

impl AbttComponents {
    pub fn resolve(self, k: usize) -> usize {
        match self {
            AbttComponents::Auto => ((k as f64 / 100.0).round() as usize).max(1),
            AbttComponents::Fixed(d) => d,
        }
    }
}

impl Serialize for AbttComponents {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AbttComponents::Auto => s.serialize_str("auto"),
            AbttComponents::Fixed(d) => s.serialize_u64(*d as u64),
        }
    }
}

impl<'de> Deserialize<'de> for AbttComponents {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(AbttComponents::Fixed(n)),
            Raw::Text(t) if t == "auto" => Ok(AbttComponents::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad abtt_components {t:?}"))),
        }
    }
}

impl std::str::FromStr for AbttComponents {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(AbttComponents::Auto);
        }
        match s.parse::<usize>() {
            Ok(d) if d > 0 => Ok(AbttComponents::Fixed(d)),
            _ => Err(Error::param(format!("abtt components must be `auto` or a positive integer, got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostprocConfig {
    pub method: PostprocMethod,
    pub abtt_components: AbttComponents,
    pub cn_aperture: f64,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        PostprocConfig {
            method: PostprocMethod::Cn,
            abtt_components: AbttComponents::Auto,
            cn_aperture: 2.0,
        }
    }
}

impl PostprocConfig {
    pub fn identity() -> Self {
        PostprocConfig {
            method: PostprocMethod::Identity,
            ..Default::default()
        }
    }

    pub fn abtt(components: AbttComponents) -> Self {
        PostprocConfig {
            method: PostprocMethod::Abtt,
            abtt_components: components,
            ..Default::default()
        }
    }

    pub fn cn(aperture: f64) -> Self {
        PostprocConfig {
            method: PostprocMethod::Cn,
            cn_aperture: aperture,
            ..Default::default()
        }
    }
}

/// A fitted post-processing map `Y = (X − 1μᵀ) T`.
#[derive(Clone, Debug, PartialEq)]
pub struct PostTransform {
    /// Row mean μ subtracted before `T`, if the method centers.
    mean: Option<DVector<f64>>,
    /// `None` stands for the identity.
    linear: Option<DMatrix<f64>>,
}

impl PostTransform {
    pub fn identity() -> Self {
        PostTransform {
            mean: None,
            linear: None,
        }
    }

    /// Fits the transform for `x` directly.
    pub fn fit(config: &PostprocConfig, x: &DMatrix<f64>) -> Result<Self> {
        check_finite(x)?;
        let (n, k) = x.shape();
        match config.method {
            PostprocMethod::Identity => Ok(Self::identity()),
            PostprocMethod::Cn => {
                check_aperture(config.cn_aperture)?;
                let gram = x.transpose() * x;
                Ok(PostTransform {
                    mean: None,
                    linear: Some(conceptor_complement(&gram, n, config.cn_aperture)?),
                })
            }
            PostprocMethod::Abtt => {
                let d = config.abtt_components.resolve(k);
                check_abtt(n, k, d)?;
                let mean = column_mean(x);
                let mut centered = x.clone();
                for mut row in centered.row_iter_mut() {
                    row -= mean.transpose();
                }
                let linear = abtt_projector(&(centered.transpose() * &centered), d);
                Ok(PostTransform {
                    mean: Some(mean),
                    linear: Some(linear),
                })
            }
        }
    }

    /// Fits the transform from `XᵀX`, the column sums `Xᵀ1`, and the row
    /// count, without access to `X`.
    pub fn fit_from_gram(config: &PostprocConfig, gram: &DMatrix<f64>, col_sum: &DVector<f64>, n: usize) -> Result<Self> {
        let k = gram.nrows();
        if gram.ncols() != k || col_sum.len() != k {
            return Err(Error::dim("gram / column-sum shapes disagree"));
        }
        if gram.iter().chain(col_sum.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gram matrix".into()));
        }
        match config.method {
            PostprocMethod::Identity => Ok(Self::identity()),
            PostprocMethod::Cn => {
                check_aperture(config.cn_aperture)?;
                Ok(PostTransform {
                    mean: None,
                    linear: Some(conceptor_complement(gram, n, config.cn_aperture)?),
                })
            }
            PostprocMethod::Abtt => {
                let d = config.abtt_components.resolve(k);
                check_abtt(n, k, d)?;
                let centered = gram - col_sum * col_sum.transpose() / n as f64;
                Ok(PostTransform {
                    mean: Some(col_sum / n as f64),
                    linear: Some(abtt_projector(&centered, d)),
                })
            }
        }
    }

    pub fn centers(&self) -> bool {
        self.mean.is_some()
    }

    pub fn linear(&self) -> Option<&DMatrix<f64>> {
        self.linear.as_ref()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let centered = match &self.mean {
            Some(mean) => {
                let mut c = x.clone();
                for mut row in c.row_iter_mut() {
                    row -= mean.transpose();
                }
                c
            }
            None => x.clone(),
        };
        match &self.linear {
            Some(t) => centered * t,
            None => centered,
        }
    }

    /// `YᵀŶ` for `Y = self(X)`, `Ŷ = other(X̂)` given `XᵀX̂` and the column
    /// sums of both inputs. Both transforms must agree on centering.
    pub fn cross_gram(
        &self,
        other: &PostTransform,
        cross: &DMatrix<f64>,
        sum_self: &DVector<f64>,
        sum_other: &DVector<f64>,
        n: usize,
    ) -> Result<DMatrix<f64>> {
        if self.centers() != other.centers() {
            return Err(Error::param("cannot mix centered and uncentered transforms"));
        }
        let mut inner = cross.clone();
        if self.centers() {
            inner -= sum_self * sum_other.transpose() / n as f64;
        }
        let left = match &self.linear {
            Some(t) => t.transpose() * inner,
            None => inner,
        };
        Ok(match &other.linear {
            Some(t) => left * t,
            None => left,
        })
    }
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("post-processing input".into()))
    }
}

fn check_aperture(aperture: f64) -> Result<()> {
    if aperture.is_finite() && aperture > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("conceptor aperture must be positive, got {aperture}")))
    }
}

fn check_abtt(n: usize, k: usize, components: usize) -> Result<()> {
    if components == 0 || components >= k {
        return Err(Error::param(format!(
            "ABTT needs 0 < components < k, got {components} components for k = {k}"
        )));
    }
    if n < 2 {
        return Err(Error::param("ABTT needs at least two rows"));
    }
    Ok(())
}

fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// `I − C = a⁻² (R + a⁻² I)⁻¹` with `R = XᵀX / n`.
fn conceptor_complement(gram: &DMatrix<f64>, n: usize, aperture: f64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::param("conceptor negation needs at least one row"));
    }
    let k = gram.nrows();
    let beta = aperture.powi(-2);
    let mut shifted = gram / n as f64;
    for i in 0..k {
        shifted[(i, i)] += beta;
    }
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::NonFinite("conceptor correlation matrix is not positive definite".into()))?;
    let mut out = chol.inverse() * beta;
    // Symmetrize away rounding; I − C is symmetric in exact arithmetic.
    let t = out.transpose();
    out = (out + t) * 0.5;
    Ok(out)
}

/// Post-processed Gram norms under conceptor negation for every leading
/// k×k block of a pair of oracle matrices.
///
/// With `R/n + βI = LLᵀ`, `M = L⁻¹` and `T = β MᵀM`, cyclic trace identities
/// give
///
/// ```text
/// ‖TGT‖²_F   = β⁴ tr((N S)²)          N = M G Mᵀ, S = M Mᵀ
/// ‖T H T̂‖²_F = β⁴ tr(S K Ŝ Kᵀ)        K = M H M̂ᵀ
/// ```
///
/// `M` is lower triangular, so the leading k×k blocks of `S`, `N` and `K`
/// are exactly the matrices for the first k columns. They are formed once.
pub(crate) struct NestedConceptor {
    beta4: f64,
    s: DMatrix<f64>,
    s_hat: DMatrix<f64>,
    n: DMatrix<f64>,
    n_hat: DMatrix<f64>,
    k: DMatrix<f64>,
}

impl NestedConceptor {
    pub(crate) fn new(
        gram: &DMatrix<f64>,
        gram_hat: &DMatrix<f64>,
        cross: &DMatrix<f64>,
        rows: usize,
        aperture: f64,
    ) -> Result<Self> {
        check_aperture(aperture)?;
        if rows == 0 {
            return Err(Error::param("conceptor negation needs at least one row"));
        }
        let beta = aperture.powi(-2);
        let inv_factor = |g: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let k = g.nrows();
            let mut shifted = g / rows as f64;
            for i in 0..k {
                shifted[(i, i)] += beta;
            }
            let l = shifted
                .cholesky()
                .ok_or_else(|| Error::NonFinite("conceptor correlation matrix is not positive definite".into()))?
                .unpack();
            l.solve_lower_triangular(&DMatrix::identity(k, k))
                .ok_or_else(|| Error::NonFinite("singular conceptor factor".into()))
        };
        let m = inv_factor(gram)?;
        let m_hat = inv_factor(gram_hat)?;
        Ok(NestedConceptor {
            beta4: beta.powi(4),
            s: &m * m.transpose(),
            s_hat: &m_hat * m_hat.transpose(),
            n: &m * gram * m.transpose(),
            n_hat: &m_hat * gram_hat * m_hat.transpose(),
            k: &m * cross * m_hat.transpose(),
        })
    }

    /// `(‖YᵀY‖²_F, ‖ŶᵀŶ‖²_F, ‖YᵀŶ‖²_F)` for the leading `k` columns.
    pub(crate) fn squared_norms(&self, k: usize) -> (f64, f64, f64) {
        let s = self.s.view((0, 0), (k, k));
        let s_hat = self.s_hat.view((0, 0), (k, k));
        let kk = self.k.view((0, 0), (k, k));
        let p = self.n.view((0, 0), (k, k)) * s;
        let p_hat = self.n_hat.view((0, 0), (k, k)) * s_hat;
        let left = s * kk;
        let right = kk * s_hat;
        (
            self.beta4 * trace_of_product(&p, &p),
            self.beta4 * trace_of_product(&p_hat, &p_hat),
            self.beta4 * left.component_mul(&right).sum(),
        )
    }
}

/// `tr(AB)` for square `A`, `B`.
fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

/// `I − P Pᵀ` where `P` holds the top `components` eigenvectors of the
/// centered Gram matrix.
fn abtt_projector(centered_gram: &DMatrix<f64>, components: usize) -> DMatrix<f64> {
    let k = centered_gram.nrows();
    let eig = centered_gram.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let p = eig.eigenvectors.select_columns(&order[..components]);
    DMatrix::identity(k, k) - &p * p.transpose()
}

/// All-but-the-top: center the rows, then project out the top `components`
/// principal directions.
pub fn abtt(x: &DMatrix<f64>, components: usize) -> Result<DMatrix<f64>> {
    let config = PostprocConfig::abtt(AbttComponents::Fixed(components));
    Ok(PostTransform::fit(&config, x)?.apply(x))
}

/// Conceptor negation: `Y = X (I − C)` with `C = R (R + a⁻² I)⁻¹` and
/// `R = XᵀX / n`.
pub fn conceptor_negation(x: &DMatrix<f64>, aperture: f64) -> Result<DMatrix<f64>> {
    Ok(PostTransform::fit(&PostprocConfig::cn(aperture), x)?.apply(x))
}

/// Applies the configured method. The identity returns an exact copy.
pub fn postprocess(x: &DMatrix<f64>, config: &PostprocConfig) -> Result<DMatrix<f64>> {
    match config.method {
        PostprocMethod::Identity => Ok(x.clone()),
        PostprocMethod::Abtt => abtt(x, config.abtt_components.resolve(x.ncols())),
        PostprocMethod::Cn => conceptor_negation(x, config.cn_aperture),
    }
}
