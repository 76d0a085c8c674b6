//! Distance criteria between the oracle matrices of two corpus halves, and
//! the dimension sweep that minimizes them.
//!
//! Every criterion here is a function of the Gram matrices `XXᵀ` and
//! `X̂X̂ᵀ`. They are evaluated through k×k products only:
//!
//! ```text
//! ‖XXᵀ − X̂X̂ᵀ‖²_F = ‖XᵀX‖²_F + ‖X̂ᵀX̂‖²_F − 2‖XᵀX̂‖²_F
//! ‖XXᵀ‖_F        = ‖XᵀX‖_F
//! ```
//!
//! so no n×n matrix is ever allocated.

use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cooccurrence::SignalKind;
use crate::error::{Error, Result};
use crate::postprocess::{postprocess, NestedConceptor, PostTransform, PostprocConfig, PostprocMethod};
use crate::spectral::SpectralDecomposition;

/// `(‖AAᵀ − BBᵀ‖²_F, ‖AAᵀ‖_F, ‖BBᵀ‖_F)`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossGram {
    pub diff_sq: f64,
    pub norm_a: f64,
    pub norm_b: f64,
}

impl CrossGram {
    /// Combines `AᵀA`, `BᵀB` and `AᵀB`.
    pub fn from_grams(gram_a: &DMatrix<f64>, gram_b: &DMatrix<f64>, cross: &DMatrix<f64>) -> Self {
        Self::from_squares(
            gram_a.norm_squared(),
            gram_b.norm_squared(),
            transpose_invariant_norm_squared(cross),
        )
    }

    /// From `‖AᵀA‖²_F`, `‖BᵀB‖²_F` and `‖AᵀB‖²_F`.
    pub fn from_squares(aa: f64, bb: f64, ab: f64) -> Self {
        CrossGram {
            diff_sq: (aa + bb - 2.0 * ab).max(0.0),
            norm_a: aa.sqrt(),
            norm_b: bb.sqrt(),
        }
    }

    /// `diff_sq / (norm_a · norm_b)`; `None` when either Gram matrix is zero.
    pub fn relative(&self) -> Option<f64> {
        let denom = self.norm_a * self.norm_b;
        (denom > 0.0).then(|| self.diff_sq / denom)
    }
}

/// Squared Frobenius norm whose value is bit-identical for `M` and `Mᵀ`, so
/// that swapping the two arguments of a criterion gives exactly the same result.
fn transpose_invariant_norm_squared(m: &DMatrix<f64>) -> f64 {
    let by_columns: f64 = m.column_iter().map(|c| c.norm_squared()).sum();
    let by_rows: f64 = m.row_iter().map(|r| r.norm_squared()).sum();
    (by_columns + by_rows) * 0.5
}

pub fn cross_gram_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CrossGram> {
    if a.nrows() != b.nrows() {
        return Err(Error::dim(format!(
            "row counts differ: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(CrossGram::from_grams(&(a.transpose() * a), &(b.transpose() * b), &(a.transpose() * b)))
}

/// Primitive relative distance `‖XXᵀ − X̂X̂ᵀ‖² / (‖XXᵀ‖ ‖X̂X̂ᵀ‖)`.
pub fn primitive_relative_distance(x: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<f64> {
    cross_gram_frobenius(x, x_hat)?
        .relative()
        .ok_or_else(|| Error::DegenerateSpectrum("an oracle matrix is all zero".into()))
}

/// Post relative distance: the primitive relative distance between `F(X)`
/// and `F(X̂)`.
pub fn post_relative_distance(x: &DMatrix<f64>, x_hat: &DMatrix<f64>, config: &PostprocConfig) -> Result<f64> {
    if x.nrows() != x_hat.nrows() {
        return Err(Error::dim(format!(
            "row counts differ: {} vs {}",
            x.nrows(),
            x_hat.nrows()
        )));
    }
    let y = postprocess(x, config)?;
    let y_hat = postprocess(x_hat, config)?;
    cross_gram_frobenius(&y, &y_hat)?
        .relative()
        .ok_or_else(|| Error::DegeneratePostprocessing(format!("{:?} output is all zero", config.method)))
}

/// Geometric mean `√(d_r · d_p)`.
pub fn mixed_product_distance(d_r: f64, d_p: f64) -> Result<f64> {
    if !(d_r >= 0.0 && d_p >= 0.0) {
        return Err(Error::Domain(format!(
            "distances must be non-negative, got d_r = {d_r}, d_p = {d_p}"
        )));
    }
    Ok((d_r * d_p).sqrt())
}

/// PIP loss `‖XXᵀ − X̂X̂ᵀ‖_F`.
///
/// Computed from a thin QR factorization `[X X̂] = Q [R R̂]`, as
/// `‖RRᵀ − R̂R̂ᵀ‖_F`. Unlike the square root of the Gram identity this stays
/// accurate when the two Gram matrices nearly coincide.
pub fn pip_loss(x: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() != x_hat.nrows() {
        return Err(Error::dim(format!(
            "row counts differ: {} vs {}",
            x.nrows(),
            x_hat.nrows()
        )));
    }
    if x == x_hat {
        return Ok(0.0);
    }
    // Factor in a canonical argument order so the result is exactly symmetric.
    let (x, x_hat) = if canonical_order(x, x_hat).is_gt() { (x_hat, x) } else { (x, x_hat) };
    let (k, k_hat) = (x.ncols(), x_hat.ncols());
    let mut stacked = DMatrix::zeros(x.nrows(), k + k_hat);
    stacked.columns_mut(0, k).copy_from(x);
    stacked.columns_mut(k, k_hat).copy_from(x_hat);
    let r = stacked.qr().r();
    let r_a = r.columns(0, k);
    let r_b = r.columns(k, k_hat);
    Ok((r_a * r_a.transpose() - r_b * r_b.transpose()).norm())
}

fn canonical_order(a: &DMatrix<f64>, b: &DMatrix<f64>) -> std::cmp::Ordering {
    a.ncols()
        .cmp(&b.ncols())
        .then_with(|| a.iter().zip(b.iter()).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Geometric mean of the primitive and post relative distances.
    #[default]
    Mpd,
    Pip,
    /// Primitive relative distance alone.
    PrimD,
    /// Post relative distance alone.
    PostD,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Mpd, Criterion::Pip, Criterion::PrimD, Criterion::PostD];

    pub fn value(self, row: &TraceRow) -> f64 {
        match self {
            Criterion::Mpd => row.mpd,
            Criterion::Pip => row.pip,
            Criterion::PrimD => row.d_r,
            Criterion::PostD => row.d_p,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Mpd => "mpd",
            Criterion::Pip => "pip",
            Criterion::PrimD => "prim_d",
            Criterion::PostD => "post_d",
        })
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpd" => Ok(Criterion::Mpd),
            "pip" => Ok(Criterion::Pip),
            "prim" | "prim_d" => Ok(Criterion::PrimD),
            "post" | "post_d" => Ok(Criterion::PostD),
            other => Err(Error::param(format!("unknown criterion {other:?}"))),
        }
    }
}

/// Candidate dimensions `min, min + step, …` up to and including `max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl Grid {
    pub fn new(min: usize, max: usize, step: usize) -> Self {
        Grid { min, max, step }
    }

    pub fn points(&self) -> Vec<usize> {
        if self.step == 0 || self.min == 0 || self.min > self.max {
            return Vec::new();
        }
        (self.min..=self.max).step_by(self.step).collect()
    }

    pub(crate) fn checked_points(&self, rank: usize) -> Result<Vec<usize>> {
        let points = self.points();
        if points.is_empty() {
            return Err(Error::param(format!(
                "empty grid (min {}, max {}, step {}); need 1 <= min <= max and step >= 1",
                self.min, self.max, self.step
            )));
        }
        if self.max > rank {
            return Err(Error::dim(format!(
                "grid maximum {} exceeds the retained rank {rank}; decompose with a larger r",
                self.max
            )));
        }
        Ok(points)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub d_r: f64,
    pub d_p: f64,
    pub mpd: f64,
    pub pip: f64,
}

/// Accumulated wall time, in milliseconds, attributable to each criterion
/// had it been swept alone. Shared work (oracle construction, Gram products)
/// is charged to every criterion that needs it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CriterionTiming {
    pub d_r: f64,
    pub d_p: f64,
    pub mpd: f64,
    pub pip: f64,
}

impl CriterionTiming {
    pub fn get(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Mpd => self.mpd,
            Criterion::Pip => self.pip,
            Criterion::PrimD => self.d_r,
            Criterion::PostD => self.d_p,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionTrace {
    pub rows: Vec<TraceRow>,
    pub timing_ms: CriterionTiming,
}

impl CriterionTrace {
    pub fn grid(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.k).collect()
    }

    /// Argmin of `criterion`, smallest k on ties.
    pub fn select(&self, criterion: Criterion) -> Option<usize> {
        select_k(&self.rows, criterion)
    }

    /// Tab-separated `k d_r d_p mpd pip` with a header line.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k\td_r\td_p\tmpd\tpip")?;
        for r in &self.rows {
            writeln!(out, "{}\t{:e}\t{:e}\t{:e}\t{:e}", r.k, r.d_r, r.d_p, r.mpd, r.pip)?;
        }
        out.flush()
    }
}

/// Argmin of `criterion` over `rows`, the first (smallest k) on ties.
pub fn select_k(rows: &[TraceRow], criterion: Criterion) -> Option<usize> {
    let mut best: Option<&TraceRow> = None;
    for row in rows {
        let v = criterion.value(row);
        match best {
            Some(b) if criterion.value(b) < v || (criterion.value(b) == v && b.k <= row.k) => {}
            _ => best = Some(row),
        }
    }
    best.map(|r| r.k)
}

/// Evaluates all four criteria at every grid point.
///
/// `d_p` is computed in Gram space: the post-processing map is fitted from
/// `XᵀX` and the column sums, and the post-processed Gram matrices follow by
/// k×k algebra.
pub fn sweep(
    decomp_a: &SpectralDecomposition,
    decomp_b: &SpectralDecomposition,
    grid: &Grid,
    alpha_exponent: f64,
    config: &PostprocConfig,
) -> Result<CriterionTrace> {
    if decomp_a.n() != decomp_b.n() {
        return Err(Error::dim(format!(
            "decompositions have different orders: {} vs {}",
            decomp_a.n(),
            decomp_b.n()
        )));
    }
    let points = grid.checked_points(decomp_a.rank().min(decomp_b.rank()))?;
    let n = decomp_a.n();

    // X = U_k D_k^α, so every Gram matrix needed at k is a scaled leading
    // block of UᵀU, ÛᵀÛ or UᵀÛ, and the column sums come from Uᵀ1.
    let t = Instant::now();
    let k_max = grid.max;
    let u = decomp_a.u().columns(0, k_max);
    let u_hat = decomp_b.u().columns(0, k_max);
    let uu = u.transpose() * u;
    let uu_hat = u_hat.transpose() * u_hat;
    let uu_cross = u.transpose() * u_hat;
    let u_sum = DVector::from_iterator(k_max, u.column_iter().map(|c| c.sum()));
    let u_sum_hat = DVector::from_iterator(k_max, u_hat.column_iter().map(|c| c.sum()));
    let scale = |d: &[f64]| DVector::from_iterator(k_max, d[..k_max].iter().map(|v| v.powf(alpha_exponent)));
    let (p, p_hat) = (scale(decomp_a.singular_values()), scale(decomp_b.singular_values()));
    let mut shared = t.elapsed();

    let mut base_eval = Duration::ZERO;

    let t = Instant::now();
    let nested = match config.method {
        PostprocMethod::Cn => {
            let full = |uu: &DMatrix<f64>, p: &DVector<f64>, q: &DVector<f64>| uu.component_mul(&(p * q.transpose()));
            Some(NestedConceptor::new(
                &full(&uu, &p, &p),
                &full(&uu_hat, &p_hat, &p_hat),
                &full(&uu_cross, &p, &p_hat),
                n,
                config.cn_aperture,
            )?)
        }
        _ => None,
    };
    let mut post = t.elapsed();
    let mut combine = Duration::ZERO;
    let mut rows = Vec::with_capacity(points.len());

    for k in points {
        let t = Instant::now();
        let (pk, pk_hat) = (p.rows(0, k), p_hat.rows(0, k));
        let gram = uu.view((0, 0), (k, k)).component_mul(&(pk * pk.transpose()));
        let gram_hat = uu_hat.view((0, 0), (k, k)).component_mul(&(pk_hat * pk_hat.transpose()));
        let cross = uu_cross.view((0, 0), (k, k)).component_mul(&(pk * pk_hat.transpose()));
        let sum = u_sum.rows(0, k).component_mul(&pk);
        let sum_hat = u_sum_hat.rows(0, k).component_mul(&pk_hat);
        shared += t.elapsed();

        let t = Instant::now();
        let primitive = CrossGram::from_grams(&gram, &gram_hat, &cross);
        let d_r = primitive
            .relative()
            .ok_or_else(|| Error::DegenerateSpectrum(format!("oracle matrix is all zero at k = {k}")))?;
        let pip = primitive.diff_sq.sqrt();
        base_eval += t.elapsed();

        let t = Instant::now();
        let post_distance = match &nested {
            Some(cn) => {
                let (aa, bb, ab) = cn.squared_norms(k);
                CrossGram::from_squares(aa, bb, ab)
            }
            None => {
                let f = PostTransform::fit_from_gram(config, &gram, &sum, n)?;
                let f_hat = PostTransform::fit_from_gram(config, &gram_hat, &sum_hat, n)?;
                CrossGram::from_grams(
                    &f.cross_gram(&f, &gram, &sum, &sum, n)?,
                    &f_hat.cross_gram(&f_hat, &gram_hat, &sum_hat, &sum_hat, n)?,
                    &f.cross_gram(&f_hat, &cross, &sum, &sum_hat, n)?,
                )
            }
        };
        let d_p = post_distance.relative().ok_or_else(|| {
            Error::DegeneratePostprocessing(format!("{:?} output is all zero at k = {k}", config.method))
        })?;
        post += t.elapsed();

        let t = Instant::now();
        let mpd = mixed_product_distance(d_r, d_p)?;
        combine += t.elapsed();

        rows.push(TraceRow { k, d_r, d_p, mpd, pip });
    }

    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let timing_ms = CriterionTiming {
        d_r: ms(shared + base_eval),
        pip: ms(shared + base_eval),
        d_p: ms(shared + post),
        mpd: ms(shared + base_eval + post + combine),
    };
    Ok(CriterionTrace { rows, timing_ms })
}

/// The outcome of a dimension sweep, with provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub corpus: String,
    pub vocab_size: usize,
    pub signal_kind: Option<SignalKind>,
    pub shift_ns: Option<u32>,
    pub alpha_exponent: f64,
    pub criterion: Criterion,
    pub postproc: PostprocConfig,
    pub grid: Grid,
    pub seed: u64,
    pub selected_k: usize,
    pub timing_ms: CriterionTiming,
    pub trace: Vec<TraceRow>,
}

impl SelectionReport {
    pub fn criterion_trace(&self) -> CriterionTrace {
        CriterionTrace {
            rows: self.trace.clone(),
            timing_ms: self.timing_ms,
        }
    }

    /// Records what the decompositions were computed from.
    pub fn with_provenance(mut self, corpus: impl Into<String>, signal_kind: SignalKind, shift_ns: u32) -> Self {
        self.corpus = corpus.into();
        self.signal_kind = Some(signal_kind);
        self.shift_ns = match signal_kind {
            SignalKind::ShiftedPpmi => Some(shift_ns),
            SignalKind::LogCount => None,
        };
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Sweeps the grid and selects the dimension minimizing `criterion`.
///
/// `seed` is the seed the decompositions were computed with; it is recorded
/// in the report.
pub fn sweep_and_select(
    decomp_a: &SpectralDecomposition,
    decomp_b: &SpectralDecomposition,
    grid: &Grid,
    alpha_exponent: f64,
    criterion: Criterion,
    config: &PostprocConfig,
    seed: u64,
) -> Result<SelectionReport> {
    let trace = sweep(decomp_a, decomp_b, grid, alpha_exponent, config)?;
    let selected_k = trace.select(criterion).expect("sweep yields at least one row");
    Ok(SelectionReport {
        corpus: String::new(),
        vocab_size: decomp_a.n(),
        signal_kind: None,
        shift_ns: None,
        alpha_exponent,
        criterion,
        postproc: *config,
        grid: *grid,
        seed,
        selected_k,
        timing_ms: trace.timing_ms,
        trace: trace.rows,
    })
}
