//! Seeded random streams, elementary samplers, dense kernels and the
//! reference densities (chi, Gamma) used by the theory checks.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use statrs::function::gamma::{gamma_lr, ln_gamma};
use std::f64::consts::PI;

use crate::error::{dim_mismatch, domain, Error, Result};

/// Deterministic pseudo-random stream.
///
/// Backed by ChaCha8, a counter-based generator whose output depends only on
/// `(seed, stream)`. Sub-streams with distinct ids use distinct nonces and
/// therefore never overlap.
#[derive(Clone, Debug)]
pub struct Prng {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
    spare_normal: Option<f64>,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            seed,
            stream,
            spare_normal: None,
        }
    }

    /// Independent stream keyed by `(self.seed, stream)`.
    pub fn substream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.rng.random_range(0..n)
    }

    /// Standard normal draw (Box-Muller, pairs cached).
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open_closed();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    pub(crate) fn chi_squared_draw(&mut self, nu: f64) -> f64 {
        if is_small_integer(nu) {
            (0..nu as usize).map(|_| self.gaussian().powi(2)).sum()
        } else {
            ChiSquared::new(nu)
                .expect("nu > 0")
                .sample(&mut self.rng)
        }
    }

    /// Student-t draw as `N(0,1) / sqrt(ChiSq(nu) / nu)`.
    pub fn student_t(&mut self, nu: f64) -> f64 {
        let z = self.gaussian();
        let chi2 = self.chi_squared_draw(nu);
        z / (chi2 / nu).sqrt()
    }

    /// In-place Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}

fn is_small_integer(nu: f64) -> bool {
    nu.fract() == 0.0 && nu >= 1.0 && nu <= 64.0
}

/// An `n x d` row-major table of samples.
///
/// Matrices built with [`SampleMatrix::new`] are guaranteed finite. Generated
/// output awaiting stability screening is built with [`SampleMatrix::raw`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    data: Array2<f64>,
    raw: bool,
}

impl SampleMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(domain("sample matrix needs d >= 1"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry {} of a {}x{} sample matrix",
                pos,
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
            raw: false,
        })
    }

    /// Wraps unscreened solver output; entries may be non-finite.
    pub fn raw(data: Array2<f64>) -> Self {
        assert!(data.ncols() >= 1, "sample matrix needs d >= 1");
        Self {
            data: data.as_standard_layout().into_owned(),
            raw: true,
        }
    }

    pub fn from_vec(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        let data = Array2::from_shape_vec((n, d), values)
            .map_err(|e| dim_mismatch(format!("{n}x{d} from flat vector: {e}")))?;
        Self::new(data)
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self::new(Array2::zeros((n, d))).expect("zeros are finite")
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_raw(&self) -> bool {
        self.raw
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data
            .row(i)
            .to_slice()
            .expect("standard layout rows are contiguous")
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn row_norms(&self) -> Vec<f64> {
        row_norms(self.data.view())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            data: self.data.select(Axis(0), idx),
            raw: self.raw,
        }
    }

    /// Rows whose entries are all finite; the result is no longer raw.
    pub fn finite_rows(&self) -> Self {
        let keep: Vec<usize> = (0..self.n())
            .filter(|&i| self.row(i).iter().all(|v| v.is_finite()))
            .collect();
        Self {
            data: self.data.select(Axis(0), &keep),
            raw: false,
        }
    }

    /// First `d` columns.
    pub fn truncate_cols(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.d() {
            return Err(domain(format!("cannot truncate d={} to {d}", self.d())));
        }
        Ok(Self {
            data: self.data.slice(ndarray::s![.., ..d]).to_owned(),
            raw: self.raw,
        })
    }

    /// Subtracts the per-column mean in place.
    pub fn center_columns(&mut self) {
        if self.n() == 0 {
            return;
        }
        let mean = self.data.mean_axis(Axis(0)).expect("n > 0");
        self.data -= &mean;
    }

    pub fn column_means(&self) -> Array1<f64> {
        self.data
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(self.d()))
    }
}

pub fn sample_gaussian(rng: &mut Prng, n: usize, d: usize) -> SampleMatrix {
    let values = (0..n * d).map(|_| rng.gaussian()).collect();
    SampleMatrix::from_vec(n, d, values).expect("gaussian draws are finite")
}

/// I.i.d. Student-t entries. Integer `nu <= 64` uses a sum of squared
/// normals for the chi-square; other values fall back to a Gamma sampler.
pub fn sample_student_t(rng: &mut Prng, n: usize, d: usize, nu: f64) -> Result<SampleMatrix> {
    if !(nu > 0.0) {
        return Err(domain(format!("student-t needs nu > 0, got {nu}")));
    }
    let values = (0..n * d).map(|_| rng.student_t(nu)).collect();
    SampleMatrix::from_vec(n, d, values)
}

/// Uniform direction in `R^d` (normalized Gaussian, redrawn if degenerate).
pub fn uniform_direction(rng: &mut Prng, d: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), d);
    loop {
        for v in out.iter_mut() {
            *v = rng.gaussian();
        }
        let norm = norm(out);
        if norm >= 1e-30 {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

pub fn sample_uniform_sphere(rng: &mut Prng, n: usize, d: usize) -> SampleMatrix {
    let mut values = vec![0.0; n * d];
    for row in values.chunks_exact_mut(d) {
        uniform_direction(rng, d, row);
    }
    SampleMatrix::from_vec(n, d, values).expect("unit vectors are finite")
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.nrows() {
        return Err(dim_mismatch(format!(
            "matmul {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a.dot(&b))
}

/// `a^T b`.
pub fn transpose_matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(dim_mismatch(format!(
            "transpose_matmul {}x{} with {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a.t().dot(&b))
}

pub fn row_norms(a: ArrayView2<f64>) -> Vec<f64> {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// `a + alpha * b`.
pub fn add_scaled(a: ArrayView2<f64>, alpha: f64, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(dim_mismatch(format!("add_scaled {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(&a + &(&b * alpha))
}

/// Column `j`, sorted ascending (NaN last).
pub fn sort_column(a: ArrayView2<f64>, j: usize) -> Result<Vec<f64>> {
    if j >= a.ncols() {
        return Err(dim_mismatch(format!("column {j} of {} columns", a.ncols())));
    }
    let mut col = a.column(j).to_vec();
    col.sort_by(f64::total_cmp);
    Ok(col)
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Density of the norm of a standard Gaussian vector in `R^d`.
pub fn chi_pdf(r: f64, d: usize) -> f64 {
    if r < 0.0 {
        return 0.0;
    }
    if r == 0.0 && d >= 2 {
        return 0.0;
    }
    chi_ln_pdf(r, d).exp()
}

pub fn chi_ln_pdf(r: f64, d: usize) -> f64 {
    let k = d as f64;
    if r <= 0.0 {
        return if d == 1 && r == 0.0 {
            -(0.5 * k - 1.0) * std::f64::consts::LN_2 - ln_gamma(0.5 * k)
        } else {
            f64::NEG_INFINITY
        };
    }
    (k - 1.0) * r.ln() - 0.5 * r * r - (0.5 * k - 1.0) * std::f64::consts::LN_2 - ln_gamma(0.5 * k)
}

pub fn chi_cdf(r: f64, d: usize) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    gamma_lr(0.5 * d as f64, 0.5 * r * r)
}

/// Inverse of [`chi_cdf`] by bisection on the regularized incomplete gamma.
pub fn chi_quantile(p: f64, d: usize) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut hi = (d as f64).sqrt() + 4.0;
    while chi_cdf(hi, d) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_cdf(mid, d) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Gamma density with shape `k` and scale `theta`.
pub fn gamma_pdf(r: f64, k: f64, theta: f64) -> f64 {
    if r < 0.0 {
        return 0.0;
    }
    if r == 0.0 {
        return if k == 1.0 {
            1.0 / theta
        } else if k < 1.0 {
            f64::INFINITY
        } else {
            0.0
        };
    }
    gamma_ln_pdf(r, k, theta).exp()
}

pub fn gamma_ln_pdf(r: f64, k: f64, theta: f64) -> f64 {
    if r <= 0.0 {
        return gamma_pdf(r, k, theta).ln();
    }
    (k - 1.0) * r.ln() - r / theta - ln_gamma(k) - k * theta.ln()
}

/// `ln |S^{d-1}| = ln(2 pi^{d/2} / Gamma(d/2))`.
pub fn ln_sphere_area(d: usize) -> f64 {
    let k = d as f64;
    std::f64::consts::LN_2 + 0.5 * k * PI.ln() - ln_gamma(0.5 * k)
}

/// Standard Gaussian log-density in `R^d`.
pub fn gaussian_ln_pdf(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    -0.5 * d * (2.0 * PI).ln() - 0.5 * dot(x, x)
}
