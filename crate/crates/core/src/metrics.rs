//! Distributional distances between generated and held-out samples, and the
//! stability counters for raw solver output.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, domain, Result};
use crate::numerics::{sorted, uniform_direction, Prng, SampleMatrix};

/// Default number of sliced-Wasserstein directions.
pub const N_PROJECTIONS: usize = 500;
/// Directions used per radial bin by [`angular_sw`].
pub const N_ANGULAR_PROJECTIONS: usize = 200;
pub const N_ANGULAR_BINS: usize = 4;
/// Rows per side retained by [`mmd_rbf`].
pub const MMD_MAX_ROWS: usize = 2_000;
/// Norms above this multiple of the median test norm count as exploding.
pub const EXPLODING_FACTOR: f64 = 100.0;
const ANGULAR_NORM_FLOOR: f64 = 1e-12;

/// Wasserstein-1 distance between two empirical laws on the line.
///
/// Equal sizes reduce to the mean absolute difference of order statistics;
/// otherwise the quantile functions are integrated exactly over the merged
/// breakpoints `i/n_a` and `j/n_b`.
pub fn w1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(domain("w1_1d on an empty sample"));
    }
    let sa = sorted(a);
    let sb = sorted(b);
    if sa.len() == sb.len() {
        Ok(w1_sorted_equal(&sa, &sb))
    } else {
        Ok(w1_sorted_quantile(&sa, &sb))
    }
}

pub(crate) fn w1_sorted_equal(sa: &[f64], sb: &[f64]) -> f64 {
    sa.iter().zip(sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / sa.len() as f64
}

/// Exact quantile-integral form; valid for any sizes.
pub fn w1_sorted_quantile(sa: &[f64], sb: &[f64]) -> f64 {
    let (na, nb) = (sa.len() as u64, sb.len() as u64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0u64;
    let mut total = 0.0;
    while i < sa.len() && j < sb.len() {
        let next_a = (i as u64 + 1) * nb;
        let next_b = (j as u64 + 1) * na;
        let next = next_a.min(next_b);
        total += (next - pos) as f64 * (sa[i] - sb[j]).abs();
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    total / (na * nb) as f64
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_2sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(domain("ks_2sample on an empty sample"));
    }
    Ok(ks_sorted(&sorted(a), &sorted(b)))
}

fn ks_sorted(sa: &[f64], sb: &[f64]) -> f64 {
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// One-sample sup-distance between the empirical CDF of `sample` and `cdf`.
pub fn ks_1sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(sample);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |acc, (i, &x)| {
        let f = cdf(x);
        acc.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// A fixed set of unit directions shared by every method compared within one
/// evaluation context.
#[derive(Clone, Debug)]
pub struct ProjectionSet {
    dirs: Array2<f64>,
}

impl ProjectionSet {
    pub fn random(d: usize, n_proj: usize, rng: &mut Prng) -> Self {
        let mut dirs = Array2::zeros((n_proj, d));
        for mut row in dirs.rows_mut() {
            uniform_direction(rng, d, row.as_slice_mut().expect("contiguous"));
        }
        Self { dirs }
    }

    pub fn from_directions(dirs: Array2<f64>) -> Self {
        Self { dirs }
    }

    pub fn len(&self) -> usize {
        self.dirs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.dirs.ncols()
    }

    /// Sorted projections, one vector per direction.
    fn sorted_projections(&self, x: &Array2<f64>) -> Vec<Vec<f64>> {
        let proj = x.dot(&self.dirs.t());
        proj.columns()
            .into_iter()
            .map(|c| {
                let mut v = c.to_vec();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect()
    }

    /// Per-direction 1D Wasserstein distances.
    pub fn per_direction_w1(&self, a: &SampleMatrix, b: &SampleMatrix) -> Result<Vec<f64>> {
        if a.d() != b.d() || a.d() != self.dim() {
            return Err(dim_mismatch(format!(
                "sliced distance between d={} and d={} with {}-dimensional directions",
                a.d(),
                b.d(),
                self.dim()
            )));
        }
        if a.n() == 0 || b.n() == 0 {
            return Err(domain("sliced distance on an empty sample"));
        }
        let pa = self.sorted_projections(a.as_array());
        let pb = self.sorted_projections(b.as_array());
        Ok(pa
            .iter()
            .zip(&pb)
            .map(|(x, y)| {
                if x.len() == y.len() {
                    w1_sorted_equal(x, y)
                } else {
                    w1_sorted_quantile(x, y)
                }
            })
            .collect())
    }
}

/// Sliced Wasserstein-1: mean over directions of the projected 1D distance.
pub fn sliced_w1(a: &SampleMatrix, b: &SampleMatrix, dirs: &ProjectionSet) -> Result<f64> {
    let w = dirs.per_direction_w1(a, b)?;
    Ok(w.iter().sum::<f64>() / w.len() as f64)
}

/// [`sliced_w1`] with a freshly drawn direction set.
pub fn sliced_w1_random(
    a: &SampleMatrix,
    b: &SampleMatrix,
    n_proj: usize,
    rng: &mut Prng,
) -> Result<f64> {
    let dirs = ProjectionSet::random(a.d(), n_proj, rng);
    sliced_w1(a, b, &dirs)
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile_linear(sorted_values: &[f64], q: f64) -> f64 {
    let n = sorted_values.len();
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted_values[lo] + (h - lo as f64) * (sorted_values[hi] - sorted_values[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularSw {
    pub value: f64,
    pub skipped_bins: usize,
}

/// Angular sliced Wasserstein within radial bins.
///
/// Bin edges are the interior quantiles of `test_radii`; rows of both sets
/// are binned by their own norm, normalized to the unit sphere, and compared
/// with `dirs`. Bins that are empty on either side are skipped and counted.
/// The result averages bins weighted by their combined row count.
pub fn angular_sw(
    a: &SampleMatrix,
    b: &SampleMatrix,
    test_radii: &[f64],
    n_bins: usize,
    dirs: &ProjectionSet,
) -> Result<AngularSw> {
    if test_radii.is_empty() {
        return Err(domain("angular_sw needs test radii"));
    }
    if n_bins == 0 {
        return Err(domain("angular_sw needs at least one bin"));
    }
    let st = sorted(test_radii);
    let edges: Vec<f64> = (1..n_bins)
        .map(|k| quantile_linear(&st, k as f64 / n_bins as f64))
        .collect();
    let bin_rows = |m: &SampleMatrix| -> Vec<Vec<usize>> {
        let mut bins = vec![Vec::new(); n_bins];
        for (i, r) in m.row_norms().into_iter().enumerate() {
            bins[edges.partition_point(|e| *e <= r)].push(i);
        }
        bins
    };
    let bins_a = bin_rows(a);
    let bins_b = bin_rows(b);

    let mut weighted = 0.0;
    let mut weight = 0.0;
    let mut skipped = 0;
    for (ia, ib) in bins_a.iter().zip(&bins_b) {
        if ia.is_empty() || ib.is_empty() {
            skipped += 1;
            continue;
        }
        let ua = unit_rows(&a.select_rows(ia));
        let ub = unit_rows(&b.select_rows(ib));
        let w = (ia.len() + ib.len()) as f64;
        weighted += w * sliced_w1(&ua, &ub, dirs)?;
        weight += w;
    }
    let value = if weight > 0.0 { weighted / weight } else { 0.0 };
    Ok(AngularSw {
        value,
        skipped_bins: skipped,
    })
}

fn unit_rows(m: &SampleMatrix) -> SampleMatrix {
    let mut data = m.as_array().clone();
    for mut row in data.rows_mut() {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(ANGULAR_NORM_FLOOR);
        row.mapv_inplace(|v| v / n);
    }
    SampleMatrix::raw(data)
}

/// Median of all nonzero pairwise Euclidean distances.
pub fn median_bandwidth(points: &Array2<f64>) -> Result<f64> {
    let n = points.nrows();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let xi = points.row(i);
        for j in (i + 1)..n {
            let d2: f64 = xi
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 > 0.0 {
                dists.push(d2.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return Err(domain("all pairwise distances are zero; no RBF bandwidth"));
    }
    let m = dists.len();
    let (_, &mut upper, _) = dists.select_nth_unstable_by(m / 2, f64::total_cmp);
    if m % 2 == 1 {
        Ok(upper)
    } else {
        let lower = dists[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(0.5 * (lower + upper))
    }
}

/// RBF-kernel MMD with the median-heuristic bandwidth on the pooled sample.
///
/// Each side is subsampled without replacement to [`MMD_MAX_ROWS`] rows. The
/// unbiased MMD^2 estimate is clamped at zero before the square root.
pub fn mmd_rbf(a: &SampleMatrix, b: &SampleMatrix, rng: &mut Prng) -> Result<f64> {
    if a.d() != b.d() {
        return Err(dim_mismatch("mmd operands"));
    }
    if a.n() < 2 || b.n() < 2 {
        return Err(domain("mmd needs at least two rows per side"));
    }
    let xa = subsample(a, MMD_MAX_ROWS, rng);
    let xb = subsample(b, MMD_MAX_ROWS, rng);
    let pooled = ndarray::concatenate(ndarray::Axis(0), &[xa.view(), xb.view()])
        .expect("equal widths");
    let sigma = median_bandwidth(&pooled)?;
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let k = |x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>| {
        let d2: f64 = x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
        (-gamma * d2).exp()
    };
    let within = |m: &Array2<f64>| {
        let n = m.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += k(m.row(i), m.row(j));
            }
        }
        2.0 * s / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for i in 0..xa.nrows() {
        for j in 0..xb.nrows() {
            cross += k(xa.row(i), xb.row(j));
        }
    }
    cross /= (xa.nrows() * xb.nrows()) as f64;
    let mmd2 = within(&xa) + within(&xb) - 2.0 * cross;
    Ok(mmd2.max(0.0).sqrt())
}

fn subsample(m: &SampleMatrix, cap: usize, rng: &mut Prng) -> Array2<f64> {
    if m.n() <= cap {
        return m.as_array().clone();
    }
    let mut idx = rng.permutation(m.n());
    idx.truncate(cap);
    m.as_array().select(ndarray::Axis(0), &idx)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRates {
    pub nan_rate: f64,
    pub exploding_rate: f64,
    pub invalid_rate: f64,
}

/// NaN, exploding-norm and combined invalid rates of raw generated output.
///
/// A row is NaN when any entry is NaN. The exploding rate is computed over
/// the remaining rows, against `100 x median(test_radii)`.
pub fn stability(raw: &SampleMatrix, test_radii: &[f64]) -> Result<StabilityRates> {
    if test_radii.is_empty() {
        return Err(domain("stability needs test radii"));
    }
    let threshold = EXPLODING_FACTOR * median(test_radii);
    let n = raw.n();
    if n == 0 {
        return Ok(StabilityRates {
            nan_rate: 0.0,
            exploding_rate: 0.0,
            invalid_rate: 0.0,
        });
    }
    let mut nan = 0usize;
    let mut exploding = 0usize;
    for i in 0..n {
        let row = raw.row(i);
        if row.iter().any(|v| v.is_nan()) {
            nan += 1;
            continue;
        }
        let r = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(r <= threshold) {
            exploding += 1;
        }
    }
    let nan_rate = nan as f64 / n as f64;
    let valid = n - nan;
    let exploding_rate = if valid == 0 {
        0.0
    } else {
        exploding as f64 / valid as f64
    };
    Ok(StabilityRates {
        nan_rate,
        exploding_rate,
        invalid_rate: invalid_rate(nan_rate, exploding_rate),
    })
}

pub fn invalid_rate(nan_rate: f64, exploding_rate: f64) -> f64 {
    nan_rate + (1.0 - nan_rate) * exploding_rate
}

/// Median with the midpoint convention for even sizes.
pub fn median(values: &[f64]) -> f64 {
    let s = sorted(values);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Fixed per-evaluation seed derived from the dataset label and checkpoint
/// step (FNV-1a), so reruns draw the same projection directions.
pub fn evaluation_seed(dataset: &str, checkpoint_step: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in dataset.bytes().chain(checkpoint_step.to_le_bytes()) {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub checkpoint_step: u64,
}

/// Every scalar metric for one (dataset, method, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub radial_w1: f64,
    pub ks: f64,
    pub sliced_w1: f64,
    pub angular_sw: Option<f64>,
    pub mmd: Option<f64>,
    pub nan_rate: f64,
    pub exploding_rate: f64,
    pub invalid_rate: f64,
    pub n_generated: usize,
    pub n_valid: usize,
    pub metadata: RunMetadata,
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    pub angular: bool,
    pub mmd: bool,
}

/// Shared evaluation context: the test split and the direction sets.
pub struct EvalContext {
    pub test: SampleMatrix,
    pub test_radii: Vec<f64>,
    pub projections: ProjectionSet,
    pub angular_projections: ProjectionSet,
    pub seed: u64,
}

impl EvalContext {
    pub fn new(test: SampleMatrix, n_proj: usize, seed: u64) -> Self {
        let mut rng = Prng::new(seed);
        let projections = ProjectionSet::random(test.d(), n_proj, &mut rng);
        let angular_projections = ProjectionSet::random(test.d(), N_ANGULAR_PROJECTIONS, &mut rng);
        let test_radii = test.row_norms();
        Self {
            test,
            test_radii,
            projections,
            angular_projections,
            seed,
        }
    }

    /// Screens `raw` for stability, then measures the valid rows against the
    /// test split.
    pub fn evaluate(
        &self,
        raw: &SampleMatrix,
        opts: EvalOptions,
        metadata: RunMetadata,
    ) -> Result<MetricsReport> {
        let rates = stability(raw, &self.test_radii)?;
        let valid = raw.finite_rows();
        if valid.n() == 0 {
            return Err(crate::error::Error::NonFinite(
                "no finite generated samples to evaluate".into(),
            ));
        }
        let gen_radii = valid.row_norms();
        let angular_sw = if opts.angular {
            Some(
                angular_sw(
                    &valid,
                    &self.test,
                    &self.test_radii,
                    N_ANGULAR_BINS,
                    &self.angular_projections,
                )?
                .value,
            )
        } else {
            None
        };
        let mmd = if opts.mmd {
            let mut rng = Prng::with_stream(self.seed, 1);
            Some(mmd_rbf(&valid, &self.test, &mut rng)?)
        } else {
            None
        };
        Ok(MetricsReport {
            radial_w1: w1_1d(&gen_radii, &self.test_radii)?,
            ks: ks_2sample(&gen_radii, &self.test_radii)?,
            sliced_w1: sliced_w1(&valid, &self.test, &self.projections)?,
            angular_sw,
            mmd,
            nan_rate: rates.nan_rate,
            exploding_rate: rates.exploding_rate,
            invalid_rate: rates.invalid_rate,
            n_generated: raw.n(),
            n_valid: valid.n(),
            metadata,
        })
    }
}
