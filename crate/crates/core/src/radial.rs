//! Radial laws and the sources built from them.
//!
//! The radial source draws `X0 = R * U0` with `R` from a one-dimensional law
//! over radii and `U0` uniform on the unit sphere. Its density is
//! `q_rad(x) = p_R(|x|) / (|S^{d-1}| |x|^{d-1})`, so against a standard
//! Gaussian source the only difference is the radial factor. The helpers at
//! the bottom of this module check that decomposition numerically and
//! measure how radial estimation error carries over to the induced source.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{domain, Error, Result};
use crate::metrics::{sliced_w1, w1_1d, ProjectionSet};
use crate::numerics::{
    chi_cdf, chi_ln_pdf, chi_quantile, gamma_ln_pdf, gaussian_ln_pdf, ln_sphere_area, norm,
    sample_gaussian, uniform_direction, Prng, SampleMatrix,
};
use crate::quadrature::adaptive_simpson;

/// Draws radii from the true data-generating process.
pub trait RadiusOracle: Send + Sync {
    fn draw(&self, rng: &mut Prng, m: usize) -> Vec<f64>;
    fn label(&self) -> String;
}

/// Sorted positive radii of an empirical law.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalRadial {
    radii: Vec<f64>,
    excluded: usize,
}

impl EmpiricalRadial {
    pub fn from_radii(mut radii: Vec<f64>) -> Result<Self> {
        let before = radii.len();
        radii.retain(|r| r.is_finite() && *r > 0.0);
        if radii.is_empty() {
            return Err(domain("empirical radial law needs at least one positive radius"));
        }
        radii.sort_by(f64::total_cmp);
        Ok(Self {
            excluded: before - radii.len(),
            radii,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Rows dropped for zero (or non-finite) norm.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    /// Inverse empirical CDF `r_(ceil(n u))` for `u` in `(0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.radii.len();
        let k = (n as f64 * u).ceil() as usize;
        self.radii[k.clamp(1, n) - 1]
    }

    pub fn cdf(&self, r: f64) -> f64 {
        self.radii.partition_point(|v| *v <= r) as f64 / self.radii.len() as f64
    }
}

#[derive(Clone)]
pub enum RadialLaw {
    Empirical(EmpiricalRadial),
    Oracle(Arc<dyn RadiusOracle>),
    /// Norm law of a standard Gaussian in `R^d`.
    Chi(usize),
}

impl fmt::Debug for RadialLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empirical(e) => write!(f, "Empirical(n={})", e.radii.len()),
            Self::Oracle(o) => write!(f, "Oracle({})", o.label()),
            Self::Chi(d) => write!(f, "Chi({d})"),
        }
    }
}

impl RadialLaw {
    pub fn sample(&self, rng: &mut Prng, m: usize) -> Vec<f64> {
        match self {
            Self::Empirical(e) => (0..m).map(|_| e.quantile(rng.uniform_open_closed())).collect(),
            Self::Oracle(o) => o.draw(rng, m),
            Self::Chi(d) => (0..m).map(|_| chi_quantile(rng.uniform_open_closed(), *d)).collect(),
        }
    }

    /// Quantile function, when the law exposes one.
    pub fn quantile(&self, u: f64) -> Option<f64> {
        match self {
            Self::Empirical(e) => Some(e.quantile(u)),
            Self::Chi(d) => Some(chi_quantile(u, *d)),
            Self::Oracle(_) => None,
        }
    }

    pub fn cdf(&self, r: f64) -> Option<f64> {
        match self {
            Self::Empirical(e) => Some(e.cdf(r)),
            Self::Chi(d) => Some(chi_cdf(r, *d)),
            Self::Oracle(_) => None,
        }
    }

    pub fn support_max(&self) -> f64 {
        match self {
            Self::Empirical(e) => *e.radii.last().expect("nonempty"),
            _ => f64::INFINITY,
        }
    }

    /// Writes the sorted radii, one per line.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let Self::Empirical(e) = self else {
            return Err(Error::Format("only empirical laws serialize to radii".into()));
        };
        writeln!(w, "radius")?;
        for r in &e.radii {
            writeln!(w, "{r:e}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut radii = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 && line == "radius" || line.is_empty() {
                continue;
            }
            radii.push(
                line.parse::<f64>()
                    .map_err(|e| Error::Format(format!("radius line {}: {e}", i + 1)))?,
            );
        }
        Ok(Self::Empirical(EmpiricalRadial::from_radii(radii)?))
    }
}

/// Sorted norms of the training rows; zero-norm rows are excluded and counted.
pub fn fit_empirical_radial(train: &SampleMatrix) -> Result<RadialLaw> {
    if train.n() == 0 {
        return Err(domain("cannot fit a radial law to an empty split"));
    }
    Ok(RadialLaw::Empirical(EmpiricalRadial::from_radii(train.row_norms())?))
}

pub fn sample_radial(law: &RadialLaw, rng: &mut Prng, m: usize) -> Vec<f64> {
    law.sample(rng, m)
}

/// Source distribution at `t = 0`.
#[derive(Clone, Debug)]
pub enum SourceSampler {
    Gaussian { d: usize },
    Radial { law: RadialLaw, d: usize },
}

impl SourceSampler {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { d } | Self::Radial { d, .. } => *d,
        }
    }

    pub fn sample(&self, rng: &mut Prng, m: usize) -> SampleMatrix {
        self.sample_with_radii(rng, m).0
    }

    /// Samples plus the radii drawn for them (Gaussian: the realized norms).
    pub fn sample_with_radii(&self, rng: &mut Prng, m: usize) -> (SampleMatrix, Vec<f64>) {
        match self {
            Self::Gaussian { d } => {
                let x = sample_gaussian(rng, m, *d);
                let r = x.row_norms();
                (x, r)
            }
            Self::Radial { law, d } => {
                let radii = law.sample(rng, m);
                let x = radial_rows(&radii, *d, rng);
                (x, radii)
            }
        }
    }
}

/// Rows `r_j * u_j` with fresh uniform directions `u_j`.
pub fn radial_rows(radii: &[f64], d: usize, rng: &mut Prng) -> SampleMatrix {
    let mut data = Array2::zeros((radii.len(), d));
    for (mut row, &r) in data.rows_mut().into_iter().zip(radii) {
        let s = row.as_slice_mut().expect("contiguous");
        uniform_direction(rng, d, s);
        s.iter_mut().for_each(|v| *v *= r);
    }
    SampleMatrix::new(data).expect("finite radii")
}

pub fn sample_source(src: &SourceSampler, rng: &mut Prng, m: usize) -> SampleMatrix {
    src.sample(rng, m)
}

/// Radial-source log-density `ln p_R(|x|) - ln|S^{d-1}| - (d-1) ln|x|`.
pub fn q_rad_logdensity(x: &[f64], radial_pdf: impl Fn(f64) -> f64) -> Result<f64> {
    q_rad_logdensity_ln(x, |r| radial_pdf(r).ln())
}

/// As [`q_rad_logdensity`], taking the radial log-density directly.
pub fn q_rad_logdensity_ln(x: &[f64], radial_ln_pdf: impl Fn(f64) -> f64) -> Result<f64> {
    let r = norm(x);
    if !(r > 0.0) {
        return Err(domain("radial source density is undefined at the origin"));
    }
    let d = x.len();
    Ok(radial_ln_pdf(r) - ln_sphere_area(d) - (d as f64 - 1.0) * r.ln())
}

/// Closed-form radial densities used by the KL diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticRadial {
    /// `scale * |Z|`, `Z ~ N(0, I_d)`.
    Chi { d: usize, scale: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl AnalyticRadial {
    pub fn ln_pdf(&self, r: f64) -> f64 {
        match *self {
            Self::Chi { d, scale } => chi_ln_pdf(r / scale, d) - scale.ln(),
            Self::Gamma { shape, scale } => gamma_ln_pdf(r, shape, scale),
        }
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if r < 0.0 {
            0.0
        } else {
            self.ln_pdf(r).exp()
        }
    }

    pub fn sample(&self, rng: &mut Prng) -> f64 {
        match *self {
            Self::Chi { d, scale } => {
                scale * (0..d).map(|_| rng.gaussian().powi(2)).sum::<f64>().sqrt()
            }
            Self::Gamma { shape, scale } => 0.5 * scale * rng.chi_squared_draw(2.0 * shape),
        }
    }
}

/// `KL(p_R || p_chi_d)` by adaptive Simpson over doubling segments of `[0, inf)`.
///
/// Returns `+inf` when the integrand has not decayed by `r = 2^40`, which is
/// how a radial tail too heavy for the chi law shows up.
pub fn radial_kl_gap(radial_ln_pdf: impl Fn(f64) -> f64, d: usize) -> f64 {
    let integrand = |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let lp = radial_ln_pdf(r);
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        lp.exp() * (lp - chi_ln_pdf(r, d))
    };
    let mut total = 0.0;
    let mut a = 0.0;
    let mut b = 0.5;
    while b <= 2f64.powi(40) {
        let piece = adaptive_simpson(&integrand, a, b, 1e-13);
        if !piece.is_finite() {
            return f64::INFINITY;
        }
        total += piece;
        let tail = radial_ln_pdf(b).exp() * b;
        if b >= 4.0 * (d as f64).sqrt() && piece.abs() < 1e-14 && tail < 1e-14 {
            return total.max(0.0);
        }
        a = b;
        b *= 2.0;
    }
    f64::INFINITY
}

/// Monte-Carlo check of the radial KL decomposition on isotropic data.
#[derive(Clone, Copy, Debug)]
pub struct KlDecomposition {
    /// MC estimate of `KL(p_data || phi_d)`.
    pub kl_data_gaussian: f64,
    pub stderr_gaussian: f64,
    /// Quadrature value of `KL(p_R || p_chi_d)`.
    pub kl_radial: f64,
    /// MC estimate of `KL(p_data || q_rad)`.
    pub kl_data_qrad: f64,
    pub stderr_qrad: f64,
}

/// Draws `n_mc` isotropic points `R U` with `R ~ law` and compares the two
/// KL routes. The data density is written in polar form from the generator
/// definition; the radial source density comes from [`q_rad_logdensity_ln`].
pub fn kl_decomposition_check(
    law: &AnalyticRadial,
    d: usize,
    rng: &mut Prng,
    n_mc: usize,
) -> Result<KlDecomposition> {
    let mut x = vec![0.0; d];
    let mut to_gauss = Vec::with_capacity(n_mc);
    let mut to_qrad = Vec::with_capacity(n_mc);
    let ln_area = ln_sphere_area(d);
    for _ in 0..n_mc {
        let r = law.sample(rng);
        uniform_direction(rng, d, &mut x);
        x.iter_mut().for_each(|v| *v *= r);
        let rr = norm(&x);
        // density of R U: radial density over the area of the radius-r sphere
        let ln_data = law.ln_pdf(rr) - (ln_area + (d as f64 - 1.0) * rr.ln());
        let ln_qrad = q_rad_logdensity_ln(&x, |s| law.ln_pdf(s))?;
        to_gauss.push(ln_data - gaussian_ln_pdf(&x));
        to_qrad.push(ln_data - ln_qrad);
    }
    let (m_g, se_g) = mean_stderr(&to_gauss);
    let (m_q, se_q) = mean_stderr(&to_qrad);
    Ok(KlDecomposition {
        kl_data_gaussian: m_g,
        stderr_gaussian: se_g,
        kl_radial: radial_kl_gap(|s| law.ln_pdf(s), d),
        kl_data_qrad: m_q,
        stderr_qrad: se_q,
    })
}

pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// DKW half-width `sqrt(ln(2/delta) / (2n))`.
pub fn dkw_band(n: usize, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(domain("DKW band needs n >= 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("DKW confidence level {delta} outside (0, 1)")));
    }
    Ok(((2.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Failure probability `2 exp(-2 n eps^2)` for a band of half-width `eps`.
pub fn dkw_delta(n: usize, eps: f64) -> f64 {
    2.0 * (-2.0 * n as f64 * eps * eps).exp()
}

/// Sup-distance between the empirical CDF of `radii` and a reference CDF.
pub fn empirical_cdf_gap(radii: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    crate::metrics::ks_1sample(radii, cdf)
}

#[derive(Clone, Copy, Debug)]
pub struct CouplingComparison {
    /// `E|R_a - R_b|` under the comonotone coupling.
    pub coupling_w1: f64,
    /// Sliced W1 between the two radial sources with independent directions.
    pub sliced_w1: f64,
    /// Combined Monte-Carlo error scale: the coupling mean's standard error
    /// and the sliced distance between two independent draws of source A.
    pub stderr: f64,
}

/// Compares the radial coupling cost with the sliced distance between the
/// induced sources, a testable surrogate for `W(q_a, q_b) <= W(mu_a, mu_b)`.
pub fn coupling_cost_vs_sliced(
    law_a: &RadialLaw,
    law_b: &RadialLaw,
    d: usize,
    rng: &mut Prng,
    m: usize,
    n_proj: usize,
) -> Result<CouplingComparison> {
    if m < 2 {
        return Err(domain("coupling comparison needs m >= 2"));
    }
    let (ra, rb) = comonotone_radii(law_a, law_b, rng, m);
    let diffs: Vec<f64> = ra.iter().zip(&rb).map(|(a, b)| (a - b).abs()).collect();
    let (coupling_w1, se_coupling) = mean_stderr(&diffs);

    let dirs = ProjectionSet::random(d, n_proj, rng);
    let src_a = SourceSampler::Radial {
        law: law_a.clone(),
        d,
    };
    let src_b = SourceSampler::Radial {
        law: law_b.clone(),
        d,
    };
    let xa = src_a.sample(rng, m);
    let xb = src_b.sample(rng, m);
    let xa2 = src_a.sample(rng, m);
    let sliced = sliced_w1(&xa, &xb, &dirs)?;
    let floor = sliced_w1(&xa, &xa2, &dirs)?;
    Ok(CouplingComparison {
        coupling_w1,
        sliced_w1: sliced,
        stderr: (se_coupling * se_coupling + floor * floor).sqrt(),
    })
}

/// Radii paired through a shared uniform; laws without a quantile function
/// fall back to matching sorted independent draws.
fn comonotone_radii(
    a: &RadialLaw,
    b: &RadialLaw,
    rng: &mut Prng,
    m: usize,
) -> (Vec<f64>, Vec<f64>) {
    let u: Vec<f64> = (0..m).map(|_| rng.uniform_open_closed()).collect();
    let side = |law: &RadialLaw, rng: &mut Prng| -> Vec<f64> {
        match law.quantile(0.5) {
            Some(_) => u.iter().map(|&v| law.quantile(v).expect("has quantile")).collect(),
            None => {
                let mut idx: Vec<usize> = (0..m).collect();
                idx.sort_by(|&i, &j| u[i].total_cmp(&u[j]));
                let mut draws = law.sample(rng, m);
                draws.sort_by(f64::total_cmp);
                let mut out = vec![0.0; m];
                for (rank, &i) in idx.iter().enumerate() {
                    out[i] = draws[rank];
                }
                out
            }
        }
    };
    let ra = side(a, rng);
    let rb = side(b, rng);
    (ra, rb)
}

/// Radial W1 between two laws by sampling (helper for diagnostics).
pub fn radial_w1(a: &RadialLaw, b: &RadialLaw, rng: &mut Prng, m: usize) -> Result<f64> {
    w1_1d(&a.sample(rng, m), &b.sample(rng, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ks_2sample;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fit_sorts_norms() {
        let x = SampleMatrix::new(ndarray::array![[3.0, 4.0], [0.0, 1.0]]).unwrap();
        let RadialLaw::Empirical(e) = fit_empirical_radial(&x).unwrap() else {
            panic!()
        };
        assert_eq!(e.radii(), &[1.0, 5.0]);
    }

    #[test]
    fn fit_excludes_zero_rows() {
        let x = SampleMatrix::new(ndarray::array![[0.0, 0.0], [0.0, 2.0]]).unwrap();
        let RadialLaw::Empirical(e) = fit_empirical_radial(&x).unwrap() else {
            panic!()
        };
        assert_eq!(e.radii(), &[2.0]);
        assert_eq!(e.excluded(), 1);
    }

    #[test]
    fn point_mass_law() {
        let x = SampleMatrix::new(ndarray::array![[2.0, 0.0]]).unwrap();
        let law = fit_empirical_radial(&x).unwrap();
        let s = law.sample(&mut Prng::new(1), 100);
        assert!(s.iter().all(|r| *r == 2.0));
    }

    #[test]
    fn inversion_indexing() {
        let e = EmpiricalRadial::from_radii(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.quantile(0.2), 1.0);
        assert_eq!(e.quantile(0.5), 2.0);
        assert_eq!(e.quantile(0.9), 3.0);
        assert_eq!(e.quantile(1.0), 3.0);
        assert_eq!(e.quantile(1e-300), 1.0);
        let single = EmpiricalRadial::from_radii(vec![5.0]).unwrap();
        for u in [1e-9, 0.3, 1.0] {
            assert_eq!(single.quantile(u), 5.0);
        }
    }

    #[test]
    fn rayleigh_mean() {
        let s = RadialLaw::Chi(2).sample(&mut Prng::new(2), 100_000);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - (std::f64::consts::PI / 2.0).sqrt()).abs() < 0.01, "{mean}");
    }

    #[test]
    fn radial_source_norms_match_radii() {
        let law = RadialLaw::Chi(5);
        let src = SourceSampler::Radial { law, d: 5 };
        let (x, radii) = src.sample_with_radii(&mut Prng::new(3), 2_000);
        for (n, r) in x.row_norms().iter().zip(&radii) {
            assert!((n - r).abs() <= 1e-12 * r);
        }
    }

    #[test]
    fn point_mass_source() {
        let law = RadialLaw::Empirical(EmpiricalRadial::from_radii(vec![2.0]).unwrap());
        let x = SourceSampler::Radial { law, d: 3 }.sample(&mut Prng::new(4), 10_000);
        assert!(x.row_norms().iter().all(|r| (r - 2.0).abs() <= 1e-14));
    }

    #[test]
    fn gaussian_source_norm_law() {
        let x = SourceSampler::Gaussian { d: 16 }.sample(&mut Prng::new(5), 100_000);
        let gap = empirical_cdf_gap(&x.row_norms(), |r| chi_cdf(r, 16));
        assert!(gap <= 0.01, "{gap}");
    }

    #[test]
    fn q_rad_matches_gaussian_in_2d() {
        let v = q_rad_logdensity(&[1.0, 0.0], |r| crate::numerics::chi_pdf(r, 2)).unwrap();
        assert_abs_diff_eq!(v, -(2.0 * std::f64::consts::PI).ln() - 0.5, epsilon = 1e-12);
        assert!(q_rad_logdensity(&[0.0, 0.0], |_| 1.0).is_err());
    }

    #[test]
    fn q_rad_one_dimension_halves() {
        let p = |r: f64| crate::numerics::gamma_pdf(r, 2.0, 1.0);
        let v = q_rad_logdensity(&[-1.5], p).unwrap();
        assert_abs_diff_eq!(v.exp(), p(1.5) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn kl_gap_zero_for_chi() {
        for d in [1, 2, 4, 16] {
            let law = AnalyticRadial::Chi { d, scale: 1.0 };
            let v = radial_kl_gap(|r| law.ln_pdf(r), d);
            assert!(v.abs() < 1e-9, "d={d}: {v}");
        }
    }

    #[test]
    fn kl_gap_positive_for_scaled_chi() {
        let law = AnalyticRadial::Chi { d: 3, scale: 2.0 };
        assert!(radial_kl_gap(|r| law.ln_pdf(r), 3) > 0.1);
    }

    #[test]
    fn kl_gap_flags_non_decaying_tail() {
        // Cauchy-like radial tail: integrand decays too slowly
        let ln_pdf = |r: f64| (2.0 / std::f64::consts::PI).ln() - (1.0 + r * r).ln();
        assert_eq!(radial_kl_gap(ln_pdf, 2), f64::INFINITY);
    }

    #[test]
    fn dkw_values() {
        assert_abs_diff_eq!(dkw_band(200, 0.1).unwrap(), (20f64.ln() / 400.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(dkw_band(200, 0.1).unwrap(), 0.086541, epsilon = 1e-6);
        assert_abs_diff_eq!(dkw_delta(500, 0.1), 2.0 * (-10f64).exp(), epsilon = 1e-18);
        assert_abs_diff_eq!(
            dkw_band(800, 0.05).unwrap(),
            0.5 * dkw_band(200, 0.05).unwrap(),
            epsilon = 1e-15
        );
        assert!(dkw_band(0, 0.1).is_err());
        assert!(dkw_band(10, 1.0).is_err());
    }

    #[test]
    fn coupling_same_law_is_zero() {
        let law = RadialLaw::Chi(3);
        let c = coupling_cost_vs_sliced(&law, &law, 3, &mut Prng::new(6), 2_000, 64).unwrap();
        assert_eq!(c.coupling_w1, 0.0);
        assert!(c.sliced_w1 <= 3.0 * c.stderr);
    }

    #[test]
    fn coupling_point_masses() {
        let a = RadialLaw::Empirical(EmpiricalRadial::from_radii(vec![1.0]).unwrap());
        let b = RadialLaw::Empirical(EmpiricalRadial::from_radii(vec![2.0]).unwrap());
        let c = coupling_cost_vs_sliced(&a, &b, 3, &mut Prng::new(7), 4_000, 64).unwrap();
        assert_eq!(c.coupling_w1, 1.0);
        // projections of uniform spheres of radius 1 and 2 in R^3: W1 = 1/2
        assert!((c.sliced_w1 - 0.5).abs() < 0.05, "{}", c.sliced_w1);
    }

    #[test]
    fn radii_csv_round_trip() {
        let law = RadialLaw::Empirical(EmpiricalRadial::from_radii(vec![0.25, 3.5, 1.0 / 3.0]).unwrap());
        let mut buf = Vec::new();
        law.write_csv(&mut buf).unwrap();
        let back = RadialLaw::read_csv(&buf[..]).unwrap();
        let (RadialLaw::Empirical(a), RadialLaw::Empirical(b)) = (&law, &back) else {
            panic!()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_radii_follow_chi() {
        let x = sample_gaussian(&mut Prng::new(8), 100_000, 16);
        let law = fit_empirical_radial(&x).unwrap();
        let gap = empirical_cdf_gap(law_radii(&law), |r| chi_cdf(r, 16));
        assert!(gap <= 0.01, "{gap}");
        let fresh = RadialLaw::Chi(16).sample(&mut Prng::new(9), 20_000);
        assert!(ks_2sample(law_radii(&law), &fresh).unwrap() < 0.03);
    }

    fn law_radii(law: &RadialLaw) -> &[f64] {
        match law {
            RadialLaw::Empirical(e) => e.radii(),
            _ => unreachable!(),
        }
    }
}
