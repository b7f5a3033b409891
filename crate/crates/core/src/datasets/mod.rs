//! Benchmark data: correlated Student-t and anisotropic Gaussian mixtures,
//! the 2D radial-angular toy, PIV vorticity snapshots, and the fixed
//! 60/20/20 split.

mod piv;

pub use piv::{
    parse_davis, parse_davis_with_shape, piv_pipeline, prepare_piv, subsample_grid,
    subsample_indices, vorticity, write_davis, PivPrepared, RejectReason, VelocityFrame,
    PIV_NX, PIV_NY, PIV_SCALE,
};

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{Array2, Axis};

use crate::error::{domain, Result};
use crate::numerics::{sample_gaussian, sample_student_t, Prng, SampleMatrix};
use crate::radial::RadiusOracle;

pub const TRAIN_FRACTION: f64 = 0.6;
pub const VALID_FRACTION: f64 = 0.2;

/// `d x d` matrix with i.i.d. standard normal entries drawn from `matrix_seed`.
pub fn mixing_matrix(d: usize, matrix_seed: u64) -> Array2<f64> {
    sample_gaussian(&mut Prng::new(matrix_seed), d, d).into_array()
}

/// `X = Z A^T` with `Z` i.i.d. Student-t(`nu`) and `A = mixing_matrix(d, matrix_seed)`.
pub fn gen_student_t(d: usize, nu: f64, n: usize, matrix_seed: u64, data_seed: u64) -> Result<SampleMatrix> {
    gen_student_t_with_matrix(&mixing_matrix(d, matrix_seed), nu, n, data_seed)
}

pub fn gen_student_t_with_matrix(a: &Array2<f64>, nu: f64, n: usize, data_seed: u64) -> Result<SampleMatrix> {
    check_square(a)?;
    let z = sample_student_t(&mut Prng::new(data_seed), n, a.nrows(), nu)?;
    SampleMatrix::new(z.as_array().dot(&a.t()))
}

/// `X = Z A^T` with Gaussian `Z` and the same mixing matrix as [`gen_student_t`].
pub fn gen_aniso_gauss(d: usize, n: usize, matrix_seed: u64, data_seed: u64) -> Result<SampleMatrix> {
    gen_aniso_gauss_with_matrix(&mixing_matrix(d, matrix_seed), n, data_seed)
}

pub fn gen_aniso_gauss_with_matrix(a: &Array2<f64>, n: usize, data_seed: u64) -> Result<SampleMatrix> {
    check_square(a)?;
    let z = sample_gaussian(&mut Prng::new(data_seed), n, a.nrows());
    SampleMatrix::new(z.as_array().dot(&a.t()))
}

fn check_square(a: &Array2<f64>) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(domain(format!("mixing matrix must be square, got {:?}", a.dim())));
    }
    Ok(())
}

/// Parameters of the 2D radial-angular toy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyParams {
    pub modes: usize,
    pub kappa: f64,
    pub scale: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            modes: 4,
            kappa: 5.0,
            scale: 1.0,
        }
    }
}

/// Rows `r (cos a, sin a)` with `r = |t_3| * scale` and `a` from a uniform
/// mixture of wrapped Gaussians (std `1/sqrt(kappa)`) centred at `2 pi k / modes`.
pub fn gen_toy2d(n: usize, params: ToyParams, data_seed: u64) -> Result<SampleMatrix> {
    if params.modes == 0 || !(params.kappa > 0.0) {
        return Err(domain("toy needs modes >= 1 and kappa > 0"));
    }
    let mut rng = Prng::new(data_seed);
    let sigma = 1.0 / params.kappa.sqrt();
    let mut values = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let r = rng.student_t(3.0).abs() * params.scale;
        let k = rng.below(params.modes);
        let centre = 2.0 * PI * k as f64 / params.modes as f64;
        let angle = (centre + sigma * rng.gaussian()).rem_euclid(2.0 * PI);
        let (s, c) = angle.sin_cos();
        values.push(r * c);
        values.push(r * s);
    }
    SampleMatrix::from_vec(n, 2, values)
}

/// Which benchmark a run uses.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetKind {
    StudentT { d: usize, nu: f64 },
    AnisoGauss { d: usize },
    Toy2d(ToyParams),
    /// Preprocessed PIV matrix on an `ny x nx` grid, loaded from `path`.
    Piv { ny: usize, nx: usize, path: PathBuf },
    /// First `d` coordinates of a preprocessed PIV matrix, re-centred.
    PivTrunc { d: usize, path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_samples: usize,
    pub matrix_seed: u64,
    pub data_seed: u64,
    pub split_seed: u64,
}

impl DatasetSpec {
    pub fn dim(&self) -> usize {
        match &self.kind {
            DatasetKind::StudentT { d, .. } | DatasetKind::AnisoGauss { d } => *d,
            DatasetKind::Toy2d(_) => 2,
            DatasetKind::Piv { ny, nx, .. } => ny * nx,
            DatasetKind::PivTrunc { d, .. } => *d,
        }
    }

    /// Directory-friendly label, e.g. `student_t_d16`.
    pub fn label(&self) -> String {
        match &self.kind {
            DatasetKind::StudentT { d, .. } => format!("student_t_d{d}"),
            DatasetKind::AnisoGauss { d } => format!("aniso_gauss_d{d}"),
            DatasetKind::Toy2d(_) => "toy2d".to_string(),
            DatasetKind::Piv { ny, nx, .. } => format!("piv_d{}", ny * nx),
            DatasetKind::PivTrunc { d, .. } => format!("piv_d{d}"),
        }
    }

    pub fn generate(&self) -> Result<SampleMatrix> {
        match &self.kind {
            DatasetKind::StudentT { d, nu } => {
                gen_student_t(*d, *nu, self.n_samples, self.matrix_seed, self.data_seed)
            }
            DatasetKind::AnisoGauss { d } => {
                gen_aniso_gauss(*d, self.n_samples, self.matrix_seed, self.data_seed)
            }
            DatasetKind::Toy2d(p) => gen_toy2d(self.n_samples, *p, self.data_seed),
            DatasetKind::Piv { ny, nx, path } => {
                let (_, m) = crate::artifact::load_matrix(path)?;
                if m.d() != ny * nx {
                    return Err(domain(format!(
                        "{} holds d={}, expected {}",
                        path.display(),
                        m.d(),
                        ny * nx
                    )));
                }
                Ok(m)
            }
            DatasetKind::PivTrunc { d, path } => {
                let (_, m) = crate::artifact::load_matrix(path)?;
                let mut t = m.truncate_cols(*d)?;
                t.center_columns();
                Ok(t)
            }
        }
    }

    /// Fresh-draw radial oracle; `None` for real data.
    pub fn oracle(&self) -> Option<Arc<dyn RadiusOracle>> {
        let gen = match &self.kind {
            DatasetKind::StudentT { d, nu } => GeneratorOracle::StudentT {
                nu: *nu,
                a: mixing_matrix(*d, self.matrix_seed),
            },
            DatasetKind::AnisoGauss { d } => GeneratorOracle::Gaussian {
                a: mixing_matrix(*d, self.matrix_seed),
            },
            DatasetKind::Toy2d(p) => GeneratorOracle::Toy { scale: p.scale },
            _ => return None,
        };
        Some(Arc::new(gen))
    }
}

/// Norms of fresh samples from a synthetic generator.
#[derive(Clone, Debug)]
pub enum GeneratorOracle {
    StudentT { nu: f64, a: Array2<f64> },
    Gaussian { a: Array2<f64> },
    Toy { scale: f64 },
}

impl RadiusOracle for GeneratorOracle {
    fn draw(&self, rng: &mut Prng, m: usize) -> Vec<f64> {
        match self {
            Self::StudentT { nu, a } => {
                let z = sample_student_t(rng, m, a.nrows(), *nu).expect("nu > 0");
                crate::numerics::row_norms(z.as_array().dot(&a.t()).view())
            }
            Self::Gaussian { a } => {
                let z = sample_gaussian(rng, m, a.nrows());
                crate::numerics::row_norms(z.as_array().dot(&a.t()).view())
            }
            Self::Toy { scale } => (0..m).map(|_| rng.student_t(3.0).abs() * scale).collect(),
        }
    }

    fn label(&self) -> String {
        match self {
            Self::StudentT { nu, a } => format!("student_t(nu={nu}, d={})", a.nrows()),
            Self::Gaussian { a } => format!("aniso_gauss(d={})", a.nrows()),
            Self::Toy { scale } => format!("toy2d(scale={scale})"),
        }
    }
}

/// Train/validation/test partition with the permutation that produced it.
#[derive(Clone, Debug)]
pub struct DataSplit {
    pub train: SampleMatrix,
    pub valid: SampleMatrix,
    pub test: SampleMatrix,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Deterministic permutation, then contiguous `floor(0.6n) / floor(0.2n) / rest`.
pub fn split(data: &SampleMatrix, split_seed: u64) -> Result<DataSplit> {
    let n = data.n();
    if n < 5 {
        return Err(domain(format!("split needs at least 5 rows, got {n}")));
    }
    let perm = Prng::new(split_seed).permutation(n);
    let n_train = (TRAIN_FRACTION * n as f64).floor() as usize;
    let n_valid = (VALID_FRACTION * n as f64).floor() as usize;
    let train_idx = perm[..n_train].to_vec();
    let valid_idx = perm[n_train..n_train + n_valid].to_vec();
    let test_idx = perm[n_train + n_valid..].to_vec();
    Ok(DataSplit {
        train: data.select_rows(&train_idx),
        valid: data.select_rows(&valid_idx),
        test: data.select_rows(&test_idx),
        train_idx,
        valid_idx,
        test_idx,
    })
}

/// Sample covariance (divisor `n - 1`) of the rows.
pub fn covariance(x: &SampleMatrix) -> Array2<f64> {
    let mean = x.column_means();
    let centred = x.as_array() - &mean.insert_axis(Axis(0));
    centred.t().dot(&centred) / (x.n() as f64 - 1.0)
}
