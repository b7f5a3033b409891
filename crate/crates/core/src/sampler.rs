//! Fixed-step RK4 integration of a learned field, with optional tangential
//! projection of every field evaluation.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::flow::Method;
use crate::model::Mlp;
use crate::numerics::{sample_uniform_sphere, Prng, SampleMatrix};
use crate::radial::SourceSampler;
use crate::sphere::{project_in_place, PROJECTION_SKIP_NORM};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub steps: usize,
    pub project: bool,
    pub projection_skip_norm: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 128,
            project: true,
            projection_skip_norm: PROJECTION_SKIP_NORM,
        }
    }
}

impl SamplerConfig {
    pub fn nfe(&self) -> usize {
        4 * self.steps
    }
}

fn project_rows(x: ArrayView2<f64>, v: &mut Array2<f64>, skip: f64) {
    for (xr, mut vr) in x.rows().into_iter().zip(v.rows_mut()) {
        let xs = xr.to_vec();
        project_in_place(&xs, vr.as_slice_mut().expect("contiguous"), skip);
    }
}

/// Classic RK4 from `t = 0` to `t = 1`. `observe` is called with the state
/// after every step (and once with the initial state at `t = 0`).
pub fn integrate_observed<F, O>(mut field: F, x0: Array2<f64>, cfg: &SamplerConfig, mut observe: O) -> Result<Array2<f64>>
where
    F: FnMut(f64, ArrayView2<f64>) -> Array2<f64>,
    O: FnMut(f64, &Array2<f64>),
{
    if cfg.steps == 0 {
        return Err(domain("sampler needs at least one step"));
    }
    let h = 1.0 / cfg.steps as f64;
    let mut eval = |t: f64, x: ArrayView2<f64>| {
        let mut v = field(t, x);
        if cfg.project {
            project_rows(x, &mut v, cfg.projection_skip_norm);
        }
        v
    };
    let mut x = x0;
    observe(0.0, &x);
    for k in 0..cfg.steps {
        let t = k as f64 * h;
        let k1 = eval(t, x.view());
        let x2 = &x + &(&k1 * (0.5 * h));
        let k2 = eval(t + 0.5 * h, x2.view());
        let x3 = &x + &(&k2 * (0.5 * h));
        let k3 = eval(t + 0.5 * h, x3.view());
        let x4 = &x + &(&k3 * h);
        let k4 = eval(t + h, x4.view());
        Zip::from(&mut x)
            .and(&k1)
            .and(&k2)
            .and(&k3)
            .and(&k4)
            .for_each(|x, &a, &b, &c, &d| *x += h / 6.0 * (a + 2.0 * b + 2.0 * c + d));
        observe((k + 1) as f64 * h, &x);
    }
    Ok(x)
}

/// RK4 integration. Non-finite rows are carried through, not rejected.
pub fn integrate<F>(field: F, x0: Array2<f64>, cfg: &SamplerConfig) -> Result<Array2<f64>>
where
    F: FnMut(f64, ArrayView2<f64>) -> Array2<f64>,
{
    integrate_observed(field, x0, cfg, |_, _| {})
}

/// Rows evaluated per model call during sampling.
pub const SAMPLE_CHUNK: usize = 2_000;

/// Wraps a 32-bit model as an `f64` field.
pub fn model_field(model: &Mlp<f32>) -> impl FnMut(f64, ArrayView2<f64>) -> Array2<f64> + '_ {
    move |t, x| {
        let xf = x.mapv(|v| v as f32);
        let tf = vec![t as f32; x.nrows()];
        model.forward_unchecked(&tf, xf.view()).mapv(f64::from)
    }
}

/// Draws `m` source points and transports them with the model. Projection is
/// applied only for RAFM and only when `cfg.project` is set. Rows are
/// integrated in chunks of [`SAMPLE_CHUNK`]. The result may contain
/// non-finite rows.
pub fn generate(
    method: Method,
    model: &Mlp<f32>,
    source: &SourceSampler,
    rng: &mut Prng,
    m: usize,
    cfg: &SamplerConfig,
) -> Result<SampleMatrix> {
    if source.dim() != model.dim() {
        return Err(crate::error::dim_mismatch(format!(
            "source d={} for model d={}",
            source.dim(),
            model.dim()
        )));
    }
    let x0 = source.sample(rng, m).into_array();
    let cfg = SamplerConfig {
        project: cfg.project && method == Method::Rafm,
        ..*cfg
    };
    let mut out = Array2::zeros(x0.dim());
    let mut start = 0;
    while start < m {
        let end = (start + SAMPLE_CHUNK).min(m);
        let chunk = x0.slice(ndarray::s![start..end, ..]).to_owned();
        let x1 = integrate(model_field(model), chunk, &cfg)?;
        out.slice_mut(ndarray::s![start..end, ..]).assign(&x1);
        start = end;
    }
    Ok(SampleMatrix::raw(out))
}

/// Writes the trajectory of one start point as `t,x0,x1,...` CSV.
pub fn write_trace<F>(mut w: impl Write, field: F, start: &[f64], cfg: &SamplerConfig) -> Result<()>
where
    F: FnMut(f64, ArrayView2<f64>) -> Array2<f64>,
{
    let d = start.len();
    let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    writeln!(w, "t,{}", header.join(","))?;
    let x0 = Array2::from_shape_vec((1, d), start.to_vec()).expect("row vector");
    let mut io_err = None;
    integrate_observed(field, x0, cfg, |t, x| {
        let row: Vec<String> = x.row(0).iter().map(|v| v.to_string()).collect();
        if let Err(e) = writeln!(w, "{t},{}", row.join(",")) {
            io_err.get_or_insert(e);
        }
    })?;
    match io_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Max over rows and steps of `| |x_t| - |x_0| |` for the rotation field
/// `v = Omega x` started on the unit sphere.
pub fn rotation_drift(omega: &Array2<f64>, starts: Array2<f64>, steps: usize, project: bool) -> Result<f64> {
    let r0: Vec<f64> = starts.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let cfg = SamplerConfig {
        steps,
        project,
        projection_skip_norm: PROJECTION_SKIP_NORM,
    };
    let mut worst = 0.0f64;
    integrate_observed(
        |_, x| x.dot(&omega.t()),
        starts,
        &cfg,
        |_, x| {
            for (row, r) in x.rows().into_iter().zip(&r0) {
                worst = worst.max((row.dot(&row).sqrt() - r).abs());
            }
        },
    )?;
    Ok(worst)
}

/// Random skew-symmetric `(A - A^T) / 2` with standard normal `A`.
pub fn random_skew(d: usize, rng: &mut Prng) -> Array2<f64> {
    let a = Array2::from_shape_fn((d, d), |_| rng.gaussian());
    (&a - &a.t()) * 0.5
}

pub const DRIFT_PROBE_STARTS: usize = 64;

/// Norm drift of a projected RK4 solve of a random rotation field from unit
/// sphere starts.
pub fn norm_drift_probe(d: usize, steps: usize, rng: &mut Prng) -> Result<f64> {
    let omega = random_skew(d, rng);
    let starts = sample_uniform_sphere(rng, DRIFT_PROBE_STARTS, d).into_array();
    rotation_drift(&omega, starts, steps, true)
}

/// Integrates `v = L x` and `v = L x + eps e_1` from the same start and
/// returns the final gap together with the bound `e^L eps`.
pub fn gronwall_probe(l: f64, eps: f64, d: usize) -> Result<(f64, f64)> {
    gronwall_probe_with_steps(l, eps, d, SamplerConfig::default().steps)
}

pub fn gronwall_probe_with_steps(l: f64, eps: f64, d: usize, steps: usize) -> Result<(f64, f64)> {
    if !(l >= 0.0) || !(eps >= 0.0) || d == 0 {
        return Err(domain(format!("gronwall probe needs L >= 0, eps >= 0, d >= 1 (got {l}, {eps}, {d})")));
    }
    let cfg = SamplerConfig {
        steps,
        project: false,
        projection_skip_norm: PROJECTION_SKIP_NORM,
    };
    let start = Array2::from_shape_fn((1, d), |(_, j)| 1.0 / (1.0 + j as f64));
    let a = integrate(|_, x| x.mapv(|v| l * v), start.clone(), &cfg)?;
    let b = integrate(
        |_, x| {
            let mut v = x.mapv(|v| l * v);
            v.column_mut(0).mapv_inplace(|c| c + eps);
            v
        },
        start,
        &cfg,
    )?;
    let gap = (&a - &b).iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((gap, l.exp() * eps))
}
