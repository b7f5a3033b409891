//! Conditional paths, the regression loss and the training loop for Gaussian
//! FM, Source-only and RAFM.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, NdFloat};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, domain, Error, Result};
use crate::model::{Adam, Mlp};
use crate::numerics::{norm, uniform_direction, Prng, SampleMatrix};
use crate::radial::{RadialLaw, SourceSampler};
use crate::sphere::GeodesicPair;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GaussianFm,
    SourceOnly,
    Rafm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GaussianFm, Method::SourceOnly, Method::Rafm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GaussianFm => "gaussian_fm",
            Self::SourceOnly => "source_only",
            Self::Rafm => "rafm",
        }
    }

    /// Whether the method starts from the radial source.
    pub fn uses_radial_source(&self) -> bool {
        !matches!(self, Self::GaussianFm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| domain(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialMode {
    #[default]
    Empirical,
    Oracle,
}

/// Source distribution for a method: `N(0, I)` for Gaussian FM, otherwise
/// the radial source built from `law`.
pub fn source_for(method: Method, law: &RadialLaw, d: usize) -> SourceSampler {
    match method {
        Method::GaussianFm => SourceSampler::Gaussian { d },
        Method::SourceOnly | Method::Rafm => SourceSampler::Radial {
            law: law.clone(),
            d,
        },
    }
}

/// Regression batch: times, path points and target velocities.
#[derive(Clone, Debug)]
pub struct PathBatch {
    pub t: Vec<f64>,
    pub x_t: Array2<f64>,
    pub target: Array2<f64>,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Checks the spherical-path invariants against the target rows `x1`.
    pub fn check_spherical(&self, x1: ArrayView2<f64>, tol: f64) -> Result<()> {
        for ((xt, v), x1) in self.x_t.rows().into_iter().zip(self.target.rows()).zip(x1.rows()) {
            let (xt, v, x1) = (xt.to_vec(), v.to_vec(), x1.to_vec());
            let (rt, r1, rv) = (norm(&xt), norm(&x1), norm(&v));
            if (rt - r1).abs() > tol * r1 {
                return Err(domain(format!("path radius {rt} vs target radius {r1}")));
            }
            let inner = crate::numerics::dot(&xt, &v);
            if inner.abs() > tol * rt * rv {
                return Err(domain(format!("velocity not tangent: <x,v> = {inner}")));
            }
        }
        Ok(())
    }
}

fn check_batch(x0: ArrayView2<f64>, x1: ArrayView2<f64>, t: &[f64]) -> Result<()> {
    if x0.dim() != x1.dim() || t.len() != x1.nrows() {
        return Err(dim_mismatch(format!(
            "path batch x0 {:?}, x1 {:?}, {} times",
            x0.dim(),
            x1.dim(),
            t.len()
        )));
    }
    if x1.nrows() == 0 {
        return Err(domain("empty batch"));
    }
    if t.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(domain("path time outside [0, 1]"));
    }
    Ok(())
}

/// Linear path `x_t = (1-t) x0 + t x1`, target `x1 - x0`.
pub fn linear_batch_from(x0: ArrayView2<f64>, x1: ArrayView2<f64>, t: &[f64]) -> Result<PathBatch> {
    check_batch(x0, x1, t)?;
    let mut x_t = Array2::zeros(x1.dim());
    let mut target = Array2::zeros(x1.dim());
    for (i, &ti) in t.iter().enumerate() {
        for j in 0..x1.ncols() {
            let (a, b) = (x0[[i, j]], x1[[i, j]]);
            x_t[[i, j]] = (1.0 - ti) * a + ti * b;
            target[[i, j]] = b - a;
        }
    }
    Ok(PathBatch {
        t: t.to_vec(),
        x_t,
        target,
    })
}

/// Independent coupling with the given source; draws `t` for every row,
/// then the source rows.
pub fn make_batch_linear(x1: ArrayView2<f64>, source: &SourceSampler, rng: &mut Prng) -> Result<PathBatch> {
    if source.dim() != x1.ncols() {
        return Err(dim_mismatch(format!(
            "source d={} for data d={}",
            source.dim(),
            x1.ncols()
        )));
    }
    let t: Vec<f64> = (0..x1.nrows()).map(|_| rng.uniform()).collect();
    let x0 = source.sample(rng, x1.nrows());
    linear_batch_from(x0.view(), x1, &t)
}

/// Spherical path between `|x1| u0` and `x1`; `u0` rows must be unit vectors.
pub fn rafm_batch_from(x1: ArrayView2<f64>, t: &[f64], u0: ArrayView2<f64>) -> Result<PathBatch> {
    check_batch(u0, x1, t)?;
    let d = x1.ncols();
    let mut x_t = Array2::zeros(x1.dim());
    let mut target = Array2::zeros(x1.dim());
    let mut x0 = vec![0.0; d];
    for (i, &ti) in t.iter().enumerate() {
        let row = x1.row(i).to_vec();
        let r = norm(&row);
        for (j, v) in x0.iter_mut().enumerate() {
            *v = r * u0[[i, j]];
        }
        let pair = GeodesicPair::new(&x0, &row)?;
        let mut xt = x_t.row_mut(i);
        pair.slerp_into(ti, xt.as_slice_mut().expect("contiguous"));
        let mut vt = target.row_mut(i);
        pair.velocity_into(ti, vt.as_slice_mut().expect("contiguous"));
    }
    Ok(PathBatch {
        t: t.to_vec(),
        x_t,
        target,
    })
}

/// Matched-radius coupling: rows of `x1` with zero norm are dropped (the
/// count is returned); for each kept row, `t` then `u0` are drawn.
pub fn make_batch_rafm(x1: ArrayView2<f64>, rng: &mut Prng) -> Result<(PathBatch, usize)> {
    let d = x1.ncols();
    let keep: Vec<usize> = (0..x1.nrows())
        .filter(|&i| {
            let r = x1.row(i).dot(&x1.row(i)).sqrt();
            r > 0.0 && r.is_finite()
        })
        .collect();
    let dropped = x1.nrows() - keep.len();
    if keep.is_empty() {
        return Err(domain("every target row in the batch has zero norm"));
    }
    let x1 = x1.select(ndarray::Axis(0), &keep);
    let n = keep.len();
    let mut t = Vec::with_capacity(n);
    let mut u0 = Array2::zeros((n, d));
    for i in 0..n {
        t.push(rng.uniform());
        let mut row = u0.row_mut(i);
        uniform_direction(rng, d, row.as_slice_mut().expect("contiguous"));
    }
    Ok((rafm_batch_from(x1.view(), &t, u0.view())?, dropped))
}

/// Mean squared error over all `B * d` entries and its parameter gradient.
pub fn cfm_loss<T: NdFloat>(model: &Mlp<T>, batch: &PathBatch) -> Result<(f64, Mlp<T>)> {
    let c = |v: f64| T::from(v).unwrap();
    let t: Vec<T> = batch.t.iter().map(|&v| c(v)).collect();
    let x = batch.x_t.mapv(c);
    let target = batch.target.mapv(c);
    let (out, cache) = model.forward_cached(&t, x.view())?;
    let diff = out - &target;
    let count = diff.len() as f64;
    let loss = diff.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>() / count;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss {loss} on batch of {} rows (max |target| {:.3e}, max |output| {:.3e})",
            batch.len(),
            batch.target.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            diff.iter().zip(target.iter()).fold(0.0f64, |a, (d, t)| {
                a.max((*d + *t).to_f64().unwrap().abs())
            })
        )));
    }
    let upstream = diff.mapv(|v| v * c(2.0 / count));
    let grads = model.backward(&cache, upstream.view())?;
    Ok((loss, grads))
}

/// Loss only, no gradient.
pub fn cfm_loss_value<T: NdFloat>(model: &Mlp<T>, batch: &PathBatch) -> Result<f64> {
    let c = |v: f64| T::from(v).unwrap();
    let t: Vec<T> = batch.t.iter().map(|&v| c(v)).collect();
    let out = model.forward(&t, batch.x_t.mapv(c).view())?;
    let sum: f64 = out
        .iter()
        .zip(batch.target.iter())
        .map(|(o, t)| (o.to_f64().unwrap() - t).powi(2))
        .sum();
    Ok(sum / out.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            batch_size: 256,
            lr: 1e-3,
            checkpoint_every: 5_000,
        }
    }
}

/// Substream ids derived from a run seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const BATCHES: u64 = 1;
    pub const SAMPLING: u64 = 2;
    pub const PROBE: u64 = 3;
}

pub const PROBE_ROWS: usize = 1_024;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Mlp<f32>,
    /// Loss at every step, starting at step 1.
    pub losses: Vec<f64>,
    /// Loss on a fixed probe batch before and after training.
    pub probe_loss: Option<(f64, f64)>,
    /// Zero-norm rows removed from RAFM batches.
    pub dropped_rows: u64,
    pub checkpoints: Vec<PathBuf>,
    /// Wall time of each optimisation step (batch construction included).
    pub step_seconds: Vec<f64>,
}

fn batch_for(
    method: Method,
    x1: ArrayView2<f64>,
    source: &SourceSampler,
    rng: &mut Prng,
) -> Result<(PathBatch, usize)> {
    match method {
        Method::Rafm => make_batch_rafm(x1, rng),
        Method::GaussianFm | Method::SourceOnly => Ok((make_batch_linear(x1, source, rng)?, 0)),
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("checkpoint_{step}.pt"))
}

/// Trains the shared MLP for `method`. `source` is used by the linear-path
/// methods only; RAFM copies radii from the data. Mini-batches are drawn
/// with replacement. When `probe` is given, a fixed path batch built from
/// its first rows is scored before and after training.
pub fn train(
    method: Method,
    source: &SourceSampler,
    data: &SampleMatrix,
    probe: Option<&SampleMatrix>,
    cfg: &TrainConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let n = data.n();
    let d = data.d();
    if n == 0 {
        return Err(Error::EmptyDataset("training split is empty".into()));
    }
    if source.dim() != d {
        return Err(dim_mismatch(format!("source d={} for data d={d}", source.dim())));
    }
    if cfg.batch_size == 0 {
        return Err(domain("batch size must be positive"));
    }
    let mut model = Mlp::<f32>::init(d, &mut Prng::with_stream(seed, streams::INIT))?;
    let mut opt = Adam::<f32>::with_lr(model.param_count(), cfg.lr);
    let mut rng = Prng::with_stream(seed, streams::BATCHES);

    let probe_batch = match probe {
        Some(p) if p.n() > 0 => {
            let rows = p.n().min(PROBE_ROWS);
            let idx: Vec<usize> = (0..rows).collect();
            let x1 = p.select_rows(&idx);
            let mut prng = Prng::with_stream(seed, streams::PROBE);
            Some(batch_for(method, x1.view(), source, &mut prng)?.0)
        }
        _ => None,
    };
    let probe_start = match &probe_batch {
        Some(b) => Some(cfm_loss_value(&model, b)?),
        None => None,
    };

    let mut losses = Vec::with_capacity(cfg.steps as usize);
    let mut dropped_rows = 0u64;
    let mut checkpoints = Vec::new();
    let mut idx = vec![0usize; cfg.batch_size];
    let mut step_seconds = Vec::with_capacity(cfg.steps as usize);
    for step in 1..=cfg.steps {
        let started = Instant::now();
        idx.iter_mut().for_each(|i| *i = rng.below(n));
        let x1 = data.select_rows(&idx);
        let (batch, dropped) = batch_for(method, x1.view(), source, &mut rng)?;
        dropped_rows += dropped as u64;
        if cfg!(debug_assertions) && step % 1_000 == 1 {
            match method {
                Method::Rafm if dropped == 0 => batch.check_spherical(x1.view(), 1e-6)?,
                _ => {}
            }
        }
        let (loss, grads) = match cfm_loss(&model, &batch) {
            Ok(v) => v,
            Err(e) => {
                if let Some(dir) = checkpoint_dir {
                    std::fs::create_dir_all(dir)?;
                    model.save(&dir.join(format!("checkpoint_{step}_diverged.pt")), step)?;
                }
                return Err(e);
            }
        };
        opt.step(&mut model, &grads)?;
        losses.push(loss);
        step_seconds.push(started.elapsed().as_secs_f64());
        let at_checkpoint = cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0;
        if let Some(dir) = checkpoint_dir {
            if at_checkpoint || step == cfg.steps {
                std::fs::create_dir_all(dir)?;
                let path = checkpoint_path(dir, step);
                model.save(&path, step)?;
                checkpoints.push(path);
            }
        }
    }
    if let (Some(dir), 0) = (checkpoint_dir, cfg.steps) {
        std::fs::create_dir_all(dir)?;
        let path = checkpoint_path(dir, 0);
        model.save(&path, 0)?;
        checkpoints.push(path);
    }
    let probe_loss = match (&probe_batch, probe_start) {
        (Some(b), Some(start)) => Some((start, cfm_loss_value(&model, b)?)),
        _ => None,
    };
    Ok(TrainOutcome {
        model,
        losses,
        probe_loss,
        dropped_rows,
        checkpoints,
        step_seconds,
    })
}

/// Writes the loss log as `step,loss` CSV.
pub fn write_loss_log(mut w: impl Write, losses: &[f64]) -> Result<()> {
    writeln!(w, "step,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, l)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_gaussian, sample_uniform_sphere};
    use ndarray::array;

    #[test]
    fn linear_endpoints_and_target() {
        let x0 = array![[1.0, 2.0], [0.0, -1.0], [3.0, 3.0]];
        let x1 = array![[5.0, -2.0], [4.0, 4.0], [1.0, 0.5]];
        let b = linear_batch_from(x0.view(), x1.view(), &[0.0, 1.0, 0.25]).unwrap();
        assert_eq!(b.x_t.row(0), x0.row(0));
        assert_eq!(b.x_t.row(1), x1.row(1));
        assert_eq!(b.target, &x1 - &x0);
        let b2 = linear_batch_from(x0.view(), x1.view(), &[0.7, 0.1, 0.9]).unwrap();
        assert_eq!(b.target, b2.target);
    }

    #[test]
    fn linear_batch_uses_source() {
        let mut rng = Prng::new(1);
        let x1 = sample_gaussian(&mut rng, 64, 3);
        let b = make_batch_linear(x1.view(), &SourceSampler::Gaussian { d: 3 }, &mut rng).unwrap();
        assert_eq!(b.len(), 64);
        assert!(b.t.iter().all(|t| (0.0..1.0).contains(t)));
        let bad = SourceSampler::Gaussian { d: 4 };
        assert!(make_batch_linear(x1.view(), &bad, &mut rng).is_err());
    }

    #[test]
    fn rafm_batch_invariants() {
        let mut rng = Prng::new(2);
        for d in [2, 3, 16] {
            let x1 = sample_gaussian(&mut rng, 256, d).into_array() * 3.0;
            let (b, dropped) = make_batch_rafm(x1.view(), &mut rng).unwrap();
            assert_eq!(dropped, 0);
            b.check_spherical(x1.view(), 1e-6).unwrap();
        }
    }

    #[test]
    fn rafm_aligned_start_has_zero_velocity() {
        let x1 = array![[3.0, 4.0, 0.0]];
        let u0 = array![[0.6, 0.8, 0.0]];
        let b = rafm_batch_from(x1.view(), &[0.4], u0.view()).unwrap();
        assert!(b.target.iter().all(|v| v.abs() < 1e-15));
        for (a, e) in b.x_t.iter().zip(x1.iter()) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn rafm_drops_zero_rows() {
        let x1 = array![[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]];
        let (b, dropped) = make_batch_rafm(x1.view(), &mut Prng::new(3)).unwrap();
        assert_eq!((b.len(), dropped), (1, 2));
        assert!(make_batch_rafm(array![[0.0, 0.0]].view(), &mut Prng::new(3)).is_err());
    }

    #[test]
    fn loss_zero_at_target_and_plug_in_for_zero_model() {
        let mut rng = Prng::new(4);
        let x1 = sample_gaussian(&mut rng, 16, 3);
        let b = make_batch_linear(x1.view(), &SourceSampler::Gaussian { d: 3 }, &mut rng).unwrap();
        let zero = Mlp::<f64>::zeros(3).unwrap();
        let (loss, _) = cfm_loss(&zero, &b).unwrap();
        let expected = b.target.iter().map(|v| v * v).sum::<f64>() / 48.0;
        assert!((loss - expected).abs() < 1e-12);

        // a model whose output equals the target: target constant 0 batch
        let zb = PathBatch {
            t: b.t.clone(),
            x_t: b.x_t.clone(),
            target: Array2::zeros((16, 3)),
        };
        let (loss, grads) = cfm_loss(&zero, &zb).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.params().all(|g| *g == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = Prng::new(5);
        let model = Mlp::<f64>::init(4, &mut rng).unwrap();
        let x1 = sample_uniform_sphere(&mut rng, 8, 4).into_array() * 2.0;
        let (b, _) = make_batch_rafm(x1.view(), &mut rng).unwrap();
        let (_, grads) = cfm_loss(&model, &b).unwrap();
        let base = model.flat();
        let mut probe = model.clone();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for (i, g) in grads.flat().into_iter().enumerate().step_by(37) {
            let mut p = base.clone();
            p[i] += h;
            probe.set_flat(&p).unwrap();
            let up = cfm_loss_value(&probe, &b).unwrap();
            p[i] -= 2.0 * h;
            probe.set_flat(&p).unwrap();
            let down = cfm_loss_value(&probe, &b).unwrap();
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_steps_returns_initialisation() {
        let mut rng = Prng::new(6);
        let data = sample_gaussian(&mut rng, 50, 2);
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let out = train(Method::Rafm, &SourceSampler::Gaussian { d: 2 }, &data, None, &cfg, 7, None).unwrap();
        let init = Mlp::<f32>::init(2, &mut Prng::with_stream(7, streams::INIT)).unwrap();
        assert_eq!(out.model, init);
        assert!(out.losses.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_checkpoints() {
        let mut rng = Prng::new(8);
        let data = sample_gaussian(&mut rng, 200, 2);
        let cfg = TrainConfig {
            steps: 30,
            batch_size: 32,
            lr: 1e-3,
            checkpoint_every: 20,
        };
        let dir = tempfile::tempdir().unwrap();
        let src = SourceSampler::Gaussian { d: 2 };
        let a = train(Method::GaussianFm, &src, &data, Some(&data), &cfg, 1, Some(dir.path())).unwrap();
        let b = train(Method::GaussianFm, &src, &data, Some(&data), &cfg, 1, None).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
        let names: Vec<_> = a
            .checkpoints
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["checkpoint_20.pt", "checkpoint_30.pt"]);
        let (loaded, step) = Mlp::<f32>::load(&a.checkpoints[1]).unwrap();
        assert_eq!((loaded, step), (a.model.clone(), 30));
        let c = train(Method::GaussianFm, &src, &data, None, &cfg, 2, None).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("msgm".parse::<Method>().is_err());
    }
}
