//! Time-conditioned MLP velocity field with hand-written backprop and Adam.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use serde::{Deserialize, Serialize};

use crate::artifact::{read_blob_file, write_blob_file};
use crate::error::{dim_mismatch, domain, Error, Result};
use crate::numerics::Prng;

pub const WIDTH: usize = 128;
pub const HIDDEN_LAYERS: usize = 3;

/// Affine layer `y = x W + b` with `W` stored as `(fan_in, fan_out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: NdFloat> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }
}

#[inline]
fn sigmoid<T: NdFloat>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// `x * sigmoid(x)`.
#[inline]
pub fn swish<T: NdFloat>(z: T) -> T {
    z * sigmoid(z)
}

#[inline]
fn swish_grad<T: NdFloat>(z: T) -> T {
    let s = sigmoid(z);
    s * (T::one() + z * (T::one() - s))
}

/// `v(t, x)`: input `[x; t]`, three Swish hidden layers of width 128, linear
/// output of size `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    d: usize,
    pub layers: Vec<Dense<T>>,
}

/// Activations kept from a forward pass for [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    input: Array2<T>,
    pre: Vec<Array2<T>>,
    post: Vec<Array2<T>>,
}

fn layer_dims(d: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![(d + 1, WIDTH)];
    dims.extend(std::iter::repeat_n((WIDTH, WIDTH), HIDDEN_LAYERS - 1));
    dims.push((WIDTH, d));
    dims
}

/// Closed-form parameter count for data dimension `d`.
pub fn param_count_for(d: usize) -> usize {
    layer_dims(d).iter().map(|(i, o)| i * o + o).sum()
}

impl<T: NdFloat> Mlp<T> {
    pub fn zeros(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(domain("model dimension must be >= 1"));
        }
        Ok(Self {
            d,
            layers: layer_dims(d).into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
        })
    }

    /// Fan-in uniform initialisation `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
    /// weights and biases, drawn layer by layer (weights first).
    pub fn init(d: usize, rng: &mut Prng) -> Result<Self> {
        let mut m = Self::zeros(d)?;
        for layer in &mut m.layers {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            let mut draw = || T::from(bound * (2.0 * rng.uniform() - 1.0)).unwrap();
            layer.w.iter_mut().for_each(|w| *w = draw());
            layer.b.iter_mut().for_each(|b| *b = draw());
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn layer_shapes(&self) -> Vec<[usize; 2]> {
        self.layers.iter().map(|l| [l.fan_in(), l.fan_out()]).collect()
    }

    fn check_inputs(&self, t: &[T], x: ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.d || t.len() != x.nrows() {
            return Err(dim_mismatch(format!(
                "model d={} got x {:?} and {} times",
                self.d,
                x.dim(),
                t.len()
            )));
        }
        if !t.iter().chain(x.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    fn stack_input(t: &[T], x: ArrayView2<T>) -> Array2<T> {
        let (n, d) = x.dim();
        let mut input = Array2::zeros((n, d + 1));
        input.slice_mut(s![.., ..d]).assign(&x);
        input.column_mut(d).iter_mut().zip(t).for_each(|(c, &tv)| *c = tv);
        input
    }

    pub fn forward(&self, t: &[T], x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_inputs(t, x)?;
        Ok(self.forward_unchecked(t, x))
    }

    /// Forward pass without input validation; rows that are non-finite
    /// simply propagate. Used by the sampler, which tracks such rows itself.
    pub fn forward_unchecked(&self, t: &[T], x: ArrayView2<T>) -> Array2<T> {
        let mut h = Self::stack_input(t, x);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.apply(h.view());
            if k < last {
                h.mapv_inplace(swish);
            }
        }
        h
    }

    pub fn forward_cached(&self, t: &[T], x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_inputs(t, x)?;
        let input = Self::stack_input(t, x);
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(last);
        let mut post = Vec::with_capacity(last);
        let mut out = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(post.last().unwrap_or(&input).view());
            if k < last {
                post.push(z.mapv(swish));
                pre.push(z);
            } else {
                out = Some(z);
            }
        }
        Ok((out.expect("at least one layer"), ForwardCache { input, pre, post }))
    }

    /// Parameter gradient of `sum(upstream * output)`.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: ArrayView2<T>) -> Result<Mlp<T>> {
        if upstream.dim() != (cache.input.nrows(), self.d) {
            return Err(dim_mismatch(format!(
                "upstream {:?} for batch {} and d={}",
                upstream.dim(),
                cache.input.nrows(),
                self.d
            )));
        }
        let mut grads = Self::zeros(self.d)?;
        let mut g = upstream.to_owned();
        for k in (0..self.layers.len()).rev() {
            let a_in = if k == 0 { &cache.input } else { &cache.post[k - 1] };
            grads.layers[k].w = a_in.t().dot(&g);
            grads.layers[k].b = g.sum_axis(Axis(0));
            if k > 0 {
                let mut gp = g.dot(&self.layers[k].w.t());
                Zip::from(&mut gp)
                    .and(&cache.pre[k - 1])
                    .for_each(|gv, &z| *gv = *gv * swish_grad(z));
                g = gp;
            }
        }
        Ok(grads)
    }

    /// Parameters in layer order, each layer's weights (row-major) then bias.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter().copied());
            out.extend(l.b.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(dim_mismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.b.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn cast<U: NdFloat>(&self) -> Mlp<U> {
        Mlp {
            d: self.d,
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: l.w.mapv(|v| U::from(v).unwrap()),
                    b: l.b.mapv(|v| U::from(v).unwrap()),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckpointHeader {
    pub d: usize,
    pub step: u64,
    pub layers: Vec<[usize; 2]>,
}

impl Mlp<f32> {
    pub fn save(&self, path: &Path, step: u64) -> Result<()> {
        let header = CheckpointHeader {
            d: self.d,
            step,
            layers: self.layer_shapes(),
        };
        write_blob_file(path, &header, &self.flat())
    }

    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let (header, values): (CheckpointHeader, _) = read_blob_file(path)?;
        let mut m = Self::zeros(header.d)?;
        if header.layers != m.layer_shapes() {
            return Err(Error::Format(format!(
                "{}: layer shapes {:?} do not match the architecture",
                path.display(),
                header.layers
            )));
        }
        m.set_flat(&values)?;
        Ok((m, header.step))
    }
}

/// Adam with bias correction, no weight decay.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: NdFloat> Adam<T> {
    pub fn new(n_params: usize) -> Self {
        Self::with_lr(n_params, 1e-3)
    }

    pub fn with_lr(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[T] {
        &self.m
    }

    pub fn second_moment(&self) -> &[T] {
        &self.v
    }

    pub fn step(&mut self, params: &mut Mlp<T>, grads: &Mlp<T>) -> Result<()> {
        if params.param_count() != self.m.len() || grads.param_count() != self.m.len() {
            return Err(dim_mismatch(format!(
                "optimizer holds {} moments, params {} grads {}",
                self.m.len(),
                params.param_count(),
                grads.param_count()
            )));
        }
        self.step += 1;
        let c = |v: f64| T::from(v).unwrap();
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = c(self.lr / bc1);
        let bc2_sqrt = c(bc2.sqrt());
        let eps = c(self.eps);
        for (((p, &g), m), v) in params
            .params_mut()
            .zip(grads.params())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let denom = v.sqrt() / bc2_sqrt + eps;
            *p = *p - step_size * *m / denom;
        }
        Ok(())
    }
}
