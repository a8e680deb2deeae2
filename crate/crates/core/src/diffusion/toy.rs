//! Small convolutional noise predictor trained with hand-written backprop.
//!
//! Layout: three same-padded 3×3 convolutions `6 → W → W → 2` over the
//! `(step, pitch)` plane, ReLU after the hidden layers, a sinusoidal timestep
//! embedding feeding per-channel FiLM scale/shift on each hidden layer, and a
//! timestep-dependent gain on an `x_t` skip path into the output.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::denoiser::Denoiser;
use crate::error::{FtgError, Result};
use crate::pianoroll::{LatentRoll, ModelInput, MODEL_CHANNELS, ROLL_CHANNELS};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    /// Hidden channel count.
    pub width: usize,
    /// Timestep embedding size; must be even.
    pub embed_dim: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { width: 8, embed_dim: 16, seed: 0 }
    }
}

/// A denoiser whose parameters can be fitted by gradient descent.
pub trait Trainable<S: Scalar>: Denoiser<S> {
    fn params(&self) -> &[S];

    fn params_mut(&mut self) -> &mut [S];

    /// Mean per-cell squared error of the prediction against `target`.
    /// Adds `weight × ∂loss/∂θ` into `grads`.
    fn loss_and_grad(&self, input: &ModelInput<S>, t: usize, target: &LatentRoll<S>, weight: S, grads: &mut [S])
        -> Result<S>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    w1: Range<usize>,
    b1: Range<usize>,
    f1: Range<usize>,
    f1c: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
    f2: Range<usize>,
    f2c: Range<usize>,
    w3: Range<usize>,
    b3: Range<usize>,
    g: Range<usize>,
    gc: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(width: usize, embed: usize) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let w1 = take(width * MODEL_CHANNELS * 9);
        let b1 = take(width);
        let f1 = take(2 * width * embed);
        let f1c = take(2 * width);
        let w2 = take(width * width * 9);
        let b2 = take(width);
        let f2 = take(2 * width * embed);
        let f2c = take(2 * width);
        let w3 = take(ROLL_CHANNELS * width * 9);
        let b3 = take(ROLL_CHANNELS);
        let g = take(ROLL_CHANNELS * embed);
        let gc = take(ROLL_CHANNELS);
        Self { w1, b1, f1, f1c, w2, b2, f2, f2c, w3, b3, g, gc, total: at }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDenoiser<S = f64> {
    config: ToyConfig,
    layout: Layout,
    params: Vec<S>,
}

struct Forward<S> {
    emb: Vec<S>,
    film1: Vec<S>,
    film2: Vec<S>,
    z1: Vec<S>,
    a1: Vec<S>,
    z2: Vec<S>,
    a2: Vec<S>,
    out: Vec<S>,
}

impl<S: Scalar> ToyDenoiser<S> {
    pub fn new(config: ToyConfig) -> Result<Self> {
        Self::check_config(&config)?;
        let layout = Layout::new(config.width, config.embed_dim);
        let mut params = vec![S::zero(); layout.total];
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let mut fill = |range: Range<usize>, std: f64, params: &mut [S]| {
            for p in &mut params[range] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p = S::lit(z * std);
            }
        };
        let w = config.width as f64;
        fill(layout.w1.clone(), (2.0 / (MODEL_CHANNELS as f64 * 9.0)).sqrt(), &mut params);
        fill(layout.w2.clone(), (2.0 / (w * 9.0)).sqrt(), &mut params);
        fill(layout.w3.clone(), 0.1 / (w * 9.0).sqrt(), &mut params);
        Ok(Self { config, layout, params })
    }

    /// Rebuilds a model from a stored parameter vector.
    pub fn from_params(config: ToyConfig, params: Vec<S>) -> Result<Self> {
        Self::check_config(&config)?;
        let layout = Layout::new(config.width, config.embed_dim);
        if params.len() != layout.total {
            return Err(FtgError::LengthMismatch { expected: layout.total, got: params.len() });
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(FtgError::NonFinite { index });
        }
        Ok(Self { config, layout, params })
    }

    fn check_config(config: &ToyConfig) -> Result<()> {
        if config.width == 0 || config.embed_dim == 0 || !config.embed_dim.is_multiple_of(2) {
            return Err(FtgError::InvalidInput("toy width must be > 0 and embed_dim even and > 0".into()));
        }
        Ok(())
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    fn embed(&self, t: usize) -> Vec<S> {
        let half = self.config.embed_dim / 2;
        let mut emb = vec![S::zero(); self.config.embed_dim];
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            let arg = t as f64 * freq;
            emb[i] = S::lit(arg.sin());
            emb[half + i] = S::lit(arg.cos());
        }
        emb
    }

    fn affine(&self, mat: &Range<usize>, bias: &Range<usize>, emb: &[S]) -> Vec<S> {
        let m = &self.params[mat.clone()];
        let c = &self.params[bias.clone()];
        let e = emb.len();
        c.iter().enumerate().map(|(r, &b)| b + dot(&m[r * e..(r + 1) * e], emb)).collect()
    }

    fn forward(&self, input: &ModelInput<S>, t: usize) -> Forward<S> {
        let shape = input.latent_shape();
        let (h, w) = (shape.length, shape.pitches);
        let plane = h * w;
        let width = self.config.width;
        let p = &self.params;
        let l = &self.layout;

        let emb = self.embed(t);
        let film1 = self.affine(&l.f1, &l.f1c, &emb);
        let film2 = self.affine(&l.f2, &l.f2c, &emb);
        let gain = self.affine(&l.g, &l.gc, &emb);

        let mut z1 = vec![S::zero(); width * plane];
        conv3x3(input.data(), MODEL_CHANNELS, h, w, &p[l.w1.clone()], &p[l.b1.clone()], width, &mut z1);
        let a1 = film_relu(&z1, &film1, width, plane);
        let mut z2 = vec![S::zero(); width * plane];
        conv3x3(&a1, width, h, w, &p[l.w2.clone()], &p[l.b2.clone()], width, &mut z2);
        let a2 = film_relu(&z2, &film2, width, plane);
        let mut out = vec![S::zero(); ROLL_CHANNELS * plane];
        conv3x3(&a2, width, h, w, &p[l.w3.clone()], &p[l.b3.clone()], ROLL_CHANNELS, &mut out);
        for c in 0..ROLL_CHANNELS {
            let x = input.channel(c);
            for (o, &xi) in out[c * plane..(c + 1) * plane].iter_mut().zip(x) {
                *o = *o + gain[c] * xi;
            }
        }
        Forward { emb, film1, film2, z1, a1, z2, a2, out }
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `relu(z·(1+γ_c) + β_c)` per channel; `film = [γ; β]`.
fn film_relu<S: Scalar>(z: &[S], film: &[S], channels: usize, plane: usize) -> Vec<S> {
    let mut out = vec![S::zero(); z.len()];
    for c in 0..channels {
        let scale = S::one() + film[c];
        let shift = film[channels + c];
        for (o, &v) in out[c * plane..(c + 1) * plane].iter_mut().zip(&z[c * plane..(c + 1) * plane]) {
            *o = (v * scale + shift).max(S::zero());
        }
    }
    out
}

/// Row and column ranges where the shifted source index stays inside `[0, n)`.
#[inline]
fn valid(n: usize, d: isize) -> Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize).max(0) as usize;
    lo..hi.max(lo)
}

#[allow(clippy::too_many_arguments)]
fn conv3x3<S: Scalar>(input: &[S], cin: usize, h: usize, w: usize, weight: &[S], bias: &[S], cout: usize, out: &mut [S]) {
    let plane = h * w;
    for co in 0..cout {
        let o = &mut out[co * plane..(co + 1) * plane];
        o.fill(bias[co]);
        for ci in 0..cin {
            let inp = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let wv = weight[((co * cin + ci) * 3 + ky) * 3 + kx];
                    let xs = valid(w, dx);
                    for y in valid(h, dy) {
                        let iy = (y as isize + dy) as usize;
                        let ix0 = (xs.start as isize + dx) as usize;
                        let orow = &mut o[y * w + xs.start..y * w + xs.end];
                        let irow = &inp[iy * w + ix0..iy * w + ix0 + xs.len()];
                        for (a, &b) in orow.iter_mut().zip(irow) {
                            *a = *a + wv * b;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv3x3`] given the output gradient.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<S: Scalar>(
    input: &[S],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[S],
    cout: usize,
    dout: &[S],
    mut dinput: Option<&mut [S]>,
    dweight: &mut [S],
    dbias: &mut [S],
) {
    let plane = h * w;
    for co in 0..cout {
        let g = &dout[co * plane..(co + 1) * plane];
        dbias[co] = dbias[co] + g.iter().copied().sum::<S>();
        for ci in 0..cin {
            let inp = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let wi = ((co * cin + ci) * 3 + ky) * 3 + kx;
                    let wv = weight[wi];
                    let xs = valid(w, dx);
                    let mut acc = S::zero();
                    for y in valid(h, dy) {
                        let iy = (y as isize + dy) as usize;
                        let ix0 = (xs.start as isize + dx) as usize;
                        let grow = &g[y * w + xs.start..y * w + xs.end];
                        let irow = &inp[iy * w + ix0..iy * w + ix0 + xs.len()];
                        acc = acc + dot(grow, irow);
                        if let Some(di) = dinput.as_deref_mut() {
                            let drow = &mut di[ci * plane + iy * w + ix0..ci * plane + iy * w + ix0 + xs.len()];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d = *d + wv * gv;
                            }
                        }
                    }
                    dweight[wi] = dweight[wi] + acc;
                }
            }
        }
    }
}

/// Backprop through `film_relu`: returns the gradient w.r.t. `z` and adds the
/// FiLM gradient into `dfilm`.
fn film_relu_backward<S: Scalar>(z: &[S], a: &[S], film: &[S], da: &[S], channels: usize, plane: usize, dfilm: &mut [S]) -> Vec<S> {
    let mut dz = vec![S::zero(); z.len()];
    for c in 0..channels {
        let scale = S::one() + film[c];
        let (mut dgamma, mut dbeta) = (S::zero(), S::zero());
        let span = c * plane..(c + 1) * plane;
        for ((dzi, &zi), (&ai, &dai)) in dz[span.clone()].iter_mut().zip(&z[span.clone()]).zip(a[span.clone()].iter().zip(&da[span])) {
            if ai > S::zero() {
                dgamma = dgamma + dai * zi;
                dbeta = dbeta + dai;
                *dzi = dai * scale;
            }
        }
        dfilm[c] = dfilm[c] + dgamma;
        dfilm[channels + c] = dfilm[channels + c] + dbeta;
    }
    dz
}

/// Adds `v ⊗ emb` into a row-major matrix gradient and `v` into its bias gradient.
fn outer_add<S: Scalar>(v: &[S], emb: &[S], dmat: &mut [S], dbias: &mut [S]) {
    let e = emb.len();
    for (r, &vr) in v.iter().enumerate() {
        dbias[r] = dbias[r] + vr;
        for (d, &ei) in dmat[r * e..(r + 1) * e].iter_mut().zip(emb) {
            *d = *d + vr * ei;
        }
    }
}

impl<S: Scalar> Denoiser<S> for ToyDenoiser<S> {
    fn predict(&self, input: &ModelInput<S>, t: usize) -> Result<LatentRoll<S>> {
        let f = self.forward(input, t);
        LatentRoll::from_vec(input.latent_shape(), f.out)
    }
}

impl<S: Scalar> Trainable<S> for ToyDenoiser<S> {
    fn params(&self) -> &[S] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    fn loss_and_grad(
        &self,
        input: &ModelInput<S>,
        t: usize,
        target: &LatentRoll<S>,
        weight: S,
        grads: &mut [S],
    ) -> Result<S> {
        input.latent_shape().check_same(&target.shape())?;
        if grads.len() != self.layout.total {
            return Err(FtgError::LengthMismatch { expected: self.layout.total, got: grads.len() });
        }
        let shape = input.latent_shape();
        let (h, w) = (shape.length, shape.pitches);
        let plane = h * w;
        let width = self.config.width;
        let l = &self.layout;
        let p = &self.params;
        let f = self.forward(input, t);

        let n = S::lit(f.out.len() as f64);
        let mut loss = S::zero();
        let mut dout = vec![S::zero(); f.out.len()];
        for ((d, &o), &y) in dout.iter_mut().zip(&f.out).zip(target.data()) {
            let r = o - y;
            loss = loss + r * r;
            *d = S::lit(2.0) * r * weight / n;
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(FtgError::NonFinite { index: 0 });
        }

        let mut dgain = vec![S::zero(); ROLL_CHANNELS];
        for (c, dg) in dgain.iter_mut().enumerate() {
            *dg = dot(&dout[c * plane..(c + 1) * plane], input.channel(c));
        }
        {
            let (dmat, dbias) = split_pair(grads, &l.g, &l.gc);
            outer_add(&dgain, &f.emb, dmat, dbias);
        }

        let mut da2 = vec![S::zero(); width * plane];
        {
            let (dw, db) = split_pair(grads, &l.w3, &l.b3);
            conv3x3_backward(&f.a2, width, h, w, &p[l.w3.clone()], ROLL_CHANNELS, &dout, Some(&mut da2), dw, db);
        }
        let mut dfilm2 = vec![S::zero(); 2 * width];
        let dz2 = film_relu_backward(&f.z2, &f.a2, &f.film2, &da2, width, plane, &mut dfilm2);
        {
            let (dmat, dbias) = split_pair(grads, &l.f2, &l.f2c);
            outer_add(&dfilm2, &f.emb, dmat, dbias);
        }
        let mut da1 = vec![S::zero(); width * plane];
        {
            let (dw, db) = split_pair(grads, &l.w2, &l.b2);
            conv3x3_backward(&f.a1, width, h, w, &p[l.w2.clone()], width, &dz2, Some(&mut da1), dw, db);
        }
        let mut dfilm1 = vec![S::zero(); 2 * width];
        let dz1 = film_relu_backward(&f.z1, &f.a1, &f.film1, &da1, width, plane, &mut dfilm1);
        {
            let (dmat, dbias) = split_pair(grads, &l.f1, &l.f1c);
            outer_add(&dfilm1, &f.emb, dmat, dbias);
        }
        {
            let (dw, db) = split_pair(grads, &l.w1, &l.b1);
            conv3x3_backward(input.data(), MODEL_CHANNELS, h, w, &p[l.w1.clone()], width, &dz1, None, dw, db);
        }
        Ok(loss)
    }
}

/// Two disjoint mutable views; `a` must end at or before `b` starts.
fn split_pair<'a, S>(buf: &'a mut [S], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [S], &'a mut [S]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = buf.split_at_mut(b.start);
    (&mut left[a.clone()], &mut right[..b.len()])
}
