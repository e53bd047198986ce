//! Batched Taylor-jet forward and reverse passes.
//!
//! For `n` points the activations of a layer are stacked into one matrix of
//! `channels·n` rows: the value rows first, then the x-direction
//! coefficients `c1..c_dx`, then the t-direction coefficients `c1..c_dt`. A
//! dense layer acts on every channel through the same matrix product (the
//! bias only enters the value rows), and tanh mixes channels point by point
//! through the Taylor composition rules.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::{MlpParams, NetworkError, Result};
use crate::sampling::Point2;

/// Input direction of a derivative: first network input (`x`) or second
/// (`t`, or `y` for steady problems).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dir {
    X,
    T,
}

/// Taylor degree carried along each input direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct JetSpec {
    pub x: usize,
    pub t: usize,
}

impl JetSpec {
    pub const VALUE: JetSpec = JetSpec { x: 0, t: 0 };

    pub fn new(x: usize, t: usize) -> Result<Self> {
        if x > 3 || t > 3 {
            return Err(NetworkError::DimensionMismatch(format!(
                "jet degrees ({x}, {t}) exceed 3"
            )));
        }
        Ok(Self { x, t })
    }

    pub fn channels(self) -> usize {
        1 + self.x + self.t
    }

    pub fn degree(self, dir: Dir) -> usize {
        match dir {
            Dir::X => self.x,
            Dir::T => self.t,
        }
    }

    /// Channel holding the order-`order` coefficient along `dir`.
    pub fn channel(self, dir: Dir, order: usize) -> Option<usize> {
        match (order, dir) {
            (0, _) => Some(0),
            (k, Dir::X) if k <= self.x => Some(k),
            (k, Dir::T) if k <= self.t => Some(self.x + k),
            _ => None,
        }
    }

    /// Smallest spec covering both.
    pub fn union(self, other: JetSpec) -> JetSpec {
        JetSpec {
            x: self.x.max(other.x),
            t: self.t.max(other.t),
        }
    }
}

const FACTORIAL: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

/// Result of [`MlpParams::forward_batch`], holding the intermediate
/// activations needed by [`MlpParams::backward_batch`].
#[derive(Clone, Debug)]
pub struct BatchJets {
    spec: JetSpec,
    n: usize,
    acts: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    out: Array2<f64>,
}

impl BatchJets {
    pub fn spec(&self) -> JetSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Raw Taylor coefficients, `channels·n` rows by outputs.
    pub fn output(&self) -> &Array2<f64> {
        &self.out
    }

    /// Network values, `n` rows by outputs.
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.out.slice(s![0..self.n, ..])
    }

    /// Row of the output matrix holding a coefficient, with the factor `k!`
    /// converting that coefficient to a derivative.
    pub fn slot(&self, dir: Dir, order: usize, node: usize) -> Option<(usize, f64)> {
        let ch = self.spec.channel(dir, order)?;
        Some((ch * self.n + node, FACTORIAL[order]))
    }

    /// `∂^order u_comp / ∂dir^order` at point `node`.
    pub fn derivative(&self, dir: Dir, order: usize, node: usize, comp: usize) -> Result<f64> {
        let (row, f) = self.slot(dir, order, node).ok_or_else(|| {
            NetworkError::DimensionMismatch(format!(
                "order {order} along {dir:?} not carried by {:?}",
                self.spec
            ))
        })?;
        Ok(f * self.out[[row, comp]])
    }

    /// Zero matrix shaped like [`BatchJets::output`], for accumulating
    /// gradients with respect to the coefficients.
    pub fn zero_grad(&self) -> Array2<f64> {
        Array2::zeros(self.out.raw_dim())
    }

    /// Adds `g`, a gradient with respect to the derivative, to the matching
    /// coefficient slot of `grad`.
    pub fn add_grad(
        &self,
        grad: &mut Array2<f64>,
        dir: Dir,
        order: usize,
        node: usize,
        comp: usize,
        g: f64,
    ) -> Result<()> {
        let (row, f) = self.slot(dir, order, node).ok_or_else(|| {
            NetworkError::DimensionMismatch(format!(
                "order {order} along {dir:?} not carried by {:?}",
                self.spec
            ))
        })?;
        grad[[row, comp]] += f * g;
        Ok(())
    }
}

// Channel groups (first channel, degree) for the x and t directions.
fn groups(spec: JetSpec) -> [(usize, usize); 2] {
    [(1, spec.x), (1 + spec.x, spec.t)]
}

fn tanh_jet_forward(z: &Array2<f64>, spec: JetSpec, n: usize) -> Array2<f64> {
    let blk = n * z.ncols();
    let zs = z.as_slice().expect("standard layout");
    let mut y = Array2::<f64>::zeros(z.raw_dim());
    let ys = y.as_slice_mut().expect("standard layout");
    for e in 0..blk {
        let t = zs[e].tanh();
        let s1 = 1.0 - t * t;
        let s2 = -t * s1;
        let s3 = s1 * (t * t - 1.0 / 3.0);
        ys[e] = t;
        for (c1, d) in groups(spec) {
            if d == 0 {
                continue;
            }
            let a1 = zs[c1 * blk + e];
            ys[c1 * blk + e] = s1 * a1;
            if d >= 2 {
                let a2 = zs[(c1 + 1) * blk + e];
                ys[(c1 + 1) * blk + e] = s1 * a2 + s2 * a1 * a1;
                if d >= 3 {
                    let a3 = zs[(c1 + 2) * blk + e];
                    ys[(c1 + 2) * blk + e] = s1 * a3 + 2.0 * s2 * a1 * a2 + s3 * a1 * a1 * a1;
                }
            }
        }
    }
    y
}

// Pulls the gradient with respect to the post-tanh jets `gy` back to the
// pre-activation jets. `post` is the forward output, whose value rows hold
// tanh(z0).
fn tanh_jet_backward(
    z: &Array2<f64>,
    post: &Array2<f64>,
    gy: &Array2<f64>,
    spec: JetSpec,
    n: usize,
) -> Array2<f64> {
    let blk = n * z.ncols();
    let zs = z.as_slice().expect("standard layout");
    let ts = post.as_slice().expect("standard layout");
    let gys = gy.as_slice().expect("standard layout");
    let mut ga = Array2::<f64>::zeros(z.raw_dim());
    let gas = ga.as_slice_mut().expect("standard layout");
    for e in 0..blk {
        let t = ts[e];
        let s1 = 1.0 - t * t;
        let s2 = -t * s1;
        let s3 = s1 * (t * t - 1.0 / 3.0);
        // s4 = tanh''''/6
        let s4 = 4.0 / 3.0 * t * s1 * (2.0 - 3.0 * t * t);
        let mut g0 = gys[e] * s1;
        for (c1, d) in groups(spec) {
            if d == 0 {
                continue;
            }
            let i1 = c1 * blk + e;
            let a1 = zs[i1];
            let gy1 = gys[i1];
            let mut g1 = gy1 * s1;
            g0 += gy1 * 2.0 * s2 * a1;
            if d >= 2 {
                let i2 = (c1 + 1) * blk + e;
                let a2 = zs[i2];
                let gy2 = gys[i2];
                let mut g2 = gy2 * s1;
                g1 += gy2 * 2.0 * s2 * a1;
                g0 += gy2 * (2.0 * s2 * a2 + 3.0 * s3 * a1 * a1);
                if d >= 3 {
                    let i3 = (c1 + 2) * blk + e;
                    let a3 = zs[i3];
                    let gy3 = gys[i3];
                    gas[i3] = gy3 * s1;
                    g2 += gy3 * 2.0 * s2 * a1;
                    g1 += gy3 * (2.0 * s2 * a2 + 3.0 * s3 * a1 * a1);
                    g0 += gy3
                        * (2.0 * s2 * a3 + 6.0 * s3 * a1 * a2 + s4 * a1 * a1 * a1);
                }
                gas[i2] = g2;
            }
            gas[i1] = g1;
        }
        gas[e] = g0;
    }
    ga
}

impl MlpParams {
    fn check_two_inputs(&self) -> Result<()> {
        if self.inputs() != 2 {
            return Err(NetworkError::DimensionMismatch(format!(
                "batched jets need 2 inputs, network takes {}",
                self.inputs()
            )));
        }
        Ok(())
    }

    /// Forward pass of the jets of every point in `points`, seeded along
    /// both input directions up to the degrees in `spec`.
    pub fn forward_batch(&self, points: &[Point2], spec: JetSpec) -> Result<BatchJets> {
        self.check_two_inputs()?;
        let n = points.len();
        let c = spec.channels();
        let mut a = Array2::<f64>::zeros((c * n, 2));
        for (i, p) in points.iter().enumerate() {
            a[[i, 0]] = p.x;
            a[[i, 1]] = p.y;
        }
        if let Some(ch) = spec.channel(Dir::X, 1).filter(|_| spec.x > 0) {
            a.slice_mut(s![ch * n..(ch + 1) * n, 0]).fill(1.0);
        }
        if let Some(ch) = spec.channel(Dir::T, 1).filter(|_| spec.t > 0) {
            a.slice_mut(s![ch * n..(ch + 1) * n, 1]).fill(1.0);
        }
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len() - 1);
        for (k, l) in layers.iter().enumerate() {
            let mut z = a.dot(&self.weights(l).t());
            let bias = ndarray::ArrayView1::from(self.bias(l));
            z.slice_mut(s![0..n, ..]).outer_iter_mut().for_each(|mut row| row += &bias);
            if k + 1 == layers.len() {
                acts.push(a);
                return Ok(BatchJets {
                    spec,
                    n,
                    acts,
                    pre,
                    out: z,
                });
            }
            let y = tanh_jet_forward(&z, spec, n);
            acts.push(a);
            pre.push(z);
            a = y;
        }
        unreachable!("architecture has at least one layer")
    }

    /// Gradient of a scalar with respect to the flat parameters, given its
    /// gradient `g_out` with respect to the output coefficients of `jets`.
    pub fn backward_batch(&self, jets: &BatchJets, g_out: &Array2<f64>) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.len()];
        self.backward_batch_into(jets, g_out, &mut grads)?;
        Ok(grads)
    }

    /// Like [`MlpParams::backward_batch`] but adds into `grads`.
    pub fn backward_batch_into(
        &self,
        jets: &BatchJets,
        g_out: &Array2<f64>,
        grads: &mut [f64],
    ) -> Result<()> {
        if g_out.dim() != jets.out.dim() {
            return Err(NetworkError::DimensionMismatch(format!(
                "output gradient {:?} vs output {:?}",
                g_out.dim(),
                jets.out.dim()
            )));
        }
        if grads.len() != self.len() {
            return Err(NetworkError::WrongParamCount {
                expected: self.len(),
                got: grads.len(),
            });
        }
        let n = jets.n;
        let layers = self.layers();
        let mut g = g_out.as_standard_layout().into_owned();
        for k in (0..layers.len()).rev() {
            let l = &layers[k];
            let gw = g.t().dot(&jets.acts[k]);
            for (dst, src) in grads[l.w..l.b].iter_mut().zip(gw.iter()) {
                *dst += src;
            }
            let gb = g.slice(s![0..n, ..]).sum_axis(Axis(0));
            for (dst, src) in grads[l.b..l.b + l.fan_out].iter_mut().zip(gb.iter()) {
                *dst += src;
            }
            if k == 0 {
                break;
            }
            let ga = g.dot(&self.weights(l));
            g = tanh_jet_backward(&jets.pre[k - 1], &jets.acts[k], &ga, jets.spec, n);
        }
        Ok(())
    }

    /// Network values at `points`, `n` rows by outputs, computed in chunks
    /// without keeping intermediates.
    pub fn predict(&self, points: &[Point2]) -> Result<Array2<f64>> {
        self.check_two_inputs()?;
        let mut out = Array2::<f64>::zeros((points.len(), self.outputs()));
        let layers = self.layers();
        for (c, chunk) in points.chunks(4096).enumerate() {
            let mut a = Array2::<f64>::zeros((chunk.len(), 2));
            for (i, p) in chunk.iter().enumerate() {
                a[[i, 0]] = p.x;
                a[[i, 1]] = p.y;
            }
            for (k, l) in layers.iter().enumerate() {
                let mut z = a.dot(&self.weights(l).t());
                z += &ndarray::ArrayView1::from(self.bias(l));
                if k + 1 < layers.len() {
                    z.mapv_inplace(f64::tanh);
                }
                a = z;
            }
            out.slice_mut(s![c * 4096..c * 4096 + chunk.len(), ..]).assign(&a);
        }
        Ok(out)
    }
}
