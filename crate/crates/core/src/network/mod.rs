//! Fully connected tanh networks and the Adam optimizer.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing its
//! weight matrix (`out × in`, row-major) followed by its bias. Two derivative
//! paths are provided: [`forward_jet`] records every scalar operation on an
//! autodiff tape, and [`MlpParams::forward_batch`] pushes Taylor coefficients
//! for a whole batch of points through dense matrix products. Training uses
//! the batched path; the tape path serves as its reference.

mod adam;
mod batch;

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::ArrayView2;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Jet, Tape, VarRef};
use crate::rng::RngStream;

pub use adam::AdamState;
pub use batch::{BatchJets, Dir, JetSpec};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid architecture {0:?}: need at least two layers of positive width")]
    InvalidArch(Vec<usize>),
    #[error("expected {expected} parameters, got {got}")]
    WrongParamCount { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite parameter at index {index}")]
    NonFiniteParam { index: usize },
    #[error("malformed checkpoint: {0}")]
    Parse(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetworkError>;

/// Four hidden layers of 64 units with the given number of outputs.
pub fn default_arch(outputs: usize) -> Vec<usize> {
    vec![2, 64, 64, 64, 64, outputs]
}

/// Number of parameters of a dense network with the given layer sizes.
pub fn param_count(arch: &[usize]) -> usize {
    arch.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    arch: Vec<usize>,
    flat: Vec<f64>,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: usize,
    pub b: usize,
}

fn validate_arch(arch: &[usize]) -> Result<()> {
    if arch.len() < 2 || arch.contains(&0) {
        return Err(NetworkError::InvalidArch(arch.to_vec()));
    }
    Ok(())
}

impl MlpParams {
    pub fn from_flat(arch: Vec<usize>, flat: Vec<f64>) -> Result<Self> {
        validate_arch(&arch)?;
        let expected = param_count(&arch);
        if flat.len() != expected {
            return Err(NetworkError::WrongParamCount {
                expected,
                got: flat.len(),
            });
        }
        if let Some(index) = flat.iter().position(|v| !v.is_finite()) {
            return Err(NetworkError::NonFiniteParam { index });
        }
        Ok(Self { arch, flat })
    }

    /// All-zero parameters.
    pub fn zeros(arch: Vec<usize>) -> Result<Self> {
        validate_arch(&arch)?;
        let n = param_count(&arch);
        Self::from_flat(arch, vec![0.0; n])
    }

    pub fn arch(&self) -> &[usize] {
        &self.arch
    }

    pub fn inputs(&self) -> usize {
        self.arch[0]
    }

    pub fn outputs(&self) -> usize {
        *self.arch.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub(crate) fn layers(&self) -> Vec<LayerSlot> {
        let mut off = 0;
        self.arch
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    fan_in: w[0],
                    fan_out: w[1],
                    w: off,
                    b: off + w[0] * w[1],
                };
                off += w[0] * w[1] + w[1];
                slot
            })
            .collect()
    }

    pub(crate) fn weights(&self, l: &LayerSlot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.fan_out, l.fan_in), &self.flat[l.w..l.b])
            .expect("layer slot matches parameter layout")
    }

    pub(crate) fn bias(&self, l: &LayerSlot) -> &[f64] {
        &self.flat[l.b..l.b + l.fan_out]
    }

    /// Plain forward pass at a single input, one scalar loop per unit.
    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.inputs() {
            return Err(NetworkError::DimensionMismatch(format!(
                "network takes {} inputs, got {}",
                self.inputs(),
                input.len()
            )));
        }
        let layers = self.layers();
        let mut a = input.to_vec();
        for (k, l) in layers.iter().enumerate() {
            let mut z = Vec::with_capacity(l.fan_out);
            for j in 0..l.fan_out {
                let row = &self.flat[l.w + j * l.fan_in..l.w + (j + 1) * l.fan_in];
                let s: f64 = row.iter().zip(&a).map(|(w, x)| w * x).sum();
                z.push(s + self.flat[l.b + j]);
            }
            if k + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        Ok(a)
    }

    /// Registers every parameter as a tape leaf, in flat order.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            arch: self.arch.clone(),
            vars: self.flat.iter().map(|&v| tape.leaf(v)).collect(),
        }
    }

    /// Header line `arch,<sizes...>` followed by one parameter per line.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let sizes: Vec<String> = self.arch.iter().map(usize::to_string).collect();
        writeln!(out, "arch,{}", sizes.join(","))?;
        for v in &self.flat {
            writeln!(out, "{v:.17e}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| NetworkError::Parse("empty checkpoint".into()))??;
        let sizes = header
            .strip_prefix("arch,")
            .ok_or_else(|| NetworkError::Parse(format!("bad header `{header}`")))?;
        let arch = sizes
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| NetworkError::Parse(format!("bad layer size `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut flat = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            flat.push(
                line.parse::<f64>()
                    .map_err(|_| NetworkError::Parse(format!("bad value `{line}`")))?,
            );
        }
        Self::from_flat(arch, flat)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(file))
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(arch: &[usize], rng: &mut RngStream) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(arch.to_vec())?;
    for l in params.layers() {
        let a = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
        for w in &mut params.flat[l.w..l.b] {
            *w = rng.uniform_in(-a, a);
        }
    }
    Ok(params)
}

/// Network parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct ParamVars {
    arch: Vec<usize>,
    vars: Vec<VarRef>,
}

impl ParamVars {
    pub fn vars(&self) -> &[VarRef] {
        &self.vars
    }
}

/// Forward pass in jet arithmetic for a two-input network, one jet per
/// input. Only one input should carry a derivative seed.
pub fn forward_jet(pv: &ParamVars, tape: &mut Tape, in_x: &Jet, in_t: &Jet) -> Result<Vec<Jet>> {
    if pv.arch[0] != 2 {
        return Err(NetworkError::DimensionMismatch(format!(
            "forward_jet needs 2 inputs, network takes {}",
            pv.arch[0]
        )));
    }
    let n_layers = pv.arch.len() - 1;
    let mut a = vec![in_x.clone(), in_t.clone()];
    let mut off = 0;
    for (k, w) in pv.arch.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let b_off = off + fan_in * fan_out;
        let mut z = Vec::with_capacity(fan_out);
        for j in 0..fan_out {
            let row = &pv.vars[off + j * fan_in..off + (j + 1) * fan_in];
            let mut y = Jet::affine(tape, row, &a, pv.vars[b_off + j])?;
            if k + 1 < n_layers {
                y = y.tanh(tape)?;
            }
            z.push(y);
        }
        a = z;
        off = b_off + fan_out;
    }
    Ok(a)
}
