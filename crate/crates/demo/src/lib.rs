//! WebAssembly bindings for the node-generation demo page.
//!
//! Every function returns node coordinates flattened as `[x0, y0, x1, y1, ...]`
//! in the unit square, ready for drawing on a canvas.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use rang_core::errormap::{
    arff, inside_lshape, lshape_error_map, ArffParams, GridErrorMap, NormalizedErrorMap,
};
use rang_core::rng::RngStream;
use rang_core::sampling::{
    ff_generate, filter_inside, sample_hammersley, sample_lhs, sample_random, ConstantRadius,
    NodeSet, Point2, Rect,
};
use wasm_bindgen::prelude::*;

const GRID: usize = 128;
/// Keeps a slider typo from freezing the page.
const MAX_DEMO_NODES: usize = 200_000;

fn flatten(ns: &NodeSet) -> Vec<f64> {
    ns.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Nodes inside the L-shape for error `1 − SDF`, density ratio `r` and
/// largest radius `s`.
#[wasm_bindgen]
pub fn lshape_nodes(r: f64, s: f64, seed: u64) -> Result<Vec<f64>, String> {
    if !(s >= 0.004) {
        return Err(format!("scale {s} is too small for the demo"));
    }
    let e = lshape_error_map(GRID, GRID).map_err(err)?;
    let zero = NormalizedErrorMap::zeros(Rect::unit(), GRID, GRID).map_err(err)?;
    let mut rng = RngStream::new(seed);
    let (nodes, _) = arff(Rect::unit(), &e, &zero, ArffParams::new(0.0, r, s), &mut rng).map_err(err)?;
    Ok(flatten(&filter_inside(&nodes, inside_lshape)))
}

/// `n` nodes from one of the uniform strategies: `random`, `lhs`,
/// `hammersley`, or `ff` (constant radius `1/√n`, so the count is approximate).
#[wasm_bindgen]
pub fn uniform_nodes(kind: &str, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    if n == 0 || n > MAX_DEMO_NODES {
        return Err(format!("node count {n} outside 1..={MAX_DEMO_NODES}"));
    }
    let unit = Rect::unit();
    let mut rng = RngStream::new(seed);
    let ns = match kind {
        "random" => sample_random(unit, n, &mut rng),
        "lhs" => sample_lhs(unit, n, &mut rng),
        "hammersley" => sample_hammersley(unit, n, 2),
        "ff" => ff_generate(unit, &ConstantRadius((1.0 / n as f64).sqrt()), &mut rng),
        other => return Err(format!("unknown strategy `{other}`")),
    }
    .map_err(err)?;
    Ok(flatten(&ns))
}

fn bump(c: Point2) -> impl Fn(Point2) -> f64 {
    move |p: Point2| (-(p.dist2(c)) / (2.0 * 0.004)).exp()
}

/// Alternates a Gaussian error bump between two centres for `resamples`
/// rounds and returns the node set of the last round. With memory `beta`
/// near 1 the previously active bump keeps its density.
#[wasm_bindgen]
pub fn memory_nodes(beta: f64, resamples: usize, s: f64, seed: u64) -> Result<Vec<f64>, String> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(format!("beta {beta} not in [0, 1]"));
    }
    if !(s >= 0.01) {
        return Err(format!("scale {s} is too small for the demo"));
    }
    let maps = [
        GridErrorMap::from_fn(Rect::unit(), GRID, GRID, bump(Point2::new(0.3, 0.3))).map_err(err)?,
        GridErrorMap::from_fn(Rect::unit(), GRID, GRID, bump(Point2::new(0.7, 0.7))).map_err(err)?,
    ];
    let mut prior = NormalizedErrorMap::zeros(Rect::unit(), GRID, GRID).map_err(err)?;
    let mut last = Vec::new();
    for k in 0..resamples.max(1) {
        let mut rng = RngStream::derive(seed, k as u64);
        let (nodes, ebar) =
            arff(Rect::unit(), &maps[k % 2], &prior, ArffParams::new(beta, 100.0, s), &mut rng).map_err(err)?;
        prior = ebar;
        last = flatten(&nodes);
    }
    Ok(last)
}
