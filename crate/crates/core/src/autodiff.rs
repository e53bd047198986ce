//! Scalar reverse-mode tape and truncated Taylor jets built on top of it.
//!
//! Each tape node stores its value and the local partial derivatives with
//! respect to its inputs, so `backward` is a single reverse sweep. A [`Jet`]
//! holds the Taylor coefficients `c_k = u^(k)(0) / k!` of a function along
//! one input direction; the coefficients are tape variables, so a loss that
//! uses `u_xx` or `u_xxx` can still be differentiated with respect to the
//! leaves in one reverse pass.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("variable belongs to tape {got}, expected tape {expected}")]
    TapeMismatch { expected: u64, got: u64 },
    #[error("variable index {0} is not on the tape")]
    InvalidRef(usize),
    #[error("jet degrees differ: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("jet degree {0} exceeds 3")]
    DegreeTooHigh(usize),
    #[error("derivative of order {order} requested from a degree-{degree} jet")]
    OrderTooHigh { order: usize, degree: usize },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarRef {
    tape: u64,
    idx: usize,
}

impl VarRef {
    pub fn index(self) -> usize {
        self.idx
    }
}

#[derive(Clone, Debug)]
enum Parents {
    None,
    One(usize, f64),
    Two(usize, f64, usize, f64),
    Many(Vec<(usize, f64)>),
}

#[derive(Clone, Debug)]
struct Node {
    value: f64,
    parents: Parents,
}

/// Append-only operation record. Nodes are stored in evaluation order, which
/// is also a topological order.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    leaves: Vec<usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            leaves: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    fn push(&mut self, value: f64, parents: Parents) -> VarRef {
        self.nodes.push(Node { value, parents });
        VarRef {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: VarRef) -> Result<usize> {
        if v.tape != self.id {
            return Err(AutodiffError::TapeMismatch {
                expected: self.id,
                got: v.tape,
            });
        }
        if v.idx >= self.nodes.len() {
            return Err(AutodiffError::InvalidRef(v.idx));
        }
        Ok(v.idx)
    }

    fn val(&self, idx: usize) -> f64 {
        self.nodes[idx].value
    }

    /// Registers a differentiable input. Leaves are numbered in registration
    /// order, which is the order of the gradient returned by [`Tape::backward`].
    pub fn leaf(&mut self, value: f64) -> VarRef {
        let v = self.push(value, Parents::None);
        self.leaves.push(v.idx);
        v
    }

    pub fn constant(&mut self, value: f64) -> VarRef {
        self.push(value, Parents::None)
    }

    pub fn value(&self, v: VarRef) -> Result<f64> {
        Ok(self.val(self.check(v)?))
    }

    pub fn add(&mut self, a: VarRef, b: VarRef) -> Result<VarRef> {
        let (i, j) = (self.check(a)?, self.check(b)?);
        Ok(self.push(self.val(i) + self.val(j), Parents::Two(i, 1.0, j, 1.0)))
    }

    pub fn sub(&mut self, a: VarRef, b: VarRef) -> Result<VarRef> {
        let (i, j) = (self.check(a)?, self.check(b)?);
        Ok(self.push(self.val(i) - self.val(j), Parents::Two(i, 1.0, j, -1.0)))
    }

    pub fn mul(&mut self, a: VarRef, b: VarRef) -> Result<VarRef> {
        let (i, j) = (self.check(a)?, self.check(b)?);
        let (x, y) = (self.val(i), self.val(j));
        Ok(self.push(x * y, Parents::Two(i, y, j, x)))
    }

    pub fn div(&mut self, a: VarRef, b: VarRef) -> Result<VarRef> {
        let (i, j) = (self.check(a)?, self.check(b)?);
        let (x, y) = (self.val(i), self.val(j));
        Ok(self.push(x / y, Parents::Two(i, 1.0 / y, j, -x / (y * y))))
    }

    pub fn tanh(&mut self, a: VarRef) -> Result<VarRef> {
        let i = self.check(a)?;
        let t = self.val(i).tanh();
        Ok(self.push(t, Parents::One(i, 1.0 - t * t)))
    }

    pub fn square(&mut self, a: VarRef) -> Result<VarRef> {
        let i = self.check(a)?;
        let x = self.val(i);
        Ok(self.push(x * x, Parents::One(i, 2.0 * x)))
    }

    pub fn cube(&mut self, a: VarRef) -> Result<VarRef> {
        let i = self.check(a)?;
        let x = self.val(i);
        Ok(self.push(x * x * x, Parents::One(i, 3.0 * x * x)))
    }

    /// `c·a`.
    pub fn scale(&mut self, a: VarRef, c: f64) -> Result<VarRef> {
        let i = self.check(a)?;
        Ok(self.push(c * self.val(i), Parents::One(i, c)))
    }

    /// `a + c`.
    pub fn add_const(&mut self, a: VarRef, c: f64) -> Result<VarRef> {
        let i = self.check(a)?;
        Ok(self.push(self.val(i) + c, Parents::One(i, 1.0)))
    }

    /// `Σ c_k·v_k + offset`.
    pub fn lin_comb(&mut self, terms: &[(VarRef, f64)], offset: f64) -> Result<VarRef> {
        let mut parents = Vec::with_capacity(terms.len());
        let mut value = offset;
        for &(v, c) in terms {
            let i = self.check(v)?;
            value += c * self.val(i);
            parents.push((i, c));
        }
        Ok(self.push(value, Parents::Many(parents)))
    }

    /// `Σ a_k·b_k (+ bias)`, the affine combination used by dense layers.
    pub fn dot(&mut self, pairs: &[(VarRef, VarRef)], bias: Option<VarRef>) -> Result<VarRef> {
        let mut parents = Vec::with_capacity(2 * pairs.len() + 1);
        let mut value = 0.0;
        for &(a, b) in pairs {
            let (i, j) = (self.check(a)?, self.check(b)?);
            let (x, y) = (self.val(i), self.val(j));
            value += x * y;
            parents.push((i, y));
            parents.push((j, x));
        }
        if let Some(b) = bias {
            let k = self.check(b)?;
            value += self.val(k);
            parents.push((k, 1.0));
        }
        Ok(self.push(value, Parents::Many(parents)))
    }

    /// Sum of the given variables.
    pub fn sum(&mut self, vars: &[VarRef]) -> Result<VarRef> {
        let terms: Vec<(VarRef, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
        self.lin_comb(&terms, 0.0)
    }

    /// Adjoint of every node with respect to `output`.
    pub fn adjoints(&self, output: VarRef) -> Result<Vec<f64>> {
        let out = self.check(output)?;
        let mut adj = vec![0.0; out + 1];
        adj[out] = 1.0;
        for k in (0..=out).rev() {
            let g = adj[k];
            if g == 0.0 {
                continue;
            }
            match &self.nodes[k].parents {
                Parents::None => {}
                Parents::One(i, d) => adj[*i] += g * d,
                Parents::Two(i, di, j, dj) => {
                    adj[*i] += g * di;
                    adj[*j] += g * dj;
                }
                Parents::Many(ps) => {
                    for &(i, d) in ps {
                        adj[i] += g * d;
                    }
                }
            }
        }
        Ok(adj)
    }

    /// Gradient of `output` with respect to every leaf, in registration
    /// order. Leaves that `output` does not depend on get 0.
    pub fn backward(&self, output: VarRef) -> Result<Vec<f64>> {
        let adj = self.adjoints(output)?;
        Ok(self
            .leaves
            .iter()
            .map(|&i| adj.get(i).copied().unwrap_or(0.0))
            .collect())
    }
}

/// Truncated Taylor expansion along one direction, with coefficients stored
/// on a tape. `coeffs.len() - 1` is the active degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    coeffs: Vec<VarRef>,
}

fn check_degree(degree: usize) -> Result<()> {
    if degree > 3 {
        Err(AutodiffError::DegreeTooHigh(degree))
    } else {
        Ok(())
    }
}

const FACTORIAL: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

impl Jet {
    /// Jet of a constant: all higher coefficients are zero.
    pub fn constant(tape: &mut Tape, value: f64, degree: usize) -> Result<Self> {
        check_degree(degree)?;
        let mut coeffs = vec![tape.constant(value)];
        for _ in 0..degree {
            coeffs.push(tape.constant(0.0));
        }
        Ok(Self { coeffs })
    }

    /// Jet of the seeded input `x0 + δ`.
    pub fn variable(tape: &mut Tape, value: f64, degree: usize) -> Result<Self> {
        let mut jet = Self::constant(tape, value, degree)?;
        if degree >= 1 {
            jet.coeffs[1] = tape.constant(1.0);
        }
        Ok(jet)
    }

    pub fn from_coeffs(coeffs: Vec<VarRef>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(AutodiffError::InvalidRef(0));
        }
        check_degree(coeffs.len() - 1)?;
        Ok(Self { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> Option<VarRef> {
        self.coeffs.get(k).copied()
    }

    pub fn coeffs(&self) -> &[VarRef] {
        &self.coeffs
    }

    pub fn coeff_values(&self, tape: &Tape) -> Result<Vec<f64>> {
        self.coeffs.iter().map(|&c| tape.value(c)).collect()
    }

    /// `d^k u / dδ^k` at the expansion point, i.e. `k!·c_k`.
    pub fn derivative(&self, tape: &Tape, order: usize) -> Result<f64> {
        let c = self.coeffs.get(order).ok_or(AutodiffError::OrderTooHigh {
            order,
            degree: self.degree(),
        })?;
        Ok(FACTORIAL[order] * tape.value(*c)?)
    }

    /// The derivative of the given order as a tape variable.
    pub fn derivative_var(&self, tape: &mut Tape, order: usize) -> Result<VarRef> {
        let c = *self.coeffs.get(order).ok_or(AutodiffError::OrderTooHigh {
            order,
            degree: self.degree(),
        })?;
        if order <= 1 {
            Ok(c)
        } else {
            tape.scale(c, FACTORIAL[order])
        }
    }

    fn same_degree(&self, other: &Jet) -> Result<()> {
        if self.degree() != other.degree() {
            Err(AutodiffError::DegreeMismatch(self.degree(), other.degree()))
        } else {
            Ok(())
        }
    }

    pub fn add(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        self.same_degree(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| tape.add(a, b))
            .collect::<Result<_>>()?;
        Ok(Jet { coeffs })
    }

    pub fn sub(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        self.same_degree(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| tape.sub(a, b))
            .collect::<Result<_>>()?;
        Ok(Jet { coeffs })
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        self.same_degree(other)?;
        let d = self.degree();
        let mut coeffs = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let pairs: Vec<(VarRef, VarRef)> = (0..=k)
                .map(|i| (self.coeffs[i], other.coeffs[k - i]))
                .collect();
            coeffs.push(tape.dot(&pairs, None)?);
        }
        Ok(Jet { coeffs })
    }

    pub fn scale(&self, tape: &mut Tape, c: f64) -> Result<Jet> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|&a| tape.scale(a, c))
            .collect::<Result<_>>()?;
        Ok(Jet { coeffs })
    }

    pub fn add_const(&self, tape: &mut Tape, c: f64) -> Result<Jet> {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] = tape.add_const(coeffs[0], c)?;
        Ok(Jet { coeffs })
    }

    /// `Σ w_k·a_k + bias` with scalar tape weights and jet inputs.
    pub fn affine(tape: &mut Tape, weights: &[VarRef], inputs: &[Jet], bias: VarRef) -> Result<Jet> {
        let d = inputs.first().map_or(0, Jet::degree);
        for j in inputs {
            if j.degree() != d {
                return Err(AutodiffError::DegreeMismatch(d, j.degree()));
            }
        }
        let mut coeffs = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let pairs: Vec<(VarRef, VarRef)> = weights
                .iter()
                .zip(inputs)
                .map(|(&w, a)| (w, a.coeffs[k]))
                .collect();
            coeffs.push(tape.dot(&pairs, (k == 0).then_some(bias))?);
        }
        Ok(Jet { coeffs })
    }

    /// `tanh` composed with the jet using `T' = 1 − T²`, `T'' = −2T(1 − T²)`
    /// and `T''' = (1 − T²)(6T² − 2)`.
    pub fn tanh(&self, tape: &mut Tape) -> Result<Jet> {
        let d = self.degree();
        let t = tape.tanh(self.coeffs[0])?;
        if d == 0 {
            return Ok(Jet { coeffs: vec![t] });
        }
        let a = &self.coeffs;
        let t2 = tape.square(t)?;
        // s1 = T', s2 = T''/2, s3 = T'''/6
        let s1 = tape.lin_comb(&[(t2, -1.0)], 1.0)?;
        let mut coeffs = vec![t, tape.mul(s1, a[1])?];
        if d >= 2 {
            let ts1 = tape.mul(t, s1)?;
            let s2 = tape.scale(ts1, -1.0)?;
            let a1sq = tape.square(a[1])?;
            coeffs.push(tape.dot(&[(s1, a[2]), (s2, a1sq)], None)?);
            if d == 3 {
                let q = tape.lin_comb(&[(t2, 1.0)], -1.0 / 3.0)?;
                let s3 = tape.mul(s1, q)?;
                let a1a2 = tape.mul(a[1], a[2])?;
                let two_s2 = tape.scale(s2, 2.0)?;
                let a1cu = tape.cube(a[1])?;
                coeffs.push(tape.dot(&[(s1, a[3]), (two_s2, a1a2), (s3, a1cu)], None)?);
            }
        }
        Ok(Jet { coeffs })
    }
}

/// Compares the tape gradient of `f` at `point` with central differences of
/// step `step` and returns `max_i |g_i − fd_i| / (|g_i| + 1e-8)`.
///
/// `f` receives a fresh tape and one leaf per coordinate.
pub fn check_gradient_fd<F>(f: F, point: &[f64], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[VarRef]) -> Result<VarRef>,
{
    let eval = |x: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves: Vec<VarRef> = x.iter().map(|&v| tape.leaf(v)).collect();
        let out = f(&mut tape, &leaves)?;
        tape.value(out)
    };
    let mut tape = Tape::new();
    let leaves: Vec<VarRef> = point.iter().map(|&v| tape.leaf(v)).collect();
    let out = f(&mut tape, &leaves)?;
    let grad = tape.backward(out)?;
    let mut worst: f64 = 0.0;
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let up = eval(&x)?;
        x[i] = point[i] - step;
        let down = eval(&x)?;
        x[i] = point[i];
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((grad[i] - fd).abs() / (grad[i].abs() + 1e-8));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coeffs(tape: &Tape, j: &Jet) -> Vec<f64> {
        j.coeff_values(tape).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn leaf_gradient_is_indicator() {
        let mut tape = Tape::new();
        let a = tape.leaf(1.0);
        let _b = tape.leaf(2.0);
        assert_eq!(tape.backward(a).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn product_rule() {
        let mut tape = Tape::new();
        let a = tape.leaf(2.0);
        let b = tape.leaf(3.0);
        let p = tape.mul(a, b).unwrap();
        assert_eq!(tape.backward(p).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn foreign_variable_rejected() {
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = t1.leaf(1.0);
        let b = t2.leaf(1.0);
        assert!(matches!(t1.add(a, b), Err(AutodiffError::TapeMismatch { .. })));
        assert!(t2.backward(a).is_err());
    }

    #[test]
    fn unit_jet_is_multiplicative_identity() {
        let mut tape = Tape::new();
        let one = Jet::constant(&mut tape, 1.0, 3).unwrap();
        let vals = [0.3, -1.2, 2.5, 0.7];
        let c: Vec<VarRef> = vals.iter().map(|&v| tape.leaf(v)).collect();
        let j = Jet::from_coeffs(c).unwrap();
        let p = one.mul(&mut tape, &j).unwrap();
        assert_eq!(coeffs(&tape, &p), vals.to_vec());
    }

    #[test]
    fn square_and_cube_of_variable() {
        let mut tape = Tape::new();
        let x = Jet::variable(&mut tape, 1.5, 3).unwrap();
        let x2 = x.mul(&mut tape, &x).unwrap();
        assert_eq!(coeffs(&tape, &x2), vec![2.25, 3.0, 1.0, 0.0]);
        let mut tape = Tape::new();
        let x = Jet::variable(&mut tape, 1.0, 3).unwrap();
        let x2 = x.mul(&mut tape, &x).unwrap();
        let x3 = x2.mul(&mut tape, &x).unwrap();
        assert_eq!(coeffs(&tape, &x3), vec![1.0, 3.0, 3.0, 1.0]);
    }

    #[test]
    fn tanh_maclaurin() {
        let mut tape = Tape::new();
        let x = Jet::variable(&mut tape, 0.0, 3).unwrap();
        let y = x.tanh(&mut tape).unwrap();
        assert!(close(&coeffs(&tape, &y), &[0.0, 1.0, 0.0, -1.0 / 3.0], 1e-15));
    }

    #[test]
    fn tanh_of_constant_jet() {
        let mut tape = Tape::new();
        let c = Jet::constant(&mut tape, 0.8, 3).unwrap();
        let y = c.tanh(&mut tape).unwrap();
        assert_eq!(coeffs(&tape, &y), vec![0.8f64.tanh(), 0.0, 0.0, 0.0]);
    }

    #[test]
    fn tanh_chain_rule_first_order() {
        let mut tape = Tape::new();
        let x = Jet::variable(&mut tape, 0.5, 1).unwrap();
        let y = x.tanh(&mut tape).unwrap();
        let t = 0.5f64.tanh();
        assert!((y.derivative(&tape, 1).unwrap() - (1.0 - t * t)).abs() < 1e-15);
    }

    #[test]
    fn tanh_jet_matches_closed_form_derivatives() {
        // u(δ) = tanh(a + bδ): u^(k) = b^k·T^(k)(a)
        let (a0, b) = (0.37, -1.4);
        let mut tape = Tape::new();
        let x = Jet::variable(&mut tape, 0.0, 3).unwrap();
        let z = x.scale(&mut tape, b).unwrap().add_const(&mut tape, a0).unwrap();
        let y = z.tanh(&mut tape).unwrap();
        let t = a0.tanh();
        let d1 = 1.0 - t * t;
        let d2 = -2.0 * t * d1;
        let d3 = d1 * (6.0 * t * t - 2.0);
        let want = [t, b * d1, b * b * d2, b * b * b * d3];
        for (k, w) in want.iter().enumerate() {
            assert!((y.derivative(&tape, k).unwrap() - w).abs() < 1e-14, "order {k}");
        }
        assert!(matches!(
            y.derivative(&tape, 4),
            Err(AutodiffError::OrderTooHigh { .. })
        ));
    }

    #[test]
    fn degree_checks() {
        let mut tape = Tape::new();
        assert!(Jet::constant(&mut tape, 0.0, 4).is_err());
        let a = Jet::variable(&mut tape, 0.0, 2).unwrap();
        let b = Jet::variable(&mut tape, 0.0, 3).unwrap();
        assert!(matches!(a.mul(&mut tape, &b), Err(AutodiffError::DegreeMismatch(2, 3))));
    }

    #[test]
    fn gradient_through_jet_coefficients() {
        // d/dw of the third x-derivative of tanh(w·x) at x = x0 is checked
        // against finite differences of the closed form.
        let x0 = 0.3;
        let f = |tape: &mut Tape, w: &[VarRef]| -> Result<VarRef> {
            let x = Jet::variable(tape, x0, 3)?;
            let zero = tape.constant(0.0);
            let z = Jet::affine(tape, &[w[0]], &[x], zero)?;
            let y = z.tanh(tape)?;
            y.derivative_var(tape, 3)
        };
        assert!(check_gradient_fd(f, &[0.9], 1e-5).unwrap() < 1e-7);
    }

    #[test]
    fn fd_check_on_quadratic_and_constant() {
        let quad = |tape: &mut Tape, v: &[VarRef]| -> Result<VarRef> {
            let a = tape.square(v[0])?;
            let b = tape.mul(v[0], v[1])?;
            let c = tape.scale(v[1], 3.0)?;
            tape.lin_comb(&[(a, 2.0), (b, -1.0), (c, 1.0)], 0.5)
        };
        assert!(check_gradient_fd(quad, &[0.7, -1.3], 1e-5).unwrap() < 1e-9);
        let cst = |tape: &mut Tape, _v: &[VarRef]| -> Result<VarRef> { Ok(tape.constant(4.0)) };
        assert_eq!(check_gradient_fd(cst, &[1.0, 2.0], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn division_gradient() {
        let f = |tape: &mut Tape, v: &[VarRef]| -> Result<VarRef> {
            let c = tape.cube(v[0])?;
            tape.div(c, v[1])
        };
        assert!(check_gradient_fd(f, &[1.1, 2.3], 1e-5).unwrap() < 1e-8);
    }

    // Random straight-line program over three leaves.
    fn program(tape: &mut Tape, v: &[VarRef], ops: &[u8]) -> Result<VarRef> {
        let mut stack: Vec<VarRef> = v.to_vec();
        for (k, &op) in ops.iter().enumerate() {
            let a = stack[k % stack.len()];
            let b = stack[(k * 7 + 1) % stack.len()];
            let r = match op % 6 {
                0 => tape.add(a, b)?,
                1 => tape.sub(a, b)?,
                2 => tape.mul(a, b)?,
                3 => tape.tanh(a)?,
                4 => tape.scale(a, 0.7)?,
                _ => tape.dot(&[(a, b), (b, b)], Some(a))?,
            };
            stack.push(r);
        }
        let last = *stack.last().unwrap();
        tape.tanh(last)
    }

    proptest! {
        #[test]
        fn backward_is_linear(
            x in prop::collection::vec(-1.0f64..1.0, 3),
            ops_f in prop::collection::vec(0u8..6, 1..12),
            ops_g in prop::collection::vec(0u8..6, 1..12),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let mut tape = Tape::new();
            let v: Vec<VarRef> = x.iter().map(|&a| tape.leaf(a)).collect();
            let f = program(&mut tape, &v, &ops_f).unwrap();
            let g = program(&mut tape, &v, &ops_g).unwrap();
            let h = tape.lin_comb(&[(f, alpha), (g, beta)], 0.0).unwrap();
            let (gf, gg, gh) = (tape.backward(f).unwrap(), tape.backward(g).unwrap(), tape.backward(h).unwrap());
            for i in 0..3 {
                let want = alpha * gf[i] + beta * gg[i];
                prop_assert!((gh[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn replay_is_bitwise_deterministic(
            x in prop::collection::vec(-1.0f64..1.0, 3),
            ops in prop::collection::vec(0u8..6, 1..12),
        ) {
            let run = || {
                let mut tape = Tape::new();
                let v: Vec<VarRef> = x.iter().map(|&a| tape.leaf(a)).collect();
                let out = program(&mut tape, &v, &ops).unwrap();
                tape.backward(out).unwrap()
            };
            let (a, b) = (run(), run());
            prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn random_programs_match_fd(
            x in prop::collection::vec(-1.0f64..1.0, 3),
            ops in prop::collection::vec(0u8..6, 1..10),
        ) {
            // Mixed tolerance: gradients that cancel to zero leave only
            // finite-difference roundoff, which a pure relative test rejects.
            let eval = |p: &[f64]| {
                let mut tape = Tape::new();
                let v: Vec<VarRef> = p.iter().map(|&a| tape.leaf(a)).collect();
                let out = program(&mut tape, &v, &ops).unwrap();
                (tape.value(out).unwrap(), tape.backward(out).unwrap())
            };
            let (_, grad) = eval(&x);
            for i in 0..3 {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[i] += 1e-5;
                down[i] -= 1e-5;
                let fd = (eval(&up).0 - eval(&down).0) / 2e-5;
                prop_assert!((grad[i] - fd).abs() <= 1e-4 * grad[i].abs() + 1e-8, "{} vs {}", grad[i], fd);
            }
        }
    }
}
