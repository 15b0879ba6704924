//! Reverse-mode differentiation over batched 1-D values.
//!
//! Every node holds either a scalar or a batch vector; binary operations
//! broadcast a scalar against a vector and reduce the gradient back when
//! propagating. The primitive set is exactly what the converter graph
//! needs. Non-differentiable primitives carry surrogate (straight-through)
//! gradient rules; [`GradRule::Exact`] switches them to their true
//! almost-everywhere derivative for finite-difference verification.

mod adam;
mod fdcheck;

pub use adam::{clip_global_norm, cosine_lr, Adam};
pub use fdcheck::{finite_diff_check, FdReport};

use crate::error::{Error, Result};

/// Pass-through band of the quantizer surrogate gradient.
pub const SIGN_STE_BAND: f64 = 0.5;
/// Pass-through band of the mask (heaviside) surrogate gradient.
pub const HEAVISIDE_STE_BAND: f64 = 1.0;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// How non-differentiable primitives propagate gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradRule {
    /// Straight-through estimators (training).
    #[default]
    Surrogate,
    /// True derivative almost everywhere (zero for steps).
    Exact,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Dot { start: u32, len: u32 },
    HardTanh(Var, f64),
    Sign(Var),
    Round(Var),
    Heaviside(Var),
    Clip(Var, f64, f64),
    Log(Var),
    Exp(Var),
    Abs(Var),
    Sum(Var),
    Powf(Var, f64),
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    off: usize,
    len: usize,
    grad: bool,
}

/// Append-only record of a forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    pairs: Vec<(Var, Var)>,
    branches: Option<u64>,
}

/// Gradients of one root with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<f64>,
    spans: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &[f64] {
        let (off, len) = self.spans[v.index()];
        &self.grads[off..off + len]
    }

    /// Gradient of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.get(v)[0]
    }
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn mix(h: u64, x: u64) -> u64 {
    (h ^ x).wrapping_mul(FNV_PRIME)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Drops all nodes, keeping allocations.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
        self.pairs.clear();
        if self.branches.is_some() {
            self.branches = Some(0xcbf2_9ce4_8422_2325);
        }
    }

    /// Starts hashing every branch decision of piecewise primitives.
    pub fn track_branches(&mut self) {
        self.branches = Some(0xcbf2_9ce4_8422_2325);
    }

    /// Hash of all branch decisions so far, if tracking.
    pub fn branch_signature(&self) -> Option<u64> {
        self.branches
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.index()];
        &self.values[n.off..n.off + n.len]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    /// Index of the first node holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| self.values[n.off..n.off + n.len].iter().any(|x| !x.is_finite()))
    }

    fn push(&mut self, op: Op, values: impl IntoIterator<Item = f64>, grad: bool) -> Var {
        let off = self.values.len();
        self.values.extend(values);
        let len = self.values.len() - off;
        debug_assert!(len > 0);
        self.nodes.push(Node { op, off, len, grad });
        Var(self.nodes.len() as u32 - 1)
    }

    fn node(&self, v: Var) -> Node {
        self.nodes[v.index()]
    }

    fn note(&mut self, code: u64) {
        if let Some(h) = self.branches.as_mut() {
            *h = mix(*h, code);
        }
    }

    /// Trainable scalar leaf.
    pub fn param(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, [value], true)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, [value], false)
    }

    pub fn constant_vec(&mut self, values: &[f64]) -> Var {
        self.push(Op::Leaf, values.iter().copied(), false)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let na = self.node(a);
        let off = self.values.len();
        self.values.reserve(na.len);
        for i in 0..na.len {
            let x = self.values[na.off + i];
            self.values.push(f(x));
        }
        self.nodes.push(Node {
            op,
            off,
            len: na.len,
            grad: na.grad,
        });
        Var(self.nodes.len() as u32 - 1)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let na = self.node(a);
        let nb = self.node(b);
        let len = na.len.max(nb.len);
        assert!(
            (na.len == len || na.len == 1) && (nb.len == len || nb.len == 1),
            "incompatible operand lengths {} and {}",
            na.len,
            nb.len
        );
        let sa = usize::from(na.len != 1);
        let sb = usize::from(nb.len != 1);
        let off = self.values.len();
        self.values.reserve(len);
        for i in 0..len {
            let x = self.values[na.off + i * sa];
            let y = self.values[nb.off + i * sb];
            self.values.push(f(x, y));
        }
        self.nodes.push(Node {
            op,
            off,
            len,
            grad: na.grad || nb.grad,
        });
        Var(self.nodes.len() as u32 - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Offset(a), |x| x + c)
    }

    /// `Σ_i w_i · x_i` with scalar weights `w_i`, accumulated left to right from zero.
    pub fn dot(&mut self, terms: &[(Var, Var)]) -> Var {
        assert!(!terms.is_empty(), "empty inner product");
        let len = terms
            .iter()
            .map(|(_, x)| self.nodes[x.index()].len)
            .max()
            .unwrap_or(1);
        let mut grad = false;
        let off = self.values.len();
        self.values.resize(off + len, 0.0);
        for &(w, x) in terms {
            let nw = self.node(w);
            let nx = self.node(x);
            assert_eq!(nw.len, 1, "inner-product weights must be scalars");
            assert!(nx.len == len || nx.len == 1, "inner-product length mismatch");
            grad |= nw.grad || nx.grad;
            let wv = self.values[nw.off];
            if nx.len == 1 {
                let xv = self.values[nx.off];
                for i in 0..len {
                    self.values[off + i] += wv * xv;
                }
            } else {
                let (head, out) = self.values.split_at_mut(off);
                let xs = &head[nx.off..nx.off + len];
                for (o, xv) in out.iter_mut().zip(xs) {
                    *o += wv * xv;
                }
            }
        }
        let start = self.pairs.len() as u32;
        self.pairs.extend_from_slice(terms);
        self.nodes.push(Node {
            op: Op::Dot {
                start,
                len: terms.len() as u32,
            },
            off,
            len,
            grad,
        });
        Var(self.nodes.len() as u32 - 1)
    }

    pub fn hardtanh(&mut self, a: Var, delta: f64) -> Var {
        let v = self.unary(a, Op::HardTanh(a, delta), |x| x.clamp(-delta, delta));
        if self.branches.is_some() {
            let codes: Vec<u64> = self
                .value(a)
                .iter()
                .map(|x| (*x > delta) as u64 * 2 + (*x < -delta) as u64)
                .collect();
            codes.into_iter().for_each(|c| self.note(c));
        }
        v
    }

    /// One-bit quantizer, output ±0.5.
    pub fn sign(&mut self, a: Var) -> Var {
        let v = self.unary(a, Op::Sign(a), crate::encoder::quantize_sign);
        self.note_values(v, |x| (x > 0.0) as u64);
        v
    }

    /// Nearest integer, ties away from zero.
    pub fn round(&mut self, a: Var) -> Var {
        let v = self.unary(a, Op::Round(a), f64::round);
        self.note_values(v, |x| x as i64 as u64);
        v
    }

    /// Strict heaviside: 1 for positive input, else 0.
    pub fn heaviside(&mut self, a: Var) -> Var {
        let v = self.unary(a, Op::Heaviside(a), |x| if x > 0.0 { 1.0 } else { 0.0 });
        self.note_values(v, |x| x as u64);
        v
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.unary(a, Op::Clip(a, lo, hi), |x| x.clamp(lo, hi));
        if self.branches.is_some() {
            let codes: Vec<u64> = self
                .value(a)
                .iter()
                .map(|x| (*x > hi) as u64 * 2 + (*x < lo) as u64)
                .collect();
            codes.into_iter().for_each(|c| self.note(c));
        }
        v
    }

    /// `max(0, a)`.
    pub fn relu(&mut self, a: Var) -> Var {
        self.clip(a, 0.0, f64::INFINITY)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.unary(a, Op::Abs(a), f64::abs);
        if self.branches.is_some() {
            let codes: Vec<u64> = self.value(a).iter().map(|x| (*x < 0.0) as u64).collect();
            codes.into_iter().for_each(|c| self.note(c));
        }
        v
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().sum();
        let grad = self.node(a).grad;
        self.push(Op::Sum(a), [s], grad)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, Op::Powf(a, p), |x| x.powf(p))
    }

    fn note_values(&mut self, v: Var, code: impl Fn(f64) -> u64) {
        if self.branches.is_some() {
            let codes: Vec<u64> = self.value(v).iter().map(|x| code(*x)).collect();
            codes.into_iter().for_each(|c| self.note(c));
        }
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var, rule: GradRule) -> Gradients {
        let mut grads = vec![0.0; self.values.len()];
        let root_node = self.node(root);
        assert_eq!(root_node.len, 1, "backward root must be a scalar");
        grads[root_node.off] = 1.0;
        let mut g = Vec::new();
        for idx in (0..=root.index()).rev() {
            let node = self.nodes[idx];
            if !node.grad {
                continue;
            }
            g.clear();
            g.extend_from_slice(&grads[node.off..node.off + node.len]);
            if g.iter().all(|x| *x == 0.0) {
                continue;
            }
            self.propagate(node, &g, &mut grads, rule);
        }
        Gradients {
            grads,
            spans: self.nodes.iter().map(|n| (n.off, n.len)).collect(),
        }
    }

    /// Adds `g[i] * factor(i)` into the gradient of `a`, reducing to a
    /// scalar when `a` was broadcast.
    fn accumulate(
        &self,
        a: Var,
        g: &[f64],
        grads: &mut [f64],
        factor: impl Fn(usize) -> f64,
    ) {
        let na = self.node(a);
        if !na.grad {
            return;
        }
        if na.len == g.len() {
            for (i, gi) in g.iter().enumerate() {
                grads[na.off + i] += gi * factor(i);
            }
        } else {
            let s: f64 = g.iter().enumerate().map(|(i, gi)| gi * factor(i)).sum();
            grads[na.off] += s;
        }
    }

    fn at(&self, v: Var, i: usize) -> f64 {
        let n = self.node(v);
        if n.len == 1 {
            self.values[n.off]
        } else {
            self.values[n.off + i]
        }
    }

    fn propagate(&self, node: Node, g: &[f64], grads: &mut [f64], rule: GradRule) {
        let out = &self.values[node.off..node.off + node.len];
        let surrogate = rule == GradRule::Surrogate;
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(a, g, grads, |_| 1.0);
                self.accumulate(b, g, grads, |_| 1.0);
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g, grads, |_| 1.0);
                self.accumulate(b, g, grads, |_| -1.0);
            }
            Op::Mul(a, b) => {
                self.accumulate(a, g, grads, |i| self.at(b, i));
                self.accumulate(b, g, grads, |i| self.at(a, i));
            }
            Op::Div(a, b) => {
                self.accumulate(a, g, grads, |i| 1.0 / self.at(b, i));
                self.accumulate(b, g, grads, |i| {
                    let d = self.at(b, i);
                    -self.at(a, i) / (d * d)
                });
            }
            Op::Scale(a, c) => self.accumulate(a, g, grads, |_| c),
            Op::Offset(a) => self.accumulate(a, g, grads, |_| 1.0),
            Op::Dot { start, len } => {
                let terms = &self.pairs[start as usize..(start + len) as usize];
                for &(w, x) in terms {
                    let nw = self.node(w);
                    let nx = self.node(x);
                    if nw.grad {
                        let xs = &self.values[nx.off..nx.off + nx.len];
                        let s: f64 = if nx.len == 1 {
                            xs[0] * g.iter().sum::<f64>()
                        } else {
                            g.iter().zip(xs).map(|(gi, xi)| gi * xi).sum()
                        };
                        grads[nw.off] += s;
                    }
                    if nx.grad {
                        let wv = self.values[nw.off];
                        if nx.len == g.len() {
                            for (i, gi) in g.iter().enumerate() {
                                grads[nx.off + i] += wv * gi;
                            }
                        } else {
                            grads[nx.off] += wv * g.iter().sum::<f64>();
                        }
                    }
                }
            }
            Op::HardTanh(a, delta) => self.accumulate(a, g, grads, |i| {
                let x = self.at(a, i);
                if x.abs() <= delta {
                    1.0
                } else {
                    0.0
                }
            }),
            Op::Sign(a) => {
                if surrogate {
                    self.accumulate(a, g, grads, |i| {
                        if self.at(a, i).abs() <= SIGN_STE_BAND {
                            1.0
                        } else {
                            0.0
                        }
                    })
                }
            }
            Op::Round(a) => {
                if surrogate {
                    self.accumulate(a, g, grads, |_| 1.0)
                }
            }
            Op::Heaviside(a) => {
                if surrogate {
                    self.accumulate(a, g, grads, |i| {
                        if self.at(a, i).abs() <= HEAVISIDE_STE_BAND {
                            1.0
                        } else {
                            0.0
                        }
                    })
                }
            }
            Op::Clip(a, lo, hi) => self.accumulate(a, g, grads, |i| {
                let x = self.at(a, i);
                if (lo..=hi).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }),
            Op::Log(a) => self.accumulate(a, g, grads, |i| 1.0 / self.at(a, i)),
            Op::Exp(a) => self.accumulate(a, g, grads, |i| out[i]),
            Op::Abs(a) => self.accumulate(a, g, grads, |i| {
                let x = self.at(a, i);
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::Sum(a) => {
                let na = self.node(a);
                if na.grad {
                    for i in 0..na.len {
                        grads[na.off + i] += g[0];
                    }
                }
            }
            Op::Powf(a, p) => {
                self.accumulate(a, g, grads, |i| p * self.at(a, i).powf(p - 1.0))
            }
        }
    }
}

/// Evaluates `model_eval` on a fresh tape and checks the result is finite.
pub fn forward_record<F>(model_eval: F) -> Result<(f64, Tape, Var)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let root = model_eval(&mut tape)?;
    let value = tape.scalar(root);
    if !value.is_finite() {
        let node = tape.first_non_finite().unwrap_or(root.index());
        return Err(Error::Numeric { node });
    }
    Ok((value, tape, root))
}
