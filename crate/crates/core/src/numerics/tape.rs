//! Tape-based reverse-mode differentiation over scalars.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s in issue
//! order, which is already a topological order; [`Tape::backward`] then
//! sweeps the record once in reverse, accumulating adjoints. Parameters off
//! the path keep adjoint zero. A tape is single-threaded and is rebuilt per
//! training step.
//!
//! Subgradient conventions (fixed so training is deterministic through the
//! interval meet): `max`/`min` route the gradient to the winning argument
//! and split it 0.5/0.5 on exact ties; `abs` and `relu` use derivative 0
//! and 0.5 at the origin respectively (`relu` matching `max(x, 0)`).

use std::cell::RefCell;
use std::rc::Rc;

use super::num::{sigmoid_f64, Num};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Max,
    Min,
    Abs,
    Exp,
    Log1p,
    Sigmoid,
    Relu,
    AddC,
    MulC,
}

#[derive(Clone, Copy)]
struct Node {
    op: Op,
    a: u32,
    b: u32,
    /// Constant operand of AddC/MulC.
    aux: f64,
    val: f64,
}

type Nodes = Rc<RefCell<Vec<Node>>>;

/// The operation record. Clone is a cheap second handle to the same tape.
#[derive(Clone, Default)]
pub struct Tape {
    nodes: Nodes,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Create an input (leaf) variable.
    pub fn leaf(&self, value: f64) -> Var {
        let idx = push(
            &self.nodes,
            Node {
                op: Op::Leaf,
                a: 0,
                b: 0,
                aux: 0.0,
                val: value,
            },
        );
        Var {
            nodes: Rc::clone(&self.nodes),
            idx,
        }
    }

    /// Reverse sweep from a scalar loss. Every node is visited exactly once
    /// in reverse topological (issue) order.
    pub fn backward(&self, loss: &Var) -> Gradients {
        assert!(
            Rc::ptr_eq(&self.nodes, &loss.nodes),
            "loss recorded on a different tape"
        );
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[loss.idx as usize] = 1.0;
        for i in (0..=loss.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = nodes[i];
            let (a, b) = (n.a as usize, n.b as usize);
            match n.op {
                Op::Leaf => {}
                Op::Add => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Sub => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                Op::Mul => {
                    adj[a] += g * nodes[b].val;
                    adj[b] += g * nodes[a].val;
                }
                Op::Max => {
                    let (va, vb) = (nodes[a].val, nodes[b].val);
                    if va > vb {
                        adj[a] += g;
                    } else if vb > va {
                        adj[b] += g;
                    } else {
                        adj[a] += 0.5 * g;
                        adj[b] += 0.5 * g;
                    }
                }
                Op::Min => {
                    let (va, vb) = (nodes[a].val, nodes[b].val);
                    if va < vb {
                        adj[a] += g;
                    } else if vb < va {
                        adj[b] += g;
                    } else {
                        adj[a] += 0.5 * g;
                        adj[b] += 0.5 * g;
                    }
                }
                Op::Abs => {
                    let va = nodes[a].val;
                    if va > 0.0 {
                        adj[a] += g;
                    } else if va < 0.0 {
                        adj[a] -= g;
                    }
                }
                Op::Exp => adj[a] += g * n.val,
                Op::Log1p => adj[a] += g / (1.0 + nodes[a].val),
                Op::Sigmoid => adj[a] += g * n.val * (1.0 - n.val),
                Op::Relu => {
                    let va = nodes[a].val;
                    if va > 0.0 {
                        adj[a] += g;
                    } else if va == 0.0 {
                        adj[a] += 0.5 * g;
                    }
                }
                Op::AddC => adj[a] += g,
                Op::MulC => adj[a] += g * n.aux,
            }
        }
        Gradients { adj }
    }
}

fn push(nodes: &Nodes, node: Node) -> u32 {
    let mut v = nodes.borrow_mut();
    let idx = u32::try_from(v.len()).expect("tape overflow");
    v.push(node);
    idx
}

/// Adjoints produced by one backward sweep.
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn get(&self, v: &Var) -> f64 {
        self.adj[v.idx as usize]
    }

    /// Adjoints of `count` consecutive leaves starting at `first`.
    pub fn leaf_range(&self, first: &Var, count: usize) -> &[f64] {
        let s = first.idx as usize;
        &self.adj[s..s + count]
    }
}

/// A scalar recorded on a tape.
#[derive(Clone)]
pub struct Var {
    nodes: Nodes,
    idx: u32,
}

impl Var {
    pub fn index(&self) -> u32 {
        self.idx
    }

    fn value(&self) -> f64 {
        self.nodes.borrow()[self.idx as usize].val
    }

    fn unary(&self, op: Op, val: f64) -> Var {
        let idx = push(
            &self.nodes,
            Node {
                op,
                a: self.idx,
                b: 0,
                aux: 0.0,
                val,
            },
        );
        Var {
            nodes: Rc::clone(&self.nodes),
            idx,
        }
    }

    fn with_const(&self, op: Op, aux: f64, val: f64) -> Var {
        let idx = push(
            &self.nodes,
            Node {
                op,
                a: self.idx,
                b: 0,
                aux,
                val,
            },
        );
        Var {
            nodes: Rc::clone(&self.nodes),
            idx,
        }
    }

    fn binary(&self, o: &Var, op: Op, val: f64) -> Var {
        debug_assert!(
            Rc::ptr_eq(&self.nodes, &o.nodes),
            "vars from different tapes"
        );
        let idx = push(
            &self.nodes,
            Node {
                op,
                a: self.idx,
                b: o.idx,
                aux: 0.0,
                val,
            },
        );
        Var {
            nodes: Rc::clone(&self.nodes),
            idx,
        }
    }
}

impl Num for Var {
    fn add(&self, o: &Self) -> Self {
        let v = self.value() + o.value();
        self.binary(o, Op::Add, v)
    }
    fn sub(&self, o: &Self) -> Self {
        let v = self.value() - o.value();
        self.binary(o, Op::Sub, v)
    }
    fn mul(&self, o: &Self) -> Self {
        let v = self.value() * o.value();
        self.binary(o, Op::Mul, v)
    }
    fn max(&self, o: &Self) -> Self {
        let v = self.value().max(o.value());
        self.binary(o, Op::Max, v)
    }
    fn min(&self, o: &Self) -> Self {
        let v = self.value().min(o.value());
        self.binary(o, Op::Min, v)
    }
    fn abs(&self) -> Self {
        let v = self.value().abs();
        self.unary(Op::Abs, v)
    }
    fn exp(&self) -> Self {
        let v = self.value().exp();
        self.unary(Op::Exp, v)
    }
    fn log1p(&self) -> Self {
        let v = self.value().ln_1p();
        self.unary(Op::Log1p, v)
    }
    fn sigmoid(&self) -> Self {
        let v = sigmoid_f64(self.value());
        self.unary(Op::Sigmoid, v)
    }
    fn relu(&self) -> Self {
        let v = self.value().max(0.0);
        self.unary(Op::Relu, v)
    }
    fn add_const(&self, c: f64) -> Self {
        let v = self.value() + c;
        self.with_const(Op::AddC, c, v)
    }
    fn mul_const(&self, c: f64) -> Self {
        let v = self.value() * c;
        self.with_const(Op::MulC, c, v)
    }
    fn val(&self) -> f64 {
        self.value()
    }
}

/// A scalar function evaluable on both scalar kinds, for gradient checking.
pub trait ScalarFn {
    fn eval<S: Num>(&self, xs: &[S]) -> S;
}

/// Max over coordinates of `|analytic - central difference| / max(1, |analytic|)`.
///
/// The analytic gradient comes from one tape sweep; the reference from
/// central differences of the plain-f64 evaluation at `params ± step`.
pub fn finite_diff_check<F: ScalarFn>(f: &F, params: &[f64], step: f64) -> f64 {
    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|&p| tape.leaf(p)).collect();
    let loss = f.eval(&vars);
    let grads = tape.backward(&loss);

    let mut xs = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = xs[i];
        xs[i] = orig + step;
        let fp: f64 = f.eval(&xs);
        xs[i] = orig - step;
        let fm: f64 = f.eval(&xs);
        xs[i] = orig;
        let fd = (fp - fm) / (2.0 * step);
        let an = grads.get(&vars[i]);
        worst = worst.max((an - fd).abs() / f64::max(1.0, an.abs()));
    }
    worst
}
