//! Straight-line compilation of expression DAGs for fast repeated
//! evaluation.
//!
//! A [`Tape`] flattens one or more expressions (sharing a variable space)
//! into a topologically ordered instruction list; nodes shared between the
//! expressions are evaluated once. Tape evaluation uses IEEE semantics
//! (division by zero produces an infinity rather than an error); callers
//! on checked paths fall back to [`Expr::eval`] when an output is
//! non-finite to recover the precise domain error.

use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use super::{eval_unary, key, BinaryOp, Expr, Node, UnaryOp};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Load(u32),
    Unary(UnaryOp, u32),
    Binary(BinaryOp, u32, u32),
    PowI(u32, i32),
}

/// A compiled batch of expressions.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    n_vars: usize,
}

/// Reusable evaluation scratch space for a [`Tape`].
#[derive(Debug, Default, Clone)]
pub struct TapeBuf {
    slots: Vec<f64>,
    out: Vec<f64>,
}

impl Tape {
    /// Compile a batch of expressions over the same variable space.
    pub fn compile(exprs: &[Expr]) -> Tape {
        assert!(!exprs.is_empty(), "cannot compile an empty batch");
        let space = exprs[0].space().clone();
        for e in exprs {
            assert!(
                e.space() == &space,
                "tape expressions must share one variable space"
            );
        }
        let mut ops = Vec::new();
        let mut slot_of: HashMap<usize, u32> = HashMap::new();
        let mut outputs = Vec::with_capacity(exprs.len());
        for e in exprs {
            let s = compile_node(e.node(), &mut ops, &mut slot_of);
            outputs.push(s);
        }
        Tape {
            ops,
            outputs,
            n_vars: space.len(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_ops(&self) -> usize {
        self.ops.len()
    }

    /// Evaluate against `env` (indexed by `VarId`, covering the space).
    /// Returns the output values; contents are IEEE results and may be
    /// non-finite near singularities.
    pub fn eval<'b>(&self, env: &[f64], buf: &'b mut TapeBuf) -> &'b [f64] {
        debug_assert!(env.len() >= self.n_vars);
        buf.slots.resize(self.ops.len(), 0.0);
        let slots = &mut buf.slots;
        for (i, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => c,
                Op::Load(var) => env[var as usize],
                Op::Unary(op, a) => eval_unary(op, slots[a as usize]),
                Op::Binary(op, a, b) => {
                    let (x, y) = (slots[a as usize], slots[b as usize]);
                    match op {
                        BinaryOp::Add => x + y,
                        BinaryOp::Sub => x - y,
                        BinaryOp::Mul => x * y,
                        BinaryOp::Div => x / y,
                    }
                }
                Op::PowI(a, n) => crate::math::powi(slots[a as usize], n),
            };
            slots[i] = v;
        }
        buf.out.clear();
        buf.out
            .extend(self.outputs.iter().map(|&s| slots[s as usize]));
        &buf.out
    }
}

fn compile_node(node: &alloc::sync::Arc<Node>, ops: &mut Vec<Op>, slot_of: &mut HashMap<usize, u32>) -> u32 {
    if let Some(&s) = slot_of.get(&key(node)) {
        return s;
    }
    let op = match &**node {
        Node::Const(c) => Op::Const(*c),
        Node::Var(v) => Op::Load(v.0 as u32),
        Node::Unary(u, a) => {
            let sa = compile_node(a, ops, slot_of);
            Op::Unary(*u, sa)
        }
        Node::Binary(b, l, r) => {
            let sl = compile_node(l, ops, slot_of);
            let sr = compile_node(r, ops, slot_of);
            Op::Binary(*b, sl, sr)
        }
        Node::PowI(a, n) => {
            let sa = compile_node(a, ops, slot_of);
            Op::PowI(sa, *n)
        }
    };
    let slot = ops.len() as u32;
    ops.push(op);
    slot_of.insert(key(node), slot);
    slot
}

#[cfg(test)]
mod tests {
    use super::super::VariableSpace;
    use super::*;

    #[test]
    fn tape_matches_eval() {
        let sp = VariableSpace::new(vec!["x", "y"], Vec::<&str>::new(), vec!["p"]).unwrap();
        let e1 = Expr::parse("sin(x*y) + p*x^3 - exp(y)/(1+x^2)", &sp).unwrap();
        let e2 = e1.diff(sp.lookup("x").unwrap());
        let tape = Tape::compile(&[e1.clone(), e2.clone()]);
        let mut buf = TapeBuf::default();
        for k in 0..50 {
            let env = [0.1 * k as f64 - 2.0, 0.07 * k as f64, 1.0 + 0.01 * k as f64];
            let out = tape.eval(&env, &mut buf);
            assert!((out[0] - e1.eval(&env).unwrap()).abs() < 1e-12);
            assert!((out[1] - e2.eval(&env).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_subgraphs_evaluated_once() {
        let sp = VariableSpace::new(vec!["x"], Vec::<&str>::new(), Vec::<&str>::new()).unwrap();
        let base = Expr::parse("sin(x) + x^2", &sp).unwrap();
        let sum = base.mul(&base).add(&base);
        let tape = Tape::compile(&[sum]);
        // sin, x, x^2, +, *, + : six ops, not the tree's nine
        assert!(tape.n_ops() <= 6, "{} ops", tape.n_ops());
    }
}
