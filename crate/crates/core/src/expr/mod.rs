//! A minimal expression-graph engine: parse, evaluate and exactly
//! differentiate scalar functions of named variables.
//!
//! Expressions are immutable DAGs (`Arc`-shared nodes) over a closed
//! operator set: `+ - * / ^int neg sin cos tan exp ln sqrt abs`. The set is
//! deliberately small so symbolic differentiation is total and branch-free;
//! general powers must be written through `exp`/`ln`.
//!
//! Sharing is only ever introduced *within* one graph (differentiation and
//! substitution reuse subterms); separately parsed expressions never share
//! nodes. Evaluation and differentiation memoize per node so DAG-shaped
//! graphs cost their unique-node count, not their tree size.

mod parser;
mod tape;

pub use parser::{parse, ParseError, ParseErrorKind};
pub use tape::{Tape, TapeBuf};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

/// Index of a variable in its [`VariableSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Role of a variable within a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    State,
    Input,
    Param,
}

/// Ordered variable names partitioned into states, inputs and parameters.
///
/// The partition order is fixed for the life of a model: indices `0..n`
/// are states, `n..n+m` inputs, `n+m..n+m+q` parameters. Names are unique
/// across the whole space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSpace {
    names: Vec<String>,
    n_states: usize,
    n_inputs: usize,
    n_params: usize,
    index: HashMap<String, usize>,
}

/// Error building a [`VariableSpace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateName(pub String);

impl fmt::Display for DuplicateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "duplicate variable name `{}`", self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DuplicateName {}

impl VariableSpace {
    pub fn new<S: Into<String>>(
        states: impl IntoIterator<Item = S>,
        inputs: impl IntoIterator<Item = S>,
        params: impl IntoIterator<Item = S>,
    ) -> Result<Arc<Self>, DuplicateName> {
        let mut names: Vec<String> = states.into_iter().map(Into::into).collect();
        let n_states = names.len();
        names.extend(inputs.into_iter().map(Into::into));
        let n_inputs = names.len() - n_states;
        names.extend(params.into_iter().map(Into::into));
        let n_params = names.len() - n_states - n_inputs;
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(DuplicateName(name.clone()));
            }
        }
        Ok(Arc::new(Self {
            names,
            n_states,
            n_inputs,
            n_params,
            index,
        }))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied().map(VarId)
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.names[id.0]
    }

    pub fn kind(&self, id: VarId) -> VarKind {
        if id.0 < self.n_states {
            VarKind::State
        } else if id.0 < self.n_states + self.n_inputs {
            VarKind::Input
        } else {
            VarKind::Param
        }
    }

    pub fn state(&self, i: usize) -> VarId {
        assert!(i < self.n_states);
        VarId(i)
    }

    pub fn input(&self, k: usize) -> VarId {
        assert!(k < self.n_inputs);
        VarId(self.n_states + k)
    }

    pub fn param(&self, j: usize) -> VarId {
        assert!(j < self.n_params);
        VarId(self.n_states + self.n_inputs + j)
    }

    pub fn states(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.n_states).map(VarId)
    }

    pub fn inputs(&self) -> impl Iterator<Item = VarId> + '_ {
        (self.n_states..self.n_states + self.n_inputs).map(VarId)
    }

    pub fn params(&self) -> impl Iterator<Item = VarId> + '_ {
        (self.n_states + self.n_inputs..self.len()).map(VarId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// A zero-filled environment of the right length.
    pub fn zero_env(&self) -> Vec<f64> {
        alloc::vec![0.0; self.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug)]
pub(crate) enum Node {
    Const(f64),
    Var(VarId),
    Unary(UnaryOp, Arc<Node>),
    Binary(BinaryOp, Arc<Node>, Arc<Node>),
    /// Power with a fixed integer exponent (never 0 or 1 after
    /// simplification).
    PowI(Arc<Node>, i32),
}

/// Domain error raised during evaluation, carrying the offending
/// subexpression in printed form.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalError {
    pub kind: EvalErrorKind,
    /// The subexpression whose evaluation failed, printed.
    pub subexpr: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    NonFinite,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::LogNonPositive => "logarithm of a non-positive value",
            EvalErrorKind::SqrtNegative => "square root of a negative value",
            EvalErrorKind::NonFinite => "non-finite value",
        };
        write!(f, "{what} in `{}`", self.subexpr)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EvalError {}

/// Error remapping an expression onto another variable space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownVariable(pub String);

impl fmt::Display for UnknownVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "variable `{}` not present in the target space", self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for UnknownVariable {}

/// An immutable scalar expression over a [`VariableSpace`].
///
/// Cheap to clone (reference counted). Values are safe to share and
/// evaluate from concurrent contexts.
#[derive(Clone)]
pub struct Expr {
    node: Arc<Node>,
    space: Arc<VariableSpace>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

fn key(node: &Arc<Node>) -> usize {
    Arc::as_ptr(node) as usize
}

impl Expr {
    pub fn space(&self) -> &Arc<VariableSpace> {
        &self.space
    }

    pub fn constant(space: &Arc<VariableSpace>, value: f64) -> Self {
        Self {
            node: Arc::new(Node::Const(value)),
            space: space.clone(),
        }
    }

    pub fn zero(space: &Arc<VariableSpace>) -> Self {
        Self::constant(space, 0.0)
    }

    pub fn var(space: &Arc<VariableSpace>, id: VarId) -> Self {
        assert!(id.0 < space.len(), "variable id out of range");
        Self {
            node: Arc::new(Node::Var(id)),
            space: space.clone(),
        }
    }

    /// Variable by name; panics if absent (use [`VariableSpace::lookup`]
    /// for a fallible path).
    pub fn named(space: &Arc<VariableSpace>, name: &str) -> Self {
        let id = space
            .lookup(name)
            .unwrap_or_else(|| panic!("unknown variable `{name}`"));
        Self::var(space, id)
    }

    /// Parse an infix expression against `space`.
    pub fn parse(text: &str, space: &Arc<VariableSpace>) -> Result<Self, ParseError> {
        parser::parse(text, space)
    }

    fn wrap(&self, node: Arc<Node>) -> Expr {
        Expr {
            node,
            space: self.space.clone(),
        }
    }

    fn assert_same_space(&self, other: &Expr) {
        assert!(
            Arc::ptr_eq(&self.space, &other.space) || self.space == other.space,
            "expressions belong to different variable spaces"
        );
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.node {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self.node, Node::Const(c) if c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(*self.node, Node::Const(c) if c == 1.0)
    }

    // ---- smart constructors -------------------------------------------

    pub fn add(&self, rhs: &Expr) -> Expr {
        self.assert_same_space(rhs);
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            let v = a + b;
            if v.is_finite() {
                return Expr::constant(&self.space, v);
            }
        }
        self.wrap(Arc::new(Node::Binary(
            BinaryOp::Add,
            self.node.clone(),
            rhs.node.clone(),
        )))
    }

    pub fn sub(&self, rhs: &Expr) -> Expr {
        self.assert_same_space(rhs);
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.neg();
        }
        if Arc::ptr_eq(&self.node, &rhs.node) {
            return Expr::zero(&self.space);
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            let v = a - b;
            if v.is_finite() {
                return Expr::constant(&self.space, v);
            }
        }
        self.wrap(Arc::new(Node::Binary(
            BinaryOp::Sub,
            self.node.clone(),
            rhs.node.clone(),
        )))
    }

    pub fn mul(&self, rhs: &Expr) -> Expr {
        self.assert_same_space(rhs);
        if self.is_zero() || rhs.is_zero() {
            return Expr::zero(&self.space);
        }
        if self.is_one() {
            return rhs.clone();
        }
        if rhs.is_one() {
            return self.clone();
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            let v = a * b;
            if v.is_finite() {
                return Expr::constant(&self.space, v);
            }
        }
        self.wrap(Arc::new(Node::Binary(
            BinaryOp::Mul,
            self.node.clone(),
            rhs.node.clone(),
        )))
    }

    pub fn div(&self, rhs: &Expr) -> Expr {
        self.assert_same_space(rhs);
        if rhs.is_one() {
            return self.clone();
        }
        if self.is_zero() && !matches!(rhs.as_const(), Some(c) if c == 0.0) {
            return Expr::zero(&self.space);
        }
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            if b != 0.0 {
                let v = a / b;
                if v.is_finite() {
                    return Expr::constant(&self.space, v);
                }
            }
        }
        self.wrap(Arc::new(Node::Binary(
            BinaryOp::Div,
            self.node.clone(),
            rhs.node.clone(),
        )))
    }

    pub fn neg(&self) -> Expr {
        if let Some(c) = self.as_const() {
            return Expr::constant(&self.space, -c);
        }
        if let Node::Unary(UnaryOp::Neg, inner) = &*self.node {
            return self.wrap(inner.clone());
        }
        self.wrap(Arc::new(Node::Unary(UnaryOp::Neg, self.node.clone())))
    }

    /// Power with a fixed integer exponent (positive or negative).
    pub fn powi(&self, n: i32) -> Expr {
        match n {
            0 => return Expr::constant(&self.space, 1.0),
            1 => return self.clone(),
            _ => {}
        }
        if let Some(c) = self.as_const() {
            let v = crate::math::powi(c, n);
            if v.is_finite() {
                return Expr::constant(&self.space, v);
            }
        }
        self.wrap(Arc::new(Node::PowI(self.node.clone(), n)))
    }

    fn unary(&self, op: UnaryOp) -> Expr {
        if let Some(c) = self.as_const() {
            let v = eval_unary(op, c);
            if v.is_finite() {
                return Expr::constant(&self.space, v);
            }
        }
        self.wrap(Arc::new(Node::Unary(op, self.node.clone())))
    }

    pub fn sin(&self) -> Expr {
        self.unary(UnaryOp::Sin)
    }

    pub fn cos(&self) -> Expr {
        self.unary(UnaryOp::Cos)
    }

    pub fn tan(&self) -> Expr {
        self.unary(UnaryOp::Tan)
    }

    pub fn exp(&self) -> Expr {
        self.unary(UnaryOp::Exp)
    }

    pub fn ln(&self) -> Expr {
        self.unary(UnaryOp::Ln)
    }

    pub fn sqrt(&self) -> Expr {
        self.unary(UnaryOp::Sqrt)
    }

    pub fn abs(&self) -> Expr {
        self.unary(UnaryOp::Abs)
    }

    pub fn scale(&self, factor: f64) -> Expr {
        self.mul(&Expr::constant(&self.space, factor))
    }

    // ---- queries -------------------------------------------------------

    /// Number of unique nodes in the graph.
    pub fn size(&self) -> usize {
        fn walk(node: &Arc<Node>, seen: &mut HashMap<usize, ()>) -> usize {
            if seen.insert(key(node), ()).is_some() {
                return 0;
            }
            1 + match &**node {
                Node::Const(_) | Node::Var(_) => 0,
                Node::Unary(_, a) | Node::PowI(a, _) => walk(a, seen),
                Node::Binary(_, a, b) => walk(a, seen) + walk(b, seen),
            }
        }
        walk(&self.node, &mut HashMap::new())
    }

    /// Sorted list of variables reachable in the expression.
    pub fn variables(&self) -> Vec<VarId> {
        fn walk(node: &Arc<Node>, seen: &mut HashMap<usize, ()>, out: &mut Vec<VarId>) {
            if seen.insert(key(node), ()).is_some() {
                return;
            }
            match &**node {
                Node::Const(_) => {}
                Node::Var(v) => {
                    if !out.contains(v) {
                        out.push(*v);
                    }
                }
                Node::Unary(_, a) | Node::PowI(a, _) => walk(a, seen, out),
                Node::Binary(_, a, b) => {
                    walk(a, seen, out);
                    walk(b, seen, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.node, &mut HashMap::new(), &mut out);
        out.sort();
        out
    }

    pub fn depends_on(&self, id: VarId) -> bool {
        self.variables().contains(&id)
    }

    /// True if the expression references any variable of the given kind.
    pub fn depends_on_kind(&self, kind: VarKind) -> bool {
        self.variables().iter().any(|&v| self.space.kind(v) == kind)
    }

    // ---- evaluation ----------------------------------------------------

    /// Evaluate against an environment indexed by `VarId`. The slice must
    /// cover the whole space.
    pub fn eval(&self, env: &[f64]) -> Result<f64, EvalError> {
        assert!(
            env.len() >= self.space.len(),
            "environment shorter than the variable space"
        );
        let mut cache: HashMap<usize, f64> = HashMap::new();
        eval_node(&self.node, &self.space, env, &mut cache)
    }

    // ---- differentiation -----------------------------------------------

    /// Exact symbolic partial derivative with respect to `var`.
    pub fn diff(&self, var: VarId) -> Expr {
        assert!(var.0 < self.space.len(), "variable id out of range");
        let mut cache: HashMap<usize, Arc<Node>> = HashMap::new();
        let node = diff_node(&self.node, &self.space, var, &mut cache);
        Expr {
            node,
            space: self.space.clone(),
        }
    }

    /// Substitute variables by expressions (same space). `subs` maps
    /// `VarId` to replacement; unmapped variables stay.
    pub fn subst(&self, subs: &HashMap<VarId, Expr>) -> Expr {
        for e in subs.values() {
            self.assert_same_space(e);
        }
        let mut cache: HashMap<usize, Arc<Node>> = HashMap::new();
        let node = subst_node(&self.node, &self.space, subs, &mut cache);
        Expr {
            node,
            space: self.space.clone(),
        }
    }

    /// Substitute variables by constants.
    pub fn subst_consts(&self, pairs: &[(VarId, f64)]) -> Expr {
        let mut subs = HashMap::new();
        for &(id, v) in pairs {
            subs.insert(id, Expr::constant(&self.space, v));
        }
        self.subst(&subs)
    }

    /// Re-host the expression on another space, matching variables by
    /// name.
    pub fn remap(&self, target: &Arc<VariableSpace>) -> Result<Expr, UnknownVariable> {
        let mut map: HashMap<usize, VarId> = HashMap::new();
        for v in self.variables() {
            let name = self.space.name(v);
            let tid = target
                .lookup(name)
                .ok_or_else(|| UnknownVariable(name.to_string()))?;
            map.insert(v.0, tid);
        }
        fn walk(
            node: &Arc<Node>,
            map: &HashMap<usize, VarId>,
            cache: &mut HashMap<usize, Arc<Node>>,
        ) -> Arc<Node> {
            if let Some(hit) = cache.get(&key(node)) {
                return hit.clone();
            }
            let new = match &**node {
                Node::Const(c) => Arc::new(Node::Const(*c)),
                Node::Var(v) => Arc::new(Node::Var(map[&v.0])),
                Node::Unary(op, a) => Arc::new(Node::Unary(*op, walk(a, map, cache))),
                Node::Binary(op, a, b) => {
                    Arc::new(Node::Binary(*op, walk(a, map, cache), walk(b, map, cache)))
                }
                Node::PowI(a, n) => Arc::new(Node::PowI(walk(a, map, cache), *n)),
            };
            cache.insert(key(node), new.clone());
            new
        }
        let node = walk(&self.node, &map, &mut HashMap::new());
        Ok(Expr {
            node,
            space: target.clone(),
        })
    }

    pub(crate) fn node(&self) -> &Arc<Node> {
        &self.node
    }

    pub(crate) fn from_node(node: Arc<Node>, space: Arc<VariableSpace>) -> Expr {
        Expr { node, space }
    }
}

fn eval_unary(op: UnaryOp, x: f64) -> f64 {
    use crate::math;
    match op {
        UnaryOp::Neg => -x,
        UnaryOp::Sin => math::sin(x),
        UnaryOp::Cos => math::cos(x),
        UnaryOp::Tan => math::tan(x),
        UnaryOp::Exp => math::exp(x),
        UnaryOp::Ln => math::ln(x),
        UnaryOp::Sqrt => math::sqrt(x),
        UnaryOp::Abs => math::abs(x),
    }
}

fn print_node(node: &Arc<Node>, space: &Arc<VariableSpace>) -> String {
    let e = Expr {
        node: node.clone(),
        space: space.clone(),
    };
    format!("{e}")
}

fn eval_node(
    node: &Arc<Node>,
    space: &Arc<VariableSpace>,
    env: &[f64],
    cache: &mut HashMap<usize, f64>,
) -> Result<f64, EvalError> {
    if let Some(&hit) = cache.get(&key(node)) {
        return Ok(hit);
    }
    let value = match &**node {
        Node::Const(c) => *c,
        Node::Var(v) => env[v.0],
        Node::Unary(op, a) => {
            let x = eval_node(a, space, env, cache)?;
            match op {
                UnaryOp::Ln if x <= 0.0 => {
                    return Err(EvalError {
                        kind: EvalErrorKind::LogNonPositive,
                        subexpr: print_node(node, space),
                    })
                }
                UnaryOp::Sqrt if x < 0.0 => {
                    return Err(EvalError {
                        kind: EvalErrorKind::SqrtNegative,
                        subexpr: print_node(node, space),
                    })
                }
                _ => {}
            }
            eval_unary(*op, x)
        }
        Node::Binary(op, a, b) => {
            let x = eval_node(a, space, env, cache)?;
            let y = eval_node(b, space, env, cache)?;
            match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError {
                            kind: EvalErrorKind::DivisionByZero,
                            subexpr: print_node(node, space),
                        });
                    }
                    x / y
                }
            }
        }
        Node::PowI(a, n) => {
            let x = eval_node(a, space, env, cache)?;
            if x == 0.0 && *n < 0 {
                return Err(EvalError {
                    kind: EvalErrorKind::DivisionByZero,
                    subexpr: print_node(node, space),
                });
            }
            crate::math::powi(x, *n)
        }
    };
    cache.insert(key(node), value);
    Ok(value)
}

fn diff_node(
    node: &Arc<Node>,
    space: &Arc<VariableSpace>,
    var: VarId,
    cache: &mut HashMap<usize, Arc<Node>>,
) -> Arc<Node> {
    if let Some(hit) = cache.get(&key(node)) {
        return hit.clone();
    }
    let ex = |n: &Arc<Node>| Expr {
        node: n.clone(),
        space: space.clone(),
    };
    let result = match &**node {
        Node::Const(_) => Expr::zero(space),
        Node::Var(v) => {
            if *v == var {
                Expr::constant(space, 1.0)
            } else {
                Expr::zero(space)
            }
        }
        Node::Unary(op, a) => {
            let da = ex(&diff_node(a, space, var, cache));
            let a = ex(a);
            match op {
                UnaryOp::Neg => da.neg(),
                UnaryOp::Sin => a.cos().mul(&da),
                UnaryOp::Cos => a.sin().neg().mul(&da),
                // d tan = da / cos^2
                UnaryOp::Tan => da.div(&a.cos().powi(2)),
                UnaryOp::Exp => a.exp().mul(&da),
                UnaryOp::Ln => da.div(&a),
                UnaryOp::Sqrt => da.div(&a.sqrt().scale(2.0)),
                // d|x| = x/|x| dx, undefined at 0 (domain error on eval)
                UnaryOp::Abs => a.div(&a.abs()).mul(&da),
            }
        }
        Node::Binary(op, a, b) => {
            let da = ex(&diff_node(a, space, var, cache));
            let db = ex(&diff_node(b, space, var, cache));
            let a = ex(a);
            let b = ex(b);
            match op {
                BinaryOp::Add => da.add(&db),
                BinaryOp::Sub => da.sub(&db),
                BinaryOp::Mul => da.mul(&b).add(&a.mul(&db)),
                BinaryOp::Div => da.mul(&b).sub(&a.mul(&db)).div(&b.powi(2)),
            }
        }
        Node::PowI(a, n) => {
            let da = ex(&diff_node(a, space, var, cache));
            let a = ex(a);
            a.powi(n - 1).scale(*n as f64).mul(&da)
        }
    };
    cache.insert(key(node), result.node.clone());
    result.node
}

fn subst_node(
    node: &Arc<Node>,
    space: &Arc<VariableSpace>,
    subs: &HashMap<VarId, Expr>,
    cache: &mut HashMap<usize, Arc<Node>>,
) -> Arc<Node> {
    if let Some(hit) = cache.get(&key(node)) {
        return hit.clone();
    }
    let ex = |n: Arc<Node>| Expr {
        node: n,
        space: space.clone(),
    };
    let result: Expr = match &**node {
        Node::Const(c) => Expr::constant(space, *c),
        Node::Var(v) => match subs.get(v) {
            Some(e) => e.clone(),
            None => Expr::var(space, *v),
        },
        Node::Unary(op, a) => {
            let a = ex(subst_node(a, space, subs, cache));
            match op {
                UnaryOp::Neg => a.neg(),
                UnaryOp::Sin => a.sin(),
                UnaryOp::Cos => a.cos(),
                UnaryOp::Tan => a.tan(),
                UnaryOp::Exp => a.exp(),
                UnaryOp::Ln => a.ln(),
                UnaryOp::Sqrt => a.sqrt(),
                UnaryOp::Abs => a.abs(),
            }
        }
        Node::Binary(op, a, b) => {
            let a = ex(subst_node(a, space, subs, cache));
            let b = ex(subst_node(b, space, subs, cache));
            match op {
                BinaryOp::Add => a.add(&b),
                BinaryOp::Sub => a.sub(&b),
                BinaryOp::Mul => a.mul(&b),
                BinaryOp::Div => a.div(&b),
            }
        }
        Node::PowI(a, n) => ex(subst_node(a, space, subs, cache)).powi(*n),
    };
    cache.insert(key(node), result.node.clone());
    result.node
}

// ---- printing -----------------------------------------------------------

// Precedence levels used by the printer: higher binds tighter.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn node_prec(node: &Node) -> u8 {
    match node {
        Node::Const(c) if *c < 0.0 => PREC_NEG,
        Node::Const(_) | Node::Var(_) => PREC_ATOM,
        Node::Unary(UnaryOp::Neg, _) => PREC_NEG,
        Node::Unary(..) => PREC_ATOM,
        Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_ADD,
        Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PREC_MUL,
        Node::PowI(..) => PREC_POW,
    }
}

fn fmt_node(
    node: &Node,
    space: &VariableSpace,
    min_prec: u8,
    f: &mut fmt::Formatter<'_>,
) -> fmt::Result {
    let prec = node_prec(node);
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    match node {
        // {:?} prints the shortest representation that round-trips, so
        // print -> parse is exact.
        Node::Const(c) => write!(f, "{c:?}")?,
        Node::Var(v) => write!(f, "{}", space.name(*v))?,
        Node::Unary(UnaryOp::Neg, a) => {
            write!(f, "-")?;
            fmt_node(a, space, PREC_NEG + 1, f)?;
        }
        Node::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            fmt_node(a, space, 0, f)?;
            write!(f, ")")?;
        }
        Node::Binary(op, a, b) => {
            let (sym, p) = match op {
                BinaryOp::Add => ("+", PREC_ADD),
                BinaryOp::Sub => ("-", PREC_ADD),
                BinaryOp::Mul => ("*", PREC_MUL),
                BinaryOp::Div => ("/", PREC_MUL),
            };
            fmt_node(a, space, p, f)?;
            write!(f, "{sym}")?;
            // Right operand needs one level more for the non-associative
            // operators (a-(b-c), a/(b/c)).
            let rp = match op {
                BinaryOp::Add | BinaryOp::Mul => p,
                BinaryOp::Sub | BinaryOp::Div => p + 1,
            };
            fmt_node(b, space, rp, f)?;
        }
        Node::PowI(a, n) => {
            fmt_node(a, space, PREC_ATOM, f)?;
            write!(f, "^{n}")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(&self.node, &self.space, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn space2() -> Arc<VariableSpace> {
        VariableSpace::new(vec!["x1", "x2"], vec![], vec!["p1"]).unwrap()
    }

    #[test]
    fn parse_and_eval_examples() {
        let sp = VariableSpace::new(vec!["x1"], Vec::<&str>::new(), vec![]).unwrap();
        let e = Expr::parse("x1 + 0", &sp).unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), 3.0);

        let sp = VariableSpace::new(vec!["x1"], Vec::<&str>::new(), vec!["p1"]).unwrap();
        let e = Expr::parse("sin(x1)*p1", &sp).unwrap();
        assert_eq!(e.eval(&[0.0, 5.0]).unwrap(), 0.0);

        let sp = space2();
        let e = Expr::parse("x1^2/(1+x2)", &sp).unwrap();
        // hand arithmetic oracle: 4/2
        assert_eq!(e.eval(&[2.0, 1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn eval_examples() {
        let sp = space2();
        assert_eq!(Expr::constant(&sp, 7.0).eval(&[0.0; 3]).unwrap(), 7.0);

        let e = Expr::parse("x1/x2", &sp).unwrap();
        let err = e.eval(&[1.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
        assert!(err.subexpr.contains("x1/x2"));

        let e = Expr::parse("ln(exp(x1))", &sp).unwrap();
        assert!((e.eval(&[3.5, 0.0, 0.0]).unwrap() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let sp = space2();
        let e = Expr::parse("ln(x1)", &sp).unwrap();
        assert_eq!(
            e.eval(&[-1.0, 0.0, 0.0]).unwrap_err().kind,
            EvalErrorKind::LogNonPositive
        );
        let e = Expr::parse("sqrt(x1)", &sp).unwrap();
        assert_eq!(
            e.eval(&[-1.0, 0.0, 0.0]).unwrap_err().kind,
            EvalErrorKind::SqrtNegative
        );
        let e = Expr::parse("x1^-2", &sp).unwrap();
        assert_eq!(
            e.eval(&[0.0, 0.0, 0.0]).unwrap_err().kind,
            EvalErrorKind::DivisionByZero
        );
    }

    #[test]
    fn diff_examples() {
        let sp = space2();
        let x1 = sp.lookup("x1").unwrap();

        // power rule
        let e = Expr::parse("x1^2", &sp).unwrap();
        let d = e.diff(x1);
        assert_eq!(d.eval(&[3.0, 0.0, 0.0]).unwrap(), 6.0);

        // cos(0) = 1
        let e = Expr::parse("sin(x1)", &sp).unwrap();
        assert_eq!(e.diff(x1).eval(&[0.0, 0.0, 0.0]).unwrap(), 1.0);

        // product rule by hand: d/dx1 (x1*x2 + exp(x1)) at (1,2) = 2 + e
        let e = Expr::parse("x1*x2 + exp(x1)", &sp).unwrap();
        let v = e.diff(x1).eval(&[1.0, 2.0, 0.0]).unwrap();
        assert!((v - (2.0 + core::f64::consts::E)).abs() < 1e-12);
    }

    #[test]
    fn diff_constant_is_zero() {
        let sp = space2();
        let e = Expr::parse("3.5*2 + 1", &sp).unwrap();
        assert!(e.diff(sp.lookup("x1").unwrap()).is_zero());
        // and a folded non-trivial constant expression
        let e = Expr::parse("sin(1.0)*p1 - sin(1.0)*p1", &sp).unwrap();
        assert!(e.diff(sp.lookup("p1").unwrap()).is_zero());
    }

    #[test]
    fn print_parse_round_trip() {
        let sp = space2();
        let texts = [
            "x1^2/(1+x2)",
            "-x1^2 + sin(x1*x2) - 0.25*exp(p1)",
            "abs(x1 - 2*x2)^3",
            "(x1 - x2)/(x1 + 2)",
            "x1 - (x2 - p1)",
            "sqrt(x1^2 + 1e-3)",
        ];
        for t in texts {
            let e = Expr::parse(t, &sp).unwrap();
            let printed = format!("{e}");
            let re = Expr::parse(&printed, &sp).unwrap();
            for k in 0..20 {
                let env = [
                    0.3 + 0.17 * k as f64,
                    -0.8 + 0.29 * k as f64,
                    0.05 * k as f64,
                ];
                let a = e.eval(&env);
                let b = re.eval(&env);
                match (a, b) {
                    (Ok(a), Ok(b)) => assert!(
                        (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                        "{t}: {a} vs {b}"
                    ),
                    (Err(_), Err(_)) => {}
                    other => panic!("{t}: mismatch {other:?}"),
                }
            }
        }
    }

    #[test]
    fn subst_and_remap() {
        let sp = space2();
        let p1 = sp.lookup("p1").unwrap();
        let e = Expr::parse("p1*x1 + sin(p1)", &sp).unwrap();
        let fixed = e.subst_consts(&[(p1, 2.0)]);
        assert!(!fixed.depends_on(p1));
        let v = fixed.eval(&[3.0, 0.0, 999.0]).unwrap();
        assert!((v - (6.0 + crate::math::sin(2.0))).abs() < 1e-15);

        let big = VariableSpace::new(vec!["extra", "x1", "x2"], vec![], vec!["p1"]).unwrap();
        let moved = e.remap(&big).unwrap();
        let v2 = moved.eval(&[0.0, 3.0, 0.0, 2.0]).unwrap();
        assert!((v2 - v).abs() < 1e-15);
    }

    #[test]
    fn variable_space_partitions() {
        let sp = VariableSpace::new(vec!["a", "b"], vec!["u"], vec!["p", "q"]).unwrap();
        assert_eq!(sp.n_states(), 2);
        assert_eq!(sp.n_inputs(), 1);
        assert_eq!(sp.n_params(), 2);
        assert_eq!(sp.kind(sp.lookup("u").unwrap()), VarKind::Input);
        assert_eq!(sp.kind(sp.lookup("q").unwrap()), VarKind::Param);
        assert_eq!(sp.input(0), sp.lookup("u").unwrap());
        assert!(VariableSpace::new(vec!["a", "a"], Vec::<&str>::new(), vec![]).is_err());
    }

    #[test]
    fn constant_folding_does_not_hide_domain_errors() {
        let sp = space2();
        // ln of a negative constant must not fold to NaN
        let e = Expr::parse("ln(0-1)", &sp).unwrap();
        assert!(e.eval(&[0.0; 3]).is_err());
    }
}
