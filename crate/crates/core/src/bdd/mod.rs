// SPDX-License-Identifier: Apache-2.0
//! Reduced ordered binary decision diagrams over a fixed variable order.
//!
//! A [`Bdd`] owns its node store and unique table, so equal functions built in
//! the same manager share the same [`NodeId`]. Managers are not shared across
//! threads; each synthesis worker creates its own.

mod expr;
mod sop;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

pub use expr::{BoolExpr, ParseExprError};
pub use sop::{minimize_truth_table, Cube, Sop, EXACT_VAR_LIMIT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BddError {
    #[error("variable `{0}` is not in the variable order")]
    UnknownVariable(String),
    #[error("variable orders differ")]
    OrderMismatch,
}

/// Handle to a function inside one [`Bdd`] manager.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub const FALSE: NodeId = NodeId(0);
    pub const TRUE: NodeId = NodeId(1);

    pub fn is_const(self) -> bool {
        self.0 < 2
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const TERMINAL_VAR: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Node {
    var: u32,
    lo: NodeId,
    hi: NodeId,
}

/// Ordered list of variable names; position 0 is the top of the diagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarOrder {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl VarOrder {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        VarOrder { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, var: usize) -> &str {
        &self.names[var]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone)]
pub struct Bdd {
    order: Arc<VarOrder>,
    nodes: Vec<Node>,
    unique: HashMap<Node, NodeId>,
    ite_cache: HashMap<(NodeId, NodeId, NodeId), NodeId>,
}

impl Bdd {
    pub fn new(order: VarOrder) -> Self {
        Self::with_order(Arc::new(order))
    }

    pub fn with_order(order: Arc<VarOrder>) -> Self {
        let terminal = |v| Node {
            var: TERMINAL_VAR,
            lo: NodeId(v),
            hi: NodeId(v),
        };
        Bdd {
            order,
            nodes: vec![terminal(0), terminal(1)],
            unique: HashMap::new(),
            ite_cache: HashMap::new(),
        }
    }

    pub fn order(&self) -> &VarOrder {
        &self.order
    }

    pub fn shared_order(&self) -> Arc<VarOrder> {
        Arc::clone(&self.order)
    }

    pub fn constant(&self, value: bool) -> NodeId {
        if value {
            NodeId::TRUE
        } else {
            NodeId::FALSE
        }
    }

    fn mk(&mut self, var: u32, lo: NodeId, hi: NodeId) -> NodeId {
        if lo == hi {
            return lo;
        }
        let node = Node { var, lo, hi };
        if let Some(&id) = self.unique.get(&node) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        self.unique.insert(node, id);
        id
    }

    /// The projection function of variable `var` (position in the order).
    pub fn var(&mut self, var: usize) -> NodeId {
        assert!(var < self.order.len(), "variable index out of range");
        self.mk(var as u32, NodeId::FALSE, NodeId::TRUE)
    }

    pub fn named_var(&mut self, name: &str) -> Result<NodeId, BddError> {
        let v = self
            .order
            .position(name)
            .ok_or_else(|| BddError::UnknownVariable(name.into()))?;
        Ok(self.var(v))
    }

    /// Top variable of `f`, or `None` for terminals.
    pub fn top_var(&self, f: NodeId) -> Option<usize> {
        let v = self.nodes[f.index()].var;
        (v != TERMINAL_VAR).then_some(v as usize)
    }

    pub fn low(&self, f: NodeId) -> NodeId {
        self.nodes[f.index()].lo
    }

    pub fn high(&self, f: NodeId) -> NodeId {
        self.nodes[f.index()].hi
    }

    fn cofactors(&self, f: NodeId, var: u32) -> (NodeId, NodeId) {
        let n = self.nodes[f.index()];
        if n.var == var {
            (n.lo, n.hi)
        } else {
            (f, f)
        }
    }

    /// If-then-else, the universal connective.
    pub fn ite(&mut self, i: NodeId, t: NodeId, e: NodeId) -> NodeId {
        if i == NodeId::TRUE || t == e {
            return t;
        }
        if i == NodeId::FALSE {
            return e;
        }
        if t == NodeId::TRUE && e == NodeId::FALSE {
            return i;
        }
        if let Some(&r) = self.ite_cache.get(&(i, t, e)) {
            return r;
        }
        let top = [i, t, e]
            .iter()
            .map(|&x| self.nodes[x.index()].var)
            .min()
            .expect("non-empty");
        let (i0, i1) = self.cofactors(i, top);
        let (t0, t1) = self.cofactors(t, top);
        let (e0, e1) = self.cofactors(e, top);
        let lo = self.ite(i0, t0, e0);
        let hi = self.ite(i1, t1, e1);
        let r = self.mk(top, lo, hi);
        self.ite_cache.insert((i, t, e), r);
        r
    }

    pub fn not(&mut self, f: NodeId) -> NodeId {
        self.ite(f, NodeId::FALSE, NodeId::TRUE)
    }

    pub fn and(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ite(a, b, NodeId::FALSE)
    }

    pub fn or(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ite(a, NodeId::TRUE, b)
    }

    pub fn xor(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.not(b);
        self.ite(a, nb, b)
    }

    /// `a -> b` holds for every assignment.
    pub fn implies(&mut self, a: NodeId, b: NodeId) -> bool {
        let nb = self.not(b);
        self.and(a, nb) == NodeId::FALSE
    }

    /// Shannon cofactor with `var` fixed to `value`.
    pub fn restrict(&mut self, f: NodeId, var: usize, value: bool) -> NodeId {
        let mut memo = HashMap::new();
        self.restrict_rec(f, var as u32, value, &mut memo)
    }

    fn restrict_rec(&mut self, f: NodeId, var: u32, value: bool, memo: &mut HashMap<NodeId, NodeId>) -> NodeId {
        let n = self.nodes[f.index()];
        if n.var == TERMINAL_VAR || n.var > var {
            return f;
        }
        if n.var == var {
            return if value { n.hi } else { n.lo };
        }
        if let Some(&r) = memo.get(&f) {
            return r;
        }
        let lo = self.restrict_rec(n.lo, var, value, memo);
        let hi = self.restrict_rec(n.hi, var, value, memo);
        let r = self.mk(n.var, lo, hi);
        memo.insert(f, r);
        r
    }

    /// Conjunction of literals `(var, polarity)`.
    pub fn cube(&mut self, lits: &[(usize, bool)]) -> NodeId {
        let mut acc = NodeId::TRUE;
        for &(v, pol) in lits {
            let x = self.var(v);
            let lit = if pol { x } else { self.not(x) };
            acc = self.and(acc, lit);
        }
        acc
    }

    pub fn from_sop(&mut self, sop: &Sop) -> NodeId {
        let mut acc = NodeId::FALSE;
        for c in &sop.cubes {
            let cube = self.cube(&c.lits);
            acc = self.or(acc, cube);
        }
        acc
    }

    /// Evaluates `f` with `assignment[var]` giving each variable's value.
    pub fn eval(&self, f: NodeId, assignment: &[bool]) -> bool {
        let mut cur = f;
        loop {
            let n = self.nodes[cur.index()];
            if n.var == TERMINAL_VAR {
                return cur == NodeId::TRUE;
            }
            cur = if assignment[n.var as usize] { n.hi } else { n.lo };
        }
    }

    /// Variables `f` depends on, in order.
    pub fn support(&self, f: NodeId) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut vars = BTreeSet::new();
        let mut stack = vec![f];
        while let Some(x) = stack.pop() {
            if x.is_const() || !seen.insert(x) {
                continue;
            }
            let n = self.nodes[x.index()];
            vars.insert(n.var as usize);
            stack.push(n.lo);
            stack.push(n.hi);
        }
        vars
    }

    /// Nodes reachable from `f`, terminals included.
    pub fn node_count(&self, f: NodeId) -> usize {
        let mut seen = BTreeSet::new();
        let mut stack = vec![f];
        while let Some(x) = stack.pop() {
            if !seen.insert(x) {
                continue;
            }
            if !x.is_const() {
                let n = self.nodes[x.index()];
                stack.push(n.lo);
                stack.push(n.hi);
            }
        }
        seen.len()
    }

    /// Interns an expression; every variable must be in the order.
    pub fn build(&mut self, expr: &BoolExpr) -> Result<NodeId, BddError> {
        Ok(match expr {
            BoolExpr::Const(b) => self.constant(*b),
            BoolExpr::Var(name) => self.named_var(name)?,
            BoolExpr::Not(e) => {
                let x = self.build(e)?;
                self.not(x)
            }
            BoolExpr::And(es) => {
                let mut acc = NodeId::TRUE;
                for e in es {
                    let x = self.build(e)?;
                    acc = self.and(acc, x);
                }
                acc
            }
            BoolExpr::Or(es) => {
                let mut acc = NodeId::FALSE;
                for e in es {
                    let x = self.build(e)?;
                    acc = self.or(acc, x);
                }
                acc
            }
            BoolExpr::Xor(a, b) => {
                let x = self.build(a)?;
                let y = self.build(b)?;
                self.xor(x, y)
            }
        })
    }

    /// Parses `text` and interns it.
    pub fn parse(&mut self, text: &str) -> Result<NodeId, Box<dyn std::error::Error + Send + Sync>> {
        let e: BoolExpr = text.parse()?;
        Ok(self.build(&e)?)
    }

    /// Semantic equality. Within one manager this is node identity.
    pub fn equivalent(&self, a: NodeId, b: NodeId) -> bool {
        a == b
    }

    /// Semantic equality of functions held by two managers with the same order.
    pub fn equivalent_across(&self, a: NodeId, other: &Bdd, b: NodeId) -> Result<bool, BddError> {
        if self.order.names != other.order.names {
            return Err(BddError::OrderMismatch);
        }
        let mut memo = HashMap::new();
        Ok(self.same_shape(a, other, b, &mut memo))
    }

    fn same_shape(&self, a: NodeId, other: &Bdd, b: NodeId, memo: &mut HashMap<(NodeId, NodeId), bool>) -> bool {
        if a.is_const() || b.is_const() {
            return a == b;
        }
        if let Some(&r) = memo.get(&(a, b)) {
            return r;
        }
        let (x, y) = (self.nodes[a.index()], other.nodes[b.index()]);
        let r = x.var == y.var && self.same_shape(x.lo, other, y.lo, memo) && self.same_shape(x.hi, other, y.hi, memo);
        memo.insert((a, b), r);
        r
    }

    /// Copies `f` from another manager with an identical variable order.
    pub fn import(&mut self, other: &Bdd, f: NodeId) -> Result<NodeId, BddError> {
        if self.order.names != other.order.names {
            return Err(BddError::OrderMismatch);
        }
        let mut memo = HashMap::new();
        Ok(self.import_rec(other, f, &mut memo))
    }

    fn import_rec(&mut self, other: &Bdd, f: NodeId, memo: &mut HashMap<NodeId, NodeId>) -> NodeId {
        if f.is_const() {
            return f;
        }
        if let Some(&r) = memo.get(&f) {
            return r;
        }
        let n = other.nodes[f.index()];
        let lo = self.import_rec(other, n.lo, memo);
        let hi = self.import_rec(other, n.hi, memo);
        let r = self.mk(n.var, lo, hi);
        memo.insert(f, r);
        r
    }

    /// Minimum sum-of-products cover of `f` (exact up to
    /// [`EXACT_VAR_LIMIT`] support variables, greedy beyond).
    pub fn to_min_sop(&mut self, f: NodeId) -> Sop {
        sop::bdd_to_min_sop(self, f)
    }

    /// Root-to-TRUE paths as disjoint cubes.
    pub fn paths(&self, f: NodeId) -> Vec<Cube> {
        let mut out = Vec::new();
        let mut lits = Vec::new();
        self.paths_rec(f, &mut lits, &mut out);
        out
    }

    fn paths_rec(&self, f: NodeId, lits: &mut Vec<(usize, bool)>, out: &mut Vec<Cube>) {
        if f == NodeId::FALSE {
            return;
        }
        if f == NodeId::TRUE {
            out.push(Cube::new(lits.clone()));
            return;
        }
        let n = self.nodes[f.index()];
        lits.push((n.var as usize, false));
        self.paths_rec(n.lo, lits, out);
        lits.pop();
        lits.push((n.var as usize, true));
        self.paths_rec(n.hi, lits, out);
        lits.pop();
    }

    /// Graphviz rendering of `f` for debugging.
    pub fn to_dot(&self, f: NodeId) -> String {
        let mut out =
            String::from("digraph bdd {\n  node0 [shape=box,label=\"0\"];\n  node1 [shape=box,label=\"1\"];\n");
        let mut seen = BTreeSet::new();
        let mut stack = vec![f];
        while let Some(x) = stack.pop() {
            if x.is_const() || !seen.insert(x) {
                continue;
            }
            let n = self.nodes[x.index()];
            let _ = writeln!(
                out,
                "  node{} [label=\"{}\"];\n  node{} -> node{} [style=dashed];\n  node{} -> node{};",
                x.0,
                self.order.name(n.var as usize),
                x.0,
                n.lo.0,
                x.0,
                n.hi.0
            );
            stack.push(n.lo);
            stack.push(n.hi);
        }
        out.push_str("}\n");
        out
    }

    /// Checks the reduced/ordered invariants of every node reachable from `f`.
    pub fn check_invariants(&self, f: NodeId) -> bool {
        let mut stack = vec![f];
        let mut seen = BTreeSet::new();
        let mut triples = BTreeSet::new();
        while let Some(x) = stack.pop() {
            if x.is_const() || !seen.insert(x) {
                continue;
            }
            let n = self.nodes[x.index()];
            if n.lo == n.hi || !triples.insert((n.var, n.lo, n.hi)) {
                return false;
            }
            for child in [n.lo, n.hi] {
                if self.nodes[child.index()].var <= n.var {
                    return false;
                }
                stack.push(child);
            }
        }
        true
    }

    /// Renders `f` as a minimum SOP expression string.
    pub fn format(&mut self, f: NodeId) -> String {
        let sop = self.to_min_sop(f);
        sop.to_expr(&self.order).to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mgr(names: &[&str]) -> Bdd {
        Bdd::new(VarOrder::new(names.iter().copied()))
    }

    #[test]
    fn or_has_forced_shape() {
        let mut b = mgr(&["Q0", "Din"]);
        let f = b.parse("Q0 + Din").unwrap();
        assert_eq!(b.node_count(f), 4); // Q0, Din and both terminals
        assert_eq!(b.top_var(f), Some(0));
        assert_eq!(b.high(f), NodeId::TRUE);
        let lo = b.low(f);
        assert_eq!(b.top_var(lo), Some(1));
        assert!(b.check_invariants(f));
    }

    #[test]
    fn absorption_is_canonical() {
        let mut b = mgr(&["Q0", "Rst"]);
        let f = b.parse("Q0 & !Rst + Q0 & Rst").unwrap();
        let g = b.parse("Q0").unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn contradiction_reduces_to_terminal() {
        let mut b = mgr(&["x"]);
        let f = b.parse("x & !x").unwrap();
        assert_eq!(f, NodeId::FALSE);
        assert_eq!(b.node_count(f), 1);
    }

    #[test]
    fn xor_expansion_and_negation() {
        let mut b = mgr(&["Q", "F"]);
        let x = b.parse("Q ^ F").unwrap();
        let y = b.parse("Q & !F + !Q & F").unwrap();
        assert!(b.equivalent(x, y));
        let q = b.parse("Q").unwrap();
        let nq = b.parse("!Q").unwrap();
        assert!(!b.equivalent(q, nq));
    }

    #[test]
    fn unknown_variable() {
        let mut b = mgr(&["a"]);
        let err = b.build(&"a & zz".parse().unwrap()).unwrap_err();
        assert_eq!(err, BddError::UnknownVariable("zz".into()));
    }

    #[test]
    fn cross_manager_equivalence() {
        let mut a = mgr(&["Q1", "Q0", "En"]);
        let mut b = mgr(&["Q1", "Q0", "En"]);
        let f = a.parse("Q1 & !En + Q0 & En").unwrap();
        let _ = b.parse("Q0").unwrap();
        let g = b.parse("En & Q0 | !En & Q1").unwrap();
        assert!(a.equivalent_across(f, &b, g).unwrap());
        let c = mgr(&["Q0", "Q1", "En"]);
        assert_eq!(a.equivalent_across(f, &c, NodeId::TRUE), Err(BddError::OrderMismatch));
        let h = a.import(&b, g).unwrap();
        assert_eq!(h, f);
    }

    #[test]
    fn dot_output_mentions_variables() {
        let mut b = mgr(&["a", "b"]);
        let f = b.parse("a & b").unwrap();
        let dot = b.to_dot(f);
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("label=\"a\""));
    }

    fn expr_strategy(vars: usize) -> impl Strategy<Value = BoolExpr> {
        let leaf = prop_oneof![
            (0..vars).prop_map(|v| BoolExpr::Var(format!("v{v}"))),
            any::<bool>().prop_map(BoolExpr::Const),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| BoolExpr::Not(Box::new(e))),
                proptest::collection::vec(inner.clone(), 2..3).prop_map(BoolExpr::And),
                proptest::collection::vec(inner.clone(), 2..3).prop_map(BoolExpr::Or),
                (inner.clone(), inner).prop_map(|(a, b)| BoolExpr::Xor(Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn bdd_matches_expression(e in expr_strategy(4)) {
            let mut b = Bdd::new(VarOrder::new((0..4).map(|v| format!("v{v}"))));
            let f = b.build(&e).unwrap();
            prop_assert!(b.check_invariants(f));
            for m in 0..16u32 {
                let asg: Vec<bool> = (0..4).map(|v| m >> v & 1 == 1).collect();
                let env = |name: &str| asg[name[1..].parse::<usize>().unwrap()];
                prop_assert_eq!(b.eval(f, &asg), e.eval(&env));
            }
        }

        #[test]
        fn restrict_matches_eval(e in expr_strategy(3), var in 0usize..3, val: bool) {
            let mut b = Bdd::new(VarOrder::new((0..3).map(|v| format!("v{v}"))));
            let f = b.build(&e).unwrap();
            let r = b.restrict(f, var, val);
            prop_assert!(!b.support(r).contains(&var));
            for m in 0..8u32 {
                let mut asg: Vec<bool> = (0..3).map(|v| m >> v & 1 == 1).collect();
                let got = b.eval(r, &asg);
                asg[var] = val;
                prop_assert_eq!(got, b.eval(f, &asg));
            }
        }
    }
}
