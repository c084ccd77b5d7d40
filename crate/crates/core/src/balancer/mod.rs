// SPDX-License-Identifier: Apache-2.0
//! Path balancing for clocked combinational RSFQ logic.
//!
//! Every logic gate is clocked, so all inputs of a gate must arrive through
//! the same number of clocked stages. Shorter paths get D flip-flop chains.
//!
//! Input format (one statement per line, `#` comments):
//!
//! ```text
//! .inputs a b
//! .outputs y
//! .gate g1 and a b
//! .gate y not g1
//! .end
//! ```
//!
//! A gate's output net carries the gate's name. Operators: `and`, `or`,
//! `xor` (two inputs) and `not` (one input).

mod pipeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};

use thiserror::Error;

use crate::mapping::{Instance, Netlist, Pdk};

pub use pipeline::Pipeline;

/// Clock net added to balanced netlists.
pub const CLOCK_NET: &str = "clk";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BalanceError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("`{0}` is defined twice")]
    Duplicate(String),
    #[error("`{0}` is not defined")]
    Undefined(String),
    #[error("combinational loop through `{0}`")]
    Cycle(String),
    #[error("PDK lacks cell `{0}`")]
    MissingCell(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateOp {
    And,
    Or,
    Xor,
    Not,
}

impl GateOp {
    pub fn arity(self) -> usize {
        match self {
            GateOp::Not => 1,
            _ => 2,
        }
    }

    /// Cell implementing the operator.
    pub fn cell(self) -> &'static str {
        match self {
            GateOp::And => "AND2",
            GateOp::Or => "OR2",
            GateOp::Xor => "XOR2",
            GateOp::Not => "NOT",
        }
    }

    pub fn eval(self, args: &[bool]) -> bool {
        match self {
            GateOp::And => args[0] && args[1],
            GateOp::Or => args[0] || args[1],
            GateOp::Xor => args[0] ^ args[1],
            GateOp::Not => !args[0],
        }
    }

    fn parse(s: &str) -> Option<GateOp> {
        match s.to_ascii_lowercase().as_str() {
            "and" | "and2" => Some(GateOp::And),
            "or" | "or2" => Some(GateOp::Or),
            "xor" | "xor2" => Some(GateOp::Xor),
            "not" | "inv" => Some(GateOp::Not),
            _ => None,
        }
    }
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateOp::And => "and",
            GateOp::Or => "or",
            GateOp::Xor => "xor",
            GateOp::Not => "not",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub name: String,
    pub op: GateOp,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CombNetlist {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub gates: Vec<Gate>,
}

impl CombNetlist {
    pub fn parse(text: &str) -> Result<CombNetlist, BalanceError> {
        let mut n = CombNetlist::default();
        let err = |line: usize, message: &str| BalanceError::Syntax {
            line,
            message: message.to_string(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let head = words.next().unwrap_or_default();
            let rest: Vec<String> = words.map(String::from).collect();
            match head {
                ".inputs" => n.inputs.extend(rest),
                ".outputs" => n.outputs.extend(rest),
                ".gate" => {
                    let [name, op, args @ ..] = &rest[..] else {
                        return Err(err(i + 1, "expected `.gate <name> <op> <inputs>`"));
                    };
                    let op = GateOp::parse(op).ok_or_else(|| err(i + 1, "unknown operator"))?;
                    if args.len() != op.arity() {
                        return Err(err(i + 1, "wrong number of gate inputs"));
                    }
                    n.gates.push(Gate {
                        name: name.clone(),
                        op,
                        inputs: args.to_vec(),
                    });
                }
                ".end" => break,
                _ => return Err(err(i + 1, "unknown directive")),
            }
        }
        n.check()?;
        Ok(n)
    }

    fn check(&self) -> Result<(), BalanceError> {
        let mut defined = BTreeSet::new();
        for name in self.inputs.iter().chain(self.gates.iter().map(|g| &g.name)) {
            if !defined.insert(name.as_str()) {
                return Err(BalanceError::Duplicate(name.clone()));
            }
        }
        for g in &self.gates {
            for a in &g.inputs {
                if !defined.contains(a.as_str()) {
                    return Err(BalanceError::Undefined(a.clone()));
                }
            }
        }
        let gates: BTreeSet<&str> = self.gates.iter().map(|g| g.name.as_str()).collect();
        for o in &self.outputs {
            if !gates.contains(o.as_str()) {
                return Err(BalanceError::Undefined(o.clone()));
            }
        }
        compute_depths(self).map(|_| ())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, ".inputs {}", self.inputs.join(" "));
        let _ = writeln!(s, ".outputs {}", self.outputs.join(" "));
        for g in &self.gates {
            let _ = writeln!(s, ".gate {} {} {}", g.name, g.op, g.inputs.join(" "));
        }
        s.push_str(".end\n");
        s
    }

    /// Output values for one input vector.
    pub fn eval(&self, inputs: &[bool]) -> Vec<bool> {
        let mut val: BTreeMap<&str, bool> = self
            .inputs
            .iter()
            .map(String::as_str)
            .zip(inputs.iter().copied())
            .collect();
        let depths = compute_depths(self).expect("checked at parse");
        let mut order: Vec<&Gate> = self.gates.iter().collect();
        order.sort_by_key(|g| depths[&g.name]);
        for g in order {
            let args: Vec<bool> = g.inputs.iter().map(|a| val[a.as_str()]).collect();
            val.insert(&g.name, g.op.eval(&args));
        }
        self.outputs.iter().map(|o| val[o.as_str()]).collect()
    }
}

/// Logic depth of every input (0) and gate (1 + deepest input).
pub fn compute_depths(n: &CombNetlist) -> Result<BTreeMap<String, usize>, BalanceError> {
    let gates: BTreeMap<&str, &Gate> = n.gates.iter().map(|g| (g.name.as_str(), g)).collect();
    let mut depth: BTreeMap<String, usize> = n.inputs.iter().map(|i| (i.clone(), 0)).collect();
    let mut open = BTreeSet::new();
    fn visit<'a>(
        name: &'a str,
        gates: &BTreeMap<&'a str, &'a Gate>,
        depth: &mut BTreeMap<String, usize>,
        open: &mut BTreeSet<&'a str>,
    ) -> Result<usize, BalanceError> {
        if let Some(&d) = depth.get(name) {
            return Ok(d);
        }
        let g = gates
            .get(name)
            .ok_or_else(|| BalanceError::Undefined(name.to_string()))?;
        if !open.insert(name) {
            return Err(BalanceError::Cycle(name.to_string()));
        }
        let mut d = 0;
        for a in &g.inputs {
            d = d.max(visit(a, gates, depth, open)?);
        }
        open.remove(name);
        depth.insert(name.to_string(), d + 1);
        Ok(d + 1)
    }
    for g in &n.gates {
        visit(&g.name, &gates, &mut depth, &mut open)?;
    }
    Ok(depth)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedNetlist {
    pub netlist: Netlist,
    pub dffs_inserted: usize,
    /// `(source, sink, flip-flops on that edge)` for every padded edge.
    pub padded_edges: Vec<(String, String, usize)>,
    /// Clocked stages from inputs to outputs.
    pub latency: usize,
}

fn pins(list: &[(&str, &str)]) -> BTreeMap<String, String> {
    list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

/// Inserts shared D flip-flop chains so that every gate input, and every
/// primary output, sits at the same clocked stage.
pub fn balance_paths(n: &CombNetlist, pdk: &Pdk) -> Result<BalancedNetlist, BalanceError> {
    for cell in ["DFF", "AND2", "OR2", "XOR2", "NOT"] {
        if pdk.cell(cell).is_none() {
            return Err(BalanceError::MissingCell(cell.to_string()));
        }
    }
    let depth = compute_depths(n)?;
    let latency = n.outputs.iter().map(|o| depth[o]).max().unwrap_or(0);
    let outputs: BTreeSet<&str> = n.outputs.iter().map(String::as_str).collect();

    // Longest chain each signal needs, and the padded edges.
    let mut chain: BTreeMap<&str, usize> = BTreeMap::new();
    let mut padded_edges = Vec::new();
    for g in &n.gates {
        for a in &g.inputs {
            let need = depth[&g.name] - depth[a] - 1;
            if need > 0 {
                padded_edges.push((a.clone(), g.name.clone(), need));
            }
            let e = chain.entry(a.as_str()).or_insert(0);
            *e = (*e).max(need);
        }
    }
    let pad = |s: &str| if outputs.contains(s) { latency - depth[s] } else { 0 };
    for o in &n.outputs {
        let e = chain.entry(o.as_str()).or_insert(0);
        *e = (*e).max(pad(o));
    }
    // Net carrying signal `s` delayed by `k` stages. A padded output keeps
    // its own name at the end of its chain.
    let net_at = |s: &str, k: usize| -> String {
        let p = pad(s);
        match (k, p) {
            (0, 0) => s.to_string(),
            (k, p) if p > 0 && k == p => s.to_string(),
            (0, _) => format!("{s}_d0"),
            (k, _) => format!("{s}_d{k}"),
        }
    };

    let mut out = Netlist::new("balanced");
    out.inputs = n.inputs.clone();
    out.inputs.push(CLOCK_NET.to_string());
    out.outputs = n.outputs.clone();
    let mut nets = BTreeSet::new();
    let mut declare = |net: String, out: &mut Netlist| {
        if !n.inputs.contains(&net) && !outputs.contains(net.as_str()) && nets.insert(net.clone()) {
            out.nets.push(net);
        }
    };
    for g in &n.gates {
        declare(net_at(&g.name, 0), &mut out);
        let q = net_at(&g.name, 0);
        let mut p: Vec<(String, String)> = vec![("clk".into(), CLOCK_NET.into()), ("q".into(), q)];
        for (pin, a) in ["a", "b"].iter().zip(&g.inputs) {
            let need = depth[&g.name] - depth[a] - 1;
            p.push((pin.to_string(), net_at(a, need)));
        }
        out.instances.push(Instance {
            name: format!("g_{}", g.name),
            cell: g.op.cell().to_string(),
            pins: p.into_iter().collect(),
        });
    }
    let mut dffs = 0;
    for (s, &len) in &chain {
        for k in 1..=len {
            let (from, to) = (net_at(s, k - 1), net_at(s, k));
            declare(to.clone(), &mut out);
            out.instances.push(Instance {
                name: format!("dff_{s}_{k}"),
                cell: "DFF".into(),
                pins: pins(&[("set", &from), ("clk", CLOCK_NET), ("q", &to)]),
            });
            dffs += 1;
        }
    }
    out.refresh_metadata();
    Ok(BalancedNetlist {
        netlist: out,
        dffs_inserted: dffs,
        padded_edges,
        latency,
    })
}

/// Replaces every net with more than `max_fanout` sinks by a binary tree of
/// splitters, one leaf per sink.
pub fn insert_splitters(n: &Netlist, pdk: &Pdk, max_fanout: usize) -> Result<Netlist, BalanceError> {
    let split = pdk
        .split_cell()
        .ok_or_else(|| BalanceError::MissingCell("SPLIT".into()))?;
    let (sa, s0, s1) = (
        split.ports[0].name.clone(),
        split.outputs[0].clone(),
        split.outputs[1].clone(),
    );
    let is_input_pin = |cell: &str, pin: &str| pdk.cell(cell).is_some_and(|c| c.port(pin).is_some());

    let mut sinks: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for (i, inst) in n.instances.iter().enumerate() {
        for (pin, net) in &inst.pins {
            if is_input_pin(&inst.cell, pin) {
                sinks.entry(net.clone()).or_default().push((i, pin.clone()));
            }
        }
    }
    let mut out = n.clone();
    let mut taken: BTreeSet<String> = n.all_nets().cloned().collect();
    for (net, list) in sinks {
        if list.len() <= max_fanout.max(1) {
            continue;
        }
        let mut counter = 0;
        // Explicit stack instead of recursion: (source net, sink slice range).
        let mut work = vec![(net.clone(), 0usize, list.len())];
        while let Some((source, lo, hi)) = work.pop() {
            if hi - lo == 1 {
                let (i, pin) = &list[lo];
                out.instances[*i].pins.insert(pin.clone(), source);
                continue;
            }
            let k = counter;
            counter += 1;
            let mut fresh = |suffix: &str| {
                let mut name = format!("{net}_s{k}{suffix}");
                while taken.contains(&name) {
                    name.push('_');
                }
                taken.insert(name.clone());
                out.nets.push(name.clone());
                name
            };
            let (left, right) = (fresh("a"), fresh("b"));
            out.instances.push(Instance {
                name: format!("sp_{net}_{k}"),
                cell: split.name.clone(),
                pins: [
                    (sa.clone(), source),
                    (s0.clone(), left.clone()),
                    (s1.clone(), right.clone()),
                ]
                .into_iter()
                .collect(),
            });
            let mid = lo + (hi - lo) / 2;
            work.push((right, mid, hi));
            work.push((left, lo, mid));
        }
    }
    out.refresh_metadata();
    Ok(out)
}

#[cfg(test)]
mod tests;
