// SPDX-License-Identifier: Apache-2.0
//! Cycle-level evaluator for balanced netlists: every clocked cell registers
//! its inputs each cycle, splitters pass values through within the cycle.

use std::collections::HashMap;

use super::{BalanceError, GateOp, CLOCK_NET};
use crate::mapping::Netlist;

#[derive(Debug, Clone)]
enum Kind {
    Gate(GateOp),
    Dff,
    Split,
}

#[derive(Debug, Clone)]
struct Element {
    kind: Kind,
    ins: Vec<usize>,
    outs: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    nets: usize,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    clocked: Vec<Element>,
    /// Splitters in dependency order.
    splits: Vec<Element>,
}

impl Pipeline {
    pub fn new(n: &Netlist) -> Result<Pipeline, BalanceError> {
        let index: HashMap<&str, usize> = n.all_nets().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let net = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| BalanceError::Undefined(s.to_string()))
        };
        let pin = |inst: &crate::mapping::Instance, p: &str| {
            inst.pins
                .get(p)
                .ok_or_else(|| BalanceError::Undefined(format!("{}.{p}", inst.name)))
                .and_then(|s| net(s))
        };
        let mut clocked = Vec::new();
        let mut splits = Vec::new();
        for inst in &n.instances {
            let (kind, ins, outs): (Kind, &[&str], &[&str]) = match inst.cell.as_str() {
                "AND2" => (Kind::Gate(GateOp::And), &["a", "b"], &["q"]),
                "OR2" => (Kind::Gate(GateOp::Or), &["a", "b"], &["q"]),
                "XOR2" => (Kind::Gate(GateOp::Xor), &["a", "b"], &["q"]),
                "NOT" => (Kind::Gate(GateOp::Not), &["a"], &["q"]),
                "DFF" => (Kind::Dff, &["set"], &["q"]),
                "SPLIT" => (Kind::Split, &["a"], &["q0", "q1"]),
                other => return Err(BalanceError::MissingCell(other.to_string())),
            };
            let e = Element {
                kind,
                ins: ins.iter().map(|p| pin(inst, p)).collect::<Result<_, _>>()?,
                outs: outs.iter().map(|p| pin(inst, p)).collect::<Result<_, _>>()?,
            };
            match e.kind {
                Kind::Split => splits.push(e),
                _ => clocked.push(e),
            }
        }
        // Order splitters so each runs after the one feeding it.
        let mut ordered = Vec::new();
        let mut ready: Vec<bool> = vec![true; index.len()];
        for s in &splits {
            for &o in &s.outs {
                ready[o] = false;
            }
        }
        while !splits.is_empty() {
            let before = splits.len();
            let (now, later): (Vec<Element>, Vec<Element>) = splits.into_iter().partition(|s| ready[s.ins[0]]);
            for s in &now {
                for &o in &s.outs {
                    ready[o] = true;
                }
            }
            ordered.extend(now);
            splits = later;
            if splits.len() == before {
                return Err(BalanceError::Cycle("splitter tree".into()));
            }
        }
        Ok(Pipeline {
            nets: index.len(),
            inputs: n
                .inputs
                .iter()
                .filter(|i| *i != CLOCK_NET)
                .map(|i| net(i))
                .collect::<Result<_, _>>()?,
            outputs: n.outputs.iter().map(|o| net(o)).collect::<Result<_, _>>()?,
            clocked,
            splits: ordered,
        })
    }

    /// Applies one input vector per cycle (zeros after the last) for
    /// `cycles` cycles and returns the output vector of every cycle.
    pub fn run(&self, vectors: &[Vec<bool>], cycles: usize) -> Vec<Vec<bool>> {
        let mut val = vec![false; self.nets];
        let mut trace = Vec::with_capacity(cycles);
        for t in 0..cycles {
            let prev = val.clone();
            for e in &self.clocked {
                let args: Vec<bool> = e.ins.iter().map(|&i| prev[i]).collect();
                val[e.outs[0]] = match e.kind {
                    Kind::Gate(op) => op.eval(&args),
                    _ => args[0],
                };
            }
            let vector = vectors.get(t);
            for (k, &i) in self.inputs.iter().enumerate() {
                val[i] = vector.is_some_and(|v| v[k]);
            }
            for s in &self.splits {
                for &o in &s.outs {
                    val[o] = val[s.ins[0]];
                }
            }
            trace.push(self.outputs.iter().map(|&o| val[o]).collect());
        }
        trace
    }
}
