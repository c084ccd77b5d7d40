// SPDX-License-Identifier: Apache-2.0
//! Bitwise decomposition of an encoded FSM.
//!
//! Each state bit becomes its own one-bit sequential component. For every
//! `(bit, signal)` pair the next value of the bit under a pulse is expressed
//! over the current state bits, minimized with unreachable codes as
//! don't-cares, and completed into one of the effect patterns a storage loop
//! can realize (set, clear, toggle, optionally through a guard net).

mod dump;
mod marking;

use std::collections::{BTreeMap, BTreeSet};

use crate::bdd::{minimize_truth_table, Bdd, Cube, NodeId, Sop, VarOrder};
use crate::encoding::StateEncoding;
use crate::fsm::FiniteStateMachine;

pub use dump::dump_tables;
pub use marking::{
    mark_effects, recognize_groups, Effect, EffectSet, GeneratedNet, Group, MarkedComponent, Marking, NetId, NetSource,
    Port, UnmappablePattern,
};

/// Next code of every state code under every input pulse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputTransitionTable {
    pub width: usize,
    pub inputs: Vec<String>,
    /// Codes of declared states, in declaration order.
    pub codes: Vec<u64>,
    /// Codes of states reachable from the initial state; the rest are
    /// don't-cares during minimization.
    pub care: BTreeSet<u64>,
    /// `(signal, code) -> next code` for every declared state.
    pub next: BTreeMap<(usize, u64), u64>,
}

/// Which `(code, signal)` pairs pulse each output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputTable {
    pub outputs: Vec<String>,
    pub emits: Vec<BTreeSet<(u64, usize)>>,
}

pub fn extract_tables(fsm: &FiniteStateMachine, enc: &StateEncoding) -> (InputTransitionTable, OutputTable) {
    assert_eq!(enc.codes.len(), fsm.states.len(), "encoding does not cover the machine");
    let mut next = BTreeMap::new();
    let mut emits = vec![BTreeSet::new(); fsm.outputs.len()];
    for s in 0..fsm.states.len() {
        for f in 0..fsm.inputs.len() {
            let (t, outs) = fsm.step(s, f);
            next.insert((f, enc.code(s)), enc.code(t));
            for o in outs {
                emits[o].insert((enc.code(s), f));
            }
        }
    }
    let care = fsm.reachable_states().into_iter().map(|s| enc.code(s)).collect();
    (
        InputTransitionTable {
            width: enc.width,
            inputs: fsm.inputs.clone(),
            codes: enc.codes.clone(),
            care,
            next,
        },
        OutputTable {
            outputs: fsm.outputs.clone(),
            emits,
        },
    )
}

/// Canonical per-bit next-state and output expressions for one encoding.
///
/// Variables are ordered `Q(w-1) .. Q0` followed by the inputs in declaration
/// order. Every next-state expression reduces to `Q<bit>` when its signal is
/// absent.
#[derive(Debug, Clone)]
pub struct OptResultTable {
    pub bdd: Bdd,
    pub width: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// `(bit, signal) -> Q<bit>*`.
    pub next: BTreeMap<(usize, usize), NodeId>,
    /// Output expressions `sum(guard · signal)`.
    pub output_exprs: Vec<NodeId>,
    /// Codes whose behavior is specified; others are don't-cares.
    pub care: BTreeSet<u64>,
}

impl OptResultTable {
    /// Fresh manager with the state-bits-then-inputs order.
    pub fn manager(width: usize, inputs: &[String]) -> Bdd {
        let prefix = if inputs.iter().any(|i| is_state_var_name(i, "Q")) {
            "Q_"
        } else {
            "Q"
        };
        let names = (0..width)
            .rev()
            .map(|b| format!("{prefix}{b}"))
            .chain(inputs.iter().cloned());
        Bdd::new(VarOrder::new(names))
    }

    pub fn state_var(&self, bit: usize) -> usize {
        self.width - 1 - bit
    }

    pub fn input_var(&self, signal: usize) -> usize {
        self.width + signal
    }

    /// Bit index of a state variable, `None` for inputs.
    pub fn bit_of_var(&self, var: usize) -> Option<usize> {
        (var < self.width).then(|| self.width - 1 - var)
    }

    pub fn var_name(&self, var: usize) -> &str {
        self.bdd.order().name(var)
    }

    /// `Q<bit>* ` rendered as a minimum SOP.
    pub fn render(&mut self, f: NodeId) -> String {
        self.bdd.format(f)
    }

    /// Applies every per-bit expression for a pulse on `signal` to `code`.
    pub fn apply(&self, code: u64, signal: usize) -> u64 {
        let mut asg = vec![false; self.width + self.inputs.len()];
        for b in 0..self.width {
            asg[self.state_var(b)] = code >> b & 1 == 1;
        }
        asg[self.input_var(signal)] = true;
        (0..self.width)
            .filter(|&b| self.bdd.eval(self.next[&(b, signal)], &asg))
            .fold(0u64, |acc, b| acc | 1 << b)
    }

    /// Outputs pulsed by `signal` in state `code`.
    pub fn emitted(&self, code: u64, signal: usize) -> Vec<usize> {
        let mut asg = vec![false; self.width + self.inputs.len()];
        for b in 0..self.width {
            asg[self.state_var(b)] = code >> b & 1 == 1;
        }
        asg[self.input_var(signal)] = true;
        (0..self.outputs.len())
            .filter(|&o| self.bdd.eval(self.output_exprs[o], &asg))
            .collect()
    }
}

fn is_state_var_name(name: &str, prefix: &str) -> bool {
    name.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}

/// Converts cubes over local bit positions (bit `i` of a code) into cubes over
/// the table's state variables.
fn to_state_sop(table_width: usize, cubes: Vec<Cube>) -> Sop {
    Sop {
        cubes: cubes
            .into_iter()
            .map(|c| Cube::new(c.lits.into_iter().map(|(b, p)| (table_width - 1 - b, p)).collect()))
            .collect(),
    }
}

/// Completion chosen for the next-state function of one bit under one signal.
enum Completion {
    Hold,
    Clear,
    Set,
    SetNet(Sop),
    ToggleNet(Sop),
    ClearSetNet(Sop),
}

fn complete_bit(width: usize, care: &BTreeSet<u64>, bit: usize, value: impl Fn(u64) -> bool) -> Completion {
    let size = 1usize << width;
    let bit_of = |c: u64| c >> bit & 1 == 1;
    if care.iter().all(|&c| value(c) == bit_of(c)) {
        return Completion::Hold;
    }
    if care.iter().all(|&c| !value(c)) {
        return Completion::Clear;
    }
    if care.iter().all(|&c| value(c)) {
        return Completion::Set;
    }
    if care.iter().filter(|&&c| bit_of(c)).all(|&c| value(c)) {
        // Q + G·F: only codes with the bit clear constrain G.
        let mut on = vec![false; size];
        let mut dc = vec![true; size];
        for &c in care.iter().filter(|&&c| !bit_of(c)) {
            on[c as usize] = value(c);
            dc[c as usize] = false;
        }
        return Completion::SetNet(to_state_sop(width, minimize_truth_table(width, &on, &dc)));
    }
    // Q xor G·F with G independent of the bit.
    let mut toggle: BTreeMap<u64, bool> = BTreeMap::new();
    let consistent = care.iter().all(|&c| {
        let g = value(c) ^ bit_of(c);
        let key = c & !(1 << bit);
        *toggle.entry(key).or_insert(g) == g
    });
    if consistent {
        let mut on = vec![false; size];
        let mut dc = vec![true; size];
        for (&key, &g) in &toggle {
            for c in [key, key | 1 << bit] {
                on[c as usize] = g;
                dc[c as usize] = false;
            }
        }
        return Completion::ToggleNet(to_state_sop(width, minimize_truth_table(width, &on, &dc)));
    }
    let mut on = vec![false; size];
    let mut dc = vec![true; size];
    for &c in care {
        on[c as usize] = value(c);
        dc[c as usize] = false;
    }
    Completion::ClearSetNet(to_state_sop(width, minimize_truth_table(width, &on, &dc)))
}

/// Builds the per-bit expression table from the extracted tables.
pub fn per_bit_expressions(inputs: &InputTransitionTable, outputs: &OutputTable) -> OptResultTable {
    let width = inputs.width;
    let mut bdd = OptResultTable::manager(width, &inputs.inputs);
    let mut next = BTreeMap::new();
    for f in 0..inputs.inputs.len() {
        let sig = bdd.var(width + f);
        for bit in 0..width {
            let q = bdd.var(width - 1 - bit);
            let completion = complete_bit(width, &inputs.care, bit, |c| inputs.next[&(f, c)] >> bit & 1 == 1);
            let expr = match completion {
                Completion::Hold => q,
                Completion::Clear => {
                    let nf = bdd.not(sig);
                    bdd.and(q, nf)
                }
                Completion::Set => bdd.or(q, sig),
                Completion::SetNet(g) => {
                    let g = bdd.from_sop(&g);
                    let gf = bdd.and(g, sig);
                    bdd.or(q, gf)
                }
                Completion::ToggleNet(g) => {
                    let g = bdd.from_sop(&g);
                    let gf = bdd.and(g, sig);
                    bdd.xor(q, gf)
                }
                Completion::ClearSetNet(g) => {
                    let g = bdd.from_sop(&g);
                    bdd.ite(sig, g, q)
                }
            };
            next.insert((bit, f), expr);
        }
    }
    let size = 1usize << width;
    let mut output_exprs = Vec::with_capacity(outputs.outputs.len());
    for emits in &outputs.emits {
        let mut acc = NodeId::FALSE;
        for f in 0..inputs.inputs.len() {
            let mut on = vec![false; size];
            let mut dc = vec![true; size];
            for &c in &inputs.care {
                on[c as usize] = emits.contains(&(c, f));
                dc[c as usize] = false;
            }
            let guard = to_state_sop(width, minimize_truth_table(width, &on, &dc));
            let g = bdd.from_sop(&guard);
            let sig = bdd.var(width + f);
            let term = bdd.and(g, sig);
            acc = bdd.or(acc, term);
        }
        output_exprs.push(acc);
    }
    OptResultTable {
        bdd,
        width,
        inputs: inputs.inputs.clone(),
        outputs: outputs.outputs.clone(),
        next,
        output_exprs,
        care: inputs.care.clone(),
    }
}

/// Per-bit table of an N-bit ripple up-counter built directly from its bit
/// recurrence, without materializing the `2^N`-state machine:
/// `Qi* = Qi xor (Q(i-1)···Q0·Din)`, `Qi* = Qi·!Rst`, `Out(i+1) = Qi·Clk`.
pub fn counter_bit_slices(bits: usize) -> OptResultTable {
    assert!(bits >= 1, "counter needs at least one bit");
    let inputs: Vec<String> = ["Din", "Rst", "Clk"].map(String::from).to_vec();
    let outputs: Vec<String> = (1..=bits).map(|i| format!("Out{i}")).collect();
    let mut bdd = OptResultTable::manager(bits, &inputs);
    let (din, rst, clk) = (bdd.var(bits), bdd.var(bits + 1), bdd.var(bits + 2));
    let mut next = BTreeMap::new();
    let mut carry = din;
    let mut output_exprs = Vec::new();
    for bit in 0..bits {
        let q = bdd.var(bits - 1 - bit);
        next.insert((bit, 0), bdd.xor(q, carry));
        let nr = bdd.not(rst);
        next.insert((bit, 1), bdd.and(q, nr));
        next.insert((bit, 2), q);
        output_exprs.push(bdd.and(q, clk));
        carry = bdd.and(q, carry);
    }
    OptResultTable {
        bdd,
        width: bits,
        inputs,
        outputs,
        next,
        output_exprs,
        care: BTreeSet::new(),
    }
}
