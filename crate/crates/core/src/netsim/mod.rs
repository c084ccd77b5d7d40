// SPDX-License-Identifier: Apache-2.0
//! Zero-delay pulse simulation of mapped netlists.
//!
//! Time is an integer tick. Within a tick a pulse ripples through any number
//! of cells; events are ordered by the topological level of the net they
//! travel on. Edges that close a loop (found by depth-first search from the
//! primary inputs) deliver at the start of the next tick instead, before that
//! tick's input pulse.

mod vcd;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use thiserror::Error;

use crate::decomposition::{Effect, EffectSet};
use crate::fsm::{validate_stimulus, FiniteStateMachine, FsmError, PulseEvent, PulseTrace};
use crate::mapping::{CellKind, Netlist, Pdk};

pub use vcd::write_vcd;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("instance `{instance}` uses cell `{cell}` missing from the PDK")]
    UnknownCell { instance: String, cell: String },
    #[error("instance `{instance}` binds unknown pin `{pin}`")]
    UnknownPin { instance: String, pin: String },
    #[error("net `{0}` is not declared")]
    UnknownNet(String),
    #[error("net `{net}` is driven by both `{first}` and `{second}`")]
    MultipleDrivers { net: String, first: String, second: String },
    #[error("`{0}` is not a primary input")]
    UnknownInput(String),
    #[error("stimulus at tick {tick} is past the horizon {horizon}")]
    BeyondHorizon { tick: u64, horizon: u64 },
    #[error(transparent)]
    Stimulus(#[from] FsmError),
    #[error("port mismatch: FSM has {fsm:?}, netlist has {netlist:?}")]
    PortMismatch { fsm: Vec<String>, netlist: Vec<String> },
}

#[derive(Debug, Clone)]
struct PortModel {
    effects: EffectSet,
    /// State slot read or written by this port.
    slot: usize,
    out: Option<usize>,
    nout: Option<usize>,
}

#[derive(Debug, Clone)]
struct InstModel {
    kind: CellKind,
    ports: Vec<PortModel>,
    /// First state slot and slot count.
    slots: (usize, usize),
    /// Output nets of merge and split cells.
    outs: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Sink {
    inst: usize,
    port: usize,
    feedback: bool,
}

/// Mutable part of a simulation; cheap to clone for branching replays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    bits: Vec<bool>,
    merge_tick: Vec<Option<u64>>,
    /// Deliveries due at the start of a later tick: `(tick, inst, port)`.
    deferred: Vec<(u64, usize, usize)>,
}

impl SimState {
    pub fn has_pending(&self) -> bool {
        !self.deferred.is_empty()
    }
}

/// Compiled netlist ready for simulation.
#[derive(Debug, Clone)]
pub struct Simulator {
    net_names: Vec<String>,
    net_level: Vec<usize>,
    sinks: Vec<Vec<Sink>>,
    insts: Vec<InstModel>,
    inputs: Vec<usize>,
    output_of_net: Vec<Option<usize>>,
    output_names: Vec<String>,
    input_names: Vec<String>,
    slot_count: usize,
    feedback_edges: usize,
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Deliver { inst: usize, port: usize },
    Net(usize),
}

impl Simulator {
    pub fn new(netlist: &Netlist, pdk: &Pdk) -> Result<Simulator, SimError> {
        let net_names: Vec<String> = netlist.all_nets().cloned().collect();
        let net_index: HashMap<&str, usize> = net_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let lookup = |net: &str| {
            net_index
                .get(net)
                .copied()
                .ok_or_else(|| SimError::UnknownNet(net.to_string()))
        };

        let mut insts = Vec::new();
        let mut sinks: Vec<Vec<Sink>> = vec![Vec::new(); net_names.len()];
        let mut driver: Vec<Option<usize>> = vec![None; net_names.len()];
        let mut slot_count = 0;
        for (ii, inst) in netlist.instances.iter().enumerate() {
            let cell = pdk.cell(&inst.cell).ok_or_else(|| SimError::UnknownCell {
                instance: inst.name.clone(),
                cell: inst.cell.clone(),
            })?;
            for pin in inst.pins.keys() {
                if cell.port(pin).is_none() && !cell.outputs.contains(pin) {
                    return Err(SimError::UnknownPin {
                        instance: inst.name.clone(),
                        pin: pin.clone(),
                    });
                }
            }
            let pin_net = |pin: &str| inst.pins.get(pin).map(|n| lookup(n)).transpose();
            let mut outs = Vec::new();
            for pin in &cell.outputs {
                if let Some(net) = pin_net(pin)? {
                    if let Some(first) = driver[net] {
                        return Err(SimError::MultipleDrivers {
                            net: net_names[net].clone(),
                            first: netlist.instances[first].name.clone(),
                            second: inst.name.clone(),
                        });
                    }
                    driver[net] = Some(ii);
                    outs.push(net);
                }
            }
            let first_slot = slot_count;
            let mut ports = Vec::new();
            for (pi, p) in cell.ports.iter().enumerate() {
                let slot = match cell.kind {
                    CellKind::And if p.effects == EffectSet::of(&[Effect::Set]) => {
                        slot_count += 1;
                        slot_count - 1
                    }
                    _ => first_slot,
                };
                ports.push(PortModel {
                    effects: p.effects,
                    slot,
                    out: p.out_pin.as_deref().map(pin_net).transpose()?.flatten(),
                    nout: p.nout_pin.as_deref().map(pin_net).transpose()?.flatten(),
                });
                if let Some(net) = pin_net(&p.name)? {
                    sinks[net].push(Sink {
                        inst: ii,
                        port: pi,
                        feedback: false,
                    });
                }
            }
            if cell.kind == CellKind::Storage {
                slot_count += 1;
            }
            let slots = (first_slot, slot_count - first_slot);
            insts.push(InstModel {
                kind: cell.kind,
                ports,
                slots,
                outs,
            });
        }

        let inputs: Vec<usize> = netlist.inputs.iter().map(|n| lookup(n)).collect::<Result<_, _>>()?;
        let mut output_of_net = vec![None; net_names.len()];
        for (o, name) in netlist.outputs.iter().enumerate() {
            output_of_net[lookup(name)?] = Some(o);
        }

        let mut sim = Simulator {
            net_level: vec![0; net_names.len()],
            net_names,
            sinks,
            insts,
            inputs,
            output_of_net,
            output_names: netlist.outputs.clone(),
            input_names: netlist.inputs.clone(),
            slot_count,
            feedback_edges: 0,
        };
        sim.order_events();
        Ok(sim)
    }

    /// Marks loop-closing deliveries and assigns net levels.
    fn order_events(&mut self) {
        let n_nets = self.net_names.len();
        let n = n_nets + self.insts.len();
        // Node ids: nets first, then instances.
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                if v < n_nets {
                    self.sinks[v].iter().map(|s| n_nets + s.inst).collect()
                } else {
                    self.insts[v - n_nets].outs.clone()
                }
            })
            .collect();
        let succ = |v: usize| adj[v].clone();
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        let mut mark = vec![Mark::New; n];
        let mut back: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut post = Vec::new();
        let roots: Vec<usize> = self.inputs.iter().copied().chain(n_nets..n).chain(0..n_nets).collect();
        for root in roots {
            if mark[root] != Mark::New {
                continue;
            }
            let mut stack = vec![(root, succ(root), 0usize)];
            mark[root] = Mark::Open;
            while let Some((v, next, i)) = stack.last_mut() {
                if *i < next.len() {
                    let w = next[*i];
                    *i += 1;
                    match mark[w] {
                        Mark::New => {
                            mark[w] = Mark::Open;
                            let s = succ(w);
                            stack.push((w, s, 0));
                        }
                        Mark::Open => {
                            back.insert((*v, w));
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[*v] = Mark::Done;
                    post.push(*v);
                    stack.pop();
                }
            }
        }
        for (v, w) in &back {
            if *v < n_nets {
                for s in &mut self.sinks[*v] {
                    if n_nets + s.inst == *w {
                        s.feedback = true;
                    }
                }
            }
        }
        self.feedback_edges = back.len();
        let mut level = vec![0usize; n];
        for &v in post.iter().rev() {
            for w in succ(v) {
                if !back.contains(&(v, w)) {
                    level[w] = level[w].max(level[v] + 1);
                }
            }
        }
        self.net_level = level[..n_nets].to_vec();
    }

    /// Number of loop-closing edges in the data graph.
    pub fn feedback_edges(&self) -> usize {
        self.feedback_edges
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn initial_state(&self) -> SimState {
        SimState {
            bits: vec![false; self.slot_count],
            merge_tick: vec![None; self.insts.len()],
            deferred: Vec::new(),
        }
    }

    /// Pulses primary input `input` at `tick` and returns the indices of the
    /// outputs pulsed during that tick.
    pub fn step(&self, state: &mut SimState, tick: u64, input: usize) -> Vec<usize> {
        self.run_tick(state, tick, Some(input))
    }

    /// Runs one tick: due loop deliveries first, then the optional input.
    pub fn run_tick(&self, state: &mut SimState, tick: u64, input: Option<usize>) -> Vec<usize> {
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let mut due = Vec::new();
        state.deferred.retain(|&(t, inst, port)| {
            if t <= tick {
                due.push((inst, port));
                false
            } else {
                true
            }
        });
        for (inst, port) in due {
            heap.push(Reverse((0u8, 0usize, seq, Ev::Deliver { inst, port })));
            seq += 1;
        }
        if let Some(i) = input {
            let net = self.inputs[i];
            heap.push(Reverse((1u8, self.net_level[net], seq, Ev::Net(net))));
            seq += 1;
        }
        let mut outputs = Vec::new();
        let mut emitted = Vec::new();
        while let Some(Reverse((phase, _, _, ev))) = heap.pop() {
            match ev {
                Ev::Deliver { inst, port } => self.react(state, tick, inst, port, &mut emitted),
                Ev::Net(net) => {
                    if let Some(o) = self.output_of_net[net] {
                        outputs.push(o);
                    }
                    for s in &self.sinks[net] {
                        if s.feedback {
                            state.deferred.push((tick + 1, s.inst, s.port));
                        } else {
                            self.react(state, tick, s.inst, s.port, &mut emitted);
                        }
                    }
                }
            }
            for net in emitted.drain(..) {
                heap.push(Reverse((phase, self.net_level[net], seq, Ev::Net(net))));
                seq += 1;
            }
        }
        outputs
    }

    fn react(&self, state: &mut SimState, tick: u64, inst: usize, port: usize, emitted: &mut Vec<usize>) {
        let m = &self.insts[inst];
        let p = &m.ports[port];
        let e = p.effects;
        match m.kind {
            CellKind::Storage => {
                let old = state.bits[p.slot];
                if e.contains(Effect::Out) && old {
                    emitted.extend(p.out);
                }
                if e.contains(Effect::Nout) && !old {
                    emitted.extend(p.nout);
                }
                let mut v = old;
                if e.contains(Effect::Clear) {
                    v = false;
                }
                if e.contains(Effect::Set) {
                    v = true;
                }
                if e.contains(Effect::Toggle) {
                    v = !v;
                }
                state.bits[p.slot] = v;
            }
            CellKind::And => {
                let (first, count) = m.slots;
                if e.contains(Effect::Clear) {
                    let all = state.bits[first..first + count].iter().all(|&b| b);
                    if all && e.contains(Effect::Out) {
                        emitted.extend(p.out);
                    }
                    state.bits[first..first + count].iter_mut().for_each(|b| *b = false);
                } else {
                    state.bits[p.slot] = true;
                }
            }
            CellKind::Merge => {
                if state.merge_tick[inst] != Some(tick) {
                    state.merge_tick[inst] = Some(tick);
                    emitted.extend(m.outs.iter().copied());
                }
            }
            CellKind::Split => emitted.extend(m.outs.iter().copied()),
        }
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.input_names.iter().position(|n| n == name)
    }
}

/// Simulates `stimulus` (one pulse per tick) up to and including `horizon`.
pub fn simulate(netlist: &Netlist, pdk: &Pdk, stimulus: &[PulseEvent], horizon: u64) -> Result<PulseTrace, SimError> {
    validate_stimulus(stimulus)?;
    let sim = Simulator::new(netlist, pdk)?;
    let mut by_tick = Vec::new();
    for ev in stimulus {
        if ev.tick > horizon {
            return Err(SimError::BeyondHorizon { tick: ev.tick, horizon });
        }
        let i = sim
            .input_index(&ev.name)
            .ok_or_else(|| SimError::UnknownInput(ev.name.clone()))?;
        by_tick.push((ev.tick, i));
    }
    let mut state = sim.initial_state();
    let mut outputs = Vec::new();
    let mut next = by_tick.into_iter().peekable();
    let mut tick = 0;
    while tick <= horizon {
        let input = next.next_if(|&(t, _)| t == tick).map(|(_, i)| i);
        let fired = sim.run_tick(&mut state, tick, input);
        outputs.extend(fired.into_iter().map(|o| PulseEvent::new(tick, &sim.output_names[o])));
        // Jump over idle ticks.
        tick = match (next.peek(), state.has_pending()) {
            (_, true) => tick + 1,
            (Some(&(t, _)), false) => t,
            (None, false) => break,
        };
    }
    Ok(PulseTrace {
        inputs: stimulus.to_vec(),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    /// Input pulses, one per tick starting at tick 0.
    pub inputs: Vec<String>,
    pub expected: Vec<PulseEvent>,
    pub actual: Vec<PulseEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equivalence {
    pub depth: usize,
    pub counterexample: Option<Counterexample>,
}

impl Equivalence {
    pub fn is_equivalent(&self) -> bool {
        self.counterexample.is_none()
    }
}

fn same_names(a: &[String], b: &[String]) -> bool {
    a.iter().collect::<BTreeSet<_>>() == b.iter().collect::<BTreeSet<_>>() && a.len() == b.len()
}

/// Replays every input sequence of length up to `max_len` (one pulse per
/// tick) on both the FSM and the netlist. The first mismatch in
/// lexicographic sequence order is returned.
pub fn check_equivalence(
    fsm: &FiniteStateMachine,
    netlist: &Netlist,
    pdk: &Pdk,
    max_len: usize,
) -> Result<Equivalence, SimError> {
    if !same_names(&fsm.inputs, &netlist.inputs) {
        return Err(SimError::PortMismatch {
            fsm: fsm.inputs.clone(),
            netlist: netlist.inputs.clone(),
        });
    }
    if !same_names(&fsm.outputs, &netlist.outputs) {
        return Err(SimError::PortMismatch {
            fsm: fsm.outputs.clone(),
            netlist: netlist.outputs.clone(),
        });
    }
    let sim = Simulator::new(netlist, pdk)?;
    let input_map: Vec<usize> = fsm
        .inputs
        .iter()
        .map(|n| sim.input_index(n).expect("checked"))
        .collect();
    let mut walk = Walk {
        fsm,
        sim: &sim,
        input_map,
        max_len,
        prefix: Vec::new(),
        expected: Vec::new(),
        actual: Vec::new(),
    };
    let counterexample = walk.explore(fsm.initial, sim.initial_state());
    Ok(Equivalence {
        depth: max_len,
        counterexample,
    })
}

struct Walk<'a> {
    fsm: &'a FiniteStateMachine,
    sim: &'a Simulator,
    input_map: Vec<usize>,
    max_len: usize,
    prefix: Vec<usize>,
    expected: Vec<PulseEvent>,
    actual: Vec<PulseEvent>,
}

impl Walk<'_> {
    fn counterexample(&self) -> Counterexample {
        Counterexample {
            inputs: self.prefix.iter().map(|&i| self.fsm.inputs[i].clone()).collect(),
            expected: self.expected.clone(),
            actual: self.actual.clone(),
        }
    }

    fn explore(&mut self, fsm_state: usize, sim_state: SimState) -> Option<Counterexample> {
        let tick = self.prefix.len() as u64;
        if self.prefix.len() == self.max_len {
            if sim_state.has_pending() {
                let mut st = sim_state;
                let late = self.sim.run_tick(&mut st, tick, None);
                if !late.is_empty() {
                    let (e_len, a_len) = (self.expected.len(), self.actual.len());
                    self.actual
                        .extend(late.iter().map(|&o| PulseEvent::new(tick, &self.sim.output_names()[o])));
                    let cx = self.counterexample();
                    self.expected.truncate(e_len);
                    self.actual.truncate(a_len);
                    return Some(cx);
                }
            }
            return None;
        }
        for f in 0..self.fsm.inputs.len() {
            let (next, outs) = self.fsm.step(fsm_state, f);
            let mut expected: Vec<String> = outs.iter().map(|&o| self.fsm.outputs[o].clone()).collect();
            let mut st = sim_state.clone();
            let mut actual: Vec<String> = self
                .sim
                .step(&mut st, tick, self.input_map[f])
                .into_iter()
                .map(|o| self.sim.output_names()[o].clone())
                .collect();
            expected.sort();
            actual.sort();
            let (e_len, a_len) = (self.expected.len(), self.actual.len());
            self.prefix.push(f);
            self.expected.extend(expected.iter().map(|n| PulseEvent::new(tick, n)));
            self.actual.extend(actual.iter().map(|n| PulseEvent::new(tick, n)));
            let found = if expected != actual {
                Some(self.counterexample())
            } else {
                self.explore(next, st)
            };
            self.prefix.pop();
            self.expected.truncate(e_len);
            self.actual.truncate(a_len);
            if found.is_some() {
                return found;
            }
        }
        None
    }
}
