// SPDX-License-Identifier: Apache-2.0
//! Pulse-driven Mealy machines: data model, text format and the reference
//! interpreter used as the equivalence oracle.
//!
//! Inputs are SFQ pulses rather than levels. A missing `(state, signal)`
//! transition means the machine holds its state; outputs are tied to the
//! triggering pulse and read the state *before* the transition.
//!
//! # Text format
//!
//! Line oriented, `#` starts a comment, blank lines are ignored:
//!
//! ```text
//! .name    <id>
//! .inputs  <id>...
//! .outputs <id>...
//! .states  <id>...
//! .initial <id>
//! .trans   <from> <signal> <to>
//! .out     <state> <signal> <output>
//! .end
//! ```
//!
//! Identifiers match `[A-Za-z_][A-Za-z0-9_]*`. Declarations (`.inputs`,
//! `.outputs`, `.states`) may be split across several lines and must precede
//! any `.trans`/`.out` line that uses them. `.initial` defaults to the first
//! declared state. Anything after `.end` is ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FsmError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: undeclared {kind} `{name}`")]
    Undeclared {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: duplicate {kind} `{name}`")]
    DuplicateName {
        line: usize,
        kind: &'static str,
        name: String,
    },
    #[error("line {line}: duplicate transition for state `{state}` on `{signal}`")]
    DuplicateTransition { line: usize, state: String, signal: String },
    #[error("machine declares no states")]
    NoStates,
    #[error("unknown signal `{0}` in stimulus")]
    UnknownSignal(String),
    #[error("two input pulses at tick {0}; simultaneous pulses are not supported")]
    SimultaneousPulses(u64),
    #[error("stimulus ticks must be non-decreasing (tick {0} after {1})")]
    UnorderedStimulus(u64, u64),
}

/// A deterministic pulse-triggered Mealy machine.
///
/// States, signals and outputs are stored by index; the declaration order is
/// significant (it fixes variable orders and enumeration order downstream).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteStateMachine {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub states: Vec<String>,
    pub initial: usize,
    /// `(state, signal) -> next state`. Absent entries hold.
    pub transitions: BTreeMap<(usize, usize), usize>,
    /// `(state, signal, output)`: pulse `output` when `signal` arrives in `state`.
    pub output_rules: BTreeSet<(usize, usize, usize)>,
}

/// One timed pulse on a named signal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PulseEvent {
    pub tick: u64,
    pub name: String,
}

impl PulseEvent {
    pub fn new(tick: u64, name: impl Into<String>) -> Self {
        PulseEvent {
            tick,
            name: name.into(),
        }
    }
}

/// Input stimulus together with the output pulses it produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PulseTrace {
    pub inputs: Vec<PulseEvent>,
    pub outputs: Vec<PulseEvent>,
}

/// Checks the single-pulse-per-tick stimulus contract shared by the FSM
/// interpreter and the gate-level simulator.
pub fn validate_stimulus(stimulus: &[PulseEvent]) -> Result<(), FsmError> {
    for pair in stimulus.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.tick < a.tick {
            return Err(FsmError::UnorderedStimulus(b.tick, a.tick));
        }
        if b.tick == a.tick {
            return Err(FsmError::SimultaneousPulses(a.tick));
        }
    }
    Ok(())
}

/// Parses a stimulus file: one `<tick> <signal>` pair per line, `#` comments.
pub fn parse_stimulus(text: &str) -> Result<Vec<PulseEvent>, FsmError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(tick), Some(name), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(FsmError::Syntax {
                line: idx + 1,
                message: "expected `<tick> <signal>`".into(),
            });
        };
        let tick = tick.parse::<u64>().map_err(|_| FsmError::Syntax {
            line: idx + 1,
            message: format!("bad tick `{tick}`"),
        })?;
        events.push(PulseEvent::new(tick, name));
    }
    validate_stimulus(&events)?;
    Ok(events)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => line[..pos].trim(),
        None => line.trim(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl FiniteStateMachine {
    /// Parses and validates the text format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, FsmError> {
        Parser::default().run(text)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|s| s == name)
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|s| s == name)
    }

    /// Next state and emitted outputs (in declaration order) for one pulse.
    pub fn step(&self, state: usize, signal: usize) -> (usize, Vec<usize>) {
        let next = self.transitions.get(&(state, signal)).copied().unwrap_or(state);
        let outputs = self
            .output_rules
            .range((state, signal, 0)..=(state, signal, usize::MAX))
            .map(|&(_, _, o)| o)
            .collect();
        (next, outputs)
    }

    /// Name-level convenience wrapper around [`step`](Self::step).
    pub fn step_named(&self, state: &str, signal: &str) -> Option<(String, BTreeSet<String>)> {
        let s = self.state_index(state)?;
        let f = self.input_index(signal)?;
        let (next, outs) = self.step(s, f);
        Some((
            self.states[next].clone(),
            outs.into_iter().map(|o| self.outputs[o].clone()).collect(),
        ))
    }

    /// Replays `stimulus` from the initial state.
    pub fn run(&self, stimulus: &[PulseEvent]) -> Result<PulseTrace, FsmError> {
        validate_stimulus(stimulus)?;
        let mut state = self.initial;
        let mut trace = PulseTrace {
            inputs: stimulus.to_vec(),
            outputs: Vec::new(),
        };
        for ev in stimulus {
            let sig = self
                .input_index(&ev.name)
                .ok_or_else(|| FsmError::UnknownSignal(ev.name.clone()))?;
            let (next, outs) = self.step(state, sig);
            trace.outputs.extend(
                outs.into_iter()
                    .map(|o| PulseEvent::new(ev.tick, self.outputs[o].clone())),
            );
            state = next;
        }
        Ok(trace)
    }

    /// Breadth-first discovery order of states from the initial state.
    pub fn reachable_states(&self) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([self.initial]);
        let mut queue = std::collections::VecDeque::from([self.initial]);
        while let Some(s) = queue.pop_front() {
            for sig in 0..self.inputs.len() {
                if let Some(&n) = self.transitions.get(&(s, sig)) {
                    if seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    /// Human-readable warnings that do not make the machine invalid.
    pub fn warnings(&self) -> Vec<String> {
        let reach = self.reachable_states();
        (0..self.states.len())
            .filter(|s| !reach.contains(s))
            .map(|s| {
                format!(
                    "state `{}` is unreachable from `{}`",
                    self.states[s], self.states[self.initial]
                )
            })
            .collect()
    }

    /// Canonical text form. `parse(serialize(m)) == m`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, ".name {}", self.name);
        let _ = writeln!(out, ".inputs {}", self.inputs.join(" "));
        if !self.outputs.is_empty() {
            let _ = writeln!(out, ".outputs {}", self.outputs.join(" "));
        }
        let _ = writeln!(out, ".states {}", self.states.join(" "));
        let _ = writeln!(out, ".initial {}", self.states[self.initial]);
        for (&(s, f), &n) in &self.transitions {
            let _ = writeln!(out, ".trans {} {} {}", self.states[s], self.inputs[f], self.states[n]);
        }
        for &(s, f, o) in &self.output_rules {
            let _ = writeln!(out, ".out {} {} {}", self.states[s], self.inputs[f], self.outputs[o]);
        }
        out.push_str(".end\n");
        out
    }

    /// Programmatic N-bit up-counter: `Din` increments (wrapping), `Rst`
    /// returns to zero, `Clk` pulses `Out<i+1>` for every set bit `i`.
    pub fn up_counter(bits: u32) -> Self {
        assert!((1..=16).contains(&bits), "counter width out of range");
        let n = 1usize << bits;
        let inputs = vec!["Din".to_string(), "Rst".to_string(), "Clk".to_string()];
        let outputs = (1..=bits).map(|i| format!("Out{i}")).collect();
        let states = (0..n).map(|k| format!("S{k}")).collect();
        let mut transitions = BTreeMap::new();
        let mut output_rules = BTreeSet::new();
        for k in 0..n {
            transitions.insert((k, 0), (k + 1) % n);
            if k != 0 {
                transitions.insert((k, 1), 0);
            }
            for bit in 0..bits as usize {
                if k >> bit & 1 == 1 {
                    output_rules.insert((k, 2, bit));
                }
            }
        }
        FiniteStateMachine {
            name: format!("counter{bits}"),
            inputs,
            outputs,
            states,
            initial: 0,
            transitions,
            output_rules,
        }
    }
}

#[derive(Default)]
struct Parser {
    name: Option<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    states: Vec<String>,
    initial: Option<(usize, String)>,
    transitions: BTreeMap<(usize, usize), usize>,
    output_rules: BTreeSet<(usize, usize, usize)>,
    index: HashMap<(&'static str, String), usize>,
}

impl Parser {
    fn declare(&mut self, line: usize, kind: &'static str, names: &[&str]) -> Result<(), FsmError> {
        for &name in names {
            if !is_identifier(name) {
                return Err(FsmError::Syntax {
                    line,
                    message: format!("invalid identifier `{name}`"),
                });
            }
            let list = match kind {
                "input" => &mut self.inputs,
                "output" => &mut self.outputs,
                _ => &mut self.states,
            };
            if self.index.contains_key(&(kind, name.to_string())) {
                return Err(FsmError::DuplicateName {
                    line,
                    kind,
                    name: name.into(),
                });
            }
            self.index.insert((kind, name.to_string()), list.len());
            list.push(name.to_string());
        }
        Ok(())
    }

    fn lookup(&self, line: usize, kind: &'static str, name: &str) -> Result<usize, FsmError> {
        self.index
            .get(&(kind, name.to_string()))
            .copied()
            .ok_or_else(|| FsmError::Undeclared {
                line,
                kind,
                name: name.into(),
            })
    }

    fn run(mut self, text: &str) -> Result<FiniteStateMachine, FsmError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw);
            if content.is_empty() {
                continue;
            }
            let mut words = content.split_whitespace();
            let keyword = words.next().unwrap_or_default();
            let args: Vec<&str> = words.collect();
            let arity = |n: usize| -> Result<(), FsmError> {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(FsmError::Syntax {
                        line,
                        message: format!("`{keyword}` takes {n} argument(s), got {}", args.len()),
                    })
                }
            };
            match keyword {
                ".name" => {
                    arity(1)?;
                    self.name = Some(args[0].to_string());
                }
                ".inputs" => self.declare(line, "input", &args)?,
                ".outputs" => self.declare(line, "output", &args)?,
                ".states" => self.declare(line, "state", &args)?,
                ".initial" => {
                    arity(1)?;
                    self.initial = Some((line, args[0].to_string()));
                }
                ".trans" => {
                    arity(3)?;
                    let from = self.lookup(line, "state", args[0])?;
                    let sig = self.lookup(line, "input", args[1])?;
                    let to = self.lookup(line, "state", args[2])?;
                    if self.transitions.insert((from, sig), to).is_some() {
                        return Err(FsmError::DuplicateTransition {
                            line,
                            state: args[0].into(),
                            signal: args[1].into(),
                        });
                    }
                }
                ".out" => {
                    arity(3)?;
                    let state = self.lookup(line, "state", args[0])?;
                    let sig = self.lookup(line, "input", args[1])?;
                    let out = self.lookup(line, "output", args[2])?;
                    self.output_rules.insert((state, sig, out));
                }
                ".end" => break,
                other => {
                    return Err(FsmError::Syntax {
                        line,
                        message: format!("unknown directive `{other}`"),
                    })
                }
            }
        }
        if self.states.is_empty() {
            return Err(FsmError::NoStates);
        }
        let initial = match &self.initial {
            Some((line, name)) => self.lookup(*line, "state", name)?,
            None => 0,
        };
        Ok(FiniteStateMachine {
            name: self.name.unwrap_or_else(|| "fsm".into()),
            inputs: self.inputs,
            outputs: self.outputs,
            states: self.states,
            initial,
            transitions: self.transitions,
            output_rules: self.output_rules,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const ERDFF: &str = include_str!("../data/fsm/erdff.fsm");

    #[test]
    fn erdff_matches_transition_table() {
        let m = FiniteStateMachine::parse(ERDFF).unwrap();
        assert_eq!(m.states, ["S0", "S1", "S2", "S3"]);
        assert_eq!(m.step_named("S1", "En").unwrap().0, "S2");
        assert_eq!(m.step_named("S1", "Rst").unwrap().0, "S0");
        assert_eq!(m.step_named("S3", "Rst").unwrap().0, "S2");
        let (next, outs) = m.step_named("S2", "Clk").unwrap();
        assert_eq!(next, "S2");
        assert_eq!(outs, BTreeSet::from(["Out".to_string()]));
        let (next, outs) = m.step_named("S0", "Clk").unwrap();
        assert_eq!(next, "S0");
        assert!(outs.is_empty());
        assert!(m.warnings().is_empty());
    }

    #[test]
    fn hold_only_machine() {
        let m = FiniteStateMachine::parse(".name h\n.inputs a b\n.states S\n.end\n").unwrap();
        for f in 0..2 {
            assert_eq!(m.step(0, f), (0, vec![]));
        }
    }

    #[test]
    fn undeclared_state_is_named() {
        let err = FiniteStateMachine::parse(".inputs a\n.states S0\n.trans S0 a S9\n").unwrap_err();
        assert_eq!(
            err,
            FsmError::Undeclared {
                line: 3,
                kind: "state",
                name: "S9".into()
            }
        );
        assert!(err.to_string().contains("S9"));
    }

    #[test]
    fn duplicate_transition_rejected() {
        let err = FiniteStateMachine::parse(".inputs a\n.states S0 S1\n.trans S0 a S1\n.trans S0 a S0\n").unwrap_err();
        assert!(matches!(err, FsmError::DuplicateTransition { line: 4, .. }));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = FiniteStateMachine::parse("# c\n.states A\n.trans A\n").unwrap_err();
        assert!(matches!(err, FsmError::Syntax { line: 3, .. }));
        let err = FiniteStateMachine::parse(".states A\n.bogus\n").unwrap_err();
        assert!(matches!(err, FsmError::Syntax { line: 2, .. }));
    }

    #[test]
    fn unreachable_state_warns() {
        let m = FiniteStateMachine::parse(".inputs a\n.states A B\n").unwrap();
        assert_eq!(m.warnings().len(), 1);
    }

    #[test]
    fn erdff_run_reads_in_s2() {
        let m = FiniteStateMachine::parse(ERDFF).unwrap();
        let stim = [
            PulseEvent::new(0, "Din"),
            PulseEvent::new(1, "En"),
            PulseEvent::new(2, "Clk"),
        ];
        let trace = m.run(&stim).unwrap();
        assert_eq!(trace.outputs, vec![PulseEvent::new(2, "Out")]);
        assert!(m.run(&[]).unwrap().outputs.is_empty());
    }

    #[test]
    fn simultaneous_pulses_rejected() {
        let m = FiniteStateMachine::parse(ERDFF).unwrap();
        let err = m
            .run(&[PulseEvent::new(3, "Din"), PulseEvent::new(3, "En")])
            .unwrap_err();
        assert_eq!(err, FsmError::SimultaneousPulses(3));
    }

    #[test]
    fn counter_counts_to_three() {
        let m = FiniteStateMachine::parse(include_str!("../data/fsm/counter2.fsm")).unwrap();
        let stim: Vec<_> = ["Din", "Din", "Din", "Clk", "Clk"]
            .iter()
            .enumerate()
            .map(|(t, s)| PulseEvent::new(t as u64, *s))
            .collect();
        let outs = m.run(&stim).unwrap().outputs;
        assert_eq!(
            outs,
            vec![
                PulseEvent::new(3, "Out1"),
                PulseEvent::new(3, "Out2"),
                PulseEvent::new(4, "Out1"),
                PulseEvent::new(4, "Out2"),
            ]
        );
        assert_eq!(m, FiniteStateMachine::up_counter(2));
    }

    #[test]
    fn stimulus_file() {
        let ev = parse_stimulus("0 Din # x\n\n2 Clk\n").unwrap();
        assert_eq!(ev, vec![PulseEvent::new(0, "Din"), PulseEvent::new(2, "Clk")]);
        assert!(parse_stimulus("1 a\n0 b\n").is_err());
    }

    prop_compose! {
        fn arb_fsm()(n_states in 1usize..6, n_in in 1usize..4, n_out in 0usize..3)
            (trans in proptest::collection::vec(proptest::option::of(0..n_states), n_states * n_in),
             rules in proptest::collection::vec(0..(n_states * n_in * n_out.max(1)), 0..6),
             n_states in Just(n_states), n_in in Just(n_in), n_out in Just(n_out))
            -> FiniteStateMachine
        {
            let mut transitions = BTreeMap::new();
            for (i, t) in trans.into_iter().enumerate() {
                if let Some(t) = t {
                    transitions.insert((i / n_in, i % n_in), t);
                }
            }
            let mut output_rules = BTreeSet::new();
            if n_out > 0 {
                for r in rules {
                    output_rules.insert((r / (n_in * n_out), r / n_out % n_in, r % n_out));
                }
            }
            FiniteStateMachine {
                name: "rand".into(),
                inputs: (0..n_in).map(|i| format!("i{i}")).collect(),
                outputs: (0..n_out).map(|i| format!("o{i}")).collect(),
                states: (0..n_states).map(|i| format!("s{i}")).collect(),
                initial: 0,
                transitions,
                output_rules,
            }
        }
    }

    proptest! {
        #[test]
        fn serialize_roundtrip(m in arb_fsm()) {
            let text = m.serialize();
            prop_assert_eq!(FiniteStateMachine::parse(&text).unwrap(), m);
        }

        #[test]
        fn missing_entries_hold(m in arb_fsm(), s in 0usize..6, f in 0usize..4) {
            let s = s % m.states.len();
            let f = f % m.inputs.len();
            let (next, _) = m.step(s, f);
            if !m.transitions.contains_key(&(s, f)) {
                prop_assert_eq!(next, s);
            }
        }

        #[test]
        fn run_is_deterministic(m in arb_fsm(), seq in proptest::collection::vec(0usize..4, 0..10)) {
            let stim: Vec<_> = seq.iter().enumerate()
                .map(|(t, &f)| PulseEvent::new(t as u64, m.inputs[f % m.inputs.len()].clone()))
                .collect();
            prop_assert_eq!(m.run(&stim).unwrap(), m.run(&stim).unwrap());
        }
    }
}
