// SPDX-License-Identifier: Apache-2.0
//! Effect marking: turns per-bit expressions into storage components with
//! typed ports, plus the intermediate nets that feed guarded ports.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use super::OptResultTable;
use crate::bdd::{Cube, NodeId, Sop};

/// What a pulse on a port does to a one-bit storage loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Effect {
    Set,
    Clear,
    Toggle,
    Out,
    Nout,
}

impl Effect {
    pub const ALL: [Effect; 5] = [Effect::Set, Effect::Clear, Effect::Toggle, Effect::Out, Effect::Nout];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Effect::Set => "set",
            Effect::Clear => "clear",
            Effect::Toggle => "toggle",
            Effect::Out => "out",
            Effect::Nout => "nout",
        }
    }

    pub fn from_name(name: &str) -> Option<Effect> {
        Effect::ALL.into_iter().find(|e| e.name() == name)
    }
}

/// Set of [`Effect`]s on one port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct EffectSet(u8);

impl EffectSet {
    pub const EMPTY: EffectSet = EffectSet(0);

    pub fn of(effects: &[Effect]) -> Self {
        effects.iter().fold(EffectSet::EMPTY, |s, &e| s.with(e))
    }

    pub fn with(self, e: Effect) -> Self {
        EffectSet(self.0 | e.bit())
    }

    pub fn insert(&mut self, e: Effect) {
        self.0 |= e.bit();
    }

    pub fn contains(self, e: Effect) -> bool {
        self.0 & e.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Effect> {
        Effect::ALL.into_iter().filter(move |&e| self.contains(e))
    }

    /// Whether the effects can change the stored bit.
    pub fn changes_state(self) -> bool {
        self.contains(Effect::Set) || self.contains(Effect::Clear) || self.contains(Effect::Toggle)
    }

    /// Same set with the read effects removed.
    pub fn without_reads(self) -> Self {
        EffectSet(self.0 & !(Effect::Out.bit() | Effect::Nout.bit()))
    }

    /// `self` is `other` plus read effects only.
    pub fn extends_with_reads(self, other: EffectSet) -> bool {
        self.without_reads() == other.without_reads() && self.0 & other.0 == other.0
    }

    /// Standard port type id, for the sets that have one.
    pub fn type_id(self) -> Option<u8> {
        use Effect::*;
        let table: [(&[Effect], u8); 7] = [
            (&[Set], 0),
            (&[Clear], 1),
            (&[Toggle], 2),
            (&[Out], 3),
            (&[Out, Clear], 4),
            (&[Nout, Clear], 5),
            (&[Out, Nout, Clear], 6),
        ];
        table
            .iter()
            .find(|(effects, _)| EffectSet::of(effects) == self)
            .map(|&(_, id)| id)
    }

    pub fn from_type_id(id: u8) -> Option<Self> {
        (0..=6u8).contains(&id).then(|| {
            (0..32u8)
                .map(EffectSet)
                .find(|s| s.type_id() == Some(id))
                .expect("every standard type has a set")
        })
    }

    /// Sorting key: standard sets by type id, others after them.
    pub fn sort_key(self) -> u16 {
        self.type_id().map_or(100 + self.0 as u16, u16::from)
    }
}

impl fmt::Display for EffectSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(Effect::name).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetId(pub usize);

/// How a generated net is driven.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetSource {
    /// A primary input.
    Input(usize),
    /// Read of `bit` on its port driven by `via` (`negated` reads the
    /// complement).
    Read { bit: usize, via: NetId, negated: bool },
    /// `Qa·Qb·signal`, realizable only as an AND group.
    Conjunction { bits: [usize; 2], signal: usize },
    /// OR of pulse streams.
    Merge(Vec<NetId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedNet {
    pub id: NetId,
    /// OR of `guard · signal` terms this net pulses for.
    pub terms: Vec<(usize, Cube)>,
    pub source: NetSource,
    pub label: String,
}

impl GeneratedNet {
    pub fn signals(&self) -> BTreeSet<usize> {
        self.terms.iter().map(|t| t.0).collect()
    }

    /// Whether a pulse on `signal` in a state with the given bits fires this net.
    pub fn fires(&self, signal: usize, bits: &dyn Fn(usize) -> bool, opt_width: usize) -> bool {
        self.terms
            .iter()
            .any(|(f, cube)| *f == signal && cube.lits.iter().all(|&(var, pol)| bits(opt_width - 1 - var) == pol))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub net: NetId,
    pub effects: EffectSet,
    /// Net carrying this port's true read-out, if used.
    pub out_net: Option<NetId>,
    /// Net carrying this port's complementary read-out, if used.
    pub nout_net: Option<NetId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedComponent {
    pub bit: usize,
    pub ports: Vec<Port>,
    /// Index into [`Marking::groups`] when absorbed by an AND group.
    pub group: Option<usize>,
}

impl MarkedComponent {
    /// Effect sets of the ports, sorted.
    pub fn signature(&self) -> Vec<EffectSet> {
        let mut sig: Vec<EffectSet> = self.ports.iter().map(|p| p.effects).collect();
        sig.sort_by_key(|e| e.sort_key());
        sig
    }

    /// Sorted standard type ids, if every port has one.
    pub fn type_ids(&self) -> Option<Vec<u8>> {
        let mut ids = self
            .ports
            .iter()
            .map(|p| p.effects.type_id())
            .collect::<Option<Vec<u8>>>()?;
        ids.sort_unstable();
        Some(ids)
    }
}

/// Multi-bit structure recognized after marking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Group {
    /// Two set-only bits cleared by `signal`, read together: an AND cell.
    And {
        bits: [usize; 2],
        signal: usize,
        net: NetId,
    },
    /// Several read terms OR-ed onto one net: confluence buffers.
    OrMerge { net: NetId, inputs: Vec<NetId> },
}

/// Marked decomposition of one encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marking {
    pub width: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub nets: Vec<GeneratedNet>,
    /// One component per state bit, `components[b].bit == b`.
    pub components: Vec<MarkedComponent>,
    pub output_nets: Vec<Option<NetId>>,
    pub groups: Vec<Group>,
}

impl Marking {
    pub fn net(&self, id: NetId) -> &GeneratedNet {
        &self.nets[id.0]
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("`{expression}` for {target} matches no storage pattern ({reason})")]
pub struct UnmappablePattern {
    pub target: String,
    pub expression: String,
    pub reason: String,
}

enum Pattern {
    Hold,
    Clear,
    Set,
    SetNet(Sop),
    ToggleNet(Sop),
    ClearSetNet(Sop),
}

struct Builder<'a> {
    opt: &'a mut OptResultTable,
    nets: Vec<GeneratedNet>,
    sources: Vec<Option<NetSource>>,
    memo: HashMap<Vec<(usize, Cube)>, NetId>,
    components: Vec<MarkedComponent>,
}

impl Builder<'_> {
    fn cube_label(&self, signal: usize, cube: &Cube) -> String {
        let mut parts: Vec<String> = cube
            .lits
            .iter()
            .map(|&(v, p)| {
                let name = self.opt.var_name(v);
                if p {
                    name.to_string()
                } else {
                    format!("!{name}")
                }
            })
            .collect();
        parts.push(self.opt.inputs[signal].clone());
        parts.join("·")
    }

    fn new_net(&mut self, terms: Vec<(usize, Cube)>, label: String, source: Option<NetSource>) -> NetId {
        let id = NetId(self.nets.len());
        self.nets.push(GeneratedNet {
            id,
            terms: terms.clone(),
            source: NetSource::Input(usize::MAX),
            label,
        });
        self.sources.push(source);
        self.memo.insert(terms, id);
        id
    }

    fn term_net(&mut self, signal: usize, cube: Cube) -> NetId {
        if cube.lits.is_empty() {
            return NetId(signal);
        }
        let key = vec![(signal, cube.clone())];
        if let Some(&id) = self.memo.get(&key) {
            return id;
        }
        let label = self.cube_label(signal, &cube);
        self.new_net(key, label, None)
    }

    fn net_for(&mut self, mut terms: Vec<(usize, Cube)>) -> NetId {
        terms.sort();
        terms.dedup();
        if terms.len() == 1 {
            let (f, c) = terms.pop().unwrap();
            return self.term_net(f, c);
        }
        if let Some(&id) = self.memo.get(&terms) {
            return id;
        }
        let inputs: Vec<NetId> = terms.iter().map(|(f, c)| self.term_net(*f, c.clone())).collect();
        let label = terms
            .iter()
            .map(|(f, c)| self.cube_label(*f, c))
            .collect::<Vec<_>>()
            .join(" + ");
        self.new_net(terms, label, Some(NetSource::Merge(inputs)))
    }

    fn port(&mut self, bit: usize, net: NetId) -> &mut Port {
        let comp = &mut self.components[bit];
        let idx = match comp.ports.iter().position(|p| p.net == net) {
            Some(i) => i,
            None => {
                comp.ports.push(Port {
                    net,
                    effects: EffectSet::EMPTY,
                    out_net: None,
                    nout_net: None,
                });
                comp.ports.len() - 1
            }
        };
        &mut comp.ports[idx]
    }

    fn classify(&mut self, bit: usize, signal: usize) -> Pattern {
        let opt = &mut *self.opt;
        let mut g = opt.next[&(bit, signal)];
        for f in 0..opt.inputs.len() {
            g = opt.bdd.restrict(g, opt.input_var(f), f == signal);
        }
        let qvar = opt.state_var(bit);
        let q = opt.bdd.var(qvar);
        if g == q {
            return Pattern::Hold;
        }
        if g == NodeId::FALSE {
            return Pattern::Clear;
        }
        if g == NodeId::TRUE {
            return Pattern::Set;
        }
        let g1 = opt.bdd.restrict(g, qvar, true);
        let g0 = opt.bdd.restrict(g, qvar, false);
        if g1 == NodeId::TRUE {
            return Pattern::SetNet(opt.bdd.to_min_sop(g0));
        }
        if g1 == opt.bdd.not(g0) {
            return Pattern::ToggleNet(opt.bdd.to_min_sop(g0));
        }
        Pattern::ClearSetNet(opt.bdd.to_min_sop(g))
    }

    fn unmappable(&mut self, target: String, f: NodeId, reason: &str) -> UnmappablePattern {
        UnmappablePattern {
            target,
            expression: self.opt.render(f),
            reason: reason.into(),
        }
    }

    fn net_signals(&self, net: NetId) -> BTreeSet<usize> {
        self.nets[net.0].signals()
    }

    /// A bit can be read on the port driven by `via` when no other port
    /// reacting to `signal` changes it, so the read sees the pre-pulse value.
    fn chain_readable(&self, bit: usize, via: NetId, signal: usize) -> bool {
        let comp = &self.components[bit];
        comp.ports.iter().any(|p| p.net == via)
            && comp
                .ports
                .iter()
                .all(|p| p.net == via || !p.effects.changes_state() || !self.net_signals(p.net).contains(&signal))
    }

    fn resolve_term(&mut self, id: NetId) -> Result<NetSource, UnmappablePattern> {
        let (signal, cube) = self.nets[id.0].terms[0].clone();
        let width = self.opt.width;
        let bit_of = |var: usize| width - 1 - var;
        if let [(var, pol)] = cube.lits[..] {
            let port = self.port(bit_of(var), NetId(signal));
            if pol {
                port.effects.insert(Effect::Out);
                port.out_net = Some(id);
            } else {
                port.effects.insert(Effect::Nout);
                port.nout_net = Some(id);
            }
            return Ok(NetSource::Read {
                bit: bit_of(var),
                via: NetId(signal),
                negated: !pol,
            });
        }
        for &(var, pol) in &cube.lits {
            if !pol {
                continue;
            }
            let rest = vec![(signal, cube.without(var))];
            let Some(&via) = self.memo.get(&rest) else {
                continue;
            };
            let bit = bit_of(var);
            if self.chain_readable(bit, via, signal) {
                let port = self.port(bit, via);
                port.effects.insert(Effect::Out);
                port.out_net = Some(id);
                return Ok(NetSource::Read {
                    bit,
                    via,
                    negated: false,
                });
            }
        }
        if let [(a, true), (b, true)] = cube.lits[..] {
            return Ok(NetSource::Conjunction {
                bits: [bit_of(a), bit_of(b)],
                signal,
            });
        }
        let label = self.nets[id.0].label.clone();
        let f = self.opt.bdd.from_sop(&Sop { cubes: vec![cube] });
        let mut err = self.unmappable(format!("net {label}"), f, "guard needs a multi-input read");
        err.expression = label;
        Err(err)
    }
}

/// Marks every `(bit, signal)` effect and the nets that realize guarded
/// effects and outputs.
pub fn mark_effects(opt: &mut OptResultTable) -> Result<Marking, UnmappablePattern> {
    let width = opt.width;
    let inputs = opt.inputs.clone();
    let mut b = Builder {
        opt,
        nets: Vec::new(),
        sources: Vec::new(),
        memo: HashMap::new(),
        components: (0..width)
            .map(|bit| MarkedComponent {
                bit,
                ports: Vec::new(),
                group: None,
            })
            .collect(),
    };
    for (f, name) in inputs.iter().enumerate() {
        b.new_net(vec![(f, Cube::default())], name.clone(), Some(NetSource::Input(f)));
    }

    for bit in 0..width {
        for (f, signal) in inputs.iter().enumerate() {
            let terms = |sop: &Sop| sop.cubes.iter().map(|c| (f, c.clone())).collect::<Vec<_>>();
            match b.classify(bit, f) {
                Pattern::Hold => {}
                Pattern::Clear => b.port(bit, NetId(f)).effects.insert(Effect::Clear),
                Pattern::Set => b.port(bit, NetId(f)).effects.insert(Effect::Set),
                Pattern::SetNet(g) => {
                    let net = b.net_for(terms(&g));
                    b.port(bit, net).effects.insert(Effect::Set);
                }
                Pattern::ToggleNet(g) => {
                    let overlapping = g
                        .cubes
                        .iter()
                        .enumerate()
                        .any(|(i, x)| g.cubes[i + 1..].iter().any(|y| !x.disjoint(y)));
                    if overlapping {
                        let e = b.opt.next[&(bit, f)];
                        let target = format!("{}* under {}", b.opt.var_name(b.opt.state_var(bit)), signal);
                        return Err(b.unmappable(target, e, "toggle guard terms overlap"));
                    }
                    let net = b.net_for(terms(&g));
                    b.port(bit, net).effects.insert(Effect::Toggle);
                }
                Pattern::ClearSetNet(g) => {
                    b.port(bit, NetId(f)).effects.insert(Effect::Clear);
                    let net = b.net_for(terms(&g));
                    b.port(bit, net).effects.insert(Effect::Set);
                }
            }
        }
    }

    let mut output_nets = Vec::new();
    for o in 0..b.opt.outputs.len() {
        let mut all = Vec::new();
        for f in 0..inputs.len() {
            let mut h = b.opt.output_exprs[o];
            for g in 0..inputs.len() {
                h = b.opt.bdd.restrict(h, b.opt.input_var(g), g == f);
            }
            let sop = b.opt.bdd.to_min_sop(h);
            all.extend(sop.cubes.into_iter().map(|c| (f, c)));
        }
        output_nets.push((!all.is_empty()).then(|| b.net_for(all)));
    }

    let mut pending: Vec<NetId> = (0..b.nets.len())
        .filter(|&i| b.sources[i].is_none())
        .map(NetId)
        .collect();
    pending.sort_by_key(|id| (b.nets[id.0].terms[0].1.literal_count(), *id));
    for id in pending {
        let source = b.resolve_term(id)?;
        b.sources[id.0] = Some(source);
    }

    let Builder {
        mut nets,
        sources,
        mut components,
        ..
    } = b;
    for (net, source) in nets.iter_mut().zip(sources) {
        net.source = source.expect("all nets resolved");
    }
    for comp in &mut components {
        comp.ports.sort_by_key(|p| p.net);
    }
    Ok(Marking {
        width,
        inputs,
        outputs: opt.outputs.clone(),
        nets,
        components,
        output_nets,
        groups: Vec::new(),
    })
}

/// Annotates AND groups and OR merges. Components are otherwise unchanged.
pub fn recognize_groups(mut marking: Marking) -> Marking {
    let mut groups = Vec::new();
    for net in &marking.nets {
        match &net.source {
            NetSource::Conjunction { bits, signal } => {
                let storage_only = |bit: usize| {
                    let comp = &marking.components[bit];
                    comp.group.is_none()
                        && comp.ports.len() == 2
                        && comp.ports.iter().all(|p| p.out_net.is_none() && p.nout_net.is_none())
                        && comp
                            .ports
                            .iter()
                            .any(|p| p.net == NetId(*signal) && p.effects == EffectSet::of(&[Effect::Clear]))
                        && comp
                            .ports
                            .iter()
                            .any(|p| p.net != NetId(*signal) && p.effects == EffectSet::of(&[Effect::Set]))
                };
                if bits[0] != bits[1] && storage_only(bits[0]) && storage_only(bits[1]) {
                    let idx = groups.len();
                    groups.push(Group::And {
                        bits: *bits,
                        signal: *signal,
                        net: net.id,
                    });
                    marking.components[bits[0]].group = Some(idx);
                    marking.components[bits[1]].group = Some(idx);
                }
            }
            NetSource::Merge(inputs) => groups.push(Group::OrMerge {
                net: net.id,
                inputs: inputs.clone(),
            }),
            _ => {}
        }
    }
    marking.groups = groups;
    marking
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{extract_tables, per_bit_expressions};
    use crate::encoding::StateEncoding;
    use crate::fsm::FiniteStateMachine;

    fn marked(text: &str) -> (OptResultTable, Marking) {
        let m = FiniteStateMachine::parse(text).unwrap();
        let enc = StateEncoding::binary(m.states.len());
        let (t, o) = extract_tables(&m, &enc);
        let mut opt = per_bit_expressions(&t, &o);
        let marking = recognize_groups(mark_effects(&mut opt).unwrap());
        (opt, marking)
    }

    fn port_summary(m: &Marking, bit: usize) -> Vec<(String, String)> {
        m.components[bit]
            .ports
            .iter()
            .map(|p| (m.net(p.net).label.clone(), p.effects.to_string()))
            .collect()
    }

    #[test]
    fn type_ids() {
        assert_eq!(EffectSet::of(&[Effect::Set]).type_id(), Some(0));
        assert_eq!(EffectSet::of(&[Effect::Clear, Effect::Out]).type_id(), Some(4));
        assert_eq!(
            EffectSet::of(&[Effect::Out, Effect::Nout, Effect::Clear]).type_id(),
            Some(6)
        );
        assert_eq!(EffectSet::of(&[Effect::Toggle, Effect::Out]).type_id(), None);
        for id in 0..=6 {
            assert_eq!(EffectSet::from_type_id(id).unwrap().type_id(), Some(id));
        }
    }

    #[test]
    fn erdff_markers() {
        let (_, m) = marked(include_str!("../../data/fsm/erdff.fsm"));
        assert_eq!(
            port_summary(&m, 1),
            vec![
                ("En".into(), "{clear}".into()),
                ("Clk".into(), "{out}".into()),
                ("Q0·En".into(), "{set}".into()),
            ]
        );
        assert_eq!(
            port_summary(&m, 0),
            vec![
                ("Din".into(), "{set}".into()),
                ("Rst".into(), "{clear}".into()),
                ("En".into(), "{clear,out}".into()),
            ]
        );
        assert_eq!(m.components[1].type_ids(), Some(vec![0, 1, 3]));
        assert_eq!(m.components[0].type_ids(), Some(vec![0, 1, 4]));
        assert!(m.groups.is_empty());
    }

    #[test]
    fn counter_toggle_adds_read() {
        let (_, m) = marked(include_str!("../../data/fsm/counter2.fsm"));
        let q0 = port_summary(&m, 0);
        assert!(q0.contains(&("Din".into(), "{toggle,out}".into())));
        assert!(q0.contains(&("Rst".into(), "{clear}".into())));
        assert!(q0.contains(&("Clk".into(), "{out}".into())));
        let q1 = port_summary(&m, 1);
        assert!(q1.contains(&("Q0·Din".into(), "{toggle}".into())));
    }

    #[test]
    fn counter4_chains_reads_through_toggle_nets() {
        let m = FiniteStateMachine::up_counter(4);
        let (t, o) = extract_tables(&m, &StateEncoding::binary(16));
        let mut opt = per_bit_expressions(&t, &o);
        let marking = mark_effects(&mut opt).unwrap();
        for bit in 1..4 {
            let comp = &marking.components[bit];
            let toggle = comp.ports.iter().find(|p| p.effects.contains(Effect::Toggle)).unwrap();
            assert_eq!(toggle.out_net.is_some(), bit < 3);
        }
    }

    #[test]
    fn feedback_groups() {
        let (_, m) = marked(include_str!("../../data/fsm/feedback.fsm"));
        let ands: Vec<_> = m.groups.iter().filter(|g| matches!(g, Group::And { .. })).collect();
        let ors: Vec<_> = m.groups.iter().filter(|g| matches!(g, Group::OrMerge { .. })).collect();
        assert_eq!(ands.len(), 1);
        assert_eq!(ors.len(), 1);
        if let Group::And { bits, .. } = ands[0] {
            assert_eq!(bits, &[2, 0]);
        }
        // Q2 is set by the output net itself.
        let out = m.output_nets[0].unwrap();
        assert!(m.components[2]
            .ports
            .iter()
            .any(|p| p.net == out && p.effects == EffectSet::of(&[Effect::Set])));
    }

    #[test]
    fn single_term_output_has_no_group() {
        let (_, m) = marked(include_str!("../../data/fsm/erdff.fsm"));
        assert!(!m.groups.iter().any(|g| matches!(g, Group::OrMerge { .. })));
    }

    #[test]
    fn two_and_groups_and_a_merge() {
        // Out = (Q3·Q2 + Q1·Q0)·Clk; a..d set one bit each, Clk clears all.
        let mut text = String::from(".inputs a b c d Clk\n.outputs Out\n.states");
        for k in 0..16 {
            text.push_str(&format!(" S{k}"));
        }
        text.push('\n');
        for k in 0..16u32 {
            for (i, sig) in ["a", "b", "c", "d"].iter().enumerate() {
                let n = k | 1 << i;
                if n != k {
                    text.push_str(&format!(".trans S{k} {sig} S{n}\n"));
                }
            }
            if k != 0 {
                text.push_str(&format!(".trans S{k} Clk S0\n"));
            }
            if k & 0b1100 == 0b1100 || k & 0b0011 == 0b0011 {
                text.push_str(&format!(".out S{k} Clk Out\n"));
            }
        }
        let (_, m) = marked(&text);
        let ands = m.groups.iter().filter(|g| matches!(g, Group::And { .. })).count();
        let ors = m.groups.iter().filter(|g| matches!(g, Group::OrMerge { .. })).count();
        assert_eq!((ands, ors), (2, 1));
    }

    /// Replays each component's ports as a one-bit machine and compares with
    /// its per-bit expressions on every state assignment.
    fn assert_sound(opt: &OptResultTable, m: &Marking) {
        let w = opt.width;
        for code in 0..1u64 << w {
            let bits = |b: usize| code >> b & 1 == 1;
            for f in 0..opt.inputs.len() {
                let expected = opt.apply(code, f);
                for comp in &m.components {
                    let mut v = bits(comp.bit);
                    let mut ports: Vec<&Port> = comp.ports.iter().collect();
                    ports.sort_by_key(|p| m.net(p.net).terms.iter().map(|t| t.1.literal_count()).max());
                    for p in ports {
                        if !m.net(p.net).fires(f, &bits, w) {
                            continue;
                        }
                        for e in p.effects.iter() {
                            match e {
                                Effect::Set => v = true,
                                Effect::Clear => v = false,
                                Effect::Toggle => v = !v,
                                Effect::Out | Effect::Nout => {}
                            }
                        }
                    }
                    assert_eq!(
                        v,
                        expected >> comp.bit & 1 == 1,
                        "bit {} code {code:b} signal {f}",
                        comp.bit
                    );
                }
            }
        }
    }

    #[test]
    fn effects_replay_expressions() {
        for text in [
            include_str!("../../data/fsm/erdff.fsm"),
            include_str!("../../data/fsm/counter2.fsm"),
        ] {
            let (opt, m) = marked(text);
            assert_sound(&opt, &m);
        }
    }

    #[test]
    fn random_markings_are_sound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let mut marked_ok = 0;
        for _ in 0..200 {
            let states = rng.gen_range(1..=6);
            let (ni, no) = (rng.gen_range(1..=3), rng.gen_range(0..=2));
            let m = crate::decomposition::tests::random_fsm(&mut rng, states, ni, no);
            let (t, o) = extract_tables(&m, &StateEncoding::binary(states));
            let mut opt = per_bit_expressions(&t, &o);
            if let Ok(marking) = mark_effects(&mut opt) {
                marked_ok += 1;
                assert_sound(&opt, &marking);
            }
        }
        assert!(marked_ok > 20, "only {marked_ok} marked");
    }

    #[test]
    fn marking_is_deterministic() {
        let (_, a) = marked(include_str!("../../data/fsm/feedback.fsm"));
        let (_, b) = marked(include_str!("../../data/fsm/feedback.fsm"));
        assert_eq!(a, b);
    }
}
