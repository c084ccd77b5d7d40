// SPDX-License-Identifier: Apache-2.0
//! Technology mapping of marked components onto PDK cells.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::netlist::{Instance, Netlist};
use super::pdk::{CellKind, CellPort, Pdk};
use crate::decomposition::{Effect, EffectSet, Group, MarkedComponent, Marking, NetId, NetSource, Port};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unmapped {
    /// What failed, e.g. `Q1` or a net label.
    pub target: String,
    pub signature: Vec<EffectSet>,
    pub reason: String,
}

impl fmt::Display for Unmapped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig: Vec<String> = self.signature.iter().map(|e| e.to_string()).collect();
        write!(f, "{} ({}): {}", self.target, sig.join(" "), self.reason)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct MappingFailure {
    pub unmapped: Vec<Unmapped>,
}

impl fmt::Display for MappingFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.unmapped.iter().map(|u| u.to_string()).collect();
        write!(f, "unmapped: {}", parts.join("; "))
    }
}

/// Assigns component ports to library ports. With `relaxed`, a library
/// port may carry read effects the component does not use; those read pins
/// are left dangling.
fn assign_ports<'p>(comp: &[Port], lib: &'p [CellPort], relaxed: bool) -> Option<Vec<&'p CellPort>> {
    fn fits(c: &Port, l: &CellPort, relaxed: bool) -> bool {
        if relaxed {
            l.effects.extends_with_reads(c.effects)
        } else {
            l.effects == c.effects
        }
    }
    fn go<'p>(
        comp: &[Port],
        lib: &'p [CellPort],
        relaxed: bool,
        used: &mut Vec<bool>,
        out: &mut Vec<&'p CellPort>,
        pins: &mut BTreeMap<&'p str, NetId>,
    ) -> bool {
        let k = out.len();
        if k == comp.len() {
            return true;
        }
        let c = &comp[k];
        for (i, l) in lib.iter().enumerate() {
            if used[i] || !fits(c, l, relaxed) {
                continue;
            }
            // Read pins shared by several ports must carry the same net.
            let mut added = Vec::new();
            let mut ok = true;
            for (pin, net) in [(&l.out_pin, c.out_net), (&l.nout_pin, c.nout_net)] {
                if let (Some(pin), Some(net)) = (pin, net) {
                    match pins.get(pin.as_str()) {
                        Some(&bound) if bound != net => ok = false,
                        Some(_) => {}
                        None => {
                            pins.insert(pin, net);
                            added.push(pin.as_str());
                        }
                    }
                }
            }
            if ok {
                used[i] = true;
                out.push(l);
                if go(comp, lib, relaxed, used, out, pins) {
                    return true;
                }
                out.pop();
                used[i] = false;
            }
            for pin in added {
                pins.remove(pin);
            }
        }
        false
    }
    if comp.len() != lib.len() {
        return None;
    }
    let mut out = Vec::new();
    let ok = go(
        comp,
        lib,
        relaxed,
        &mut vec![false; lib.len()],
        &mut out,
        &mut BTreeMap::new(),
    );
    ok.then_some(out)
}

fn sanitize(label: &str) -> String {
    let mut s = String::new();
    for ch in label.chars() {
        match ch {
            c if c.is_ascii_alphanumeric() || c == '_' => s.push(c),
            '!' => s.push('n'),
            '+' => s.push_str("_or_"),
            ' ' => {}
            _ => s.push('_'),
        }
    }
    s
}

struct Builder<'a> {
    marking: &'a Marking,
    pdk: &'a Pdk,
    netlist: Netlist,
    net_name: Vec<Option<String>>,
    taken: BTreeSet<String>,
    failures: Vec<Unmapped>,
}

impl Builder<'_> {
    fn fresh(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut k = 1;
        while self.taken.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        self.taken.insert(name.clone());
        self.netlist.nets.push(name.clone());
        name
    }

    fn net(&mut self, id: NetId) -> String {
        if let Some(n) = &self.net_name[id.0] {
            return n.clone();
        }
        let base = format!("w_{}", sanitize(&self.marking.net(id).label));
        let name = self.fresh(&base);
        self.net_name[id.0] = Some(name.clone());
        name
    }

    fn fail(&mut self, target: String, signature: Vec<EffectSet>, reason: &str) {
        self.failures.push(Unmapped {
            target,
            signature,
            reason: reason.to_string(),
        });
    }

    fn push(&mut self, name: String, cell: &str, pins: BTreeMap<String, String>) {
        self.netlist.instances.push(Instance {
            name,
            cell: cell.to_string(),
            pins,
        });
    }

    /// Formal pin to actual net for a component bound to library ports.
    fn bind(&mut self, comp: &MarkedComponent, lib: &[&CellPort]) -> BTreeMap<String, String> {
        let mut pins = BTreeMap::new();
        for (p, l) in comp.ports.iter().zip(lib) {
            pins.insert(l.name.clone(), self.net(p.net));
            for (pin, net) in [(&l.out_pin, p.out_net), (&l.nout_pin, p.nout_net)] {
                if let (Some(pin), Some(net)) = (pin, net) {
                    let net = self.net(net);
                    pins.insert(pin.clone(), net);
                }
            }
        }
        pins
    }

    fn map_component(&mut self, comp: &MarkedComponent) {
        let sig = comp.signature();
        let prefix = format!("u_q{}", comp.bit);
        let pdk = self.pdk;
        for relaxed in [false, true] {
            let cells: Vec<_> = if relaxed {
                pdk.cells_of_kind(CellKind::Storage)
            } else {
                pdk.lookup_cell(&sig).into_iter().collect()
            };
            for cell in cells {
                if let Some(lib) = assign_ports(&comp.ports, &cell.ports, relaxed) {
                    let mut pins = self.bind(comp, &lib);
                    for out in &cell.outputs {
                        if !pins.contains_key(out) {
                            let net = self.fresh(&format!("{prefix}_{out}"));
                            pins.insert(out.clone(), net);
                        }
                    }
                    self.push(prefix, &cell.name, pins);
                    return;
                }
            }
            let gates: Vec<_> = if relaxed {
                pdk.supergates.iter().collect()
            } else {
                pdk.lookup_supergate(&sig).into_iter().collect()
            };
            for sg in gates {
                if let Some(lib) = assign_ports(&comp.ports, &sg.ports, relaxed) {
                    let formal = self.bind(comp, &lib);
                    let mut internal = BTreeMap::new();
                    for inst in &sg.body {
                        let mut pins = BTreeMap::new();
                        for (pin, net) in &inst.pins {
                            let actual = match formal.get(net) {
                                Some(a) => a.clone(),
                                None => internal
                                    .entry(net.clone())
                                    .or_insert_with(|| self.fresh(&format!("{prefix}_{net}")))
                                    .clone(),
                            };
                            pins.insert(pin.clone(), actual);
                        }
                        self.push(format!("{prefix}_{}", inst.name), &inst.cell, pins);
                    }
                    *self.netlist.metadata.supergates.entry(sg.name.clone()).or_insert(0) += 1;
                    return;
                }
            }
        }
        self.fail(format!("Q{}", comp.bit), sig, "no cell or supergate with these ports");
    }

    fn map_and(&mut self, k: usize, bits: [usize; 2], signal: usize, net: NetId) {
        let Some(cell) = self.pdk.and_cell(2) else {
            self.fail(
                format!("Q{}&Q{}", bits[0], bits[1]),
                Vec::new(),
                "PDK has no two-input AND cell",
            );
            return;
        };
        let set_only = EffectSet::of(&[Effect::Set]);
        let set_pins: Vec<&CellPort> = cell.ports.iter().filter(|p| p.effects == set_only).collect();
        let clk = cell
            .ports
            .iter()
            .find(|p| p.out_pin.is_some())
            .expect("validated AND cell");
        let mut pins = BTreeMap::new();
        for (bit, lib) in bits.iter().zip(&set_pins) {
            let comp = &self.marking.components[*bit];
            let set = comp
                .ports
                .iter()
                .find(|p| p.effects == set_only)
                .expect("grouped bit has a set port");
            pins.insert(lib.name.clone(), self.net(set.net));
        }
        pins.insert(clk.name.clone(), self.net(NetId(signal)));
        pins.insert(clk.out_pin.clone().expect("clock reads"), self.net(net));
        self.push(format!("u_and{k}"), &cell.name, pins);
    }

    fn map_merge(&mut self, k: usize, net: NetId, inputs: &[NetId]) {
        let Some(cell) = self.pdk.merge_cell(2) else {
            let label = self.marking.net(net).label.clone();
            self.fail(label, Vec::new(), "PDK has no two-input merge cell");
            return;
        };
        let (a, b, q) = (
            cell.ports[0].name.clone(),
            cell.ports[1].name.clone(),
            cell.outputs[0].clone(),
        );
        let cell = cell.name.clone();
        let target = self.net(net);
        let mut sources: Vec<String> = inputs.iter().map(|&i| self.net(i)).collect();
        let mut count = 0;
        // Balanced tree: combine neighbours level by level.
        while sources.len() > 1 {
            let mut next = Vec::new();
            let pairs = sources.len() / 2;
            for i in 0..pairs {
                let out = if sources.len() == 2 {
                    target.clone()
                } else {
                    self.fresh(&format!("{target}_m{count}"))
                };
                let pins = BTreeMap::from([
                    (a.clone(), sources[2 * i].clone()),
                    (b.clone(), sources[2 * i + 1].clone()),
                    (q.clone(), out.clone()),
                ]);
                self.push(format!("u_cb{k}_{count}"), &cell, pins);
                count += 1;
                next.push(out);
            }
            if sources.len() % 2 == 1 {
                next.push(sources.last().unwrap().clone());
            }
            sources = next;
        }
    }
}

/// Maps every component, group and output of `marking`. Nets named after
/// primary inputs and outputs become the netlist's ports.
pub fn map_components(marking: &Marking, pdk: &Pdk, name: &str) -> Result<Netlist, MappingFailure> {
    let mut netlist = Netlist::new(name);
    netlist.inputs = marking.inputs.clone();
    netlist.outputs = marking.outputs.clone();
    let mut b = Builder {
        marking,
        pdk,
        net_name: vec![None; marking.nets.len()],
        taken: marking.inputs.iter().chain(&marking.outputs).cloned().collect(),
        netlist,
        failures: Vec::new(),
    };
    for (f, input) in marking.inputs.iter().enumerate() {
        b.net_name[f] = Some(input.clone());
    }
    let mut copies = Vec::new();
    for (o, net) in marking.output_nets.iter().enumerate() {
        let Some(net) = *net else { continue };
        let claimed = b.net_name[net.0].is_some();
        if claimed {
            copies.push((o, net));
        } else {
            b.net_name[net.0] = Some(marking.outputs[o].clone());
        }
    }

    for comp in &marking.components {
        if comp.group.is_none() && !comp.ports.is_empty() {
            b.map_component(comp);
        }
    }
    let mut grouped = BTreeSet::new();
    let (mut ands, mut merges) = (0, 0);
    for g in &marking.groups {
        match g {
            Group::And { bits, signal, net } => {
                grouped.insert(*net);
                b.map_and(ands, *bits, *signal, *net);
                ands += 1;
            }
            Group::OrMerge { net, inputs } => {
                b.map_merge(merges, *net, inputs);
                merges += 1;
            }
        }
    }
    for net in &marking.nets {
        if let NetSource::Conjunction { bits, .. } = net.source {
            if !grouped.contains(&net.id) {
                b.fail(
                    net.label.clone(),
                    Vec::new(),
                    &format!("Q{}·Q{} is not an AND group", bits[0], bits[1]),
                );
            }
        }
    }
    for (k, (o, net)) in copies.into_iter().enumerate() {
        match pdk.merge_cell(1) {
            Some(cell) => {
                let pins = BTreeMap::from([
                    (cell.ports[0].name.clone(), b.net(net)),
                    (cell.outputs[0].clone(), marking.outputs[o].clone()),
                ]);
                let cell = cell.name.clone();
                b.push(format!("u_buf{k}"), &cell, pins);
            }
            None => b.fail(marking.outputs[o].clone(), Vec::new(), "PDK has no one-input buffer"),
        }
    }

    if !b.failures.is_empty() {
        return Err(MappingFailure { unmapped: b.failures });
    }
    let mut netlist = b.netlist;
    netlist.refresh_metadata();
    debug_assert!(netlist.validate().is_ok());
    Ok(netlist)
}
