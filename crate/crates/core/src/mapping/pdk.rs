// SPDX-License-Identifier: Apache-2.0
//! Cell library (PDK) loading and validation.
//!
//! File schema (JSON):
//!
//! ```json
//! {
//!   "name": "sample",
//!   "cells": [
//!     {"name": "NDRO", "kind": "storage", "jj_count": 11, "delay_ps": 7.5, "power_uw": 0.9,
//!      "ports": [{"name": "set", "effects": ["set"], "type_id": 0},
//!                {"name": "reset", "effects": ["clear"], "type_id": 1},
//!                {"name": "clk", "effects": ["out"], "type_id": 3, "out_pin": "q"}],
//!      "outputs": ["q"]}
//!   ],
//!   "supergates": [
//!     {"name": "TCNT", "ports": [...], "outputs": [...],
//!      "body": [{"name": "ff", "cell": "RTFF", "pins": {"t": "t", "q": "carry"}}]}
//!   ]
//! }
//! ```
//!
//! Read effects route to `out_pin` (default `q`) and `nout_pin` (default
//! `qn`). Inside a supergate body, the supergate's port and output pin names
//! are nets.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::netlist::{Instance, Netlist};
use crate::decomposition::{Effect, EffectSet};

/// Shipped example library. Its cost figures are illustrative.
pub const SAMPLE_PDK: &str = include_str!("../../data/sample_pdk.json");

/// Longest port-pulse sequence replayed when checking a supergate body.
const SUPERGATE_CHECK_DEPTH: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdkError {
    #[error("PDK file: {0}")]
    Io(String),
    #[error("PDK JSON: {0}")]
    Json(String),
    #[error("PDK has no cells")]
    NoCells,
    #[error("duplicate cell or supergate `{0}`")]
    DuplicateCell(String),
    #[error("`{cell}`: unknown effect `{effect}`")]
    UnknownEffect { cell: String, effect: String },
    #[error("`{cell}` port `{port}`: type id {declared} does not match effects {effects}")]
    TypeIdMismatch {
        cell: String,
        port: String,
        declared: u8,
        effects: EffectSet,
    },
    #[error("`{cell}`: {reason}")]
    Invalid { cell: String, reason: String },
    #[error("supergate `{supergate}` body uses unknown cell `{cell}`")]
    UnknownCell { supergate: String, cell: String },
    #[error("supergate `{name}` body differs from its port signature on {sequence:?}: expected {expected:?}, got {actual:?}")]
    SupergateMismatch {
        name: String,
        sequence: Vec<String>,
        expected: Vec<String>,
        actual: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    /// One flux-storage loop.
    Storage,
    /// Several set-only loops read together by a clearing clock.
    And,
    /// Confluence: any input pulse appears on the output, at most once per tick.
    Merge,
    /// Fan-out: the input pulse appears on every output.
    Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellPort {
    pub name: String,
    pub effects: EffectSet,
    pub type_id: Option<u8>,
    pub out_pin: Option<String>,
    pub nout_pin: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub kind: CellKind,
    pub ports: Vec<CellPort>,
    pub outputs: Vec<String>,
    pub jj_count: u32,
    pub delay_ps: f64,
    pub power_uw: f64,
}

impl Cell {
    pub fn port(&self, name: &str) -> Option<&CellPort> {
        self.ports.iter().find(|p| p.name == name)
    }

    /// Sorted port effect sets.
    pub fn signature(&self) -> Vec<EffectSet> {
        sorted_signature(self.ports.iter().map(|p| p.effects))
    }

    /// Sorted standard type ids, when every port has one.
    pub fn type_signature(&self) -> Option<Vec<u8>> {
        let mut ids = self.ports.iter().map(|p| p.type_id).collect::<Option<Vec<u8>>>()?;
        ids.sort_unstable();
        Some(ids)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supergate {
    pub name: String,
    pub ports: Vec<CellPort>,
    pub outputs: Vec<String>,
    pub body: Vec<Instance>,
}

impl Supergate {
    pub fn signature(&self) -> Vec<EffectSet> {
        sorted_signature(self.ports.iter().map(|p| p.effects))
    }

    /// The body as a standalone netlist with the formal ports as I/O.
    pub fn body_netlist(&self) -> Netlist {
        let mut n = Netlist::new(&self.name);
        n.inputs = self.ports.iter().map(|p| p.name.clone()).collect();
        n.outputs = self.outputs.clone();
        let external: BTreeSet<&String> = n.inputs.iter().chain(&n.outputs).collect();
        let internal: BTreeSet<String> = self
            .body
            .iter()
            .flat_map(|i| i.pins.values())
            .filter(|net| !external.contains(net))
            .cloned()
            .collect();
        n.nets = internal.into_iter().collect();
        n.instances = self.body.clone();
        n.refresh_metadata();
        n
    }
}

pub fn sorted_signature(sets: impl Iterator<Item = EffectSet>) -> Vec<EffectSet> {
    let mut sig: Vec<EffectSet> = sets.collect();
    sig.sort_by_key(|e| e.sort_key());
    sig
}

#[derive(Debug, Clone)]
pub struct Pdk {
    pub name: String,
    pub cells: Vec<Cell>,
    pub supergates: Vec<Supergate>,
    storage_index: HashMap<Vec<EffectSet>, usize>,
    supergate_index: HashMap<Vec<EffectSet>, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPort {
    name: String,
    #[serde(default)]
    effects: Vec<String>,
    #[serde(default)]
    type_id: Option<u8>,
    #[serde(default)]
    out_pin: Option<String>,
    #[serde(default)]
    nout_pin: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    name: String,
    kind: CellKind,
    ports: Vec<RawPort>,
    outputs: Vec<String>,
    jj_count: u32,
    delay_ps: f64,
    power_uw: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSupergate {
    name: String,
    ports: Vec<RawPort>,
    outputs: Vec<String>,
    body: Vec<Instance>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPdk {
    name: String,
    cells: Vec<RawCell>,
    #[serde(default)]
    supergates: Vec<RawSupergate>,
}

fn convert_port(owner: &str, raw: RawPort) -> Result<CellPort, PdkError> {
    let mut effects = EffectSet::EMPTY;
    for e in &raw.effects {
        let effect = Effect::from_name(e).ok_or_else(|| PdkError::UnknownEffect {
            cell: owner.to_string(),
            effect: e.clone(),
        })?;
        effects.insert(effect);
    }
    if let Some(declared) = raw.type_id {
        if effects.type_id() != Some(declared) {
            return Err(PdkError::TypeIdMismatch {
                cell: owner.to_string(),
                port: raw.name,
                declared,
                effects,
            });
        }
    }
    let out_pin = effects
        .contains(Effect::Out)
        .then(|| raw.out_pin.clone().unwrap_or_else(|| "q".into()));
    let nout_pin = effects
        .contains(Effect::Nout)
        .then(|| raw.nout_pin.clone().unwrap_or_else(|| "qn".into()));
    Ok(CellPort {
        name: raw.name,
        type_id: effects.type_id(),
        effects,
        out_pin,
        nout_pin,
    })
}

fn invalid(cell: &str, reason: impl Into<String>) -> PdkError {
    PdkError::Invalid {
        cell: cell.to_string(),
        reason: reason.into(),
    }
}

fn check_pins(owner: &str, ports: &[CellPort], outputs: &[String]) -> Result<(), PdkError> {
    if ports.is_empty() {
        return Err(invalid(owner, "no ports"));
    }
    let mut names = BTreeSet::new();
    for n in ports.iter().map(|p| &p.name).chain(outputs) {
        if !names.insert(n) {
            return Err(invalid(owner, format!("pin `{n}` declared twice")));
        }
    }
    for p in ports {
        for pin in p.out_pin.iter().chain(&p.nout_pin) {
            if !outputs.contains(pin) {
                return Err(invalid(
                    owner,
                    format!("port `{}` reads to undeclared pin `{pin}`", p.name),
                ));
            }
        }
    }
    Ok(())
}

fn check_kind(cell: &Cell) -> Result<(), PdkError> {
    let name = &cell.name;
    match cell.kind {
        CellKind::Storage => {
            if cell.ports.iter().all(|p| p.effects.is_empty()) {
                return Err(invalid(name, "storage cell without effects"));
            }
        }
        CellKind::And => {
            let sets = cell
                .ports
                .iter()
                .filter(|p| p.effects == EffectSet::of(&[Effect::Set]))
                .count();
            let clocks = cell
                .ports
                .iter()
                .filter(|p| p.effects == EffectSet::of(&[Effect::Clear, Effect::Out]))
                .count();
            if sets < 2 || clocks != 1 || sets + clocks != cell.ports.len() {
                return Err(invalid(name, "AND cell needs >= 2 set ports and one clear+out clock"));
            }
        }
        CellKind::Merge | CellKind::Split => {
            if cell.ports.iter().any(|p| !p.effects.is_empty()) {
                return Err(invalid(name, "merge/split ports carry no effects"));
            }
            let (ins, outs) = (cell.ports.len(), cell.outputs.len());
            let ok = match cell.kind {
                CellKind::Merge => outs == 1,
                _ => ins == 1 && outs >= 2,
            };
            if !ok {
                return Err(invalid(name, "wrong number of pins"));
            }
        }
    }
    Ok(())
}

impl Pdk {
    pub fn load(text: &str) -> Result<Pdk, PdkError> {
        let raw: RawPdk = serde_json::from_str(text).map_err(|e| PdkError::Json(e.to_string()))?;
        if raw.cells.is_empty() {
            return Err(PdkError::NoCells);
        }
        let mut names = BTreeSet::new();
        let mut cells = Vec::new();
        for rc in raw.cells {
            if !names.insert(rc.name.clone()) {
                return Err(PdkError::DuplicateCell(rc.name));
            }
            let ports = rc
                .ports
                .into_iter()
                .map(|p| convert_port(&rc.name, p))
                .collect::<Result<Vec<_>, _>>()?;
            check_pins(&rc.name, &ports, &rc.outputs)?;
            let cell = Cell {
                name: rc.name,
                kind: rc.kind,
                ports,
                outputs: rc.outputs,
                jj_count: rc.jj_count,
                delay_ps: rc.delay_ps,
                power_uw: rc.power_uw,
            };
            check_kind(&cell)?;
            cells.push(cell);
        }
        let mut supergates = Vec::new();
        for rs in raw.supergates {
            if !names.insert(rs.name.clone()) {
                return Err(PdkError::DuplicateCell(rs.name));
            }
            let ports = rs
                .ports
                .into_iter()
                .map(|p| convert_port(&rs.name, p))
                .collect::<Result<Vec<_>, _>>()?;
            check_pins(&rs.name, &ports, &rs.outputs)?;
            supergates.push(Supergate {
                name: rs.name,
                ports,
                outputs: rs.outputs,
                body: rs.body,
            });
        }

        let mut pdk = Pdk {
            name: raw.name,
            cells,
            supergates,
            storage_index: HashMap::new(),
            supergate_index: HashMap::new(),
        };
        pdk.build_index();
        for sg in &pdk.supergates {
            pdk.check_supergate(sg)?;
        }
        Ok(pdk)
    }

    pub fn load_path(path: &Path) -> Result<Pdk, PdkError> {
        let text = std::fs::read_to_string(path).map_err(|e| PdkError::Io(format!("{}: {e}", path.display())))?;
        Pdk::load(&text)
    }

    pub fn sample() -> Pdk {
        Pdk::load(SAMPLE_PDK).expect("shipped PDK is valid")
    }

    fn build_index(&mut self) {
        let mut order: Vec<usize> = (0..self.cells.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (&self.cells[a], &self.cells[b]);
            (x.jj_count, &x.name).cmp(&(y.jj_count, &y.name))
        });
        for i in order {
            if self.cells[i].kind == CellKind::Storage {
                self.storage_index.entry(self.cells[i].signature()).or_insert(i);
            }
        }
        let mut order: Vec<usize> = (0..self.supergates.len()).collect();
        order.sort_by(|&a, &b| {
            let cost = |s: &Supergate| -> u32 {
                s.body
                    .iter()
                    .filter_map(|i| self.cell(&i.cell))
                    .map(|c| c.jj_count)
                    .sum()
            };
            let (x, y) = (&self.supergates[a], &self.supergates[b]);
            (cost(x), &x.name).cmp(&(cost(y), &y.name))
        });
        for i in order {
            self.supergate_index.entry(self.supergates[i].signature()).or_insert(i);
        }
    }

    pub fn cell(&self, name: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.name == name)
    }

    pub fn supergate(&self, name: &str) -> Option<&Supergate> {
        self.supergates.iter().find(|s| s.name == name)
    }

    /// Storage cell with exactly this signature (cheapest, then by name).
    pub fn lookup_cell(&self, signature: &[EffectSet]) -> Option<&Cell> {
        self.storage_index.get(signature).map(|&i| &self.cells[i])
    }

    pub fn lookup_supergate(&self, signature: &[EffectSet]) -> Option<&Supergate> {
        self.supergate_index.get(signature).map(|&i| &self.supergates[i])
    }

    /// Cells of a kind, cheapest first.
    pub fn cells_of_kind(&self, kind: CellKind) -> Vec<&Cell> {
        let mut cells: Vec<&Cell> = self.cells.iter().filter(|c| c.kind == kind).collect();
        cells.sort_by(|x, y| (x.jj_count, &x.name).cmp(&(y.jj_count, &y.name)));
        cells
    }

    /// Cheapest merge cell with `inputs` inputs.
    pub fn merge_cell(&self, inputs: usize) -> Option<&Cell> {
        self.cells_of_kind(CellKind::Merge)
            .into_iter()
            .find(|c| c.ports.len() == inputs)
    }

    /// Cheapest AND cell with `inputs` set ports.
    pub fn and_cell(&self, inputs: usize) -> Option<&Cell> {
        self.cells_of_kind(CellKind::And)
            .into_iter()
            .find(|c| c.ports.len() == inputs + 1)
    }

    /// Cheapest two-way splitter.
    pub fn split_cell(&self) -> Option<&Cell> {
        self.cells_of_kind(CellKind::Split)
            .into_iter()
            .find(|c| c.outputs.len() == 2)
    }

    fn check_supergate(&self, sg: &Supergate) -> Result<(), PdkError> {
        for inst in &sg.body {
            let cell = self.cell(&inst.cell).ok_or_else(|| PdkError::UnknownCell {
                supergate: sg.name.clone(),
                cell: inst.cell.clone(),
            })?;
            let expected: BTreeSet<&String> = cell.ports.iter().map(|p| &p.name).chain(&cell.outputs).collect();
            let bound: BTreeSet<&String> = inst.pins.keys().collect();
            if expected != bound {
                return Err(invalid(
                    &sg.name,
                    format!("instance `{}` pins do not match `{}`", inst.name, cell.name),
                ));
            }
        }
        let body = sg.body_netlist();
        let sim = crate::netsim::Simulator::new(&body, self).map_err(|e| invalid(&sg.name, e.to_string()))?;

        let mut sequence = Vec::new();
        self.replay_supergate(sg, &sim, &mut sequence, sim.initial_state(), false)
    }

    fn replay_supergate(
        &self,
        sg: &Supergate,
        sim: &crate::netsim::Simulator,
        sequence: &mut Vec<usize>,
        state: crate::netsim::SimState,
        bit: bool,
    ) -> Result<(), PdkError> {
        if sequence.len() == SUPERGATE_CHECK_DEPTH {
            return Ok(());
        }
        let tick = sequence.len() as u64;
        for (i, port) in sg.ports.iter().enumerate() {
            let mut expected = Vec::new();
            if bit {
                expected.extend(port.out_pin.clone());
            } else {
                expected.extend(port.nout_pin.clone());
            }
            let e = port.effects;
            let mut next = bit;
            if e.contains(Effect::Clear) {
                next = false;
            }
            if e.contains(Effect::Set) {
                next = true;
            }
            if e.contains(Effect::Toggle) {
                next = !next;
            }
            let mut st = state.clone();
            let mut actual: Vec<String> = sim
                .step(&mut st, tick, i)
                .into_iter()
                .map(|o| sg.outputs[o].clone())
                .collect();
            expected.sort();
            actual.sort();
            sequence.push(i);
            if expected != actual {
                return Err(PdkError::SupergateMismatch {
                    name: sg.name.clone(),
                    sequence: sequence.iter().map(|&p| sg.ports[p].name.clone()).collect(),
                    expected,
                    actual,
                });
            }
            self.replay_supergate(sg, sim, sequence, st, next)?;
            sequence.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_loads_with_expected_signatures() {
        let pdk = Pdk::sample();
        for name in ["DFF", "DFFC", "NDRO", "RTFF", "RDFF", "RDFFC", "CB", "SPLIT", "AND2"] {
            assert!(pdk.cell(name).is_some(), "{name}");
        }
        assert_eq!(pdk.cell("RDFFC").unwrap().type_signature(), Some(vec![0, 1, 6]));
        assert_eq!(pdk.cell("RDFF").unwrap().type_signature(), Some(vec![0, 1, 4]));
        assert_eq!(pdk.cell("NDRO").unwrap().type_signature(), Some(vec![0, 1, 3]));
        assert_eq!(pdk.cell("DFF").unwrap().type_signature(), Some(vec![0, 4]));
        assert_eq!(pdk.supergates.len(), 1);
    }

    #[test]
    fn lookup_by_signature() {
        let pdk = Pdk::sample();
        let sig: Vec<EffectSet> = [0u8, 1, 3]
            .iter()
            .map(|&i| EffectSet::from_type_id(i).unwrap())
            .collect();
        assert_eq!(
            pdk.lookup_cell(&sorted_signature(sig.into_iter())).unwrap().name,
            "NDRO"
        );
        let counter = sorted_signature(
            [
                EffectSet::of(&[Effect::Toggle, Effect::Out]),
                EffectSet::of(&[Effect::Clear]),
                EffectSet::of(&[Effect::Out]),
            ]
            .into_iter(),
        );
        assert!(pdk.lookup_supergate(&counter).is_some());
    }

    #[test]
    fn tie_break_prefers_fewer_junctions_then_name() {
        let text = SAMPLE_PDK.replace("\"name\": \"sample\"", "\"name\": \"dup\"");
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let cells = value["cells"].as_array_mut().unwrap();
        let mut ndro = cells.iter().find(|c| c["name"] == "NDRO").unwrap().clone();
        ndro["name"] = "ANDRO".into();
        cells.push(ndro.clone());
        ndro["name"] = "ZNDRO".into();
        ndro["jj_count"] = 1.into();
        cells.push(ndro);
        let pdk = Pdk::load(&value.to_string()).unwrap();
        let sig = pdk.cell("NDRO").unwrap().signature();
        assert_eq!(pdk.lookup_cell(&sig).unwrap().name, "ZNDRO");
    }

    #[test]
    fn empty_cell_list_is_rejected() {
        assert_eq!(
            Pdk::load(r#"{"name": "x", "cells": []}"#).unwrap_err(),
            PdkError::NoCells
        );
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let mut value: serde_json::Value = serde_json::from_str(SAMPLE_PDK).unwrap();
        let first = value["cells"][0].clone();
        value["cells"].as_array_mut().unwrap().push(first);
        assert!(matches!(Pdk::load(&value.to_string()), Err(PdkError::DuplicateCell(_))));
    }

    #[test]
    fn inconsistent_type_id_is_rejected() {
        let text = SAMPLE_PDK.replacen("\"type_id\": 3", "\"type_id\": 4", 1);
        assert!(matches!(Pdk::load(&text), Err(PdkError::TypeIdMismatch { .. })));
    }

    #[test]
    fn supergate_without_reset_path_fails_validation() {
        let mut value: serde_json::Value = serde_json::from_str(SAMPLE_PDK).unwrap();
        let body = value["supergates"][0]["body"].as_array_mut().unwrap();
        for inst in body.iter_mut() {
            if inst["cell"] == "CB" {
                inst["pins"]["b"] = "carry".into();
                inst["cell"] = "CB".into();
            }
        }
        // Both merge inputs now come from the carry: reset no longer reaches the read loop.
        let err = Pdk::load(&value.to_string()).unwrap_err();
        assert!(matches!(err, PdkError::SupergateMismatch { .. }), "{err}");
    }
}
