// SPDX-License-Identifier: Apache-2.0
//! Gate-level netlists and their two text forms.
//!
//! The structured form is JSON (see [`Netlist`] for the schema). The HDL form
//! is a small Verilog-like structural subset:
//!
//! ```text
//! // @ordinal 0
//! // @encoding S0=00 S1=01
//! module erdff (Din, Rst, En, Clk, Out);
//!   input Din, Rst, En, Clk;
//!   output Out;
//!   wire w_Q0_En;
//!   RDFF u_q0 (.clk(En), .q(w_Q0_En), .reset(Rst), .set(Din));
//! endmodule
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("netlist JSON: {0}")]
    Json(String),
    #[error("netlist text line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("instance `{instance}` binds undeclared net `{net}`")]
    UndeclaredNet { instance: String, net: String },
    #[error("duplicate name `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub cell: String,
    /// Cell pin (input port or output pin) to net.
    pub pins: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    /// `state=code` pairs of the chosen encoding.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub encoding: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u64>,
    /// Instances per cell name.
    #[serde(default)]
    pub census: BTreeMap<String, usize>,
    /// Supergates expanded into the instances, by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub supergates: BTreeMap<String, usize>,
    /// Primary inputs that drive nothing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unused_inputs: Vec<String>,
}

/// Primary inputs and outputs are nets of the same name. `nets` lists the
/// remaining (internal) nets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub nets: Vec<String>,
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetlistFormat {
    Data,
    Hdl,
}

impl Netlist {
    pub fn new(name: impl Into<String>) -> Self {
        Netlist {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn all_nets(&self) -> impl Iterator<Item = &String> {
        self.inputs.iter().chain(&self.outputs).chain(&self.nets)
    }

    pub fn has_net(&self, net: &str) -> bool {
        self.all_nets().any(|n| n == net)
    }

    pub fn instance(&self, name: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.name == name)
    }

    /// Recomputes the census and the unused-input list.
    pub fn refresh_metadata(&mut self) {
        let mut census = BTreeMap::new();
        for inst in &self.instances {
            *census.entry(inst.cell.clone()).or_insert(0) += 1;
        }
        self.metadata.census = census;
        let used: BTreeSet<&String> = self.instances.iter().flat_map(|i| i.pins.values()).collect();
        self.metadata.unused_inputs = self.inputs.iter().filter(|i| !used.contains(i)).cloned().collect();
    }

    /// Number of instances excluding splitters.
    pub fn gate_count(&self) -> usize {
        self.instances.iter().filter(|i| i.cell != "SPLIT").count()
    }

    pub fn validate(&self) -> Result<(), NetlistError> {
        let mut seen = BTreeSet::new();
        for n in self.all_nets() {
            if !seen.insert(n.as_str()) {
                return Err(NetlistError::Duplicate(n.clone()));
            }
        }
        let mut names = BTreeSet::new();
        for inst in &self.instances {
            if !names.insert(inst.name.as_str()) {
                return Err(NetlistError::Duplicate(inst.name.clone()));
            }
            for net in inst.pins.values() {
                if !seen.contains(net.as_str()) {
                    return Err(NetlistError::UndeclaredNet {
                        instance: inst.name.clone(),
                        net: net.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn emit(&self, format: NetlistFormat) -> String {
        match format {
            NetlistFormat::Data => self.to_json(),
            NetlistFormat::Hdl => self.to_hdl(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("netlist serializes");
        s.push('\n');
        s
    }

    pub fn to_hdl(&self) -> String {
        let mut s = String::new();
        if let Some(ord) = self.metadata.ordinal {
            let _ = writeln!(s, "// @ordinal {ord}");
        }
        if !self.metadata.encoding.is_empty() {
            let _ = writeln!(s, "// @encoding {}", self.metadata.encoding.join(" "));
        }
        if !self.metadata.supergates.is_empty() {
            let sg: Vec<String> = self
                .metadata
                .supergates
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            let _ = writeln!(s, "// @supergates {}", sg.join(" "));
        }
        let ports: Vec<&str> = self.inputs.iter().chain(&self.outputs).map(String::as_str).collect();
        let _ = writeln!(s, "module {} ({});", self.name, ports.join(", "));
        if !self.inputs.is_empty() {
            let _ = writeln!(s, "  input {};", self.inputs.join(", "));
        }
        if !self.outputs.is_empty() {
            let _ = writeln!(s, "  output {};", self.outputs.join(", "));
        }
        for net in &self.nets {
            let _ = writeln!(s, "  wire {net};");
        }
        for inst in &self.instances {
            let pins: Vec<String> = inst.pins.iter().map(|(p, n)| format!(".{p}({n})")).collect();
            let _ = writeln!(s, "  {} {} ({});", inst.cell, inst.name, pins.join(", "));
        }
        s.push_str("endmodule\n");
        s
    }

    /// Reads either form; JSON is recognized by a leading `{`.
    pub fn read(text: &str) -> Result<Netlist, NetlistError> {
        let mut n = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| NetlistError::Json(e.to_string()))?
        } else {
            parse_hdl(text)?
        };
        n.validate()?;
        n.refresh_metadata();
        Ok(n)
    }
}

fn syntax(line: usize, message: impl Into<String>) -> NetlistError {
    NetlistError::Syntax {
        line,
        message: message.into(),
    }
}

fn name_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

fn parse_hdl(text: &str) -> Result<Netlist, NetlistError> {
    let mut n = Netlist::default();
    let mut in_module = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix("// @ordinal ") {
            let ord = rest.trim().parse().map_err(|_| syntax(lineno, "bad ordinal"))?;
            n.metadata.ordinal = Some(ord);
            continue;
        }
        if let Some(rest) = line.strip_prefix("// @encoding ") {
            n.metadata.encoding = rest.split_whitespace().map(String::from).collect();
            continue;
        }
        if let Some(rest) = line.strip_prefix("// @supergates ") {
            for item in rest.split_whitespace() {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| syntax(lineno, "bad supergate count"))?;
                let v = v.parse().map_err(|_| syntax(lineno, "bad supergate count"))?;
                n.metadata.supergates.insert(k.to_string(), v);
            }
            continue;
        }
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        if line == "endmodule" {
            if !in_module {
                return Err(syntax(lineno, "endmodule outside module"));
            }
            return Ok(n);
        }
        let body = line
            .strip_suffix(';')
            .ok_or_else(|| syntax(lineno, "missing `;`"))?
            .trim();
        if let Some(rest) = body.strip_prefix("module ") {
            let open = rest.find('(').ok_or_else(|| syntax(lineno, "missing port list"))?;
            n.name = rest[..open].trim().to_string();
            in_module = true;
        } else if !in_module {
            return Err(syntax(lineno, "statement before module header"));
        } else if let Some(rest) = body.strip_prefix("input ") {
            n.inputs.extend(name_list(rest));
        } else if let Some(rest) = body.strip_prefix("output ") {
            n.outputs.extend(name_list(rest));
        } else if let Some(rest) = body.strip_prefix("wire ") {
            n.nets.extend(name_list(rest));
        } else {
            let open = body.find('(').ok_or_else(|| syntax(lineno, "expected instance"))?;
            let head: Vec<&str> = body[..open].split_whitespace().collect();
            let [cell, name] = head[..] else {
                return Err(syntax(lineno, "expected `<cell> <instance> (...)`"));
            };
            let inner = body[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| syntax(lineno, "unclosed pin list"))?;
            let mut pins = BTreeMap::new();
            for conn in name_list(inner) {
                let conn = conn
                    .strip_prefix('.')
                    .and_then(|c| c.strip_suffix(')'))
                    .ok_or_else(|| syntax(lineno, format!("bad pin binding `{conn}`")))?;
                let (pin, net) = conn.split_once('(').ok_or_else(|| syntax(lineno, "bad pin binding"))?;
                if pins.insert(pin.trim().to_string(), net.trim().to_string()).is_some() {
                    return Err(syntax(lineno, format!("pin `{pin}` bound twice")));
                }
            }
            n.instances.push(Instance {
                name: name.to_string(),
                cell: cell.to_string(),
                pins,
            });
        }
    }
    Err(syntax(text.lines().count(), "missing endmodule"))
}
