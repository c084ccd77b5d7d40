// SPDX-License-Identifier: Apache-2.0
//! Gate census, junction count, power and a pre-layout frequency estimate.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::netlist::Netlist;
use super::pdk::{CellKind, Pdk};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub name: String,
    /// Instances other than splitters.
    pub gates: usize,
    pub splitters: usize,
    pub jj_count: u64,
    pub power_uw: f64,
    /// Longest chain of cell delays between storage elements or ports.
    pub longest_path_ps: f64,
    pub max_freq_ghz: f64,
    pub census: BTreeMap<String, usize>,
}

impl CostReport {
    pub fn header() -> String {
        format!(
            "{:<16} {:>6} {:>8} {:>10} {:>11}",
            "circuit", "gates", "JJs*", "freq GHz*", "power uW*"
        )
    }

    pub fn row(&self) -> String {
        format!(
            "{:<16} {:>6} {:>8} {:>10.1} {:>11.2}",
            self.name, self.gates, self.jj_count, self.max_freq_ghz, self.power_uw
        )
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", CostReport::header())?;
        writeln!(f, "{}", self.row())?;
        write!(f, "* illustrative: computed from the PDK's per-cell figures")
    }
}

/// Instance-level data edges: `i -> j` when an output pin of `i` drives an
/// input port of `j`. Unknown cells contribute no edges.
fn instance_edges(n: &Netlist, pdk: &Pdk) -> Vec<Vec<usize>> {
    let mut driver: HashMap<&str, usize> = HashMap::new();
    for (i, inst) in n.instances.iter().enumerate() {
        if let Some(cell) = pdk.cell(&inst.cell) {
            for pin in &cell.outputs {
                if let Some(net) = inst.pins.get(pin) {
                    driver.insert(net, i);
                }
            }
        }
    }
    let mut edges = vec![Vec::new(); n.instances.len()];
    for (j, inst) in n.instances.iter().enumerate() {
        if let Some(cell) = pdk.cell(&inst.cell) {
            for p in &cell.ports {
                if let Some(&i) = inst.pins.get(&p.name).and_then(|net| driver.get(net.as_str())) {
                    edges[i].push(j);
                }
            }
        }
    }
    for e in &mut edges {
        e.sort_unstable();
        e.dedup();
    }
    edges
}

/// Whether the instance graph has a directed cycle.
pub fn has_data_cycle(n: &Netlist, pdk: &Pdk) -> bool {
    let edges = instance_edges(n, pdk);
    let mut indeg = vec![0; edges.len()];
    for e in &edges {
        for &j in e {
            indeg[j] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..edges.len()).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = ready.pop() {
        seen += 1;
        for &j in &edges[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push(j);
            }
        }
    }
    seen != edges.len()
}

/// Longest delay path; a path stops at (includes, but does not pass
/// through) a storage cell, so only combinational stretches accumulate.
fn longest_path(n: &Netlist, pdk: &Pdk) -> f64 {
    let edges = instance_edges(n, pdk);
    let delay: Vec<f64> = n
        .instances
        .iter()
        .map(|i| pdk.cell(&i.cell).map_or(0.0, |c| c.delay_ps))
        .collect();
    let passes: Vec<bool> = n
        .instances
        .iter()
        .map(|i| {
            pdk.cell(&i.cell)
                .is_some_and(|c| matches!(c.kind, CellKind::Merge | CellKind::Split))
        })
        .collect();
    // Memoized DFS; cycles through pass-through cells are cut when revisited.
    fn go(
        i: usize,
        edges: &[Vec<usize>],
        delay: &[f64],
        passes: &[bool],
        memo: &mut [Option<f64>],
        open: &mut BTreeSet<usize>,
    ) -> f64 {
        if let Some(v) = memo[i] {
            return v;
        }
        open.insert(i);
        let mut best = 0.0f64;
        for &j in &edges[i] {
            if open.contains(&j) {
                continue;
            }
            let tail = if passes[j] {
                go(j, edges, delay, passes, memo, open)
            } else {
                delay[j]
            };
            best = best.max(tail);
        }
        open.remove(&i);
        let v = delay[i] + best;
        memo[i] = Some(v);
        v
    }
    let mut memo = vec![None; edges.len()];
    let mut open = BTreeSet::new();
    (0..edges.len())
        .map(|i| go(i, &edges, &delay, &passes, &mut memo, &mut open))
        .fold(0.0, f64::max)
}

pub fn report(n: &Netlist, pdk: &Pdk) -> CostReport {
    let mut jj = 0u64;
    let mut power = 0.0;
    let mut splitters = 0;
    let mut census = BTreeMap::new();
    for inst in &n.instances {
        *census.entry(inst.cell.clone()).or_insert(0) += 1;
        if let Some(c) = pdk.cell(&inst.cell) {
            jj += u64::from(c.jj_count);
            power += c.power_uw;
            if c.kind == CellKind::Split {
                splitters += 1;
            }
        }
    }
    let longest = longest_path(n, pdk);
    CostReport {
        name: n.name.clone(),
        gates: n.instances.len() - splitters,
        splitters,
        jj_count: jj,
        power_uw: power,
        longest_path_ps: longest,
        max_freq_ghz: if longest > 0.0 { 1000.0 / longest } else { 0.0 },
        census,
    }
}
