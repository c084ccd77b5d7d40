// SPDX-License-Identifier: Apache-2.0
//! Value-change-dump output for pulse traces.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::fsm::PulseTrace;

/// Each tick spans 10 time units; a pulse is high for the first half.
const TICK: u64 = 10;

fn ident(i: usize) -> String {
    let mut i = i;
    let mut s = String::new();
    loop {
        s.push((b'!' + (i % 94) as u8) as char);
        i /= 94;
        if i == 0 {
            return s;
        }
    }
}

/// Renders inputs and outputs of `trace` as a VCD document.
pub fn write_vcd(module: &str, inputs: &[String], outputs: &[String], trace: &PulseTrace) -> String {
    let mut s = String::new();
    s.push_str("$timescale 1ps $end\n");
    let _ = writeln!(s, "$scope module {module} $end");
    let signals: Vec<&String> = inputs.iter().chain(outputs).collect();
    let ids: BTreeMap<&str, String> = signals
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), ident(i)))
        .collect();
    for name in &signals {
        let _ = writeln!(s, "$var wire 1 {} {name} $end", ids[name.as_str()]);
    }
    s.push_str("$upscope $end\n$enddefinitions $end\n");
    s.push_str("#0\n$dumpvars\n");
    for name in &signals {
        let _ = writeln!(s, "0{}", ids[name.as_str()]);
    }
    s.push_str("$end\n");

    let mut changes: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for ev in trace.inputs.iter().chain(&trace.outputs) {
        let Some(id) = ids.get(ev.name.as_str()) else {
            continue;
        };
        changes.entry(ev.tick * TICK).or_default().push(format!("1{id}"));
        changes
            .entry(ev.tick * TICK + TICK / 2)
            .or_default()
            .push(format!("0{id}"));
    }
    for (time, mut vals) in changes {
        vals.sort();
        vals.dedup();
        if time > 0 {
            let _ = writeln!(s, "#{time}");
        }
        for v in vals {
            let _ = writeln!(s, "{v}");
        }
    }
    s
}
