// SPDX-License-Identifier: Apache-2.0
//! Plain-text rendering of the intermediate tables.

use std::fmt::Write;

use super::{InputTransitionTable, OptResultTable, OutputTable};

/// Input transition table, output table and per-bit expressions as text.
pub fn dump_tables(
    states: &[String],
    table: &InputTransitionTable,
    outputs: &OutputTable,
    opt: &mut OptResultTable,
) -> String {
    let w = table.width;
    let fmt_code = |c: u64| format!("{c:0w$b}");
    let mut s = String::new();
    let _ = writeln!(s, "# transitions");
    let _ = write!(s, "{:<10} {:<w$}", "state", "code");
    for name in &table.inputs {
        let _ = write!(s, " {name:>w$}");
    }
    s.push('\n');
    for (i, name) in states.iter().enumerate() {
        let code = table.codes[i];
        let _ = write!(s, "{name:<10} {}", fmt_code(code));
        for (f, input) in table.inputs.iter().enumerate() {
            let width = w.max(input.len());
            let next = table.next.get(&(f, code)).copied().unwrap_or(code);
            let _ = write!(s, " {:>width$}", fmt_code(next));
        }
        s.push('\n');
    }

    let _ = writeln!(s, "# outputs");
    for (o, name) in outputs.outputs.iter().enumerate() {
        let mut emits: Vec<String> = outputs.emits[o]
            .iter()
            .map(|&(code, f)| format!("{}/{}", fmt_code(code), table.inputs[f]))
            .collect();
        emits.sort();
        let _ = writeln!(s, "{name}: {}", emits.join(" "));
    }

    let _ = writeln!(s, "# expressions");
    for b in (0..w).rev() {
        for f in 0..opt.inputs.len() {
            let e = opt.next[&(b, f)];
            let rendered = opt.render(e);
            let _ = writeln!(s, "Q{b}* [{}] = {rendered}", opt.inputs[f]);
        }
    }
    for o in 0..opt.outputs.len() {
        let e = opt.output_exprs[o];
        let rendered = opt.render(e);
        let _ = writeln!(s, "{} = {rendered}", opt.outputs[o]);
    }
    s
}
