// SPDX-License-Identifier: Apache-2.0
//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line in the `cargo test` log.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use fluxsynth::balancer::{balance_paths, compute_depths, CombNetlist, Gate, GateOp, Pipeline};
use fluxsynth::bdd::{Bdd, VarOrder};
use fluxsynth::decomposition::{extract_tables, mark_effects, per_bit_expressions, OptResultTable};
use fluxsynth::encoding::{min_width, StateEncoding};
use fluxsynth::fsm::{FiniteStateMachine, PulseEvent};
use fluxsynth::mapping::{has_data_cycle, Netlist, Pdk};
use fluxsynth::netsim::{check_equivalence, simulate};
use fluxsynth::synth::{synthesize, synthesize_counter, SynthConfig, SynthResult};

const ERDFF: &str = include_str!("../data/fsm/erdff.fsm");
const FEEDBACK: &str = include_str!("../data/fsm/feedback.fsm");
const COUNTER2: &str = include_str!("../data/fsm/counter2.fsm");
const SKEWED: &str = include_str!("../data/comb/skewed.comb");

fn config(jobs: usize) -> SynthConfig {
    SynthConfig {
        jobs,
        ..SynthConfig::default()
    }
}

fn synth(text: &str) -> (FiniteStateMachine, SynthResult) {
    let fsm = FiniteStateMachine::parse(text).unwrap();
    let r = synthesize(&fsm, &Pdk::sample(), &config(1)).unwrap();
    (fsm, r)
}

fn assert_expr(opt: &mut OptResultTable, bit: usize, signal: &str, expected: &str) {
    let f = opt.inputs.iter().position(|s| s == signal).unwrap();
    let want = opt.bdd.parse(expected).unwrap();
    let got = opt.next[&(bit, f)];
    assert!(
        opt.bdd.equivalent(got, want),
        "Q{bit}* under {signal}: got {}, want {expected}",
        opt.render(got)
    );
}

fn chosen_tables(fsm: &FiniteStateMachine, r: &SynthResult) -> OptResultTable {
    let (t, o) = extract_tables(fsm, &r.encoding);
    per_bit_expressions(&t, &o)
}

fn assert_under(elapsed: Duration, limit: Duration) {
    // Debug builds are slower; the limit is checked against optimized runs.
    if cfg!(not(debug_assertions)) {
        assert!(elapsed < limit, "took {elapsed:?}");
    }
}

fn erdff_golden() -> String {
    let start = Instant::now();
    let (fsm, r) = synth(ERDFF);
    assert_under(start.elapsed(), Duration::from_secs(1));
    let mut opt = chosen_tables(&fsm, &r);
    for (bit, sig, e) in [
        (0, "Din", "Q0 + Din"),
        (0, "Rst", "Q0 & !Rst"),
        (0, "En", "Q0 & !En"),
        (0, "Clk", "Q0"),
        (1, "Din", "Q1"),
        (1, "Rst", "Q1"),
        (1, "En", "Q1 & !En + Q0 & En"),
        (1, "Clk", "Q1"),
    ] {
        assert_expr(&mut opt, bit, sig, e);
    }
    let out = opt.bdd.parse("Q1 & Clk").unwrap();
    assert_eq!(opt.output_exprs, vec![out]);
    let marked = mark_effects(&mut opt).unwrap();
    let mut types: Vec<Vec<u16>> = marked
        .components
        .iter()
        .map(|c| c.signature().iter().map(|e| e.sort_key()).collect())
        .collect();
    types.sort();
    assert_eq!(types, vec![vec![0, 1, 3], vec![0, 1, 4]]);
    assert_eq!(r.netlist.gate_count(), 2);
    format!("2 gates, markers (0,1,3)/(0,1,4), {:?}", start.elapsed())
}

fn feedback_golden() -> String {
    let start = Instant::now();
    let (fsm, r) = synth(FEEDBACK);
    assert_under(start.elapsed(), Duration::from_secs(1));
    let mut opt = chosen_tables(&fsm, &r);
    assert_expr(&mut opt, 0, "A", "Q0 + A");
    assert_expr(&mut opt, 1, "B", "Q1 + B");
    assert_expr(&mut opt, 2, "Clk", "Q2 & !Clk + (Q2 & Q0 + Q1) & Clk");
    assert_expr(&mut opt, 1, "Clk", "Q1 & !Clk");
    assert_expr(&mut opt, 0, "Clk", "Q0 & !Clk");
    let out = opt.bdd.parse("(Q2 & Q0 + Q1) & Clk").unwrap();
    assert_eq!(opt.output_exprs, vec![out]);
    assert_eq!(r.netlist.gate_count(), 3);
    let pdk = Pdk::sample();
    assert!(has_data_cycle(&r.netlist, &pdk));
    format!("3 gates, data cycle present, {:?}", start.elapsed())
}

fn counter_golden() -> String {
    let start = Instant::now();
    let (fsm, r) = synth(COUNTER2);
    assert_under(start.elapsed(), Duration::from_secs(1));
    let mut opt = chosen_tables(&fsm, &r);
    assert_expr(&mut opt, 1, "Din", "Q1 ^ (Q0 & Din)");
    assert_expr(&mut opt, 0, "Din", "Q0 ^ Din");
    assert_expr(&mut opt, 1, "Rst", "Q1 & !Rst");
    assert_expr(&mut opt, 0, "Rst", "Q0 & !Rst");
    assert_expr(&mut opt, 1, "Clk", "Q1");
    assert_expr(&mut opt, 0, "Clk", "Q0");
    assert_eq!(r.netlist.metadata.supergates.get("TCNT"), Some(&2));
    assert_eq!(r.netlist.gate_count(), 6);
    format!("6 gates via supergate, {:?}", start.elapsed())
}

/// Drives `count` Din/Clk pairs into a counter netlist and checks every Clk
/// reads out the binary value so far.
fn check_counting(n: &Netlist, bits: usize, count: u64) {
    let stimulus: Vec<PulseEvent> = (0..count)
        .flat_map(|k| [PulseEvent::new(2 * k, "Din"), PulseEvent::new(2 * k + 1, "Clk")])
        .collect();
    let trace = simulate(n, &Pdk::sample(), &stimulus, 2 * count + 4).unwrap();
    let mut seen: BTreeMap<u64, BTreeSet<String>> = BTreeMap::new();
    for e in &trace.outputs {
        assert_eq!(e.tick % 2, 1, "output off a clock tick: {e:?}");
        seen.entry(e.tick).or_default().insert(e.name.clone());
    }
    for k in 0..count {
        let value = (k + 1) % (1u64 << bits.min(63));
        let want: BTreeSet<String> = (0..bits)
            .filter(|b| value >> b & 1 == 1)
            .map(|b| format!("Out{}", b + 1))
            .collect();
        assert_eq!(
            seen.remove(&(2 * k + 1)).unwrap_or_default(),
            want,
            "after {} counts",
            k + 1
        );
    }
}

fn counter_scaling() -> String {
    let start = Instant::now();
    let pdk = Pdk::sample();
    for bits in [2u32, 4] {
        let fsm = FiniteStateMachine::up_counter(bits);
        let r = synthesize(&fsm, &pdk, &config(4)).unwrap();
        assert_eq!(r.netlist.gate_count(), 3 * bits as usize, "{bits}-bit counter");
    }
    let r = synthesize_counter(32, &pdk, &config(1)).unwrap();
    assert_eq!(r.netlist.gate_count(), 96);
    assert!(!has_data_cycle(&r.netlist, &pdk));
    check_counting(&r.netlist, 32, 300);
    assert_under(start.elapsed(), Duration::from_secs(30));
    format!(
        "2/4-bit: 6/12 gates, 32-bit: 96 gates, acyclic, 300 counts ok, {:?}",
        start.elapsed()
    )
}

/// Random machine as FSM text: states S0.., inputs I0.., outputs O0...
fn random_fsm_text(rng: &mut StdRng) -> String {
    let states = rng.gen_range(1..=4);
    let inputs = rng.gen_range(1..=3);
    let outputs = rng.gen_range(0..=2);
    let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>().join(" ");
    let mut text = format!(
        ".inputs {}\n.outputs {}\n.states {}\n",
        names("I", inputs),
        names("O", outputs),
        names("S", states)
    );
    for s in 0..states {
        for f in 0..inputs {
            if rng.gen_bool(0.6) {
                text.push_str(&format!(".trans S{s} I{f} S{}\n", rng.gen_range(0..states)));
            }
            for o in 0..outputs {
                if rng.gen_bool(0.3) {
                    text.push_str(&format!(".out S{s} I{f} O{o}\n"));
                }
            }
        }
    }
    if outputs == 0 {
        text = text.replace(".outputs \n", "");
    }
    text
}

/// Every single-cell swap between pin-compatible storage cells.
fn mutants(n: &Netlist) -> Vec<Netlist> {
    let swaps = [("NDRO", "RDFF"), ("RDFF", "NDRO")];
    let mut out = Vec::new();
    for (i, inst) in n.instances.iter().enumerate() {
        for (from, to) in swaps {
            if inst.cell == from {
                let mut m = n.clone();
                m.instances[i].cell = to.to_string();
                out.push(m);
            }
        }
    }
    out
}

fn equivalence_suite() -> String {
    let pdk = Pdk::sample();
    let mut checked = 0;
    let mut caught = 0;
    for text in [ERDFF, FEEDBACK, COUNTER2] {
        let (fsm, r) = synth(text);
        assert!(check_equivalence(&fsm, &r.netlist, &pdk, 5).unwrap().is_equivalent());
        checked += 1;
        for m in mutants(&r.netlist) {
            let eq = check_equivalence(&fsm, &m, &pdk, 5).unwrap();
            assert!(!eq.is_equivalent(), "mutant of {} not caught", fsm.name);
            caught += 1;
        }
    }
    assert!(caught >= 2);
    // The NDRO to RDFF swap in the ERDFF netlist fails on a double read.
    let (fsm, r) = synth(ERDFF);
    let mut m = r.netlist.clone();
    m.instances.iter_mut().find(|i| i.cell == "NDRO").unwrap().cell = "RDFF".into();
    let cx = check_equivalence(&fsm, &m, &pdk, 5).unwrap().counterexample.unwrap();
    assert!(
        cx.inputs.ends_with(&["Clk".to_string(), "Clk".to_string()]),
        "{:?}",
        cx.inputs
    );

    let mut rng = StdRng::seed_from_u64(2024);
    let mut random_ok = 0;
    let mut tried = 0;
    while random_ok < 50 {
        tried += 1;
        assert!(tried <= 1000, "only {random_ok} of {tried} random machines synthesized");
        let fsm = FiniteStateMachine::parse(&random_fsm_text(&mut rng)).unwrap();
        let Ok(r) = synthesize(&fsm, &pdk, &config(1)) else {
            continue;
        };
        let eq = check_equivalence(&fsm, &r.netlist, &pdk, 5).unwrap();
        assert!(eq.is_equivalent(), "random machine failed: {:?}", eq.counterexample);
        random_ok += 1;
    }
    format!("{checked} golden + {random_ok} random equivalent ({tried} generated), {caught} mutants caught")
}

fn random_encoding(rng: &mut StdRng, states: usize, width: usize) -> StateEncoding {
    let mut pool: Vec<u64> = (1..1u64 << width).collect();
    let mut codes = vec![0];
    for _ in 1..states {
        let i = rng.gen_range(0..pool.len());
        codes.push(pool.swap_remove(i));
    }
    StateEncoding::new(width, codes)
}

fn decomposition_fidelity() -> String {
    let mut rng = StdRng::seed_from_u64(6);
    let mut pairs = 0;
    while pairs < 200 {
        let fsm = FiniteStateMachine::parse(&random_fsm_text(&mut rng)).unwrap();
        let n = fsm.states.len();
        let width = (min_width(n) + rng.gen_range(0..=2)).clamp(1, 4);
        let enc = random_encoding(&mut rng, n, width);
        let (t, o) = extract_tables(&fsm, &enc);
        let opt = per_bit_expressions(&t, &o);
        for s in fsm.reachable_states() {
            for f in 0..fsm.inputs.len() {
                let (next, outs) = fsm.step(s, f);
                assert_eq!(opt.apply(enc.code(s), f), enc.code(next));
                assert_eq!(opt.emitted(enc.code(s), f), outs);
            }
        }
        pairs += 1;
    }
    format!("{pairs} (FSM, encoding) pairs replay exactly")
}

fn random_dag(rng: &mut StdRng, gates: usize, inputs: usize) -> CombNetlist {
    let mut n = CombNetlist {
        inputs: (0..inputs).map(|i| format!("i{i}")).collect(),
        ..Default::default()
    };
    let mut signals = n.inputs.clone();
    for g in 0..gates {
        let op = [GateOp::And, GateOp::Or, GateOp::Xor, GateOp::Not][rng.gen_range(0..4)];
        let args = (0..op.arity())
            .map(|_| signals[rng.gen_range(0..signals.len())].clone())
            .collect();
        n.gates.push(Gate {
            name: format!("g{g}"),
            op,
            inputs: args,
        });
        signals.push(format!("g{g}"));
    }
    let k = rng.gen_range(1..=gates.min(3));
    n.outputs = (gates - k..gates).map(|g| format!("g{g}")).collect();
    n
}

/// Clock stage of every net of a balanced netlist; every cell must see
/// all its data inputs at the same stage.
fn stages(b: &Netlist) -> BTreeMap<String, usize> {
    let mut stage: BTreeMap<String, usize> = b.inputs.iter().map(|i| (i.clone(), 0)).collect();
    let mut pending: Vec<_> = b.instances.iter().collect();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|inst| {
            let ins: Vec<&String> = inst
                .pins
                .iter()
                .filter(|(p, _)| !matches!(p.as_str(), "q" | "clk"))
                .map(|(_, n)| n)
                .collect();
            if ins.iter().any(|n| !stage.contains_key(*n)) {
                return true;
            }
            let s: BTreeSet<usize> = ins.iter().map(|n| stage[*n]).collect();
            assert_eq!(s.len(), 1, "unbalanced inputs at {}", inst.name);
            stage.insert(inst.pins["q"].clone(), *s.first().unwrap() + 1);
            false
        });
        assert!(pending.len() < before, "loop in balanced netlist");
    }
    stage
}

fn truth_table_preserved(n: &CombNetlist, netlist: &Netlist, latency: usize) {
    let k = n.inputs.len();
    let vectors: Vec<Vec<bool>> = (0..1usize << k)
        .map(|v| (0..k).map(|i| v >> i & 1 == 1).collect())
        .collect();
    let trace = Pipeline::new(netlist)
        .unwrap()
        .run(&vectors, vectors.len() + latency + 1);
    for (t, v) in vectors.iter().enumerate() {
        assert_eq!(trace[t + latency], n.eval(v), "vector {v:?}");
    }
}

fn balancer() -> String {
    let pdk = Pdk::sample();
    let skewed = CombNetlist::parse(SKEWED).unwrap();
    let b = balance_paths(&skewed, &pdk).unwrap();
    assert_eq!(b.dffs_inserted, 1);
    assert_eq!(b.padded_edges, vec![("l1".to_string(), "l3".to_string(), 1)]);
    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..100 {
        let (gates, inputs) = (rng.gen_range(1..=20), rng.gen_range(1..=10));
        let n = random_dag(&mut rng, gates, inputs);
        let depth = compute_depths(&n).unwrap();
        let b = balance_paths(&n, &pdk).unwrap();
        let st = stages(&b.netlist);
        let out: BTreeSet<usize> = n.outputs.iter().map(|o| st[o]).collect();
        assert_eq!(out.len(), 1, "outputs at different stages");
        assert_eq!(*out.first().unwrap(), n.outputs.iter().map(|o| depth[o]).max().unwrap());
        truth_table_preserved(&n, &b.netlist, b.latency);
    }
    "skewed netlist: 1 DFF on l1->l3; 100 random DAGs balanced, truth tables match".into()
}

/// Independent minimum cover: prime implicants by iterated merging, then an
/// exact branch-and-bound set cover.
fn qm_min_cubes(n: usize, on: &[bool]) -> usize {
    // A cube is (value, mask) with mask bits marking eliminated variables.
    let mut level: BTreeSet<(u32, u32)> = (0..1u32 << n).filter(|&m| on[m as usize]).map(|m| (m, 0)).collect();
    let mut primes: Vec<(u32, u32)> = Vec::new();
    while !level.is_empty() {
        let mut next = BTreeSet::new();
        let mut merged = BTreeSet::new();
        let items: Vec<_> = level.iter().copied().collect();
        for (i, &(a, ma)) in items.iter().enumerate() {
            for &(b, mb) in &items[i + 1..] {
                let diff = a ^ b;
                if ma == mb && diff.count_ones() == 1 {
                    next.insert((a & !diff, ma | diff));
                    merged.insert((a, ma));
                    merged.insert((b, mb));
                }
            }
        }
        primes.extend(items.into_iter().filter(|c| !merged.contains(c)));
        level = next;
    }
    let minterms: Vec<u32> = (0..1u32 << n).filter(|&m| on[m as usize]).collect();
    let covers = |p: (u32, u32), m: u32| (m & !p.1) == p.0;
    fn search(
        uncovered: &[u32],
        primes: &[(u32, u32)],
        covers: &dyn Fn((u32, u32), u32) -> bool,
        used: usize,
        best: &mut usize,
    ) {
        if uncovered.is_empty() {
            *best = (*best).min(used);
            return;
        }
        if used + 1 >= *best {
            return;
        }
        let pivot = *uncovered
            .iter()
            .min_by_key(|&&m| primes.iter().filter(|&&p| covers(p, m)).count())
            .unwrap();
        for &p in primes.iter().filter(|&&p| covers(p, pivot)) {
            let rest: Vec<u32> = uncovered.iter().copied().filter(|&m| !covers(p, m)).collect();
            search(&rest, primes, covers, used + 1, best);
        }
    }
    let mut best = usize::MAX;
    search(&minterms, &primes, &covers, 0, &mut best);
    if minterms.is_empty() {
        0
    } else {
        best
    }
}

fn bdd_engine() -> String {
    let mut rng = StdRng::seed_from_u64(8);
    let names: Vec<String> = (0..6).map(|i| format!("x{i}")).collect();
    let mut bdd = Bdd::new(VarOrder::new(names.clone()));
    let random_table = |rng: &mut StdRng, n: usize| -> Vec<bool> {
        let density = rng.gen_range(0.0..1.0);
        (0..1usize << n).map(|_| rng.gen_bool(density)).collect()
    };
    let from_table = |bdd: &mut Bdd, n: usize, table: &[bool]| {
        let mut f = bdd.constant(false);
        for (m, &bit) in table.iter().enumerate() {
            if bit {
                let lits: Vec<(usize, bool)> = (0..n).map(|v| (v, m >> v & 1 == 1)).collect();
                let c = bdd.cube(&lits);
                f = bdd.or(f, c);
            }
        }
        f
    };
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=6);
        let ta = random_table(&mut rng, n);
        // Half the pairs share a table, half differ in at least one row.
        let tb = if rng.gen_bool(0.5) {
            ta.clone()
        } else {
            random_table(&mut rng, n)
        };
        let a = from_table(&mut bdd, n, &ta);
        let b = from_table(&mut bdd, n, &tb);
        assert_eq!(bdd.equivalent(a, b), ta == tb);
    }
    for _ in 0..500 {
        let n = rng.gen_range(1..=5);
        let t = random_table(&mut rng, n);
        let f = from_table(&mut bdd, n, &t);
        let sop = bdd.to_min_sop(f);
        for m in 0..1usize << 6 {
            let assignment: Vec<bool> = (0..6).map(|v| m >> v & 1 == 1).collect();
            assert_eq!(sop.eval(&assignment), t[m & ((1 << n) - 1)]);
        }
        assert_eq!(sop.cube_count(), qm_min_cubes(n, &t), "table {t:?}");
    }
    "10000 equivalence pairs and 500 minimum covers agree with oracles".into()
}

fn determinism() -> String {
    let pdk = Pdk::sample();
    for text in [ERDFF, FEEDBACK, COUNTER2] {
        let fsm = FiniteStateMachine::parse(text).unwrap();
        let mut outputs = BTreeSet::new();
        for jobs in [1, 4, 16] {
            for _ in 0..3 {
                let r = synthesize(&fsm, &pdk, &config(jobs)).unwrap();
                outputs.insert(r.netlist.to_json());
                outputs.insert(r.netlist.to_hdl());
            }
        }
        assert_eq!(outputs.len(), 2, "{} differs across runs", fsm.name);
    }
    "golden netlists byte-identical across jobs 1/4/16 x 3 runs".into()
}

type Criterion = (&'static str, fn() -> String);

fn main() {
    let criteria: [Criterion; 9] = [
        ("ERDFF golden", erdff_golden),
        ("feedback-loop golden", feedback_golden),
        ("2-bit counter golden", counter_golden),
        ("counter scaling", counter_scaling),
        ("equivalence suite", equivalence_suite),
        ("decomposition fidelity", decomposition_fidelity),
        ("balancer", balancer),
        ("BDD engine", bdd_engine),
        ("determinism", determinism),
    ];
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {} {name}: {msg}", i + 1);
                failed += 1;
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
