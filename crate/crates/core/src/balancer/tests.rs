// SPDX-License-Identifier: Apache-2.0

use super::*;
use rand::{Rng, SeedableRng};

const SKEWED: &str = include_str!("../../data/comb/skewed.comb");

fn random_dag(rng: &mut impl Rng, gates: usize, inputs: usize) -> CombNetlist {
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
        let name = format!("g{g}");
        n.gates.push(Gate {
            name: name.clone(),
            op,
            inputs: args,
        });
        signals.push(name);
    }
    let k = rng.gen_range(1..=gates.min(3));
    n.outputs = (gates - k..gates).map(|g| format!("g{g}")).collect();
    n
}

/// Clocked stage of every net; panics if a cell sees inputs from different stages.
fn stages(b: &Netlist) -> BTreeMap<String, usize> {
    let mut stage: BTreeMap<String, usize> = b.inputs.iter().map(|i| (i.clone(), 0)).collect();
    let mut pending: Vec<&Instance> = b.instances.iter().collect();
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
            stage.insert(inst.pins["q"].clone(), s.into_iter().next().unwrap() + 1);
            false
        });
        assert!(pending.len() < before, "loop in balanced netlist");
    }
    stage
}

#[test]
fn skewed_netlist_gets_one_flip_flop() {
    let pdk = Pdk::sample();
    let n = CombNetlist::parse(SKEWED).unwrap();
    let b = balance_paths(&n, &pdk).unwrap();
    assert_eq!(b.dffs_inserted, 1);
    assert_eq!(b.padded_edges, vec![("l1".to_string(), "l3".to_string(), 1)]);
    assert_eq!(b.latency, 3);
}

#[test]
fn depths_of_skewed_netlist() {
    let n = CombNetlist::parse(SKEWED).unwrap();
    let d = compute_depths(&n).unwrap();
    assert_eq!((d["l1"], d["l2"], d["l3"]), (1, 2, 3));
}

#[test]
fn single_gate_and_empty_netlists() {
    let pdk = Pdk::sample();
    let one = CombNetlist::parse(".inputs a b\n.outputs y\n.gate y and a b\n").unwrap();
    assert_eq!(balance_paths(&one, &pdk).unwrap().dffs_inserted, 0);
    let empty = CombNetlist::parse("").unwrap();
    let b = balance_paths(&empty, &pdk).unwrap();
    assert_eq!(b.dffs_inserted, 0);
    assert!(b.netlist.instances.is_empty());
}

#[test]
fn rejects_loops_and_bad_syntax() {
    assert!(matches!(
        CombNetlist::parse(".inputs a\n.outputs x\n.gate x and a y\n.gate y not x\n"),
        Err(BalanceError::Cycle(_))
    ));
    assert!(matches!(
        CombNetlist::parse(".gate x nand a b\n"),
        Err(BalanceError::Syntax { .. })
    ));
    assert!(matches!(
        CombNetlist::parse(".inputs a\n.outputs z\n"),
        Err(BalanceError::Undefined(_))
    ));
}

#[test]
fn text_round_trip() {
    let n = CombNetlist::parse(SKEWED).unwrap();
    assert_eq!(CombNetlist::parse(&n.to_text()).unwrap(), n);
}

fn all_vectors(k: usize) -> Vec<Vec<bool>> {
    (0..1usize << k)
        .map(|v| (0..k).map(|i| v >> i & 1 == 1).collect())
        .collect()
}

/// Streams every input vector, one per cycle, and checks each output vector
/// appears exactly `latency` cycles later.
fn assert_function_preserved(n: &CombNetlist, b: &BalancedNetlist) {
    let p = Pipeline::new(&b.netlist).unwrap();
    let vectors = all_vectors(n.inputs.len());
    let trace = p.run(&vectors, vectors.len() + b.latency + 1);
    for (t, v) in vectors.iter().enumerate() {
        assert_eq!(trace[t + b.latency], n.eval(v), "vector {v:?}");
    }
}

#[test]
fn random_dags_balance_and_keep_function() {
    let pdk = Pdk::sample();
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    for _ in 0..100 {
        let gates = rng.gen_range(1..=20);
        let inputs = rng.gen_range(1..=6);
        let n = random_dag(&mut rng, gates, inputs);
        let b = balance_paths(&n, &pdk).unwrap();
        let st = stages(&b.netlist);
        let out: BTreeSet<usize> = n.outputs.iter().map(|o| st[o]).collect();
        assert_eq!(out.len(), 1, "outputs at different stages");
        assert_function_preserved(&n, &b);
    }
}

#[test]
fn wide_netlist_truth_table() {
    let pdk = Pdk::sample();
    let mut rng = rand::rngs::StdRng::seed_from_u64(9);
    let n = random_dag(&mut rng, 20, 10);
    let b = balance_paths(&n, &pdk).unwrap();
    assert_function_preserved(&n, &b);
}

#[test]
fn splitter_trees() {
    let pdk = Pdk::sample();
    let n = CombNetlist::parse(SKEWED).unwrap();
    let b = balance_paths(&n, &pdk).unwrap();
    let s = insert_splitters(&b.netlist, &pdk, 1).unwrap();
    // Every net now has at most one sink.
    let mut sinks: BTreeMap<&String, usize> = BTreeMap::new();
    for inst in &s.instances {
        let cell = pdk.cell(&inst.cell).unwrap();
        for (pin, net) in &inst.pins {
            if cell.port(pin).is_some() {
                *sinks.entry(net).or_insert(0) += 1;
            }
        }
    }
    assert!(sinks.values().all(|&c| c == 1));
    // The clock feeds 4 cells (3 gates + 1 flip-flop): 3 splitters.
    let clock_splits = s.instances.iter().filter(|i| i.name.starts_with("sp_clk_")).count();
    assert_eq!(clock_splits, 3);
    assert_eq!(s.gate_count(), b.netlist.gate_count());
    assert_function_preserved(
        &n,
        &BalancedNetlist {
            netlist: s,
            ..b.clone()
        },
    );
    // A generous limit leaves the netlist alone.
    assert_eq!(insert_splitters(&b.netlist, &pdk, 16).unwrap(), b.netlist);
}

#[test]
fn missing_cells_fail_loudly() {
    let pdk = Pdk::load(r#"{"name": "tiny", "cells": [{"name": "JTL", "kind": "merge", "jj_count": 2, "delay_ps": 1.0, "power_uw": 0.1, "ports": [{"name": "a"}], "outputs": ["q"]}]}"#).unwrap();
    let n = CombNetlist::parse(SKEWED).unwrap();
    assert_eq!(
        balance_paths(&n, &pdk).unwrap_err(),
        BalanceError::MissingCell("DFF".into())
    );
    assert_eq!(
        insert_splitters(&Netlist::new("x"), &pdk, 1).unwrap_err(),
        BalanceError::MissingCell("SPLIT".into())
    );
}
