// SPDX-License-Identifier: Apache-2.0
//! End-to-end synthesis: encoding search, decomposition, marking, mapping
//! and verification.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::balancer::{insert_splitters, BalanceError};
use crate::decomposition::{
    counter_bit_slices, dump_tables, extract_tables, mark_effects, per_bit_expressions, recognize_groups,
    OptResultTable, UnmappablePattern,
};
use crate::encoding::{min_width, EncodingError, EncodingTree, StateEncoding, DEFAULT_MAX_ENCODINGS, MAX_TREE_WIDTH};
use crate::fsm::FiniteStateMachine;
use crate::mapping::{map_components, report, CostReport, MappingFailure, Netlist, Pdk};
use crate::netsim::{check_equivalence, Counterexample, Equivalence, SimError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub jobs: usize,
    /// Return the lowest-ordinal success rather than the first one found.
    pub deterministic: bool,
    /// Encodings tried per width.
    pub max_encodings: usize,
    /// Sequence length for the post-synthesis equivalence check; 0 skips it.
    pub check_depth: usize,
    /// Maximum sinks per net before splitters are inserted.
    pub splitters: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            deterministic: true,
            max_encodings: DEFAULT_MAX_ENCODINGS,
            check_depth: 5,
            splitters: None,
        }
    }
}

/// Why one encoding did not map.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttemptFailure {
    #[error(transparent)]
    Pattern(#[from] UnmappablePattern),
    #[error(transparent)]
    Mapping(#[from] MappingFailure),
}

impl AttemptFailure {
    /// Short keys used to rank failure causes.
    fn keys(&self) -> Vec<String> {
        match self {
            AttemptFailure::Pattern(p) => vec![format!("pattern {}", p.reason)],
            AttemptFailure::Mapping(m) => m
                .unmapped
                .iter()
                .map(|u| {
                    if u.signature.is_empty() {
                        u.reason.clone()
                    } else {
                        let sig: Vec<String> = u.signature.iter().map(|e| e.to_string()).collect();
                        format!("signature {}", sig.join(" "))
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempt {
    pub width: usize,
    pub ordinal: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SynthResult {
    pub netlist: Netlist,
    pub encoding: StateEncoding,
    pub width: usize,
    pub ordinal: usize,
    /// Encodings tried up to and including the chosen one.
    pub attempts: usize,
    pub failures: Vec<Attempt>,
    pub report: CostReport,
    pub equivalence: Option<Equivalence>,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no mappable encoding after {attempts} attempts; most common causes: {}", format_causes(.causes))]
    Exhausted {
        attempts: usize,
        causes: Vec<(String, usize)>,
    },
    #[error("synthesized netlist differs from the FSM on {:?}", .0.inputs)]
    NotEquivalent(Counterexample),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

fn format_causes(causes: &[(String, usize)]) -> String {
    let parts: Vec<String> = causes.iter().map(|(k, n)| format!("{k} (x{n})")).collect();
    parts.join(", ")
}

/// Marks and maps one set of per-bit expressions.
pub fn map_expressions(opt: &mut OptResultTable, pdk: &Pdk, name: &str) -> Result<Netlist, AttemptFailure> {
    let marking = recognize_groups(mark_effects(opt)?);
    Ok(map_components(&marking, pdk, name)?)
}

/// Runs the whole per-encoding pipeline.
pub fn try_encoding(fsm: &FiniteStateMachine, enc: &StateEncoding, pdk: &Pdk) -> Result<Netlist, AttemptFailure> {
    let (table, outputs) = extract_tables(fsm, enc);
    let mut opt = per_bit_expressions(&table, &outputs);
    let mut netlist = map_expressions(&mut opt, pdk, &fsm.name)?;
    netlist.metadata.encoding = fsm
        .states
        .iter()
        .enumerate()
        .map(|(s, name)| format!("{name}={}", enc.format_code(enc.code(s))))
        .collect();
    Ok(netlist)
}

/// Text dump of the intermediate tables for one encoding.
pub fn tables_for(fsm: &FiniteStateMachine, enc: &StateEncoding) -> String {
    let (table, outputs) = extract_tables(fsm, enc);
    let mut opt = per_bit_expressions(&table, &outputs);
    dump_tables(&fsm.states, &table, &outputs, &mut opt)
}

struct WidthOutcome {
    success: Option<(usize, StateEncoding, Netlist)>,
    failures: Vec<(usize, AttemptFailure)>,
}

fn search_width(
    fsm: &FiniteStateMachine,
    pdk: &Pdk,
    width: usize,
    config: &SynthConfig,
) -> Result<WidthOutcome, EncodingError> {
    let tree = EncodingTree::build(fsm, width)?;
    let source = Mutex::new(tree.encodings(config.max_encodings));
    let best = AtomicUsize::new(usize::MAX);
    let success: Mutex<Option<(usize, StateEncoding, Netlist)>> = Mutex::new(None);
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..config.jobs.max(1) {
            scope.spawn(|| loop {
                let Some(ranked) = source.lock().expect("encoding source").next() else {
                    return;
                };
                let found = best.load(Ordering::SeqCst);
                // Encodings arrive in ordinal order, so nothing later can win.
                if found != usize::MAX && (!config.deterministic || ranked.ordinal > found) {
                    return;
                }
                match try_encoding(fsm, &ranked.encoding, pdk) {
                    Ok(netlist) => {
                        best.fetch_min(ranked.ordinal, Ordering::SeqCst);
                        let mut slot = success.lock().expect("success slot");
                        if slot.as_ref().is_none_or(|(o, _, _)| ranked.ordinal < *o) {
                            *slot = Some((ranked.ordinal, ranked.encoding, netlist));
                        }
                    }
                    Err(e) => failures.lock().expect("failure log").push((ranked.ordinal, e)),
                }
            });
        }
    });
    let success = success.into_inner().expect("success slot");
    let mut failures = failures.into_inner().expect("failure log");
    failures.sort_by_key(|f| f.0);
    if let Some((ordinal, _, _)) = &success {
        failures.retain(|f| f.0 < *ordinal);
    }
    Ok(WidthOutcome { success, failures })
}

fn finish(netlist: &mut Netlist, pdk: &Pdk, config: &SynthConfig) -> Result<(), SynthError> {
    if let Some(k) = config.splitters {
        *netlist = insert_splitters(netlist, pdk, k)?;
    }
    netlist.refresh_metadata();
    Ok(())
}

/// Synthesizes `fsm`, widening the encoding when a width yields nothing.
pub fn synthesize(fsm: &FiniteStateMachine, pdk: &Pdk, config: &SynthConfig) -> Result<SynthResult, SynthError> {
    let n = fsm.states.len();
    let lo = min_width(n);
    let hi = n.max(lo).min(MAX_TREE_WIDTH).max(lo);
    let mut all_failures: Vec<Attempt> = Vec::new();
    let mut causes: BTreeMap<String, usize> = BTreeMap::new();
    for width in lo..=hi {
        let outcome = search_width(fsm, pdk, width, config)?;
        for (ordinal, f) in &outcome.failures {
            for k in f.keys() {
                *causes.entry(k).or_insert(0) += 1;
            }
            all_failures.push(Attempt {
                width,
                ordinal: *ordinal,
                reason: f.to_string(),
            });
        }
        let Some((ordinal, encoding, mut netlist)) = outcome.success else {
            continue;
        };
        netlist.metadata.ordinal = Some(ordinal as u64);
        finish(&mut netlist, pdk, config)?;
        let equivalence = if config.check_depth > 0 {
            let eq = check_equivalence(fsm, &netlist, pdk, config.check_depth)?;
            if let Some(cx) = eq.counterexample {
                return Err(SynthError::NotEquivalent(cx));
            }
            Some(eq)
        } else {
            None
        };
        let report = report(&netlist, pdk);
        return Ok(SynthResult {
            attempts: all_failures.len() + 1,
            netlist,
            encoding,
            width,
            ordinal,
            failures: all_failures,
            report,
            equivalence,
        });
    }
    let mut ranked: Vec<(String, usize)> = causes.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(5);
    Err(SynthError::Exhausted {
        attempts: all_failures.len(),
        causes: ranked,
    })
}

/// `bits`-wide up-counter built one bit slice at a time, for widths where
/// the explicit FSM is too large to enumerate.
pub fn synthesize_counter(bits: usize, pdk: &Pdk, config: &SynthConfig) -> Result<SynthResult, SynthError> {
    let mut opt = counter_bit_slices(bits);
    let name = format!("counter{bits}");
    let mut netlist = map_expressions(&mut opt, pdk, &name).map_err(|e| SynthError::Exhausted {
        attempts: 1,
        causes: e.keys().into_iter().map(|k| (k, 1)).collect(),
    })?;
    netlist.metadata.ordinal = Some(0);
    netlist.metadata.encoding = vec!["binary".into()];
    finish(&mut netlist, pdk, config)?;
    let report = report(&netlist, pdk);
    Ok(SynthResult {
        netlist,
        encoding: StateEncoding::new(bits, Vec::new()),
        width: bits,
        ordinal: 0,
        attempts: 1,
        failures: Vec::new(),
        report,
        equivalence: None,
    })
}
