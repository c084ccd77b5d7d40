// SPDX-License-Identifier: Apache-2.0
//! Heuristic state-encoding tree.
//!
//! States are visited in depth-first order from the initial state, which is
//! pinned to the all-zero code. Each tree level assigns a code to the next
//! state in that order; children are ranked by the Hamming distance they add
//! across transitions to already-coded states, so encodings where a signal
//! flips few bits come first. The tree is never materialized: [`Encodings`]
//! walks it lazily, left to right.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::fsm::FiniteStateMachine;

/// Widest code the tree will enumerate over.
pub const MAX_TREE_WIDTH: usize = 20;

/// Default cap on encodings drawn from one tree.
pub const DEFAULT_MAX_ENCODINGS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("{states} states do not fit in {width} bit(s)")]
    WidthTooSmall { states: usize, width: usize },
    #[error("width {0} exceeds the supported maximum of {MAX_TREE_WIDTH}")]
    WidthTooLarge(usize),
}

/// Injective map from states to `width`-bit codes; the initial state is zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateEncoding {
    pub width: usize,
    /// Code of each state, indexed like `FiniteStateMachine::states`.
    pub codes: Vec<u64>,
}

impl StateEncoding {
    pub fn new(width: usize, codes: Vec<u64>) -> Self {
        StateEncoding { width, codes }
    }

    /// Minimal-width binary encoding in state declaration order.
    pub fn binary(states: usize) -> Self {
        StateEncoding {
            width: min_width(states),
            codes: (0..states as u64).collect(),
        }
    }

    pub fn code(&self, state: usize) -> u64 {
        self.codes[state]
    }

    pub fn state_of(&self, code: u64) -> Option<usize> {
        self.codes.iter().position(|&c| c == code)
    }

    pub fn bit(&self, state: usize, bit: usize) -> bool {
        self.codes[state] >> bit & 1 == 1
    }

    /// Injective, in range, initial state all-zero.
    pub fn is_valid(&self, initial: usize) -> bool {
        let distinct: BTreeSet<u64> = self.codes.iter().copied().collect();
        distinct.len() == self.codes.len()
            && self.codes.get(initial) == Some(&0)
            && self.codes.iter().all(|&c| self.width >= 64 || c < 1u64 << self.width)
    }

    /// Bit string of a code, most significant bit first.
    pub fn format_code(&self, code: u64) -> String {
        (0..self.width)
            .rev()
            .map(|b| if code >> b & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// Largest Hamming distance across the machine's transitions.
    pub fn max_flip(&self, fsm: &FiniteStateMachine) -> u32 {
        fsm.transitions
            .iter()
            .map(|(&(s, _), &t)| (self.codes[s] ^ self.codes[t]).count_ones())
            .max()
            .unwrap_or(0)
    }

    /// Sum of Hamming distances across the machine's transitions.
    pub fn total_flip(&self, fsm: &FiniteStateMachine) -> u32 {
        fsm.transitions
            .iter()
            .map(|(&(s, _), &t)| (self.codes[s] ^ self.codes[t]).count_ones())
            .sum()
    }
}

/// `ceil(log2(states))`, zero for a single state.
pub fn min_width(states: usize) -> usize {
    let mut w = 0;
    while (1usize << w) < states {
        w += 1;
    }
    w
}

/// Candidate effect a signal may have on the state bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignalKind {
    Set,
    Clear,
    Toggle,
    Hold,
    Undecided,
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalKind::Set => "set",
            SignalKind::Clear => "clear",
            SignalKind::Toggle => "toggle",
            SignalKind::Hold => "hold",
            SignalKind::Undecided => "undecided",
        })
    }
}

pub type KindSet = BTreeSet<SignalKind>;

/// Per-signal candidate kinds committed along a tree path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignalTypeHypothesis {
    pub kinds: BTreeMap<usize, KindSet>,
}

impl SignalTypeHypothesis {
    pub fn get(&self, signal: usize) -> Option<&KindSet> {
        self.kinds.get(&signal)
    }

    fn is_exactly(&self, signal: usize, kind: SignalKind) -> bool {
        self.kinds
            .get(&signal)
            .is_some_and(|k| k.len() == 1 && k.contains(&kind))
    }
}

/// Guesses what a transition `curr -> next` says about its signal.
///
/// `returning` is true when `next` was discovered no later than `curr`. A
/// forward move may be a set or a toggle, a return (notably to the initial
/// state) a clear or a toggle, and a self-loop a hold. The guess is narrowed
/// by `committed` when the two overlap; otherwise the signal is undecided.
pub fn guess_signal_type(curr: usize, next: usize, returning: bool, committed: Option<&KindSet>) -> KindSet {
    let guess: KindSet = if curr == next {
        [SignalKind::Hold].into()
    } else if returning {
        [SignalKind::Clear, SignalKind::Toggle].into()
    } else {
        [SignalKind::Set, SignalKind::Toggle].into()
    };
    match committed {
        None => guess,
        Some(c) if guess.contains(&SignalKind::Hold) => c.clone(),
        Some(c) => {
            let both: KindSet = guess.intersection(c).copied().collect();
            if both.is_empty() {
                [SignalKind::Undecided].into()
            } else {
                both
            }
        }
    }
}

/// Implicit encoding tree over one machine at one width.
#[derive(Debug, Clone)]
pub struct EncodingTree {
    pub width: usize,
    state_count: usize,
    /// States in assignment order; `order[0]` is the initial state.
    pub order: Vec<usize>,
    /// Hypotheses after the first `k + 1` states of `order` were expanded.
    pub hypotheses: Vec<SignalTypeHypothesis>,
    /// Non-self-loop transitions `(from, signal, to)`.
    edges: Vec<(usize, usize, usize)>,
    /// Edges incident to `order[k]` whose other end is in `order[..=k]`.
    edges_at: Vec<Vec<(usize, usize, usize)>>,
}

impl EncodingTree {
    pub fn build(fsm: &FiniteStateMachine, width: usize) -> Result<Self, EncodingError> {
        let n = fsm.states.len();
        if width > MAX_TREE_WIDTH {
            return Err(EncodingError::WidthTooLarge(width));
        }
        if (1usize << width) < n {
            return Err(EncodingError::WidthTooSmall { states: n, width });
        }
        let order = dfs_order(fsm);
        let mut pos = vec![0; n];
        for (k, &s) in order.iter().enumerate() {
            pos[s] = k;
        }

        let mut hypotheses = Vec::with_capacity(n);
        let mut current = SignalTypeHypothesis::default();
        for &s in &order {
            for sig in 0..fsm.inputs.len() {
                let Some(&t) = fsm.transitions.get(&(s, sig)) else {
                    continue;
                };
                let guess = guess_signal_type(s, t, pos[t] <= pos[s], current.get(sig));
                if !guess.contains(&SignalKind::Hold) {
                    current.kinds.insert(sig, guess);
                }
            }
            hypotheses.push(current.clone());
        }

        let edges: Vec<_> = fsm
            .transitions
            .iter()
            .filter(|(&(s, _), &t)| s != t)
            .map(|(&(s, f), &t)| (s, f, t))
            .collect();
        let edges_at = (0..n)
            .map(|k| {
                edges
                    .iter()
                    .copied()
                    .filter(|&(s, _, t)| (s == order[k] && pos[t] <= k) || (t == order[k] && pos[s] <= k))
                    .collect()
            })
            .collect();
        Ok(EncodingTree {
            width,
            state_count: n,
            order,
            hypotheses,
            edges,
            edges_at,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn transitions(&self) -> &[(usize, usize, usize)] {
        &self.edges
    }

    /// Ranked children of a partial assignment covering `order[..depth]`.
    /// Each child is `(added cost, code for order[depth])`.
    pub fn children(&self, codes: &[Option<u64>], depth: usize) -> Vec<(u32, u64)> {
        let state = self.order[depth];
        let hyp = &self.hypotheses[depth];
        let used: BTreeSet<u64> = codes.iter().flatten().copied().collect();
        let mut out: Vec<(u32, u64)> = (1..1u64 << self.width)
            .filter(|c| !used.contains(c))
            .filter_map(|c| {
                let code_of = |s: usize| if s == state { Some(c) } else { codes[s] };
                let mut cost = 0;
                for &(s, f, t) in &self.edges_at[depth] {
                    let (Some(a), Some(b)) = (code_of(s), code_of(t)) else {
                        continue;
                    };
                    if hyp.is_exactly(f, SignalKind::Set) && a & !b != 0 {
                        return None;
                    }
                    if hyp.is_exactly(f, SignalKind::Clear) && !a & b != 0 {
                        return None;
                    }
                    cost += (a ^ b).count_ones();
                }
                Some((cost, c))
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Leaves in left-to-right order, at most `limit` of them.
    pub fn encodings(&self, limit: usize) -> Encodings<'_> {
        Encodings::new(self, limit)
    }
}

fn dfs_order(fsm: &FiniteStateMachine) -> Vec<usize> {
    fn visit(fsm: &FiniteStateMachine, s: usize, seen: &mut Vec<bool>, out: &mut Vec<usize>) {
        seen[s] = true;
        out.push(s);
        for sig in 0..fsm.inputs.len() {
            if let Some(&t) = fsm.transitions.get(&(s, sig)) {
                if !seen[t] {
                    visit(fsm, t, seen, out);
                }
            }
        }
    }
    let mut seen = vec![false; fsm.states.len()];
    let mut out = Vec::with_capacity(fsm.states.len());
    visit(fsm, fsm.initial, &mut seen, &mut out);
    for s in 0..fsm.states.len() {
        if !seen[s] {
            visit(fsm, s, &mut seen, &mut out);
        }
    }
    out
}

/// Encoding tagged with its position in the left-to-right leaf order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedEncoding {
    pub ordinal: usize,
    pub encoding: StateEncoding,
}

/// Lazy depth-first walk over the leaves of an [`EncodingTree`].
pub struct Encodings<'a> {
    tree: &'a EncodingTree,
    codes: Vec<Option<u64>>,
    /// One frame per assigned depth >= 1: remaining ranked children.
    stack: Vec<std::vec::IntoIter<(u32, u64)>>,
    emitted: usize,
    limit: usize,
    started: bool,
}

impl<'a> Encodings<'a> {
    fn new(tree: &'a EncodingTree, limit: usize) -> Self {
        let mut codes = vec![None; tree.state_count];
        codes[tree.order[0]] = Some(0);
        Encodings {
            tree,
            codes,
            stack: Vec::new(),
            emitted: 0,
            limit,
            started: false,
        }
    }

    fn leaf(&mut self) -> RankedEncoding {
        let enc = StateEncoding::new(
            self.tree.width,
            self.codes.iter().map(|c| c.expect("complete leaf")).collect(),
        );
        let ordinal = self.emitted;
        self.emitted += 1;
        RankedEncoding { ordinal, encoding: enc }
    }

    /// Descends from the current depth, taking first children, until a leaf
    /// is complete. Returns false when a dead end empties the stack.
    fn descend(&mut self) -> bool {
        loop {
            let depth = self.stack.len() + 1;
            if depth == self.tree.state_count {
                return true;
            }
            let children = self.tree.children(&self.codes, depth);
            self.stack.push(children.into_iter());
            if !self.advance() {
                return false;
            }
        }
    }

    /// Moves the deepest frame to its next child, popping exhausted frames.
    fn advance(&mut self) -> bool {
        while !self.stack.is_empty() {
            let depth = self.stack.len();
            let state = self.tree.order[depth];
            let frame = self.stack.last_mut().expect("non-empty");
            if let Some((_, code)) = frame.next() {
                self.codes[state] = Some(code);
                return true;
            }
            self.codes[state] = None;
            self.stack.pop();
        }
        false
    }
}

impl Iterator for Encodings<'_> {
    type Item = RankedEncoding;

    fn next(&mut self) -> Option<RankedEncoding> {
        if self.emitted >= self.limit {
            return None;
        }
        if !self.started {
            self.started = true;
            if self.tree.state_count == 1 {
                return Some(self.leaf());
            }
        } else if self.tree.state_count == 1 || !self.advance() {
            return None;
        }
        loop {
            if self.descend() {
                return Some(self.leaf());
            }
            if !self.advance() {
                return None;
            }
        }
    }
}
