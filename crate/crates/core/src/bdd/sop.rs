// SPDX-License-Identifier: Apache-2.0
//! Two-level minimization: prime implicants plus an exact branch-and-bound
//! cover for small supports, a BDD-driven expand/irredundant pass otherwise.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::{Bdd, BoolExpr, NodeId, VarOrder};

/// Supports up to this many variables are minimized exactly.
pub const EXACT_VAR_LIMIT: usize = 8;

/// Conjunction of literals `(variable, polarity)`, sorted by variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Cube {
    pub lits: Vec<(usize, bool)>,
}

impl Cube {
    pub fn new(mut lits: Vec<(usize, bool)>) -> Self {
        lits.sort_unstable();
        lits.dedup();
        Cube { lits }
    }

    pub fn literal_count(&self) -> usize {
        self.lits.len()
    }

    pub fn polarity(&self, var: usize) -> Option<bool> {
        self.lits.iter().find(|l| l.0 == var).map(|l| l.1)
    }

    pub fn without(&self, var: usize) -> Cube {
        Cube {
            lits: self.lits.iter().copied().filter(|l| l.0 != var).collect(),
        }
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.lits.iter().all(|&(v, p)| assignment[v] == p)
    }

    /// Two cubes share no satisfying assignment.
    pub fn disjoint(&self, other: &Cube) -> bool {
        self.lits.iter().any(|&(v, p)| other.polarity(v) == Some(!p))
    }
}

/// Disjunction of cubes. No cubes is FALSE; a single empty cube is TRUE.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Sop {
    pub cubes: Vec<Cube>,
}

impl Sop {
    pub fn is_false(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn is_true(&self) -> bool {
        self.cubes.iter().any(|c| c.lits.is_empty())
    }

    pub fn cube_count(&self) -> usize {
        self.cubes.len()
    }

    pub fn literal_count(&self) -> usize {
        self.cubes.iter().map(Cube::literal_count).sum()
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.cubes.iter().any(|c| c.eval(assignment))
    }

    pub fn to_expr(&self, order: &VarOrder) -> BoolExpr {
        let lit = |&(v, p): &(usize, bool)| {
            let x = BoolExpr::var(order.name(v));
            if p {
                x
            } else {
                BoolExpr::Not(Box::new(x))
            }
        };
        let mut terms: Vec<BoolExpr> = self
            .cubes
            .iter()
            .map(|c| match c.lits.len() {
                0 => BoolExpr::Const(true),
                1 => lit(&c.lits[0]),
                _ => BoolExpr::And(c.lits.iter().map(lit).collect()),
            })
            .collect();
        match terms.len() {
            0 => BoolExpr::Const(false),
            1 => terms.pop().unwrap(),
            _ => BoolExpr::Or(terms),
        }
    }

    pub fn display<'a>(&'a self, order: &'a VarOrder) -> impl fmt::Display + 'a {
        SopDisplay { sop: self, order }
    }
}

struct SopDisplay<'a> {
    sop: &'a Sop,
    order: &'a VarOrder,
}

impl fmt::Display for SopDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sop.to_expr(self.order))
    }
}

/// Implicant over local variables: `bits` holds fixed values, `mask` marks
/// free positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Implicant {
    bits: u32,
    mask: u32,
}

impl Implicant {
    fn covers(self, minterm: u32) -> bool {
        minterm & !self.mask == self.bits
    }

    fn literals(self, n: usize) -> usize {
        n - self.mask.count_ones() as usize
    }

    fn to_cube(self, n: usize) -> Cube {
        Cube::new(
            (0..n)
                .filter(|&v| self.mask >> v & 1 == 0)
                .map(|v| (v, self.bits >> v & 1 == 1))
                .collect(),
        )
    }
}

fn prime_implicants(n: usize, on: &[bool], dc: &[bool]) -> Vec<Implicant> {
    let mut level: HashSet<Implicant> = (0..1u32 << n)
        .filter(|&m| on[m as usize] || dc[m as usize])
        .map(|m| Implicant { bits: m, mask: 0 })
        .collect();
    let mut primes = Vec::new();
    while !level.is_empty() {
        let mut next = HashSet::new();
        let mut merged = HashSet::new();
        for &imp in &level {
            for v in 0..n {
                let bit = 1u32 << v;
                if imp.mask & bit != 0 || imp.bits & bit != 0 {
                    continue;
                }
                let partner = Implicant {
                    bits: imp.bits | bit,
                    mask: imp.mask,
                };
                if level.contains(&partner) {
                    merged.insert(imp);
                    merged.insert(partner);
                    next.insert(Implicant {
                        bits: imp.bits,
                        mask: imp.mask | bit,
                    });
                }
            }
        }
        primes.extend(level.iter().copied().filter(|i| !merged.contains(i)));
        level = next;
    }
    primes.sort_by_key(|p| (p.literals(n), p.bits, p.mask));
    primes
}

#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(len: usize) -> Self {
        Bits(vec![0; len.div_ceil(64).max(1)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }
    fn minus(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & !b).collect())
    }
    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(w, &word)| (0..64).filter(move |b| word >> b & 1 == 1).map(move |b| w * 64 + b))
    }
}

struct CoverProblem {
    n: usize,
    primes: Vec<Implicant>,
    covers: Vec<Bits>,
    row_primes: Vec<Vec<usize>>,
    row_conflicts: Vec<Bits>,
}

type Cost = (usize, usize);

impl CoverProblem {
    fn lower_bound(&self, uncovered: &Bits) -> usize {
        let mut rest = uncovered.clone();
        let mut count = 0;
        loop {
            let Some(r) = rest.ones().next() else { break };
            count += 1;
            rest = rest.minus(&self.row_conflicts[r]);
        }
        count
    }

    fn branch(&self, uncovered: &Bits, chosen: &mut Vec<usize>, cost: Cost, best: &mut Option<(Cost, Vec<usize>)>) {
        if uncovered.is_empty() {
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                *best = Some((cost, chosen.clone()));
            }
            return;
        }
        if let Some(((bc, bl), _)) = best {
            let lb = cost.0 + self.lower_bound(uncovered);
            if lb > *bc || (lb == *bc && cost.1 >= *bl) {
                return;
            }
        }
        let row = uncovered
            .ones()
            .min_by_key(|&r| self.row_primes[r].len())
            .expect("non-empty");
        for &p in &self.row_primes[row] {
            chosen.push(p);
            let rest = uncovered.minus(&self.covers[p]);
            self.branch(
                &rest,
                chosen,
                (cost.0 + 1, cost.1 + self.primes[p].literals(self.n)),
                best,
            );
            chosen.pop();
        }
    }
}

fn exact_cover(n: usize, on: &[bool], dc: &[bool]) -> Vec<Cube> {
    let rows: Vec<u32> = (0..1u32 << n).filter(|&m| on[m as usize]).collect();
    if rows.is_empty() {
        return Vec::new();
    }
    let primes = prime_implicants(n, on, dc);
    let covers: Vec<Bits> = primes
        .iter()
        .map(|p| {
            let mut b = Bits::new(rows.len());
            for (i, &m) in rows.iter().enumerate() {
                if p.covers(m) {
                    b.set(i);
                }
            }
            b
        })
        .collect();
    let row_primes: Vec<Vec<usize>> = (0..rows.len())
        .map(|r| (0..primes.len()).filter(|&p| covers[p].get(r)).collect())
        .collect();
    let row_conflicts = row_primes
        .iter()
        .map(|ps| {
            let mut b = Bits::new(rows.len());
            for &p in ps {
                for r in covers[p].ones() {
                    b.set(r);
                }
            }
            b
        })
        .collect();
    let problem = CoverProblem {
        n,
        primes,
        covers,
        row_primes,
        row_conflicts,
    };
    let mut all = Bits::new(rows.len());
    (0..rows.len()).for_each(|r| all.set(r));
    let mut best = None;
    problem.branch(&all, &mut Vec::new(), (0, 0), &mut best);
    let (_, chosen) = best.expect("primes always cover the on-set");
    let mut cubes: Vec<Cube> = chosen.into_iter().map(|p| problem.primes[p].to_cube(n)).collect();
    cubes.sort();
    cubes
}

fn greedy_cover(n: usize, on: &[bool], dc: &[bool]) -> Vec<Cube> {
    let allowed = |m: u32| on[m as usize] || dc[m as usize];
    let mut covered = vec![false; on.len()];
    let mut chosen: Vec<Implicant> = Vec::new();
    for m in 0..1u32 << n {
        if !on[m as usize] || covered[m as usize] {
            continue;
        }
        let mut imp = Implicant { bits: m, mask: 0 };
        for v in 0..n {
            let bit = 1u32 << v;
            let trial = Implicant {
                bits: imp.bits & !bit,
                mask: imp.mask | bit,
            };
            if (0..1u32 << n).filter(|&x| trial.covers(x)).all(allowed) {
                imp = trial;
            }
        }
        for x in 0..1u32 << n {
            if imp.covers(x) {
                covered[x as usize] = true;
            }
        }
        chosen.push(imp);
    }
    // irredundant pass
    let mut i = 0;
    while i < chosen.len() {
        let others: Vec<Implicant> = chosen
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &c)| c)
            .collect();
        let redundant = (0..1u32 << n)
            .filter(|&x| on[x as usize] && chosen[i].covers(x))
            .all(|x| others.iter().any(|o| o.covers(x)));
        if redundant {
            chosen.remove(i);
        } else {
            i += 1;
        }
    }
    let mut cubes: Vec<Cube> = chosen.into_iter().map(|p| p.to_cube(n)).collect();
    cubes.sort();
    cubes
}

/// Minimum SOP over `n` local variables (variable `i` is bit `i` of the
/// minterm index). `on` and `dc` are indexed by minterm; `dc` entries may be
/// covered or not. Exact for `n <= EXACT_VAR_LIMIT`.
pub fn minimize_truth_table(n: usize, on: &[bool], dc: &[bool]) -> Vec<Cube> {
    assert!(n <= 20, "truth-table minimization limited to 20 variables");
    assert_eq!(on.len(), 1 << n);
    assert_eq!(dc.len(), 1 << n);
    if n <= EXACT_VAR_LIMIT {
        exact_cover(n, on, dc)
    } else {
        greedy_cover(n, on, dc)
    }
}

pub(super) fn bdd_to_min_sop(bdd: &mut Bdd, f: NodeId) -> Sop {
    if f == NodeId::FALSE {
        return Sop::default();
    }
    if f == NodeId::TRUE {
        return Sop {
            cubes: vec![Cube::default()],
        };
    }
    let support: Vec<usize> = bdd.support(f).into_iter().collect();
    let n = support.len();
    if n <= EXACT_VAR_LIMIT {
        let mut assignment = vec![false; bdd.order().len()];
        let on: Vec<bool> = (0..1u32 << n)
            .map(|m| {
                for (i, &v) in support.iter().enumerate() {
                    assignment[v] = m >> i & 1 == 1;
                }
                bdd.eval(f, &assignment)
            })
            .collect();
        let dc = vec![false; on.len()];
        let cubes = exact_cover(n, &on, &dc)
            .into_iter()
            .map(|c| Cube::new(c.lits.into_iter().map(|(v, p)| (support[v], p)).collect()))
            .collect();
        return normalize(Sop { cubes });
    }
    // Large supports: expand BDD paths to primes, then drop redundant cubes.
    let mut cubes: BTreeSet<Cube> = BTreeSet::new();
    for path in bdd.paths(f) {
        let mut cube = path;
        for &(v, _) in cube.lits.clone().iter() {
            let trial = cube.without(v);
            let t = bdd.cube(&trial.lits);
            if bdd.implies(t, f) {
                cube = trial;
            }
        }
        cubes.insert(cube);
    }
    let mut list: Vec<Cube> = cubes.into_iter().collect();
    let mut i = 0;
    while i < list.len() {
        let mut rest = NodeId::FALSE;
        for (j, c) in list.iter().enumerate() {
            if j != i {
                let x = bdd.cube(&c.lits);
                rest = bdd.or(rest, x);
            }
        }
        let me = bdd.cube(&list[i].lits);
        if bdd.implies(me, rest) {
            list.remove(i);
        } else {
            i += 1;
        }
    }
    normalize(Sop { cubes: list })
}

fn normalize(mut sop: Sop) -> Sop {
    sop.cubes
        .sort_by(|a, b| a.lits.len().cmp(&b.lits.len()).then_with(|| a.cmp(b)));
    sop
}
