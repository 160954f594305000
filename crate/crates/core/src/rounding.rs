//! Dependent rounding on a bipartite graph.
//!
//! Each left node draws Dirichlet-copula uniforms A_e over its edges and
//! turns them into exponential clocks Z_e = −ln(A_e)/x_e. A right node v then
//! selects edge e when (1 − x_e)·Z_e < (x(N(v)) − x_e)·min_{f ∈ N(v)∖e} Z_f.
//!
//! Conventions used where the rule degenerates:
//! * x_e = 0 means Z_e = +∞ and e is never selected;
//! * when the other edges of v carry no mass, the right-hand side is 0·∞.
//!   For any positive mass m on the other edges, m·min Z_f is a standard
//!   exponential independent of Z_e, so the rule is continued to this case by
//!   comparing (1 − x_e)·Z_e against a fresh Exp(1) variate drawn from a
//!   stream keyed by the right node. With x_e = 1 this selects e always;
//! * ties are not selected;
//! * when x(N(v)) = 1 (within 1e-12) the rule is evaluated in its exact-sum
//!   form, i.e. the edge with the strictly smallest clock wins. This keeps
//!   "exactly one edge per fully covered right node" immune to rounding in
//!   the floating-point sum.

use crate::copula::{copula_into, CopulaDraw, CopulaError};
use crate::exec::{run_blocks, DEFAULT_BLOCK};
use crate::psi::{psi_upper_bound, PsiQuery, DEFAULT_ORDER};
use crate::randomness::RngState;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use thiserror::Error;

/// Slack on the degree-sum constraints.
pub const DEGREE_SLACK: f64 = 1e-12;

/// Mixed into the pass seed to key the right-node tie-in streams apart from
/// the left-node copula streams.
pub(crate) const RIGHT_DOMAIN: u64 = 0x5249_4748_545F_5344;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: String,
    pub v: String,
    pub x: f64,
    pub rho: f64,
}

/// Left nodes, right nodes and weighted edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteInstance {
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub edges: Vec<Edge>,
}

impl BipartiteInstance {
    pub fn from_json(text: &str) -> Result<Self, RoundingError> {
        serde_json::from_str(text).map_err(|e| RoundingError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// "u~v", the identifier used in reports.
    pub fn edge_label(&self, e: usize) -> String {
        format!("{}~{}", self.edges[e].u, self.edges[e].v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    DuplicateNode { id: String },
    UnknownNode { edge: usize, id: String },
    DuplicateEdge { u: String, v: String },
    BadValue { edge: usize, field: &'static str, value: f64 },
    RightOverload { v: String, sum: f64 },
    LeftOverload { u: String, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode { id } => write!(f, "node {id} declared twice"),
            Violation::UnknownNode { edge, id } => write!(f, "edge {edge} references undeclared node {id}"),
            Violation::DuplicateEdge { u, v } => write!(f, "edge ({u}, {v}) appears more than once"),
            Violation::BadValue { edge, field, value } => write!(f, "edge {edge}: {field} = {value} outside [0, 1]"),
            Violation::RightOverload { v, sum } => write!(f, "right node {v}: x(N(v)) = {sum} > 1"),
            Violation::LeftOverload { u, sum } => write!(f, "left node {u}: rho(N(u)) = {sum} > 1"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoundingError {
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("cannot parse instance: {0}")]
    Parse(String),
    #[error("edge index {0} is not part of the instance")]
    UnknownEdge(usize),
    #[error("edge set is not stable: {0}")]
    NotStable(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Copula(#[from] CopulaError),
    #[error("{0}")]
    Bound(String),
}

/// Checks well-formedness and the two degree-sum constraints.
pub fn validate_instance(inst: &BipartiteInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut left = HashSet::new();
    let mut right = HashSet::new();
    for id in &inst.left {
        if !left.insert(id.as_str()) {
            out.push(Violation::DuplicateNode { id: id.clone() });
        }
    }
    for id in &inst.right {
        if !right.insert(id.as_str()) || left.contains(id.as_str()) {
            out.push(Violation::DuplicateNode { id: id.clone() });
        }
    }
    let mut seen = HashSet::new();
    let mut x_sum: BTreeMap<&str, f64> = BTreeMap::new();
    let mut rho_sum: BTreeMap<&str, f64> = BTreeMap::new();
    for (i, e) in inst.edges.iter().enumerate() {
        if !left.contains(e.u.as_str()) {
            out.push(Violation::UnknownNode { edge: i, id: e.u.clone() });
        }
        if !right.contains(e.v.as_str()) {
            out.push(Violation::UnknownNode { edge: i, id: e.v.clone() });
        }
        if !seen.insert((e.u.as_str(), e.v.as_str())) {
            out.push(Violation::DuplicateEdge {
                u: e.u.clone(),
                v: e.v.clone(),
            });
        }
        for (field, value) in [("x", e.x), ("rho", e.rho)] {
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::BadValue { edge: i, field, value });
            }
        }
        *x_sum.entry(e.v.as_str()).or_default() += e.x;
        *rho_sum.entry(e.u.as_str()).or_default() += e.rho;
    }
    for (v, s) in x_sum {
        if s > 1.0 + DEGREE_SLACK {
            out.push(Violation::RightOverload { v: v.to_string(), sum: s });
        }
    }
    for (u, s) in rho_sum {
        if s > 1.0 + DEGREE_SLACK {
            out.push(Violation::LeftOverload { u: u.to_string(), sum: s });
        }
    }
    out
}

/// Decides selections at one right node. `x[i]` and `z[i]` describe the
/// node's edges; `out[i]` receives the decision. `exp1` supplies a standard
/// exponential and is called only when a single edge carries all the mass.
pub(crate) fn select_at_right(x: &[f64], z: &[f64], out: &mut [bool], exp1: &mut dyn FnMut() -> f64) {
    let total: f64 = x.iter().sum();
    let exact_cover = (total - 1.0).abs() <= DEGREE_SLACK;
    for e in 0..x.len() {
        out[e] = false;
        if x[e] == 0.0 || !z[e].is_finite() {
            continue;
        }
        let mut other = 0.0;
        let mut min_other = f64::INFINITY;
        for f in 0..x.len() {
            if f != e {
                other += x[f];
                min_other = min_other.min(z[f]);
            }
        }
        out[e] = if exact_cover {
            z[e] < min_other
        } else if other == 0.0 {
            (1.0 - x[e]) * z[e] < exp1()
        } else {
            (1.0 - x[e]) * z[e] < other * min_other
        };
    }
}

/// Per-edge result of one rounding pass, in instance edge order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundingOutcome {
    pub selected: Vec<bool>,
    pub z: Vec<f64>,
    pub a: Vec<f64>,
}

/// An instance indexed for repeated rounding.
#[derive(Debug, Clone)]
pub struct Rounder<'a> {
    inst: &'a BipartiteInstance,
    /// edges of each left node, left nodes in sorted-identifier order
    by_left: Vec<Vec<usize>>,
    left_rho: Vec<Vec<f64>>,
    left_slack: Vec<f64>,
    by_right: Vec<Vec<usize>>,
    edge_left: Vec<usize>,
    edge_right: Vec<usize>,
}

#[derive(Default)]
pub(crate) struct Scratch {
    draw: CopulaDraw,
    xs: Vec<f64>,
    zs: Vec<f64>,
    sel: Vec<bool>,
}

impl<'a> Rounder<'a> {
    pub fn new(inst: &'a BipartiteInstance) -> Result<Self, RoundingError> {
        let violations = validate_instance(inst);
        if !violations.is_empty() {
            return Err(RoundingError::Invalid(violations));
        }
        let mut left_sorted: Vec<&str> = inst.left.iter().map(String::as_str).collect();
        left_sorted.sort_unstable();
        let left_index: HashMap<&str, usize> = left_sorted.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let right_index: HashMap<&str, usize> = inst.right.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut by_left = vec![Vec::new(); left_sorted.len()];
        let mut by_right = vec![Vec::new(); inst.right.len()];
        let mut edge_left = Vec::with_capacity(inst.edges.len());
        let mut edge_right = Vec::with_capacity(inst.edges.len());
        for (i, e) in inst.edges.iter().enumerate() {
            let l = left_index[e.u.as_str()];
            let r = right_index[e.v.as_str()];
            by_left[l].push(i);
            by_right[r].push(i);
            edge_left.push(l);
            edge_right.push(r);
        }
        let left_rho: Vec<Vec<f64>> = by_left.iter().map(|es| es.iter().map(|&e| inst.edges[e].rho).collect()).collect();
        let left_slack = left_rho.iter().map(|r| (1.0 - r.iter().sum::<f64>()).max(0.0)).collect();
        Ok(Self {
            inst,
            by_left,
            left_rho,
            left_slack,
            by_right,
            edge_left,
            edge_right,
        })
    }

    pub fn instance(&self) -> &BipartiteInstance {
        self.inst
    }

    pub fn num_edges(&self) -> usize {
        self.inst.edges.len()
    }

    /// Index of the left node of edge `e` in sorted-identifier order.
    pub fn left_of(&self, e: usize) -> usize {
        self.edge_left[e]
    }

    /// Index of the right node of edge `e` in declaration order.
    pub fn right_of(&self, e: usize) -> usize {
        self.edge_right[e]
    }

    /// One rounding pass. Draws a single `u64` from `rng`; left node ℓ (in
    /// sorted order) then uses substream ℓ of that value.
    pub fn round(&self, rng: &mut RngState) -> Result<RoundingOutcome, RoundingError> {
        let mut out = RoundingOutcome::default();
        let mut scratch = Scratch::default();
        self.round_into(rng.next_u64(), &mut scratch, &mut out)?;
        Ok(out)
    }

    pub(crate) fn round_into(&self, base: u64, s: &mut Scratch, out: &mut RoundingOutcome) -> Result<(), RoundingError> {
        let m = self.inst.edges.len();
        out.selected.clear();
        out.selected.resize(m, false);
        out.z.clear();
        out.z.resize(m, f64::INFINITY);
        out.a.clear();
        out.a.resize(m, 0.0);
        for (l, edges) in self.by_left.iter().enumerate() {
            if edges.is_empty() {
                continue;
            }
            let mut rng = RngState::keyed(base, l as u64);
            copula_into(&self.left_rho[l], self.left_slack[l], &mut rng, &mut s.draw)?;
            for (k, &e) in edges.iter().enumerate() {
                let x = self.inst.edges[e].x;
                out.a[e] = s.draw.a[k];
                out.z[e] = if x > 0.0 { -s.draw.ln_a[k] / x } else { f64::INFINITY };
            }
        }
        for (r, edges) in self.by_right.iter().enumerate() {
            s.xs.clear();
            s.zs.clear();
            for &e in edges {
                s.xs.push(self.inst.edges[e].x);
                s.zs.push(out.z[e]);
            }
            s.sel.clear();
            s.sel.resize(edges.len(), false);
            let mut exp1 = || -RngState::keyed(base ^ RIGHT_DOMAIN, r as u64).uniform_open().ln();
            select_at_right(&s.xs, &s.zs, &mut s.sel, &mut exp1);
            for (k, &e) in edges.iter().enumerate() {
                out.selected[e] = s.sel[k];
            }
        }
        Ok(())
    }
}

/// One pass of dependent rounding.
pub fn dep_round(inst: &BipartiteInstance, rng: &mut RngState) -> Result<RoundingOutcome, RoundingError> {
    Rounder::new(inst)?.round(rng)
}

/// Baseline: every right node independently picks at most one of its edges
/// with probabilities x_e.
pub fn independent_round(inst: &BipartiteInstance, rng: &mut RngState) -> Result<Vec<bool>, RoundingError> {
    let r = Rounder::new(inst)?;
    let mut selected = vec![false; inst.edges.len()];
    for edges in &r.by_right {
        let u = rng.uniform_open();
        let mut acc = 0.0;
        for &e in edges {
            acc += inst.edges[e].x;
            if u < acc {
                selected[e] = true;
                break;
            }
        }
    }
    Ok(selected)
}

/// True iff no two edges of `set` are at line-graph distance exactly two.
pub fn stable_set_check(inst: &BipartiteInstance, set: &[usize]) -> Result<bool, RoundingError> {
    if let Some(&bad) = set.iter().find(|&&e| e >= inst.edges.len()) {
        return Err(RoundingError::UnknownEdge(bad));
    }
    let present: HashSet<(&str, &str)> = inst.edges.iter().map(|e| (e.u.as_str(), e.v.as_str())).collect();
    for (i, &e) in set.iter().enumerate() {
        for &f in &set[i + 1..] {
            if distance_is_two(&inst.edges[e], &inst.edges[f], &present) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn distance_is_two(e: &Edge, f: &Edge, present: &HashSet<(&str, &str)>) -> bool {
    if e.u == f.u || e.v == f.v {
        return false; // identical or adjacent
    }
    present.contains(&(e.u.as_str(), f.v.as_str())) || present.contains(&(f.u.as_str(), e.v.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    /// Pr[X_e = 1] against x_e, two-sided.
    Marginal,
    /// E[X_e X_f] for edges sharing a left node, against x_e x_f Ψ_upper.
    SameLeft,
    /// E[X_e X_f] for edges sharing a right node; exactly 0.
    SameRight,
    /// E[X_e X_f] for a stable pair with distinct endpoints, against x_e x_f.
    CrossLeft,
    /// E[∏_{e∈S} X_e] for a supplied stable set, against ∏ x_e.
    StableSet,
}

impl StatKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::Marginal => "marginal",
            StatKind::SameLeft => "same_left",
            StatKind::SameRight => "same_right",
            StatKind::CrossLeft => "cross_left",
            StatKind::StableSet => "stable_set",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatRow {
    pub kind: StatKind,
    pub ids: String,
    pub edges: Vec<usize>,
    pub empirical: f64,
    pub bound: f64,
    /// 4σ with σ evaluated at the bound.
    pub half_width: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub trials: u64,
    pub rows: Vec<StatRow>,
    /// Trials on which some right node had more than one selected edge.
    pub overfull_trials: u64,
}

impl StatsReport {
    pub fn all_pass(&self) -> bool {
        self.overfull_trials == 0 && self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,ids,empirical,bound,half_width,pass\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.kind.as_str(),
                r.ids,
                r.empirical,
                r.bound,
                r.half_width,
                r.pass
            ));
        }
        s
    }
}

struct Counts {
    single: Vec<u64>,
    pair: Vec<u64>,
    sets: Vec<u64>,
    overfull: u64,
}

/// Monte Carlo check of the moment guarantees of dependent rounding.
///
/// Every pair of edges gets a row: same left node, same right node, or a
/// stable pair with distinct endpoints (pairs at line-graph distance two
/// carry no guarantee and are skipped). `stable_sets` adds product-moment
/// rows; each set must be stable.
pub fn estimate_stats(
    inst: &BipartiteInstance,
    trials: u64,
    stable_sets: &[Vec<usize>],
    rng: &mut RngState,
) -> Result<StatsReport, RoundingError> {
    if trials == 0 {
        return Err(RoundingError::NoTrials);
    }
    let rounder = Rounder::new(inst)?;
    for s in stable_sets {
        if !stable_set_check(inst, s)? {
            let names: Vec<String> = s.iter().map(|&e| inst.edge_label(e)).collect();
            return Err(RoundingError::NotStable(names.join(";")));
        }
    }
    let m = inst.edges.len();
    let base = RngState::new(rng.next_u64());
    let blocks = run_blocks(trials, DEFAULT_BLOCK, |b, n| -> Result<Counts, RoundingError> {
        let mut r = base.substream(b);
        let mut c = Counts {
            single: vec![0; m],
            pair: vec![0; m * m],
            sets: vec![0; stable_sets.len()],
            overfull: 0,
        };
        let mut scratch = Scratch::default();
        let mut out = RoundingOutcome::default();
        let mut chosen = Vec::new();
        let mut per_right = vec![0u32; inst.right.len()];
        for _ in 0..n {
            rounder.round_into(r.next_u64(), &mut scratch, &mut out)?;
            chosen.clear();
            chosen.extend((0..m).filter(|&e| out.selected[e]));
            per_right.iter_mut().for_each(|v| *v = 0);
            let mut overfull = false;
            for &e in &chosen {
                c.single[e] += 1;
                let rv = rounder.right_of(e);
                per_right[rv] += 1;
                overfull |= per_right[rv] > 1;
            }
            c.overfull += overfull as u64;
            for (i, &e) in chosen.iter().enumerate() {
                for &f in &chosen[i + 1..] {
                    c.pair[e * m + f] += 1;
                }
            }
            for (k, s) in stable_sets.iter().enumerate() {
                if s.iter().all(|&e| out.selected[e]) {
                    c.sets[k] += 1;
                }
            }
        }
        Ok(c)
    });
    let mut total = Counts {
        single: vec![0; m],
        pair: vec![0; m * m],
        sets: vec![0; stable_sets.len()],
        overfull: 0,
    };
    for b in blocks {
        let b = b?;
        total.single.iter_mut().zip(&b.single).for_each(|(t, v)| *t += v);
        total.pair.iter_mut().zip(&b.pair).for_each(|(t, v)| *t += v);
        total.sets.iter_mut().zip(&b.sets).for_each(|(t, v)| *t += v);
        total.overfull += b.overfull;
    }

    let n = trials as f64;
    let four_sigma = |p: f64| 4.0 * (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n).sqrt();
    let upper_row = |kind, edges: Vec<usize>, count: u64, bound: f64| {
        let emp = count as f64 / n;
        let hw = four_sigma(bound);
        StatRow {
            kind,
            ids: edges.iter().map(|&e| inst.edge_label(e)).collect::<Vec<_>>().join(";"),
            edges,
            empirical: emp,
            bound,
            half_width: hw,
            pass: emp <= bound + hw,
        }
    };
    let mut rows = Vec::new();
    for e in 0..m {
        let x = inst.edges[e].x;
        let emp = total.single[e] as f64 / n;
        let hw = four_sigma(x);
        rows.push(StatRow {
            kind: StatKind::Marginal,
            ids: inst.edge_label(e),
            edges: vec![e],
            empirical: emp,
            bound: x,
            half_width: hw,
            pass: (emp - x).abs() <= hw,
        });
    }
    let present: HashSet<(&str, &str)> = inst.edges.iter().map(|e| (e.u.as_str(), e.v.as_str())).collect();
    for e in 0..m {
        for f in e + 1..m {
            let (ee, ff) = (&inst.edges[e], &inst.edges[f]);
            let count = total.pair[e * m + f];
            if ee.u == ff.u {
                let bound = if ee.x == 0.0 || ff.x == 0.0 {
                    0.0
                } else {
                    let q = PsiQuery::new(ee.x, ff.x, ee.rho, ff.rho).map_err(|err| RoundingError::Bound(err.to_string()))?;
                    ee.x * ff.x * psi_upper_bound(&q, DEFAULT_ORDER, DEFAULT_ORDER).map_err(|err| RoundingError::Bound(err.to_string()))?
                };
                rows.push(upper_row(StatKind::SameLeft, vec![e, f], count, bound));
            } else if ee.v == ff.v {
                let mut row = upper_row(StatKind::SameRight, vec![e, f], count, 0.0);
                row.pass = count == 0;
                rows.push(row);
            } else if !distance_is_two(ee, ff, &present) {
                rows.push(upper_row(StatKind::CrossLeft, vec![e, f], count, ee.x * ff.x));
            }
        }
    }
    for (k, s) in stable_sets.iter().enumerate() {
        let bound = s.iter().map(|&e| inst.edges[e].x).product();
        rows.push(upper_row(StatKind::StableSet, s.clone(), total.sets[k], bound));
    }
    Ok(StatsReport {
        trials,
        rows,
        overfull_trials: total.overfull,
    })
}

/// Random instance: each (u, v) pair is an edge with probability
/// `edge_prob`, every right node keeps at least one edge, and half of the
/// right nodes are covered exactly (x(N(v)) = 1). Each left node spreads a
/// random total ρ-mass in [½, 1] over its edges.
pub fn random_instance(n_left: usize, n_right: usize, edge_prob: f64, rng: &mut RngState) -> BipartiteInstance {
    let left: Vec<String> = (0..n_left).map(|i| format!("u{i}")).collect();
    let right: Vec<String> = (0..n_right).map(|j| format!("v{j}")).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for v in 0..n_right {
        let start = pairs.len();
        for u in 0..n_left {
            if rng.uniform_open() < edge_prob {
                pairs.push((u, v));
            }
        }
        if pairs.len() == start && n_left > 0 {
            pairs.push(((rng.uniform_open() * n_left as f64) as usize % n_left, v));
        }
    }
    pairs.sort_unstable();
    let mut x = vec![0.0; pairs.len()];
    for v in 0..n_right {
        let idx: Vec<usize> = (0..pairs.len()).filter(|&e| pairs[e].1 == v).collect();
        let w: Vec<f64> = idx.iter().map(|_| rng.uniform_open()).collect();
        let total = if rng.uniform_open() < 0.5 { 1.0 } else { 0.3 + 0.7 * rng.uniform_open() };
        let sum: f64 = w.iter().sum();
        for (k, &e) in idx.iter().enumerate() {
            x[e] = total * w[k] / sum;
        }
    }
    let mut rho = vec![0.0; pairs.len()];
    for u in 0..n_left {
        let idx: Vec<usize> = (0..pairs.len()).filter(|&e| pairs[e].0 == u).collect();
        let w: Vec<f64> = idx.iter().map(|_| rng.uniform_open()).collect();
        let total = 0.5 + 0.5 * rng.uniform_open();
        let sum: f64 = w.iter().sum();
        for (k, &e) in idx.iter().enumerate() {
            rho[e] = total * w[k] / sum;
        }
    }
    let edges = pairs
        .iter()
        .enumerate()
        .map(|(e, &(u, v))| Edge {
            u: left[u].clone(),
            v: right[v].clone(),
            x: x[e],
            rho: rho[e],
        })
        .collect();
    BipartiteInstance { left, right, edges }
}
