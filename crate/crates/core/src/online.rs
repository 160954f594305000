//! Oblivious online matching with exponential clocks.
//!
//! Offline nodes are known up front; each arrival v reveals demands g_(u,v).
//! Edge e = (u, v) gets
//!
//! ```text
//! y_e = Q(r_e, g_e),   ρ_e = α·y_e,   x_e = (1 − β)·F(r_e)·g_e + β·y_e,
//! ```
//!
//! where r_e is the demand already seen at u and Q integrates the attenuation
//! F(t) = F0/√(1 − s·t). Every offline node extends its Dirichlet draw one
//! coordinate at a time by stick breaking, so the clocks seen by the arrival
//! have exactly the joint law used by offline dependent rounding.

use crate::copula::{ln_copula_uniform, CopulaError};
use crate::exec::{run_blocks, DEFAULT_BLOCK};
use crate::randomness::{RandomnessError, RngState, StickBreaker};
use crate::rounding::{select_at_right, BipartiteInstance, Edge, RIGHT_DOMAIN};
use crate::specialfn::{gen_binomial, SpecialFnError};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

const SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OnlineError {
    #[error("{function}: {detail}")]
    Domain { function: &'static str, detail: String },
    #[error("invalid stream: {0}")]
    InvalidStream(String),
    #[error("cannot parse stream: {0}")]
    Parse(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
    #[error(transparent)]
    SpecialFn(#[from] SpecialFnError),
    #[error(transparent)]
    Copula(#[from] CopulaError),
}

fn domain(function: &'static str, detail: String) -> OnlineError {
    OnlineError::Domain { function, detail }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineParams {
    pub alpha: f64,
    pub beta: f64,
    pub f0: f64,
    pub f_slope: f64,
    pub c: f64,
}

impl Default for OnlineParams {
    fn default() -> Self {
        Self {
            alpha: 1.2337,
            beta: 0.7,
            f0: 0.68145,
            f_slope: 0.53562,
            c: 0.3947,
        }
    }
}

impl OnlineParams {
    /// F(t) = F0 / √(1 − s·t) on [0, 1].
    pub fn attenuation_f(&self, t: f64) -> Result<f64, OnlineError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(domain("attenuation_F", format!("t = {t} outside [0, 1]")));
        }
        Ok(self.f_unchecked(t))
    }

    #[inline]
    pub(crate) fn f_unchecked(&self, t: f64) -> f64 {
        self.f0 / (1.0 - self.f_slope * t).sqrt()
    }

    /// ∫_{t0}^{t0+dt} F, in the rationalized form
    /// 2·F0·dt / (√(1 − s·t0) + √(1 − s·(t0 + dt))), which has no cancellation
    /// for small dt.
    pub fn cumulative_q(&self, t0: f64, dt: f64) -> Result<f64, OnlineError> {
        if !(t0 >= 0.0 && dt >= 0.0 && t0 + dt <= 1.0 + SLACK) {
            return Err(domain("cumulative_Q", format!("interval [{t0}, {t0} + {dt}] outside [0, 1]")));
        }
        Ok(self.q_unchecked(t0, dt.min(1.0 - t0)))
    }

    #[inline]
    pub(crate) fn q_unchecked(&self, t0: f64, dt: f64) -> f64 {
        let a = (1.0 - self.f_slope * t0).sqrt();
        let b = (1.0 - self.f_slope * (t0 + dt)).sqrt();
        2.0 * self.f0 * dt / (a + b)
    }
}

/// (y, ρ, x) of an edge with prior demand `r` and demand `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeParams {
    pub y: f64,
    pub rho: f64,
    pub x: f64,
}

pub fn edge_params(r: f64, g: f64, params: &OnlineParams) -> Result<EdgeParams, OnlineError> {
    if !(0.0..=1.0).contains(&r) || !(0.0..=1.0).contains(&g) || r + g > 1.0 + SLACK {
        return Err(domain("edge_params", format!("r = {r}, g = {g} violates r + g ≤ 1")));
    }
    let y = params.q_unchecked(r, g.min(1.0 - r));
    Ok(EdgeParams {
        y,
        rho: params.alpha * y,
        x: (1.0 - params.beta) * params.f_unchecked(r) * g + params.beta * y,
    })
}

/// F(r)·(1 − c·Q(0, r)), the per-edge matching guarantee divided by g.
pub fn ratio_profile(r: f64, params: &OnlineParams) -> Result<f64, OnlineError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(domain("ratio_profile", format!("r = {r} outside [0, 1]")));
    }
    Ok(params.f_unchecked(r) * (1.0 - params.c * params.q_unchecked(0.0, r)))
}

/// The cumulative attenuation obtained by requiring Q'(t)(1 − c·Q(t)) to be
/// constant with Q(0) = 0 and c·Q(1) hitting the budget, where
/// c = 1/binom(2α, α):
///
/// Q(t) = (1 − √(1 − t(2c√(c² + 1) − 2c²))) / c.
pub fn derive_q(alpha: f64, t: f64) -> Result<f64, OnlineError> {
    if !(alpha > 0.0) || !(0.0..=1.0).contains(&t) {
        return Err(domain("derive_Q", format!("alpha = {alpha}, t = {t}")));
    }
    let c = 1.0 / gen_binomial(2.0 * alpha, alpha)?;
    let k = 2.0 * c * ((c * c + 1.0).sqrt() - c);
    // (1 − √(1 − k t))/c, rationalized
    Ok(k * t / (c * (1.0 + (1.0 - k * t).sqrt())))
}

/// The (F0, slope) pair of the closed-form F matching [`derive_q`].
pub fn derived_f_constants(alpha: f64) -> Result<(f64, f64), OnlineError> {
    let c = 1.0 / gen_binomial(2.0 * alpha, alpha)?;
    let f0 = (c * c + 1.0).sqrt() - c;
    Ok((f0, 2.0 * c * f0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub v: String,
    /// Demands keyed by offline node; iteration order is by identifier.
    pub g: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingStream {
    pub offline: Vec<String>,
    pub arrivals: Vec<Arrival>,
}

impl MatchingStream {
    pub fn from_json(text: &str) -> Result<Self, OnlineError> {
        serde_json::from_str(text).map_err(|e| OnlineError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stream serializes")
    }

    /// Returns every problem found; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut offline = HashSet::new();
        for u in &self.offline {
            if !offline.insert(u.as_str()) {
                out.push(format!("offline node {u} declared twice"));
            }
        }
        let mut seen_v = HashSet::new();
        let mut load: HashMap<&str, f64> = HashMap::new();
        for (i, a) in self.arrivals.iter().enumerate() {
            if !seen_v.insert(a.v.as_str()) {
                out.push(format!("arrival {i}: node {} arrives twice", a.v));
            }
            if offline.contains(a.v.as_str()) {
                out.push(format!("arrival {i}: {} is also an offline node", a.v));
            }
            let mut sum = 0.0;
            for (u, &g) in &a.g {
                if !offline.contains(u.as_str()) {
                    out.push(format!("arrival {i}: unknown offline node {u}"));
                }
                if !(0.0..=1.0).contains(&g) {
                    out.push(format!("arrival {i}: demand {g} on {u} outside [0, 1]"));
                    continue;
                }
                sum += g;
                *load.entry(u.as_str()).or_default() += g;
            }
            if sum > 1.0 + SLACK {
                out.push(format!("arrival {i}: total demand {sum} > 1"));
            }
        }
        let mut over: Vec<_> = load.into_iter().filter(|(_, s)| *s > 1.0 + SLACK).collect();
        over.sort_by(|a, b| a.0.cmp(b.0));
        for (u, s) in over {
            out.push(format!("offline node {u}: total demand {s} > 1"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), OnlineError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(OnlineError::InvalidStream(v.join("; ")))
        }
    }
}

/// One edge of the stream with its deterministic parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedEdge {
    pub arrival: usize,
    /// index into `stream.offline`
    pub u: usize,
    pub g: f64,
    pub r: f64,
    pub params: EdgeParams,
}

/// Stream with all (y, ρ, x) computed. These depend only on the demands, so
/// they are fixed before any randomness is drawn.
#[derive(Debug, Clone)]
pub struct OdrsPlan {
    pub stream: MatchingStream,
    pub online: OnlineParams,
    pub edges: Vec<PlannedEdge>,
    /// edge index range of each arrival
    pub spans: Vec<std::ops::Range<usize>>,
}

impl OdrsPlan {
    pub fn new(stream: &MatchingStream, online: &OnlineParams) -> Result<Self, OnlineError> {
        stream.validate()?;
        let index: HashMap<&str, usize> = stream.offline.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let mut r = vec![0.0f64; stream.offline.len()];
        let mut edges = Vec::new();
        let mut spans = Vec::with_capacity(stream.arrivals.len());
        for (k, a) in stream.arrivals.iter().enumerate() {
            let start = edges.len();
            for (u, &g) in &a.g {
                let ui = index[u.as_str()];
                let ru = r[ui].min(1.0);
                let g_eff = g.min(1.0 - ru);
                edges.push(PlannedEdge {
                    arrival: k,
                    u: ui,
                    g,
                    r: ru,
                    params: edge_params(ru, g_eff, online)?,
                });
                r[ui] += g;
            }
            spans.push(start..edges.len());
        }
        Ok(Self {
            stream: stream.clone(),
            online: *online,
            edges,
            spans,
        })
    }

    /// The offline instance whose dependent rounding has the same selection
    /// law: left = offline nodes, right = arrivals, edge weights (x, ρ).
    pub fn induced_instance(&self) -> BipartiteInstance {
        BipartiteInstance {
            left: self.stream.offline.clone(),
            right: self.stream.arrivals.iter().map(|a| a.v.clone()).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    u: self.stream.offline[e.u].clone(),
                    v: self.stream.arrivals[e.arrival].v.clone(),
                    x: e.params.x,
                    rho: e.params.rho,
                })
                .collect(),
        }
    }

    /// Checks x_e ≤ g_e, Σ_{e∋u} ρ_e ≤ 1 and x(N(v)) ≤ 1 exactly, without
    /// slack. Returns the failures.
    pub fn feasibility_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut rho = vec![0.0; self.stream.offline.len()];
        for (i, e) in self.edges.iter().enumerate() {
            if e.params.x > e.g {
                out.push(format!("edge {i}: x = {} > g = {}", e.params.x, e.g));
            }
            rho[e.u] += e.params.rho;
        }
        for (u, s) in rho.iter().enumerate() {
            if *s > 1.0 {
                out.push(format!("offline {}: Σρ = {s} > 1", self.stream.offline[u]));
            }
        }
        for (k, span) in self.spans.iter().enumerate() {
            let s: f64 = self.edges[span.clone()].iter().map(|e| e.params.x).sum();
            if s > 1.0 {
                out.push(format!("arrival {k}: x(N(v)) = {s} > 1"));
            }
        }
        out
    }

    /// Runs one trial. The trial's randomness is `base`: offline node u uses
    /// stream (base, u) and arrival k's tie-in variate uses (base ^ domain, k),
    /// so a prefix of the stream sees the same randomness whatever follows.
    pub(crate) fn run_into(&self, base: u64, s: &mut TrialScratch, mut trace: Option<&mut Vec<TraceRow>>) -> Result<(), OnlineError> {
        let n_u = self.stream.offline.len();
        s.selected.clear();
        s.selected.resize(self.edges.len(), false);
        s.committed.clear();
        s.committed.resize(self.edges.len(), false);
        s.matched.clear();
        s.matched.resize(n_u, None);
        s.sticks.clear();
        s.sticks.resize_with(n_u, || None);
        for (k, span) in self.spans.iter().enumerate() {
            s.xs.clear();
            s.zs.clear();
            s.rows.clear();
            for e in span.clone() {
                let pe = &self.edges[e];
                let (stick, rng) = s.sticks[pe.u].get_or_insert_with(|| (StickBreaker::new(), RngState::keyed(base, pe.u as u64)));
                let rho = pe.params.rho.min((1.0 - stick.rho_used()).max(0.0));
                let draw = stick.next(rho, rng)?;
                let ln_a = if rho == 0.0 || rho == 1.0 {
                    rng.uniform_open().ln()
                } else {
                    ln_copula_uniform(draw.ln_t, draw.ln_1mt, rho)?
                };
                let x = pe.params.x;
                let z = if x > 0.0 { -ln_a / x } else { f64::INFINITY };
                s.xs.push(x);
                s.zs.push(z);
                if trace.is_some() {
                    s.rows.push((draw.t, ln_a.exp()));
                }
            }
            s.sel.clear();
            s.sel.resize(span.len(), false);
            let mut exp1 = || -RngState::keyed(base ^ RIGHT_DOMAIN, k as u64).uniform_open().ln();
            select_at_right(&s.xs, &s.zs, &mut s.sel, &mut exp1);
            for (i, e) in span.clone().enumerate() {
                if s.sel[i] {
                    s.selected[e] = true;
                    let u = self.edges[e].u;
                    if s.matched[u].is_none() {
                        s.matched[u] = Some(k);
                        s.committed[e] = true;
                    }
                }
            }
            if let Some(rows) = trace.as_deref_mut() {
                for (i, e) in span.clone().enumerate() {
                    let pe = &self.edges[e];
                    rows.push(TraceRow {
                        arrival_index: k,
                        u: self.stream.offline[pe.u].clone(),
                        v: self.stream.arrivals[k].v.clone(),
                        g: pe.g,
                        r: pe.r,
                        y: pe.params.y,
                        rho: pe.params.rho,
                        x: pe.params.x,
                        t: s.rows[i].0,
                        a: s.rows[i].1,
                        z: s.zs[i],
                        selected: s.selected[e],
                        committed: s.committed[e],
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct TrialScratch {
    selected: Vec<bool>,
    committed: Vec<bool>,
    matched: Vec<Option<usize>>,
    sticks: Vec<Option<(StickBreaker, RngState)>>,
    xs: Vec<f64>,
    zs: Vec<f64>,
    sel: Vec<bool>,
    rows: Vec<(f64, f64)>,
}

/// Per-edge trace of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub arrival_index: usize,
    pub u: String,
    pub v: String,
    pub g: f64,
    pub r: f64,
    pub y: f64,
    pub rho: f64,
    pub x: f64,
    pub t: f64,
    pub a: f64,
    pub z: f64,
    pub selected: bool,
    pub committed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdrsRun {
    /// (u, v) pairs in arrival order
    pub matching: Vec<(String, String)>,
    pub trace: Vec<TraceRow>,
}

impl OdrsRun {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("arrival_index,u,v,g,r,y,rho,x,selected,committed\n");
        for t in &self.trace {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                t.arrival_index, t.u, t.v, t.g, t.r, t.y, t.rho, t.x, t.selected, t.committed
            ));
        }
        s
    }
}

/// Processes the stream once. Reads one `u64` from `rng`.
pub fn run_odrs(stream: &MatchingStream, params: &OnlineParams, rng: &mut RngState) -> Result<OdrsRun, OnlineError> {
    let plan = OdrsPlan::new(stream, params)?;
    let mut scratch = TrialScratch::default();
    let mut trace = Vec::with_capacity(plan.edges.len());
    plan.run_into(rng.next_u64(), &mut scratch, Some(&mut trace))?;
    let matching = trace.iter().filter(|t| t.committed).map(|t| (t.u.clone(), t.v.clone())).collect();
    Ok(OdrsRun { matching, trace })
}

/// Empirical selection and matching frequencies per planned edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchStats {
    pub trials: u64,
    pub selected: Vec<u64>,
    pub matched: Vec<u64>,
    /// Trials whose committed set was not a matching. Always 0 unless the
    /// implementation is broken; kept as a counter so tests can assert it.
    pub non_matchings: u64,
}

impl MatchStats {
    pub fn matched_freq(&self, e: usize) -> f64 {
        self.matched[e] as f64 / self.trials as f64
    }

    pub fn selected_freq(&self, e: usize) -> f64 {
        self.selected[e] as f64 / self.trials as f64
    }
}

/// Repeats [`run_odrs`] on independent substreams.
pub fn estimate_match_stats(plan: &OdrsPlan, trials: u64, rng: &mut RngState) -> Result<MatchStats, OnlineError> {
    if trials == 0 {
        return Err(OnlineError::NoTrials);
    }
    let m = plan.edges.len();
    let n_v = plan.spans.len();
    let base = RngState::new(rng.next_u64());
    let blocks = run_blocks(trials, DEFAULT_BLOCK, |b, n| -> Result<(Vec<u64>, Vec<u64>, u64), OnlineError> {
        let mut r = base.substream(b);
        let mut scratch = TrialScratch::default();
        let mut sel = vec![0u64; m];
        let mut mat = vec![0u64; m];
        let mut bad = 0u64;
        let mut per_v = vec![0u8; n_v];
        let mut per_u = vec![0u8; plan.stream.offline.len()];
        for _ in 0..n {
            plan.run_into(r.next_u64(), &mut scratch, None)?;
            per_v.iter_mut().for_each(|c| *c = 0);
            per_u.iter_mut().for_each(|c| *c = 0);
            let mut broken = false;
            for e in 0..m {
                sel[e] += scratch.selected[e] as u64;
                if scratch.committed[e] {
                    mat[e] += 1;
                    let pe = &plan.edges[e];
                    per_v[pe.arrival] += 1;
                    per_u[pe.u] += 1;
                    broken |= per_v[pe.arrival] > 1 || per_u[pe.u] > 1;
                }
            }
            bad += broken as u64;
        }
        Ok((sel, mat, bad))
    });
    let mut out = MatchStats {
        trials,
        selected: vec![0; m],
        matched: vec![0; m],
        non_matchings: 0,
    };
    for b in blocks {
        let (s, mt, bad) = b?;
        out.selected.iter_mut().zip(&s).for_each(|(a, v)| *a += v);
        out.matched.iter_mut().zip(&mt).for_each(|(a, v)| *a += v);
        out.non_matchings += bad;
    }
    Ok(out)
}

/// Instance generators.
pub mod gen {
    use super::{Arrival, MatchingStream};
    use crate::randomness::RngState;
    use std::collections::BTreeMap;

    /// Random sparse fractional matching: each arrival touches up to
    /// `max_degree` offline nodes; weights are rescaled so every arrival
    /// and every offline node carries total demand at most `fill`.
    pub fn uniform(n_offline: usize, n_arrivals: usize, max_degree: usize, fill: f64, rng: &mut RngState) -> MatchingStream {
        let offline: Vec<String> = (0..n_offline).map(|i| format!("u{i}")).collect();
        let mut raw: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(n_arrivals);
        for _ in 0..n_arrivals {
            let deg = 1 + (rng.uniform_open() * max_degree.min(n_offline) as f64) as usize;
            let mut g = BTreeMap::new();
            while g.len() < deg.min(n_offline) {
                let u = (rng.uniform_open() * n_offline as f64) as usize;
                g.insert(u.min(n_offline - 1), rng.uniform_open());
            }
            raw.push(g);
        }
        let mut load = vec![0.0; n_offline];
        for g in &raw {
            for (&u, &w) in g {
                load[u] += w;
            }
        }
        let arrivals = raw
            .into_iter()
            .enumerate()
            .map(|(k, g)| {
                let row: f64 = g.values().sum();
                let g = g
                    .into_iter()
                    .map(|(u, w)| {
                        let scale = row.max(load[u]).max(1.0);
                        (offline[u].clone(), fill * w / scale)
                    })
                    .collect();
                Arrival { v: format!("v{k}"), g }
            })
            .collect();
        MatchingStream { offline, arrivals }
    }

    /// One offline node receives `n_arrivals` equal demands summing to one;
    /// each arrival also has a private offline node taking the rest of its
    /// unit demand with probability ½.
    pub fn overloaded_node(n_arrivals: usize, rng: &mut RngState) -> MatchingStream {
        let mut offline = vec!["hub".to_string()];
        let share = 1.0 / n_arrivals as f64;
        let mut arrivals = Vec::new();
        for k in 0..n_arrivals {
            let mut g = BTreeMap::new();
            g.insert("hub".to_string(), share);
            if rng.uniform_open() < 0.5 {
                let own = format!("p{k}");
                offline.push(own.clone());
                g.insert(own, 1.0 - share);
            }
            arrivals.push(Arrival { v: format!("v{k}"), g });
        }
        MatchingStream { offline, arrivals }
    }

    /// Splits every arrival of `stream` into `m` consecutive arrivals with
    /// demands g/m.
    pub fn slivers(stream: &MatchingStream, m: usize) -> MatchingStream {
        let mut arrivals = Vec::with_capacity(stream.arrivals.len() * m);
        for a in &stream.arrivals {
            for i in 0..m {
                arrivals.push(Arrival {
                    v: format!("{}.{i}", a.v),
                    g: a.g.iter().map(|(u, g)| (u.clone(), g / m as f64)).collect(),
                });
            }
        }
        MatchingStream {
            offline: stream.offline.clone(),
            arrivals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dirmech_testkit::quad::adaptive_simpson;
    use dirmech_testkit::{central_diff, grid_max, rel_diff};

    fn p() -> OnlineParams {
        OnlineParams::default()
    }

    fn stream(offline: &[&str], arrivals: &[(&str, &[(&str, f64)])]) -> MatchingStream {
        MatchingStream {
            offline: offline.iter().map(|s| s.to_string()).collect(),
            arrivals: arrivals
                .iter()
                .map(|(v, g)| Arrival {
                    v: v.to_string(),
                    g: g.iter().map(|(u, x)| (u.to_string(), *x)).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn attenuation_values() {
        assert_eq!(p().attenuation_f(0.0).unwrap(), 0.68145);
        let f1 = p().attenuation_f(1.0).unwrap();
        assert!(f1 <= 1.0 && (f1 - 0.999_993_65).abs() < 1e-7, "{f1}");
        assert!(p().attenuation_f(1.1).is_err());
        assert!(p().cumulative_q(0.5, 0.6).is_err());
    }

    #[test]
    fn q_matches_quadrature() {
        let q = p().cumulative_q(0.0, 1.0).unwrap();
        let quad = adaptive_simpson(&|t| 0.68145 / (1.0 - 0.53562 * t).sqrt(), 0.0, 1.0, 1e-14);
        assert!((q - quad).abs() < 1e-10, "{q} vs {quad}");
        assert!(q <= 1.0 / 1.2337);
        let q = p().cumulative_q(0.3, 0.25).unwrap();
        let quad = adaptive_simpson(&|t| 0.68145 / (1.0 - 0.53562 * t).sqrt(), 0.3, 0.55, 1e-14);
        assert!((q - quad).abs() < 1e-12);
    }

    #[test]
    fn edge_param_examples() {
        let e = edge_params(0.4, 0.0, &p()).unwrap();
        assert_eq!((e.y, e.rho, e.x), (0.0, 0.0, 0.0));
        let e = edge_params(0.5, 1e-8, &p()).unwrap();
        assert!(rel_diff(e.x / 1e-8, p().attenuation_f(0.5).unwrap()) < 1e-6);
        let e = edge_params(0.0, 1.0, &p()).unwrap();
        assert!(e.rho <= 1.0 && e.x <= 1.0);
        assert!(edge_params(0.6, 0.5, &p()).is_err());
    }

    #[test]
    fn ratio_profile_floor() {
        assert_eq!(ratio_profile(0.0, &p()).unwrap(), 0.68145);
        let min = -grid_max(0.0, 1.0, 10_000, |r| -ratio_profile(r, &p()).unwrap());
        assert!(min >= 0.68, "{min}");
        assert!(ratio_profile(1.0, &p()).unwrap() >= 0.68);
    }

    #[test]
    fn derived_q_has_constant_product() {
        let alpha = 1.2337;
        let c = 1.0 / gen_binomial(2.0 * alpha, alpha).unwrap();
        assert_eq!(derive_q(alpha, 0.0).unwrap(), 0.0);
        let mut first = None;
        for i in 1..100 {
            let t = i as f64 / 100.0;
            let d = central_diff(|s| derive_q(alpha, s).unwrap(), t, 1e-5);
            let v = d * (1.0 - c * derive_q(alpha, t).unwrap());
            let f = *first.get_or_insert(v);
            assert!(rel_diff(v, f) < 1e-9, "t={t}: {v} vs {f}");
        }
        for i in 0..=99 {
            let t = i as f64 / 100.0;
            let d = central_diff(|s| derive_q(alpha, s).unwrap(), t.max(1e-5), 1e-5);
            assert!(rel_diff(d, p().attenuation_f(t.max(1e-5)).unwrap()) < 1e-3);
        }
        let (f0, s) = derived_f_constants(alpha).unwrap();
        assert!((f0 - 0.681_456).abs() < 1e-6 && (s - 0.535_617_1).abs() < 1e-6, "{f0} {s}");
    }

    #[test]
    fn stream_validation() {
        let ok = stream(&["u1", "u2"], &[("v1", &[("u1", 0.5), ("u2", 0.5)]), ("v2", &[("u1", 0.5)])]);
        assert!(ok.validate().is_ok());
        let bad = stream(&["u1"], &[("v1", &[("u1", 0.7)]), ("v2", &[("u1", 0.7)])]);
        assert!(bad.validate().is_err());
        let bad = stream(&["u1", "u2"], &[("v1", &[("u1", 0.7), ("u2", 0.7)])]);
        assert!(bad.validate().is_err());
        let bad = stream(&["u1"], &[("v1", &[("zz", 0.1)])]);
        assert!(bad.validate().is_err());
        let parsed = MatchingStream::from_json(r#"{"offline":["u1"],"arrivals":[{"v":"v1","g":{"u1":0.3}}]}"#).unwrap();
        assert_eq!(parsed.arrivals[0].g["u1"], 0.3);
        assert!(run_odrs(&bad, &p(), &mut RngState::new(0)).is_err());
    }

    #[test]
    fn single_unit_arrival_selected_with_probability_x() {
        let s = stream(&["u"], &[("v", &[("u", 1.0)])]);
        let plan = OdrsPlan::new(&s, &p()).unwrap();
        let x = plan.edges[0].params.x;
        assert!(rel_diff(x, 0.3 * 0.68145 + 0.7 * p().cumulative_q(0.0, 1.0).unwrap()) < 1e-15);
        let n = 200_000;
        let st = estimate_match_stats(&plan, n, &mut RngState::new(3)).unwrap();
        assert_eq!(st.selected, st.matched);
        let sd = (x * (1.0 - x) / n as f64).sqrt();
        assert!((st.selected_freq(0) - x).abs() < 4.0 * sd);
    }

    #[test]
    fn run_is_a_matching_and_trace_is_complete() {
        let s = gen::uniform(4, 8, 3, 1.0, &mut RngState::new(1));
        let mut rng = RngState::new(9);
        for _ in 0..200 {
            let run = run_odrs(&s, &p(), &mut rng).unwrap();
            let us: HashSet<_> = run.matching.iter().map(|m| &m.0).collect();
            let vs: HashSet<_> = run.matching.iter().map(|m| &m.1).collect();
            assert_eq!(us.len(), run.matching.len());
            assert_eq!(vs.len(), run.matching.len());
            assert_eq!(run.trace.len(), s.arrivals.iter().map(|a| a.g.len()).sum::<usize>());
        }
        let csv = run_odrs(&s, &p(), &mut rng).unwrap().trace_csv();
        assert!(csv.starts_with("arrival_index,u,v,g,r,y,rho,x,selected,committed\n"));
    }

    #[test]
    fn prefix_decisions_are_oblivious() {
        let full = gen::uniform(4, 10, 2, 1.0, &mut RngState::new(4));
        let mut prefix = full.clone();
        prefix.arrivals.truncate(6);
        for seed in 0..50 {
            let a = run_odrs(&full, &p(), &mut RngState::new(seed)).unwrap();
            let b = run_odrs(&prefix, &p(), &mut RngState::new(seed)).unwrap();
            assert_eq!(&a.trace[..b.trace.len()], &b.trace[..]);
        }
    }

    #[test]
    fn generated_streams_are_feasible() {
        let mut rng = RngState::new(11);
        for k in 0..30 {
            let s = match k % 3 {
                0 => gen::uniform(1 + k % 7, 2 + k % 13, 3, 1.0, &mut rng),
                1 => gen::overloaded_node(2 + k % 9, &mut rng),
                _ => gen::slivers(&gen::uniform(3, 4, 2, 1.0, &mut rng), 5),
            };
            assert!(s.validate().is_ok(), "{:?}", s.violations());
            let plan = OdrsPlan::new(&s, &p()).unwrap();
            assert!(plan.feasibility_violations().is_empty(), "{:?}", plan.feasibility_violations());
            assert!(plan.induced_instance().edges.iter().all(|e| e.x <= 1.0));
        }
    }

    #[test]
    fn induced_instance_is_valid() {
        let s = gen::overloaded_node(6, &mut RngState::new(2));
        let inst = OdrsPlan::new(&s, &p()).unwrap().induced_instance();
        assert!(crate::rounding::validate_instance(&inst).is_empty());
    }
}
