//! Box-partition certificate for the online correlation factor.
//!
//! For two edges at the same offline node, with prior demands r₁, r₂ and
//! demands g₁, g₂ (r₂ + g₂ ≤ r₁, r₁ + g₁ ≤ 1), the quantity
//!
//! ```text
//! f = (Ψ·x₁x₂ − β(y₁ − F(r₁)g₁)·y₂ / Q(0, r₁)) / (F(r₁)·g₁·y₂)
//! ```
//!
//! must stay below c. Over a box of (r₁, r₂, g₁, g₂) every ingredient is
//! monotone, so f has an upper bound assembled from interval endpoints.
//! Small demands make the denominator vanish and are covered by a separate
//! product bound.

use crate::exec::map_items;
use crate::online::OnlineParams;
use crate::psi::{alpha_from_m, g_coefficient, ln_kappa_scale, psi_upper_bound, theta, PsiQuery, DEFAULT_ORDER};
use crate::specialfn::{gen_binomial, SpecialFnError};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Added to every floating-point box bound.
pub const SAFETY_MARGIN: f64 = 1e-9;
/// Largest demand handled by the small-demand bound.
pub const SMALL_G: f64 = 0.003;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("degenerate denominator F(r1min)·g1min·y2min = 0 on box {0:?}; use the small-demand bound")]
    DegenerateDenominator(Box4),
    #[error("infeasible box {0:?}")]
    Infeasible(Box4),
    #[error("order {0} > 3 is not supported by the monotonicity argument")]
    Order(usize),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    SpecialFn(#[from] SpecialFnError),
}

/// Axis order: r₁, r₂, g₁, g₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box4 {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl Box4 {
    pub fn new(lo: [f64; 4], hi: [f64; 4]) -> Result<Self, CertifyError> {
        for a in 0..4 {
            if !(0.0 <= lo[a] && lo[a] <= hi[a] && hi[a] <= 1.0) {
                return Err(CertifyError::Domain(format!("axis {a}: [{}, {}] not inside [0, 1]", lo[a], hi[a])));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn point(p: [f64; 4]) -> Result<Self, CertifyError> {
        Self::new(p, p)
    }

    /// Some point of the box satisfies r₂ + g₂ ≤ r₁ and r₁ + g₁ ≤ 1.
    pub fn feasible(&self) -> bool {
        self.lo[1] + self.lo[3] <= self.hi[0] + 1e-12 && self.lo[0] + self.lo[2] <= 1.0 + 1e-12
    }

    pub fn contains(&self, p: &[f64; 4]) -> bool {
        (0..4).all(|a| self.lo[a] <= p[a] && p[a] <= self.hi[a])
    }

    /// Halves along the widest axis (lowest index on ties).
    pub fn bisect(&self) -> (Box4, Box4) {
        let axis = (0..4).fold(0, |best, a| if self.hi[a] - self.lo[a] > self.hi[best] - self.lo[best] { a } else { best });
        let mid = 0.5 * (self.lo[axis] + self.hi[axis]);
        let mut left = *self;
        let mut right = *self;
        left.hi[axis] = mid;
        right.lo[axis] = mid;
        (left, right)
    }
}

/// Interval images of (y, ρ, x) for one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideBounds {
    pub y_min: f64,
    pub y_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub x_max: f64,
    pub f_rmin: f64,
}

/// `cap` bounds r + g from above on this side: 1 for the first edge, r₁⁺
/// for the second.
fn side_bounds(r: (f64, f64), g: (f64, f64), cap: f64, p: &OnlineParams) -> SideBounds {
    let y_min = p.q_unchecked(r.0, g.0);
    // Q(r, g) grows in both arguments; past the cap the best feasible point
    // sits on r + g = cap with r as small as allowed
    let y_max = if r.1 + g.1 <= cap {
        p.q_unchecked(r.1, g.1)
    } else {
        let rs = r.0.max(cap - g.1);
        p.q_unchecked(rs, (cap - rs).max(0.0))
    };
    SideBounds {
        y_min,
        y_max,
        rho_min: p.alpha * y_min,
        rho_max: p.alpha * y_max,
        x_max: (1.0 - p.beta) * p.f_unchecked(r.1) * g.1 + p.beta * y_max,
        f_rmin: p.f_unchecked(r.0),
    }
}

/// Everything the final assembly consumes; exposed for the exact check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxTerms {
    pub sides: [SideBounds; 2],
    /// κ⁺ per side, indices 0..k
    pub kappa_plus: [Vec<f64>; 2],
    /// α⁺ and α⁻ on the (k+1)×(k+1) grid, row-major by j₁
    pub alpha_plus: Vec<f64>,
    pub alpha_minus: Vec<f64>,
    pub k: (usize, usize),
    pub q_r1max: f64,
    pub f_r1max: f64,
    /// sup of x₁/(F(r₁)g₁) over the box
    pub u1_max: f64,
    /// sup of x₂/y₂ over the box
    pub v2_max: f64,
    pub beta: f64,
}

/// How the Ψ bound is combined with the remaining factors of f.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Assembly {
    /// x₁ᵐᵃˣx₂ᵐᵃˣ over F(r₁ᵐⁱⁿ)g₁ᵐⁱⁿy₂ᵐⁱⁿ, each factor bounded on its own.
    #[default]
    Separate,
    /// Bounds the ratios x₁/(F(r₁)g₁) and x₂/y₂ directly. Both are monotone
    /// because F is increasing and log-convex, so the box corners give their
    /// extremes without the g₁ᵐᵃˣ/g₁ᵐⁱⁿ loss of the separate form.
    Ratio,
}

fn box_terms(b: &Box4, p: &OnlineParams, k1: usize, k2: usize) -> Result<BoxTerms, CertifyError> {
    if k1 > 3 || k2 > 3 {
        return Err(CertifyError::Order(k1.max(k2)));
    }
    if !b.feasible() {
        return Err(CertifyError::Infeasible(*b));
    }
    let s1 = side_bounds((b.lo[0], b.hi[0]), (b.lo[2], b.hi[2]), 1.0, p);
    let s2 = side_bounds((b.lo[1], b.hi[1]), (b.lo[3], b.hi[3]), b.hi[0], p);
    if s1.f_rmin * b.lo[2] * s2.y_min == 0.0 {
        return Err(CertifyError::DegenerateDenominator(*b));
    }
    let kappa = |s: &SideBounds, k: usize| -> Result<Vec<f64>, CertifyError> {
        let q = 1.0 / s.x_max - 1.0;
        let th = theta(s.x_max, s.rho_min);
        (0..k)
            .map(|j| {
                let g = g_coefficient(s.rho_max, q, j).max(0.0);
                Ok(th * ln_kappa_scale(s.x_max, s.rho_max, j)?.exp() * g)
            })
            .collect()
    };
    let (q1, q2) = (1.0 / s1.x_max - 1.0, 1.0 / s2.x_max - 1.0);
    let n2 = k2 + 1;
    let mut alpha_plus = Vec::with_capacity((k1 + 1) * n2);
    let mut alpha_minus = Vec::with_capacity((k1 + 1) * n2);
    for j1 in 0..=k1 {
        for j2 in 0..=k2 {
            alpha_plus.push(alpha_from_m(s1.rho_min * q1, s2.rho_min * q2, j1, j2));
            alpha_minus.push(alpha_from_m(s1.rho_max * q1, s2.rho_max * q2, j1, j2));
        }
    }
    Ok(BoxTerms {
        kappa_plus: [kappa(&s1, k1)?, kappa(&s2, k2)?],
        sides: [s1, s2],
        alpha_plus,
        alpha_minus,
        k: (k1, k2),
        q_r1max: p.q_unchecked(0.0, b.hi[0]),
        f_r1max: p.f_unchecked(b.hi[0]),
        u1_max: (1.0 - p.beta) + p.beta * p.q_unchecked(b.hi[0], b.hi[2]) / (b.hi[2] * p.f_unchecked(b.hi[0])),
        v2_max: p.beta + (1.0 - p.beta) * p.f_unchecked(b.lo[1]) * b.lo[3] / p.q_unchecked(b.lo[1], b.lo[3]),
        beta: p.beta,
    })
}

/// A₁ + A₂ + A₃ + A₄, the box bound on Ψ.
fn psi_sum(t: &BoxTerms) -> f64 {
    let (k1, k2) = t.k;
    let n2 = k2 + 1;
    let ap = |a: usize, c: usize| t.alpha_plus[a * n2 + c];
    let am = |a: usize, c: usize| t.alpha_minus[a * n2 + c];
    let (ka, kb) = (&t.kappa_plus[0], &t.kappa_plus[1]);
    let mut a1 = 0.0;
    for j1 in 0..k1 {
        for j2 in 0..k2 {
            let coef = ap(j1, j2) - am(j1, k2) - am(k1, j2) + ap(k1, k2);
            a1 += coef.max(0.0) * ka[j1] * kb[j2];
        }
    }
    let a2: f64 = (0..k1).map(|j1| (ap(j1, k2) - am(k1, k2)) * ka[j1]).sum();
    let a3: f64 = (0..k2).map(|j2| (ap(k1, j2) - am(k1, k2)) * kb[j2]).sum();
    a1 + a2 + a3 + ap(k1, k2)
}

/// The assembly in floating point, without the safety margin.
fn assemble(b: &Box4, t: &BoxTerms, assembly: Assembly) -> f64 {
    let psi = psi_sum(t);
    let [s1, s2] = &t.sides;
    let g1min = b.lo[2];
    let drift = s1.y_min - s1.f_rmin * g1min;
    match assembly {
        Assembly::Separate => {
            let sub = t.beta * drift * s2.y_min / t.q_r1max;
            (psi * s1.x_max * s2.x_max - sub) / (s1.f_rmin * g1min * s2.y_min)
        }
        Assembly::Ratio => psi * t.u1_max * t.v2_max - t.beta * (s1.y_min / (g1min * s1.f_rmin) - 1.0) / t.q_r1max,
    }
}

/// Upper bound on f over the box, including [`SAFETY_MARGIN`].
pub fn box_upper_bound(b: &Box4, params: &OnlineParams, k1: usize, k2: usize) -> Result<f64, CertifyError> {
    box_upper_bound_with(b, params, k1, k2, Assembly::default())
}

pub fn box_upper_bound_with(b: &Box4, params: &OnlineParams, k1: usize, k2: usize, assembly: Assembly) -> Result<f64, CertifyError> {
    let t = box_terms(b, params, k1, k2)?;
    Ok(assemble(b, &t, assembly) + SAFETY_MARGIN)
}

/// f at a point, with Ψ replaced by its (3, 3)-order upper bound.
pub fn pointwise_f(point: [f64; 4], params: &OnlineParams) -> Result<f64, CertifyError> {
    let [r1, r2, g1, g2] = point;
    if !(r2 + g2 <= r1 + 1e-12 && r1 + g1 <= 1.0 + 1e-12) || point.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CertifyError::Domain(format!("point {point:?} is infeasible")));
    }
    let p = params;
    let y1 = p.q_unchecked(r1, g1);
    let y2 = p.q_unchecked(r2, g2);
    let x1 = (1.0 - p.beta) * p.f_unchecked(r1) * g1 + p.beta * y1;
    let x2 = (1.0 - p.beta) * p.f_unchecked(r2) * g2 + p.beta * y2;
    let den = p.f_unchecked(r1) * g1 * y2;
    if den == 0.0 {
        return Err(CertifyError::Domain("zero denominator".into()));
    }
    let q = PsiQuery::new(x1, x2, p.alpha * y1, p.alpha * y2).map_err(|e| CertifyError::Domain(e.to_string()))?;
    let psi = psi_upper_bound(&q, DEFAULT_ORDER, DEFAULT_ORDER).map_err(|e| CertifyError::Domain(e.to_string()))?;
    Ok((psi * x1 * x2 - p.beta * (y1 - p.f_unchecked(r1) * g1) * y2 / p.q_unchecked(0.0, r1)) / den)
}

/// The floating-point assembly of a box bound next to the same assembly in
/// exact rational arithmetic on the identical inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactCheck {
    pub float_bound: f64,
    pub exact_bound: f64,
    /// float − exact, to be compared against [`SAFETY_MARGIN`]
    pub rounding_error: f64,
}

fn rat(v: f64) -> BigRational {
    BigRational::from_f64(v).expect("finite value")
}

fn rat_max0(v: BigRational) -> BigRational {
    if v.is_negative() {
        BigRational::zero()
    } else {
        v
    }
}

fn rat_to_f64(v: &BigRational) -> f64 {
    // 60 fractional digits are far beyond double precision
    let scale = BigInt::from(10u8).pow(60);
    let scaled = (v * BigRational::from_integer(scale.clone())).round().to_integer();
    scaled.to_string().parse::<f64>().expect("integer text") / 1e60
}

/// Re-runs the final assembly of [`box_upper_bound`] in exact rationals.
/// The transcendental inputs (Q, F, κ⁺, α±) stay as computed in floating
/// point; the check isolates rounding in the sums, products and quotient.
pub fn exact_assembly_check(b: &Box4, params: &OnlineParams, assembly: Assembly) -> Result<ExactCheck, CertifyError> {
    let t = box_terms(b, params, DEFAULT_ORDER, DEFAULT_ORDER)?;
    let float_bound = assemble(b, &t, assembly);
    let (k1, k2) = t.k;
    let n2 = k2 + 1;
    let ap = |a: usize, c: usize| rat(t.alpha_plus[a * n2 + c]);
    let am = |a: usize, c: usize| rat(t.alpha_minus[a * n2 + c]);
    let ka: Vec<BigRational> = t.kappa_plus[0].iter().map(|v| rat(*v)).collect();
    let kb: Vec<BigRational> = t.kappa_plus[1].iter().map(|v| rat(*v)).collect();
    let mut sum = BigRational::zero();
    for j1 in 0..k1 {
        for j2 in 0..k2 {
            let coef = ap(j1, j2) - am(j1, k2) - am(k1, j2) + ap(k1, k2);
            sum += rat_max0(coef) * &ka[j1] * &kb[j2];
        }
    }
    for j1 in 0..k1 {
        sum += (ap(j1, k2) - am(k1, k2)) * &ka[j1];
    }
    for j2 in 0..k2 {
        sum += (ap(k1, j2) - am(k1, k2)) * &kb[j2];
    }
    sum += ap(k1, k2);
    let [s1, s2] = &t.sides;
    let g1 = rat(b.lo[2]);
    let drift = rat(s1.y_min) - rat(s1.f_rmin) * &g1;
    let exact = match assembly {
        Assembly::Separate => {
            let sub = rat(t.beta) * drift * rat(s2.y_min) / rat(t.q_r1max);
            (sum * rat(s1.x_max) * rat(s2.x_max) - sub) / (rat(s1.f_rmin) * g1 * rat(s2.y_min))
        }
        Assembly::Ratio => {
            sum * rat(t.u1_max) * rat(t.v2_max) - rat(t.beta) * (rat(s1.y_min) / (g1 * rat(s1.f_rmin)) - BigRational::one()) / rat(t.q_r1max)
        }
    };
    let exact_bound = rat_to_f64(&exact);
    Ok(ExactCheck {
        float_bound,
        exact_bound,
        rounding_error: float_bound - exact_bound,
    })
}

/// Product bound for g₁, g₂ ≤ g_max ≤ 0.003.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallGReport {
    pub g_max: f64,
    /// sup of x₁/(F(r₁)g₁), attained at r₁ = 1 − g_max, g₁ = g_max
    pub ratio_factor: f64,
    /// 1/binom(2α(1 − g_max), α(1 − g_max))
    pub binom_factor: f64,
    pub product: f64,
    pub c: f64,
}

impl SmallGReport {
    pub fn product_within_c(&self) -> bool {
        self.product <= self.c
    }
}

/// x₁/(F(r₁)g₁) = (1 − β) + β·(mean of F over [r₁, r₁ + g₁])/F(r₁). For
/// convex increasing F the mean-to-left-endpoint ratio grows with both r₁ and
/// g₁, so the supremum sits at g₁ = g_max, r₁ = 1 − g_max.
pub fn small_g_bound(g_max: f64, params: &OnlineParams) -> Result<SmallGReport, CertifyError> {
    if !(g_max > 0.0 && g_max <= SMALL_G) {
        return Err(CertifyError::Domain(format!("g_max = {g_max} outside (0, {SMALL_G}]")));
    }
    let p = params;
    let r = 1.0 - g_max;
    let ratio_factor = (1.0 - p.beta) + p.beta * p.q_unchecked(r, g_max) / (p.f_unchecked(r) * g_max);
    let a = p.alpha * (1.0 - g_max);
    let binom_factor = 1.0 / gen_binomial(2.0 * a, a)?;
    Ok(SmallGReport {
        g_max,
        ratio_factor,
        binom_factor,
        product: ratio_factor * binom_factor,
        c: p.c,
    })
}

/// Axis-aligned region to certify; each entry is [lo, hi] for r₁, r₂, g₁, g₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl Region {
    /// r₁, r₂ ∈ [0, 1] and g₁, g₂ ∈ [g_min, 1].
    pub fn with_g_min(g_min: f64) -> Self {
        Self {
            lo: [0.0, 0.0, g_min, g_min],
            hi: [1.0; 4],
        }
    }

    fn validate(&self) -> Result<(), CertifyError> {
        for a in 0..4 {
            if !(0.0 <= self.lo[a] && self.lo[a] <= self.hi[a] && self.hi[a] <= 1.0) {
                return Err(CertifyError::Domain(format!("region axis {a}: [{}, {}]", self.lo[a], self.hi[a])));
            }
        }
        if self.lo[2] < SMALL_G || self.lo[3] < SMALL_G {
            return Err(CertifyError::Domain(format!("region demands must be ≥ {SMALL_G}; smaller ones use small_g_bound")));
        }
        Ok(())
    }

    /// Grid boxes of side at most ε, in lexicographic axis order, keeping
    /// the feasible ones.
    pub fn boxes(&self, epsilon: f64) -> Vec<Box4> {
        let cells: Vec<usize> = (0..4)
            .map(|a| (((self.hi[a] - self.lo[a]) / epsilon) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        let edge = |a: usize, i: usize| {
            if i == cells[a] {
                self.hi[a]
            } else {
                self.lo[a] + (self.hi[a] - self.lo[a]) * i as f64 / cells[a] as f64
            }
        };
        let mut out = Vec::new();
        for i0 in 0..cells[0] {
            for i1 in 0..cells[1] {
                for i2 in 0..cells[2] {
                    for i3 in 0..cells[3] {
                        let idx = [i0, i1, i2, i3];
                        let b = Box4 {
                            lo: std::array::from_fn(|a| edge(a, idx[a])),
                            hi: std::array::from_fn(|a| edge(a, idx[a] + 1)),
                        };
                        if b.feasible() {
                            out.push(b);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedBox {
    pub region_box: Box4,
    /// the worst leaf found at the depth limit
    pub witness: Box4,
    pub bound: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertReport {
    pub region: Region,
    pub epsilon: f64,
    pub c: f64,
    pub depth: u32,
    /// bisections allowed below each grid box (4 per level)
    pub max_splits: u32,
    pub assembly: Assembly,
    pub boxes_checked: usize,
    pub boxes_passed: usize,
    /// leaves evaluated, counting bisection children
    pub evaluations: usize,
    /// largest bound among passed leaves, or among failing witnesses when
    /// any box failed
    pub worst_bound: Option<f64>,
    pub worst_box: Option<Box4>,
    pub failures: Vec<FailedBox>,
    pub passed: bool,
    pub runtime_secs: f64,
}

impl CertReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct BoxOutcome {
    pass: bool,
    worst: Option<(f64, Box4)>,
    evaluations: usize,
    failure: Option<FailedBox>,
}

/// Bisections per refinement level: one per axis.
const AXES: u32 = 4;

fn certify_box(b: &Box4, c: f64, depth: u32, p: &OnlineParams, asm: Assembly) -> BoxOutcome {
    fn go(b: &Box4, top: &Box4, c: f64, depth: u32, p: &OnlineParams, asm: Assembly, out: &mut BoxOutcome) {
        if !b.feasible() {
            return;
        }
        out.evaluations += 1;
        let bound = box_upper_bound_with(b, p, DEFAULT_ORDER, DEFAULT_ORDER, asm);
        match bound {
            Ok(v) if v <= c => {
                if out.worst.is_none_or(|(w, _)| v > w) {
                    out.worst = Some((v, *b));
                }
            }
            _ if depth > 0 => {
                let (l, r) = b.bisect();
                go(&l, top, c, depth - 1, p, asm, out);
                if out.pass {
                    go(&r, top, c, depth - 1, p, asm, out);
                }
            }
            other => {
                out.pass = false;
                let (bound, reason) = match other {
                    Ok(v) => (Some(v), format!("bound {v} > c at the depth limit")),
                    Err(e) => (None, e.to_string()),
                };
                out.failure = Some(FailedBox {
                    region_box: *top,
                    witness: *b,
                    bound,
                    reason,
                });
            }
        }
    }
    let mut out = BoxOutcome {
        pass: true,
        worst: None,
        evaluations: 0,
        failure: None,
    };
    go(b, b, c, depth * AXES, p, asm, &mut out);
    out
}

/// Certifies f ≤ c on every feasible grid box of the region, bisecting a
/// box along its widest axis before declaring failure. `depth` counts
/// refinement levels: a leaf at the limit has every side at most ε/2^depth,
/// which takes four bisections per level.
/// Stops refining a grid box at its first failing leaf.
pub fn certify_region(region: &Region, epsilon: f64, c: f64, depth: u32, params: &OnlineParams) -> Result<CertReport, CertifyError> {
    certify_region_with(region, epsilon, c, depth, params, Assembly::default())
}

pub fn certify_region_with(
    region: &Region,
    epsilon: f64,
    c: f64,
    depth: u32,
    params: &OnlineParams,
    assembly: Assembly,
) -> Result<CertReport, CertifyError> {
    region.validate()?;
    if !(epsilon > 0.0) {
        return Err(CertifyError::Domain(format!("epsilon = {epsilon} must be positive")));
    }
    let start = Instant::now();
    let boxes = region.boxes(epsilon);
    let outcomes = map_items(&boxes, |b| certify_box(b, c, depth, params, assembly));
    let mut passed = 0;
    let mut evaluations = 0;
    let mut worst_pass: Option<(f64, Box4)> = None;
    let mut failures = Vec::new();
    for o in outcomes {
        evaluations += o.evaluations;
        if o.pass {
            passed += 1;
            if let Some((v, b)) = o.worst {
                if worst_pass.is_none_or(|(w, _)| v > w) {
                    worst_pass = Some((v, b));
                }
            }
        } else if let Some(f) = o.failure {
            failures.push(f);
        }
    }
    let worst_fail = failures
        .iter()
        .fold(None::<(f64, Box4)>, |acc, f| match (acc, f.bound) {
            (_, None) => acc.or(Some((f64::INFINITY, f.witness))),
            (Some((w, _)), Some(v)) if w >= v => acc,
            (_, Some(v)) => Some((v, f.witness)),
        });
    let worst = if failures.is_empty() { worst_pass } else { worst_fail };
    Ok(CertReport {
        region: *region,
        epsilon,
        c,
        depth,
        max_splits: depth * AXES,
        assembly,
        boxes_checked: boxes.len(),
        boxes_passed: passed,
        evaluations,
        worst_bound: worst.map(|w| w.0),
        worst_box: worst.map(|w| w.1),
        passed: failures.is_empty(),
        failures,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dirmech_testkit::SplitMix;

    fn p() -> OnlineParams {
        OnlineParams::default()
    }

    fn random_point_in(b: &Box4, rng: &mut SplitMix) -> Option<[f64; 4]> {
        for _ in 0..100 {
            let pt: [f64; 4] = std::array::from_fn(|a| rng.range(b.lo[a], b.hi[a]));
            if pt[1] + pt[3] <= pt[0] && pt[0] + pt[2] <= 1.0 {
                return Some(pt);
            }
        }
        None
    }

    #[test]
    fn point_box_matches_pointwise() {
        for pt in [[0.5, 0.1, 0.4, 0.3], [0.9, 0.2, 0.05, 0.6], [0.35, 0.0, 0.6, 0.35]] {
            let b = Box4::point(pt).unwrap();
            let bound = box_upper_bound(&b, &p(), 3, 3).unwrap() - SAFETY_MARGIN;
            let f = pointwise_f(pt, &p()).unwrap();
            assert!(bound >= f - 1e-12 && bound - f < 1e-12, "{pt:?}: {bound} vs {f}");
        }
    }

    #[test]
    fn degenerate_denominator_refused() {
        let b = Box4::new([0.5, 0.0, 0.0, 0.1], [0.6, 0.1, 0.1, 0.2]).unwrap();
        assert!(matches!(box_upper_bound(&b, &p(), 3, 3), Err(CertifyError::DegenerateDenominator(_))));
        assert!(matches!(box_upper_bound(&b, &p(), 4, 3), Err(CertifyError::Order(4))));
    }

    #[test]
    fn box_bound_dominates_center_and_shrinks() {
        let center = [0.6, 0.2, 0.35, 0.3];
        let f = pointwise_f(center, &p()).unwrap();
        let mut last = f64::INFINITY;
        for h in [0.05, 0.025, 0.0125, 0.005, 0.001] {
            let b = Box4::new(std::array::from_fn(|a| center[a] - h), std::array::from_fn(|a| center[a] + h)).unwrap();
            let v = box_upper_bound(&b, &p(), 3, 3).unwrap();
            assert!(v >= f, "h = {h}");
            assert!(v <= last + 1e-15, "h = {h}: {v} > {last}");
            last = v;
        }
    }

    #[test]
    fn soundness_on_random_points() {
        let boxes = Region::with_g_min(0.3).boxes(0.05);
        let mut rng = SplitMix(17);
        for asm in [Assembly::Separate, Assembly::Ratio] {
            let mut checked = 0;
            while checked < 1000 {
                let top = &boxes[(rng.next_u64() % boxes.len() as u64) as usize];
                // a random depth-2 leaf keeps the bounds informative
                let mut b = *top;
                for _ in 0..8 {
                    let (l, r) = b.bisect();
                    b = if rng.next_u64().is_multiple_of(2) { l } else { r };
                }
                let Ok(bound) = box_upper_bound_with(&b, &p(), 3, 3, asm) else { continue };
                if let Some(pt) = random_point_in(&b, &mut rng) {
                    let f = pointwise_f(pt, &p()).unwrap();
                    assert!(f <= bound + 1e-12, "{asm:?} {pt:?} in {b:?}: {f} > {bound}");
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn ratio_assembly_is_tighter_and_agrees_at_points() {
        let pt = [0.7, 0.05, 0.3, 0.6];
        let point = Box4::point(pt).unwrap();
        let sep = box_upper_bound_with(&point, &p(), 3, 3, Assembly::Separate).unwrap();
        let rat = box_upper_bound_with(&point, &p(), 3, 3, Assembly::Ratio).unwrap();
        assert!((sep - rat).abs() < 1e-12);
        let b = Box4::new([0.68, 0.03, 0.29, 0.58], [0.72, 0.07, 0.31, 0.62]).unwrap();
        let sep = box_upper_bound_with(&b, &p(), 3, 3, Assembly::Separate).unwrap();
        let rat = box_upper_bound_with(&b, &p(), 3, 3, Assembly::Ratio).unwrap();
        assert!(rat < sep, "{rat} vs {sep}");
    }

    #[test]
    fn interval_images_bracket_interior() {
        let mut rng = SplitMix(3);
        let boxes = Region::with_g_min(0.3).boxes(0.1);
        for b in boxes.iter().step_by(41) {
            let s1 = side_bounds((b.lo[0], b.hi[0]), (b.lo[2], b.hi[2]), 1.0, &p());
            let s2 = side_bounds((b.lo[1], b.hi[1]), (b.lo[3], b.hi[3]), b.hi[0], &p());
            for _ in 0..100 {
                let Some([r1, r2, g1, g2]) = random_point_in(b, &mut rng) else { continue };
                for (s, r, g) in [(&s1, r1, g1), (&s2, r2, g2)] {
                    let y = p().q_unchecked(r, g);
                    let x = 0.3 * p().f_unchecked(r) * g + 0.7 * y;
                    assert!(s.y_min <= y + 1e-15 && y <= s.y_max + 1e-15);
                    assert!(x <= s.x_max + 1e-15);
                }
            }
        }
    }

    #[test]
    fn small_g_factors() {
        let r = small_g_bound(0.003, &p()).unwrap();
        assert!(r.binom_factor <= 0.39454 && (r.binom_factor - 0.394_535_4).abs() < 1e-6, "{r:?}");
        assert!(r.ratio_factor <= 1.000605 + 1e-6, "{r:?}");
        assert!((r.product - r.ratio_factor * r.binom_factor).abs() < 1e-16);
        let tiny = small_g_bound(1e-9, &p()).unwrap();
        let limit = 1.0 / gen_binomial(2.0 * 1.2337, 1.2337).unwrap();
        assert!((tiny.binom_factor - limit).abs() < 1e-8 && (tiny.ratio_factor - 1.0).abs() < 1e-8);
        assert!(small_g_bound(0.004, &p()).is_err());
        assert!(small_g_bound(0.0, &p()).is_err());
    }

    #[test]
    fn empty_and_failing_regions() {
        // r₁ ≤ 0.1 with g₂ ≥ 0.5 leaves no feasible box
        let empty = Region {
            lo: [0.0, 0.0, 0.3, 0.5],
            hi: [0.1, 0.1, 1.0, 1.0],
        };
        let rep = certify_region(&empty, 0.05, 0.3947, 6, &p()).unwrap();
        assert!(rep.passed && rep.boxes_checked == 0 && rep.worst_bound.is_none());
        let small = Region {
            lo: [0.6, 0.0, 0.3, 0.3],
            hi: [0.7, 0.1, 0.4, 0.4],
        };
        let rep = certify_region(&small, 0.05, 0.2, 2, &p()).unwrap();
        assert!(!rep.passed);
        assert!(!rep.failures.is_empty() && rep.worst_box.is_some());
        assert!(certify_region(&Region::with_g_min(0.001), 0.05, 0.3947, 1, &p()).is_err());
    }

    #[test]
    fn report_is_deterministic() {
        let region = Region {
            lo: [0.5, 0.0, 0.3, 0.3],
            hi: [0.7, 0.2, 0.5, 0.5],
        };
        let mut a = certify_region(&region, 0.05, 0.3947, 6, &p()).unwrap();
        let mut b = certify_region(&region, 0.05, 0.3947, 6, &p()).unwrap();
        a.runtime_secs = 0.0;
        b.runtime_secs = 0.0;
        assert_eq!(a, b);
        assert!(a.passed, "{:?}", a.failures.first());
    }

    #[test]
    fn exact_assembly_agrees() {
        let boxes = Region::with_g_min(0.3).boxes(0.1);
        let mut n = 0;
        for b in boxes.iter().take(50) {
            for asm in [Assembly::Separate, Assembly::Ratio] {
                let Ok(chk) = exact_assembly_check(b, &p(), asm) else { continue };
                assert!(chk.rounding_error.abs() < SAFETY_MARGIN, "{chk:?}");
                n += 1;
            }
        }
        assert!(n >= 50, "{n}");
    }
}
