//! Series analysis of the correlation function Ψ.
//!
//! With q_i = 1/x_i − 1 and m_i = ρ_i q_i, Ψ expands as
//! Σ_{j₁,j₂} α_{j₁,j₂} κ_{1,j₁} κ_{2,j₂}, where
//!
//! * G_j(ρ, q) is the j-th Taylor coefficient of f(t)^q, f(t) = Σ a_i t^i,
//!   a_i = ρ/(ρ+i) · binom(ρ+i−1, i), obtained from the Faà di Bruno
//!   partition sum;
//! * κ_{i,j} = θ_i ρ_i/(j x_i + ρ_i) · binom(ρ_i/x_i + j, ρ_i) · G_j(ρ_i, q_i)
//!   with θ_i = (Γ(1+ρ_i)Γ(1−ρ_i))^{1−1/x_i}; κ ≥ 0 and Σ_j κ_{i,j} = 1;
//! * α_{j₁,j₂} = 1/binom(m₁+m₂+j₁+j₂, m₁+j₁), nonincreasing in each index.
//!
//! Truncating the double sum gives a lower bound. Replacing the tail by the
//! boundary α values gives the (k₁, k₂)-order upper bound.

use crate::specialfn::{binomial_real_int, gen_binomial, lgamma, ln_gen_binomial, SpecialFnError};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsiError {
    #[error("invalid Ψ query: {0}")]
    Query(String),
    #[error("approximation order {order} exceeds the supported maximum {max}")]
    OrderTooLarge { order: usize, max: usize },
    #[error("log-monotone recursion needs a0 > 0, got {0}")]
    LeadingCoefficient(f64),
    #[error(transparent)]
    SpecialFn(#[from] SpecialFnError),
}

/// Largest j whose partition list is cached, and the largest order accepted
/// by [`psi_upper_bound`].
pub const MAX_ORDER: usize = 12;

/// Default order for upper bounds.
pub const DEFAULT_ORDER: usize = 3;

/// Arguments of Ψ(x₁, x₂; ρ₁, ρ₂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiQuery {
    pub x1: f64,
    pub x2: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl PsiQuery {
    pub fn new(x1: f64, x2: f64, rho1: f64, rho2: f64) -> Result<Self, PsiError> {
        let q = Self { x1, x2, rho1, rho2 };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), PsiError> {
        let ok_x = |x: f64| x > 0.0 && x <= 1.0;
        let ok_r = |r: f64| (0.0..=1.0).contains(&r);
        if !(ok_x(self.x1) && ok_x(self.x2) && ok_r(self.rho1) && ok_r(self.rho2))
            || self.rho1 + self.rho2 > 1.0 + 1e-12
        {
            return Err(PsiError::Query(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn q1(&self) -> f64 {
        1.0 / self.x1 - 1.0
    }

    pub fn q2(&self) -> f64 {
        1.0 / self.x2 - 1.0
    }
}

// ---------------------------------------------------------------------------
// partitions

/// Visits every (k₁, …, k_j) with Σ i·k_i = j. Order: k₁ descending in the
/// outermost position, then k₂ descending, and so on.
pub fn for_each_partition(j: usize, mut visit: impl FnMut(&[usize])) {
    let mut k = vec![0usize; j];
    fn rec(i: usize, remaining: usize, k: &mut [usize], visit: &mut dyn FnMut(&[usize])) {
        if remaining == 0 {
            visit(k);
            return;
        }
        if i > k.len() {
            return;
        }
        for c in (0..=remaining / i).rev() {
            k[i - 1] = c;
            rec(i + 1, remaining - c * i, k, visit);
        }
        k[i - 1] = 0;
    }
    rec(1, j, &mut k, &mut visit);
}

fn partition_cache() -> &'static [Vec<Vec<usize>>] {
    static CACHE: OnceLock<Vec<Vec<Vec<usize>>>> = OnceLock::new();
    CACHE.get_or_init(|| {
        (0..=MAX_ORDER)
            .map(|j| {
                let mut out = Vec::new();
                for_each_partition(j, |k| out.push(k.to_vec()));
                out
            })
            .collect()
    })
}

/// All (k₁, …, k_j) with Σ i·k_i = j, without duplicates.
pub fn faa_di_bruno_partitions(j: usize) -> Vec<Vec<usize>> {
    if j <= MAX_ORDER {
        return partition_cache()[j].clone();
    }
    let mut out = Vec::new();
    for_each_partition(j, |k| out.push(k.to_vec()));
    out
}

// ---------------------------------------------------------------------------
// coefficients

/// a_i = ρ/(ρ+i) · binom(ρ+i−1, i) for i = 0..=n: the Taylor coefficients of
/// ρ·B(t; ρ, 1−ρ)/t^ρ.
pub fn beta_series_coefficients(rho: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut binom = 1.0;
    for i in 0..=n {
        if i > 0 {
            binom *= (rho + i as f64 - 1.0) / i as f64;
        }
        out.push(rho / (rho + i as f64) * binom);
    }
    out
}

/// Closed form of a_i a_{i−2} / a_{i−1}² for the Beta-series coefficients,
/// i ≥ 2.
pub fn log_convexity_ratio(rho: f64, i: usize) -> f64 {
    let i = i as f64;
    (i - 1.0) * (i + rho - 1.0).powi(3) / (i * (i + rho - 2.0).powi(2) * (i + rho))
}

fn g_from_partition(k: &[usize], a: &[f64], q: f64) -> f64 {
    let mut big_k = 0usize;
    let mut prod = 1.0;
    let mut inv_fact = 1.0;
    for (idx, &ki) in k.iter().enumerate() {
        if ki == 0 {
            continue;
        }
        big_k += ki;
        prod *= a[idx + 1].powi(ki as i32);
        for m in 1..=ki {
            inv_fact /= m as f64;
        }
    }
    let mut k_fact = 1.0;
    for m in 1..=big_k {
        k_fact *= m as f64;
    }
    k_fact * inv_fact * binomial_real_int(q, big_k) * prod
}

/// G_j(ρ, q) by the partition sum.
pub fn g_coefficient(rho: f64, q: f64, j: usize) -> f64 {
    let a = beta_series_coefficients(rho, j);
    g_with_coefficients(&a, q, j)
}

fn g_with_coefficients(a: &[f64], q: f64, j: usize) -> f64 {
    if j == 0 {
        return 1.0;
    }
    if j <= MAX_ORDER {
        partition_cache()[j].iter().map(|k| g_from_partition(k, a, q)).sum()
    } else {
        let mut s = 0.0;
        for_each_partition(j, |k| s += g_from_partition(k, a, q));
        s
    }
}

/// G_0..=G_n(ρ, q).
pub fn g_coefficients(rho: f64, q: f64, n: usize) -> Vec<f64> {
    let a = beta_series_coefficients(rho, n);
    (0..=n).map(|j| g_with_coefficients(&a, q, j)).collect()
}

/// θ = (Γ(1+ρ)Γ(1−ρ))^{1−1/x}, for ρ ∈ [0, 1).
pub fn theta(x: f64, rho: f64) -> f64 {
    ((1.0 - 1.0 / x) * (lgamma(1.0 + rho) + lgamma(1.0 - rho))).exp()
}

/// ln of ρ/(jx+ρ) · binom(ρ/x + j, ρ), the moment factor inside κ.
pub fn ln_kappa_scale(x: f64, rho: f64, j: usize) -> Result<f64, SpecialFnError> {
    let j = j as f64;
    Ok(rho.ln() - (j * x + rho).ln() + ln_gen_binomial(rho / x + j, rho)?)
}

/// A side of Ψ whose coefficients reduce to independence: ρ ∈ {0, 1} (the
/// copula then emits a fresh uniform) or x = 1 (exponent zero).
fn degenerate_side(x: f64, rho: f64) -> bool {
    rho == 0.0 || rho == 1.0 || x == 1.0
}

/// κ_j for one side.
pub fn kappa_coefficient(x: f64, rho: f64, j: usize) -> Result<f64, PsiError> {
    if !(x > 0.0 && x <= 1.0) || !(0.0..=1.0).contains(&rho) {
        return Err(PsiError::Query(format!("kappa: x = {x}, rho = {rho}")));
    }
    if degenerate_side(x, rho) {
        return Ok(if j == 0 { 1.0 } else { 0.0 });
    }
    let g = g_coefficient(rho, 1.0 / x - 1.0, j).max(0.0);
    Ok(kappa_from_g(x, rho, j, g)?)
}

fn kappa_from_g(x: f64, rho: f64, j: usize, g: f64) -> Result<f64, SpecialFnError> {
    if g <= 0.0 {
        return Ok(0.0);
    }
    Ok((theta(x, rho).ln() + ln_kappa_scale(x, rho, j)? + g.ln()).exp())
}

/// α_{j₁,j₂} given m_i = ρ_i q_i.
pub fn alpha_from_m(m1: f64, m2: f64, j1: usize, j2: usize) -> f64 {
    let (a, b) = (m1 + j1 as f64, m2 + j2 as f64);
    (lgamma(a + 1.0) + lgamma(b + 1.0) - lgamma(a + b + 1.0)).exp()
}

/// Effective m_i = ρ_i q_i, zero on a degenerate side.
fn effective_m(x: f64, rho: f64) -> f64 {
    if degenerate_side(x, rho) {
        0.0
    } else {
        rho * (1.0 / x - 1.0)
    }
}

/// α_{j₁,j₂} for a query.
pub fn alpha_coefficient(query: &PsiQuery, j1: usize, j2: usize) -> f64 {
    alpha_from_m(effective_m(query.x1, query.rho1), effective_m(query.x2, query.rho2), j1, j2)
}

/// Coefficient tables for a query, up to index `jmax` on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCoefficients {
    pub query: PsiQuery,
    pub g: [Vec<f64>; 2],
    pub kappa: [Vec<f64>; 2],
    pub theta: [f64; 2],
    pub m: [f64; 2],
}

impl SeriesCoefficients {
    pub fn new(query: &PsiQuery, jmax: usize) -> Result<Self, PsiError> {
        query.validate()?;
        let side = |x: f64, rho: f64| -> Result<(Vec<f64>, Vec<f64>, f64), PsiError> {
            if degenerate_side(x, rho) {
                let mut k = vec![0.0; jmax + 1];
                k[0] = 1.0;
                let mut g = vec![0.0; jmax + 1];
                g[0] = 1.0;
                return Ok((g, k, 1.0));
            }
            let g = g_coefficients(rho, 1.0 / x - 1.0, jmax);
            let k = g
                .iter()
                .enumerate()
                .map(|(j, &gj)| kappa_from_g(x, rho, j, gj.max(0.0)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((g, k, theta(x, rho)))
        };
        let (g1, k1, t1) = side(query.x1, query.rho1)?;
        let (g2, k2, t2) = side(query.x2, query.rho2)?;
        Ok(Self {
            query: *query,
            g: [g1, g2],
            kappa: [k1, k2],
            theta: [t1, t2],
            m: [effective_m(query.x1, query.rho1), effective_m(query.x2, query.rho2)],
        })
    }

    pub fn alpha(&self, j1: usize, j2: usize) -> f64 {
        alpha_from_m(self.m[0], self.m[1], j1, j2)
    }

    pub fn jmax(&self) -> usize {
        self.kappa[0].len() - 1
    }

    /// 1 − Σ_{j ≤ jmax} κ_{i,j}: the probability mass not covered by the table.
    pub fn tail_mass(&self, side: usize) -> f64 {
        1.0 - self.kappa[side].iter().sum::<f64>()
    }

    /// The (k₁, k₂)-order upper bound. Needs a table with jmax ≥ max(k₁, k₂) − 1.
    pub fn upper_bound(&self, k1: usize, k2: usize) -> f64 {
        let (ka, kb) = (&self.kappa[0], &self.kappa[1]);
        let akk = self.alpha(k1, k2);
        let mut total = akk;
        for j1 in 0..k1 {
            total += (self.alpha(j1, k2) - akk) * ka[j1];
        }
        for j2 in 0..k2 {
            total += (self.alpha(k1, j2) - akk) * kb[j2];
        }
        for j1 in 0..k1 {
            for j2 in 0..k2 {
                let c = self.alpha(j1, j2) - self.alpha(j1, k2) - self.alpha(k1, j2) + akk;
                total += c * ka[j1] * kb[j2];
            }
        }
        total
    }

    /// Σ_{j₁, j₂ ≤ jmax} α κ κ.
    pub fn partial_sum(&self, jmax: usize) -> f64 {
        let mut total = 0.0;
        for j1 in 0..=jmax {
            for j2 in 0..=jmax {
                total += self.alpha(j1, j2) * self.kappa[0][j1] * self.kappa[1][j2];
            }
        }
        total
    }
}

/// The (k₁, k₂)-order upper bound on Ψ. Order (0, 0) is α₀₀.
pub fn psi_upper_bound(query: &PsiQuery, k1: usize, k2: usize) -> Result<f64, PsiError> {
    let order = k1.max(k2);
    if order > MAX_ORDER {
        return Err(PsiError::OrderTooLarge { order, max: MAX_ORDER });
    }
    let table = SeriesCoefficients::new(query, order.saturating_sub(1))?;
    Ok(table.upper_bound(k1, k2))
}

/// Truncated double sum over j₁, j₂ ≤ jmax; a lower bound on Ψ.
pub fn psi_partial_sum(query: &PsiQuery, jmax: usize) -> Result<f64, PsiError> {
    Ok(SeriesCoefficients::new(query, jmax)?.partial_sum(jmax))
}

/// lim Ψ(x₁, x₂; λ₁x₁, λ₂x₂) as x → 0, i.e. 1/binom(λ₁+λ₂, λ₁).
pub fn psi_infinitesimal_limit(lambda1: f64, lambda2: f64) -> Result<f64, PsiError> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return Err(PsiError::Query(format!("lambda = ({lambda1}, {lambda2}) must be positive")));
    }
    Ok(1.0 / gen_binomial(lambda1 + lambda2, lambda1)?)
}

/// Taylor coefficients c₁, …, c_{n−1} of log f, where f = Σ a_k t^k, from
/// k a₀ c_k = k a_k − Σ_{i=1}^{k−1} i a_{k−i} c_i.
pub fn log_monotone_coefficients(a: &[f64]) -> Result<Vec<f64>, PsiError> {
    let a0 = *a.first().ok_or(PsiError::LeadingCoefficient(f64::NAN))?;
    if !(a0 > 0.0) {
        return Err(PsiError::LeadingCoefficient(a0));
    }
    let mut c = vec![0.0; a.len()];
    for k in 1..a.len() {
        let mut s = k as f64 * a[k];
        for i in 1..k {
            s -= i as f64 * a[k - i] * c[i];
        }
        c[k] = s / (k as f64 * a0);
    }
    c.remove(0);
    Ok(c)
}
