//! Independent numerical oracles for the `dirmech` test suites.
//!
//! Nothing in here calls into `dirmech`. Every routine is a deliberately
//! simple, slow, textbook method so that it can be used to freeze expected
//! values and cross-check the production kernels.

pub mod quad;
pub mod stats;

use std::collections::VecDeque;

/// ln Γ(x) for x > 0 by upward shift and the Stirling series.
///
/// Shifts the argument past 40 with the recurrence Γ(x+1) = xΓ(x), then sums
/// the asymptotic series with Bernoulli coefficients through B₁₆.
pub fn stirling_ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    while z < 40.0 {
        shift += z.ln();
        z += 1.0;
    }
    // B_{2k} / (2k (2k-1))
    const COEF: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360360.0,
        1.0 / 156.0,
        -3617.0 / 122400.0,
    ];
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut pow = inv;
    for c in COEF {
        series += c * pow;
        pow *= inv2;
    }
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

/// Γ(x+1) / (Γ(y+1) Γ(x−y+1)) through the Stirling oracle.
pub fn binom_oracle(x: f64, y: f64) -> f64 {
    (stirling_ln_gamma(x + 1.0) - stirling_ln_gamma(y + 1.0) - stirling_ln_gamma(x - y + 1.0)).exp()
}

/// Coefficients of f(t)^q for f(t) = Σ aᵢ tⁱ with a₀ = 1, by the classical
/// power-of-a-series recurrence
/// b₀ = 1, n bₙ = Σ_{k=1}^{n} (k(q+1) − n) aₖ b_{n−k}.
pub fn power_series_pow(a: &[f64], q: f64, n: usize) -> Vec<f64> {
    assert!((a[0] - 1.0).abs() < 1e-15);
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    for m in 1..=n {
        let mut acc = 0.0;
        for k in 1..=m.min(a.len() - 1) {
            acc += (k as f64 * (q + 1.0) - m as f64) * a[k] * b[m - k];
        }
        b[m] = acc / m as f64;
    }
    b
}

/// Taylor coefficients of ρ·B(t; ρ, 1−ρ)/t^ρ, built from the binomial series
/// of (1−t)^{−ρ} by the running product (ρ)_i / i!.
pub fn beta_series_coefficients_oracle(rho: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut poch = 1.0; // (rho)_i / i!
    for i in 0..=n {
        out.push(rho / (rho + i as f64) * poch);
        poch *= (rho + i as f64) / (i as f64 + 1.0);
    }
    out
}

/// G_j(ρ, q) for j = 0..=n from the power recurrence, independent of any
/// partition enumeration.
pub fn g_coefficients_oracle(rho: f64, q: f64, n: usize) -> Vec<f64> {
    power_series_pow(&beta_series_coefficients_oracle(rho, n), q, n)
}

/// Brute-force enumeration of all (k₁..k_j) with Σ i·kᵢ = j by scanning the
/// full box ∏ [0, j/i].
pub fn partitions_bruteforce(j: usize) -> Vec<Vec<usize>> {
    if j == 0 {
        return vec![vec![]];
    }
    let bounds: Vec<usize> = (1..=j).map(|i| j / i).collect();
    let mut out = Vec::new();
    let mut cur = vec![0usize; j];
    loop {
        let s: usize = cur.iter().enumerate().map(|(i, k)| (i + 1) * k).sum();
        if s == j {
            out.push(cur.clone());
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == j {
                return out;
            }
            if cur[pos] < bounds[pos] {
                cur[pos] += 1;
                break;
            }
            cur[pos] = 0;
            pos += 1;
        }
    }
}

/// Line-graph distance between two edges by breadth-first search over the
/// explicit line graph. Edges are (left, right) pairs. `None` when
/// disconnected.
pub fn line_graph_distance(edges: &[(usize, usize)], from: usize, to: usize) -> Option<usize> {
    let n = edges.len();
    let adjacent = |a: usize, b: usize| a != b && (edges[a].0 == edges[b].0 || edges[a].1 == edges[b].1);
    let mut dist = vec![usize::MAX; n];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(e) = queue.pop_front() {
        if e == to {
            return Some(dist[e]);
        }
        for f in 0..n {
            if dist[f] == usize::MAX && adjacent(e, f) {
                dist[f] = dist[e] + 1;
                queue.push_back(f);
            }
        }
    }
    None
}

/// Max of `f` over a uniform grid with `n` intervals on [lo, hi].
pub fn grid_max(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    (0..=n)
        .map(|i| f(lo + (hi - lo) * i as f64 / n as f64))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Central finite difference.
pub fn central_diff(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    (f(t + h) - f(t - h)) / (2.0 * h)
}

/// Relative difference |a−b| / max(|a|,|b|,tiny).
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-300);
    (a - b).abs() / scale
}

/// SplitMix64, used by tests that need arbitrary but reproducible inputs
/// without touching the library's generators.
#[derive(Debug, Clone)]
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stirling_matches_known_values() {
        assert!(stirling_ln_gamma(1.0).abs() < 1e-12);
        assert!((stirling_ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
        // Γ(5) = 24
        assert!((stirling_ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn power_recurrence_squares_a_series() {
        // (1 + t)^2 = 1 + 2t + t^2
        let b = power_series_pow(&[1.0, 1.0], 2.0, 4);
        assert_eq!(b, vec![1.0, 2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn partitions_of_six() {
        assert_eq!(partitions_bruteforce(6).len(), 11);
        assert_eq!(partitions_bruteforce(0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn bfs_distance() {
        // u0-v0, u0-v1, u1-v1
        let e = [(0, 0), (0, 1), (1, 1)];
        assert_eq!(line_graph_distance(&e, 0, 2), Some(2));
        assert_eq!(line_graph_distance(&e, 0, 1), Some(1));
    }
}
