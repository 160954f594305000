//! The Dirichlet copula and a Monte Carlo estimator of the correlation
//! function Ψ(x₁, x₂; ρ₁, ρ₂) = E[A₁^{1/x₁−1} A₂^{1/x₂−1}] / (x₁x₂).

use crate::exec::{run_blocks, DEFAULT_BLOCK};
use crate::randomness::{sample_dirichlet_ln_parts_into, DirichletParams, RandomnessError, RngState, SUM_SLACK};
use crate::specialfn::{lgamma, ln_reg_incomplete_beta_split, SpecialFnError};
use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CopulaError {
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
    #[error(transparent)]
    SpecialFn(#[from] SpecialFnError),
    #[error("invalid Ψ query: {0}")]
    Query(String),
}

/// Dirichlet coordinates and the uniforms derived from them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CopulaDraw {
    pub t: Vec<f64>,
    pub ln_t: Vec<f64>,
    /// ln(1 − T_i), from the other coordinates
    pub ln_1mt: Vec<f64>,
    pub a: Vec<f64>,
    pub ln_a: Vec<f64>,
}

/// Smallest log-uniform kept; exp(−745) is the last subnormal double.
pub const LN_A_FLOOR: f64 = -745.0;

/// Draws T ~ Dir(ρ, slack) and maps A_i = I(T_i; ρ_i, 1 − ρ_i).
///
/// Components with ρ_i ∈ {0, 1} carry no usable CDF, so they get a fresh
/// independent uniform, drawn after the Dirichlet vector in index order.
pub fn dirichlet_copula(params: &DirichletParams, rng: &mut RngState) -> Result<CopulaDraw, CopulaError> {
    let mut draw = CopulaDraw::default();
    copula_into(params.rho(), params.slack(), rng, &mut draw)?;
    Ok(draw)
}

pub(crate) fn copula_into(rho: &[f64], slack: f64, rng: &mut RngState, draw: &mut CopulaDraw) -> Result<(), CopulaError> {
    sample_dirichlet_ln_parts_into(rho, slack, rng, &mut draw.ln_t, &mut draw.ln_1mt);
    draw.t.clear();
    draw.t.extend(draw.ln_t.iter().map(|v| v.exp()));
    draw.ln_a.clear();
    for ((&r, &lt), &lw) in rho.iter().zip(&draw.ln_t).zip(&draw.ln_1mt) {
        let la = if r == 0.0 || r == 1.0 {
            f64::NAN // filled below
        } else {
            ln_copula_uniform(lt, lw, r)?
        };
        draw.ln_a.push(la);
    }
    for (i, &r) in rho.iter().enumerate() {
        if r == 0.0 || r == 1.0 {
            draw.ln_a[i] = rng.uniform_open().ln();
        }
    }
    draw.a.clear();
    draw.a.extend(draw.ln_a.iter().map(|v| v.exp()));
    Ok(())
}

/// ln A for A = I(T; ρ, 1 − ρ), given ln T and ln(1 − T), with 0 < ρ < 1.
pub(crate) fn ln_copula_uniform(ln_t: f64, ln_1mt: f64, rho: f64) -> Result<f64, SpecialFnError> {
    Ok(ln_reg_incomplete_beta_split(ln_t, ln_1mt, rho, 1.0 - rho)?.min(0.0))
}

/// A^{q} computed as exp(q·ln A) with ln A clamped at [`LN_A_FLOOR`].
#[inline]
pub fn pow_from_ln(ln_a: f64, q: f64) -> f64 {
    if q == 0.0 {
        return 1.0;
    }
    if ln_a == f64::NEG_INFINITY {
        return 0.0;
    }
    (q * ln_a.max(LN_A_FLOOR)).exp()
}

/// Which Monte Carlo estimator [`psi_mc_oracle`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiEstimator {
    /// Sample mean of A₁^{q₁}A₂^{q₂} under the copula itself.
    #[default]
    Direct,
    /// Importance sampling under the tilted law Dir(ρ₁/x₁, ρ₂/x₂, slack).
    ///
    /// Writing A_i^{q_i} = (A_i/T_i^{ρ_i})^{q_i} · T_i^{ρ_iq_i}, the second
    /// factor is absorbed by the exact Dirichlet moment and the remaining
    /// weight lies in [θ₁θ₂, 1]. The variance stays bounded as x → 0, where
    /// the direct estimator needs on the order of 1/x² trials.
    Tilted,
}

/// Estimate of Ψ with a two-sided 99% normal half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiEstimate {
    pub estimate: f64,
    pub half_width: f64,
    pub std_error: f64,
    pub trials: u64,
}

/// z-value of a two-sided 99% normal interval.
pub const Z99: f64 = 2.5758293035489004;

fn check_query(x1: f64, x2: f64, rho1: f64, rho2: f64) -> Result<(), CopulaError> {
    let ok_x = |x: f64| x > 0.0 && x <= 1.0;
    let ok_r = |r: f64| (0.0..=1.0).contains(&r);
    if !(ok_x(x1) && ok_x(x2) && ok_r(rho1) && ok_r(rho2)) || rho1 + rho2 > 1.0 + SUM_SLACK {
        return Err(CopulaError::Query(format!(
            "need x in (0,1], rho in [0,1] with rho1+rho2 <= 1; got x=({x1},{x2}) rho=({rho1},{rho2})"
        )));
    }
    Ok(())
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn merge(blocks: &[Moments]) -> Moments {
        blocks.iter().fold(Moments::default(), |acc, b| Moments {
            n: acc.n + b.n,
            sum: acc.sum + b.sum,
            sum_sq: acc.sum_sq + b.sum_sq,
        })
    }

    fn mean_se(&self) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.sum / n;
        if self.n < 2 {
            return (mean, 0.0);
        }
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Monte Carlo estimate of Ψ(x₁, x₂; ρ₁, ρ₂).
///
/// Trials are split into blocks of [`DEFAULT_BLOCK`], block `b` using
/// substream `b` of a stream derived from `rng`; the result does not depend
/// on the worker count.
pub fn psi_mc_oracle(
    x1: f64,
    x2: f64,
    rho1: f64,
    rho2: f64,
    trials: u64,
    estimator: PsiEstimator,
    rng: &mut RngState,
) -> Result<PsiEstimate, CopulaError> {
    check_query(x1, x2, rho1, rho2)?;
    if trials == 0 {
        return Err(CopulaError::Query("trials must be at least 1".into()));
    }
    let base = RngState::new(rng.next_u64());
    let (q1, q2) = (1.0 / x1 - 1.0, 1.0 / x2 - 1.0);
    let scale;
    let blocks: Vec<Result<Moments, CopulaError>>;
    match estimator {
        PsiEstimator::Direct => {
            let rho = [rho1, rho2];
            let slack = (1.0 - rho1 - rho2).max(0.0);
            scale = 1.0 / (x1 * x2);
            blocks = run_blocks(trials, DEFAULT_BLOCK, |b, n| {
                let mut r = base.substream(b);
                let mut draw = CopulaDraw::default();
                let mut m = Moments::default();
                for _ in 0..n {
                    copula_into(&rho, slack, &mut r, &mut draw)?;
                    m.push(pow_from_ln(draw.ln_a[0], q1) * pow_from_ln(draw.ln_a[1], q2));
                }
                Ok(m)
            });
        }
        PsiEstimator::Tilted => {
            // Components with ρ = 0 are independent uniforms with E[A^q] = x,
            // and q = 0 components contribute 1; both drop out of the sampling.
            let mut factor = 1.0 / (x1 * x2);
            let mut active: Vec<(f64, f64)> = Vec::new();
            for (x, r, q) in [(x1, rho1, q1), (x2, rho2, q2)] {
                if q == 0.0 {
                    continue;
                }
                if r == 0.0 {
                    factor *= x;
                } else {
                    active.push((r, q));
                }
            }
            let slack = (1.0 - rho1 - rho2).max(0.0);
            // E[∏ T_i^{ρ_i q_i}] under Dir(ρ, slack), total shape 1
            let mut ln_moment = -lgamma(1.0 + active.iter().map(|(r, q)| r * q).sum::<f64>());
            for &(r, q) in &active {
                ln_moment += lgamma(r * (1.0 + q)) - lgamma(r);
            }
            scale = factor * ln_moment.exp();
            let tilted: Vec<f64> = active.iter().map(|(r, q)| r * (1.0 + q)).collect();
            blocks = run_blocks(trials, DEFAULT_BLOCK, |b, n| {
                let mut r = base.substream(b);
                let mut ln_t = Vec::with_capacity(2);
                let mut ln_1mt = Vec::with_capacity(2);
                let mut m = Moments::default();
                for _ in 0..n {
                    sample_dirichlet_ln_parts_into(&tilted, slack, &mut r, &mut ln_t, &mut ln_1mt);
                    let mut ln_w = 0.0;
                    for ((&(rho, q), &lt), &lw) in active.iter().zip(&ln_t).zip(&ln_1mt) {
                        let la = ln_copula_uniform(lt, lw, rho)?;
                        ln_w += q * (la - rho * lt).min(0.0);
                    }
                    m.push(ln_w.exp());
                }
                Ok(m)
            });
        }
    }
    let blocks = blocks.into_iter().collect::<Result<Vec<_>, _>>()?;
    let merged = Moments::merge(&blocks);
    let (mean, se) = merged.mean_se();
    Ok(PsiEstimate {
        estimate: mean * scale,
        half_width: Z99 * se * scale,
        std_error: se * scale,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dirmech_testkit::stats::{covariance_with_se, ks_critical, ks_statistic};

    #[test]
    fn marginal_is_uniform() {
        let p = DirichletParams::new(vec![0.5]).unwrap();
        let mut rng = RngState::new(1);
        let n = 100_000;
        let mut a: Vec<f64> = (0..n).map(|_| dirichlet_copula(&p, &mut rng).unwrap().a[0]).collect();
        assert!(ks_statistic(&mut a, |z| z) < ks_critical(n, 1e-3));
    }

    #[test]
    fn marginals_uniform_on_quantile_grid() {
        let p = DirichletParams::new(vec![0.05, 0.3, 0.6]).unwrap();
        let mut rng = RngState::new(2);
        let n = 100_000;
        let draws: Vec<CopulaDraw> = (0..n).map(|_| dirichlet_copula(&p, &mut rng).unwrap()).collect();
        let crit = ks_critical(n, 1e-3);
        for i in 0..3 {
            for k in 1..=20 {
                let q = k as f64 / 21.0;
                let emp = draws.iter().filter(|d| d.a[i] <= q).count() as f64 / n as f64;
                assert!((emp - q).abs() < crit, "component {i} quantile {q}: {emp}");
            }
        }
    }

    #[test]
    fn uniforms_are_negatively_correlated() {
        let p = DirichletParams::new(vec![0.4, 0.4]).unwrap();
        let mut rng = RngState::new(3);
        let n = 400_000;
        let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let d = dirichlet_copula(&p, &mut rng).unwrap();
            x.push(d.a[0]);
            y.push(d.a[1]);
        }
        let (cov, se) = covariance_with_se(&x, &y);
        assert!(cov + 5.0 * se < 0.0, "cov {cov} se {se}");
    }

    #[test]
    fn monotone_functions_on_disjoint_sets_are_na() {
        // f increasing in A₀, g increasing in (A₁, A₂): E[fg] ≤ E[f]E[g] + 4σ
        let p = DirichletParams::new(vec![0.3, 0.25, 0.35]).unwrap();
        let fs: [fn(&[f64]) -> f64; 3] = [|a| a[0] * a[0], |a| (a[0] > 0.5) as u8 as f64, |a| a[0].sqrt()];
        let gs: [fn(&[f64]) -> f64; 3] = [|a| a[1] + a[2], |a| a[1].max(a[2]), |a| (a[1] * a[2]).powf(0.3)];
        let mut rng = RngState::new(4);
        let n = 200_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| dirichlet_copula(&p, &mut rng).unwrap().a).collect();
        for f in fs {
            for g in gs {
                let xs: Vec<f64> = draws.iter().map(|a| f(a)).collect();
                let ys: Vec<f64> = draws.iter().map(|a| g(a)).collect();
                let (cov, se) = covariance_with_se(&xs, &ys);
                assert!(cov <= 4.0 * se, "cov {cov} se {se}");
            }
        }
    }

    #[test]
    fn zero_rho_component_is_fresh_uniform() {
        let p = DirichletParams::new(vec![0.0, 0.7]).unwrap();
        let mut rng = RngState::new(5);
        let n = 100_000;
        let draws: Vec<CopulaDraw> = (0..n).map(|_| dirichlet_copula(&p, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|d| d.t[0] == 0.0));
        let mut a0: Vec<f64> = draws.iter().map(|d| d.a[0]).collect();
        assert!(ks_statistic(&mut a0, |z| z) < ks_critical(n, 1e-3));
        let xs: Vec<f64> = draws.iter().map(|d| d.a[0]).collect();
        let ys: Vec<f64> = draws.iter().map(|d| d.a[1]).collect();
        let (cov, se) = covariance_with_se(&xs, &ys);
        assert!(cov.abs() < 5.0 * se);
    }

    #[test]
    fn unit_exponents_give_exactly_one() {
        let mut rng = RngState::new(6);
        for est in [PsiEstimator::Direct, PsiEstimator::Tilted] {
            let r = psi_mc_oracle(1.0, 1.0, 0.3, 0.3, 1000, est, &mut rng).unwrap();
            assert_eq!(r.estimate, 1.0);
            assert_eq!(r.half_width, 0.0);
        }
    }

    #[test]
    fn independence_limit() {
        let mut rng = RngState::new(7);
        let r = psi_mc_oracle(0.4, 0.5, 0.4, 1e-6, 200_000, PsiEstimator::Direct, &mut rng).unwrap();
        assert!((r.estimate - 1.0).abs() <= r.half_width + 1e-3, "{r:?}");
    }

    #[test]
    fn estimators_agree() {
        let mut rng = RngState::new(8);
        let d = psi_mc_oracle(0.3, 0.4, 0.3, 0.25, 400_000, PsiEstimator::Direct, &mut rng).unwrap();
        let t = psi_mc_oracle(0.3, 0.4, 0.3, 0.25, 400_000, PsiEstimator::Tilted, &mut rng).unwrap();
        let gap = (d.estimate - t.estimate).abs();
        assert!(gap < 1.5 * (d.half_width + t.half_width), "{d:?} {t:?}");
        assert!(t.half_width < d.half_width);
    }

    #[test]
    fn small_x_tilted() {
        let mut rng = RngState::new(9);
        let r = psi_mc_oracle(0.01, 0.01, 0.01, 0.01, 100_000, PsiEstimator::Tilted, &mut rng).unwrap();
        assert!((r.estimate - 0.5).abs() < r.half_width + 0.02, "{r:?}");
    }

    #[test]
    fn results_do_not_depend_on_threads() {
        let run = |threads| {
            crate::exec::with_threads(threads, || {
                let mut rng = RngState::new(10);
                psi_mc_oracle(0.2, 0.3, 0.3, 0.3, 50_000, PsiEstimator::Direct, &mut rng).unwrap()
            })
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    }

    #[test]
    fn rejects_bad_queries() {
        let mut rng = RngState::new(0);
        assert!(psi_mc_oracle(0.0, 0.5, 0.1, 0.1, 10, PsiEstimator::Direct, &mut rng).is_err());
        assert!(psi_mc_oracle(0.5, 0.5, 0.6, 0.6, 10, PsiEstimator::Direct, &mut rng).is_err());
        assert!(psi_mc_oracle(0.5, 0.5, 0.1, 0.1, 0, PsiEstimator::Direct, &mut rng).is_err());
    }

    #[test]
    fn pow_guard() {
        assert_eq!(pow_from_ln(f64::NEG_INFINITY, 3.0), 0.0);
        assert_eq!(pow_from_ln(f64::NEG_INFINITY, 0.0), 1.0);
        assert_eq!(pow_from_ln(-1e6, 1e-9), (-745e-9f64).exp());
    }
}
