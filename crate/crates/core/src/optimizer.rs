//! Key-rate maximization over the free source parameters (intensity mu,
//! optionally the basis probability p_x) at a fixed distance.
//!
//! The search is a coarse log-grid scan followed by golden-section
//! refinement per coordinate. Any derivative-free method is acceptable
//! here; the contract, enforced by the test suite against an exhaustive
//! 200 x 50 grid oracle, is the optimum itself, to 1% relative rate.
//! Candidate evaluations are pure, so the scan may run in parallel; the
//! selected optimum is independent of evaluation order (ties break
//! toward smaller mu, then smaller p_x).

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{self, ChannelParams};
use crate::security::{self, ObservedStats, SecurityEpsilons};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
}

/// A closed parameter interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

/// Whether the basis probability is optimized or held fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PxChoice {
    Fixed(f64),
    Range(Interval),
}

/// What the optimizer maximizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Finite key rate l / N through the full estimation chain on
    /// expected statistics for `n_total` emitted rounds.
    FiniteRate { n_total: u64 },
    /// Asymptotic rate.
    AsymptoticRate,
}

/// Search domain and objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    /// Intensity range, searched in log scale (optima span decades
    /// across losses).
    pub mu: Interval,
    pub px: PxChoice,
    pub objective: Objective,
}

impl SearchSpace {
    /// Default space for the finite-rate objective: mu in [1e-6, 0.5]
    /// log-scaled, p_x in [0.5, 0.99].
    pub fn finite(n_total: u64) -> Self {
        SearchSpace {
            mu: Interval::new(1e-6, 0.5),
            px: PxChoice::Range(Interval::new(0.5, 0.99)),
            objective: Objective::FiniteRate { n_total },
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.mu.lo > 0.0 && self.mu.lo <= self.mu.hi && self.mu.hi.is_finite()) {
            return Err(OptimizerError::InvalidSpace(format!(
                "mu range [{}, {}] must be positive and ordered",
                self.mu.lo, self.mu.hi
            )));
        }
        let px_ok = match self.px {
            PxChoice::Fixed(v) => v > 0.0 && v < 1.0,
            PxChoice::Range(r) => r.lo > 0.0 && r.lo <= r.hi && r.hi < 1.0,
        };
        if !px_ok {
            return Err(OptimizerError::InvalidSpace(
                "p_x must lie inside (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// An optimization result. When the whole space is infeasible the rate
/// is 0 and the parameters are NaN sentinels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub mu_star: f64,
    pub px_star: f64,
    pub rate_star: f64,
}

impl Optimum {
    pub fn infeasible() -> Self {
        Optimum {
            mu_star: f64::NAN,
            px_star: f64::NAN,
            rate_star: 0.0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.rate_star > 0.0
    }
}

/// Deterministic expectation of the sifted statistics for `n_total`
/// emitted rounds: detections split by the sifting class probabilities,
/// errors at the basis-symmetric rate E_b^X, all rounded to nearest.
pub fn expected_stats(params: &ChannelParams, n_total: u64) -> ObservedStats {
    let eta = channel::transmittance(params);
    let q = channel::gain(params.mu, eta, params.p_d);
    let ebx = channel::bit_error_rate_x(params.mu, eta, params.p_d, params.e_d).unwrap_or(0.0);
    let n = n_total as f64;
    let n_x = (n * params.key_basis_probability() * q).round();
    let n_y = (n * params.test_basis_probability() * q).round();
    ObservedStats {
        n_x: n_x as u64,
        n_y: n_y as u64,
        m_x: (n_x * ebx).round() as u64,
        m_y: (n_y * ebx).round() as u64,
    }
}

/// The finite key rate l / N at the given parameters, computed through
/// expected statistics and the full estimation chain. Returns 0 whenever
/// the point is infeasible (no counts, basis dependence past 1/2, or a
/// negative key-length bracket).
pub fn finite_key_rate(
    params: &ChannelParams,
    n_total: u64,
    f_e: f64,
    eps: &SecurityEpsilons,
) -> f64 {
    if params.validate().is_err() {
        return 0.0;
    }
    let stats = expected_stats(params, n_total);
    if stats.n_x == 0 || stats.n_y == 0 {
        return 0.0;
    }
    let eta = channel::transmittance(params);
    let q = channel::gain(params.mu, eta, params.p_d);
    let chain = match security::phase_error_upper_bound(&stats, params.mu, q, eps) {
        Ok(chain) => chain,
        Err(_) => return 0.0,
    };
    let ebx = stats.ebx().unwrap_or(0.0);
    security::finite_key_length(stats.n_x, chain.ep_bar, ebx, f_e, eps, n_total).rate_per_pulse
}

struct Candidate {
    mu: f64,
    px: f64,
    rate: f64,
}

/// Deterministic preference: higher rate, then smaller mu, then smaller px.
fn better(a: &Candidate, b: &Candidate) -> bool {
    (a.rate, b.mu, b.px) > (b.rate, a.mu, a.px)
}

fn log_spaced(range: Interval, n: usize) -> Vec<f64> {
    if range.is_point() || n == 1 {
        return vec![range.lo];
    }
    let (llo, lhi) = (range.lo.ln(), range.hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn lin_spaced(range: Interval, n: usize) -> Vec<f64> {
    if range.is_point() || n == 1 {
        return vec![range.lo];
    }
    (0..n)
        .map(|i| range.lo + (range.hi - range.lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Golden-section maximization. Ties prefer the left subinterval, which
/// keeps the overall tie-break (smallest coordinate) intact.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    if lo >= hi {
        return (lo, f(lo));
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = if f1 >= f2 { x1 } else { x2 };
    (x, f(x))
}

/// Maximizes the objective over the search space, with all non-free
/// channel parameters taken from `base`.
pub fn optimize(
    space: &SearchSpace,
    base: &ChannelParams,
    f_e: f64,
    eps: &SecurityEpsilons,
) -> Result<Optimum, OptimizerError> {
    space.validate()?;
    let objective = |mu: f64, px: f64| -> f64 {
        let params = ChannelParams {
            mu,
            p_x: px,
            ..*base
        };
        match space.objective {
            Objective::FiniteRate { n_total } => finite_key_rate(&params, n_total, f_e, eps),
            Objective::AsymptoticRate => security::asymptotic_key_rate(&params, f_e),
        }
    };

    let mu_grid = log_spaced(space.mu, 64);
    let px_grid = match space.px {
        PxChoice::Fixed(v) => vec![v],
        PxChoice::Range(r) => lin_spaced(r, 16),
    };

    let pairs: Vec<(usize, usize)> = (0..mu_grid.len())
        .flat_map(|i| (0..px_grid.len()).map(move |j| (i, j)))
        .collect();
    let evaluate = |&(i, j): &(usize, usize)| Candidate {
        mu: mu_grid[i],
        px: px_grid[j],
        rate: objective(mu_grid[i], px_grid[j]),
    };
    #[cfg(feature = "parallel")]
    let candidates: Vec<Candidate> = pairs.par_iter().map(evaluate).collect();
    #[cfg(not(feature = "parallel"))]
    let candidates: Vec<Candidate> = pairs.iter().map(evaluate).collect();

    let mut best_idx = 0;
    for (k, c) in candidates.iter().enumerate() {
        if better(c, &candidates[best_idx]) {
            best_idx = k;
        }
    }
    if candidates[best_idx].rate <= 0.0 {
        return Ok(Optimum::infeasible());
    }
    let (bi, bj) = pairs[best_idx];
    let mut best = Candidate {
        mu: mu_grid[bi],
        px: px_grid[bj],
        rate: candidates[best_idx].rate,
    };

    // two refinement sweeps: mu, px, then mu again
    for sweep in 0..3 {
        if sweep % 2 == 0 {
            let lo = if bi > 0 { mu_grid[bi - 1] } else { mu_grid[bi] };
            let hi = mu_grid.get(bi + 1).copied().unwrap_or(mu_grid[bi]);
            let px = best.px;
            let (lmu, rate) = golden_max(|l| objective(l.exp(), px), lo.ln(), hi.ln(), 64);
            let cand = Candidate {
                mu: lmu.exp(),
                px,
                rate,
            };
            if better(&cand, &best) {
                best = cand;
            }
        } else if px_grid.len() > 1 {
            let lo = if bj > 0 { px_grid[bj - 1] } else { px_grid[bj] };
            let hi = px_grid.get(bj + 1).copied().unwrap_or(px_grid[bj]);
            let mu = best.mu;
            let (px, rate) = golden_max(|p| objective(mu, p), lo, hi, 64);
            let cand = Candidate { mu, px, rate };
            if better(&cand, &best) {
                best = cand;
            }
        }
    }

    Ok(Optimum {
        mu_star: best.mu,
        px_star: best.px,
        rate_star: best.rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4_params(length_km: f64) -> ChannelParams {
        ChannelParams {
            mu: 1e-3,
            eta_d: 0.56,
            p_d: 1e-8,
            e_d: 0.02,
            alpha_db_per_km: 0.167,
            length_km,
            p_x: 0.8,
        }
    }

    #[test]
    fn sifting_class_probabilities() {
        let p = fig4_params(100.0);
        assert!((p.key_basis_probability() - 0.544).abs() < 1e-12);
        assert!((p.test_basis_probability() - 0.064).abs() < 1e-12);
    }

    #[test]
    fn expected_stats_frozen_vector() {
        // L = 100 km, mu = 1e-3, px = 0.8, N = 1e10
        let stats = expected_stats(&fig4_params(100.0), 10_000_000_000);
        assert_eq!(stats.n_x, 890_911);
        assert_eq!(stats.n_y, 104_813);
        assert_eq!(stats.m_x, 17_870);
        assert_eq!(stats.m_y, 2_102);
    }

    #[test]
    fn expected_stats_zero_gain() {
        let params = ChannelParams {
            mu: 0.0,
            p_d: 0.0,
            ..fig4_params(100.0)
        };
        assert_eq!(expected_stats(&params, 1_000_000), ObservedStats::default());
    }

    #[test]
    fn degenerate_space_returns_the_point() {
        let space = SearchSpace {
            mu: Interval::new(2e-3, 2e-3),
            px: PxChoice::Fixed(0.8),
            objective: Objective::FiniteRate {
                n_total: 10_000_000_000,
            },
        };
        let opt = optimize(
            &space,
            &fig4_params(100.0),
            1.16,
            &SecurityEpsilons::default(),
        )
        .unwrap();
        assert_eq!(opt.mu_star, 2e-3);
        assert_eq!(opt.px_star, 0.8);
        assert!(opt.rate_star > 0.0);
    }

    #[test]
    fn infeasible_space_reports_zero_with_sentinels() {
        // 400 km at 2% misalignment: no finite key anywhere
        let space = SearchSpace::finite(10_000_000_000);
        let opt = optimize(
            &space,
            &fig4_params(400.0),
            1.16,
            &SecurityEpsilons::default(),
        )
        .unwrap();
        assert_eq!(opt.rate_star, 0.0);
        assert!(opt.mu_star.is_nan() && opt.px_star.is_nan());
        assert!(!opt.is_feasible());
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        let bad_mu = SearchSpace {
            mu: Interval::new(0.0, 0.5),
            px: PxChoice::Fixed(0.8),
            objective: Objective::AsymptoticRate,
        };
        assert!(optimize(
            &bad_mu,
            &fig4_params(100.0),
            1.16,
            &SecurityEpsilons::default()
        )
        .is_err());
        let bad_px = SearchSpace {
            mu: Interval::new(1e-6, 0.5),
            px: PxChoice::Range(Interval::new(0.9, 0.5)),
            objective: Objective::AsymptoticRate,
        };
        assert!(bad_px.validate().is_err());
    }

    #[test]
    fn optimum_beats_every_coarse_grid_point() {
        let base = fig4_params(100.0);
        let eps = SecurityEpsilons::default();
        let space = SearchSpace::finite(10_000_000_000);
        let opt = optimize(&space, &base, 1.16, &eps).unwrap();
        for mu in log_spaced(space.mu, 40) {
            for px in lin_spaced(Interval::new(0.5, 0.99), 8) {
                let params = ChannelParams { mu, p_x: px, ..base };
                let rate = finite_key_rate(&params, 10_000_000_000, 1.16, &eps);
                assert!(opt.rate_star >= rate * 0.999999);
            }
        }
    }
}
