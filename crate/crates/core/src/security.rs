//! Security math: binary entropy, the phase-error bound, the
//! concentration deviation for sums of dependent Bernoulli variables,
//! the full finite-key estimation chain, the finite key length, and the
//! asymptotic rate.
//!
//! The estimation chain takes observed counts to a high-confidence upper
//! bound on the phase error rate in six steps:
//!
//! ```text
//! m'_y  = m_y + dc(n_y)          observed -> expected bit errors (Y)
//! E_b^Y' = min(m'_y / n_y, 1/2)
//! E'_p  = bound(E_b^Y', delta)   phase-error bound
//! m'_p  = n_x E'_p               expected phase errors (X)
//! m_p   = m'_p + dc(n_x)         expected -> observed phase errors
//! E_p   = min(m_p / n_x, 1/2)
//! ```
//!
//! where `dc(n) = sqrt(n ln(1/eps_a) / 2)` and `delta` is the quantum-coin
//! imbalance. The concentration bound is charged once per application
//! (twice per chain), so the total estimation failure probability is at
//! most `2 eps_a <= eps`, consistent with the secrecy parameter
//! `eps_s = sqrt(eps) + eps_pa`.

use thiserror::Error;

use crate::channel::{self, ChannelError, ChannelParams};

/// Errors from the security analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SecurityError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Failure probabilities of the finite-key analysis.
///
/// `eps_a` is charged per concentration-bound application. Setting
/// `eps_a = 1` turns the deviation terms off exactly (the asymptotic
/// reduction used by consistency tests); all other epsilons must lie in
/// (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityEpsilons {
    /// Correctness failure probability.
    pub eps_c: f64,
    /// Privacy-amplification failure probability.
    pub eps_pa: f64,
    /// Phase-error-estimation failure probability.
    pub eps: f64,
    /// Per-application concentration failure probability.
    pub eps_a: f64,
}

impl Default for SecurityEpsilons {
    fn default() -> Self {
        SecurityEpsilons {
            eps_c: 1e-10,
            eps_pa: 1e-10,
            eps: 1e-10,
            eps_a: 1e-10,
        }
    }
}

impl SecurityEpsilons {
    /// Uniform epsilons: every failure probability set to `eps`.
    pub fn uniform(eps: f64) -> Self {
        SecurityEpsilons {
            eps_c: eps,
            eps_pa: eps,
            eps: eps,
            eps_a: eps,
        }
    }

    /// Default epsilons with the concentration deviations disabled.
    pub fn asymptotic() -> Self {
        SecurityEpsilons {
            eps_a: 1.0,
            ..Default::default()
        }
    }

    /// Derived secrecy parameter eps_s = sqrt(eps) + eps_pa.
    pub fn secrecy(&self) -> f64 {
        self.eps.sqrt() + self.eps_pa
    }

    pub fn validate(&self) -> Result<(), SecurityError> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.eps_c) || !in_unit(self.eps_pa) || !in_unit(self.eps) {
            return Err(SecurityError::Domain(
                "eps_c, eps_pa and eps must be in (0, 1)".into(),
            ));
        }
        if !(self.eps_a > 0.0 && self.eps_a <= 1.0) {
            return Err(SecurityError::Domain("eps_a must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Sifted detection and error counts, the interface between data
/// (simulated or measured) and the security analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ObservedStats {
    /// Detections in kept key rounds.
    pub n_x: u64,
    /// Detections in kept test rounds.
    pub n_y: u64,
    /// Bit errors among key rounds.
    pub m_x: u64,
    /// Bit errors among test rounds.
    pub m_y: u64,
}

impl ObservedStats {
    pub fn validate(&self) -> Result<(), SecurityError> {
        if self.m_x > self.n_x || self.m_y > self.n_y {
            return Err(SecurityError::Domain(
                "error counts cannot exceed detection counts".into(),
            ));
        }
        Ok(())
    }

    /// Observed X-basis error rate m_x / n_x.
    pub fn ebx(&self) -> Option<f64> {
        (self.n_x > 0).then(|| self.m_x as f64 / self.n_x as f64)
    }

    /// Observed Y-basis error rate m_y / n_y.
    pub fn eby(&self) -> Option<f64> {
        (self.n_y > 0).then(|| self.m_y as f64 / self.n_y as f64)
    }
}

/// Every intermediate of the finite-key estimation chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorChain {
    /// Quantum-coin imbalance fed into the phase-error bound.
    pub delta: f64,
    /// Concentration deviation applied to the Y-basis error count.
    pub delta_c_y: f64,
    /// Upper bound on the expected number of Y-basis bit errors.
    pub m_y_prime: f64,
    /// Upper bound on the expected Y-basis bit error rate.
    pub eby_prime: f64,
    /// Expected phase error rate.
    pub ep_prime: f64,
    /// Expected number of phase errors in the key rounds.
    pub mp_prime: f64,
    /// Concentration deviation applied to the phase error count.
    pub delta_c_x: f64,
    /// Upper bound on the observed number of phase errors.
    pub mp_bar: f64,
    /// Final phase error rate bound.
    pub ep_bar: f64,
}

/// Finite key length and derived figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyResult {
    /// Extractable secret key length in bits.
    pub key_length_bits: u64,
    /// Key rate per emitted pulse, l / N.
    pub rate_per_pulse: f64,
    /// Fraction of raw key consumed by error correction, f_e H(ebx).
    pub leak_ec_fraction: f64,
    /// Error-correction efficiency used.
    pub f_e: f64,
}

/// Binary Shannon entropy H(x) = -x log2 x - (1-x) log2 (1-x), with
/// H(0) = H(1) = 0 by continuous extension.
pub fn binary_entropy(x: f64) -> Result<f64, SecurityError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(SecurityError::Domain(format!(
            "entropy argument {x} outside [0, 1]"
        )));
    }
    Ok(h2(x))
}

/// Total entropy helper for callers that already hold a clamped rate.
fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Phase-error bound
/// `E_p = e + 4 d (1-d) (1-2e) + 4 (1-2d) sqrt(d (1-d) e (1-e))`,
/// clamped to at most 1/2.
pub fn phase_error_rate(eby: f64, delta: f64) -> Result<f64, SecurityError> {
    if !(0.0..=0.5).contains(&eby) {
        return Err(SecurityError::Domain(format!(
            "bit error rate {eby} outside [0, 0.5]"
        )));
    }
    if !(0.0..=0.5).contains(&delta) {
        return Err(SecurityError::Domain(format!(
            "coin imbalance {delta} outside [0, 0.5]"
        )));
    }
    let ep = eby
        + 4.0 * delta * (1.0 - delta) * (1.0 - 2.0 * eby)
        + 4.0 * (1.0 - 2.0 * delta) * (delta * (1.0 - delta) * eby * (1.0 - eby)).sqrt();
    Ok(ep.min(0.5))
}

/// Concentration deviation `sqrt(n ln(1/eps_a) / 2)`: the correction that
/// turns an observed count into a bound on its expectation (and back)
/// that holds against coherent attacks with failure probability eps_a.
pub fn concentration_deviation(n: u64, eps_a: f64) -> f64 {
    debug_assert!(eps_a > 0.0 && eps_a <= 1.0);
    (n as f64 * (1.0 / eps_a).ln() / 2.0).sqrt()
}

/// Runs the full estimation chain from observed counts to the phase
/// error bound. `q_mu` is the gain normalization used for the
/// quantum-coin imbalance; data-driven callers pass the observed
/// kept-round gain, model-driven callers the analytic one.
pub fn phase_error_upper_bound(
    stats: &ObservedStats,
    mu: f64,
    q_mu: f64,
    eps: &SecurityEpsilons,
) -> Result<PhaseErrorChain, SecurityError> {
    stats.validate()?;
    eps.validate()?;
    if stats.n_y == 0 {
        return Err(SecurityError::ZeroDenominator("n_y"));
    }
    if stats.n_x == 0 {
        return Err(SecurityError::ZeroDenominator("n_x"));
    }
    let delta = channel::quantum_coin_delta(mu, q_mu)?;

    let delta_c_y = concentration_deviation(stats.n_y, eps.eps_a);
    let m_y_prime = stats.m_y as f64 + delta_c_y;
    let eby_prime = (m_y_prime / stats.n_y as f64).min(0.5);
    let ep_prime = phase_error_rate(eby_prime, delta)?;
    let mp_prime = stats.n_x as f64 * ep_prime;
    let delta_c_x = concentration_deviation(stats.n_x, eps.eps_a);
    let mp_bar = mp_prime + delta_c_x;
    let ep_bar = (mp_bar / stats.n_x as f64).min(0.5);

    Ok(PhaseErrorChain {
        delta,
        delta_c_y,
        m_y_prime,
        eby_prime,
        ep_prime,
        mp_prime,
        delta_c_x,
        mp_bar,
        ep_bar,
    })
}

/// Finite key length
/// `l = max(0, floor(n_x [1 - H(ep) - f_e H(ebx)] - log2(2/eps_c) - log2(1/(4 eps_pa^2))))`
/// and the derived rate l / n_total.
pub fn finite_key_length(
    n_x: u64,
    ep_bar: f64,
    ebx: f64,
    f_e: f64,
    eps: &SecurityEpsilons,
    n_total: u64,
) -> KeyResult {
    // rates above 1/2 indicate a relabeling, not more leakage
    let ep = ep_bar.clamp(0.0, 0.5);
    let eb = ebx.clamp(0.0, 0.5);
    let leak_ec_fraction = f_e * h2(eb);
    let bracket = 1.0 - h2(ep) - leak_ec_fraction;
    let correction = (2.0 / eps.eps_c).log2() + (1.0 / (4.0 * eps.eps_pa * eps.eps_pa)).log2();
    let l = (n_x as f64 * bracket - correction).floor().max(0.0);
    let key_length_bits = l as u64;
    KeyResult {
        key_length_bits,
        rate_per_pulse: if n_total > 0 {
            l / n_total as f64
        } else {
            0.0
        },
        leak_ec_fraction,
        f_e,
    }
}

/// Asymptotic key rate `R = Q_mu [1 - f_e H(ebx) - H(E_p)]` with the
/// phase error rate bound evaluated at `E_b^Y = E_b^X` (the channel model
/// is basis-symmetric) and the coin imbalance from the analytic gain.
///
/// Returns 0 when the bracket is negative or when no secure bound exists
/// (zero gain, or basis dependence past 1/2).
pub fn asymptotic_key_rate(params: &ChannelParams, f_e: f64) -> f64 {
    let derived = match params.derive() {
        Ok(d) => d,
        Err(_) => return 0.0,
    };
    let eby = derived.ebx.clamp(0.0, 0.5);
    let ep = match phase_error_rate(eby, derived.delta) {
        Ok(ep) => ep,
        Err(_) => return 0.0,
    };
    let rate = derived.q_mu * (1.0 - f_e * h2(eby) - h2(ep));
    rate.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_anchors() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11).unwrap() - 0.499915958164528).abs() < 1e-14);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn entropy_is_symmetric_and_bounded() {
        for k in 0..=100 {
            let x = f64::from(k) / 100.0;
            let h = binary_entropy(x).unwrap();
            assert!((0.0..=1.0).contains(&h));
            assert!((h - binary_entropy(1.0 - x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_error_rate_anchors() {
        // delta = 0 is the identity
        for k in 0..=50 {
            let e = f64::from(k) / 100.0;
            assert_eq!(phase_error_rate(e, 0.0).unwrap(), e);
        }
        assert!((phase_error_rate(0.0, 0.01).unwrap() - 0.0396).abs() < 1e-12);
        assert!(
            (phase_error_rate(0.05, 0.01).unwrap() - 0.17064617389342965).abs() < 1e-14
        );
    }

    #[test]
    fn phase_error_rate_domain() {
        assert!(phase_error_rate(0.6, 0.0).is_err());
        assert!(phase_error_rate(0.1, 0.6).is_err());
        assert!(phase_error_rate(-0.1, 0.1).is_err());
    }

    #[test]
    fn phase_error_dominates_bit_error() {
        for i in 0..=10 {
            for j in 0..=10 {
                let e = f64::from(i) * 0.05;
                let d = f64::from(j) * 0.05;
                assert!(phase_error_rate(e, d).unwrap() >= e.min(0.5));
            }
        }
    }

    #[test]
    fn concentration_anchors() {
        assert_eq!(concentration_deviation(0, 1e-10), 0.0);
        assert!((concentration_deviation(8346, 1e-10) - 309.97883142344015).abs() < 1e-9);
        assert!((concentration_deviation(1_000_000, 1e-10) - 3393.0702122075559).abs() < 1e-8);
        // eps_a = 1 disables the deviation exactly
        assert_eq!(concentration_deviation(12345, 1.0), 0.0);
    }

    #[test]
    fn concentration_sqrt_scaling_is_exact() {
        for n in [1u64, 17, 8346, 1_000_000, 999_999_937] {
            assert_eq!(
                concentration_deviation(4 * n, 1e-10),
                2.0 * concentration_deviation(n, 1e-10)
            );
        }
    }

    #[test]
    fn chain_asymptotic_mode_reduces_to_observed_rate() {
        let stats = ObservedStats {
            n_x: 73954,
            n_y: 8346,
            m_x: 224,
            m_y: 25,
        };
        let eps = SecurityEpsilons::asymptotic();
        let chain = phase_error_upper_bound(&stats, 0.0, 1.36e-5, &eps).unwrap();
        assert_eq!(chain.delta, 0.0);
        assert_eq!(chain.delta_c_y, 0.0);
        assert_eq!(chain.delta_c_x, 0.0);
        let observed = 25.0 / 8346.0;
        assert!((chain.ep_bar - observed).abs() < 1e-15);
    }

    #[test]
    fn chain_regression_35db() {
        // inputs from the bundled 35 dB dataset with the observed-gain
        // normalization: q = n_x / (1e10 * 0.544)
        let stats = ObservedStats {
            n_x: 73954,
            n_y: 8346,
            m_x: 224,
            m_y: 25,
        };
        let q_mu = 73954.0 / (1e10 * 0.544);
        let eps = SecurityEpsilons::default();
        let chain = phase_error_upper_bound(&stats, 8.6e-4, q_mu, &eps).unwrap();
        assert!((chain.delta - 0.027186614198425422).abs() < 1e-12);
        assert!((chain.delta_c_y - 309.97883142344015).abs() < 1e-9);
        assert!((chain.eby_prime - 0.04013645236).abs() < 1e-9);
        assert!((chain.ep_bar - 0.270650094506524).abs() < 1e-12);
    }

    #[test]
    fn chain_clamps_at_half() {
        let stats = ObservedStats {
            n_x: 1000,
            n_y: 500,
            m_x: 0,
            m_y: 500,
        };
        let chain =
            phase_error_upper_bound(&stats, 1e-3, 0.01, &SecurityEpsilons::default()).unwrap();
        assert_eq!(chain.eby_prime, 0.5);
        assert_eq!(chain.ep_bar, 0.5);
    }

    #[test]
    fn chain_zero_denominators() {
        let eps = SecurityEpsilons::default();
        let no_y = ObservedStats {
            n_x: 10,
            n_y: 0,
            m_x: 0,
            m_y: 0,
        };
        assert_eq!(
            phase_error_upper_bound(&no_y, 1e-3, 0.01, &eps),
            Err(SecurityError::ZeroDenominator("n_y"))
        );
        let no_x = ObservedStats {
            n_x: 0,
            n_y: 10,
            m_x: 0,
            m_y: 0,
        };
        assert_eq!(
            phase_error_upper_bound(&no_x, 1e-3, 0.01, &eps),
            Err(SecurityError::ZeroDenominator("n_x"))
        );
        // zero gain propagates from the coin computation
        let ok = ObservedStats {
            n_x: 10,
            n_y: 10,
            m_x: 0,
            m_y: 0,
        };
        assert!(matches!(
            phase_error_upper_bound(&ok, 1e-3, 0.0, &eps),
            Err(SecurityError::Channel(ChannelError::ZeroGain))
        ));
    }

    #[test]
    fn key_length_zero_at_maximal_phase_error() {
        let eps = SecurityEpsilons::default();
        let key = finite_key_length(1_000_000, 0.5, 0.0, 1.16, &eps, 10_000_000);
        assert_eq!(key.key_length_bits, 0);
        assert_eq!(key.rate_per_pulse, 0.0);
    }

    #[test]
    fn key_length_zero_error_example() {
        // 1000 - log2(2e10) - log2(2.5e19) = 901.34... -> 901
        let eps = SecurityEpsilons::default();
        let key = finite_key_length(1000, 0.0, 0.0, 1.16, &eps, 1000);
        assert_eq!(key.key_length_bits, 901);
        assert_eq!(key.leak_ec_fraction, 0.0);
    }

    #[test]
    fn key_length_regression_35db() {
        let stats = ObservedStats {
            n_x: 73954,
            n_y: 8346,
            m_x: 224,
            m_y: 25,
        };
        let q_mu = 73954.0 / (1e10 * 0.544);
        let eps = SecurityEpsilons::default();
        let chain = phase_error_upper_bound(&stats, 8.6e-4, q_mu, &eps).unwrap();
        let key = finite_key_length(
            stats.n_x,
            chain.ep_bar,
            stats.ebx().unwrap(),
            1.16,
            &eps,
            10_000_000_000,
        );
        assert_eq!(key.key_length_bits, 9008);
        assert!((key.rate_per_pulse - 9.008e-7).abs() < 1e-12);
    }

    #[test]
    fn key_length_monotone_in_error_rates() {
        let eps = SecurityEpsilons::default();
        let mut last = u64::MAX;
        for k in 0..=10 {
            let ep = f64::from(k) * 0.05;
            let l = finite_key_length(100_000, ep, 0.01, 1.16, &eps, 100_000).key_length_bits;
            assert!(l <= last);
            last = l;
        }
        let mut last = u64::MAX;
        for k in 0..=10 {
            let eb = f64::from(k) * 0.05;
            let l = finite_key_length(100_000, 0.1, eb, 1.16, &eps, 100_000).key_length_bits;
            assert!(l <= last);
            last = l;
        }
    }

    #[test]
    fn asymptotic_rate_regression() {
        // eta = 0.1 realized as eta_d = 0.1 over zero-length fiber
        let params = ChannelParams {
            mu: 0.01,
            eta_d: 0.1,
            p_d: 1e-8,
            e_d: 0.02,
            alpha_db_per_km: 0.167,
            length_km: 0.0,
            p_x: 0.8,
        };
        let r = asymptotic_key_rate(&params, 1.16);
        assert!((r - 0.00024404504391585198).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_rate_clamps_to_zero() {
        let params = ChannelParams {
            mu: 0.01,
            eta_d: 0.1,
            p_d: 1e-8,
            e_d: 0.25,
            alpha_db_per_km: 0.167,
            length_km: 0.0,
            p_x: 0.8,
        };
        assert_eq!(asymptotic_key_rate(&params, 1.16), 0.0);
    }

    #[test]
    fn asymptotic_rate_approaches_gain_in_ideal_limit() {
        let params = ChannelParams {
            mu: 1e-6,
            eta_d: 1.0,
            p_d: 0.0,
            e_d: 0.0,
            alpha_db_per_km: 0.0,
            length_km: 0.0,
            p_x: 0.8,
        };
        let r = asymptotic_key_rate(&params, 1.16);
        let q = channel::gain(1e-6, 1.0, 0.0);
        assert!(r / q > 0.999);
    }

    #[test]
    fn secrecy_parameter() {
        let eps = SecurityEpsilons::default();
        assert!((eps.secrecy() - (1e-10f64.sqrt() + 1e-10)).abs() < 1e-18);
        assert!(SecurityEpsilons::uniform(0.5).validate().is_ok());
        assert!(SecurityEpsilons::uniform(0.0).validate().is_err());
        assert!(SecurityEpsilons::asymptotic().validate().is_ok());
    }
}
