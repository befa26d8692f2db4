//! Pure protocol semantics: phase encoding, the dealer's modulation,
//! interference outcome convention, sifting and flip rules, and the
//! three-party bit correlation.
//!
//! Every phase that appears in the protocol is an exact multiple of pi/2,
//! so phases are carried as integer quarter turns and all phase arithmetic
//! is modulo four quarter turns. Nothing in this module touches floating
//! point; the detector statistics live in [`crate::channel`].

use std::fmt;
use std::ops::{Add, BitXor, Sub};

use thiserror::Error;

/// Errors produced by protocol-level classification.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    /// The relative phase is +-pi/2, so the interferometer output is a
    /// coin flip rather than a deterministic detector. Sifting must have
    /// discarded such rounds before the outcome is interpreted.
    #[error("non-deterministic interference at relative phase {0}")]
    NonDeterministicInterference(PhaseSetting),
    /// The dealer's modulation phase must be 0 or pi/2.
    #[error("invalid dealer phase {0}: expected 0 or pi/2")]
    InvalidDealerPhase(PhaseSetting),
}

/// Encoding basis. X uses phases {0, pi}, Y uses {pi/2, 3pi/2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    X,
    Y,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::X => write!(f, "X"),
            Basis::Y => write!(f, "Y"),
        }
    }
}

/// A single logic bit held by one of the three parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LogicBit(bool);

impl LogicBit {
    pub const ZERO: LogicBit = LogicBit(false);
    pub const ONE: LogicBit = LogicBit(true);

    pub fn value(self) -> u8 {
        self.0 as u8
    }

    /// Both bit values, in numeric order. Handy for exhaustive tests.
    pub fn both() -> [LogicBit; 2] {
        [Self::ZERO, Self::ONE]
    }
}

impl From<bool> for LogicBit {
    fn from(b: bool) -> Self {
        LogicBit(b)
    }
}

impl BitXor for LogicBit {
    type Output = LogicBit;
    fn bitxor(self, rhs: LogicBit) -> LogicBit {
        LogicBit(self.0 ^ rhs.0)
    }
}

impl fmt::Display for LogicBit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// A modulation phase, stored as an exact number of quarter turns
/// (k * pi/2 radians, k in 0..4). Addition and subtraction wrap modulo 2 pi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseSetting {
    quarter_turns: u8,
}

impl PhaseSetting {
    pub const ZERO: PhaseSetting = PhaseSetting { quarter_turns: 0 };
    pub const HALF_PI: PhaseSetting = PhaseSetting { quarter_turns: 1 };
    pub const PI: PhaseSetting = PhaseSetting { quarter_turns: 2 };
    pub const THREE_HALF_PI: PhaseSetting = PhaseSetting { quarter_turns: 3 };

    /// All four protocol phases in increasing order.
    pub const ALL: [PhaseSetting; 4] = [
        Self::ZERO,
        Self::HALF_PI,
        Self::PI,
        Self::THREE_HALF_PI,
    ];

    /// Builds a phase from a quarter-turn count, wrapping modulo 2 pi.
    pub fn new(quarter_turns: u8) -> Self {
        PhaseSetting {
            quarter_turns: quarter_turns % 4,
        }
    }

    pub fn quarter_turns(self) -> u8 {
        self.quarter_turns
    }

    pub fn radians(self) -> f64 {
        f64::from(self.quarter_turns) * std::f64::consts::FRAC_PI_2
    }

    /// The basis whose encoding uses this phase: even quarter turns are X,
    /// odd are Y.
    pub fn basis(self) -> Basis {
        if self.quarter_turns % 2 == 0 {
            Basis::X
        } else {
            Basis::Y
        }
    }

    /// Parses the canonical CSV token: one of `0`, `pi/2`, `pi`, `3pi/2`.
    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "0" => Some(Self::ZERO),
            "pi/2" => Some(Self::HALF_PI),
            "pi" => Some(Self::PI),
            "3pi/2" => Some(Self::THREE_HALF_PI),
            _ => None,
        }
    }

    /// The canonical CSV token for this phase.
    pub fn token(self) -> &'static str {
        match self.quarter_turns {
            0 => "0",
            1 => "pi/2",
            2 => "pi",
            _ => "3pi/2",
        }
    }
}

impl Add for PhaseSetting {
    type Output = PhaseSetting;
    fn add(self, rhs: PhaseSetting) -> PhaseSetting {
        PhaseSetting::new(self.quarter_turns + rhs.quarter_turns)
    }
}

impl Sub for PhaseSetting {
    type Output = PhaseSetting;
    fn sub(self, rhs: PhaseSetting) -> PhaseSetting {
        PhaseSetting::new(self.quarter_turns + 4 - rhs.quarter_turns)
    }
}

impl fmt::Display for PhaseSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.token())
    }
}

/// One of the dealer's two single-photon detectors. D1 records logic 0,
/// D2 records logic 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    D1,
    D2,
}

impl Detector {
    /// The logic bit the dealer records for a click on this detector.
    pub fn bit(self) -> LogicBit {
        match self {
            Detector::D1 => LogicBit::ZERO,
            Detector::D2 => LogicBit::ONE,
        }
    }

    pub fn other(self) -> Detector {
        match self {
            Detector::D1 => Detector::D2,
            Detector::D2 => Detector::D1,
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detector::D1 => write!(f, "D1"),
            Detector::D2 => write!(f, "D2"),
        }
    }
}

/// The announced basis choices of Alice, Bob and Charlie for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisTriple {
    pub a: Basis,
    pub b: Basis,
    pub c: Basis,
}

impl BasisTriple {
    pub fn new(a: Basis, b: Basis, c: Basis) -> Self {
        BasisTriple { a, b, c }
    }

    /// All eight basis triples.
    pub fn all() -> impl Iterator<Item = BasisTriple> {
        [Basis::X, Basis::Y].into_iter().flat_map(|a| {
            [Basis::X, Basis::Y].into_iter().flat_map(move |b| {
                [Basis::X, Basis::Y]
                    .into_iter()
                    .map(move |c| BasisTriple::new(a, b, c))
            })
        })
    }
}

/// What a kept round is used for after sifting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoundRole {
    /// Raw key material; also supplies the X-basis bit error rate.
    Key,
    /// Disclosed rounds used to bound the phase error rate.
    Test,
}

/// Outcome of sifting one basis triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiftDecision {
    /// The triple is incompatible; all three parties discard their bits.
    Discard,
    /// The round is kept. `flip_charlie` is set only for the one test
    /// triple {Y_a, X_b, Y_c} where the dealer must flip his bit to
    /// restore the XOR correlation.
    Keep { role: RoundRole, flip_charlie: bool },
}

impl SiftDecision {
    pub fn is_kept(self) -> bool {
        matches!(self, SiftDecision::Keep { .. })
    }

    pub fn role(self) -> Option<RoundRole> {
        match self {
            SiftDecision::Keep { role, .. } => Some(role),
            SiftDecision::Discard => None,
        }
    }

    pub fn flips_charlie(self) -> bool {
        matches!(
            self,
            SiftDecision::Keep {
                flip_charlie: true,
                ..
            }
        )
    }
}

/// The phase Alice or Bob modulates for a given basis and logic bit.
///
/// X basis: bit 0 -> 0, bit 1 -> pi. Y basis: bit 1 -> pi/2, bit 0 -> 3pi/2.
/// The map is a bijection between {X,Y} x {0,1} and the four phases.
pub fn encode_phase(basis: Basis, bit: LogicBit) -> PhaseSetting {
    match (basis, bit.value()) {
        (Basis::X, 0) => PhaseSetting::ZERO,
        (Basis::X, _) => PhaseSetting::PI,
        (Basis::Y, 0) => PhaseSetting::THREE_HALF_PI,
        (Basis::Y, _) => PhaseSetting::HALF_PI,
    }
}

/// Inverse of [`encode_phase`]: the (basis, bit) pair a player's phase encodes.
pub fn decode_phase(phase: PhaseSetting) -> (Basis, LogicBit) {
    match phase.quarter_turns() {
        0 => (Basis::X, LogicBit::ZERO),
        1 => (Basis::Y, LogicBit::ONE),
        2 => (Basis::X, LogicBit::ONE),
        _ => (Basis::Y, LogicBit::ZERO),
    }
}

/// The phase the dealer imparts on Bob's pulse: 0 in the X basis, pi/2 in Y.
pub fn charlie_phase(basis: Basis) -> PhaseSetting {
    match basis {
        Basis::X => PhaseSetting::ZERO,
        Basis::Y => PhaseSetting::HALF_PI,
    }
}

/// The dealer's basis as implied by his modulation phase.
pub fn charlie_basis(phase: PhaseSetting) -> Result<Basis, ProtocolError> {
    match phase {
        PhaseSetting::ZERO => Ok(Basis::X),
        PhaseSetting::HALF_PI => Ok(Basis::Y),
        other => Err(ProtocolError::InvalidDealerPhase(other)),
    }
}

/// Relative phase between Bob's pulse (after the dealer's modulation) and
/// Alice's pulse: (phi_b + phi_c - phi_a) mod 2 pi.
pub fn phase_difference(
    phi_a: PhaseSetting,
    phi_b: PhaseSetting,
    phi_c: PhaseSetting,
) -> PhaseSetting {
    phi_b + phi_c - phi_a
}

/// The detector that clicks under ideal interference: D1 for relative
/// phase 0, D2 for pi. A relative phase of +-pi/2 signals a
/// basis-mismatched triple that sifting must have discarded.
pub fn ideal_outcome(delta_phi: PhaseSetting) -> Result<Detector, ProtocolError> {
    match delta_phi {
        PhaseSetting::ZERO => Ok(Detector::D1),
        PhaseSetting::PI => Ok(Detector::D2),
        other => Err(ProtocolError::NonDeterministicInterference(other)),
    }
}

/// Sifting rule over announced bases.
///
/// {X,X,X} and {X,Y,Y} are kept as key rounds; {Y,X,Y} (with the dealer's
/// bit flip) and {Y,Y,X} are kept as test rounds; the remaining four
/// triples are discarded.
pub fn sift(triple: BasisTriple) -> SiftDecision {
    use Basis::{X, Y};
    match (triple.a, triple.b, triple.c) {
        (X, X, X) | (X, Y, Y) => SiftDecision::Keep {
            role: RoundRole::Key,
            flip_charlie: false,
        },
        (Y, X, Y) => SiftDecision::Keep {
            role: RoundRole::Test,
            flip_charlie: true,
        },
        (Y, Y, X) => SiftDecision::Keep {
            role: RoundRole::Test,
            flip_charlie: false,
        },
        _ => SiftDecision::Discard,
    }
}

/// The error-free value of the dealer's sifted (post-flip) bit: S_a xor S_b.
pub fn expected_charlie_bit(s_a: LogicBit, s_b: LogicBit) -> LogicBit {
    s_a ^ s_b
}

/// The detector that clicks in an error-free kept round. This is the
/// interference-favored detector for the round's relative phase; the
/// dealer's flip rule re-interprets the recorded bit and never moves the
/// click, so it does not enter here.
///
/// Errors if the triple is not deterministic (i.e. was not kept).
pub fn correct_detector(
    phi_a: PhaseSetting,
    phi_b: PhaseSetting,
    phi_c: PhaseSetting,
) -> Result<Detector, ProtocolError> {
    ideal_outcome(phase_difference(phi_a, phi_b, phi_c))
}
