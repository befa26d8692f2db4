//! Stochastic round engine: generates detection tallies for N emitted
//! rounds under a [`ChannelParams`], either exactly per round (small N)
//! or in batched aggregate mode (N up to 1e10), and folds tallies into
//! sifted [`ObservedStats`].
//!
//! Reproducibility contract: a master seed expands into independent
//! per-block / per-cell ChaCha substreams (`set_stream`), so results are
//! bit-identical for a fixed `{params, config}` no matter how many
//! threads participate, and tally merging is associative and
//! commutative. The parallel path is compiled behind the `parallel`
//! feature; without it the same blocks run sequentially and produce the
//! same bytes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{self, ChannelParams, ChannelError, ClickDistribution};
use crate::protocol::{
    self, Basis, BasisTriple, Detector, LogicBit, PhaseSetting, ProtocolError, RoundRole,
    SiftDecision,
};
use crate::security::ObservedStats;

/// Guard against accidentally looping billions of individual rounds.
pub const PER_ROUND_LIMIT: u64 = 10_000_000;

/// Rounds per RNG substream in per-round mode.
const BLOCK_SIZE: u64 = 1 << 16;

// Disjoint substream id spaces of the master seed.
const STREAM_PER_ROUND: u64 = 0;
const STREAM_BATCHED: u64 = 1 << 32;
const STREAM_DOUBLE_CLICK: u64 = 2 << 32;

/// Errors from simulation and tally classification.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("per-round mode supports at most {limit} rounds, requested {requested}")]
    TooManyRounds { requested: u64, limit: u64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// The phases the three parties modulated in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseTriple {
    pub a: PhaseSetting,
    pub b: PhaseSetting,
    pub c: PhaseSetting,
}

impl PhaseTriple {
    pub fn new(a: PhaseSetting, b: PhaseSetting, c: PhaseSetting) -> Self {
        PhaseTriple { a, b, c }
    }

    /// The basis triple these phases encode. Errors if the dealer phase
    /// is not one of his two modulation values.
    pub fn basis_triple(&self) -> Result<BasisTriple, ProtocolError> {
        let c = protocol::charlie_basis(self.c)?;
        Ok(BasisTriple::new(self.a.basis(), self.b.basis(), c))
    }

    /// Stable index used to derive per-triple RNG substreams.
    fn stream_index(&self) -> u64 {
        u64::from(self.a.quarter_turns()) * 16
            + u64::from(self.b.quarter_turns()) * 4
            + u64::from(self.c.quarter_turns())
    }

    /// The 32 phase triples a protocol round can produce, in canonical
    /// order (16 with matched bases, 16 without).
    pub fn protocol_triples() -> Vec<PhaseTriple> {
        let mut out = Vec::with_capacity(32);
        for a in PhaseSetting::ALL {
            for b in PhaseSetting::ALL {
                for c in [PhaseSetting::ZERO, PhaseSetting::HALF_PI] {
                    out.push(PhaseTriple::new(a, b, c));
                }
            }
        }
        out
    }
}

/// Click counts for one phase triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    pub d1_only: u64,
    pub d2_only: u64,
    pub both: u64,
    pub none: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.d1_only + self.d2_only + self.both + self.none
    }

    pub fn clicks(&self) -> u64 {
        self.d1_only + self.d2_only + self.both
    }

    fn add(&mut self, other: &OutcomeCounts) {
        self.d1_only += other.d1_only;
        self.d2_only += other.d2_only;
        self.both += other.both;
        self.none += other.none;
    }
}

/// Per-phase-triple detection counts: the common format of simulator
/// output and measured-data input.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TallyTable {
    entries: BTreeMap<PhaseTriple, OutcomeCounts>,
}

impl TallyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// A table holding all 32 protocol triples with zero counts.
    pub fn empty_protocol_table() -> Self {
        let mut table = TallyTable::new();
        for triple in PhaseTriple::protocol_triples() {
            table.entries.insert(triple, OutcomeCounts::default());
        }
        table
    }

    pub fn add(&mut self, triple: PhaseTriple, counts: OutcomeCounts) {
        self.entries.entry(triple).or_default().add(&counts);
    }

    /// Inserts a fresh row; fails (returns false) if the triple exists.
    pub fn insert_new(&mut self, triple: PhaseTriple, counts: OutcomeCounts) -> bool {
        use std::collections::btree_map::Entry;
        match self.entries.entry(triple) {
            Entry::Vacant(v) => {
                v.insert(counts);
                true
            }
            Entry::Occupied(_) => false,
        }
    }

    pub fn get(&self, triple: &PhaseTriple) -> Option<&OutcomeCounts> {
        self.entries.get(triple)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&PhaseTriple, &OutcomeCounts)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merges another tally into this one. Associative and commutative.
    pub fn merge(&mut self, other: TallyTable) {
        for (triple, counts) in other.entries {
            self.entries.entry(triple).or_default().add(&counts);
        }
    }

    /// Sum of all four outcome counts over all entries.
    pub fn total_events(&self) -> u64 {
        self.entries.values().map(OutcomeCounts::total).sum()
    }

    /// Sum of click events (single or double) over all entries.
    pub fn total_clicks(&self) -> u64 {
        self.entries.values().map(OutcomeCounts::clicks).sum()
    }
}

/// How a simulation realizes its N rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Sample every round individually. Limited to [`PER_ROUND_LIMIT`].
    PerRound,
    /// Sample per-cell counts by multinomial decomposition; feasible up
    /// to N = 1e10 in milliseconds.
    Batched,
}

/// Resolution rule for rounds where both detectors click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DoubleClickPolicy {
    /// The dealer records a uniformly random bit, so half of the double
    /// clicks are errors in expectation.
    #[default]
    RandomBit,
}

/// Simulation run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n_rounds: u64,
    pub seed: u64,
    pub mode: SimMode,
    pub double_click_policy: DoubleClickPolicy,
}

/// Execution strategy for per-round sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Strategy {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Strategy::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Strategy::Sequential
    }
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Precomputed sampling context: one click distribution per relative
/// phase (there are only four).
struct RoundContext {
    p_x: f64,
    dists: [ClickDistribution; 4],
    triples: Vec<PhaseTriple>,
}

impl RoundContext {
    fn new(params: &ChannelParams) -> Result<Self, MonteCarloError> {
        params.validate()?;
        let eta = channel::transmittance(params);
        let dists = std::array::from_fn(|k| {
            channel::click_probabilities(
                PhaseSetting::new(k as u8).radians(),
                params.mu,
                eta,
                params.p_d,
                params.e_d,
            )
        });
        Ok(RoundContext {
            p_x: params.p_x,
            dists,
            triples: PhaseTriple::protocol_triples(),
        })
    }

    /// Canonical cell index of a protocol triple: (a*4 + b)*2 + c.
    fn cell_index(triple: &PhaseTriple) -> usize {
        let c = usize::from(triple.c.quarter_turns()); // 0 or 1
        (usize::from(triple.a.quarter_turns()) * 4 + usize::from(triple.b.quarter_turns())) * 2
            + c
    }

    fn sample_block(&self, rounds: u64, rng: &mut ChaCha8Rng) -> TallyTable {
        let mut cells = [[0u64; 4]; 32];
        for _ in 0..rounds {
            let basis_a = if rng.random::<f64>() < self.p_x { Basis::X } else { Basis::Y };
            let bit_a = LogicBit::from(rng.random::<bool>());
            let basis_b = if rng.random::<f64>() < self.p_x { Basis::X } else { Basis::Y };
            let bit_b = LogicBit::from(rng.random::<bool>());
            let basis_c = if rng.random::<f64>() < self.p_x { Basis::X } else { Basis::Y };

            let triple = PhaseTriple::new(
                protocol::encode_phase(basis_a, bit_a),
                protocol::encode_phase(basis_b, bit_b),
                protocol::charlie_phase(basis_c),
            );
            let dist = &self.dists[usize::from(
                protocol::phase_difference(triple.a, triple.b, triple.c).quarter_turns(),
            )];

            let u = rng.random::<f64>();
            let outcome = if u < dist.p_only_d1 {
                0
            } else if u < dist.p_only_d1 + dist.p_only_d2 {
                1
            } else if u < dist.p_only_d1 + dist.p_only_d2 + dist.p_both {
                2
            } else {
                3
            };
            cells[Self::cell_index(&triple)][outcome] += 1;
        }

        let mut table = TallyTable::empty_protocol_table();
        for triple in &self.triples {
            let c = cells[Self::cell_index(triple)];
            table.add(
                *triple,
                OutcomeCounts {
                    d1_only: c[0],
                    d2_only: c[1],
                    both: c[2],
                    none: c[3],
                },
            );
        }
        table
    }

    /// Exact probability of landing in a given triple's cell.
    fn triple_probability(&self, triple: &PhaseTriple) -> f64 {
        let p_y = 1.0 - self.p_x;
        let player = |p: PhaseSetting| match p.basis() {
            Basis::X => self.p_x / 2.0,
            Basis::Y => p_y / 2.0,
        };
        let dealer = if triple.c == PhaseSetting::ZERO { self.p_x } else { p_y };
        player(triple.a) * player(triple.b) * dealer
    }

    fn outcome_probabilities(&self, triple: &PhaseTriple) -> [f64; 4] {
        let dist = &self.dists[usize::from(
            protocol::phase_difference(triple.a, triple.b, triple.c).quarter_turns(),
        )];
        [dist.p_only_d1, dist.p_only_d2, dist.p_both, dist.p_none]
    }
}

/// Runs the simulation with the default strategy (parallel when the
/// `parallel` feature is on).
pub fn simulate(params: &ChannelParams, config: &SimConfig) -> Result<TallyTable, MonteCarloError> {
    simulate_with_strategy(params, config, Strategy::default())
}

/// Runs the simulation with an explicit execution strategy. The output
/// is identical for every strategy.
pub fn simulate_with_strategy(
    params: &ChannelParams,
    config: &SimConfig,
    strategy: Strategy,
) -> Result<TallyTable, MonteCarloError> {
    let ctx = RoundContext::new(params)?;
    match config.mode {
        SimMode::PerRound => simulate_per_round(&ctx, config, strategy),
        SimMode::Batched => simulate_batched(&ctx, config),
    }
}

fn simulate_per_round(
    ctx: &RoundContext,
    config: &SimConfig,
    strategy: Strategy,
) -> Result<TallyTable, MonteCarloError> {
    if config.n_rounds > PER_ROUND_LIMIT {
        return Err(MonteCarloError::TooManyRounds {
            requested: config.n_rounds,
            limit: PER_ROUND_LIMIT,
        });
    }
    let n_blocks = config.n_rounds.div_ceil(BLOCK_SIZE);
    let run_block = |j: u64| {
        let lo = j * BLOCK_SIZE;
        let hi = config.n_rounds.min(lo + BLOCK_SIZE);
        let mut rng = substream(config.seed, STREAM_PER_ROUND + j);
        ctx.sample_block(hi - lo, &mut rng)
    };

    match strategy {
        Strategy::Sequential => {
            let mut table = TallyTable::empty_protocol_table();
            for j in 0..n_blocks {
                table.merge(run_block(j));
            }
            Ok(table)
        }
        #[cfg(feature = "parallel")]
        Strategy::Parallel => Ok((0..n_blocks)
            .into_par_iter()
            .map(run_block)
            .reduce(TallyTable::empty_protocol_table, |mut a, b| {
                a.merge(b);
                a
            })),
    }
}

/// Batched mode: one conditional binomial draw per (triple, outcome)
/// cell, in canonical order, each from its own substream. The chain is a
/// standard multinomial decomposition, so every cell count is marginally
/// Binomial(N, p_cell) and the counts sum to N exactly.
fn simulate_batched(ctx: &RoundContext, config: &SimConfig) -> Result<TallyTable, MonteCarloError> {
    let mut cells = Vec::with_capacity(ctx.triples.len() * 4);
    for triple in &ctx.triples {
        let pt = ctx.triple_probability(triple);
        let po = ctx.outcome_probabilities(triple);
        for (kind, p) in po.into_iter().enumerate() {
            cells.push((*triple, kind, pt * p));
        }
    }

    let mut table = TallyTable::empty_protocol_table();
    let mut remaining = config.n_rounds;
    let mut rem_p = 1.0f64;
    let last = cells.len() - 1;
    for (i, (triple, kind, p)) in cells.into_iter().enumerate() {
        let count = if i == last {
            remaining
        } else if remaining == 0 || p <= 0.0 {
            0
        } else {
            let ratio = if rem_p <= p { 1.0 } else { p / rem_p };
            let mut rng = substream(config.seed, STREAM_BATCHED + i as u64);
            Binomial::new(remaining, ratio)
                .expect("conditional probability in [0, 1]")
                .sample(&mut rng)
        };
        remaining -= count;
        rem_p -= p;
        let mut counts = OutcomeCounts::default();
        match kind {
            0 => counts.d1_only = count,
            1 => counts.d2_only = count,
            2 => counts.both = count,
            _ => counts.none = count,
        }
        table.add(triple, counts);
    }
    Ok(table)
}

/// Classifies a tally through sifting and counts detections and errors
/// per round class. Double clicks are conclusive detections whose bit is
/// a coin flip; in aggregate form that is a fair binomial split of the
/// `both` count, drawn from a per-triple substream of `seed`.
pub fn tally_to_stats(
    tally: &TallyTable,
    policy: DoubleClickPolicy,
    seed: u64,
) -> Result<ObservedStats, MonteCarloError> {
    let mut stats = ObservedStats::default();
    for (triple, counts) in tally.entries() {
        let decision = protocol::sift(triple.basis_triple()?);
        let SiftDecision::Keep { role, .. } = decision else {
            continue;
        };
        let correct = protocol::correct_detector(triple.a, triple.b, triple.c)?;
        let wrong = match correct {
            Detector::D1 => counts.d2_only,
            Detector::D2 => counts.d1_only,
        };
        let detections = counts.clicks();
        let mut errors = wrong;
        if counts.both > 0 {
            match policy {
                DoubleClickPolicy::RandomBit => {
                    let mut rng =
                        substream(seed, STREAM_DOUBLE_CLICK + triple.stream_index());
                    errors += Binomial::new(counts.both, 0.5)
                        .expect("fair coin")
                        .sample(&mut rng);
                }
            }
        }
        match role {
            RoundRole::Key => {
                stats.n_x += detections;
                stats.m_x += errors;
            }
            RoundRole::Test => {
                stats.n_y += detections;
                stats.m_y += errors;
            }
        }
    }
    Ok(stats)
}

/// Expected probability of each (triple, outcome) cell under the
/// analytic channel model. Used by consistency tests and reporting.
pub fn analytic_cell_probabilities(
    params: &ChannelParams,
) -> Result<Vec<(PhaseTriple, [f64; 4])>, MonteCarloError> {
    let ctx = RoundContext::new(params)?;
    Ok(ctx
        .triples
        .iter()
        .map(|t| (*t, {
            let pt = ctx.triple_probability(t);
            let po = ctx.outcome_probabilities(t);
            [pt * po[0], pt * po[1], pt * po[2], pt * po[3]]
        }))
        .collect())
}
