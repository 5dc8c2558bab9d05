//! Markov-chain Monte-Carlo finalization of partitioning and lifting matrices.
//!
//! A chain repeatedly picks a tuple of `b` correlated optimizable entries, scores
//! every joint reassignment of the tuple by its active cycle-candidate count, and
//! samples the next state from a Gibbs kernel whose temperature decays each
//! sweep. The same engine designs the full-memory reference partition `K*`.

mod design;
mod engine;

pub use design::{
    derive_sf_baseline, derive_stage_base, design_reference_k_star, init_lift_state, init_partition_state,
    largest_remainder_counts, LiftInit,
};

use crate::cyclecalc::{enumerate_candidates_masked, is_active_partitioned, CycleCandidate};
use crate::error::{Error, Result};
use crate::matrix::IntMatrix;
use engine::{run_chain, CandidateSource, ChainParams, ListSource, Problem, Scoring, WalkSource};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Which matrix a chain optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Partition,
    Lift,
}

/// Chain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Mc2Config {
    /// Entries updated together.
    pub b: usize,
    pub max_transitions: usize,
    /// Weights of cycle lengths 4, 6, 8. A zero weight drops that length.
    pub weights: [f64; 3],
    /// Initial temperature, in units of weighted active count.
    pub theta0: f64,
    /// Temperature factor applied after each sweep.
    pub decay: f64,
    /// Partitioning-phase `l1` budget; `None` means `entries * m_n / 4`.
    pub l1_budget: Option<f64>,
    /// Partitioning-phase `l-infinity` budget; `None` means `m_n`.
    pub linf_budget: Option<i32>,
    pub seed: u64,
    /// Independent chains run in parallel; the best is kept.
    pub chains: usize,
    pub record_trace: bool,
}

impl Default for Mc2Config {
    fn default() -> Self {
        Mc2Config {
            b: 3,
            max_transitions: 20_000,
            weights: [100.0, 10.0, 1.0],
            theta0: 1.0,
            decay: 0.99,
            l1_budget: None,
            linf_budget: None,
            seed: 1,
            chains: 1,
            record_trace: false,
        }
    }
}

impl Mc2Config {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.b > 5 {
            return Err(Error::InvalidInput(format!("b = {} must be in 1..=5", self.b)));
        }
        if self.max_transitions == 0 {
            return Err(Error::InvalidInput("max_transitions must be positive".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        if self.l1_budget.is_some_and(|b| !(b >= 0.0)) || self.linf_budget.is_some_and(|b| b < 0) {
            return Err(Error::InvalidInput("norm budgets must be non-negative".into()));
        }
        if !(self.theta0 > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidInput("temperature must be positive with decay in (0, 1]".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidInput("at least one chain is required".into()));
        }
        Ok(())
    }
}

/// What a chain may change at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageContext {
    pub gamma: usize,
    pub kappa: usize,
    /// Entries present in the stage base matrix (row-major).
    pub support: Vec<bool>,
    /// Entries inherited from the previous stage; never modified.
    pub fixed: Vec<bool>,
    /// Values of the fixed entries (`-1` elsewhere).
    pub fixed_values: IntMatrix,
    /// Inclusive value range of optimizable entries.
    pub values: (i32, i32),
    /// New memory of the stage, used by the default norm budgets.
    pub m_new: usize,
    /// Finalized partitioning matrix (lifting phase only).
    pub partition: Option<IntMatrix>,
    /// Circulant size (lifting phase only).
    pub z: Option<usize>,
    /// Each column needs at least 3 entries with value at most each threshold.
    pub vn_thresholds: Vec<i32>,
}

impl StageContext {
    /// Partitioning context: entries of `support` not fixed by `fixed_values`
    /// take values in `lo..=hi`.
    pub fn partition(support: &[bool], fixed_values: &IntMatrix, lo: i32, hi: i32, m_new: usize) -> Result<Self> {
        let (gamma, kappa) = fixed_values.dims();
        if support.len() != gamma * kappa {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", gamma * kappa),
                got: support.len().to_string(),
            });
        }
        if lo < 0 || hi < lo {
            return Err(Error::InvalidInput(format!("empty value range {lo}..={hi}")));
        }
        let fixed: Vec<bool> = fixed_values.as_slice().iter().map(|&v| v >= 0).collect();
        if fixed.iter().zip(support).any(|(&f, &s)| f && !s) {
            return Err(Error::InvalidInput("fixed entry outside the stage support".into()));
        }
        Ok(StageContext {
            gamma,
            kappa,
            support: support.to_vec(),
            fixed,
            fixed_values: fixed_values.clone(),
            values: (lo, hi),
            m_new,
            partition: None,
            z: None,
            vn_thresholds: Vec::new(),
        })
    }

    /// Lifting context over the support of `k`; entries with a value in
    /// `fixed_powers` are inherited.
    pub fn lift(k: &IntMatrix, fixed_powers: &IntMatrix, z: usize) -> Result<Self> {
        if k.dims() != fixed_powers.dims() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", k.dims()),
                got: format!("{:?}", fixed_powers.dims()),
            });
        }
        if z == 0 {
            return Err(Error::InvalidInput("z must be positive".into()));
        }
        let support: Vec<bool> = k.as_slice().iter().map(|&v| v >= 0).collect();
        let fixed: Vec<bool> = fixed_powers.as_slice().iter().map(|&v| v >= 0).collect();
        if fixed.iter().zip(&support).any(|(&f, &s)| f && !s) {
            return Err(Error::InvalidInput("fixed power outside the support of K".into()));
        }
        let (gamma, kappa) = k.dims();
        Ok(StageContext {
            gamma,
            kappa,
            support,
            fixed,
            fixed_values: fixed_powers.clone(),
            values: (0, z as i32 - 1),
            m_new: 1,
            partition: Some(k.clone()),
            z: Some(z),
            vn_thresholds: Vec::new(),
        })
    }

    pub fn with_vn_thresholds(mut self, thresholds: Vec<i32>) -> Self {
        self.vn_thresholds = thresholds;
        self
    }

    /// Flat indices of the entries a chain may change.
    pub fn optimizable(&self) -> Vec<usize> {
        (0..self.support.len()).filter(|&e| self.support[e] && !self.fixed[e]).collect()
    }

    fn check_state(&self, phase: Phase, x: &IntMatrix) -> Result<()> {
        if x.dims() != (self.gamma, self.kappa) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.gamma, self.kappa),
                got: format!("{:?}", x.dims()),
            });
        }
        if phase == Phase::Lift && self.partition.is_none() {
            return Err(Error::InvalidInput("lifting needs a finalized partitioning matrix".into()));
        }
        for (e, &v) in x.as_slice().iter().enumerate() {
            let (i, j) = (e / self.kappa, e % self.kappa);
            if !self.support[e] {
                if v != -1 {
                    return Err(Error::InvalidInput(format!("entry ({i}, {j}) is outside the support but assigned")));
                }
            } else if self.fixed[e] {
                if v != self.fixed_values.as_slice()[e] {
                    return Err(Error::InvalidInput(format!("fixed entry ({i}, {j}) altered")));
                }
            } else if v < self.values.0 || v > self.values.1 {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) = {v} outside {}..={}",
                    self.values.0, self.values.1
                )));
            }
        }
        Ok(())
    }
}

/// One trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub transition: usize,
    pub cost: f64,
    pub best: f64,
}

/// Best state found by a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mc2Result {
    pub phase: Phase,
    /// Normalized count of the best state.
    pub cost: f64,
    pub x_opt: IntMatrix,
    /// Active candidates of the best state per length (zero for dropped lengths).
    pub counts: [u64; 3],
    /// Candidates considered per length.
    pub census: [u64; 3],
    pub transitions: usize,
    pub best_transition: usize,
    pub seed: u64,
    pub trace: Vec<TracePoint>,
}

impl Mc2Result {
    /// Trace as CSV with header `transition,cost,best`.
    pub fn write_trace_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "transition,cost,best")?;
        for p in &self.trace {
            writeln!(w, "{},{},{}", p.transition, p.cost, p.best)?;
        }
        Ok(())
    }
}

/// Shared-candidate counts between optimizable entries, as a map from each
/// optimizable entry to its `b`-tuple.
fn tuples_from_source(
    source: &dyn CandidateSource,
    ells: &[usize],
    optimizable: &[usize],
    entries: usize,
    b: usize,
) -> Result<Vec<Vec<usize>>> {
    if b > optimizable.len() {
        return Err(Error::InvalidInput(format!(
            "b = {b} exceeds the {} optimizable entries",
            optimizable.len()
        )));
    }
    let mut is_opt = vec![false; entries];
    for &e in optimizable {
        is_opt[e] = true;
    }
    let rows: Vec<Vec<usize>> = optimizable
        .par_iter()
        .map(|&e| {
            let mut shared = vec![0u64; entries];
            if b > 1 {
                for &ell in ells {
                    source.through(ell, e, &mut |c| {
                        for &u in c {
                            shared[u as usize] += 1;
                        }
                    });
                }
            }
            pick_peers(e, &shared, &is_opt, b)
        })
        .collect();
    Ok(rows)
}

fn pick_peers(e: usize, shared: &[u64], is_opt: &[bool], b: usize) -> Vec<usize> {
    let mut peers: Vec<usize> = (0..shared.len()).filter(|&u| u != e && is_opt[u]).collect();
    // Stable sort keeps lowest index first among ties.
    peers.sort_by(|&a, &c| shared[c].cmp(&shared[a]));
    let mut t = vec![e];
    t.extend(peers.into_iter().take(b - 1));
    t
}

/// One `b`-tuple per optimizable entry: the entry followed by the `b - 1` other
/// optimizable entries sharing the most candidates with it, ties broken by the
/// lowest flat index.
pub fn build_correlation_tuples(
    candidates: &[CycleCandidate],
    kappa: usize,
    optimizable: &[usize],
    b: usize,
) -> Result<Vec<Vec<usize>>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("candidate list is empty".into()));
    }
    if b == 0 {
        return Err(Error::InvalidInput("b must be positive".into()));
    }
    let entries = candidates
        .iter()
        .flat_map(|c| c.flat_entries(kappa))
        .chain(optimizable.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let source = ListSource::new(entries, kappa, candidates);
    tuples_from_source(&source, &[2, 3, 4], optimizable, entries, b)
}

fn build_problem<'a>(
    phase: Phase,
    ctx: &StageContext,
    source: &'a dyn CandidateSource,
    cfg: &Mc2Config,
) -> Problem<'a> {
    let ells: Vec<usize> = (2..=4).filter(|&l| cfg.weights[l - 2] > 0.0).collect();
    let optimizable = ctx.optimizable();
    let (linf, l1, scoring, modulus) = match phase {
        Phase::Partition => (
            Some(cfg.linf_budget.unwrap_or(ctx.m_new as i32)),
            Some(
                cfg.l1_budget
                    .unwrap_or((optimizable.len() * ctx.m_new) as f64 / 4.0)
                    .floor() as i64,
            ),
            Scoring::Weighted,
            None,
        ),
        Phase::Lift => (None, None, Scoring::Staged, ctx.z.map(|z| z as i64)),
    };
    Problem {
        kappa: ctx.kappa,
        gamma: ctx.gamma,
        source,
        ells,
        weights: cfg.weights,
        scoring,
        modulus,
        lo: ctx.values.0,
        n_values: (ctx.values.1 - ctx.values.0 + 1) as usize,
        optimizable,
        linf,
        l1,
        vn_thresholds: ctx.vn_thresholds.clone(),
    }
}

/// Candidates for the lifting phase: those active under the finalized partition.
fn lift_candidates(ctx: &StageContext, ells: &[usize]) -> Result<Vec<CycleCandidate>> {
    let k = ctx.partition.as_ref().expect("checked by caller");
    let kappa = ctx.kappa;
    let admit = |i: usize, j: usize| ctx.support[i * kappa + j];
    let mut out = Vec::new();
    for &ell in ells {
        let mut v = enumerate_candidates_masked(ctx.gamma, kappa, ell, &admit)?;
        v.retain(|c| is_active_partitioned(c, k));
        out.extend(v);
    }
    Ok(out)
}

/// Runs the chain(s) over the default candidate family of the phase: every
/// candidate inside the stage support when partitioning, every candidate active
/// under the stage partition when lifting.
pub fn mc2_optimize(phase: Phase, ctx: &StageContext, x_init: &IntMatrix, cfg: &Mc2Config) -> Result<Mc2Result> {
    cfg.validate()?;
    ctx.check_state(phase, x_init)?;
    check_dims(ctx)?;
    match phase {
        Phase::Partition => {
            let source = WalkSource {
                gamma: ctx.gamma,
                kappa: ctx.kappa,
                support: ctx.support.clone(),
            };
            optimize_with_source(phase, ctx, &source, x_init, cfg)
        }
        Phase::Lift => {
            let ells: Vec<usize> = (2..=4).filter(|&l| cfg.weights[l - 2] > 0.0).collect();
            let cands = lift_candidates(ctx, &ells)?;
            let source = ListSource::new(ctx.gamma * ctx.kappa, ctx.kappa, &cands);
            optimize_with_source(phase, ctx, &source, x_init, cfg)
        }
    }
}

/// As [`mc2_optimize`] over an explicit candidate list. When lifting, only
/// candidates active under the stage partition are used.
pub fn mc2_optimize_with_candidates(
    phase: Phase,
    ctx: &StageContext,
    candidates: &[CycleCandidate],
    x_init: &IntMatrix,
    cfg: &Mc2Config,
) -> Result<Mc2Result> {
    cfg.validate()?;
    ctx.check_state(phase, x_init)?;
    check_dims(ctx)?;
    let kappa = ctx.kappa;
    let inside = |c: &&CycleCandidate| {
        c.entries().iter().all(|&(i, j)| i < ctx.gamma && j < kappa && ctx.support[i * kappa + j])
            && match (phase, &ctx.partition) {
                (Phase::Lift, Some(k)) => is_active_partitioned(c, k),
                _ => true,
            }
    };
    let source = ListSource::new(ctx.gamma * kappa, kappa, candidates.iter().filter(inside));
    optimize_with_source(phase, ctx, &source, x_init, cfg)
}

fn check_dims(ctx: &StageContext) -> Result<()> {
    if ctx.gamma * ctx.kappa > u16::MAX as usize || ctx.gamma > 256 || ctx.kappa > 256 {
        return Err(Error::InvalidInput("base matrix too large for the chain".into()));
    }
    let n = (ctx.values.1 - ctx.values.0 + 1) as usize;
    if n > 4096 {
        return Err(Error::InvalidInput(format!("value set of size {n} is too large")));
    }
    Ok(())
}

fn optimize_with_source(
    phase: Phase,
    ctx: &StageContext,
    source: &dyn CandidateSource,
    x_init: &IntMatrix,
    cfg: &Mc2Config,
) -> Result<Mc2Result> {
    let prob = build_problem(phase, ctx, source, cfg);
    let n_values = prob.n_values;
    if n_values.checked_pow(cfg.b as u32).is_none_or(|c| c > 5_000_000) {
        return Err(Error::InvalidInput(format!(
            "{n_values}^{} completions per tuple is too many",
            cfg.b
        )));
    }
    let x0 = x_init.as_slice();
    if !prob.feasible(x0, x0) {
        return Err(Error::Infeasible("initial state violates the stage constraints".into()));
    }
    let b = cfg.b.min(prob.optimizable.len());
    let tuples = if b == 0 {
        Vec::new()
    } else {
        tuples_from_source(source, &prob.ells, &prob.optimizable, ctx.gamma * ctx.kappa, b)?
    };
    let outcomes: Vec<_> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let seed = chain_seed(cfg.seed, c);
            let params = ChainParams {
                max_transitions: cfg.max_transitions,
                theta0: cfg.theta0,
                decay: cfg.decay,
                seed,
                record_trace: cfg.record_trace,
            };
            (seed, run_chain(&prob, x0, &tuples, &params))
        })
        .collect();
    let (seed, best) = outcomes
        .into_iter()
        .reduce(|a, b| if b.1.cost < a.1.cost { b } else { a })
        .expect("at least one chain");
    let (gamma, kappa) = x_init.dims();
    Ok(Mc2Result {
        phase,
        cost: best.cost,
        x_opt: IntMatrix::from_vec(gamma, kappa, best.x_opt).expect("dims"),
        counts: best.counts,
        census: best.census,
        transitions: best.transitions,
        best_transition: best.best_transition,
        seed,
        trace: best
            .trace
            .into_iter()
            .map(|(transition, cost, best)| TracePoint { transition, cost, best })
            .collect(),
    })
}

fn chain_seed(seed: u64, chain: usize) -> u64 {
    seed ^ (chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[cfg(test)]
mod tests;
