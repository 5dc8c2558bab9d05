//! End-to-end staged design: distributions, the full-memory reference, per-stage
//! partitioning and lifting, the truncated baseline, and cycle statistics.

use crate::cyclecalc::coupled_cycle_count;
use crate::error::{Error, Result};
use crate::grade::{derive_stage_masses, reference_distribution, run_pipeline, GradeConfig, StageOutcome};
use crate::matrix::{BinMatrix, IntMatrix};
use crate::mc2::{
    derive_sf_baseline, design_reference_k_star, init_lift_state, init_partition_state, mc2_optimize, Mc2Config,
    Mc2Result, Phase, StageContext,
};
use crate::protomatrix::{DesignPlan, EdgeDistribution, StageMatrices};
use serde::{Deserialize, Serialize};

/// Budgets and weights for every optimizer in the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub grade: GradeConfig,
    /// Chain designing the full-memory partition.
    pub reference: Mc2Config,
    pub partition: Mc2Config,
    pub lift: Mc2Config,
    /// Reassignments allowed when clearing cycles-4 before lifting chains.
    pub lift_init_attempts: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grade: GradeConfig::default(),
            reference: Mc2Config {
                max_transitions: 300,
                ..Default::default()
            },
            partition: Mc2Config {
                max_transitions: 3_000,
                ..Default::default()
            },
            lift: Mc2Config {
                max_transitions: 20_000,
                weights: [1.0, 1.0, 1.0],
                ..Default::default()
            },
            lift_init_attempts: 1_000_000,
        }
    }
}

/// Reference distribution over `0..=m_s` for the plan's dimensions.
pub fn reference_p_star(gamma: usize, kappa: usize, m_s: usize, cfg: &GradeConfig) -> Result<EdgeDistribution> {
    Ok(reference_distribution(gamma, kappa, m_s, cfg)?.q)
}

/// Builds a plan whose stage masses come from `p*`.
pub fn plan_from_reference(
    gamma: usize,
    kappa: usize,
    z: usize,
    coupling: usize,
    m_new: &[usize],
    p_star: &EdgeDistribution,
) -> Result<DesignPlan> {
    let r = derive_stage_masses(p_star, m_new)?;
    DesignPlan::new(gamma, kappa, z, coupling, m_new, &r)
}

/// Full-memory reference partition and lifting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDesign {
    pub p_star: EdgeDistribution,
    pub k_star: IntMatrix,
    pub t_star: IntMatrix,
    pub k_cost: f64,
    pub t_cost: f64,
}

fn reseed(cfg: &Mc2Config, salt: u64) -> Mc2Config {
    let mut c = cfg.clone();
    c.seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(salt);
    c
}

fn lift_partition(
    k: &IntMatrix,
    fixed_powers: &IntMatrix,
    z: usize,
    cfg: &PipelineConfig,
    salt: u64,
) -> Result<Mc2Result> {
    let ctx = StageContext::lift(k, fixed_powers, z)?;
    let lift_cfg = reseed(&cfg.lift, salt);
    let init = init_lift_state(&ctx, lift_cfg.seed, cfg.lift_init_attempts)?;
    mc2_optimize(Phase::Lift, &ctx, &init.t, &lift_cfg)
}

/// Designs `K*` from `p*` and lifts it.
pub fn design_reference(plan: &DesignPlan, p_star: &EdgeDistribution, cfg: &PipelineConfig) -> Result<ReferenceDesign> {
    let k = design_reference_k_star(plan, p_star, &cfg.reference)?;
    let (g, c) = (plan.gamma, plan.kappa);
    let t = lift_partition(&k.x_opt, &IntMatrix::filled(g, c, -1), plan.z, cfg, 0xF00D)?;
    Ok(ReferenceDesign {
        p_star: p_star.clone(),
        k_star: k.x_opt,
        t_star: t.x_opt,
        k_cost: k.cost,
        t_cost: t.cost,
    })
}

/// Outcome of one design stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDesign {
    pub stage: usize,
    pub matrices: StageMatrices,
    /// Distribution used to initialize the new entries.
    pub q: EdgeDistribution,
    pub partition_cost: f64,
    pub lift_cost: f64,
    pub partition_transitions: usize,
    pub lift_transitions: usize,
}

fn stage_fixed(plan: &DesignPlan, d: usize, prev: Option<&StageMatrices>) -> Result<(IntMatrix, IntMatrix)> {
    plan.stage(d)?;
    if (d == 0) != prev.is_none() {
        return Err(Error::InvalidInput(format!("stage {d} needs exactly the previous stage's matrices")));
    }
    let (g, c) = (plan.gamma, plan.kappa);
    Ok(match prev {
        Some(p) => (p.k.clone(), p.t.clone()),
        None => (IntMatrix::filled(g, c, -1), IntMatrix::filled(g, c, -1)),
    })
}

/// Partitioning phase of stage `d` on the base matrix `K* <= m_f,d + m_n,d`,
/// with the entries of stage `d - 1` fixed.
pub fn partition_stage(
    plan: &DesignPlan,
    d: usize,
    k_star: &IntMatrix,
    prev: Option<&StageMatrices>,
    q: &EdgeDistribution,
    cfg: &PipelineConfig,
) -> Result<Mc2Result> {
    let (fixed_k, _) = stage_fixed(plan, d, prev)?;
    let stage = plan.stage(d)?;
    let top = stage.memory() as i32;
    let support: Vec<bool> = k_star.as_slice().iter().map(|&v| v >= 0 && v <= top).collect();
    let window = stage.window();
    let ctx = StageContext::partition(
        &support,
        &fixed_k,
        *window.start() as i32,
        *window.end() as i32,
        stage.m_new.max(1),
    )?;
    let part_cfg = reseed(&cfg.partition, 2 * d as u64 + 1);
    let x0 = init_partition_state(&ctx, q, part_cfg.seed)?;
    mc2_optimize(Phase::Partition, &ctx, &x0, &part_cfg)
}

/// Lifting phase of stage `d` for the partition `k`, with the powers of stage
/// `d - 1` fixed.
pub fn lift_stage_partition(
    plan: &DesignPlan,
    d: usize,
    k: &IntMatrix,
    prev: Option<&StageMatrices>,
    cfg: &PipelineConfig,
) -> Result<Mc2Result> {
    let (_, fixed_t) = stage_fixed(plan, d, prev)?;
    lift_partition(k, &fixed_t, plan.z, cfg, 2 * d as u64 + 2)
}

/// Stage matrices from the two phases' results.
pub fn stage_matrices(
    plan: &DesignPlan,
    d: usize,
    k: IntMatrix,
    t: IntMatrix,
    prev: Option<&StageMatrices>,
) -> Result<StageMatrices> {
    let (fixed_k, _) = stage_fixed(plan, d, prev)?;
    let stage = plan.stage(d)?;
    let fixed_mask: Vec<bool> = fixed_k.as_slice().iter().map(|&v| v >= 0).collect();
    let m_fixed = (d > 0).then_some(stage.m_fixed);
    StageMatrices::new(k, t, fixed_mask, m_fixed, stage.memory(), plan.z)
}

/// Designs stage `d`: partitioning, then lifting.
pub fn design_stage(
    plan: &DesignPlan,
    d: usize,
    k_star: &IntMatrix,
    prev: Option<&StageMatrices>,
    q: &EdgeDistribution,
    cfg: &PipelineConfig,
) -> Result<StageDesign> {
    let part = partition_stage(plan, d, k_star, prev, q, cfg)?;
    let lift = lift_stage_partition(plan, d, &part.x_opt, prev, cfg)?;
    let matrices = stage_matrices(plan, d, part.x_opt, lift.x_opt, prev)?;
    Ok(StageDesign {
        stage: d,
        matrices,
        q: q.clone(),
        partition_cost: part.cost,
        lift_cost: lift.cost,
        partition_transitions: part.transitions,
        lift_transitions: lift.transitions,
    })
}

/// Whole staged design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub plan: DesignPlan,
    pub grade: Vec<StageOutcome>,
    pub reference: ReferenceDesign,
    pub stages: Vec<StageDesign>,
}

/// Runs distributions, reference design, and every stage in order. `on_stage`
/// sees each stage as soon as it is finished.
pub fn design_rmc(
    plan: &DesignPlan,
    p_star: &EdgeDistribution,
    cfg: &PipelineConfig,
    on_stage: &mut dyn FnMut(&StageDesign),
) -> Result<Design> {
    let grade = run_pipeline(plan, &cfg.grade)?;
    let reference = design_reference(plan, p_star, cfg)?;
    let mut stages: Vec<StageDesign> = Vec::with_capacity(plan.stages.len());
    for d in 0..plan.stages.len() {
        let prev = stages.last().map(|s| &s.matrices);
        let sd = design_stage(plan, d, &reference.k_star, prev, &grade[d].result.q, cfg)
            .map_err(|e| Error::Stage {
                stage: d,
                source: Box::new(e),
            })?;
        on_stage(&sd);
        stages.push(sd);
    }
    Ok(Design {
        plan: plan.clone(),
        grade,
        reference,
        stages,
    })
}

/// Truncated baseline matrices of stage `d`.
pub fn sf_stage(reference: &ReferenceDesign, plan: &DesignPlan, d: usize) -> Result<StageMatrices> {
    let (k, t) = derive_sf_baseline(&reference.k_star, &reference.t_star, plan, d)?;
    let n = k.as_slice().len();
    StageMatrices::new(k, t, vec![false; n], None, plan.stage(d)?.memory(), plan.z)
}

/// Exact numbers of cycles of length 4, 6, 8 in the lifted coupled code;
/// lengths not requested are `None`.
pub fn cycle_counts(m: &StageMatrices, coupling: usize, lengths: &[usize]) -> Result<[Option<u64>; 3]> {
    let mut out = [None; 3];
    for &len in lengths {
        if !matches!(len, 4 | 6 | 8) {
            return Err(Error::InvalidInput(format!("cycle length {len} not in 4, 6, 8")));
        }
        out[len / 2 - 2] = Some(coupled_cycle_count(&m.k, Some((&m.t, m.z)), coupling, len / 2)?);
    }
    Ok(out)
}

/// `(SF - RMC) / SF` as a percentage; `None` when the baseline count is zero.
pub fn reduction_percent(rmc: u64, sf: u64) -> Option<f64> {
    (sf > 0).then(|| (sf as f64 - rmc as f64) / sf as f64 * 100.0)
}

/// Base matrices of every stage, in order.
pub fn stage_bases(design: &Design) -> Vec<BinMatrix> {
    design.stages.iter().map(|s| s.matrices.base()).collect()
}
