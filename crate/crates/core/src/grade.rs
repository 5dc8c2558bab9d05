//! Gradient-descent distributor for the new components of each design stage and
//! the recursive multi-stage driver.

use crate::cyclecalc::{
    expected_cycles, expected_cycles_expanded, grad_expected_cycles, CandidateCensus, LaurentPoly,
};
use crate::error::{Error, Result};
use crate::protomatrix::{assemble_stage_distribution, DesignPlan, EdgeDistribution};
use serde::{Deserialize, Serialize};

/// Initialization of the new-part distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Uniform,
    /// Explicit starting weights (normalized on use).
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradeConfig {
    pub w6: f64,
    pub w8: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Lower clip applied to entries after each step.
    pub floor: f64,
    pub init: InitMode,
}

impl Default for GradeConfig {
    fn default() -> Self {
        GradeConfig {
            w6: 10.0,
            w8: 1.0,
            epsilon: 1e-8,
            alpha: 0.05,
            max_iterations: 100_000,
            max_halvings: 60,
            floor: 1e-9,
            init: InitMode::Uniform,
        }
    }
}

impl GradeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w6 >= 0.0 && self.w8 >= 0.0) || self.w6 + self.w8 <= 0.0 {
            return Err(Error::InvalidInput("weights must be non-negative and not both zero".into()));
        }
        if !(self.epsilon > 0.0 && self.alpha > 0.0) {
            return Err(Error::InvalidInput("epsilon and alpha must be positive".into()));
        }
        if !(self.floor >= 0.0 && self.floor < 1e-3) {
            return Err(Error::InvalidInput("floor must lie in [0, 1e-3)".into()));
        }
        Ok(())
    }
}

/// Masses and fixed distribution seen by one optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct StageProblem {
    pub gamma: usize,
    pub kappa: usize,
    pub r_fixed: f64,
    pub r_new: f64,
    /// Fixed distribution over `0..=m_f` (`None` at stage 0).
    pub p: Option<EdgeDistribution>,
    /// Smallest component index of the new part.
    pub offset: usize,
    /// Number of entries of `q`.
    pub len: usize,
}

impl StageProblem {
    /// Problem of stage `d` of a plan with fixed distribution `p`.
    pub fn from_plan(plan: &DesignPlan, d: usize, p: Option<&EdgeDistribution>) -> Result<Self> {
        let stage = plan.stage(d)?;
        let window = stage.window();
        if d == 0 {
            if p.is_some() {
                return Err(Error::InvalidInput("stage 0 has no fixed distribution".into()));
            }
        } else {
            let p = p.ok_or_else(|| Error::InvalidInput(format!("stage {d} needs p")))?;
            if p.offset != 0 || p.len() != stage.m_fixed + 1 {
                return Err(Error::DistributionRange(format!(
                    "p covers {} entries, stage {d} fixes {}",
                    p.len(),
                    stage.m_fixed + 1
                )));
            }
        }
        Ok(StageProblem {
            gamma: plan.gamma,
            kappa: plan.kappa,
            r_fixed: stage.r_fixed,
            r_new: stage.r_new,
            p: p.cloned(),
            offset: *window.start(),
            len: window.end() - window.start() + 1,
        })
    }

    /// A single full-mass code over `0..=m` with nothing fixed.
    pub fn standalone(gamma: usize, kappa: usize, memory: usize) -> Self {
        StageProblem {
            gamma,
            kappa,
            r_fixed: 0.0,
            r_new: 1.0,
            p: None,
            offset: 0,
            len: memory + 1,
        }
    }

    fn f(&self) -> LaurentPoly {
        self.p.as_ref().map_or_else(LaurentPoly::zero, LaurentPoly::from_distribution)
    }

    fn g(&self, q: &[f64]) -> LaurentPoly {
        LaurentPoly::new(self.offset as i64, q.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeResult {
    pub q: EdgeDistribution,
    pub e6: f64,
    pub e8: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<f64>,
    /// Infinity norm of the centered gradient over entries off the floor.
    pub kkt_residual: f64,
    pub projections: usize,
    pub halvings: usize,
    pub converged: bool,
}

struct Objective<'a> {
    prob: &'a StageProblem,
    cfg: &'a GradeConfig,
    census: CandidateCensus,
    f: LaurentPoly,
}

impl Objective<'_> {
    fn expectations(&self, q: &[f64]) -> Result<(f64, f64)> {
        let g = self.prob.g(q);
        let (rf, rn) = (self.prob.r_fixed, self.prob.r_new);
        Ok((
            expected_cycles_expanded(3, rf, rn, &self.f, &g, &self.census)?,
            expected_cycles_expanded(4, rf, rn, &self.f, &g, &self.census)?,
        ))
    }

    fn value(&self, q: &[f64]) -> Result<f64> {
        let g = self.prob.g(q);
        let (rf, rn) = (self.prob.r_fixed, self.prob.r_new);
        let mut v = 0.0;
        if self.cfg.w6 > 0.0 {
            v += self.cfg.w6 * expected_cycles(3, rf, rn, &self.f, &g, &self.census)?;
        }
        if self.cfg.w8 > 0.0 {
            v += self.cfg.w8 * expected_cycles(4, rf, rn, &self.f, &g, &self.census)?;
        }
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("objective at q = {q:?}")));
        }
        Ok(v)
    }

    fn gradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        let g = self.prob.g(q);
        let (rf, rn) = (self.prob.r_fixed, self.prob.r_new);
        let mut out = vec![0.0; q.len()];
        for (ell, w) in [(3, self.cfg.w6), (4, self.cfg.w8)] {
            if w > 0.0 {
                let gr = grad_expected_cycles(ell, rf, rn, &self.f, &g, &self.census)?;
                for (o, v) in out.iter_mut().zip(gr) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// Centers `grad` over the free entries, freezing entries sitting on the floor
/// whose descent direction points further out of the simplex. Returns the
/// centered direction (zero on frozen entries).
fn project_gradient(q: &[f64], grad: &[f64], floor: f64) -> Vec<f64> {
    let n = q.len();
    let mut free: Vec<bool> = vec![true; n];
    loop {
        let count = free.iter().filter(|&&f| f).count();
        if count == 0 {
            return vec![0.0; n];
        }
        let mean: f64 = (0..n).filter(|&k| free[k]).map(|k| grad[k]).sum::<f64>() / count as f64;
        let mut changed = false;
        for k in 0..n {
            if free[k] && q[k] <= floor * (1.0 + 1e-9) && grad[k] - mean > 0.0 {
                free[k] = false;
                changed = true;
            }
        }
        if !changed {
            return (0..n)
                .map(|k| if free[k] { grad[k] - mean } else { 0.0 })
                .collect();
        }
    }
}

fn clip_and_normalize(q: &mut [f64], floor: f64) -> bool {
    let mut clipped = false;
    for v in q.iter_mut() {
        if *v < floor {
            *v = floor;
            clipped = true;
        }
    }
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= s);
    clipped
}

/// Minimizes `w6 E6 + w8 E8` over the new-part distribution `q`.
pub fn grade_problem(prob: &StageProblem, cfg: &GradeConfig) -> Result<GradeResult> {
    cfg.validate()?;
    if prob.len == 0 {
        return Err(Error::InvalidInput("no new components to optimize".into()));
    }
    let obj = Objective {
        prob,
        cfg,
        census: CandidateCensus::new(prob.gamma, prob.kappa),
        f: prob.f(),
    };
    let mut q = match &cfg.init {
        InitMode::Uniform => vec![1.0 / prob.len as f64; prob.len],
        InitMode::Given(w) => {
            if w.len() != prob.len {
                return Err(Error::InvalidInput(format!(
                    "initial q has {} entries, expected {}",
                    w.len(),
                    prob.len
                )));
            }
            EdgeDistribution::normalized(prob.offset, w.clone())?.weights
        }
    };
    let mut f_prev = obj.value(&q)?;
    let mut trace = vec![f_prev];
    let mut alpha = cfg.alpha;
    let (mut iterations, mut projections, mut halvings) = (0, 0, 0);
    let mut converged = prob.len == 1;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let grad = obj.gradient(&q)?;
        let dir = project_gradient(&q, &grad, cfg.floor);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            converged = true;
            break;
        }
        let mut cand: Vec<f64> = q.iter().zip(&dir).map(|(x, d)| x - alpha * d / norm).collect();
        let clipped = clip_and_normalize(&mut cand, cfg.floor);
        let f_cur = obj.value(&cand)?;
        if f_cur > f_prev {
            halvings += 1;
            alpha *= 0.5;
            if halvings > cfg.max_halvings {
                // The step can no longer decrease the objective: stationary point.
                converged = true;
            }
            continue;
        }
        if clipped {
            projections += 1;
        }
        q = cand;
        trace.push(f_cur);
        let delta = (f_prev - f_cur).abs();
        f_prev = f_cur;
        if delta <= cfg.epsilon {
            converged = true;
        }
    }

    let grad = obj.gradient(&q)?;
    let kkt_residual = project_gradient(&q, &grad, cfg.floor)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let (e6, e8) = obj.expectations(&q)?;
    Ok(GradeResult {
        q: EdgeDistribution {
            offset: prob.offset,
            weights: q,
        },
        e6,
        e8,
        objective: f_prev,
        iterations,
        trace,
        kkt_residual,
        projections,
        halvings,
        converged,
    })
}

/// Optimizes the new part of stage `d` given the fixed distribution `p`.
pub fn rmc_grade(
    plan: &DesignPlan,
    d: usize,
    p: Option<&EdgeDistribution>,
    cfg: &GradeConfig,
) -> Result<GradeResult> {
    let stage = plan.stage(d)?;
    if d > 0 && stage.m_new == 0 {
        return Err(Error::InvalidInput(format!("stage {d} adds no components")));
    }
    grade_problem(&StageProblem::from_plan(plan, d, p)?, cfg)
}

/// Stage 0: nothing fixed, the distribution over `0..=m_n,0` is the code's own.
pub fn run_stage0(plan: &DesignPlan, cfg: &GradeConfig) -> Result<GradeResult> {
    rmc_grade(plan, 0, None, cfg)
}

/// Per-stage masses from a reference distribution over `0..=m_s`: the mass of
/// `p*` over each stage's component window.
pub fn derive_stage_masses(reference: &EdgeDistribution, schedule: &[usize]) -> Result<Vec<f64>> {
    if schedule.is_empty() {
        return Err(Error::InvalidInput("empty memory schedule".into()));
    }
    let m_s: usize = schedule.iter().sum();
    if reference.offset != 0 || reference.len() != m_s + 1 {
        return Err(Error::DistributionRange(format!(
            "reference has {} entries, schedule needs {}",
            reference.len(),
            m_s + 1
        )));
    }
    let mut out = Vec::with_capacity(schedule.len());
    let mut start = 0usize;
    for (d, &m) in schedule.iter().enumerate() {
        let end = if d == 0 { m } else { start + m - 1 };
        out.push(reference.weights[start..=end].iter().sum());
        start = end + 1;
    }
    Ok(out)
}

/// Reference distribution `p*` of a full-memory code over `0..=m_s`.
pub fn reference_distribution(gamma: usize, kappa: usize, m_s: usize, cfg: &GradeConfig) -> Result<GradeResult> {
    grade_problem(&StageProblem::standalone(gamma, kappa, m_s), cfg)
}

/// Result of one stage of the recursive pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: usize,
    pub result: GradeResult,
    /// Distribution of the whole stage code over `0..=m_f + m_n`.
    pub u: EdgeDistribution,
}

/// Runs every stage in order, feeding each stage's `u` forward as the next `p`.
pub fn run_pipeline(plan: &DesignPlan, cfg: &GradeConfig) -> Result<Vec<StageOutcome>> {
    let mut out: Vec<StageOutcome> = Vec::with_capacity(plan.stages.len());
    for d in 0..plan.stages.len() {
        let p = out.last().map(|o| o.u.clone());
        let result = rmc_grade(plan, d, p.as_ref(), cfg)?;
        let u = match &p {
            None => result.q.clone(),
            Some(p) => {
                let s = &plan.stages[d];
                assemble_stage_distribution(p, &result.q, s.r_fixed, s.r_new)?
            }
        };
        out.push(StageOutcome { stage: d, result, u });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_plan(r: &[f64]) -> DesignPlan {
        DesignPlan::new(7, 35, 29, 16, &[8, 3, 4], r).unwrap()
    }

    #[test]
    fn single_component_is_immediate() {
        let plan = DesignPlan::new(7, 35, 29, 16, &[0, 1], &[0.5, 0.5]).unwrap();
        let r = run_stage0(&plan, &GradeConfig::default()).unwrap();
        assert_eq!(r.q.weights, vec![1.0]);
        assert_eq!(r.iterations, 0);
        let p = r.q.clone();
        let r1 = rmc_grade(&plan, 1, Some(&p), &GradeConfig::default()).unwrap();
        assert_eq!(r1.q.weights, vec![1.0]);
    }

    #[test]
    fn stage_masses_from_uniform_reference() {
        let p = EdgeDistribution::uniform(0, 16);
        let r = derive_stage_masses(&p, &[8, 3, 4]).unwrap();
        let expect = [0.5625, 0.1875, 0.25];
        for (a, b) in r.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(derive_stage_masses(&EdgeDistribution::uniform(0, 3), &[2]).unwrap(), vec![1.0]);
        assert!(derive_stage_masses(&p, &[8, 3]).is_err());
    }

    #[test]
    fn unit_increments_concatenate_masses() {
        let plan = DesignPlan::new(5, 9, 7, 4, &[1, 1, 1], &[0.5, 0.25, 0.25]).unwrap();
        let out = run_pipeline(&plan, &GradeConfig::default()).unwrap();
        assert_eq!(out[1].result.q.weights, vec![1.0]);
        assert_eq!(out[2].result.q.weights, vec![1.0]);
        let u = &out[2].u.weights;
        assert_eq!(u.len(), 4);
        // Stage 0 splits its half of the mass over two symmetric components.
        let expect = [0.25, 0.25, 0.25, 0.25];
        for (a, b) in u.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6, "{u:?}");
        }
    }

    #[test]
    fn stage0_uniform_start_stays_symmetric() {
        let plan = example_plan(&[0.53, 0.1, 0.37]);
        let r = run_stage0(&plan, &GradeConfig::default()).unwrap();
        let w = &r.q.weights;
        for k in 0..w.len() {
            assert!((w[k] - w[w.len() - 1 - k]).abs() < 1e-6, "{w:?}");
        }
        assert!(r.converged);
        assert!(r.kkt_residual < 1e-2 * r.objective.max(1.0));
    }

    #[test]
    fn trace_best_so_far_never_increases() {
        let plan = example_plan(&[0.53, 0.1, 0.37]);
        let s0 = run_stage0(&plan, &GradeConfig::default()).unwrap();
        let r = rmc_grade(&plan, 1, Some(&s0.q), &GradeConfig::default()).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
        }
        let sum: f64 = r.q.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(r.q.weights.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn reported_expectations_are_consistent() {
        let plan = example_plan(&[0.53, 0.1, 0.37]);
        let s0 = run_stage0(&plan, &GradeConfig::default()).unwrap();
        let r = rmc_grade(&plan, 1, Some(&s0.q), &GradeConfig::default()).unwrap();
        let c = CandidateCensus::new(7, 35);
        let f = LaurentPoly::from_distribution(&s0.q);
        let g = LaurentPoly::from_distribution(&r.q);
        let e6 = expected_cycles_expanded(3, 0.53, 0.1, &f, &g, &c).unwrap();
        assert!((e6 - r.e6).abs() <= 1e-9 * e6);
    }

    #[test]
    fn given_init_length_is_checked() {
        let plan = example_plan(&[0.53, 0.1, 0.37]);
        let cfg = GradeConfig {
            init: InitMode::Given(vec![1.0, 1.0]),
            ..GradeConfig::default()
        };
        assert!(run_stage0(&plan, &cfg).is_err());
    }
}
