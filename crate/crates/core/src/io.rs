//! File formats: alist parity-check matrices, per-stage JSON artifacts, and the
//! TOML plan file.

use crate::error::{Error, Result};
use crate::grade::GradeConfig;
use crate::mc2::Mc2Config;
use crate::pipeline::{plan_from_reference, reference_p_star, PipelineConfig};
use crate::protomatrix::{code_rate_and_length, format_rate, lift_stage, DesignPlan, EdgeDistribution, QcCode, StageMatrices};
use crate::simlab::{ChannelKind, StopRule};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Writes a parity-check matrix in alist format (1-based indices, zero padded).
pub fn write_alist(code: &QcCode) -> String {
    let (m, n) = (code.n_rows(), code.n_cols());
    let col_w: Vec<usize> = (0..n).map(|j| code.col(j).len()).collect();
    let row_w: Vec<usize> = (0..m).map(|i| code.row(i).len()).collect();
    let max_c = col_w.iter().copied().max().unwrap_or(0);
    let max_r = row_w.iter().copied().max().unwrap_or(0);
    let mut s = String::new();
    let join = |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "{n} {m}");
    let _ = writeln!(s, "{max_c} {max_r}");
    let _ = writeln!(s, "{}", join(&mut col_w.iter().copied()));
    let _ = writeln!(s, "{}", join(&mut row_w.iter().copied()));
    for j in 0..n {
        let mut idx: Vec<usize> = code.col(j).iter().map(|&i| i as usize + 1).collect();
        idx.resize(max_c, 0);
        let _ = writeln!(s, "{}", join(&mut idx.into_iter()));
    }
    for i in 0..m {
        let mut idx: Vec<usize> = code.row(i).iter().map(|&j| j as usize + 1).collect();
        idx.resize(max_r, 0);
        let _ = writeln!(s, "{}", join(&mut idx.into_iter()));
    }
    s
}

/// Parses an alist matrix, checking that the column and row lists agree.
pub fn read_alist(text: &str) -> Result<QcCode> {
    let mut nums = text.split_whitespace().map(|t| {
        t.parse::<usize>()
            .map_err(|_| Error::Parse(format!("alist token {t:?} is not a non-negative integer")))
    });
    let mut next = || nums.next().unwrap_or_else(|| Err(Error::Parse("alist ended early".into())));
    let (n, m) = (next()?, next()?);
    let (_max_c, _max_r) = (next()?, next()?);
    let col_w: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
    let row_w: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
    let max_c = col_w.iter().copied().max().unwrap_or(0);
    let max_r = row_w.iter().copied().max().unwrap_or(0);
    let mut cols = Vec::with_capacity(n);
    for &w in &col_w {
        let mut col = Vec::with_capacity(w);
        for k in 0..max_c {
            let v = next()?;
            if k < w {
                if v == 0 || v > m {
                    return Err(Error::Parse(format!("row index {v} outside 1..={m}")));
                }
                col.push((v - 1) as u32);
            }
        }
        cols.push(col);
    }
    let mut rows_seen: Vec<Vec<u32>> = Vec::with_capacity(m);
    for &w in &row_w {
        let mut row = Vec::with_capacity(w);
        for k in 0..max_r {
            // Some writers omit padding for short rows at the end of the file.
            let v = match next() {
                Ok(v) => v,
                Err(_) if k >= w => 0,
                Err(e) => return Err(e),
            };
            if k < w {
                if v == 0 || v > n {
                    return Err(Error::Parse(format!("column index {v} outside 1..={n}")));
                }
                row.push((v - 1) as u32);
            }
        }
        rows_seen.push(row);
    }
    let code = QcCode::from_columns(m, cols)?;
    for (i, row) in rows_seen.iter_mut().enumerate() {
        row.sort_unstable();
        if row.as_slice() != code.row(i) {
            return Err(Error::Parse(format!("row {} disagrees with the column lists", i + 1)));
        }
    }
    Ok(code)
}

/// Distributions behind one stage: fixed `p`, new-part `q`, and whole-code `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDistributions {
    pub p: Option<EdgeDistribution>,
    pub q: EdgeDistribution,
    pub u: EdgeDistribution,
}

/// One designed code: plan, stage matrices, derived figures, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageArtifact {
    /// `rmc` for staged designs, `sf` for truncated baselines.
    pub family: String,
    pub stage: usize,
    pub seed: u64,
    pub plan: DesignPlan,
    pub length: usize,
    pub rate: String,
    pub matrices: StageMatrices,
    pub distributions: Option<StageDistributions>,
    /// Exact cycle counts of lengths 4, 6, 8 when computed.
    #[serde(default)]
    pub cycles: [Option<u64>; 3],
}

impl StageArtifact {
    pub fn new(family: &str, plan: &DesignPlan, stage: usize, seed: u64, matrices: StageMatrices) -> Result<Self> {
        let (length, rate) = code_rate_and_length(plan, stage)?;
        Ok(StageArtifact {
            family: family.into(),
            stage,
            seed,
            plan: plan.clone(),
            length,
            rate: format_rate(rate),
            matrices,
            distributions: None,
            cycles: [None; 3],
        })
    }

    /// Lifted parity-check matrix.
    pub fn code(&self) -> Result<QcCode> {
        lift_stage(&self.matrices.k, &self.matrices.t, self.plan.z, self.plan.coupling)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a code from an alist file or a stage artifact.
pub fn load_code(path: &Path) -> Result<QcCode> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        serde_json::from_str::<StageArtifact>(&text)?.code()
    } else {
        read_alist(&text)
    }
}

/// One stage entry of a plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEntry {
    pub m_new: usize,
    pub r_new: Option<f64>,
}

/// Chain settings shared by every MC² run of a design, with per-run budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mc2Section {
    pub b: usize,
    pub seed: u64,
    pub theta0: f64,
    pub decay: f64,
    pub chains: usize,
    pub l1_budget: Option<f64>,
    pub linf_budget: Option<i32>,
    pub reference_transitions: usize,
    pub partition_transitions: usize,
    pub lift_transitions: usize,
    pub partition_weights: [f64; 3],
    pub lift_weights: [f64; 3],
    pub lift_init_attempts: usize,
}

impl Default for Mc2Section {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Mc2Section {
            b: p.partition.b,
            seed: p.partition.seed,
            theta0: p.partition.theta0,
            decay: p.partition.decay,
            chains: p.partition.chains,
            l1_budget: None,
            linf_budget: None,
            reference_transitions: p.reference.max_transitions,
            partition_transitions: p.partition.max_transitions,
            lift_transitions: p.lift.max_transitions,
            partition_weights: p.partition.weights,
            lift_weights: p.lift.weights,
            lift_init_attempts: p.lift_init_attempts,
        }
    }
}

/// Channel grid and stop rule for simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub channel: ChannelKind,
    pub grid: Vec<f64>,
    pub min_frame_errors: u64,
    pub max_frames: u64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let stop = StopRule::default();
        SimulateSection {
            channel: ChannelKind::Awgn,
            grid: vec![-1.0, -0.5, 0.0],
            min_frame_errors: stop.min_frame_errors,
            max_frames: stop.max_frames,
            max_iterations: 50,
            seed: 1,
        }
    }
}

impl SimulateSection {
    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            min_frame_errors: self.min_frame_errors,
            max_frames: self.max_frames,
            ..Default::default()
        }
    }
}

/// Plan file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub gamma: usize,
    pub kappa: usize,
    pub z: usize,
    #[serde(rename = "L")]
    pub coupling: usize,
    #[serde(rename = "stage")]
    pub stages: Vec<StageEntry>,
    #[serde(default)]
    pub grade: GradeConfig,
    #[serde(default)]
    pub mc2: Mc2Section,
    #[serde(default)]
    pub simulate: SimulateSection,
}

/// A plan resolved into design inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPlan {
    pub plan: DesignPlan,
    pub p_star: EdgeDistribution,
    pub config: PipelineConfig,
    pub simulate: SimulateSection,
}

impl PlanFile {
    pub fn parse(text: &str) -> Result<Self> {
        let pf: PlanFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        DesignPlan::check_shape(pf.gamma, pf.kappa, pf.z, pf.coupling)?;
        if pf.stages.is_empty() {
            return Err(Error::InvalidPlan("at least one [[stage]] is required".into()));
        }
        let given = pf.stages.iter().filter(|s| s.r_new.is_some()).count();
        if given != 0 && given != pf.stages.len() {
            return Err(Error::InvalidPlan("give r_new for every stage or for none".into()));
        }
        pf.grade.validate()?;
        Ok(pf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Pipeline settings with an optional seed override.
    pub fn pipeline_config(&self, seed: Option<u64>) -> PipelineConfig {
        let m = &self.mc2;
        let base = Mc2Config {
            b: m.b,
            seed: seed.unwrap_or(m.seed),
            theta0: m.theta0,
            decay: m.decay,
            chains: m.chains,
            l1_budget: m.l1_budget,
            linf_budget: m.linf_budget,
            ..Default::default()
        };
        PipelineConfig {
            grade: self.grade.clone(),
            reference: Mc2Config {
                max_transitions: m.reference_transitions,
                weights: m.partition_weights,
                ..base.clone()
            },
            partition: Mc2Config {
                max_transitions: m.partition_transitions,
                weights: m.partition_weights,
                ..base.clone()
            },
            lift: Mc2Config {
                max_transitions: m.lift_transitions,
                weights: m.lift_weights,
                ..base
            },
            lift_init_attempts: m.lift_init_attempts,
        }
    }

    /// Builds the design plan. The full-memory reference distribution is always
    /// computed; missing stage masses are taken from it.
    pub fn resolve(&self, seed: Option<u64>) -> Result<ResolvedPlan> {
        let config = self.pipeline_config(seed);
        config.reference.validate()?;
        config.partition.validate()?;
        config.lift.validate()?;
        let m_new: Vec<usize> = self.stages.iter().map(|s| s.m_new).collect();
        let m_s: usize = m_new.iter().sum();
        let p_star = reference_p_star(self.gamma, self.kappa, m_s, &config.grade)?;
        let plan = if self.stages[0].r_new.is_some() {
            let r: Vec<f64> = self.stages.iter().map(|s| s.r_new.unwrap_or_default()).collect();
            DesignPlan::new(self.gamma, self.kappa, self.z, self.coupling, &m_new, &r)?
        } else {
            plan_from_reference(self.gamma, self.kappa, self.z, self.coupling, &m_new, &p_star)?
        };
        Ok(ResolvedPlan {
            plan,
            p_star,
            config,
            simulate: self.simulate.clone(),
        })
    }
}
