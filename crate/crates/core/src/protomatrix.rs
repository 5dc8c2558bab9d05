//! Data model of staged code design: plans, edge distributions, partitioning and
//! lifting matrices, coupled protographs and lifted parity-check matrices.

use crate::error::{Error, Result};
use crate::matrix::{BinMatrix, IntMatrix};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;

const MASS_TOL: f64 = 1e-9;

/// One design stage of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub index: usize,
    /// Number of new memory units added by this stage.
    pub m_new: usize,
    /// Probability mass of the new part of the base matrix.
    pub r_new: f64,
    /// Memory inherited from earlier stages (0 at stage 0).
    pub m_fixed: usize,
    /// Mass inherited from earlier stages (0 at stage 0).
    pub r_fixed: f64,
}

impl StageSpec {
    /// Total memory of the code designed at this stage.
    pub fn memory(&self) -> usize {
        self.m_fixed + self.m_new
    }

    /// Fraction of the all-one base matrix used by this stage's code.
    pub fn mass(&self) -> f64 {
        self.r_fixed + self.r_new
    }

    /// Component indices owned by the new part of this stage.
    pub fn window(&self) -> RangeInclusive<usize> {
        if self.index == 0 {
            0..=self.m_new
        } else {
            self.m_fixed + 1..=self.m_fixed + self.m_new
        }
    }
}

/// Global code parameters plus the per-stage memory/mass schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPlan {
    pub gamma: usize,
    pub kappa: usize,
    pub z: usize,
    pub coupling: usize,
    pub stages: Vec<StageSpec>,
}

impl DesignPlan {
    /// Builds a plan, deriving the fixed memory and mass of each stage.
    pub fn new(
        gamma: usize,
        kappa: usize,
        z: usize,
        coupling: usize,
        m_new: &[usize],
        r_new: &[f64],
    ) -> Result<Self> {
        Self::check_shape(gamma, kappa, z, coupling)?;
        if m_new.is_empty() {
            return Err(Error::InvalidPlan("at least one stage is required".into()));
        }
        if m_new.len() != r_new.len() {
            return Err(Error::InvalidPlan(format!(
                "{} memory increments but {} stage masses",
                m_new.len(),
                r_new.len()
            )));
        }
        if let Some(d) = m_new.iter().skip(1).position(|&m| m == 0) {
            return Err(Error::InvalidPlan(format!("stage {} adds no memory", d + 1)));
        }
        if let Some(d) = r_new.iter().position(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidPlan(format!("stage {d} mass must be positive")));
        }
        let total: f64 = r_new.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidPlan(format!(
                "stage masses sum to {total}, expected 1"
            )));
        }
        let mut stages = Vec::with_capacity(m_new.len());
        let (mut m_fixed, mut r_fixed) = (0usize, 0.0f64);
        for (index, (&m, &r)) in m_new.iter().zip(r_new).enumerate() {
            stages.push(StageSpec {
                index,
                m_new: m,
                r_new: r,
                m_fixed,
                r_fixed,
            });
            m_fixed += m;
            r_fixed += r;
        }
        Ok(DesignPlan {
            gamma,
            kappa,
            z,
            coupling,
            stages,
        })
    }

    pub(crate) fn check_shape(gamma: usize, kappa: usize, z: usize, coupling: usize) -> Result<()> {
        if gamma < 4 {
            return Err(Error::InvalidPlan(format!("gamma = {gamma} must be at least 4")));
        }
        if kappa <= gamma {
            return Err(Error::InvalidPlan(format!(
                "kappa = {kappa} must exceed gamma = {gamma}"
            )));
        }
        if z < 2 {
            return Err(Error::InvalidPlan(format!("lifting size z = {z} must be at least 2")));
        }
        if coupling < 1 {
            return Err(Error::InvalidPlan("coupling length must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of design stages minus one.
    pub fn last_stage(&self) -> usize {
        self.stages.len() - 1
    }

    /// Full memory `m_s` of the final code.
    pub fn total_memory(&self) -> usize {
        self.stages.iter().map(|s| s.m_new).sum()
    }

    pub fn stage(&self, d: usize) -> Result<&StageSpec> {
        self.stages
            .get(d)
            .ok_or_else(|| Error::InvalidPlan(format!("no stage {d} (plan has {})", self.stages.len())))
    }

    pub fn memory_schedule(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.m_new).collect()
    }
}

/// Probability vector over a contiguous range of component indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDistribution {
    pub offset: usize,
    pub weights: Vec<f64>,
}

impl EdgeDistribution {
    /// Validated constructor: weights must be finite, non-negative, and sum to 1.
    pub fn new(offset: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty distribution".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(format!(
                "distribution has negative or non-finite weights: {weights:?}"
            )));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!("distribution sums to {s}")));
        }
        Ok(EdgeDistribution { offset, weights })
    }

    /// Rescales arbitrary non-negative weights to a distribution.
    pub fn normalized(offset: usize, weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidInput("weights do not have positive mass".into()));
        }
        Self::new(offset, weights.into_iter().map(|w| w / s).collect())
    }

    pub fn uniform(offset: usize, len: usize) -> Self {
        EdgeDistribution {
            offset,
            weights: vec![1.0 / len as f64; len],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// One past the largest component index covered.
    pub fn end(&self) -> usize {
        self.offset + self.weights.len()
    }

    /// Largest component index covered.
    pub fn max_index(&self) -> usize {
        self.end() - 1
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Combines the fixed distribution `p` with the new distribution `q` into the
/// distribution of the whole stage code, which feeds the next stage as its `p`.
pub fn assemble_stage_distribution(
    p: &EdgeDistribution,
    q: &EdgeDistribution,
    r_fixed: f64,
    r_new: f64,
) -> Result<EdgeDistribution> {
    if q.offset != p.end() {
        return Err(Error::DistributionRange(format!(
            "p covers {}..={}, q starts at {}",
            p.offset,
            p.max_index(),
            q.offset
        )));
    }
    if !(r_fixed > 0.0 && r_new > 0.0) {
        return Err(Error::InvalidInput("stage masses must be positive".into()));
    }
    let total = r_fixed + r_new;
    let mut weights = Vec::with_capacity(p.len() + q.len());
    weights.extend(p.weights.iter().map(|w| w * r_fixed / total));
    weights.extend(q.weights.iter().map(|w| w * r_new / total));
    // Remove accumulated rounding so the result is a distribution to machine precision.
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Ok(EdgeDistribution {
        offset: p.offset,
        weights,
    })
}

/// Length and exact design rate of the code built at stage `d`.
pub fn code_rate_and_length(plan: &DesignPlan, d: usize) -> Result<(usize, Ratio<i64>)> {
    let stage = plan.stage(d)?;
    Ok((
        plan.kappa * plan.z * plan.coupling,
        design_rate(plan.gamma, plan.kappa, plan.coupling, stage.memory()),
    ))
}

/// `1 - gamma (L + m) / (kappa L)` as an exact rational.
pub fn design_rate(gamma: usize, kappa: usize, coupling: usize, memory: usize) -> Ratio<i64> {
    let num = (gamma * (coupling + memory)) as i64;
    let den = (kappa * coupling) as i64;
    Ratio::from_integer(1) - Ratio::new(num, den)
}

/// Renders a rate to four decimals.
pub fn format_rate(rate: Ratio<i64>) -> String {
    format!("{:.4}", *rate.numer() as f64 / *rate.denom() as f64)
}

/// Partitioning matrix `K` and lifting matrix `T` of one stage, with the mask of
/// entries inherited from earlier stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMatrices {
    pub k: IntMatrix,
    pub t: IntMatrix,
    pub fixed_mask: Vec<bool>,
    /// Largest component index of the inherited part (`None` at stage 0).
    pub m_fixed: Option<usize>,
    /// Memory of the stage code.
    pub memory: usize,
    pub z: usize,
}

impl StageMatrices {
    pub fn new(
        k: IntMatrix,
        t: IntMatrix,
        fixed_mask: Vec<bool>,
        m_fixed: Option<usize>,
        memory: usize,
        z: usize,
    ) -> Result<Self> {
        let s = StageMatrices {
            k,
            t,
            fixed_mask,
            m_fixed,
            memory,
            z,
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks the sentinel, range, and variable-degree invariants.
    pub fn validate(&self) -> Result<()> {
        let (g, c) = self.k.dims();
        if self.t.dims() != (g, c) || self.fixed_mask.len() != g * c {
            return Err(Error::DimensionMismatch {
                expected: format!("{g}x{c}"),
                got: format!("T {:?}, mask {}", self.t.dims(), self.fixed_mask.len()),
            });
        }
        for i in 0..g {
            for j in 0..c {
                let (kv, tv) = (*self.k.get(i, j), *self.t.get(i, j));
                if (kv < 0) != (tv < 0) {
                    return Err(Error::InvalidInput(format!(
                        "K and T disagree on assignment at ({i}, {j})"
                    )));
                }
                if kv < -1 || kv > self.memory as i32 || tv >= self.z as i32 || tv < -1 {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) out of range: K = {kv}, T = {tv}"
                    )));
                }
                let fixed = self.fixed_mask[i * c + j];
                if kv >= 0 {
                    match self.m_fixed {
                        Some(mf) if fixed && kv > mf as i32 => {
                            return Err(Error::InvalidInput(format!(
                                "fixed entry ({i}, {j}) = {kv} exceeds m_f = {mf}"
                            )))
                        }
                        Some(mf) if !fixed && kv <= mf as i32 => {
                            return Err(Error::InvalidInput(format!(
                                "optimizable entry ({i}, {j}) = {kv} is not above m_f = {mf}"
                            )))
                        }
                        None if fixed => {
                            return Err(Error::InvalidInput("stage 0 has no fixed entries".into()))
                        }
                        _ => {}
                    }
                } else if fixed {
                    return Err(Error::InvalidInput(format!("fixed entry ({i}, {j}) is unassigned")));
                }
            }
        }
        let weights = self.k.support().column_weights();
        if let Some((j, w)) = weights.iter().enumerate().find(|(_, &w)| w < 3) {
            return Err(Error::InvalidInput(format!(
                "column {j} has degree {w} in the stage base matrix (minimum 3)"
            )));
        }
        Ok(())
    }

    pub fn base(&self) -> BinMatrix {
        self.k.support()
    }
}

/// Splits a partitioning matrix into its `memory + 1` component indicator matrices.
pub fn components_from_partition(k: &IntMatrix, memory: usize) -> Result<Vec<BinMatrix>> {
    let (g, c) = k.dims();
    let mut comps = vec![BinMatrix::filled(g, c, 0); memory + 1];
    for i in 0..g {
        for j in 0..c {
            let v = *k.get(i, j);
            if v > memory as i32 {
                return Err(Error::InvalidInput(format!(
                    "K({i}, {j}) = {v} exceeds memory {memory}"
                )));
            }
            if v >= 0 {
                comps[v as usize].set(i, j, 1);
            }
        }
    }
    Ok(comps)
}

/// Couples components `H_0..H_m` `coupling` times along the diagonal band.
///
/// Replica `r` holds `H_k` at block-row `r + k` and block-column `r`.
pub fn expand_coupled_protograph(components: &[BinMatrix], coupling: usize) -> Result<BinMatrix> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidInput("no components".into()))?;
    if coupling < 1 {
        return Err(Error::InvalidInput("coupling length must be at least 1".into()));
    }
    let (g, c) = first.dims();
    if let Some(bad) = components.iter().find(|h| h.dims() != (g, c)) {
        return Err(Error::DimensionMismatch {
            expected: format!("{g}x{c}"),
            got: format!("{}x{}", bad.rows(), bad.cols()),
        });
    }
    for i in 0..g {
        for j in 0..c {
            let total: u32 = components.iter().map(|h| u32::from(*h.get(i, j))).sum();
            if total > 1 {
                return Err(Error::Disjointness { row: i, col: j });
            }
        }
    }
    let m = components.len() - 1;
    let mut out = BinMatrix::filled(g * (coupling + m), c * coupling, 0);
    for r in 0..coupling {
        for (k, h) in components.iter().enumerate() {
            for i in 0..g {
                for j in 0..c {
                    if *h.get(i, j) != 0 {
                        out.set((r + k) * g + i, r * c + j, 1);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A `z x z` circulant placed at a protograph position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circulant {
    pub row_block: usize,
    pub col_block: usize,
    pub power: usize,
}

/// Sparse lifted parity-check matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QcCode {
    pub z: usize,
    pub proto_rows: usize,
    pub proto_cols: usize,
    /// Protograph columns per replica, when the code is a coupled code.
    pub replica_cols: Option<usize>,
    pub circulants: Vec<Circulant>,
    col_adj: Vec<Vec<u32>>,
    row_adj: Vec<Vec<u32>>,
}

impl QcCode {
    /// Builds a code from explicit per-column row lists.
    pub fn from_columns(n_rows: usize, col_adj: Vec<Vec<u32>>) -> Result<Self> {
        let mut row_adj = vec![Vec::new(); n_rows];
        for (j, col) in col_adj.iter().enumerate() {
            for &i in col {
                let i = i as usize;
                if i >= n_rows {
                    return Err(Error::DimensionMismatch {
                        expected: format!("row index < {n_rows}"),
                        got: i.to_string(),
                    });
                }
                row_adj[i].push(j as u32);
            }
        }
        for r in &mut row_adj {
            r.sort_unstable();
            r.dedup();
        }
        let mut col_adj = col_adj;
        for c in &mut col_adj {
            c.sort_unstable();
            c.dedup();
        }
        Ok(QcCode {
            z: 1,
            proto_rows: n_rows,
            proto_cols: col_adj.len(),
            replica_cols: None,
            circulants: Vec::new(),
            col_adj,
            row_adj,
        })
    }

    pub fn from_dense(h: &BinMatrix) -> Self {
        let cols = (0..h.cols())
            .map(|j| {
                (0..h.rows())
                    .filter(|&i| *h.get(i, j) != 0)
                    .map(|i| i as u32)
                    .collect()
            })
            .collect();
        QcCode::from_columns(h.rows(), cols).expect("indices in range")
    }

    pub fn n_rows(&self) -> usize {
        self.row_adj.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_adj.len()
    }

    pub fn nnz(&self) -> usize {
        self.col_adj.iter().map(Vec::len).sum()
    }

    pub fn col(&self, j: usize) -> &[u32] {
        &self.col_adj[j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.row_adj[i]
    }

    pub fn columns(&self) -> &[Vec<u32>] {
        &self.col_adj
    }

    pub fn rows_adj(&self) -> &[Vec<u32>] {
        &self.row_adj
    }

    pub fn to_dense(&self) -> BinMatrix {
        let mut h = BinMatrix::filled(self.n_rows(), self.n_cols(), 0);
        for (j, col) in self.col_adj.iter().enumerate() {
            for &i in col {
                h.set(i as usize, j, 1);
            }
        }
        h
    }

    /// Syndrome weight of a hard-decision word.
    pub fn unsatisfied_checks(&self, word: &[u8]) -> usize {
        self.row_adj
            .iter()
            .filter(|row| row.iter().fold(0u8, |acc, &j| acc ^ word[j as usize]) != 0)
            .count()
    }
}

/// Replaces every one of `protograph` by the circulant `P^t` (`P` is the identity
/// with columns shifted one position to the left), with `t` read from `powers`.
pub fn lift(protograph: &BinMatrix, powers: &IntMatrix, z: usize) -> Result<QcCode> {
    if protograph.dims() != powers.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", protograph.rows(), protograph.cols()),
            got: format!("{}x{}", powers.rows(), powers.cols()),
        });
    }
    if z == 0 {
        return Err(Error::InvalidInput("lifting size must be positive".into()));
    }
    let (pr, pc) = protograph.dims();
    let mut circulants = Vec::new();
    let mut col_adj = vec![Vec::new(); pc * z];
    for bj in 0..pc {
        for bi in 0..pr {
            if *protograph.get(bi, bj) == 0 {
                continue;
            }
            let t = *powers.get(bi, bj) as i64;
            if t < 0 || t >= z as i64 {
                return Err(Error::PowerOutOfRange {
                    row: bi,
                    col: bj,
                    power: t,
                    z,
                });
            }
            let t = t as usize;
            circulants.push(Circulant {
                row_block: bi,
                col_block: bj,
                power: t,
            });
            // Row a of P^t is connected to column a - t.
            for c in 0..z {
                col_adj[bj * z + c].push((bi * z + (c + t) % z) as u32);
            }
        }
    }
    let mut code = QcCode::from_columns(pr * z, col_adj)?;
    code.z = z;
    code.proto_rows = pr;
    code.proto_cols = pc;
    code.circulants = circulants;
    Ok(code)
}

/// Coupled protograph of a stage code built directly from its partitioning matrix.
pub fn coupled_protograph_from_partition(k: &IntMatrix, coupling: usize) -> Result<BinMatrix> {
    let memory = k.as_slice().iter().copied().max().unwrap_or(-1).max(0) as usize;
    expand_coupled_protograph(&components_from_partition(k, memory)?, coupling)
}

/// Lifted parity-check matrix of a time-invariant coupled code: every replica
/// reuses the circulant power of its base entry.
pub fn lift_stage(k: &IntMatrix, t: &IntMatrix, z: usize, coupling: usize) -> Result<QcCode> {
    if k.dims() != t.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", k.dims()),
            got: format!("{:?}", t.dims()),
        });
    }
    let (g, c) = k.dims();
    let proto = coupled_protograph_from_partition(k, coupling)?;
    let mut powers = IntMatrix::filled(proto.rows(), proto.cols(), 0);
    for r in 0..coupling {
        for i in 0..g {
            for j in 0..c {
                let kv = *k.get(i, j);
                if kv >= 0 {
                    let tv = *t.get(i, j);
                    if tv < 0 {
                        return Err(Error::InvalidInput(format!(
                            "T({i}, {j}) unassigned while K({i}, {j}) = {kv}"
                        )));
                    }
                    powers.set((r + kv as usize) * g + i, r * c + j, tv);
                }
            }
        }
    }
    let mut code = lift(&proto, &powers, z)?;
    code.replica_cols = Some(c);
    Ok(code)
}

/// Fraction of protograph edges saved by sharing one nested family of base
/// matrices instead of keeping a distinct code per stage.
pub fn hardware_sharing_savings(bases: &[BinMatrix]) -> Result<f64> {
    let last = bases
        .last()
        .ok_or_else(|| Error::InvalidInput("no base matrices".into()))?;
    for (d, pair) in bases.windows(2).enumerate() {
        let (prev, next) = (&pair[0], &pair[1]);
        if prev.dims() != next.dims() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", prev.dims()),
                got: format!("{:?}", next.dims()),
            });
        }
        for i in 0..prev.rows() {
            for j in 0..prev.cols() {
                if *prev.get(i, j) != 0 && *next.get(i, j) == 0 {
                    return Err(Error::NotNested {
                        stage: d + 1,
                        row: i,
                        col: j,
                    });
                }
            }
        }
    }
    let total: usize = bases.iter().map(BinMatrix::count_ones).sum();
    if total == 0 {
        return Err(Error::InvalidInput("base matrices are empty".into()));
    }
    Ok(1.0 - last.count_ones() as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn plan_recursions() {
        let plan = DesignPlan::new(7, 35, 29, 16, &[8, 3, 4], &[0.5, 0.2, 0.3]).unwrap();
        assert_eq!(plan.total_memory(), 15);
        let s2 = &plan.stages[2];
        assert_eq!(s2.m_fixed, 11);
        assert!(approx(s2.r_fixed, 0.7, 1e-12));
        assert_eq!(s2.memory(), 15);
        assert_eq!(s2.window(), 12..=15);
        assert_eq!(plan.stages[0].window(), 0..=8);
        assert_eq!(plan.stages[1].window(), 9..=11);
    }

    #[test]
    fn plan_rejects_bad_shapes() {
        assert!(DesignPlan::new(4, 4, 7, 5, &[2], &[1.0]).is_err());
        assert!(DesignPlan::new(3, 8, 7, 5, &[2], &[1.0]).is_err());
        assert!(DesignPlan::new(4, 8, 7, 5, &[2, 0], &[0.5, 0.5]).is_err());
        assert!(DesignPlan::new(4, 8, 7, 5, &[2, 1], &[0.5, 0.4]).is_err());
        assert!(DesignPlan::new(4, 8, 7, 5, &[2, 1], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn coupled_memory_zero_is_block_diagonal() {
        let h = expand_coupled_protograph(&[BinMatrix::ones(2, 3)], 3).unwrap();
        assert_eq!(h.dims(), (6, 9));
        for i in 0..6 {
            for j in 0..9 {
                assert_eq!(*h.get(i, j), u8::from(i / 2 == j / 3));
            }
        }
    }

    #[test]
    fn coupled_hand_placement() {
        let h0 = BinMatrix::from_vec(2, 2, vec![1, 0, 0, 1]).unwrap();
        let h1 = BinMatrix::from_vec(2, 2, vec![0, 1, 1, 0]).unwrap();
        let h = expand_coupled_protograph(&[h0, h1], 2).unwrap();
        #[rustfmt::skip]
        let expected = vec![
            1, 0, 0, 0,
            0, 1, 0, 0,
            0, 1, 1, 0,
            1, 0, 0, 1,
            0, 0, 0, 1,
            0, 0, 1, 0,
        ];
        assert_eq!(h.as_slice(), expected.as_slice());
    }

    #[test]
    fn coupled_size_for_group_one() {
        let mut comps = vec![BinMatrix::filled(7, 23, 0); 12];
        for j in 0..23 {
            for i in 0..7 {
                comps[(i + j) % 12].set(i, j, 1);
            }
        }
        let h = expand_coupled_protograph(&comps, 12).unwrap();
        assert_eq!(h.dims(), (161, 276));
        assert_eq!(h.count_ones(), 12 * 161);
    }

    #[test]
    fn overlapping_components_rejected() {
        let a = BinMatrix::ones(2, 2);
        let b = BinMatrix::from_vec(2, 2, vec![0, 0, 0, 1]).unwrap();
        match expand_coupled_protograph(&[a, b], 2) {
            Err(Error::Disjointness { row: 1, col: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lift_single_circulants() {
        let p = BinMatrix::ones(1, 1);
        let id = lift(&p, &IntMatrix::filled(1, 1, 0), 3).unwrap().to_dense();
        assert_eq!(id.as_slice(), &[1, 0, 0, 0, 1, 0, 0, 0, 1]);
        // Columns of the identity shifted one to the left: column c holds e_{c+1}.
        let sh = lift(&p, &IntMatrix::filled(1, 1, 1), 3).unwrap().to_dense();
        assert_eq!(sh.as_slice(), &[0, 0, 1, 1, 0, 0, 0, 1, 0]);
    }

    #[test]
    fn lift_rejects_bad_power() {
        let p = BinMatrix::ones(1, 2);
        let t = IntMatrix::from_vec(1, 2, vec![0, 3]).unwrap();
        assert!(matches!(lift(&p, &t, 3), Err(Error::PowerOutOfRange { .. })));
        assert!(lift(&p, &IntMatrix::filled(2, 2, 0), 3).is_err());
    }

    #[test]
    fn lift_nnz_and_weights() {
        let k = IntMatrix::from_vec(3, 4, vec![0, 1, -1, 0, 1, 0, 0, -1, 0, 0, 1, 1]).unwrap();
        let t = k.map(|&v| if v < 0 { -1 } else { 2 });
        let code = lift_stage(&k, &t, 5, 4).unwrap();
        let base_ones = k.support().count_ones();
        assert_eq!(code.nnz(), 5 * 4 * base_ones);
        assert_eq!(code.n_rows(), 3 * (4 + 1) * 5);
        assert_eq!(code.n_cols(), 4 * 4 * 5);
        let w = k.support().column_weights();
        for (j, col) in code.columns().iter().enumerate() {
            assert_eq!(col.len(), w[(j / 5) % 4]);
        }
    }

    #[test]
    fn rates_and_lengths() {
        let g1 = DesignPlan::new(7, 23, 23, 12, &[6, 2, 3], &[0.5, 0.2, 0.3]).unwrap();
        let rates: Vec<String> = (0..3)
            .map(|d| format_rate(code_rate_and_length(&g1, d).unwrap().1))
            .collect();
        assert_eq!(rates, ["0.5435", "0.4928", "0.4167"]);
        assert_eq!(code_rate_and_length(&g1, 0).unwrap().0, 6348);
        let g2 = DesignPlan::new(7, 35, 29, 16, &[8, 3, 4], &[0.5, 0.2, 0.3]).unwrap();
        let rates: Vec<String> = (0..3)
            .map(|d| format_rate(code_rate_and_length(&g2, d).unwrap().1))
            .collect();
        assert_eq!(rates, ["0.7000", "0.6625", "0.6125"]);
        assert_eq!(code_rate_and_length(&g2, 2).unwrap().0, 16240);
        // kappa L / gamma - L = 10 for (4, 8, L = 10) gives rate exactly zero.
        assert_eq!(design_rate(4, 8, 10, 10), Ratio::from_integer(0));
    }

    #[test]
    fn assemble_examples() {
        let u = assemble_stage_distribution(
            &EdgeDistribution::new(0, vec![1.0]).unwrap(),
            &EdgeDistribution::new(1, vec![1.0]).unwrap(),
            0.5,
            0.5,
        )
        .unwrap();
        assert_eq!(u.weights, vec![0.5, 0.5]);
        let u = assemble_stage_distribution(
            &EdgeDistribution::uniform(0, 3),
            &EdgeDistribution::uniform(3, 2),
            0.6,
            0.4,
        )
        .unwrap();
        for w in &u.weights {
            assert!(approx(*w, 0.2, 1e-15));
        }
        assert!(assemble_stage_distribution(
            &EdgeDistribution::uniform(0, 3),
            &EdgeDistribution::uniform(2, 2),
            0.5,
            0.5
        )
        .is_err());
    }

    #[test]
    fn savings_examples() {
        let b = BinMatrix::ones(3, 4);
        assert!(approx(hardware_sharing_savings(&[b.clone(), b.clone()]).unwrap(), 0.5, 1e-15));
        let small = BinMatrix::from_vec(1, 2, vec![1, 0]).unwrap();
        let big = BinMatrix::from_vec(1, 2, vec![0, 1]).unwrap();
        assert!(matches!(
            hardware_sharing_savings(&[small, big]),
            Err(Error::NotNested { .. })
        ));
    }

    #[test]
    fn stage_matrix_invariants() {
        let k = IntMatrix::from_vec(3, 2, vec![0, 1, 1, 2, 2, 0]).unwrap();
        let t = IntMatrix::from_vec(3, 2, vec![0, 1, 1, 2, 2, 0]).unwrap();
        let mask = vec![true, true, true, false, false, true];
        assert!(StageMatrices::new(k.clone(), t.clone(), mask.clone(), Some(1), 2, 3).is_ok());
        let mut bad_t = t.clone();
        bad_t.set(0, 0, -1);
        assert!(StageMatrices::new(k.clone(), bad_t, mask.clone(), Some(1), 2, 3).is_err());
        let mut thin = k.clone();
        thin.set(0, 0, -1);
        let mut thin_t = t.clone();
        thin_t.set(0, 0, -1);
        let mut m2 = mask.clone();
        m2[0] = false;
        assert!(StageMatrices::new(thin, thin_t, m2, Some(1), 2, 3).is_err());
    }

    #[test]
    fn partition_round_trip() {
        let k = IntMatrix::from_vec(2, 3, vec![0, 2, -1, 1, 0, 2]).unwrap();
        let comps = components_from_partition(&k, 2).unwrap();
        let mut sum = BinMatrix::filled(2, 3, 0);
        for c in &comps {
            for i in 0..2 {
                for j in 0..3 {
                    let v = *sum.get(i, j) + *c.get(i, j);
                    sum.set(i, j, v);
                }
            }
        }
        assert_eq!(sum, k.support());
    }
}
