//! Chain initialization, the full-memory reference partition, and the matrices
//! derived from it by thresholding.

use super::{mc2_optimize, Mc2Config, Mc2Result, Phase, StageContext};
use crate::cyclecalc::{enumerate_candidates_masked, is_active_partitioned};
use crate::error::{Error, Result};
use crate::matrix::{BinMatrix, IntMatrix};
use crate::protomatrix::{DesignPlan, EdgeDistribution};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rounds `weights * total` to integers summing to `total`: floors first, then
/// one extra unit to the largest fractional parts (lowest index on ties).
pub fn largest_remainder_counts(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &c in order.iter().take(total.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Random partition of the optimizable entries whose component counts follow
/// `q` by largest-remainder rounding. Fixed entries keep their values. When the
/// context carries degree thresholds, values are swapped between columns until
/// every column meets them; if no swap helps, a value is lowered.
pub fn init_partition_state(ctx: &StageContext, q: &EdgeDistribution, seed: u64) -> Result<IntMatrix> {
    let (lo, hi) = ctx.values;
    if q.offset as i32 != lo || q.end() as i32 != hi + 1 {
        return Err(Error::DistributionRange(format!(
            "distribution covers {}..{}, stage window is {lo}..={hi}",
            q.offset,
            q.end()
        )));
    }
    let opt = ctx.optimizable();
    if q.len() > opt.len() {
        return Err(Error::Infeasible(format!(
            "{} components but only {} optimizable entries",
            q.len(),
            opt.len()
        )));
    }
    let counts = largest_remainder_counts(&q.weights, opt.len());
    let mut values: Vec<i32> = Vec::with_capacity(opt.len());
    for (c, &n) in counts.iter().enumerate() {
        values.extend(std::iter::repeat_n(lo + c as i32, n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values.shuffle(&mut rng);
    let mut x = IntMatrix::filled(ctx.gamma, ctx.kappa, -1);
    for e in 0..ctx.support.len() {
        if ctx.fixed[e] {
            x.as_mut_slice()[e] = ctx.fixed_values.as_slice()[e];
        }
    }
    for (&e, &v) in opt.iter().zip(&values) {
        x.as_mut_slice()[e] = v;
    }
    repair_degrees(ctx, &mut x, &mut rng)?;
    Ok(x)
}

fn column_count(ctx: &StageContext, x: &IntMatrix, j: usize, thr: i32) -> usize {
    (0..ctx.gamma)
        .filter(|&i| {
            let v = *x.get(i, j);
            v >= 0 && v <= thr
        })
        .count()
}

fn repair_degrees(ctx: &StageContext, x: &mut IntMatrix, rng: &mut ChaCha8Rng) -> Result<()> {
    let kappa = ctx.kappa;
    let opt = ctx.optimizable();
    let limit = 4 * ctx.support.len() * ctx.vn_thresholds.len().max(1);
    for _ in 0..=limit {
        let deficit = ctx.vn_thresholds.iter().find_map(|&thr| {
            (0..kappa)
                .find(|&j| column_count(ctx, x, j, thr) < 3)
                .map(|j| (thr, j))
        });
        let Some((thr, j)) = deficit else {
            return Ok(());
        };
        let mut moves = Vec::new();
        for &a in opt.iter().filter(|&&e| e % kappa == j && x.as_slice()[e] > thr) {
            let va = x.as_slice()[a];
            for &b in opt.iter().filter(|&&e| e % kappa != j && x.as_slice()[e] <= thr) {
                let vb = x.as_slice()[b];
                let donor = b % kappa;
                let keeps = ctx
                    .vn_thresholds
                    .iter()
                    .filter(|&&t| vb <= t && t < va)
                    .all(|&t| column_count(ctx, x, donor, t) > 3);
                if keeps {
                    moves.push((a, b));
                }
            }
        }
        if let Some(&(a, b)) = moves.choose(rng) {
            x.as_mut_slice().swap(a, b);
            continue;
        }
        // No donor column has slack: lower the smallest offending value instead,
        // shifting a little mass towards earlier components.
        let lowest = opt
            .iter()
            .copied()
            .filter(|&e| e % kappa == j && x.as_slice()[e] > thr && ctx.values.0 <= thr)
            .min_by_key(|&e| x.as_slice()[e]);
        match lowest {
            Some(e) => x.as_mut_slice()[e] = thr,
            None => {
                return Err(Error::Infeasible(format!(
                    "column {j} cannot reach 3 entries at or below component {thr}"
                )))
            }
        }
    }
    Err(Error::Infeasible("degree repair did not terminate".into()))
}

/// Lifting initialization outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftInit {
    pub t: IntMatrix,
    /// Single-entry reassignments spent after the greedy pass.
    pub attempts: usize,
}

/// Circulant powers for the new entries of a lifting context such that no
/// cycle-4 candidate active under the partition survives lifting. New entries
/// are placed greedily in random order at a least-conflicting power; remaining
/// conflicts are then repaired one entry at a time.
pub fn init_lift_state(ctx: &StageContext, seed: u64, max_attempts: usize) -> Result<LiftInit> {
    let k = ctx
        .partition
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("lifting needs a finalized partitioning matrix".into()))?;
    let z = ctx.z.unwrap_or(1) as i64;
    let kappa = ctx.kappa;
    let admit = |i: usize, j: usize| ctx.support[i * kappa + j];
    let cands: Vec<Vec<usize>> = enumerate_candidates_masked(ctx.gamma, kappa, 2, &admit)?
        .into_iter()
        .filter(|c| is_active_partitioned(c, k))
        .map(|c| c.flat_entries(kappa))
        .collect();
    let mut incidence = vec![Vec::new(); ctx.support.len()];
    for (id, c) in cands.iter().enumerate() {
        for &e in c {
            incidence[e].push(id);
        }
    }
    let mut t = IntMatrix::filled(ctx.gamma, kappa, -1);
    for e in 0..ctx.support.len() {
        if ctx.fixed[e] {
            t.as_mut_slice()[e] = ctx.fixed_values.as_slice()[e];
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Active iff every entry is assigned and the alternating sum vanishes mod z.
    let active = |t: &IntMatrix, c: &[usize]| -> bool {
        let mut s = 0i64;
        for (p, &e) in c.iter().enumerate() {
            let v = t.as_slice()[e];
            if v < 0 {
                return false;
            }
            s += if p % 2 == 0 { v as i64 } else { -(v as i64) };
        }
        s.rem_euclid(z) == 0
    };
    let conflicts = |t: &mut IntMatrix, e: usize, v: i32| -> usize {
        let old = t.as_slice()[e];
        t.as_mut_slice()[e] = v;
        let n = incidence[e].iter().filter(|&&id| active(t, &cands[id])).count();
        t.as_mut_slice()[e] = old;
        n
    };
    let best_values = |t: &mut IntMatrix, e: usize| -> Vec<i32> {
        let scores: Vec<usize> = (0..z as i32).map(|v| conflicts(t, e, v)).collect();
        let min = *scores.iter().min().expect("z >= 1");
        (0..z as i32).filter(|&v| scores[v as usize] == min).collect()
    };

    let mut order = ctx.optimizable();
    order.shuffle(&mut rng);
    for &e in &order {
        let vals = best_values(&mut t, e);
        t.as_mut_slice()[e] = *vals.choose(&mut rng).expect("nonempty");
    }

    let mut attempts = 0usize;
    loop {
        let live: Vec<usize> = (0..cands.len()).filter(|&id| active(&t, &cands[id])).collect();
        if live.is_empty() {
            return Ok(LiftInit { t, attempts });
        }
        let id = *live.choose(&mut rng).expect("nonempty");
        let free: Vec<usize> = cands[id].iter().copied().filter(|&e| !ctx.fixed[e]).collect();
        if free.is_empty() || z == 1 || attempts >= max_attempts {
            return Err(Error::BudgetExhausted(format!(
                "{} cycle-4 candidates remain active after {attempts} attempts",
                live.len()
            )));
        }
        let e = *free.choose(&mut rng).expect("nonempty");
        let v = if rng.random::<f64>() < 0.1 {
            rng.random_range(0..z as i32)
        } else {
            *best_values(&mut t, e).choose(&mut rng).expect("nonempty")
        };
        t.as_mut_slice()[e] = v;
        attempts += 1;
    }
}

/// Largest component index of each stage's code, `m_f,d + m_n,d`.
fn stage_thresholds(plan: &DesignPlan) -> Vec<i32> {
    plan.stages.iter().map(|s| s.memory() as i32).collect()
}

/// Designs the full-memory partition `K*` over `0..=m_s`, starting from `p*`
/// and keeping at least 3 entries per column at or below every stage's largest
/// component index, so each stage base matrix has minimum column degree 3.
pub fn design_reference_k_star(plan: &DesignPlan, p_star: &EdgeDistribution, cfg: &Mc2Config) -> Result<Mc2Result> {
    let m_s = plan.total_memory();
    if plan.gamma < 3 {
        return Err(Error::Infeasible("fewer than 3 rows".into()));
    }
    let (g, c) = (plan.gamma, plan.kappa);
    let ctx = StageContext::partition(&vec![true; g * c], &IntMatrix::filled(g, c, -1), 0, m_s as i32, m_s.max(1))?
        .with_vn_thresholds(stage_thresholds(plan));
    let x0 = init_partition_state(&ctx, p_star, cfg.seed)?;
    mc2_optimize(Phase::Partition, &ctx, &x0, cfg)
}

fn check_k_star(k_star: &IntMatrix, plan: &DesignPlan) -> Result<()> {
    let m_s = plan.total_memory() as i32;
    if k_star.dims() != (plan.gamma, plan.kappa) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", plan.gamma, plan.kappa),
            got: format!("{:?}", k_star.dims()),
        });
    }
    if let Some(v) = k_star.as_slice().iter().find(|&&v| v < 0 || v > m_s) {
        return Err(Error::InvalidInput(format!("K* value {v} outside 0..={m_s}")));
    }
    Ok(())
}

/// New and cumulative-fixed base matrices of stage `d`: `H_n` marks `K*`
/// values inside the stage window, `H_f` values owned by earlier stages.
pub fn derive_stage_base(k_star: &IntMatrix, plan: &DesignPlan, d: usize) -> Result<(BinMatrix, BinMatrix)> {
    check_k_star(k_star, plan)?;
    let stage = plan.stage(d)?;
    let window = stage.window();
    let (lo, hi) = (*window.start() as i32, *window.end() as i32);
    let h_n = k_star.map(|&v| (v >= lo && v <= hi) as u8);
    let h_f = k_star.map(|&v| (d > 0 && v <= stage.m_fixed as i32) as u8);
    Ok((h_n, h_f))
}

/// Straightforward truncation of the full-memory matrices to stage `d`: entries
/// of `K*` above the stage's largest component index are dropped from both.
pub fn derive_sf_baseline(
    k_star: &IntMatrix,
    t_star: &IntMatrix,
    plan: &DesignPlan,
    d: usize,
) -> Result<(IntMatrix, IntMatrix)> {
    check_k_star(k_star, plan)?;
    if t_star.dims() != k_star.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", k_star.dims()),
            got: format!("{:?}", t_star.dims()),
        });
    }
    let thr = plan.stage(d)?.memory() as i32;
    let keep: Vec<bool> = k_star.as_slice().iter().map(|&v| v <= thr).collect();
    let (g, c) = k_star.dims();
    let pick = |m: &IntMatrix| {
        let data = m.as_slice().iter().zip(&keep).map(|(&v, &k)| if k { v } else { -1 }).collect();
        IntMatrix::from_vec(g, c, data).expect("dims")
    };
    Ok((pick(k_star), pick(t_star)))
}
