//! Exact cycle counting: per-candidate activation counts, condition-based counts
//! of coupled and lifted codes, and brute-force Tanner-graph enumeration.

use super::candidates::{check_ell, is_active_lifted, is_active_partitioned, CycleCandidate};
use crate::error::{Error, Result};
use crate::matrix::IntMatrix;
use crate::protomatrix::QcCode;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Active candidate counts for cycle lengths 4, 6, 8.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActiveCounts {
    /// Active candidates per length (index 0 = cycle-4).
    pub active: [u64; 3],
    /// Candidates whose entries are all assigned, per length.
    pub assigned: [u64; 3],
    /// `sum_l w_2l * active_2l`.
    pub weighted: f64,
}

/// Counts candidates active under the partition condition.
pub fn count_active_candidates(candidates: &[CycleCandidate], k: &IntMatrix, weights: [f64; 3]) -> ActiveCounts {
    let mut out = ActiveCounts::default();
    for c in candidates {
        let slot = c.ell() - 2;
        if let Some(s) = c.alternating_sum(k) {
            out.assigned[slot] += 1;
            if s == 0 {
                out.active[slot] += 1;
            }
        }
    }
    out.weighted = (0..3).map(|s| weights[s] * out.active[s] as f64).sum();
    out
}

/// Counts candidates active under both the partition and lifting conditions.
pub fn count_active_lifted(
    candidates: &[CycleCandidate],
    k: &IntMatrix,
    t: &IntMatrix,
    z: usize,
    weights: [f64; 3],
) -> ActiveCounts {
    let mut out = ActiveCounts::default();
    for c in candidates {
        let slot = c.ell() - 2;
        if c.alternating_sum(k).is_some() && c.alternating_sum(t).is_some() {
            out.assigned[slot] += 1;
            if is_active_lifted(c, k, t, z) {
                out.active[slot] += 1;
            }
        }
    }
    out.weighted = (0..3).map(|s| weights[s] * out.active[s] as f64).sum();
    out
}

/// Candidate-level partition activity check kept for symmetry with the lifted API.
pub fn candidate_active(c: &CycleCandidate, k: &IntMatrix, lift: Option<(&IntMatrix, usize)>) -> bool {
    match lift {
        Some((t, z)) => is_active_lifted(c, k, t, z),
        None => is_active_partitioned(c, k),
    }
}

/// Exact number of simple cycles of length `2 ell` in the Tanner graph of the
/// coupled code with partitioning matrix `k` (and lifting `t` modulo `z` when
/// given), coupled `coupling` times.
///
/// Every cycle projects onto a closed non-backtracking walk in the base matrix;
/// walks are enumerated from each starting column, and a walk contributes one
/// rooted traversal per replica placement (times `z` offsets) when it closes in
/// both the replica and circulant coordinates and visits distinct nodes. Each
/// cycle has `2 ell` rooted traversals starting at a variable node.
pub fn coupled_cycle_count(
    k: &IntMatrix,
    lift: Option<(&IntMatrix, usize)>,
    coupling: usize,
    ell: usize,
) -> Result<u64> {
    check_ell(ell)?;
    if let Some((t, z)) = lift {
        if t.dims() != k.dims() || z == 0 {
            return Err(Error::InvalidInput("lifting matrix does not match K".into()));
        }
    }
    let (gamma, kappa) = k.dims();
    let ctx = WalkCtx {
        k,
        lift,
        gamma,
        kappa,
        ell,
        coupling: coupling as i64,
    };
    let traversals: u64 = (0..kappa)
        .into_par_iter()
        .map(|j1| {
            if ell == 4 {
                return ctx.meet_in_middle(j1);
            }
            let mut st = WalkState::default();
            st.cols[0] = j1;
            ctx.extend_from_col(&mut st, 0)
        })
        .sum();
    let per_cycle = 2 * ell as u64;
    debug_assert_eq!(traversals % per_cycle, 0);
    Ok(traversals / per_cycle)
}

struct WalkCtx<'a> {
    k: &'a IntMatrix,
    lift: Option<(&'a IntMatrix, usize)>,
    gamma: usize,
    kappa: usize,
    ell: usize,
    coupling: i64,
}

/// Half of a closed cycle-8 walk: two check nodes `(row, block, offset)` and the
/// variable nodes `(column, replica, offset)` reached after each.
struct Half {
    c: [(usize, i64, i64); 2],
    v1: (usize, i64, i64),
    v2: (usize, i64, i64),
}

#[derive(Default)]
struct WalkState {
    cols: [usize; 4],
    rows: [usize; 4],
    // Variable node coordinates (replica, offset) and check node coordinates.
    vr: [i64; 5],
    vo: [i64; 5],
    cr: [i64; 4],
    co: [i64; 4],
}

impl WalkCtx<'_> {
    #[inline]
    fn kv(&self, i: usize, j: usize) -> i64 {
        *self.k.get(i, j) as i64
    }

    #[inline]
    fn tv(&self, i: usize, j: usize) -> i64 {
        match self.lift {
            Some((t, _)) => *t.get(i, j) as i64,
            None => 0,
        }
    }

    #[inline]
    fn modulus(&self) -> i64 {
        self.lift.map_or(1, |(_, z)| z as i64)
    }

    /// Steps from variable node `s` (column `cols[s]`) to a check node in row `i`.
    fn extend_from_col(&self, st: &mut WalkState, s: usize) -> u64 {
        let j = st.cols[s];
        let z = self.modulus();
        let mut total = 0;
        for i in 0..self.gamma {
            if s > 0 && i == st.rows[s - 1] {
                continue;
            }
            if self.kv(i, j) < 0 {
                continue;
            }
            let cr = st.vr[s] + self.kv(i, j);
            let co = (st.vo[s] + self.tv(i, j)).rem_euclid(z);
            if (0..s).any(|p| st.rows[p] == i && st.cr[p] == cr && st.co[p] == co) {
                continue;
            }
            st.rows[s] = i;
            st.cr[s] = cr;
            st.co[s] = co;
            total += self.extend_from_row(st, s);
        }
        total
    }

    /// Steps from check node `s` (row `rows[s]`) to the next variable node.
    fn extend_from_row(&self, st: &mut WalkState, s: usize) -> u64 {
        let i = st.rows[s];
        let z = self.modulus();
        let last = s + 1 == self.ell;
        let mut total = 0;
        for j in 0..self.kappa {
            if j == st.cols[s] || self.kv(i, j) < 0 {
                continue;
            }
            let vr = st.cr[s] - self.kv(i, j);
            let vo = (st.co[s] - self.tv(i, j)).rem_euclid(z);
            if last {
                // Must return to the starting variable node without backtracking.
                if j == st.cols[0] && vr == 0 && vo == 0 && i != st.rows[0] {
                    st.vr[s + 1] = vr;
                    total += self.placements(st) * self.modulus() as u64;
                }
                continue;
            }
            if (0..=s).any(|p| st.cols[p] == j && st.vr[p] == vr && st.vo[p] == vo) {
                continue;
            }
            st.cols[s + 1] = j;
            st.vr[s + 1] = vr;
            st.vo[s + 1] = vo;
            if self.span(st, s + 1) >= self.coupling {
                continue;
            }
            total += self.extend_from_col(st, s + 1);
        }
        total
    }

    /// Cycle-8 traversals from column `j0`: a closed walk splits at its third
    /// variable node into two half-walks from the start, matched on that node.
    fn meet_in_middle(&self, j0: usize) -> u64 {
        let z = self.modulus();
        let mut halves: Vec<Half> = Vec::new();
        for i0 in 0..self.gamma {
            if self.kv(i0, j0) < 0 {
                continue;
            }
            let c0 = (i0, self.kv(i0, j0), self.tv(i0, j0).rem_euclid(z));
            for j1 in (0..self.kappa).filter(|&j| j != j0 && self.kv(i0, j) >= 0) {
                let v1 = (j1, c0.1 - self.kv(i0, j1), (c0.2 - self.tv(i0, j1)).rem_euclid(z));
                if (v1.0, v1.1, v1.2) == (j0, 0, 0) {
                    continue;
                }
                for i1 in (0..self.gamma).filter(|&i| i != i0 && self.kv(i, j1) >= 0) {
                    let c1 = (i1, v1.1 + self.kv(i1, j1), (v1.2 + self.tv(i1, j1)).rem_euclid(z));
                    for j2 in (0..self.kappa).filter(|&j| j != j1 && self.kv(i1, j) >= 0) {
                        let v2 = (j2, c1.1 - self.kv(i1, j2), (c1.2 - self.tv(i1, j2)).rem_euclid(z));
                        if v2 == (j0, 0, 0) || v2 == v1 {
                            continue;
                        }
                        halves.push(Half { c: [c0, c1], v1, v2 });
                    }
                }
            }
        }
        halves.sort_unstable_by_key(|h| h.v2);
        let mut total = 0u64;
        for group in halves.chunk_by(|a, b| a.v2 == b.v2) {
            for a in group {
                for b in group {
                    if a.c[0].0 == b.c[0].0 || a.c[1].0 == b.c[1].0 || a.v1 == b.v1 {
                        continue;
                    }
                    if a.c.iter().any(|x| b.c.contains(x)) {
                        continue;
                    }
                    let reps = [0, a.v1.1, a.v2.1, b.v1.1];
                    let span = reps.iter().max().unwrap() - reps.iter().min().unwrap();
                    total += (self.coupling - span).max(0) as u64 * z as u64;
                }
            }
        }
        total
    }

    fn span(&self, st: &WalkState, upto: usize) -> i64 {
        let lo = st.vr[..=upto].iter().min().unwrap();
        let hi = st.vr[..=upto].iter().max().unwrap();
        hi - lo
    }

    fn placements(&self, st: &WalkState) -> u64 {
        (self.coupling - self.span(st, self.ell - 1)).max(0) as u64
    }
}

/// Default size guard on the edge count for brute-force enumeration, by `ell`.
pub fn tanner_size_limit(ell: usize) -> usize {
    match ell {
        2 => 2_000_000,
        3 => 300_000,
        _ => 50_000,
    }
}

/// Exact number of simple cycles of length `2 ell` in a Tanner graph by
/// depth-first search rooted at the smallest variable node of each cycle.
pub fn tanner_cycle_count(code: &QcCode, ell: usize) -> Result<u64> {
    check_ell(ell)?;
    let limit = tanner_size_limit(ell);
    if code.nnz() > limit {
        return Err(Error::SizeGuard {
            edges: code.nnz(),
            length: 2 * ell,
            limit,
        });
    }
    tanner_cycle_count_unguarded(code, ell)
}

/// As [`tanner_cycle_count`] without the size guard.
pub fn tanner_cycle_count_unguarded(code: &QcCode, ell: usize) -> Result<u64> {
    check_ell(ell)?;
    let doubled: u64 = (0..code.n_cols())
        .into_par_iter()
        .map(|v0| {
            let mut vs = [0u32; 4];
            let mut cs = [0u32; 4];
            vs[0] = v0 as u32;
            tanner_dfs(code, ell, &mut vs, &mut cs, 0)
        })
        .sum();
    // Each cycle is found once per direction.
    Ok(doubled / 2)
}

fn tanner_dfs(code: &QcCode, ell: usize, vs: &mut [u32; 4], cs: &mut [u32; 4], depth: usize) -> u64 {
    let v = vs[depth];
    let mut total = 0;
    for &c in code.col(v as usize) {
        if cs[..depth].contains(&c) {
            continue;
        }
        cs[depth] = c;
        for &w in code.row(c as usize) {
            if w == v {
                continue;
            }
            if depth + 1 == ell {
                if w == vs[0] {
                    total += 1;
                }
                continue;
            }
            if w <= vs[0] || vs[..=depth].contains(&w) {
                continue;
            }
            vs[depth + 1] = w;
            total += tanner_dfs(code, ell, vs, cs, depth + 1);
        }
    }
    total
}
