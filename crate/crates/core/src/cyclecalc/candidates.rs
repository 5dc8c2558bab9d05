//! Cycle candidates: closed alternating row/column traversals over distinct
//! base-matrix entries, their census, and activation conditions.

use crate::error::{Error, Result};
use crate::matrix::IntMatrix;
use serde::{Deserialize, Serialize};

/// `n choose k` for small arguments.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Closed-form number of distinct-entry candidates of each length in a
/// `gamma x kappa` all-one matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCensus {
    pub gamma: usize,
    pub kappa: usize,
    pub a4: u64,
    pub a6: u64,
    pub a8: u64,
}

impl CandidateCensus {
    pub fn new(gamma: usize, kappa: usize) -> Self {
        let c = binomial;
        let (g, k) = (gamma, kappa);
        CandidateCensus {
            gamma,
            kappa,
            a4: c(g, 2) * c(k, 2),
            a6: 6 * c(g, 3) * c(k, 3),
            a8: 6 * c(g, 2) * c(k, 4)
                + 6 * c(g, 4) * c(k, 2)
                + 36 * c(g, 3) * c(k, 4)
                + 36 * c(g, 4) * c(k, 3)
                + 72 * c(g, 4) * c(k, 4),
        }
    }

    /// `A_2l` for `l` in 2..=4.
    pub fn count(&self, ell: usize) -> Result<u64> {
        match ell {
            2 => Ok(self.a4),
            3 => Ok(self.a6),
            4 => Ok(self.a8),
            _ => Err(Error::InvalidInput(format!("cycle half-length {ell} not in 2..=4"))),
        }
    }
}

pub(crate) fn check_ell(ell: usize) -> Result<()> {
    if (2..=4).contains(&ell) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("cycle half-length {ell} not in 2..=4")))
    }
}

/// Traversal `(i_1,j_1),(i_1,j_2),(i_2,j_2),...,(i_l,j_l),(i_l,j_1)` of `2l`
/// distinct entries. Entries at even positions carry sign `+`, odd positions `-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleCandidate {
    pub ell: u8,
    pub rows: [u8; 4],
    pub cols: [u8; 4],
}

impl CycleCandidate {
    pub fn new(rows: &[usize], cols: &[usize]) -> Result<Self> {
        let ell = rows.len();
        check_ell(ell)?;
        if cols.len() != ell {
            return Err(Error::InvalidInput("row and column lists differ in length".into()));
        }
        let mut c = CycleCandidate {
            ell: ell as u8,
            rows: [0; 4],
            cols: [0; 4],
        };
        for k in 0..ell {
            if rows[k] > 255 || cols[k] > 255 {
                return Err(Error::InvalidInput("candidate index exceeds 255".into()));
            }
            c.rows[k] = rows[k] as u8;
            c.cols[k] = cols[k] as u8;
        }
        let e = c.entries();
        for a in 0..e.len() {
            let (r, s) = (e[a], e[(a + 1) % e.len()]);
            let shared = if a % 2 == 0 { r.0 == s.0 } else { r.1 == s.1 };
            if !shared || r == s {
                return Err(Error::InvalidInput("traversal does not alternate".into()));
            }
            if e[a + 1..].contains(&r) {
                return Err(Error::InvalidInput("traversal repeats an entry".into()));
            }
        }
        Ok(c)
    }

    pub fn ell(&self) -> usize {
        self.ell as usize
    }

    /// Length of the cycle, `2l`.
    pub fn length(&self) -> usize {
        2 * self.ell as usize
    }

    /// Entry at traversal position `p` (`0..2l`).
    #[inline]
    pub fn entry(&self, p: usize) -> (usize, usize) {
        let k = p / 2;
        let l = self.ell as usize;
        let col = if p % 2 == 0 { self.cols[k] } else { self.cols[(k + 1) % l] };
        (self.rows[k] as usize, col as usize)
    }

    pub fn entries(&self) -> Vec<(usize, usize)> {
        (0..self.length()).map(|p| self.entry(p)).collect()
    }

    /// `sum_k v(i_k,j_k) - v(i_k,j_{k+1})` over an integer matrix, or `None` when
    /// an entry is unassigned.
    pub fn alternating_sum(&self, m: &IntMatrix) -> Option<i64> {
        let mut s = 0i64;
        for p in 0..self.length() {
            let (i, j) = self.entry(p);
            let v = *m.get(i, j);
            if v < 0 {
                return None;
            }
            if p % 2 == 0 {
                s += v as i64;
            } else {
                s -= v as i64;
            }
        }
        Some(s)
    }

    /// Same candidate re-rooted `shift` steps later (by whole row/column pairs).
    pub fn rotated(&self, shift: usize) -> Self {
        let l = self.ell as usize;
        let mut c = *self;
        for k in 0..l {
            c.rows[k] = self.rows[(k + shift) % l];
            c.cols[k] = self.cols[(k + shift) % l];
        }
        c
    }

    /// Same candidate traversed in the opposite direction.
    ///
    /// Reversal of `(i_1,j_1),(i_1,j_2),...,(i_l,j_1)` started at `(i_1,j_2)`
    /// moving along its row gives rows `i_1,i_l,...,i_2` and columns
    /// `j_2,j_1,j_l,...,j_3`.
    pub fn reversed(&self) -> Self {
        let l = self.ell as usize;
        let mut c = *self;
        for k in 0..l {
            c.rows[k] = self.rows[(l - k) % l];
            c.cols[k] = self.cols[(l + 1 - k) % l];
        }
        c
    }

    /// Flat row-major indices of the entries.
    pub fn flat_entries(&self, kappa: usize) -> Vec<usize> {
        (0..self.length())
            .map(|p| {
                let (i, j) = self.entry(p);
                i * kappa + j
            })
            .collect()
    }
}

/// Activation after partitioning: all entries assigned and the
/// alternating component sum vanishes.
pub fn is_active_partitioned(c: &CycleCandidate, k: &IntMatrix) -> bool {
    c.alternating_sum(k) == Some(0)
}

/// Activation after lifting: partition condition plus the alternating power sum
/// vanishing modulo `z`.
pub fn is_active_lifted(c: &CycleCandidate, k: &IntMatrix, t: &IntMatrix, z: usize) -> bool {
    if !is_active_partitioned(c, k) {
        return false;
    }
    match c.alternating_sum(t) {
        Some(s) => s.rem_euclid(z.max(1) as i64) == 0,
        None => false,
    }
}

/// Visits every distinct-entry traversal of half-length `ell` rooted at `root`
/// whose first move is along the root's row. Each candidate containing `root`
/// is visited exactly once. Only entries accepted by `admit` are used.
pub fn for_each_walk_through(
    ell: usize,
    gamma: usize,
    kappa: usize,
    root: (usize, usize),
    admit: &dyn Fn(usize, usize) -> bool,
    visit: &mut dyn FnMut(&CycleCandidate),
) {
    if !(2..=4).contains(&ell) || !admit(root.0, root.1) {
        return;
    }
    let mut c = CycleCandidate {
        ell: ell as u8,
        rows: [0; 4],
        cols: [0; 4],
    };
    c.rows[0] = root.0 as u8;
    c.cols[0] = root.1 as u8;
    let mut used = [(0u8, 0u8); 8];
    used[0] = (root.0 as u8, root.1 as u8);
    walk_cols(&mut c, 1, ell, gamma, kappa, &mut used, 1, admit, visit);
}

#[allow(clippy::too_many_arguments)]
fn walk_cols(
    c: &mut CycleCandidate,
    k: usize,
    ell: usize,
    gamma: usize,
    kappa: usize,
    used: &mut [(u8, u8); 8],
    n_used: usize,
    admit: &dyn Fn(usize, usize) -> bool,
    visit: &mut dyn FnMut(&CycleCandidate),
) {
    // Choose j_{k+1} along row i_k.
    let i = c.rows[k - 1] as usize;
    for j in 0..kappa {
        if j == c.cols[k - 1] as usize || !admit(i, j) {
            continue;
        }
        let e = (i as u8, j as u8);
        if used[..n_used].contains(&e) {
            continue;
        }
        c.cols[k] = j as u8;
        used[n_used] = e;
        walk_rows(c, k, ell, gamma, kappa, used, n_used + 1, admit, visit);
    }
}

#[allow(clippy::too_many_arguments)]
fn walk_rows(
    c: &mut CycleCandidate,
    k: usize,
    ell: usize,
    gamma: usize,
    kappa: usize,
    used: &mut [(u8, u8); 8],
    n_used: usize,
    admit: &dyn Fn(usize, usize) -> bool,
    visit: &mut dyn FnMut(&CycleCandidate),
) {
    // Choose i_{k+1} along column j_{k+1}.
    let j = c.cols[k] as usize;
    let j1 = c.cols[0] as usize;
    let prev = c.rows[k - 1] as usize;
    for i in 0..gamma {
        if i == prev || !admit(i, j) {
            continue;
        }
        let e = (i as u8, j as u8);
        if used[..n_used].contains(&e) {
            continue;
        }
        c.rows[k] = i as u8;
        used[n_used] = e;
        if k + 1 == ell {
            // Closing entry (i_l, j_1) must differ from the root row and be new.
            if i == c.rows[0] as usize || !admit(i, j1) {
                continue;
            }
            let close = (i as u8, j1 as u8);
            if used[..n_used + 1].contains(&close) {
                continue;
            }
            visit(c);
        } else {
            walk_cols(c, k + 1, ell, gamma, kappa, used, n_used + 1, admit, visit);
        }
    }
}

/// Visits every distinct-entry candidate of half-length `ell` once, rooted at its
/// lowest (row, column) entry with a first move along that entry's row. Only
/// entries accepted by `admit` participate.
pub fn for_each_candidate_masked(
    gamma: usize,
    kappa: usize,
    ell: usize,
    admit: &dyn Fn(usize, usize) -> bool,
    visit: &mut dyn FnMut(&CycleCandidate),
) -> Result<()> {
    check_ell(ell)?;
    if gamma > 256 || kappa > 256 {
        return Err(Error::InvalidInput("dimensions above 256 are not supported".into()));
    }
    for i0 in 0..gamma {
        for j0 in 0..kappa {
            let root = i0 * kappa + j0;
            let above = |i: usize, j: usize| i * kappa + j >= root && admit(i, j);
            for_each_walk_through(ell, gamma, kappa, (i0, j0), &above, visit);
        }
    }
    Ok(())
}

/// Every distinct-entry candidate over the admitted entries, each listed once.
pub fn enumerate_candidates_masked(
    gamma: usize,
    kappa: usize,
    ell: usize,
    admit: &dyn Fn(usize, usize) -> bool,
) -> Result<Vec<CycleCandidate>> {
    let mut out = Vec::new();
    for_each_candidate_masked(gamma, kappa, ell, admit, &mut |c| out.push(*c))?;
    Ok(out)
}

/// Every distinct-entry candidate of the all-one `gamma x kappa` matrix.
pub fn enumerate_candidates(gamma: usize, kappa: usize, ell: usize) -> Result<Vec<CycleCandidate>> {
    if gamma < 2 || kappa < 2 {
        return Err(Error::InvalidInput("need at least two rows and two columns".into()));
    }
    enumerate_candidates_masked(gamma, kappa, ell, &|_, _| true)
}

/// Number of candidates over the admitted entries, without materializing them.
pub fn count_candidates_masked(
    gamma: usize,
    kappa: usize,
    ell: usize,
    admit: &dyn Fn(usize, usize) -> bool,
) -> Result<u64> {
    let mut n = 0u64;
    for_each_candidate_masked(gamma, kappa, ell, admit, &mut |_| n += 1)?;
    Ok(n)
}
