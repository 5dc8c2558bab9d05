//! Single-chain state evolution with incremental count updates.
//!
//! For a tuple of `b` entries, every candidate that touches the tuple is visited
//! once. Its alternating sum is linear in the tuple values, so the completions
//! that activate it are the solutions of one linear condition: fixing all but the
//! last tuple entry it contains determines that entry's value. Each candidate
//! adds one hit to the grid indexed by the subset of tuple entries it contains,
//! and the active count of any completion is the sum of `2^b - 1` grid lookups.

use crate::cyclecalc::{for_each_candidate_masked, for_each_walk_through, CycleCandidate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Candidates as flat row-major entry indices in traversal order; even positions
/// carry sign `+`.
pub(crate) trait CandidateSource: Sync {
    fn through(&self, ell: usize, entry: usize, f: &mut dyn FnMut(&[u16]));
    fn all(&self, ell: usize, f: &mut dyn FnMut(&[u16]));
}

fn flatten(c: &CycleCandidate, kappa: usize, buf: &mut [u16; 8]) -> usize {
    let n = c.length();
    for (p, slot) in buf.iter_mut().enumerate().take(n) {
        let (i, j) = c.entry(p);
        *slot = (i * kappa + j) as u16;
    }
    n
}

/// Candidates generated on demand over a support mask.
pub(crate) struct WalkSource {
    pub gamma: usize,
    pub kappa: usize,
    pub support: Vec<bool>,
}

impl CandidateSource for WalkSource {
    fn through(&self, ell: usize, entry: usize, f: &mut dyn FnMut(&[u16])) {
        let kappa = self.kappa;
        let admit = |i: usize, j: usize| self.support[i * kappa + j];
        let mut buf = [0u16; 8];
        for_each_walk_through(ell, self.gamma, kappa, (entry / kappa, entry % kappa), &admit, &mut |c| {
            let n = flatten(c, kappa, &mut buf);
            f(&buf[..n]);
        });
    }

    fn all(&self, ell: usize, f: &mut dyn FnMut(&[u16])) {
        let kappa = self.kappa;
        let admit = |i: usize, j: usize| self.support[i * kappa + j];
        let mut buf = [0u16; 8];
        // Dimensions are validated by the caller.
        let _ = for_each_candidate_masked(self.gamma, kappa, ell, &admit, &mut |c| {
            let n = flatten(c, kappa, &mut buf);
            f(&buf[..n]);
        });
    }
}

/// Materialized candidate lists with per-entry incidence.
pub(crate) struct ListSource {
    flat: [Vec<u16>; 3],
    incidence: [Vec<Vec<u32>>; 3],
}

impl ListSource {
    pub fn new<'a>(entries: usize, kappa: usize, cands: impl IntoIterator<Item = &'a CycleCandidate>) -> Self {
        let mut flat: [Vec<u16>; 3] = Default::default();
        let mut incidence: [Vec<Vec<u32>>; 3] = [vec![Vec::new(); entries], vec![Vec::new(); entries], vec![Vec::new(); entries]];
        let mut buf = [0u16; 8];
        for c in cands {
            let slot = c.ell() - 2;
            let n = flatten(c, kappa, &mut buf);
            let id = (flat[slot].len() / n) as u32;
            flat[slot].extend_from_slice(&buf[..n]);
            for &e in &buf[..n] {
                incidence[slot][e as usize].push(id);
            }
        }
        ListSource { flat, incidence }
    }
}

impl CandidateSource for ListSource {
    fn through(&self, ell: usize, entry: usize, f: &mut dyn FnMut(&[u16])) {
        let n = 2 * ell;
        let flat = &self.flat[ell - 2];
        for &id in &self.incidence[ell - 2][entry] {
            let at = id as usize * n;
            f(&flat[at..at + n]);
        }
    }

    fn all(&self, ell: usize, f: &mut dyn FnMut(&[u16])) {
        for c in self.flat[ell - 2].chunks_exact(2 * ell) {
            f(c);
        }
    }
}

/// How completion energies and normalized counts are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Scoring {
    /// Weighted active count over all positive-weight lengths.
    Weighted,
    /// Lengths are cleared in increasing order; once a length reaches zero it
    /// stays zero, and only the first nonzero length drives the chain.
    Staged,
}

pub(crate) struct Problem<'a> {
    pub kappa: usize,
    pub source: &'a dyn CandidateSource,
    /// Half-lengths with positive weight, ascending.
    pub ells: Vec<usize>,
    pub weights: [f64; 3],
    pub scoring: Scoring,
    pub modulus: Option<i64>,
    pub lo: i32,
    pub n_values: usize,
    pub optimizable: Vec<usize>,
    pub linf: Option<i32>,
    pub l1: Option<i64>,
    /// Per-column minimum of 3 entries with value at most each threshold.
    pub vn_thresholds: Vec<i32>,
    pub gamma: usize,
}

pub(crate) struct ChainParams {
    pub max_transitions: usize,
    pub theta0: f64,
    pub decay: f64,
    pub seed: u64,
    pub record_trace: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct ChainOutcome {
    pub cost: f64,
    pub x_opt: Vec<i32>,
    pub counts: [u64; 3],
    pub census: [u64; 3],
    pub transitions: usize,
    pub best_transition: usize,
    pub trace: Vec<(usize, f64, f64)>,
}

impl Problem<'_> {
    #[inline]
    fn is_zero(&self, s: i64) -> bool {
        match self.modulus {
            Some(z) => s.rem_euclid(z) == 0,
            None => s == 0,
        }
    }

    fn alt_sum(&self, c: &[u16], x: &[i32]) -> i64 {
        c.iter()
            .enumerate()
            .map(|(p, &e)| if p % 2 == 0 { x[e as usize] as i64 } else { -(x[e as usize] as i64) })
            .sum()
    }

    /// Active and total candidate counts per length for state `x`.
    pub fn full_counts(&self, x: &[i32]) -> ([u64; 3], [u64; 3]) {
        let mut active = [0u64; 3];
        let mut census = [0u64; 3];
        for &ell in &self.ells {
            let s = ell - 2;
            self.source.all(ell, &mut |c| {
                census[s] += 1;
                if self.is_zero(self.alt_sum(c, x)) {
                    active[s] += 1;
                }
            });
        }
        (active, census)
    }

    /// Normalized count and chain energy for the given counts. `cleared` is the
    /// number of leading lengths already at zero (staged scoring only).
    pub fn score(&self, counts: &[u64; 3], census: &[u64; 3], cleared: usize) -> (f64, f64) {
        match self.scoring {
            Scoring::Weighted => {
                let num: f64 = self.ells.iter().map(|&l| self.weights[l - 2] * counts[l - 2] as f64).sum();
                let den: f64 = self.ells.iter().map(|&l| self.weights[l - 2] * census[l - 2] as f64).sum();
                (if den > 0.0 { num / den } else { 0.0 }, num)
            }
            Scoring::Staged => {
                let levels = self.ells.len();
                if cleared >= levels {
                    return (0.0, 0.0);
                }
                let s = self.ells[cleared] - 2;
                let frac = if census[s] > 0 { counts[s] as f64 / census[s] as f64 } else { 0.0 };
                (((levels - 1 - cleared) as f64 + frac) / levels as f64, counts[s] as f64)
            }
        }
    }

    fn cleared(&self, counts: &[u64; 3]) -> usize {
        self.ells.iter().take_while(|&&l| counts[l - 2] == 0).count()
    }

    fn vn_counts(&self, x: &[i32]) -> Vec<Vec<u32>> {
        self.vn_thresholds
            .iter()
            .map(|&thr| {
                let mut cnt = vec![0u32; self.kappa];
                for i in 0..self.gamma {
                    for (j, c) in cnt.iter_mut().enumerate() {
                        let v = x[i * self.kappa + j];
                        if v >= 0 && v <= thr {
                            *c += 1;
                        }
                    }
                }
                cnt
            })
            .collect()
    }

    /// Whether `x` satisfies the budget and degree constraints relative to `x_init`.
    pub fn feasible(&self, x: &[i32], x_init: &[i32]) -> bool {
        let mut l1 = 0i64;
        for &e in &self.optimizable {
            let v = x[e];
            if v < self.lo || v >= self.lo + self.n_values as i32 {
                return false;
            }
            let d = (v - x_init[e]).abs();
            if self.linf.is_some_and(|b| d > b) {
                return false;
            }
            l1 += d as i64;
        }
        if self.l1.is_some_and(|b| l1 > b) {
            return false;
        }
        self.vn_counts(x).iter().all(|cnt| cnt.iter().all(|&c| c >= 3))
    }
}

/// Scratch grids for one length: one per nonempty subset of tuple positions.
struct Grids {
    data: Vec<Vec<u32>>,
}

impl Grids {
    fn new(b: usize, n: usize) -> Self {
        let data = (0..1usize << b)
            .map(|mask| vec![0u32; if mask == 0 { 0 } else { n.pow(mask.count_ones()) }])
            .collect();
        Grids { data }
    }

    fn clear(&mut self) {
        for g in &mut self.data {
            g.iter_mut().for_each(|v| *v = 0);
        }
    }
}

pub(crate) fn run_chain(prob: &Problem, x_init: &[i32], tuples: &[Vec<usize>], params: &ChainParams) -> ChainOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut x = x_init.to_vec();
    let (mut counts, census) = prob.full_counts(&x);
    let mut cleared = prob.cleared(&counts);
    let (mut cost, _) = prob.score(&counts, &census, cleared);
    let mut out = ChainOutcome {
        cost,
        x_opt: x.clone(),
        counts,
        census,
        transitions: 0,
        best_transition: 0,
        trace: Vec::new(),
    };
    if cost == 0.0 || tuples.is_empty() {
        return out;
    }
    let b = tuples[0].len();
    let n = prob.n_values;
    let lo = prob.lo;
    let mut grids: Vec<Grids> = prob.ells.iter().map(|_| Grids::new(b, n)).collect();
    let completions = n.pow(b as u32);
    let mut energy = vec![f64::INFINITY; completions];
    let mut vn = prob.vn_counts(&x);
    let mut l1: i64 = prob.optimizable.iter().map(|&e| (x[e] - x_init[e]).abs() as i64).sum();
    let mut order: Vec<usize> = (0..tuples.len()).collect();
    let mut theta = params.theta0;
    let mut pow_n = vec![1usize; b + 1];
    for r in 1..=b {
        pow_n[r] = pow_n[r - 1] * n;
    }

    'sweeps: loop {
        order.shuffle(&mut rng);
        for &ti in &order {
            if out.transitions >= params.max_transitions {
                break 'sweeps;
            }
            let tuple = &tuples[ti];
            // Hits per subset grid, plus the current activity of every visited candidate.
            let mut old = [0u64; 3];
            for (gi, &ell) in prob.ells.iter().enumerate() {
                let g = &mut grids[gi];
                g.clear();
                for t in 0..b {
                    prob.source.through(ell, tuple[t], &mut |c| {
                        let mut mask = 0usize;
                        let mut coef = [0i64; 8];
                        let mut rest = 0i64;
                        for (p, &e) in c.iter().enumerate() {
                            let sign = if p % 2 == 0 { 1 } else { -1 };
                            match tuple.iter().position(|&u| u == e as usize) {
                                Some(s) => {
                                    if s < t {
                                        return;
                                    }
                                    mask |= 1 << s;
                                    coef[s] = sign;
                                }
                                None => rest += sign * x[e as usize] as i64,
                            }
                        }
                        let cur: i64 = rest + (0..b).map(|s| coef[s] * x[tuple[s]] as i64).sum::<i64>();
                        if prob.is_zero(cur) {
                            old[ell - 2] += 1;
                        }
                        accumulate(&mut g.data[mask], mask, &coef, rest, lo, n, prob.modulus);
                    });
                }
            }

            // Energies of all completions.
            let cur_idx: Vec<usize> = tuple.iter().map(|&e| (x[e] - lo) as usize).collect();
            let l1_rest = l1 - tuple.iter().map(|&e| (x[e] - x_init[e]).abs() as i64).sum::<i64>();
            let mut idx = vec![0usize; b];
            let mut e_min = f64::INFINITY;
            let mut current_completion = 0usize;
            for (ci, en) in energy.iter_mut().enumerate() {
                let mut rem = ci;
                for slot in idx.iter_mut() {
                    *slot = rem % n;
                    rem /= n;
                }
                if idx == cur_idx {
                    current_completion = ci;
                }
                *en = match completion_counts(prob, &grids, &idx, &pow_n, &counts, &old) {
                    Some(new) if admissible(prob, tuple, &idx, x_init, l1_rest, &vn, &x, &new, cleared) => {
                        prob.score(&new, &census, cleared).1
                    }
                    _ => f64::INFINITY,
                };
                if *en < e_min {
                    e_min = *en;
                }
            }

            let chosen = if e_min.is_finite() {
                let mut total = 0.0;
                for en in energy.iter_mut() {
                    *en = if en.is_finite() { (-(*en - e_min) / theta).exp() } else { 0.0 };
                    total += *en;
                }
                let mut u = rng.random::<f64>() * total;
                let mut pick = current_completion;
                for (ci, &w) in energy.iter().enumerate() {
                    if w > 0.0 {
                        pick = ci;
                        if u < w {
                            break;
                        }
                        u -= w;
                    }
                }
                pick
            } else {
                current_completion
            };

            if chosen != current_completion {
                let mut rem = chosen;
                for slot in idx.iter_mut() {
                    *slot = rem % n;
                    rem /= n;
                }
                counts = completion_counts(prob, &grids, &idx, &pow_n, &counts, &old).expect("chosen completion");
                for (s, &e) in tuple.iter().enumerate() {
                    let v = lo + idx[s] as i32;
                    for (k, &thr) in prob.vn_thresholds.iter().enumerate() {
                        let col = e % prob.kappa;
                        vn[k][col] = vn[k][col] + (v <= thr) as u32 - (x[e] <= thr) as u32;
                    }
                    l1 += ((v - x_init[e]).abs() - (x[e] - x_init[e]).abs()) as i64;
                    x[e] = v;
                }
                cleared = prob.cleared(&counts);
                cost = prob.score(&counts, &census, cleared).0;
            }
            out.transitions += 1;
            if cost < out.cost {
                out.cost = cost;
                out.x_opt.clone_from(&x);
                out.counts = counts;
                out.best_transition = out.transitions;
            }
            if params.record_trace {
                out.trace.push((out.transitions, cost, out.cost));
            }
            if out.cost == 0.0 {
                break 'sweeps;
            }
        }
        theta *= params.decay;
        if theta < 1e-12 {
            theta = 1e-12;
        }
    }
    out
}

/// Adds one hit for every assignment of the tuple positions in `mask` that
/// activates a candidate with coefficients `coef` and constant part `rest`.
fn accumulate(grid: &mut [u32], mask: usize, coef: &[i64; 8], rest: i64, lo: i32, n: usize, modulus: Option<i64>) {
    let mut pos = [0usize; 8];
    let mut k = 0;
    for s in 0..8 {
        if mask >> s & 1 == 1 {
            pos[k] = s;
            k += 1;
        }
    }
    let last = pos[k - 1];
    let free = &pos[..k - 1];
    let combos = n.pow(free.len() as u32);
    let stride_last = n.pow(free.len() as u32);
    for combo in 0..combos {
        let mut rem = combo;
        let mut partial = rest;
        for &s in free {
            let v = lo as i64 + (rem % n) as i64;
            rem /= n;
            partial += coef[s] * v;
        }
        // coef is +-1, so it is its own inverse.
        let target = -coef[last] * partial;
        let idx = match modulus {
            Some(z) => (target - lo as i64).rem_euclid(z),
            None => target - lo as i64,
        };
        if idx >= 0 && (idx as usize) < n {
            grid[combo + idx as usize * stride_last] += 1;
        }
    }
}

fn completion_counts(
    prob: &Problem,
    grids: &[Grids],
    idx: &[usize],
    pow_n: &[usize],
    counts: &[u64; 3],
    old: &[u64; 3],
) -> Option<[u64; 3]> {
    let b = idx.len();
    let mut new = *counts;
    for (gi, &ell) in prob.ells.iter().enumerate() {
        let s = ell - 2;
        let mut hits = 0u64;
        for mask in 1..1usize << b {
            let mut at = 0usize;
            let mut r = 0usize;
            for (p, &v) in idx.iter().enumerate() {
                if mask >> p & 1 == 1 {
                    at += v * pow_n[r];
                    r += 1;
                }
            }
            hits += grids[gi].data[mask][at] as u64;
        }
        new[s] = (new[s] + hits).checked_sub(old[s])?;
    }
    Some(new)
}

#[allow(clippy::too_many_arguments)]
fn admissible(
    prob: &Problem,
    tuple: &[usize],
    idx: &[usize],
    x_init: &[i32],
    l1_rest: i64,
    vn: &[Vec<u32>],
    x: &[i32],
    new: &[u64; 3],
    cleared: usize,
) -> bool {
    let mut l1 = l1_rest;
    for (s, &e) in tuple.iter().enumerate() {
        let d = (prob.lo + idx[s] as i32 - x_init[e]).abs();
        if prob.linf.is_some_and(|bd| d > bd) {
            return false;
        }
        l1 += d as i64;
    }
    if prob.l1.is_some_and(|bd| l1 > bd) {
        return false;
    }
    for (k, &thr) in prob.vn_thresholds.iter().enumerate() {
        for &e in tuple {
            let col = e % prob.kappa;
            let mut c = vn[k][col] as i64;
            for (s, &u) in tuple.iter().enumerate() {
                if u % prob.kappa == col {
                    c += (prob.lo + idx[s] as i32 <= thr) as i64 - (x[u] <= thr) as i64;
                }
            }
            if c < 3 {
                return false;
            }
        }
    }
    if prob.scoring == Scoring::Staged {
        for &ell in &prob.ells[..cleared] {
            if new[ell - 2] != 0 {
                return false;
            }
        }
    }
    true
}
