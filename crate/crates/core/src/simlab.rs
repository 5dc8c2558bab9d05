//! Channels, belief-propagation decoding, and frame-error-rate experiments.

use crate::error::{Error, Result};
use crate::protomatrix::QcCode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Magnitude cap on channel LLRs and internal messages.
pub const LLR_LIMIT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    /// Binary-input AWGN with parameter `Ec/N0` in dB.
    Awgn,
    /// Binary symmetric channel with parameter the crossover probability.
    Bsc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub parameter: f64,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ChannelKind::Awgn if !self.parameter.is_finite() => {
                Err(Error::InvalidInput(format!("Ec/N0 = {} dB is not finite", self.parameter)))
            }
            ChannelKind::Bsc if !(self.parameter >= 0.0 && self.parameter <= 0.5) => Err(Error::InvalidInput(
                format!("crossover probability {} outside [0, 0.5]", self.parameter),
            )),
            _ => Ok(()),
        }
    }
}

fn saturate(v: f64) -> f64 {
    v.clamp(-LLR_LIMIT, LLR_LIMIT)
}

/// LLRs (positive favours bit 0) of one transmission of `codeword`.
pub fn channel_transmit_with(codeword: &[u8], kind: ChannelKind, parameter: f64, rng: &mut impl Rng) -> Vec<f64> {
    match kind {
        ChannelKind::Awgn => {
            // Unit symbol energy; N0 / 2 noise variance per real dimension.
            let ec_n0 = 10f64.powf(parameter / 10.0);
            let sigma = (1.0 / (2.0 * ec_n0)).sqrt();
            let noise = Normal::new(0.0, sigma).expect("positive sigma");
            codeword
                .iter()
                .map(|&c| {
                    let y = 1.0 - 2.0 * c as f64 + noise.sample(rng);
                    saturate(4.0 * y * ec_n0)
                })
                .collect()
        }
        ChannelKind::Bsc => {
            let p = parameter;
            let mag = if p <= 0.0 { LLR_LIMIT } else { saturate(((1.0 - p) / p).ln()) };
            codeword
                .iter()
                .map(|&c| {
                    let flip = p > 0.0 && rng.random::<f64>() < p;
                    let bit = c ^ flip as u8;
                    if bit == 0 {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect()
        }
    }
}

/// As [`channel_transmit_with`], seeded from the spec.
pub fn channel_transmit(codeword: &[u8], spec: &ChannelSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(channel_transmit_with(codeword, spec.kind, spec.parameter, &mut rng))
}

/// Result of decoding one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub word: Vec<u8>,
    /// All parity checks satisfied.
    pub converged: bool,
    pub iterations: usize,
}

/// Flooding sum-product decoder bound to one code.
pub struct Decoder<'a> {
    code: &'a QcCode,
    /// Check-major edge list: variable of each edge.
    edge_var: Vec<u32>,
    /// Start of each check's edges.
    check_start: Vec<usize>,
    /// Edges of each variable, as indices into the check-major list.
    var_edges: Vec<Vec<u32>>,
}

impl<'a> Decoder<'a> {
    pub fn new(code: &'a QcCode) -> Self {
        let mut edge_var = Vec::with_capacity(code.nnz());
        let mut check_start = Vec::with_capacity(code.n_rows() + 1);
        let mut var_edges = vec![Vec::new(); code.n_cols()];
        for c in 0..code.n_rows() {
            check_start.push(edge_var.len());
            for &v in code.row(c) {
                var_edges[v as usize].push(edge_var.len() as u32);
                edge_var.push(v);
            }
        }
        check_start.push(edge_var.len());
        Decoder {
            code,
            edge_var,
            check_start,
            var_edges,
        }
    }

    pub fn decode(&self, llr: &[f64], max_iters: usize) -> Result<DecodeOutcome> {
        let n = self.code.n_cols();
        if llr.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n.to_string(),
                got: llr.len().to_string(),
            });
        }
        if llr.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("channel LLR".into()));
        }
        if max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        // A zero total LLR is an undecided bit; frames with one never count as converged.
        let mut word: Vec<u8> = llr.iter().map(|&l| (l < 0.0) as u8).collect();
        if llr.iter().all(|&l| l != 0.0) && self.code.unsatisfied_checks(&word) == 0 {
            return Ok(DecodeOutcome {
                word,
                converged: true,
                iterations: 0,
            });
        }
        let edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| llr[v as usize]).collect();
        let mut c2v = vec![0.0f64; edges];
        let mut tanh_buf: Vec<f64> = Vec::new();
        for it in 1..=max_iters {
            for c in 0..self.code.n_rows() {
                let (s, e) = (self.check_start[c], self.check_start[c + 1]);
                check_update(&v2c[s..e], &mut c2v[s..e], &mut tanh_buf);
            }
            let mut undecided = false;
            for v in 0..n {
                let total: f64 = llr[v] + self.var_edges[v].iter().map(|&e| c2v[e as usize]).sum::<f64>();
                word[v] = (total < 0.0) as u8;
                undecided |= total == 0.0;
                for &e in &self.var_edges[v] {
                    v2c[e as usize] = saturate(total - c2v[e as usize]);
                }
            }
            if !undecided && self.code.unsatisfied_checks(&word) == 0 {
                return Ok(DecodeOutcome {
                    word,
                    converged: true,
                    iterations: it,
                });
            }
        }
        Ok(DecodeOutcome {
            word,
            converged: false,
            iterations: max_iters,
        })
    }
}

/// Check-node rule `2 atanh(prod_{others} tanh(m / 2))` with prefix/suffix
/// products so no division is needed.
fn check_update(incoming: &[f64], out: &mut [f64], buf: &mut Vec<f64>) {
    let d = incoming.len();
    buf.clear();
    buf.extend(incoming.iter().map(|&m| (m / 2.0).tanh()));
    let mut prefix = 1.0;
    for k in 0..d {
        out[k] = prefix;
        prefix *= buf[k];
    }
    let mut suffix = 1.0;
    for k in (0..d).rev() {
        let p = (out[k] * suffix).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
        out[k] = saturate(2.0 * p.atanh());
        suffix *= buf[k];
    }
}

/// Decodes one frame of channel LLRs.
pub fn decode(code: &QcCode, llr: &[f64], max_iters: usize) -> Result<DecodeOutcome> {
    Decoder::new(code).decode(llr, max_iters)
}

/// When to stop simulating a channel point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopRule {
    pub min_frame_errors: u64,
    pub max_frames: u64,
    /// Frames simulated between stop checks; fixed so results do not depend on
    /// the number of threads.
    pub batch: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_frame_errors: 100,
            max_frames: 10_000_000,
            batch: 256,
        }
    }
}

/// Statistics of one channel point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerPoint {
    pub parameter: f64,
    pub frames: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub fer: f64,
    /// Half-width of the 95% Wilson interval on the FER.
    pub ci_half_width: f64,
    pub mean_iterations: f64,
}

impl FerPoint {
    /// 95% Wilson score interval.
    pub fn interval(&self) -> (f64, f64) {
        wilson_interval(self.frame_errors, self.frames)
    }
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    // The bounds are exact at the edges; rounding would otherwise leave residue.
    let lo = if k == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Seed of frame `frame` at grid point `point`.
fn frame_seed(seed: u64, point: usize, frame: u64) -> u64 {
    let mut h = seed ^ 0x51_7C_C1_B7_27_22_0A_95;
    for v in [point as u64, frame] {
        h = (h ^ v).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 29;
    }
    h
}

/// All-zero-codeword FER at every grid point.
pub fn simulate_fer(
    code: &QcCode,
    kind: ChannelKind,
    grid: &[f64],
    stop: &StopRule,
    max_iters: usize,
    seed: u64,
) -> Result<Vec<FerPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty channel grid".into()));
    }
    if stop.batch == 0 || stop.max_frames == 0 {
        return Err(Error::InvalidInput("stop rule needs positive batch and frame limits".into()));
    }
    for &p in grid {
        ChannelSpec {
            kind,
            parameter: p,
            seed,
        }
        .validate()?;
    }
    let decoder = Decoder::new(code);
    let zero = vec![0u8; code.n_cols()];
    let mut out = Vec::with_capacity(grid.len());
    for (pi, &param) in grid.iter().enumerate() {
        let (mut frames, mut fe, mut be, mut iters) = (0u64, 0u64, 0u64, 0u64);
        while fe < stop.min_frame_errors && frames < stop.max_frames {
            let count = stop.batch.min(stop.max_frames - frames);
            let results: Vec<(u64, u64)> = (frames..frames + count)
                .into_par_iter()
                .map(|f| {
                    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(seed, pi, f));
                    let llr = channel_transmit_with(&zero, kind, param, &mut rng);
                    let o = decoder.decode(&llr, max_iters).expect("finite LLRs");
                    let bits = o.word.iter().filter(|&&b| b != 0).count() as u64;
                    (bits, o.iterations as u64)
                })
                .collect();
            for (bits, it) in results {
                if bits > 0 {
                    fe += 1;
                }
                be += bits;
                iters += it;
            }
            frames += count;
        }
        let (lo, hi) = wilson_interval(fe, frames);
        out.push(FerPoint {
            parameter: param,
            frames,
            frame_errors: fe,
            bit_errors: be,
            fer: fe as f64 / frames as f64,
            ci_half_width: (hi - lo) / 2.0,
            mean_iterations: iters as f64 / frames as f64,
        });
    }
    Ok(out)
}

/// FER points as CSV with header `parameter,frames,frame_errors,fer,ci_low,ci_high`.
pub fn write_fer_csv(points: &[FerPoint], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "parameter,frames,frame_errors,bit_errors,fer,ci_low,ci_high,mean_iterations")?;
    for p in points {
        let (lo, hi) = p.interval();
        writeln!(
            w,
            "{},{},{},{},{:.6e},{:.6e},{:.6e},{:.3}",
            p.parameter, p.frames, p.frame_errors, p.bit_errors, p.fer, lo, hi, p.mean_iterations
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{BinMatrix, IntMatrix};
    use crate::protomatrix::lift;

    /// Girth-6 code: all-one 3x5 protograph lifted by z = 7 with powers i * j.
    fn girth6_code() -> QcCode {
        let t = IntMatrix::from_fn(3, 5, |i, j| ((i * j) % 7) as i32);
        lift(&BinMatrix::ones(3, 5), &t, 7).unwrap()
    }

    /// Probability-domain flooding BP with the same message schedule.
    fn reference_decode(code: &QcCode, llr: &[f64], iters: usize) -> Vec<u8> {
        let p1: Vec<f64> = llr.iter().map(|&l| 1.0 / (1.0 + l.exp())).collect();
        let rows = code.rows_adj();
        let mut q: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| p1[v as usize]).collect()).collect();
        let mut word = vec![0u8; code.n_cols()];
        for _ in 0..iters {
            // Probability that the other bits of a check have odd parity.
            let r: Vec<Vec<f64>> = q
                .iter()
                .map(|qs| {
                    (0..qs.len())
                        .map(|k| {
                            let prod: f64 = (0..qs.len()).filter(|&m| m != k).map(|m| 1.0 - 2.0 * qs[m]).product();
                            (1.0 - prod) / 2.0
                        })
                        .collect()
                })
                .collect();
            let mut incoming: Vec<Vec<(usize, usize)>> = vec![Vec::new(); code.n_cols()];
            for (c, row) in rows.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    incoming[v as usize].push((c, k));
                }
            }
            for v in 0..code.n_cols() {
                let (mut a1, mut a0) = (p1[v], 1.0 - p1[v]);
                for &(c, k) in &incoming[v] {
                    a1 *= r[c][k];
                    a0 *= 1.0 - r[c][k];
                }
                word[v] = (a1 > a0) as u8;
                for &(c, k) in &incoming[v] {
                    let (e1, e0) = (a1 / r[c][k], a0 / (1.0 - r[c][k]));
                    q[c][k] = e1 / (e1 + e0);
                }
            }
            if code.unsatisfied_checks(&word) == 0 {
                break;
            }
        }
        word
    }

    #[test]
    fn noiseless_all_zero_is_immediate() {
        let code = girth6_code();
        let o = decode(&code, &vec![10.0; code.n_cols()], 5).unwrap();
        assert!(o.converged);
        assert!(o.iterations <= 1);
        assert!(o.word.iter().all(|&b| b == 0));
    }

    #[test]
    fn single_flip_is_corrected() {
        let code = girth6_code();
        for v in [0, 13, 34] {
            let mut llr = vec![8.0; code.n_cols()];
            llr[v] = -8.0;
            let o = decode(&code, &llr, 20).unwrap();
            assert!(o.converged && o.word.iter().all(|&b| b == 0), "bit {v}");
        }
    }

    #[test]
    fn zero_llrs_never_converge() {
        let code = girth6_code();
        let o = decode(&code, &[0.0; 35], 10).unwrap();
        assert!(!o.converged);
        assert_eq!(o.iterations, 10);
        assert!(decode(&code, &[f64::NAN; 35], 3).is_err());
        assert!(decode(&code, &[1.0; 35], 0).is_err());
    }

    #[test]
    fn matches_probability_domain_reference() {
        let code = girth6_code();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let llr = channel_transmit_with(&vec![0; 35], ChannelKind::Awgn, 1.0, &mut rng);
            for iters in [1, 3, 8] {
                let ours = decode(&code, &llr, iters).unwrap();
                assert_eq!(ours.word, reference_decode(&code, &llr, iters));
            }
        }
    }

    #[test]
    fn channel_llr_conventions() {
        let cw = [0u8, 1, 0, 1];
        let bsc = channel_transmit(&cw, &ChannelSpec { kind: ChannelKind::Bsc, parameter: 0.5, seed: 1 }).unwrap();
        assert!(bsc.iter().all(|&l| l == 0.0));
        let sure = channel_transmit(&cw, &ChannelSpec { kind: ChannelKind::Bsc, parameter: 0.0, seed: 1 }).unwrap();
        assert_eq!(sure, vec![LLR_LIMIT, -LLR_LIMIT, LLR_LIMIT, -LLR_LIMIT]);
        let quiet = channel_transmit(&cw, &ChannelSpec { kind: ChannelKind::Awgn, parameter: 40.0, seed: 1 }).unwrap();
        for (l, c) in quiet.iter().zip(cw) {
            assert_eq!(*l > 0.0, c == 0);
        }
        assert!(ChannelSpec { kind: ChannelKind::Bsc, parameter: 0.7, seed: 0 }.validate().is_err());
    }

    /// A nonzero codeword from the null space of the parity-check matrix.
    fn nonzero_codeword(code: &QcCode) -> Vec<u8> {
        let h = code.to_dense();
        let (m, n) = h.dims();
        let mut rows: Vec<Vec<u8>> = (0..m).map(|i| (0..n).map(|j| *h.get(i, j)).collect()).collect();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..n {
            let Some(p) = (r..m).find(|&i| rows[i][c] == 1) else { continue };
            rows.swap(r, p);
            for i in 0..m {
                if i != r && rows[i][c] == 1 {
                    let pr = rows[r].clone();
                    rows[i].iter_mut().zip(&pr).for_each(|(a, b)| *a ^= b);
                }
            }
            pivots.push(c);
            r += 1;
        }
        let free = (0..n).find(|c| !pivots.contains(c)).expect("rate > 0");
        let mut x = vec![0u8; n];
        x[free] = 1;
        for (k, &pc) in pivots.iter().enumerate() {
            x[pc] = rows[k][free];
        }
        x
    }

    #[test]
    fn decoding_commutes_with_codeword_sign_flips() {
        let code = girth6_code();
        let cw = nonzero_codeword(&code);
        assert_eq!(code.unsatisfied_checks(&cw), 0);
        assert!(cw.contains(&1));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let llr = channel_transmit_with(&vec![0; 35], ChannelKind::Awgn, 0.5, &mut rng);
            let flipped: Vec<f64> = llr.iter().zip(&cw).map(|(&l, &c)| if c == 1 { -l } else { l }).collect();
            let a = decode(&code, &llr, 10).unwrap();
            let b = decode(&code, &flipped, 10).unwrap();
            assert_eq!((a.iterations, a.converged), (b.iterations, b.converged));
            let shifted: Vec<u8> = a.word.iter().zip(&cw).map(|(x, y)| x ^ y).collect();
            assert_eq!(shifted, b.word);
        }
    }

    #[test]
    fn fer_runs_are_reproducible_and_ordered() {
        let code = girth6_code();
        let stop = StopRule { min_frame_errors: 20, max_frames: 4_000, batch: 64 };
        let grid = [0.0, 3.0];
        let a = simulate_fer(&code, ChannelKind::Awgn, &grid, &stop, 20, 5).unwrap();
        let b = simulate_fer(&code, ChannelKind::Awgn, &grid, &stop, 20, 5).unwrap();
        assert_eq!(a, b);
        assert!(a[1].fer <= a[0].fer);
        let clean = simulate_fer(&code, ChannelKind::Bsc, &[1e-9], &stop, 20, 5).unwrap();
        assert_eq!(clean[0].frame_errors, 0);
        assert!(simulate_fer(&code, ChannelKind::Bsc, &[], &stop, 20, 5).is_err());
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(50, 1000);
        assert!(lo < 0.05 && 0.05 < hi);
        assert!((hi - lo) < 0.03);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }
}
