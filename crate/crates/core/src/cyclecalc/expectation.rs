//! Expected numbers of active candidates after partitioning and their gradients.

use super::candidates::{binomial, check_ell, CandidateCensus};
use super::poly::LaurentPoly;
use crate::error::{Error, Result};
use crate::protomatrix::EdgeDistribution;
use serde::{Deserialize, Serialize};

fn check_ranges(r_f: f64, r_n: f64, f: &LaurentPoly, g: &LaurentPoly) -> Result<()> {
    if !f.is_zero() && !g.is_zero() && f.max_degree() >= g.min_degree() {
        return Err(Error::DistributionRange(format!(
            "fixed part reaches degree {}, new part starts at {}",
            f.max_degree(),
            g.min_degree()
        )));
    }
    if !(r_f >= 0.0 && r_n >= 0.0) || r_f + r_n > 1.0 + 1e-9 {
        return Err(Error::InvalidInput(format!(
            "masses r_f = {r_f}, r_n = {r_n} are not a sub-probability split"
        )));
    }
    Ok(())
}

/// `r_f f(X) + r_n g(X)`: the per-entry component distribution of the stage code.
pub fn mixture(r_f: f64, f: &LaurentPoly, r_n: f64, g: &LaurentPoly) -> LaurentPoly {
    f.scale(r_f).add(&g.scale(r_n))
}

/// `A_2l [P(X)^l P(X^-1)^l]_0` with `P = r_f f + r_n g`.
pub fn expected_cycles(
    ell: usize,
    r_f: f64,
    r_n: f64,
    f: &LaurentPoly,
    g: &LaurentPoly,
    census: &CandidateCensus,
) -> Result<f64> {
    check_ell(ell)?;
    check_ranges(r_f, r_n, f, g)?;
    let a = census.count(ell)? as f64;
    let pl = mixture(r_f, f, r_n, g).pow(ell);
    Ok(a * pl.paired_sum(&pl.mirror(), 0))
}

/// Expected active count when every entry follows the single distribution `u`.
pub fn expected_cycles_single(ell: usize, u: &EdgeDistribution, census: &CandidateCensus) -> Result<f64> {
    expected_cycles(ell, 1.0, 0.0, &LaurentPoly::from_distribution(u), &LaurentPoly::zero(), census)
}

/// Coefficient groups of the separated expansion. Group `a` holds the terms with
/// `a` factors of `g(X)`; its `j`-th coefficient pairs with `max(a, 1) + j`
/// factors of `g(X^-1)`.
fn separated_table(ell: usize) -> &'static [&'static [f64]] {
    const L2: [&[f64]; 2] = [&[4.0, 2.0], &[4.0, 4.0]];
    const L3: [&[f64]; 3] = [&[6.0, 6.0, 2.0], &[9.0, 18.0, 6.0], &[9.0, 6.0]];
    const L4: [&[f64]; 4] = [
        &[8.0, 12.0, 8.0, 2.0],
        &[16.0, 48.0, 32.0, 8.0],
        &[36.0, 48.0, 12.0],
        &[16.0, 8.0],
    ];
    match ell {
        2 => &L2,
        3 => &L3,
        _ => &L4,
    }
}

/// Expectation in the separated form: pure-fixed term, mixed terms with the
/// tabulated multiplicities, and pure-new term.
pub fn expected_cycles_expanded(
    ell: usize,
    r_f: f64,
    r_n: f64,
    f: &LaurentPoly,
    g: &LaurentPoly,
    census: &CandidateCensus,
) -> Result<f64> {
    check_ell(ell)?;
    check_ranges(r_f, r_n, f, g)?;
    let a_count = census.count(ell)? as f64;
    let fm = f.mirror();
    let gm = g.mirror();
    let f_pow: Vec<LaurentPoly> = (0..=ell).map(|e| f.pow(e)).collect();
    let fm_pow: Vec<LaurentPoly> = (0..=ell).map(|e| fm.pow(e)).collect();
    let g_pow: Vec<LaurentPoly> = (0..=ell).map(|e| g.pow(e)).collect();
    let gm_pow: Vec<LaurentPoly> = (0..=ell).map(|e| gm.pow(e)).collect();

    let mut total = r_f.powi(2 * ell as i32) * f_pow[ell].paired_sum(&fm_pow[ell], 0);
    for (a, group) in separated_table(ell).iter().enumerate() {
        for (j, &coef) in group.iter().enumerate() {
            let b = a.max(1) + j;
            let fixed = f_pow[ell - a].mul(&fm_pow[ell - b]);
            let new = g_pow[a].mul(&gm_pow[b]);
            // sum_i [fixed]_i [new]_{-i}
            let lo = fixed.min_degree();
            let hi = fixed.max_degree();
            let mut s = 0.0;
            for i in lo..=hi {
                s += fixed.coeff(i) * new.coeff(-i);
            }
            total += coef
                * r_f.powi((2 * ell - a - b) as i32)
                * r_n.powi((a + b) as i32)
                * s;
        }
    }
    total += r_n.powi(2 * ell as i32) * g_pow[ell].paired_sum(&gm_pow[ell], 0);
    Ok(a_count * total)
}

/// Two-block row extension: `gamma_f` fixed rows partitioned by `p` and
/// `gamma_n` new rows partitioned by `q`, both over `0..=m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowExtensionSpec {
    pub gamma_f: usize,
    pub gamma_n: usize,
    pub kappa: usize,
    pub p: EdgeDistribution,
    pub q: EdgeDistribution,
}

impl RowExtensionSpec {
    pub fn memory(&self) -> usize {
        self.p.max_index()
    }
}

/// Expected number of active cycle-6 candidates of the row-extended protograph.
pub fn expected_cycles_row_extension(spec: &RowExtensionSpec) -> Result<f64> {
    if spec.gamma_f < 3 || spec.gamma_n < 3 {
        return Err(Error::InvalidInput(format!(
            "row extension needs at least 3 fixed and 3 new rows, got {} and {}",
            spec.gamma_f, spec.gamma_n
        )));
    }
    if spec.p.offset != 0 || spec.q.offset != 0 || spec.p.len() != spec.q.len() {
        return Err(Error::DistributionRange(
            "p and q must both cover 0..=m".into(),
        ));
    }
    let f = LaurentPoly::from_distribution(&spec.p);
    let g = LaurentPoly::from_distribution(&spec.q);
    let (fm, gm) = (f.mirror(), g.mirror());
    let ff = |e: usize| f.pow(e).mul(&fm.pow(e));
    let gg = |e: usize| g.pow(e).mul(&gm.pow(e));
    let k3 = 6.0 * binomial(spec.kappa, 3) as f64;
    let c = |n: usize, k: usize| binomial(n, k) as f64;
    let (gf, gn) = (spec.gamma_f, spec.gamma_n);
    let mut total = c(gf, 3) * ff(3).coeff(0);
    for (rf, rn) in [(2usize, 1usize), (1, 2)] {
        let fixed = ff(rf);
        let new = gg(rn);
        let m = spec.memory() as i64;
        let mut s = 0.0;
        for i in -(rf as i64) * m..=(rf as i64) * m {
            s += fixed.coeff(i) * new.coeff(-i);
        }
        total += c(gf, rf) * c(gn, rn) * s;
    }
    total += c(gn, 3) * gg(3).coeff(0);
    Ok(k3 * total)
}

/// Gradient of the expectation with respect to the new-part distribution `q`
/// (coefficients of `g`), one component per index of `g`'s stored range:
/// `A_2l 2l r_n [P(X)^l P(X^-1)^(l-1)]_i`.
pub fn grad_expected_cycles(
    ell: usize,
    r_f: f64,
    r_n: f64,
    f: &LaurentPoly,
    g: &LaurentPoly,
    census: &CandidateCensus,
) -> Result<Vec<f64>> {
    check_ell(ell)?;
    check_ranges(r_f, r_n, f, g)?;
    if g.is_zero() {
        return Err(Error::InvalidInput("gradient needs a non-empty new part".into()));
    }
    let a = census.count(ell)? as f64;
    let p = mixture(r_f, f, r_n, g);
    let h = p.pow(ell).mul(&p.mirror().pow(ell - 1));
    let scale = a * 2.0 * ell as f64 * r_n;
    Ok((g.min_degree()..=g.max_degree())
        .map(|i| scale * h.coeff(i))
        .collect())
}

/// Cycle-4 gradient assembled term by term from the separated expansion.
pub fn grad_cycle4_separated(
    r_f: f64,
    r_n: f64,
    f: &LaurentPoly,
    g: &LaurentPoly,
    census: &CandidateCensus,
) -> Result<Vec<f64>> {
    check_ranges(r_f, r_n, f, g)?;
    if g.is_zero() {
        return Err(Error::InvalidInput("gradient needs a non-empty new part".into()));
    }
    let a_coef = [4.0, 2.0];
    let b_coef = [4.0, 4.0];
    let fm = f.mirror();
    let gm = g.mirror();
    let one = LaurentPoly::constant(1.0);
    let gm_pow = [one.clone(), gm.clone(), gm.pow(2)];
    let f2 = f.pow(2);
    let mut out = Vec::new();
    for k in g.min_degree()..=g.max_degree() {
        let mut total = 0.0;
        for j in 0..2 {
            let fixed_a = f2.mul(&fm.pow(1 - j));
            let fixed_b = f.mul(&fm.pow(1 - j));
            let ga = gm_pow[j].scale((1 + j) as f64);
            let gb1 = &gm_pow[1 + j];
            let gb2 = g.mul(&gm_pow[j]).scale((1 + j) as f64);
            let mut sa = 0.0;
            for i in fixed_a.min_degree()..=fixed_a.max_degree() {
                sa += fixed_a.coeff(i) * ga.coeff(-i + k);
            }
            let mut sb = 0.0;
            for i in fixed_b.min_degree()..=fixed_b.max_degree() {
                sb += fixed_b.coeff(i) * (gb1.coeff(-i - k) + gb2.coeff(-i + k));
            }
            total += a_coef[j] * r_f.powi(3 - j as i32) * r_n.powi(1 + j as i32) * sa;
            total += b_coef[j] * r_f.powi(2 - j as i32) * r_n.powi(2 + j as i32) * sb;
        }
        total += r_n.powi(4) * 4.0 * g.pow(2).mul(&gm).coeff(k);
        out.push(census.a4 as f64 * total);
    }
    Ok(out)
}

/// Subtracts the mean, projecting a gradient onto the tangent space of the simplex.
pub fn center(grad: &[f64]) -> Vec<f64> {
    let mean = grad.iter().sum::<f64>() / grad.len().max(1) as f64;
    grad.iter().map(|v| v - mean).collect()
}
