use super::*;
use crate::cyclecalc::{count_active_candidates, count_active_lifted, enumerate_candidates};
use crate::protomatrix::{DesignPlan, EdgeDistribution};

fn all_candidates(gamma: usize, kappa: usize) -> Vec<CycleCandidate> {
    (2..=4).flat_map(|l| enumerate_candidates(gamma, kappa, l).unwrap()).collect()
}

fn toy_context() -> StageContext {
    StageContext::partition(&[true; 15], &IntMatrix::filled(3, 5, -1), 0, 1, 1).unwrap()
}

/// Minimum weighted active count over all 2^15 binary partitions of a 3x5 matrix.
fn exhaustive_minimum(weights: [f64; 3]) -> f64 {
    let cands = all_candidates(3, 5);
    (0u32..1 << 15)
        .map(|bits| {
            let k = IntMatrix::from_fn(3, 5, |i, j| (bits >> (i * 5 + j) & 1) as i32);
            count_active_candidates(&cands, &k, weights).weighted
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn singleton_tuples() {
    let cands = enumerate_candidates(3, 4, 2).unwrap();
    let opt: Vec<usize> = (0..12).collect();
    let s = build_correlation_tuples(&cands, 4, &opt, 1).unwrap();
    assert_eq!(s, opt.iter().map(|&e| vec![e]).collect::<Vec<_>>());
}

#[test]
fn single_candidate_ties_pick_lowest_index() {
    let cands = enumerate_candidates(2, 2, 2).unwrap();
    let s = build_correlation_tuples(&cands, 2, &[0, 1, 2, 3], 2).unwrap();
    assert_eq!(s, vec![vec![0, 1], vec![1, 0], vec![2, 0], vec![3, 0]]);
    assert!(build_correlation_tuples(&cands, 2, &[0, 1], 3).is_err());
    assert!(build_correlation_tuples(&[], 2, &[0, 1], 1).is_err());
}

#[test]
fn tuples_hold_most_correlated_peers() {
    let cands = all_candidates(3, 5);
    let mut shared = vec![vec![0u64; 15]; 15];
    for c in &cands {
        let e = c.flat_entries(5);
        for &a in &e {
            for &b in &e {
                shared[a][b] += 1;
            }
        }
    }
    let opt: Vec<usize> = (0..15).collect();
    let s = build_correlation_tuples(&cands, 5, &opt, 3).unwrap();
    for t in &s {
        let e = t[0];
        let worst_kept = t[1..].iter().map(|&p| shared[e][p]).min().unwrap();
        let best_dropped = (0..15)
            .filter(|u| !t.contains(u))
            .map(|u| shared[e][u])
            .max()
            .unwrap();
        assert!(worst_kept >= best_dropped, "tuple {t:?}");
        assert!(shared[e][t[1]] >= shared[e][t[2]]);
    }
}

#[test]
fn empty_candidate_list_is_optimal_at_once() {
    let ctx = toy_context();
    let x = IntMatrix::filled(3, 5, 0);
    let r = mc2_optimize_with_candidates(Phase::Partition, &ctx, &[], &x, &Mc2Config::default()).unwrap();
    assert_eq!(r.cost, 0.0);
    assert_eq!(r.transitions, 0);
}

#[test]
fn toy_chain_finds_exhaustive_minimum() {
    let weights = [1.0, 0.0, 0.0];
    let target = exhaustive_minimum(weights);
    let ctx = toy_context();
    let cands = all_candidates(3, 5);
    let mut hits = 0;
    for seed in 0..10 {
        let cfg = Mc2Config {
            weights,
            max_transitions: 5_000,
            l1_budget: Some(15.0),
            seed,
            ..Default::default()
        };
        let x0 = IntMatrix::filled(3, 5, 0);
        let r = mc2_optimize(Phase::Partition, &ctx, &x0, &cfg).unwrap();
        let again = count_active_candidates(&cands, &r.x_opt, weights);
        assert_eq!(again.active[0], r.counts[0]);
        if again.weighted == target {
            hits += 1;
        }
    }
    assert!(hits >= 9, "{hits}/10 runs reached {target}");
}

#[test]
fn same_seed_same_result() {
    let ctx = toy_context();
    let cfg = Mc2Config {
        max_transitions: 300,
        seed: 5,
        record_trace: true,
        ..Default::default()
    };
    let x0 = IntMatrix::from_fn(3, 5, |i, j| ((i + j) % 2) as i32);
    let a = mc2_optimize(Phase::Partition, &ctx, &x0, &cfg).unwrap();
    let b = mc2_optimize(Phase::Partition, &ctx, &x0, &cfg).unwrap();
    assert_eq!(a, b);
    for w in a.trace.windows(2) {
        assert!(w[1].best <= w[0].best);
    }
}

#[test]
fn fixed_entries_and_budgets_hold() {
    // Stage-1 style context: the first two columns are inherited with component 0.
    let mut fixed = IntMatrix::filled(4, 7, -1);
    for i in 0..4 {
        fixed.set(i, 0, 0);
        fixed.set(i, 1, 0);
    }
    let ctx = StageContext::partition(&[true; 28], &fixed, 1, 3, 3).unwrap();
    let q = EdgeDistribution::new(1, vec![0.5, 0.3, 0.2]).unwrap();
    let x0 = init_partition_state(&ctx, &q, 3).unwrap();
    let cfg = Mc2Config {
        max_transitions: 400,
        linf_budget: Some(1),
        l1_budget: Some(6.0),
        record_trace: true,
        ..Default::default()
    };
    let r = mc2_optimize(Phase::Partition, &ctx, &x0, &cfg).unwrap();
    let mut l1 = 0;
    for e in 0..28 {
        let (a, b) = (r.x_opt.as_slice()[e], x0.as_slice()[e]);
        if ctx.fixed[e] {
            assert_eq!(a, 0);
        } else {
            assert!((a - b).abs() <= 1);
            l1 += (a - b).abs();
        }
    }
    assert!(l1 <= 6);
    let cands = all_candidates(4, 7);
    let again = count_active_candidates(&cands, &r.x_opt, cfg.weights);
    assert_eq!(again.active, r.counts);
    let den: f64 = (0..3).map(|s| cfg.weights[s] * again.assigned[s] as f64).sum();
    assert!((again.weighted / den - r.cost).abs() < 1e-12);
}

#[test]
fn infeasible_start_is_rejected() {
    let ctx = toy_context();
    let x0 = IntMatrix::filled(3, 5, 2);
    assert!(mc2_optimize(Phase::Partition, &ctx, &x0, &Mc2Config::default()).is_err());
    let thresholds = toy_context().with_vn_thresholds(vec![0]);
    let x0 = IntMatrix::filled(3, 5, 1);
    assert!(matches!(
        mc2_optimize(Phase::Partition, &thresholds, &x0, &Mc2Config::default()),
        Err(Error::Infeasible(_))
    ));
}

#[test]
fn largest_remainder_examples() {
    assert_eq!(largest_remainder_counts(&[0.5, 0.5], 10), vec![5, 5]);
    assert_eq!(largest_remainder_counts(&[1.0], 7), vec![7]);
    assert_eq!(largest_remainder_counts(&[0.25, 0.25, 0.5], 3), vec![1, 1, 1]);
    let q = [0.37, 0.21, 0.42];
    let c = largest_remainder_counts(&q, 161);
    assert_eq!(c.iter().sum::<usize>(), 161);
    for (n, w) in c.iter().zip(q) {
        assert!((*n as f64 - w * 161.0).abs() < 1.0);
    }
}

#[test]
fn single_component_fills_every_new_entry() {
    let mut fixed = IntMatrix::filled(4, 6, -1);
    fixed.set(0, 0, 0);
    let ctx = StageContext::partition(&[true; 24], &fixed, 3, 3, 1).unwrap();
    let x = init_partition_state(&ctx, &EdgeDistribution::new(3, vec![1.0]).unwrap(), 1).unwrap();
    assert_eq!(*x.get(0, 0), 0);
    assert_eq!(x.as_slice().iter().filter(|&&v| v == 3).count(), 23);
    let half = StageContext::partition(&[true; 10], &IntMatrix::filled(2, 5, -1), 0, 1, 1).unwrap();
    let x = init_partition_state(&half, &EdgeDistribution::uniform(0, 2), 9).unwrap();
    assert_eq!(x.as_slice().iter().filter(|&&v| v == 1).count(), 5);
}

#[test]
fn lift_init_on_two_by_two() {
    let k = IntMatrix::filled(2, 2, 0);
    let ctx = StageContext::lift(&k, &IntMatrix::filled(2, 2, -1), 3).unwrap();
    let init = init_lift_state(&ctx, 4, 100).unwrap();
    let t = init.t.as_slice();
    assert_ne!((t[0] - t[1] + t[3] - t[2]).rem_euclid(3), 0);
    let one = StageContext::lift(&k, &IntMatrix::filled(2, 2, -1), 1).unwrap();
    assert!(matches!(init_lift_state(&one, 4, 100), Err(Error::BudgetExhausted(_))));
}

#[test]
fn lift_chain_clears_short_cycles_in_order() {
    let k = IntMatrix::from_fn(4, 9, |i, j| ((i * j) % 2) as i32);
    let ctx = StageContext::lift(&k, &IntMatrix::filled(4, 9, -1), 17).unwrap();
    let init = init_lift_state(&ctx, 2, 10_000).unwrap();
    let cfg = Mc2Config {
        max_transitions: 2_000,
        weights: [1.0, 1.0, 0.0],
        record_trace: true,
        ..Default::default()
    };
    let r = mc2_optimize(Phase::Lift, &ctx, &init.t, &cfg).unwrap();
    let cands = all_candidates(4, 9);
    let again = count_active_lifted(&cands, &k, &r.x_opt, 17, [1.0; 3]);
    assert_eq!(again.active[0], 0);
    assert_eq!(again.active[..2], r.counts[..2]);
    // Staged costs never fall back into the cycle-4 band once cleared.
    assert!(r.trace.iter().all(|p| p.cost <= 0.5));
}

#[test]
fn explicit_and_generated_candidates_agree() {
    let k = IntMatrix::from_fn(4, 6, |i, j| ((i + 2 * j) % 3) as i32);
    let ctx = StageContext::lift(&k, &IntMatrix::filled(4, 6, -1), 11).unwrap();
    let t0 = init_lift_state(&ctx, 8, 10_000).unwrap().t;
    let cfg = Mc2Config {
        max_transitions: 200,
        ..Default::default()
    };
    let a = mc2_optimize(Phase::Lift, &ctx, &t0, &cfg).unwrap();
    let b = mc2_optimize_with_candidates(Phase::Lift, &ctx, &all_candidates(4, 6), &t0, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stage_bases_partition_every_entry() {
    let plan = DesignPlan::new(4, 6, 5, 4, &[1, 1, 2], &[0.5, 0.25, 0.25]).unwrap();
    let k_star = IntMatrix::from_fn(4, 6, |i, j| ((i + j) % 5) as i32);
    let mut cover = vec![0u8; 24];
    for d in 0..3 {
        let (h_n, h_f) = derive_stage_base(&k_star, &plan, d).unwrap();
        for e in 0..24 {
            cover[e] += h_n.as_slice()[e];
            let v = k_star.as_slice()[e];
            assert_eq!(h_f.as_slice()[e] == 1, d > 0 && v <= plan.stages[d].m_fixed as i32);
        }
        // Boundary value m_f + m_n belongs to stage d.
        let top = plan.stages[d].memory() as i32;
        for e in 0..24 {
            if k_star.as_slice()[e] == top {
                assert_eq!(h_n.as_slice()[e], 1);
            }
        }
    }
    assert!(cover.iter().all(|&c| c == 1));
}

#[test]
fn sf_baseline_truncates() {
    let plan = DesignPlan::new(4, 6, 5, 4, &[1, 2], &[0.5, 0.5]).unwrap();
    let k_star = IntMatrix::from_fn(4, 6, |i, j| ((i + j) % 4) as i32);
    let t_star = IntMatrix::from_fn(4, 6, |i, j| ((i * j) % 5) as i32);
    let (k, t) = derive_sf_baseline(&k_star, &t_star, &plan, 1).unwrap();
    assert_eq!((k.clone(), t), (k_star.clone(), t_star.clone()));
    let (k0, t0) = derive_sf_baseline(&k_star, &t_star, &plan, 0).unwrap();
    for e in 0..24 {
        let keep = k_star.as_slice()[e] <= 1;
        assert_eq!(k0.as_slice()[e] >= 0, keep);
        assert_eq!(t0.as_slice()[e] >= 0, keep);
    }
}

#[test]
fn reference_partition_meets_degree_condition() {
    let plan = DesignPlan::new(7, 12, 7, 5, &[1, 1, 1], &[0.5, 0.25, 0.25]).unwrap();
    let p = EdgeDistribution::new(0, vec![0.25, 0.25, 0.25, 0.25]).unwrap();
    let cfg = Mc2Config {
        max_transitions: 60,
        weights: [100.0, 10.0, 0.0],
        ..Default::default()
    };
    let r = design_reference_k_star(&plan, &p, &cfg).unwrap();
    for thr in [1, 2, 3] {
        for j in 0..12 {
            let n = (0..7).filter(|&i| *r.x_opt.get(i, j) <= thr).count();
            assert!(n >= 3, "column {j} threshold {thr}");
        }
    }
}
