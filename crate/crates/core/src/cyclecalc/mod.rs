//! Cycle mathematics: candidate enumeration, expected active counts from
//! partition distributions, their gradients, and exact counting.

mod candidates;
mod counting;
mod expectation;
mod poly;

pub use candidates::{
    binomial, count_candidates_masked, enumerate_candidates, enumerate_candidates_masked,
    for_each_candidate_masked,
    for_each_walk_through, is_active_lifted, is_active_partitioned, CandidateCensus,
    CycleCandidate,
};
pub use counting::{
    candidate_active, count_active_candidates, count_active_lifted, coupled_cycle_count,
    tanner_cycle_count, tanner_cycle_count_unguarded, tanner_size_limit, ActiveCounts,
};
pub use expectation::{
    center, expected_cycles, expected_cycles_expanded, expected_cycles_row_extension,
    expected_cycles_single, grad_cycle4_separated, grad_expected_cycles, mixture,
    RowExtensionSpec,
};
pub use poly::LaurentPoly;
