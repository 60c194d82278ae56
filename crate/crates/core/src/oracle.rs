//! Exhaustive search, used as ground truth on small instances.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::Problem;

/// Largest joint assignment space the oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 10_000_000;

/// Returns a minimum-cost assignment and its cost, or `None` when the
/// assignment space exceeds [`ORACLE_LIMIT`].
///
/// Assignments are visited in lexicographic order with variable 0 most
/// significant; the first minimum found is kept.
pub fn brute_force(problem: &Problem) -> Option<(Vec<usize>, u64)> {
    let space: u128 = problem.domains.iter().map(|&d| d as u128).product();
    if space > ORACLE_LIMIT {
        return None;
    }
    let n = problem.n();
    let mut values = vec![0usize; n];
    let mut best = (values.clone(), problem.cost_of(&values));
    loop {
        let mut k = n;
        loop {
            if k == 0 {
                return Some(best);
            }
            k -= 1;
            values[k] += 1;
            if values[k] < problem.domains[k] {
                break;
            }
            values[k] = 0;
        }
        let cost = problem.cost_of(&values);
        if cost < best.1 {
            best = (values.clone(), cost);
        }
    }
}
