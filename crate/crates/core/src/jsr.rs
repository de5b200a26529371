//! Joint spectral radius brackets from product enumeration.
//!
//! Lower bounds come from `ρ(P)^{1/t}` over products `P` of length `t`,
//! upper bounds from `‖P‖^{1/t}` (spectral norm). Enumeration is
//! depth-first in lexicographic word order, so witnesses are reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, spectral_radius, word_product, Matrix, MatrixSet, ProductWord};

/// Relative tolerance under which two averaged spectral radii count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Default tolerance for declaring an optimal-product witness tight.
pub const DEFAULT_TIGHT_TOL: f64 = 1e-6;

/// Tolerance for claims that a product attains a given spectral radius.
pub const ATTAINMENT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    pub witness: ProductWord,
    pub products: u64,
    pub truncated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UpperBound {
    pub value: f64,
    /// Word length whose norm bound attains `value`.
    pub level: usize,
    /// `max_{|w| = t} ‖A_w‖^{1/t}` for each completed level `t = 1, 2, …`.
    pub per_level: Vec<f64>,
    pub products: u64,
    pub truncated: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JsrBracket {
    pub lower: f64,
    pub upper: f64,
    pub lower_witness: ProductWord,
    pub depth: usize,
    pub pruned_count: u64,
    pub products: u64,
    /// The budget ran out before `upper - lower <= delta`.
    pub truncated: bool,
}

impl JsrBracket {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimalProductReport {
    pub witness: ProductWord,
    pub value: f64,
    pub upper: f64,
    pub certified_tight: bool,
    pub truncated: bool,
}

/// Keeps the best lower-bound witness: largest value, ties (relative
/// [`TIE_TOLERANCE`]) broken by shorter word, then lexicographic order.
#[derive(Clone, Debug)]
struct WitnessTracker {
    max_value: f64,
    word: Vec<usize>,
    word_value: f64,
}

impl WitnessTracker {
    fn new() -> Self {
        WitnessTracker { max_value: f64::NEG_INFINITY, word: Vec::new(), word_value: f64::NEG_INFINITY }
    }

    fn offer(&mut self, word: &[usize], value: f64) {
        if value > self.max_value {
            self.max_value = value;
        }
        let tie = TIE_TOLERANCE * self.word_value.abs().max(f64::MIN_POSITIVE);
        let better = if self.word.is_empty() || value > self.word_value + tie {
            true
        } else if value >= self.word_value - tie {
            (word.len(), word) < (self.word.len(), self.word.as_slice())
        } else {
            false
        };
        if better {
            self.word.clear();
            self.word.extend_from_slice(word);
            self.word_value = value;
        }
    }
}

#[inline]
fn averaged(x: f64, t: usize) -> f64 {
    if t == 1 {
        x
    } else {
        x.powf(1.0 / t as f64)
    }
}

enum Visit {
    Descend,
    Skip,
}

/// Depth-first walk over all words of length `1..=max_len`, one matrix
/// multiplication per node. Returns `false` when the budget ran out.
fn walk<F>(set: &MatrixSet, max_len: usize, budget: &mut u64, visit: &mut F) -> bool
where
    F: FnMut(&[usize], &Matrix) -> Visit,
{
    fn rec<F>(
        set: &MatrixSet,
        max_len: usize,
        word: &mut Vec<usize>,
        prefix: &Matrix,
        budget: &mut u64,
        visit: &mut F,
    ) -> bool
    where
        F: FnMut(&[usize], &Matrix) -> Visit,
    {
        for i in 0..set.len() {
            if *budget == 0 {
                return false;
            }
            *budget -= 1;
            let product = set.get(i).mul(prefix);
            word.push(i);
            let descend = matches!(visit(word, &product), Visit::Descend);
            if descend && word.len() < max_len && !rec(set, max_len, word, &product, budget, visit) {
                word.pop();
                return false;
            }
            word.pop();
        }
        true
    }
    let mut word = Vec::with_capacity(max_len);
    rec(set, max_len, &mut word, &Matrix::identity(set.dim()), budget, visit)
}

fn check_len(max_len: usize) -> Result<()> {
    if max_len == 0 {
        Err(Error::param("maximum word length must be at least 1"))
    } else {
        Ok(())
    }
}

/// `max_{t ≤ L} max_{|w| = t} ρ(A_w)^{1/t}` with its witness word.
pub fn rho_lower(set: &MatrixSet, max_len: usize) -> Result<LowerBound> {
    rho_lower_with_budget(set, max_len, u64::MAX)
}

pub fn rho_lower_with_budget(set: &MatrixSet, max_len: usize, budget: u64) -> Result<LowerBound> {
    check_len(max_len)?;
    let mut tracker = WitnessTracker::new();
    let mut left = budget;
    let complete = walk(set, max_len, &mut left, &mut |w, p| {
        tracker.offer(w, averaged(spectral_radius(p), w.len()));
        Visit::Descend
    });
    if tracker.word.is_empty() {
        return Err(Error::param("budget too small to evaluate a single product"));
    }
    Ok(LowerBound {
        value: tracker.max_value,
        witness: word_product(set, &tracker.word)?,
        products: budget - left,
        truncated: !complete,
    })
}

/// `min_{t ≤ L} max_{|w| = t} ‖A_w‖^{1/t}`.
pub fn rho_upper(set: &MatrixSet, max_len: usize) -> Result<UpperBound> {
    rho_upper_with_budget(set, max_len, u64::MAX)
}

pub fn rho_upper_with_budget(set: &MatrixSet, max_len: usize, budget: u64) -> Result<UpperBound> {
    check_len(max_len)?;
    let mut left = budget;
    let mut per_level = Vec::with_capacity(max_len);
    let mut truncated = false;
    for t in 1..=max_len {
        let mut level_max = 0.0_f64;
        let complete = walk(set, t, &mut left, &mut |w, p| {
            if w.len() == t {
                level_max = level_max.max(averaged(operator_norm(p), t));
            }
            Visit::Descend
        });
        if !complete {
            truncated = true;
            break;
        }
        per_level.push(level_max);
    }
    let (level, value) = per_level
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bl, bv), (i, &v)| if v < bv { (i + 1, v) } else { (bl, bv) });
    if per_level.is_empty() {
        return Err(Error::param("budget too small to complete the first level"));
    }
    Ok(UpperBound { value, level, per_level, products: budget - left, truncated })
}

#[derive(Clone, Copy, Debug)]
pub struct GripenbergOptions {
    pub delta: f64,
    pub budget: u64,
    pub max_depth: usize,
}

impl Default for GripenbergOptions {
    fn default() -> Self {
        GripenbergOptions { delta: 1e-2, budget: 1_000_000, max_depth: 64 }
    }
}

/// Branch-and-bound bracket in the style of Gripenberg.
///
/// Each pass explores words up to depth `D` depth-first and closes a word
/// as soon as `‖A_w‖^{1/|w|} ≤ lower + delta`. Greedily cutting any infinite
/// product at its first closed prefix (or after `D` symbols) shows
/// `ρ ≤ max(closed norm bounds, open depth-D norm bounds)`.
pub fn gripenberg(set: &MatrixSet, opts: GripenbergOptions) -> Result<JsrBracket> {
    if !(opts.delta > 0.0) {
        return Err(Error::param("gripenberg: delta must be positive"));
    }
    if opts.max_depth == 0 {
        return Err(Error::param("gripenberg: max_depth must be at least 1"));
    }
    let mut tracker = WitnessTracker::new();
    let mut upper = f64::INFINITY;
    let mut left = opts.budget;
    let mut pruned_total = 0;
    let mut depth = 0;
    let mut truncated = false;

    for d in 1..=opts.max_depth {
        let mut closed_max = 0.0_f64;
        let mut open_max = 0.0_f64;
        let mut pruned = 0_u64;
        let complete = walk(set, d, &mut left, &mut |w, p| {
            let t = w.len();
            tracker.offer(w, averaged(spectral_radius(p), t));
            let bound = averaged(operator_norm(p), t);
            if bound <= tracker.max_value + opts.delta {
                closed_max = closed_max.max(bound);
                pruned += 1;
                Visit::Skip
            } else if t == d {
                open_max = open_max.max(bound);
                Visit::Skip
            } else {
                Visit::Descend
            }
        });
        if !complete {
            truncated = true;
            break;
        }
        depth = d;
        pruned_total += pruned;
        upper = upper.min(closed_max.max(open_max));
        if upper - tracker.max_value <= opts.delta {
            break;
        }
        if open_max == 0.0 {
            // every branch closed: deeper passes repeat this one
            break;
        }
    }
    if tracker.word.is_empty() {
        return Err(Error::param("gripenberg: budget too small to evaluate a single product"));
    }
    let lower = tracker.max_value;
    let truncated = truncated || upper - lower > opts.delta;
    Ok(JsrBracket {
        lower,
        upper: upper.max(lower),
        lower_witness: word_product(set, &tracker.word)?,
        depth,
        pruned_count: pruned_total,
        products: opts.budget - left,
        truncated,
    })
}

/// Best finite-product witness up to length `L`, marked tight when it
/// meets the length-`L` norm bound within `tol`.
pub fn optimal_product_search(set: &MatrixSet, max_len: usize, tol: f64) -> Result<OptimalProductReport> {
    if !(tol > 0.0) {
        return Err(Error::param("optimal product search: tol must be positive"));
    }
    let lower = rho_lower(set, max_len)?;
    let upper = rho_upper(set, max_len)?;
    let value = lower.witness.averaged_spectral_radius();
    Ok(OptimalProductReport {
        certified_tight: value >= upper.value - tol,
        witness: lower.witness,
        value,
        upper: upper.value,
        truncated: lower.truncated || upper.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{blondel_et_al, kozyakin, lagarias_wang, lagarias_wang_midpoint, Branch};
    use approx::assert_relative_eq;

    fn single(m: Matrix) -> MatrixSet {
        MatrixSet::new("single", vec![m]).unwrap()
    }

    /// Independent oracle: evaluate every word of length t separately.
    fn brute_force_lower(set: &MatrixSet, max_len: usize) -> (f64, Vec<usize>) {
        let m = set.len();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        for t in 1..=max_len {
            for code in 0..m.pow(t as u32) {
                let mut word = Vec::with_capacity(t);
                let mut c = code;
                for _ in 0..t {
                    word.push(c % m);
                    c /= m;
                }
                word.reverse();
                let v = word_product(set, &word).unwrap().averaged_spectral_radius();
                if v > best.0 + 1e-12 {
                    best = (v, word);
                }
            }
        }
        best
    }

    #[test]
    fn single_matrix_lower_bound() {
        let a = Matrix::from_2x2(0.3, 0.4, -0.2, 0.6);
        let lb = rho_lower(&single(a.clone()), 6).unwrap();
        assert_relative_eq!(lb.value, spectral_radius(&a), max_relative = 1e-12);
        assert_eq!(lb.witness.word, vec![0]);
    }

    #[test]
    fn idempotent_diagonals() {
        let set =
            MatrixSet::new("d", vec![Matrix::diag(&[1.0, 0.0]), Matrix::diag(&[0.0, 1.0])]).unwrap();
        let lb = rho_lower(&set, 2).unwrap();
        assert_eq!(lb.value, 1.0);
        assert_eq!(lb.witness.word, vec![0]);
    }

    #[test]
    fn lagarias_wang_k3_witness_has_length_four() {
        let set = lagarias_wang(3, lagarias_wang_midpoint(3), false).unwrap();
        let lb = rho_lower(&set, 4).unwrap();
        let (oracle_value, oracle_word) = brute_force_lower(&set, 4);
        assert_relative_eq!(lb.value, 1.0, epsilon = 1e-9);
        assert_relative_eq!(lb.value, oracle_value, epsilon = 1e-12);
        assert_eq!(lb.witness.len(), 4);
        assert_eq!(lb.witness.word, oracle_word);
        // frozen from the brute-force oracle
        assert_eq!(lb.witness.word, vec![0, 1, 1, 1]);
    }

    #[test]
    fn upper_bound_examples() {
        for a in [0.0, 0.3, 1.0, 2.5] {
            let ub = rho_upper(&single(Matrix::identity(2).scale(a)), 5).unwrap();
            assert_relative_eq!(ub.value, a, epsilon = 1e-14);
        }
        let rot = MatrixSet::new("rot", vec![Matrix::rotation(0.3), Matrix::rotation(-1.1)]).unwrap();
        let ub = rho_upper(&rot, 6).unwrap();
        for v in &ub.per_level {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn kozyakin_upper_bounds_frozen() {
        // brute-force enumeration values (numpy oracle, spectral norm)
        let k6 = rho_upper(&kozyakin(6, Branch::Stable).unwrap(), 10).unwrap();
        assert!(k6.value > 1.3 && k6.value < 1.36, "{}", k6.value);
        let k9 = rho_upper(&kozyakin(9, Branch::Stable).unwrap(), 12).unwrap();
        assert!(k9.value < 1.0);
        assert_relative_eq!(k9.value, 0.995_908_939_991_806, max_relative = 1e-9);
    }

    #[test]
    fn gripenberg_trivial_cases() {
        let half = single(Matrix::identity(2).scale(0.5));
        let br = gripenberg(&half, GripenbergOptions { delta: 0.01, ..Default::default() }).unwrap();
        assert_relative_eq!(br.lower, 0.5, epsilon = 1e-15);
        assert_relative_eq!(br.upper, 0.5, epsilon = 1e-15);

        let d = single(Matrix::diag(&[2.0, 0.0]));
        let br = gripenberg(&d, GripenbergOptions::default()).unwrap();
        assert_eq!((br.lower, br.upper, br.depth), (2.0, 2.0, 1));
    }

    #[test]
    fn gripenberg_blondel_consistent_with_exhaustive_bounds() {
        let set = blondel_et_al(0.7).unwrap();
        let br = gripenberg(
            &set,
            GripenbergOptions { delta: 0.02, budget: 1_000_000, max_depth: 64 },
        )
        .unwrap();
        assert!(br.lower <= br.upper + 1e-12);
        let lb = rho_lower(&set, 14).unwrap();
        let ub = rho_upper(&set, 14).unwrap();
        assert!(br.lower <= ub.value + 1e-12);
        assert!(lb.value <= br.upper + 1e-12);
        assert!(!br.truncated, "gap {}", br.gap());
        assert!(br.gap() <= 0.02 + 1e-12);
    }

    #[test]
    fn optimal_product_examples() {
        let sym = single(Matrix::from_2x2(0.5, 0.2, 0.2, 0.3));
        let rep = optimal_product_search(&sym, 4, DEFAULT_TIGHT_TOL).unwrap();
        assert_eq!(rep.witness.word, vec![0]);
        assert!(rep.certified_tight);

        let lw2 = lagarias_wang(2, lagarias_wang_midpoint(2), false).unwrap();
        let rep = optimal_product_search(&lw2, 3, DEFAULT_TIGHT_TOL).unwrap();
        let (_, oracle_word) = brute_force_lower(&lw2, 3);
        assert_eq!(rep.witness.len(), 3);
        assert_eq!(rep.witness.word, oracle_word);
        assert_relative_eq!(rep.value, 1.0, epsilon = ATTAINMENT_TOL);

        let lw5 = lagarias_wang(5, lagarias_wang_midpoint(5), false).unwrap();
        let rep = optimal_product_search(&lw5, 5, DEFAULT_TIGHT_TOL).unwrap();
        assert!(rep.value < 1.0 - 1e-6);
    }

    #[test]
    fn budget_truncation_is_flagged() {
        let set = blondel_et_al(0.7).unwrap();
        let lb = rho_lower_with_budget(&set, 20, 100).unwrap();
        assert!(lb.truncated);
        assert_eq!(lb.products, 100);
        let ub = rho_upper_with_budget(&set, 20, 100).unwrap();
        assert!(ub.truncated);
        assert!(ub.value >= rho_upper(&set, 20).unwrap().value);
        let br = gripenberg(&set, GripenbergOptions { delta: 1e-6, budget: 500, max_depth: 64 })
            .unwrap();
        assert!(br.truncated);
        assert!(br.upper >= br.lower);
    }

    #[test]
    fn invalid_arguments() {
        let set = single(Matrix::identity(2));
        assert!(rho_lower(&set, 0).is_err());
        assert!(rho_upper(&set, 0).is_err());
        assert!(gripenberg(&set, GripenbergOptions { delta: 0.0, ..Default::default() }).is_err());
        assert!(optimal_product_search(&set, 3, 0.0).is_err());
    }
}
