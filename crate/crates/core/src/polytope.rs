//! Polytopic Lyapunov functions `V(x) = max_i |c_iᵀx|` in the plane.
//!
//! The search grows a centrally symmetric polygon by adding images
//! `A_i v / γ` of its vertices until it is invariant; the facets of the
//! final polygon then satisfy a per-facet LP decrease condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsr::rho_lower;
use crate::linalg::{leading_eigvecs_2x2, random_unit_vectors, Matrix, MatrixSet};
use crate::lp::{simplex, LpOutcome};
use crate::VALIDATION_SAMPLES;

/// Relative gauge tolerance for hull membership.
pub const HULL_TOL: f64 = 1e-9;
/// Iteration cap independent of the vertex cap.
const MAX_ITERATIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// `±v` for the leading eigenvector `v` of the best product of length ≤ 6.
    Eig,
    /// `±e₁, ±e₂`.
    Square,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeCertificate {
    pub set: MatrixSet,
    pub gamma: f64,
    /// One normal per symmetric facet pair, scaled so `V = 1` on the boundary.
    pub facets: Vec<[f64; 2]>,
    /// One vertex per symmetric pair, counter-clockwise.
    pub vertices: Vec<[f64; 2]>,
    /// `multipliers[i][f]` expresses `A_iᵀ c_f` in the facets.
    pub multipliers: Vec<Vec<Vec<f64>>>,
    /// Polygon vertex count (both signs) after each iteration.
    pub vertex_counts: Vec<usize>,
}

impl PolytopeCertificate {
    pub fn vertex_count(&self) -> usize {
        2 * self.vertices.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        gauge(&self.facets, [x[0], x[1]])
    }
}

#[derive(Clone, Debug)]
pub enum PolytopeOutcome {
    Certificate(Box<PolytopeCertificate>),
    /// The polygon outgrew `max_vertices`.
    VertexLimit { vertex_counts: Vec<usize> },
    /// The iteration stopped but the facet LPs did not confirm it.
    Unverified { vertex_counts: Vec<usize>, reason: String },
}

impl PolytopeOutcome {
    pub fn vertex_counts(&self) -> &[usize] {
        match self {
            PolytopeOutcome::Certificate(c) => &c.vertex_counts,
            PolytopeOutcome::VertexLimit { vertex_counts } | PolytopeOutcome::Unverified { vertex_counts, .. } => {
                vertex_counts
            }
        }
    }

    pub fn certificate(&self) -> Option<&PolytopeCertificate> {
        match self {
            PolytopeOutcome::Certificate(c) => Some(c),
            _ => None,
        }
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn gauge(facets: &[[f64; 2]], x: [f64; 2]) -> f64 {
    facets.iter().map(|c| (c[0] * x[0] + c[1] * x[1]).abs()).fold(0.0, f64::max)
}

/// Convex hull of `{±p}` (counter-clockwise, collinear points dropped).
fn symmetric_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().flat_map(|p| [*p, [-p[0], -p[1]]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let scale = pts.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max);
    let eps = 1e-14 * scale * scale;
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Facet normals `c` (one per symmetric pair) with `cᵀx = 1` on each edge.
fn facets_of(hull: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let k = hull.len();
    let mut out: Vec<[f64; 2]> = Vec::new();
    for i in 0..k {
        let (p, q) = (hull[i], hull[(i + 1) % k]);
        let normal = [q[1] - p[1], p[0] - q[0]];
        let h = normal[0] * p[0] + normal[1] * p[1];
        let c = [normal[0] / h, normal[1] / h];
        let dup = out.iter().any(|o| {
            let tol = 1e-12 * (1.0 + o[0].abs().max(o[1].abs()));
            ((o[0] + c[0]).abs() <= tol && (o[1] + c[1]).abs() <= tol)
                || ((o[0] - c[0]).abs() <= tol && (o[1] - c[1]).abs() <= tol)
        });
        if !dup {
            out.push(c);
        }
    }
    out
}

/// One vertex per ± pair: the first half of a counter-clockwise symmetric hull.
fn half_vertices(hull: &[[f64; 2]]) -> Vec<[f64; 2]> {
    hull[..hull.len() / 2].to_vec()
}

fn check_facets(facets: &[[f64; 2]]) -> Result<()> {
    let full_rank = facets.iter().enumerate().any(|(i, a)| {
        facets[i + 1..].iter().any(|b| {
            let s = a[0].abs().max(a[1].abs()) * b[0].abs().max(b[1].abs());
            (a[0] * b[1] - a[1] * b[0]).abs() > 1e-12 * s
        })
    });
    if full_rank {
        Ok(())
    } else {
        Err(Error::param("facet normals do not span the plane"))
    }
}

/// For every facet `c_i`, the multipliers `λ` minimizing `Σ|λ_j|` subject to
/// `Aᵀc_i = Σ_j λ_j c_j`. Returns them if every optimum is at most
/// `γ + 1e-9·max(1, γ)`, otherwise `None`.
pub fn facet_decrease_lp(facets: &[[f64; 2]], a: &Matrix, gamma: f64) -> Result<Option<Vec<Vec<f64>>>> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: a.dim() });
    }
    check_facets(facets)?;
    let k = facets.len();
    let rows: Vec<Vec<f64>> = (0..2)
        .map(|r| facets.iter().map(|c| c[r]).chain(facets.iter().map(|c| -c[r])).collect())
        .collect();
    let cost = vec![1.0; 2 * k];
    let limit = gamma + 1e-9 * gamma.max(1.0);
    let mut out = Vec::with_capacity(k);
    for c in facets {
        let target = [a.get(0, 0) * c[0] + a.get(1, 0) * c[1], a.get(0, 1) * c[0] + a.get(1, 1) * c[1]];
        match simplex(&rows, &target, &cost) {
            LpOutcome::Optimal { x, value } => {
                if value > limit {
                    return Ok(None);
                }
                out.push((0..k).map(|j| x[j] - x[k + j]).collect());
            }
            LpOutcome::Infeasible | LpOutcome::Unbounded => {
                return Err(Error::param("facet LP failed although the facets span the plane"))
            }
        }
    }
    Ok(Some(out))
}

fn initial_points(set: &MatrixSet, init: InitMode) -> Result<Vec<[f64; 2]>> {
    Ok(match init {
        InitMode::Square => vec![[1.0, 0.0], [0.0, 1.0]],
        InitMode::Eig => {
            let lb = rho_lower(set, 6)?;
            leading_eigvecs_2x2(&lb.witness.product)
                .into_iter()
                .filter(|v| v[0] != 0.0 || v[1] != 0.0)
                .collect()
        }
    })
}

/// Invariant-polygon iteration. Requires `n = 2`, `γ > rho_lower(S, 6)` and
/// `max_vertices ≥ 4`.
pub fn invariant_polytope_iterate(
    set: &MatrixSet,
    gamma: f64,
    max_vertices: usize,
    init: InitMode,
) -> Result<PolytopeOutcome> {
    if set.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: set.dim() });
    }
    if max_vertices < 4 {
        return Err(Error::param("max_vertices must be at least 4"));
    }
    let lower = rho_lower(set, 6)?.value;
    if !(gamma > lower) {
        return Err(Error::param(format!("gamma = {gamma} must exceed the product lower bound {lower}")));
    }
    let scaled: Vec<Matrix> = set.matrices().iter().map(|a| a.scale(1.0 / gamma)).collect();
    let mut points = initial_points(set, init)?;
    let mut counts = Vec::new();
    let mut hull;
    for _ in 0..MAX_ITERATIONS {
        hull = symmetric_hull(&points);
        if hull.len() < 4 {
            // segment: complete with the orthogonal direction of equal length
            let v = points.iter().copied().max_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])));
            let v = v.unwrap_or([1.0, 0.0]);
            points.push([-v[1], v[0]]);
            hull = symmetric_hull(&points);
        }
        counts.push(hull.len());
        if hull.len() > max_vertices {
            return Ok(PolytopeOutcome::VertexLimit { vertex_counts: counts });
        }
        points = half_vertices(&hull);
        let facets = facets_of(&hull);
        let mut added = Vec::new();
        for v in &points {
            for a in &scaled {
                let w = a.apply(v);
                let w = [w[0], w[1]];
                if gauge(&facets, w) > 1.0 + HULL_TOL {
                    added.push(w);
                }
            }
        }
        if added.is_empty() {
            return Ok(finish(set, gamma, &hull, counts));
        }
        points.extend(added);
    }
    Ok(PolytopeOutcome::Unverified { vertex_counts: counts, reason: "iteration cap reached".into() })
}

fn finish(set: &MatrixSet, gamma: f64, hull: &[[f64; 2]], counts: Vec<usize>) -> PolytopeOutcome {
    let facets = facets_of(hull);
    let mut multipliers = Vec::with_capacity(set.len());
    for a in set.matrices() {
        match facet_decrease_lp(&facets, a, gamma) {
            Ok(Some(m)) => multipliers.push(m),
            Ok(None) => {
                return PolytopeOutcome::Unverified {
                    vertex_counts: counts,
                    reason: "facet decrease LP exceeds gamma".into(),
                }
            }
            Err(e) => return PolytopeOutcome::Unverified { vertex_counts: counts, reason: e.to_string() },
        }
    }
    let cert = PolytopeCertificate {
        set: set.clone(),
        gamma,
        facets,
        vertices: half_vertices(hull),
        multipliers,
        vertex_counts: counts,
    };
    match validate_polytope(&cert, crate::DEFAULT_SEED) {
        Ok(v) if v.passed => PolytopeOutcome::Certificate(Box::new(cert)),
        Ok(v) => PolytopeOutcome::Unverified {
            vertex_counts: cert.vertex_counts,
            reason: format!("validation failed: {v:?}"),
        },
        Err(e) => PolytopeOutcome::Unverified { vertex_counts: cert.vertex_counts, reason: e.to_string() },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeValidation {
    /// Largest stored `Σ|λ|` over matrices and facets.
    pub max_multiplier_norm: f64,
    /// Largest `‖A_iᵀc_f − Σ λ_j c_j‖∞` of the stored multipliers.
    pub max_multiplier_residual: f64,
    /// The LPs re-solved from scratch succeed.
    pub lp_recheck: bool,
    /// Largest sampled `V(A_i x) / V(x)`.
    pub max_sampled_ratio: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Solver-independent check: stored multipliers, fresh LP solves, and
/// `V(A_i x) ≤ γ V(x)` at random points.
pub fn validate_polytope(cert: &PolytopeCertificate, seed: u64) -> Result<PolytopeValidation> {
    if cert.set.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: cert.set.dim() });
    }
    check_facets(&cert.facets)?;
    let k = cert.facets.len();
    if cert.multipliers.len() != cert.set.len() || cert.multipliers.iter().any(|m| m.len() != k || m.iter().any(|l| l.len() != k)) {
        return Err(Error::Malformed("multipliers must be matrices × facets × facets".into()));
    }
    let tol = 1e-9 * cert.gamma.max(1.0);
    let mut max_norm = 0.0_f64;
    let mut max_res = 0.0_f64;
    let mut lp_ok = true;
    for (a, mult) in cert.set.matrices().iter().zip(&cert.multipliers) {
        for (c, lam) in cert.facets.iter().zip(mult) {
            let target = [a.get(0, 0) * c[0] + a.get(1, 0) * c[1], a.get(0, 1) * c[0] + a.get(1, 1) * c[1]];
            let mut comb = [0.0; 2];
            for (l, f) in lam.iter().zip(&cert.facets) {
                comb[0] += l * f[0];
                comb[1] += l * f[1];
            }
            let scale = 1.0 + c[0].abs().max(c[1].abs());
            max_res = max_res.max((target[0] - comb[0]).abs().max((target[1] - comb[1]).abs()) / scale);
            max_norm = max_norm.max(lam.iter().map(|l| l.abs()).sum());
        }
        lp_ok &= facet_decrease_lp(&cert.facets, a, cert.gamma)?.is_some();
    }
    let mut ratio = 0.0_f64;
    let pts = random_unit_vectors(2, VALIDATION_SAMPLES, seed);
    for x in &pts {
        let vx = cert.eval(x);
        for a in cert.set.matrices() {
            ratio = ratio.max(cert.eval(&a.apply(x)) / vx);
        }
    }
    let passed = max_norm <= cert.gamma + tol && max_res <= 1e-9 && lp_ok && ratio <= cert.gamma + tol;
    Ok(PolytopeValidation {
        max_multiplier_norm: max_norm,
        max_multiplier_residual: max_res,
        lp_recheck: lp_ok,
        max_sampled_ratio: ratio,
        samples: pts.len(),
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::lagarias_wang_experiment;
    use std::f64::consts::FRAC_PI_2;

    const UNIT: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn facet_lp_examples() {
        let half = facet_decrease_lp(&UNIT, &Matrix::identity(2).scale(0.5), 0.5).unwrap().unwrap();
        assert_eq!(half, vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert!(facet_decrease_lp(&UNIT, &Matrix::rotation(FRAC_PI_2), 1.0).unwrap().is_some());
        assert!(facet_decrease_lp(&UNIT, &Matrix::identity(2).scale(2.0), 1.0).unwrap().is_none());
        assert!(facet_decrease_lp(&[[1.0, 0.0], [2.0, 0.0]], &Matrix::identity(2), 1.0).is_err());
    }

    #[test]
    fn hull_basics() {
        let h = symmetric_hull(&[[1.0, 0.0], [0.0, 1.0], [0.25, 0.25]]);
        assert_eq!(h.len(), 4);
        let f = facets_of(&h);
        assert_eq!(f.len(), 2);
        assert!((gauge(&f, [0.5, 0.5]) - 1.0).abs() < 1e-15);
        // a point on an edge is not a vertex
        assert_eq!(symmetric_hull(&[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]).len(), 4);
    }

    #[test]
    fn rotation_gives_square() {
        let set = MatrixSet::new("r", vec![Matrix::rotation(FRAC_PI_2).scale(0.9)]).unwrap();
        let out = invariant_polytope_iterate(&set, 1.0, 64, InitMode::Square).unwrap();
        let cert = out.certificate().expect("square is invariant");
        assert_eq!(cert.vertex_count(), 4);
        assert!(validate_polytope(cert, 5).unwrap().passed);
    }

    #[test]
    fn scalar_contraction_keeps_initial_segment() {
        let set = MatrixSet::new("h", vec![Matrix::identity(2).scale(0.5)]).unwrap();
        let out = invariant_polytope_iterate(&set, 1.0, 64, InitMode::Eig).unwrap();
        let cert = out.certificate().unwrap();
        assert_eq!(cert.vertex_counts, vec![4]);
    }

    #[test]
    fn expansion_is_rejected() {
        let set = MatrixSet::new("two", vec![Matrix::identity(2).scale(2.0)]).unwrap();
        assert!(invariant_polytope_iterate(&set, 1.0, 64, InitMode::Eig).is_err());
        let set = MatrixSet::new("r", vec![Matrix::rotation(0.3).scale(0.5)]).unwrap();
        assert!(invariant_polytope_iterate(&set, 1.0, 2, InitMode::Eig).is_err());
    }

    #[test]
    fn experiment_vertex_counts() {
        let mut prev = 0;
        for k in 2..=4 {
            let set = lagarias_wang_experiment(k).unwrap();
            let out = invariant_polytope_iterate(&set, 1.0, 200, InitMode::Eig).unwrap();
            let cert = out.certificate().unwrap_or_else(|| panic!("k={k}: {out:?}"));
            assert!(validate_polytope(cert, 42).unwrap().passed);
            assert!(cert.vertex_count() >= prev);
            prev = cert.vertex_count();
        }
        let set = lagarias_wang_experiment(4).unwrap();
        let out = invariant_polytope_iterate(&set, 1.0, 8, InitMode::Eig).unwrap();
        assert!(matches!(out, PolytopeOutcome::VertexLimit { .. }));
    }

    #[test]
    fn tampered_certificate_is_rejected() {
        let set = lagarias_wang_experiment(2).unwrap();
        let out = invariant_polytope_iterate(&set, 1.0, 200, InitMode::Eig).unwrap();
        let mut cert = out.certificate().unwrap().clone();
        cert.gamma = 0.9;
        assert!(!validate_polytope(&cert, 42).unwrap().passed);
    }
}
