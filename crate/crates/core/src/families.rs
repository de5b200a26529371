//! Generators for the parametric two-matrix families whose Lyapunov
//! certificates need unboundedly many degrees, pieces or facets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, MatrixSet};

/// Upper limit on `alpha` for [`blondel_et_al`]; the pair at this value
/// violates the finiteness property.
pub const ALPHA_STAR: f64 = 0.749326546330367557943961948091344672091;

/// Half a unit in the last place of [`ALPHA_STAR`]. Inputs within this band
/// below the constant are treated as equal to it and rejected.
pub fn alpha_star_guard() -> f64 {
    0.5 * (f64::from_bits(ALPHA_STAR.to_bits() + 1) - ALPHA_STAR)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Stable,
    Unstable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    Kozyakin { k: u32, branch: Branch },
    BlondelEtAl { alpha: f64 },
    LagariasWang { k: u32, alpha: f64, scaled: bool },
    LagariasWangExperiment { k: u32 },
}

impl FamilySpec {
    pub fn generate(&self) -> Result<MatrixSet> {
        match *self {
            FamilySpec::Kozyakin { k, branch } => kozyakin(k, branch),
            FamilySpec::BlondelEtAl { alpha } => blondel_et_al(alpha),
            FamilySpec::LagariasWang { k, alpha, scaled } => lagarias_wang(k, alpha, scaled),
            FamilySpec::LagariasWangExperiment { k } => lagarias_wang_experiment(k),
        }
    }
}

/// `(cos(π/2k), sin(π/2k))`, exact at k = 1.
fn quarter_angle(k: u32) -> (f64, f64) {
    if k == 1 {
        (0.0, 1.0)
    } else {
        let (s, c) = (PI / (2.0 * k as f64)).sin_cos();
        (c, s)
    }
}

/// Kozyakin's pair. The stable branch uses `t = sin(2π/(2k+1))` and is
/// scaled by `1 - 1/k`; the unstable branch uses `t = sin(2π/2k)`.
pub fn kozyakin(k: u32, branch: Branch) -> Result<MatrixSet> {
    if k == 0 {
        return Err(Error::param("kozyakin: k must be at least 1"));
    }
    let kf = k as f64;
    let t = match branch {
        Branch::Stable => (2.0 * PI / (2.0 * kf + 1.0)).sin(),
        Branch::Unstable => (2.0 * PI / (2.0 * kf)).sin(),
    };
    let outer = match branch {
        Branch::Stable => {
            if k == 1 {
                return Err(Error::param(
                    "kozyakin: k = 1 on the stable branch has scale factor 1 - 1/k = 0",
                ));
            }
            1.0 - 1.0 / kf
        }
        Branch::Unstable => 1.0,
    };
    let t2 = t * t;
    let c = (1.0 - t2).max(0.0).sqrt();
    let shrink = 1.0 - t2 * t2;
    let denom = 1.0 - 1.5 * PI * t2 * t;
    if denom.abs() < 1e-12 {
        return Err(Error::param(format!("kozyakin: 1 - 3πt³/2 vanishes at k = {k}")));
    }
    let g1 = outer * shrink / denom;
    let g2 = outer * shrink;
    let a1 = Matrix::from_2x2(g1 * c, -g1 * t, 0.0, 0.0);
    let a2 = Matrix::from_2x2(g2 * c, -g2 * t, g2 * t, g2 * c);
    let tag = match branch {
        Branch::Stable => "stable",
        Branch::Unstable => "unstable",
    };
    MatrixSet::new(format!("kozyakin(k={k},{tag})"), vec![a1, a2])
}

/// `{[[1,1],[0,1]], α·[[1,0],[1,1]]}` for `0 < α < α*`.
pub fn blondel_et_al(alpha: f64) -> Result<MatrixSet> {
    if !(alpha > 0.0 && alpha + alpha_star_guard() < ALPHA_STAR) {
        return Err(Error::param(format!(
            "blondel: alpha = {alpha} must lie in (0, {ALPHA_STAR})"
        )));
    }
    let a1 = Matrix::from_2x2(1.0, 1.0, 0.0, 1.0);
    let a2 = Matrix::from_2x2(alpha, 0.0, alpha, alpha);
    MatrixSet::new(format!("blondel(alpha={alpha})"), vec![a1, a2])
}

/// Upper end of the admissible `alpha` interval for [`lagarias_wang`].
pub fn lagarias_wang_alpha_max(k: u32) -> f64 {
    1.0 / quarter_angle(k).0
}

/// Midpoint of `(1, 1/cos(π/2k))`.
pub fn lagarias_wang_midpoint(k: u32) -> f64 {
    0.5 * (1.0 + lagarias_wang_alpha_max(k))
}

fn lagarias_wang_raw(k: u32, alpha: f64, scale: f64) -> (Matrix, Matrix) {
    let (c, s) = quarter_angle(k);
    let g1 = scale * alpha.powi(k as i32);
    let g2 = scale / alpha;
    (
        Matrix::from_2x2(0.0, 0.0, g1, 0.0),
        Matrix::from_2x2(g2 * c, g2 * s, -g2 * s, g2 * c),
    )
}

/// Lagarias–Wang pair `α^k·[[0,0],[1,0]]`, `α⁻¹·R(π/2k)`; optionally
/// scaled by `1 - 1/k`.
pub fn lagarias_wang(k: u32, alpha: f64, scaled: bool) -> Result<MatrixSet> {
    if k == 0 {
        return Err(Error::param("lagarias-wang: k must be at least 1"));
    }
    let hi = lagarias_wang_alpha_max(k);
    if !(alpha > 1.0 && alpha < hi) {
        return Err(Error::param(format!(
            "lagarias-wang: alpha = {alpha} must lie in (1, {hi}) for k = {k}"
        )));
    }
    if scaled && k == 1 {
        return Err(Error::param("lagarias-wang: k = 1 with scaling has factor 1 - 1/k = 0"));
    }
    let scale = if scaled { 1.0 - 1.0 / k as f64 } else { 1.0 };
    let (a1, a2) = lagarias_wang_raw(k, alpha, scale);
    let label = if scaled {
        format!("lagarias-wang(k={k},alpha={alpha},scaled)")
    } else {
        format!("lagarias-wang(k={k},alpha={alpha})")
    };
    MatrixSet::new(label, vec![a1, a2])
}

/// Parameters of the benchmark variant: interval-midpoint `alpha` and the
/// scale `1 - 1/(1000k)`.
pub fn lagarias_wang_experiment_params(k: u32) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(Error::param("lagarias-wang experiment: k must be at least 2"));
    }
    Ok((lagarias_wang_midpoint(k), 1.0 - 1.0 / (1000.0 * k as f64)))
}

pub fn lagarias_wang_experiment(k: u32) -> Result<MatrixSet> {
    let (alpha, scale) = lagarias_wang_experiment_params(k)?;
    let (a1, a2) = lagarias_wang_raw(k, alpha, scale);
    MatrixSet::new(format!("lagarias-wang-experiment(k={k})"), vec![a1, a2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{operator_norm, spectral_radius, word_product};
    use approx::assert_relative_eq;

    #[test]
    fn kozyakin_k2_stable_matches_direct_evaluation() {
        let set = kozyakin(2, Branch::Stable).unwrap();
        let t = (2.0 * PI / 5.0).sin();
        let c = (1.0 - t * t).sqrt();
        let g1 = 0.5 * (1.0 - t.powi(4)) / (1.0 - 3.0 * PI * t.powi(3) / 2.0);
        let g2 = 0.5 * (1.0 - t.powi(4));
        let a1 = set.get(0);
        let a2 = set.get(1);
        assert_relative_eq!(a1.get(0, 0), g1 * c, max_relative = 1e-14);
        assert_relative_eq!(a1.get(0, 1), -g1 * t, max_relative = 1e-14);
        assert_relative_eq!(a2.get(1, 0), g2 * t, max_relative = 1e-14);
        assert_relative_eq!(a2.get(1, 1), g2 * c, max_relative = 1e-14);
    }

    #[test]
    fn kozyakin_structure() {
        for k in 2..30 {
            for branch in [Branch::Stable, Branch::Unstable] {
                let set = kozyakin(k, branch).unwrap();
                assert_eq!(set.get(0).get(1, 0), 0.0);
                assert_eq!(set.get(0).get(1, 1), 0.0);
                let t = match branch {
                    Branch::Stable => (2.0 * PI / (2.0 * k as f64 + 1.0)).sin(),
                    Branch::Unstable => (PI / k as f64).sin(),
                };
                let outer = if branch == Branch::Stable { 1.0 - 1.0 / k as f64 } else { 1.0 };
                assert_relative_eq!(
                    operator_norm(set.get(1)),
                    outer * (1.0 - t.powi(4)),
                    max_relative = 1e-13
                );
            }
        }
        assert!(kozyakin(1, Branch::Stable).is_err());
        assert!(kozyakin(0, Branch::Unstable).is_err());
    }

    #[test]
    fn blondel_examples() {
        let set = blondel_et_al(0.5).unwrap();
        assert_eq!(set.get(1), &Matrix::from_2x2(0.5, 0.0, 0.5, 0.5));
        assert_eq!(spectral_radius(set.get(0)), 1.0);
        assert!(blondel_et_al(0.74).is_ok());
        assert!(blondel_et_al(0.75).is_err());
        assert!(blondel_et_al(ALPHA_STAR).is_err());
        assert!(blondel_et_al(0.0).is_err());
        assert!(blondel_et_al(-0.1).is_err());
    }

    #[test]
    fn lagarias_wang_examples() {
        let set = lagarias_wang(1, 1.2, false).unwrap();
        assert_eq!(set.get(1), &Matrix::from_2x2(0.0, 1.0 / 1.2, -1.0 / 1.2, 0.0));
        for k in 2..12 {
            let a = lagarias_wang_midpoint(k);
            let set = lagarias_wang(k, a, false).unwrap();
            assert_eq!(spectral_radius(set.get(0)), 0.0);
            let sq = word_product(&set, &[0, 0]).unwrap();
            assert_eq!(sq.product, Matrix::zeros(2));
        }
        assert!(lagarias_wang(3, 1.0, false).is_err());
        assert!(lagarias_wang(3, lagarias_wang_alpha_max(3), false).is_err());
        assert!(lagarias_wang(1, 1.2, true).is_err());
        let scaled = lagarias_wang(3, 1.05, true).unwrap();
        let raw = lagarias_wang(3, 1.05, false).unwrap();
        assert_relative_eq!(
            scaled.get(1).get(0, 0),
            raw.get(1).get(0, 0) * (2.0 / 3.0),
            max_relative = 1e-15
        );
    }

    #[test]
    fn experiment_parameters() {
        let (alpha, scale) = lagarias_wang_experiment_params(2).unwrap();
        assert_relative_eq!(alpha, (1.0 + 2f64.sqrt()) / 2.0, max_relative = 1e-15);
        assert_eq!(scale, 1.0 - 1.0 / 2000.0);
        for k in 2..40 {
            let (alpha, _) = lagarias_wang_experiment_params(k).unwrap();
            assert!(alpha > 1.0 && alpha < lagarias_wang_alpha_max(k));
            assert!(lagarias_wang_experiment(k).is_ok());
        }
        assert!(lagarias_wang_experiment(1).is_err());
        let set = lagarias_wang_experiment(2).unwrap();
        assert_relative_eq!(set.get(0).get(1, 0), scale * alpha * alpha, max_relative = 1e-15);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let sets = vec![
            kozyakin(7, Branch::Stable).unwrap(),
            kozyakin(7, Branch::Unstable).unwrap(),
            blondel_et_al(0.7).unwrap(),
            lagarias_wang(5, 1.01, true).unwrap(),
            lagarias_wang_experiment(6).unwrap(),
        ];
        for set in sets {
            let back = MatrixSet::from_json(&set.to_json()).unwrap();
            for (a, b) in set.matrices().iter().zip(back.matrices()) {
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            assert_eq!(set, back);
        }
    }
}
