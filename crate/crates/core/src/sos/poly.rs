//! Homogeneous polynomials with dense coefficients over a graded-lex basis.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Exponent vectors of total degree `d` in `n` variables, lexicographically
/// descending (`x₁ᵈ` first, `x_nᵈ` last).
pub fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n - 1 {
            prefix.push(d);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=d).rev() {
            prefix.push(e);
            rec(n, d - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, d, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// Position lookup for [`monomials`].
#[derive(Clone, Debug)]
pub struct MonomialIndex {
    pub basis: Vec<Vec<u32>>,
    pos: HashMap<Vec<u32>, usize>,
}

impl MonomialIndex {
    pub fn new(n: usize, d: u32) -> Self {
        let basis = monomials(n, d);
        let pos = basis.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        MonomialIndex { basis, pos }
    }

    pub fn get(&self, exps: &[u32]) -> Option<usize> {
        self.pos.get(exps).copied()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousPolynomial {
    n: usize,
    d: u32,
    /// Aligned with `monomials(n, d)`.
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTerm {
    exponents: Vec<u32>,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPolynomial {
    n: usize,
    d: u32,
    terms: Vec<RawTerm>,
}

impl Serialize for HomogeneousPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let terms = monomials(self.n, self.d)
            .into_iter()
            .zip(&self.coeffs)
            .map(|(exponents, &coef)| RawTerm { exponents, coef })
            .collect();
        RawPolynomial { n: self.n, d: self.d, terms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for HomogeneousPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawPolynomial::deserialize(de)?;
        HomogeneousPolynomial::from_terms(raw.n, raw.d, raw.terms.iter().map(|t| (t.exponents.as_slice(), t.coef)))
            .map_err(serde::de::Error::custom)
    }
}

impl HomogeneousPolynomial {
    pub fn zero(n: usize, d: u32) -> Self {
        let len = monomials(n, d).len();
        HomogeneousPolynomial { n, d, coeffs: vec![0.0; len] }
    }

    /// Sums repeated terms; rejects exponents of the wrong length or degree.
    pub fn from_terms<'a>(n: usize, d: u32, terms: impl IntoIterator<Item = (&'a [u32], f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("polynomial needs at least one variable"));
        }
        let idx = MonomialIndex::new(n, d);
        let mut coeffs = vec![0.0; idx.len()];
        for (e, c) in terms {
            if e.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: e.len() });
            }
            let pos = idx
                .get(e)
                .ok_or_else(|| Error::param(format!("exponent {e:?} does not have total degree {d}")))?;
            if !c.is_finite() {
                return Err(Error::param("polynomial coefficient is not finite"));
            }
            coeffs[pos] += c;
        }
        Ok(HomogeneousPolynomial { n, d, coeffs })
    }

    pub fn from_coeffs(n: usize, d: u32, coeffs: Vec<f64>) -> Result<Self> {
        let len = monomials(n, d).len();
        if coeffs.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: coeffs.len() });
        }
        Ok(HomogeneousPolynomial { n, d, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.d
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, exps: &[u32]) -> f64 {
        MonomialIndex::new(self.n, self.d).get(exps).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        monomials(self.n, self.d)
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        HomogeneousPolynomial { n: self.n, d: self.d, coeffs: self.coeffs.iter().map(|v| c * v).collect() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(HomogeneousPolynomial { n: self.n, d: self.d, coeffs })
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        if self.d != other.d {
            return Err(Error::param(format!("degree mismatch: {} vs {}", self.d, other.d)));
        }
        Ok(())
    }

    /// Largest coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `x ↦ p(Ax)`.
    pub fn compose_linear(&self, a: &Matrix) -> Result<Self> {
        if a.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: a.dim() });
        }
        let m = composition_matrix(self.n, self.d, a);
        let coeffs = (&m * nalgebra::DVector::from_column_slice(&self.coeffs)).iter().copied().collect();
        Ok(HomogeneousPolynomial { n: self.n, d: self.d, coeffs })
    }
}

/// Dense product of two homogeneous polynomials given as coefficient
/// vectors over their graded-lex bases.
fn multiply(n: usize, da: u32, a: &[f64], db: u32, b: &[f64]) -> Vec<f64> {
    let ba = monomials(n, da);
    let bb = monomials(n, db);
    let out_idx = MonomialIndex::new(n, da + db);
    let mut out = vec![0.0; out_idx.len()];
    let mut e = vec![0; n];
    for (ea, ca) in ba.iter().zip(a) {
        if *ca == 0.0 {
            continue;
        }
        for (eb, cb) in bb.iter().zip(b) {
            if *cb == 0.0 {
                continue;
            }
            for k in 0..n {
                e[k] = ea[k] + eb[k];
            }
            out[out_idx.get(&e).expect("degree adds up")] += ca * cb;
        }
    }
    out
}

/// Matrix `M` with `coeffs(p ∘ A) = M · coeffs(p)` for degree-`d` forms in
/// `n` variables. Column `s` holds the expansion of the `s`-th monomial
/// evaluated at `Ax`.
pub fn composition_matrix(n: usize, d: u32, a: &Matrix) -> DMatrix<f64> {
    let basis = monomials(n, d);
    // powers[i][k] = (row_i(A)·x)^k as a degree-k form
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
    let powers: Vec<Vec<Vec<f64>>> = rows
        .iter()
        .map(|row| {
            // degree-1 basis is e_1, …, e_n in that order
            let mut p = vec![vec![1.0]];
            for k in 1..=d {
                let next = multiply(n, k - 1, &p[(k - 1) as usize], 1, row);
                p.push(next);
            }
            p
        })
        .collect();
    let mut m = DMatrix::zeros(basis.len(), basis.len());
    for (s, e) in basis.iter().enumerate() {
        let mut acc = vec![1.0];
        let mut deg = 0;
        for (i, &k) in e.iter().enumerate() {
            if k == 0 {
                continue;
            }
            acc = multiply(n, deg, &acc, k, &powers[i][k as usize]);
            deg += k;
        }
        for (t, v) in acc.into_iter().enumerate() {
            m[(t, s)] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn graded_lex_order() {
        assert_eq!(monomials(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(
            monomials(3, 2),
            vec![vec![2, 0, 0], vec![1, 1, 0], vec![1, 0, 1], vec![0, 2, 0], vec![0, 1, 1], vec![0, 0, 2]]
        );
        assert_eq!(monomials(2, 24).len(), 25);
        assert_eq!(monomials(3, 12).len(), 91);
    }

    #[test]
    fn compose_examples() {
        let p = HomogeneousPolynomial::from_terms(2, 2, [(&[2, 0][..], 1.0), (&[0, 2][..], 1.0)]).unwrap();
        let swap = Matrix::from_2x2(0.0, 1.0, 1.0, 0.0);
        assert_eq!(p.compose_linear(&swap).unwrap(), p);
        let twice = p.compose_linear(&Matrix::identity(2).scale(2.0)).unwrap();
        assert_eq!(twice.coeffs(), &[4.0, 0.0, 4.0]);

        // x⁴ ∘ [[1,1],[0,1]] = (x + y)⁴
        let x4 = HomogeneousPolynomial::from_terms(2, 4, [(&[4, 0][..], 1.0)]).unwrap();
        let q = x4.compose_linear(&Matrix::from_2x2(1.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!(q.coeffs(), &[1.0, 4.0, 6.0, 4.0, 1.0]);
        assert!(x4.compose_linear(&Matrix::identity(3)).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let p = HomogeneousPolynomial::from_coeffs(2, 2, vec![1.0, -0.25, 3.0]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: HomogeneousPolynomial = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<HomogeneousPolynomial>(
            r#"{"n":2,"d":2,"terms":[{"exponents":[1,0],"coef":1.0}]}"#
        )
        .is_err());
    }

    fn small_matrix(n: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-1.5f64..1.5, n * n).prop_map(move |v| Matrix::from_row_major(n, v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn composition_is_functorial(
            coeffs in prop::collection::vec(-1.0f64..1.0, 7),
            a in small_matrix(2),
            b in small_matrix(2),
        ) {
            let p = HomogeneousPolynomial::from_coeffs(2, 6, coeffs).unwrap();
            let lhs = p.compose_linear(&a).unwrap().compose_linear(&b).unwrap();
            let rhs = p.compose_linear(&a.mul(&b)).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + rhs.coeffs().iter().map(|c| c.abs()).fold(0.0, f64::max)));
        }

        #[test]
        fn composition_matches_evaluation(
            coeffs in prop::collection::vec(-1.0f64..1.0, 10),
            a in small_matrix(3),
            x in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let p = HomogeneousPolynomial::from_coeffs(3, 3, coeffs).unwrap();
            let q = p.compose_linear(&a).unwrap();
            let direct = p.eval(&a.apply(&x));
            prop_assert!((q.eval(&x) - direct).abs() <= 1e-11 * (1.0 + direct.abs()));
        }
    }
}
