//! Dense small-matrix primitives shared by every other module.
//!
//! Matrices here are square, real and tiny (n ≤ 8). Words index into a
//! [`MatrixSet`] with zero-based indices; the word `(σ_1, …, σ_t)` applies
//! `σ_1` first, so its product is `A_{σ_t} ⋯ A_{σ_1}`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 8;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Malformed("matrix has no rows".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Malformed(format!(
                    "row {i} has {} entries, expected {n} (matrices must be square)",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(n, data)
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::Malformed(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Malformed(format!(
                "entry ({}, {}) is not finite",
                pos / n,
                pos % n
            )));
        }
        Ok(Matrix { n, data })
    }

    /// 2×2 matrix from its entries in row-major order.
    pub fn from_2x2(a: f64, b: f64, c: f64, d: f64) -> Self {
        Matrix { n: 2, data: vec![a, b, c, d] }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Planar rotation by `theta` radians.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::from_2x2(c, -s, s, c)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        Matrix { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    /// Matrix product `self · rhs`.
    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        Matrix { n, data: out }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..n).map(|j| self.data[i * n + j] * x[j]).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(m[(i, j)]);
            }
        }
        Self::from_row_major(n, data)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.n)).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.rows()
    }
}

/// The finite set Σ = {A_1, …, A_m} defining a switched system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrixSet", into = "RawMatrixSet")]
pub struct MatrixSet {
    n: usize,
    label: String,
    matrices: Vec<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrixSet {
    n: usize,
    label: String,
    matrices: Vec<Matrix>,
}

impl TryFrom<RawMatrixSet> for MatrixSet {
    type Error = Error;

    fn try_from(raw: RawMatrixSet) -> Result<Self> {
        let set = MatrixSet::new(raw.label, raw.matrices)?;
        if set.n != raw.n {
            return Err(Error::Malformed(format!(
                "declared n = {} but matrices are {}x{}",
                raw.n, set.n, set.n
            )));
        }
        Ok(set)
    }
}

impl From<MatrixSet> for RawMatrixSet {
    fn from(s: MatrixSet) -> Self {
        RawMatrixSet { n: s.n, label: s.label, matrices: s.matrices }
    }
}

impl MatrixSet {
    pub fn new(label: impl Into<String>, matrices: Vec<Matrix>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::Malformed("a matrix set needs at least one matrix".into()))?;
        let n = first.dim();
        if n > MAX_DIM {
            return Err(Error::Envelope(format!("dimension {n} exceeds the limit {MAX_DIM}")));
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.dim() != n {
                return Err(Error::Malformed(format!(
                    "matrix {i} is {}x{}, expected {n}x{n}",
                    m.dim(),
                    m.dim()
                )));
            }
        }
        Ok(MatrixSet { n, label: label.into(), matrices })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn get(&self, i: usize) -> &Matrix {
        &self.matrices[i]
    }

    /// The set `cΣ`.
    pub fn scaled(&self, c: f64) -> MatrixSet {
        MatrixSet {
            n: self.n,
            label: self.label.clone(),
            matrices: self.matrices.iter().map(|m| m.scale(c)).collect(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix sets always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Malformed(e.to_string()))
    }

    fn check_word(&self, word: &[usize]) -> Result<()> {
        match word.iter().find(|&&i| i >= self.len()) {
            Some(&index) => Err(Error::IndexOutOfRange { index, count: self.len() }),
            None => Ok(()),
        }
    }
}

/// A word over the matrix alphabet together with its evaluated product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductWord {
    pub word: Vec<usize>,
    pub product: Matrix,
}

impl ProductWord {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// `ρ(product)^{1/len}`.
    pub fn averaged_spectral_radius(&self) -> f64 {
        spectral_radius(&self.product).powf(1.0 / self.word.len() as f64)
    }
}

/// Evaluates `A_{σ_t} ⋯ A_{σ_1}` for the word `(σ_1, …, σ_t)`.
pub fn word_product(set: &MatrixSet, word: &[usize]) -> Result<ProductWord> {
    if word.is_empty() {
        return Err(Error::param("words must have length at least 1"));
    }
    set.check_word(word)?;
    let mut product = set.get(word[0]).clone();
    for &i in &word[1..] {
        product = set.get(i).mul(&product);
    }
    Ok(ProductWord { word: word.to_vec(), product })
}

/// Trajectory `(x_0, …, x_t)` of the switched system under `word`.
pub fn simulate(set: &MatrixSet, word: &[usize], x0: &[f64]) -> Result<Vec<Vec<f64>>> {
    if x0.len() != set.dim() {
        return Err(Error::DimensionMismatch { expected: set.dim(), found: x0.len() });
    }
    set.check_word(word)?;
    let mut traj = Vec::with_capacity(word.len() + 1);
    traj.push(x0.to_vec());
    for &i in word {
        let next = set.get(i).apply(traj.last().unwrap());
        traj.push(next);
    }
    Ok(traj)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Matrix) -> f64 {
    match a.dim() {
        1 => a.get(0, 0).abs(),
        2 => spectral_radius_2x2(a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1)),
        _ => a
            .to_dmatrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

#[inline]
pub(crate) fn spectral_radius_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    // discriminant of the characteristic polynomial, written without the
    // cancellation-prone tr²/4 - det form
    let disc = half_diff * half_diff + b * c;
    if disc >= 0.0 {
        half_tr.abs() + disc.sqrt()
    } else {
        // complex pair: |λ|² = det
        (a * d - b * c).max(0.0).sqrt()
    }
}

/// Spectral norm (largest singular value).
pub fn operator_norm(a: &Matrix) -> f64 {
    match a.dim() {
        1 => a.get(0, 0).abs(),
        2 => operator_norm_2x2(a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1)),
        _ => a.to_dmatrix().singular_values().iter().copied().fold(0.0, f64::max),
    }
}

#[inline]
pub(crate) fn operator_norm_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let p = (a + d).hypot(b - c);
    let q = (a - d).hypot(b + c);
    0.5 * (p + q)
}

/// Leading eigenvector of a 2×2 matrix. For a complex pair the real and
/// imaginary parts are returned as two vectors.
pub(crate) fn leading_eigvecs_2x2(m: &Matrix) -> Vec<[f64; 2]> {
    let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    if disc >= 0.0 {
        let lam = if half_tr >= 0.0 { half_tr + disc.sqrt() } else { half_tr - disc.sqrt() };
        let v1 = [b, lam - a];
        let v2 = [lam - d, c];
        let n1 = v1[0].hypot(v1[1]);
        let n2 = v2[0].hypot(v2[1]);
        let scale = n1.max(n2);
        if scale <= 1e-300 {
            // scalar matrix: every direction is an eigenvector
            return vec![[1.0, 0.0]];
        }
        if n1 >= n2 {
            vec![[v1[0] / n1, v1[1] / n1]]
        } else {
            vec![[v2[0] / n2, v2[1] / n2]]
        }
    } else {
        let im = (-disc).sqrt();
        // (A - λI)v = 0 with v = (b, λ - a), λ = half_tr + i·im
        vec![[b, half_tr - a], [0.0, im]]
    }
}

/// `count` random unit vectors in `ℝⁿ`, uniform on the sphere (rejection
/// sampling from the cube), reproducible from `seed`.
pub fn random_unit_vectors(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            out.push(v.into_iter().map(|x| x / r).collect());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&Matrix::from_2x2(0.0, 0.0, 1.0, 0.0)), 0.0);
        assert_eq!(spectral_radius(&Matrix::from_2x2(1.0, 1.0, 0.0, 1.0)), 1.0);
        // complex pair
        let r = Matrix::rotation(0.7).scale(0.9);
        assert_relative_eq!(spectral_radius(&r), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn blondel_product_spectral_radius_matches_quadratic_roots() {
        // A1·A2 = [[1,1],[0,1]]·0.7[[1,0],[1,1]] = 0.7[[2,1],[1,1]]
        let a1 = Matrix::from_2x2(1.0, 1.0, 0.0, 1.0);
        let a2 = Matrix::from_2x2(0.7, 0.0, 0.7, 0.7);
        let p = a1.mul(&a2);
        // roots of λ² - tr λ + det with tr = 2.1, det = 0.49
        let (tr, det) = (2.1_f64, 0.49_f64);
        let oracle = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
        assert_relative_eq!(spectral_radius(&p), oracle, max_relative = 1e-14);
        // mpmath eigenvalue at 30 digits: 1.83262379212492627747914624
        assert_relative_eq!(oracle, 1.832_623_792_124_926_3, max_relative = 1e-14);
    }

    #[test]
    fn operator_norm_examples() {
        assert_eq!(operator_norm(&Matrix::identity(2)), 1.0);
        assert_eq!(operator_norm(&Matrix::diag(&[2.0, 0.5])), 2.0);
        for k in 0..12 {
            let r = Matrix::rotation(0.37 * k as f64);
            assert_relative_eq!(operator_norm(&r), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn larger_dimensions_use_dense_routines() {
        let m = Matrix::diag(&[0.5, -3.0, 2.0]);
        assert_relative_eq!(spectral_radius(&m), 3.0, max_relative = 1e-10);
        assert_relative_eq!(operator_norm(&m), 3.0, max_relative = 1e-10);
        // companion matrix of (λ-1)(λ-2)(λ+4) = λ³ + λ² - 10λ + 8
        let c = Matrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![-8.0, 10.0, -1.0],
        ])
        .unwrap();
        assert_relative_eq!(spectral_radius(&c), 4.0, max_relative = 1e-10);
    }

    #[test]
    fn word_product_examples() {
        let a = Matrix::from_2x2(1.0, 2.0, 3.0, 4.0);
        let b = Matrix::from_2x2(0.0, 1.0, -1.0, 0.5);
        let set = MatrixSet::new("ab", vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(word_product(&set, &[0]).unwrap().product, a);

        let twice = MatrixSet::new("2I", vec![Matrix::identity(2).scale(2.0)]).unwrap();
        assert_eq!(
            word_product(&twice, &[0, 0]).unwrap().product,
            Matrix::identity(2).scale(4.0)
        );

        // word (1,0): apply B first, then A → A·B
        let p = word_product(&set, &[1, 0]).unwrap().product;
        let manual = Matrix::from_2x2(
            1.0 * 0.0 + 2.0 * -1.0,
            1.0 * 1.0 + 2.0 * 0.5,
            3.0 * 0.0 + 4.0 * -1.0,
            3.0 * 1.0 + 4.0 * 0.5,
        );
        assert_eq!(p, manual);

        assert!(matches!(
            word_product(&set, &[0, 2]),
            Err(Error::IndexOutOfRange { index: 2, count: 2 })
        ));
        assert!(word_product(&set, &[]).is_err());
    }

    #[test]
    fn simulate_examples() {
        let half = MatrixSet::new("half", vec![Matrix::identity(2).scale(0.5)]).unwrap();
        assert_eq!(simulate(&half, &[], &[1.0, 0.0]).unwrap(), vec![vec![1.0, 0.0]]);
        assert_eq!(
            simulate(&half, &[0, 0], &[1.0, 0.0]).unwrap(),
            vec![vec![1.0, 0.0], vec![0.5, 0.0], vec![0.25, 0.0]]
        );
        assert!(matches!(
            simulate(&half, &[0], &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn json_rejects_bad_shapes() {
        assert!(MatrixSet::from_json(r#"{"n":2,"label":"x","matrices":[]}"#).is_err());
        assert!(MatrixSet::from_json(r#"{"n":2,"label":"x","matrices":[[[1,2],[3]]]}"#).is_err());
        assert!(MatrixSet::from_json(r#"{"n":3,"label":"x","matrices":[[[1,2],[3,4]]]}"#).is_err());
        let ok = MatrixSet::from_json(r#"{"n":2,"label":"x","matrices":[[[1,2],[3,4]]]}"#).unwrap();
        assert_eq!(ok.get(0).get(1, 0), 3.0);
    }

    #[test]
    fn leading_eigvec_of_real_matrix() {
        let m = Matrix::from_2x2(2.0, 1.0, 1.0, 2.0);
        let v = leading_eigvecs_2x2(&m);
        assert_eq!(v.len(), 1);
        let mv = m.apply(&v[0]);
        assert_relative_eq!(mv[0], 3.0 * v[0][0], epsilon = 1e-12);
        assert_relative_eq!(mv[1], 3.0 * v[0][1], epsilon = 1e-12);
    }
}
