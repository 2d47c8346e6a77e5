//! Finite-dimensional exterior algebra.
//!
//! Elements of Λᵐ(Rᵈ) are stored as coefficient vectors over the wedge basis
//! `e_I = e_{i₁} ∧ … ∧ e_{iₘ}`, with multi-indices `I` in lexicographic order.
//! The inner product is the one making this basis orthonormal, so the
//! adjoint of a linear map between exterior powers is its matrix transpose.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, KplaneError, Result};
use crate::grassmann::Plane;

/// Binomial coefficient C(n, k); zero when k > n.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// A strictly increasing list of axis indices, naming the basis element
/// `e_{i₁} ∧ … ∧ e_{iₘ}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>, dim: usize) -> Result<Self> {
        if entries.windows(2).any(|w| w[0] >= w[1]) {
            return domain(format!("multi-index {entries:?} is not strictly increasing"));
        }
        if entries.iter().any(|&i| i >= dim) {
            return domain(format!("multi-index {entries:?} exceeds dimension {dim}"));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    /// Position of this index in the lexicographic basis of Λᵐ(R^dim).
    pub fn rank(&self, dim: usize) -> usize {
        lex_rank(&self.0, dim)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (pos, i) in self.0.iter().enumerate() {
            if pos > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

pub(crate) fn lex_rank(entries: &[usize], dim: usize) -> usize {
    let m = entries.len();
    let mut rank = 0;
    let mut next = 0;
    for (pos, &c) in entries.iter().enumerate() {
        for v in next..c {
            rank += binomial(dim - 1 - v, m - 1 - pos);
        }
        next = c + 1;
    }
    rank
}

/// All m-subsets of `{0, …, d−1}` in lexicographic order.
pub fn basis_indices(d: usize, m: usize) -> Result<Vec<MultiIndex>> {
    if m > d {
        return domain(format!("degree {m} exceeds dimension {d}"));
    }
    Ok(raw_basis(d, m).into_iter().map(MultiIndex).collect())
}

pub(crate) fn raw_basis(d: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(d, m));
    let mut current: Vec<usize> = (0..m).collect();
    if m > d {
        return out;
    }
    loop {
        out.push(current.clone());
        // advance to the next combination
        let mut pos = m;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if current[pos] < d - m + pos {
                current[pos] += 1;
                for j in pos + 1..m {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// An element of Λᵐ(Rᵈ) in the lexicographic wedge basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MVector {
    dim: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

impl MVector {
    pub fn new(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if degree > dim {
            return domain(format!("degree {degree} exceeds dimension {dim}"));
        }
        let expected = binomial(dim, degree);
        if coeffs.len() != expected {
            return domain(format!(
                "Λ^{degree}(R^{dim}) has {expected} coordinates, got {}",
                coeffs.len()
            ));
        }
        Ok(Self { dim, degree, coeffs })
    }

    pub fn zeros(dim: usize, degree: usize) -> Self {
        Self { dim, degree, coeffs: vec![0.0; binomial(dim, degree)] }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        Self { dim, degree: 0, coeffs: vec![value] }
    }

    /// The degree-1 element with the given components.
    pub fn from_vector(components: &[f64]) -> Self {
        Self { dim: components.len(), degree: 1, coeffs: components.to_vec() }
    }

    /// The basis element `e_I`.
    pub fn basis(dim: usize, index: &MultiIndex) -> Result<Self> {
        let index = MultiIndex::new(index.0.clone(), dim)?;
        let mut v = Self::zeros(dim, index.degree());
        v.coeffs[index.rank(dim)] = 1.0;
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn dot(&self, other: &MVector) -> f64 {
        debug_assert_eq!((self.dim, self.degree), (other.dim, other.degree));
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect(), ..self.clone() }
    }

    /// Exterior product `self ∧ other`.
    pub fn wedge(&self, other: &MVector) -> Result<MVector> {
        if self.dim != other.dim {
            return domain(format!("wedge of R^{} and R^{} elements", self.dim, other.dim));
        }
        let (p, q, d) = (self.degree, other.degree, self.dim);
        if p + q > d {
            return domain(format!("wedge degree {} exceeds dimension {d}", p + q));
        }
        let left = raw_basis(d, p);
        let right = raw_basis(d, q);
        let mut out = MVector::zeros(d, p + q);
        let mut merged = Vec::with_capacity(p + q);
        for (a, ia) in self.coeffs.iter().zip(&left) {
            if *a == 0.0 {
                continue;
            }
            for (b, ib) in other.coeffs.iter().zip(&right) {
                if *b == 0.0 {
                    continue;
                }
                if let Some(sign) = shuffle_sign(ia, ib, &mut merged) {
                    out.coeffs[lex_rank(&merged, d)] += sign * a * b;
                }
            }
        }
        Ok(out)
    }
}

/// Merges two increasing index lists, returning the sign of the sorting
/// permutation, or `None` if they share an index.
fn shuffle_sign(left: &[usize], right: &[usize], merged: &mut Vec<usize>) -> Option<f64> {
    merged.clear();
    let mut inversions = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < left.len() || j < right.len() {
        if j == right.len() || (i < left.len() && left[i] < right[j]) {
            merged.push(left[i]);
            i += 1;
        } else if i == left.len() || right[j] < left[i] {
            // right[j] jumps over the remaining left entries
            inversions += left.len() - i;
            merged.push(right[j]);
            j += 1;
        } else {
            return None;
        }
    }
    Some(if inversions.is_multiple_of(2) { 1.0 } else { -1.0 })
}

impl Add for &MVector {
    type Output = MVector;
    fn add(self, rhs: &MVector) -> MVector {
        assert_eq!((self.dim, self.degree), (rhs.dim, rhs.degree), "mismatched m-vectors");
        MVector {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
            ..self.clone()
        }
    }
}

impl Sub for &MVector {
    type Output = MVector;
    fn sub(self, rhs: &MVector) -> MVector {
        assert_eq!((self.dim, self.degree), (rhs.dim, rhs.degree), "mismatched m-vectors");
        MVector {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
            ..self.clone()
        }
    }
}

impl Neg for &MVector {
    type Output = MVector;
    fn neg(self) -> MVector {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &MVector {
    type Output = MVector;
    fn mul(self, rhs: f64) -> MVector {
        self.scale(rhs)
    }
}

/// A linear map Λᵐ(R^src) → Λᵐ(R^dst) in wedge-basis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MOperator {
    src_dim: usize,
    dst_dim: usize,
    degree: usize,
    matrix: DMatrix<f64>,
}

impl MOperator {
    pub fn new(src_dim: usize, dst_dim: usize, degree: usize, matrix: DMatrix<f64>) -> Result<Self> {
        let shape = (binomial(dst_dim, degree), binomial(src_dim, degree));
        if matrix.shape() != shape {
            return domain(format!(
                "operator on Λ^{degree} from R^{src_dim} to R^{dst_dim} must be {shape:?}, got {:?}",
                matrix.shape()
            ));
        }
        Ok(Self { src_dim, dst_dim, degree, matrix })
    }

    pub fn identity(dim: usize, degree: usize) -> Self {
        let size = binomial(dim, degree);
        Self { src_dim: dim, dst_dim: dim, degree, matrix: DMatrix::identity(size, size) }
    }

    pub fn src_dim(&self) -> usize {
        self.src_dim
    }

    pub fn dst_dim(&self) -> usize {
        self.dst_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn transpose(&self) -> Self {
        Self {
            src_dim: self.dst_dim,
            dst_dim: self.src_dim,
            degree: self.degree,
            matrix: self.matrix.transpose(),
        }
    }

    pub fn apply(&self, v: &MVector) -> Result<MVector> {
        if v.dim != self.src_dim || v.degree != self.degree {
            return domain(format!(
                "operator expects Λ^{}(R^{}), got Λ^{}(R^{})",
                self.degree, self.src_dim, v.degree, v.dim
            ));
        }
        let mut out = MVector::zeros(self.dst_dim, self.degree);
        apply_matrix(&self.matrix, &v.coeffs, &mut out.coeffs);
        Ok(out)
    }

    /// `self ∘ rhs`.
    pub fn compose(&self, rhs: &MOperator) -> Result<MOperator> {
        if rhs.dst_dim != self.src_dim || rhs.degree != self.degree {
            return domain("incompatible operators in composition");
        }
        Ok(Self {
            src_dim: rhs.src_dim,
            dst_dim: self.dst_dim,
            degree: self.degree,
            matrix: &self.matrix * &rhs.matrix,
        })
    }
}

/// `out = matrix · v` on raw slices; the hot loops avoid allocating.
#[inline]
pub(crate) fn apply_matrix(matrix: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let (rows, cols) = matrix.shape();
    debug_assert_eq!(v.len(), cols);
    debug_assert_eq!(out.len(), rows);
    out.iter_mut().for_each(|o| *o = 0.0);
    for (c, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let column = matrix.column(c);
        for (o, a) in out.iter_mut().zip(column.iter()) {
            *o += a * x;
        }
    }
}

/// The matrix of Λᵐ(A) for `A: R^src → R^dst` (a `dst × src` matrix): entry
/// `(I, J)` is the minor of `A` with rows `I` and columns `J`.
///
/// Degrees up to 2 use closed-form minors; higher degrees wedge the columns
/// of `A` together.
pub fn induced_map(a: &DMatrix<f64>, m: usize) -> Result<MOperator> {
    let (dst, src) = a.shape();
    if m > dst || m > src {
        return domain(format!("degree {m} exceeds min({src}, {dst})"));
    }
    if m > 2 {
        return induced_map_by_wedge(a, m);
    }
    let rows = raw_basis(dst, m);
    let cols = raw_basis(src, m);
    let matrix = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let (i, j) = (&rows[r], &cols[c]);
        match m {
            0 => 1.0,
            1 => a[(i[0], j[0])],
            _ => a[(i[0], j[0])] * a[(i[1], j[1])] - a[(i[0], j[1])] * a[(i[1], j[0])],
        }
    });
    MOperator::new(src, dst, m, matrix)
}

/// Λᵐ(A) assembled column by column as `A e_{j₁} ∧ … ∧ A e_{jₘ}`.
pub fn induced_map_by_wedge(a: &DMatrix<f64>, m: usize) -> Result<MOperator> {
    let (dst, src) = a.shape();
    if m > dst || m > src {
        return domain(format!("degree {m} exceeds min({src}, {dst})"));
    }
    let cols = raw_basis(src, m);
    let images: Vec<MVector> =
        (0..src).map(|j| MVector::from_vector(a.column(j).as_slice())).collect();
    let mut matrix = DMatrix::zeros(binomial(dst, m), cols.len());
    for (c, j) in cols.iter().enumerate() {
        let mut acc = MVector::scalar(dst, 1.0);
        for &col in j {
            acc = acc.wedge(&images[col])?;
        }
        matrix.column_mut(c).copy_from_slice(&acc.coeffs);
    }
    MOperator::new(src, dst, m, matrix)
}

/// The inclusion Λᵐ(P) → Λᵐ(Rⁿ) induced by the frame of `plane`.
pub fn inclusion(plane: &Plane, m: usize) -> Result<MOperator> {
    induced_map(plane.frame(), m)
}

/// `v ↦ v|_P`, the adjoint of the inclusion Λᵐ(P) → Λᵐ(Rⁿ), returned in the
/// wedge basis of the plane's frame.
pub fn restrict_to_plane(v: &MVector, plane: &Plane) -> Result<MVector> {
    if v.dim() != plane.n() {
        return domain(format!("m-vector in R^{} restricted to a plane in R^{}", v.dim(), plane.n()));
    }
    if v.degree() > plane.k() {
        return domain(format!("degree {} exceeds plane dimension {}", v.degree(), plane.k()));
    }
    inclusion(plane, v.degree())?.transpose().apply(v)
}

/// Orthonormal frame (n × (n−1)) of the hyperplane orthogonal to `xi`,
/// obtained by Gram–Schmidt on `[ξ/|ξ|, e₀, …, e_{n−1}]` and dropping ξ.
pub fn hyperplane_frame(xi: &[f64]) -> Result<DMatrix<f64>> {
    let n = xi.len();
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return domain("hyperplane of a zero (or non-finite) frequency");
    }
    let mut basis: Vec<DVector<f64>> = vec![DVector::from_iterator(n, xi.iter().map(|x| x / norm))];
    for axis in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[axis] = 1.0;
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let len = v.norm();
        if len > 1e-8 {
            basis.push(v / len);
        }
    }
    let columns: Vec<DVector<f64>> = basis.into_iter().skip(1).collect();
    if columns.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    Ok(DMatrix::from_columns(&columns))
}

/// Orthogonal projections Π(ξ) onto Λᵐ(H_ξ) and Ψ(ξ) = I − Π(ξ), where H_ξ is
/// the hyperplane orthogonal to ξ.
pub fn hyperplane_projections(xi: &[f64], m: usize) -> Result<(MOperator, MOperator)> {
    let n = xi.len();
    if m > n {
        return domain(format!("degree {m} exceeds dimension {n}"));
    }
    let frame = hyperplane_frame(xi)?;
    let size = binomial(n, m);
    let pi = if m > n - 1 {
        DMatrix::zeros(size, size)
    } else {
        let incl = induced_map(&frame, m)?.into_matrix();
        &incl * incl.transpose()
    };
    let psi = DMatrix::identity(size, size) - &pi;
    Ok((MOperator::new(n, n, m, pi)?, MOperator::new(n, n, m, psi)?))
}

/// Surface measure of the unit sphere S^{d−1} ⊂ Rᵈ, `2π^{d/2}/Γ(d/2)`.
pub fn sphere_volume(d: usize) -> Result<f64> {
    match d {
        0 => domain("sphere volume needs d ≥ 1"),
        1 => Ok(2.0),
        2 => Ok(2.0 * PI),
        _ => Ok(2.0 * PI / (d as f64 - 2.0) * sphere_volume(d - 2)?),
    }
}

pub(crate) fn check_degrees(n: usize, k: usize, m: usize) -> Result<()> {
    if m < k && k < n {
        Ok(())
    } else {
        domain(format!("need 0 ≤ m < k < n, got (n, k, m) = ({n}, {k}, {m})"))
    }
}

/// The scalar prefactor `c` of the symbol,
/// `c = k·|S^{n−1}|·C(n−1, m) / (|S^{k−1}|·C(k, m))`.
///
/// With this constant the Fourier symbol of ℛ*ℛ is exactly `|ξ|^{k−n} h(ξ)^{-1}`
/// for the probability measure on G(k, n).
pub fn symbol_constant(n: usize, k: usize, m: usize) -> Result<f64> {
    check_degrees(n, k, m)?;
    Ok(k as f64 * sphere_volume(n)? * binomial(n - 1, m) as f64
        / (sphere_volume(k)? * binomial(k, m) as f64))
}

/// The two eigenvalues of h(ξ): on Λᵐ(H_ξ) and on its orthocomplement.
pub fn symbol_eigenvalues(n: usize, k: usize, m: usize) -> Result<(f64, f64)> {
    let c = symbol_constant(n, k, m)?;
    Ok((c / (k - m) as f64, c / (n - m) as f64))
}

/// The 0-homogeneous symbol `h(ξ) = c·[Π(ξ)/(k−m) + Ψ(ξ)/(n−m)]`.
pub fn symbol_h(xi: &[f64], n: usize, k: usize, m: usize) -> Result<MOperator> {
    check_degrees(n, k, m)?;
    if xi.len() != n {
        return domain(format!("frequency has {} components, expected {n}", xi.len()));
    }
    let (on_h, off_h) = symbol_eigenvalues(n, k, m)?;
    let (pi, psi) = hyperplane_projections(xi, m)?;
    MOperator::new(n, n, m, pi.into_matrix() * on_h + psi.into_matrix() * off_h)
}

/// Π(ξ) built as Λᵐ(I − ξ̂ξ̂ᵀ); no frame of the hyperplane is needed.
pub(crate) fn hyperplane_projector_matrix(xi: &[f64], m: usize) -> Result<DMatrix<f64>> {
    let n = xi.len();
    let norm2: f64 = xi.iter().map(|x| x * x).sum();
    if !(norm2 > 0.0) {
        return Err(KplaneError::Domain("hyperplane of a zero frequency".into()));
    }
    let proj = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - xi[i] * xi[j] / norm2
    });
    Ok(induced_map(&proj, m)?.into_matrix())
}
