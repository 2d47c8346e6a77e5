//! Points of the Grassmannian G(k, n) and discretizations of its invariant
//! probability measure.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, KplaneError, Result};
use crate::random::stream_rng;

const FRAME_TOL: f64 = 1e-10;

/// A k-dimensional linear subspace of Rⁿ, carried by an orthonormal frame.
///
/// Two planes are the same point of G(k, n) when their projectors agree;
/// the frame fixes the coordinates used for Λᵐ(P).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    frame: DMatrix<f64>,
}

impl Plane {
    pub fn from_frame(frame: DMatrix<f64>) -> Result<Self> {
        let (n, k) = frame.shape();
        if k == 0 || k > n {
            return domain(format!("frame of shape {n}×{k} does not describe a proper plane"));
        }
        let gram = frame.transpose() * &frame;
        let err = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if !(err <= FRAME_TOL) {
            return domain(format!("frame columns are not orthonormal (error {err:.3e})"));
        }
        Ok(Self { frame })
    }

    /// The span of the given columns, orthonormalized by QR.
    pub fn spanned_by(vectors: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = vectors.shape();
        if k == 0 || k > n {
            return domain("need 1 ≤ k ≤ n spanning vectors");
        }
        let qr = vectors.clone().qr();
        let r = qr.r();
        if (0..k).any(|i| r[(i, i)].abs() < 1e-12) {
            return domain("spanning vectors are linearly dependent");
        }
        Self::from_frame(qr.q())
    }

    /// The span of the listed coordinate axes.
    pub fn coordinate(n: usize, axes: &[usize]) -> Result<Self> {
        if axes.iter().any(|&a| a >= n) {
            return domain(format!("axis out of range for R^{n}"));
        }
        let mut frame = DMatrix::zeros(n, axes.len());
        for (col, &axis) in axes.iter().enumerate() {
            frame[(axis, col)] = 1.0;
        }
        Self::from_frame(frame)
    }

    pub fn n(&self) -> usize {
        self.frame.nrows()
    }

    pub fn k(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// The orthogonal projector `F Fᵀ` onto the plane.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }

    /// Image of the plane under an orthogonal map, with frame `ρF`.
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Result<Self> {
        if rotation.shape() != (self.n(), self.n()) {
            return domain("rotation has the wrong shape");
        }
        Self::from_frame(rotation * &self.frame)
    }

    pub fn same_subspace(&self, other: &Plane, tol: f64) -> bool {
        self.n() == other.n()
            && self.k() == other.k()
            && (self.projector() - other.projector()).amax() <= tol
    }
}

/// Orthogonal projection of `x` onto the plane: the frame coordinates
/// `Fᵀx` and the ambient point `x_P = F Fᵀ x`.
pub fn project_point(plane: &Plane, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != plane.n() {
        return domain(format!("point in R^{} projected onto a plane in R^{}", x.len(), plane.n()));
    }
    let f = plane.frame();
    let coords: Vec<f64> = (0..plane.k())
        .map(|j| f.column(j).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    let ambient: Vec<f64> = (0..plane.n())
        .map(|i| (0..plane.k()).map(|j| f[(i, j)] * coords[j]).sum())
        .collect();
    Ok((coords, ambient))
}

/// A deterministic orthonormal frame of P⊥.
///
/// Coordinate axes are projected off P (and off the vectors already chosen),
/// taking at each step the axis with the largest remaining component.
pub fn complement_frame(plane: &Plane) -> Result<Plane> {
    let (n, k) = (plane.n(), plane.k());
    if k == n {
        return domain("the complement of the whole space is trivial");
    }
    let mut basis: Vec<DVector<f64>> = (0..k).map(|j| plane.frame().column(j).into_owned()).collect();
    let mut chosen = Vec::with_capacity(n - k);
    let mut used = vec![false; n];
    while chosen.len() < n - k {
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for axis in (0..n).filter(|&a| !used[a]) {
            let mut v = DVector::zeros(n);
            v[axis] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dot(&v);
                    v.axpy(-proj, b, 1.0);
                }
            }
            let len = v.norm();
            if best.as_ref().is_none_or(|(_, _, l)| len > *l + 1e-12) {
                best = Some((axis, v, len));
            }
        }
        let (axis, v, len) = best.ok_or_else(|| KplaneError::Internal("complement exhausted".into()))?;
        used[axis] = true;
        let unit = v / len;
        basis.push(unit.clone());
        chosen.push(unit);
    }
    Plane::from_frame(DMatrix::from_columns(&chosen))
}

/// Projector-gap distance `‖π_P − π_Q‖₂`, a metric on G(k, n) with values in
/// [0, 1] (the sine of the largest principal angle).
pub fn distance(p: &Plane, q: &Plane) -> Result<f64> {
    if p.n() != q.n() || p.k() != q.k() {
        return domain(format!(
            "distance between G({}, {}) and G({}, {})",
            p.k(),
            p.n(),
            q.k(),
            q.n()
        ));
    }
    let diff = p.projector() - q.projector();
    let eig = SymmetricEigen::new(diff);
    Ok(eig.eigenvalues.iter().fold(0.0f64, |acc, e| acc.max(e.abs())).min(1.0))
}

/// A weighted finite set of planes approximating the invariant probability
/// measure dP on G(k, n).
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSet {
    n: usize,
    k: usize,
    planes: Vec<Plane>,
    weights: Vec<f64>,
    seed: Option<u64>,
}

impl PlaneSet {
    pub fn new(planes: Vec<Plane>, weights: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        let first = planes.first().ok_or_else(|| KplaneError::Domain("empty plane set".into()))?;
        let (n, k) = (first.n(), first.k());
        if planes.iter().any(|p| p.n() != n || p.k() != k) {
            return domain("plane set mixes Grassmannians");
        }
        if weights.len() != planes.len() {
            return domain("one weight per plane required");
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return domain("weights must be nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("weights sum to {total}, not 1"));
        }
        Ok(Self { n, k, planes, weights, seed })
    }

    /// Equal weights `1/len`.
    pub fn uniform(planes: Vec<Plane>, seed: Option<u64>) -> Result<Self> {
        let w = 1.0 / planes.len().max(1) as f64;
        let weights = vec![w; planes.len()];
        Self::new(planes, weights, seed)
    }

    /// A single plane carrying all the mass.
    pub fn single(plane: Plane) -> Self {
        Self { n: plane.n(), k: plane.k(), planes: vec![plane], weights: vec![1.0], seed: None }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Plane, f64)> {
        self.planes.iter().zip(self.weights.iter().copied())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PlaneSetDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PlaneSetDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// JSON layout of a [`PlaneSet`]: frames are row-major `n × k` arrays.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlaneSetDoc {
    pub n: usize,
    pub k: usize,
    pub frames: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl From<&PlaneSet> for PlaneSetDoc {
    fn from(set: &PlaneSet) -> Self {
        let frames = set
            .planes
            .iter()
            .map(|p| {
                let f = p.frame();
                (0..set.n).flat_map(|i| (0..set.k).map(move |j| f[(i, j)])).collect()
            })
            .collect();
        Self { n: set.n, k: set.k, frames, weights: set.weights.clone(), seed: set.seed }
    }
}

impl TryFrom<PlaneSetDoc> for PlaneSet {
    type Error = KplaneError;

    fn try_from(doc: PlaneSetDoc) -> Result<Self> {
        let planes = doc
            .frames
            .iter()
            .map(|rows| {
                if rows.len() != doc.n * doc.k {
                    return domain(format!("frame has {} entries, expected {}", rows.len(), doc.n * doc.k));
                }
                Plane::from_frame(DMatrix::from_row_slice(doc.n, doc.k, rows))
            })
            .collect::<Result<Vec<_>>>()?;
        let set = PlaneSet::new(planes, doc.weights, doc.seed)?;
        if set.n != doc.n || set.k != doc.k {
            return domain("declared (n, k) disagrees with the frames");
        }
        Ok(set)
    }
}

fn check_grassmannian(n: usize, k: usize) -> Result<()> {
    if 0 < k && k < n {
        Ok(())
    } else {
        domain(format!("G({k}, {n}) needs 0 < k < n"))
    }
}

/// One Haar-distributed plane: the column span of a Gaussian `n × k` matrix.
pub fn haar_plane<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Plane> {
    check_grassmannian(n, k)?;
    let gaussian = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    Plane::from_frame(gaussian.qr().q())
}

/// `count` i.i.d. Haar samples from G(k, n) with weights `1/count`.
pub fn sample_haar(n: usize, k: usize, count: usize, seed: u64) -> Result<PlaneSet> {
    check_grassmannian(n, k)?;
    if count == 0 {
        return domain("need at least one sample");
    }
    let mut rng = stream_rng(seed, 0);
    let planes = (0..count).map(|_| haar_plane(n, k, &mut rng)).collect::<Result<Vec<_>>>()?;
    PlaneSet::uniform(planes, Some(seed))
}

/// Deterministic equal-weight rules on the spheres G(1, n) ≅ G(n−1, n):
/// equally spaced angles in [0, π) for n = 2, a Fibonacci lattice on the upper
/// hemisphere for n = 3. For k = n − 1 the planes are the orthocomplements
/// of the k = 1 rule.
pub fn fixed_quadrature(n: usize, k: usize, resolution: usize) -> Result<PlaneSet> {
    check_grassmannian(n, k)?;
    if resolution == 0 {
        return domain("resolution must be positive");
    }
    if k != 1 && k != n - 1 {
        return Err(KplaneError::Unsupported(format!(
            "no deterministic quadrature on G({k}, {n}); use Haar sampling"
        )));
    }
    let directions: Vec<Vec<f64>> = match n {
        2 => (0..resolution)
            .map(|j| {
                let t = PI * j as f64 / resolution as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..resolution)
                .map(|i| {
                    let z = (i as f64 + 0.5) / resolution as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            return Err(KplaneError::Unsupported(format!(
                "sphere quadrature implemented for n ∈ {{2, 3}}, got n = {n}"
            )))
        }
    };
    let planes = directions
        .into_iter()
        .map(|d| {
            let line = Plane::from_frame(DMatrix::from_column_slice(n, 1, &d))?;
            if k == 1 {
                Ok(line)
            } else {
                complement_frame(&line)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    PlaneSet::uniform(planes, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_plane(n: usize, k: usize, seed: u64) -> Plane {
        haar_plane(n, k, &mut stream_rng(seed, 99)).unwrap()
    }

    #[test]
    fn frames_are_orthonormal() {
        let set = sample_haar(5, 3, 20, 4).unwrap();
        for p in set.planes() {
            let gram = p.frame().transpose() * p.frame();
            assert!((gram - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        }
        assert!((set.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_sampling_is_deterministic() {
        assert_eq!(sample_haar(4, 2, 10, 3).unwrap(), sample_haar(4, 2, 10, 3).unwrap());
        assert_ne!(sample_haar(4, 2, 10, 3).unwrap(), sample_haar(4, 2, 10, 4).unwrap());
    }

    #[test]
    fn haar_rejects_bad_dimensions() {
        assert!(sample_haar(3, 3, 5, 0).is_err());
        assert!(sample_haar(3, 0, 5, 0).is_err());
        assert!(sample_haar(3, 1, 0, 0).is_err());
    }

    #[test]
    fn mean_projector_of_lines_in_the_plane() {
        for count in [64usize, 1024] {
            let set = sample_haar(2, 1, count, 11).unwrap();
            let mut mean = DMatrix::zeros(2, 2);
            for (p, w) in set.iter() {
                mean += p.projector() * w;
            }
            let err = (mean - DMatrix::identity(2, 2) * 0.5).amax();
            assert!(err < 3.0 / (count as f64).sqrt(), "count {count}: {err}");
        }
    }

    #[test]
    fn fixed_quadrature_angles() {
        let set = fixed_quadrature(2, 1, 4).unwrap();
        for (j, (p, w)) in set.iter().enumerate() {
            let t = PI / 4.0 * j as f64;
            assert!((p.frame()[(0, 0)] - t.cos()).abs() < 1e-15);
            assert!((p.frame()[(1, 0)] - t.sin()).abs() < 1e-15);
            assert_eq!(w, 0.25);
        }
    }

    #[test]
    fn fixed_quadrature_duality() {
        let lines = fixed_quadrature(3, 1, 12).unwrap();
        let planes = fixed_quadrature(3, 2, 12).unwrap();
        for (l, p) in lines.planes().iter().zip(planes.planes()) {
            let sum = l.projector() + p.projector();
            assert!((sum - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        }
        assert!(matches!(fixed_quadrature(4, 2, 5), Err(KplaneError::Unsupported(_))));
        assert!(matches!(fixed_quadrature(4, 1, 5), Err(KplaneError::Unsupported(_))));
    }

    #[test]
    fn fixed_quadrature_integrates_quadratics_on_the_circle() {
        // f(u) = 3u₀² − 2u₀u₁ + 5u₁² + 1 has mean (3 + 5)/2 + 1 = 5 on S¹
        let set = fixed_quadrature(2, 1, 8).unwrap();
        let mean: f64 = set
            .iter()
            .map(|(p, w)| {
                let (a, b) = (p.frame()[(0, 0)], p.frame()[(1, 0)]);
                w * (3.0 * a * a - 2.0 * a * b + 5.0 * b * b + 1.0)
            })
            .sum();
        assert!((mean - 5.0).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let p = Plane::coordinate(2, &[0]).unwrap();
        let (c, xp) = project_point(&p, &[3.0, 4.0]).unwrap();
        assert_eq!(c, vec![3.0]);
        assert_eq!(xp, vec![3.0, 0.0]);

        let p = random_plane(4, 2, 1);
        let inside: Vec<f64> = (0..4).map(|i| p.frame()[(i, 0)] * 0.7 - p.frame()[(i, 1)] * 1.3).collect();
        let (_, xp) = project_point(&p, &inside).unwrap();
        assert!(xp.iter().zip(&inside).all(|(a, b)| (a - b).abs() < 1e-12));

        let x = [0.3, -2.0, 1.5, 0.25];
        let (_, xp) = project_point(&p, &x).unwrap();
        for j in 0..2 {
            let dot: f64 = (0..4).map(|i| (x[i] - xp[i]) * p.frame()[(i, j)]).sum();
            assert!(dot.abs() < 1e-12);
        }
        assert!(project_point(&p, &[1.0]).is_err());
    }

    #[test]
    fn complement_examples() {
        let p = Plane::coordinate(3, &[0, 1]).unwrap();
        let c = complement_frame(&p).unwrap();
        assert_eq!(c.k(), 1);
        assert!((c.frame()[(2, 0)].abs() - 1.0).abs() < 1e-15);

        for seed in 0..10 {
            let p = random_plane(5, 2, seed);
            let c = complement_frame(&p).unwrap();
            assert!((p.frame().transpose() * c.frame()).amax() < 1e-12);
            let full = DMatrix::from_columns(
                &p.frame().column_iter().chain(c.frame().column_iter()).map(|c| c.into_owned()).collect::<Vec<_>>(),
            );
            assert!((full.transpose() * &full - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
            let back = complement_frame(&c).unwrap();
            assert!(back.same_subspace(&p, 1e-12));
        }
    }

    #[test]
    fn distance_examples() {
        let p = random_plane(4, 2, 5);
        assert!(distance(&p, &p).unwrap() < 1e-14);
        let x = Plane::coordinate(2, &[0]).unwrap();
        let y = Plane::coordinate(2, &[1]).unwrap();
        assert!((distance(&x, &y).unwrap() - 1.0).abs() < 1e-14);
        for theta in [0.1, 0.7, 1.2, 2.5] {
            let l = Plane::from_frame(DMatrix::from_column_slice(2, 1, &[f64::cos(theta), f64::sin(theta)])).unwrap();
            assert!((distance(&x, &l).unwrap() - f64::sin(theta).abs()).abs() < 1e-12);
        }
        assert!(distance(&p, &x).is_err());
    }

    #[test]
    fn distance_is_a_metric_on_samples() {
        let set = sample_haar(4, 2, 12, 8).unwrap();
        let ps = set.planes();
        for a in ps {
            for b in ps {
                let ab = distance(a, b).unwrap();
                assert!((ab - distance(b, a).unwrap()).abs() < 1e-12);
                for c in ps.iter().take(4) {
                    assert!(ab <= distance(a, c).unwrap() + distance(c, b).unwrap() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let set = sample_haar(3, 2, 4, 21).unwrap();
        let back = PlaneSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(set, back);
        assert!(PlaneSet::from_json(r#"{"n":2,"k":1,"frames":[[1.0,0.0]],"weights":[0.5]}"#).is_err());
    }

    #[test]
    fn plane_set_validation() {
        let p = Plane::coordinate(3, &[0]).unwrap();
        let q = Plane::coordinate(3, &[0, 1]).unwrap();
        assert!(PlaneSet::uniform(vec![p.clone(), q], None).is_err());
        assert!(PlaneSet::new(vec![p.clone()], vec![-1.0], None).is_err());
        assert!(PlaneSet::new(vec![], vec![], None).is_err());
        assert!(Plane::from_frame(DMatrix::from_element(2, 1, 1.0)).is_err());
    }
}
