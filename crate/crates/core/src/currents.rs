//! Compactly supported m-currents represented by finitely many atoms.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, KplaneError, Result};
use crate::exterior::{apply_matrix, binomial, induced_map, MVector};
use crate::fields::FormSource;
use crate::grassmann::{project_point, Plane};

/// A point mass `T(α) = ⟨weight, α(position)⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: Vec<f64>,
    pub weight: Vec<f64>,
}

/// A finite sum of Dirac m-vectors in Rⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracCurrent {
    pub n: usize,
    pub m: usize,
    pub atoms: Vec<Atom>,
}

impl DiracCurrent {
    pub fn new(n: usize, m: usize, atoms: Vec<Atom>) -> Result<Self> {
        let t = Self { n, m, atoms };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > self.n {
            return domain("current degree exceeds dimension");
        }
        let c = binomial(self.n, self.m);
        for atom in &self.atoms {
            if atom.position.len() != self.n || atom.weight.len() != c {
                return domain("atom does not match the current's (n, m)");
            }
            if atom.position.iter().chain(&atom.weight).any(|v| !v.is_finite()) {
                return domain("atom has non-finite entries");
            }
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { position: a.position.clone(), weight: a.weight.iter().map(|w| w * s).collect() })
            .collect();
        Self { atoms, ..self.clone() }
    }

    /// The sum `self + other` as a current (atoms concatenated).
    pub fn plus(&self, other: &DiracCurrent) -> Result<Self> {
        if (self.n, self.m) != (other.n, other.m) {
            return domain("adding currents of different type");
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Ok(Self { atoms, ..self.clone() })
    }

    /// Push forward by an orthogonal map: atoms `(ρx, Λᵐ(ρ)w)`.
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Result<Self> {
        if rotation.shape() != (self.n, self.n) {
            return domain("rotation has the wrong shape");
        }
        let lifted = induced_map(rotation, self.m)?.into_matrix();
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let position = (0..self.n)
                    .map(|i| (0..self.n).map(|j| rotation[(i, j)] * a.position[j]).sum())
                    .collect();
                let mut weight = vec![0.0; a.weight.len()];
                apply_matrix(&lifted, &a.weight, &mut weight);
                Atom { position, weight }
            })
            .collect();
        Ok(Self { atoms, ..self.clone() })
    }
}

/// An oriented m-simplex with real multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simplex {
    pub vertices: Vec<Vec<f64>>,
    pub multiplicity: f64,
}

/// A polyhedral m-current: a weighted sum of oriented simplices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexCurrent {
    pub n: usize,
    pub m: usize,
    pub simplices: Vec<Simplex>,
}

impl SimplexCurrent {
    /// Closed polygon through `vertices` (last joined to first), as a 1-current.
    pub fn closed_polygon(vertices: &[Vec<f64>]) -> Result<Self> {
        let n = vertices.first().map(|v| v.len()).ok_or_else(|| KplaneError::Domain("empty polygon".into()))?;
        if vertices.iter().any(|v| v.len() != n) {
            return domain("polygon vertices have mixed dimension");
        }
        let simplices = (0..vertices.len())
            .map(|i| Simplex {
                vertices: vec![vertices[i].clone(), vertices[(i + 1) % vertices.len()].clone()],
                multiplicity: 1.0,
            })
            .collect();
        Ok(Self { n, m: 1, simplices })
    }

    /// A regular `segments`-gon inscribed in the circle of the given radius in
    /// the coordinate plane spanned by `axes`, oriented from `axes[0]` toward
    /// `axes[1]`.
    pub fn circle(n: usize, radius: f64, segments: usize, axes: [usize; 2], center: &[f64]) -> Result<Self> {
        if segments < 3 || axes[0] == axes[1] || axes.iter().any(|&a| a >= n) || center.len() != n {
            return domain("invalid circle specification");
        }
        let vertices: Vec<Vec<f64>> = (0..segments)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / segments as f64;
                let mut v = center.to_vec();
                v[axes[0]] += radius * t.cos();
                v[axes[1]] += radius * t.sin();
                v
            })
            .collect();
        Self::closed_polygon(&vertices)
    }
}

/// Barycentric nodes and weights (summing to 1) on the m-simplex.
fn simplex_rule(m: usize, order: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    match order {
        0 => domain("quadrature order must be positive"),
        1 => Ok(vec![(vec![1.0 / (m + 1) as f64; m + 1], 1.0)]),
        2 => {
            // m + 1 symmetric points, exact for quadratics
            let mf = m as f64;
            let a = (1.0 + (1.0 - (mf + 1.0) * (2.0 - mf) / (mf + 2.0)).sqrt()) / (mf + 1.0);
            let b = (1.0 - a) / mf;
            Ok((0..=m)
                .map(|i| ((0..=m).map(|j| if i == j { a } else { b }).collect(), 1.0 / (mf + 1.0)))
                .collect())
        }
        _ if m == 1 => Ok(gauss_legendre(order)
            .into_iter()
            .map(|(t, w)| (vec![1.0 - t, t], w))
            .collect()),
        _ => Err(KplaneError::Unsupported(format!("order {order} rule on a {m}-simplex"))),
    }
}

/// Gauss–Legendre nodes on [0, 1] (weights summing to 1) by Golub–Welsch.
fn gauss_legendre(points: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(points, points, |i, j| {
        if i.abs_diff(j) == 1 {
            let b = i.max(j) as f64;
            b / (4.0 * b * b - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v0 * v0)
        })
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes
}

/// Converts each simplex into quadrature atoms: node weight × m-volume ×
/// multiplicity × unit orienting m-vector of the simplex.
pub fn simplex_to_dirac(current: &SimplexCurrent, order: usize) -> Result<DiracCurrent> {
    let (n, m) = (current.n, current.m);
    if m == 0 {
        return domain("simplicial currents need m ≥ 1");
    }
    if m > n {
        return domain("simplex dimension exceeds ambient dimension");
    }
    let rule = simplex_rule(m, order)?;
    let factorial: f64 = (1..=m).map(|i| i as f64).product();
    let mut atoms = Vec::with_capacity(current.simplices.len() * rule.len());
    for simplex in &current.simplices {
        if simplex.vertices.len() != m + 1 || simplex.vertices.iter().any(|v| v.len() != n) {
            return domain(format!("an oriented {m}-simplex needs {} vertices in R^{n}", m + 1));
        }
        let v0 = &simplex.vertices[0];
        let mut orient = MVector::scalar(n, 1.0);
        for v in &simplex.vertices[1..] {
            let edge: Vec<f64> = v.iter().zip(v0).map(|(a, b)| a - b).collect();
            orient = orient.wedge(&MVector::from_vector(&edge))?;
        }
        // |e₁ ∧ … ∧ e_m| = m!·vol, so the weight is wedge/m! times the multiplicity
        let scale = orient.norm();
        let diameter = simplex
            .vertices
            .iter()
            .flat_map(|a| simplex.vertices.iter().map(move |b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()))
            .fold(0.0f64, f64::max)
            .sqrt();
        if scale <= 1e-14 * diameter.powi(m as i32).max(f64::MIN_POSITIVE) || scale == 0.0 {
            if simplex.multiplicity != 0.0 {
                return domain("degenerate simplex with nonzero multiplicity");
            }
            continue;
        }
        let oriented = orient.scale(simplex.multiplicity / factorial);
        for (bary, w) in &rule {
            let position = (0..n)
                .map(|i| bary.iter().zip(&simplex.vertices).map(|(l, v)| l * v[i]).sum())
                .collect();
            atoms.push(Atom { position, weight: oriented.scale(*w).into_coeffs() });
        }
    }
    DiracCurrent::new(n, m, atoms)
}

/// `T(α) = Σ ⟨w, α(x)⟩`, summed in atom order.
pub fn pair(current: &DiracCurrent, form: &dyn FormSource) -> Result<f64> {
    if form.dim() != current.n || form.degree() != current.m {
        return domain(format!(
            "pairing a ({}, {}) current with a form in Λ^{}(R^{})",
            current.n,
            current.m,
            form.degree(),
            form.dim()
        ));
    }
    let mut value = vec![0.0; binomial(current.n, current.m)];
    let mut total = 0.0;
    for atom in &current.atoms {
        form.eval_into(&atom.position, &mut value);
        total += atom.weight.iter().zip(&value).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

/// The pushforward `P_*T` in the frame coordinates of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneCurrent {
    pub plane: Plane,
    pub m: usize,
    /// Atoms with k-dimensional positions and Λᵐ(P) weights.
    pub atoms: Vec<Atom>,
}

/// `(x, w) ↦ (Fᵀx, Λᵐ(F)ᵀw)`. Atoms whose weight collapses are kept.
pub fn pushforward(plane: &Plane, current: &DiracCurrent) -> Result<PlaneCurrent> {
    if current.n != plane.n() {
        return domain("current and plane live in different spaces");
    }
    if current.m > plane.k() {
        return domain(format!("degree {} exceeds plane dimension {}", current.m, plane.k()));
    }
    let restriction = induced_map(plane.frame(), current.m)?.into_matrix().transpose();
    let c_loc = binomial(plane.k(), current.m);
    let atoms = current
        .atoms
        .iter()
        .map(|a| {
            let (coords, _) = project_point(plane, &a.position)?;
            let mut weight = vec![0.0; c_loc];
            apply_matrix(&restriction, &a.weight, &mut weight);
            Ok(Atom { position: coords, weight })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlaneCurrent { plane: plane.clone(), m: current.m, atoms })
}

/// `∫_{P_*T} α_P` for a form given in the plane's frame coordinates.
pub fn pair_plane(current: &PlaneCurrent, plane_form: &dyn FormSource) -> Result<f64> {
    if plane_form.dim() != current.plane.k() || plane_form.degree() != current.m {
        return domain("plane form does not match the pushed-forward current");
    }
    let mut value = vec![0.0; binomial(current.plane.k(), current.m)];
    let mut total = 0.0;
    for atom in &current.atoms {
        plane_form.eval_into(&atom.position, &mut value);
        total += atom.weight.iter().zip(&value).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

/// `P^*α_P(x) = Λᵐ(F) α_P(Fᵀx)` for a plane form in frame coordinates.
pub fn pullback_form_eval(plane: &Plane, plane_form: &dyn FormSource, x: &[f64]) -> Result<MVector> {
    if plane_form.dim() != plane.k() {
        return domain("plane form dimension differs from the plane dimension");
    }
    if plane_form.degree() > plane.k() {
        return domain("degree exceeds plane dimension");
    }
    let (coords, _) = project_point(plane, x)?;
    let local = plane_form.eval(&coords);
    induced_map(plane.frame(), plane_form.degree())?.apply(&local)
}

/// The pulled-back form `P^*α_P` as a form on Rⁿ.
pub struct Pullback<'a> {
    plane: &'a Plane,
    inclusion: DMatrix<f64>,
    form: &'a dyn FormSource,
}

impl<'a> Pullback<'a> {
    pub fn new(plane: &'a Plane, form: &'a dyn FormSource) -> Result<Self> {
        if form.dim() != plane.k() || form.degree() > plane.k() {
            return domain("plane form does not match the plane");
        }
        let inclusion = induced_map(plane.frame(), form.degree())?.into_matrix();
        Ok(Self { plane, inclusion, form })
    }
}

impl FormSource for Pullback<'_> {
    fn dim(&self) -> usize {
        self.plane.n()
    }

    fn degree(&self) -> usize {
        self.form.degree()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let frame = self.plane.frame();
        let coords: Vec<f64> = (0..self.plane.k())
            .map(|j| frame.column(j).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        let mut local = vec![0.0; self.inclusion.ncols()];
        self.form.eval_into(&coords, &mut local);
        apply_matrix(&self.inclusion, &local, out);
    }
}

/// JSON container covering both current representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurrentDoc {
    Dirac(DiracCurrent),
    Simplices(SimplexCurrent),
}

impl CurrentDoc {
    /// Atomic form; simplices use the degree-2 rule.
    pub fn to_dirac(&self) -> Result<DiracCurrent> {
        match self {
            CurrentDoc::Dirac(t) => {
                t.validate()?;
                Ok(t.clone())
            }
            CurrentDoc::Simplices(s) => simplex_to_dirac(s, 2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AnalyticForm, FnForm, FormTerm, Monomial};

    fn segment(a: Vec<f64>, b: Vec<f64>) -> SimplexCurrent {
        SimplexCurrent { n: a.len(), m: 1, simplices: vec![Simplex { vertices: vec![a, b], multiplicity: 1.0 }] }
    }

    #[test]
    fn unit_segment_centroid_atom() {
        let t = simplex_to_dirac(&segment(vec![0.0, 0.0], vec![1.0, 0.0]), 1).unwrap();
        assert_eq!(t.atoms.len(), 1);
        assert_eq!(t.atoms[0].position, vec![0.5, 0.0]);
        assert_eq!(t.atoms[0].weight, vec![1.0, 0.0]);
        let r = simplex_to_dirac(&segment(vec![1.0, 0.0], vec![0.0, 0.0]), 1).unwrap();
        assert_eq!(r.atoms[0].weight, vec![-1.0, 0.0]);
    }

    #[test]
    fn degenerate_simplices() {
        let t = segment(vec![1.0, 1.0], vec![1.0, 1.0]);
        assert!(simplex_to_dirac(&t, 1).is_err());
        let mut z = t.clone();
        z.simplices[0].multiplicity = 0.0;
        assert!(simplex_to_dirac(&z, 1).unwrap().atoms.is_empty());
        let scalar = SimplexCurrent { n: 2, m: 0, simplices: vec![] };
        assert!(simplex_to_dirac(&scalar, 1).is_err());
    }

    #[test]
    fn triangle_area_and_orientation() {
        let tri = SimplexCurrent {
            n: 3,
            m: 2,
            simplices: vec![Simplex {
                vertices: vec![vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 3.0, 0.0]],
                multiplicity: 1.0,
            }],
        };
        for order in [1, 2] {
            let t = simplex_to_dirac(&tri, order).unwrap();
            let total: Vec<f64> =
                (0..3).map(|c| t.atoms.iter().map(|a| a.weight[c]).sum()).collect();
            assert!((total[0] - 3.0).abs() < 1e-14 && total[1].abs() < 1e-14 && total[2].abs() < 1e-14);
        }
    }

    #[test]
    fn degree_two_rule_integrates_quadratics() {
        // ∫_0^1 t² dt = 1/3 on a segment, ∫ over the unit triangle of x² = 1/12
        let seg = simplex_rule(1, 2).unwrap();
        let v: f64 = seg.iter().map(|(b, w)| w * b[1] * b[1]).sum();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let tri = simplex_rule(2, 2).unwrap();
        let v: f64 = tri.iter().map(|(b, w)| w * b[1] * b[1]).sum::<f64>() * 0.5;
        assert!((v - 1.0 / 12.0).abs() < 1e-14);
        let gl = simplex_rule(1, 5).unwrap();
        let v: f64 = gl.iter().map(|(b, w)| w * b[1].powi(9)).sum();
        assert!((v - 0.1).abs() < 1e-14);
    }

    #[test]
    fn closed_curve_annihilates_exact_forms() {
        let circle = SimplexCurrent::circle(2, 1.0, 64, [0, 1], &[0.3, -0.2]).unwrap();
        let t = simplex_to_dirac(&circle, 2).unwrap();
        let dx0 = FnForm { n: 2, m: 1, f: |_: &[f64], out: &mut [f64]| {
            out[0] = 1.0;
            out[1] = 0.0;
        } };
        assert!(pair(&t, &dx0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn pairing_examples() {
        let t = DiracCurrent::new(2, 1, vec![Atom { position: vec![0.0, 0.0], weight: vec![1.0, 0.0] }]).unwrap();
        let alpha = AnalyticForm::gaussian(2, &[0], 1.0, 3.0).unwrap();
        assert!((pair(&t, &alpha).unwrap() - 3.0).abs() < 1e-15);
        let t2 = t.plus(&t.scaled(2.0)).unwrap();
        assert!((pair(&t2, &alpha).unwrap() - 9.0).abs() < 1e-14);
    }

    #[test]
    fn enclosed_area_by_greens_theorem() {
        let x0dx1 = AnalyticForm::new(
            2,
            1,
            vec![FormTerm { index: vec![1], poly: vec![Monomial { coeff: 1.0, powers: vec![1, 0] }], width: 1e-300 }],
        )
        .unwrap();
        let circle = simplex_to_dirac(&SimplexCurrent::circle(2, 1.0, 512, [0, 1], &[0.0, 0.0]).unwrap(), 2).unwrap();
        let area = pair(&circle, &x0dx1).unwrap();
        // inscribed polygon area is (N/2) sin(2π/N)
        let polygon = 256.0 * (2.0 * PI / 512.0).sin();
        assert!((area - polygon).abs() < 1e-12);
        assert!((area - PI).abs() < 1e-4);
    }

    #[test]
    fn pushforward_examples() {
        let p = Plane::coordinate(3, &[0, 1]).unwrap();
        let t = DiracCurrent::new(3, 1, vec![Atom { position: vec![1.0, 2.0, 3.0], weight: vec![0.0, 0.0, 1.0] }]).unwrap();
        let pt = pushforward(&p, &t).unwrap();
        assert_eq!(pt.atoms.len(), 1);
        assert_eq!(pt.atoms[0].position, vec![1.0, 2.0]);
        assert_eq!(pt.atoms[0].weight, vec![0.0, 0.0]);
        let t = DiracCurrent::new(3, 1, vec![Atom { position: vec![1.0, 2.0, 3.0], weight: vec![0.5, -2.0, 0.0] }]).unwrap();
        assert_eq!(pushforward(&p, &t).unwrap().atoms[0].weight, vec![0.5, -2.0]);
        let line = Plane::coordinate(3, &[0]).unwrap();
        let t2 = DiracCurrent::new(3, 2, vec![]).unwrap();
        assert!(pushforward(&line, &t2).is_err());
    }

    #[test]
    fn pullback_examples() {
        let p = Plane::coordinate(2, &[0]).unwrap();
        let f = FnForm { n: 1, m: 1, f: |c: &[f64], out: &mut [f64]| out[0] = c[0].sin() };
        let v = pullback_form_eval(&p, &f, &[0.7, 5.0]).unwrap();
        assert!((v.coeffs()[0] - 0.7f64.sin()).abs() < 1e-15);
        assert_eq!(v.coeffs()[1], 0.0);
        let constant = FnForm { n: 1, m: 0, f: |_: &[f64], out: &mut [f64]| out[0] = 2.5 };
        let a = pullback_form_eval(&p, &constant, &[0.1, -3.0]).unwrap();
        let b = pullback_form_eval(&p, &constant, &[0.1, 9.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_shapes() {
        let doc = CurrentDoc::Simplices(SimplexCurrent::circle(2, 1.0, 4, [0, 1], &[0.0, 0.0]).unwrap());
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("\"kind\":\"simplices\""));
        let back: CurrentDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_dirac().unwrap().atoms.len(), 8);
    }
}
