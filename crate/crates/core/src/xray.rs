//! The exterior k-plane transform ℛ, its formal adjoint ℛ*, and the X-norm.
//!
//! For a plane P with frame F and a point with frame coordinates c,
//!
//! ```text
//! ℛα(P, c) = ∫_{P⊥} α(Fc + y)|_P dy      ∈ Λᵐ(P)
//! ℛ*β(x)   = ∫_G ι_P β(P, Fᵀx) dP        ∈ Λᵐ(Rⁿ)
//! ```
//!
//! where `ι_P = Λᵐ(F)` is the inclusion and `|_P = Λᵐ(F)ᵀ` its adjoint.
//! Sinogram values are stored in the wedge basis of each plane's frame.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::exterior::{apply_matrix, binomial, induced_map, MVector};
use crate::fields::{interpolate_into, l2_norm, sample_to_grid, FormField, FormSource, GridSpec};
use crate::grassmann::{complement_frame, Plane, PlaneSet};

/// Tensor-product trapezoidal rule on the cube `[−R, R]^{n−k}` ⊂ P⊥.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerpQuadrature {
    /// Nodes per axis, including both endpoints.
    pub points: usize,
    /// Truncation radius R in the sup norm.
    pub half_width: f64,
}

impl PerpQuadrature {
    pub fn new(points: usize, half_width: f64) -> Result<Self> {
        let q = Self { points, half_width };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return domain("perpendicular quadrature needs at least two nodes");
        }
        if !(self.half_width > 0.0) {
            return domain("perpendicular truncation radius must be positive");
        }
        Ok(())
    }

    /// One-dimensional nodes and trapezoid weights.
    pub fn nodes_1d(&self) -> (Vec<f64>, Vec<f64>) {
        let step = 2.0 * self.half_width / (self.points - 1) as f64;
        let nodes = (0..self.points).map(|j| -self.half_width + j as f64 * step).collect();
        let weights = (0..self.points)
            .map(|j| if j == 0 || j + 1 == self.points { 0.5 * step } else { step })
            .collect();
        (nodes, weights)
    }
}

/// Per-plane data reused across evaluations: frame, quadrature offsets in
/// P⊥, and the restriction matrix Λᵐ(F)ᵀ.
pub struct PlaneKernel {
    plane: Plane,
    degree: usize,
    offsets: Vec<f64>,
    weights: Vec<f64>,
    restriction: DMatrix<f64>,
}

impl PlaneKernel {
    pub fn new(plane: &Plane, degree: usize, quad: &PerpQuadrature) -> Result<Self> {
        quad.validate()?;
        let (n, k) = (plane.n(), plane.k());
        if degree > k {
            return domain(format!("degree {degree} exceeds plane dimension {k}"));
        }
        let restriction = induced_map(plane.frame(), degree)?.into_matrix().transpose();
        let perp = complement_frame(plane)?;
        let d = n - k;
        let (nodes, w1) = quad.nodes_1d();
        let count = quad.points.pow(d as u32);
        let mut offsets = Vec::with_capacity(count * n);
        let mut weights = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rest = flat;
            let mut y = vec![0.0; d];
            let mut w = 1.0;
            for axis in (0..d).rev() {
                let j = rest % quad.points;
                rest /= quad.points;
                y[axis] = nodes[j];
                w *= w1[j];
            }
            for i in 0..n {
                offsets.push((0..d).map(|a| perp.frame()[(i, a)] * y[a]).sum());
            }
            weights.push(w);
        }
        Ok(Self { plane: plane.clone(), degree, offsets, weights, restriction })
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    /// ℛα(P, c) for frame coordinates `c`, written into `out` (length C(k, m)).
    pub fn transform_into(&self, form: &dyn FormSource, coords: &[f64], out: &mut [f64]) {
        let n = self.plane.n();
        let frame = self.plane.frame();
        let c_amb = binomial(n, self.degree);
        let mut base = vec![0.0; n];
        for (i, b) in base.iter_mut().enumerate() {
            *b = coords.iter().enumerate().map(|(j, c)| frame[(i, j)] * c).sum();
        }
        let mut point = vec![0.0; n];
        let mut value = vec![0.0; c_amb];
        let mut acc = vec![0.0; c_amb];
        for (offset, w) in self.offsets.chunks_exact(n).zip(&self.weights) {
            for ((p, b), o) in point.iter_mut().zip(&base).zip(offset) {
                *p = b + o;
            }
            form.eval_into(&point, &mut value);
            for (a, v) in acc.iter_mut().zip(&value) {
                *a += w * v;
            }
        }
        // restriction is linear, so it commutes with the quadrature sum
        apply_matrix(&self.restriction, &acc, out);
    }
}

fn check_form(form: &dyn FormSource, plane: &Plane) -> Result<()> {
    if form.dim() != plane.n() {
        return domain(format!("form on R^{} transformed along planes in R^{}", form.dim(), plane.n()));
    }
    if form.degree() > plane.k() {
        return domain(format!("degree {} exceeds plane dimension {}", form.degree(), plane.k()));
    }
    Ok(())
}

/// ℛα(P, c) at a single point `c` given in P's frame coordinates.
pub fn forward_point(
    form: &dyn FormSource,
    plane: &Plane,
    coords: &[f64],
    quad: &PerpQuadrature,
) -> Result<MVector> {
    check_form(form, plane)?;
    if coords.len() != plane.k() {
        return domain("point coordinates must have length k");
    }
    let kernel = PlaneKernel::new(plane, form.degree(), quad)?;
    let mut out = MVector::zeros(plane.k(), form.degree());
    kernel.transform_into(form, coords, out.coeffs_mut());
    Ok(out)
}

/// Sampled transform data: for every plane, a k-dimensional grid of
/// Λᵐ(P) coefficient vectors in the plane's frame basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    planes: PlaneSet,
    degree: usize,
    k_grid: GridSpec,
    slices: Vec<FormField>,
}

impl Sinogram {
    pub fn new(planes: PlaneSet, degree: usize, k_grid: GridSpec, slices: Vec<FormField>) -> Result<Self> {
        if k_grid.n != planes.k() {
            return domain("sinogram grid dimension must equal the plane dimension");
        }
        if degree > planes.k() {
            return domain("degree exceeds plane dimension");
        }
        if slices.len() != planes.len() || slices.iter().any(|s| *s.grid() != k_grid || s.degree() != degree) {
            return domain("sinogram slices do not match the planes and grid");
        }
        Ok(Self { planes, degree, k_grid, slices })
    }

    pub fn zeros(planes: PlaneSet, degree: usize, k_grid: GridSpec) -> Result<Self> {
        let slices = vec![FormField::zeros(k_grid, degree); planes.len()];
        Self::new(planes, degree, k_grid, slices)
    }

    /// Fills every slice from `f(plane index, plane, coords, out)`.
    pub fn from_fn<F>(planes: PlaneSet, degree: usize, k_grid: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(usize, &Plane, &[f64], &mut [f64]) + Sync,
    {
        let c = binomial(k_grid.n, degree);
        let slices = planes
            .planes()
            .iter()
            .enumerate()
            .map(|(idx, plane)| {
                let mut data = vec![0.0; k_grid.sites() * c];
                data.par_chunks_mut(c.max(1)).enumerate().for_each(|(site, out)| {
                    let coords = k_grid.site_coords(site);
                    f(idx, plane, &coords, out);
                });
                FormField::new(k_grid, degree, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(planes, degree, k_grid, slices)
    }

    pub fn planes(&self) -> &PlaneSet {
        &self.planes
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn k_grid(&self) -> &GridSpec {
        &self.k_grid
    }

    pub fn slices(&self) -> &[FormField] {
        &self.slices
    }

    pub fn slice(&self, plane: usize) -> &FormField {
        &self.slices[plane]
    }

    fn check_compatible(&self, other: &Sinogram) -> Result<()> {
        if self.planes != other.planes || self.k_grid != other.k_grid || self.degree != other.degree {
            return domain("sinograms over different planes or grids");
        }
        Ok(())
    }

    /// `⟨β, γ⟩_{L²(Γ)} = Σ_P w_P ∫_P ⟨β(P, c), γ(P, c)⟩ dc`.
    pub fn inner(&self, other: &Sinogram) -> Result<f64> {
        self.check_compatible(other)?;
        self.planes
            .weights()
            .iter()
            .zip(self.slices.iter().zip(&other.slices))
            .map(|(w, (a, b))| Ok(w * a.inner(b)?))
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.planes
            .weights()
            .iter()
            .zip(&self.slices)
            .map(|(w, s)| w * l2_norm(s).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&self, other: &Sinogram) -> Result<Sinogram> {
        self.check_compatible(other)?;
        let slices = self.slices.iter().zip(&other.slices).map(|(a, b)| a.add(b)).collect::<Result<_>>()?;
        Ok(Self { slices, ..self.clone() })
    }
}

/// ℛα sampled on `k_grid` for every plane of `planes`.
pub fn forward(
    form: &dyn FormSource,
    planes: &PlaneSet,
    k_grid: GridSpec,
    quad: &PerpQuadrature,
) -> Result<Sinogram> {
    k_grid.validate()?;
    if k_grid.n != planes.k() {
        return domain("sinogram grid dimension must equal the plane dimension");
    }
    let kernels = planes
        .planes()
        .iter()
        .map(|p| {
            check_form(form, p)?;
            PlaneKernel::new(p, form.degree(), quad)
        })
        .collect::<Result<Vec<_>>>()?;
    Sinogram::from_fn(planes.clone(), form.degree(), k_grid, |idx, _, coords, out| {
        kernels[idx].transform_into(form, coords, out)
    })
}

/// ℛ*β sampled on `out_grid`: `Σ_P w_P Λᵐ(F_P) β_P(F_Pᵀ x)`, with the sum
/// taken in plane order at every site.
pub fn adjoint(sinogram: &Sinogram, out_grid: GridSpec) -> Result<FormField> {
    out_grid.validate()?;
    let planes = sinogram.planes();
    if out_grid.n != planes.n() {
        return domain(format!("adjoint onto R^{} of planes in R^{}", out_grid.n, planes.n()));
    }
    let (n, k, m) = (planes.n(), planes.k(), sinogram.degree());
    let inclusions = planes
        .planes()
        .iter()
        .map(|p| Ok(induced_map(p.frame(), m)?.into_matrix()))
        .collect::<Result<Vec<_>>>()?;
    // row-major frames for the projection x ↦ Fᵀx
    let frames_t: Vec<Vec<f64>> = planes
        .planes()
        .iter()
        .map(|p| (0..k).flat_map(|j| p.frame().column(j).iter().copied().collect::<Vec<_>>()).collect())
        .collect();
    let c_amb = binomial(n, m);
    let c_loc = binomial(k, m);
    let mut data = vec![0.0; out_grid.sites() * c_amb];
    data.par_chunks_mut(c_amb).enumerate().for_each_init(
        || (vec![0.0; n], vec![0.0; k], vec![0.0; c_loc], vec![0.0; c_amb]),
        |(x, coords, local, ambient), (site, out)| {
            out_grid.site_point(site, x);
            for (idx, w) in planes.weights().iter().enumerate() {
                let ft = &frames_t[idx];
                for (j, c) in coords.iter_mut().enumerate() {
                    *c = ft[j * n..(j + 1) * n].iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                }
                interpolate_into(&sinogram.slices[idx], coords, local);
                if local.iter().all(|v| *v == 0.0) {
                    continue;
                }
                apply_matrix(&inclusions[idx], local, ambient);
                for (o, a) in out.iter_mut().zip(ambient.iter()) {
                    *o += w * a;
                }
            }
        },
    );
    FormField::new(out_grid, m, data)
}

/// `‖α‖_X = sqrt(‖α‖²_{L²} + ‖ℛα‖²_{L²(Γ)})`, with the L² part measured on
/// `grid` and the transform part on `k_grid` over `planes`.
pub fn x_norm(
    form: &dyn FormSource,
    grid: GridSpec,
    planes: &PlaneSet,
    k_grid: GridSpec,
    quad: &PerpQuadrature,
) -> Result<f64> {
    let sampled = sample_to_grid(form, grid)?;
    let sino = forward(form, planes, k_grid, quad)?;
    Ok((l2_norm(&sampled).powi(2) + sino.l2_norm().powi(2)).sqrt())
}
