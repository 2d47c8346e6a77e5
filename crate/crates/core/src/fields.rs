//! m-form fields on Rⁿ: analytic Schwartz test forms and grid samples.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::exterior::{binomial, lex_rank, MVector, MultiIndex};
use crate::fft;

/// Anything that can be evaluated pointwise as an m-form on Rⁿ.
pub trait FormSource: Sync {
    fn dim(&self) -> usize;
    fn degree(&self) -> usize;

    /// Writes the C(n, m) coefficients at `x` into `out`.
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &[f64]) -> MVector {
        let mut v = MVector::zeros(self.dim(), self.degree());
        self.eval_into(x, v.coeffs_mut());
        v
    }
}

/// Regular grid over the box `[−L, L)ⁿ` with nodes `x_j = −L + j·(2L/N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        let grid = Self { n, half_width, points_per_axis };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return domain("grid dimension must be positive");
        }
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return domain(format!("grid half-width must be positive, got {}", self.half_width));
        }
        if self.points_per_axis < 8 || !self.points_per_axis.is_multiple_of(2) {
            return domain(format!("points per axis must be even and ≥ 8, got {}", self.points_per_axis));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn sites(&self) -> usize {
        self.points_per_axis.pow(self.n as u32)
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.points_per_axis; self.n]
    }

    /// Volume element `spacingⁿ`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// Coordinates of the site with row-major flat index `site`.
    pub fn site_point(&self, site: usize, out: &mut [f64]) {
        let mut rest = site;
        for axis in (0..self.n).rev() {
            out[axis] = self.node(rest % self.points_per_axis);
            rest /= self.points_per_axis;
        }
    }

    pub fn site_coords(&self, site: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.site_point(site, &mut x);
        x
    }

    /// The grid enlarged `factor` times per axis with the same spacing; the
    /// original nodes are a centred sub-block of the enlarged grid.
    pub fn padded(&self, factor: usize) -> Self {
        Self {
            n: self.n,
            half_width: self.half_width * factor as f64,
            points_per_axis: self.points_per_axis * factor,
        }
    }

    /// Physical frequencies along one axis, in DFT order.
    pub fn frequencies(&self) -> Vec<f64> {
        fft::frequencies(self.points_per_axis, self.spacing())
    }
}

/// An m-form sampled at the nodes of a grid. Storage is row-major over
/// sites with the C(n, m) coefficients of each site contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    grid: GridSpec,
    degree: usize,
    data: Vec<f64>,
}

impl FormField {
    pub fn new(grid: GridSpec, degree: usize, data: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if degree > grid.n {
            return domain(format!("degree {degree} exceeds dimension {}", grid.n));
        }
        let expected = grid.sites() * binomial(grid.n, degree);
        if data.len() != expected {
            return domain(format!("field needs {expected} values, got {}", data.len()));
        }
        Ok(Self { grid, degree, data })
    }

    pub fn zeros(grid: GridSpec, degree: usize) -> Self {
        let len = grid.sites() * binomial(grid.n, degree);
        Self { grid, degree, data: vec![0.0; len] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of coefficients per site.
    pub fn components(&self) -> usize {
        binomial(self.grid.n, self.degree)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn site(&self, site: usize) -> &[f64] {
        let c = self.components();
        &self.data[site * c..(site + 1) * c]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { data: self.data.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    fn check_compatible(&self, other: &FormField) -> Result<()> {
        if self.grid != other.grid || self.degree != other.degree {
            return domain("fields live on different grids or degrees");
        }
        Ok(())
    }

    pub fn add(&self, other: &FormField) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self { data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(), ..self.clone() })
    }

    pub fn sub(&self, other: &FormField) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self { data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(), ..self.clone() })
    }

    /// Discrete L² inner product `Σ ⟨f(x), g(x)⟩ spacingⁿ`.
    pub fn inner(&self, other: &FormField) -> Result<f64> {
        self.check_compatible(other)?;
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        Ok(sum * self.grid.cell_volume())
    }

    /// Copies the field into the centre of a grid enlarged by `factor`.
    pub fn embed(&self, factor: usize) -> Self {
        let big = self.grid.padded(factor);
        let mut out = FormField::zeros(big, self.degree);
        let offset = (factor - 1) * self.grid.points_per_axis / 2;
        let c = self.components();
        for site in 0..self.grid.sites() {
            let dst = remap_site(site, &self.grid, &big, offset);
            out.data[dst * c..(dst + 1) * c].copy_from_slice(self.site(site));
        }
        out
    }

    /// Restricts a field on a padded grid back to `inner`.
    pub fn crop(&self, inner: &GridSpec) -> Result<Self> {
        let n_big = self.grid.points_per_axis;
        let n_small = inner.points_per_axis;
        if inner.n != self.grid.n
            || n_small > n_big
            || !(n_big - n_small).is_multiple_of(2)
            || (inner.spacing() - self.grid.spacing()).abs() > 1e-12 * inner.spacing()
        {
            return domain("crop target is not a centred sub-grid");
        }
        let offset = (n_big - n_small) / 2;
        let c = self.components();
        let mut out = FormField::zeros(*inner, self.degree);
        for site in 0..inner.sites() {
            let src = remap_site(site, inner, &self.grid, offset);
            out.data[site * c..(site + 1) * c].copy_from_slice(self.site(src));
        }
        Ok(out)
    }
}

fn remap_site(site: usize, from: &GridSpec, to: &GridSpec, offset: usize) -> usize {
    let mut rest = site;
    let mut idx = 0;
    let mut mult = 1;
    for _ in 0..from.n {
        let j = rest % from.points_per_axis + offset;
        rest /= from.points_per_axis;
        idx += j * mult;
        mult *= to.points_per_axis;
    }
    idx
}

impl FormSource for FormField {
    fn dim(&self) -> usize {
        self.grid.n
    }

    fn degree(&self) -> usize {
        self.degree
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        interpolate_into(self, x, out);
    }
}

/// Multilinear interpolation of every coefficient; zero outside `[−L, L)ⁿ`.
/// Neighbours beyond the last node count as zero.
pub fn interpolate(field: &FormField, x: &[f64]) -> MVector {
    let mut v = MVector::zeros(field.grid.n, field.degree);
    interpolate_into(field, x, v.coeffs_mut());
    v
}

pub(crate) fn interpolate_into(field: &FormField, x: &[f64], out: &mut [f64]) {
    let grid = &field.grid;
    let n = grid.n;
    let npts = grid.points_per_axis;
    let h = grid.spacing();
    let c = field.components();
    out.iter_mut().for_each(|o| *o = 0.0);
    debug_assert!(n <= 8);
    let mut base = [0usize; 8];
    let mut frac = [0f64; 8];
    for axis in 0..n {
        let t = (x[axis] + grid.half_width) / h;
        if !(t >= 0.0) || t >= npts as f64 {
            return;
        }
        let i = (t.floor() as usize).min(npts - 1);
        base[axis] = i;
        frac[axis] = t - i as f64;
    }
    'corners: for corner in 0..(1usize << n) {
        let mut weight = 1.0;
        let mut site = 0;
        for axis in 0..n {
            let up = (corner >> (n - 1 - axis)) & 1;
            let j = base[axis] + up;
            if j >= npts {
                continue 'corners;
            }
            weight *= if up == 1 { frac[axis] } else { 1.0 - frac[axis] };
            site = site * npts + j;
        }
        if weight == 0.0 {
            continue;
        }
        let values = &field.data[site * c..(site + 1) * c];
        for (o, v) in out.iter_mut().zip(values) {
            *o += weight * v;
        }
    }
}

/// Samples any form at the nodes of `grid`.
pub fn sample_to_grid(form: &dyn FormSource, grid: GridSpec) -> Result<FormField> {
    grid.validate()?;
    if form.dim() != grid.n {
        return domain(format!("form on R^{} sampled on a grid in R^{}", form.dim(), grid.n));
    }
    let c = binomial(grid.n, form.degree());
    let mut data = vec![0.0; grid.sites() * c];
    if c > 0 {
        data.par_chunks_mut(c).enumerate().for_each_init(
            || vec![0.0; grid.n],
            |x, (site, out)| {
                grid.site_point(site, x);
                form.eval_into(x, out);
            },
        );
    }
    FormField::new(grid, form.degree(), data)
}

/// `sqrt(Σ_sites |f(x)|² · spacingⁿ)`.
pub fn l2_norm(field: &FormField) -> f64 {
    let sum: f64 = field.data.iter().map(|v| v * v).sum();
    (sum * field.grid.cell_volume()).sqrt()
}

/// Homogeneous Sobolev norm `sqrt(∫ |ξ|^{2s} |𝓕f(ξ)|² dξ)` using the DFT with
/// the physical normalization `𝓕f(ξ) ≈ spacingⁿ Σ f(x) e^{−2πix·ξ}`. The zero
/// frequency contributes nothing.
pub fn hdot_norm(field: &FormField, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return domain(format!("Sobolev order must be nonnegative, got {s}"));
    }
    let grid = &field.grid;
    let shape = grid.shape();
    let freqs = grid.frequencies();
    let c = field.components();
    let dxi = 1.0 / (grid.points_per_axis as f64 * grid.spacing());
    let scale = grid.cell_volume().powi(2) * dxi.powi(grid.n as i32);
    let mut weights = vec![0.0; grid.sites()];
    weights.par_iter_mut().enumerate().for_each(|(site, w)| {
        let mut rest = site;
        let mut r2 = 0.0;
        for _ in 0..grid.n {
            let f = freqs[rest % grid.points_per_axis];
            rest /= grid.points_per_axis;
            r2 += f * f;
        }
        // |ξ|⁰ = 1 everywhere, so s = 0 is exactly Parseval
        *w = if s == 0.0 {
            1.0
        } else if r2 == 0.0 {
            0.0
        } else {
            r2.powf(s)
        };
    });
    let mut total = 0.0;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.sites()];
    for comp in 0..c {
        for (site, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(field.data[site * c + comp], 0.0);
        }
        fft::forward(&mut buf, &shape);
        total += buf.iter().zip(&weights).map(|(v, w)| w * v.norm_sqr()).sum::<f64>();
    }
    Ok((total * scale).sqrt())
}

/// One monomial `coeff · Π xᵢ^{powers[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// `p(x)·e^{−aπ|x|²} dx_I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormTerm {
    pub index: Vec<usize>,
    pub poly: Vec<Monomial>,
    pub width: f64,
}

/// A Schwartz m-form `Σ p(x)·e^{−aπ|x|²} dx_I` evaluated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticForm {
    pub n: usize,
    pub m: usize,
    pub terms: Vec<FormTerm>,
}

impl AnalyticForm {
    pub fn new(n: usize, m: usize, terms: Vec<FormTerm>) -> Result<Self> {
        let form = Self { n, m, terms };
        form.validate()?;
        Ok(form)
    }

    pub fn zero(n: usize, m: usize) -> Self {
        Self { n, m, terms: Vec::new() }
    }

    /// `coeff · e^{−aπ|x|²} dx_I`.
    pub fn gaussian(n: usize, index: &[usize], width: f64, coeff: f64) -> Result<Self> {
        let poly = vec![Monomial { coeff, powers: vec![0; n] }];
        Self::new(n, index.len(), vec![FormTerm { index: index.to_vec(), poly, width }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > self.n {
            return domain(format!("degree {} exceeds dimension {}", self.m, self.n));
        }
        for term in &self.terms {
            let idx = MultiIndex::new(term.index.clone(), self.n)?;
            if idx.degree() != self.m {
                return domain(format!("term index {idx} does not have degree {}", self.m));
            }
            if !(term.width > 0.0) || !term.width.is_finite() {
                return domain(format!("gaussian width must be positive, got {}", term.width));
            }
            if term.poly.iter().any(|mono| mono.powers.len() != self.n || !mono.coeff.is_finite()) {
                return domain("monomial does not match the dimension");
            }
        }
        Ok(())
    }

    /// The form with every coefficient multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for term in &mut out.terms {
            for mono in &mut term.poly {
                mono.coeff *= s;
            }
        }
        out
    }

    /// Term-wise sum of two forms.
    pub fn plus(&self, other: &AnalyticForm) -> Result<Self> {
        if (self.n, self.m) != (other.n, other.m) {
            return domain("adding forms of different type");
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self { n: self.n, m: self.m, terms })
    }

    /// `x ↦ α(x/λ)`, the form dilated by `λ`.
    pub fn dilated(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for term in &mut out.terms {
            term.width /= lambda * lambda;
            for mono in &mut term.poly {
                let degree: u32 = mono.powers.iter().sum();
                mono.coeff /= lambda.powi(degree as i32);
            }
        }
        out
    }
}

impl FormSource for AnalyticForm {
    fn dim(&self) -> usize {
        self.n
    }

    fn degree(&self) -> usize {
        self.m
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        for term in &self.terms {
            let envelope = (-term.width * PI * r2).exp();
            if envelope == 0.0 {
                continue;
            }
            let p: f64 = term
                .poly
                .iter()
                .map(|mono| {
                    mono.powers.iter().zip(x).fold(mono.coeff, |acc, (&e, &xi)| acc * xi.powi(e as i32))
                })
                .sum();
            out[lex_rank(&term.index, self.n)] += p * envelope;
        }
    }
}

/// Evaluates a form through a closure; handy for tests and pulled-back forms.
pub struct FnForm<F> {
    pub n: usize,
    pub m: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FormSource for FnForm<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn degree(&self) -> usize {
        self.m
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}
