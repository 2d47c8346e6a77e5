//! The Fourier multiplier 𝒬 with matrix symbol `|ξ|^{n−k} h(ξ)`, applied to
//! sampled fields by FFT.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, KplaneError, Result};
use crate::exterior::{
    binomial, check_degrees, hyperplane_projector_matrix, raw_basis, symbol_eigenvalues, symbol_h, MOperator,
};
use crate::fft;
use crate::fields::FormField;

/// Largest deviation from Hermitian symmetry (relative to the spectrum's
/// scale) tolerated before returning to real fields.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Bins per parallel work item.
const BLOCK: usize = 512;

/// Parameters of 𝒬. The value at ξ = 0 is always the zero matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplierSpec {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    /// Zero-padding factor per axis applied before the FFT (1 = none).
    #[serde(default = "default_padding")]
    pub padding: usize,
}

fn default_padding() -> usize {
    2
}

impl MultiplierSpec {
    pub fn new(n: usize, k: usize, m: usize) -> Result<Self> {
        let spec = Self { n, k, m, padding: default_padding() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_degrees(self.n, self.k, self.m)?;
        if self.padding == 0 {
            return domain("padding factor must be at least 1");
        }
        Ok(())
    }

    /// `sup_ξ ‖h(ξ)‖ = c/(k−m)`.
    pub fn symbol_norm(&self) -> f64 {
        symbol_eigenvalues(self.n, self.k, self.m).map(|(a, _)| a).unwrap_or(f64::NAN)
    }
}

/// `|ξ|^{n−k} h(ξ)`, or the zero matrix at ξ = 0.
pub fn multiplier_matrix(xi: &[f64], spec: &MultiplierSpec) -> Result<MOperator> {
    spec.validate()?;
    if xi.len() != spec.n {
        return domain(format!("frequency has {} components, expected {}", xi.len(), spec.n));
    }
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        let size = binomial(spec.n, spec.m);
        return MOperator::new(spec.n, spec.n, spec.m, DMatrix::zeros(size, size));
    }
    let h = symbol_h(xi, spec.n, spec.k, spec.m)?;
    let radial = r2.sqrt().powi((spec.n - spec.k) as i32);
    MOperator::new(spec.n, spec.n, spec.m, h.into_matrix() * radial)
}

/// Multiplier evaluation through `Π(ξ) = Λᵐ(I − ξ̂ξ̂ᵀ)`; the inner loop of
/// [`apply_q`].
fn fast_multiplier(xi: &[f64], spec: &MultiplierSpec, on_h: f64, off_h: f64) -> DMatrix<f64> {
    let size = binomial(xi.len(), spec.m);
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return DMatrix::zeros(size, size);
    }
    let radial = r2.sqrt().powi((spec.n - spec.k) as i32);
    let pi = hyperplane_projector_matrix(xi, spec.m).expect("nonzero frequency");
    // c[Π/(k−m) + (I − Π)/(n−m)] = (on − off)Π + off·I
    let mut out = pi * ((on_h - off_h) * radial);
    for i in 0..size {
        out[(i, i)] += off_h * radial;
    }
    out
}

/// The multiplier used at a DFT bin: frequency components sitting exactly on
/// the Nyquist bin alias ±f_Nyq, so the symbol is averaged over those sign
/// choices. This keeps the discrete multiplier Hermitian-symmetric, so real
/// fields map to real fields.
pub fn grid_multiplier(bin_freqs: &[f64], nyquist: &[bool], spec: &MultiplierSpec) -> DMatrix<f64> {
    let (on_h, off_h) = symbol_eigenvalues(spec.n, spec.k, spec.m).expect("validated spec");
    let flips: Vec<usize> = (0..bin_freqs.len()).filter(|&a| nyquist[a]).collect();
    if flips.is_empty() {
        return fast_multiplier(bin_freqs, spec, on_h, off_h);
    }
    let size = binomial(bin_freqs.len(), spec.m);
    let mut acc = DMatrix::zeros(size, size);
    let mut xi = bin_freqs.to_vec();
    let count = 1usize << flips.len();
    for mask in 0..count {
        for (bit, &axis) in flips.iter().enumerate() {
            let mag = bin_freqs[axis].abs();
            xi[axis] = if (mask >> bit) & 1 == 1 { mag } else { -mag };
        }
        acc += fast_multiplier(&xi, spec, on_h, off_h);
    }
    acc / count as f64
}

/// [`grid_multiplier`] without per-bin allocation: the basis of Λᵐ is
/// enumerated once and Π(ξ) is filled from the minors of I − ξ̂ξ̂ᵀ.
struct BinSymbol {
    dim: usize,
    m: usize,
    size: usize,
    basis: Vec<Vec<usize>>,
    on_h: f64,
    off_h: f64,
    power: i32,
}

impl BinSymbol {
    fn new(dim: usize, spec: &MultiplierSpec) -> Result<Self> {
        let (on_h, off_h) = symbol_eigenvalues(spec.n, spec.k, spec.m)?;
        Ok(Self {
            dim,
            m: spec.m,
            size: binomial(dim, spec.m),
            basis: raw_basis(dim, spec.m),
            on_h,
            off_h,
            power: (spec.n - spec.k) as i32,
        })
    }

    /// Adds `weight·|ξ|^{n−k}h(ξ)` to the row-major `out`.
    fn accumulate(&self, xi: &[f64], weight: f64, out: &mut [f64]) {
        let r2: f64 = xi.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            return;
        }
        let radial = r2.sqrt().powi(self.power) * weight;
        let on = (self.on_h - self.off_h) * radial;
        let mut proj = [0.0; 64];
        if self.dim <= 8 {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    proj[i * 8 + j] = (if i == j { 1.0 } else { 0.0 }) - xi[i] * xi[j] / r2;
                }
            }
        }
        let p = |i: usize, j: usize| proj[i * 8 + j];
        if self.m > 2 || self.dim > 8 {
            let pi = hyperplane_projector_matrix(xi, self.m).expect("nonzero frequency");
            for r in 0..self.size {
                for c in 0..self.size {
                    out[r * self.size + c] += on * pi[(r, c)];
                }
            }
        } else {
            for (r, row) in self.basis.iter().enumerate() {
                for (c, col) in self.basis.iter().enumerate() {
                    let minor = match self.m {
                        0 => 1.0,
                        1 => p(row[0], col[0]),
                        _ => p(row[0], col[0]) * p(row[1], col[1]) - p(row[0], col[1]) * p(row[1], col[0]),
                    };
                    out[r * self.size + c] += on * minor;
                }
            }
        }
        for i in 0..self.size {
            out[i * self.size + i] += self.off_h * radial;
        }
    }

    /// The Nyquist-averaged multiplier of one bin, written into `out`.
    fn fill(&self, bin_freqs: &[f64], nyquist: &[bool], xi: &mut [f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let flips = nyquist.iter().filter(|&&b| b).count();
        let count = 1usize << flips;
        let weight = 1.0 / count as f64;
        for mask in 0..count {
            let mut bit = 0;
            for axis in 0..self.dim {
                xi[axis] = bin_freqs[axis];
                if nyquist[axis] {
                    let mag = bin_freqs[axis].abs();
                    xi[axis] = if (mask >> bit) & 1 == 1 { mag } else { -mag };
                    bit += 1;
                }
            }
            self.accumulate(xi, weight, out);
        }
    }
}

/// Frequencies and Nyquist flags of DFT bin `site` on a cubic grid.
pub(crate) fn bin_frequency(site: usize, npts: usize, freqs: &[f64], n: usize, xi: &mut [f64], nyq: &mut [bool]) {
    let mut rest = site;
    for axis in (0..n).rev() {
        let j = rest % npts;
        rest /= npts;
        xi[axis] = freqs[j];
        nyq[axis] = 2 * j == npts;
    }
}

/// 𝒬γ on the grid of `γ`.
pub fn apply_q(field: &FormField, spec: &MultiplierSpec) -> Result<FormField> {
    let extended = apply_q_extended(field, spec)?;
    extended.crop(field.grid())
}

/// 𝒬γ on the padded grid (the grid of `γ` enlarged `spec.padding` times).
pub fn apply_q_extended(field: &FormField, spec: &MultiplierSpec) -> Result<FormField> {
    spec.validate()?;
    check_field(field, spec.n, spec)?;
    apply_symbol(field, spec)
}

/// The plane multiplier 𝒬_P on k-dimensional plane data: symbol
/// `|η|^{n−k} c[Π_P(η)/(k−m) + Ψ_P(η)/(n−m)]` with the projectors taken
/// inside Λᵐ(P). Satisfies `ℛ𝒬α(P, ·) = 𝒬_P ℛα(P, ·)`; the output stays on
/// the grid of `field`.
pub fn apply_plane_q(field: &FormField, spec: &MultiplierSpec) -> Result<FormField> {
    spec.validate()?;
    check_field(field, spec.k, spec)?;
    apply_symbol(field, spec)?.crop(field.grid())
}

fn check_field(field: &FormField, dim: usize, spec: &MultiplierSpec) -> Result<()> {
    if field.grid().n != dim || field.degree() != spec.m {
        return domain(format!(
            "multiplier for Λ^{}(R^{}) applied to a field in Λ^{}(R^{})",
            spec.m,
            dim,
            field.degree(),
            field.grid().n
        ));
    }
    Ok(())
}

fn apply_symbol(field: &FormField, spec: &MultiplierSpec) -> Result<FormField> {
    let padded = if spec.padding > 1 { field.embed(spec.padding) } else { field.clone() };
    let grid = *padded.grid();
    let shape = grid.shape();
    let sites = grid.sites();
    let c = padded.components();
    let (npts, n) = (grid.points_per_axis, grid.n);
    let data = padded.data();
    let mirror: Vec<usize> = (0..sites).into_par_iter().map(|s| mirror_site(s, npts, n)).collect();

    // the channels are real, so they are transformed two at a time as re + i·im
    let mut spectra: Vec<Vec<Complex64>> = vec![Vec::new(); c];
    for first in (0..c).step_by(2) {
        let second = (first + 1 < c).then_some(first + 1);
        let mut buf: Vec<Complex64> = (0..sites)
            .map(|s| Complex64::new(data[s * c + first], second.map_or(0.0, |b| data[s * c + b])))
            .collect();
        fft::forward(&mut buf, &shape);
        match second {
            None => spectra[first] = buf,
            Some(b) => {
                let half = Complex64::new(0.5, 0.0);
                let minus_half_i = Complex64::new(0.0, -0.5);
                spectra[first] = (0..sites).map(|s| (buf[s] + buf[mirror[s]].conj()) * half).collect();
                spectra[b] = (0..sites).map(|s| (buf[s] - buf[mirror[s]].conj()) * minus_half_i).collect();
            }
        }
    }

    let freqs = grid.frequencies();
    let symbol = BinSymbol::new(n, spec)?;
    let mut product = vec![Complex64::new(0.0, 0.0); sites * c];
    product.par_chunks_mut(c * BLOCK).enumerate().for_each_init(
        || (vec![0.0; n], vec![false; n], vec![0.0; n], vec![0.0; c * c]),
        |(bin, nyq, xi, mult), (block, chunk)| {
            for (i, out) in chunk.chunks_mut(c).enumerate() {
                let site = block * BLOCK + i;
                bin_frequency(site, npts, &freqs, n, bin, nyq);
                symbol.fill(bin, nyq, xi, mult);
                for (row, o) in out.iter_mut().enumerate() {
                    *o = (0..c).map(|col| spectra[col][site] * mult[row * c + col]).sum();
                }
            }
        },
    );
    drop(spectra);

    // a real result needs a Hermitian spectrum in every channel
    let scale = product.par_iter().map(|v| v.norm()).reduce(|| 0.0, f64::max);
    let asymmetry = (0..sites)
        .into_par_iter()
        .map(|s| (0..c).map(|r| (product[s * c + r] - product[mirror[s] * c + r].conj()).norm()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    if asymmetry > HERMITIAN_TOL * scale {
        return Err(KplaneError::Internal(format!(
            "multiplier spectrum is not Hermitian: asymmetry {asymmetry:.3e} (scale {scale:.3e})"
        )));
    }

    let mut out = vec![0.0; sites * c];
    for first in (0..c).step_by(2) {
        let second = (first + 1 < c).then_some(first + 1);
        let mut buf: Vec<Complex64> = (0..sites)
            .map(|s| {
                let a = product[s * c + first];
                second.map_or(a, |b| a + Complex64::i() * product[s * c + b])
            })
            .collect();
        fft::inverse(&mut buf, &shape);
        for (s, v) in buf.iter().enumerate() {
            out[s * c + first] = v.re;
            if let Some(b) = second {
                out[s * c + b] = v.im;
            }
        }
    }
    FormField::new(grid, spec.m, out)
}

/// Flat index of the bin at −ξ.
fn mirror_site(site: usize, npts: usize, n: usize) -> usize {
    let (mut rest, mut out, mut stride) = (site, 0, 1);
    for _ in 0..n {
        let j = rest % npts;
        rest /= npts;
        out += ((npts - j) % npts) * stride;
        stride *= npts;
    }
    out
}

/// Bounded-ratio diagnostics for `|γ(x)|·⟨x⟩ⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub dimension: usize,
    pub max_ratio: f64,
    /// Radius at which the maximum is attained.
    pub argmax_radius: f64,
    /// `(inner radius, outer radius, max ratio in the shell)`.
    pub profile: Vec<(f64, f64, f64)>,
}

/// Max over grid sites of `|γ(x)|·⟨x⟩ⁿ`, with its profile over radial
/// shells of width `shell_width` (only shells fully inside the box).
pub fn decay_check(field: &FormField, shell_width: f64) -> Result<DecayReport> {
    if !(shell_width > 0.0) {
        return domain("shell width must be positive");
    }
    let grid = field.grid();
    let n = grid.n;
    let shells = (grid.half_width / shell_width).floor() as usize;
    let mut profile: Vec<(f64, f64, f64)> =
        (0..shells).map(|s| (s as f64 * shell_width, (s + 1) as f64 * shell_width, 0.0)).collect();
    let mut max_ratio = 0.0;
    let mut argmax = 0.0;
    let mut x = vec![0.0; n];
    for site in 0..grid.sites() {
        grid.site_point(site, &mut x);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let value: f64 = field.site(site).iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = value * (1.0 + r2).powf(n as f64 / 2.0);
        if ratio > max_ratio {
            max_ratio = ratio;
            argmax = r2.sqrt();
        }
        let shell = (r2.sqrt() / shell_width) as usize;
        if shell < shells {
            profile[shell].2 = profile[shell].2.max(ratio);
        }
    }
    Ok(DecayReport { dimension: n, max_ratio, argmax_radius: argmax, profile })
}
