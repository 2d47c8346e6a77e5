//! Experiment configuration and end-to-end runs: inversion, decomposition of
//! forms and currents, and the Hölder and boundedness diagnostics.

use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checks::{adjointness_trials, exterior_suite, random_form, AdjointCase, AdjointTrial, SuiteResult};
use crate::currents::{pair, pushforward, simplex_to_dirac, Atom, DiracCurrent, Simplex, SimplexCurrent};
use crate::error::{domain, KplaneError, Result};
use crate::exterior::{apply_matrix, binomial, check_degrees, induced_map, raw_basis, symbol_eigenvalues};
use crate::fields::{hdot_norm, l2_norm, sample_to_grid, AnalyticForm, FormField, FormTerm, GridSpec};
use crate::grassmann::{distance, fixed_quadrature, haar_plane, sample_haar, Plane, PlaneSet};
use crate::multiplier::{apply_plane_q, apply_q, MultiplierSpec};
use crate::random::{stream_rng, streams};
use crate::xray::{adjoint, forward, PerpQuadrature, PlaneKernel, Sinogram};

fn default_padding() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

/// Sampling resolutions. Optional entries are filled in by
/// [`ExperimentConfig::resolved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width L of the reconstruction box `[−L, L)ⁿ`.
    pub half_width: f64,
    /// Nodes per axis N of the reconstruction grid.
    pub points_per_axis: usize,
    /// Half-width of the in-plane sinogram grid (default L).
    #[serde(default)]
    pub plane_half_width: Option<f64>,
    /// Nodes per axis of the in-plane sinogram grid (default N).
    #[serde(default)]
    pub plane_points_per_axis: Option<usize>,
    /// Trapezoid nodes per axis of P⊥.
    pub perp_points: usize,
    /// Truncation radius of the P⊥ integral (default L).
    #[serde(default)]
    pub perp_half_width: Option<f64>,
    /// The backprojection and 𝒬 run on the box enlarged by this factor, which
    /// is then cropped to `[−L, L)ⁿ`.
    #[serde(default = "default_padding")]
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneMode {
    /// Independent Haar samples.
    Haar,
    /// The deterministic rule of [`fixed_quadrature`].
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub mode: PlaneMode,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Test form. `Gaussian` is `coeff·e^{−width·π|x|²} dx_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormSpec {
    Gaussian {
        /// Defaults to `[0, 1, …, m−1]`.
        #[serde(default)]
        index: Option<Vec<usize>>,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        coeff: f64,
    },
    Terms {
        terms: Vec<FormTerm>,
    },
    Zero,
}

impl Default for FormSpec {
    fn default() -> Self {
        FormSpec::Gaussian { index: None, width: 1.0, coeff: 1.0 }
    }
}

impl FormSpec {
    pub fn build(&self, n: usize, m: usize) -> Result<AnalyticForm> {
        match self {
            FormSpec::Gaussian { index, width, coeff } => {
                let idx: Vec<usize> = index.clone().unwrap_or_else(|| (0..m).collect());
                if idx.len() != m {
                    return domain(format!("form index {idx:?} is not of degree {m}"));
                }
                AnalyticForm::gaussian(n, &idx, *width, *coeff)
            }
            FormSpec::Terms { terms } => AnalyticForm::new(n, m, terms.clone()),
            FormSpec::Zero => Ok(AnalyticForm::zero(n, m)),
        }
    }
}

fn default_order() -> usize {
    2
}

/// Test current for the pairing runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrentSpec {
    /// Inscribed regular polygon in the coordinate plane of `axes`.
    Circle {
        #[serde(default = "one")]
        radius: f64,
        segments: usize,
        #[serde(default = "default_axes")]
        axes: [usize; 2],
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "default_order")]
        order: usize,
    },
    Dirac {
        atoms: Vec<Atom>,
    },
    Simplices {
        simplices: Vec<Simplex>,
        #[serde(default = "default_order")]
        order: usize,
    },
}

fn default_axes() -> [usize; 2] {
    [0, 1]
}

impl CurrentSpec {
    pub fn build(&self, n: usize, m: usize) -> Result<DiracCurrent> {
        match self {
            CurrentSpec::Circle { radius, segments, axes, center, order } => {
                if m != 1 {
                    return domain("a circle is a 1-current");
                }
                let c = center.clone().unwrap_or_else(|| vec![0.0; n]);
                simplex_to_dirac(&SimplexCurrent::circle(n, *radius, *segments, *axes, &c)?, *order)
            }
            CurrentSpec::Dirac { atoms } => DiracCurrent::new(n, m, atoms.clone()),
            CurrentSpec::Simplices { simplices, order } => {
                simplex_to_dirac(&SimplexCurrent { n, m, simplices: simplices.clone() }, *order)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Plane pairs in the base sample; the doubled sample extends it.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Probe points per pair, drawn in `|x| ≤ L/2`.
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Rotation angles between paired planes are log-uniform in this range.
    #[serde(default = "default_min_angle")]
    pub min_angle: f64,
    #[serde(default = "default_max_angle")]
    pub max_angle: f64,
}

fn default_theta() -> f64 {
    0.5
}
fn default_pairs() -> usize {
    200
}
fn default_probes() -> usize {
    4
}
fn default_min_angle() -> f64 {
    1e-3
}
fn default_max_angle() -> f64 {
    0.5
}

impl Default for HolderConfig {
    fn default() -> Self {
        Self {
            theta: default_theta(),
            pairs: default_pairs(),
            probes: default_probes(),
            min_angle: default_min_angle(),
            max_angle: default_max_angle(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "default_family")]
    pub family: usize,
    /// Forms re-run on the refined grid.
    #[serde(default = "default_refined")]
    pub refined: usize,
    /// Nodes-per-axis multiplier of the refined grid.
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    #[serde(default = "default_dilation")]
    pub dilation: f64,
}

fn default_family() -> usize {
    10
}
fn default_refined() -> usize {
    2
}
fn default_refinement() -> usize {
    2
}
fn default_dilation() -> f64 {
    1.5
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            family: default_family(),
            refined: default_refined(),
            refinement: default_refinement(),
            dilation: default_dilation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_rel_l2")]
    pub rel_l2: f64,
    #[serde(default = "tol_sigmas")]
    pub pairing_sigmas: f64,
    #[serde(default = "tol_pairing_rel")]
    pub pairing_rel: f64,
    #[serde(default = "tol_drift")]
    pub holder_drift: f64,
    #[serde(default = "tol_bounds")]
    pub bounds_refinement: f64,
    #[serde(default = "tol_bounds")]
    pub bounds_dilation: f64,
    #[serde(default = "tol_adjoint")]
    pub adjoint: f64,
}

fn tol_rel_l2() -> f64 {
    0.03
}
fn tol_sigmas() -> f64 {
    3.0
}
fn tol_pairing_rel() -> f64 {
    0.05
}
fn tol_drift() -> f64 {
    0.2
}
fn tol_bounds() -> f64 {
    0.15
}
fn tol_adjoint() -> f64 {
    0.02
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel_l2: tol_rel_l2(),
            pairing_sigmas: tol_sigmas(),
            pairing_rel: tol_pairing_rel(),
            holder_drift: tol_drift(),
            bounds_refinement: tol_bounds(),
            bounds_dilation: tol_bounds(),
            adjoint: tol_adjoint(),
        }
    }
}

/// A complete experiment, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub grid: GridConfig,
    pub planes: PlaneConfig,
    #[serde(default)]
    pub form: FormSpec,
    #[serde(default)]
    pub current: Option<CurrentSpec>,
    #[serde(default)]
    pub holder: HolderConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| KplaneError::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg.resolved())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_degrees(self.n, self.k, self.m)?;
        let g = &self.grid;
        GridSpec::new(self.n, g.half_width, g.points_per_axis)?;
        GridSpec::new(
            self.k,
            g.plane_half_width.unwrap_or(g.half_width),
            g.plane_points_per_axis.unwrap_or(g.points_per_axis),
        )?;
        PerpQuadrature::new(g.perp_points, g.perp_half_width.unwrap_or(g.half_width))?;
        if g.padding == 0 {
            return domain("padding must be at least 1");
        }
        if self.planes.count == 0 {
            return domain("plane count must be positive");
        }
        let h = &self.holder;
        if !(h.theta > 0.0 && h.theta < 1.0) {
            return domain("Hölder exponent must lie in (0, 1)");
        }
        if h.pairs == 0 || h.probes == 0 || !(0.0 < h.min_angle && h.min_angle <= h.max_angle) {
            return domain("invalid Hölder sampling parameters");
        }
        if self.bounds.family < 10 {
            return domain("boundedness family needs at least 10 forms");
        }
        if self.bounds.refinement == 0 || !(self.bounds.dilation > 0.0) {
            return domain("invalid boundedness refinement parameters");
        }
        let t = &self.tolerances;
        let tols = [t.rel_l2, t.pairing_sigmas, t.pairing_rel, t.holder_drift, t.bounds_refinement, t.bounds_dilation, t.adjoint];
        if tols.iter().any(|v| !(*v >= 0.0)) {
            return domain("tolerances must be non-negative");
        }
        self.form.build(self.n, self.m)?;
        if let Some(c) = &self.current {
            c.build(self.n, self.m)?;
        }
        Ok(())
    }

    /// Copy with every optional resolution made explicit.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        let g = &mut cfg.grid;
        g.plane_half_width.get_or_insert(g.half_width);
        g.plane_points_per_axis.get_or_insert(g.points_per_axis);
        g.perp_half_width.get_or_insert(g.half_width);
        if let FormSpec::Gaussian { index, .. } = &mut cfg.form {
            index.get_or_insert_with(|| (0..self.m).collect());
        }
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.planes.seed = seed;
        self
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec { n: self.n, half_width: self.grid.half_width, points_per_axis: self.grid.points_per_axis }
    }

    pub fn plane_grid(&self) -> GridSpec {
        GridSpec {
            n: self.k,
            half_width: self.grid.plane_half_width.unwrap_or(self.grid.half_width),
            points_per_axis: self.grid.plane_points_per_axis.unwrap_or(self.grid.points_per_axis),
        }
    }

    pub fn perp_quadrature(&self) -> PerpQuadrature {
        PerpQuadrature {
            points: self.grid.perp_points,
            half_width: self.grid.perp_half_width.unwrap_or(self.grid.half_width),
        }
    }

    pub fn multiplier(&self) -> MultiplierSpec {
        MultiplierSpec { n: self.n, k: self.k, m: self.m, padding: 1 }
    }

    pub fn build_planes(&self) -> Result<PlaneSet> {
        match self.planes.mode {
            PlaneMode::Haar => sample_haar(self.n, self.k, self.planes.count, self.planes.seed),
            PlaneMode::Fixed => fixed_quadrature(self.n, self.k, self.planes.count),
        }
    }

    pub fn build_form(&self) -> Result<AnalyticForm> {
        self.form.build(self.n, self.m)
    }

    /// Hex sha256 of the canonical JSON of the resolved config.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_vec(&self.resolved())?;
        Ok(hex::encode(Sha256::digest(canonical)))
    }
}

/// Result of [`invert`].
#[derive(Debug, Clone)]
pub struct Inversion {
    pub reconstruction: FormField,
    pub truth: FormField,
    pub rel_l2_error: f64,
    pub sinogram: Sinogram,
}

/// `𝒬ℛ*` applied to sinogram data: backprojection onto the padded box, the
/// multiplier there, then a crop to `grid`.
pub fn reconstruct(sinogram: &Sinogram, grid: GridSpec, spec: &MultiplierSpec, padding: usize) -> Result<FormField> {
    let back = adjoint(sinogram, grid.padded(padding))?;
    apply_q(&back, &MultiplierSpec { padding: 1, ..*spec })?.crop(&grid)
}

/// `𝒬ℛ*ℛα` on the configured grid and its relative L² error against the
/// sampled `α`.
pub fn invert(alpha: &AnalyticForm, cfg: &ExperimentConfig) -> Result<Inversion> {
    check_form_matches(alpha, cfg)?;
    let planes = cfg.build_planes()?;
    let sinogram = forward(alpha, &planes, cfg.plane_grid(), &cfg.perp_quadrature())?;
    let grid = cfg.grid_spec();
    let reconstruction = reconstruct(&sinogram, grid, &cfg.multiplier(), cfg.grid.padding)?;
    let truth = sample_to_grid(alpha, grid)?;
    let norm = l2_norm(&truth);
    let err = l2_norm(&reconstruction.sub(&truth)?);
    let rel_l2_error = if norm > 0.0 { err / norm } else { err };
    Ok(Inversion { reconstruction, truth, rel_l2_error, sinogram })
}

fn check_form_matches(alpha: &AnalyticForm, cfg: &ExperimentConfig) -> Result<()> {
    if alpha.n != cfg.n || alpha.m != cfg.m {
        return domain(format!(
            "form in Λ^{}(R^{}) does not match the configured ({}, {}, {})",
            alpha.m, alpha.n, cfg.n, cfg.k, cfg.m
        ));
    }
    Ok(())
}

/// `𝒬α` sampled on the padded box.
pub fn q_alpha(alpha: &AnalyticForm, cfg: &ExperimentConfig) -> Result<FormField> {
    check_form_matches(alpha, cfg)?;
    let sampled = sample_to_grid(alpha, cfg.grid_spec().padded(cfg.grid.padding))?;
    apply_q(&sampled, &cfg.multiplier())
}

/// The plane family `{α_P}` with `α_P = ℛ𝒬α(P, ·)` in frame coordinates.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub planes: PlaneSet,
    /// α_P per plane on the in-plane grid.
    pub plane_forms: Sinogram,
    /// `‖ℛ𝒬α − 𝒬_Pℛα‖ / ‖ℛ𝒬α‖` over the sinogram: the two orders of the
    /// operators agree in the continuum.
    pub commutation_gap: f64,
    pub config_hash: String,
}

pub fn decompose(alpha: &AnalyticForm, cfg: &ExperimentConfig) -> Result<DecompositionResult> {
    let planes = cfg.build_planes()?;
    let k_grid = cfg.plane_grid();
    let quad = cfg.perp_quadrature();
    let q = q_alpha(alpha, cfg)?;
    let plane_forms = forward(&q, &planes, k_grid, &quad)?;

    // other order: transform first, then the plane multiplier
    let sino = forward(alpha, &planes, k_grid, &quad)?;
    let spec = MultiplierSpec { padding: cfg.grid.padding, ..cfg.multiplier() };
    let filtered = sino
        .slices()
        .iter()
        .map(|s| apply_plane_q(s, &spec))
        .collect::<Result<Vec<_>>>()?;
    let other = Sinogram::new(planes.clone(), cfg.m, k_grid, filtered)?;
    let diff = plane_forms.add(&Sinogram::new(
        planes.clone(),
        cfg.m,
        k_grid,
        other.slices().iter().map(|s| s.scaled(-1.0)).collect(),
    )?)?;
    let norm = plane_forms.l2_norm();
    let commutation_gap = if norm > 0.0 { diff.l2_norm() / norm } else { diff.l2_norm() };
    Ok(DecompositionResult { planes, plane_forms, commutation_gap, config_hash: cfg.hash()? })
}

/// `Σ_P w_P P^*(α_P)(x)` at each probe point, evaluating α_P exactly from
/// the sampled `𝒬α` (no in-plane interpolation).
pub fn reconstruct_at(q: &FormField, planes: &PlaneSet, quad: &PerpQuadrature, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (n, k, m) = (planes.n(), planes.k(), q.degree());
    let c_amb = binomial(n, m);
    let mut out = vec![vec![0.0; c_amb]; points.len()];
    let mut local = vec![0.0; binomial(k, m)];
    let mut ambient = vec![0.0; c_amb];
    for (plane, w) in planes.iter() {
        let kernel = PlaneKernel::new(plane, m, quad)?;
        let incl = induced_map(plane.frame(), m)?.into_matrix();
        for (x, acc) in points.iter().zip(out.iter_mut()) {
            let coords = frame_coords(plane, x);
            kernel.transform_into(q, &coords, &mut local);
            apply_matrix(&incl, &local, &mut ambient);
            for (a, v) in acc.iter_mut().zip(&ambient) {
                *a += w * v;
            }
        }
    }
    Ok(out)
}

fn frame_coords(plane: &Plane, x: &[f64]) -> Vec<f64> {
    let f = plane.frame();
    (0..plane.k()).map(|j| f.column(j).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Monte Carlo estimate of `∫_T α` through the plane family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub estimate: f64,
    pub std_error: f64,
    pub truth: f64,
    pub planes: usize,
    /// `max(σ·std_error, rel·|truth|)`.
    pub tolerance: f64,
    pub passed: bool,
}

/// Per-plane values `∫_{P_*T} α_P` in plane order.
pub fn projected_pairings(current: &DiracCurrent, q: &FormField, planes: &PlaneSet, quad: &PerpQuadrature) -> Result<Vec<f64>> {
    planes
        .planes()
        .iter()
        .map(|plane| {
            let pushed = pushforward(plane, current)?;
            let kernel = PlaneKernel::new(plane, current.m, quad)?;
            let mut value = vec![0.0; binomial(plane.k(), current.m)];
            let mut total = 0.0;
            for atom in &pushed.atoms {
                kernel.transform_into(q, &atom.position, &mut value);
                total += atom.weight.iter().zip(&value).map(|(a, b)| a * b).sum::<f64>();
            }
            Ok(total)
        })
        .collect()
}

pub fn pair_via_projections(current: &DiracCurrent, alpha: &AnalyticForm, cfg: &ExperimentConfig) -> Result<PairingResult> {
    if current.n != cfg.n || current.m != cfg.m {
        return domain("current does not match the configured (n, m)");
    }
    let planes = cfg.build_planes()?;
    let q = q_alpha(alpha, cfg)?;
    let values = projected_pairings(current, &q, &planes, &cfg.perp_quadrature())?;
    let estimate: f64 = values.iter().zip(planes.weights()).map(|(v, w)| v * w).sum();
    let count = values.len() as f64;
    let std_error = if values.len() > 1 {
        let mean = values.iter().sum::<f64>() / count;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    let truth = pair(current, alpha)?;
    let tolerance = (cfg.tolerances.pairing_sigmas * std_error).max(cfg.tolerances.pairing_rel * truth.abs());
    Ok(PairingResult {
        estimate,
        std_error,
        truth,
        planes: planes.len(),
        tolerance,
        passed: (estimate - truth).abs() <= tolerance,
    })
}

/// Hölder ratios of `P ↦ ι_P ℛ𝒬α(P, x_P)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub theta: f64,
    pub pairs: usize,
    pub probes: usize,
    pub min_distance: f64,
    pub max_distance: f64,
    /// Estimated sup of the ratio over the base sample: the sampled maximum,
    /// raised by local ascent from the best samples.
    pub max_ratio: f64,
    /// The same estimate over the doubled sample (a superset of the base).
    pub max_ratio_doubled: f64,
    /// Plain maximum over the doubled sample, before ascent.
    pub sampled_max_doubled: f64,
    pub drift: f64,
    /// 10/50/90/99th percentiles of the ratio over the doubled sample.
    pub quantiles: [f64; 4],
    /// `(θ', max ratio)` for a few exponents on the doubled sample.
    pub by_theta: Vec<(f64, f64)>,
    pub finite: bool,
    pub passed: bool,
}

/// Samples whose neighbourhood is searched for a larger ratio.
const ASCENT_STARTS: usize = 16;
const ASCENT_STEPS: usize = 400;

/// Random skew-symmetric matrix of unit Frobenius norm.
fn skew_direction<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = &a - a.transpose();
    let norm = a.norm().max(f64::MIN_POSITIVE);
    a / norm
}

/// Cayley transform of `angle·dir`.
fn cayley(dir: &DMatrix<f64>, angle: f64) -> DMatrix<f64> {
    let n = dir.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let half = dir * (0.5 * angle);
    (&eye - &half).try_inverse().expect("I − A/2 is invertible for skew A") * (&eye + &half)
}

/// The Cayley transform of a random skew matrix, scaled to rotate by
/// roughly `angle`.
fn small_rotation<R: Rng>(n: usize, angle: f64, rng: &mut R) -> DMatrix<f64> {
    cayley(&skew_direction(n, rng), angle)
}

fn ball_point<R: Rng>(n: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| radius * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        if x.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            return x;
        }
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

/// One Hölder sample: `P`, `Q = cayley(dir, angle)·P` and a probe `x`.
#[derive(Clone)]
struct HolderProbe {
    p: Plane,
    dir: DMatrix<f64>,
    angle: f64,
    x: Vec<f64>,
}

struct HolderField<'a> {
    q: &'a FormField,
    quad: PerpQuadrature,
    m: usize,
}

impl HolderField<'_> {
    /// `(dist(P, Q), |ι_P ℛ𝒬α(P, x_P) − ι_Q ℛ𝒬α(Q, x_Q)|)`.
    fn eval(&self, probe: &HolderProbe) -> Result<(f64, f64)> {
        let (p, m) = (&probe.p, self.m);
        let q_plane = p.rotated(&cayley(&probe.dir, probe.angle))?;
        let dist = distance(p, &q_plane)?;
        let mut values = Vec::with_capacity(2);
        for plane in [p, &q_plane] {
            let kernel = PlaneKernel::new(plane, m, &self.quad)?;
            let incl = induced_map(plane.frame(), m)?.into_matrix();
            let mut local = vec![0.0; binomial(plane.k(), m)];
            let mut up = vec![0.0; binomial(plane.n(), m)];
            kernel.transform_into(self.q, &frame_coords(plane, &probe.x), &mut local);
            apply_matrix(&incl, &local, &mut up);
            values.push(up);
        }
        let num = values[0].iter().zip(&values[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        Ok((dist, num))
    }

    /// Random local ascent of the ratio from `start`, staying inside the
    /// sampled angle range and the probe ball.
    fn ascend<R: Rng>(&self, start: &HolderProbe, theta: f64, h: &HolderConfig, radius: f64, rng: &mut R) -> Result<f64> {
        let n = start.p.n();
        let ratio = |(d, num): (f64, f64)| if d > 0.0 { num / d.powf(theta) } else { 0.0 };
        let mut current = start.clone();
        let mut best = ratio(self.eval(&current)?);
        let (mut step, mut misses) = (0.2, 0);
        for _ in 0..ASCENT_STEPS {
            let p = current.p.rotated(&small_rotation(n, 0.5 * step, rng))?;
            let dir = &current.dir + skew_direction(n, rng) * step;
            let dir = &dir / dir.norm().max(f64::MIN_POSITIVE);
            let scale: f64 = rng.sample(StandardNormal);
            let angle = (current.angle * (step * scale).exp()).clamp(h.min_angle, h.max_angle);
            let mut x: Vec<f64> =
                current.x.iter().map(|v| v + step * radius * rng.sample::<f64, _>(StandardNormal)).collect();
            let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len > radius {
                x.iter_mut().for_each(|v| *v *= radius / len);
            }
            let candidate = HolderProbe { p, dir, angle, x };
            let value = ratio(self.eval(&candidate)?);
            if value > best {
                best = value;
                current = candidate;
                misses = 0;
            } else {
                misses += 1;
                if misses == 10 {
                    step *= 0.5;
                    misses = 0;
                }
            }
        }
        Ok(best)
    }
}

pub fn holder_check(alpha: &AnalyticForm, cfg: &ExperimentConfig, theta: f64) -> Result<HolderReport> {
    if !(theta > 0.0 && theta < 1.0) {
        return domain("Hölder exponent must lie in (0, 1)");
    }
    let h = &cfg.holder;
    let (n, k) = (cfg.n, cfg.k);
    let q = q_alpha(alpha, cfg)?;
    let field = HolderField { q: &q, quad: cfg.perp_quadrature(), m: cfg.m };
    let radius = 0.5 * cfg.grid.half_width;
    let mut rng = stream_rng(cfg.planes.seed, streams::HOLDER);
    let total = 2 * h.pairs;
    let (log_lo, log_hi) = (h.min_angle.ln(), h.max_angle.ln());
    // (pair index, distance, numerator, probe)
    let mut samples: Vec<(usize, f64, f64, HolderProbe)> = Vec::with_capacity(total * h.probes);
    for pair_idx in 0..total {
        let p = haar_plane(n, k, &mut rng)?;
        let angle = (log_lo + (log_hi - log_lo) * rng.gen::<f64>()).exp();
        let dir = skew_direction(n, &mut rng);
        let probes: Vec<Vec<f64>> = (0..h.probes).map(|_| ball_point(n, radius, &mut rng)).collect();
        for x in probes {
            let probe = HolderProbe { p: p.clone(), dir: dir.clone(), angle, x };
            let (dist, num) = field.eval(&probe)?;
            if dist == 0.0 {
                break;
            }
            samples.push((pair_idx, dist, num, probe));
        }
    }
    let ratio = |s: &(usize, f64, f64, HolderProbe), t: f64| s.2 / s.1.powf(t);
    let max_over = |upto: usize, t: f64| {
        samples.iter().filter(|s| s.0 < upto).map(|s| ratio(s, t)).fold(0.0, f64::max)
    };

    // ascent from the best samples; each start owns an RNG stream keyed by
    // its sample index, so a start shared by both samples ascends identically
    let mut ascended: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    let mut estimate = |upto: usize| -> Result<f64> {
        let mut order: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].0 < upto).collect();
        order.sort_by(|&a, &b| ratio(&samples[b], theta).total_cmp(&ratio(&samples[a], theta)).then(a.cmp(&b)));
        let mut best = max_over(upto, theta);
        for &i in order.iter().take(ASCENT_STARTS) {
            let value = match ascended.get(&i) {
                Some(v) => *v,
                None => {
                    let mut local = stream_rng(cfg.planes.seed, streams::ASCENT + i as u64);
                    let v = field.ascend(&samples[i].3, theta, h, radius, &mut local)?;
                    ascended.insert(i, v);
                    v
                }
            };
            best = best.max(value);
        }
        Ok(best)
    };
    let max_ratio = estimate(h.pairs)?;
    // the doubled sample contains every base start
    let max_ratio_doubled = estimate(total)?.max(max_ratio);
    let drift = if max_ratio > 0.0 { (max_ratio_doubled - max_ratio).abs() / max_ratio } else { 0.0 };
    let mut all: Vec<f64> = samples.iter().map(|s| ratio(s, theta)).collect();
    let finite = all.iter().all(|v| v.is_finite()) && max_ratio_doubled.is_finite();
    all.sort_by(|a, b| a.total_cmp(b));
    let quantiles = [quantile(&all, 0.1), quantile(&all, 0.5), quantile(&all, 0.9), quantile(&all, 0.99)];
    let by_theta = [0.1, theta, 0.9].iter().map(|&t| (t, max_over(total, t))).collect();
    let dists = samples.iter().map(|s| s.1);
    let min_distance = dists.clone().fold(f64::INFINITY, f64::min);
    let max_distance = dists.fold(0.0, f64::max);
    Ok(HolderReport {
        theta,
        pairs: h.pairs,
        probes: h.probes,
        min_distance,
        max_distance,
        max_ratio,
        max_ratio_doubled,
        sampled_max_doubled: max_over(total, theta),
        drift,
        quantiles,
        by_theta,
        finite,
        passed: finite && drift <= cfg.tolerances.holder_drift,
    })
}

/// Ratios `‖ℛ*ℛα‖_{Ḣ^{n−k}} / ‖α‖_{L²}` over a family of forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub ratios: Vec<f64>,
    pub sup: f64,
    /// Continuum range `[1/λ_max(h), 1/λ_min(h)]` of the ratio.
    pub spectral_range: (f64, f64),
    /// `(ratio on the base grid, ratio on the refined grid)`.
    pub refinement: Vec<(f64, f64)>,
    pub max_refinement_gap: f64,
    /// `(ratio of α, ratio of α dilated)` for the first family member.
    pub dilation: (f64, f64),
    pub dilation_gap: f64,
    pub passed: bool,
}

/// Default family: random Schwartz forms from the run seed.
pub fn form_family(n: usize, m: usize, count: usize, seed: u64) -> Result<Vec<AnalyticForm>> {
    let mut rng = stream_rng(seed, streams::FAMILY);
    (0..count).map(|_| random_form(n, m, &mut rng)).collect()
}

fn bounded_ratio(alpha: &AnalyticForm, planes: &PlaneSet, cfg: &ExperimentConfig, grid: GridSpec) -> Result<f64> {
    let k_grid = GridSpec { points_per_axis: cfg.plane_grid().points_per_axis * grid.points_per_axis / cfg.grid.points_per_axis, ..cfg.plane_grid() };
    let quad = PerpQuadrature {
        points: (cfg.grid.perp_points - 1) * grid.points_per_axis / cfg.grid.points_per_axis + 1,
        ..cfg.perp_quadrature()
    };
    let sino = forward(alpha, planes, k_grid, &quad)?;
    let back = adjoint(&sino, grid.padded(cfg.grid.padding))?;
    let num = hdot_norm(&back, (cfg.n - cfg.k) as f64)?;
    let den = l2_norm(&sample_to_grid(alpha, grid)?);
    if den == 0.0 {
        return domain("boundedness ratio of a zero form");
    }
    Ok(num / den)
}

pub fn boundedness_check(family: &[AnalyticForm], cfg: &ExperimentConfig) -> Result<BoundsReport> {
    if family.len() < 10 {
        return domain("boundedness family needs at least 10 forms");
    }
    for f in family {
        check_form_matches(f, cfg)?;
    }
    let planes = cfg.build_planes()?;
    let grid = cfg.grid_spec();
    let ratios = family.iter().map(|f| bounded_ratio(f, &planes, cfg, grid)).collect::<Result<Vec<_>>>()?;
    let fine = GridSpec { points_per_axis: grid.points_per_axis * cfg.bounds.refinement, ..grid };
    let refinement = family
        .iter()
        .zip(&ratios)
        .take(cfg.bounds.refined)
        .map(|(f, r)| Ok((*r, bounded_ratio(f, &planes, cfg, fine)?)))
        .collect::<Result<Vec<_>>>()?;
    let gap = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let max_refinement_gap = refinement.iter().map(|(a, b)| gap(*a, *b)).fold(0.0, f64::max);
    let dilated = bounded_ratio(&family[0].dilated(cfg.bounds.dilation), &planes, cfg, grid)?;
    let dilation = (ratios[0], dilated);
    let dilation_gap = gap(ratios[0], dilated);
    let (on, off) = symbol_eigenvalues(cfg.n, cfg.k, cfg.m)?;
    let sup = ratios.iter().copied().fold(0.0, f64::max);
    let t = &cfg.tolerances;
    let passed = sup.is_finite()
        && max_refinement_gap <= t.bounds_refinement
        && dilation_gap <= t.bounds_dilation;
    Ok(BoundsReport {
        ratios,
        sup,
        spectral_range: (1.0 / on, 1.0 / off),
        refinement,
        max_refinement_gap,
        dilation,
        dilation_gap,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointCaseReport {
    pub case: AdjointCase,
    pub trials: Vec<AdjointTrial>,
    pub max_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub exterior: Vec<SuiteResult>,
    pub adjointness: Vec<AdjointCaseReport>,
    pub passed: bool,
}

/// The exterior exactness suite over `n ≤ 5` and the dot-product test for
/// small `(n, k, m)`.
pub fn selftest(seed: u64, adjoint_tol: f64) -> Result<SelftestReport> {
    let exterior = exterior_suite(5, 3, seed)?;
    let adjointness = [(2, 1, 0), (3, 1, 0), (3, 2, 1)]
        .iter()
        .map(|&(n, k, m)| {
            let case = AdjointCase { planes: 6, ..AdjointCase::standard(n, k, m) };
            let trials = adjointness_trials(&case, 2, seed)?;
            let max_gap = trials.iter().map(|t| t.relative_gap).fold(0.0, f64::max);
            Ok(AdjointCaseReport { case, trials, max_gap, passed: max_gap <= adjoint_tol })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = exterior.iter().all(|s| s.passed) && adjointness.iter().all(|a| a.passed);
    Ok(SelftestReport { exterior, adjointness, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix: f64,
    pub finished_unix: f64,
    pub elapsed_seconds: f64,
}

impl Timestamps {
    pub fn since(started: SystemTime) -> Self {
        let now = SystemTime::now();
        let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self {
            started_unix: unix(started),
            finished_unix: unix(now),
            elapsed_seconds: now.duration_since(started).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        }
    }
}

/// The `report.json` document. Everything except `timestamps` is a pure
/// function of (config, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub config: Option<ExperimentConfig>,
    pub input_hash: String,
    pub results: serde_json::Value,
    pub passed: Option<bool>,
    pub timestamps: Timestamps,
}

impl Report {
    pub fn new(
        command: &str,
        config: Option<&ExperimentConfig>,
        results: serde_json::Value,
        passed: Option<bool>,
        started: SystemTime,
    ) -> Result<Self> {
        let config = config.map(|c| c.resolved());
        let input_hash = match &config {
            Some(c) => c.hash()?,
            None => hex::encode(Sha256::digest(command.as_bytes())),
        };
        Ok(Self { command: command.to_string(), config, input_hash, results, passed, timestamps: Timestamps::since(started) })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Scalar FBP reference for `n = 2, k = 1, m = 0`: `P ↦ ramp-filtered
/// projection`, i.e. `|η|` applied to `ℛα(P, ·)`.
pub fn ramp_filtered(projection: &FormField) -> Result<FormField> {
    let spec = MultiplierSpec { n: 2, k: 1, m: 0, padding: 4 };
    Ok(apply_plane_q(projection, &spec)?.scaled(1.0 / std::f64::consts::PI))
}

/// Basis components of `Λᵐ(Rⁿ)` as multi-index labels, for reports.
pub fn component_labels(n: usize, m: usize) -> Vec<String> {
    raw_basis(n, m)
        .iter()
        .map(|i| format!("{{{}}}", i.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"n": 2, "k": 1, "m": 0,
                "grid": {"half_width": 4.0, "points_per_axis": 64, "perp_points": 129, "padding": 2},
                "planes": {"mode": "fixed", "count": 90}}"#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_are_resolved() {
        let cfg = small_config();
        assert_eq!(cfg.grid.plane_points_per_axis, Some(64));
        assert_eq!(cfg.grid.perp_half_width, Some(4.0));
        assert_eq!(cfg.form, FormSpec::Gaussian { index: Some(vec![]), width: 1.0, coeff: 1.0 });
        assert_eq!(cfg.hash().unwrap(), cfg.resolved().hash().unwrap());
        assert_ne!(cfg.hash().unwrap(), cfg.clone().with_seed(9).hash().unwrap());
    }

    #[test]
    fn config_validation() {
        let bad = [
            r#"{"n": 2, "k": 2, "m": 0, "grid": {"half_width": 4.0, "points_per_axis": 64, "perp_points": 9}, "planes": {"mode": "haar", "count": 4}}"#,
            r#"{"n": 2, "k": 1, "m": 0, "grid": {"half_width": 4.0, "points_per_axis": 7, "perp_points": 9}, "planes": {"mode": "haar", "count": 4}}"#,
            r#"{"n": 2, "k": 1, "m": 0, "grid": {"half_width": 4.0, "points_per_axis": 8, "perp_points": 9}, "planes": {"mode": "haar", "count": 0}}"#,
            r#"{"n": 2, "k": 1, "m": 0, "grid": {"half_width": 4.0, "points_per_axis": 8, "perp_points": 9}, "planes": {"mode": "haar", "count": 3}, "holder": {"theta": 1.5}}"#,
            r#"{"n": 2, "k": 1, "m": 0, "grid": {"half_width": 4.0, "points_per_axis": 8, "perp_points": 9}, "planes": {"mode": "haar", "count": 3}, "bogus": 1}"#,
            r#"{"n": 2, "k": 1, "m": 0, "grid": {"half_width": 4.0, "points_per_axis": 8, "perp_points": 9}, "planes": {"mode": "haar", "count": 3}, "form": {"kind": "gaussian", "index": [0]}}"#,
        ];
        for text in bad {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn zero_form_inverts_to_zero() {
        let cfg = small_config();
        let inv = invert(&AnalyticForm::zero(2, 0), &cfg).unwrap();
        assert!(inv.reconstruction.data().iter().all(|v| *v == 0.0));
        let dec = decompose(&AnalyticForm::zero(2, 0), &cfg).unwrap();
        assert!(dec.plane_forms.slices().iter().all(|s| s.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn small_line_inversion() {
        let cfg = small_config();
        let inv = invert(&cfg.build_form().unwrap(), &cfg).unwrap();
        assert!(inv.rel_l2_error < 0.08, "{}", inv.rel_l2_error);
    }

    #[test]
    fn zero_current_pairs_to_zero() {
        let cfg = small_config();
        let t = DiracCurrent::new(2, 0, vec![Atom { position: vec![0.3, 0.1], weight: vec![0.0] }]).unwrap();
        let r = pair_via_projections(&t, &cfg.build_form().unwrap(), &cfg).unwrap();
        assert_eq!((r.estimate, r.truth), (0.0, 0.0));
    }

    #[test]
    fn rotations_are_orthogonal_and_small() {
        let mut rng = stream_rng(1, 0);
        let r = small_rotation(4, 0.01, &mut rng);
        assert!((r.transpose() * &r - DMatrix::<f64>::identity(4, 4)).amax() < 1e-14);
        assert!((r - DMatrix::<f64>::identity(4, 4)).norm() < 0.011);
    }
}
