//! Exactness and adjointness suites shared by `selftest` and the test targets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exterior::{
    binomial, hyperplane_projections, induced_map, induced_map_by_wedge, symbol_eigenvalues, symbol_h,
};
use crate::fields::{sample_to_grid, AnalyticForm, FormTerm, GridSpec, Monomial};
use crate::grassmann::{haar_plane, sample_haar};
use crate::random::stream_rng;
use crate::xray::{adjoint, forward, PerpQuadrature, Sinogram};

/// Outcome of a family of exact identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub checks: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

struct Tally {
    checks: usize,
    max_error: f64,
}

impl Tally {
    fn record(&mut self, err: f64) {
        self.checks += 1;
        // NaN must fail the suite
        if err.is_nan() {
            self.max_error = f64::INFINITY;
        } else {
            self.max_error = self.max_error.max(err);
        }
    }

    fn finish(self, name: &str, tolerance: f64) -> SuiteResult {
        SuiteResult {
            name: name.to_string(),
            checks: self.checks,
            max_error: self.max_error,
            tolerance,
            passed: self.max_error <= tolerance,
        }
    }
}

fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Exterior-algebra identities for every `n ≤ max_dim`, all degrees and all
/// admissible `(k, m)`, with `trials` random instances each:
///
/// * `Λᵐ(AB) = Λᵐ(A)Λᵐ(B)`, `Λᵐ(I) = I`, closed form = wedge route;
/// * Π, Ψ idempotent, complementary, mutually orthogonal, symmetric;
/// * spectrum of h is `{c/(k−m), c/(n−m)}` with multiplicities
///   `C(n−1, m)` and `C(n−1, m−1)`;
/// * `⟨Λᵐ(F)ᵀv, w⟩ = ⟨v, Λᵐ(F)w⟩` for orthonormal frames F.
pub fn exterior_suite(max_dim: usize, trials: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    const TOL: f64 = 1e-10;
    let mut rng = stream_rng(seed, 10);
    let mut functor = Tally { checks: 0, max_error: 0.0 };
    let mut proj = Tally { checks: 0, max_error: 0.0 };
    let mut spectrum = Tally { checks: 0, max_error: 0.0 };
    let mut restriction = Tally { checks: 0, max_error: 0.0 };

    for n in 1..=max_dim {
        for m in 0..=n {
            let size = binomial(n, m);
            let eye = induced_map(&DMatrix::identity(n, n), m)?.into_matrix();
            functor.record((eye - DMatrix::<f64>::identity(size, size)).amax());
            for _ in 0..trials {
                let a = gaussian_matrix(n, n, &mut rng);
                let b = gaussian_matrix(n, n, &mut rng);
                let lab = induced_map(&(&a * &b), m)?.into_matrix();
                let la = induced_map(&a, m)?.into_matrix();
                let lb = induced_map(&b, m)?.into_matrix();
                let scale = 1.0 + la.amax() * lb.amax();
                functor.record((&lab - &la * &lb).amax() / scale);
                functor.record((induced_map_by_wedge(&a, m)?.into_matrix() - &la).amax() / (1.0 + la.amax()));

                let xi = gaussian_vector(n, &mut rng);
                let (pi, psi) = hyperplane_projections(&xi, m)?;
                let (pi, psi) = (pi.into_matrix(), psi.into_matrix());
                proj.record((&pi * &pi - &pi).amax());
                proj.record((&psi * &psi - &psi).amax());
                proj.record((&pi * &psi).amax());
                proj.record((&pi + &psi - DMatrix::<f64>::identity(size, size)).amax());
                proj.record((&pi - pi.transpose()).amax());
                // Λᵐ(H_ξ) has dimension C(n−1, m)
                proj.record((pi.trace() - binomial(n - 1, m) as f64).abs());

                for k in (m + 1)..n {
                    let (on, off) = symbol_eigenvalues(n, k, m)?;
                    let h = symbol_h(&xi, n, k, m)?.into_matrix();
                    let mut eig = SymmetricEigen::new(h).eigenvalues.as_slice().to_vec();
                    eig.sort_by(|x, y| x.total_cmp(y));
                    let n_off = if m == 0 { 0 } else { binomial(n - 1, m - 1) };
                    // on > off since k − m < n − m
                    let expected: Vec<f64> =
                        std::iter::repeat_n(off, n_off).chain(std::iter::repeat_n(on, size - n_off)).collect();
                    let err = eig.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    spectrum.record(err / on);
                }

                for k in m.max(1)..n {
                    let plane = haar_plane(n, k, &mut rng)?;
                    let incl = induced_map(plane.frame(), m)?.into_matrix();
                    let v = DVector::from_vec(gaussian_vector(size, &mut rng));
                    let w = DVector::from_vec(gaussian_vector(binomial(k, m), &mut rng));
                    let lhs = (incl.transpose() * &v).dot(&w);
                    let rhs = v.dot(&(&incl * &w));
                    restriction.record((lhs - rhs).abs() / (1.0 + v.norm() * w.norm()));
                    // the inclusion is an isometry: Λᵐ(F)ᵀΛᵐ(F) = I
                    let gram = incl.transpose() * &incl;
                    restriction.record((gram - DMatrix::<f64>::identity(binomial(k, m), binomial(k, m))).amax());
                }
            }
        }
    }
    Ok(vec![
        functor.finish("functoriality", TOL),
        proj.finish("projections", TOL),
        spectrum.finish("symbol_spectrum", TOL),
        restriction.finish("restriction_adjointness", TOL),
    ])
}

/// Discretization used by one adjointness case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointCase {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub planes: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub plane_points_per_axis: usize,
    pub perp_points: usize,
}

impl AdjointCase {
    /// Small default resolutions for `(n, k, m)`.
    pub fn standard(n: usize, k: usize, m: usize) -> Self {
        let (points, plane_points, perp) = match n {
            2 => (64, 64, 129),
            3 => (32, 48, 65),
            _ => (16, 24, 25),
        };
        Self { n, k, m, planes: 12, half_width: 3.0, points_per_axis: points, plane_points_per_axis: plane_points, perp_points: perp }
    }
}

/// One `(α, β)` trial of the dot-product test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointTrial {
    pub forward_side: f64,
    pub adjoint_side: f64,
    pub relative_gap: f64,
}

/// A random Schwartz m-form: a Gaussian of random width with random
/// coefficients on every basis component and a random linear factor.
pub fn random_form<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<AnalyticForm> {
    let width = 0.8 + 0.8 * rng.gen::<f64>();
    let terms = crate::exterior::raw_basis(n, m)
        .into_iter()
        .map(|index| {
            let mut poly = vec![Monomial { coeff: rng.sample(StandardNormal), powers: vec![0; n] }];
            let axis = rng.gen_range(0..n);
            let mut powers = vec![0; n];
            powers[axis] = 1;
            poly.push(Monomial { coeff: 0.5 * rng.sample::<f64, _>(StandardNormal), powers });
            FormTerm { index, poly, width }
        })
        .collect();
    AnalyticForm::new(n, m, terms)
}

/// `|⟨ℛα, β⟩ − ⟨α, ℛ*β⟩| / (‖ℛα‖·‖β‖)` for `trials` random pairs, with both
/// sides discretized independently (P⊥ quadrature vs. interpolated
/// backprojection).
pub fn adjointness_trials(case: &AdjointCase, trials: usize, seed: u64) -> Result<Vec<AdjointTrial>> {
    let (n, k, m) = (case.n, case.k, case.m);
    crate::exterior::check_degrees(n, k, m)?;
    let grid = GridSpec::new(n, case.half_width, case.points_per_axis)?;
    let k_grid = GridSpec::new(k, case.half_width, case.plane_points_per_axis)?;
    let quad = PerpQuadrature::new(case.perp_points, case.half_width)?;
    let planes = sample_haar(n, k, case.planes, seed)?;
    let mut rng = stream_rng(seed, 11);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let alpha = random_form(n, m, &mut rng)?;
        let bumps: Vec<AnalyticForm> =
            (0..planes.len()).map(|_| random_form(k, m, &mut rng)).collect::<Result<_>>()?;
        let beta = Sinogram::from_fn(planes.clone(), m, k_grid, |idx, _, coords, value| {
            use crate::fields::FormSource;
            bumps[idx].eval_into(coords, value)
        })?;
        let r_alpha = forward(&alpha, &planes, k_grid, &quad)?;
        let lhs = r_alpha.inner(&beta)?;
        let back = adjoint(&beta, grid)?;
        let rhs = sample_to_grid(&alpha, grid)?.inner(&back)?;
        let scale = r_alpha.l2_norm() * beta.l2_norm();
        out.push(AdjointTrial { forward_side: lhs, adjoint_side: rhs, relative_gap: (lhs - rhs).abs() / scale });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exterior_suite_passes_in_low_dimension() {
        for r in exterior_suite(3, 2, 1).unwrap() {
            assert!(r.passed, "{r:?}");
            assert!(r.checks > 0);
        }
    }

    #[test]
    fn adjointness_of_the_line_transform() {
        let case = AdjointCase { planes: 6, ..AdjointCase::standard(2, 1, 0) };
        for t in adjointness_trials(&case, 2, 3).unwrap() {
            assert!(t.relative_gap < 0.02, "{t:?}");
        }
    }
}
