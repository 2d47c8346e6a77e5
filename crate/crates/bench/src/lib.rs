//! Fixtures shared by the benchmarks.

use kplane_core::fields::{sample_to_grid, AnalyticForm, FormField, GridSpec};
use kplane_core::grassmann::{sample_haar, PlaneSet};
use kplane_core::xray::PerpQuadrature;

pub struct Fixture {
    pub alpha: AnalyticForm,
    pub sampled: FormField,
    pub planes: PlaneSet,
    pub grid: GridSpec,
    pub k_grid: GridSpec,
    pub quad: PerpQuadrature,
}

/// Gaussian 1-form in R³ with `planes` Haar 2-planes on an `points`-per-axis grid.
pub fn vector_fixture(points: usize, planes: usize) -> Fixture {
    let alpha = AnalyticForm::gaussian(3, &[0], 1.0, 1.0).expect("valid form");
    let grid = GridSpec::new(3, 2.0, points).expect("valid grid");
    Fixture {
        sampled: sample_to_grid(&alpha, grid).expect("sampling"),
        alpha,
        planes: sample_haar(3, 2, planes, 1).expect("planes"),
        grid,
        k_grid: GridSpec::new(2, 2.0, points).expect("valid grid"),
        quad: PerpQuadrature::new(33, 2.0).expect("valid quadrature"),
    }
}
