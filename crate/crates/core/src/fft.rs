//! Multi-dimensional complex FFTs over row-major flat arrays.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// In-place unnormalized DFT along every axis of a row-major array.
pub fn fft_nd(data: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total, "buffer does not match shape");
    let mut planner = FftPlanner::new();
    let mut lines = vec![Complex64::new(0.0, 0.0); total];
    for axis in 0..shape.len() {
        let len = shape[axis];
        if len <= 1 {
            continue;
        }
        let fft = planner.plan_fft(len, direction);
        let stride: usize = shape[axis + 1..].iter().product();
        if stride == 1 {
            data.par_chunks_mut(len * 64).for_each(|chunk| fft.process(chunk));
            continue;
        }
        let outer = total / (len * stride);
        // gather each line contiguously, transform, scatter back
        for o in 0..outer {
            let base = o * len * stride;
            for j in 0..len {
                let src = &data[base + j * stride..base + (j + 1) * stride];
                for (i, v) in src.iter().enumerate() {
                    lines[(o * stride + i) * len + j] = *v;
                }
            }
        }
        lines.par_chunks_mut(len * 64).for_each(|chunk| fft.process(chunk));
        for o in 0..outer {
            let base = o * len * stride;
            for j in 0..len {
                let dst = &mut data[base + j * stride..base + (j + 1) * stride];
                for (i, v) in dst.iter_mut().enumerate() {
                    *v = lines[(o * stride + i) * len + j];
                }
            }
        }
    }
}

/// Forward DFT (no scaling).
pub fn forward(data: &mut [Complex64], shape: &[usize]) {
    fft_nd(data, shape, FftDirection::Forward);
}

/// Inverse DFT scaled by `1/len`, so `inverse ∘ forward` is the identity.
pub fn inverse(data: &mut [Complex64], shape: &[usize]) {
    fft_nd(data, shape, FftDirection::Inverse);
    let scale = 1.0 / data.len() as f64;
    data.par_iter_mut().for_each(|v| *v *= scale);
}

/// Physical frequencies `j / (N·spacing)` of a length-`N` DFT, in DFT order.
/// The Nyquist bin (even `N`) is reported as negative.
pub fn frequencies(len: usize, spacing: f64) -> Vec<f64> {
    let period = len as f64 * spacing;
    (0..len)
        .map(|j| {
            let signed = if 2 * j < len { j as isize } else { j as isize - len as isize };
            signed as f64 / period
        })
        .collect()
}
