//! Shared fixtures for the benchmarks.

use nirenberg_core::{AmbientPolynomial, HarmonicSpectrum};

/// The height-function curvature used throughout the benchmarks.
pub fn height_curvature() -> AmbientPolynomial {
    "x4 + 2".parse().expect("valid polynomial")
}

/// A smooth spectrum with geometrically decaying coefficients.
pub fn decaying_spectrum(l: usize) -> HarmonicSpectrum {
    let mut s = HarmonicSpectrum::zeros(l);
    for (i, c) in s.coeffs_mut().iter_mut().enumerate() {
        *c = 0.9f64.powf((i as f64).cbrt()) * if i % 2 == 0 { 1.0 } else { -0.5 };
    }
    s
}
