//! Circular convolution and correlation.
//!
//! `circ_conv` is the binding operator: `c_i = Σ_j a_j b_{(i-j) mod d}`.
//! Two routes compute it, a direct O(d²) double loop and an FFT product;
//! the public entry point picks the FFT route from [`FFT_THRESHOLD`] up.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Dimension from which `circ_conv` switches to the FFT route.
pub const FFT_THRESHOLD: usize = 64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Domain("empty vectors".into()));
    }
    Ok(())
}

fn spectrum(a: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = a.iter().map(|x| Complex::new(*x, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(a.len()).process(&mut buf));
    buf
}

fn inverse(mut spectrum: Vec<Complex<f64>>) -> Vec<f64> {
    let n = spectrum.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut spectrum));
    let scale = 1.0 / n as f64;
    spectrum.into_iter().map(|c| c.re * scale).collect()
}

/// Direct double-loop circular convolution.
pub fn circ_conv_direct(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    let d = a.len();
    Ok((0..d)
        .map(|i| {
            (0..d)
                .map(|j| a[j] * b[(i + d - j) % d])
                .sum::<f64>()
        })
        .collect())
}

/// Circular convolution through the DFT convolution theorem.
pub fn circ_conv_fft(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    let fa = spectrum(a);
    let fb = spectrum(b);
    Ok(inverse(fa.iter().zip(&fb).map(|(x, y)| x * y).collect()))
}

pub fn circ_conv(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() >= FFT_THRESHOLD {
        circ_conv_fft(a, b)
    } else {
        circ_conv_direct(a, b)
    }
}

/// `r ⊛ (s ⊛ o)`. On the FFT route the `s`/`o` spectra are multiplied first,
/// which makes the result bit-identical under swapping `s` and `o`.
pub fn circ_conv3(s: &[f64], r: &[f64], o: &[f64]) -> Result<Vec<f64>> {
    check_dims(s, r)?;
    check_dims(s, o)?;
    if s.len() >= FFT_THRESHOLD {
        let fs = spectrum(s);
        let fr = spectrum(r);
        let fo = spectrum(o);
        Ok(inverse(
            fs.iter()
                .zip(&fo)
                .zip(&fr)
                .map(|((x, y), z)| z * (x * y))
                .collect(),
        ))
    } else {
        circ_conv_direct(r, &circ_conv_direct(s, o)?)
    }
}

/// `involution(a)_i = a_{(-i) mod d}`, the approximate inverse under binding.
pub fn involution(a: &[f64]) -> Vec<f64> {
    let d = a.len();
    (0..d).map(|i| a[(d - i) % d]).collect()
}

/// Circular correlation `involution(a) ⊛ b`; approximately unbinds `a`
/// from `a ⊛ b`, and is the adjoint of binding:
/// `∂(u · (a ⊛ b)) / ∂a = circ_corr(b, u)`.
pub fn circ_corr(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    circ_conv(&involution(a), b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cosine;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn random(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, d as u64);
        let n = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
        (0..d).map(|_| n.sample(&mut rng)).collect()
    }

    #[test]
    fn two_dim_example() {
        // c0 = 1*3 + 2*4, c1 = 1*4 + 2*3
        assert_eq!(circ_conv_direct(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![11.0, 10.0]);
        let f = circ_conv_fft(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert!((f[0] - 11.0).abs() < 1e-12 && (f[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_involution() {
        let a = random(16, 1);
        let mut e0 = vec![0.0; 16];
        e0[0] = 1.0;
        assert_eq!(circ_conv(&a, &e0).unwrap(), a);
        assert_eq!(involution(&[1.0, 2.0, 3.0]), vec![1.0, 3.0, 2.0]);
        let b = random(16, 2);
        let c = circ_corr(&e0, &b).unwrap();
        assert!(c.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn mismatch_is_domain_error() {
        assert!(matches!(circ_conv(&[1.0], &[1.0, 2.0]), Err(Error::Domain(_))));
        assert!(matches!(circ_corr(&[1.0], &[1.0, 2.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn triple_fft_route_is_bitwise_symmetric() {
        let (s, r, o) = (random(128, 1), random(128, 2), random(128, 3));
        assert_eq!(circ_conv3(&s, &r, &o).unwrap(), circ_conv3(&o, &r, &s).unwrap());
    }

    #[test]
    fn unbinding_recovers_filler() {
        let a = random(512, 10);
        let b = random(512, 11);
        let rec = circ_corr(&a, &circ_conv(&a, &b).unwrap()).unwrap();
        assert!(cosine(&rec, &b) > 0.5);
    }

    proptest! {
        #[test]
        fn fft_matches_direct(d in 1usize..200, seed in 0u64..1000) {
            let a = random(d, seed);
            let b = random(d, seed + 1);
            let x = circ_conv_direct(&a, &b).unwrap();
            let y = circ_conv_fft(&a, &b).unwrap();
            let scale = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn commutative_associative_bilinear(d in 1usize..40, seed in 0u64..1000, k in -3.0f64..3.0) {
            let a = random(d, seed);
            let b = random(d, seed + 1);
            let c = random(d, seed + 2);
            let ab = circ_conv_direct(&a, &b).unwrap();
            let ba = circ_conv_direct(&b, &a).unwrap();
            let ab_c = circ_conv_direct(&ab, &c).unwrap();
            let a_bc = circ_conv_direct(&a, &circ_conv_direct(&b, &c).unwrap()).unwrap();
            let ka: Vec<f64> = a.iter().map(|v| k * v).collect();
            let ka_b = circ_conv_direct(&ka, &b).unwrap();
            for i in 0..d {
                prop_assert!((ab[i] - ba[i]).abs() < 1e-12);
                prop_assert!((ab_c[i] - a_bc[i]).abs() < 1e-12);
                prop_assert!((ka_b[i] - k * ab[i]).abs() < 1e-12);
            }
        }
    }
}
