//! Shared fixtures for the integration suites: a deterministic synthetic
//! digit-image generator used by the image-scale clustering tests.
//!
//! Real handwritten-digit corpora cannot be fetched here, so the image tests
//! run on a stand-in with the same shape and the same clustering character:
//! five 28×28 stroke prototypes (two of them heavily overlapping), each
//! sample drawn with a continuous sub-pixel horizontal shift, per-sample
//! style fields, and pixel noise, then quantized to bytes exactly like a
//! stored image file. The continuous shift keeps a band of genuinely
//! ambiguous points alive near every decision boundary, which is what makes
//! partial E-step behavior interesting to observe.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
/// Class labels, mirroring a five-digit subset of a handwriting corpus.
pub const CLASSES: [u8; 5] = [1, 2, 4, 5, 6];

/// Stroke prototype for one class, as a 0/1 mask.
fn prototype(digit: u8) -> Array2<f64> {
    let mut img = Array2::<f64>::zeros((SIDE, SIDE));
    match digit {
        // Vertical bar.
        1 => {
            for r in 4..24 {
                for c in 12..16 {
                    img[[r, c]] = 1.0;
                }
            }
        }
        // Horizontal bar.
        2 => {
            for r in 12..16 {
                for c in 4..24 {
                    img[[r, c]] = 1.0;
                }
            }
        }
        // Diagonal stroke.
        4 => {
            for r in 4usize..24 {
                let lo = r.saturating_sub(2);
                for c in lo..(r + 2).min(SIDE) {
                    img[[r, c]] = 1.0;
                }
            }
        }
        // Vertical bar offset by three columns: deliberately confusable
        // with class 1.
        5 => {
            for r in 4..24 {
                for c in 15..19 {
                    img[[r, c]] = 1.0;
                }
            }
        }
        // Ring.
        6 => {
            for r in 0..SIDE {
                for c in 0..SIDE {
                    let dr = r as isize - 14;
                    let dc = c as isize - 14;
                    let d2 = dr * dr + dc * dc;
                    if d2 > 25 && d2 < 81 {
                        img[[r, c]] = 1.0;
                    }
                }
            }
        }
        other => panic!("no prototype for class {other}"),
    }
    img
}

/// Circular shift along columns: out[r][c] = img[r][(c − s) mod SIDE].
fn roll_cols(img: &Array2<f64>, s: isize) -> Array2<f64> {
    let side = SIDE as isize;
    Array2::from_shape_fn((SIDE, SIDE), |(r, c)| {
        let src = (c as isize - s).rem_euclid(side) as usize;
        img[[r, src]]
    })
}

/// One 5-point box-blur pass with circular wraparound.
fn blur5(img: &Array2<f64>) -> Array2<f64> {
    let side = SIDE as isize;
    Array2::from_shape_fn((SIDE, SIDE), |(r, c)| {
        let at = |dr: isize, dc: isize| {
            let rr = (r as isize + dr).rem_euclid(side) as usize;
            let cc = (c as isize + dc).rem_euclid(side) as usize;
            img[[rr, cc]]
        };
        (at(0, 0) + at(-1, 0) + at(1, 0) + at(0, -1) + at(0, 1)) / 5.0
    })
}

/// A unit-variance smooth random field: white noise, blurred twice,
/// rescaled to standard deviation 1.
fn smooth_field(rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut f = Array2::from_shape_fn((SIDE, SIDE), |_| {
        let z: f64 = rng.sample(StandardNormal);
        z
    });
    f = blur5(&blur5(&f));
    let mean = f.sum() / PIXELS as f64;
    let var = f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / PIXELS as f64;
    &f / var.sqrt()
}

/// Generate `n_per_class` samples of each class, in class order, quantized
/// to byte precision and scaled to [0,1] exactly as an image file loader
/// would produce them. Returns the N×784 matrix and the labels.
///
/// Per sample: a continuous horizontal shift dx ~ U(−2.5, 2.5) applied by
/// linear interpolation between the two neighboring integer shifts, three
/// per-class style fields with N(0, 25²) coefficients, and N(0, 25²)
/// per-pixel noise, on a stroke amplitude of 160.
pub fn surrogate_digits(n_per_class: usize, seed: u64) -> (Array2<f64>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amplitude = 160.0;
    let max_shift = 2.5;
    let noise = 25.0;

    // Per-class style fields, generated up front in class order.
    let styles: Vec<[Array2<f64>; 3]> = CLASSES
        .iter()
        .map(|_| {
            [
                smooth_field(&mut rng),
                smooth_field(&mut rng),
                smooth_field(&mut rng),
            ]
        })
        .collect();

    let n = n_per_class * CLASSES.len();
    let mut points = Array2::<f64>::zeros((n, PIXELS));
    let mut labels = Vec::with_capacity(n);

    let mut row = 0usize;
    for (ci, &digit) in CLASSES.iter().enumerate() {
        let base = prototype(digit);
        for _ in 0..n_per_class {
            let dx: f64 = rng.random_range(-max_shift..max_shift);
            let lo = dx.floor();
            let frac = dx - lo;
            let shifted = {
                let a = roll_cols(&base, lo as isize);
                let b = roll_cols(&base, lo as isize + 1);
                a * (1.0 - frac) + b * frac
            };
            let coefs: [f64; 3] = core::array::from_fn(|_| {
                let z: f64 = rng.sample(StandardNormal);
                noise * z
            });
            for r in 0..SIDE {
                for c in 0..SIDE {
                    let z: f64 = rng.sample(StandardNormal);
                    let mut v = amplitude * shifted[[r, c]] + noise * z;
                    for (coef, field) in coefs.iter().zip(styles[ci].iter()) {
                        v += coef * field[[r, c]];
                    }
                    let byte = v.clamp(0.0, 255.0).round();
                    points[[row, r * SIDE + c]] = byte / 255.0;
                }
            }
            labels.push(digit as i64);
            row += 1;
        }
    }
    (points, labels)
}
