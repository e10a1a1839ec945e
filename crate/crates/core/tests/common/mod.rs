//! Reference implementations shared by integration tests. Each one is a
//! direct transcription of its formula, independent of the library code.
#![allow(dead_code)]

use num_complex::Complex64;

pub const STEP: f64 = 1e-6;

/// Unnormalized 2-D DFT by four nested loops.
pub fn naive_dft(h: usize, w: usize, x: &[f64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let angle = -2.0
                        * std::f64::consts::PI
                        * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    acc += Complex64::from_polar(x[r * w + c], angle);
                }
            }
            out[u * w + v] = acc;
        }
    }
    out
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += STEP;
            lo[i] -= STEP;
            (f(&hi) - f(&lo)) / (2.0 * STEP)
        })
        .collect()
}

/// Margin loss written out term by term.
pub fn oracle_loss(z: &[f64], j: usize, m: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..z.len() {
        if i == j {
            continue;
        }
        let gamma = 1.0 - (z[j] - z[i]) / m;
        let hinge = (m - z[j] + z[i]).max(0.0);
        total += gamma * hinge - z[j];
    }
    total
}

pub fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn oracle_margin(z: &[f64]) -> f64 {
    let mut p = oracle_softmax(z);
    p.sort_by(|a, b| b.partial_cmp(a).unwrap());
    1.0 - (p[0] - p[1])
}
