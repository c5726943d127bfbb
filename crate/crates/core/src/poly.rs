//! Piecewise-polynomial signal segments.
//!
//! Quantized-state solvers represent every continuous variable as a series of
//! low-order polynomials, each valid from its anchor time until replaced. A
//! state model of order `M` pairs with a quantized model of order `M - 1`.

use serde::{Deserialize, Serialize};

/// One polynomial piece: `p(t) = Σ c_i (t - anchor)^i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySegment {
    /// Anchor time in seconds at which the segment was formed.
    pub anchor: f64,
    /// Coefficients `c_0 .. c_M` in units of the modeled variable.
    pub coeffs: Vec<f64>,
}

impl PolySegment {
    pub fn constant(value: f64) -> Self {
        PolySegment { anchor: 0.0, coeffs: vec![value] }
    }

    pub fn new(anchor: f64, coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a segment needs at least c0");
        PolySegment { anchor, coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let dt = t - self.anchor;
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * dt + c;
        }
        acc
    }

    /// First derivative at `t`.
    pub fn eval_deriv(&self, t: f64) -> f64 {
        let dt = t - self.anchor;
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * dt + i as f64 * c;
        }
        acc
    }

    /// Re-expand around a new anchor without changing the polynomial.
    pub fn shifted(&self, new_anchor: f64) -> PolySegment {
        let h = new_anchor - self.anchor;
        let n = self.coeffs.len();
        let mut out = self.coeffs.clone();
        // Repeated synthetic division by (x - h): exact Taylor shift.
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let next = out[j + 1];
                out[j] += h * next;
            }
        }
        PolySegment { anchor: new_anchor, coeffs: out }
    }

    /// Coefficient-wise difference, both re-anchored at `anchor`.
    pub fn diff_at(&self, other: &PolySegment, anchor: f64) -> Vec<f64> {
        let a = self.shifted(anchor);
        let b = other.shifted(anchor);
        let n = a.coeffs.len().max(b.coeffs.len());
        (0..n)
            .map(|i| {
                a.coeffs.get(i).copied().unwrap_or(0.0) - b.coeffs.get(i).copied().unwrap_or(0.0)
            })
            .collect()
    }
}

/// Smallest `tau > 0` with `|d(tau)| = band`, where `d` has coefficients
/// `diff` (anchored at `tau = 0`). Returns `f64::INFINITY` when the band is
/// never reached.
///
/// Closed forms cover orders up to two; a guarded bisection fallback handles
/// near-degenerate leading coefficients.
pub fn first_band_crossing(diff: &[f64], band: f64) -> f64 {
    debug_assert!(band > 0.0);
    let mut d = diff.to_vec();
    while d.len() > 1 && d.last() == Some(&0.0) {
        d.pop();
    }
    // Treat a vanishingly small leading coefficient as absent: the closed
    // form would otherwise produce a root at ~1/eps with no significance.
    let scale = d.iter().fold(band, |m, c| m.max(c.abs()));
    while d.len() > 1 && d.last().unwrap().abs() < 1e-14 * scale {
        d.pop();
    }

    let root = match d.len() {
        1 => {
            if d[0].abs() >= band {
                0.0
            } else {
                f64::INFINITY
            }
        }
        2 => linear_crossing(d[0], d[1], band),
        3 => quadratic_crossing(d[0], d[1], d[2], band),
        _ => bisect_crossing(&d, band),
    };

    if root.is_finite() {
        // Closed forms can lose accuracy when coefficients span many orders
        // of magnitude; verify and fall back to bisection if needed.
        let v = eval_poly(&d, root).abs();
        if (v - band).abs() > 1e-9 * band.max(v) {
            return bisect_crossing(&d, band);
        }
    }
    root
}

fn eval_poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn linear_crossing(c0: f64, c1: f64, band: f64) -> f64 {
    if c1 == 0.0 {
        return if c0.abs() >= band { 0.0 } else { f64::INFINITY };
    }
    let mut best = f64::INFINITY;
    for target in [band, -band] {
        let tau = (target - c0) / c1;
        if tau > 0.0 && tau < best {
            best = tau;
        }
    }
    best
}

fn quadratic_crossing(c0: f64, c1: f64, c2: f64, band: f64) -> f64 {
    let mut best = f64::INFINITY;
    for target in [band, -band] {
        // c2 tau^2 + c1 tau + (c0 - target) = 0, solved in the numerically
        // stable form q = -(b + sign(b) sqrt(disc)) / 2.
        let a = c2;
        let b = c1;
        let c = c0 - target;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        let roots = if q == 0.0 { [0.0, 0.0] } else { [q / a, c / q] };
        for r in roots {
            if r > 0.0 && r < best {
                best = r;
            }
        }
    }
    best
}

/// Expanding scan followed by bisection on `|d(tau)| - band`.
fn bisect_crossing(d: &[f64], band: f64) -> f64 {
    let mut lo = 0.0_f64;
    let mut hi = 1e-9_f64;
    let mut found = false;
    for _ in 0..220 {
        if eval_poly(d, hi).abs() >= band {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return f64::INFINITY;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval_poly(d, mid).abs() >= band {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    hi
}
