//! Adaptive and composite Simpson quadrature for scalar- and vector-valued
//! integrands.

use crate::error::{QthermError, Result};
use crate::linalg::C64;

/// Settings for adaptive Simpson integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    /// Absolute error target for the whole interval.
    pub tol: f64,
    /// Maximum number of subintervals ever created.
    pub max_intervals: usize,
    /// Minimum recursion depth before the error test may accept.
    pub min_depth: u32,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            tol: 1e-8,
            max_intervals: 1 << 20,
            min_depth: 4,
        }
    }
}

impl QuadSpec {
    pub fn with_tol(tol: f64) -> Self {
        QuadSpec {
            tol,
            ..Default::default()
        }
    }
}

fn axpy(acc: &mut [C64], a: f64, x: &[C64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += *v * a;
    }
}

fn simpson(h: f64, fa: &[C64], fm: &[C64], fb: &[C64]) -> Vec<C64> {
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((a, m), b)| (a + m * 4.0 + b) * (h / 6.0))
        .collect()
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

struct Frame {
    a: f64,
    b: f64,
    fa: Vec<C64>,
    fm: Vec<C64>,
    fb: Vec<C64>,
    whole: Vec<C64>,
    tol: f64,
    depth: u32,
}

/// Adaptive Simpson over `[a, b]` for a vector-valued integrand; the error
/// criterion uses the largest component deviation. The Richardson-corrected
/// estimate `S₂ + (S₂ − S₁)/15` is accumulated.
pub fn adaptive_simpson_vec<F>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<Vec<C64>>
where
    F: Fn(f64) -> Vec<C64>,
{
    let fa = f(a);
    let n = fa.len();
    let mut total = vec![C64::new(0.0, 0.0); n];
    if a == b {
        return Ok(total);
    }
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(b - a, &fa, &fm, &fb);
    let mut stack = vec![Frame {
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        tol: spec.tol,
        depth: 0,
    }];
    let mut intervals = 1usize;
    while let Some(fr) = stack.pop() {
        let m = 0.5 * (fr.a + fr.b);
        let lm = 0.5 * (fr.a + m);
        let rm = 0.5 * (m + fr.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(m - fr.a, &fr.fa, &flm, &fr.fm);
        let right = simpson(fr.b - m, &fr.fm, &frm, &fr.fb);
        let two: Vec<C64> = left.iter().zip(&right).map(|(l, r)| l + r).collect();
        let err = max_diff(&two, &fr.whole);
        if fr.depth >= spec.min_depth && (err <= 15.0 * fr.tol || (fr.b - fr.a).abs() < 1e-12) {
            axpy(&mut total, 1.0, &two);
            let corr: Vec<C64> = two.iter().zip(&fr.whole).map(|(t, w)| t - w).collect();
            axpy(&mut total, 1.0 / 15.0, &corr);
            continue;
        }
        intervals += 1;
        if intervals > spec.max_intervals {
            return Err(QthermError::QuadratureFailure {
                budget: spec.max_intervals,
            });
        }
        stack.push(Frame {
            a: fr.a,
            b: m,
            fa: fr.fa,
            fm: flm,
            fb: fr.fm.clone(),
            whole: left,
            tol: 0.5 * fr.tol,
            depth: fr.depth + 1,
        });
        stack.push(Frame {
            a: m,
            b: fr.b,
            fa: fr.fm,
            fm: frm,
            fb: fr.fb,
            whole: right,
            tol: 0.5 * fr.tol,
            depth: fr.depth + 1,
        });
    }
    Ok(total)
}

/// Scalar complex adaptive Simpson.
pub fn adaptive_simpson_c<F>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<C64>
where
    F: Fn(f64) -> C64,
{
    Ok(adaptive_simpson_vec(|x| vec![f(x)], a, b, spec)?[0])
}

/// Scalar real adaptive Simpson.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    Ok(adaptive_simpson_c(|x| C64::new(f(x), 0.0), a, b, spec)?.re)
}

/// Composite Simpson with `n` (even) panels; the fixed-step reference used
/// for order checks.
pub fn composite_simpson<F>(f: F, a: f64, b: f64, n: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    assert!(n >= 2 && n % 2 == 0, "composite Simpson needs an even panel count");
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
