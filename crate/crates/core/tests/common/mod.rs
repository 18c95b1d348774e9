//! Deterministic quadrature for `n = 2`, where `σ = (√(ad) + √(bc))²`.
#![allow(dead_code)]

use gauss_quad::GaussLegendre;

pub fn sigma_two(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let r = (a * d).sqrt() + (b * c).sqrt();
    r * r
}

/// `∫_lo^hi g` after the substitution `u = w²(3 − 2w)`, which flattens the
/// square-root behaviour of `σ` at both ends.
fn smooth(gl: &GaussLegendre, lo: f64, hi: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
    let h = hi - lo;
    gl.integrate(0.0, 1.0, |w| {
        let u = w * w * (3.0 - 2.0 * w);
        6.0 * w * (1.0 - w) * h * g(lo + h * u)
    })
}

/// `∫ σ^s` over `{a, b, c > 0, a + b + c < 1}` restricted to `a ∈ [a0, a1]`,
/// with `d = 1 − a − b − c`.
pub fn mass(s: f64, a0: f64, a1: f64, deg: usize) -> f64 {
    let gl = GaussLegendre::new(deg).unwrap();
    smooth(&gl, a0, a1, |a| {
        let ra = 1.0 - a;
        smooth(&gl, 0.0, ra, |b| {
            let rb = ra - b;
            smooth(&gl, 0.0, rb, |c| sigma_two(a, b, c, (rb - c).max(0.0)).powf(s))
        })
    })
}

/// `∫ σ^s dμ` for the uniform probability `μ` on the 2×2 simplex.
pub fn integral(s: f64, panels: usize, deg: usize) -> f64 {
    // the simplex {a + b + c < 1} has volume 1/6
    6.0 * (0..panels)
        .map(|k| mass(s, k as f64 / panels as f64, (k + 1) as f64 / panels as f64, deg))
        .sum::<f64>()
}

/// Probabilities of `x11` falling in each bin under `ν_s ∝ σ^s`.
pub fn x11_bin_probabilities(s: f64, edges: &[f64], deg: usize) -> Vec<f64> {
    let masses: Vec<f64> = edges.windows(2).map(|w| mass(s, w[0], w[1], deg)).collect();
    let total: f64 = masses.iter().sum();
    masses.iter().map(|m| m / total).collect()
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic `√n · D`.
pub fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let d = samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    d * n.sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic scaled by `√(nm/(n+m))`.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    d * (nf * mf / (nf + mf)).sqrt()
}

/// Asymptotic 1% critical value of the scaled Kolmogorov–Smirnov statistic.
pub const KS_CRITICAL_1PCT: f64 = 1.628;
