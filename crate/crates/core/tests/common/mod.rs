//! Reference computations used by the integration tests. None of these call
//! into the library's numeric code.

#![allow(dead_code)]

use std::io::Write;
use std::path::PathBuf;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

/// Prints one PASS/FAIL line straight to stdout, bypassing capture, then
/// fails the test if `ok` is false.
pub fn report(id: u32, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance {id:>2} {name}: {verdict} ({detail})");
    let _ = out.flush();
    assert!(ok, "criterion {id} {name} failed: {detail}");
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `E[g(X)]` for `X = clamp(N(mean, sd²), lo, hi)`: point masses at the
/// edges plus the interior integral.
pub fn clipped_normal_expectation(g: impl Fn(f64) -> f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let p_lo = normal_cdf((lo - mean) / sd);
    let p_hi = 1.0 - normal_cdf((hi - mean) / sd);
    let interior = simpson(|x| g(x) * normal_pdf((x - mean) / sd) / sd, lo, hi, 20_000);
    p_lo * g(lo) + interior + p_hi * g(hi)
}

pub fn clipped_normal_variance(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let m1 = clipped_normal_expectation(|x| x, mean, sd, lo, hi);
    let m2 = clipped_normal_expectation(|x| x * x, mean, sd, lo, hi);
    m2 - m1 * m1
}

/// Expected per-query profit of an inference node whose consensus score is
/// `clamp(N(e, sd²), lo, hi)`, paid `bounty · exp(-α (hi - s))`.
pub fn expected_profit(e: f64, sd: f64, cost: f64, alpha: f64, bounty: f64, lo: f64, hi: f64) -> f64 {
    let chi = if sd == 0.0 {
        (-alpha * (hi - e.clamp(lo, hi))).exp()
    } else {
        clipped_normal_expectation(|s| (-alpha * (hi - s)).exp(), e, sd, lo, hi)
    };
    bounty * chi - cost
}

/// Pairwise downgrade threshold, computed directly from the (e, c) pairs.
pub fn alpha_threshold(models: &[(f64, f64)]) -> f64 {
    let mut theta: f64 = 0.0;
    for (i, &(ej, cj)) in models.iter().enumerate() {
        for &(el, cl) in &models[i + 1..] {
            let (hi, lo) = if cj >= cl {
                ((ej, cj), (el, cl))
            } else {
                ((el, cl), (ej, cj))
            };
            if hi.1 > lo.1 && hi.0 > lo.0 {
                theta = theta.max((hi.0 - lo.0).ln() / (hi.1 - lo.1));
            }
        }
    }
    theta
}
