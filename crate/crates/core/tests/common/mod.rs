//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Simpson over `[a, b]` split at the given interior points.
pub fn simpson_split<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.windows(2).map(|w| simpson(f, w[0], w[1], tol)).sum()
}

/// Hat function with the given three breakpoints.
pub fn hat(xs: [f64; 3], y: f64) -> f64 {
    if y <= xs[0] || y >= xs[2] {
        0.0
    } else if y <= xs[1] {
        (y - xs[0]) / (xs[1] - xs[0])
    } else {
        (xs[2] - y) / (xs[2] - xs[1])
    }
}

/// Direct p.v. of `C int_(lo,hi) (u(x) - u(y)) |x - y|^{-1-2a} dy` for a hat `u`.
pub fn regional_pv_hat(a: f64, c: f64, lo: f64, hi: f64, xs: [f64; 3], x: f64) -> f64 {
    let p = -1.0 - 2.0 * a;
    let d = (x - lo).min(hi - x);
    let ux = hat(xs, x);
    let kinks_z: Vec<f64> = xs.iter().map(|k| (k - x).abs()).collect();
    let sym = |z: f64| {
        if z == 0.0 {
            0.0
        } else {
            (2.0 * ux - hat(xs, x + z) - hat(xs, x - z)) * z.powf(p)
        }
    };
    let tol = 1e-12;
    let mut total = simpson_split(&sym, 0.0, d, &kinks_z, tol);
    let one_sided = |y: f64| (ux - hat(xs, y)) * (x - y).abs().powf(p);
    // geometric breaks toward the inner end of the one-sided pieces
    let grade = |from: f64, to: f64| -> Vec<f64> {
        let mut b: Vec<f64> = xs.to_vec();
        let len = (to - from).abs();
        let mut g = d.max(1e-300);
        while g < len {
            b.push(if to > from { from + g } else { from - g });
            g *= 2.0;
        }
        b
    };
    total += simpson_split(&one_sided, x + d, hi, &grade(x + d, hi), tol);
    total += simpson_split(&one_sided, lo, x - d, &grade(x - d, lo), tol);
    c * total
}

/// `L^2` norm of a nodal P1 function on a uniform grid (exact).
pub fn p1_l2(h: f64, v: &[f64]) -> f64 {
    v.windows(2)
        .map(|w| h / 3.0 * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]))
        .sum::<f64>()
        .sqrt()
}

/// `<(-Delta)^t v, v>` on the Fourier side for a compactly supported P1 function,
/// using `v'' = sum_k J_k delta_{x_k}` so `|v^(xi)|^2 = |sum_k J_k e^{-i xi x_k}|^2 / xi^4`.
pub fn fourier_energy(t: f64, xs: &[f64], vs: &[f64]) -> f64 {
    let n = xs.len();
    let mut jumps = vec![0.0; n];
    for k in 0..n - 1 {
        let slope = (vs[k + 1] - vs[k]) / (xs[k + 1] - xs[k]);
        jumps[k] += slope;
        jumps[k + 1] -= slope;
    }
    let g = |xi: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for k in 0..n {
            re += jumps[k] * (xi * xs[k]).cos();
            im -= jumps[k] * (xi * xs[k]).sin();
        }
        xi.powf(2.0 * t - 4.0) * (re * re + im * im)
    };
    let top = 2.0e4;
    let steps = 400_000;
    // Simpson from a small cutoff; the integrand is O(xi^{2t}) near zero
    let lo = 1e-4;
    let d = (top - lo) / steps as f64;
    let mut s = g(lo) + g(top);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(lo + k as f64 * d);
    }
    let body = s * d / 3.0;
    // tail: cross terms average out, squares remain
    let sq: f64 = jumps.iter().map(|j| j * j).sum();
    let tail = sq * top.powf(2.0 * t - 3.0) / (3.0 - 2.0 * t);
    (body + tail) / std::f64::consts::PI
}
