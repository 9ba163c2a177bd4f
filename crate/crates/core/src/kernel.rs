//! Kernel-level quantities on the line: the normalisation constant of the
//! fractional Laplacian, the tail potential of the regional operator, the
//! exterior mass function, and the closed-form checks built on them.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive, adaptive_to_infinity, Tolerance};

/// An order parameter `a` in the open interval `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FracExponent(f64);

impl FracExponent {
    pub fn new(a: f64) -> Result<Self> {
        if a > 0.0 && a < 1.0 {
            Ok(FracExponent(a))
        } else {
            Err(Error::ExponentOutOfRange(a))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// The interval `omega = (omega_lo, omega_hi)` and the computational box
/// `[-trunc_radius, trunc_radius]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainGeometry {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub trunc_radius: f64,
}

impl DomainGeometry {
    pub fn new(omega_lo: f64, omega_hi: f64, trunc_radius: f64) -> Result<Self> {
        if !(omega_lo < omega_hi) {
            return Err(Error::Geometry(format!(
                "empty domain ({omega_lo}, {omega_hi})"
            )));
        }
        if !(trunc_radius > omega_lo.abs().max(omega_hi.abs())) {
            return Err(Error::Geometry(format!(
                "truncation radius {trunc_radius} does not enclose ({omega_lo}, {omega_hi})"
            )));
        }
        Ok(DomainGeometry {
            omega_lo,
            omega_hi,
            trunc_radius,
        })
    }

    pub fn length(&self) -> f64 {
        self.omega_hi - self.omega_lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.omega_lo && x < self.omega_hi
    }

    /// Distance to the complement of the open interval (0 outside).
    pub fn dist_to_complement(&self, x: f64) -> f64 {
        if self.contains(x) {
            (x - self.omega_lo).min(self.omega_hi - x)
        } else {
            0.0
        }
    }

    /// Distance to the closed interval (0 inside).
    pub fn dist_to_closure(&self, x: f64) -> f64 {
        if x < self.omega_lo {
            self.omega_lo - x
        } else if x > self.omega_hi {
            x - self.omega_hi
        } else {
            0.0
        }
    }
}

/// The positive constant `C_{1,a}` for which
/// `C p.v. \int (u(x) - u(y)) |x - y|^{-1-2a} dy` has Fourier symbol `|xi|^{2a}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstant {
    pub a: FracExponent,
    pub value: f64,
}

pub fn frac_constant(a: FracExponent) -> KernelConstant {
    let a_val = a.value();
    let value = 4f64.powf(a_val) * a_val * gamma(0.5 + a_val) / (PI.sqrt() * gamma(1.0 - a_val));
    KernelConstant { a, value }
}

/// `\int_lo^hi |x - y|^{-1-2a} dy` for `x` outside `[lo, hi]`.
pub(crate) fn kernel_mass_outside(a: f64, lo: f64, hi: f64, x: f64) -> f64 {
    let (near, far) = if x > hi {
        (x - hi, x - lo)
    } else {
        (lo - x, hi - x)
    };
    (near.powf(-2.0 * a) - far.powf(-2.0 * a)) / (2.0 * a)
}

/// `\int_{R \ (lo, hi)} |x - y|^{-1-2a} dy` for `x` inside `(lo, hi)`.
pub(crate) fn kernel_mass_complement(a: f64, lo: f64, hi: f64, x: f64) -> f64 {
    ((hi - x).powf(-2.0 * a) + (x - lo).powf(-2.0 * a)) / (2.0 * a)
}

/// Tail potential `phi_a(x) = C_{1,a} \int_{R \ Omega} |x - y|^{-1-2a} dy`.
pub fn tail_potential(a: FracExponent, geom: &DomainGeometry, x: f64) -> Result<f64> {
    if !geom.contains(x) {
        return Err(Error::SingularInput {
            x,
            reason: "tail potential is defined strictly inside the domain",
        });
    }
    let c = frac_constant(a).value;
    Ok(c * kernel_mass_complement(a.value(), geom.omega_lo, geom.omega_hi, x))
}

/// Exterior mass `m(x) = C_{1,t} \int_Omega |x - y|^{-1-2t} dy` for `x` outside the closed domain.
pub fn m_function(t: FracExponent, geom: &DomainGeometry, x: f64) -> Result<f64> {
    if geom.dist_to_closure(x) <= 0.0 {
        return Err(Error::SingularInput {
            x,
            reason: "m is defined on the open exterior only",
        });
    }
    let c = frac_constant(t).value;
    Ok(c * kernel_mass_outside(t.value(), geom.omega_lo, geom.omega_hi, x))
}

/// `(-Delta)^a u(x) = C \int_0^\infty D(z) z^{-1-2a} dz` where `D(z) = 2u(x) - u(x+z) - u(x-z)`
/// is supplied by the caller (so it can be evaluated without cancellation).
pub fn pv_second_difference<D: FnMut(f64) -> f64>(
    second_difference: D,
    a: FracExponent,
    constant: f64,
    z_breakpoints: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    let mut d = second_difference;
    let p = -1.0 - 2.0 * a.value();
    let split = 1.0;
    let near = adaptive(|z| d(z) * z.powf(p), 0.0, split, z_breakpoints, tol)?;
    let far = adaptive_to_infinity(|z| d(z) * z.powf(p), split, z_breakpoints, tol)?;
    Ok(constant * (near + far))
}

/// Outcome of [`verify_symbol`].
#[derive(Debug, Clone)]
pub struct SymbolReport {
    pub a: f64,
    pub constant: f64,
    pub max_rel_discrepancy: f64,
    pub tol: f64,
    pub passed: bool,
}

const SYMBOL_SAMPLES: [f64; 9] = [0.0, 0.3, 0.6, 0.9, 1.2, 1.5, 2.0, 2.5, 3.0];

/// `(-Delta)^a` of the Gaussian `exp(-x^2)` through its Fourier symbol:
/// `(1/pi) \int_0^\infty xi^{2a} sqrt(pi) exp(-xi^2/4) cos(xi x) d xi`.
fn gaussian_fractional_laplacian_spectral(a: f64, x: f64, tol: Tolerance) -> Result<f64> {
    let root_pi = PI.sqrt();
    let integrand = |xi: f64| xi.powf(2.0 * a) * root_pi * (-0.25 * xi * xi).exp() * (xi * x).cos();
    // exp(-xi^2/4) < 1e-30 beyond xi = 17
    let breaks: Vec<f64> = (1..17).map(f64::from).collect();
    Ok(adaptive(integrand, 0.0, 17.0, &breaks, tol)? / PI)
}

/// Stable `2u(x) - u(x+z) - u(x-z)` for `u = exp(-x^2)`.
fn gaussian_second_difference(x: f64, z: f64) -> f64 {
    if z > 1.0 {
        return 2.0 * (-x * x).exp() - (-(x + z).powi(2)).exp() - (-(x - z).powi(2)).exp();
    }
    let c = (2.0 * x * z).cosh();
    let s = (x * z).sinh();
    2.0 * (-x * x).exp() * (-(-z * z).exp_m1() * c - 2.0 * s * s)
}

/// Applies the singular-integral operator with `constant` to a Gaussian bump and
/// compares against the Fourier-multiplier definition.
pub fn verify_symbol_with_constant(a: FracExponent, constant: f64, tol: f64) -> Result<SymbolReport> {
    let qtol = Tolerance {
        abs: 1e-13,
        rel: 1e-11,
        max_subdivisions: 4000,
    };
    let mut max_ref = 0.0f64;
    let mut max_diff = 0.0f64;
    for &x in &SYMBOL_SAMPLES {
        let spectral = gaussian_fractional_laplacian_spectral(a.value(), x, qtol)?;
        let pv = pv_second_difference(
            |z| gaussian_second_difference(x, z),
            a,
            constant,
            &[0.5, 2.0, 4.0, 8.0],
            qtol,
        )?;
        max_ref = max_ref.max(spectral.abs());
        max_diff = max_diff.max((pv - spectral).abs());
    }
    let rel = max_diff / max_ref;
    Ok(SymbolReport {
        a: a.value(),
        constant,
        max_rel_discrepancy: rel,
        tol,
        passed: rel <= tol,
    })
}

pub fn verify_symbol(a: FracExponent, tol: f64) -> Result<SymbolReport> {
    verify_symbol_with_constant(a, frac_constant(a).value, tol)
}

/// `kappa_t` with `(-Delta)^t (1 - x^2)_+^t = kappa_t` on `(-1, 1)`.
pub fn getoor_oracle(t: FracExponent) -> f64 {
    gamma(1.0 + 2.0 * t.value())
}

/// `(1 - x^2)_+^t`.
pub fn getoor_profile(t: FracExponent, x: f64) -> f64 {
    let r = 1.0 - x * x;
    if r > 0.0 {
        r.powf(t.value())
    } else {
        0.0
    }
}
