//! Galerkin matrices of the nonlocal forms on the uniform mesh.
//!
//! The double-integral forms are assembled element pair by element pair. On a
//! uniform mesh the local matrix of a pair depends only on the offset between
//! the two elements, so each offset is integrated once on the reference square
//! and scaled by `h^{1-2a}`:
//!
//! * same element: closed form, the integrand is `|x - y|^{1-2a}` times constants;
//! * neighbours: the shared corner is removed by a Duffy split of the square into
//!   two triangles; the radial integral is exact, the angular one Gauss–Legendre;
//! * offset >= 2: tensor Gauss–Legendre on a composite grid graded (ratio 1/2)
//!   toward the nearest corner, refined until the entries stabilise.
//!
//! Interactions with the exterior of the box `[-R, R]` are folded into an
//! analytic tail potential so that the full-space form is exact for functions
//! supported in the box.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{frac_constant, kernel_mass_complement, tail_potential, FracExponent};
use crate::mesh::{FeFunction, Mesh1D, NodeClass};
use crate::quadrature::GaussRule;

type Local = [[f64; 4]; 4];

const PAIR_REL_TOL: f64 = 1e-12;
const PAIR_STABLE_TOL: f64 = 1e-8;
const MAX_GRADING_LEVELS: usize = 14;

/// Reference local matrix `\int\int d_i d_j |x - y|^{-1-2a}` on the unit square
/// for two elements `d` cells apart. Local node order is `[0, 1, d, d+1]`
/// (`[0, 1, 2]` for `d = 1`, `[0, 1]` for `d = 0`).
pub(crate) fn reference_pair(a: f64, d: usize) -> Result<Local> {
    let mut l = [[0.0; 4]; 4];
    match d {
        0 => {
            let i = 2.0 / ((2.0 - 2.0 * a) * (3.0 - 2.0 * a));
            l[0][0] = i;
            l[1][1] = i;
            l[0][1] = -i;
            l[1][0] = -i;
        }
        1 => {
            // xi' = 1 - xi measured from the shared node; |x - y| = xi' + eta
            let radial = 1.0 / (3.0 - 2.0 * a);
            let rule = GaussRule::legendre(24);
            let kernel = |w: f64| (1.0 + w).powf(-1.0 - 2.0 * a);
            for (w, wt) in rule.mapped(0.0, 1.0) {
                let k = kernel(w) * wt * radial;
                let tri1 = [1.0, w - 1.0, -w];
                let tri2 = [w, 1.0 - w, -1.0];
                for i in 0..3 {
                    for j in 0..3 {
                        l[i][j] += k * (tri1[i] * tri1[j] + tri2[i] * tri2[j]);
                    }
                }
            }
        }
        _ => {
            let df = d as f64;
            let mut prev = graded_pair(a, df, 0);
            let mut converged = false;
            for level in 1..=MAX_GRADING_LEVELS {
                let next = graded_pair(a, df, level);
                let scale = next.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                let change = next
                    .iter()
                    .flatten()
                    .zip(prev.iter().flatten())
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                prev = next;
                if change <= PAIR_REL_TOL * scale {
                    converged = true;
                    break;
                }
                if level == MAX_GRADING_LEVELS && change <= PAIR_STABLE_TOL * scale {
                    converged = true;
                }
            }
            if !converged {
                return Err(Error::QuadratureNonconvergence(format!(
                    "element pair at offset {d} did not stabilise"
                )));
            }
            l = prev;
        }
    }
    Ok(l)
}

fn graded_segments(levels: usize, toward_one: bool) -> Vec<(f64, f64)> {
    let mut segs = Vec::with_capacity(levels + 1);
    let mut lo = 0.0;
    let mut width = 0.5;
    for _ in 0..levels {
        segs.push((lo, lo + width));
        lo += width;
        width *= 0.5;
    }
    segs.push((lo, 1.0));
    if toward_one {
        segs
    } else {
        segs.iter().rev().map(|&(a, b)| (1.0 - b, 1.0 - a)).collect()
    }
}

fn graded_pair(a: f64, d: f64, levels: usize) -> Local {
    let rule = GaussRule::legendre(8);
    let xs = graded_segments(levels, true);
    let ys = graded_segments(levels, false);
    let mut l = [[0.0; 4]; 4];
    for &(x0, x1) in &xs {
        for (xi, wx) in rule.mapped(x0, x1) {
            for &(y0, y1) in &ys {
                for (eta, wy) in rule.mapped(y0, y1) {
                    let k = wx * wy * (d + eta - xi).powf(-1.0 - 2.0 * a);
                    let v = [1.0 - xi, xi, -(1.0 - eta), -eta];
                    for i in 0..4 {
                        for j in i..4 {
                            l[i][j] += k * v[i] * v[j];
                        }
                    }
                }
            }
        }
    }
    for i in 0..4 {
        for j in 0..i {
            l[i][j] = l[j][i];
        }
    }
    l
}

/// Raw double-integral matrix `\int_S \int_S (phi_i(x)-phi_i(y))(phi_j(x)-phi_j(y)) |x-y|^{-1-2a}`
/// where `S` is the union of `elements`. Rows and columns are indexed by the
/// nodes `elements.start ..= elements.end`.
pub fn pair_matrix(mesh: &Mesh1D, a: FracExponent, elements: Range<usize>) -> Result<DMatrix<f64>> {
    let ne = elements.len();
    let n = ne + 1;
    let av = a.value();
    let locals: Vec<Local> = (0..ne)
        .into_par_iter()
        .map(|d| reference_pair(av, d))
        .collect::<Result<_>>()?;
    let scale = mesh.h.powf(1.0 - 2.0 * av);
    let mut k = DMatrix::<f64>::zeros(n, n);
    for ea in 0..ne {
        for eb in ea..ne {
            let d = eb - ea;
            let lm = &locals[d];
            let factor = if d == 0 { scale } else { 2.0 * scale };
            match d {
                0 => {
                    let idx = [ea, ea + 1];
                    for (p, &i) in idx.iter().enumerate() {
                        for (q, &j) in idx.iter().enumerate() {
                            k[(i, j)] += factor * lm[p][q];
                        }
                    }
                }
                1 => {
                    let idx = [ea, ea + 1, ea + 2];
                    for (p, &i) in idx.iter().enumerate() {
                        for (q, &j) in idx.iter().enumerate() {
                            k[(i, j)] += factor * lm[p][q];
                        }
                    }
                }
                _ => {
                    let idx = [ea, ea + 1, eb, eb + 1];
                    for (p, &i) in idx.iter().enumerate() {
                        for (q, &j) in idx.iter().enumerate() {
                            k[(i, j)] += factor * lm[p][q];
                        }
                    }
                }
            }
        }
    }
    symmetrize(&mut k);
    Ok(k)
}

fn symmetrize(k: &mut DMatrix<f64>) {
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
}

/// `\int_0^1 P(lambda) (z0 + h lambda)^p h d lambda` for a quadratic `P` given by
/// its monomial coefficients in `lambda`.
fn shifted_power_integral(coef: [f64; 3], z0: f64, h: f64, p: f64) -> f64 {
    if z0 == 0.0 {
        // h^{p+1} \int_0^1 lambda^{k+p}
        let mut s = 0.0;
        for (k, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let e = k as f64 + p + 1.0;
            if e <= 0.0 {
                return f64::INFINITY * c.signum();
            }
            s += c / e;
        }
        s * h.powf(p + 1.0)
    } else {
        let rule = GaussRule::legendre(16);
        rule.integrate(0.0, 1.0, |lam| {
            (coef[0] + coef[1] * lam + coef[2] * lam * lam) * (z0 + h * lam).powf(p) * h
        })
    }
}

/// Raw tail matrix `\int_B phi_i phi_j kappa`, `kappa(x) = \int_{|y|>R} |x-y|^{-1-2a} dy`.
/// Tridiagonal; the diagonal entries of the two box-end nodes are infinite for `a >= 1/2`.
pub fn tail_matrix(mesh: &Mesh1D, a: FracExponent) -> DMatrix<f64> {
    let n = mesh.n_nodes();
    let av = a.value();
    let r = mesh.geom.trunc_radius;
    let h = mesh.h;
    let p = -2.0 * av;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for e in 0..mesh.n_elements() {
        let (xl, xr) = (mesh.nodes[e], mesh.nodes[e + 1]);
        // lambda measured from the end nearest to each singular point
        // right singularity at R: z = R - x = (R - xr) + h * lambda, lambda from xr backwards
        // phi_left = lambda, phi_right = 1 - lambda
        let z_right = (r - xr).max(0.0);
        let right = [
            shifted_power_integral([0.0, 0.0, 1.0], z_right, h, p),
            shifted_power_integral([0.0, 1.0, -1.0], z_right, h, p),
            shifted_power_integral([1.0, -2.0, 1.0], z_right, h, p),
        ];
        // left singularity at -R: z = x + R = (xl + R) + h * lambda, phi_left = 1 - lambda
        let z_left = (xl + r).max(0.0);
        let left = [
            shifted_power_integral([1.0, -2.0, 1.0], z_left, h, p),
            shifted_power_integral([0.0, 1.0, -1.0], z_left, h, p),
            shifted_power_integral([0.0, 0.0, 1.0], z_left, h, p),
        ];
        let inv = 1.0 / (2.0 * av);
        m[(e, e)] += inv * (left[0] + right[0]);
        let off = inv * (left[1] + right[1]);
        m[(e, e + 1)] += off;
        m[(e + 1, e)] += off;
        m[(e + 1, e + 1)] += inv * (left[2] + right[2]);
    }
    m
}

/// Stiffness matrix of `(C/2) \int\int_{R^2} (u(x)-u(y))(v(x)-v(y)) |x-y|^{-1-2t}` over all nodes.
pub fn assemble_full_gagliardo(mesh: &Mesh1D, t: FracExponent) -> Result<DMatrix<f64>> {
    let c = frac_constant(t).value;
    let pairs = pair_matrix(mesh, t, 0..mesh.n_elements())?;
    let tail = tail_matrix(mesh, t);
    let mut k = pairs;
    for j in 0..k.ncols() {
        for i in 0..k.nrows() {
            k[(i, j)] = 0.5 * c * (k[(i, j)] + 2.0 * tail[(i, j)]);
        }
    }
    Ok(k)
}

/// Region of a double-integral seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Domain,
    Full,
}

/// `(\int\int_{S x S} (u(x) - u(y))^2 |x - y|^{-1-2r})^{1/2}` with `S` the domain or the whole line.
pub fn gagliardo_seminorm(mesh: &Mesh1D, u: &FeFunction, r: FracExponent, region: Region) -> Result<f64> {
    let form = match region {
        Region::Domain => {
            let g = pair_matrix(mesh, r, mesh.domain_elements())?;
            let v = u.dof.rows(mesh.i_lo, g.nrows()).into_owned();
            quad_form(&g, &v)
        }
        Region::Full => {
            let mut g = pair_matrix(mesh, r, 0..mesh.n_elements())?;
            g += 2.0 * tail_matrix(mesh, r);
            quad_form(&g, &u.dof)
        }
    };
    Ok(form.max(0.0).sqrt())
}

/// `v^T A v` skipping zero components (so infinite entries on unused dofs are harmless).
pub fn quad_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let nz: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    let mut s = 0.0;
    for &i in &nz {
        for &j in &nz {
            s += v[i] * a[(i, j)] * v[j];
        }
    }
    s
}

/// `A v` skipping zero components of `v`.
pub fn apply_sparse_input(a: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.nrows());
    for j in 0..v.len() {
        let vj = v[j];
        if vj != 0.0 {
            out.axpy(vj, &a.column(j), 1.0);
        }
    }
    out
}

/// Per-element Gauss rule on the domain; the two boundary elements are
/// shrunk by `h / 10` at the boundary end.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub element: Vec<usize>,
}

pub const QUAD_POINTS_PER_ELEMENT: usize = 4;

pub fn interior_quadrature(mesh: &Mesh1D) -> QuadRule {
    let rule = GaussRule::legendre(QUAD_POINTS_PER_ELEMENT);
    let pull = 0.1 * mesh.h;
    let mut q = QuadRule {
        nodes: Vec::new(),
        weights: Vec::new(),
        element: Vec::new(),
    };
    for e in mesh.domain_elements() {
        let mut lo = mesh.nodes[e];
        let mut hi = mesh.nodes[e + 1];
        if e == mesh.i_lo {
            lo += pull;
        }
        if e + 1 == mesh.i_hi {
            hi -= pull;
        }
        for (x, w) in rule.mapped(lo, hi) {
            q.nodes.push(x);
            q.weights.push(w);
            q.element.push(e);
        }
    }
    q
}

/// `(-Delta)^a u (x)` for the continuous piecewise-linear `u` with the given
/// sorted breakpoints and values, zero outside them. Exact integration of the
/// second-difference form `C \int_0^\infty (2u(x) - u(x+z) - u(x-z)) z^{-1-2a} dz`.
/// Returns an infinite value at a kink of `u` when `a >= 1/2`.
pub fn fractional_laplacian_p1(a: FracExponent, constant: f64, xs: &[f64], vals: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), vals.len());
    let lo = xs[0];
    let hi = xs[xs.len() - 1];
    let eval = |y: f64| -> f64 {
        if y <= lo || y >= hi {
            return if y == lo { vals[0] } else if y == hi { vals[vals.len() - 1] } else { 0.0 };
        }
        let k = xs.partition_point(|&p| p <= y);
        let (x0, x1) = (xs[k - 1], xs[k]);
        let lam = (y - x0) / (x1 - x0);
        vals[k - 1] * (1.0 - lam) + vals[k] * lam
    };
    let ux = eval(x);
    let mut zs: Vec<f64> = xs.iter().map(|&p| (x - p).abs()).collect();
    zs.push(0.0);
    zs.sort_by(f64::total_cmp);
    let tiny = 1e-13 * (hi - lo).max(1.0);
    zs.dedup_by(|b, a| (*b - *a).abs() <= tiny);
    let av = a.value();
    let p = -1.0 - 2.0 * av;
    let dfun = |z: f64| 2.0 * ux - eval(x + z) - eval(x - z);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    let mut d_prev = 0.0;
    for w in zs.windows(2) {
        let (z0, z1) = (w[0], w[1]);
        let d1 = dfun(z1);
        if z0 == 0.0 {
            // D(0) = 0 and D is linear on [0, z1]
            if d1.abs() > 1e-13 * scale {
                let beta = d1 / z1;
                if av >= 0.5 {
                    return f64::INFINITY * beta.signum() * constant;
                }
                total += beta * z1.powf(1.0 - 2.0 * av) / (1.0 - 2.0 * av);
            }
        } else {
            let slope = (d1 - d_prev) / (z1 - z0);
            let v = (z1 - z0) / z0;
            let i0 = z0.powf(p + 1.0) * ((p + 1.0) * v.ln_1p()).exp_m1() / (p + 1.0);
            let i1 = z0.powf(p + 2.0) * moment_one(v, p);
            total += d_prev * i0 + slope * i1;
        }
        d_prev = d1;
    }
    let zmax = *zs.last().expect("non-empty breakpoints");
    if zmax > 0.0 {
        // beyond the last breakpoint both shifted points are outside the support
        total += 2.0 * ux * zmax.powf(-2.0 * av) / (2.0 * av);
    }
    constant * total
}

/// `\int_0^V v (1 + v)^p dv`.
fn moment_one(v: f64, p: f64) -> f64 {
    if v < 0.5 {
        let rule = GaussRule::legendre(10);
        rule.integrate(0.0, v, |s| s * (1.0 + s).powf(p))
    } else {
        let l = v.ln_1p();
        let first = if (p + 2.0).abs() < 1e-14 {
            l
        } else {
            ((p + 2.0) * l).exp_m1() / (p + 2.0)
        };
        let second = ((p + 1.0) * l).exp_m1() / (p + 1.0);
        first - second
    }
}

/// `(-Delta)^a u(x)` for a mesh function (all nodes used as breakpoints).
pub fn fractional_laplacian_fe(mesh: &Mesh1D, a: FracExponent, u: &FeFunction, x: f64) -> f64 {
    let c = frac_constant(a).value;
    fractional_laplacian_p1(a, c, &mesh.nodes, u.dof.as_slice(), x)
}

/// Evaluation matrix of the regional half operator: row `k` is quadrature node
/// `x_k`, column `i` is the `i`-th interior hat.
/// `R[k][i] = (-Delta)^a phi_i(x_k) - phi_a(x_k) phi_i(x_k)`.
pub fn assemble_regional_halfop(
    mesh: &Mesh1D,
    s_half: FracExponent,
    quad: &QuadRule,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let geom = &mesh.geom;
    let mut warnings = Vec::new();
    for &x in &quad.nodes {
        if geom.dist_to_complement(x) < 1e-8 {
            return Err(Error::NodeTooCloseToBoundary { x, tol: 1e-8 });
        }
    }
    if (s_half.value() - 0.25).abs() < 1e-14 {
        warnings.push(
            "order s = 1/2: hats touching the boundary are outside H^{1/2}_{00}; \
             the half operator may fail to be square integrable"
                .to_string(),
        );
    }
    let c = frac_constant(s_half).value;
    let phis: Vec<f64> = quad
        .nodes
        .iter()
        .map(|&x| tail_potential(s_half, geom, x))
        .collect::<Result<_>>()?;
    let interior: Vec<usize> = mesh.interior_nodes().collect();
    let nq = quad.nodes.len();
    // far from the hat the operator is minus the kernel moment of the hat
    let rule = GaussRule::legendre(12);
    let far_rule: Vec<(f64, f64)> = rule.mapped(-1.0, 0.0).chain(rule.mapped(0.0, 1.0)).collect();
    let p = -1.0 - 2.0 * s_half.value();
    let cols: Vec<Vec<f64>> = interior
        .par_iter()
        .map(|&i| {
            let xs = [mesh.nodes[i - 1], mesh.nodes[i], mesh.nodes[i + 1]];
            let vs = [0.0, 1.0, 0.0];
            (0..nq)
                .map(|k| {
                    let x = quad.nodes[k];
                    if x <= xs[0] - 2.0 * mesh.h || x >= xs[2] + 2.0 * mesh.h {
                        let moment: f64 = far_rule
                            .iter()
                            .map(|&(y, w)| w * (1.0 - y.abs()) * (x - xs[1] - mesh.h * y).abs().powf(p))
                            .sum();
                        return -c * mesh.h * moment;
                    }
                    let full = fractional_laplacian_p1(s_half, c, &xs, &vs, x);
                    let hat = if x > xs[0] && x < xs[2] {
                        1.0 - (x - xs[1]).abs() / mesh.h
                    } else {
                        0.0
                    };
                    full - phis[k] * hat
                })
                .collect()
        })
        .collect();
    let mut r = DMatrix::<f64>::zeros(nq, interior.len());
    for (j, col) in cols.iter().enumerate() {
        for (k, &v) in col.iter().enumerate() {
            r[(k, j)] = v;
        }
    }
    Ok((r, warnings))
}

/// Piecewise-constant coefficient: `values[k]` on `[edges[k], edges[k+1])`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
}

impl CoefficientField {
    pub fn new(edges: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if edges.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::Dimension(format!(
                "{} edges for {} cell values",
                edges.len(),
                values.len()
            )));
        }
        if !edges.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Config("coefficient cell edges must increase".into()));
        }
        Ok(CoefficientField { edges, values })
    }

    pub fn zero() -> Self {
        CoefficientField {
            edges: vec![0.0, 0.0],
            values: vec![0.0],
        }
    }

    /// `n` equal cells over `[lo, hi]` with the given values.
    pub fn uniform(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let edges = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
        Self::new(edges, values)
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        CoefficientField {
            edges: self.edges.clone(),
            values,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_center(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.edges[0] || x >= self.edges[self.edges.len() - 1] {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= x) - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.cell_of(x).map_or(0.0, |k| self.values[k])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Nonzero cells must stay at least one cell width `h` away from the boundary.
    pub fn check_support(&self, mesh: &Mesh1D, name: &str) -> Result<()> {
        let g = &mesh.geom;
        for k in 0..self.n_cells() {
            if self.values[k] == 0.0 {
                continue;
            }
            let (a, b) = (self.edges[k], self.edges[k + 1]);
            if a < g.omega_lo + mesh.h - 1e-12 || b > g.omega_hi - mesh.h + 1e-12 {
                return Err(Error::SupportViolation(format!(
                    "{name} is nonzero on [{a}, {b}], within one cell of the boundary; \
                     coefficients must be compactly supported in the domain"
                )));
            }
        }
        Ok(())
    }
}

/// Mass matrix of the interior hats weighted by `q` (plain mass when `q = None`).
/// Elements are split at coefficient edges; two-point Gauss is exact on each piece.
pub fn weighted_mass_matrix(mesh: &Mesh1D, q: Option<&CoefficientField>) -> DMatrix<f64> {
    closure_mass_matrix(mesh, q)
        .view((1, 1), (mesh.n_interior(), mesh.n_interior()))
        .into_owned()
}

/// Weighted mass matrix over all nodes of the closed domain.
pub fn closure_mass_matrix(mesh: &Mesh1D, q: Option<&CoefficientField>) -> DMatrix<f64> {
    let n = mesh.i_hi - mesh.i_lo + 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    let rule = GaussRule::legendre(2);
    for e in mesh.domain_elements() {
        let (x0, x1) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let mut cuts = vec![x0];
        if let Some(q) = q {
            cuts.extend(q.edges.iter().copied().filter(|&c| c > x0 && c < x1));
        }
        cuts.push(x1);
        let le = e - mesh.i_lo;
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let weight = q.map_or(1.0, |q| q.eval(mid));
            if weight == 0.0 {
                continue;
            }
            for (x, wt) in rule.mapped(w[0], w[1]) {
                let lam = (x - x0) / mesh.h;
                let phi = [1.0 - lam, lam];
                for p in 0..2 {
                    for r in 0..2 {
                        m[(le + p, le + r)] += weight * wt * phi[p] * phi[r];
                    }
                }
            }
        }
    }
    m
}

/// `R^T diag(w_k b(x_k)) R`.
pub fn weighted_halfop_form(r_half: &DMatrix<f64>, quad: &QuadRule, b: &CoefficientField) -> DMatrix<f64> {
    let mut scaled = r_half.clone();
    for k in 0..r_half.nrows() {
        let wb = quad.weights[k] * b.eval(quad.nodes[k]);
        scaled.row_mut(k).scale_mut(wb);
    }
    let mut kb = r_half.transpose() * scaled;
    symmetrize(&mut kb);
    kb
}

/// Returns `(Kb, Mq, M)` over the interior hats.
pub fn assemble_weighted_forms(
    r_half: &DMatrix<f64>,
    quad: &QuadRule,
    b: &CoefficientField,
    q: &CoefficientField,
    mesh: &Mesh1D,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    b.check_support(mesh, "b")?;
    q.check_support(mesh, "q")?;
    let kb = weighted_halfop_form(r_half, quad, b);
    let mq = weighted_mass_matrix(mesh, Some(q));
    let m = weighted_mass_matrix(mesh, None);
    Ok((kb, mq, m))
}

/// Exponents and mesh for the coupled operator.
#[derive(Debug, Clone, Copy)]
pub struct ProblemParams {
    pub t: FracExponent,
    pub s: f64,
    pub geom: crate::kernel::DomainGeometry,
    pub h: f64,
}

impl ProblemParams {
    pub fn new(t: f64, s: f64, geom: crate::kernel::DomainGeometry, h: f64) -> Result<Self> {
        let t = FracExponent::new(t)?;
        if !(s > 0.0 && s < t.value()) {
            return Err(Error::Config(format!(
                "exponents must satisfy 0 < s < t < 1 (sub-principal order below the principal order); got s = {s}, t = {}",
                t.value()
            )));
        }
        Ok(ProblemParams { t, s, geom, h })
    }

    /// Order `s/2` of the regional half operator.
    pub fn s_half(&self) -> FracExponent {
        FracExponent::new(0.5 * self.s).expect("0 < s < 1")
    }
}

/// Coefficient-independent matrices of the coupled form.
#[derive(Debug, Clone)]
pub struct NonlocalAssembly {
    pub params: ProblemParams,
    pub mesh: Mesh1D,
    /// full-space form of order `t` over all nodes
    pub k_full: DMatrix<f64>,
    /// regional half operator at quadrature nodes, columns = interior hats
    pub r_half: DMatrix<f64>,
    /// mass over interior hats
    pub mass: DMatrix<f64>,
    /// mass over the closed domain nodes
    pub mass_closure: DMatrix<f64>,
    pub quad: QuadRule,
    pub warnings: Vec<String>,
}

impl NonlocalAssembly {
    pub fn new(params: ProblemParams) -> Result<Self> {
        let mesh = crate::mesh::build_mesh(&params.geom, params.h)?;
        Self::on_mesh(params, mesh)
    }

    pub fn on_mesh(params: ProblemParams, mesh: Mesh1D) -> Result<Self> {
        let k_full = assemble_full_gagliardo(&mesh, params.t)?;
        let quad = interior_quadrature(&mesh);
        let (r_half, warnings) = assemble_regional_halfop(&mesh, params.s_half(), &quad)?;
        let mass = weighted_mass_matrix(&mesh, None);
        let mass_closure = closure_mass_matrix(&mesh, None);
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(NonlocalAssembly {
            params,
            mesh,
            k_full,
            r_half,
            mass,
            mass_closure,
            quad,
            warnings,
        })
    }

    /// Interior block of the full-space stiffness.
    pub fn k_interior(&self) -> DMatrix<f64> {
        let n = self.mesh.n_interior();
        self.k_full.view((self.mesh.i_lo + 1, self.mesh.i_lo + 1), (n, n)).into_owned()
    }

    /// Regional half operator applied to a full-mesh function supported in the domain,
    /// evaluated at the quadrature nodes.
    pub fn halfop_apply(&self, u: &FeFunction) -> DVector<f64> {
        let v = u.dof.rows(self.mesh.i_lo + 1, self.mesh.n_interior()).into_owned();
        &self.r_half * v
    }

    /// Interior dofs of a full-mesh vector.
    pub fn interior_part(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.mesh.i_lo + 1, self.mesh.n_interior()).into_owned()
    }

    /// Full-mesh vector from interior dofs.
    pub fn extend_interior(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.mesh.n_nodes());
        out.rows_mut(self.mesh.i_lo + 1, self.mesh.n_interior()).copy_from(v);
        out
    }
}

/// Class-based check for exterior data: zero on the closed domain, the collar and the box ends.
pub fn exterior_support_ok(mesh: &Mesh1D, dof: &DVector<f64>) -> bool {
    dof.iter()
        .zip(&mesh.classes)
        .all(|(&v, &c)| c == NodeClass::Exterior || v == 0.0)
}

/// Tail kernel `\int_{R \ (lo, hi)} |x-y|^{-1-2a}` re-exported for oracles.
pub fn complement_mass(a: f64, lo: f64, hi: f64, x: f64) -> f64 {
    kernel_mass_complement(a, lo, hi, x)
}
