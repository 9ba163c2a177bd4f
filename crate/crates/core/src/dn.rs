//! Exterior measurements of a forward solution: the nonlocal normal derivative
//! and the Dirichlet-to-Neumann values `(-Delta)^t u` at observation points.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{fractional_laplacian_fe, NonlocalAssembly};
use crate::error::{Error, Result};
use crate::forward::{ExteriorDatum, Solution};
use crate::io::{fmt_num, CsvTable};
use crate::kernel::{frac_constant, m_function, FracExponent};
use crate::mesh::{FeFunction, Mesh1D};
use crate::quadrature::GaussRule;

/// Finite sample of an exterior open set with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Trapezoid weights of sorted points, cut at gaps wider than `gap`.
fn trapezoid_weights(points: &[f64], gap: f64) -> Vec<f64> {
    let n = points.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let d = points[i + 1] - points[i];
        if d <= gap {
            w[i] += 0.5 * d;
            w[i + 1] += 0.5 * d;
        }
    }
    w
}

impl ObservationSet {
    /// Points with trapezoid weights computed separately on each side of the domain.
    pub fn new(mesh: &Mesh1D, mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("observation set must be nonempty".into()));
        }
        points.sort_by(f64::total_cmp);
        let g = &mesh.geom;
        let left: Vec<f64> = points.iter().copied().filter(|&x| x < g.omega_lo).collect();
        let right: Vec<f64> = points.iter().copied().filter(|&x| x > g.omega_hi).collect();
        let mut weights = trapezoid_weights(&left, f64::INFINITY);
        weights.extend(trapezoid_weights(&right, f64::INFINITY));
        if left.len() + right.len() != points.len() {
            let x = points.iter().copied().find(|&x| x >= g.omega_lo && x <= g.omega_hi).unwrap_or(0.0);
            return Err(Error::ObservationTooClose { x });
        }
        // a lone point on one side gets unit weight
        if left.len() == 1 {
            weights[0] = 1.0;
        }
        if right.len() == 1 {
            let k = left.len();
            weights[k] = 1.0;
        }
        Self::with_weights(mesh, points, weights)
    }

    pub fn with_weights(mesh: &Mesh1D, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} observation points with {} weights",
                points.len(),
                weights.len()
            )));
        }
        for &x in &points {
            if mesh.geom.dist_to_closure(x) < mesh.h * (1.0 - 1e-12) {
                return Err(Error::ObservationTooClose { x });
            }
            if x.abs() >= mesh.geom.trunc_radius {
                return Err(Error::Config(format!("observation point {x} outside the computational box")));
            }
        }
        Ok(ObservationSet { points, weights })
    }

    /// `n` Gauss–Legendre points on `[lo, hi]`.
    pub fn gauss(mesh: &Mesh1D, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let (p, w): (Vec<f64>, Vec<f64>) = GaussRule::legendre(n).mapped(lo, hi).unzip();
        Self::with_weights(mesh, p, w)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sampled exterior data of one forward solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DnDatum {
    pub obs: ObservationSet,
    pub values: Vec<f64>,
    pub source_id: String,
}

impl DnDatum {
    pub fn to_csv_rows(&self, t: &mut CsvTable) {
        for (x, v) in self.obs.points.iter().zip(&self.values) {
            t.push(vec![fmt_num(*x), fmt_num(*v), self.source_id.clone()]);
        }
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["x", "value", "source"]);
        self.to_csv_rows(&mut t);
        t
    }

    /// Weighted `l^2` distance to another datum on the same points.
    pub fn weighted_distance(&self, other: &DnDatum) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.obs.weights)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn weighted_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.obs.weights)
            .map(|(a, w)| w * a * a)
            .sum::<f64>()
            .sqrt()
    }
}

/// Precomputed linear functionals for `N u (x_k) = m(x_k) u(x_k) - C \int_Omega u(y) |x_k - y|^{-1-2t} dy`.
#[derive(Debug, Clone)]
pub struct NeumannObserver {
    pub obs: ObservationSet,
    pub t: FracExponent,
    /// `m(x_k)`
    pub mass: Vec<f64>,
    /// `C \int_Omega phi_j |x_k - y|^{-1-2t}` for closed-domain nodes `j`
    pub weights: DMatrix<f64>,
}

const NEUMANN_GAUSS: usize = 16;

impl NeumannObserver {
    pub fn new(mesh: &Mesh1D, t: FracExponent, obs: &ObservationSet) -> Result<Self> {
        let c = frac_constant(t).value;
        let p = -1.0 - 2.0 * t.value();
        let rule = GaussRule::legendre(NEUMANN_GAUSS);
        let nc = mesh.i_hi - mesh.i_lo + 1;
        let mut w = DMatrix::zeros(obs.len(), nc);
        let mut mass = Vec::with_capacity(obs.len());
        for (k, &x) in obs.points.iter().enumerate() {
            mass.push(m_function(t, &mesh.geom, x)?);
            for e in mesh.domain_elements() {
                let (x0, x1) = (mesh.nodes[e], mesh.nodes[e + 1]);
                let le = e - mesh.i_lo;
                for (y, wt) in rule.mapped(x0, x1) {
                    let kern = c * wt * (x - y).abs().powf(p);
                    let lam = (y - x0) / mesh.h;
                    w[(k, le)] += kern * (1.0 - lam);
                    w[(k, le + 1)] += kern * lam;
                }
            }
        }
        Ok(NeumannObserver {
            obs: obs.clone(),
            t,
            mass,
            weights: w,
        })
    }

    /// Block acting on interior dofs.
    pub fn interior_block(&self) -> DMatrix<f64> {
        let n = self.weights.ncols() - 2;
        self.weights.columns(1, n).into_owned()
    }

    pub fn apply(&self, mesh: &Mesh1D, u: &FeFunction) -> Vec<f64> {
        let closure = u.dof.rows(mesh.i_lo, mesh.i_hi - mesh.i_lo + 1);
        let integral = &self.weights * closure;
        self.obs
            .points
            .iter()
            .enumerate()
            .map(|(k, &x)| self.mass[k] * u.eval(mesh, x) - integral[k])
            .collect()
    }

    /// Part of the datum independent of the interior dofs: `m(x_k) f(x_k)`.
    pub fn exterior_part(&self, mesh: &Mesh1D, f: &ExteriorDatum) -> DVector<f64> {
        DVector::from_iterator(
            self.obs.len(),
            self.obs
                .points
                .iter()
                .enumerate()
                .map(|(k, &x)| self.mass[k] * f.values.eval(mesh, x)),
        )
    }
}

pub fn nonlocal_normal_derivative(
    asm: &NonlocalAssembly,
    u: &Solution,
    source_id: &str,
    obs: &ObservationSet,
) -> Result<DnDatum> {
    let op = NeumannObserver::new(&asm.mesh, asm.params.t, obs)?;
    Ok(DnDatum {
        obs: obs.clone(),
        values: op.apply(&asm.mesh, &u.u),
        source_id: source_id.to_string(),
    })
}

/// `(-Delta)^t u` at the observation points (exact for the piecewise-linear `u`).
pub fn dn_operator(asm: &NonlocalAssembly, u: &Solution, source_id: &str, obs: &ObservationSet) -> DnDatum {
    DnDatum {
        obs: obs.clone(),
        values: fractional_laplacian_values(&asm.mesh, asm.params.t, &u.u, &obs.points),
        source_id: source_id.to_string(),
    }
}

pub fn fractional_laplacian_values(mesh: &Mesh1D, t: FracExponent, u: &FeFunction, xs: &[f64]) -> Vec<f64> {
    xs.par_iter().map(|&x| fractional_laplacian_fe(mesh, t, u, x)).collect()
}

#[derive(Debug, Clone)]
pub struct LnReport {
    /// `Lambda f`
    pub lhs: Vec<f64>,
    /// `N u_f - m f + (-Delta)^t (E_0 f)`
    pub rhs: Vec<f64>,
    /// `N u_f - Lambda f`
    pub gap: Vec<f64>,
    pub max_abs_discrepancy: f64,
}

pub fn verify_ln_relation(
    asm: &NonlocalAssembly,
    f: &ExteriorDatum,
    sol: &Solution,
    obs: &ObservationSet,
) -> Result<LnReport> {
    let mesh = &asm.mesh;
    let t = asm.params.t;
    let n = nonlocal_normal_derivative(asm, sol, &f.id, obs)?;
    let lam = dn_operator(asm, sol, &f.id, obs);
    let ext = fractional_laplacian_values(mesh, t, &f.values, &obs.points);
    let mut rhs = Vec::with_capacity(obs.len());
    let mut gap = Vec::with_capacity(obs.len());
    let mut worst = 0.0f64;
    for (k, &x) in obs.points.iter().enumerate() {
        let m = m_function(t, &mesh.geom, x)?;
        let r = n.values[k] - m * f.values.eval(mesh, x) + ext[k];
        worst = worst.max((r - lam.values[k]).abs());
        rhs.push(r);
        gap.push(n.values[k] - lam.values[k]);
    }
    Ok(LnReport {
        lhs: lam.values,
        rhs,
        gap,
        max_abs_discrepancy: worst,
    })
}
