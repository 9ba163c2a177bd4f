//! Exterior-value problem `L_{b,q} u = F` in the domain, `u = f` outside.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_weighted_forms, quad_form, CoefficientField, NonlocalAssembly,
};
use crate::error::{Error, Result};
use crate::io::{fmt_num, CsvTable};
use crate::kernel::frac_constant;
use crate::mesh::{FeFunction, Mesh1D, NodeClass};

/// Guard threshold relative to `||A||`.
pub const GUARD_REL: f64 = 1e-10;

/// Exterior Dirichlet datum: a mesh function vanishing on the closed domain,
/// on the collar next to it and at the box ends.
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorDatum {
    pub id: String,
    pub values: FeFunction,
}

impl ExteriorDatum {
    pub fn new(mesh: &Mesh1D, id: impl Into<String>, values: FeFunction) -> Result<Self> {
        if values.dof.len() != mesh.n_nodes() {
            return Err(Error::Dimension(format!(
                "exterior datum has {} values for {} nodes",
                values.dof.len(),
                mesh.n_nodes()
            )));
        }
        for (i, (&v, &c)) in values.dof.iter().zip(&mesh.classes).enumerate() {
            if c != NodeClass::Exterior && v != 0.0 {
                return Err(Error::InvalidExteriorDatum(format!(
                    "nonzero value {v} at x = {} ({c:?}); data must vanish on the closed domain and one cell beyond",
                    mesh.nodes[i]
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidExteriorDatum(format!("non-finite value at node {i}")));
            }
        }
        Ok(ExteriorDatum { id: id.into(), values })
    }

    pub fn zero(mesh: &Mesh1D) -> Self {
        ExteriorDatum {
            id: "zero".into(),
            values: FeFunction::zeros(mesh),
        }
    }

    /// Interpolant of `cos^2` bump of the given half width around `center`.
    pub fn bump(mesh: &Mesh1D, id: impl Into<String>, center: f64, half_width: f64, amplitude: f64) -> Result<Self> {
        let f = mesh.interpolate(|x| {
            let r = (x - center) / half_width;
            if r.abs() < 1.0 {
                let c = (0.5 * std::f64::consts::PI * r).cos();
                amplitude * c * c
            } else {
                0.0
            }
        });
        Self::new(mesh, id, f)
    }

    /// Hat function at node `i`.
    pub fn hat(mesh: &Mesh1D, id: impl Into<String>, i: usize) -> Result<Self> {
        let mut f = FeFunction::zeros(mesh);
        if i >= mesh.n_nodes() {
            return Err(Error::Dimension(format!("node {i} out of range")));
        }
        f.dof[i] = 1.0;
        Self::new(mesh, id, f)
    }

    pub fn scaled(&self, c: f64) -> Self {
        ExteriorDatum {
            id: format!("{}*{c}", self.id),
            values: FeFunction { dof: &self.values.dof * c },
        }
    }

    /// Linear combination of data; valid by construction.
    pub fn combination(id: impl Into<String>, parts: &[(&ExteriorDatum, f64)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("empty combination".into()))?;
        let mut dof = DVector::zeros(first.0.values.dof.len());
        for (d, c) in parts {
            dof.axpy(*c, &d.values.dof, 1.0);
        }
        Ok(ExteriorDatum {
            id: id.into(),
            values: FeFunction { dof },
        })
    }

    pub fn is_zero(&self) -> bool {
        self.values.dof.iter().all(|&v| v == 0.0)
    }
}

/// Smallest singular value of the interior operator against the guard threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumReport {
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    pub smallest_eigenvalue: f64,
    pub threshold: f64,
    /// shift `theta >= 0` making `A + theta M` positive semidefinite in the eigenvalue sense
    pub shift_used: f64,
    pub passed: bool,
}

impl SpectrumReport {
    pub fn of_symmetric(a: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let smin = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let smax = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lmin = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let threshold = GUARD_REL * smax;
        SpectrumReport {
            smallest_singular_value: smin,
            largest_singular_value: smax,
            smallest_eigenvalue: lmin,
            threshold,
            shift_used: (-lmin).max(0.0),
            passed: smin > threshold,
        }
    }

    pub fn condition(&self) -> f64 {
        self.largest_singular_value / self.smallest_singular_value
    }
}

/// `A = K + Kb + Mq` on the interior hats.
pub fn system_matrix(asm: &NonlocalAssembly, b: &CoefficientField, q: &CoefficientField) -> Result<DMatrix<f64>> {
    let (kb, mq, _) = assemble_weighted_forms(&asm.r_half, &asm.quad, b, q, &asm.mesh)?;
    Ok(asm.k_interior() + kb + mq)
}

pub fn check_eigenvalue_condition(
    asm: &NonlocalAssembly,
    b: &CoefficientField,
    q: &CoefficientField,
) -> Result<SpectrumReport> {
    Ok(SpectrumReport::of_symmetric(&system_matrix(asm, b, q)?))
}

/// One forward problem with optional source `F` given by its values on the closed domain.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    pub b: CoefficientField,
    pub q: CoefficientField,
    pub f: ExteriorDatum,
    pub source: Option<FeFunction>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: FeFunction,
    pub residual: f64,
    pub cond_estimate: f64,
}

impl Solution {
    pub fn to_csv(&self, mesh: &Mesh1D) -> CsvTable {
        let mut t = CsvTable::new(&["x", "u"]);
        for (x, v) in mesh.nodes.iter().zip(self.u.dof.iter()) {
            t.push(vec![fmt_num(*x), fmt_num(*v)]);
        }
        t
    }
}

/// Factorised interior operator for fixed coefficients; solves many data.
pub struct ForwardOperator<'a> {
    pub asm: &'a NonlocalAssembly,
    pub b: CoefficientField,
    pub q: CoefficientField,
    pub matrix: DMatrix<f64>,
    pub spectrum: SpectrumReport,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> ForwardOperator<'a> {
    pub fn new(asm: &'a NonlocalAssembly, b: &CoefficientField, q: &CoefficientField) -> Result<Self> {
        let matrix = system_matrix(asm, b, q)?;
        Self::from_matrix(asm, b, q, matrix)
    }

    /// Builds the operator from a precomputed interior matrix (must correspond to `b`, `q`).
    pub fn from_matrix(
        asm: &'a NonlocalAssembly,
        b: &CoefficientField,
        q: &CoefficientField,
        matrix: DMatrix<f64>,
    ) -> Result<Self> {
        let spectrum = SpectrumReport::of_symmetric(&matrix);
        if !spectrum.passed {
            return Err(Error::SingularSystem {
                sigma_min: spectrum.smallest_singular_value,
                threshold: spectrum.threshold,
            });
        }
        let lu = matrix.clone().lu();
        Ok(ForwardOperator {
            asm,
            b: b.clone(),
            q: q.clone(),
            matrix,
            spectrum,
            lu,
        })
    }

    /// Right-hand side `<F, phi_i> - (K f)_i` on interior hats.
    pub fn rhs(&self, f: &ExteriorDatum, source: Option<&FeFunction>) -> DVector<f64> {
        let mesh = &self.asm.mesh;
        let n = mesh.n_interior();
        let first = mesh.i_lo + 1;
        let mut rhs = DVector::zeros(n);
        if let Some(src) = source {
            let closure = src.dof.rows(mesh.i_lo, mesh.i_hi - mesh.i_lo + 1).into_owned();
            let full = &self.asm.mass_closure * closure;
            rhs += full.rows(1, n);
        }
        if !f.is_zero() {
            for (j, &fj) in f.values.dof.iter().enumerate() {
                if fj != 0.0 {
                    rhs.axpy(-fj, &self.asm.k_full.column(j).rows(first, n), 1.0);
                }
            }
        }
        rhs
    }

    /// Interior dofs of `u - f` for a given right-hand side.
    pub fn solve_rhs(&self, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let v = self
            .lu
            .solve(rhs)
            .ok_or(Error::SingularSystem {
                sigma_min: self.spectrum.smallest_singular_value,
                threshold: self.spectrum.threshold,
            })?;
        let rn = rhs.norm();
        let res = if rn > 0.0 { (&self.matrix * &v - rhs).norm() / rn } else { (&self.matrix * &v).norm() };
        Ok((v, res))
    }

    pub fn solve(&self, f: &ExteriorDatum, source: Option<&FeFunction>) -> Result<Solution> {
        let rhs = self.rhs(f, source);
        let (v, residual) = self.solve_rhs(&rhs)?;
        let mut u = f.values.clone();
        let first = self.asm.mesh.i_lo + 1;
        u.dof.rows_mut(first, v.len()).copy_from(&v);
        Ok(Solution {
            u,
            residual,
            cond_estimate: self.spectrum.condition(),
        })
    }
}

pub fn solve_forward(asm: &NonlocalAssembly, p: &ForwardProblem) -> Result<Solution> {
    ForwardOperator::new(asm, &p.b, &p.q)?.solve(&p.f, p.source.as_ref())
}

/// Discrete `H^t` norm: `L^2` norm on the line plus the full Gagliardo seminorm.
pub fn ht_norm(asm: &NonlocalAssembly, u: &FeFunction) -> f64 {
    let c = frac_constant(asm.params.t).value;
    let semi = (2.0 / c * quad_form(&asm.k_full, &u.dof)).max(0.0).sqrt();
    u.l2_norm(&asm.mesh) + semi
}

/// Max of `||u||_{H^t} / (||F||_{L^2} + ||f||_{H^t})` over random data.
pub fn stability_probe(
    op: &ForwardOperator<'_>,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let asm = op.asm;
    let mesh = &asm.mesh;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ext: Vec<usize> = (0..mesh.n_nodes())
        .filter(|&i| mesh.classes[i] == NodeClass::Exterior && mesh.geom.dist_to_closure(mesh.nodes[i]) <= 1.0)
        .collect();
    let mut worst = 0.0f64;
    for _ in 0..n_samples {
        let mut fv = FeFunction::zeros(mesh);
        // a few random bumps so the data stay smooth-ish
        for _ in 0..3 {
            let ci = ext[rng.random_range(0..ext.len())];
            let amp: f64 = rng.random_range(-1.0..1.0);
            fv.dof[ci] += amp;
        }
        let f = ExteriorDatum::new(mesh, "probe", fv)?;
        let mut src = FeFunction::zeros(mesh);
        for i in mesh.interior_nodes() {
            src.dof[i] = rng.random_range(-1.0..1.0);
        }
        let sol = op.solve(&f, Some(&src))?;
        let denom = src.l2_norm_on(mesh, mesh.domain_elements()) + ht_norm(asm, &f.values);
        if denom > 0.0 {
            worst = worst.max(ht_norm(asm, &sol.u) / denom);
        }
    }
    Ok(worst)
}
