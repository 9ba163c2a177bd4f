//! Problems for the regional operator `(-Delta)^a_Omega` and the Runge
//! approximation drivers built on them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{closure_mass_matrix, pair_matrix};
use crate::error::{Error, Result};
use crate::forward::SpectrumReport;
use crate::io::{fmt_num, CsvTable};
use crate::kernel::{frac_constant, FracExponent};
use crate::mesh::{FeFunction, Mesh1D};

/// Union of at most two disjoint open intervals, mesh aligned, at least two
/// cells inside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub intervals: Vec<(f64, f64)>,
}

const ALIGN_TOL: f64 = 1e-9;

impl Subdomain {
    pub fn new(mesh: &Mesh1D, mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() || intervals.len() > 2 {
            return Err(Error::Config(format!(
                "a subdomain is one or two intervals, got {}",
                intervals.len()
            )));
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(a, b) in &intervals {
            if !(b > a) {
                return Err(Error::Config(format!("empty subdomain interval ({a}, {b})")));
            }
            for x in [a, b] {
                let i = mesh.nearest_node(x);
                if (mesh.nodes[i] - x).abs() > ALIGN_TOL * mesh.h {
                    return Err(Error::Config(format!("subdomain endpoint {x} is not a mesh node")));
                }
            }
            let g = &mesh.geom;
            if a < g.omega_lo + 2.0 * mesh.h - ALIGN_TOL || b > g.omega_hi - 2.0 * mesh.h + ALIGN_TOL {
                return Err(Error::SupportViolation(format!(
                    "subdomain ({a}, {b}) must stay two cells inside the domain (compact containment)"
                )));
            }
        }
        if intervals.len() == 2 && intervals[0].1 >= intervals[1].0 {
            return Err(Error::Config("subdomain intervals must be disjoint".into()));
        }
        Ok(Subdomain { intervals })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| x > a && x < b)
    }

    /// Mesh indices of nodes inside the open subdomain.
    pub fn open_nodes(&self, mesh: &Mesh1D) -> Vec<usize> {
        mesh.closure_nodes()
            .filter(|&i| {
                let x = mesh.nodes[i];
                self.intervals
                    .iter()
                    .any(|&(a, b)| x > a + ALIGN_TOL * mesh.h && x < b - ALIGN_TOL * mesh.h)
            })
            .collect()
    }

    /// Mesh indices of nodes of the closed subdomain.
    pub fn closed_nodes(&self, mesh: &Mesh1D) -> Vec<usize> {
        mesh.closure_nodes()
            .filter(|&i| {
                let x = mesh.nodes[i];
                self.intervals
                    .iter()
                    .any(|&(a, b)| x >= a - ALIGN_TOL * mesh.h && x <= b + ALIGN_TOL * mesh.h)
            })
            .collect()
    }

    /// Closed-domain nodes outside the open subdomain.
    pub fn complement_nodes(&self, mesh: &Mesh1D) -> Vec<usize> {
        let open = self.open_nodes(mesh);
        mesh.closure_nodes().filter(|i| !open.contains(i)).collect()
    }

    pub fn elements(&self, mesh: &Mesh1D) -> Vec<usize> {
        mesh.domain_elements()
            .filter(|&e| self.contains(0.5 * (mesh.nodes[e] + mesh.nodes[e + 1])))
            .collect()
    }

    pub fn is_disjoint_from(&self, other: &Subdomain) -> bool {
        self.intervals
            .iter()
            .all(|&(a, b)| other.intervals.iter().all(|&(c, d)| b <= c || d <= a))
    }
}

/// Regional form and mass on the closed-domain nodes (local index `i - i_lo`).
#[derive(Debug, Clone)]
pub struct RegionalAssembly {
    pub a: FracExponent,
    pub k_reg: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub mesh: Mesh1D,
}

/// `(C/2) \int_Omega \int_Omega (phi_i(x)-phi_i(y))(phi_j(x)-phi_j(y)) |x-y|^{-1-2a}`.
pub fn assemble_regional_form(mesh: &Mesh1D, a: FracExponent) -> Result<RegionalAssembly> {
    let c = frac_constant(a).value;
    let k_reg = pair_matrix(mesh, a, mesh.domain_elements())? * (0.5 * c);
    Ok(RegionalAssembly {
        a,
        k_reg,
        mass: closure_mass_matrix(mesh, None),
        mesh: mesh.clone(),
    })
}

fn sub_block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn local(mesh: &Mesh1D, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| i - mesh.i_lo).collect()
}

/// Solves a symmetric block system with the eigenvalue guard; relative residual returned.
fn guarded_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let spec = SpectrumReport::of_symmetric(a);
    if !spec.passed {
        return Err(Error::SingularSystem {
            sigma_min: spec.smallest_singular_value,
            threshold: spec.threshold,
        });
    }
    let v = a.clone().lu().solve(rhs).ok_or(Error::SingularSystem {
        sigma_min: spec.smallest_singular_value,
        threshold: spec.threshold,
    })?;
    let rn = rhs.norm();
    let res = if rn > 0.0 { (a * &v - rhs).norm() / rn } else { 0.0 };
    Ok((v, res))
}

/// Regional solution with its relative algebraic residual.
#[derive(Debug, Clone)]
pub struct RegionalSolution {
    pub u: FeFunction,
    pub residual: f64,
}

impl RegionalAssembly {
    fn closure_values(&self, f: &FeFunction) -> DVector<f64> {
        let m = &self.mesh;
        f.dof.rows(m.i_lo, m.i_hi - m.i_lo + 1).into_owned()
    }

    fn to_full(&self, closure: &DVector<f64>) -> FeFunction {
        let mut u = FeFunction::zeros(&self.mesh);
        u.dof.rows_mut(self.mesh.i_lo, closure.len()).copy_from(closure);
        u
    }

    /// `(-Delta)^a_Omega u = f` in the domain, `u = g` on its boundary nodes (`a > 1/2`).
    pub fn solve_dirichlet(&self, f: &FeFunction, g: Option<&FeFunction>) -> Result<RegionalSolution> {
        if self.a.value() <= 0.5 {
            return Err(Error::IllPosed(format!(
                "regional Dirichlet problem needs a > 1/2 (got {}); use the shifted problem",
                self.a.value()
            )));
        }
        let n = self.k_reg.nrows();
        let inner: Vec<usize> = (1..n - 1).collect();
        let mut lift = DVector::zeros(n);
        if let Some(g) = g {
            let gv = self.closure_values(g);
            lift[0] = gv[0];
            lift[n - 1] = gv[n - 1];
        }
        let rhs_full = &self.mass * self.closure_values(f) - &self.k_reg * &lift;
        let rhs = DVector::from_iterator(inner.len(), inner.iter().map(|&i| rhs_full[i]));
        let a = sub_block(&self.k_reg, &inner, &inner);
        let (v, residual) = guarded_solve(&a, &rhs)?;
        let mut u = lift;
        for (k, &i) in inner.iter().enumerate() {
            u[i] = v[k];
        }
        Ok(RegionalSolution { u: self.to_full(&u), residual })
    }

    /// `(-Delta)^a_Omega u + eta u = f` with natural conditions, any `a`.
    pub fn solve_shifted(&self, f: &FeFunction, eta: f64) -> Result<RegionalSolution> {
        if !(eta > 0.0) {
            return Err(Error::Config(format!("shift eta must be positive, got {eta}")));
        }
        let a = &self.k_reg + &self.mass * eta;
        let rhs = &self.mass * self.closure_values(f);
        let (v, residual) = guarded_solve(&a, &rhs)?;
        Ok(RegionalSolution { u: self.to_full(&v), residual })
    }

    /// Factorised exterior-value problem on a subdomain.
    pub fn exterior_solver(&self, sub: &Subdomain) -> Result<RegionalExteriorSolver<'_>> {
        RegionalExteriorSolver::new(self, sub)
    }

    /// `(-Delta)^a_Omega u = f` in `sub`, `u = g` on the rest of the closed domain.
    pub fn solve_exterior(&self, sub: &Subdomain, f: &FeFunction, g: &FeFunction) -> Result<RegionalSolution> {
        self.exterior_solver(sub)?.solve(f, g)
    }
}

pub struct RegionalExteriorSolver<'a> {
    ra: &'a RegionalAssembly,
    /// local indices of unknowns
    unknowns: Vec<usize>,
    /// local indices of prescribed nodes
    fixed: Vec<usize>,
    block: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub spectrum: SpectrumReport,
}

impl<'a> RegionalExteriorSolver<'a> {
    fn new(ra: &'a RegionalAssembly, sub: &Subdomain) -> Result<Self> {
        let m = &ra.mesh;
        let unknowns = local(m, &sub.open_nodes(m));
        let fixed = local(m, &sub.complement_nodes(m));
        let block = sub_block(&ra.k_reg, &unknowns, &unknowns);
        let spectrum = SpectrumReport::of_symmetric(&block);
        if !spectrum.passed {
            return Err(Error::SingularSystem {
                sigma_min: spectrum.smallest_singular_value,
                threshold: spectrum.threshold,
            });
        }
        let lu = block.clone().lu();
        Ok(RegionalExteriorSolver {
            ra,
            unknowns,
            fixed,
            block,
            lu,
            spectrum,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.unknowns.len()
    }

    /// Unknown values for `rhs` given in closure-local numbering.
    fn solve_closure_rhs(&self, rhs_full: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let rhs = DVector::from_iterator(self.unknowns.len(), self.unknowns.iter().map(|&i| rhs_full[i]));
        let v = self.lu.solve(&rhs).ok_or(Error::SingularSystem {
            sigma_min: self.spectrum.smallest_singular_value,
            threshold: self.spectrum.threshold,
        })?;
        let rn = rhs.norm();
        let res = if rn > 0.0 { (&self.block * &v - &rhs).norm() / rn } else { 0.0 };
        Ok((v, res))
    }

    pub fn solve(&self, f: &FeFunction, g: &FeFunction) -> Result<RegionalSolution> {
        let ra = self.ra;
        let mut lift = DVector::zeros(ra.k_reg.nrows());
        let gv = ra.closure_values(g);
        for &i in &self.fixed {
            lift[i] = gv[i];
        }
        // f only matters through the test functions of the unknowns
        let rhs_full = &ra.mass * ra.closure_values(f) - &ra.k_reg * &lift;
        let (v, residual) = self.solve_closure_rhs(&rhs_full)?;
        let mut u = lift;
        for (k, &i) in self.unknowns.iter().enumerate() {
            u[i] = v[k];
        }
        Ok(RegionalSolution { u: ra.to_full(&u), residual })
    }
}

/// Radical-inverse (base 2) ordering of `0..n`: each prefix is spread over the range.
pub fn van_der_corput_order(n: usize) -> Vec<usize> {
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(n);
    let mut k: u64 = 0;
    while out.len() < n {
        let mut x = 0.0;
        let mut denom = 1.0;
        let mut kk = k;
        while kk > 0 {
            denom *= 2.0;
            x += (kk & 1) as f64 / denom;
            kk >>= 1;
        }
        let i = ((x * n as f64).floor() as usize).min(n - 1);
        if !seen[i] {
            seen[i] = true;
            out.push(i);
        }
        k += 1;
        if k > 64 * n as u64 + 64 {
            // fill any stragglers in order
            for (i, s) in seen.iter_mut().enumerate() {
                if !*s {
                    *s = true;
                    out.push(i);
                }
            }
        }
    }
    out
}

/// Tikhonov regularisation used by the density drivers.
pub const RUNGE_EPS: f64 = 1e-10;

/// `argmin ||A c - b||^2 + eps ||c||^2` over unit-normalised columns, through the
/// SVD of the stacked system `[A; sqrt(eps) I]`. Coefficients are returned for
/// the original columns.
pub fn regularized_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, eps: f64) -> DVector<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DVector::zeros(0);
    }
    let scales: Vec<f64> = (0..n)
        .map(|j| {
            let s = a.column(j).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut stacked = DMatrix::zeros(m + n, n);
    for j in 0..n {
        for i in 0..m {
            stacked[(i, j)] = a[(i, j)] / scales[j];
        }
        stacked[(m + j, j)] = eps.sqrt();
    }
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(b);
    let svd = stacked.svd(true, true);
    let c = svd.solve(&rhs, 0.0).expect("SVD with both factors");
    DVector::from_iterator(n, (0..n).map(|j| c[j] / scales[j]))
}

/// Cholesky factor `L` of a mass matrix, so `||L^T v|| = ||v||_{L^2}`.
fn mass_factor(mass: &DMatrix<f64>) -> DMatrix<f64> {
    mass.clone()
        .cholesky()
        .expect("mass matrix is positive definite")
        .l()
}

/// Error curve of a density experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RungeReport {
    pub basis_sizes: Vec<usize>,
    pub errors: Vec<f64>,
    /// coefficients at the largest basis
    pub coefficients: Vec<f64>,
}

impl RungeReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["basis_size", "achieved_error"]);
        for (n, e) in self.basis_sizes.iter().zip(&self.errors) {
            t.push(vec![n.to_string(), fmt_num(*e)]);
        }
        t
    }

    pub fn final_error(&self) -> f64 {
        *self.errors.last().unwrap_or(&f64::NAN)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

/// Relative `L^2` errors of the best approximations of `target` by the columns
/// `0..n` for each `n` in `sizes`. Columns and target are nodal values on a
/// node set with mass matrix `mass`.
pub fn nested_approximation(
    columns: &DMatrix<f64>,
    target: &DVector<f64>,
    mass: &DMatrix<f64>,
    sizes: &[usize],
    eps: f64,
) -> RungeReport {
    let l = mass_factor(mass);
    let lt = l.transpose();
    let a = &lt * columns;
    let b = &lt * target;
    let tn = b.norm();
    let mut errors = Vec::with_capacity(sizes.len());
    let mut coefficients = Vec::new();
    for &n in sizes {
        let n = n.min(a.ncols());
        let sub = a.columns(0, n).into_owned();
        let c = regularized_least_squares(&sub, &b, eps);
        let r = if n == 0 { b.clone() } else { &sub * &c - &b };
        errors.push(if tn > 0.0 { r.norm() / tn } else { r.norm() });
        coefficients = c.iter().copied().collect();
    }
    RungeReport {
        basis_sizes: sizes.to_vec(),
        errors,
        coefficients,
    }
}

/// Nodal values on `nodes` of `u`.
pub(crate) fn gather(u: &FeFunction, nodes: &[usize]) -> DVector<f64> {
    DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| u.dof[i]))
}

/// Mass matrix of the closed subdomain on its nodes.
pub(crate) fn subdomain_mass(mesh: &Mesh1D, sub: &Subdomain, nodes: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nodes.len(), nodes.len());
    let pos = |i: usize| nodes.iter().position(|&n| n == i);
    for e in sub.elements(mesh) {
        let (pa, pb) = (pos(e), pos(e + 1));
        if let (Some(a), Some(b)) = (pa, pb) {
            let h = mesh.h;
            m[(a, a)] += h / 3.0;
            m[(b, b)] += h / 3.0;
            m[(a, b)] += h / 6.0;
            m[(b, a)] += h / 6.0;
        }
    }
    m
}

/// Basis of data hats on `nodes` (mesh indices) in van der Corput order.
pub fn hat_basis(nodes: &[usize]) -> Vec<usize> {
    van_der_corput_order(nodes.len()).into_iter().map(|k| nodes[k]).collect()
}

/// Exterior data for the density driver: the constant first, then hats on the
/// complement ordered by distance to the subdomain.
pub fn data_basis(mesh: &Mesh1D, sub: &Subdomain) -> Vec<FeFunction> {
    let nodes = sub.complement_nodes(mesh);
    let mut out = Vec::with_capacity(nodes.len() + 1);
    let mut one = FeFunction::zeros(mesh);
    for &i in &nodes {
        one.dof[i] = 1.0;
    }
    out.push(one);
    let dist = |i: usize| {
        let x = mesh.nodes[i];
        sub.intervals
            .iter()
            .map(|&(a, b)| if x <= a { a - x } else if x >= b { x - b } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    };
    let mut order = nodes.clone();
    order.sort_by(|&i, &j| dist(i).total_cmp(&dist(j)).then(i.cmp(&j)));
    for i in order {
        let mut g = FeFunction::zeros(mesh);
        g.dof[i] = 1.0;
        out.push(g);
    }
    out
}

/// Density of `{ v_g restricted to sub }` over data `g` on the complement of `sub`.
pub fn runge_approximate(
    ra: &RegionalAssembly,
    sub: &Subdomain,
    target: &dyn Fn(f64) -> f64,
    sizes: &[usize],
) -> Result<RungeReport> {
    let mesh = &ra.mesh;
    let solver = ra.exterior_solver(sub)?;
    let data = data_basis(mesh, sub);
    let nmax = sizes.iter().copied().max().unwrap_or(0).min(data.len());
    let obs_nodes = sub.closed_nodes(mesh);
    let zero = FeFunction::zeros(mesh);
    let cols: Vec<DVector<f64>> = data[..nmax]
        .par_iter()
        .map(|g| solver.solve(&zero, g).map(|s| gather(&s.u, &obs_nodes)))
        .collect::<Result<_>>()?;
    let columns = DMatrix::from_columns(&cols);
    let columns = if cols.is_empty() { DMatrix::zeros(obs_nodes.len(), 0) } else { columns };
    let tgt = DVector::from_iterator(obs_nodes.len(), obs_nodes.iter().map(|&i| target(mesh.nodes[i])));
    let mass = subdomain_mass(mesh, sub, &obs_nodes);
    Ok(nested_approximation(&columns, &tgt, &mass, sizes, RUNGE_EPS))
}

/// Density on `o1` of solutions that are regional-harmonic in `o1`, driven by
/// sources supported in `o2`, and zero elsewhere in the domain.
pub fn runge_two_sets(
    ra: &RegionalAssembly,
    o1: &Subdomain,
    o2: &Subdomain,
    target: &dyn Fn(f64) -> f64,
    sizes: &[usize],
) -> Result<RungeReport> {
    if !o1.is_disjoint_from(o2) {
        return Err(Error::Config("source and target sets must be disjoint".into()));
    }
    let mesh = &ra.mesh;
    let mut ivs = o1.intervals.clone();
    ivs.extend(o2.intervals.iter().copied());
    let union = Subdomain::new(mesh, ivs)?;
    let solver = ra.exterior_solver(&union)?;
    let sources = hat_basis(&o2.open_nodes(mesh));
    let nmax = sizes.iter().copied().max().unwrap_or(0).min(sources.len());
    let obs_nodes = o1.closed_nodes(mesh);
    let zero = FeFunction::zeros(mesh);
    let cols: Vec<DVector<f64>> = sources[..nmax]
        .par_iter()
        .map(|&j| {
            let mut f = FeFunction::zeros(mesh);
            f.dof[j] = 1.0;
            solver.solve(&f, &zero).map(|s| gather(&s.u, &obs_nodes))
        })
        .collect::<Result<_>>()?;
    let columns = if cols.is_empty() {
        DMatrix::zeros(obs_nodes.len(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    let tgt = DVector::from_iterator(obs_nodes.len(), obs_nodes.iter().map(|&i| target(mesh.nodes[i])));
    let mass = subdomain_mass(mesh, o1, &obs_nodes);
    Ok(nested_approximation(&columns, &tgt, &mass, sizes, RUNGE_EPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DomainGeometry;
    use crate::mesh::build_mesh;

    fn mesh(h: f64) -> Mesh1D {
        build_mesh(&DomainGeometry::new(-1.0, 1.0, 4.0).unwrap(), h).unwrap()
    }

    fn e(a: f64) -> FracExponent {
        FracExponent::new(a).unwrap()
    }

    #[test]
    fn regional_form_annihilates_constants() {
        let m = mesh(0.0625);
        let ra = assemble_regional_form(&m, e(0.4)).unwrap();
        let ones = DVector::from_element(ra.k_reg.nrows(), 1.0);
        assert!((&ra.k_reg * ones).amax() <= 1e-8 * ra.k_reg.amax());
        assert_eq!(ra.k_reg, ra.k_reg.transpose());
    }

    #[test]
    fn dirichlet_rejects_low_order() {
        let m = mesh(0.125);
        let ra = assemble_regional_form(&m, e(0.4)).unwrap();
        let f = FeFunction::on_domain(&m, |_| 1.0);
        assert!(matches!(ra.solve_dirichlet(&f, None), Err(Error::IllPosed(_))));
    }

    #[test]
    fn dirichlet_symmetry_and_self_adjointness() {
        let m = mesh(0.0625);
        let ra = assemble_regional_form(&m, e(0.75)).unwrap();
        let one = FeFunction::on_domain(&m, |_| 1.0);
        let s = ra.solve_dirichlet(&one, None).unwrap();
        assert!(s.residual < 1e-10);
        for i in m.closure_nodes() {
            let j = m.i_lo + m.i_hi - i;
            assert!((s.u.dof[i] - s.u.dof[j]).abs() < 1e-10 * s.u.dof.amax());
        }
        let f2 = FeFunction::on_domain(&m, |x| x * x + x);
        let s2 = ra.solve_dirichlet(&f2, None).unwrap();
        let mc = &ra.mass;
        let c = |u: &FeFunction| u.dof.rows(m.i_lo, mc.nrows()).into_owned();
        let l = c(&s.u).dot(&(mc * c(&f2)));
        let r = c(&s2.u).dot(&(mc * c(&one)));
        assert!((l - r).abs() <= 1e-10 * l.abs());
    }

    #[test]
    fn shifted_constant_and_bound() {
        let m = mesh(0.0625);
        let ra = assemble_regional_form(&m, e(0.3)).unwrap();
        let eta = 2.5;
        let f = FeFunction::on_domain(&m, |_| eta);
        let s = ra.solve_shifted(&f, eta).unwrap();
        for i in m.closure_nodes() {
            assert!((s.u.dof[i] - 1.0).abs() < 1e-10);
        }
        let mut hat = FeFunction::zeros(&m);
        hat.dof[m.nearest_node(0.25)] = 1.0;
        let s = ra.solve_shifted(&hat, 1.0).unwrap();
        let dom = m.domain_elements();
        assert!(s.u.l2_norm_on(&m, dom.clone()) <= hat.l2_norm_on(&m, dom) * (1.0 + 1e-12));
    }

    #[test]
    fn exterior_constants_are_harmonic() {
        let m = mesh(0.0625);
        let ra = assemble_regional_form(&m, e(0.4)).unwrap();
        let sub = Subdomain::new(&m, vec![(-0.5, 0.5)]).unwrap();
        let g = FeFunction::on_domain(&m, |_| 1.0);
        let z = FeFunction::zeros(&m);
        let s = ra.solve_exterior(&sub, &z, &g).unwrap();
        for i in m.closure_nodes() {
            assert!((s.u.dof[i] - 1.0).abs() < 1e-9);
        }
        let s0 = ra.solve_exterior(&sub, &z, &z).unwrap();
        assert!(s0.u.dof.amax() == 0.0);
    }

    #[test]
    fn subdomain_validation() {
        let m = mesh(0.0625);
        assert!(Subdomain::new(&m, vec![(-0.95, 0.5)]).is_err());
        assert!(Subdomain::new(&m, vec![(-0.5, 0.1), (0.0, 0.5)]).is_err());
        assert!(Subdomain::new(&m, vec![(-0.5, 0.11)]).is_err());
        let s = Subdomain::new(&m, vec![(0.25, 0.5), (-0.5, -0.25)]).unwrap();
        assert_eq!(s.intervals[0], (-0.5, -0.25));
        assert_eq!(s.open_nodes(&m).len(), 6);
        assert_eq!(s.closed_nodes(&m).len(), 10);
    }

    #[test]
    fn van_der_corput_is_a_permutation() {
        for n in [1, 2, 7, 33, 100] {
            let mut o = van_der_corput_order(n);
            assert_eq!(o[0], 0);
            o.sort();
            assert_eq!(o, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn least_squares_recovers_in_span_target() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0, 3.0, 1.0]);
        let c = DVector::from_vec(vec![0.5, -2.0]);
        let b = &a * &c;
        let got = regularized_least_squares(&a, &b, 1e-14);
        assert!((got - c).norm() < 1e-8);
    }
}
