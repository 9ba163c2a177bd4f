//! Recovery of `(b, q)` from exterior measurements, single-measurement
//! diagnostics and the density demonstrations behind them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::assembly::{weighted_halfop_form, weighted_mass_matrix, CoefficientField, NonlocalAssembly};
use crate::dn::{DnDatum, NeumannObserver, ObservationSet};
use crate::error::{Error, Result};
use crate::forward::{ExteriorDatum, ForwardOperator, Solution, SpectrumReport};
use crate::io::{fmt_num, CsvTable};
use crate::mesh::FeFunction;
use crate::regional::{hat_basis, nested_approximation, RungeReport, Subdomain, RUNGE_EPS};

/// Relative support-detection threshold.
pub const TAU_SUPP: f64 = 1e-8;
pub const MAX_HALVINGS: usize = 20;
pub const DIVERGENCE_STREAK: usize = 5;
/// Stop once the gradient norm falls below this fraction of its initial value.
pub const GRAD_TOL: f64 = 1e-9;
/// Data misfit below this fraction of `1/2 ||data||^2` counts as converged.
pub const MISFIT_TOL: f64 = 1e-24;

/// Exterior sources and their measured data.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub sources: Vec<ExteriorDatum>,
    pub data: Vec<DnDatum>,
}

impl MeasurementSet {
    pub fn new(sources: Vec<ExteriorDatum>, data: Vec<DnDatum>) -> Result<Self> {
        if sources.len() != data.len() || sources.is_empty() {
            return Err(Error::Dimension(format!(
                "{} sources with {} data",
                sources.len(),
                data.len()
            )));
        }
        for (s, d) in sources.iter().zip(&data) {
            if s.id != d.source_id {
                return Err(Error::Config(format!(
                    "datum tagged '{}' paired with source '{}'",
                    d.source_id, s.id
                )));
            }
        }
        Ok(MeasurementSet { sources, data })
    }

    /// Noiseless data generated with the given coefficients.
    pub fn synthesize(
        asm: &NonlocalAssembly,
        obs: &ObservationSet,
        sources: Vec<ExteriorDatum>,
        b: &CoefficientField,
        q: &CoefficientField,
    ) -> Result<Self> {
        let op = ForwardOperator::new(asm, b, q)?;
        let observer = NeumannObserver::new(&asm.mesh, asm.params.t, obs)?;
        let data = sources
            .iter()
            .map(|f| {
                let s = op.solve(f, None)?;
                Ok(DnDatum {
                    obs: obs.clone(),
                    values: observer.apply(&asm.mesh, &s.u),
                    source_id: f.id.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Self::new(sources, data)
    }

    /// Copy with additive Gaussian noise of standard deviation `level * |value|`.
    pub fn with_relative_noise(&self, level: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for d in &mut out.data {
            for v in d.values.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += level * v.abs() * z;
            }
        }
        out
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["x", "value", "source"]);
        for d in &self.data {
            d.to_csv_rows(&mut t);
        }
        t
    }
}

/// Source bumps, one per equal cell of `(lo, hi)`, each supported in its cell.
pub fn source_family(asm: &NonlocalAssembly, lo: f64, hi: f64, count: usize) -> Result<Vec<ExteriorDatum>> {
    let w = (hi - lo) / count as f64;
    (0..count)
        .map(|k| {
            let c = lo + (k as f64 + 0.5) * w;
            ExteriorDatum::bump(&asm.mesh, format!("f{k:02}"), c, 0.5 * w, 1.0)
        })
        .collect()
}

/// Piecewise-constant unknowns on fixed cells: `theta = [b cells, q cells]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLayout {
    pub b_edges: Vec<f64>,
    pub q_edges: Vec<f64>,
}

impl CellLayout {
    pub fn uniform(b_lo: f64, b_hi: f64, nb: usize, q_lo: f64, q_hi: f64, nq: usize) -> Self {
        let edges = |lo: f64, hi: f64, n: usize| (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
        CellLayout {
            b_edges: edges(b_lo, b_hi, nb),
            q_edges: edges(q_lo, q_hi, nq),
        }
    }

    pub fn nb(&self) -> usize {
        self.b_edges.len() - 1
    }

    pub fn nq(&self) -> usize {
        self.q_edges.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nb() + self.nq()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fields(&self, theta: &[f64]) -> (CoefficientField, CoefficientField) {
        let nb = self.nb();
        (
            CoefficientField {
                edges: self.b_edges.clone(),
                values: theta[..nb].to_vec(),
            },
            CoefficientField {
                edges: self.q_edges.clone(),
                values: theta[nb..].to_vec(),
            },
        )
    }

    pub fn theta(&self, b: &CoefficientField, q: &CoefficientField) -> Vec<f64> {
        let mut th: Vec<f64> = (0..self.nb())
            .map(|k| b.eval(0.5 * (self.b_edges[k] + self.b_edges[k + 1])))
            .collect();
        th.extend((0..self.nq()).map(|k| q.eval(0.5 * (self.q_edges[k] + self.q_edges[k + 1]))));
        th
    }
}

/// Forward map `theta -> weighted Neumann data` with per-cell matrices cached.
pub struct InverseModel<'a> {
    pub asm: &'a NonlocalAssembly,
    pub layout: CellLayout,
    pub observer: NeumannObserver,
    k_int: DMatrix<f64>,
    kb_cells: Vec<DMatrix<f64>>,
    mq_cells: Vec<DMatrix<f64>>,
    n_int: DMatrix<f64>,
    sqrt_w: Vec<f64>,
    sources: Vec<ExteriorDatum>,
    /// `-(K f)` on interior hats
    src_rhs: Vec<DVector<f64>>,
    /// `m f` at the observation points
    src_ext: Vec<DVector<f64>>,
}

impl<'a> InverseModel<'a> {
    pub fn new(
        asm: &'a NonlocalAssembly,
        layout: CellLayout,
        obs: &ObservationSet,
        sources: &[ExteriorDatum],
    ) -> Result<Self> {
        let mesh = &asm.mesh;
        let indicator = |edges: &[f64], k: usize| CoefficientField {
            edges: vec![edges[k], edges[k + 1]],
            values: vec![1.0],
        };
        let mut kb_cells = Vec::with_capacity(layout.nb());
        for k in 0..layout.nb() {
            let c = indicator(&layout.b_edges, k);
            c.check_support(mesh, "b")?;
            kb_cells.push(weighted_halfop_form(&asm.r_half, &asm.quad, &c));
        }
        let mut mq_cells = Vec::with_capacity(layout.nq());
        for k in 0..layout.nq() {
            let c = indicator(&layout.q_edges, k);
            c.check_support(mesh, "q")?;
            mq_cells.push(weighted_mass_matrix(mesh, Some(&c)));
        }
        let observer = NeumannObserver::new(mesh, asm.params.t, obs)?;
        let n_int = observer.interior_block();
        let sqrt_w = obs.weights.iter().map(|w| w.sqrt()).collect();
        let first = mesh.i_lo + 1;
        let n = mesh.n_interior();
        let src_rhs = sources
            .iter()
            .map(|f| {
                let mut r = DVector::zeros(n);
                for (j, &fj) in f.values.dof.iter().enumerate() {
                    if fj != 0.0 {
                        r.axpy(-fj, &asm.k_full.column(j).rows(first, n), 1.0);
                    }
                }
                r
            })
            .collect();
        let src_ext = sources.iter().map(|f| observer.exterior_part(mesh, f)).collect();
        Ok(InverseModel {
            asm,
            layout,
            observer,
            k_int: asm.k_interior(),
            kb_cells,
            mq_cells,
            n_int,
            sqrt_w,
            sources: sources.to_vec(),
            src_rhs,
            src_ext,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn matrix(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut a = self.k_int.clone();
        let nb = self.layout.nb();
        for (k, m) in self.kb_cells.iter().enumerate() {
            if theta[k] != 0.0 {
                a += m * theta[k];
            }
        }
        for (k, m) in self.mq_cells.iter().enumerate() {
            if theta[nb + k] != 0.0 {
                a += m * theta[nb + k];
            }
        }
        a
    }

    pub fn spectrum(&self, theta: &[f64]) -> SpectrumReport {
        SpectrumReport::of_symmetric(&self.matrix(theta))
    }

    /// Passes the guard and returns the factorised operator.
    pub fn operator(&self, theta: &[f64]) -> Result<ForwardOperator<'a>> {
        let (b, q) = self.layout.fields(theta);
        ForwardOperator::from_matrix(self.asm, &b, &q, self.matrix(theta))
    }

    /// Interior solution dofs for every source.
    pub fn interior_solutions(&self, theta: &[f64]) -> Result<Vec<DVector<f64>>> {
        let op = self.operator(theta)?;
        self.src_rhs.iter().map(|r| op.solve_rhs(r).map(|(v, _)| v)).collect()
    }

    pub fn solutions(&self, theta: &[f64]) -> Result<Vec<Solution>> {
        let op = self.operator(theta)?;
        self.sources.iter().map(|f| op.solve(f, None)).collect()
    }

    /// Predicted Neumann values for every source.
    pub fn predict(&self, theta: &[f64]) -> Result<Vec<DVector<f64>>> {
        let us = self.interior_solutions(theta)?;
        Ok(us
            .iter()
            .zip(&self.src_ext)
            .map(|(v, e)| e - &self.n_int * v)
            .collect())
    }

    /// Stacked residual weighted by the square roots of the observation weights.
    pub fn residual(&self, theta: &[f64], data: &MeasurementSet) -> Result<DVector<f64>> {
        let pred = self.predict(theta)?;
        let nobs = self.sqrt_w.len();
        let mut r = DVector::zeros(nobs * pred.len());
        for (s, (p, d)) in pred.iter().zip(&data.data).enumerate() {
            for k in 0..nobs {
                r[s * nobs + k] = self.sqrt_w[k] * (p[k] - d.values[k]);
            }
        }
        Ok(r)
    }

    /// Forward-difference Jacobian of the residual.
    pub fn jacobian(&self, theta: &[f64], data: &MeasurementSet, r0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = theta.len();
        let cols: Vec<DVector<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut th = theta.to_vec();
                let d = 1e-7 * theta[j].abs().max(1.0);
                th[j] += d;
                let r = self.residual(&th, data)?;
                Ok((r - r0) / d)
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_columns(&cols))
    }
}

/// `1/2 ||r||^2 + lambda ||theta||^2`.
pub fn objective(r: &DVector<f64>, theta: &[f64], lambda: f64) -> f64 {
    0.5 * r.norm_squared() + lambda * theta.iter().map(|v| v * v).sum::<f64>()
}

/// Per-cell and per-point zero sets of a single measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    /// `|u| < tau` on the whole cell
    pub q_unrecoverable: Vec<bool>,
    /// `|(-Delta)^{s/2}_Omega u| < tau` on the whole cell
    pub b_unrecoverable: Vec<bool>,
    /// per quadrature node
    pub u_zero: Vec<bool>,
    pub halfop_zero: Vec<bool>,
    /// every quadrature node lies in one of the two zero sets
    pub covers_domain: bool,
}

pub fn diagnose(asm: &NonlocalAssembly, layout: &CellLayout, sol: &Solution) -> Diagnosis {
    let mesh = &asm.mesh;
    let ru = asm.halfop_apply(&sol.u);
    let uq: Vec<f64> = asm.quad.nodes.iter().map(|&x| sol.u.eval(mesh, x)).collect();
    let umax = uq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rmax = ru.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let u_zero: Vec<bool> = uq.iter().map(|v| v.abs() < TAU_SUPP * umax).collect();
    let halfop_zero: Vec<bool> = ru.iter().map(|v| v.abs() < TAU_SUPP * rmax).collect();
    let cell_flags = |edges: &[f64], mask: &[bool], node_zero: &dyn Fn(usize) -> bool| -> Vec<bool> {
        (0..edges.len() - 1)
            .map(|k| {
                let (a, b) = (edges[k], edges[k + 1]);
                let quad_ok = asm
                    .quad
                    .nodes
                    .iter()
                    .zip(mask)
                    .filter(|(&x, _)| x > a && x < b)
                    .all(|(_, &z)| z);
                let nodes_ok = mesh
                    .closure_nodes()
                    .filter(|&i| mesh.nodes[i] >= a - 1e-12 && mesh.nodes[i] <= b + 1e-12)
                    .all(node_zero);
                quad_ok && nodes_ok
            })
            .collect()
    };
    let q_unrecoverable = cell_flags(&layout.q_edges, &u_zero, &|i| sol.u.dof[i].abs() < TAU_SUPP * umax);
    let b_unrecoverable = cell_flags(&layout.b_edges, &halfop_zero, &|_| true);
    let covers_domain = u_zero.iter().zip(&halfop_zero).all(|(a, b)| *a || *b);
    Diagnosis {
        q_unrecoverable,
        b_unrecoverable,
        u_zero,
        halfop_zero,
        covers_domain,
    }
}

/// Outcome of a Gauss–Newton recovery.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub b_hat: CoefficientField,
    pub q_hat: CoefficientField,
    pub theta: Vec<f64>,
    /// data misfit `1/2 ||r||^2` per accepted iterate (first entry = start)
    pub misfit_history: Vec<f64>,
    pub gradient_history: Vec<f64>,
    pub lambda_tik: f64,
    pub identity_residual: Option<f64>,
    pub diagnosis: Option<Diagnosis>,
    pub iterations: usize,
}

impl RecoveryResult {
    pub fn final_misfit(&self) -> f64 {
        *self.misfit_history.last().expect("history starts with the initial misfit")
    }

    /// `(cell_center, b_hat, q_hat, b_true, q_true)`; cells of the two grids are listed in turn.
    pub fn to_csv(&self, truth: Option<(&CoefficientField, &CoefficientField)>) -> CsvTable {
        let mut t = CsvTable::new(&["cell_center", "b_hat", "q_hat", "b_true", "q_true", "b_unrecoverable", "q_unrecoverable"]);
        let centers: Vec<f64> = {
            let mut c: Vec<f64> = (0..self.b_hat.n_cells()).map(|k| self.b_hat.cell_center(k)).collect();
            c.extend((0..self.q_hat.n_cells()).map(|k| self.q_hat.cell_center(k)));
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        };
        for x in centers {
            let (bt, qt) = truth.map_or((f64::NAN, f64::NAN), |(b, q)| (b.eval(x), q.eval(x)));
            let flag = |mask: Option<&Vec<bool>>, f: &CoefficientField| -> String {
                match (mask, f.cell_of(x)) {
                    (Some(m), Some(k)) => (m[k] as u8).to_string(),
                    _ => "".into(),
                }
            };
            let d = self.diagnosis.as_ref();
            t.push(vec![
                fmt_num(x),
                fmt_num(self.b_hat.eval(x)),
                fmt_num(self.q_hat.eval(x)),
                fmt_num(bt),
                fmt_num(qt),
                flag(d.map(|d| &d.b_unrecoverable), &self.b_hat),
                flag(d.map(|d| &d.q_unrecoverable), &self.q_hat),
            ]);
        }
        t
    }

    pub fn run_log(&self) -> String {
        let mut s = String::from("iteration,misfit,gradient_norm\n");
        for (k, m) in self.misfit_history.iter().enumerate() {
            let g = self.gradient_history.get(k).copied().unwrap_or(f64::NAN);
            s.push_str(&format!("{k},{},{}\n", fmt_num(*m), fmt_num(g)));
        }
        s
    }
}

/// Counts consecutive accepted steps on which the data misfit went up.
#[derive(Debug, Clone)]
pub struct DivergenceMonitor {
    last: f64,
    streak: usize,
}

impl DivergenceMonitor {
    pub fn new(initial: f64) -> Self {
        DivergenceMonitor { last: initial, streak: 0 }
    }

    pub fn accept(&mut self, misfit: f64) -> Result<()> {
        if misfit > self.last {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.last = misfit;
        if self.streak >= DIVERGENCE_STREAK {
            return Err(Error::Divergence(self.streak));
        }
        Ok(())
    }
}

/// Regularised output least squares by Gauss–Newton with backtracking.
pub fn gauss_newton(
    model: &InverseModel<'_>,
    data: &MeasurementSet,
    start: &[f64],
    lambda: f64,
    max_iter: usize,
) -> Result<RecoveryResult> {
    if data.sources.len() != model.n_sources() {
        return Err(Error::Dimension("measurement set does not match the model sources".into()));
    }
    let n = start.len();
    let mut theta = start.to_vec();
    let mut r = model.residual(&theta, data)?;
    let mut obj = objective(&r, &theta, lambda);
    let mut misfit_history = vec![0.5 * r.norm_squared()];
    let mut gradient_history = Vec::new();
    let mut monitor = DivergenceMonitor::new(misfit_history[0]);
    let mut iterations = 0;
    let sl = (2.0 * lambda).sqrt();
    let floor = MISFIT_TOL * 0.5 * data.data.iter().map(|d| d.weighted_norm().powi(2)).sum::<f64>();
    loop {
        let jac = model.jacobian(&theta, data, &r)?;
        let th = DVector::from_column_slice(&theta);
        let grad = jac.transpose() * &r + &th * (2.0 * lambda);
        gradient_history.push(grad.norm());
        let converged = misfit_history.last().is_some_and(|&m| m <= floor)
            || grad.norm() <= GRAD_TOL * gradient_history[0]
            || grad.norm() == 0.0;
        if converged || iterations == max_iter {
            break;
        }
        // [J; sqrt(2 lambda) I] d = -[r; sqrt(2 lambda) theta]
        let m = jac.nrows();
        let mut a = DMatrix::zeros(m + n, n);
        a.view_mut((0, 0), (m, n)).copy_from(&jac);
        let mut rhs = DVector::zeros(m + n);
        rhs.rows_mut(0, m).copy_from(&(-&r));
        for j in 0..n {
            a[(m + j, j)] = sl;
            rhs[m + j] = -sl * theta[j];
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let step = svd
            .solve(&rhs, 1e-13 * smax)
            .map_err(|e| Error::IllPosed(format!("Gauss-Newton step: {e}")))?;
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut guard_failures = 0;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + alpha * d).collect();
            match model.residual(&trial, data) {
                Ok(rt) => {
                    let ot = objective(&rt, &trial, lambda);
                    if ot < obj {
                        accepted = Some((trial, rt, ot));
                        break;
                    }
                }
                Err(Error::SingularSystem { .. }) => guard_failures += 1,
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        let Some((trial, rt, ot)) = accepted else {
            if guard_failures == MAX_HALVINGS + 1 {
                return Err(Error::GuardFailureUnrecoverable { halvings: MAX_HALVINGS });
            }
            // no descent left along the Gauss-Newton direction
            break;
        };
        iterations += 1;
        let mis = 0.5 * rt.norm_squared();
        monitor.accept(mis)?;
        misfit_history.push(mis);
        theta = trial;
        r = rt;
        obj = ot;
    }
    let (b_hat, q_hat) = model.layout.fields(&theta);
    Ok(RecoveryResult {
        b_hat,
        q_hat,
        theta,
        misfit_history,
        gradient_history,
        lambda_tik: lambda,
        identity_residual: None,
        diagnosis: None,
        iterations,
    })
}

/// Default Tikhonov weight `1e-6 (data scale)^2`.
pub fn default_lambda(data: &MeasurementSet) -> f64 {
    let scale = data
        .data
        .iter()
        .map(|d| d.weighted_norm().powi(2))
        .sum::<f64>()
        .sqrt();
    1e-6 * scale * scale
}

pub fn recover_all_measurements(
    model: &InverseModel<'_>,
    data: &MeasurementSet,
    lambda: f64,
    max_iter: usize,
) -> Result<RecoveryResult> {
    let start = vec![0.0; model.layout.len()];
    gauss_newton(model, data, &start, lambda, max_iter)
}

/// `L^2` distance of two piecewise-constant fields (exact).
pub fn coefficient_l2_distance(a: &CoefficientField, b: &CoefficientField) -> f64 {
    let mut edges: Vec<f64> = a.edges.iter().chain(&b.edges).copied().collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (w[1] - w[0]) * (a.eval(m) - b.eval(m)).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// `||a - b|| / ||b||` in `L^2`.
pub fn coefficient_relative_error(a: &CoefficientField, b: &CoefficientField) -> f64 {
    coefficient_l2_distance(a, b) / coefficient_l2_distance(b, &CoefficientField::zero())
}

/// `||(b_hat - b) (-Delta)^{s/2}_Omega u|| + ||(q_hat - q) u||` in `L^2` of the quadrature rule.
/// With a diagnosis, each term only sees the nodes outside its zero set.
pub fn identity_defect(
    asm: &NonlocalAssembly,
    sol: &Solution,
    (b_hat, q_hat): (&CoefficientField, &CoefficientField),
    (b, q): (&CoefficientField, &CoefficientField),
    masks: Option<&Diagnosis>,
) -> f64 {
    let ru = asm.halfop_apply(&sol.u);
    let mut sb = 0.0;
    let mut sq = 0.0;
    for (k, &x) in asm.quad.nodes.iter().enumerate() {
        let w = asm.quad.weights[k];
        let (skip_b, skip_q) = masks.map_or((false, false), |d| (d.halfop_zero[k], d.u_zero[k]));
        if !skip_b {
            sb += w * ((b_hat.eval(x) - b.eval(x)) * ru[k]).powi(2);
        }
        if !skip_q {
            sq += w * ((q_hat.eval(x) - q.eval(x)) * sol.u.eval(&asm.mesh, x)).powi(2);
        }
    }
    sb.sqrt() + sq.sqrt()
}

/// Scale of the identity: `||b (-Delta)^{s/2}_Omega u|| + ||q u||`.
pub fn identity_scale(asm: &NonlocalAssembly, sol: &Solution, b: &CoefficientField, q: &CoefficientField) -> f64 {
    let z = CoefficientField::zero();
    identity_defect(asm, sol, (b, q), (&z, &z), None)
}

/// Single-source recovery with the zero-set diagnosis; `truth` enables the identity residual.
pub fn recover_single_measurement(
    model: &InverseModel<'_>,
    data: &MeasurementSet,
    start: &[f64],
    lambda: f64,
    max_iter: usize,
    truth: Option<(&CoefficientField, &CoefficientField)>,
) -> Result<RecoveryResult> {
    if model.n_sources() != 1 {
        return Err(Error::Config(format!(
            "single-measurement recovery takes one source, got {}",
            model.n_sources()
        )));
    }
    let mut res = gauss_newton(model, data, start, lambda, max_iter)?;
    let sol = model.solutions(&res.theta)?.remove(0);
    let diag = diagnose(model.asm, &model.layout, &sol);
    if let Some(truth) = truth {
        res.identity_residual = Some(identity_defect(
            model.asm,
            &sol,
            (&res.b_hat, &res.q_hat),
            truth,
            Some(&diag),
        ));
    }
    res.diagnosis = Some(diag);
    Ok(res)
}

/// `max_phi |int db (R u)(R phi) + int dq u phi| / ||phi||` over the given interior test vectors.
pub fn identity_residual(
    asm: &NonlocalAssembly,
    u: &Solution,
    db: &CoefficientField,
    dq: &CoefficientField,
    tests: &[DVector<f64>],
) -> f64 {
    let ru = asm.halfop_apply(&u.u);
    let v = asm.interior_part(&u.u.dof);
    let mq = weighted_mass_matrix(&asm.mesh, Some(dq));
    let mqv = &mq * &v;
    let wb: DVector<f64> = DVector::from_iterator(
        ru.len(),
        asm.quad.nodes.iter().enumerate().map(|(k, &x)| asm.quad.weights[k] * db.eval(x) * ru[k]),
    );
    let kbv = asm.r_half.transpose() * wb;
    let total = kbv + mqv;
    tests
        .iter()
        .map(|phi| {
            let n = (phi.dot(&(&asm.mass * phi))).sqrt();
            if n > 0.0 {
                total.dot(phi).abs() / n
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Central-difference check of the Gauss–Newton gradient `J^T r + 2 lambda theta`.
pub fn gradient_check(model: &InverseModel<'_>, data: &MeasurementSet, theta: &[f64], lambda: f64) -> Result<f64> {
    let r = model.residual(theta, data)?;
    let jac = model.jacobian(theta, data, &r)?;
    let th = DVector::from_column_slice(theta);
    let grad = jac.transpose() * &r + th * (2.0 * lambda);
    let fd: Vec<f64> = (0..theta.len())
        .into_par_iter()
        .map(|j| {
            let d = 1e-5 * theta[j].abs().max(1.0);
            let mut p = theta.to_vec();
            let mut m = theta.to_vec();
            p[j] += d;
            m[j] -= d;
            let jp = objective(&model.residual(&p, data)?, &p, lambda);
            let jm = objective(&model.residual(&m, data)?, &m, lambda);
            Ok((jp - jm) / (2.0 * d))
        })
        .collect::<Result<_>>()?;
    let fd = DVector::from_vec(fd);
    Ok((grad - &fd).norm() / fd.norm().max(f64::MIN_POSITIVE))
}

/// Density of `{ (-Delta)^{s/2}_Omega u_f restricted to sub }` over sources `f` on hats in `(w_lo, w_hi)`.
pub fn runge_sq_demo(
    asm: &NonlocalAssembly,
    b: &CoefficientField,
    q: &CoefficientField,
    sub: &Subdomain,
    source_window: (f64, f64),
    target: &dyn Fn(f64) -> f64,
    sizes: &[usize],
) -> Result<RungeReport> {
    let op = ForwardOperator::new(asm, b, q)?;
    let sources = window_hats(asm, source_window)?;
    let nmax = sizes.iter().copied().max().unwrap_or(0).min(sources.len());
    let mask: Vec<usize> = (0..asm.quad.nodes.len()).filter(|&k| sub.contains(asm.quad.nodes[k])).collect();
    let cols: Vec<DVector<f64>> = sources[..nmax]
        .par_iter()
        .map(|f| {
            let s = op.solve(f, None)?;
            let ru = asm.halfop_apply(&s.u);
            Ok(DVector::from_iterator(mask.len(), mask.iter().map(|&k| ru[k])))
        })
        .collect::<Result<_>>()?;
    let columns = if cols.is_empty() {
        DMatrix::zeros(mask.len(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    let tgt = DVector::from_iterator(mask.len(), mask.iter().map(|&k| target(asm.quad.nodes[k])));
    let mass = DMatrix::from_diagonal(&DVector::from_iterator(mask.len(), mask.iter().map(|&k| asm.quad.weights[k])));
    Ok(nested_approximation(&columns, &tgt, &mass, sizes, RUNGE_EPS))
}

/// Density of `{ u_f restricted to the domain }` over sources `f` on hats in the window.
pub fn runge_solution_demo(
    asm: &NonlocalAssembly,
    b: &CoefficientField,
    q: &CoefficientField,
    source_window: (f64, f64),
    target: &dyn Fn(f64) -> f64,
    sizes: &[usize],
) -> Result<RungeReport> {
    let op = ForwardOperator::new(asm, b, q)?;
    let mesh = &asm.mesh;
    let sources = window_hats(asm, source_window)?;
    let nmax = sizes.iter().copied().max().unwrap_or(0).min(sources.len());
    let nodes: Vec<usize> = mesh.closure_nodes().collect();
    let cols: Vec<DVector<f64>> = sources[..nmax]
        .par_iter()
        .map(|f| {
            let s = op.solve(f, None)?;
            Ok(DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| s.u.dof[i])))
        })
        .collect::<Result<_>>()?;
    let columns = if cols.is_empty() {
        DMatrix::zeros(nodes.len(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    let tgt = DVector::from_iterator(nodes.len(), nodes.iter().map(|&i| target(mesh.nodes[i])));
    Ok(nested_approximation(&columns, &tgt, &asm.mass_closure, sizes, RUNGE_EPS))
}

/// Exterior hats on the nodes inside a window, in van der Corput order.
pub fn window_hats(asm: &NonlocalAssembly, window: (f64, f64)) -> Result<Vec<ExteriorDatum>> {
    let mesh = &asm.mesh;
    let nodes: Vec<usize> = (0..mesh.n_nodes())
        .filter(|&i| {
            let x = mesh.nodes[i];
            x > window.0 && x < window.1 && mesh.classes[i] == crate::mesh::NodeClass::Exterior
        })
        .collect();
    hat_basis(&nodes)
        .into_iter()
        .map(|i| ExteriorDatum::hat(mesh, format!("hat{i}"), i))
        .collect()
}

/// Solution of a single source as a mesh function (for reporting).
pub fn source_solution(model: &InverseModel<'_>, theta: &[f64], k: usize) -> Result<FeFunction> {
    Ok(model.solutions(theta)?.swap_remove(k).u)
}

/// Source in the window whose discrete solution vanishes at the closed-domain
/// nodes in `[lo, hi]`: the null space of the node-restriction map is searched
/// for the combination of window hats that is largest elsewhere in the domain.
pub fn vanishing_source(
    op: &ForwardOperator<'_>,
    window: (f64, f64),
    lo: f64,
    hi: f64,
    id: &str,
) -> Result<ExteriorDatum> {
    let asm = op.asm;
    let mesh = &asm.mesh;
    let hats = window_hats(asm, window)?;
    let zero_nodes: Vec<usize> = mesh
        .closure_nodes()
        .filter(|&i| mesh.nodes[i] >= lo - 1e-12 && mesh.nodes[i] <= hi + 1e-12)
        .collect();
    let other: Vec<usize> = mesh.interior_nodes().filter(|i| !zero_nodes.contains(i)).collect();
    if hats.len() <= zero_nodes.len() {
        return Err(Error::IllPosed(format!(
            "{} window hats cannot cancel {} nodal values",
            hats.len(),
            zero_nodes.len()
        )));
    }
    let sols: Vec<FeFunction> = hats
        .par_iter()
        .map(|f| op.solve(f, None).map(|s| s.u))
        .collect::<Result<_>>()?;
    let z = DMatrix::from_fn(zero_nodes.len(), hats.len(), |i, j| sols[j].dof[zero_nodes[i]]);
    let o = DMatrix::from_fn(other.len(), hats.len(), |i, j| sols[j].dof[other[i]]);
    // full right singular basis: pad with zero rows so V is square
    let mut zp = DMatrix::zeros(hats.len(), hats.len());
    zp.view_mut((0, 0), (zero_nodes.len(), hats.len())).copy_from(&z);
    let svd = zp.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..hats.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let null: Vec<DVector<f64>> = order[zero_nodes.len()..]
        .iter()
        .map(|&k| vt.row(k).transpose())
        .collect();
    let nb = DMatrix::from_columns(&null);
    let inner = (&o * &nb).svd(false, true);
    let vt2 = inner.v_t.expect("requested V^T");
    let kmax = inner.singular_values.imax();
    let coef = &nb * vt2.row(kmax).transpose();
    let mut dof = DVector::zeros(mesh.n_nodes());
    for (c, h) in coef.iter().zip(&hats) {
        dof.axpy(*c, &h.values.dof, 1.0);
    }
    let scale = dof.amax();
    ExteriorDatum::new(mesh, id, FeFunction { dof: dof / scale })
}

/// Zero-set diagnosis of every source at `theta`, plus the cells left
/// unrecoverable by all of them together (`(b cells, q cells)`).
pub fn joint_diagnosis(model: &InverseModel<'_>, theta: &[f64]) -> Result<(Vec<Diagnosis>, Vec<bool>, Vec<bool>)> {
    let diags: Vec<Diagnosis> = model
        .solutions(theta)?
        .iter()
        .map(|s| diagnose(model.asm, &model.layout, s))
        .collect();
    let all = |pick: &dyn Fn(&Diagnosis) -> &Vec<bool>, n: usize| -> Vec<bool> {
        (0..n).map(|k| diags.iter().all(|d| pick(d)[k])).collect()
    };
    let b = all(&|d| &d.b_unrecoverable, model.layout.nb());
    let q = all(&|d| &d.q_unrecoverable, model.layout.nq());
    Ok((diags, b, q))
}
