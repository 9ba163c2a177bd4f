//! Uniform fitted mesh on the computational box and continuous piecewise-linear
//! functions on it.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::DomainGeometry;

/// Where a node sits relative to the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// strictly inside the domain
    Interior,
    /// one of the two endpoints of the domain
    Boundary,
    /// first exterior node next to a domain endpoint
    BoundaryAdjacent,
    /// exterior node at least two cells from the domain, excluding the box ends
    Exterior,
    /// `-R` or `R`; functions vanish there
    BoxEnd,
}

#[derive(Debug, Clone)]
pub struct Mesh1D {
    pub geom: DomainGeometry,
    pub h: f64,
    pub nodes: Vec<f64>,
    pub classes: Vec<NodeClass>,
    /// index of the node at `omega_lo`
    pub i_lo: usize,
    /// index of the node at `omega_hi`
    pub i_hi: usize,
}

const FIT_TOL: f64 = 1e-9;

fn integral_cells(len: f64, h: f64) -> Option<usize> {
    let k = (len / h).round();
    if k >= 0.0 && (k * h - len).abs() <= FIT_TOL * len.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

/// Uniform mesh of `[-R, R]` with the domain endpoints as nodes. The width is
/// reduced from `h` until it divides the domain and both exterior segments.
pub fn build_mesh(geom: &DomainGeometry, h: f64) -> Result<Mesh1D> {
    if !(h > 0.0) {
        return Err(Error::DegenerateMesh(format!("mesh width {h} must be positive")));
    }
    let len = geom.length();
    if len < 4.0 * h {
        return Err(Error::DegenerateMesh(format!(
            "domain length {len} shorter than four cells of width {h}"
        )));
    }
    let left = geom.omega_lo + geom.trunc_radius;
    let right = geom.trunc_radius - geom.omega_hi;
    let k0 = (len / h - FIT_TOL).ceil().max(1.0) as usize;
    let mut fitted = None;
    for k in k0..(64 * k0) {
        let hh = len / k as f64;
        if let (Some(nl), Some(nr)) = (integral_cells(left, hh), integral_cells(right, hh)) {
            fitted = Some((hh, nl, k, nr));
            break;
        }
    }
    let (hh, nl, nomega, nr) = fitted.ok_or_else(|| {
        Error::Geometry(format!(
            "no uniform width <= {h} fits both the domain and the truncation box"
        ))
    })?;
    if nl < 2 || nr < 2 {
        return Err(Error::Geometry(format!(
            "truncation radius must exceed the domain by more than one cell (got {nl} and {nr} cells)"
        )));
    }
    let n = nl + nomega + nr + 1;
    let r = geom.trunc_radius;
    let i_lo = nl;
    let i_hi = nl + nomega;
    let nodes: Vec<f64> = (0..n)
        .map(|i| {
            // anchor to exact endpoints to avoid drift
            if i == i_lo {
                geom.omega_lo
            } else if i == i_hi {
                geom.omega_hi
            } else if i <= i_lo {
                -r + i as f64 * hh
            } else if i <= i_hi {
                geom.omega_lo + (i - i_lo) as f64 * hh
            } else {
                geom.omega_hi + (i - i_hi) as f64 * hh
            }
        })
        .collect();
    let classes = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                NodeClass::BoxEnd
            } else if i == i_lo || i == i_hi {
                NodeClass::Boundary
            } else if i > i_lo && i < i_hi {
                NodeClass::Interior
            } else if i + 1 == i_lo || i == i_hi + 1 {
                NodeClass::BoundaryAdjacent
            } else {
                NodeClass::Exterior
            }
        })
        .collect();
    Ok(Mesh1D {
        geom: *geom,
        h: hh,
        nodes,
        classes,
        i_lo,
        i_hi,
    })
}

impl Mesh1D {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Indices of nodes strictly inside the domain, in increasing order.
    pub fn interior_nodes(&self) -> std::ops::Range<usize> {
        (self.i_lo + 1)..self.i_hi
    }

    pub fn n_interior(&self) -> usize {
        self.i_hi - self.i_lo - 1
    }

    /// Nodes of the closed domain (interior plus the two endpoints).
    pub fn closure_nodes(&self) -> std::ops::RangeInclusive<usize> {
        self.i_lo..=self.i_hi
    }

    /// Element indices covering the domain.
    pub fn domain_elements(&self) -> std::ops::Range<usize> {
        self.i_lo..self.i_hi
    }

    pub fn interior_mask(&self) -> Vec<bool> {
        self.classes.iter().map(|&c| c == NodeClass::Interior).collect()
    }

    pub fn exterior_mask(&self) -> Vec<bool> {
        self.classes.iter().map(|&c| c == NodeClass::Exterior).collect()
    }

    /// Element containing `x` (the left one at a node), `None` outside the box.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let r = self.geom.trunc_radius;
        if x < -r || x > r {
            return None;
        }
        let e = ((x - self.nodes[0]) / self.h).floor() as isize;
        Some(e.clamp(0, self.n_elements() as isize - 1) as usize)
    }

    /// Nearest node index.
    pub fn nearest_node(&self, x: f64) -> usize {
        let i = ((x - self.nodes[0]) / self.h).round();
        (i.max(0.0) as usize).min(self.n_nodes() - 1)
    }

    /// Evaluate the piecewise-linear interpolant of `dof` at `x` (zero outside the box).
    pub fn eval(&self, dof: &[f64], x: f64) -> f64 {
        match self.locate(x) {
            None => 0.0,
            Some(e) => {
                let x0 = self.nodes[e];
                let lam = ((x - x0) / self.h).clamp(0.0, 1.0);
                dof[e] * (1.0 - lam) + dof[e + 1] * lam
            }
        }
    }

    pub fn interpolate<F: Fn(f64) -> f64>(&self, f: F) -> FeFunction {
        FeFunction {
            dof: DVector::from_iterator(self.n_nodes(), self.nodes.iter().map(|&x| f(x))),
        }
    }
}

/// Continuous piecewise-linear function given by its nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub dof: DVector<f64>,
}

impl FeFunction {
    pub fn zeros(mesh: &Mesh1D) -> Self {
        FeFunction {
            dof: DVector::zeros(mesh.n_nodes()),
        }
    }

    pub fn from_vec(mesh: &Mesh1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Dimension(format!(
                "{} values for {} nodes",
                values.len(),
                mesh.n_nodes()
            )));
        }
        Ok(FeFunction {
            dof: DVector::from_vec(values),
        })
    }

    /// Interpolant of `f` on the closed domain, zero elsewhere.
    pub fn on_domain<F: Fn(f64) -> f64>(mesh: &Mesh1D, f: F) -> Self {
        let mut dof = DVector::zeros(mesh.n_nodes());
        for i in mesh.closure_nodes() {
            dof[i] = f(mesh.nodes[i]);
        }
        FeFunction { dof }
    }

    pub fn eval(&self, mesh: &Mesh1D, x: f64) -> f64 {
        mesh.eval(self.dof.as_slice(), x)
    }

    /// `true` when every dof outside the open domain is zero.
    pub fn is_supported_in_domain(&self, mesh: &Mesh1D) -> bool {
        self.dof
            .iter()
            .zip(&mesh.classes)
            .all(|(&v, &c)| c == NodeClass::Interior || v == 0.0)
    }

    /// Exact `L^2(lo, hi)` norm for mesh-aligned `lo`, `hi`.
    pub fn l2_norm_on(&self, mesh: &Mesh1D, elements: std::ops::Range<usize>) -> f64 {
        let h = mesh.h;
        elements
            .map(|e| {
                let (a, b) = (self.dof[e], self.dof[e + 1]);
                h * (a * a + a * b + b * b) / 3.0
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm(&self, mesh: &Mesh1D) -> f64 {
        self.l2_norm_on(mesh, 0..mesh.n_elements())
    }
}
