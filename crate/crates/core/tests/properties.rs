use fraclap::assembly::{apply_sparse_input, quad_form, CoefficientField, NonlocalAssembly, ProblemParams};
use fraclap::dn::{verify_ln_relation, ObservationSet};
use fraclap::forward::{ExteriorDatum, ForwardOperator};
use fraclap::inverse::source_family;
use fraclap::kernel::{getoor_oracle, DomainGeometry, FracExponent};
use fraclap::mesh::build_mesh;
use fraclap::regional::assemble_regional_form;
use nalgebra::DVector;
use proptest::prelude::*;

mod common;

const H: f64 = 1.0 / 16.0;

fn geom() -> DomainGeometry {
    DomainGeometry::new(-1.0, 1.0, 4.0).unwrap()
}

fn asm(t: f64, s: f64) -> NonlocalAssembly {
    NonlocalAssembly::new(ProblemParams::new(t, s, geom(), H).unwrap()).unwrap()
}

fn field(values: &[f64]) -> CoefficientField {
    CoefficientField::uniform(-0.75, 0.75, values.to_vec()).unwrap()
}

fn orders() -> impl Strategy<Value = (f64, f64)> {
    (0.15f64..0.9).prop_flat_map(|t| (Just(t), (0.05 * t)..(0.95 * t)))
}

#[test]
fn stiffness_matches_fourier_energy() {
    let mesh = build_mesh(&geom(), 1.0 / 8.0).unwrap();
    for (t, seed) in [(0.3, 1u64), (0.45, 2), (0.6, 3)] {
        let a = NonlocalAssembly::new(ProblemParams::new(t, 0.5 * t, geom(), 1.0 / 8.0).unwrap()).unwrap();
        let i0 = mesh.nearest_node(-0.5);
        let xs: Vec<f64> = (i0..i0 + 9).map(|i| mesh.nodes[i]).collect();
        let mut vs: Vec<f64> = (0..9).map(|k| ((k as f64 + 1.0) * (seed as f64 + 0.7)).sin()).collect();
        vs[0] = 0.0;
        vs[8] = 0.0;
        let mut v = DVector::zeros(mesh.n_nodes());
        for k in 0..9 {
            v[i0 + k] = vs[k];
        }
        let discrete = quad_form(&a.k_full, &v);
        let oracle = common::fourier_energy(t, &xs, &vs);
        let rel = (discrete - oracle).abs() / oracle;
        assert!(rel <= 1e-5, "t = {t}: {discrete} vs {oracle} ({rel:e})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn system_matrix_is_symmetric(
        (t, s) in orders(),
        b in prop::collection::vec(-1.0f64..2.0, 1..4),
        q in prop::collection::vec(-1.0f64..3.0, 1..4),
    ) {
        let a = asm(t, s);
        if let Ok(op) = ForwardOperator::new(&a, &field(&b), &field(&q)) {
            let m = &op.matrix;
            let asym = (m - m.transpose()).amax() / m.amax();
            prop_assert!(asym <= 1e-12, "asymmetry {asym:e}");
        }
    }

    #[test]
    fn form_dominates_getoor_constant(
        (t, s) in orders(),
        b in prop::collection::vec(0.0f64..2.0, 1..4),
        q in prop::collection::vec(0.0f64..3.0, 1..4),
        seed in 0u64..1000,
    ) {
        // the Getoor profile is a positive supersolution, so the first
        // eigenvalue of the unperturbed operator is at least its constant
        let a = asm(t, s);
        let op = ForwardOperator::new(&a, &field(&b), &field(&q)).unwrap();
        let n = a.mesh.n_interior();
        let v = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * (seed as f64 * 0.37 + 1.3)).sin());
        let m = &a.mass * &v;
        let lhs = v.dot(&(&op.matrix * &v));
        let rhs = getoor_oracle(a.params.t) * v.dot(&m);
        prop_assert!(lhs >= rhs * (1.0 - 1e-9), "{lhs} < {rhs}");
    }

    #[test]
    fn regional_form_ignores_constants(
        a in 0.1f64..0.9,
        c in -5.0f64..5.0,
        seed in 0u64..1000,
    ) {
        let mesh = build_mesh(&geom(), H).unwrap();
        let ra = assemble_regional_form(&mesh, FracExponent::new(a).unwrap()).unwrap();
        let n = ra.k_reg.nrows();
        let v = DVector::from_fn(n, |i, _| ((i as f64 + 0.5) * (seed as f64 * 0.11 + 0.9)).cos());
        let shifted = v.add_scalar(c);
        let e0 = v.dot(&(&ra.k_reg * &v));
        let e1 = shifted.dot(&(&ra.k_reg * &shifted));
        prop_assert!(e0 > 0.0);
        prop_assert!((e0 - e1).abs() <= 1e-9 * e0.max(1.0), "{e0} vs {e1}");
    }

    #[test]
    fn exterior_pairing_is_symmetric(
        (t, s) in orders(),
        b in prop::collection::vec(0.2f64..2.0, 1..3),
        q in prop::collection::vec(0.0f64..3.0, 1..3),
        cf in prop::collection::vec(-1.0f64..1.0, 4),
        cg in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let a = asm(t, s);
        let op = ForwardOperator::new(&a, &field(&b), &field(&q)).unwrap();
        let bumps = source_family(&a, 2.0, 3.0, 4).unwrap();
        let mix = |c: &[f64], id: &str| {
            let parts: Vec<(&ExteriorDatum, f64)> = bumps.iter().zip(c).map(|(f, &w)| (f, w)).collect();
            ExteriorDatum::combination(id, &parts).unwrap()
        };
        let f = mix(&cf, "f");
        let g = mix(&cg, "g");
        let uf = op.solve(&f, None).unwrap().u;
        let ug = op.solve(&g, None).unwrap().u;
        let pfg = g.values.dof.dot(&apply_sparse_input(&a.k_full, &uf.dof));
        let pgf = f.values.dof.dot(&apply_sparse_input(&a.k_full, &ug.dof));
        let scale = quad_form(&a.k_full, &f.values.dof).sqrt() * quad_form(&a.k_full, &g.values.dof).sqrt();
        prop_assert!((pfg - pgf).abs() <= 1e-9 * scale, "{pfg} vs {pgf}");
    }

    #[test]
    fn gap_is_coefficient_independent(
        (t, s) in orders(),
        b in prop::collection::vec(0.2f64..2.0, 1..3),
        q in prop::collection::vec(0.0f64..3.0, 1..3),
        cf in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let a = asm(t, s);
        let obs = ObservationSet::new(&a.mesh, vec![1.5, 1.7, 1.9]).unwrap();
        let bumps = source_family(&a, 2.0, 3.0, 4).unwrap();
        let parts: Vec<(&ExteriorDatum, f64)> = bumps.iter().zip(&cf).map(|(f, &w)| (f, w)).collect();
        let f = ExteriorDatum::combination("f", &parts).unwrap();
        let z = CoefficientField::zero();
        let op0 = ForwardOperator::new(&a, &z, &z).unwrap();
        let op1 = ForwardOperator::new(&a, &field(&b), &field(&q)).unwrap();
        let r0 = verify_ln_relation(&a, &f, &op0.solve(&f, None).unwrap(), &obs).unwrap();
        let r1 = verify_ln_relation(&a, &f, &op1.solve(&f, None).unwrap(), &obs).unwrap();
        prop_assert!(r0.max_abs_discrepancy <= 1e-6 && r1.max_abs_discrepancy <= 1e-6);
        for (g0, g1) in r0.gap.iter().zip(&r1.gap) {
            prop_assert!((g0 - g1).abs() <= 1e-8 * (1.0 + g0.abs()));
        }
    }
}
