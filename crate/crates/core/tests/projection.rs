use nhfields::cauchy::{project_point_onto_constraint, VColumns};
use nhfields::constraint::{coefficients_from, constraint_derivatives, constraint_rank_check, CoefficientRule, ConstraintFn, ConstraintSpec};
use nhfields::ddw::solve_constrained_ddw;
use nhfields::fluid::{random_fluid_point, FluidModel, FluidParams, Incompressibility};
use nhfields::lagrangian::derivative_bundle;
use nhfields::models::{ConstraintKind, CoupledPair, LinearTransport, Wave};
use nhfields::projector::{build_projectors, compatibility_matrix, solve_zeta, solve_zeta_linear, zeta_form_residual};
use nhfields::{Error, JetPoint, Lagrangian, TangentVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(l: nhfields::Layout, rng: &mut ChaCha8Rng) -> JetPoint {
    let mut p = JetPoint::zeros(l);
    for x in p.x.iter_mut().chain(p.y.iter_mut()).chain(p.v.iter_mut()) {
        *x = rng.random_range(-1.0..1.0);
    }
    p
}

fn transport(k: f64) -> ConstraintSpec<ConstraintKind> {
    ConstraintSpec::chetaev(ConstraintKind::LinearTransport(LinearTransport { c: k }))
}

fn check_scenario<L: Lagrangian, F: ConstraintFn>(
    model: &L,
    spec: &ConstraintSpec<F>,
    points: Vec<JetPoint>,
    rng: &mut ChaCha8Rng,
) {
    for raw in points {
        let p = project_point_onto_constraint(spec, &raw, VColumns::Auto, 1e-13).unwrap();
        let bundle = derivative_bundle(model, &p).unwrap();
        let d = constraint_derivatives(spec, &p).unwrap();
        let c = coefficients_from(spec, &p, &d).unwrap();
        let zb = solve_zeta(&bundle, &c).unwrap();
        assert!(zeta_form_residual(&bundle, &zb, &c, 50, rng).unwrap() < 1e-9);
        let pp = build_projectors(&zb, &d).unwrap();
        let inv = pp.invariants;
        assert!(inv.worst() < 1e-9 * inv.scale * inv.scale, "{inv:?}");
        assert_eq!(inv.rank_q, spec.k());
        // Pv is tangent to C for arbitrary v.
        for _ in 0..5 {
            let v = TangentVector::from_vec(p.layout(), (0..p.layout().dim()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let pv = pp.apply_p(&v);
            for al in 0..spec.k() {
                let s: f64 = d.differential(al).iter().zip(pv.as_slice()).map(|(a, b)| a * b).sum();
                assert!(s.abs() < 1e-9);
            }
        }
    }
}

#[test]
fn wave_compatibility_classification() {
    let w = Wave::new(1.0, 1, 1);
    let p = JetPoint::new(w.layout(), vec![0.0, 0.0], vec![0.0], vec![0.3, 0.7]).unwrap();
    for k in [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0] {
        let spec = transport(k);
        let bundle = derivative_bundle(&w, &p).unwrap();
        let d = constraint_derivatives(&spec, &p).unwrap();
        let c = coefficients_from(&spec, &p, &d).unwrap();
        let zb = solve_zeta_linear(&bundle, &c).unwrap();
        let cm = compatibility_matrix(&zb, &d);
        // ζ(φ) = ±(1 − k²) up to the normalisation of ζ.
        assert!((cm.det.abs() - (1.0 - k * k).abs()).abs() < 1e-12, "k = {k}: {}", cm.det);
        assert_eq!(cm.compatible, k.abs() != 1.0, "k = {k}");
        let pr = build_projectors(&zb, &d);
        assert_eq!(pr.is_err(), k.abs() == 1.0);
        if let Err(e) = pr {
            assert!(matches!(e, Error::Incompatible { .. }));
        }
    }
}

#[test]
fn wave_transport_projectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let w = Wave::new(1.0, 1, 1);
    let pts = (0..20).map(|_| random_point(w.layout(), &mut rng)).collect();
    check_scenario(&w, &transport(2.0), pts, &mut rng);
}

#[test]
fn fluid_incompressibility_projectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let model = FluidModel::new(FluidParams::default()).unwrap();
    let spec = ConstraintSpec::chetaev(Incompressibility);
    let pts = (0..20).map(|_| random_fluid_point(&mut rng, 0.3)).collect();
    check_scenario(&model, &spec, pts, &mut rng);
}

#[test]
fn coupled_pair_with_custom_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let w = Wave::new(1.0, 1, 2);
    // Rows α, columns (a, μ); deliberately not dφ/dv so M is not symmetric.
    let c = vec![1.0, -0.5, 0.2, -1.5, 0.3, 0.4, 1.0, 0.25];
    let spec = ConstraintSpec::with_rule(ConstraintKind::CoupledPair(CoupledPair::default()), CoefficientRule::constant(c));
    let pts = (0..20).map(|_| random_point(w.layout(), &mut rng)).collect();
    check_scenario(&w, &spec, pts, &mut rng);
}

#[test]
fn off_constraint_points_are_rejected() {
    let w = Wave::new(1.0, 1, 1);
    let p = JetPoint::new(w.layout(), vec![0.0, 0.0], vec![0.0], vec![1.0, 0.0]).unwrap();
    assert!(matches!(constraint_rank_check(&transport(2.0), &p), Err(Error::OffConstraint { .. })));
    assert!(solve_constrained_ddw(&w, &transport(2.0), &p, None).is_err());
}
