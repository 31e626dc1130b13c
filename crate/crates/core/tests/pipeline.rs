//! End-to-end checks on coarse levels.

use stcutfem::forms::{
    assemble_ghost_penalty, assemble_normal_grad_stab, assemble_slab_system, residual_and_jacobian, Incoming, SlabSystem,
};
use stcutfem::mesh::build_structured_mesh;
use stcutfem::problem::{ConstantPair, CouplingModel, ManufacturedProblem};
use stcutfem::slab::{build_slab, Discretization, MeshContext};
use stcutfem::solver::norm2;
use stcutfem::study::{level_dt, level_h, run_convergence_study, run_level, StudyConfig};
use stcutfem::timestepping::NewtonConfig;
use stcutfem::verify;
use stcutfem::ModelData;

#[test]
fn constant_state_is_preserved() {
    for k in [1, 2] {
        let dev = verify::constant_pair_deviation(k, 1, 0.7).unwrap();
        assert!(dev < 1e-8, "k={k}: {dev:e}");
    }
}

// the assembled system annihilates the constant pair on the first slab
#[test]
fn constant_pair_is_a_discrete_solution() {
    let c = 0.7;
    let problem = ConstantPair::new(c);
    let disc = Discretization::uniform(2);
    let ctx = MeshContext::new(build_structured_mesh(level_h(0)), &disc);
    let slab = build_slab(&problem, &ctx, &disc, 0, 0.0, level_dt(0)).unwrap();
    let sys = assemble_slab_system(&slab, &ctx.mesh, &problem, Incoming::Initial).unwrap();
    let u = vec![c; slab.space.n_dofs()];
    let (r, _) = residual_and_jacobian(&sys, &slab, &ctx.mesh, problem.params(), &u).unwrap();
    assert!(norm2(&r) <= 1e-10 * norm2(&sys.rhs).max(1.0), "{:e}", norm2(&r));
}

#[test]
fn langmuir_jacobian_matches_differences() {
    for k in [1, 2] {
        let e = verify::langmuir_jacobian_fd(k, 5, 11).unwrap();
        assert!(e < 1e-8, "k={k}: {e:e}");
    }
}

#[test]
fn geometry_converges() {
    let (a, l, _) = verify::geometry_eoc(1, &[0, 1, 2]).unwrap();
    assert!(a > 1.7 && l > 1.7, "{a} {l}");
}

#[test]
fn coarse_study_rows() {
    let mut cfg = StudyConfig::new(CouplingModel::Langmuir, 1, 1);
    cfg.deterministic = true;
    let rows = run_convergence_study(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.err_bulk.unwrap() < 5e-2 && r.err_surf.unwrap() < 5e-2);
        assert!(r.max_newton >= 1 && r.max_newton <= 10);
    }
    assert!(rows[1].err_bulk < rows[0].err_bulk);
}

#[test]
fn newton_terminates_below_tolerance() {
    let run = run_level(CouplingModel::Langmuir, 2, 0, &NewtonConfig::default()).unwrap();
    assert!(run.stats.max_increment() < 1e-9);
    let henry = run_level(CouplingModel::Henry, 1, 0, &NewtonConfig::default()).unwrap();
    assert_eq!(henry.row.max_newton, 1);
}

#[test]
fn manufactured_problem_is_consistent() {
    let p = ManufacturedProblem::new(CouplingModel::Henry);
    assert!(p.params().is_linear());
    assert!(!ManufacturedProblem::new(CouplingModel::Langmuir).params().is_linear());
}

#[test]
fn invalid_order_is_rejected() {
    let cfg = StudyConfig::new(CouplingModel::Henry, 5, 1);
    assert!(run_convergence_study(&cfg).is_err());
}

fn first_slab(k: usize, i: usize) -> (ManufacturedProblem, MeshContext, stcutfem::slab::SlabData) {
    let problem = ManufacturedProblem::new(CouplingModel::Henry);
    let disc = Discretization::uniform(k);
    let ctx = MeshContext::new(build_structured_mesh(level_h(i)), &disc);
    let slab = build_slab(&problem, &ctx, &disc, 0, 0.0, level_dt(i)).unwrap();
    (problem, ctx, slab)
}

#[test]
fn stabilisations_annihilate_constants() {
    let (_, ctx, slab) = first_slab(2, 1);
    let n = slab.space.n_dofs();
    let off = slab.space.offset();
    let mut sys = SlabSystem::new(n);
    sys.add_blocks(&assemble_ghost_penalty(&slab, &ctx.mesh, 0.1).unwrap());
    let a = sys.matrix().unwrap();
    let ones_bulk: Vec<f64> = (0..n).map(|d| if d < off { 1.0 } else { 0.0 }).collect();
    let r = a.apply(&ones_bulk);
    assert!(norm2(&r) < 1e-10, "ghost penalty {:e}", norm2(&r));
    // but it does see a non-polynomial field
    let noisy: Vec<f64> = (0..n).map(|d| if d < off { (d as f64).sin() } else { 0.0 }).collect();
    assert!(norm2(&a.apply(&noisy)) > 1e-6);

    let mut sys = SlabSystem::new(n);
    sys.add_blocks(&assemble_normal_grad_stab(&slab, &ctx.mesh, 1.0).unwrap());
    let a = sys.matrix().unwrap();
    let ones_surf: Vec<f64> = (0..n).map(|d| if d >= off { 1.0 } else { 0.0 }).collect();
    let r = a.apply(&ones_surf);
    assert!(norm2(&r) < 1e-10, "normal gradient {:e}", norm2(&r));
}

#[test]
fn mapping_inversion_round_trip() {
    let (_, ctx, slab) = first_slab(2, 1);
    let def = &slab.deformation;
    let mut checked = 0;
    for e in (0..ctx.mesh.n_elements()).filter(|&e| def.in_support(e)) {
        for xi in [[0.2, 0.3], [0.6, 0.1], [1.0 / 3.0, 1.0 / 3.0]] {
            for tau in [0.0, 0.4, 1.0] {
                let m = def.eval_mapping(&ctx.mesh, e, xi, tau).unwrap();
                let back = def.invert(&ctx.mesh, e, m.x, tau).unwrap();
                assert!((back[0] - xi[0]).abs() + (back[1] - xi[1]).abs() < 1e-10);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}
