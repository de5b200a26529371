mod common;

use common::conic_instances::instances;

#[test]
fn analytic_instances() {
    let all = instances();
    assert_eq!(all.len(), 12);
    for inst in &all {
        let sol = inst.solve().unwrap();
        match inst.check(&sol) {
            Ok(err) => assert!(err <= 1e-7, "{}: error {err:e}", inst.name),
            Err(msg) => panic!("{}: {msg}", inst.name),
        }
    }
}

#[test]
fn optimal_solutions_meet_contract() {
    for inst in instances() {
        let sol = inst.solve().unwrap();
        if sol.is_optimal() {
            let rhs: f64 = inst.problem.equalities.iter().map(|e| e.rhs * e.rhs).sum::<f64>().sqrt();
            assert!(sol.max_equality_residual <= 1e-8 * (1.0 + rhs), "{}", inst.name);
            assert!(sol.min_block_eigenvalue >= -1e-9, "{}", inst.name);
        }
    }
}
