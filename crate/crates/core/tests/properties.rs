use jsr_certify_core::families::lagarias_wang_experiment;
use jsr_certify_core::jsr::{gripenberg, rho_lower, rho_upper, GripenbergOptions};
use jsr_certify_core::polytope::{invariant_polytope_iterate, validate_polytope, InitMode, PolytopeCertificate};
use jsr_certify_core::quadratic::{
    cqlf, max_of_quadratics, min_of_quadratics, validate_quadratic, PiecewiseQuadraticCertificate,
};
use jsr_certify_core::sos::{min_sos_degree, sos_lyapunov_feasible, validate_sos, SosLyapunovCertificate};
use jsr_certify_core::{Matrix, MatrixSet, DEFAULT_SEED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pairs(count: usize, seed: u64) -> Vec<MatrixSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut m = || {
                Matrix::from_2x2(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            };
            MatrixSet::new(format!("random-{i}"), vec![m(), m()]).unwrap()
        })
        .collect()
}

/// Rescaled so the set is a little inside the stability region.
fn contracted(set: &MatrixSet, factor: f64) -> MatrixSet {
    let upper = rho_upper(set, 8).unwrap().value;
    set.scaled(factor / upper.max(1e-12))
}

#[test]
fn bracket_monotone_in_depth() {
    for set in random_pairs(50, 7) {
        let mut prev_lo = 0.0;
        let mut prev_hi = f64::INFINITY;
        for len in 1..=8 {
            let lo = rho_lower(&set, len).unwrap().value;
            let hi = rho_upper(&set, len).unwrap().value;
            assert!(lo >= prev_lo - 1e-12, "{}: lower fell at {len}", set.label());
            assert!(hi <= prev_hi + 1e-12, "{}: upper rose at {len}", set.label());
            assert!(lo <= hi * (1.0 + 1e-12), "{}: crossed at {len}", set.label());
            prev_lo = lo;
            prev_hi = hi;
        }
        let b = gripenberg(&set, GripenbergOptions { delta: 1e-3, budget: 200_000, max_depth: 32 }).unwrap();
        assert!(b.lower <= b.upper * (1.0 + 1e-12));
        assert!(b.lower <= prev_hi * (1.0 + 1e-12) && b.upper >= prev_lo * (1.0 - 1e-12));
    }
}

#[test]
fn bracket_scales_linearly() {
    for set in random_pairs(50, 8) {
        let c = 0.37;
        let a = rho_lower(&set, 6).unwrap().value;
        let b = rho_lower(&set.scaled(c), 6).unwrap().value;
        assert!((c * a - b).abs() <= 1e-12 * (1.0 + a));
        let a = rho_upper(&set, 6).unwrap().value;
        let b = rho_upper(&set.scaled(c), 6).unwrap().value;
        assert!((c * a - b).abs() <= 1e-12 * (1.0 + a));
    }
}

fn roundtrip<T: serde::Serialize + serde::de::DeserializeOwned>(v: &T) -> T {
    serde_json::from_str(&serde_json::to_string(v).unwrap()).unwrap()
}

#[test]
fn quadratic_certificates_revalidate() {
    let mut checked = 0;
    for set in random_pairs(30, 9) {
        let set = contracted(&set, 0.97);
        for out in [
            cqlf(&set, 1.0).unwrap(),
            max_of_quadratics(&set, 1, 1.0).unwrap(),
            min_of_quadratics(&set, 2, 1.0).unwrap(),
        ] {
            if let Some(cert) = out.certificate() {
                let again: PiecewiseQuadraticCertificate = roundtrip(cert);
                assert_eq!(&again, cert);
                let v = validate_quadratic(&again, DEFAULT_SEED).unwrap();
                assert!(v.passed, "{}: {v:?}", set.label());
                checked += 1;
            }
        }
    }
    assert!(checked >= 60, "only {checked} certificates found");
}

#[test]
fn sos_certificates_revalidate() {
    let mut checked = 0;
    for set in random_pairs(20, 10) {
        let set = contracted(&set, 0.98);
        for d in [2, 4] {
            if let Some(cert) = sos_lyapunov_feasible(&set, d, 1.0).unwrap().certificate() {
                let again: SosLyapunovCertificate = roundtrip(cert);
                let v = validate_sos(&again, DEFAULT_SEED).unwrap();
                assert!(v.passed, "{} d={d}: {v:?}", set.label());
                checked += 1;
            }
        }
    }
    assert!(checked >= 20, "only {checked} certificates found");
}

#[test]
fn polytope_certificates_revalidate() {
    let mut checked = 0;
    for set in random_pairs(30, 11) {
        let set = contracted(&set, 0.95);
        let out = invariant_polytope_iterate(&set, 1.0, 200, InitMode::Eig).unwrap();
        if let Some(cert) = out.certificate() {
            let again: PolytopeCertificate = roundtrip(cert);
            let v = validate_polytope(&again, DEFAULT_SEED).unwrap();
            assert!(v.passed, "{}: {v:?}", set.label());
            checked += 1;
        }
    }
    assert!(checked >= 20, "only {checked} certificates found");
}

#[test]
fn min_degree_monotone_under_shrinking() {
    for k in [2, 3] {
        let set = lagarias_wang_experiment(k).unwrap();
        let full = min_sos_degree(&set, 4 * k + 4).unwrap().min_degree.unwrap();
        let shrunk = min_sos_degree(&set.scaled(0.95), 4 * k + 4).unwrap().min_degree.unwrap();
        assert!(shrunk <= full, "k={k}: {shrunk} > {full}");
    }
}
