use pnorm::covering::{build_h1, build_h2, build_hh, default_alpha, Certificate, H3Constants, HittingSet, DEFAULT_CAP};
use pnorm::error::Error;
use pnorm::matrix_norms::{matrix_pu, spectral_pnorm_oracle, DELTA_G};
use pnorm::tensor::{DenseTensor, ModePartition, RationalExponent};
use pnorm::tensor_norms::{
    alg2_spectral, alg3_unfold_nuclear, alg4_partition_nuclear, alg5_cover_nuclear_order3, alg6_cover_nuclear,
    alg7_randomized, gen_identity_tensor, gen_known_nuclear_instance, identity_spectral_value, mode_order,
    rank_one_sum, vector_bounds, DEFAULT_PROGRAM_BUDGET,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn three() -> RationalExponent {
    RationalExponent::parse("3").unwrap()
}

fn signed_pair(p: f64) -> HittingSet {
    let mut h = HittingSet::explicit(p, vec![vec![1.0], vec![-1.0]]).unwrap();
    // {±1} hits every point of the ℓq sphere in ℝ¹ with ratio one.
    h.tau = 1.0;
    h.certificate = Certificate::Deterministic;
    h
}

/// Checks that a certificate Z is dual feasible (spectral norm at most one up
/// to the local oracle) and attains the reported value.
fn check_certificate(t: &DenseTensor, z: &DenseTensor, value: f64, p: f64) {
    assert_eq!(z.shape(), t.shape());
    let attained = t.inner(z).unwrap();
    assert!((attained - value).abs() <= 1e-6 * (1.0 + value), "⟨T, Z⟩ = {attained} vs {value}");
    let sz = spectral_pnorm_oracle(z, p, 10, 3).unwrap();
    assert!(sz <= 1.0 + 1e-6, "certificate spectral norm {sz}");
}

#[test]
fn identity_tensor_values() {
    for n in 1..=4 {
        let t = gen_identity_tensor(n, 3).unwrap();
        let v = spectral_pnorm_oracle(&t, 3.0, 10, 0).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        let v4 = spectral_pnorm_oracle(&t, 4.0, 10, 0).unwrap();
        assert!((v4 - identity_spectral_value(n, 3, 4.0)).abs() < 1e-6, "n = {n}: {v4}");
    }
    assert!((identity_spectral_value(4, 3, 4.0) - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(identity_spectral_value(5, 4, 4.0), 1.0);
}

#[test]
fn every_method_brackets_known_nuclear_norms() {
    let a = default_alpha();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for r in [1usize, 2, 4] {
        let (t, truth) = gen_known_nuclear_instance(3, 3, r, &mut rng).unwrap();
        let (lo, hi) = vector_bounds(&t, 3.0);
        assert!(lo <= truth * (1.0 + 1e-9) && truth <= hi * (1.0 + 1e-9));

        let h2 = build_h2(3, 3.0, a, a + 1.0, DEFAULT_CAP).unwrap();
        let h1 = build_h1(3, 3.0, a, a + 1.0, DEFAULT_CAP).unwrap();
        let estimates = [
            alg3_unfold_nuclear(&t, three(), None, TOL).unwrap(),
            alg4_partition_nuclear(&t, three(), TOL).unwrap(),
            alg5_cover_nuclear_order3(&t, three(), &h1, TOL, DEFAULT_PROGRAM_BUDGET).unwrap(),
            alg6_cover_nuclear(&t, three(), &[h2], TOL, DEFAULT_PROGRAM_BUDGET).unwrap(),
            alg7_randomized(&t, three(), 0.05, H3Constants::default(), 4, TOL, DEFAULT_PROGRAM_BUDGET).unwrap(),
        ];
        for est in &estimates {
            let label = format!("{} r={r}", est.method);
            assert!(est.value <= truth * (1.0 + 1e-6), "{label}: value {} above {truth}", est.value);
            assert!(est.lower <= truth * (1.0 + 1e-6), "{label}");
            assert!(est.upper >= truth * (1.0 - 1e-6), "{label}: upper {} below {truth}", est.upper);
            check_certificate(&t, est.certificate.as_ref().unwrap(), est.value, 3.0);
            if let Some(opt) = est.program_optimum {
                assert!(opt >= truth / DELTA_G * (1.0 - 1e-6), "{label}");
                let prod: f64 = est.taus.iter().product();
                assert!((est.value - prod * opt).abs() <= 1e-9 * (1.0 + est.value));
            }
        }
    }
}

#[test]
fn rank_one_instances_are_recovered_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [2usize, 3, 4] {
        let (t, truth) = gen_known_nuclear_instance(n, 3, 1, &mut rng).unwrap();
        for est in [alg3_unfold_nuclear(&t, three(), None, TOL).unwrap(), alg4_partition_nuclear(&t, three(), TOL).unwrap()] {
            assert!((est.value / truth - 1.0).abs() < 1e-6, "{} n={n}: {}", est.method, est.value / truth);
        }
    }
}

#[test]
fn unfolding_accepts_explicit_partitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = DenseTensor::from_fn(vec![2, 3, 2, 2], |_| rng.gen_range(-1.0..1.0)).unwrap();
    let p = RationalExponent::parse("4").unwrap();
    let default = alg3_unfold_nuclear(&t, p, None, TOL).unwrap();
    let explicit = alg3_unfold_nuclear(&t, p, Some(&ModePartition::new(vec![0, 2], vec![1, 3])), TOL).unwrap();
    for est in [&default, &explicit] {
        assert!(est.lower <= est.upper);
        check_certificate(&t, est.certificate.as_ref().unwrap(), est.value, 4.0);
    }
    assert!(alg3_unfold_nuclear(&t, p, Some(&ModePartition::new(vec![0], vec![1])), TOL).is_err());
}

#[test]
fn covering_a_trivial_mode_reduces_to_the_matrix_program() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (m, n) in [(2usize, 3usize), (3, 3)] {
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = DenseTensor::new(vec![1, m, n], data.clone()).unwrap();
        let a = DenseTensor::from_matrix(m, n, data).unwrap();
        let cover = alg6_cover_nuclear(&t, three(), &[signed_pair(3.0)], TOL, DEFAULT_PROGRAM_BUDGET).unwrap();
        let pu = matrix_pu(&a, three(), TOL).unwrap();
        assert!((cover.value - pu.value).abs() < 1e-6 * (1.0 + pu.value), "{} vs {}", cover.value, pu.value);
    }
}

#[test]
fn spectral_covering_brackets_the_oracle() {
    let a = default_alpha();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let t = DenseTensor::from_fn(vec![3, 3, 3], |_| rng.gen_range(-1.0..1.0)).unwrap();
        let h = build_hh(3, 3.0, a, a + 1.0, DEFAULT_CAP).unwrap();
        let est = alg2_spectral(&t, three(), &[h], TOL, 10_000).unwrap();
        let oracle = spectral_pnorm_oracle(&t, 3.0, 20, 1).unwrap();
        assert!(est.lower <= oracle * (1.0 + 1e-6), "{} > {oracle}", est.lower);
        assert!(oracle <= est.upper * (1.0 + 1e-6), "{oracle} > {}", est.upper);
    }
    let id = gen_identity_tensor(3, 3).unwrap();
    let h = build_hh(3, 3.0, a, a + 1.0, DEFAULT_CAP).unwrap();
    let est = alg2_spectral(&id, three(), std::slice::from_ref(&h), TOL, 10_000).unwrap();
    assert!(est.lower <= 1.0 + 1e-6 && est.upper >= 1.0 - 1e-6);
    assert!(matches!(alg2_spectral(&id, three(), &[h], TOL, 1), Err(Error::Budget(_))));
}

#[test]
fn modes_are_reordered_and_restored() {
    assert_eq!(mode_order(&[4, 2, 3, 2]), vec![1, 3, 2, 0]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = DenseTensor::from_fn(vec![3, 2, 2], |_| rng.gen_range(0.0..1.0)).unwrap();
    let h = build_h2(2, 3.0, default_alpha(), default_alpha() + 1.0, DEFAULT_CAP).unwrap();
    let est = alg6_cover_nuclear(&t, three(), &[h], TOL, DEFAULT_PROGRAM_BUDGET).unwrap();
    check_certificate(&t, est.certificate.as_ref().unwrap(), est.value, 3.0);
}

#[test]
fn covering_rejects_mismatched_sets_and_budgets() {
    let t = gen_identity_tensor(3, 3).unwrap();
    let a = default_alpha();
    let h4 = build_h2(4, 3.0, a, a + 1.0, DEFAULT_CAP).unwrap();
    let h3 = build_h2(3, 3.0, a, a + 1.0, DEFAULT_CAP).unwrap();
    let h3p4 = build_h2(3, 4.0, a, a + 1.0, DEFAULT_CAP).unwrap();
    assert!(alg6_cover_nuclear(&t, three(), &[h4], TOL, DEFAULT_PROGRAM_BUDGET).is_err());
    assert!(alg6_cover_nuclear(&t, three(), &[h3p4], TOL, DEFAULT_PROGRAM_BUDGET).is_err());
    assert!(alg6_cover_nuclear(&t, three(), &[], TOL, DEFAULT_PROGRAM_BUDGET).is_err());
    assert!(matches!(alg6_cover_nuclear(&t, three(), &[h3], TOL, 10), Err(Error::Budget(_))));
    assert!(alg4_partition_nuclear(&t, RationalExponent::parse("2").unwrap(), TOL).is_err());
}

#[test]
fn randomized_covering_is_seed_deterministic() {
    let t = rank_one_sum(3, 3, &[(0.7, vec![0.5, 0.6, 0.7]), (0.2, vec![1.0, 0.0, 0.0])]).unwrap();
    let run = |seed| {
        alg7_randomized(&t, three(), 0.05, H3Constants::default(), seed, TOL, DEFAULT_PROGRAM_BUDGET).unwrap()
    };
    let (a, b, c) = (run(1), run(1), run(2));
    assert_eq!(a.value, b.value);
    assert_eq!(a.certificate, b.certificate);
    assert_ne!(a.certificate, c.certificate);
}

#[test]
fn zero_tensor_has_zero_norm() {
    let t = DenseTensor::zeros(vec![2, 2, 2]).unwrap();
    let h = build_h2(2, 3.0, default_alpha(), default_alpha() + 1.0, DEFAULT_CAP).unwrap();
    assert_eq!(alg6_cover_nuclear(&t, three(), &[h], TOL, DEFAULT_PROGRAM_BUDGET).unwrap().value, 0.0);
    assert_eq!(alg4_partition_nuclear(&t, three(), TOL).unwrap().value, 0.0);
}

#[test]
#[ignore = "slow: n = 7 covering program"]
fn seven_dimensional_instances() {
    let a = default_alpha();
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let (t, truth) = gen_known_nuclear_instance(7, 3, 3, &mut rng).unwrap();
    let h = build_h2(7, 3.0, a, a + 1.0, DEFAULT_CAP).unwrap();
    let est = alg6_cover_nuclear(&t, three(), &[h], TOL, 10_000_000).unwrap();
    assert!(est.value <= truth * (1.0 + 1e-6) && est.upper >= truth * (1.0 - 1e-6));
    let unf = alg3_unfold_nuclear(&t, three(), None, TOL).unwrap();
    assert!(unf.value <= truth * (1.0 + 1e-6));
}

#[test]
fn order_four_covering_brackets_known_norms() {
    let a = default_alpha();
    let p = RationalExponent::parse("4").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for r in [1usize, 3] {
        let (t, truth) = gen_known_nuclear_instance(2, 4, r, &mut rng).unwrap();
        let h = build_h2(2, 4.0, a, a + 1.0, DEFAULT_CAP).unwrap();
        // Listing every vector together with its negation changes nothing.
        let mut doubled = h.clone();
        doubled.vectors.extend(h.vectors.iter().map(|v| v.iter().map(|x| -x).collect::<Vec<f64>>()));
        let est = alg6_cover_nuclear(&t, p, &[h.clone(), h], TOL, DEFAULT_PROGRAM_BUDGET).unwrap();
        let est2 = alg6_cover_nuclear(&t, p, &[doubled.clone(), doubled], TOL, DEFAULT_PROGRAM_BUDGET).unwrap();
        assert!((est.value - est2.value).abs() < 1e-7 * (1.0 + est.value));
        assert!(est.value <= truth * (1.0 + 1e-6) && est.upper >= truth * (1.0 - 1e-6), "r = {r}");
        check_certificate(&t, est.certificate.as_ref().unwrap(), est.value, 4.0);
        let unf = alg3_unfold_nuclear(&t, p, None, TOL).unwrap();
        assert!(unf.value <= truth * (1.0 + 1e-6) && unf.upper >= truth * (1.0 - 1e-6));
    }
}
