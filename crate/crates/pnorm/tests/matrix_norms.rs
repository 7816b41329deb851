use pnorm::matrix_norms::{holder_response, matrix_pu, matrix_pv, matrix_pv_primal, spectral_pnorm_oracle, DELTA_G};
use pnorm::tensor::{lp_norm, outer, DenseTensor, RationalExponent};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn matrix_strategy() -> impl Strategy<Value = DenseTensor> {
    (1usize..4, 1usize..4).prop_flat_map(|(m, n)| {
        prop::collection::vec(-1.0f64..1.0, m * n).prop_map(move |d| DenseTensor::from_matrix(m, n, d).unwrap())
    })
}

fn exponent() -> impl Strategy<Value = RationalExponent> {
    prop::sample::select(vec!["5/2", "3", "4", "7/2"]).prop_map(|s| RationalExponent::parse(s).unwrap())
}

/// Brute-force max of xᵀAy over a fine grid of the ℓp unit circle, for 2 × 2
/// matrices. Independent of the alternating oracle.
fn grid_spectral_2x2(a: &DenseTensor, p: f64) -> f64 {
    let pts: Vec<[f64; 2]> = (0..4000)
        .map(|i| {
            let th = i as f64 * std::f64::consts::TAU / 4000.0;
            let v = [th.cos(), th.sin()];
            let n = lp_norm(&v, p).unwrap();
            [v[0] / n, v[1] / n]
        })
        .collect();
    let mut best: f64 = 0.0;
    for x in &pts {
        let g = [x[0] * a.at(0, 0) + x[1] * a.at(1, 0), x[0] * a.at(0, 1) + x[1] * a.at(1, 1)];
        best = best.max(holder_response(&g, p).1);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pv_sandwiches_the_spectral_norm(a in matrix_strategy(), p in exponent(), seed in any::<u64>()) {
        let est = matrix_pv(&a, p, TOL).unwrap();
        let oracle = spectral_pnorm_oracle(&a, p.value(), 20, seed).unwrap();
        prop_assert!(oracle <= est.value + 1e-6);
        prop_assert!(est.value <= DELTA_G * oracle + 1e-6);
        prop_assert!(est.lower <= oracle + 1e-6 && oracle <= est.upper + 1e-6);
    }

    #[test]
    fn primal_and_dual_programs_agree(a in matrix_strategy(), p in exponent()) {
        let dual = matrix_pv(&a, p, TOL).unwrap().value;
        let primal = matrix_pv_primal(&a, p, TOL).unwrap();
        prop_assert!((dual - primal).abs() <= 1e-6 * (1.0 + dual));
    }

    #[test]
    fn pu_and_pv_satisfy_weak_duality(a in matrix_strategy(), p in exponent(), seed in any::<u64>()) {
        let est = matrix_pu(&a, p, TOL).unwrap();
        // Any B gives ⟨A, B⟩ ≤ pu(A) · pv(B).
        let (m, n) = (a.shape()[0], a.shape()[1]);
        let b = DenseTensor::from_fn(vec![m, n], |idx| {
            let h = seed.wrapping_mul(idx[0] as u64 * 31 + idx[1] as u64 + 7);
            (h >> 40) as f64 / (1u64 << 24) as f64 - 0.5
        }).unwrap();
        let pvb = matrix_pv(&b, p, TOL).unwrap().value;
        prop_assert!(a.inner(&b).unwrap() <= est.value * pvb + 1e-6);
        // The certificate attains the value and is feasible.
        let z = est.certificate.as_ref().unwrap();
        prop_assert!((a.inner(z).unwrap() - est.value).abs() <= 1e-6 * (1.0 + est.value));
        prop_assert!(matrix_pv(z, p, TOL).unwrap().value <= 1.0 + 1e-6);
    }

    #[test]
    fn pu_is_exact_on_nonnegative_rank_one(
        u in prop::collection::vec(0.0f64..1.0, 1..4),
        v in prop::collection::vec(0.0f64..1.0, 1..4),
        p in exponent(),
    ) {
        let pf = p.value();
        let truth = lp_norm(&u, pf).unwrap() * lp_norm(&v, pf).unwrap();
        let got = matrix_pu(&outer(&u, &v), p, TOL).unwrap().value;
        prop_assert!(got <= truth * (1.0 + 1e-6) + 1e-9);
        prop_assert!(got >= truth / DELTA_G - 1e-9);
    }
}

#[test]
fn oracle_matches_grid_search() {
    let mats = [[1.0, 0.5, -0.3, 0.8], [0.2, -1.0, 1.0, 0.2], [1.0, 1.0, 1.0, -1.0]];
    for (i, d) in mats.iter().enumerate() {
        let a = DenseTensor::from_matrix(2, 2, d.to_vec()).unwrap();
        for p in [2.5, 3.0, 4.0] {
            let grid = grid_spectral_2x2(&a, p);
            let oracle = spectral_pnorm_oracle(&a, p, 20, i as u64).unwrap();
            assert!((grid - oracle).abs() < 1e-5, "matrix {i}, p = {p}: grid {grid} oracle {oracle}");
        }
    }
}

#[test]
fn invalid_exponents_and_shapes_are_rejected() {
    let a = DenseTensor::from_matrix(2, 2, vec![1.0; 4]).unwrap();
    assert!(matrix_pv(&a, RationalExponent::parse("2").unwrap(), TOL).is_err());
    assert!(matrix_pu(&a, RationalExponent::parse("3/2").unwrap(), TOL).is_err());
    let t = DenseTensor::zeros(vec![2, 2, 2]).unwrap();
    assert!(matrix_pv(&t, RationalExponent::parse("3").unwrap(), TOL).is_err());
}
