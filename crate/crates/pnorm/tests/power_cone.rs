use pnorm::conic::{ConicProgram, LinExpr, Sense, SolveStatus};
use pnorm::power_cone::{geo_mean_block, k3p_block, k3p_gap, rational_decompose, BlockConstraint, ConeBlock, Role, Slot};
use pnorm::tensor::RationalExponent;
use proptest::prelude::*;

const EXPONENTS: [&str; 6] = ["5/2", "3", "4", "7/2", "10/3", "9/4"];

/// Fills the auxiliary slots with the largest values each constraint allows,
/// working from the leaves up, then checks every constraint. Because each
/// auxiliary is maximal, the block is satisfiable iff this witness is.
fn greedy_witness_ok(block: &ConeBlock, inputs: &[f64]) -> bool {
    let mut aux = vec![f64::NAN; block.num_aux];
    let val = |s: Slot, aux: &[f64]| match s {
        Slot::Input(i) => inputs[i],
        Slot::Aux(i) => aux[i],
    };
    for (c, role) in block.constraints.iter().zip(&block.roles).rev() {
        if *role == Role::Root || *role == Role::Sign {
            continue;
        }
        let (w, value) = match *c {
            BlockConstraint::Le { w, bound } => (w, val(bound, &aux)),
            BlockConstraint::RotatedPair { w, x, y } => (w, (val(x, &aux) * val(y, &aux)).max(0.0).sqrt()),
            BlockConstraint::NonNeg(_) => continue,
        };
        if let Slot::Aux(i) = w {
            aux[i] = value;
        }
    }
    block.constraints.iter().all(|c| match *c {
        BlockConstraint::Le { w, bound } => val(w, &aux) <= val(bound, &aux) + 1e-12,
        BlockConstraint::RotatedPair { w, x, y } => {
            let (w, x, y) = (val(w, &aux), val(x, &aux), val(y, &aux));
            x >= 0.0 && y >= 0.0 && w * w <= x * y * (1.0 + 1e-12) + 1e-300
        }
        BlockConstraint::NonNeg(w) => val(w, &aux) >= 0.0,
    })
}

fn solver_feasible(p: RationalExponent, u: f64, v: f64, t: f64) -> bool {
    let blk = k3p_block(p).unwrap();
    let mut prog = ConicProgram::new(Sense::Minimize);
    let x = prog.add_vars(3);
    for (var, val) in x.iter().zip([u, v, t]) {
        prog.add_eq(LinExpr::var(*var), LinExpr::constant(val));
    }
    prog.add_block(&blk, &x).unwrap();
    prog.solve(1e-9).unwrap().status == SolveStatus::Optimal
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_witness_matches_direct_inequality(
        pi in 0..EXPONENTS.len(),
        u in 0.0f64..3.0,
        t in 0.0f64..3.0,
        scale in 0.3f64..1.7,
    ) {
        let p = RationalExponent::parse(EXPONENTS[pi]).unwrap();
        let pf = p.value();
        let v = (t * u.powf(2.0 / (pf - 2.0))).powf((pf - 2.0) / pf) * scale;
        let gap = k3p_gap(u, v, t, pf);
        prop_assume!(gap.abs() > 1e-6);
        let blk = k3p_block(p).unwrap();
        prop_assert_eq!(greedy_witness_ok(&blk, &[u, v, t]), gap > 0.0);
    }

    #[test]
    fn solver_feasibility_matches_direct_inequality(
        pi in 0..4usize,
        u in 0.0f64..2.0,
        t in 0.0f64..2.0,
        scale in 0.5f64..1.5,
    ) {
        let p = RationalExponent::parse(EXPONENTS[pi]).unwrap();
        let pf = p.value();
        let v = (t * u.powf(2.0 / (pf - 2.0))).powf((pf - 2.0) / pf) * scale;
        let gap = k3p_gap(u, v, t, pf);
        prop_assume!(gap.abs() > 1e-6);
        prop_assert_eq!(solver_feasible(p, u, v, t), gap > 0.0);
    }

    #[test]
    fn geo_mean_block_is_tight(k in 1usize..=4, seed in prop::collection::vec(0.01f64..5.0, 16)) {
        let blk = geo_mean_block(k).unwrap();
        let nx = 1 << k;
        let xs = &seed[..nx];
        let g = xs.iter().map(|x| x.ln()).sum::<f64>() / nx as f64;
        let g = g.exp();
        let mut inputs = xs.to_vec();
        inputs.push(g * (1.0 - 1e-9));
        prop_assert!(greedy_witness_ok(&blk, &inputs));
        *inputs.last_mut().unwrap() = g * (1.0 + 1e-6);
        prop_assert!(!greedy_witness_ok(&blk, &inputs));
    }
}

#[test]
fn block_sizes_follow_the_denominator() {
    for (s, a, b, k) in [("5/2", 2, 5, 3), ("3", 1, 3, 2), ("4", 1, 4, 3), ("7/2", 2, 7, 3), ("9/4", 4, 9, 4)] {
        let p = RationalExponent::parse(s).unwrap();
        assert_eq!(rational_decompose(p).unwrap(), (a, b, k), "p = {s}");
        let blk = k3p_block(p).unwrap();
        assert_eq!(blk.count(Role::Leaf), 1 << (k - 1));
        assert_eq!(blk.count(Role::Root), 1);
        assert_eq!(blk.num_aux, (1 << k) - 2);
    }
    assert!(rational_decompose(RationalExponent::parse("2").unwrap()).is_err());
    assert!(geo_mean_block(0).is_err());
}

#[test]
fn program_json_round_trip_and_block_removal() {
    let p = RationalExponent::parse("7/2").unwrap();
    let blk = k3p_block(p).unwrap();
    let mut prog = ConicProgram::new(Sense::Minimize);
    let x = prog.add_vars(3);
    prog.add_eq(LinExpr::var(x[0]), LinExpr::constant(1.0));
    prog.add_eq(LinExpr::var(x[2]), LinExpr::constant(1.0));
    prog.set_objective(LinExpr::var(x[1]).term(x[0], 0.0));
    let before = prog.to_json();
    let first = prog.add_block(&blk, &x).unwrap();
    let second = prog.add_block(&blk, &x).unwrap();
    assert!(prog.remove_block(&first).is_err(), "only the latest block may be removed");
    let restored = ConicProgram::from_json(&prog.to_json()).unwrap();
    assert_eq!(restored.to_json(), prog.to_json());
    prog.remove_block(&second).unwrap();
    prog.remove_block(&first).unwrap();
    // Nonnegativity flags on the inputs stay behind.
    let mut reference = ConicProgram::from_json(&before).unwrap();
    for v in &x {
        reference.set_nonneg(*v);
    }
    assert_eq!(prog.to_json(), reference.to_json());
}

#[test]
fn maximizing_v_inside_the_cone_hits_the_boundary() {
    // With u = t = 1 the largest v is 1; with u = 4, t = 1 and p = 4 it is
    // (1 · 4^{1})^{1/2} = 2.
    for (ps, u, t, want) in [("3", 1.0, 1.0, 1.0), ("4", 4.0, 1.0, 2.0)] {
        let p = RationalExponent::parse(ps).unwrap();
        let mut prog = ConicProgram::new(Sense::Maximize);
        let x = prog.add_vars(3);
        prog.add_eq(LinExpr::var(x[0]), LinExpr::constant(u));
        prog.add_eq(LinExpr::var(x[2]), LinExpr::constant(t));
        prog.add_block(&k3p_block(p).unwrap(), &x).unwrap();
        prog.set_objective(LinExpr::var(x[1]));
        let got = prog.solve(1e-10).unwrap().optimal_value().unwrap();
        assert!((got - want).abs() < 1e-7, "p = {ps}: {got} vs {want}");
    }
}
