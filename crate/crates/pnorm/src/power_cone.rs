//! Second-order-cone representations of the geometric-mean cone and of the
//! three-variable power cone K(p) = {(u,v,t) ≥ 0 : v^{p/(p−2)} ≤ t·u^{2/(p−2)}}.
//!
//! Blocks are templates over local slots. [`ConicProgram::add_block`] binds the
//! input slots to existing variables and allocates the auxiliary ones, so a
//! single template per exponent can be instantiated many times.
//!
//! [`ConicProgram::add_block`]: crate::conic::ConicProgram::add_block

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::RationalExponent;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Input(usize),
    Aux(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockConstraint {
    /// ‖(w, (x − y)/2)‖₂ ≤ (x + y)/2.
    RotatedPair { w: Slot, x: Slot, y: Slot },
    /// w ≤ bound.
    Le { w: Slot, bound: Slot },
    /// w ≥ 0.
    NonNeg(Slot),
}

/// Position of a constraint in the binary tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Root,
    Internal,
    Leaf,
    Sign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub num_inputs: usize,
    pub num_aux: usize,
    /// Sizes of the auxiliary layers z¹, …, z^{k−1} (2, 4, …, 2^{k−1}).
    pub aux_layers: Vec<usize>,
    pub constraints: Vec<BlockConstraint>,
    pub roles: Vec<Role>,
}

impl ConeBlock {
    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    fn push(&mut self, c: BlockConstraint, role: Role) {
        self.constraints.push(c);
        self.roles.push(role);
    }
}

/// Slot of z^i_j (both one-based, as in the tree notation).
fn z(i: usize, j: usize) -> Slot {
    Slot::Aux((1 << i) - 2 + j - 1)
}

/// Empty tree of depth k with root and internal layers already emitted;
/// `top` is the slot bounded by the root.
fn tree_skeleton(k: usize, num_inputs: usize, top: Slot) -> ConeBlock {
    let aux_layers: Vec<usize> = (1..k).map(|i| 1 << i).collect();
    let mut b = ConeBlock {
        num_inputs,
        num_aux: aux_layers.iter().sum(),
        aux_layers,
        constraints: Vec::new(),
        roles: Vec::new(),
    };
    if k >= 2 {
        b.push(BlockConstraint::RotatedPair { w: top, x: z(1, 1), y: z(1, 2) }, Role::Root);
        for i in 1..k - 1 {
            for j in 1..=(1 << i) {
                b.push(
                    BlockConstraint::RotatedPair { w: z(i, j), x: z(i + 1, 2 * j - 1), y: z(i + 1, 2 * j) },
                    Role::Internal,
                );
            }
        }
    }
    b
}

/// y ≤ (x₁ x₂ ⋯ x_{2^k})^{1/2^k} with x ≥ 0. Inputs are slots 0..2^k for the
/// x's followed by y.
pub fn geo_mean_block(k: usize) -> Result<ConeBlock> {
    if k == 0 || k > 20 {
        return Err(Error::invalid(format!("geometric-mean depth must be in 1..=20, got {k}")));
    }
    let nx = 1usize << k;
    let y = Slot::Input(nx);
    if k == 1 {
        let mut b = tree_skeleton(1, 3, y);
        b.push(BlockConstraint::RotatedPair { w: y, x: Slot::Input(0), y: Slot::Input(1) }, Role::Root);
        return Ok(b);
    }
    let mut b = tree_skeleton(k, nx + 1, y);
    for j in 1..=(1 << (k - 1)) {
        b.push(
            BlockConstraint::RotatedPair {
                w: z(k - 1, j),
                x: Slot::Input(2 * j - 2),
                y: Slot::Input(2 * j - 1),
            },
            Role::Leaf,
        );
    }
    Ok(b)
}

/// Geometric-mean block for a caller-supplied number of x handles; rejects
/// counts that are not a power of two.
pub fn geo_mean_block_for(num_x: usize) -> Result<ConeBlock> {
    if num_x < 2 || !num_x.is_power_of_two() {
        return Err(Error::invalid(format!("geometric mean needs 2^k inputs, got {num_x}")));
    }
    geo_mean_block(num_x.trailing_zeros() as usize)
}

/// (a, b, k) with 1/p = a/b reduced and k = ⌈log₂(b + 1)⌉.
pub fn rational_decompose(p: RationalExponent) -> Result<(u64, u64, usize)> {
    p.require_above_two()?;
    let b = p.b;
    // Smallest k with 2^k ≥ b + 1.
    let k = (64 - b.leading_zeros()) as usize;
    debug_assert!(1u128 << k > b as u128 && (k == 0 || (1u128 << (k - 1)) <= b as u128));
    Ok((p.a, b, k))
}

/// Membership block for (u, v, t) ∈ K(p); inputs are slots 0 = u, 1 = v, 2 = t.
pub fn k3p_block(p: RationalExponent) -> Result<ConeBlock> {
    let (a, b, k) = rational_decompose(p)?;
    let (a, b) = (a as usize, b as usize);
    let (u, v, t) = (Slot::Input(0), Slot::Input(1), Slot::Input(2));
    let mut blk = tree_skeleton(k, 3, v);
    let half_floor = b / 2;
    let half_ceil = b.div_ceil(2);
    for j in 1..=(1 << (k - 1)) {
        let w = z(k - 1, j);
        let c = if j <= a {
            BlockConstraint::Le { w, bound: u }
        } else if j <= half_floor {
            BlockConstraint::Le { w, bound: t }
        } else if b % 2 == 1 && j == half_ceil {
            BlockConstraint::RotatedPair { w, x: t, y: v }
        } else {
            BlockConstraint::Le { w, bound: v }
        };
        blk.push(c, Role::Leaf);
    }
    for s in [u, v, t] {
        blk.push(BlockConstraint::NonNeg(s), Role::Sign);
    }
    for i in 0..blk.num_aux {
        blk.push(BlockConstraint::NonNeg(Slot::Aux(i)), Role::Sign);
    }
    Ok(blk)
}

/// θ_p = (2/p)^{2/(p−2)} − (2/p)^{p/(p−2)}.
pub fn theta(p: f64) -> f64 {
    let r = 2.0 / p;
    r.powf(2.0 / (p - 2.0)) - r.powf(p / (p - 2.0))
}

/// Direct test of v^{p/(p−2)} ≤ t·u^{2/(p−2)}; returns the signed gap
/// t·u^{2/(p−2)} − v^{p/(p−2)} (negative outside the cone).
pub fn k3p_gap(u: f64, v: f64, t: f64, p: f64) -> f64 {
    t * u.powf(2.0 / (p - 2.0)) - v.powf(p / (p - 2.0))
}
