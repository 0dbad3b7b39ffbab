//! Direct loop sums for c-numbers of products of two quadratic fields,
//! assembled from omega and S_adv blocks. No functional-algebra code.
//!
//! A quadratic field is a coordinate tensor beta on an index set,
//! F(B1, B2) = sum beta_ab B1_a B2_b, beta antisymmetric. With B_a = <f_a, B>
//! and K_ab = K(f_a, f_b), the two-contraction Wick sum of F then G is
//! -1/2 sum_{cd} (K^T beta_F K)_{cd} beta_G{cd}.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::background::Perturbation;
use crate::dirac::{operator_blocks, Dirac, Prop};
use crate::states::TwoPoint;
use crate::C64;

pub type CMat = DMatrix<C64>;

pub struct Quadratic {
    pub idx: Vec<usize>,
    pub beta: CMat,
}

/// beta for j(A): the derivative of the action B1 ^ B2 -> w sum_r (v1 . D u2 - v2 . D u1)_r.
pub fn current_tensor(d: &Dirac, a: &Perturbation) -> Quadratic {
    let l = d.layout;
    let b = l.b;
    let w = d.weight();
    let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    for (r, c, blk) in operator_blocks(&d.bg, d.params.wilson_r, Some(a)) {
        for i in 0..b {
            for j in 0..b {
                let v = blk[i * b + j];
                if v.norm() == 0.0 {
                    continue;
                }
                let (vi, uj) = (l.nu + r * b + i, c * b + j);
                *acc.entry((vi, uj)).or_default() += v * w;
                *acc.entry((uj, vi)).or_default() -= v * w;
            }
        }
    }
    let mut idx: Vec<usize> = acc.keys().flat_map(|&(x, y)| [x, y]).collect();
    idx.sort_unstable();
    idx.dedup();
    let n = idx.len();
    let mut beta = CMat::zeros(n, n);
    for ((x, y), v) in acc {
        beta[(idx.binary_search(&x).unwrap(), idx.binary_search(&y).unwrap())] += v;
    }
    Quadratic { idx, beta }
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

fn embed(q: &Quadratic, u: &[usize]) -> CMat {
    let pos: Vec<usize> = q.idx.iter().map(|i| u.binary_search(i).unwrap()).collect();
    let mut m = CMat::zeros(u.len(), u.len());
    for (a, &pa) in pos.iter().enumerate() {
        for (b, &pb) in pos.iter().enumerate() {
            m[(pa, pb)] = q.beta[(a, b)];
        }
    }
    m
}

/// K_ab = K(f_a, f_b) for the dual basis f_a = e_{sigma a} / w.
fn dual_block(d: &Dirac, raw: impl Fn(&[usize]) -> CMat, u: &[usize]) -> CMat {
    let l = d.layout;
    let s: Vec<usize> = u.iter().map(|&i| l.sigma(i)).collect();
    raw(&s) / C64::from(d.weight() * d.weight())
}

pub fn omega_dual(d: &Dirac, omega: &TwoPoint, u: &[usize]) -> CMat {
    dual_block(d, |s| omega.omega_block(s, s), u)
}

pub fn feynman_dual(d: &Dirac, omega: &TwoPoint, u: &[usize]) -> CMat {
    let adv = dual_block(d, |s| d.pairing_block(s, s, Prop::Adv), u);
    omega_dual(d, omega, u) + adv * C64::new(0.0, 1.0)
}

fn loop_sum(k: &CMat, bf: &CMat, bg: &CMat) -> C64 {
    let m = k.transpose() * bf * k;
    m.iter().zip(bg.iter()).map(|(x, y)| x * y).sum::<C64>() * C64::new(-0.5, 0.0)
}

/// c-numbers of F star G, G star F and the literal T(F, G).
pub struct Loops {
    pub fg: C64,
    pub gf: C64,
    pub t: C64,
}

pub fn loops(d: &Dirac, omega: &TwoPoint, f: &Quadratic, g: &Quadratic) -> Loops {
    let u = union(&f.idx, &g.idx);
    let (bf, bg) = (embed(f, &u), embed(g, &u));
    let om = omega_dual(d, omega, &u);
    let kf = feynman_dual(d, omega, &u);
    Loops { fg: loop_sum(&om, &bf, &bg), gf: loop_sum(&om, &bg, &bf), t: loop_sum(&kf, &bf, &bg) }
}

/// c-number of i R(F; G) for self-adjoint F, G with H = omega, the
/// time-ordered product carrying its unitarity contact:
/// R_c = i Im T_c + (FG_c - GF_c) / 2.
pub fn polarization(d: &Dirac, omega: &TwoPoint, f: &Quadratic, g: &Quadratic) -> C64 {
    let l = loops(d, omega, f, g);
    let r = C64::new(0.0, l.t.im) + (l.fg - l.gf) * 0.5;
    r * C64::new(0.0, 1.0)
}

/// Same with the literal product: R_c = T_c - GF_c.
pub fn polarization_literal(d: &Dirac, omega: &TwoPoint, f: &Quadratic, g: &Quadratic) -> C64 {
    let l = loops(d, omega, f, g);
    (l.t - l.gf) * C64::new(0.0, 1.0)
}
