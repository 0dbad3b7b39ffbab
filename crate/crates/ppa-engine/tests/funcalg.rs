mod common;

use common::*;
use nalgebra::DMatrix;
use ppa_engine::dirac::{involution, DoubleSection, Prop};
use ppa_engine::funcalg::{
    derivative, evaluate, gamma, involution as f_inv, onshell_zero, ordering_transport, psi, random_component, star,
    wedge, Component, Functional, StarOpts,
};
use ppa_engine::states::{random_patch, Kernel};
use ppa_engine::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_section(n: usize, idx: &[usize], rng: &mut ChaCha8Rng) -> DoubleSection {
    let mut s = DoubleSection { data: vec![C64::new(0.0, 0.0); n] };
    for &i in idx {
        s.data[i] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    s
}

fn comp(idx: &[usize], grade: usize, seed: u64) -> Functional {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Functional::from(random_component(idx, grade, &mut rng))
}

fn rand_kernel(idx: &[usize], seed: u64, layout: ppa_engine::dirac::Layout, weight: f64) -> Kernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = idx.len();
    let m = DMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    Kernel::Dense { idx: idx.to_vec(), m, layout, weight }
}

fn diff(a: &Functional, b: &Functional) -> f64 {
    a.sub(b).max_abs()
}

#[test]
fn wedge_unit_and_nilpotency() {
    let d = free_u1(6, 2, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let idx: Vec<usize> = (0..12).collect();
    let f = comp(&idx, 2, 1);
    let one = Functional::scalar(C64::new(1.0, 0.0));
    assert_eq!(diff(&wedge(&one, &f, 4).unwrap(), &f), 0.0);
    let u = rand_section(d.layout.n, &idx, &mut rng);
    let p = psi(&d.layout, d.weight(), &u);
    assert!(wedge(&p, &p, 4).unwrap().max_abs() < 1e-15);
}

#[test]
fn wedge_two_site_hand_expansion() {
    // f, g grade 1 over indices {0, 1}: (f ^ g)_{ij} = f_i g_j - g_i f_j
    let f = Functional::from(Component { grade: 1, hbar: 0, idx: vec![0, 1], t: vec![C64::new(1.0, 0.0), C64::new(2.0, 1.0)] });
    let g = Functional::from(Component { grade: 1, hbar: 0, idx: vec![0, 1], t: vec![C64::new(-1.0, 0.5), C64::new(0.0, 3.0)] });
    let w = wedge(&f, &g, 2).unwrap();
    let c = &w.comps[0];
    let (f0, f1) = (C64::new(1.0, 0.0), C64::new(2.0, 1.0));
    let (g0, g1) = (C64::new(-1.0, 0.5), C64::new(0.0, 3.0));
    let expect = [C64::new(0.0, 0.0), f0 * g1 - g0 * f1, f1 * g0 - g1 * f0, C64::new(0.0, 0.0)];
    for (a, b) in c.t.iter().zip(expect) {
        assert!((a - b).norm() < 1e-15);
    }
}

#[test]
fn graded_commutativity() {
    let idx: Vec<usize> = (0..8).collect();
    for (p, q) in [(1, 1), (1, 2), (2, 2), (1, 3)] {
        let f = comp(&idx[..6], p, 10 + p as u64);
        let g = comp(&idx[2..], q, 20 + q as u64);
        let fg = wedge(&f, &g, 4).unwrap();
        let gf = wedge(&g, &f, 4).unwrap();
        let s = if (p * q) % 2 == 0 { 1.0 } else { -1.0 };
        assert!(diff(&fg, &gf.scale(C64::from(s))) < 1e-12, "grades {p},{q}");
    }
}

#[test]
fn grade_overflow_is_an_error() {
    let idx: Vec<usize> = (0..4).collect();
    let f = comp(&idx, 2, 1);
    let g = comp(&idx, 1, 2);
    assert!(wedge(&f, &g, 2).is_err());
}

#[test]
fn involution_is_involutive_and_reverses_products() {
    let d = free_u1(6, 2, 0.5);
    let l = d.layout;
    let idx: Vec<usize> = vec![0, 1, 2, 5, 9, l.nu, l.nu + 3, l.nu + 7];
    let f = comp(&idx, 1, 4);
    let g = comp(&idx, 2, 5);
    assert_eq!(diff(&f_inv(&f_inv(&g, &l), &l), &g), 0.0);
    let lhs = f_inv(&wedge(&f, &g, 4).unwrap(), &l);
    let rhs = wedge(&f_inv(&g, &l), &f_inv(&f, &l), 4).unwrap();
    assert!(diff(&lhs, &rhs) < 1e-12);
    let z = Functional::scalar(C64::new(1.0, 2.0));
    assert_eq!(f_inv(&z, &l).c_number(), C64::new(1.0, -2.0));
}

#[test]
fn involution_of_linear_field_matches_section_involution() {
    let d = free_u1(6, 2, 0.5);
    let l = d.layout;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let all: Vec<usize> = (0..l.n).collect();
    let u = rand_section(l.n, &all, &mut rng);
    let a = f_inv(&psi(&l, d.weight(), &u), &l);
    let b = psi(&l, d.weight(), &involution(&l, &u));
    assert!(diff(&a, &b) < 1e-14);
}

#[test]
fn derivative_of_linear_field_is_pairing_and_second_derivative_antisymmetric() {
    let d = free_u1(6, 2, 0.5);
    let l = d.layout;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let all: Vec<usize> = (0..l.n).collect();
    let (f, u, v) = (rand_section(l.n, &all, &mut rng), rand_section(l.n, &all, &mut rng), rand_section(l.n, &all, &mut rng));
    let p = psi(&l, d.weight(), &f);
    assert!((derivative(&p, &u).c_number() - d.pairing(&f, &u)).norm() < 1e-12);
    let g = comp(&all[..10], 2, 12);
    let uv = derivative(&derivative(&g, &u), &v).c_number();
    let vu = derivative(&derivative(&g, &v), &u).c_number();
    assert!((uv + vu).norm() < 1e-12);
    assert!(derivative(&Functional::scalar(C64::new(1.0, 0.0)), &u).is_zero());
}

#[test]
fn evaluate_matches_hand_sum_and_factorises_on_disjoint_words() {
    let l = free_u1(6, 2, 0.5).layout;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let f = comp(&[0, 1, 2], 1, 1);
    let g = comp(&[7, 8, 9], 1, 2);
    let b1 = rand_section(l.n, &[0, 1, 2], &mut rng);
    let b2 = rand_section(l.n, &[7, 8, 9], &mut rng);
    let fb1 = evaluate(&f, std::slice::from_ref(&b1));
    let hand: C64 = f.comps[0].t.iter().zip(&[0, 1, 2]).map(|(c, &i)| c * b1.data[i]).sum();
    assert!((fb1 - hand).norm() < 1e-15);
    let fg = wedge(&f, &g, 2).unwrap();
    let v = evaluate(&fg, &[b1.clone(), b2.clone()]);
    assert!((v - fb1 * evaluate(&g, &[b2])).norm() < 1e-12);
    assert_eq!(evaluate(&Functional::zero(), &[b1]), C64::new(0.0, 0.0));
}

#[test]
fn gamma_of_two_linear_fields() {
    let d = free_u1(6, 2, 0.5);
    let l = d.layout;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let idx: Vec<usize> = (0..l.n).step_by(3).collect();
    let k = rand_kernel(&idx, 5, l, d.weight());
    let u = rand_section(l.n, &idx, &mut rng);
    let v = rand_section(l.n, &idx, &mut rng);
    let f = wedge(&psi(&l, d.weight(), &u), &psi(&l, d.weight(), &v), 2).unwrap();
    let g = gamma(&f, &k);
    let expect = 0.5 * (k.eval(&u, &v) - k.eval(&v, &u));
    assert!((g.c_number() - expect).norm() < 1e-12);
    assert_eq!(g.comps[0].hbar, 1);
    assert!(gamma(&psi(&l, d.weight(), &u), &k).is_zero());
}

#[test]
fn ordering_transport_group_law_and_cocycle() {
    let d = free_u1(6, 2, 0.5);
    let l = d.layout;
    let w = d.weight();
    let idx: Vec<usize> = vec![0, 2, 3, 6, l.nu + 1, l.nu + 4, l.nu + 6];
    let f = comp(&idx, 4, 31).add(&comp(&idx, 2, 32));
    let k1 = rand_kernel(&idx, 1, l, w);
    let k2 = rand_kernel(&idx, 2, l, w);
    let minus = Kernel::Combo(vec![(C64::new(-1.0, 0.0), k1.clone())]);
    assert!(diff(&ordering_transport(&ordering_transport(&f, &k1), &minus), &f) < 1e-12);
    let both = Kernel::Combo(vec![(C64::new(1.0, 0.0), k1.clone()), (C64::new(1.0, 0.0), k2.clone())]);
    let two_steps = ordering_transport(&ordering_transport(&f, &k1), &k2);
    assert!(diff(&two_steps, &ordering_transport(&f, &both)) < 1e-12);
    assert!(diff(&ordering_transport(&f, &Kernel::zero(l, w)), &f) < 1e-15);
}

#[test]
fn star_unit_associativity_and_intertwining() {
    let d = free_u1(6, 2, 0.5);
    let l = d.layout;
    let w = d.weight();
    let idx: Vec<usize> = vec![1, 2, 5, 7, l.nu, l.nu + 5];
    let k = rand_kernel(&idx, 7, l, w);
    let f = comp(&idx, 2, 41).add(&comp(&idx, 1, 42));
    let g = comp(&idx, 2, 43).add(&Functional::scalar(C64::new(0.5, 0.0)));
    let h = comp(&idx, 1, 44);
    let one = Functional::scalar(C64::new(1.0, 0.0));
    let o = StarOpts { max_grade: 6, max_out_grade: None };
    assert!(diff(&star(&f, &one, &k, o).unwrap(), &f) < 1e-15);
    let l1 = star(&star(&f, &g, &k, o).unwrap(), &h, &k, o).unwrap();
    let r1 = star(&f, &star(&g, &h, &k, o).unwrap(), &k, o).unwrap();
    assert!(diff(&l1, &r1) < 1e-10);
    // exp(Gamma_D)(F *_K G) = exp(Gamma_D)F *_{K+D} exp(Gamma_D)G for antisymmetric D,
    // the form a difference of two states with equal anticommutator takes
    let dk = match rand_kernel(&idx, 8, l, w) {
        Kernel::Dense { idx, m, layout, weight } => Kernel::Dense { idx, m: &m - m.transpose(), layout, weight },
        _ => unreachable!(),
    };
    let kd = Kernel::Combo(vec![(C64::new(1.0, 0.0), k.clone()), (C64::new(1.0, 0.0), dk.clone())]);
    let lhs = ordering_transport(&star(&f, &g, &k, o).unwrap(), &dk);
    let rhs = star(&ordering_transport(&f, &dk), &ordering_transport(&g, &dk), &kd, o).unwrap();
    assert!(diff(&lhs, &rhs) < 1e-10);
    // hbar^0 part is the wedge
    assert!(diff(&star(&f, &g, &k, o).unwrap().hbar_part(0), &wedge(&f, &g, 6).unwrap()) < 1e-15);
}

#[test]
fn star_involution_reverses_order_for_hermitian_kernels() {
    let d = free_u1(8, 2, 0.5);
    let l = d.layout;
    let omega = vacuum(&d);
    let k = Kernel::State(omega);
    let idx: Vec<usize> = vec![l.index(false, 6, 0, 0), l.index(false, 7, 1, 0), l.index(true, 8, 0, 0), l.index(true, 9, 1, 0)];
    let f = comp(&idx, 2, 51);
    let g = comp(&idx, 2, 52).add(&comp(&idx, 1, 53));
    let o = StarOpts { max_grade: 4, max_out_grade: None };
    let lhs = f_inv(&star(&f, &g, &k, o).unwrap(), &l);
    let rhs = star(&f_inv(&g, &l), &f_inv(&f, &l), &k, o).unwrap();
    assert!(diff(&lhs, &rhs) < 1e-10, "{}", diff(&lhs, &rhs));
}

#[test]
fn car_for_linear_fields() {
    let d = free_u1(16, 16, 0.5);
    let omega = vacuum(&d);
    let k = Kernel::State(omega);
    let l = d.layout;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let o = StarOpts::default();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = random_patch(&d, &mut rng, 1, 14);
        let v = random_patch(&d, &mut rng, 1, 14);
        let pu = psi(&l, d.weight(), &u);
        let pv = f_inv(&psi(&l, d.weight(), &v), &l);
        let ac = star(&pu, &pv, &k, o).unwrap().add(&star(&pv, &pu, &k, o).unwrap());
        let sv = d.solve(&involution(&l, &v), Prop::Causal);
        let expect = C64::new(0.0, 1.0) * d.pairing(&u, &sv);
        let r = ac.sub(&Functional::scalar(expect).hbar_shift(1)).max_abs();
        worst = worst.max(r);
    }
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn onshell_test_detects_field_equation_multiples() {
    let d = free_u1(8, 2, 0.5);
    let l = d.layout;
    let basis = d.onshell_basis();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let g = random_patch(&d, &mut rng, 2, 5);
    // psi(D g) vanishes on solutions by reciprocity
    let f = psi(&l, d.weight(), &d.apply(&g));
    assert!(onshell_zero(&f, &basis, 1).0);
    let u = random_patch(&d, &mut rng, 2, 5);
    assert!(!onshell_zero(&psi(&l, d.weight(), &u), &basis, 1).0);
}
