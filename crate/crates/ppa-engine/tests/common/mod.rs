#![allow(dead_code)]

use std::sync::Arc;

use ppa_engine::background::{Background, GaugeGroup};
use ppa_engine::dirac::{Dirac, DiracParams};
use ppa_engine::lattice::Lattice;
use ppa_engine::states::{vacuum_two_point, TwoPoint, VacuumParams};

pub fn lattice(nt: usize, nx: usize) -> Lattice {
    Lattice::new(nt, nx, 0.3, 1.0).unwrap()
}

pub fn free_u1(nt: usize, nx: usize, m: f64) -> Arc<Dirac> {
    let bg = Background::constant(lattice(nt, nx), GaugeGroup::u1(1.0), &[0.0], &[0.0], m).unwrap();
    Dirac::new(&bg, &DiracParams::default()).unwrap()
}

pub fn const_su2(nt: usize, nx: usize, m: f64) -> Arc<Dirac> {
    let bg = Background::constant(lattice(nt, nx), GaugeGroup::su2(), &[0.1, -0.2, 0.05], &[0.3, 0.0, -0.1], m).unwrap();
    Dirac::new(&bg, &DiracParams::default()).unwrap()
}

pub fn vacuum(d: &Arc<Dirac>) -> Arc<TwoPoint> {
    Arc::new(vacuum_two_point(d, &VacuumParams::default()).unwrap())
}
