//! Discrete cylinder spacetime: finite time, periodic space.

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub nt: usize,
    pub nx: usize,
    pub dt: f64,
    pub dx: f64,
}

impl Lattice {
    pub fn new(nt: usize, nx: usize, dt: f64, dx: f64) -> Result<Self> {
        if !(dt > 0.0 && dx > 0.0 && dt.is_finite() && dx.is_finite()) {
            return Err(Error::Lattice(format!("steps must be positive, got dt={dt}, dx={dx}")));
        }
        if dt / dx > 1.0 + 1e-12 {
            return Err(Error::Lattice(format!("CFL violated: dt/dx = {} > 1", dt / dx)));
        }
        if !nx.is_multiple_of(2) {
            return Err(Error::Lattice(format!("Nx must be even, got {nx}")));
        }
        if nt == 0 || nx == 0 || nt * nx < 4 {
            return Err(Error::Lattice(format!("need at least 4 sites, got {nt}x{nx}")));
        }
        Ok(Lattice { nt, nx, dt, dx })
    }

    pub fn sites(&self) -> usize {
        self.nt * self.nx
    }

    /// Volume weight per site.
    pub fn weight(&self) -> f64 {
        self.dt * self.dx
    }

    #[inline]
    pub fn site(&self, t: usize, x: isize) -> usize {
        t * self.nx + x.rem_euclid(self.nx as isize) as usize
    }

    #[inline]
    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s / self.nx, s % self.nx)
    }

    /// Periodic distance in sites.
    pub fn xdist(&self, x: usize, y: usize) -> usize {
        let d = x.abs_diff(y);
        d.min(self.nx - d)
    }

    /// Times 1..nt-2 carry the field equation; 0 and nt-1 hold Cauchy data only.
    pub fn is_interior_time(&self, t: usize) -> bool {
        t >= 1 && t + 2 <= self.nt
    }

    pub fn region(&self) -> SiteRegion {
        SiteRegion::empty(self.sites())
    }

    pub fn causal_future(&self, r: &SiteRegion) -> SiteRegion {
        self.check(r);
        let mut out = r.clone();
        for t in 0..self.nt.saturating_sub(1) {
            for x in 0..self.nx {
                if out.mask[self.site(t, x as isize)] {
                    for d in -1..=1 {
                        let s = self.site(t + 1, x as isize + d);
                        out.mask[s] = true;
                    }
                }
            }
        }
        out
    }

    pub fn causal_past(&self, r: &SiteRegion) -> SiteRegion {
        self.check(r);
        let mut out = r.clone();
        for t in (1..self.nt).rev() {
            for x in 0..self.nx {
                if out.mask[self.site(t, x as isize)] {
                    for d in -1..=1 {
                        let s = self.site(t - 1, x as isize + d);
                        out.mask[s] = true;
                    }
                }
            }
        }
        out
    }

    fn check(&self, r: &SiteRegion) {
        assert_eq!(r.mask.len(), self.sites(), "region belongs to another lattice");
    }
}

/// Membership mask over lattice sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteRegion {
    pub mask: Vec<bool>,
}

impl SiteRegion {
    pub fn empty(n: usize) -> Self {
        SiteRegion { mask: vec![false; n] }
    }

    pub fn from_sites(n: usize, sites: impl IntoIterator<Item = usize>) -> Self {
        let mut r = Self::empty(n);
        for s in sites {
            r.mask[s] = true;
        }
        r
    }

    pub fn insert(&mut self, s: usize) {
        self.mask[s] = true;
    }

    pub fn contains(&self, s: usize) -> bool {
        self.mask[s]
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn union(&self, other: &SiteRegion) -> SiteRegion {
        SiteRegion { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect() }
    }

    pub fn intersect(&self, other: &SiteRegion) -> SiteRegion {
        SiteRegion { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect() }
    }

    pub fn is_subset(&self, other: &SiteRegion) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    /// Time range (min, max) of the region, if nonempty.
    pub fn time_span(&self, lat: &Lattice) -> Option<(usize, usize)> {
        let mut span: Option<(usize, usize)> = None;
        for s in self.sites() {
            let t = lat.coords(s).0;
            span = Some(match span {
                None => (t, t),
                Some((a, b)) => (a.min(t), b.max(t)),
            });
        }
        span
    }
}
