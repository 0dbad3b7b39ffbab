//! Dense antisymmetric coefficient tensors over a sorted index set.

use nalgebra::DMatrix;

use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Component of fixed grade and hbar order. `t` is the n^grade row-major
/// tensor over `idx` (sorted global indices).
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub grade: usize,
    pub hbar: i32,
    pub idx: Vec<usize>,
    pub t: Vec<C64>,
}

pub fn pow(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |a, _| a * n)
}

/// Decompose a flat index into k digits base n.
#[inline]
pub fn digits(mut flat: usize, n: usize, k: usize, out: &mut [usize]) {
    for m in (0..k).rev() {
        out[m] = flat % n;
        flat /= n;
    }
}

#[inline]
pub fn flat(d: &[usize], n: usize) -> usize {
    d.iter().fold(0, |a, &x| a * n + x)
}

/// Positions and signs of all (p, q) shuffles: for each shuffle, the slots
/// taken by the first p arguments, the slots of the remaining q, and the sign.
pub fn shuffles(p: usize, q: usize) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let k = p + q;
    let mut out = Vec::new();
    let mut chosen = Vec::with_capacity(p);
    fn rec(start: usize, k: usize, p: usize, chosen: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, Vec<usize>, f64)>) {
        if chosen.len() == p {
            let rest: Vec<usize> = (0..k).filter(|i| !chosen.contains(i)).collect();
            // sign of the permutation (chosen ++ rest) -> identity: count inversions
            let perm: Vec<usize> = chosen.iter().chain(rest.iter()).copied().collect();
            let mut inv = 0;
            for i in 0..k {
                for j in i + 1..k {
                    if perm[i] > perm[j] {
                        inv += 1;
                    }
                }
            }
            out.push((chosen.clone(), rest, if inv % 2 == 0 { 1.0 } else { -1.0 }));
            return;
        }
        for s in start..k {
            chosen.push(s);
            rec(s + 1, k, p, chosen, out);
            chosen.pop();
        }
    }
    rec(0, k, p, &mut chosen, &mut out);
    out
}

/// Sorted union of two sorted index sets.
pub fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Positions of `sub` inside the sorted superset `sup`.
pub fn positions(sub: &[usize], sup: &[usize]) -> Vec<usize> {
    sub.iter().map(|i| sup.binary_search(i).expect("index not in superset")).collect()
}

/// Antisymmetrised placement of X[alpha, beta] (alpha over I^p, beta over J^q,
/// flattened row-major with alpha major) into a (p+q)-tensor over U.
pub fn shuffle_place(x: &[C64], p: usize, ni: usize, q: usize, nj: usize, pos_i: &[usize], pos_j: &[usize], nu: usize) -> Vec<C64> {
    let k = p + q;
    let mut out = vec![ZERO; pow(nu, k)];
    let sh = shuffles(p, q);
    let nb = pow(nj, q);
    let mut da = vec![0; p];
    let mut db = vec![0; q];
    let mut kk = vec![0; k];
    for (f, &v) in x.iter().enumerate() {
        if v == ZERO {
            continue;
        }
        digits(f / nb, ni, p, &mut da);
        digits(f % nb, nj, q, &mut db);
        for (s, r, sg) in &sh {
            for m in 0..p {
                kk[s[m]] = pos_i[da[m]];
            }
            for m in 0..q {
                kk[r[m]] = pos_j[db[m]];
            }
            out[flat(&kk, nu)] += v * *sg;
        }
    }
    out
}

/// Apply M (rows: new axis, cols: old axis) on one axis of a tensor with given dims.
pub fn mode_mul(t: &[C64], dims: &[usize], axis: usize, m: &DMatrix<C64>) -> (Vec<C64>, Vec<usize>) {
    let old = dims[axis];
    assert_eq!(m.ncols(), old);
    let new = m.nrows();
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![ZERO; outer * new * inner];
    for o in 0..outer {
        for a in 0..old {
            let base = (o * old + a) * inner;
            let src = &t[base..base + inner];
            if src.iter().all(|v| *v == ZERO) {
                continue;
            }
            for b in 0..new {
                let c = m[(b, a)];
                if c == ZERO {
                    continue;
                }
                let dst = &mut out[(o * new + b) * inner..(o * new + b + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }
    let mut nd = dims.to_vec();
    nd[axis] = new;
    (out, nd)
}

impl Component {
    pub fn scalar(v: C64, hbar: i32) -> Self {
        Component { grade: 0, hbar, idx: vec![], t: vec![v] }
    }

    pub fn n(&self) -> usize {
        self.idx.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.t.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Component { t: self.t.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// Re-express over a sorted superset of indices.
    pub fn embed(&self, sup: &[usize]) -> Component {
        if sup == self.idx.as_slice() {
            return self.clone();
        }
        let pos = positions(&self.idx, sup);
        let n = self.n();
        let nu = sup.len();
        let k = self.grade;
        let mut out = vec![ZERO; pow(nu, k)];
        let mut d = vec![0; k];
        for (f, &v) in self.t.iter().enumerate() {
            if v == ZERO {
                continue;
            }
            digits(f, n, k, &mut d);
            let g = d.iter().fold(0, |a, &x| a * nu + pos[x]);
            out[g] = v;
        }
        Component { grade: k, hbar: self.hbar, idx: sup.to_vec(), t: out }
    }

    /// Drop indices whose slices are identically zero.
    pub fn compact(&self) -> Component {
        if self.grade == 0 {
            return self.clone();
        }
        let n = self.n();
        let mut used = vec![false; n];
        let mut d = vec![0; self.grade];
        for (f, v) in self.t.iter().enumerate() {
            if *v != ZERO {
                digits(f, n, self.grade, &mut d);
                for &x in &d {
                    used[x] = true;
                }
            }
        }
        if used.iter().all(|&u| u) {
            return self.clone();
        }
        let keep: Vec<usize> = (0..n).filter(|&i| used[i]).map(|i| self.idx[i]).collect();
        let m = keep.len();
        let pos = positions(&keep, &self.idx);
        let mut t = vec![ZERO; pow(m, self.grade)];
        let mut e = vec![0; self.grade];
        for (g, v) in t.iter_mut().enumerate() {
            digits(g, m, self.grade, &mut e);
            let f = e.iter().fold(0, |a, &x| a * n + pos[x]);
            *v = self.t[f];
        }
        Component { grade: self.grade, hbar: self.hbar, idx: keep, t }
    }

    /// Same matrix on every axis; `out_idx` labels the new axis.
    pub fn mode_product(&self, m: &DMatrix<C64>, out_idx: Vec<usize>) -> Component {
        let mut t = self.t.clone();
        let mut dims = vec![self.n(); self.grade];
        for ax in 0..self.grade {
            let (nt, nd) = mode_mul(&t, &dims, ax, m);
            t = nt;
            dims = nd;
        }
        Component { grade: self.grade, hbar: self.hbar, idx: out_idx, t }
    }

    /// Contract the first slot with a vector given on `idx`.
    pub fn contract_first(&self, u: &[C64]) -> Component {
        let n = self.n();
        let inner = pow(n, self.grade - 1);
        let mut t = vec![ZERO; inner];
        for (a, ua) in u.iter().enumerate() {
            if *ua == ZERO {
                continue;
            }
            for (o, s) in t.iter_mut().zip(&self.t[a * inner..(a + 1) * inner]) {
                *o += ua * s;
            }
        }
        let idx = if self.grade == 1 { vec![] } else { self.idx.clone() };
        Component { grade: self.grade - 1, hbar: self.hbar, idx, t }
    }

    /// Max deviation from full antisymmetry under adjacent transpositions.
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.n();
        let k = self.grade;
        let mut worst: f64 = 0.0;
        let mut d = vec![0; k];
        for (f, &v) in self.t.iter().enumerate() {
            digits(f, n, k, &mut d);
            for m in 0..k.saturating_sub(1) {
                d.swap(m, m + 1);
                let g = flat(&d, n);
                d.swap(m, m + 1);
                worst = worst.max((v + self.t[g]).norm());
            }
        }
        worst
    }
}
