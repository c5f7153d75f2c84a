//! Independent oracles: Fock operators built as Kronecker products, brute-force
//! Green's functions on the product space and trapezoid Gaussian integrals.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use selab::linalg::{c64, CMatrix};
use selab::{ImpurityModel, Monomial, Statistics};

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Ladder operators on the product space of `d` modes, each truncated at
/// `cutoff` quanta (fermions use `cutoff = 1` with a Jordan-Wigner string).
/// Mode 0 is the leftmost tensor factor.
pub struct ProductSpace {
    pub d: usize,
    pub cutoff: usize,
    pub statistics: Statistics,
    pub annihilators: Vec<CMatrix>,
    /// Total particle number of each product basis state.
    pub numbers: Vec<usize>,
}

impl ProductSpace {
    pub fn new(d: usize, statistics: Statistics, cutoff: usize) -> Self {
        let local = match statistics {
            Statistics::Fermion => 2,
            Statistics::Boson => cutoff + 1,
        };
        let mut lower = CMatrix::zeros(local, local);
        for n in 1..local {
            lower[(n - 1, n)] = c64((n as f64).sqrt(), 0.0);
        }
        let mut string = CMatrix::identity(local, local);
        if statistics == Statistics::Fermion {
            string[(1, 1)] = c64(-1.0, 0.0);
        }
        let id = CMatrix::identity(local, local);
        let annihilators = (0..d)
            .map(|i| {
                let mut m = CMatrix::identity(1, 1);
                for k in 0..d {
                    let factor = if k < i {
                        &string
                    } else if k == i {
                        &lower
                    } else {
                        &id
                    };
                    m = kron(&m, factor);
                }
                m
            })
            .collect();
        let dim = local.pow(d as u32);
        let numbers = (0..dim)
            .map(|mut s| {
                let mut n = 0;
                for _ in 0..d {
                    n += s % local;
                    s /= local;
                }
                n
            })
            .collect();
        ProductSpace {
            d,
            cutoff,
            statistics,
            annihilators,
            numbers,
        }
    }

    pub fn dim(&self) -> usize {
        self.numbers.len()
    }

    pub fn a(&self, i: usize) -> &CMatrix {
        &self.annihilators[i]
    }

    pub fn ad(&self, i: usize) -> CMatrix {
        self.annihilators[i].adjoint()
    }

    pub fn monomial(&self, m: &Monomial) -> CMatrix {
        let mut op = CMatrix::identity(self.dim(), self.dim()) * m.coefficient;
        for &i in &m.create {
            op = op * self.ad(i);
        }
        for &i in &m.annihilate {
            op = op * self.a(i);
        }
        op
    }

    pub fn quadratic(&self, h: &CMatrix) -> CMatrix {
        let mut op = CMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.d {
            for j in 0..self.d {
                if h[(i, j)] != Complex64::new(0.0, 0.0) {
                    op += self.ad(i) * self.a(j) * h[(i, j)];
                }
            }
        }
        op
    }

    pub fn hamiltonian(&self, model: &ImpurityModel) -> CMatrix {
        let mut op = self.quadratic(model.h());
        for m in model.interaction() {
            op += self.monomial(m);
        }
        op
    }

    /// Indices of product states with total particle number in `range`.
    pub fn states_with(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        (0..self.dim()).filter(|&s| keep(self.numbers[s])).collect()
    }
}

pub fn restrict(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Eigen-decomposition via nalgebra, ascending.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let e = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let values = order.iter().map(|&k| e.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| e.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Zero-temperature `G_ij(z)` from the sector ground state of `N` particles,
/// by resolvent solves on the product space.
pub fn zero_temperature_oracle(model: &ImpurityModel, n: usize, z: Complex64) -> CMatrix {
    let cutoff = n + 1;
    let space = ProductSpace::new(model.d(), model.statistics(), cutoff);
    let h = space.hamiltonian(model);
    let idx = space.states_with(|k| k == n);
    let (values, vectors) = eigh(&restrict(&h, &idx, &idx));
    let e0 = values[0];
    let mut psi = CVec::zeros(space.dim());
    for (r, &s) in idx.iter().enumerate() {
        psi[s] = vectors[(r, 0)];
    }
    let id = CMatrix::identity(space.dim(), space.dim());
    let plus = (id.clone() * (z + e0) - &h).lu();
    let minus = (id * (z - e0) + &h).lu();
    let zeta = model.statistics().zeta();
    let d = model.d();
    let mut g = CMatrix::zeros(d, d);
    for j in 0..d {
        let up = space.ad(j) * &psi;
        let x = plus.solve(&up).expect("regular");
        let down = space.a(j) * &psi;
        for i in 0..d {
            // <psi| a_i R+ a_j^dagger |psi> - zeta <psi| a_j^dagger R- a_i |psi>
            let y = minus.solve(&(space.a(i) * &psi)).expect("regular");
            g[(i, j)] = psi.dotc(&(space.a(i) * &x)) - down.dotc(&y) * zeta;
        }
    }
    g
}

pub type CVec = DVector<Complex64>;

/// Grand-canonical `G_ij(z)` on the product space. Fermions trace the full
/// space; bosons trace `N <= n_max` and take spectral data up to `n_max + 1`.
pub fn finite_temperature_oracle(
    model: &ImpurityModel,
    beta: f64,
    mu: f64,
    n_max: usize,
    z: Complex64,
) -> CMatrix {
    let stats = model.statistics();
    let (cutoff, top) = match stats {
        Statistics::Fermion => (1, model.d()),
        Statistics::Boson => (n_max + 1, n_max),
    };
    let space = ProductSpace::new(model.d(), stats, cutoff);
    let h = space.hamiltonian(model);
    // Eigenstates per particle-number block, embedded in the product space.
    let mut values = Vec::new();
    let mut numbers = Vec::new();
    let mut columns: Vec<CVec> = Vec::new();
    for n in 0..=top + 1 {
        let idx = space.states_with(|k| k == n);
        if idx.is_empty() {
            continue;
        }
        let (vals, vecs) = eigh(&restrict(&h, &idx, &idx));
        for (c, e) in vals.into_iter().enumerate() {
            let mut v = CVec::zeros(space.dim());
            for (r, &s) in idx.iter().enumerate() {
                v[s] = vecs[(r, c)];
            }
            values.push(e);
            numbers.push(n);
            columns.push(v);
        }
    }
    let vectors = CMatrix::from_columns(&columns);
    let log_w: Vec<f64> = values
        .iter()
        .zip(&numbers)
        .map(|(&e, &n)| if n <= top { -beta * (e - mu * n as f64) } else { f64::NEG_INFINITY })
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z_part: f64 = log_w.iter().map(|w| (w - max).exp()).sum();
    let p: Vec<f64> = log_w.iter().map(|w| (w - max).exp() / z_part).collect();
    let zeta = stats.zeta();
    let d = model.d();
    let a_eig: Vec<CMatrix> = (0..d)
        .map(|i| vectors.adjoint() * space.a(i) * &vectors)
        .collect();
    let mut g = CMatrix::zeros(d, d);
    for a in 0..values.len() {
        for b in 0..values.len() {
            if numbers[b] != numbers[a] + 1 {
                continue;
            }
            let w = p[a] - zeta * p[b];
            if w == 0.0 {
                continue;
            }
            let denom = z - (values[b] - values[a]);
            for i in 0..d {
                for j in 0..d {
                    g[(i, j)] += a_eig[i][(a, b)] * a_eig[j][(a, b)].conj() * w / denom;
                }
            }
        }
    }
    g
}

/// Anomalous Nambu Green's function on the product space, with `c = (a, a^dagger)`.
pub fn nambu_oracle(hamiltonian: &CMatrix, space: &ProductSpace, z: Complex64) -> CMatrix {
    let (values, vectors) = eigh(hamiltonian);
    let e0 = values[0];
    let psi = vectors.column(0).into_owned();
    let d = space.d;
    let c: Vec<CMatrix> = (0..2 * d)
        .map(|k| if k < d { space.a(k).clone() } else { space.ad(k - d) })
        .collect();
    let id = CMatrix::identity(space.dim(), space.dim());
    let plus = (id.clone() * (z + e0) - hamiltonian).lu();
    let minus = (id * (z - e0) + hamiltonian).lu();
    let mut g = CMatrix::zeros(2 * d, 2 * d);
    for a in 0..2 * d {
        for b in 0..2 * d {
            let x = plus.solve(&(c[b].adjoint() * &psi)).unwrap();
            let y = minus.solve(&(&c[a] * &psi)).unwrap();
            g[(a, b)] = psi.dotc(&(&c[a] * x)) + (&c[b] * &psi).dotc(&y);
        }
    }
    g
}

/// Anomalous Hamiltonian `a^dagger h a + 1/2 sum (D_kl a_k^+ a_l^+ + h.c.) + U`.
pub fn anomalous_hamiltonian(space: &ProductSpace, h: &CMatrix, delta: &CMatrix, interaction: &[Monomial]) -> CMatrix {
    let mut op = space.quadratic(h);
    let d = space.d;
    for k in 0..d {
        for l in 0..d {
            let pair = space.ad(k) * space.ad(l) * (delta[(k, l)] * 0.5);
            op += &pair + pair.adjoint();
        }
    }
    for m in interaction {
        op += space.monomial(m);
    }
    op
}

/// `E[x x^T]` of `exp(-x^T A x / 2 - u(x))` by the trapezoid rule on
/// `[-half_width, half_width]^d` with spacing `step`.
pub fn trapezoid_moments(a: &DMatrix<f64>, u: &dyn Fn(&[f64]) -> f64, half_width: f64, step: f64) -> DMatrix<f64> {
    let d = a.nrows();
    let n = (2.0 * half_width / step).round() as usize + 1;
    let total = n.pow(d as u32);
    let mut m0 = 0.0;
    let mut m2 = DMatrix::zeros(d, d);
    let mut x = vec![0.0; d];
    for flat in 0..total {
        let mut rest = flat;
        for xk in x.iter_mut() {
            *xk = -half_width + (rest % n) as f64 * step;
            rest /= n;
        }
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += x[i] * a[(i, j)] * x[j];
            }
        }
        let w = (-0.5 * q - u(&x)).exp();
        m0 += w;
        for i in 0..d {
            for j in 0..d {
                m2[(i, j)] += w * x[i] * x[j];
            }
        }
    }
    m2 / m0
}

/// Samples on two horizontal lines `Im z = +-im`.
pub fn off_axis_samples(count: usize, im: f64) -> Vec<Complex64> {
    let half = count / 2;
    let line = |y: f64| (0..half).map(move |k| c64(-3.0 + 6.0 * k as f64 / (half - 1) as f64, y));
    line(im).chain(line(-im)).collect()
}
