//! Nambu-space Green's functions and the anomalous self-energy of fermionic
//! Hamiltonians with pairing terms, computed on the full Fock space.

use num_complex::Complex64;

use crate::equilibrium::{PoleExpansion, POLE_MARGIN};
use crate::error::{Error, Result};
use crate::fock::FullFockSpace;
use crate::linalg::{checked_inverse, max_abs, solve, CMatrix, CVector, HermitianEigen};
use crate::model::AnomalousModel;
use crate::report::{nambu_fragment_mask, sparsity_report_with, SparsityReport};

/// The four `d x d` blocks of the Nambu Green's function at one `z`.
#[derive(Clone, Debug)]
pub struct NambuGreens {
    pub z: Complex64,
    pub hp: CMatrix,
    pub hh: CMatrix,
    pub pp: CMatrix,
    pub ph: CMatrix,
}

impl NambuGreens {
    fn from_matrix(z: Complex64, g: &CMatrix) -> Self {
        let d = g.nrows() / 2;
        NambuGreens {
            z,
            hp: g.view((0, 0), (d, d)).into_owned(),
            hh: g.view((0, d), (d, d)).into_owned(),
            pp: g.view((d, 0), (d, d)).into_owned(),
            ph: g.view((d, d), (d, d)).into_owned(),
        }
    }

    /// `[[G_hp, G_hh], [G_pp, G_ph]]`.
    pub fn matrix(&self) -> CMatrix {
        let d = self.hp.nrows();
        let mut g = CMatrix::zeros(2 * d, 2 * d);
        g.view_mut((0, 0), (d, d)).copy_from(&self.hp);
        g.view_mut((0, d), (d, d)).copy_from(&self.hh);
        g.view_mut((d, 0), (d, d)).copy_from(&self.pp);
        g.view_mut((d, d), (d, d)).copy_from(&self.ph);
        g
    }
}

/// `[[h, Delta], [-conj(Delta), -conj(h)]]`.
pub fn nambu_matrix(model: &AnomalousModel) -> CMatrix {
    let d = model.d();
    let mut m = CMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(model.h());
    m.view_mut((0, d), (d, d)).copy_from(model.delta());
    m.view_mut((d, 0), (d, d))
        .copy_from(&model.delta().map(|x| -x.conj()));
    m.view_mut((d, d), (d, d))
        .copy_from(&model.h().map(|x| -x.conj()));
    m
}

/// `(z - M)^{-1}`, the Nambu Green's function without interaction.
pub fn free_nambu_greens(model: &AnomalousModel, z: Complex64) -> Result<CMatrix> {
    let m = nambu_matrix(model);
    let n = m.nrows();
    checked_inverse(&(CMatrix::identity(n, n) * z - m))
}

/// Ground-state data of an anomalous model on the full `2^d` space.
#[derive(Clone, Debug)]
pub struct AnomalousGreens {
    d: usize,
    nambu: CMatrix,
    hamiltonian: CMatrix,
    e0: f64,
    degeneracy_gap: f64,
    /// `[a_0^dagger Phi, .., a_{d-1}^dagger Phi, a_0 Phi, .., a_{d-1} Phi]`.
    particle_first: CMatrix,
    /// Same columns with the annihilated states first.
    hole_first: CMatrix,
    lehmann: PoleExpansion,
}

impl AnomalousGreens {
    pub fn new(model: &AnomalousModel) -> Result<Self> {
        let d = model.d();
        let space = FullFockSpace::fermionic(d)?;
        let hamiltonian = model.full_matrix(&space)?;
        let eigen = HermitianEigen::new(&hamiltonian);
        let e0 = eigen.values[0];
        let degeneracy_gap = eigen
            .values
            .get(1)
            .map_or(f64::INFINITY, |e1| e1 - e0);
        let phi: CVector = eigen.vectors.column(0).into_owned();

        let dim = space.dim();
        let mut particle_first = CMatrix::zeros(dim, 2 * d);
        let mut hole_first = CMatrix::zeros(dim, 2 * d);
        for j in 0..d {
            let a = space.annihilator(j);
            let created = a.adjoint() * &phi;
            let removed = a * &phi;
            particle_first.set_column(j, &created);
            particle_first.set_column(d + j, &removed);
            hole_first.set_column(j, &removed);
            hole_first.set_column(d + j, &created);
        }

        let mut lehmann = PoleExpansion {
            poles: Vec::with_capacity(2 * dim),
            weights: vec![1.0; 2 * dim],
            vectors: CMatrix::zeros(2 * d, 2 * dim),
        };
        let vh = eigen.vectors.adjoint();
        let cp = &vh * &particle_first;
        let cm = &vh * &hole_first;
        for n in 0..dim {
            lehmann.poles.push(eigen.values[n] - e0);
            for a in 0..2 * d {
                lehmann.vectors[(a, n)] = cp[(n, a)].conj();
            }
        }
        for n in 0..dim {
            lehmann.poles.push(e0 - eigen.values[n]);
            for a in 0..2 * d {
                lehmann.vectors[(a, dim + n)] = cm[(n, a)];
            }
        }

        Ok(AnomalousGreens {
            d,
            nambu: nambu_matrix(model),
            hamiltonian,
            e0,
            degeneracy_gap,
            particle_first,
            hole_first,
            lehmann,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ground_energy(&self) -> f64 {
        self.e0
    }

    pub fn degeneracy_gap(&self) -> f64 {
        self.degeneracy_gap
    }

    pub fn nambu(&self) -> &CMatrix {
        &self.nambu
    }

    fn check_pole(&self, z: Complex64) -> Result<()> {
        if let Some((pole, dist)) = self.lehmann.nearest_pole(z) {
            if dist < POLE_MARGIN {
                return Err(Error::Pole {
                    z,
                    pole,
                    margin: POLE_MARGIN,
                });
            }
        }
        Ok(())
    }

    /// The `2d x 2d` Green's function by linear solves with `z -+ (H - E0)`.
    pub fn evaluate(&self, z: Complex64) -> Result<CMatrix> {
        self.check_pole(z)?;
        let n = self.hamiltonian.nrows();
        let mut plus = -&self.hamiltonian;
        let mut minus = self.hamiltonian.clone();
        for k in 0..n {
            plus[(k, k)] += z + self.e0;
            minus[(k, k)] += z - self.e0;
        }
        let gp = self.particle_first.adjoint() * solve(&plus, &self.particle_first)?;
        let gm = self.hole_first.adjoint() * solve(&minus, &self.hole_first)?;
        Ok(gp + gm.transpose())
    }

    pub fn evaluate_lehmann(&self, z: Complex64) -> Result<CMatrix> {
        self.check_pole(z)?;
        Ok(self.lehmann.evaluate(z))
    }

    pub fn nambu_greens(&self, z: Complex64) -> Result<NambuGreens> {
        Ok(NambuGreens::from_matrix(z, &self.evaluate(z)?))
    }

    /// `z - M - G(z)^{-1}`.
    pub fn self_energy(&self, z: Complex64) -> Result<CMatrix> {
        anomalous_self_energy(&self.nambu, &self.evaluate(z)?, z)
    }

    /// Largest violation of `G_ph(z) = -G_hp(-z)^T` and
    /// `G_hh(z) = G_pp(conj z)^dagger`.
    pub fn redundancy_violation(&self, z: Complex64) -> Result<f64> {
        let g = self.nambu_greens(z)?;
        let g_neg = self.nambu_greens(-z)?;
        let g_conj = self.nambu_greens(z.conj())?;
        let a = max_abs(&(&g.ph + g_neg.hp.transpose()));
        let b = max_abs(&(&g.hh - g_conj.pp.adjoint()));
        Ok(a.max(b))
    }

    /// Sparsity of the anomalous self-energy on the fragment corners
    /// `0..p` and `d..d+p`.
    pub fn sparsity_report(
        &self,
        p: usize,
        samples: &[Complex64],
        tolerance: f64,
        min_imag: f64,
    ) -> Result<SparsityReport> {
        let mask = nambu_fragment_mask(self.d, p);
        sparsity_report_with(|z| self.self_energy(z), &mask, samples, tolerance, min_imag)
    }
}

/// `Sigma(z) = z - M - G(z)^{-1}` for a Nambu matrix `M`.
pub fn anomalous_self_energy(nambu: &CMatrix, g: &CMatrix, z: Complex64) -> Result<CMatrix> {
    let n = nambu.nrows();
    if g.shape() != (n, n) {
        return Err(Error::Argument(format!(
            "Nambu G has shape {:?}, expected ({n}, {n})",
            g.shape()
        )));
    }
    Ok(CMatrix::identity(n, n) * z - nambu - checked_inverse(g)?)
}

/// Builds the evaluator and returns the blocks at `z`.
pub fn nambu_greens(model: &AnomalousModel, z: Complex64) -> Result<NambuGreens> {
    AnomalousGreens::new(model)?.nambu_greens(z)
}
