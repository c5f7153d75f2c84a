//! Hamiltonians `a^dagger h a + U` with normal-ordered interactions, impurity
//! validation, built-in models and the JSON model file format.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSector, FullFockSpace, LadderKind, SectorOperator, Statistics};
use crate::linalg::{c64, hermiticity_violation, max_abs, CMatrix, HermitianEigen};

/// Violations of Hermiticity up to this size are symmetrized away.
pub const SYMMETRIZE_TOLERANCE: f64 = 1e-12;

/// Threshold of the numerical commutator check in [`validate_impurity`].
pub const IMPURITY_TOLERANCE: f64 = 1e-12;

/// `coefficient * a^dagger_{c_1} ... a^dagger_{c_k} a_{a_1} ... a_{a_l}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coefficient: Complex64,
    pub create: Vec<usize>,
    pub annihilate: Vec<usize>,
}

impl Monomial {
    pub fn new(coefficient: Complex64, create: Vec<usize>, annihilate: Vec<usize>) -> Self {
        Monomial {
            coefficient,
            create,
            annihilate,
        }
    }

    pub fn degree(&self) -> usize {
        self.create.len() + self.annihilate.len()
    }

    pub fn is_number_conserving(&self) -> bool {
        self.create.len() == self.annihilate.len()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.create.iter().chain(&self.annihilate).copied().max()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.create.iter().chain(&self.annihilate).copied()
    }

    /// Operator word, leftmost operator first.
    pub fn word(&self) -> Vec<(LadderKind, usize)> {
        self.create
            .iter()
            .map(|&i| (LadderKind::Create, i))
            .chain(self.annihilate.iter().map(|&i| (LadderKind::Annihilate, i)))
            .collect()
    }

    /// The adjoint, which is again normal ordered.
    pub fn adjoint(&self) -> Monomial {
        Monomial {
            coefficient: self.coefficient.conj(),
            create: self.annihilate.iter().rev().copied().collect(),
            annihilate: self.create.iter().rev().copied().collect(),
        }
    }

    /// Sorted index lists plus the sign of the reordering, or `None` when a
    /// fermionic index repeats (the monomial vanishes identically).
    fn canonical(&self, statistics: Statistics) -> Option<((Vec<usize>, Vec<usize>), f64)> {
        let (create, s1) = sort_with_sign(&self.create, statistics)?;
        let (annihilate, s2) = sort_with_sign(&self.annihilate, statistics)?;
        Some(((create, annihilate), s1 * s2))
    }
}

fn sort_with_sign(indices: &[usize], statistics: Statistics) -> Option<(Vec<usize>, f64)> {
    let mut v = indices.to_vec();
    let mut sign = 1.0;
    // Bubble sort keeps track of transposition parity; lists are short.
    for a in 0..v.len() {
        for b in 0..v.len() - 1 - a {
            if v[b] > v[b + 1] {
                v.swap(b, b + 1);
                sign = -sign;
            }
        }
    }
    if statistics == Statistics::Fermion {
        if v.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        Some((v, sign))
    } else {
        Some((v, 1.0))
    }
}

/// Sums the monomials into canonical form, dropping identically-zero words.
fn canonical_coefficients(
    monomials: &[Monomial],
    statistics: Statistics,
) -> BTreeMap<(Vec<usize>, Vec<usize>), Complex64> {
    let mut map = BTreeMap::new();
    for m in monomials {
        if let Some((key, sign)) = m.canonical(statistics) {
            *map.entry(key).or_insert(Complex64::new(0.0, 0.0)) += m.coefficient * sign;
        }
    }
    map
}

/// Largest coefficient of `U - U^dagger` in canonical form.
pub fn interaction_hermiticity_violation(monomials: &[Monomial], statistics: Statistics) -> f64 {
    let mut adjoints: Vec<Monomial> = monomials.iter().map(Monomial::adjoint).collect();
    for m in adjoints.iter_mut() {
        m.coefficient = -m.coefficient;
    }
    adjoints.extend_from_slice(monomials);
    canonical_coefficients(&adjoints, statistics)
        .values()
        .fold(0.0, |acc, c| acc.max(c.norm()))
}

/// Monomials `1/2 sum (ij|U|kl) a_i^dagger a_j^dagger a_l a_k` from a
/// row-major `d^4` tensor; zero entries are skipped.
pub fn two_body(d: usize, tensor: &[Complex64]) -> Result<Vec<Monomial>> {
    if tensor.len() != d.pow(4) {
        return Err(Error::Argument(format!(
            "two-body tensor has {} entries, expected {}",
            tensor.len(),
            d.pow(4)
        )));
    }
    let mut out = Vec::new();
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let u = tensor[((i * d + j) * d + k) * d + l];
                    if u != Complex64::new(0.0, 0.0) {
                        out.push(Monomial::new(u * 0.5, vec![i, j], vec![l, k]));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn checked_hermitian(h: &CMatrix, what: &str) -> Result<CMatrix> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::Argument(format!(
            "{what} must be a non-empty square matrix, got {:?}",
            h.shape()
        )));
    }
    if h.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Argument(format!("{what} has non-finite entries")));
    }
    let violation = hermiticity_violation(h);
    if violation > SYMMETRIZE_TOLERANCE {
        return Err(Error::Argument(format!(
            "{what} is not Hermitian (violation {violation:.3e})"
        )));
    }
    if violation == 0.0 {
        Ok(h.clone())
    } else {
        Ok((h + h.adjoint()).scale(0.5))
    }
}

fn check_indices(monomials: &[Monomial], d: usize) -> Result<()> {
    for m in monomials {
        if let Some(i) = m.max_index() {
            if i >= d {
                return Err(Error::Argument(format!(
                    "monomial index {i} out of range 0..{d}"
                )));
            }
        }
        if !m.coefficient.re.is_finite() || !m.coefficient.im.is_finite() {
            return Err(Error::Argument("monomial coefficient is not finite".into()));
        }
    }
    Ok(())
}

/// Adds `coefficient * word` to the matrix of an operator between two index maps.
fn accumulate_word<F>(
    m: &mut CMatrix,
    coefficient: Complex64,
    word: &[(LadderKind, usize)],
    basis: &[Vec<u8>],
    statistics: Statistics,
    row_of: F,
) where
    F: Fn(&[u8]) -> Option<usize>,
{
    for (col, occ) in basis.iter().enumerate() {
        if let Some((amp, out)) = crate::fock::apply_word(word, occ, statistics) {
            if let Some(row) = row_of(&out) {
                m[(row, col)] += coefficient * amp;
            }
        }
    }
}

/// Number-conserving impurity Hamiltonian `a^dagger h a + U` with fragment
/// indices `0..p`.
#[derive(Clone, Debug)]
pub struct ImpurityModel {
    statistics: Statistics,
    h: CMatrix,
    interaction: Vec<Monomial>,
    p: usize,
}

impl ImpurityModel {
    /// Validates shapes and Hermiticity. `h` is symmetrized when its
    /// violation is at most [`SYMMETRIZE_TOLERANCE`].
    ///
    /// Monomials touching environment indices are accepted here;
    /// [`validate_impurity`] reports them.
    pub fn new(
        statistics: Statistics,
        h: CMatrix,
        interaction: Vec<Monomial>,
        p: usize,
    ) -> Result<Self> {
        let h = checked_hermitian(&h, "single-particle matrix h")?;
        let d = h.nrows();
        if p > d {
            return Err(Error::Argument(format!("fragment size p={p} exceeds d={d}")));
        }
        check_indices(&interaction, d)?;
        let violation = interaction_hermiticity_violation(&interaction, statistics);
        if violation > SYMMETRIZE_TOLERANCE {
            return Err(Error::Argument(format!(
                "interaction is not Hermitian (violation {violation:.3e})"
            )));
        }
        Ok(ImpurityModel {
            statistics,
            h,
            interaction,
            p,
        })
    }

    pub fn non_interacting(statistics: Statistics, h: CMatrix) -> Result<Self> {
        Self::new(statistics, h, Vec::new(), 0)
    }

    pub fn d(&self) -> usize {
        self.h.nrows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn interaction(&self) -> &[Monomial] {
        &self.interaction
    }

    pub fn is_interacting(&self) -> bool {
        !canonical_coefficients(&self.interaction, self.statistics)
            .values()
            .all(|c| c.norm() == 0.0)
    }

    /// Same Hamiltonian with a different declared fragment size.
    pub fn with_p(&self, p: usize) -> Result<Self> {
        if p > self.d() {
            return Err(Error::Argument(format!(
                "fragment size p={p} exceeds d={}",
                self.d()
            )));
        }
        Ok(ImpurityModel { p, ..self.clone() })
    }

    /// Same interaction with a different single-particle matrix.
    pub fn with_h(&self, h: CMatrix) -> Result<Self> {
        if h.shape() != self.h.shape() {
            return Err(Error::Argument("replacement h has the wrong shape".into()));
        }
        Ok(ImpurityModel {
            h: checked_hermitian(&h, "single-particle matrix h")?,
            ..self.clone()
        })
    }

    fn check_number_conserving(&self) -> Result<()> {
        for m in &self.interaction {
            if !m.is_number_conserving() && m.coefficient.norm() != 0.0 {
                return Err(Error::Structural(format!(
                    "monomial with {} creation and {} annihilation operators does not conserve particle number",
                    m.create.len(),
                    m.annihilate.len()
                )));
            }
        }
        Ok(())
    }

    /// Matrix of the Hamiltonian on `sector`.
    pub fn sector_matrix(&self, sector: &FockSector) -> Result<CMatrix> {
        if sector.d() != self.d() || sector.statistics() != self.statistics {
            return Err(Error::Argument(format!(
                "sector {} does not belong to this model",
                sector.label()
            )));
        }
        self.check_number_conserving()?;
        let dim = sector.dim();
        let mut m = CMatrix::zeros(dim, dim);
        let d = self.d();
        for i in 0..d {
            for j in 0..d {
                let hij = self.h[(i, j)];
                if hij.norm() == 0.0 {
                    continue;
                }
                accumulate_word(
                    &mut m,
                    hij,
                    &[(LadderKind::Create, i), (LadderKind::Annihilate, j)],
                    sector.basis(),
                    self.statistics,
                    |occ| sector.index_of(occ),
                );
            }
        }
        for mono in &self.interaction {
            accumulate_word(
                &mut m,
                mono.coefficient,
                &mono.word(),
                sector.basis(),
                self.statistics,
                |occ| sector.index_of(occ),
            );
        }
        Ok(m)
    }

    /// Matrix of the interaction alone on `sector`.
    pub fn interaction_matrix(&self, sector: &FockSector) -> Result<CMatrix> {
        self.check_number_conserving()?;
        let dim = sector.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for mono in &self.interaction {
            accumulate_word(
                &mut m,
                mono.coefficient,
                &mono.word(),
                sector.basis(),
                self.statistics,
                |occ| sector.index_of(occ),
            );
        }
        Ok(m)
    }
}

/// `H_N` as an operator from sector N to itself.
pub fn assemble_sector_hamiltonian(model: &ImpurityModel, n: usize) -> Result<SectorOperator> {
    let sector = FockSector::new(model.d(), n, model.statistics())?;
    let matrix = model.sector_matrix(&sector)?;
    SectorOperator::new(sector.label(), sector.label(), matrix)
}

/// Outcome of [`validate_impurity`].
#[derive(Clone, Debug, PartialEq)]
pub struct ImpurityValidation {
    /// Environment indices (`>= p`) that appear in a nonzero monomial.
    pub offending_indices: Vec<usize>,
    /// Largest entry of `[U, a_j]` or `[U, a_j^dagger]`, `j >= p`, over the
    /// checked sectors.
    pub max_violation: f64,
    pub pass: bool,
}

/// Checks that the interaction only involves fragment indices, both by
/// inspecting the monomials and by evaluating the commutators with every
/// environment ladder operator on small sectors.
pub fn validate_impurity(model: &ImpurityModel) -> ImpurityValidation {
    let p = model.p();
    let mut offending: Vec<usize> = model
        .interaction()
        .iter()
        .filter(|m| m.coefficient.norm() != 0.0)
        .flat_map(|m| m.indices().filter(|&i| i >= p).collect::<Vec<_>>())
        .collect();
    offending.sort_unstable();
    offending.dedup();

    let max_violation = commutator_violation(model).unwrap_or(f64::INFINITY);
    ImpurityValidation {
        pass: offending.is_empty() && max_violation <= IMPURITY_TOLERANCE,
        offending_indices: offending,
        max_violation,
    }
}

/// A normal-ordered polynomial vanishes iff it vanishes on all states with at
/// most as many particles as its largest annihilation degree, so checking
/// sectors up to that degree plus one is sufficient.
fn commutator_violation(model: &ImpurityModel) -> Result<f64> {
    let d = model.d();
    let stats = model.statistics();
    let max_ann = model
        .interaction()
        .iter()
        .map(|m| m.annihilate.len().max(m.create.len()))
        .max()
        .unwrap_or(0);
    let mut n_top = max_ann + 1;
    if stats == Statistics::Fermion {
        n_top = n_top.min(d);
    }
    let sectors = (0..=n_top)
        .map(|n| FockSector::new(d, n, stats))
        .collect::<Result<Vec<_>>>()?;
    let u: Vec<CMatrix> = sectors
        .iter()
        .map(|s| model.interaction_matrix(s))
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for n in 1..sectors.len() {
        for j in model.p()..d {
            // a_j: N -> N-1; a_j^dagger is its adjoint, so one commutator suffices
            // for both up to adjoints of U (which is Hermitian).
            let a = sectors[n].word_matrix(&[(LadderKind::Annihilate, j)], &sectors[n - 1]);
            let comm = &u[n - 1] * &a - &a * &u[n];
            worst = worst.max(max_abs(&comm));
            let ad = a.adjoint();
            let comm = &u[n] * &ad - &ad * &u[n - 1];
            worst = worst.max(max_abs(&comm));
        }
    }
    Ok(worst)
}

/// Fermionic Hamiltonian `a^dagger h a + 1/2 sum Delta_ij a_i^dagger a_j^dagger
/// + h.c. + U` on the full Fock space.
#[derive(Clone, Debug)]
pub struct AnomalousModel {
    h: CMatrix,
    delta: CMatrix,
    interaction: Vec<Monomial>,
    p: usize,
}

impl AnomalousModel {
    pub fn new(h: CMatrix, delta: CMatrix, interaction: Vec<Monomial>, p: usize) -> Result<Self> {
        let h = checked_hermitian(&h, "single-particle matrix h")?;
        let d = h.nrows();
        if delta.shape() != (d, d) {
            return Err(Error::Argument(format!(
                "pairing matrix has shape {:?}, expected ({d}, {d})",
                delta.shape()
            )));
        }
        let violation = max_abs(&(&delta + delta.transpose()));
        if violation > SYMMETRIZE_TOLERANCE {
            return Err(Error::Argument(format!(
                "pairing matrix is not antisymmetric (violation {violation:.3e})"
            )));
        }
        let delta = if violation == 0.0 {
            delta
        } else {
            (&delta - delta.transpose()).scale(0.5)
        };
        if p > d {
            return Err(Error::Argument(format!("fragment size p={p} exceeds d={d}")));
        }
        check_indices(&interaction, d)?;
        if let Some(m) = interaction.iter().find(|m| m.degree() % 2 != 0) {
            return Err(Error::Argument(format!(
                "interaction monomial of odd degree {}",
                m.degree()
            )));
        }
        let violation = interaction_hermiticity_violation(&interaction, Statistics::Fermion);
        if violation > SYMMETRIZE_TOLERANCE {
            return Err(Error::Argument(format!(
                "interaction is not Hermitian (violation {violation:.3e})"
            )));
        }
        Ok(AnomalousModel {
            h,
            delta,
            interaction,
            p,
        })
    }

    /// Rejects bosonic statistics; anomalous models are fermionic only.
    pub fn from_impurity(model: &ImpurityModel, delta: CMatrix) -> Result<Self> {
        if model.statistics() != Statistics::Fermion {
            return Err(Error::Unsupported(
                "anomalous Green's functions are implemented for fermions only".into(),
            ));
        }
        Self::new(model.h().clone(), delta, model.interaction().to_vec(), model.p())
    }

    pub fn d(&self) -> usize {
        self.h.nrows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn delta(&self) -> &CMatrix {
        &self.delta
    }

    pub fn interaction(&self) -> &[Monomial] {
        &self.interaction
    }

    pub fn with_p(&self, p: usize) -> Result<Self> {
        Self::new(self.h.clone(), self.delta.clone(), self.interaction.clone(), p)
    }

    /// Single-particle and pairing terms plus the interaction as one monomial list.
    pub fn all_monomials(&self) -> Vec<Monomial> {
        let d = self.d();
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if self.h[(i, j)].norm() != 0.0 {
                    out.push(Monomial::new(self.h[(i, j)], vec![i], vec![j]));
                }
                let dij = self.delta[(i, j)];
                if dij.norm() != 0.0 {
                    out.push(Monomial::new(dij * 0.5, vec![i, j], vec![]));
                    out.push(Monomial::new(dij.conj() * 0.5, vec![], vec![j, i]));
                }
            }
        }
        out.extend(self.interaction.iter().cloned());
        out
    }

    /// Dense Hermitian matrix of the Hamiltonian on the full `2^d` space.
    pub fn full_matrix(&self, space: &FullFockSpace) -> Result<CMatrix> {
        if space.d() != self.d() {
            return Err(Error::Argument("Fock space dimension mismatch".into()));
        }
        Ok(monomials_full_matrix(&self.all_monomials(), space))
    }
}

/// Matrix of a sum of monomials on the full fermionic Fock space.
pub fn monomials_full_matrix(monomials: &[Monomial], space: &FullFockSpace) -> CMatrix {
    let dim = space.dim();
    let mut m = CMatrix::zeros(dim, dim);
    for mono in monomials {
        accumulate_word(
            &mut m,
            mono.coefficient,
            &mono.word(),
            space.basis(),
            Statistics::Fermion,
            |occ| space.index_of(occ),
        );
    }
    m
}

/// Builds the full-space Hamiltonian of an anomalous model.
pub fn assemble_full_hamiltonian(model: &AnomalousModel) -> Result<CMatrix> {
    let space = FullFockSpace::fermionic(model.d())?;
    model.full_matrix(&space)
}

// ---------------------------------------------------------------------------
// Built-in models

/// Single-impurity Anderson model with one bath site per spin.
///
/// Indices: 0 = impurity up, 1 = impurity down, 2 = bath up, 3 = bath down.
/// The interaction is `U n_0 n_1`, written as `U a_0^dagger a_1^dagger a_1 a_0`.
pub fn siam(u: f64, eps_imp: f64, eps_bath: f64, v: f64) -> Result<ImpurityModel> {
    let r = |x: f64| c64(x, 0.0);
    let z = r(0.0);
    #[rustfmt::skip]
    let h = CMatrix::from_row_slice(4, 4, &[
        r(eps_imp), z, r(v), z,
        z, r(eps_imp), z, r(v),
        r(v), z, r(eps_bath), z,
        z, r(v), z, r(eps_bath),
    ]);
    let interaction = if u == 0.0 {
        Vec::new()
    } else {
        vec![Monomial::new(r(u), vec![0, 1], vec![1, 0])]
    };
    ImpurityModel::new(Statistics::Fermion, h, interaction, 2)
}

/// Parameters of [`bose_impurity`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoseImpurityParams {
    pub d: usize,
    pub u: f64,
    #[serde(default = "default_bose_eps_imp")]
    pub eps_imp: f64,
    #[serde(default = "default_bose_eps_bath")]
    pub eps_bath: f64,
    #[serde(default = "default_bose_hopping")]
    pub hopping: f64,
}

fn default_bose_eps_imp() -> f64 {
    0.5
}
fn default_bose_eps_bath() -> f64 {
    1.0
}
fn default_bose_hopping() -> f64 {
    0.3
}

impl BoseImpurityParams {
    pub fn new(d: usize, u: f64) -> Self {
        BoseImpurityParams {
            d,
            u,
            eps_imp: default_bose_eps_imp(),
            eps_bath: default_bose_eps_bath(),
            hopping: default_bose_hopping(),
        }
    }
}

/// Bosonic chain with an on-site interaction `U a_0^dagger a_0^dagger a_0 a_0`
/// on the first site (fragment size 1).
pub fn bose_impurity(params: BoseImpurityParams) -> Result<ImpurityModel> {
    let d = params.d;
    if d == 0 {
        return Err(Error::Argument("bose_impurity needs d >= 1".into()));
    }
    let mut h = CMatrix::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = c64(if i == 0 { params.eps_imp } else { params.eps_bath }, 0.0);
        if i + 1 < d {
            h[(i, i + 1)] = c64(params.hopping, 0.0);
            h[(i + 1, i)] = c64(params.hopping, 0.0);
        }
    }
    let interaction = if params.u == 0.0 {
        Vec::new()
    } else {
        vec![Monomial::new(c64(params.u, 0.0), vec![0, 0], vec![0, 0])]
    };
    ImpurityModel::new(Statistics::Boson, h, interaction, 1)
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

/// Random Hermitian matrix with entries of order one.
pub fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut h = CMatrix::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = c64(uniform(rng), 0.0);
        for j in i + 1..d {
            let x = c64(uniform(rng), uniform(rng));
            h[(i, j)] = x;
            h[(j, i)] = x.conj();
        }
    }
    h
}

/// Random positive semidefinite Hermitian matrix `X X^dagger / n + 0.1 I`.
fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut x = CMatrix::zeros(n, n);
    for v in x.iter_mut() {
        *v = c64(uniform(rng), uniform(rng));
    }
    let scale = 1.0 / n.max(1) as f64;
    (&x * x.adjoint()).scale(scale) + CMatrix::identity(n, n).scale(0.1)
}

/// Pair-interaction `sum_{PQ} W_PQ a_i^dagger a_j^dagger a_l a_k` over pairs
/// `P = (i,j), Q = (k,l)` of fragment indices with a random positive
/// semidefinite `W`, so the result is Hermitian and bounded below.
fn random_pair_interaction(p: usize, statistics: Statistics, rng: &mut ChaCha8Rng) -> Vec<Monomial> {
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| {
            let start = if statistics == Statistics::Fermion { i + 1 } else { i };
            (start..p).map(move |j| (i, j))
        })
        .collect();
    if pairs.is_empty() {
        return Vec::new();
    }
    let w = random_psd(pairs.len(), rng);
    let mut out = Vec::new();
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for (b, &(k, l)) in pairs.iter().enumerate() {
            out.push(Monomial::new(w[(a, b)], vec![i, j], vec![l, k]));
        }
    }
    out
}

/// Seeded random impurity model on `d` states with fragment `0..p`.
///
/// Fermions with `p >= 2` and bosons get a random pair interaction on the
/// fragment; a fermionic fragment of one state only admits the density term
/// `u n_0`. Bosonic `h` is shifted so its lowest eigenvalue is 0.5, which keeps
/// `mu = 0` inside the grand-canonical domain.
pub fn random_impurity(d: usize, p: usize, seed: u64, statistics: Statistics) -> Result<ImpurityModel> {
    if d == 0 || p > d {
        return Err(Error::Argument(format!(
            "random_impurity needs 0 <= p <= d and d >= 1 (got d={d}, p={p})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = random_hermitian(d, &mut rng);
    if statistics == Statistics::Boson {
        let lowest = HermitianEigen::new(&h).values[0];
        for i in 0..d {
            h[(i, i)] += c64(0.5 - lowest, 0.0);
        }
    }
    let mut interaction = random_pair_interaction(p, statistics, &mut rng);
    if interaction.is_empty() && p == 1 {
        interaction.push(Monomial::new(c64(0.5 + 0.5 * uniform(&mut rng).abs(), 0.0), vec![0], vec![0]));
    }
    ImpurityModel::new(statistics, h, interaction, p)
}

/// Seeded random anomalous model: pairing `Delta` supported on environment
/// indices, a pair interaction on the fragment and, for `p >= 2`, a fragment
/// pairing term `g a_0^dagger a_1^dagger + h.c.` in the interaction.
pub fn random_anomalous(d: usize, p: usize, seed: u64) -> Result<AnomalousModel> {
    if d == 0 || p > d {
        return Err(Error::Argument(format!(
            "random_anomalous needs 0 <= p <= d and d >= 1 (got d={d}, p={p})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hermitian(d, &mut rng);
    let mut delta = CMatrix::zeros(d, d);
    for i in p..d {
        for j in i + 1..d {
            let x = c64(uniform(&mut rng), uniform(&mut rng));
            delta[(i, j)] = x;
            delta[(j, i)] = -x;
        }
    }
    let mut interaction = random_pair_interaction(p, Statistics::Fermion, &mut rng);
    if p >= 2 {
        let g = c64(uniform(&mut rng), uniform(&mut rng)).scale(0.5);
        interaction.push(Monomial::new(g, vec![0, 1], vec![]));
        interaction.push(Monomial::new(g.conj(), vec![], vec![1, 0]));
    }
    AnomalousModel::new(h, delta, interaction, p)
}

// ---------------------------------------------------------------------------
// Model files

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialRecord {
    pub re: f64,
    pub im: f64,
    pub create: Vec<usize>,
    pub annihilate: Vec<usize>,
}

/// On-disk model description. Matrices are row-major lists of `[re, im]`
/// pairs; indices are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub statistics: Statistics,
    pub d: usize,
    pub p: usize,
    pub h: Vec<[f64; 2]>,
    #[serde(default)]
    pub monomials: Vec<MonomialRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<[f64; 2]>>,
}

/// A model read from a file: anomalous when the file carries `delta`.
#[derive(Clone, Debug)]
pub enum LoadedModel {
    Impurity(ImpurityModel),
    Anomalous(AnomalousModel),
}

fn matrix_to_pairs(m: &CMatrix) -> Vec<[f64; 2]> {
    let (r, c) = m.shape();
    (0..r)
        .flat_map(|i| (0..c).map(move |j| (i, j)))
        .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
        .collect()
}

fn pairs_to_matrix(d: usize, pairs: &[[f64; 2]], what: &str) -> Result<CMatrix> {
    if pairs.len() != d * d {
        return Err(Error::ModelFile(format!(
            "{what} has {} entries, expected d*d = {}",
            pairs.len(),
            d * d
        )));
    }
    Ok(CMatrix::from_row_iterator(
        d,
        d,
        pairs.iter().map(|&[re, im]| c64(re, im)),
    ))
}

fn records(monomials: &[Monomial]) -> Vec<MonomialRecord> {
    monomials
        .iter()
        .map(|m| MonomialRecord {
            re: m.coefficient.re,
            im: m.coefficient.im,
            create: m.create.clone(),
            annihilate: m.annihilate.clone(),
        })
        .collect()
}

impl ModelFile {
    pub fn from_impurity(model: &ImpurityModel) -> Self {
        ModelFile {
            statistics: model.statistics(),
            d: model.d(),
            p: model.p(),
            h: matrix_to_pairs(model.h()),
            monomials: records(model.interaction()),
            delta: None,
        }
    }

    pub fn from_anomalous(model: &AnomalousModel) -> Self {
        ModelFile {
            statistics: Statistics::Fermion,
            d: model.d(),
            p: model.p(),
            h: matrix_to_pairs(model.h()),
            monomials: records(model.interaction()),
            delta: Some(matrix_to_pairs(model.delta())),
        }
    }

    fn monomials(&self) -> Vec<Monomial> {
        self.monomials
            .iter()
            .map(|r| Monomial::new(c64(r.re, r.im), r.create.clone(), r.annihilate.clone()))
            .collect()
    }

    pub fn into_model(&self) -> Result<LoadedModel> {
        if self.d == 0 {
            return Err(Error::ModelFile("d must be positive".into()));
        }
        let h = pairs_to_matrix(self.d, &self.h, "h")?;
        let wrap = |e: Error| match e {
            Error::Argument(msg) => Error::ModelFile(msg),
            other => other,
        };
        match &self.delta {
            None => ImpurityModel::new(self.statistics, h, self.monomials(), self.p)
                .map(LoadedModel::Impurity)
                .map_err(wrap),
            Some(delta) => {
                if self.statistics != Statistics::Fermion {
                    return Err(Error::Unsupported(
                        "pairing terms are only supported for fermions".into(),
                    ));
                }
                let delta = pairs_to_matrix(self.d, delta, "delta")?;
                AnomalousModel::new(h, delta, self.monomials(), self.p)
                    .map(LoadedModel::Anomalous)
                    .map_err(wrap)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// Real symmetric matrix helper used by the Gibbs module and configs.
pub fn real_matrix_from_rows(n: usize, values: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if values.len() != n * n {
        return Err(Error::Argument(format!(
            "{what} has {} entries, expected {}",
            values.len(),
            n * n
        )));
    }
    Ok(DMatrix::from_row_slice(n, n, values))
}
