//! Occupation-number bases of fixed-particle-number sectors and the matrices of
//! creation, annihilation and number operators acting between them.
//!
//! Basis vectors of a sector are listed in descending lexicographic order of
//! their occupation vectors, so `|1,0>` precedes `|0,1>` and `|2,0>` precedes
//! `|1,1>`. All operator matrices are built against this order.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix};

/// Particle statistics. `zeta` is -1 for fermions and +1 for bosons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Fermion,
    Boson,
}

impl Statistics {
    pub fn zeta(self) -> f64 {
        match self {
            Statistics::Fermion => -1.0,
            Statistics::Boson => 1.0,
        }
    }

    /// Largest occupation a single state may carry, if bounded.
    pub fn max_occupation(self) -> Option<u8> {
        match self {
            Statistics::Fermion => Some(1),
            Statistics::Boson => None,
        }
    }
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistics::Fermion => f.write_str("fermion"),
            Statistics::Boson => f.write_str("boson"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadderKind {
    Annihilate,
    Create,
}

pub type Occupation = Vec<u8>;

/// `a_i |n>`: returns the amplitude and the resulting occupation vector, or
/// `None` for the zero vector.
pub fn annihilate(occ: &[u8], i: usize, statistics: Statistics) -> Option<(f64, Occupation)> {
    let ni = occ[i];
    if ni == 0 {
        return None;
    }
    let mut out = occ.to_vec();
    out[i] -= 1;
    Some((jordan_wigner_sign(occ, i, statistics) * f64::from(ni).sqrt(), out))
}

/// `a_i^dagger |n>`.
pub fn create(occ: &[u8], i: usize, statistics: Statistics) -> Option<(f64, Occupation)> {
    let ni = occ[i];
    if statistics == Statistics::Fermion && ni == 1 {
        return None;
    }
    let mut out = occ.to_vec();
    out[i] = ni.checked_add(1)?;
    Some((jordan_wigner_sign(occ, i, statistics) * f64::from(ni + 1).sqrt(), out))
}

/// `zeta^(sum_{j<i} n_j)`.
fn jordan_wigner_sign(occ: &[u8], i: usize, statistics: Statistics) -> f64 {
    match statistics {
        Statistics::Boson => 1.0,
        Statistics::Fermion => {
            let parity: u32 = occ[..i].iter().map(|&n| u32::from(n)).sum();
            if parity % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Applies a word of ladder operators (rightmost acts first) to a basis state.
pub fn apply_word(
    word: &[(LadderKind, usize)],
    occ: &[u8],
    statistics: Statistics,
) -> Option<(f64, Occupation)> {
    let mut amp = 1.0;
    let mut state = occ.to_vec();
    for &(kind, i) in word.iter().rev() {
        let (a, next) = match kind {
            LadderKind::Annihilate => annihilate(&state, i, statistics)?,
            LadderKind::Create => create(&state, i, statistics)?,
        };
        amp *= a;
        state = next;
    }
    Some((amp, state))
}

/// Identifies a sector without carrying its basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SectorLabel {
    pub d: usize,
    pub n: usize,
    pub statistics: Statistics,
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(d={}, N={})", self.statistics, self.d, self.n)
    }
}

/// Number of basis states of a sector: C(d, N) for fermions, C(N+d-1, d-1)
/// for bosons.
pub fn sector_dimension(d: usize, n: usize, statistics: Statistics) -> usize {
    match statistics {
        Statistics::Fermion if n > d => 0,
        Statistics::Fermion => binomial(d, n),
        Statistics::Boson => binomial(n + d - 1, d - 1),
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, j| acc * (n - j) / (j + 1))
}

/// The occupation-number basis of the N-particle subspace.
#[derive(Clone, Debug)]
pub struct FockSector {
    label: SectorLabel,
    basis: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

impl FockSector {
    pub fn new(d: usize, n: usize, statistics: Statistics) -> Result<Self> {
        if d == 0 {
            return Err(Error::Argument("number of states d must be positive".into()));
        }
        if statistics == Statistics::Fermion && n > d {
            return Err(Error::EmptySector(format!(
                "no fermionic sector with N={n} > d={d}"
            )));
        }
        if n > usize::from(u8::MAX) {
            return Err(Error::Argument(format!("particle number {n} is too large")));
        }
        let cap = statistics.max_occupation().map_or(n, |m| usize::from(m).min(n));
        let mut basis = Vec::with_capacity(sector_dimension(d, n, statistics));
        let mut current = vec![0u8; d];
        enumerate_descending(0, n, cap, &mut current, &mut basis);
        let index = basis
            .iter()
            .enumerate()
            .map(|(k, occ)| (occ.clone(), k))
            .collect();
        Ok(FockSector {
            label: SectorLabel { d, n, statistics },
            basis,
            index,
        })
    }

    pub fn label(&self) -> SectorLabel {
        self.label
    }

    pub fn d(&self) -> usize {
        self.label.d
    }

    pub fn n(&self) -> usize {
        self.label.n
    }

    pub fn statistics(&self) -> Statistics {
        self.label.statistics
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Occupation] {
        &self.basis
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Matrix of a number-conserving or number-changing word of ladder
    /// operators from this sector into `target`.
    pub fn word_matrix(
        &self,
        word: &[(LadderKind, usize)],
        target: &FockSector,
    ) -> CMatrix {
        let mut m = CMatrix::zeros(target.dim(), self.dim());
        for (col, occ) in self.basis.iter().enumerate() {
            if let Some((amp, out)) = apply_word(word, occ, self.statistics()) {
                if let Some(row) = target.index_of(&out) {
                    m[(row, col)] += c64(amp, 0.0);
                }
            }
        }
        m
    }
}

fn enumerate_descending(
    pos: usize,
    remaining: usize,
    cap: usize,
    current: &mut Vec<u8>,
    out: &mut Vec<Occupation>,
) {
    let d = current.len();
    if pos == d - 1 {
        if remaining <= cap {
            current[pos] = remaining as u8;
            out.push(current.clone());
        }
        return;
    }
    for k in (0..=remaining.min(cap)).rev() {
        current[pos] = k as u8;
        enumerate_descending(pos + 1, remaining - k, cap, current, out);
    }
    current[pos] = 0;
}

/// Builds the sector; see [`FockSector::new`].
pub fn build_sector(d: usize, n: usize, statistics: Statistics) -> Result<FockSector> {
    FockSector::new(d, n, statistics)
}

/// A linear map between two sectors of the same Fock space.
#[derive(Clone, Debug)]
pub struct SectorOperator {
    pub source: SectorLabel,
    pub target: SectorLabel,
    pub matrix: CMatrix,
}

impl SectorOperator {
    pub fn new(source: SectorLabel, target: SectorLabel, matrix: CMatrix) -> Result<Self> {
        let expected = (
            sector_dimension(target.d, target.n, target.statistics),
            sector_dimension(source.d, source.n, source.statistics),
        );
        if matrix.shape() != expected {
            return Err(Error::Argument(format!(
                "matrix shape {:?} does not match {} -> {} (expected {:?})",
                matrix.shape(),
                source,
                target,
                expected
            )));
        }
        Ok(SectorOperator {
            source,
            target,
            matrix,
        })
    }

    pub fn identity(sector: &FockSector) -> Self {
        SectorOperator {
            source: sector.label(),
            target: sector.label(),
            matrix: CMatrix::identity(sector.dim(), sector.dim()),
        }
    }

    pub fn adjoint(&self) -> Self {
        SectorOperator {
            source: self.target,
            target: self.source,
            matrix: self.matrix.adjoint(),
        }
    }

    /// `self ∘ rhs`: apply `rhs` first, then `self`.
    pub fn compose(&self, rhs: &SectorOperator) -> Result<Self> {
        if rhs.target != self.source {
            return Err(Error::Argument(format!(
                "cannot compose: inner sectors {} and {} differ",
                rhs.target, self.source
            )));
        }
        Ok(SectorOperator {
            source: rhs.source,
            target: self.target,
            matrix: &self.matrix * &rhs.matrix,
        })
    }

    pub fn add(&self, rhs: &SectorOperator) -> Result<Self> {
        self.combine(rhs, Complex64::new(1.0, 0.0))
    }

    pub fn sub(&self, rhs: &SectorOperator) -> Result<Self> {
        self.combine(rhs, Complex64::new(-1.0, 0.0))
    }

    fn combine(&self, rhs: &SectorOperator, factor: Complex64) -> Result<Self> {
        if self.source != rhs.source || self.target != rhs.target {
            return Err(Error::Argument(format!(
                "cannot add operators {} -> {} and {} -> {}",
                self.source, self.target, rhs.source, rhs.target
            )));
        }
        Ok(SectorOperator {
            source: self.source,
            target: self.target,
            matrix: &self.matrix + rhs.matrix.map(|x| x * factor),
        })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        SectorOperator {
            source: self.source,
            target: self.target,
            matrix: self.matrix.map(|x| x * factor),
        }
    }
}

/// Matrix of `a_i` (into N-1) or `a_i^dagger` (into N+1) on `sector`.
///
/// Annihilation from N = 0 and fermionic creation from N = d have no target
/// sector and are reported as [`Error::EmptySector`].
pub fn ladder_operator(i: usize, kind: LadderKind, sector: &FockSector) -> Result<SectorOperator> {
    let d = sector.d();
    if i >= d {
        return Err(Error::Argument(format!("state index {i} out of range 0..{d}")));
    }
    let n_target = match kind {
        LadderKind::Annihilate => sector.n().checked_sub(1).ok_or_else(|| {
            Error::EmptySector("annihilation out of the vacuum sector".into())
        })?,
        LadderKind::Create => sector.n() + 1,
    };
    let target = FockSector::new(d, n_target, sector.statistics()).map_err(|e| match e {
        Error::EmptySector(_) => Error::EmptySector(format!(
            "creation out of the top fermionic sector N={}",
            sector.n()
        )),
        other => other,
    })?;
    let matrix = sector.word_matrix(&[(kind, i)], &target);
    Ok(SectorOperator {
        source: sector.label(),
        target: target.label(),
        matrix,
    })
}

/// Diagonal matrix of `n_i = a_i^dagger a_i` on `sector`.
pub fn number_operator(i: usize, sector: &FockSector) -> Result<SectorOperator> {
    let d = sector.d();
    if i >= d {
        return Err(Error::Argument(format!("state index {i} out of range 0..{d}")));
    }
    let dim = sector.dim();
    let mut m = CMatrix::zeros(dim, dim);
    for (k, occ) in sector.basis().iter().enumerate() {
        m[(k, k)] = c64(f64::from(occ[i]), 0.0);
    }
    Ok(SectorOperator {
        source: sector.label(),
        target: sector.label(),
        matrix: m,
    })
}

/// Sectors `0..=n_top` of one Fock space together with the matrices of every
/// annihilation operator between neighbouring sectors.
#[derive(Clone, Debug)]
pub struct SectorLadders {
    pub sectors: Vec<FockSector>,
    /// `annihilators[N][i]` maps sector N to sector N-1; empty for N = 0.
    pub annihilators: Vec<Vec<CMatrix>>,
}

impl SectorLadders {
    pub fn new(d: usize, n_top: usize, statistics: Statistics) -> Result<Self> {
        let n_top = match statistics {
            Statistics::Fermion => n_top.min(d),
            Statistics::Boson => n_top,
        };
        let sectors = (0..=n_top)
            .map(|n| FockSector::new(d, n, statistics))
            .collect::<Result<Vec<_>>>()?;
        let mut annihilators = Vec::with_capacity(sectors.len());
        annihilators.push(Vec::new());
        for n in 1..sectors.len() {
            let ops = (0..d)
                .map(|i| sectors[n].word_matrix(&[(LadderKind::Annihilate, i)], &sectors[n - 1]))
                .collect();
            annihilators.push(ops);
        }
        Ok(SectorLadders {
            sectors,
            annihilators,
        })
    }

    pub fn n_top(&self) -> usize {
        self.sectors.len() - 1
    }

    pub fn d(&self) -> usize {
        self.sectors[0].d()
    }

    pub fn statistics(&self) -> Statistics {
        self.sectors[0].statistics()
    }
}

/// The full fermionic Fock space as the direct sum of sectors N = 0..=d,
/// sector blocks in increasing N.
#[derive(Clone, Debug)]
pub struct FullFockSpace {
    d: usize,
    basis: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
    particle_numbers: Vec<usize>,
}

impl FullFockSpace {
    pub fn fermionic(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Argument("number of states d must be positive".into()));
        }
        if d > 16 {
            return Err(Error::Argument(format!("d = {d} is too large for a dense Fock space")));
        }
        let mut basis = Vec::with_capacity(1 << d);
        let mut particle_numbers = Vec::with_capacity(1 << d);
        for n in 0..=d {
            let sector = FockSector::new(d, n, Statistics::Fermion)?;
            for occ in sector.basis() {
                basis.push(occ.clone());
                particle_numbers.push(n);
            }
        }
        let index = basis
            .iter()
            .enumerate()
            .map(|(k, occ)| (occ.clone(), k))
            .collect();
        Ok(FullFockSpace {
            d,
            basis,
            index,
            particle_numbers,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Occupation] {
        &self.basis
    }

    pub fn particle_number(&self, k: usize) -> usize {
        self.particle_numbers[k]
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Dense matrix of a word of ladder operators on the full space.
    pub fn word_matrix(&self, word: &[(LadderKind, usize)]) -> CMatrix {
        let dim = self.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for (col, occ) in self.basis.iter().enumerate() {
            if let Some((amp, out)) = apply_word(word, occ, Statistics::Fermion) {
                let row = self.index[&out];
                m[(row, col)] += c64(amp, 0.0);
            }
        }
        m
    }

    pub fn annihilator(&self, i: usize) -> CMatrix {
        self.word_matrix(&[(LadderKind::Annihilate, i)])
    }
}
