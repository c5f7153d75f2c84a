//! Zero- and finite-temperature Green's functions of number-conserving
//! impurity models, self-energies, Matsubara points and grand-canonical
//! statistics.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{FockSector, LadderKind, Statistics};
use crate::linalg::{c64, checked_inverse, solve, CMatrix, CVector, HermitianEigen};
use crate::model::ImpurityModel;
use crate::report::{fragment_mask, sparsity_report_with, SparsityReport};

/// Sample points closer than this to a pole are refused.
pub const POLE_MARGIN: f64 = 1e-8;

/// Sector weights below this fraction of the largest one end the automatic
/// bosonic truncation.
pub const WEIGHT_CUTOFF: f64 = 1e-12;

/// Largest automatically chosen bosonic `N_max`.
pub const MAX_AUTO_N_MAX: usize = 12;

/// Hamiltonian of one sector with its spectrum.
#[derive(Clone, Debug)]
pub struct SectorData {
    pub sector: FockSector,
    pub hamiltonian: CMatrix,
    pub eigen: HermitianEigen,
}

impl SectorData {
    pub fn new(model: &ImpurityModel, n: usize) -> Result<Self> {
        let sector = FockSector::new(model.d(), n, model.statistics())?;
        let hamiltonian = model.sector_matrix(&sector)?;
        let eigen = HermitianEigen::new(&hamiltonian);
        Ok(SectorData {
            sector,
            hamiltonian,
            eigen,
        })
    }

    pub fn n(&self) -> usize {
        self.sector.n()
    }

    pub fn dim(&self) -> usize {
        self.sector.dim()
    }

    /// `a_i` from this sector into `lower` in the occupation basis.
    fn annihilator(&self, i: usize, lower: &SectorData) -> CMatrix {
        self.sector
            .word_matrix(&[(LadderKind::Annihilate, i)], &lower.sector)
    }
}

/// A selected eigenpair of `H_N`.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub n: usize,
    pub e0: f64,
    pub psi0: CVector,
    /// `E_1 - E_0` within the sector; infinite for one-dimensional sectors.
    pub degeneracy_gap: f64,
}

/// Lowest eigenpair of `H_N`. Degenerate levels are resolved by the solver
/// order and the first non-negligible component is made real and positive.
pub fn ground_state(model: &ImpurityModel, n: usize) -> Result<GroundState> {
    eigenpair(model, n, 0)
}

/// The `index`-th eigenpair of `H_N` in ascending energy order.
pub fn eigenpair(model: &ImpurityModel, n: usize, index: usize) -> Result<GroundState> {
    let data = SectorData::new(model, n)?;
    state_from(&data, index)
}

fn state_from(data: &SectorData, index: usize) -> Result<GroundState> {
    let dim = data.dim();
    if index >= dim {
        return Err(Error::Argument(format!(
            "eigenpair index {index} out of range for a sector of dimension {dim}"
        )));
    }
    let values = &data.eigen.values;
    Ok(GroundState {
        n: data.n(),
        e0: values[index],
        psi0: data.eigen.vectors.column(index).into_owned(),
        degeneracy_gap: if dim > 1 {
            values[1] - values[0]
        } else {
            f64::INFINITY
        },
    })
}

/// Anything that yields a `d x d` Green's function at complex `z`.
pub trait GreensFunction: Sync {
    fn dim(&self) -> usize;

    /// Single-particle matrix entering `Sigma = z - h - G^{-1}`.
    fn h(&self) -> &CMatrix;

    fn evaluate(&self, z: Complex64) -> Result<CMatrix>;

    fn self_energy(&self, z: Complex64) -> Result<CMatrix> {
        let g = self.evaluate(z)?;
        self_energy(self.h(), &g, z)
    }
}

/// `Sigma(z) = z - h - G(z)^{-1}`.
pub fn self_energy(h: &CMatrix, g: &CMatrix, z: Complex64) -> Result<CMatrix> {
    let d = h.nrows();
    if g.shape() != (d, d) {
        return Err(Error::Argument(format!(
            "G has shape {:?}, expected ({d}, {d})",
            g.shape()
        )));
    }
    let ginv = checked_inverse(g)?;
    Ok(CMatrix::identity(d, d) * z - h - ginv)
}

/// `sum_t w_t u_t u_t^dagger / (z - omega_t)`.
#[derive(Clone, Debug)]
pub struct PoleExpansion {
    pub poles: Vec<f64>,
    pub weights: Vec<f64>,
    /// Residue vectors as columns, `d x T`.
    pub vectors: CMatrix,
}

impl PoleExpansion {
    fn new(d: usize) -> Self {
        PoleExpansion {
            poles: Vec::new(),
            weights: Vec::new(),
            vectors: CMatrix::zeros(d, 0),
        }
    }

    fn extend(&mut self, poles: Vec<f64>, weights: Vec<f64>, vectors: CMatrix) {
        let d = self.vectors.nrows();
        let old = self.poles.len();
        let new = poles.len();
        let mut merged = CMatrix::zeros(d, old + new);
        merged.columns_mut(0, old).copy_from(&self.vectors);
        merged.columns_mut(old, new).copy_from(&vectors);
        self.vectors = merged;
        self.poles.extend(poles);
        self.weights.extend(weights);
    }

    /// Nearest pole and its distance to `z`.
    pub fn nearest_pole(&self, z: Complex64) -> Option<(f64, f64)> {
        self.poles
            .iter()
            .map(|&w| (w, (z - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    fn check_pole(&self, z: Complex64) -> Result<()> {
        if let Some((pole, dist)) = self.nearest_pole(z) {
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

    pub fn evaluate(&self, z: Complex64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (t, (&w, &omega)) in self.weights.iter().zip(&self.poles).enumerate() {
            let c = w / (z - omega);
            scaled.column_mut(t).iter_mut().for_each(|x| *x *= c);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Zero-temperature Green's function about an eigenpair of `H_N`.
///
/// `evaluate` uses linear solves with `z -+ (H_{N+-1} - E_0)`;
/// `evaluate_lehmann` sums over the eigenpairs of the neighbouring sectors.
#[derive(Clone, Debug)]
pub struct ZeroTemperatureGreens {
    h: CMatrix,
    zeta: f64,
    reference: GroundState,
    /// Sector N+1 Hamiltonian and columns `a_j^dagger |psi0>`.
    plus: Option<(CMatrix, CMatrix)>,
    /// Sector N-1 Hamiltonian and columns `a_i |psi0>`.
    minus: Option<(CMatrix, CMatrix)>,
    lehmann: PoleExpansion,
}

impl ZeroTemperatureGreens {
    pub fn new(model: &ImpurityModel, n: usize) -> Result<Self> {
        Self::with_eigenpair(model, n, 0)
    }

    /// Uses the `index`-th eigenpair of `H_N` in place of the ground state.
    pub fn with_eigenpair(model: &ImpurityModel, n: usize, index: usize) -> Result<Self> {
        let d = model.d();
        let stats = model.statistics();
        let centre = SectorData::new(model, n)?;
        let reference = state_from(&centre, index)?;
        let e0 = reference.e0;
        let mut lehmann = PoleExpansion::new(d);

        let plus_exists = !(stats == Statistics::Fermion && n == d);
        let plus = if plus_exists {
            let upper = SectorData::new(model, n + 1)?;
            let mut b = CMatrix::zeros(upper.dim(), d);
            for j in 0..d {
                let ad = upper.annihilator(j, &centre).adjoint();
                b.set_column(j, &(ad * &reference.psi0));
            }
            // G+_ij = sum_m conj(C[m,i]) C[m,j] / (z - (E_m - E0)), C = V^dagger B.
            let c = upper.eigen.vectors.adjoint() * &b;
            let poles = upper.eigen.values.iter().map(|e| e - e0).collect();
            lehmann.extend(poles, vec![1.0; upper.dim()], c.adjoint());
            Some((upper.hamiltonian, b))
        } else {
            None
        };

        let minus = if n > 0 {
            let lower = SectorData::new(model, n - 1)?;
            let mut b = CMatrix::zeros(lower.dim(), d);
            for i in 0..d {
                let a = centre.annihilator(i, &lower);
                b.set_column(i, &(a * &reference.psi0));
            }
            // G-_ij = -zeta sum_m C[m,i] conj(C[m,j]) / (z - (E0 - E_m)).
            let c = lower.eigen.vectors.adjoint() * &b;
            let poles = lower.eigen.values.iter().map(|e| e0 - e).collect();
            lehmann.extend(poles, vec![-stats.zeta(); lower.dim()], c.transpose());
            Some((lower.hamiltonian, b))
        } else {
            None
        };

        Ok(ZeroTemperatureGreens {
            h: model.h().clone(),
            zeta: stats.zeta(),
            reference,
            plus,
            minus,
            lehmann,
        })
    }

    pub fn reference_state(&self) -> &GroundState {
        &self.reference
    }

    /// All pole locations (with multiplicity), unsorted.
    pub fn poles(&self) -> &[f64] {
        &self.lehmann.poles
    }

    pub fn evaluate_lehmann(&self, z: Complex64) -> Result<CMatrix> {
        self.lehmann.check_pole(z)?;
        Ok(self.lehmann.evaluate(z))
    }

    /// `G^+` and `G^-` separately, by linear solves.
    pub fn evaluate_parts(&self, z: Complex64) -> Result<(CMatrix, CMatrix)> {
        self.lehmann.check_pole(z)?;
        let d = self.h.nrows();
        let e0 = self.reference.e0;
        let gp = match &self.plus {
            Some((hp, b)) => {
                let shifted = shifted_resolvent_matrix(hp, z + e0, -1.0);
                b.adjoint() * solve(&shifted, b)?
            }
            None => CMatrix::zeros(d, d),
        };
        let gm = match &self.minus {
            Some((hm, b)) => {
                let shifted = shifted_resolvent_matrix(hm, z - e0, 1.0);
                (b.adjoint() * solve(&shifted, b)?).transpose() * c64(-self.zeta, 0.0)
            }
            None => CMatrix::zeros(d, d),
        };
        Ok((gp, gm))
    }
}

/// `shift * I + sign * H`.
fn shifted_resolvent_matrix(h: &CMatrix, shift: Complex64, sign: f64) -> CMatrix {
    let n = h.nrows();
    let mut m = h * c64(sign, 0.0);
    for k in 0..n {
        m[(k, k)] += shift;
    }
    m
}

impl GreensFunction for ZeroTemperatureGreens {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn h(&self) -> &CMatrix {
        &self.h
    }

    fn evaluate(&self, z: Complex64) -> Result<CMatrix> {
        let (gp, gm) = self.evaluate_parts(z)?;
        Ok(gp + gm)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log w(N) = beta mu N + log Tr_N exp(-beta H)`.
fn log_sector_weight(data: &SectorData, beta: f64, mu: f64) -> f64 {
    beta * mu * data.n() as f64 + log_sum_exp(data.eigen.values.iter().map(|e| -beta * e))
}

/// Checks that the sector weights peak strictly below `N_max` and decrease
/// strictly afterwards; this is the numerical stand-in for `mu` lying in the
/// interior of the domain of the partition function.
fn check_weight_decay(log_w: &[f64]) -> Result<()> {
    let n_max = log_w.len() - 1;
    let (n_star, _) = log_w
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (n, &w)| if w > best.1 { (n, w) } else { best });
    let decreasing = log_w[n_star..].windows(2).all(|w| w[1] < w[0]);
    if n_star >= n_max || !decreasing {
        return Err(Error::ChemicalPotentialDomain(format!(
            "sector weights do not decay below N_max = {n_max} (largest weight at N = {n_star})"
        )));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Argument(format!(
            "inverse temperature must be positive and finite, got {beta}"
        )));
    }
    Ok(())
}

/// Traced sectors `0..=N_max` and their log weights. Fermions always trace
/// every sector; bosons use `requested` or the automatic cutoff.
fn traced_sectors(
    model: &ImpurityModel,
    beta: f64,
    mu: f64,
    requested: Option<usize>,
) -> Result<(Vec<SectorData>, Vec<f64>)> {
    check_beta(beta)?;
    if !mu.is_finite() {
        return Err(Error::Argument("chemical potential must be finite".into()));
    }
    let mut sectors = Vec::new();
    let mut log_w = Vec::new();
    match model.statistics() {
        Statistics::Fermion => {
            for n in 0..=model.d() {
                let data = SectorData::new(model, n)?;
                log_w.push(log_sector_weight(&data, beta, mu));
                sectors.push(data);
            }
        }
        Statistics::Boson => match requested {
            Some(n_max) => {
                if n_max == 0 {
                    return Err(Error::Argument("bosonic N_max must be at least 1".into()));
                }
                for n in 0..=n_max {
                    let data = SectorData::new(model, n)?;
                    log_w.push(log_sector_weight(&data, beta, mu));
                    sectors.push(data);
                }
                check_weight_decay(&log_w)?;
            }
            None => {
                let cutoff = WEIGHT_CUTOFF.ln();
                for n in 0..=MAX_AUTO_N_MAX {
                    let data = SectorData::new(model, n)?;
                    log_w.push(log_sector_weight(&data, beta, mu));
                    sectors.push(data);
                    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if n >= 1 && log_w[n] < log_w[n - 1] && log_w[n] - max <= cutoff {
                        break;
                    }
                }
                check_weight_decay(&log_w)?;
            }
        },
    }
    Ok((sectors, log_w))
}

/// Grand-canonical partition function, `Omega = log(Z) / beta` and `<N>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrandStats {
    pub z: f64,
    pub log_z: f64,
    pub omega: f64,
    pub expected_n: f64,
    pub n_max: usize,
}

pub fn grand_stats(
    model: &ImpurityModel,
    beta: f64,
    mu: f64,
    n_max: Option<usize>,
) -> Result<GrandStats> {
    let (sectors, log_w) = traced_sectors(model, beta, mu, n_max)?;
    Ok(stats_from(&sectors, &log_w, beta))
}

fn stats_from(sectors: &[SectorData], log_w: &[f64], beta: f64) -> GrandStats {
    let log_z = log_sum_exp(log_w.iter().copied());
    let expected_n = sectors
        .iter()
        .zip(log_w)
        .map(|(s, lw)| s.n() as f64 * (lw - log_z).exp())
        .sum();
    GrandStats {
        z: log_z.exp(),
        log_z,
        omega: log_z / beta,
        expected_n,
        n_max: sectors.last().map_or(0, SectorData::n),
    }
}

/// Central difference of `Omega` in `mu` at fixed `N_max`.
pub fn omega_derivative(model: &ImpurityModel, beta: f64, mu: f64, n_max: Option<usize>, step: f64) -> Result<f64> {
    let n_max = Some(grand_stats(model, beta, mu, n_max)?.n_max);
    let up = grand_stats(model, beta, mu + step, n_max)?;
    let down = grand_stats(model, beta, mu - step, n_max)?;
    Ok((up.omega - down.omega) / (2.0 * step))
}

/// Matsubara points `i omega_m + mu` with `omega_m = (2m+1) pi / beta` for
/// fermions and `2 m pi / beta` for bosons.
pub fn matsubara_points(beta: f64, statistics: Statistics, mu: f64, indices: &[i64]) -> Result<Vec<Complex64>> {
    check_beta(beta)?;
    Ok(indices
        .iter()
        .map(|&m| {
            let k = match statistics {
                Statistics::Fermion => 2 * m + 1,
                Statistics::Boson => 2 * m,
            };
            c64(mu, k as f64 * PI / beta)
        })
        .collect())
}

/// The first `count` non-negative Matsubara indices; the bosonic `m = 0`
/// point lies on the real axis and is skipped.
pub fn default_matsubara_indices(statistics: Statistics, count: usize) -> Vec<i64> {
    let start = match statistics {
        Statistics::Fermion => 0,
        Statistics::Boson => 1,
    };
    (start..start + count as i64).collect()
}

/// Per-sector data kept by the finite-temperature evaluator.
#[derive(Clone, Debug)]
struct TracedSector {
    data: SectorData,
    /// `p_m` for each eigenstate, zero outside the traced ensemble.
    probabilities: Vec<f64>,
}

/// Finite-temperature Green's function of the grand-canonical ensemble.
///
/// Fermions trace every sector. Bosons trace sectors `0..=N_max` and use
/// spectral data up to `N_max + 1`, so the truncated ensemble satisfies the
/// equal-time relation exactly.
#[derive(Clone, Debug)]
pub struct FiniteTemperatureGreens {
    h: CMatrix,
    zeta: f64,
    beta: f64,
    mu: f64,
    n_max: usize,
    stats: GrandStats,
    top_weight: f64,
    sectors: Vec<TracedSector>,
    lehmann: PoleExpansion,
}

impl FiniteTemperatureGreens {
    pub fn new(model: &ImpurityModel, beta: f64, mu: f64, n_max: Option<usize>) -> Result<Self> {
        let d = model.d();
        let statistics = model.statistics();
        let (mut sector_data, log_w) = traced_sectors(model, beta, mu, n_max)?;
        let stats = stats_from(&sector_data, &log_w, beta);
        let n_max = stats.n_max;
        let top_weight = (log_w[n_max] - stats.log_z).exp();
        if statistics == Statistics::Boson {
            sector_data.push(SectorData::new(model, n_max + 1)?);
        }
        let sectors: Vec<TracedSector> = sector_data
            .into_iter()
            .map(|data| {
                let traced = data.n() <= n_max;
                let nf = data.n() as f64;
                let probabilities = data
                    .eigen
                    .values
                    .iter()
                    .map(|e| {
                        if traced {
                            (-beta * (e - mu * nf) - stats.log_z).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                TracedSector {
                    data,
                    probabilities,
                }
            })
            .collect();

        let mut lehmann = PoleExpansion::new(d);
        let zeta = statistics.zeta();
        for pair in sectors.windows(2) {
            let (lower, upper) = (&pair[0], &pair[1]);
            let (dl, du) = (lower.data.dim(), upper.data.dim());
            // u_i(a, b) = <a| a_i |b> in the eigenbases.
            let vl = lower.data.eigen.vectors.adjoint();
            let vu = &upper.data.eigen.vectors;
            let mut amps = Vec::with_capacity(d);
            for i in 0..d {
                amps.push(&vl * upper.data.annihilator(i, &lower.data) * vu);
            }
            let mut poles = Vec::with_capacity(dl * du);
            let mut weights = Vec::with_capacity(dl * du);
            let mut vectors = CMatrix::zeros(d, dl * du);
            let mut t = 0;
            for a in 0..dl {
                for b in 0..du {
                    let w = lower.probabilities[a] - zeta * upper.probabilities[b];
                    if w == 0.0 {
                        continue;
                    }
                    let mut norm = 0.0;
                    for i in 0..d {
                        let u = amps[i][(a, b)];
                        norm += u.norm_sqr();
                        vectors[(i, t)] = u;
                    }
                    if norm == 0.0 {
                        continue;
                    }
                    poles.push(upper.data.eigen.values[b] - lower.data.eigen.values[a]);
                    weights.push(w);
                    t += 1;
                }
            }
            lehmann.extend(poles, weights, vectors.columns(0, t).into_owned());
        }

        Ok(FiniteTemperatureGreens {
            h: model.h().clone(),
            zeta,
            beta,
            mu,
            n_max,
            stats,
            top_weight,
            sectors,
            lehmann,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Highest traced sector.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn grand_stats(&self) -> GrandStats {
        self.stats
    }

    /// Probability of the highest traced sector; for bosons this bounds the
    /// truncation error of the ensemble.
    pub fn truncation_weight(&self) -> f64 {
        self.top_weight
    }

    pub fn poles(&self) -> &[f64] {
        &self.lehmann.poles
    }

    pub fn evaluate_lehmann(&self, z: Complex64) -> Result<CMatrix> {
        self.lehmann.check_pole(z)?;
        Ok(self.lehmann.evaluate(z))
    }

    /// Weighted sum of resolvent solves about every traced eigenstate with
    /// probability above `1e-16`; an independent path to the same function.
    pub fn evaluate_resolvent(&self, z: Complex64) -> Result<CMatrix> {
        self.lehmann.check_pole(z)?;
        let d = self.h.nrows();
        let mut g = CMatrix::zeros(d, d);
        for (k, s) in self.sectors.iter().enumerate() {
            let upper = self.sectors.get(k + 1);
            let lower = k.checked_sub(1).map(|j| &self.sectors[j]);
            let up_ops: Option<Vec<CMatrix>> = upper.map(|u| {
                (0..d)
                    .map(|j| u.data.annihilator(j, &s.data).adjoint())
                    .collect()
            });
            let down_ops: Option<Vec<CMatrix>> =
                lower.map(|l| (0..d).map(|i| s.data.annihilator(i, &l.data)).collect());
            for (m, &pm) in s.probabilities.iter().enumerate() {
                if pm <= 1e-16 {
                    continue;
                }
                let em = s.data.eigen.values[m];
                let state = s.data.eigen.vectors.column(m);
                if let (Some(u), Some(ops)) = (upper, &up_ops) {
                    let mut b = CMatrix::zeros(u.data.dim(), d);
                    for j in 0..d {
                        b.set_column(j, &(&ops[j] * state));
                    }
                    let shifted = shifted_resolvent_matrix(&u.data.hamiltonian, z + em, -1.0);
                    g += (b.adjoint() * solve(&shifted, &b)?) * c64(pm, 0.0);
                }
                if let (Some(l), Some(ops)) = (lower, &down_ops) {
                    let mut b = CMatrix::zeros(l.data.dim(), d);
                    for i in 0..d {
                        b.set_column(i, &(&ops[i] * state));
                    }
                    let shifted = shifted_resolvent_matrix(&l.data.hamiltonian, z - em, 1.0);
                    g += (b.adjoint() * solve(&shifted, &b)?).transpose() * c64(-self.zeta * pm, 0.0);
                }
            }
        }
        Ok(g)
    }
}

impl GreensFunction for FiniteTemperatureGreens {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn h(&self) -> &CMatrix {
        &self.h
    }

    fn evaluate(&self, z: Complex64) -> Result<CMatrix> {
        self.evaluate_lehmann(z)
    }
}

/// Evaluates `Sigma` at every sample and reports the block norms for the
/// fragment `0..p`.
pub fn sparsity_report<G: GreensFunction>(
    greens: &G,
    p: usize,
    samples: &[Complex64],
    tolerance: f64,
    min_imag: f64,
) -> Result<SparsityReport> {
    let mask = fragment_mask(greens.dim(), p);
    sparsity_report_with(|z| greens.self_energy(z), &mask, samples, tolerance, min_imag)
}

/// `n_re` points on `[re_min, re_max]` at fixed imaginary part.
pub fn line_samples(re_min: f64, re_max: f64, n_re: usize, im: f64) -> Vec<Complex64> {
    if n_re == 1 {
        return vec![c64(re_min, im)];
    }
    (0..n_re)
        .map(|k| c64(re_min + (re_max - re_min) * k as f64 / (n_re - 1) as f64, im))
        .collect()
}
