//! Piecewise-linear complex contours, time-ordered evolution on a grid,
//! contour-ordered Green's functions and their equation-of-motion residuals.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{FockSector, LadderKind, Statistics};
use crate::linalg::{c64, frobenius, trace_of_product, CMatrix, HermitianEigen};
use crate::model::ImpurityModel;

/// Largest automatically chosen bosonic `N_max` on a contour.
pub const MAX_AUTO_N_MAX: usize = 12;

/// Sector norms below this fraction of the largest end the automatic
/// bosonic truncation.
pub const NORM_CUTOFF: f64 = 1e-12;

/// `|Z|` below this multiple of the summed sector norms counts as zero.
pub const PARTITION_CUTOFF: f64 = 1e-10;

/// One straight piece of a contour, parametrized by arc length so `|zdot| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub z_start: Complex64,
    pub z_end: Complex64,
    pub s_start: f64,
    pub length: f64,
    pub zdot: Complex64,
}

impl Segment {
    pub fn s_end(&self) -> f64 {
        self.s_start + self.length
    }

    pub fn z_at(&self, s: f64) -> Complex64 {
        self.z_start + self.zdot * (s - self.s_start)
    }
}

/// A concatenation of straight segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    segments: Vec<Segment>,
}

impl Contour {
    /// Joins consecutive points by straight segments.
    pub fn from_points(points: &[Complex64]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Argument("a contour needs at least two points".into()));
        }
        let mut segments = Vec::with_capacity(points.len() - 1);
        let mut s = 0.0;
        for w in points.windows(2) {
            let delta = w[1] - w[0];
            let length = delta.norm();
            if !(length > 0.0) || !length.is_finite() {
                return Err(Error::Argument(format!(
                    "contour points {} and {} do not define a segment",
                    w[0], w[1]
                )));
            }
            segments.push(Segment {
                z_start: w[0],
                z_end: w[1],
                s_start: s,
                length,
                zdot: delta / length,
            });
            s += length;
        }
        Ok(Contour { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `(s0, s1)`.
    pub fn s_domain(&self) -> (f64, f64) {
        (0.0, self.segments.last().map_or(0.0, Segment::s_end))
    }
}

/// The Kadanoff-Baym contour `t0 -> t1 -> t0 -> t0 - i beta`.
pub fn kadanoff_baym_contour(t0: f64, t1: f64, beta: f64) -> Result<Contour> {
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Argument(format!(
            "Kadanoff-Baym contour needs t1 > t0 (got t0={t0}, t1={t1})"
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Argument(format!(
            "inverse temperature must be positive, got {beta}"
        )));
    }
    Contour::from_points(&[c64(t0, 0.0), c64(t1, 0.0), c64(t0, 0.0), c64(t0, -beta)])
}

pub type HamiltonianFn = dyn Fn(usize, Complex64) -> Result<ImpurityModel> + Send + Sync;
pub type RealTimeFn = dyn Fn(f64) -> Result<ImpurityModel> + Send + Sync;

/// `H(z)` along a contour, given per segment as a function of `z`.
#[derive(Clone)]
pub struct ContourHamiltonian {
    statistics: Statistics,
    d: usize,
    p: usize,
    f: Arc<HamiltonianFn>,
}

impl std::fmt::Debug for ContourHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContourHamiltonian")
            .field("statistics", &self.statistics)
            .field("d", &self.d)
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

impl ContourHamiltonian {
    pub fn new(statistics: Statistics, d: usize, p: usize, f: Arc<HamiltonianFn>) -> Self {
        ContourHamiltonian { statistics, d, p, f }
    }

    /// The same Hamiltonian on every segment.
    pub fn constant(model: ImpurityModel) -> Self {
        let (statistics, d, p) = (model.statistics(), model.d(), model.p());
        ContourHamiltonian::new(statistics, d, p, Arc::new(move |_, _| Ok(model.clone())))
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `H(z)` on `segment`.
    pub fn at(&self, segment: usize, z: Complex64) -> Result<ImpurityModel> {
        let m = (self.f)(segment, z)?;
        if m.d() != self.d || m.statistics() != self.statistics {
            return Err(Error::Argument(format!(
                "contour Hamiltonian changed shape at z = {z}"
            )));
        }
        Ok(m)
    }
}

/// Kadanoff-Baym contour with `real_time(t)` on both real branches and `hbar`
/// on the vertical segment.
pub fn kadanoff_baym(
    t0: f64,
    t1: f64,
    beta: f64,
    real_time: Arc<RealTimeFn>,
    hbar: ImpurityModel,
) -> Result<(Contour, ContourHamiltonian)> {
    let contour = kadanoff_baym_contour(t0, t1, beta)?;
    let probe = real_time(t0)?;
    if probe.d() != hbar.d() || probe.statistics() != hbar.statistics() {
        return Err(Error::Argument(
            "real-time and Matsubara Hamiltonians act on different spaces".into(),
        ));
    }
    let p = probe.p().max(hbar.p());
    let f = move |segment: usize, z: Complex64| {
        if segment < 2 {
            real_time(z.re)
        } else {
            Ok(hbar.clone())
        }
    };
    let ch = ContourHamiltonian::new(probe.statistics(), probe.d(), p, Arc::new(f));
    Ok((contour, ch))
}

/// Kadanoff-Baym setup for `model`, with `H - mu N` on the vertical segment
/// and optionally `h(t) = h + cos(omega t) h1` on the real branches.
pub fn kadanoff_baym_equilibrium(
    t0: f64,
    t1: f64,
    beta: f64,
    model: &ImpurityModel,
    mu: f64,
    drive: Option<(CMatrix, f64)>,
) -> Result<(Contour, ContourHamiltonian)> {
    let d = model.d();
    let hbar = model.with_h(model.h() - CMatrix::identity(d, d) * c64(mu, 0.0))?;
    let base = model.clone();
    let real_time: Arc<RealTimeFn> = match drive {
        None => Arc::new(move |_| Ok(base.clone())),
        Some((h1, omega)) => {
            if h1.shape() != (d, d) {
                return Err(Error::Argument("drive matrix has the wrong shape".into()));
            }
            // Validate once so later failures can only come from the closure.
            base.with_h(base.h() + &h1)?;
            Arc::new(move |t| base.with_h(base.h() + &h1 * c64((omega * t).cos(), 0.0)))
        }
    };
    kadanoff_baym(t0, t1, beta, real_time, hbar)
}

/// Nodes of a contour with every segment boundary on a node.
#[derive(Clone, Debug)]
pub struct ContourGrid {
    contour: Contour,
    intervals: Vec<usize>,
    /// Node index at which each segment starts; one extra entry for the end.
    first_node: Vec<usize>,
    s: Vec<f64>,
    z: Vec<Complex64>,
    step_segment: Vec<usize>,
}

impl ContourGrid {
    /// `intervals` holds the number of steps per segment, either one value
    /// for all segments or one per segment. At least two steps per segment
    /// (three nodes) are required.
    pub fn new(contour: Contour, intervals: &[usize]) -> Result<Self> {
        let nseg = contour.segments().len();
        let intervals: Vec<usize> = match intervals.len() {
            1 => vec![intervals[0]; nseg],
            n if n == nseg => intervals.to_vec(),
            n => {
                return Err(Error::Argument(format!(
                    "{n} interval counts given for {nseg} segments"
                )))
            }
        };
        if let Some(&k) = intervals.iter().find(|&&k| k < 2) {
            return Err(Error::GridTooCoarse(format!(
                "{k} steps on a segment; at least 2 are needed for derivative stencils"
            )));
        }
        let mut first_node = Vec::with_capacity(nseg + 1);
        let mut s = Vec::new();
        let mut z = Vec::new();
        let mut step_segment = Vec::new();
        for (k, seg) in contour.segments().iter().enumerate() {
            first_node.push(s.len());
            let n = intervals[k];
            for m in 0..n {
                let sm = seg.s_start + seg.length * m as f64 / n as f64;
                s.push(sm);
                z.push(seg.z_at(sm));
                step_segment.push(k);
            }
        }
        let last = contour.segments().last().expect("non-empty contour");
        first_node.push(s.len());
        s.push(last.s_end());
        z.push(last.z_end);
        Ok(ContourGrid {
            contour,
            intervals,
            first_node,
            s,
            z,
            step_segment,
        })
    }

    pub fn contour(&self) -> &Contour {
        &self.contour
    }

    pub fn node_count(&self) -> usize {
        self.s.len()
    }

    pub fn step_count(&self) -> usize {
        self.step_segment.len()
    }

    pub fn s(&self, k: usize) -> f64 {
        self.s[k]
    }

    pub fn z(&self, k: usize) -> Complex64 {
        self.z[k]
    }

    pub fn intervals(&self) -> &[usize] {
        &self.intervals
    }

    /// Step width on `segment`.
    pub fn delta_s(&self, segment: usize) -> f64 {
        self.contour.segments()[segment].length / self.intervals[segment] as f64
    }

    pub fn max_delta_s(&self) -> f64 {
        (0..self.intervals.len())
            .map(|k| self.delta_s(k))
            .fold(0.0, f64::max)
    }

    /// Node range `first..=last` of `segment`.
    pub fn segment_nodes(&self, segment: usize) -> (usize, usize) {
        (self.first_node[segment], self.first_node[segment + 1])
    }

    /// Segments whose closed node range contains node `k`.
    pub fn segments_at(&self, k: usize) -> Vec<usize> {
        (0..self.intervals.len())
            .filter(|&seg| {
                let (a, b) = self.segment_nodes(seg);
                a <= k && k <= b
            })
            .collect()
    }

    /// Segment and `z` at the midpoint of step `k` (from node k to k+1).
    pub fn step_midpoint(&self, k: usize) -> (usize, Complex64) {
        (self.step_segment[k], (self.z[k] + self.z[k + 1]) * 0.5)
    }
}

/// Cached evolution operators of every sector on a grid.
#[derive(Clone, Debug)]
pub struct Propagation {
    statistics: Statistics,
    d: usize,
    /// Highest sector entering traces.
    n_traced: usize,
    sectors: Vec<FockSector>,
    /// `annihilators[N][i]`: sector N -> N-1.
    annihilators: Vec<Vec<CMatrix>>,
    /// `steps[N][k] = U(s_{k+1}, s_k)`.
    steps: Vec<Vec<CMatrix>>,
    /// `forward[N][m] = U(s_m, s_0)`.
    forward: Vec<Vec<CMatrix>>,
    /// `backward[N][n] = U(s_K, s_n)`.
    backward: Vec<Vec<CMatrix>>,
    partition: Complex64,
}

fn propagate_sector(
    sector: &FockSector,
    models: &[ImpurityModel],
    grid: &ContourGrid,
) -> Result<(Vec<CMatrix>, Vec<CMatrix>, Vec<CMatrix>)> {
    let steps = models
        .par_iter()
        .enumerate()
        .map(|(k, model)| {
            let h = model.sector_matrix(sector)?;
            let dz = grid.z(k + 1) - grid.z(k);
            Ok(HermitianEigen::new(&h).apply_function(|lambda| (c64(0.0, -1.0) * dz * lambda).exp()))
        })
        .collect::<Result<Vec<CMatrix>>>()?;
    let dim = sector.dim();
    let mut forward = Vec::with_capacity(steps.len() + 1);
    forward.push(CMatrix::identity(dim, dim));
    for step in &steps {
        let next = step * forward.last().expect("non-empty");
        forward.push(next);
    }
    let mut backward = vec![CMatrix::identity(dim, dim); steps.len() + 1];
    for k in (0..steps.len()).rev() {
        backward[k] = &backward[k + 1] * &steps[k];
    }
    Ok((steps, forward, backward))
}

/// Evolves every needed sector along the grid with midpoint exponentials
/// `U(s_{k+1}, s_k) = exp(-i dz H(z_mid))`.
///
/// Fermions use all sectors. Bosons trace sectors `0..=N_max` and propagate
/// one more; without an explicit `n_max` the smallest `N_max <= 12` whose
/// `||U_N(s1, s0)||_F` has fallen by 1e-12 is used. The bosonic trace-class
/// surrogate requires that norm to decrease at `N_max`.
pub fn propagate(ch: &ContourHamiltonian, grid: &ContourGrid, n_max: Option<usize>) -> Result<Propagation> {
    let d = ch.d();
    let statistics = ch.statistics();
    let models = (0..grid.step_count())
        .map(|k| {
            let (seg, z) = grid.step_midpoint(k);
            ch.at(seg, z)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sectors = Vec::new();
    let mut steps = Vec::new();
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut norms: Vec<f64> = Vec::new();
    let mut push = |n: usize,
                    sectors: &mut Vec<FockSector>,
                    norms: &mut Vec<f64>|
     -> Result<()> {
        let sector = FockSector::new(d, n, statistics)?;
        let (s, f, b) = propagate_sector(&sector, &models, grid)?;
        norms.push(frobenius(f.last().expect("non-empty")));
        sectors.push(sector);
        steps.push(s);
        forward.push(f);
        backward.push(b);
        Ok(())
    };

    let n_traced = match statistics {
        Statistics::Fermion => {
            for n in 0..=d {
                push(n, &mut sectors, &mut norms)?;
            }
            d
        }
        Statistics::Boson => {
            let n_traced = match n_max {
                Some(n_max) => {
                    if n_max == 0 {
                        return Err(Error::Argument("bosonic N_max must be at least 1".into()));
                    }
                    for n in 0..=n_max {
                        push(n, &mut sectors, &mut norms)?;
                    }
                    n_max
                }
                None => {
                    let mut chosen = MAX_AUTO_N_MAX;
                    for n in 0..=MAX_AUTO_N_MAX {
                        push(n, &mut sectors, &mut norms)?;
                        let max = norms.iter().copied().fold(0.0, f64::max);
                        if n >= 1 && norms[n] < norms[n - 1] && norms[n] <= NORM_CUTOFF * max {
                            chosen = n;
                            break;
                        }
                    }
                    chosen
                }
            };
            if !(norms[n_traced] < norms[n_traced - 1]) {
                return Err(Error::TraceClass(format!(
                    "||U(s1, s0)|| does not decay at N_max = {n_traced} ({:.3e} after {:.3e})",
                    norms[n_traced],
                    norms[n_traced - 1]
                )));
            }
            push(n_traced + 1, &mut sectors, &mut norms)?;
            n_traced
        }
    };

    let partition: Complex64 = forward[..=n_traced]
        .iter()
        .map(|f| f.last().expect("non-empty").trace())
        .sum();
    let scale: f64 = norms[..=n_traced].iter().sum();
    if !(partition.norm() > PARTITION_CUTOFF * scale) {
        return Err(Error::VanishingPartitionFunction(format!(
            "|Z| = {:.3e} against sector norms {:.3e}",
            partition.norm(),
            scale
        )));
    }

    let mut annihilators = vec![Vec::new()];
    for n in 1..sectors.len() {
        annihilators.push(
            (0..d)
                .map(|i| sectors[n].word_matrix(&[(LadderKind::Annihilate, i)], &sectors[n - 1]))
                .collect(),
        );
    }

    Ok(Propagation {
        statistics,
        d,
        n_traced,
        sectors,
        annihilators,
        steps,
        forward,
        backward,
        partition,
    })
}

impl Propagation {
    pub fn partition_function(&self) -> Complex64 {
        self.partition
    }

    /// Highest traced sector.
    pub fn n_max(&self) -> usize {
        self.n_traced
    }

    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    /// `U_N(s_k, s_l)` for `k >= l` as an ordered product of cached steps.
    pub fn evolution(&self, n: usize, k: usize, l: usize) -> Result<CMatrix> {
        if k < l || k >= self.forward[0].len() {
            return Err(Error::Argument(format!(
                "evolution U(s_{k}, s_{l}) needs {l} <= {k} < {}",
                self.forward[0].len()
            )));
        }
        let steps = self
            .steps
            .get(n)
            .ok_or_else(|| Error::Argument(format!("sector {n} was not propagated")))?;
        let dim = self.sectors[n].dim();
        Ok(steps[l..k]
            .iter()
            .fold(CMatrix::identity(dim, dim), |acc, s| s * acc))
    }

    /// Largest relative deviation of `U(s_K, s_m) U(s_m, s_0)` from
    /// `U(s_K, s_0)` over all nodes `m` and traced sectors.
    pub fn group_property_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..=self.n_traced {
            let total = self.forward[n].last().expect("non-empty");
            let scale = frobenius(total);
            if scale == 0.0 {
                continue;
            }
            for (a, b) in self.backward[n].iter().zip(&self.forward[n]) {
                worst = worst.max(frobenius(&(a * b - total)) / scale);
            }
        }
        worst
    }
}

/// `G_ij(s_k, s_l)` on all node pairs, stored row-major by `(k, l, i, j)`.
#[derive(Clone, Debug)]
pub struct ContourGreens {
    nodes: usize,
    d: usize,
    data: Vec<Complex64>,
}

impl ContourGreens {
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn entry(&self, k: usize, l: usize, i: usize, j: usize) -> Complex64 {
        self.data[((k * self.nodes + l) * self.d + i) * self.d + j]
    }

    pub fn get(&self, k: usize, l: usize) -> CMatrix {
        let off = (k * self.nodes + l) * self.d * self.d;
        CMatrix::from_row_slice(self.d, self.d, &self.data[off..off + self.d * self.d])
    }

    fn set(&mut self, k: usize, l: usize, m: &CMatrix) {
        let d = self.d;
        let off = (k * self.nodes + l) * d * d;
        for i in 0..d {
            for j in 0..d {
                self.data[off + i * d + j] = m[(i, j)];
            }
        }
    }
}

/// Contour-ordered Green's function at every pair of grid nodes:
/// `iG(s, s') = Tr[U(s1,s) a_i U(s,s') a_j^dagger U(s',s0)] / Z` for `s > s'`
/// and `zeta Tr[U(s1,s') a_j^dagger U(s',s) a_i U(s,s0)] / Z` for `s <= s'`.
pub fn contour_greens(prop: &Propagation) -> ContourGreens {
    let nodes = prop.forward[0].len();
    let d = prop.d;
    let zeta = prop.statistics.zeta();
    let plus_factor = c64(0.0, -1.0) / prop.partition;
    let minus_factor = c64(0.0, -zeta) / prop.partition;
    let sector_count = prop.sectors.len();

    // For each earlier node e: G(l, e) for l > e and G(e, l) for l >= e.
    let columns: Vec<(Vec<CMatrix>, Vec<CMatrix>)> = (0..nodes)
        .into_par_iter()
        .map(|e| {
            let mut w: Vec<CMatrix> = prop
                .sectors
                .iter()
                .map(|s| CMatrix::identity(s.dim(), s.dim()))
                .collect();
            let mut later = Vec::with_capacity(nodes - e);
            let mut earlier = Vec::with_capacity(nodes - e);
            for l in e..nodes {
                if l > e {
                    for (n, wn) in w.iter_mut().enumerate() {
                        *wn = &prop.steps[n][l - 1] * &*wn;
                    }
                }
                let mut gp = CMatrix::zeros(d, d);
                let mut gm = CMatrix::zeros(d, d);
                for n in 0..=prop.n_traced {
                    let pmat = &prop.forward[n][e] * &prop.backward[n][l];
                    if l > e && n + 1 < sector_count {
                        let a = &prop.annihilators[n + 1];
                        let x: Vec<CMatrix> = a.iter().map(|ai| &pmat * ai).collect();
                        let y: Vec<CMatrix> = a.iter().map(|aj| &w[n + 1] * aj.adjoint()).collect();
                        for i in 0..d {
                            for j in 0..d {
                                gp[(i, j)] += trace_of_product(&x[i], &y[j]);
                            }
                        }
                    }
                    if n >= 1 {
                        let a = &prop.annihilators[n];
                        let x: Vec<CMatrix> = a.iter().map(|aj| &pmat * aj.adjoint()).collect();
                        let y: Vec<CMatrix> = a.iter().map(|ai| &w[n - 1] * ai).collect();
                        for i in 0..d {
                            for j in 0..d {
                                gm[(i, j)] += trace_of_product(&x[j], &y[i]);
                            }
                        }
                    }
                }
                later.push(gp * plus_factor);
                earlier.push(gm * minus_factor);
            }
            (later, earlier)
        })
        .collect();

    let mut table = ContourGreens {
        nodes,
        d,
        data: vec![Complex64::new(0.0, 0.0); nodes * nodes * d * d],
    };
    for (e, (later, earlier)) in columns.iter().enumerate() {
        for (off, l) in (e..nodes).enumerate() {
            if l > e {
                table.set(l, e, &later[off]);
            }
            table.set(e, l, &earlier[off]);
        }
    }
    table
}

/// Largest residual norms of the equations of motion on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    /// Rows `i >= p` of the left residual.
    pub left_env: f64,
    /// Rows `i < p` of the left residual; these carry `Sigma G` and are
    /// informational.
    pub left_frag: f64,
    /// Columns `j >= p` of the right residual.
    pub right_env: f64,
    pub right_frag: f64,
    /// `max |G(s_{k+1}, s_k) - G(s_k, s_k) + i I|`.
    pub jump: f64,
    pub max_delta_s: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Single-particle matrices `h(s_k)` per node and segment.
fn node_h(ch: &ContourHamiltonian, grid: &ContourGrid) -> Result<Vec<Vec<(usize, CMatrix)>>> {
    (0..grid.node_count())
        .map(|k| {
            grid.segments_at(k)
                .into_iter()
                .map(|seg| Ok((seg, ch.at(seg, grid.z(k))?.h().clone())))
                .collect()
        })
        .collect()
}

/// Finite-difference derivative along the varying index `k` of a function
/// `value(m)`, using only nodes inside `segment` for which `allowed(m)`.
/// Central where possible, otherwise second-order one-sided.
fn stencil_derivative<V, A>(
    grid: &ContourGrid,
    segment: usize,
    k: usize,
    allowed: A,
    value: V,
) -> Option<CMatrix>
where
    V: Fn(usize) -> CMatrix,
    A: Fn(usize) -> bool,
{
    let (first, last) = grid.segment_nodes(segment);
    let ok = |m: isize| -> bool {
        m >= first as isize && m <= last as isize && allowed(m as usize)
    };
    let k = k as isize;
    let h = grid.delta_s(segment);
    let v = |m: isize| value(m as usize);
    if ok(k - 1) && ok(k + 1) {
        return Some((v(k + 1) - v(k - 1)) * c64(0.5 / h, 0.0));
    }
    if ok(k + 1) && ok(k + 2) {
        return Some((v(k) * c64(-3.0, 0.0) + v(k + 1) * c64(4.0, 0.0) - v(k + 2)) * c64(0.5 / h, 0.0));
    }
    if ok(k - 1) && ok(k - 2) {
        return Some((v(k) * c64(3.0, 0.0) - v(k - 1) * c64(4.0, 0.0) + v(k - 2)) * c64(0.5 / h, 0.0));
    }
    None
}

/// Evaluates `R^L = i zdot(s)^{-1} d_s G - h(s) G` and
/// `R^R = -i zdot(s')^{-1} d_{s'} G - G h(s')` away from the diagonal, and the
/// equal-time jump. Stencils never cross a segment corner or the diagonal.
/// The verdict compares the environment rows of `R^L` and columns of `R^R`
/// against `tolerance`.
pub fn residual_check(
    greens: &ContourGreens,
    ch: &ContourHamiltonian,
    grid: &ContourGrid,
    p: usize,
    tolerance: f64,
) -> Result<ResidualReport> {
    let nodes = grid.node_count();
    if greens.nodes() != nodes || greens.d() != ch.d() {
        return Err(Error::Argument("Green's function table does not match the grid".into()));
    }
    if grid.intervals().iter().any(|&k| k < 2) {
        return Err(Error::GridTooCoarse("fewer than three nodes on a segment".into()));
    }
    let d = ch.d();
    let hs = node_h(ch, grid)?;
    let segments = grid.contour().segments();

    struct Acc {
        left_env: f64,
        left_frag: f64,
        right_env: f64,
        right_frag: f64,
        evaluated: usize,
        skipped: usize,
    }

    let rows: Vec<Acc> = (0..nodes)
        .into_par_iter()
        .map(|k| {
            let mut acc = Acc {
                left_env: 0.0,
                left_frag: 0.0,
                right_env: 0.0,
                right_frag: 0.0,
                evaluated: 0,
                skipped: 0,
            };
            for l in 0..nodes {
                if k == l {
                    continue;
                }
                let g = greens.get(k, l);
                // Left: derivative in the first argument at fixed l.
                let left = hs[k].iter().find_map(|(seg, h)| {
                    let allowed = |m: usize| if k > l { m > l } else { m <= l };
                    stencil_derivative(grid, *seg, k, allowed, |m| greens.get(m, l)).map(|dg| {
                        let zinv = c64(0.0, 1.0) / segments[*seg].zdot;
                        dg * zinv - h * &g
                    })
                });
                // Right: derivative in the second argument at fixed k.
                let right = hs[l].iter().find_map(|(seg, h)| {
                    let allowed = |m: usize| if l < k { m < k } else { m >= k };
                    stencil_derivative(grid, *seg, l, allowed, |m| greens.get(k, m)).map(|dg| {
                        let zinv = c64(0.0, -1.0) / segments[*seg].zdot;
                        dg * zinv - &g * h
                    })
                });
                match (left, right) {
                    (Some(rl), Some(rr)) => {
                        acc.evaluated += 1;
                        for i in 0..d {
                            for j in 0..d {
                                let a = rl[(i, j)].norm();
                                if i >= p {
                                    acc.left_env = acc.left_env.max(a);
                                } else {
                                    acc.left_frag = acc.left_frag.max(a);
                                }
                                let b = rr[(i, j)].norm();
                                if j >= p {
                                    acc.right_env = acc.right_env.max(b);
                                } else {
                                    acc.right_frag = acc.right_frag.max(b);
                                }
                            }
                        }
                    }
                    _ => acc.skipped += 1,
                }
            }
            acc
        })
        .collect();

    let mut report = ResidualReport {
        left_env: 0.0,
        left_frag: 0.0,
        right_env: 0.0,
        right_frag: 0.0,
        jump: 0.0,
        max_delta_s: grid.max_delta_s(),
        evaluated: 0,
        skipped: 0,
        tolerance,
        pass: false,
    };
    for acc in rows {
        report.left_env = report.left_env.max(acc.left_env);
        report.left_frag = report.left_frag.max(acc.left_frag);
        report.right_env = report.right_env.max(acc.right_env);
        report.right_frag = report.right_frag.max(acc.right_frag);
        report.evaluated += acc.evaluated;
        report.skipped += acc.skipped;
    }
    for k in 0..nodes - 1 {
        let jump = greens.get(k + 1, k) - greens.get(k, k) + CMatrix::identity(d, d) * c64(0.0, 1.0);
        report.jump = report.jump.max(crate::linalg::max_abs(&jump));
    }
    report.pass = report.evaluated > 0 && report.left_env <= tolerance && report.right_env <= tolerance;
    Ok(report)
}

/// One grid of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub intervals: Vec<usize>,
    pub residual: ResidualReport,
    pub group_violation: f64,
    pub partition_function: Complex64,
}

/// Residual and jump errors over successively refined grids, with the
/// least-squares slopes of `log(error)` against `log(max delta s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub left_order: f64,
    pub right_order: f64,
    pub jump_order: f64,
}

impl ConvergenceStudy {
    pub fn max_group_violation(&self) -> f64 {
        self.rows.iter().fold(0.0, |acc, r| acc.max(r.group_violation))
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fitted_order(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runs propagation, Green's function and residuals for each grid.
pub fn convergence_study(
    contour: &Contour,
    ch: &ContourHamiltonian,
    grids: &[Vec<usize>],
    n_max: Option<usize>,
    tolerance: f64,
) -> Result<ConvergenceStudy> {
    if grids.len() < 2 {
        return Err(Error::Argument("a convergence study needs at least two grids".into()));
    }
    let mut rows = Vec::with_capacity(grids.len());
    for intervals in grids {
        let grid = ContourGrid::new(contour.clone(), intervals)?;
        let prop = propagate(ch, &grid, n_max)?;
        let greens = contour_greens(&prop);
        let residual = residual_check(&greens, ch, &grid, ch.p(), tolerance)?;
        rows.push(ConvergenceRow {
            intervals: intervals.clone(),
            residual,
            group_violation: prop.group_property_violation(),
            partition_function: prop.partition_function(),
        });
    }
    let ds: Vec<f64> = rows.iter().map(|r| r.residual.max_delta_s).collect();
    let pick = |f: fn(&ResidualReport) -> f64| -> Vec<f64> { rows.iter().map(|r| f(&r.residual)).collect() };
    Ok(ConvergenceStudy {
        left_order: fitted_order(&ds, &pick(|r| r.left_env)),
        right_order: fitted_order(&ds, &pick(|r| r.right_env)),
        jump_order: fitted_order(&ds, &pick(|r| r.jump)),
        rows,
    })
}
