//! Classical impurity Gibbs measures `exp(-x^T A x / 2 - U(x))`: second-moment
//! matrices by Gauss-Hermite quadrature or spin enumeration, and the
//! classical self-energy `A - G^{-1}`.

use std::fmt;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::hermite::GaussHermite;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs_real, real_to_complex, HermitianEigen};
use crate::model::real_matrix_from_rows;
use crate::report::{fragment_mask, BlockNorms, SampleRecord, SparsityReport};

/// Quadrature nodes handled by one parallel task; fixed so the reduction
/// order does not depend on the thread count.
const CHUNK: usize = 4096;

pub type FragmentPotential = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum GibbsInteraction {
    None,
    /// `U(x) = 1/8 sum_ij v_ij x_i^2 x_j^2` over the leading `m x m` block.
    Quartic(DMatrix<f64>),
    /// `U(x) = U1(x_0, .., x_{p-1})`.
    Callable(Arc<FragmentPotential>),
    /// Fragment coordinates are spins `+-1` weighted by
    /// `exp(-sigma^T J sigma / 2)`.
    Spin(DMatrix<f64>),
}

impl fmt::Debug for GibbsInteraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GibbsInteraction::None => f.write_str("None"),
            GibbsInteraction::Quartic(v) => f.debug_tuple("Quartic").field(v).finish(),
            GibbsInteraction::Callable(_) => f.write_str("Callable(..)"),
            GibbsInteraction::Spin(j) => f.debug_tuple("Spin").field(j).finish(),
        }
    }
}

fn symmetric(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Argument(format!("{what} must be square, got {:?}", m.shape())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument(format!("{what} has non-finite entries")));
    }
    let violation = max_abs_real(&(m - m.transpose()));
    if violation > 1e-12 {
        return Err(Error::Argument(format!(
            "{what} is not symmetric (violation {violation:.3e})"
        )));
    }
    Ok(if violation == 0.0 {
        m.clone()
    } else {
        (m + m.transpose()) * 0.5
    })
}

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Precision matrix `A`, fragment size `p` and fragment interaction.
#[derive(Clone, Debug)]
pub struct GibbsModel {
    a: DMatrix<f64>,
    p: usize,
    interaction: GibbsInteraction,
}

impl GibbsModel {
    /// Requires `A` symmetric with a positive definite environment block.
    pub fn new(a: DMatrix<f64>, p: usize, interaction: GibbsInteraction) -> Result<Self> {
        let a = symmetric(&a, "A")?;
        let d = a.nrows();
        if d == 0 || p > d {
            return Err(Error::Argument(format!(
                "need 0 <= p <= d and d >= 1 (got d={d}, p={p})"
            )));
        }
        if p < d {
            cholesky(&a.view((p, p), (d - p, d - p)).into_owned(), "environment block A22")?;
        }
        let interaction = match interaction {
            GibbsInteraction::Quartic(v) => {
                let v = symmetric(&v, "quartic coefficients v")?;
                if v.nrows() > d {
                    return Err(Error::Argument(format!(
                        "quartic coefficients are {0}x{0} but d = {d}",
                        v.nrows()
                    )));
                }
                if v.iter().any(|&x| x < 0.0) {
                    return Err(Error::Argument("quartic coefficients must be nonnegative".into()));
                }
                GibbsInteraction::Quartic(v)
            }
            GibbsInteraction::Spin(j) => {
                let j = symmetric(&j, "spin coupling J")?;
                if j.nrows() != p {
                    return Err(Error::Argument(format!(
                        "spin coupling must be {p}x{p}, got {:?}",
                        j.shape()
                    )));
                }
                if p > 24 {
                    return Err(Error::Argument("spin enumeration supports p <= 24".into()));
                }
                GibbsInteraction::Spin(j)
            }
            other => other,
        };
        Ok(GibbsModel { a, p, interaction })
    }

    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn interaction(&self) -> &GibbsInteraction {
        &self.interaction
    }

    /// Whether `U` depends on fragment coordinates only.
    pub fn is_impurity(&self) -> bool {
        match &self.interaction {
            GibbsInteraction::Quartic(v) => {
                let m = v.nrows();
                (0..m).all(|i| (0..m).all(|j| (i < self.p && j < self.p) || v[(i, j)] == 0.0))
            }
            _ => true,
        }
    }

    /// `U(x)` on the full coordinate vector; spins have no density.
    fn potential(&self, x: &[f64]) -> f64 {
        match &self.interaction {
            GibbsInteraction::None | GibbsInteraction::Spin(_) => 0.0,
            GibbsInteraction::Quartic(v) => quartic(v, x),
            GibbsInteraction::Callable(f) => f(&x[..self.p]),
        }
    }

    fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (d, p) = (self.d(), self.p);
        (
            self.a.view((0, 0), (p, p)).into_owned(),
            self.a.view((p, 0), (d - p, p)).into_owned(),
            self.a.view((p, p), (d - p, d - p)).into_owned(),
        )
    }
}

fn quartic(v: &DMatrix<f64>, x: &[f64]) -> f64 {
    let m = v.nrows();
    let mut acc = 0.0;
    for i in 0..m {
        let xi2 = x[i] * x[i];
        for j in 0..m {
            acc += v[(i, j)] * xi2 * x[j] * x[j];
        }
    }
    acc / 8.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GibbsPath {
    /// Quadrature over fragment coordinates after integrating out the
    /// Gaussian environment.
    Factorized,
    /// Quadrature over all coordinates; needs `A` positive definite.
    Direct,
    /// Exact enumeration of fragment spins.
    Spin,
}

impl std::str::FromStr for GibbsPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factorized" => Ok(GibbsPath::Factorized),
            "direct" => Ok(GibbsPath::Direct),
            "spin" => Ok(GibbsPath::Spin),
            other => Err(Error::Argument(format!("unknown Gibbs path {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureParams {
    /// Accept once `max |G_new - G_old| <= tol * max |G_new|`.
    pub tol: f64,
    pub min_order: usize,
    pub max_order: usize,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        QuadratureParams {
            tol: 1e-9,
            min_order: 8,
            max_order: 256,
        }
    }
}

/// Unnormalized fragment moments `int w`, `int x1 w`, `int x1 x1^T w`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    pub m0: f64,
    pub m1: DVector<f64>,
    pub m2: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct GibbsMoments {
    pub g: DMatrix<f64>,
    /// Gauss-Hermite order per coordinate (0 when no quadrature ran).
    pub order: usize,
    pub moments: Option<MomentSet>,
}

/// Tensor Gauss-Hermite sums of `exp(log_f(x))`, `x exp(..)`, `x x^T exp(..)`
/// with `x = transform * t` and weight `exp(-t^T t)`. Includes `|det transform|`.
fn tensor_moments<F>(dim: usize, order: usize, transform: &DMatrix<f64>, log_f: F) -> MomentSet
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let rule = GaussHermite::new(NonZeroUsize::new(order).expect("positive order"));
    let pairs = rule.as_node_weight_pairs();
    let total = order.pow(dim as u32);
    let chunks = total.div_ceil(CHUNK);
    let partial: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m0 = 0.0;
            let mut m1 = vec![0.0; dim];
            let mut m2 = vec![0.0; dim * dim];
            let mut t = vec![0.0; dim];
            let mut x = vec![0.0; dim];
            for flat in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let mut rest = flat;
                let mut w = 1.0;
                for tk in t.iter_mut() {
                    let (node, weight) = pairs[rest % order];
                    rest /= order;
                    *tk = node;
                    w *= weight;
                }
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = (0..dim).map(|b| transform[(a, b)] * t[b]).sum();
                }
                let f = w * log_f(&x).exp();
                if f == 0.0 {
                    continue;
                }
                m0 += f;
                for a in 0..dim {
                    m1[a] += f * x[a];
                    for b in 0..dim {
                        m2[a * dim + b] += f * x[a] * x[b];
                    }
                }
            }
            (m0, m1, m2)
        })
        .collect();
    let jac = transform.determinant().abs();
    let mut m0 = 0.0;
    let mut m1 = DVector::zeros(dim);
    let mut m2 = DMatrix::zeros(dim, dim);
    for (a0, a1, a2) in partial {
        m0 += a0;
        for a in 0..dim {
            m1[a] += a1[a];
            for b in 0..dim {
                m2[(a, b)] += a2[a * dim + b];
            }
        }
    }
    MomentSet {
        m0: m0 * jac,
        m1: m1 * jac,
        m2: m2 * jac,
    }
}

/// Runs `attempt(order)` on doubling orders until successive results agree.
fn adaptive<F>(params: &QuadratureParams, mut attempt: F) -> Result<GibbsMoments>
where
    F: FnMut(usize) -> Result<(DMatrix<f64>, MomentSet)>,
{
    if !(params.tol > 0.0) || params.min_order == 0 || params.max_order < params.min_order {
        return Err(Error::Argument(format!("invalid quadrature parameters {params:?}")));
    }
    let mut order = params.min_order;
    let (mut g_prev, _) = attempt(order)?;
    let mut last_change = f64::INFINITY;
    while order * 2 <= params.max_order {
        order *= 2;
        let (g, moments) = attempt(order)?;
        last_change = max_abs_real(&(&g - &g_prev));
        if last_change <= params.tol * max_abs_real(&g) {
            return Ok(GibbsMoments {
                g,
                order,
                moments: Some(moments),
            });
        }
        g_prev = g;
    }
    Err(Error::Quadrature(format!(
        "second moments still changed by {last_change:.3e} at order {order}"
    )))
}

/// Assembles `G` from the fragment block `G11` and the Gaussian environment.
fn assemble_from_fragment(g11: &DMatrix<f64>, a21: &DMatrix<f64>, a22: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = g11.nrows();
    let e = a22.nrows();
    let chol = cholesky(a22, "environment block A22")?;
    let a22_inv = chol.inverse();
    let b = chol.solve(a21); // A22^{-1} A21
    let g21 = -(&b * g11);
    let g22 = &a22_inv + &b * g11 * b.transpose();
    let mut g = DMatrix::zeros(p + e, p + e);
    g.view_mut((0, 0), (p, p)).copy_from(g11);
    g.view_mut((p, 0), (e, p)).copy_from(&g21);
    g.view_mut((0, p), (p, e)).copy_from(&g21.transpose());
    g.view_mut((p, p), (e, e)).copy_from(&g22);
    Ok((&g + g.transpose()) * 0.5)
}

/// Second-moment matrix `G = E[x x^T]` of the Gibbs measure.
pub fn gibbs_moments(model: &GibbsModel, path: GibbsPath, params: &QuadratureParams) -> Result<GibbsMoments> {
    let (d, p) = (model.d(), model.p());
    let is_spin = matches!(model.interaction(), GibbsInteraction::Spin(_));
    match path {
        GibbsPath::Spin => {
            let GibbsInteraction::Spin(j) = model.interaction() else {
                return Err(Error::Argument("the spin path needs a spin interaction".into()));
            };
            spin_moments(model, j)
        }
        _ if is_spin => Err(Error::Argument(
            "spin interactions are evaluated on the spin path".into(),
        )),
        GibbsPath::Direct => {
            let chol = cholesky(model.a(), "A (the direct path needs A positive definite)")?;
            let transform = chol
                .l()
                .transpose()
                .try_inverse()
                .ok_or_else(|| Error::NotPositiveDefinite("A".into()))?
                * std::f64::consts::SQRT_2;
            adaptive(params, |order| {
                let m = tensor_moments(d, order, &transform, |x| -model.potential(x));
                if !(m.m0 > 0.0) || !m.m0.is_finite() {
                    return Err(Error::Quadrature(format!("normalization {} at order {order}", m.m0)));
                }
                Ok((&m.m2 / m.m0, m))
            })
        }
        GibbsPath::Factorized => {
            if !model.is_impurity() {
                return Err(Error::Structural(
                    "the factorized path needs an interaction on fragment coordinates only".into(),
                ));
            }
            let (a11, a21, a22) = model.blocks();
            if p == 0 {
                let g = cholesky(&a22, "A")?.inverse();
                return Ok(GibbsMoments {
                    g,
                    order: 0,
                    moments: None,
                });
            }
            let b = cholesky(&a22, "environment block A22")?.solve(&a21);
            let schur = &a11 - a21.transpose() * &b;
            let schur = (&schur + schur.transpose()) * 0.5;
            // Nodes are placed by a reference precision `S + c I`; the
            // difference is carried by the integrand. The shift makes the
            // reference positive definite and narrows it to the width set
            // by a quartic term, where tensor Gauss-Hermite converges slowly
            // otherwise.
            let lowest = HermitianEigen::new(&real_to_complex(&schur)).values[0];
            let mut c = if lowest > 1e-8 { 0.0 } else { 1.0 - lowest };
            if let GibbsInteraction::Quartic(v) = model.interaction() {
                c += 2.0 * (0..v.nrows().min(p)).map(|i| v[(i, i)]).fold(0.0, f64::max).sqrt();
            }
            let reference = &schur + DMatrix::identity(p, p) * c;
            let shift = &reference - &schur;
            let chol = cholesky(&reference, "reference precision")?;
            let transform = chol
                .l()
                .transpose()
                .try_inverse()
                .ok_or_else(|| Error::NotPositiveDefinite("reference precision".into()))?
                * std::f64::consts::SQRT_2;
            adaptive(params, |order| {
                let m = tensor_moments(p, order, &transform, |x1| {
                    let correction = 0.5 * (x1.iter().enumerate())
                        .map(|(a, xa)| (0..p).map(|b| xa * shift[(a, b)] * x1[b]).sum::<f64>())
                        .sum::<f64>();
                    correction - fragment_potential(model, x1)
                });
                if !(m.m0 > 0.0) || !m.m0.is_finite() {
                    return Err(Error::Quadrature(format!("normalization {} at order {order}", m.m0)));
                }
                let g11 = &m.m2 / m.m0;
                Ok((assemble_from_fragment(&g11, &a21, &a22)?, m))
            })
        }
    }
}

fn fragment_potential(model: &GibbsModel, x1: &[f64]) -> f64 {
    match model.interaction() {
        GibbsInteraction::None | GibbsInteraction::Spin(_) => 0.0,
        GibbsInteraction::Callable(f) => f(x1),
        GibbsInteraction::Quartic(v) => {
            let m = v.nrows().min(x1.len());
            quartic(&v.view((0, 0), (m, m)).into_owned(), x1)
        }
    }
}

/// Exact sum over `sigma in {-1, 1}^p` with weights
/// `exp(-sigma^T (J + A11) sigma / 2 + sigma^T A12 A22^{-1} A21 sigma / 2)`.
fn spin_moments(model: &GibbsModel, j: &DMatrix<f64>) -> Result<GibbsMoments> {
    let p = model.p();
    let (a11, a21, a22) = model.blocks();
    let b = if a22.nrows() > 0 {
        cholesky(&a22, "environment block A22")?.solve(&a21)
    } else {
        DMatrix::zeros(0, p)
    };
    let quad = j + &a11 - a21.transpose() * &b;
    let configs: Vec<(f64, DVector<f64>)> = (0..1usize << p)
        .map(|bits| {
            let sigma = DVector::from_iterator(p, (0..p).map(|k| if bits >> k & 1 == 1 { 1.0 } else { -1.0 }));
            let log_w = -0.5 * (sigma.transpose() * &quad * &sigma)[(0, 0)];
            (log_w, sigma)
        })
        .collect();
    let max = configs.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let mut m0 = 0.0;
    let mut m1 = DVector::zeros(p);
    let mut m2 = DMatrix::zeros(p, p);
    for (log_w, sigma) in &configs {
        let w = (log_w - max).exp();
        m0 += w;
        m1 += sigma * w;
        m2 += sigma * sigma.transpose() * w;
    }
    let g11 = &m2 / m0;
    let g = assemble_from_fragment(&g11, &a21, &a22)?;
    Ok(GibbsMoments {
        g,
        order: 0,
        moments: Some(MomentSet { m0, m1, m2 }),
    })
}

/// `Sigma = A - G^{-1}` with a single-sample sparsity report on the blocks
/// `Sigma12`, `Sigma21`, `Sigma22`.
pub fn classical_self_energy(
    a: &DMatrix<f64>,
    g: &DMatrix<f64>,
    p: usize,
    tolerance: f64,
) -> Result<(DMatrix<f64>, SparsityReport)> {
    if a.shape() != g.shape() || !a.is_square() || p > a.nrows() {
        return Err(Error::Argument("A and G must be square of equal size with p <= d".into()));
    }
    let sym = (g + g.transpose()) * 0.5;
    let chol = cholesky(&sym, "second-moment matrix G")?;
    let sigma = a - chol.inverse();
    let norms = BlockNorms::of(&real_to_complex(&sigma), &fragment_mask(a.nrows(), p));
    let report = SparsityReport::from_records(
        vec![SampleRecord {
            label: "gibbs".into(),
            outcome: Ok(norms),
        }],
        tolerance,
    )?;
    Ok((sigma, report))
}

/// Interaction section of a Gibbs model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum InteractionRecord {
    /// Row-major `m x m` coefficients.
    Quartic { v: Vec<f64> },
    Spin {
        #[serde(rename = "J")]
        j: Vec<f64>,
    },
}

/// On-disk Gibbs model: row-major `A`, fragment size and interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsModelFile {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<InteractionRecord>,
}

fn square_side(len: usize, what: &str) -> Result<usize> {
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len || n == 0 {
        return Err(Error::ModelFile(format!("{what} has {len} entries, not a square matrix")));
    }
    Ok(n)
}

impl GibbsModelFile {
    pub fn into_model(&self) -> Result<GibbsModel> {
        let d = square_side(self.a.len(), "A")?;
        let a = real_matrix_from_rows(d, &self.a, "A")?;
        let interaction = match &self.interaction {
            None => GibbsInteraction::None,
            Some(InteractionRecord::Quartic { v }) => {
                let m = square_side(v.len(), "v")?;
                GibbsInteraction::Quartic(real_matrix_from_rows(m, v, "v")?)
            }
            Some(InteractionRecord::Spin { j }) => {
                let m = square_side(j.len(), "J")?;
                GibbsInteraction::Spin(real_matrix_from_rows(m, j, "J")?)
            }
        };
        GibbsModel::new(a, self.p, interaction)
    }

    /// Fails for callable interactions, which have no file form.
    pub fn from_model(model: &GibbsModel) -> Result<Self> {
        let rows = |m: &DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<f64>>();
        let interaction = match model.interaction() {
            GibbsInteraction::None => None,
            GibbsInteraction::Quartic(v) => Some(InteractionRecord::Quartic { v: rows(v) }),
            GibbsInteraction::Spin(j) => Some(InteractionRecord::Spin { j: rows(j) }),
            GibbsInteraction::Callable(_) => {
                return Err(Error::Unsupported("callable interactions cannot be written to a file".into()))
            }
        };
        Ok(GibbsModelFile {
            a: rows(model.a()),
            p: model.p(),
            interaction,
        })
    }
}

fn random_precision(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

/// Seeded quartic model on the fragment `0..p`. With `positive_definite`
/// false the fragment diagonal of `A` is lowered until `A` is indefinite
/// while `A22` stays positive definite.
pub fn random_quartic(d: usize, p: usize, seed: u64, positive_definite: bool) -> Result<GibbsModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = random_precision(d, &mut rng);
    let v = DMatrix::from_fn(p, p, |_, _| rng.random_range(0.2..1.0));
    let v = (&v + v.transpose()) * 0.5;
    if !positive_definite && p > 0 {
        for i in 0..p {
            a[(i, i)] -= a[(i, i)] + 1.0;
        }
    }
    GibbsModel::new(a, p, GibbsInteraction::Quartic(v))
}

/// Seeded spin model; `A11` is arbitrary since spins have fixed length.
pub fn random_spin(d: usize, p: usize, seed: u64) -> Result<GibbsModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = random_precision(d, &mut rng);
    for i in 0..p {
        a[(i, i)] = rng.random_range(-1.0..1.0);
    }
    let j = DMatrix::from_fn(p, p, |_, _| rng.random_range(-0.5..0.5));
    let j = (&j + j.transpose()) * 0.5;
    GibbsModel::new(a, p, GibbsInteraction::Spin(j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a2() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0])
    }

    #[test]
    fn gaussian_recovers_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.2, 0.3, 1.5, 0.4, -0.2, 0.4, 1.8]);
        let inv = a.clone().try_inverse().unwrap();
        let model = GibbsModel::new(a, 1, GibbsInteraction::None).unwrap();
        for path in [GibbsPath::Factorized, GibbsPath::Direct] {
            let r = gibbs_moments(&model, path, &QuadratureParams::default()).unwrap();
            assert!(max_abs_real(&(r.g - &inv)) < 1e-12, "{path:?}");
        }
    }

    #[test]
    fn quartic_paths_agree() {
        let v = DMatrix::from_element(1, 1, 1.0);
        let model = GibbsModel::new(a2(), 1, GibbsInteraction::Quartic(v)).unwrap();
        let params = QuadratureParams::default();
        let f = gibbs_moments(&model, GibbsPath::Factorized, &params).unwrap();
        let d = gibbs_moments(&model, GibbsPath::Direct, &params).unwrap();
        assert!(max_abs_real(&(&f.g - &d.g)) < 1e-8);
        let (sigma, report) = classical_self_energy(model.a(), &d.g, 1, 1e-7).unwrap();
        assert!(report.pass, "{sigma}");
        assert!(sigma[(0, 0)].abs() > 1e-3);
    }

    #[test]
    fn free_spin_has_unit_moment() {
        let model = GibbsModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 3.0]),
            1,
            GibbsInteraction::Spin(DMatrix::zeros(1, 1)),
        )
        .unwrap();
        let r = gibbs_moments(&model, GibbsPath::Spin, &QuadratureParams::default()).unwrap();
        assert_eq!(r.g[(0, 0)], 1.0);
        assert!(gibbs_moments(&model, GibbsPath::Direct, &QuadratureParams::default()).is_err());
    }

    #[test]
    fn non_positive_schur_complement() {
        // A11 - A12 A22^{-1} A21 = -0.5 + 0.0 < 0; the quartic term keeps the
        // measure normalizable.
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 1.0]);
        let model = GibbsModel::new(a, 1, GibbsInteraction::Quartic(DMatrix::from_element(1, 1, 4.0))).unwrap();
        let r = gibbs_moments(&model, GibbsPath::Factorized, &QuadratureParams::default()).unwrap();
        // 1-d oracle by fine trapezoid sum of exp(x^2/4 - x^4/2).
        let (mut m0, mut m2) = (0.0, 0.0);
        let h = 1e-3;
        for k in -8000..=8000 {
            let x = k as f64 * h;
            let w = (0.25 * x * x - 0.5 * x.powi(4)).exp();
            m0 += w;
            m2 += w * x * x;
        }
        assert!((r.g[(0, 0)] - m2 / m0).abs() < 1e-9);
        assert!((r.g[(1, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn file_round_trip() {
        for model in [random_quartic(4, 2, 3, false).unwrap(), random_spin(3, 2, 1).unwrap()] {
            let file = GibbsModelFile::from_model(&model).unwrap();
            let text = serde_json::to_string(&file).unwrap();
            let back: GibbsModelFile = serde_json::from_str(&text).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.into_model().unwrap().a(), model.a());
        }
        let bad = r#"{"A": [1.0], "p": 0, "extra": 1}"#;
        assert!(serde_json::from_str::<GibbsModelFile>(bad).is_err());
    }

    #[test]
    fn invalid_inputs() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            GibbsModel::new(bad, 1, GibbsInteraction::None),
            Err(Error::NotPositiveDefinite(_))
        ));
        let v = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let model = GibbsModel::new(a2(), 1, GibbsInteraction::Quartic(v)).unwrap();
        assert!(!model.is_impurity());
        assert!(matches!(
            gibbs_moments(&model, GibbsPath::Factorized, &QuadratureParams::default()),
            Err(Error::Structural(_))
        ));
    }
}
