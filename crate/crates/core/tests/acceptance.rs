//! Acceptance suite: one line per criterion with its measured quantities,
//! wall time and verdict. Exits nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selab::anomalous::AnomalousGreens;
use selab::contour::{convergence_study, kadanoff_baym_equilibrium, ConvergenceStudy};
use selab::equilibrium::{
    default_matsubara_indices, matsubara_points, sparsity_report, FiniteTemperatureGreens, GreensFunction,
    ZeroTemperatureGreens,
};
use selab::fock::{ladder_operator, FockSector, FullFockSpace, LadderKind};
use selab::gibbs::{
    classical_self_energy, gibbs_moments, random_quartic, random_spin, GibbsInteraction, GibbsModel, GibbsPath,
    QuadratureParams,
};
use selab::linalg::{c64, checked_inverse, max_abs, max_abs_real, CMatrix, HermitianEigen};
use selab::model::{bose_impurity, random_anomalous, random_hermitian, random_impurity, siam, BoseImpurityParams};
use selab::report::{nambu_fragment_mask, sparsity_report_with, SparsityReport, MIN_IMAG};
use selab::{AnomalousModel, Error, ImpurityModel, Statistics};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.2e}")
}

/// Ten points on each of `Im z = +-im`.
fn samples(im: f64) -> Vec<Complex64> {
    common::off_axis_samples(20, im)
}

fn seeded_h(d: usize, seed: u64) -> CMatrix {
    random_hermitian(d, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn shift_to_min(h: &CMatrix, min: f64) -> CMatrix {
    let lowest = HermitianEigen::new(h).values[0];
    h + CMatrix::identity(h.nrows(), h.ncols()) * c64(min - lowest, 0.0)
}

/// Model plus the particle number of its zero-temperature reference state.
fn impurity_suite() -> Vec<(String, ImpurityModel, usize)> {
    let mut models = vec![("siam".to_string(), siam(2.0, -1.0, 0.0, 0.5).unwrap(), 2)];
    for seed in 0..10u64 {
        let d = 3 + (seed % 4) as usize;
        let p = 1 + (seed % 2) as usize;
        let m = random_impurity(d, p, seed, Statistics::Fermion).unwrap();
        models.push((format!("fermion(d={d},p={p},seed={seed})"), m, d / 2));
    }
    for seed in 0..5u64 {
        let d = 2 + (seed % 2) as usize;
        let n = 2 + (seed % 3) as usize;
        let m = random_impurity(d, 1, 100 + seed, Statistics::Boson).unwrap();
        models.push((format!("boson(d={d},N={n},seed={})", 100 + seed), m, n));
    }
    models
}

fn require_clean(report: &SparsityReport, name: &str) -> Result<(), String> {
    if let Some((label, e)) = report.errors().next() {
        return Err(format!("{name}: sample {label} failed ({}: {})", e.class, e.message));
    }
    ensure(report.pass, || format!("{name}: env norm {} above {}", fmt(report.max_env()), fmt(report.tolerance)))
}

// ---------------------------------------------------------------------------

fn ccr_and_commutators() -> Outcome {
    let mut ccr = 0.0f64;
    let mut count = 0usize;
    let cases = (1..=8).map(|d| (Statistics::Fermion, d, d)).chain((1..=4).map(|d| (Statistics::Boson, d, 6)));
    for (stats, d, n_top) in cases {
        let sectors: Vec<FockSector> = (0..=n_top + 1)
            .map_while(|n| FockSector::new(d, n, stats).ok())
            .collect();
        let lad = |i: usize, kind: LadderKind, n: usize| -> Option<CMatrix> {
            sectors.get(n).and_then(|s| ladder_operator(i, kind, s).ok()).map(|o| o.matrix)
        };
        for n in 0..=n_top {
            let dim = sectors[n].dim();
            for i in 0..d {
                for j in 0..d {
                    let mut m = CMatrix::zeros(dim, dim);
                    if let (Some(up), Some(down)) = (lad(j, LadderKind::Create, n), lad(i, LadderKind::Annihilate, n + 1)) {
                        m += down * up;
                    }
                    if n > 0 {
                        if let (Some(down), Some(up)) = (lad(i, LadderKind::Annihilate, n), lad(j, LadderKind::Create, n - 1)) {
                            m -= (up * down) * c64(stats.zeta(), 0.0);
                        }
                    }
                    if i == j {
                        m -= CMatrix::identity(dim, dim);
                    }
                    ccr = ccr.max(max_abs(&m));
                    if n >= 2 {
                        let (ai, aj) = (lad(i, LadderKind::Annihilate, n - 1).unwrap(), lad(j, LadderKind::Annihilate, n - 1).unwrap());
                        let (bi, bj) = (lad(i, LadderKind::Annihilate, n).unwrap(), lad(j, LadderKind::Annihilate, n).unwrap());
                        ccr = ccr.max(max_abs(&(ai * bj - (aj * bi) * c64(stats.zeta(), 0.0))));
                    }
                    count += 1;
                }
            }
        }
    }
    ensure(ccr <= 1e-14, || format!("CCR violation {}", fmt(ccr)))?;

    // [a^dagger h a, a_j^dagger] = sum_k h_kj a_k^dagger between N and N+1.
    let mut quadratic = 0.0f64;
    let cases = (1..=6).map(|d| (Statistics::Fermion, d, d - 1)).chain((1..=4).map(|d| (Statistics::Boson, d, 5)));
    for (stats, d, n_top) in cases {
        let h = seeded_h(d, 31 + d as u64);
        let model = ImpurityModel::non_interacting(stats, h.clone()).unwrap();
        for n in 0..=n_top {
            let s = FockSector::new(d, n, stats).unwrap();
            let s_up = FockSector::new(d, n + 1, stats).unwrap();
            let (h_n, h_up) = (model.sector_matrix(&s).unwrap(), model.sector_matrix(&s_up).unwrap());
            let creators: Vec<CMatrix> = (0..d).map(|k| ladder_operator(k, LadderKind::Create, &s).unwrap().matrix).collect();
            for j in 0..d {
                let mut diff = &h_up * &creators[j] - &creators[j] * &h_n;
                for k in 0..d {
                    diff -= &creators[k] * h[(k, j)];
                }
                quadratic = quadratic.max(max_abs(&diff));
            }
        }
    }
    ensure(quadratic <= 1e-13, || format!("quadratic commutator violation {}", fmt(quadratic)))?;

    // Pairing term H_A = 1/2 sum D_kl a_k^+ a_l^+: [H_A, a_j^+] = 0 and
    // [H_A, a_j] = sum_k D_kj a_k^+.
    let mut pairing = 0.0f64;
    for d in 2..=6 {
        let mut rng = ChaCha8Rng::seed_from_u64(330 + d as u64);
        let mut delta = CMatrix::zeros(d, d);
        for k in 0..d {
            for l in k + 1..d {
                let x = c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                delta[(k, l)] = x;
                delta[(l, k)] = -x;
            }
        }
        let space = FullFockSpace::fermionic(d).unwrap();
        let a: Vec<CMatrix> = (0..d).map(|i| space.annihilator(i)).collect();
        let ad: Vec<CMatrix> = a.iter().map(|m| m.adjoint()).collect();
        let mut ha = CMatrix::zeros(space.dim(), space.dim());
        for k in 0..d {
            for l in 0..d {
                ha += &ad[k] * &ad[l] * (delta[(k, l)] * 0.5);
            }
        }
        for j in 0..d {
            pairing = pairing.max(max_abs(&(&ha * &ad[j] - &ad[j] * &ha)));
            let mut diff = &ha * &a[j] - &a[j] * &ha;
            for k in 0..d {
                diff -= &ad[k] * delta[(k, j)];
            }
            pairing = pairing.max(max_abs(&diff));
        }
    }
    ensure(pairing <= 1e-13, || format!("pairing commutator violation {}", fmt(pairing)))?;
    Ok(format!(
        "ccr={} over {count} (N,i,j) cases, quadratic={}, pairing={}",
        fmt(ccr),
        fmt(quadratic),
        fmt(pairing)
    ))
}

fn nambu_oracle(h: &CMatrix, delta: &CMatrix, z: Complex64) -> CMatrix {
    let d = h.nrows();
    let mut m = CMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = h[(i, j)];
            m[(i, d + j)] = delta[(i, j)];
            m[(d + i, j)] = -delta[(i, j)].conj();
            m[(d + i, d + j)] = -h[(i, j)].conj();
        }
    }
    (CMatrix::identity(2 * d, 2 * d) * z - m).try_inverse().unwrap()
}

fn contour_orders(model: &ImpurityModel, n_max: Option<usize>) -> Result<ConvergenceStudy, Error> {
    let (contour, ch) = kadanoff_baym_equilibrium(0.0, 2.0, 1.0, model, 0.0, None)?;
    convergence_study(&contour, &ch, &[vec![32], vec![64], vec![128]], n_max, 1e-10)
}

fn non_interacting_recovery() -> Outcome {
    let zs = samples(0.5);
    let mut zero_t = 0.0f64;
    let mut finite_t = 0.0f64;
    for seed in 0..10u64 {
        let d = 2 + (seed % 5) as usize;
        let h = seeded_h(d, 200 + seed);
        let mut cases = vec![(ImpurityModel::non_interacting(Statistics::Fermion, h.clone()).unwrap(), d / 2)];
        // Bosonic traces need all sectors up to the weight cutoff, so keep
        // those cases small and well gapped.
        if d <= 4 {
            cases.push((ImpurityModel::non_interacting(Statistics::Boson, shift_to_min(&h, 4.0)).unwrap(), 2));
        }
        for (model, n) in cases {
            let zt = ZeroTemperatureGreens::new(&model, n).map_err(|e| e.to_string())?;
            let ft = FiniteTemperatureGreens::new(&model, 1.0, 0.0, None).map_err(|e| e.to_string())?;
            for &z in &zs {
                let resolvent = checked_inverse(&(CMatrix::identity(d, d) * z - model.h())).unwrap();
                zero_t = zero_t.max(max_abs(&(zt.evaluate(z).unwrap() - &resolvent)));
                finite_t = finite_t.max(max_abs(&(ft.evaluate(z).unwrap() - &resolvent)));
            }
        }
    }
    ensure(zero_t <= 1e-11, || format!("zero-T deviation {}", fmt(zero_t)))?;
    ensure(finite_t <= 1e-11, || format!("finite-T deviation {}", fmt(finite_t)))?;

    let mut nambu = 0.0f64;
    for seed in 0..5u64 {
        let d = 2 + (seed % 4) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let h = random_hermitian(d, &mut rng);
        let mut delta = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in i + 1..d {
                let x = c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                delta[(i, j)] = x;
                delta[(j, i)] = -x;
            }
        }
        let model = AnomalousModel::new(h.clone(), delta.clone(), vec![], 0).map_err(|e| e.to_string())?;
        let g = AnomalousGreens::new(&model).map_err(|e| e.to_string())?;
        for &z in &zs {
            nambu = nambu.max(max_abs(&(g.evaluate(z).unwrap() - nambu_oracle(&h, &delta, z))));
        }
    }
    ensure(nambu <= 1e-11, || format!("Nambu deviation {}", fmt(nambu)))?;

    let free = ImpurityModel::non_interacting(Statistics::Fermion, seeded_h(3, 77)).unwrap().with_p(0).unwrap();
    let study = contour_orders(&free, None).map_err(|e| e.to_string())?;
    let order = study.left_order.min(study.right_order);
    ensure(order >= 1.8, || format!("p=0 contour residual order {order:.3}"))?;
    Ok(format!(
        "zeroT={}, finiteT={}, nambu={}, contour order={order:.3}",
        fmt(zero_t),
        fmt(finite_t),
        fmt(nambu)
    ))
}

fn zero_temperature_sparsity() -> Outcome {
    let zs = samples(0.3);
    let mut worst_env = 0.0f64;
    let mut weakest_frag = f64::INFINITY;
    for (name, model, n) in impurity_suite() {
        let g = ZeroTemperatureGreens::new(&model, n).map_err(|e| format!("{name}: {e}"))?;
        let report = sparsity_report(&g, model.p(), &zs, 1e-9, MIN_IMAG).map_err(|e| format!("{name}: {e}"))?;
        require_clean(&report, &name)?;
        worst_env = worst_env.max(report.max_env());
        ensure(report.min_fragment() >= 1e-3, || format!("{name}: fragment block {}", fmt(report.min_fragment())))?;
        weakest_frag = weakest_frag.min(report.min_fragment());
    }
    Ok(format!("16 models x 20 samples, max env={}, min frag={}", fmt(worst_env), fmt(weakest_frag)))
}

fn finite_temperature_sparsity() -> Outcome {
    let mut worst_env = 0.0f64;
    let mut doubling = 0.0f64;
    let mut evaluated = 0usize;
    for (name, model, _) in impurity_suite() {
        // Boson single-particle energies are at least 0.5, so both values are
        // admissible; the default N_max cap of 12 only resolves the tail to
        // 1e-8 for the deeper one.
        let mus: &[f64] = match model.statistics() {
            Statistics::Fermion => &[0.0],
            Statistics::Boson => &[0.0, -2.5],
        };
        for (beta, &mu) in [1.0, 4.0].into_iter().flat_map(|b| mus.iter().map(move |m| (b, m))) {
            let mut zs = matsubara_points(beta, model.statistics(), mu, &default_matsubara_indices(model.statistics(), 8)).unwrap();
            zs.extend(common::off_axis_samples(12, 0.3));
            let g = FiniteTemperatureGreens::new(&model, beta, mu, None).map_err(|e| format!("{name}: {e}"))?;
            let report = sparsity_report(&g, model.p(), &zs, 1e-9, MIN_IMAG).map_err(|e| format!("{name}: {e}"))?;
            require_clean(&report, &name)?;
            worst_env = worst_env.max(report.max_env());
            evaluated += zs.len();
            if model.statistics() == Statistics::Boson && mu < 0.0 {
                let doubled = FiniteTemperatureGreens::new(&model, beta, mu, Some(2 * g.n_max())).map_err(|e| e.to_string())?;
                for &z in &zs {
                    let diff = max_abs(&(g.self_energy(z).unwrap() - doubled.self_energy(z).unwrap()));
                    doubling = doubling.max(diff);
                }
            }
        }
    }
    ensure(doubling <= 1e-8, || format!("N_max doubling changed Sigma by {}", fmt(doubling)))?;
    Ok(format!("{evaluated} samples incl. Matsubara, max env={}, N_max doubling={}", fmt(worst_env), fmt(doubling)))
}

fn anomalous_sparsity() -> Outcome {
    let zs = samples(0.3);
    let mut worst_env = 0.0f64;
    let mut redundancy = 0.0f64;
    for (d, p, seed) in [(4, 2, 0), (5, 2, 1), (5, 3, 2), (4, 2, 3), (5, 2, 4)] {
        let name = format!("anomalous(d={d},p={p},seed={seed})");
        let model = random_anomalous(d, p, seed).unwrap();
        let g = AnomalousGreens::new(&model).map_err(|e| format!("{name}: {e}"))?;
        let report = g.sparsity_report(p, &zs, 1e-9, MIN_IMAG).map_err(|e| format!("{name}: {e}"))?;
        require_clean(&report, &name)?;
        ensure(report.min_fragment() >= 1e-3, || format!("{name}: fragment corners vanish"))?;
        worst_env = worst_env.max(report.max_env());
        for &z in &zs {
            redundancy = redundancy.max(g.redundancy_violation(z).map_err(|e| e.to_string())?);
        }
    }
    ensure(redundancy <= 1e-11, || format!("redundancy violation {}", fmt(redundancy)))?;
    Ok(format!("5 models, max env={}, redundancy={}", fmt(worst_env), fmt(redundancy)))
}

fn contour_sparsity() -> Outcome {
    let mut parts = Vec::new();
    let cases: [(&str, ImpurityModel, Option<usize>); 2] = [
        ("siam", siam(1.0, -0.5, 0.3, 0.7).unwrap(), None),
        ("boson", bose_impurity(BoseImpurityParams::new(2, 1.0)).unwrap(), Some(4)),
    ];
    for (name, model, n_max) in cases {
        let study = contour_orders(&model, n_max).map_err(|e| format!("{name}: {e}"))?;
        let jump_constant = study
            .rows
            .iter()
            .map(|r| r.residual.jump / r.residual.max_delta_s)
            .fold(0.0f64, f64::max);
        let group = study.max_group_violation();
        ensure(study.left_order >= 1.8 && study.right_order >= 1.8, || {
            format!("{name}: residual orders {:.3}/{:.3}", study.left_order, study.right_order)
        })?;
        ensure(study.jump_order >= 0.8, || format!("{name}: jump order {:.3}", study.jump_order))?;
        ensure(group <= 1e-10, || format!("{name}: group property {}", fmt(group)))?;
        parts.push(format!(
            "{name}: orders {:.2}/{:.2}, jump order {:.2} (C={:.2}), group={}",
            study.left_order,
            study.right_order,
            study.jump_order,
            jump_constant,
            fmt(group)
        ));
    }
    Ok(parts.join("; "))
}

fn gibbs_sparsity() -> Outcome {
    let params = QuadratureParams::default();
    let sigma_env = |model: &GibbsModel, g: &DMatrix<f64>, tol: f64| -> Result<f64, String> {
        let (_, report) = classical_self_energy(model.a(), g, model.p(), tol).map_err(|e| e.to_string())?;
        ensure(report.pass, || format!("Sigma env norm {} above {}", fmt(report.max_env()), fmt(tol)))?;
        Ok(report.max_env())
    };
    let mut quad_env = 0.0f64;
    let mut agreement = 0.0f64;
    let mut runs = 0;
    for (d, seed) in [(2, 1), (3, 2), (3, 3)] {
        let model = random_quartic(d, 1, seed, true).unwrap();
        let direct = gibbs_moments(&model, GibbsPath::Direct, &params).map_err(|e| e.to_string())?.g;
        let factorized = gibbs_moments(&model, GibbsPath::Factorized, &params).map_err(|e| e.to_string())?.g;
        quad_env = quad_env.max(sigma_env(&model, &direct, 1e-7)?).max(sigma_env(&model, &factorized, 1e-7)?);
        agreement = agreement.max(max_abs_real(&(direct - factorized)));
        runs += 2;
    }
    for d in 2..=8 {
        for p in 1..=2usize.min(d - 1) {
            for pd in [true, false] {
                let model = random_quartic(d, p, 40 + d as u64, pd).unwrap();
                let g = gibbs_moments(&model, GibbsPath::Factorized, &params).map_err(|e| e.to_string())?.g;
                quad_env = quad_env.max(sigma_env(&model, &g, 1e-7)?);
                runs += 1;
            }
        }
    }
    ensure(agreement <= 1e-8, || format!("factorized vs direct {}", fmt(agreement)))?;
    let mut spin_env = 0.0f64;
    for p in 1..=3 {
        for extra in 1..=2 {
            let model = random_spin(p + extra, p, 60 + p as u64 * 10 + extra as u64).unwrap();
            let g = gibbs_moments(&model, GibbsPath::Spin, &params).map_err(|e| e.to_string())?.g;
            spin_env = spin_env.max(sigma_env(&model, &g, 1e-10)?);
            runs += 1;
        }
    }
    Ok(format!(
        "{runs} runs, quadrature env={}, spin env={}, path agreement={}",
        fmt(quad_env),
        fmt(spin_env),
        fmt(agreement)
    ))
}

fn oracle_equivalence() -> Outcome {
    let zs = samples(0.3);
    let mut lehmann = 0.0f64;
    let mut conjugate = 0.0f64;
    let mut tail = 0.0f64;
    let mut check = |g: &dyn Fn(Complex64) -> CMatrix, alt: &dyn Fn(Complex64) -> CMatrix| {
        for &z in &zs {
            let gz = g(z);
            lehmann = lehmann.max(max_abs(&(&gz - alt(z))));
            conjugate = conjugate.max(max_abs(&(g(z.conj()) - gz.adjoint())));
        }
        for r in [1e3, 1e4] {
            for theta in [0.1, 0.5, 1.3, 2.0, -0.7] {
                let z = Complex64::from_polar(r, theta);
                let gz = g(z);
                let n = gz.nrows();
                let dev = max_abs(&(gz * z - CMatrix::identity(n, n)));
                tail = tail.max(dev * r / 10.0);
            }
        }
    };
    for (_, model, n) in impurity_suite().into_iter().step_by(3) {
        let zt = ZeroTemperatureGreens::new(&model, n).unwrap();
        check(&|z| zt.evaluate(z).unwrap(), &|z| zt.evaluate_lehmann(z).unwrap());
        let ft = FiniteTemperatureGreens::new(&model, 2.0, 0.0, None).unwrap();
        check(&|z| ft.evaluate(z).unwrap(), &|z| ft.evaluate_resolvent(z).unwrap());
    }
    for seed in 0..3 {
        let g = AnomalousGreens::new(&random_anomalous(4, 2, seed).unwrap()).unwrap();
        check(&|z| g.evaluate(z).unwrap(), &|z| g.evaluate_lehmann(z).unwrap());
    }
    ensure(lehmann <= 1e-10, || format!("resolvent vs Lehmann {}", fmt(lehmann)))?;
    ensure(conjugate <= 1e-12, || format!("conjugate symmetry {}", fmt(conjugate)))?;
    ensure(tail <= 1.0, || format!("high-frequency tail exceeds 10/|z| by a factor {tail:.2}"))?;
    Ok(format!(
        "resolvent vs Lehmann={}, conjugate={}, max |z|*||zG-I||/10={}",
        fmt(lehmann),
        fmt(conjugate),
        fmt(tail)
    ))
}

fn negative_control() -> Outcome {
    let zs = samples(0.3);
    let mut parts = Vec::new();
    let expect_fail = |suite: &str, report: SparsityReport| -> Result<String, String> {
        ensure(!report.pass && report.max_env() >= 1e-3, || {
            format!("{suite}: control passed with env norm {}", fmt(report.max_env()))
        })?;
        Ok(format!("{suite}={}", fmt(report.max_env())))
    };
    // The SIAM interaction couples modes 0 and 1; declaring p = 1 puts mode 1
    // in the environment.
    let control = siam(2.0, -1.0, 0.0, 0.5).unwrap().with_p(1).unwrap();
    let zt = ZeroTemperatureGreens::new(&control, 2).unwrap();
    parts.push(expect_fail("zeroT", sparsity_report(&zt, 1, &zs, 1e-9, MIN_IMAG).unwrap())?);
    let ft = FiniteTemperatureGreens::new(&control, 1.0, 0.0, None).unwrap();
    parts.push(expect_fail("finiteT", sparsity_report(&ft, 1, &zs, 1e-9, MIN_IMAG).unwrap())?);
    let boson = bose_impurity(BoseImpurityParams::new(2, 1.0)).unwrap().with_p(0).unwrap();
    let bt = FiniteTemperatureGreens::new(&boson, 1.0, 0.0, None).unwrap();
    parts.push(expect_fail("finiteT-boson", sparsity_report(&bt, 0, &zs, 1e-9, MIN_IMAG).unwrap())?);
    let anomalous = random_anomalous(4, 2, 0).unwrap().with_p(1).unwrap();
    let ag = AnomalousGreens::new(&anomalous).unwrap();
    let mask = nambu_fragment_mask(4, 1);
    parts.push(expect_fail(
        "anomalous",
        sparsity_report_with(|z| ag.self_energy(z), &mask, &zs, 1e-9, MIN_IMAG).unwrap(),
    )?);

    let (contour, ch) = kadanoff_baym_equilibrium(0.0, 2.0, 1.0, &control, 0.0, None).unwrap();
    let study = convergence_study(&contour, &ch, &[vec![16], vec![32]], None, 1e-10).unwrap();
    let finest = study.rows.last().unwrap().residual.left_env;
    ensure(finest >= 1e-3 && study.left_order < 1.8, || {
        format!("contour: control residual {} with order {:.2}", fmt(finest), study.left_order)
    })?;
    parts.push(format!("contour={}", fmt(finest)));

    let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.2, 0.3, 1.5, 0.4, -0.2, 0.4, 1.8]);
    let model = GibbsModel::new(a, 1, GibbsInteraction::Quartic(v)).unwrap();
    let g = gibbs_moments(&model, GibbsPath::Direct, &QuadratureParams::default()).unwrap().g;
    let (_, report) = classical_self_energy(model.a(), &g, 1, 1e-7).unwrap();
    parts.push(expect_fail("gibbs", report)?);
    ensure(
        matches!(gibbs_moments(&model, GibbsPath::Factorized, &QuadratureParams::default()), Err(Error::Structural(_))),
        || "gibbs: factorized path accepted a non-impurity interaction".into(),
    )?;
    Ok(parts.join(", "))
}

fn main() {
    let criteria: [(&str, f64, fn() -> Outcome); 9] = [
        ("canonical relations and commutator identities", 10.0, ccr_and_commutators),
        ("non-interacting recovery", 60.0, non_interacting_recovery),
        ("zero-temperature sparsity", 60.0, zero_temperature_sparsity),
        ("finite-temperature and Matsubara sparsity", 120.0, finite_temperature_sparsity),
        ("anomalous sparsity", 60.0, anomalous_sparsity),
        ("Kadanoff-Baym contour residuals", 600.0, contour_sparsity),
        ("Gibbs moments", 120.0, gibbs_sparsity),
        ("oracle equivalence", f64::INFINITY, oracle_equivalence),
        ("negative control", f64::INFINITY, negative_control),
    ];
    // Keep panics inside a criterion from printing a backtrace mid-table.
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let shared_hook = Arc::new(hook);
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let limit = if budget.is_finite() { format!(" (limit {budget:.0}s)") } else { String::new() };
        let (status, detail) = match outcome {
            Ok(d) if secs < *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over time budget")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {} [{status}] {name}: {detail} [{secs:.2}s{limit}]", k + 1);
    }
    drop(shared_hook);
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
