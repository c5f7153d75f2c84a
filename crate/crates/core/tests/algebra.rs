use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selab::fock::{ladder_operator, FockSector, LadderKind, SectorOperator};
use selab::linalg::{c64, max_abs, CMatrix};
use selab::model::random_hermitian;
use selab::{Error, ImpurityModel, Statistics};

fn op(i: usize, kind: LadderKind, sector: &FockSector) -> Option<SectorOperator> {
    match ladder_operator(i, kind, sector) {
        Ok(o) => Some(o),
        Err(Error::EmptySector(_)) => None,
        Err(e) => panic!("{e}"),
    }
}

fn sector(d: usize, n: usize, stats: Statistics) -> Option<FockSector> {
    FockSector::new(d, n, stats).ok()
}

/// `a_i a_j^dagger - zeta a_j^dagger a_i` on sector `N`, as a matrix.
fn mixed_commutator(d: usize, n: usize, i: usize, j: usize, stats: Statistics) -> CMatrix {
    let s = sector(d, n, stats).unwrap();
    let mut m = CMatrix::zeros(s.dim(), s.dim());
    if let (Some(up), Some(s_up)) = (op(j, LadderKind::Create, &s), sector(d, n + 1, stats)) {
        m += &op(i, LadderKind::Annihilate, &s_up).unwrap().matrix * &up.matrix;
    }
    if let Some(down) = op(i, LadderKind::Annihilate, &s) {
        let s_down = sector(d, n - 1, stats).unwrap();
        m -= (&op(j, LadderKind::Create, &s_down).unwrap().matrix * &down.matrix) * c64(stats.zeta(), 0.0);
    }
    m
}

#[test]
fn canonical_relations_on_sectors() {
    let cases = [(Statistics::Fermion, 6, 6), (Statistics::Boson, 3, 5)];
    for (stats, d, n_top) in cases {
        for n in 0..=n_top {
            for i in 0..d {
                for j in 0..d {
                    let m = mixed_commutator(d, n, i, j, stats);
                    let expected = if i == j { CMatrix::identity(m.nrows(), m.ncols()) } else { CMatrix::zeros(m.nrows(), m.ncols()) };
                    assert!(max_abs(&(m - expected)) <= 1e-14, "{stats:?} N={n} ({i},{j})");
                    if n >= 2 {
                        let s = sector(d, n, stats).unwrap();
                        let s1 = sector(d, n - 1, stats).unwrap();
                        let ai = |k: usize, sec: &FockSector| op(k, LadderKind::Annihilate, sec).unwrap().matrix;
                        let lhs = ai(i, &s1) * ai(j, &s) - (ai(j, &s1) * ai(i, &s)) * c64(stats.zeta(), 0.0);
                        assert!(max_abs(&lhs) <= 1e-14);
                    }
                }
            }
        }
    }
}

/// `[a^dagger h a, a_j^dagger] = sum_k h_kj a_k^dagger` between sectors.
#[test]
fn quadratic_commutator_lemma() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (stats, d, n_top) in [(Statistics::Fermion, 5, 4), (Statistics::Boson, 3, 4)] {
        let h = random_hermitian(d, &mut rng);
        let model = ImpurityModel::non_interacting(stats, h.clone()).unwrap();
        for n in 0..=n_top {
            let s = sector(d, n, stats).unwrap();
            let s_up = sector(d, n + 1, stats).unwrap();
            let h_n = model.sector_matrix(&s).unwrap();
            let h_up = model.sector_matrix(&s_up).unwrap();
            for j in 0..d {
                let adj = op(j, LadderKind::Create, &s).unwrap().matrix;
                let lhs = &h_up * &adj - &adj * &h_n;
                let mut rhs = CMatrix::zeros(lhs.nrows(), lhs.ncols());
                for k in 0..d {
                    rhs += op(k, LadderKind::Create, &s).unwrap().matrix * h[(k, j)];
                }
                assert!(max_abs(&(lhs - rhs)) <= 1e-13, "{stats:?} N={n} j={j}");
            }
        }
    }
}

#[test]
fn ladder_domain_errors() {
    let vacuum = FockSector::new(3, 0, Statistics::Fermion).unwrap();
    assert!(matches!(ladder_operator(0, LadderKind::Annihilate, &vacuum), Err(Error::EmptySector(_))));
    let full = FockSector::new(3, 3, Statistics::Fermion).unwrap();
    assert!(matches!(ladder_operator(0, LadderKind::Create, &full), Err(Error::EmptySector(_))));
    assert!(matches!(ladder_operator(3, LadderKind::Create, &vacuum), Err(Error::Argument(_))));
    assert!(matches!(FockSector::new(2, 3, Statistics::Fermion), Err(Error::EmptySector(_))));
}
