use lasso_phase::covariance::{factor_sqrt, schur_complement, CovarianceFamily, CovarianceModel};
use lasso_phase::io::parse_covariance_csv;
use lasso_phase::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn families() -> Vec<CovarianceFamily> {
    vec![
        CovarianceFamily::Identity,
        CovarianceFamily::Ar1 { rho: 0.5 },
        CovarianceFamily::Ar1 { rho: -0.9 },
        CovarianceFamily::Ar1 { rho: 0.9 },
        CovarianceFamily::Spiked {
            spikes: vec![60.0, 60.0],
            sigma_sq: 1.0,
            v_seed: 4,
            directions: None,
        },
    ]
}

#[test]
fn factors_reconstruct_every_family() {
    for fam in families() {
        let m = fam.build(40).unwrap();
        let v = m.eigenvectors();
        let rebuilt = v * DMatrix::from_diagonal(m.eigenvalues()) * v.transpose();
        assert!(rel_frob(&rebuilt, m.matrix()) <= 1e-8, "{fam:?}");
        assert!(rel_frob(&(m.sqrt() * m.sqrt()), m.matrix()) <= 1e-8, "{fam:?}");
        let eye = DMatrix::identity(40, 40);
        assert!(rel_frob(&(m.inv_sqrt() * m.sqrt()), &eye) <= 1e-8, "{fam:?}");
        assert!(rel_frob(&(m.inv() * m.matrix()), &eye) <= 1e-8, "{fam:?}");
        assert!(rel_frob(m.sqrt(), &m.sqrt().transpose()) <= 1e-12, "{fam:?}");
        let whitened = m.inv_sqrt() * m.matrix() * m.inv_sqrt();
        assert!(rel_frob(&whitened, &eye) <= 1e-8, "{fam:?}");
    }
}

#[test]
fn spiked_top_eigenvalues() {
    let m = families()[4].build(50).unwrap();
    let ev = m.eigenvalues();
    assert!((ev[0] - 61.0).abs() < 1e-9 && (ev[1] - 61.0).abs() < 1e-9);
    assert!(ev.iter().skip(2).all(|&e| (e - 1.0).abs() < 1e-9));
}

#[test]
fn build_is_bitwise_deterministic() {
    for fam in families() {
        let a = fam.build(30).unwrap();
        let b = fam.build(30).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_eq!(a.sqrt(), b.sqrt());
        assert_eq!(a.inv(), b.inv());
    }
    let other = CovarianceFamily::Spiked {
        spikes: vec![60.0, 60.0],
        sigma_sq: 1.0,
        v_seed: 5,
        directions: None,
    };
    assert_ne!(other.build(30).unwrap().matrix(), families()[4].build(30).unwrap().matrix());
}

#[test]
fn supplied_spike_directions_are_used() {
    let dirs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
    let fam = CovarianceFamily::Spiked {
        spikes: vec![3.0, 5.0],
        sigma_sq: 0.5,
        v_seed: 0,
        directions: Some(dirs),
    };
    let m = fam.build(3).unwrap();
    let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![3.5, 0.5, 5.5]));
    assert!(rel_frob(m.matrix(), &expect) < 1e-14);
}

#[test]
fn definiteness_and_conditioning_errors() {
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(CovarianceModel::from_matrix(indefinite), Err(Error::NotPositiveDefinite { .. })));
    let nearly_singular = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-12]));
    assert!(matches!(factor_sqrt(&nearly_singular), Err(Error::IllConditioned { .. })));
    assert!(matches!(
        CovarianceFamily::Ar1 { rho: 1.0 }.build(3),
        Err(Error::Parameter(_))
    ));
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
    assert!(CovarianceModel::from_matrix(asym).is_err());
}

#[test]
fn explicit_from_csv_matches_ar1() {
    let text = "1,0.5,0.25\n0.5,1,0.5\n0.25,0.5,1\n";
    let m = CovarianceModel::from_matrix(parse_covariance_csv(text).unwrap()).unwrap();
    let ar = CovarianceFamily::Ar1 { rho: 0.5 }.build(3).unwrap();
    assert!(rel_frob(m.matrix(), ar.matrix()) < 1e-15);
    assert!(rel_frob(m.sqrt(), ar.sqrt()) < 1e-12);
}

#[test]
fn schur_block_diagonal_and_empty_cases() {
    let mut s = DMatrix::zeros(4, 4);
    s.view_mut((0, 0), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]));
    s.view_mut((2, 2), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 0.7]));
    let m = CovarianceModel::from_matrix(s.clone()).unwrap();
    assert!(rel_frob(&schur_complement(&m, &[0, 1]).unwrap(), &s.view((2, 2), (2, 2)).into_owned()) < 1e-14);
    assert!(rel_frob(&schur_complement(&m, &[]).unwrap(), &s) < 1e-15);
    assert!(matches!(schur_complement(&m, &[0, 1, 2, 3]), Err(Error::EmptyComplement)));
}

/// Random SPD matrix `AAᵀ + 0.5 I` from a flat list of entries.
fn spd(p: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(p, p, entries.iter().copied());
    &a * a.transpose() + DMatrix::identity(p, p) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schur_is_positive_definite_and_matches_brute_force(
        entries in prop::collection::vec(-1.0f64..1.0, 36),
        mask in prop::collection::vec(any::<bool>(), 6),
    ) {
        let s = spd(6, &entries);
        let m = CovarianceModel::from_matrix(s.clone()).unwrap();
        let b: Vec<usize> = (0..6).filter(|&i| mask[i]).collect();
        let c: Vec<usize> = (0..6).filter(|&i| !mask[i]).collect();
        prop_assume!(!c.is_empty());
        let got = schur_complement(&m, &b).unwrap();
        let sub = |r: &[usize], k: &[usize]| DMatrix::from_fn(r.len(), k.len(), |i, j| s[(r[i], k[j])]);
        let mut expect = sub(&c, &c);
        if !b.is_empty() {
            let inv = sub(&b, &b).try_inverse().unwrap();
            expect -= sub(&c, &b) * inv * sub(&b, &c);
        }
        prop_assert!(rel_frob(&got, &expect) < 1e-10);
        prop_assert!(got.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn sqrt_of_random_spd(entries in prop::collection::vec(-1.0f64..1.0, 25)) {
        let s = spd(5, &entries);
        let f = factor_sqrt(&s).unwrap();
        prop_assert!(rel_frob(&(&f.sqrt * &f.sqrt), &s) < 1e-10);
        prop_assert!(rel_frob(&(&f.inv_sqrt * &f.sqrt), &DMatrix::identity(5, 5)) < 1e-10);
    }
}
