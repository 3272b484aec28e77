use covsteer::expm::expm;
use covsteer::matcore::{
    asymmetry, eigh, frobenius_norm, principal_sqrt, rcond, symmetrize, unvech, vech, vech_len, SpdMatrix,
    SymmetricMatrix, SYM_TOL,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn square(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
}

fn sized_square() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=6).prop_flat_map(square)
}

fn spd() -> impl Strategy<Value = SpdMatrix> {
    sized_square().prop_map(|l| {
        let n = l.nrows();
        SpdMatrix::from_raw(&l * l.transpose() + DMatrix::identity(n, n) * 0.1).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn symmetrized_value_is_exactly_symmetric(m in sized_square()) {
        let near = &m + m.transpose();
        let mut bumped = near.clone();
        let last = bumped.ncols() - 1;
        bumped[(0, last)] += 1e-12;
        let s = symmetrize(&bumped, SYM_TOL).unwrap();
        prop_assert_eq!(s.as_mat(), &s.as_mat().transpose());
        prop_assert!((s.as_mat() - &near).amax() <= 2e-12);
    }

    #[test]
    fn large_asymmetry_is_rejected(m in sized_square()) {
        prop_assume!(asymmetry(&m) > 1e-6);
        prop_assert!(symmetrize(&m, SYM_TOL).is_err());
    }

    #[test]
    fn vech_roundtrip(m in sized_square()) {
        let s = SymmetricMatrix::new(&m + m.transpose()).unwrap();
        let v = vech(&s);
        prop_assert_eq!(v.len(), vech_len(s.dim()));
        prop_assert_eq!(unvech(&v, s.dim()).unwrap(), s);
    }

    #[test]
    fn sqrt_squares_back(s in spd()) {
        let r = principal_sqrt(&s);
        let back = r.as_mat() * r.as_mat();
        prop_assert!(frobenius_norm(&(back - s.as_mat())) <= 1e-10 * s.as_mat().norm().max(1.0));
        prop_assert!(r.as_sym().min_eigenvalue() > 0.0);
    }

    #[test]
    fn eigh_reconstructs(m in sized_square()) {
        let s = SymmetricMatrix::new(&m + m.transpose()).unwrap();
        let (values, vectors) = eigh(&s);
        let back = &vectors * DMatrix::from_diagonal(&values) * vectors.transpose();
        prop_assert!(frobenius_norm(&(back - s.as_mat())) <= 1e-12 * s.frobenius().max(1.0));
        prop_assert!(values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn spd_inverse_is_inverse(s in spd()) {
        let n = s.dim();
        let prod = s.inverse().as_mat() * s.as_mat();
        prop_assert!(frobenius_norm(&(prod - DMatrix::identity(n, n))) <= 1e-8);
    }

    #[test]
    fn rcond_is_scale_invariant(m in sized_square(), scale in 1e-3f64..1e3) {
        let a = rcond(&m);
        let b = rcond(&(&m * scale));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-300) + 1e-14);
    }

    #[test]
    fn expm_of_negation_is_inverse(m in sized_square()) {
        let n = m.nrows();
        let prod = expm(&m) * expm(&(-&m));
        prop_assert!(frobenius_norm(&(prod - DMatrix::identity(n, n))) <= 1e-10);
    }
}
