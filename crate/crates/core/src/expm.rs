//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham, "The scaling and squaring method for the matrix exponential
//! revisited", 2005).

use nalgebra::DMatrix;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a)` for a square matrix.
///
/// Panics if `a` is not square.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = norm1(a);

    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = low_order_uv(a, coeffs, &ident);
            return pade_quotient(&u, &v);
        }
    }

    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let (u, v) = order13_uv(&scaled, &ident);
    let mut r = pade_quotient(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn low_order_uv(a: &DMatrix<f64>, b: &[f64], ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let a2 = a * a;
    let mut power = ident.clone();
    let mut u_inner = ident * b[1];
    let mut v = ident * b[0];
    let mut k = 2;
    while k < b.len() {
        power = &power * &a2;
        v += &power * b[k];
        if k + 1 < b.len() {
            u_inner += &power * b[k + 1];
        }
        k += 2;
    }
    (a * u_inner, v)
}

fn order13_uv(a: &DMatrix<f64>, ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + ident * b[1]);
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + ident * b[0];
    (u, v)
}

fn pade_quotient(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for norms inside the theta bounds")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::frobenius_norm;
    use nalgebra::dmatrix;

    #[test]
    fn nilpotent_is_truncated_series() {
        let m = dmatrix![0.0, -1.0; 0.0, 0.0];
        let e = expm(&m);
        assert!(frobenius_norm(&(e - dmatrix![1.0, -1.0; 0.0, 1.0])) < 1e-15);
    }

    #[test]
    fn rotation_generator() {
        for &t in &[0.1, 1.0, 3.0, 10.0] {
            let m = dmatrix![0.0, -t; t, 0.0];
            let e = expm(&m);
            let expected = dmatrix![t.cos(), -t.sin(); t.sin(), t.cos()];
            assert!(frobenius_norm(&(e - expected)) < 1e-13, "t = {t}");
        }
    }

    #[test]
    fn diagonal_across_orders() {
        for &s in &[1e-3, 0.2, 0.9, 2.0, 5.0, 40.0] {
            let m = dmatrix![s, 0.0; 0.0, -s];
            let e = expm(&m);
            let rel = (e[(0, 0)] - s.exp()).abs() / s.exp();
            assert!(rel <= 1e-13, "s = {s}, relative error {rel:e}");
            assert!((e[(1, 1)] - (-s).exp()).abs() <= 1e-14);
        }
    }

    #[test]
    fn agrees_with_nalgebra() {
        let m = dmatrix![0.3, -1.2, 0.4; 0.9, -0.1, 2.0; -1.5, 0.7, 0.2] * 2.5;
        let ours = expm(&m);
        let theirs = m.clone().exp();
        assert!(frobenius_norm(&(&ours - &theirs)) <= 1e-12 * frobenius_norm(&theirs));
    }
}
