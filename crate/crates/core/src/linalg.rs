//! Small dense linear-algebra helpers in double precision: Kronecker
//! products, adjoints, norms and the matrix exponential.

use ndarray::{Array1, Array2};
use ndarray_linalg::Inverse;
use num_complex::Complex64 as c64;

use crate::error::Result;

pub fn identity(n: usize) -> Array2<c64> {
    Array2::eye(n)
}

pub fn dagger(m: &Array2<c64>) -> Array2<c64> {
    m.t().mapv(|z| z.conj())
}

pub fn kron(a: &Array2<c64>, b: &Array2<c64>) -> Array2<c64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == c64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Kronecker product of a list of factors, first factor most significant.
pub fn kron_all<'a, I>(factors: I) -> Array2<c64>
where
    I: IntoIterator<Item = &'a Array2<c64>>,
{
    factors
        .into_iter()
        .fold(Array2::eye(1), |acc, f| kron(&acc, f))
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm_1(m: &Array2<c64>) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Array2<c64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Array2<c64>, b: &Array2<c64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn vec_norm(v: &Array1<c64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral norm via the largest singular value.
pub fn norm_2(m: &Array2<c64>) -> Result<f64> {
    use ndarray_linalg::{JobSvd, SVDDC};
    let (_, s, _) = m.svddc(JobSvd::None)?;
    Ok(s.iter().cloned().fold(0.0, f64::max))
}

const PADE13: [f64; 14] = [
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

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &Array2<c64>) -> Result<Array2<c64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    const THETA13: f64 = 5.371920351148152;
    let norm = norm_1(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scale = c64::new(0.5f64.powi(squarings), 0.0);
    let a = a.mapv(|z| z * scale);
    let b = PADE13.map(|x| c64::new(x, 0.0));
    let ident = identity(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let u_inner = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a.dot(&(a6.dot(&u_inner) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]));
    let v_inner = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = a6.dot(&v_inner) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.inv()?.dot(&p);
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Action of `exp(t * a)` on `v` by truncated Taylor series over
/// `substeps` sub-intervals (more are added if the scaled norm is large).
pub fn expm_multiply(a: &Array2<c64>, v: &Array1<c64>, t: f64, substeps: usize) -> Array1<c64> {
    if t == 0.0 {
        return v.clone();
    }
    let norm = norm_1(a) * t.abs();
    let steps = substeps.max(1).max(norm.ceil() as usize);
    let h = c64::new(t / steps as f64, 0.0);
    let mut out = v.clone();
    for _ in 0..steps {
        let mut term = out.clone();
        let mut acc = out.clone();
        for k in 1..60 {
            term = a.dot(&term).mapv(|z| z * h / k as f64);
            acc += &term;
            if vec_norm(&term) <= 1e-17 * vec_norm(&acc) {
                break;
            }
        }
        out = acc;
    }
    out
}

/// Single-precision-free check that `m` is unitary to `tol` (max-abs on
/// `m^dagger m - 1`).
pub fn unitarity_defect(m: &Array2<c64>) -> f64 {
    max_abs_diff(&dagger(m).dot(m), &identity(m.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = Array2::<c64>::zeros((4, 4));
        assert!(max_abs_diff(&expm(&z).unwrap(), &identity(4)) < 1e-15);
    }

    #[test]
    fn expm_rotation_generator() {
        // exp(-i theta sigma_x) = cos(theta) - i sin(theta) sigma_x
        let theta = 1.3;
        let sx = array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]];
        let g = expm(&sx.mapv(|z| z * c(0., -theta))).unwrap();
        let expected = array![
            [c(theta.cos(), 0.), c(0., -theta.sin())],
            [c(0., -theta.sin()), c(theta.cos(), 0.)]
        ];
        assert!(max_abs_diff(&g, &expected) < 1e-14);
    }

    #[test]
    fn expm_large_norm_nilpotent_and_diagonal() {
        // diagonal with widely spread entries exercises the squaring phase
        let d = Array2::from_diag(&array![c(-30.0, 0.), c(2.0, 1.0), c(0.5, -7.0)]);
        let e = expm(&d).unwrap();
        for i in 0..3 {
            let expected = d[[i, i]].exp();
            assert!((e[[i, i]] - expected).norm() <= 1e-12 * expected.norm().max(1.0));
        }
        let n = array![[c(0., 0.), c(50., 0.)], [c(0., 0.), c(0., 0.)]];
        let en = expm(&n).unwrap();
        assert!((en[[0, 1]] - c(50., 0.)).norm() < 1e-11);
        assert!((en[[0, 0]] - c(1., 0.)).norm() < 1e-13);
    }

    #[test]
    fn expm_multiply_matches_expm() {
        let a = array![
            [c(-1.0, 0.3), c(2.0, 0.0), c(0.0, 0.5)],
            [c(0.1, 0.0), c(-0.5, -1.0), c(3.0, 0.0)],
            [c(0.0, 0.2), c(-1.0, 0.0), c(-2.0, 0.0)]
        ];
        let v = array![c(1.0, 0.0), c(0.0, 1.0), c(0.5, -0.5)];
        let t = 2.7;
        let exact = expm(&a.mapv(|z| z * t)).unwrap().dot(&v);
        let approx = expm_multiply(&a, &v, t, 4);
        let err = exact
            .iter()
            .zip(approx.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err = {err}");
    }

    #[test]
    fn kron_shapes_and_values() {
        let a = array![[c(1., 0.), c(2., 0.)], [c(3., 0.), c(4., 0.)]];
        let b = identity(2);
        let k = kron(&a, &b);
        assert_eq!(k.dim(), (4, 4));
        assert_eq!(k[[2, 2]], c(4., 0.));
        assert_eq!(k[[0, 2]], c(2., 0.));
        assert_eq!(k[[0, 1]], c(0., 0.));
    }
}
