//! Cyclic Jacobi eigenvalues for small symmetric matrices.

use nalgebra::SMatrix;

const MAX_SWEEPS: usize = 100;
/// Off-diagonal entries below this fraction of `sqrt(|a_pp a_qq|)` count as zero.
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

/// Eigenvalues of a symmetric matrix, sorted ascending.
///
/// Only the upper triangle is read.
pub fn symmetric_eigenvalues<const N: usize>(m: &SMatrix<f64, N, N>) -> [f64; N] {
    let mut a = *m;
    for i in 0..N {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }

    for _ in 0..MAX_SWEEPS {
        if is_diagonal(&a) {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                rotate(&mut a, p, q);
            }
        }
    }

    let mut out = [0.0; N];
    for (i, v) in out.iter_mut().enumerate() {
        *v = a[(i, i)];
    }
    out.sort_by(f64::total_cmp);
    out
}

fn negligible<const N: usize>(a: &SMatrix<f64, N, N>, p: usize, q: usize) -> bool {
    let apq = a[(p, q)].abs();
    let scale = (a[(p, p)] * a[(q, q)]).abs().sqrt();
    apq == 0.0 || (scale > 0.0 && apq <= OFF_DIAGONAL_TOLERANCE * scale)
}

fn is_diagonal<const N: usize>(a: &SMatrix<f64, N, N>) -> bool {
    (0..N).all(|p| (p + 1..N).all(|q| negligible(a, p, q)))
}

/// Annihilates `a[p][q]` with one plane rotation.
fn rotate<const N: usize>(a: &mut SMatrix<f64, N, N>, p: usize, q: usize) {
    if negligible(a, p, q) {
        return;
    }
    let apq = a[(p, q)];
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for r in 0..N {
        if r == p || r == q {
            continue;
        }
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        let new_rp = arp - s * (arq + tau * arp);
        let new_rq = arq + s * (arp - tau * arq);
        a[(r, p)] = new_rp;
        a[(p, r)] = new_rp;
        a[(r, q)] = new_rq;
        a[(q, r)] = new_rq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, Matrix4};

    #[test]
    fn diagonal_is_returned_sorted() {
        let m = Matrix4::from_diagonal(&nalgebra::Vector4::new(3.0, 1.0, 1e-8, 2.0));
        assert_eq!(symmetric_eigenvalues(&m), [1e-8, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = Matrix2::new(2.0, 1.0, 1.0, 2.0);
        let ev = symmetric_eigenvalues(&m);
        assert!((ev[0] - 1.0).abs() < 1e-15 && (ev[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn trace_and_determinant_preserved() {
        let b = Matrix4::new(
            1.0, 2.0, 0.5, -1.0, //
            0.3, -0.7, 1.1, 0.2, //
            2.2, 0.1, -0.4, 0.9, //
            -0.6, 1.4, 0.8, 0.05,
        );
        let m = b.transpose() * b + Matrix4::identity() * 0.01;
        let ev = symmetric_eigenvalues(&m);
        let tr: f64 = ev.iter().sum();
        let det: f64 = ev.iter().product();
        assert!((tr - m.trace()).abs() < 1e-12 * m.trace());
        assert!((det - m.determinant()).abs() < 1e-9 * m.determinant().abs());
    }
}
