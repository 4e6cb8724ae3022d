//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use crate::nn::Mat;

/// Eigenvalues (ascending) and matching eigenvector columns of a symmetric
/// matrix. Intended for the modest block sizes produced by symmetry
/// decomposition; cost is O(n^3) per sweep.
pub fn symmetric_eigen(matrix: &Mat) -> (Vec<f64>, Mat) {
    let n = matrix.dim().0;
    assert_eq!(n, matrix.dim().1, "matrix must be square");
    let mut a = matrix.clone();
    let mut v = Mat::eye(n);

    let off = |a: &Mat| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += a[(p, q)] * a[(p, q)];
            }
        }
        s
    };
    let scale: f64 = matrix.iter().map(|x| x * x).sum::<f64>().max(1e-300);

    for _sweep in 0..64 {
        if off(&a) <= 1e-24 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let energies: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Mat::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    (energies, vectors)
}
