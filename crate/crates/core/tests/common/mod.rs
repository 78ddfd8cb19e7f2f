//! Reference implementations used only by the integration tests. They share
//! no code with the library beyond plain data types.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use sdbe_core::SeededGaussian;

/// Double-double number `hi + lo` with about 106 bits of mantissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Dd {
        let (h, l) = two_sum(hi, lo);
        Dd { hi: h, lo: l }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        Dd::renorm(s, e)
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        Dd::renorm(p, e)
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        Dd::renorm(q1, q2).add(Dd::from(q3))
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            self.neg()
        } else {
            self
        }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting in
/// double-double arithmetic.
pub fn dd_solve(mut a: Vec<Vec<Dd>>, mut b: Vec<Dd>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().hi.total_cmp(&a[j][k].abs().hi))
            .unwrap();
        a.swap(k, piv);
        b.swap(k, piv);
        assert!(a[k][k].hi != 0.0, "singular system in oracle");
        for i in k + 1..n {
            let f = a[i][k].div(a[k][k]);
            for j in k..n {
                let t = f.mul(a[k][j]);
                a[i][j] = a[i][j].sub(t);
            }
            b[i] = b[i].sub(f.mul(b[k]));
        }
    }
    let mut x = vec![Dd::ZERO; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s = s.sub(a[i][j].mul(x[j]));
        }
        x[i] = s.div(a[i][i]);
    }
    x.into_iter().map(Dd::to_f64).collect()
}

/// Ridge coefficients from the normal equations `(D^T D + lambda I) w = D^T v`.
pub fn ridge_oracle(d: &DMatrix<f64>, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let (m, n) = (d.nrows(), d.ncols());
    let mut a = vec![vec![Dd::ZERO; n]; n];
    let mut b = vec![Dd::ZERO; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = Dd::ZERO;
            for r in 0..m {
                s = s.add(Dd::from(d[(r, i)]).mul(Dd::from(d[(r, j)])));
            }
            a[i][j] = s;
        }
        a[i][i] = a[i][i].add(Dd::from(lambda));
        let mut s = Dd::ZERO;
        for r in 0..m {
            s = s.add(Dd::from(d[(r, i)]).mul(Dd::from(v[r])));
        }
        b[i] = s;
    }
    DVector::from_vec(dd_solve(a, b))
}

/// Lasso stationarity violation computed directly from its definition for
/// `|v - D w|^2 + lambda |w|_1`.
pub fn kkt_oracle(d: &DMatrix<f64>, v: &DVector<f64>, w: &DVector<f64>, lambda: f64) -> f64 {
    let (m, n) = (d.nrows(), d.ncols());
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut g = 0.0;
        for r in 0..m {
            let mut pred = 0.0;
            for k in 0..n {
                pred += d[(r, k)] * w[k];
            }
            g += 2.0 * d[(r, j)] * (pred - v[r]);
        }
        let viol = if w[j] > 0.0 {
            (g + lambda).abs()
        } else if w[j] < 0.0 {
            (g - lambda).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(viol);
    }
    worst
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Classical Gram-Schmidt with full reorthogonalization, column by column.
pub fn gram_schmidt(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for j in 0..x.ncols() {
        let mut v: Vec<f64> = x.column(j).iter().copied().collect();
        for _ in 0..2 {
            for q in &out {
                let r: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= r * qi;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-10 {
            out.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    out
}

/// Principal-angle cosines as square roots of the eigenvalues of `C^T C`
/// with `C = Qx^T Qy`, largest first.
pub fn principal_cosines_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let qx = gram_schmidt(x);
    let qy = gram_schmidt(y);
    let c: Vec<Vec<f64>> = qx
        .iter()
        .map(|a| {
            qy.iter()
                .map(|b| a.iter().zip(b).map(|(p, q)| p * q).sum())
                .collect()
        })
        .collect();
    let k = qy.len();
    let ctc: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| c.iter().map(|row| row[i] * row[j]).sum())
                .collect()
        })
        .collect();
    let mut s: Vec<f64> = jacobi_eigenvalues(ctc)
        .into_iter()
        .map(|e| e.max(0.0).sqrt().min(1.0))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.truncate(qx.len().min(k));
    s
}

pub fn gaussian_matrix(g: &mut SeededGaussian, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| g.next())
}

pub fn gaussian_vector(g: &mut SeededGaussian, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| g.next())
}

/// Random matrix with orthonormal columns (`n <= m`).
pub fn orthonormal_columns(g: &mut SeededGaussian, m: usize, n: usize) -> DMatrix<f64> {
    let q = gram_schmidt(&gaussian_matrix(g, m, n));
    DMatrix::from_fn(m, n, |i, j| q[j][i])
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}
