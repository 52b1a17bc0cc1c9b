//! Small linear-algebra kernels: tridiagonal solves and Krylov methods in a weighted inner product.

use crate::error::{numeric, Result};

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / beta;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Cyclic tridiagonal solve: `lower[0]` couples row 0 to n-1 and `upper[n-1]` couples row n-1 to 0.
pub fn thomas_cyclic(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n < 3 {
        return thomas(lower, diag, upper, rhs);
    }
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = thomas(lower, &bb, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(lower, &bb, upper, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(a, b)| a - fact * b).collect()
}

#[inline]
pub fn wdot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), z)| x * y * z).sum()
}

#[inline]
pub fn wnorm(a: &[f64], w: &[f64]) -> f64 {
    wdot(a, a, w).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Preconditioned CG for an operator self-adjoint and positive in the w-inner product.
pub fn pcg(
    a: &dyn Fn(&[f64], &mut [f64]),
    m_inv: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    w: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = wnorm(b, w);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats { iterations: 0, rel_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    a(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    m_inv(&r, &mut z);
    let mut p = z.clone();
    let mut rz = wdot(&r, &z, w);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rn = wnorm(&r, w) / bnorm;
        if rn <= rtol {
            return Ok(KrylovStats { iterations: it, rel_residual: rn });
        }
        a(&p, &mut ap);
        let pap = wdot(&p, &ap, w);
        if pap <= 0.0 {
            return numeric(format!("CG met a non-positive direction (p'Ap = {pap:.3e})"));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        m_inv(&r, &mut z);
        let rz_new = wdot(&r, &z, w);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rn = wnorm(&r, w) / bnorm;
    if rn <= rtol {
        Ok(KrylovStats { iterations: max_iter, rel_residual: rn })
    } else {
        numeric(format!("CG: {max_iter} iterations, relative residual {rn:.3e}"))
    }
}

/// Preconditioned MINRES for a self-adjoint (possibly indefinite) operator in the w-inner product.
/// `m_inv` must be self-adjoint positive definite. Returns the true relative residual.
pub fn minres(
    a: &dyn Fn(&[f64], &mut [f64]),
    m_inv: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    w: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = wnorm(b, w);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats { iterations: 0, rel_residual: 0.0 });
    }
    let true_res = |x: &[f64]| {
        let mut t = vec![0.0; n];
        a(x, &mut t);
        for i in 0..n {
            t[i] = b[i] - t[i];
        }
        wnorm(&t, w) / bnorm
    };
    let mut total = 0;
    // restarts guard against loss of orthogonality on hard systems
    for _ in 0..4 {
        let mut r1 = vec![0.0; n];
        a(x, &mut r1);
        for i in 0..n {
            r1[i] = b[i] - r1[i];
        }
        if wnorm(&r1, w) / bnorm <= rtol {
            return Ok(KrylovStats { iterations: total, rel_residual: wnorm(&r1, w) / bnorm });
        }
        let mut y = vec![0.0; n];
        m_inv(&r1, &mut y);
        let beta1 = wdot(&r1, &y, w);
        if beta1 <= 0.0 {
            return numeric("MINRES preconditioner is not positive definite");
        }
        let beta1 = beta1.sqrt();
        let mut r2 = r1.clone();
        let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
        let (mut cs, mut sn) = (-1.0f64, 0.0f64);
        let mut wv = vec![0.0; n];
        let mut w1;
        let mut w2 = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut itn = 0;
        while itn < max_iter {
            itn += 1;
            let s = 1.0 / beta;
            for i in 0..n {
                v[i] = s * y[i];
            }
            a(&v, &mut y);
            if itn >= 2 {
                let f = beta / oldb;
                for i in 0..n {
                    y[i] -= f * r1[i];
                }
            }
            let alfa = wdot(&v, &y, w);
            let f = alfa / beta;
            for i in 0..n {
                y[i] -= f * r2[i];
            }
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            m_inv(&r2, &mut y);
            oldb = beta;
            let bb = wdot(&r2, &y, w);
            if bb < 0.0 {
                return numeric("MINRES preconditioner is not positive definite");
            }
            beta = bb.sqrt();
            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = gbar.hypot(beta).max(f64::MIN_POSITIVE);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;
            w1 = std::mem::take(&mut w2);
            w2 = std::mem::take(&mut wv);
            wv = vec![0.0; n];
            for i in 0..n {
                wv[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
                x[i] += phi * wv[i];
            }
            if phibar / beta1 < 0.1 * rtol || beta == 0.0 {
                break;
            }
        }
        total += itn;
        let rr = true_res(x);
        if rr <= rtol {
            return Ok(KrylovStats { iterations: total, rel_residual: rr });
        }
    }
    let rr = true_res(x);
    numeric(format!("MINRES: {total} iterations, relative residual {rr:.3e}"))
}

/// Dense symmetric eigen-decomposition, eigenvalues ascending with matching columns.
pub fn sym_eig(a: nalgebra::DMatrix<f64>) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
    let n = a.nrows();
    let e = nalgebra::SymmetricEigen::new(a);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].partial_cmp(&e.eigenvalues[j]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = nalgebra::DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(n: usize, shift: f64) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r + shift * x[i];
            }
        }
    }

    #[test]
    fn thomas_solves() {
        let n = 7;
        let lo = vec![-1.0; n];
        let di = vec![3.0; n];
        let up = vec![-1.0; n];
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        lap1d(n, 1.0)(&x, &mut b);
        let s = thomas(&lo, &di, &up, &b);
        for i in 0..n {
            assert!((s[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn cyclic_solves() {
        let n = 9;
        let lo = vec![-1.0; n];
        let di = vec![2.5; n];
        let up = vec![-1.0; n];
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let b: Vec<f64> = (0..n).map(|i| 2.5 * x[i] - x[(i + n - 1) % n] - x[(i + 1) % n]).collect();
        let s = thomas_cyclic(&lo, &di, &up, &b);
        for i in 0..n {
            assert!((s[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_and_minres_agree() {
        let n = 60;
        let w = vec![1.0; n];
        let b: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let id = |r: &[f64], z: &mut [f64]| z.copy_from_slice(r);
        let mut x1 = vec![0.0; n];
        pcg(&lap1d(n, 0.1), &id, &b, &mut x1, &w, 1e-12, 500).unwrap();
        let mut x2 = vec![0.0; n];
        minres(&lap1d(n, 0.1), &id, &b, &mut x2, &w, 1e-12, 500).unwrap();
        for i in 0..n {
            assert!((x1[i] - x2[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn minres_indefinite() {
        let n = 50;
        let w = vec![1.0; n];
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let id = |r: &[f64], z: &mut [f64]| z.copy_from_slice(r);
        let a = lap1d(n, -1.3);
        let mut x = vec![0.0; n];
        let st = minres(&a, &id, &b, &mut x, &w, 1e-11, 1000).unwrap();
        assert!(st.rel_residual <= 1e-11);
    }
}

/// Pre-factored (possibly cyclic) tridiagonal matrix for repeated solves.
#[derive(Debug, Clone)]
pub struct TriFactor {
    lower: Vec<f64>,
    cp: Vec<f64>,
    inv_beta: Vec<f64>,
    cyclic: Option<(Vec<f64>, f64, f64)>,
}

impl TriFactor {
    /// `lower[i]` couples row i to i-1, `upper[i]` row i to i+1; in the cyclic case
    /// `lower[0]` couples row 0 to n-1 and `upper[n-1]` row n-1 to 0.
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64], cyclic: bool) -> TriFactor {
        let n = diag.len();
        if !cyclic || n < 3 {
            return TriFactor::plain(lower, diag, upper);
        }
        let alpha = upper[n - 1];
        let beta = lower[0];
        let gamma = -diag[0];
        let mut bb = diag.to_vec();
        bb[0] -= gamma;
        bb[n - 1] -= alpha * beta / gamma;
        let mut f = TriFactor::plain(lower, &bb, upper);
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        let mut z = vec![0.0; n];
        f.solve_plain(&u, &mut z);
        let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
        f.cyclic = Some((z, beta / gamma, denom));
        f
    }

    fn plain(lower: &[f64], diag: &[f64], upper: &[f64]) -> TriFactor {
        let n = diag.len();
        let mut cp = vec![0.0; n];
        let mut inv_beta = vec![0.0; n];
        let mut b = diag[0];
        inv_beta[0] = 1.0 / b;
        cp[0] = upper[0] / b;
        for i in 1..n {
            b = diag[i] - lower[i] * cp[i - 1];
            inv_beta[i] = 1.0 / b;
            cp[i] = upper[i] / b;
        }
        TriFactor { lower: lower.to_vec(), cp, inv_beta, cyclic: None }
    }

    fn solve_plain(&self, r: &[f64], x: &mut [f64]) {
        let n = r.len();
        x[0] = r[0] * self.inv_beta[0];
        for i in 1..n {
            x[i] = (r[i] - self.lower[i] * x[i - 1]) * self.inv_beta[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cp[i] * x[i + 1];
        }
    }

    pub fn solve(&self, r: &[f64], x: &mut [f64]) {
        self.solve_plain(r, x);
        if let Some((z, bg, denom)) = &self.cyclic {
            let n = r.len();
            let fact = (x[0] + bg * x[n - 1]) / denom;
            for i in 0..n {
                x[i] -= fact * z[i];
            }
        }
    }
}

#[cfg(test)]
mod trifactor_tests {
    use super::*;

    #[test]
    fn factor_matches_direct() {
        let n = 11;
        let lo: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let up: Vec<f64> = (0..n).map(|i| -0.5 - 0.05 * i as f64).collect();
        let di = vec![4.0; n];
        let r: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        TriFactor::new(&lo, &di, &up, true).solve(&r, &mut x);
        let y = thomas_cyclic(&lo, &di, &up, &r);
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-13);
        }
        TriFactor::new(&lo, &di, &up, false).solve(&r, &mut x);
        let y = thomas(&lo, &di, &up, &r);
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-13);
        }
    }
}

/// Square band matrix with equal lower and upper bandwidth, LU-factored in place
/// without pivoting (callers supply diagonally dominant or definite systems).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    bw: usize,
    a: Vec<f64>,
    factored: bool,
}

impl BandLu {
    pub fn new(n: usize, bw: usize) -> BandLu {
        BandLu { n, bw, a: vec![0.0; n * (2 * bw + 1)], factored: false }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i.abs_diff(j) <= self.bw && !self.factored);
        let k = self.at(i, j);
        self.a[k] += v;
    }

    pub fn factor(mut self) -> crate::Result<BandLu> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let p = self.a[self.at(k, k)];
            if !(p.abs() > 1e-300) {
                return crate::error::numeric(format!("zero pivot at row {k}"));
            }
            let hi = (k + bw + 1).min(n);
            for i in k + 1..hi {
                let ik = self.at(i, k);
                let l = self.a[ik] / p;
                if l == 0.0 {
                    continue;
                }
                self.a[ik] = l;
                for j in k + 1..hi {
                    let kj = self.a[self.at(k, j)];
                    let ij = self.at(i, j);
                    self.a[ij] -= l * kj;
                }
            }
        }
        self.factored = true;
        Ok(self)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored);
        let (n, bw) = (self.n, self.bw);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for j in lo..i {
                s -= self.a[self.at(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = x[i];
            for j in i + 1..hi {
                s -= self.a[self.at(i, j)] * x[j];
            }
            x[i] = s / self.a[self.at(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod band_tests {
    use super::*;

    #[test]
    fn band_lu_matches_dense() {
        let n = 40;
        let bw = 5;
        let mut m = BandLu::new(n, bw);
        let mut d = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                let v = if i == j { 12.0 } else { ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6 };
                m.add(i, j, v);
                d[(i, j)] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).sin()).collect();
        let x = m.factor().unwrap().solve(&b);
        let r = &d * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.amax() < 1e-12);
    }
}
