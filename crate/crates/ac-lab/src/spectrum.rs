//! Second variation of the Allen-Cahn energy: spectra, index and nullity, lifted forms, projections.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, numeric, Result};
use crate::field::{LayerStack, Mesh, PhaseField};
use crate::geometry::{self, WarpedMetric};
use crate::heteroclinic::{Profile, TruncatedProfile};
use crate::linalg;

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    /// ||A v - lambda v|| for each unit eigenvector (metric norm).
    pub residuals: Vec<f64>,
    pub index: usize,
    pub nullity: usize,
    pub zero_tol: f64,
    pub solver: String,
    pub basis_size: usize,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
}

impl SpectrumReport {
    fn from_pairs(vals: Vec<f64>, vecs: Vec<Vec<f64>>, residuals: Vec<f64>, zero_tol: f64, solver: &str, basis: usize) -> Self {
        let index = vals.iter().filter(|&&l| l < -zero_tol).count();
        let nullity = vals.iter().filter(|&&l| l.abs() <= zero_tol).count();
        SpectrumReport { eigenvalues: vals, residuals, index, nullity, zero_tol, solver: solver.into(), basis_size: basis, vectors: vecs }
    }
}

/// Default zero tolerance: 1e-6 times the lowest eigenvalue 2/eps of the operator at u = 1.
pub fn default_zero_tol(eps: f64) -> f64 {
    1e-6 * 2.0 / eps
}

/// zeta -> -eps Lap zeta + W''(u) zeta / eps on free nodes (zero on Dirichlet nodes).
pub fn second_variation_apply(field: &PhaseField, zeta: &[f64]) -> Vec<f64> {
    let m = &field.mesh;
    let mut out = vec![0.0; zeta.len()];
    m.apply_k(zeta, &mut out);
    for k in 0..out.len() {
        out[k] = if m.fixed[k] { 0.0 } else { -field.eps * out[k] / m.w[k] + field.well.d2w(field.u[k]) * zeta[k] / field.eps };
    }
    out
}

/// Q_u(zeta, zeta) through the operator; zeta is taken to vanish on Dirichlet nodes.
pub fn quadratic_form(field: &PhaseField, zeta: &[f64]) -> f64 {
    let z = masked(&field.mesh, zeta);
    let az = second_variation_apply(field, &z);
    linalg::wdot(&z, &az, &field.mesh.w)
}

fn masked(m: &Mesh, v: &[f64]) -> Vec<f64> {
    v.iter().zip(&m.fixed).map(|(x, f)| if *f { 0.0 } else { *x }).collect()
}

/// Lowest eigenpairs of a self-adjoint operator in a weighted inner product on a free subspace.
pub struct EigenProblem<'a> {
    pub n: usize,
    pub w: &'a [f64],
    pub free: &'a [bool],
    pub apply: &'a dyn Fn(&[f64], &mut [f64]),
    /// Approximate solve of (A - shift) x = b with A - shift positive definite.
    pub shifted_solve: &'a dyn Fn(&[f64], &mut [f64]) -> Result<()>,
    pub shift: f64,
}

fn wnorm_free(v: &[f64], w: &[f64]) -> f64 {
    linalg::wnorm(v, w)
}

/// Block shift-invert Krylov iteration with Rayleigh-Ritz on A itself.
pub fn lowest_eigenpairs(p: &EigenProblem, k: usize, tol: f64, seed: u64, max_basis: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>, usize)> {
    let n = p.n;
    let nfree = p.free.iter().filter(|f| **f).count();
    if k == 0 || k > nfree {
        return invalid(format!("cannot compute {k} eigenpairs on {nfree} free nodes"));
    }
    let bs = 6usize.min(nfree);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = vec![];
    let mut abasis: Vec<Vec<f64>> = vec![];
    let mut block: Vec<Vec<f64>> = (0..bs)
        .map(|_| (0..n).map(|i| if p.free[i] { rng.gen::<f64>() - 0.5 } else { 0.0 }).collect())
        .collect();
    let max_basis = max_basis.min(nfree);
    let mut last_res = vec![];
    loop {
        let mut next = vec![];
        for x in &block {
            let mut y = vec![0.0; n];
            (p.shifted_solve)(x, &mut y)?;
            for i in 0..n {
                if !p.free[i] {
                    y[i] = 0.0;
                }
            }
            let nrm0 = wnorm_free(&y, p.w);
            for _ in 0..2 {
                for b in &basis {
                    let c = linalg::wdot(&y, b, p.w);
                    for i in 0..n {
                        y[i] -= c * b[i];
                    }
                }
            }
            let nrm = wnorm_free(&y, p.w);
            if nrm <= 1e-10 * nrm0 || nrm == 0.0 {
                continue;
            }
            y.iter_mut().for_each(|v| *v /= nrm);
            let mut ay = vec![0.0; n];
            (p.apply)(&y, &mut ay);
            basis.push(y.clone());
            abasis.push(ay);
            next.push(y);
            if basis.len() >= max_basis {
                break;
            }
        }
        let m = basis.len();
        if m < k {
            if next.is_empty() {
                return numeric("Krylov basis exhausted before k vectors");
            }
            block = next;
            continue;
        }
        let mut h = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = linalg::wdot(&basis[i], &abasis[j], p.w);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let (vals, vecs) = linalg::sym_eig(h);
        let mut ritz = vec![];
        let mut res = vec![];
        for c in 0..k {
            let mut v = vec![0.0; n];
            let mut av = vec![0.0; n];
            for j in 0..m {
                let s = vecs[(j, c)];
                for i in 0..n {
                    v[i] += s * basis[j][i];
                    av[i] += s * abasis[j][i];
                }
            }
            let r: Vec<f64> = (0..n).map(|i| av[i] - vals[c] * v[i]).collect();
            res.push(wnorm_free(&r, p.w) / wnorm_free(&v, p.w));
            ritz.push(v);
        }
        last_res.clone_from(&res);
        if res.iter().all(|&r| r <= tol) {
            return Ok((vals[..k].to_vec(), ritz, res, m));
        }
        if m >= max_basis || next.is_empty() {
            return numeric(format!("eigen-iteration stalled at basis size {m}; Ritz residuals {last_res:?}"));
        }
        block = next;
    }
}

fn dense_pairs(field: &PhaseField, k: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let m = &field.mesh;
    let n = m.len();
    let free: Vec<usize> = (0..n).filter(|&i| !m.fixed[i]).collect();
    let nf = free.len();
    let mut a = DMatrix::zeros(nf, nf);
    let mut e = vec![0.0; n];
    for (c, &j) in free.iter().enumerate() {
        e[j] = 1.0;
        let col = second_variation_apply(field, &e);
        e[j] = 0.0;
        for (r, &i) in free.iter().enumerate() {
            a[(r, c)] = col[i] * (m.w[i] / m.w[j]).sqrt();
        }
    }
    let sym = (&a + a.transpose()) * 0.5;
    let (vals, vecs) = linalg::sym_eig(sym);
    let k = k.min(nf);
    let mut out = vec![];
    let mut res = vec![];
    for c in 0..k {
        let mut v = vec![0.0; n];
        for (r, &i) in free.iter().enumerate() {
            v[i] = vecs[(r, c)] / m.w[i].sqrt();
        }
        let av = second_variation_apply(field, &v);
        let rr: Vec<f64> = (0..n).map(|i| av[i] - vals[c] * v[i]).collect();
        res.push(linalg::wnorm(&rr, &m.w) / linalg::wnorm(&v, &m.w));
        out.push(v);
    }
    (vals[..k].to_vec(), out, res)
}

/// Lowest k eigenpairs of the second variation, with index and nullity under `zero_tol`.
pub fn morse_index(field: &PhaseField, k: usize, zero_tol: f64) -> Result<SpectrumReport> {
    morse_index_with(field, k, zero_tol, 400)
}

/// As `morse_index`, using dense eigendecomposition up to `dense_limit` free nodes.
pub fn morse_index_with(field: &PhaseField, k: usize, zero_tol: f64, dense_limit: usize) -> Result<SpectrumReport> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let m = &field.mesh;
    let nfree = m.fixed.iter().filter(|f| !**f).count();
    if nfree <= dense_limit {
        let (vals, vecs, res) = dense_pairs(field, k);
        return Ok(SpectrumReport::from_pairs(vals, vecs, res, zero_tol, "dense", nfree));
    }
    let eps = field.eps;
    let d2: Vec<f64> = field.u.iter().map(|&u| field.well.d2w(u) / eps).collect();
    let shift = d2.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0 / eps;
    let dshift: Vec<f64> = d2.iter().map(|d| d - shift).collect();
    let wts = m.free_weights();
    let free: Vec<bool> = m.fixed.iter().map(|f| !f).collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        let r = second_variation_apply(field, x);
        y.copy_from_slice(&r);
    };
    let solve = |b: &[f64], x: &mut [f64]| -> Result<()> {
        x.iter_mut().for_each(|v| *v = 0.0);
        m.solve_spd(eps, &dshift, b, x, 1e-12).map(|_| ())
    };
    let p = EigenProblem { n: m.len(), w: &wts, free: &free, apply: &apply, shifted_solve: &solve, shift };
    let (vals, vecs, res, basis) = lowest_eigenpairs(&p, k, 1e-8, 0x5eed, 1500)?;
    Ok(SpectrumReport::from_pairs(vals, vecs, res, zero_tol, "block shift-invert Krylov", basis))
}

/// Lowest k eigenvalues of the Jacobi operator of the leaf z = `leaf` (dense).
pub fn surface_index(metric: &WarpedMetric, n: usize, leaf: f64, k: usize, zero_tol: f64) -> Result<SpectrumReport> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let j = geometry::jacobi_operator(metric, n, leaf);
    let (vals, vecs) = j.eigen();
    let w = j.weights();
    let k = k.min(vals.len());
    let res = (0..k)
        .map(|c| {
            let jv = j.apply(&vecs[c]);
            let r: Vec<f64> = jv.iter().zip(&vecs[c]).map(|(a, b)| a - vals[c] * b).collect();
            let r: Vec<f64> = if j.periodic { r } else { r.iter().enumerate().map(|(i, x)| if i == 0 || i + 1 == n { 0.0 } else { *x }).collect() };
            linalg::wnorm(&r, &w) / linalg::wnorm(&vecs[c], &w)
        })
        .collect();
    Ok(SpectrumReport::from_pairs(vals[..k].to_vec(), vecs[..k].to_vec(), res, zero_tol, "dense", n))
}

/// Index plus nullity of several leaves together (the limit surface may be disconnected).
pub fn surface_index_union(metric: &WarpedMetric, n: usize, leaves: &[f64], k: usize, zero_tol: f64) -> Result<(usize, usize)> {
    let mut ind = 0;
    let mut nul = 0;
    for &l in leaves {
        let r = surface_index(metric, n, l, k, zero_tol)?;
        ind += r.index;
        nul += r.nullity;
    }
    Ok((ind, nul))
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftedForm {
    pub q_u: f64,
    /// eps^2 h0 times the Jacobi form of f on the leaf.
    pub q_sigma_scaled: f64,
    pub ratio: f64,
}

/// Compares Q_u(f Hbar'((z - f_1 - h)/eps), same) with eps^2 h0 Q_Sigma(f, f).
pub fn lifted_form(field: &PhaseField, stack: &LayerStack, trunc: &TruncatedProfile, f: &[f64]) -> Result<LiftedForm> {
    if stack.q != 1 {
        return invalid(format!("lifted_form needs a single sheet, got {}", stack.q));
    }
    let m = &field.mesh;
    if f.len() != m.ny {
        return invalid("base function has the wrong length");
    }
    let eps = field.eps;
    let mut psi = vec![0.0; m.len()];
    for i in 0..m.ny {
        for j in 0..m.nz {
            let t = (m.z[j] - stack.f[0][i] - stack.h[0][i]) / eps;
            psi[m.idx(i, j)] = f[i] * trunc.eval(t)[1];
        }
    }
    let q_u = quadratic_form(field, &psi);
    let leaf = stack.f[0].iter().sum::<f64>() / m.ny as f64;
    let jop = geometry::jacobi_operator(&m.metric, m.ny, leaf);
    let jf = jop.apply(f);
    let qs = if jop.periodic {
        linalg::wdot(&jf, f, &jop.weights())
    } else {
        (1..m.ny - 1).map(|i| jf[i] * f[i] * jop.weights()[i]).sum()
    };
    let h0 = trunc.base.h0;
    let q_sigma_scaled = eps * eps * h0 * qs;
    let ratio = if q_sigma_scaled.abs() > 1e-300 { q_u / q_sigma_scaled } else { f64::NAN };
    Ok(LiftedForm { q_u, q_sigma_scaled, ratio })
}

/// Projection onto the heteroclinic direction along z-columns centred at `center`.
#[derive(Debug, Clone)]
pub struct Projector {
    /// H'((z_j - c)/eps) per node.
    pub hp: Vec<Vec<f64>>,
    pub wz: Vec<f64>,
    /// Discrete eps h0 per column.
    pub norm: Vec<f64>,
}

impl Projector {
    pub fn new(z: &[f64], wz: &[f64], center: &[f64], profile: &Profile, eps: f64) -> Projector {
        let hp: Vec<Vec<f64>> = center.iter().map(|&c| z.iter().map(|&zz| profile.deriv((zz - c) / eps)).collect()).collect();
        let norm = hp.iter().map(|col| col.iter().zip(wz).map(|(h, w)| h * h * w).sum()).collect();
        Projector { hp, wz: wz.to_vec(), norm }
    }

    /// Pi_eps v per column: int v H' dz / int H'^2 dz.
    pub fn pi(&self, v: &[f64]) -> Vec<f64> {
        let nz = self.wz.len();
        self.hp
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let s: f64 = (0..nz).map(|j| v[i * nz + j] * col[j] * self.wz[j]).sum();
                s / self.norm[i]
            })
            .collect()
    }

    /// v - Pi_eps(v) H'.
    pub fn perp(&self, v: &[f64]) -> Vec<f64> {
        let nz = self.wz.len();
        let p = self.pi(v);
        let mut out = v.to_vec();
        for (i, col) in self.hp.iter().enumerate() {
            for j in 0..nz {
                out[i * nz + j] -= p[i] * col[j];
            }
        }
        out
    }
}

/// (Pi_eps v, Pi_perp v) for a slab function on the mesh, columns centred at z = 0.
pub fn project(mesh: &Mesh, v: &[f64], profile: &Profile, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let wz = trapezoid_weights(mesh);
    let p = Projector::new(&mesh.z, &wz, &vec![0.0; mesh.ny], profile, eps);
    (p.pi(v), p.perp(v))
}

pub(crate) fn trapezoid_weights(mesh: &Mesh) -> Vec<f64> {
    (0..mesh.nz)
        .map(|j| if !mesh.periodic_z && (j == 0 || j + 1 == mesh.nz) { 0.5 * mesh.hz } else { mesh.hz })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityTerms {
    pub sheet: usize,
    pub lhs: f64,
    /// int eps^2 |grad zeta|^2 over the sheet.
    pub gradient: f64,
    /// int zeta^2 over the sheet.
    pub l2: f64,
    /// eps^2 + sum_m sup exp(-sqrt2 (1 + kappa) D_m / eps).
    pub error_coefficient: f64,
    /// Smallest c' making lhs <= c' (gradient + error_coefficient l2).
    pub required_c: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityCheck {
    pub terms: Vec<StabilityTerms>,
    pub c_prime: f64,
    pub rhs: Vec<f64>,
    /// min over sheets of rhs - lhs.
    pub margin: f64,
    pub satisfied: bool,
}

/// Terms of the sharpened Toda stability inequality for a base test function zeta.
pub fn stability_terms(field: &PhaseField, stack: &LayerStack, zeta: &[f64], kappa: f64) -> Result<Vec<StabilityTerms>> {
    let m = &field.mesh;
    if stack.q < 2 {
        return invalid("stability inequality needs at least two sheets");
    }
    if zeta.len() != m.ny {
        return invalid("zeta has the wrong length");
    }
    if !m.metric.base.is_periodic() && (zeta[0] != 0.0 || zeta[m.ny - 1] != 0.0) {
        return invalid("zeta must vanish on the base boundary");
    }
    if zeta.iter().any(|v| !v.is_finite()) {
        return invalid("zeta must be finite");
    }
    let eps = field.eps;
    let s2 = std::f64::consts::SQRT_2;
    let q = stack.q;
    let ny = m.ny;
    let py = m.metric.base.is_periodic();
    let dz: Vec<f64> = if py {
        geometry::spectral_derivative(zeta, m.metric.base.length())
    } else {
        (0..ny).map(|i| { let (a, b) = (i.saturating_sub(1), (i + 1).min(ny - 1)); (zeta[b] - zeta[a]) / ((b - a) as f64 * m.hy) }).collect()
    };
    let gap = |l: usize, i: usize| -> f64 { stack.f[l + 1][i] - stack.f[l][i] };
    let mut ecoef = eps * eps;
    for l in 0..q - 1 {
        let dmin = (0..ny).map(|i| gap(l, i)).fold(f64::INFINITY, f64::min);
        ecoef += (-s2 * (1.0 + kappa) * dmin / eps).exp();
    }
    let mut out = vec![];
    for l in 0..q {
        let fl = &stack.f[l];
        let fd: Vec<f64> = if py {
            geometry::spectral_derivative(fl, m.metric.base.length())
        } else {
            (0..ny).map(|i| { let (a, b) = (i.saturating_sub(1), (i + 1).min(ny - 1)); (fl[b] - fl[a]) / ((b - a) as f64 * m.hy) }).collect()
        };
        let (mut lhs, mut grad, mut l2) = (0.0, 0.0, 0.0);
        for i in 0..ny {
            let wq = if !py && (i == 0 || i + 1 == ny) { 0.5 } else { 1.0 } * m.hy;
            let a = m.metric.a(m.y[i], fl[i]);
            let g = a * a + fd[i] * fd[i];
            let ds = g.sqrt() * wq;
            let mut ex = 0.0;
            if l > 0 {
                ex += (-s2 * gap(l - 1, i).abs() / eps).exp();
            }
            if l + 1 < q {
                ex += (-s2 * gap(l, i).abs() / eps).exp();
            }
            lhs += zeta[i] * zeta[i] * ex * ds;
            grad += eps * eps * dz[i] * dz[i] / g * ds;
            l2 += zeta[i] * zeta[i] * ds;
        }
        let denom = grad + ecoef * l2;
        let required_c = if denom > 0.0 { lhs / denom } else { 0.0 };
        out.push(StabilityTerms { sheet: l, lhs, gradient: grad, l2, error_coefficient: ecoef, required_c });
    }
    Ok(out)
}

/// Evaluates both sides of the inequality with the calibrated constant c'.
pub fn stability_check(field: &PhaseField, stack: &LayerStack, zeta: &[f64], kappa: f64, c_prime: f64) -> Result<StabilityCheck> {
    let terms = stability_terms(field, stack, zeta, kappa)?;
    let rhs: Vec<f64> = terms.iter().map(|t| c_prime * (t.gradient + t.error_coefficient * t.l2)).collect();
    let margin = terms.iter().zip(&rhs).map(|(t, r)| r - t.lhs).fold(f64::INFINITY, f64::min);
    Ok(StabilityCheck { satisfied: margin >= 0.0, terms, c_prime, rhs, margin })
}

/// Smooth bump (1 - s^2)^3 on |y - c| < r (periodic distance on closed bases).
pub fn bump(mesh: &Mesh, center: f64, radius: f64, amp: f64) -> Vec<f64> {
    let len = mesh.metric.base.length();
    mesh.y
        .iter()
        .map(|&y| {
            let mut d = y - center;
            if mesh.metric.base.is_periodic() {
                d -= len * (d / len).round();
            }
            let s = d / radius;
            if s.abs() < 1.0 {
                amp * (1.0 - s * s).powi(3)
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::nodal_layers;
    use crate::geometry::{Base, Family};
    use crate::heteroclinic::{solve_profile, truncate};
    use crate::potential::DoubleWell;
    use std::sync::Arc;

    fn torus(ny: usize, nz: usize, len: f64) -> Arc<Mesh> {
        let m = WarpedMetric::flat(Base::Periodic { length: len }, (-1.0, 1.0));
        Arc::new(Mesh::new(&m, ny, (-1.0, 1.0), nz, true).unwrap())
    }

    #[test]
    fn constant_states() {
        let eps = 0.2;
        let mesh = torus(8, 80, 1.0);
        let w = DoubleWell::standard();
        let one = PhaseField::from_fn(mesh.clone(), eps, w.clone(), |_, _| 1.0).unwrap();
        let zeta: Vec<f64> = (0..mesh.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let az = second_variation_apply(&one, &zeta);
        let lap = mesh.laplacian(&zeta);
        for k in 0..zeta.len() {
            assert!((az[k] - (-eps * lap[k] + 2.0 / eps * zeta[k])).abs() < 1e-9);
        }
        let c = vec![0.7; mesh.len()];
        let vol: f64 = mesh.w.iter().sum();
        assert!((quadratic_form(&one, &c) - 2.0 / eps * vol * 0.49).abs() < 1e-10);
        let direct = eps * mesh.dirichlet_sum(&zeta) + zeta.iter().zip(&mesh.w).map(|(z, w)| w * 2.0 * z * z).sum::<f64>() / eps;
        assert!((quadratic_form(&one, &zeta) - direct).abs() < 1e-10 * direct);
        let r = morse_index(&one, 5, default_zero_tol(eps)).unwrap();
        assert_eq!(r.index, 0);
        assert_eq!(r.nullity, 0);
        assert!((r.eigenvalues[0] - 2.0 / eps).abs() < 1e-9);
        let zero = PhaseField::from_fn(mesh, 1.0, w, |_, _| 0.0);
        assert!(zero.is_err() || morse_index(&zero.unwrap(), 1, 1e-6).unwrap().index >= 1);
    }

    #[test]
    fn krylov_matches_dense() {
        let eps = 0.1;
        let mesh = torus(4, 160, 1.0);
        let p = solve_profile(&DoubleWell::standard(), 16.0, 4096).unwrap();
        let f = PhaseField::from_fn(mesh.clone(), eps, DoubleWell::standard(), |y, z| {
            p.value((z - 0.05 * (2.0 * std::f64::consts::PI * y).sin()) / eps) * (1.0 - 0.3 * z * z)
        })
        .unwrap();
        let r = morse_index_with(&f, 6, default_zero_tol(eps), 0).unwrap();
        assert!(r.solver.contains("Krylov"));
        assert!(r.residuals.iter().all(|&x| x <= 1e-8));
        let (dv, _, _) = dense_pairs(&f, 6);
        for (a, b) in r.eigenvalues.iter().zip(&dv) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!(r.eigenvalues.windows(2).all(|x| x[0] <= x[1] + 1e-12));
    }

    #[test]
    fn surface_spectra() {
        let m = WarpedMetric::flat(Base::Periodic { length: 2.0 }, (-1.0, 1.0));
        let r = surface_index(&m, 64, 0.0, 4, 1e-9).unwrap();
        assert_eq!((r.index, r.nullity), (0, 1));
        let k = std::f64::consts::PI;
        let fd = 2.0 * (1.0 - (k * 2.0 / 64.0).cos()) / (2.0 / 64.0f64).powi(2);
        assert!((r.eigenvalues[1] - fd).abs() < 1e-9);
        let c = WarpedMetric::new(Family::ConstantPotential { c: 1.5 }, Base::Periodic { length: 2.0 }, (-1.0, 1.0)).unwrap();
        let r = surface_index(&c, 64, 0.0, 3, 1e-9).unwrap();
        assert!((r.eigenvalues[0] + 1.5).abs() < 1e-10);
        assert!(r.index >= 1);
    }

    #[test]
    fn projections() {
        let eps = 0.05;
        let mesh = Arc::new(
            Mesh::new(&WarpedMetric::flat(Base::Periodic { length: 1.0 }, (-1.0, 1.0)), 8, (-1.0, 1.0), 401, false).unwrap(),
        );
        let p = solve_profile(&DoubleWell::standard(), 16.0, 4096).unwrap();
        let mut v = vec![0.0; mesh.len()];
        let mut odd = vec![0.0; mesh.len()];
        for i in 0..8 {
            for j in 0..401 {
                let z = mesh.z[j];
                let hp = p.deriv(z / eps);
                v[mesh.idx(i, j)] = (1.0 + i as f64) * hp + 0.3 * z * hp;
                odd[mesh.idx(i, j)] = z * (-z * z / 0.01).exp();
            }
        }
        let (pv, perp) = project(&mesh, &v, &p, eps);
        for i in 0..8 {
            assert!((pv[i] - (1.0 + i as f64)).abs() < 1e-12);
        }
        let (pp, _) = project(&mesh, &perp, &p, eps);
        assert!(pp.iter().all(|x| x.abs() < 1e-12));
        let (po, _) = project(&mesh, &odd, &p, eps);
        assert!(po.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn lifted_form_scales() {
        let eps = 0.05;
        let mesh = Arc::new(
            Mesh::new(&WarpedMetric::flat(Base::Periodic { length: 1.0 }, (-1.0, 1.0)), 16, (-1.0, 1.0), 401, false).unwrap(),
        );
        let p = Arc::new(Profile::for_epsilon(&DoubleWell::standard(), eps).unwrap());
        let tp = truncate(p.clone(), 3.0 * eps.ln().abs()).unwrap();
        let field = PhaseField::from_fn(mesh.clone(), eps, DoubleWell::standard(), |_, z| p.value(z / eps)).unwrap();
        let (field, _) = field.newton_solve(1e-11, 20).unwrap();
        let st = nodal_layers(&field).unwrap();
        let f: Vec<f64> = mesh.y.iter().map(|y| (2.0 * std::f64::consts::PI * y).cos()).collect();
        let a = lifted_form(&field, &st, &tp, &f).unwrap();
        let f2: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        let b = lifted_form(&field, &st, &tp, &f2).unwrap();
        assert!((b.q_u / a.q_u - 4.0).abs() < 1e-12);
        assert!((b.q_sigma_scaled / a.q_sigma_scaled - 4.0).abs() < 1e-12);
        assert!((a.ratio - 1.0).abs() < 0.02, "{}", a.ratio);
        let c = lifted_form(&field, &st, &tp, &vec![1.0; 16]).unwrap();
        assert!(c.q_u.abs() < 1e-2 * eps * eps * p.h0, "{}", c.q_u);
    }
}
