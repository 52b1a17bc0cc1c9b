//! Reduced Jacobi-Toda sheet system: forcing, equilibria, the separation law, Jacobi-field extraction.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, numeric, LabError, Result};
use crate::field::LayerStack;
use crate::geometry::{self, GraphSurface, WarpedMetric};
use crate::linalg;

/// Sheets over the base with the reduced-system data.
#[derive(Debug, Clone)]
pub struct TodaConfig {
    pub metric: WarpedMetric,
    /// f[l][i]: height of sheet l at base node i.
    pub f: Vec<Vec<f64>>,
    pub eps: f64,
    /// |sff|^2 + Ric(dz, dz) on the base nodes.
    pub v: Vec<f64>,
    pub a0: f64,
    pub h0: f64,
}

impl TodaConfig {
    pub fn new(metric: WarpedMetric, f: Vec<Vec<f64>>, eps: f64, a0: f64, h0: f64) -> Result<TodaConfig> {
        if f.is_empty() {
            return invalid("at least one sheet required");
        }
        let n = f[0].len();
        if n < 4 || f.iter().any(|s| s.len() != n) {
            return invalid("sheets must share a base grid of at least 4 nodes");
        }
        for l in 1..f.len() {
            if (0..n).any(|i| f[l][i] <= f[l - 1][i]) {
                return invalid(format!("sheets {l} and {} are not ordered", l + 1));
            }
        }
        let y = metric.base.nodes(n);
        let v: Vec<f64> = y.iter().map(|&yy| metric.potential(yy, 0.0)).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return invalid("potential is not finite");
        }
        Ok(TodaConfig { metric, f, eps, v, a0, h0 })
    }

    pub fn q(&self) -> usize {
        self.f.len()
    }

    pub fn n(&self) -> usize {
        self.f[0].len()
    }

    /// Interaction coefficient 4 A0^2 / h0.
    pub fn k(&self) -> f64 {
        4.0 * self.a0 * self.a0 / self.h0
    }

    pub fn gaps(&self) -> Vec<Vec<f64>> {
        (0..self.q() - 1).map(|l| self.f[l + 1].iter().zip(&self.f[l]).map(|(a, b)| a - b).collect()).collect()
    }
}

/// Per-sheet forcing (4 A0^2 / h0)(exp(-sqrt2 |d_{l-1}|/eps) - exp(-sqrt2 |d_{l+1}|/eps)).
pub fn toda_rhs(c: &TodaConfig) -> Vec<Vec<f64>> {
    let (q, n, k) = (c.q(), c.n(), c.k());
    let e = |d: f64| (-SQRT_2 * d.abs() / c.eps).exp();
    (0..q)
        .map(|l| {
            (0..n)
                .map(|i| {
                    let below = if l > 0 { e(c.f[l][i] - c.f[l - 1][i]) } else { 0.0 };
                    let above = if l + 1 < q { e(c.f[l + 1][i] - c.f[l][i]) } else { 0.0 };
                    k * (below - above)
                })
                .collect()
        })
        .collect()
}

/// Scalar balance eps lambda D = 2 K exp(-sqrt2 D / eps) solved by bisection in s = D / eps.
pub fn scalar_gap(lambda: f64, eps: f64, a0: f64, h0: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(LabError::NoEquilibrium(format!("lambda = {lambda} <= 0: repulsion is unbalanced")));
    }
    let k2 = 8.0 * a0 * a0 / h0;
    let g = |s: f64| eps * eps * lambda * s - k2 * (-SQRT_2 * s).exp();
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return numeric("scalar balance: no bracket");
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi) * eps)
}

/// Leaf Laplacian (1/a)(f'/a)' at height `z` on the base nodes; interval ends give 0.
fn leaf_laplacian_coeffs(metric: &WarpedMetric, y: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let h = metric.base.spacing(n);
    let a: Vec<f64> = (0..n).map(|i| metric.a(y[i], z[i])).collect();
    let a_half: Vec<f64> = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            metric.a(y[i] + 0.5 * h, 0.5 * (z[i] + z[j]))
        })
        .collect();
    (a, a_half)
}

/// Heights of sheets built from gaps, centred on z = 0.
fn sheet_positions(g: &[Vec<f64>], i: usize) -> Vec<f64> {
    let q = g.len() + 1;
    let mut pos = vec![0.0; q];
    for l in 1..q {
        pos[l] = pos[l - 1] + g[l - 1][i];
    }
    let mean = pos.iter().sum::<f64>() / q as f64;
    pos.iter().map(|p| p - mean).collect()
}

fn pair_midpoint(g: &[Vec<f64>], l: usize, i: usize) -> f64 {
    let p = sheet_positions(g, i);
    0.5 * (p[l] + p[l + 1])
}

struct GapSystem<'a> {
    c: &'a TodaConfig,
    y: Vec<f64>,
    h: f64,
    periodic: bool,
}

impl GapSystem<'_> {
    /// Residual eps (Lap g + V g) - K (2 e(g_l) - e(g_{l-1}) - e(g_{l+1})) and its Jacobian.
    fn eval(&self, g: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
        let c = self.c;
        let (nq, n) = (g.len(), self.y.len());
        let k = c.k();
        let eps = c.eps;
        let e = |d: f64| (-SQRT_2 * d / eps).exp();
        let de = |d: f64| -SQRT_2 / eps * (-SQRT_2 * d / eps).exp();
        let mut r = vec![0.0; nq * n];
        let mut jac = DMatrix::zeros(nq * n, nq * n);
        for l in 0..nq {
            // operator refreshed at the current mid-surface of the pair
            let mid: Vec<f64> = (0..n).map(|i| pair_midpoint(g, l, i)).collect();
            let (a, ah) = leaf_laplacian_coeffs(&c.metric, &self.y, &mid);
            for i in 0..n {
                let row = l * n + i;
                if !self.periodic && (i == 0 || i == n - 1) {
                    r[row] = 0.0;
                    jac[(row, row)] = 1.0;
                    continue;
                }
                let (im, ip) = ((i + n - 1) % n, (i + 1) % n);
                let cl = 1.0 / (ah[im] * a[i] * self.h * self.h);
                let cr = 1.0 / (ah[i] * a[i] * self.h * self.h);
                let lap = cr * (g[l][ip] - g[l][i]) - cl * (g[l][i] - g[l][im]);
                let mut force = 2.0 * e(g[l][i]);
                jac[(row, row)] += eps * (-cl - cr + c.v[i]) - k * 2.0 * de(g[l][i]);
                jac[(row, l * n + ip)] += eps * cr;
                jac[(row, l * n + im)] += eps * cl;
                if l > 0 {
                    force -= e(g[l - 1][i]);
                    jac[(row, (l - 1) * n + i)] += k * de(g[l - 1][i]);
                }
                if l + 1 < nq {
                    force -= e(g[l + 1][i]);
                    jac[(row, (l + 1) * n + i)] += k * de(g[l + 1][i]);
                }
                r[row] = eps * (lap + c.v[i] * g[l][i]) - k * force;
            }
        }
        (r, jac)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub iterations: usize,
    pub residual: f64,
    pub min_gap: f64,
    pub max_gap: f64,
    /// Size of the dropped next-nearest interactions relative to the nearest ones.
    pub next_nearest_ratio: f64,
}

/// Newton solve of the gap equations; sheets are re-centred symmetrically about the leaf z = 0.
pub fn solve_equilibrium(c: &TodaConfig, tol: f64) -> Result<(TodaConfig, EquilibriumReport)> {
    let (q, n) = (c.q(), c.n());
    if q == 1 {
        return Ok((c.clone(), EquilibriumReport { iterations: 0, residual: 0.0, min_gap: f64::NAN, max_gap: f64::NAN, next_nearest_ratio: 0.0 }));
    }
    if c.v.iter().all(|&v| v <= 0.0) {
        return Err(LabError::NoEquilibrium("V <= 0 everywhere: attraction between sheets is unbalanced".into()));
    }
    let periodic = c.metric.base.is_periodic();
    let sys = GapSystem { c, y: c.metric.base.nodes(n), h: c.metric.base.spacing(n), periodic };
    // initial gaps: amplitude-balanced multiple of the positive ground state of Lap + V
    let jop = geometry::jacobi_operator(&c.metric, n, 0.0);
    let (vals, vecs) = jop.eigen();
    let mu = -vals[0];
    if !(mu > 0.0) {
        return Err(LabError::NoEquilibrium(format!("Lap + V has no positive eigenvalue (top {mu:.3e})")));
    }
    let psi0 = &vecs[0];
    let sgn = if psi0.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let smax = psi0.iter().map(|v| sgn * v).fold(0.0, f64::max);
    let psi: Vec<f64> = psi0.iter().map(|v| (sgn * v / smax).max(1e-3)).collect();
    let wts = jop.weights();
    let bal = |d: f64| {
        let lhs: f64 = (0..n).map(|i| c.eps * mu * d * psi[i] * psi[i] * wts[i]).sum();
        let rhs: f64 = (0..n).map(|i| 2.0 * c.k() * (-SQRT_2 * d * psi[i] / c.eps).exp() * psi[i] * wts[i]).sum();
        lhs - rhs
    };
    let (mut lo, mut hi) = (0.0, c.eps);
    while bal(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bal(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d0 = 0.5 * (lo + hi);
    let gaps0 = c.gaps();
    let mut g: Vec<Vec<f64>> = (0..q - 1)
        .map(|l| (0..n).map(|i| if !periodic && (i == 0 || i == n - 1) { gaps0[l][i] } else { d0 * psi[i] }).collect())
        .collect();
    let nrm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (mut r, mut jac) = sys.eval(&g);
    let mut res = nrm(&r);
    let mut it = 0;
    while res > tol {
        if it >= 100 {
            return numeric(format!("Toda Newton did not converge (residual {res:.3e})"));
        }
        it += 1;
        let rhs = DVector::from_vec(r.iter().map(|v| -v).collect());
        let step = jac.clone().lu().solve(&rhs).ok_or_else(|| LabError::NumericFailure("singular Toda Jacobian".into()))?;
        let mut lam = 1.0;
        loop {
            let trial: Vec<Vec<f64>> = (0..q - 1).map(|l| (0..n).map(|i| g[l][i] + lam * step[l * n + i]).collect()).collect();
            if trial.iter().flatten().all(|&x| x > 0.0) {
                let (r2, j2) = sys.eval(&trial);
                if nrm(&r2) < res || lam < 1e-4 {
                    g = trial;
                    r = r2;
                    jac = j2;
                    break;
                }
            }
            lam *= 0.5;
            if lam < 1e-8 {
                return numeric("Toda line search failed");
            }
        }
        res = nrm(&r);
    }
    // rebuild sheets about the leaf z = 0
    let mut f = vec![vec![0.0; n]; q];
    for i in 0..n {
        for (l, p) in sheet_positions(&g, i).into_iter().enumerate() {
            f[l][i] = p;
        }
    }
    let min_gap = g.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let max_gap = g.iter().flatten().cloned().fold(0.0, f64::max);
    let next_nearest_ratio = if q >= 3 {
        (0..q - 2)
            .flat_map(|l| (0..n).map(move |i| (l, i)))
            .map(|(l, i)| (-SQRT_2 * g[l + 1][i] / c.eps).exp())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let mut out = c.clone();
    out.f = f;
    Ok((out, EquilibriumReport { iterations: it, residual: res, min_gap, max_gap, next_nearest_ratio }))
}

/// sqrt2 eps |log eps| - (1/sqrt2) eps log|log eps|.
pub fn separation_model(eps: f64) -> f64 {
    let l = eps.ln().abs();
    SQRT_2 * eps * l - eps * l.ln() / SQRT_2
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationRow {
    pub epsilon: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub model: f64,
    pub excess: f64,
    pub excess_over_eps: f64,
    /// exp(-sqrt2 D / eps) / (eps^2 |log eps|).
    pub decay: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationTable {
    pub rows: Vec<SeparationRow>,
    /// Least-squares c in excess = c eps.
    pub c: f64,
    /// Max relative deviation of excess from c eps.
    pub fit_residual: f64,
}

pub fn separation_law(lambda: f64, eps_list: &[f64], a0: f64, h0: f64) -> Result<SeparationTable> {
    if eps_list.len() < 4 {
        return invalid("separation_law needs at least four epsilon values");
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("epsilon list must be strictly decreasing");
    }
    let mut rows = vec![];
    for &eps in eps_list {
        let d = scalar_gap(lambda, eps, a0, h0)?;
        let model = separation_model(eps);
        let excess = d - model;
        rows.push(SeparationRow {
            epsilon: eps,
            d,
            model,
            excess,
            excess_over_eps: excess / eps,
            decay: (-SQRT_2 * d / eps).exp() / (eps * eps * eps.ln().abs()),
        });
    }
    let num: f64 = rows.iter().map(|r| r.excess * r.epsilon).sum();
    let den: f64 = rows.iter().map(|r| r.epsilon * r.epsilon).sum();
    let c = num / den;
    let fit_residual = rows.iter().map(|r| ((r.excess - c * r.epsilon) / r.epsilon).abs()).fold(0.0, f64::max);
    Ok(SeparationTable { rows, c, fit_residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobiRow {
    pub epsilon: f64,
    pub sup_gap: f64,
    pub harnack: f64,
    /// ||J_Sigma fhat|| / ||fhat|| on the leaf.
    pub jacobi_residual: f64,
    /// sup |H| of the sheets over eps |log eps|.
    pub curvature_ratio: f64,
    #[serde(skip)]
    pub fhat: Vec<f64>,
}

/// Normalised gap f2 - f1 of two-sheet stacks and its Jacobi residual on the leaf z = `leaf`.
pub fn extract_jacobi(metric: &WarpedMetric, leaf: f64, items: &[(f64, &LayerStack)]) -> Result<Vec<JacobiRow>> {
    let mut out = vec![];
    for &(eps, st) in items {
        if st.q != 2 {
            return invalid(format!("extract_jacobi needs two sheets, got {}", st.q));
        }
        let f = st.gap(0);
        let n = f.len();
        let sup = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inf = f.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(inf > 0.0) {
            return Err(LabError::Topology("sheets touch".into()));
        }
        let fhat: Vec<f64> = f.iter().map(|v| v / sup).collect();
        let jop = geometry::jacobi_operator(metric, n, leaf);
        let jf = if jop.periodic { jop.apply_spectral(&fhat) } else { jop.apply(&fhat) };
        let w = jop.weights();
        let (num, den): (f64, f64) = if jop.periodic {
            (linalg::wdot(&jf, &jf, &w), linalg::wdot(&fhat, &fhat, &w))
        } else {
            (1..n - 1).fold((0.0, 0.0), |(a, b), i| (a + jf[i] * jf[i] * w[i], b + fhat[i] * fhat[i] * w[i]))
        };
        let mut hmax = 0.0f64;
        for sheet in &st.f {
            let h = geometry::graph_mean_curvature(metric, &GraphSurface::new(metric, sheet.clone()))?;
            let range = if jop.periodic { 0..n } else { 1..n - 1 };
            hmax = range.map(|i| h[i].abs()).fold(hmax, f64::max);
        }
        out.push(JacobiRow {
            epsilon: eps,
            sup_gap: sup,
            harnack: sup / inf,
            jacobi_residual: (num / den).sqrt(),
            curvature_ratio: hmax / (eps * eps.ln().abs()),
            fhat,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GapOperatorCheck {
    /// sup |H[f2] - H[f1] - L(f2 - f1)| with L the averaged linearisation.
    pub averaged_error: f64,
    /// sup |H[f2] - H[f1] + (Lap + V)(f2 - f1)| (leaf Jacobi operator at z = 0).
    pub leaf_error: f64,
    pub sup_difference: f64,
}

/// H[f2] - H[f1] against int_0^1 DH[f1 + t (f2 - f1)] (f2 - f1) dt and against the leaf operator.
pub fn gap_operator_check(metric: &WarpedMetric, f1: &[f64], f2: &[f64]) -> Result<GapOperatorCheck> {
    if !metric.base.is_periodic() {
        return invalid("gap operator check runs on closed bases");
    }
    let n = f1.len();
    let hm = |f: &[f64]| geometry::graph_mean_curvature(metric, &GraphSurface::new(metric, f.to_vec()));
    let h1 = hm(f1)?;
    let h2 = hm(f2)?;
    let d: Vec<f64> = f2.iter().zip(f1).map(|(a, b)| a - b).collect();
    // five-point Gauss-Legendre in t, centred differences in the direction d
    let nodes = [
        (0.046_910_077_030_668, 0.118_463_442_528_095),
        (0.230_765_344_947_158, 0.239_314_335_249_683),
        (0.5, 0.284_444_444_444_444),
        (0.769_234_655_052_842, 0.239_314_335_249_683),
        (0.953_089_922_969_332, 0.118_463_442_528_095),
    ];
    let delta = 1e-5;
    let mut avg = vec![0.0; n];
    for &(t, wt) in &nodes {
        let fp: Vec<f64> = (0..n).map(|i| f1[i] + (t + delta) * d[i]).collect();
        let fm: Vec<f64> = (0..n).map(|i| f1[i] + (t - delta) * d[i]).collect();
        let (hp, hmn) = (hm(&fp)?, hm(&fm)?);
        for i in 0..n {
            avg[i] += wt * (hp[i] - hmn[i]) / (2.0 * delta);
        }
    }
    let jop = geometry::jacobi_operator(metric, n, 0.0);
    let jd = jop.apply_spectral(&d);
    let mut e1 = 0.0f64;
    let mut e2 = 0.0f64;
    let mut sd = 0.0f64;
    for i in 0..n {
        let diff = h2[i] - h1[i];
        e1 = e1.max((diff - avg[i]).abs());
        e2 = e2.max((diff - jd[i]).abs());
        sd = sd.max(diff.abs());
    }
    Ok(GapOperatorCheck { averaged_error: e1, leaf_error: e2, sup_difference: sd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Base, Beta, Family};

    fn flat() -> WarpedMetric {
        WarpedMetric::flat(Base::Periodic { length: 1.0 }, (-1.0, 1.0))
    }

    const H0: f64 = 0.942_809_041_582_063_4;

    #[test]
    fn forcing_identities() {
        let m = flat();
        let one = TodaConfig::new(m.clone(), vec![vec![0.0; 16]], 0.1, 2.0, H0).unwrap();
        assert!(toda_rhs(&one).iter().flatten().all(|v| *v == 0.0));
        let d = 0.3;
        let two = TodaConfig::new(m.clone(), vec![vec![0.0; 16], vec![d; 16]], 0.1, 2.0, H0).unwrap();
        let r = toda_rhs(&two);
        let expect = 16.0 / H0 * (-SQRT_2 * d / 0.1).exp();
        assert!((r[0][0] + expect).abs() < 1e-15 && (r[1][0] - expect).abs() < 1e-15);
        let three = TodaConfig::new(m, vec![vec![-d; 16], vec![0.0; 16], vec![d; 16]], 0.1, 2.0, H0).unwrap();
        assert!(toda_rhs(&three)[1].iter().all(|v| v.abs() < 1e-15));
        let s: f64 = toda_rhs(&three).iter().flatten().sum();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn scalar_balance_and_equilibrium() {
        let eps = 0.05;
        let lam = 2.0;
        let d = scalar_gap(lam, eps, 2.0, H0).unwrap();
        assert!((eps * lam * d - 32.0 / H0 * (-SQRT_2 * d / eps).exp()).abs() < 1e-12);
        let m = WarpedMetric::new(Family::ConstantPotential { c: lam }, Base::Periodic { length: 1.0 }, (-0.5, 0.5)).unwrap();
        let c = TodaConfig::new(m, vec![vec![-0.1; 12], vec![0.1; 12]], eps, 2.0, H0).unwrap();
        let (eq, rep) = solve_equilibrium(&c, 1e-12).unwrap();
        assert!(rep.residual <= 1e-12);
        for i in 0..12 {
            assert!((eq.f[1][i] - eq.f[0][i] - d).abs() < 1e-10);
        }
        let flat0 = TodaConfig::new(flat(), vec![vec![0.0; 8], vec![0.2; 8]], eps, 2.0, H0).unwrap();
        assert!(matches!(solve_equilibrium(&flat0, 1e-10), Err(LabError::NoEquilibrium(_))));
        assert!(matches!(scalar_gap(0.0, eps, 2.0, H0), Err(LabError::NoEquilibrium(_))));
    }

    #[test]
    fn separation_table() {
        let t = separation_law(1.0, &[0.1, 0.05, 0.025, 0.0125], 2.0, H0).unwrap();
        assert!(t.rows.iter().all(|r| r.excess_over_eps.abs() < 5.0));
        let d1 = scalar_gap(1.0, 0.05, 2.0, H0).unwrap();
        let d2 = scalar_gap(2.0, 0.05, 2.0, H0).unwrap();
        let s = d1 / 0.05;
        let pred = 0.05 / SQRT_2 * 2f64.ln() / (1.0 + 1.0 / (SQRT_2 * s));
        assert!(d2 < d1);
        assert!(((d1 - d2) / pred - 1.0).abs() < 0.05);
        assert!(separation_law(1.0, &[0.1, 0.05, 0.025], 2.0, H0).is_err());
        assert!(separation_law(1.0, &[0.1, 0.05, 0.06, 0.01], 2.0, H0).is_err());
    }

    #[test]
    fn gap_operator_linearises() {
        let m = WarpedMetric::new(
            Family::GaussianWarp { beta: Beta::Cosine { b0: 1.0, b1: 0.5 } },
            Base::Periodic { length: 1.0 },
            (-1.0, 1.0),
        )
        .unwrap();
        let n = 64;
        let y = m.base.nodes(n);
        let tau = 2.0 * std::f64::consts::PI;
        let scale = |s: f64| {
            let f1: Vec<f64> = y.iter().map(|&v| s * (-0.5 + 0.2 * (tau * v).sin())).collect();
            let f2: Vec<f64> = y.iter().map(|&v| s * (0.5 + 0.3 * (tau * v).cos())).collect();
            gap_operator_check(&m, &f1, &f2).unwrap()
        };
        let a = scale(0.02);
        let b = scale(0.01);
        assert!(a.averaged_error < 1e-7 * a.sup_difference.max(1e-3), "{a:?}");
        // the leaf operator is exact to first order: error quadratic in the size
        assert!(b.leaf_error / a.leaf_error < 0.3, "{a:?} {b:?}");
    }
}
