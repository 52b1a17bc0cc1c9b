//! Dirichlet-data barriers on a cylinder D x [-1, 1] around the minimal leaf z = 0:
//! cutoffs, the offset chart D_zeta, the nonlinear functionals, the three-block
//! fixed-point iteration and the ordering check used by sliding arguments.
//!
//! All unknowns live on one tensor grid in chart coordinates (y, t); the physical
//! field is u = U o D_zeta with U = H~ + chi4 v# + vb.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numeric, LabError, Result};
use crate::geometry::{Base, WarpedMetric};
use crate::heteroclinic::{smoothstep, Profile};
use crate::linalg::{self, BandLu};
use crate::potential::DoubleWell;

/// Transition width of the cutoffs, in units of eps^delta.
pub const PAPER_WIDTH: f64 = 0.01;

const SUP_S1: f64 = 1.875;
const SUP_S2: f64 = 5.773_502_691_896_258;
const SUP_S3: f64 = 60.0;

/// Even cutoff chi_j: 1 on |t| <= inner, 0 on |t| >= outer, quintic smoothstep between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub j: u32,
    pub scale: f64,
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    pub fn new(eps: f64, delta_star: f64, j: u32, width: f64) -> Result<Cutoff> {
        if !(1..=5).contains(&j) {
            return invalid(format!("cutoff index {j} outside 1..=5"));
        }
        if !(delta_star > 0.0 && delta_star < 1.0) {
            return invalid("delta_star must lie in (0, 1)");
        }
        if !(eps > 0.0) {
            return invalid("eps must be positive");
        }
        if !(width > 0.0 && 9.0 * width < 1.0) {
            return invalid("cutoff width must lie in (0, 1/9)");
        }
        let scale = eps.powf(delta_star);
        let jf = j as f64;
        Ok(Cutoff {
            j,
            scale,
            inner: scale * (1.0 - (2.0 * jf - 1.0) * width),
            outer: scale * (1.0 - (2.0 * jf - 2.0) * width),
        })
    }

    /// chi and its first three derivatives.
    #[inline]
    pub fn eval(&self, t: f64) -> [f64; 4] {
        let w = self.outer - self.inner;
        let s = smoothstep((t.abs() - self.inner) / w);
        let sg = if t < 0.0 { -1.0 } else { 1.0 };
        [1.0 - s[0], -sg * s[1] / w, -s[2] / (w * w), -sg * s[3] / (w * w * w)]
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.eval(t)[0]
    }

    pub fn sup_derivative(&self) -> f64 {
        SUP_S1 / (self.outer - self.inner)
    }

    /// sum_{k <= order} scale^k sup |chi^(k)|.
    pub fn weighted_norm(&self, order: usize) -> f64 {
        let r = self.scale / (self.outer - self.inner);
        let sups = [1.0, SUP_S1 * r, SUP_S2 * r * r, SUP_S3 * r * r * r];
        sups.iter().take(order.min(3) + 1).sum()
    }
}

/// chi_j with the transition width used in the construction.
pub fn cutoffs(eps: f64, delta_star: f64, j: u32) -> Result<Cutoff> {
    Cutoff::new(eps, delta_star, j, PAPER_WIDTH)
}

/// D_zeta(y, z) = (y, z - chi2(z) zeta(y)).
#[derive(Debug, Clone, Copy)]
pub struct OffsetMap {
    pub chi2: Cutoff,
}

impl OffsetMap {
    pub fn forward(&self, zeta: f64, z: f64) -> f64 {
        z - self.chi2.value(z) * zeta
    }

    /// Solves z - chi2(z) zeta = t by safeguarded Newton on the bracket [t - |zeta|, t + |zeta|].
    pub fn inverse(&self, zeta: f64, t: f64) -> Result<f64> {
        if zeta == 0.0 {
            return Ok(t);
        }
        if zeta.abs() * self.chi2.sup_derivative() >= 1.0 {
            return invalid(format!("offset {zeta:.3e} makes D_zeta non-injective"));
        }
        let f = |z: f64| {
            let c = self.chi2.eval(z);
            (z - c[0] * zeta - t, 1.0 - c[1] * zeta)
        };
        let (mut lo, mut hi) = (t - zeta.abs(), t + zeta.abs());
        let mut z = t + self.chi2.value(t) * zeta;
        for _ in 0..100 {
            let (g, dg) = f(z);
            if g.abs() <= 1e-15 * (1.0 + t.abs()) {
                return Ok(z);
            }
            if g > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let zn = z - g / dg;
            z = if zn > lo && zn < hi { zn } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-16 * (1.0 + t.abs()) {
                return Ok(z);
            }
        }
        Ok(z)
    }
}

/// Builds D_zeta for the offsets zeta, checking 1 - chi2' zeta > 0.
pub fn offset_map(chi2: Cutoff, zeta: &[f64]) -> Result<OffsetMap> {
    let sup = zeta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if sup * chi2.sup_derivative() >= 1.0 {
        return invalid(format!("sup|zeta| = {sup:.3e} makes D_zeta non-injective"));
    }
    Ok(OffsetMap { chi2 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierConfig {
    pub eps: f64,
    pub delta_star: f64,
    pub alpha: f64,
    /// cutoff transition width in units of eps^delta_star
    pub width: f64,
    /// base interval D
    pub y_range: (f64, f64),
    pub y_cells_per_eps: f64,
    pub z_cells_per_eps: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl BarrierConfig {
    /// Resolved desk-scale defaults: cutoff transitions span several cells and the
    /// truncation window eps^delta is many layer widths.
    pub fn desk(eps: f64) -> BarrierConfig {
        BarrierConfig {
            eps,
            delta_star: 0.1,
            alpha: 0.125,
            width: 1.0 / 12.0,
            y_range: (0.0, 0.5),
            y_cells_per_eps: 5.0,
            z_cells_per_eps: 10.0,
            tol: 1e-11,
            max_iter: 200,
        }
    }
}

/// Chart coefficients of the pulled-back Laplacian Delta_g(v o D) o D^{-1} at every node:
/// [c_yy, c_yt, c_tt, c_y, c_t], plus the physical height of each chart node.
#[derive(Debug, Clone)]
pub struct Chart {
    coef: Vec<[f64; 5]>,
    pub z: Vec<f64>,
}

/// Boundary data (vb^, v#^, zeta^).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryData {
    /// full-grid array; only boundary nodes are read
    pub v_flat_hat: Vec<f64>,
    /// v#^ on the two ends of D, as functions of t
    pub v_sharp_hat: [Vec<f64>; 2],
    pub zeta_hat: [f64; 2],
    pub mu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierState {
    pub v_flat: Vec<f64>,
    pub v_sharp: Vec<f64>,
    pub zeta: Vec<f64>,
    pub updates: Vec<f64>,
    pub contraction: Vec<f64>,
}

/// E(zeta), Q(chi4 v# + vb), M, N on the chart grid (interior nodes).
#[derive(Debug, Clone)]
pub struct Functionals {
    pub e: Vec<f64>,
    pub q: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateNorms {
    pub v_flat: f64,
    pub v_sharp: f64,
    pub zeta: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierSolution {
    pub state: BarrierState,
    pub iterations: usize,
    /// median ratio of successive update norms
    pub contraction_factor: f64,
    /// sup |eps^2 Delta_g u - W'(u)| written in the chart
    pub residual: f64,
    /// same residual recomputed on the physical grid after interpolation
    pub physical_residual: f64,
    pub boundary_error: f64,
    pub projection_residual: f64,
    pub norms: StateNorms,
    /// max |z| / eps over {|u| <= 0.9}
    pub strip_ratio: f64,
    #[serde(skip)]
    pub u_chart: Vec<f64>,
    #[serde(skip)]
    pub u: Vec<f64>,
}

/// Discretised problem: grid, cutoffs, fixed linear operators.
pub struct BarrierProblem {
    pub metric: WarpedMetric,
    pub well: DoubleWell,
    pub profile: Arc<Profile>,
    pub cfg: BarrierConfig,
    pub ny: usize,
    pub nz: usize,
    pub hy: f64,
    pub hz: f64,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub chi: [Cutoff; 5],
    chi_t: [Vec<f64>; 5],
    pub h_eps: Vec<f64>,
    pub h_tilde: Vec<f64>,
    d2w_h: Vec<f64>,
    d2w_ht: Vec<f64>,
    d2w_pm: Vec<f64>,
    /// discrete H'(t / eps): top eigenvector of the t-part of L_eps
    pub psi: Vec<f64>,
    psi_norm2: f64,
    modes: DMatrix<f64>,
    mu: Vec<f64>,
    ay: Vec<[f64; 3]>,
    pot: Vec<f64>,
    lflat: BandLu,
    chart0: Chart,
    /// min over unit f of int (J f)^2
    pub eta: f64,
    pub leaf_mean_curvature: f64,
}

impl BarrierProblem {
    pub fn new(metric: WarpedMetric, well: DoubleWell, profile: Arc<Profile>, cfg: BarrierConfig) -> Result<BarrierProblem> {
        let eps = cfg.eps;
        let (y0, y1) = cfg.y_range;
        if !(y1 > y0) || !(eps > 0.0) {
            return invalid("barrier needs y0 < y1 and eps > 0");
        }
        match metric.base {
            Base::Interval { y0: b0, y1: b1 } if (b0 - y0).abs() < 1e-12 && (b1 - y1).abs() < 1e-12 => {}
            _ => return invalid("barrier metric must live on the interval base y_range"),
        }
        if metric.z_range.0 > -1.0 || metric.z_range.1 < 1.0 {
            return invalid("barrier metric must cover z in [-1, 1]");
        }
        let ny = (((y1 - y0) / eps * cfg.y_cells_per_eps).ceil() as usize + 1).max(5);
        let mut nz = ((2.0 / eps * cfg.z_cells_per_eps).ceil() as usize + 1).max(9);
        if nz % 2 == 0 {
            nz += 1;
        }
        let hy = (y1 - y0) / (ny - 1) as f64;
        let hz = 2.0 / (nz - 1) as f64;
        let y: Vec<f64> = (0..ny).map(|i| y0 + i as f64 * hy).collect();
        let t: Vec<f64> = (0..nz).map(|j| -1.0 + j as f64 * hz).collect();
        let mut chi = [Cutoff::new(eps, cfg.delta_star, 1, cfg.width)?; 5];
        for (j, c) in chi.iter_mut().enumerate() {
            *c = Cutoff::new(eps, cfg.delta_star, j as u32 + 1, cfg.width)?;
        }
        if chi[0].outer >= 1.0 - 2.0 * hz {
            return invalid("truncation window eps^delta does not fit in [-1, 1]");
        }
        let chi_t: [Vec<f64>; 5] = std::array::from_fn(|j| t.iter().map(|&s| chi[j].value(s)).collect());
        let h_eps: Vec<f64> = t.iter().map(|&s| profile.value(s / eps)).collect();
        let h_tilde: Vec<f64> =
            (0..nz).map(|j| chi_t[0][j] * h_eps[j] + (1.0 - chi_t[0][j]) * t[j].signum()).collect();
        let d2w_h: Vec<f64> = h_eps.iter().map(|&v| well.d2w(v)).collect();
        let d2w_ht: Vec<f64> = h_tilde.iter().map(|&v| well.d2w(v)).collect();
        let d2w_pm: Vec<f64> = t.iter().map(|&s| well.d2w(if s < 0.0 { -1.0 } else { 1.0 })).collect();

        // t-part of L_eps on interior t nodes
        let m = nz - 2;
        let e2 = eps * eps;
        let mut zmat = DMatrix::<f64>::zeros(m, m);
        for jj in 0..m {
            zmat[(jj, jj)] = -2.0 * e2 / (hz * hz) - d2w_h[jj + 1];
            if jj + 1 < m {
                zmat[(jj, jj + 1)] = e2 / (hz * hz);
                zmat[(jj + 1, jj)] = e2 / (hz * hz);
            }
        }
        let (mu, modes) = linalg::sym_eig(zmat);
        let mut psi = vec![0.0; nz];
        for jj in 0..m {
            psi[jj + 1] = modes[(jj, m - 1)];
        }
        let hp: Vec<f64> = t.iter().map(|&s| profile.deriv(s / eps)).collect();
        let scale = psi.iter().zip(&hp).map(|(a, b)| a * b).sum::<f64>() / psi.iter().map(|a| a * a).sum::<f64>();
        psi.iter_mut().for_each(|v| *v *= scale);
        let psi_norm2 = psi.iter().map(|a| a * a).sum();

        let mut ay = vec![[0.0; 3]; ny];
        let mut pot = vec![0.0; ny];
        let mut hmax = 0.0f64;
        for i in 0..ny {
            let p = metric.point(y[i], 0.0);
            let ia2 = 1.0 / (p.a * p.a * hy * hy);
            let d1 = p.a_y / (p.a * p.a * p.a * 2.0 * hy);
            ay[i] = [ia2 + d1, -2.0 * ia2, ia2 - d1];
            pot[i] = p.potential();
            hmax = hmax.max(p.h_z().abs());
        }

        let chart0 = Chart::identity(&metric, &y, &t);
        let n = ny * nz;
        let mut lf = BandLu::new(n, ny + 1);
        for j in 0..nz {
            for i in 0..ny {
                let k = j * ny + i;
                if i == 0 || j == 0 || i == ny - 1 || j == nz - 1 {
                    lf.add(k, k, 1.0);
                    continue;
                }
                for (kk, w) in stencil(&chart0.coef[k], k, ny, hy, hz) {
                    lf.add(k, kk, e2 * w);
                }
                lf.add(k, k, -d2w_pm[j]);
            }
        }
        let lflat = lf.factor()?;

        let mut prob = BarrierProblem {
            metric,
            well,
            profile,
            cfg,
            ny,
            nz,
            hy,
            hz,
            y,
            t,
            chi,
            chi_t,
            h_eps,
            h_tilde,
            d2w_h,
            d2w_ht,
            d2w_pm,
            psi,
            psi_norm2,
            modes,
            mu,
            ay,
            pot,
            lflat,
            chart0,
            eta: 0.0,
            leaf_mean_curvature: hmax,
        };
        prob.eta = prob.jacobi_gap();
        Ok(prob)
    }

    pub fn len(&self) -> usize {
        self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = (k % self.ny, k / self.ny);
        i == 0 || j == 0 || i == self.ny - 1 || j == self.nz - 1
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|k| self.is_boundary(k)).collect()
    }

    pub fn offset(&self) -> OffsetMap {
        OffsetMap { chi2: self.chi[1] }
    }

    /// Chart of D_zeta for offsets on the y grid.
    pub fn chart(&self, zeta: &[f64]) -> Result<Chart> {
        if zeta.iter().all(|&v| v == 0.0) {
            return Ok(self.chart0.clone());
        }
        let map = offset_map(self.chi[1], zeta)?;
        let (ny, nz, hy) = (self.ny, self.nz, self.hy);
        let mut coef = vec![[0.0; 5]; ny * nz];
        let mut zs = self.chart0.z.clone();
        for i in 1..ny - 1 {
            let zt = zeta[i];
            let zy = (zeta[i + 1] - zeta[i - 1]) / (2.0 * hy);
            let zyy = (zeta[i + 1] - 2.0 * zeta[i] + zeta[i - 1]) / (hy * hy);
            for j in 1..nz - 1 {
                let k = j * ny + i;
                let z = map.inverse(zt, self.t[j])?;
                if !(-1.0..=1.0).contains(&z) {
                    return Err(LabError::OutOfChart(format!("D_zeta^-1 leaves the cylinder at y = {}", self.y[i])));
                }
                zs[k] = z;
                let c = self.chi[1].eval(z);
                let ty = -c[0] * zy;
                let tyy = -c[0] * zyy;
                let tz = 1.0 - c[1] * zt;
                let tzz = -c[2] * zt;
                coef[k] = pulled_coef(&self.metric, self.y[i], z, ty, tyy, tz, tzz);
            }
        }
        Ok(Chart { coef, z: zs })
    }

    /// Delta_g(v o D) o D^{-1} at interior nodes (zero on the boundary).
    pub fn pulled_laplacian(&self, chart: &Chart, v: &[f64]) -> Vec<f64> {
        let (ny, nz, hy, hz) = (self.ny, self.nz, self.hy, self.hz);
        let mut out = vec![0.0; ny * nz];
        for j in 1..nz - 1 {
            for i in 1..ny - 1 {
                let k = j * ny + i;
                out[k] = stencil(&chart.coef[k], k, ny, hy, hz).iter().map(|&(kk, w)| w * v[kk]).sum();
            }
        }
        out
    }

    /// L_eps v = eps^2 (Delta_{g0} + d_t^2) v - W''(H_eps) v at interior nodes.
    pub fn apply_l(&self, v: &[f64]) -> Vec<f64> {
        let (ny, nz) = (self.ny, self.nz);
        let e2 = self.cfg.eps * self.cfg.eps;
        let iz = 1.0 / (self.hz * self.hz);
        let mut out = vec![0.0; ny * nz];
        for j in 1..nz - 1 {
            for i in 1..ny - 1 {
                let k = j * ny + i;
                let a = &self.ay[i];
                let lap = a[0] * v[k - 1] + a[1] * v[k] + a[2] * v[k + 1] + (v[k + ny] - 2.0 * v[k] + v[k - ny]) * iz;
                out[k] = e2 * lap - self.d2w_h[j] * v[k];
            }
        }
        out
    }

    /// Solves L_eps v = f with v = bc[0], bc[1] on the ends of D and v = 0 at t = +-1.
    pub fn solve_l(&self, f: &[f64], bc: &[Vec<f64>; 2]) -> Vec<f64> {
        let (ny, nz) = (self.ny, self.nz);
        let m = nz - 2;
        let mi = ny - 2;
        let e2 = self.cfg.eps * self.cfg.eps;
        let proj = |g: &dyn Fn(usize) -> f64| -> Vec<f64> {
            (0..m).map(|q| (0..m).map(|jj| self.modes[(jj, q)] * g(jj + 1)).sum()).collect()
        };
        let bl = proj(&|j| bc[0][j]);
        let br = proj(&|j| bc[1][j]);
        let fh: Vec<Vec<f64>> = (1..ny - 1).map(|i| proj(&|j| f[j * ny + i])).collect();
        let mut vh = vec![vec![0.0; m]; mi];
        for q in 0..m {
            let lo: Vec<f64> = (1..ny - 1).map(|i| e2 * self.ay[i][0]).collect();
            let di: Vec<f64> = (1..ny - 1).map(|i| e2 * self.ay[i][1] + self.mu[q]).collect();
            let up: Vec<f64> = (1..ny - 1).map(|i| e2 * self.ay[i][2]).collect();
            let mut r: Vec<f64> = (0..mi).map(|ii| fh[ii][q]).collect();
            r[0] -= lo[0] * bl[q];
            r[mi - 1] -= up[mi - 1] * br[q];
            let x = linalg::thomas(&lo, &di, &up, &r);
            for ii in 0..mi {
                vh[ii][q] = x[ii];
            }
        }
        let mut v = vec![0.0; ny * nz];
        for j in 0..nz {
            v[j * ny] = bc[0][j];
            v[j * ny + ny - 1] = bc[1][j];
        }
        for ii in 0..mi {
            for jj in 0..m {
                v[(jj + 1) * ny + ii + 1] = (0..m).map(|q| self.modes[(jj, q)] * vh[ii][q]).sum();
            }
        }
        v
    }

    /// J_Sigma zeta = -Delta_{g0} zeta - (|sff|^2 + Ric) zeta at interior base nodes.
    pub fn apply_j(&self, zeta: &[f64]) -> Vec<f64> {
        let ny = self.ny;
        let mut out = vec![0.0; ny];
        for i in 1..ny - 1 {
            let a = &self.ay[i];
            out[i] = -(a[0] * zeta[i - 1] + a[1] * zeta[i] + a[2] * zeta[i + 1]) - self.pot[i] * zeta[i];
        }
        out
    }

    pub fn solve_j(&self, f: &[f64], bc: [f64; 2]) -> Vec<f64> {
        let ny = self.ny;
        let lo: Vec<f64> = (1..ny - 1).map(|i| -self.ay[i][0]).collect();
        let di: Vec<f64> = (1..ny - 1).map(|i| -self.ay[i][1] - self.pot[i]).collect();
        let up: Vec<f64> = (1..ny - 1).map(|i| -self.ay[i][2]).collect();
        let mut r: Vec<f64> = (1..ny - 1).map(|i| f[i]).collect();
        let mi = ny - 2;
        r[0] -= lo[0] * bc[0];
        r[mi - 1] -= up[mi - 1] * bc[1];
        let x = linalg::thomas(&lo, &di, &up, &r);
        let mut z = vec![0.0; ny];
        z[0] = bc[0];
        z[ny - 1] = bc[1];
        z[1..ny - 1].copy_from_slice(&x);
        z
    }

    fn jacobi_gap(&self) -> f64 {
        let mi = self.ny - 2;
        let mut jm = DMatrix::<f64>::zeros(mi, mi);
        for ii in 0..mi {
            let i = ii + 1;
            jm[(ii, ii)] = -self.ay[i][1] - self.pot[i];
            if ii > 0 {
                jm[(ii, ii - 1)] = -self.ay[i][0];
            }
            if ii + 1 < mi {
                jm[(ii, ii + 1)] = -self.ay[i][2];
            }
        }
        let (vals, _) = linalg::sym_eig(jm.transpose() * &jm);
        vals[0].max(0.0)
    }

    /// Pi_eps on interior base nodes.
    pub fn pi(&self, f: &[f64]) -> Vec<f64> {
        let ny = self.ny;
        let mut p = vec![0.0; ny];
        for (i, pi) in p.iter_mut().enumerate() {
            *pi = (1..self.nz - 1).map(|j| f[j * ny + i] * self.psi[j]).sum::<f64>() / self.psi_norm2;
        }
        p
    }

    /// Pi_eps^perp, applied on the rows `rows` of the base grid.
    pub fn perp(&self, f: &[f64], interior_only: bool) -> Vec<f64> {
        let ny = self.ny;
        let p = self.pi(f);
        let mut out = f.to_vec();
        let (a, b) = if interior_only { (1, ny - 1) } else { (0, ny) };
        for j in 1..self.nz - 1 {
            for i in a..b {
                out[j * ny + i] -= p[i] * self.psi[j];
            }
        }
        out
    }

    /// Pi_eps of a function of t alone.
    pub fn pi_line(&self, g: &[f64]) -> f64 {
        (1..self.nz - 1).map(|j| g[j] * self.psi[j]).sum::<f64>() / self.psi_norm2
    }

    /// E, Q, M, N at (vb, v#, zeta), with the signs that reassemble the PDE exactly.
    pub fn functionals(&self, v_flat: &[f64], v_sharp: &[f64], zeta: &[f64]) -> Result<Functionals> {
        let chart = self.chart(zeta)?;
        Ok(self.functionals_with(&chart, v_flat, v_sharp, zeta))
    }

    fn functionals_with(&self, chart: &Chart, v_flat: &[f64], v_sharp: &[f64], zeta: &[f64]) -> Functionals {
        let (ny, nz) = (self.ny, self.nz);
        let n = ny * nz;
        let eps = self.cfg.eps;
        let e2 = eps * eps;
        let ht_grid: Vec<f64> = (0..n).map(|k| self.h_tilde[k / ny]).collect();
        let p_ht = self.pulled_laplacian(chart, &ht_grid);
        let chi4v: Vec<f64> = (0..n).map(|k| self.chi_t[3][k / ny] * v_sharp[k]).collect();
        let p_vf = self.pulled_laplacian(chart, v_flat);
        let p0_vf = self.pulled_laplacian(&self.chart0, v_flat);
        let p_vs = self.pulled_laplacian(chart, v_sharp);
        let p_chi4v = self.pulled_laplacian(chart, &chi4v);
        let l_vs = self.apply_l(v_sharp);
        let jz = self.apply_j(zeta);
        let mut e = vec![0.0; n];
        let mut q = vec![0.0; n];
        let mut m = vec![0.0; n];
        let mut nn = vec![0.0; n];
        for j in 1..nz - 1 {
            let c3 = self.chi_t[2][j];
            let c4 = self.chi_t[3][j];
            let ht = self.h_tilde[j];
            let wp = self.well.dw(ht);
            for i in 1..ny - 1 {
                let k = j * ny + i;
                e[k] = e2 * p_ht[k] - wp;
                let v = chi4v[k] + v_flat[k];
                q[k] = self.well.dw(ht + v) - wp - self.d2w_ht[j] * v;
                let dflat = e2 * (p_vf[k] - p0_vf[k]);
                nn[k] = (c4 - 1.0) * (dflat - (self.d2w_ht[j] - self.d2w_pm[j]) * v_flat[k] + e[k] - q[k])
                    - e2 * (p_chi4v[k] - c4 * p_vs[k]);
                m[k] = c3
                    * (l_vs[k] - e2 * p_vs[k] + self.d2w_h[j] * v_sharp[k] - dflat
                        + (self.d2w_h[j] - self.d2w_pm[j]) * v_flat[k]
                        - e[k]
                        + q[k]
                        + eps * jz[i] * self.psi[j]);
            }
        }
        Functionals { e, q, m, n: nn }
    }

    /// Full chart field U = H~ + chi4 v# + vb.
    pub fn assemble(&self, v_flat: &[f64], v_sharp: &[f64]) -> Vec<f64> {
        let ny = self.ny;
        (0..self.len()).map(|k| self.h_tilde[k / ny] + self.chi_t[3][k / ny] * v_sharp[k] + v_flat[k]).collect()
    }

    /// sup over interior nodes of |eps^2 P u - W'(u)|.
    pub fn pde_residual(&self, chart: &Chart, u: &[f64]) -> f64 {
        let e2 = self.cfg.eps * self.cfg.eps;
        let p = self.pulled_laplacian(chart, u);
        (0..self.len())
            .filter(|&k| !self.is_boundary(k))
            .map(|k| (e2 * p[k] - self.well.dw(u[k])).abs())
            .fold(0.0, f64::max)
    }

    /// Physical field u(y, z) = U(y, D_zeta(y, z)) on the grid, by cubic interpolation in t.
    pub fn to_physical(&self, u_chart: &[f64], zeta: &[f64]) -> Vec<f64> {
        let (ny, nz) = (self.ny, self.nz);
        let map = self.offset();
        let mut out = u_chart.to_vec();
        for i in 0..ny {
            if zeta[i] == 0.0 {
                continue;
            }
            let col: Vec<f64> = (0..nz).map(|j| u_chart[j * ny + i]).collect();
            for j in 1..nz - 1 {
                let s = map.forward(zeta[i], self.t[j]);
                out[j * ny + i] = cubic_at(&col, -1.0, self.hz, s);
            }
        }
        out
    }

    pub fn norms(&self) -> Norms<'_> {
        Norms { p: self }
    }

    /// Smooth admissible data of size s: vb^ vanishes on {chi4 = 1}, Pi v#^ = 0, zeta^ ~ eps^(2 - 2 alpha).
    pub fn standard_data(&self, s: f64) -> BoundaryData {
        let (ny, nz) = (self.ny, self.nz);
        let eps = self.cfg.eps;
        let e2 = eps * eps;
        let (y0, y1) = self.cfg.y_range;
        let mut vf = vec![0.0; ny * nz];
        for k in 0..ny * nz {
            if self.is_boundary(k) {
                let (i, j) = (k % ny, k / ny);
                let yy = (self.y[i] - y0) / (y1 - y0);
                let tt = self.t[j];
                vf[k] = s * e2 * (1.0 - self.chi_t[3][j]) * (1.0 + 0.5 * (std::f64::consts::PI * tt).cos())
                    * (1.0 + 0.3 * (2.0 * std::f64::consts::PI * yy).sin());
            }
        }
        let shape = |sign: f64| -> Vec<f64> {
            let mut g: Vec<f64> = self
                .t
                .iter()
                .map(|&tt| {
                    let h = self.profile.eval(tt / eps);
                    sign * h[2] + 0.5 * h[1] * h[1]
                })
                .collect();
            g[0] = 0.0;
            g[nz - 1] = 0.0;
            let p = self.pi_line(&g);
            for j in 1..nz - 1 {
                g[j] -= p * self.psi[j];
            }
            g.iter().map(|v| s * e2 * v).collect()
        };
        let zs = s * eps.powf(2.0 - 2.0 * self.cfg.alpha);
        BoundaryData { v_flat_hat: vf, v_sharp_hat: [shape(1.0), shape(-1.0)], zeta_hat: [0.5 * zs, -0.3 * zs], mu: s }
    }

    pub fn validate_data(&self, bd: &BoundaryData) -> Result<()> {
        let (ny, nz) = (self.ny, self.nz);
        if bd.v_flat_hat.len() != ny * nz || bd.v_sharp_hat.iter().any(|v| v.len() != nz) {
            return invalid("boundary data has the wrong size");
        }
        for k in 0..ny * nz {
            if self.is_boundary(k) && self.chi_t[3][k / ny] == 1.0 && bd.v_flat_hat[k] != 0.0 {
                return invalid("vb^ must vanish on {chi4 = 1}");
            }
        }
        let scale = bd.v_sharp_hat.iter().flatten().fold(1e-300f64, |a, v| a.max(v.abs()));
        for g in &bd.v_sharp_hat {
            if self.pi_line(g).abs() > 1e-10 * scale {
                return invalid("v#^ must satisfy Pi_eps v#^ = 0");
            }
            if g[0] != 0.0 || g[nz - 1] != 0.0 {
                return invalid("v#^ must vanish at t = +-1");
            }
        }
        Ok(())
    }

    /// One application of the fixed-point map.
    pub fn step(
        &self,
        bd: &BoundaryData,
        v_flat: &[f64],
        v_sharp: &[f64],
        zeta: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (ny, nz) = (self.ny, self.nz);
        let eps = self.cfg.eps;
        let f = self.functionals(v_flat, v_sharp, zeta)?;
        let pm: Vec<f64> = self.pi(&f.m).iter().map(|v| v / eps).collect();
        let zn = self.solve_j(&pm, bd.zeta_hat);
        let rhs = self.perp(&f.m, true);
        let vs = self.solve_l(&rhs, &bd.v_sharp_hat);
        let vs = self.perp(&vs, true);
        let mut b = f.n.clone();
        for k in 0..ny * nz {
            if self.is_boundary(k) {
                b[k] = bd.v_flat_hat[k];
            }
        }
        let vf = self.lflat.solve(&b);
        let _ = nz;
        Ok((vf, vs, zn))
    }

    /// Iterates the three linear solves to a fixed point.
    pub fn fixed_point_solve(&self, bd: &BoundaryData) -> Result<BarrierSolution> {
        self.validate_data(bd)?;
        let (ny, nz) = (self.ny, self.nz);
        let n = ny * nz;
        let mut vf = vec![0.0; n];
        let mut vs = vec![0.0; n];
        let mut zeta = vec![0.0; ny];
        for k in 0..n {
            if self.is_boundary(k) {
                vf[k] = bd.v_flat_hat[k];
            }
        }
        for j in 0..nz {
            vs[j * ny] = bd.v_sharp_hat[0][j];
            vs[j * ny + ny - 1] = bd.v_sharp_hat[1][j];
        }
        zeta[0] = bd.zeta_hat[0];
        zeta[ny - 1] = bd.zeta_hat[1];
        let norms = self.norms();
        let mut updates = vec![];
        let mut ratios = vec![];
        let mut bad = 0;
        let mut converged = false;
        let mut it = 0;
        while it < self.cfg.max_iter {
            it += 1;
            let (vf2, vs2, z2) = self.step(bd, &vf, &vs, &zeta)?;
            let d = norms.u_norm(&diff(&vf2, &vf), &diff(&vs2, &vs), &diff(&z2, &zeta));
            if !d.is_finite() {
                return numeric("barrier iteration produced a non-finite update");
            }
            if let Some(&prev) = updates.last() {
                let r: f64 = d / prev;
                ratios.push(r);
                if r >= 1.0 && d > 1e3 * self.cfg.tol {
                    bad += 1;
                    if bad >= 3 {
                        return Err(LabError::NoContraction(format!(
                            "update ratio >= 1 on three consecutive iterations at eps = {} (updates {:?})",
                            self.cfg.eps, updates
                        )));
                    }
                } else {
                    bad = 0;
                }
            }
            updates.push(d);
            vf = vf2;
            vs = vs2;
            zeta = z2;
            if d <= self.cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return numeric(format!(
                "barrier iteration did not reach {:.1e} in {} steps (last update {:.3e})",
                self.cfg.tol,
                self.cfg.max_iter,
                updates.last().copied().unwrap_or(f64::NAN)
            ));
        }
        // ratios taken while the update is well above round-off
        let floor = updates[0] * 1e-8;
        let mut useful: Vec<f64> =
            ratios.iter().enumerate().filter(|(q, _)| updates[q + 1] > floor.max(1e2 * self.cfg.tol)).map(|(_, &r)| r).collect();
        if useful.is_empty() {
            useful = ratios.clone();
        }
        useful.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let contraction_factor = if useful.is_empty() { 0.0 } else { useful[useful.len() / 2] };

        let chart = self.chart(&zeta)?;
        let u_chart = self.assemble(&vf, &vs);
        let residual = self.pde_residual(&chart, &u_chart);
        let u = self.to_physical(&u_chart, &zeta);
        let physical_residual = self.pde_residual(&self.chart0, &u);
        let mut boundary_error = 0.0f64;
        for k in 0..n {
            if self.is_boundary(k) {
                boundary_error = boundary_error.max((vf[k] - bd.v_flat_hat[k]).abs());
            }
        }
        for j in 0..nz {
            boundary_error = boundary_error.max((vs[j * ny] - bd.v_sharp_hat[0][j]).abs());
            boundary_error = boundary_error.max((vs[j * ny + ny - 1] - bd.v_sharp_hat[1][j]).abs());
        }
        boundary_error = boundary_error.max((zeta[0] - bd.zeta_hat[0]).abs()).max((zeta[ny - 1] - bd.zeta_hat[1]).abs());
        let projection_residual = self.pi(&vs).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut strip = 0.0f64;
        for k in 0..n {
            if u[k].abs() <= 0.9 {
                strip = strip.max(self.t[k / ny].abs() / self.cfg.eps);
            }
        }
        let sn = norms.state(&vf, &vs, &zeta);
        Ok(BarrierSolution {
            state: BarrierState { v_flat: vf, v_sharp: vs, zeta, updates, contraction: ratios },
            iterations: it,
            contraction_factor,
            residual,
            physical_residual,
            boundary_error,
            projection_residual,
            norms: sn,
            strip_ratio: strip,
            u_chart,
            u,
        })
    }
}

impl Chart {
    fn identity(metric: &WarpedMetric, y: &[f64], t: &[f64]) -> Chart {
        let ny = y.len();
        let nz = t.len();
        let mut coef = vec![[0.0; 5]; ny * nz];
        let mut z = vec![0.0; ny * nz];
        for j in 0..nz {
            for i in 0..ny {
                let k = j * ny + i;
                z[k] = t[j];
                coef[k] = pulled_coef(metric, y[i], t[j], 0.0, 0.0, 1.0, 0.0);
            }
        }
        Chart { coef, z }
    }
}

fn pulled_coef(metric: &WarpedMetric, y: f64, z: f64, ty: f64, tyy: f64, tz: f64, tzz: f64) -> [f64; 5] {
    let p = metric.point(y, z);
    let ia2 = 1.0 / (p.a * p.a);
    let ay3 = p.a_y * ia2 / p.a;
    [ia2, 2.0 * ty * ia2, ty * ty * ia2 + tz * tz, -ay3, tyy * ia2 - ay3 * ty + tzz + p.a_z / p.a * tz]
}

/// Nine-point stencil of c_yy v_yy + c_yt v_yt + c_tt v_tt + c_y v_y + c_t v_t at node k.
#[inline]
fn stencil(c: &[f64; 5], k: usize, ny: usize, hy: f64, hz: f64) -> [(usize, f64); 9] {
    let iy2 = 1.0 / (hy * hy);
    let iz2 = 1.0 / (hz * hz);
    let x = c[1] / (4.0 * hy * hz);
    [
        (k, -2.0 * c[0] * iy2 - 2.0 * c[2] * iz2),
        (k + 1, c[0] * iy2 + c[3] / (2.0 * hy)),
        (k - 1, c[0] * iy2 - c[3] / (2.0 * hy)),
        (k + ny, c[2] * iz2 + c[4] / (2.0 * hz)),
        (k - ny, c[2] * iz2 - c[4] / (2.0 * hz)),
        (k + ny + 1, x),
        (k - ny - 1, x),
        (k + ny - 1, -x),
        (k - ny + 1, -x),
    ]
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Four-point Lagrange interpolation on a uniform grid starting at x0.
fn cubic_at(f: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let n = f.len();
    let s = (x - x0) / h;
    let i = (s.floor() as isize).clamp(1, n as isize - 3) as usize;
    let u = s - i as f64;
    let (a, b, c, d) = (f[i - 1], f[i], f[i + 1], f[i + 2]);
    let l0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
    let l1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
    let l2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
    let l3 = (u + 1.0) * u * (u - 1.0) / 6.0;
    l0 * a + l1 * b + l2 * c + l3 * d
}

/// Discrete weighted Holder norms; seminorms over axis-aligned node pairs within 3 eps.
pub struct Norms<'a> {
    p: &'a BarrierProblem,
}

impl Norms<'_> {
    /// ||v||_{C^{2,alpha}_eps} on the chart grid.
    pub fn c2a_eps(&self, v: &[f64]) -> f64 {
        let p = self.p;
        let (ny, nz, hy, hz) = (p.ny, p.nz, p.hy, p.hz);
        let eps = p.cfg.eps;
        let al = p.cfg.alpha;
        let mut d2 = vec![[0.0; 3]; ny * nz];
        let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
        for v0 in v {
            s0 = s0.max(v0.abs());
        }
        for j in 1..nz - 1 {
            for i in 1..ny - 1 {
                let k = j * ny + i;
                let vy = (v[k + 1] - v[k - 1]) / (2.0 * hy);
                let vt = (v[k + ny] - v[k - ny]) / (2.0 * hz);
                let vyy = (v[k + 1] - 2.0 * v[k] + v[k - 1]) / (hy * hy);
                let vtt = (v[k + ny] - 2.0 * v[k] + v[k - ny]) / (hz * hz);
                let vyt = (v[k + ny + 1] - v[k + ny - 1] - v[k - ny + 1] + v[k - ny - 1]) / (4.0 * hy * hz);
                s1 = s1.max(vy.hypot(vt));
                d2[k] = [vyy, vyt, vtt];
                s2 = s2.max((vyy * vyy + 2.0 * vyt * vyt + vtt * vtt).sqrt());
            }
        }
        let my = ((3.0 * eps / hy).floor() as usize).max(1);
        let mz = ((3.0 * eps / hz).floor() as usize).max(1);
        let mut sem = 0.0f64;
        let dist = |a: &[f64; 3], b: &[f64; 3]| {
            let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            (d[0] * d[0] + 2.0 * d[1] * d[1] + d[2] * d[2]).sqrt()
        };
        for j in 1..nz - 1 {
            for i in 1..ny - 1 {
                let k = j * ny + i;
                for o in 1..=my {
                    if i + o >= ny - 1 {
                        break;
                    }
                    let r = (o as f64 * hy).powf(al);
                    sem = sem.max(dist(&d2[k], &d2[k + o]) / r);
                }
                for o in 1..=mz {
                    if j + o >= nz - 1 {
                        break;
                    }
                    let r = (o as f64 * hz).powf(al);
                    sem = sem.max(dist(&d2[k], &d2[k + o * ny]) / r);
                }
            }
        }
        s0 + eps * s1 + eps * eps * s2 + eps.powf(2.0 + al) * sem
    }

    /// eps^-2 ||chi5 v|| + ||v||.
    pub fn modified(&self, v: &[f64]) -> f64 {
        let p = self.p;
        let ny = p.ny;
        let c5: Vec<f64> = v.iter().enumerate().map(|(k, x)| p.chi_t[4][k / ny] * x).collect();
        self.c2a_eps(&c5) / (p.cfg.eps * p.cfg.eps) + self.c2a_eps(v)
    }

    /// Unweighted C^{2,alpha} on the base grid.
    pub fn c2a_base(&self, z: &[f64]) -> f64 {
        let p = self.p;
        line_norm(z, p.hy, 1.0, p.cfg.alpha, usize::MAX)
    }

    pub fn u_norm(&self, vf: &[f64], vs: &[f64], zeta: &[f64]) -> f64 {
        let p = self.p;
        self.modified(vf) + self.c2a_eps(vs) + p.cfg.eps.powf(2.0 * p.cfg.alpha) * self.c2a_base(zeta)
    }

    pub fn state(&self, vf: &[f64], vs: &[f64], zeta: &[f64]) -> StateNorms {
        let p = self.p;
        let a = self.modified(vf);
        let b = self.c2a_eps(vs);
        let c = p.cfg.eps.powf(2.0 * p.cfg.alpha) * self.c2a_base(zeta);
        StateNorms { v_flat: a, v_sharp: b, zeta: c, total: a + b + c }
    }

    /// Boundary product norm of the data.
    pub fn b_norm(&self, bd: &BoundaryData) -> f64 {
        let p = self.p;
        let (ny, nz) = (p.ny, p.nz);
        let eps = p.cfg.eps;
        let al = p.cfg.alpha;
        let mz = ((3.0 * eps / p.hz).floor() as usize).max(1);
        let my = ((3.0 * eps / p.hy).floor() as usize).max(1);
        let sides: Vec<(Vec<f64>, f64, usize, Vec<f64>)> = vec![
            ((0..nz).map(|j| bd.v_flat_hat[j * ny]).collect(), p.hz, mz, p.chi_t[4].clone()),
            ((0..nz).map(|j| bd.v_flat_hat[j * ny + ny - 1]).collect(), p.hz, mz, p.chi_t[4].clone()),
            (bd.v_flat_hat[..ny].to_vec(), p.hy, my, vec![p.chi_t[4][0]; ny]),
            (bd.v_flat_hat[(nz - 1) * ny..].to_vec(), p.hy, my, vec![p.chi_t[4][nz - 1]; ny]),
        ];
        let mut plain = 0.0f64;
        let mut cut = 0.0f64;
        for (f, h, m, c5) in &sides {
            plain = plain.max(line_norm(f, *h, eps, al, *m));
            let g: Vec<f64> = f.iter().zip(c5).map(|(a, b)| a * b).collect();
            cut = cut.max(line_norm(&g, *h, eps, al, *m));
        }
        let vs = bd.v_sharp_hat.iter().map(|g| line_norm(g, p.hz, eps, al, mz)).fold(0.0, f64::max);
        plain + cut / (eps * eps) + vs + bd.zeta_hat[0].abs().max(bd.zeta_hat[1].abs())
    }
}

/// sum_{j<=2} w^j sup|f^(j)| + w^(2+alpha) [f'']_alpha with pairs up to m apart.
fn line_norm(f: &[f64], h: f64, w: f64, alpha: f64, m: usize) -> f64 {
    let n = f.len();
    if n < 3 {
        return f.iter().fold(0.0, |a, v| a.max(v.abs()));
    }
    let s0 = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut s1 = 0.0f64;
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        s1 = s1.max(((f[i + 1] - f[i - 1]) / (2.0 * h)).abs());
        d2[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h);
    }
    let s2 = d2.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut sem = 0.0f64;
    for i in 1..n - 1 {
        for o in 1..=m.min(n - 2 - i) {
            sem = sem.max((d2[i + o] - d2[i]).abs() / (o as f64 * h).powf(alpha));
        }
    }
    s0 + w * s1 + w * w * s2 + w.powf(2.0 + alpha) * sem
}

/// Ordering of a barrier below a solution on a common grid.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub ordered: bool,
    /// min over interior nodes of u - b
    pub min_gap: f64,
    /// interior nodes where b >= u
    pub contacts: Vec<usize>,
}

/// Checks b < u in the interior; requires strict ordering on the boundary.
pub fn comparison_check(b: &[f64], u: &[f64], boundary: &[bool]) -> Result<ComparisonReport> {
    if b.len() != u.len() || b.len() != boundary.len() {
        return invalid("comparison fields differ in size");
    }
    let mut min_gap = f64::INFINITY;
    let mut contacts = vec![];
    for k in 0..b.len() {
        let g = u[k] - b[k];
        if boundary[k] {
            if !(g > 0.0) {
                return Err(LabError::Precondition(format!("barrier not below the solution at boundary node {k}")));
            }
            continue;
        }
        min_gap = min_gap.min(g);
        if g <= 0.0 {
            contacts.push(k);
        }
    }
    Ok(ComparisonReport { ordered: contacts.is_empty(), min_gap, contacts })
}

/// Slides a barrier family b(t) from t_hi (ordered) downward and bisects for the first contact.
pub fn first_contact<F: Fn(f64) -> Result<Vec<f64>>>(
    family: F,
    u: &[f64],
    boundary: &[bool],
    t_hi: f64,
    t_lo: f64,
    tol: f64,
) -> Result<Option<f64>> {
    if !comparison_check(&family(t_hi)?, u, boundary)?.ordered {
        return Err(LabError::Precondition("barrier family is not ordered at the starting height".into()));
    }
    if comparison_check(&family(t_lo)?, u, boundary)?.ordered {
        return Ok(None);
    }
    let (mut hi, mut lo) = (t_hi, t_lo);
    while hi - lo > tol {
        let mid = 0.5 * (hi + lo);
        if comparison_check(&family(mid)?, u, boundary)?.ordered {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(0.5 * (hi + lo)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Beta, Family};

    fn problem(eps: f64, warp: bool) -> BarrierProblem {
        let cfg = BarrierConfig::desk(eps);
        let base = Base::Interval { y0: cfg.y_range.0, y1: cfg.y_range.1 };
        let metric = if warp {
            WarpedMetric::new(Family::GaussianWarp { beta: Beta::Cosine { b0: 0.5, b1: 0.3 } }, base, (-1.0, 1.0)).unwrap()
        } else {
            WarpedMetric::flat(base, (-1.0, 1.0))
        };
        let w = DoubleWell::standard();
        let p = Arc::new(Profile::for_epsilon(&w, eps).unwrap());
        BarrierProblem::new(metric, w, p, cfg).unwrap()
    }

    #[test]
    fn cutoff_plateaus_parity_and_bounds() {
        for j in 1..=5u32 {
            let c = cutoffs(0.05, 0.5, j).unwrap();
            let r = 0.05f64.sqrt();
            let jf = j as f64;
            assert_eq!(c.value(r * (1.0 - (2.0 * jf - 1.0) / 100.0)), 1.0);
            assert_eq!(c.value(0.999 * r * (1.0 - (2.0 * jf - 1.0) / 100.0)), 1.0);
            assert_eq!(c.value(r * (1.0 - (2.0 * jf - 2.0) / 100.0)), 0.0);
            for k in 0..50 {
                let t = -1.0 + 0.04 * k as f64;
                assert_eq!(c.value(t), c.value(-t));
            }
            assert!(c.weighted_norm(1) <= 200.0);
        }
        assert!(cutoffs(0.1, 0.5, 6).is_err());
        assert!(cutoffs(0.1, 1.0, 1).is_err());
        // derivative against central differences
        let c = Cutoff::new(0.1, 0.5, 2, 0.05).unwrap();
        let t = 0.5 * (c.inner + c.outer) + 1e-4;
        let h = 1e-6;
        let fd = (c.value(t + h) - c.value(t - h)) / (2.0 * h);
        assert!((fd - c.eval(t)[1]).abs() < 1e-5 * c.sup_derivative());
    }

    #[test]
    fn offset_map_roundtrip() {
        let c = Cutoff::new(0.1, 0.5, 2, 1.0 / 12.0).unwrap();
        let zeta = [0.0, 0.003, -0.004];
        let m = offset_map(c, &zeta).unwrap();
        for &zt in &zeta {
            for k in 0..=200 {
                let z = -1.0 + 0.01 * k as f64;
                let t = m.forward(zt, z);
                if zt == 0.0 || z.abs() >= c.outer {
                    assert_eq!(t, z);
                }
                assert!((m.inverse(zt, t).unwrap() - z).abs() < 1e-10);
            }
        }
        assert!(offset_map(c, &[1.0]).is_err());
    }

    #[test]
    fn projector_and_l_commute() {
        let p = problem(0.1, true);
        let n = p.len();
        let f: Vec<f64> = (0..n)
            .map(|k| if p.is_boundary(k) { 0.0 } else { ((k % p.ny) as f64 * 0.3).sin() * (-(p.t[k / p.ny] / 0.2).powi(2)).exp() })
            .collect();
        let g = p.perp(&f, true);
        assert!(p.pi(&g).iter().all(|v| v.abs() < 1e-12));
        let ones: Vec<f64> = p.t.iter().map(|&s| p.profile.deriv(s / 0.1)).collect();
        assert!((p.pi_line(&ones) - 1.0).abs() < 1e-3);
        let zero = [vec![0.0; p.nz], vec![0.0; p.nz]];
        let v = p.solve_l(&g, &zero);
        let lv = p.apply_l(&v);
        for k in 0..n {
            if !p.is_boundary(k) {
                assert!((lv[k] - g[k]).abs() < 1e-10);
            }
        }
        assert!(p.pi(&v).iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn functionals_at_zero() {
        let p = problem(0.1, false);
        let n = p.len();
        let z = vec![0.0; n];
        let f = p.functionals(&z, &z, &vec![0.0; p.ny]).unwrap();
        for k in 0..n {
            let j = k / p.ny;
            assert_eq!(f.q[k], 0.0);
            assert!((f.m[k] + p.chi_t[2][j] * f.e[k]).abs() < 1e-14);
            assert!((f.n[k] + (1.0 - p.chi_t[3][j]) * f.e[k]).abs() < 1e-14);
        }
        // flat chart: E(0) is eps^2 H~'' - W'(H~) up to O(h^2)
        let eps: f64 = 0.1;
        let c1 = p.chi[0];
        let mut worst = 0.0f64;
        let mut sup_e = 0.0f64;
        for j in 1..p.nz - 1 {
            let t = p.t[j];
            let h = p.profile.eval(t / eps);
            let c = c1.eval(t);
            let sg = t.signum();
            let ht = c[0] * h[0] + (1.0 - c[0]) * sg;
            let d2 = c[2] * (h[0] - sg) + 2.0 * c[1] * h[1] / eps + c[0] * h[2] / (eps * eps);
            let oracle = eps * eps * d2 - p.well.dw(ht);
            let k = j * p.ny + p.ny / 2;
            worst = worst.max((f.e[k] - oracle).abs());
            sup_e = sup_e.max(f.e[k].abs());
        }
        let h_rel = p.hz / eps;
        assert!(worst < 0.2 * h_rel * h_rel, "E(0) vs oracle {worst}");
        assert!(sup_e < 0.15 * h_rel * h_rel + 1e-6, "sup E(0) {sup_e}");
    }

    #[test]
    fn flat_zero_data_is_the_heteroclinic() {
        let p = problem(0.1, false);
        let bd = p.standard_data(0.0);
        let s = p.fixed_point_solve(&bd).unwrap();
        assert!(s.residual <= 1e-8, "residual {}", s.residual);
        assert!(s.state.zeta.iter().all(|v| v.abs() < 1e-12));
        assert!(s.boundary_error == 0.0);
    }

    #[test]
    fn warped_data_converges() {
        let p = problem(0.1, true);
        assert!(p.eta > 0.0 && p.leaf_mean_curvature < 1e-12);
        let bd = p.standard_data(1.0);
        let s = p.fixed_point_solve(&bd).unwrap();
        assert!(s.residual <= 1e-8, "residual {}", s.residual);
        assert_eq!(s.boundary_error, 0.0);
        assert!(s.projection_residual < 1e-10);
        assert!(s.contraction_factor < 1.0);
        assert!(s.physical_residual < 1e-2);
    }

    #[test]
    fn comparison_and_sliding() {
        let n = 50;
        let mask: Vec<bool> = (0..n).map(|k| k == 0 || k == n - 1).collect();
        let z: Vec<f64> = (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect();
        let u: Vec<f64> = z.iter().map(|s| (s / 0.1).tanh()).collect();
        let b: Vec<f64> = u.iter().map(|v| v - 0.1).collect();
        assert!(comparison_check(&b, &u, &mask).unwrap().ordered);
        assert!(comparison_check(&u, &u, &mask).is_err());
        let fam = |t: f64| -> Result<Vec<f64>> { Ok(z.iter().map(|s| ((s - t) / 0.1).tanh() - 0.02).collect()) };
        let t = first_contact(fam, &u, &mask, 0.5, -0.5, 1e-6).unwrap().unwrap();
        assert!(t < 0.0 && t > -0.1, "contact at {t}");
    }
}
