//! Allen-Cahn phase fields on warped-product grids: energy, residual, Newton, layers and the ansatz.

use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::Serialize;

use crate::error::{invalid, numeric, LabError, Result};
use crate::geometry::{self, Base, GraphSurface, WarpedMetric};
use crate::heteroclinic::TruncatedProfile;
use crate::linalg::{self, TriFactor};
use crate::potential::DoubleWell;

/// Tensor grid over Sigma x [z0, z1] with finite-volume coefficients of the metric Laplacian.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub metric: WarpedMetric,
    pub ny: usize,
    pub nz: usize,
    pub hy: f64,
    pub hz: f64,
    pub z0: f64,
    pub z1: f64,
    pub periodic_z: bool,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Node volume a hy hz.
    pub w: Vec<f64>,
    /// Trapezoid quadrature weights (half weights on Dirichlet boundaries).
    pub wq: Vec<f64>,
    /// Edge (i,j)-(i+1,j): (hz/hy) / a(y_{i+1/2}, z_j).
    pub cy: Vec<f64>,
    /// Edge (i,j)-(i,j+1): (hy/hz) a(y_i, z_{j+1/2}).
    pub cz: Vec<f64>,
    pub fixed: Vec<bool>,
    pub a: Vec<f64>,
}

impl Mesh {
    /// `nz` nodes on [z0, z1) when periodic in z, or including both ends when Dirichlet.
    pub fn new(metric: &WarpedMetric, ny: usize, z_span: (f64, f64), nz: usize, periodic_z: bool) -> Result<Mesh> {
        let (z0, z1) = z_span;
        if ny < 4 || nz < 8 {
            return invalid(format!("grid {ny} x {nz} too small"));
        }
        if z0 < metric.z_range.0 - 1e-12 || z1 > metric.z_range.1 + 1e-12 {
            return Err(LabError::OutOfChart(format!("[{z0}, {z1}] exceeds the metric chart")));
        }
        let y = metric.base.nodes(ny);
        let hy = metric.base.spacing(ny);
        let hz = if periodic_z { (z1 - z0) / nz as f64 } else { (z1 - z0) / (nz - 1) as f64 };
        let z: Vec<f64> = (0..nz).map(|j| z0 + hz * j as f64).collect();
        let py = metric.base.is_periodic();
        let n = ny * nz;
        let (mut w, mut wq, mut cy, mut cz, mut fixed, mut a) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![false; n], vec![0.0; n]);
        for i in 0..ny {
            for j in 0..nz {
                let k = i * nz + j;
                let ak = metric.a(y[i], z[j]);
                if ak <= 0.0 {
                    return Err(LabError::GeometryDegenerate { distance: z[j] });
                }
                a[k] = ak;
                w[k] = ak * hy * hz;
                let by = !py && (i == 0 || i == ny - 1);
                let bz = !periodic_z && (j == 0 || j == nz - 1);
                fixed[k] = by || bz;
                wq[k] = w[k] * if by { 0.5 } else { 1.0 } * if bz { 0.5 } else { 1.0 };
                if py || i + 1 < ny {
                    cy[k] = (hz / hy) / metric.a(y[i] + 0.5 * hy, z[j]);
                }
                if periodic_z || j + 1 < nz {
                    cz[k] = (hy / hz) * metric.a(y[i], z[j] + 0.5 * hz);
                }
            }
        }
        Ok(Mesh { metric: metric.clone(), ny, nz, hy, hz, z0, z1, periodic_z, y, z, w, wq, cy, cz, fixed, a })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nz + j
    }

    /// Weights for inner products on free nodes (zero on fixed nodes).
    pub fn free_weights(&self) -> Vec<f64> {
        self.w.iter().zip(&self.fixed).map(|(w, f)| if *f { 0.0 } else { *w }).collect()
    }

    /// (K u)_k = sum over edges c_e (u_nb - u_k); zero on fixed nodes.
    pub fn apply_k(&self, u: &[f64], out: &mut [f64]) {
        let (ny, nz) = (self.ny, self.nz);
        let py = self.metric.base.is_periodic();
        for i in 0..ny {
            let im = if i > 0 { Some(i - 1) } else if py { Some(ny - 1) } else { None };
            let ip = if i + 1 < ny { Some(i + 1) } else if py { Some(0) } else { None };
            for j in 0..nz {
                let k = i * nz + j;
                if self.fixed[k] {
                    out[k] = 0.0;
                    continue;
                }
                let uk = u[k];
                let mut s = 0.0;
                if let Some(ii) = ip {
                    s += self.cy[k] * (u[ii * nz + j] - uk);
                }
                if let Some(ii) = im {
                    s += self.cy[ii * nz + j] * (u[ii * nz + j] - uk);
                }
                let jp = if j + 1 < nz { j + 1 } else { 0 };
                let jm = if j > 0 { j - 1 } else { nz - 1 };
                if j + 1 < nz || self.periodic_z {
                    s += self.cz[k] * (u[i * nz + jp] - uk);
                }
                if j > 0 || self.periodic_z {
                    s += self.cz[i * nz + jm] * (u[i * nz + jm] - uk);
                }
                out[k] = s;
            }
        }
    }

    /// Discrete Laplace-Beltrami operator K u / w on free nodes.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply_k(u, &mut out);
        for k in 0..out.len() {
            if !self.fixed[k] {
                out[k] /= self.w[k];
            }
        }
        out
    }

    /// Sum over edges of c_e (difference)^2 = int |grad u|^2 dmu.
    pub fn dirichlet_sum(&self, u: &[f64]) -> f64 {
        let (ny, nz) = (self.ny, self.nz);
        let py = self.metric.base.is_periodic();
        let mut s = 0.0;
        for i in 0..ny {
            for j in 0..nz {
                let k = i * nz + j;
                if py || i + 1 < ny {
                    let d = u[((i + 1) % ny) * nz + j] - u[k];
                    s += self.cy[k] * d * d;
                }
                if self.periodic_z || j + 1 < nz {
                    let d = u[i * nz + (j + 1) % nz] - u[k];
                    s += self.cz[k] * d * d;
                }
            }
        }
        s
    }

    /// Per-column tridiagonal factors of the z-part of -s Lap plus diagonal y-couplings and w d.
    pub fn line_factors(&self, s: f64, d: &[f64]) -> Vec<TriFactor> {
        let (ny, nz) = (self.ny, self.nz);
        let py = self.metric.base.is_periodic();
        (0..ny)
            .map(|i| {
                let im = if i > 0 { Some(i - 1) } else if py { Some(ny - 1) } else { None };
                let (mut lo, mut di, mut up) = (vec![0.0; nz], vec![0.0; nz], vec![0.0; nz]);
                for j in 0..nz {
                    let k = i * nz + j;
                    if self.fixed[k] {
                        di[j] = 1.0;
                        continue;
                    }
                    let mut cyy = self.cy[k];
                    if let Some(ii) = im {
                        cyy += self.cy[ii * nz + j];
                    }
                    let jm = if j > 0 { j - 1 } else { nz - 1 };
                    let czm = if j > 0 || self.periodic_z { self.cz[i * nz + jm] } else { 0.0 };
                    let czp = if j + 1 < nz || self.periodic_z { self.cz[k] } else { 0.0 };
                    di[j] = s * (czm + czp + cyy) + self.w[k] * d[k];
                    let jp_fixed = j + 1 < nz && self.fixed[i * nz + j + 1];
                    let jm_fixed = j > 0 && self.fixed[i * nz + j - 1];
                    up[j] = if jp_fixed { 0.0 } else { -s * czp };
                    lo[j] = if jm_fixed { 0.0 } else { -s * czm };
                }
                TriFactor::new(&lo, &di, &up, self.periodic_z)
            })
            .collect()
    }

    /// Applies the line preconditioner: x = P~^{-1} (W r) column by column.
    pub fn line_solve(&self, f: &[TriFactor], r: &[f64], x: &mut [f64]) {
        let nz = self.nz;
        let mut rhs = vec![0.0; nz];
        let mut col = vec![0.0; nz];
        for (i, fi) in f.iter().enumerate() {
            let all_fixed = (0..nz).all(|j| self.fixed[i * nz + j]);
            if all_fixed {
                for j in 0..nz {
                    x[i * nz + j] = 0.0;
                }
                continue;
            }
            for j in 0..nz {
                let k = i * nz + j;
                rhs[j] = if self.fixed[k] { 0.0 } else { self.w[k] * r[k] };
            }
            fi.solve(&rhs, &mut col);
            for j in 0..nz {
                let k = i * nz + j;
                x[k] = if self.fixed[k] { 0.0 } else { col[j] };
            }
        }
    }

    /// Solves (-s Lap + diag(d)) x = b on free nodes by line-preconditioned CG (d > 0 required).
    pub fn solve_spd(&self, s: f64, d: &[f64], b: &[f64], x: &mut [f64], rtol: f64) -> Result<linalg::KrylovStats> {
        let fac = self.line_factors(s, d);
        let wts = self.free_weights();
        let op = |v: &[f64], out: &mut [f64]| {
            self.apply_k(v, out);
            for k in 0..v.len() {
                out[k] = if self.fixed[k] { 0.0 } else { -s * out[k] / self.w[k] + d[k] * v[k] };
            }
        };
        let pc = |r: &[f64], z: &mut [f64]| self.line_solve(&fac, r, z);
        let mut bb = b.to_vec();
        for k in 0..bb.len() {
            if self.fixed[k] {
                bb[k] = 0.0;
            }
        }
        linalg::pcg(&op, &pc, &bb, x, &wts, rtol, 20 * self.len().max(100))
    }
}

/// A discretised phase field u with its mesh, epsilon and well.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub mesh: Arc<Mesh>,
    pub eps: f64,
    pub u: Vec<f64>,
    pub well: DoubleWell,
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Sup-norm residual before each step and at the end.
    pub residuals: Vec<f64>,
    pub krylov_iterations: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowReport {
    pub energies: Vec<f64>,
    /// Step size bound for energy stability; infinite with the stabilised splitting.
    pub stability_bound: f64,
    pub stabilisation: f64,
}

impl PhaseField {
    pub fn new(mesh: Arc<Mesh>, eps: f64, u: Vec<f64>, well: DoubleWell) -> Result<PhaseField> {
        if !(eps > 0.0) {
            return invalid("epsilon must be positive");
        }
        if u.len() != mesh.len() {
            return invalid("field size does not match the mesh");
        }
        if mesh.hz > eps / 8.0 + 1e-15 {
            return invalid(format!("hz = {} does not resolve eps = {eps} (need >= 8 nodes per eps)", mesh.hz));
        }
        Ok(PhaseField { mesh, eps, u, well })
    }

    pub fn from_fn(mesh: Arc<Mesh>, eps: f64, well: DoubleWell, f: impl Fn(f64, f64) -> f64) -> Result<PhaseField> {
        let mut u = vec![0.0; mesh.len()];
        for i in 0..mesh.ny {
            for j in 0..mesh.nz {
                u[mesh.idx(i, j)] = f(mesh.y[i], mesh.z[j]);
            }
        }
        PhaseField::new(mesh, eps, u, well)
    }

    /// E = int eps |grad u|^2 / 2 + W(u) / eps.
    pub fn energy(&self) -> f64 {
        let m = &self.mesh;
        let pot: f64 = self.u.iter().zip(&m.wq).map(|(&u, &w)| w * self.well.w(u)).sum();
        0.5 * self.eps * m.dirichlet_sum(&self.u) + pot / self.eps
    }

    /// eps^2 Lap u - W'(u) on free nodes, zero on fixed nodes.
    pub fn residual(&self) -> Vec<f64> {
        let m = &self.mesh;
        let mut r = m.laplacian(&self.u);
        let e2 = self.eps * self.eps;
        for k in 0..r.len() {
            r[k] = if m.fixed[k] { 0.0 } else { e2 * r[k] - self.well.dw(self.u[k]) };
        }
        r
    }

    pub fn residual_sup(&self) -> f64 {
        self.residual().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// h0^{-1} int eps |grad u|^2.
    pub fn varifold_mass(&self, h0: f64) -> f64 {
        self.eps * self.mesh.dirichlet_sum(&self.u) / h0
    }

    pub fn sup_abs(&self) -> f64 {
        self.u.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Newton iteration for eps^2 Lap u = W'(u) with line-preconditioned MINRES.
    pub fn newton_solve(&self, tol: f64, max_iter: usize) -> Result<(PhaseField, NewtonReport)> {
        let m = self.mesh.clone();
        let n = m.len();
        let e2 = self.eps * self.eps;
        let wts = m.free_weights();
        let mut u = self.u.clone();
        let mut field = self.clone();
        let mut report = NewtonReport { iterations: 0, residuals: vec![], krylov_iterations: vec![] };
        for it in 0..=max_iter {
            field.u.clone_from(&u);
            let f = field.residual();
            let res = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            report.residuals.push(res);
            if res <= tol {
                report.iterations = it;
                if field.sup_abs() > 1.0 + 1e-6 {
                    return numeric(format!("Newton solution violates |u| <= 1 (sup {})", field.sup_abs()));
                }
                return Ok((field, report));
            }
            if it == max_iter || !res.is_finite() {
                break;
            }
            let d2: Vec<f64> = u.iter().map(|&x| self.well.d2w(x)).collect();
            let op = |v: &[f64], out: &mut [f64]| {
                m.apply_k(v, out);
                for k in 0..n {
                    out[k] = if m.fixed[k] { 0.0 } else { -e2 * out[k] / m.w[k] + d2[k] * v[k] };
                }
            };
            let dpc: Vec<f64> = d2.iter().map(|v| v.abs().max(1.0)).collect();
            let fac = m.line_factors(e2, &dpc);
            let pc = |r: &[f64], z: &mut [f64]| m.line_solve(&fac, r, z);
            let mut delta = vec![0.0; n];
            let rtol = (0.01 * res).clamp(1e-10, 1e-4);
            let st = linalg::minres(&op, &pc, &f, &mut delta, &wts, rtol, 4000)?;
            report.krylov_iterations.push(st.iterations);
            // backtracking on the residual norm
            let dmax = delta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut lam: f64 = if dmax > 0.5 { 0.5 / dmax } else { 1.0 };
            loop {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + lam * b).collect();
                field.u.clone_from(&trial);
                let r2 = field.residual_sup();
                if r2 < res || lam < 1e-3 {
                    u = trial;
                    break;
                }
                lam *= 0.5;
            }
        }
        let last = report.residuals.last().copied().unwrap_or(f64::NAN);
        numeric(format!(
            "Newton did not converge in {max_iter} iterations (residual trace {:?}, last {last:.3e})",
            report.residuals
        ))
    }

    /// Stabilised semi-implicit gradient flow for E.
    pub fn gradient_flow(&self, dt: f64, steps: usize) -> Result<(PhaseField, FlowReport)> {
        if steps == 0 || !(dt > 0.0) {
            return invalid("gradient_flow needs dt > 0 and steps >= 1");
        }
        let m = self.mesh.clone();
        let n = m.len();
        let eps = self.eps;
        let lip = self.u.iter().map(|&x| self.well.d2w(x).abs()).fold(2.0f64, f64::max) * 1.1;
        let s = 0.5 * lip;
        let mut f = self.clone();
        let mut energies = vec![f.energy()];
        let d = vec![1.0 / dt + s / eps; n];
        for _ in 0..steps {
            let b: Vec<f64> =
                f.u.iter().map(|&x| x / dt + (s * x - self.well.dw(x)) / eps).collect();
            let mut x = f.u.clone();
            // the flow is L2(mu) gradient descent: u_t = eps Lap u - W'(u)/eps
            m.solve_spd(eps, &d, &b, &mut x, 1e-13)?;
            for k in 0..n {
                if m.fixed[k] {
                    x[k] = f.u[k];
                }
            }
            f.u = x;
            let e = f.energy();
            let prev = *energies.last().unwrap();
            if e > prev + 1e-12 * prev.abs().max(1.0) {
                return Err(LabError::StepSize(format!("energy increased from {prev} to {e} with dt = {dt}")));
            }
            energies.push(e);
        }
        Ok((f, FlowReport { energies, stability_bound: f64::INFINITY, stabilisation: s }))
    }

    /// u(y_i, .) as a column slice.
    pub fn column(&self, i: usize) -> &[f64] {
        &self.u[i * self.mesh.nz..(i + 1) * self.mesh.nz]
    }

    /// Writes the binary checkpoint: magic, dims, eps, metric id, grid extents, little-endian payload.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let m = &self.mesh;
        out.write_all(b"ACLB")?;
        out.write_u32::<LittleEndian>(1)?;
        out.write_u32::<LittleEndian>(m.ny as u32)?;
        out.write_u32::<LittleEndian>(m.nz as u32)?;
        out.write_f64::<LittleEndian>(self.eps)?;
        let id = m.metric.id();
        out.write_u32::<LittleEndian>(id.len() as u32)?;
        out.write_all(id.as_bytes())?;
        out.write_u8(m.metric.base.is_periodic() as u8)?;
        out.write_u8(m.periodic_z as u8)?;
        out.write_f64::<LittleEndian>(m.metric.base.origin())?;
        out.write_f64::<LittleEndian>(m.metric.base.length())?;
        out.write_f64::<LittleEndian>(m.z0)?;
        out.write_f64::<LittleEndian>(m.z1)?;
        for &v in &self.u {
            out.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }
}

/// Header and payload of a checkpoint file.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub ny: usize,
    pub nz: usize,
    pub eps: f64,
    pub metric_id: String,
    pub periodic_y: bool,
    pub periodic_z: bool,
    pub y_origin: f64,
    pub y_length: f64,
    pub z0: f64,
    pub z1: f64,
    pub u: Vec<f64>,
}

pub fn read_checkpoint<R: Read>(mut inp: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    inp.read_exact(&mut magic)?;
    if &magic != b"ACLB" {
        return invalid("not an ac-lab checkpoint");
    }
    let version = inp.read_u32::<LittleEndian>()?;
    if version != 1 {
        return invalid(format!("unsupported checkpoint version {version}"));
    }
    let ny = inp.read_u32::<LittleEndian>()? as usize;
    let nz = inp.read_u32::<LittleEndian>()? as usize;
    let eps = inp.read_f64::<LittleEndian>()?;
    let len = inp.read_u32::<LittleEndian>()? as usize;
    let mut id = vec![0u8; len];
    inp.read_exact(&mut id)?;
    let metric_id = String::from_utf8(id).map_err(|e| LabError::InvalidArgument(e.to_string()))?;
    let periodic_y = inp.read_u8()? != 0;
    let periodic_z = inp.read_u8()? != 0;
    let y_origin = inp.read_f64::<LittleEndian>()?;
    let y_length = inp.read_f64::<LittleEndian>()?;
    let z0 = inp.read_f64::<LittleEndian>()?;
    let z1 = inp.read_f64::<LittleEndian>()?;
    let mut u = vec![0.0; ny * nz];
    inp.read_f64_into::<LittleEndian>(&mut u)?;
    Ok(Checkpoint { ny, nz, eps, metric_id, periodic_y, periodic_z, y_origin, y_length, z0, z1, u })
}

/// Ordered nodal sheets z = f_l(y).
#[derive(Debug, Clone, Serialize)]
pub struct LayerStack {
    pub q: usize,
    /// f[l][i] = height of sheet l over base node i.
    pub f: Vec<Vec<f64>>,
    /// +1 where u increases across the sheet, -1 where it decreases.
    pub orientation: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    /// Minimum distance from each sheet to its neighbours (wrapping in periodic z).
    pub d_min: Vec<f64>,
    /// Discrete C^1 norm of each sheet.
    pub c1: Vec<f64>,
    pub phi_sup: f64,
    pub orthogonality_residual: f64,
}

fn cubic_root(z: [f64; 4], u: [f64; 4], lo: f64, hi: f64) -> f64 {
    let p = |x: f64| {
        let mut s = 0.0;
        for a in 0..4 {
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    l *= (x - z[b]) / (z[a] - z[b]);
                }
            }
            s += u[a] * l;
        }
        s
    };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (p(a), p(b));
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 || fa * fb > 0.0 {
        // fall back to linear interpolation
        return lo + (hi - lo) * u[1] / (u[1] - u[2]);
    }
    for _ in 0..100 {
        let c = 0.5 * (a + b);
        let fc = p(c);
        if fc == 0.0 || (b - a) < 1e-15 * (1.0 + c.abs()) {
            return c;
        }
        if fa * fc < 0.0 {
            b = c;
        } else {
            a = c;
            fa = fc;
        }
    }
    0.5 * (a + b)
}

/// Extracts the nodal set as ordered graphs over the base.
pub fn nodal_layers(field: &PhaseField) -> Result<LayerStack> {
    let m = &field.mesh;
    let nz = m.nz;
    let mut per_col: Vec<Vec<(f64, f64)>> = Vec::with_capacity(m.ny);
    for i in 0..m.ny {
        let c = field.column(i);
        let mut roots = vec![];
        let jmax = if m.periodic_z { nz } else { nz - 1 };
        for j in 0..jmax {
            let jn = (j + 1) % nz;
            let (a, b) = (c[j], c[jn]);
            let rising = a <= 0.0 && b > 0.0;
            let falling = a >= 0.0 && b < 0.0;
            if !(rising || falling) || (a == 0.0 && j > 0 && c[j - 1] == 0.0) {
                continue;
            }
            let get = |jj: isize| -> (f64, f64) {
                let mut jj2 = jj;
                let mut off = 0.0;
                if m.periodic_z {
                    if jj2 < 0 {
                        jj2 += nz as isize;
                        off = -(m.z1 - m.z0);
                    } else if jj2 >= nz as isize {
                        jj2 -= nz as isize;
                        off = m.z1 - m.z0;
                    }
                } else {
                    jj2 = jj2.clamp(0, nz as isize - 1);
                }
                (m.z[jj2 as usize] + off, c[jj2 as usize])
            };
            let ji = j as isize;
            let mut pts = [get(ji - 1), get(ji), get(ji + 1), get(ji + 2)];
            if !m.periodic_z && (j == 0 || j + 2 >= nz) {
                // one-sided stencil near Dirichlet ends
                let s = if j == 0 { 0 } else { nz as isize - 4 };
                pts = [get(s), get(s + 1), get(s + 2), get(s + 3)];
                let zr = pts.iter().map(|p| p.0).collect::<Vec<_>>();
                let ur = pts.iter().map(|p| p.1).collect::<Vec<_>>();
                let root = cubic_root([zr[0], zr[1], zr[2], zr[3]], [ur[0], ur[1], ur[2], ur[3]], m.z[j], m.z[j] + m.hz);
                roots.push((root, if rising { 1.0 } else { -1.0 }));
                continue;
            }
            let root = cubic_root(
                [pts[0].0, pts[1].0, pts[2].0, pts[3].0],
                [pts[0].1, pts[1].1, pts[2].1, pts[3].1],
                pts[1].0,
                pts[2].0,
            );
            roots.push((root, if rising { 1.0 } else { -1.0 }));
        }
        roots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        per_col.push(roots);
    }
    let q = per_col[0].len();
    if let Some((i, c)) = per_col.iter().enumerate().find(|(_, c)| c.len() != q) {
        return Err(LabError::Topology(format!("column {i} has {} crossings, column 0 has {q}", c.len())));
    }
    for l in 0..q {
        let o = per_col[0][l].1;
        if per_col.iter().any(|c| c[l].1 != o) {
            return Err(LabError::Topology(format!("sheet {l} changes orientation")));
        }
    }
    let f: Vec<Vec<f64>> = (0..q).map(|l| per_col.iter().map(|c| c[l].0).collect()).collect();
    let orientation = (0..q).map(|l| per_col[0][l].1).collect();
    let period = m.z1 - m.z0;
    let d_min = (0..q)
        .map(|l| {
            let mut d = f64::INFINITY;
            for i in 0..m.ny {
                if l + 1 < q {
                    d = d.min(f[l + 1][i] - f[l][i]);
                } else if m.periodic_z && q > 1 {
                    d = d.min(f[0][i] + period - f[l][i]);
                }
                if l > 0 {
                    d = d.min(f[l][i] - f[l - 1][i]);
                } else if m.periodic_z && q > 1 {
                    d = d.min(f[0][i] + period - f[q - 1][i]);
                }
            }
            d
        })
        .collect();
    let c1 = f
        .iter()
        .map(|fl| {
            let sup = fl.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let n = fl.len();
            let grad = (0..n)
                .map(|i| {
                    let (a, b) = if m.metric.base.is_periodic() { ((i + n - 1) % n, (i + 1) % n) } else { (i.saturating_sub(1), (i + 1).min(n - 1)) };
                    let span = if m.metric.base.is_periodic() { 2.0 } else { (b - a) as f64 };
                    ((fl[b] - fl[a]) / (span * m.hy)).abs()
                })
                .fold(0.0f64, f64::max);
            sup + grad
        })
        .collect();
    Ok(LayerStack {
        q,
        h: vec![vec![0.0; m.ny]; q],
        f,
        orientation,
        d_min,
        c1,
        phi_sup: f64::NAN,
        orthogonality_residual: f64::NAN,
    })
}

impl LayerStack {
    /// Vertical gap f_{l+1} - f_l per base node.
    pub fn gap(&self, l: usize) -> Vec<f64> {
        self.f[l + 1].iter().zip(&self.f[l]).map(|(a, b)| a - b).collect()
    }

    /// Total length of the nodal set in the ambient metric.
    pub fn nodal_area(&self, metric: &WarpedMetric) -> Result<f64> {
        let mut s = 0.0;
        for fl in &self.f {
            s += geometry::graph_area(metric, &GraphSurface::new(metric, fl.clone()))?;
        }
        Ok(s)
    }
}

/// Sheet geometry needed by the ansatz: heights, slopes and the distance convention.
#[derive(Debug, Clone)]
pub struct SheetSet {
    pub f: Vec<Vec<f64>>,
    /// tilt factor 1/sqrt(1+|grad f|^2) per base node
    pub tilt: Vec<Vec<f64>>,
}

impl SheetSet {
    pub fn new(mesh: &Mesh, f: Vec<Vec<f64>>) -> Result<SheetSet> {
        for l in 1..f.len() {
            for i in 0..mesh.ny {
                if f[l][i] <= f[l - 1][i] {
                    return invalid(format!("sheets {l} and {} are not ordered at node {i}", l + 1));
                }
            }
        }
        let tilt = f
            .iter()
            .map(|fl| {
                let n = fl.len();
                let d: Vec<f64> = match mesh.metric.base {
                    Base::Periodic { length } => geometry::spectral_derivative(fl, length),
                    Base::Interval { .. } => (0..n)
                        .map(|i| {
                            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                            (fl[b] - fl[a]) / ((b - a) as f64 * mesh.hy)
                        })
                        .collect(),
                };
                (0..n)
                    .map(|i| {
                        let p = d[i] / mesh.metric.a(mesh.y[i], fl[i]);
                        1.0 / (1.0 + p * p).sqrt()
                    })
                    .collect()
            })
            .collect();
        Ok(SheetSet { f, tilt })
    }

    /// Signed distance to sheet l: exact for level sheets (z-lines are unit-speed geodesics
    /// orthogonal to the leaves), tilt-corrected vertical distance otherwise.
    #[inline]
    pub fn distance(&self, l: usize, i: usize, z: f64) -> (f64, f64) {
        let t = self.tilt[l][i];
        ((z - self.f[l][i]) * t, t)
    }
}

/// U[h] = ((-1)^{Q+1} - 1)/2 + sum_l Hbar((-1)^{l} (d_l - h_l)/eps) (l counted from 0).
pub fn superpose(
    mesh: Arc<Mesh>,
    trunc: &TruncatedProfile,
    eps: f64,
    sheets: &SheetSet,
    offsets: &[Vec<f64>],
) -> Result<PhaseField> {
    let q = sheets.f.len();
    if offsets.len() != q {
        return invalid("one offset function per sheet required");
    }
    for l in 1..q {
        for i in 0..mesh.ny {
            if sheets.f[l][i] - sheets.f[l - 1][i] < 4.0 * eps {
                return invalid(format!("sheets {l} and {} closer than 4 eps at node {i}", l + 1));
            }
        }
    }
    let u = ansatz_values(&mesh, trunc, eps, sheets, offsets);
    PhaseField::new(mesh, eps, u, trunc.base.well.clone())
}

fn ansatz_values(mesh: &Mesh, trunc: &TruncatedProfile, eps: f64, sheets: &SheetSet, offsets: &[Vec<f64>]) -> Vec<f64> {
    let q = sheets.f.len();
    let base = if q % 2 == 1 { 0.0 } else { -1.0 };
    let mut u = vec![base; mesh.len()];
    for i in 0..mesh.ny {
        for j in 0..mesh.nz {
            let k = mesh.idx(i, j);
            for l in 0..q {
                let sg = if l % 2 == 0 { 1.0 } else { -1.0 };
                let (d, _) = sheets.distance(l, i, mesh.z[j]);
                u[k] += trunc.eval(sg * (d - offsets[l][i]) / eps)[0];
            }
        }
    }
    u
}

/// Fits the offsets h_l by the orthogonality relation and records the discrepancy.
pub fn fit_offsets(field: &PhaseField, stack: &LayerStack, trunc: &TruncatedProfile) -> Result<(LayerStack, Vec<f64>)> {
    let m = &field.mesh;
    let eps = field.eps;
    let q = stack.q;
    let sheets = SheetSet::new(m, stack.f.clone())?;
    let mut h = vec![vec![0.0; m.ny]; q];
    let base = if q % 2 == 1 { 0.0 } else { -1.0 };
    // column-wise U and the orthogonality integral for sheet l
    let column_u = |i: usize, h: &[Vec<f64>], j: usize| -> f64 {
        let mut s = base;
        for l in 0..q {
            let sg = if l % 2 == 0 { 1.0 } else { -1.0 };
            let (d, _) = sheets.distance(l, i, m.z[j]);
            s += trunc.eval(sg * (d - h[l][i]) / eps)[0];
        }
        s
    };
    let orth = |i: usize, l: usize, h: &[Vec<f64>]| -> (f64, f64) {
        let sg = if l % 2 == 0 { 1.0 } else { -1.0 };
        let (mut g, mut dg) = (0.0, 0.0);
        for j in 0..m.nz {
            let (d, dz) = sheets.distance(l, i, m.z[j]);
            let e = trunc.eval(sg * (d - h[l][i]) / eps);
            if e[1] == 0.0 && e[2] == 0.0 {
                continue;
            }
            let phi = field.u[m.idx(i, j)] - column_u(i, h, j);
            let dzh = sg * e[1] * dz / eps;
            // d/dh of (phi * dzh): phi_h = sg e1 / eps, dzh_h = -e2 dz / eps^2
            g += phi * dzh * m.hz;
            dg += (sg * e[1] / eps * dzh - phi * e[2] * dz / (eps * eps)) * m.hz;
        }
        (g, dg)
    };
    for _sweep in 0..20 {
        let mut change = 0.0f64;
        for l in 0..q {
            for i in 0..m.ny {
                let mut converged = false;
                for _ in 0..60 {
                    let (g, dg) = orth(i, l, &h);
                    if g.abs() < 1e-13 {
                        converged = true;
                        break;
                    }
                    if dg == 0.0 || !dg.is_finite() {
                        break;
                    }
                    let step = (-g / dg).clamp(-0.5 * eps, 0.5 * eps);
                    h[l][i] += step;
                    change = change.max(step.abs());
                    if step.abs() < 1e-15 * eps.max(h[l][i].abs()) {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    let (g, _) = orth(i, l, &h);
                    if g.abs() > 1e-9 {
                        return numeric(format!("offset fit failed on sheet {l}, column {i} (residual {g:.3e})"));
                    }
                }
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    let mut res = 0.0f64;
    for l in 0..q {
        for i in 0..m.ny {
            res = res.max(orth(i, l, &h).0.abs());
        }
    }
    let u_fit = ansatz_values(m, trunc, eps, &sheets, &h);
    let phi: Vec<f64> = field.u.iter().zip(&u_fit).map(|(a, b)| a - b).collect();
    let mut out = stack.clone();
    out.h = h;
    out.phi_sup = phi.iter().fold(0.0, |a, v| a.max(v.abs()));
    out.orthogonality_residual = res;
    Ok((out, phi))
}

/// Samples of |A| (enhanced second fundamental form) on {|u| <= 1 - beta}.
#[derive(Debug, Clone, Serialize)]
pub struct EnhancedSff {
    pub samples: Vec<f64>,
    pub sup: f64,
    /// sup over the same set of |A|^2 - |sff of the level set|^2 (must be >= 0).
    pub min_dominance: f64,
}

pub fn enhanced_sff(field: &PhaseField, beta: f64) -> Result<EnhancedSff> {
    let m = &field.mesh;
    let (ny, nz) = (m.ny, m.nz);
    let py = m.metric.base.is_periodic();
    let u = &field.u;
    let mut samples = vec![];
    let mut min_dom = f64::INFINITY;
    let floor = 1e-8 / field.eps;
    for i in 0..ny {
        if !py && (i == 0 || i == ny - 1) {
            continue;
        }
        let (im, ip) = ((i + ny - 1) % ny, (i + 1) % ny);
        for j in 0..nz {
            if !m.periodic_z && (j == 0 || j == nz - 1) {
                continue;
            }
            let k = m.idx(i, j);
            if u[k].abs() > 1.0 - beta {
                continue;
            }
            let (jm, jp) = ((j + nz - 1) % nz, (j + 1) % nz);
            let at = |a: usize, b: usize| u[m.idx(a, b)];
            let (hy, hz) = (m.hy, m.hz);
            let uy = (at(ip, j) - at(im, j)) / (2.0 * hy);
            let uz = (at(i, jp) - at(i, jm)) / (2.0 * hz);
            let uyy = (at(ip, j) - 2.0 * u[k] + at(im, j)) / (hy * hy);
            let uzz = (at(i, jp) - 2.0 * u[k] + at(i, jm)) / (hz * hz);
            let uyz = (at(ip, jp) - at(ip, jm) - at(im, jp) + at(im, jm)) / (4.0 * hy * hz);
            let p = m.metric.point(m.y[i], m.z[j]);
            let a = p.a;
            // covariant Hessian with Gamma^y_yy = a_y/a, Gamma^y_yz = a_z/a, Gamma^z_yy = -a a_z
            let hyy = uyy - p.a_y / a * uy + a * p.a_z * uz;
            let hyz = uyz - p.a_z / a * uy;
            let h11 = hyy / (a * a);
            let h12 = hyz / a;
            let h22 = uzz;
            let g = [uy / a, uz];
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if gn < floor {
                return Err(LabError::DegenerateGradient(format!("|grad u| = {gn:.3e} at node ({i}, {j})")));
            }
            let nu = [g[0] / gn, g[1] / gn];
            let hn = [h11 * nu[0] + h12 * nu[1], h12 * nu[0] + h22 * nu[1]];
            let frob = h11 * h11 + 2.0 * h12 * h12 + h22 * h22;
            let a2 = ((frob - hn[0] * hn[0] - hn[1] * hn[1]) / (gn * gn)).max(0.0);
            let tv = [-nu[1], nu[0]];
            let htt = tv[0] * (h11 * tv[0] + h12 * tv[1]) + tv[1] * (h12 * tv[0] + h22 * tv[1]);
            let sff2 = htt * htt / (gn * gn);
            min_dom = min_dom.min(a2 - sff2);
            samples.push(a2.sqrt());
        }
    }
    let sup = samples.iter().fold(0.0f64, |a, v| a.max(*v));
    Ok(EnhancedSff { samples, sup, min_dominance: min_dom })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Beta, Family};
    use crate::heteroclinic::{solve_profile, truncate, Profile};

    fn flat_mesh(ny: usize, nz: usize, z: (f64, f64), pz: bool) -> Arc<Mesh> {
        let m = WarpedMetric::flat(Base::Periodic { length: 1.0 }, (-2.0, 2.0));
        Arc::new(Mesh::new(&m, ny, z, nz, pz).unwrap())
    }

    fn profile() -> Arc<Profile> {
        Arc::new(solve_profile(&DoubleWell::standard(), 16.0, 4096).unwrap())
    }

    #[test]
    fn trivial_fields() {
        let mesh = flat_mesh(8, 64, (-1.0, 1.0), true);
        let w = DoubleWell::standard();
        let one = PhaseField::from_fn(mesh.clone(), 0.25, w.clone(), |_, _| 1.0).unwrap();
        assert_eq!(one.energy(), 0.0);
        assert_eq!(one.varifold_mass(1.0), 0.0);
        let m1 = PhaseField::from_fn(mesh.clone(), 0.25, w.clone(), |_, _| -1.0).unwrap();
        assert!(m1.residual().iter().all(|v| *v == 0.0));
        let zero = PhaseField::from_fn(mesh.clone(), 0.25, w.clone(), |_, _| 0.0).unwrap();
        assert!((zero.energy() - 0.25 * 2.0 / 0.25).abs() < 1e-12);
        assert!(zero.residual().iter().all(|v| *v == 0.0));
        let (_, rep) = one.newton_solve(1e-12, 5).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(PhaseField::from_fn(mesh, 0.05, w, |_, _| 1.0).is_err());
    }

    #[test]
    fn laplacian_symmetric_and_consistent() {
        let m = WarpedMetric::new(
            Family::PeriodicWarp { beta: Beta::Cosine { b0: 0.3, b1: 0.2 }, m: 1, period: 2.0 },
            Base::Periodic { length: 1.0 },
            (-0.5, 1.5),
        )
        .unwrap();
        let mesh = Mesh::new(&m, 32, (-0.5, 1.5), 64, true).unwrap();
        let f = |y: f64, z: f64| (2.0 * std::f64::consts::PI * y).sin() + (std::f64::consts::PI * z).cos();
        let g = |y: f64, z: f64| (2.0 * std::f64::consts::PI * y).cos() * (std::f64::consts::PI * z).sin();
        let mut u = vec![0.0; mesh.len()];
        let mut v = vec![0.0; mesh.len()];
        for i in 0..32 {
            for j in 0..64 {
                u[mesh.idx(i, j)] = f(mesh.y[i], mesh.z[j]);
                v[mesh.idx(i, j)] = g(mesh.y[i], mesh.z[j]);
            }
        }
        let lu = mesh.laplacian(&u);
        let lv = mesh.laplacian(&v);
        let a = linalg::wdot(&lu, &v, &mesh.w);
        let b = linalg::wdot(&u, &lv, &mesh.w);
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        // -<Lap u, u> = int |grad u|^2
        assert!((linalg::wdot(&lu, &u, &mesh.w) + mesh.dirichlet_sum(&u)).abs() < 1e-9);
    }

    #[test]
    fn single_layer_energy_and_newton() {
        let eps = 0.1;
        let mesh = Arc::new(
            Mesh::new(&WarpedMetric::flat(Base::Periodic { length: 1.0 }, (-2.0, 2.0)), 6, (-1.5, 1.5), 241, false).unwrap(),
        );
        let p = profile();
        let w = DoubleWell::standard();
        let field = PhaseField::from_fn(mesh.clone(), eps, w, |_, z| p.value(z / eps)).unwrap();
        assert!((field.energy() / p.h0 - 1.0).abs() < 1e-2);
        let (sol, rep) = field.newton_solve(1e-10, 20).unwrap();
        assert!(sol.residual_sup() <= 1e-10);
        assert!(rep.iterations <= 6, "{:?}", rep.residuals);
        assert!((sol.varifold_mass(p.h0) - 1.0).abs() < 1e-2);
        let st = nodal_layers(&sol).unwrap();
        assert_eq!(st.q, 1);
        assert!(st.f[0].iter().all(|v| v.abs() < 1e-6));
        assert!(sol.sup_abs() < 1.0 + 1e-9);
    }

    #[test]
    fn gradient_flow_monotone() {
        let eps = 0.2;
        let mesh = flat_mesh(8, 80, (-1.0, 1.0), true);
        let w = DoubleWell::standard();
        let f = PhaseField::from_fn(mesh.clone(), eps, w.clone(), |y, z| 1.0 - 0.05 * (6.0 * y + 3.0 * z).sin().abs()).unwrap();
        let (g, rep) = f.gradient_flow(0.5, 40).unwrap();
        assert!(rep.energies.windows(2).all(|e| e[1] <= e[0] + 1e-12));
        assert!(g.u.iter().all(|v| (v - 1.0).abs() < 1e-4));
        let one = PhaseField::from_fn(mesh, eps, w, |_, _| 1.0).unwrap();
        let (o2, _) = one.gradient_flow(0.1, 3).unwrap();
        assert!(o2.u.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn ansatz_roundtrip() {
        let eps = 0.05;
        let mesh = Arc::new(
            Mesh::new(&WarpedMetric::flat(Base::Periodic { length: 1.0 }, (-2.0, 2.0)), 8, (-1.5, 1.5), 481, false).unwrap(),
        );
        let p = Arc::new(Profile::for_epsilon(&DoubleWell::standard(), eps).unwrap());
        let tp = truncate(p, 3.0 * eps.ln().abs()).unwrap();
        let f = vec![vec![-0.4; 8], vec![0.45; 8]];
        let sheets = SheetSet::new(&mesh, f.clone()).unwrap();
        let h = vec![vec![0.3 * eps; 8]; 2];
        let u = superpose(mesh.clone(), &tp, eps, &sheets, &h).unwrap();
        assert_eq!(u.u[0], -1.0);
        assert_eq!(*u.u.last().unwrap(), -1.0);
        let mut st = nodal_layers(&u).unwrap();
        assert_eq!(st.q, 2);
        st.f = f;
        let (fit, _) = fit_offsets(&u, &st, &tp).unwrap();
        for l in 0..2 {
            for i in 0..8 {
                assert!((fit.h[l][i] - 0.3 * eps).abs() < 1e-8);
            }
        }
        assert!(fit.orthogonality_residual < 1e-8);
        assert!(superpose(mesh, &tp, eps, &SheetSet::new(&u.mesh, vec![vec![0.0; 8], vec![0.1; 8]]).unwrap(), &h).is_err());
    }

    #[test]
    fn enhanced_sff_flat_layer_vanishes() {
        let eps = 0.1;
        let mesh = flat_mesh(8, 160, (-1.0, 1.0), true);
        let p = profile();
        let f = PhaseField::from_fn(mesh, eps, DoubleWell::standard(), |_, z| p.value(z / eps)).unwrap();
        let e = enhanced_sff(&f, 0.1).unwrap();
        assert!(e.sup < 1e-9);
        assert!(!e.samples.is_empty());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mesh = flat_mesh(8, 16, (-1.0, 1.0), true);
        let f = PhaseField::from_fn(mesh, 1.0, DoubleWell::standard(), |y, z| y * z).unwrap();
        let mut buf = vec![];
        f.write_checkpoint(&mut buf).unwrap();
        let c = read_checkpoint(&buf[..]).unwrap();
        assert_eq!((c.ny, c.nz), (8, 16));
        assert_eq!(c.u, f.u);
        assert_eq!(c.metric_id, f.mesh.metric.id());
    }
}
