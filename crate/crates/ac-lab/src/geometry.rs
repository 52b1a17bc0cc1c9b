//! Warped-product geometry g = a(y,z)^2 dy^2 + dz^2 over a one-dimensional base.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numeric, LabError, Result};
use crate::linalg;

/// The base curve Sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Base {
    Periodic { length: f64 },
    Interval { y0: f64, y1: f64 },
}

impl Base {
    pub fn length(&self) -> f64 {
        match *self {
            Base::Periodic { length } => length,
            Base::Interval { y0, y1 } => y1 - y0,
        }
    }
    pub fn is_periodic(&self) -> bool {
        matches!(self, Base::Periodic { .. })
    }
    pub fn origin(&self) -> f64 {
        match *self {
            Base::Periodic { .. } => 0.0,
            Base::Interval { y0, .. } => y0,
        }
    }
    /// Node coordinates: n nodes on [0, L) when periodic, n nodes including both ends otherwise.
    pub fn nodes(&self, n: usize) -> Vec<f64> {
        match *self {
            Base::Periodic { length } => (0..n).map(|i| length * i as f64 / n as f64).collect(),
            Base::Interval { y0, y1 } => (0..n).map(|i| y0 + (y1 - y0) * i as f64 / (n - 1) as f64).collect(),
        }
    }
    pub fn spacing(&self, n: usize) -> f64 {
        match *self {
            Base::Periodic { length } => length / n as f64,
            Base::Interval { y0, y1 } => (y1 - y0) / (n - 1) as f64,
        }
    }
}

/// y-dependence of a warp amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Beta {
    /// b0 + b1 cos(2 pi y / L).
    Cosine { b0: f64, b1: f64 },
    /// -phi''/phi + shift with phi = exp(sigma cos(2 pi y / L)).
    JacobiField { sigma: f64, shift: f64 },
}

impl Beta {
    /// (beta, beta', beta'').
    pub fn eval(&self, y: f64, len: f64) -> [f64; 3] {
        let k = 2.0 * PI / len;
        let (s, c) = (k * y).sin_cos();
        match *self {
            Beta::Cosine { b0, b1 } => [b0 + b1 * c, -b1 * k * s, -b1 * k * k * c],
            Beta::JacobiField { sigma, shift } => {
                let k2 = k * k;
                let k3 = k2 * k;
                let (s2, c2) = (2.0 * k * y).sin_cos();
                [
                    sigma * k2 * c - sigma * sigma * k2 * s * s + shift,
                    -sigma * k3 * s - sigma * sigma * k3 * s2,
                    -sigma * k2 * k2 * c - 2.0 * sigma * sigma * k2 * k2 * c2,
                ]
            }
        }
    }
}

/// Shipped metric families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    Flat,
    /// Neighbourhood of a circle of radius r in the flat plane, y = arclength.
    Circle { r: f64 },
    /// a = cos(sqrt(c) z) (cosh for c < 0): |sff|^2 + Ric = c on the leaf z = 0.
    ConstantPotential { c: f64 },
    /// a = exp(beta(y) (cos(2 pi m z / P) - 1)).
    PeriodicWarp { beta: Beta, m: u32, period: f64 },
    /// a = exp(-beta(y) z^2 / 2).
    GaussianWarp { beta: Beta },
}

/// Metric factor a and its derivatives at a point.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricPoint {
    pub a: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub a_yy: f64,
    pub a_yz: f64,
    pub a_zz: f64,
}

impl MetricPoint {
    /// Mean curvature of the leaf {z = const}: a_z / a (also the shape operator).
    pub fn h_z(&self) -> f64 {
        self.a_z / self.a
    }
    /// Ric(dz, dz) = Gauss curvature = -a_zz / a.
    pub fn ric_zz(&self) -> f64 {
        -self.a_zz / self.a
    }
    /// |sff|^2 + Ric(dz, dz).
    pub fn potential(&self) -> f64 {
        let s = self.a_z / self.a;
        s * s - self.a_zz / self.a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpedMetric {
    pub family: Family,
    pub base: Base,
    pub z_range: (f64, f64),
}

/// Geometry of a leaf {z = const} at one base point.
#[derive(Debug, Clone, Copy)]
pub struct LeafGeometry {
    /// g_z(dy, dy) = a^2.
    pub g: f64,
    /// sff_z(dy, dy) = a a_z.
    pub sff: f64,
    /// H_z = a_z / a.
    pub h: f64,
    /// |sff_z|^2.
    pub sff2: f64,
}

impl WarpedMetric {
    pub fn new(family: Family, base: Base, z_range: (f64, f64)) -> Result<WarpedMetric> {
        if !(z_range.0 < z_range.1) {
            return invalid("empty z range");
        }
        if base.length() <= 0.0 {
            return invalid("empty base");
        }
        let m = WarpedMetric { family, base, z_range };
        if let Some(d) = m.focal_distance() {
            if d > z_range.0 && d < z_range.1 {
                return Err(LabError::GeometryDegenerate { distance: d });
            }
        }
        Ok(m)
    }

    pub fn flat(base: Base, z_range: (f64, f64)) -> WarpedMetric {
        WarpedMetric { family: Family::Flat, base, z_range }
    }

    /// Short identifier stored in checkpoints and reports.
    pub fn id(&self) -> String {
        let f = match self.family {
            Family::Flat => "flat".to_string(),
            Family::Circle { r } => format!("circle(r={r})"),
            Family::ConstantPotential { c } => format!("const-potential(c={c})"),
            Family::PeriodicWarp { beta, m, period } => format!("periodic-warp({beta:?},m={m},P={period})"),
            Family::GaussianWarp { beta } => format!("gaussian-warp({beta:?})"),
        };
        let b = match self.base {
            Base::Periodic { length } => format!("S1({length})"),
            Base::Interval { y0, y1 } => format!("[{y0},{y1}]"),
        };
        format!("{f}/{b}")
    }

    /// Signed distance to the first focal point of the leaf z = 0, if any.
    pub fn focal_distance(&self) -> Option<f64> {
        match self.family {
            Family::Circle { r } => Some(-r),
            Family::ConstantPotential { c } if c > 0.0 => Some(PI / (2.0 * c.sqrt())),
            _ => None,
        }
    }

    /// Closed-form metric factor and derivatives.
    #[inline]
    pub fn point(&self, y: f64, z: f64) -> MetricPoint {
        let len = self.base.length();
        match self.family {
            Family::Flat => MetricPoint { a: 1.0, ..Default::default() },
            Family::Circle { r } => MetricPoint { a: 1.0 + z / r, a_z: 1.0 / r, ..Default::default() },
            Family::ConstantPotential { c } => {
                if c > 0.0 {
                    let q = c.sqrt();
                    let (s, co) = (q * z).sin_cos();
                    MetricPoint { a: co, a_z: -q * s, a_zz: -c * co, ..Default::default() }
                } else if c < 0.0 {
                    let q = (-c).sqrt();
                    MetricPoint { a: (q * z).cosh(), a_z: q * (q * z).sinh(), a_zz: -c * (q * z).cosh(), ..Default::default() }
                } else {
                    MetricPoint { a: 1.0, ..Default::default() }
                }
            }
            Family::PeriodicWarp { beta, m, period } => {
                let k = 2.0 * PI * m as f64 / period;
                let (s, c) = (k * z).sin_cos();
                warp_point(beta.eval(y, len), [c - 1.0, -k * s, -k * k * c])
            }
            Family::GaussianWarp { beta } => warp_point(beta.eval(y, len), [-0.5 * z * z, -z, -1.0]),
        }
    }

    #[inline]
    pub fn a(&self, y: f64, z: f64) -> f64 {
        self.point(y, z).a
    }

    /// |sff|^2 + Ric(dz, dz) on the leaf z.
    pub fn potential(&self, y: f64, z: f64) -> f64 {
        self.point(y, z).potential()
    }

    pub fn leaf(&self, y: f64, z: f64) -> LeafGeometry {
        let p = self.point(y, z);
        let s = p.a_z / p.a;
        LeafGeometry { g: p.a * p.a, sff: p.a * p.a_z, h: s, sff2: s * s }
    }
}

#[inline]
fn warp_point(b: [f64; 3], psi: [f64; 3]) -> MetricPoint {
    let a = (b[0] * psi[0]).exp();
    let ly = b[1] * psi[0];
    let lz = b[0] * psi[1];
    MetricPoint {
        a,
        a_y: a * ly,
        a_z: a * lz,
        a_yy: a * (ly * ly + b[2] * psi[0]),
        a_yz: a * (b[1] * psi[1] + ly * lz),
        a_zz: a * (lz * lz + b[0] * psi[2]),
    }
}

/// Leaf geometry at height z obtained by integrating the Riccati system from the z = 0 leaf:
/// d/dz g = 2 sff, d/dz s = -s^2 - Ric(dz,dz), with s = sff / g the shape operator (= H in one dimension).
pub fn evolve_geometry(metric: &WarpedMetric, y: f64, z: f64) -> Result<LeafGeometry> {
    if z < metric.z_range.0 || z > metric.z_range.1 {
        return invalid(format!("z = {z} outside the metric range"));
    }
    let p0 = metric.point(y, 0.0);
    let mut state = [p0.a * p0.a, p0.a_z / p0.a];
    let rhs = |zz: f64, st: [f64; 2]| {
        let k = metric.point(y, zz).ric_zz();
        [2.0 * st[0] * st[1], -st[1] * st[1] - k]
    };
    let rk4 = |zz: f64, st: [f64; 2], h: f64| {
        let k1 = rhs(zz, st);
        let k2 = rhs(zz + 0.5 * h, [st[0] + 0.5 * h * k1[0], st[1] + 0.5 * h * k1[1]]);
        let k3 = rhs(zz + 0.5 * h, [st[0] + 0.5 * h * k2[0], st[1] + 0.5 * h * k2[1]]);
        let k4 = rhs(zz + h, [st[0] + h * k3[0], st[1] + h * k3[1]]);
        [
            st[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            st[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    let mut zc = 0.0;
    let dir = z.signum();
    let mut h = 1e-2 * dir;
    let tol = 1e-12;
    let mut guard = 0;
    while (z - zc) * dir > 0.0 {
        guard += 1;
        if guard > 1_000_000 {
            return numeric("Riccati integration did not finish");
        }
        if (zc + h - z) * dir > 0.0 {
            h = z - zc;
        }
        let full = rk4(zc, state, h);
        let half = rk4(zc + 0.5 * h, rk4(zc, state, 0.5 * h), 0.5 * h);
        let err = (full[0] - half[0]).abs().max((full[1] - half[1]).abs()) / 15.0;
        if err <= tol * (1.0 + half[1].abs()) || h.abs() < 1e-10 {
            zc += h;
            state = half;
            if state[0] <= 1e-14 || !state[1].is_finite() || state[1].abs() > 1e10 {
                return Err(LabError::GeometryDegenerate { distance: zc });
            }
            if err < 0.01 * tol {
                h *= 2.0;
            }
        } else {
            h *= 0.5;
        }
    }
    let (g, s) = (state[0], state[1]);
    Ok(LeafGeometry { g, sff: g * s, h: s, sff2: s * s })
}

/// Spectral derivative of periodic samples over a period of length `len`.
pub fn spectral_derivative(f: &[f64], len: f64) -> Vec<f64> {
    let n = f.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let k = if j < n / 2 {
            j as f64
        } else if j == n / 2 && n % 2 == 0 {
            0.0
        } else {
            j as f64 - n as f64
        };
        *c *= Complex::new(0.0, 2.0 * PI * k / len);
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// A graph z = f(y) sampled on the base nodes.
#[derive(Debug, Clone)]
pub struct GraphSurface {
    pub y: Vec<f64>,
    pub f: Vec<f64>,
}

impl GraphSurface {
    pub fn new(metric: &WarpedMetric, f: Vec<f64>) -> GraphSurface {
        GraphSurface { y: metric.base.nodes(f.len()), f }
    }
}

fn check_chart(metric: &WarpedMetric, f: &[f64]) -> Result<()> {
    for (i, &v) in f.iter().enumerate() {
        if !v.is_finite() || v < metric.z_range.0 || v > metric.z_range.1 {
            return Err(LabError::OutOfChart(format!("node {i}: f = {v}")));
        }
    }
    Ok(())
}

/// Pointwise data of a graph: a~ = a(y, f), p = f'/a~, and the metric at the graph.
struct GraphData {
    at: Vec<MetricPoint>,
    p: Vec<f64>,
    flux: Vec<f64>,
}

fn graph_data(metric: &WarpedMetric, g: &GraphSurface) -> GraphData {
    let n = g.f.len();
    let at: Vec<MetricPoint> = (0..n).map(|i| metric.point(g.y[i], g.f[i])).collect();
    let fp = match metric.base {
        Base::Periodic { length } => spectral_derivative(&g.f, length),
        Base::Interval { .. } => {
            let h = g.y[1] - g.y[0];
            (0..n)
                .map(|i| {
                    if i == 0 {
                        (-3.0 * g.f[0] + 4.0 * g.f[1] - g.f[2]) / (2.0 * h)
                    } else if i == n - 1 {
                        (3.0 * g.f[n - 1] - 4.0 * g.f[n - 2] + g.f[n - 3]) / (2.0 * h)
                    } else {
                        (g.f[i + 1] - g.f[i - 1]) / (2.0 * h)
                    }
                })
                .collect()
        }
    };
    let p: Vec<f64> = fp.iter().zip(&at).map(|(d, m)| d / m.a).collect();
    let flux = p.iter().map(|&q| q / (1.0 + q * q).sqrt()).collect();
    GraphData { at, p, flux }
}

/// Mean curvature H[f] (divergence of the upward unit normal) of the graph of f.
pub fn graph_mean_curvature(metric: &WarpedMetric, g: &GraphSurface) -> Result<Vec<f64>> {
    check_chart(metric, &g.f)?;
    let n = g.f.len();
    match metric.base {
        Base::Periodic { length } => {
            let d = graph_data(metric, g);
            let dflux = spectral_derivative(&d.flux, length);
            Ok((0..n)
                .map(|i| -dflux[i] / d.at[i].a + d.at[i].h_z() / (1.0 + d.p[i] * d.p[i]).sqrt())
                .collect())
        }
        Base::Interval { .. } => Ok(interval_mean_curvature(metric, &g.y, &g.f)),
    }
}

/// Conservative second-order discretisation on an interval; boundary entries are one-sided.
fn interval_mean_curvature(metric: &WarpedMetric, y: &[f64], f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let h = y[1] - y[0];
    let q_half = |i: usize| {
        let am = metric.a(0.5 * (y[i] + y[i + 1]), 0.5 * (f[i] + f[i + 1]));
        let p = (f[i + 1] - f[i]) / (h * am);
        p / (1.0 + p * p).sqrt()
    };
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let m = metric.point(y[i], f[i]);
        let p = (f[i + 1] - f[i - 1]) / (2.0 * h * m.a);
        out[i] = -(q_half(i) - q_half(i - 1)) / (h * m.a) + m.h_z() / (1.0 + p * p).sqrt();
    }
    out[0] = 2.0 * out[1] - out[2];
    out[n - 1] = 2.0 * out[n - 2] - out[n - 3];
    out
}

/// Area of the graph: int sqrt(1 + p^2) a~ dy.
pub fn graph_area(metric: &WarpedMetric, g: &GraphSurface) -> Result<f64> {
    check_chart(metric, &g.f)?;
    let d = graph_data(metric, g);
    let h = metric.base.spacing(g.f.len());
    let n = g.f.len();
    let mut s = 0.0;
    for i in 0..n {
        let w = if !metric.base.is_periodic() && (i == 0 || i == n - 1) { 0.5 } else { 1.0 };
        s += w * (1.0 + d.p[i] * d.p[i]).sqrt() * d.at[i].a;
    }
    Ok(s * h)
}

/// int H[f] phi a~ dy: the first variation of area along the vertical field phi dz.
pub fn first_variation(metric: &WarpedMetric, g: &GraphSurface, phi: &[f64]) -> Result<f64> {
    let hf = graph_mean_curvature(metric, g)?;
    let h = metric.base.spacing(g.f.len());
    Ok((0..g.f.len()).map(|i| hf[i] * phi[i] * metric.a(g.y[i], g.f[i])).sum::<f64>() * h)
}

/// Q~f = H[f] - H_0 + div_{g_f}(grad f / sqrt(1+|grad f|^2)) + (|sff_0|^2 + Ric) f.
pub fn quad_error(metric: &WarpedMetric, g: &GraphSurface) -> Result<Vec<f64>> {
    let hf = graph_mean_curvature(metric, g)?;
    let d = graph_data(metric, g);
    let n = g.f.len();
    let dflux = match metric.base {
        Base::Periodic { length } => spectral_derivative(&d.flux, length),
        Base::Interval { .. } => {
            let h = g.y[1] - g.y[0];
            (0..n)
                .map(|i| {
                    let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                    (d.flux[b] - d.flux[a]) / ((b - a) as f64 * h)
                })
                .collect()
        }
    };
    Ok((0..n)
        .map(|i| {
            let p0 = metric.point(g.y[i], 0.0);
            hf[i] - p0.h_z() + dflux[i] / d.at[i].a + p0.potential() * g.f[i]
        })
        .collect())
}

/// The Jacobi operator of the leaf z = `leaf` on `n` base nodes.
#[derive(Debug, Clone)]
pub struct JacobiOperator {
    pub y: Vec<f64>,
    pub leaf: f64,
    /// a(y, leaf) at nodes.
    pub a: Vec<f64>,
    /// a at half nodes (i + 1/2).
    pub a_half: Vec<f64>,
    pub v: Vec<f64>,
    pub h: f64,
    pub periodic: bool,
}

pub fn jacobi_operator(metric: &WarpedMetric, n: usize, leaf: f64) -> JacobiOperator {
    let y = metric.base.nodes(n);
    let h = metric.base.spacing(n);
    let a = y.iter().map(|&yy| metric.a(yy, leaf)).collect();
    let a_half = y.iter().map(|&yy| metric.a(yy + 0.5 * h, leaf)).collect();
    let v = y.iter().map(|&yy| metric.potential(yy, leaf)).collect();
    JacobiOperator { y, leaf, a, a_half, v, h, periodic: metric.base.is_periodic() }
}

impl JacobiOperator {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Volume weights a h (inner product for which the operator is symmetric).
    pub fn weights(&self) -> Vec<f64> {
        self.a.iter().map(|a| a * self.h).collect()
    }

    /// J f = -Lap f - V f with a conservative stencil; Dirichlet rows (interval ends) return f.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        let h2 = self.h * self.h;
        (0..n)
            .map(|i| {
                if !self.periodic && (i == 0 || i == n - 1) {
                    return f[i];
                }
                let (im, ip) = ((i + n - 1) % n, (i + 1) % n);
                let fl = 1.0 / self.a_half[im];
                let fr = 1.0 / self.a_half[i];
                -(fr * (f[ip] - f[i]) - fl * (f[i] - f[im])) / (h2 * self.a[i]) - self.v[i] * f[i]
            })
            .collect()
    }

    /// Spectrally accurate application on periodic bases.
    pub fn apply_spectral(&self, f: &[f64]) -> Vec<f64> {
        let len = self.h * self.len() as f64;
        let fp = spectral_derivative(f, len);
        let flux: Vec<f64> = fp.iter().zip(&self.a).map(|(d, a)| d / a).collect();
        let dd = spectral_derivative(&flux, len);
        (0..self.len()).map(|i| -dd[i] / self.a[i] - self.v[i] * f[i]).collect()
    }

    /// Symmetric matrix W^{1/2} J W^{-1/2} on the free nodes, and the free-node list.
    pub fn symmetric_matrix(&self) -> (nalgebra::DMatrix<f64>, Vec<usize>) {
        let n = self.len();
        let free: Vec<usize> = if self.periodic { (0..n).collect() } else { (1..n - 1).collect() };
        let m = free.len();
        let w: Vec<f64> = self.weights();
        let mut mat = nalgebra::DMatrix::zeros(m, m);
        for (r, &i) in free.iter().enumerate() {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let col = self.apply(&e);
            for (c, &k) in free.iter().enumerate() {
                mat[(c, r)] = col[k] * (w[k] / w[i]).sqrt();
            }
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        (sym, free)
    }

    /// Ascending eigenvalues with eigenvectors (as nodal functions).
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (mat, free) = self.symmetric_matrix();
        let (vals, vecs) = linalg::sym_eig(mat);
        let w = self.weights();
        let n = self.len();
        let fns = (0..vals.len())
            .map(|c| {
                let mut f = vec![0.0; n];
                for (r, &i) in free.iter().enumerate() {
                    f[i] = vecs[(r, c)] / w[i].sqrt();
                }
                f
            })
            .collect();
        (vals, fns)
    }

    /// eta = min over f of int (J f)^2 / int f^2 (squared smallest |eigenvalue|).
    pub fn nondegeneracy(&self) -> f64 {
        let (vals, _) = self.eigen();
        let m = vals.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        m * m
    }
}

/// Solves H[f] = 0 on an interval base with f = boundary + t at the ends.
pub fn minimal_graph(metric: &WarpedMetric, n: usize, boundary: (f64, f64), t: f64, tol: f64) -> Result<GraphSurface> {
    if metric.base.is_periodic() {
        return invalid("minimal_graph needs an interval base");
    }
    let y = metric.base.nodes(n);
    let (l, r) = (boundary.0 + t, boundary.1 + t);
    let mut f: Vec<f64> = y.iter().map(|&yy| l + (r - l) * (yy - y[0]) / (y[n - 1] - y[0])).collect();
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        check_chart(metric, &f)?;
        let hres = interval_mean_curvature(metric, &y, &f);
        let res = (1..n - 1).map(|i| hres[i].abs()).fold(0.0, f64::max);
        last = res;
        if res <= tol {
            return Ok(GraphSurface { y, f });
        }
        // tridiagonal Jacobian by three coloured perturbations
        let dlt = 1e-7;
        let (mut lo, mut di, mut up) = (vec![0.0; n - 2], vec![0.0; n - 2], vec![0.0; n - 2]);
        for color in 0..3 {
            let mut fp = f.clone();
            for i in (1..n - 1).filter(|i| i % 3 == color) {
                fp[i] += dlt;
            }
            let hp = interval_mean_curvature(metric, &y, &fp);
            for i in 1..n - 1 {
                let d = (hp[i] - hres[i]) / dlt;
                let k = i - 1;
                if i % 3 == color {
                    di[k] = d;
                } else if (i + 2) % 3 == color && i >= 2 {
                    lo[k] = d;
                } else if (i + 1) % 3 == color && i + 2 < n {
                    up[k] = d;
                }
            }
        }
        let rhs: Vec<f64> = (1..n - 1).map(|i| -hres[i]).collect();
        let step = linalg::thomas(&lo, &di, &up, &rhs);
        for i in 1..n - 1 {
            f[i] += step[i - 1];
        }
    }
    numeric(format!("minimal_graph Newton did not converge (last residual {last:.3e})"))
}

/// Minimal graphs for increasing t, checked to be strictly ordered.
pub fn foliation(metric: &WarpedMetric, n: usize, boundary: (f64, f64), ts: &[f64], tol: f64) -> Result<Vec<GraphSurface>> {
    let mut out: Vec<GraphSurface> = Vec::new();
    for (k, &t) in ts.iter().enumerate() {
        if k > 0 && t <= ts[k - 1] {
            return invalid("foliation parameters must increase");
        }
        let g = minimal_graph(metric, n, boundary, t, tol)?;
        if let Some(prev) = out.last() {
            if let Some(i) = (0..n).find(|&i| g.f[i] <= prev.f[i]) {
                return Err(LabError::FoliationViolation(format!("leaves t={} and t={t} touch at node {i}", ts[k - 1])));
            }
        }
        out.push(g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> WarpedMetric {
        WarpedMetric::new(Family::Circle { r: 1.0 }, Base::Periodic { length: 2.0 * PI }, (-0.9, 0.9)).unwrap()
    }

    #[test]
    fn flat_leaves() {
        let m = WarpedMetric::flat(Base::Periodic { length: 1.0 }, (-1.0, 1.0));
        let g = evolve_geometry(&m, 0.3, 0.7).unwrap();
        assert_eq!(g.h, 0.0);
        assert_eq!(g.sff, 0.0);
        let gs = GraphSurface::new(&m, vec![0.2; 32]);
        assert!(graph_mean_curvature(&m, &gs).unwrap().iter().all(|v| v.abs() < 1e-14));
        assert!((graph_area(&m, &gs).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn circle_leaf_curvature() {
        let m = circle();
        let g = evolve_geometry(&m, 0.0, 0.5).unwrap();
        assert!((g.h - 1.0 / 1.5).abs() < 1e-9);
        let gs = GraphSurface::new(&m, vec![0.5; 64]);
        let hf = graph_mean_curvature(&m, &gs).unwrap();
        assert!(hf.iter().all(|v| (v - 1.0 / 1.5).abs() < 1e-12));
        // first variation of area under a uniform normal push
        let s = 1e-5;
        let up = graph_area(&m, &GraphSurface::new(&m, vec![0.5 + s; 64])).unwrap();
        let dn = graph_area(&m, &GraphSurface::new(&m, vec![0.5 - s; 64])).unwrap();
        let fv = first_variation(&m, &gs, &[1.0; 64]).unwrap();
        assert!(((up - dn) / (2.0 * s) - fv).abs() < 1e-8);
    }

    #[test]
    fn focal_point_reported() {
        let m = WarpedMetric { family: Family::ConstantPotential { c: 1.0 }, base: Base::Periodic { length: 1.0 }, z_range: (-3.0, 3.0) };
        match evolve_geometry(&m, 0.0, 2.0) {
            Err(LabError::GeometryDegenerate { distance }) => assert!((distance - PI / 2.0).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        assert!(WarpedMetric::new(Family::ConstantPotential { c: 1.0 }, Base::Periodic { length: 1.0 }, (-3.0, 3.0)).is_err());
    }

    #[test]
    fn riccati_matches_closed_form() {
        let fams = [
            Family::ConstantPotential { c: 2.0 },
            Family::ConstantPotential { c: -1.5 },
            Family::PeriodicWarp { beta: Beta::Cosine { b0: 0.5, b1: 1.5 }, m: 1, period: 2.0 },
            Family::GaussianWarp { beta: Beta::JacobiField { sigma: 0.3, shift: 0.2 } },
        ];
        for fam in fams {
            let m = WarpedMetric::new(fam, Base::Periodic { length: 1.0 }, (-0.8, 0.8)).unwrap();
            for &(y, z) in &[(0.1, 0.5), (0.6, -0.7), (0.33, 0.2)] {
                let e = evolve_geometry(&m, y, z).unwrap();
                let c = m.leaf(y, z);
                assert!((e.h - c.h).abs() < 1e-6 && (e.g - c.g).abs() < 1e-6, "{fam:?}");
            }
        }
    }

    #[test]
    fn warp_potentials() {
        let k = PI;
        let m = WarpedMetric::new(
            Family::PeriodicWarp { beta: Beta::Cosine { b0: 0.3, b1: 0.0 }, m: 1, period: 2.0 },
            Base::Periodic { length: 1.0 },
            (-0.5, 1.5),
        )
        .unwrap();
        assert!((m.potential(0.2, 0.0) - 0.3 * k * k).abs() < 1e-12);
        assert!((m.potential(0.2, 1.0) + 0.3 * k * k).abs() < 1e-12);
        assert_eq!(m.point(0.4, 0.0).a_z, 0.0);
    }

    #[test]
    fn jacobi_examples() {
        let m = WarpedMetric::flat(Base::Periodic { length: 2.0 }, (-1.0, 1.0));
        let j = jacobi_operator(&m, 64, 0.0);
        assert!(j.apply(&[1.0; 64]).iter().all(|v| v.abs() < 1e-13));
        let f: Vec<f64> = j.y.iter().map(|y| (PI * y).sin()).collect();
        let jf = j.apply_spectral(&f);
        for i in 0..64 {
            assert!((jf[i] - PI * PI * f[i]).abs() < 1e-9);
        }
        let (vals, _) = j.eigen();
        assert!(vals[0].abs() < 1e-10 && vals[1] > 0.0);
        let c = WarpedMetric::new(Family::ConstantPotential { c: 2.0 }, Base::Periodic { length: 1.0 }, (-0.5, 0.5)).unwrap();
        let jc = jacobi_operator(&c, 32, 0.0);
        assert!(jc.apply(&[1.0; 32]).iter().all(|v| (v + 2.0).abs() < 1e-12));
    }

    #[test]
    fn minimal_graphs() {
        let m = WarpedMetric::flat(Base::Interval { y0: 0.0, y1: 1.0 }, (-1.0, 1.0));
        let g = minimal_graph(&m, 41, (0.0, 0.2), 0.0, 1e-12).unwrap();
        for (y, f) in g.y.iter().zip(&g.f) {
            assert!((f - 0.2 * y).abs() < 1e-12);
        }
        let g = minimal_graph(&m, 41, (0.0, 0.0), 0.3, 1e-12).unwrap();
        assert!(g.f.iter().all(|v| (v - 0.3).abs() < 1e-14));
        let w = WarpedMetric::new(
            Family::GaussianWarp { beta: Beta::Cosine { b0: 1.0, b1: 0.5 } },
            Base::Interval { y0: -1.0, y1: 1.0 },
            (-1.0, 1.0),
        )
        .unwrap();
        let leaves = foliation(&w, 81, (0.01, -0.02), &[-0.1, -0.05, 0.0, 0.05, 0.1], 1e-11).unwrap();
        assert_eq!(leaves.len(), 5);
    }

    #[test]
    fn quad_error_closed_form_and_scaling() {
        // leaves of z-symmetric warps make Q~ odd in f; the circle family has a genuine quadratic term
        let m = circle();
        let n = 128;
        let y = m.base.nodes(n);
        let f: Vec<f64> = y.iter().map(|y| 0.02 * y.sin() + 0.01 * (3.0 * y).cos()).collect();
        let q = quad_error(&m, &GraphSurface::new(&m, f.clone())).unwrap();
        let fp = spectral_derivative(&f, 2.0 * PI);
        for i in 0..n {
            let at = m.point(y[i], f[i]);
            let p = fp[i] / at.a;
            let p0 = m.point(y[i], 0.0);
            let closed = at.h_z() / (1.0 + p * p).sqrt() - p0.h_z() + p0.potential() * f[i];
            assert!((q[i] - closed).abs() < 1e-10);
        }
        let half: Vec<f64> = f.iter().map(|v| v / 2.0).collect();
        let q2 = quad_error(&m, &GraphSurface::new(&m, half)).unwrap();
        let r = q.iter().fold(0.0f64, |a, v| a.max(v.abs())) / q2.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((3.5..=4.5).contains(&r), "{r}");
        let z = quad_error(&m, &GraphSurface::new(&m, vec![0.0; n])).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-14));
    }
}
