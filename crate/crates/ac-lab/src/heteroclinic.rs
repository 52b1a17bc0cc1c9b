//! The one-dimensional heteroclinic, its truncations, the corrector J and the interaction integral.

use std::sync::Arc;

use crate::error::{invalid, numeric, Result};
use crate::potential::DoubleWell;
use crate::quad;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Quintic Hermite interpolation on a cell of width `h`, local coordinate `s` in [0,1].
/// Returns value, first and second derivative with respect to the physical variable.
#[inline]
pub fn hermite5(s: f64, h: f64, f0: [f64; 3], f1: [f64; 3]) -> [f64; 3] {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let b = [
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
        0.5 * s3 - s4 + 0.5 * s5,
        -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
        10.0 * s3 - 15.0 * s4 + 6.0 * s5,
    ];
    let d1 = [
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
        1.5 * s2 - 4.0 * s3 + 2.5 * s4,
        -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
        30.0 * s2 - 60.0 * s3 + 30.0 * s4,
    ];
    let d2 = [
        -60.0 * s + 180.0 * s2 - 120.0 * s3,
        -36.0 * s + 96.0 * s2 - 60.0 * s3,
        1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3,
        3.0 * s - 12.0 * s2 + 10.0 * s3,
        -24.0 * s + 84.0 * s2 - 60.0 * s3,
        60.0 * s - 180.0 * s2 + 120.0 * s3,
    ];
    let c = [f0[0], h * f0[1], h * h * f0[2], h * h * f1[2], h * f1[1], f1[0]];
    let dot = |w: &[f64; 6]| w.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
    [dot(&b), dot(&d1) / h, dot(&d2) / (h * h)]
}

/// Tabulated heteroclinic with tail constants.
#[derive(Debug, Clone)]
pub struct Profile {
    pub t_max: f64,
    pub n: usize,
    pub h: f64,
    pub t: Vec<f64>,
    pub hh: Vec<f64>,
    pub dh: Vec<f64>,
    pub d2h: Vec<f64>,
    /// H''' = W''(H) H'.
    pub d3h: Vec<f64>,
    /// 1 - |H|, kept separately for relative accuracy in the tails.
    pub comp: Vec<f64>,
    pub a0: f64,
    /// A0 fitted on the negative tail.
    pub a0_minus: f64,
    pub h0: f64,
    /// Constant C in |H -+ 1 +- A0 e^{-+sqrt2 t}| <= C e^{-2 sqrt2 |t|} on 4 <= |t| <= 10.
    pub tail_c: f64,
    pub first_integral_residual: f64,
    pub ode_residual: f64,
    pub well: DoubleWell,
}

/// Marches the complement c = 1 - H, c' = -sqrt(2 W(1 - c)).
fn rk4_march(well: &DoubleWell, h0: f64, dt: f64, steps: usize) -> f64 {
    let f = |x: f64| -(2.0 * well.w_from_one(x)).max(0.0).sqrt();
    let mut x = h0;
    for _ in 0..steps {
        let k1 = f(x);
        let k2 = f(x + 0.5 * dt * k1);
        let k3 = f(x + 0.5 * dt * k2);
        let k4 = f(x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

/// Least-squares fit of log(1 - |H|) + sqrt2|t| = log A0 + c e^{-sqrt2|t|} on the window.
fn fit_tail(t: &[f64], comp: &[f64], lo: f64, hi: f64, positive: bool) -> (f64, f64) {
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &gap) in t.iter().zip(comp) {
        let a = ti.abs();
        if (ti > 0.0) != positive || a < lo || a > hi {
            continue;
        }
        let y = gap.ln() + SQRT2 * a;
        let e = (-SQRT2 * a).exp();
        s11 += 1.0;
        s12 += e;
        s22 += e * e;
        b1 += y;
        b2 += e * y;
    }
    let det = s11 * s22 - s12 * s12;
    let la = (b1 * s22 - b2 * s12) / det;
    let c = (s11 * b2 - s12 * b1) / det;
    (la.exp(), c)
}

/// Solves H' = sqrt(2 W(H)), H(0) = 0 on [-t_max, t_max] with `n` intervals (rounded up to even).
pub fn solve_profile(well: &DoubleWell, t_max: f64, n: usize) -> Result<Profile> {
    solve_profile_window(well, t_max, n, (4.0, 8.0))
}

pub fn solve_profile_window(well: &DoubleWell, t_max: f64, n: usize, window: (f64, f64)) -> Result<Profile> {
    if !(t_max >= 10.0) {
        return invalid(format!("t_max = {t_max} < 10"));
    }
    if n < 2048 {
        return invalid(format!("grid size {n} < 2048"));
    }
    let n = n + n % 2;
    let h = 2.0 * t_max / n as f64;
    let c = n / 2;
    let t: Vec<f64> = (0..=n).map(|i| (i as f64 - c as f64) * h).collect();
    // the well is even, so H is odd: march the complement on t >= 0 and mirror
    let mut comp = vec![1.0; n + 1];
    let sub = 8;
    for i in c..n {
        comp[i + 1] = rk4_march(well, comp[i], h / sub as f64, sub);
    }
    for i in 0..c {
        comp[i] = comp[n - i];
    }
    let hh: Vec<f64> = (0..=n).map(|i| if i >= c { 1.0 - comp[i] } else { comp[i] - 1.0 }).collect();
    if comp[c..].windows(2).any(|p| p[1] >= p[0] || p[1] <= 0.0) {
        return numeric("profile is not strictly increasing");
    }
    let dh: Vec<f64> = comp.iter().map(|&x| (2.0 * well.w_from_one(x)).max(0.0).sqrt()).collect();
    let d2h: Vec<f64> = hh.iter().map(|&x| well.dw(x)).collect();
    let d3h: Vec<f64> = hh.iter().zip(&dh).map(|(&x, &d)| well.d2w(x) * d).collect();

    // sixth-order central differences as an independent consistency check
    const D1: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    const D2: [f64; 4] = [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
    let (mut fi, mut ode) = (0.0f64, 0.0f64);
    for i in 3..=n - 3 {
        let mut d1 = 0.0;
        let mut d2 = D2[0] * hh[i];
        for k in 1..=3 {
            d1 += D1[k - 1] * (hh[i + k] - hh[i - k]);
            d2 += D2[k] * (hh[i + k] + hh[i - k]);
        }
        d1 /= h;
        d2 /= h * h;
        fi = fi.max((d1 * d1 - 2.0 * well.w(hh[i])).abs());
        ode = ode.max((d2 - well.dw(hh[i])).abs());
    }
    if fi > 1e-10 {
        return numeric(format!("first-integral residual {fi:.3e} exceeds 1e-10"));
    }
    if ode > 1e-9 {
        return numeric(format!("ODE residual {ode:.3e} exceeds 1e-9"));
    }

    let h0 = well.h0(1e-14)?;
    let (a0, _) = fit_tail(&t, &comp, window.0, window.1, true);
    let (a0_minus, _) = fit_tail(&t, &comp, window.0, window.1, false);
    let mut tail_c = 0.0f64;
    for (&ti, &x) in t.iter().zip(&comp) {
        let a = ti.abs();
        if (4.0..=10.0).contains(&a) {
            let dev = (x - a0 * (-SQRT2 * a).exp()).abs();
            tail_c = tail_c.max(dev * (2.0 * SQRT2 * a).exp());
        }
    }
    Ok(Profile {
        t_max,
        n,
        h,
        t,
        hh,
        dh,
        d2h,
        d3h,
        comp,
        a0,
        a0_minus,
        h0,
        tail_c,
        first_integral_residual: fi,
        ode_residual: ode,
        well: well.clone(),
    })
}

impl Profile {
    /// Standard-well profile large enough for the truncation at this epsilon.
    pub fn for_epsilon(well: &DoubleWell, eps: f64) -> Result<Profile> {
        let lam = 3.0 * eps.ln().abs();
        let t_max = (2.0 * lam + 2.0).ceil().max(16.0);
        let n = (256.0 * t_max) as usize;
        solve_profile(well, t_max, n)
    }

    /// (H, H', H'') at any t; beyond t_max the exponential tail is used.
    #[inline]
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let a = t.abs();
        if a >= self.t_max {
            let s = t.signum();
            let e = self.a0 * (-SQRT2 * a).exp();
            return [s * (1.0 - e), SQRT2 * e, -s * 2.0 * e];
        }
        let x = (t + self.t_max) / self.h;
        let i = (x.floor() as usize).min(self.n - 1);
        let s = x - i as f64;
        let v = hermite5(
            s,
            self.h,
            [self.hh[i], self.dh[i], self.d2h[i]],
            [self.hh[i + 1], self.dh[i + 1], self.d2h[i + 1]],
        );
        let d = hermite5(
            s,
            self.h,
            [self.dh[i], self.d2h[i], self.d3h[i]],
            [self.dh[i + 1], self.d2h[i + 1], self.d3h[i + 1]],
        );
        [v[0], d[0], v[2]]
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.eval(t)[0]
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        self.eval(t)[1]
    }

    /// int H'^2 over the line (grid panels plus analytic tails).
    pub fn energy(&self) -> f64 {
        let f = |t: f64| {
            let d = self.deriv(t);
            d * d
        };
        let mut s = 0.0;
        for i in 0..self.n {
            s += quad::gk15(&f, self.t[i], self.t[i + 1]).0;
        }
        s + 2.0 * self.a0 * self.a0 * (-2.0 * SQRT2 * self.t_max).exp() / SQRT2
    }

    /// int g(t) over the grid panels, with g assumed negligible beyond t_max.
    pub fn integrate_grid<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        (0..self.n).map(|i| quad::gk15(&g, self.t[i], self.t[i + 1]).0).sum()
    }
}

/// Quintic smoothstep S(x) = 6x^5 - 15x^4 + 10x^3 and its first four derivatives, clamped to [0,1].
#[inline]
pub fn smoothstep(x: f64) -> [f64; 5] {
    if x <= 0.0 {
        return [0.0; 5];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0, 0.0];
    }
    let x2 = x * x;
    [
        x2 * x * (10.0 - 15.0 * x + 6.0 * x2),
        30.0 * x2 * (1.0 - x) * (1.0 - x),
        60.0 * x * (1.0 - 3.0 * x + 2.0 * x2),
        60.0 - 360.0 * x + 360.0 * x2,
        720.0 * x - 360.0,
    ]
}

/// Truncation cutoff: 1 on |s| <= 1, 0 on |s| >= 2; derivatives up to order four.
#[inline]
pub fn chi(s: f64) -> [f64; 5] {
    let a = s.abs();
    if a <= 1.0 {
        return [1.0, 0.0, 0.0, 0.0, 0.0];
    }
    if a >= 2.0 {
        return [0.0; 5];
    }
    let st = smoothstep(a - 1.0);
    let sg = s.signum();
    [1.0 - st[0], -sg * st[1], -st[2], -sg * st[3], -st[4]]
}

/// The truncated heteroclinic with its defect table.
#[derive(Debug, Clone)]
pub struct TruncatedProfile {
    pub base: Arc<Profile>,
    pub lambda: f64,
    pub defect_t: Vec<f64>,
    /// Rows (xi, xi', xi'').
    pub defect: Vec<[f64; 3]>,
    pub defect_sup: f64,
}

pub fn truncate(profile: Arc<Profile>, lambda: f64) -> Result<TruncatedProfile> {
    if !(lambda >= 4.0) {
        return invalid(format!("Lambda = {lambda} < 4"));
    }
    if lambda > profile.t_max / 2.0 {
        return invalid(format!("Lambda = {lambda} > T_max/2 = {}", profile.t_max / 2.0));
    }
    let mut tp = TruncatedProfile { base: profile, lambda, defect_t: vec![], defect: vec![], defect_sup: 0.0 };
    let m = 4000;
    let mut sup = 0.0f64;
    for k in 0..=m {
        let t = lambda + lambda * k as f64 / m as f64;
        for tt in [t, -t] {
            let d = tp.defect_at(tt);
            sup = sup.max(d[0].abs() + d[1].abs() + d[2].abs());
            if tt > 0.0 {
                tp.defect_t.push(tt);
                tp.defect.push(d);
            }
        }
    }
    tp.defect_sup = sup;
    Ok(tp)
}

impl TruncatedProfile {
    /// Derivatives g^(k), k = 0..4, of Hbar - sigma, using H'' = W'(H) and its differentiated forms.
    fn g_derivs(&self, t: f64) -> (f64, [f64; 5]) {
        let w = &self.base.well;
        let sigma = if t < 0.0 { -1.0 } else { 1.0 };
        let [hv, hp, _] = self.base.eval(t);
        let f = [
            hv - sigma,
            hp,
            w.dw(hv),
            w.d2w(hv) * hp,
            w.d3w(hv) * hp * hp + w.d2w(hv) * w.dw(hv),
        ];
        let c = chi(t / self.lambda);
        let mut cl = [0.0; 5];
        let mut p = 1.0;
        for j in 0..5 {
            cl[j] = c[j] / p;
            p *= self.lambda;
        }
        const BIN: [[f64; 5]; 5] = [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0, 0.0],
            [1.0, 3.0, 3.0, 1.0, 0.0],
            [1.0, 4.0, 6.0, 4.0, 1.0],
        ];
        let mut g = [0.0; 5];
        for k in 0..5 {
            for j in 0..=k {
                g[k] += BIN[k][j] * cl[j] * f[k - j];
            }
        }
        (sigma, g)
    }

    /// (Hbar, Hbar', Hbar'').
    #[inline]
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let a = t.abs();
        if a <= self.lambda {
            return self.base.eval(t);
        }
        if a >= 2.0 * self.lambda {
            return [t.signum(), 0.0, 0.0];
        }
        let (s, g) = self.g_derivs(t);
        [s + g[0], g[1], g[2]]
    }

    /// (xi, xi', xi'') with xi = Hbar'' - W'(Hbar).
    pub fn defect_at(&self, t: f64) -> [f64; 3] {
        let a = t.abs();
        if a <= self.lambda || a >= 2.0 * self.lambda {
            return [0.0; 3];
        }
        let w = &self.base.well;
        let (s, g) = self.g_derivs(t);
        let hb = s + g[0];
        [
            g[2] - w.dw(hb),
            g[3] - w.d2w(hb) * g[1],
            g[4] - w.d3w(hb) * g[1] * g[1] - w.d2w(hb) * g[2],
        ]
    }
}

/// The corrector J solving J'' = W''(H) J + t H', J(0) = 0, bounded.
#[derive(Debug, Clone)]
pub struct JTable {
    pub t: Vec<f64>,
    pub j: Vec<f64>,
    pub dj: Vec<f64>,
    pub d2j: Vec<f64>,
    pub h: f64,
    pub t_max: f64,
    pub ode_residual: f64,
    pub parity_error: f64,
}

pub fn solve_j(profile: &Profile) -> Result<JTable> {
    let p = profile;
    let n = p.n;
    let c = n / 2;
    let g_int = |tau: f64| {
        let d = p.deriv(tau);
        tau * d * d
    };
    // R[k] = int_{t_k}^inf tau H'^2 (k >= c); L[k] = int_{-inf}^{t_k} tau H'^2 (k <= c)
    let tail = |tm: f64| 2.0 * p.a0 * p.a0 * (-2.0 * SQRT2 * tm).exp() * (tm / (2.0 * SQRT2) + 0.125);
    let mut r = vec![0.0; n + 1];
    r[n] = tail(p.t_max);
    for k in (c..n).rev() {
        r[k] = r[k + 1] + quad::gk15(&g_int, p.t[k], p.t[k + 1]).0;
    }
    let mut l = vec![0.0; n + 1];
    l[0] = -tail(p.t_max);
    for k in 0..c {
        l[k + 1] = l[k] + quad::gk15(&g_int, p.t[k], p.t[k + 1]).0;
    }
    let gnode = |k: usize| if k >= c { -r[k] } else { l[k] };
    // G at an arbitrary point inside cell k
    let g_at = |s: f64, k: usize| {
        if k >= c {
            -(r[k + 1] + quad::gk15(&g_int, s, p.t[k + 1]).0)
        } else {
            l[k] + quad::gk15(&g_int, p.t[k], s).0
        }
    };
    let mut ii = vec![0.0; n + 1];
    for k in c..n {
        let f = |s: f64| {
            let d = p.deriv(s);
            g_at(s, k) / (d * d)
        };
        let (v, e) = quad::gk15(&f, p.t[k], p.t[k + 1]);
        if !v.is_finite() || e > 1e-6 * (1.0 + v.abs()) {
            return numeric(format!("J quadrature failed on cell {k} (error {e:.3e})"));
        }
        ii[k + 1] = ii[k] + v;
    }
    for k in (0..c).rev() {
        let f = |s: f64| {
            let d = p.deriv(s);
            g_at(s, k) / (d * d)
        };
        let (v, e) = quad::gk15(&f, p.t[k], p.t[k + 1]);
        if !v.is_finite() || e > 1e-6 * (1.0 + v.abs()) {
            return numeric(format!("J quadrature failed on cell {k} (error {e:.3e})"));
        }
        ii[k] = ii[k + 1] - v;
    }
    let mut j = vec![0.0; n + 1];
    let mut dj = vec![0.0; n + 1];
    let mut d2j = vec![0.0; n + 1];
    for k in 0..=n {
        let (hv, hp, hpp) = (p.hh[k], p.dh[k], p.d2h[k]);
        j[k] = hp * ii[k];
        dj[k] = hpp * ii[k] + gnode(k) / hp;
        d2j[k] = p.well.d2w(hv) * j[k] + p.t[k] * hp;
    }
    let mut parity = 0.0f64;
    for k in 0..=n {
        parity = parity.max((j[k] + j[n - k]).abs());
    }
    // interior ODE residual from sixth-order differences of the tabulated J
    const D2: [f64; 4] = [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
    let mut res = 0.0f64;
    let edge = (2.0 / p.h) as usize;
    for k in edge.max(3)..=n - edge.max(3) {
        let mut d2 = D2[0] * j[k];
        for m in 1..=3 {
            d2 += D2[m] * (j[k + m] + j[k - m]);
        }
        d2 /= p.h * p.h;
        res = res.max((d2 - p.well.d2w(p.hh[k]) * j[k] - p.t[k] * p.dh[k]).abs());
    }
    if res > 1e-8 {
        return numeric(format!("J ODE residual {res:.3e} exceeds 1e-8"));
    }
    Ok(JTable { t: p.t.clone(), j, dj, d2j, h: p.h, t_max: p.t_max, ode_residual: res, parity_error: parity })
}

impl JTable {
    /// (J, J', J'') inside the table; zero beyond.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        if t.abs() >= self.t_max {
            return [0.0; 3];
        }
        let n = self.t.len() - 1;
        let x = (t + self.t_max) / self.h;
        let i = (x.floor() as usize).min(n - 1);
        hermite5(
            x - i as f64,
            self.h,
            [self.j[i], self.dj[i], self.d2j[i]],
            [self.j[i + 1], self.dj[i + 1], self.d2j[i + 1]],
        )
    }

    /// int W'''(H) J H'^2 dt.
    pub fn w3_identity(&self, p: &Profile) -> f64 {
        p.integrate_grid(|t| {
            let [hv, hp, _] = p.eval(t);
            p.well.d3w(hv) * self.eval(t)[0] * hp * hp
        })
    }
}

/// I(T) = int (W''(H(t)) - 2) H'(t - T) H'(t) dt and the asymptote -4 sqrt2 A0^2 e^{-sqrt2 T}.
pub fn interaction_integral(profile: &Profile, big_t: f64) -> Result<(f64, f64)> {
    let w = profile.well.clone();
    interaction_integral_with(profile, big_t, &move |x| w.d2w(x))
}

/// Same integral with a substitute for W''.
pub fn interaction_integral_with(profile: &Profile, big_t: f64, d2w: &dyn Fn(f64) -> f64) -> Result<(f64, f64)> {
    if !(big_t >= 0.0) {
        return invalid(format!("T = {big_t} < 0"));
    }
    let asym = -4.0 * SQRT2 * profile.a0 * profile.a0 * (-SQRT2 * big_t).exp();
    let f = |t: f64| {
        let [hv, hp, _] = profile.eval(t);
        (d2w(hv) - 2.0) * profile.deriv(t - big_t) * hp
    };
    let tm = profile.t_max;
    let tol = 1e-9 * asym.abs();
    let pts = [-tm, 0.0, big_t, big_t + tm];
    let mut v = 0.0;
    for k in 0..3 {
        if pts[k + 1] > pts[k] {
            v += quad::integrate_max(f, pts[k], pts[k + 1], tol, 20_000)?.value;
        }
    }
    Ok((v, asym))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_profile() -> Profile {
        solve_profile(&DoubleWell::standard(), 16.0, 4096).unwrap()
    }

    #[test]
    fn matches_tanh() {
        let p = std_profile();
        let mut err = 0.0f64;
        for k in 0..=2000 {
            let t = -10.0 + 0.01 * k as f64 + 0.00037;
            err = err.max((p.value(t) - (t / SQRT2).tanh()).abs());
        }
        assert!(err < 1e-8, "{err}");
        assert_eq!(p.value(0.0), 0.0);
        assert!((p.deriv(0.0) - 1.0 / SQRT2).abs() < 1e-12);
        assert!((p.value(1.0) - 0.608_859_365_013_913_8).abs() < 1e-9);
    }

    #[test]
    fn constants() {
        let p = std_profile();
        assert!((p.h0 - 2.0 * SQRT2 / 3.0).abs() < 1e-12);
        assert!((p.a0 - 2.0).abs() < 1e-4, "{}", p.a0);
        assert!((p.a0 - p.a0_minus).abs() < 1e-10);
        assert!((p.energy() - p.h0).abs() < 1e-8);
        let first_moment = p.integrate_grid(|t| t * p.deriv(t).powi(2));
        assert!(first_moment.abs() < 1e-10);
        let m = p.integrate_grid(|t| {
            let e = p.eval(t);
            t * e[1] * e[2]
        });
        assert!((m + p.h0 / 2.0).abs() < 1e-8);
    }

    #[test]
    fn profile_preconditions() {
        let w = DoubleWell::standard();
        assert!(solve_profile(&w, 8.0, 4096).is_err());
        assert!(solve_profile(&w, 16.0, 1000).is_err());
    }

    #[test]
    fn truncation_plateaus() {
        let p = Arc::new(std_profile());
        let tp = truncate(p.clone(), 6.0).unwrap();
        assert_eq!(tp.eval(5.9)[0], p.value(5.9));
        assert_eq!(tp.eval(12.0)[0], 1.0);
        assert_eq!(tp.eval(-13.0)[0], -1.0);
        assert!(truncate(p.clone(), 3.0).is_err());
        assert!(truncate(p, 9.0).is_err());
    }

    #[test]
    fn truncation_derivatives_consistent() {
        let p = Arc::new(std_profile());
        let tp = truncate(p, 5.0).unwrap();
        let h = 1e-4;
        for t in [5.3, 7.7, -8.1, 9.2] {
            let e = tp.eval(t);
            let fd = (tp.eval(t + h)[0] - tp.eval(t - h)[0]) / (2.0 * h);
            assert!((fd - e[1]).abs() < 1e-7);
            let fd2 = (tp.eval(t + h)[1] - tp.eval(t - h)[1]) / (2.0 * h);
            assert!((fd2 - e[2]).abs() < 1e-6);
        }
    }

    #[test]
    fn corrector() {
        let p = std_profile();
        let j = solve_j(&p).unwrap();
        assert_eq!(j.eval(0.0)[0].abs() < 1e-14, true);
        assert!((j.eval(-2.0)[0] + j.eval(2.0)[0]).abs() < 1e-10);
        assert!(j.parity_error < 1e-10);
        assert!(j.ode_residual < 1e-8);
        let tail = 10.0 * (-SQRT2 * p.t_max / 2.0).exp();
        assert!(j.j[0].abs() <= tail && j.j[p.n].abs() <= tail);
        let id = j.w3_identity(&p);
        assert!((id + p.h0 / 2.0).abs() < 1e-6, "{id}");
    }

    #[test]
    fn corrector_solves_ode_off_grid() {
        let p = std_profile();
        let j = solve_j(&p).unwrap();
        for t in [0.37, -1.91, 3.3] {
            let [jv, _, jpp] = j.eval(t);
            let [hv, hp, _] = p.eval(t);
            assert!((jpp - p.well.d2w(hv) * jv - t * hp).abs() < 1e-7);
        }
    }

    #[test]
    fn interaction() {
        let p = std_profile();
        let (v, _) = interaction_integral_with(&p, 5.0, &|_| 2.0).unwrap();
        assert_eq!(v, 0.0);
        let (_, a) = interaction_integral(&p, 10.0).unwrap();
        assert!((a + 16.0 * SQRT2 * (-10.0 * SQRT2).exp()).abs() < 1e-9);
        let mut prev = f64::INFINITY;
        for t in [8.0, 10.0, 12.0] {
            let (v, a) = interaction_integral(&p, t).unwrap();
            let d = (v / a - 1.0).abs();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn exponential_moment_identity() {
        // int (W''(H) - 2) e^{sqrt2 t} H' dt = -4 A0
        let p = std_profile();
        let v = quad::integrate(
            |t| {
                let [hv, hp, _] = p.eval(t);
                (p.well.d2w(hv) - 2.0) * (SQRT2 * t).exp() * hp
            },
            -16.0,
            16.0,
            1e-11,
        )
        .unwrap()
        .value;
        assert!((v + 8.0).abs() < 1e-6, "{v}");
    }
}
