//! Double-well potentials W with derivatives up to order three.

use std::sync::Arc;

use crate::error::{invalid, LabError, Result};
use crate::quad;

/// Natural cubic spline through (t_i, w_i).
#[derive(Debug, Clone)]
struct Spline {
    t: Vec<f64>,
    w: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    fn new(t: Vec<f64>, w: Vec<f64>) -> Spline {
        let n = t.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut up = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = t[i] - t[i - 1];
                let h1 = t[i + 1] - t[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                up[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((w[i + 1] - w[i]) / h1 - (w[i] - w[i - 1]) / h0);
            }
            let lower: Vec<f64> = (0..k).map(|i| if i == 0 { 0.0 } else { t[i + 1] - t[i] }).collect();
            let sol = crate::linalg::thomas(&lower, &diag, &up, &rhs);
            m[1..n - 1].copy_from_slice(&sol);
        }
        Spline { t, w, m }
    }

    fn eval(&self, k: u8, x: f64) -> f64 {
        let n = self.t.len();
        let i = match self.t.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        let (m0, m1, w0, w1) = (self.m[i], self.m[i + 1], self.w[i], self.w[i + 1]);
        match k {
            0 => a * w0 + b * w1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0,
            1 => (w1 - w0) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0,
            2 => a * m0 + b * m1,
            _ => (m1 - m0) / h,
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Standard,
    Tabulated(Arc<Spline>),
}

/// A double-well potential, immutable after construction.
#[derive(Debug, Clone)]
pub struct DoubleWell {
    kind: Kind,
    pub label: String,
}

impl DoubleWell {
    /// W = (1 - t^2)^2 / 4.
    pub fn standard() -> DoubleWell {
        DoubleWell { kind: Kind::Standard, label: "standard".into() }
    }

    pub fn is_standard(&self) -> bool {
        matches!(self.kind, Kind::Standard)
    }

    /// Builds a well from a table of (t, W) samples, validating all invariants.
    pub fn from_table(t: Vec<f64>, w: Vec<f64>, label: &str) -> Result<DoubleWell> {
        if t.len() != w.len() || t.len() < 8 {
            return invalid("well table needs at least 8 (t, W) rows of equal length");
        }
        if t.windows(2).any(|p| p[1] <= p[0]) {
            return invalid("well table t column must be strictly increasing");
        }
        if t[0] > -1.0 || *t.last().unwrap() < 1.0 {
            return invalid("well table must cover [-1, 1]");
        }
        let well = DoubleWell { kind: Kind::Tabulated(Arc::new(Spline::new(t, w))), label: label.into() };
        well.validate()?;
        Ok(well)
    }

    /// Parses `standard` or `custom:<path>` (comma separated t,W rows; `#` comments and a header are skipped).
    pub fn from_name(name: &str) -> Result<DoubleWell> {
        if name == "standard" {
            return Ok(DoubleWell::standard());
        }
        let Some(path) = name.strip_prefix("custom:") else {
            return Err(LabError::Config(format!("unknown well '{name}'")));
        };
        let text = std::fs::read_to_string(path)?;
        let (mut t, mut w) = (Vec::new(), Vec::new());
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
            match (it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b))) => {
                    t.push(a);
                    w.push(b);
                }
                _ if ln == 0 => continue,
                _ => return Err(LabError::Config(format!("{path}:{}: expected 't,W'", ln + 1))),
            }
        }
        DoubleWell::from_table(t, w, name)
    }

    /// d^k W / dt^k for k in 0..=3.
    pub fn eval(&self, k: u8, t: f64) -> Result<f64> {
        if k > 3 {
            return invalid(format!("derivative order {k} outside 0..=3"));
        }
        if !t.is_finite() {
            return invalid("non-finite argument");
        }
        Ok(self.d(k, t))
    }

    #[inline]
    fn d(&self, k: u8, t: f64) -> f64 {
        match &self.kind {
            Kind::Standard => match k {
                0 => {
                    let s = 1.0 - t * t;
                    0.25 * s * s
                }
                1 => t * t * t - t,
                2 => 3.0 * t * t - 1.0,
                _ => 6.0 * t,
            },
            Kind::Tabulated(s) => s.eval(k, t),
        }
    }

    /// W(1 - c), accurate relative to c for the standard well.
    #[inline]
    pub fn w_from_one(&self, c: f64) -> f64 {
        match &self.kind {
            Kind::Standard => {
                let s = c * (2.0 - c);
                0.25 * s * s
            }
            Kind::Tabulated(sp) => sp.eval(0, 1.0 - c),
        }
    }

    #[inline]
    pub fn w(&self, t: f64) -> f64 {
        self.d(0, t)
    }
    #[inline]
    pub fn dw(&self, t: f64) -> f64 {
        self.d(1, t)
    }
    #[inline]
    pub fn d2w(&self, t: f64) -> f64 {
        self.d(2, t)
    }
    #[inline]
    pub fn d3w(&self, t: f64) -> f64 {
        self.d(3, t)
    }

    /// Checks the four structural invariants on a 10^4-point grid.
    pub fn validate(&self) -> Result<()> {
        let tol = if self.is_standard() { 1e-14 } else { 1e-12 };
        if self.w(1.0).abs() > tol || self.w(-1.0).abs() > tol {
            return invalid(format!("{}: W(+-1) must vanish", self.label));
        }
        if self.dw(0.0).abs() > 1e-10 {
            return invalid(format!("{}: W'(0) must vanish", self.label));
        }
        if self.d2w(0.0).abs() < 1e-8 {
            return invalid(format!("{}: W''(0) must be nonzero", self.label));
        }
        for s in [-1.0, 1.0] {
            if (self.d2w(s) - 2.0).abs() > 1e-3 {
                return invalid(format!("{}: W''({s}) = {} != 2", self.label, self.d2w(s)));
            }
        }
        let n = 10_000;
        for i in 0..=n {
            let t = -1.5 + 3.0 * i as f64 / n as f64;
            let wt = self.w(t);
            if wt < -tol {
                return invalid(format!("{}: W({t}) < 0", self.label));
            }
            if (wt - self.w(-t)).abs() > 1e-12 {
                return invalid(format!("{}: W not even at t = {t}", self.label));
            }
            let a = t.abs();
            if a > 1e-9 && a < 1.0 - 1e-9 && t * self.dw(t) >= 0.0 {
                return invalid(format!("{}: t W'(t) >= 0 at t = {t}", self.label));
            }
        }
        Ok(())
    }

    /// h0 = int_{-1}^{1} sqrt(2 W).
    pub fn h0(&self, quad_tol: f64) -> Result<f64> {
        if quad_tol <= 0.0 {
            return invalid("quad_tol must be positive");
        }
        let r = quad::integrate(|t| (2.0 * self.w(t)).max(0.0).sqrt(), -1.0, 1.0, quad_tol)?;
        Ok(r.value)
    }
}

/// (h0, A0): h0 by quadrature, A0 from the tail fit of the solved profile.
pub fn well_constants(well: &DoubleWell, quad_tol: f64) -> Result<(f64, f64)> {
    let h0 = well.h0(quad_tol)?;
    let p = crate::heteroclinic::solve_profile(well, 16.0, 4096)?;
    Ok((h0, p.a0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_values() {
        let w = DoubleWell::standard();
        assert_eq!(w.eval(0, 1.0).unwrap(), 0.0);
        assert_eq!(w.eval(2, -1.0).unwrap(), 2.0);
        assert_eq!(w.eval(0, 0.0).unwrap(), 0.25);
        assert!(w.eval(4, 0.0).is_err());
        w.validate().unwrap();
    }

    #[test]
    fn h0_closed_form() {
        let h0 = DoubleWell::standard().h0(1e-14).unwrap();
        assert!((h0 - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-12);
    }

    fn table(f: impl Fn(f64) -> f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..=n).map(|i| -1.5 + 3.0 * i as f64 / n as f64).collect();
        let w = t.iter().map(|&x| f(x)).collect();
        (t, w)
    }

    #[test]
    fn tabulated_standard_matches() {
        let (t, w) = table(|x| 0.25 * (1.0 - x * x).powi(2), 3000);
        let tw = DoubleWell::from_table(t, w, "tab").unwrap();
        let s = DoubleWell::standard();
        for x in [-0.9, -0.3, 0.2, 0.77] {
            assert!((tw.w(x) - s.w(x)).abs() < 1e-10);
            assert!((tw.dw(x) - s.dw(x)).abs() < 1e-6);
            assert!((tw.d2w(x) - s.d2w(x)).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_wells() {
        // W''(+-1) = 8
        let (t, w) = table(|x| (1.0 - x * x).powi(2), 3000);
        assert!(DoubleWell::from_table(t, w, "steep").is_err());
        // not even
        let (t, w) = table(|x| 0.25 * (1.0 - x * x).powi(2) * (1.0 + 0.1 * x), 3000);
        assert!(DoubleWell::from_table(t, w, "odd").is_err());
        assert!(DoubleWell::from_name("quartic").is_err());
    }

    #[test]
    fn custom_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let (t, w) = table(|x| 0.25 * (1.0 - x * x).powi(2), 3000);
        let mut s = String::from("t,W\n");
        for (a, b) in t.iter().zip(&w) {
            s.push_str(&format!("{a},{b}\n"));
        }
        std::fs::write(&path, s).unwrap();
        let well = DoubleWell::from_name(&format!("custom:{}", path.display())).unwrap();
        assert!(!well.is_standard());
        assert!((well.h0(1e-12).unwrap() - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-6);
    }
}
