use std::sync::OnceLock;

use ac_lab::barrier::{cutoffs, offset_map};
use ac_lab::experiments::Table;
use ac_lab::geometry::{self, Base, Beta, Family, GraphSurface, WarpedMetric};
use ac_lab::harness::io;
use ac_lab::heteroclinic::{hermite5, smoothstep, solve_profile, Profile};
use ac_lab::linalg::{thomas, BandLu};
use ac_lab::potential::DoubleWell;
use ac_lab::spectrum::Projector;
use ac_lab::toda::{toda_rhs, TodaConfig};
use proptest::prelude::*;

fn profile() -> &'static Profile {
    static P: OnceLock<Profile> = OnceLock::new();
    P.get_or_init(|| solve_profile(&DoubleWell::standard(), 16.0, 4096).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn well_is_even_nonnegative_and_vanishes_at_wells(t in -3.0f64..3.0) {
        let w = DoubleWell::standard();
        prop_assert!(w.w(t) >= 0.0);
        prop_assert!((w.w(t) - w.w(-t)).abs() < 1e-14);
        prop_assert!((w.dw(t) + w.dw(-t)).abs() < 1e-12);
        prop_assert!(w.w(1.0).abs() < 1e-15 && w.dw(1.0).abs() < 1e-14);
    }

    #[test]
    fn profile_is_odd_monotone_and_bounded(t in 0.0f64..12.0) {
        let p = profile();
        let a = p.eval(t);
        let b = p.eval(-t);
        prop_assert!(a[0].abs() < 1.0);
        prop_assert!(a[1] > 0.0);
        prop_assert!((a[0] + b[0]).abs() < 1e-12);
        prop_assert!((a[1] - b[1]).abs() < 1e-12);
        prop_assert!((a[0] - (t / std::f64::consts::SQRT_2).tanh()).abs() < 1e-8);
    }

    #[test]
    fn hermite5_reproduces_quintics(c in prop::collection::vec(-2.0f64..2.0, 6), s in 0.0f64..1.0, h in 0.05f64..2.0) {
        let p = |x: f64| -> [f64; 3] {
            let mut v = [0.0; 3];
            for (k, ck) in c.iter().enumerate() {
                let k = k as i32;
                v[0] += ck * x.powi(k);
                if k >= 1 { v[1] += ck * k as f64 * x.powi(k - 1); }
                if k >= 2 { v[2] += ck * (k * (k - 1)) as f64 * x.powi(k - 2); }
            }
            v
        };
        let got = hermite5(s, h, p(0.0), p(h));
        let want = p(s * h);
        for k in 0..3 {
            prop_assert!((got[k] - want[k]).abs() < 1e-9 * (1.0 + want[k].abs()) / h.powi(k as i32));
        }
    }

    #[test]
    fn smoothstep_is_monotone_in_unit_range(x in -0.5f64..1.5, dx in 0.0f64..0.5) {
        let a = smoothstep(x)[0];
        let b = smoothstep(x + dx)[0];
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a - 1e-15);
    }

    #[test]
    fn toda_forcing_sums_to_zero(
        gaps in prop::collection::vec(prop::collection::vec(0.05f64..0.4, 8), 1..4),
        eps in 0.02f64..0.2,
    ) {
        let n = 8;
        let mut f = vec![vec![-0.5; n]];
        for g in &gaps {
            let last = f.last().unwrap().clone();
            f.push(last.iter().zip(g).map(|(a, b)| a + b).collect());
        }
        let metric = WarpedMetric::flat(Base::Periodic { length: 1.0 }, (-3.0, 3.0));
        let c = TodaConfig::new(metric, f, eps, 2.0, 2.0 * std::f64::consts::SQRT_2 / 3.0).unwrap();
        let r = toda_rhs(&c);
        for i in 0..n {
            let s: f64 = r.iter().map(|row| row[i]).sum();
            let scale: f64 = r.iter().map(|row| row[i].abs()).sum::<f64>() + 1e-300;
            prop_assert!(s.abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn projector_annihilates_its_complement(seed_vals in prop::collection::vec(-1.0f64..1.0, 3 * 41), centers in prop::collection::vec(-0.1f64..0.1, 3)) {
        let eps = 0.1;
        let nz = 41;
        let z: Vec<f64> = (0..nz).map(|j| -1.0 + 2.0 * j as f64 / (nz - 1) as f64).collect();
        let wz = vec![2.0 / (nz - 1) as f64; nz];
        let pr = Projector::new(&z, &wz, &centers, profile(), eps);
        let perp = pr.perp(&seed_vals);
        for v in pr.pi(&perp) {
            prop_assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn thomas_solves_dominant_systems(n in 3usize..40, vals in prop::collection::vec(-1.0f64..1.0, 160)) {
        let lower: Vec<f64> = (0..n).map(|i| vals[i]).collect();
        let upper: Vec<f64> = (0..n).map(|i| vals[40 + i]).collect();
        let diag: Vec<f64> = (0..n).map(|i| 3.0 + vals[80 + i].abs()).collect();
        let rhs: Vec<f64> = (0..n).map(|i| vals[120 + i]).collect();
        let x = thomas(&lower, &diag, &upper, &rhs);
        for i in 0..n {
            let mut r = diag[i] * x[i] - rhs[i];
            if i > 0 { r += lower[i] * x[i - 1]; }
            if i + 1 < n { r += upper[i] * x[i + 1]; }
            prop_assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn band_lu_matches_product(n in 4usize..30, bw in 1usize..4, vals in prop::collection::vec(-1.0f64..1.0, 300)) {
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                a[(i, j)] = if i == j { 2.0 * bw as f64 + 1.0 + vals[k % 300].abs() } else { vals[k % 300] };
                k += 1;
            }
        }
        let mut lu = BandLu::new(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                lu.add(i, j, a[(i, j)]);
            }
        }
        let lu = lu.factor().unwrap();
        let x0 = nalgebra::DVector::from_fn(n, |i, _| vals[(7 * i + 3) % 300]);
        let b = &a * &x0;
        let x = lu.solve(b.as_slice());
        for i in 0..n {
            prop_assert!((x[i] - x0[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cutoffs_are_even_and_lipschitz(j in 1u32..=5, t in -1.0f64..1.0, dt in 1e-6f64..1e-3, eps in 0.02f64..0.2) {
        let c = cutoffs(eps, 0.1, j).unwrap();
        let v = c.value(t);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - c.value(-t)).abs() < 1e-15);
        prop_assert!((c.value(t + dt) - v).abs() <= c.sup_derivative() * dt * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn offset_map_inverts(zeta in -1.0f64..1.0, t in -0.9f64..0.9) {
        let chi2 = cutoffs(0.1, 0.1, 2).unwrap();
        let zeta = 0.9 * zeta / chi2.sup_derivative();
        let m = offset_map(chi2, &[zeta]).unwrap();
        let z = m.inverse(zeta, t).unwrap();
        prop_assert!((m.forward(zeta, z) - t).abs() < 1e-12);
    }

    #[test]
    fn csv_tables_roundtrip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 0..20)) {
        let t = Table { name: "p".into(), columns: vec!["a".into(), "b".into(), "c".into()], rows };
        let mut buf = vec![];
        io::write_table(&t, &mut buf).unwrap();
        let back = io::read_table("p", &buf[..]).unwrap();
        prop_assert_eq!(back.rows, t.rows);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mean_curvature_is_the_area_gradient(c in prop::collection::vec(-0.05f64..0.05, 6), b in 0.0f64..0.4) {
        let n = 64;
        let metric = WarpedMetric::new(
            Family::GaussianWarp { beta: Beta::Cosine { b0: 1.0, b1: b } },
            Base::Periodic { length: 1.0 },
            (-1.0, 1.0),
        );
        let metric = metric.unwrap();
        let ys = Base::Periodic { length: 1.0 }.nodes(n);
        let tau = 2.0 * std::f64::consts::PI;
        let f: Vec<f64> = ys.iter().map(|y| c[0] + c[1] * (tau * y).sin() + c[2] * (2.0 * tau * y).cos() + c[3] * (3.0 * tau * y).sin()).collect();
        let phi: Vec<f64> = ys.iter().map(|y| (tau * y).cos() + c[4] * 10.0 * (2.0 * tau * y).sin() + c[5]).collect();
        let g = GraphSurface::new(&metric, f.clone());
        let dv = geometry::first_variation(&metric, &g, &phi).unwrap();
        let h = 1e-5;
        let area = |s: f64| {
            let fs: Vec<f64> = f.iter().zip(&phi).map(|(a, p)| a + s * p).collect();
            geometry::graph_area(&metric, &GraphSurface::new(&metric, fs)).unwrap()
        };
        let fd = (area(h) - area(-h)) / (2.0 * h);
        prop_assert!((dv - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "{dv} vs {fd}");
    }
}
