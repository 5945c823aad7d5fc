use super::*;
use crate::tscale::{Generator, Segment};

fn real(a: f64, b: f64) -> TimeScale {
    TimeScale::new(vec![Segment::Dense { a, b }]).unwrap()
}

fn ex21(upto: f64) -> DelayEquation {
    let ts = Generator::P11 { from: -2.0, upto }.build().unwrap();
    DelayEquation::new(ts, Coef::Const(1.0), Coef::parse("if scattered(t) then -1 else t").unwrap(), 0.0).unwrap()
}

#[test]
fn alpha_star_examples() {
    let z = Generator::Integers { from: -3.0, upto: 20.0 }.build().unwrap();
    let eq = DelayEquation::new(z, Coef::Const(0.5), Coef::parse("t - 1").unwrap(), 0.0).unwrap();
    let tab = eq.table(1.0).unwrap();
    assert_eq!(tab.alpha_star(&eq, 5.0).unwrap(), 4.0);

    let eq = ex21(20.0);
    let tab = eq.table(0.01).unwrap();
    assert_eq!(tab.alpha_star(&eq, 0.0).unwrap(), -1.0);
    assert_eq!(tab.alpha_star(&eq, 0.5).unwrap(), -1.0);

    // Example 5.1's delay: brute-force infimum over a fine sampling
    let ts = Generator::P11 { from: 1.0, upto: 9.0 }.build().unwrap();
    let alpha = Coef::parse("t - (frac(t)*(1-frac(t)))^floor(t)").unwrap();
    let eq = DelayEquation::new(ts.clone(), Coef::parse("if scattered(t) then 0.5 else 0.5*4^floor(t)").unwrap(), alpha.clone(), 1.0)
        .unwrap();
    let tab = eq.table(1e-3).unwrap();
    let mut oracle = f64::INFINITY;
    for k in 0..=700_000 {
        let t = 2.0 + k as f64 * 1e-5;
        if ts.contains(t) {
            oracle = oracle.min(alpha.eval(t, &ts).unwrap());
        }
    }
    assert_eq!(oracle, 2.0);
    assert_eq!(tab.alpha_star(&eq, 2.0).unwrap(), oracle);
}

#[test]
fn alpha_inv_examples() {
    let z = Generator::Integers { from: -3.0, upto: 20.0 }.build().unwrap();
    let eq = DelayEquation::new(z, Coef::Const(0.5), Coef::parse("t - 1").unwrap(), 0.0).unwrap();
    let tab = eq.table(1.0).unwrap();
    // brute force: largest grid point η with α_*(η) <= 5
    let oracle = (0..=20).map(f64::from).filter(|&e| e - 1.0 <= 5.0).fold(f64::MIN, f64::max);
    assert_eq!(tab.alpha_inv(&eq, 5.0).unwrap(), AlphaInv { value: oracle, capped: false });
    assert!(tab.alpha_inv(&eq, 19.5).unwrap().capped);

    let ts = Generator::ZMod3 { from: -2.0, upto: 40.0 }.build().unwrap();
    let eq = DelayEquation::new(ts, Coef::Const(0.1), Coef::parse("rho2(t)").unwrap(), 4.0).unwrap();
    let tab = eq.table(1.0).unwrap();
    assert_eq!(tab.alpha_inv(&eq, 4.0).unwrap().value, 7.0);

    // increasing delay on a continuum: the functional inverse
    let eq = DelayEquation::new(real(1.0, 60.0), Coef::Const(1.0), Coef::parse("0.5*t").unwrap(), 1.0).unwrap();
    let tab = eq.table(0.01).unwrap();
    for &s in &[1.3, 4.0, 17.77] {
        let v = tab.alpha_inv(&eq, s).unwrap();
        assert!((v.value - 2.0 * s).abs() < 1e-9, "{s}: {v:?}");
    }
}

#[test]
fn undelayed_decay() {
    let eq = DelayEquation::new(real(0.0, 5.0), Coef::Const(1.0), Coef::parse("t").unwrap(), 0.0).unwrap();
    let tab = eq.table(0.01).unwrap();
    let sol = solve_ivp(&eq, &tab, 1.0, &History::constant(1.0), None, 0.01).unwrap();
    for (&t, &x) in sol.x.grid().points.iter().zip(sol.x.values()) {
        assert!((x - (-(t - 1.0)).exp()).abs() < 1e-10);
    }
    let mid = sol.x.eval(2.345).unwrap();
    assert!((mid - (-1.345f64).exp()).abs() < 1e-9);
}

#[test]
fn example_2_1_closed_form() {
    let eq = ex21(60.0);
    let tab = eq.table(1e-3).unwrap();
    let hist = History { x0: 0.0, phi: Phi::Const(-1.0) };
    let sol = solve_ivp(&eq, &tab, 0.0, &hist, None, 1e-3).unwrap();
    let e = std::f64::consts::E;
    for k in 1..=30 {
        let t = 2.0 * k as f64;
        let want = (e / (e - 1.0)) * (1.0 - (-(k as f64)).exp());
        assert!((sol.x.eval(t).unwrap() - want).abs() < 1e-9, "k = {k}");
    }
}

#[test]
fn isolated_recurrences_are_exact() {
    let z = Generator::Integers { from: -1.0, upto: 200.0 }.build().unwrap();
    let a = 0.37;
    let eq = DelayEquation::new(z, Coef::Const(a), Coef::parse("t - 1").unwrap(), 0.0).unwrap();
    let tab = eq.table(1.0).unwrap();
    let sol = solve_ivp(&eq, &tab, 0.0, &History { x0: 0.3, phi: Phi::Const(-0.9) }, None, 1.0).unwrap();
    let mut xs = vec![-0.9, 0.3];
    for n in 1..xs.len() + 199 {
        let next = xs[n] + 1.0 * (-(a * xs[n - 1]));
        xs.push(next);
    }
    for (i, &v) in sol.x.values().iter().enumerate() {
        assert_eq!(v.to_bits(), xs[i + 1].to_bits());
    }

    // Example 5.3: x(σ(t)) = x(t) - μ(t) A(t) x(ρ²(t)) on ℤ∖3ℤ
    let ts = Generator::ZMod3 { from: -2.0, upto: 100.0 }.build().unwrap();
    let (ca, cb) = (0.375, 0.25);
    let acoef = Coef::parse(&format!("if frac(t/3) < 0.5 then {ca} else {cb}")).unwrap();
    let eq = DelayEquation::new(ts.clone(), acoef, Coef::parse("rho2(t)").unwrap(), 1.0).unwrap();
    let tab = eq.table(1.0).unwrap();
    let s = 4.0;
    let sol = solve_ivp(&eq, &tab, s, &History { x0: 1.0, phi: Phi::func(|t| t * 0.1) }, None, 1.0).unwrap();
    let pts: Vec<f64> = (-2..=100).map(f64::from).filter(|t| t % 3.0 != 0.0).collect();
    let mut x: Vec<f64> = pts.iter().map(|&t| t * 0.1).collect();
    let i0 = pts.iter().position(|&t| t == s).unwrap();
    x[i0] = 1.0;
    for i in i0..pts.len() - 1 {
        let coef = if pts[i].rem_euclid(3.0) == 1.0 { ca } else { cb };
        x[i + 1] = x[i] + (pts[i + 1] - pts[i]) * (-(coef * x[i - 2]));
    }
    for (k, &v) in sol.x.values().iter().enumerate() {
        assert_eq!(v.to_bits(), x[i0 + k].to_bits(), "t = {}", pts[i0 + k]);
    }
}

#[test]
fn off_scale_delays_are_projected() {
    let z = Generator::Integers { from: -2.0, upto: 30.0 }.build().unwrap();
    let eq_frac = DelayEquation::new(z.clone(), Coef::Const(0.4), Coef::parse("t - 0.5").unwrap(), 0.0).unwrap();
    let eq_int = DelayEquation::new(z, Coef::Const(0.4), Coef::parse("t - 1").unwrap(), 0.0).unwrap();
    let h = History::constant(1.0);
    let a = solve_ivp(&eq_frac, &eq_frac.table(1.0).unwrap(), 0.0, &h, None, 1.0).unwrap();
    let b = solve_ivp(&eq_int, &eq_int.table(1.0).unwrap(), 0.0, &h, None, 1.0).unwrap();
    assert!(a.projected > 0);
    assert_eq!(b.projected, 0);
    assert_eq!(a.x.values(), b.x.values());
}

#[test]
fn error_paths() {
    let eq = DelayEquation::new(real(0.0, 5.0), Coef::Const(1.0), Coef::parse("t + 0.5").unwrap(), 0.0).unwrap();
    let tab = eq.table(0.1).unwrap();
    assert!(matches!(solve_ivp(&eq, &tab, 0.0, &History::unit(), None, 0.1), Err(DdeError::DelayAhead { .. })));

    let eq = DelayEquation::new(real(-3.0, 5.0), Coef::Const(-1.0), Coef::parse("t").unwrap(), 0.0).unwrap();
    assert!(matches!(eq.table(0.1), Err(DdeError::NegativeCoefficient { .. })));

    // dips below the grid-sampled α_* between grid points
    let h = 0.125;
    let eq = DelayEquation::new(
        real(-5.0, 5.0),
        Coef::Const(1.0),
        Coef::parse(&format!("t - 1 - sin_free(t)").replace("sin_free(t)", &format!("(1 - (2*frac(t/{h}) - 1)^2)"))).unwrap(),
        0.0,
    )
    .unwrap();
    let tab = eq.table(h).unwrap();
    assert!(matches!(
        solve_ivp(&eq, &tab, 0.0, &History::constant(1.0), None, h),
        Err(DdeError::LookupBeforeHistory { .. })
    ));
}

#[test]
fn fundamental_columns() {
    let a = 0.8;
    let eq = DelayEquation::new(real(0.0, 6.0), Coef::Const(a), Coef::parse("t").unwrap(), 0.0).unwrap();
    let tab = eq.table(0.01).unwrap();
    let samples = [0.0, 0.5, 2.0, 3.3];
    let field = fundamental_solution(&eq, &tab, &samples, 0.01).unwrap();
    for (k, &s) in samples.iter().enumerate() {
        assert_eq!(field.value(k, s).unwrap(), 1.0);
        for &t in &[s + 0.1, s + 1.0, 6.0] {
            assert!((field.value(k, t).unwrap() - (-a * (t - s)).exp()).abs() < 1e-9);
        }
        if s > 0.0 {
            assert_eq!(field.value(k, s - 0.2).unwrap(), 0.0);
        }
    }
}

#[test]
fn example_2_1_field_envelope() {
    let eq = ex21(30.0);
    let tab = eq.table(1e-2).unwrap();
    let samples = default_s_samples(&tab, 64);
    assert!(samples.len() <= 64);
    let field = fundamental_solution(&eq, &tab, &samples, 1e-2).unwrap();
    let e = std::f64::consts::E;
    for (k, &s) in field.s_samples.iter().enumerate() {
        let col = &field.columns[k];
        for (&t, &x) in col.grid().points.iter().zip(col.values()) {
            assert!(x >= -1e-12 && x <= e * (-(t - s) / 2.0).exp() + 1e-12, "s = {s}, t = {t}, X = {x}");
        }
    }
}

#[test]
fn field_is_deterministic_across_pools() {
    let eq = ex21(12.0);
    let tab = eq.table(0.01).unwrap();
    let samples = default_s_samples(&tab, 64);
    let run = |n| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| fundamental_solution(&eq, &tab, &samples, 0.01).unwrap())
    };
    let (a, b) = (run(1), run(4));
    for (ca, cb) in a.columns.iter().zip(&b.columns) {
        assert_eq!(ca.values(), cb.values());
    }
}

#[test]
fn representation_formula() {
    // zero history and forcing: x = 𝒳(·, s) x0
    let eq = ex21(8.0);
    let h = 0.05;
    let tab = eq.table(h).unwrap();
    let need = vop_required_samples(&eq, 0.0, h).unwrap();
    let field = fundamental_solution(&eq, &tab, &need, h).unwrap();
    let hist = History { x0: 2.5, phi: Phi::Zero };
    let x = variation_of_parameters(&eq, &tab, 0.0, &hist, None, &field, h).unwrap();
    let k = field.index_of(0.0).unwrap();
    for (i, &t) in x.grid().points.iter().enumerate() {
        assert!((x.values()[i] - 2.5 * field.value(k, t).unwrap()).abs() < 1e-14);
    }

    // ℤ, a = 0.5, φ(s - 1) = 1, x0 = 0
    let z = Generator::Integers { from: -1.0, upto: 10.0 }.build().unwrap();
    let eq = DelayEquation::new(z, Coef::Const(0.5), Coef::parse("t - 1").unwrap(), 0.0).unwrap();
    let tab = eq.table(1.0).unwrap();
    let need = vop_required_samples(&eq, 0.0, 1.0).unwrap();
    let field = fundamental_solution(&eq, &tab, &need, 1.0).unwrap();
    let hist = History { x0: 0.0, phi: Phi::Const(1.0) };
    let x = variation_of_parameters(&eq, &tab, 0.0, &hist, None, &field, 1.0).unwrap();
    assert_eq!(x.eval(1.0).unwrap(), -0.5);
    let direct = solve_ivp(&eq, &tab, 0.0, &hist, None, 1.0).unwrap();
    for (u, v) in x.values().iter().zip(direct.x.values()) {
        assert!((u - v).abs() < 1e-14);
    }

    // missing columns are reported
    let sparse = fundamental_solution(&eq, &tab, &[0.0, 1.0], 1.0).unwrap();
    assert!(matches!(
        variation_of_parameters(&eq, &tab, 0.0, &hist, None, &sparse, 1.0),
        Err(DdeError::MissingFieldSample(_))
    ));
}

#[test]
fn forced_equation_on_p11() {
    let ts = Generator::P11 { from: -2.0, upto: 3.0 }.build().unwrap();
    let eq = DelayEquation::new(
        ts,
        Coef::func(|t| 0.6 + 0.1 * t),
        Coef::parse("if scattered(t) then t - 1 else t - 0.5").unwrap(),
        0.0,
    )
    .unwrap();
    let h = 1e-3;
    let tab = eq.table(h).unwrap();
    let hist = History { x0: 1.0, phi: Phi::func(|t| 0.5 + 0.2 * t) };
    let f = Coef::Const(0.1);
    let direct = solve_ivp(&eq, &tab, 0.0, &hist, Some(&f), h).unwrap();
    let need = vop_required_samples(&eq, 0.0, h).unwrap();
    let field = fundamental_solution(&eq, &tab, &need, h).unwrap();
    let rep = variation_of_parameters(&eq, &tab, 0.0, &hist, Some(&f), &field, h).unwrap();
    let max = direct.x.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for ((u, v), t) in rep.values().iter().zip(direct.x.values()).zip(&rep.grid().points) {
        assert!((u - v).abs() <= 1e-8 * (1.0 + max), "{u} vs {v} at {t}");
    }
}

#[test]
fn fourth_order_convergence() {
    let eq = DelayEquation::new(
        real(-1.0, 8.0),
        Coef::func(|t| 0.5 + 0.2 * (t).sin()),
        Coef::parse("t - 1").unwrap(),
        0.0,
    )
    .unwrap();
    let hist = History { x0: 1.0, phi: Phi::func(|t| (0.3 * t).cos()) };
    let solve = |h: f64| solve_ivp(&eq, &eq.table(h).unwrap(), 0.0, &hist, None, h).unwrap().x;
    let reference = solve(0.1 / 16.0);
    let err = |h: f64| {
        let x = solve(h);
        x.grid()
            .points
            .iter()
            .zip(x.values())
            .map(|(&t, &v)| (v - reference.eval(t).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(0.1) / err(0.05);
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn continuity_in_start() {
    // 𝒳(t, s) = X(t - s) here; Grönwall: |Δ𝒳| <= M1 M2 e_{M2}(T, t0) Δs
    let a = 0.6;
    let tau = 1.0;
    let eq = DelayEquation::new(real(-1.0, 10.0), Coef::Const(a), Coef::parse(&format!("t - {tau}")).unwrap(), 0.0).unwrap();
    let h = 0.01;
    let tab = eq.table(h).unwrap();
    let s1 = 1.0;
    for &d in &[0.01, 0.05, 0.2] {
        let field = fundamental_solution(&eq, &tab, &[s1, s1 + d], h).unwrap();
        let m1 = field.max_abs(0).max(field.max_abs(1));
        let bound = m1 * a * (a * (10.0 - 0.0f64)).exp() * d;
        let col = &field.columns[1];
        let mut worst = 0.0f64;
        for &t in &col.grid().points {
            worst = worst.max((field.value(1, t).unwrap() - field.value(0, t).unwrap()).abs());
        }
        assert!(worst <= bound, "d = {d}: {worst} > {bound}");
        assert!(worst <= a * d + 1e-9);
    }
}

fn wiggly() -> DelayEquation {
    DelayEquation::new(
        real(-2.0, 6.0),
        Coef::func(|t| 0.6 * (1.0 + 0.3 * t.sin())),
        Coef::func(|t| t - 0.8 - 0.2 * (1.3 * t).sin()),
        0.0,
    )
    .unwrap()
}

#[test]
fn breaking_points_cascade() {
    let eq = wiggly();
    let tab = eq.table(0.01).unwrap();
    let b = tab.breaking_points(&eq, 0.0).unwrap();
    let al = |t: f64| eq.alpha.eval(t, &eq.ts).unwrap();
    assert!(al(b[0]).abs() < 1e-12, "{}", al(b[0]));
    assert!((al(b[1]) - b[0]).abs() < 1e-12);
    let grid = solve_ivp(&eq, &tab, 0.0, &History::unit(), None, 0.01).unwrap().x.grid().clone();
    for p in &b {
        assert!(grid.points.iter().any(|q| (q - p).abs() <= 1e-8), "{p} missing");
    }

    let eq = DelayEquation::new(real(-1.0, 5.0), Coef::Const(1.0), Coef::parse("t - 1").unwrap(), 0.0).unwrap();
    let tab = eq.table(0.3).unwrap();
    let b = tab.breaking_points(&eq, 0.5).unwrap();
    assert_eq!(b.len(), 4);
    for (k, p) in b.iter().enumerate() {
        assert!((p - (1.5 + k as f64)).abs() < 1e-12, "{b:?}");
    }
}

#[test]
fn projected_delay_jumps() {
    // t - 0.6 falls into the gaps of P11: flat on [0, 0.6) and [2, 2.6)
    let ts = Generator::P11 { from: -2.0, upto: 5.0 }.build().unwrap();
    let eq = DelayEquation::new(ts, Coef::Const(1.0), Coef::func(|t| t - 0.6), 0.0).unwrap();
    let tab = eq.table(0.01).unwrap();
    assert_eq!(tab.jumps.len(), 3, "{:?}", tab.jumps);
    for (j, want) in tab.jumps.iter().zip([0.6, 2.6, 4.6]) {
        assert!((j - want).abs() < 1e-8);
    }
}

#[test]
fn plain_functions_take_left_limits_below() {
    let ts = Generator::P11 { from: 0.0, upto: 5.0 }.build().unwrap();
    let probe = ts.clone();
    let f = Coef::func(move |t| if probe.is_right_scattered(t).unwrap() { t - 1.0 } else { t - 0.5 });
    assert_eq!(f.eval(1.0, &ts).unwrap(), 0.0);
    assert!((f.eval_left(1.0, &ts).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(f.eval_left(0.5, &ts).unwrap(), 0.0);
}

#[test]
fn time_varying_delay() {
    let eq = wiggly();
    let hist = History { x0: 0.2, phi: Phi::func(|t| 0.5 + 0.3 * t.cos()) };
    let f = Coef::func(|t| 0.1 + 0.2 * (0.9 * t).sin());
    let solve = |h: f64| solve_ivp(&eq, &eq.table(h).unwrap(), 0.0, &hist, Some(&f), h).unwrap().x;
    let reference = solve(0.005);
    let err = |x: &GridFunction| {
        x.grid().points.iter().zip(x.values()).map(|(&t, &v)| (v - reference.eval(t).unwrap()).abs()).fold(0.0, f64::max)
    };
    let ratio = err(&solve(0.04)) / err(&solve(0.02));
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");

    let h = 0.02;
    let tab = eq.table(h).unwrap();
    let direct = solve(h);
    let need = vop_required_samples(&eq, 0.0, h).unwrap();
    let field = fundamental_solution(&eq, &tab, &need, h).unwrap();
    let rep = variation_of_parameters(&eq, &tab, 0.0, &hist, Some(&f), &field, h).unwrap();
    for (u, v) in rep.values().iter().zip(direct.values()) {
        assert!((u - v).abs() < 1e-9, "{u} vs {v}");
    }
}
