use tsdyn::dde::{Coef, DelayEquation};
use tsdyn::stability::{classify, ClassifyOptions, Route, Verdict};
use tsdyn::tscale::Generator;

fn p11_unbounded(a: f64, upto: f64) -> DelayEquation {
    let ts = Generator::P11 { from: 1.0, upto }.build().unwrap();
    let coef = Coef::parse(&format!("if scattered(t) then {a} else {a}*4^floor(t)")).unwrap();
    let alpha = Coef::parse("t - (frac(t)*(1-frac(t)))^floor(t)").unwrap();
    DelayEquation::new(ts, coef, alpha, 1.0).unwrap()
}

fn sinh_cosh(a: f64, upto: f64) -> DelayEquation {
    let ts = Generator::SinhCosh { from: 1f64.sinh(), upto }.build().unwrap();
    let seg = |t: f64| (t.asinh() + 1e-9).floor();
    let ts2 = ts.clone();
    let coef = Coef::func(move |t| if ts2.is_right_scattered(t).unwrap_or(false) { a / ts2.mu(t).unwrap() } else { a });
    let alpha = Coef::func(move |t| {
        let n = seg(t);
        let (lo, hi) = (n.sinh(), n.cosh());
        t - (hi - t) * (t - lo) / (hi - lo)
    });
    DelayEquation::new(ts, coef, alpha, 1f64.sinh()).unwrap()
}

fn z_mod3(a: f64, b: f64, upto: f64) -> DelayEquation {
    let ts = Generator::ZMod3 { from: -4.0, upto }.build().unwrap();
    let coef = Coef::func(move |t| if (t.round() as i64).rem_euclid(3) == 1 { a } else { b });
    DelayEquation::new(ts, coef, Coef::parse("rho(rho(t))").unwrap(), 1.0).unwrap()
}

#[test]
fn unbounded_coefficient_on_p11() {
    let opts = ClassifyOptions { h_max: 1e-3, ..Default::default() };
    let cert = classify(&p11_unbounded(0.5, 40.0), &opts).unwrap();
    assert_eq!(cert.verdict, Verdict::UniformlyExponentiallyStable);
    assert_eq!(cert.route, Some(Route::C3_1));
    let strict = cert.report("L31_strict").unwrap();
    assert!((strict.value - 0.5).abs() < 1e-6);
    let l1 = cert.lambda1.unwrap();
    assert!((l1 - 0.5 * cert.lambda0.unwrap()).abs() < 1e-9 * l1);

    let cert = classify(&p11_unbounded(1.0, 40.0), &opts).unwrap();
    assert_eq!(cert.verdict, Verdict::UniformlyStable);
    assert_eq!(cert.route, Some(Route::T3_1));
}

#[test]
fn growing_gaps() {
    let opts = ClassifyOptions { h_max: 1e-3, ..Default::default() };
    let cert = classify(&sinh_cosh(0.5, 9f64.cosh()), &opts).unwrap();
    assert_eq!(cert.verdict, Verdict::GloballyAsymptoticallyStable);
    assert_eq!(cert.route, Some(Route::T3_2));
}

#[test]
fn period_three() {
    let opts = ClassifyOptions { h_max: 1.0, ..Default::default() };
    let cert = classify(&z_mod3(0.375, 0.25, 100.0), &opts).unwrap();
    assert_eq!(cert.verdict, Verdict::UniformlyExponentiallyStable);
    assert_eq!(cert.route, Some(Route::C4_1));
    let l0 = cert.lambda0.unwrap();
    let oracle = f64::min(l0 * 0.375 / (1.0 - l0 * 0.375), l0 * 0.25 / (1.0 - 0.5 * l0));
    assert!((cert.lambda1.unwrap() - oracle).abs() < 1e-9 * oracle);
}
