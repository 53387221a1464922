use pbh_core::counterex::{
    kernel_quadrature_oracle, run_blowup, BlowupExperiment, BlowupGrid, CounterexError, ProbePath, Variant,
};

fn coarse() -> BlowupGrid {
    BlowupGrid { h: 2f64.powi(-7), tau: 2f64.powi(-12), rannacher_steps: 4 }
}

#[test]
fn equal_exponents_give_unit_ratio() {
    let exp = BlowupExperiment::new(1, 0.5, 0.5, Variant::Base);
    let res = run_blowup(&exp, coarse()).unwrap();
    for s in &res.samples {
        assert!((s.ratio - 1.0).abs() < 1e-12);
    }
    assert!(res.fitted_exponent.abs() < 1e-9);
}

#[test]
fn center_ratio_respects_lower_bound() {
    let mut exp = BlowupExperiment::new(1, 1.0, 0.5, Variant::Base);
    exp.probe = ProbePath::Center;
    exp.times = (2..=6).map(|j| 0.5f64.powi(j)).collect();
    let res = run_blowup(&exp, coarse()).unwrap();
    assert!(res.monotone);
    for s in &res.samples {
        assert!(s.ratio >= s.t.powf(-0.5) * (1.0 - 1e-3), "t = {}: {}", s.t, s.ratio);
        let o = s.oracle.as_ref().unwrap();
        assert!(s.ratio >= 0.95 * o.ratio_lo && s.ratio <= 1.05 * o.ratio_hi);
    }
}

#[test]
fn corner_blowup_in_the_disk() {
    let mut exp = BlowupExperiment::new(2, 1.0, 0.5, Variant::Corner);
    exp.probe = ProbePath::BoundaryOffset { distance: 0.125 };
    exp.times = (3..=6).map(|j| 0.5f64.powi(j)).collect();
    let res = run_blowup(&exp, BlowupGrid { h: 2f64.powi(-5), tau: 2f64.powi(-10), rannacher_steps: 4 }).unwrap();
    assert!(res.monotone);
    assert!(res.samples.iter().all(|s| s.oracle.is_none()));
    assert!(res.fitted_exponent < -0.3 && res.fitted_exponent > -0.7, "{}", res.fitted_exponent);
    let mut csv = Vec::new();
    res.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("t,ratio,oracle_lo,oracle_hi\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn oracle_bracket_is_tight() {
    let exp = BlowupExperiment::new(1, 1.0, 0.5, Variant::Base);
    let mid = |x: f64, t: f64| {
        let b = kernel_quadrature_oracle(&exp, x, t).unwrap();
        assert!((b.ratio_hi - b.ratio_lo) < 0.05 * b.ratio_lo);
        assert!(b.ratio_lo >= t.powf(-0.5));
        0.5 * (b.ratio_lo + b.ratio_hi)
    };
    // within √t of the boundary the growth from t = 0.04 to 0.01 is close
    // to (1/4)^{-1/2} = 2
    let growth = mid(0.99, 0.01) / mid(0.99, 0.04);
    assert!(growth > 1.8 && growth < 2.2, "{growth}");
    // at a fixed interior point it is faster, approaching (1/4)^{-1} = 4
    let interior = mid(0.5, 0.000625) / mid(0.5, 0.0025);
    assert!(interior > 3.5 && interior < 4.0, "{interior}");
}

#[test]
fn unresolved_times_are_rejected() {
    let mut exp = BlowupExperiment::new(1, 1.0, 0.5, Variant::Base);
    exp.times = vec![0.1, 1e-5];
    assert!(matches!(run_blowup(&exp, coarse()), Err(CounterexError::Unresolved { .. })));
    let bad = BlowupExperiment::new(1, 0.25, 0.5, Variant::Base);
    assert!(matches!(run_blowup(&bad, coarse()), Err(CounterexError::Invalid(_))));
}
