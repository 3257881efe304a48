use super::*;
use proptest::prelude::*;

fn env2(y: f64, k: f64) -> Env {
    Env::new().bind("Y", y).bind("K", k)
}

#[test]
fn parse_precedence_structure() {
    let e = Expr::parse("2*Y + K^2").unwrap();
    let expected = Expr::BinOp(
        BinOp::Add,
        Box::new(Expr::BinOp(
            BinOp::Mul,
            Box::new(Expr::Constant(2.0)),
            Box::new(Expr::var("Y")),
        )),
        Box::new(Expr::BinOp(
            BinOp::Pow,
            Box::new(Expr::var("K")),
            Box::new(Expr::Constant(2.0)),
        )),
    );
    assert_eq!(e, expected);
}

#[test]
fn parse_unary_minus_over_call() {
    let e = Expr::parse("-atan(Y)").unwrap();
    assert_eq!(
        e,
        Expr::Neg(Box::new(Expr::Call(Func::Atan, Box::new(Expr::var("Y")))))
    );
}

#[test]
fn parse_power_is_right_associative() {
    let e = Expr::parse("2^3^2").unwrap();
    let env = Env::new();
    assert_eq!(e.eval(&env).unwrap(), 512.0);
}

#[test]
fn parse_unary_minus_binds_looser_than_power() {
    // -Y^2 means -(Y^2)
    let e = Expr::parse("-Y^2").unwrap();
    assert_eq!(e.eval(&env2(3.0, 0.0)).unwrap(), -9.0);
    // but a signed exponent still parses
    let e = Expr::parse("2^-2").unwrap();
    assert_eq!(e.eval(&Env::new()).unwrap(), 0.25);
}

#[test]
fn parse_reports_byte_offsets() {
    let err = Expr::parse("Y + * K").unwrap_err();
    assert_eq!(err.offset, 4);
    assert!(matches!(err.kind, ParseErrorKind::Expected { .. }));

    let err = Expr::parse("foo(Y)").unwrap_err();
    assert_eq!(err.offset, 0);
    assert_eq!(err.kind, ParseErrorKind::UnknownFunction("foo".into()));

    let err = Expr::parse("Y + K)").unwrap_err();
    assert_eq!(err.offset, 5);

    let err = Expr::parse("(Y + K").unwrap_err();
    assert_eq!(err.offset, 6);

    let err = Expr::parse("Y @ K").unwrap_err();
    assert_eq!(err.offset, 2);
    assert_eq!(err.kind, ParseErrorKind::UnexpectedChar('@'));
}

#[test]
fn parse_scientific_notation_and_adjacent_idents() {
    assert_eq!(
        Expr::parse("1.5e-3").unwrap(),
        Expr::Constant(1.5e-3)
    );
    assert_eq!(Expr::parse("2E2").unwrap(), Expr::Constant(200.0));
    // `2exp(Y)` must not eat `e` as an exponent marker; with no implicit
    // multiplication it is a syntax error after the literal
    let err = Expr::parse("2exp(Y)").unwrap_err();
    assert_eq!(err.offset, 1);
}

#[test]
fn eval_basic_and_errors() {
    let e = Expr::parse("2*Y + K^2").unwrap();
    assert_eq!(e.eval(&env2(1.0, 3.0)).unwrap(), 11.0);

    let err = e.eval(&Env::new().bind("Y", 1.0)).unwrap_err();
    assert_eq!(err, EvalError::UnboundVariable("K".into()));

    let e = Expr::parse("Y/K").unwrap();
    assert!(matches!(
        e.eval(&env2(1.0, 0.0)).unwrap_err(),
        EvalError::NonFinite(_)
    ));
}

#[test]
fn eval_rejects_fractional_power_of_negative_base() {
    let e = Expr::parse("Y^0.5").unwrap();
    assert!(matches!(
        e.eval(&env2(-4.0, 0.0)).unwrap_err(),
        EvalError::NonFinite(_)
    ));
    // integer exponents on negative bases stay exact
    let e = Expr::parse("Y^3").unwrap();
    assert_eq!(e.eval(&env2(-2.0, 0.0)).unwrap(), -8.0);
}

#[test]
fn eval_ln_and_sqrt_domains() {
    let ln = Expr::parse("ln(Y)").unwrap();
    assert!(ln.eval(&env2(-1.0, 0.0)).is_err());
    assert!(ln.eval(&env2(0.0, 0.0)).is_err());
    let sqrt = Expr::parse("sqrt(Y)").unwrap();
    assert!(sqrt.eval(&env2(-1.0, 0.0)).is_err());
    assert_eq!(sqrt.eval(&env2(4.0, 0.0)).unwrap(), 2.0);
}

#[test]
fn differentiate_polynomial() {
    let e = Expr::parse("Y^2 + K").unwrap();
    let d = e.differentiate("Y");
    for y in [-2.0, 0.0, 0.7, 3.0] {
        assert_eq!(d.eval(&env2(y, 5.0)).unwrap(), 2.0 * y);
    }
    let dk = e.differentiate("K");
    assert_eq!(dk.eval(&env2(1.0, 1.0)).unwrap(), 1.0);
}

#[test]
fn differentiate_atan() {
    let e = Expr::parse("atan(Y)").unwrap();
    let d = e.differentiate("Y");
    for y in [-1.5, 0.0, 2.0] {
        let expected = 1.0 / (1.0 + y * y);
        assert!((d.eval(&env2(y, 0.0)).unwrap() - expected).abs() < 1e-15);
    }
}

#[test]
fn differentiate_is_closed_under_iteration() {
    // third derivative of sin is -cos
    let mut e = Expr::parse("sin(Y)").unwrap();
    for _ in 0..3 {
        e = e.differentiate("Y");
    }
    for y in [-1.0, 0.3, 2.0f64] {
        assert!((e.eval(&env2(y, 0.0)).unwrap() + y.cos()).abs() < 1e-15);
    }
}

#[test]
fn differentiate_abs_away_from_zero() {
    let d = Expr::parse("abs(Y)").unwrap().differentiate("Y");
    assert_eq!(d.eval(&env2(2.5, 0.0)).unwrap(), 1.0);
    assert_eq!(d.eval(&env2(-2.5, 0.0)).unwrap(), -1.0);
    // 0/abs(0) is NaN, reported as an error
    assert!(d.eval(&env2(0.0, 0.0)).is_err());
}

#[test]
fn differentiate_general_power() {
    // d/dY Y^Y = Y^Y (ln Y + 1)
    let d = Expr::parse("Y^Y").unwrap().differentiate("Y");
    let y = 1.7f64;
    let expected = y.powf(y) * (y.ln() + 1.0);
    assert!((d.eval(&env2(y, 0.0)).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn simplify_identities() {
    let e = Expr::parse("0*K + Y").unwrap().simplify();
    assert_eq!(e, Expr::var("Y"));

    let e = Expr::parse("2*3").unwrap().simplify();
    assert_eq!(e, Expr::Constant(6.0));

    let e = Expr::parse("Y^1").unwrap().simplify();
    assert_eq!(e, Expr::var("Y"));

    let e = Expr::parse("Y^0").unwrap().simplify();
    assert_eq!(e, Expr::Constant(1.0));

    let e = Expr::parse("(Y - 0) / 1").unwrap().simplify();
    assert_eq!(e, Expr::var("Y"));

    let e = Expr::parse("0 - Y").unwrap().simplify();
    assert_eq!(e, Expr::Neg(Box::new(Expr::var("Y"))));

    // folding only happens when the value is finite
    let e = Expr::parse("1/0").unwrap().simplify();
    assert!(matches!(e, Expr::BinOp(BinOp::Div, _, _)));
}

#[test]
fn simplify_keeps_defined_semantics() {
    // 0 * ln(Y) simplifies to 0; at Y where ln is defined both agree
    let raw = Expr::parse("0 * ln(Y) + Y").unwrap();
    let s = raw.simplify();
    let env = env2(2.0, 0.0);
    assert_eq!(raw.eval(&env).unwrap(), s.eval(&env).unwrap());
}

#[test]
fn free_variables_exact() {
    let e = Expr::parse("atan(Y) - 0.2*K + sin(Y)").unwrap();
    let vars = e.free_variables();
    assert_eq!(
        vars.into_iter().collect::<Vec<_>>(),
        vec!["K".to_string(), "Y".to_string()]
    );
    assert!(Expr::parse("1 + 2").unwrap().free_variables().is_empty());
}

#[test]
fn substitute_replaces_all_occurrences() {
    let e = Expr::parse("Y + Y*K").unwrap();
    let sub = e.substitute("Y", &Expr::parse("q^2").unwrap());
    let env = Env::new().bind("q", 2.0).bind("K", 3.0);
    assert_eq!(sub.eval(&env).unwrap(), 4.0 + 12.0);
    assert!(!sub.free_variables().contains("Y"));
}

#[test]
fn display_round_trips_parser_output() {
    for src in [
        "2*Y + K^2",
        "-atan(Y)",
        "Y - (K - 1)",
        "(Y + K)^2^3",
        "-(Y + K) * -K",
        "Y / K / 2",
        "2^-Y",
        "sin(cos(Y)) + tanh(K)/(1 + abs(Y))",
    ] {
        let parsed = Expr::parse(src).unwrap();
        let reparsed = Expr::parse(&parsed.to_string()).unwrap();
        assert_eq!(parsed, reparsed, "round-trip changed `{src}`");
    }
}

#[test]
fn display_guards_negative_constant_base() {
    // a synthesized tree the parser itself would never produce
    let e = Expr::BinOp(
        BinOp::Pow,
        Box::new(Expr::Constant(-2.0)),
        Box::new(Expr::Constant(2.0)),
    );
    let printed = e.to_string();
    let reparsed = Expr::parse(&printed).unwrap();
    assert_eq!(reparsed.eval(&Env::new()).unwrap(), 4.0);
}

#[test]
fn display_separates_nested_negation() {
    let e = Expr::Neg(Box::new(Expr::Neg(Box::new(Expr::var("Y")))));
    let reparsed = Expr::parse(&e.to_string()).unwrap();
    assert_eq!(reparsed, e);
}

fn arb_var() -> impl Strategy<Value = Expr> {
    prop_oneof![Just(Expr::var("x")), Just(Expr::var("y"))]
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0..3.0f64).prop_map(Expr::Constant),
        arb_var(),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
            inner.clone().prop_map(|a| -a),
            (prop_oneof![
                Just(Func::Sin),
                Just(Func::Cos),
                Just(Func::Atan),
                Just(Func::Exp),
                Just(Func::Tanh),
            ], inner.clone())
                .prop_map(|(f, a)| Expr::Call(f, Box::new(a))),
            (inner, 2u8..4).prop_map(|(a, p)| {
                Expr::BinOp(BinOp::Pow, Box::new(a), Box::new(Expr::Constant(p as f64)))
            }),
        ]
    })
}

/// Central finite difference, or None when evaluation fails nearby.
fn central_fd(e: &Expr, var: &str, env: &Env, h: f64) -> Option<f64> {
    let base = env.get(var)?;
    let mut hi = env.clone();
    hi.set(var, base + h);
    let mut lo = env.clone();
    lo.set(var, base - h);
    Some((e.eval(&hi).ok()? - e.eval(&lo).ok()?) / (2.0 * h))
}

proptest! {
    #[test]
    fn derivative_matches_finite_difference(e in arb_expr(), x in -1.5..1.5f64, y in -1.5..1.5f64) {
        let env = Env::new().bind("x", x).bind("y", y);
        let Ok(v) = e.eval(&env) else { return Ok(()) };
        if v.abs() > 1e4 {
            return Ok(());
        }
        let d = e.differentiate("x");
        let Ok(dv) = d.eval(&env) else { return Ok(()) };
        if dv.abs() > 1e4 {
            return Ok(());
        }
        let h = 1e-5;
        let (Some(fd), Some(fd_half)) = (central_fd(&e, "x", &env, h), central_fd(&e, "x", &env, h / 2.0)) else {
            return Ok(());
        };
        // skip points where the finite difference itself is unstable
        if (fd - fd_half).abs() > 1e-6 * (1.0 + fd.abs()) {
            return Ok(());
        }
        let err = (dv - fd).abs() / (1.0 + fd.abs());
        prop_assert!(err < 1e-4, "symbolic {dv} vs fd {fd} (err {err:.3e}) for {e}");
    }

    #[test]
    fn mixed_partials_commute(e in arb_expr(), x in -1.5..1.5f64, y in -1.5..1.5f64) {
        let env = Env::new().bind("x", x).bind("y", y);
        let dxy = e.differentiate("x").differentiate("y");
        let dyx = e.differentiate("y").differentiate("x");
        let (Ok(a), Ok(b)) = (dxy.eval(&env), dyx.eval(&env)) else { return Ok(()) };
        let scale = 1.0f64.max(a.abs()).max(b.abs());
        prop_assert!((a - b).abs() / scale < 1e-9, "d2/dxdy {a} vs d2/dydx {b} for {e}");
    }

    #[test]
    fn simplify_preserves_value(e in arb_expr(), x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let env = Env::new().bind("x", x).bind("y", y);
        let s = e.simplify();
        if let (Ok(a), Ok(b)) = (e.eval(&env), s.eval(&env)) {
            let scale = 1.0f64.max(a.abs());
            prop_assert!((a - b).abs() / scale < 1e-12, "{e} -> {s}: {a} vs {b}");
        }
    }

    #[test]
    fn print_parse_is_semantically_stable(e in arb_expr(), x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let printed = e.to_string();
        let reparsed = Expr::parse(&printed);
        prop_assert!(reparsed.is_ok(), "print of {e:?} as `{printed}` failed to parse: {:?}", reparsed.err());
        let reparsed = reparsed.unwrap();
        // reparse is structurally stable from the first print onward
        let second = Expr::parse(&reparsed.to_string()).unwrap();
        prop_assert_eq!(&second, &reparsed);
        // and evaluation is preserved
        let env = Env::new().bind("x", x).bind("y", y);
        if let Ok(a) = e.eval(&env) {
            let b = reparsed.eval(&env).unwrap();
            let scale = 1.0f64.max(a.abs());
            prop_assert!((a - b).abs() / scale < 1e-15, "`{printed}`: {a} vs {b}");
        }
    }

    #[test]
    fn free_variables_bound_by_construction(e in arb_expr()) {
        let vars = e.free_variables();
        for v in &vars {
            prop_assert!(v == "x" || v == "y");
        }
        // an env binding exactly the free variables suffices when no domain
        // error occurs, and unbound-variable errors never mention bound names
        let env: Env = vars.iter().map(|v| (v.clone(), 0.5)).collect();
        if let Err(EvalError::UnboundVariable(name)) = e.eval(&env) {
            prop_assert!(false, "unexpected unbound {name}");
        }
    }
}
