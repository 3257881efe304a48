//! Two built-in economic flows and their closed-form geometric invariants.
//!
//! The Kaldor business-cycle model couples national income Y and capital
//! stock K through an investment function I(Y, K) and a saving function
//! S(Y, K). The Tobin-Benhabib-Miyao (TBM) monetary-growth model couples
//! the capital-labor ratio k, money stock per head m, and expected
//! inflation rate q through a production function f(k) and a money-demand
//! function l(k, q).
//!
//! Each model comes in two independent forms: a [`VectorField`] factory
//! that assembles the flow symbolically and feeds the generic geometry
//! pipeline, and hand-coded oracle functions for the nonlinear connection,
//! torsion, and Yang-Mills energy, written directly from the closed-form
//! matrices. Tests pit the two routes against each other; they must agree
//! to 1e-12 relative at random parameters and points.

use crate::expr::{Env, EvalError, Expr};
use crate::geometry::VectorField;
use crate::linalg::{SquareMatrix, Tensor3};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("parameter {name} = {value} must satisfy {requirement}")]
    BadParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("{function} may only use {allowed}, found free variable `{name}`")]
    ForbiddenVariable {
        function: &'static str,
        allowed: &'static str,
        name: String,
    },
    #[error("torsion slice index {0} out of range (0..3)")]
    SliceOutOfRange(usize),
    #[error("evaluating {context}: {source}")]
    Eval {
        context: &'static str,
        #[source]
        source: EvalError,
    },
}

fn check_free_vars(
    e: &Expr,
    function: &'static str,
    allowed_names: &[&str],
    allowed: &'static str,
) -> Result<(), ModelError> {
    for name in e.free_variables() {
        if !allowed_names.contains(&name.as_str()) {
            return Err(ModelError::ForbiddenVariable {
                function,
                allowed,
                name,
            });
        }
    }
    Ok(())
}

fn eval(e: &Expr, env: &Env, context: &'static str) -> Result<f64, ModelError> {
    e.eval(env)
        .map_err(|source| ModelError::Eval { context, source })
}

/// Antisymmetric matrix from its strictly-upper-triangle entries, given in
/// row-major order: n=2 takes [a01], n=3 takes [a01, a02, a12].
fn antisymmetric(n: usize, upper: &[f64]) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(n);
    let mut it = upper.iter();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = *it.next().expect("upper entry count");
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    m
}

/// Kaldor business-cycle model: adjustment speed s, depreciation rate q,
/// and symbolic investment/saving functions of (Y, K).
#[derive(Debug, Clone)]
pub struct KaldorParams {
    s: f64,
    q: f64,
    investment: Expr,
    saving: Expr,
}

impl KaldorParams {
    pub fn new(s: f64, q: f64, investment: Expr, saving: Expr) -> Result<KaldorParams, ModelError> {
        if !(s.is_finite() && s > 0.0) {
            return Err(ModelError::BadParameter {
                name: "s",
                value: s,
                requirement: "s > 0",
            });
        }
        if !(q.is_finite() && q > 0.0 && q < 1.0) {
            return Err(ModelError::BadParameter {
                name: "q",
                value: q,
                requirement: "0 < q < 1",
            });
        }
        check_free_vars(&investment, "the investment function", &["Y", "K"], "Y and K")?;
        check_free_vars(&saving, "the saving function", &["Y", "K"], "Y and K")?;
        Ok(KaldorParams {
            s,
            q,
            investment,
            saving,
        })
    }

    /// The stock demo configuration: I = atan(Y) - 0.2*K, S = 0.3*Y,
    /// s = 2, q = 0.1.
    pub fn fixture() -> KaldorParams {
        KaldorParams::new(
            2.0,
            0.1,
            Expr::parse("atan(Y) - 0.2*K").unwrap(),
            Expr::parse("0.3*Y").unwrap(),
        )
        .unwrap()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn investment(&self) -> &Expr {
        &self.investment
    }

    pub fn saving(&self) -> &Expr {
        &self.saving
    }

    fn env(&self, y: f64, k: f64) -> Env {
        [("Y".to_string(), y), ("K".to_string(), k)]
            .into_iter()
            .collect()
    }

    /// I_Y, I_K, S_K at (Y, K).
    fn first_partials(&self, y: f64, k: f64) -> Result<(f64, f64, f64), ModelError> {
        let env = self.env(y, k);
        let iy = eval(&self.investment.differentiate("Y"), &env, "I_Y")?;
        let ik = eval(&self.investment.differentiate("K"), &env, "I_K")?;
        let sk = eval(&self.saving.differentiate("K"), &env, "S_K")?;
        Ok((iy, ik, sk))
    }
}

/// dY/dt = s[I(Y,K) - S(Y,K)], dK/dt = I(Y,K) - qK, with s and q carried
/// as symbolic parameters.
pub fn kaldor_field(p: &KaldorParams) -> VectorField {
    let income = Expr::var("s") * (p.investment.clone() - p.saving.clone());
    let capital = p.investment.clone() - Expr::var("q") * Expr::var("K");
    let params: BTreeMap<String, f64> =
        [("s".to_string(), p.s), ("q".to_string(), p.q)].into();
    VectorField::new(
        vec!["Y".to_string(), "K".to_string()],
        vec![income, capital],
        params,
    )
    .expect("validated Kaldor components")
}

/// Nonlinear connection of the Kaldor flow; the single independent entry is
/// N[0][1] = 1/2 [I_Y - s(I_K - S_K)].
pub fn kaldor_connection_oracle(
    p: &KaldorParams,
    y: f64,
    k: f64,
) -> Result<SquareMatrix, ModelError> {
    let (iy, ik, sk) = p.first_partials(y, k)?;
    Ok(antisymmetric(2, &[0.5 * (iy - p.s * (ik - sk))]))
}

/// Torsion of the Kaldor flow, indexed [i][j][k] with k the derivative
/// direction. Nonzero entries:
///
/// ```text
///   T[0][1][0] = 1/2 [I_YY - s(I_YK - S_YK)]
///   T[0][1][1] = 1/2 [I_YK - s(I_KK - S_KK)]
/// ```
///
/// and their antisymmetric partners under i <-> j.
pub fn kaldor_torsion_oracle(p: &KaldorParams, y: f64, k: f64) -> Result<Tensor3, ModelError> {
    let env = p.env(y, k);
    let i_y = p.investment.differentiate("Y");
    let iyy = eval(&i_y.differentiate("Y"), &env, "I_YY")?;
    let iyk = eval(&i_y.differentiate("K"), &env, "I_YK")?;
    let ikk = eval(&p.investment.differentiate("K").differentiate("K"), &env, "I_KK")?;
    let s_y = p.saving.differentiate("Y");
    let syk = eval(&s_y.differentiate("K"), &env, "S_YK")?;
    let skk = eval(&p.saving.differentiate("K").differentiate("K"), &env, "S_KK")?;

    let mut t = Tensor3::zeros(2);
    let by_y = 0.5 * (iyy - p.s * (iyk - syk));
    let by_k = 0.5 * (iyk - p.s * (ikk - skk));
    t.set(0, 1, 0, by_y);
    t.set(1, 0, 0, -by_y);
    t.set(0, 1, 1, by_k);
    t.set(1, 0, 1, -by_k);
    Ok(t)
}

/// Yang-Mills energy of the Kaldor flow:
/// EYM = 1/4 [I_Y - s(I_K - S_K)]^2.
pub fn kaldor_energy_oracle(p: &KaldorParams, y: f64, k: f64) -> Result<f64, ModelError> {
    let (iy, ik, sk) = p.first_partials(y, k)?;
    let bracket = iy - p.s * (ik - sk);
    Ok(0.25 * bracket * bracket)
}

/// TBM monetary-growth model: saving ratio s, money expansion rate theta,
/// population growth rate n, expectation adjustment speed mu, price
/// adjustment speed epsilon, plus symbolic f(k) and l(k, q).
#[derive(Debug, Clone)]
pub struct TbmParams {
    s: f64,
    theta: f64,
    n: f64,
    mu: f64,
    epsilon: f64,
    production: Expr,
    money_demand: Expr,
}

impl TbmParams {
    pub fn new(
        s: f64,
        theta: f64,
        n: f64,
        mu: f64,
        epsilon: f64,
        production: Expr,
        money_demand: Expr,
    ) -> Result<TbmParams, ModelError> {
        for (name, value) in [
            ("s", s),
            ("theta", theta),
            ("n", n),
            ("mu", mu),
            ("epsilon", epsilon),
        ] {
            if !value.is_finite() {
                return Err(ModelError::BadParameter {
                    name,
                    value,
                    requirement: "a finite real",
                });
            }
        }
        check_free_vars(&production, "the production function", &["k"], "k")?;
        check_free_vars(&money_demand, "the money-demand function", &["k", "q"], "k and q")?;
        Ok(TbmParams {
            s,
            theta,
            n,
            mu,
            epsilon,
            production,
            money_demand,
        })
    }

    /// The stock demo configuration: f = k - 0.05*k^2, l = 0.25*k - 0.5*q,
    /// s = 0.3, theta = 0.1, n = 0.02, mu = 0.5, epsilon = 0.4.
    pub fn fixture() -> TbmParams {
        TbmParams::new(
            0.3,
            0.1,
            0.02,
            0.5,
            0.4,
            Expr::parse("k - 0.05*k^2").unwrap(),
            Expr::parse("0.25*k - 0.5*q").unwrap(),
        )
        .unwrap()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn production(&self) -> &Expr {
        &self.production
    }

    pub fn money_demand(&self) -> &Expr {
        &self.money_demand
    }

    fn env(&self, k: f64, m: f64, q: f64) -> Env {
        [
            ("k".to_string(), k),
            ("m".to_string(), m),
            ("q".to_string(), q),
        ]
        .into_iter()
        .collect()
    }

    /// l_k and l_q at (k, q).
    fn demand_partials(&self, k: f64, m: f64, q: f64) -> Result<(f64, f64), ModelError> {
        let env = self.env(k, m, q);
        let lk = eval(&self.money_demand.differentiate("k"), &env, "l_k")?;
        let lq = eval(&self.money_demand.differentiate("q"), &env, "l_q")?;
        Ok((lk, lq))
    }
}

/// dk/dt = s f(k) - (1-s)[theta - q]m - nk,
/// dm/dt = m{theta - n - q - epsilon[m - l(k,q)]},
/// dq/dt = mu epsilon [m - l(k,q)], with all five rates carried as
/// symbolic parameters.
pub fn tbm_field(p: &TbmParams) -> VectorField {
    let s = Expr::var("s");
    let theta = Expr::var("theta");
    let excess = Expr::var("m") - p.money_demand.clone();

    let capital = s.clone() * p.production.clone()
        - (Expr::constant(1.0) - s) * (theta.clone() - Expr::var("q")) * Expr::var("m")
        - Expr::var("n") * Expr::var("k");
    let money = Expr::var("m")
        * (theta - Expr::var("n") - Expr::var("q") - Expr::var("epsilon") * excess.clone());
    let inflation = Expr::var("mu") * Expr::var("epsilon") * excess;

    let params: BTreeMap<String, f64> = [
        ("s".to_string(), p.s),
        ("theta".to_string(), p.theta),
        ("n".to_string(), p.n),
        ("mu".to_string(), p.mu),
        ("epsilon".to_string(), p.epsilon),
    ]
    .into();
    VectorField::new(
        vec!["k".to_string(), "m".to_string(), "q".to_string()],
        vec![capital, money, inflation],
        params,
    )
    .expect("validated TBM components")
}

/// Nonlinear connection of the TBM flow. Independent entries:
///
/// ```text
///   N[0][1] =  1/2 [(1-s)(theta-q) + epsilon m l_k]
///   N[0][2] = -1/2 [(1-s)m + mu epsilon l_k]
///   N[1][2] =  1/2 [m - epsilon m l_q + mu epsilon]
/// ```
pub fn tbm_connection_oracle(
    p: &TbmParams,
    k: f64,
    m: f64,
    q: f64,
) -> Result<SquareMatrix, ModelError> {
    let (lk, lq) = p.demand_partials(k, m, q)?;
    let e = p.epsilon;
    Ok(antisymmetric(
        3,
        &[
            0.5 * ((1.0 - p.s) * (p.theta - q) + e * m * lk),
            -0.5 * ((1.0 - p.s) * m + p.mu * e * lk),
            0.5 * (m - e * m * lq + p.mu * e),
        ],
    ))
}

/// One derivative slice of the TBM torsion: the antisymmetric matrix
/// [T[i][j][slice]]_ij, where slice 0, 1, 2 differentiates the connection
/// by k, m, q respectively.
pub fn tbm_torsion_oracle(
    p: &TbmParams,
    k: f64,
    m: f64,
    q: f64,
    slice: usize,
) -> Result<SquareMatrix, ModelError> {
    let env = p.env(k, m, q);
    let l_k = p.money_demand.differentiate("k");
    let l_q = p.money_demand.differentiate("q");
    let e = p.epsilon;
    let upper = match slice {
        0 => {
            let lkk = eval(&l_k.differentiate("k"), &env, "l_kk")?;
            let lkq = eval(&l_k.differentiate("q"), &env, "l_kq")?;
            [
                0.5 * e * m * lkk,
                -0.5 * p.mu * e * lkk,
                -0.5 * e * m * lkq,
            ]
        }
        1 => {
            let lk = eval(&l_k, &env, "l_k")?;
            let lq = eval(&l_q, &env, "l_q")?;
            [0.5 * e * lk, -0.5 * (1.0 - p.s), 0.5 * (1.0 - e * lq)]
        }
        2 => {
            let lkq = eval(&l_k.differentiate("q"), &env, "l_kq")?;
            let lqq = eval(&l_q.differentiate("q"), &env, "l_qq")?;
            [
                -0.5 * (1.0 - p.s - e * m * lkq),
                -0.5 * p.mu * e * lkq,
                -0.5 * e * m * lqq,
            ]
        }
        other => return Err(ModelError::SliceOutOfRange(other)),
    };
    Ok(antisymmetric(3, &upper))
}

/// Yang-Mills energy of the TBM flow:
///
/// ```text
///   EYM = 1/4 { [(1-s)(theta-q) + epsilon m l_k]^2
///             + [(1-s)m + mu epsilon l_k]^2
///             + [m - epsilon m l_q + mu epsilon]^2 }
/// ```
pub fn tbm_energy_oracle(p: &TbmParams, k: f64, m: f64, q: f64) -> Result<f64, ModelError> {
    let (lk, lq) = p.demand_partials(k, m, q)?;
    let e = p.epsilon;
    let b1 = (1.0 - p.s) * (p.theta - q) + e * m * lk;
    let b2 = (1.0 - p.s) * m + p.mu * e * lk;
    let b3 = m - e * m * lq + p.mu * e;
    Ok(0.25 * (b1 * b1 + b2 * b2 + b3 * b3))
}

/// Actual rate of inflation: epsilon[m - l(k,q)] + q.
pub fn tbm_actual_inflation(p: &TbmParams, k: f64, m: f64, q: f64) -> Result<f64, ModelError> {
    let env = p.env(k, m, q);
    let l = eval(&p.money_demand, &env, "l")?;
    Ok(p.epsilon * (m - l) + q)
}
