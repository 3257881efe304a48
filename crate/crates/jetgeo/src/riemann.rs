//! Geometric dynamics of a flow on a Riemannian manifold (M, φ): Christoffel
//! symbols, the Levi-Civita covariant derivative of a vector field, the
//! deformation tensor, and the second-order equation of motion
//!
//! ```text
//!   ẍ^i + γ^i_jk ẋ^j ẋ^k = F^i_j ẋ^j + φ^ih φ_kj X^j ∇_h X^k
//! ```
//!
//! which extends ẋ = X(x): every C² solution of the first-order flow also
//! solves it, for any admissible metric. With the Euclidean metric the
//! right-hand side collapses to the jet prolongation
//! [`VectorField::prolonged_acceleration`], exactly.
//!
//! The metric is symbolic; its derivatives are cached at construction and
//! evaluated per point, where the matrix must prove symmetric positive
//! definite (attempted Cholesky) and well conditioned (1-norm condition
//! number from the LU inverse, capped at 1e12).

use crate::expr::{Env, EvalError, Expr};
use crate::geometry::{is_identifier, VectorField};
use crate::linalg::{SquareMatrix, Tensor3};
use std::collections::BTreeMap;

/// Condition numbers above this are treated as a domain error.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Christoffel symbols γ^i_jk of a metric at a point, indexed
/// `values.get(i, j, k)`; symmetric in (j, k) exactly, because the metric
/// derivative tensor is evaluated once per unordered index pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelTensor {
    pub values: Tensor3,
}

#[derive(Debug, thiserror::Error)]
pub enum RiemannError {
    #[error("a metric needs at least one coordinate")]
    Empty,
    #[error("metric entries must form an n-by-n array matching {expected} coordinates")]
    EntryShape { expected: usize },
    #[error("invalid variable name `{0}`")]
    InvalidVarName(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateVarName(String),
    #[error("`{0}` is declared both as a variable and as a parameter")]
    NameClash(String),
    #[error("metric entry [{i}][{j}] uses `{name}`, which is neither a variable nor a parameter")]
    UnknownSymbol { i: usize, j: usize, name: String },
    #[error("metric entries [{i}][{j}] and [{j}][{i}] are not the same expression")]
    NotStructurallySymmetric { i: usize, j: usize },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input coordinate")]
    NonFiniteInput,
    #[error("vector field coordinates {field:?} do not match metric coordinates {metric:?}")]
    VariableMismatch {
        field: Vec<String>,
        metric: Vec<String>,
    },
    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("metric condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e} at {point:?}")]
    IllConditioned { point: Vec<f64>, cond: f64 },
    #[error("evaluating {context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Field(#[from] crate::geometry::GeometryError),
}

/// A symbolic Riemannian metric φ_ij over named coordinates.
///
/// Entries must be structurally symmetric as supplied (entry [i][j] is the
/// same expression as entry [j][i]); positive definiteness is a per-point
/// property checked at every evaluation.
#[derive(Debug, Clone)]
pub struct MetricField {
    var_names: Vec<String>,
    entries: Vec<Vec<Expr>>,
    params: BTreeMap<String, f64>,
    base_env: Env,
    // ∂φ_ij/∂x^k, cached for i ≤ j and mirrored on evaluation
    dentries: Vec<Vec<Vec<Expr>>>,
}

impl MetricField {
    pub fn new(
        var_names: Vec<String>,
        entries: Vec<Vec<Expr>>,
        params: BTreeMap<String, f64>,
    ) -> Result<MetricField, RiemannError> {
        let n = var_names.len();
        if n == 0 {
            return Err(RiemannError::Empty);
        }
        if entries.len() != n || entries.iter().any(|row| row.len() != n) {
            return Err(RiemannError::EntryShape { expected: n });
        }
        for name in &var_names {
            if !is_identifier(name) {
                return Err(RiemannError::InvalidVarName(name.clone()));
            }
            if var_names.iter().filter(|v| *v == name).count() > 1 {
                return Err(RiemannError::DuplicateVarName(name.clone()));
            }
            if params.contains_key(name) {
                return Err(RiemannError::NameClash(name.clone()));
            }
        }
        for (i, row) in entries.iter().enumerate() {
            for (j, entry) in row.iter().enumerate().skip(i) {
                if *entry != entries[j][i] {
                    return Err(RiemannError::NotStructurallySymmetric { i, j });
                }
                for free in entry.free_variables() {
                    if !var_names.contains(&free) && !params.contains_key(&free) {
                        return Err(RiemannError::UnknownSymbol { i, j, name: free });
                    }
                }
            }
        }

        let dentries: Vec<Vec<Vec<Expr>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        var_names
                            .iter()
                            .map(|v| entries[i][j].differentiate(v).simplify())
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let base_env: Env = params.iter().map(|(k, v)| (k.clone(), *v)).collect();

        Ok(MetricField {
            var_names,
            entries,
            params,
            base_env,
            dentries,
        })
    }

    /// The flat metric δ_ij over the given coordinates.
    pub fn euclidean(var_names: Vec<String>) -> Result<MetricField, RiemannError> {
        let n = var_names.len();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| Expr::constant(if i == j { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        MetricField::new(var_names, entries, BTreeMap::new())
    }

    pub fn n(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn entries(&self) -> &Vec<Vec<Expr>> {
        &self.entries
    }

    /// True when every entry constant-folds to the flat metric: 1 on the
    /// diagonal, 0 elsewhere. Front ends use this to route Euclidean
    /// geodesics through the jet prolongation, whose arithmetic the general
    /// path reproduces only up to rounding.
    pub fn is_euclidean(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| {
            (0..n).all(|j| {
                let want = if i == j { 1.0 } else { 0.0 };
                self.entries[i][j].simplify() == Expr::constant(want)
            })
        })
    }

    fn check_point(&self, x: &[f64]) -> Result<(), RiemannError> {
        if x.len() != self.n() {
            return Err(RiemannError::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RiemannError::NonFiniteInput);
        }
        Ok(())
    }

    fn check_field(&self, f: &VectorField) -> Result<(), RiemannError> {
        if f.var_names() != self.var_names.as_slice() {
            return Err(RiemannError::VariableMismatch {
                field: f.var_names().to_vec(),
                metric: self.var_names.clone(),
            });
        }
        Ok(())
    }

    fn env_at(&self, x: &[f64]) -> Env {
        let mut env = self.base_env.clone();
        for (name, value) in self.var_names.iter().zip(x) {
            env.set(name.clone(), *value);
        }
        env
    }

    fn eval_in(&self, e: &Expr, env: &Env, context: &str) -> Result<f64, RiemannError> {
        e.eval(env).map_err(|source| RiemannError::Eval {
            context: context.to_string(),
            source,
        })
    }

    /// φ(x) and φ(x)⁻¹. The matrix must be positive definite (attempted
    /// Cholesky) and have 1-norm condition number below
    /// [`CONDITION_LIMIT`]; the inverse comes from a dense LU
    /// decomposition with partial pivoting.
    pub fn metric_matrices(&self, x: &[f64]) -> Result<(SquareMatrix, SquareMatrix), RiemannError> {
        self.check_point(x)?;
        let env = self.env_at(x);
        let n = self.n();
        let mut phi = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v =
                    self.eval_in(&self.entries[i][j], &env, &format!("metric [{i}][{j}]"))?;
                phi[(i, j)] = v;
                phi[(j, i)] = v;
            }
        }

        let na = nalgebra::DMatrix::from_fn(n, n, |i, j| phi[(i, j)]);
        if nalgebra::Cholesky::new(na.clone()).is_none() {
            return Err(RiemannError::NotPositiveDefinite { point: x.to_vec() });
        }
        let inv_na = match na.clone().lu().try_inverse() {
            Some(inv) => inv,
            None => {
                return Err(RiemannError::IllConditioned {
                    point: x.to_vec(),
                    cond: f64::INFINITY,
                })
            }
        };
        let cond = one_norm(&na) * one_norm(&inv_na);
        if cond > CONDITION_LIMIT {
            return Err(RiemannError::IllConditioned {
                point: x.to_vec(),
                cond,
            });
        }
        let mut inv = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] = inv_na[(i, j)];
            }
        }
        Ok((phi, inv))
    }

    /// ∂φ_ij/∂x^k at x, from the cached symbolic derivatives; exactly
    /// symmetric in (i, j).
    fn metric_derivatives(&self, x: &[f64]) -> Result<Tensor3, RiemannError> {
        let env = self.env_at(x);
        let n = self.n();
        let mut out = Tensor3::zeros(n);
        for i in 0..n {
            for j in i..n {
                for k in 0..n {
                    let v = self.eval_in(
                        &self.dentries[i][j][k],
                        &env,
                        &format!("metric derivative [{i}][{j}] by x^{k}"),
                    )?;
                    out.set(i, j, k, v);
                    out.set(j, i, k, v);
                }
            }
        }
        Ok(out)
    }

    /// γ^i_jk = ½ φ^ih (∂φ_hj/∂x^k + ∂φ_hk/∂x^j − ∂φ_jk/∂x^h).
    pub fn christoffel(&self, x: &[f64]) -> Result<ChristoffelTensor, RiemannError> {
        let (_, inv) = self.metric_matrices(x)?;
        let dphi = self.metric_derivatives(x)?;
        let n = self.n();
        let mut values = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut sum = 0.0;
                    for h in 0..n {
                        sum += inv[(i, h)]
                            * (dphi.get(h, j, k) + dphi.get(h, k, j) - dphi.get(j, k, h));
                    }
                    values.set(i, j, k, 0.5 * sum);
                }
            }
        }
        Ok(ChristoffelTensor { values })
    }

    /// ∇X as the matrix D with D[i][j] = ∇_j X^i = ∂X^i/∂x^j + γ^i_jk X^k.
    pub fn covariant_derivative(
        &self,
        f: &VectorField,
        x: &[f64],
    ) -> Result<SquareMatrix, RiemannError> {
        self.check_field(f)?;
        let gamma = self.christoffel(x)?;
        let jac = f.jacobian(x)?;
        let value = f.value(x)?;
        let n = self.n();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut d = jac[(i, j)];
                for (k, xk) in value.iter().enumerate() {
                    d += gamma.values.get(i, j, k) * xk;
                }
                out[(i, j)] = d;
            }
        }
        Ok(out)
    }

    /// Deformation tensor F = ∇X − φ⁻¹ (∇X)ᵀ φ, i.e.
    /// F^i_j = ∇_j X^i − φ^ih φ_kj ∇_h X^k. The product φF is antisymmetric.
    pub fn deformation_tensor(
        &self,
        f: &VectorField,
        x: &[f64],
    ) -> Result<SquareMatrix, RiemannError> {
        let (phi, inv) = self.metric_matrices(x)?;
        let d = self.covariant_derivative(f, x)?;
        Ok(subtract(&d, &inv.mul_mat(&d.transpose()).mul_mat(&phi)))
    }

    /// Acceleration of the geometric dynamical system:
    ///
    /// ```text
    ///   a^i = −γ^i_jk v^j v^k + F^i_j v^j + φ^ih φ_kj X^j ∇_h X^k
    /// ```
    ///
    /// With the Euclidean metric this is (J − Jᵀ)v + JᵀX, the jet
    /// prolongation; on-shell (v = X) it is J·X for any metric, which is
    /// why flow lines solve the second-order system regardless of φ.
    pub fn geometric_dynamics_acceleration(
        &self,
        f: &VectorField,
        x: &[f64],
        v: &[f64],
    ) -> Result<Vec<f64>, RiemannError> {
        self.check_field(f)?;
        if v.len() != self.n() {
            return Err(RiemannError::DimensionMismatch {
                expected: self.n(),
                got: v.len(),
            });
        }
        let (phi, inv) = self.metric_matrices(x)?;
        let gamma = self.christoffel(x)?;
        let d = self.covariant_derivative(f, x)?;
        let deformation = subtract(&d, &inv.mul_mat(&d.transpose()).mul_mat(&phi));
        let value = f.value(x)?;
        // φ^ih φ_kj X^j ∇_h X^k = φ⁻¹ · Dᵀ · (φ X)
        let drive = inv.mul_vec(&d.transpose().mul_vec(&phi.mul_vec(&value)));

        let n = self.n();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut a = drive[i];
            for j in 0..n {
                a += deformation[(i, j)] * v[j];
                for k in 0..n {
                    a -= gamma.values.get(i, j, k) * v[j] * v[k];
                }
            }
            out.push(a);
        }
        Ok(out)
    }

    /// LS(x, y) = ½ φ_ij(x) (y − X(x))^i (y − X(x))^j; nonnegative, zero
    /// exactly at y = X(x). With the Euclidean metric this is half the jet
    /// least-squares Lagrangian, which carries no ½.
    pub fn least_squares_lagrangian(
        &self,
        f: &VectorField,
        x: &[f64],
        y: &[f64],
    ) -> Result<f64, RiemannError> {
        self.check_field(f)?;
        if y.len() != self.n() {
            return Err(RiemannError::DimensionMismatch {
                expected: self.n(),
                got: y.len(),
            });
        }
        let (phi, _) = self.metric_matrices(x)?;
        let value = f.value(x)?;
        let w: Vec<f64> = y.iter().zip(&value).map(|(a, b)| a - b).collect();
        Ok(0.5 * dot(&w, &phi.mul_vec(&w)))
    }

    /// Nonlinear connection of the product manifold ℝ × M carrying the
    /// flow: N^i_j(x, y) = γ^i_jk y^k − F^i_j. Exposed for inspection
    /// only; no further geometry is built on it here.
    pub fn product_connection(
        &self,
        f: &VectorField,
        x: &[f64],
        y: &[f64],
    ) -> Result<SquareMatrix, RiemannError> {
        self.check_field(f)?;
        if y.len() != self.n() {
            return Err(RiemannError::DimensionMismatch {
                expected: self.n(),
                got: y.len(),
            });
        }
        let gamma = self.christoffel(x)?;
        let deformation = self.deformation_tensor(f, x)?;
        let n = self.n();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut sum = -deformation[(i, j)];
                for (k, yk) in y.iter().enumerate() {
                    sum += gamma.values.get(i, j, k) * yk;
                }
                out[(i, j)] = sum;
            }
        }
        Ok(out)
    }
}

fn one_norm(m: &nalgebra::DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn subtract(a: &SquareMatrix, b: &SquareMatrix) -> SquareMatrix {
    let n = a.n();
    let mut out = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = a[(i, j)] - b[(i, j)];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::JetSample;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn exprs(rows: &[&[&str]]) -> Vec<Vec<Expr>> {
        rows.iter()
            .map(|r| r.iter().map(|s| Expr::parse(s).unwrap()).collect())
            .collect()
    }

    fn field(names: &[&str], comps: &[&str]) -> VectorField {
        VectorField::new(
            vars(names),
            comps.iter().map(|s| Expr::parse(s).unwrap()).collect(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    /// φ = diag(1, u²), a surface-of-revolution style metric.
    fn diag_metric() -> MetricField {
        MetricField::new(
            vars(&["u", "v"]),
            exprs(&[&["1", "0"], &["0", "u^2"]]),
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn rand_metric() -> MetricField {
        MetricField::new(
            vars(&["u", "v"]),
            exprs(&[
                &["1 + 0.2*sin(u)", "0.1*u*v"],
                &["0.1*u*v", "1 + 0.2*v^2"],
            ]),
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn construction_rejects_asymmetry_and_unknowns() {
        let bad = MetricField::new(
            vars(&["u", "v"]),
            exprs(&[&["1", "u"], &["v", "1"]]),
            BTreeMap::new(),
        );
        assert!(matches!(
            bad,
            Err(RiemannError::NotStructurallySymmetric { .. })
        ));

        let bad = MetricField::new(
            vars(&["u"]),
            exprs(&[&["w"]]),
            BTreeMap::new(),
        );
        assert!(matches!(bad, Err(RiemannError::UnknownSymbol { .. })));
    }

    #[test]
    fn euclidean_christoffel_is_exactly_zero() {
        let g = MetricField::euclidean(vars(&["x", "y", "z"])).unwrap();
        let gamma = g.christoffel(&[0.3, -4.0, 2.5]).unwrap();
        assert_eq!(gamma.values.max_abs(), 0.0);
    }

    #[test]
    fn euclidean_detection_is_structural() {
        assert!(MetricField::euclidean(vars(&["x", "y"])).unwrap().is_euclidean());
        let written_out = MetricField::new(
            vars(&["x", "y"]),
            exprs(&[&["2 - 1", "0"], &["0", "1.0"]]),
            BTreeMap::new(),
        )
        .unwrap();
        assert!(written_out.is_euclidean());
        assert!(!diag_metric().is_euclidean());
    }

    #[test]
    fn diag_metric_christoffel_matches_hand_values() {
        let g = diag_metric();
        let gamma = g.christoffel(&[2.0, 5.0]).unwrap().values;
        assert!((gamma.get(0, 1, 1) - (-2.0)).abs() < 1e-14);
        assert!((gamma.get(1, 0, 1) - 0.5).abs() < 1e-14);
        assert!((gamma.get(1, 1, 0) - 0.5).abs() < 1e-14);
        for (i, j, k) in [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 1, 1)] {
            assert_eq!(gamma.get(i, j, k), 0.0, "γ[{i}][{j}][{k}]");
        }
    }

    /// The Levi-Civita formula re-assembled with finite-difference metric
    /// derivatives; independent of the cached symbolic derivative path.
    fn christoffel_fd(g: &MetricField, x: &[f64]) -> Tensor3 {
        let n = g.n();
        let h = 1e-6;
        let (_, inv) = g.metric_matrices(x).unwrap();
        let mut dphi = Tensor3::zeros(n);
        for k in 0..n {
            let mut hi = x.to_vec();
            hi[k] += h;
            let mut lo = x.to_vec();
            lo[k] -= h;
            let (phi_hi, _) = g.metric_matrices(&hi).unwrap();
            let (phi_lo, _) = g.metric_matrices(&lo).unwrap();
            for i in 0..n {
                for j in 0..n {
                    dphi.set(i, j, k, (phi_hi[(i, j)] - phi_lo[(i, j)]) / (2.0 * h));
                }
            }
        }
        let mut out = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut sum = 0.0;
                    for hh in 0..n {
                        sum += inv[(i, hh)]
                            * (dphi.get(hh, j, k) + dphi.get(hh, k, j) - dphi.get(j, k, hh));
                    }
                    out.set(i, j, k, 0.5 * sum);
                }
            }
        }
        out
    }

    #[test]
    fn christoffel_matches_finite_difference_assembly() {
        let g = rand_metric();
        for x in [[0.4, -0.7], [1.1, 0.9], [-0.6, 0.2]] {
            let gamma = g.christoffel(&x).unwrap().values;
            let fd = christoffel_fd(&g, &x);
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        assert!(
                            (gamma.get(i, j, k) - fd.get(i, j, k)).abs() < 1e-6,
                            "γ[{i}][{j}][{k}] {} vs fd {}",
                            gamma.get(i, j, k),
                            fd.get(i, j, k)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_lower_symmetry_is_exact() {
        let g = rand_metric();
        let gamma = g.christoffel(&[0.8, -0.3]).unwrap().values;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert_eq!(gamma.get(i, j, k), gamma.get(i, k, j));
                }
            }
        }
    }

    #[test]
    fn metric_compatibility() {
        // ∂φ_ij/∂x^k − γ^l_ki φ_lj − γ^l_kj φ_il = 0
        let g = rand_metric();
        for x in [[0.5, 0.5], [-0.9, 1.2], [0.05, -1.4]] {
            let (phi, _) = g.metric_matrices(&x).unwrap();
            let dphi = g.metric_derivatives(&x).unwrap();
            let gamma = g.christoffel(&x).unwrap().values;
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let mut r = dphi.get(i, j, k);
                        for l in 0..2 {
                            r -= gamma.get(l, k, i) * phi[(l, j)];
                            r -= gamma.get(l, k, j) * phi[(i, l)];
                        }
                        assert!(r.abs() < 1e-8, "∇φ[{i}][{j}][{k}] = {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn euclidean_covariant_derivative_is_the_jacobian() {
        let g = MetricField::euclidean(vars(&["x", "y"])).unwrap();
        let f = field(&["x", "y"], &["sin(x*y)", "x - y^2"]);
        let x = [0.7, -0.2];
        assert_eq!(
            g.covariant_derivative(&f, &x).unwrap(),
            f.jacobian(&x).unwrap()
        );
    }

    #[test]
    fn covariant_derivative_of_zero_field_is_zero() {
        let g = rand_metric();
        let f = field(&["u", "v"], &["0", "0"]);
        assert_eq!(
            g.covariant_derivative(&f, &[0.4, 0.6]).unwrap().max_abs(),
            0.0
        );
    }

    #[test]
    fn covariant_derivative_matches_fd_assembly() {
        let g = rand_metric();
        let f = field(&["u", "v"], &["u*v", "sin(u) - v"]);
        let x = [0.5, -0.8];
        let d = g.covariant_derivative(&f, &x).unwrap();
        let h = 1e-6;
        let gamma = christoffel_fd(&g, &x);
        let value = f.value(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut hi = x.to_vec();
                hi[j] += h;
                let mut lo = x.to_vec();
                lo[j] -= h;
                let mut expected =
                    (f.value(&hi).unwrap()[i] - f.value(&lo).unwrap()[i]) / (2.0 * h);
                for (k, xk) in value.iter().enumerate() {
                    expected += gamma.get(i, j, k) * xk;
                }
                assert!(
                    (d[(i, j)] - expected).abs() < 1e-6,
                    "D[{i}][{j}] {} vs {expected}",
                    d[(i, j)]
                );
            }
        }
    }

    #[test]
    fn euclidean_deformation_is_twice_the_skew_part() {
        let g = MetricField::euclidean(vars(&["x", "y"])).unwrap();
        let f = field(&["x", "y"], &["x + 2*y", "y"]);
        let x = [0.3, 0.4];
        let d = g.deformation_tensor(&f, &x).unwrap();
        let jac = f.jacobian(&x).unwrap();
        let n_mat = f.nonlinear_connection(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let skew = jac[(i, j)] - jac[(j, i)];
                assert!((d[(i, j)] - skew).abs() < 1e-15);
                assert!((d[(i, j)] + 2.0 * n_mat[(i, j)]).abs() < 1e-15);
            }
        }

        let sym = field(&["x", "y"], &["x", "y"]);
        assert_eq!(g.deformation_tensor(&sym, &x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn deformation_is_phi_antisymmetric() {
        let g = rand_metric();
        let f = field(&["u", "v"], &["atan(u) - 0.2*v", "u*v"]);
        for x in [[0.2, 0.9], [-1.1, 0.4], [0.8, -0.8]] {
            let (phi, _) = g.metric_matrices(&x).unwrap();
            let d = g.deformation_tensor(&f, &x).unwrap();
            let pf = phi.mul_mat(&d);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (pf[(i, j)] + pf[(j, i)]).abs() < 1e-9,
                        "φF not antisymmetric at [{i}][{j}]"
                    );
                }
            }
        }
    }

    #[test]
    fn euclidean_dynamics_reduce_to_jet_prolongation() {
        let g = MetricField::euclidean(vars(&["x", "y"])).unwrap();
        let f = field(&["x", "y"], &["atan(x) - 0.2*y", "x - 0.1*y"]);
        for (x, v) in [
            ([0.5, 1.0], [0.2, -0.4]),
            ([-0.8, 0.3], [1.5, 2.0]),
            ([1.9, -1.2], [0.0, 0.0]),
        ] {
            let a = g.geometric_dynamics_acceleration(&f, &x, &v).unwrap();
            let jet = f.prolonged_acceleration(&x, &v).unwrap();
            for i in 0..2 {
                assert!((a[i] - jet[i]).abs() < 1e-12, "{a:?} vs {jet:?}");
            }
        }
    }

    #[test]
    fn on_shell_acceleration_is_flow_acceleration_for_any_metric() {
        let g = rand_metric();
        let f = field(&["u", "v"], &["atan(u) - 0.2*v", "u - 0.1*v"]);
        for x in [[0.5, 1.0], [-0.4, 0.2]] {
            let value = f.value(&x).unwrap();
            let a = g.geometric_dynamics_acceleration(&f, &x, &value).unwrap();
            let jx = f.jacobian(&x).unwrap().mul_vec(&value);
            for i in 0..2 {
                assert!(
                    (a[i] - jx[i]).abs() < 1e-12,
                    "metric must drop out on-shell: {a:?} vs {jx:?}"
                );
            }
        }
    }

    #[test]
    fn least_squares_lagrangian_properties() {
        let g = rand_metric();
        let f = field(&["u", "v"], &["u*v", "u - v"]);
        let x = [0.6, -0.3];
        let value = f.value(&x).unwrap();
        assert_eq!(g.least_squares_lagrangian(&f, &x, &value).unwrap(), 0.0);

        // Euclidean metric: half of the jet least-squares Lagrangian
        let e = MetricField::euclidean(vars(&["u", "v"])).unwrap();
        let y = [1.4, 0.9];
        let ls = e.least_squares_lagrangian(&f, &x, &y).unwrap();
        let jls = f
            .jls(&JetSample::new(0.0, x.to_vec(), y.to_vec()).unwrap())
            .unwrap();
        assert!((2.0 * ls - jls).abs() < 1e-15);

        // general metric: direct quadratic form
        let (phi, _) = g.metric_matrices(&x).unwrap();
        let w: Vec<f64> = (0..2).map(|i| y[i] - value[i]).collect();
        let mut direct = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                direct += 0.5 * phi[(i, j)] * w[i] * w[j];
            }
        }
        let ls = g.least_squares_lagrangian(&f, &x, &y).unwrap();
        assert!((ls - direct).abs() < 1e-15);
        assert!(ls > 0.0);
    }

    #[test]
    fn product_connection_assembles_from_parts() {
        let g = rand_metric();
        let f = field(&["u", "v"], &["u*v", "u - v"]);
        let x = [0.4, 0.7];
        let y = [1.2, -0.5];
        let n_mat = g.product_connection(&f, &x, &y).unwrap();
        let gamma = g.christoffel(&x).unwrap().values;
        let deformation = g.deformation_tensor(&f, &x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = gamma.get(i, j, 0) * y[0] + gamma.get(i, j, 1) * y[1]
                    - deformation[(i, j)];
                assert!((n_mat[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn indefinite_metric_is_rejected_pointwise() {
        let g = MetricField::new(
            vars(&["u", "v"]),
            exprs(&[&["1", "0"], &["0", "u"]]),
            BTreeMap::new(),
        )
        .unwrap();
        assert!(g.christoffel(&[1.0, 0.0]).is_ok());
        let err = g.christoffel(&[-1.0, 0.0]).unwrap_err();
        match err {
            RiemannError::NotPositiveDefinite { point } => assert_eq!(point, vec![-1.0, 0.0]),
            other => panic!("expected positive-definiteness failure, got {other:?}"),
        }
    }

    #[test]
    fn ill_conditioned_metric_is_rejected() {
        let g = MetricField::new(
            vars(&["u", "v"]),
            exprs(&[&["1", "0"], &["0", "1e-14"]]),
            BTreeMap::new(),
        )
        .unwrap();
        assert!(matches!(
            g.metric_matrices(&[0.0, 0.0]),
            Err(RiemannError::IllConditioned { .. })
        ));
    }

    #[test]
    fn field_metric_coordinate_mismatch_is_an_error() {
        let g = MetricField::euclidean(vars(&["a", "b"])).unwrap();
        let f = field(&["x", "y"], &["x", "y"]);
        assert!(matches!(
            g.covariant_derivative(&f, &[0.0, 0.0]),
            Err(RiemannError::VariableMismatch { .. })
        ));
    }
}
