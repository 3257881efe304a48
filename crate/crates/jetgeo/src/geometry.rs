//! Differential-geometric objects attached to a first-order autonomous ODE
//! system ẋ = X(x) viewed through its 1-jet lift (t, x, ẋ).
//!
//! Everything derives from the symbolic Jacobian J(X) = (∂X^i/∂x^j):
//!
//! * the nonlinear connection N = −½(J − Jᵀ), antisymmetric by construction;
//! * its torsion coefficients ∂N_ij/∂x^k;
//! * the field-strength matrix F = −N, whose cyclic derivative sum
//!   ∂F_ij/∂x^k + ∂F_jk/∂x^i + ∂F_ki/∂x^j vanishes identically for C² fields
//!   (equality of mixed partials), mirroring the source-free Maxwell
//!   identity;
//! * the energy ½·Tr(F·Fᵀ), a pointwise measure of Jacobian antisymmetry;
//! * the least-squares Lagrangian Σᵢ(ẋ^i − X^i(x))², whose minimizers are
//!   exactly the field lines, and its Euler–Lagrange prolongation to a
//!   second-order system.
//!
//! The associated linear (Cartan-type) connection and its curvature vanish
//! identically in these coordinates; [`VectorField::cartan_connection`] and
//! [`VectorField::curvature`] exist so reports can state that explicitly.
//!
//! A [`VectorField`] caches the simplified symbolic entries of J, N, and
//! ∂N/∂x at construction; per-point operations only evaluate those cached
//! trees, so sweeping a grid with many threads is cheap and safe.

use crate::dynamics::Trajectory;
use crate::expr::{Env, EvalError, Expr};
use crate::linalg::{SquareMatrix, Tensor3};
use std::collections::BTreeMap;

/// A point of the 1-jet space: time, state, velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct JetSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub x1: Vec<f64>,
}

impl JetSample {
    /// `x` and `x1` must have equal lengths.
    pub fn new(t: f64, x: Vec<f64>, x1: Vec<f64>) -> Result<JetSample, GeometryError> {
        if x.len() != x1.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: x.len(),
                got: x1.len(),
            });
        }
        Ok(JetSample { t, x, x1 })
    }
}

/// Every pointwise geometric object, bundled for serialization.
///
/// `em_form` is the exact entrywise negation of `connection`; both are
/// exactly antisymmetric. `torsion[i][j][k]` is antisymmetric in (i, j) for
/// every k. The Cartan-type connection and curvature are identically zero
/// and therefore not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub point: Vec<f64>,
    pub jacobian: SquareMatrix,
    pub connection: SquareMatrix,
    pub em_form: SquareMatrix,
    pub torsion: Tensor3,
    pub yang_mills: f64,
    pub maxwell_residual_max: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("a vector field needs at least one component")]
    Empty,
    #[error("{vars} variable names for {components} components")]
    ComponentCount { vars: usize, components: usize },
    #[error("invalid variable name `{0}`")]
    InvalidVarName(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateVarName(String),
    #[error("`{0}` is declared both as a variable and as a parameter")]
    NameClash(String),
    #[error("component {index} uses `{name}`, which is neither a variable nor a parameter")]
    UnknownSymbol { index: usize, name: String },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input coordinate")]
    NonFiniteInput,
    #[error("evaluating {context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// An autonomous vector field X over named coordinates, with fixed parameter
/// bindings and eagerly cached symbolic derivatives.
#[derive(Debug, Clone)]
pub struct VectorField {
    var_names: Vec<String>,
    components: Vec<Expr>,
    params: BTreeMap<String, f64>,
    base_env: Env,
    // cached symbolic entries; connection and torsion are stored for i < j
    // only (zero placeholders elsewhere) and mirrored numerically, which
    // keeps antisymmetry exact rather than approximate
    jac_exprs: Vec<Vec<Expr>>,
    conn_exprs: Vec<Vec<Expr>>,
    torsion_exprs: Vec<Vec<Vec<Expr>>>,
}

impl VectorField {
    /// Validates names and free variables, then differentiates and caches
    /// the Jacobian, connection, and torsion entries.
    pub fn new(
        var_names: Vec<String>,
        components: Vec<Expr>,
        params: BTreeMap<String, f64>,
    ) -> Result<VectorField, GeometryError> {
        if components.is_empty() {
            return Err(GeometryError::Empty);
        }
        if var_names.len() != components.len() {
            return Err(GeometryError::ComponentCount {
                vars: var_names.len(),
                components: components.len(),
            });
        }
        for name in &var_names {
            if !is_identifier(name) {
                return Err(GeometryError::InvalidVarName(name.clone()));
            }
            if var_names.iter().filter(|v| *v == name).count() > 1 {
                return Err(GeometryError::DuplicateVarName(name.clone()));
            }
            if params.contains_key(name) {
                return Err(GeometryError::NameClash(name.clone()));
            }
        }
        for (index, comp) in components.iter().enumerate() {
            for free in comp.free_variables() {
                if !var_names.contains(&free) && !params.contains_key(&free) {
                    return Err(GeometryError::UnknownSymbol { index, name: free });
                }
            }
        }

        let n = var_names.len();
        let jac_exprs: Vec<Vec<Expr>> = components
            .iter()
            .map(|c| {
                var_names
                    .iter()
                    .map(|v| c.differentiate(v).simplify())
                    .collect()
            })
            .collect();

        let zero = Expr::constant(0.0);
        let mut conn_exprs = vec![vec![zero.clone(); n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let skew = jac_exprs[i][j].clone() - jac_exprs[j][i].clone();
                conn_exprs[i][j] = (Expr::constant(-0.5) * skew).simplify();
            }
        }

        let mut torsion_exprs = vec![vec![vec![zero; n]; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                for (k, v) in var_names.iter().enumerate() {
                    torsion_exprs[i][j][k] = conn_exprs[i][j].differentiate(v);
                }
            }
        }

        let base_env: Env = params.iter().map(|(k, v)| (k.clone(), *v)).collect();

        Ok(VectorField {
            var_names,
            components,
            params,
            base_env,
            jac_exprs,
            conn_exprs,
            torsion_exprs,
        })
    }

    pub fn n(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    fn check_point(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.n() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFiniteInput);
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

    fn eval_in(&self, e: &Expr, env: &Env, context: &str) -> Result<f64, GeometryError> {
        e.eval(env).map_err(|source| GeometryError::Eval {
            context: context.to_string(),
            source,
        })
    }

    /// X(x).
    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_point(x)?;
        let env = self.env_at(x);
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| self.eval_in(c, &env, &format!("component {i}")))
            .collect()
    }

    /// J(x), entry [i][j] = ∂X^i/∂x^j.
    pub fn jacobian(&self, x: &[f64]) -> Result<SquareMatrix, GeometryError> {
        self.check_point(x)?;
        let env = self.env_at(x);
        let n = self.n();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] =
                    self.eval_in(&self.jac_exprs[i][j], &env, &format!("jacobian [{i}][{j}]"))?;
            }
        }
        Ok(out)
    }

    /// N(x) = −½(J − Jᵀ). The upper triangle is evaluated and the lower
    /// triangle mirrored, so N + Nᵀ = 0 holds exactly.
    pub fn nonlinear_connection(&self, x: &[f64]) -> Result<SquareMatrix, GeometryError> {
        self.check_point(x)?;
        let env = self.env_at(x);
        let n = self.n();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v =
                    self.eval_in(&self.conn_exprs[i][j], &env, &format!("connection [{i}][{j}]"))?;
                out[(i, j)] = v;
                out[(j, i)] = -v;
            }
        }
        Ok(out)
    }

    /// The adapted linear connection vanishes identically in these
    /// coordinates; returned as an explicit zero tensor so callers can
    /// state the fact rather than assume it.
    pub fn cartan_connection(&self) -> Tensor3 {
        Tensor3::zeros(self.n())
    }

    /// Curvature of the (vanishing) linear connection: identically zero.
    pub fn curvature(&self) -> Tensor3 {
        Tensor3::zeros(self.n())
    }

    /// Entry [i][j][k] = ∂N_ij/∂x^k, from the cached symbolic connection.
    /// Antisymmetric in (i, j) exactly, by the same mirroring as N.
    pub fn torsion(&self, x: &[f64]) -> Result<Tensor3, GeometryError> {
        self.check_point(x)?;
        let env = self.env_at(x);
        let n = self.n();
        let mut out = Tensor3::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..n {
                    let v = self.eval_in(
                        &self.torsion_exprs[i][j][k],
                        &env,
                        &format!("torsion [{i}][{j}][{k}]"),
                    )?;
                    out.set(i, j, k, v);
                    out.set(j, i, k, -v);
                }
            }
        }
        Ok(out)
    }

    /// F(x) = −N(x), the field-strength matrix.
    pub fn em_form(&self, x: &[f64]) -> Result<SquareMatrix, GeometryError> {
        Ok(self.nonlinear_connection(x)?.negate())
    }

    /// Entry [i][j][k] = ∂F_ij/∂x^k + ∂F_jk/∂x^i + ∂F_ki/∂x^j.
    ///
    /// Analytically zero for C² fields: with F = −N each term is a
    /// difference of second partials of the components, and the cyclic sum
    /// pairs every X^i_{,jk} with X^i_{,kj}. What remains after symbolic
    /// differentiation and numeric evaluation is floating-point noise.
    pub fn maxwell_residual(&self, x: &[f64]) -> Result<Tensor3, GeometryError> {
        let t = self.torsion(x)?;
        let n = self.n();
        let mut out = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    // ∂F/∂x = −∂N/∂x, so the cyclic sum negates the torsion
                    out.set(i, j, k, -(t.get(i, j, k) + t.get(j, k, i) + t.get(k, i, j)));
                }
            }
        }
        Ok(out)
    }

    /// ½·Tr(F·Fᵀ) = ½·Σ F_ij² ≥ 0; zero exactly where J is symmetric.
    pub fn yang_mills_energy(&self, x: &[f64]) -> Result<f64, GeometryError> {
        let n_mat = self.nonlinear_connection(x)?;
        // F = −N entrywise, so the squares agree
        Ok(0.5 * n_mat.as_slice().iter().map(|v| v * v).sum::<f64>())
    }

    /// Least-squares Lagrangian Σᵢ (x1^i − X^i(x))²; zero exactly on-shell.
    pub fn jls(&self, sample: &JetSample) -> Result<f64, GeometryError> {
        self.check_point(&sample.x)?;
        if sample.x1.len() != self.n() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.n(),
                got: sample.x1.len(),
            });
        }
        let value = self.value(&sample.x)?;
        Ok(sample
            .x1
            .iter()
            .zip(&value)
            .map(|(v, xv)| (v - xv) * (v - xv))
            .sum())
    }

    /// Trapezoidal quadrature of [`Self::jls`] along a trajectory; the
    /// action functional whose minimizers are the field lines.
    pub fn action(&self, traj: &Trajectory) -> Result<f64, GeometryError> {
        if traj.dim() != self.n() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.n(),
                got: traj.dim(),
            });
        }
        let mut total = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for j in 0..traj.len() {
            let sample = JetSample {
                t: traj.time(j),
                x: traj.state(j).to_vec(),
                x1: traj.velocity(j).to_vec(),
            };
            let value = self.jls(&sample)?;
            if let Some((t_prev, v_prev)) = prev {
                total += (sample.t - t_prev) * 0.5 * (v_prev + value);
            }
            prev = Some((sample.t, value));
        }
        Ok(total)
    }

    /// Euler–Lagrange residual of the least-squares Lagrangian, divided
    /// by 2, at a second-order jet point (x, v, a).
    ///
    /// Derivation, with L(x, ẋ) = Σᵢ (ẋ^i − X^i(x))²:
    ///
    /// ```text
    ///   ∂L/∂ẋ^i          = 2 (ẋ^i − X^i)
    ///   d/dt (∂L/∂ẋ^i)   = 2 (ẍ^i − Σⱼ J_ij ẋ^j)
    ///   ∂L/∂x^i          = −2 Σⱼ (ẋ^j − X^j) J_ji
    ///   EL_i = d/dt(∂L/∂ẋ^i) − ∂L/∂x^i
    ///        = 2 [ ẍ − J ẋ + Jᵀ(ẋ − X) ]_i
    ///        = 2 [ ẍ − (J − Jᵀ) ẋ − Jᵀ X ]_i
    /// ```
    ///
    /// This function returns EL/2 = a − (J − Jᵀ)v − JᵀX, so that the
    /// on-shell identity reads a = J·X with no stray factor. Substituting
    /// v = X(x), a = J·X collapses the bracket to zero, hence the residual
    /// vanishes along C² solutions of ẋ = X(x).
    pub fn el_residual(&self, x: &[f64], v: &[f64], a: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_point(x)?;
        for arr in [v, a] {
            if arr.len() != self.n() {
                return Err(GeometryError::DimensionMismatch {
                    expected: self.n(),
                    got: arr.len(),
                });
            }
        }
        let jac = self.jacobian(x)?;
        let value = self.value(x)?;
        let n = self.n();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = a[i];
            for j in 0..n {
                r -= (jac[(i, j)] - jac[(j, i)]) * v[j];
                r -= jac[(j, i)] * value[j];
            }
            out.push(r);
        }
        Ok(out)
    }

    /// The acceleration solving `el_residual = 0`: (J − Jᵀ)v + JᵀX.
    /// On-shell (v = X) this is J·X, the time derivative of X along the
    /// flow.
    pub fn prolonged_acceleration(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_point(x)?;
        if v.len() != self.n() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.n(),
                got: v.len(),
            });
        }
        let jac = self.jacobian(x)?;
        let value = self.value(x)?;
        let n = self.n();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut a = 0.0;
            for j in 0..n {
                a += (jac[(i, j)] - jac[(j, i)]) * v[j];
                a += jac[(j, i)] * value[j];
            }
            out.push(a);
        }
        Ok(out)
    }

    /// Every pointwise object at once.
    pub fn report(&self, x: &[f64]) -> Result<GeometryReport, GeometryError> {
        let jacobian = self.jacobian(x)?;
        let connection = self.nonlinear_connection(x)?;
        let em_form = connection.negate();
        let torsion = self.torsion(x)?;
        let yang_mills = self.yang_mills_energy(x)?;
        let maxwell_residual_max = self.maxwell_residual(x)?.max_abs();
        Ok(GeometryReport {
            point: x.to_vec(),
            jacobian,
            connection,
            em_form,
            torsion,
            yang_mills,
            maxwell_residual_max,
        })
    }
}
