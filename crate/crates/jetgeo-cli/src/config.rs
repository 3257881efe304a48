//! Model and metric documents: JSON files with name/variables/parameters,
//! an ordered `definitions` macro table, per-variable `equations`, and (for
//! metric files) an n-by-n `metric` expression array.

use crate::Failure;
use anyhow::{anyhow, Context};
use indexmap::IndexMap;
use jetgeo::expr::Expr;
use jetgeo::models::{self, KaldorParams, TbmParams};
use jetgeo::riemann::MetricField;
use jetgeo::VectorField;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    name: String,
    variables: Vec<String>,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
    #[serde(default)]
    definitions: IndexMap<String, String>,
    #[serde(default)]
    equations: Vec<String>,
    #[serde(default)]
    metric: Option<Vec<Vec<String>>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Kaldor,
    Tbm,
    Custom,
}

pub struct LoadedModel {
    pub name: String,
    pub field: VectorField,
    pub kind: ModelKind,
}

/// Sample box the check suite draws points from: the documented fixture
/// ranges for the builtins, a unit-scale box otherwise.
pub fn sample_ranges(model: &LoadedModel) -> Vec<[f64; 2]> {
    match model.kind {
        ModelKind::Kaldor => vec![[-2.0, 2.0], [-2.0, 2.0]],
        ModelKind::Tbm => vec![[-2.0, 2.0], [0.1, 3.0], [-2.0, 2.0]],
        ModelKind::Custom => vec![[-2.0, 2.0]; model.field.n()],
    }
}

pub fn parse_overrides(pairs: &[String]) -> Result<Vec<(String, f64)>, Failure> {
    pairs
        .iter()
        .map(|pair| {
            let (name, value) = pair
                .split_once('=')
                .ok_or_else(|| Failure::usage(anyhow!("--param wants NAME=VALUE, got `{pair}`")))?;
            let value: f64 = value.parse().map_err(|_| {
                Failure::usage(anyhow!("--param {name}: `{value}` is not a number"))
            })?;
            Ok((name.to_string(), value))
        })
        .collect()
}

pub fn load_model(spec: &str, overrides: &[(String, f64)]) -> Result<LoadedModel, Failure> {
    match spec {
        "kaldor" => {
            let mut s = 2.0;
            let mut q = 0.1;
            for (name, value) in overrides {
                match name.as_str() {
                    "s" => s = *value,
                    "q" => q = *value,
                    other => {
                        return Err(Failure::usage(anyhow!(
                            "kaldor has parameters s and q, not `{other}`"
                        )))
                    }
                }
            }
            let fixture = KaldorParams::fixture();
            let params =
                KaldorParams::new(s, q, fixture.investment().clone(), fixture.saving().clone())
                    .map_err(Failure::usage)?;
            Ok(LoadedModel {
                name: "kaldor".to_string(),
                field: models::kaldor_field(&params),
                kind: ModelKind::Kaldor,
            })
        }
        "tbm" => {
            let fixture = TbmParams::fixture();
            let mut rates = [
                ("s", fixture.s()),
                ("theta", fixture.theta()),
                ("n", fixture.n()),
                ("mu", fixture.mu()),
                ("epsilon", fixture.epsilon()),
            ];
            for (name, value) in overrides {
                match rates.iter_mut().find(|(key, _)| key == name) {
                    Some(slot) => slot.1 = *value,
                    None => {
                        return Err(Failure::usage(anyhow!(
                            "tbm has parameters s, theta, n, mu, epsilon, not `{name}`"
                        )))
                    }
                }
            }
            let [s, theta, n, mu, epsilon] = rates.map(|(_, v)| v);
            let params = TbmParams::new(
                s,
                theta,
                n,
                mu,
                epsilon,
                fixture.production().clone(),
                fixture.money_demand().clone(),
            )
            .map_err(Failure::usage)?;
            Ok(LoadedModel {
                name: "tbm".to_string(),
                field: models::tbm_field(&params),
                kind: ModelKind::Tbm,
            })
        }
        path => load_model_file(Path::new(path), overrides),
    }
}

fn read_document(path: &Path) -> Result<Document, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::usage)?;
    let doc: Document = serde_json::from_str(&text)
        .with_context(|| format!("{}: schema error", path.display()))
        .map_err(Failure::usage)?;
    Ok(doc)
}

fn load_model_file(path: &Path, overrides: &[(String, f64)]) -> Result<LoadedModel, Failure> {
    let mut doc = read_document(path)?;
    if doc.equations.len() != doc.variables.len() {
        return Err(Failure::usage(anyhow!(
            "{}: field `equations` holds {} entries for {} variables",
            path.display(),
            doc.equations.len(),
            doc.variables.len()
        )));
    }
    for (name, value) in overrides {
        match doc.parameters.get_mut(name) {
            Some(slot) => *slot = *value,
            None => {
                return Err(Failure::usage(anyhow!(
                    "{}: no parameter named `{name}` to override",
                    path.display()
                )))
            }
        }
    }

    let definitions = expand_definitions(&doc)?;
    let components = doc
        .equations
        .iter()
        .enumerate()
        .map(|(index, text)| {
            let expr = Expr::parse(text).map_err(|e| {
                Failure::usage(anyhow!("equation {} `{text}`: {e}", index + 1))
            })?;
            Ok(apply_definitions(expr, &definitions))
        })
        .collect::<Result<Vec<Expr>, Failure>>()?;

    let field = VectorField::new(doc.variables, components, doc.parameters)
        .with_context(|| format!("{}: invalid model", path.display()))
        .map_err(Failure::usage)?;
    Ok(LoadedModel {
        name: doc.name,
        field,
        kind: ModelKind::Custom,
    })
}

/// Expand the macro table in declaration order. Each entry may reference
/// variables, parameters, and entries declared above it; a reference to
/// itself or to a later entry is a cycle.
fn expand_definitions(doc: &Document) -> Result<Vec<(String, Expr)>, Failure> {
    let mut expanded: Vec<(String, Expr)> = Vec::with_capacity(doc.definitions.len());
    for (name, text) in &doc.definitions {
        if doc.variables.contains(name) || doc.parameters.contains_key(name) {
            return Err(Failure::usage(anyhow!(
                "definition `{name}` shadows a variable or parameter"
            )));
        }
        let expr = Expr::parse(text)
            .map_err(|e| Failure::usage(anyhow!("definition {name} = `{text}`: {e}")))?;
        let expr = apply_definitions(expr, &expanded);
        for free in expr.free_variables() {
            if free == *name || doc.definitions.contains_key(&free) {
                return Err(Failure::usage(anyhow!(
                    "cyclic definitions: `{name}` references `{free}`, which is not declared above it"
                )));
            }
            if !doc.variables.contains(&free) && !doc.parameters.contains_key(&free) {
                return Err(Failure::usage(anyhow!(
                    "definition `{name}` references unknown symbol `{free}`"
                )));
            }
        }
        expanded.push((name.clone(), expr));
    }
    Ok(expanded)
}

fn apply_definitions(expr: Expr, definitions: &[(String, Expr)]) -> Expr {
    definitions
        .iter()
        .fold(expr, |acc, (name, replacement)| acc.substitute(name, replacement))
}

/// A metric document reuses the model shape and adds an n-by-n `metric`
/// array; its variables must name the model's coordinates in order.
pub fn load_metric(path: &Path, model: &LoadedModel) -> Result<MetricField, Failure> {
    let doc = read_document(path)?;
    let Some(rows) = &doc.metric else {
        return Err(Failure::usage(anyhow!(
            "{}: missing field `metric` (n-by-n expression array)",
            path.display()
        )));
    };
    if doc.variables != model.field.var_names() {
        return Err(Failure::usage(anyhow!(
            "{}: metric variables {:?} do not match model variables {:?}",
            path.display(),
            doc.variables,
            model.field.var_names()
        )));
    }
    let n = doc.variables.len();
    if rows.len() != n || rows.iter().any(|row| row.len() != n) {
        return Err(Failure::usage(anyhow!(
            "{}: field `metric` must be a {n}-by-{n} array",
            path.display()
        )));
    }

    let definitions = expand_definitions(&doc)?;
    let mut entries = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        let mut out = Vec::with_capacity(n);
        for (j, text) in row.iter().enumerate() {
            let expr = Expr::parse(text).map_err(|e| {
                Failure::usage(anyhow!("metric[{i}][{j}] = `{text}`: {e}"))
            })?;
            out.push(apply_definitions(expr, &definitions));
        }
        entries.push(out);
    }

    MetricField::new(doc.variables, entries, doc.parameters)
        .with_context(|| format!("{}: invalid metric", path.display()))
        .map_err(Failure::usage)
}
