use crate::config::{self, LoadedModel};
use crate::output;
use crate::{Command, Failure, LevelsetFormat};
use anyhow::anyhow;
use jetgeo::dynamics::{
    integrate_first_order, integrate_second_order, verify_prolongation, CallbackError,
    DynamicsError, IntegratorConfig, Method, Trajectory,
};
use jetgeo::levelset::{extract_contour_2d, extract_isosurface_3d, sample_energy, LevelSetGeometry};
use jetgeo::riemann::RiemannError;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Analyze {
            model,
            point,
            json,
            params,
        } => cmd_analyze(&model, &point, json, &params),
        Command::Flow {
            model,
            from,
            t0,
            t1,
            dt,
            out,
            params,
        } => cmd_flow(&model, &from, t0, t1, dt, &out, &params),
        Command::Geodesic {
            model,
            metric,
            from,
            v0,
            t0,
            t1,
            dt,
            out,
            params,
        } => cmd_geodesic(&model, metric.as_deref(), &from, v0.as_deref(), t0, t1, dt, &out, &params),
        Command::Levelset {
            model,
            level,
            paper_normalization,
            bounds,
            res,
            out,
            format,
            params,
        } => cmd_levelset(
            &model,
            level,
            paper_normalization,
            &bounds,
            &res,
            &out,
            format,
            &params,
        ),
        Command::Check {
            model,
            samples,
            seed,
            tol,
            inject_fault,
            params,
        } => cmd_check(&model, samples, seed, tol, inject_fault.as_deref(), &params),
    }
}

fn load(model_spec: &str, params: &[String]) -> Result<LoadedModel, Failure> {
    let overrides = config::parse_overrides(params)?;
    config::load_model(model_spec, &overrides)
}

fn parse_point(text: &str, n: usize, what: &str) -> Result<Vec<f64>, Failure> {
    let values: Vec<f64> = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Failure::usage(anyhow!("{what}: `{part}` is not a number")))
        })
        .collect::<Result<_, _>>()?;
    if values.len() != n {
        return Err(Failure::usage(anyhow!(
            "{what} holds {} coordinates, the model has {n} variables",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Failure::usage(anyhow!("{what} must be finite")));
    }
    Ok(values)
}

/// Bounds come as "name:lo:hi" per axis, in model variable order.
fn parse_bounds(text: &str, var_names: &[String]) -> Result<Vec<[f64; 2]>, Failure> {
    let axes: Vec<&str> = text.split(',').collect();
    if axes.len() != var_names.len() {
        return Err(Failure::usage(anyhow!(
            "--bounds names {} axes, the model has {}",
            axes.len(),
            var_names.len()
        )));
    }
    let mut bounds = Vec::with_capacity(axes.len());
    for (axis, expected) in axes.iter().zip(var_names) {
        let parts: Vec<&str> = axis.split(':').collect();
        let [name, lo, hi] = parts.as_slice() else {
            return Err(Failure::usage(anyhow!(
                "--bounds axis `{axis}` is not name:lo:hi"
            )));
        };
        if name.trim() != expected {
            return Err(Failure::usage(anyhow!(
                "--bounds axis `{name}` does not match model variable `{expected}` (order must match)"
            )));
        }
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|_| Failure::usage(anyhow!("--bounds {name}: `{lo}` is not a number")))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|_| Failure::usage(anyhow!("--bounds {name}: `{hi}` is not a number")))?;
        bounds.push([lo, hi]);
    }
    Ok(bounds)
}

/// One count for every axis, or a comma-separated per-axis list.
fn parse_resolution(text: &str, dims: usize) -> Result<Vec<usize>, Failure> {
    let counts: Vec<usize> = text
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Failure::usage(anyhow!("--res: `{part}` is not a sample count")))
        })
        .collect::<Result<_, _>>()?;
    match counts.len() {
        1 => Ok(vec![counts[0]; dims]),
        len if len == dims => Ok(counts),
        len => Err(Failure::usage(anyhow!(
            "--res holds {len} counts for {dims} axes"
        ))),
    }
}

fn integrator_config(t0: f64, t1: f64, dt: f64) -> Result<IntegratorConfig, Failure> {
    IntegratorConfig::new(t0, t1, dt, Method::Rk4).map_err(Failure::usage)
}

fn cmd_analyze(model_spec: &str, point: &str, json: bool, params: &[String]) -> Result<(), Failure> {
    let model = load(model_spec, params)?;
    let x = parse_point(point, model.field.n(), "--point")?;
    let report = model.field.report(&x).map_err(Failure::usage)?;
    if json {
        let doc = output::analyze_json(&model.name, model.field.var_names(), &report);
        println!(
            "{}",
            serde_json::to_string_pretty(&doc).expect("report serializes")
        );
    } else {
        print!(
            "{}",
            output::analyze_text(&model.name, model.field.var_names(), &report)
        );
    }
    Ok(())
}

/// Shared CSV emission for flow and geodesic, including the blow-up path:
/// whatever samples exist go to the file, then the error surfaces as exit 3.
fn write_run(
    path: &Path,
    model: &LoadedModel,
    outcome: Result<Trajectory, DynamicsError>,
) -> Result<(), Failure> {
    match outcome {
        Ok(traj) => {
            let residual =
                verify_prolongation(&model.field, &traj).map_err(Failure::blow_up)?;
            output::write_trajectory_csv(path, Some(&traj), model.field.n(), Some(residual))
                .map_err(Failure::usage)?;
            println!(
                "wrote {}: {} samples, max_el_residual={}",
                path.display(),
                traj.len(),
                output::fmt_sig(residual)
            );
            Ok(())
        }
        Err(DynamicsError::BlowUp { time, partial }) => {
            let partial = partial.map(|b| *b);
            let residual =
                partial.as_ref().and_then(|t| verify_prolongation(&model.field, t).ok());
            output::write_trajectory_csv(path, partial.as_ref(), model.field.n(), residual)
                .map_err(Failure::usage)?;
            Err(Failure::blow_up(anyhow!(
                "solution became non-finite at t = {time}; partial trajectory written to {}",
                path.display()
            )))
        }
        Err(DynamicsError::Callback { time, source }) => Err(map_callback(time, source)),
        Err(other) => Err(Failure::usage(other)),
    }
}

/// Domain failures of the metric along the path exit 4; anything else a
/// callback reports mid-integration is a numerical failure, exit 3.
fn map_callback(time: f64, source: CallbackError) -> Failure {
    let domain = matches!(
        source.downcast_ref::<RiemannError>(),
        Some(RiemannError::NotPositiveDefinite { .. }) | Some(RiemannError::IllConditioned { .. })
    );
    let error = anyhow!("at t = {time}: {source}");
    if domain {
        Failure::metric_domain(error)
    } else {
        Failure::blow_up(error)
    }
}

fn cmd_flow(
    model_spec: &str,
    from: &str,
    t0: f64,
    t1: f64,
    dt: f64,
    out: &Path,
    params: &[String],
) -> Result<(), Failure> {
    let model = load(model_spec, params)?;
    let x0 = parse_point(from, model.field.n(), "--from")?;
    let cfg = integrator_config(t0, t1, dt)?;
    write_run(out, &model, integrate_first_order(&model.field, &x0, &cfg))
}

#[allow(clippy::too_many_arguments)]
fn cmd_geodesic(
    model_spec: &str,
    metric_path: Option<&Path>,
    from: &str,
    v0: Option<&str>,
    t0: f64,
    t1: f64,
    dt: f64,
    out: &Path,
    params: &[String],
) -> Result<(), Failure> {
    let model = load(model_spec, params)?;
    let n = model.field.n();
    let x0 = parse_point(from, n, "--from")?;
    let v0 = match v0 {
        Some(text) => parse_point(text, n, "--v0")?,
        None => model.field.value(&x0).map_err(Failure::usage)?,
    };
    let cfg = integrator_config(t0, t1, dt)?;

    // A structurally Euclidean metric takes the jet-prolongation route, the
    // same arithmetic as no metric at all, so the outputs match bitwise.
    let metric = match metric_path {
        Some(path) => {
            let metric = config::load_metric(path, &model)?;
            (!metric.is_euclidean()).then_some(metric)
        }
        None => None,
    };

    let field = &model.field;
    let outcome = match &metric {
        Some(metric) => integrate_second_order(
            |x, v| {
                metric
                    .geometric_dynamics_acceleration(field, x, v)
                    .map_err(|e| Box::new(e) as CallbackError)
            },
            &x0,
            &v0,
            &cfg,
        ),
        None => integrate_second_order(
            |x, v| {
                field
                    .prolonged_acceleration(x, v)
                    .map_err(|e| Box::new(e) as CallbackError)
            },
            &x0,
            &v0,
            &cfg,
        ),
    };
    write_run(out, &model, outcome)
}

#[allow(clippy::too_many_arguments)]
fn cmd_levelset(
    model_spec: &str,
    level: f64,
    paper_normalization: bool,
    bounds: &str,
    res: &str,
    out: &Path,
    format: Option<LevelsetFormat>,
    params: &[String],
) -> Result<(), Failure> {
    let model = load(model_spec, params)?;
    let n = model.field.n();
    if n != 2 && n != 3 {
        return Err(Failure::usage(anyhow!(
            "level sets need a 2- or 3-variable model, this one has {n}"
        )));
    }
    let format = format.unwrap_or(if n == 2 {
        LevelsetFormat::Csv
    } else {
        LevelsetFormat::Obj
    });
    match format {
        LevelsetFormat::Obj if n == 2 => {
            return Err(Failure::usage(anyhow!(
                "obj output needs a 3-variable model"
            )))
        }
        LevelsetFormat::Csv | LevelsetFormat::Svg if n == 3 => {
            return Err(Failure::usage(anyhow!(
                "csv and svg outputs need a 2-variable model"
            )))
        }
        _ => {}
    }

    let bounds = parse_bounds(bounds, model.field.var_names())?;
    let resolution = parse_resolution(res, n)?;
    // The bracket form of the level equation carries a factor of 4: an
    // input of 4C names the energy level C.
    let level = if paper_normalization { level / 4.0 } else { level };

    let grid = sample_energy(&model.field, bounds.clone(), resolution).map_err(Failure::usage)?;
    let masked = grid.mask().iter().filter(|ok| !**ok).count();
    if masked > 0 {
        eprintln!(
            "warning: {masked} of {} samples failed to evaluate and are excluded",
            grid.values().len()
        );
    }

    let set = match n {
        2 => extract_contour_2d(&grid, level),
        _ => extract_isosurface_3d(&grid, level),
    }
    .map_err(Failure::usage)?;

    match (&set.geometry, format) {
        (LevelSetGeometry::Segments(segments), LevelsetFormat::Csv) => {
            output::write_segments_csv(out, segments).map_err(Failure::usage)?;
            println!("wrote {}: {} segments (level = {level})", out.display(), segments.len());
        }
        (LevelSetGeometry::Segments(segments), LevelsetFormat::Svg) => {
            output::write_contour_svg(out, &bounds, model.field.var_names(), segments, level)
                .map_err(Failure::usage)?;
            println!("wrote {}: {} segments (level = {level})", out.display(), segments.len());
        }
        (LevelSetGeometry::Triangles(triangles), _) => {
            output::write_mesh_obj(out, triangles, level).map_err(Failure::usage)?;
            println!(
                "wrote {}: {} triangles (level = {level})",
                out.display(),
                triangles.len()
            );
        }
        _ => unreachable!("format validated against dimension above"),
    }
    Ok(())
}

const CHECK_PROPERTIES: [&str; 6] = [
    "connection-antisymmetry",
    "em-form-negation",
    "torsion-antisymmetry",
    "maxwell-residual",
    "structural-zeros",
    "on-shell-el-residual",
];

struct Measurement {
    worst: f64,
    point: Option<Vec<f64>>,
}

impl Measurement {
    fn new() -> Measurement {
        Measurement {
            worst: 0.0,
            point: None,
        }
    }

    fn observe(&mut self, value: f64, point: &[f64]) {
        if self.point.is_none() || value > self.worst {
            self.worst = value;
            self.point = Some(point.to_vec());
        }
    }
}

fn cmd_check(
    model_spec: &str,
    samples: usize,
    seed: u64,
    tol: f64,
    inject_fault: Option<&str>,
    params: &[String],
) -> Result<(), Failure> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Failure::usage(anyhow!("--tol must be positive, got {tol}")));
    }
    if samples == 0 {
        return Err(Failure::usage(anyhow!("--samples must be at least 1")));
    }
    if let Some(name) = inject_fault {
        if !CHECK_PROPERTIES.contains(&name) {
            return Err(Failure::usage(anyhow!(
                "unknown property `{name}`; expected one of {}",
                CHECK_PROPERTIES.join(", ")
            )));
        }
    }
    let model = load(model_spec, params)?;
    let field = &model.field;
    let n = field.n();
    let ranges = config::sample_ranges(&model);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut measurements: Vec<Measurement> =
        CHECK_PROPERTIES.iter().map(|_| Measurement::new()).collect();
    let mut first_point: Option<Vec<f64>> = None;

    let mut drawn = 0;
    let mut attempts = 0;
    while drawn < samples {
        attempts += 1;
        if attempts > samples.saturating_mul(100) {
            return Err(Failure::usage(anyhow!(
                "could not draw {samples} evaluable points in {attempts} attempts"
            )));
        }
        let x: Vec<f64> = ranges
            .iter()
            .map(|[lo, hi]| rng.random_range(*lo..*hi))
            .collect();
        let Ok(report) = field.report(&x) else {
            continue;
        };
        drawn += 1;
        first_point.get_or_insert_with(|| x.clone());

        let mut antisym = 0.0f64;
        let mut negation = 0.0f64;
        let mut torsion_antisym = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                antisym = antisym
                    .max((report.connection[(i, j)] + report.connection[(j, i)]).abs());
                negation =
                    negation.max((report.em_form[(i, j)] + report.connection[(i, j)]).abs());
                for k in 0..n {
                    torsion_antisym = torsion_antisym
                        .max((report.torsion.get(i, j, k) + report.torsion.get(j, i, k)).abs());
                }
            }
        }
        measurements[0].observe(antisym, &x);
        measurements[1].observe(negation, &x);
        measurements[2].observe(torsion_antisym, &x);
        measurements[3].observe(report.maxwell_residual_max, &x);
    }

    // pointwise-independent: both tensors are identically zero by construction
    let structural =
        field.cartan_connection().max_abs().max(field.curvature().max_abs());
    measurements[4].worst = structural;

    let x0 = first_point.expect("at least one sample was drawn");
    let cfg = IntegratorConfig::new(0.0, 1.0, 0.01, Method::Rk4).map_err(Failure::usage)?;
    match integrate_first_order(field, &x0, &cfg) {
        Ok(traj) => {
            let residual = verify_prolongation(field, &traj).map_err(Failure::blow_up)?;
            measurements[5].observe(residual, &x0);
        }
        Err(DynamicsError::BlowUp { time, .. }) => {
            return Err(Failure::blow_up(anyhow!(
                "on-shell trajectory from {x0:?} became non-finite at t = {time}"
            )))
        }
        Err(other) => return Err(Failure::usage(other)),
    }

    if let Some(name) = inject_fault {
        let index = CHECK_PROPERTIES
            .iter()
            .position(|p| *p == name)
            .expect("validated above");
        measurements[index].worst += 10.0 * tol + 1e-3;
    }

    println!(
        "model: {}, samples: {samples}, seed: {seed}, tol: {tol:e}",
        model.name
    );
    let mut violated: Option<usize> = None;
    for (index, (name, m)) in CHECK_PROPERTIES.iter().zip(&measurements).enumerate() {
        let ok = m.worst <= tol;
        println!(
            "{name:<24} max {:<24} {}",
            output::fmt_sig(m.worst),
            if ok { "ok" } else { "FAIL" }
        );
        if !ok && violated.is_none() {
            violated = Some(index);
        }
    }

    match violated {
        None => {
            println!("check passed: {} properties at tol {tol:e}", CHECK_PROPERTIES.len());
            Ok(())
        }
        Some(index) => {
            let m = &measurements[index];
            let at = match &m.point {
                Some(point) => {
                    let coords: Vec<String> = point.iter().map(|v| output::fmt_sig(*v)).collect();
                    format!(" at point ({})", coords.join(", "))
                }
                None => String::new(),
            };
            Err(Failure::property(anyhow!(
                "property {} violated{at}: measured {} > tol {tol:e}",
                CHECK_PROPERTIES[index],
                output::fmt_sig(m.worst)
            )))
        }
    }
}
