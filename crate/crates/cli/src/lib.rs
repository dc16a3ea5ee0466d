//! Configuration-driven pipeline runner and result serializer.

pub mod config;
pub mod output;

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde_json::json;

use schur_dd::geometry::Point;
use schur_dd::oracle::{compare_far_fields, global_bie_solve, mie_far_field, FarFieldSamples};
use schur_dd::rtr::{point_source_robin, BoxBoundary, Coupling};
use schur_dd::solve::{DdSolver, IncidentField, SolveOutput};
use schur_dd::{merge, rtr, BoxGrid};

use config::RunConfig;
use output::{far_field_csv, interfaces_csv, near_field_grid, probes_csv, OutputDir};

/// What a finished run reports back.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub far_field_files: Vec<String>,
    pub oracle_errors: Vec<f64>,
    pub content_hash: String,
}

/// Configures the rayon pool and the dense kernels.
pub fn set_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build_global()
        .context("configuring the thread pool")?;
    schur_dd::linalg::set_threads(threads);
    Ok(())
}

/// Runs the pipeline and writes every artifact into `out`. On error, the
/// files written so far are removed.
pub fn run(cfg: &RunConfig, out: &Path, seed_override: Option<u64>, force_oracle: bool) -> Result<RunSummary> {
    let mut dir = OutputDir::create(out)?;
    match run_inner(cfg, &mut dir, seed_override, force_oracle) {
        Ok(s) => Ok(s),
        Err(e) => {
            dir.remove_written();
            Err(e)
        }
    }
}

fn run_inner(cfg: &RunConfig, dir: &mut OutputDir, seed_override: Option<u64>, force_oracle: bool) -> Result<RunSummary> {
    let grid = cfg.build_grid(seed_override).context("stage geometry")?;
    let coupling = cfg.coupling().context("stage geometry")?;
    let solver = DdSolver::build(&grid, coupling, cfg.discretization, cfg.condition_bounds)
        .context("stage offline/elimination")?;
    let angles = cfg.far_field_angles();
    let oracle_on = force_oracle || cfg.oracle.enabled;

    let mut far_field_files = Vec::new();
    let mut solution_times = Vec::new();
    let mut route = Vec::new();
    let mut residuals = Vec::new();
    let mut nan_points = Vec::new();
    let mut oracle_errors = Vec::new();
    let mut oracle_times = Vec::new();
    let mut first: Option<SolveOutput> = None;
    for (i, &alpha) in cfg.incident_angles.iter().enumerate() {
        let field = IncidentField::plane(cfg.wavenumber, alpha).context("stage solution")?;
        let t = Instant::now();
        let sol = solver.solve(&field).with_context(|| format!("stage solution (incidence {i})"))?;
        let ff = solver
            .far_field_pattern(&sol, &angles)
            .with_context(|| format!("stage solution (incidence {i})"))?;
        solution_times.push(t.elapsed().as_secs_f64());
        route.push(sol.route_discrepancy);
        residuals.push(sol.outer_residual);
        let name = format!("farfield_{i}.csv");
        dir.write(&name, &far_field_csv(&ff))?;
        far_field_files.push(name);

        if let Some(w) = &cfg.outputs.near_field {
            let pts = output::window_points(w);
            let pv = solver
                .eval_total_field(&sol, &pts, 1)
                .with_context(|| format!("stage near field (incidence {i})"))?;
            dir.write(&format!("nearfield_{i}.grid"), &near_field_grid(w, &pv.values))?;
            nan_points.push(json!({ "incidence": i, "points": pv.near }));
        }
        if !cfg.outputs.probes.is_empty() {
            let pv = solver
                .eval_total_field(&sol, &cfg.outputs.probes, 1)
                .with_context(|| format!("stage probes (incidence {i})"))?;
            dir.write(&format!("probes_{i}.csv"), &probes_csv(&cfg.outputs.probes, &pv.values))?;
        }
        if oracle_on {
            let t = Instant::now();
            let bie = global_bie_solve(
                &grid,
                cfg.wavenumber,
                alpha,
                cfg.oracle.nodes_per_scatterer,
                angles.len(),
                cfg.oracle.budget,
            )
            .with_context(|| format!("stage oracle (incidence {i})"))?;
            oracle_times.push(t.elapsed().as_secs_f64());
            oracle_errors.push(compare_far_fields(&ff, &bie.far_field)?);
            dir.write(&format!("oracle_farfield_{i}.csv"), &far_field_csv(&bie.far_field))?;
        }
        if i == 0 {
            first = Some(sol);
        }
    }
    if let Some(sol) = &first {
        dir.write("interfaces.csv", &interfaces_csv(&sol.interfaces))?;
    }
    let content_hash = dir.content_hash();

    let merges: Vec<_> = solver
        .tree
        .stats
        .iter()
        .map(|s| {
            json!({
                "interface": output::segment_name(s.interface),
                "interface_nodes": s.interface_nodes,
                "merged_dim": s.merged_dim,
                "condition": s.condition,
            })
        })
        .collect();
    let leaf_unknowns: Vec<usize> = (0..grid.num_boxes())
        .map(|b| {
            solver.leaf_meshes[b].len()
                + grid.scatterers[b].len() * cfg.discretization.n_per_scatterer
        })
        .collect();
    let mut echo = cfg.clone();
    if let (Some(s), config::ScattererSpec::Random { seed, .. }) = (seed_override, &mut echo.scatterers) {
        *seed = s;
    }
    let meta = json!({
        "schema_version": config::SCHEMA_VERSION,
        "config": echo,
        "sizes": {
            "boxes": grid.num_boxes(),
            "scatterers": grid.total_scatterers(),
            "scatterer_unknowns": grid.total_scatterers() * cfg.discretization.n_per_scatterer,
            "outer_nodes": solver.outer_mesh.len(),
            "leaf_unknowns": leaf_unknowns,
            "incidences": cfg.incident_angles.len(),
        },
        "timings": {
            "offline": solver.timings.offline,
            "elimination": solver.timings.elimination,
            "solution": solution_times,
            "oracle": oracle_times,
        },
        "stages": {
            "offline_runs": 1,
            "outer_factorizations": solver.factorization_count(),
        },
        "conditioning": {
            "leaf": solver.tree.leaves.iter().map(|l| l.condition).collect::<Vec<_>>(),
            "merges": merges,
            "max_merge": solver.tree.max_condition(),
            "exterior": solver.exterior_condition,
            "reduced": solver.reduced_condition,
        },
        "consistency": {
            "route_discrepancy": route,
            "outer_residual": residuals,
        },
        "near_field_nan": nan_points,
        "oracle": if oracle_on {
            json!({ "nodes_per_scatterer": cfg.oracle.nodes_per_scatterer, "far_field_error": oracle_errors })
        } else {
            serde_json::Value::Null
        },
        "rcs_normalization": "10*log10(2*pi*|u_inf|^2), floor -200 dB",
        "content_hash": content_hash,
    });
    dir.write("meta.json", &serde_json::to_string_pretty(&meta)?)?;
    Ok(RunSummary {
        far_field_files,
        oracle_errors,
        content_hash,
    })
}

/// Mie series against the global solver on one circle, at `nodes` and
/// `2 · nodes`.
pub fn mie_check(k: f64, radius: f64, nodes: usize, out: Option<&Path>) -> Result<serde_json::Value> {
    let center = Point::new(0.0, 0.0);
    let size = 4.0 * radius;
    let mut grid = BoxGrid::new(Point::new(-0.5 * size, -0.5 * size), size, size, 1, 1)?;
    grid.scatterers[0].push(schur_dd::Scatterer::circle(center, radius)?);
    let m = 256;
    let n_terms = (k * radius + 30.0).ceil() as usize;
    let mie = mie_far_field(radius, center, k, 0.0, n_terms, m)?;
    let coarse = global_bie_solve(&grid, k, 0.0, nodes, m, usize::MAX)?;
    let fine = global_bie_solve(&grid, k, 0.0, 2 * nodes, m, usize::MAX)?;
    let e1 = compare_far_fields(&coarse.far_field, &mie)?;
    let e2 = compare_far_fields(&fine.far_field, &mie)?;
    if let Some(out) = out {
        let mut dir = OutputDir::create(out)?;
        dir.write("mie_farfield.csv", &far_field_csv(&mie))?;
        dir.write("bie_farfield.csv", &far_field_csv(&coarse.far_field))?;
    }
    Ok(json!({
        "k": k, "radius": radius, "nodes": nodes,
        "error": e1, "error_doubled": e2, "reduction": e1 / e2,
    }))
}

/// Point-source reproduction by the merged map of a grid of empty boxes.
pub fn merge_check(cols: usize, rows: usize, k: f64, n_per_edge: usize) -> Result<serde_json::Value> {
    let grid = BoxGrid::new(Point::new(0.0, 0.0), 1.0, 1.0, cols, rows)?;
    let c = Coupling::defaults(k)?;
    let leaves = (0..grid.num_boxes())
        .map(|b| {
            let bb = BoxBoundary::leaf(&grid.box_rect(b), b, n_per_edge, 4)?;
            rtr::rtr_interior_subdomain(rtr::assemble_subdomain_system(&bb, &[], &c)?)
        })
        .collect::<schur_dd::Result<Vec<_>>>()?;
    let tree = merge::hierarchical_merge(&grid, leaves, merge::DEFAULT_CONDITION_BOUND)?;
    let map = &tree.root_map;
    let source = Point::new(-1.0, 0.5 * rows as f64);
    let (gm, gp) = point_source_robin(&map.nodes, &map.normals, k, map.eta, source)?;
    let got = map.apply(&gm)?;
    let err = schur_dd::linalg::max_abs_diff(&got, &gp) / schur_dd::linalg::max_abs(&gp);
    Ok(json!({
        "cols": cols, "rows": rows, "k": k, "n_per_edge": n_per_edge,
        "point_source_error": err,
        "merges": tree.internal_count(),
        "max_condition": tree.max_condition(),
    }))
}

/// Runs the DD solver and the oracle on the same configuration.
pub fn oracle_compare(cfg: &RunConfig, out: &Path, seed_override: Option<u64>) -> Result<RunSummary> {
    let s = run(cfg, out, seed_override, true)?;
    if s.oracle_errors.is_empty() {
        bail!("oracle produced no comparison");
    }
    Ok(s)
}

pub fn far_field_samples_csv(s: &FarFieldSamples) -> String {
    far_field_csv(s)
}
