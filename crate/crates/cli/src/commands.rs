//! Command implementations: each is a pure function of the configuration
//! (plus seed), writing its outputs under the chosen directory.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use epcal_core::fem::ElementContext;
use epcal_core::mesh::Mesh;
use epcal_core::model::{Hill, Model, J2};
use epcal_core::objective::{evaluate_objective, synthesize_data, DicData};
use epcal_core::optimizer::{calibrate, GradientMethod, OptRun};
use epcal_core::sensitivity::fd_check;
use epcal_core::solver::{
    solve_forward, validate_trajectory, Counters, InvariantReport, Trajectory,
};
use epcal_core::{Error, Result};

use crate::config::{ExperimentConfig, ModelKind};

pub struct Workspace {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Workspace {
    pub fn new(config_path: &Path, out: &Path, method: Option<GradientMethod>) -> Result<Self> {
        let mut config = ExperimentConfig::from_path(config_path)?;
        if let Some(m) = method {
            config.gradient_method = m;
        }
        std::fs::create_dir_all(out)?;
        Ok(Workspace {
            config,
            out: out.to_path_buf(),
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut f = std::fs::File::create(self.out.join(name))?;
        f.write_all(bytes)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable");
        self.write(name, text.as_bytes())
    }

    /// Every command records the exact configuration it ran with.
    fn write_resolved_config(&self) -> Result<()> {
        self.write("resolved_config.json", self.config.resolved_json().as_bytes())
    }

    fn load_or_synthesize_data(
        &self,
        mesh: &Mesh,
        trajectory_true: &Trajectory,
    ) -> Result<DicData> {
        if let Some(path) = &self.config.data_path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read data file {path}: {e}")))?;
            let data: DicData =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            return Ok(data);
        }
        Ok(synthesize_data(
            mesh,
            trajectory_true,
            self.config.resolved_noise(),
            self.config.noise.seed,
            &self.config.beta_true,
        ))
    }
}

#[derive(Serialize)]
struct MeshSummary {
    nodes: usize,
    elements: usize,
    dofs: usize,
    volume: f64,
    analytic_volume: f64,
    dirichlet_faces: usize,
    traction_y_faces: usize,
    traction_x_faces: usize,
    dic_faces: usize,
    mesh_hash: String,
    config_hash: String,
}

pub fn cmd_mesh(ws: &Workspace) -> Result<()> {
    let mesh = ws.config.build_mesh()?;
    mesh.write_vtk(&ws.out.join("mesh.vtk"), None, None)?;
    let summary = MeshSummary {
        nodes: mesh.n_nodes(),
        elements: mesh.n_elements(),
        dofs: mesh.n_dofs(),
        volume: mesh.elem_volume.iter().sum(),
        analytic_volume: mesh.analytic_volume,
        dirichlet_faces: mesh.dirichlet.len(),
        traction_y_faces: mesh.traction_y.len(),
        traction_x_faces: mesh.traction_x.len(),
        dic_faces: mesh.dic.len(),
        mesh_hash: mesh.content_hash(),
        config_hash: ws.config.content_hash(),
    };
    ws.write_json("mesh.json", &summary)?;
    ws.write_resolved_config()?;
    println!(
        "mesh: {} nodes, {} elements, volume {:.6}",
        summary.nodes, summary.elements, summary.volume
    );
    Ok(())
}

#[derive(Serialize)]
struct StepDiagnostics {
    step: usize,
    h_y: f64,
    h_x: f64,
    newton_iterations: usize,
    residual_norm: f64,
    plastic_elements: usize,
    max_eqps: f64,
}

#[derive(Serialize)]
struct ForwardDiagnostics {
    model: ModelKind,
    steps: Vec<StepDiagnostics>,
    counters: Counters,
    invariants: InvariantReport,
    mesh_hash: String,
    config_hash: String,
}

fn run_forward<M: Model>(
    ws: &Workspace,
    mesh: &Mesh,
    ctxs: &[ElementContext],
) -> Result<(Trajectory, Counters, InvariantReport)> {
    let mut counters = Counters::default();
    let trajectory = solve_forward::<M>(
        mesh,
        ctxs,
        &ws.config.beta_true,
        &ws.config.schedule(),
        &ws.config.tolerances,
        &mut counters,
    )?;
    let invariants = validate_trajectory::<M>(
        mesh,
        ctxs,
        &ws.config.beta_true,
        &trajectory,
        &ws.config.tolerances,
    )?;
    Ok((trajectory, counters, invariants))
}

fn forward_outputs<M: Model>(
    ws: &Workspace,
    mesh: &Mesh,
    trajectory: &Trajectory,
    counters: Counters,
    invariants: InvariantReport,
) -> Result<()> {
    for (n, step) in trajectory.steps.iter().enumerate() {
        let alpha: Vec<f64> = (0..mesh.n_elements())
            .map(|e| trajectory.xi_of(n, e)[M::ALPHA_INDEX])
            .collect();
        mesh.write_vtk(
            &ws.out.join(format!("step_{n:03}.vtk")),
            Some(&step.u),
            Some(&alpha),
        )?;
    }
    let steps = trajectory
        .steps
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, step)| {
            let alpha_max = (0..mesh.n_elements())
                .map(|e| trajectory.xi_of(n, e)[M::ALPHA_INDEX])
                .fold(0.0f64, f64::max);
            StepDiagnostics {
                step: n,
                h_y: step.load.h_y,
                h_x: step.load.h_x,
                newton_iterations: step.newton_iterations,
                residual_norm: step.residual_norm,
                plastic_elements: step
                    .branches
                    .iter()
                    .filter(|b| matches!(b, epcal_core::model::Branch::Plastic))
                    .count(),
                max_eqps: alpha_max,
            }
        })
        .collect();
    let diag = ForwardDiagnostics {
        model: ws.config.model,
        steps,
        counters,
        invariants,
        mesh_hash: mesh.content_hash(),
        config_hash: ws.config.content_hash(),
    };
    ws.write_json("diagnostics.json", &diag)?;
    ws.write_resolved_config()?;
    Ok(())
}

pub fn cmd_forward(ws: &Workspace) -> Result<()> {
    let mesh = ws.config.build_mesh()?;
    let ctxs = ElementContext::build_all(&mesh);
    match ws.config.model {
        ModelKind::J2 => {
            let (t, c, i) = run_forward::<J2>(ws, &mesh, &ctxs)?;
            forward_outputs::<J2>(ws, &mesh, &t, c, i)?;
        }
        ModelKind::Hill => {
            let (t, c, i) = run_forward::<Hill>(ws, &mesh, &ctxs)?;
            forward_outputs::<Hill>(ws, &mesh, &t, c, i)?;
        }
    }
    println!("forward solve complete; fields written to {}", ws.out.display());
    Ok(())
}

pub fn cmd_synth(ws: &Workspace) -> Result<()> {
    let mesh = ws.config.build_mesh()?;
    let ctxs = ElementContext::build_all(&mesh);
    let data = match ws.config.model {
        ModelKind::J2 => {
            let (t, _, _) = run_forward::<J2>(ws, &mesh, &ctxs)?;
            ws.load_or_synthesize_data(&mesh, &t)?
        }
        ModelKind::Hill => {
            let (t, _, _) = run_forward::<Hill>(ws, &mesh, &ctxs)?;
            ws.load_or_synthesize_data(&mesh, &t)?
        }
    };
    ws.write_json("data.json", &data)?;
    ws.write_resolved_config()?;
    println!(
        "synthetic data: {} nodes x {} steps, eps_noise = {:.6e}, seed = {}",
        data.node_ids.len(),
        data.n_steps(),
        data.eps_noise,
        data.seed
    );
    Ok(())
}

#[derive(Serialize)]
struct GradcheckSummary {
    directional_derivative_fs: f64,
    directional_derivative_adjoint: f64,
    rows: usize,
    counters: Counters,
    config_hash: String,
}

fn run_gradcheck<M: Model>(ws: &Workspace) -> Result<()> {
    let mesh = ws.config.build_mesh()?;
    let ctxs = ElementContext::build_all(&mesh);
    let schedule = ws.config.schedule();
    let tol = ws.config.tolerances;
    let mut counters = Counters::default();

    let traj_true = solve_forward::<M>(
        &mesh,
        &ctxs,
        &ws.config.beta_true,
        &schedule,
        &tol,
        &mut counters,
    )?;
    let data = ws.load_or_synthesize_data(&mesh, &traj_true)?;

    let params = ws.config.params();
    let gc = ws.config.gradcheck.clone().unwrap_or_default();
    let direction = vec![gc.direction; M::PARAM_DIM];
    let steps: Vec<f64> = (0..gc.decades).map(|k| 10f64.powi(-(k as i32))).collect();

    let points = fd_check::<M>(
        &mesh, &ctxs, &params, &schedule, &tol, &data, &direction, &steps, &mut counters,
    )?;

    let mut csv = String::from("eps,error_fs,error_adjoint\n");
    for p in &points {
        csv.push_str(&format!("{:e},{:e},{:e}\n", p.eps, p.error_fs, p.error_adjoint));
    }
    ws.write("vcurve.csv", csv.as_bytes())?;

    // the directional derivatives themselves, for scale
    let base = solve_forward::<M>(&mesh, &ctxs, &params.values, &schedule, &tol, &mut counters)?;
    let g_fs = epcal_core::sensitivity::gradient_forward::<M>(
        &mesh, &ctxs, &params, &base, &data, &mut counters,
    )?;
    let g_adj = epcal_core::sensitivity::gradient_adjoint::<M>(
        &mesh, &ctxs, &params, &base, &data, &mut counters,
    )?;
    let dd = |g: &[f64]| -> f64 { g.iter().zip(&direction).map(|(a, b)| a * b).sum() };
    ws.write_json(
        "gradcheck.json",
        &GradcheckSummary {
            directional_derivative_fs: dd(&g_fs),
            directional_derivative_adjoint: dd(&g_adj),
            rows: points.len(),
            counters,
            config_hash: ws.config.content_hash(),
        },
    )?;
    ws.write_resolved_config()?;
    println!("gradient check: {} rows written to vcurve.csv", points.len());
    Ok(())
}

pub fn cmd_gradcheck(ws: &Workspace) -> Result<()> {
    match ws.config.model {
        ModelKind::J2 => run_gradcheck::<J2>(ws),
        ModelKind::Hill => run_gradcheck::<Hill>(ws),
    }
}

#[derive(Serialize)]
struct RecoveredParameter {
    name: String,
    active: bool,
    truth: f64,
    initial: f64,
    recovered: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct CalibrationReport {
    method: GradientMethod,
    objective: f64,
    termination: String,
    iterations: usize,
    parameters: Vec<RecoveredParameter>,
    counters: Counters,
    config_hash: String,
    mesh_hash: String,
}

fn run_calibrate<M: Model>(ws: &Workspace) -> Result<()> {
    let mesh = ws.config.build_mesh()?;
    let ctxs = ElementContext::build_all(&mesh);
    let schedule = ws.config.schedule();
    let tol = ws.config.tolerances;
    let mut counters = Counters::default();

    let traj_true = solve_forward::<M>(
        &mesh,
        &ctxs,
        &ws.config.beta_true,
        &schedule,
        &tol,
        &mut counters,
    )?;
    let data = ws.load_or_synthesize_data(&mesh, &traj_true)?;
    let j_true = evaluate_objective(&mesh, &traj_true, &data)?.total;

    let params = ws.config.params();
    let started = Instant::now();
    let run: OptRun = calibrate::<M>(
        &mesh,
        &ctxs,
        &params,
        &schedule,
        &tol,
        &data,
        ws.config.gradient_method,
        ws.config.fd_rel_step,
        &ws.config.optimizer,
    )?;
    let elapsed = started.elapsed();

    let names = M::param_names();
    let parameters: Vec<RecoveredParameter> = (0..M::PARAM_DIM)
        .map(|i| RecoveredParameter {
            name: names[i].to_string(),
            active: params.active[i],
            truth: ws.config.beta_true[i],
            initial: params.values[i],
            recovered: run.beta[i],
            relative_error: if ws.config.beta_true[i] != 0.0 {
                ((run.beta[i] - ws.config.beta_true[i]) / ws.config.beta_true[i]).abs()
            } else {
                (run.beta[i] - ws.config.beta_true[i]).abs()
            },
        })
        .collect();

    // stdout table; timing is reported here and deliberately kept out of
    // the files so reruns stay byte-identical
    println!("method: {:?}   wall time: {elapsed:.2?}", ws.config.gradient_method);
    println!("objective: {:.6e} (at beta_true: {j_true:.6e})", run.objective);
    println!("{:<6} {:>6} {:>14} {:>14} {:>14} {:>12}", "param", "active", "truth", "initial", "recovered", "rel error");
    for p in &parameters {
        println!(
            "{:<6} {:>6} {:>14.6} {:>14.6} {:>14.8} {:>12.3e}",
            p.name, p.active, p.truth, p.initial, p.recovered, p.relative_error
        );
    }

    let mut csv = String::from("iteration,objective,projected_gradient_norm\n");
    for (k, it) in run.history.iter().enumerate() {
        csv.push_str(&format!("{k},{:e},{:e}\n", it.objective, it.projected_gradient_norm));
    }
    ws.write("history.csv", csv.as_bytes())?;

    let report = CalibrationReport {
        method: ws.config.gradient_method,
        objective: run.objective,
        termination: format!("{:?}", run.termination),
        iterations: run.history.len(),
        parameters,
        counters: run.counters.clone(),
        config_hash: ws.config.content_hash(),
        mesh_hash: mesh.content_hash(),
    };
    ws.write_json("calibration.json", &report)?;
    ws.write_json("optrun.json", &run)?;
    ws.write_resolved_config()?;
    Ok(())
}

pub fn cmd_calibrate(ws: &Workspace) -> Result<()> {
    match ws.config.model {
        ModelKind::J2 => run_calibrate::<J2>(ws),
        ModelKind::Hill => run_calibrate::<Hill>(ws),
    }
}
