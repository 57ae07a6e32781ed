use epcal_core::fem::ElementContext;
use epcal_core::mesh::generate_cruciform;
use epcal_core::model::{Branch, Hill, Model, ParamSet};
use epcal_core::objective::{noise_floor, synthesize_data};
use epcal_core::optimizer::{calibrate, GradientMethod, MinimizeConfig};
use epcal_core::solver::{solve_forward, validate_trajectory, Counters, LoadSchedule, Tolerances};
use std::time::Instant;

fn main() {
    let mesh = generate_cruciform(1.5, 4.5, 0.12, (6, 1)).unwrap();
    eprintln!("mesh: {} elements, {} dofs", mesh.n_elements(), mesh.n_dofs());
    let ctxs = ElementContext::build_all(&mesh);
    let schedule = LoadSchedule::biaxial_non_proportional(12, 0.5);
    eprintln!("h_y = {:?}", schedule.h_y);
    eprintln!("h_x = {:?}", schedule.h_x);
    let tol = Tolerances::default();
    let beta_true = [1000.0, 0.25, 2.0, 100.0, 1.0, 0.9, 1.05, 1.0, 1.0, 0.85];

    let t0 = Instant::now();
    let mut counters = Counters::default();
    let traj = match solve_forward::<Hill>(&mesh, &ctxs, &beta_true, &schedule, &tol, &mut counters) {
        Ok(t) => t,
        Err(e) => { eprintln!("forward failed: {e}"); return; }
    };
    let plastic = traj.steps.last().unwrap().branches.iter().filter(|b| matches!(b, Branch::Plastic)).count();
    let max_alpha = (0..mesh.n_elements()).map(|e| traj.xi_of(12, e)[Hill::ALPHA_INDEX]).fold(0.0f64, f64::max);
    eprintln!("forward: {:?}; plastic elements {plastic}/{}; max alpha {max_alpha:.4}", t0.elapsed(), mesh.n_elements());
    let report = validate_trajectory::<Hill>(&mesh, &ctxs, &beta_true, &traj, &tol).unwrap();
    eprintln!("invariants: {report:?}");

    let eps = noise_floor(9.0);
    eprintln!("noise floor: {eps:.4e}");
    let data = synthesize_data(&mesh, &traj, eps, 11, &beta_true);

    let params = ParamSet::new(
        vec![1020.0, 0.28, 2.3, 110.0, 1.0, 0.95, 0.95, 1.0, 1.0, 0.95],
        vec![true, true, true, true, false, true, true, false, false, true],
        vec![900.0, 0.2, 0.5, 50.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        vec![1200.0, 0.4, 10.0, 200.0, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5],
    );
    let t0 = Instant::now();
    let run = calibrate::<Hill>(&mesh, &ctxs, &params, &schedule, &tol, &data, GradientMethod::Adjoint, None, &MinimizeConfig::default()).unwrap();
    eprintln!("adjoint calibration: {:?} iters={} J={:.3e} term={:?}", t0.elapsed(), run.history.len(), run.objective, run.termination);
    let names = Hill::param_names();
    for i in [0, 1, 2, 3, 5, 6, 9] {
        let err = ((run.beta[i] - beta_true[i]) / beta_true[i]).abs();
        eprintln!("  {:4} = {:10.5}  (rel err {:.3e})", names[i], run.beta[i], err);
    }
    eprintln!("counters: {:?}", run.counters);
}
