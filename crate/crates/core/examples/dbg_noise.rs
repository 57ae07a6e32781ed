use epcal_core::fem::ElementContext;
use epcal_core::mesh::{generate_bar, Notch};
use epcal_core::model::{J2, ParamSet};
use epcal_core::objective::{noise_floor, synthesize_data};
use epcal_core::optimizer::{calibrate, GradientMethod, MinimizeConfig};
use epcal_core::solver::{solve_forward, Counters, LoadSchedule, Tolerances};

fn main() {
    let mesh = generate_bar([1.0, 2.0, 0.25], [10, 14, 1], Some(Notch { y0: 0.8, y1: 1.2, depth_fraction: 0.21 })).unwrap();
    eprintln!("mesh: {} elements, dic nodes {}", mesh.n_elements(), mesh.dic_nodes().len());
    let ctxs = ElementContext::build_all(&mesh);
    let schedule = LoadSchedule::uniaxial_ramp(4, 1.0);
    let tol = Tolerances::default();
    let beta_true = [1000.0, 0.25, 2.0, 100.0, 0.0, 0.0];
    let mut counters = Counters::default();
    let traj = solve_forward::<J2>(&mesh, &ctxs, &beta_true, &schedule, &tol, &mut counters).unwrap();
    let params = ParamSet::new(
        vec![1020.0, 0.28, 2.3, 110.0, 0.0, 0.0],
        vec![true, true, true, true, false, false],
        vec![900.0, 0.2, 0.0, 90.0, 0.0, 0.0],
        vec![1200.0, 0.4, 10.0, 150.0, 0.0, 0.0],
    );
    for eps in [noise_floor(2.0), 1e-3] {
        let data = synthesize_data(&mesh, &traj, eps, 42, &beta_true);
        let run = calibrate::<J2>(&mesh, &ctxs, &params, &schedule, &tol, &data, GradientMethod::Adjoint, None, &MinimizeConfig::default()).unwrap();
        let errs: Vec<String> = (0..4).map(|i| format!("{:.3e}", ((run.beta[i] - beta_true[i]) / beta_true[i]).abs())).collect();
        eprintln!("eps {eps:.2e}: errors [E, nu, Y, K] = {errs:?} term={:?} iters={}", run.termination, run.history.len());
    }
}
