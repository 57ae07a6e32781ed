use epcal_core::fem::ElementContext;
use epcal_core::mesh::{generate_bar, Notch};
use epcal_core::model::{J2, ParamSet};
use epcal_core::objective::synthesize_data;
use epcal_core::optimizer::{calibrate, GradientMethod, MinimizeConfig};
use epcal_core::solver::{solve_forward, Counters, LoadSchedule, Tolerances};
use std::time::Instant;

fn main() {
    let mesh = generate_bar([1.0, 2.0, 0.25], [4, 6, 1], Some(Notch { y0: 0.8, y1: 1.2, depth_fraction: 0.26 })).unwrap();
    println!("mesh: {} elements, {} dofs", mesh.n_elements(), mesh.n_dofs());
    let ctxs = ElementContext::build_all(&mesh);
    let schedule = LoadSchedule::uniaxial_ramp(4, 1.0);
    let tol = Tolerances::default();
    let beta_true = [1000.0, 0.25, 2.0, 100.0, 0.0, 0.0];
    let mut counters = Counters::default();
    let t0 = Instant::now();
    let traj = solve_forward::<J2>(&mesh, &ctxs, &beta_true, &schedule, &tol, &mut counters).unwrap();
    println!("forward solve: {:?}; plastic elements at last step: {}", t0.elapsed(),
        traj.steps.last().unwrap().branches.iter().filter(|b| matches!(b, epcal_core::model::Branch::Plastic)).count());
    let data = synthesize_data(&mesh, &traj, 0.0, 1, &beta_true);

    let params = ParamSet::new(
        vec![1020.0, 0.28, 2.3, 110.0, 0.0, 0.0],
        vec![true, true, true, true, false, false],
        vec![900.0, 0.2, 0.0, 90.0, 0.0, 0.0],
        vec![1200.0, 0.4, 10.0, 150.0, 0.0, 0.0],
    );
    for method in [GradientMethod::Adjoint, GradientMethod::Fs, GradientMethod::Fd] {
        let t0 = Instant::now();
        let fd_step = (method == GradientMethod::Fd).then_some(1e-10);
        let run_tol = if method == GradientMethod::Fd {
            Tolerances { eps_r: 1e-12, eps_c: 1e-14, ..tol }
        } else {
            tol
        };
        let run = calibrate::<J2>(&mesh, &ctxs, &params, &schedule, &run_tol, &data, method, fd_step, &MinimizeConfig::default()).unwrap();
        let errs: Vec<f64> = (0..4).map(|i| ((run.beta[i] - beta_true[i]) / beta_true[i]).abs()).collect();
        println!("{method:?}: {:?} iters={} J={:.3e} term={:?}", t0.elapsed(), run.history.len(), run.objective, run.termination);
        println!("   beta = {:?}", &run.beta[0..4]);
        println!("   rel errs = {:?}", errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>());
        println!("   counters: {:?}", run.counters);
    }
}
