use epcal_core::fem::ElementContext;
use epcal_core::mesh::{generate_bar, Notch};
use epcal_core::model::J2;
use epcal_core::objective::{evaluate_objective, synthesize_data};
use epcal_core::solver::{solve_forward, Counters, LoadSchedule, Tolerances};

fn main() {
    let mesh = generate_bar([1.0, 2.0, 0.25], [4, 6, 1], Some(Notch { y0: 0.8, y1: 1.2, depth_fraction: 0.26 })).unwrap();
    let ctxs = ElementContext::build_all(&mesh);
    let schedule = LoadSchedule::uniaxial_ramp(4, 1.0);
    let tol = Tolerances { eps_r: 1e-12, eps_c: 1e-14, ..Default::default() };
    let beta_true = [1000.0, 0.25, 2.0, 100.0, 0.0, 0.0];
    let mut counters = Counters::default();
    let traj = solve_forward::<J2>(&mesh, &ctxs, &beta_true, &schedule, &tol, &mut counters).unwrap();
    let data = synthesize_data(&mesh, &traj, 0.0, 1, &beta_true);

    // J along a fine line in nu: quadratic signal vs noise
    for k in 0..9 {
        let dnu = 1e-9 * 4f64.powi(k); // 1e-9 .. 6.5e-5
        let mut beta = beta_true;
        beta[1] += dnu;
        let t = solve_forward::<J2>(&mesh, &ctxs, &beta, &schedule, &tol, &mut counters).unwrap();
        let j = evaluate_objective(&mesh, &t, &data).unwrap().total;
        println!("dnu = {dnu:9.2e}  J = {j:14.6e}  sqrt(2J) = {:9.2e}", (2.0 * j).sqrt());
    }
}
