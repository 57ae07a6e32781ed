use epcal_core::fem::ElementContext;
use epcal_core::mesh::{generate_bar, Notch};
use epcal_core::model::J2;
use epcal_core::solver::{solve_forward, Counters, LoadSchedule, Tolerances};
use std::time::Instant;

fn main() {
    let mesh = generate_bar([1.0, 2.0, 0.25], [4, 6, 1], Some(Notch { y0: 0.8, y1: 1.2, depth_fraction: 0.26 })).unwrap();
    let ctxs = ElementContext::build_all(&mesh);
    let schedule = LoadSchedule::uniaxial_ramp(4, 1.0);
    let tol = Tolerances::default();
    let beta = [1000.0, 0.25, 2.0, 100.0, 0.0, 0.0];
    let t0 = Instant::now();
    let mut counters = Counters::default();
    for _ in 0..10 {
        let _ = solve_forward::<J2>(&mesh, &ctxs, &beta, &schedule, &tol, &mut counters).unwrap();
    }
    println!("10 forward solves: {:?} ({} newton iterations)", t0.elapsed(), counters.newton_iterations);
}
