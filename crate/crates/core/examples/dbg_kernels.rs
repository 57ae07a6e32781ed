use epcal_core::ad::Dual;
use epcal_core::fem::{deformation_gradient, element_residual, ElementContext, StepLoad};
use epcal_core::mesh::generate_bar;
use epcal_core::model::{Branch, Model, J2};
use epcal_core::tensor::Sym3;
use std::time::Instant;

fn main() {
    let mesh = generate_bar([1.0, 2.0, 0.5], [1, 2, 1], None).unwrap();
    let ctx = ElementContext::build(&mesh, 0);
    let beta = [1000.0, 0.25, 2.0, 100.0, 0.0, 0.0];
    let tet = mesh.tets[0];
    let mut u = [0.0f64; 16];
    for (a, &node) in tet.iter().enumerate() {
        u[4 * a + 1] = 0.01 * mesh.coords[node][1];
        u[4 * a + 3] = -1.0;
    }
    let u_prev = [0.0f64; 16];
    let xi_prev = J2::virgin_state();
    let f_n = deformation_gradient(&ctx, &u);
    let f_prev = deformation_gradient(&ctx, &u_prev);
    let (xi, _) = J2::trial_state(&beta.to_vec(), &f_n, &f_prev, &xi_prev);
    let n = 100000;

    // dim-8 residual_at eval with lifted constants
    let kin = J2::kinematic_state(&f_n, &f_prev, &xi_prev);
    let kin_d = Sym3 { c: kin.c.map(Dual::constant) };
    let beta_d: Vec<Dual> = beta.iter().map(|&b| Dual::constant(b)).collect();
    let xi_prev_d: Vec<Dual> = xi_prev.iter().map(|&v| Dual::constant(v)).collect();
    let t0 = Instant::now();
    for _ in 0..n {
        let xi_d: Vec<Dual> = xi.iter().enumerate().map(|(k, &v)| Dual::seed_unit(v, k, 8)).collect();
        let c = J2::local_residual_at(&beta_d, &kin_d, &xi_d, &xi_prev_d, Branch::Plastic);
        std::hint::black_box(&c);
    }
    println!("local_residual_at dim-8 (cached kin): {:?}/eval", t0.elapsed() / n);

    // dim-16 full local residual (u seeded)
    let t0 = Instant::now();
    for _ in 0..n {
        let u_d: Vec<Dual> = u.iter().enumerate().map(|(k, &v)| Dual::seed_unit(v, k, 16)).collect();
        let f_n_d = deformation_gradient(&ctx, &u_d);
        let f_prev_d = epcal_core::tensor::Mat3::map_f64(&f_prev);
        let xi_d: Vec<Dual> = xi.iter().map(|&v| Dual::constant(v)).collect();
        let c = J2::local_residual(&beta_d, &f_n_d, &f_prev_d, &xi_d, &xi_prev_d, Branch::Plastic);
        std::hint::black_box(&c);
    }
    println!("local_residual dim-16 (u seeded, full path): {:?}/eval", t0.elapsed() / n);

    // dim-16 global residual eval
    let t0 = Instant::now();
    for _ in 0..n {
        let u_d: Vec<Dual> = u.iter().enumerate().map(|(k, &v)| Dual::seed_unit(v, k, 16)).collect();
        let xi_d: Vec<Dual> = xi.iter().map(|&v| Dual::constant(v)).collect();
        let r = element_residual::<J2, Dual>(&beta_d, &ctx, &u_d, &xi_d, StepLoad::default());
        std::hint::black_box(&r);
    }
    println!("element_residual dim-16: {:?}/eval", t0.elapsed() / n);

    // f64 element residual
    let t0 = Instant::now();
    for _ in 0..n {
        let r = element_residual::<J2, f64>(&beta.to_vec(), &ctx, &u, &xi, StepLoad::default());
        std::hint::black_box(&r);
    }
    println!("element_residual f64: {:?}/eval", t0.elapsed() / n);
}
