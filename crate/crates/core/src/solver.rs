//! The forward problem: nested Newton solves over pseudo-time load steps.
//!
//! Each global Newton iteration re-solves the local constitutive residual
//! in every element from its trial state (so the local state is a function
//! of the current displacement iterate), assembles the consistent tangent
//! from AD-seeded element evaluations, and takes a sparse direct step on the
//! displacement-pressure unknowns. Homogeneous Dirichlet conditions are
//! imposed by row/column elimination with a unit diagonal.
//!
//! The full state trajectory (global vector, local states, branch flags) is
//! retained in memory for the sensitivity passes.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::fem::{deformation_gradient, ElementContext, StepLoad};
use crate::mesh::Mesh;
use crate::model::{Branch, Model};
use crate::sparse::{SparseLu, TripletMatrix};
use crate::ad::Scalar;
use crate::tensor::Mat3;
use crate::{Error, Result};

/// Newton tolerances and iteration caps for the nested solves.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Global residual 2-norm (free dofs), absolute.
    pub eps_r: f64,
    /// Local residual 2-norm, absolute.
    pub eps_c: f64,
    pub max_global_iterations: usize,
    pub max_local_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_r: 1e-10,
            eps_c: 1e-12,
            max_global_iterations: 25,
            max_local_iterations: 50,
        }
    }
}

/// Per-step applied traction magnitudes, one entry per load step.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct LoadSchedule {
    pub h_y: Vec<f64>,
    pub h_x: Vec<f64>,
}

impl LoadSchedule {
    /// Uniaxial schedule `h_y = scale * n` for `n = 1..=steps`.
    pub fn uniaxial_ramp(steps: usize, scale: f64) -> Self {
        LoadSchedule {
            h_y: (1..=steps).map(|n| scale * n as f64).collect(),
            h_x: vec![0.0; steps],
        }
    }

    /// The non-proportional biaxial schedule: pull in y over the first half,
    /// hold y and ramp x over the second.
    pub fn biaxial_non_proportional(steps: usize, scale: f64) -> Self {
        let half = steps / 2;
        let h_y = (1..=steps)
            .map(|n| scale * (n.min(half)) as f64)
            .collect();
        let h_x = (1..=steps)
            .map(|n| if n > half { scale * (n - half) as f64 } else { 0.0 })
            .collect();
        LoadSchedule { h_y, h_x }
    }

    pub fn n_steps(&self) -> usize {
        self.h_y.len()
    }

    pub fn at(&self, step: usize) -> StepLoad {
        StepLoad {
            h_y: self.h_y[step - 1],
            h_x: self.h_x[step - 1],
        }
    }
}

/// Instrumented operation counts, the machine-independent cost evidence the
/// gradient engines are checked against.
#[derive(Default, Clone, Debug, Serialize)]
pub struct Counters {
    /// Completed pseudo-transient forward solves.
    pub nonlinear_solves: u64,
    pub newton_iterations: u64,
    /// Global linear solves inside forward Newton iterations.
    pub newton_linear_solves: u64,
    /// Global factorizations in the forward-sensitivity engine.
    pub sensitivity_factorizations: u64,
    /// Right-hand-side columns solved by the forward-sensitivity engine.
    pub sensitivity_rhs_columns: u64,
    /// Global linear solves in the adjoint engine.
    pub adjoint_linear_solves: u64,
    pub objective_evaluations: u64,
    pub gradient_evaluations: u64,
}

/// Converged state of one load step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub u: Vec<f64>,
    /// Local states, flattened `n_elements x LOCAL_DIM`.
    pub xi: Vec<f64>,
    pub branches: Vec<Branch>,
    pub load: StepLoad,
    pub newton_iterations: usize,
    pub residual_norm: f64,
}

/// The stored forward solution over all load steps; index 0 is the virgin
/// state.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub local_dim: usize,
}

impl Trajectory {
    pub fn n_load_steps(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn xi_of(&self, step: usize, element: usize) -> &[f64] {
        let d = self.local_dim;
        &self.steps[step].xi[element * d..(element + 1) * d]
    }
}

/// Result of one per-element local Newton solve.
#[derive(Clone, Debug)]
pub struct LocalSolution {
    pub xi: Vec<f64>,
    pub branch: Branch,
    pub iterations: usize,
    /// Residual norm after each evaluation, for convergence diagnostics.
    pub history: Vec<f64>,
    /// `dC/dxi` at the converged state (identity on the elastic branch).
    pub jacobian: DMatrix<f64>,
}

fn element_f(ctx: &ElementContext, u_e: &[f64], element: usize) -> Result<Mat3<f64>> {
    let f = deformation_gradient(ctx, u_e);
    let det = f.det();
    if det <= 0.0 {
        return Err(Error::ElementInversion { element, det });
    }
    Ok(f)
}

/// Solves the local constitutive residual for one element at fixed global
/// state. The branch is fixed by the trial yield check on entry and never
/// switched mid-iteration.
pub fn solve_local<M: Model>(
    beta: &[f64],
    ctx: &ElementContext,
    u_e: &[f64],
    u_prev_e: &[f64],
    xi_prev: &[f64],
    tol: &Tolerances,
) -> Result<LocalSolution> {
    let f_n = element_f(ctx, u_e, ctx.element)?;
    let f_prev = element_f(ctx, u_prev_e, ctx.element)?;

    let (xi_trial, f_trial) = M::trial_state(beta, &f_n, &f_prev, xi_prev);

    if f_trial <= 0.0 {
        // the elastic residual is linear in the local state with identity
        // Jacobian: the trial assignment is the one exact Newton step
        let c = M::local_residual(beta, &f_n, &f_prev, &xi_trial, xi_prev, Branch::Elastic);
        let norm = l2(&c);
        debug_assert!(norm <= tol.eps_c);
        return Ok(LocalSolution {
            xi: xi_trial,
            branch: Branch::Elastic,
            iterations: 1,
            history: vec![norm],
            jacobian: DMatrix::identity(M::LOCAL_DIM, M::LOCAL_DIM),
        });
    }

    // the kinematic state is fixed over the Newton iterations; compute it
    // once in plain arithmetic and lift it as constants
    let kin = M::kinematic_state(&f_n, &f_prev, xi_prev);
    let kin_d = crate::tensor::Sym3 {
        c: kin.c.map(crate::ad::Dual::constant),
    };
    let beta_d: Vec<crate::ad::Dual> = beta.iter().map(|&b| crate::ad::Dual::constant(b)).collect();
    let xi_prev_d: Vec<crate::ad::Dual> =
        xi_prev.iter().map(|&v| crate::ad::Dual::constant(v)).collect();

    let mut xi = xi_trial;
    let mut history = Vec::new();
    for iteration in 0..tol.max_local_iterations {
        let xi_d: Vec<crate::ad::Dual> = xi
            .iter()
            .enumerate()
            .map(|(k, &v)| crate::ad::Dual::seed_unit(v, k, M::LOCAL_DIM))
            .collect();
        let c = M::local_residual_at(&beta_d, &kin_d, &xi_d, &xi_prev_d, Branch::Plastic);
        let c_vals: Vec<f64> = c.iter().map(|ci| ci.scalar()).collect();
        let jac = DMatrix::from_fn(M::LOCAL_DIM, M::LOCAL_DIM, |i, j| c[i].deriv(j));
        let norm = l2(&c_vals);
        history.push(norm);
        if norm <= tol.eps_c {
            return Ok(LocalSolution {
                xi,
                branch: Branch::Plastic,
                iterations: iteration,
                history,
                jacobian: jac,
            });
        }
        let rhs = nalgebra::DVector::from_iterator(c_vals.len(), c_vals.iter().map(|v| -v));
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularLocalJacobian {
                element: ctx.element,
            })?;
        for k in 0..xi.len() {
            xi[k] += delta[k];
        }
    }
    Err(Error::LocalNonConvergence {
        element: ctx.element,
        iterations: tol.max_local_iterations,
        residual: *history.last().unwrap_or(&f64::NAN),
    })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-element output of one assembly pass.
pub struct ElementSystem {
    pub xi: Vec<f64>,
    pub branch: Branch,
    pub local_iterations: usize,
    pub residual: Vec<f64>,
    pub tangent: DMatrix<f64>,
}

/// Consistent element tangent at an already-solved local state: solves the
/// local sensitivity system for `dxi/dU` and reads the total derivative off
/// one seeded evaluation of the equilibrium residual.
pub fn element_tangent_at<M: Model>(
    beta: &[f64],
    ctx: &ElementContext,
    u_e: &[f64],
    u_prev_e: &[f64],
    xi_prev: &[f64],
    local: &LocalSolution,
    load: StepLoad,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let c_u = crate::fem::local_residual_du::<M>(
        beta, ctx, u_e, u_prev_e, &local.xi, xi_prev, local.branch,
    );
    let dxi_du = local
        .jacobian
        .clone()
        .lu()
        .solve(&(-c_u))
        .ok_or(Error::SingularLocalJacobian {
            element: ctx.element,
        })?;
    Ok(crate::fem::element_tangent::<M>(
        beta, ctx, u_e, &local.xi, &dxi_du, load,
    ))
}

/// Local solve plus consistent element tangent, the per-element body of the
/// global Newton loop.
pub fn element_system<M: Model>(
    beta: &[f64],
    ctx: &ElementContext,
    u_e: &[f64],
    u_prev_e: &[f64],
    xi_prev: &[f64],
    load: StepLoad,
    tol: &Tolerances,
) -> Result<ElementSystem> {
    let local = solve_local::<M>(beta, ctx, u_e, u_prev_e, xi_prev, tol)?;
    let (residual, tangent) =
        element_tangent_at::<M>(beta, ctx, u_e, u_prev_e, xi_prev, &local, load)?;
    Ok(ElementSystem {
        xi: local.xi,
        branch: local.branch,
        local_iterations: local.iterations,
        residual,
        tangent,
    })
}

/// Solves the forward problem over all load steps, retaining the full
/// trajectory.
pub fn solve_forward<M: Model>(
    mesh: &Mesh,
    ctxs: &[ElementContext],
    beta: &[f64],
    schedule: &LoadSchedule,
    tol: &Tolerances,
    counters: &mut Counters,
) -> Result<Trajectory> {
    let n_dofs = mesh.n_dofs();
    let n_el = mesh.n_elements();
    let fixed = mesh.fixed_dofs();
    let mut fixed_mask = vec![false; n_dofs];
    for &d in &fixed {
        fixed_mask[d] = true;
    }

    let virgin = M::virgin_state();
    let mut steps = vec![StepRecord {
        u: vec![0.0; n_dofs],
        xi: virgin.iter().cycle().take(n_el * M::LOCAL_DIM).cloned().collect(),
        branches: vec![Branch::Elastic; n_el],
        load: StepLoad::default(),
        newton_iterations: 0,
        residual_norm: 0.0,
    }];

    for n in 1..=schedule.n_steps() {
        let load = schedule.at(n);
        let prev = steps.last().unwrap();
        let u_prev = prev.u.clone();
        let xi_prev_flat = prev.xi.clone();
        let mut u = u_prev.clone();

        let mut converged = None;
        for iteration in 0..=tol.max_global_iterations {
            // residual pass: local solves plus a plain evaluation of the
            // equilibrium residual in every element
            let mut residual = vec![0.0; n_dofs];
            let mut locals = Vec::with_capacity(n_el);
            for e in 0..n_el {
                let u_e = mesh.gather(&u, e);
                let u_prev_e = mesh.gather(&u_prev, e);
                let xi_prev = &xi_prev_flat[e * M::LOCAL_DIM..(e + 1) * M::LOCAL_DIM];
                let local = solve_local::<M>(beta, &ctxs[e], &u_e, &u_prev_e, xi_prev, tol)?;
                let r_e = crate::fem::element_residual::<M, f64>(
                    beta, &ctxs[e], &u_e, &local.xi, load,
                );
                let dofs = mesh.element_dofs(e);
                for (l, &gi) in dofs.iter().enumerate() {
                    if !fixed_mask[gi] {
                        residual[gi] += r_e[l];
                    }
                }
                locals.push(local);
            }

            let norm = l2(&residual);
            if norm <= tol.eps_r {
                let mut xi_flat = vec![0.0; n_el * M::LOCAL_DIM];
                let mut branches = vec![Branch::Elastic; n_el];
                for (e, local) in locals.iter().enumerate() {
                    xi_flat[e * M::LOCAL_DIM..(e + 1) * M::LOCAL_DIM].copy_from_slice(&local.xi);
                    branches[e] = local.branch;
                }
                converged = Some(StepRecord {
                    u: u.clone(),
                    xi: xi_flat,
                    branches,
                    load,
                    newton_iterations: iteration,
                    residual_norm: norm,
                });
                break;
            }
            if iteration == tol.max_global_iterations {
                return Err(Error::GlobalNonConvergence {
                    step: n,
                    iterations: iteration,
                    residual: norm,
                });
            }

            // tangent pass over the stored local solutions
            let mut matrix = TripletMatrix::new(n_dofs);
            for (e, local) in locals.iter().enumerate() {
                let u_e = mesh.gather(&u, e);
                let u_prev_e = mesh.gather(&u_prev, e);
                let xi_prev = &xi_prev_flat[e * M::LOCAL_DIM..(e + 1) * M::LOCAL_DIM];
                let (_, k_e) = element_tangent_at::<M>(
                    beta, &ctxs[e], &u_e, &u_prev_e, xi_prev, local, load,
                )?;
                let dofs = mesh.element_dofs(e);
                for (l, &gi) in dofs.iter().enumerate() {
                    if !fixed_mask[gi] {
                        for (m, &gj) in dofs.iter().enumerate() {
                            if !fixed_mask[gj] {
                                matrix.push(gi, gj, k_e[(l, m)]);
                            }
                        }
                    }
                }
            }

            for &d in &fixed {
                matrix.push(d, d, 1.0);
            }
            let lu = SparseLu::factor(&matrix)?;
            let mut rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
            lu.solve_in_place(&mut rhs);
            for i in 0..n_dofs {
                u[i] += rhs[i];
            }
            counters.newton_iterations += 1;
            counters.newton_linear_solves += 1;
        }

        steps.push(converged.expect("loop either converges or errors"));
    }

    counters.nonlinear_solves += 1;
    Ok(Trajectory {
        steps,
        local_dim: M::LOCAL_DIM,
    })
}

/// Constitutive invariants of a converged trajectory: worst violations over
/// all elements and steps.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct InvariantReport {
    /// `max(f_trial, 0)` over elastic-branch records.
    pub trial_violation: f64,
    /// Yield-consistency residual magnitude over plastic records.
    pub consistency: f64,
    /// `|det(b_e) - 1|` over all records (hyperelastic model only).
    pub isochoric: f64,
    /// `|tr(d_p)|` over plastic records (hypoelastic model only).
    pub plastic_rate_trace: f64,
    /// Most negative equivalent-plastic-strain increment.
    pub alpha_decrease: f64,
    pub kkt_satisfied: bool,
}

/// Re-evaluates the discrete KKT conditions and model invariants at every
/// stored element/step from the recorded branch flags.
pub fn validate_trajectory<M: Model>(
    mesh: &Mesh,
    ctxs: &[ElementContext],
    beta: &[f64],
    trajectory: &Trajectory,
    tol: &Tolerances,
) -> Result<InvariantReport> {
    let mut report = InvariantReport {
        kkt_satisfied: true,
        ..Default::default()
    };
    let kkt_trial_tol = 1e-10;
    let kkt_consistency_tol = 10.0 * tol.eps_c;

    for n in 1..trajectory.steps.len() {
        let step = &trajectory.steps[n];
        let prev = &trajectory.steps[n - 1];
        for e in 0..mesh.n_elements() {
            let u_e = mesh.gather(&step.u, e);
            let u_prev_e = mesh.gather(&prev.u, e);
            let f_n = element_f(&ctxs[e], &u_e, e)?;
            let f_prev = element_f(&ctxs[e], &u_prev_e, e)?;
            let xi_n = trajectory.xi_of(n, e);
            let xi_prev = trajectory.xi_of(n - 1, e);
            let d_alpha = xi_n[M::ALPHA_INDEX] - xi_prev[M::ALPHA_INDEX];
            report.alpha_decrease = report.alpha_decrease.min(d_alpha);

            let (_, f_trial) = M::trial_state(beta, &f_n, &f_prev, xi_prev);
            match step.branches[e] {
                Branch::Elastic => {
                    report.trial_violation = report.trial_violation.max(f_trial);
                    if f_trial > kkt_trial_tol || d_alpha.abs() > 1e-10 {
                        report.kkt_satisfied = false;
                    }
                }
                Branch::Plastic => {
                    let c = M::local_residual(
                        beta,
                        &f_n,
                        &f_prev,
                        &xi_n.to_vec(),
                        &xi_prev.to_vec(),
                        Branch::Plastic,
                    );
                    let consistency = c[M::LOCAL_DIM - 1].abs();
                    report.consistency = report.consistency.max(consistency);
                    if d_alpha <= 0.0 || consistency > kkt_consistency_tol {
                        report.kkt_satisfied = false;
                    }
                }
            }

            let (isochoric, trace) = M::extra_invariants(beta, xi_n, step.branches[e]);
            report.isochoric = report.isochoric.max(isochoric);
            if step.branches[e] == Branch::Plastic {
                report.plastic_rate_trace = report.plastic_rate_trace.max(trace * d_alpha.abs());
            }
        }
    }
    Ok(report)
}
