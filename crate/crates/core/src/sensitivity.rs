//! The three gradient engines: finite differences, forward sensitivities,
//! and adjoint sensitivities.
//!
//! The finite-difference engine re-solves the forward problem once per
//! active parameter. The forward-sensitivity engine propagates the state
//! sensitivity matrices through the load steps, eliminating the local blocks
//! with a Schur complement so each step costs one global factorization
//! applied to one right-hand side per active parameter. The adjoint engine
//! runs backwards in time with history vectors and costs exactly one global
//! linear solve per load step, independent of the parameter count.
//!
//! Every matrix block entering these systems comes from seeding one group
//! of arguments of the residual implementations and reading the derivative
//! arrays off a single evaluation. Branch flags recorded by the forward
//! solve select the residual form; nothing is re-derived from the state.

use nalgebra::{DMatrix, DVector};

use crate::ad::Dual;
use crate::fem::{deformation_gradient, element_residual, ElementContext, StepLoad};
use crate::mesh::{Mesh, ELEM_DOFS};
use crate::model::{Branch, Model, ParamSet};
use crate::objective::{evaluate_objective, objective_gradient_u, DicData};
use crate::sparse::{SparseLu, TripletMatrix};
use crate::solver::{solve_forward, Counters, LoadSchedule, Tolerances, Trajectory};
use crate::tensor::Mat3;
use crate::Result;

fn consts(values: &[f64]) -> Vec<Dual> {
    values.iter().map(|&v| Dual::constant(v)).collect()
}

fn unit_seeded(values: &[f64]) -> Vec<Dual> {
    let dim = values.len();
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| Dual::seed_unit(v, k, dim))
        .collect()
}

/// One seeded evaluation of the element equilibrium residual; returns the
/// derivative block with the requested number of columns.
struct SeededElement<'a> {
    beta: Vec<Dual>,
    ctx: &'a ElementContext,
    u: Vec<Dual>,
    xi: Vec<Dual>,
    load: StepLoad,
}

impl<'a> SeededElement<'a> {
    fn eval_r<M: Model>(&self, cols: usize) -> DMatrix<f64> {
        let r = element_residual::<M, Dual>(&self.beta, self.ctx, &self.u, &self.xi, self.load);
        DMatrix::from_fn(ELEM_DOFS, cols, |i, j| r[i].deriv(j))
    }
}

/// One seeded evaluation of the local constitutive residual.
struct SeededLocal {
    beta: Vec<Dual>,
    f_n: Mat3<Dual>,
    f_prev: Mat3<Dual>,
    xi_n: Vec<Dual>,
    xi_prev: Vec<Dual>,
    branch: Branch,
}

impl SeededLocal {
    fn eval_c<M: Model>(&self, cols: usize) -> DMatrix<f64> {
        let c = M::local_residual(
            &self.beta,
            &self.f_n,
            &self.f_prev,
            &self.xi_n,
            &self.xi_prev,
            self.branch,
        );
        DMatrix::from_fn(M::LOCAL_DIM, cols, |i, j| c[i].deriv(j))
    }
}

/// All element-level derivative blocks a sensitivity pass can need. Each is
/// produced by its own seed-and-evaluate call, mirroring the per-line
/// structure of the gradient algorithms.
struct ElementBlocks<'a, M: Model> {
    beta_values: &'a [f64],
    params: &'a ParamSet,
    ctx: &'a ElementContext,
    u_e: [f64; ELEM_DOFS],
    u_prev_e: [f64; ELEM_DOFS],
    xi_n: &'a [f64],
    xi_prev: &'a [f64],
    branch: Branch,
    load: StepLoad,
    _model: std::marker::PhantomData<M>,
}

impl<'a, M: Model> ElementBlocks<'a, M> {
    /// `dR/dU` (16 x 16), seeding the current element dofs.
    fn a(&self) -> DMatrix<f64> {
        SeededElement {
            beta: consts(self.beta_values),
            ctx: self.ctx,
            u: unit_seeded(&self.u_e),
            xi: consts(self.xi_n),
            load: self.load,
        }
        .eval_r::<M>(ELEM_DOFS)
    }

    /// `dR/dxi` (16 x L), seeding the local state.
    fn b(&self) -> DMatrix<f64> {
        SeededElement {
            beta: consts(self.beta_values),
            ctx: self.ctx,
            u: consts(&self.u_e),
            xi: unit_seeded(self.xi_n),
            load: self.load,
        }
        .eval_r::<M>(M::LOCAL_DIM)
    }

    /// `dR/dbeta` (16 x n_active), seeding the active parameters.
    fn r_beta(&self) -> DMatrix<f64> {
        SeededElement {
            beta: self.params.seed_active(),
            ctx: self.ctx,
            u: consts(&self.u_e),
            xi: consts(self.xi_n),
            load: self.load,
        }
        .eval_r::<M>(self.params.n_active())
    }

    fn local(&self, beta: Vec<Dual>, u: Vec<Dual>, u_prev: Vec<Dual>, xi_n: Vec<Dual>, xi_prev: Vec<Dual>) -> SeededLocal {
        SeededLocal {
            beta,
            f_n: deformation_gradient(self.ctx, &u),
            f_prev: deformation_gradient(self.ctx, &u_prev),
            xi_n,
            xi_prev,
            branch: self.branch,
        }
    }

    /// `dC/dxi` (L x L). The kinematic state carries no derivative here, so
    /// it is computed in plain arithmetic and lifted.
    fn d(&self) -> DMatrix<f64> {
        let f_n = deformation_gradient(self.ctx, &self.u_e);
        let f_prev = deformation_gradient(self.ctx, &self.u_prev_e);
        let kin = M::kinematic_state(&f_n, &f_prev, self.xi_prev);
        let kin_d = crate::tensor::Sym3 {
            c: kin.c.map(Dual::constant),
        };
        let c = M::local_residual_at(
            &consts(self.beta_values),
            &kin_d,
            &unit_seeded(self.xi_n),
            &consts(self.xi_prev),
            self.branch,
        );
        DMatrix::from_fn(M::LOCAL_DIM, M::LOCAL_DIM, |i, j| c[i].deriv(j))
    }

    /// `dC/dU` (L x 16).
    fn c_u(&self) -> DMatrix<f64> {
        self.local(
            consts(self.beta_values),
            unit_seeded(&self.u_e),
            consts(&self.u_prev_e),
            consts(self.xi_n),
            consts(self.xi_prev),
        )
        .eval_c::<M>(ELEM_DOFS)
    }

    /// `dC/dU_prev` (L x 16).
    fn c_u_prev(&self) -> DMatrix<f64> {
        self.local(
            consts(self.beta_values),
            consts(&self.u_e),
            unit_seeded(&self.u_prev_e),
            consts(self.xi_n),
            consts(self.xi_prev),
        )
        .eval_c::<M>(ELEM_DOFS)
    }

    /// `dC/dxi_prev` (L x L).
    fn c_xi_prev(&self) -> DMatrix<f64> {
        self.local(
            consts(self.beta_values),
            consts(&self.u_e),
            consts(&self.u_prev_e),
            consts(self.xi_n),
            unit_seeded(self.xi_prev),
        )
        .eval_c::<M>(M::LOCAL_DIM)
    }

    /// `dC/dbeta` (L x n_active).
    fn c_beta(&self) -> DMatrix<f64> {
        self.local(
            self.params.seed_active(),
            consts(&self.u_e),
            consts(&self.u_prev_e),
            consts(self.xi_n),
            consts(self.xi_prev),
        )
        .eval_c::<M>(self.params.n_active())
    }
}

fn blocks<'a, M: Model>(
    mesh: &Mesh,
    ctxs: &'a [ElementContext],
    params: &'a ParamSet,
    trajectory: &'a Trajectory,
    n: usize,
    e: usize,
) -> ElementBlocks<'a, M> {
    let step = &trajectory.steps[n];
    let prev = &trajectory.steps[n - 1];
    ElementBlocks {
        beta_values: &params.values,
        params,
        ctx: &ctxs[e],
        u_e: mesh.gather(&step.u, e),
        u_prev_e: mesh.gather(&prev.u, e),
        xi_n: trajectory.xi_of(n, e),
        xi_prev: trajectory.xi_of(n - 1, e),
        branch: step.branches[e],
        load: step.load,
        _model: std::marker::PhantomData,
    }
}

/// Expands an active-space gradient to the full parameter vector, zero at
/// inactive entries.
fn expand_active(params: &ParamSet, g_active: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; params.values.len()];
    for (slot, idx) in params.active_indices().into_iter().enumerate() {
        out[idx] = g_active[slot];
    }
    out
}

/// Objective gradient by forward finite differences: one unperturbed solve
/// plus one per active parameter.
///
/// The step is `rel_step * max(|beta_i|, 1e-6)` per component, with
/// `rel_step` defaulting to the square root of machine epsilon.
pub fn gradient_fd<M: Model>(
    mesh: &Mesh,
    ctxs: &[ElementContext],
    params: &ParamSet,
    schedule: &LoadSchedule,
    tol: &Tolerances,
    data: &DicData,
    rel_step: Option<f64>,
    counters: &mut Counters,
) -> Result<Vec<f64>> {
    let base = solve_forward::<M>(mesh, ctxs, &params.values, schedule, tol, counters)?;
    let j_ref = evaluate_objective(mesh, &base, data)?.total;

    let rel = rel_step.unwrap_or_else(|| f64::EPSILON.sqrt());
    let mut g_active = Vec::with_capacity(params.n_active());
    for idx in params.active_indices() {
        let eps = rel * params.values[idx].abs().max(1e-6);
        let mut beta = params.values.clone();
        beta[idx] += eps;
        let traj = solve_forward::<M>(mesh, ctxs, &beta, schedule, tol, counters)?;
        let j = evaluate_objective(mesh, &traj, data)?.total;
        g_active.push((j - j_ref) / eps);
    }
    counters.gradient_evaluations += 1;
    Ok(expand_active(params, &g_active))
}

/// Objective gradient from forward sensitivities over a converged
/// trajectory. One global factorization per load step, applied to one
/// right-hand side per active parameter.
pub fn gradient_forward<M: Model>(
    mesh: &Mesh,
    ctxs: &[ElementContext],
    params: &ParamSet,
    trajectory: &Trajectory,
    data: &DicData,
    counters: &mut Counters,
) -> Result<Vec<f64>> {
    let n_dofs = mesh.n_dofs();
    let n_el = mesh.n_elements();
    let na = params.n_active();
    let fixed = mesh.fixed_dofs();
    let mut fixed_mask = vec![false; n_dofs];
    for &d in &fixed {
        fixed_mask[d] = true;
    }
    let index = data.node_index();

    let mut x_prev = DMatrix::<f64>::zeros(n_dofs, na);
    let mut y_prev: Vec<DMatrix<f64>> = vec![DMatrix::zeros(M::LOCAL_DIM, na); n_el];
    // local right-hand-side matrices, overwritten every load step
    let mut g_buf: Vec<DMatrix<f64>> = vec![DMatrix::zeros(M::LOCAL_DIM, na); n_el];
    let mut gradient = vec![0.0; na];

    for n in 1..trajectory.steps.len() {
        let mut lhs = TripletMatrix::new(n_dofs);
        let mut rhs = DMatrix::<f64>::zeros(n_dofs, na);

        for e in 0..n_el {
            let blk = blocks::<M>(mesh, ctxs, params, trajectory, n, e);
            let dofs = mesh.element_dofs(e);

            let x_prev_e = DMatrix::from_fn(ELEM_DOFS, na, |l, j| x_prev[(dofs[l], j)]);
            let g_e = -(blk.c_beta() + blk.c_u_prev() * &x_prev_e + blk.c_xi_prev() * &y_prev[e]);

            let d_lu = blk.d().lu();
            let dinv_cu = d_lu
                .solve(&blk.c_u())
                .ok_or(crate::Error::SingularLocalJacobian { element: e })?;
            let dinv_g = d_lu
                .solve(&g_e)
                .ok_or(crate::Error::SingularLocalJacobian { element: e })?;

            let b_e = blk.b();
            let lhs_e = blk.a() - &b_e * dinv_cu;
            let rhs_e = -blk.r_beta() - &b_e * dinv_g;

            for (l, &gi) in dofs.iter().enumerate() {
                if fixed_mask[gi] {
                    continue;
                }
                for (m, &gj) in dofs.iter().enumerate() {
                    if !fixed_mask[gj] {
                        lhs.push(gi, gj, lhs_e[(l, m)]);
                    }
                }
                for j in 0..na {
                    rhs[(gi, j)] += rhs_e[(l, j)];
                }
            }
            g_buf[e] = g_e;
        }

        for &d in &fixed {
            lhs.push(d, d, 1.0);
        }
        let lu = SparseLu::factor(&lhs)?;
        counters.sensitivity_factorizations += 1;
        let mut x_n = DMatrix::<f64>::zeros(n_dofs, na);
        for j in 0..na {
            let mut col: Vec<f64> = (0..n_dofs).map(|i| rhs[(i, j)]).collect();
            lu.solve_in_place(&mut col);
            counters.sensitivity_rhs_columns += 1;
            for i in 0..n_dofs {
                x_n[(i, j)] = col[i];
            }
        }

        // gradient accumulation dJ += dJ/dU X and the local back-substitution
        let dj_du = objective_gradient_u(mesh, &trajectory.steps[n].u, &data.steps[n - 1], &index);
        for j in 0..na {
            gradient[j] += (0..n_dofs).map(|i| dj_du[i] * x_n[(i, j)]).sum::<f64>();
        }

        for e in 0..n_el {
            let blk = blocks::<M>(mesh, ctxs, params, trajectory, n, e);
            let dofs = mesh.element_dofs(e);
            let x_e = DMatrix::from_fn(ELEM_DOFS, na, |l, j| x_n[(dofs[l], j)]);
            let d_lu = blk.d().lu();
            let y_e = d_lu
                .solve(&(&g_buf[e] - blk.c_u() * x_e))
                .ok_or(crate::Error::SingularLocalJacobian { element: e })?;
            y_prev[e] = y_e;
        }
        x_prev = x_n;
    }

    counters.gradient_evaluations += 1;
    Ok(expand_active(params, &gradient))
}

/// Objective gradient from adjoint sensitivities, backwards in time with
/// history vectors. Exactly one global linear solve per load step,
/// independent of the parameter count.
pub fn gradient_adjoint<M: Model>(
    mesh: &Mesh,
    ctxs: &[ElementContext],
    params: &ParamSet,
    trajectory: &Trajectory,
    data: &DicData,
    counters: &mut Counters,
) -> Result<Vec<f64>> {
    let n_dofs = mesh.n_dofs();
    let n_el = mesh.n_elements();
    let na = params.n_active();
    let n_steps = trajectory.n_load_steps();
    let fixed = mesh.fixed_dofs();
    let mut fixed_mask = vec![false; n_dofs];
    for &d in &fixed {
        fixed_mask[d] = true;
    }
    let index = data.node_index();

    // history vectors, zero at the terminal step
    let mut f_tilde = vec![0.0; n_dofs];
    let mut g_hist: Vec<DVector<f64>> = vec![DVector::zeros(M::LOCAL_DIM); n_el];
    let mut gradient = vec![0.0; na];

    for n in (1..=n_steps).rev() {
        let mut lhs = TripletMatrix::new(n_dofs);
        let dj_du = objective_gradient_u(mesh, &trajectory.steps[n].u, &data.steps[n - 1], &index);
        let mut rhs: Vec<f64> = (0..n_dofs).map(|i| -dj_du[i] + f_tilde[i]).collect();

        for e in 0..n_el {
            let blk = blocks::<M>(mesh, ctxs, params, trajectory, n, e);
            let dofs = mesh.element_dofs(e);

            let d_t_lu = blk.d().transpose().lu();
            // D^{-T} g_e and D^{-T} B^T, shared by the RHS and LHS blocks
            let dinv_t_g = d_t_lu
                .solve(&g_hist[e])
                .ok_or(crate::Error::SingularLocalJacobian { element: e })?;
            let dinv_t_bt = d_t_lu
                .solve(&blk.b().transpose())
                .ok_or(crate::Error::SingularLocalJacobian { element: e })?;

            let c_u = blk.c_u();
            let lhs_e = blk.a().transpose() - c_u.transpose() * &dinv_t_bt;
            let rhs_e = -(c_u.transpose() * &dinv_t_g);

            for (l, &gi) in dofs.iter().enumerate() {
                if fixed_mask[gi] {
                    continue;
                }
                for (m, &gj) in dofs.iter().enumerate() {
                    if !fixed_mask[gj] {
                        lhs.push(gi, gj, lhs_e[(l, m)]);
                    }
                }
                rhs[gi] += rhs_e[l];
            }
        }

        for &d in &fixed {
            lhs.push(d, d, 1.0);
            rhs[d] = 0.0;
        }
        let lu = SparseLu::factor(&lhs)?;
        lu.solve_in_place(&mut rhs);
        counters.adjoint_linear_solves += 1;
        let eta = rhs;

        let mut f_tilde_next = vec![0.0; n_dofs];
        for e in 0..n_el {
            let blk = blocks::<M>(mesh, ctxs, params, trajectory, n, e);
            let dofs = mesh.element_dofs(e);
            let eta_e = DVector::from_iterator(ELEM_DOFS, dofs.iter().map(|&g| eta[g]));

            let d_t_lu = blk.d().transpose().lu();
            let phi_e = d_t_lu
                .solve(&(&g_hist[e] - blk.b().transpose() * &eta_e))
                .ok_or(crate::Error::SingularLocalJacobian { element: e })?;

            // history contributions for step n-1
            let f_contrib = -(blk.c_u_prev().transpose() * &phi_e);
            for (l, &gi) in dofs.iter().enumerate() {
                f_tilde_next[gi] += f_contrib[l];
            }
            g_hist[e] = -(blk.c_xi_prev().transpose() * &phi_e);

            // gradient accumulation: eta^T dR/dbeta + phi^T dC/dbeta
            let r_beta = blk.r_beta();
            let c_beta = blk.c_beta();
            for j in 0..na {
                let mut acc = 0.0;
                for l in 0..ELEM_DOFS {
                    acc += eta_e[l] * r_beta[(l, j)];
                }
                for l in 0..M::LOCAL_DIM {
                    acc += phi_e[l] * c_beta[(l, j)];
                }
                gradient[j] += acc;
            }
        }
        f_tilde = f_tilde_next;
    }

    counters.gradient_evaluations += 1;
    Ok(expand_active(params, &gradient))
}

/// One row of the finite-difference verification sweep.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct FdCheckPoint {
    pub eps: f64,
    pub error_fs: f64,
    pub error_adjoint: f64,
}

/// Directional-derivative verification: compares both AD gradients against
/// two-point centered finite differences over a sweep of step sizes.
///
/// The direction is masked to the active parameters (the AD engines only
/// differentiate those).
pub fn fd_check<M: Model>(
    mesh: &Mesh,
    ctxs: &[ElementContext],
    params: &ParamSet,
    schedule: &LoadSchedule,
    tol: &Tolerances,
    data: &DicData,
    direction: &[f64],
    steps: &[f64],
    counters: &mut Counters,
) -> Result<Vec<FdCheckPoint>> {
    assert_eq!(direction.len(), params.values.len());
    let mut dir = direction.to_vec();
    for (i, d) in dir.iter_mut().enumerate() {
        if !params.active[i] {
            *d = 0.0;
        }
    }

    let base = solve_forward::<M>(mesh, ctxs, &params.values, schedule, tol, counters)?;
    let g_fs = gradient_forward::<M>(mesh, ctxs, params, &base, data, counters)?;
    let g_adj = gradient_adjoint::<M>(mesh, ctxs, params, &base, data, counters)?;
    let dd_fs: f64 = g_fs.iter().zip(&dir).map(|(g, d)| g * d).sum();
    let dd_adj: f64 = g_adj.iter().zip(&dir).map(|(g, d)| g * d).sum();

    let mut out = Vec::with_capacity(steps.len());
    for &eps in steps {
        let mut perturb = |sign: f64| -> Result<f64> {
            let beta: Vec<f64> = params
                .values
                .iter()
                .zip(&dir)
                .map(|(&b, &d)| b + sign * eps * d)
                .collect();
            let traj = solve_forward::<M>(mesh, ctxs, &beta, schedule, tol, counters)?;
            Ok(evaluate_objective(mesh, &traj, data)?.total)
        };
        let dd_fd = (perturb(1.0)? - perturb(-1.0)?) / (2.0 * eps);
        out.push(FdCheckPoint {
            eps,
            error_fs: (dd_fs - dd_fd).abs(),
            error_adjoint: (dd_adj - dd_fd).abs(),
        });
    }
    Ok(out)
}

/// Assembles the forward-sensitivity and adjoint Schur-complement matrices
/// of one step as dense matrices, for consistency tests on small problems.
pub fn assemble_schur_pair<M: Model>(
    mesh: &Mesh,
    ctxs: &[ElementContext],
    params: &ParamSet,
    trajectory: &Trajectory,
    n: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_dofs = mesh.n_dofs();
    let fixed = mesh.fixed_dofs();
    let mut fixed_mask = vec![false; n_dofs];
    for &d in &fixed {
        fixed_mask[d] = true;
    }
    let mut fwd = DMatrix::<f64>::zeros(n_dofs, n_dofs);
    let mut adj = DMatrix::<f64>::zeros(n_dofs, n_dofs);

    for e in 0..mesh.n_elements() {
        let blk = blocks::<M>(mesh, ctxs, params, trajectory, n, e);
        let dofs = mesh.element_dofs(e);
        let b_e = blk.b();
        let c_u = blk.c_u();
        let d_lu = blk.d().lu();
        let dinv_cu = d_lu
            .solve(&c_u)
            .ok_or(crate::Error::SingularLocalJacobian { element: e })?;
        let lhs_f = blk.a() - &b_e * dinv_cu;

        let d_t_lu = blk.d().transpose().lu();
        let dinv_t_bt = d_t_lu
            .solve(&b_e.transpose())
            .ok_or(crate::Error::SingularLocalJacobian { element: e })?;
        let lhs_a = blk.a().transpose() - c_u.transpose() * dinv_t_bt;

        for (l, &gi) in dofs.iter().enumerate() {
            if fixed_mask[gi] {
                continue;
            }
            for (m, &gj) in dofs.iter().enumerate() {
                if !fixed_mask[gj] {
                    fwd[(gi, gj)] += lhs_f[(l, m)];
                    adj[(gi, gj)] += lhs_a[(l, m)];
                }
            }
        }
    }
    for &d in &fixed {
        fwd[(d, d)] += 1.0;
        adj[(d, d)] += 1.0;
    }
    Ok((fwd, adj))
}
