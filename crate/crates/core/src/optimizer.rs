//! Bound-constrained limited-memory quasi-Newton minimization and the
//! calibration driver.
//!
//! The minimizer is a projected L-BFGS: two-loop recursion for the search
//! direction, projection of trial points onto the box, and a backtracking
//! Armijo line search along the projected path. Internally it optimizes the
//! active parameters scaled to `[0, 1]` by their bounds; the raw parameter
//! magnitudes span several orders of magnitude and would cripple the line
//! search otherwise.

use serde::Serialize;

use crate::fem::ElementContext;
use crate::mesh::Mesh;
use crate::model::{Model, ParamSet};
use crate::objective::{evaluate_objective, DicData};
use crate::sensitivity::{gradient_adjoint, gradient_fd, gradient_forward};
use crate::solver::{solve_forward, Counters, LoadSchedule, Tolerances, Trajectory};
use crate::{Error, Result};

/// Which engine produces the objective gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMethod {
    /// Forward finite differences (one nonlinear solve per active
    /// parameter).
    Fd,
    /// Forward sensitivities.
    Fs,
    /// Adjoint sensitivities.
    Adjoint,
}

/// An objective with a gradient, evaluated at full parameter vectors.
pub trait ObjectiveFn {
    fn value(&mut self, beta: &[f64]) -> Result<f64>;
    fn gradient(&mut self, beta: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct MinimizeConfig {
    /// L-BFGS memory.
    pub memory: usize,
    /// Convergence on the projected gradient norm, relative to its initial
    /// value.
    pub gtol_rel: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            memory: 10,
            gtol_rel: 1e-10,
            c1: 1e-4,
            max_iterations: 300,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ProjectedGradient,
    StepSize,
    LineSearchExhausted,
    MaxIterations,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterateRecord {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub projected_gradient_norm: f64,
}

/// Full record of a minimization: iterate history, operation counters, and
/// the reason the loop stopped.
#[derive(Clone, Debug, Serialize)]
pub struct OptRun {
    pub history: Vec<IterateRecord>,
    pub beta: Vec<f64>,
    pub objective: f64,
    pub termination: Termination,
    pub counters: Counters,
}

struct Box01<'a> {
    params: &'a ParamSet,
    active: Vec<usize>,
}

impl<'a> Box01<'a> {
    fn new(params: &'a ParamSet) -> Self {
        Box01 {
            params,
            active: params.active_indices(),
        }
    }

    fn to_scaled(&self, beta: &[f64]) -> Vec<f64> {
        self.active
            .iter()
            .map(|&i| (beta[i] - self.params.lower[i]) / self.span(i))
            .collect()
    }

    fn to_full(&self, z: &[f64]) -> Vec<f64> {
        let mut beta = self.params.values.clone();
        for (k, &i) in self.active.iter().enumerate() {
            beta[i] = self.params.lower[i] + z[k] * self.span(i);
        }
        beta
    }

    fn scale_gradient(&self, g_full: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&i| g_full[i] * self.span(i)).collect()
    }

    fn span(&self, i: usize) -> f64 {
        let s = self.params.upper[i] - self.params.lower[i];
        assert!(s > 0.0, "empty bound interval for parameter {i}");
        s
    }
}

fn clamp01(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.clamp(0.0, 1.0)).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Norm of the projected gradient `||z - P(z - g)||_inf`, the first-order
/// optimality measure on the box.
fn projected_gradient_norm(z: &[f64], g: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .map(|(&zi, &gi)| zi - (zi - gi).clamp(0.0, 1.0))
        .fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Projected L-BFGS over the box `[lower, upper]` restricted to the active
/// parameters of `params`; inactive entries never move.
pub fn minimize(
    objective: &mut dyn ObjectiveFn,
    params: &ParamSet,
    config: &MinimizeConfig,
) -> Result<OptRun> {
    for (i, &v) in params.values.iter().enumerate() {
        if params.active[i] && !(params.lower[i] <= v && v <= params.upper[i]) {
            return Err(Error::Optimization(format!(
                "initial value {v} of parameter {i} violates its bounds"
            )));
        }
    }

    let space = Box01::new(params);
    let mut z = space.to_scaled(&params.values);
    let mut f = objective.value(&space.to_full(&z))?;
    let mut g = space.scale_gradient(&objective.gradient(&space.to_full(&z))?);

    let mut history = vec![IterateRecord {
        beta: space.to_full(&z),
        objective: f,
        projected_gradient_norm: projected_gradient_norm(&z, &g),
    }];

    let pg0 = projected_gradient_norm(&z, &g).max(1e-300);
    let gtol = config.gtol_rel * pg0;
    let n = z.len();
    let mut s_store: Vec<Vec<f64>> = Vec::new();
    let mut y_store: Vec<Vec<f64>> = Vec::new();
    let mut termination = Termination::MaxIterations;

    'outer: for _iter in 0..config.max_iterations {
        if projected_gradient_norm(&z, &g) <= gtol {
            termination = Termination::ProjectedGradient;
            break;
        }

        // two-loop recursion for d = -H g
        let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
        let pairs = s_store.len();
        let mut alphas = vec![0.0; pairs];
        for k in (0..pairs).rev() {
            let rho = 1.0
                / s_store[k]
                    .iter()
                    .zip(&y_store[k])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            let a = rho * s_store[k].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
            alphas[k] = a;
            for i in 0..n {
                d[i] -= a * y_store[k][i];
            }
        }
        if pairs > 0 {
            let k = pairs - 1;
            let sy: f64 = s_store[k].iter().zip(&y_store[k]).map(|(a, b)| a * b).sum();
            let yy: f64 = y_store[k].iter().map(|a| a * a).sum();
            let gamma = sy / yy;
            for di in d.iter_mut() {
                *di *= gamma;
            }
        }
        for k in 0..pairs {
            let rho = 1.0
                / s_store[k]
                    .iter()
                    .zip(&y_store[k])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            let b = rho * y_store[k].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                d[i] += (alphas[k] - b) * s_store[k][i];
            }
        }
        let descent: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if descent >= 0.0 {
            // not a descent direction: drop the memory and fall back
            s_store.clear();
            y_store.clear();
            d = g.iter().map(|x| -x).collect();
        }

        // Armijo line search along the projected path: backtrack by halving
        // until sufficient decrease holds, then expand by doubling while it
        // keeps holding (plain unit steps stall in curved valleys and
        // starve the curvature pairs)
        let mut try_step = |alpha: f64| -> Result<Option<(Vec<f64>, f64)>> {
            let z_trial = clamp01(
                &z.iter()
                    .zip(&d)
                    .map(|(zi, di)| zi + alpha * di)
                    .collect::<Vec<f64>>(),
            );
            let step: Vec<f64> = z_trial.iter().zip(&z).map(|(a, b)| a - b).collect();
            if inf_norm(&step) <= 1e-15 {
                return Ok(None);
            }
            let gs: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            match objective.value(&space.to_full(&z_trial)) {
                Ok(f_trial) if f_trial <= f + config.c1 * gs => Ok(Some((z_trial, f_trial))),
                // objective increase or a failed forward solve both back off
                Ok(_)
                | Err(Error::GlobalNonConvergence { .. })
                | Err(Error::LocalNonConvergence { .. })
                | Err(Error::ElementInversion { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        };

        let mut alpha = 1.0;
        let mut accepted = None;
        for k in 0..config.max_backtracks {
            if let Some(hit) = try_step(alpha)? {
                accepted = Some(hit);
                if k == 0 {
                    // unit step accepted outright: expand while the bound
                    // still holds and the objective keeps dropping
                    let mut grow = 2.0;
                    for _ in 0..20 {
                        match try_step(grow)? {
                            Some(better)
                                if better.1 < accepted.as_ref().unwrap().1 =>
                            {
                                accepted = Some(better);
                                grow *= 2.0;
                            }
                            _ => break,
                        }
                    }
                }
                break;
            }
            alpha *= 0.5;
        }

        let Some((z_new, f_new)) = accepted else {
            // no feasible decrease along this direction; retry once along
            // steepest descent before giving up
            if s_store.is_empty() {
                termination = Termination::LineSearchExhausted;
                break 'outer;
            }
            s_store.clear();
            y_store.clear();
            continue;
        };

        let g_new = space.scale_gradient(&objective.gradient(&space.to_full(&z_new))?);
        let s: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum::<f64>().sqrt();
        let yy: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        if sy > 1e-12 * ss * yy {
            s_store.push(s.clone());
            y_store.push(y);
            if s_store.len() > config.memory {
                s_store.remove(0);
                y_store.remove(0);
            }
        }

        let step_size = inf_norm(&s);
        z = z_new;
        f = f_new;
        g = g_new;
        history.push(IterateRecord {
            beta: space.to_full(&z),
            objective: f,
            projected_gradient_norm: projected_gradient_norm(&z, &g),
        });

        if step_size <= 1e-15 {
            termination = Termination::StepSize;
            break;
        }
    }

    if termination == Termination::MaxIterations
        && projected_gradient_norm(&z, &g) <= gtol
    {
        termination = Termination::ProjectedGradient;
    }

    Ok(OptRun {
        beta: space.to_full(&z),
        objective: f,
        termination,
        history,
        counters: Counters::default(),
    })
}

/// Reduced-space calibration problem: every evaluation solves the forward
/// problem at the requested parameters; gradients come from the configured
/// engine.
///
/// The forward-sensitivity and adjoint engines reuse the trajectory of a
/// value evaluation at identical parameters; the finite-difference engine
/// never caches, so its solve count stays at `N_active + 1` per gradient.
pub struct CalibrationProblem<'a, M: Model> {
    pub mesh: &'a Mesh,
    pub ctxs: &'a [ElementContext],
    pub template: &'a ParamSet,
    pub schedule: &'a LoadSchedule,
    pub tol: &'a Tolerances,
    pub data: &'a DicData,
    pub method: GradientMethod,
    /// Relative finite-difference step for the FD engine; `None` uses the
    /// engine default.
    pub fd_rel_step: Option<f64>,
    pub counters: Counters,
    cache: Option<(Vec<f64>, Trajectory)>,
    _model: std::marker::PhantomData<M>,
}

impl<'a, M: Model> CalibrationProblem<'a, M> {
    pub fn new(
        mesh: &'a Mesh,
        ctxs: &'a [ElementContext],
        template: &'a ParamSet,
        schedule: &'a LoadSchedule,
        tol: &'a Tolerances,
        data: &'a DicData,
        method: GradientMethod,
    ) -> Self {
        CalibrationProblem {
            mesh,
            ctxs,
            template,
            schedule,
            tol,
            data,
            method,
            fd_rel_step: None,
            counters: Counters::default(),
            cache: None,
            _model: std::marker::PhantomData,
        }
    }

    fn with_values(&self, beta: &[f64]) -> ParamSet {
        ParamSet {
            values: beta.to_vec(),
            active: self.template.active.clone(),
            lower: self.template.lower.clone(),
            upper: self.template.upper.clone(),
        }
    }

    fn solve(&mut self, beta: &[f64]) -> Result<Trajectory> {
        solve_forward::<M>(
            self.mesh,
            self.ctxs,
            beta,
            self.schedule,
            self.tol,
            &mut self.counters,
        )
    }
}

impl<M: Model> ObjectiveFn for CalibrationProblem<'_, M> {
    fn value(&mut self, beta: &[f64]) -> Result<f64> {
        let trajectory = self.solve(beta)?;
        let j = evaluate_objective(self.mesh, &trajectory, self.data)?.total;
        self.counters.objective_evaluations += 1;
        if self.method != GradientMethod::Fd {
            self.cache = Some((beta.to_vec(), trajectory));
        }
        Ok(j)
    }

    fn gradient(&mut self, beta: &[f64]) -> Result<Vec<f64>> {
        let params = self.with_values(beta);
        match self.method {
            GradientMethod::Fd => gradient_fd::<M>(
                self.mesh,
                self.ctxs,
                &params,
                self.schedule,
                self.tol,
                self.data,
                self.fd_rel_step,
                &mut self.counters,
            ),
            GradientMethod::Fs | GradientMethod::Adjoint => {
                let trajectory = match self.cache.take() {
                    Some((cached_beta, t)) if cached_beta == beta => t,
                    _ => self.solve(beta)?,
                };
                let g = if self.method == GradientMethod::Fs {
                    gradient_forward::<M>(
                        self.mesh,
                        self.ctxs,
                        &params,
                        &trajectory,
                        self.data,
                        &mut self.counters,
                    )
                } else {
                    gradient_adjoint::<M>(
                        self.mesh,
                        self.ctxs,
                        &params,
                        &trajectory,
                        self.data,
                        &mut self.counters,
                    )
                };
                self.cache = Some((beta.to_vec(), trajectory));
                g
            }
        }
    }
}

/// Runs the full calibration: minimizes the data mismatch over the active
/// parameters starting from `params.values`.
pub fn calibrate<M: Model>(
    mesh: &Mesh,
    ctxs: &[ElementContext],
    params: &ParamSet,
    schedule: &LoadSchedule,
    tol: &Tolerances,
    data: &DicData,
    method: GradientMethod,
    fd_rel_step: Option<f64>,
    config: &MinimizeConfig,
) -> Result<OptRun> {
    let mut problem =
        CalibrationProblem::<M>::new(mesh, ctxs, params, schedule, tol, data, method);
    problem.fd_rel_step = fd_rel_step;
    let mut run = minimize(&mut problem, params, config)?;
    run.counters = problem.counters;
    Ok(run)
}
