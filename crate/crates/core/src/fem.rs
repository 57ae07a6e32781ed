//! Element-level evaluation of the stabilized mixed displacement-pressure
//! formulation on linear tetrahedra.
//!
//! Every term of the equilibrium residual integrates with single-point
//! quadrature except the pressure-pressure coupling, which is quadratic in
//! the linear shape functions and uses the four-point rule. Surface
//! tractions integrate with the three-point triangle rule on
//! reference-configuration faces; for constant tractions and linear shape
//! functions that is an equal share of `h * A / 3` per face node.
//!
//! The element tangent is assembled exactly as the forward algorithm
//! prescribes: solve the local sensitivity system for `dxi/dU`, seed the
//! element state with it, and read the total derivative `dR/dU` off one AD
//! evaluation of the residual.

use nalgebra::DMatrix;

use crate::ad::{seed_matrix, Dual, Scalar};
use crate::mesh::{FaceSet, Mesh, ELEM_DOFS};
use crate::model::{Branch, Model};
use crate::tensor::Mat3;
use crate::{Error, Result};

/// Four-point tetrahedral rule (degree 2): barycentric coordinates of each
/// point; weights are `V/4`.
const TET4_ALPHA: f64 = 0.585_410_196_624_968_5;
const TET4_BETA: f64 = 0.138_196_601_125_010_5;

/// Shape function values at the four quadrature points.
const TET4_N: [[f64; 4]; 4] = [
    [TET4_ALPHA, TET4_BETA, TET4_BETA, TET4_BETA],
    [TET4_BETA, TET4_ALPHA, TET4_BETA, TET4_BETA],
    [TET4_BETA, TET4_BETA, TET4_ALPHA, TET4_BETA],
    [TET4_BETA, TET4_BETA, TET4_BETA, TET4_ALPHA],
];

/// A boundary face of an element carrying a prescribed traction.
#[derive(Clone, Debug)]
pub struct TractionFace {
    /// Local node indices (0..4) of the face corners.
    pub local_nodes: [usize; 3],
    /// Reference-configuration area.
    pub area: f64,
    /// Which load component drives this face.
    pub set: FaceSet,
}

/// Precomputed per-element geometry: constant shape-function gradients,
/// volume, stabilization length, and any traction faces.
#[derive(Clone, Debug)]
pub struct ElementContext {
    pub element: usize,
    /// `grad[a][i] = dN_a/dX_i`, constant on a linear tet.
    pub grads: [[f64; 3]; 4],
    pub volume: f64,
    /// Characteristic element size: the longest edge.
    pub h_e: f64,
    pub traction: Vec<TractionFace>,
}

impl ElementContext {
    pub fn build(mesh: &Mesh, element: usize) -> Self {
        let tet = mesh.tets[element];
        let x: [[f64; 3]; 4] = tet.map(|n| mesh.coords[n]);

        // edge matrix J = [X1-X0 | X2-X0 | X3-X0]; dN_a/dX from its inverse
        let jac = Mat3 {
            m: [
                [x[1][0] - x[0][0], x[2][0] - x[0][0], x[3][0] - x[0][0]],
                [x[1][1] - x[0][1], x[2][1] - x[0][1], x[3][1] - x[0][1]],
                [x[1][2] - x[0][2], x[2][2] - x[0][2], x[3][2] - x[0][2]],
            ],
        };
        let det = jac.det();
        assert!(det > 0.0, "element {element} has non-positive volume");
        let inv = jac.inverse();
        let mut grads = [[0.0; 3]; 4];
        for a in 0..3 {
            for i in 0..3 {
                grads[a + 1][i] = inv.m[a][i];
            }
        }
        for i in 0..3 {
            grads[0][i] = -(grads[1][i] + grads[2][i] + grads[3][i]);
        }

        let mut h_e = 0.0f64;
        for a in 0..4 {
            for b in (a + 1)..4 {
                let d2 = (0..3).map(|i| (x[a][i] - x[b][i]).powi(2)).sum::<f64>();
                h_e = h_e.max(d2.sqrt());
            }
        }

        let mut traction = Vec::new();
        for (faces, set) in [
            (&mesh.traction_y, FaceSet::TractionY),
            (&mesh.traction_x, FaceSet::TractionX),
        ] {
            for face in faces.iter().filter(|f| f.element == element) {
                let local_nodes = face.nodes.map(|n| {
                    tet.iter()
                        .position(|&t| t == n)
                        .expect("traction face node not in owning element")
                });
                traction.push(TractionFace {
                    local_nodes,
                    area: mesh.face_area(face),
                    set,
                });
            }
        }

        ElementContext {
            element,
            grads,
            volume: det / 6.0,
            h_e,
            traction,
        }
    }

    pub fn build_all(mesh: &Mesh) -> Vec<ElementContext> {
        (0..mesh.n_elements())
            .map(|e| ElementContext::build(mesh, e))
            .collect()
    }
}

/// Deformation gradient `F = I + sum_a u_a (x) grad N_a` from the element
/// dof vector (node-major `ux, uy, uz, p`).
pub fn deformation_gradient<T: Scalar>(ctx: &ElementContext, u_e: &[T]) -> Mat3<T> {
    let mut f = Mat3::<T>::identity();
    for a in 0..4 {
        for i in 0..3 {
            let u = &u_e[4 * a + i];
            for j in 0..3 {
                let g = ctx.grads[a][j];
                if g != 0.0 {
                    f.m[i][j] = f.m[i][j].clone() + u.scale(g);
                }
            }
        }
    }
    f
}

/// Current load magnitudes applied through the tagged boundary sets.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepLoad {
    pub h_y: f64,
    pub h_x: f64,
}

/// The sixteen discrete equilibrium equations of one element.
///
/// Rows follow the dof order: for each node, three momentum rows then the
/// pressure-constraint row.
pub fn element_residual<M: Model, T: Scalar>(
    beta: &[T],
    ctx: &ElementContext,
    u_e: &[T],
    xi_n: &[T],
    load: StepLoad,
) -> Vec<T> {
    let f = deformation_gradient(ctx, u_e);
    let j = f.det();
    assert!(
        j.scalar() > 0.0,
        "element {} inverted during residual evaluation",
        ctx.element
    );
    let f_inv = f.inverse();
    let f_inv_t = f_inv.transpose();
    let vol = ctx.volume;

    let mut r = vec![T::zero(); ELEM_DOFS];

    // deviatoric Kirchhoff stress minus the pressure term, pushed to the
    // reference configuration: (s - J p I) F^{-T} : grad w
    let p_bar = (u_e[3].clone() + &u_e[7] + &u_e[11] + &u_e[15]).scale(0.25);
    let s_dev = M::kirchhoff_deviator(beta, &f, xi_n);
    let jp = j.clone() * &p_bar;
    let stress = s_dev.add_scaled_identity(&-jp).to_mat().matmul(&f_inv_t);
    for a in 0..4 {
        for i in 0..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                let g = ctx.grads[a][k];
                if g != 0.0 {
                    acc = acc + stress.m[i][k].scale(g);
                }
            }
            r[4 * a + i] = acc.scale(vol);
        }
    }

    // pressure constraint: -(coef * p + offset) q, the p q product with the
    // four-point rule, the element-constant offset with one point
    let coef = M::pressure_coefficient(beta);
    let offset = M::pressure_offset(beta, &f, xi_n);
    for a in 0..4 {
        let mut acc = T::zero();
        for g in 0..4 {
            let mut p_g = T::zero();
            for b in 0..4 {
                p_g = p_g + u_e[4 * b + 3].scale(TET4_N[g][b]);
            }
            acc = acc + (coef.clone() * &p_g).scale(TET4_N[g][a] * 0.25);
        }
        acc = acc + offset.scale(0.25);
        r[4 * a + 3] = -acc.scale(vol);
    }

    // stabilization: -tau (J F^{-1} F^{-T}) : (grad p (x) grad q)
    let mu = M::shear_modulus(beta);
    let tau = mu.scale(2.0).recip().scale(ctx.h_e * ctx.h_e);
    let mut grad_p = [T::zero(), T::zero(), T::zero()];
    for b in 0..4 {
        for k in 0..3 {
            let g = ctx.grads[b][k];
            if g != 0.0 {
                grad_p[k] = grad_p[k].clone() + u_e[4 * b + 3].scale(g);
            }
        }
    }
    let metric = f_inv.matmul(&f_inv_t).scale_by(&j);
    let flux = metric.mulvec(&grad_p);
    for a in 0..4 {
        let mut acc = T::zero();
        for k in 0..3 {
            let g = ctx.grads[a][k];
            if g != 0.0 {
                acc = acc + flux[k].scale(g);
            }
        }
        r[4 * a + 3] = r[4 * a + 3].clone() - (tau.clone() * &acc).scale(vol);
    }

    // traction on tagged reference faces: -h . w, an equal share per node
    for face in &ctx.traction {
        let h: [f64; 3] = match face.set {
            FaceSet::TractionY => [0.0, load.h_y, 0.0],
            FaceSet::TractionX => [load.h_x, 0.0, 0.0],
            _ => [0.0, 0.0, 0.0],
        };
        let share = face.area / 3.0;
        for &n in &face.local_nodes {
            for i in 0..3 {
                if h[i] != 0.0 {
                    r[4 * n + i] = r[4 * n + i].clone() - T::from_f64(h[i] * share);
                }
            }
        }
    }

    r
}

/// Jacobian of the local residual with respect to the local state,
/// `D_e = dC/dxi`, by unit-seeding the state.
pub fn local_jacobian<M: Model>(
    beta: &[f64],
    f_n: &Mat3<f64>,
    f_prev: &Mat3<f64>,
    xi_n: &[f64],
    xi_prev: &[f64],
    branch: Branch,
) -> (Vec<f64>, DMatrix<f64>) {
    let dim = M::LOCAL_DIM;
    let beta_d: Vec<Dual> = beta.iter().map(|&b| Dual::constant(b)).collect();
    let f_n_d = Mat3::<Dual>::map_f64(f_n);
    let f_prev_d = Mat3::<Dual>::map_f64(f_prev);
    let xi_n_d: Vec<Dual> = xi_n
        .iter()
        .enumerate()
        .map(|(k, &v)| Dual::seed_unit(v, k, dim))
        .collect();
    let xi_prev_d: Vec<Dual> = xi_prev.iter().map(|&v| Dual::constant(v)).collect();
    let c = M::local_residual(&beta_d, &f_n_d, &f_prev_d, &xi_n_d, &xi_prev_d, branch);
    let values: Vec<f64> = c.iter().map(|ci| ci.scalar()).collect();
    let jac = DMatrix::from_fn(dim, dim, |i, j| c[i].deriv(j));
    (values, jac)
}

/// `dC/dU_e` by unit-seeding the element dof vector.
pub fn local_residual_du<M: Model>(
    beta: &[f64],
    ctx: &ElementContext,
    u_e: &[f64],
    u_prev_e: &[f64],
    xi_n: &[f64],
    xi_prev: &[f64],
    branch: Branch,
) -> DMatrix<f64> {
    let beta_d: Vec<Dual> = beta.iter().map(|&b| Dual::constant(b)).collect();
    let u_d: Vec<Dual> = u_e
        .iter()
        .enumerate()
        .map(|(k, &v)| Dual::seed_unit(v, k, ELEM_DOFS))
        .collect();
    let f_n = deformation_gradient(ctx, &u_d);
    let u_prev_d: Vec<Dual> = u_prev_e.iter().map(|&v| Dual::constant(v)).collect();
    let f_prev = deformation_gradient(ctx, &u_prev_d);
    let xi_n_d: Vec<Dual> = xi_n.iter().map(|&v| Dual::constant(v)).collect();
    let xi_prev_d: Vec<Dual> = xi_prev.iter().map(|&v| Dual::constant(v)).collect();
    let c = M::local_residual(&beta_d, &f_n, &f_prev, &xi_n_d, &xi_prev_d, branch);
    DMatrix::from_fn(M::LOCAL_DIM, ELEM_DOFS, |i, j| c[i].deriv(j))
}

/// Element residual and consistent tangent `dR/dU = dR/dU + dR/dxi dxi/dU`.
///
/// `dxi_du` comes from the local sensitivity solve; passing a zero matrix
/// freezes the state (elastic tangent contribution only).
pub fn element_tangent<M: Model>(
    beta: &[f64],
    ctx: &ElementContext,
    u_e: &[f64],
    xi_n: &[f64],
    dxi_du: &DMatrix<f64>,
    load: StepLoad,
) -> (Vec<f64>, DMatrix<f64>) {
    let beta_d: Vec<Dual> = beta.iter().map(|&b| Dual::constant(b)).collect();
    let u_d: Vec<Dual> = u_e
        .iter()
        .enumerate()
        .map(|(k, &v)| Dual::seed_unit(v, k, ELEM_DOFS))
        .collect();
    let rows: Vec<Vec<f64>> = (0..M::LOCAL_DIM)
        .map(|i| (0..ELEM_DOFS).map(|j| dxi_du[(i, j)]).collect())
        .collect();
    let xi_d = seed_matrix(xi_n, &rows);
    let r = element_residual::<M, Dual>(&beta_d, ctx, &u_d, &xi_d, load);
    let values: Vec<f64> = r.iter().map(|ri| ri.scalar()).collect();
    let k = DMatrix::from_fn(ELEM_DOFS, ELEM_DOFS, |i, j| r[i].deriv(j));
    (values, k)
}

/// Checks element invertibility before an AD evaluation so a collapsing
/// element surfaces as an error instead of a panic deep inside the residual.
pub fn check_element_state(ctx: &ElementContext, u_e: &[f64]) -> Result<()> {
    let f = deformation_gradient(ctx, u_e);
    let det = f.det();
    if det <= 0.0 {
        return Err(Error::ElementInversion {
            element: ctx.element,
            det,
        });
    }
    Ok(())
}
