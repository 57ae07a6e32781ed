//! Hypoelastic model with Hill anisotropic yield and linear isotropic
//! hardening.
//!
//! The rate constitutive equation is integrated objectively in the unrotated
//! configuration (Green-McInnis rate through the polar decomposition of the
//! current deformation gradient). Local state (7 components): the unrotated
//! Cauchy stress (6 symmetric components) and the equivalent plastic strain:
//! `xi = [T_xx, T_yy, T_zz, T_xy, T_yz, T_xz, alpha]`.
//!
//! Parameters: `beta = [E, nu, Y, K, R11, R22, R33, R23, R13, R12]` where
//! the `R` entries are directional yield-stress ratios. The yield-surface
//! normal inside the plastic residual is produced by a nested AD evaluation
//! of the effective stress function, not a hand-coded derivative.

use super::{Branch, Model};
use crate::ad::{Dual, Scalar};
use crate::tensor::{polar_rotation, Mat3, Sym3};

pub struct Hill;

pub const E: usize = 0;
pub const NU: usize = 1;
pub const Y: usize = 2;
pub const K: usize = 3;
pub const R11: usize = 4;
pub const R22: usize = 5;
pub const R33: usize = 6;
pub const R23: usize = 7;
pub const R13: usize = 8;
pub const R12: usize = 9;

/// The six Hill coefficients `[F, G, H, L, M, N]`.
pub type HillCoefficients<T> = [T; 6];

impl Hill {
    /// Lame constants `(lambda, mu)` from the same `E, nu` mapping as the
    /// hyperelastic model.
    pub fn lame_constants<T: Scalar>(beta: &[T]) -> (T, T) {
        let e = &beta[E];
        let nu = &beta[NU];
        let denom = (T::one() - nu.scale(2.0)).scale(3.0);
        assert!(
            denom.scalar() != 0.0,
            "bulk modulus undefined at the incompressible limit nu = 1/2"
        );
        let kappa = e.clone() / &denom;
        let mu = e.clone() / &(T::one() + nu).scale(2.0);
        let lambda = kappa - mu.scale(2.0 / 3.0);
        (lambda, mu)
    }

    /// Hill coefficients from the yield-stress ratios. The reference yield
    /// stress cancels algebraically (`sigma_ii = R_ii Y`,
    /// `tau_ij = R_ij Y / sqrt(3)`), so only the ratios enter.
    pub fn coefficients<T: Scalar>(r: &[T]) -> HillCoefficients<T> {
        assert_eq!(r.len(), 6, "six yield-stress ratios expected");
        let inv2 = |x: &T| -> T {
            assert!(x.scalar() > 0.0, "yield-stress ratios must be positive");
            x.powi(-2)
        };
        let (r11, r22, r33) = (inv2(&r[0]), inv2(&r[1]), inv2(&r[2]));
        let f = (r22.clone() + &r33 - &r11).scale(0.5);
        let g = (r33.clone() + &r11 - &r22).scale(0.5);
        let h = (r11 + &r22 - &r33).scale(0.5);
        let l = inv2(&r[3]).scale(1.5);
        let m = inv2(&r[4]).scale(1.5);
        let n = inv2(&r[5]).scale(1.5);
        [f, g, h, l, m, n]
    }

    /// The Hill effective stress.
    pub fn phi<T: Scalar>(t: &Sym3<T>, coeff: &HillCoefficients<T>) -> T {
        let [f, g, h, l, m, n] = coeff;
        let d0 = t.c[1].clone() - &t.c[2]; // T22 - T33
        let d1 = t.c[2].clone() - &t.c[0]; // T33 - T11
        let d2 = t.c[0].clone() - &t.c[1]; // T11 - T22
        let radicand = f.clone() * &d0 * &d0
            + g.clone() * &d1 * &d1
            + h.clone() * &d2 * &d2
            + (l.clone() * &t.c[4] * &t.c[4]).scale(2.0)
            + (m.clone() * &t.c[5] * &t.c[5]).scale(2.0)
            + (n.clone() * &t.c[3] * &t.c[3]).scale(2.0);
        assert!(radicand.scalar() >= 0.0, "negative radicand in effective stress");
        radicand.sqrt()
    }

    /// Tensor gradient of the effective stress, `d phi / d T`, via a nested
    /// AD evaluation. Off-diagonal components are halved relative to the
    /// stored-component derivative so the result is the tensor derivative
    /// with independent entries (the flow direction).
    pub fn phi_gradient<T: Scalar>(t: &Sym3<T>, coeff: &HillCoefficients<T>) -> Sym3<T> {
        let lifted = Sym3::<Dual<T, 6>> {
            c: std::array::from_fn(|k| Dual::seed_unit(t.c[k].clone(), k, 6)),
        };
        let lifted_coeff: HillCoefficients<Dual<T, 6>> =
            std::array::from_fn(|k| Dual::constant(coeff[k].clone()));
        let phi = Self::phi(&lifted, &lifted_coeff);
        Sym3 {
            c: std::array::from_fn(|k| {
                let d = phi.deriv(k);
                if k >= 3 {
                    d.scale(0.5)
                } else {
                    d
                }
            }),
        }
    }

    /// Unrotated rate of deformation for the increment: `d = R^T sym(L) R`
    /// with `L = (F_n - F_prev) F_n^{-1}` and `R` from the polar
    /// decomposition of `F_n`.
    pub fn unrotated_rate<T: Scalar>(f_n: &Mat3<T>, f_prev: &Mat3<T>) -> Sym3<T> {
        let l = f_n.sub(f_prev).matmul(&f_n.inverse());
        let d_spatial = l.sym();
        let r = polar_rotation(f_n);
        d_spatial.congruence(&r.transpose())
    }

    fn stress<T: Scalar>(xi: &[T]) -> Sym3<T> {
        Sym3::from_slice(&xi[0..6])
    }

    /// Elastic stress increment `dt (lambda tr(d) I + 2 mu d)` with unit
    /// pseudo-time steps.
    fn elastic_increment<T: Scalar>(beta: &[T], d: &Sym3<T>) -> Sym3<T> {
        let (lambda, mu) = Self::lame_constants(beta);
        let vol = d.trace() * &lambda;
        d.scale_by(&mu.scale(2.0)).add_scaled_identity(&vol)
    }
}

impl Model for Hill {
    const LOCAL_DIM: usize = 7;
    const PARAM_DIM: usize = 10;
    const NAME: &'static str = "hill";
    const ALPHA_INDEX: usize = 6;

    fn param_names() -> &'static [&'static str] {
        &["E", "nu", "Y", "K", "R11", "R22", "R33", "R23", "R13", "R12"]
    }

    fn virgin_state() -> Vec<f64> {
        vec![0.0; 7]
    }

    fn shear_modulus<T: Scalar>(beta: &[T]) -> T {
        Self::lame_constants(beta).1
    }

    fn kinematic_state<T: Scalar>(f_n: &Mat3<T>, f_prev: &Mat3<T>, _xi_prev: &[T]) -> Sym3<T> {
        Self::unrotated_rate(f_n, f_prev)
    }

    fn trial_state<T: Scalar>(
        beta: &[T],
        f_n: &Mat3<T>,
        f_prev: &Mat3<T>,
        xi_prev: &[T],
    ) -> (Vec<T>, T) {
        let d = Self::unrotated_rate(f_n, f_prev);
        let t_trial = Self::stress(xi_prev).add(&Self::elastic_increment(beta, &d));
        let alpha_trial = xi_prev[6].clone();

        let coeff = Self::coefficients(&beta[R11..=R12]);
        let f_trial = Self::phi(&t_trial, &coeff)
            - &beta[Y]
            - beta[K].clone() * &alpha_trial;

        let mut xi_trial = t_trial.c.to_vec();
        xi_trial.push(alpha_trial);
        (xi_trial, f_trial)
    }

    fn local_residual_at<T: Scalar>(
        beta: &[T],
        kin: &Sym3<T>,
        xi_n: &[T],
        xi_prev: &[T],
        branch: Branch,
    ) -> Vec<T> {
        let d = kin.clone();
        let t_n = Self::stress(xi_n);
        let t_prev = Self::stress(xi_prev);
        match branch {
            Branch::Elastic => {
                let update = t_n
                    .sub(&t_prev)
                    .sub(&Self::elastic_increment(beta, &d));
                let mut out = update.c.to_vec();
                out.push(xi_n[6].clone() - &xi_prev[6]);
                out
            }
            Branch::Plastic => {
                let coeff = Self::coefficients(&beta[R11..=R12]);
                let normal = Self::phi_gradient(&t_n, &coeff);
                let d_alpha = xi_n[6].clone() - &xi_prev[6];
                let d_elastic = d.sub(&normal.scale_by(&d_alpha));
                let update = t_n
                    .sub(&t_prev)
                    .sub(&Self::elastic_increment(beta, &d_elastic));
                let mut out = update.c.to_vec();
                // consistency: phi(T_n) = Y + K alpha_n
                out.push(
                    Self::phi(&t_n, &coeff)
                        - &beta[Y]
                        - beta[K].clone() * &xi_n[6],
                );
                out
            }
        }
    }

    fn kirchhoff_deviator<T: Scalar>(_beta: &[T], f_n: &Mat3<T>, xi_n: &[T]) -> Sym3<T> {
        // J dev(R T R^T): rotate the unrotated stress to the spatial frame
        let r = polar_rotation(f_n);
        let spatial = Self::stress(xi_n).congruence(&r);
        spatial.dev().scale_by(&f_n.det())
    }

    fn pressure_coefficient<T: Scalar>(_beta: &[T]) -> T {
        T::one()
    }

    fn pressure_offset<T: Scalar>(_beta: &[T], _f_n: &Mat3<T>, xi_n: &[T]) -> T {
        // tr(R T R^T) / 3 = tr(T) / 3
        Self::stress(xi_n).trace().scale(1.0 / 3.0)
    }

    fn extra_invariants(beta: &[f64], xi_n: &[f64], branch: Branch) -> (f64, f64) {
        // the plastic rate is trace-free: tr(d phi / d T) = 0
        match branch {
            Branch::Plastic => {
                let coeff = Self::coefficients(&beta[R11..=R12]);
                let grad = Self::phi_gradient(&Self::stress(xi_n), &coeff);
                (0.0, grad.trace().abs())
            }
            Branch::Elastic => (0.0, 0.0),
        }
    }
}
