//! Hyperelastic-plastic model with a Mises-Huber yield condition and
//! combined linear/Voce isotropic hardening.
//!
//! Local state (8 components): the deviatoric part of the volume-preserving
//! elastic left Cauchy-Green tensor (6 symmetric components), its spherical
//! part, and the equivalent plastic strain:
//! `xi = [z_xx, z_yy, z_zz, z_xy, z_yz, z_xz, Ie, alpha]`.
//!
//! Parameters: `beta = [E, nu, Y, K, S, D]`.

use super::{Branch, Model};
use crate::ad::Scalar;
use crate::tensor::{Mat3, Sym3};

pub struct J2;

pub const E: usize = 0;
pub const NU: usize = 1;
pub const Y: usize = 2;
pub const K: usize = 3;
pub const S: usize = 4;
pub const D: usize = 5;

const SQRT_2_3: f64 = 0.816496580927726; // sqrt(2/3)
const TWO_SQRT_3_2: f64 = 2.449489742783178; // 2 sqrt(3/2)

impl J2 {
    /// Bulk and shear moduli `(kappa, mu)` from Young's modulus and Poisson
    /// ratio. Panics at the incompressible limit `nu = 1/2`.
    pub fn elastic_moduli<T: Scalar>(beta: &[T]) -> (T, T) {
        let e = &beta[E];
        let nu = &beta[NU];
        let denom = (T::one() - nu.scale(2.0)).scale(3.0);
        assert!(
            denom.scalar() != 0.0,
            "bulk modulus undefined at the incompressible limit nu = 1/2"
        );
        let kappa = e.clone() / &denom;
        let mu = e.clone() / &(T::one() + nu).scale(2.0);
        (kappa, mu)
    }

    /// Flow stress `Y + K a + S (1 - exp(-D a))`.
    pub fn yield_stress<T: Scalar>(alpha: &T, beta: &[T]) -> T {
        let lin = beta[Y].clone() + beta[K].clone() * alpha;
        let sat = beta[S].clone() * &(T::one() - (-(beta[D].clone() * alpha)).exp());
        lin + sat
    }

    /// Trial volume-preserving elastic strain from the relative deformation
    /// gradient: `b_trial = fbar (zeta_prev + Ie_prev I) fbar^T`.
    fn trial_b<T: Scalar>(f_n: &Mat3<T>, f_prev: &Mat3<T>, xi_prev: &[T]) -> Sym3<T> {
        let f_rel = f_n.matmul(&f_prev.inverse());
        let det = f_rel.det();
        assert!(det.scalar() > 0.0, "relative deformation gradient not invertible");
        let fbar = f_rel.scale_by(&det.powf(-1.0 / 3.0));
        let b_prev = Sym3::from_slice(&xi_prev[0..6]).add_scaled_identity(&xi_prev[6]);
        b_prev.congruence(&fbar)
    }
}

impl Model for J2 {
    const LOCAL_DIM: usize = 8;
    const PARAM_DIM: usize = 6;
    const NAME: &'static str = "j2";
    const ALPHA_INDEX: usize = 7;

    fn param_names() -> &'static [&'static str] {
        &["E", "nu", "Y", "K", "S", "D"]
    }

    fn virgin_state() -> Vec<f64> {
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
    }

    fn shear_modulus<T: Scalar>(beta: &[T]) -> T {
        Self::elastic_moduli(beta).1
    }

    fn kinematic_state<T: Scalar>(f_n: &Mat3<T>, f_prev: &Mat3<T>, xi_prev: &[T]) -> Sym3<T> {
        Self::trial_b(f_n, f_prev, xi_prev)
    }

    fn trial_state<T: Scalar>(
        beta: &[T],
        f_n: &Mat3<T>,
        f_prev: &Mat3<T>,
        xi_prev: &[T],
    ) -> (Vec<T>, T) {
        let (_, mu) = Self::elastic_moduli(beta);
        let b_trial = Self::trial_b(f_n, f_prev, xi_prev);
        let zeta_trial = b_trial.dev();
        let ie_trial = b_trial.trace().scale(1.0 / 3.0);
        let alpha_trial = xi_prev[7].clone();

        let s_trial = zeta_trial.scale_by(&mu);
        let f_trial =
            s_trial.norm() - Self::yield_stress(&alpha_trial, beta).scale(SQRT_2_3);

        let mut xi_trial = zeta_trial.c.to_vec();
        xi_trial.push(ie_trial);
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
        let b_trial = kin.clone();
        match branch {
            Branch::Elastic => {
                // xi_n - xi_trial, componentwise
                let zeta_trial = b_trial.dev();
                let ie_trial = b_trial.trace().scale(1.0 / 3.0);
                let mut out: Vec<T> = (0..6)
                    .map(|k| xi_n[k].clone() - &zeta_trial.c[k])
                    .collect();
                out.push(xi_n[6].clone() - &ie_trial);
                out.push(xi_n[7].clone() - &xi_prev[7]);
                out
            }
            Branch::Plastic => {
                let (_, mu) = Self::elastic_moduli(beta);
                let zeta_n = Sym3::from_slice(&xi_n[0..6]);
                let ie_n = &xi_n[6];
                let alpha_n = &xi_n[7];
                let s_n = zeta_n.scale_by(&mu);
                let s_norm = s_n.norm();
                assert!(
                    s_norm.scalar() > 0.0,
                    "plastic flow direction undefined at zero deviatoric stress"
                );
                let normal = s_n.scale_by(&s_norm.recip());

                // flow rule: zeta_n - dev(b_trial)
                //            + 2 sqrt(3/2) (alpha_n - alpha_prev) Ie_n n = 0
                let coef = (alpha_n.clone() - &xi_prev[7])
                    .scale(TWO_SQRT_3_2)
                    * ie_n;
                let flow = zeta_n
                    .sub(&b_trial.dev())
                    .add(&normal.scale_by(&coef));

                let mut out = flow.c.to_vec();
                // isochoric constraint: det(zeta_n + Ie_n I) = 1
                out.push(zeta_n.add_scaled_identity(ie_n).det() - T::one());
                // consistency: |s| = sqrt(2/3) sigma_y(alpha_n)
                out.push(s_norm - Self::yield_stress(alpha_n, beta).scale(SQRT_2_3));
                out
            }
        }
    }

    fn kirchhoff_deviator<T: Scalar>(beta: &[T], _f_n: &Mat3<T>, xi_n: &[T]) -> Sym3<T> {
        let (_, mu) = Self::elastic_moduli(beta);
        Sym3::from_slice(&xi_n[0..6]).scale_by(&mu)
    }

    fn pressure_coefficient<T: Scalar>(beta: &[T]) -> T {
        Self::elastic_moduli(beta).0.recip()
    }

    fn pressure_offset<T: Scalar>(_beta: &[T], f_n: &Mat3<T>, _xi_n: &[T]) -> T {
        // (J^2 - 1) / (2J)
        let j = f_n.det();
        (j.clone() * &j - T::one()) / &j.scale(2.0)
    }

    fn extra_invariants(_beta: &[f64], xi_n: &[f64], _branch: Branch) -> (f64, f64) {
        // volume preservation of the elastic strain: det(zeta + Ie I) = 1
        let b = Sym3::from_slice(&xi_n[0..6]).add_scaled_identity(&xi_n[6]);
        ((b.det() - 1.0).abs(), 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BETA: [f64; 6] = [1000.0, 0.25, 2.0, 100.0, 0.0, 0.0];

    #[test]
    fn elastic_moduli_formulas() {
        let (kappa, mu) = J2::elastic_moduli(&BETA);
        assert!((mu - 400.0).abs() < 1e-12);
        assert!((kappa - 2000.0 / 3.0).abs() < 1e-12);

        let (kappa, mu) = J2::elastic_moduli(&[1000.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        assert!((kappa - 1000.0 / 3.0).abs() < 1e-12);
        assert!((mu - 500.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "incompressible")]
    fn incompressible_limit_panics() {
        let _ = J2::elastic_moduli(&[1000.0, 0.5, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn yield_stress_examples() {
        // alpha = 0 collapses to Y
        assert_eq!(J2::yield_stress(&0.0, &BETA), 2.0);

        // S = D = 0 reduces to linear hardening
        let sy = J2::yield_stress(&0.1, &BETA);
        assert!((sy - (2.0 + 100.0 * 0.1)).abs() < 1e-14);

        // saturation: at D*alpha = 50 the Voce term is Y + K a + S
        let beta = [1000.0, 0.25, 2.0, 10.0, 5.0, 500.0];
        let alpha = 0.1; // D*alpha = 50
        let sy = J2::yield_stress(&alpha, &beta);
        assert!((sy - (2.0 + 1.0 + 5.0)).abs() < 1e-12);
    }

    #[test]
    fn trial_state_undeformed() {
        let xi0 = J2::virgin_state();
        let eye = Mat3::<f64>::identity();
        let (xi_trial, f_trial) = J2::trial_state(&BETA.to_vec(), &eye, &eye, &xi0);
        for k in 0..6 {
            assert!(xi_trial[k].abs() < 1e-15);
        }
        assert!((xi_trial[6] - 1.0).abs() < 1e-15);
        assert_eq!(xi_trial[7], 0.0);
        assert!((f_trial + (2.0f64 / 3.0).sqrt() * 2.0).abs() < 1e-14);
    }

    #[test]
    fn trial_state_pure_rotation_is_objective() {
        let xi0 = J2::virgin_state();
        let theta: f64 = 0.3;
        let (s, c) = theta.sin_cos();
        let mut rot = Mat3::<f64>::identity();
        rot.m[0][0] = c;
        rot.m[0][1] = -s;
        rot.m[1][0] = s;
        rot.m[1][1] = c;
        let eye = Mat3::<f64>::identity();
        let (xi_trial, f_trial) = J2::trial_state(&BETA.to_vec(), &rot, &eye, &xi0);
        let (_, f_ref) = J2::trial_state(&BETA.to_vec(), &eye, &eye, &xi0);
        assert!((f_trial - f_ref).abs() < 1e-13);
        for k in 0..6 {
            assert!(xi_trial[k].abs() < 1e-14);
        }
        assert!((xi_trial[6] - 1.0).abs() < 1e-14);
    }

    /// Below yield, the evolved state reproduces the hyperelastic response
    /// computed directly from the total deformation gradient.
    #[test]
    fn elastic_update_matches_direct_hyperelasticity() {
        let beta = BETA.to_vec();
        let (_, mu) = J2::elastic_moduli(&beta);
        // small uniaxial stretch, two increments
        let stretch = |l: f64| {
            let mut f = Mat3::<f64>::identity();
            f.m[1][1] = l;
            f
        };
        let f1 = stretch(1.0005);
        let f2 = stretch(1.001);
        let eye = Mat3::<f64>::identity();
        let xi0 = J2::virgin_state();

        let (xi1, ft1) = J2::trial_state(&beta, &f1, &eye, &xi0);
        assert!(ft1 < 0.0, "step 1 must stay elastic, f_trial = {ft1}");
        let (xi2, ft2) = J2::trial_state(&beta, &f2, &f1, &xi1);
        assert!(ft2 < 0.0, "step 2 must stay elastic, f_trial = {ft2}");

        // direct evaluation from the total F
        let j = f2.det();
        let b_bar = f2.matmul(&f2.transpose()).sym().scale(j.powf(-2.0 / 3.0));
        let s_direct = b_bar.dev().scale(mu);
        let s_evolved = Sym3::from_slice(&xi2[0..6]).scale(mu);
        for k in 0..6 {
            assert!(
                (s_direct.c[k] - s_evolved.c[k]).abs() < 1e-10,
                "component {k}: {} vs {}",
                s_direct.c[k],
                s_evolved.c[k]
            );
        }
        assert!((Sym3::from_slice(&xi2[0..6]).add_scaled_identity(&xi2[6]).det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn elastic_residual_vanishes_at_trial() {
        let beta = BETA.to_vec();
        let mut f = Mat3::<f64>::identity();
        f.m[1][1] = 1.002;
        f.m[0][1] = 0.0004;
        let eye = Mat3::<f64>::identity();
        let xi0 = J2::virgin_state();
        let (xi_trial, _) = J2::trial_state(&beta, &f, &eye, &xi0);
        let c = J2::local_residual(&beta, &f, &eye, &xi_trial, &xi0, Branch::Elastic);
        for (k, v) in c.iter().enumerate() {
            assert!(v.abs() < 1e-15, "residual component {k} = {v}");
        }
    }
}
