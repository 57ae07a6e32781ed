//! Constitutive models as coupled residual implementations.
//!
//! A model contributes two things: the per-element local residual governing
//! the evolution of its internal variables, and the stress pieces the global
//! equilibrium residual needs. Both are written once, generically over the
//! AD scalar, so every Jacobian block in the forward solver and in the
//! sensitivity engines comes out of seeding and re-evaluating the same code.

use crate::ad::Scalar;
use crate::tensor::{Mat3, Sym3};

pub mod hill;
pub mod j2;

pub use hill::Hill;
pub use j2::J2;

/// Which branch of the local residual applies. The trial yield check in the
/// forward solve decides it, and the choice is recorded per element per step
/// so the sensitivity passes replay the exact same equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Elastic,
    Plastic,
}

/// A finite-deformation elastoplastic constitutive model expressed through
/// residuals. All methods are stateless; the local state vector layout is
/// model-specific with the equivalent plastic strain at `ALPHA_INDEX`.
pub trait Model {
    /// Number of local state variables (independent residual equations).
    const LOCAL_DIM: usize;
    /// Length of the material parameter vector.
    const PARAM_DIM: usize;
    const NAME: &'static str;

    fn param_names() -> &'static [&'static str];

    /// Local state at the start of loading.
    fn virgin_state() -> Vec<f64>;

    /// Index of the equivalent plastic strain within the local state.
    const ALPHA_INDEX: usize;

    /// Shear modulus, used by the stabilization parameter.
    fn shear_modulus<T: Scalar>(beta: &[T]) -> T;

    /// The kinematic quantity entering the local residual that does not
    /// depend on the current local state (the trial elastic strain for the
    /// hyperelastic model, the unrotated rate of deformation for the
    /// hypoelastic one). Computing it once per local solve keeps the Newton
    /// iterations cheap; it carries derivative information whenever its
    /// inputs are seeded.
    fn kinematic_state<T: Scalar>(f_n: &Mat3<T>, f_prev: &Mat3<T>, xi_prev: &[T]) -> Sym3<T>;

    /// The discrete constitutive evolution residual for the given branch,
    /// with the kinematic state supplied by [`Model::kinematic_state`].
    fn local_residual_at<T: Scalar>(
        beta: &[T],
        kin: &Sym3<T>,
        xi_n: &[T],
        xi_prev: &[T],
        branch: Branch,
    ) -> Vec<T>;

    /// Elastic predictor: the trial local state and the trial yield function
    /// value.
    fn trial_state<T: Scalar>(
        beta: &[T],
        f_n: &Mat3<T>,
        f_prev: &Mat3<T>,
        xi_prev: &[T],
    ) -> (Vec<T>, T);

    /// The discrete constitutive evolution residual for the given branch.
    fn local_residual<T: Scalar>(
        beta: &[T],
        f_n: &Mat3<T>,
        f_prev: &Mat3<T>,
        xi_n: &[T],
        xi_prev: &[T],
        branch: Branch,
    ) -> Vec<T> {
        let kin = Self::kinematic_state(f_n, f_prev, xi_prev);
        Self::local_residual_at(beta, &kin, xi_n, xi_prev, branch)
    }

    /// Deviatoric Kirchhoff-type stress entering the momentum residual.
    fn kirchhoff_deviator<T: Scalar>(beta: &[T], f_n: &Mat3<T>, xi_n: &[T]) -> Sym3<T>;

    /// Factor multiplying `p` in the pressure-constraint integrand
    /// (`1/kappa` for the hyperelastic model, `1` for the hypoelastic one).
    fn pressure_coefficient<T: Scalar>(beta: &[T]) -> T;

    /// State-dependent, element-constant part of the pressure-constraint
    /// integrand.
    fn pressure_offset<T: Scalar>(beta: &[T], f_n: &Mat3<T>, xi_n: &[T]) -> T;

    /// Model-specific invariant magnitudes at a converged state, for
    /// trajectory validation: `(isochoric deviation, plastic flow trace)`.
    /// Models report zero for invariants they do not carry.
    fn extra_invariants(beta: &[f64], xi_n: &[f64], branch: Branch) -> (f64, f64);
}

/// Material parameter vector with activity flags and box bounds; the
/// calibration operates on the active subset only.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ParamSet {
    pub values: Vec<f64>,
    pub active: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamSet {
    pub fn new(values: Vec<f64>, active: Vec<bool>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(values.len(), active.len());
        assert_eq!(values.len(), lower.len());
        assert_eq!(values.len(), upper.len());
        ParamSet {
            values,
            active,
            lower,
            upper,
        }
    }

    pub fn all_active(values: Vec<f64>) -> Self {
        let n = values.len();
        ParamSet {
            values,
            active: vec![true; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Indices of active parameters in vector order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.active[i]).collect()
    }

    /// Seeds the active parameters as unit derivative directions; inactive
    /// entries stay constant.
    pub fn seed_active(&self) -> Vec<crate::ad::Dual> {
        let dim = self.n_active();
        let mut out = Vec::with_capacity(self.values.len());
        let mut slot = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if self.active[i] {
                out.push(crate::ad::Dual::seed_unit(v, slot, dim));
                slot += 1;
            } else {
                out.push(crate::ad::Dual::constant(v));
            }
        }
        out
    }
}
