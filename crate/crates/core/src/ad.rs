//! Forward-mode automatic differentiation with explicit seeding.
//!
//! A [`Dual`] carries a value and a derivative array whose length is fixed
//! when the expression is seeded. Three seed dimensions occur in practice:
//! the local-state dimension (8 or 7), the element dof dimension (16), and
//! the number of active material parameters. All duals combined in one
//! expression must share the same derivative length; mixing lengths is a
//! programming error and panics.
//!
//! An unseeded dual stores an empty derivative array, which behaves like an
//! all-zero array of whatever the ambient dimension is. Residual evaluations
//! seed exactly the variables they differentiate with respect to and leave
//! everything else unseeded.
//!
//! Branch predicates must read values only ([`Scalar::scalar`]); derivative
//! arrays never influence control flow.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Inline capacity of the derivative array. The three seed modes (local
/// state, element dofs, active parameters) all fit in 16 entries, so
/// derivative propagation never touches the heap.
pub const MAX_DERIVS: usize = 16;

/// Arithmetic closed over both `f64` and [`Dual`], so residuals are written
/// once and evaluated either as plain values or with derivative propagation.
///
/// The supported primitive set is `{+, -, *, /, exp, ln, sqrt, powi, powf}`
/// plus value comparisons through [`Scalar::scalar`]. `Dual<Dual<f64>>`
/// implements the trait as well, which is how nested derivatives (e.g. a
/// yield-surface normal inside a residual) are obtained.
pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn zero() -> Self;
    fn one() -> Self;

    /// The innermost (primal) value. All branch predicates go through this.
    fn scalar(&self) -> f64;

    /// Multiplication by a plain constant.
    fn scale(&self, c: f64) -> Self;

    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn powf(&self, c: f64) -> Self;
    fn recip(&self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn scalar(&self) -> f64 {
        *self
    }
    #[inline]
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    #[inline]
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    #[inline]
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    #[inline]
    fn powf(&self, c: f64) -> Self {
        f64::powf(*self, c)
    }
    #[inline]
    fn recip(&self) -> Self {
        1.0 / self
    }
}

/// A forward-mode AD scalar: a value plus a derivative array of at most
/// `CAP` entries, stored inline as a zero-padded fixed array with an active
/// length.
///
/// The component type defaults to `f64`; `Dual<Dual<f64>, N>` nests a second
/// derivative direction for the few places that need derivatives of
/// derivatives (nesting with a reduced capacity keeps the value size in
/// check).
#[derive(Clone, Debug)]
pub struct Dual<T = f64, const CAP: usize = MAX_DERIVS> {
    val: T,
    len: usize,
    der: [T; CAP],
}

#[inline]
fn zeros<T: Scalar, const CAP: usize>() -> [T; CAP] {
    std::array::from_fn(|_| T::zero())
}

impl<T: Scalar, const CAP: usize> Dual<T, CAP> {
    /// An unseeded dual: its derivative array is all zeros at any ambient
    /// dimension (stored empty).
    pub fn constant(val: T) -> Self {
        Dual {
            val,
            len: 0,
            der: zeros(),
        }
    }

    /// Seed with a unit derivative: entry `index` of a length-`dim` array is
    /// one, all others zero.
    ///
    /// Panics if `index >= dim`.
    pub fn seed_unit(val: T, index: usize, dim: usize) -> Self {
        assert!(
            index < dim,
            "seed index {index} out of range for derivative dimension {dim}"
        );
        assert!(dim <= CAP, "derivative dimension {dim} exceeds capacity {CAP}");
        let mut der = zeros();
        der[index] = T::one();
        Dual {
            val,
            len: dim,
            der,
        }
    }

    /// Seed with a full derivative row, e.g. a previously computed
    /// sensitivity `dxi/dU` when evaluating a residual for its total
    /// derivative.
    pub fn seed_row(val: T, row: Vec<T>) -> Self {
        assert!(row.len() <= CAP, "derivative row exceeds capacity {CAP}");
        let mut der = zeros();
        let len = row.len();
        for (slot, v) in der.iter_mut().zip(row) {
            *slot = v;
        }
        Dual { val, len, der }
    }

    pub fn value(&self) -> &T {
        &self.val
    }

    /// Derivative dimension; 0 for an unseeded dual.
    #[inline]
    pub fn dim(&self) -> usize {
        self.len
    }

    /// The `i`-th derivative component (zero for an unseeded dual).
    #[inline]
    pub fn deriv(&self, i: usize) -> T {
        self.der[..self.len].get(i).cloned().unwrap_or_else(T::zero)
    }

    #[inline]
    pub fn derivs(&self) -> &[T] {
        &self.der[..self.len]
    }

    fn unary(&self, val: T, slope: T) -> Self {
        let mut der = zeros();
        for k in 0..self.len {
            der[k] = slope.clone() * &self.der[k];
        }
        Dual {
            val,
            len: self.len,
            der,
        }
    }
}

impl<const CAP: usize> Dual<f64, CAP> {
    /// Derivative array as plain floats.
    pub fn grad(&self, dim: usize) -> Vec<f64> {
        (0..dim).map(|i| self.deriv(i)).collect()
    }
}

/// Seed a batch of values with the rows of a derivative matrix.
///
/// Each value receives the corresponding row; a row of zeros yields a dual
/// indistinguishable from an unseeded one. Panics if the number of rows does
/// not match the number of values or the rows have inconsistent lengths.
pub fn seed_matrix<T: Scalar>(values: &[T], rows: &[Vec<T>]) -> Vec<Dual<T>> {
    if let Some(first) = rows.first() {
        assert!(
            first.len() <= MAX_DERIVS,
            "derivative rows exceed capacity {MAX_DERIVS}"
        );
    }
    assert_eq!(
        values.len(),
        rows.len(),
        "seed_matrix: {} values but {} derivative rows",
        values.len(),
        rows.len()
    );
    if let Some(first) = rows.first() {
        let n = first.len();
        assert!(
            rows.iter().all(|r| r.len() == n),
            "seed_matrix: inconsistent row lengths"
        );
    }
    values
        .iter()
        .zip(rows)
        .map(|(v, r)| Dual::seed_row(v.clone(), r.clone()))
        .collect()
}

#[inline]
fn check_dims(la: usize, lb: usize) -> usize {
    if la == 0 {
        return lb;
    }
    if lb == 0 {
        return la;
    }
    assert_eq!(la, lb, "derivative dimension mismatch: {la} vs {lb}");
    la
}

/// `ca*da + cb*db` over the active lanes, treating a zero-length array as
/// zeros of the other's length.
fn dual_mul<T: Scalar, const CAP: usize>(a: &Dual<T, CAP>, b: &Dual<T, CAP>) -> Dual<T, CAP> {
    let len = check_dims(a.len, b.len);
    let mut der = zeros();
    match (a.len == 0, b.len == 0) {
        (false, false) => {
            for k in 0..len {
                der[k] = b.val.clone() * &a.der[k] + a.val.clone() * &b.der[k];
            }
        }
        (false, true) => {
            for k in 0..len {
                der[k] = b.val.clone() * &a.der[k];
            }
        }
        (true, false) => {
            for k in 0..len {
                der[k] = a.val.clone() * &b.der[k];
            }
        }
        (true, true) => {}
    }
    Dual {
        val: a.val.clone() * &b.val,
        len,
        der,
    }
}

fn dual_add<T: Scalar, const CAP: usize>(a: &Dual<T, CAP>, b: &Dual<T, CAP>) -> Dual<T, CAP> {
    let len = check_dims(a.len, b.len);
    let mut der = zeros();
    match (a.len == 0, b.len == 0) {
        (false, false) => {
            for k in 0..len {
                der[k] = a.der[k].clone() + &b.der[k];
            }
        }
        (false, true) => der[..len].clone_from_slice(&a.der[..len]),
        (true, false) => der[..len].clone_from_slice(&b.der[..len]),
        (true, true) => {}
    }
    Dual {
        val: a.val.clone() + &b.val,
        len,
        der,
    }
}

fn dual_sub<T: Scalar, const CAP: usize>(a: &Dual<T, CAP>, b: &Dual<T, CAP>) -> Dual<T, CAP> {
    let len = check_dims(a.len, b.len);
    let mut der = zeros();
    match (a.len == 0, b.len == 0) {
        (false, false) => {
            for k in 0..len {
                der[k] = a.der[k].clone() - &b.der[k];
            }
        }
        (false, true) => der[..len].clone_from_slice(&a.der[..len]),
        (true, false) => {
            for k in 0..len {
                der[k] = -b.der[k].clone();
            }
        }
        (true, true) => {}
    }
    Dual {
        val: a.val.clone() - &b.val,
        len,
        der,
    }
}

fn dual_div<T: Scalar, const CAP: usize>(a: &Dual<T, CAP>, b: &Dual<T, CAP>) -> Dual<T, CAP> {
    assert!(b.val.scalar() != 0.0, "division by a zero-valued dual");
    let inv_b = b.val.recip();
    // d(a/b) = da/b - a*db/b^2
    let val = a.val.clone() * &inv_b;
    let cb = -(val.clone() * &inv_b);
    let len = check_dims(a.len, b.len);
    let mut der = zeros();
    match (a.len == 0, b.len == 0) {
        (false, false) => {
            for k in 0..len {
                der[k] = inv_b.clone() * &a.der[k] + cb.clone() * &b.der[k];
            }
        }
        (false, true) => {
            for k in 0..len {
                der[k] = inv_b.clone() * &a.der[k];
            }
        }
        (true, false) => {
            for k in 0..len {
                der[k] = cb.clone() * &b.der[k];
            }
        }
        (true, true) => {}
    }
    Dual { val, len, der }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $func:ident) => {
        impl<T: Scalar, const CAP: usize> $trait for Dual<T, CAP> {
            type Output = Dual<T, CAP>;
            fn $method(self, rhs: Dual<T, CAP>) -> Dual<T, CAP> {
                $func(&self, &rhs)
            }
        }
        impl<'a, T: Scalar, const CAP: usize> $trait<&'a Dual<T, CAP>> for Dual<T, CAP> {
            type Output = Dual<T, CAP>;
            fn $method(self, rhs: &'a Dual<T, CAP>) -> Dual<T, CAP> {
                $func(&self, rhs)
            }
        }
        impl<'a, T: Scalar, const CAP: usize> $trait<Dual<T, CAP>> for &'a Dual<T, CAP> {
            type Output = Dual<T, CAP>;
            fn $method(self, rhs: Dual<T, CAP>) -> Dual<T, CAP> {
                $func(self, &rhs)
            }
        }
        impl<'a, 'b, T: Scalar, const CAP: usize> $trait<&'b Dual<T, CAP>> for &'a Dual<T, CAP> {
            type Output = Dual<T, CAP>;
            fn $method(self, rhs: &'b Dual<T, CAP>) -> Dual<T, CAP> {
                $func(self, rhs)
            }
        }
    };
}

impl_binop!(Add, add, dual_add);
impl_binop!(Sub, sub, dual_sub);
impl_binop!(Mul, mul, dual_mul);
impl_binop!(Div, div, dual_div);

impl<T: Scalar, const CAP: usize> Neg for Dual<T, CAP> {
    type Output = Dual<T, CAP>;
    fn neg(self) -> Dual<T, CAP> {
        -&self
    }
}

impl<'a, T: Scalar, const CAP: usize> Neg for &'a Dual<T, CAP> {
    type Output = Dual<T, CAP>;
    fn neg(self) -> Dual<T, CAP> {
        let mut der = zeros();
        for k in 0..self.len {
            der[k] = -self.der[k].clone();
        }
        Dual {
            val: -self.val.clone(),
            len: self.len,
            der,
        }
    }
}

impl<T: Scalar, const CAP: usize> Scalar for Dual<T, CAP> {
    fn from_f64(x: f64) -> Self {
        Dual::constant(T::from_f64(x))
    }
    fn zero() -> Self {
        Dual::constant(T::zero())
    }
    fn one() -> Self {
        Dual::constant(T::one())
    }
    fn scalar(&self) -> f64 {
        self.val.scalar()
    }
    fn scale(&self, c: f64) -> Self {
        let mut der = zeros();
        for k in 0..self.len {
            der[k] = self.der[k].scale(c);
        }
        Dual {
            val: self.val.scale(c),
            len: self.len,
            der,
        }
    }
    fn exp(&self) -> Self {
        let v = self.val.exp();
        self.unary(v.clone(), v)
    }
    fn ln(&self) -> Self {
        assert!(
            self.val.scalar() > 0.0,
            "ln of non-positive dual value {}",
            self.val.scalar()
        );
        self.unary(self.val.ln(), self.val.recip())
    }
    fn sqrt(&self) -> Self {
        let x = self.val.scalar();
        assert!(x >= 0.0, "sqrt of negative dual value {x}");
        assert!(
            x > 0.0 || self.len == 0,
            "sqrt of a seeded dual at zero: derivative undefined"
        );
        let r = self.val.sqrt();
        if self.len == 0 {
            return Dual::constant(r);
        }
        let slope = r.recip().scale(0.5);
        self.unary(r, slope)
    }
    fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Dual::constant(T::one());
        }
        assert!(
            n > 0 || self.val.scalar() != 0.0,
            "negative integer power of a zero-valued dual"
        );
        let slope = self.val.powi(n - 1).scale(n as f64);
        self.unary(self.val.powi(n), slope)
    }
    fn powf(&self, c: f64) -> Self {
        assert!(
            self.val.scalar() > 0.0,
            "powf requires a positive base, got {}",
            self.val.scalar()
        );
        let slope = self.val.powf(c - 1.0).scale(c);
        self.unary(self.val.powf(c), slope)
    }
    fn recip(&self) -> Self {
        assert!(self.val.scalar() != 0.0, "recip of a zero-valued dual");
        let inv = self.val.recip();
        let slope = -(inv.clone() * &inv);
        self.unary(inv, slope)
    }
}
