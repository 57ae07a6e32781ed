//! Small 3x3 tensor algebra generic over the AD scalar type.
//!
//! Symmetric tensors are stored with six independent components in the order
//! `[xx, yy, zz, xy, yz, xz]`; the Frobenius norm doubles the off-diagonal
//! contributions accordingly.

use crate::ad::Scalar;

/// Index order of the six independent components of a symmetric tensor.
pub const SYM_COMPONENTS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)];

/// A general (not necessarily symmetric) 3x3 tensor.
#[derive(Clone, Debug)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

/// A symmetric 3x3 tensor, six stored components.
#[derive(Clone, Debug)]
pub struct Sym3<T> {
    pub c: [T; 6],
}

impl<T: Scalar> Mat3<T> {
    pub fn zero() -> Self {
        Mat3 {
            m: std::array::from_fn(|_| std::array::from_fn(|_| T::zero())),
        }
    }

    pub fn identity() -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            out.m[i][i] = T::one();
        }
        out
    }

    pub fn from_fn(f: impl Fn(usize, usize) -> T) -> Self {
        Mat3 {
            m: std::array::from_fn(|i| std::array::from_fn(|j| f(i, j))),
        }
    }

    pub fn map_f64(src: &Mat3<f64>) -> Self {
        Self::from_fn(|i, j| T::from_f64(src.m[i][j]))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.m[j][i].clone())
    }

    pub fn matmul(&self, other: &Mat3<T>) -> Self {
        Self::from_fn(|i, j| {
            let mut s = self.m[i][0].clone() * &other.m[0][j];
            s = s + self.m[i][1].clone() * &other.m[1][j];
            s + self.m[i][2].clone() * &other.m[2][j]
        })
    }

    pub fn add(&self, other: &Mat3<T>) -> Self {
        Self::from_fn(|i, j| self.m[i][j].clone() + &other.m[i][j])
    }

    pub fn sub(&self, other: &Mat3<T>) -> Self {
        Self::from_fn(|i, j| self.m[i][j].clone() - &other.m[i][j])
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_fn(|i, j| self.m[i][j].scale(c))
    }

    pub fn scale_by(&self, c: &T) -> Self {
        Self::from_fn(|i, j| self.m[i][j].clone() * c)
    }

    pub fn trace(&self) -> T {
        self.m[0][0].clone() + &self.m[1][1] + &self.m[2][2]
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        let c0 = m[1][1].clone() * &m[2][2] - m[1][2].clone() * &m[2][1];
        let c1 = m[1][0].clone() * &m[2][2] - m[1][2].clone() * &m[2][0];
        let c2 = m[1][0].clone() * &m[2][1] - m[1][1].clone() * &m[2][0];
        m[0][0].clone() * &c0 - m[0][1].clone() * &c1 + m[0][2].clone() * &c2
    }

    /// Inverse by the adjugate; panics on a zero-valued determinant.
    pub fn inverse(&self) -> Self {
        let det = self.det();
        assert!(
            det.scalar() != 0.0,
            "attempted to invert a singular 3x3 tensor"
        );
        let inv_det = det.recip();
        let m = &self.m;
        let cof = |i: usize, j: usize| -> T {
            let r = [(i + 1) % 3, (i + 2) % 3];
            let c = [(j + 1) % 3, (j + 2) % 3];
            m[r[0]][c[0]].clone() * &m[r[1]][c[1]] - m[r[0]][c[1]].clone() * &m[r[1]][c[0]]
        };
        // adjugate transpose folded into the index swap
        Self::from_fn(|i, j| cof(j, i) * &inv_det)
    }

    /// Symmetric part `(A + A^T)/2`.
    pub fn sym(&self) -> Sym3<T> {
        Sym3 {
            c: std::array::from_fn(|k| {
                let (i, j) = SYM_COMPONENTS[k];
                (self.m[i][j].clone() + &self.m[j][i]).scale(0.5)
            }),
        }
    }

    /// Double contraction `A : B`.
    pub fn ddot(&self, other: &Mat3<T>) -> T {
        let mut s = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                s = s + self.m[i][j].clone() * &other.m[i][j];
            }
        }
        s
    }

    /// Matrix-vector product.
    pub fn mulvec(&self, v: &[T; 3]) -> [T; 3] {
        std::array::from_fn(|i| {
            self.m[i][0].clone() * &v[0] + self.m[i][1].clone() * &v[1] + self.m[i][2].clone() * &v[2]
        })
    }
}

impl<T: Scalar> Sym3<T> {
    pub fn zero() -> Self {
        Sym3 {
            c: std::array::from_fn(|_| T::zero()),
        }
    }

    pub fn identity() -> Self {
        let mut s = Self::zero();
        for k in 0..3 {
            s.c[k] = T::one();
        }
        s
    }

    pub fn from_slice(c: &[T]) -> Self {
        assert_eq!(c.len(), 6);
        Sym3 {
            c: std::array::from_fn(|k| c[k].clone()),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let k = match (i, j) {
            (0, 0) => 0,
            (1, 1) => 1,
            (2, 2) => 2,
            (0, 1) | (1, 0) => 3,
            (1, 2) | (2, 1) => 4,
            (0, 2) | (2, 0) => 5,
            _ => unreachable!(),
        };
        self.c[k].clone()
    }

    pub fn to_mat(&self) -> Mat3<T> {
        Mat3::from_fn(|i, j| self.get(i, j))
    }

    pub fn trace(&self) -> T {
        self.c[0].clone() + &self.c[1] + &self.c[2]
    }

    /// Deviatoric part: subtracts `tr/3` from the diagonal.
    pub fn dev(&self) -> Sym3<T> {
        let third = self.trace().scale(1.0 / 3.0);
        let mut out = self.clone();
        for k in 0..3 {
            out.c[k] = out.c[k].clone() - &third;
        }
        out
    }

    pub fn add(&self, other: &Sym3<T>) -> Sym3<T> {
        Sym3 {
            c: std::array::from_fn(|k| self.c[k].clone() + &other.c[k]),
        }
    }

    pub fn sub(&self, other: &Sym3<T>) -> Sym3<T> {
        Sym3 {
            c: std::array::from_fn(|k| self.c[k].clone() - &other.c[k]),
        }
    }

    pub fn scale(&self, c: f64) -> Sym3<T> {
        Sym3 {
            c: std::array::from_fn(|k| self.c[k].scale(c)),
        }
    }

    pub fn scale_by(&self, c: &T) -> Sym3<T> {
        Sym3 {
            c: std::array::from_fn(|k| self.c[k].clone() * c),
        }
    }

    /// Adds `c * I`.
    pub fn add_scaled_identity(&self, c: &T) -> Sym3<T> {
        let mut out = self.clone();
        for k in 0..3 {
            out.c[k] = out.c[k].clone() + c;
        }
        out
    }

    /// Frobenius norm with off-diagonal doubling.
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> T {
        let diag = self.c[0].clone() * &self.c[0]
            + self.c[1].clone() * &self.c[1]
            + self.c[2].clone() * &self.c[2];
        let off = self.c[3].clone() * &self.c[3]
            + self.c[4].clone() * &self.c[4]
            + self.c[5].clone() * &self.c[5];
        diag + off.scale(2.0)
    }

    pub fn det(&self) -> T {
        self.to_mat().det()
    }

    /// Congruence transform `F S F^T`, symmetric by construction.
    pub fn congruence(&self, f: &Mat3<T>) -> Sym3<T> {
        let fs = f.matmul(&self.to_mat());
        let full = fs.matmul(&f.transpose());
        // symmetric up to round-off; store the symmetric part
        full.sym()
    }
}

/// Polar decomposition `F = R U` via the Newton iteration
/// `R <- (R + R^{-T})/2`, which converges quadratically to the rotation
/// factor for `det F > 0`. The stopping test reads values only, so the
/// iteration is differentiable end to end.
pub fn polar_rotation<T: Scalar>(f: &Mat3<T>) -> Mat3<T> {
    assert!(
        f.det().scalar() > 0.0,
        "polar decomposition requires det F > 0, got {}",
        f.det().scalar()
    );
    let mut r = f.clone();
    let mut converged = false;
    for _ in 0..100 {
        let next = r.add(&r.inverse().transpose()).scale(0.5);
        let mut delta = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                delta = delta.max((next.m[i][j].scalar() - r.m[i][j].scalar()).abs());
            }
        }
        r = next;
        if delta <= 1e-15 {
            converged = true;
            break;
        }
    }
    assert!(converged, "polar decomposition iteration did not converge");
    // one extra step settles the derivative components
    r.add(&r.inverse().transpose()).scale(0.5)
}

/// Polar decomposition returning both factors, `F = R U`.
pub fn polar_decompose<T: Scalar>(f: &Mat3<T>) -> (Mat3<T>, Sym3<T>) {
    let r = polar_rotation(f);
    let u = r.transpose().matmul(f).sym();
    (r, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot_z(theta: f64) -> Mat3<f64> {
        let (s, c) = theta.sin_cos();
        let mut m = Mat3::identity();
        m.m[0][0] = c;
        m.m[0][1] = -s;
        m.m[1][0] = s;
        m.m[1][1] = c;
        m
    }

    #[test]
    fn inverse_of_random_matrix() {
        let a = Mat3 {
            m: [[2.0, 0.3, -0.1], [0.2, 1.5, 0.4], [-0.3, 0.1, 1.1]],
        };
        let ainv = a.inverse();
        let id = a.matmul(&ainv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((id.m[i][j] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn deviator_is_traceless() {
        let s = Sym3 {
            c: [1.0, 2.0, 3.0, 0.4, 0.5, 0.6],
        };
        assert!(s.dev().trace().abs() < 1e-15);
    }

    #[test]
    fn norm_doubles_off_diagonals() {
        let s = Sym3 {
            c: [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        };
        assert!((s.norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn polar_identity_and_stretch() {
        let (r, u) = polar_decompose(&Mat3::<f64>::identity());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((r.m[i][j] - expect).abs() < 1e-14);
                assert!((u.get(i, j) - expect).abs() < 1e-14);
            }
        }

        let mut f = Mat3::<f64>::identity();
        f.m[0][0] = 2.0;
        let (r, u) = polar_decompose(&f);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((r.m[i][j] - expect).abs() < 1e-12);
                assert!((u.get(i, j) - f.m[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn polar_pure_rotation() {
        let q = rot_z(0.7);
        let (r, u) = polar_decompose(&q);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.m[i][j] - q.m[i][j]).abs() < 1e-13);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((u.get(i, j) - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn polar_factors_reconstruct_f() {
        let f = Mat3 {
            m: [[1.1, 0.15, 0.02], [-0.08, 0.95, 0.1], [0.03, -0.05, 1.05]],
        };
        let (r, u) = polar_decompose(&f);
        let ru = r.matmul(&u.to_mat());
        for i in 0..3 {
            for j in 0..3 {
                assert!((ru.m[i][j] - f.m[i][j]).abs() < 1e-13);
            }
        }
        // R orthogonal with det +1
        let rtr = r.transpose().matmul(&r);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((rtr.m[i][j] - expect).abs() < 1e-13);
            }
        }
        assert!((r.det() - 1.0).abs() < 1e-13);
        // U symmetric positive definite: check eigen-ish via leading minors
        assert!(u.get(0, 0) > 0.0);
        assert!(u.to_mat().det() > 0.0);
    }
}
