//! Fixed-size 2-vectors and 2×2 matrices.

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub const ZERO2: Mat2 = [[0.0; 2]; 2];
pub const IDENTITY2: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

#[inline]
pub fn outer(a: Vec2, b: Vec2) -> Mat2 {
    [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
}

#[inline]
pub fn scale(m: &Mat2, s: f64) -> Mat2 {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

#[inline]
pub fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

#[inline]
pub fn trace(m: &Mat2) -> f64 {
    m[0][0] + m[1][1]
}

#[inline]
pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Frobenius norm.
pub fn frobenius(m: &Mat2) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Eigenvalues `(low, high)` of a symmetric matrix in closed form.
///
/// Uses the half-trace plus the hypotenuse of the half-difference and the
/// off-diagonal entry, which stays accurate when the two eigenvalues nearly
/// coincide.
pub fn sym_eigenvalues(m: &Mat2) -> (f64, f64) {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let off = 0.5 * (m[0][1] + m[1][0]);
    let radius = half_diff.hypot(off);
    (mean - radius, mean + radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal_are_sorted_entries() {
        assert_eq!(sym_eigenvalues(&[[3.0, 0.0], [0.0, -2.0]]), (-2.0, 3.0));
    }

    #[test]
    fn eigenvalues_of_swap_matrix() {
        let (lo, hi) = sym_eigenvalues(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!((lo, hi), (-1.0, 1.0));
    }

    #[test]
    fn determinant_and_trace() {
        let m = [[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(det(&m), -2.0);
        assert_eq!(trace(&m), 5.0);
    }
}
