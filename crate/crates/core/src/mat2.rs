//! 2×2 matrix helpers. Column index = state before, row index = state after.

pub type Mat2 = [[f64; 2]; 2];
pub type Vec2 = [f64; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

#[inline]
pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

#[inline]
pub fn apply(a: &Mat2, v: &Vec2) -> Vec2 {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

#[inline]
pub fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

#[inline]
pub fn column_sums(a: &Mat2) -> Vec2 {
    [a[0][0] + a[1][0], a[0][1] + a[1][1]]
}

#[inline]
pub fn max_entry(a: &Mat2) -> f64 {
    a[0][0].max(a[0][1]).max(a[1][0]).max(a[1][1])
}

#[inline]
pub fn scale(a: &Mat2, s: f64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

/// Unit vector for a state.
#[inline]
pub fn basis(state: crate::IonState) -> Vec2 {
    match state {
        crate::IonState::Bright => [1.0, 0.0],
        crate::IonState::Dark => [0.0, 1.0],
    }
}
