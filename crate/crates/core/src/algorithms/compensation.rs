use crate::scalar::Real;

/// Below this magnitude a coefficient estimate is treated as exactly linear.
pub const EPS_B: f64 = 1e-8;

/// Running count of compensation evaluations and clamped discriminants.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CompensationStats {
    pub evaluations: u64,
    pub clamped: u64,
}

impl CompensationStats {
    pub fn merge(&mut self, other: &CompensationStats) {
        self.evaluations += other.evaluations;
        self.clamped += other.clamped;
    }
}

/// Principal root of `b̂ d² + d − d̃ = 0`.
///
/// Evaluated as `2d̃ / (1 + √(1 + 4b̂d̃))`, which equals
/// `(−1 + √(1 + 4b̂d̃)) / (2b̂)` but does not cancel catastrophically for
/// small `b̂`. A negative discriminant is clamped to zero, giving `−1/(2b̂)`.
#[inline]
pub fn compensate_measurement<T: Real>(d_tilde: T, b_hat: T, stats: &mut CompensationStats) -> T {
    stats.evaluations += 1;
    if b_hat.abs() < T::lit(EPS_B) {
        return d_tilde;
    }
    let disc = T::one() + T::lit(4.0) * b_hat * d_tilde;
    if disc < T::zero() {
        stats.clamped += 1;
        return -T::one() / (T::two() * b_hat);
    }
    T::two() * d_tilde / (T::one() + disc.sqrt())
}

/// Elementwise [`compensate_measurement`] of a received vector.
pub fn compensate_intermediate<T: Real>(
    phi_tilde: &[T],
    b_hat_l: T,
    stats: &mut CompensationStats,
) -> Vec<T> {
    let mut out = phi_tilde.to_vec();
    compensate_in_place(&mut out, b_hat_l, stats);
    out
}

pub(crate) fn compensate_in_place<T: Real>(v: &mut [T], b_hat_l: T, stats: &mut CompensationStats) {
    for x in v.iter_mut() {
        *x = compensate_measurement(*x, b_hat_l, stats);
    }
}
