//! Per-node arithmetic cost of one iteration.
//!
//! [`operation_counts`] gives the closed-form table values; [`Counted`] is an
//! `f64` wrapper that tallies every arithmetic operation in thread-local
//! counters so [`instrumented_counts`] can measure what the implementation
//! actually executes.

use std::cell::Cell;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{
    Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign,
};

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};

use super::{
    compensate_intermediate, CompensationStats, NodeState, SonecVariant, StepData, StepSizes,
};
use super::{dlms, sonec, LinkModel};
use crate::scalar::Real;
use crate::topology::{uniform_weights, NetworkTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Dlms,
    SonecDlms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub adds: u64,
    pub mults: u64,
    pub nonlinear: u64,
}

impl fmt::Display for OpCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.adds, self.mults, self.nonlinear)
    }
}

/// Closed-form cost per node and iteration for a neighborhood of `n_k`
/// nodes (self included) and filter length `l`.
pub fn operation_counts(algorithm: Algorithm, n_k: u64, l: u64) -> OpCounts {
    match algorithm {
        Algorithm::Dlms => OpCounts {
            adds: l * (3 * n_k - 1),
            mults: l * (3 * n_k + 1),
            nonlinear: 0,
        },
        Algorithm::SonecDlms => OpCounts {
            adds: l * (9 * n_k + 1),
            mults: l * (9 * n_k + 2),
            nonlinear: 3 * n_k,
        },
    }
}

thread_local! {
    static ADDS: Cell<u64> = const { Cell::new(0) };
    static MULTS: Cell<u64> = const { Cell::new(0) };
    static NONLINEAR: Cell<u64> = const { Cell::new(0) };
}

#[inline]
fn bump(c: &'static std::thread::LocalKey<Cell<u64>>) {
    c.with(|x| x.set(x.get() + 1));
}

/// Zeroes this thread's counters.
pub fn reset_counters() {
    ADDS.with(|c| c.set(0));
    MULTS.with(|c| c.set(0));
    NONLINEAR.with(|c| c.set(0));
}

/// This thread's counters since the last reset.
pub fn read_counters() -> OpCounts {
    OpCounts {
        adds: ADDS.with(Cell::get),
        mults: MULTS.with(Cell::get),
        nonlinear: NONLINEAR.with(Cell::get),
    }
}

/// Runs `f` and returns the operations it performed on [`Counted`] values.
pub fn count_ops<R>(f: impl FnOnce() -> R) -> (R, OpCounts) {
    let before = read_counters();
    let r = f();
    let after = read_counters();
    (
        r,
        OpCounts {
            adds: after.adds - before.adds,
            mults: after.mults - before.mults,
            nonlinear: after.nonlinear - before.nonlinear,
        },
    )
}

/// `f64` that counts additions/subtractions, multiplications/divisions and
/// transcendental calls. Comparisons, negation and conversions are free.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Counted(pub f64);

impl fmt::Display for Counted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident, $op:tt, $ctr:ident) => {
        impl $tr for Counted {
            type Output = Counted;
            #[inline]
            fn $m(self, rhs: Counted) -> Counted {
                bump(&$ctr);
                Counted(self.0 $op rhs.0)
            }
        }
        impl $atr for Counted {
            #[inline]
            fn $am(&mut self, rhs: Counted) {
                *self = *self $op rhs;
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign, +, ADDS);
binop!(Sub, sub, SubAssign, sub_assign, -, ADDS);
binop!(Mul, mul, MulAssign, mul_assign, *, MULTS);
binop!(Div, div, DivAssign, div_assign, /, MULTS);
binop!(Rem, rem, RemAssign, rem_assign, %, MULTS);

impl Neg for Counted {
    type Output = Counted;
    fn neg(self) -> Counted {
        Counted(-self.0)
    }
}

impl Zero for Counted {
    fn zero() -> Self {
        Counted(0.0)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0.0
    }
}

impl One for Counted {
    fn one() -> Self {
        Counted(1.0)
    }
}

impl Num for Counted {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Counted)
    }
}

impl ToPrimitive for Counted {
    fn to_i64(&self) -> Option<i64> {
        self.0.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.0)
    }
}

impl NumCast for Counted {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Counted)
    }
}

impl FromPrimitive for Counted {
    fn from_i64(n: i64) -> Option<Self> {
        Some(Counted(n as f64))
    }
    fn from_u64(n: u64) -> Option<Self> {
        Some(Counted(n as f64))
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(Counted(n))
    }
}

impl Sum for Counted {
    fn sum<I: Iterator<Item = Counted>>(iter: I) -> Counted {
        iter.fold(Counted(0.0), |a, b| a + b)
    }
}

macro_rules! passthrough {
    ($($name:ident),*) => {
        $(#[inline] fn $name(self) -> Self { Counted(self.0.$name()) })*
    };
}

macro_rules! transcendental {
    ($($name:ident),*) => {
        $(#[inline] fn $name(self) -> Self { bump(&NONLINEAR); Counted(self.0.$name()) })*
    };
}

macro_rules! predicate {
    ($($name:ident),*) => {
        $(#[inline] fn $name(self) -> bool { self.0.$name() })*
    };
}

impl Float for Counted {
    fn nan() -> Self {
        Counted(f64::NAN)
    }
    fn infinity() -> Self {
        Counted(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        Counted(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        Counted(-0.0)
    }
    fn min_value() -> Self {
        Counted(f64::MIN)
    }
    fn min_positive_value() -> Self {
        Counted(f64::MIN_POSITIVE)
    }
    fn epsilon() -> Self {
        Counted(f64::EPSILON)
    }
    fn max_value() -> Self {
        Counted(f64::MAX)
    }
    fn classify(self) -> FpCategory {
        self.0.classify()
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        Float::integer_decode(self.0)
    }

    predicate!(
        is_nan,
        is_infinite,
        is_finite,
        is_normal,
        is_sign_positive,
        is_sign_negative
    );
    passthrough!(floor, ceil, round, trunc, fract, abs, signum);
    transcendental!(
        sqrt, exp, exp2, ln, log2, log10, cbrt, sin, cos, tan, asin, acos, atan, exp_m1, ln_1p,
        sinh, cosh, tanh, asinh, acosh, atanh
    );

    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        Counted(1.0) / self
    }
    fn powi(self, n: i32) -> Self {
        bump(&NONLINEAR);
        Counted(self.0.powi(n))
    }
    fn powf(self, n: Self) -> Self {
        bump(&NONLINEAR);
        Counted(self.0.powf(n.0))
    }
    fn log(self, base: Self) -> Self {
        bump(&NONLINEAR);
        Counted(self.0.log(base.0))
    }
    fn max(self, other: Self) -> Self {
        Counted(self.0.max(other.0))
    }
    fn min(self, other: Self) -> Self {
        Counted(self.0.min(other.0))
    }
    #[allow(deprecated)]
    fn abs_sub(self, other: Self) -> Self {
        if self.0 > other.0 {
            self - other
        } else {
            Counted(0.0)
        }
    }
    fn hypot(self, other: Self) -> Self {
        bump(&NONLINEAR);
        Counted(self.0.hypot(other.0))
    }
    fn atan2(self, other: Self) -> Self {
        bump(&NONLINEAR);
        Counted(self.0.atan2(other.0))
    }
    fn sin_cos(self) -> (Self, Self) {
        bump(&NONLINEAR);
        let (s, c) = self.0.sin_cos();
        (Counted(s), Counted(c))
    }
}

impl Real for Counted {}

/// Measures the per-node cost of one iteration of the actual
/// implementation on a fully connected network of `n_k` nodes (so every
/// neighborhood has `n_k` members), excluding the channel itself.
///
/// For SONEC-DLMS every coefficient estimate starts away from zero so the
/// compensation formulas are evaluated rather than short-circuited, and
/// the cost of compensating the `n_k` received vectors is included.
pub fn instrumented_counts(algorithm: Algorithm, n_k: usize, l: usize) -> OpCounts {
    assert!(n_k >= 1 && l >= 1);
    let edges: Vec<(usize, usize)> = (0..n_k)
        .flat_map(|a| (a + 1..n_k).map(move |b| (a, b)))
        .collect();
    let topo = NetworkTopology::from_edges(n_k, &edges).expect("complete graph is connected");
    let w = uniform_weights::<Counted>(&topo);
    // Small deterministic data keeps every discriminant positive.
    let u: Vec<Counted> = (0..n_k * l)
        .map(|i| Counted(0.05 * ((i * 7 % 11) as f64 - 5.0) / 5.0))
        .collect();
    let d_tilde: Vec<Counted> = (0..n_k).map(|k| Counted(0.1 + 0.01 * k as f64)).collect();
    let data = StepData {
        u: &u,
        d_tilde: &d_tilde,
    };
    let mut states = NodeState::<Counted>::network(&topo, l);
    for s in states.iter_mut() {
        s.omega = (0..l).map(|j| Counted(0.01 * j as f64)).collect();
        s.b_hat.iter_mut().for_each(|b| *b = Counted(-0.2));
    }
    let nw = sonec::NeighborWeights::new(&topo, &w);
    let per_node = |c: OpCounts| OpCounts {
        adds: c.adds / n_k as u64,
        mults: c.mults / n_k as u64,
        nonlinear: c.nonlinear / n_k as u64,
    };
    match algorithm {
        Algorithm::Dlms => {
            let mut buf = vec![Counted(0.0); n_k * l];
            let ((), c) = count_ops(|| {
                dlms::step(
                    &mut states,
                    &topo,
                    data,
                    &nw,
                    Counted(0.01),
                    &LinkModel::Identity,
                    &mut buf,
                )
            });
            per_node(c)
        }
        Algorithm::SonecDlms => {
            let steps = StepSizes::new(Counted(0.01), Counted(0.005)).expect("positive");
            let mut stats = CompensationStats::default();
            let mut scratch = sonec::Scratch::new(n_k, l);
            let ((), adapt) = count_ops(|| {
                sonec::step(
                    &mut states,
                    &topo,
                    data,
                    &nw,
                    steps,
                    SonecVariant::FullyDistributed,
                    &LinkModel::Identity,
                    &mut stats,
                    &mut scratch,
                )
            });
            let received = states[0].received_phi.clone();
            let b_hat = states[0].b_hat.clone();
            let (_, links) = count_ops(|| {
                received
                    .iter()
                    .zip(&b_hat)
                    .map(|(phi, &b)| compensate_intermediate(phi, b, &mut stats))
                    .collect::<Vec<_>>()
            });
            let a = per_node(adapt);
            OpCounts {
                adds: a.adds + links.adds,
                mults: a.mults + links.mults,
                nonlinear: a.nonlinear + links.nonlinear,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(
            operation_counts(Algorithm::Dlms, 4, 20),
            OpCounts {
                adds: 220,
                mults: 260,
                nonlinear: 0
            }
        );
        assert_eq!(
            operation_counts(Algorithm::SonecDlms, 4, 20),
            OpCounts {
                adds: 740,
                mults: 760,
                nonlinear: 12
            }
        );
    }

    #[test]
    fn add_ratio_near_three() {
        // (9n+1)/(3n-1) falls from 3.8 at n = 2 toward 3
        let small = operation_counts(Algorithm::SonecDlms, 2, 20).adds as f64
            / operation_counts(Algorithm::Dlms, 2, 20).adds as f64;
        assert!((small - 3.8).abs() < 1e-12);
        for n_k in 3..=8 {
            let r = operation_counts(Algorithm::SonecDlms, n_k, 20).adds as f64
                / operation_counts(Algorithm::Dlms, n_k, 20).adds as f64;
            assert!((2.5..=3.5).contains(&r), "n_k={n_k}: {r}");
        }
    }

    #[test]
    fn counters_tally_operations() {
        reset_counters();
        let (x, c) = count_ops(|| {
            let a = Counted(2.0);
            let b = Counted(3.0);
            (a * b + a - b / a).sqrt()
        });
        assert_eq!(x.0, (6.0f64 + 2.0 - 1.5).sqrt());
        assert_eq!(
            c,
            OpCounts {
                adds: 2,
                mults: 2,
                nonlinear: 1
            }
        );
    }

    #[test]
    fn instrumented_dlms_additions_match_table() {
        for n_k in 1..=8u64 {
            for l in [1u64, 5, 20] {
                let got = instrumented_counts(Algorithm::Dlms, n_k as usize, l as usize);
                let table = operation_counts(Algorithm::Dlms, n_k, l);
                assert_eq!(got.adds, table.adds, "n_k={n_k} l={l}");
                assert_eq!(got.nonlinear, 0);
                // leading term 3 n_k L; the constant term is n_k here, L in the table
                assert_eq!(got.mults, 3 * n_k * l + 2 * n_k);
            }
        }
    }
}
