//! Eighth-order time-dependent perturbation series for `S^x(t)` after the
//! homogeneous quench from the fully x-polarized state.
//!
//! The series depends on `h/J` and `Jt` only. Each bracket is transcribed
//! with its exact rational coefficients; the constant term of every bracket
//! cancels the oscillating terms at `t = 0`, so `S^x(0) = 1` at every
//! truncation order.
//!
//! Validity: small `h/4J` and moderate `Jt` (the brackets grow secularly up
//! to `(Jt)^4`). Comparisons in this crate stay within `Jt <= 3`, `h <= 0.6`.

/// One `(h/4J)^n`-weighted bracket of the series, sign included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesTerm {
    /// Power of `h/4J`: 2, 4, 6 or 8.
    pub order: u32,
    pub value: f64,
}

pub const SERIES_ORDERS: [u32; 4] = [2, 4, 6, 8];

/// Bracket of the `(h/4J)^2` term at dimensionless time `x = Jt`.
pub fn bracket2(x: f64) -> f64 {
    1.0 - (4.0 * x).cos()
}

pub fn bracket4(x: f64) -> f64 {
    let c = |k: f64| (k * x).cos();
    16.0 / 9.0 * c(6.0) - 7.0 / 3.0 * c(4.0) + 16.0 / 3.0 * c(2.0) + 6.0 * x * (4.0 * x).sin()
        - 43.0 / 9.0
}

pub fn bracket6(x: f64) -> f64 {
    let c = |k: f64| (k * x).cos();
    let s = |k: f64| (k * x).sin();
    let x2 = x * x;
    13.0 / 32.0 * c(8.0)
        + 34.0 / 3.0 * c(6.0)
        + 137.0 / 18.0 * c(4.0)
        + 26.0 / 9.0 * c(2.0)
        + 5.0 / 4.0 * x * s(8.0)
        + 113.0 / 3.0 * x * s(4.0)
        + 48.0 * x * s(2.0)
        + 24.0 * x2 * c(4.0)
        + 3.0 * x2
        - 2135.0 / 96.0
}

pub fn bracket8(x: f64) -> f64 {
    let c = |k: f64| (k * x).cos();
    let s = |k: f64| (k * x).sin();
    let (x2, x3, x4) = (x * x, x * x * x, x * x * x * x);
    let cosines = 13.0 / 960.0 * c(12.0) - 12287.0 / 8100.0 * c(10.0)
        + 481817.0 / 19200.0 * c(8.0)
        + 401333.0 / 5400.0 * c(6.0)
        - 7469867.0 / 129600.0 * c(4.0)
        + 6062303.0 / 16200.0 * c(2.0);
    let linear = -196.0 / 135.0 * x * s(10.0)
        + 6817.0 / 480.0 * x * s(8.0)
        + 4936.0 / 45.0 * x * s(6.0)
        + 269717.0 / 4320.0 * x * s(4.0)
        + 30251.0 / 45.0 * x * s(2.0);
    let quadratic = 281.0 / 48.0 * x2 * c(8.0) - 224.0 / 9.0 * x2 * c(6.0)
        + 13213.0 / 72.0 * x2 * c(4.0)
        - 388.0 / 3.0 * x2 * c(2.0)
        - 4801.0 / 144.0 * x2;
    let higher = 65.0 / 18.0 * x3 * s(8.0) - 3.0 * x3 * s(4.0) + 1993.0 / 432.0 * x3 * s(2.0)
        + 36.0 / 3.0 * x4 * c(4.0)
        + 4.0 / 3.0 * x4;
    cosines + linear + quadratic + higher - 71623969.0 / 172800.0
}

/// The four signed, weighted contributions at `(h, J, t)`.
pub fn term_values(h: f64, j: f64, t: f64) -> [SeriesTerm; 4] {
    assert!(j > 0.0, "coupling must be positive");
    let e = h / (4.0 * j);
    let x = j * t;
    let e2 = e * e;
    let e4 = e2 * e2;
    let e6 = e4 * e2;
    let e8 = e4 * e4;
    [
        SeriesTerm { order: 2, value: -e2 * bracket2(x) },
        SeriesTerm { order: 4, value: e4 * bracket4(x) },
        SeriesTerm { order: 6, value: -e6 * bracket6(x) },
        SeriesTerm { order: 8, value: e8 * bracket8(x) },
    ]
}

/// Partial sum of the series through `(h/4J)^max_order`.
///
/// # Panics
/// If `max_order` is not one of 2, 4, 6, 8 or `j <= 0`.
pub fn eval_perturbation_sx(h: f64, j: f64, t: f64, max_order: u32) -> f64 {
    assert!(
        SERIES_ORDERS.contains(&max_order),
        "max_order must be 2, 4, 6 or 8, got {max_order}"
    );
    1.0 + term_values(h, j, t)
        .iter()
        .filter(|term| term.order <= max_order)
        .map(|term| term.value)
        .sum::<f64>()
}

/// Full eighth-order series.
pub fn sx_series(h: f64, j: f64, t: f64) -> f64 {
    eval_perturbation_sx(h, j, t, 8)
}
