//! Periodic square lattice, model parameters, spin/correlator fields and the
//! two product initial states used throughout the crate.

use std::fmt;

use crate::error::{Error, Result};

/// Bloch vector `(S^x, S^y, S^z)`.
pub type Vec3 = [f64; 3];
/// Two-site correlator matrix, `m[a][b] = <sigma^a_R sigma^b_R'>`.
pub type Mat3 = [[f64; 3]; 3];

pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;

/// Truncation order of the BBGKY hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Order {
    /// Single-site Bloch vectors only, every pair expectation factorized.
    First,
    /// Bloch vectors plus nearest-neighbour two-spin correlators.
    Second,
}

impl Order {
    pub fn as_int(self) -> u8 {
        match self {
            Order::First => 1,
            Order::Second => 2,
        }
    }

    pub fn from_int(n: u8) -> Option<Order> {
        match n {
            1 => Some(Order::First),
            2 => Some(Order::Second),
            _ => None,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_int())
    }
}

/// Largest admissible `dt * J`.
pub const MAX_STEP_TIMES_COUPLING: f64 = 0.05;

/// Hamiltonian and integration controls.
///
/// `H = -J/2 sum_<R,R'> sx_R sx_R' - h/2 sum_R sz_R` on an `l x l` torus,
/// with every nearest-neighbour bond counted once.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub l: usize,
    pub j: f64,
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    pub order: Order,
    pub epsilon_arrival: f64,
    /// Integration steps between recorded samples.
    pub sample_interval: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            l: 51,
            j: 1.0,
            h: 0.6,
            dt: 0.01,
            t_end: 60.0,
            order: Order::First,
            epsilon_arrival: 1e-3,
            sample_interval: 10,
        }
    }
}

impl ModelParams {
    pub fn new(l: usize, h: f64, order: Order) -> Self {
        ModelParams {
            l,
            h,
            order,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 3 {
            return Err(Error::invalid("L", format!("must be >= 3, got {}", self.l)));
        }
        if !(self.j.is_finite() && self.j > 0.0) {
            return Err(Error::invalid("J", format!("must be > 0, got {}", self.j)));
        }
        if !(self.h.is_finite() && self.h >= 0.0) {
            return Err(Error::invalid("h", format!("must be >= 0, got {}", self.h)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.dt * self.j > MAX_STEP_TIMES_COUPLING * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "dt",
                format!(
                    "dt*J = {} exceeds the stability ceiling {MAX_STEP_TIMES_COUPLING}",
                    self.dt * self.j
                ),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid(
                "t_end",
                format!("must be > 0, got {}", self.t_end),
            ));
        }
        if !(self.epsilon_arrival > 0.0 && self.epsilon_arrival < 1.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("must lie in (0, 1), got {}", self.epsilon_arrival),
            ));
        }
        if self.sample_interval == 0 {
            return Err(Error::invalid("sample_interval", "must be >= 1"));
        }
        Ok(())
    }

    /// Number of RK4 steps needed to reach `t_end`.
    pub fn total_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn sites(&self) -> usize {
        self.l * self.l
    }
}

/// Lattice site `R = (x, y)` with `0 <= x, y < L`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteIndex {
    pub x: usize,
    pub y: usize,
}

impl SiteIndex {
    pub const ORIGIN: SiteIndex = SiteIndex { x: 0, y: 0 };

    pub const fn new(x: usize, y: usize) -> Self {
        SiteIndex { x, y }
    }

    /// Site reached by the displacement `(dx, dy)`, wrapped onto the torus.
    pub fn shifted(self, dx: i64, dy: i64, l: usize) -> SiteIndex {
        let l = l as i64;
        SiteIndex {
            x: (self.x as i64 + dx).rem_euclid(l) as usize,
            y: (self.y as i64 + dy).rem_euclid(l) as usize,
        }
    }

    /// Row-major offset, `y * L + x`.
    #[inline]
    pub fn offset(self, l: usize) -> usize {
        self.y * l + self.x
    }

    #[inline]
    pub fn from_offset(offset: usize, l: usize) -> SiteIndex {
        SiteIndex {
            x: offset % l,
            y: offset / l,
        }
    }

    pub fn in_lattice(self, l: usize) -> bool {
        self.x < l && self.y < l
    }
}

impl fmt::Display for SiteIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Lattice direction of a bond, `e_1 = (1, 0)` or `e_2 = (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }

    pub fn unit(self) -> (i64, i64) {
        match self {
            Axis::X => (1, 0),
            Axis::Y => (0, 1),
        }
    }
}

/// Integer displacement `r = (r_x, r_y)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Displacement {
    pub dx: i64,
    pub dy: i64,
}

impl Displacement {
    pub const fn new(dx: i64, dy: i64) -> Self {
        Displacement { dx, dy }
    }
}

impl std::ops::Neg for Displacement {
    type Output = Displacement;
    fn neg(self) -> Displacement {
        Displacement::new(-self.dx, -self.dy)
    }
}

/// Euclidean length `sqrt(r_x^2 + r_y^2)`.
pub fn d_eucl(r: Displacement) -> f64 {
    (r.dx as f64).hypot(r.dy as f64)
}

/// Manhattan length `|r_x| + |r_y|`.
pub fn d_manh(r: Displacement) -> f64 {
    (r.dx.abs() + r.dy.abs()) as f64
}

/// Minimal-image displacement from `a` to `b` on an `l x l` torus.
///
/// Each component lies in `[-L/2, L/2]`; for even `L` a component of exactly
/// `L/2` is reported as `+L/2`.
pub fn torus_displacement(a: SiteIndex, b: SiteIndex, l: usize) -> Displacement {
    let wrap = |from: usize, to: usize| -> i64 {
        let l = l as i64;
        let d = (to as i64 - from as i64).rem_euclid(l);
        if 2 * d > l {
            d - l
        } else {
            d
        }
    };
    Displacement::new(wrap(a.x, b.x), wrap(a.y, b.y))
}

/// Per-site Bloch vectors on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinField {
    l: usize,
    data: Vec<Vec3>,
}

impl SpinField {
    pub fn uniform(l: usize, s: Vec3) -> Self {
        SpinField {
            l,
            data: vec![s; l * l],
        }
    }

    /// Wraps row-major data (`y * L + x`).
    pub fn from_vec(l: usize, data: Vec<Vec3>) -> Result<Self> {
        if data.len() != l * l {
            return Err(Error::Mismatch(format!(
                "spin field of side {l} needs {} sites, got {}",
                l * l,
                data.len()
            )));
        }
        Ok(SpinField { l, data })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn get(&self, site: SiteIndex) -> Vec3 {
        self.data[site.offset(self.l)]
    }

    pub fn set(&mut self, site: SiteIndex, s: Vec3) {
        let l = self.l;
        self.data[site.offset(l)] = s;
    }

    pub fn as_slice(&self) -> &[Vec3] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Vec3] {
        &mut self.data
    }

    pub fn iter_sites(&self) -> impl Iterator<Item = (SiteIndex, Vec3)> + '_ {
        let l = self.l;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, s)| (SiteIndex::from_offset(i, l), *s))
    }
}

/// Two-spin correlators on every nearest-neighbour bond.
///
/// Only the `+e_1` and `+e_2` bonds of each site are stored; the opposite
/// orientation is the transpose, since operators on distinct sites commute.
#[derive(Clone, Debug, PartialEq)]
pub struct BondCorrelatorField {
    l: usize,
    data: Vec<[Mat3; 2]>,
}

impl BondCorrelatorField {
    /// Exact correlators of a product state, `C^{ab} = S^a_R S^b_R'`.
    pub fn product(spins: &SpinField) -> Self {
        let l = spins.l;
        let data = (0..l * l)
            .map(|i| {
                let site = SiteIndex::from_offset(i, l);
                let s = spins.data[i];
                Axis::BOTH.map(|axis| {
                    let (dx, dy) = axis.unit();
                    outer(s, spins.get(site.shifted(dx, dy, l)))
                })
            })
            .collect();
        BondCorrelatorField { l, data }
    }

    pub fn zeros(l: usize) -> Self {
        BondCorrelatorField {
            l,
            data: vec![[[[0.0; 3]; 3]; 2]; l * l],
        }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Correlator of the bond from `site` to `site + e_axis`.
    pub fn bond(&self, site: SiteIndex, axis: Axis) -> &Mat3 {
        &self.data[site.offset(self.l)][axis.index()]
    }

    pub fn bond_mut(&mut self, site: SiteIndex, axis: Axis) -> &mut Mat3 {
        let l = self.l;
        &mut self.data[site.offset(l)][axis.index()]
    }

    /// `<sigma^a_R sigma^b_{R'}>` for any nearest-neighbour pair, in either
    /// orientation. Returns `None` if the sites are not neighbours.
    pub fn pair(&self, r: SiteIndex, r2: SiteIndex) -> Option<Mat3> {
        let l = self.l;
        for axis in Axis::BOTH {
            let (dx, dy) = axis.unit();
            if r.shifted(dx, dy, l) == r2 {
                return Some(*self.bond(r, axis));
            }
            if r2.shifted(dx, dy, l) == r {
                return Some(transpose(self.bond(r2, axis)));
            }
        }
        None
    }

    pub fn as_slice(&self) -> &[[Mat3; 2]] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [[Mat3; 2]] {
        &mut self.data
    }
}

/// Full dynamical state: time, Bloch vectors and (at second order) bond
/// correlators. The order is implied by the presence of correlators.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub spins: SpinField,
    pub correlators: Option<BondCorrelatorField>,
}

impl SystemState {
    /// Product state built from `spins`, with correlators iff `order` is second.
    pub fn product(spins: SpinField, order: Order) -> Self {
        let correlators = match order {
            Order::First => None,
            Order::Second => Some(BondCorrelatorField::product(&spins)),
        };
        SystemState {
            t: 0.0,
            spins,
            correlators,
        }
    }

    pub fn order(&self) -> Order {
        if self.correlators.is_some() {
            Order::Second
        } else {
            Order::First
        }
    }

    pub fn l(&self) -> usize {
        self.spins.l()
    }
}

/// Fully x-polarized state `|up up ... up>_x`.
pub fn build_ordered_state(params: &ModelParams) -> SystemState {
    SystemState::product(SpinField::uniform(params.l, [1.0, 0.0, 0.0]), params.order)
}

/// Ordered state with the single spin at `site` flipped to `-x`.
pub fn build_perturbed_state(params: &ModelParams, site: SiteIndex) -> SystemState {
    assert!(
        site.in_lattice(params.l),
        "perturbation site {site} outside {0}x{0} lattice",
        params.l
    );
    let mut spins = SpinField::uniform(params.l, [1.0, 0.0, 0.0]);
    spins.set(site, [-1.0, 0.0, 0.0]);
    SystemState::product(spins, params.order)
}

#[inline]
pub(crate) fn outer(a: Vec3, b: Vec3) -> Mat3 {
    [
        [a[0] * b[0], a[0] * b[1], a[0] * b[2]],
        [a[1] * b[0], a[1] * b[1], a[1] * b[2]],
        [a[2] * b[0], a[2] * b[1], a[2] * b[2]],
    ]
}

#[inline]
pub fn transpose(m: &Mat3) -> Mat3 {
    [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ]
}
