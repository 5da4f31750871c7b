//! Equations of motion of the BBGKY hierarchy truncated at first and second
//! order, a fixed-step RK4 integrator, and conservation monitors.
//!
//! The order-2 bond equations are written in terms of the Levi-Civita
//! matrices `(E_x)_{ac} = eps_{xac}` and `(E_z)_{ac} = eps_{zac}`. For a bond
//! `(R, R' = R + e_k)` with correlator `C`, Bloch vectors `S = S_R`,
//! `T = S_R'`, the equation is
//!
//! ```text
//! dC/dt = h (E_z C + C E_z^T)
//!       + J [ (E_x S) x^T + x (E_x T)^T ]
//!       + J [ (E_x (A - s S)) T^T + S (E_x (B - s' T))^T ]
//!       + J [ s E_x C + s' C E_x^T ]
//! ```
//!
//! where `x = (1, 0, 0)`, `A_c = sum_{R'' ~ R, R'' != R'} <s^c_R s^x_R''>`,
//! `B_d = sum_{R''' ~ R', R''' != R} <s^x_R''' s^d_R'>`, and `s`, `s'` are the
//! sums of `S^x` over the same three outer neighbours. The derivation is in
//! the book chapter on the second-order closure.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::lattice::{
    Axis, BondCorrelatorField, Mat3, ModelParams, Order, SiteIndex, SpinField, SystemState, Vec3,
    X, Y, Z,
};

/// Time derivative of a [`SystemState`], same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeField {
    pub spins: Vec<Vec3>,
    pub correlators: Option<Vec<[Mat3; 2]>>,
}

impl DerivativeField {
    pub fn zeros_like(state: &SystemState) -> Self {
        let n = state.spins.as_slice().len();
        DerivativeField {
            spins: vec![[0.0; 3]; n],
            correlators: state
                .correlators
                .as_ref()
                .map(|_| vec![[[[0.0; 3]; 3]; 2]; n]),
        }
    }

    pub fn order(&self) -> Order {
        if self.correlators.is_some() {
            Order::Second
        } else {
            Order::First
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = flat3(&self.spins).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(c) = &self.correlators {
            m = flat_bonds(c).iter().fold(m, |m, v| m.max(v.abs()));
        }
        m
    }
}

/// Scratch space for the order-2 right-hand side.
#[derive(Clone, Debug, Default)]
struct Neighbourhood {
    /// `N_R[c] = sum over all four neighbours R'' of <s^c_R s^x_R''>`.
    pair_sum: Vec<Vec3>,
    /// Sum of `S^x` over the four neighbours.
    sx_sum: Vec<f64>,
}

/// Order-1 right-hand side (mean-field factorization of every pair).
pub fn rhs_order1(state: &SystemState, params: &ModelParams) -> Result<DerivativeField> {
    expect_order(state.order(), Order::First)?;
    let mut out = DerivativeField::zeros_like(state);
    rhs1_into(params, state.spins.as_slice(), &mut out.spins);
    Ok(out)
}

/// Order-2 right-hand side (nearest-neighbour correlators, triple break-up).
pub fn rhs_order2(state: &SystemState, params: &ModelParams) -> Result<DerivativeField> {
    expect_order(state.order(), Order::Second)?;
    let mut out = DerivativeField::zeros_like(state);
    let mut nb = Neighbourhood::default();
    rhs2_into(
        params,
        state.spins.as_slice(),
        state.correlators.as_ref().unwrap().as_slice(),
        &mut nb,
        &mut out.spins,
        out.correlators.as_mut().unwrap(),
    );
    Ok(out)
}

/// Right-hand side for whichever order the state carries.
pub fn rhs(state: &SystemState, params: &ModelParams) -> DerivativeField {
    match state.order() {
        Order::First => rhs_order1(state, params),
        Order::Second => rhs_order2(state, params),
    }
    .expect("order dispatch matches state")
}

fn expect_order(found: Order, expected: Order) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::OrderMismatch { expected, found })
    }
}

#[inline]
fn wrap_inc(i: usize, l: usize) -> usize {
    if i + 1 == l {
        0
    } else {
        i + 1
    }
}

#[inline]
fn wrap_dec(i: usize, l: usize) -> usize {
    if i == 0 {
        l - 1
    } else {
        i - 1
    }
}

/// Neighbour sums are grouped as `(x+ + x-) + (y+ + y-)` so that every
/// lattice symmetry maps the floating-point expression onto itself.
fn rhs1_into(params: &ModelParams, spins: &[Vec3], out: &mut [Vec3]) {
    let (l, j, h) = (params.l, params.j, params.h);
    for y in 0..l {
        let (yp, ym) = (wrap_inc(y, l), wrap_dec(y, l));
        for x in 0..l {
            let (xp, xm) = (wrap_inc(x, l), wrap_dec(x, l));
            let nb = (spins[y * l + xp][X] + spins[y * l + xm][X])
                + (spins[yp * l + x][X] + spins[ym * l + x][X]);
            let s = spins[y * l + x];
            out[y * l + x] = [h * s[Y], j * s[Z] * nb - h * s[X], -j * s[Y] * nb];
        }
    }
}

/// `E_x v = (0, v_z, -v_y)`.
#[inline]
fn ex(v: Vec3) -> Vec3 {
    [0.0, v[Z], -v[Y]]
}

#[inline]
fn row(m: &Mat3, a: usize) -> Vec3 {
    m[a]
}

#[inline]
fn col(m: &Mat3, b: usize) -> Vec3 {
    [m[0][b], m[1][b], m[2][b]]
}

fn rhs2_into(
    params: &ModelParams,
    spins: &[Vec3],
    corr: &[[Mat3; 2]],
    nb: &mut Neighbourhood,
    out_spins: &mut [Vec3],
    out_corr: &mut [[Mat3; 2]],
) {
    let (l, j, h) = (params.l, params.j, params.h);
    let n = l * l;
    nb.pair_sum.resize(n, [0.0; 3]);
    nb.sx_sum.resize(n, 0.0);

    for y in 0..l {
        let (yp, ym) = (wrap_inc(y, l), wrap_dec(y, l));
        for x in 0..l {
            let (xp, xm) = (wrap_inc(x, l), wrap_dec(x, l));
            let i = y * l + x;
            let cx_fwd = &corr[i][0];
            let cx_bwd = &corr[y * l + xm][0];
            let cy_fwd = &corr[i][1];
            let cy_bwd = &corr[ym * l + x][1];
            let mut ps = [0.0; 3];
            for c in 0..3 {
                ps[c] = (cx_fwd[c][X] + cx_bwd[X][c]) + (cy_fwd[c][X] + cy_bwd[X][c]);
            }
            nb.pair_sum[i] = ps;
            nb.sx_sum[i] = (spins[y * l + xp][X] + spins[y * l + xm][X])
                + (spins[yp * l + x][X] + spins[ym * l + x][X]);
            let s = spins[i];
            out_spins[i] = [h * s[Y], j * ps[Z] - h * s[X], -j * ps[Y]];
        }
    }

    for y in 0..l {
        let yp = wrap_inc(y, l);
        for x in 0..l {
            let xp = wrap_inc(x, l);
            let i = y * l + x;
            for (k, partner) in [(0, y * l + xp), (1, yp * l + x)] {
                out_corr[i][k] = bond_rhs(
                    j,
                    h,
                    &corr[i][k],
                    spins[i],
                    spins[partner],
                    nb.pair_sum[i],
                    nb.pair_sum[partner],
                    nb.sx_sum[i],
                    nb.sx_sum[partner],
                );
            }
        }
    }
}

/// Equation of motion of one bond correlator. Each bracketed pair below is
/// the mirror image of itself under exchanging the two sites (with
/// transposition), which keeps the result exactly orientation-symmetric.
#[allow(clippy::too_many_arguments)]
#[inline]
fn bond_rhs(
    j: f64,
    h: f64,
    c: &Mat3,
    s: Vec3,
    t: Vec3,
    pair_sum_r: Vec3,
    pair_sum_rp: Vec3,
    sx_sum_r: f64,
    sx_sum_rp: f64,
) -> Mat3 {
    // Outer neighbours only: remove the bond itself from the full sums.
    let cx_col = col(c, X);
    let cx_row = row(c, X);
    let sx_r = sx_sum_r - t[X];
    let sx_rp = sx_sum_rp - s[X];
    let mut u = [0.0; 3];
    let mut w = [0.0; 3];
    for c_ in 0..3 {
        u[c_] = (pair_sum_r[c_] - cx_col[c_]) - sx_r * s[c_];
        w[c_] = (pair_sum_rp[c_] - cx_row[c_]) - sx_rp * t[c_];
    }
    let ex_u = ex(u);
    let ex_w = ex(w);
    let ex_s = ex(s);
    let ex_t = ex(t);

    let mut d = [[0.0; 3]; 3];
    for a in 0..3 {
        // rows of E_z C and E_x C
        let ez_col_a = ez_row(c, a);
        let ex_col_a = ex_row(c, a);
        for b in 0..3 {
            let ez_row_b = ez_col(c, b);
            let ex_row_b = ex_col(c, b);
            let field = h * ez_col_a[b] + h * ez_row_b[a];
            let bond = j * if b == X { ex_s[a] } else { 0.0 } + j * if a == X { ex_t[b] } else { 0.0 };
            let three = j * (ex_u[a] * t[b]) + j * (s[a] * ex_w[b]);
            let chain = j * sx_r * ex_col_a[b] + j * sx_rp * ex_row_b[a];
            d[a][b] = ((field + bond) + three) + chain;
        }
    }
    d
}

/// Row `a` of `E_z C`.
#[inline]
fn ez_row(c: &Mat3, a: usize) -> Vec3 {
    match a {
        X => c[Y],
        Y => [-c[X][0], -c[X][1], -c[X][2]],
        _ => [0.0; 3],
    }
}

/// Row `a` of `E_x C`.
#[inline]
fn ex_row(c: &Mat3, a: usize) -> Vec3 {
    match a {
        Y => c[Z],
        Z => [-c[Y][0], -c[Y][1], -c[Y][2]],
        _ => [0.0; 3],
    }
}

/// Column `b` of `C E_z^T`, i.e. `E_z` applied to column index.
#[inline]
fn ez_col(c: &Mat3, b: usize) -> Vec3 {
    match b {
        X => col(c, Y),
        Y => {
            let v = col(c, X);
            [-v[0], -v[1], -v[2]]
        }
        _ => [0.0; 3],
    }
}

/// Column `b` of `C E_x^T`.
#[inline]
fn ex_col(c: &Mat3, b: usize) -> Vec3 {
    match b {
        Y => col(c, Z),
        Z => {
            let v = col(c, Y);
            [-v[0], -v[1], -v[2]]
        }
        _ => [0.0; 3],
    }
}

#[inline]
fn flat3(v: &[Vec3]) -> &[f64] {
    v.as_flattened()
}

#[inline]
fn flat3_mut(v: &mut [Vec3]) -> &mut [f64] {
    v.as_flattened_mut()
}

#[inline]
fn flat_bonds(v: &[[Mat3; 2]]) -> &[f64] {
    v.as_flattened().as_flattened().as_flattened()
}

#[inline]
fn flat_bonds_mut(v: &mut [[Mat3; 2]]) -> &mut [f64] {
    v.as_flattened_mut().as_flattened_mut().as_flattened_mut()
}

/// Reusable classical RK4 stepper. Holds the four stage derivatives and an
/// intermediate state so stepping does not allocate.
#[derive(Clone, Debug)]
pub struct Rk4 {
    k: [DerivativeField; 4],
    stage: SystemState,
    nb: Neighbourhood,
}

impl Rk4 {
    pub fn new(like: &SystemState) -> Self {
        let z = DerivativeField::zeros_like(like);
        Rk4 {
            k: [z.clone(), z.clone(), z.clone(), z],
            stage: like.clone(),
            nb: Neighbourhood::default(),
        }
    }

    fn eval(&mut self, which: usize, from_stage: bool, params: &ModelParams, state: &SystemState) {
        let src = if from_stage { &self.stage } else { state };
        let k = &mut self.k[which];
        match &src.correlators {
            None => rhs1_into(params, src.spins.as_slice(), &mut k.spins),
            Some(c) => rhs2_into(
                params,
                src.spins.as_slice(),
                c.as_slice(),
                &mut self.nb,
                &mut k.spins,
                k.correlators.as_mut().expect("derivative shaped like state"),
            ),
        }
    }

    /// `stage = state + a * k[which]`.
    fn set_stage(&mut self, state: &SystemState, a: f64, which: usize) {
        axpy(
            flat3_mut(self.stage.spins.as_mut_slice()),
            flat3(state.spins.as_slice()),
            a,
            flat3(&self.k[which].spins),
        );
        if let (Some(dst), Some(src), Some(k)) = (
            self.stage.correlators.as_mut(),
            state.correlators.as_ref(),
            self.k[which].correlators.as_ref(),
        ) {
            axpy(
                flat_bonds_mut(dst.as_mut_slice()),
                flat_bonds(src.as_slice()),
                a,
                flat_bonds(k),
            );
        }
    }

    /// Advances `state` in place by one step of `params.dt`. `step` is the
    /// index reported if the new state contains non-finite values.
    pub fn step(&mut self, state: &mut SystemState, params: &ModelParams, step: u64) -> Result<()> {
        if self.stage.order() != state.order() || self.stage.l() != state.l() {
            *self = Rk4::new(state);
        }
        let dt = params.dt;
        self.eval(0, false, params, state);
        self.set_stage(state, 0.5 * dt, 0);
        self.eval(1, true, params, state);
        self.set_stage(state, 0.5 * dt, 1);
        self.eval(2, true, params, state);
        self.set_stage(state, dt, 2);
        self.eval(3, true, params, state);

        let [k1, k2, k3, k4] = &self.k;
        combine(
            flat3_mut(state.spins.as_mut_slice()),
            dt,
            [flat3(&k1.spins), flat3(&k2.spins), flat3(&k3.spins), flat3(&k4.spins)],
        );
        if let Some(c) = state.correlators.as_mut() {
            let ks = [k1, k2, k3, k4].map(|k| flat_bonds(k.correlators.as_ref().unwrap()));
            combine(flat_bonds_mut(c.as_mut_slice()), dt, ks);
        }
        state.t += dt;
        check_finite(state, step)
    }
}

#[inline]
fn axpy(dst: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    for ((d, y), k) in dst.iter_mut().zip(y).zip(k) {
        *d = y + a * k;
    }
}

#[inline]
fn combine(y: &mut [f64], dt: f64, k: [&[f64]; 4]) {
    let w = dt / 6.0;
    for (i, v) in y.iter_mut().enumerate() {
        *v += w * ((k[0][i] + k[3][i]) + 2.0 * (k[1][i] + k[2][i]));
    }
}

fn check_finite(state: &SystemState, step: u64) -> Result<()> {
    let l = state.l();
    let bad_site = state
        .spins
        .as_slice()
        .iter()
        .position(|s| s.iter().any(|v| !v.is_finite()))
        .or_else(|| {
            state.correlators.as_ref().and_then(|c| {
                c.as_slice()
                    .iter()
                    .position(|b| b.iter().flatten().flatten().any(|v| !v.is_finite()))
            })
        });
    match bad_site {
        None => Ok(()),
        Some(i) => Err(Error::IntegrationBlowup {
            step,
            time: state.t,
            site: SiteIndex::from_offset(i, l),
        }),
    }
}

/// One classical RK4 step of size `params.dt`.
pub fn rk4_step(state: &SystemState, params: &ModelParams) -> Result<SystemState> {
    let mut next = state.clone();
    let step = (state.t / params.dt).round() as u64;
    Rk4::new(state).step(&mut next, params, step)?;
    Ok(next)
}

/// Sampled time series of one integration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Empty when snapshots were not requested.
    pub snapshots: Vec<SpinField>,
    pub energies: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Callback invoked on every recorded sample (including `t = 0`).
pub trait Observer {
    fn observe(&mut self, sample: usize, state: &SystemState) -> Result<ControlFlow<()>>;
}

impl<F> Observer for F
where
    F: FnMut(usize, &SystemState) -> Result<ControlFlow<()>>,
{
    fn observe(&mut self, sample: usize, state: &SystemState) -> Result<ControlFlow<()>> {
        self(sample, state)
    }
}

/// What [`integrate_with`] keeps in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recording {
    /// Times, energies and every spin snapshot.
    Full,
    /// Times and energies only; observers see the state.
    EnergyOnly,
}

/// Integrates to `params.t_end`, keeping every sampled spin snapshot.
pub fn integrate(
    initial: &SystemState,
    params: &ModelParams,
    observers: &mut [&mut dyn Observer],
) -> Result<TrajectoryRecord> {
    integrate_with(initial, params, Recording::Full, observers)
}

/// Repeated RK4 steps from `initial` to `params.t_end`, sampling every
/// `params.sample_interval` steps. Stops early if any observer breaks.
pub fn integrate_with(
    initial: &SystemState,
    params: &ModelParams,
    recording: Recording,
    observers: &mut [&mut dyn Observer],
) -> Result<TrajectoryRecord> {
    params.validate()?;
    if initial.l() != params.l {
        return Err(Error::Mismatch(format!(
            "state side {} differs from params L = {}",
            initial.l(),
            params.l
        )));
    }
    if initial.order() != params.order {
        return Err(Error::OrderMismatch {
            expected: params.order,
            found: initial.order(),
        });
    }

    let mut state = initial.clone();
    let t0 = state.t;
    let mut stepper = Rk4::new(&state);
    let mut record = TrajectoryRecord::default();
    let steps = params.total_steps();

    let mut sample = |state: &SystemState, record: &mut TrajectoryRecord| -> Result<bool> {
        let idx = record.times.len();
        record.times.push(state.t);
        record.energies.push(mf_energy(state, params));
        if recording == Recording::Full {
            record.snapshots.push(state.spins.clone());
        }
        let mut stop = false;
        for obs in observers.iter_mut() {
            if obs.observe(idx, state)?.is_break() {
                stop = true;
            }
        }
        Ok(stop)
    };

    if sample(&state, &mut record)? {
        return Ok(record);
    }
    for n in 1..=steps {
        stepper.step(&mut state, params, n)?;
        // avoid accumulating round-off in the clock
        state.t = t0 + n as f64 * params.dt;
        if n % params.sample_interval as u64 == 0 && sample(&state, &mut record)? {
            break;
        }
    }
    Ok(record)
}

/// Mean-field energy of the Hamiltonian. At second order the bond term uses
/// the tracked `C^{xx}`.
pub fn mf_energy(state: &SystemState, params: &ModelParams) -> f64 {
    let l = state.l();
    let spins = state.spins.as_slice();
    let mut bonds = 0.0;
    match &state.correlators {
        None => {
            for y in 0..l {
                for x in 0..l {
                    let sx = spins[y * l + x][X];
                    bonds += sx * spins[y * l + wrap_inc(x, l)][X];
                    bonds += sx * spins[wrap_inc(y, l) * l + x][X];
                }
            }
        }
        Some(c) => {
            for b in c.as_slice() {
                bonds += b[0][X][X] + b[1][X][X];
            }
        }
    }
    let field: f64 = spins.iter().map(|s| s[Z]).sum();
    -0.5 * params.j * bonds - 0.5 * params.h * field
}

/// Per-site Bloch vector length, row-major.
pub fn bloch_norms(state: &SystemState) -> Vec<f64> {
    state
        .spins
        .as_slice()
        .iter()
        .map(|s| (s[X] * s[X] + s[Y] * s[Y] + s[Z] * s[Z]).sqrt())
        .collect()
}

/// Convenience for tests and oracles: `S^x` at `site` for every sample.
pub fn sx_series(record: &TrajectoryRecord, site: SiteIndex) -> Vec<f64> {
    record.snapshots.iter().map(|f| f.get(site)[X]).collect()
}

/// Largest spread of any component across sites, per state.
pub fn inhomogeneity(spins: &SpinField) -> f64 {
    let first = spins.as_slice()[0];
    spins
        .as_slice()
        .iter()
        .flat_map(|s| (0..3).map(move |a| (s[a] - first[a]).abs()))
        .fold(0.0, f64::max)
}

/// Same for the correlators of a state, bond by bond per direction.
pub fn correlator_inhomogeneity(c: &BondCorrelatorField) -> f64 {
    let first = c.as_slice()[0];
    let mut m = 0.0f64;
    for b in c.as_slice() {
        for axis in Axis::BOTH {
            let k = axis.index();
            for a in 0..3 {
                for bb in 0..3 {
                    m = m.max((b[k][a][bb] - first[k][a][bb]).abs());
                }
            }
        }
    }
    m
}
