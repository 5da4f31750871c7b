//! Difference field between the perturbed and ordered trajectories, arrival
//! times of the perturbation, front-velocity and scaling fits, and the
//! Manhattan-versus-Euclidean shape of the wavefront.

use std::ops::ControlFlow;

use crate::dynamics::{integrate_with, Observer, Recording, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::lattice::{
    build_ordered_state, build_perturbed_state, d_manh, torus_displacement, Axis,
    Displacement, ModelParams, SiteIndex, SpinField, SystemState, Vec3, X,
};

/// Default lower end of the velocity-fit window; the first few sites carry
/// the launch transient.
pub const DEFAULT_FIT_R_MIN: usize = 5;

/// `Delta_r(t) = S^lp_r(t) - S^or_r(t)` on every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaSeries {
    pub l: usize,
    /// Site of the initial flip.
    pub origin: SiteIndex,
    pub times: Vec<f64>,
    /// One row-major `L x L` field per sample.
    pub fields: Vec<Vec<Vec3>>,
}

impl DeltaSeries {
    /// Largest component magnitude `max_a |Delta^a_r|` of sample `k` at `site`.
    pub fn magnitude(&self, k: usize, site: SiteIndex) -> f64 {
        max_component(self.fields[k][site.offset(self.l)])
    }

    /// Sites with `max_a |Delta^a| > epsilon` in sample `k`.
    pub fn support(&self, k: usize, epsilon: f64) -> Vec<SiteIndex> {
        self.fields[k]
            .iter()
            .enumerate()
            .filter(|(_, d)| max_component(**d) > epsilon)
            .map(|(i, _)| SiteIndex::from_offset(i, self.l))
            .collect()
    }
}

#[inline]
fn max_component(d: Vec3) -> f64 {
    d[0].abs().max(d[1].abs()).max(d[2].abs())
}

/// Pointwise difference of two trajectories sampled on the same grid.
///
/// The perturbation site is taken as the site with the largest difference in
/// the first sample (lowest offset on ties, so an all-zero series reports
/// the origin).
pub fn delta_field(traj_lp: &TrajectoryRecord, traj_or: &TrajectoryRecord) -> Result<DeltaSeries> {
    if traj_lp.times != traj_or.times {
        return Err(Error::Mismatch("trajectories have different sample times".into()));
    }
    if traj_lp.snapshots.len() != traj_lp.times.len() || traj_or.snapshots.len() != traj_or.times.len()
    {
        return Err(Error::Mismatch("trajectories must carry a snapshot per sample".into()));
    }
    let Some(first) = traj_lp.snapshots.first() else {
        return Err(Error::Mismatch("empty trajectory".into()));
    };
    let l = first.l();
    if traj_lp.snapshots.iter().chain(&traj_or.snapshots).any(|s| s.l() != l) {
        return Err(Error::Mismatch("trajectories have different lattice sizes".into()));
    }
    let fields: Vec<Vec<Vec3>> = traj_lp
        .snapshots
        .iter()
        .zip(&traj_or.snapshots)
        .map(|(a, b)| difference(a, b))
        .collect();
    let origin = locate_origin(&fields[0], l);
    Ok(DeltaSeries {
        l,
        origin,
        times: traj_lp.times.clone(),
        fields,
    })
}

fn difference(a: &SpinField, b: &SpinField) -> Vec<Vec3> {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(u, v)| [u[0] - v[0], u[1] - v[1], u[2] - v[2]])
        .collect()
}

fn locate_origin(field: &[Vec3], l: usize) -> SiteIndex {
    let mut best = (0, 0.0);
    for (i, d) in field.iter().enumerate() {
        let m = max_component(*d);
        if m > best.1 {
            best = (i, m);
        }
    }
    SiteIndex::from_offset(best.0, l)
}

/// Outcome of arrival detection at one site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Arrival {
    At(f64),
    /// Threshold never exceeded within the simulated horizon.
    NotArrived,
}

impl Arrival {
    pub fn time(self) -> Option<f64> {
        match self {
            Arrival::At(t) => Some(t),
            Arrival::NotArrived => None,
        }
    }
}

/// First upward crossing of `epsilon`, interpolated linearly between the
/// bracketing samples.
fn crossing(prev: Option<(f64, f64)>, t: f64, m: f64, epsilon: f64) -> Option<f64> {
    if m <= epsilon {
        return None;
    }
    Some(match prev {
        None => t,
        Some((t0, m0)) => t0 + (epsilon - m0) / (m - m0) * (t - t0),
    })
}

/// First time `max_a |Delta^a_r(t)|` exceeds `epsilon`.
pub fn arrival_time(series: &DeltaSeries, r: SiteIndex, epsilon: f64) -> Arrival {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut prev = None;
    for (k, &t) in series.times.iter().enumerate() {
        let m = series.magnitude(k, r);
        if let Some(ta) = crossing(prev, t, m, epsilon) {
            return Arrival::At(ta);
        }
        prev = Some((t, m));
    }
    Arrival::NotArrived
}

/// Per-site status in an [`ArrivalMap`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArrivalCell {
    Arrived(f64),
    NotArrived,
    /// Outside the wrap-safe region in space or time.
    Excluded,
}

impl ArrivalCell {
    pub fn time(self) -> Option<f64> {
        match self {
            ArrivalCell::Arrived(t) => Some(t),
            _ => None,
        }
    }
}

/// Largest minimal-image Manhattan distance analysed on an `L x L` torus.
pub fn wrap_safe_radius(l: usize) -> f64 {
    l as f64 / 2.0 - 2.0
}

/// Arrival times of one threshold over the whole lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalMap {
    pub l: usize,
    pub origin: SiteIndex,
    pub epsilon: f64,
    pub cells: Vec<ArrivalCell>,
}

impl ArrivalMap {
    /// Map with every site inside the wrap-safe radius `NotArrived`, the
    /// origin at 0 and everything else `Excluded`.
    pub fn empty(l: usize, origin: SiteIndex, epsilon: f64) -> Self {
        let radius = wrap_safe_radius(l);
        let cells = (0..l * l)
            .map(|i| {
                let site = SiteIndex::from_offset(i, l);
                if site == origin {
                    ArrivalCell::Arrived(0.0)
                } else if d_manh(torus_displacement(origin, site, l)) > radius {
                    ArrivalCell::Excluded
                } else {
                    ArrivalCell::NotArrived
                }
            })
            .collect();
        ArrivalMap {
            l,
            origin,
            epsilon,
            cells,
        }
    }

    pub fn get(&self, site: SiteIndex) -> ArrivalCell {
        self.cells[site.offset(self.l)]
    }

    /// Cell at displacement `(dx, dy)` from the origin.
    pub fn at(&self, dx: i64, dy: i64) -> ArrivalCell {
        self.get(self.origin.shifted(dx, dy, self.l))
    }

    pub fn displacement(&self, site: SiteIndex) -> Displacement {
        torus_displacement(self.origin, site, self.l)
    }

    /// Marks arrivals later than `t_wrap` as excluded.
    pub fn apply_wrap_horizon(&mut self, t_wrap: f64) {
        for c in &mut self.cells {
            if let ArrivalCell::Arrived(t) = *c {
                if t > t_wrap {
                    *c = ArrivalCell::Excluded;
                }
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SiteIndex, ArrivalCell)> + '_ {
        let l = self.l;
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, c)| (SiteIndex::from_offset(i, l), *c))
    }

    pub fn arrived_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, ArrivalCell::Arrived(_)))
            .count()
    }

    /// True when no site inside the wrap-safe radius is still waiting.
    pub fn is_covered(&self) -> bool {
        !self.cells.contains(&ArrivalCell::NotArrived)
    }
}

/// Arrival map of a stored difference series.
pub fn arrival_map(series: &DeltaSeries, epsilon: f64) -> ArrivalMap {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut tracker = ArrivalTracker::new(series.l, series.origin, epsilon);
    for (k, &t) in series.times.iter().enumerate() {
        let mags: Vec<f64> = series.fields[k].iter().map(|d| max_component(*d)).collect();
        tracker.push(t, &mags);
    }
    tracker.into_map()
}

/// Streaming arrival detector fed one magnitude field per sample; gives the
/// same result as [`arrival_map`] without storing the series.
#[derive(Clone, Debug)]
pub struct ArrivalTracker {
    map: ArrivalMap,
    prev: Option<(f64, Vec<f64>)>,
}

impl ArrivalTracker {
    pub fn new(l: usize, origin: SiteIndex, epsilon: f64) -> Self {
        ArrivalTracker {
            map: ArrivalMap::empty(l, origin, epsilon),
            prev: None,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.map.epsilon
    }

    /// `magnitudes[i] = max_a |Delta^a|` at row-major site `i`, time `t`.
    pub fn push(&mut self, t: f64, magnitudes: &[f64]) {
        let eps = self.map.epsilon;
        for (i, cell) in self.map.cells.iter_mut().enumerate() {
            if *cell != ArrivalCell::NotArrived {
                continue;
            }
            let prev = self.prev.as_ref().map(|(t0, m0)| (*t0, m0[i]));
            if let Some(ta) = crossing(prev, t, magnitudes[i], eps) {
                *cell = ArrivalCell::Arrived(ta);
            }
        }
        match &mut self.prev {
            Some((t0, m0)) => {
                *t0 = t;
                m0.copy_from_slice(magnitudes);
            }
            None => self.prev = Some((t, magnitudes.to_vec())),
        }
    }

    pub fn map(&self) -> &ArrivalMap {
        &self.map
    }

    pub fn into_map(self) -> ArrivalMap {
        self.map
    }
}

/// Least-squares line `t_arrival = slope * r + intercept` along an axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityFit {
    /// Time per lattice unit.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub r_range: (usize, usize),
    pub points: usize,
}

impl VelocityFit {
    pub fn velocity(&self) -> f64 {
        1.0 / self.slope
    }

    /// Fitted arrival time at distance `r`.
    pub fn time_at(&self, r: f64) -> f64 {
        self.intercept + self.slope * r
    }
}

/// Ordinary least squares; returns `(slope, intercept, r_squared)`.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

/// Straight-line fit of arrival times at `(r, 0)` (or `(0, r)`) for
/// `r_min <= r <= r_max`. On the axis the Euclidean and Manhattan distances
/// coincide.
pub fn fit_velocity(map: &ArrivalMap, direction: Axis, r_min: usize, r_max: usize) -> Result<VelocityFit> {
    let (ux, uy) = direction.unit();
    let (rs, ts): (Vec<f64>, Vec<f64>) = (r_min..=r_max)
        .filter_map(|r| {
            let r_i = r as i64;
            map.at(ux * r_i, uy * r_i).time().map(|t| (r as f64, t))
        })
        .unzip();
    if rs.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 arrived sites on the {direction:?} axis in [{r_min}, {r_max}], found {}",
            rs.len()
        )));
    }
    let (slope, intercept, r_squared) = ols(&rs, &ts);
    if !(slope > 0.0) {
        return Err(Error::Fit(format!(
            "arrival times do not increase with distance (slope {slope})"
        )));
    }
    Ok(VelocityFit {
        slope,
        intercept,
        r_squared,
        r_range: (r_min, r_max),
        points: rs.len(),
    })
}

/// Power law `v = prefactor * h^exponent` fitted in log-log space.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// `ln v - ln(prefactor * h^exponent)` per input point.
    pub residuals: Vec<f64>,
}

pub fn fit_scaling(velocities: &[(f64, f64)]) -> Result<ScalingFit> {
    if let Some((h, v)) = velocities.iter().find(|(h, v)| !(*h > 0.0 && *v > 0.0)) {
        return Err(Error::Fit(format!(
            "scaling fit needs positive h and v, got h = {h}, v = {v}"
        )));
    }
    let mut distinct: Vec<f64> = velocities.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "scaling fit needs at least 3 distinct h values, got {}",
            distinct.len()
        )));
    }
    let xs: Vec<f64> = velocities.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = velocities.iter().map(|p| p.1.ln()).collect();
    let (exponent, log_pref, _) = ols(&xs, &ys);
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (exponent * x + log_pref))
        .collect();
    Ok(ScalingFit {
        exponent,
        prefactor: log_pref.exp(),
        residuals,
    })
}

/// Ratio of diagonal to axis arrival times at equal Euclidean distance.
///
/// Returns `(r, rho)` for integer axis radii `r`; the diagonal times, known at
/// `a * sqrt(2)`, are interpolated linearly in `r`. A Manhattan front gives
/// `rho = sqrt(2)`, a circular front `rho = 1`.
pub fn anisotropy_profile(map: &ArrivalMap) -> Result<Vec<(f64, f64)>> {
    let mut diag = vec![(0.0, 0.0)];
    for a in 1.. {
        match map.at(a, a).time() {
            Some(t) => diag.push((a as f64 * std::f64::consts::SQRT_2, t)),
            None => break,
        }
        if a as usize > map.l {
            break;
        }
    }
    let mut out = Vec::new();
    if diag.len() >= 2 {
        let r_last = diag.last().unwrap().0;
        let mut r = 2usize;
        while (r as f64) <= r_last {
            let Some(t_axis) = map.at(r as i64, 0).time() else {
                break;
            };
            let rf = r as f64;
            let k = diag.partition_point(|(rd, _)| *rd < rf).max(1);
            let (r0, t0) = diag[k - 1];
            let (r1, t1) = diag[k];
            let t_diag = t0 + (rf - r0) / (r1 - r0) * (t1 - t0);
            out.push((rf, t_diag / t_axis));
            r += 1;
        }
    }
    if out.is_empty() {
        return Err(Error::Analysis(
            "no radius with arrivals on both the axis and the diagonal".into(),
        ));
    }
    Ok(out)
}

/// Front velocity of the one-dimensional model: `h` below `J`, `J` above.
pub fn v1d_reference(h: f64, j: f64) -> f64 {
    assert!(h >= 0.0 && j > 0.0);
    if h <= j {
        h
    } else {
        j
    }
}

/// Reference trajectory of the ordered state. The state stays homogeneous, so
/// it is integrated on a `3 x 3` torus, which performs the same per-site
/// arithmetic as any larger lattice.
pub fn homogeneous_reference(params: &ModelParams) -> Result<Vec<(f64, Vec3)>> {
    let small = ModelParams {
        l: 3,
        ..params.clone()
    };
    let rec = integrate_with(&build_ordered_state(&small), &small, Recording::Full, &mut [])?;
    Ok(rec
        .times
        .iter()
        .zip(&rec.snapshots)
        .map(|(t, s)| (*t, s.get(SiteIndex::ORIGIN)))
        .collect())
}

/// Controls for [`run_lightcone`].
#[derive(Clone, Debug, PartialEq)]
pub struct LightconeOptions {
    pub origin: SiteIndex,
    /// Thresholds tracked in one pass; `params.epsilon_arrival` is always
    /// included.
    pub extra_epsilons: Vec<f64>,
    /// Stop as soon as every wrap-safe site has arrived for every threshold.
    pub stop_when_covered: bool,
    /// Times at which to keep the full `Delta^x` field (nearest sample).
    pub snapshot_times: Vec<f64>,
    pub fit_r_min: usize,
}

impl Default for LightconeOptions {
    fn default() -> Self {
        LightconeOptions {
            origin: SiteIndex::ORIGIN,
            extra_epsilons: Vec::new(),
            stop_when_covered: true,
            snapshot_times: Vec::new(),
            fit_r_min: DEFAULT_FIT_R_MIN,
        }
    }
}

/// Arrival analysis for one threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct LightconeAnalysis {
    pub epsilon: f64,
    /// Map after the spatial and temporal wrap cuts.
    pub map: ArrivalMap,
    pub provisional_fit: VelocityFit,
    pub t_wrap: f64,
    pub fit: VelocityFit,
    pub anisotropy: Option<Vec<(f64, f64)>>,
}

/// Fits the `+x` axis, cuts arrivals later than the time the fitted front
/// reaches `L/2` (where it meets its own periodic image), and refits.
pub fn analyze_map(map: &ArrivalMap, r_min: usize) -> Result<LightconeAnalysis> {
    let r_max = wrap_safe_radius(map.l).floor().max(0.0) as usize;
    let provisional_fit = fit_velocity(map, Axis::X, r_min, r_max)?;
    let t_wrap = provisional_fit.time_at(map.l as f64 / 2.0);
    let mut cut = map.clone();
    cut.apply_wrap_horizon(t_wrap);
    let fit = fit_velocity(&cut, Axis::X, r_min, r_max)?;
    let anisotropy = anisotropy_profile(&cut).ok();
    Ok(LightconeAnalysis {
        epsilon: map.epsilon,
        map: cut,
        provisional_fit,
        t_wrap,
        fit,
        anisotropy,
    })
}

/// Output of [`run_lightcone`].
#[derive(Clone, Debug)]
pub struct LightconeRun {
    pub params: ModelParams,
    pub origin: SiteIndex,
    /// Raw maps (spatial cut only), one per tracked threshold; the first is
    /// `params.epsilon_arrival`.
    pub maps: Vec<ArrivalMap>,
    pub reference: Vec<(f64, Vec3)>,
    /// Energy series of the perturbed run.
    pub record: TrajectoryRecord,
    pub delta_x_snapshots: Vec<(f64, Vec<f64>)>,
    pub t_final: f64,
}

impl LightconeRun {
    pub fn map_for(&self, epsilon: f64) -> Option<&ArrivalMap> {
        self.maps.iter().find(|m| m.epsilon == epsilon)
    }
}

/// Writes `max_a |S_r^a - reference^a|` for every site into `out`.
pub fn delta_magnitudes(spins: &[Vec3], reference: Vec3, out: &mut [f64]) {
    for (m, s) in out.iter_mut().zip(spins) {
        *m = max_component([s[0] - reference[0], s[1] - reference[1], s[2] - reference[2]]);
    }
}

/// Sample indices nearest to each requested time, clamped to the run.
pub fn nearest_samples(times: &[f64], sample_dt: f64, n_samples: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = times
        .iter()
        .map(|t| ((t / sample_dt).round().max(0.0) as usize).min(n_samples.saturating_sub(1)))
        .collect();
    idx.dedup();
    idx
}

/// Streams `Delta` into arrival trackers and optional snapshot capture.
struct DeltaObserver<'a> {
    reference: &'a [(f64, Vec3)],
    trackers: Vec<ArrivalTracker>,
    magnitudes: Vec<f64>,
    snapshot_samples: Vec<usize>,
    snapshots: Vec<(f64, Vec<f64>)>,
    stop_when_covered: bool,
    last_t: f64,
}

impl Observer for DeltaObserver<'_> {
    fn observe(&mut self, sample: usize, state: &SystemState) -> Result<ControlFlow<()>> {
        let (t_ref, s_ref) = self.reference[sample];
        debug_assert!((t_ref - state.t).abs() < 1e-9);
        let spins = state.spins.as_slice();
        delta_magnitudes(spins, s_ref, &mut self.magnitudes);
        for tr in &mut self.trackers {
            tr.push(state.t, &self.magnitudes);
        }
        if self.snapshot_samples.contains(&sample) {
            self.snapshots
                .push((state.t, spins.iter().map(|s| s[X] - s_ref[X]).collect()));
        }
        self.last_t = state.t;
        let done = self.stop_when_covered && self.trackers.iter().all(|t| t.map().is_covered());
        Ok(if done {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        })
    }
}

/// Integrates the perturbed state and measures arrival times against the
/// homogeneous reference without storing the full series. `observers` see
/// every sample of the perturbed run.
pub fn run_lightcone(
    params: &ModelParams,
    options: &LightconeOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<LightconeRun> {
    params.validate()?;
    let reference = homogeneous_reference(params)?;
    let mut epsilons = vec![params.epsilon_arrival];
    for &e in &options.extra_epsilons {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::invalid("epsilon", format!("must lie in (0, 1), got {e}")));
        }
        if !epsilons.contains(&e) {
            epsilons.push(e);
        }
    }
    let sample_dt = params.dt * params.sample_interval as f64;
    let n_samples = reference.len();
    let snapshot_samples = nearest_samples(&options.snapshot_times, sample_dt, n_samples);

    let mut delta = DeltaObserver {
        reference: &reference,
        trackers: epsilons
            .iter()
            .map(|&e| ArrivalTracker::new(params.l, options.origin, e))
            .collect(),
        magnitudes: vec![0.0; params.sites()],
        snapshot_samples,
        snapshots: Vec::new(),
        stop_when_covered: options.stop_when_covered,
        last_t: 0.0,
    };
    let initial = build_perturbed_state(params, options.origin);
    let record = {
        let mut all: Vec<&mut dyn Observer> = Vec::with_capacity(observers.len() + 1);
        all.push(&mut delta);
        for o in observers.iter_mut() {
            all.push(&mut **o);
        }
        integrate_with(&initial, params, Recording::EnergyOnly, &mut all)?
    };
    Ok(LightconeRun {
        params: params.clone(),
        origin: options.origin,
        maps: delta.trackers.into_iter().map(ArrivalTracker::into_map).collect(),
        t_final: delta.last_t,
        delta_x_snapshots: delta.snapshots,
        reference,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate;
    use crate::lattice::{d_eucl, Order};

    fn synthetic(l: usize, time: impl Fn(Displacement) -> f64) -> ArrivalMap {
        let mut map = ArrivalMap::empty(l, SiteIndex::ORIGIN, 1e-3);
        for i in 0..l * l {
            let site = SiteIndex::from_offset(i, l);
            if map.cells[i] == ArrivalCell::NotArrived {
                map.cells[i] = ArrivalCell::Arrived(time(map.displacement(site)));
            }
        }
        map
    }

    #[test]
    fn velocity_of_exact_line() {
        let v0 = 0.37;
        let map = synthetic(41, |r| d_manh(r) / v0);
        let fit = fit_velocity(&map, Axis::X, 5, 18).unwrap();
        assert!((fit.velocity() - v0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert_eq!(fit.points, 14);
    }

    #[test]
    fn velocity_fit_needs_points() {
        let map = ArrivalMap::empty(21, SiteIndex::ORIGIN, 1e-3);
        assert!(matches!(fit_velocity(&map, Axis::X, 5, 8), Err(Error::Fit(_))));
    }

    #[test]
    fn scaling_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.3, 0.4, 0.5, 0.6].iter().map(|&h| (h, 0.14 * h * h)).collect();
        let fit = fit_scaling(&pts).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-12);
        assert!((fit.prefactor - 0.14).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
        assert!(fit_scaling(&[(0.3, 0.1), (0.0, 0.2), (0.5, 0.3)]).is_err());
        assert!(fit_scaling(&[(0.3, 0.1), (0.3, 0.2), (0.5, 0.3)]).is_err());
    }

    #[test]
    fn anisotropy_limits() {
        let manh = synthetic(61, |r| d_manh(r) / 0.5);
        let prof = anisotropy_profile(&manh).unwrap();
        assert!(!prof.is_empty());
        for (_, rho) in &prof {
            assert!((rho - 2f64.sqrt()).abs() < 1e-12);
        }
        let eucl = synthetic(61, |r| d_eucl(r) / 0.5);
        for (_, rho) in anisotropy_profile(&eucl).unwrap() {
            assert!((rho - 1.0).abs() < 1e-12);
        }
        let empty = ArrivalMap::empty(21, SiteIndex::ORIGIN, 1e-3);
        assert!(anisotropy_profile(&empty).is_err());
    }

    #[test]
    fn one_dimensional_velocity() {
        assert_eq!(v1d_reference(0.5, 1.0), 0.5);
        assert_eq!(v1d_reference(2.0, 1.0), 1.0);
        assert_eq!(v1d_reference(1.0, 1.0), 1.0);
    }

    #[test]
    fn crossing_interpolates() {
        assert_eq!(crossing(None, 0.0, 2.0, 1e-3), Some(0.0));
        assert_eq!(crossing(Some((1.0, 0.0)), 2.0, 1.0, 0.25), Some(1.25));
        assert_eq!(crossing(Some((1.0, 0.0)), 2.0, 0.1, 0.25), None);
    }

    fn small_pair(h: f64) -> (ModelParams, TrajectoryRecord, TrajectoryRecord) {
        let params = ModelParams {
            t_end: 2.0,
            ..ModelParams::new(9, h, Order::First)
        };
        let lp = integrate(&build_perturbed_state(&params, SiteIndex::ORIGIN), &params, &mut []).unwrap();
        let or = integrate(&build_ordered_state(&params), &params, &mut []).unwrap();
        (params, lp, or)
    }

    #[test]
    fn delta_of_runs() {
        let (_, lp, or) = small_pair(0.6);
        let d = delta_field(&lp, &or).unwrap();
        assert_eq!(d.origin, SiteIndex::ORIGIN);
        assert_eq!(d.fields[0][0], [-2.0, 0.0, 0.0]);
        assert!(d.fields[0][1..].iter().all(|v| *v == [0.0; 3]));
        assert_eq!(arrival_time(&d, SiteIndex::ORIGIN, 1e-3), Arrival::At(0.0));

        let same = delta_field(&or, &or).unwrap();
        assert!(same.fields.iter().flatten().all(|v| *v == [0.0; 3]));
        let map = arrival_map(&same, 1e-3);
        assert_eq!(map.get(SiteIndex::ORIGIN), ArrivalCell::Arrived(0.0));
        assert_eq!(map.arrived_count(), 1);
        assert!(map
            .iter()
            .all(|(s, c)| s == SiteIndex::ORIGIN || c != ArrivalCell::Arrived(0.0)));
    }

    #[test]
    fn delta_rejects_mismatch() {
        let (params, lp, _) = small_pair(0.6);
        let shorter = ModelParams { t_end: 1.0, ..params };
        let or = integrate(&build_ordered_state(&shorter), &shorter, &mut []).unwrap();
        assert!(matches!(delta_field(&lp, &or), Err(Error::Mismatch(_))));
    }

    #[test]
    fn streaming_reference_matches_full_lattice() {
        let (params, lp, or) = small_pair(0.5);
        let reference = homogeneous_reference(&params).unwrap();
        assert_eq!(reference.len(), or.len());
        for ((t, s), snap) in reference.iter().zip(&or.snapshots) {
            assert!(snap.as_slice().iter().all(|v| v == s));
            let _ = t;
        }
        let series = delta_field(&lp, &or).unwrap();
        let stored = arrival_map(&series, 1e-3);
        let run = run_lightcone(
            &params,
            &LightconeOptions {
                stop_when_covered: false,
                ..Default::default()
            },
            &mut [],
        )
        .unwrap();
        assert_eq!(run.maps[0], stored);
    }

    #[test]
    fn wrap_exclusion() {
        let map = ArrivalMap::empty(11, SiteIndex::new(3, 3), 1e-3);
        // radius 3.5
        assert_eq!(map.at(3, 0), ArrivalCell::NotArrived);
        assert_eq!(map.at(2, 2), ArrivalCell::Excluded);
        assert_eq!(map.at(0, 4), ArrivalCell::Excluded);
        let mut m = synthetic(21, |r| d_manh(r));
        m.apply_wrap_horizon(4.5);
        assert_eq!(m.at(4, 0), ArrivalCell::Arrived(4.0));
        assert_eq!(m.at(5, 0), ArrivalCell::Excluded);
    }
}
