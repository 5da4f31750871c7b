use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use tfim_lightcone::dynamics::Observer;
use tfim_lightcone::export::{
    self, read_reference, write_anisotropy, write_arrival_map, write_delta_snapshots, write_energy,
    write_reference, write_table, write_velocities, SnapshotReader, SnapshotWriter, TrajectoryCsv,
};
use tfim_lightcone::lattice::{ModelParams, Order, X};
use tfim_lightcone::lightcone::{
    analyze_map, delta_magnitudes, fit_scaling, homogeneous_reference, nearest_samples,
    run_lightcone, v1d_reference, ArrivalMap, ArrivalTracker, LightconeAnalysis, LightconeOptions,
    DEFAULT_FIT_R_MIN,
};
use tfim_lightcone::oracle::sx_series;
use tfim_lightcone::Error;

use crate::config::{Command, RunConfig};
use crate::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const ENERGY_FILE: &str = "energy.csv";
pub const SNAPSHOT_FILE: &str = "snapshots.bin";
pub const REFERENCE_FILE: &str = "reference.csv";
pub const DELTA_FILE: &str = "delta_x.csv";
pub const ARRIVAL_FILE: &str = "arrival_map.csv";
pub const VELOCITY_FILE: &str = "velocity.csv";
pub const ANISOTROPY_FILE: &str = "anisotropy.csv";
pub const VELOCITIES_FILE: &str = "velocities.csv";
pub const SCALING_FILE: &str = "scaling.csv";
pub const COMPARISON_FILE: &str = "v_comparison.csv";
pub const PT_COMPARE_FILE: &str = "pt_compare.csv";

pub const SCALING_HEADER: [&str; 4] = ["order", "exponent", "prefactor", "points"];
pub const COMPARISON_HEADER: [&str; 5] = ["h", "v", "v_scaling", "log_residual", "v1d"];

/// Times at which `Delta^x` grids are exported.
pub fn delta_times(t_end: f64) -> Vec<f64> {
    (0..=4).map(|k| t_end * k as f64 / 4.0).collect()
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("invalid `out`: cannot create {}: {e}", dir.display())))
}

/// Dispatches a validated configuration. Output files are written as soon as
/// they are available, so a failing fit still leaves the arrival map behind.
pub fn run_command(config: &RunConfig) -> Result<(), CliError> {
    prepare_dir(&config.output_dir)?;
    config.write_provenance(&config.output_dir)?;
    match &config.command {
        Command::Simulate => simulate(config),
        Command::Sweep => sweep(config),
        Command::Analyze { run_dir } => analyze(config, run_dir),
        Command::PtCompare => pt_compare(config),
    }
}

/// Axis fit, wrap cut and anisotropy; writes the map before fitting.
fn write_analysis(dir: &Path, params: &ModelParams, raw: &ArrivalMap) -> Result<LightconeAnalysis, CliError> {
    write_arrival_map(&dir.join(ARRIVAL_FILE), raw)?;
    let analysis = analyze_map(raw, DEFAULT_FIT_R_MIN)?;
    write_arrival_map(&dir.join(ARRIVAL_FILE), &analysis.map)?;
    write_velocities(&dir.join(VELOCITY_FILE), &[(params.h, params.order, analysis.fit)])?;
    write_anisotropy(&dir.join(ANISOTROPY_FILE), analysis.anisotropy.as_deref().unwrap_or(&[]))?;
    Ok(analysis)
}

fn report(params: &ModelParams, a: &LightconeAnalysis) {
    println!(
        "h = {}  order = {}  v = {:.6}  R^2 = {:.5}  r in [{}, {}]  t_wrap = {:.2}",
        params.h,
        params.order,
        a.fit.velocity(),
        a.fit.r_squared,
        a.fit.r_range.0,
        a.fit.r_range.1,
        a.t_wrap
    );
}

fn simulate(config: &RunConfig) -> Result<(), CliError> {
    let dir = &config.output_dir;
    let params = &config.model;
    let l = params.l;
    let origin = config.perturb_site;
    let sites = (0..=l / 2).map(|r| origin.shifted(r as i64, 0, l)).collect();
    let mut trajectory = TrajectoryCsv::create(&dir.join(TRAJECTORY_FILE), sites)?;
    let mut snapshots = SnapshotWriter::create(&dir.join(SNAPSHOT_FILE), l)?;
    let options = LightconeOptions {
        origin,
        stop_when_covered: false,
        snapshot_times: delta_times(params.t_end),
        ..Default::default()
    };
    let run = run_lightcone(params, &options, &mut [&mut trajectory as &mut dyn Observer, &mut snapshots])?;
    trajectory.finish()?;
    snapshots.finish()?;
    write_energy(&dir.join(ENERGY_FILE), &run.record)?;
    write_reference(&dir.join(REFERENCE_FILE), &run.reference)?;
    write_delta_snapshots(&dir.join(DELTA_FILE), l, &run.delta_x_snapshots)?;
    let analysis = write_analysis(dir, params, &run.maps[0])?;
    report(params, &analysis);
    Ok(())
}

fn analyze(config: &RunConfig, run_dir: &Path) -> Result<(), CliError> {
    let params = &config.model;
    let l = params.l;
    let snap_path = run_dir.join(SNAPSHOT_FILE);
    let reference = read_reference(&run_dir.join(REFERENCE_FILE))?;
    let mut reader = SnapshotReader::open(&snap_path)?;
    let format = |reason: String| Error::Format {
        path: snap_path.clone(),
        reason,
    };
    if reader.l() != l {
        return Err(format(format!("lattice side {} does not match `L = {l}`", reader.l())).into());
    }
    if reader.samples() as usize != reference.len() {
        return Err(format(format!(
            "{} samples but the reference has {}",
            reader.samples(),
            reference.len()
        ))
        .into());
    }
    let sample_dt = params.dt * params.sample_interval as f64;
    let keep = nearest_samples(&delta_times(params.t_end), sample_dt, reference.len());
    let mut tracker = ArrivalTracker::new(l, config.perturb_site, params.epsilon_arrival);
    let mut magnitudes = vec![0.0; l * l];
    let mut delta_x = Vec::new();
    let mut k = 0;
    while let Some(sample) = reader.next_sample() {
        let (t, spins) = sample?;
        let (t_ref, s_ref) = reference[k];
        if t != t_ref {
            return Err(format(format!("sample {k} at t = {t}, reference at t = {t_ref}")).into());
        }
        delta_magnitudes(&spins, s_ref, &mut magnitudes);
        tracker.push(t, &magnitudes);
        if keep.contains(&k) {
            delta_x.push((t, spins.iter().map(|s| s[X] - s_ref[X]).collect()));
        }
        k += 1;
    }
    let dir = &config.output_dir;
    write_delta_snapshots(&dir.join(DELTA_FILE), l, &delta_x)?;
    let analysis = write_analysis(dir, params, tracker.map())?;
    report(params, &analysis);
    Ok(())
}

fn sweep_dir(root: &Path, h: f64) -> PathBuf {
    root.join(format!("h_{h}"))
}

fn sweep_one(config: &RunConfig, h: f64) -> Result<LightconeAnalysis, CliError> {
    let params = ModelParams { h, ..config.model.clone() };
    let dir = sweep_dir(&config.output_dir, h);
    prepare_dir(&dir)?;
    let sub = RunConfig {
        command: Command::Simulate,
        model: params.clone(),
        h_list: Vec::new(),
        perturb_site: config.perturb_site,
        output_dir: dir.clone(),
    };
    sub.write_provenance(&dir)?;
    let options = LightconeOptions {
        origin: config.perturb_site,
        ..Default::default()
    };
    let run = run_lightcone(&params, &options, &mut [])?;
    write_energy(&dir.join(ENERGY_FILE), &run.record)?;
    let analysis = write_analysis(&dir, &params, &run.maps[0])?;
    report(&params, &analysis);
    Ok(analysis)
}

fn sweep(config: &RunConfig) -> Result<(), CliError> {
    // runs are independent; each thread owns its subdirectory
    let results: Vec<(f64, Result<LightconeAnalysis, CliError>)> = thread::scope(|s| {
        let handles: Vec<_> = config
            .h_list
            .iter()
            .map(|&h| (h, s.spawn(move || sweep_one(config, h))))
            .collect();
        handles
            .into_iter()
            .map(|(h, handle)| (h, handle.join().expect("sweep worker panicked")))
            .collect()
    });
    let order = config.model.order;
    let mut fits = Vec::new();
    let mut first_err = None;
    for (h, r) in results {
        match r {
            Ok(a) => fits.push((h, order, a.fit)),
            Err(e) => {
                eprintln!("h = {h}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let dir = &config.output_dir;
    write_velocities(&dir.join(VELOCITIES_FILE), &fits)?;
    if let Some(e) = first_err {
        return Err(e);
    }
    let points: Vec<(f64, f64)> = fits.iter().map(|(h, _, f)| (*h, f.velocity())).collect();
    let scaling = fit_scaling(&points)?;
    write_table(
        &dir.join(SCALING_FILE),
        &SCALING_HEADER,
        [[
            order.to_string(),
            scaling.exponent.to_string(),
            scaling.prefactor.to_string(),
            points.len().to_string(),
        ]],
    )?;
    let j = config.model.j;
    write_table(
        &dir.join(COMPARISON_FILE),
        &COMPARISON_HEADER,
        points.iter().zip(&scaling.residuals).map(|((h, v), res)| {
            [
                h.to_string(),
                v.to_string(),
                (scaling.prefactor * h.powf(scaling.exponent)).to_string(),
                res.to_string(),
                v1d_reference(*h, j).to_string(),
            ]
        }),
    )?;
    println!(
        "order {order}: v ~ {:.5} h^{:.4} over {} fields",
        scaling.prefactor,
        scaling.exponent,
        points.len()
    );
    Ok(())
}

/// Rows `t, series, order 1, order 2, |series - configured order|` of the
/// homogeneous quench on `[0, t_end]`.
pub fn pt_compare_rows(params: &ModelParams) -> Result<Vec<[f64; 5]>, Error> {
    let with = |order| ModelParams { order, ..params.clone() };
    let first = homogeneous_reference(&with(Order::First))?;
    let second = homogeneous_reference(&with(Order::Second))?;
    Ok(first
        .iter()
        .zip(&second)
        .map(|(&(t, s1), &(_, s2))| {
            let series = sx_series(params.h, params.j, t);
            let own = match params.order {
                Order::First => s1[X],
                Order::Second => s2[X],
            };
            [t, series, s1[X], s2[X], (series - own).abs()]
        })
        .collect())
}

fn pt_compare(config: &RunConfig) -> Result<(), CliError> {
    let rows = pt_compare_rows(&config.model)?;
    write_table(
        &config.output_dir.join(PT_COMPARE_FILE),
        &export::PT_COMPARE_HEADER,
        rows.iter().map(|r| r.map(|x| x.to_string())),
    )?;
    let worst = rows.iter().map(|r| r[4]).fold(0.0, f64::max);
    println!(
        "h = {}  order = {}  max |series - integrator| = {worst:.3e} over Jt in [0, {}]",
        config.model.h,
        config.model.order,
        config.model.j * config.model.t_end
    );
    Ok(())
}
