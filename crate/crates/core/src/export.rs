//! File formats. All tables are CSV with fixed headers; floats are written in
//! Rust's shortest round-trip notation so that re-reading is exact.
//!
//! Snapshot files (`*.bin`) are little-endian:
//!
//! ```text
//! magic        8 bytes  b"TFIMSNP1"
//! L            u64
//! samples      u64
//! per sample:  t (f64), then the Sx, Sy and Sz grids, each L*L f64 row-major
//!              (index y * L + x)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use crate::dynamics::{Observer, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::lattice::{d_eucl, d_manh, Order, SiteIndex, SystemState, Vec3};
use crate::lightcone::{ArrivalCell, ArrivalMap, VelocityFit};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"TFIMSNP1";
pub const NOT_ARRIVED: &str = "not_arrived";
pub const EXCLUDED: &str = "excluded";

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "site_x", "site_y", "Sx", "Sy", "Sz"];
pub const ENERGY_HEADER: [&str; 2] = ["t", "energy"];
pub const REFERENCE_HEADER: [&str; 4] = ["t", "Sx", "Sy", "Sz"];
pub const ARRIVAL_HEADER: [&str; 5] = ["site_x", "site_y", "d_manh", "d_eucl", "t_arrival"];
pub const VELOCITY_HEADER: [&str; 6] = ["h", "v", "slope", "intercept", "r2", "order"];
pub const ANISOTROPY_HEADER: [&str; 2] = ["r_eucl", "rho"];
pub const DELTA_HEADER: [&str; 4] = ["t", "site_x", "site_y", "delta_x"];
pub const PT_COMPARE_HEADER: [&str; 5] = ["t", "sx_series", "sx_order1", "sx_order2", "abs_diff"];

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes `rows` under `header`, each cell already formatted.
pub fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table, checking the header, and returns its rows.
pub fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let found: Vec<&str> = r.headers()?.iter().collect();
    if found != header {
        return Err(format_error(
            path,
            format!("expected header {header:?}, found {found:?}"),
        ));
    }
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_owned).collect()))
        .collect()
}

pub(crate) fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| format_error(path, format!("not a number: {s:?}")))
}

pub fn write_energy(path: &Path, record: &TrajectoryRecord) -> Result<()> {
    write_table(
        path,
        &ENERGY_HEADER,
        record
            .times
            .iter()
            .zip(&record.energies)
            .map(|(t, e)| [t.to_string(), e.to_string()]),
    )
}

/// Homogeneous reference Bloch vector per sample.
pub fn write_reference(path: &Path, reference: &[(f64, Vec3)]) -> Result<()> {
    write_table(
        path,
        &REFERENCE_HEADER,
        reference.iter().map(|(t, s)| {
            [t.to_string(), s[0].to_string(), s[1].to_string(), s[2].to_string()]
        }),
    )
}

pub fn read_reference(path: &Path) -> Result<Vec<(f64, Vec3)>> {
    read_table(path, &REFERENCE_HEADER)?
        .iter()
        .map(|row| {
            Ok((
                parse_f64(path, &row[0])?,
                [
                    parse_f64(path, &row[1])?,
                    parse_f64(path, &row[2])?,
                    parse_f64(path, &row[3])?,
                ],
            ))
        })
        .collect()
}

fn cell_text(c: ArrivalCell) -> String {
    match c {
        ArrivalCell::Arrived(t) => t.to_string(),
        ArrivalCell::NotArrived => NOT_ARRIVED.to_owned(),
        ArrivalCell::Excluded => EXCLUDED.to_owned(),
    }
}

/// One row per site; distances are minimal-image from the perturbation site.
pub fn write_arrival_map(path: &Path, map: &ArrivalMap) -> Result<()> {
    write_table(
        path,
        &ARRIVAL_HEADER,
        map.iter().map(|(site, cell)| {
            let r = map.displacement(site);
            [
                site.x.to_string(),
                site.y.to_string(),
                d_manh(r).to_string(),
                d_eucl(r).to_string(),
                cell_text(cell),
            ]
        }),
    )
}

pub fn read_arrival_map(path: &Path, l: usize, origin: SiteIndex, epsilon: f64) -> Result<ArrivalMap> {
    let mut map = ArrivalMap::empty(l, origin, epsilon);
    let rows = read_table(path, &ARRIVAL_HEADER)?;
    if rows.len() != l * l {
        return Err(format_error(path, format!("expected {} rows, got {}", l * l, rows.len())));
    }
    for row in rows {
        let parse_idx = |s: &str| -> Result<usize> {
            s.parse()
                .ok()
                .filter(|v| *v < l)
                .ok_or_else(|| format_error(path, format!("bad site coordinate {s:?}")))
        };
        let site = SiteIndex::new(parse_idx(&row[0])?, parse_idx(&row[1])?);
        let cell = match row[4].as_str() {
            NOT_ARRIVED => ArrivalCell::NotArrived,
            EXCLUDED => ArrivalCell::Excluded,
            s => ArrivalCell::Arrived(parse_f64(path, s)?),
        };
        map.cells[site.offset(l)] = cell;
    }
    Ok(map)
}

/// One row per `(h, order, fit)`.
pub fn write_velocities(path: &Path, rows: &[(f64, Order, VelocityFit)]) -> Result<()> {
    write_table(
        path,
        &VELOCITY_HEADER,
        rows.iter().map(|(h, order, fit)| {
            [
                h.to_string(),
                fit.velocity().to_string(),
                fit.slope.to_string(),
                fit.intercept.to_string(),
                fit.r_squared.to_string(),
                order.to_string(),
            ]
        }),
    )
}

pub fn write_anisotropy(path: &Path, profile: &[(f64, f64)]) -> Result<()> {
    write_table(
        path,
        &ANISOTROPY_HEADER,
        profile.iter().map(|(r, rho)| [r.to_string(), rho.to_string()]),
    )
}

/// `Delta^x` grids at selected times.
pub fn write_delta_snapshots(path: &Path, l: usize, snapshots: &[(f64, Vec<f64>)]) -> Result<()> {
    write_table(
        path,
        &DELTA_HEADER,
        snapshots.iter().flat_map(|(t, grid)| {
            grid.iter().enumerate().map(move |(i, d)| {
                let s = SiteIndex::from_offset(i, l);
                [t.to_string(), s.x.to_string(), s.y.to_string(), d.to_string()]
            })
        }),
    )
}

/// Observer writing `t,site_x,site_y,Sx,Sy,Sz` for a fixed list of sites.
pub struct TrajectoryCsv {
    writer: csv::Writer<BufWriter<File>>,
    sites: Vec<SiteIndex>,
}

impl TrajectoryCsv {
    pub fn create(path: &Path, sites: Vec<SiteIndex>) -> Result<Self> {
        let mut writer = writer(path)?;
        writer.write_record(TRAJECTORY_HEADER)?;
        Ok(TrajectoryCsv { writer, sites })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

impl Observer for TrajectoryCsv {
    fn observe(&mut self, _sample: usize, state: &SystemState) -> Result<ControlFlow<()>> {
        let t = state.t.to_string();
        for &site in &self.sites {
            let s = state.spins.get(site);
            self.writer.write_record([
                t.clone(),
                site.x.to_string(),
                site.y.to_string(),
                s[0].to_string(),
                s[1].to_string(),
                s[2].to_string(),
            ])?;
        }
        Ok(ControlFlow::Continue(()))
    }
}

/// Observer streaming full spin grids into the binary snapshot format.
pub struct SnapshotWriter {
    out: BufWriter<File>,
    l: usize,
    samples: u64,
    buf: Vec<u8>,
}

impl SnapshotWriter {
    pub fn create(path: &Path, l: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&(l as u64).to_le_bytes())?;
        out.write_all(&0u64.to_le_bytes())?;
        Ok(SnapshotWriter {
            out,
            l,
            samples: 0,
            buf: Vec::with_capacity(8 * (1 + 3 * l * l)),
        })
    }

    /// Patches the sample count into the header and flushes.
    pub fn finish(mut self) -> Result<u64> {
        self.out.flush()?;
        let file = self.out.get_mut();
        file.seek(SeekFrom::Start(16))?;
        file.write_all(&self.samples.to_le_bytes())?;
        file.flush()?;
        Ok(self.samples)
    }
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, _sample: usize, state: &SystemState) -> Result<ControlFlow<()>> {
        if state.l() != self.l {
            return Err(Error::Mismatch(format!(
                "snapshot file has side {}, state has {}",
                self.l,
                state.l()
            )));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&state.t.to_le_bytes());
        for a in 0..3 {
            for s in state.spins.as_slice() {
                self.buf.extend_from_slice(&s[a].to_le_bytes());
            }
        }
        self.out.write_all(&self.buf)?;
        self.samples += 1;
        Ok(ControlFlow::Continue(()))
    }
}

/// Sequential reader for snapshot files.
pub struct SnapshotReader {
    input: BufReader<File>,
    path: PathBuf,
    l: usize,
    samples: u64,
    read: u64,
    buf: Vec<u8>,
}

impl SnapshotReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut head = [0u8; 24];
        input
            .read_exact(&mut head)
            .map_err(|_| format_error(path, "truncated header"))?;
        if &head[..8] != SNAPSHOT_MAGIC {
            return Err(format_error(path, "bad magic"));
        }
        let l = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
        let samples = u64::from_le_bytes(head[16..24].try_into().unwrap());
        if l < 3 {
            return Err(format_error(path, format!("lattice side {l} < 3")));
        }
        Ok(SnapshotReader {
            input,
            path: path.to_path_buf(),
            l,
            samples,
            read: 0,
            buf: vec![0u8; 8 * (1 + 3 * l * l)],
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Next `(t, spins)` in row-major order, or `None` after the last sample.
    pub fn next_sample(&mut self) -> Option<Result<(f64, Vec<Vec3>)>> {
        if self.read == self.samples {
            return None;
        }
        if self.input.read_exact(&mut self.buf).is_err() {
            return Some(Err(format_error(
                &self.path,
                format!("truncated at sample {}", self.read),
            )));
        }
        self.read += 1;
        let f = |k: usize| f64::from_le_bytes(self.buf[8 * k..8 * k + 8].try_into().unwrap());
        let n = self.l * self.l;
        let t = f(0);
        let spins = (0..n).map(|i| [f(1 + i), f(1 + n + i), f(1 + 2 * n + i)]).collect();
        Some(Ok((t, spins)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_with;
    use crate::dynamics::Recording;
    use crate::lattice::{build_perturbed_state, ModelParams, Order};

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("tfim-export-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn snapshots_round_trip_bitwise() {
        let params = ModelParams {
            t_end: 0.5,
            ..ModelParams::new(5, 0.6, Order::First)
        };
        let path = tmp("snap.bin");
        let mut w = SnapshotWriter::create(&path, 5).unwrap();
        let rec = integrate_with(
            &build_perturbed_state(&params, SiteIndex::new(1, 2)),
            &params,
            Recording::Full,
            &mut [&mut w],
        )
        .unwrap();
        assert_eq!(w.finish().unwrap(), rec.len() as u64);

        let mut r = SnapshotReader::open(&path).unwrap();
        assert_eq!((r.l(), r.samples()), (5, rec.len() as u64));
        let mut k = 0;
        while let Some(s) = r.next_sample() {
            let (t, spins) = s.unwrap();
            assert_eq!(t.to_bits(), rec.times[k].to_bits());
            assert_eq!(spins.as_slice(), rec.snapshots[k].as_slice());
            k += 1;
        }
        assert_eq!(k, rec.len());
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 24 + rec.len() * 8 * (1 + 75));
    }

    #[test]
    fn corrupt_snapshot_rejected() {
        let path = tmp("bad.bin");
        std::fs::write(&path, b"NOTMAGIC........................").unwrap();
        assert!(matches!(SnapshotReader::open(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn arrival_map_csv_round_trip() {
        let mut map = ArrivalMap::empty(9, SiteIndex::new(2, 2), 1e-3);
        map.cells[SiteIndex::new(3, 2).offset(9)] = ArrivalCell::Arrived(0.1 + 0.2);
        let path = tmp("arrival.csv");
        write_arrival_map(&path, &map).unwrap();
        let back = read_arrival_map(&path, 9, SiteIndex::new(2, 2), 1e-3).unwrap();
        assert_eq!(back, map);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("site_x,site_y,d_manh,d_eucl,t_arrival\n"));
        assert!(text.contains("3,2,1,1,0.30000000000000004\n"));
    }

    #[test]
    fn header_checked() {
        let path = tmp("ref.csv");
        write_reference(&path, &[(0.0, [1.0, 0.0, 0.0])]).unwrap();
        assert!(read_reference(&path).is_ok());
        assert!(matches!(read_table(&path, &ENERGY_HEADER), Err(Error::Format { .. })));
    }
}
