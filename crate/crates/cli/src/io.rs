//! Output formats: the diagnostics CSV and the binary field snapshot.
//!
//! Snapshot layout, little-endian throughout:
//!
//! ```text
//! "CHDG" | u32 version = 1 | u32 ndims | u32 dims[ndims] | f64 time | f64 length[ndims] | f64 values[..]
//! ```
//!
//! Values are row-major with the last axis fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chdg_core::diagnostics::DiagnosticsRecord;
use chdg_core::{Field, Grid};

use crate::error::{CliError, Result};

pub const CSV_HEADER: [&str; 11] = [
    "t",
    "mass",
    "energy",
    "J",
    "dissipation_residual",
    "min_u",
    "max_u",
    "separation_gap",
    "entropy_m_grad",
    "entropy_m_lap",
    "entropy_quartic",
];

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CHDG";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

fn record_fields(r: &DiagnosticsRecord) -> [f64; 11] {
    [
        r.t,
        r.mass,
        r.energy,
        r.gradient_energy,
        r.dissipation_residual,
        r.min_u,
        r.max_u,
        r.separation_gap,
        r.entropy_m_grad,
        r.entropy_m_lap,
        r.entropy_quartic,
    ]
}

pub struct DiagnosticsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        inner.write_record(CSV_HEADER)?;
        Ok(DiagnosticsWriter { inner })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        self.inner
            .write_record(record_fields(record).iter().map(|&x| format_float(x)))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Reads a diagnostics CSV back; the header must match [`CSV_HEADER`].
pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(CliError::Usage(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let v = row
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if v.len() != CSV_HEADER.len() {
            return Err(CliError::Usage(format!("{}: short row", path.display())));
        }
        out.push(DiagnosticsRecord {
            t: v[0],
            mass: v[1],
            energy: v[2],
            gradient_energy: v[3],
            dissipation_residual: v[4],
            min_u: v[5],
            max_u: v[6],
            separation_gap: v[7],
            entropy_m_grad: v[8],
            entropy_m_lap: v[9],
            entropy_quartic: v[10],
            vprime_distance: None,
        });
    }
    Ok(out)
}

pub fn write_snapshot<W: Write>(mut w: W, time: f64, field: &Field) -> Result<()> {
    let grid = field.grid();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(grid.ndims() as u32).to_le_bytes())?;
    for &n in grid.cells() {
        let n = u32::try_from(n).map_err(|_| CliError::Snapshot(format!("dimension {n} too large")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    w.write_all(&time.to_le_bytes())?;
    for &l in grid.lengths() {
        w.write_all(&l.to_le_bytes())?;
    }
    for &v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| CliError::Snapshot(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

/// Reads a snapshot, returning its time and field. Trailing bytes are an error.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<(f64, Field)> {
    if &read_array::<4, _>(&mut r)? != SNAPSHOT_MAGIC {
        return Err(CliError::Snapshot("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != SNAPSHOT_VERSION {
        return Err(CliError::Snapshot(format!("unsupported version {version}")));
    }
    let ndims = read_u32(&mut r)? as usize;
    if !(1..=2).contains(&ndims) {
        return Err(CliError::Snapshot(format!("unsupported ndims {ndims}")));
    }
    let mut cells = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        cells.push(read_u32(&mut r)? as usize);
    }
    let time = read_f64(&mut r)?;
    let mut lengths = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        lengths.push(read_f64(&mut r)?);
    }
    let grid = Grid::new(&cells, &lengths)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(read_f64(&mut r)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CliError::Snapshot("trailing bytes".into()));
    }
    Ok((time, Field::new(grid, values)?))
}

pub fn save_snapshot(path: &Path, time: f64, field: &Field) -> Result<()> {
    write_snapshot(BufWriter::new(File::create(path)?), time, field)
}

pub fn load_snapshot(path: &Path) -> Result<(f64, Field)> {
    read_snapshot(BufReader::new(File::open(path)?))
}
