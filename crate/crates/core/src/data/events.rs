//! CSV event streams (`t,x,y,polarity`) and their conversion to spike frames.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::SpikeTensor;

/// Maximum share of malformed lines tolerated in one file.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Microseconds.
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub polarity: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub lines: usize,
    pub malformed: usize,
}

fn parse_record(record: &csv::StringRecord) -> Option<EventRecord> {
    if record.len() != 4 {
        return None;
    }
    let polarity: u8 = record[3].parse().ok()?;
    if polarity > 1 {
        return None;
    }
    Some(EventRecord {
        t: record[0].parse().ok()?,
        x: record[1].parse().ok()?,
        y: record[2].parse().ok()?,
        polarity,
    })
}

/// Reads one event file, returning events sorted (stably) by timestamp.
///
/// Blank lines, `#` comments and a leading `t,x,y,polarity` header are
/// skipped. Other unparseable lines are counted and dropped; more than 1%
/// of them is an error.
pub fn load_events_csv(path: &Path) -> Result<(Vec<EventRecord>, ParseReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);

    let mut events = Vec::new();
    let mut report = ParseReport::default();
    for (k, rec) in reader.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => {
                return Err(Error::Data(format!("{}: {e}", path.display())));
            }
            Err(_) => {
                report.lines += 1;
                report.malformed += 1;
                continue;
            }
        };
        if k == 0 && rec.get(0) == Some("t") {
            continue;
        }
        report.lines += 1;
        match parse_record(&rec) {
            Some(ev) => events.push(ev),
            None => report.malformed += 1,
        }
    }
    if report.malformed as f64 > MAX_MALFORMED_FRACTION * report.lines as f64 {
        return Err(Error::Data(format!(
            "{}: {} of {} lines malformed",
            path.display(),
            report.malformed,
            report.lines
        )));
    }
    events.sort_by_key(|e| e.t);
    Ok((events, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub path: PathBuf,
    pub events: Vec<EventRecord>,
    pub label: usize,
    pub report: ParseReport,
}

/// Loads every stream listed in a JSON manifest (`[{"path": .., "label": ..}]`).
/// Relative paths resolve against the manifest's directory.
pub fn load_manifest(manifest: &Path) -> Result<Vec<LabeledStream>> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|entry| {
            let path = if entry.path.is_absolute() {
                entry.path
            } else {
                base.join(&entry.path)
            };
            let (events, report) = load_events_csv(&path)?;
            Ok(LabeledStream {
                path,
                events,
                label: entry.label,
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinningParams {
    pub sensor_w: u32,
    pub sensor_h: u32,
    pub grid_w: u32,
    pub grid_h: u32,
    pub timesteps: usize,
}

impl BinningParams {
    pub fn neurons(&self) -> usize {
        2 * self.grid_w as usize * self.grid_h as usize
    }

    fn validate(&self) -> Result<()> {
        if self.timesteps == 0 || self.grid_w == 0 || self.grid_h == 0 || self.sensor_w == 0 || self.sensor_h == 0 {
            return Err(Error::Config("binning dimensions and timesteps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Bins a time-sorted stream into a single-sample spike tensor.
///
/// `[t_min, t_max]` is cut into `T` equal bins, the last one closed. Pixel
/// coordinates are scaled down into the grid by integer division and the two
/// polarities occupy consecutive blocks of the neuron axis. A cell is 1 if
/// any event lands in it.
pub fn bin_events(stream: &[EventRecord], params: &BinningParams) -> Result<SpikeTensor> {
    params.validate()?;
    let (first, last) = match (stream.first(), stream.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(Error::EmptyInput("event stream has no events".into())),
    };
    let t_min = stream.iter().map(|e| e.t).min().unwrap_or(first);
    let t_max = stream.iter().map(|e| e.t).max().unwrap_or(last);
    let span = (t_max - t_min) as u128;
    let steps = params.timesteps;
    let plane = params.grid_w as usize * params.grid_h as usize;
    let mut out = SpikeTensor::zeros(1, params.neurons(), steps);
    for e in stream {
        if e.x >= params.sensor_w || e.y >= params.sensor_h || e.polarity > 1 {
            return Err(Error::Data(format!(
                "event ({}, {}, p={}) outside a {}x{} sensor",
                e.x, e.y, e.polarity, params.sensor_w, params.sensor_h
            )));
        }
        let gx = (e.x as u64 * params.grid_w as u64 / params.sensor_w as u64) as usize;
        let gy = (e.y as u64 * params.grid_h as u64 / params.sensor_h as u64) as usize;
        // zero span: every event shares bin 0
        let bin = ((e.t - t_min) as u128 * steps as u128)
            .checked_div(span)
            .map_or(0, |b| (b as usize).min(steps - 1));
        let neuron = e.polarity as usize * plane + gy * params.grid_w as usize + gx;
        out.set(0, neuron, bin, true);
    }
    Ok(out)
}
