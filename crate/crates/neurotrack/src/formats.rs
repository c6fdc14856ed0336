//! On-disk formats: PGM frames, event CSV and `.evb`, ground truth, model
//! and scene JSON, and the CSV dumps written by a run.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use neurotrack_core::detector::Detection;
use neurotrack_core::dvs::{Event, EventStream};
use neurotrack_core::scene::{Frame, GroundTruth};
use neurotrack_core::tracker::{TrackEstimate, TrackStatus};

/// Where in a file a parse error was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(u64),
    Offset(u64),
    Unknown,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Offset(o) => write!(f, "byte {o}"),
            Location::Unknown => write!(f, "?"),
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {at}: {message}", path.display())]
    Parse { path: PathBuf, at: Location, message: String },
}

impl FormatError {
    fn parse(at: Location, message: impl Into<String>) -> Self {
        FormatError::Parse { path: PathBuf::new(), at, message: message.into() }
    }

    fn io(source: io::Error) -> Self {
        FormatError::Io { path: PathBuf::new(), source }
    }

    /// Attaches the file path to an error raised by a reader or writer.
    pub fn at_path(self, p: &Path) -> Self {
        match self {
            FormatError::Io { source, .. } => FormatError::Io { path: p.to_path_buf(), source },
            FormatError::Parse { at, message, .. } => FormatError::Parse { path: p.to_path_buf(), at, message },
        }
    }

    pub fn location(&self) -> Option<Location> {
        match self {
            FormatError::Parse { at, .. } => Some(*at),
            FormatError::Io { .. } => None,
        }
    }
}

impl From<io::Error> for FormatError {
    fn from(e: io::Error) -> Self {
        FormatError::io(e)
    }
}

fn csv_error(e: csv::Error) -> FormatError {
    let at = e.position().map_or(Location::Unknown, |p| Location::Line(p.line()));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FormatError::io(io),
        kind => FormatError::parse(at, format!("{kind:?}")),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| FormatError::io(e).at_path(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| FormatError::io(e).at_path(path))
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path).map(BufReader::new).map_err(|e| FormatError::io(e).at_path(path))
}

fn with_file<T>(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<T, FormatError>) -> Result<T, FormatError> {
    let mut w = create(path)?;
    let out = f(&mut w).map_err(|e| e.at_path(path))?;
    w.flush().map_err(|e| FormatError::io(e).at_path(path))?;
    Ok(out)
}

// ---------------------------------------------------------------- PGM

/// Writes an 8-bit binary PGM (P5, maxval 255).
pub fn write_pgm<W: Write>(w: &mut W, frame: &Frame) -> Result<(), FormatError> {
    write!(w, "P5\n{} {}\n255\n", frame.width, frame.height)?;
    let bytes: Vec<u8> = frame.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a binary PGM with maxval ≤ 255; luminance is scaled to `[0, 1]`.
pub fn read_pgm(bytes: &[u8], index: usize) -> Result<Frame, FormatError> {
    let mut pos = 0usize;
    let mut fields = [0usize; 3];
    let magic = bytes.get(..2).ok_or_else(|| FormatError::parse(Location::Offset(0), "truncated header"))?;
    if magic != b"P5" {
        return Err(FormatError::parse(Location::Offset(0), "not a binary PGM (expected P5)"));
    }
    pos += 2;
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::parse(Location::Offset(start as u64), "expected a decimal header field"))?;
    }
    let [width, height, maxval] = fields;
    if !(1..=255).contains(&maxval) {
        return Err(FormatError::parse(Location::Offset(pos as u64), format!("unsupported maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(FormatError::parse(Location::Offset(pos as u64), "missing whitespace after header"));
    }
    pos += 1;
    let n = width * height;
    let raster = bytes.get(pos..pos + n).ok_or_else(|| {
        FormatError::parse(Location::Offset(bytes.len() as u64), format!("raster truncated: need {n} bytes after offset {pos}"))
    })?;
    let scale = maxval as f64;
    Ok(Frame { width, height, index, data: raster.iter().map(|&b| f64::from(b) / scale).collect() })
}

pub fn frame_path(dir: &Path, k: usize) -> PathBuf {
    dir.join("frames").join(format!("frame_{k:05}.pgm"))
}

pub fn save_pgm(path: &Path, frame: &Frame) -> Result<(), FormatError> {
    with_file(path, |w| write_pgm(w, frame))
}

pub fn load_pgm(path: &Path, index: usize) -> Result<Frame, FormatError> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(e).at_path(path))?;
    read_pgm(&bytes, index).map_err(|e| e.at_path(path))
}

// ---------------------------------------------------------------- events

#[derive(Serialize, Deserialize)]
struct EventRow {
    t: f64,
    x: i64,
    y: i64,
    p: i64,
}

/// `t,x,y,p` with `t` in seconds to 9 decimals.
pub fn write_events_csv<W: Write>(w: W, events: &[Event]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "x", "y", "p"]).map_err(csv_error)?;
    for e in events {
        out.write_record([format!("{:.9}", e.t), e.x.to_string(), e.y.to_string(), e.polarity.to_string()])
            .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(r: R) -> Result<EventStream, FormatError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<EventRow>() {
        let row = rec.map_err(csv_error)?;
        let line = out.len() as u64 + 2;
        let bad = |m: String| FormatError::parse(Location::Line(line), m);
        if row.x < 0 || row.y < 0 {
            return Err(bad(format!("negative coordinate ({}, {})", row.x, row.y)));
        }
        let (x, y) = match (u16::try_from(row.x), u16::try_from(row.y)) {
            (Ok(x), Ok(y)) => (x, y),
            _ => return Err(bad(format!("coordinate ({}, {}) exceeds 65535", row.x, row.y))),
        };
        if row.p != 1 && row.p != -1 {
            return Err(bad(format!("polarity {} is not ±1", row.p)));
        }
        if !row.t.is_finite() {
            return Err(bad(String::from("non-finite timestamp")));
        }
        out.push(Event { t: row.t, x, y, polarity: row.p as i8 });
    }
    Ok(out)
}

pub const EVB_MAGIC: &[u8; 4] = b"EVB1";
const EVB_RECORD: usize = 13;

/// `EVB1` followed by little-endian `(f64 t, u16 x, u16 y, i8 p)` records.
pub fn write_evb<W: Write>(w: &mut W, events: &[Event]) -> Result<(), FormatError> {
    w.write_all(EVB_MAGIC)?;
    let mut buf = Vec::with_capacity(events.len() * EVB_RECORD);
    for e in events {
        buf.extend_from_slice(&e.t.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.extend_from_slice(&e.polarity.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_evb(bytes: &[u8]) -> Result<EventStream, FormatError> {
    if bytes.get(..4) != Some(EVB_MAGIC.as_slice()) {
        return Err(FormatError::parse(Location::Offset(0), "missing EVB1 magic"));
    }
    let body = &bytes[4..];
    if !body.len().is_multiple_of(EVB_RECORD) {
        let offset = 4 + body.len() - body.len() % EVB_RECORD;
        return Err(FormatError::parse(Location::Offset(offset as u64), "truncated record"));
    }
    body.chunks_exact(EVB_RECORD)
        .enumerate()
        .map(|(i, c)| {
            let e = Event {
                t: f64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
                x: u16::from_le_bytes([c[8], c[9]]),
                y: u16::from_le_bytes([c[10], c[11]]),
                polarity: c[12] as i8,
            };
            if e.polarity != 1 && e.polarity != -1 {
                return Err(FormatError::parse(Location::Offset((4 + i * EVB_RECORD + 12) as u64), "polarity is not ±1"));
            }
            Ok(e)
        })
        .collect()
}

pub fn save_events_csv(path: &Path, events: &[Event]) -> Result<(), FormatError> {
    with_file(path, |w| write_events_csv(w, events))
}

pub fn load_events_csv(path: &Path) -> Result<EventStream, FormatError> {
    read_events_csv(open(path)?).map_err(|e| e.at_path(path))
}

pub fn save_evb(path: &Path, events: &[Event]) -> Result<(), FormatError> {
    with_file(path, |w| write_evb(w, events))
}

pub fn load_evb(path: &Path) -> Result<EventStream, FormatError> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(e).at_path(path))?;
    read_evb(&bytes).map_err(|e| e.at_path(path))
}

// ---------------------------------------------------------------- JSON

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    with_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| FormatError::io(e.into()))?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(e).at_path(path))?;
    parse_json(&text).map_err(|e| e.at_path(path))
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::parse(Location::Line(e.line() as u64), e.to_string()))
}

/// `truth.json`: one array of `{label, x, y, theta, omega, visible}` per frame.
pub fn save_truth(path: &Path, truth: &GroundTruth) -> Result<(), FormatError> {
    save_json(path, &truth.frames)
}

pub fn load_truth(path: &Path) -> Result<GroundTruth, FormatError> {
    Ok(GroundTruth { frames: load_json(path)? })
}

// ---------------------------------------------------------------- CSV dumps

fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<(), FormatError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header).map_err(csv_error)?;
    for row in rows {
        out.serialize(row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>, FormatError> {
    csv::Reader::from_reader(r).deserialize().map(|rec| rec.map_err(csv_error)).collect()
}

/// Writes any sequence of serializable rows as CSV under `header`.
pub fn save_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<(), FormatError> {
    with_file(path, |w| write_rows(w, rows, header))
}

pub fn load_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    read_rows(open(path)?).map_err(|e| e.at_path(path))
}

pub const SPIKES_HEADER: [&str; 2] = ["step", "neuron"];
pub const DETECTIONS_HEADER: [&str; 5] = ["frame", "window", "x", "y", "mass"];
pub const TRACKS_HEADER: [&str; 13] =
    ["frame", "id", "label", "status", "x", "y", "vx", "vy", "theta", "omega", "r", "verdict", "confidence"];

pub fn save_spikes(path: &Path, spikes: &[(u64, u32)]) -> Result<(), FormatError> {
    save_rows(path, &SPIKES_HEADER, spikes)
}

pub fn save_detections(path: &Path, detections: &[Detection]) -> Result<(), FormatError> {
    save_rows(path, &DETECTIONS_HEADER, detections.iter().map(|d| (d.frame, d.window, d.x, d.y, d.mass)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrackRow {
    frame: usize,
    id: u32,
    label: Option<u32>,
    status: TrackStatus,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    theta: f64,
    omega: f64,
    r: f64,
    verdict: String,
    confidence: f64,
}

pub fn write_tracks<W: Write>(w: W, estimates: &[TrackEstimate]) -> Result<(), FormatError> {
    let rows = estimates.iter().map(|e| TrackRow {
        frame: e.frame,
        id: e.id,
        label: e.label,
        status: e.status,
        x: e.x,
        y: e.y,
        vx: e.vx,
        vy: e.vy,
        theta: e.theta,
        omega: e.omega,
        r: e.r,
        verdict: e.verdict.clone(),
        confidence: e.confidence,
    });
    write_rows(w, rows, &TRACKS_HEADER)
}

/// Reads `tracks.csv`; the association flag is not stored and reads as false.
pub fn read_tracks<R: Read>(r: R) -> Result<Vec<TrackEstimate>, FormatError> {
    Ok(read_rows::<R, TrackRow>(r)?
        .into_iter()
        .map(|t| TrackEstimate {
            frame: t.frame,
            id: t.id,
            label: t.label,
            status: t.status,
            x: t.x,
            y: t.y,
            vx: t.vx,
            vy: t.vy,
            theta: t.theta,
            omega: t.omega,
            r: t.r,
            verdict: t.verdict,
            confidence: t.confidence,
            matched: false,
        })
        .collect())
}

pub fn save_tracks(path: &Path, estimates: &[TrackEstimate]) -> Result<(), FormatError> {
    with_file(path, |w| write_tracks(w, estimates))
}

pub fn load_tracks(path: &Path) -> Result<Vec<TrackEstimate>, FormatError> {
    read_tracks(open(path)?).map_err(|e| e.at_path(path))
}
