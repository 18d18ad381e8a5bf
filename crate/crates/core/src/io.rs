//! On-disk formats.
//!
//! A measurement set is a directory holding `measurement.json` (shape
//! header) and one `block_<ℓ>.csv` per channel. Each CSV row is one sensor
//! sample; its `2M` columns are `re,im` pairs for the `M` snapshots, written
//! with 17 significant digits so that values round-trip exactly.
//!
//! Fusion messages are a JSON array of [`ChannelMessage`]s with matrices
//! stored row-major as `[re, im]` pairs.
//!
//! All writes go through a temporary file in the destination directory and
//! are renamed into place, so readers never see a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::ChannelMessage;
use crate::linalg::{ComplexMatrix, C64};
use crate::measurement::MeasurementSet;

const MEASUREMENT_FORMAT: &str = "mcglr-measurement";
const MESSAGE_FORMAT: &str = "mcglr-messages";
const VERSION: u32 = 1;

/// Writes `contents` to `path` atomically.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementHeader {
    format: String,
    version: u32,
    snapshots: usize,
    channel_dims: Vec<usize>,
}

fn block_path(dir: &Path, channel: usize) -> PathBuf {
    dir.join(format!("block_{channel}.csv"))
}

fn matrix_csv(m: &ComplexMatrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 48);
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols())
            .map(|j| {
                let v = m[(i, j)];
                format!("{:.16e},{:.16e}", v.re, v.im)
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn parse_csv(text: &str, rows: usize, cols: usize, origin: &Path) -> Result<ComplexMatrix> {
    let bad = |msg: String| Error::Format(format!("{}: {msg}", origin.display()));
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != rows {
        return Err(bad(format!("expected {rows} rows, found {}", lines.len())));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 * cols {
            return Err(bad(format!("row {i}: expected {} columns, found {}", 2 * cols, fields.len())));
        }
        for pair in fields.chunks(2) {
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| bad(format!("row {i}: cannot parse `{s}`: {e}")))
            };
            data.push(C64::new(parse(pair[0])?, parse(pair[1])?));
        }
    }
    ComplexMatrix::from_row_slice(rows, cols, &data)
}

/// Writes `z` into directory `dir`, creating it if needed.
pub fn write_measurement(dir: &Path, z: &MeasurementSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (l, block) in z.blocks().iter().enumerate() {
        write_atomic(&block_path(dir, l), matrix_csv(block).as_bytes())?;
    }
    let header = MeasurementHeader {
        format: MEASUREMENT_FORMAT.into(),
        version: VERSION,
        snapshots: z.snapshots(),
        channel_dims: z.channel_dims(),
    };
    write_json(&dir.join("measurement.json"), &header)
}

/// Reads a measurement directory written by [`write_measurement`].
pub fn read_measurement(dir: &Path) -> Result<MeasurementSet> {
    let header_path = dir.join("measurement.json");
    let header: MeasurementHeader = serde_json::from_str(&fs::read_to_string(&header_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", header_path.display())))?;
    if header.format != MEASUREMENT_FORMAT || header.version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported format {} v{}",
            header_path.display(),
            header.format,
            header.version
        )));
    }
    let blocks = header
        .channel_dims
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let path = block_path(dir, l);
            parse_csv(&fs::read_to_string(&path)?, n, header.snapshots, &path)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(blocks)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl MatrixRecord {
    fn from_matrix(m: &ComplexMatrix) -> Self {
        let mut data = Vec::with_capacity(m.rows() * m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m[(i, j)];
                data.push([v.re, v.im]);
            }
        }
        MatrixRecord {
            rows: m.rows(),
            cols: m.cols(),
            data,
        }
    }

    fn into_matrix(self) -> Result<ComplexMatrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "matrix record declares {}x{} but holds {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        let data: Vec<C64> = self.data.into_iter().map(|[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::from_row_slice(self.rows, self.cols, &data)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    statistic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitudes: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariance: Option<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snapshots: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageFile {
    format: String,
    version: u32,
    messages: Vec<MessageRecord>,
}

/// Writes fusion messages as JSON.
pub fn write_messages(path: &Path, messages: &[ChannelMessage]) -> Result<()> {
    let file = MessageFile {
        format: MESSAGE_FORMAT.into(),
        version: VERSION,
        messages: messages
            .iter()
            .map(|m| MessageRecord {
                statistic: m.statistic,
                amplitudes: m.amplitudes.as_ref().map(MatrixRecord::from_matrix),
                covariance: m.covariance.as_ref().map(MatrixRecord::from_matrix),
                samples: m.samples,
                snapshots: m.snapshots,
            })
            .collect(),
    };
    write_json(path, &file)
}

/// Reads fusion messages written by [`write_messages`]. Missing fields stay
/// `None`; the fusion step reports which one it needed.
pub fn read_messages(path: &Path) -> Result<Vec<ChannelMessage>> {
    let file: MessageFile = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.format != MESSAGE_FORMAT || file.version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported format {} v{}",
            path.display(),
            file.format,
            file.version
        )));
    }
    file.messages
        .into_iter()
        .map(|r| {
            Ok(ChannelMessage {
                statistic: r.statistic,
                amplitudes: r.amplitudes.map(MatrixRecord::into_matrix).transpose()?,
                covariance: r.covariance.map(MatrixRecord::into_matrix).transpose()?,
                samples: r.samples,
                snapshots: r.snapshots,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> MeasurementSet {
        let a = ComplexMatrix::from_fn(3, 2, |i, j| C64::new(i as f64 + 0.1, -(j as f64) / 3.0)).unwrap();
        let b = ComplexMatrix::from_fn(2, 2, |i, j| C64::new(1e-300 * i as f64, std::f64::consts::PI * j as f64)).unwrap();
        MeasurementSet::new(vec![a, b]).unwrap()
    }

    #[test]
    fn measurement_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let z = sample_set();
        write_measurement(dir.path(), &z).unwrap();
        assert_eq!(read_measurement(dir.path()).unwrap(), z);
    }

    #[test]
    fn truncated_block_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        write_measurement(dir.path(), &sample_set()).unwrap();
        fs::write(block_path(dir.path(), 1), "1,2,3,4\n").unwrap();
        assert!(matches!(read_measurement(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn messages_round_trip_with_missing_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let q = ComplexMatrix::identity(2);
        let msgs = vec![ChannelMessage {
            statistic: Some(1.5),
            amplitudes: None,
            covariance: Some(q.clone()),
            samples: Some(4),
            snapshots: None,
        }];
        write_messages(&path, &msgs).unwrap();
        let back = read_messages(&path).unwrap();
        assert_eq!(back[0].statistic, Some(1.5));
        assert!(back[0].amplitudes.is_none());
        assert_eq!(back[0].covariance.as_ref().unwrap(), &q);
    }
}
