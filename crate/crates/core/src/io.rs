//! CSV and JSON artifacts.
//!
//! Floats go to CSV with 17 significant digits so every value reads back
//! bit-identically. Files are written to a temporary sibling and renamed.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit::LimitSample;
use crate::model::ModelParams;
use crate::montecarlo::ExperimentReport;
use crate::simulate::{SamplePath, SimConfig};

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &json_bytes(value)?)
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Csv { line, msg: e.to_string() }
}

/// Header `t,x,v,dw`; `dw` sits on the row of the step's left endpoint and is
/// empty on the last row or when no noise was recorded.
pub fn path_csv(path: &SamplePath) -> Result<Vec<u8>> {
    let rows = (0..path.x.len()).map(|i| {
        let dw = path.dw.as_ref().and_then(|d| d.get(i)).map_or(String::new(), |d| fmt_f64(*d));
        vec![fmt_f64(path.t[i]), fmt_f64(path.x[i]), fmt_f64(path.v[i]), dw]
    });
    csv_bytes(&["t", "x", "v", "dw"], rows)
}

/// Sidecar describing how a path was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathMeta {
    pub params: ModelParams,
    pub sim: SimConfig,
}

pub fn read_path_csv(bytes: &[u8], params: ModelParams) -> Result<SamplePath> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "x", "v", "dw"] {
        return Err(Error::Csv { line: 1, msg: format!("expected header t,x,v,dw, got {}", header.iter().collect::<Vec<_>>().join(",")) });
    }
    let (mut t, mut x, mut v, mut dw) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k + 2;
        let num = |j: usize| -> Result<f64> {
            let s = rec.get(j).unwrap_or("").trim();
            let val: f64 = s.parse().map_err(|_| Error::Csv { line, msg: format!("cannot parse {s:?} as a number") })?;
            if val.is_finite() {
                Ok(val)
            } else {
                Err(Error::Csv { line, msg: "non-finite value".into() })
            }
        };
        t.push(num(0)?);
        x.push(num(1)?);
        v.push(num(2)?);
        dw.push(if rec.get(3).unwrap_or("").trim().is_empty() { None } else { Some(num(3)?) });
    }
    let n = t.len();
    if n < 2 {
        return Err(Error::Csv { line: n + 1, msg: "a path needs at least two rows".into() });
    }
    let horizon = t[n - 1];
    let steps = (n - 1) as f64;
    for (i, ti) in t.iter().enumerate() {
        if (ti - horizon * i as f64 / steps).abs() > 1e-9 * horizon {
            return Err(Error::Csv { line: i + 2, msg: format!("t = {ti} is off the uniform grid") });
        }
    }
    let recorded = dw[..n - 1].iter().filter(|d| d.is_some()).count();
    let dw = match recorded {
        0 => None,
        r if r == n - 1 => Some(dw[..n - 1].iter().map(|d| d.unwrap()).collect()),
        _ => return Err(Error::Csv { line: 0, msg: "dw column is only partly filled".into() }),
    };
    SamplePath::from_samples(horizon, x, v, dw, params)
}

pub fn limit_csv(samples: &[LimitSample]) -> Result<Vec<u8>> {
    csv_bytes(&["l1", "l2"], samples.iter().map(|s| vec![fmt_f64(s.l1), fmt_f64(s.l2)]))
}

/// Rows `rep,T,r1,r2` for every successful replication.
pub fn residuals_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let rows = report.horizons.iter().flat_map(|h| {
        h.residuals().map(move |(rep, r)| vec![rep.to_string(), fmt_f64(h.horizon), fmt_f64(r[0]), fmt_f64(r[1])])
    });
    csv_bytes(&["rep", "T", "r1", "r2"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::simulate;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, f64::MIN_POSITIVE, 12345.678901234567] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "");
    }

    #[test]
    fn path_round_trip_is_exact() {
        let params = ModelParams::new(-0.7, -1.3, 0.9, 0.3, -0.2).unwrap();
        for record in [true, false] {
            let mut cfg = SimConfig::new(3.0, 300).with_seed(4, 2);
            cfg.record_noise = record;
            let path = simulate(&params, &cfg).unwrap();
            let back = read_path_csv(&path_csv(&path).unwrap(), params).unwrap();
            assert_eq!(back, path);
        }
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let p = ModelParams::from_drift(0.0, 0.0, 1.0).unwrap();
        assert!(read_path_csv(b"t,x,v\n0,1,1\n", p).is_err());
        assert!(read_path_csv(b"t,x,v,dw\n0,1,1,\n", p).is_err());
        let err = read_path_csv(b"t,x,v,dw\n0,1,1,\n0.5,abc,1,\n1,1,1,\n", p).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");
        assert!(read_path_csv(b"t,x,v,dw\n0,1,1,\n0.7,1,1,\n1,1,1,\n", p).is_err());
        assert!(read_path_csv(b"t,x,v,dw\n0,1,1,0.1\n0.5,1,1,\n1,1,1,\n", p).is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("sub/out.json");
        write_atomic(&f, b"one").unwrap();
        write_atomic(&f, b"two").unwrap();
        assert_eq!(fs::read(&f).unwrap(), b"two");
        assert_eq!(fs::read_dir(f.parent().unwrap()).unwrap().count(), 1);
    }
}
