//! CSV ingestion and report writers.
//!
//! Two input files: `subject_id,time,y,x1..xp` (response process) and
//! `subject_id,time,z1..zq` (covariate process). Floats are written with the
//! shortest representation that parses back to the same value.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bandwidth::CvResult;
use crate::data::{rescale_times, LongitudinalDataset, SubjectRecord, TimeMap};
use crate::error::{Error, Result};
use crate::estimators::{CoefName, CurveEstimate};
use crate::scb::ScbResult;
use crate::simulation::SimulationReport;

/// Shortest round-trip text; blank for NaN.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn parse_f64(cell: &str, line: usize, column: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("column '{column}': '{cell}' is not a number"),
    })
}

/// Checks `subject_id,time,<first>,<prefix>1..` and returns the covariate count.
fn check_header(header: &csv::StringRecord, first: Option<&str>, prefix: &str) -> Result<usize> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let mut expected = vec!["subject_id", "time"];
    if let Some(f) = first {
        expected.push(f);
    }
    if cols.len() < expected.len() || cols[..expected.len()] != expected[..] {
        return Err(bad(format!(
            "header must start with {}, found {}",
            expected.join(","),
            cols.join(",")
        )));
    }
    let rest = &cols[expected.len()..];
    for (i, c) in rest.iter().enumerate() {
        if *c != format!("{prefix}{}", i + 1) {
            return Err(bad(format!(
                "expected column '{prefix}{}', found '{c}'",
                i + 1
            )));
        }
    }
    Ok(rest.len())
}

struct Rows {
    /// `(subject, time, values)` in file order.
    rows: Vec<(String, f64, Vec<f64>)>,
    width: usize,
}

fn read_rows<R: Read>(reader: R, source: &str, first: Option<&str>, prefix: &str) -> Result<Rows> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = match rdr.headers() {
        Ok(h) if !h.is_empty() => h.clone(),
        Ok(_) => return Err(Error::EmptyInput(source.into())),
        Err(e) => {
            return Err(Error::Parse {
                line: 1,
                msg: e.to_string(),
            })
        }
    };
    let n_cov = check_header(&header, first, prefix)?;
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != names.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        let id = rec[0].trim();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty subject_id".into(),
            });
        }
        let time = parse_f64(&rec[1], line, "time")?;
        let values = (2..rec.len())
            .map(|c| parse_f64(&rec[c], line, &names[c]))
            .collect::<Result<Vec<f64>>>()?;
        if !time.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                msg: "non-finite value".into(),
            });
        }
        rows.push((id.to_string(), time, values));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(source.into()));
    }
    Ok(Rows { rows, width: n_cov })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScale {
    /// Map the observed time range onto `[0, 1]`.
    #[default]
    Rescale,
    /// Times are already in `[0, 1]`.
    Unit,
}

/// Builds a dataset from already-open CSV streams.
pub fn ingest_readers<R1: Read, R2: Read>(
    sync: R1,
    sync_name: &str,
    asynchronous: Option<(R2, &str)>,
    scale: TimeScale,
) -> Result<LongitudinalDataset<f64>> {
    let s = read_rows(sync, sync_name, Some("y"), "x")?;
    let a = asynchronous
        .map(|(r, name)| read_rows(r, name, None, "z"))
        .transpose()?;
    let p = s.width;
    let q = a.as_ref().map_or(0, |a| a.width);

    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut sync_parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    for (id, t, v) in s.rows {
        let i = *index.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            sync_parts.push(Default::default());
            order.len() - 1
        });
        let part = &mut sync_parts[i];
        part.0.push(t);
        part.1.push(v[0]);
        part.2.extend_from_slice(&v[1..]);
    }
    let mut async_parts: Vec<(Vec<f64>, Vec<f64>)> = vec![Default::default(); order.len()];
    if let Some(a) = a {
        for (id, t, v) in a.rows {
            let i = *index.get(&id).ok_or(Error::OrphanSubject(id))?;
            async_parts[i].0.push(t);
            async_parts[i].1.extend(v);
        }
    }
    let mut subjects: Vec<SubjectRecord<f64>> = order
        .into_iter()
        .zip(sync_parts)
        .zip(async_parts)
        .map(|((id, (t, y, x)), (s, z))| SubjectRecord::from_flat(id, t, y, x, p, s, z, q))
        .collect();
    let map = match scale {
        TimeScale::Rescale => Some(rescale_times(&mut subjects)?),
        TimeScale::Unit => None,
    };
    let ds = LongitudinalDataset::new(subjects, p, q)?;
    Ok(match map {
        Some(m) => ds.with_time_map(m),
        None => ds,
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads the two files; without an asynchronous file `q = 0`.
pub fn ingest(
    sync_path: &Path,
    async_path: Option<&Path>,
    scale: TimeScale,
) -> Result<LongitudinalDataset<f64>> {
    let sync = open(sync_path)?;
    let asynchronous = async_path.map(|p| open(p).map(|f| (f, p))).transpose()?;
    let sync_name = sync_path.display().to_string();
    let async_name = async_path.map(|p| p.display().to_string());
    ingest_readers(
        sync,
        &sync_name,
        asynchronous.map(|(f, _)| (f, async_name.as_deref().unwrap_or(""))),
        scale,
    )
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn write_record<W: Write>(w: &mut csv::Writer<W>, path: &Path, rec: &[String]) -> Result<()> {
    w.write_record(rec)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes a dataset in the two-file schema (times on the unit scale).
pub fn write_dataset(
    ds: &LongitudinalDataset<f64>,
    sync_path: &Path,
    async_path: Option<&Path>,
) -> Result<()> {
    let mut w = csv_writer(sync_path)?;
    let mut head = vec!["subject_id".to_string(), "time".into(), "y".into()];
    head.extend((1..=ds.p()).map(|c| format!("x{c}")));
    write_record(&mut w, sync_path, &head)?;
    for s in ds.subjects() {
        for j in 0..s.n_sync() {
            let mut rec = vec![
                s.id.clone(),
                fmt_f64(s.sync_times[j]),
                fmt_f64(s.responses[j]),
            ];
            rec.extend(s.x(j).iter().map(|&v| fmt_f64(v)));
            write_record(&mut w, sync_path, &rec)?;
        }
    }
    finish(w, sync_path)?;
    if let Some(path) = async_path {
        let mut w = csv_writer(path)?;
        let mut head = vec!["subject_id".to_string(), "time".into()];
        head.extend((1..=ds.q()).map(|c| format!("z{c}")));
        write_record(&mut w, path, &head)?;
        for s in ds.subjects() {
            for k in 0..s.n_async() {
                let mut rec = vec![s.id.clone(), fmt_f64(s.async_times[k])];
                rec.extend(s.z(k).iter().map(|&v| fmt_f64(v)));
                write_record(&mut w, path, &rec)?;
            }
        }
        finish(w, path)?;
    }
    Ok(())
}

/// Bands keyed by the coefficient they cover.
pub type Bands<'a> = [(CoefName, &'a ScbResult<f64>)];

fn band_for<'a>(bands: &'a Bands<'a>, name: CoefName) -> Option<&'a ScbResult<f64>> {
    bands.iter().find(|(n, _)| *n == name).map(|(_, b)| *b)
}

/// Per-grid-point table: `t`, then for each coefficient its estimate, SE and
/// interval, plus band limits for the coefficients that have one.
pub fn write_curve_csv(curve: &CurveEstimate<f64>, bands: &Bands<'_>, path: &Path) -> Result<()> {
    let names = curve.coefficient_names();
    let mut head = vec!["t".to_string()];
    for n in &names {
        head.extend([
            n.to_string(),
            format!("{n}_se"),
            format!("{n}_ci_lo"),
            format!("{n}_ci_hi"),
        ]);
        if band_for(bands, *n).is_some() {
            head.extend([format!("{n}_scb_lo"), format!("{n}_scb_hi")]);
        }
    }
    let mut w = csv_writer(path)?;
    write_record(&mut w, path, &head)?;
    for (i, &t) in curve.grid.iter().enumerate() {
        let mut rec = vec![fmt_f64(t)];
        for &n in &names {
            let (e, se) = curve.estimate(i, n).unwrap_or((f64::NAN, f64::NAN));
            let (lo, hi) = curve.ci(i, n).unwrap_or((f64::NAN, f64::NAN));
            rec.extend([fmt_f64(e), fmt_f64(se), fmt_f64(lo), fmt_f64(hi)]);
            if let Some(b) = band_for(bands, n) {
                rec.extend([fmt_f64(b.lower(i)), fmt_f64(b.upper(i))]);
            }
        }
        write_record(&mut w, path, &rec)?;
    }
    finish(w, path)
}

/// One tidy file per coefficient, `<dir>/<prefix>_<name>.csv`, with columns
/// `t,estimate,ci_lo,ci_hi,scb_lo,scb_hi` (band columns blank when absent).
pub fn emit_plot_data(
    curve: &CurveEstimate<f64>,
    bands: &Bands<'_>,
    dir: &Path,
    prefix: &str,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for name in curve.coefficient_names() {
        let path = dir.join(format!("{prefix}_{name}.csv"));
        let mut w = csv_writer(&path)?;
        let head: Vec<String> = ["t", "estimate", "ci_lo", "ci_hi", "scb_lo", "scb_hi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        write_record(&mut w, &path, &head)?;
        let band = band_for(bands, name);
        for (i, &t) in curve.grid.iter().enumerate() {
            let e = curve.estimate(i, name).map_or(f64::NAN, |v| v.0);
            let (lo, hi) = curve.ci(i, name).unwrap_or((f64::NAN, f64::NAN));
            let (slo, shi) = band.map_or((f64::NAN, f64::NAN), |b| (b.lower(i), b.upper(i)));
            let rec: Vec<String> = [t, e, lo, hi, slo, shi].into_iter().map(fmt_f64).collect();
            write_record(&mut w, &path, &rec)?;
        }
        finish(w, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a plot-data file back: rows of `[t, estimate, ci_lo, ci_hi, scb_lo, scb_hi]`,
/// NaN for blank cells.
pub fn read_plot_data(path: &Path) -> Result<Vec<[f64; 6]>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::io(path.display().to_string(), e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mut row = [f64::NAN; 6];
        for (c, cell) in rec.iter().enumerate().take(6) {
            if !cell.is_empty() {
                row[c] = parse_f64(cell, line, "plot data")?;
            }
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

/// `candidate_h1,candidate_h2,aspe,chosen,error` per candidate.
pub fn write_cv_csv(result: &CvResult<f64>, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let head: Vec<String> = ["stage", "h1", "h2", "aspe", "chosen", "error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_record(&mut w, path, &head)?;
    for s in &result.scores {
        let rec = vec![
            result.stage.to_string(),
            fmt_f64(s.candidate.h1()),
            fmt_f64(s.candidate.h2()),
            s.aspe.map_or(String::new(), fmt_f64),
            (s.candidate == result.chosen).to_string(),
            s.error.clone().unwrap_or_default(),
        ];
        write_record(&mut w, path, &rec)?;
    }
    finish(w, path)
}

/// Pointwise rows: `estimator,coefficient,t,bias,sd,se,cp`.
pub fn write_point_table(report: &SimulationReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let head: Vec<String> = [
        "setting",
        "n",
        "estimator",
        "coefficient",
        "t",
        "bias",
        "sd",
        "se",
        "cp",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_record(&mut w, path, &head)?;
    for p in &report.points {
        let rec = vec![
            report.setting.clone(),
            report.n.to_string(),
            p.estimator.clone(),
            p.coefficient.clone(),
            fmt_f64(p.t),
            fmt_f64(p.bias),
            fmt_f64(p.sd),
            fmt_f64(p.se),
            fmt_f64(p.cp),
        ];
        write_record(&mut w, path, &rec)?;
    }
    finish(w, path)
}

/// Curve rows: `estimator,coefficient,rase_mean,rase_sd,ci_coverage,scb_coverage`.
pub fn write_curve_table(report: &SimulationReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let head: Vec<String> = [
        "setting",
        "n",
        "estimator",
        "coefficient",
        "rase_mean",
        "rase_sd",
        "ci_coverage",
        "scb_coverage",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_record(&mut w, path, &head)?;
    for c in &report.curves {
        let rec = vec![
            report.setting.clone(),
            report.n.to_string(),
            c.estimator.clone(),
            c.coefficient.clone(),
            fmt_f64(c.rase_mean),
            fmt_f64(c.rase_sd),
            fmt_f64(c.ci_coverage),
            c.scb_coverage.map_or(String::new(), fmt_f64),
        ];
        write_record(&mut w, path, &rec)?;
    }
    finish(w, path)
}

/// Metadata written next to fits and bands.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub method: String,
    pub kernel: String,
    pub h: Option<f64>,
    pub h1: f64,
    pub h2: f64,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub grid_points: usize,
    pub failed_points: usize,
    pub time_map: Option<TimeMap>,
    pub bands: Vec<BandMetadata>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandMetadata {
    pub coefficient: String,
    pub c_alpha: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub multiplier: String,
    pub seed: u64,
}

impl BandMetadata {
    pub fn new(name: CoefName, band: &ScbResult<f64>) -> Self {
        Self {
            coefficient: name.to_string(),
            c_alpha: band.c_alpha,
            alpha: band.alpha,
            replicates: band.replicates,
            multiplier: format!("{:?}", band.law).to_lowercase(),
            seed: band.seed,
        }
    }
}

/// Flat `key = value` text. `#` starts a comment; keys must be in `allowed`.
pub fn parse_config(text: &str, allowed: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key = value, found '{line}'"),
        })?;
        let key = k.trim().replace('-', "_");
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "unknown config key '{}' (line {})",
                k.trim(),
                i + 1
            )));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path, allowed: &[&str]) -> Result<BTreeMap<String, String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config(&text, allowed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNC: &str = "subject_id,time,y,x1\na,0,1.5,2\na,2,2.5,3\nb,1,0.5,1\nb,4,1,1.25\n";
    const ASYNC: &str = "subject_id,time,z1\na,1,0.1\nb,3,0.2\nb,2,0.3\n";

    fn load(sync: &str, asy: Option<&str>) -> Result<LongitudinalDataset<f64>> {
        ingest_readers(
            sync.as_bytes(),
            "sync",
            asy.map(|a| (a.as_bytes(), "async")),
            TimeScale::Rescale,
        )
    }

    #[test]
    fn toy_files_load() {
        let ds = load(SYNC, Some(ASYNC)).unwrap();
        assert_eq!((ds.n(), ds.p(), ds.q()), (2, 1, 1));
        let a = &ds.subjects()[0];
        assert_eq!((a.n_sync(), a.n_async()), (2, 1));
        assert_eq!(a.sync_times, vec![0.0, 0.5]);
        assert_eq!(ds.subjects()[1].async_times, vec![0.75, 0.5]);
        assert_eq!(ds.time_map(), Some(TimeMap { min: 0.0, max: 4.0 }));
        let no_async = load(SYNC, None).unwrap();
        assert_eq!(no_async.q(), 0);
    }

    #[test]
    fn bad_cell_reports_its_line() {
        let text = "subject_id,time,y,x1\na,0,1,2\na,1,oops,3\n";
        match load(text, None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
        match load("subject_id,time,y,x2\n", None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn orphan_and_empty_inputs() {
        let asy = "subject_id,time,z1\na,1,0.1\nc,1,0.2\n";
        assert_eq!(
            load(SYNC, Some(asy)).unwrap_err(),
            Error::OrphanSubject("c".into())
        );
        assert!(matches!(load("", None).unwrap_err(), Error::EmptyInput(_)));
        assert!(matches!(
            load("subject_id,time,y,x1\n", None).unwrap_err(),
            Error::EmptyInput(_)
        ));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let cfg = parse_config(
            "# comment\nmethod = two-step\nh1=0.1 # trailing\n",
            &["method", "h1"],
        )
        .unwrap();
        assert_eq!(cfg["method"], "two-step");
        assert_eq!(cfg["h1"], "0.1");
        assert!(matches!(
            parse_config("bogus = 1", &["method"]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            parse_config("method", &["method"]),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn float_text_round_trips() {
        for v in [
            0.1,
            1.0 / 3.0,
            1e-300,
            123456.789e10,
            -2.5e-7,
            f64::MIN_POSITIVE,
        ] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(f64::NAN), "");
    }
}
