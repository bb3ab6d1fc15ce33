//! File formats: long-format response CSV, the posterior draw archive
//! (little-endian `f64` columns plus a JSON sidecar), and tidy CSV exports.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{BinaryDataset, RawSubject, TimeGrid};
use crate::error::{Error, Result};
use crate::ordinal::OrdinalDecomposition;
use crate::predict::{CurveEstimate, KernelCurve};
use crate::scalar::Real;
use crate::simgen::{GroundTruth, SimScenario};
use crate::state::{DrawsMeta, PosteriorDraws, SCALAR_NAMES};
use crate::diagnostics::TraceSummary;

#[derive(Debug, Deserialize)]
struct Row {
    subject: String,
    time: f64,
    response: String,
}

/// Reads `subject,time,response` rows. Subjects keep first-appearance order
/// and each subject's rows are sorted by time.
pub fn read_raw_csv(path: &Path) -> Result<Vec<RawSubject<f64>>> {
    read_raw(File::open(path)?)
}

pub fn read_raw<R: Read>(reader: R) -> Result<Vec<RawSubject<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["subject", "time", "response"] {
        return Err(Error::Format(format!(
            "expected header subject,time,response, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, i64)>> = HashMap::new();
    for (line, rec) in rdr.deserialize::<Row>().enumerate() {
        let r = rec?;
        let y: i64 = r
            .response
            .parse()
            .map_err(|_| Error::Format(format!("row {}: response {:?} is not an integer", line + 2, r.response)))?;
        if !rows.contains_key(&r.subject) {
            order.push(r.subject.clone());
        }
        rows.entry(r.subject).or_default().push((r.time, y));
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let mut v = rows.remove(&id).expect("subject seen");
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            RawSubject {
                id,
                times: v.iter().map(|r| r.0).collect(),
                responses: v.iter().map(|r| r.1).collect(),
            }
        })
        .collect())
}

pub fn write_raw_csv<T: Real>(path: &Path, subjects: &[RawSubject<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["subject", "time", "response"])?;
    for s in subjects {
        for (t, y) in s.times.iter().zip(&s.responses) {
            w.write_record([s.id.clone(), t.f64().to_string(), y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary_csv<T: Real>(path: &Path, ds: &BinaryDataset<T>) -> Result<()> {
    write_raw_csv(path, &ds.to_raw())
}

/// Current draw-archive layout version.
pub const ARCHIVE_VERSION: u32 = 1;

/// JSON sidecar describing a draw archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub version: u32,
    pub meta: DrawsMeta,
    pub subject_ids: Vec<String>,
    pub subject_times: Vec<Vec<f64>>,
    pub n_draws: usize,
    /// `(name, values per draw)` in file order.
    pub columns: Vec<(String, usize)>,
    /// Free-form labels (category, chain index).
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

/// `stem.bin` and `stem.json`.
pub fn archive_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

/// Writes draws as consecutive little-endian `f64` columns. Timings are
/// dropped so that the archive depends only on the seed.
pub fn write_archive<T: Real>(stem: &Path, draws: &PosteriorDraws<T>, labels: BTreeMap<String, String>) -> Result<()> {
    let (bin, json) = archive_paths(stem);
    let cols = draws.columns();
    let mut meta = draws.meta.clone();
    meta.step_seconds.clear();
    meta.total_seconds = 0.0;
    let header = ArchiveHeader {
        version: ARCHIVE_VERSION,
        meta,
        subject_ids: draws.subject_ids().to_vec(),
        subject_times: draws.subject_grids().iter().map(|g| g.times().iter().map(|t| t.f64()).collect()).collect(),
        n_draws: draws.n_draws(),
        columns: cols.iter().map(|(n, w, _)| (n.to_string(), *w)).collect(),
        labels,
    };
    let mut w = BufWriter::new(File::create(&bin)?);
    for (_, _, data) in &cols {
        for v in data.iter() {
            w.write_all(&v.f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    let mut j = BufWriter::new(File::create(&json)?);
    serde_json::to_writer_pretty(&mut j, &header)?;
    j.write_all(b"\n")?;
    j.flush()?;
    Ok(())
}

pub fn read_archive_header(stem: &Path) -> Result<ArchiveHeader> {
    let (_, json) = archive_paths(stem);
    let h: ArchiveHeader = serde_json::from_reader(BufReader::new(File::open(&json)?))?;
    if h.version != ARCHIVE_VERSION {
        return Err(Error::Format(format!("archive version {} is not supported", h.version)));
    }
    Ok(h)
}

pub fn read_archive(stem: &Path) -> Result<(PosteriorDraws<f64>, ArchiveHeader)> {
    let h = read_archive_header(stem)?;
    let (bin, _) = archive_paths(stem);
    let mut bytes = Vec::new();
    BufReader::new(File::open(&bin)?).read_to_end(&mut bytes)?;
    let total: usize = h.columns.iter().map(|(_, w)| w * h.n_draws).sum();
    if bytes.len() != total * 8 {
        return Err(Error::Format(format!(
            "{} holds {} bytes, header implies {}",
            bin.display(),
            bytes.len(),
            total * 8
        )));
    }
    let mut off = 0;
    let mut cols = Vec::with_capacity(h.columns.len());
    for (name, w) in &h.columns {
        let n = w * h.n_draws;
        let vals = bytes[off..off + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        off += 8 * n;
        cols.push((name.clone(), vals));
    }
    let grids = h
        .subject_times
        .iter()
        .map(|t| TimeGrid::new(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let d = PosteriorDraws::from_columns(h.meta.clone(), h.subject_ids.clone(), grids, h.n_draws, cols)?;
    Ok((d, h))
}

/// `draw,noise_var,mu0,sigma2,rho,nu`.
pub fn write_trace_csv<T: Real>(path: &Path, draws: &PosteriorDraws<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut head = vec!["draw".to_string()];
    head.extend(SCALAR_NAMES.iter().map(|s| s.to_string()));
    w.write_record(&head)?;
    for s in 0..draws.n_draws() {
        let mut row = vec![s.to_string()];
        for name in SCALAR_NAMES {
            row.push(draws.scalar(name).expect("known")[s].f64().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_summary_csv(path: &Path, rows: &[TraceSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["parameter", "mean", "sd", "lower", "upper", "ess"])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.ess.map_or_else(|| "NA".to_string(), |e| e.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `time,mean,lower,upper`, with a leading `category` column when given.
pub fn write_curve_csv<T: Real>(path: &Path, curves: &[(Option<usize>, &CurveEstimate<T>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let with_cat = curves.iter().any(|(c, _)| c.is_some());
    let mut head = vec![];
    if with_cat {
        head.push("category");
    }
    head.extend(["time", "mean", "lower", "upper"]);
    w.write_record(&head)?;
    for (cat, c) in curves {
        for k in 0..c.times.len() {
            let mut row = vec![];
            if with_cat {
                row.push(cat.map_or_else(String::new, |v| v.to_string()));
            }
            row.extend([
                c.times[k].f64().to_string(),
                c.mean[k].f64().to_string(),
                c.lower[k].f64().to_string(),
                c.upper[k].f64().to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `distance,mean,lower,upper`.
pub fn write_kernel_csv<T: Real>(path: &Path, k: &KernelCurve<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["distance", "mean", "lower", "upper"])?;
    for i in 0..k.distances.len() {
        w.write_record([
            k.distances[i].f64().to_string(),
            k.mean[i].f64().to_string(),
            k.lower[i].f64().to_string(),
            k.upper[i].f64().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per subject and full-grid time.
pub fn write_truth_csv(path: &Path, ids: &[String], truth: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record([
        "subject",
        "time",
        "component",
        "signal",
        "omega",
        "noise",
        "probability",
        "signal_probability",
        "response",
        "observed",
    ])?;
    for (i, id) in ids.iter().enumerate() {
        for (k, t) in truth.times.iter().enumerate() {
            w.write_record([
                id.clone(),
                t.to_string(),
                (truth.component[i] + 1).to_string(),
                truth.signal[i][k].to_string(),
                truth.omega[i][k].to_string(),
                truth.noise[i][k].to_string(),
                truth.probability[i][k].to_string(),
                truth.signal_probability[i][k].to_string(),
                truth.responses[i][k].to_string(),
                u8::from(truth.kept[i][k]).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `distance,value` of the generating kernel of component `c`.
pub fn write_true_kernel_csv(path: &Path, scenario: &SimScenario, distances: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut head = vec!["distance".to_string()];
    head.extend((1..=scenario.components.len()).map(|c| format!("component_{c}")));
    w.write_record(&head)?;
    for &d in distances {
        let mut row = vec![d.to_string()];
        row.extend((0..scenario.components.len()).map(|c| GroundTruth::kernel_value(scenario, c, d).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `category_<j>.csv` per binary dataset plus `index_maps.json`.
pub fn write_decomposition<T: Real>(dir: &Path, dec: &OrdinalDecomposition<T>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (jm1, part) in dec.parts.iter().enumerate() {
        let path = dir.join(format!("category_{}.csv", jm1 + 1));
        match &part.dataset {
            Some(ds) => write_binary_csv(&path, ds)?,
            None => write_raw_csv::<f64>(&path, &[])?,
        }
        out.push(path);
    }
    let path = dir.join("index_maps.json");
    let mut j = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut j, &dec.index_export())?;
    j.write_all(b"\n")?;
    j.flush()?;
    out.push(path);
    Ok(out)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut j = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut j, value)?;
    j.write_all(b"\n")?;
    j.flush()?;
    Ok(())
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{run_chain, SamplerConfig};
    use crate::prior::PriorConfig;
    use crate::simgen::{generate, SimScenario};

    #[test]
    fn csv_round_trip_and_ordering() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "subject,time,response\nb,2,1\na,0.5,0\nb,1,0\n").unwrap();
        let raw = read_raw_csv(&p).unwrap();
        assert_eq!(raw[0].id, "b");
        assert_eq!(raw[0].times, vec![1.0, 2.0]);
        assert_eq!(raw[0].responses, vec![0, 1]);
        let ds = BinaryDataset::from_raw(&raw).unwrap();
        let q = dir.path().join("e.csv");
        write_binary_csv(&q, &ds).unwrap();
        assert_eq!(std::fs::read_to_string(&q).unwrap(), "subject,time,response\nb,1,0\nb,2,1\na,0.5,0\n");
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(read_raw("s,t,y\na,1,1\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_raw("subject,time,response\na,1,x\n".as_bytes()), Err(Error::Format(_))));
        assert!(read_raw("subject,time,response\na,zz,1\n".as_bytes()).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let sim = generate(&SimScenario::mean_study(1, 3, 5, 0.2, 1).unwrap()).unwrap();
        let mut cfg = SamplerConfig::new(12, 2, 2, 4);
        cfg.store_latents = true;
        cfg.store_covariance = true;
        let d = run_chain(&sim.dataset, &PriorConfig::default(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("chain1");
        let mut labels = BTreeMap::new();
        labels.insert("chain".to_string(), "1".to_string());
        write_archive(&stem, &d, labels.clone()).unwrap();
        let (back, h) = read_archive(&stem).unwrap();
        let mut d = d;
        d.meta.step_seconds.clear();
        d.meta.total_seconds = 0.0;
        assert_eq!(back, d);
        assert_eq!(h.labels, labels);
        std::fs::write(stem.with_extension("bin"), [0u8; 16]).unwrap();
        assert!(matches!(read_archive(&stem), Err(Error::Format(_))));
    }
}
