use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use super::{Dataset, FirmSeries, Label, Sample, Step, TextFeatures};
use crate::error::{Error, Result};

pub const SERIES_FILE: &str = "series.csv";
pub const TEXT_FILE: &str = "text.csv";
pub const LABELS_FILE: &str = "labels.csv";

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_f64(path: &Path, line: u64, cell: &str, what: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what}: '{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("{what}: non-finite value '{cell}'")));
    }
    Ok(v)
}

struct SeriesTable {
    feature_names: Vec<String>,
    order: Vec<String>,
    firms: HashMap<String, Vec<Step>>,
}

fn read_series(path: &Path) -> Result<SeriesTable> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    let mut table = SeriesTable {
        feature_names: Vec::new(),
        order: Vec::new(),
        firms: HashMap::new(),
    };
    if header.is_empty() {
        return Ok(table);
    }
    if header.len() < 2 || &header[0] != "firm_id" || &header[1] != "quarter_index" {
        return Err(parse_err(path, 1, "header must start with firm_id,quarter_index"));
    }
    table.feature_names = header.iter().skip(2).map(str::to_string).collect();
    let nf = table.feature_names.len();
    let mut seen = HashSet::new();

    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != nf + 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", nf + 2, rec.len()),
            ));
        }
        let firm = rec[0].to_string();
        let quarter: i64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("quarter_index '{}' is not an integer", &rec[1])))?;
        if !seen.insert((firm.clone(), quarter)) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate row for firm {firm} quarter {quarter}"),
            ));
        }
        let mut features = Vec::with_capacity(nf);
        let mut observed = Vec::with_capacity(nf);
        for (j, cell) in rec.iter().skip(2).enumerate() {
            if cell.trim().is_empty() {
                features.push(f64::NAN);
                observed.push(false);
            } else {
                features.push(parse_f64(path, line, cell, &table.feature_names[j])?);
                observed.push(true);
            }
        }
        let steps = table.firms.entry(firm.clone()).or_insert_with(|| {
            table.order.push(firm);
            Vec::new()
        });
        steps.push(Step {
            quarter,
            features,
            delta_t: 0.0,
            observed,
        });
    }
    Ok(table)
}

/// Notice and risk embeddings per firm id.
type TextTable = HashMap<String, (Option<Vec<f64>>, Option<Vec<f64>>)>;

fn read_text(path: &Path) -> Result<(usize, TextTable)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    let mut out = TextTable::new();
    if header.is_empty() {
        return Ok((0, out));
    }
    if header.len() < 2 || &header[0] != "firm_id" || &header[1] != "section" {
        return Err(parse_err(path, 1, "header must start with firm_id,section"));
    }
    let d_ch = header.len() - 2;
    for (j, h) in header.iter().skip(2).enumerate() {
        if h != format!("dim_{j}") {
            return Err(parse_err(path, 1, format!("expected column dim_{j}, found {h}")));
        }
    }
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != d_ch + 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", d_ch + 2, rec.len()),
            ));
        }
        let vals = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(j, c)| parse_f64(path, line, c, &format!("dim_{j}")))
            .collect::<Result<Vec<_>>>()?;
        let entry = out.entry(rec[0].to_string()).or_default();
        let slot = match &rec[1] {
            "notice" => &mut entry.0,
            "risk" => &mut entry.1,
            other => {
                return Err(parse_err(
                    path,
                    line,
                    format!("section must be notice or risk, found '{other}'"),
                ))
            }
        };
        if slot.is_some() {
            return Err(parse_err(
                path,
                line,
                format!("duplicate {} section for firm {}", &rec[1], &rec[0]),
            ));
        }
        *slot = Some(vals);
    }
    Ok((d_ch, out))
}

fn read_labels(path: &Path) -> Result<Vec<(String, Label, u64)>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Ok(Vec::new());
    }
    if header.len() != 2 || &header[0] != "firm_id" || &header[1] != "label" {
        return Err(parse_err(path, 1, "header must be firm_id,label"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let code: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("label '{}' is not 0, 1 or 2", &rec[1])))?;
        let label = Label::from_index(code).map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push((rec[0].to_string(), label, line));
    }
    Ok(out)
}

/// Reads the three CSV files into one sample per firm, in order of first
/// appearance in the series file.
pub fn load_dataset(series_path: &Path, text_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut series = read_series(series_path)?;
    let (d_ch, mut text) = read_text(text_path)?;
    let labels = read_labels(labels_path)?;

    let mut label_of = HashMap::new();
    for (firm, label, line) in labels {
        if !series.firms.contains_key(&firm) {
            return Err(parse_err(labels_path, line, format!("unknown firm {firm}")));
        }
        if label_of.insert(firm.clone(), label).is_some() {
            return Err(parse_err(labels_path, line, format!("duplicate label for firm {firm}")));
        }
    }
    if let Some(firm) = text.keys().find(|f| !series.firms.contains_key(*f)) {
        return Err(parse_err(text_path, 0, format!("unknown firm {firm}")));
    }

    let mut samples = Vec::with_capacity(series.order.len());
    for firm in &series.order {
        let mut steps = series.firms.remove(firm).expect("grouped");
        steps.sort_by_key(|s| s.quarter);
        let mut fs = FirmSeries {
            firm_id: firm.clone(),
            steps,
        };
        fs.recompute_deltas();
        let label = *label_of
            .get(firm)
            .ok_or_else(|| parse_err(labels_path, 0, format!("no label for firm {firm}")))?;
        let (notice, risk) = match text.remove(firm) {
            Some((Some(n), Some(r))) => (n, r),
            _ => {
                return Err(parse_err(
                    text_path,
                    0,
                    format!("firm {firm} needs both notice and risk sections"),
                ))
            }
        };
        samples.push(Sample {
            series: fs,
            text: TextFeatures { notice, risk },
            label,
            synthetic: false,
        });
    }

    let ds = Dataset {
        samples,
        feature_names: series.feature_names,
        d_ch,
    };
    ds.validate()?;
    Ok(ds)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes the canonical CSV form read by [`load_dataset`].
pub fn save_dataset(ds: &Dataset, series_path: &Path, text_path: &Path, labels_path: &Path) -> Result<()> {
    let mut w = writer(series_path)?;
    let mut header = vec!["firm_id".to_string(), "quarter_index".to_string()];
    header.extend(ds.feature_names.iter().cloned());
    w.write_record(&header)?;
    for s in &ds.samples {
        for st in &s.series.steps {
            let mut row = vec![s.firm_id().to_string(), st.quarter.to_string()];
            row.extend(
                st.features
                    .iter()
                    .zip(&st.observed)
                    .map(|(v, o)| if *o { fmt(*v) } else { String::new() }),
            );
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(series_path, e))?;

    let mut w = writer(text_path)?;
    let mut header = vec!["firm_id".to_string(), "section".to_string()];
    header.extend((0..ds.d_ch).map(|j| format!("dim_{j}")));
    w.write_record(&header)?;
    for s in &ds.samples {
        for (name, v) in [("notice", &s.text.notice), ("risk", &s.text.risk)] {
            let mut row = vec![s.firm_id().to_string(), name.to_string()];
            row.extend(v.iter().map(|x| fmt(*x)));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(text_path, e))?;

    let mut w = writer(labels_path)?;
    w.write_record(["firm_id", "label"])?;
    for s in &ds.samples {
        w.write_record([s.firm_id(), &s.label.index().to_string()])?;
    }
    w.flush().map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

fn dir_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join(SERIES_FILE), dir.join(TEXT_FILE), dir.join(LABELS_FILE))
}

/// Loads `series.csv`, `text.csv` and `labels.csv` from `dir`.
pub fn load_dir(dir: &Path) -> Result<Dataset> {
    let (s, t, l) = dir_paths(dir);
    load_dataset(&s, &t, &l)
}

pub fn save_dir(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (s, t, l) = dir_paths(dir);
    save_dataset(ds, &s, &t, &l)
}
