//! CSV reading and writing for samples, block models and posterior fields.
//!
//! Sample files have a header row `x,y,z,hx,hy,hz,value[,noise]`, or
//! `x,y,hx,hy,value[,noise]` in two dimensions. Lines starting with `#` are
//! comments; block-model files carry their grid in `# origin=..`,
//! `# cell=..` and `# counts=..` comments.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::covariance::SupportSample;
use crate::error::{Error, Result};
use crate::fusion::BlockModel;
use crate::gp::PosteriorField;

const COLS_3D: [&str; 6] = ["x", "y", "z", "hx", "hy", "hz"];
const COLS_2D: [&str; 4] = ["x", "y", "hx", "hy"];

fn schema(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Schema { path: path.display().to_string(), line, msg: msg.into() }
}

/// `key=value` pairs from the leading `#` comment lines.
pub fn read_comment_pairs(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .flat_map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>())
        .filter_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

// The metadata values themselves contain commas, so keep whole lines here.
fn read_comment_lines(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .filter_map(|l| {
            let (k, v) = l.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path, text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(schema(path, 1, "missing header row"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            schema(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_num(path: &Path, line: usize, col: &str, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| schema(path, line, format!("column '{col}': cannot parse '{s}' as a number")))?;
    if !v.is_finite() {
        return Err(schema(path, line, format!("column '{col}': non-finite value")));
    }
    Ok(v)
}

/// Column positions of the geometry block, `value` and optional extras.
fn locate(path: &Path, header: &[String], value_col: &str) -> Result<(usize, Vec<usize>, usize)> {
    let find = |name: &str| header.iter().position(|h| h == name);
    let dim = if find("z").is_some() || find("hz").is_some() { 3 } else { 2 };
    let names: &[&str] = if dim == 3 { &COLS_3D } else { &COLS_2D };
    let mut idx = Vec::new();
    for n in names {
        idx.push(find(n).ok_or_else(|| schema(path, 1, format!("missing column '{n}'")))?);
    }
    let v = find(value_col).ok_or_else(|| schema(path, 1, format!("missing column '{value_col}'")))?;
    Ok((dim, idx, v))
}

fn parse_samples(path: &Path, t: &Table, value_col: &str) -> Result<(Vec<SupportSample>, Vec<Vec<String>>)> {
    let (dim, idx, vcol) = locate(path, &t.header, value_col)?;
    let ncol = t.header.iter().position(|h| h == "noise");
    let mut out = Vec::with_capacity(t.rows.len());
    let mut raw = Vec::with_capacity(t.rows.len());
    for (line, row) in &t.rows {
        if row.len() != t.header.len() {
            return Err(schema(path, *line, format!("expected {} fields, found {}", t.header.len(), row.len())));
        }
        let mut c = Vec::with_capacity(dim);
        let mut h = Vec::with_capacity(dim);
        for m in 0..dim {
            c.push(parse_num(path, *line, &t.header[idx[m]], &row[idx[m]])?);
            let hv = parse_num(path, *line, &t.header[idx[dim + m]], &row[idx[dim + m]])?;
            if hv < 0.0 {
                return Err(schema(path, *line, format!("column '{}': negative extent", t.header[idx[dim + m]])));
            }
            h.push(hv);
        }
        let value = parse_num(path, *line, value_col, &row[vcol])?;
        let mut s = SupportSample::new(c, h, value);
        if let Some(nc) = ncol {
            if !row[nc].is_empty() {
                let n = parse_num(path, *line, "noise", &row[nc])?;
                if n < 0.0 {
                    return Err(schema(path, *line, "column 'noise': negative value"));
                }
                s.noise = Some(n);
            }
        }
        out.push(s);
        raw.push(row.clone());
    }
    Ok((out, raw))
}

pub fn read_samples(path: &Path) -> Result<Vec<SupportSample>> {
    let text = fs::read_to_string(path)?;
    let t = read_table(path, &text)?;
    Ok(parse_samples(path, &t, "value")?.0)
}

fn geometry_header(dim: usize) -> Vec<&'static str> {
    if dim == 3 {
        COLS_3D.to_vec()
    } else {
        COLS_2D.to_vec()
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn geometry_fields(s: &SupportSample) -> Vec<String> {
    s.centroid.iter().chain(&s.extent).map(|v| fmt(*v)).collect()
}

fn write_lines(path: &Path, comments: &[String], header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut out = Vec::new();
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    fs::write(path, out)?;
    Ok(())
}

fn check_dims(samples: &[SupportSample]) -> Result<usize> {
    let dim = samples.first().map_or(3, SupportSample::dim);
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidInput(format!("only 2-D and 3-D samples can be written, got {dim}")));
    }
    if let Some(s) = samples.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: s.dim() });
    }
    Ok(dim)
}

/// Write samples; a `noise` column is added when any sample carries noise.
pub fn write_samples(path: &Path, samples: &[SupportSample], comments: &[String]) -> Result<()> {
    let dim = check_dims(samples)?;
    let with_noise = samples.iter().any(|s| s.noise.is_some());
    let mut header = geometry_header(dim);
    header.push("value");
    if with_noise {
        header.push("noise");
    }
    let rows = samples.iter().map(|s| {
        let mut r = geometry_fields(s);
        r.push(fmt(s.value));
        if with_noise {
            r.push(s.noise.map(fmt).unwrap_or_default());
        }
        r
    });
    write_lines(path, comments, &header, rows)
}

fn parse_triple<T: std::str::FromStr>(path: &Path, key: &str, v: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let bad = || schema(path, 0, format!("grid metadata '{key}' must hold three comma-separated numbers, got '{v}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| bad())?);
    }
    out.try_into().map_err(|_| bad())
}

/// Read a block model; the grid comes from the header comments and every
/// row must be a cell of that grid.
pub fn read_block_model(path: &Path) -> Result<BlockModel> {
    let text = fs::read_to_string(path)?;
    let meta = read_comment_lines(&text);
    let get = |k: &str| {
        meta.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| schema(path, 0, format!("missing '# {k}=' grid metadata")))
    };
    let origin: [f64; 3] = parse_triple(path, "origin", &get("origin")?)?;
    let cell_size: [f64; 3] = parse_triple(path, "cell", &get("cell")?)?;
    let counts: [usize; 3] = parse_triple(path, "counts", &get("counts")?)?;
    let t = read_table(path, &text)?;
    let (cells, _) = parse_samples(path, &t, "value")?;
    if let Some(c) = cells.iter().find(|c| c.dim() != 3) {
        return Err(schema(path, 1, format!("block models are 3-D, found {}-D rows", c.dim())));
    }
    let bm = BlockModel { origin, cell_size, counts, cells };
    bm.validate().map_err(|e| schema(path, 0, e.to_string()))?;
    Ok(bm)
}

pub fn block_model_comments(bm: &BlockModel) -> Vec<String> {
    let j = |v: &[String]| v.join(",");
    vec![
        format!("origin={}", j(&bm.origin.iter().map(|v| fmt(*v)).collect::<Vec<_>>())),
        format!("cell={}", j(&bm.cell_size.iter().map(|v| fmt(*v)).collect::<Vec<_>>())),
        format!("counts={}", j(&bm.counts.iter().map(|v| v.to_string()).collect::<Vec<_>>())),
    ]
}

pub fn write_block_model(path: &Path, bm: &BlockModel, comments: &[String]) -> Result<()> {
    let mut all = comments.to_vec();
    all.extend(block_model_comments(bm));
    write_samples(path, &bm.cells, &all)
}

/// Extra per-row columns appended to a field file.
pub struct ExtraColumn<'a> {
    pub name: &'a str,
    pub values: Vec<String>,
}

/// Posterior field as geometry plus `mean,std` and any extra columns.
pub fn write_field(path: &Path, field: &PosteriorField, extra: &[ExtraColumn], comments: &[String]) -> Result<()> {
    let dim = check_dims(&field.locations)?;
    for e in extra {
        if e.values.len() != field.len() {
            return Err(Error::DimensionMismatch { expected: field.len(), got: e.values.len() });
        }
    }
    let mut header = geometry_header(dim);
    header.extend(["mean", "std"]);
    header.extend(extra.iter().map(|e| e.name));
    let rows = (0..field.len()).map(|i| {
        let mut r = geometry_fields(&field.locations[i]);
        r.push(fmt(field.mean[i]));
        r.push(fmt(field.std[i]));
        r.extend(extra.iter().map(|e| e.values[i].clone()));
        r
    });
    write_lines(path, comments, &header, rows)
}

/// Read a field file; sample values hold the means.
pub fn read_field(path: &Path) -> Result<PosteriorField> {
    let text = fs::read_to_string(path)?;
    let t = read_table(path, &text)?;
    let (locations, raw) = parse_samples(path, &t, "mean")?;
    let scol = t.header.iter().position(|h| h == "std").ok_or_else(|| schema(path, 1, "missing column 'std'"))?;
    let mut std = Vec::with_capacity(raw.len());
    for ((line, _), row) in t.rows.iter().zip(&raw) {
        std.push(parse_num(path, *line, "std", &row[scol])?);
    }
    let mean = locations.iter().map(|s| s.value).collect();
    Ok(PosteriorField { locations, mean, std, cov: None })
}
