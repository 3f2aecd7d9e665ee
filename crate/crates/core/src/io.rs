//! CSV persistence for models, training histories, meshes and experiment
//! tables. Every file has a single header line; a network additionally
//! carries its left-edge coefficient on a leading `#` comment line.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::conditioning::ConditioningReport;
use crate::error::{Error, Result};
use crate::losses::loglog_slope;
use crate::relu::ReluModel;
use crate::splines::{FksModel, KnotVector};
use crate::training::{Model, TrainReport};

const LEFT_COEF_TAG: &str = "# left_coef,";

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(r)
}

// `{:e}` round-trips every f64 exactly.
fn f(x: f64) -> String {
    format!("{x:e}")
}

fn parse(field: Option<&str>, what: &str) -> Result<f64> {
    field
        .ok_or_else(|| Error::Parse(format!("missing {what} column")))?
        .trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
}

/// `i,k,w`
pub fn write_fks<W: Write>(m: &FksModel, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["i", "k", "w"])?;
    for (i, (k, wt)) in m.knots().as_slice().iter().zip(m.weights()).enumerate() {
        w.write_record([i.to_string(), f(*k), f(*wt)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fks<R: Read>(input: R) -> Result<FksModel> {
    let mut r = reader(input);
    check_header(&mut r, &["i", "k", "w"])?;
    let (mut k, mut w) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        k.push(parse(rec.get(1), "k")?);
        w.push(parse(rec.get(2), "w")?);
    }
    FksModel::new(KnotVector::new(k)?, w)
}

/// `# left_coef,L` followed by `i,k,c`; the last knot's `c` is left empty.
pub fn write_relu<W: Write>(m: &ReluModel, mut out: W) -> Result<()> {
    writeln!(out, "{LEFT_COEF_TAG}{}", f(m.left_coef()))?;
    let mut w = writer(out);
    w.write_record(["i", "k", "c"])?;
    let c = m.scalings();
    for (i, k) in m.knots().as_slice().iter().enumerate() {
        let ci = c.get(i).map(|v| f(*v)).unwrap_or_default();
        w.write_record([i.to_string(), f(*k), ci])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_relu<R: Read>(mut input: R) -> Result<ReluModel> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let left = text
        .lines()
        .find_map(|l| l.strip_prefix(LEFT_COEF_TAG))
        .ok_or_else(|| Error::Parse("missing '# left_coef,' line".into()))?;
    let left = parse(Some(left), "left_coef")?;
    let mut r = reader(text.as_bytes());
    check_header(&mut r, &["i", "k", "c"])?;
    let (mut k, mut c) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        k.push(parse(rec.get(1), "k")?);
        if let Some(v) = rec.get(2).filter(|s| !s.trim().is_empty()) {
            c.push(parse(Some(v), "c")?);
        }
    }
    ReluModel::new(KnotVector::new(k)?, c, left)
}

pub fn write_model<W: Write>(m: &Model, out: W) -> Result<()> {
    match m {
        Model::Fks(m) => write_fks(m, out),
        Model::Relu(m) => write_relu(m, out),
    }
}

/// `i,k`
pub fn write_knots<W: Write>(kv: &KnotVector, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["i", "k"])?;
    for (i, k) in kv.as_slice().iter().enumerate() {
        w.write_record([i.to_string(), f(*k)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_knots<R: Read>(input: R) -> Result<KnotVector> {
    let mut r = reader(input);
    check_header(&mut r, &["i", "k"])?;
    let k = r
        .records()
        .map(|rec| parse(rec?.get(1), "k"))
        .collect::<Result<Vec<_>>>()?;
    KnotVector::new(k)
}

/// `iter,loss`
pub fn write_loss_history<W: Write>(report: &TrainReport, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["iter", "loss"])?;
    for (i, l) in &report.loss_history {
        w.write_record([i.to_string(), f(*l)])?;
    }
    w.flush()?;
    Ok(())
}

/// `iter,k_0,..,k_{N-1}`
pub fn write_knot_trajectory<W: Write>(report: &TrainReport, out: W) -> Result<()> {
    let mut w = writer(out);
    let n = report.final_model.knots().len();
    let header: Vec<String> = std::iter::once("iter".to_string()).chain((0..n).map(|i| format!("k_{i}"))).collect();
    w.write_record(&header)?;
    for (iter, row) in &report.knot_trajectory {
        let rec: Vec<String> = std::iter::once(iter.to_string()).chain(row.iter().map(|k| f(*k))).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `iter,loss` back.
pub fn read_loss_history<R: Read>(input: R) -> Result<Vec<(usize, f64)>> {
    let mut r = reader(input);
    check_header(&mut r, &["iter", "loss"])?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let iter = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse("bad iter".into()))?;
            Ok((iter, parse(rec.get(1), "loss")?))
        })
        .collect()
}

/// `N,kappa_M,kappa_T,kappa_MTinv,predicted`
pub fn write_conditioning<W: Write>(rows: &[ConditioningReport], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["N", "kappa_M", "kappa_T", "kappa_MTinv", "predicted"])?;
    for r in rows {
        w.write_record([r.n.to_string(), f(r.kappa_m), f(r.kappa_t), f(r.kappa_mtinv), f(r.predicted_kappa_mtinv)])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a convergence sweep.
///
/// `slope` is the least-squares log-log slope over this row and up to
/// [`SLOPE_WINDOW`] - 1 preceding rows, so the last row carries the fit over
/// the largest N values; it is absent on the first row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub loss: f64,
    pub slope: Option<f64>,
}

/// Number of trailing points in each slope fit.
pub const SLOPE_WINDOW: usize = 4;

/// Builds rows with trailing slope fits from `(N, loss)` pairs sorted by `N`.
pub fn convergence_rows(points: &[(usize, f64)]) -> Vec<ConvergenceRow> {
    points
        .iter()
        .enumerate()
        .map(|(i, &(n, loss))| ConvergenceRow {
            n,
            loss,
            slope: (i > 0).then(|| loglog_slope(&points[(i + 1).saturating_sub(SLOPE_WINDOW)..=i])),
        })
        .collect()
}

/// `N,loss,slope`
pub fn write_convergence<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["N", "loss", "slope"])?;
    for r in rows {
        w.write_record([r.n.to_string(), f(r.loss), r.slope.map(f).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

/// Creates `path` (and its parent directories) for buffered writing.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = r.headers()?;
    if h.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse(format!("expected header '{}', found '{}'", expected.join(","), h.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(())
}
