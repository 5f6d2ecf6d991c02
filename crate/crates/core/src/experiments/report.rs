use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::benchmark::{CellSummary, Failure, RepRisk, ReportMetadata, RiskReport};
use super::config::Method;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// From the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ReportFormat::Json,
            _ => ReportFormat::Csv,
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// 17 significant digits: enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
struct CsvMeta {
    metadata: ReportMetadata,
    failures: Vec<Failure>,
}

/// Writes `report` to `path` and returns every file written.
///
/// JSON is a single document. CSV is the long table `method,n,rep,risk` at
/// `path`, the summary `method,n,mise_mean,mise_sd` at `<stem>_summary.csv`
/// and metadata plus failures at `<stem>_meta.json`.
pub fn write_report(report: &RiskReport, path: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(report).map_err(|e| parse_err(path, e.to_string()))?;
            write_file(path, &(text + "\n"))?;
            Ok(vec![path.to_path_buf()])
        }
        ReportFormat::Csv => {
            let mut long = String::from("method,n,rep,risk\n");
            let mut summary = String::from("method,n,mise_mean,mise_sd\n");
            for c in &report.cells {
                for r in &c.per_rep {
                    let _ = writeln!(long, "{},{},{},{}", c.method.name(), c.n, r.rep, num(r.risk));
                }
                let _ = writeln!(
                    summary,
                    "{},{},{},{}",
                    c.method.name(),
                    c.n,
                    num(c.mise_mean),
                    num(c.mise_sd)
                );
            }
            let meta = CsvMeta {
                metadata: report.metadata.clone(),
                failures: report.failures.clone(),
            };
            let summary_path = sibling(path, "_summary.csv");
            let meta_path = sibling(path, "_meta.json");
            let meta_text = serde_json::to_string_pretty(&meta).map_err(|e| parse_err(&meta_path, e.to_string()))?;
            write_file(path, &long)?;
            write_file(&summary_path, &summary)?;
            write_file(&meta_path, &(meta_text + "\n"))?;
            Ok(vec![path.to_path_buf(), summary_path, meta_path])
        }
    }
}

/// Inverse of [`write_report`]; the format follows the extension.
pub fn read_report(path: &Path) -> Result<RiskReport> {
    match ReportFormat::from_path(path) {
        ReportFormat::Json => serde_json::from_str(&read_file(path)?).map_err(|e| parse_err(path, e.to_string())),
        ReportFormat::Csv => {
            let meta_path = sibling(path, "_meta.json");
            let meta: CsvMeta =
                serde_json::from_str(&read_file(&meta_path)?).map_err(|e| parse_err(&meta_path, e.to_string()))?;
            let long = read_file(path)?;
            let summary_path = sibling(path, "_summary.csv");
            let summary = read_file(&summary_path)?;

            let mut cells: Vec<CellSummary> = Vec::new();
            for (i, line) in data_lines(&summary, "method,n,mise_mean,mise_sd", &summary_path)? {
                let f = fields(line, 4, &summary_path, i)?;
                cells.push(CellSummary {
                    method: f[0].parse().map_err(|_| parse_err(&summary_path, format!("line {i}: bad method")))?,
                    n: parse_num(f[1], &summary_path, i)?,
                    mise_mean: parse_num(f[2], &summary_path, i)?,
                    mise_sd: parse_num(f[3], &summary_path, i)?,
                    per_rep: Vec::new(),
                });
            }
            for (i, line) in data_lines(&long, "method,n,rep,risk", path)? {
                let f = fields(line, 4, path, i)?;
                let method: Method = f[0].parse().map_err(|_| parse_err(path, format!("line {i}: bad method")))?;
                let n: usize = parse_num(f[1], path, i)?;
                let cell = cells
                    .iter_mut()
                    .find(|c| c.method == method && c.n == n)
                    .ok_or_else(|| parse_err(path, format!("line {i}: cell missing from summary")))?;
                cell.per_rep.push(RepRisk {
                    rep: parse_num(f[2], path, i)?,
                    risk: parse_num(f[3], path, i)?,
                });
            }
            Ok(RiskReport {
                metadata: meta.metadata,
                cells,
                failures: meta.failures,
            })
        }
    }
}

fn data_lines<'a>(text: &'a str, header: &str, path: &Path) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == header => Ok(lines.map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.is_empty())),
        _ => Err(parse_err(path, format!("expected header '{header}'"))),
    }
}

fn fields<'a>(line: &'a str, count: usize, path: &Path, i: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != count {
        return Err(parse_err(path, format!("line {i}: expected {count} fields")));
    }
    Ok(f)
}

fn parse_num<T: std::str::FromStr>(s: &str, path: &Path, i: usize) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(path, format!("line {i}: cannot parse '{s}'")))
}

/// Tidy `series,x,y` tables, one per panel: `mise.csv` (mean risk against
/// `n`) and `sd.csv` (its standard deviation). Series are method names.
pub fn emit_plot_data(report: &RiskReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let panels: [(&str, fn(&CellSummary) -> f64); 2] = [("mise.csv", |c| c.mise_mean), ("sd.csv", |c| c.mise_sd)];
    let mut written = Vec::new();
    for (name, value) in panels {
        let mut text = String::from("series,x,y\n");
        for c in &report.cells {
            let _ = writeln!(text, "{},{},{}", c.method.name(), c.n, num(value(c)));
        }
        let path = dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// One cell of the selection-excess table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessRow {
    pub m: usize,
    pub n: usize,
    /// Monte Carlo excess risk of empirical risk minimization.
    pub excess: f64,
    /// `sqrt(log M / n)`.
    pub bound: f64,
    pub ratio: f64,
    /// Excess of the exponentially weighted aggregate, when computed.
    pub aggregate_excess: Option<f64>,
}

/// `M,n,excess,bound,ratio`, with an `aggregate_excess` column when any row
/// carries one.
pub fn write_excess_table(rows: &[ExcessRow], path: &Path) -> Result<()> {
    let with_agg = rows.iter().any(|r| r.aggregate_excess.is_some());
    let mut text = String::from("M,n,excess,bound,ratio");
    text.push_str(if with_agg { ",aggregate_excess\n" } else { "\n" });
    for r in rows {
        let _ = write!(text, "{},{},{},{},{}", r.m, r.n, num(r.excess), num(r.bound), num(r.ratio));
        if with_agg {
            let _ = write!(text, ",{}", r.aggregate_excess.map_or(String::from("NA"), num));
        }
        text.push('\n');
    }
    write_file(path, &text)
}

pub fn read_excess_table(path: &Path) -> Result<Vec<ExcessRow>> {
    let text = read_file(path)?;
    let header = text.lines().next().unwrap_or_default();
    let with_agg = header.ends_with(",aggregate_excess");
    let width = if with_agg { 6 } else { 5 };
    let rows = data_lines(&text, header, path)?
        .map(|(i, line)| {
            let f = fields(line, width, path, i)?;
            Ok(ExcessRow {
                m: parse_num(f[0], path, i)?,
                n: parse_num(f[1], path, i)?,
                excess: parse_num(f[2], path, i)?,
                bound: parse_num(f[3], path, i)?,
                ratio: parse_num(f[4], path, i)?,
                aggregate_excess: match f.get(5) {
                    Some(&"NA") | None => None,
                    Some(s) => Some(parse_num(s, path, i)?),
                },
            })
        })
        .collect();
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentConfig;

    fn sample_report() -> RiskReport {
        RiskReport {
            metadata: ReportMetadata {
                sigma: 0.1 + 0.2,
                master_seed: 3,
                version: "x".into(),
                config: ExperimentConfig::desk_scale("hardsine"),
            },
            cells: vec![
                CellSummary::from_reps(
                    Method::Gcv,
                    20,
                    vec![RepRisk { rep: 0, risk: 1.0 / 3.0 }, RepRisk { rep: 2, risk: 2e-300 }],
                ),
                CellSummary::from_reps(Method::AggregateJackknife, 20, vec![RepRisk { rep: 1, risk: 0.7 }]),
            ],
            failures: vec![Failure {
                method: Method::AggregateJackknife,
                n: 20,
                rep: 0,
                seed: 99,
                message: "boom".into(),
            }],
        }
    }

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample_report();
        for (name, fmt) in [("r.csv", ReportFormat::Csv), ("r.json", ReportFormat::Json)] {
            let p = dir.path().join(name);
            write_report(&r, &p, fmt).unwrap();
            assert_eq!(read_report(&p).unwrap(), r);
        }
    }

    #[test]
    fn single_cell_csv_is_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = sample_report();
        r.cells.truncate(1);
        r.cells[0].per_rep.truncate(1);
        let p = dir.path().join("one.csv");
        write_report(&r, &p, ReportFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "method,n,rep,risk\ngcv,20,0,3.3333333333333331e-1\n");
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "").unwrap();
        let p = blocker.join("sub").join("r.json");
        match write_report(&sample_report(), &p, ReportFormat::Json) {
            Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn excess_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let rows = vec![
            ExcessRow { m: 16, n: 32, excess: 0.3, bound: 0.29, ratio: 0.3 / 0.29, aggregate_excess: Some(-0.1) },
            ExcessRow { m: 64, n: 32, excess: 0.4, bound: 0.36, ratio: 0.4 / 0.36, aggregate_excess: None },
        ];
        write_excess_table(&rows, &p).unwrap();
        assert_eq!(read_excess_table(&p).unwrap(), rows);
    }
}
