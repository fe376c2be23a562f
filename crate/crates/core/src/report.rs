//! Reporting: bucketed perr heatmaps (matrix, CSV, SVG) and machine-readable
//! anomaly report files.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::causal::{graph_to_csv, graph_to_dot, CausalGraph};
use crate::error::{Error, Result};
use crate::scoring::ReconstructionReport;
use crate::verdict::AnomalyVerdict;

pub type Rgb = (u8, u8, u8);

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSpec {
    /// Samples per time bucket.
    pub bucket_len: usize,
    /// Row order of the rendered heatmap; a permutation of the frame sensors.
    pub sensor_order: Vec<usize>,
    /// Endpoint color for perr = 0.
    pub color_low: Rgb,
    /// Endpoint color for perr >= clamp_max.
    pub color_high: Rgb,
    /// Rendering clamp in percent; the exported matrix stays unclamped.
    pub clamp_max: f64,
}

impl HeatmapSpec {
    pub fn defaults(sensor_count: usize) -> Self {
        Self {
            bucket_len: 60,
            sensor_order: (0..sensor_count).collect(),
            color_low: (33, 102, 172),
            color_high: (178, 24, 43),
            clamp_max: 20.0,
        }
    }

    fn validate(&self, sensor_count: usize) -> Result<()> {
        if self.bucket_len < 1 {
            return Err(Error::InvalidArgument("bucket_len must be >= 1".into()));
        }
        let mut seen = vec![false; sensor_count];
        for &s in &self.sensor_order {
            if s >= sensor_count || seen[s] {
                return Err(Error::InvalidArgument(
                    "sensor_order must be a permutation of the frame sensors".into(),
                ));
            }
            seen[s] = true;
        }
        if !seen.iter().all(|&b| b) {
            return Err(Error::InvalidArgument(
                "sensor_order must cover every sensor".into(),
            ));
        }
        if self.clamp_max <= 0.0 {
            return Err(Error::InvalidArgument("clamp_max must be > 0".into()));
        }
        Ok(())
    }
}

/// Mean perr per (sensor, time bucket); rows follow the spec's sensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    /// rows[i][b] is the mean perr of sensor_order[i] in bucket b; None where
    /// no covered sample fell in the bucket.
    pub rows: Vec<Vec<Option<f64>>>,
    pub sensor_order: Vec<usize>,
    pub bucket_len: usize,
}

/// Buckets the perr matrix; uncovered cells stay missing, a trailing partial
/// bucket is kept.
pub fn heatmap_matrix(report: &ReconstructionReport, spec: &HeatmapSpec) -> Result<HeatmapMatrix> {
    let (t, s_count) = report.perr.dim();
    spec.validate(s_count)?;
    if spec.bucket_len > t {
        return Err(Error::InvalidArgument(format!(
            "bucket_len {} exceeds frame length {t}",
            spec.bucket_len
        )));
    }
    let n_buckets = t.div_ceil(spec.bucket_len);
    let mut rows = Vec::with_capacity(spec.sensor_order.len());
    for &sensor in &spec.sensor_order {
        let mut row = Vec::with_capacity(n_buckets);
        for b in 0..n_buckets {
            let start = b * spec.bucket_len;
            let end = ((b + 1) * spec.bucket_len).min(t);
            let mut sum = 0.0;
            let mut n = 0usize;
            for i in start..end {
                if report.coverage[(i, sensor)] {
                    sum += report.perr[(i, sensor)];
                    n += 1;
                }
            }
            row.push((n > 0).then(|| sum / n as f64));
        }
        rows.push(row);
    }
    Ok(HeatmapMatrix {
        rows,
        sensor_order: spec.sensor_order.clone(),
        bucket_len: spec.bucket_len,
    })
}

/// CSV export of the (unclamped) heatmap matrix: one row per sensor, header
/// row of bucket start timestamps. Missing cells are empty fields.
pub fn heatmap_to_csv(matrix: &HeatmapMatrix, names: &[String], timestamps: &[f64]) -> String {
    let mut out = String::from("sensor");
    let n_buckets = matrix.rows.first().map_or(0, Vec::len);
    for b in 0..n_buckets {
        let idx = b * matrix.bucket_len;
        let ts = timestamps.get(idx).copied().unwrap_or(idx as f64);
        out.push_str(&format!(",{ts}"));
    }
    out.push('\n');
    for (row, &sensor) in matrix.rows.iter().zip(&matrix.sensor_order) {
        let name = names
            .get(sensor)
            .cloned()
            .unwrap_or_else(|| format!("s{sensor}"));
        out.push_str(&name);
        for cell in row {
            match cell {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Parses a heatmap CSV written by [`heatmap_to_csv`]; returns the matrix
/// (row order as written, sensor_order re-indexed 0..n) and the row names.
pub fn heatmap_from_csv(text: &str) -> Result<(HeatmapMatrix, Vec<String>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty heatmap CSV".into()))?;
    if !header.starts_with("sensor") {
        return Err(Error::Format("heatmap CSV must start with 'sensor'".into()));
    }
    let n_buckets = header.split(',').count() - 1;
    let mut rows = Vec::new();
    let mut names = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        names.push(
            parts
                .next()
                .ok_or_else(|| Error::Format("missing sensor name".into()))?
                .to_string(),
        );
        let mut row = Vec::with_capacity(n_buckets);
        for cell in parts {
            if cell.is_empty() {
                row.push(None);
            } else {
                row.push(Some(cell.parse::<f64>().map_err(|_| {
                    Error::Format(format!("heatmap CSV line {}: bad value", lineno + 2))
                })?));
            }
        }
        if row.len() != n_buckets {
            return Err(Error::Format(format!(
                "heatmap CSV line {}: expected {} buckets",
                lineno + 2,
                n_buckets
            )));
        }
        rows.push(row);
    }
    let order: Vec<usize> = (0..rows.len()).collect();
    Ok((
        HeatmapMatrix {
            rows,
            sensor_order: order,
            bucket_len: 1,
        },
        names,
    ))
}

const CELL_W: f64 = 12.0;
const CELL_H: f64 = 18.0;
const LABEL_W: f64 = 120.0;

fn lerp_channel(a: u8, b: u8, f: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * f).round() as u8
}

/// Pure SVG rendering of a heatmap matrix: one rectangle per cell, rows in
/// sensor order, linear color interpolation between the endpoint colors,
/// missing cells gray. Output bytes are deterministic for a fixed input.
pub fn render_heatmap(matrix: &HeatmapMatrix, spec: &HeatmapSpec, names: &[String]) -> String {
    let n_rows = matrix.rows.len();
    let n_cols = matrix.rows.first().map_or(0, Vec::len);
    let width = LABEL_W + n_cols as f64 * CELL_W + 10.0;
    let height = n_rows as f64 * CELL_H + 30.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\">\n"
    ));
    svg.push_str("<style>text{font-family:monospace;font-size:11px;}</style>\n");
    for (r, (row, &sensor)) in matrix.rows.iter().zip(&matrix.sensor_order).enumerate() {
        let y = 10.0 + r as f64 * CELL_H;
        let name = names
            .get(sensor)
            .cloned()
            .unwrap_or_else(|| format!("s{sensor}"));
        svg.push_str(&format!(
            "<text x=\"4\" y=\"{:.1}\">{}</text>\n",
            y + CELL_H * 0.7,
            xml_escape(&name)
        ));
        for (c, cell) in row.iter().enumerate() {
            let x = LABEL_W + c as f64 * CELL_W;
            let fill = match cell {
                Some(v) => {
                    let f = (v / spec.clamp_max).clamp(0.0, 1.0);
                    format!(
                        "rgb({},{},{})",
                        lerp_channel(spec.color_low.0, spec.color_high.0, f),
                        lerp_channel(spec.color_low.1, spec.color_high.1, f),
                        lerp_channel(spec.color_low.2, spec.color_high.2, f)
                    )
                }
                None => "rgb(200,200,200)".to_string(),
            };
            svg.push_str(&format!(
                "<rect class=\"cell\" x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL_W:.1}\" height=\"{CELL_H:.1}\" fill=\"{fill}\"/>\n"
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Paths of the files emitted by [`write_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub verdicts: PathBuf,
    pub graph_csv: PathBuf,
    pub graph_dot: PathBuf,
    pub summary: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportSummary {
    pub total: usize,
    pub by_level: BTreeMap<String, usize>,
    pub by_kind: BTreeMap<String, usize>,
    pub by_label: BTreeMap<String, usize>,
}

pub fn summarize(verdicts: &[AnomalyVerdict]) -> ReportSummary {
    let mut by_level = BTreeMap::new();
    let mut by_kind = BTreeMap::new();
    let mut by_label = BTreeMap::new();
    for v in verdicts {
        *by_level.entry(format!("{:?}", v.level)).or_insert(0) += 1;
        *by_kind
            .entry(serde_plain_name(&v.kind))
            .or_insert(0) += 1;
        *by_label
            .entry(serde_plain_name(&v.label))
            .or_insert(0) += 1;
    }
    ReportSummary {
        total: verdicts.len(),
        by_level,
        by_kind,
        by_label,
    }
}

fn serde_plain_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_else(|| "unknown".into())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::Write {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::Write {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Line-delimited JSON for verdicts, CSV and DOT for the causal graph, plus
/// a JSON summary of counts per level, kind, and label.
pub fn write_report(
    verdicts: &[AnomalyVerdict],
    graph: &CausalGraph,
    sensor_names: &[String],
    out_dir: &Path,
) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Write {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let files = ReportFiles {
        verdicts: out_dir.join("verdicts.jsonl"),
        graph_csv: out_dir.join("graph.csv"),
        graph_dot: out_dir.join("graph.dot"),
        summary: out_dir.join("summary.json"),
    };
    let mut jsonl = String::new();
    for v in verdicts {
        jsonl.push_str(&serde_json::to_string(v).map_err(|e| Error::Format(e.to_string()))?);
        jsonl.push('\n');
    }
    write_file(&files.verdicts, &jsonl)?;
    write_file(&files.graph_csv, &graph_to_csv(graph))?;
    write_file(&files.graph_dot, &graph_to_dot(graph, sensor_names))?;
    let summary = serde_json::to_string_pretty(&summarize(verdicts))
        .map_err(|e| Error::Format(e.to_string()))?;
    write_file(&files.summary, &summary)?;
    Ok(files)
}

/// Parses a verdict file written by [`write_report`].
pub fn read_verdicts(path: &Path) -> Result<Vec<AnomalyVerdict>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("verdict file line {}: {e}", lineno + 1))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdict::{AnomalyKind, Level};
    use ndarray::Array2;

    fn report_from_perr(perr: Array2<f64>, coverage: Array2<bool>) -> ReconstructionReport {
        ReconstructionReport {
            reconstruction: Array2::zeros(perr.dim()),
            perr,
            coverage,
        }
    }

    #[test]
    fn bucket_len_one_equals_perr() {
        let perr = Array2::from_shape_fn((6, 2), |(i, j)| (i + j) as f64);
        let mut coverage = Array2::from_elem((6, 2), true);
        coverage[(3, 1)] = false;
        let report = report_from_perr(perr.clone(), coverage);
        let spec = HeatmapSpec {
            bucket_len: 1,
            ..HeatmapSpec::defaults(2)
        };
        let m = heatmap_matrix(&report, &spec).unwrap();
        for (r, row) in m.rows.iter().enumerate() {
            for (b, cell) in row.iter().enumerate() {
                if r == 1 && b == 3 {
                    assert!(cell.is_none());
                } else {
                    assert_eq!(cell.unwrap(), perr[(b, r)]);
                }
            }
        }
    }

    #[test]
    fn constant_perr_survives_any_bucketing() {
        let report = report_from_perr(
            Array2::from_elem((30, 2), 3.0),
            Array2::from_elem((30, 2), true),
        );
        for bucket_len in [1, 4, 7, 30] {
            let spec = HeatmapSpec {
                bucket_len,
                ..HeatmapSpec::defaults(2)
            };
            let m = heatmap_matrix(&report, &spec).unwrap();
            for row in &m.rows {
                for cell in row {
                    assert_eq!(cell.unwrap(), 3.0);
                }
            }
        }
    }

    #[test]
    fn bucket_mean_skips_missing() {
        let mut perr = Array2::zeros((4, 1));
        perr[(0, 0)] = 2.0;
        perr[(1, 0)] = 4.0;
        perr[(3, 0)] = 6.0;
        let mut coverage = Array2::from_elem((4, 1), true);
        coverage[(2, 0)] = false;
        let report = report_from_perr(perr, coverage);
        let spec = HeatmapSpec {
            bucket_len: 4,
            ..HeatmapSpec::defaults(1)
        };
        let m = heatmap_matrix(&report, &spec).unwrap();
        assert_eq!(m.rows[0][0].unwrap(), 4.0);
    }

    #[test]
    fn heatmap_matches_brute_force_on_random_reports() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let t = rng.gen_range(5..120);
            let perr = Array2::from_shape_fn((t, 3), |_| rng.gen_range(0.0..30.0));
            let coverage = Array2::from_shape_fn((t, 3), |_| rng.gen_bool(0.8));
            let report = report_from_perr(perr.clone(), coverage.clone());
            let bucket_len = rng.gen_range(1..=t);
            let spec = HeatmapSpec {
                bucket_len,
                ..HeatmapSpec::defaults(3)
            };
            let m = heatmap_matrix(&report, &spec).unwrap();
            for (r, row) in m.rows.iter().enumerate() {
                for (b, cell) in row.iter().enumerate() {
                    let start = b * bucket_len;
                    let end = (start + bucket_len).min(t);
                    let vals: Vec<f64> = (start..end)
                        .filter(|&i| coverage[(i, r)])
                        .map(|i| perr[(i, r)])
                        .collect();
                    match cell {
                        None => assert!(vals.is_empty()),
                        Some(v) => {
                            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                            assert!((v - mean).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn svg_single_cell() {
        let m = HeatmapMatrix {
            rows: vec![vec![Some(1.0)]],
            sensor_order: vec![0],
            bucket_len: 1,
        };
        let spec = HeatmapSpec::defaults(1);
        let svg = render_heatmap(&m, &spec, &["a".into()]);
        assert_eq!(svg.matches("<rect").count(), 1);
    }

    #[test]
    fn svg_deterministic() {
        let m = HeatmapMatrix {
            rows: vec![vec![Some(3.3), None], vec![Some(19.0), Some(0.0)]],
            sensor_order: vec![1, 0],
            bucket_len: 2,
        };
        let spec = HeatmapSpec::defaults(2);
        let a = render_heatmap(&m, &spec, &["x".into(), "y".into()]);
        let b = render_heatmap(&m, &spec, &["x".into(), "y".into()]);
        assert_eq!(a.as_bytes(), b.as_bytes());
    }

    #[test]
    fn svg_endpoint_colors_appear_once_each() {
        let spec = HeatmapSpec::defaults(1);
        let m = HeatmapMatrix {
            rows: vec![vec![Some(0.0), Some(spec.clamp_max), Some(spec.clamp_max / 2.0)]],
            sensor_order: vec![0],
            bucket_len: 1,
        };
        let svg = render_heatmap(&m, &spec, &["a".into()]);
        let low = format!(
            "fill=\"rgb({},{},{})\"",
            spec.color_low.0, spec.color_low.1, spec.color_low.2
        );
        let high = format!(
            "fill=\"rgb({},{},{})\"",
            spec.color_high.0, spec.color_high.1, spec.color_high.2
        );
        assert_eq!(svg.matches(&low).count(), 1);
        assert_eq!(svg.matches(&high).count(), 1);
    }

    fn sample_verdicts() -> Vec<AnomalyVerdict> {
        vec![
            AnomalyVerdict::new(Level::L2, vec![0], 1, 4, 0.5, AnomalyKind::BoundViolation),
            AnomalyVerdict::new(
                Level::L4,
                vec![2],
                10,
                40,
                12.25,
                AnomalyKind::ContextualDeviation,
            ),
            AnomalyVerdict::new(Level::L3, vec![1], 7, 7, 9.0, AnomalyKind::Spike),
        ]
    }

    #[test]
    fn report_round_trip_preserves_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let verdicts = sample_verdicts();
        let graph = CausalGraph::empty(vec![0, 1, 2]);
        let files = write_report(
            &verdicts,
            &graph,
            &["a".into(), "b".into(), "c".into()],
            dir.path(),
        )
        .unwrap();
        let back = read_verdicts(&files.verdicts).unwrap();
        assert_eq!(verdicts, back);
    }

    #[test]
    fn empty_report_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let graph = CausalGraph::empty(vec![]);
        let files = write_report(&[], &graph, &[], dir.path()).unwrap();
        assert!(read_verdicts(&files.verdicts).unwrap().is_empty());
        let summary: ReportSummary =
            serde_json::from_str(&std::fs::read_to_string(&files.summary).unwrap()).unwrap();
        assert_eq!(summary.total, 0);
        assert!(summary.by_kind.is_empty());
    }

    #[test]
    fn summary_counts() {
        let s = summarize(&sample_verdicts());
        assert_eq!(s.total, 3);
        assert_eq!(s.by_level.get("L3"), Some(&1));
        assert_eq!(s.by_kind.get("bound_violation"), Some(&1));
        assert_eq!(s.by_label.get("unclassified"), Some(&3));
    }
}
