//! Level VI: temporal causal discovery by lagged-regression Granger testing
//! under the no-confounder assumption.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::data::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Directed lagged edge: `source` helps predict `target` `delay` samples
/// ahead; `strength` is the standardized coefficient at that lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEdge {
    pub source: usize,
    pub target: usize,
    pub delay: usize,
    pub strength: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<CausalEdge>,
}

impl CausalGraph {
    pub fn empty(nodes: Vec<usize>) -> Self {
        Self {
            nodes,
            edges: Vec::new(),
        }
    }

    pub fn has_edge(&self, source: usize, target: usize) -> bool {
        self.edges
            .iter()
            .any(|e| e.source == source && e.target == target)
    }

    pub fn find_edge(&self, source: usize, target: usize) -> Option<&CausalEdge> {
        self.edges
            .iter()
            .find(|e| e.source == source && e.target == target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Parents,
    Children,
}

/// Relative singular-value cutoff below which a regression is declared
/// ill-conditioned.
const RANK_TOL: f64 = 1e-10;

fn standardize_columns(frame: &TimeSeriesFrame) -> Result<Vec<Vec<f64>>> {
    let t = frame.len();
    let mut out = Vec::with_capacity(frame.sensor_count());
    for j in 0..frame.sensor_count() {
        let col: Vec<f64> = frame.values.column(j).to_vec();
        let mean = col.iter().sum::<f64>() / t as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t as f64;
        if var <= 0.0 {
            return Err(Error::DegenerateChannel {
                sensor: j,
                name: frame.sensors[j].name.clone(),
            });
        }
        let sd = var.sqrt();
        out.push(col.iter().map(|x| (x - mean) / sd).collect());
    }
    Ok(out)
}

/// Least squares via SVD; returns (coefficients, residual sum of squares).
fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let min_sv = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if max_sv <= 0.0 || min_sv < RANK_TOL * max_sv {
        return None;
    }
    let beta = svd.solve(y, RANK_TOL * max_sv).ok()?;
    let resid = y - x * &beta;
    let rss = resid.dot(&resid);
    Some((beta.column(0).into_owned(), rss))
}

struct PairTest {
    source: usize,
    target: usize,
    p_value: f64,
    /// Coefficients of the added source-lag block, index 0 = lag 1.
    block: Vec<f64>,
}

/// Granger-style discovery: for each ordered pair, F-test of adding lags
/// 1..max_lag of the source to an autoregression of the target, with
/// Benjamini-Hochberg control across all S*(S-1) tests.
pub fn discover(frame: &TimeSeriesFrame, max_lag: usize, alpha: f64) -> Result<CausalGraph> {
    let s = frame.sensor_count();
    let t = frame.len();
    if max_lag < 1 {
        return Err(Error::InvalidArgument("max_lag must be >= 1".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must be in (0, 1)".into()));
    }
    if frame.has_missing() {
        return Err(Error::InvalidArgument(
            "discovery requires a gap-free frame; trim or interpolate first".into(),
        ));
    }
    let nodes: Vec<usize> = (0..s).collect();
    if s < 2 {
        return Ok(CausalGraph::empty(nodes));
    }
    if t < 20 * max_lag * s {
        return Err(Error::EmptyInput(format!(
            "need T >= {} samples for S={s}, max_lag={max_lag}; got {t}",
            20 * max_lag * s
        )));
    }

    let cols = standardize_columns(frame)?;
    let n = t - max_lag;
    let p = max_lag;

    let mut tests: Vec<PairTest> = Vec::with_capacity(s * (s - 1));
    for target in 0..s {
        let y = DVector::from_iterator(n, (max_lag..t).map(|i| cols[target][i]));
        // Restricted design: intercept + own lags.
        let mut xr = DMatrix::zeros(n, 1 + p);
        for (row, i) in (max_lag..t).enumerate() {
            xr[(row, 0)] = 1.0;
            for lag in 1..=p {
                xr[(row, lag)] = cols[target][i - lag];
            }
        }
        let (_, rss_r) = ols(&xr, &y).ok_or(Error::Conditioning {
            from: target,
            to: target,
        })?;
        for source in 0..s {
            if source == target {
                continue;
            }
            let mut xf = DMatrix::zeros(n, 1 + 2 * p);
            for (row, i) in (max_lag..t).enumerate() {
                xf[(row, 0)] = 1.0;
                for lag in 1..=p {
                    xf[(row, lag)] = cols[target][i - lag];
                    xf[(row, p + lag)] = cols[source][i - lag];
                }
            }
            let (beta, rss_f) = ols(&xf, &y).ok_or(Error::Conditioning {
                from: source,
                to: target,
            })?;
            let df2 = n as f64 - (1 + 2 * p) as f64;
            if df2 <= 0.0 {
                return Err(Error::EmptyInput("too few samples for the full model".into()));
            }
            let f_stat = if rss_f > 0.0 {
                ((rss_r - rss_f) / p as f64) / (rss_f / df2)
            } else {
                f64::INFINITY
            };
            let p_value = if f_stat.is_infinite() {
                0.0
            } else if f_stat <= 0.0 {
                1.0
            } else {
                let dist = FisherSnedecor::new(p as f64, df2)
                    .map_err(|e| Error::InvalidArgument(format!("F distribution: {e}")))?;
                1.0 - dist.cdf(f_stat)
            };
            let block: Vec<f64> = (1..=p).map(|lag| beta[p + lag]).collect();
            tests.push(PairTest {
                source,
                target,
                p_value,
                block,
            });
        }
    }

    // Benjamini-Hochberg across all pair tests.
    let m = tests.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| tests[a].p_value.partial_cmp(&tests[b].p_value).unwrap());
    let mut cutoff = -1.0;
    for (rank, &idx) in order.iter().enumerate() {
        let threshold = (rank + 1) as f64 * alpha / m as f64;
        if tests[idx].p_value <= threshold {
            cutoff = tests[idx].p_value;
        }
    }

    let mut edges = Vec::new();
    for test in &tests {
        if cutoff >= 0.0 && test.p_value <= cutoff {
            // Largest-magnitude coefficient in the added block; ties break
            // toward the smallest lag.
            let mut best = 0usize;
            for k in 1..test.block.len() {
                if test.block[k].abs() > test.block[best].abs() {
                    best = k;
                }
            }
            edges.push(CausalEdge {
                source: test.source,
                target: test.target,
                delay: best + 1,
                strength: test.block[best],
                p_value: test.p_value,
            });
        }
    }
    edges.sort_by_key(|e| (e.source, e.target));
    Ok(CausalGraph { nodes, edges })
}

/// Per-node share of variance not explained by its own lags plus the lags of
/// its discovered parents.
fn unexplained_variance(
    frame: &TimeSeriesFrame,
    graph: &CausalGraph,
    max_lag: usize,
) -> Result<Vec<f64>> {
    let cols = standardize_columns(frame)?;
    let t = frame.len();
    let n = t - max_lag;
    let mut out = Vec::with_capacity(graph.nodes.len());
    for &node in &graph.nodes {
        let parents: Vec<usize> = graph
            .edges
            .iter()
            .filter(|e| e.target == node)
            .map(|e| e.source)
            .collect();
        let k = 1 + max_lag * (1 + parents.len());
        let mut x = DMatrix::zeros(n, k);
        let y = DVector::from_iterator(n, (max_lag..t).map(|i| cols[node][i]));
        for (row, i) in (max_lag..t).enumerate() {
            x[(row, 0)] = 1.0;
            let mut col = 1;
            for lag in 1..=max_lag {
                x[(row, col)] = cols[node][i - lag];
                col += 1;
            }
            for &parent in &parents {
                for lag in 1..=max_lag {
                    x[(row, col)] = cols[parent][i - lag];
                    col += 1;
                }
            }
        }
        let (_, rss) = ols(&x, &y).ok_or(Error::Conditioning {
            from: node,
            to: node,
        })?;
        let tss = y.dot(&y);
        out.push(if tss > 0.0 { rss / tss } else { 0.0 });
    }
    Ok(out)
}

/// Expert-comparison section of a dataset validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphComparison {
    /// Expected edges with no counterpart in the data (bias suspects).
    pub missing: Vec<CausalEdge>,
    /// Discovered edges absent from the expected graph (for expert review).
    pub unexpected: Vec<CausalEdge>,
    /// (expected, discovered) pairs that agree on the edge but not the delay.
    pub delay_disagreements: Vec<(CausalEdge, CausalEdge)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetValidationReport {
    pub graph: CausalGraph,
    /// Present only when an expert-supplied expected graph was given.
    pub comparison: Option<GraphComparison>,
    /// Nodes with no incoming and no outgoing edges.
    pub isolated_nodes: Vec<usize>,
    /// Per-node residual variance share under the discovered parent set.
    pub unexplained_variance: Vec<f64>,
}

/// Runs discovery and, when an expected graph is supplied, reports missing
/// edges, unexpected discoveries, and delay disagreements.
pub fn validate_dataset(
    frame: &TimeSeriesFrame,
    expected: Option<&CausalGraph>,
    max_lag: usize,
    alpha: f64,
) -> Result<DatasetValidationReport> {
    let graph = discover(frame, max_lag, alpha)?;
    let comparison = expected.map(|exp| {
        let mut missing = Vec::new();
        let mut delay_disagreements = Vec::new();
        for e in &exp.edges {
            match graph.find_edge(e.source, e.target) {
                None => missing.push(e.clone()),
                Some(found) if found.delay != e.delay => {
                    delay_disagreements.push((e.clone(), found.clone()));
                }
                Some(_) => {}
            }
        }
        let unexpected = graph
            .edges
            .iter()
            .filter(|e| !exp.has_edge(e.source, e.target))
            .cloned()
            .collect();
        GraphComparison {
            missing,
            unexpected,
            delay_disagreements,
        }
    });
    let isolated_nodes = graph
        .nodes
        .iter()
        .copied()
        .filter(|&n| {
            !graph
                .edges
                .iter()
                .any(|e| e.source == n || e.target == n)
        })
        .collect();
    let unexplained_variance = unexplained_variance(frame, &graph, max_lag)?;
    Ok(DatasetValidationReport {
        graph,
        comparison,
        isolated_nodes,
        unexplained_variance,
    })
}

/// Edges into or out of a sensor with delay <= max_delay, strongest first.
pub fn graph_neighbors(
    graph: &CausalGraph,
    sensor: usize,
    direction: Direction,
    max_delay: usize,
) -> Result<Vec<(usize, usize)>> {
    if !graph.nodes.contains(&sensor) {
        return Err(Error::Schema(format!("unknown sensor {sensor} in graph")));
    }
    let mut hits: Vec<(&CausalEdge, usize)> = graph
        .edges
        .iter()
        .filter_map(|e| match direction {
            Direction::Parents if e.target == sensor && e.delay <= max_delay => {
                Some((e, e.source))
            }
            Direction::Children if e.source == sensor && e.delay <= max_delay => {
                Some((e, e.target))
            }
            _ => None,
        })
        .collect();
    hits.sort_by(|a, b| {
        b.0.strength
            .abs()
            .partial_cmp(&a.0.strength.abs())
            .unwrap()
            .then(a.1.cmp(&b.1))
    });
    Ok(hits.into_iter().map(|(e, other)| (other, e.delay)).collect())
}

/// CSV export with header `source,target,delay,strength,p_value`. Floats use
/// the shortest round-trip representation, so parse-back is lossless.
pub fn graph_to_csv(graph: &CausalGraph) -> String {
    let mut out = String::from("source,target,delay,strength,p_value\n");
    for e in &graph.edges {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.source, e.target, e.delay, e.strength, e.p_value
        ));
    }
    out
}

pub fn graph_from_csv(text: &str, nodes: Vec<usize>) -> Result<CausalGraph> {
    let mut lines = text.lines();
    match lines.next() {
        Some("source,target,delay,strength,p_value") => {}
        other => {
            return Err(Error::Format(format!(
                "bad graph CSV header: {other:?}"
            )))
        }
    }
    let mut edges = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::Format(format!(
                "graph CSV line {}: expected 5 fields",
                lineno + 2
            )));
        }
        let parse = |v: &str, what: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Format(format!("graph CSV line {}: bad {what}", lineno + 2)))
        };
        edges.push(CausalEdge {
            source: parts[0]
                .parse()
                .map_err(|_| Error::Format("bad source".into()))?,
            target: parts[1]
                .parse()
                .map_err(|_| Error::Format("bad target".into()))?,
            delay: parts[2]
                .parse()
                .map_err(|_| Error::Format("bad delay".into()))?,
            strength: parse(parts[3], "strength")?,
            p_value: parse(parts[4], "p_value")?,
        });
    }
    Ok(CausalGraph { nodes, edges })
}

/// DOT export for expert visualization; edge labels carry delay and strength.
pub fn graph_to_dot(graph: &CausalGraph, names: &[String]) -> String {
    let mut out = String::from("digraph causal {\n  rankdir=LR;\n");
    for &n in &graph.nodes {
        let label = names.get(n).cloned().unwrap_or_else(|| format!("s{n}"));
        out.push_str(&format!("  n{n} [label=\"{label}\"];\n"));
    }
    for e in &graph.edges {
        out.push_str(&format!(
            "  n{} -> n{} [label=\"d={} b={:.3}\"];\n",
            e.source, e.target, e.delay, e.strength
        ));
    }
    out.push_str("}\n");
    out
}
