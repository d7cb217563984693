//! Post-hoc analysis of user embeddings: DBSCAN density clustering,
//! cosine-similarity neighbor queries, and TSV export for external 2-D
//! projection.
//!
//! DBSCAN uses the Euclidean metric with a closed ball (distance <= eps), so
//! eps = 0 groups exactly the bit-identical embeddings. Clusters are seeded
//! in ascending user-id order, which makes the labeling deterministic and
//! independent of input order.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::ingestion::Label;
use crate::numerics::Vector;

/// A user's fused embedding with its ground-truth label.
#[derive(Clone, Debug, PartialEq)]
pub struct UserEmbedding {
    pub user_id: String,
    pub label: Label,
    pub vector: Vector,
}

/// Label composition of one cluster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterSummary {
    pub id: usize,
    pub size: usize,
    pub vandals: usize,
    pub benign: usize,
}

#[derive(Clone, Debug)]
pub struct ClusteringResult {
    pub eps: f64,
    pub min_pts: usize,
    /// Cluster id per input point, parallel to the input; `None` is noise.
    pub assignments: Vec<Option<usize>>,
    pub clusters: Vec<ClusterSummary>,
}

impl ClusteringResult {
    pub fn noise_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_none()).count()
    }
}

fn squared_distance(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Classic DBSCAN over user embeddings.
///
/// A point is core when its closed eps-ball (including itself) holds at
/// least `min_pts` points; clusters are the maximal density-reachable sets,
/// and non-core points fall to the earliest-seeded cluster that reaches
/// them, or to noise.
pub fn dbscan(points: &[UserEmbedding], eps: f64, min_pts: usize) -> Result<ClusteringResult> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::Config(format!("eps must be >= 0, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::Config("min_pts must be at least 1".into()));
    }
    let n = points.len();
    if let Some(first) = points.first() {
        let dim = first.vector.len();
        if points.iter().any(|p| p.vector.len() != dim) {
            return Err(Error::Dimension("embeddings differ in dimension".into()));
        }
    }
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| squared_distance(&points[i].vector, &points[j].vector) <= eps2).collect()
    };

    let mut seed_order: Vec<usize> = (0..n).collect();
    seed_order.sort_by(|&a, &b| points[a].user_id.cmp(&points[b].user_id));

    let mut assignments: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0usize;
    for &seed in &seed_order {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let seed_neighbors = neighbors(seed);
        if seed_neighbors.len() < min_pts {
            continue; // may still become a border point of a later cluster
        }
        let cluster = next_cluster;
        next_cluster += 1;
        assignments[seed] = Some(cluster);
        let mut queue: VecDeque<usize> = seed_neighbors.into();
        while let Some(point) = queue.pop_front() {
            match assignments[point] {
                None => assignments[point] = Some(cluster),
                Some(c) if c != cluster => continue, // border already claimed
                _ => {}
            }
            if visited[point] {
                continue;
            }
            visited[point] = true;
            let reach = neighbors(point);
            if reach.len() >= min_pts {
                queue.extend(reach);
            }
        }
    }

    let mut clusters: Vec<ClusterSummary> = (0..next_cluster)
        .map(|id| ClusterSummary { id, size: 0, vandals: 0, benign: 0 })
        .collect();
    for (point, assignment) in points.iter().zip(&assignments) {
        if let Some(id) = assignment {
            let summary = &mut clusters[*id];
            summary.size += 1;
            match point.label {
                Label::Vandal => summary.vandals += 1,
                Label::Benign => summary.benign += 1,
            }
        }
    }
    Ok(ClusteringResult { eps, min_pts, assignments, clusters })
}

fn cosine_similarity(a: &Vector, b: &Vector) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0; // zero vectors have no direction
    }
    a.dot(b) / (na * nb)
}

/// The `k` most cosine-similar users to the query, best first; ties break by
/// ascending user id and the query itself is excluded.
pub fn cosine_neighbors(
    points: &[UserEmbedding],
    query_id: &str,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let query_index = points
        .iter()
        .position(|p| p.user_id == query_id)
        .ok_or_else(|| Error::UnknownUser(query_id.to_string()))?;
    let query = &points[query_index].vector;
    let mut ranked: Vec<(String, f64)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != query_index)
        .map(|(_, p)| (p.user_id.clone(), cosine_similarity(query, &p.vector)))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).expect("similarities are finite").then_with(|| a.0.cmp(&b.0))
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// Write embeddings as TSV: a header line, then per user the id, the label,
/// and the vector entries at 17 significant digits (enough for an exact f64
/// round trip). Returns the number of data rows.
pub fn export_embeddings(points: &[UserEmbedding], mut w: impl Write) -> Result<usize> {
    let dim = points.first().map_or(0, |p| p.vector.len());
    let mut header = String::from("user_id\tlabel");
    for j in 0..dim {
        header.push_str(&format!("\tv{j}"));
    }
    writeln!(w, "{header}")?;
    for p in points {
        let mut row = format!("{}\t{}", p.user_id, p.label);
        for v in p.vector.iter() {
            row.push_str(&format!("\t{v:.16e}"));
        }
        writeln!(w, "{row}")?;
    }
    Ok(points.len())
}

/// Read embeddings written by [`export_embeddings`].
pub fn read_embeddings(source: impl BufRead) -> Result<Vec<UserEmbedding>> {
    let mut lines = source.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })?;
    header?;
    let mut points: Vec<UserEmbedding> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let user_id = fields
            .next()
            .filter(|f| !f.is_empty())
            .ok_or_else(|| Error::Parse { line: line_no, msg: "missing user_id".into() })?;
        let label: Label = fields
            .next()
            .ok_or_else(|| Error::Parse { line: line_no, msg: "missing label".into() })?
            .parse()
            .map_err(|e: Error| Error::Parse { line: line_no, msg: e.to_string() })?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad value {f:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: line_no, msg: "non-finite embedding value".into() });
        }
        if let Some(first) = points.first() {
            if values.len() != first.vector.len() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "row has {} values, previous rows have {}",
                        values.len(),
                        first.vector.len()
                    ),
                });
            }
        }
        points.push(UserEmbedding {
            user_id: user_id.to_string(),
            label,
            vector: Vector::from_vec(values),
        });
    }
    Ok(points)
}

/// Cluster report TSV: user_id, cluster id (-1 for noise), label.
pub fn write_cluster_tsv(
    points: &[UserEmbedding],
    result: &ClusteringResult,
    mut w: impl Write,
) -> Result<()> {
    writeln!(w, "user_id\tcluster_id\tlabel")?;
    for (p, assignment) in points.iter().zip(&result.assignments) {
        let id = assignment.map_or(-1i64, |c| c as i64);
        writeln!(w, "{}\t{}\t{}", p.user_id, id, p.label)?;
    }
    Ok(())
}
