//! Retrieval metrics and the category-prediction experiment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::graph::FeatureSet;
use crate::transition::LabelSet;
use crate::{Error, Result};

/// NDCG depths reported per query.
pub const NDCG_DEPTHS: [usize; 4] = [5, 10, 20, 40];

/// `Σ_{k ≤ depth} Pr(k)·I(k) / |relevant|`, or `None` for an empty relevant set.
///
/// `depth` defaults to the full ranking.
pub fn average_precision(
    ranking: &[usize],
    relevant: &HashSet<usize>,
    depth: Option<usize>,
) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let depth = depth.unwrap_or(ranking.len()).min(ranking.len());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, id) in ranking[..depth].iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// Mean of the defined APs; undefined entries are skipped with a warning.
pub fn mean_average_precision<I>(aps: I) -> Result<f64>
where
    I: IntoIterator<Item = Option<f64>>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (q, ap) in aps.into_iter().enumerate() {
        match ap {
            Some(v) => {
                total += v;
                count += 1;
            }
            None => log::warn!("query #{q} has no relevant items; skipped"),
        }
    }
    if count == 0 {
        return Err(Error::Input(
            "no query had a defined average precision".into(),
        ));
    }
    Ok(total / count as f64)
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

/// Binary-relevance NDCG over the first `depth` positions, normalized by the
/// score of a fully relevant prefix of the same depth. Positions past the end
/// of `relevance` count as irrelevant.
pub fn ndcg_at_p(relevance: &[bool], depth: usize) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    let ideal: f64 = (1..=depth).map(discount).sum();
    let gain: f64 = relevance
        .iter()
        .take(depth)
        .enumerate()
        .filter(|(_, &rel)| rel)
        .map(|(k, _)| discount(k + 1))
        .sum();
    gain / ideal
}

pub fn relevance_flags(ranking: &[usize], relevant: &HashSet<usize>) -> Vec<bool> {
    ranking.iter().map(|id| relevant.contains(id)).collect()
}

/// Number of relevant items among the top `|relevant|` results.
pub fn ns_count(ranking: &[usize], relevant: &HashSet<usize>) -> usize {
    ranking
        .iter()
        .take(relevant.len())
        .filter(|id| relevant.contains(id))
        .count()
}

/// Mean over queries of [`ns_count`].
pub fn ns_score<'a, I>(queries: I) -> f64
where
    I: IntoIterator<Item = (&'a [usize], &'a HashSet<usize>)>,
{
    let (sum, n) = queries
        .into_iter()
        .fold((0usize, 0usize), |(s, n), (ranking, rel)| {
            (s + ns_count(ranking, rel), n + 1)
        });
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64
    }
}

/// Majority category among the labeled nodes of the top `top_n`; ties go to
/// whichever tied category appears first. `None` when nothing is labeled.
pub fn predict_category(ranking: &[usize], labels: &LabelSet, top_n: usize) -> Option<usize> {
    let mut counts: HashMap<usize, (usize, usize)> = HashMap::new();
    for (pos, &id) in ranking.iter().take(top_n).enumerate() {
        if let Some(c) = labels.category(id) {
            counts.entry(c).or_insert((0, pos)).0 += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(c, _)| c)
}

/// Euclidean distances from the query in the standardized, concatenated
/// feature space. Each dimension of each modality is scaled to zero mean and
/// unit variance; constant dimensions contribute nothing.
pub fn concat_distances(features: &[FeatureSet], query: usize) -> Result<Vec<f64>> {
    let Some(first) = features.first() else {
        return Err(Error::Input("no feature sets given".into()));
    };
    let m = first.items();
    if features.iter().any(|f| f.items() != m) {
        return Err(Error::Input("feature sets disagree on item count".into()));
    }
    if query >= m {
        return Err(Error::Input(format!(
            "query {query} out of range for {m} items"
        )));
    }
    let mut dist = vec![0.0; m];
    for f in features {
        for d in 0..f.dim() {
            let mean = f.rows().map(|r| r[d]).sum::<f64>() / m as f64;
            let var = f.rows().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / m as f64;
            if var == 0.0 {
                continue;
            }
            let sd = var.sqrt();
            let q = (f.row(query)[d] - mean) / sd;
            for (i, row) in f.rows().enumerate() {
                let z = (row[d] - mean) / sd;
                dist[i] += (z - q) * (z - q);
            }
        }
    }
    Ok(dist.into_iter().map(f64::sqrt).collect())
}

/// Items ordered by ascending concatenated-feature distance, query excluded,
/// ties to the lower id.
pub fn concat_baseline_rank(
    features: &[FeatureSet],
    query: usize,
    top_n: usize,
) -> Result<Vec<usize>> {
    let dist = concat_distances(features, query)?;
    let mut ids: Vec<usize> = (0..dist.len()).filter(|&i| i != query).collect();
    ids.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    ids.truncate(top_n);
    Ok(ids)
}

/// Relevance information for evaluation.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    /// Items sharing the query's category are relevant.
    Categories(LabelSet),
    /// Explicit relevant sets per query.
    Sets(BTreeMap<usize, HashSet<usize>>),
}

impl GroundTruth {
    /// Relevant items for `query`, never including the query itself.
    pub fn relevant(&self, query: usize) -> Option<HashSet<usize>> {
        match self {
            GroundTruth::Categories(labels) => {
                if query >= labels.nodes() {
                    return None;
                }
                let c = labels.category(query)?;
                Some(
                    labels
                        .iter_labeled()
                        .filter(|&(i, k)| k == c && i != query)
                        .map(|(i, _)| i)
                        .collect(),
                )
            }
            GroundTruth::Sets(sets) => sets.get(&query).map(|s| {
                let mut s = s.clone();
                s.remove(&query);
                s
            }),
        }
    }

    pub fn category_name(&self, query: usize) -> Option<&str> {
        match self {
            GroundTruth::Categories(labels) if query < labels.nodes() => {
                labels.category(query).map(|c| labels.category_name(c))
            }
            _ => None,
        }
    }
}

/// Metrics for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub query: usize,
    pub ap: Option<f64>,
    pub ndcg: [f64; 4],
    pub ns: f64,
    pub predicted: Option<String>,
    /// Ground-truth category of the query, when known.
    pub category: Option<String>,
}

pub fn evaluate_query(
    query: usize,
    ranking: &[usize],
    truth: &GroundTruth,
    known_labels: Option<&LabelSet>,
    predict_top_n: usize,
) -> QueryMetrics {
    let relevant = truth.relevant(query).unwrap_or_default();
    let flags = relevance_flags(ranking, &relevant);
    QueryMetrics {
        query,
        ap: average_precision(ranking, &relevant, None),
        ndcg: NDCG_DEPTHS.map(|p| ndcg_at_p(&flags, p)),
        ns: ns_count(ranking, &relevant) as f64,
        predicted: known_labels.and_then(|labels| {
            predict_category(ranking, labels, predict_top_n)
                .map(|c| labels.category_name(c).to_owned())
        }),
        category: truth.category_name(query).map(str::to_owned),
    }
}

/// Renders a value with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

fn metric_row(out: &mut String, id: &str, rows: &[&QueryMetrics], last: &str) {
    let ap = mean(rows.iter().filter_map(|r| r.ap));
    let _ = write!(out, "{id},{}", opt(ap));
    for k in 0..NDCG_DEPTHS.len() {
        let _ = write!(out, ",{}", opt(mean(rows.iter().map(|r| r.ndcg[k]))));
    }
    let _ = writeln!(out, ",{},{last}", opt(mean(rows.iter().map(|r| r.ns))));
}

/// Delimited report: header, one row per query, a `mean` footer (whose last
/// column is prediction accuracy when categories are known), then one
/// `category:<name>` row per ground-truth category.
pub fn render_report(rows: &[QueryMetrics]) -> String {
    let mut out =
        String::from("query_id,AP,NDCG@5,NDCG@10,NDCG@20,NDCG@40,NS,predicted_category\n");
    for r in rows {
        let _ = write!(out, "{},{}", r.query, opt(r.ap));
        for v in r.ndcg {
            let _ = write!(out, ",{}", sig6(v));
        }
        let _ = writeln!(
            out,
            ",{},{}",
            sig6(r.ns),
            r.predicted.as_deref().unwrap_or("")
        );
    }
    let all: Vec<&QueryMetrics> = rows.iter().collect();
    let judged: Vec<bool> = rows
        .iter()
        .filter(|r| r.category.is_some() && r.predicted.is_some())
        .map(|r| r.category == r.predicted)
        .collect();
    let accuracy = mean(judged.iter().map(|&ok| f64::from(u8::from(ok))));
    metric_row(&mut out, "mean", &all, &opt(accuracy));

    let mut by_category: BTreeMap<&str, Vec<&QueryMetrics>> = BTreeMap::new();
    for r in rows {
        if let Some(c) = r.category.as_deref() {
            by_category.entry(c).or_default().push(r);
        }
    }
    for (c, members) in by_category {
        metric_row(&mut out, &format!("category:{c}"), &members, "");
    }
    out
}
