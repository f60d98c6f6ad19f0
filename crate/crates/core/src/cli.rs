//! `multirank` command line: `build | query | eval | sweep | synth`.
//!
//! An optional `--config <file>` supplies `key = value` lines whose keys are
//! long flag names; flags given on the command line win. Repeatable flags take
//! comma-separated values in the config file.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::eval::{evaluate_query, render_report, sig6, GroundTruth, NDCG_DEPTHS};
use crate::graph::{build_knn_layer, FeatureSet, MultiLayerGraph, SigmaPolicy};
use crate::io;
use crate::pipeline::{mean_ndcg, AlphaPolicy, Engine};
use crate::synth::{generate_synthetic, SyntheticSpec};
use crate::transition::{LabelSet, TransitionConfig};
use crate::walk::WalkConfig;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "multirank",
    version,
    about = "Multi-layer graph random walk retrieval"
)]
pub struct Cli {
    /// Optional key = value file with defaults for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build kNN layers from feature files and write the graph.
    Build(BuildArgs),
    /// Rank the collection for each query.
    Query(QueryArgs),
    /// Score ranking files against ground truth.
    Eval(EvalArgs),
    /// Table of NDCG over a parameter grid.
    Sweep(SweepArgs),
    /// Write the synthetic multi-layer benchmark to disk.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LayerArgs {
    /// Feature file per layer, in layer order.
    #[arg(long = "features")]
    pub features: Vec<PathBuf>,
    /// Neighbors per node; one value for all layers or one per layer.
    #[arg(long = "k", value_delimiter = ',', default_value = "5")]
    pub k: Vec<usize>,
    /// Kernel width per layer, or `auto` for self-tuning.
    #[arg(long = "sigma", value_delimiter = ',', default_value = "auto")]
    pub sigma: Vec<String>,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
}

#[derive(Debug, Clone, Args)]
pub struct WalkArgs {
    #[arg(long, default_value_t = 0.9)]
    pub eta: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long = "max-iters", default_value_t = 1000)]
    pub max_iters: usize,
}

impl WalkArgs {
    fn config(&self) -> WalkConfig {
        WalkConfig {
            eta: self.eta,
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TransitionArgs {
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long = "sigmoid-a", default_value_t = 20.0)]
    pub sigmoid_a: f64,
    #[arg(long = "sigmoid-n-star", default_value_t = 0.5)]
    pub sigmoid_n_star: f64,
}

impl TransitionArgs {
    fn config(&self) -> TransitionConfig {
        TransitionConfig {
            beta: self.beta,
            sigmoid_a: self.sigmoid_a,
            sigmoid_n_star: self.sigmoid_n_star,
            query: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    NodeSpecific,
    Uniform,
    QueryOnly,
    ConcatBaseline,
}

impl From<PolicyArg> for AlphaPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::NodeSpecific => AlphaPolicy::NodeSpecific,
            PolicyArg::Uniform => AlphaPolicy::Uniform,
            PolicyArg::QueryOnly => AlphaPolicy::QueryOnly,
            PolicyArg::ConcatBaseline => AlphaPolicy::ConcatBaseline,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub layers: LayerArgs,
    /// Graph file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    /// Prebuilt graph; otherwise layers are built from `--features`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[command(flatten)]
    pub layers: LayerArgs,
    /// Known labels (`node_id,category`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated query ids, or `all`.
    #[arg(long, default_value = "all")]
    pub queries: String,
    #[arg(long = "alpha-policy", value_enum, default_value = "node-specific")]
    pub alpha_policy: PolicyArg,
    #[command(flatten)]
    pub transition: TransitionArgs,
    #[command(flatten)]
    pub walk: WalkArgs,
    #[arg(long = "top-n", default_value_t = 100)]
    pub top_n: usize,
    /// Directory receiving one `query_<id>.csv` per query.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of `query_<id>.csv` ranking files.
    #[arg(long)]
    pub rankings: PathBuf,
    /// Full category labels; items sharing the query's category are relevant.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Explicit `query_id,relevant_id` pairs.
    #[arg(long = "ground-truth")]
    pub ground_truth: Option<PathBuf>,
    /// Known labels used to predict each query's category from its top results.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Graph file, used to learn the node count.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Comma-separated query ids, or `all` for every ranking file.
    #[arg(long, default_value = "all")]
    pub queries: String,
    /// Depth of the category vote.
    #[arg(long = "top-n", default_value_t = 10)]
    pub top_n: usize,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Beta,
    Eta,
    LabelFraction,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub layers: LayerArgs,
    /// Full category labels used as ground truth.
    #[arg(long)]
    pub truth: PathBuf,
    /// Known labels; defaults to the truth file (ignored for label-fraction sweeps).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "beta")]
    pub param: SweepParam,
    /// Grid values; defaults depend on `--param`.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Comma-separated query ids, or `all`.
    #[arg(long, default_value = "all")]
    pub queries: String,
    #[arg(long = "alpha-policy", value_enum, default_value = "node-specific")]
    pub alpha_policy: PolicyArg,
    #[command(flatten)]
    pub transition: TransitionArgs,
    #[command(flatten)]
    pub walk: WalkArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Table file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long = "points-per-class", default_value_t = 200)]
    pub points_per_class: usize,
    #[arg(long = "layers", default_value_t = 3)]
    pub n_layers: usize,
    /// Layer in which each class is separated; defaults to `class mod layers`.
    #[arg(long, value_delimiter = ',')]
    pub separated: Vec<usize>,
    #[arg(long = "cluster-spread", default_value_t = 0.15)]
    pub cluster_spread: f64,
    #[arg(long = "mixing-spread", default_value_t = 0.5)]
    pub mixing_spread: f64,
    #[arg(long = "center-distance", default_value_t = 1.0)]
    pub center_distance: f64,
    #[arg(long = "labeled-fraction", default_value_t = 0.3)]
    pub labeled_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Problems that finish the run but make the exit status nonzero.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RunStatus {
    pub unconverged: usize,
    pub skipped: usize,
}

impl RunStatus {
    pub fn clean(&self) -> bool {
        self.unconverged == 0 && self.skipped == 0
    }
}

fn flag_name(arg: &str) -> Option<&str> {
    let name = arg.strip_prefix("--")?;
    Some(name.split_once('=').map_or(name, |(n, _)| n))
}

/// Appends flags from the `--config` file that are not already on the
/// command line.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut config = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            config = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_owned());
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let path = PathBuf::from(path);
    let present: HashSet<String> = args
        .iter()
        .filter_map(|a| flag_name(a).map(str::to_owned))
        .collect();
    let text = fs::read_to_string(&path)?;
    let mut extra = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: no + 1,
            msg: "expected key = value".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key == "config" || present.contains(key) {
            continue;
        }
        if key == "features" {
            for v in value.split(',') {
                extra.push(format!("--{key}"));
                extra.push(v.trim().to_owned());
            }
        } else {
            extra.push(format!("--{key}"));
            extra.push(value.to_owned());
        }
    }
    let mut out = args;
    out.extend(extra);
    Ok(out)
}

/// Parses (with config expansion) and runs.
pub fn run_from_args<I, S>(args: I) -> Result<RunStatus>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args = expand_config(args.into_iter().map(Into::into).collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(RunStatus::default());
        }
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    run(&cli.command)
}

pub fn run(command: &Command) -> Result<RunStatus> {
    match command {
        Command::Build(a) => cmd_build(a),
        Command::Query(a) => cmd_query(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn per_layer<T: Clone>(values: &[T], layers: usize, what: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); layers]),
        n if n == layers => Ok(values.to_vec()),
        n => Err(Error::Config(format!(
            "{n} {what} values given for {layers} layers"
        ))),
    }
}

fn parse_sigma(s: &str) -> Result<SigmaPolicy> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(SigmaPolicy::SelfTuning);
    }
    s.parse()
        .map(SigmaPolicy::Explicit)
        .map_err(|_| Error::Config(format!("sigma must be a number or `auto`, got {s:?}")))
}

pub fn load_feature_sets(args: &LayerArgs) -> Result<Vec<FeatureSet>> {
    if args.features.is_empty() {
        return Err(Error::Config(
            "at least one --features file is required".into(),
        ));
    }
    let sets = args
        .features
        .iter()
        .map(|p| io::load_features(p, args.delimiter))
        .collect::<Result<Vec<_>>>()?;
    let m = sets[0].items();
    if let Some((p, f)) = args
        .features
        .iter()
        .zip(&sets)
        .find(|(_, f)| f.items() != m)
    {
        return Err(Error::Input(format!(
            "{} has {} rows but {} has {m}",
            p.display(),
            f.items(),
            args.features[0].display()
        )));
    }
    Ok(sets)
}

pub fn build_graph(args: &LayerArgs, sets: &[FeatureSet]) -> Result<MultiLayerGraph> {
    let ks = per_layer(&args.k, sets.len(), "--k")?;
    let sigmas = per_layer(&args.sigma, sets.len(), "--sigma")?
        .iter()
        .map(|s| parse_sigma(s))
        .collect::<Result<Vec<_>>>()?;
    let layers = sets
        .iter()
        .zip(ks.iter().zip(&sigmas))
        .map(|(f, (&k, &s))| build_knn_layer(f, k, s))
        .collect::<Result<Vec<_>>>()?;
    MultiLayerGraph::new(layers)
}

pub fn cmd_build(args: &BuildArgs) -> Result<RunStatus> {
    let sets = load_feature_sets(&args.layers)?;
    let graph = build_graph(&args.layers, &sets)?;
    for (l, layer) in graph.layers().iter().enumerate() {
        eprintln!(
            "layer={l} edges={} mean_weight={}",
            layer.edge_count(),
            sig6(graph.mean_weights()[l])
        );
    }
    io::save_graph(&args.out, &graph)?;
    Ok(RunStatus::default())
}

/// `all` or a comma-separated id list.
pub fn parse_queries(spec: &str, nodes: usize) -> Result<Vec<usize>> {
    if spec.trim() == "all" {
        return Ok((0..nodes).collect());
    }
    spec.split(',')
        .map(|s| {
            let q: usize = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad query id {:?}", s.trim())))?;
            if q >= nodes {
                return Err(Error::Input(format!(
                    "unknown query id {q} ({nodes} nodes)"
                )));
            }
            Ok(q)
        })
        .collect()
}

pub fn ranking_path(dir: &Path, query: usize) -> PathBuf {
    dir.join(format!("query_{query}.csv"))
}

pub fn cmd_query(args: &QueryArgs) -> Result<RunStatus> {
    let policy = AlphaPolicy::from(args.alpha_policy);
    let sets = if args.layers.features.is_empty() {
        None
    } else {
        Some(load_feature_sets(&args.layers)?)
    };
    let graph = match (&args.graph, &sets) {
        (Some(path), _) => io::load_graph(path)?,
        (None, Some(sets)) => build_graph(&args.layers, sets)?,
        (None, None) => return Err(Error::Config("give --graph or --features".into())),
    };
    let labels = args
        .labels
        .as_ref()
        .map(|p| io::load_labels(p, graph.nodes()))
        .transpose()?;
    let queries = parse_queries(&args.queries, graph.nodes())?;
    let engine = Engine::new(
        &graph,
        policy,
        labels.as_ref(),
        &args.transition.config(),
        args.walk.config(),
        sets.as_deref(),
    )?;
    let results = engine.run_all(&queries, args.top_n)?;
    fs::create_dir_all(&args.out)?;
    let mut status = RunStatus::default();
    for r in &results {
        let mut w = BufWriter::new(fs::File::create(ranking_path(&args.out, r.query))?);
        io::write_ranking(&mut w, &r.ranked)?;
        w.flush()?;
        if let Some(o) = &r.outcome {
            eprintln!("{}", o.diagnostics(r.query));
            if !o.converged {
                status.unconverged += 1;
            }
        }
    }
    Ok(status)
}

fn ranking_files(dir: &Path) -> Result<BTreeMap<usize, PathBuf>> {
    let mut found = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let id = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("query_")?.strip_suffix(".csv")?.parse().ok());
        if let Some(id) = id {
            found.insert(id, path);
        }
    }
    Ok(found)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<RunStatus> {
    let nodes = match (args.nodes, &args.graph) {
        (Some(n), _) => n,
        (None, Some(g)) => io::load_graph(g)?.nodes(),
        (None, None) => return Err(Error::Config("give --nodes or --graph".into())),
    };
    let truth = match (&args.truth, &args.ground_truth) {
        (Some(t), _) => GroundTruth::Categories(io::load_labels(t, nodes)?),
        (None, Some(g)) => GroundTruth::Sets(io::load_relevance(g)?),
        (None, None) => {
            return Err(Error::Config(
                "evaluation needs --truth or --ground-truth".into(),
            ))
        }
    };
    let known = args
        .labels
        .as_ref()
        .map(|p| io::load_labels(p, nodes))
        .transpose()?;
    let files = ranking_files(&args.rankings)?;
    let queries: Vec<usize> = if args.queries.trim() == "all" {
        files.keys().copied().collect()
    } else {
        parse_queries(&args.queries, nodes)?
    };
    let mut status = RunStatus::default();
    let mut rows = Vec::new();
    for q in queries {
        let path = files
            .get(&q)
            .ok_or_else(|| Error::Input(format!("no ranking file for query {q}")))?;
        if truth.relevant(q).is_none_or(|s| s.is_empty()) {
            log::warn!("query {q} has no relevant items; skipped");
            status.skipped += 1;
            continue;
        }
        let ranking = io::load_ranking(path)?;
        rows.push(evaluate_query(
            q,
            &ranking,
            &truth,
            known.as_ref(),
            args.top_n,
        ));
    }
    if rows.is_empty() {
        return Err(Error::Input("no query could be evaluated".into()));
    }
    write_text(args.out.as_deref(), &render_report(&rows))?;
    Ok(status)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Labels of a seeded random `fraction` of the labeled nodes in `truth`.
pub fn subsample_labels(truth: &LabelSet, fraction: f64, seed: u64) -> LabelSet {
    let mut ids: Vec<usize> = truth.iter_labeled().map(|(i, _)| i).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let keep_n = (fraction * truth.nodes() as f64).round() as usize;
    let mut keep = vec![false; truth.nodes()];
    for &i in ids.iter().take(keep_n) {
        keep[i] = true;
    }
    truth.restrict(&keep)
}

fn default_grid(param: SweepParam) -> Vec<f64> {
    match param {
        SweepParam::Beta => vec![0.5, 1.5, 2.5, 3.5],
        SweepParam::Eta => vec![0.5, 0.8, 0.9],
        SweepParam::LabelFraction => vec![0.12, 0.33],
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub ndcg: [f64; 4],
}

pub fn render_sweep(param: SweepParam, rows: &[SweepRow]) -> String {
    let name = match param {
        SweepParam::Beta => "beta",
        SweepParam::Eta => "eta",
        SweepParam::LabelFraction => "label_fraction",
    };
    let mut out = String::from(name);
    for p in NDCG_DEPTHS {
        out.push_str(&format!(",NDCG@{p}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}", r.value));
        for v in r.ndcg {
            out.push_str(&format!(",{}", sig6(v)));
        }
        out.push('\n');
    }
    out
}

pub fn sweep(args: &SweepArgs) -> Result<(Vec<SweepRow>, RunStatus)> {
    let sets = load_feature_sets(&args.layers)?;
    let graph = build_graph(&args.layers, &sets)?;
    let truth_labels = io::load_labels(&args.truth, graph.nodes())?;
    let known = match &args.labels {
        Some(p) => io::load_labels(p, graph.nodes())?,
        None => truth_labels.clone(),
    };
    let queries = parse_queries(&args.queries, graph.nodes())?;
    let grid = if args.values.is_empty() {
        default_grid(args.param)
    } else {
        args.values.clone()
    };
    let truth = GroundTruth::Categories(truth_labels.clone());
    let policy = AlphaPolicy::from(args.alpha_policy);

    let points = grid
        .par_iter()
        .map(|&value| -> Result<(SweepRow, usize)> {
            let mut transition = args.transition.config();
            let mut walk = args.walk.config();
            let labels = match args.param {
                SweepParam::Beta => {
                    transition.beta = value;
                    known.clone()
                }
                SweepParam::Eta => {
                    walk.eta = value;
                    known.clone()
                }
                SweepParam::LabelFraction => subsample_labels(&truth_labels, value, args.seed),
            };
            let engine = Engine::new(
                &graph,
                policy,
                Some(&labels),
                &transition,
                walk,
                Some(&sets),
            )?;
            let results = engine.run_all(&queries, *NDCG_DEPTHS.iter().max().unwrap())?;
            let unconverged = results.iter().filter(|r| !r.converged()).count();
            Ok((
                SweepRow {
                    value,
                    ndcg: mean_ndcg(&results, &truth),
                },
                unconverged,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let status = RunStatus {
        unconverged: points.iter().map(|p| p.1).sum(),
        skipped: 0,
    };
    Ok((points.into_iter().map(|p| p.0).collect(), status))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<RunStatus> {
    let (rows, status) = sweep(args)?;
    write_text(args.out.as_deref(), &render_sweep(args.param, &rows))?;
    Ok(status)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<RunStatus> {
    let separated = if args.separated.is_empty() {
        (0..args.classes)
            .map(|c| c % args.n_layers.max(1))
            .collect()
    } else {
        args.separated.clone()
    };
    let spec = SyntheticSpec {
        n_classes: args.classes,
        points_per_class: args.points_per_class,
        n_layers: args.n_layers,
        separated_layer_of_class: separated,
        cluster_spread: args.cluster_spread,
        mixing_spread: args.mixing_spread,
        center_distance: args.center_distance,
        labeled_fraction: args.labeled_fraction,
        rng_seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    fs::create_dir_all(&args.out)?;
    for (l, f) in data.features.iter().enumerate() {
        io::save_features(args.out.join(format!("layer_{l}.csv")), f, ',')?;
    }
    io::save_labels(args.out.join("labels.csv"), &data.labels)?;
    io::save_labels(args.out.join("labeled.csv"), &data.known_labels())?;
    Ok(RunStatus::default())
}
