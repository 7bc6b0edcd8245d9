//! `structsample`: build, query and evaluate structure-aware sample summaries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use structsample::data::{self, AxisKind, DatasetDescriptor, FileSource};
use structsample::experiment::{
    self, build_from_source, build_summary, header_for, BuildConfig, Method, PreparedQueries, StructureKind,
};
use structsample::hierarchy::Tree;
use structsample::product::{Axis, ProductDomain};
use structsample::queries::{self, QueryKind, QuerySpec};
use structsample::query::RangeQuery;
use structsample::summary_file::{self, SummaryFile};
use structsample::twopass::{GuideSampler, HierarchyStrategy};
use structsample::{seeded_rng, Error, WeightedKey};

#[derive(Parser, Debug)]
#[command(name = "structsample", version, about = "Structure-aware VarOpt sample summaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a summary file from a dataset.
    Build(BuildArgs),
    /// Answer queries from a summary file.
    Query(QueryArgs),
    /// Build, answer a query battery and write metrics.
    Eval(EvalArgs),
    /// Write a synthetic dataset.
    GenData(GenDataArgs),
    /// Write a query battery for a dataset.
    GenQueries(GenQueriesArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Delimited records: coordinates then weight.
    #[arg(long)]
    data: PathBuf,
    /// Axis kinds: `ordered`, `ip` or `hierarchy:PATH`, comma separated.
    #[arg(long, value_delimiter = ',')]
    axes: Option<Vec<String>>,
    /// Number of ordered axes when `--axes` is absent.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// Column holding the weight; defaults to the one after the coordinates.
    #[arg(long)]
    weight_column: Option<usize>,
    /// Keep duplicate coordinates as separate keys.
    #[arg(long)]
    keep_duplicates: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Aware,
    Obliv,
    Poisson,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StructureArg {
    Auto,
    Order,
    Disjoint,
    Hierarchy,
    Product,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StrategyArg {
    Linearize,
    Ancestor,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum GuideArg {
    Varopt,
    Poisson,
}

#[derive(Args, Debug, Clone)]
struct SampleArgs {
    /// Summary size.
    #[arg(short = 's', long = "size")]
    size: usize,
    /// Guide sample size as a multiple of the summary size.
    #[arg(long, default_value_t = 5)]
    guide_factor: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Aware)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = StructureArg::Auto)]
    structure: StructureArg,
    /// Hierarchy partition for two-pass builds.
    #[arg(long, value_enum, default_value_t = StrategyArg::Linearize)]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value_t = GuideArg::Varopt)]
    guide: GuideArg,
    /// Build in memory instead of with two passes.
    #[arg(long)]
    in_memory: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sample: SampleArgs,
    /// Summary file to write.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    summary: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Axis kinds, as for `build`; defaults to ordered axes.
    #[arg(long, value_delimiter = ',')]
    axes: Option<Vec<String>>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sample: SampleArgs,
    #[arg(long)]
    queries: PathBuf,
    /// Directory for summary, metrics, aggregate and timing files.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DataKind {
    Grid,
    Zipf,
    Clustered,
    Hierarchy,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: DataKind,
    /// Number of keys (leaves for `hierarchy`).
    #[arg(long, short, default_value_t = 10_000)]
    n: usize,
    /// Grid side per axis.
    #[arg(long, default_value_t = 1024)]
    side: u64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Zipf exponent for `zipf`.
    #[arg(long, default_value_t = 1.2)]
    exponent: f64,
    #[arg(long, default_value_t = 8)]
    clusters: usize,
    #[arg(long, default_value_t = 20.0)]
    sigma: f64,
    #[arg(long, default_value_t = 6)]
    fanout: usize,
    /// Hierarchy file written alongside `hierarchy` data.
    #[arg(long)]
    hierarchy_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum QueryKindArg {
    UniformArea,
    UniformWeight,
}

#[derive(Args, Debug)]
struct GenQueriesArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = QueryKindArg::UniformArea)]
    kind: QueryKindArg,
    /// Ranges per query.
    #[arg(long, short = 'l', default_value_t = 1)]
    ranges: usize,
    #[arg(long, default_value_t = 50)]
    battery: usize,
    /// Smallest side as a fraction of the data extent.
    #[arg(long, default_value_t = 0.0)]
    min_side: f64,
    /// Largest side as a fraction of the data extent.
    #[arg(long, default_value_t = 0.25)]
    max_side: f64,
    /// kd level for `uniform-weight`; cells hold about 2^-level of the weight.
    #[arg(long, default_value_t = 4)]
    level: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

fn parse_axes(axes: &Option<Vec<String>>, dim: usize) -> Result<Vec<AxisKind>, Error> {
    let Some(list) = axes else {
        return Ok(vec![AxisKind::Ordered; dim]);
    };
    list.iter()
        .map(|a| match a.as_str() {
            "ordered" => Ok(AxisKind::Ordered),
            "ip" => Ok(AxisKind::IpPrefix),
            other => other
                .strip_prefix("hierarchy:")
                .map(|p| AxisKind::Hierarchy(PathBuf::from(p)))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown axis kind {other:?}"))),
        })
        .collect()
}

fn descriptor(a: &DataArgs) -> Result<DatasetDescriptor, Error> {
    let delimiter = match a.delimiter.as_str() {
        "\\t" | "tab" => b'\t',
        d if d.len() == 1 => d.as_bytes()[0],
        d => return Err(Error::InvalidArgument(format!("delimiter must be one byte, got {d:?}"))),
    };
    let axes = parse_axes(&a.axes, a.dim)?;
    require(&a.data)?;
    Ok(DatasetDescriptor {
        path: a.data.clone(),
        axes,
        delimiter,
        weight_column: a.weight_column,
        sum_duplicates: !a.keep_duplicates,
    })
}

fn axis_labels(desc: &DatasetDescriptor) -> Vec<String> {
    desc.axes
        .iter()
        .map(|a| match a {
            AxisKind::Ordered => "ordered".to_string(),
            AxisKind::IpPrefix => "ip".to_string(),
            AxisKind::Hierarchy(p) => format!("hierarchy:{}", p.display()),
        })
        .collect()
}

fn config(a: &SampleArgs) -> BuildConfig {
    BuildConfig {
        s: a.size,
        guide_factor: a.guide_factor,
        method: match a.method {
            MethodArg::Aware => Method::Aware,
            MethodArg::Obliv => Method::Obliv,
            MethodArg::Poisson => Method::Poisson,
        },
        structure: match a.structure {
            StructureArg::Auto => StructureKind::Auto,
            StructureArg::Order => StructureKind::Order,
            StructureArg::Disjoint => StructureKind::Disjoint,
            StructureArg::Hierarchy => StructureKind::Hierarchy,
            StructureArg::Product => StructureKind::Product,
        },
        strategy: match a.strategy {
            StrategyArg::Linearize => HierarchyStrategy::Linearize,
            StrategyArg::Ancestor => HierarchyStrategy::LowestSelectedAncestor,
        },
        sampler: match a.guide {
            GuideArg::Varopt => GuideSampler::VarOpt,
            GuideArg::Poisson => GuideSampler::Poisson,
        },
        in_memory: a.in_memory,
        seed: a.seed,
    }
}

fn require(path: &Path) -> Result<(), Error> {
    if path.exists() {
        Ok(())
    } else {
        Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{}: no such file", path.display())).into())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_query_file(path: &Path, dim: usize) -> Result<Vec<RangeQuery>, Error> {
    require(path)?;
    queries::read_queries(BufReader::new(File::open(path)?), dim)
}

fn build(a: BuildArgs) -> Result<(), Error> {
    let desc = descriptor(&a.data)?;
    let cfg = config(&a.sample);
    // Streaming reads the file once per pass without holding it. It sees one
    // key per line, so it only applies when duplicates are kept; IP axes need
    // the key set up front to build the prefix tree.
    let streaming = cfg.method == Method::Aware && !cfg.in_memory && a.data.keep_duplicates;
    let needs_keys = desc.axes.contains(&AxisKind::IpPrefix);
    let sample = if streaming && !needs_keys {
        let domain = desc.domain(&[])?;
        build_from_source(&mut FileSource::new(desc.clone()), &domain, &cfg)?
    } else {
        let keys = data::ingest(&desc)?;
        build_summary(&keys, &desc.domain(&keys)?, &cfg)?
    };
    let header = structsample::summary_file::SummaryHeader {
        axes: axis_labels(&desc),
        seed: cfg.seed,
        method: cfg.method.name().into(),
    };
    summary_file::save_summary(&a.out, &SummaryFile { header, sample })
}

fn query(a: QueryArgs) -> Result<(), Error> {
    require(&a.summary)?;
    let summary = summary_file::read_summary(&a.summary)?;
    let dim = summary.header.axes.len();
    let kinds = match &a.axes {
        Some(_) => parse_axes(&a.axes, dim)?,
        None => parse_axes(&Some(summary.header.axes.clone()), dim)?,
    };
    let sampled: Vec<WeightedKey> = summary
        .sample
        .members
        .iter()
        .map(|k| WeightedKey::new(k.id, k.coords.clone(), k.weight))
        .collect();
    let domain = ProductDomain::new(
        kinds
            .iter()
            .enumerate()
            .map(|(i, k)| -> Result<Axis, Error> {
                Ok(match k {
                    AxisKind::Ordered => Axis::Ordered,
                    AxisKind::Hierarchy(p) => Axis::Hierarchy(Arc::new(data::read_hierarchy(p)?)),
                    // Prefixes absent from the summary hold no sampled key.
                    AxisKind::IpPrefix => Axis::Hierarchy(Arc::new(data::ip_prefix_hierarchy(
                        sampled.iter().map(|k| k.coords[i]),
                    )?)),
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
    )?;
    let qs = read_query_file(&a.queries, dim)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "query,ranges,estimate")?;
    for (i, q) in qs.iter().enumerate() {
        q.check_disjoint(&domain)?;
        let est = structsample::query::estimate_range(&summary.sample, q, &domain)?;
        writeln!(out, "{i},{},{est}", q.len())?;
    }
    out.flush()?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Error> {
    let desc = descriptor(&a.data)?;
    let cfg = config(&a.sample);
    let keys = data::ingest(&desc)?;
    let domain = desc.domain(&keys)?;
    let qs = read_query_file(&a.queries, desc.dim())?;
    let prepared = PreparedQueries::new(qs, &keys, &domain, a.threads)?;
    let result = experiment::run_experiment(&keys, &domain, &cfg, &prepared, a.threads)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let name = cfg.method.name();
    let summary = SummaryFile {
        header: structsample::summary_file::SummaryHeader {
            axes: axis_labels(&desc),
            ..header_for(&domain, &cfg)
        },
        sample: result.summary.sample,
    };
    summary_file::save_summary(&a.out_dir.join(format!("{name}.summary")), &summary)?;
    let mut w = create(&a.out_dir.join(format!("{name}.metrics.csv")))?;
    experiment::write_metrics(&mut w, &result.metrics)?;
    w.flush()?;
    let mut w = create(&a.out_dir.join(format!("{name}.aggregate.txt")))?;
    experiment::write_aggregate(&mut w, cfg.method, cfg.s, &result.aggregate)?;
    w.flush()?;
    let mut w = create(&a.out_dir.join(format!("{name}.timing.txt")))?;
    result.timing.write(&mut w)?;
    w.flush()?;
    let a = &result.aggregate;
    println!(
        "{name}: {} queries, mean abs error {:.6e}, mean rel error {:.6e}, max discrepancy {:.3}",
        a.queries, a.mean_abs_error, a.mean_rel_error, a.max_discrepancy
    );
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<(), Error> {
    let mut rng = seeded_rng(a.seed);
    let keys = match a.kind {
        DataKind::Grid => data::uniform_grid(a.side, a.dim, &mut rng),
        DataKind::Zipf => data::zipf_2d(a.n, a.side, a.exponent, &mut rng)?,
        DataKind::Clustered => data::clustered_gaussian(a.n, a.clusters, a.dim, a.side, a.sigma, &mut rng)?,
        DataKind::Hierarchy => {
            let tree: Tree = data::random_hierarchy(a.n, a.fanout, &mut rng)?;
            let path = a
                .hierarchy_out
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--hierarchy-out is required for hierarchy data".into()))?;
            let mut w = create(path)?;
            data::write_hierarchy(&mut w, &tree)?;
            w.flush()?;
            data::keys_on_leaves(&tree, &mut rng)
        }
    };
    let mut w = create(&a.out)?;
    data::write_keys(&mut w, &keys)?;
    w.flush()?;
    Ok(())
}

fn gen_queries(a: GenQueriesArgs) -> Result<(), Error> {
    let desc = descriptor(&a.data)?;
    let keys = data::ingest(&desc)?;
    let domain = desc.domain(&keys)?;
    let spec = QuerySpec {
        kind: match a.kind {
            QueryKindArg::UniformArea => QueryKind::UniformArea {
                min_side: a.min_side,
                max_side: a.max_side,
            },
            QueryKindArg::UniformWeight => QueryKind::UniformWeight { level: a.level },
        },
        ranges_per_query: a.ranges,
        battery: a.battery,
        seed: a.seed,
    };
    let qs = queries::generate_queries(&spec, &keys, &domain)?;
    let mut w = create(&a.out)?;
    queries::write_queries(&mut w, &qs)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Eval(a) => eval(a),
        Command::GenData(a) => gen_data(a),
        Command::GenQueries(a) => gen_queries(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
