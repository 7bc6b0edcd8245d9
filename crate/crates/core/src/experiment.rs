//! Evaluation harness: build a summary by one of three methods, answer a
//! query battery, and report error metrics.

use std::collections::HashSet;
use std::io::Write;
use std::time::{Duration, Instant};

use crate::hierarchy::Tree;
use crate::ipps::{compute_threshold, ipps_probabilities, Threshold, WeightedKey};
use crate::product::{summarize_product, Axis, ProductDomain};
use crate::query::{discrepancy, multi_range_mu, oblivious_varopt, poisson_sample, DiscrepancyReport, RangeEntry, RangeQuery};
use crate::sample::Sample;
use crate::structures::{summarize_disjoint, summarize_hierarchy, summarize_order, DisjointRangeDomain, HierarchyDomain, OrderDomain};
use crate::summary_file::{SummaryFile, SummaryHeader};
use crate::twopass::{two_pass, GuideSampler, HierarchyStrategy, MemorySource, RecordSource, Structure, TwoPassConfig};
use crate::{seeded_rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Structure-aware VarOpt.
    Aware,
    /// Structure-oblivious VarOpt.
    Obliv,
    /// Independent IPPS.
    Poisson,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Aware => "aware",
            Method::Obliv => "obliv",
            Method::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aware" => Ok(Method::Aware),
            "obliv" => Ok(Method::Obliv),
            "poisson" => Ok(Method::Poisson),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StructureKind {
    /// Order for one ordered axis, hierarchy for one hierarchy axis,
    /// product otherwise.
    #[default]
    Auto,
    Order,
    /// Axis 0 holds the range id.
    Disjoint,
    Hierarchy,
    Product,
}

impl std::str::FromStr for StructureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(StructureKind::Auto),
            "order" => Ok(StructureKind::Order),
            "disjoint" => Ok(StructureKind::Disjoint),
            "hierarchy" => Ok(StructureKind::Hierarchy),
            "product" => Ok(StructureKind::Product),
            _ => Err(Error::InvalidArgument(format!("unknown structure {s:?}"))),
        }
    }
}

/// Resolves the structure for a domain; hierarchy and order use axis 0.
pub fn resolve_structure(kind: StructureKind, domain: &ProductDomain, strategy: HierarchyStrategy) -> Result<Structure> {
    let first_tree = match domain.axes.first() {
        Some(Axis::Hierarchy(t)) => Some(t.clone()),
        _ => None,
    };
    let kind = match kind {
        StructureKind::Auto if domain.dim() == 1 && first_tree.is_some() => StructureKind::Hierarchy,
        StructureKind::Auto if domain.dim() == 1 => StructureKind::Order,
        StructureKind::Auto => StructureKind::Product,
        k => k,
    };
    Ok(match kind {
        StructureKind::Order => Structure::Order { axis: 0 },
        StructureKind::Disjoint => Structure::Disjoint { axis: 0 },
        StructureKind::Hierarchy => Structure::Hierarchy {
            axis: 0,
            tree: first_tree.ok_or_else(|| Error::InvalidArgument("hierarchy structure needs a hierarchy on axis 0".into()))?,
            strategy,
        },
        _ => Structure::Product(domain.clone()),
    })
}

#[derive(Clone, Debug)]
pub struct BuildConfig {
    pub s: usize,
    /// Guide size as a multiple of `s`.
    pub guide_factor: usize,
    pub method: Method,
    pub structure: StructureKind,
    pub strategy: HierarchyStrategy,
    pub sampler: GuideSampler,
    /// Build the aware summary in memory instead of with two passes.
    pub in_memory: bool,
    pub seed: u64,
}

impl BuildConfig {
    pub fn new(s: usize, method: Method, seed: u64) -> Self {
        Self {
            s,
            guide_factor: 5,
            method,
            structure: StructureKind::Auto,
            strategy: HierarchyStrategy::Linearize,
            sampler: GuideSampler::VarOpt,
            in_memory: false,
            seed,
        }
    }

    fn two_pass(&self) -> TwoPassConfig {
        TwoPassConfig {
            s: self.s,
            s_prime: self.s * self.guide_factor.max(1),
            sampler: self.sampler,
        }
    }
}

fn axis_label(axis: &Axis) -> String {
    match axis {
        Axis::Ordered => "ordered".into(),
        Axis::Hierarchy(_) => "hierarchy".into(),
    }
}

/// Header describing a summary built under `config`.
pub fn header_for(domain: &ProductDomain, config: &BuildConfig) -> SummaryHeader {
    SummaryHeader {
        axes: domain.axes.iter().map(axis_label).collect(),
        seed: config.seed,
        method: config.method.name().into(),
    }
}

fn in_memory_aware(keys: &[WeightedKey], structure: &Structure, s: usize, rng: &mut crate::SampleRng) -> Result<Sample> {
    let t = compute_threshold(keys, s)?;
    let state = ipps_probabilities(keys, &t);
    let chosen = match structure {
        Structure::Order { axis } => summarize_order(state, &OrderDomain::by_axis(keys, *axis), rng)?,
        Structure::Disjoint { axis } => {
            summarize_disjoint(state, &DisjointRangeDomain::new(keys.iter().map(|k| k.coords[*axis]).collect()), rng)?
        }
        Structure::Hierarchy { axis, tree, .. } => {
            let leaf_of = keys
                .iter()
                .map(|k| {
                    tree.node_of(k.coords[*axis])
                        .ok_or_else(|| Error::InvalidHierarchy(format!("key {} is not on a leaf", k.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            summarize_hierarchy(state, &HierarchyDomain::new(Tree::clone(tree), leaf_of)?, rng)?
        }
        Structure::Product(domain) => return summarize_product(keys, s, domain, rng),
    };
    Ok(Sample::from_indices(keys, &chosen, t))
}

/// Builds a summary of in-memory keys.
pub fn build_summary(keys: &[WeightedKey], domain: &ProductDomain, config: &BuildConfig) -> Result<Sample> {
    let mut rng = seeded_rng(config.seed);
    match config.method {
        Method::Aware => {
            let structure = resolve_structure(config.structure, domain, config.strategy)?;
            if config.in_memory {
                in_memory_aware(keys, &structure, config.s, &mut rng)
            } else {
                Ok(two_pass(&mut MemorySource::new(keys), &structure, config.two_pass(), &mut rng)?.sample)
            }
        }
        Method::Obliv => {
            let t = compute_threshold(keys, config.s)?;
            let chosen = oblivious_varopt(ipps_probabilities(keys, &t), &mut rng)?;
            Ok(Sample::from_indices(keys, &chosen, t))
        }
        Method::Poisson => {
            let t = compute_threshold(keys, config.s)?;
            let probs: Vec<f64> = keys.iter().map(|k| t.prob(k.weight)).collect();
            Ok(Sample::from_indices(keys, &poisson_sample(&probs, &mut rng), t))
        }
    }
}

/// Builds an aware summary with two passes over a record source.
pub fn build_from_source<S: RecordSource + ?Sized>(
    src: &mut S,
    domain: &ProductDomain,
    config: &BuildConfig,
) -> Result<Sample> {
    if config.method != Method::Aware {
        return Err(Error::InvalidArgument("streaming build supports the aware method only".into()));
    }
    let structure = resolve_structure(config.structure, domain, config.strategy)?;
    let mut rng = seeded_rng(config.seed);
    Ok(two_pass(src, &structure, config.two_pass(), &mut rng)?.sample)
}

/// Per-query membership, computed once and shared by every sample.
#[derive(Clone, Debug)]
pub struct PreparedQueries {
    pub queries: Vec<RangeQuery>,
    /// `(key index, box index)` for each key inside each query.
    members: Vec<Vec<(usize, usize)>>,
    true_weight: Vec<f64>,
    pub total_weight: f64,
}

impl PreparedQueries {
    pub fn new(queries: Vec<RangeQuery>, keys: &[WeightedKey], domain: &ProductDomain, threads: usize) -> Result<Self> {
        for q in &queries {
            q.check_disjoint(domain)?;
        }
        let members = parallel_map(&queries, threads, |q| {
            keys.iter()
                .enumerate()
                .filter_map(|(k, key)| q.ranges.iter().position(|b| domain.contains(b, &key.coords)).map(|h| (k, h)))
                .collect::<Vec<_>>()
        });
        let true_weight = members.iter().map(|m| m.iter().map(|&(k, _)| keys[k].weight).sum()).collect();
        Ok(Self {
            queries,
            members,
            true_weight,
            total_weight: keys.iter().map(|k| k.weight).sum(),
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Applies `f` to every item on up to `threads` scoped threads, keeping order.
pub fn parallel_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<U>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryMetrics {
    pub query: usize,
    pub ranges: usize,
    pub true_weight: f64,
    pub estimate: f64,
    /// `|est - true| / total weight`.
    pub abs_error: f64,
    /// `|est - true| / max(true, eps_den)`.
    pub rel_error: f64,
    /// `(est - true)^2`.
    pub sq_error: f64,
    pub mass: f64,
    pub count: usize,
    pub discrepancy: f64,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateMetrics {
    pub queries: usize,
    pub mean_abs_error: f64,
    pub mean_rel_error: f64,
    pub sum_sq_error: f64,
    pub max_discrepancy: f64,
    pub mean_discrepancy: f64,
}

/// Guard for relative error on near-empty queries.
pub fn eps_den(total_weight: f64) -> f64 {
    1e-12 * total_weight
}

pub fn query_metrics(query: usize, ranges: usize, estimate: f64, true_weight: f64, total_weight: f64) -> QueryMetrics {
    let err = (estimate - true_weight).abs();
    QueryMetrics {
        query,
        ranges,
        true_weight,
        estimate,
        abs_error: err / total_weight,
        rel_error: err / true_weight.max(eps_den(total_weight)),
        sq_error: (estimate - true_weight).powi(2),
        mass: 0.0,
        count: 0,
        discrepancy: 0.0,
        mu: 0.0,
    }
}

/// Answers every prepared query from the sample.
pub fn evaluate(sample: &Sample, keys: &[WeightedKey], prepared: &PreparedQueries, domain: &ProductDomain, threads: usize) -> Vec<QueryMetrics> {
    let ids: HashSet<u64> = sample.members.iter().map(|k| k.id).collect();
    let t: Threshold = sample.threshold;
    let idx: Vec<usize> = (0..prepared.len()).collect();
    parallel_map(&idx, threads, |&qi| {
        let q = &prepared.queries[qi];
        let mut masses = vec![0.0; q.len()];
        let mut count = 0;
        for &(k, h) in &prepared.members[qi] {
            masses[h] += t.prob(keys[k].weight);
            count += usize::from(ids.contains(&keys[k].id));
        }
        let estimate = sample.estimate(|m| q.contains(domain, &m.coords));
        let mass: f64 = masses.iter().sum();
        QueryMetrics {
            mass,
            count,
            discrepancy: discrepancy(count, mass),
            mu: multi_range_mu(&masses),
            ..query_metrics(qi, q.len(), estimate, prepared.true_weight[qi], prepared.total_weight)
        }
    })
}

pub fn aggregate(metrics: &[QueryMetrics]) -> AggregateMetrics {
    let n = metrics.len().max(1) as f64;
    AggregateMetrics {
        queries: metrics.len(),
        mean_abs_error: metrics.iter().map(|m| m.abs_error).sum::<f64>() / n,
        mean_rel_error: metrics.iter().map(|m| m.rel_error).sum::<f64>() / n,
        sum_sq_error: metrics.iter().map(|m| m.sq_error).sum(),
        max_discrepancy: metrics.iter().map(|m| m.discrepancy).fold(0.0, f64::max),
        mean_discrepancy: metrics.iter().map(|m| m.discrepancy).sum::<f64>() / n,
    }
}

pub fn to_report(metrics: &[QueryMetrics]) -> DiscrepancyReport {
    DiscrepancyReport {
        per_range: metrics
            .iter()
            .map(|m| RangeEntry {
                query: m.query,
                mass: m.mass,
                count: m.count,
                discrepancy: m.discrepancy,
                estimate: m.estimate,
                true_weight: m.true_weight,
                abs_error: (m.estimate - m.true_weight).abs(),
                mu: m.mu,
            })
            .collect(),
        max_discrepancy: aggregate(metrics).max_discrepancy,
    }
}

pub const METRICS_HEADER: &str =
    "query,ranges,true_weight,estimate,abs_error,rel_error,sq_error,mass,count,discrepancy,mu";

pub fn write_metrics<W: Write>(w: &mut W, metrics: &[QueryMetrics]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.query, m.ranges, m.true_weight, m.estimate, m.abs_error, m.rel_error, m.sq_error, m.mass, m.count, m.discrepancy, m.mu
        )?;
    }
    Ok(())
}

pub fn write_aggregate<W: Write>(w: &mut W, method: Method, s: usize, a: &AggregateMetrics) -> Result<()> {
    writeln!(w, "method={}", method.name())?;
    writeln!(w, "s={s}")?;
    writeln!(w, "queries={}", a.queries)?;
    writeln!(w, "mean_abs_error={}", a.mean_abs_error)?;
    writeln!(w, "mean_rel_error={}", a.mean_rel_error)?;
    writeln!(w, "sum_sq_error={}", a.sum_sq_error)?;
    writeln!(w, "max_discrepancy={}", a.max_discrepancy)?;
    writeln!(w, "mean_discrepancy={}", a.mean_discrepancy)?;
    Ok(())
}

/// Wall-clock measurements, kept apart from the deterministic outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timing {
    pub records: usize,
    pub build: Duration,
    pub queries: usize,
    pub evaluate: Duration,
}

impl Timing {
    pub fn records_per_second(&self) -> f64 {
        self.records as f64 / self.build.as_secs_f64().max(1e-9)
    }

    pub fn query_latency(&self) -> Duration {
        self.evaluate / self.queries.max(1) as u32
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "records={}", self.records)?;
        writeln!(w, "build_seconds={}", self.build.as_secs_f64())?;
        writeln!(w, "records_per_second={}", self.records_per_second())?;
        writeln!(w, "queries={}", self.queries)?;
        writeln!(w, "evaluate_seconds={}", self.evaluate.as_secs_f64())?;
        writeln!(w, "query_latency_seconds={}", self.query_latency().as_secs_f64())?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub summary: SummaryFile,
    pub metrics: Vec<QueryMetrics>,
    pub aggregate: AggregateMetrics,
    pub report: DiscrepancyReport,
    pub timing: Timing,
}

/// Builds a summary, answers the battery and collects the metrics.
pub fn run_experiment(
    keys: &[WeightedKey],
    domain: &ProductDomain,
    config: &BuildConfig,
    prepared: &PreparedQueries,
    threads: usize,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    let sample = build_summary(keys, domain, config)?;
    let build = start.elapsed();
    let start = Instant::now();
    let metrics = evaluate(&sample, keys, prepared, domain, threads);
    let evaluate = start.elapsed();
    Ok(ExperimentResult {
        aggregate: aggregate(&metrics),
        report: to_report(&metrics),
        summary: SummaryFile {
            header: header_for(domain, config),
            sample,
        },
        metrics,
        timing: Timing {
            records: keys.len(),
            build,
            queries: prepared.len(),
            evaluate,
        },
    })
}

/// Independent trials, one per seed, spread over threads.
pub fn run_trials(
    keys: &[WeightedKey],
    domain: &ProductDomain,
    config: &BuildConfig,
    prepared: &PreparedQueries,
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<AggregateMetrics>> {
    parallel_map(seeds, threads, |&seed| {
        let cfg = BuildConfig { seed, ..config.clone() };
        let sample = build_summary(keys, domain, &cfg)?;
        Ok(aggregate(&evaluate(&sample, keys, prepared, domain, 1)))
    })
    .into_iter()
    .collect()
}
