//! Query batteries: random rectangles, equal-weight kd cells, query files.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::ipps::WeightedKey;
use crate::product::{build_kd_hierarchy, Axis, AxisRange, BoxQuery, ProductDomain};
use crate::query::RangeQuery;
use crate::{seeded_rng, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum QueryKind {
    /// Boxes whose side on each ordered axis is a uniform fraction of the
    /// data extent in `[min_side, max_side]`, at least one unit. Hierarchy
    /// axes get a random node.
    UniformArea { min_side: f64, max_side: f64 },
    /// Cells at depth `level` of a kd-tree over the full data, each holding
    /// about a `2^-level` share of the weight.
    UniformWeight { level: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuerySpec {
    pub kind: QueryKind,
    pub ranges_per_query: usize,
    pub battery: usize,
    pub seed: u64,
}

impl QuerySpec {
    pub fn uniform_area(ranges_per_query: usize, battery: usize, min_side: f64, max_side: f64, seed: u64) -> Self {
        Self {
            kind: QueryKind::UniformArea { min_side, max_side },
            ranges_per_query,
            battery,
            seed,
        }
    }

    pub fn uniform_weight(ranges_per_query: usize, battery: usize, level: usize, seed: u64) -> Self {
        Self {
            kind: QueryKind::UniformWeight { level },
            ranges_per_query,
            battery,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ranges_per_query == 0 {
            return Err(Error::InvalidArgument("ranges per query must be at least 1".into()));
        }
        if let QueryKind::UniformArea { min_side, max_side } = self.kind {
            if !(min_side >= 0.0 && min_side <= max_side && max_side > 0.0 && max_side.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "side fractions must satisfy 0 <= min <= max, 0 < max, got {min_side}, {max_side}"
                )));
            }
        }
        Ok(())
    }
}

/// Consecutive rejected boxes before a query is restarted.
pub const MAX_ATTEMPTS_PER_RANGE: usize = 1000;
const RESTARTS: usize = 10;

/// Generates a battery; the same spec regenerates the same queries.
pub fn generate_queries(spec: &QuerySpec, keys: &[WeightedKey], domain: &ProductDomain) -> Result<Vec<RangeQuery>> {
    spec.validate()?;
    if keys.is_empty() {
        return Err(Error::EmptyKeySet);
    }
    domain.validate(keys)?;
    let mut rng = seeded_rng(spec.seed);
    match spec.kind {
        QueryKind::UniformArea { min_side, max_side } => {
            let extent: Vec<(u64, u64)> = (0..domain.dim())
                .map(|a| {
                    let it = keys.iter().map(|k| k.coords[a]);
                    (it.clone().min().unwrap_or(0), it.max().unwrap_or(0))
                })
                .collect();
            (0..spec.battery)
                .map(|_| area_query(spec.ranges_per_query, min_side, max_side, &extent, domain, &mut rng))
                .collect()
        }
        QueryKind::UniformWeight { level } => weight_queries(spec, level, keys, domain, &mut rng),
    }
}

fn random_box<R: Rng + ?Sized>(
    min_side: f64,
    max_side: f64,
    extent: &[(u64, u64)],
    domain: &ProductDomain,
    rng: &mut R,
) -> BoxQuery {
    let ranges = domain
        .axes
        .iter()
        .zip(extent)
        .map(|(axis, &(lo, hi))| match axis {
            Axis::Ordered => {
                let span = (hi - lo + 1) as f64;
                let frac = if min_side < max_side {
                    rng.random_range(min_side..=max_side)
                } else {
                    min_side
                };
                let len = ((frac * span).round() as u64).clamp(1, hi - lo + 1);
                let start = lo + rng.random_range(0..=(hi - lo + 1 - len));
                AxisRange::Interval {
                    lo: start,
                    hi: start + len - 1,
                }
            }
            Axis::Hierarchy(tree) => {
                let depths = tree.depths();
                let leaves = tree.leaves();
                let mut v = leaves[rng.random_range(0..leaves.len())];
                let up = rng.random_range(0..=depths[v]);
                for _ in 0..up {
                    v = tree.parent(v).expect("depth counts ancestors");
                }
                AxisRange::Node(tree.id(v))
            }
        })
        .collect();
    BoxQuery { ranges }
}

fn area_query<R: Rng + ?Sized>(
    ell: usize,
    min_side: f64,
    max_side: f64,
    extent: &[(u64, u64)],
    domain: &ProductDomain,
    rng: &mut R,
) -> Result<RangeQuery> {
    let mut attempts = 0;
    // An early large box can block the rest; start over a few times.
    for _ in 0..RESTARTS {
        let mut q = RangeQuery::new(Vec::with_capacity(ell));
        let mut failures = 0;
        while q.len() < ell && failures < MAX_ATTEMPTS_PER_RANGE {
            attempts += 1;
            let b = random_box(min_side, max_side, extent, domain, rng);
            let clash = q.ranges.iter().any(|other| {
                RangeQuery::new(vec![b.clone(), other.clone()])
                    .check_disjoint(domain)
                    .is_err()
            });
            if clash {
                failures += 1;
            } else {
                q.ranges.push(b);
                failures = 0;
            }
        }
        if q.len() == ell {
            return Ok(q);
        }
    }
    Err(Error::InfeasibleQueries { ranges: ell, attempts })
}

fn weight_queries<R: Rng + ?Sized>(
    spec: &QuerySpec,
    level: usize,
    keys: &[WeightedKey],
    domain: &ProductDomain,
    rng: &mut R,
) -> Result<Vec<RangeQuery>> {
    if domain.axes.iter().any(|a| matches!(a, Axis::Hierarchy(_))) {
        return Err(Error::InvalidArgument(
            "uniform-weight queries need ordered axes only".into(),
        ));
    }
    let total: f64 = keys.iter().map(|k| k.weight).sum();
    let probs: Vec<f64> = keys.iter().map(|k| k.weight / total).collect();
    let idx: Vec<usize> = (0..keys.len()).collect();
    let kd = build_kd_hierarchy(keys, &idx, &probs, domain)?;
    // Nodes at the level, plus leaves that stop above it.
    let cells: Vec<&[(u64, u64)]> = kd
        .nodes()
        .iter()
        .filter(|n| n.depth == level || (n.depth < level && n.is_leaf()))
        .map(|n| n.region.as_slice())
        .collect();
    if cells.len() < spec.ranges_per_query {
        return Err(Error::InfeasibleQueries {
            ranges: spec.ranges_per_query,
            attempts: cells.len(),
        });
    }
    Ok((0..spec.battery)
        .map(|_| {
            let picks = rand::seq::index::sample(rng, cells.len(), spec.ranges_per_query);
            let mut picks = picks.into_vec();
            picks.sort_unstable();
            RangeQuery::new(
                picks
                    .into_iter()
                    .map(|c| BoxQuery {
                        ranges: cells[c]
                            .iter()
                            .map(|&(lo, hi)| AxisRange::Interval { lo, hi })
                            .collect(),
                    })
                    .collect(),
            )
        })
        .collect())
}

fn format_range(r: &AxisRange) -> String {
    match r {
        AxisRange::Interval { lo, hi } => format!("{lo}-{hi}"),
        AxisRange::Node(id) => format!("n{id}"),
    }
}

/// One query per line; boxes separated by `;`, axes by `,`.
/// An axis is `lo-hi` (inclusive) or `nID` (hierarchy node).
pub fn write_queries<W: Write>(w: &mut W, queries: &[RangeQuery]) -> Result<()> {
    for q in queries {
        let mut line = String::new();
        for (i, b) in q.ranges.iter().enumerate() {
            if i > 0 {
                line.push(';');
            }
            for (a, r) in b.ranges.iter().enumerate() {
                if a > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{}", format_range(r));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn parse_range(tok: &str) -> Option<AxisRange> {
    let tok = tok.trim();
    if let Some(id) = tok.strip_prefix('n') {
        return id.parse().ok().map(AxisRange::Node);
    }
    let (lo, hi) = tok.split_once('-')?;
    let (lo, hi) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?);
    (lo <= hi).then_some(AxisRange::Interval { lo, hi })
}

pub fn read_queries<R: BufRead>(r: R, dim: usize) -> Result<Vec<RangeQuery>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i as u64 + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let mut boxes = Vec::new();
        for part in text.split(';') {
            let ranges = part
                .split(',')
                .map(parse_range)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("bad range {part:?}"),
                })?;
            if ranges.len() != dim {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {dim} axes, found {}", ranges.len()),
                });
            }
            boxes.push(BoxQuery { ranges });
        }
        out.push(RangeQuery::new(boxes));
    }
    Ok(out)
}
