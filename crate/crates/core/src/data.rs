//! Dataset ingestion, hierarchy files and synthetic generators.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Zipf};

use crate::hierarchy::Tree;
use crate::ipps::WeightedKey;
use crate::product::{Axis, ProductDomain};
use crate::twopass::RecordSource;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AxisKind {
    Ordered,
    /// Coordinates are leaf ids of the hierarchy in the file.
    Hierarchy(PathBuf),
    /// Coordinates are leaves of a generated IPv4 prefix hierarchy.
    IpPrefix,
}

#[derive(Clone, Debug)]
pub struct DatasetDescriptor {
    pub path: PathBuf,
    pub axes: Vec<AxisKind>,
    pub delimiter: u8,
    /// Defaults to the column after the coordinates.
    pub weight_column: Option<usize>,
    pub sum_duplicates: bool,
}

impl DatasetDescriptor {
    pub fn new(path: impl Into<PathBuf>, axes: Vec<AxisKind>) -> Self {
        Self {
            path: path.into(),
            axes,
            delimiter: b',',
            weight_column: None,
            sum_duplicates: true,
        }
    }

    pub fn ordered(path: impl Into<PathBuf>, d: usize) -> Self {
        Self::new(path, vec![AxisKind::Ordered; d])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn weight_col(&self) -> usize {
        self.weight_column.unwrap_or(self.axes.len())
    }

    /// Builds the product domain, loading hierarchy files as needed.
    pub fn domain(&self, keys: &[WeightedKey]) -> Result<ProductDomain> {
        let mut axes = Vec::with_capacity(self.axes.len());
        for (a, kind) in self.axes.iter().enumerate() {
            axes.push(match kind {
                AxisKind::Ordered => Axis::Ordered,
                AxisKind::Hierarchy(p) => Axis::Hierarchy(Arc::new(read_hierarchy(p)?)),
                AxisKind::IpPrefix => {
                    Axis::Hierarchy(Arc::new(ip_prefix_hierarchy(keys.iter().map(|k| k.coords[a]))?))
                }
            });
        }
        ProductDomain::new(axes)
    }
}

/// Parses a coordinate: an unsigned integer or a dotted IPv4 address.
pub fn parse_coord(field: &str) -> Option<u64> {
    let f = field.trim();
    f.parse::<u64>()
        .ok()
        .or_else(|| f.parse::<Ipv4Addr>().ok().map(|ip| u64::from(u32::from(ip))))
}

fn csv_reader<R: Read>(r: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn parse_record(rec: &csv::StringRecord, d: usize, wcol: usize, id: u64) -> Result<WeightedKey> {
    let line = rec.position().map_or(0, |p| p.line());
    let need = (d + 1).max(wcol + 1);
    if rec.len() < need {
        return Err(Error::Parse {
            line,
            message: format!("expected at least {need} fields, found {}", rec.len()),
        });
    }
    let mut coords = Vec::with_capacity(d);
    for c in 0..d {
        let field = &rec[if c < wcol { c } else { c + 1 }];
        coords.push(parse_coord(field).ok_or_else(|| Error::Parse {
            line,
            message: format!("bad coordinate {field:?}"),
        })?);
    }
    let wf = &rec[wcol];
    let weight: f64 = wf.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad weight {wf:?}"),
    })?;
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::Parse {
            line,
            message: format!("weight must be positive, got {wf}"),
        });
    }
    Ok(WeightedKey::new(id, coords, weight))
}

/// Reads delimited records: `d` coordinates and a weight per line.
pub fn ingest_reader<R: Read>(r: R, desc: &DatasetDescriptor) -> Result<Vec<WeightedKey>> {
    let d = desc.dim();
    if d == 0 {
        return Err(Error::InvalidArgument("dataset needs at least one axis".into()));
    }
    let wcol = desc.weight_col();
    let mut keys: Vec<WeightedKey> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    for rec in csv_reader(r, desc.delimiter).records() {
        let rec = rec?;
        let key = parse_record(&rec, d, wcol, keys.len() as u64)?;
        if desc.sum_duplicates {
            if let Some(&i) = index.get(&key.coords) {
                keys[i].weight += key.weight;
                continue;
            }
            index.insert(key.coords.clone(), keys.len());
        }
        keys.push(key);
    }
    if keys.is_empty() {
        return Err(Error::EmptyKeySet);
    }
    Ok(keys)
}

pub fn ingest(desc: &DatasetDescriptor) -> Result<Vec<WeightedKey>> {
    let keys = ingest_reader(BufReader::new(File::open(&desc.path)?), desc)?;
    for (a, kind) in desc.axes.iter().enumerate() {
        if let AxisKind::Hierarchy(p) = kind {
            let tree = read_hierarchy(p)?;
            for k in &keys {
                let leaf = tree.node_of(k.coords[a]).filter(|&v| tree.is_leaf(v));
                if leaf.is_none() {
                    return Err(Error::InvalidHierarchy(format!(
                        "key coordinate {} on axis {a} is not a leaf of {}",
                        k.coords[a],
                        p.display()
                    )));
                }
            }
        }
    }
    Ok(keys)
}

/// Writes keys as delimited records.
pub fn write_keys<W: Write>(w: &mut W, keys: &[WeightedKey]) -> Result<()> {
    for k in keys {
        for c in &k.coords {
            write!(w, "{c},")?;
        }
        writeln!(w, "{}", k.weight)?;
    }
    Ok(())
}

/// Streams records from a file, re-reading it on every scan.
///
/// Each line is its own key; duplicates are not merged.
#[derive(Debug)]
pub struct FileSource {
    desc: DatasetDescriptor,
    passes: usize,
}

impl FileSource {
    pub fn new(desc: DatasetDescriptor) -> Self {
        Self { desc, passes: 0 }
    }
}

impl RecordSource for FileSource {
    fn scan(&mut self, visit: &mut dyn FnMut(WeightedKey) -> Result<()>) -> Result<()> {
        self.passes += 1;
        let f = BufReader::new(File::open(&self.desc.path)?);
        let (d, wcol) = (self.desc.dim(), self.desc.weight_col());
        for (i, rec) in csv_reader(f, self.desc.delimiter).records().enumerate() {
            visit(parse_record(&rec?, d, wcol, i as u64)?)?;
        }
        Ok(())
    }

    fn passes(&self) -> usize {
        self.passes
    }
}

/// Parses `node_id,parent_id,label` lines; the root has an empty parent.
pub fn parse_hierarchy<R: Read>(r: R) -> Result<Tree> {
    let mut entries = Vec::new();
    for rec in csv_reader(r, b',').records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse { line, message };
        let id = rec
            .get(0)
            .and_then(|f| f.parse::<u64>().ok())
            .ok_or_else(|| bad("bad node id".into()))?;
        let parent = match rec.get(1).unwrap_or("") {
            "" | "-" => None,
            f => Some(f.parse::<u64>().map_err(|_| bad(format!("bad parent id {f:?}")))?),
        };
        let label = rec.get(2).unwrap_or("").to_string();
        entries.push((id, parent, label));
    }
    Tree::from_labelled(entries)
}

pub fn read_hierarchy(path: &Path) -> Result<Tree> {
    parse_hierarchy(BufReader::new(File::open(path)?))
}

pub fn write_hierarchy<W: Write>(w: &mut W, tree: &Tree) -> Result<()> {
    for v in tree.pre_order() {
        let parent = tree.parent(v).map(|p| tree.id(p).to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", tree.id(v), parent, tree.label(v))?;
    }
    Ok(())
}

const PREFIX_TAG: u64 = 1 << 40;

/// Node id of the `/len` prefix containing `addr`; `/32` nodes are the address.
pub fn ip_prefix_id(addr: u32, len: u32) -> u64 {
    if len >= 32 {
        u64::from(addr)
    } else {
        let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
        PREFIX_TAG | (u64::from(len) << 32) | u64::from(addr & mask)
    }
}

/// Prefix tree /0, /8, /16, /24, /32 over the addresses present.
pub fn ip_prefix_hierarchy(addrs: impl IntoIterator<Item = u64>) -> Result<Tree> {
    let mut seen = std::collections::BTreeSet::new();
    let mut entries = vec![(ip_prefix_id(0, 0), None, "0.0.0.0/0".to_string())];
    for a in addrs {
        let a = u32::try_from(a).map_err(|_| Error::InvalidArgument(format!("{a} is not an IPv4 address")))?;
        for len in [8u32, 16, 24, 32] {
            let id = ip_prefix_id(a, len);
            if seen.insert(id) {
                let label = format!("{}/{len}", Ipv4Addr::from((id & 0xffff_ffff) as u32));
                entries.push((id, Some(ip_prefix_id(a, len - 8)), label));
            }
        }
    }
    Tree::from_labelled(entries)
}

/// `side^d` keys on a full grid with weights uniform in `[1, 10)`.
pub fn uniform_grid<R: Rng + ?Sized>(side: u64, d: usize, rng: &mut R) -> Vec<WeightedKey> {
    let n = side.pow(d as u32);
    (0..n)
        .map(|i| {
            let mut rest = i;
            let coords = (0..d)
                .map(|_| {
                    let c = rest % side;
                    rest /= side;
                    c
                })
                .collect();
            WeightedKey::new(i, coords, rng.random_range(1.0..10.0))
        })
        .collect()
}

/// `n` distinct points of a `side x side` grid with Zipf weights.
///
/// Points cluster around a few random centres so that weight and location
/// are correlated.
pub fn zipf_2d<R: Rng + ?Sized>(n: usize, side: u64, exponent: f64, rng: &mut R) -> Result<Vec<WeightedKey>> {
    if (n as u64) > side * side {
        return Err(Error::InvalidArgument(format!("{n} points do not fit a {side}x{side} grid")));
    }
    let zipf = Zipf::new(1e6, exponent).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let pos = Zipf::new(side as f64, 1.1).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut perm_x: Vec<u64> = (0..side).collect();
    let mut perm_y = perm_x.clone();
    perm_x.shuffle(rng);
    perm_y.shuffle(rng);
    let mut seen = std::collections::HashSet::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    while keys.len() < n {
        // Zipf ranks mapped through a permutation give skewed marginals.
        let (x, y) = if rng.random::<f64>() < 0.5 {
            (perm_x[pos.sample(rng) as usize - 1], perm_y[pos.sample(rng) as usize - 1])
        } else {
            (rng.random_range(0..side), rng.random_range(0..side))
        };
        if seen.insert((x, y)) {
            let w = zipf.sample(rng);
            keys.push(WeightedKey::new(keys.len() as u64, vec![x, y], w));
        }
    }
    Ok(keys)
}

/// Gaussian clusters rounded to a `side^d` grid; coincident points merge.
pub fn clustered_gaussian<R: Rng + ?Sized>(
    n: usize,
    clusters: usize,
    d: usize,
    side: u64,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<WeightedKey>> {
    if clusters == 0 || d == 0 || side == 0 {
        return Err(Error::InvalidArgument("clusters, dimension and side must be positive".into()));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..side as f64)).collect())
        .collect();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut keys: Vec<WeightedKey> = Vec::new();
    for _ in 0..n {
        let c = &centres[rng.random_range(0..clusters)];
        let coords: Vec<u64> = c
            .iter()
            .map(|&m| (m + noise.sample(rng)).round().clamp(0.0, (side - 1) as f64) as u64)
            .collect();
        let w = rng.random_range(1.0..100.0);
        match index.get(&coords) {
            Some(&i) => keys[i].weight += w,
            None => {
                index.insert(coords.clone(), keys.len());
                keys.push(WeightedKey::new(keys.len() as u64, coords, w));
            }
        }
    }
    Ok(keys)
}

/// Random tree with `leaves` leaves; internal fanout drawn from `2..=max_fanout`.
///
/// Node ids are indices; keys reference leaves by id.
pub fn random_hierarchy<R: Rng + ?Sized>(leaves: usize, max_fanout: usize, rng: &mut R) -> Result<Tree> {
    if leaves == 0 || max_fanout < 2 {
        return Err(Error::InvalidArgument("need at least one leaf and fanout of at least 2".into()));
    }
    // Grow by repeatedly expanding a random leaf.
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = vec![0usize];
    while frontier.len() < leaves {
        let i = rng.random_range(0..frontier.len());
        let v = frontier.swap_remove(i);
        let k = rng.random_range(2..=max_fanout).min(leaves - frontier.len());
        let k = k.max(2);
        for _ in 0..k {
            let c = children.len();
            children.push(Vec::new());
            children[v].push(c);
            frontier.push(c);
        }
    }
    Tree::from_children(children, 0)
}

/// One key per leaf of `tree`, weights from a heavy-tailed law.
pub fn keys_on_leaves<R: Rng + ?Sized>(tree: &Tree, rng: &mut R) -> Vec<WeightedKey> {
    tree.leaves()
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let u: f64 = rng.random_range(0.0..1.0);
            WeightedKey::new(i as u64, vec![tree.id(v)], 1.0 / (1.0 - u).powf(0.7))
        })
        .collect()
}
