//! Region adjacency graphs and the `RAGC` dataset cache.
//!
//! Cache layout (little-endian): magic `RAGC`, version u16 = 1,
//! class-name table (count u32, then per name u32 length + UTF-8),
//! graph count u32; per graph: label u32, node count u32, edge count u32,
//! N x 3 float32 node features row-major, E x 2 u32 edge endpoints with
//! u < v. The split tag is carried by the file-name convention
//! (`<prefix>.train.ragc` / `<prefix>.test.ragc`), not by the payload.

use std::collections::BTreeSet;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::NormalizedImage;
use crate::error::{Error, Result};
use crate::slic::SegmentMap;

const CACHE_MAGIC: [u8; 4] = *b"RAGC";
const CACHE_VERSION: u16 = 1;

/// One image as a graph: one node per superpixel with its mean normalized
/// RGB, one undirected edge per touching segment pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGraph {
    pub node_features: Vec<[f32; 3]>,
    /// Canonical form: u < v, sorted, no duplicates.
    pub edges: Vec<(u32, u32)>,
    pub label: u32,
}

impl RegionGraph {
    pub fn node_count(&self) -> usize {
        self.node_features.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count() as u32;
        let mut prev: Option<(u32, u32)> = None;
        for &(u, v) in &self.edges {
            if u >= v {
                return Err(Error::Input(format!(
                    "edge ({}, {}) is not in canonical u < v form",
                    u, v
                )));
            }
            if v >= n {
                return Err(Error::Input(format!(
                    "edge ({}, {}) references node outside 0..{}",
                    u, v, n
                )));
            }
            if let Some(p) = prev {
                if p >= (u, v) {
                    return Err(Error::Input("edges are not sorted and unique".into()));
                }
            }
            prev = Some((u, v));
        }
        for (i, f) in self.node_features.iter().enumerate() {
            if f.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::Input(format!(
                    "node {} feature {:?} outside [-1, 1]",
                    i, f
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

impl SplitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Test => "test",
        }
    }

    fn from_path(path: &Path) -> SplitTag {
        match path.file_name().and_then(|n| n.to_str()) {
            Some(name) if name.contains(".test.") => SplitTag::Test,
            _ => SplitTag::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    pub graphs: Vec<RegionGraph>,
    pub class_names: Vec<String>,
    pub split_tag: SplitTag,
}

impl GraphDataset {
    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.graphs.iter().enumerate() {
            g.validate()
                .map_err(|e| Error::Input(format!("graph {}: {}", i, e)))?;
            if g.label as usize >= self.class_names.len() {
                return Err(Error::Input(format!(
                    "graph {} has label {} but only {} classes exist",
                    i,
                    g.label,
                    self.class_names.len()
                )));
            }
        }
        Ok(())
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for g in &self.graphs {
            counts[g.label as usize] += 1;
        }
        counts
    }
}

/// Build the region adjacency graph of a segmented image. Two segments
/// are adjacent iff some pixel of one is 4-adjacent to a pixel of the
/// other; node features are the mean normalized RGB of each segment.
pub fn build_rag(seg: &SegmentMap, image: &NormalizedImage, label: u32) -> Result<RegionGraph> {
    if seg.width() != image.width() || seg.height() != image.height() {
        return Err(Error::Input(format!(
            "segment map is {}x{} but image is {}x{}",
            seg.width(),
            seg.height(),
            image.width(),
            image.height()
        )));
    }
    let n = seg.num_segments();
    let mut sums = vec![[0.0f64; 3]; n];
    let mut counts = vec![0usize; n];
    let mut edge_set: BTreeSet<(u32, u32)> = BTreeSet::new();

    let (w, h) = (seg.width(), seg.height());
    for y in 0..h {
        for x in 0..w {
            let here = seg.label_at(y, x);
            let px = image.at(y, x);
            let acc = &mut sums[here as usize];
            acc[0] += px[0] as f64;
            acc[1] += px[1] as f64;
            acc[2] += px[2] as f64;
            counts[here as usize] += 1;

            if x + 1 < w {
                let right = seg.label_at(y, x + 1);
                if right != here {
                    edge_set.insert((here.min(right), here.max(right)));
                }
            }
            if y + 1 < h {
                let down = seg.label_at(y + 1, x);
                if down != here {
                    edge_set.insert((here.min(down), here.max(down)));
                }
            }
        }
    }

    let node_features = sums
        .iter()
        .zip(counts.iter())
        .map(|(s, &c)| {
            let inv = 1.0 / c.max(1) as f64;
            [
                (s[0] * inv) as f32,
                (s[1] * inv) as f32,
                (s[2] * inv) as f32,
            ]
        })
        .collect();

    let graph = RegionGraph {
        node_features,
        edges: edge_set.into_iter().collect(),
        label,
    };
    graph.validate()?;
    Ok(graph)
}

pub fn write_cache(ds: &GraphDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(ds.class_names.len() as u32).to_le_bytes())?;
    for name in &ds.class_names {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    w.write_all(&(ds.graphs.len() as u32).to_le_bytes())?;
    for g in &ds.graphs {
        w.write_all(&g.label.to_le_bytes())?;
        w.write_all(&(g.node_count() as u32).to_le_bytes())?;
        w.write_all(&(g.edge_count() as u32).to_le_bytes())?;
        for f in &g.node_features {
            for v in f {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for &(u, v) in &g.edges {
            w.write_all(&u.to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<GraphDataset> {
    let file = std::fs::File::open(path)?;
    let mut r = CacheReader {
        inner: BufReader::new(file),
        offset: 0,
    };

    let mut magic = [0u8; 4];
    r.read_exact_or_corrupt(&mut magic, "cache magic")?;
    if magic != CACHE_MAGIC {
        return Err(Error::Format(format!(
            "bad cache magic {:?}, expected {:?}",
            magic, CACHE_MAGIC
        )));
    }
    let version = r.read_u16("cache version")?;
    if version != CACHE_VERSION {
        return Err(Error::Format(format!(
            "unsupported cache version {}",
            version
        )));
    }
    let class_count = r.read_u32("class count")? as usize;
    if class_count > 1 << 20 {
        return Err(Error::Format(format!(
            "unreasonable class count {}",
            class_count
        )));
    }
    let mut class_names = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        class_names.push(r.read_string("class name")?);
    }
    let graph_count = r.read_u32("graph count")? as usize;
    let mut graphs = Vec::with_capacity(graph_count.min(1 << 20));
    for gi in 0..graph_count {
        let label = r.read_u32("graph label")?;
        let n = r.read_u32("node count")? as usize;
        let e = r.read_u32("edge count")? as usize;
        let mut node_features = Vec::with_capacity(n);
        for _ in 0..n {
            let mut f = [0.0f32; 3];
            for v in f.iter_mut() {
                *v = r.read_f32("node feature")?;
            }
            node_features.push(f);
        }
        let mut edges = Vec::with_capacity(e);
        for _ in 0..e {
            let u = r.read_u32("edge endpoint")?;
            let v = r.read_u32("edge endpoint")?;
            edges.push((u, v));
        }
        let g = RegionGraph {
            node_features,
            edges,
            label,
        };
        g.validate()
            .map_err(|err| Error::Format(format!("graph {} in cache: {}", gi, err)))?;
        graphs.push(g);
    }

    let ds = GraphDataset {
        graphs,
        class_names,
        split_tag: SplitTag::from_path(path),
    };
    ds.validate()
        .map_err(|err| Error::Format(format!("cache {}: {}", path.display(), err)))?;
    Ok(ds)
}

struct CacheReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CacheReader<R> {
    fn read_exact_or_corrupt(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::Corrupt {
                offset: at,
                detail: format!("truncated while reading {}", what),
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn read_u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact_or_corrupt(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_or_corrupt(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f32(&mut self, what: &str) -> Result<f32> {
        let mut b = [0u8; 4];
        self.read_exact_or_corrupt(&mut b, what)?;
        Ok(f32::from_le_bytes(b))
    }

    fn read_string(&mut self, what: &str) -> Result<String> {
        let len = self.read_u32(what)? as usize;
        if len > 1 << 20 {
            return Err(Error::Format(format!(
                "unreasonable {} length {}",
                what, len
            )));
        }
        let mut buf = vec![0u8; len];
        self.read_exact_or_corrupt(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| Error::Format(format!("{} is not UTF-8", what)))
    }
}
