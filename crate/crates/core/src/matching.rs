//! Tentative correspondences: exact nearest-neighbour search, the first
//! geometrically inconsistent neighbour ratio test, and duplicate removal.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descr::{Descriptor, DescriptorKind};
use crate::detect::DetectorKind;
use crate::geometry::{Laf, Point2};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("cannot index an empty feature set")]
    Empty,
    #[error("descriptor dimension {got} differs from {expected}")]
    MixedDimensions { expected: usize, got: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Detector and descriptor pair; features are only ever matched within one
/// channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Channel {
    pub detector: DetectorKind,
    pub descriptor: DescriptorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    /// In original image coordinates.
    pub laf: Laf,
    pub descriptor: Descriptor,
    pub channel: Channel,
    pub view_id: usize,
}

/// One side of a correspondence: the feature's frame, its view, and its
/// index in the feature list it was matched from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchEnd {
    pub laf: Laf,
    pub view: usize,
    pub feature: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub a: MatchEnd,
    pub b: MatchEnd,
    pub channel: Channel,
    pub distance: f64,
    /// `d(nearest) / d(first inconsistent)`; 0 when no inconsistent
    /// neighbour was found.
    pub ratio: f64,
}

impl Correspondence {
    pub fn points(&self) -> (Point2, Point2) {
        (self.a.laf.center, self.b.laf.center)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Neighbours at least this far from the nearest one (image 2, pixels)
    /// are geometrically inconsistent.
    pub fginn_radius: f64,
    pub max_ratio: f64,
    /// Neighbours scanned per query.
    pub max_neighbors: usize,
    /// Correspondences with both endpoints closer than this to a better one
    /// are duplicates.
    pub dedup_radius: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { fginn_radius: 10.0, max_ratio: 0.8, max_neighbors: 50, dedup_radius: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist2: f32,
    index: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn dist2(a: &[f32], b: &[f32]) -> f32 {
    // eight independent partial sums vectorize well
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for j in 0..8 {
            let d = x[j] - y[j];
            acc[j] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for j in chunks * 8..a.len() {
        let d = a[j] - b[j];
        tail += d * d;
    }
    acc.iter().sum::<f32>() + tail
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f32, left: usize, right: usize },
}

const LEAF_SIZE: usize = 12;

/// Exact k-nearest-neighbour index under L2. Backed by a kd-tree with full
/// backtracking, so results equal brute-force search; ties are ordered by
/// index.
pub struct NnIndex {
    dim: usize,
    data: Vec<f32>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NnIndex {
    pub fn build<'a, I>(descriptors: I) -> Result<Self, MatchError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut data = Vec::new();
        let mut dim = None;
        let mut n = 0;
        for d in descriptors {
            match dim {
                None => dim = Some(d.len()),
                Some(expected) if expected != d.len() => {
                    return Err(MatchError::MixedDimensions { expected, got: d.len() });
                }
                _ => {}
            }
            data.extend(d.iter().map(|v| *v as f32));
            n += 1;
        }
        let dim = dim.ok_or(MatchError::Empty)?;
        let mut index = Self { dim, data, order: (0..n).collect(), nodes: Vec::new() };
        index.build_node(0, n);
        Ok(index)
    }

    pub fn from_records(records: &[FeatureRecord]) -> Result<Self, MatchError> {
        Self::build(records.iter().map(|r| r.descriptor.values.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn point(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the dimension of largest spread at its median
        let mut best = (0, -1.0f32);
        for d in 0..self.dim {
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = self.data[i * self.dim + d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        let dim = best.0;
        if best.1 <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (data, d) = (&self.data, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data[a * d + dim].total_cmp(&data[b * d + dim]).then(a.cmp(&b))
        });
        let value = self.data[self.order[mid] * self.dim + dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    /// The `k` nearest stored descriptors, ascending by `(distance, index)`.
    pub fn knn(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        assert_eq!(query.len(), self.dim, "query dimension");
        if k == 0 {
            return Vec::new();
        }
        let q: Vec<f32> = query.iter().map(|v| *v as f32).collect();
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, &q, k, &mut heap);
        finish(heap)
    }

    fn search(&self, node: usize, q: &[f32], k: usize, heap: &mut BinaryHeap<HeapItem>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    push_bounded(heap, HeapItem { dist2: dist2(q, self.point(i)), index: i }, k);
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                let bound = diff * diff;
                if heap.len() < k || heap.peek().is_some_and(|w| bound <= w.dist2) {
                    self.search(far, q, k, heap);
                }
            }
        }
    }

    /// Exhaustive search with the same ordering as [`NnIndex::knn`].
    pub fn knn_brute_force(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        assert_eq!(query.len(), self.dim, "query dimension");
        let q: Vec<f32> = query.iter().map(|v| *v as f32).collect();
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            for i in 0..self.len() {
                push_bounded(&mut heap, HeapItem { dist2: dist2(&q, self.point(i)), index: i }, k);
            }
        }
        finish(heap)
    }
}

#[inline]
fn push_bounded(heap: &mut BinaryHeap<HeapItem>, item: HeapItem, k: usize) {
    if heap.len() < k {
        heap.push(item);
    } else if heap.peek().is_some_and(|w| item < *w) {
        heap.pop();
        heap.push(item);
    }
}

fn finish(heap: BinaryHeap<HeapItem>) -> Vec<Neighbor> {
    heap.into_sorted_vec()
        .into_iter()
        .map(|h| Neighbor { index: h.index, distance: (h.dist2.max(0.0) as f64).sqrt() })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FginnMatch {
    pub neighbor: usize,
    pub distance: f64,
    pub ratio: f64,
}

/// Ratio test against the first neighbour whose center lies at least
/// `radius` from the nearest neighbour's center. Without such a neighbour
/// among the first `max_neighbors`, the ratio is 0. Accepted iff
/// `ratio < max_ratio`.
pub fn fginn(query: &[f64], index: &NnIndex, centers: &[Point2], params: &MatchParams) -> Option<FginnMatch> {
    let neighbors = index.knn(query, params.max_neighbors.max(2));
    let first = *neighbors.first()?;
    let c1 = centers[first.index];
    let inconsistent = neighbors[1..].iter().find(|n| centers[n.index].distance(&c1) >= params.fginn_radius);
    let ratio = match inconsistent {
        None => 0.0,
        Some(n) if n.distance > 0.0 => first.distance / n.distance,
        Some(_) => 1.0,
    };
    (ratio < params.max_ratio).then_some(FginnMatch { neighbor: first.index, distance: first.distance, ratio })
}

/// FGINN for one record of image 1 against `records` of image 2, which
/// `index` was built from.
pub fn fginn_match(
    query: &FeatureRecord,
    query_id: usize,
    index: &NnIndex,
    records: &[FeatureRecord],
    params: &MatchParams,
) -> Option<Correspondence> {
    let centers: Vec<Point2> = records.iter().map(|r| r.laf.center).collect();
    let m = fginn(&query.descriptor.values, index, &centers, params)?;
    let b = &records[m.neighbor];
    Some(Correspondence {
        a: MatchEnd { laf: query.laf, view: query.view_id, feature: query_id },
        b: MatchEnd { laf: b.laf, view: b.view_id, feature: m.neighbor },
        channel: query.channel,
        distance: m.distance,
        ratio: m.ratio,
    })
}

fn group_by_channel(f: &[FeatureRecord]) -> BTreeMap<Channel, Vec<usize>> {
    let mut groups: BTreeMap<Channel, Vec<usize>> = BTreeMap::new();
    for (i, r) in f.iter().enumerate() {
        groups.entry(r.channel).or_default().push(i);
    }
    groups
}

/// Matches every channel independently and pools the results, sorted by
/// `(channel, ratio, feature indices)`. `MatchEnd::feature` indexes into
/// `f1` and `f2`.
pub fn generate_tentative(f1: &[FeatureRecord], f2: &[FeatureRecord], params: &MatchParams) -> Vec<Correspondence> {
    let g1 = group_by_channel(f1);
    let g2 = group_by_channel(f2);
    let mut out = Vec::new();
    for (channel, ids1) in &g1 {
        let Some(ids2) = g2.get(channel) else { continue };
        let Ok(index) = NnIndex::build(ids2.iter().map(|&i| f2[i].descriptor.values.as_slice())) else {
            continue;
        };
        if index.dim() != f1[ids1[0]].descriptor.values.len() {
            continue;
        }
        let centers: Vec<Point2> = ids2.iter().map(|&i| f2[i].laf.center).collect();
        let found: Vec<Correspondence> = ids1
            .par_iter()
            .filter_map(|&i| {
                let q = &f1[i];
                let m = fginn(&q.descriptor.values, &index, &centers, params)?;
                let j = ids2[m.neighbor];
                Some(Correspondence {
                    a: MatchEnd { laf: q.laf, view: q.view_id, feature: i },
                    b: MatchEnd { laf: f2[j].laf, view: f2[j].view_id, feature: j },
                    channel: *channel,
                    distance: m.distance,
                    ratio: m.ratio,
                })
            })
            .collect();
        out.extend(found);
    }
    out.sort_by(|x, y| {
        x.channel
            .cmp(&y.channel)
            .then(x.ratio.total_cmp(&y.ratio))
            .then(x.a.feature.cmp(&y.a.feature))
            .then(x.b.feature.cmp(&y.b.feature))
    });
    out
}

/// Greedy duplicate removal in ascending ratio order: a correspondence is
/// dropped when some kept one has both endpoints within `radius`. Survivors
/// keep their input order.
pub fn filter_duplicates(tcs: &[Correspondence], radius: f64) -> Vec<Correspondence> {
    let mut order: Vec<usize> = (0..tcs.len()).collect();
    order.sort_by(|&i, &j| tcs[i].ratio.total_cmp(&tcs[j].ratio).then(i.cmp(&j)));
    let cell = radius.max(1e-9);
    let key = |p: &Point2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut keep = vec![false; tcs.len()];
    for i in order {
        let (a, b) = tcs[i].points();
        let (kx, ky) = key(&a);
        let duplicate = (-1..=1).any(|dy| {
            (-1..=1).any(|dx| {
                grid.get(&(kx + dx, ky + dy)).is_some_and(|kept| {
                    kept.iter().any(|&j| {
                        let (a2, b2) = tcs[j].points();
                        a.distance(&a2) < radius && b.distance(&b2) < radius
                    })
                })
            })
        });
        if !duplicate {
            keep[i] = true;
            grid.entry((kx, ky)).or_default().push(i);
        }
    }
    tcs.iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| *c).collect()
}

#[derive(Serialize)]
struct TcRow {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    distance: f64,
    ratio: f64,
    detector: DetectorKind,
    descriptor: DescriptorKind,
    view1: usize,
    view2: usize,
}

/// CSV `x1,y1,x2,y2,distance,ratio,detector,descriptor,view1,view2`.
pub fn write_correspondences_csv<W: Write>(out: W, tcs: &[Correspondence]) -> Result<(), MatchError> {
    let mut w = csv::Writer::from_writer(out);
    for c in tcs {
        w.serialize(TcRow {
            x1: c.a.laf.center.x,
            y1: c.a.laf.center.y,
            x2: c.b.laf.center.x,
            y2: c.b.laf.center.y,
            distance: c.distance,
            ratio: c.ratio,
            detector: c.channel.detector,
            descriptor: c.channel.descriptor,
            view1: c.a.view,
            view2: c.b.view,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
