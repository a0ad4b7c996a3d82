//! Collocation nodes on tensor-product grids and nearest-neighbour stencils.
//!
//! Axes are ordered horizontal-first with the vertical axis last: a 1-D
//! cloud has coordinates `[z]`, 2-D `[x, z]`, 3-D `[x, y, z]`. Node indices
//! run with axis 0 fastest.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::CloudError;
use crate::scalar::Real;

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Low,
    High,
}

/// One face of the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub fn new(axis: usize, side: Side) -> Self {
        Self { axis, side }
    }

    /// Parses `bottom`/`top` (vertical axis) and `left`/`right`,
    /// `front`/`back` (horizontal axes) for a cloud of dimension `dim`.
    pub fn from_name(name: &str, dim: usize) -> Option<Face> {
        let v = dim.checked_sub(1)?;
        let f = match name {
            "bottom" => Face::new(v, Side::Low),
            "top" => Face::new(v, Side::High),
            "left" if dim >= 2 => Face::new(0, Side::Low),
            "right" if dim >= 2 => Face::new(0, Side::High),
            "front" if dim == 3 => Face::new(1, Side::Low),
            "back" if dim == 3 => Face::new(1, Side::High),
            _ => return None,
        };
        Some(f)
    }

    pub fn name(&self, dim: usize) -> &'static str {
        let vertical = self.axis + 1 == dim;
        match (vertical, self.axis, self.side) {
            (true, _, Side::Low) => "bottom",
            (true, _, Side::High) => "top",
            (false, 0, Side::Low) => "left",
            (false, 0, Side::High) => "right",
            (false, _, Side::Low) => "front",
            (false, _, Side::High) => "back",
        }
    }

    pub fn outward_sign(&self) -> f64 {
        match self.side {
            Side::Low => -1.0,
            Side::High => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Dirichlet,
    Neumann,
}

/// A boundary segment: a face, optionally restricted to a coordinate range
/// along one tangential axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpec<T> {
    pub face: Face,
    /// `(axis, min, max)`, inclusive.
    pub range: Option<(usize, T, T)>,
    pub kind: SegmentKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    Dirichlet(usize),
    Neumann(usize),
}

impl BoundaryTag {
    pub fn segment(&self) -> Option<usize> {
        match *self {
            BoundaryTag::Interior => None,
            BoundaryTag::Dirichlet(s) | BoundaryTag::Neumann(s) => Some(s),
        }
    }

    pub fn is_interior(&self) -> bool {
        matches!(self, BoundaryTag::Interior)
    }
}

/// Nodes of a uniform tensor-product grid with boundary tags and axis links.
#[derive(Debug, Clone)]
pub struct NodeCloud<T> {
    dim: usize,
    counts: [usize; MAX_DIM],
    extents: [T; MAX_DIM],
    spacing: [T; MAX_DIM],
    coords: Vec<[T; MAX_DIM]>,
    tags: Vec<BoundaryTag>,
    segments: Vec<SegmentSpec<T>>,
}

impl<T: Real> NodeCloud<T> {
    /// Builds a grid on `[0, extents[a]]` per axis. Each boundary node is
    /// assigned to the first segment in `segments` that contains it.
    pub fn tensor_grid(extents: &[T], counts: &[usize], segments: &[SegmentSpec<T>]) -> Result<Self, CloudError> {
        let dim = extents.len();
        if dim == 0 || dim > MAX_DIM || counts.len() != dim {
            return Err(CloudError::Dimension(dim.max(counts.len())));
        }
        let mut ext = [T::zero(); MAX_DIM];
        let mut cnt = [1usize; MAX_DIM];
        let mut spacing = [T::zero(); MAX_DIM];
        for a in 0..dim {
            if !(extents[a] > T::zero() && extents[a].is_finite()) {
                return Err(CloudError::DegenerateExtent { axis: a, extent: extents[a].as_f64() });
            }
            if counts[a] < 2 {
                return Err(CloudError::TooFewNodes { axis: a, count: counts[a] });
            }
            ext[a] = extents[a];
            cnt[a] = counts[a];
            spacing[a] = extents[a] / T::lit((counts[a] - 1) as f64);
        }
        let n: usize = cnt[..dim].iter().product();
        let mut coords = Vec::with_capacity(n);
        for idx in 0..n {
            let g = unravel(idx, &cnt, dim);
            let mut p = [T::zero(); MAX_DIM];
            for a in 0..dim {
                // last node lands exactly on the extent
                p[a] = if g[a] + 1 == cnt[a] { ext[a] } else { T::lit(g[a] as f64) * spacing[a] };
            }
            coords.push(p);
        }
        let mut cloud = Self {
            dim,
            counts: cnt,
            extents: ext,
            spacing,
            coords,
            tags: vec![BoundaryTag::Interior; n],
            segments: segments.to_vec(),
        };
        for i in 0..n {
            let faces = cloud.faces_of(i);
            if faces.is_empty() {
                continue;
            }
            let seg = segments.iter().position(|s| {
                faces.contains(&s.face)
                    && s.range.is_none_or(|(axis, lo, hi)| {
                        let c = cloud.coords[i][axis];
                        let tol = cloud.spacing[axis] * T::lit(1e-9);
                        c >= lo - tol && c <= hi + tol
                    })
            });
            let Some(s) = seg else {
                return Err(CloudError::UncoveredBoundary { node: i });
            };
            cloud.tags[i] = match segments[s].kind {
                SegmentKind::Dirichlet => BoundaryTag::Dirichlet(s),
                SegmentKind::Neumann => BoundaryTag::Neumann(s),
            };
        }
        Ok(cloud)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub fn extents(&self) -> &[T] {
        &self.extents[..self.dim]
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing[..self.dim]
    }

    pub fn vertical_axis(&self) -> usize {
        self.dim - 1
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i][..self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.coords.iter().map(move |p| &p[..self.dim])
    }

    /// Elevation of node `i`.
    pub fn z(&self, i: usize) -> T {
        self.coords[i][self.dim - 1]
    }

    /// Depth of node `i` below the top face.
    pub fn depth(&self, i: usize) -> T {
        self.extents[self.dim - 1] - self.z(i)
    }

    pub fn tag(&self, i: usize) -> BoundaryTag {
        self.tags[i]
    }

    pub fn tags(&self) -> &[BoundaryTag] {
        &self.tags
    }

    pub fn segments(&self) -> &[SegmentSpec<T>] {
        &self.segments
    }

    pub fn grid_index(&self, i: usize) -> [usize; MAX_DIM] {
        unravel(i, &self.counts, self.dim)
    }

    pub fn node_at(&self, g: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim).rev() {
            idx = idx * self.counts[a] + g[a];
        }
        idx
    }

    /// Left (`Side::Low`) or right neighbour of node `i` along `axis`.
    pub fn axis_neighbor(&self, i: usize, axis: usize, side: Side) -> Option<usize> {
        let mut g = self.grid_index(i);
        match side {
            Side::Low if g[axis] > 0 => g[axis] -= 1,
            Side::High if g[axis] + 1 < self.counts[axis] => g[axis] += 1,
            _ => return None,
        }
        Some(self.node_at(&g[..self.dim]))
    }

    /// All faces that node `i` lies on.
    pub fn faces_of(&self, i: usize) -> Vec<Face> {
        let g = self.grid_index(i);
        let mut out = Vec::new();
        for a in (0..self.dim).rev() {
            if g[a] == 0 {
                out.push(Face::new(a, Side::Low));
            }
            if g[a] + 1 == self.counts[a] {
                out.push(Face::new(a, Side::High));
            }
        }
        out
    }

    /// Nodes lying on `face`, in index order.
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        let target = match face.side {
            Side::Low => 0,
            Side::High => self.counts[face.axis] - 1,
        };
        (0..self.len()).filter(|&i| self.grid_index(i)[face.axis] == target).collect()
    }

    /// Outward unit normal of the segment owning boundary node `i`.
    pub fn outward_normal(&self, i: usize) -> Option<[T; MAX_DIM]> {
        let seg = self.tags[i].segment()?;
        let face = self.segments[seg].face;
        let mut n = [T::zero(); MAX_DIM];
        n[face.axis] = T::lit(face.outward_sign());
        Some(n)
    }

    /// Composite-trapezoid weights per node, divided by the horizontal
    /// extent so that sums are per unit surface area.
    pub fn quadrature_weights(&self) -> Vec<T> {
        let axis_weight = |a: usize, k: usize| -> T {
            let h = self.spacing[a];
            if k == 0 || k + 1 == self.counts[a] {
                h * T::lit(0.5)
            } else {
                h
            }
        };
        let mut horizontal = T::one();
        for a in 0..self.dim - 1 {
            horizontal = horizontal * self.extents[a];
        }
        (0..self.len())
            .map(|i| {
                let g = self.grid_index(i);
                let w = g[..self.dim].iter().enumerate().fold(T::one(), |w, (a, &k)| w * axis_weight(a, k));
                w / horizontal
            })
            .collect()
    }
}

fn unravel(mut idx: usize, counts: &[usize; MAX_DIM], dim: usize) -> [usize; MAX_DIM] {
    let mut g = [0usize; MAX_DIM];
    for a in 0..dim {
        g[a] = idx % counts[a];
        idx /= counts[a];
    }
    g
}

/// Builds a tensor grid; see [`NodeCloud::tensor_grid`].
pub fn build_tensor_grid<T: Real>(
    extents: &[T],
    counts: &[usize],
    segments: &[SegmentSpec<T>],
) -> Result<NodeCloud<T>, CloudError> {
    NodeCloud::tensor_grid(extents, counts, segments)
}

/// Influence domain of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StencilIndex {
    pub center: usize,
    /// Sorted by distance to the center, ties by node index; the center
    /// itself comes first.
    pub neighbors: Vec<usize>,
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    dist2: T,
    index: usize,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Candidate<T> {}
impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.partial_cmp(&other.dist2).unwrap_or(Ordering::Equal).then(self.index.cmp(&other.index))
    }
}

/// Static kd-tree over a point set, answering k-nearest queries ordered by
/// (distance, index).
pub struct KdTree<'a, T> {
    points: &'a [[T; MAX_DIM]],
    dim: usize,
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl<'a, T: Real> KdTree<'a, T> {
    /// Builds the tree over `points` (only the first `dim` coordinates are
    /// used), inserting them in the order given by `order`.
    pub fn build(points: &'a [[T; MAX_DIM]], dim: usize, order: &[usize]) -> Self {
        let mut tree = Self { points, dim, nodes: Vec::with_capacity(order.len()), root: None };
        let mut idx = order.to_vec();
        tree.root = tree.build_rec(&mut idx, 0);
        tree
    }

    fn build_rec(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % self.dim;
        let pts = self.points;
        // total order so that the tree shape does not depend on input order
        idx.sort_unstable_by(|&a, &b| {
            pts[a][axis].partial_cmp(&pts[b][axis]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        });
        let mid = idx.len() / 2;
        let point = idx[mid];
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(hi, depth + 1);
        self.nodes.push(KdNode { point, axis, left, right });
        Some(self.nodes.len() - 1)
    }

    fn dist2(&self, a: &[T], b: usize) -> T {
        let p = &self.points[b];
        (0..self.dim).fold(T::zero(), |acc, d| {
            let t = a[d] - p[d];
            acc + t * t
        })
    }

    /// The `k` nearest points to `query`, nearest first.
    pub fn nearest(&self, query: &[T], k: usize) -> Vec<usize> {
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(self.root, query, k, &mut heap);
        }
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        out.into_iter().map(|c| c.index).collect()
    }

    fn search(&self, node: Option<usize>, q: &[T], k: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        let Some(n) = node else { return };
        let node = &self.nodes[n];
        let cand = Candidate { dist2: self.dist2(q, node.point), index: node.point };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(cand);
        }
        let diff = q[node.axis] - self.points[node.point][node.axis];
        let (near, far) = if diff < T::zero() { (node.left, node.right) } else { (node.right, node.left) };
        self.search(near, q, k, heap);
        // `<=` keeps equal-distance candidates with smaller indices reachable
        if heap.len() < k || diff * diff <= heap.peek().expect("heap is non-empty").dist2 {
            self.search(far, q, k, heap);
        }
    }
}

/// Selects the `n_s` nearest nodes of every node with a kd-tree.
pub fn build_stencils<T: Real>(cloud: &NodeCloud<T>, n_s: usize) -> Result<Vec<StencilIndex>, CloudError> {
    let order: Vec<usize> = (0..cloud.len()).collect();
    build_stencils_with_order(cloud, n_s, &order)
}

/// As [`build_stencils`], inserting nodes into the kd-tree in `order`.
pub fn build_stencils_with_order<T: Real>(
    cloud: &NodeCloud<T>,
    n_s: usize,
    order: &[usize],
) -> Result<Vec<StencilIndex>, CloudError> {
    if n_s == 0 || n_s > cloud.len() {
        return Err(CloudError::StencilSize { n_s, n_nodes: cloud.len() });
    }
    let tree = KdTree::build(&cloud.coords, cloud.dim, order);
    let stencils = (0..cloud.len())
        .into_par_iter()
        .map(|c| StencilIndex { center: c, neighbors: tree.nearest(cloud.point(c), n_s) })
        .collect();
    Ok(stencils)
}

/// Largest center-to-member distance of a stencil.
pub fn stencil_radius<T: Real>(cloud: &NodeCloud<T>, s: &StencilIndex) -> T {
    let c = cloud.point(s.center);
    s.neighbors.iter().fold(T::zero(), |acc, &j| {
        let p = cloud.point(j);
        let d2 = c.iter().zip(p).fold(T::zero(), |a, (&x, &y)| a + (x - y) * (x - y));
        acc.max(d2.sqrt())
    })
}
