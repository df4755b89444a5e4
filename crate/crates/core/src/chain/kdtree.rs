//! Minimal k-d tree for nearest-point queries in real coordinates.

pub(crate) struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl KdTree {
    /// `coords` holds `len / dim` points of `dim` coordinates each.
    pub fn new(coords: Vec<f64>, dim: usize) -> Self {
        let n = coords.len() / dim;
        let mut tree = Self {
            dim,
            coords,
            nodes: Vec::with_capacity(n),
            root: None,
        };
        let mut idx: Vec<usize> = (0..n).collect();
        tree.root = tree.build(&mut idx, 0);
        tree
    }

    fn coord(&self, p: usize, axis: usize) -> f64 {
        self.coords[p * self.dim + axis]
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % self.dim;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            self.coord(a, axis).total_cmp(&self.coord(b, axis))
        });
        let point = idx[mid];
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build(lo, depth + 1);
        let right = self.build(&mut hi[1..], depth + 1);
        self.nodes.push(Node {
            point,
            axis,
            left,
            right,
        });
        Some(self.nodes.len() - 1)
    }

    fn dist2(&self, p: usize, q: &[f64]) -> f64 {
        q.iter()
            .enumerate()
            .map(|(a, x)| (self.coord(p, a) - x).powi(2))
            .sum()
    }

    /// The `k` nearest points to `q`, closest first, as `(index, squared distance)`.
    pub fn nearest(&self, q: &[f64], k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        self.search(self.root, q, k, &mut best);
        best
    }

    fn search(&self, node: Option<usize>, q: &[f64], k: usize, best: &mut Vec<(usize, f64)>) {
        let Some(i) = node else { return };
        let n = &self.nodes[i];
        let d2 = self.dist2(n.point, q);
        if best.len() < k || d2 < best[best.len() - 1].1 {
            let pos = best.partition_point(|&(_, d)| d <= d2);
            best.insert(pos, (n.point, d2));
            best.truncate(k);
        }
        let diff = q[n.axis] - self.coord(n.point, n.axis);
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, q, k, best);
        if best.len() < k || diff * diff < best[best.len() - 1].1 {
            self.search(far, q, k, best);
        }
    }
}
