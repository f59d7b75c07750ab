use crate::pointvoxel::Point;

pub(crate) const LEAF_SIZE: usize = 16;

#[inline]
pub(crate) fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact nearest-neighbour index over a fixed point set.
///
/// Nodes split at the median of the axis with the largest extent; every
/// query returns the same index as a linear scan with lowest-index ties.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Point],
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Point]) -> Self {
        let mut tree = KdTree {
            points,
            perm: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let pts = self.points;
        let slice = &mut self.perm[start..end];
        slice.sort_unstable_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let value = pts[self.perm[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.perm[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let mut best = 0;
        for a in 1..3 {
            if ext[a] > ext[best] {
                best = a;
            }
        }
        best
    }

    /// Nearest point to `q` as `(index, squared distance)`.
    pub fn nearest(&self, q: &Point) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Point, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let d = sq_dist(q, &self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // Equal distances must still be visited for the index tie-break.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }

    /// Check that every point of each subtree lies on its side of each split.
    #[cfg(test)]
    fn slabs_hold(&self) -> bool {
        fn range(t: &KdTree<'_>, n: usize) -> (usize, usize) {
            match t.nodes[n] {
                Node::Leaf { start, end } => (start, end),
                Node::Split { left, right, .. } => (range(t, left).0, range(t, right).1),
            }
        }
        self.nodes.iter().all(|n| match *n {
            Node::Leaf { .. } => true,
            Node::Split { axis, value, left, right } => {
                let (ls, le) = range(self, left);
                let (rs, re) = range(self, right);
                self.perm[ls..le].iter().all(|&i| self.points[i][axis] <= value)
                    && self.perm[rs..re].iter().all(|&i| self.points[i][axis] >= value)
            }
        })
    }
}
