//! Minimum spanning trees with a fully deterministic tie-break.

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Kruskal over a dense symmetric weight function. Equal weights prefer the
/// lexicographically smaller `(i, j)` pair. Returned edges have `i < j` and
/// are sorted.
pub fn mst_from_weights(m: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            candidates.push((weight(i, j), i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut uf = UnionFind::new(m);
    let mut edges = Vec::with_capacity(m.saturating_sub(1));
    for (_, i, j) in candidates {
        if uf.union(i, j) {
            edges.push((i, j));
            if edges.len() + 1 == m {
                break;
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Euclidean MST over 2-D points, weighted by squared distance (same tree as
/// plain distance, without the square root).
pub fn mst(points: &[[f64; 2]]) -> Vec<(usize, usize)> {
    mst_from_weights(points.len(), |i, j| sq_dist(&points[i], &points[j]))
}

pub(crate) fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// True when `edges` form a spanning tree on `m` nodes.
pub fn is_spanning_tree(m: usize, edges: &[(usize, usize)]) -> bool {
    if m == 0 || edges.len() + 1 != m {
        return false;
    }
    let mut uf = UnionFind::new(m);
    edges.iter().all(|&(a, b)| a < m && b < m && uf.union(a, b))
}

pub fn degrees(m: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut d = vec![0; m];
    for &(a, b) in edges {
        d[a] += 1;
        d[b] += 1;
    }
    d
}

pub fn adjacency(m: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); m];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}
