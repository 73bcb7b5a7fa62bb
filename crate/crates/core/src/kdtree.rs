//! Static k-d tree for exact Euclidean nearest-neighbour queries.

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    /// `points` is row-major with `dim` columns.
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim));
        let mut order: Vec<usize> = (0..points.len() / dim).collect();
        let len = order.len();
        let root = build(points, dim, &mut order, 0, len);
        Self {
            points,
            dim,
            order,
            root,
        }
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Distance from `query` to its nearest point, skipping row `exclude`.
    /// Infinite when the tree holds no other point.
    pub fn nearest_distance(&self, query: &[f64], exclude: Option<usize>) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.root, query, exclude, &mut best);
        best.sqrt()
    }

    fn search(&self, node: &Node, query: &[f64], exclude: Option<usize>, best: &mut f64) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let mut d = 0.0;
                    for (a, b) in self.point(i).iter().zip(query) {
                        d += (a - b) * (a - b);
                        if d >= *best {
                            break;
                        }
                    }
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[*axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, exclude, best);
                if diff * diff < *best {
                    self.search(far, query, exclude, best);
                }
            }
        }
    }
}

fn build(points: &[f64], dim: usize, order: &mut [usize], start: usize, end: usize) -> Node {
    if end - start <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let slice = &mut order[start..end];
    let mut axis = 0;
    let mut widest = -1.0;
    for d in 0..dim {
        let (lo, hi) = slice
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points[i * dim + d];
                (lo.min(v), hi.max(v))
            });
        if hi - lo > widest {
            widest = hi - lo;
            axis = d;
        }
    }
    if widest <= 0.0 {
        // All points coincide.
        return Node::Leaf { start, end };
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a * dim + axis].total_cmp(&points[b * dim + axis])
    });
    let value = points[slice[mid] * dim + axis];
    let left = build(points, dim, order, start, start + mid);
    let right = build(points, dim, order, start + mid, end);
    Node::Split {
        axis,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}
