//! Exact 3-D nearest-neighbor search.

use nalgebra::Point3;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a borrowed point set. Splits at the median along the
/// widest axis; repeated coordinates are fine.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Point3<f64>],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point3<f64>]) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &mut self.order[start..end];
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = slice.len() / 2;
        let pts = self.points;
        slice.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = pts[slice[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the nearest point; `None` when empty.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Point3<f64>, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3<f64>], q: &Point3<f64>) -> f64 {
        points.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3<f64>> = (0..3000)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..0.5)))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..500 {
            let q = Point3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-1.0..1.0));
            let (i, d) = tree.nearest(&q).unwrap();
            assert_eq!(d, brute(&pts, &q));
            assert_eq!((pts[i] - q).norm_squared(), d);
        }
    }

    #[test]
    fn handles_repeated_coordinates() {
        // A planar grid: every point shares z, and rows share y.
        let pts: Vec<Point3<f64>> = (0..40).flat_map(|y| (0..40).map(move |x| Point3::new(x as f64, y as f64, 1.0))).collect();
        let tree = KdTree::new(&pts);
        let (i, d) = tree.nearest(&Point3::new(12.2, 30.9, 1.0)).unwrap();
        assert_eq!(pts[i], Point3::new(12.0, 31.0, 1.0));
        assert!((d - 0.05).abs() < 1e-12);
        let dup = vec![Point3::new(1.0, 2.0, 3.0); 100];
        assert_eq!(KdTree::new(&dup).nearest(&Point3::origin()).unwrap().1, 14.0);
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::new(&[]).nearest(&Point3::origin()).is_none());
    }
}
