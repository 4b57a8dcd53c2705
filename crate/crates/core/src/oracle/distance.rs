//! Exact point-to-mesh distances with a bounding-volume hierarchy.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::error::{ReconError, Result};
use crate::surface::TriangleMesh;

/// Closest point to `p` on triangle `(a, b, c)`, by Voronoi-region
/// classification of `p` against the vertices, edges and face.
pub fn closest_point_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Point3<f64>,
    hi: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Aabb { lo: Point3::from([f64::INFINITY; 3]), hi: Point3::from([f64::NEG_INFINITY; 3]) }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn distance_sq(&self, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Median-split BVH over the triangles of a mesh.
pub struct MeshDistance<'a> {
    mesh: &'a TriangleMesh,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> MeshDistance<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(ReconError::Input("distance query against an empty mesh".into()));
        }
        mesh.validate()?;
        let centroids: Vec<Vector3<f64>> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                (a.coords + b.coords + c.coords) / 3.0
            })
            .collect();
        let mut tree = MeshDistance { mesh, order: (0..mesh.triangles.len()).collect(), nodes: Vec::new() };
        let n = tree.order.len();
        tree.build(&centroids, 0, n);
        Ok(tree)
    }

    fn bounds_of(&self, start: usize, end: usize) -> Aabb {
        let mut b = Aabb::empty();
        for &t in &self.order[start..end] {
            for p in self.mesh.corners(t) {
                b.grow(&p);
            }
        }
        b
    }

    fn build(&mut self, centroids: &[Vector3<f64>], start: usize, end: usize) -> usize {
        let bounds = self.bounds_of(start, end);
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return id;
        }
        self.nodes.push(Node::Leaf { bounds, start, end });
        let ext = bounds.hi - bounds.lo;
        let axis = ext.imax();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
        });
        let left = self.build(centroids, start, mid);
        let right = self.build(centroids, mid, end);
        self.nodes[id] = Node::Inner { bounds, left, right };
        id
    }

    /// Squared distance from `p` to the nearest triangle.
    pub fn distance_sq(&self, p: &Point3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds().distance_sq(p) >= best {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let [a, b, c] = self.mesh.corners(t);
                        let d = (closest_point_on_triangle(p, &a, &b, &c) - p).norm_squared();
                        best = best.min(d);
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().distance_sq(p);
                    let dr = self.nodes[right].bounds().distance_sq(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }
}

/// Distance from every point to the mesh.
pub fn point_distances(mesh: &TriangleMesh, points: &[Point3<f64>]) -> Result<Vec<f64>> {
    let tree = MeshDistance::new(mesh)?;
    Ok(points.par_iter().map(|p| tree.distance_sq(p).sqrt()).collect())
}

/// Root mean square of the point-to-mesh distances.
pub fn rms_distance(mesh: &TriangleMesh, points: &[Point3<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(ReconError::Input("RMS distance of an empty point set".into()));
    }
    let tree = MeshDistance::new(mesh)?;
    let d2: Vec<f64> = points.par_iter().map(|p| tree.distance_sq(p)).collect();
    let sum: f64 = d2.iter().sum();
    Ok((sum / points.len() as f64).sqrt())
}

/// Reference implementation: every triangle for every point.
pub fn rms_distance_brute_force(mesh: &TriangleMesh, points: &[Point3<f64>]) -> Result<f64> {
    if mesh.is_empty() || points.is_empty() {
        return Err(ReconError::Input("RMS distance needs a mesh and points".into()));
    }
    let mut sum = 0.0;
    for p in points {
        let mut best = f64::INFINITY;
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.corners(t);
            best = best.min((closest_point_on_triangle(p, &a, &b, &c) - p).norm_squared());
        }
        sum += best;
    }
    Ok((sum / points.len() as f64).sqrt())
}
