use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{ReconError, Result};
use crate::grid::ScalarGrid;

/// Indexed triangle mesh. Triangles are counter-clockwise seen from outside,
/// so `(b - a) x (c - a)` points away from the reconstructed solid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

/// Summary of the edge structure of a mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeStats {
    pub edges: usize,
    /// Edges used by exactly one triangle.
    pub border: usize,
    /// Edges used by three or more triangles.
    pub non_manifold: usize,
    /// Directed edges that occur twice (neighbours with clashing orientation).
    pub misoriented: usize,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, triangles };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some((t, _)) = self
            .triangles
            .iter()
            .enumerate()
            .find(|(_, tri)| tri.iter().any(|&i| i as usize >= n))
        {
            return Err(ReconError::Input(format!("triangle {t} references a vertex beyond {n}")));
        }
        if self.vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(ReconError::Input("mesh has non-finite vertex coordinates".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Point3<f64>; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    /// Unnormalized face normal, twice the triangle area in length.
    pub fn area_vector(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| 0.5 * self.area_vector(t).norm()).sum()
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    fn directed_edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut counts = HashMap::with_capacity(self.triangles.len() * 3);
        for tri in &self.triangles {
            for k in 0..3 {
                *counts.entry((tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn edge_stats(&self) -> EdgeStats {
        let directed = self.directed_edge_counts();
        let mut undirected: HashMap<(u32, u32), u32> = HashMap::with_capacity(directed.len());
        let mut misoriented = 0;
        for (&(a, b), &c) in &directed {
            *undirected.entry((a.min(b), a.max(b))).or_insert(0) += c;
            if c > 1 {
                misoriented += 1;
            }
        }
        EdgeStats {
            edges: undirected.len(),
            border: undirected.values().filter(|&&c| c == 1).count(),
            non_manifold: undirected.values().filter(|&&c| c > 2).count(),
            misoriented,
        }
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let s = self.edge_stats();
        !self.is_empty() && s.border == 0 && s.non_manifold == 0
    }

    /// Every interior edge is traversed once in each direction.
    pub fn is_consistently_oriented(&self) -> bool {
        let directed = self.directed_edge_counts();
        directed.iter().all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)).is_none_or(|&r| r == 1))
    }

    /// `V - E + F` over the vertices referenced by triangles.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &i in tri {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_stats().edges as i64 + self.triangles.len() as i64
    }

    /// Per-triangle component labels (triangles sharing an edge are
    /// connected) and the component count. Labels follow first appearance.
    pub fn component_labels(&self) -> (Vec<usize>, usize) {
        let nt = self.triangles.len();
        let mut parent: Vec<usize> = (0..nt).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut owner: HashMap<(u32, u32), usize> = HashMap::with_capacity(nt * 3 / 2);
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                match owner.get(&(a.min(b), a.max(b))) {
                    Some(&o) => {
                        let (ra, rb) = (find(&mut parent, o), find(&mut parent, t));
                        if ra != rb {
                            parent[ra.max(rb)] = ra.min(rb);
                        }
                    }
                    None => {
                        owner.insert((a.min(b), a.max(b)), t);
                    }
                }
            }
        }
        let mut label = vec![usize::MAX; nt];
        let mut root_label = HashMap::new();
        for (t, l) in label.iter_mut().enumerate() {
            let r = find(&mut parent, t);
            let next = root_label.len();
            *l = *root_label.entry(r).or_insert(next);
        }
        let count = root_label.len();
        (label, count)
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().1
    }

    /// Closed, edge-manifold, consistently oriented, one component, genus 0.
    pub fn is_closed_sphere(&self) -> bool {
        self.is_watertight()
            && self.is_consistently_oriented()
            && self.component_count() == 1
            && self.euler_characteristic() == 2
    }

    /// Fraction of triangles whose normal points toward decreasing `field`:
    /// the field sampled at `centroid + delta*n` is below the value at
    /// `centroid - delta*n`. Triangles whose probes leave the grid count as
    /// failures.
    pub fn outward_fraction(&self, field: &ScalarGrid, delta: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let ok = (0..self.triangles.len())
            .filter(|&t| {
                let [a, b, c] = self.corners(t);
                let n = self.area_vector(t);
                let len = n.norm();
                if len == 0.0 {
                    return false;
                }
                let centroid = Point3::from((a.coords + b.coords + c.coords) / 3.0);
                let step = n * (delta / len);
                match (field.sample(&(centroid + step)), field.sample(&(centroid - step))) {
                    (Some(outside), Some(inside)) => outside < inside,
                    _ => false,
                }
            })
            .count();
        ok as f64 / self.triangles.len() as f64
    }

    /// Smallest triangle area.
    pub fn min_triangle_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| 0.5 * self.area_vector(t).norm())
            .fold(f64::INFINITY, f64::min)
    }
}
