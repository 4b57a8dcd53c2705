//! Marching cubes by face-segment tracing.
//!
//! Instead of a 256-entry triangle table, every cell derives its polygons
//! from the iso-segments on its six faces. A face with two crossings has one
//! segment; a face with four crossings is resolved with the asymptotic
//! decider, which only looks at the four face values, so both cells sharing
//! the face choose the same segments. Each crossing edge lies on two faces
//! of the cell and therefore has exactly two segment neighbours, so the
//! segments close into loops. Loops are oriented from the face geometry and
//! fan-triangulated.
//!
//! Vertices are keyed by grid edge (`3 * lower vertex index + axis`), and
//! keys are produced in increasing order plane by plane, which makes vertex
//! numbering independent of the thread count.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::mesh::TriangleMesh;
use crate::grid::{GridDims, ScalarGrid};

/// Corner `c` of a cell sits at offset `(c & 1, (c >> 1) & 1, c >> 2)`.
const CORNER: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Cell edges as (lower corner, upper corner, axis).
const EDGE: [(usize, usize, usize); 12] = [
    (0, 1, 0),
    (2, 3, 0),
    (4, 5, 0),
    (6, 7, 0),
    (0, 2, 1),
    (1, 3, 1),
    (4, 6, 1),
    (5, 7, 1),
    (0, 4, 2),
    (1, 5, 2),
    (2, 6, 2),
    (3, 7, 2),
];

/// Faces as a cyclic corner order plus the outward normal of the cell face.
const FACE: [([usize; 4], [i8; 3]); 6] = [
    ([0, 2, 6, 4], [-1, 0, 0]),
    ([1, 3, 7, 5], [1, 0, 0]),
    ([0, 1, 5, 4], [0, -1, 0]),
    ([2, 3, 7, 6], [0, 1, 0]),
    ([0, 1, 3, 2], [0, 0, -1]),
    ([4, 5, 7, 6], [0, 0, 1]),
];

const fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut e = 0;
    while e < 12 {
        if EDGE[e].0 == lo && EDGE[e].1 == hi {
            return e;
        }
        e += 1;
    }
    panic!("corners are not adjacent");
}

/// Edge ids along each face cycle: edge `k` joins corners `k` and `k+1`.
const FACE_EDGES: [[usize; 4]; 6] = {
    let mut out = [[0; 4]; 6];
    let mut f = 0;
    while f < 6 {
        let q = FACE[f].0;
        let mut k = 0;
        while k < 4 {
            out[f][k] = edge_between(q[k], q[(k + 1) % 4]);
            k += 1;
        }
        f += 1;
    }
    out
};

/// Interpolation parameter along an edge from its lower endpoint, kept
/// strictly inside the edge. When a grid value equals the isovalue, the
/// vertices on its edges would otherwise collapse onto that grid vertex and
/// produce zero-area triangles; with this guard three such vertices still
/// span about `3.5e-12 h^2`, while the field at a vertex moves by at most
/// `GUARD * |f1 - f0|`.
#[inline]
fn edge_parameter(f0: f64, f1: f64, iso: f64) -> f64 {
    const GUARD: f64 = 2e-6;
    ((iso - f0) / (f1 - f0)).clamp(GUARD, 1.0 - GUARD)
}

/// Asymptotic decider: are the two inside corners on the diagonal of a face
/// joined through the face's bilinear saddle?
#[inline]
fn inside_connected(f: [f64; 4], iso: f64) -> bool {
    let den = f[0] + f[2] - f[1] - f[3];
    if den == 0.0 {
        return false;
    }
    let saddle = (f[0] * f[2] - f[1] * f[3]) / den;
    saddle > iso
}

/// One segment on a face, joining two cell edges.
#[derive(Clone, Copy)]
struct Segment {
    a: usize,
    b: usize,
    face: usize,
}

/// Iso-segments on all faces of a cell.
fn cell_segments(val: &[f64; 8], iso: f64, out: &mut Vec<Segment>) {
    out.clear();
    for (f, (q, _)) in FACE.iter().enumerate() {
        let fv = q.map(|c| val[c]);
        let inside = fv.map(|v| v > iso);
        let crossing: Vec<usize> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).collect();
        let e = FACE_EDGES[f];
        match crossing.len() {
            0 => {}
            2 => out.push(Segment { a: e[crossing[0]], b: e[crossing[1]], face: f }),
            4 => {
                // corners alternate; cut off the pair that is not connected
                let connected = inside_connected(
                    if inside[0] { fv } else { [fv[1], fv[2], fv[3], fv[0]] },
                    iso,
                );
                for k in 0..4 {
                    // corner k is bounded by face edges k-1 and k
                    if inside[k] != connected {
                        out.push(Segment { a: e[(k + 3) % 4], b: e[k], face: f });
                    }
                }
            }
            _ => unreachable!("a closed face cycle has an even number of crossings"),
        }
    }
}

fn corner_point(c: usize) -> Vector3<f64> {
    let [x, y, z] = CORNER[c];
    Vector3::new(x as f64, y as f64, z as f64)
}

fn edge_midpoint(e: usize) -> Vector3<f64> {
    0.5 * (corner_point(EDGE[e].0) + corner_point(EDGE[e].1))
}

/// Chain segments into closed loops of edge ids, each oriented
/// counter-clockwise around the outward (decreasing-field) normal.
fn trace_loops(segs: &[Segment], inside: &[bool; 8], loops: &mut Vec<Vec<usize>>) {
    loops.clear();
    // every crossing edge has exactly two incident segments
    let mut nbr = [[usize::MAX; 2]; 12];
    for (s, seg) in segs.iter().enumerate() {
        for e in [seg.a, seg.b] {
            let slot = if nbr[e][0] == usize::MAX { 0 } else { 1 };
            debug_assert_eq!(nbr[e][slot], usize::MAX);
            nbr[e][slot] = s;
        }
    }
    let mut used = vec![false; segs.len()];
    for start in 0..12 {
        if nbr[start][0] == usize::MAX || used[nbr[start][0]] {
            continue;
        }
        let first = nbr[start][0];
        let mut path = vec![start];
        let mut cur = start;
        let mut seg = first;
        loop {
            used[seg] = true;
            let s = segs[seg];
            let next = if s.a == cur { s.b } else { s.a };
            if next == start {
                break;
            }
            path.push(next);
            seg = if nbr[next][0] == seg { nbr[next][1] } else { nbr[next][0] };
            cur = next;
        }
        // orient from the first segment: the surface lies on the cell side of
        // the face, and the inside corner of the start edge must be on the
        // right of the segment seen from outside the solid
        let (a, b) = (edge_midpoint(start), edge_midpoint(path[1]));
        let n = FACE[segs[first].face].1;
        let n = Vector3::new(f64::from(n[0]), f64::from(n[1]), f64::from(n[2]));
        let (lo, hi, _) = EDGE[start];
        let c_in = corner_point(if inside[lo] { lo } else { hi });
        if n.cross(&(b - a)).dot(&(c_in - a)) > 0.0 {
            path.reverse();
        }
        loops.push(path);
    }
}

/// Faces of the cell containing edge `e`, as a bit mask.
const EDGE_FACES: [u8; 12] = {
    let mut out = [0u8; 12];
    let mut e = 0;
    while e < 12 {
        let mut f = 0;
        while f < 6 {
            let mut k = 0;
            while k < 4 {
                if FACE_EDGES[f][k] == e {
                    out[e] |= 1 << f;
                }
                k += 1;
            }
            f += 1;
        }
        e += 1;
    }
    out
};

/// Triangulation cost: number of diagonals lying on a cell face, then the
/// worst misalignment of a triangle normal with the loop normal.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Cost(u32, f64);

impl Cost {
    fn join(self, other: Cost) -> Cost {
        Cost(self.0 + other.0, self.1.max(other.1))
    }
}

/// Triangulate a loop of edge vertices. A diagonal between two vertices on
/// a common cell face lies in that face and could be chosen by the
/// neighbouring cell as well, which would make the edge non-manifold, so
/// such diagonals are avoided first; among the rest the triangulation whose
/// worst triangle best follows the loop's area vector wins. Ties go to the
/// smallest split index, which keeps the result deterministic.
fn triangulate(verts: &[Point3<f64>], edges: &[usize], out: &mut Vec<[usize; 3]>) {
    let m = verts.len();
    if m == 3 {
        out.push([0, 1, 2]);
        return;
    }
    let mut newell = Vector3::zeros();
    for k in 1..m - 1 {
        newell += (verts[k] - verts[0]).cross(&(verts[k + 1] - verts[0]));
    }
    let nlen = newell.norm();
    let tri = |i: usize, j: usize, k: usize| {
        let n = (verts[j] - verts[i]).cross(&(verts[k] - verts[i]));
        let len = n.norm() * nlen;
        if len > 0.0 {
            -n.dot(&newell) / len
        } else {
            1.0
        }
    };
    let diag = |i: usize, j: usize| {
        let adjacent = j == i + 1 || (i == 0 && j == m - 1);
        u32::from(!adjacent && EDGE_FACES[edges[i]] & EDGE_FACES[edges[j]] != 0)
    };
    // best[i][j]: triangulation of the sub-polygon i..=j, closed by chord (i,j)
    let mut best = vec![vec![Cost(0, f64::NEG_INFINITY); m]; m];
    let mut split = vec![vec![0usize; m]; m];
    for len in 2..m {
        for i in 0..m - len {
            let j = i + len;
            let mut choice: Option<(Cost, usize)> = None;
            for k in i + 1..j {
                let c = best[i][k]
                    .join(best[k][j])
                    .join(Cost(diag(i, k) + diag(k, j), tri(i, k, j)));
                if choice.is_none_or(|(b, _)| c < b) {
                    choice = Some((c, k));
                }
            }
            let (c, k) = choice.expect("non-empty range");
            best[i][j] = c;
            split[i][j] = k;
        }
    }
    let mut stack = vec![(0, m - 1)];
    while let Some((i, j)) = stack.pop() {
        if j <= i + 1 {
            continue;
        }
        let k = split[i][j];
        out.push([i, k, j]);
        stack.push((i, k));
        stack.push((k, j));
    }
}

/// Crossing edges owned by the vertices of plane `z`, with positions.
fn plane_edges(field: &ScalarGrid, iso: f64, z: usize) -> Vec<(u64, Point3<f64>)> {
    let frame = field.frame();
    let dims = frame.dims;
    let [nx, ny, nz] = dims.as_array();
    let strides = dims.strides();
    let data = field.data();
    let mut out = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            let i = dims.index(x, y, z);
            let f0 = data[i];
            let xyz = [x, y, z];
            for axis in 0..3 {
                if xyz[axis] + 1 >= [nx, ny, nz][axis] {
                    continue;
                }
                let f1 = data[i + strides[axis]];
                if (f0 > iso) == (f1 > iso) {
                    continue;
                }
                let t = edge_parameter(f0, f1, iso);
                let mut p = frame.world(x, y, z);
                p[axis] += t * frame.h;
                out.push((3 * i as u64 + axis as u64, p));
            }
        }
    }
    out
}

fn cell_triangles(
    field: &ScalarGrid,
    iso: f64,
    z: usize,
    keys: &[u64],
    positions: &[Point3<f64>],
    min_area2: f64,
) -> Vec<[u32; 3]> {
    let dims: GridDims = field.dims();
    let [nx, ny, _] = dims.as_array();
    let data = field.data();
    let mut tris = Vec::new();
    let mut segs = Vec::with_capacity(12);
    let mut loops = Vec::new();
    let mut fan = Vec::new();
    for y in 0..ny - 1 {
        for x in 0..nx - 1 {
            let mut val = [0.0; 8];
            let mut idx = [0usize; 8];
            for c in 0..8 {
                let [dx, dy, dz] = CORNER[c];
                idx[c] = dims.index(x + dx, y + dy, z + dz);
                val[c] = data[idx[c]];
            }
            let inside = val.map(|v| v > iso);
            if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                continue;
            }
            cell_segments(&val, iso, &mut segs);
            trace_loops(&segs, &inside, &mut loops);
            for path in &loops {
                let vid: Vec<u32> = path
                    .iter()
                    .map(|&e| {
                        let (lo, _, axis) = EDGE[e];
                        let key = 3 * idx[lo] as u64 + axis as u64;
                        keys.binary_search(&key).expect("crossing edge was registered") as u32
                    })
                    .collect();
                let pts: Vec<Point3<f64>> = vid.iter().map(|&v| positions[v as usize]).collect();
                fan.clear();
                triangulate(&pts, path, &mut fan);
                for t in &fan {
                    let n = (pts[t[1]] - pts[t[0]]).cross(&(pts[t[2]] - pts[t[0]]));
                    if n.norm_squared() >= min_area2 {
                        tris.push([vid[t[0]], vid[t[1]], vid[t[2]]]);
                    }
                }
            }
        }
    }
    tris
}

/// Extract the `iso` level set of `field`. The solid is `field > iso`;
/// triangles face toward decreasing values. Returns an empty mesh when the
/// level does not cross the field.
pub fn marching_cubes(field: &ScalarGrid, iso: f64) -> TriangleMesh {
    let dims = field.dims();
    let (lo, hi) = field.min_max();
    if !(iso > lo && iso < hi) {
        return TriangleMesh::default();
    }
    let planes: Vec<Vec<(u64, Point3<f64>)>> =
        (0..dims.nz).into_par_iter().map(|z| plane_edges(field, iso, z)).collect();
    let total: usize = planes.iter().map(Vec::len).sum();
    let mut keys = Vec::with_capacity(total);
    let mut positions = Vec::with_capacity(total);
    for plane in planes {
        for (k, p) in plane {
            keys.push(k);
            positions.push(p);
        }
    }
    debug_assert!(keys.windows(2).all(|w| w[0] < w[1]));

    // |cross| = 2 * area; drop triangles below 1e-12 h^2
    let h = field.frame().h;
    let min_area2 = (2e-12 * h * h).powi(2);
    let slabs: Vec<Vec<[u32; 3]>> = (0..dims.nz - 1)
        .into_par_iter()
        .map(|z| cell_triangles(field, iso, z, &keys, &positions, min_area2))
        .collect();
    let triangles = slabs.concat();
    TriangleMesh { vertices: positions, triangles }
}
