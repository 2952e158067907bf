//! Marching cubes over a sampled density lattice.
//!
//! The 256-case triangle table is derived at run time from a face rule: on
//! every cube face, walking the corners counter-clockwise as seen from
//! outside, each entry into the inside region is joined to the next exit.
//! Adjacent cubes see a shared face with opposite winding and arrive at the
//! same segments, so the surface closes up across cells. On ambiguous faces
//! the rule keeps the two inside corners apart.
//!
//! Corners are numbered 0 (0,0,0), 1 (1,0,0), 2 (1,1,0), 3 (0,1,0) on the
//! bottom face and 4..7 likewise on the top. Edges 0..3 run around the
//! bottom, 4..7 around the top, and 8..11 are the verticals above 0..3.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::geometry::SceneBox;
use crate::{Error, Result, Vec3};

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Face corners, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 7, 6, 2],
    [0, 4, 7, 3],
    [1, 2, 6, 5],
];

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
        .expect("face corners are always joined by a cube edge")
}

/// Triangles, as cube-edge triples, for one corner configuration. Bit `c`
/// of `case` is set when corner `c` is inside.
fn case_triangles(case: u8) -> Vec<[u8; 3]> {
    let inside = |c: usize| case & (1 << c) != 0;
    let mut next = [usize::MAX; 12];
    for face in FACES {
        let mut crossings = Vec::with_capacity(4);
        for k in 0..4 {
            let (a, b) = (face[k], face[(k + 1) % 4]);
            if inside(a) != inside(b) {
                crossings.push((edge_between(a, b), !inside(a)));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        // rotate so an entry comes first; entries and exits alternate
        let start = crossings.iter().position(|c| c.1).expect("closed walk has an entry");
        crossings.rotate_left(start);
        for pair in crossings.chunks_exact(2) {
            next[pair[0].0] = pair[1].0;
        }
    }
    let mut tris = Vec::new();
    let mut visited = [false; 12];
    for start in 0..12 {
        if next[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut e = start;
        while !visited[e] {
            visited[e] = true;
            ring.push(e as u8);
            e = next[e];
        }
        for k in 1..ring.len() - 1 {
            tris.push([ring[0], ring[k], ring[k + 1]]);
        }
    }
    tris
}

/// The full 256-entry case table.
pub fn triangle_table() -> Vec<Vec<[u8; 3]>> {
    (0..=255u8).map(case_triangles).collect()
}

/// Densities on a regular lattice spanning a box, x index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    dims: [usize; 3],
    bounds: SceneBox,
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(dims: [usize; 3], bounds: SceneBox, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig(format!(
                "density grid needs at least 2 points per axis, got {dims:?}"
            )));
        }
        if dims[0] * dims[1] * dims[2] != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "grid {dims:?} needs {} values, got {}",
                dims[0] * dims[1] * dims[2],
                values.len()
            )));
        }
        Ok(Self {
            dims,
            bounds,
            values,
        })
    }

    /// Samples `f` at every lattice point.
    pub fn from_fn(dims: [usize; 3], bounds: SceneBox, mut f: impl FnMut(&Vec3) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(&crate::render::lattice_point(&bounds, dims, i, j, k)));
                }
            }
        }
        Self::new(dims, bounds, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> &SceneBox {
        &self.bounds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        crate::render::lattice_point(&self.bounds, self.dims, i, j, k)
    }

    /// Distance between neighbouring lattice points along each axis.
    pub fn spacing(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            e.x / (self.dims[0] - 1) as f64,
            e.y / (self.dims[1] - 1) as f64,
            e.z / (self.dims[2] - 1) as f64,
        )
    }
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Optional per-vertex value, e.g. the thermal reading at the vertex.
    pub scalars: Option<Vec<f64>>,
}

impl TriangleMesh {
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(bad) = self.triangles.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::ShapeMismatch(format!(
                "triangle index {bad} out of range for {n} vertices"
            )));
        }
        if let Some(s) = &self.scalars {
            if s.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} scalars for {n} vertices",
                    s.len()
                )));
            }
        }
        Ok(())
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unnormalized face normal (right-hand rule on the winding).
    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a))
    }
}

/// Area at or below which a triangle is dropped as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum VertexKey {
    /// Lattice edge: lower endpoint index and axis.
    Edge(usize, usize),
    /// The crossing landed exactly on a lattice point.
    Corner(usize),
}

/// Extracts the `iso` level set; "inside" means density above `iso`, and
/// triangle normals point towards lower density.
pub fn marching_cubes(grid: &DensityGrid, iso: f64) -> TriangleMesh {
    let table = triangle_table();
    let [nx, ny, nz] = grid.dims;
    let mut keys: BTreeMap<VertexKey, usize> = BTreeMap::new();
    let mut mesh = TriangleMesh::default();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let lattice = |c: usize| {
                    let o = CORNERS[c];
                    (i + o[0], j + o[1], k + o[2])
                };
                let mut case = 0u8;
                for c in 0..8 {
                    let (a, b, cc) = lattice(c);
                    if grid.get(a, b, cc) > iso {
                        case |= 1 << c;
                    }
                }
                let tris = &table[case as usize];
                if tris.is_empty() {
                    continue;
                }
                let mut vertex = |e: u8| -> usize {
                    let [ca, cb] = EDGES[e as usize];
                    let pa = lattice(ca);
                    let pb = lattice(cb);
                    let ia = grid.index(pa.0, pa.1, pa.2);
                    let ib = grid.index(pb.0, pb.1, pb.2);
                    let (va, vb) = (grid.values[ia], grid.values[ib]);
                    let t = (iso - va) / (vb - va);
                    let key = if t <= 0.0 {
                        VertexKey::Corner(ia)
                    } else if t >= 1.0 {
                        VertexKey::Corner(ib)
                    } else {
                        let axis = (0..3).find(|&d| CORNERS[ca][d] != CORNERS[cb][d]).unwrap_or(0);
                        VertexKey::Edge(ia.min(ib), axis)
                    };
                    *keys.entry(key).or_insert_with(|| {
                        let a = grid.point(pa.0, pa.1, pa.2);
                        let b = grid.point(pb.0, pb.1, pb.2);
                        let p = match key {
                            VertexKey::Corner(idx) if idx == ia => a,
                            VertexKey::Corner(_) => b,
                            VertexKey::Edge(..) => a + (b - a) * t,
                        };
                        mesh.vertices.push(p);
                        mesh.vertices.len() - 1
                    })
                };
                for tri in tris {
                    let idx = [vertex(tri[0]), vertex(tri[1]), vertex(tri[2])];
                    mesh.triangles.push(idx);
                }
            }
        }
    }
    cleanup(&mut mesh);
    mesh
}

/// Drops triangles with repeated indices or area at most
/// [`DEGENERATE_AREA`].
fn cleanup(mesh: &mut TriangleMesh) {
    let vertices = &mesh.vertices;
    mesh.triangles.retain(|&[a, b, c]| {
        a != b
            && b != c
            && a != c
            && 0.5 * (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a])).norm() > DEGENERATE_AREA
    });
}

/// Edge-incidence summary of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WatertightReport {
    pub edges: usize,
    /// Edges used by a single triangle.
    pub boundary_edges: usize,
    /// Edges used by three or more triangles.
    pub non_manifold_edges: usize,
}

impl WatertightReport {
    pub fn is_watertight(&self) -> bool {
        self.boundary_edges == 0 && self.non_manifold_edges == 0
    }
}

/// Counts how many triangles use each undirected edge.
pub fn watertight_check(mesh: &TriangleMesh) -> WatertightReport {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &[a, b, c] in &mesh.triangles {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            *counts.entry((p.min(q), p.max(q))).or_default() += 1;
        }
    }
    WatertightReport {
        edges: counts.len(),
        boundary_edges: counts.values().filter(|&&n| n == 1).count(),
        non_manifold_edges: counts.values().filter(|&&n| n > 2).count(),
    }
}

/// Half of the 99th-percentile (nearest-rank) grid density.
pub fn default_iso(grid: &DensityGrid) -> f64 {
    let mut sorted = grid.values.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = libm::ceil(0.99 * sorted.len() as f64) as usize;
    0.5 * sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faces_are_outward() {
        for face in FACES {
            let p = |c: usize| Vec3::new(CORNERS[c][0] as f64, CORNERS[c][1] as f64, CORNERS[c][2] as f64);
            let n = (p(face[1]) - p(face[0])).cross(&(p(face[2]) - p(face[1])));
            let centroid = (p(face[0]) + p(face[1]) + p(face[2]) + p(face[3])) / 4.0;
            assert!(n.dot(&(centroid - Vec3::repeat(0.5))) > 0.0);
        }
    }

    #[test]
    fn trivial_cases() {
        let table = triangle_table();
        assert!(table[0].is_empty());
        assert!(table[255].is_empty());
        assert_eq!(table[1].len(), 1);
        // two adjacent inside corners form a quad
        assert_eq!(table[0b11].len(), 2);
        assert!(table.iter().all(|t| t.len() <= 12));
    }

    #[test]
    fn single_corner_normal_points_away() {
        let tri = case_triangles(1)[0];
        let mid = |e: u8| {
            let [a, b] = EDGES[e as usize];
            let p = |c: usize| Vec3::new(CORNERS[c][0] as f64, CORNERS[c][1] as f64, CORNERS[c][2] as f64);
            (p(a) + p(b)) * 0.5
        };
        let (a, b, c) = (mid(tri[0]), mid(tri[1]), mid(tri[2]));
        let n = (b - a).cross(&(c - a));
        assert!(n.dot(&Vec3::repeat(1.0)) > 0.0);
    }

    #[test]
    fn every_case_closes_inside_the_cube() {
        // inside one cube each fan edge is used twice and each face segment
        // once, so boundary edges of the case must be face segments
        for (case, tris) in triangle_table().iter().enumerate() {
            let mut counts: BTreeMap<(u8, u8), usize> = BTreeMap::new();
            for t in tris {
                for (p, q) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                    *counts.entry((p.min(q), p.max(q))).or_default() += 1;
                }
            }
            for (&(p, q), &n) in &counts {
                assert!(n <= 2, "case {case}");
                if n == 1 {
                    let shared = FACES.iter().any(|f| {
                        let on = |e: u8| EDGES[e as usize].iter().all(|c| f.contains(c));
                        on(p) && on(q)
                    });
                    assert!(shared, "case {case}: edge {p}-{q} is not on a face");
                }
            }
        }
    }

    #[test]
    fn tetrahedron_is_watertight() {
        let mesh = TriangleMesh {
            vertices: vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(1.0, -1.0, -1.0), Vec3::new(-1.0, 1.0, -1.0), Vec3::new(-1.0, -1.0, 1.0)],
            triangles: vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
            scalars: None,
        };
        assert!(watertight_check(&mesh).is_watertight());
        let single = TriangleMesh {
            triangles: vec![[0, 1, 2]],
            ..mesh
        };
        let r = watertight_check(&single);
        assert_eq!(r.boundary_edges, 3);
        assert!(!r.is_watertight());
    }

    #[test]
    fn empty_results() {
        let b = SceneBox::cube(1.0).unwrap();
        let g = DensityGrid::new([3, 3, 3], b, vec![0.5; 27]).unwrap();
        assert!(marching_cubes(&g, 0.2).triangles.is_empty());
        assert!(marching_cubes(&g, 0.7).triangles.is_empty());
    }

    #[test]
    fn percentile_iso() {
        let b = SceneBox::cube(1.0).unwrap();
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let g = DensityGrid::new([10, 10, 10], b, values).unwrap();
        assert_eq!(default_iso(&g), 0.5 * 989.0);
    }
}
