//! Procedural meshes: test solids and the bundled car-body panel.

use std::collections::HashMap;

use super::geometry::Vec3;
use super::mesh::TriMesh;

/// Geodesic sphere centered at the origin with outward winding;
/// `20 * 4^subdivisions` triangles.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| {
            let key = if a < b { (a, b) } else { (b, a) };
            *cache.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriMesh::new(vertices, faces).expect("icosphere is well formed")
}

/// Heightfield sheet over `[x0, x1] x [y0, y1]` with `nx x ny` vertices,
/// normals pointing up (+z).
pub fn heightfield(
    x_range: (f64, f64),
    y_range: (f64, f64),
    nx: usize,
    ny: usize,
    height: impl Fn(f64, f64) -> f64,
) -> TriMesh {
    let (vertices, triangles) = heightfield_parts(x_range, y_range, nx, ny, height);
    TriMesh::new(vertices, triangles).expect("heightfield is well formed")
}

fn heightfield_parts(
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    nx: usize,
    ny: usize,
    height: impl Fn(f64, f64) -> f64,
) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = y0 + (y1 - y0) * j as f64 / (ny - 1) as f64;
        for i in 0..nx {
            let x = x0 + (x1 - x0) * i as f64 / (nx - 1) as f64;
            vertices.push(Vec3::new(x, y, height(x, y)));
        }
    }
    let id = |i: usize, j: usize| (j * nx + i) as u32;
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (vertices, triangles)
}

/// Flat square plate at height `z`, half-size `half`, `n x n` cells.
pub fn plate(half: f64, z: f64, n: usize) -> TriMesh {
    heightfield((-half, half), (-half, half), n + 1, n + 1, |_, _| z)
}

/// Axis-aligned unit cube `[0, 1]^3` with outward winding.
pub fn unit_cube() -> TriMesh {
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let vertices = vec![
        v(0.0, 0.0, 0.0),
        v(1.0, 0.0, 0.0),
        v(1.0, 1.0, 0.0),
        v(0.0, 1.0, 0.0),
        v(0.0, 0.0, 1.0),
        v(1.0, 0.0, 1.0),
        v(1.0, 1.0, 1.0),
        v(0.0, 1.0, 1.0),
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriMesh::new(vertices, triangles).expect("cube is well formed")
}

/// Layout of the bundled car-body panel: a crowned roof/hood section.
pub struct CarBodyPanel;

impl CarBodyPanel {
    pub const X_RANGE: (f64, f64) = (-0.4, 0.4);
    pub const Y_RANGE: (f64, f64) = (-0.25, 0.25);
    pub const NX: usize = 101;
    pub const NY: usize = 51;
    /// Grid row carrying the seam and its column span.
    pub const SEAM_ROW: usize = 30;
    pub const SEAM_COLUMNS: (usize, usize) = (12, 88);

    pub fn height(x: f64, y: f64) -> f64 {
        let (_, xh) = Self::X_RANGE;
        let (_, yh) = Self::Y_RANGE;
        -0.16 + 0.03 * (1.0 - (x / xh).powi(2)) * (1.0 - (y / yh).powi(2))
    }

    /// The panel mesh: `2 * 100 * 50 = 10 000` triangles.
    pub fn mesh() -> TriMesh {
        heightfield(Self::X_RANGE, Self::Y_RANGE, Self::NX, Self::NY, Self::height)
    }

    /// Seam polyline running along mesh vertices of one grid row, so it lies
    /// exactly on the faceted surface.
    pub fn seam() -> Vec<Vec3> {
        let (vertices, _) =
            heightfield_parts(Self::X_RANGE, Self::Y_RANGE, Self::NX, Self::NY, Self::height);
        let (c0, c1) = Self::SEAM_COLUMNS;
        (c0..=c1)
            .map(|i| vertices[Self::SEAM_ROW * Self::NX + i])
            .collect()
    }
}
