//! Triangle mesh with a bounding-volume hierarchy.
//!
//! Inside/outside classification uses angle-weighted pseudo-normals at the
//! closest feature, which gives a consistent sign on closed meshes and on open
//! sheets (the side the face normals point to is outside).

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::geometry::{
    closest_point_on_triangle, segment_triangle_closest, segment_triangle_hit, Aabb, Feature, Vec3,
};
use super::SceneError;

/// Triangles with area at or below this are dropped on load (m²).
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;
const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Reverse triangle winding (and therefore the outward side).
    pub flip_winding: bool,
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Clone, Debug)]
struct Node {
    aabb: Aabb,
    kind: NodeKind,
}

#[derive(Clone, Debug, Default)]
struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint {
    pub triangle: usize,
    pub point: Vec3,
    pub distance: f64,
    pub feature: Feature,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentHit {
    pub triangle: usize,
    /// Segment parameter in `[0, 1]`.
    pub t: f64,
    pub point: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentClosest {
    pub triangle: usize,
    /// Segment parameter of the closest point.
    pub s: f64,
    pub point: Vec3,
    pub distance: f64,
    pub feature: Feature,
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    face_normals: Vec<Vec3>,
    vertex_normals: Vec<Vec3>,
    edge_normals: HashMap<(u32, u32), Vec3>,
    bvh: Bvh,
    warnings: Vec<String>,
}

fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh, dropping zero-area triangles and building the BVH.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, SceneError> {
        Self::with_options(vertices, triangles, LoadOptions::default())
    }

    pub fn with_options(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        opts: LoadOptions,
    ) -> Result<Self, SceneError> {
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(SceneError::Parse {
                line: None,
                message: format!("vertex {v} has a non-finite coordinate"),
            });
        }
        let n = vertices.len() as u32;
        let mut kept = Vec::with_capacity(triangles.len());
        let mut warnings = Vec::new();
        for (i, tri) in triangles.into_iter().enumerate() {
            if tri.iter().any(|&k| k >= n) {
                return Err(SceneError::Parse {
                    line: None,
                    message: format!("triangle {i} references a vertex out of range"),
                });
            }
            let [a, b, c] = tri.map(|k| vertices[k as usize]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area <= MIN_TRIANGLE_AREA {
                warnings.push(format!("dropped degenerate triangle {i} (area {area:.3e} m²)"));
                continue;
            }
            kept.push(if opts.flip_winding {
                [tri[0], tri[2], tri[1]]
            } else {
                tri
            });
        }
        if kept.is_empty() {
            return Err(SceneError::EmptyMesh);
        }
        for w in &warnings {
            log::warn!("{w}");
        }

        let face_normals: Vec<Vec3> = kept
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|k| vertices[k as usize]);
                (b - a).cross(&(c - a)).normalize()
            })
            .collect();
        let mut vertex_normals = vec![Vec3::zeros(); vertices.len()];
        let mut edge_normals: HashMap<(u32, u32), Vec3> = HashMap::new();
        for (t, nrm) in kept.iter().zip(&face_normals) {
            for k in 0..3 {
                let i = t[k] as usize;
                let e1 = (vertices[t[(k + 1) % 3] as usize] - vertices[i]).normalize();
                let e2 = (vertices[t[(k + 2) % 3] as usize] - vertices[i]).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                vertex_normals[i] += nrm * angle;
                *edge_normals
                    .entry(edge_key(t[k], t[(k + 1) % 3]))
                    .or_insert_with(Vec3::zeros) += nrm;
            }
        }
        for v in vertex_normals.iter_mut() {
            let len = v.norm();
            if len > 0.0 {
                *v /= len;
            }
        }
        for v in edge_normals.values_mut() {
            let len = v.norm();
            if len > 0.0 {
                *v /= len;
            }
        }

        let mut mesh = Self {
            vertices,
            triangles: kept,
            face_normals,
            vertex_normals,
            edge_normals,
            bvh: Bvh::default(),
            warnings,
        };
        mesh.build_bvh();
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn face_normal(&self, triangle: usize) -> Vec3 {
        self.face_normals[triangle]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn bounds(&self) -> Aabb {
        self.bvh.nodes[0].aabb
    }

    pub fn triangle_vertices(&self, triangle: usize) -> [Vec3; 3] {
        self.triangles[triangle].map(|k| self.vertices[k as usize])
    }

    fn triangle_aabb(&self, triangle: usize) -> Aabb {
        Aabb::from_points(self.triangle_vertices(triangle).iter())
    }

    fn build_bvh(&mut self) {
        let centroids: Vec<Vec3> = (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_vertices(t);
                (a + b + c) / 3.0
            })
            .collect();
        let boxes: Vec<Aabb> = (0..self.triangles.len())
            .map(|t| self.triangle_aabb(t))
            .collect();
        let mut order: Vec<u32> = (0..self.triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * order.len() / LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, &centroids, &boxes);
        self.bvh = Bvh { nodes, order };
    }

    /// Pseudo-normal of a triangle feature; used to classify inside/outside.
    pub fn feature_normal(&self, triangle: usize, feature: Feature) -> Vec3 {
        let t = self.triangles[triangle];
        match feature {
            Feature::Face => self.face_normals[triangle],
            Feature::Edge(k) => {
                let k = k as usize;
                self.edge_normals[&edge_key(t[k], t[(k + 1) % 3])]
            }
            Feature::Vertex(k) => self.vertex_normals[t[k as usize] as usize],
        }
    }

    fn closest_in_triangle(&self, p: &Vec3, t: usize) -> ClosestPoint {
        let [a, b, c] = self.triangle_vertices(t);
        let (q, feature) = closest_point_on_triangle(p, &a, &b, &c);
        ClosestPoint {
            triangle: t,
            point: q,
            distance: (p - q).norm(),
            feature,
        }
    }

    fn better(candidate: &ClosestPoint, best: &Option<ClosestPoint>) -> bool {
        match best {
            None => true,
            Some(b) => {
                candidate.distance < b.distance
                    || (candidate.distance == b.distance && candidate.triangle < b.triangle)
            }
        }
    }

    /// Closest point on the surface to `p`.
    pub fn closest_point(&self, p: &Vec3) -> ClosestPoint {
        let mut best: Option<ClosestPoint> = None;
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            let node = &self.bvh.nodes[idx as usize];
            if let Some(b) = &best {
                if node.aabb.distance_sq_to_point(p) > b.distance * b.distance {
                    continue;
                }
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &t in &self.bvh.order[start as usize..(start + count) as usize] {
                        let c = self.closest_in_triangle(p, t as usize);
                        if Self::better(&c, &best) {
                            best = Some(c);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.bvh.nodes[left as usize].aabb.distance_sq_to_point(p);
                    let dr = self.bvh.nodes[right as usize].aabb.distance_sq_to_point(p);
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
        best.expect("mesh is never empty")
    }

    /// Reference implementation of [`closest_point`](Self::closest_point)
    /// checking every triangle.
    pub fn closest_point_brute(&self, p: &Vec3) -> ClosestPoint {
        let mut best: Option<ClosestPoint> = None;
        for t in 0..self.triangles.len() {
            let c = self.closest_in_triangle(p, t);
            if Self::better(&c, &best) {
                best = Some(c);
            }
        }
        best.expect("mesh is never empty")
    }

    /// Signed distance (negative inside) with the closest point and the
    /// outward normal there.
    pub fn signed_distance(&self, p: &Vec3) -> (f64, ClosestPoint, Vec3) {
        let cp = self.closest_point(p);
        let pseudo = self.feature_normal(cp.triangle, cp.feature);
        let offset = p - cp.point;
        let sign = if offset.dot(&pseudo) < 0.0 { -1.0 } else { 1.0 };
        let normal = if cp.distance > 1e-12 {
            offset * (sign / cp.distance)
        } else {
            pseudo
        };
        (sign * cp.distance, cp, normal)
    }

    /// Earliest crossing of segment `p0 -> p1` with the surface.
    pub fn first_hit(&self, p0: &Vec3, p1: &Vec3) -> Option<SegmentHit> {
        let dir = p1 - p0;
        let mut best: Option<SegmentHit> = None;
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            let node = &self.bvh.nodes[idx as usize];
            let limit = best.map_or(1.0, |b| b.t);
            match node.aabb.segment_entry(p0, &dir, limit) {
                None => continue,
                Some(_) => {}
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &t in &self.bvh.order[start as usize..(start + count) as usize] {
                        let [a, b, c] = self.triangle_vertices(t as usize);
                        if let Some(s) = segment_triangle_hit(p0, p1, &a, &b, &c) {
                            let better = match best {
                                None => true,
                                Some(bh) => s < bh.t || (s == bh.t && (t as usize) < bh.triangle),
                            };
                            if better {
                                best = Some(SegmentHit {
                                    triangle: t as usize,
                                    t: s,
                                    point: p0 + dir * s,
                                });
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }

    pub fn first_hit_brute(&self, p0: &Vec3, p1: &Vec3) -> Option<SegmentHit> {
        let dir = p1 - p0;
        let mut best: Option<SegmentHit> = None;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_vertices(t);
            if let Some(s) = segment_triangle_hit(p0, p1, &a, &b, &c) {
                if best.map_or(true, |bh| s < bh.t) {
                    best = Some(SegmentHit {
                        triangle: t,
                        t: s,
                        point: p0 + dir * s,
                    });
                }
            }
        }
        best
    }

    /// First surface hit along a ray, up to `max_distance`.
    pub fn raycast(&self, origin: &Vec3, direction: &Vec3, max_distance: f64) -> Option<SegmentHit> {
        let end = origin + direction.normalize() * max_distance;
        self.first_hit(origin, &end)
    }

    fn closest_on_segment_in_triangle(&self, p0: &Vec3, p1: &Vec3, t: usize) -> SegmentClosest {
        let [a, b, c] = self.triangle_vertices(t);
        let (distance, s, point, feature) = segment_triangle_closest(p0, p1, &a, &b, &c);
        SegmentClosest {
            triangle: t,
            s,
            point,
            distance,
            feature,
        }
    }

    /// Closest approach between segment `p0-p1` and the surface.
    pub fn segment_closest(&self, p0: &Vec3, p1: &Vec3) -> SegmentClosest {
        let seg_box = Aabb::from_points([p0, p1]);
        let mut best: Option<SegmentClosest> = None;
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            let node = &self.bvh.nodes[idx as usize];
            if let Some(b) = &best {
                if node.aabb.distance_sq_to_aabb(&seg_box) > b.distance * b.distance {
                    continue;
                }
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &t in &self.bvh.order[start as usize..(start + count) as usize] {
                        let c = self.closest_on_segment_in_triangle(p0, p1, t as usize);
                        let better = best.map_or(true, |b| {
                            c.distance < b.distance
                                || (c.distance == b.distance && c.triangle < b.triangle)
                        });
                        if better {
                            best = Some(c);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.bvh.nodes[left as usize].aabb.distance_sq_to_aabb(&seg_box);
                    let dr = self.bvh.nodes[right as usize].aabb.distance_sq_to_aabb(&seg_box);
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
        best.expect("mesh is never empty")
    }

    pub fn segment_closest_brute(&self, p0: &Vec3, p1: &Vec3) -> SegmentClosest {
        (0..self.triangles.len())
            .map(|t| self.closest_on_segment_in_triangle(p0, p1, t))
            .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.triangle.cmp(&b.triangle)))
            .expect("mesh is never empty")
    }

    // ---- file formats ----

    pub fn load(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let with_path = |e: SceneError| e.with_path(path);
        let bytes = std::fs::read(path).map_err(|e| SceneError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("stl") => Self::from_stl_bytes(&bytes, opts).map_err(with_path),
            Some("obj") => {
                let text = String::from_utf8(bytes).map_err(|_| {
                    with_path(SceneError::Parse {
                        line: None,
                        message: "OBJ file is not valid UTF-8".into(),
                    })
                })?;
                Self::from_obj_str(&text, opts).map_err(with_path)
            }
            _ => Err(with_path(SceneError::Parse {
                line: None,
                message: "unsupported mesh extension (expected .obj or .stl)".into(),
            })),
        }
    }

    /// Parses the `v` / `f` subset of Wavefront OBJ. Faces must be triangles;
    /// `v/vt/vn` references and negative indices are accepted.
    pub fn from_obj_str(text: &str, opts: LoadOptions) -> Result<Self, SceneError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let mut parts = line.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            let err = |message: String| SceneError::Parse {
                line: Some(lineno + 1),
                message,
            };
            match tag {
                "v" => {
                    let coords: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| err(format!("bad vertex coordinate: {e}")))?;
                    if coords.len() != 3 {
                        return Err(err("vertex needs three coordinates".into()));
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                "f" => {
                    let refs: Vec<&str> = parts.collect();
                    if refs.len() != 3 {
                        return Err(err(format!(
                            "only triangular faces are supported, found {} vertices",
                            refs.len()
                        )));
                    }
                    let mut tri = [0u32; 3];
                    for (k, r) in refs.iter().enumerate() {
                        let head = r.split('/').next().unwrap_or("");
                        let idx: i64 = head
                            .parse()
                            .map_err(|_| err(format!("bad face index '{r}'")))?;
                        let resolved = if idx > 0 {
                            idx - 1
                        } else if idx < 0 {
                            vertices.len() as i64 + idx
                        } else {
                            -1
                        };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(err(format!("face index {idx} out of range")));
                        }
                        tri[k] = resolved as u32;
                    }
                    triangles.push(tri);
                }
                _ => {}
            }
        }
        Self::with_options(vertices, triangles, opts)
    }

    /// Parses binary STL, welding bit-identical vertices.
    pub fn from_stl_bytes(bytes: &[u8], opts: LoadOptions) -> Result<Self, SceneError> {
        let parse = |message: &str| SceneError::Parse {
            line: None,
            message: message.to_string(),
        };
        if bytes.len() < 84 {
            return Err(parse("binary STL shorter than its header"));
        }
        let mut cursor = &bytes[80..];
        let count = cursor.read_u32::<LittleEndian>().expect("length checked") as usize;
        if bytes.len() != 84 + count * 50 {
            if bytes.starts_with(b"solid") {
                return Err(parse("ASCII STL is not supported; use binary STL or OBJ"));
            }
            return Err(parse("binary STL size does not match its triangle count"));
        }
        let mut index: HashMap<[u64; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(count);
        for _ in 0..count {
            let mut rec = [0u8; 50];
            cursor.read_exact(&mut rec).expect("length checked");
            let mut r = &rec[12..48];
            let mut tri = [0u32; 3];
            for slot in tri.iter_mut() {
                let v = Vec3::new(
                    r.read_f32::<LittleEndian>().expect("fixed record") as f64,
                    r.read_f32::<LittleEndian>().expect("fixed record") as f64,
                    r.read_f32::<LittleEndian>().expect("fixed record") as f64,
                );
                let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
                *slot = *index.entry(key).or_insert_with(|| {
                    vertices.push(v);
                    (vertices.len() - 1) as u32
                });
            }
            triangles.push(tri);
        }
        Self::with_options(vertices, triangles, opts)
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 40 + self.triangles.len() * 24);
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        s
    }

    pub fn to_stl_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; 80];
        out.write_u32::<LittleEndian>(self.triangles.len() as u32)
            .expect("vec write");
        for (t, n) in self.triangles.iter().zip(&self.face_normals) {
            for c in n.iter() {
                out.write_f32::<LittleEndian>(*c as f32).expect("vec write");
            }
            for &k in t {
                for c in self.vertices[k as usize].iter() {
                    out.write_f32::<LittleEndian>(*c as f32).expect("vec write");
                }
            }
            out.write_u16::<LittleEndian>(0).expect("vec write");
        }
        out
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    offset: u32,
    centroids: &[Vec3],
    boxes: &[Aabb],
) -> u32 {
    let aabb = order
        .iter()
        .fold(Aabb::empty(), |acc, &t| acc.union(&boxes[t as usize]));
    let idx = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node {
            aabb,
            kind: NodeKind::Leaf {
                start: offset,
                count: order.len() as u32,
            },
        });
        return idx;
    }
    let cbox = Aabb::from_points(order.iter().map(|&t| &centroids[t as usize]));
    let ext = cbox.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    order.sort_by(|&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    nodes.push(Node {
        aabb,
        kind: NodeKind::Leaf { start: 0, count: 0 },
    });
    let mid = order.len() / 2;
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(nodes, lo, offset, centroids, boxes);
    let right = build_node(nodes, hi, offset + mid as u32, centroids, boxes);
    nodes[idx as usize].kind = NodeKind::Inner { left, right };
    idx
}
