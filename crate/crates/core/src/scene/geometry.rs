//! Point, segment and triangle primitives used by the mesh queries.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Which part of a triangle a closest point lies on. Edge `k` joins vertex
/// `k` and vertex `(k + 1) % 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    Face,
    Edge(u8),
    Vertex(u8),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb {
            min: self.min.add_scalar(-r),
            max: self.max.add_scalar(r),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn distance_sq_to_point(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    pub fn distance_sq_to_aabb(&self, other: &Aabb) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = (other.min[k] - self.max[k]).max(self.min[k] - other.max[k]).max(0.0);
            d += v * v;
        }
        d
    }

    /// Parameter interval of `origin + t * dir`, `t in [0, t_max]`, inside the box.
    pub fn segment_entry(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0_f64;
        let mut t1 = t_max;
        for k in 0..3 {
            if dir[k] == 0.0 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[k];
            let mut a = (self.min[k] - origin[k]) * inv;
            let mut b = (self.max[k] - origin[k]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            // slack keeps grazing segments from slipping past on rounding
            t0 = t0.max(a - 1e-12);
            t1 = t1.min(b + 1e-12);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Closest point on triangle `abc` to `p` and the feature it lies on.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

/// Parameter `t in [0, 1]` where segment `p0 -> p1` crosses triangle `abc`
/// from either side. The barycentric test carries a small slack so that a
/// segment through a shared edge hits at least one of its triangles.
pub fn segment_triangle_hit(p0: &Vec3, p1: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    const SLACK: f64 = 1e-10;
    let dir = p1 - p0;
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = p0 - a;
    let u = s.dot(&h) * inv;
    if u < -SLACK || u > 1.0 + SLACK {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -SLACK || u + v > 1.0 + SLACK {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if (0.0..=1.0).contains(&t) {
        Some(t)
    } else {
        None
    }
}

/// Closest points between segments `p1-q1` and `p2-q2`: `(s, t, c1, c2)`.
pub fn closest_points_segments(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> (f64, f64, Vec3, Vec3) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (s, t);
    if a <= 1e-300 && e <= 1e-300 {
        return (0.0, 0.0, *p1, *p2);
    }
    if a <= 1e-300 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= 1e-300 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (s, t, p1 + d1 * s, p2 + d2 * t)
}

/// Closest approach between segment `p0-p1` and triangle `abc`.
///
/// Returns `(distance, s, point_on_triangle, feature)` with `s` the segment
/// parameter of the closest point.
pub fn segment_triangle_closest(
    p0: &Vec3,
    p1: &Vec3,
    a: &Vec3,
    b: &Vec3,
    c: &Vec3,
) -> (f64, f64, Vec3, Feature) {
    if let Some(t) = segment_triangle_hit(p0, p1, a, b, c) {
        let x = p0 + (p1 - p0) * t;
        let (q, f) = closest_point_on_triangle(&x, a, b, c);
        return ((x - q).norm(), t, q, f);
    }
    let mut best = {
        let (q, f) = closest_point_on_triangle(p0, a, b, c);
        ((p0 - q).norm(), 0.0, q, f)
    };
    let (q, f) = closest_point_on_triangle(p1, a, b, c);
    let d = (p1 - q).norm();
    if d < best.0 {
        best = (d, 1.0, q, f);
    }
    let verts = [a, b, c];
    for k in 0..3 {
        let (s, _, c1, c2) = closest_points_segments(p0, p1, verts[k], verts[(k + 1) % 3]);
        let d = (c1 - c2).norm();
        if d < best.0 {
            // re-classify so the feature matches the returned point
            let (q, f) = closest_point_on_triangle(&c1, a, b, c);
            best = (d, s, q, f);
        }
    }
    best
}
