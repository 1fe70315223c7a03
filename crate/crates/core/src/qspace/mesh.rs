//! Triangulated unit sphere over antipodally duplicated gradient directions.
//!
//! For points on a sphere the boundary of the 3D Delaunay tessellation is
//! their convex hull, which is built here incrementally in vertex order.
//! A face whose plane contains the inserted point counts as visible, so
//! co-circular configurations are split by insertion order alone.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Smallest allowed angle between two directions after antipodal folding.
pub const MIN_SEPARATION_DEG: f64 = 0.5;

const PLANE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SphereMesh {
    /// Direction `i` at index `2i`, its antipode at `2i + 1`.
    pub vertices: Vec<[f64; 3]>,
    /// Outward-oriented (counter-clockwise seen from outside).
    pub triangles: Vec<[usize; 3]>,
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn orient(a: [f64; 3], b: [f64; 3], c: [f64; 3], p: [f64; 3]) -> f64 {
    dot(cross(sub(b, a), sub(c, a)), sub(p, a))
}

impl SphereMesh {
    pub fn channel_count(&self) -> usize {
        self.vertices.len() / 2
    }

    pub fn channel_of_vertex(&self, v: usize) -> usize {
        v / 2
    }

    /// Undirected edges, each once, with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Every directed edge appears exactly once and its reverse exactly
    /// once, so each undirected edge borders two consistently oriented
    /// triangles.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// True when no triangle has an angle above 90 degrees, which makes all
    /// cotangent weights non-negative.
    pub fn is_non_obtuse(&self) -> bool {
        self.triangles.iter().all(|t| {
            (0..3).all(|k| {
                let (o, a, b) = (self.vertices[t[k]], self.vertices[t[(k + 1) % 3]], self.vertices[t[(k + 2) % 3]]);
                dot(sub(a, o), sub(b, o)) >= -1e-12
            })
        })
    }
}

fn check_directions(directions: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    let unit: Vec<[f64; 3]> = directions
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let n = norm(g);
            if !(n > 1e-6) || !n.is_finite() {
                return Err(Error::Mesh(format!("direction {i} has zero length")));
            }
            Ok([g[0] / n, g[1] / n, g[2] / n])
        })
        .collect::<Result<_>>()?;
    if unit.len() < 3 {
        return Err(Error::Mesh(format!("{} directions, need at least 3", unit.len())));
    }
    let limit = MIN_SEPARATION_DEG.to_radians().cos();
    for i in 0..unit.len() {
        for j in i + 1..unit.len() {
            if dot(unit[i], unit[j]).abs() >= limit {
                return Err(Error::Mesh(format!(
                    "directions {i} and {j} are within {MIN_SEPARATION_DEG} degrees (antipodally)"
                )));
            }
        }
    }
    Ok(unit)
}

pub fn build_sphere_mesh(directions: &[[f64; 3]]) -> Result<SphereMesh> {
    let unit = check_directions(directions)?;
    let vertices: Vec<[f64; 3]> = unit.iter().flat_map(|&g| [g, [-g[0], -g[1], -g[2]]]).collect();
    let n = vertices.len();

    // Seed tetrahedron: the first antipodal pair, the first direction off
    // their line (any other one), and the first vertex off that plane.
    let (a, b, c) = (0, 1, 2);
    let d = (3..n)
        .find(|&i| orient(vertices[a], vertices[b], vertices[c], vertices[i]).abs() > 1e-9)
        .ok_or_else(|| Error::Mesh("directions are coplanar; fewer than 3 independent".into()))?;
    let mut faces: Vec<Option<[usize; 3]>> = Vec::new();
    let inside = orient(vertices[a], vertices[b], vertices[c], vertices[d]);
    let outward = |f: [usize; 3]| if inside > 0.0 { [f[0], f[2], f[1]] } else { f };
    // Faces of the tetrahedron, oriented so the fourth vertex is behind each.
    for f in [[a, b, c], [a, d, b], [b, d, c], [c, d, a]] {
        faces.push(Some(outward(f)));
    }

    for p in 0..n {
        if p == a || p == b || p == c || p == d {
            continue;
        }
        let visible: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.map(|f| (i, f)))
            .filter(|&(_, f)| orient(vertices[f[0]], vertices[f[1]], vertices[f[2]], vertices[p]) > -PLANE_EPS)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            return Err(Error::Mesh(format!("vertex {p} lies inside the hull")));
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &i in &visible {
            let f = faces[i].take().unwrap();
            edges.extend([(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]);
        }
        let horizon: Vec<(usize, usize)> = edges.iter().copied().filter(|&(u, v)| !edges.contains(&(v, u))).collect();
        for (u, v) in horizon {
            faces.push(Some([u, v, p]));
        }
    }

    let mesh = SphereMesh { vertices, triangles: faces.into_iter().flatten().collect() };
    let mut used = vec![false; n];
    for t in &mesh.triangles {
        for &v in t {
            used[v] = true;
        }
    }
    if !used.iter().all(|&u| u) {
        return Err(Error::Mesh("hull does not use every vertex".into()));
    }
    if !mesh.is_watertight() || mesh.triangles.len() != 2 * n - 4 {
        return Err(Error::Mesh("hull is not a closed triangulated sphere".into()));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::testutil::fibonacci_directions;

    #[test]
    fn octahedron() {
        let m = build_sphere_mesh(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(m.vertices.len(), 6);
        assert_eq!(m.triangles.len(), 8);
        assert_eq!(m.edges().len(), 12);
        assert!(m.is_watertight());
        assert!(m.is_non_obtuse());
        for t in &m.triangles {
            // Outward: normal points away from the origin.
            let nrm = cross(sub(m.vertices[t[1]], m.vertices[t[0]]), sub(m.vertices[t[2]], m.vertices[t[0]]));
            assert!(dot(nrm, m.vertices[t[0]]) > 0.0);
        }
    }

    #[test]
    fn thirty_directions_euler() {
        let m = build_sphere_mesh(&fibonacci_directions(30)).unwrap();
        let (v, e, f) = (m.vertices.len(), m.edges().len(), m.triangles.len());
        assert_eq!((v, e, f), (60, 174, 116));
        assert_eq!(v as i64 - e as i64 + f as i64, 2);
    }

    #[test]
    fn antipodes_exact() {
        let m = build_sphere_mesh(&fibonacci_directions(12)).unwrap();
        for i in 0..12 {
            let (a, b) = (m.vertices[2 * i], m.vertices[2 * i + 1]);
            assert_eq!(a, [-b[0], -b[1], -b[2]]);
            assert!((norm(a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let d = fibonacci_directions(40);
        assert_eq!(build_sphere_mesh(&d).unwrap(), build_sphere_mesh(&d).unwrap());
    }

    #[test]
    fn degenerate_inputs() {
        assert!(build_sphere_mesh(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).is_err());
        let coplanar = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(build_sphere_mesh(&coplanar).is_err());
        let dup = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.001, 0.0]];
        let err = build_sphere_mesh(&dup).unwrap_err().to_string();
        assert!(err.contains("0 and 3"), "{err}");
        assert!(build_sphere_mesh(&[[0.0; 3], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn random_sets_are_closed() {
        let mut s = 99u64;
        let mut rnd = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for n in [3usize, 4, 6, 7, 15, 33, 64] {
            let mut dirs: Vec<[f64; 3]> = Vec::new();
            while dirs.len() < n {
                let g = [rnd(), rnd(), rnd()];
                let l = norm(g);
                if !(0.1..=1.0).contains(&l) {
                    continue;
                }
                let g = [g[0] / l, g[1] / l, g[2] / l];
                if dirs.iter().all(|&h| dot(g, h).abs() < 0.99) {
                    dirs.push(g);
                }
            }
            let m = build_sphere_mesh(&dirs).unwrap();
            assert_eq!(m.triangles.len(), 4 * n - 4);
            assert!(m.is_watertight());
        }
    }
}
