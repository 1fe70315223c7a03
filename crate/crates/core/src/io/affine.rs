//! 4x4 voxel-space affine transforms and their FLIRT-style ASCII form.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};

/// Maps homogeneous voxel coordinates of a moving volume to voxel
/// coordinates of a reference volume. The last row is always `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    matrix: Matrix4<f64>,
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform { matrix: Matrix4::identity() }
    }

    pub fn from_matrix(mut matrix: Matrix4<f64>) -> Result<Self> {
        let last = [matrix[(3, 0)], matrix[(3, 1)], matrix[(3, 2)], matrix[(3, 3)] - 1.0];
        if last.iter().any(|v| v.abs() > 1e-12) {
            return Err(Error::Affine(format!(
                "last row must be (0, 0, 0, 1), got {:?}",
                [matrix[(3, 0)], matrix[(3, 1)], matrix[(3, 2)], matrix[(3, 3)]]
            )));
        }
        matrix.set_row(3, &nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0));
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Affine("non-finite entry".into()));
        }
        let t = AffineTransform { matrix };
        let det = t.linear().determinant();
        if det.abs() <= 1e-9 {
            return Err(Error::Affine(format!("singular linear part (det = {det:e})")));
        }
        Ok(t)
    }

    /// Builds a transform from a linear part and a translation.
    pub fn from_parts(linear: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::from_matrix(m)
    }

    pub fn translation(t: [f64; 3]) -> Self {
        let mut m = Matrix4::identity();
        m[(0, 3)] = t[0];
        m[(1, 3)] = t[1];
        m[(2, 3)] = t[2];
        AffineTransform { matrix: m }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn offset(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self.matrix.try_inverse().ok_or_else(|| Error::Affine("transform is not invertible".into()))?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn then_after(&self, other: &AffineTransform) -> AffineTransform {
        AffineTransform { matrix: self.matrix * other.matrix }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.matrix * Vector4::new(p[0], p[1], p[2], 1.0);
        [v[0], v[1], v[2]]
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == Matrix4::identity()
    }
}

/// Parses four lines of four whitespace-separated numbers.
pub fn read_affine_ascii(text: &str) -> Result<AffineTransform> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Affine(format!("cannot parse {t:?}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        return Err(Error::Affine(format!(
            "expected 4 rows of 4 values, got row lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    AffineTransform::from_matrix(Matrix4::from_fn(|r, c| rows[r][c]))
}

/// Emits 17 significant digits per entry, enough to reproduce every `f64`.
pub fn write_affine_ascii(t: &AffineTransform) -> String {
    let mut s = String::new();
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| format!("{:.16e}", t.matrix[(r, c)])).collect();
        s.push_str(&row.join("  "));
        s.push_str("  \n");
    }
    s
}

/// FLIRT layout with six decimals, about 170 bytes per matrix. Rounds the
/// entries, so callers must use the re-parsed transform.
pub fn write_affine_flirt(t: &AffineTransform) -> String {
    let mut s = String::new();
    for r in 0..4 {
        for c in 0..4 {
            let v = t.matrix[(r, c)];
            // Avoid "-0.000000".
            let v = if v.abs() < 5e-7 { 0.0 } else { v };
            s.push_str(&format!("{v:.6}  "));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_text() {
        let t = read_affine_ascii("1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n").unwrap();
        assert!(t.is_identity());
    }

    #[test]
    fn three_lines_rejected() {
        assert!(read_affine_ascii("1 0 0 0\n0 1 0 0\n0 0 1 0\n").is_err());
    }

    #[test]
    fn bad_last_row_and_singular() {
        assert!(read_affine_ascii("1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 1e-6 1\n").is_err());
        assert!(read_affine_ascii("1 0 0 0\n0 1 0 0\n0 0 0 0\n0 0 0 1\n").is_err());
    }

    #[test]
    fn flirt_layout() {
        let t = AffineTransform::translation([1.5, -2.0, 1e-9]);
        let text = write_affine_flirt(&t);
        assert_eq!(text.lines().next().unwrap(), "1.000000  0.000000  0.000000  1.500000  ");
        let back = read_affine_ascii(&text).unwrap();
        assert_eq!(back.offset()[2], 0.0);
        assert!(read_affine_ascii(&write_affine_flirt(&AffineTransform::identity())).unwrap().is_identity());
    }

    proptest! {
        #[test]
        fn ascii_roundtrip_is_exact(entries in proptest::collection::vec(-100.0f64..100.0, 12)) {
            let lin = Matrix3::from_fn(|r, c| entries[3 * r + c] + if r == c { 150.0 } else { 0.0 });
            let t = AffineTransform::from_parts(lin, Vector3::new(entries[9], entries[10], entries[11])).unwrap();
            let back = read_affine_ascii(&write_affine_ascii(&t)).unwrap();
            prop_assert_eq!(back.matrix(), t.matrix());
        }
    }
}
