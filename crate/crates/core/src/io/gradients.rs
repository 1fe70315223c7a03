//! FSL-style `.bval` / `.bvec` tables and their partition into shells.

use crate::error::{Error, Result};

pub const DEFAULT_B0_THRESHOLD: f64 = 50.0;
pub const DEFAULT_SHELL_TOLERANCE: f64 = 0.05;

/// Volumes sharing one nonzero b-value.
#[derive(Debug, Clone, PartialEq)]
pub struct Shell {
    /// Smallest b-value in the cluster.
    pub bval: f64,
    /// Volume indices in acquisition order.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientTable {
    pub bvals: Vec<f64>,
    /// Unit directions; zero for volumes without a gradient.
    pub bvecs: Vec<[f64; 3]>,
    pub b0: Vec<usize>,
    pub shells: Vec<Shell>,
    pub bval_ascii: Vec<u8>,
    pub bvec_ascii: Vec<u8>,
}

impl GradientTable {
    pub fn len(&self) -> usize {
        self.bvals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bvals.is_empty()
    }

    /// Shell index of a volume, `None` for the b=0 group.
    pub fn shell_of(&self, volume: usize) -> Option<usize> {
        self.shells.iter().position(|s| s.indices.contains(&volume))
    }
}

fn parse_numbers(text: &str, what: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Gradients(format!("{what}: cannot parse {t:?}")))
                })
                .collect()
        })
        .collect()
}

pub fn parse_bvals(text: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = parse_numbers(text, "bval")?.into_iter().flatten().collect();
    if let Some(v) = vals.iter().find(|v| **v < 0.0) {
        return Err(Error::Gradients(format!("negative b-value {v}")));
    }
    Ok(vals)
}

/// Parses three rows (x, y, z); a file with one `x y z` row per volume is
/// accepted as well.
pub fn parse_bvecs(text: &str, expected: usize) -> Result<Vec<[f64; 3]>> {
    let rows = parse_numbers(text, "bvec")?;
    if rows.len() == 3 && rows.iter().all(|r| r.len() == expected) {
        return Ok((0..expected).map(|i| [rows[0][i], rows[1][i], rows[2][i]]).collect());
    }
    if rows.len() == expected && rows.iter().all(|r| r.len() == 3) {
        return Ok(rows.iter().map(|r| [r[0], r[1], r[2]]).collect());
    }
    Err(Error::Gradients(format!(
        "bvec table does not hold 3 x {expected} values ({} rows of lengths {:?})",
        rows.len(),
        rows.iter().map(Vec::len).collect::<Vec<_>>()
    )))
}

/// Groups the given volumes into shells by relative b-value tolerance.
///
/// Volumes are visited in ascending b-value (ties by index); a new shell
/// starts whenever a b-value exceeds the current shell's smallest one by more
/// than `tolerance` relative to it.
pub fn cluster_shells(bvals: &[f64], volumes: &[usize], tolerance: f64) -> Vec<Shell> {
    let mut order: Vec<usize> = volumes.to_vec();
    order.sort_by(|&a, &b| bvals[a].total_cmp(&bvals[b]).then(a.cmp(&b)));
    let mut shells: Vec<Shell> = Vec::new();
    for i in order {
        match shells.last_mut() {
            Some(s) if bvals[i] - s.bval <= tolerance * s.bval => s.indices.push(i),
            _ => shells.push(Shell { bval: bvals[i], indices: vec![i] }),
        }
    }
    for s in &mut shells {
        s.indices.sort_unstable();
    }
    shells
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 1e-12).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

pub fn read_gradients(bval_text: &str, bvec_text: &str, b0_threshold: f64) -> Result<GradientTable> {
    read_gradients_with(bval_text, bvec_text, b0_threshold, DEFAULT_SHELL_TOLERANCE)
}

pub fn read_gradients_with(
    bval_text: &str,
    bvec_text: &str,
    b0_threshold: f64,
    shell_tolerance: f64,
) -> Result<GradientTable> {
    let bvals = parse_bvals(bval_text)?;
    let raw_vecs = parse_bvecs(bvec_text, bvals.len())?;
    let b0: Vec<usize> = (0..bvals.len()).filter(|&i| bvals[i] <= b0_threshold).collect();
    build_table(bvals, raw_vecs, b0, shell_tolerance, bval_text, bvec_text)
}

/// Builds a table whose b=0 group is given explicitly rather than derived
/// from a threshold. The decoder uses this with the group recorded in the
/// container.
pub fn table_with_b0_group(bval_text: &str, bvec_text: &str, b0: Vec<usize>) -> Result<GradientTable> {
    let bvals = parse_bvals(bval_text)?;
    let raw_vecs = parse_bvecs(bvec_text, bvals.len())?;
    if b0.iter().any(|&i| i >= bvals.len()) {
        return Err(Error::Gradients("b=0 index out of range".into()));
    }
    build_table(bvals, raw_vecs, b0, DEFAULT_SHELL_TOLERANCE, bval_text, bvec_text)
}

fn build_table(
    bvals: Vec<f64>,
    raw_vecs: Vec<[f64; 3]>,
    b0: Vec<usize>,
    shell_tolerance: f64,
    bval_text: &str,
    bvec_text: &str,
) -> Result<GradientTable> {
    let mut bvecs = Vec::with_capacity(raw_vecs.len());
    for (i, v) in raw_vecs.iter().enumerate() {
        match normalize(*v) {
            Some(u) => bvecs.push(u),
            None if b0.contains(&i) => bvecs.push([0.0; 3]),
            None => {
                return Err(Error::Gradients(format!("volume {i} has b = {} but a zero gradient vector", bvals[i])))
            }
        }
    }
    let dwis: Vec<usize> = (0..bvals.len()).filter(|i| !b0.contains(i)).collect();
    let shells = cluster_shells(&bvals, &dwis, shell_tolerance);
    Ok(GradientTable {
        bvals,
        bvecs,
        b0,
        shells,
        bval_ascii: bval_text.as_bytes().to_vec(),
        bvec_ascii: bvec_text.as_bytes().to_vec(),
    })
}

/// Formats a table in FSL layout. Used when synthesizing datasets.
pub fn format_fsl(bvals: &[f64], bvecs: &[[f64; 3]]) -> (String, String) {
    let bval = bvals.iter().map(|b| format!("{b}")).collect::<Vec<_>>().join(" ") + "\n";
    let bvec = (0..3)
        .map(|k| bvecs.iter().map(|v| format!("{}", v[k])).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n";
    (bval, bvec)
}
