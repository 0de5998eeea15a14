use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PatchSplitSpec;
use crate::error::{Error, Result};
use crate::face_layout::{Point, AU_REGION_PAIRS};
use crate::tensor::{Element, Tensor};

/// Two facial regions, each a normalized `(x, y)` point.
pub type RegionPair = [Point; 2];

/// Patch graph: binary links plus the normalized mixing matrix, both `P×P` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    size: usize,
    raw: Vec<f64>,
    normalized: Vec<f64>,
}

impl AdjacencyMatrix {
    /// Validate and normalize a binary link matrix.
    pub fn from_raw(size: usize, raw: Vec<f64>) -> Result<Self> {
        let normalized = normalize_adjacency(size, &raw)?;
        Ok(Self { size, raw, normalized })
    }

    /// No links: the normalized form is the identity.
    pub fn unlinked(size: usize) -> Self {
        Self::from_raw(size, vec![0.0; size * size]).expect("empty graph is valid")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn linked(&self, i: usize, j: usize) -> bool {
        self.raw[i * self.size + j] != 0.0
    }

    pub fn num_links(&self) -> usize {
        self.raw.iter().filter(|&&v| v != 0.0).count() / 2
    }

    /// Largest eigenvalue magnitude of the normalized matrix, by power iteration.
    pub fn spectral_radius(&self) -> f64 {
        let n = self.size;
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w: Vec<f64> =
                (0..n).map(|i| (0..n).map(|j| self.normalized[i * n + j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda
    }

    /// Relabel patches: patch `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.size;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        let mut raw = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                raw[perm[i] * n + perm[j]] = self.raw[i * n + j];
            }
        }
        Self::from_raw(n, raw)
    }

    /// Write the binary link matrix as text.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        write_matrix_text(path, self.size, &self.raw)
    }

    /// Read a binary link matrix written by [`AdjacencyMatrix::save_text`].
    pub fn load_text(path: &Path) -> Result<Self> {
        let (size, raw) = read_matrix_text(path)?;
        Self::from_raw(size, raw).map_err(|e| Error::format(path, e))
    }
}

/// Rules that decide which patch pairs are linked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyConfig {
    /// Cosine-similarity threshold on mean-image patches; `None` disables the rule.
    pub sim_threshold: Option<f64>,
    pub use_symmetry: bool,
    pub au_regions: Vec<RegionPair>,
}

impl Default for AdjacencyConfig {
    fn default() -> Self {
        Self { sim_threshold: Some(0.9), use_symmetry: true, au_regions: AU_REGION_PAIRS.to_vec() }
    }
}

impl AdjacencyConfig {
    pub fn symmetry_only() -> Self {
        Self { sim_threshold: None, use_symmetry: true, au_regions: Vec::new() }
    }

    pub fn build<T: Element>(&self, spec: &PatchSplitSpec, mean_image: Option<&Tensor<T>>) -> Result<AdjacencyMatrix> {
        let pairs = au_patch_pairs(&self.au_regions, spec.k);
        build_adjacency(spec, mean_image, self.sim_threshold, self.use_symmetry, &pairs)
    }
}

/// Map region pairs onto a `k×k` grid, dropping pairs that land in one patch.
pub fn au_patch_pairs(regions: &[RegionPair], k: usize) -> Vec<(usize, usize)> {
    let cell = |v: f64| ((v * k as f64).floor().max(0.0) as usize).min(k - 1);
    let patch = |p: Point| cell(p[1]) * k + cell(p[0]);
    regions
        .iter()
        .map(|[a, b]| (patch(*a), patch(*b)))
        .filter(|(a, b)| a != b)
        .collect()
}

/// Binary patch graph from the enabled rules: mirror pairs, cosine similarity
/// of mean-image patches, and an explicit pair list.
pub fn build_adjacency<T: Element>(
    spec: &PatchSplitSpec,
    mean_image: Option<&Tensor<T>>,
    sim_threshold: Option<f64>,
    use_symmetry: bool,
    au_pairs: &[(usize, usize)],
) -> Result<AdjacencyMatrix> {
    let p = spec.num_patches();
    let mut raw = vec![0.0; p * p];
    let mut link = |i: usize, j: usize| {
        if i != j {
            raw[i * p + j] = 1.0;
            raw[j * p + i] = 1.0;
        }
    };
    if use_symmetry {
        for i in 0..p {
            link(i, spec.mirror(i));
        }
    }
    if let Some(threshold) = sim_threshold {
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidArgument(format!("similarity threshold {threshold} outside [-1, 1]")));
        }
        let image = mean_image
            .ok_or_else(|| Error::InvalidArgument("similarity rule needs a mean image".into()))?;
        let vectors = patch_vectors(image, spec.k)?;
        for i in 0..p {
            for j in i + 1..p {
                if cosine(&vectors[i], &vectors[j]) >= threshold {
                    link(i, j);
                }
            }
        }
    }
    for &(i, j) in au_pairs {
        if i >= p || j >= p {
            return Err(Error::InvalidArgument(format!("patch pair ({i}, {j}) outside a {p}-patch grid")));
        }
        link(i, j);
    }
    AdjacencyMatrix::from_raw(p, raw)
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency(size: usize, raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() != size * size {
        return Err(Error::Shape(format!("adjacency has {} entries, {size}×{size} expected", raw.len())));
    }
    for i in 0..size {
        if raw[i * size + i] != 0.0 {
            return Err(Error::InvalidArgument(format!("adjacency has a self-link at {i}")));
        }
        for j in 0..size {
            let v = raw[i * size + j];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidArgument(format!("adjacency entry ({i}, {j}) = {v} is not binary")));
            }
            if v != raw[j * size + i] {
                return Err(Error::InvalidArgument(format!("adjacency is not symmetric at ({i}, {j})")));
            }
        }
    }
    let inv_sqrt: Vec<f64> =
        (0..size).map(|i| 1.0 / (1.0 + raw[i * size..(i + 1) * size].iter().sum::<f64>()).sqrt()).collect();
    let mut out = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            let a = if i == j { 1.0 } else { raw[i * size + j] };
            out[i * size + j] = inv_sqrt[i] * a * inv_sqrt[j];
        }
    }
    Ok(out)
}

/// One row per line, entries separated by single spaces.
pub fn write_matrix_text(path: &Path, size: usize, data: &[f64]) -> Result<()> {
    if data.len() != size * size {
        return Err(Error::Shape(format!("matrix has {} entries, {size}×{size} expected", data.len())));
    }
    let mut text = String::new();
    for row in data.chunks(size.max(1)) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(text, "{}", cells.join(" ")).expect("write to String");
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a square matrix written by [`write_matrix_text`].
pub fn read_matrix_text(path: &Path) -> Result<(usize, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|cell| cell.parse::<f64>().map_err(|e| Error::format(path, format!("row {i}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let size = rows.len();
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != size) {
        return Err(Error::format(path, format!("row {i} has {} entries, expected {size}", row.len())));
    }
    Ok((size, rows.concat()))
}

fn patch_vectors<T: Element>(image: &Tensor<T>, k: usize) -> Result<Vec<Vec<f64>>> {
    let (c, h, w) = match *image.shape() {
        [c, h, w] | [1, c, h, w] => (c, h, w),
        ref s => return Err(Error::Shape(format!("mean image must be [C,H,W], got {s:?}"))),
    };
    let spec = PatchSplitSpec::new(k, h, w)?;
    let (ph, pw) = (spec.patch_height(), spec.patch_width());
    let data = image.data();
    let mut out = vec![Vec::with_capacity(c * ph * pw); k * k];
    for (p, v) in out.iter_mut().enumerate() {
        let (r, col) = (p / k, p % k);
        for ci in 0..c {
            for y in r * ph..(r + 1) * ph {
                let row = (ci * h + y) * w;
                v.extend(data[row + col * pw..row + (col + 1) * pw].iter().map(|x| x.as_f64()));
            }
        }
    }
    Ok(out)
}

/// Cosine similarity; two all-zero patches count as identical.
fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>();
    let nb = b.iter().map(|x| x * x).sum::<f64>();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        // One square root of the product: identical patches give exactly 1.
        (false, false) => (dot / (na * nb).sqrt()).clamp(-1.0, 1.0),
        _ => 0.0,
    }
}
