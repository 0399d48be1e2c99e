//! Random-walk proximity features.
//!
//! The low-order matrix averages the first `T` powers of the random-walk
//! transition matrix, rescales by graph volume and negative-sampling constant
//! `b`, and takes a clamped logarithm:
//!
//! ```text
//! S = (1/T) sum_{r=1..T} (D^-1 A)^r D^-1
//! M = log(max(vol(G) * S / b, 1))
//! ```
//!
//! `B` is then the rank-`d` factor `U_d sqrt(Sigma_d)` of `M`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Walk window `T`, negative-sampling constant `b` and feature dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowOrderParams {
    pub window: usize,
    pub neg_b: f64,
    pub dim: usize,
}

impl Default for LowOrderParams {
    fn default() -> Self {
        LowOrderParams {
            window: 5,
            neg_b: 1.0,
            dim: 128,
        }
    }
}

impl LowOrderParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidParam("window T must be at least 1".into()));
        }
        if !(self.neg_b > 0.0) {
            return Err(Error::InvalidParam(format!(
                "negative-sampling constant b must be positive, got {}",
                self.neg_b
            )));
        }
        if self.dim == 0 || self.dim > n {
            return Err(Error::InvalidParam(format!(
                "feature dimension d={} must lie in [1, {n}]",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Rank-`d` node features and the singular values they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub b: Array2<f64>,
    pub singular_values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn dim(&self) -> usize {
        self.b.ncols()
    }
}

fn check_degrees(g: &Graph) -> Result<Vec<f64>> {
    if let Some(u) = g.first_isolated() {
        return Err(Error::IsolatedNode(u));
    }
    Ok(g.degrees().0)
}

/// Row-stochastic `P = D^-1 A`.
pub fn transition_matrix(g: &Graph) -> Result<Array2<f64>> {
    let deg = check_degrees(g)?;
    let mut p = Array2::zeros((g.n(), g.n()));
    for u in 0..g.n() {
        for (v, w) in g.neighbors(u) {
            p[[u, v]] = w / deg[u];
        }
    }
    Ok(p)
}

const COLUMN_BLOCK: usize = 256;

/// Dense low-order matrix `M`. Columns are produced in blocks so only `M`
/// itself is held at full `n x n` size; each power is a sparse-dense product.
pub fn netmf_matrix(g: &Graph, p: &LowOrderParams) -> Result<Array2<f64>> {
    if p.window == 0 || !(p.neg_b > 0.0) {
        return Err(Error::InvalidParam(format!("invalid low-order params {p:?}")));
    }
    let deg = check_degrees(g)?;
    let n = g.n();
    let scale = g.volume() / (p.neg_b * p.window as f64);
    let inv_deg: Vec<f64> = deg.iter().map(|d| 1.0 / d).collect();

    let mut m = Array2::zeros((n, n));
    for start in (0..n).step_by(COLUMN_BLOCK) {
        let width = COLUMN_BLOCK.min(n - start);
        // Columns of D^-1 for this block.
        let mut x = Array2::zeros((n, width));
        for j in 0..width {
            x[[start + j, j]] = inv_deg[start + j];
        }
        let mut acc = Array2::<f64>::zeros((n, width));
        for _ in 0..p.window {
            let mut next = g.matmul(x.view());
            for (mut row, &s) in next.axis_iter_mut(Axis(0)).zip(&inv_deg) {
                row *= s;
            }
            acc += &next;
            x = next;
        }
        let mut block = m.slice_mut(s![.., start..start + width]);
        ndarray::Zip::from(&mut block).and(&acc).for_each(|mij, &sij| {
            *mij = (scale * sij).max(1.0).ln();
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in low-order matrix".into()));
    }
    Ok(m)
}

/// Oversampling and power-iteration settings for the randomized SVD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    pub oversample: usize,
    pub power_iters: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            oversample: 10,
            power_iters: 3,
        }
    }
}

pub(crate) fn to_nalgebra(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_nalgebra(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

fn orthonormalize(y: &Array2<f64>) -> Array2<f64> {
    let qr = to_nalgebra(y.view()).qr();
    from_nalgebra(&qr.q())
}

/// Top-`d` SVD of `a` as `(U_d, sigma_d)`, sorted descending, with each
/// column of `U_d` signed so its largest-magnitude entry is positive.
pub fn top_singular(
    a: ArrayView2<f64>,
    d: usize,
    seed: u64,
    opts: SvdOptions,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let (rows, cols) = a.dim();
    if d == 0 || d > rows.min(cols) {
        return Err(Error::InvalidParam(format!(
            "rank d={d} must lie in [1, {}]",
            rows.min(cols)
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in SVD input".into()));
    }

    let sketch = d + opts.oversample;
    let (u, sigma) = if 2 * sketch >= rows.min(cols) {
        let svd = to_nalgebra(a).svd(true, false);
        let u = from_nalgebra(svd.u.as_ref().expect("requested U"));
        (u, svd.singular_values.iter().copied().collect::<Vec<_>>())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = Array2::from_shape_fn((cols, sketch), |_| rng.gen_range(-1.0..1.0));
        let mut q = orthonormalize(&a.dot(&omega));
        for _ in 0..opts.power_iters {
            let z = orthonormalize(&a.t().dot(&q));
            q = orthonormalize(&a.dot(&z));
        }
        let small = q.t().dot(&a);
        let svd = to_nalgebra(small.view()).svd(true, false);
        let u_small = from_nalgebra(svd.u.as_ref().expect("requested U"));
        (q.dot(&u_small), svd.singular_values.iter().copied().collect())
    };

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let mut u_d = Array2::zeros((rows, d));
    let mut sigma_d = Vec::with_capacity(d);
    for (col, &k) in order.iter().take(d).enumerate() {
        let src = u.column(k);
        let pivot = src
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        u_d.column_mut(col).assign(&(&src * sign));
        sigma_d.push(sigma[k].max(0.0));
    }
    Ok((u_d, sigma_d))
}

/// `B = U_d sqrt(Sigma_d)` for the top-`d` singular triplets of `m`.
pub fn truncated_svd(m: ArrayView2<f64>, d: usize, seed: u64) -> Result<FeatureMatrix> {
    truncated_svd_with(m, d, seed, SvdOptions::default())
}

pub fn truncated_svd_with(
    m: ArrayView2<f64>,
    d: usize,
    seed: u64,
    opts: SvdOptions,
) -> Result<FeatureMatrix> {
    let (u, sigma) = top_singular(m, d, seed, opts)?;
    let roots = Array1::from_iter(sigma.iter().map(|s| s.sqrt()));
    let b = u * &roots.insert_axis(Axis(0));
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in feature matrix".into()));
    }
    Ok(FeatureMatrix {
        b,
        singular_values: sigma,
    })
}

/// Builds `M` for `g` and reduces it to `d` columns.
pub fn build_loworder_features(g: &Graph, p: &LowOrderParams, seed: u64) -> Result<FeatureMatrix> {
    p.validate(g.n())?;
    let m = netmf_matrix(g, p)?;
    truncated_svd(m.view(), p.dim, seed)
}

const MAGIC: &[u8; 8] = b"LNLMMAT1";

/// Writes a matrix as magic bytes, `rows` and `cols` as little-endian u64,
/// then row-major little-endian f64 entries.
pub fn write_matrix<W: Write>(mut out: W, a: ArrayView2<f64>) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(a.nrows() as u64).to_le_bytes())?;
    out.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for v in a.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(mut input: R) -> Result<Array2<f64>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidParam("not a matrix cache file".into()));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        input.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Shape(e.to_string()))
}

/// FNV-1a over the canonical edge list; stable across builds and platforms.
pub fn graph_hash(g: &Graph) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&(g.n() as u64).to_le_bytes());
    for id in g.original_ids() {
        feed(&id.to_le_bytes());
    }
    for (u, v, w) in g.edges() {
        feed(&(u as u64).to_le_bytes());
        feed(&(v as u64).to_le_bytes());
        feed(&w.to_le_bytes());
    }
    h
}

/// On-disk cache of `M` and `B` keyed by graph hash and parameters.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FeatureCache { dir: dir.into() }
    }

    fn stem(g: &Graph, p: &LowOrderParams, seed: u64) -> String {
        format!(
            "{:016x}-T{}-b{:016x}-d{}-s{}",
            graph_hash(g),
            p.window,
            p.neg_b.to_bits(),
            p.dim,
            seed
        )
    }

    pub fn matrix_path(&self, g: &Graph, p: &LowOrderParams, seed: u64) -> PathBuf {
        self.dir.join(format!("{}.M.bin", Self::stem(g, p, seed)))
    }

    pub fn features_path(&self, g: &Graph, p: &LowOrderParams, seed: u64) -> PathBuf {
        self.dir.join(format!("{}.B.bin", Self::stem(g, p, seed)))
    }

    /// Returns cached features if present, otherwise builds and stores both
    /// `M` and `B`.
    pub fn load_or_build(&self, g: &Graph, p: &LowOrderParams, seed: u64) -> Result<FeatureMatrix> {
        let fpath = self.features_path(g, p, seed);
        if fpath.exists() {
            let stored = read_matrix(BufReader::new(File::open(&fpath)?))?;
            if stored.nrows() == g.n() + 1 && stored.ncols() == p.dim {
                let singular_values = stored.row(g.n()).to_vec();
                let b = stored.slice(s![..g.n(), ..]).to_owned();
                return Ok(FeatureMatrix { b, singular_values });
            }
            log::warn!("ignoring malformed cache entry {}", fpath.display());
        }
        p.validate(g.n())?;
        std::fs::create_dir_all(&self.dir)?;
        let m = netmf_matrix(g, p)?;
        write_file(&self.matrix_path(g, p, seed), m.view())?;
        let feats = truncated_svd(m.view(), p.dim, seed)?;
        let mut stored = Array2::zeros((g.n() + 1, p.dim));
        stored.slice_mut(s![..g.n(), ..]).assign(&feats.b);
        stored
            .row_mut(g.n())
            .assign(&Array1::from(feats.singular_values.clone()));
        write_file(&fpath, stored.view())?;
        Ok(feats)
    }
}

fn write_file(path: &Path, a: ArrayView2<f64>) -> Result<()> {
    write_matrix(BufWriter::new(File::create(path)?), a)
}
