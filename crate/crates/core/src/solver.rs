//! Joint factorization of adjacency and random-walk features.
//!
//! Minimizes over non-negative `Z (n x m)`, `V (n x k)`, `U (k x m)`,
//! `H (k x d)`:
//!
//! ```text
//! L = ||A - Z Z^T||^2 + alpha ||Z - V U||^2 + beta ||V H - B||^2
//!     + gamma (||U||^2 + ||H||^2)
//! ```
//!
//! by alternating multiplicative updates in the order Z, V, H, U. Each update
//! is the ratio of the negative and positive parts of its block gradient, so
//! factors stay non-negative and every block objective is non-increasing.
//! `B` comes from an SVD and may hold negative entries; it enters the updates
//! through its positive part `B+` (numerator) and negative part `B-`
//! (denominator).

use ndarray::{Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::Graph;

/// Added to every update denominator.
pub const EPS: f64 = 1e-12;
/// Lower bound of the uniform initialisation.
pub const INIT_LO: f64 = 1e-6;
/// Relative slack allowed on a loss increase before `fit` reports a bug.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Local feature dimension (columns of Z).
    pub m: usize,
    /// Embedding dimension (columns of V).
    pub k: usize,
    /// Stop once the relative loss improvement drops below this.
    pub delta: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: 50.0,
            beta: 20.0,
            gamma: 20.0,
            m: 200,
            k: 128,
            delta: 1e-4,
            max_iter: 1000,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParam(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.m == 0 || self.m > n {
            return Err(Error::InvalidParam(format!("m={} must lie in [1, {n}]", self.m)));
        }
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidParam(format!("k={} must lie in [1, {n}]", self.k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub z: Array2<f64>,
    pub v: Array2<f64>,
    pub u: Array2<f64>,
    pub h: Array2<f64>,
}

impl Factors {
    pub fn zeros(n: usize, m: usize, k: usize, d: usize) -> Factors {
        Factors {
            z: Array2::zeros((n, m)),
            v: Array2::zeros((n, k)),
            u: Array2::zeros((k, m)),
            h: Array2::zeros((k, d)),
        }
    }

    pub fn all_finite_non_negative(&self) -> bool {
        [&self.z, &self.v, &self.u, &self.h]
            .iter()
            .all(|f| f.iter().all(|&x| x >= 0.0 && x.is_finite()))
    }

    fn check_shapes(&self, n: usize, d: usize) -> Result<()> {
        let (zn, m) = self.z.dim();
        let (vn, k) = self.v.dim();
        let ok = zn == n && vn == n && self.u.dim() == (k, m) && self.h.dim() == (k, d);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "factors Z{:?} V{:?} U{:?} H{:?} incompatible with n={n}, d={d}",
                self.z.dim(),
                self.v.dim(),
                self.u.dim(),
                self.h.dim()
            )))
        }
    }
}

/// Fitted factors and the loss recorded after each sweep. `loss_trace[0]` is
/// the loss of the initial factors (iteration 0).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub factors: Factors,
    pub loss_trace: Vec<(usize, f64)>,
    pub converged: bool,
    pub iterations_run: usize,
    /// Iterations where the plain Z rule would have raised the objective and
    /// the majorization step was taken instead.
    pub z_fallbacks: usize,
}

impl EmbeddingModel {
    /// The node embedding matrix `V`.
    pub fn embedding(&self) -> &Array2<f64> {
        &self.factors.v
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().map_or(f64::NAN, |t| t.1)
    }
}

/// I.i.d. uniform entries on `(INIT_LO, 1]`, drawn for Z, V, U, H in turn.
pub fn init_factors(n: usize, m: usize, k: usize, d: usize, seed: u64) -> Factors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |shape: (usize, usize)| {
        Array2::from_shape_fn(shape, |_| {
            let u: f64 = rng.gen();
            INIT_LO + (1.0 - INIT_LO) * (1.0 - u)
        })
    };
    let z = draw((n, m));
    let v = draw((n, k));
    let u = draw((k, m));
    let h = draw((k, d));
    Factors { z, v, u, h }
}

fn frob_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

fn diff_sq(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y))
}

/// `||A - Z Z^T||_F^2` via `||A||^2 - 2 tr(Z^T A Z) + ||Z^T Z||^2`.
pub fn adjacency_term(a: &Graph, z: ArrayView2<f64>) -> f64 {
    let az = a.matmul(z);
    let cross: f64 = Zip::from(&az).and(z).fold(0.0, |acc, &x, &y| acc + x * y);
    let gram = z.t().dot(&z);
    (a.frobenius_sq() - 2.0 * cross + frob_sq(gram.view())).max(0.0)
}

fn local_term(f: &Factors) -> f64 {
    diff_sq(f.z.view(), f.v.dot(&f.u).view())
}

fn feature_term(f: &Factors, b: ArrayView2<f64>) -> f64 {
    diff_sq(f.v.dot(&f.h).view(), b)
}

/// The full objective.
pub fn loss(a: &Graph, b: &FeatureMatrix, f: &Factors, h: &HyperParams) -> Result<f64> {
    if b.n() != a.n() {
        return Err(Error::Shape(format!("B has {} rows, graph has {} nodes", b.n(), a.n())));
    }
    f.check_shapes(a.n(), b.dim())?;
    Ok(adjacency_term(a, f.z.view())
        + h.alpha * local_term(f)
        + h.beta * feature_term(f, b.b.view())
        + h.gamma * (frob_sq(f.u.view()) + frob_sq(f.h.view())))
}

/// Objective restricted to the terms that involve Z.
pub fn z_objective(a: &Graph, f: &Factors, alpha: f64) -> f64 {
    adjacency_term(a, f.z.view()) + alpha * local_term(f)
}

/// Objective restricted to the terms that involve V.
pub fn v_objective(f: &Factors, b: ArrayView2<f64>, alpha: f64, beta: f64) -> f64 {
    alpha * local_term(f) + beta * feature_term(f, b)
}

/// Objective restricted to the terms that involve H.
pub fn h_objective(f: &Factors, b: ArrayView2<f64>, beta: f64, gamma: f64) -> f64 {
    beta * feature_term(f, b) + gamma * frob_sq(f.h.view())
}

/// Objective restricted to the terms that involve U.
pub fn u_objective(f: &Factors, alpha: f64, gamma: f64) -> f64 {
    alpha * local_term(f) + gamma * frob_sq(f.u.view())
}

fn split_sign(b: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    (b.mapv(|x| x.max(0.0)), b.mapv(|x| (-x).max(0.0)))
}

fn apply_ratio(
    x: ArrayView2<f64>,
    num: &Array2<f64>,
    den: &Array2<f64>,
    what: &str,
) -> Result<Array2<f64>> {
    let mut out = x.to_owned();
    Zip::from(&mut out)
        .and(num)
        .and(den)
        .for_each(|o, &n, &d| *o *= n / (d + EPS));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite entry after {what} update")));
    }
    Ok(out)
}

fn z_step(z: ArrayView2<f64>, az: &Array2<f64>, vu: &Array2<f64>, ztz: &Array2<f64>, alpha: f64) -> Result<Array2<f64>> {
    let mut num = az * 2.0;
    num.scaled_add(alpha, vu);
    let mut den = z.dot(ztz);
    den *= 2.0;
    den.scaled_add(alpha, &z);
    apply_ratio(z, &num, &den, "Z")
}

/// Exact minimizer of the quartic majorizer of the Z objective. Per entry,
/// `q = (Z/Z_old)^2` solves `2 S q^2 + alpha Z q = 2 A Z + alpha V U` with
/// `S = Z Z^T Z`.
fn z_mm_step(z: ArrayView2<f64>, az: &Array2<f64>, vu: &Array2<f64>, ztz: &Array2<f64>, alpha: f64) -> Result<Array2<f64>> {
    let s = z.dot(ztz);
    let mut out = z.to_owned();
    Zip::from(&mut out).and(az).and(vu).and(&s).for_each(|o, &az, &vu, &s| {
        let c = 2.0 * az + alpha * vu;
        let l = alpha * *o;
        let q = 2.0 * c / (l + (l * l + 8.0 * s * c).sqrt() + EPS);
        *o *= q.sqrt();
    });
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry after Z update".into()));
    }
    Ok(out)
}

fn v_step(
    z: ArrayView2<f64>,
    bp: &Array2<f64>,
    bn: &Array2<f64>,
    f: &Factors,
    alpha: f64,
    beta: f64,
) -> Result<Array2<f64>> {
    let ht = f.h.t();
    let mut num = z.dot(&f.u.t()) * alpha;
    num.scaled_add(beta, &bp.dot(&ht));
    let mut gram = f.u.dot(&f.u.t()) * alpha;
    gram.scaled_add(beta, &f.h.dot(&ht));
    let mut den = f.v.dot(&gram);
    den.scaled_add(beta, &bn.dot(&ht));
    apply_ratio(f.v.view(), &num, &den, "V")
}

fn h_step(
    v: ArrayView2<f64>,
    vtv: &Array2<f64>,
    bp: &Array2<f64>,
    bn: &Array2<f64>,
    h: ArrayView2<f64>,
    beta: f64,
    gamma: f64,
) -> Result<Array2<f64>> {
    let vt = v.t();
    let num = vt.dot(bp) * beta;
    let mut den = vtv.dot(&h) * beta;
    den.scaled_add(gamma, &h);
    den.scaled_add(beta, &vt.dot(bn));
    apply_ratio(h, &num, &den, "H")
}

fn u_step(
    z: ArrayView2<f64>,
    v: ArrayView2<f64>,
    vtv: &Array2<f64>,
    u: ArrayView2<f64>,
    alpha: f64,
    gamma: f64,
) -> Result<Array2<f64>> {
    let num = v.t().dot(&z) * alpha;
    let mut den = vtv.dot(&u) * alpha;
    den.scaled_add(gamma, &u);
    apply_ratio(u, &num, &den, "U")
}

/// `Z <- Z * (2 A Z + alpha V U) / (2 Z Z^T Z + alpha Z + eps)`.
pub fn update_z(a: &Graph, f: &Factors, alpha: f64) -> Result<Array2<f64>> {
    let z = f.z.view();
    z_step(z, &a.matmul(z), &f.v.dot(&f.u), &z.t().dot(&z), alpha)
}

/// Z update that never raises the Z objective: the multiplicative rule of
/// [`update_z`] when it does not, otherwise the majorization step.
pub fn update_z_monotone(a: &Graph, f: &Factors, alpha: f64) -> Result<Array2<f64>> {
    let shared = Shared::new(a, f.z.view(), f.v.dot(&f.u));
    Ok(shared.z_update(a, f.z.view(), alpha)?.0)
}

/// `V <- V * (alpha Z U^T + beta B+ H^T) / (alpha V U U^T + beta V H H^T + beta B- H^T + eps)`.
pub fn update_v(z: ArrayView2<f64>, b: ArrayView2<f64>, f: &Factors, alpha: f64, beta: f64) -> Result<Array2<f64>> {
    let (bp, bn) = split_sign(b);
    v_step(z, &bp, &bn, f, alpha, beta)
}

/// `H <- H * (beta V^T B+) / (beta V^T V H + gamma H + beta V^T B- + eps)`.
pub fn update_h(
    v: ArrayView2<f64>,
    b: ArrayView2<f64>,
    h: ArrayView2<f64>,
    beta: f64,
    gamma: f64,
) -> Result<Array2<f64>> {
    let (bp, bn) = split_sign(b);
    h_step(v, &v.t().dot(&v), &bp, &bn, h, beta, gamma)
}

/// `U <- U * (alpha V^T Z) / (alpha V^T V U + gamma U + eps)`.
pub fn update_u(
    z: ArrayView2<f64>,
    v: ArrayView2<f64>,
    u: ArrayView2<f64>,
    alpha: f64,
    gamma: f64,
) -> Result<Array2<f64>> {
    u_step(z, v, &v.t().dot(&v), u, alpha, gamma)
}

/// Gradients of the full objective with respect to Z, V, H, U.
pub fn gradients(a: &Graph, b: ArrayView2<f64>, f: &Factors, h: &HyperParams) -> [Array2<f64>; 4] {
    let z = f.z.view();
    let local = &f.z - &f.v.dot(&f.u); // Z - VU
    let feat = f.v.dot(&f.h) - b; // VH - B

    let mut gz = z.dot(&z.t().dot(&z)) * 4.0;
    gz.scaled_add(-4.0, &a.matmul(z));
    gz.scaled_add(2.0 * h.alpha, &local);

    let mut gv = local.dot(&f.u.t()) * (-2.0 * h.alpha);
    gv.scaled_add(2.0 * h.beta, &feat.dot(&f.h.t()));

    let mut gh = f.v.t().dot(&feat) * (2.0 * h.beta);
    gh.scaled_add(2.0 * h.gamma, &f.h);

    let mut gu = f.v.t().dot(&local) * (-2.0 * h.alpha);
    gu.scaled_add(2.0 * h.gamma, &f.u);

    [gz, gv, gh, gu]
}

/// Complementary-slackness residual: the largest `|grad * factor|` entry
/// over all four factors.
pub fn kkt_residual(a: &Graph, b: &FeatureMatrix, f: &Factors, h: &HyperParams) -> Result<f64> {
    f.check_shapes(a.n(), b.dim())?;
    let grads = gradients(a, b.b.view(), f, h);
    let factors = [&f.z, &f.v, &f.h, &f.u];
    Ok(grads
        .iter()
        .zip(factors)
        .map(|(g, x)| Zip::from(g).and(x).fold(0.0_f64, |m, &gi, &xi| m.max((gi * xi).abs())))
        .fold(0.0, f64::max))
}

/// Runs the alternating updates from a seeded random start.
pub fn fit(g: &Graph, b: &FeatureMatrix, h: &HyperParams) -> Result<EmbeddingModel> {
    let n = g.n();
    if let Some(u) = g.first_isolated() {
        return Err(Error::IsolatedNode(u));
    }
    if b.n() != n {
        return Err(Error::Shape(format!("B has {} rows, graph has {n} nodes", b.n())));
    }
    h.validate(n)?;
    let factors = init_factors(n, h.m, h.k, b.dim(), h.seed);
    fit_from(g, b, h, factors)
}

/// Products of the current Z (and V U) shared by the loss and the next Z
/// update.
struct Shared {
    az: Array2<f64>,
    ztz: Array2<f64>,
    vu: Array2<f64>,
    adjacency: f64,
}

impl Shared {
    fn new(a: &Graph, z: ArrayView2<f64>, vu: Array2<f64>) -> Shared {
        let az = a.matmul(z);
        let ztz = z.t().dot(&z);
        Self::from_products(a, z, az, ztz, vu)
    }

    fn from_products(a: &Graph, z: ArrayView2<f64>, az: Array2<f64>, ztz: Array2<f64>, vu: Array2<f64>) -> Shared {
        let adjacency = Self::adjacency(a, z, &az, &ztz);
        Shared {
            az,
            ztz,
            vu,
            adjacency,
        }
    }

    fn adjacency(a: &Graph, z: ArrayView2<f64>, az: &Array2<f64>, ztz: &Array2<f64>) -> f64 {
        let cross: f64 = Zip::from(az).and(z).fold(0.0, |acc, &x, &y| acc + x * y);
        (a.frobenius_sq() - 2.0 * cross + frob_sq(ztz.view())).max(0.0)
    }

    /// Returns the new Z with its `A Z` and `Z^T Z`, and whether the
    /// fallback was needed.
    fn z_update(&self, a: &Graph, z: ArrayView2<f64>, alpha: f64) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>, bool)> {
        let old = self.adjacency + alpha * diff_sq(z, self.vu.view());
        let cand = z_step(z, &self.az, &self.vu, &self.ztz, alpha)?;
        let az = a.matmul(cand.view());
        let ztz = cand.t().dot(&cand);
        let new = Self::adjacency(a, cand.view(), &az, &ztz) + alpha * diff_sq(cand.view(), self.vu.view());
        if new <= old {
            return Ok((cand, az, ztz, false));
        }
        let mm = z_mm_step(z, &self.az, &self.vu, &self.ztz, alpha)?;
        let az = a.matmul(mm.view());
        let ztz = mm.t().dot(&mm);
        Ok((mm, az, ztz, true))
    }
}

/// Like [`fit`] but starting from the given factors.
pub fn fit_from(g: &Graph, b: &FeatureMatrix, h: &HyperParams, mut f: Factors) -> Result<EmbeddingModel> {
    if b.n() != g.n() {
        return Err(Error::Shape(format!("B has {} rows, graph has {} nodes", b.n(), g.n())));
    }
    f.check_shapes(g.n(), b.dim())?;
    let bv = b.b.view();
    let (bp, bn) = split_sign(bv);
    let rest = |f: &Factors, vu: &Array2<f64>| {
        h.alpha * diff_sq(f.z.view(), vu.view())
            + h.beta * diff_sq(f.v.dot(&f.h).view(), bv)
            + h.gamma * (frob_sq(f.u.view()) + frob_sq(f.h.view()))
    };
    let mut shared = Shared::new(g, f.z.view(), f.v.dot(&f.u));
    let mut prev = shared.adjacency + rest(&f, &shared.vu);
    let mut trace = vec![(0, prev)];
    let mut converged = false;
    let mut iters = 0;
    let mut z_fallbacks = 0;

    while iters < h.max_iter {
        let (z, az, ztz, fell_back) = shared.z_update(g, f.z.view(), h.alpha)?;
        z_fallbacks += usize::from(fell_back);
        f.z = z;
        f.v = v_step(f.z.view(), &bp, &bn, &f, h.alpha, h.beta)?;
        let vtv = f.v.t().dot(&f.v);
        f.h = h_step(f.v.view(), &vtv, &bp, &bn, f.h.view(), h.beta, h.gamma)?;
        f.u = u_step(f.z.view(), f.v.view(), &vtv, f.u.view(), h.alpha, h.gamma)?;
        iters += 1;

        shared = Shared::from_products(g, f.z.view(), az, ztz, f.v.dot(&f.u));
        let cur = shared.adjacency + rest(&f, &shared.vu);
        if !cur.is_finite() {
            return Err(Error::Numeric(format!("loss became {cur} at iteration {iters}")));
        }
        trace.push((iters, cur));
        if cur - prev > MONOTONE_SLACK * prev.max(1.0) {
            return Err(Error::Numeric(format!(
                "loss increased from {prev:.9e} to {cur:.9e} at iteration {iters}"
            )));
        }
        let improvement = if prev > 0.0 { (prev - cur) / prev } else { 0.0 };
        log::debug!("iter {iters}: loss {cur:.9e} rel {improvement:.3e}");
        prev = cur;
        if improvement < h.delta {
            converged = true;
            break;
        }
    }
    if z_fallbacks > 0 {
        log::debug!("{z_fallbacks} of {iters} Z updates used the majorization step");
    }

    Ok(EmbeddingModel {
        factors: f,
        loss_trace: trace,
        converged,
        iterations_run: iters,
        z_fallbacks,
    })
}
