//! Small dense linear-algebra helpers shared by the model, attack and
//! training code: a hand-written power iteration for spectral norms, and a
//! thin wrapper over a full SVD for ranks and singular-value shrinkage.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Result of a power-iteration spectral norm estimate.
#[derive(Debug, Clone, Copy)]
pub struct SpectralNorm {
    pub value: f64,
    /// False when the iteration hit `max_iter` before the estimate settled;
    /// `value` is then the best estimate so far.
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value of `m` by power iteration on `MᵀM`.
///
/// The starting vector is drawn from a fixed internal seed, so repeated
/// calls are deterministic. Convergence is declared when successive
/// estimates differ by at most `tol * max(1, estimate)`.
pub fn spectral_norm(m: &Array2<f64>, tol: f64, max_iter: usize) -> SpectralNorm {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return SpectralNorm { value: 0.0, converged: true, iterations: 0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_facade);
    let mut v = Array1::from_shape_fn(cols, |_| rng.sample::<f64, _>(StandardNormal));
    let nv = l2_norm(&v);
    if nv == 0.0 {
        v.fill(1.0 / (cols as f64).sqrt());
    } else {
        v.mapv_inplace(|a| a / nv);
    }
    let mut prev = f64::INFINITY;
    for it in 1..=max_iter {
        let u = m.dot(&v);
        let sigma = l2_norm(&u);
        if sigma <= f64::MIN_POSITIVE {
            // v lies in the null space; with a random start this only
            // happens for the zero matrix.
            return SpectralNorm { value: 0.0, converged: true, iterations: it };
        }
        let w = m.t().dot(&u);
        let nw = l2_norm(&w);
        v = w.mapv(|a| a / nw);
        if (sigma - prev).abs() <= tol * sigma.max(1.0) {
            return SpectralNorm { value: sigma, converged: true, iterations: it };
        }
        prev = sigma;
    }
    log::warn!(
        "power iteration did not settle after {} iterations (last estimate {})",
        max_iter,
        prev
    );
    SpectralNorm { value: prev, converged: false, iterations: max_iter }
}

/// Thin SVD `m = u · diag(s) · vt`, singular values sorted descending.
pub fn svd(m: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let na = to_na(m);
    let svd = na.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested vt");
    let s = Array1::from_iter(svd.singular_values.iter().copied());
    (from_na(&u), s, from_na(&vt))
}

/// Singular values only, sorted descending.
pub fn singular_values(m: &Array2<f64>) -> Array1<f64> {
    let na = to_na(m);
    Array1::from_iter(na.singular_values().iter().copied())
}

/// Number of singular values exceeding `tol * sigma_max`. The zero matrix
/// has rank 0 for every tolerance.
pub fn numerical_rank(m: &Array2<f64>, tol: f64) -> usize {
    let s = singular_values(m);
    let smax = s.iter().copied().fold(0.0f64, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * smax).count()
}

/// Singular-value soft threshold: every singular value is shrunk by `tau`
/// and clipped at zero. `tau = 0` returns the input unchanged.
pub fn singular_shrink(m: &Array2<f64>, tau: f64) -> Array2<f64> {
    if tau == 0.0 {
        return m.clone();
    }
    let (u, s, vt) = svd(m);
    let k = s.len();
    let mut shrunk = Array2::zeros(m.dim());
    for i in 0..k {
        let si = (s[i] - tau).max(0.0);
        if si == 0.0 {
            continue;
        }
        let ui = u.column(i);
        let vi = vt.row(i);
        for (r, urow) in ui.iter().enumerate() {
            for (c, vcol) in vi.iter().enumerate() {
                shrunk[[r, c]] += si * urow * vcol;
            }
        }
    }
    shrunk
}

pub fn l2_norm(v: &Array1<f64>) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.dim();
    DMatrix::from_fn(rows, cols, |r, c| m[[r, c]])
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(r, c)| m[(r, c)])
}
