//! Minimal-norm point under half-space constraints:
//!
//! ```text
//! min ||r||^2   s.t.   a_j . r >= c_j  for all j
//! ```
//!
//! Solved by a dual active-set scheme in the style of Goldfarb and Idnani:
//! starting from the unconstrained optimum `r = 0`, the most violated
//! constraint enters; the primal step direction is the entering normal
//! deflected off the active normals, `z = (a_p - N ρ)/2` with
//! `ρ = (NᵀN)⁺ Nᵀ a_p`, and the step length is the smaller of the distance
//! that satisfies the entering constraint and the distance at which an
//! active multiplier would cross zero (which drops that constraint). A step
//! that is blocked in both senses proves the constraints contradictory.
//!
//! At the solution the KKT conditions hold by construction: stationarity
//! `2r = Σ λ_j a_j`, primal feasibility within tolerance, `λ >= 0`, and
//! complementary slackness on the working set. Infeasible systems (for
//! example an all-zero normal with a positive offset, or exactly opposed
//! normals) are reported through `feasible = false`; the returned `r` is
//! then the last iterate.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub r: Array1<f64>,
    /// One multiplier per constraint; zero off the active set.
    pub multipliers: Vec<f64>,
    /// Indices of active constraints, in entry order.
    pub active: Vec<usize>,
    pub feasible: bool,
    pub iterations: usize,
    /// Max of primal violation, stationarity residual and complementarity
    /// residual at the returned point.
    pub kkt_residual: f64,
}

/// Projects the origin onto `{r : a_j . r >= c_j}`. `a` holds one constraint
/// normal per row. `tol` scales every feasibility threshold.
pub fn min_norm_halfspaces(
    a: &Array2<f64>,
    c: &Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> QpSolution {
    let (k, d) = a.dim();
    assert_eq!(k, c.len(), "one offset per constraint row");
    let scale = 1.0 + c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let feas_tol = tol * scale;

    let mut r = Array1::zeros(d);
    let mut active: Vec<usize> = Vec::new();
    let mut lam: Vec<f64> = Vec::new(); // multipliers of the active set
    let mut iterations = 0usize;

    'outer: loop {
        iterations += 1;
        if iterations > max_iter {
            log::warn!("active-set projection hit the iteration cap {}", max_iter);
            return finish(a, c, r, collect_multipliers(k, &active, &lam), active, iterations, false);
        }

        // Most violated constraint enters.
        let mut p = 0usize;
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            let w = c[j] - a.row(j).dot(&r);
            if w > worst {
                worst = w;
                p = j;
            }
        }
        if worst <= feas_tol {
            return finish(a, c, r, collect_multipliers(k, &active, &lam), active, iterations, true);
        }
        let ap = a.row(p).to_owned();
        let mut u = 0.0f64; // multiplier of the entering constraint

        loop {
            // Deflect the entering normal off the active normals.
            let rho = dual_direction(a, &active, &ap);
            let mut z = ap.clone();
            for (i, &j) in active.iter().enumerate() {
                for col in 0..d {
                    z[col] -= rho[i] * a[[j, col]];
                }
            }
            z.mapv_inplace(|v| 0.5 * v);

            // Distance until an active multiplier hits zero.
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for i in 0..active.len() {
                if rho[i] > 1e-14 {
                    let step = lam[i] / rho[i];
                    if step < t1 {
                        t1 = step;
                        block = Some(i);
                    }
                }
            }
            // Distance until the entering constraint is satisfied.
            let s_p = ap.dot(&r) - c[p];
            let denom = ap.dot(&z);
            let t2 = if denom > 1e-14 * (1.0 + ap.dot(&ap)) { -s_p / denom } else { f64::INFINITY };

            if !t1.is_finite() && !t2.is_finite() {
                // No dual ascent direction exists: contradictory system.
                return finish(
                    a,
                    c,
                    r,
                    collect_multipliers(k, &active, &lam),
                    active,
                    iterations,
                    false,
                );
            }
            let t = t1.min(t2);
            for col in 0..d {
                r[col] += t * z[col];
            }
            for i in 0..active.len() {
                lam[i] -= t * rho[i];
            }
            u += t;

            if t2 <= t1 {
                // Full step: the entering constraint becomes active.
                active.push(p);
                lam.push(u);
                continue 'outer;
            }
            // Partial step: drop the blocking constraint and retry.
            let bi = block.expect("finite t1 has a blocking index");
            active.remove(bi);
            lam.remove(bi);
        }
    }
}

/// `ρ = (NᵀN)⁺ Nᵀ a_p` over the active normals; empty active set gives an
/// empty direction.
fn dual_direction(a: &Array2<f64>, active: &[usize], ap: &Array1<f64>) -> Vec<f64> {
    let p = active.len();
    if p == 0 {
        return Vec::new();
    }
    let mut gram = DMatrix::zeros(p, p);
    for (i, &ji) in active.iter().enumerate() {
        for (l, &jl) in active.iter().enumerate() {
            gram[(i, l)] = a.row(ji).dot(&a.row(jl));
        }
    }
    let rhs = DVector::from_fn(p, |i, _| a.row(active[i]).dot(ap));
    let svd = gram.svd(true, true);
    let eps = 1e-13 * svd.singular_values.iter().fold(1.0f64, |acc, v| acc.max(*v));
    let rho = svd.solve(&rhs, eps).expect("svd solve with u and v_t computed");
    rho.iter().copied().collect()
}

fn collect_multipliers(k: usize, active: &[usize], lam: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0f64; k];
    for (i, &j) in active.iter().enumerate() {
        out[j] = lam[i].max(0.0);
    }
    out
}

fn finish(
    a: &Array2<f64>,
    c: &Array1<f64>,
    r: Array1<f64>,
    multipliers: Vec<f64>,
    active: Vec<usize>,
    iterations: usize,
    feasible: bool,
) -> QpSolution {
    let k = c.len();
    let d = a.ncols();
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    let mut stat = vec![0.0f64; d];
    for col in 0..d {
        stat[col] = 2.0 * r[col];
    }
    for j in 0..k {
        let slack = c[j] - a.row(j).dot(&r);
        primal = primal.max(slack);
        comp = comp.max((multipliers[j] * slack).abs());
        for col in 0..d {
            stat[col] -= multipliers[j] * a[[j, col]];
        }
    }
    let stat_res = stat.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let kkt_residual = primal.max(0.0).max(comp).max(stat_res);
    QpSolution { r, multipliers, active, feasible, iterations, kkt_residual }
}
