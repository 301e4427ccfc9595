//! Minimal-norm targeted attacks and budgeted loss ascent.
//!
//! A targeted attack asks for the smallest perturbation `r` that flips a
//! prescribed set of labels at the point `x`:
//!
//! ```text
//! min ||r||_2   s.t.   -y_j h_j(x+r) >= t_j   for j in the target set,
//!                       y_j h_j(x+r) >= t_j   for the rest (preserve mode).
//! ```
//!
//! The margins `t_j` keep solutions strictly off the decision boundary.
//! Three solvers cover the quality/generality trade-off:
//!
//! * [`AttackMethod::ExactLinear`] rewrites the constraints as half-spaces in
//!   `r` and projects the origin with the dual active-set solver. It needs a
//!   linear model; the budget enters only as a final check, so the returned
//!   norm is the true constrained minimum even when it exceeds `mu_r`.
//! * [`AttackMethod::Pgd`] descends a hinge surrogate projected onto the
//!   budget ball until a feasible point appears, then bisects the ball radius
//!   to squeeze the norm. Works for any differentiable model.
//! * [`AttackMethod::Penalty`] minimizes `||r||^2 + c * sum hinge^2` with a
//!   doubling penalty weight and no ball constraint, keeping the best
//!   feasible iterate seen.
//!
//! [`loss_ascent`] is the dual tool: instead of flipping chosen labels with a
//! minimal `r`, it spends the whole budget maximizing a loss.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::l2_norm;
use crate::model::{LinearModel, Loss, Model};
use crate::qp::min_norm_halfspaces;

/// Slack added above the feasibility margin while optimizing, so float error
/// at the stopping point does not undercut the actual constraint.
const MARGIN_PUSH: f64 = 1e-6;
/// Scale of the tolerance granted when checking margins.
const FEAS_TOL: f64 = 1e-9;
/// Tolerance granted on the norm budget.
const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    Pgd,
    Penalty,
    ExactLinear,
}

impl AttackMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Pgd => "pgd",
            AttackMethod::Penalty => "penalty",
            AttackMethod::ExactLinear => "exact_linear",
        }
    }

    pub fn from_name(name: &str) -> Result<AttackMethod> {
        match name {
            "pgd" => Ok(AttackMethod::Pgd),
            "penalty" => Ok(AttackMethod::Penalty),
            "exact_linear" => Ok(AttackMethod::ExactLinear),
            _ => Err(Error::InvalidArgument(format!("unknown attack method `{}`", name))),
        }
    }
}

/// Feasibility margin, either shared by all labels or given per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Margin {
    Uniform(f64),
    PerLabel(Vec<f64>),
}

impl Default for Margin {
    fn default() -> Margin {
        Margin::Uniform(1e-3)
    }
}

impl Margin {
    pub fn value(&self, j: usize) -> f64 {
        match self {
            Margin::Uniform(t) => *t,
            Margin::PerLabel(v) => v[j],
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let check = |t: f64| -> Result<()> {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "margin must be finite and non-negative, got {}",
                    t
                )));
            }
            Ok(())
        };
        match self {
            Margin::Uniform(t) => check(*t),
            Margin::PerLabel(v) => {
                if v.len() != m {
                    return Err(Error::InvalidArgument(format!(
                        "per-label margin has {} entries, model has {} labels",
                        v.len(),
                        m
                    )));
                }
                v.iter().try_for_each(|t| check(*t))
            }
        }
    }
}

/// Everything a targeted attack needs besides the instance itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Norm budget for the perturbation.
    pub mu_r: f64,
    #[serde(default)]
    pub margin: Margin,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Gradient step for loss ascent; `None` picks `mu_r / 20`. The targeted
    /// attacks size their own steps (Polyak for the hinge, a line search for
    /// the penalty objective).
    #[serde(default)]
    pub step: Option<f64>,
    /// Optimizer restarts; the first always starts at `r = 0`, the rest at
    /// seeded random points in the budget ball.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_method")]
    pub method: AttackMethod,
    #[serde(default)]
    pub seed: u64,
    /// Require every non-target label to keep its margin. Without this the
    /// attack only has to flip the targets.
    #[serde(default = "default_true")]
    pub preserve_others: bool,
}

fn default_max_iter() -> usize {
    500
}

fn default_restarts() -> usize {
    3
}

fn default_method() -> AttackMethod {
    AttackMethod::Pgd
}

fn default_true() -> bool {
    true
}

impl AttackSpec {
    pub fn new(mu_r: f64) -> AttackSpec {
        AttackSpec {
            mu_r,
            margin: Margin::default(),
            max_iter: default_max_iter(),
            step: None,
            restarts: default_restarts(),
            method: default_method(),
            seed: 0,
            preserve_others: true,
        }
    }

    pub fn with_method(mu_r: f64, method: AttackMethod) -> AttackSpec {
        AttackSpec { method, ..AttackSpec::new(mu_r) }
    }

    pub fn step_size(&self) -> f64 {
        self.step.unwrap_or(self.mu_r / 20.0)
    }

    fn validate(&self, m: usize) -> Result<()> {
        if !self.mu_r.is_finite() || self.mu_r <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "budget mu_r must be finite and positive, got {}",
                self.mu_r
            )));
        }
        self.margin.validate(m)?;
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if let Some(s) = self.step {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "step must be finite and positive, got {}",
                    s
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub r: Array1<f64>,
    pub norm: f64,
    /// Margins hold at `r` and the norm fits the budget.
    pub feasible: bool,
    /// Margins hold at `r` regardless of the budget. Lets callers tell an
    /// over-budget solution apart from a structurally impossible one.
    pub margins_ok: bool,
    /// Labels with `y_j h_j(x + r) <= 0`, whether targeted or not.
    pub flipped: Vec<usize>,
    /// Optimizer iterations consumed over all restarts and phases.
    pub iterations: usize,
}

/// One feasibility constraint: `sign * h_j(x + r) >= margin`.
struct Term {
    label: usize,
    sign: f64,
    margin: f64,
    /// Constraint offset relative to the base point, `margin - sign * h_j(x)`;
    /// sets the scale of the feasibility tolerance.
    offset: f64,
}

fn build_terms(model: &Model, x: &Array1<f64>, y: &Array1<f64>, targets: &[usize], spec: &AttackSpec) -> Vec<Term> {
    let m = model.m();
    let h0 = model.scores(x);
    let mut targeted = vec![false; m];
    for &j in targets {
        targeted[j] = true;
    }
    let mut terms = Vec::new();
    for j in 0..m {
        let sign = if targeted[j] {
            -y[j]
        } else if spec.preserve_others {
            y[j]
        } else {
            continue;
        };
        let margin = spec.margin.value(j);
        terms.push(Term { label: j, sign, margin, offset: margin - sign * h0[j] });
    }
    terms
}

fn margins_hold(terms: &[Term], h: &Array1<f64>) -> bool {
    terms
        .iter()
        .all(|tm| tm.sign * h[tm.label] >= tm.margin - FEAS_TOL * (1.0 + tm.offset.abs()))
}

fn hinge_value(terms: &[Term], h: &Array1<f64>) -> f64 {
    terms
        .iter()
        .map(|tm| (tm.margin + MARGIN_PUSH - tm.sign * h[tm.label]).max(0.0))
        .sum()
}

fn project_ball(r: &mut Array1<f64>, radius: f64) {
    let n = l2_norm(r);
    if n > radius {
        *r *= radius / n;
    }
}

/// Finds the smallest `r` flipping `targets` on `model` at `(x, y)` under
/// `spec`. Labels are flipped relative to `y`; `y` entries must be `+1`/`-1`.
/// The returned outcome is best-effort when infeasible: `r` is the exact
/// over-budget optimum for the exact method and the lowest-surrogate iterate
/// for the gradient methods.
pub fn targeted_attack(
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    targets: &[usize],
    spec: &AttackSpec,
) -> Result<AttackOutcome> {
    let (d, m) = (model.d(), model.m());
    if x.len() != d {
        return Err(Error::InvalidArgument(format!(
            "input has {} features, model expects {}",
            x.len(),
            d
        )));
    }
    if y.len() != m {
        return Err(Error::InvalidArgument(format!(
            "label vector has {} entries, model has {} labels",
            y.len(),
            m
        )));
    }
    if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::InvalidArgument(format!("labels must be +1 or -1, got {}", bad)));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("target set is empty".into()));
    }
    let mut seen = vec![false; m];
    for &j in targets {
        if j >= m {
            return Err(Error::InvalidArgument(format!("target label {} out of range (m={})", j, m)));
        }
        if seen[j] {
            return Err(Error::InvalidArgument(format!("target label {} listed twice", j)));
        }
        seen[j] = true;
    }
    spec.validate(m)?;

    let terms = build_terms(model, x, y, targets, spec);
    let (r, iterations) = match spec.method {
        AttackMethod::ExactLinear => {
            let lin = model.as_linear().ok_or_else(|| {
                Error::InvalidArgument("the exact attack requires a linear model".into())
            })?;
            exact_linear(lin, &terms, spec)
        }
        AttackMethod::Pgd => pgd_attack(model, x, &terms, spec),
        AttackMethod::Penalty => penalty_attack(model, x, &terms, spec),
    };

    let h = model.scores(&(x + &r));
    let margins_ok = margins_hold(&terms, &h);
    let norm = l2_norm(&r);
    let feasible = margins_ok && norm <= spec.mu_r + BUDGET_TOL;
    let flipped = (0..m).filter(|&j| y[j] * h[j] <= 0.0).collect();
    Ok(AttackOutcome { r, norm, feasible, margins_ok, flipped, iterations })
}

/// Half-space projection for the linear model. Ignores the budget; the caller
/// compares the returned norm against it.
fn exact_linear(lin: &LinearModel, terms: &[Term], spec: &AttackSpec) -> (Array1<f64>, usize) {
    let d = lin.d();
    let w = lin.weights();
    let mut a = Array2::zeros((terms.len(), d));
    let mut c = Array1::zeros(terms.len());
    for (row, tm) in terms.iter().enumerate() {
        for i in 0..d {
            a[[row, i]] = tm.sign * w[[i, tm.label]];
        }
        c[row] = tm.offset;
    }
    let sol = min_norm_halfspaces(&a, &c, 1e-10, spec.max_iter.max(200));
    (sol.r, sol.iterations)
}

/// Lowest-surrogate iterate seen, reported when no feasible point is found.
struct Effort {
    hinge: f64,
    r: Array1<f64>,
}

impl Effort {
    fn new(d: usize) -> Effort {
        Effort { hinge: f64::INFINITY, r: Array1::zeros(d) }
    }

    fn offer(&mut self, hinge: f64, r: &Array1<f64>) {
        if hinge < self.hinge {
            self.hinge = hinge;
            self.r = r.clone();
        }
    }
}

/// Projected subgradient descent of the hinge inside the `radius` ball, with
/// the Polyak step `L(r) / ||g||^2`. Whenever the radius admits a feasible
/// point the hinge minimum in the ball is zero, so the step targets the true
/// optimum and converges geometrically on piecewise-linear (linear-model)
/// hinges. Returns as soon as the margins hold; the hinge aims `MARGIN_PUSH`
/// past them, so the stop test is the real constraint, not the surrogate.
fn hinge_descent(
    model: &Model,
    x: &Array1<f64>,
    terms: &[Term],
    r: &mut Array1<f64>,
    radius: f64,
    max_iter: usize,
    effort: &mut Effort,
) -> (bool, usize) {
    let m = model.m();
    let mut used = 0;
    let mut stall = 0usize;
    let mut best_hinge = f64::INFINITY;
    for k in 0..=max_iter {
        let xp = x + &*r;
        let h = model.scores(&xp);
        let hinge = hinge_value(terms, &h);
        effort.offer(hinge, r);
        if margins_hold(terms, &h) {
            return (true, used);
        }
        if k == max_iter {
            break;
        }
        // An infeasible radius leaves the hinge on a positive plateau; give
        // up once it stops improving instead of burning the whole budget.
        if hinge < best_hinge * (1.0 - 1e-12) {
            best_hinge = hinge;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 60 {
                break;
            }
        }
        used += 1;
        let mut coeffs = Array1::zeros(m);
        for tm in terms {
            if tm.margin + MARGIN_PUSH - tm.sign * h[tm.label] > 0.0 {
                coeffs[tm.label] -= tm.sign;
            }
        }
        let g = model.weighted_score_grad(&xp, &coeffs).expect("dimensions validated upfront");
        let g2 = g.iter().map(|v| v * v).sum::<f64>();
        if g2 < 1e-30 {
            break;
        }
        r.scaled_add(-hinge / g2, &g);
        project_ball(r, radius);
    }
    (false, used)
}

/// Restores margins with simultaneous least-norm corrections: one step moves
/// every cushion-violating constraint onto its cushion along the combined
/// normals. Exact in one step for linear scores even when the feasible set is
/// a needle with several active constraints, where both the summed hinge and
/// one-at-a-time projections crawl; a Gauss-Newton local step otherwise.
fn repair_margins(
    model: &Model,
    x: &Array1<f64>,
    terms: &[Term],
    r: &mut Array1<f64>,
    radius: f64,
    cap: usize,
    effort: &mut Effort,
) -> (bool, usize) {
    use nalgebra::{DMatrix, DVector};

    let d = r.len();
    let mut used = 0;
    for _ in 0..=cap {
        let xp = x + &*r;
        let h = model.scores(&xp);
        effort.offer(hinge_value(terms, &h), r);
        if margins_hold(terms, &h) {
            return (true, used);
        }
        if used == cap {
            break;
        }
        used += 1;
        let Ok(jac) = model.score_jacobian(&xp) else { break };
        let viol: Vec<(usize, f64)> = terms
            .iter()
            .enumerate()
            .filter_map(|(i, tm)| {
                let v = tm.margin + MARGIN_PUSH - tm.sign * h[tm.label];
                (v > 0.0).then_some((i, v))
            })
            .collect();
        if viol.is_empty() {
            break;
        }
        let a = viol.len();
        let mut n_mat = DMatrix::zeros(d, a);
        for (c, (i, _)) in viol.iter().enumerate() {
            let tm = &terms[*i];
            for row in 0..d {
                n_mat[(row, c)] = tm.sign * jac[(row, tm.label)];
            }
        }
        let gram = n_mat.transpose() * &n_mat;
        let ridge = 1e-12 * (1.0 + gram.trace() / a as f64);
        let reg = &gram + DMatrix::identity(a, a) * ridge;
        let rhs = DVector::from_iterator(a, viol.iter().map(|(_, v)| *v));
        let Some(lam) = reg.lu().solve(&rhs) else { break };
        let delta = n_mat * lam;
        for row in 0..d {
            r[row] += delta[row];
        }
        project_ball(r, radius);
    }
    (false, used)
}

/// Norm descent along the feasible boundary by gradient projection with
/// active-set pivoting. Radius bisection alone stalls when the feasible cap
/// of the sphere is a thin lens, and a radial shrink has fixed points at the
/// min-norm point of a non-optimal face. Here each step projects `-r` onto
/// the null space of the near-active constraint normals, slides until the
/// unconstrained minimum along the ray or the first blocking constraint, and
/// when the projection vanishes drops the most negative multiplier; a point
/// where every multiplier is nonnegative satisfies the KKT conditions and the
/// walk stops. Curved scores drift off the linearized face, so steps pass
/// through a margin repair and count only on net improvement.
fn polish_feasible(
    model: &Model,
    x: &Array1<f64>,
    terms: &[Term],
    best: &mut Array1<f64>,
    mu_r: f64,
    budget: usize,
    effort: &mut Effort,
) -> usize {
    use nalgebra::{DMatrix, DVector};

    let d = best.len();
    let mut left = budget as isize;
    let mut norm = l2_norm(best);
    let mut total = 0usize;

    'outer: while left > 0 && norm > 1e-12 {
        let xp = x + &*best;
        let h = model.scores(&xp);
        let Ok(jac) = model.score_jacobian(&xp) else { break };
        total += 1;
        left -= 1;

        let slack: Vec<f64> = terms.iter().map(|tm| tm.sign * h[tm.label] - tm.margin).collect();
        let mut active: Vec<usize> = (0..terms.len())
            .filter(|&i| slack[i] <= 4.0 * MARGIN_PUSH * (1.0 + terms[i].offset.abs()))
            .collect();

        let normal = |i: usize| -> Array1<f64> { jac.column(terms[i].label).to_owned() * terms[i].sign };

        for _pivot in 0..(2 * terms.len() + 4) {
            let a = active.len();
            let u = if a == 0 {
                -best.clone()
            } else {
                let mut n_mat = DMatrix::zeros(d, a);
                for (c, &i) in active.iter().enumerate() {
                    let col = normal(i);
                    for rr in 0..d {
                        n_mat[(rr, c)] = col[rr];
                    }
                }
                let gram = n_mat.transpose() * &n_mat;
                let ridge = 1e-12 * (1.0 + gram.trace() / a as f64);
                let reg = &gram + DMatrix::identity(a, a) * ridge;
                let rhs = n_mat.transpose() * DVector::from_iterator(d, best.iter().copied());
                let Some(lam) = reg.lu().solve(&rhs) else { break 'outer };
                let un = &n_mat * &lam;
                let u = Array1::from_iter(un.iter().copied()) - &*best;
                let un_norm = l2_norm(&u);
                if un_norm <= 1e-10 * (1.0 + norm) {
                    // Stationary on this face: KKT multipliers are `lam` up to
                    // a positive factor; drop the most negative one.
                    let scale = 1.0 + lam.amax();
                    let (drop, worst) = lam
                        .iter()
                        .enumerate()
                        .min_by(|p, q| p.1.partial_cmp(q.1).expect("multipliers are finite"))
                        .expect("active set non-empty");
                    if *worst < -1e-9 * scale {
                        active.remove(drop);
                        continue;
                    }
                    break 'outer;
                }
                u
            };
            let u2 = u.dot(&u);
            if u2 <= 0.0 {
                break 'outer;
            }
            let t_star = -best.dot(&u) / u2;
            if t_star <= 0.0 {
                break 'outer;
            }
            // First blocking constraint along the ray.
            let mut t_cap = t_star;
            let mut block: Option<usize> = None;
            for (i, tm) in terms.iter().enumerate() {
                if active.contains(&i) {
                    continue;
                }
                let rate = normal(i).dot(&u);
                if rate < -1e-12 * (1.0 + tm.offset.abs()) {
                    let s = (slack[i] - MARGIN_PUSH).max(0.0);
                    let ti = s / -rate;
                    if ti < t_cap {
                        t_cap = ti;
                        block = Some(i);
                    }
                }
            }
            if t_cap <= 1e-14 * (1.0 + norm) {
                match block {
                    Some(i) => {
                        active.push(i);
                        continue;
                    }
                    None => break 'outer,
                }
            }
            let mut cand = &*best + &(&u * t_cap);
            project_ball(&mut cand, mu_r);
            let (ok, used) = repair_margins(model, x, terms, &mut cand, mu_r, 40.min(left.max(0) as usize), effort);
            total += used;
            left -= used.max(1) as isize;
            let cand_norm = l2_norm(&cand);
            if ok && cand_norm < norm * (1.0 - 1e-12) {
                *best = cand;
                norm = cand_norm;
                continue 'outer;
            }
            break 'outer;
        }
        break;
    }
    total
}

fn random_in_ball(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Array1<f64> {
    let dir = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
    let n = l2_norm(&dir);
    if n == 0.0 {
        return dir;
    }
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / d as f64) / n;
    dir * scale
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Phase A finds any feasible point in the budget ball; phase B bisects the
/// radius around the smallest feasible norm, warm-starting each probe from
/// the best point scaled onto the candidate ball.
fn pgd_attack(model: &Model, x: &Array1<f64>, terms: &[Term], spec: &AttackSpec) -> (Array1<f64>, usize) {
    let d = model.d();
    let inner = spec.max_iter;
    let mut effort = Effort::new(d);
    let mut best: Option<Array1<f64>> = None;
    let mut total = 0usize;

    for restart in 0..spec.restarts {
        let mut r = if restart == 0 {
            Array1::zeros(d)
        } else {
            random_in_ball(&mut restart_rng(spec.seed, restart), d, spec.mu_r)
        };
        let (found, used) =
            hinge_descent(model, x, terms, &mut r, spec.mu_r, spec.max_iter, &mut effort);
        total += used;
        let found = found || {
            // The summed hinge stalls on some corner geometries where
            // one-at-a-time projections still converge.
            let (ok, used) = repair_margins(model, x, terms, &mut r, spec.mu_r, spec.max_iter, &mut effort);
            total += used;
            ok
        };
        if !found {
            continue;
        }
        let mut hi = l2_norm(&r);
        let mut lo = 0.0f64;
        let mut local = r;
        for _ in 0..24 {
            if hi - lo <= 0.003 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let base = l2_norm(&local);
            let mut probe = if base > 0.0 { &local * (mid / base) } else { local.clone() };
            let (ok, used) = hinge_descent(model, x, terms, &mut probe, mid, inner, &mut effort);
            total += used;
            if ok {
                hi = l2_norm(&probe);
                local = probe;
            } else {
                lo = mid;
            }
        }
        total += polish_feasible(model, x, terms, &mut local, spec.mu_r, 2 * inner, &mut effort);
        if best.as_ref().map_or(true, |b| l2_norm(&local) < l2_norm(b)) {
            best = Some(local);
        }
    }
    (best.unwrap_or(effort.r), total)
}

/// Unconstrained penalty descent with a doubling weight on the squared hinge.
/// The best iterate whose margins hold is kept even when its norm exceeds the
/// budget, so over-budget problems still report their cost.
fn penalty_attack(model: &Model, x: &Array1<f64>, terms: &[Term], spec: &AttackSpec) -> (Array1<f64>, usize) {
    let d = model.d();
    let m = model.m();
    let inner = (spec.max_iter / 8).max(40);
    let mut effort = Effort::new(d);
    let mut best: Option<Array1<f64>> = None;
    let mut best_norm = f64::INFINITY;
    let mut total = 0usize;

    let objective = |r: &Array1<f64>, c: f64| -> f64 {
        let h = model.scores(&(x + r));
        let pen: f64 = terms
            .iter()
            .map(|tm| {
                let v = (tm.margin + MARGIN_PUSH - tm.sign * h[tm.label]).max(0.0);
                v * v
            })
            .sum();
        r.iter().map(|v| v * v).sum::<f64>() + c * pen
    };

    for restart in 0..spec.restarts {
        let mut r = if restart == 0 {
            Array1::zeros(d)
        } else {
            random_in_ball(&mut restart_rng(spec.seed, restart), d, spec.mu_r)
        };
        let mut c = 1.0f64;
        for _stage in 0..12 {
            let mut step = 1.0 / (1.0 + c);
            for _ in 0..inner {
                total += 1;
                let xp = x + &r;
                let h = model.scores(&xp);
                effort.offer(hinge_value(terms, &h), &r);
                if margins_hold(terms, &h) {
                    let n = l2_norm(&r);
                    if n < best_norm {
                        best_norm = n;
                        best = Some(r.clone());
                    }
                }
                let mut coeffs = Array1::zeros(m);
                for tm in terms {
                    let act = (tm.margin + MARGIN_PUSH - tm.sign * h[tm.label]).max(0.0);
                    if act > 0.0 {
                        coeffs[tm.label] -= 2.0 * c * act * tm.sign;
                    }
                }
                let mut g =
                    model.weighted_score_grad(&xp, &coeffs).expect("dimensions validated upfront");
                g.scaled_add(2.0, &r);
                let g2 = g.iter().map(|v| v * v).sum::<f64>();
                if g2 < 1e-30 {
                    break;
                }
                // Armijo backtracking, optimistic: try a doubled step first.
                let f0 = objective(&r, c);
                step *= 2.0;
                let mut accepted = false;
                for _ in 0..30 {
                    let mut cand = r.clone();
                    cand.scaled_add(-step, &g);
                    if objective(&cand, c) <= f0 - 1e-4 * step * g2 {
                        r = cand;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            c *= 2.0;
        }
        // The penalty stationary point sits a hair short of the margins for
        // every finite weight; a short hinge descent restores feasibility at
        // negligible extra norm.
        let (ok, used) = hinge_descent(model, x, terms, &mut r, f64::INFINITY, inner, &mut effort);
        total += used;
        if ok {
            let n = l2_norm(&r);
            if n < best_norm {
                best_norm = n;
                best = Some(r);
            }
        }
    }
    (best.unwrap_or(effort.r), total)
}

/// Exact cost of flipping the single label `j` on a linear model with no
/// preservation constraint: the distance from `x` to the flip half-space,
/// `max(0, t + y_j h_j(x)) / ||w_j||`.
pub fn single_flip_cost(lin: &LinearModel, x: &Array1<f64>, y: &Array1<f64>, j: usize, margin: f64) -> Result<f64> {
    if j >= lin.m() {
        return Err(Error::InvalidArgument(format!("label {} out of range (m={})", j, lin.m())));
    }
    if x.len() != lin.d() {
        return Err(Error::InvalidArgument(format!(
            "input has {} features, model expects {}",
            x.len(),
            lin.d()
        )));
    }
    let h = lin.scores(x);
    let need = margin + y[j] * h[j];
    if need <= 0.0 {
        return Ok(0.0);
    }
    let wn = l2_norm(&lin.weights().column(j).to_owned());
    if wn == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(need / wn)
}

/// Trace of a budgeted loss ascent.
#[derive(Debug, Clone)]
pub struct AscentTrace {
    pub r: Array1<f64>,
    /// Per label, `||r||` at the first iterate where it was flipped; `None`
    /// if it never flipped. An initially misclassified label gets `0`.
    pub onsets: Vec<Option<f64>>,
    pub iterations: usize,
}

/// Projected gradient ascent of `loss` over the budget ball, starting at
/// `r = 0`. Deterministic; the zero-one loss is rejected for lack of a
/// gradient.
pub fn loss_ascent_trace(
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    loss: Loss,
    mu_r: f64,
    step: Option<f64>,
    max_iter: usize,
) -> Result<AscentTrace> {
    if x.len() != model.d() || y.len() != model.m() {
        return Err(Error::InvalidArgument(format!(
            "ascent wants input len {} and label len {}, got {} and {}",
            model.d(),
            model.m(),
            x.len(),
            y.len()
        )));
    }
    if loss == Loss::ZeroOne {
        return Err(Error::InvalidArgument("the zero_one loss has no gradient to ascend".into()));
    }
    if !mu_r.is_finite() || mu_r <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "budget mu_r must be finite and positive, got {}",
            mu_r
        )));
    }
    let step0 = step.unwrap_or(mu_r / 20.0);
    if !step0.is_finite() || step0 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step must be finite and positive, got {}",
            step0
        )));
    }

    let m = model.m();
    let mut r = Array1::zeros(model.d());
    let mut onsets = vec![None; m];
    let mut iterations = 0usize;
    for k in 0..=max_iter {
        let xp = x + &r;
        let h = model.scores(&xp);
        let norm = l2_norm(&r);
        for j in 0..m {
            if onsets[j].is_none() && y[j] * h[j] <= 0.0 {
                onsets[j] = Some(norm);
            }
        }
        if k == max_iter {
            break;
        }
        let gs = loss.grad_scores(y, &h).expect("zero_one rejected above");
        let g = model.weighted_score_grad(&xp, &gs)?;
        if l2_norm(&g) < 1e-15 {
            break;
        }
        iterations += 1;
        r.scaled_add(step0, &g);
        project_ball(&mut r, mu_r);
    }
    Ok(AscentTrace { r, onsets, iterations })
}

/// The perturbation from [`loss_ascent_trace`], without the bookkeeping.
pub fn loss_ascent(
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    loss: Loss,
    mu_r: f64,
    step: Option<f64>,
    max_iter: usize,
) -> Result<Array1<f64>> {
    loss_ascent_trace(model, x, y, loss, mu_r, step, max_iter).map(|t| t.r)
}
