//! Label-space exploration: how many labels can a bounded perturbation flip?
//!
//! All searchers grow a flip set `S` one label at a time, re-attacking the
//! whole set after each extension so the reported perturbation always flips
//! `S` jointly:
//!
//! * [`gase`] ranks candidates by a first-order distance-to-boundary estimate
//!   at the current perturbed point and only attacks the best-looking one,
//!   so a round costs one targeted attack instead of one per candidate.
//! * [`pgs`] is the plain greedy: every round attacks `S + {j}` for all
//!   remaining `j` and keeps the smallest marginal norm increase.
//! * [`rs`] extends by a uniformly random candidate.
//! * [`os`] attacks every label alone, orders them by solo cost and walks
//!   joint attacks along ascending prefixes of that order.
//! * [`ls_search`] does no targeted attacks at all: it spends the budget on
//!   loss ascent and reads off which labels happened to flip.
//!
//! Rejected candidates are marked ineligible for the rest of the search. A
//! rejection is classified as an over-budget failure when the attack found a
//! margin-satisfying point beyond the budget (or, for the ball-projected
//! method, stalled on the ball boundary); otherwise it is structural. The
//! classification decides between the `BudgetExhausted` and `NoCandidate`
//! stop reasons once no candidate remains.

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{loss_ascent_trace, targeted_attack, AttackMethod, AttackOutcome, AttackSpec};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::linalg::l2_norm;
use crate::model::{Loss, Model};

/// Salt separating the searcher's tie-breaking stream from attack restarts.
const PICK_SALT: u64 = 0xA5A5_5A5A_C0FF_EE11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The budget is spent, or every remaining candidate failed only for
    /// budget reasons.
    BudgetExhausted,
    /// The flip set reached the label cap (all labels by default).
    AllLabels,
    /// No remaining candidate can be flipped at any budget.
    NoCandidate,
}

#[derive(Debug, Clone)]
pub struct ExplorationResult {
    /// Flipped labels in acceptance order.
    pub selected: Vec<usize>,
    /// Perturbation of the final accepted attack; zero if nothing was flipped.
    pub r: Array1<f64>,
    pub norm: f64,
    /// `||r||` after each accepted extension.
    pub step_norms: Vec<f64>,
    /// Targeted attacks spent, accepted or not.
    pub attack_calls: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct ExploreOpts {
    /// Stop once the flip set reaches this size; `None` means all labels.
    pub max_labels: Option<usize>,
    /// Relative window inside which candidate scores count as tied; ties are
    /// broken uniformly at random (seeded).
    pub tie_tol: f64,
}

impl Default for ExploreOpts {
    fn default() -> ExploreOpts {
        ExploreOpts { max_labels: None, tie_tol: 1e-9 }
    }
}

fn check_instance(model: &Model, x: &Array1<f64>, y: &Array1<f64>) -> Result<()> {
    if x.len() != model.d() || y.len() != model.m() {
        return Err(Error::InvalidArgument(format!(
            "exploration wants input len {} and label len {}, got {} and {}",
            model.d(),
            model.m(),
            x.len(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::InvalidArgument(format!("labels must be +1 or -1, got {}", bad)));
    }
    Ok(())
}

fn pick_rng(spec: &AttackSpec) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(spec.seed ^ PICK_SALT)
}

/// Over-budget if the attack produced a margin-satisfying point past the
/// budget, or (projected method only) stalled on the ball boundary.
fn rejection_is_budget(outcome: &AttackOutcome, spec: &AttackSpec) -> bool {
    if outcome.margins_ok {
        return outcome.norm > spec.mu_r;
    }
    spec.method == AttackMethod::Pgd && outcome.norm >= spec.mu_r * (1.0 - 1e-6)
}

/// Indices within `tie_tol` (relative) of the smallest value; `usize::MAX`
/// never wins unless everything is `usize::MAX`-free... values are `f64`.
fn tied_minima(values: &[(usize, f64)], tie_tol: f64) -> Vec<usize> {
    let min = values.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    if min.is_infinite() {
        return values.iter().map(|(j, _)| *j).collect();
    }
    values
        .iter()
        .filter(|(_, v)| (*v - min).abs() <= tie_tol * (1.0 + min.abs()))
        .map(|(j, _)| *j)
        .collect()
}

struct SearchState {
    selected: Vec<usize>,
    r: Array1<f64>,
    norm: f64,
    step_norms: Vec<f64>,
    calls: usize,
    ineligible: Vec<bool>,
    saw_over_budget: bool,
}

impl SearchState {
    fn new(d: usize, m: usize) -> SearchState {
        SearchState {
            selected: Vec::new(),
            r: Array1::zeros(d),
            norm: 0.0,
            step_norms: Vec::new(),
            calls: 0,
            ineligible: vec![false; m],
            saw_over_budget: false,
        }
    }

    fn candidates(&self) -> Vec<usize> {
        let in_set: Vec<bool> = {
            let mut v = vec![false; self.ineligible.len()];
            for &j in &self.selected {
                v[j] = true;
            }
            v
        };
        (0..self.ineligible.len()).filter(|&j| !in_set[j] && !self.ineligible[j]).collect()
    }

    fn accept(&mut self, j: usize, outcome: AttackOutcome) {
        self.selected.push(j);
        self.norm = outcome.norm;
        self.r = outcome.r;
        self.step_norms.push(self.norm);
    }

    /// Accept and clear rejections: a marked-ineligible label can become
    /// attackable again once the perturbation moves past correlated labels.
    fn accept_and_reopen(&mut self, j: usize, outcome: AttackOutcome) {
        self.accept(j, outcome);
        self.ineligible.iter_mut().for_each(|b| *b = false);
    }

    fn reject(&mut self, j: usize, outcome: &AttackOutcome, spec: &AttackSpec) {
        self.ineligible[j] = true;
        if rejection_is_budget(outcome, spec) {
            self.saw_over_budget = true;
        }
    }

    fn exhausted_stop(&self) -> StopReason {
        if self.saw_over_budget {
            StopReason::BudgetExhausted
        } else {
            StopReason::NoCandidate
        }
    }

    fn into_result(self, stop: StopReason) -> ExplorationResult {
        ExplorationResult {
            selected: self.selected,
            r: self.r,
            norm: self.norm,
            step_norms: self.step_norms,
            attack_calls: self.calls,
            stop,
        }
    }
}

/// Greedy exploration guided by the first-order distance estimate
/// `|y_j h_j| / ||grad h_j||` at the current perturbed point. Each round
/// attacks only the nearest-looking candidate, retrying the next-best when an
/// attack is rejected. Rejections last until the next accepted extension
/// moves the perturbed point; a search round therefore either grows the flip
/// set or exhausts every candidate and stops.
pub fn gase(model: &Model, x: &Array1<f64>, y: &Array1<f64>, spec: &AttackSpec) -> Result<ExplorationResult> {
    gase_with(model, x, y, spec, &ExploreOpts::default())
}

pub fn gase_with(
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    spec: &AttackSpec,
    opts: &ExploreOpts,
) -> Result<ExplorationResult> {
    check_instance(model, x, y)?;
    let m = model.m();
    let cap = opts.max_labels.unwrap_or(m).min(m);
    let mut rng = pick_rng(spec);
    let mut state = SearchState::new(model.d(), m);

    loop {
        if state.selected.len() >= cap {
            return Ok(state.into_result(StopReason::AllLabels));
        }
        if state.norm >= spec.mu_r {
            return Ok(state.into_result(StopReason::BudgetExhausted));
        }
        let candidates = state.candidates();
        if candidates.is_empty() {
            let stop = state.exhausted_stop();
            return Ok(state.into_result(stop));
        }

        let xp = x + &state.r;
        let h = model.scores(&xp);
        let jac = model.score_jacobian(&xp)?;
        let distances: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&j| {
                let grad_norm = l2_norm(&jac.column(j).to_owned());
                let num = (y[j] * h[j]).abs();
                let dist = if grad_norm == 0.0 { f64::INFINITY } else { num / grad_norm };
                (j, dist)
            })
            .collect();
        let ties = tied_minima(&distances, opts.tie_tol);
        let j = ties[rng.random_range(0..ties.len())];

        let mut targets = state.selected.clone();
        targets.push(j);
        let outcome = targeted_attack(model, x, y, &targets, spec)?;
        state.calls += 1;
        if outcome.feasible {
            state.accept_and_reopen(j, outcome);
        } else {
            state.reject(j, &outcome, spec);
        }
    }
}

/// Plain greedy search: each round starts by re-attacking the current set to
/// refresh the reference norm, then attacks every remaining candidate and
/// keeps the smallest marginal norm increase. Candidates that fail one round
/// stay eligible; their joint cost can drop once correlated labels flip.
pub fn pgs(model: &Model, x: &Array1<f64>, y: &Array1<f64>, spec: &AttackSpec) -> Result<ExplorationResult> {
    pgs_with(model, x, y, spec, &ExploreOpts::default())
}

pub fn pgs_with(
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    spec: &AttackSpec,
    opts: &ExploreOpts,
) -> Result<ExplorationResult> {
    check_instance(model, x, y)?;
    let m = model.m();
    let cap = opts.max_labels.unwrap_or(m).min(m);
    let mut rng = pick_rng(spec);
    let mut state = SearchState::new(model.d(), m);

    loop {
        if state.selected.len() >= cap {
            return Ok(state.into_result(StopReason::AllLabels));
        }
        if state.norm >= spec.mu_r {
            return Ok(state.into_result(StopReason::BudgetExhausted));
        }
        let candidates = state.candidates();
        if candidates.is_empty() {
            let stop = state.exhausted_stop();
            return Ok(state.into_result(stop));
        }

        if !state.selected.is_empty() {
            let refreshed = targeted_attack(model, x, y, &state.selected, spec)?;
            state.calls += 1;
            if refreshed.feasible {
                state.norm = refreshed.norm;
                state.r = refreshed.r;
            } else {
                log::debug!("reference re-attack on the current set came back infeasible");
            }
        }

        let mut gains: Vec<(usize, f64)> = Vec::new();
        let mut outcomes: Vec<(usize, AttackOutcome)> = Vec::new();
        for &j in &candidates {
            let mut targets = state.selected.clone();
            targets.push(j);
            let outcome = targeted_attack(model, x, y, &targets, spec)?;
            state.calls += 1;
            if outcome.feasible {
                gains.push((j, outcome.norm - state.norm));
                outcomes.push((j, outcome));
            } else if rejection_is_budget(&outcome, spec) {
                state.saw_over_budget = true;
            }
        }
        if gains.is_empty() {
            let stop = state.exhausted_stop();
            return Ok(state.into_result(stop));
        }
        let ties = tied_minima(&gains, opts.tie_tol);
        let j = ties[rng.random_range(0..ties.len())];
        let outcome = outcomes.into_iter().find(|(jj, _)| *jj == j).expect("winner was feasible").1;
        state.accept(j, outcome);
    }
}

/// Random-order search: each round extends by one uniformly random candidate,
/// with the same rejection bookkeeping as the greedy searchers.
pub fn rs(model: &Model, x: &Array1<f64>, y: &Array1<f64>, spec: &AttackSpec) -> Result<ExplorationResult> {
    rs_with(model, x, y, spec, &ExploreOpts::default())
}

pub fn rs_with(
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    spec: &AttackSpec,
    opts: &ExploreOpts,
) -> Result<ExplorationResult> {
    check_instance(model, x, y)?;
    let m = model.m();
    let cap = opts.max_labels.unwrap_or(m).min(m);
    let mut rng = pick_rng(spec);
    let mut state = SearchState::new(model.d(), m);

    loop {
        if state.selected.len() >= cap {
            return Ok(state.into_result(StopReason::AllLabels));
        }
        if state.norm >= spec.mu_r {
            return Ok(state.into_result(StopReason::BudgetExhausted));
        }
        let candidates = state.candidates();
        if candidates.is_empty() {
            let stop = state.exhausted_stop();
            return Ok(state.into_result(stop));
        }
        let j = candidates[rng.random_range(0..candidates.len())];
        let mut targets = state.selected.clone();
        targets.push(j);
        let outcome = targeted_attack(model, x, y, &targets, spec)?;
        state.calls += 1;
        if outcome.feasible {
            state.accept(j, outcome);
        } else {
            state.reject(j, &outcome, spec);
        }
    }
}

/// Ordered-solo search: attacks every label alone, sorts the feasible solos
/// by cost, then attacks ascending prefixes of that order jointly until one
/// fails.
pub fn os_search(model: &Model, x: &Array1<f64>, y: &Array1<f64>, spec: &AttackSpec) -> Result<ExplorationResult> {
    os_with(model, x, y, spec, &ExploreOpts::default())
}

pub fn os_with(
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    spec: &AttackSpec,
    opts: &ExploreOpts,
) -> Result<ExplorationResult> {
    check_instance(model, x, y)?;
    let m = model.m();
    let cap = opts.max_labels.unwrap_or(m).min(m);
    let mut state = SearchState::new(model.d(), m);

    let mut solos: Vec<(f64, usize)> = Vec::new();
    for j in 0..m {
        let outcome = targeted_attack(model, x, y, &[j], spec)?;
        state.calls += 1;
        if outcome.feasible {
            solos.push((outcome.norm, j));
        } else {
            state.reject(j, &outcome, spec);
        }
    }
    solos.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));

    for k in 1..=solos.len() {
        if state.selected.len() >= cap {
            return Ok(state.into_result(StopReason::AllLabels));
        }
        let prefix: Vec<usize> = solos[..k].iter().map(|(_, j)| *j).collect();
        let outcome = targeted_attack(model, x, y, &prefix, spec)?;
        state.calls += 1;
        if !outcome.feasible {
            let budget = rejection_is_budget(&outcome, spec);
            let stop = if budget { StopReason::BudgetExhausted } else { StopReason::NoCandidate };
            return Ok(state.into_result(stop));
        }
        state.norm = outcome.norm;
        state.r = outcome.r;
        state.step_norms.push(state.norm);
        state.selected = prefix;
    }
    if state.selected.len() == m {
        Ok(state.into_result(StopReason::AllLabels))
    } else {
        let stop = state.exhausted_stop();
        Ok(state.into_result(stop))
    }
}

/// Loss-ascent search: spends the whole budget ascending `loss` and reports
/// the labels left flipped, ordered by the norm at which each first flipped.
/// Costs zero targeted attacks.
pub fn ls_search(
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    spec: &AttackSpec,
    loss: Loss,
) -> Result<ExplorationResult> {
    check_instance(model, x, y)?;
    let trace = loss_ascent_trace(model, x, y, loss, spec.mu_r, spec.step, spec.max_iter)?;
    let h = model.scores(&(x + &trace.r));
    let mut flipped: Vec<(f64, usize)> = (0..model.m())
        .filter(|&j| y[j] * h[j] <= 0.0)
        .map(|j| (trace.onsets[j].expect("flipped labels have an onset"), j))
        .collect();
    flipped.sort_by(|a, b| a.partial_cmp(b).expect("finite onsets"));
    let selected: Vec<usize> = flipped.iter().map(|(_, j)| *j).collect();
    let step_norms: Vec<f64> = flipped.iter().map(|(n, _)| *n).collect();
    let norm = l2_norm(&trace.r);
    let stop = if selected.len() == model.m() {
        StopReason::AllLabels
    } else {
        StopReason::BudgetExhausted
    };
    Ok(ExplorationResult { selected, r: trace.r, norm, step_norms, attack_calls: 0, stop })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gase,
    Pgs,
    Rs,
    Os,
    Ls,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Gase => "gase",
            Method::Pgs => "pgs",
            Method::Rs => "rs",
            Method::Os => "os",
            Method::Ls => "ls",
        }
    }

    pub fn from_name(name: &str) -> Result<Method> {
        match name {
            "gase" => Ok(Method::Gase),
            "pgs" => Ok(Method::Pgs),
            "rs" => Ok(Method::Rs),
            "os" => Ok(Method::Os),
            "ls" => Ok(Method::Ls),
            _ => Err(Error::InvalidArgument(format!("unknown exploration method `{}`", name))),
        }
    }

    pub const ALL: [Method; 5] = [Method::Gase, Method::Pgs, Method::Rs, Method::Os, Method::Ls];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// Only instances the model classifies fully correctly.
    CorrectOnly,
    /// Every instance; preservation is disabled since misclassified labels
    /// cannot keep a margin they never had.
    All,
}

impl Population {
    pub fn name(&self) -> &'static str {
        match self {
            Population::CorrectOnly => "correct_only",
            Population::All => "all",
        }
    }

    pub fn from_name(name: &str) -> Result<Population> {
        match name {
            "correct_only" => Ok(Population::CorrectOnly),
            "all" => Ok(Population::All),
            _ => Err(Error::InvalidArgument(format!("unknown population `{}`", name))),
        }
    }
}

/// Per-instance exploration summary inside a curve point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// Index into the dataset.
    pub index: usize,
    /// Labels misclassified at `x + r`, the attackability indicator.
    pub flipped: usize,
    pub selected: Vec<usize>,
    pub norm: f64,
    pub attack_calls: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: f64,
    pub method: Method,
    pub population: Population,
    pub mean_flipped: f64,
    /// Population standard deviation of the per-instance flip counts.
    pub std_flipped: f64,
    pub n_instances: usize,
    pub records: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackabilityCurve {
    pub points: Vec<CurvePoint>,
}

fn run_method(
    method: Method,
    model: &Model,
    x: &Array1<f64>,
    y: &Array1<f64>,
    spec: &AttackSpec,
    opts: &ExploreOpts,
    loss: Loss,
) -> Result<ExplorationResult> {
    match method {
        Method::Gase => gase_with(model, x, y, spec, opts),
        Method::Pgs => pgs_with(model, x, y, spec, opts),
        Method::Rs => rs_with(model, x, y, spec, opts),
        Method::Os => os_with(model, x, y, spec, opts),
        Method::Ls => ls_search(model, x, y, spec, loss),
    }
}

/// Runs one exploration method over a dataset split at a single budget.
/// Instances run in parallel with per-instance seeds drawn upfront from
/// `spec.seed`, so results do not depend on the worker count.
pub fn attackability_point(
    model: &Model,
    ds: &Dataset,
    split: Split,
    method: Method,
    spec: &AttackSpec,
    population: Population,
    opts: &ExploreOpts,
    loss: Loss,
) -> Result<CurvePoint> {
    let all = ds.indices(split);
    if all.is_empty() {
        return Err(Error::EmptyInput(format!("split {} is empty", split.name())));
    }
    let chosen: Vec<usize> = match population {
        Population::All => all,
        Population::CorrectOnly => all
            .into_iter()
            .filter(|&i| {
                let inst = ds.instance(i);
                let h = model.scores(&inst.x);
                (0..ds.m).all(|j| inst.y[j] * h[j] > 0.0)
            })
            .collect(),
    };
    if chosen.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no correctly classified instances in split {}",
            split.name()
        )));
    }

    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let seeds: Vec<u64> = chosen.iter().map(|_| master.random()).collect();
    let preserve = match population {
        Population::CorrectOnly => spec.preserve_others,
        Population::All => false,
    };

    let records: Vec<InstanceRecord> = chosen
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(&index, &seed)| -> Result<InstanceRecord> {
            let inst = ds.instance(index);
            let inst_spec = AttackSpec { seed, preserve_others: preserve, ..spec.clone() };
            let result = run_method(method, model, &inst.x, &inst.y, &inst_spec, opts, loss)?;
            let h = model.scores(&(&inst.x + &result.r));
            let flipped = (0..ds.m).filter(|&j| inst.y[j] * h[j] <= 0.0).count();
            Ok(InstanceRecord {
                index,
                flipped,
                selected: result.selected,
                norm: result.norm,
                attack_calls: result.attack_calls,
                stop: result.stop,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = records.len();
    let mean = records.iter().map(|r| r.flipped as f64).sum::<f64>() / n as f64;
    let var = records.iter().map(|r| (r.flipped as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(CurvePoint {
        budget: spec.mu_r,
        method,
        population,
        mean_flipped: mean,
        std_flipped: var.sqrt(),
        n_instances: n,
        records,
    })
}

/// [`attackability_point`] swept over budgets. The base spec's `mu_r` is
/// replaced by each budget in turn.
pub fn attackability_curve(
    model: &Model,
    ds: &Dataset,
    split: Split,
    method: Method,
    budgets: &[f64],
    spec: &AttackSpec,
    population: Population,
    opts: &ExploreOpts,
    loss: Loss,
) -> Result<AttackabilityCurve> {
    if budgets.is_empty() {
        return Err(Error::InvalidArgument("budget list is empty".into()));
    }
    let mut points = Vec::with_capacity(budgets.len());
    for &b in budgets {
        let point_spec = AttackSpec { mu_r: b, ..spec.clone() };
        points.push(attackability_point(model, ds, split, method, &point_spec, population, opts, loss)?);
    }
    Ok(AttackabilityCurve { points })
}
