//! Segment-reachability: paths, straight-line feasibility, the reachability
//! decision procedure with verified witnesses, path compression, the
//! producible-species fixpoint, and rationalization of float prepaths.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::crn::{
    apply_flux, Crn, CrnError, FluxVector, ReactionId, SpeciesId, State,
};
use crate::lp::{Cmp, Lp, LpResult};
use crate::rat::{rat_from_f64, rat_to_f64, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReachError {
    #[error("segment {segment}: {source}")]
    Segment { segment: usize, source: CrnError },
    #[error("no rational path matches the declared sign pattern")]
    SignInfeasible,
}

/// A finite piecewise-linear path: an initial state and one flux vector per
/// straight-line segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub x0: State,
    pub segments: Vec<FluxVector>,
}

impl Path {
    pub fn empty(x0: State) -> Self {
        Path {
            x0,
            segments: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// All states along the path (x0 first), assuming validity.
    pub fn states(&self, crn: &Crn) -> Result<Vec<State>, ReachError> {
        let mut out = vec![self.x0.clone()];
        for (i, seg) in self.segments.iter().enumerate() {
            let next = apply_flux(crn, out.last().unwrap(), seg)
                .map_err(|source| ReachError::Segment { segment: i, source })?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Folds `apply_flux` over the segments; returns the endpoint on success.
pub fn verify_path(crn: &Crn, p: &Path) -> Result<State, ReachError> {
    let mut cur = p.x0.clone();
    for (i, seg) in p.segments.iter().enumerate() {
        cur = apply_flux(crn, &cur, seg)
            .map_err(|source| ReachError::Segment { segment: i, source })?;
    }
    Ok(cur)
}

/// Set-level producible fixpoint: starting from `support`, repeatedly add
/// the products of every reaction in `allowed` whose reactants are all
/// present.
pub fn producible_set(
    crn: &Crn,
    support: &BTreeSet<SpeciesId>,
    allowed: &BTreeSet<ReactionId>,
) -> BTreeSet<SpeciesId> {
    let mut present = support.clone();
    loop {
        let mut changed = false;
        for &j in allowed {
            let r = &crn.reactions()[j];
            if r.reactants.keys().all(|s| present.contains(s))
                && !r.products.keys().all(|s| present.contains(s))
            {
                present.extend(r.products.keys().copied());
                changed = true;
            }
        }
        if !changed {
            return present;
        }
    }
}

/// The greatest subset T of `candidates` that is self-firable from `support`:
/// the producible fixpoint using only T enables every reaction of T.
pub fn self_firable_core(
    crn: &Crn,
    support: &BTreeSet<SpeciesId>,
    candidates: &BTreeSet<ReactionId>,
) -> BTreeSet<ReactionId> {
    let mut t = candidates.clone();
    loop {
        let p = producible_set(crn, support, &t);
        let t2: BTreeSet<ReactionId> = t
            .iter()
            .copied()
            .filter(|&j| crn.reactions()[j].reactants.keys().all(|s| p.contains(s)))
            .collect();
        if t2 == t {
            return t;
        }
        t = t2;
    }
}

/// Builds a "ramp" path from `c` that fires every reaction of `allowed` that
/// ever becomes applicable, once, at the stage where it first does; flux per
/// stage is small enough that every positive species stays positive. The
/// endpoint's support is the producible fixpoint restricted to `allowed`.
fn ramp_path(crn: &Crn, c: &State, allowed: &BTreeSet<ReactionId>) -> Path {
    let mut segments = Vec::new();
    let mut cur = c.clone();
    let mut fired: BTreeSet<ReactionId> = BTreeSet::new();
    loop {
        let new: Vec<ReactionId> = allowed
            .iter()
            .copied()
            .filter(|&j| {
                !fired.contains(&j)
                    && crn.reactions()[j]
                        .reactants
                        .keys()
                        .all(|&s| cur.get(s).is_positive())
            })
            .collect();
        if new.is_empty() {
            break;
        }
        let min_pos = cur
            .0
            .iter()
            .filter(|v| v.is_positive())
            .min()
            .expect("applicable reaction implies a positive species")
            .clone();
        let max_gross = new
            .iter()
            .map(|&j| crn.reactions()[j].gross_consumption())
            .max()
            .unwrap()
            .max(1);
        let eps = min_pos
            / (Rat::from_integer(2.into())
                * Rat::from_integer((max_gross as i64).into())
                * Rat::from_integer((new.len() as i64).into()));
        let mut u = FluxVector::zero(crn);
        for &j in &new {
            u.0[j] = eps.clone();
        }
        cur = apply_flux(crn, &cur, &u).expect("ramp flux keeps all species positive");
        fired.extend(new);
        segments.push(u);
    }
    Path {
        x0: c.clone(),
        segments,
    }
}

/// Producible species `P(c)` together with a ramp path from `c` whose
/// endpoint has support exactly `P(c)`. The ramp has at most
/// `min(|R|, |Λ|)` segments.
pub fn producible(crn: &Crn, c: &State) -> (BTreeSet<SpeciesId>, Path) {
    let all: BTreeSet<ReactionId> = (0..crn.num_reactions()).collect();
    let p = producible_set(crn, &c.support(), &all);
    let ramp = ramp_path(crn, c, &all);
    (p, ramp)
}

/// Builds the LP for `c + M u = d` with `supp(u) ⊆ allowed`, plus one extra
/// variable `t` (index `allowed.len()`) constrained by `t ≤ 1` and, if
/// `pos_coord` is set, `t ≤ u_j`. Maximizing `t` probes whether coordinate
/// `j` can be strictly positive.
fn flux_lp(
    crn: &Crn,
    c: &State,
    d: &State,
    allowed: &[ReactionId],
    pos_coord: Option<usize>,
) -> Option<Vec<Rat>> {
    let nv = allowed.len() + 1;
    let mut touched: BTreeSet<SpeciesId> = BTreeSet::new();
    for &j in allowed {
        let r = &crn.reactions()[j];
        touched.extend(r.reactants.keys().copied());
        touched.extend(r.products.keys().copied());
    }
    for s in 0..crn.num_species() {
        if !touched.contains(&s) && c.get(s) != d.get(s) {
            return None;
        }
    }
    let mut lp = Lp::new(nv);
    for &s in &touched {
        let mut row = vec![Rat::zero(); nv];
        for (k, &j) in allowed.iter().enumerate() {
            let m = crn.stoich(s, j);
            if m != 0 {
                row[k] = Rat::from_integer(m.into());
            }
        }
        lp.constraint(row, Cmp::Eq, d.get(s) - c.get(s));
    }
    let mut t_cap = vec![Rat::zero(); nv];
    t_cap[nv - 1] = Rat::one();
    lp.constraint(t_cap, Cmp::Le, Rat::one());
    if let Some(k) = pos_coord {
        // t - u_k <= 0
        let mut row = vec![Rat::zero(); nv];
        row[nv - 1] = Rat::one();
        row[k] = -Rat::one();
        lp.constraint(row, Cmp::Le, Rat::zero());
        let mut obj = vec![Rat::zero(); nv];
        obj[nv - 1] = Rat::one();
        lp.maximize(obj);
    }
    match lp.solve() {
        LpResult::Infeasible => None,
        LpResult::Unbounded => unreachable!("bounded objective"),
        LpResult::Optimal { x, objective } => {
            if pos_coord.is_some() && !objective.is_positive() {
                return None;
            }
            Some(x[..allowed.len()].to_vec())
        }
    }
}

/// Averages the per-coordinate maximizers so the result is positive on every
/// coordinate that can be positive in any solution. Returns the flux and the
/// achievable support.
fn max_support_solution(
    crn: &Crn,
    c: &State,
    d: &State,
    allowed: &BTreeSet<ReactionId>,
) -> Option<(FluxVector, BTreeSet<ReactionId>)> {
    let order: Vec<ReactionId> = allowed.iter().copied().collect();
    let base = flux_lp(crn, c, d, &order, None)?;
    let mut solutions = vec![base];
    let mut support = BTreeSet::new();
    for k in 0..order.len() {
        if let Some(x) = flux_lp(crn, c, d, &order, Some(k)) {
            support.insert(order[k]);
            solutions.push(x);
        }
    }
    let count = Rat::from_integer((solutions.len() as i64).into());
    let mut avg = vec![Rat::zero(); order.len()];
    for sol in &solutions {
        for (a, v) in avg.iter_mut().zip(sol) {
            *a += v;
        }
    }
    for a in avg.iter_mut() {
        *a /= &count;
    }
    let mut u = FluxVector::zero(crn);
    for (k, &j) in order.iter().enumerate() {
        u.0[j] = avg[k].clone();
    }
    Some((u, support))
}

/// One straight-line query: `u ≥ 0` with `c + M u = d`, `supp(u) ⊆ allowed`
/// and `u_j > 0` for every `j ∈ require_positive`. With
/// `check_applicability`, reactions not applicable at `c` are removed from
/// `allowed` first (and the query fails if one of them is required).
pub fn straight_line_feasible(
    crn: &Crn,
    c: &State,
    d: &State,
    allowed: &BTreeSet<ReactionId>,
    require_positive: &BTreeSet<ReactionId>,
    check_applicability: bool,
) -> Option<FluxVector> {
    assert!(require_positive.is_subset(allowed));
    let allowed: BTreeSet<ReactionId> = if check_applicability {
        let usable: BTreeSet<ReactionId> = allowed
            .iter()
            .copied()
            .filter(|&j| {
                crn.reactions()[j]
                    .reactants
                    .keys()
                    .all(|&s| c.get(s).is_positive())
            })
            .collect();
        if !require_positive.is_subset(&usable) {
            return None;
        }
        usable
    } else {
        allowed.clone()
    };
    let order: Vec<ReactionId> = allowed.iter().copied().collect();
    let base = flux_lp(crn, c, d, &order, None)?;
    if require_positive.is_empty() {
        let mut u = FluxVector::zero(crn);
        for (k, &j) in order.iter().enumerate() {
            u.0[j] = base[k].clone();
        }
        return Some(u);
    }
    let mut solutions = Vec::new();
    for &j in require_positive {
        let k = order.iter().position(|&x| x == j).unwrap();
        let x = flux_lp(crn, c, d, &order, Some(k))?;
        solutions.push(x);
    }
    let count = Rat::from_integer((solutions.len() as i64).into());
    let mut u = FluxVector::zero(crn);
    for sol in &solutions {
        for (k, &j) in order.iter().enumerate() {
            u.0[j] += &sol[k];
        }
    }
    for v in u.0.iter_mut() {
        *v /= &count;
    }
    Some(u)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachVerdict {
    pub reachable: bool,
    pub witness: Option<Path>,
}

impl ReachVerdict {
    fn no() -> Self {
        ReachVerdict {
            reachable: false,
            witness: None,
        }
    }

    fn yes(witness: Path) -> Self {
        ReachVerdict {
            reachable: true,
            witness: Some(witness),
        }
    }
}

/// Assembles the witness for support `T` and total flux `u` with
/// `supp(u) = T`: a ramp restricted to `T`, scaled so the residual flux
/// stays nonnegative, followed by one straight line with the residual.
/// At most `min(|R|, |Λ|) + 1` segments.
fn build_witness(crn: &Crn, c: &State, t: &BTreeSet<ReactionId>, u: &FluxVector) -> Path {
    let ramp = ramp_path(crn, c, t);
    let mut f_ramp = FluxVector::zero(crn);
    for seg in &ramp.segments {
        for (j, v) in seg.0.iter().enumerate() {
            f_ramp.0[j] += v;
        }
    }
    // Scale the ramp so at least half of each used coordinate's flux remains
    // for the final straight line.
    let mut lambda = Rat::one();
    for j in f_ramp.support() {
        let cap = &u.0[j] / (Rat::from_integer(2.into()) * &f_ramp.0[j]);
        if cap < lambda {
            lambda = cap;
        }
    }
    let mut segments: Vec<FluxVector> = Vec::new();
    for seg in &ramp.segments {
        let scaled = FluxVector(seg.0.iter().map(|v| v * &lambda).collect());
        if !scaled.is_zero() {
            segments.push(scaled);
        }
    }
    let residual = FluxVector(
        u.0.iter()
            .zip(&f_ramp.0)
            .map(|(uj, fj)| uj - fj * &lambda)
            .collect(),
    );
    if !residual.is_zero() {
        segments.push(residual);
    }
    merge_adjacent(
        crn,
        &Path {
            x0: c.clone(),
            segments,
        },
    )
}

/// Greedily merges adjacent segments whenever the combined flux is still a
/// valid single segment at the earlier state; shortens witnesses without
/// changing the endpoints.
pub fn merge_adjacent(crn: &Crn, p: &Path) -> Path {
    let mut segments: Vec<FluxVector> = Vec::new();
    // State before the last kept segment, and after it.
    let mut prev = p.x0.clone();
    let mut cur = p.x0.clone();
    for seg in &p.segments {
        if let Some(last) = segments.last_mut() {
            let combined =
                FluxVector(last.0.iter().zip(&seg.0).map(|(a, b)| a + b).collect());
            if let Ok(next) = apply_flux(crn, &prev, &combined) {
                cur = next;
                *last = combined;
                continue;
            }
        }
        prev = cur.clone();
        cur = apply_flux(crn, &cur, seg).expect("merge input path is valid");
        segments.push(seg.clone());
    }
    Path {
        x0: p.x0.clone(),
        segments,
    }
}

/// Rationalizes a floating-point total-flux estimate into an exact witness
/// from `c`. Fluxes and endpoint coordinates with magnitude at most
/// `zero_eps` are declared exactly zero; the remaining fluxes are rounded to
/// nearby rationals (within `tol` of the floats) consistent with the
/// declared-zero endpoint equations, and the witness is assembled as a ramp
/// over the flux support plus one residual straight-line segment.
pub fn witness_from_total_flux(
    crn: &Crn,
    c: &State,
    flux: &[f64],
    end: &[f64],
    zero_eps: f64,
    tol: &Rat,
) -> Result<Path, ReachError> {
    let n = crn.num_species();
    let m = crn.num_reactions();
    assert_eq!(flux.len(), m, "flux arity mismatch");
    assert_eq!(end.len(), n, "state arity mismatch");
    let t: BTreeSet<ReactionId> = (0..m).filter(|&j| flux[j].abs() > zero_eps).collect();
    if t.is_empty() {
        return Ok(Path::empty(c.clone()));
    }
    if self_firable_core(crn, &c.support(), &t) != t {
        return Err(ReachError::SignInfeasible);
    }
    // One unknown per reaction in the flux support; equations pin each
    // declared-zero endpoint coordinate to exactly zero.
    let vars: Vec<ReactionId> = t.iter().copied().collect();
    let end_zero: Vec<bool> = end.iter().map(|v| v.abs() <= zero_eps).collect();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for s in 0..n {
        if end_zero[s] {
            let row: Vec<Rat> = vars
                .iter()
                .map(|&j| Rat::from_integer(crn.stoich(s, j).into()))
                .collect();
            a.push(row);
            b.push(-c.get(s).clone());
        }
    }
    let sys = LinSystem::reduce(a, b, vars.len()).ok_or(ReachError::SignInfeasible)?;
    let free = sys.free_cols();

    let mut err = 1e-3_f64.min(rat_to_f64(tol) / 4.0);
    let mut max_den: u64 = 1_000;
    for _ in 0..40 {
        let free_vals: Vec<(usize, Rat)> = free
            .iter()
            .map(|&v| (v, rat_from_f64(flux[vars[v]], err, max_den)))
            .collect();
        let x = sys.solve_with_free(&free_vals);
        err /= 16.0;
        max_den = max_den.saturating_mul(64);

        let mut u = FluxVector::zero(crn);
        for (v, &j) in vars.iter().enumerate() {
            u.0[j] = x[v].clone();
        }
        // Every supported flux must come out positive and within tol of the
        // float estimate.
        let fluxes_ok = vars.iter().enumerate().all(|(v, &j)| {
            x[v].is_positive() && (rat_to_f64(&x[v]) - flux[j]).abs() <= rat_to_f64(tol)
        });
        if !fluxes_ok {
            continue;
        }
        // The exact endpoint must match the declared sign pattern.
        let mut d = c.clone();
        for &j in &vars {
            for s in 0..n {
                let coef = crn.stoich(s, j);
                if coef != 0 {
                    d.0[s] += &u.0[j] * Rat::from_integer(coef.into());
                }
            }
        }
        let signs_ok = d
            .0
            .iter()
            .zip(&end_zero)
            .all(|(v, &z)| if z { v.is_zero() } else { v.is_positive() });
        if !signs_ok {
            continue;
        }
        let witness = build_witness(crn, c, &t, &u);
        if verify_path(crn, &witness).is_ok() {
            return Ok(witness);
        }
    }
    Err(ReachError::SignInfeasible)
}

fn decide_with_initial(
    crn: &Crn,
    c: &State,
    d: &State,
    initial: BTreeSet<ReactionId>,
) -> ReachVerdict {
    if c == d {
        return ReachVerdict::yes(Path::empty(c.clone()));
    }
    let support = c.support();
    let mut t = self_firable_core(crn, &support, &initial);
    loop {
        if t.is_empty() {
            return ReachVerdict::no();
        }
        let Some((u, s)) = max_support_solution(crn, c, d, &t) else {
            return ReachVerdict::no();
        };
        let t2 = self_firable_core(crn, &support, &s);
        if t2 == t {
            return ReachVerdict::yes(build_witness(crn, c, &t, &u));
        }
        t = t2;
    }
}

/// Decides segment-reachability `c ⇒ d` by iterative support refinement;
/// positive verdicts carry a witness path that verifies and ends at `d`.
/// A negative refinement verdict is cross-checked against brute force for
/// small reaction sets.
pub fn decide_reachable(crn: &Crn, c: &State, d: &State) -> ReachVerdict {
    let all: BTreeSet<ReactionId> = (0..crn.num_reactions()).collect();
    let verdict = decide_with_initial(crn, c, d, all);
    if !verdict.reachable && crn.num_reactions() <= 12 {
        return decide_reachable_bruteforce(crn, c, d);
    }
    verdict
}

/// Oracle: enumerates every support `T ⊆ R` and applies the decision rule
/// directly (T self-firable from c, and some flux with support exactly T
/// moves c to d).
pub fn decide_reachable_bruteforce(crn: &Crn, c: &State, d: &State) -> ReachVerdict {
    if c == d {
        return ReachVerdict::yes(Path::empty(c.clone()));
    }
    let m = crn.num_reactions();
    assert!(m <= 20, "brute force is exponential in the reaction count");
    let support = c.support();
    for mask in 1u32..(1 << m) {
        let t: BTreeSet<ReactionId> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let p = producible_set(crn, &support, &t);
        let self_firable = t
            .iter()
            .all(|&j| crn.reactions()[j].reactants.keys().all(|s| p.contains(s)));
        if !self_firable {
            continue;
        }
        if let Some(u) = straight_line_feasible(crn, c, d, &t, &t, false) {
            return ReachVerdict::yes(build_witness(crn, c, &t, &u));
        }
    }
    ReachVerdict::no()
}

/// Compresses a valid path to at most `min(|R|, |Λ|) + 1` segments with the
/// same endpoints, using the total flux per reaction.
pub fn compress_path(crn: &Crn, p: &Path) -> Result<Path, ReachError> {
    verify_path(crn, p)?;
    let mut total = FluxVector::zero(crn);
    for seg in &p.segments {
        for (j, v) in seg.0.iter().enumerate() {
            total.0[j] += v;
        }
    }
    if total.is_zero() {
        return Ok(Path::empty(p.x0.clone()));
    }
    let t = total.support();
    Ok(build_witness(crn, &p.x0, &t, &total))
}

/// A float-valued prepath, e.g. sampled from an ODE trajectory. When
/// `x0_exact` is set the initial state is kept exactly; coordinates equal to
/// `0.0` are declared zero and preserved as exact zeros.
#[derive(Debug, Clone)]
pub struct FloatPrepath {
    pub x0: Vec<f64>,
    pub segments: Vec<Vec<f64>>,
    pub x0_exact: Option<State>,
}

struct LinSystem {
    /// RREF rows over the unknowns, paired with their rhs.
    rows: Vec<(Vec<Rat>, Rat)>,
    pivot_cols: Vec<usize>,
    n_unknowns: usize,
}

impl LinSystem {
    fn reduce(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>, n: usize) -> Option<LinSystem> {
        let mut rows: Vec<(Vec<Rat>, Rat)> = Vec::new();
        let mut pivot_cols = Vec::new();
        let mut row = 0;
        for col in 0..n {
            let Some(pr) = (row..a.len()).find(|&r| !a[r][col].is_zero()) else {
                continue;
            };
            a.swap(row, pr);
            b.swap(row, pr);
            let inv = a[row][col].clone().recip();
            for v in a[row].iter_mut() {
                *v *= &inv;
            }
            b[row] *= &inv;
            for r in 0..a.len() {
                if r == row || a[r][col].is_zero() {
                    continue;
                }
                let f = a[r][col].clone();
                for cc in 0..n {
                    let delta = &a[row][cc] * &f;
                    a[r][cc] -= delta;
                }
                let delta = &b[row] * &f;
                b[r] -= delta;
            }
            pivot_cols.push(col);
            row += 1;
            if row == a.len() {
                break;
            }
        }
        // Inconsistent if a zero row has nonzero rhs.
        for r in row..a.len() {
            if !b[r].is_zero() {
                return None;
            }
        }
        a.truncate(row);
        b.truncate(row);
        rows.extend(a.into_iter().zip(b));
        Some(LinSystem {
            rows,
            pivot_cols,
            n_unknowns: n,
        })
    }

    /// Completes an assignment of the free unknowns into a full solution.
    fn solve_with_free(&self, free_vals: &[(usize, Rat)]) -> Vec<Rat> {
        let mut x = vec![Rat::zero(); self.n_unknowns];
        for (col, v) in free_vals {
            x[*col] = v.clone();
        }
        for (r, &pc) in self.pivot_cols.iter().enumerate() {
            let (row, rhs) = &self.rows[r];
            let mut v = rhs.clone();
            for c in 0..self.n_unknowns {
                if c != pc && !row[c].is_zero() {
                    v -= &row[c] * &x[c];
                }
            }
            x[pc] = v;
        }
        x
    }

    fn free_cols(&self) -> Vec<usize> {
        (0..self.n_unknowns)
            .filter(|c| !self.pivot_cols.contains(c))
            .collect()
    }
}

/// Converts a float prepath into an exact rational path with the same sign
/// pattern (coordinates with magnitude ≤ `zero_eps` are declared zero),
/// within `tol` of the input in max norm. Declared-zero state coordinates
/// become exact linear equations; the remaining freedom is rounded to
/// nearby small-denominator rationals, tightening until the candidate
/// verifies.
pub fn rationalize_path(
    crn: &Crn,
    pre: &FloatPrepath,
    zero_eps: f64,
    tol: &Rat,
) -> Result<Path, ReachError> {
    let n = crn.num_species();
    let m = crn.num_reactions();
    assert_eq!(pre.x0.len(), n);
    for seg in &pre.segments {
        assert_eq!(seg.len(), m);
    }
    let l = pre.segments.len();

    let x0_zero: Vec<bool> = match &pre.x0_exact {
        Some(st) => st.0.iter().map(|v| v.is_zero()).collect(),
        None => pre.x0.iter().map(|v| v.abs() <= zero_eps).collect(),
    };
    let flux_zero: Vec<Vec<bool>> = pre
        .segments
        .iter()
        .map(|seg| seg.iter().map(|v| v.abs() <= zero_eps).collect())
        .collect();

    // Float intermediate states, for zero declaration.
    let mut states = vec![pre.x0.clone()];
    for seg in &pre.segments {
        let prev = states.last().unwrap().clone();
        let mut next = prev;
        for (j, &f) in seg.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let r = &crn.reactions()[j];
            let touched: BTreeSet<SpeciesId> = r
                .reactants
                .keys()
                .chain(r.products.keys())
                .copied()
                .collect();
            for s in touched {
                next[s] += f * r.net(s) as f64;
            }
        }
        states.push(next);
    }
    let state_zero: Vec<Vec<bool>> = states
        .iter()
        .map(|st| st.iter().map(|v| v.abs() <= zero_eps).collect())
        .collect();

    // Unknowns: nonzero x0 coordinates (only when x0 is not exact), then
    // nonzero flux coordinates per segment.
    let x0_known = pre.x0_exact.is_some();
    let mut unknowns: Vec<(f64, bool)> = Vec::new(); // (float value, is_flux)
    let mut x0_var = vec![None; n];
    if !x0_known {
        for s in 0..n {
            if !x0_zero[s] {
                x0_var[s] = Some(unknowns.len());
                unknowns.push((pre.x0[s], false));
            }
        }
    }
    let mut flux_var = vec![vec![None; m]; l];
    for (i, seg) in pre.segments.iter().enumerate() {
        for (j, &f) in seg.iter().enumerate() {
            if !flux_zero[i][j] {
                flux_var[i][j] = Some(unknowns.len());
                unknowns.push((f, true));
            }
        }
    }
    let nu = unknowns.len();

    // One equation per declared-zero coordinate of each intermediate state:
    // x0_s + sum over prior segments of M(s,j) u_ij = 0.
    let mut a: Vec<Vec<Rat>> = Vec::new();
    let mut b: Vec<Rat> = Vec::new();
    for k in 1..=l {
        for s in 0..n {
            if !state_zero[k][s] {
                continue;
            }
            let mut row = vec![Rat::zero(); nu];
            let mut rhs = Rat::zero();
            match (&pre.x0_exact, x0_var[s]) {
                (Some(st), _) => rhs -= st.get(s),
                (None, Some(var)) => row[var] = Rat::one(),
                (None, None) => {}
            }
            for i in 0..k {
                for j in 0..m {
                    let coef = crn.stoich(s, j);
                    if coef == 0 {
                        continue;
                    }
                    if let Some(var) = flux_var[i][j] {
                        row[var] += Rat::from_integer(coef.into());
                    }
                }
            }
            a.push(row);
            b.push(rhs);
        }
    }
    let sys = LinSystem::reduce(a, b, nu).ok_or(ReachError::SignInfeasible)?;
    let free = sys.free_cols();

    let mut err = 1e-3_f64.min(rat_to_f64(tol) / 4.0);
    let mut max_den: u64 = 1_000;
    for _ in 0..40 {
        let free_vals: Vec<(usize, Rat)> = free
            .iter()
            .map(|&c| (c, rat_from_f64(unknowns[c].0, err, max_den)))
            .collect();
        let x = sys.solve_with_free(&free_vals);
        err /= 16.0;
        max_den = max_den.saturating_mul(64);

        // Assemble the candidate path.
        let x0 = match &pre.x0_exact {
            Some(st) => st.clone(),
            None => {
                let mut st = State(vec![Rat::zero(); n]);
                for s in 0..n {
                    if let Some(var) = x0_var[s] {
                        st.0[s] = x[var].clone();
                    }
                }
                st
            }
        };
        let mut segments = Vec::with_capacity(l);
        for fv in flux_var.iter() {
            let mut u = FluxVector::zero(crn);
            for (j, var) in fv.iter().enumerate() {
                if let Some(var) = var {
                    u.0[j] = x[*var].clone();
                }
            }
            segments.push(u);
        }
        let candidate = Path { x0, segments };

        // Sign pattern: every declared-nonzero coordinate must be positive
        // and within tol of the float value.
        let mut ok = candidate
            .x0
            .0
            .iter()
            .enumerate()
            .all(|(s, v)| x0_zero[s] == v.is_zero() && (x0_zero[s] || v.is_positive()));
        for (i, seg) in candidate.segments.iter().enumerate() {
            for (j, v) in seg.0.iter().enumerate() {
                if flux_zero[i][j] {
                    ok &= v.is_zero();
                } else {
                    ok &= v.is_positive();
                    ok &= (rat_to_f64(v) - pre.segments[i][j]).abs() <= rat_to_f64(tol);
                }
            }
        }
        if !ok {
            continue;
        }
        match candidate.states(crn) {
            Ok(path_states) => {
                // Declared-positive state coordinates must come out positive.
                let signs_ok = path_states.iter().zip(&state_zero).all(|(st, zs)| {
                    st.0.iter()
                        .zip(zs)
                        .all(|(v, &z)| if z { v.is_zero() } else { v.is_positive() })
                });
                if signs_ok {
                    return Ok(candidate);
                }
            }
            Err(_) => continue,
        }
    }
    Err(ReachError::SignInfeasible)
}
