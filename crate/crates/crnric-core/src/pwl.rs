//! Piecewise rational linear/affine functions: exact evaluation, the
//! max-of-mins normal form, region-annotated representations with exact
//! polyhedral cells, dual-rail value encoding, and the positive-continuity
//! check.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::lp::{Cmp, Lp, LpResult};
use crate::rat::{format_rat, parse_rat, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PwlError {
    #[error("arity mismatch")]
    ArityMismatch,
    #[error("pieces {piece_a} and {piece_b} disagree on a shared boundary point")]
    ContinuityViolation { piece_a: usize, piece_b: usize },
    #[error("some region cell is covered by no piece")]
    CoverageGap,
    #[error("function is not positive-continuous")]
    NotPositiveContinuous,
    #[error("cell enumeration exceeded the configured cap")]
    CellCap,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A rational affine function `a · x + c`; linear when the offset is 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AffineComponent {
    pub coeffs: Vec<Rat>,
    pub offset: Rat,
}

impl AffineComponent {
    pub fn linear(coeffs: Vec<Rat>) -> Self {
        AffineComponent {
            coeffs,
            offset: Rat::zero(),
        }
    }

    pub fn arity(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, x: &[Rat]) -> Rat {
        assert_eq!(x.len(), self.coeffs.len());
        let mut v = self.offset.clone();
        for (a, xi) in self.coeffs.iter().zip(x) {
            if !a.is_zero() {
                v += a * xi;
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Lt,
    Eq,
    Ge,
    Gt,
}

/// One rational linear constraint `coeffs · x rel rhs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinCon {
    pub coeffs: Vec<Rat>,
    pub rel: Rel,
    pub rhs: Rat,
}

impl LinCon {
    pub fn satisfied(&self, x: &[Rat]) -> bool {
        let lhs: Rat = self
            .coeffs
            .iter()
            .zip(x)
            .map(|(a, xi)| a * xi)
            .fold(Rat::zero(), |acc, t| acc + t);
        match self.rel {
            Rel::Le => lhs <= self.rhs,
            Rel::Lt => lhs < self.rhs,
            Rel::Eq => lhs == self.rhs,
            Rel::Ge => lhs >= self.rhs,
            Rel::Gt => lhs > self.rhs,
        }
    }

    fn closure(&self) -> LinCon {
        let rel = match self.rel {
            Rel::Lt => Rel::Le,
            Rel::Gt => Rel::Ge,
            r => r,
        };
        LinCon {
            coeffs: self.coeffs.clone(),
            rel,
            rhs: self.rhs.clone(),
        }
    }
}

/// A polyhedron, possibly with strict faces.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Polyhedron {
    pub cons: Vec<LinCon>,
}

impl Polyhedron {
    pub fn contains(&self, x: &[Rat]) -> bool {
        self.cons.iter().all(|c| c.satisfied(x))
    }

    pub fn closure(&self) -> Polyhedron {
        Polyhedron {
            cons: self.cons.iter().map(|c| c.closure()).collect(),
        }
    }
}

/// A point in the relative interior of the constraint set (strict
/// constraints are pushed off their boundary by a maximized slack), over
/// free variables, optionally restricted to the nonnegative orthant.
/// Returns None when the set is empty.
pub fn interior_point(cons: &[LinCon], arity: usize, nonneg: bool) -> Option<Vec<Rat>> {
    let nv = arity + 1; // + slack t
    let mut lp = Lp::new(nv);
    if !nonneg {
        for v in 0..arity {
            lp.set_free(v);
        }
    }
    let mut any_strict = false;
    for c in cons {
        assert_eq!(c.coeffs.len(), arity);
        let mut row: Vec<Rat> = c.coeffs.clone();
        row.push(Rat::zero());
        match c.rel {
            Rel::Le => lp.constraint(row, Cmp::Le, c.rhs.clone()),
            Rel::Ge => lp.constraint(row, Cmp::Ge, c.rhs.clone()),
            Rel::Eq => lp.constraint(row, Cmp::Eq, c.rhs.clone()),
            Rel::Lt => {
                any_strict = true;
                row[arity] = Rat::one();
                lp.constraint(row, Cmp::Le, c.rhs.clone());
            }
            Rel::Gt => {
                any_strict = true;
                row[arity] = -Rat::one();
                lp.constraint(row, Cmp::Ge, c.rhs.clone());
            }
        }
    }
    let mut cap = vec![Rat::zero(); nv];
    cap[arity] = Rat::one();
    lp.constraint(cap, Cmp::Le, Rat::one());
    let mut obj = vec![Rat::zero(); nv];
    obj[arity] = Rat::one();
    lp.maximize(obj);
    match lp.solve() {
        LpResult::Infeasible => None,
        LpResult::Unbounded => unreachable!("slack is capped"),
        LpResult::Optimal { x, objective } => {
            if any_strict && !objective.is_positive() {
                None
            } else {
                Some(x[..arity].to_vec())
            }
        }
    }
}

/// True iff `g_a − g_b` is nonzero somewhere on the constraint set.
fn components_disagree_on(
    a: &AffineComponent,
    b: &AffineComponent,
    cons: &[LinCon],
    arity: usize,
    nonneg: bool,
) -> bool {
    let diff: Vec<Rat> = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(p, q)| p - q)
        .collect();
    let off = &a.offset - &b.offset;
    for rel in [Rel::Gt, Rel::Lt] {
        let mut probe = cons.to_vec();
        probe.push(LinCon {
            coeffs: diff.clone(),
            rel,
            rhs: -off.clone(),
        });
        if interior_point(&probe, arity, nonneg).is_some() {
            return true;
        }
    }
    false
}

/// Max-of-mins form: `f(x) = max_i min_{j ∈ groups[i]} components[j](x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxMinForm {
    pub components: Vec<AffineComponent>,
    pub groups: Vec<BTreeSet<usize>>,
}

impl MaxMinForm {
    pub fn arity(&self) -> usize {
        self.components.first().map_or(0, |c| c.arity())
    }
}

pub fn eval_maxmin(f: &MaxMinForm, x: &[Rat]) -> Result<Rat, PwlError> {
    if f.components.iter().any(|c| c.arity() != x.len()) {
        return Err(PwlError::ArityMismatch);
    }
    let vals: Vec<Rat> = f.components.iter().map(|c| c.eval(x)).collect();
    f.groups
        .iter()
        .map(|g| g.iter().map(|&j| vals[j].clone()).min().unwrap())
        .max()
        .ok_or(PwlError::ArityMismatch)
}

/// Region-annotated piecewise function: each piece is an affine component
/// valid on its polyhedral region. `nonneg` restricts the domain to the
/// nonnegative orthant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionalPwl {
    pub arity: usize,
    pub pieces: Vec<(AffineComponent, Polyhedron)>,
    pub nonneg: bool,
}

pub fn eval_regional(f: &RegionalPwl, x: &[Rat]) -> Option<Rat> {
    if x.len() != f.arity {
        return None;
    }
    if f.nonneg && x.iter().any(|v| v.is_negative()) {
        return None;
    }
    f.pieces
        .iter()
        .find(|(_, region)| region.contains(x))
        .map(|(g, _)| g.eval(x))
}

const CELL_CAP: usize = 4096;

/// Converts a region-annotated continuous piecewise function into max-min
/// form by enumerating the sign cells of the pairwise component
/// differences, sampling one relative-interior point per cell and reading
/// off the active-component group there.
pub fn regional_to_maxmin(f: &RegionalPwl) -> Result<MaxMinForm, PwlError> {
    let components: Vec<AffineComponent> = f.pieces.iter().map(|(g, _)| g.clone()).collect();
    // Continuity precheck: the two components must agree wherever the
    // closure of one region meets the other. Their difference is affine, so
    // disagreement is a pair of strict feasibility queries.
    for a in 0..f.pieces.len() {
        for b in 0..f.pieces.len() {
            if a == b {
                continue;
            }
            let mut cons = f.pieces[a].1.closure().cons;
            cons.extend(f.pieces[b].1.cons.iter().cloned());
            if components_disagree_on(&components[a], &components[b], &cons, f.arity, f.nonneg)
            {
                return Err(PwlError::ContinuityViolation {
                    piece_a: a,
                    piece_b: b,
                });
            }
        }
    }

    // Sign-cell enumeration over distinct pairwise differences.
    let mut cells: Vec<Vec<LinCon>> = vec![Vec::new()];
    for i in 0..components.len() {
        for j in (i + 1)..components.len() {
            let diff: Vec<Rat> = components[i]
                .coeffs
                .iter()
                .zip(&components[j].coeffs)
                .map(|(a, b)| a - b)
                .collect();
            let off = &components[i].offset - &components[j].offset;
            if diff.iter().all(|v| v.is_zero()) && off.is_zero() {
                continue;
            }
            let gt = LinCon {
                coeffs: diff.clone(),
                rel: Rel::Gt,
                rhs: -off.clone(),
            };
            let lt = LinCon {
                coeffs: diff.clone(),
                rel: Rel::Lt,
                rhs: -off.clone(),
            };
            let eq = LinCon {
                coeffs: diff,
                rel: Rel::Eq,
                rhs: -off,
            };
            let mut next = Vec::new();
            for cell in &cells {
                let mut split = false;
                for con in [&gt, &lt] {
                    let mut cand = cell.clone();
                    cand.push(con.clone());
                    if interior_point(&cand, f.arity, f.nonneg).is_some() {
                        next.push(cand);
                        split = true;
                    }
                }
                if !split {
                    let mut cand = cell.clone();
                    cand.push(eq.clone());
                    if interior_point(&cand, f.arity, f.nonneg).is_some() {
                        next.push(cand);
                    }
                }
                if next.len() > CELL_CAP {
                    return Err(PwlError::CellCap);
                }
            }
            cells = next;
        }
    }

    let mut groups: Vec<BTreeSet<usize>> = Vec::new();
    for cell in &cells {
        let b = interior_point(cell, f.arity, f.nonneg).expect("cell was feasible");
        let fb = eval_regional(f, &b).ok_or(PwlError::CoverageGap)?;
        let s: BTreeSet<usize> = components
            .iter()
            .enumerate()
            .filter(|(_, g)| g.eval(&b) >= fb)
            .map(|(i, _)| i)
            .collect();
        groups.push(s);
    }
    groups.sort();
    groups.dedup();
    // A superset group's min is dominated by its subset's; drop supersets.
    let minimal: Vec<BTreeSet<usize>> = groups
        .iter()
        .filter(|g| !groups.iter().any(|h| h != *g && h.is_subset(g)))
        .cloned()
        .collect();
    Ok(MaxMinForm {
        components,
        groups: minimal,
    })
}

/// A real value split over two nonnegative rails; the value is the
/// difference and any pair with the right difference is legal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualRailValue {
    pub plus: Rat,
    pub minus: Rat,
}

pub fn dualrail_encode(x: &[Rat]) -> Vec<DualRailValue> {
    x.iter()
        .map(|v| {
            if v.is_negative() {
                DualRailValue {
                    plus: Rat::zero(),
                    minus: -v,
                }
            } else {
                DualRailValue {
                    plus: v.clone(),
                    minus: Rat::zero(),
                }
            }
        })
        .collect()
}

pub fn dualrail_decode(v: &[DualRailValue]) -> Vec<Rat> {
    v.iter().map(|r| &r.plus - &r.minus).collect()
}

/// Positive-continuity check over the nonnegative orthant, sampled: for
/// every face `D_U` and every ordered piece pair, if the closure of one
/// region meets the other's region inside `D_U`, the two components must
/// agree exactly at the sampled meeting point.
pub fn check_positive_continuous(f: &RegionalPwl) -> bool {
    assert!(f.nonneg, "positive-continuity is defined over the nonnegative orthant");
    let k = f.arity;
    for mask in 0u32..(1 << k) {
        let mut face: Vec<LinCon> = Vec::new();
        for i in 0..k {
            let mut coeffs = vec![Rat::zero(); k];
            coeffs[i] = Rat::one();
            let rel = if mask & (1 << i) != 0 { Rel::Gt } else { Rel::Eq };
            face.push(LinCon {
                coeffs,
                rel,
                rhs: Rat::zero(),
            });
        }
        for a in 0..f.pieces.len() {
            for b in 0..f.pieces.len() {
                if a == b {
                    continue;
                }
                let mut cons = face.clone();
                cons.extend(f.pieces[a].1.closure().cons);
                cons.extend(f.pieces[b].1.cons.iter().cloned());
                if components_disagree_on(&f.pieces[a].0, &f.pieces[b].0, &cons, k, true) {
                    return false;
                }
            }
        }
    }
    true
}

/// A parsed `.pwl` function: either region-annotated or already in max-min
/// form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PwlFunction {
    Regional(RegionalPwl),
    MaxMin(MaxMinForm),
}

impl PwlFunction {
    pub fn arity(&self) -> usize {
        match self {
            PwlFunction::Regional(f) => f.arity,
            PwlFunction::MaxMin(f) => f.arity(),
        }
    }

    pub fn eval(&self, x: &[Rat]) -> Option<Rat> {
        match self {
            PwlFunction::Regional(f) => eval_regional(f, x),
            PwlFunction::MaxMin(f) => eval_maxmin(f, x).ok(),
        }
    }

    pub fn to_maxmin(&self) -> Result<MaxMinForm, PwlError> {
        match self {
            PwlFunction::Regional(f) => regional_to_maxmin(f),
            PwlFunction::MaxMin(f) => Ok(f.clone()),
        }
    }
}

fn perr(line: usize, message: impl Into<String>) -> PwlError {
    PwlError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a linear expression like `2/5 x1 - 3/5 x2 + 1` into coefficients
/// and a constant offset. Terms are whitespace-tokenized with standalone
/// sign operators.
fn parse_linexpr(tokens: &[&str], arity: usize, line: usize) -> Result<(Vec<Rat>, Rat), PwlError> {
    let mut coeffs = vec![Rat::zero(); arity];
    let mut offset = Rat::zero();
    let mut sign = Rat::one();
    let mut pending: Option<Rat> = None;
    let mut expect_term = true;
    for &tok in tokens {
        if tok == "+" || tok == "-" {
            if expect_term && pending.is_none() {
                return Err(perr(line, "dangling sign"));
            }
            if let Some(c) = pending.take() {
                offset += &sign * c;
            }
            sign = if tok == "-" { -Rat::one() } else { Rat::one() };
            expect_term = true;
        } else if let Some(idx) = tok.strip_prefix('x').and_then(|n| n.parse::<usize>().ok()) {
            if idx == 0 || idx > arity {
                return Err(perr(line, format!("variable `{tok}` out of range")));
            }
            let c = pending.take().unwrap_or_else(Rat::one);
            coeffs[idx - 1] += &sign * c;
            sign = Rat::one();
            expect_term = false;
        } else {
            if pending.is_some() {
                return Err(perr(line, format!("unexpected token `{tok}`")));
            }
            pending = Some(parse_rat(tok).map_err(|e| perr(line, e))?);
            expect_term = false;
        }
    }
    if let Some(c) = pending {
        offset += &sign * c;
    }
    Ok((coeffs, offset))
}

/// Parses the `.pwl` function format: an `arity:` line, `component gN = …`
/// lines, and either `region gN: …` constraint lines or a `maxmin:` line of
/// `{i,j}` groups (1-based component indices).
pub fn parse_pwl(text: &str) -> Result<PwlFunction, PwlError> {
    let mut arity: Option<usize> = None;
    let mut names: Vec<String> = Vec::new();
    let mut components: Vec<AffineComponent> = Vec::new();
    let mut regions: Vec<Option<Polyhedron>> = Vec::new();
    let mut groups: Option<Vec<BTreeSet<usize>>> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(rest) = stripped.strip_prefix("arity:") {
            arity = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| perr(line, "invalid arity"))?,
            );
        } else if let Some(rest) = stripped.strip_prefix("component") {
            let k = arity.ok_or_else(|| perr(line, "`arity:` must come first"))?;
            let (name, expr) = rest
                .split_once('=')
                .ok_or_else(|| perr(line, "expected `component gN = expr`"))?;
            let tokens: Vec<&str> = expr.split_whitespace().collect();
            let (coeffs, offset) = parse_linexpr(&tokens, k, line)?;
            names.push(name.trim().to_string());
            components.push(AffineComponent { coeffs, offset });
            regions.push(None);
        } else if let Some(rest) = stripped.strip_prefix("region") {
            let k = arity.ok_or_else(|| perr(line, "`arity:` must come first"))?;
            let (name, cons_text) = rest
                .split_once(':')
                .ok_or_else(|| perr(line, "expected `region gN: cons, cons`"))?;
            let idx = names
                .iter()
                .position(|n| n == name.trim())
                .ok_or_else(|| perr(line, format!("unknown component `{}`", name.trim())))?;
            let mut cons = Vec::new();
            for part in cons_text.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                let (rel, op) = ["<=", ">=", "<", ">", "="]
                    .iter()
                    .find_map(|op| part.find(op).map(|p| (p, *op)))
                    .map(|(p, op)| ((p, op), op))
                    .ok_or_else(|| perr(line, format!("no comparator in `{part}`")))?;
                let (pos, _) = rel;
                let lhs = &part[..pos];
                let rhs = &part[pos + op.len()..];
                let tokens: Vec<&str> = lhs.split_whitespace().collect();
                let (coeffs, off) = parse_linexpr(&tokens, k, line)?;
                let rhs_val = parse_rat(rhs).map_err(|e| perr(line, e))? - off;
                let rel = match op {
                    "<=" => Rel::Le,
                    ">=" => Rel::Ge,
                    "<" => Rel::Lt,
                    ">" => Rel::Gt,
                    "=" => Rel::Eq,
                    _ => unreachable!(),
                };
                cons.push(LinCon {
                    coeffs,
                    rel,
                    rhs: rhs_val,
                });
            }
            regions[idx] = Some(Polyhedron { cons });
        } else if let Some(rest) = stripped.strip_prefix("maxmin:") {
            let mut gs = Vec::new();
            for part in rest.split_whitespace() {
                let inner = part
                    .strip_prefix('{')
                    .and_then(|p| p.strip_suffix('}'))
                    .ok_or_else(|| perr(line, format!("expected `{{i,j}}`, got `{part}`")))?;
                let mut set = BTreeSet::new();
                for n in inner.split(',') {
                    let i: usize = n
                        .trim()
                        .parse()
                        .map_err(|_| perr(line, format!("bad index `{n}`")))?;
                    if i == 0 || i > components.len() {
                        return Err(perr(line, format!("component index {i} out of range")));
                    }
                    set.insert(i - 1);
                }
                if set.is_empty() {
                    return Err(perr(line, "empty group"));
                }
                gs.push(set);
            }
            if gs.is_empty() {
                return Err(perr(line, "maxmin needs at least one group"));
            }
            groups = Some(gs);
        } else {
            return Err(perr(line, format!("unrecognized line `{stripped}`")));
        }
    }
    let arity = arity.ok_or_else(|| perr(0, "missing `arity:`"))?;
    if components.is_empty() {
        return Err(perr(0, "no components"));
    }
    if let Some(groups) = groups {
        return Ok(PwlFunction::MaxMin(MaxMinForm { components, groups }));
    }
    if regions.iter().any(|r| r.is_none()) {
        return Err(perr(0, "each component needs a `region` line or use `maxmin:`"));
    }
    Ok(PwlFunction::Regional(RegionalPwl {
        arity,
        pieces: components
            .into_iter()
            .zip(regions.into_iter().map(|r| r.unwrap()))
            .collect(),
        nonneg: false,
    }))
}

pub fn serialize_pwl(f: &PwlFunction) -> String {
    let mut out = String::new();
    let (components, arity): (Vec<AffineComponent>, usize) = match f {
        PwlFunction::Regional(r) => {
            (r.pieces.iter().map(|(g, _)| g.clone()).collect(), r.arity)
        }
        PwlFunction::MaxMin(m) => (m.components.clone(), m.arity()),
    };
    out.push_str(&format!("arity: {arity}\n"));
    let fmt_expr = |g: &AffineComponent| {
        let mut parts: Vec<String> = Vec::new();
        for (i, a) in g.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            if parts.is_empty() {
                parts.push(format!("{} x{}", format_rat(a), i + 1));
            } else if a.is_negative() {
                parts.push(format!("- {} x{}", format_rat(&-a), i + 1));
            } else {
                parts.push(format!("+ {} x{}", format_rat(a), i + 1));
            }
        }
        if !g.offset.is_zero() || parts.is_empty() {
            if parts.is_empty() {
                parts.push(format_rat(&g.offset));
            } else if g.offset.is_negative() {
                parts.push(format!("- {}", format_rat(&-&g.offset)));
            } else {
                parts.push(format!("+ {}", format_rat(&g.offset)));
            }
        }
        parts.join(" ")
    };
    for (i, g) in components.iter().enumerate() {
        out.push_str(&format!("component g{} = {}\n", i + 1, fmt_expr(g)));
    }
    match f {
        PwlFunction::Regional(r) => {
            for (i, (_, region)) in r.pieces.iter().enumerate() {
                let cons: Vec<String> = region
                    .cons
                    .iter()
                    .map(|c| {
                        let expr = fmt_expr(&AffineComponent {
                            coeffs: c.coeffs.clone(),
                            offset: Rat::zero(),
                        });
                        let op = match c.rel {
                            Rel::Le => "<=",
                            Rel::Lt => "<",
                            Rel::Eq => "=",
                            Rel::Ge => ">=",
                            Rel::Gt => ">",
                        };
                        format!("{expr} {op} {}", format_rat(&c.rhs))
                    })
                    .collect();
                out.push_str(&format!("region g{}: {}\n", i + 1, cons.join(", ")));
            }
        }
        PwlFunction::MaxMin(m) => {
            let gs: Vec<String> = m
                .groups
                .iter()
                .map(|g| {
                    let idx: Vec<String> = g.iter().map(|&i| (i + 1).to_string()).collect();
                    format!("{{{}}}", idx.join(","))
                })
                .collect();
            out.push_str(&format!("maxmin: {}\n", gs.join(" ")));
        }
    }
    out
}
