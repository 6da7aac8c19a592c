//! Compilation of piecewise linear functions into CRCs: the dual-rail
//! linear/min/max gadget constructions with balanced composition trees, the
//! direct (single-rail) indicator construction for positive-continuous
//! functions, and the canonical run-to-completion schedule.

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::crn::{Crc, Crn, FluxVector, Output, Reaction, ReactionId, SpeciesId, State};
use crate::pwl::{
    check_positive_continuous, regional_to_maxmin, AffineComponent, DualRailValue, LinCon,
    MaxMinForm, Polyhedron, PwlError, RegionalPwl, Rel,
};
use crate::rat::Rat;
use crate::reach::Path;

/// A compiled CRC plus its canonical completion schedule and a gadget tag
/// per reaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledCrc {
    pub crc: Crc,
    pub schedule: Vec<ReactionId>,
    pub provenance: Vec<String>,
}

struct NetBuilder {
    species: Vec<String>,
    index: BTreeMap<String, SpeciesId>,
    reactions: Vec<Reaction>,
    tags: Vec<String>,
    schedule: Vec<ReactionId>,
    context: Vec<(SpeciesId, Rat)>,
}

impl NetBuilder {
    fn new() -> Self {
        NetBuilder {
            species: Vec::new(),
            index: BTreeMap::new(),
            reactions: Vec::new(),
            tags: Vec::new(),
            schedule: Vec::new(),
            context: Vec::new(),
        }
    }

    fn sp(&mut self, name: &str) -> SpeciesId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.species.len();
        self.species.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    /// Adds a reaction (counts accumulated per species) and appends it to
    /// the schedule.
    fn rxn(
        &mut self,
        reactants: &[(SpeciesId, u64)],
        products: &[(SpeciesId, u64)],
        tag: &str,
    ) -> ReactionId {
        let mut r: BTreeMap<SpeciesId, u64> = BTreeMap::new();
        for &(s, n) in reactants {
            *r.entry(s).or_insert(0) += n;
        }
        let mut p: BTreeMap<SpeciesId, u64> = BTreeMap::new();
        for &(s, n) in products {
            *p.entry(s).or_insert(0) += n;
        }
        let id = self.reactions.len();
        self.reactions.push(Reaction::new(r, p));
        self.tags.push(tag.to_string());
        self.schedule.push(id);
        id
    }

    fn finish(self, inputs: Vec<SpeciesId>, output: Output) -> CompiledCrc {
        let crn = Crn::new(self.species, self.reactions).expect("builder produces a valid CRN");
        let crc = Crc::new(crn, inputs, output, self.context).expect("valid CRC");
        CompiledCrc {
            crc,
            schedule: self.schedule,
            provenance: self.tags,
        }
    }
}

/// Integer numerators and positive common denominator of a rational
/// coefficient vector.
fn common_denominator(g: &AffineComponent) -> (Vec<i64>, u64) {
    let mut d = BigInt::one();
    for a in &g.coeffs {
        d = d.lcm(a.denom());
    }
    let nums: Vec<i64> = g
        .coeffs
        .iter()
        .map(|a| {
            (a.numer() * &d / a.denom())
                .to_i64()
                .expect("coefficient numerator fits i64")
        })
        .collect();
    (nums, d.to_u64().expect("denominator fits u64"))
}

/// Emits the linear gadget for `g` (offset handled by the caller via
/// initial context): inputs flow into weight species `W±`, which convert to
/// the output rails at ratio `1/d`.
fn linear_into(
    b: &mut NetBuilder,
    inputs: &[(SpeciesId, SpeciesId)],
    g: &AffineComponent,
    prefix: &str,
) -> (SpeciesId, SpeciesId) {
    let (nums, d) = common_denominator(g);
    assert_eq!(inputs.len(), nums.len());
    let yp = b.sp(&format!("{prefix}.Y+"));
    let ym = b.sp(&format!("{prefix}.Y-"));
    if nums.iter().all(|&n| n == 0) {
        return (yp, ym);
    }
    let wp = b.sp(&format!("{prefix}.W+"));
    let wm = b.sp(&format!("{prefix}.W-"));
    for (&(xp, xm), &n) in inputs.iter().zip(&nums) {
        if n > 0 {
            b.rxn(&[(xp, 1)], &[(wp, n as u64)], prefix);
            b.rxn(&[(xm, 1)], &[(wm, n as u64)], prefix);
        } else if n < 0 {
            b.rxn(&[(xp, 1)], &[(wm, (-n) as u64)], prefix);
            b.rxn(&[(xm, 1)], &[(wp, (-n) as u64)], prefix);
        }
    }
    b.rxn(&[(wp, d)], &[(yp, 1)], prefix);
    b.rxn(&[(wm, d)], &[(ym, 1)], prefix);
    (yp, ym)
}

/// The 3-reaction min gadget; scheduled in the order (2), (3), (1).
fn min2_into(
    b: &mut NetBuilder,
    (x1p, x1m): (SpeciesId, SpeciesId),
    (x2p, x2m): (SpeciesId, SpeciesId),
    prefix: &str,
) -> (SpeciesId, SpeciesId) {
    let yp = b.sp(&format!("{prefix}.Y+"));
    let ym = b.sp(&format!("{prefix}.Y-"));
    b.rxn(&[(x1m, 1)], &[(x2p, 1), (ym, 1)], prefix);
    b.rxn(&[(x2m, 1)], &[(x1p, 1), (ym, 1)], prefix);
    b.rxn(&[(x1p, 1), (x2p, 1)], &[(yp, 1)], prefix);
    (yp, ym)
}

/// The max gadget: the min gadget with the roles of the rails reversed.
fn max2_into(
    b: &mut NetBuilder,
    (x1p, x1m): (SpeciesId, SpeciesId),
    (x2p, x2m): (SpeciesId, SpeciesId),
    prefix: &str,
) -> (SpeciesId, SpeciesId) {
    let yp = b.sp(&format!("{prefix}.Y+"));
    let ym = b.sp(&format!("{prefix}.Y-"));
    b.rxn(&[(x1p, 1)], &[(x2m, 1), (yp, 1)], prefix);
    b.rxn(&[(x2p, 1)], &[(x1m, 1), (yp, 1)], prefix);
    b.rxn(&[(x1m, 1), (x2m, 1)], &[(ym, 1)], prefix);
    (yp, ym)
}

/// Left-leaning balanced binary fold of dual-rail values through a 2-input
/// gadget.
fn tree_fold(
    b: &mut NetBuilder,
    leaves: &[(SpeciesId, SpeciesId)],
    prefix: &str,
    counter: &mut usize,
    gadget: &dyn Fn(
        &mut NetBuilder,
        (SpeciesId, SpeciesId),
        (SpeciesId, SpeciesId),
        &str,
    ) -> (SpeciesId, SpeciesId),
) -> (SpeciesId, SpeciesId) {
    match leaves {
        [one] => *one,
        _ => {
            let mid = leaves.len().div_ceil(2);
            let left = tree_fold(b, &leaves[..mid], prefix, counter, gadget);
            let right = tree_fold(b, &leaves[mid..], prefix, counter, gadget);
            let id = *counter;
            *counter += 1;
            gadget(b, left, right, &format!("{prefix}{id}"))
        }
    }
}

/// Emits the full max-min network for `f` with the given dual-rail input
/// species; offsets become initial context on the component output rails.
/// Returns the output rail pair.
fn maxmin_into(
    b: &mut NetBuilder,
    f: &MaxMinForm,
    inputs: &[(SpeciesId, SpeciesId)],
    prefix: &str,
) -> (SpeciesId, SpeciesId) {
    let used: BTreeSet<usize> = f.groups.iter().flatten().copied().collect();
    // Input fanout: one private copy per using component.
    let mut copies: BTreeMap<(usize, usize), (SpeciesId, SpeciesId)> = BTreeMap::new();
    for i in 0..f.arity() {
        let users: Vec<usize> = used
            .iter()
            .copied()
            .filter(|&c| !f.components[c].coeffs[i].is_zero())
            .collect();
        if users.is_empty() {
            continue;
        }
        for &c in &users {
            let cp = b.sp(&format!("{prefix}lin{c}.X{}+", i + 1));
            let cm = b.sp(&format!("{prefix}lin{c}.X{}-", i + 1));
            copies.insert((c, i), (cp, cm));
        }
        if users.len() == 1 {
            // Single consumer: wire directly, no fanout reaction.
            copies.insert((users[0], i), inputs[i]);
            continue;
        }
        let plus_products: Vec<(SpeciesId, u64)> =
            users.iter().map(|&c| (copies[&(c, i)].0, 1)).collect();
        let minus_products: Vec<(SpeciesId, u64)> =
            users.iter().map(|&c| (copies[&(c, i)].1, 1)).collect();
        b.rxn(&[(inputs[i].0, 1)], &plus_products, &format!("{prefix}fanout.X{}", i + 1));
        b.rxn(&[(inputs[i].1, 1)], &minus_products, &format!("{prefix}fanout.X{}", i + 1));
    }
    // Component gadgets.
    let mut comp_out: BTreeMap<usize, (SpeciesId, SpeciesId)> = BTreeMap::new();
    for &c in &used {
        let g = &f.components[c];
        let ins: Vec<(SpeciesId, SpeciesId)> = (0..f.arity())
            .map(|i| {
                copies.get(&(c, i)).copied().unwrap_or_else(|| {
                    // Zero coefficient: a dead-end copy that is simply
                    // never consumed.
                    let p = b.sp(&format!("{prefix}lin{c}.X{}+", i + 1));
                    let m = b.sp(&format!("{prefix}lin{c}.X{}-", i + 1));
                    (p, m)
                })
            })
            .collect();
        let (yp, ym) = linear_into(b, &ins, g, &format!("{prefix}lin{c}"));
        if g.offset.is_positive() {
            b.context.push((yp, g.offset.clone()));
        } else if g.offset.is_negative() {
            b.context.push((ym, -g.offset.clone()));
        }
        comp_out.insert(c, (yp, ym));
    }
    // Component-output fanout to each group using the component.
    let mut group_leaf: BTreeMap<(usize, usize), (SpeciesId, SpeciesId)> = BTreeMap::new();
    for &c in &used {
        let in_groups: Vec<usize> = f
            .groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.contains(&c))
            .map(|(gi, _)| gi)
            .collect();
        if in_groups.len() == 1 {
            group_leaf.insert((in_groups[0], c), comp_out[&c]);
            continue;
        }
        let mut plus_products = Vec::new();
        let mut minus_products = Vec::new();
        for &gi in &in_groups {
            let p = b.sp(&format!("{prefix}grp{gi}.c{c}+"));
            let m = b.sp(&format!("{prefix}grp{gi}.c{c}-"));
            group_leaf.insert((gi, c), (p, m));
            plus_products.push((p, 1));
            minus_products.push((m, 1));
        }
        let (yp, ym) = comp_out[&c];
        b.rxn(&[(yp, 1)], &plus_products, &format!("{prefix}fanout.c{c}"));
        b.rxn(&[(ym, 1)], &minus_products, &format!("{prefix}fanout.c{c}"));
    }
    // Min tree per group, then the max tree across groups.
    let mut group_out = Vec::new();
    let mut counter = 0usize;
    for (gi, g) in f.groups.iter().enumerate() {
        let leaves: Vec<(SpeciesId, SpeciesId)> =
            g.iter().map(|&c| group_leaf[&(gi, c)]).collect();
        let pre = format!("{prefix}min");
        group_out.push(tree_fold(b, &leaves, &pre, &mut counter, &min2_into));
    }
    let pre = format!("{prefix}max");
    let mut counter = 0usize;
    tree_fold(b, &group_out, &pre, &mut counter, &max2_into)
}

fn dualrail_inputs(b: &mut NetBuilder, arity: usize) -> Vec<(SpeciesId, SpeciesId)> {
    (0..arity)
        .map(|i| {
            let p = b.sp(&format!("X{}+", i + 1));
            let m = b.sp(&format!("X{}-", i + 1));
            (p, m)
        })
        .collect()
}

fn finish_dualrail(
    b: NetBuilder,
    inputs: Vec<(SpeciesId, SpeciesId)>,
    (yp, ym): (SpeciesId, SpeciesId),
) -> CompiledCrc {
    let flat: Vec<SpeciesId> = inputs.iter().flat_map(|&(p, m)| [p, m]).collect();
    b.finish(flat, Output::DualRail { plus: yp, minus: ym })
}

/// Compiles a single linear component (offset 0) to a dual-rail CRC.
pub fn compile_linear(g: &AffineComponent) -> CompiledCrc {
    assert!(g.offset.is_zero(), "offsets are handled by compile_affine");
    let mut b = NetBuilder::new();
    let inputs = dualrail_inputs(&mut b, g.arity());
    let out = linear_into(&mut b, &inputs, g, "lin0");
    finish_dualrail(b, inputs, out)
}

/// The 2-input min gadget as a standalone CRC with unprefixed species.
pub fn compile_min2() -> CompiledCrc {
    let mut b = NetBuilder::new();
    let inputs = dualrail_inputs(&mut b, 2);
    let yp = b.sp("Y+");
    let ym = b.sp("Y-");
    let (x1, x2) = (inputs[0], inputs[1]);
    b.rxn(&[(x1.1, 1)], &[(x2.0, 1), (ym, 1)], "min");
    b.rxn(&[(x2.1, 1)], &[(x1.0, 1), (ym, 1)], "min");
    b.rxn(&[(x1.0, 1), (x2.0, 1)], &[(yp, 1)], "min");
    finish_dualrail(b, inputs, (yp, ym))
}

/// The 2-input max gadget: min with the rails swapped.
pub fn compile_max2() -> CompiledCrc {
    let mut b = NetBuilder::new();
    let inputs = dualrail_inputs(&mut b, 2);
    let yp = b.sp("Y+");
    let ym = b.sp("Y-");
    let (x1, x2) = (inputs[0], inputs[1]);
    b.rxn(&[(x1.0, 1)], &[(x2.1, 1), (yp, 1)], "max");
    b.rxn(&[(x2.0, 1)], &[(x1.1, 1), (yp, 1)], "max");
    b.rxn(&[(x1.1, 1), (x2.1, 1)], &[(ym, 1)], "max");
    finish_dualrail(b, inputs, (yp, ym))
}

/// Compiles a max-min form to a dual-rail CRC: linear gadgets per
/// component, balanced min trees per group, a balanced max tree across
/// groups. Component offsets become initial context on the component
/// output rails.
pub fn compile_maxmin(f: &MaxMinForm) -> CompiledCrc {
    let mut b = NetBuilder::new();
    let inputs = dualrail_inputs(&mut b, f.arity());
    let out = maxmin_into(&mut b, f, &inputs, "");
    finish_dualrail(b, inputs, out)
}

/// Compiles a continuous piecewise affine function given in max-min form
/// with offsets; the constants are realized as initial context.
pub fn compile_affine(f: &MaxMinForm) -> CompiledCrc {
    compile_maxmin(f)
}

/// Restriction of a regional function to the face `D_U`: substitute 0 for
/// the coordinates outside `U`, keep the pieces whose region meets the open
/// face, and close their regions.
fn restrict_to_face(f: &RegionalPwl, u: &[usize]) -> RegionalPwl {
    let keep = |coeffs: &[Rat]| -> Vec<Rat> { u.iter().map(|&i| coeffs[i].clone()).collect() };
    let mut pieces = Vec::new();
    for (g, region) in &f.pieces {
        let cons: Vec<LinCon> = region
            .cons
            .iter()
            .map(|c| LinCon {
                coeffs: keep(&c.coeffs),
                rel: c.rel,
                rhs: c.rhs.clone(),
            })
            .collect();
        // Does the restricted region meet the open face?
        let mut probe = cons.clone();
        for i in 0..u.len() {
            let mut coeffs = vec![Rat::zero(); u.len()];
            coeffs[i] = Rat::one();
            probe.push(LinCon {
                coeffs,
                rel: Rel::Gt,
                rhs: Rat::zero(),
            });
        }
        if crate::pwl::interior_point(&probe, u.len(), true).is_none() {
            continue;
        }
        let closed = Polyhedron { cons }.closure();
        pieces.push((
            AffineComponent {
                coeffs: keep(&g.coeffs),
                offset: g.offset.clone(),
            },
            closed,
        ));
    }
    RegionalPwl {
        arity: u.len(),
        pieces,
        nonneg: true,
    }
}

fn subset_name(u: &[usize]) -> String {
    u.iter()
        .map(|&i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join("")
}

/// Compiles a positive-continuous piecewise rational linear function on the
/// nonnegative orthant to a direct-output CRC via the indicator
/// construction: every face's restriction is computed in parallel, gated by
/// indicator species that activate exactly when the face's inputs are all
/// present, and larger activated faces cancel the contributions of their
/// strict subsets.
pub fn compile_direct(f: &RegionalPwl) -> Result<CompiledCrc, PwlError> {
    assert!(f.nonneg);
    let k = f.arity;
    assert!(k <= 4, "direct compilation is exponential in the arity");
    if !check_positive_continuous(f) {
        return Err(PwlError::NotPositiveContinuous);
    }
    let subsets: Vec<Vec<usize>> = {
        let mut v: Vec<Vec<usize>> = (1u32..(1 << k))
            .map(|mask| (0..k).filter(|i| mask & (1 << i) != 0).collect())
            .collect();
        v.sort_by_key(|u: &Vec<usize>| (u.len(), u.clone()));
        v
    };

    let mut b = NetBuilder::new();
    let xs: Vec<SpeciesId> = (0..k).map(|i| b.sp(&format!("X{}", i + 1))).collect();
    let yp = b.sp("Y+");
    let ym = b.sp("Y-");
    let i_sp: BTreeMap<Vec<usize>, SpeciesId> = subsets
        .iter()
        .map(|u| (u.clone(), b.sp(&format!("I{}", subset_name(u)))))
        .collect();
    let j_sp: BTreeMap<Vec<usize>, SpeciesId> = subsets
        .iter()
        .map(|u| (u.clone(), b.sp(&format!("J{}", subset_name(u)))))
        .collect();

    // Input fanout: each X_i seeds its singleton indicator and one private
    // input copy per face containing i, plus the inactive indicators of the
    // strict supersets of {i}.
    let mut x_copy: BTreeMap<(Vec<usize>, usize), SpeciesId> = BTreeMap::new();
    for (i, &x) in xs.iter().enumerate() {
        let mut products: Vec<(SpeciesId, u64)> =
            vec![(i_sp[&vec![i]], 1), (j_sp[&vec![i]], 1)];
        for u in &subsets {
            if !u.contains(&i) {
                continue;
            }
            let copy = b.sp(&format!("u{}.X{}", subset_name(u), i + 1));
            x_copy.insert((u.clone(), i), copy);
            products.push((copy, 1));
            if u.len() > 1 {
                products.push((j_sp[u], 1));
            }
        }
        b.rxn(&[(x, 1)], &products, &format!("fanout.X{}", i + 1));
    }

    // Indicator activation: unions of already-active indicator pairs.
    for (a, u) in subsets.iter().enumerate() {
        for u2 in subsets.iter().skip(a + 1) {
            let union: Vec<usize> = {
                let s: BTreeSet<usize> =
                    u.iter().chain(u2.iter()).copied().collect();
                s.into_iter().collect()
            };
            if &union == u || &union == u2 {
                continue;
            }
            b.rxn(
                &[(i_sp[u], 1), (i_sp[u2], 1), (j_sp[&union], 1)],
                &[(i_sp[u], 1), (i_sp[u2], 1), (i_sp[&union], 1)],
                &format!("activate.I{}", subset_name(&union)),
            );
        }
    }

    // Per-face sub-CRCs, output-tagged and gated by the face indicator.
    let mut y_tag: BTreeMap<Vec<usize>, (SpeciesId, SpeciesId)> = BTreeMap::new();
    for u in &subsets {
        let fu = restrict_to_face(f, u);
        let mu = regional_to_maxmin(&fu)?;
        assert!(
            mu.components.iter().all(|c| c.offset.is_zero()),
            "direct compilation requires linear pieces"
        );
        let prefix = format!("u{}.", subset_name(u));
        let ins: Vec<(SpeciesId, SpeciesId)> = u
            .iter()
            .map(|&i| {
                let minus = b.sp(&format!("{prefix}X{}-", i + 1));
                (x_copy[&(u.clone(), i)], minus)
            })
            .collect();
        let start = b.reactions.len();
        let (sub_yp, sub_ym) = maxmin_into(&mut b, &mu, &ins, &prefix);
        let end = b.reactions.len();
        assert!(b.context.is_empty());
        let ypu = b.sp(&format!("Y+{}", subset_name(u)));
        let ymu = b.sp(&format!("Y-{}", subset_name(u)));
        y_tag.insert(u.clone(), (ypu, ymu));
        let iu = i_sp[u];
        for rid in start..end {
            let r = &mut b.reactions[rid];
            let mut reactants = r.reactants.clone();
            let mut products = r.products.clone();
            // Rename the sub-CRC output rails to the shared Y rails and tag
            // net production with the face-specific species.
            for (from, to, tag) in [(sub_yp, yp, ypu), (sub_ym, ym, ymu)] {
                let consumed = reactants.remove(&from).unwrap_or(0);
                let produced = products.remove(&from).unwrap_or(0);
                if consumed > 0 {
                    *reactants.entry(to).or_insert(0) += consumed;
                }
                if produced > 0 {
                    *products.entry(to).or_insert(0) += produced;
                    if produced > consumed {
                        *products.entry(tag).or_insert(0) += produced - consumed;
                    }
                }
            }
            *reactants.entry(iu).or_insert(0) += 1;
            *products.entry(iu).or_insert(0) += 1;
            *r = Reaction::new(reactants, products);
        }
    }

    // Cancellation: an activated face voids every strict subset's output.
    for u in &subsets {
        for u2 in &subsets {
            if u2.len() >= u.len() || !u2.iter().all(|i| u.contains(i)) {
                continue;
            }
            let iu = i_sp[u];
            let (ypu2, ymu2) = y_tag[u2];
            let tag = format!("cancel.u{}", subset_name(u2));
            b.rxn(&[(iu, 1), (ypu2, 1)], &[(iu, 1), (ym, 1)], &tag);
            b.rxn(&[(iu, 1), (ymu2, 1)], &[(iu, 1), (yp, 1)], &tag);
        }
    }
    b.rxn(&[(yp, 1), (ym, 1)], &[], "annihilate");

    Ok(b.finish(xs, Output::Direct(yp)))
}

/// Runs the canonical schedule: each reaction in order to completion,
/// passes repeated until no reaction can fire. Returns the final state and
/// the path taken (one segment per nonzero completion).
pub fn run_schedule(compiled: &CompiledCrc, state: &State) -> (State, Path) {
    let crn = &compiled.crc.crn;
    let mut cur = state.clone();
    let mut segments = Vec::new();
    for _pass in 0..64 {
        let mut fired = false;
        for &j in &compiled.schedule {
            let r = &crn.reactions()[j];
            if !r.reactants.keys().all(|&s| cur.get(s).is_positive()) {
                continue;
            }
            let lambda = r
                .reactants
                .keys()
                .filter(|&&s| r.net(s) < 0)
                .map(|&s| cur.get(s) / Rat::from_integer((-r.net(s)).into()))
                .min()
                .expect("every scheduled reaction drains some species");
            if !lambda.is_positive() {
                continue;
            }
            let mut u = FluxVector::zero(crn);
            u.0[j] = lambda;
            cur = crate::crn::apply_flux(crn, &cur, &u).expect("completion flux is valid");
            segments.push(u);
            fired = true;
        }
        if !fired {
            return (
                cur,
                Path {
                    x0: state.clone(),
                    segments,
                },
            );
        }
    }
    panic!("schedule did not stabilize within the pass cap");
}

/// Initial state of a dual-rail CRC for the given rail splits, plus the
/// compiled initial context.
pub fn dualrail_initial_state(crc: &Crc, values: &[DualRailValue]) -> State {
    let concs: Vec<Rat> = values
        .iter()
        .flat_map(|v| [v.plus.clone(), v.minus.clone()])
        .collect();
    crc.initial_state(&concs)
}

/// Series composition: feed `first`'s dual-rail output into the single
/// dual-rail input pair of `second`. Species are namespaced per stage and
/// the output rails of the first stage are identified with the input rails
/// of the second.
pub fn compose(first: &CompiledCrc, second: &CompiledCrc) -> CompiledCrc {
    let (fyp, fym) = match first.crc.output {
        Output::DualRail { plus, minus } => (plus, minus),
        Output::Direct(_) => panic!("composition requires a dual-rail first stage"),
    };
    assert_eq!(second.crc.inputs.len(), 2, "second stage must be unary dual-rail");
    let mut b = NetBuilder::new();
    let map_species = |b: &mut NetBuilder, crc: &Crc, stage: &str, special: &BTreeMap<SpeciesId, SpeciesId>| {
        let mut ids = Vec::new();
        for s in 0..crc.crn.num_species() {
            if let Some(&id) = special.get(&s) {
                ids.push(id);
            } else {
                ids.push(b.sp(&format!("{stage}.{}", crc.crn.species_name(s))));
            }
        }
        ids
    };
    let first_ids = map_species(&mut b, &first.crc, "a", &BTreeMap::new());
    let mut special = BTreeMap::new();
    special.insert(second.crc.inputs[0], first_ids[fyp]);
    special.insert(second.crc.inputs[1], first_ids[fym]);
    let second_ids = map_species(&mut b, &second.crc, "b", &special);
    for (compiled, ids) in [(first, &first_ids), (second, &second_ids)] {
        for &j in &compiled.schedule {
            let r = &compiled.crc.crn.reactions()[j];
            let reactants: Vec<(SpeciesId, u64)> =
                r.reactants.iter().map(|(&s, &n)| (ids[s], n)).collect();
            let products: Vec<(SpeciesId, u64)> =
                r.products.iter().map(|(&s, &n)| (ids[s], n)).collect();
            b.rxn(&reactants, &products, &compiled.provenance[j]);
        }
    }
    for (compiled, ids) in [(first, &first_ids), (second, &second_ids)] {
        for (s, v) in &compiled.crc.initial_context {
            b.context.push((ids[*s], v.clone()));
        }
    }
    let inputs: Vec<SpeciesId> = first.crc.inputs.iter().map(|&s| first_ids[s]).collect();
    let output = match second.crc.output {
        Output::DualRail { plus, minus } => Output::DualRail {
            plus: second_ids[plus],
            minus: second_ids[minus],
        },
        Output::Direct(y) => Output::Direct(second_ids[y]),
    };
    b.finish(inputs, output)
}
