//! Static analysis: siphons, output stability, feedforward orders and
//! static equilibria.

use std::collections::BTreeSet;

use num_traits::Signed;

use crate::crn::{Crc, Crn, SpeciesId, State};
use crate::reach::producible_set;

/// Definitional siphon check: every reaction producing a member has some
/// member among its reactants. The empty set is vacuously a siphon.
pub fn is_siphon(crn: &Crn, members: &BTreeSet<SpeciesId>) -> bool {
    crn.reactions().iter().all(|r| {
        let produces_member = members.iter().any(|&s| r.net(s) > 0);
        !produces_member || r.reactants.keys().any(|s| members.contains(s))
    })
}

/// Smallest siphon containing `seed`, grown by the closure rule: while some
/// reaction produces a member without consuming one, one of its reactants
/// must join. Branches over the reactant choice; collects all closures.
fn siphon_closures(
    crn: &Crn,
    seed: &BTreeSet<SpeciesId>,
    out: &mut Vec<BTreeSet<SpeciesId>>,
) {
    let violated = crn.reactions().iter().find(|r| {
        seed.iter().any(|&s| r.net(s) > 0) && !r.reactants.keys().any(|s| seed.contains(s))
    });
    match violated {
        None => out.push(seed.clone()),
        Some(r) => {
            for &s in r.reactants.keys() {
                let mut bigger = seed.clone();
                bigger.insert(s);
                siphon_closures(crn, &bigger, out);
            }
        }
    }
}

/// All inclusion-minimal nonempty siphons, deduplicated and sorted
/// lexicographically by member indices.
pub fn minimal_siphons(crn: &Crn) -> Vec<BTreeSet<SpeciesId>> {
    let mut found: Vec<BTreeSet<SpeciesId>> = Vec::new();
    for s in 0..crn.num_species() {
        siphon_closures(crn, &BTreeSet::from([s]), &mut found);
    }
    minimal_only(found)
}

fn minimal_only(mut sets: Vec<BTreeSet<SpeciesId>>) -> Vec<BTreeSet<SpeciesId>> {
    sets.sort();
    sets.dedup();
    let minimal: Vec<BTreeSet<SpeciesId>> = sets
        .iter()
        .filter(|a| !sets.iter().any(|b| b != *a && b.is_subset(a)))
        .cloned()
        .collect();
    minimal
}

/// Reactions whose net effect changes the output value (either rail, for
/// dual-rail outputs).
pub fn output_changing_reactions(crc: &Crc) -> Vec<usize> {
    (0..crc.crn.num_reactions())
        .filter(|&j| crc.output_net(j) != 0)
        .collect()
}

/// Output stability via the producible fixpoint: no output-changing
/// reaction can ever become applicable from `state`.
pub fn output_stable(crc: &Crc, state: &State) -> bool {
    let all: BTreeSet<usize> = (0..crc.crn.num_reactions()).collect();
    let p = producible_set(&crc.crn, &state.support(), &all);
    output_changing_reactions(crc)
        .iter()
        .all(|&j| !crc.crn.reactions()[j].reactants.keys().all(|s| p.contains(s)))
}

/// Output-stable siphons: minimal siphons that contain a hitting set of the
/// reactant sets of all output-changing reactions. A state is output stable
/// iff one of these is entirely absent. `None` signals that no reaction
/// changes the output, so every state is stable.
pub fn output_stable_siphons(crc: &Crc) -> Option<Vec<BTreeSet<SpeciesId>>> {
    let changing = output_changing_reactions(crc);
    if changing.is_empty() {
        return None;
    }
    // Enumerate hitting sets by branching over reactants reaction by
    // reaction, then close each into siphons.
    let mut hitting: Vec<BTreeSet<SpeciesId>> = vec![BTreeSet::new()];
    for &j in &changing {
        let r = &crc.crn.reactions()[j];
        let mut next = Vec::new();
        for h in &hitting {
            if r.reactants.keys().any(|s| h.contains(s)) {
                next.push(h.clone());
                continue;
            }
            for &s in r.reactants.keys() {
                let mut h2 = h.clone();
                h2.insert(s);
                next.push(h2);
            }
        }
        next.sort();
        next.dedup();
        hitting = next;
    }
    let mut siphons = Vec::new();
    for h in &hitting {
        siphon_closures(&crc.crn, h, &mut siphons);
    }
    Some(minimal_only(siphons))
}

/// A species order witnessing the feedforward property: every reaction that
/// net-produces the species at position i net-consumes some species at an
/// earlier position. Greedy construction; greedy is complete because an
/// appendable species stays appendable.
pub fn feedforward_order(crn: &Crn) -> Option<Vec<SpeciesId>> {
    let n = crn.num_species();
    let mut order: Vec<SpeciesId> = Vec::new();
    let mut placed = vec![false; n];
    while order.len() < n {
        let next = (0..n).find(|&s| {
            !placed[s]
                && crn.reactions().iter().all(|r| {
                    r.net(s) <= 0
                        || r.reactants.keys().any(|&q| placed[q] && r.net(q) < 0)
                })
        });
        match next {
            Some(s) => {
                placed[s] = true;
                order.push(s);
            }
            None => return None,
        }
    }
    Some(order)
}

/// Literal check of the feedforward predicate for a given order.
pub fn is_feedforward_order(crn: &Crn, order: &[SpeciesId]) -> bool {
    let pos: Vec<usize> = {
        let mut p = vec![usize::MAX; crn.num_species()];
        for (i, &s) in order.iter().enumerate() {
            p[s] = i;
        }
        p
    };
    if pos.iter().any(|&p| p == usize::MAX) {
        return false;
    }
    crn.reactions().iter().all(|r| {
        (0..crn.num_species()).all(|s| {
            r.net(s) <= 0
                || (0..crn.num_species()).any(|q| pos[q] < pos[s] && r.net(q) < 0)
        })
    })
}

/// True iff no reaction is applicable at `state`.
pub fn static_equilibrium(crn: &Crn, state: &State) -> bool {
    crn.reactions()
        .iter()
        .all(|r| !r.reactants.keys().all(|&s| state.get(s).is_positive()))
}
