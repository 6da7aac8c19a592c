//! Core data model: species, reactions, networks, states and flux vectors.
//!
//! All values are immutable after construction and safe to share between
//! concurrent workers; mutation happens only by constructing new values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use crate::rat::{format_rat, Rat};

/// Index of a species within a [`Crn`]'s declaration order.
pub type SpeciesId = usize;
/// Index of a reaction within a [`Crn`]'s declaration order.
pub type ReactionId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CrnError {
    #[error("duplicate species `{0}`")]
    DuplicateSpecies(String),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("reaction {0} has an empty reactant side")]
    EmptyReactants(ReactionId),
    #[error("reaction index {0} out of range")]
    ReactionOutOfRange(ReactionId),
    #[error("reaction {reaction} is not applicable: reactant `{species}` is absent")]
    InapplicableReaction { reaction: ReactionId, species: String },
    #[error("flux drives species `{0}` negative")]
    NegativeResult(String),
}

/// A reaction with positive integer reactant counts and nonnegative integer
/// product counts, both keyed by species index. Catalysts (equal reactant and
/// product count) contribute 0 to the stoichiometry matrix but remain
/// recorded here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reaction {
    pub reactants: BTreeMap<SpeciesId, u64>,
    pub products: BTreeMap<SpeciesId, u64>,
}

impl Reaction {
    pub fn new(
        reactants: impl IntoIterator<Item = (SpeciesId, u64)>,
        products: impl IntoIterator<Item = (SpeciesId, u64)>,
    ) -> Self {
        let reactants: BTreeMap<_, _> =
            reactants.into_iter().filter(|&(_, n)| n > 0).collect();
        let products: BTreeMap<_, _> =
            products.into_iter().filter(|&(_, n)| n > 0).collect();
        Reaction { reactants, products }
    }

    /// Net production of `species` (negative if consumed).
    pub fn net(&self, species: SpeciesId) -> i64 {
        let p = *self.products.get(&species).unwrap_or(&0) as i64;
        let r = *self.reactants.get(&species).unwrap_or(&0) as i64;
        p - r
    }

    /// Sum of reactant counts: gross consumption per unit flux.
    pub fn gross_consumption(&self) -> u64 {
        self.reactants.values().sum()
    }
}

/// A finite chemical reaction network. Species order is declaration order and
/// reaction order is file order, so stoichiometry columns and every witness
/// derived from them are deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crn {
    species: Vec<String>,
    reactions: Vec<Reaction>,
}

impl Crn {
    pub fn new(species: Vec<String>, reactions: Vec<Reaction>) -> Result<Self, CrnError> {
        let mut seen = BTreeSet::new();
        for s in &species {
            if !seen.insert(s.clone()) {
                return Err(CrnError::DuplicateSpecies(s.clone()));
            }
        }
        for (j, r) in reactions.iter().enumerate() {
            if r.reactants.is_empty() {
                return Err(CrnError::EmptyReactants(j));
            }
        }
        Ok(Crn { species, reactions })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_index(&self, name: &str) -> Option<SpeciesId> {
        self.species.iter().position(|s| s == name)
    }

    pub fn species_name(&self, id: SpeciesId) -> &str {
        &self.species[id]
    }

    /// Stoichiometry matrix entry: net production of species `i` by reaction `j`.
    pub fn stoich(&self, i: SpeciesId, j: ReactionId) -> i64 {
        self.reactions[j].net(i)
    }

    /// Segment bound from the reachability theory: min(|R|, |Λ|).
    pub fn segment_bound(&self) -> usize {
        self.num_reactions().min(self.num_species())
    }
}

/// A state: exact nonnegative rational concentration per species, dense in
/// the owning CRN's species order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State(pub Vec<Rat>);

impl State {
    pub fn zero(crn: &Crn) -> Self {
        State(vec![Rat::zero(); crn.num_species()])
    }

    pub fn from_pairs(crn: &Crn, pairs: &[(&str, Rat)]) -> Result<Self, CrnError> {
        let mut state = State::zero(crn);
        for (name, value) in pairs {
            let id = crn
                .species_index(name)
                .ok_or_else(|| CrnError::UnknownSpecies((*name).to_string()))?;
            state.0[id] = value.clone();
        }
        Ok(state)
    }

    /// The support `[c]`: species with strictly positive concentration.
    pub fn support(&self) -> BTreeSet<SpeciesId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_positive())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|v| !v.is_negative())
    }

    pub fn get(&self, id: SpeciesId) -> &Rat {
        &self.0[id]
    }
}

use num_traits::Signed;

/// Nonnegative flux per reaction, dense in reaction order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FluxVector(pub Vec<Rat>);

impl FluxVector {
    pub fn zero(crn: &Crn) -> Self {
        FluxVector(vec![Rat::zero(); crn.num_reactions()])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| v.is_zero())
    }

    pub fn support(&self) -> BTreeSet<ReactionId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_positive())
            .map(|(j, _)| j)
            .collect()
    }
}

/// True iff every reactant of reaction `j` has strictly positive
/// concentration in `state`.
pub fn applicable(crn: &Crn, state: &State, j: ReactionId) -> Result<bool, CrnError> {
    let reaction = crn
        .reactions()
        .get(j)
        .ok_or(CrnError::ReactionOutOfRange(j))?;
    Ok(reaction
        .reactants
        .keys()
        .all(|&s| state.get(s).is_positive()))
}

/// Applies one straight-line flux: returns `c + M u` if every reaction with
/// positive flux is applicable at `state` and the result is componentwise
/// nonnegative. Exact rational arithmetic throughout.
pub fn apply_flux(crn: &Crn, state: &State, u: &FluxVector) -> Result<State, CrnError> {
    assert_eq!(u.0.len(), crn.num_reactions(), "flux arity mismatch");
    for j in u.support() {
        let reaction = &crn.reactions()[j];
        for &s in reaction.reactants.keys() {
            if !state.get(s).is_positive() {
                return Err(CrnError::InapplicableReaction {
                    reaction: j,
                    species: crn.species_name(s).to_string(),
                });
            }
        }
    }
    let mut next = state.clone();
    for (j, flux) in u.0.iter().enumerate() {
        if flux.is_zero() {
            continue;
        }
        let reaction = &crn.reactions()[j];
        let touched: BTreeSet<SpeciesId> = reaction
            .reactants
            .keys()
            .chain(reaction.products.keys())
            .copied()
            .collect();
        for s in touched {
            let net = reaction.net(s);
            if net != 0 {
                next.0[s] += flux * Rat::from_integer(net.into());
            }
        }
    }
    for (i, v) in next.0.iter().enumerate() {
        if v.is_negative() {
            return Err(CrnError::NegativeResult(crn.species_name(i).to_string()));
        }
    }
    Ok(next)
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, v)| format!("{}={}", i, format_rat(v)))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Output convention of a chemical reaction computer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Direct(SpeciesId),
    DualRail { plus: SpeciesId, minus: SpeciesId },
}

/// A CRN with designated input species, output species, an encoding kind
/// implied by the output, and an optional rational initial context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crc {
    pub crn: Crn,
    pub inputs: Vec<SpeciesId>,
    pub output: Output,
    pub initial_context: Vec<(SpeciesId, Rat)>,
}

impl Crc {
    pub fn new(
        crn: Crn,
        inputs: Vec<SpeciesId>,
        output: Output,
        initial_context: Vec<(SpeciesId, Rat)>,
    ) -> Result<Self, CrnError> {
        let n = crn.num_species();
        let out_species: Vec<SpeciesId> = match output {
            Output::Direct(y) => vec![y],
            Output::DualRail { plus, minus } => vec![plus, minus],
        };
        for &s in inputs.iter().chain(out_species.iter()) {
            if s >= n {
                return Err(CrnError::UnknownSpecies(format!("#{s}")));
            }
        }
        for &y in &out_species {
            if inputs.contains(&y) {
                return Err(CrnError::UnknownSpecies(format!(
                    "output `{}` is also an input",
                    crn.species_name(y)
                )));
            }
        }
        Ok(Crc {
            crn,
            inputs,
            output,
            initial_context,
        })
    }

    pub fn is_dual_rail(&self) -> bool {
        matches!(self.output, Output::DualRail { .. })
    }

    /// Output value of a state: `y` (direct) or `y⁺ − y⁻` (dual-rail).
    pub fn output_value(&self, state: &State) -> Rat {
        match self.output {
            Output::Direct(y) => state.get(y).clone(),
            Output::DualRail { plus, minus } => state.get(plus) - state.get(minus),
        }
    }

    /// Net change of the output value caused by reaction `j`; nonzero
    /// identifies the output-changing reactions.
    pub fn output_net(&self, j: ReactionId) -> i64 {
        let r = &self.crn.reactions()[j];
        match self.output {
            Output::Direct(y) => r.net(y),
            Output::DualRail { plus, minus } => {
                // Either rail moving counts as an output change.
                if r.net(plus) != 0 || r.net(minus) != 0 {
                    1
                } else {
                    0
                }
            }
        }
    }

    /// A valid initial state: input concentrations plus the initial context.
    pub fn initial_state(&self, input_concs: &[Rat]) -> State {
        assert_eq!(input_concs.len(), self.inputs.len(), "input arity mismatch");
        let mut state = State::zero(&self.crn);
        for (&s, v) in self.inputs.iter().zip(input_concs) {
            state.0[s] = v.clone();
        }
        for (s, v) in &self.initial_context {
            state.0[*s] += v;
        }
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, rat_int};

    fn two_reaction_crn() -> Crn {
        // X -> C ; C + Y -> C + Z
        let species = vec!["X".into(), "C".into(), "Y".into(), "Z".into()];
        let r1 = Reaction::new([(0, 1)], [(1, 1)]);
        let r2 = Reaction::new([(1, 1), (2, 1)], [(1, 1), (3, 1)]);
        Crn::new(species, vec![r1, r2]).unwrap()
    }

    #[test]
    fn applicability() {
        let crn = two_reaction_crn();
        let c = State::from_pairs(&crn, &[("X", rat_int(1)), ("Y", rat_int(1))]).unwrap();
        assert!(applicable(&crn, &c, 0).unwrap());
        // C absent, so the catalytic reaction is not applicable.
        assert!(!applicable(&crn, &c, 1).unwrap());
        assert_eq!(
            applicable(&crn, &c, 7).unwrap_err(),
            CrnError::ReactionOutOfRange(7)
        );
    }

    #[test]
    fn applicability_missing_reactant() {
        // A + 2B -> A + 3C at {A:1, B:0}
        let species = vec!["A".into(), "B".into(), "C".into()];
        let r = Reaction::new([(0, 1), (1, 2)], [(0, 1), (2, 3)]);
        let crn = Crn::new(species, vec![r]).unwrap();
        let c = State::from_pairs(&crn, &[("A", rat_int(1))]).unwrap();
        assert!(!applicable(&crn, &c, 0).unwrap());
    }

    #[test]
    fn apply_flux_first_segment_of_worked_example() {
        let crn = two_reaction_crn();
        let c = State::from_pairs(&crn, &[("X", rat_int(1)), ("Y", rat_int(1))]).unwrap();
        let u = FluxVector(vec![rat(1, 10), rat(0, 1)]);
        let d = apply_flux(&crn, &c, &u).unwrap();
        let expected = State::from_pairs(
            &crn,
            &[("X", rat(9, 10)), ("C", rat(1, 10)), ("Y", rat_int(1))],
        )
        .unwrap();
        assert_eq!(d, expected);
    }

    #[test]
    fn apply_flux_zero_is_identity() {
        let crn = two_reaction_crn();
        let c = State::from_pairs(&crn, &[("X", rat(3, 7))]).unwrap();
        let d = apply_flux(&crn, &c, &FluxVector::zero(&crn)).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn apply_flux_rejects_inapplicable() {
        let crn = two_reaction_crn();
        let c = State::from_pairs(&crn, &[("X", rat_int(1)), ("Y", rat_int(1))]).unwrap();
        let u = FluxVector(vec![rat(0, 1), rat(1, 2)]);
        match apply_flux(&crn, &c, &u) {
            Err(CrnError::InapplicableReaction { reaction: 1, .. }) => {}
            other => panic!("expected inapplicable reaction, got {other:?}"),
        }
    }

    #[test]
    fn apply_flux_rejects_negative_endpoint() {
        let crn = two_reaction_crn();
        let c = State::from_pairs(&crn, &[("X", rat(1, 2))]).unwrap();
        let u = FluxVector(vec![rat_int(1), rat(0, 1)]);
        assert_eq!(
            apply_flux(&crn, &c, &u).unwrap_err(),
            CrnError::NegativeResult("X".into())
        );
    }

    #[test]
    fn net_consumption_reaction_can_empty_a_species() {
        // 2X -> X has net -1; endpoint-nonnegativity semantics allow
        // draining X fully in one segment.
        let crn = Crn::new(
            vec!["X".into()],
            vec![Reaction::new([(0, 2)], [(0, 1)])],
        )
        .unwrap();
        let c = State::from_pairs(&crn, &[("X", rat_int(1))]).unwrap();
        let d = apply_flux(&crn, &c, &FluxVector(vec![rat_int(1)])).unwrap();
        assert_eq!(d, State::zero(&crn));
    }
}
