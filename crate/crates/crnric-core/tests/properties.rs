//! Randomized property tests for the exact CRN semantics, reachability,
//! siphon analysis, and piecewise-linear machinery.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crnric_core::analysis::{
    is_siphon, minimal_siphons, output_stable, output_stable_siphons,
};
use crnric_core::harness::{adversarial_prefix, AdversaryConfig};
use crnric_core::parse::{
    parse_crn, parse_path, parse_state, serialize_crn, serialize_path, serialize_state, CrnFile,
};
use crnric_core::pwl::{
    dualrail_decode, dualrail_encode, eval_maxmin, eval_regional, regional_to_maxmin,
    AffineComponent, DualRailValue, LinCon, Polyhedron, RegionalPwl, Rel,
};
use crnric_core::rat::{rat, rat_int, Rat};
use crnric_core::reach::{
    decide_reachable, decide_reachable_bruteforce, producible, verify_path, Path,
};
use crnric_core::{apply_flux, Crc, Crn, FluxVector, Output, Reaction, State};

// ---------- generators ----------

fn small_nonneg_rat() -> impl Strategy<Value = Rat> {
    (0i64..=12, 1i64..=6).prop_map(|(n, d)| rat(n, d))
}

fn small_rat() -> impl Strategy<Value = Rat> {
    (-12i64..=12, 1i64..=6).prop_map(|(n, d)| rat(n, d))
}

#[derive(Debug, Clone)]
struct SmallCrn(Crn);

fn small_crn(max_species: usize, max_reactions: usize) -> impl Strategy<Value = SmallCrn> {
    let species = 2..=max_species;
    species.prop_flat_map(move |ns| {
        let reaction = (
            proptest::collection::btree_map(0..ns, 1u64..=2, 1..=2),
            proptest::collection::btree_map(0..ns, 1u64..=2, 0..=2),
        )
            .prop_map(|(r, p)| Reaction::new(r, p));
        proptest::collection::vec(reaction, 1..=max_reactions).prop_map(move |rs| {
            let names = (0..ns).map(|i| format!("S{i}")).collect();
            SmallCrn(Crn::new(names, rs).expect("generated CRN is valid"))
        })
    })
}

fn state_for(ns: usize) -> impl Strategy<Value = Vec<Rat>> {
    proptest::collection::vec(small_nonneg_rat(), ns)
}

fn prefix_of(crn: &Crn, x0: &State, seed: u64, segs: usize) -> Path {
    let cfg = AdversaryConfig {
        max_prefix_segments: segs,
        ..AdversaryConfig::default()
    };
    adversarial_prefix(crn, x0, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

// ---------- core semantics ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interpolated_states_stay_nonnegative(
        c in small_crn(4, 4),
        x in state_for(4),
        seed in 0u64..1000,
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let path = prefix_of(crn, &x0, seed, 3);
        let states = path.states(crn).unwrap();
        for (i, u) in path.segments.iter().enumerate() {
            for t in [rat(1, 4), rat(1, 2), rat(3, 4)] {
                let scaled = FluxVector(u.0.iter().map(|v| v * &t).collect());
                let mid = apply_flux(crn, &states[i], &scaled).unwrap();
                prop_assert!(mid.0.iter().all(|v| !v.is_negative()));
            }
        }
    }

    #[test]
    fn flux_application_concatenates(
        c in small_crn(4, 4),
        x in state_for(4),
        seed in 0u64..1000,
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let path = prefix_of(crn, &x0, seed, 2);
        if path.segments.len() == 2 {
            let step1 = apply_flux(crn, &path.x0, &path.segments[0]).unwrap();
            let step2 = apply_flux(crn, &step1, &path.segments[1]).unwrap();
            let end = path.states(crn).unwrap().pop().unwrap();
            prop_assert_eq!(step2, end);
        }
    }

    #[test]
    fn serialization_round_trips(
        c in small_crn(4, 4),
        x in state_for(4),
        seed in 0u64..1000,
    ) {
        let crn = c.0.clone();
        // Declare every species in the header so none is dropped by the
        // reaction-based interner on re-parse.
        let all: Vec<String> = (0..crn.num_species())
            .map(|s| crn.species_name(s).to_string())
            .collect();
        let file = CrnFile { crn: crn.clone(), inputs: all, output: None, context: vec![] };
        let parsed = parse_crn(&serialize_crn(&file)).unwrap();
        prop_assert_eq!(&parsed.crn, &crn);

        let x0 = State(x[..crn.num_species()].to_vec());
        let st_text = serialize_state(&crn, &x0);
        prop_assert_eq!(&parse_state(&crn, &st_text).unwrap(), &x0);

        let path = prefix_of(&crn, &x0, seed, 3);
        let p_text = serialize_path(&crn, &path);
        prop_assert_eq!(&parse_path(&crn, &p_text).unwrap(), &path);
    }
}

// ---------- reachability ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn witnesses_are_sound_and_bounded(
        c in small_crn(4, 4),
        x in state_for(4),
        seed in 0u64..1000,
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let path = prefix_of(crn, &x0, seed, 4);
        let d = path.states(crn).unwrap().pop().unwrap();
        let verdict = decide_reachable(crn, &x0, &d);
        prop_assert!(verdict.reachable, "endpoint of a valid path must be reachable");
        let w = verdict.witness.unwrap();
        prop_assert_eq!(&verify_path(crn, &w).unwrap(), &d);
        prop_assert!(w.segments.len() <= crn.segment_bound() + 1);
    }

    #[test]
    fn decision_agrees_with_bruteforce(
        c in small_crn(4, 4),
        x in state_for(4),
        y in state_for(4),
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let d = State(y[..crn.num_species()].to_vec());
        let fast = decide_reachable(crn, &x0, &d);
        let slow = decide_reachable_bruteforce(crn, &x0, &d);
        prop_assert_eq!(fast.reachable, slow.reachable);
    }

    #[test]
    fn reachability_respects_addition(
        c in small_crn(4, 4),
        x in state_for(4),
        e in state_for(4),
        seed in 0u64..1000,
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let path = prefix_of(crn, &x0, seed, 3);
        let d = path.states(crn).unwrap().pop().unwrap();
        let shift = &e[..crn.num_species()];
        let c2 = State(x0.0.iter().zip(shift).map(|(a, b)| a + b).collect());
        let d2 = State(d.0.iter().zip(shift).map(|(a, b)| a + b).collect());
        prop_assert!(decide_reachable(crn, &c2, &d2).reachable);
    }

    #[test]
    fn valid_paths_scale(
        c in small_crn(4, 4),
        x in state_for(4),
        seed in 0u64..1000,
        lam in (1i64..=20, 1i64..=5),
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let path = prefix_of(crn, &x0, seed, 3);
        let l = rat(lam.0, lam.1);
        let scaled = Path {
            x0: State(path.x0.0.iter().map(|v| v * &l).collect()),
            segments: path
                .segments
                .iter()
                .map(|u| FluxVector(u.0.iter().map(|v| v * &l).collect()))
                .collect(),
        };
        prop_assert!(verify_path(crn, &scaled).is_ok());
    }

    #[test]
    fn path_averages_are_valid(
        c in small_crn(4, 4),
        x in state_for(4),
        s1 in 0u64..1000,
        s2 in 0u64..1000,
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let mut p1 = prefix_of(crn, &x0, s1, 3);
        let mut p2 = prefix_of(crn, &x0, s2, 3);
        // Pad to equal length with zero segments (valid: no reaction used).
        while p1.segments.len() < p2.segments.len() {
            p1.segments.push(FluxVector::zero(crn));
        }
        while p2.segments.len() < p1.segments.len() {
            p2.segments.push(FluxVector::zero(crn));
        }
        let half = rat(1, 2);
        let avg = Path {
            x0: x0.clone(),
            segments: p1
                .segments
                .iter()
                .zip(&p2.segments)
                .map(|(a, b)| {
                    FluxVector(
                        a.0.iter()
                            .zip(&b.0)
                            .map(|(u, v)| (u + v) * &half)
                            .collect(),
                    )
                })
                .collect(),
        };
        prop_assert!(verify_path(crn, &avg).is_ok());
    }

    #[test]
    fn siphons_are_forward_invariant(
        c in small_crn(4, 4),
        x in state_for(4),
        seed in 0u64..1000,
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let path = prefix_of(crn, &x0, seed, 4);
        let states = path.states(crn).unwrap();
        for sip in minimal_siphons(crn) {
            if sip.iter().any(|&s| !x0.get(s).is_zero()) {
                continue;
            }
            for st in &states {
                prop_assert!(sip.iter().all(|&s| st.get(s).is_zero()));
            }
        }
    }

    #[test]
    fn unproducible_species_form_a_siphon(
        c in small_crn(4, 4),
        x in state_for(4),
    ) {
        let crn = &c.0;
        let x0 = State(x[..crn.num_species()].to_vec());
        let (p, _) = producible(crn, &x0);
        let complement: BTreeSet<usize> =
            (0..crn.num_species()).filter(|s| !p.contains(s)).collect();
        prop_assert!(is_siphon(crn, &complement));
    }
}

// ---------- analysis ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn output_stability_matches_siphon_characterization(
        c in small_crn(4, 4),
        x in state_for(4),
        out in 0usize..4,
    ) {
        let crn = c.0.clone();
        let y = out % crn.num_species();
        let crc = Crc::new(crn.clone(), vec![], Output::Direct(y), vec![]).unwrap();
        let st = State(x[..crn.num_species()].to_vec());
        let by_fixpoint = output_stable(&crc, &st);
        let by_siphon = match output_stable_siphons(&crc) {
            None => true,
            Some(sips) => sips
                .iter()
                .any(|sip| sip.iter().all(|&s| st.get(s).is_zero())),
        };
        prop_assert_eq!(by_fixpoint, by_siphon);
    }
}

// ---------- piecewise linear ----------

fn abs_regional() -> RegionalPwl {
    let con = |coeffs: Vec<Rat>, rel, rhs| LinCon { coeffs, rel, rhs };
    RegionalPwl {
        arity: 1,
        pieces: vec![
            (
                AffineComponent::linear(vec![Rat::one()]),
                Polyhedron {
                    cons: vec![con(vec![Rat::one()], Rel::Ge, Rat::zero())],
                },
            ),
            (
                AffineComponent::linear(vec![-Rat::one()]),
                Polyhedron {
                    cons: vec![con(vec![Rat::one()], Rel::Le, Rat::zero())],
                },
            ),
        ],
        nonneg: false,
    }
}

fn max_regional() -> RegionalPwl {
    let con = |coeffs: Vec<Rat>, rel, rhs| LinCon { coeffs, rel, rhs };
    RegionalPwl {
        arity: 2,
        pieces: vec![
            (
                AffineComponent::linear(vec![Rat::one(), Rat::zero()]),
                Polyhedron {
                    cons: vec![con(vec![Rat::one(), -Rat::one()], Rel::Ge, Rat::zero())],
                },
            ),
            (
                AffineComponent::linear(vec![Rat::zero(), Rat::one()]),
                Polyhedron {
                    cons: vec![con(vec![Rat::one(), -Rat::one()], Rel::Le, Rat::zero())],
                },
            ),
        ],
        nonneg: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_agrees_pointwise(
        a in small_rat(),
        b in small_rat(),
    ) {
        for (f, x) in [
            (abs_regional(), vec![a.clone()]),
            (max_regional(), vec![a.clone(), b.clone()]),
        ] {
            let mm = regional_to_maxmin(&f).unwrap();
            let direct = eval_regional(&f, &x).unwrap();
            prop_assert_eq!(eval_maxmin(&mm, &x).unwrap(), direct);
        }
    }

    #[test]
    fn maxmin_value_is_some_component(
        a in small_rat(),
        b in small_rat(),
    ) {
        let mm = regional_to_maxmin(&max_regional()).unwrap();
        let x = vec![a, b];
        let v = eval_maxmin(&mm, &x).unwrap();
        prop_assert!(mm.components.iter().any(|g| g.eval(&x) == v));
    }

    #[test]
    fn interval_property_of_maxmin(
        a1 in small_rat(), a2 in small_rat(),
        b1 in small_rat(), b2 in small_rat(),
    ) {
        // For any segment [a, b], some component is below f at a and above
        // f at b.
        let mm = regional_to_maxmin(&max_regional()).unwrap();
        let a = vec![a1, a2];
        let b = vec![b1, b2];
        let fa = eval_maxmin(&mm, &a).unwrap();
        let fb = eval_maxmin(&mm, &b).unwrap();
        prop_assert!(mm
            .components
            .iter()
            .any(|g| g.eval(&a) <= fa && g.eval(&b) >= fb));
    }

    #[test]
    fn dualrail_shift_invariance(
        v in small_rat(),
        t in small_nonneg_rat(),
    ) {
        let enc = &dualrail_encode(std::slice::from_ref(&v))[0];
        let shifted = DualRailValue {
            plus: &enc.plus + &t,
            minus: &enc.minus + &t,
        };
        prop_assert_eq!(dualrail_decode(&[shifted]), vec![v]);
    }
}

// ---------- compiled gadget conservation ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_gadget_conservation_on_random_paths(
        xp in small_nonneg_rat(), xm in small_nonneg_rat(),
        yp in small_nonneg_rat(), ym in small_nonneg_rat(),
        seed in 0u64..1000,
    ) {
        // g(x) = (2 x1 - 3 x2)/5; invariant y + w/d + (1/d) Σ n_i x_i.
        let g = AffineComponent::linear(vec![rat(2, 5), rat(-3, 5)]);
        let compiled = crnric_core::compiler::compile_linear(&g);
        let crn = &compiled.crc.crn;
        let idx = |n: &str| crn.species_index(n).unwrap();
        let mut x0 = State::zero(crn);
        x0.0[idx("X1+")] = xp;
        x0.0[idx("X1-")] = xm;
        x0.0[idx("X2+")] = yp;
        x0.0[idx("X2-")] = ym;
        let path = prefix_of(crn, &x0, seed, 6);
        let quantity = |st: &State| -> Rat {
            let d = rat_int(5);
            let y = st.get(idx("lin0.Y+")) - st.get(idx("lin0.Y-"));
            let w = st.get(idx("lin0.W+")) - st.get(idx("lin0.W-"));
            let x1 = st.get(idx("X1+")) - st.get(idx("X1-"));
            let x2 = st.get(idx("X2+")) - st.get(idx("X2-"));
            y + w / &d + (rat_int(2) * x1 - rat_int(3) * x2) / d
        };
        let states = path.states(crn).unwrap();
        let q0 = quantity(&states[0]);
        for st in &states {
            prop_assert_eq!(quantity(st), q0.clone());
        }
    }
}

// Keep BTreeMap referenced for the generator helper types.
#[allow(dead_code)]
fn _unused(_: BTreeMap<usize, u64>) {}
