//! Mass-action dynamics: ODE derivation, adaptive Runge–Kutta simulation
//! with flux-integral accumulators, convergence checking, and extraction of
//! exact reachability witnesses from float trajectories.

use thiserror::Error;

use crate::crn::{Crc, Crn, ReactionId, SpeciesId, State};
use crate::rat::{rat_from_f64, rat_to_f64, Rat};
use crate::reach::{witness_from_total_flux, Path, ReachError};

#[derive(Debug, Error, PartialEq)]
pub enum DynError {
    #[error("concentration exceeded the blow-up bound at t = {time}")]
    BlowUp { time: f64 },
    #[error("rate constants must be positive")]
    NonPositiveRate,
    #[error("trajectory did not converge to a static equilibrium")]
    NotConverged,
    #[error("converged output {0} differs from the expected value")]
    WrongOutput(f64),
}

/// A CRN with one positive mass-action rate constant per reaction.
#[derive(Debug, Clone)]
pub struct RatedCrn {
    pub crn: Crn,
    pub rates: Vec<f64>,
}

impl RatedCrn {
    pub fn new(crn: Crn, rates: Vec<f64>) -> Result<Self, DynError> {
        if rates.len() != crn.num_reactions() || rates.iter().any(|&k| !(k > 0.0)) {
            return Err(DynError::NonPositiveRate);
        }
        Ok(RatedCrn { crn, rates })
    }

    pub fn uniform(crn: Crn) -> Self {
        let rates = vec![1.0; crn.num_reactions()];
        RatedCrn { crn, rates }
    }
}

/// One monomial term of a species derivative: `net · k_j · Π conc^count`
/// over the reactants of reaction `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdeTerm {
    pub reaction: ReactionId,
    pub net: i64,
    pub monomial: Vec<(SpeciesId, u64)>,
}

/// The symbolic mass-action ODE right-hand side, one polynomial (term list)
/// per species.
pub fn derive_odes(r: &RatedCrn) -> Vec<Vec<OdeTerm>> {
    (0..r.crn.num_species())
        .map(|i| {
            r.crn
                .reactions()
                .iter()
                .enumerate()
                .filter(|(j, _)| r.crn.stoich(i, *j) != 0)
                .map(|(j, rx)| OdeTerm {
                    reaction: j,
                    net: r.crn.stoich(i, j),
                    monomial: rx.reactants.iter().map(|(&s, &n)| (s, n)).collect(),
                })
                .collect()
        })
        .collect()
}

/// Mass-action reaction rates at a (clipped-nonnegative) concentration
/// vector.
pub fn reaction_rates(r: &RatedCrn, conc: &[f64]) -> Vec<f64> {
    r.crn
        .reactions()
        .iter()
        .zip(&r.rates)
        .map(|(rx, &k)| {
            let mut v = k;
            for (&s, &n) in &rx.reactants {
                v *= conc[s].max(0.0).powi(n as i32);
            }
            v
        })
        .collect()
}

fn derivatives(r: &RatedCrn, conc: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let v = reaction_rates(r, conc);
    let mut dc = vec![0.0; r.crn.num_species()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        for i in 0..r.crn.num_species() {
            let m = r.crn.stoich(i, j);
            if m != 0 {
                dc[i] += m as f64 * vj;
            }
        }
    }
    (dc, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Equilibrium,
    Horizon,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Concentrations per recorded time.
    pub states: Vec<Vec<f64>>,
    /// Cumulative per-reaction flux integrals per recorded time.
    pub fluxes: Vec<Vec<f64>>,
    pub stop: StopReason,
    /// Number of accepted steps on which a (small) negative concentration
    /// was clipped to zero.
    pub clip_events: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least x0")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Derivative max-norm below which (for 3 consecutive accepted steps)
    /// the simulation stops early.
    pub equilibrium_threshold: f64,
    pub blowup_bound: f64,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            horizon: 1e6,
            rtol: 1e-9,
            atol: 1e-12,
            equilibrium_threshold: 1e-10,
            blowup_bound: 1e9,
            max_steps: 2_000_000,
        }
    }
}

// Dormand–Prince 5(4) embedded pair.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive mass-action integration from `x0`, recording states and
/// cumulative flux integrals at every accepted step.
pub fn simulate(r: &RatedCrn, x0: &[f64], opts: &SimOptions) -> Result<Trajectory, DynError> {
    let n = r.crn.num_species();
    let m = r.crn.num_reactions();
    assert_eq!(x0.len(), n);
    assert!(x0.iter().all(|&c| c >= 0.0));
    // Augmented state: concentrations then flux accumulators.
    let dim = n + m;
    let rhs = |y: &[f64]| -> Vec<f64> {
        let (dc, v) = derivatives(r, &y[..n]);
        let mut dy = dc;
        dy.extend(v);
        dy
    };
    let mut y: Vec<f64> = x0.iter().copied().chain(std::iter::repeat_n(0.0, m)).collect();
    let mut t = 0.0;
    let mut h = (opts.horizon / 100.0).min(1e-3).max(1e-9);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        fluxes: vec![vec![0.0; m]],
        stop: StopReason::Horizon,
        clip_events: 0,
    };
    let mut calm_steps = 0usize;
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for _ in 0..opts.max_steps {
        if t >= opts.horizon {
            break;
        }
        h = h.min(opts.horizon - t);
        k.clear();
        k.push(rhs(&y));
        for s in 0..6 {
            let mut ys = y.clone();
            for (ki, &a) in k.iter().zip(&A[s]) {
                if a != 0.0 {
                    for d in 0..dim {
                        ys[d] += h * a * ki[d];
                    }
                }
            }
            k.push(rhs(&ys));
        }
        let mut y5 = y.clone();
        let mut err = 0.0f64;
        for d in 0..dim {
            let mut v5 = 0.0;
            let mut v4 = 0.0;
            for s in 0..7 {
                v5 += B5[s] * k[s][d];
                v4 += B4[s] * k[s][d];
            }
            y5[d] = y[d] + h * v5;
            let scale = opts.atol + opts.rtol * y[d].abs().max(y5[d].abs());
            err = err.max((h * (v5 - v4)).abs() / scale);
        }
        if err <= 1.0 {
            t += h;
            let mut clipped = false;
            for c in y5[..n].iter_mut() {
                if *c < 0.0 {
                    *c = 0.0;
                    clipped = true;
                }
            }
            if clipped {
                traj.clip_events += 1;
            }
            y = y5;
            if y[..n].iter().any(|&c| c > opts.blowup_bound) {
                return Err(DynError::BlowUp { time: t });
            }
            traj.times.push(t);
            traj.states.push(y[..n].to_vec());
            traj.fluxes.push(y[n..].to_vec());
            let (dc, _) = derivatives(r, &y[..n]);
            let dmax = dc.iter().fold(0.0f64, |a, &d| a.max(d.abs()));
            if dmax < opts.equilibrium_threshold {
                calm_steps += 1;
                if calm_steps >= 3 {
                    traj.stop = StopReason::Equilibrium;
                    return Ok(traj);
                }
            } else {
                calm_steps = 0;
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).max(1e-14);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub output: f64,
    pub static_equilibrium: bool,
}

/// Checks that a trajectory ended at (approximately) a static equilibrium
/// whose output value matches `expected` within `tol`.
pub fn check_convergence(
    crc: &Crc,
    traj: &Trajectory,
    expected: &Rat,
    tol: f64,
) -> Result<ConvergenceReport, DynError> {
    let fin = traj.final_state();
    let static_eq = traj.stop == StopReason::Equilibrium
        && crc.crn.reactions().iter().all(|rx| {
            rx.reactants
                .keys()
                .map(|&s| fin[s])
                .fold(f64::INFINITY, f64::min)
                < tol
        });
    if !static_eq {
        return Err(DynError::NotConverged);
    }
    let out = match crc.output {
        crate::crn::Output::Direct(y) => fin[y],
        crate::crn::Output::DualRail { plus, minus } => fin[plus] - fin[minus],
    };
    if (out - rat_to_f64(expected)).abs() > tol {
        return Err(DynError::WrongOutput(out));
    }
    Ok(ConvergenceReport {
        output: out,
        static_equilibrium: static_eq,
    })
}

/// Builds an exact verified path from the exact initial state to a rational
/// state near the trajectory endpoint: rationalizes the trajectory's total
/// flux-integral vector, declaring coordinates within `slack` of zero as
/// exactly zero, and reassembles the witness as a ramp over the flux support
/// plus one residual straight segment.
pub fn trajectory_to_witness(
    crn: &Crn,
    x0: &State,
    traj: &Trajectory,
    slack: f64,
) -> Result<Path, ReachError> {
    if traj.times.len() <= 1 {
        return Ok(Path::empty(x0.clone()));
    }
    let flux = traj.fluxes.last().unwrap();
    let end = traj.states.last().unwrap();
    let tol = rat_from_f64(slack, 1e-18, 1_000_000_000_000);
    witness_from_total_flux(crn, x0, flux, end, slack, &tol)
}
