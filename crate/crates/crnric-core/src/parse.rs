//! Text formats: CRN files, state files, witness path files.
//!
//! All rationals are printed as `p/q` (the `/q` omitted when the denominator
//! is 1), never as floats, so round-trips are exact.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::crn::{Crc, Crn, FluxVector, Output, Reaction, State};
use crate::reach::Path;
use crate::rat::{format_rat, parse_rat, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate species `{name}`")]
    DuplicateSpecies { line: usize, name: String },
    #[error("line {line}: reaction has an empty reactant side")]
    EmptyReactants { line: usize },
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn is_species_name(tok: &str) -> bool {
    let core = tok.strip_suffix(['+', '-']).unwrap_or(tok);
    let mut chars = core.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// One side of a reaction: `<term> (+ <term>)*` where a term is an optional
/// positive integer coefficient followed by a species name. Terms are
/// whitespace-tokenized with standalone `+` separators.
fn parse_side(
    tokens: &[&str],
    line: usize,
    intern: &mut dyn FnMut(&str) -> usize,
) -> Result<BTreeMap<usize, u64>, ParseError> {
    let mut side: BTreeMap<usize, u64> = BTreeMap::new();
    if tokens.is_empty() {
        return Ok(side);
    }
    let terms = tokens.split(|t| *t == "+");
    for term in terms {
        match term {
            [name] if is_species_name(name) => {
                *side.entry(intern(name)).or_insert(0) += 1;
            }
            [count, name] if is_species_name(name) => {
                let n: u64 = count
                    .parse()
                    .map_err(|_| syntax(line, format!("invalid coefficient `{count}`")))?;
                if n == 0 {
                    return Err(syntax(line, "zero coefficient"));
                }
                *side.entry(intern(name)).or_insert(0) += n;
            }
            [] => return Err(syntax(line, "empty term")),
            other => {
                return Err(syntax(
                    line,
                    format!("cannot parse term `{}`", other.join(" ")),
                ))
            }
        }
    }
    Ok(side)
}

/// A parsed CRN file: the network plus the optional CRC headers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrnFile {
    pub crn: Crn,
    pub inputs: Vec<String>,
    pub output: Option<(String, Option<String>)>,
    pub context: Vec<(String, Rat)>,
}

impl CrnFile {
    /// Resolves the headers into a [`Crc`]; requires an `output:` header.
    pub fn to_crc(&self) -> Result<Crc, ParseError> {
        let lookup = |name: &str| -> Result<usize, ParseError> {
            self.crn
                .species_index(name)
                .ok_or_else(|| syntax(0, format!("unknown species `{name}` in header")))
        };
        let inputs = self
            .inputs
            .iter()
            .map(|s| lookup(s))
            .collect::<Result<Vec<_>, _>>()?;
        let output = match &self.output {
            Some((y, None)) => Output::Direct(lookup(y)?),
            Some((p, Some(m))) => Output::DualRail {
                plus: lookup(p)?,
                minus: lookup(m)?,
            },
            None => return Err(syntax(0, "missing `output:` header")),
        };
        let context = self
            .context
            .iter()
            .map(|(s, v)| Ok((lookup(s)?, v.clone())))
            .collect::<Result<Vec<_>, ParseError>>()?;
        Crc::new(self.crn.clone(), inputs, output, context)
            .map_err(|e| syntax(0, e.to_string()))
    }
}

pub fn parse_crn(text: &str) -> Result<CrnFile, ParseError> {
    let mut species: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut reactions: Vec<Reaction> = Vec::new();
    let mut inputs = Vec::new();
    let mut output = None;
    let mut context = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let mut intern = |name: &str| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                species.push(name.to_string());
                species.len() - 1
            })
        };
        if let Some(rest) = stripped.strip_prefix("inputs:") {
            for tok in rest.split_whitespace() {
                if !is_species_name(tok) {
                    return Err(syntax(line, format!("invalid species `{tok}`")));
                }
                intern(tok);
                inputs.push(tok.to_string());
            }
        } else if let Some(rest) = stripped.strip_prefix("output:") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            output = Some(match toks.as_slice() {
                [y] if is_species_name(y) => {
                    intern(y);
                    (y.to_string(), None)
                }
                [p, m] if is_species_name(p) && is_species_name(m) => {
                    intern(p);
                    intern(m);
                    (p.to_string(), Some(m.to_string()))
                }
                _ => return Err(syntax(line, "expected `output: Y` or `output: Y+ Y-`")),
            });
        } else if let Some(rest) = stripped.strip_prefix("context:") {
            for tok in rest.split_whitespace() {
                let (name, value) = tok
                    .split_once('=')
                    .ok_or_else(|| syntax(line, format!("expected `Name=p/q`, got `{tok}`")))?;
                if !is_species_name(name) {
                    return Err(syntax(line, format!("invalid species `{name}`")));
                }
                let v = parse_rat(value).map_err(|e| syntax(line, e))?;
                if !v.is_positive() {
                    return Err(syntax(line, "context concentrations must be positive"));
                }
                intern(name);
                context.push((name.to_string(), v));
            }
        } else if stripped.contains("->") {
            let (lhs, rhs) = stripped.split_once("->").unwrap();
            let ltoks: Vec<&str> = lhs.split_whitespace().collect();
            let rtoks: Vec<&str> = rhs.split_whitespace().collect();
            let reactants = parse_side(&ltoks, line, &mut intern)?;
            let products = parse_side(&rtoks, line, &mut intern)?;
            if reactants.is_empty() {
                return Err(ParseError::EmptyReactants { line });
            }
            reactions.push(Reaction::new(reactants, products));
        } else {
            return Err(syntax(line, format!("unrecognized line `{stripped}`")));
        }
    }

    let crn = Crn::new(species, reactions).map_err(|e| syntax(0, e.to_string()))?;
    Ok(CrnFile {
        crn,
        inputs,
        output,
        context,
    })
}

fn format_side(crn: &Crn, side: &BTreeMap<usize, u64>) -> String {
    side.iter()
        .map(|(&s, &n)| {
            if n == 1 {
                crn.species_name(s).to_string()
            } else {
                format!("{n} {}", crn.species_name(s))
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

pub fn serialize_crn(file: &CrnFile) -> String {
    let mut out = String::new();
    if !file.inputs.is_empty() {
        out.push_str(&format!("inputs: {}\n", file.inputs.join(" ")));
    }
    match &file.output {
        Some((y, None)) => out.push_str(&format!("output: {y}\n")),
        Some((p, Some(m))) => out.push_str(&format!("output: {p} {m}\n")),
        None => {}
    }
    if !file.context.is_empty() {
        let parts: Vec<String> = file
            .context
            .iter()
            .map(|(s, v)| format!("{s}={}", format_rat(v)))
            .collect();
        out.push_str(&format!("context: {}\n", parts.join(" ")));
    }
    for r in file.crn.reactions() {
        out.push_str(&format!(
            "{} -> {}\n",
            format_side(&file.crn, &r.reactants),
            format_side(&file.crn, &r.products)
        ));
    }
    out
}

/// State file: one `SpeciesName = p/q` line per nonzero species.
pub fn parse_state(crn: &Crn, text: &str) -> Result<State, ParseError> {
    let mut state = State::zero(crn);
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (name, value) = stripped
            .split_once('=')
            .ok_or_else(|| syntax(line, "expected `Species = p/q`"))?;
        let name = name.trim();
        let id = crn
            .species_index(name)
            .ok_or_else(|| syntax(line, format!("unknown species `{name}`")))?;
        let v = parse_rat(value).map_err(|e| syntax(line, e))?;
        if v.is_negative() {
            return Err(syntax(line, "concentrations must be nonnegative"));
        }
        state.0[id] = v;
    }
    Ok(state)
}

pub fn serialize_state(crn: &Crn, state: &State) -> String {
    let mut out = String::new();
    for (i, v) in state.0.iter().enumerate() {
        if !v.is_zero() {
            out.push_str(&format!("{} = {}\n", crn.species_name(i), format_rat(v)));
        }
    }
    out
}

/// Witness path file: an `initial:` block of state lines, then one
/// `segment:` block per flux vector with 1-based `reaction <j> = p/q` lines.
pub fn parse_path(crn: &Crn, text: &str) -> Result<Path, ParseError> {
    enum Mode {
        Preamble,
        Initial,
        Segment,
    }
    let mut mode = Mode::Preamble;
    let mut x0 = State::zero(crn);
    let mut segments: Vec<FluxVector> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if stripped == "initial:" {
            mode = Mode::Initial;
            continue;
        }
        if stripped == "segment:" {
            segments.push(FluxVector::zero(crn));
            mode = Mode::Segment;
            continue;
        }
        match mode {
            Mode::Preamble => return Err(syntax(line, "expected `initial:`")),
            Mode::Initial => {
                let (name, value) = stripped
                    .split_once('=')
                    .ok_or_else(|| syntax(line, "expected `Species = p/q`"))?;
                let name = name.trim();
                let id = crn
                    .species_index(name)
                    .ok_or_else(|| syntax(line, format!("unknown species `{name}`")))?;
                x0.0[id] = parse_rat(value).map_err(|e| syntax(line, e))?;
            }
            Mode::Segment => {
                let rest = stripped
                    .strip_prefix("reaction")
                    .ok_or_else(|| syntax(line, "expected `reaction <j> = p/q`"))?;
                let (j, value) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax(line, "expected `reaction <j> = p/q`"))?;
                let j: usize = j
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, "invalid reaction index"))?;
                if j == 0 || j > crn.num_reactions() {
                    return Err(syntax(line, format!("reaction index {j} out of range")));
                }
                let v = parse_rat(value).map_err(|e| syntax(line, e))?;
                if v.is_negative() {
                    return Err(syntax(line, "fluxes must be nonnegative"));
                }
                segments.last_mut().unwrap().0[j - 1] = v;
            }
        }
    }
    Ok(Path { x0, segments })
}

pub fn serialize_path(crn: &Crn, path: &Path) -> String {
    let mut out = String::from("initial:\n");
    for (i, v) in path.x0.0.iter().enumerate() {
        if !v.is_zero() {
            out.push_str(&format!("  {} = {}\n", crn.species_name(i), format_rat(v)));
        }
    }
    for seg in &path.segments {
        out.push_str("segment:\n");
        for (j, v) in seg.0.iter().enumerate() {
            if !v.is_zero() {
                out.push_str(&format!("  reaction {} = {}\n", j + 1, format_rat(v)));
            }
        }
    }
    out
}

#[allow(unused)]
fn one() -> Rat {
    Rat::one()
}
