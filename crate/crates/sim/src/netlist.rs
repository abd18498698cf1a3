//! Netlist text format.
//!
//! One element per line, whitespace separated, `#` starts a comment, node 0 is
//! ground:
//!
//! ```text
//! R name n+ n- resistance
//! C name n+ n- capacitance
//! L name n+ n- inductance
//! V name n+ n- DC v | SIN amp freq [phase]
//! I name n+ n- DC i | SIN amp freq [phase]
//! M name n+ n- device=<path>
//! IC node <k> <value>
//! IC branch <name> <value>
//! ```
//!
//! `IC` lines set entries of the initial network state; everything else starts
//! at zero.

use std::fmt::Write as _;

use memristor_core::network::{Element, ElementKind, InitialCondition, Netlist};
use memristor_core::waveform::Waveform;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Token {
                    text: &code[s..i],
                    column: code[..s].chars().count() + 1,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &code[s..],
            column: code[..s].chars().count() + 1,
        });
    }
    out
}

/// `DC v`, `SIN amp freq [phase]` or a bare number (DC).
pub fn parse_waveform_tokens(tokens: &[&str]) -> Result<Waveform, String> {
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("expected a number, got '{t}'"));
    match tokens {
        [v] => num(v).map(Waveform::Dc),
        [kind, v] if kind.eq_ignore_ascii_case("DC") => num(v).map(Waveform::Dc),
        [kind, amp, freq, rest @ ..] if kind.eq_ignore_ascii_case("SIN") && rest.len() <= 1 => Ok(Waveform::Sin {
            amplitude: num(amp)?,
            frequency: num(freq)?,
            phase: rest.first().map(|p| num(p)).transpose()?.unwrap_or(0.0),
        }),
        [] => Err("missing waveform".into()),
        _ => Err(format!("expected 'DC v' or 'SIN amp freq [phase]', got '{}'", tokens.join(" "))),
    }
}

/// Command-line drive spec: `SIN:amp,freq[,phase]` or `DC:v`.
pub fn parse_drive(spec: &str) -> Result<Waveform, String> {
    let (kind, args) = spec.split_once(':').ok_or_else(|| format!("expected KIND:args, got '{spec}'"))?;
    let mut tokens = vec![kind];
    tokens.extend(args.split(',').map(str::trim));
    parse_waveform_tokens(&tokens)
}

pub fn parse_netlist(text: &str) -> Result<Netlist, ParseError> {
    let mut netlist = Netlist::default();
    for (idx, line) in text.lines().enumerate() {
        let tokens = tokenize(line);
        let Some(first) = tokens.first() else { continue };
        let err = |column: usize, message: String| ParseError {
            line: idx + 1,
            column,
            message,
        };
        let end_column = tokens.last().map_or(1, |t| t.column + t.text.chars().count());
        let arity = |want: &str| err(end_column, format!("expected '{want}'"));
        let number = |t: &Token| t.text.parse::<f64>().map_err(|_| err(t.column, format!("expected a number, got '{}'", t.text)));
        let node = |t: &Token| t.text.parse::<usize>().map_err(|_| err(t.column, format!("expected a node index, got '{}'", t.text)));

        let kind = first.text.to_ascii_uppercase();
        if kind == "IC" {
            let ic = match tokens.get(1).map(|t| t.text.to_ascii_lowercase()) {
                Some(k) if k == "node" && tokens.len() == 4 => InitialCondition::NodePotential {
                    node: node(&tokens[2])?,
                    value: number(&tokens[3])?,
                },
                Some(k) if k == "branch" && tokens.len() == 4 => InitialCondition::BranchCurrent {
                    name: tokens[2].text.to_string(),
                    value: number(&tokens[3])?,
                },
                _ => return Err(arity("IC node <k> <value> | IC branch <name> <value>")),
            };
            netlist.initial.push(ic);
            continue;
        }
        if !matches!(kind.as_str(), "R" | "C" | "L" | "V" | "I" | "M") {
            return Err(err(first.column, format!("unknown element kind '{}'", first.text)));
        }
        if tokens.len() < 5 {
            return Err(arity(&format!("{kind} name n+ n- value")));
        }
        let name = tokens[1].text.to_string();
        if netlist.elements.iter().any(|e| e.name == name) {
            return Err(err(tokens[1].column, format!("duplicate element name '{name}'")));
        }
        let (pos, neg) = (node(&tokens[2])?, node(&tokens[3])?);
        let rest = &tokens[4..];
        let value = |r: &[Token]| -> Result<f64, ParseError> {
            match r {
                [t] => number(t),
                _ => Err(arity(&format!("{kind} name n+ n- value"))),
            }
        };
        let ek = match kind.as_str() {
            "R" => ElementKind::Resistor(value(rest)?),
            "C" => ElementKind::Capacitor(value(rest)?),
            "L" => ElementKind::Inductor(value(rest)?),
            "V" | "I" => {
                let texts: Vec<&str> = rest.iter().map(|t| t.text).collect();
                let w = parse_waveform_tokens(&texts).map_err(|m| err(rest[0].column, m))?;
                if kind == "V" {
                    ElementKind::VoltageSource(w)
                } else {
                    ElementKind::CurrentSource(w)
                }
            }
            _ => match rest {
                [t] if t.text.starts_with("device=") && t.text.len() > 7 => ElementKind::Memristor {
                    device: t.text["device=".len()..].to_string(),
                },
                [t, ..] => return Err(err(t.column, "expected 'device=<path>'".into())),
                [] => unreachable!(),
            },
        };
        netlist.elements.push(Element { name, pos, neg, kind: ek });
    }
    Ok(netlist)
}

fn waveform_text(w: &Waveform) -> String {
    match *w {
        Waveform::Dc(v) => format!("DC {v:?}"),
        Waveform::Sin {
            amplitude,
            frequency,
            phase,
        } => {
            if phase == 0.0 {
                format!("SIN {amplitude:?} {frequency:?}")
            } else {
                format!("SIN {amplitude:?} {frequency:?} {phase:?}")
            }
        }
    }
}

/// Canonical text form; `parse_netlist(&print_netlist(n)) == n`.
pub fn print_netlist(netlist: &Netlist) -> String {
    let mut out = String::new();
    for e in &netlist.elements {
        let value = match &e.kind {
            ElementKind::Resistor(v) | ElementKind::Capacitor(v) | ElementKind::Inductor(v) => format!("{v:?}"),
            ElementKind::VoltageSource(w) | ElementKind::CurrentSource(w) => waveform_text(w),
            ElementKind::Memristor { device } => format!("device={device}"),
        };
        let _ = writeln!(out, "{} {} {} {} {}", e.kind.letter(), e.name, e.pos, e.neg, value);
    }
    for ic in &netlist.initial {
        let _ = match ic {
            InitialCondition::NodePotential { node, value } => writeln!(out, "IC node {node} {value:?}"),
            InitialCondition::BranchCurrent { name, value } => writeln!(out, "IC branch {name} {value:?}"),
        };
    }
    out
}
