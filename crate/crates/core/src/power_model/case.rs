//! Reader for the sectioned plain-text case format.
//!
//! ```text
//! version 1
//! [system]
//! base_mva 100
//! frequency 60
//! [buses]
//! # id  p_load  q_load  v_mag  v_ang_rad
//! [branches]
//! # from  to  r  x  b_shunt  [tap]
//! [generators]
//! # bus  h  d  xd_prime  pm  e
//! ```
//!
//! All electrical quantities are per-unit on `base_mva`. Bus voltages are
//! the solved power-flow operating point. Blank lines and `#` comments are
//! ignored.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{DseError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub id: i64,
    pub p_load: f64,
    pub q_load: f64,
    pub v_mag: f64,
    pub v_ang: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    pub b_shunt: f64,
    /// Off-nominal turns ratio on the `from` side.
    pub tap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorRecord {
    pub bus: i64,
    pub h: f64,
    pub d: f64,
    pub xd_prime: f64,
    pub pm: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub base_mva: f64,
    pub frequency: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub generators: Vec<GeneratorRecord>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    System,
    Buses,
    Branches,
    Generators,
}

fn err(line: usize, message: impl Into<String>) -> DseError {
    DseError::CaseFormat {
        line,
        message: message.into(),
    }
}

fn numbers(line: usize, fields: &[&str], min: usize, max: usize) -> Result<Vec<f64>> {
    if fields.len() < min || fields.len() > max {
        return Err(err(
            line,
            format!("expected {min}..={max} fields, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| err(line, format!("`{f}` is not a number")))
        })
        .collect()
}

fn integer(line: usize, v: f64) -> Result<i64> {
    if v.fract() != 0.0 {
        return Err(err(line, format!("`{v}` is not an integer id")));
    }
    Ok(v as i64)
}

impl CaseData {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            err(0, format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut section = Section::Preamble;
        let mut base_mva = None;
        let mut frequency = None;
        let mut version = None;
        let mut buses = Vec::new();
        let mut branches = Vec::new();
        let mut generators = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = match line {
                    "[system]" => Section::System,
                    "[buses]" => Section::Buses,
                    "[branches]" => Section::Branches,
                    "[generators]" => Section::Generators,
                    other => return Err(err(line_no, format!("unknown section {other}"))),
                };
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match section {
                Section::Preamble => match fields.as_slice() {
                    ["version", v] => version = Some(v.to_string()),
                    _ => return Err(err(line_no, "expected `version <n>` before sections")),
                },
                Section::System => {
                    let [key, value] = fields.as_slice() else {
                        return Err(err(line_no, "expected `key value`"));
                    };
                    let v = numbers(line_no, &[value], 1, 1)?[0];
                    match *key {
                        "base_mva" => base_mva = Some(v),
                        "frequency" => frequency = Some(v),
                        other => return Err(err(line_no, format!("unknown system key `{other}`"))),
                    }
                }
                Section::Buses => {
                    let v = numbers(line_no, &fields, 5, 5)?;
                    buses.push(BusRecord {
                        id: integer(line_no, v[0])?,
                        p_load: v[1],
                        q_load: v[2],
                        v_mag: v[3],
                        v_ang: v[4],
                    });
                }
                Section::Branches => {
                    let v = numbers(line_no, &fields, 5, 6)?;
                    let tap = v.get(5).copied().unwrap_or(1.0);
                    if tap <= 0.0 {
                        return Err(err(line_no, "tap ratio must be positive"));
                    }
                    if v[2] == 0.0 && v[3] == 0.0 {
                        return Err(err(line_no, "branch has zero impedance"));
                    }
                    branches.push(BranchRecord {
                        from: integer(line_no, v[0])?,
                        to: integer(line_no, v[1])?,
                        r: v[2],
                        x: v[3],
                        b_shunt: v[4],
                        tap,
                    });
                }
                Section::Generators => {
                    let v = numbers(line_no, &fields, 6, 6)?;
                    let gen = GeneratorRecord {
                        bus: integer(line_no, v[0])?,
                        h: v[1],
                        d: v[2],
                        xd_prime: v[3],
                        pm: v[4],
                        e: v[5],
                    };
                    if gen.h <= 0.0 || gen.e <= 0.0 || gen.xd_prime <= 0.0 || gen.d < 0.0 {
                        return Err(err(
                            line_no,
                            "generator needs h > 0, e > 0, xd_prime > 0 and d >= 0",
                        ));
                    }
                    generators.push(gen);
                }
            }
        }

        match version.as_deref() {
            Some("1") => {}
            Some(v) => return Err(err(0, format!("unsupported case version {v}"))),
            None => return Err(err(0, "missing `version` header")),
        }
        let case = CaseData {
            base_mva: base_mva.ok_or_else(|| err(0, "missing base_mva"))?,
            frequency: frequency.ok_or_else(|| err(0, "missing frequency"))?,
            buses,
            branches,
            generators,
        };
        case.validate()?;
        Ok(case)
    }

    fn validate(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(err(0, "no buses"));
        }
        if self.generators.is_empty() {
            return Err(err(0, "no generators"));
        }
        if self.frequency <= 0.0 {
            return Err(err(0, "frequency must be positive"));
        }
        let index = self.bus_index();
        if index.len() != self.buses.len() {
            return Err(err(0, "duplicate bus id"));
        }
        for br in &self.branches {
            for id in [br.from, br.to] {
                if !index.contains_key(&id) {
                    return Err(err(0, format!("branch references unknown bus {id}")));
                }
            }
        }
        let mut seen = HashMap::new();
        for g in &self.generators {
            if !index.contains_key(&g.bus) {
                return Err(err(0, format!("generator at unknown bus {}", g.bus)));
            }
            if seen.insert(g.bus, ()).is_some() {
                return Err(err(0, format!("two generators at bus {}", g.bus)));
            }
        }
        Ok(())
    }

    /// Bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<i64, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }

    /// Copy of the case with the load at `bus` multiplied by `factor`.
    pub fn with_scaled_load(&self, bus: i64, factor: f64) -> Result<Self> {
        let mut out = self.clone();
        let b = out
            .buses
            .iter_mut()
            .find(|b| b.id == bus)
            .ok_or_else(|| DseError::Scenario(format!("no bus {bus} to scale")))?;
        b.p_load *= factor;
        b.q_load *= factor;
        Ok(out)
    }
}
