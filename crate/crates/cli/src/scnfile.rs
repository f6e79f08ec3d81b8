//! The `.scn` scenario file format: a line-oriented, human-editable text
//! format with an explicit schema version.
//!
//! Grammar (one `key value...` statement per line, `#` starts a comment):
//!
//! ```text
//! scn 1
//! family three_cell | mac | interference
//! ```
//!
//! `three_cell`: keys `seed`, `rx`, `tx`, `streams`, `alpha`, optional
//! `powers <cell 1..3> <p1> ... <pn>` lines.
//!
//! `mac`: keys `rx`, `rx-spacing`, `tx-spacing`, one
//! `user <tx> <streams> <tmin> <tmax> <rmin> <rmax> <path-loss>` line per
//! transmitter, optional `powers <user> <p...>` overrides.
//!
//! `interference`: keys `rx`, `rx-spacing`, `tx-spacing`, `streams <n1> <n2>`,
//! two `tx <k 1..2> <antennas> <tmin> <tmax>` lines and four
//! `rxang <q 1..2> <k 1..2> <tmin> <tmax>` lines.
//!
//! Angles accept plain floats or the tokens `pi`, `-pi`, `pi/<d>`,
//! `-pi/<d>`, `<x>pi`.

use std::collections::HashSet;
use std::fmt;

use detequiv::scenario::{
    build_mac_scenario, build_three_cell_sdma, InterferenceParams, MacParams, MacUserParams,
    ScenarioSpec,
};

/// Error with the 1-based line number it was detected on.
#[derive(Debug, Clone, PartialEq)]
pub struct FileError {
    pub line: usize,
    pub message: String,
    /// Parse errors are malformed syntax; validation errors are well-formed
    /// statements violating a model constraint.
    pub is_validation: bool,
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.is_validation {
            "validation"
        } else {
            "parse"
        };
        write!(f, "line {}: {} error: {}", self.line, kind, self.message)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> FileError {
    FileError {
        line,
        message: message.into(),
        is_validation: false,
    }
}

fn valid_err(line: usize, message: impl Into<String>) -> FileError {
    FileError {
        line,
        message: message.into(),
        is_validation: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeCellFile {
    pub seed: u64,
    pub rx: usize,
    pub tx: usize,
    pub streams: usize,
    pub alpha: f64,
    /// Per-cell power override (1-based cell index in the file).
    pub powers: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacUserLine {
    pub tx: usize,
    pub streams: usize,
    pub theta_tx: (f64, f64),
    pub theta_rx: (f64, f64),
    pub path_loss: f64,
    pub powers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacFile {
    pub rx: usize,
    pub rx_spacing: f64,
    pub tx_spacing: f64,
    pub users: Vec<MacUserLine>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceFile {
    pub rx: usize,
    pub rx_spacing: f64,
    pub tx_spacing: f64,
    pub tx_antennas: [usize; 2],
    pub theta_tx: [(f64, f64); 2],
    pub theta_rx: [[(f64, f64); 2]; 2],
    pub streams: (usize, usize),
}

/// A parsed and validated scenario description.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioFile {
    ThreeCell(ThreeCellFile),
    Mac(MacFile),
    Interference(InterferenceFile),
}

/// What a scenario file builds into.
pub enum BuiltScenario {
    /// One system instance (three-cell, multiple-access).
    Single(ScenarioSpec<f64>),
    /// The interference channel: parameters plus the default allocation.
    Interference {
        params: InterferenceParams<f64>,
        streams: (usize, usize),
    },
}

struct Statement<'a> {
    line: usize,
    key: &'a str,
    args: Vec<&'a str>,
}

fn tokenize(text: &str) -> Vec<Statement<'_>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let key = parts.next().unwrap();
        out.push(Statement {
            line: idx + 1,
            key,
            args: parts.collect(),
        });
    }
    out
}

fn parse_angle(tok: &str, line: usize) -> Result<f64, FileError> {
    let (sign, rest) = match tok.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, tok),
    };
    if let Some(den) = rest.strip_prefix("pi/") {
        let d: f64 = den
            .parse()
            .map_err(|_| parse_err(line, format!("bad angle denominator '{den}'")))?;
        if d == 0.0 {
            return Err(parse_err(line, "angle denominator is zero"));
        }
        return Ok(sign * std::f64::consts::PI / d);
    }
    if rest == "pi" {
        return Ok(sign * std::f64::consts::PI);
    }
    if let Some(mult) = rest.strip_suffix("pi") {
        let m: f64 = mult
            .parse()
            .map_err(|_| parse_err(line, format!("bad angle multiplier '{mult}'")))?;
        return Ok(sign * m * std::f64::consts::PI);
    }
    rest.parse::<f64>()
        .map(|v| sign * v)
        .map_err(|_| parse_err(line, format!("bad angle '{tok}'")))
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, FileError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{tok}'")))
}

fn expect_args(st: &Statement<'_>, n: usize) -> Result<(), FileError> {
    if st.args.len() != n {
        return Err(parse_err(
            st.line,
            format!("'{}' takes {n} argument(s), got {}", st.key, st.args.len()),
        ));
    }
    Ok(())
}

impl ScenarioFile {
    /// Parses and validates scenario text; errors carry the offending line.
    pub fn parse(text: &str) -> Result<Self, FileError> {
        let statements = tokenize(text);
        let mut iter = statements.iter();

        let version = iter
            .next()
            .ok_or_else(|| parse_err(1, "empty scenario file"))?;
        if version.key != "scn" {
            return Err(parse_err(
                version.line,
                "file must start with 'scn <version>'",
            ));
        }
        expect_args(version, 1)?;
        let v: u32 = parse_num(version.args[0], version.line, "schema version")?;
        if v != 1 {
            return Err(valid_err(
                version.line,
                format!("unsupported schema version {v}"),
            ));
        }

        let family = iter
            .next()
            .ok_or_else(|| parse_err(version.line, "missing 'family'"))?;
        if family.key != "family" {
            return Err(parse_err(
                family.line,
                "second statement must be 'family <name>'",
            ));
        }
        expect_args(family, 1)?;
        let rest: Vec<&Statement<'_>> = iter.collect();
        match family.args[0] {
            "three_cell" => Self::parse_three_cell(&rest, family.line),
            "mac" => Self::parse_mac(&rest, family.line),
            "interference" => Self::parse_interference(&rest, family.line),
            other => Err(valid_err(family.line, format!("unknown family '{other}'"))),
        }
    }

    fn parse_three_cell(
        statements: &[&Statement<'_>],
        family_line: usize,
    ) -> Result<Self, FileError> {
        let mut seed = None;
        let mut rx: Option<(usize, usize)> = None;
        let mut tx: Option<(usize, usize)> = None;
        let mut streams: Option<(usize, usize)> = None;
        let mut alpha = None;
        let mut powers: Vec<Option<(usize, Vec<f64>)>> = vec![None, None, None];
        let mut seen = HashSet::new();
        for st in statements {
            match st.key {
                "seed" | "rx" | "tx" | "streams" | "alpha" => {
                    if !seen.insert(st.key.to_string()) {
                        return Err(parse_err(st.line, format!("duplicate key '{}'", st.key)));
                    }
                    expect_args(st, 1)?;
                    match st.key {
                        "seed" => seed = Some(parse_num::<u64>(st.args[0], st.line, "seed")?),
                        "rx" => rx = Some((parse_num(st.args[0], st.line, "rx count")?, st.line)),
                        "tx" => tx = Some((parse_num(st.args[0], st.line, "tx count")?, st.line)),
                        "streams" => {
                            streams = Some((parse_num(st.args[0], st.line, "streams")?, st.line))
                        }
                        _ => {
                            alpha = Some((parse_num::<f64>(st.args[0], st.line, "alpha")?, st.line))
                        }
                    }
                }
                "powers" => {
                    if st.args.len() < 2 {
                        return Err(parse_err(st.line, "'powers' needs a cell index and values"));
                    }
                    let cell: usize = parse_num(st.args[0], st.line, "cell index")?;
                    if !(1..=3).contains(&cell) {
                        return Err(valid_err(
                            st.line,
                            format!("cell index {cell} out of 1..=3"),
                        ));
                    }
                    if powers[cell - 1].is_some() {
                        return Err(parse_err(
                            st.line,
                            format!("duplicate powers for cell {cell}"),
                        ));
                    }
                    let vals = st.args[1..]
                        .iter()
                        .map(|t| parse_num::<f64>(t, st.line, "power"))
                        .collect::<Result<Vec<_>, _>>()?;
                    powers[cell - 1] = Some((st.line, vals));
                }
                other => return Err(parse_err(st.line, format!("unknown key '{other}'"))),
            }
        }
        let seed = seed.ok_or_else(|| valid_err(family_line, "missing 'seed'"))?;
        let (rx, rx_line) = rx.ok_or_else(|| valid_err(family_line, "missing 'rx'"))?;
        let (tx, tx_line) = tx.ok_or_else(|| valid_err(family_line, "missing 'tx'"))?;
        let (streams, streams_line) =
            streams.ok_or_else(|| valid_err(family_line, "missing 'streams'"))?;
        let (alpha, alpha_line) = alpha.ok_or_else(|| valid_err(family_line, "missing 'alpha'"))?;

        if rx == 0 {
            return Err(valid_err(rx_line, "rx must be positive"));
        }
        if tx == 0 {
            return Err(valid_err(tx_line, "tx must be positive"));
        }
        if streams == 0 || streams > tx {
            return Err(valid_err(
                streams_line,
                format!("streams must lie in 1..={tx}, got {streams}"),
            ));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(valid_err(
                alpha_line,
                format!("alpha must lie in [0, 1], got {alpha}"),
            ));
        }
        let mut power_out = Vec::new();
        for entry in powers.into_iter() {
            match entry {
                None => power_out.push(None),
                Some((line, vals)) => {
                    validate_power_vector(&vals, streams, tx, line)?;
                    power_out.push(Some(vals));
                }
            }
        }
        Ok(ScenarioFile::ThreeCell(ThreeCellFile {
            seed,
            rx,
            tx,
            streams,
            alpha,
            powers: power_out,
        }))
    }

    fn parse_mac(statements: &[&Statement<'_>], family_line: usize) -> Result<Self, FileError> {
        let mut rx = None;
        let mut rx_spacing = None;
        let mut tx_spacing = None;
        let mut users: Vec<(usize, MacUserLine)> = Vec::new();
        let mut power_lines: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        let mut seen = HashSet::new();
        for st in statements {
            match st.key {
                "rx" | "rx-spacing" | "tx-spacing" => {
                    if !seen.insert(st.key.to_string()) {
                        return Err(parse_err(st.line, format!("duplicate key '{}'", st.key)));
                    }
                    expect_args(st, 1)?;
                    match st.key {
                        "rx" => rx = Some(parse_num::<usize>(st.args[0], st.line, "rx count")?),
                        "rx-spacing" => {
                            rx_spacing = Some(parse_num::<f64>(st.args[0], st.line, "spacing")?)
                        }
                        _ => tx_spacing = Some(parse_num::<f64>(st.args[0], st.line, "spacing")?),
                    }
                }
                "user" => {
                    expect_args(st, 7)?;
                    let tx: usize = parse_num(st.args[0], st.line, "tx count")?;
                    let streams: usize = parse_num(st.args[1], st.line, "streams")?;
                    let theta_tx = (
                        parse_angle(st.args[2], st.line)?,
                        parse_angle(st.args[3], st.line)?,
                    );
                    let theta_rx = (
                        parse_angle(st.args[4], st.line)?,
                        parse_angle(st.args[5], st.line)?,
                    );
                    let path_loss: f64 = parse_num(st.args[6], st.line, "path loss")?;
                    if tx == 0 || streams == 0 || streams > tx {
                        return Err(valid_err(
                            st.line,
                            format!("streams must lie in 1..={tx}, got {streams}"),
                        ));
                    }
                    if theta_tx.1 <= theta_tx.0 || theta_rx.1 <= theta_rx.0 {
                        return Err(valid_err(st.line, "angle sectors must be nonempty"));
                    }
                    if path_loss < 0.0 {
                        return Err(valid_err(st.line, "path loss must be nonnegative"));
                    }
                    users.push((
                        st.line,
                        MacUserLine {
                            tx,
                            streams,
                            theta_tx,
                            theta_rx,
                            path_loss,
                            powers: None,
                        },
                    ));
                }
                "powers" => {
                    if st.args.len() < 2 {
                        return Err(parse_err(st.line, "'powers' needs a user index and values"));
                    }
                    let user: usize = parse_num(st.args[0], st.line, "user index")?;
                    let vals = st.args[1..]
                        .iter()
                        .map(|t| parse_num::<f64>(t, st.line, "power"))
                        .collect::<Result<Vec<_>, _>>()?;
                    power_lines.push((st.line, user, vals));
                }
                other => return Err(parse_err(st.line, format!("unknown key '{other}'"))),
            }
        }
        let rx = rx.ok_or_else(|| valid_err(family_line, "missing 'rx'"))?;
        let rx_spacing =
            rx_spacing.ok_or_else(|| valid_err(family_line, "missing 'rx-spacing'"))?;
        let tx_spacing =
            tx_spacing.ok_or_else(|| valid_err(family_line, "missing 'tx-spacing'"))?;
        if users.is_empty() {
            return Err(valid_err(family_line, "at least one 'user' line required"));
        }
        for (line, user, vals) in power_lines {
            let idx = user
                .checked_sub(1)
                .filter(|i| *i < users.len())
                .ok_or_else(|| valid_err(line, format!("user index {user} out of range")))?;
            if users[idx].1.powers.is_some() {
                return Err(parse_err(line, format!("duplicate powers for user {user}")));
            }
            validate_power_vector(&vals, users[idx].1.streams, users[idx].1.tx, line)?;
            users[idx].1.powers = Some(vals);
        }
        Ok(ScenarioFile::Mac(MacFile {
            rx,
            rx_spacing,
            tx_spacing,
            users: users.into_iter().map(|(_, u)| u).collect(),
        }))
    }

    fn parse_interference(
        statements: &[&Statement<'_>],
        family_line: usize,
    ) -> Result<Self, FileError> {
        let mut rx = None;
        let mut rx_spacing = None;
        let mut tx_spacing = None;
        let mut streams = None;
        let mut tx_lines: [Option<(usize, (f64, f64))>; 2] = [None, None];
        let mut rx_lines: [[Option<(f64, f64)>; 2]; 2] = [[None, None], [None, None]];
        let mut seen = HashSet::new();
        for st in statements {
            match st.key {
                "rx" | "rx-spacing" | "tx-spacing" => {
                    if !seen.insert(st.key.to_string()) {
                        return Err(parse_err(st.line, format!("duplicate key '{}'", st.key)));
                    }
                    expect_args(st, 1)?;
                    match st.key {
                        "rx" => rx = Some(parse_num::<usize>(st.args[0], st.line, "rx count")?),
                        "rx-spacing" => {
                            rx_spacing = Some(parse_num::<f64>(st.args[0], st.line, "spacing")?)
                        }
                        _ => tx_spacing = Some(parse_num::<f64>(st.args[0], st.line, "spacing")?),
                    }
                }
                "streams" => {
                    if !seen.insert("streams".into()) {
                        return Err(parse_err(st.line, "duplicate key 'streams'"));
                    }
                    expect_args(st, 2)?;
                    streams = Some((
                        parse_num::<usize>(st.args[0], st.line, "streams")?,
                        parse_num::<usize>(st.args[1], st.line, "streams")?,
                        st.line,
                    ));
                }
                "tx" => {
                    expect_args(st, 4)?;
                    let k: usize = parse_num(st.args[0], st.line, "transmitter index")?;
                    if !(1..=2).contains(&k) {
                        return Err(valid_err(
                            st.line,
                            format!("transmitter index {k} out of 1..=2"),
                        ));
                    }
                    if tx_lines[k - 1].is_some() {
                        return Err(parse_err(st.line, format!("duplicate tx line for {k}")));
                    }
                    let antennas: usize = parse_num(st.args[1], st.line, "antenna count")?;
                    let sector = (
                        parse_angle(st.args[2], st.line)?,
                        parse_angle(st.args[3], st.line)?,
                    );
                    if sector.1 <= sector.0 {
                        return Err(valid_err(st.line, "angle sector must be nonempty"));
                    }
                    tx_lines[k - 1] = Some((antennas, sector));
                }
                "rxang" => {
                    expect_args(st, 4)?;
                    let q: usize = parse_num(st.args[0], st.line, "receiver index")?;
                    let k: usize = parse_num(st.args[1], st.line, "transmitter index")?;
                    if !(1..=2).contains(&q) || !(1..=2).contains(&k) {
                        return Err(valid_err(
                            st.line,
                            "receiver/transmitter indices must be 1 or 2",
                        ));
                    }
                    if rx_lines[q - 1][k - 1].is_some() {
                        return Err(parse_err(
                            st.line,
                            format!("duplicate rxang for ({q}, {k})"),
                        ));
                    }
                    let sector = (
                        parse_angle(st.args[2], st.line)?,
                        parse_angle(st.args[3], st.line)?,
                    );
                    if sector.1 <= sector.0 {
                        return Err(valid_err(st.line, "angle sector must be nonempty"));
                    }
                    rx_lines[q - 1][k - 1] = Some(sector);
                }
                other => return Err(parse_err(st.line, format!("unknown key '{other}'"))),
            }
        }
        let rx = rx.ok_or_else(|| valid_err(family_line, "missing 'rx'"))?;
        let rx_spacing =
            rx_spacing.ok_or_else(|| valid_err(family_line, "missing 'rx-spacing'"))?;
        let tx_spacing =
            tx_spacing.ok_or_else(|| valid_err(family_line, "missing 'tx-spacing'"))?;
        let (n1, n2, streams_line) =
            streams.ok_or_else(|| valid_err(family_line, "missing 'streams'"))?;
        let mut tx_antennas = [0usize; 2];
        let mut theta_tx = [(0.0, 0.0); 2];
        for k in 0..2 {
            let (antennas, sector) = tx_lines[k]
                .ok_or_else(|| valid_err(family_line, format!("missing 'tx {}' line", k + 1)))?;
            tx_antennas[k] = antennas;
            theta_tx[k] = sector;
        }
        let mut theta_rx = [[(0.0, 0.0); 2]; 2];
        for q in 0..2 {
            for k in 0..2 {
                theta_rx[q][k] = rx_lines[q][k].ok_or_else(|| {
                    valid_err(
                        family_line,
                        format!("missing 'rxang {} {}' line", q + 1, k + 1),
                    )
                })?;
            }
        }
        for (k, &n) in [n1, n2].iter().enumerate() {
            if n == 0 || n > tx_antennas[k] {
                return Err(valid_err(
                    streams_line,
                    format!(
                        "streams for transmitter {} must lie in 1..={}",
                        k + 1,
                        tx_antennas[k]
                    ),
                ));
            }
        }
        Ok(ScenarioFile::Interference(InterferenceFile {
            rx,
            rx_spacing,
            tx_spacing,
            tx_antennas,
            theta_tx,
            theta_rx,
            streams: (n1, n2),
        }))
    }

    /// Canonical text form; `parse(emit(x)) == x`.
    pub fn emit(&self) -> String {
        let mut out = String::from("scn 1\n");
        match self {
            ScenarioFile::ThreeCell(f) => {
                out.push_str("family three_cell\n");
                out.push_str(&format!("seed {}\n", f.seed));
                out.push_str(&format!("rx {}\n", f.rx));
                out.push_str(&format!("tx {}\n", f.tx));
                out.push_str(&format!("streams {}\n", f.streams));
                out.push_str(&format!("alpha {}\n", f.alpha));
                for (cell, p) in f.powers.iter().enumerate() {
                    if let Some(p) = p {
                        out.push_str(&format!("powers {} {}\n", cell + 1, join_floats(p)));
                    }
                }
            }
            ScenarioFile::Mac(f) => {
                out.push_str("family mac\n");
                out.push_str(&format!("rx {}\n", f.rx));
                out.push_str(&format!("rx-spacing {}\n", f.rx_spacing));
                out.push_str(&format!("tx-spacing {}\n", f.tx_spacing));
                for u in &f.users {
                    out.push_str(&format!(
                        "user {} {} {} {} {} {} {}\n",
                        u.tx,
                        u.streams,
                        u.theta_tx.0,
                        u.theta_tx.1,
                        u.theta_rx.0,
                        u.theta_rx.1,
                        u.path_loss
                    ));
                }
                for (idx, u) in f.users.iter().enumerate() {
                    if let Some(p) = &u.powers {
                        out.push_str(&format!("powers {} {}\n", idx + 1, join_floats(p)));
                    }
                }
            }
            ScenarioFile::Interference(f) => {
                out.push_str("family interference\n");
                out.push_str(&format!("rx {}\n", f.rx));
                out.push_str(&format!("rx-spacing {}\n", f.rx_spacing));
                out.push_str(&format!("tx-spacing {}\n", f.tx_spacing));
                for k in 0..2 {
                    out.push_str(&format!(
                        "tx {} {} {} {}\n",
                        k + 1,
                        f.tx_antennas[k],
                        f.theta_tx[k].0,
                        f.theta_tx[k].1
                    ));
                }
                for q in 0..2 {
                    for k in 0..2 {
                        out.push_str(&format!(
                            "rxang {} {} {} {}\n",
                            q + 1,
                            k + 1,
                            f.theta_rx[q][k].0,
                            f.theta_rx[q][k].1
                        ));
                    }
                }
                out.push_str(&format!("streams {} {}\n", f.streams.0, f.streams.1));
            }
        }
        out
    }

    /// Instantiates the scenario the file describes.
    pub fn build(&self) -> Result<BuiltScenario, detequiv::Error> {
        match self {
            ScenarioFile::ThreeCell(f) => {
                let mut scenario = build_three_cell_sdma(f.alpha, f.streams, f.rx, f.tx, f.seed)?;
                for (cell, p) in f.powers.iter().enumerate() {
                    if let Some(p) = p {
                        scenario.users[cell].power = p.clone();
                    }
                }
                scenario.validate()?;
                Ok(BuiltScenario::Single(scenario))
            }
            ScenarioFile::Mac(f) => {
                let params = MacParams {
                    rx: f.rx,
                    rx_spacing: f.rx_spacing,
                    users: f
                        .users
                        .iter()
                        .map(|u| MacUserParams {
                            tx: u.tx,
                            streams: u.streams,
                            theta_tx: u.theta_tx,
                            theta_rx: u.theta_rx,
                            tx_spacing: f.tx_spacing,
                            path_loss: u.path_loss,
                        })
                        .collect(),
                };
                let mut scenario = build_mac_scenario(&params)?;
                for (idx, u) in f.users.iter().enumerate() {
                    if let Some(p) = &u.powers {
                        scenario.users[idx].power = p.clone();
                    }
                }
                scenario.validate()?;
                Ok(BuiltScenario::Single(scenario))
            }
            ScenarioFile::Interference(f) => Ok(BuiltScenario::Interference {
                params: InterferenceParams {
                    rx: f.rx,
                    rx_spacing: f.rx_spacing,
                    tx_spacing: f.tx_spacing,
                    tx_antennas: f.tx_antennas,
                    theta_tx: f.theta_tx,
                    theta_rx: f.theta_rx,
                },
                streams: f.streams,
            }),
        }
    }
}

/// Power overrides must match the stream count, stay nonnegative, and be
/// uniform for full-stream users.
fn validate_power_vector(
    vals: &[f64],
    streams: usize,
    tx: usize,
    line: usize,
) -> Result<(), FileError> {
    if vals.len() != streams {
        return Err(valid_err(
            line,
            format!("{} power entries for {streams} streams", vals.len()),
        ));
    }
    if vals.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(valid_err(line, "powers must be finite and nonnegative"));
    }
    if streams == tx && streams > 0 {
        let p0 = vals[0];
        if vals.iter().any(|v| (v - p0).abs() > 1e-12 * p0.max(1.0)) {
            return Err(valid_err(
                line,
                "full-stream users (streams = antennas) require a uniform power loading",
            ));
        }
    }
    Ok(())
}

fn join_floats(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_CELL: &str = "\
# three-cell uplink
scn 1
family three_cell
seed 7
rx 16
tx 8
streams 4
alpha 0.5
";

    #[test]
    fn parses_and_round_trips_three_cell() {
        let f = ScenarioFile::parse(THREE_CELL).unwrap();
        match &f {
            ScenarioFile::ThreeCell(t) => {
                assert_eq!((t.rx, t.tx, t.streams), (16, 8, 4));
                assert_eq!(t.alpha, 0.5);
            }
            _ => panic!("wrong family"),
        }
        let emitted = f.emit();
        let reparsed = ScenarioFile::parse(&emitted).unwrap();
        assert_eq!(f, reparsed);
    }

    #[test]
    fn angle_tokens() {
        assert_eq!(parse_angle("pi", 1).unwrap(), std::f64::consts::PI);
        assert_eq!(
            parse_angle("-pi/4", 1).unwrap(),
            -std::f64::consts::PI / 4.0
        );
        assert_eq!(parse_angle("0", 1).unwrap(), 0.0);
        assert_eq!(parse_angle("2pi", 1).unwrap(), 2.0 * std::f64::consts::PI);
        assert!(
            (parse_angle("1.5707963267948966", 1).unwrap() - std::f64::consts::FRAC_PI_2).abs()
                < 1e-15
        );
        assert!(parse_angle("pie", 1).is_err());
    }

    #[test]
    fn reports_line_numbers() {
        let bad = "scn 1\nfamily three_cell\nseed 1\nrx 16\ntx 8\nstreams 9\nalpha 0.5\n";
        let err = ScenarioFile::parse(bad).unwrap_err();
        assert!(err.is_validation);
        assert!(err.message.contains("streams"));

        let bad_key = "scn 1\nfamily three_cell\nseed 1\nrxx 16\n";
        let err = ScenarioFile::parse(bad_key).unwrap_err();
        assert_eq!(err.line, 4);
        assert!(!err.is_validation);
    }

    #[test]
    fn full_stream_nonuniform_power_rejected() {
        let bad = "scn 1\nfamily three_cell\nseed 1\nrx 16\ntx 8\nstreams 8\nalpha 0.5\npowers 1 1 1 1 1 1 1 1 2\n";
        let err = ScenarioFile::parse(bad).unwrap_err();
        assert_eq!(err.line, 8);
        assert!(err.is_validation);
        assert!(err.message.contains("uniform"));
    }

    #[test]
    fn mac_round_trip_and_build() {
        let text = "scn 1\nfamily mac\nrx 10\nrx-spacing 8\ntx-spacing 4\n\
                    user 10 8 0 pi/2 -pi/4 0 1\n\
                    user 5 4 -pi/4 pi/4 0 pi/3 0.5\n\
                    user 5 4 -pi/2 0 -pi/3 pi/3 0.5\n";
        let f = ScenarioFile::parse(text).unwrap();
        let reparsed = ScenarioFile::parse(&f.emit()).unwrap();
        assert_eq!(f, reparsed);
        match f.build().unwrap() {
            BuiltScenario::Single(s) => {
                assert_eq!(s.rx, 10);
                assert_eq!(s.users.len(), 3);
                assert!((s.users[0].power[0] - 0.125).abs() < 1e-15);
            }
            _ => panic!("expected single scenario"),
        }
    }

    #[test]
    fn interference_round_trip_and_validation() {
        let text = "scn 1\nfamily interference\nrx 10\nrx-spacing 4\ntx-spacing 4\n\
                    tx 1 10 0 pi/2\ntx 2 10 -pi/2 0\n\
                    rxang 1 1 -pi/4 0\nrxang 1 2 0 pi/4\nrxang 2 1 -pi/3 0\nrxang 2 2 0 pi/3\n\
                    streams 10 10\n";
        let f = ScenarioFile::parse(text).unwrap();
        let reparsed = ScenarioFile::parse(&f.emit()).unwrap();
        assert_eq!(f, reparsed);

        let bad = text.replace("streams 10 10", "streams 11 10");
        let err = ScenarioFile::parse(&bad).unwrap_err();
        assert!(err.is_validation);
    }
}
