//! Count data files.
//!
//! `raw` files hold one non-negative integer per line. `freq` files hold
//! `value,count` pairs, optionally under a header line. Blank lines and `#`
//! comments are ignored in both.

use std::path::Path;

use clap::ValueEnum;
use zeroinfl::CountSample;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    /// `freq` if the first data line contains a comma, else `raw`.
    Auto,
    Raw,
    Freq,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("line {line}: {msg}"))
}

fn parse_count(line: usize, field: &str, what: &str) -> Result<u64, CliError> {
    field
        .trim()
        .parse::<u64>()
        .map_err(|_| bad(line, format!("{what} must be a non-negative integer, got `{}`", field.trim())))
}

pub fn parse_raw(text: &str) -> Result<CountSample, CliError> {
    let mut counts = data_lines(text)
        .map(|(line, l)| parse_count(line, l, "count"))
        .collect::<Result<Vec<_>, _>>()?;
    if counts.is_empty() {
        return Err(CliError::Data("no counts in input".into()));
    }
    counts.sort_unstable();
    CountSample::new(counts).map_err(CliError::from)
}

pub fn parse_freq(text: &str) -> Result<CountSample, CliError> {
    let mut table = Vec::new();
    for (idx, (line, l)) in data_lines(text).enumerate() {
        let (value, count) = l
            .split_once(',')
            .ok_or_else(|| bad(line, "expected `value,count`"))?;
        let is_header = idx == 0 && value.trim().parse::<i64>().is_err() && count.trim().parse::<i64>().is_err();
        if is_header {
            continue;
        }
        if count.contains(',') {
            return Err(bad(line, "expected exactly two columns"));
        }
        let value = parse_count(line, value, "value")?;
        let count = parse_count(line, count, "frequency")?;
        if count == 0 {
            return Err(bad(line, "frequency must be positive"));
        }
        table.push((value, count as usize));
    }
    if table.is_empty() {
        return Err(CliError::Data("no frequencies in input".into()));
    }
    CountSample::from_frequencies(&table).map_err(CliError::from)
}

pub fn parse_dataset(text: &str, format: DataFormat) -> Result<CountSample, CliError> {
    let format = match format {
        DataFormat::Auto => match data_lines(text).next() {
            Some((_, l)) if l.contains(',') => DataFormat::Freq,
            _ => DataFormat::Raw,
        },
        f => f,
    };
    match format {
        DataFormat::Freq => parse_freq(text),
        _ => parse_raw(text),
    }
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<CountSample, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_dataset(&text, format).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}
