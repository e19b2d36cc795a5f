//! Numeric values with unit suffixes, and the list/range syntax used by the
//! command line.
//!
//! A value is a decimal number optionally followed (with or without
//! whitespace) by a suffix. Accepted suffixes depend on the quantity:
//! `s`/`ms` for time, `Hz`/`kHz`/`MHz` for rates and bandwidths, `J`/`mJ` for
//! energy and `m` for distances. A bare number is already SI.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitError {
    #[error("empty value")]
    Empty,
    #[error("`{0}` is not a number")]
    NotANumber(String),
    #[error("unit `{unit}` does not apply to a {quantity}")]
    WrongUnit {
        unit: String,
        quantity: &'static str,
    },
    #[error("range `{0}` must look like from:to:step")]
    BadRange(String),
    #[error("range `{0}` is empty")]
    EmptyRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Time,
    Frequency,
    Energy,
    Length,
    Dimensionless,
}

impl Quantity {
    fn name(self) -> &'static str {
        match self {
            Quantity::Time => "time",
            Quantity::Frequency => "frequency",
            Quantity::Energy => "energy",
            Quantity::Length => "length",
            Quantity::Dimensionless => "dimensionless quantity",
        }
    }

    fn scale(self, unit: &str) -> Option<f64> {
        match (self, unit) {
            (_, "") => Some(1.0),
            (Quantity::Time, "s") => Some(1.0),
            (Quantity::Time, "ms") => Some(1e-3),
            (Quantity::Frequency, "Hz") => Some(1.0),
            (Quantity::Frequency, "kHz") => Some(1e3),
            (Quantity::Frequency, "MHz") => Some(1e6),
            (Quantity::Energy, "J") => Some(1.0),
            (Quantity::Energy, "mJ") => Some(1e-3),
            (Quantity::Length, "m") => Some(1.0),
            _ => None,
        }
    }
}

/// Parse `text` as `quantity`, returning the SI value. Non-finite numbers are
/// rejected.
pub fn parse_quantity(text: &str, quantity: Quantity) -> Result<f64, UnitError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(UnitError::Empty);
    }
    let split = text
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_alphabetic())
        .last()
        .map_or(text.len(), |(i, _)| i);
    let (number, unit) = text.split_at(split);
    let number = number.trim_end();
    let value: f64 = number
        .parse()
        .map_err(|_| UnitError::NotANumber(text.to_owned()))?;
    if !value.is_finite() {
        return Err(UnitError::NotANumber(text.to_owned()));
    }
    let scale = quantity.scale(unit).ok_or_else(|| UnitError::WrongUnit {
        unit: unit.to_owned(),
        quantity: quantity.name(),
    })?;
    if scale == 1.0 {
        Ok(value)
    } else {
        Ok(value * scale)
    }
}

/// Comma-separated list of values, e.g. `0.2,0.4,1.0`.
pub fn parse_list(text: &str, quantity: Quantity) -> Result<Vec<f64>, UnitError> {
    text.split(',')
        .map(|p| parse_quantity(p, quantity))
        .collect()
}

/// Comma-separated list of counts, e.g. `20,40,60`.
pub fn parse_count_list(text: &str) -> Result<Vec<usize>, UnitError> {
    text.split(',')
        .map(|p| {
            let p = p.trim();
            if p.is_empty() {
                return Err(UnitError::Empty);
            }
            p.parse().map_err(|_| UnitError::NotANumber(p.to_owned()))
        })
        .collect()
}

/// Inclusive grid `from:to:step`, e.g. `1ms:20ms:1ms`.
///
/// Points are `from + j * step` for every `j` that stays at or below `to`
/// (with a relative slack of `1e-9` steps so the nominal end is kept).
pub fn parse_range(text: &str, quantity: Quantity) -> Result<Vec<f64>, UnitError> {
    let parts: Vec<&str> = text.split(':').collect();
    let [from, to, step] = parts.as_slice() else {
        return Err(UnitError::BadRange(text.to_owned()));
    };
    let from = parse_quantity(from, quantity)?;
    let to = parse_quantity(to, quantity)?;
    let step = parse_quantity(step, quantity)?;
    if !(step > 0.0) || to < from {
        return Err(UnitError::EmptyRange(text.to_owned()));
    }
    Ok(grid(from, to, step))
}

/// `from + j * step` for `j = 0..` while the point does not exceed `to`.
pub fn grid(from: f64, to: f64, step: f64) -> Vec<f64> {
    let count = ((to - from) / step + 1e-9).floor();
    if !(count >= 0.0) || count > 1e7 {
        return Vec::new();
    }
    (0..=count as usize)
        .map(|j| from + j as f64 * step)
        .collect()
}
