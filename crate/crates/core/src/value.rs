//! Port values and value domains.
//!
//! Two domains are supported: the two-valued fault abstraction
//! (`Correct`/`Erroneous`) used for fault-propagation analysis, and bounded
//! integers for interval-style models. Mechanism state (judgment arrays,
//! vote results) uses small integers and tuples regardless of the port
//! domain, so `Value` is a single closed enum.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A single port/variable value.
///
/// `Error` is the designated result of a guarded division by zero; it
/// propagates through arithmetic like an erroneous value and compares equal
/// only to itself, keeping evaluation total.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Correct,
    Erroneous,
    Tuple(Vec<Value>),
    Error,
}

impl Value {
    /// True for values the fault abstraction treats as erroneous.
    pub fn is_erroneous(&self) -> bool {
        match self {
            Value::Erroneous | Value::Error => true,
            Value::Tuple(items) => items.iter().any(Value::is_erroneous),
            Value::Int(_) | Value::Correct => false,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    fn abstract_combine(&self, other: &Value) -> Option<Value> {
        let abstracted = |v: &Value| matches!(v, Value::Correct | Value::Erroneous | Value::Error);
        if abstracted(self) || abstracted(other) {
            if self.is_erroneous() || other.is_erroneous() {
                Some(Value::Erroneous)
            } else {
                Some(Value::Correct)
            }
        } else {
            None
        }
    }

    /// Addition: integer on `Int`s, error propagation once any operand is
    /// abstract.
    pub fn add(&self, other: &Value) -> Value {
        if let Some(v) = self.abstract_combine(other) {
            return v;
        }
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Value::Int(a.wrapping_add(*b)),
            _ => Value::Error,
        }
    }

    pub fn mul(&self, other: &Value) -> Value {
        if let Some(v) = self.abstract_combine(other) {
            return v;
        }
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Value::Int(a.wrapping_mul(*b)),
            _ => Value::Error,
        }
    }

    /// Division is guarded: dividing by zero yields [`Value::Error`].
    pub fn div(&self, other: &Value) -> Value {
        if let Some(v) = self.abstract_combine(other) {
            return v;
        }
        match (self, other) {
            (Value::Int(_), Value::Int(0)) => Value::Error,
            (Value::Int(a), Value::Int(b)) => Value::Int(a.wrapping_div(*b)),
            _ => Value::Error,
        }
    }

    pub fn neg(&self) -> Value {
        match self {
            Value::Int(a) => Value::Int(a.wrapping_neg()),
            Value::Correct => Value::Correct,
            Value::Erroneous | Value::Error => Value::Erroneous,
            Value::Tuple(_) => Value::Error,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Correct => write!(f, "Correct"),
            Value::Erroneous => write!(f, "Erroneous"),
            Value::Tuple(items) => {
                write!(f, "(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, ")")
            }
            Value::Error => write!(f, "Error"),
        }
    }
}

/// Per-port value domain declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueDomain {
    /// Two-valued fault abstraction: every port is Correct or Erroneous.
    FaultAbstraction,
    /// Finite integer range `lo..=hi`.
    BoundedInt { lo: i64, hi: i64 },
}

impl ValueDomain {
    pub fn bounded(lo: i64, hi: i64) -> Result<Self, String> {
        if lo > hi {
            return Err(format!("empty interval [{lo}, {hi}]"));
        }
        Ok(ValueDomain::BoundedInt { lo, hi })
    }

    /// Default initial value for a port of this domain.
    pub fn default_value(&self) -> Value {
        match self {
            ValueDomain::FaultAbstraction => Value::Correct,
            ValueDomain::BoundedInt { lo, .. } => Value::Int(*lo),
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (ValueDomain::FaultAbstraction, Value::Correct | Value::Erroneous) => true,
            (ValueDomain::BoundedInt { lo, hi }, Value::Int(v)) => lo <= v && v <= hi,
            _ => false,
        }
    }

    pub fn size(&self) -> u64 {
        match self {
            ValueDomain::FaultAbstraction => 2,
            ValueDomain::BoundedInt { lo, hi } => (hi - lo + 1) as u64,
        }
    }
}

/// Parses a value literal: an integer, `Correct`, `Erroneous`, `Error`, or a
/// parenthesized tuple `(v,v,...)`.
pub fn parse_value(text: &str) -> Result<Value, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty value literal".to_string());
    }
    if let Some(inner) = text.strip_prefix('(') {
        let inner = inner
            .strip_suffix(')')
            .ok_or_else(|| format!("unterminated tuple literal `{text}`"))?;
        let mut items = Vec::new();
        let mut depth = 0usize;
        let mut start = 0usize;
        for (i, c) in inner.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                ',' if depth == 0 => {
                    items.push(parse_value(&inner[start..i])?);
                    start = i + 1;
                }
                _ => {}
            }
        }
        if !inner[start..].trim().is_empty() || items.is_empty() {
            items.push(parse_value(&inner[start..])?);
        }
        return Ok(Value::Tuple(items));
    }
    match text {
        "Correct" => Ok(Value::Correct),
        "Erroneous" => Ok(Value::Erroneous),
        "Error" => Ok(Value::Error),
        _ => text
            .parse::<i64>()
            .map(Value::Int)
            .map_err(|_| format!("invalid value literal `{text}`")),
    }
}
