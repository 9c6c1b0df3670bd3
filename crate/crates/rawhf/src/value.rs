//! Scalar values and typed column vectors shared by both storage paths.
//!
//! Both the in-situ scanner and the loaded store parse CSV text with the
//! same routines in this module, so a value observed through either path is
//! bit-identical (floats included).

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Attribute value type. Numerics are fixed 8-byte; text is variable-width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueType {
    Int64,
    Float64,
    Text,
}

impl ValueType {
    pub fn parse_name(name: &str) -> Result<ValueType> {
        match name {
            "int64" => Ok(ValueType::Int64),
            "float64" => Ok(ValueType::Float64),
            "text" => Ok(ValueType::Text),
            other => Err(Error::Schema(format!("unknown value type '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ValueType::Int64 => "int64",
            ValueType::Float64 => "float64",
            ValueType::Text => "text",
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Comparison operator usable against any pair of comparable values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        }
    }

    pub fn matches(&self, ord: Ordering) -> bool {
        use Ordering::*;
        matches!(
            (self, ord),
            (CmpOp::Eq, Equal)
                | (CmpOp::Ne, Less)
                | (CmpOp::Ne, Greater)
                | (CmpOp::Lt, Less)
                | (CmpOp::Gt, Greater)
                | (CmpOp::Le, Less)
                | (CmpOp::Le, Equal)
                | (CmpOp::Ge, Greater)
                | (CmpOp::Ge, Equal)
        )
    }
}

/// One scalar value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Int(_) => ValueType::Int64,
            Value::Float(_) => ValueType::Float64,
            Value::Text(_) => ValueType::Text,
        }
    }

    /// Parses a raw CSV field under the given type. This is the single
    /// text-to-value conversion used everywhere.
    pub fn parse_field(ty: ValueType, field: &str) -> Result<Value> {
        match ty {
            ValueType::Int64 => field
                .trim()
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|e| Error::Schema(format!("bad int64 '{field}': {e}"))),
            ValueType::Float64 => field
                .trim()
                .parse::<f64>()
                .map(Value::Float)
                .map_err(|e| Error::Schema(format!("bad float64 '{field}': {e}"))),
            ValueType::Text => Ok(Value::Text(field.to_string())),
        }
    }

    /// In-memory payload size in bytes, as used by build-side estimates.
    pub fn payload_bytes(&self) -> usize {
        match self {
            Value::Int(_) | Value::Float(_) => 8,
            Value::Text(s) => s.len(),
        }
    }

    /// Appends a canonical byte encoding, used for join keys and result
    /// checksums. Floats encode via their IEEE-754 bits, so two values
    /// parsed from the same text encode identically.
    pub fn encode_canonical(&self, out: &mut Vec<u8>) {
        match self {
            Value::Int(v) => {
                out.push(b'i');
                out.extend_from_slice(&v.to_le_bytes());
            }
            Value::Float(v) => {
                out.push(b'f');
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            Value::Text(s) => {
                out.push(b't');
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
    }

    /// Decodes one value from a canonical encoding, returning the value and
    /// the bytes consumed. Inverse of [`Value::encode_canonical`].
    pub fn decode_canonical(buf: &[u8]) -> Result<(Value, usize)> {
        let bad = || Error::Execution("truncated canonical value".into());
        let tag = *buf.first().ok_or_else(bad)?;
        match tag {
            b'i' => {
                let raw: [u8; 8] = buf.get(1..9).ok_or_else(bad)?.try_into().unwrap();
                Ok((Value::Int(i64::from_le_bytes(raw)), 9))
            }
            b'f' => {
                let raw: [u8; 8] = buf.get(1..9).ok_or_else(bad)?.try_into().unwrap();
                Ok((Value::Float(f64::from_bits(u64::from_le_bytes(raw))), 9))
            }
            b't' => {
                let raw: [u8; 4] = buf.get(1..5).ok_or_else(bad)?.try_into().unwrap();
                let len = u32::from_le_bytes(raw) as usize;
                let bytes = buf.get(5..5 + len).ok_or_else(bad)?;
                let s = std::str::from_utf8(bytes)
                    .map_err(|e| Error::Execution(format!("bad canonical text: {e}")))?;
                Ok((Value::Text(s.to_string()), 5 + len))
            }
            other => Err(Error::Execution(format!("bad canonical tag {other:#x}"))),
        }
    }

    /// Evaluates `self op literal`.
    pub fn satisfies(&self, op: CmpOp, literal: &Value) -> Result<bool> {
        Ok(op.matches(self.compare(literal)?))
    }

    /// Compares two values for predicate evaluation. Int/float mix promotes
    /// to f64; text compares bytewise; any other mix is a type error.
    pub fn compare(&self, other: &Value) -> Result<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Ok(a.cmp(b)),
            (Value::Float(a), Value::Float(b)) => a
                .partial_cmp(b)
                .ok_or_else(|| Error::Execution("NaN in comparison".into())),
            (Value::Int(a), Value::Float(b)) => (*a as f64)
                .partial_cmp(b)
                .ok_or_else(|| Error::Execution("NaN in comparison".into())),
            (Value::Float(a), Value::Int(b)) => a
                .partial_cmp(&(*b as f64))
                .ok_or_else(|| Error::Execution("NaN in comparison".into())),
            (Value::Text(a), Value::Text(b)) => Ok(a.cmp(b)),
            (a, b) => Err(Error::Execution(format!(
                "cannot compare {} with {}",
                a.value_type(),
                b.value_type()
            ))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            // {:?} keeps float text round-trippable (always has . or e)
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

/// A typed column vector, the unit returned by scans.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Text(Vec<String>),
}

impl ColumnData {
    pub fn with_capacity(ty: ValueType, cap: usize) -> ColumnData {
        match ty {
            ValueType::Int64 => ColumnData::Int(Vec::with_capacity(cap)),
            ValueType::Float64 => ColumnData::Float(Vec::with_capacity(cap)),
            ValueType::Text => ColumnData::Text(Vec::with_capacity(cap)),
        }
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            ColumnData::Int(_) => ValueType::Int64,
            ColumnData::Float(_) => ValueType::Float64,
            ColumnData::Text(_) => ValueType::Text,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int(v) => v.len(),
            ColumnData::Float(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses and appends one raw field.
    pub fn push_field(&mut self, field: &str) -> Result<()> {
        match self {
            ColumnData::Int(v) => match Value::parse_field(ValueType::Int64, field)? {
                Value::Int(x) => v.push(x),
                _ => unreachable!(),
            },
            ColumnData::Float(v) => match Value::parse_field(ValueType::Float64, field)? {
                Value::Float(x) => v.push(x),
                _ => unreachable!(),
            },
            ColumnData::Text(v) => v.push(field.to_string()),
        }
        Ok(())
    }

    pub fn truncate(&mut self, len: usize) {
        match self {
            ColumnData::Int(v) => v.truncate(len),
            ColumnData::Float(v) => v.truncate(len),
            ColumnData::Text(v) => v.truncate(len),
        }
    }

    pub fn get(&self, idx: usize) -> Value {
        match self {
            ColumnData::Int(v) => Value::Int(v[idx]),
            ColumnData::Float(v) => Value::Float(v[idx]),
            ColumnData::Text(v) => Value::Text(v[idx].clone()),
        }
    }

    /// Keeps only the rows whose index is set in `keep` (same length).
    pub fn filter(&self, keep: &[bool]) -> ColumnData {
        fn pick<T: Clone>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter()
                .zip(keep)
                .filter(|(_, k)| **k)
                .map(|(x, _)| x.clone())
                .collect()
        }
        match self {
            ColumnData::Int(v) => ColumnData::Int(pick(v, keep)),
            ColumnData::Float(v) => ColumnData::Float(pick(v, keep)),
            ColumnData::Text(v) => ColumnData::Text(pick(v, keep)),
        }
    }
}

/// A materialized row used by the join pipeline.
pub type Row = Vec<Value>;
