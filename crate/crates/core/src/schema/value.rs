//! Plaintext values and their integer encodings.

use super::catalog::DataKind;
use super::SchemaError;

/// A plaintext cell value as seen by the client API.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Value {
    Int(i64),
    /// Fixed-point decimal; the column's scale fixes the digit shift.
    Decimal(f64),
    Text(String),
}

impl Value {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Decimal(_) => "decimal",
            Value::Text(_) => "text",
        }
    }

    /// Canonical integer form of a numeric value under the column's data
    /// kind: decimals become scaled integers.
    pub fn to_scaled_int(&self, kind: &DataKind, column: &str) -> Result<i64, SchemaError> {
        match (self, kind) {
            (Value::Int(v), DataKind::Int) => Ok(*v),
            (Value::Decimal(v), DataKind::Decimal { scale }) => {
                let factor = 10f64.powi(*scale as i32);
                let scaled = (v * factor).round();
                if !scaled.is_finite() || scaled.abs() > i64::MAX as f64 {
                    return Err(SchemaError::OutOfRange {
                        column: column.to_string(),
                    });
                }
                Ok(scaled as i64)
            }
            (found, _) => Err(SchemaError::TypeMismatch {
                column: column.to_string(),
                expected: kind.name(),
                found: found.kind_name(),
            }),
        }
    }

    /// Rehydrates a scaled integer back into the user-facing value.
    pub fn from_scaled_int(raw: i64, kind: &DataKind) -> Value {
        match kind {
            DataKind::Int => Value::Int(raw),
            DataKind::Decimal { scale } => {
                Value::Decimal(raw as f64 / 10f64.powi(*scale as i32))
            }
            DataKind::Text => Value::Int(raw),
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

/// Order-preserving 8-byte key for a text value: the first eight bytes,
/// zero-padded, read big-endian. Ranks agree with byte-wise order on the
/// prefix.
pub fn text_order_key(s: &str) -> u64 {
    let mut buf = [0u8; 8];
    let bytes = s.as_bytes();
    let n = bytes.len().min(8);
    buf[..n].copy_from_slice(&bytes[..n]);
    u64::from_be_bytes(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_scaling_round_trips() {
        let kind = DataKind::Decimal { scale: 2 };
        let v = Value::Decimal(123.45);
        let scaled = v.to_scaled_int(&kind, "c").unwrap();
        assert_eq!(scaled, 12345);
        assert_eq!(Value::from_scaled_int(scaled, &kind), Value::Decimal(123.45));
    }

    #[test]
    fn text_order_key_orders_prefixes() {
        assert!(text_order_key("apple") < text_order_key("banana"));
        assert!(text_order_key("ab") < text_order_key("abc"));
        assert_eq!(text_order_key("longprefixA"), text_order_key("longprefixB"));
    }

    #[test]
    fn type_mismatch_is_reported() {
        let err = Value::Text("x".into())
            .to_scaled_int(&DataKind::Int, "col")
            .unwrap_err();
        assert!(matches!(err, SchemaError::TypeMismatch { .. }));
    }
}
