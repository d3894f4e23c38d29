//! Cell values and the tolerance rule used when comparing them.

use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ErrorKind {
    Div0,
    Value,
    Ref,
    Cycle,
    Name,
}

impl ErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Div0 => "DIV0",
            ErrorKind::Value => "VALUE",
            ErrorKind::Ref => "REF",
            ErrorKind::Cycle => "CYCLE",
            ErrorKind::Name => "NAME",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Some(match code {
            "DIV0" => ErrorKind::Div0,
            "VALUE" => ErrorKind::Value,
            "REF" => ErrorKind::Ref,
            "CYCLE" => ErrorKind::Cycle,
            "NAME" => ErrorKind::Name,
            _ => return None,
        })
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.code())
    }
}

/// A computed or literal cell value. Numbers are always finite.
///
/// JSON form: numbers, booleans and strings map to their JSON
/// counterparts, `Blank` is `null`, errors are `{"error":"DIV0"}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Value {
    Number(f64),
    Boolean(bool),
    Text(String),
    Error(ErrorKind),
    #[default]
    Blank,
}

impl Value {
    /// Wraps an arithmetic result, turning NaN and infinities into `#VALUE`.
    pub fn number(n: f64) -> Value {
        if n.is_finite() {
            Value::Number(n)
        } else {
            Value::Error(ErrorKind::Value)
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn error(&self) -> Option<ErrorKind> {
        match self {
            Value::Error(kind) => Some(*kind),
            _ => None,
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Value::Error(_))
    }

    /// Text shown in a grid cell.
    pub fn display(&self) -> String {
        match self {
            Value::Number(n) => format!("{n}"),
            Value::Boolean(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
            Value::Text(t) => t.clone(),
            Value::Error(kind) => kind.to_string(),
            Value::Blank => String::new(),
        }
    }
}

/// Numeric tolerance: `|a − b| ≤ 1e-9 + 1e-9·|b|`, with `b` the expected value.
pub fn numbers_match(actual: f64, expected: f64) -> bool {
    (actual - expected).abs() <= 1e-9 + 1e-9 * expected.abs()
}

/// Numbers compare with [`numbers_match`]; everything else compares exactly.
pub fn values_match(actual: &Value, expected: &Value) -> bool {
    match (actual, expected) {
        (Value::Number(a), Value::Number(b)) => numbers_match(*a, *b),
        _ => actual == expected,
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Number(n) => serializer.serialize_f64(*n),
            Value::Boolean(b) => serializer.serialize_bool(*b),
            Value::Text(t) => serializer.serialize_str(t),
            Value::Blank => serializer.serialize_unit(),
            Value::Error(kind) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("error", kind.code())?;
                map.end()
            }
        }
    }
}

struct ValueVisitor;

impl<'de> Visitor<'de> for ValueVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number, boolean, string, null or {\"error\": CODE}")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<Value, E> {
        Ok(Value::Boolean(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
        Ok(Value::Number(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
        Ok(Value::Number(v as f64))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
        if v.is_finite() {
            Ok(Value::Number(v))
        } else {
            Err(E::custom("non-finite number"))
        }
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
        Ok(Value::Text(v.to_string()))
    }

    fn visit_unit<E: de::Error>(self) -> Result<Value, E> {
        Ok(Value::Blank)
    }

    fn visit_none<E: de::Error>(self) -> Result<Value, E> {
        Ok(Value::Blank)
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Value, A::Error> {
        let mut kind = None;
        while let Some(key) = map.next_key::<String>()? {
            if key != "error" {
                return Err(de::Error::unknown_field(&key, &["error"]));
            }
            let code: String = map.next_value()?;
            kind = Some(
                ErrorKind::from_code(&code)
                    .ok_or_else(|| de::Error::custom(format!("unknown error code `{code}`")))?,
            );
        }
        kind.map(Value::Error)
            .ok_or_else(|| de::Error::missing_field("error"))
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(ValueVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_numbers_become_errors() {
        assert_eq!(Value::number(f64::NAN), Value::Error(ErrorKind::Value));
        assert_eq!(Value::number(f64::INFINITY), Value::Error(ErrorKind::Value));
        assert_eq!(Value::number(2.5), Value::Number(2.5));
    }

    #[test]
    fn tolerance_rule() {
        assert!(numbers_match(36.0 + 1e-12, 36.0));
        assert!(!numbers_match(36.001, 36.0));
        assert!(numbers_match(1e12 + 100.0, 1e12));
        assert!(!values_match(&Value::Number(0.0), &Value::Blank));
        assert!(values_match(
            &Value::Error(ErrorKind::Div0),
            &Value::Error(ErrorKind::Div0)
        ));
    }

    #[test]
    fn json_shape() {
        let values = vec![
            Value::Number(720.0),
            Value::Boolean(true),
            Value::Text("Jan".into()),
            Value::Blank,
            Value::Error(ErrorKind::Div0),
        ];
        let json = serde_json::to_string(&values).unwrap();
        assert_eq!(json, r#"[720.0,true,"Jan",null,{"error":"DIV0"}]"#);
        let back: Vec<Value> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, values);
        assert!(serde_json::from_str::<Value>(r#"{"error":"OOPS"}"#).is_err());
    }
}
