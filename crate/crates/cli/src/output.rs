//! Line-oriented text output (`key value`) with a JSON alternative.

use serde_json::{Map, Value};

pub enum Field {
    Real(f64),
    Int(u64),
    Text(String),
    Reals(Vec<f64>),
    /// `None` prints as `NA` / `null`.
    Maybe(Option<f64>),
    Flag(bool),
}

fn text_real(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}

fn json_real(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(format!("{v}")), Value::Number)
}

#[derive(Default)]
pub struct Report {
    fields: Vec<(String, Field)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, field: Field) -> &mut Self {
        self.fields.push((key.into(), field));
        self
    }

    pub fn real(&mut self, key: impl Into<String>, v: f64) -> &mut Self {
        self.push(key, Field::Real(v))
    }

    pub fn int(&mut self, key: impl Into<String>, v: usize) -> &mut Self {
        self.push(key, Field::Int(v as u64))
    }

    pub fn text(&mut self, key: impl Into<String>, v: impl Into<String>) -> &mut Self {
        self.push(key, Field::Text(v.into()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, field) in &self.fields {
            let value = match field {
                Field::Real(v) => text_real(*v),
                Field::Int(v) => v.to_string(),
                Field::Text(s) => s.clone(),
                Field::Reals(vs) => vs.iter().map(|v| text_real(*v)).collect::<Vec<_>>().join(","),
                Field::Maybe(v) => v.map_or_else(|| "NA".to_string(), text_real),
                Field::Flag(b) => b.to_string(),
            };
            out.push_str(&format!("{key} {value}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (key, field) in &self.fields {
            let value = match field {
                Field::Real(v) => json_real(*v),
                Field::Int(v) => Value::from(*v),
                Field::Text(s) => Value::String(s.clone()),
                Field::Reals(vs) => Value::Array(vs.iter().map(|v| json_real(*v)).collect()),
                Field::Maybe(v) => v.map_or(Value::Null, json_real),
                Field::Flag(b) => Value::Bool(*b),
            };
            map.insert(key.clone(), value);
        }
        Value::Object(map)
    }

    pub fn render(&self, json: bool) -> String {
        if json {
            format!("{}\n", self.to_json())
        } else {
            self.to_text()
        }
    }
}
