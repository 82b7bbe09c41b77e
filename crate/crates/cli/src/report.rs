//! Reports: a JSON object rendered either as pretty JSON (with --json)
//! or as stable "key: value" lines on stdout. Exponent-scale values are
//! strings under keys ending in `_exp`.

use serde_json::{json, Map, Value};

use polyann::padic::{format_rat, NormExp, Rat};
use polyann::series::TruncatedSeries;
use polyann::tate::TateElement;
use polyann::Matrix;

pub struct Report {
    pub command: String,
    pub status: String,
    pub data: Map<String, Value>,
    pub timing_ms: u128,
}

impl Report {
    pub fn new(command: &str) -> Report {
        Report {
            command: command.to_string(),
            status: "pass".to_string(),
            data: Map::new(),
            timing_ms: 0,
        }
    }

    pub fn fail(&mut self) {
        self.status = "fail".to_string();
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.data.insert(key.to_string(), value);
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("command".into(), json!(self.command));
        obj.insert("status".into(), json!(self.status));
        obj.insert("timing_ms".into(), json!(self.timing_ms as u64));
        for (k, v) in &self.data {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }

    pub fn to_text(&self) -> String {
        let mut lines = Vec::new();
        flatten("", &self.to_json(), &mut lines);
        lines.join("\n")
    }
}

fn flatten(prefix: &str, value: &Value, lines: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{}.{}", prefix, k)
                };
                flatten(&key, v, lines);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{}[{}]", prefix, i), v, lines);
            }
        }
        other => {
            let rendered = match other {
                Value::String(s) => s.clone(),
                v => v.to_string(),
            };
            lines.push(format!("{}: {}", prefix, rendered));
        }
    }
}

pub fn norm_exp_value(n: NormExp) -> Value {
    json!(format!("{}", n))
}

pub fn rat_value(r: &Rat) -> Value {
    json!(format_rat(r))
}

pub fn rat_matrix_value(m: &Matrix<Rat>) -> Value {
    let rows: Vec<Value> = (0..m.rows())
        .map(|i| {
            let row: Vec<Value> = (0..m.cols()).map(|j| rat_value(m.entry(i, j))).collect();
            Value::Array(row)
        })
        .collect();
    Value::Array(rows)
}

pub fn series_value(s: &TruncatedSeries) -> Value {
    let terms: Vec<Value> = s
        .terms()
        .map(|(exps, coeff)| {
            json!({
                "exps": exps,
                "coeff": format_rat(coeff),
            })
        })
        .collect();
    json!({
        "window": { "lower": s.window().lower(), "upper": s.window().upper() },
        "terms": terms,
    })
}

pub fn series_matrix_value(m: &Matrix<TruncatedSeries>) -> Value {
    let rows: Vec<Value> = (0..m.rows())
        .map(|i| {
            let row: Vec<Value> = (0..m.cols()).map(|j| series_value(m.entry(i, j))).collect();
            Value::Array(row)
        })
        .collect();
    Value::Array(rows)
}

pub fn tate_value(t: &TateElement) -> Value {
    let terms: Vec<Value> = t
        .terms()
        .map(|(exps, coeff)| {
            json!({
                "exps": exps,
                "coeff": format_rat(coeff),
            })
        })
        .collect();
    json!({ "terms": terms })
}
