//! Report rendering. Every float is rounded to nine significant digits
//! before printing, so a rendered report reparses and re-renders to the
//! same bytes.

use serde_json::{Map, Value};
use swicert_core::signal::edge_key;
use swicert_core::{LyapunovPair, MuTable, RealMatrix};

/// Nearest value with nine significant decimal digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float reparses")
}

fn round_in_place(value: &mut Value) {
    match value {
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().expect("f64 number");
                if let Some(rounded) = serde_json::Number::from_f64(round_sig(f)) {
                    *n = rounded;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_in_place),
        Value::Object(map) => map.values_mut().for_each(round_in_place),
        _ => {}
    }
}

/// Pretty-printed report with rounded floats and a trailing newline.
pub fn render(mut value: Value) -> String {
    round_in_place(&mut value);
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    text
}

pub fn matrix_json(m: &RealMatrix) -> Value {
    let rows: Vec<Value> = (0..m.rows())
        .map(|i| Value::from((0..m.cols()).map(|j| m.get(i, j)).collect::<Vec<f64>>()))
        .collect();
    Value::from(rows)
}

pub fn pairs_json(pairs: &[LyapunovPair]) -> Value {
    let items: Vec<Value> = pairs
        .iter()
        .map(|pair| {
            let mut map = Map::new();
            map.insert("system".into(), pair.index.into());
            map.insert(
                "class".into(),
                serde_json::to_value(pair.class).expect("class serializes"),
            );
            map.insert(
                "source".into(),
                serde_json::to_value(pair.source).expect("source serializes"),
            );
            map.insert("lambda".into(), pair.lambda.into());
            map.insert("p".into(), matrix_json(&pair.p));
            map.insert("q".into(), matrix_json(&pair.q));
            Value::Object(map)
        })
        .collect();
    Value::from(items)
}

pub fn mu_json(mu: &MuTable) -> Value {
    let mut map = Map::new();
    for (&(from, to), &value) in mu.iter() {
        map.insert(edge_key(from, to), value.into());
    }
    Value::Object(map)
}
