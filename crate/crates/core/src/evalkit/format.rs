//! JSON rendering with sorted keys and every float at three decimals.

use serde::Serialize;
use serde_json::Value;

fn escape(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn number(n: &serde_json::Number) -> String {
    if n.is_f64() {
        let f = n.as_f64().expect("f64 number");
        let s = format!("{f:.3}");
        if s == "-0.000" {
            "0.000".into()
        } else {
            s
        }
    } else {
        n.to_string()
    }
}

fn render(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent + 1);
    let close = "  ".repeat(indent);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&number(n)),
        Value::String(s) => out.push_str(&escape(s)),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad);
                render(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&close);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad);
                out.push_str(&escape(k));
                out.push_str(": ");
                render(&map[*k], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&close);
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys; floats are written with exactly three
/// decimals, integers unchanged. Non-finite floats become `null`.
pub fn to_fixed_json<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report types serialize");
    let mut out = String::new();
    render(&v, 0, &mut out);
    out.push('\n');
    out
}

/// A float at three decimals, or an empty field for `None`.
pub fn fixed3(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => {
            let s = format!("{x:.3}");
            if s == "-0.000" {
                "0.000".into()
            } else {
                s
            }
        }
        _ => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_fixed_keys_sorted() {
        #[derive(Serialize)]
        struct R {
            z: f64,
            a: usize,
            m: Vec<f64>,
            n: Option<f64>,
        }
        let s = to_fixed_json(&R {
            z: 0.3,
            a: 2,
            m: vec![1.0, 0.14142],
            n: None,
        });
        assert_eq!(
            s,
            "{\n  \"a\": 2,\n  \"m\": [\n    1.000,\n    0.141\n  ],\n  \"n\": null,\n  \"z\": 0.300\n}\n"
        );
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["z"], 0.3);
    }

    #[test]
    fn csv_fields() {
        assert_eq!(fixed3(Some(0.14142)), "0.141");
        assert_eq!(fixed3(Some(-0.0001)), "0.000");
        assert_eq!(fixed3(None), "");
    }
}
