use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};

/// Whitespace as matched by a Unicode-aware `\s`: Rust's `White_Space`
/// set plus the four ASCII information separators U+001C..U+001F.
pub fn is_regex_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

/// Collapse every maximal whitespace run to one space and trim both ends.
pub fn normalize_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if is_regex_space(c) {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

/// Serialise an argument object the way a default-configured Python
/// `json.dumps` does: insertion-ordered keys, `", "` and `": "` separators,
/// ASCII-only output with `\uXXXX` escapes, shortest round-trip floats.
pub fn serialize_args(arguments: &Map<String, Value>) -> Result<String> {
    let mut out = String::new();
    write_object(arguments, &mut out)?;
    Ok(out)
}

pub fn serialize_value(value: &Value) -> Result<String> {
    let mut out = String::new();
    write_value(value, &mut out)?;
    Ok(out)
}

fn write_object(map: &Map<String, Value>, out: &mut String) -> Result<()> {
    out.push('{');
    for (k, (key, value)) in map.iter().enumerate() {
        if k > 0 {
            out.push_str(", ");
        }
        write_string(key, out);
        out.push_str(": ");
        write_value(value, out)?;
    }
    out.push('}');
    Ok(())
}

fn write_value(value: &Value, out: &mut String) -> Result<()> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(true) => out.push_str("true"),
        Value::Bool(false) => out.push_str("false"),
        Value::Number(n) => write_number(n, out)?,
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_value(item, out)?;
            }
            out.push(']');
        }
        Value::Object(map) => write_object(map, out)?,
    }
    Ok(())
}

fn write_number(n: &Number, out: &mut String) -> Result<()> {
    if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else {
        let f = n
            .as_f64()
            .ok_or_else(|| Error::Invalid(format!("unrepresentable number {n}")))?;
        out.push_str(&python_float_repr(f)?);
    }
    Ok(())
}

/// `repr(float)` formatting: shortest round-trip digits, positional notation
/// for decimal exponents in [-4, 16), scientific (`1e+16`, `1.5e-05`) otherwise.
pub fn python_float_repr(f: f64) -> Result<String> {
    if !f.is_finite() {
        return Err(Error::Invalid(format!("non-finite number {f} is not JSON")));
    }
    if f == 0.0 {
        return Ok(if f.is_sign_negative() { "-0.0" } else { "0.0" }.to_string());
    }
    let sci = format!("{f:e}");
    let (mantissa, exp) = sci.split_once('e').expect("`{:e}` always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let nd = digits.len() as i32;
    let body = if (-4..16).contains(&exp) {
        if exp >= 0 {
            let int_len = exp + 1;
            if nd <= int_len {
                format!("{digits}{}.0", "0".repeat((int_len - nd) as usize))
            } else {
                format!("{}.{}", &digits[..int_len as usize], &digits[int_len as usize..])
            }
        } else {
            format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
        }
    } else {
        let frac = if nd > 1 {
            format!("{}.{}", &digits[..1], &digits[1..])
        } else {
            digits.clone()
        };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{frac}e{esign}{:02}", exp.abs())
    };
    Ok(format!("{sign}{body}"))
}

fn write_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            ' '..='~' => out.push(c),
            _ => {
                let mut buf = [0u16; 2];
                for unit in c.encode_utf16(&mut buf) {
                    out.push_str(&format!("\\u{unit:04x}"));
                }
            }
        }
    }
    out.push('"');
}
