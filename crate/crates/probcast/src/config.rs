//! Human-readable experiment configuration logging.
//!
//! Every configurable component of the toolkit serializes to a constructor-call
//! notation that is readable, deterministic, and machine-parseable:
//!
//! ```text
//! NptsEstimator(
//!   alpha=1.5,
//!   kernel='exponential',
//!   seasonal=false,
//!   season_length=24,
//!   num_sample_paths=100
//! )
//! ```
//!
//! Defaults are always expanded, so the log alone is enough to re-instantiate
//! the exact same component tree. [`parse`] inverts [`ConfigValue::render`],
//! which is what allows an experiment to be re-run from its own log file.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One node of a serialized component tree.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<ConfigValue>),
    /// A component constructor: name plus ordered keyword arguments.
    Call {
        name: String,
        args: Vec<(String, ConfigValue)>,
    },
}

impl ConfigValue {
    pub fn call(name: &str, args: Vec<(&str, ConfigValue)>) -> Self {
        ConfigValue::Call {
            name: name.to_string(),
            args: args.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn str(s: impl Into<String>) -> Self {
        ConfigValue::Str(s.into())
    }

    pub fn float_list(xs: &[f64]) -> Self {
        ConfigValue::List(xs.iter().map(|&x| ConfigValue::Float(x)).collect())
    }

    pub fn int_list<I: Copy + Into<i64>>(xs: &[I]) -> Self {
        ConfigValue::List(xs.iter().map(|&x| ConfigValue::Int(x.into())).collect())
    }

    pub fn call_name(&self) -> Result<&str> {
        match self {
            ConfigValue::Call { name, .. } => Ok(name),
            other => Err(Error::config(format!("expected a component call, found {other:?}"))),
        }
    }

    /// Look up a constructor argument by name.
    pub fn get(&self, key: &str) -> Result<&ConfigValue> {
        match self {
            ConfigValue::Call { name, args } => args
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::config(format!("{name}: missing argument '{key}'"))),
            other => Err(Error::config(format!("cannot read '{key}' from non-call value {other:?}"))),
        }
    }

    pub fn as_i64(&self) -> Result<i64> {
        match self {
            ConfigValue::Int(v) => Ok(*v),
            other => Err(Error::config(format!("expected integer, found {other:?}"))),
        }
    }

    pub fn as_usize(&self) -> Result<usize> {
        let v = self.as_i64()?;
        usize::try_from(v).map_err(|_| Error::config(format!("expected non-negative integer, found {v}")))
    }

    pub fn as_u64(&self) -> Result<u64> {
        let v = self.as_i64()?;
        u64::try_from(v).map_err(|_| Error::config(format!("expected non-negative integer, found {v}")))
    }

    /// Floats accept integer literals as well (`10` reads as `10.0`).
    pub fn as_f64(&self) -> Result<f64> {
        match self {
            ConfigValue::Float(v) => Ok(*v),
            ConfigValue::Int(v) => Ok(*v as f64),
            other => Err(Error::config(format!("expected number, found {other:?}"))),
        }
    }

    pub fn as_bool(&self) -> Result<bool> {
        match self {
            ConfigValue::Bool(v) => Ok(*v),
            other => Err(Error::config(format!("expected boolean, found {other:?}"))),
        }
    }

    pub fn as_str(&self) -> Result<&str> {
        match self {
            ConfigValue::Str(v) => Ok(v),
            other => Err(Error::config(format!("expected string, found {other:?}"))),
        }
    }

    pub fn as_list(&self) -> Result<&[ConfigValue]> {
        match self {
            ConfigValue::List(v) => Ok(v),
            other => Err(Error::config(format!("expected list, found {other:?}"))),
        }
    }

    pub fn as_f64_list(&self) -> Result<Vec<f64>> {
        self.as_list()?.iter().map(|v| v.as_f64()).collect()
    }

    pub fn as_usize_list(&self) -> Result<Vec<usize>> {
        self.as_list()?.iter().map(|v| v.as_usize()).collect()
    }

    /// Render as indented constructor-call text. Deterministic: equal values
    /// produce byte-identical output.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, indent: usize) {
        match self {
            ConfigValue::Int(v) => {
                let _ = write!(out, "{v}");
            }
            ConfigValue::Float(v) => {
                let _ = write!(out, "{}", format_float(*v));
            }
            ConfigValue::Bool(v) => {
                let _ = write!(out, "{v}");
            }
            ConfigValue::Str(v) => {
                out.push('\'');
                for c in v.chars() {
                    match c {
                        '\'' => out.push_str("\\'"),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        c => out.push(c),
                    }
                }
                out.push('\'');
            }
            ConfigValue::List(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    item.render_into(out, indent);
                }
                out.push(']');
            }
            ConfigValue::Call { name, args } => {
                out.push_str(name);
                out.push('(');
                if !args.is_empty() {
                    for (i, (key, value)) in args.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        out.push('\n');
                        for _ in 0..(indent + 1) * 2 {
                            out.push(' ');
                        }
                        out.push_str(key);
                        out.push('=');
                        value.render_into(out, indent + 1);
                    }
                    out.push('\n');
                    for _ in 0..indent * 2 {
                        out.push(' ');
                    }
                }
                out.push(')');
            }
        }
    }

    /// Mirror of the tree as JSON. Calls become objects with a `__component__`
    /// tag; NaN renders as null (JSON has no NaN).
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            ConfigValue::Int(v) => Value::from(*v),
            ConfigValue::Float(v) => {
                if v.is_finite() {
                    Value::from(*v)
                } else if v.is_nan() {
                    Value::Null
                } else {
                    Value::from(format_float(*v))
                }
            }
            ConfigValue::Bool(v) => Value::from(*v),
            ConfigValue::Str(v) => Value::from(v.clone()),
            ConfigValue::List(items) => Value::from(items.iter().map(|i| i.to_json()).collect::<Vec<_>>()),
            ConfigValue::Call { name, args } => {
                let mut map = serde_json::Map::new();
                map.insert("__component__".to_string(), Value::from(name.clone()));
                for (k, v) in args {
                    map.insert(k.clone(), v.to_json());
                }
                Value::Object(map)
            }
        }
    }
}

/// Float formatting that round-trips through [`parse`]: integral values keep a
/// trailing `.0` so they stay floats, everything else uses Rust's shortest
/// exact representation.
fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        let plain = format!("{v}");
        // Very large integral values print without '.' or exponent and would
        // read back as integers; force exponent form for those.
        if plain.contains('.') || plain.contains('e') || plain.contains('E') {
            plain
        } else {
            format!("{v:e}")
        }
    }
}

/// A component that can be written to and rebuilt from a config tree.
pub trait Configurable: Sized {
    fn to_config(&self) -> ConfigValue;
    fn from_config(value: &ConfigValue) -> Result<Self>;
}

/// Parse constructor-call notation produced by [`ConfigValue::render`].
pub fn parse(text: &str) -> Result<ConfigValue> {
    let mut parser = Parser { chars: text.char_indices().peekable(), text };
    let value = parser.parse_value()?;
    parser.skip_ws();
    if let Some((pos, c)) = parser.chars.peek().copied() {
        return Err(parse_err(text, pos, &format!("unexpected trailing '{c}'")));
    }
    Ok(value)
}

fn parse_err(text: &str, pos: usize, msg: &str) -> Error {
    let line = text[..pos].chars().filter(|&c| c == '\n').count() + 1;
    Error::config(format!("parse error at line {line}: {msg}"))
}

struct Parser<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while let Some((_, c)) = self.chars.peek() {
            if c.is_whitespace() {
                self.chars.next();
            } else {
                break;
            }
        }
    }

    fn pos(&mut self) -> usize {
        self.chars.peek().map(|(i, _)| *i).unwrap_or(self.text.len())
    }

    fn expect(&mut self, expected: char) -> Result<()> {
        self.skip_ws();
        match self.chars.next() {
            Some((_, c)) if c == expected => Ok(()),
            Some((i, c)) => Err(parse_err(self.text, i, &format!("expected '{expected}', found '{c}'"))),
            None => Err(parse_err(self.text, self.text.len(), &format!("expected '{expected}', found end of input"))),
        }
    }

    fn parse_value(&mut self) -> Result<ConfigValue> {
        self.skip_ws();
        let start = self.pos();
        // Signed special literals need a lookahead past the sign.
        for (literal, value) in [("-inf", f64::NEG_INFINITY), ("+inf", f64::INFINITY), ("-nan", f64::NAN)] {
            if self.text[start..].starts_with(literal) {
                for _ in 0..literal.len() {
                    self.chars.next();
                }
                return Ok(ConfigValue::Float(value));
            }
        }
        match self.chars.peek().copied() {
            None => Err(parse_err(self.text, start, "expected a value, found end of input")),
            Some((_, '\'')) => self.parse_string(),
            Some((_, '[')) => self.parse_list(),
            Some((_, c)) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => self.parse_number(),
            Some((_, c)) if c.is_alphabetic() || c == '_' => self.parse_ident_value(),
            Some((i, c)) => Err(parse_err(self.text, i, &format!("unexpected character '{c}'"))),
        }
    }

    fn parse_string(&mut self) -> Result<ConfigValue> {
        self.expect('\'')?;
        let mut s = String::new();
        loop {
            match self.chars.next() {
                None => return Err(parse_err(self.text, self.text.len(), "unterminated string")),
                Some((_, '\'')) => break,
                Some((i, '\\')) => match self.chars.next() {
                    Some((_, '\'')) => s.push('\''),
                    Some((_, '\\')) => s.push('\\'),
                    Some((_, 'n')) => s.push('\n'),
                    _ => return Err(parse_err(self.text, i, "invalid escape sequence")),
                },
                Some((_, c)) => s.push(c),
            }
        }
        Ok(ConfigValue::Str(s))
    }

    fn parse_list(&mut self) -> Result<ConfigValue> {
        self.expect('[')?;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if let Some((_, ']')) = self.chars.peek() {
                self.chars.next();
                break;
            }
            items.push(self.parse_value()?);
            self.skip_ws();
            match self.chars.peek().copied() {
                Some((_, ',')) => {
                    self.chars.next();
                }
                Some((_, ']')) => {}
                Some((i, c)) => return Err(parse_err(self.text, i, &format!("expected ',' or ']', found '{c}'"))),
                None => return Err(parse_err(self.text, self.text.len(), "unterminated list")),
            }
        }
        Ok(ConfigValue::List(items))
    }

    fn parse_number(&mut self) -> Result<ConfigValue> {
        let start = self.pos();
        let mut is_float = false;
        while let Some((_, c)) = self.chars.peek().copied() {
            match c {
                '0'..='9' | '-' | '+' => {
                    self.chars.next();
                }
                '.' | 'e' | 'E' => {
                    is_float = true;
                    self.chars.next();
                }
                _ => break,
            }
        }
        let end = self.pos();
        let token = &self.text[start..end];
        if is_float {
            token
                .parse::<f64>()
                .map(ConfigValue::Float)
                .map_err(|_| parse_err(self.text, start, &format!("invalid float '{token}'")))
        } else {
            token
                .parse::<i64>()
                .map(ConfigValue::Int)
                .map_err(|_| parse_err(self.text, start, &format!("invalid integer '{token}'")))
        }
    }

    fn parse_ident_value(&mut self) -> Result<ConfigValue> {
        let start = self.pos();
        while let Some((_, c)) = self.chars.peek().copied() {
            if c.is_alphanumeric() || c == '_' {
                self.chars.next();
            } else {
                break;
            }
        }
        let end = self.pos();
        let ident = &self.text[start..end];
        match ident {
            "true" => return Ok(ConfigValue::Bool(true)),
            "false" => return Ok(ConfigValue::Bool(false)),
            "inf" => return Ok(ConfigValue::Float(f64::INFINITY)),
            "nan" => return Ok(ConfigValue::Float(f64::NAN)),
            "" => return Err(parse_err(self.text, start, "expected identifier")),
            _ => {}
        }
        self.skip_ws();
        match self.chars.peek().copied() {
            Some((_, '(')) => {
                self.chars.next();
                let mut args = Vec::new();
                loop {
                    self.skip_ws();
                    if let Some((_, ')')) = self.chars.peek() {
                        self.chars.next();
                        break;
                    }
                    let key = self.parse_arg_name()?;
                    self.expect('=')?;
                    let value = self.parse_value()?;
                    args.push((key, value));
                    self.skip_ws();
                    match self.chars.peek().copied() {
                        Some((_, ',')) => {
                            self.chars.next();
                        }
                        Some((_, ')')) => {}
                        Some((i, c)) => {
                            return Err(parse_err(self.text, i, &format!("expected ',' or ')', found '{c}'")))
                        }
                        None => return Err(parse_err(self.text, self.text.len(), "unterminated call")),
                    }
                }
                Ok(ConfigValue::Call { name: ident.to_string(), args })
            }
            _ => Err(parse_err(self.text, start, &format!("bare identifier '{ident}' (expected a call or literal)"))),
        }
    }

    fn parse_arg_name(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos();
        while let Some((_, c)) = self.chars.peek().copied() {
            if c.is_alphanumeric() || c == '_' {
                self.chars.next();
            } else {
                break;
            }
        }
        let end = self.pos();
        if start == end {
            return Err(parse_err(self.text, start, "expected argument name"));
        }
        Ok(self.text[start..end].to_string())
    }
}

/// Derive a per-component seed from a master seed and a stable path string.
///
/// FNV-1a over the path, mixed with the master seed through splitmix64, so
/// that nearby master seeds and paths do not collide in practice.
pub fn derive_seed(master: u64, path: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf29ce484222325;
    const FNV_PRIME: u64 = 0x100000001b3;
    let mut h = FNV_OFFSET;
    for b in path.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(master.wrapping_add(splitmix64(h)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tree() -> ConfigValue {
        ConfigValue::call(
            "MlpQrEstimator",
            vec![
                ("context_length", ConfigValue::Int(30)),
                ("quantiles", ConfigValue::float_list(&[0.1, 0.5, 0.9])),
                ("activation", ConfigValue::str("relu")),
                (
                    "trainer",
                    ConfigValue::call(
                        "TrainerConfig",
                        vec![
                            ("batch_size", ConfigValue::Int(32)),
                            ("initial_lr", ConfigValue::Float(0.001)),
                            ("min_lr", ConfigValue::Float(5e-5)),
                            ("seed", ConfigValue::Int(1)),
                        ],
                    ),
                ),
                ("verbose", ConfigValue::Bool(false)),
            ],
        )
    }

    #[test]
    fn render_is_indented_and_deterministic() {
        let tree = sample_tree();
        let text = tree.render();
        assert!(text.starts_with("MlpQrEstimator(\n  context_length=30,"));
        assert!(text.contains("  trainer=TrainerConfig(\n    batch_size=32,"));
        assert_eq!(text, sample_tree().render());
    }

    #[test]
    fn parse_inverts_render() {
        let tree = sample_tree();
        let parsed = parse(&tree.render()).unwrap();
        assert_eq!(parsed, tree);
    }

    #[test]
    fn floats_round_trip_exactly() {
        for &v in &[0.001, 5e-5, 2.0, -0.0, 1.0 / 3.0, 1e300, f64::INFINITY, 1.5e-308] {
            let text = ConfigValue::Float(v).render();
            match parse(&text).unwrap() {
                ConfigValue::Float(back) => assert_eq!(back.to_bits(), v.to_bits(), "value {v}"),
                other => panic!("expected float, got {other:?}"),
            }
        }
    }

    #[test]
    fn integral_floats_stay_floats() {
        assert_eq!(ConfigValue::Float(2.0).render(), "2.0");
        assert_eq!(parse("2.0").unwrap(), ConfigValue::Float(2.0));
        assert_eq!(parse("2").unwrap(), ConfigValue::Int(2));
    }

    #[test]
    fn strings_with_escapes_round_trip() {
        let v = ConfigValue::str("it's a\\path\nwith lines");
        assert_eq!(parse(&v.render()).unwrap(), v);
    }

    #[test]
    fn special_float_literals() {
        assert_eq!(parse("inf").unwrap(), ConfigValue::Float(f64::INFINITY));
        assert_eq!(parse("-inf").unwrap(), ConfigValue::Float(f64::NEG_INFINITY));
        match parse("nan").unwrap() {
            ConfigValue::Float(v) => assert!(v.is_nan()),
            other => panic!("expected nan, got {other:?}"),
        }
    }

    #[test]
    fn missing_argument_names_component() {
        let tree = sample_tree();
        let err = tree.get("nonexistent").unwrap_err();
        assert!(err.to_string().contains("MlpQrEstimator"));
        assert!(err.to_string().contains("nonexistent"));
    }

    #[test]
    fn json_mirror_tags_components() {
        let json = sample_tree().to_json();
        assert_eq!(json["__component__"], "MlpQrEstimator");
        assert_eq!(json["trainer"]["__component__"], "TrainerConfig");
        assert_eq!(json["trainer"]["batch_size"], 32);
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive_seed(7, "estimator");
        let b = derive_seed(7, "estimator");
        let c = derive_seed(7, "evaluator");
        let d = derive_seed(8, "estimator");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn empty_call_renders_flat() {
        let v = ConfigValue::call("Thing", vec![]);
        assert_eq!(v.render(), "Thing()");
        assert_eq!(parse("Thing()").unwrap(), v);
    }
}
