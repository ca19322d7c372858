//! Instance files: `{name, jobs, m, q}` with exact rationals.
//!
//! Rationals are JSON integers or `"num/den"` strings; floats are rejected.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use bagsched::model::Instance;
use bagsched::rational::{format_rational, parse_rational, Rational};
use serde_json::{json, Map, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceFile {
    pub name: String,
    pub instance: Instance,
}

pub fn rational_value(r: &Rational) -> Value {
    if r.is_integer() {
        if let Ok(v) = r.numer().to_string().parse::<i64>() {
            return json!(v);
        }
    }
    json!(format_rational(r))
}

fn parse_value(v: &Value, what: &str) -> anyhow::Result<Rational> {
    match v {
        Value::Number(n) => match n.as_i64() {
            Some(i) => Ok(Rational::from_integer(i.into())),
            None => bail!("{what}: {n} is not an integer; write fractions as \"num/den\""),
        },
        Value::String(s) => parse_rational(s).ok_or_else(|| anyhow!("{what}: cannot parse {s:?}")),
        other => bail!("{what}: expected a number or \"num/den\", found {other}"),
    }
}

fn parse_list(v: Option<&Value>, field: &str) -> anyhow::Result<Vec<Rational>> {
    let items = v.and_then(Value::as_array).ok_or_else(|| anyhow!("missing array field {field:?}"))?;
    items.iter().enumerate().map(|(i, x)| parse_value(x, &format!("{field}[{i}]"))).collect()
}

impl InstanceFile {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let v: Value = serde_json::from_str(text).context("instance file is not valid JSON")?;
        let obj = v.as_object().ok_or_else(|| anyhow!("instance file must be a JSON object"))?;
        Self::from_object(obj)
    }

    pub fn from_object(obj: &Map<String, Value>) -> anyhow::Result<Self> {
        let name = match obj.get("name") {
            Some(Value::String(s)) => s.clone(),
            None => String::new(),
            Some(other) => bail!("name: expected a string, found {other}"),
        };
        let jobs = parse_list(obj.get("jobs"), "jobs")?;
        let q = parse_list(obj.get("q"), "q")?;
        let m = obj.get("m").and_then(Value::as_u64).ok_or_else(|| anyhow!("missing integer field \"m\""))?;
        if m as usize != q.len() {
            bail!("m = {m} but q has {} entries", q.len());
        }
        let instance = Instance::new(jobs, q)?;
        Ok(Self { name, instance })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_value(&self) -> Value {
        json!({
            "name": self.name,
            "jobs": self.instance.jobs().iter().map(rational_value).collect::<Vec<_>>(),
            "m": self.instance.m(),
            "q": self.instance.q().iter().map(rational_value).collect::<Vec<_>>(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_value()).expect("plain JSON values");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bagsched::rational::{int, ratio};

    #[test]
    fn parses_integers_and_fractions() {
        let f = InstanceFile::from_json(r#"{"name":"a","jobs":[3,"5/2"],"m":2,"q":["1/2","1/2"]}"#).unwrap();
        assert_eq!(f.instance.jobs(), &[int(3), ratio(5, 2)]);
        assert_eq!(f.instance.q(), &[ratio(1, 2), ratio(1, 2)]);
        assert_eq!(InstanceFile::from_json(&f.to_json()).unwrap(), f);
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            r#"{"jobs":[1.5],"m":2,"q":["1/2","1/2"]}"#,
            r#"{"jobs":[1],"m":3,"q":["1/2","1/2"]}"#,
            r#"{"jobs":[1],"m":2,"q":["1/2","1/3"]}"#,
            r#"{"jobs":[0],"m":2,"q":["1/2","1/2"]}"#,
            r#"{"jobs":["1/0"],"m":2,"q":["1/2","1/2"]}"#,
            r#"{"m":2,"q":["1/2","1/2"]}"#,
            "[1,2]",
        ] {
            assert!(InstanceFile::from_json(text).is_err(), "{text}");
        }
    }
}
