//! Report tree with fixed 17-significant-digit number formatting, so equal
//! runs produce byte-identical JSON.

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Node>),
    Obj(Vec<(String, Node)>),
}

/// `d.dddddddddddddddde±x`; non-finite values become `null`.
pub fn format_number(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

impl Serialize for Node {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Node::Null => s.serialize_unit(),
            Node::Bool(b) => s.serialize_bool(*b),
            Node::Int(i) => s.serialize_i64(*i),
            Node::Num(x) => match format_number(*x) {
                Some(t) => RawValue::from_string(t).map_err(serde::ser::Error::custom)?.serialize(s),
                None => s.serialize_unit(),
            },
            Node::Str(t) => s.serialize_str(t),
            Node::Arr(v) => {
                let mut seq = s.serialize_seq(Some(v.len()))?;
                for x in v {
                    seq.serialize_element(x)?;
                }
                seq.end()
            }
            Node::Obj(kv) => {
                let mut map = s.serialize_map(Some(kv.len()))?;
                for (k, v) in kv {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
    }
}

impl From<f64> for Node {
    fn from(x: f64) -> Self {
        Node::Num(x)
    }
}

impl From<bool> for Node {
    fn from(b: bool) -> Self {
        Node::Bool(b)
    }
}

impl From<usize> for Node {
    fn from(i: usize) -> Self {
        Node::Int(i as i64)
    }
}

impl From<u64> for Node {
    fn from(i: u64) -> Self {
        Node::Int(i as i64)
    }
}

impl From<&str> for Node {
    fn from(s: &str) -> Self {
        Node::Str(s.to_string())
    }
}

impl From<String> for Node {
    fn from(s: String) -> Self {
        Node::Str(s)
    }
}

impl From<Vec<f64>> for Node {
    fn from(v: Vec<f64>) -> Self {
        Node::Arr(v.into_iter().map(Node::Num).collect())
    }
}

/// Insertion-ordered object builder.
#[derive(Debug, Default, Clone)]
pub struct Obj(Vec<(String, Node)>);

impl Obj {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, v: impl Into<Node>) -> Self {
        self.0.push((key.to_string(), v.into()));
        self
    }

    pub fn push(&mut self, key: &str, v: impl Into<Node>) {
        self.0.push((key.to_string(), v.into()));
    }
}

impl From<Obj> for Node {
    fn from(o: Obj) -> Self {
        Node::Obj(o.0)
    }
}

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: Option<String>,
}

impl Check {
    /// Passes when `value ≤ tolerance` (NaN fails).
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance, detail: None }
    }

    pub fn failed(name: &str, detail: impl Into<String>) -> Self {
        Self { name: name.into(), value: f64::NAN, tolerance: f64::NAN, pass: false, detail: Some(detail.into()) }
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }

    fn node(&self) -> Node {
        let mut o = Obj::new()
            .set("name", self.name.as_str())
            .set("value", self.value)
            .set("tolerance", self.tolerance)
            .set("pass", self.pass);
        if let Some(d) = &self.detail {
            o.push("detail", d.as_str());
        }
        o.into()
    }
}

pub fn checks_node(checks: &[Check]) -> Node {
    Node::Arr(checks.iter().map(Check::node).collect())
}

pub fn first_failure(checks: &[Check]) -> Option<&Check> {
    checks.iter().find(|c| !c.pass)
}

pub fn to_json(node: &Node) -> String {
    let mut s = serde_json::to_string_pretty(node).expect("report serializes");
    s.push('\n');
    s
}
