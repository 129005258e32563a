//! JSON documents for specs. Reals are written in shortest round-trip form
//! and parsed with correct rounding, so serialize/parse is bit-exact.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CpwlPairSpec, DeepMaxoutSpec, DomainBox, MaxoutLayerSpec, ReluNetSpec};
use crate::error::{Error, Result};
use crate::maxout_eval::VectorFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    MaxoutLayer,
    DeepMaxout,
    ReluNet,
    CpwlPair,
    DomainBox,
}

impl SpecKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpecKind::MaxoutLayer => "maxout_layer",
            SpecKind::DeepMaxout => "deep_maxout",
            SpecKind::ReluNet => "relu_net",
            SpecKind::CpwlPair => "cpwl_pair",
            SpecKind::DomainBox => "domain_box",
        }
    }

    fn from_str(s: &str) -> Option<Self> {
        [
            SpecKind::MaxoutLayer,
            SpecKind::DeepMaxout,
            SpecKind::ReluNet,
            SpecKind::CpwlPair,
            SpecKind::DomainBox,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

/// Any spec document, tagged by its top-level `kind`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecDocument {
    MaxoutLayer(MaxoutLayerSpec<f64>),
    DeepMaxout(DeepMaxoutSpec<f64>),
    ReluNet(ReluNetSpec<f64>),
    CpwlPair(CpwlPairSpec<f64>),
    DomainBox(DomainBox),
}

impl SpecDocument {
    pub fn kind(&self) -> SpecKind {
        match self {
            SpecDocument::MaxoutLayer(_) => SpecKind::MaxoutLayer,
            SpecDocument::DeepMaxout(_) => SpecKind::DeepMaxout,
            SpecDocument::ReluNet(_) => SpecKind::ReluNet,
            SpecDocument::CpwlPair(_) => SpecKind::CpwlPair,
            SpecDocument::DomainBox(_) => SpecKind::DomainBox,
        }
    }

    /// The network as a function of `Vec(X)`; `None` for a domain box.
    pub fn as_function(&self) -> Option<&(dyn VectorFunction<f64> + Sync)> {
        match self {
            SpecDocument::MaxoutLayer(f) => Some(f),
            SpecDocument::DeepMaxout(f) => Some(f),
            SpecDocument::ReluNet(f) => Some(f),
            SpecDocument::CpwlPair(f) => Some(f),
            SpecDocument::DomainBox(_) => None,
        }
    }
}

#[derive(Deserialize)]
struct RawDomainBox {
    a: f64,
    b: f64,
    n: usize,
    #[serde(rename = "T")]
    t: usize,
    delta: Option<f64>,
}

fn offending_field(message: &str) -> String {
    // serde reports e.g. "missing field `W`" or "unknown field `x`"
    message
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "document".to_owned())
}

fn from_value<T: for<'de> Deserialize<'de>>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        Error::parse(offending_field(&msg), msg)
    })
}

fn finite_check(value: &Value, path: &str) -> Result<()> {
    match value {
        Value::Number(n) if n.as_f64().map_or(true, |x| !x.is_finite()) => {
            Err(Error::parse(path, "number is not a finite double"))
        }
        Value::Array(items) => items
            .iter()
            .enumerate()
            .try_for_each(|(i, v)| finite_check(v, &format!("{path}[{i}]"))),
        Value::Object(map) => map
            .iter()
            .try_for_each(|(k, v)| finite_check(v, &format!("{path}.{k}"))),
        _ => Ok(()),
    }
}

fn maxout_from(value: Value) -> Result<MaxoutLayerSpec<f64>> {
    let mut spec: MaxoutLayerSpec<f64> = from_value(value)?;
    spec.fill_missing_biases();
    spec.validate()?;
    Ok(spec)
}

/// Parse and validate a spec document.
pub fn parse_spec(text: &str) -> Result<SpecDocument> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| Error::parse("document", e.to_string()))?;
    finite_check(&value, "document")?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::parse("document", "top level must be an object"))?;
    let kind_value = obj
        .remove("kind")
        .ok_or_else(|| Error::parse("kind", "missing field `kind`"))?;
    let kind_str = kind_value
        .as_str()
        .ok_or_else(|| Error::parse("kind", "kind must be a string"))?;
    let kind = SpecKind::from_str(kind_str)
        .ok_or_else(|| Error::parse("kind", format!("unknown kind `{kind_str}`")))?;

    Ok(match kind {
        SpecKind::MaxoutLayer => SpecDocument::MaxoutLayer(maxout_from(value)?),
        SpecKind::DeepMaxout => {
            let layers = match value.get_mut("layers").map(Value::take) {
                Some(Value::Array(layers)) => layers,
                _ => return Err(Error::parse("layers", "expected an array of layers")),
            };
            let layers = layers
                .into_iter()
                .map(maxout_from)
                .collect::<Result<Vec<_>>>()?;
            SpecDocument::DeepMaxout(DeepMaxoutSpec::new(layers)?)
        }
        SpecKind::ReluNet => {
            let mut spec: ReluNetSpec<f64> = from_value(value)?;
            spec.fill_missing_biases();
            spec.validate()?;
            SpecDocument::ReluNet(spec)
        }
        SpecKind::CpwlPair => {
            let obj = value.as_object_mut().expect("checked above");
            let g = maxout_from(
                obj.remove("g")
                    .ok_or_else(|| Error::parse("g", "missing field `g`"))?,
            )?;
            let h = maxout_from(
                obj.remove("h")
                    .ok_or_else(|| Error::parse("h", "missing field `h`"))?,
            )?;
            let spec = CpwlPairSpec { g, h };
            spec.validate()?;
            SpecDocument::CpwlPair(spec)
        }
        SpecKind::DomainBox => {
            let raw: RawDomainBox = from_value(value)?;
            let delta = raw
                .delta
                .unwrap_or_else(|| DomainBox::default_delta(raw.a, raw.b, raw.t));
            SpecDocument::DomainBox(DomainBox::with_delta(raw.a, raw.b, raw.n, raw.t, delta)?)
        }
    })
}

fn tagged<T: Serialize>(kind: SpecKind, body: &T) -> Value {
    let mut value = serde_json::to_value(body).expect("spec types serialize");
    let obj = value.as_object_mut().expect("spec types are objects");
    obj.insert("kind".into(), Value::String(kind.as_str().into()));
    value
}

/// Canonical pretty-printed JSON for a spec.
pub fn serialize_spec(spec: &SpecDocument) -> String {
    let value = match spec {
        SpecDocument::MaxoutLayer(s) => tagged(spec.kind(), s),
        SpecDocument::DeepMaxout(s) => tagged(spec.kind(), s),
        SpecDocument::ReluNet(s) => tagged(spec.kind(), s),
        SpecDocument::CpwlPair(s) => tagged(spec.kind(), s),
        SpecDocument::DomainBox(s) => tagged(spec.kind(), s),
    };
    serde_json::to_string_pretty(&value).expect("json values serialize")
}
