//! Declarative tool registry and invocation.
//!
//! Every tool has a closed parameter schema. Arguments coming from a model
//! are validated and normalized before the handler runs, and handler failures
//! (errors or panics) come back as `ok=false` results whose content starts
//! with `ERROR:`; they never unwind into the agent loop.

pub mod builtin;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::memory::{Blackboard, KnowledgeStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Boolean,
    StringList,
}

impl ParamKind {
    pub fn json_schema(self) -> Map<String, Value> {
        let v = match self {
            ParamKind::String => json!({"type": "string"}),
            ParamKind::Integer => json!({"type": "integer"}),
            ParamKind::Number => json!({"type": "number"}),
            ParamKind::Boolean => json!({"type": "boolean"}),
            ParamKind::StringList => json!({"type": "array", "items": {"type": "string"}}),
        };
        v.as_object().cloned().unwrap_or_default()
    }

    fn label(self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Integer => "integer",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
            ParamKind::StringList => "string_list",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub doc: String,
}

impl ParamSpec {
    pub fn required(name: &str, kind: ParamKind, doc: &str) -> Self {
        Self { name: name.into(), kind, required: true, doc: doc.into() }
    }

    pub fn optional(name: &str, kind: ParamKind, doc: &str) -> Self {
        Self { name: name.into(), kind, required: false, doc: doc.into() }
    }
}

/// What a model sees of a tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

impl ToolDescriptor {
    /// Stable text form:
    ///
    /// ```text
    /// tool <name>: <description>
    ///   - <param> (<kind>, required|optional): <doc>
    /// ```
    pub fn render(&self) -> String {
        let mut out = format!("tool {}: {}\n", self.name, self.description);
        for p in &self.params {
            let req = if p.required { "required" } else { "optional" };
            let _ = writeln!(out, "  - {} ({}, {}): {}", p.name, p.kind.label(), req, p.doc);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub handler_ref: String,
}

impl ToolSpec {
    pub fn new(name: &str, description: &str, handler_ref: &str, params: Vec<ParamSpec>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            params,
            handler_ref: handler_ref.into(),
        }
    }

    pub fn descriptor(&self) -> ToolDescriptor {
        ToolDescriptor {
            name: self.name.clone(),
            description: self.description.clone(),
            params: self.params.clone(),
        }
    }

    fn check(&self) -> Result<(), ToolError> {
        let name_ok = !self.name.is_empty()
            && self.name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
        if !name_ok {
            return Err(ToolError::InvalidSpec(format!("tool name {:?} must match [a-z0-9_]+", self.name)));
        }
        let mut names = BTreeSet::new();
        for p in &self.params {
            if !names.insert(p.name.as_str()) {
                return Err(ToolError::InvalidSpec(format!(
                    "tool {}: parameter {:?} declared twice",
                    self.name, p.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ToolResult {
    pub ok: bool,
    /// Rendered for the conversation.
    pub content: String,
    /// Structured payload recorded in the trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl ToolResult {
    pub fn error(message: impl std::fmt::Display) -> Self {
        Self { ok: false, content: format!("ERROR: {message}"), data: None }
    }
}

/// Successful handler output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToolOutput {
    pub content: String,
    pub data: Option<Value>,
}

impl ToolOutput {
    pub fn text(content: impl Into<String>) -> Self {
        Self { content: content.into(), data: None }
    }

    pub fn with_data(content: impl Into<String>, data: Value) -> Self {
        Self { content: content.into(), data: Some(data) }
    }
}

/// What a handler can reach while running.
pub struct ToolContext<'a> {
    pub blackboard: &'a Blackboard,
    /// Node on whose behalf the tool runs; blackboard writes are attributed to it.
    pub producer: &'a str,
    pub knowledge: &'a KnowledgeStore,
    /// Knowledge bases the calling role may query.
    pub kb_refs: &'a [String],
}

pub type Handler = Arc<dyn Fn(&Args<'_>, &ToolContext<'_>) -> anyhow::Result<ToolOutput> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "field", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArgViolation {
    MissingRequired(String),
    UnknownField(String),
    WrongKind(String),
}

impl std::fmt::Display for ArgViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArgViolation::MissingRequired(n) => write!(f, "MISSING_REQUIRED({n})"),
            ArgViolation::UnknownField(n) => write!(f, "UNKNOWN_FIELD({n})"),
            ArgViolation::WrongKind(n) => write!(f, "WRONG_KIND({n})"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("DUPLICATE_TOOL: {0}")]
    DuplicateTool(String),
    #[error("UNKNOWN_TOOL: {0}")]
    UnknownTool(String),
    #[error("invalid tool spec: {0}")]
    InvalidSpec(String),
    #[error("UNKNOWN_HANDLER: {0}")]
    UnknownHandler(String),
}

fn is_plain_decimal(s: &str, allow_fraction: bool) -> bool {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int, rest) = match body.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => body.split_at(i),
        None => (body, ""),
    };
    if int.is_empty() {
        return false;
    }
    if rest.is_empty() {
        return true;
    }
    if !allow_fraction {
        return false;
    }
    let mut rest = rest;
    if let Some(frac) = rest.strip_prefix('.') {
        let digits = frac.find(|c: char| !c.is_ascii_digit()).unwrap_or(frac.len());
        if digits == 0 {
            return false;
        }
        rest = &frac[digits..];
    }
    if rest.is_empty() {
        return true;
    }
    let Some(exp) = rest.strip_prefix(['e', 'E']) else { return false };
    let exp = exp.strip_prefix(['+', '-']).unwrap_or(exp);
    !exp.is_empty() && exp.chars().all(|c| c.is_ascii_digit())
}

fn coerce(kind: ParamKind, v: &Value) -> Option<Value> {
    match (kind, v) {
        (ParamKind::String, Value::String(_)) => Some(v.clone()),
        (ParamKind::Integer, Value::Number(n)) => n.as_i64().map(Value::from),
        (ParamKind::Integer, Value::String(s)) if is_plain_decimal(s, false) => {
            s.parse::<i64>().ok().map(Value::from)
        }
        (ParamKind::Number, Value::Number(n)) => n.as_f64().map(|x| json!(x)),
        (ParamKind::Number, Value::String(s)) if is_plain_decimal(s, true) => {
            s.parse::<f64>().ok().filter(|x| x.is_finite()).map(|x| json!(x))
        }
        (ParamKind::Boolean, Value::Bool(_)) => Some(v.clone()),
        (ParamKind::Boolean, Value::String(s)) => match s.as_str() {
            "true" => Some(Value::Bool(true)),
            "false" => Some(Value::Bool(false)),
            _ => None,
        },
        (ParamKind::StringList, Value::Array(items)) if items.iter().all(Value::is_string) => {
            Some(v.clone())
        }
        _ => None,
    }
}

/// Validates `args` against the closed schema of `spec`.
///
/// Values are coerced only from their exact textual form (`"3"` for an
/// integer, `"2.5"` for a number, `"true"` for a boolean). `null` for an
/// optional parameter counts as absent.
pub fn validate_args(spec: &ToolSpec, args: &Map<String, Value>) -> Result<Map<String, Value>, Vec<ArgViolation>> {
    let mut violations = Vec::new();
    let mut out = Map::new();
    let declared: BTreeMap<&str, &ParamSpec> = spec.params.iter().map(|p| (p.name.as_str(), p)).collect();
    for key in args.keys() {
        if !declared.contains_key(key.as_str()) {
            violations.push(ArgViolation::UnknownField(key.clone()));
        }
    }
    for p in &spec.params {
        match args.get(&p.name) {
            None | Some(Value::Null) => {
                if p.required {
                    violations.push(ArgViolation::MissingRequired(p.name.clone()));
                }
            }
            Some(v) => match coerce(p.kind, v) {
                Some(norm) => {
                    out.insert(p.name.clone(), norm);
                }
                None => violations.push(ArgViolation::WrongKind(p.name.clone())),
            },
        }
    }
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(violations)
    }
}

/// Typed access to normalized arguments.
pub struct Args<'a>(pub &'a Map<String, Value>);

impl Args<'_> {
    pub fn str(&self, name: &str) -> anyhow::Result<&str> {
        self.opt_str(name).ok_or_else(|| anyhow::anyhow!("missing string argument {name}"))
    }

    pub fn opt_str(&self, name: &str) -> Option<&str> {
        self.0.get(name).and_then(Value::as_str)
    }

    pub fn f64(&self, name: &str) -> anyhow::Result<f64> {
        self.0.get(name).and_then(Value::as_f64).ok_or_else(|| anyhow::anyhow!("missing number argument {name}"))
    }

    pub fn opt_i64(&self, name: &str) -> Option<i64> {
        self.0.get(name).and_then(Value::as_i64)
    }

    pub fn i64(&self, name: &str) -> anyhow::Result<i64> {
        self.opt_i64(name).ok_or_else(|| anyhow::anyhow!("missing integer argument {name}"))
    }

    pub fn opt_bool(&self, name: &str) -> Option<bool> {
        self.0.get(name).and_then(Value::as_bool)
    }

    pub fn opt_str_list(&self, name: &str) -> Option<Vec<String>> {
        self.0.get(name).and_then(Value::as_array).map(|items| {
            items.iter().filter_map(Value::as_str).map(str::to_string).collect()
        })
    }
}

#[derive(Clone)]
struct Registered {
    spec: ToolSpec,
    handler: Handler,
}

/// Tools resolvable by name. Immutable once the run starts.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Registered>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.tools.keys()).finish()
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_tool(&mut self, spec: ToolSpec, handler: Handler) -> Result<(), ToolError> {
        spec.check()?;
        if self.tools.contains_key(&spec.name) {
            return Err(ToolError::DuplicateTool(spec.name));
        }
        self.tools.insert(spec.name.clone(), Registered { spec, handler });
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name).map(|r| &r.spec)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    /// All specs, sorted by name.
    pub fn list_tools(&self) -> Vec<&ToolSpec> {
        self.tools.values().map(|r| &r.spec).collect()
    }

    pub fn invoke_tool(
        &self,
        name: &str,
        args: &Map<String, Value>,
        ctx: &ToolContext<'_>,
    ) -> Result<ToolResult, ToolError> {
        let reg = self.tools.get(name).ok_or_else(|| ToolError::UnknownTool(name.to_string()))?;
        let normalized = match validate_args(&reg.spec, args) {
            Ok(n) => n,
            Err(violations) => {
                let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Ok(ToolResult::error(format!("invalid arguments for {name}: {}", list.join(", "))));
            }
        };
        let handler = &reg.handler;
        let outcome = catch_unwind(AssertUnwindSafe(|| handler(&Args(&normalized), ctx)));
        Ok(match outcome {
            Ok(Ok(out)) => ToolResult { ok: true, content: out.content, data: out.data },
            Ok(Err(e)) => ToolResult::error(format!("{e:#}")),
            Err(payload) => ToolResult::error(format!("tool {name} panicked: {}", panic_message(&*payload))),
        })
    }
}

/// Handlers available for binding, keyed by handler reference.
#[derive(Clone, Default)]
pub struct ToolCatalog {
    entries: BTreeMap<String, Registered>,
}

impl ToolCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// `spec.handler_ref` becomes the catalog key; `spec.name` is the
    /// default tool name.
    pub fn add(&mut self, spec: ToolSpec, handler: Handler) {
        self.entries.insert(spec.handler_ref.clone(), Registered { spec, handler });
    }

    pub fn contains(&self, handler_ref: &str) -> bool {
        self.entries.contains_key(handler_ref)
    }

    pub fn handler_refs(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Binds `tool_name` to the handler registered under `handler_ref`.
    pub fn bind(&self, registry: &mut ToolRegistry, tool_name: &str, handler_ref: &str) -> Result<(), ToolError> {
        let entry = self
            .entries
            .get(handler_ref)
            .ok_or_else(|| ToolError::UnknownHandler(handler_ref.to_string()))?;
        let mut spec = entry.spec.clone();
        spec.name = tool_name.to_string();
        registry.register_tool(spec, entry.handler.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Blackboard;
    use proptest::prelude::*;

    fn threshold_spec() -> ToolSpec {
        ToolSpec::new(
            "rc_mismatch_pairs",
            "flag RC mismatches",
            "test.rc",
            vec![
                ParamSpec::required("ratio_threshold", ParamKind::Number, "ratio"),
                ParamSpec::optional("top", ParamKind::Integer, ""),
                ParamSpec::optional("flag", ParamKind::Boolean, ""),
                ParamSpec::optional("names", ParamKind::StringList, ""),
                ParamSpec::optional("label", ParamKind::String, ""),
            ],
        )
    }

    fn ok_handler() -> Handler {
        Arc::new(|args, _ctx| Ok(ToolOutput::with_data("fine", json!(args.f64("ratio_threshold")?))))
    }

    fn with_ctx<R>(f: impl FnOnce(&ToolContext<'_>) -> R) -> R {
        let bb = Blackboard::new();
        let kb = KnowledgeStore::new();
        let ctx = ToolContext { blackboard: &bb, producer: "n", knowledge: &kb, kb_refs: &[] };
        f(&ctx)
    }

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().cloned().unwrap()
    }

    #[test]
    fn register_and_lookup() {
        let mut reg = ToolRegistry::new();
        reg.register_tool(threshold_spec(), ok_handler()).unwrap();
        assert_eq!(reg.lookup("rc_mismatch_pairs"), Some(&threshold_spec()));
        assert_eq!(
            reg.register_tool(threshold_spec(), ok_handler()),
            Err(ToolError::DuplicateTool("rc_mismatch_pairs".into()))
        );
    }

    #[test]
    fn listing_is_name_sorted() {
        let mut reg = ToolRegistry::new();
        let names = ["t9", "t3", "t0", "t7", "t1", "t8", "t2", "t6", "t4", "t5"];
        for n in names {
            reg.register_tool(ToolSpec::new(n, "", "h", vec![]), ok_handler()).unwrap();
        }
        let listed: Vec<&str> = reg.list_tools().iter().map(|s| s.name.as_str()).collect();
        let mut expected: Vec<&str> = names.to_vec();
        expected.sort();
        assert_eq!(listed, expected);
    }

    #[test]
    fn rejects_bad_names() {
        let mut reg = ToolRegistry::new();
        assert!(reg.register_tool(ToolSpec::new("Bad-Name", "", "h", vec![]), ok_handler()).is_err());
        let dup = ToolSpec::new(
            "x",
            "",
            "h",
            vec![ParamSpec::required("a", ParamKind::String, ""), ParamSpec::optional("a", ParamKind::String, "")],
        );
        assert!(matches!(reg.register_tool(dup, ok_handler()), Err(ToolError::InvalidSpec(_))));
    }

    #[test]
    fn validate_examples() {
        let spec = threshold_spec();
        let ok = validate_args(&spec, &obj(json!({"ratio_threshold": 5.0}))).unwrap();
        assert_eq!(ok["ratio_threshold"], json!(5.0));
        assert_eq!(
            validate_args(&spec, &Map::new()),
            Err(vec![ArgViolation::MissingRequired("ratio_threshold".into())])
        );
        assert_eq!(
            validate_args(&spec, &obj(json!({"ratio_threshold": 5.0, "extra": 1}))),
            Err(vec![ArgViolation::UnknownField("extra".into())])
        );
    }

    #[test]
    fn coercion_only_from_exact_text() {
        let spec = threshold_spec();
        let n = validate_args(
            &spec,
            &obj(json!({"ratio_threshold": "2.5", "top": "3", "flag": "true", "names": ["a"]})),
        )
        .unwrap();
        assert_eq!(n["ratio_threshold"], json!(2.5));
        assert_eq!(n["top"], json!(3));
        assert_eq!(n["flag"], json!(true));
        for bad in [
            json!({"ratio_threshold": "five"}),
            json!({"ratio_threshold": 1, "top": "3.0"}),
            json!({"ratio_threshold": 1, "top": 3.5}),
            json!({"ratio_threshold": 1, "flag": "yes"}),
            json!({"ratio_threshold": 1, "names": "a"}),
            json!({"ratio_threshold": 1, "label": 7}),
            json!({"ratio_threshold": " 1"}),
        ] {
            assert!(
                matches!(validate_args(&spec, &obj(bad.clone())), Err(v) if v.iter().any(|x| matches!(x, ArgViolation::WrongKind(_)))),
                "{bad}"
            );
        }
        // Null on an optional parameter is treated as absent.
        assert!(validate_args(&spec, &obj(json!({"ratio_threshold": 1, "top": null}))).is_ok());
    }

    #[test]
    fn invoke_paths() {
        let mut reg = ToolRegistry::new();
        reg.register_tool(threshold_spec(), ok_handler()).unwrap();
        reg.register_tool(
            ToolSpec::new("fails", "", "h", vec![]),
            Arc::new(|_, _| anyhow::bail!("bad input")),
        )
        .unwrap();
        reg.register_tool(ToolSpec::new("panics", "", "h", vec![]), Arc::new(|_, _| panic!("boom"))).unwrap();
        with_ctx(|ctx| {
            assert_eq!(
                reg.invoke_tool("nope", &Map::new(), ctx),
                Err(ToolError::UnknownTool("nope".into()))
            );
            let r = reg.invoke_tool("rc_mismatch_pairs", &obj(json!({"ratio_threshold": "4"})), ctx).unwrap();
            assert!(r.ok);
            assert_eq!(r.data, Some(json!(4.0)));
            let r = reg.invoke_tool("rc_mismatch_pairs", &Map::new(), ctx).unwrap();
            assert!(!r.ok && r.content.starts_with("ERROR:") && r.content.contains("MISSING_REQUIRED"));
            let r = reg.invoke_tool("fails", &Map::new(), ctx).unwrap();
            assert!(!r.ok && r.content.starts_with("ERROR:"));
            let r = reg.invoke_tool("panics", &Map::new(), ctx).unwrap();
            assert!(!r.ok && r.content.starts_with("ERROR:") && r.content.contains("boom"));
        });
    }

    #[test]
    fn catalog_binding_renames() {
        let mut cat = ToolCatalog::new();
        cat.add(threshold_spec(), ok_handler());
        let mut reg = ToolRegistry::new();
        cat.bind(&mut reg, "wire_check", "test.rc").unwrap();
        assert_eq!(reg.lookup("wire_check").unwrap().handler_ref, "test.rc");
        assert_eq!(cat.bind(&mut reg, "x", "missing"), Err(ToolError::UnknownHandler("missing".into())));
    }

    #[test]
    fn descriptor_render_is_stable() {
        let text = threshold_spec().descriptor().render();
        assert!(text.starts_with("tool rc_mismatch_pairs: flag RC mismatches\n"));
        assert!(text.contains("  - ratio_threshold (number, required): ratio\n"));
        assert!(text.contains("  - names (string_list, optional): \n"));
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(Value::from),
            any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(|x| json!(x)),
            any::<bool>().prop_map(Value::Bool),
            "[a-z0-9.\\-]{0,6}".prop_map(Value::String),
            prop::collection::vec("[a-z]{0,3}", 0..3).prop_map(|v| json!(v)),
            Just(Value::Null),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn normalization_is_idempotent(
            entries in prop::collection::btree_map(
                prop_oneof![Just("ratio_threshold".to_string()), Just("top".to_string()),
                            Just("flag".to_string()), Just("names".to_string()),
                            Just("label".to_string()), "[a-z]{1,4}"],
                arb_value(), 0..6)
        ) {
            let spec = threshold_spec();
            let args: Map<String, Value> = entries.into_iter().collect();
            if let Ok(once) = validate_args(&spec, &args) {
                let twice = validate_args(&spec, &once).expect("normalized args validate");
                prop_assert_eq!(once, twice);
            }
        }

        #[test]
        fn panicking_handlers_never_escape(msg in ".{0,20}", fail in any::<bool>()) {
            let mut reg = ToolRegistry::new();
            let m = msg.clone();
            reg.register_tool(ToolSpec::new("p", "", "h", vec![]), Arc::new(move |_, _| {
                if fail { anyhow::bail!("{m}") } else { panic!("{m}") }
            })).unwrap();
            let r = with_ctx(|ctx| reg.invoke_tool("p", &Map::new(), ctx)).unwrap();
            prop_assert!(!r.ok);
            prop_assert!(r.content.starts_with("ERROR:"));
        }
    }
}
