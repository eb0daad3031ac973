use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{ExpansionRequest, TaskEdge, TaskNode};

pub const PLAN_FENCE: &str = "```PLAN";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("PLAN block is not closed")]
    Unclosed,
    #[error("PLAN line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("PLAN block lists no nodes")]
    Empty,
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

/// Raw text of the last `PLAN` block in `content`, without the fences.
pub fn plan_block(content: &str) -> Option<Result<&str, PlanError>> {
    let start = content.rfind(PLAN_FENCE)?;
    let body_start = content[start..].find('\n').map(|i| start + i + 1)?;
    Some(match content[body_start..].find("```") {
        Some(end) => Ok(&content[body_start..body_start + end]),
        None => Err(PlanError::Unclosed),
    })
}

/// Turns the last `PLAN` block of `content` into an expansion request.
///
/// Each planned node gets an execution edge from the planner plus one from
/// every id on its `after=` list. A knowledge edge is added wherever a
/// planned node reads a key that the planner or another planned node writes.
/// Returns `None` when `content` has no plan.
pub fn parse_plan(planner: &TaskNode, content: &str) -> Option<Result<ExpansionRequest, PlanError>> {
    let body = match plan_block(content)? {
        Ok(b) => b,
        Err(e) => return Some(Err(e)),
    };
    Some(parse_body(planner, body))
}

fn parse_body(planner: &TaskNode, body: &str) -> Result<ExpansionRequest, PlanError> {
    let mut nodes = Vec::new();
    let mut after: Vec<(String, Vec<String>)> = Vec::new();
    for (i, raw) in body.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| PlanError::Line { line: i + 1, message };
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(err("expected `id | title | goal` at least".into()));
        }
        if fields[0].is_empty() {
            return Err(err("empty node id".into()));
        }
        let mut node = TaskNode::new(fields[0], planner.agent_ref.clone()).with_goal(fields[2]);
        node.title = fields[1].to_string();
        let mut deps = Vec::new();
        for field in &fields[3..] {
            let Some((k, v)) = field.split_once('=') else {
                return Err(err(format!("expected key=value, got {field:?}")));
            };
            match k.trim() {
                "agent" => node.agent_ref = v.trim().to_string(),
                "in" => node.inputs = list(v),
                "out" => node.outputs = list(v),
                "after" => deps = list(v),
                other => return Err(err(format!("unknown field {other:?}"))),
            }
        }
        after.push((node.id.clone(), deps));
        nodes.push(node);
    }
    if nodes.is_empty() {
        return Err(PlanError::Empty);
    }
    let mut edges: BTreeSet<TaskEdge> = BTreeSet::new();
    for (id, deps) in &after {
        edges.insert(TaskEdge::execution(&planner.id, id));
        for d in deps {
            edges.insert(TaskEdge::execution(d, id));
        }
    }
    let mut writers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for key in &planner.outputs {
        writers.entry(key).or_default().push(&planner.id);
    }
    for n in &nodes {
        for key in &n.outputs {
            writers.entry(key).or_default().push(&n.id);
        }
    }
    for n in &nodes {
        for key in &n.inputs {
            for src in writers.get(key.as_str()).into_iter().flatten() {
                if *src != n.id {
                    edges.insert(TaskEdge::knowledge(*src, &n.id, key));
                }
            }
        }
    }
    Ok(ExpansionRequest { planner_id: planner.id.clone(), new_nodes: nodes, new_edges: edges.into_iter().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{apply_expansion, EdgeKind, GraphMode, TaskGraph};

    fn planner() -> TaskNode {
        TaskNode::new("plan", "mcmm").with_io(&[], &["plan"]).planner()
    }

    #[test]
    fn fan_out_with_aggregation() {
        let text = "Here is the flow.\n```PLAN\n\
            c0 | Corner c0 | summarize c0 | in=rpt_c0 | out=sum_c0\n\
            c1 | Corner c1 | summarize c1 | in=rpt_c1 | out=sum_c1\n\
            agg | Takeaways | compare | in=sum_c0,sum_c1 | out=takeaways | after=c0,c1\n\
            ```\nDONE";
        let req = parse_plan(&planner(), text).unwrap().unwrap();
        assert_eq!(req.new_nodes.len(), 3);
        assert_eq!(req.new_nodes[2].inputs, vec!["sum_c0", "sum_c1"]);
        let exec: Vec<_> = req.new_edges.iter().filter(|e| e.kind == EdgeKind::Execution).collect();
        assert_eq!(exec.len(), 5);
        let know: Vec<_> = req.new_edges.iter().filter(|e| e.kind == EdgeKind::Knowledge).collect();
        assert_eq!(know.len(), 2);
        let mut g = TaskGraph::new(GraphMode::Dynamic);
        g.nodes.push(planner());
        let g2 = apply_expansion(&g, &req).unwrap();
        assert_eq!(g2.nodes.len(), 4);
    }

    #[test]
    fn malformed_plans() {
        assert!(parse_plan(&planner(), "no plan here").is_none());
        assert_eq!(parse_plan(&planner(), "```PLAN\nx | y | z\n").unwrap(), Err(PlanError::Unclosed));
        assert_eq!(parse_plan(&planner(), "```PLAN\n```").unwrap(), Err(PlanError::Empty));
        assert!(matches!(parse_plan(&planner(), "```PLAN\nonly | two\n```").unwrap(), Err(PlanError::Line { line: 1, .. })));
        assert!(matches!(
            parse_plan(&planner(), "```PLAN\na | b | c | color=red\n```").unwrap(),
            Err(PlanError::Line { .. })
        ));
    }

    #[test]
    fn agent_defaults_to_planner_agent() {
        let req = parse_plan(&planner(), "```PLAN\na | A | do a\nb | B | do b | agent=other\n```").unwrap().unwrap();
        assert_eq!(req.new_nodes[0].agent_ref, "mcmm");
        assert_eq!(req.new_nodes[1].agent_ref, "other");
    }
}
