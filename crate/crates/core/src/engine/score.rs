use std::fmt;

use serde::Serialize;

use super::trace::TraceDocument;
use crate::agent::NodeStatus;
use crate::eda::tools::read_findings;
use crate::eda::{key_multiset, Manifest, TaskId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskScore {
    pub task: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreReport {
    pub tasks: Vec<TaskScore>,
}

impl ScoreReport {
    pub fn passed(&self) -> usize {
        self.tasks.iter().filter(|t| t.passed).count()
    }

    pub fn rate(&self) -> f64 {
        if self.tasks.is_empty() {
            0.0
        } else {
            self.passed() as f64 / self.tasks.len() as f64
        }
    }

    pub fn summary(&self) -> String {
        format!("{}/{} tasks passed ({:.0}%)", self.passed(), self.tasks.len(), 100.0 * self.rate())
    }

    pub fn task(&self, task: TaskId) -> Option<&TaskScore> {
        self.tasks.iter().find(|t| t.task == task.to_string())
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tasks {
            writeln!(f, "{} {}: {}", t.task, if t.passed { "PASS" } else { "FAIL" }, t.detail)?;
        }
        write!(f, "{}", self.summary())
    }
}

fn score_task(trace: &TraceDocument, manifest: &Manifest, task: TaskId) -> Result<String, String> {
    let key = task.findings_key();
    let artifact = trace.blackboard.get(&key).ok_or_else(|| format!("{key} was never written"))?;
    let status = trace.outcome(&artifact.producer).map(|o| o.status);
    if status != Some(NodeStatus::Solved) {
        return Err(format!("producer {} did not solve its node ({status:?})", artifact.producer));
    }
    let found = read_findings(&artifact.value).map_err(|e| format!("{key} is not a findings list: {e}"))?;
    let got = key_multiset(&found);
    let want = manifest.planted(task);
    if got == want {
        Ok(format!("{} findings match", want.len()))
    } else {
        let missing = want.iter().filter(|k| !got.contains(k)).count();
        let extra = got.iter().filter(|k| !want.contains(k)).count();
        Err(format!("{} found, {} planted, {missing} missing, {extra} unexpected", got.len(), want.len()))
    }
}

/// Compares the findings on a trace's final blackboard with the planted
/// anomalies of a fixture manifest. A task passes when its findings key is
/// present, written by a node that solved, and equal to the planted set.
pub fn score(trace: &TraceDocument, manifest: &Manifest) -> ScoreReport {
    let tasks = manifest
        .tasks
        .iter()
        .map(|&task| {
            let (passed, detail) = match score_task(trace, manifest, task) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            TaskScore { task: task.to_string(), passed, detail }
        })
        .collect();
    ScoreReport { tasks }
}
