use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RoleSpec, Termination, Topology, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationState {
    Continue,
    Solved,
    BudgetExhausted,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DelegationError {
    #[error("FAILED_DELEGATION: leader {leader} named no valid worker twice in a row")]
    FailedDelegation { leader: String },
    #[error("next_speaker needs a multi topology")]
    NotMulti,
    #[error("hierarchical topology without a leader")]
    NoLeader,
}

/// The role named by a trailing `NEXT: <role>` line, if any. Trailing blank
/// lines are ignored.
pub fn parse_delegation(content: &str) -> Option<&str> {
    let last = content.lines().rev().map(str::trim).find(|l| !l.is_empty())?;
    let name = last.strip_prefix("NEXT:")?.trim();
    (!name.is_empty()).then_some(name)
}

fn valid_delegate<'a>(content: &'a str, roles: &[RoleSpec], leader: &str) -> Option<&'a str> {
    parse_delegation(content).filter(|n| *n != leader && roles.iter().any(|r| r.name == *n))
}

/// Chooses who produces the next assistant message.
///
/// Round robin cycles through `roles` in declaration order. Hierarchical
/// gives the turn to the leader after any worker message; after a leader
/// message it goes to the worker named on its `NEXT:` line. A leader message
/// without a valid delegation hands the turn back to the leader once (the
/// caller adds a correction); two such messages in a row fail.
pub fn next_speaker(
    topology: Topology,
    roles: &[RoleSpec],
    transcript: &Transcript,
    leader: Option<&str>,
) -> Result<String, DelegationError> {
    match topology {
        Topology::Single => Err(DelegationError::NotMulti),
        Topology::MultiRoundRobin => {
            let n = transcript.assistant_turns();
            Ok(roles[n % roles.len()].name.clone())
        }
        Topology::MultiHierarchical => {
            let leader = leader.ok_or(DelegationError::NoLeader)?;
            let mut recent = transcript.assistant_entries().rev();
            let Some(last) = recent.next() else { return Ok(leader.to_string()) };
            if last.speaker != leader {
                return Ok(leader.to_string());
            }
            if let Some(worker) = valid_delegate(&last.message.content, roles, leader) {
                return Ok(worker.to_string());
            }
            let previous_also_failed = recent
                .next()
                .is_some_and(|p| p.speaker == leader && valid_delegate(&p.message.content, roles, leader).is_none());
            if previous_also_failed {
                Err(DelegationError::FailedDelegation { leader: leader.to_string() })
            } else {
                Ok(leader.to_string())
            }
        }
    }
}

/// Solved needs at least one assistant message, the stop phrase in the last
/// one when configured, and every declared output written when
/// `require_outputs` is set. Otherwise the budget decides.
pub fn check_termination(
    transcript: &Transcript,
    termination: &Termination,
    outputs_written: &BTreeSet<String>,
    declared_outputs: &[String],
) -> TerminationState {
    let turns = transcript.assistant_turns();
    let phrase_ok = match (&termination.stop_phrase, transcript.last_assistant()) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(p), Some(last)) => last.message.content.contains(p.as_str()),
    };
    let outputs_ok = !termination.require_outputs || declared_outputs.iter().all(|k| outputs_written.contains(k));
    if phrase_ok && outputs_ok {
        TerminationState::Solved
    } else if turns >= termination.max_turns {
        TerminationState::BudgetExhausted
    } else {
        TerminationState::Continue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    fn roles(names: &[&str]) -> Vec<RoleSpec> {
        names
            .iter()
            .map(|n| RoleSpec {
                name: n.to_string(),
                system_prompt: String::new(),
                tool_names: vec![],
                knowledge_base_refs: vec![],
                model_ref: "m".into(),
            })
            .collect()
    }

    fn said(t: &mut Transcript, who: &str, text: &str) {
        t.push(who, ChatMessage::assistant(text));
    }

    fn term(max: usize, stop: Option<&str>, require: bool) -> Termination {
        Termination { max_turns: max, stop_phrase: stop.map(String::from), require_outputs: require }
    }

    #[test]
    fn round_robin_cycles() {
        let rs = roles(&["a", "b"]);
        let mut t = Transcript::default();
        t.push("task", ChatMessage::user("go"));
        let mut got = Vec::new();
        for _ in 0..5 {
            let s = next_speaker(Topology::MultiRoundRobin, &rs, &t, None).unwrap();
            said(&mut t, &s, "x");
            got.push(s);
        }
        assert_eq!(got, vec!["a", "b", "a", "b", "a"]);
    }

    #[test]
    fn hierarchical_delegation() {
        let rs = roles(&["lead", "tracer", "fixer"]);
        let mut t = Transcript::default();
        t.push("task", ChatMessage::user("go"));
        assert_eq!(next_speaker(Topology::MultiHierarchical, &rs, &t, Some("lead")).unwrap(), "lead");
        said(&mut t, "lead", "look at the path\nNEXT: tracer\n");
        assert_eq!(next_speaker(Topology::MultiHierarchical, &rs, &t, Some("lead")).unwrap(), "tracer");
        said(&mut t, "tracer", "found it");
        assert_eq!(next_speaker(Topology::MultiHierarchical, &rs, &t, Some("lead")).unwrap(), "lead");
    }

    #[test]
    fn two_strikes_fail_delegation() {
        let rs = roles(&["lead", "tracer"]);
        let mut t = Transcript::default();
        t.push("task", ChatMessage::user("go"));
        said(&mut t, "lead", "NEXT: ghost");
        assert_eq!(next_speaker(Topology::MultiHierarchical, &rs, &t, Some("lead")).unwrap(), "lead");
        t.push("engine", ChatMessage::user("fix your delegation"));
        said(&mut t, "lead", "NEXT: ghost");
        assert_eq!(
            next_speaker(Topology::MultiHierarchical, &rs, &t, Some("lead")),
            Err(DelegationError::FailedDelegation { leader: "lead".into() })
        );
    }

    #[test]
    fn strike_count_resets_after_valid_delegation() {
        let rs = roles(&["lead", "w"]);
        let mut t = Transcript::default();
        said(&mut t, "lead", "no line");
        said(&mut t, "lead", "NEXT: w");
        said(&mut t, "w", "ok");
        said(&mut t, "lead", "NEXT: lead");
        assert_eq!(next_speaker(Topology::MultiHierarchical, &rs, &t, Some("lead")).unwrap(), "lead");
    }

    #[test]
    fn delegation_line_parsing() {
        assert_eq!(parse_delegation("a\nNEXT: tracer"), Some("tracer"));
        assert_eq!(parse_delegation("NEXT:tracer\n\n"), Some("tracer"));
        assert_eq!(parse_delegation("NEXT: tracer\nmore"), None);
        assert_eq!(parse_delegation("NEXT:"), None);
        assert_eq!(parse_delegation(""), None);
    }

    #[test]
    fn termination_rules() {
        let mut t = Transcript::default();
        t.push("task", ChatMessage::user("go"));
        let none = BTreeSet::new();
        assert_eq!(check_termination(&t, &term(3, Some("DONE"), false), &none, &[]), TerminationState::Continue);
        said(&mut t, "a", "All checks DONE");
        assert_eq!(check_termination(&t, &term(3, Some("DONE"), false), &none, &[]), TerminationState::Solved);
        let declared = vec!["x".to_string(), "y".to_string()];
        let partial: BTreeSet<String> = ["x".to_string()].into();
        assert_eq!(
            check_termination(&t, &term(3, Some("DONE"), true), &partial, &declared),
            TerminationState::Continue
        );
        let all: BTreeSet<String> = declared.iter().cloned().collect();
        assert_eq!(check_termination(&t, &term(3, Some("DONE"), true), &all, &declared), TerminationState::Solved);
    }

    #[test]
    fn budget_boundary() {
        for (turns, expected) in [
            (6, TerminationState::Continue),
            (7, TerminationState::BudgetExhausted),
            (8, TerminationState::BudgetExhausted),
        ] {
            let mut t = Transcript::default();
            t.push("task", ChatMessage::user("go"));
            for _ in 0..turns {
                said(&mut t, "a", "thinking");
            }
            assert_eq!(check_termination(&t, &term(7, Some("DONE"), false), &BTreeSet::new(), &[]), expected);
        }
    }
}
