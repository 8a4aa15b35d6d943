//! Deterministic stand-in for an instruction-following model. It reads the
//! structured prompts built by the operators and answers each task with a
//! simple lexical rule.

use std::sync::Arc;

use super::prompt::Prompt;
use super::{hash_embed, BackendError, Completion, Embedding, ModelBackend, TokenUsage};
use crate::nfa::{compile, MatcherConfig, MatcherState};
use crate::pattern::parse_pattern;
use crate::types::{PatternMatch, SemanticEvent};
use crate::text::{content_tokens, dominant_token, find_ci, first_sentence, jaccard, sentences};

/// Overlap needed for the group-by answer to reuse an existing group.
const GROUP_OVERLAP: f64 = 0.25;
/// Overlap needed for a rolling-summary window to continue.
const TOPIC_OVERLAP: f64 = 0.15;
/// Overlap needed for the join answer to affirm a pair.
const JOIN_OVERLAP: f64 = 0.5;

#[derive(Debug, Default, Clone)]
pub struct SimulatedLlm;

impl SimulatedLlm {
    pub fn new() -> Self {
        SimulatedLlm
    }

    fn answer(&self, p: &Prompt) -> String {
        let doc = p.get("document").unwrap_or("");
        match p.task.as_str() {
            "filter" => yes_no(filter_hit(p.get("criterion").unwrap_or(""), doc)),
            "map" => map_text(p.get("instruction").unwrap_or(""), doc),
            "aggregate" => {
                let summarize = p.get("instruction").unwrap_or("").to_lowercase().contains("summar");
                let parts: Vec<&str> = p
                    .all("document")
                    .map(|d| if summarize { first_sentence(d) } else { d })
                    .collect();
                parts.join(if summarize { " " } else { "\n" })
            }
            "join" => yes_no(
                jaccard(p.get("left").unwrap_or(""), p.get("right").unwrap_or("")) >= JOIN_OVERLAP,
            ),
            "groupby" => assign_group(p.get("groups").unwrap_or(""), doc),
            "label" => dominant_token(doc).unwrap_or_else(|| "misc".into()),
            "refine" => refine_plan(p.get("groups").unwrap_or("")),
            "window" => {
                if jaccard(p.get("summary").unwrap_or(""), doc) >= TOPIC_OVERLAP {
                    "CONTINUE".into()
                } else {
                    "BOUNDARY".into()
                }
            }
            "summarize" => {
                let mut s: Vec<&str> = sentences(p.get("summary").unwrap_or(""));
                s.push(first_sentence(doc));
                s.retain(|x| !x.is_empty());
                let keep = s.len().saturating_sub(3);
                s[keep..].join(" ")
            }
            "rag" => {
                let parts: Vec<&str> = p.all("passage").map(first_sentence).collect();
                if parts.is_empty() {
                    "No relevant context.".into()
                } else {
                    parts.join(" ")
                }
            }
            "extract" => extract_json(p.get("event types").unwrap_or(""), doc),
            "judge" => judge(p),
            "synthesize" | "repair" => {
                crate::nl::template_draft(p.get("request").unwrap_or("")).to_string()
            }
            _ => "OK".into(),
        }
    }
}

fn yes_no(b: bool) -> String {
    if b { "YES" } else { "NO" }.into()
}

/// Quoted terms of the criterion if any, otherwise its content words; the
/// answer is yes when the document mentions one of them.
fn filter_hit(criterion: &str, doc: &str) -> bool {
    let quoted: Vec<&str> = criterion.split('"').skip(1).step_by(2).filter(|s| !s.is_empty()).collect();
    let terms: Vec<String> = if quoted.is_empty() {
        content_tokens(criterion)
    } else {
        quoted.iter().map(|s| s.to_string()).collect()
    };
    terms.iter().any(|t| find_ci(doc, t).is_some())
}

fn map_text(instruction: &str, doc: &str) -> String {
    let i = instruction.to_lowercase();
    if i.contains("summar") || i.contains("first sentence") {
        first_sentence(doc).to_string()
    } else if i.contains("upper") {
        doc.to_uppercase()
    } else if i.contains("lower") {
        doc.to_lowercase()
    } else {
        doc.to_string()
    }
}

/// Lines of the form `- g1 [label]: exemplar | exemplar`.
fn parse_groups(body: &str) -> Vec<(String, String, String)> {
    body.lines()
        .filter_map(|l| {
            let l = l.strip_prefix("- ")?;
            let (id, rest) = l.split_once(" [")?;
            let (label, ex) = rest.split_once("]:")?;
            Some((id.to_string(), label.to_string(), ex.trim().to_string()))
        })
        .collect()
}

fn assign_group(groups: &str, doc: &str) -> String {
    let words: std::collections::BTreeSet<String> = content_tokens(doc).into_iter().collect();
    let mut best: Option<(f64, String)> = None;
    if !words.is_empty() {
        for (id, label, ex) in parse_groups(groups) {
            let g: std::collections::BTreeSet<String> =
                content_tokens(&format!("{label} {ex}")).into_iter().collect();
            let score = words.intersection(&g).count() as f64 / words.len() as f64;
            if score >= GROUP_OVERLAP && best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, id));
            }
        }
    }
    match best {
        Some((_, id)) => format!("ASSIGN {id}"),
        None => format!("NEW {}", dominant_token(doc).unwrap_or_else(|| "misc".into())),
    }
}

/// Merges groups that carry the same label.
fn refine_plan(groups: &str) -> String {
    let gs = parse_groups(groups);
    let mut lines = Vec::new();
    let mut used = std::collections::BTreeSet::new();
    for (i, (id, label, _)) in gs.iter().enumerate() {
        if used.contains(id) {
            continue;
        }
        let same: Vec<&str> = gs[i + 1..]
            .iter()
            .filter(|(other, l, _)| l == label && !used.contains(other))
            .map(|(other, _, _)| other.as_str())
            .collect();
        if !same.is_empty() {
            used.extend(same.iter().map(|s| s.to_string()));
            lines.push(format!("merge {id},{}", same.join(",")));
        }
    }
    if lines.is_empty() {
        "NONE".into()
    } else {
        lines.join("\n")
    }
}

/// Lines of the form `- Type: prompt [keywords: a; b]`; a type without
/// keywords is triggered by its own name.
fn type_keywords(types: &str) -> Vec<(&str, Vec<String>)> {
    let mut out = Vec::new();
    for line in types.lines() {
        let Some(l) = line.strip_prefix("- ") else { continue };
        let Some((ty, rest)) = l.split_once(": ") else { continue };
        let keywords: Vec<String> = match rest.rfind("[keywords: ") {
            Some(at) => rest[at + 11..]
                .trim_end_matches(']')
                .split("; ")
                .map(str::trim)
                .filter(|k| !k.is_empty())
                .map(str::to_string)
                .collect(),
            None => Vec::new(),
        };
        let keywords = if keywords.is_empty() { vec![ty.to_lowercase()] } else { keywords };
        out.push((ty, keywords));
    }
    out
}

/// Earliest keyword hit per type, as (type, char span), ordered by position.
fn keyword_hits<'a>(types: &[(&'a str, Vec<String>)], doc: &str) -> Vec<(&'a str, (usize, usize))> {
    let mut hits: Vec<(&str, (usize, usize))> = types
        .iter()
        .filter_map(|(ty, kws)| {
            kws.iter()
                .filter_map(|k| find_ci(doc, k))
                .min_by_key(|&(s, e)| (s, std::cmp::Reverse(e)))
                .map(|span| (*ty, span))
        })
        .collect();
    hits.sort_by_key(|(_, (s, _))| *s);
    hits
}

fn extract_json(types: &str, doc: &str) -> String {
    let hits: Vec<serde_json::Value> = keyword_hits(&type_keywords(types), doc)
        .into_iter()
        .map(|(ty, (s, e))| {
            let quote: String = doc.chars().skip(s).take(e - s).collect();
            serde_json::json!({"event_type": ty, "attrs": {}, "evidence_quote": quote})
        })
        .collect();
    serde_json::Value::Array(hits).to_string()
}

/// Reads narrative lines `[t=<ts>] text`, spots events by keyword and runs
/// the pattern over them. Answers the timestamps of every match complete at
/// `now`, or at end of stream when the status is `final`.
fn judge(p: &Prompt) -> String {
    let Ok(expr) = parse_pattern(p.get("pattern").unwrap_or("")) else {
        return "[]".into();
    };
    let Ok(nfa) = compile(&expr) else {
        return "[]".into();
    };
    let types = type_keywords(p.get("event types").unwrap_or(""));
    let mut lines: Vec<(i64, &str)> = p
        .get("narrative")
        .unwrap_or("")
        .lines()
        .filter_map(|l| {
            let rest = l.strip_prefix("[t=")?;
            let (ts, text) = rest.split_once("] ")?;
            Some((ts.parse().ok()?, text))
        })
        .collect();
    lines.sort_by_key(|(ts, _)| *ts);
    let mut m = MatcherState::new(Arc::new(nfa), "judge", MatcherConfig::default());
    let mut found: Vec<PatternMatch> = Vec::new();
    let mut n = 0;
    for (ts, text) in lines {
        for (ty, _) in keyword_hits(&types, text) {
            n += 1;
            let ev = SemanticEvent::new(format!("j{n}"), "e", ty, ts);
            match m.advance(&ev) {
                Ok(ms) => found.extend(ms),
                Err(_) => return "[]".into(),
            }
        }
    }
    if p.get("status") == Some("final") {
        found.extend(m.flush());
    } else if let Some(now) = p.get("now").and_then(|s| s.trim().parse().ok()) {
        found.extend(m.on_watermark("e", now));
    }
    let stamps: std::collections::BTreeSet<Vec<i64>> = found.iter().map(|m| m.timestamps()).collect();
    serde_json::Value::Array(stamps.into_iter().map(|t| serde_json::json!({ "timestamps": t })).collect())
        .to_string()
}

impl ModelBackend for SimulatedLlm {
    fn provider(&self) -> &str {
        "mock-llm"
    }

    fn complete(&self, prompt: &str) -> Result<Completion, BackendError> {
        let text = match Prompt::parse(prompt) {
            Some(p) => self.answer(&p),
            None => "OK".into(),
        };
        Ok(Completion {
            usage: TokenUsage::whitespace(prompt, &text),
            text,
        })
    }

    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        Ok(hash_embed(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask(p: Prompt) -> String {
        SimulatedLlm.complete(&p.render()).unwrap().text
    }

    #[test]
    fn filter_uses_quoted_terms() {
        let p = Prompt::new("filter")
            .section("criterion", "Does the note mention \"sepsis\"?")
            .section("document", "Sepsis suspected.");
        assert_eq!(ask(p), "YES");
        let p = Prompt::new("filter")
            .section("criterion", "Does the note mention \"sepsis\"?")
            .section("document", "");
        assert_eq!(ask(p), "NO");
    }

    #[test]
    fn map_modes() {
        let doc = "First part. Second part.";
        let m = |i: &str| ask(Prompt::new("map").section("instruction", i).section("document", doc));
        assert_eq!(m("Return the text unchanged"), doc);
        assert_eq!(m("Summarize the note"), "First part.");
    }

    #[test]
    fn groupby_and_refine() {
        let groups = "- g1 [cardiac]: chest pain radiating arm\n- g2 [cardiac]: palpitations";
        let p = Prompt::new("groupby")
            .section("groups", groups)
            .section("document", "Chest pain radiating to left arm");
        assert_eq!(ask(p), "ASSIGN g1");
        let p = Prompt::new("groupby")
            .section("groups", groups)
            .section("document", "Femur fracture, fracture clinic");
        assert_eq!(ask(p), "NEW fracture");
        assert_eq!(ask(Prompt::new("refine").section("groups", groups)), "merge g1,g2");
    }

    #[test]
    fn extraction_orders_by_position() {
        let p = Prompt::new("extract")
            .section(
                "event types",
                "- FollowUp: a follow-up visit [keywords: follow-up]\n- Discharge: discharge [keywords: discharged]",
            )
            .section("document", "Patient discharged today; follow-up scheduled.");
        let v: serde_json::Value = serde_json::from_str(&ask(p)).unwrap();
        assert_eq!(v[0]["event_type"], "Discharge");
        assert_eq!(v[0]["evidence_quote"], "discharged");
        assert_eq!(v[1]["event_type"], "FollowUp");
    }
}
