//! Rule-based drafting of pipeline specs from task descriptions. This is what
//! the simulated model answers to a synthesis prompt.

use serde_json::{json, Value};

use crate::backend::sha256_hex;

struct Lexeme {
    event_type: &'static str,
    prompt: &'static str,
    /// Phrases that name the event in a task description.
    cues: &'static [&'static str],
    /// Phrases the extractor looks for in documents.
    keywords: &'static [&'static str],
}

const LEXICON: &[Lexeme] = &[
    Lexeme {
        event_type: "Readmission",
        prompt: "The patient is readmitted to hospital.",
        cues: &["readmission", "readmitted", "readmit"],
        keywords: &["readmitted", "readmission"],
    },
    Lexeme {
        event_type: "Admission",
        prompt: "The patient is admitted to hospital.",
        cues: &["admission", "admitted", "admit"],
        keywords: &["admitted to", "admission"],
    },
    Lexeme {
        event_type: "Discharge",
        prompt: "The patient is discharged from hospital.",
        cues: &["discharge", "discharged"],
        keywords: &["discharged", "discharge"],
    },
    Lexeme {
        event_type: "FollowUp",
        prompt: "A follow-up visit or call takes place.",
        cues: &["follow-up", "follow up", "followup"],
        keywords: &["follow-up", "follow up", "followup"],
    },
    Lexeme {
        event_type: "Sepsis",
        prompt: "Sepsis is diagnosed or suspected.",
        cues: &["sepsis", "septic"],
        keywords: &["sepsis", "septic"],
    },
    Lexeme {
        event_type: "Antibiotics",
        prompt: "Antibiotics are started.",
        cues: &["antibiotic"],
        keywords: &["antibiotic"],
    },
    Lexeme {
        event_type: "Fever",
        prompt: "The patient has a fever.",
        cues: &["fever", "febrile"],
        keywords: &["fever", "febrile"],
    },
    Lexeme {
        event_type: "Surgery",
        prompt: "The patient undergoes surgery.",
        cues: &["surgery", "operation", "surgical"],
        keywords: &["surgery", "operation"],
    },
    Lexeme {
        event_type: "LabTest",
        prompt: "A laboratory test is ordered or resulted.",
        cues: &["lab test", "laboratory", "labs"],
        keywords: &["lab result", "laboratory", "labs"],
    },
];

const NEGATORS: &[&str] = &["no", "not", "without", "never", "absent", "absence", "missing", "lack"];

struct Mention {
    at: usize,
    end: usize,
    lex: &'static Lexeme,
    negated: bool,
}

fn mentions(task: &str) -> Vec<Mention> {
    let lower = task.to_lowercase();
    let mut found: Vec<Mention> = Vec::new();
    for lex in LEXICON {
        let hit = lex
            .cues
            .iter()
            .filter_map(|c| lower.find(c).map(|i| (i, i + c.len())))
            .min();
        if let Some((at, end)) = hit {
            // "readmitted" also contains "admit"; the longer cue wins
            if found.iter().any(|m| m.at <= at && end <= m.end) {
                continue;
            }
            found.push(Mention {
                at,
                end,
                lex,
                negated: false,
            });
        }
    }
    found.sort_by_key(|m| m.at);
    let mut prev_end = 0;
    for m in &mut found {
        let between = &lower[prev_end..m.at];
        m.negated = prev_end > 0
            && between
                .split(|c: char| !c.is_alphanumeric())
                .any(|w| NEGATORS.contains(&w));
        prev_end = m.end;
    }
    found
}

/// "within 30 days" and the like, normalized to the pattern syntax.
fn duration(task: &str) -> Option<String> {
    let lower = task.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    for w in words.windows(3) {
        if w[0] != "within" {
            continue;
        }
        let n: u64 = match w[1] {
            "a" | "an" | "one" => 1,
            "two" => 2,
            "three" => 3,
            "seven" => 7,
            "ten" => 10,
            "thirty" => 30,
            digits => match digits.parse() {
                Ok(n) => n,
                Err(_) => continue,
            },
        };
        let unit = match w[2].trim_end_matches('s') {
            "second" | "sec" => "s",
            "minute" | "min" => "min",
            "hour" | "hr" => "h",
            "day" => "days",
            "week" => return Some(format!("{} days", n * 7)),
            _ => continue,
        };
        return Some(format!("{n} {unit}"));
    }
    None
}

/// A spec, or `{"clarification": ...}` when the task leaves the window or
/// the events open.
pub fn template_draft(task: &str) -> Value {
    let ms = mentions(task);
    let window = duration(task);
    if ms.len() < 2 {
        return json!({
            "clarification": "Which two or more clinical events should the pattern relate, and in what order?"
        });
    }
    let window = match window {
        Some(w) => w,
        None if ms.iter().any(|m| m.negated) => {
            let absent = ms.iter().find(|m| m.negated).map_or("", |m| m.lex.event_type);
            return json!({
                "clarification": format!("Within what time window must {absent} be absent?")
            });
        }
        None => String::new(),
    };
    let atoms: Vec<String> = ms
        .iter()
        .map(|m| {
            if m.negated {
                format!("NOT({})", m.lex.event_type)
            } else {
                m.lex.event_type.to_string()
            }
        })
        .collect();
    let trailing_not = ms.last().is_some_and(|m| m.negated) && !ms[..ms.len() - 1].iter().any(|m| m.negated);
    let pattern = if window.is_empty() {
        format!("SEQ({})", atoms.join(", "))
    } else if trailing_not {
        let (last, head) = atoms.split_last().expect("two or more atoms");
        format!("SEQ({}, WITHIN({last}, {window}))", head.join(", "))
    } else {
        format!("WITHIN(SEQ({}), {window})", atoms.join(", "))
    };
    let schema: Vec<Value> = ms
        .iter()
        .map(|m| {
            json!({
                "event_type": m.lex.event_type,
                "extraction_prompt": m.lex.prompt,
                "keywords": m.lex.keywords,
            })
        })
        .collect();
    json!({
        "pipeline_id": format!("nl-{}", &sha256_hex(task)[..8]),
        "source": {"id": "docs"},
        "operators": [
            {"id": "extract", "kind": "extract", "params": {"schema": schema}, "inputs": ["docs"]},
            {
                "id": "pattern",
                "kind": "pattern",
                "params": {"pattern": pattern, "pattern_id": "p1"},
                "inputs": ["extract"]
            }
        ],
        "sinks": ["pattern"]
    })
}
