//! Synthetic clinical-style document streams with planted temporal patterns.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::eval::MatchKey;
use crate::extract::{EventSchema, EventTypeDef};
use crate::types::Document;

/// The pattern planted by [`gen_stream`].
pub const PLANTED_PATTERN: &str = "SEQ(Discharge, WITHIN(NOT(FollowUp), 30 days))";
pub const PLANTED_PATTERN_ID: &str = "p1";

const DAY: i64 = 86_400;
const BASE_TS: i64 = 1_700_000_000;

const DISCHARGE_SENTENCE: &str =
    "The patient was discharged from hospital in stable condition with a discharge summary on file.";
const FOLLOW_UP_SENTENCE: &str =
    "A follow-up visit took place at the outpatient clinic and the follow-up note was filed.";

/// Sentences per topic. None of them mention a tracked event.
pub const TOPICS: &[(&str, &[&str])] = &[
    (
        "cardiac",
        &[
            "Cardiac monitoring showed sinus rhythm with occasional ectopic beats.",
            "Echocardiogram reported preserved ejection fraction and mild mitral regurgitation.",
            "Troponin trend was flat and the cardiac enzymes stayed within range.",
            "Blood pressure remained controlled on the current beta blocker dose.",
            "Chest pain resolved after nitrates and the cardiac team reviewed the tracing.",
            "Telemetry recorded no sustained arrhythmia over the cardiac observation period.",
            "Anticoagulation for atrial fibrillation was reviewed by the cardiac service.",
            "Cardiac rehabilitation goals were set with attention to exercise tolerance.",
        ],
    ),
    (
        "respiratory",
        &[
            "Oxygen saturation improved on two litres via nasal cannula overnight.",
            "Chest radiograph showed a resolving right lower lobe consolidation.",
            "Respiratory therapy continued with nebulised bronchodilators every six hours.",
            "Sputum culture grew normal respiratory flora without resistant organisms.",
            "Spirometry suggested moderate airflow obstruction consistent with known asthma.",
            "Breath sounds were reduced at the bases with scattered respiratory wheeze.",
            "Inhaler technique was reviewed and the respiratory plan was updated.",
            "Respiratory rate settled and accessory muscle use was no longer observed.",
        ],
    ),
    (
        "renal",
        &[
            "Creatinine peaked and then trended down with careful renal fluid balance.",
            "Renal ultrasound showed normal sized kidneys without hydronephrosis.",
            "Potassium was corrected and renal function was checked twice daily.",
            "Urine output remained adequate on the renal fluid chart.",
            "Nephrotoxic medications were held to protect renal recovery.",
            "Dialysis access was inspected and the renal team reviewed electrolytes.",
            "Renal dosing adjustments were applied to the antimicrobial regimen.",
            "Proteinuria was quantified and the renal plan included repeat testing.",
        ],
    ),
    (
        "neuro",
        &[
            "Neurological examination found symmetric reflexes and intact cranial nerves.",
            "Head imaging showed no acute neuro findings or haemorrhage.",
            "Seizure precautions continued and the neuro checks were unremarkable.",
            "Cognitive screening scores improved compared with the neuro baseline.",
            "Gait assessment noted mild ataxia under neuro physiotherapy review.",
            "Headache intensity decreased after the neuro medication change.",
            "Electroencephalogram showed no epileptiform neuro activity.",
            "Sensation was reduced in both feet consistent with neuro peripheral involvement.",
        ],
    ),
    (
        "ortho",
        &[
            "Orthopaedic review confirmed the fracture alignment on repeat films.",
            "Wound over the ortho fixation site was clean and dry.",
            "Weight bearing progressed with crutches under ortho physiotherapy guidance.",
            "Pain around the joint was managed with regular ortho analgesia.",
            "Cast was checked for pressure areas by the ortho nursing team.",
            "Range of motion in the knee improved after ortho exercises.",
            "Thromboprophylaxis continued after the ortho procedure as planned.",
            "Bone density testing was arranged by the ortho clinic.",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub entities: usize,
    pub docs_per_entity: usize,
    /// Entities that receive one planted match each.
    pub planted_patterns: usize,
    /// Topic names to draw from; empty means all of [`TOPICS`].
    #[serde(default)]
    pub vocab: Vec<String>,
    /// Approximate length of each document.
    #[serde(default = "default_doc_chars")]
    pub doc_chars: usize,
}

fn default_doc_chars() -> usize {
    1500
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            entities: 20,
            docs_per_entity: 6,
            planted_patterns: 5,
            vocab: Vec::new(),
            doc_chars: default_doc_chars(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pattern: String,
    pub pattern_id: String,
    pub matches: Vec<MatchKey>,
    pub planted_entities: Vec<String>,
    /// doc_id to topic.
    pub topics: BTreeMap<String, String>,
}

impl GroundTruth {
    /// Documents grouped by topic, in topic order.
    pub fn topic_partition(&self) -> Vec<Vec<String>> {
        let mut by: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (doc, topic) in &self.topics {
            by.entry(topic).or_default().push(doc.clone());
        }
        by.into_values().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedStream {
    pub documents: Vec<Document>,
    pub ground_truth: GroundTruth,
}

impl GeneratedStream {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&serde_json::to_string(d).expect("document serializes"));
            out.push('\n');
        }
        out
    }
}

/// Extraction schema for the two event types of the planted pattern.
pub fn planted_schema() -> EventSchema {
    EventSchema::new(vec![
        EventTypeDef::new(
            "Discharge",
            "The patient is discharged from hospital.",
            &["discharged", "discharge"],
        ),
        EventTypeDef::new(
            "FollowUp",
            "A follow-up visit or call takes place.",
            &["follow-up", "follow up", "followup"],
        ),
    ])
}

#[derive(Clone, Copy, PartialEq)]
enum Plan {
    /// One discharge, never a follow-up: one match.
    Planted,
    /// Discharge with a follow-up on the next document: no match.
    Decoy,
    FollowUpOnly,
    Quiet,
}

/// Deterministic stream for `seed`. Entities are `p000`, `p001`, ...;
/// documents are ordered by timestamp, then doc id.
pub fn gen_stream(seed: u64, config: &GenConfig) -> Result<GeneratedStream, GenError> {
    if config.planted_patterns > config.entities {
        return Err(GenError::Config(format!(
            "cannot plant {} matches in {} entities",
            config.planted_patterns, config.entities
        )));
    }
    if config.entities > 0 && config.docs_per_entity == 0 {
        return Err(GenError::Config("docs_per_entity must be at least 1".into()));
    }
    if config.doc_chars < DISCHARGE_SENTENCE.len() {
        return Err(GenError::Config(format!("doc_chars must be at least {}", DISCHARGE_SENTENCE.len())));
    }
    let topics: Vec<&(&str, &[&str])> = if config.vocab.is_empty() {
        TOPICS.iter().collect()
    } else {
        let mut t = Vec::new();
        for name in &config.vocab {
            match TOPICS.iter().find(|(n, _)| n == name) {
                Some(x) => t.push(x),
                None => return Err(GenError::Config(format!("unknown topic {name}"))),
            }
        }
        t
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..config.entities).collect();
    order.shuffle(&mut rng);
    let mut plans = vec![Plan::Quiet; config.entities];
    for (rank, &e) in order.iter().enumerate() {
        plans[e] = if rank < config.planted_patterns {
            Plan::Planted
        } else {
            match rng.gen_range(0..4) {
                0 | 1 if config.docs_per_entity >= 2 => Plan::Decoy,
                2 => Plan::FollowUpOnly,
                _ => Plan::Quiet,
            }
        };
    }

    let mut documents = Vec::new();
    let mut matches = Vec::new();
    let mut planted_entities = Vec::new();
    let mut labels = BTreeMap::new();
    for (e, plan) in plans.iter().enumerate() {
        let entity = format!("p{e:03}");
        let n = config.docs_per_entity;
        let mut ts = BASE_TS + e as i64 * 3_600;
        let mut stamps = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                ts += rng.gen_range(1..=6) * DAY + rng.gen_range(0..DAY / 2);
            }
            stamps.push(ts);
        }
        let mut events: Vec<Option<&str>> = vec![None; n];
        match plan {
            Plan::Planted => {
                let i = rng.gen_range(0..n);
                events[i] = Some(DISCHARGE_SENTENCE);
                matches.push(MatchKey {
                    entity_id: entity.clone(),
                    pattern_id: PLANTED_PATTERN_ID.into(),
                    timestamps: vec![stamps[i]],
                });
                planted_entities.push(entity.clone());
            }
            Plan::Decoy => {
                let i = rng.gen_range(0..n - 1);
                events[i] = Some(DISCHARGE_SENTENCE);
                events[i + 1] = Some(FOLLOW_UP_SENTENCE);
            }
            Plan::FollowUpOnly => events[rng.gen_range(0..n)] = Some(FOLLOW_UP_SENTENCE),
            Plan::Quiet => {}
        }
        for i in 0..n {
            let (topic, sentences) = *topics[rng.gen_range(0..topics.len())];
            let text = compose(&mut rng, sentences, events[i], config.doc_chars);
            let doc_id = format!("{entity}-d{i:03}");
            labels.insert(doc_id.clone(), topic.to_string());
            documents.push(Document::new(doc_id, entity.clone(), stamps[i], text));
        }
    }
    documents.sort_by(|a, b| (a.timestamp, &a.doc_id).cmp(&(b.timestamp, &b.doc_id)));
    matches.sort();
    Ok(GeneratedStream {
        documents,
        ground_truth: GroundTruth {
            pattern: PLANTED_PATTERN.into(),
            pattern_id: PLANTED_PATTERN_ID.into(),
            matches,
            planted_entities,
            topics: labels,
        },
    })
}

fn compose<R: Rng>(rng: &mut R, sentences: &[&str], event: Option<&str>, target: usize) -> String {
    let budget = target.saturating_sub(event.map_or(0, |e| e.len() + 1));
    let mut parts: Vec<&str> = Vec::new();
    let mut len = 0;
    while len < budget {
        let s = sentences[rng.gen_range(0..sentences.len())];
        len += s.len() + 1;
        parts.push(s);
    }
    if let Some(e) = event {
        let at = rng.gen_range(0..=parts.len());
        parts.insert(at, e);
    }
    parts.join(" ")
}
