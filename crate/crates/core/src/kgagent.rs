//! Knowledge-graph agent: retrieval, then a claim list where every claim
//! carries the triple ids it rests on.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::{Backend, Role};
use crate::kg::{KgContext, KgError, RetrievalResult, TripleRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimTag {
    Constraint,
    BestPractice,
    Cause,
    Note,
}

impl ClaimTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Constraint => "CONSTRAINT",
            Self::BestPractice => "BEST-PRACTICE",
            Self::Cause => "CAUSE",
            Self::Note => "NOTE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().replace([' ', '_'], "-").as_str() {
            "CONSTRAINT" => Some(Self::Constraint),
            "BEST-PRACTICE" => Some(Self::BestPractice),
            "CAUSE" => Some(Self::Cause),
            "NOTE" => Some(Self::Note),
            _ => None,
        }
    }

    /// Claims that must be backed by retrieved evidence.
    pub fn needs_evidence(self) -> bool {
        matches!(self, Self::Constraint | Self::BestPractice)
    }
}

impl fmt::Display for ClaimTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub tag: ClaimTag,
    pub text: String,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisOrigin {
    Model,
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgAnswer {
    pub narrative: String,
    pub claims: Vec<Claim>,
    pub retrieval: RetrievalResult,
    pub origin: SynthesisOrigin,
}

impl KgAnswer {
    /// Every id cited by some claim, first-cited order.
    pub fn cited_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for id in self.claims.iter().flat_map(|c| &c.evidence) {
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
        out
    }
}

static CLAIM_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:[-*]\s*|\d+[.)]\s*)?(CONSTRAINT|BEST[- _]PRACTICE|CAUSE|NOTE)\s*:\s*(.*?)\s*$").unwrap()
});
static CITATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[([^\]]*)\]").unwrap());
static TRIPLE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"t-[0-9a-f]+").unwrap());

/// Parse "TAG: text [t-id, t-id]" lines. Lines without a known tag are
/// ignored.
pub fn parse_claims(text: &str) -> Vec<Claim> {
    text.lines()
        .filter_map(|line| {
            let c = CLAIM_LINE.captures(line)?;
            let tag = ClaimTag::parse(&c[1])?;
            let body = &c[2];
            let mut evidence: Vec<String> = Vec::new();
            for cite in CITATION.captures_iter(body) {
                for id in TRIPLE_ID.find_iter(&cite[1]) {
                    if !evidence.iter().any(|e| e == id.as_str()) {
                        evidence.push(id.as_str().to_string());
                    }
                }
            }
            let text = CITATION.replace_all(body, "").split_whitespace().collect::<Vec<_>>().join(" ");
            Some(Claim { tag, text, evidence })
        })
        .collect()
}

/// Tag a triple by its relation wording.
pub fn tag_for_relation(relation: &str) -> ClaimTag {
    let r = relation.to_lowercase();
    let any = |ws: &[&str]| ws.iter().any(|w| r.contains(w));
    if any(&["constrain", "limit", "require", "must", "bound", "not_exceed", "max"]) {
        ClaimTag::Constraint
    } else if any(&["recommend", "best", "should", "prefer", "mitigat", "improve"]) {
        ClaimTag::BestPractice
    } else if any(&["cause", "lead", "induc", "result", "affect", "influenc", "increase", "reduce", "produce"]) {
        ClaimTag::Cause
    } else {
        ClaimTag::Note
    }
}

fn triple_sentence(t: &TripleRecord) -> String {
    let rel = t.relation.replace('_', " ").to_lowercase();
    let mut s = format!("{} {} {}", t.subject, rel, t.object);
    if !t.context.is_empty() {
        s.push_str(&format!(": {}", t.context));
    }
    s
}

/// One claim per selected triple, tagged by relation.
pub fn template_claims(retrieval: &RetrievalResult, ctx: &KgContext) -> Vec<Claim> {
    retrieval
        .selected
        .iter()
        .filter_map(|s| ctx.store.get(&s.id))
        .map(|t| Claim { tag: tag_for_relation(&t.relation), text: triple_sentence(t), evidence: vec![t.id.clone()] })
        .collect()
}

pub fn render_claims(claims: &[Claim]) -> String {
    claims
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}: {} [{}]\n", i + 1, c.tag, c.text, c.evidence.join(", ")))
        .collect()
}

fn synthesis_prompt(instruction: &str, observations: Option<&str>, retrieval: &RetrievalResult, ctx: &KgContext) -> String {
    let evidence: String = retrieval
        .evidence_ids()
        .filter_map(|id| ctx.store.get(id))
        .map(|t| format!("[{}] {} | {} | {} | {}\n", t.id, t.subject, t.relation, t.object, t.context))
        .collect();
    format!(
        "Question: {instruction}\n{}Evidence:\n{evidence}\
         Answer with one claim per line as \"TAG: text [triple ids]\", TAG one of CONSTRAINT, BEST-PRACTICE, CAUSE, NOTE. \
         Cite only the ids listed above.\n",
        observations.map(|o| format!("Observations: {o}\n")).unwrap_or_default(),
    )
}

/// Retrieve evidence for `instruction` and synthesize tagged claims. When the
/// backend fails or returns no parseable claim, claims are templated from the
/// selected triples. An empty store is reported, never papered over.
pub fn answer_query(
    instruction: &str,
    observations: Option<&str>,
    backend: &dyn Backend,
    ctx: &KgContext,
) -> Result<KgAnswer, KgError> {
    let retrieval = ctx.retrieve(&crate::query::strip_hints(instruction))?;
    let model = backend
        .complete(Role::KgSynthesizer, &synthesis_prompt(instruction, observations, &retrieval, ctx))
        .ok()
        .map(|t| parse_claims(&t))
        .filter(|c| !c.is_empty());
    let (claims, origin) = match model {
        Some(c) => (c, SynthesisOrigin::Model),
        None => (template_claims(&retrieval, ctx), SynthesisOrigin::Template),
    };
    let mut narrative = format!("Retrieved {} triple(s) (tau {:.4}", retrieval.selected.len(), retrieval.tau);
    if retrieval.fallback {
        narrative.push_str(", top-k fallback");
    }
    narrative.push_str(&format!(", {} by expansion).\n", retrieval.expanded.len()));
    narrative.push_str(&render_claims(&claims));
    Ok(KgAnswer { narrative, claims, retrieval, origin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::gateway::{Disabled, ScriptedBackend, ScriptedRule};
    use crate::kg::{HashEmbedder, RetrievalConfig, TripleStore};

    fn ctx() -> KgContext {
        let tsv = "Cutting force frequency\tCAUSES\tBlade deflection\t\"Deflection rises sharply above 1500 Hz\"\t\"\"\n\
                   Spindle speed\tLIMITED_BY\tTool wear\t\"Keep speed below the wear knee\"\t\"Table 2\"\n\
                   Thin wall\tRECOMMENDS\tSupport fixture\t\"Support thin walls near the tip\"\t\"\"\n";
        let e = HashEmbedder::default();
        let mut store = TripleStore::default();
        store.ingest_triples(tsv, "doc-a", &e).unwrap();
        KgContext::new(store, Arc::new(e), RetrievalConfig::default())
    }

    #[test]
    fn claim_lines() {
        let c = parse_claims("1. CAUSE: force frequency drives deflection [t-00aa, t-00bb]\nprose\n- best practice: support walls [t-0c]\nNOTE: nothing cited");
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].evidence, ["t-00aa", "t-00bb"]);
        assert_eq!(c[0].text, "force frequency drives deflection");
        assert_eq!(c[1].tag, ClaimTag::BestPractice);
        assert!(c[2].evidence.is_empty());
    }

    #[test]
    fn template_answer_cites_selected_triples() {
        let k = ctx();
        let a = answer_query("causes of this deflection for the rotor blade", None, &Disabled, &k).unwrap();
        assert_eq!(a.origin, SynthesisOrigin::Template);
        assert!(!a.claims.is_empty());
        for c in &a.claims {
            assert!(c.evidence.iter().all(|id| a.retrieval.contains(id)));
        }
        assert!(a.claims.iter().any(|c| c.tag == ClaimTag::Constraint));
    }

    #[test]
    fn model_answer_is_parsed() {
        let k = ctx();
        let id = k.store.records()[0].id.clone();
        let b = ScriptedBackend::new(vec![ScriptedRule::new(
            Some(Role::KgSynthesizer),
            ".",
            format!("CAUSE: frequency above 1500 Hz raises deflection [{id}]"),
        )
        .unwrap()]);
        let a = answer_query("why does the blade deflect", None, &b, &k).unwrap();
        assert_eq!(a.origin, SynthesisOrigin::Model);
        assert_eq!(a.cited_ids(), [id]);
    }

    #[test]
    fn empty_store_is_signalled() {
        let k = KgContext::new(TripleStore::default(), Arc::new(HashEmbedder::default()), RetrievalConfig::default());
        assert!(matches!(answer_query("why", None, &Disabled, &k), Err(KgError::EmptyKnowledge)));
    }

    #[test]
    fn relation_tags() {
        assert_eq!(tag_for_relation("LIMITED_BY"), ClaimTag::Constraint);
        assert_eq!(tag_for_relation("RECOMMENDS"), ClaimTag::BestPractice);
        assert_eq!(tag_for_relation("CAUSES"), ClaimTag::Cause);
        assert_eq!(tag_for_relation("PART_OF"), ClaimTag::Note);
    }
}
