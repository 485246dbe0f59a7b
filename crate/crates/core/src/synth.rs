//! Synthetic catalogs, rulebases and clinical cases.
//!
//! [`generate_synthetic`] produces guideline-scale files (catalog JSON plus
//! rule DSL) for benchmarks and reduction experiments; [`random_rulebase`]
//! produces small in-memory rulebases exercising every slot kind for
//! property tests.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::cases::ClinicalCase;
use crate::catalog::{Catalog, CondIdx};
use crate::rules::{Action, ClinicalRule, RuleBase, RuleBody, Union};

/// The thirteen display categories of the default configuration.
pub const DEFAULT_CATEGORIES: [(&str, &str); 13] = [
    ("cardiovascular", "#d9534f"),
    ("respiratory", "#5bc0de"),
    ("digestive", "#c8a165"),
    ("renal_urinary", "#f0ad4e"),
    ("neurological", "#7e57c2"),
    ("psychiatric", "#ab47bc"),
    ("endocrine_metabolic", "#26a69a"),
    ("musculoskeletal", "#8d6e63"),
    ("hematological", "#e57373"),
    ("infectious", "#9ccc65"),
    ("dermatological", "#ffb74d"),
    ("sensory", "#4fc3f7"),
    ("general", "#90a4ae"),
];

fn categories_json() -> serde_json::Value {
    DEFAULT_CATEGORIES
        .iter()
        .map(|(name, color)| json!({"name": name, "color": color}))
        .collect()
}

/// Catalog with the given clinical and drug ids, one ICD10-like code each.
pub fn letters_catalog(clinical: &[&str], drugs: &[&str]) -> Arc<Catalog> {
    let mut conditions = Vec::new();
    for (i, id) in clinical.iter().enumerate() {
        conditions.push(json!({
            "id": id, "kind": "clinical", "label": id,
            "category": DEFAULT_CATEGORIES[i % 13].0,
            "codes": [{"system": "ICD10", "value": format!("X{i:02}"), "label": id, "general": true}]
        }));
    }
    for (i, id) in drugs.iter().enumerate() {
        conditions.push(json!({
            "id": id, "kind": "drug", "label": id,
            "codes": [{"system": "ATC", "value": format!("Z{i:02}"), "label": id, "general": true}]
        }));
    }
    let doc = json!({"categories": categories_json(), "conditions": conditions});
    Arc::new(Catalog::load(&doc.to_string()).expect("generated catalog is valid"))
}

/// Shape of a small random rulebase.
#[derive(Debug, Clone)]
pub struct RandomRulebaseSpec {
    pub clinical: usize,
    pub drugs: usize,
    pub rules: usize,
    /// Upper bound on `|Cp|` per rule.
    pub max_present: usize,
    pub p_drug_present: f64,
    pub p_drug_absent: f64,
    pub p_clinical_absent: f64,
    pub p_union: f64,
    /// Only `Cp` slots, for the travelling-salesman reduction.
    pub restricted: bool,
    /// Every clinical condition is mentioned by at least one rule.
    pub cover_all: bool,
}

impl RandomRulebaseSpec {
    pub fn small(clinical: usize, rules: usize) -> Self {
        RandomRulebaseSpec {
            clinical,
            drugs: 3,
            rules,
            max_present: 3,
            p_drug_present: 0.3,
            p_drug_absent: 0.2,
            p_clinical_absent: 0.3,
            p_union: 0.35,
            restricted: false,
            cover_all: true,
        }
    }

    pub fn restricted(clinical: usize, rules: usize) -> Self {
        RandomRulebaseSpec {
            drugs: 0,
            restricted: true,
            ..Self::small(clinical, rules)
        }
    }
}

pub fn random_rulebase(spec: &RandomRulebaseSpec, seed: u64) -> RuleBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c_names: Vec<String> = (0..spec.clinical).map(|i| format!("c{i}")).collect();
    let d_names: Vec<String> = (0..spec.drugs).map(|i| format!("d{i}")).collect();
    let c_refs: Vec<&str> = c_names.iter().map(String::as_str).collect();
    let d_refs: Vec<&str> = d_names.iter().map(String::as_str).collect();
    let catalog = letters_catalog(&c_refs, &d_refs);
    let clinical: Vec<CondIdx> = (0..spec.clinical as u32).map(CondIdx).collect();
    let drugs: Vec<CondIdx> = (spec.clinical as u32..(spec.clinical + spec.drugs) as u32)
        .map(CondIdx)
        .collect();

    let mut rules = Vec::with_capacity(spec.rules);
    for r in 0..spec.rules {
        let mut pool = clinical.clone();
        pool.shuffle(&mut rng);
        let mut dpool = drugs.clone();
        dpool.shuffle(&mut rng);
        let mut body = RuleBody::default();
        if !pool.is_empty() {
            let k = rng.gen_range(1..=spec.max_present.max(1).min(pool.len()));
            body.c_present.extend(pool.drain(..k));
        }
        if !spec.restricted {
            if !dpool.is_empty() && rng.gen_bool(spec.p_drug_present) {
                body.d_present.insert(dpool.pop().unwrap());
            }
            if !dpool.is_empty() && rng.gen_bool(spec.p_drug_absent) {
                body.d_absent.insert(dpool.pop().unwrap());
            }
            if !pool.is_empty() && rng.gen_bool(spec.p_clinical_absent) {
                body.c_absent.insert(pool.pop().unwrap());
            }
            if !pool.is_empty() && rng.gen_bool(spec.p_union) {
                let k = rng.gen_range(1..=pool.len().min(3));
                let mut u = Union::default();
                u.clinical.extend(pool.drain(..k));
                if !dpool.is_empty() && rng.gen_bool(0.3) {
                    u.non_clinical.insert(dpool.pop().unwrap());
                }
                body.unions.push(u);
            }
            // Sometimes drop Cp entirely so union-only rules occur.
            if !body.unions.is_empty() && rng.gen_bool(0.25) {
                body.c_present.clear();
            }
        }
        rules.push(ClinicalRule {
            id: format!("r{r}"),
            body,
            action: Action::custom(format!("action {r}")),
        });
    }

    if spec.cover_all && !rules.is_empty() {
        let mentioned: BTreeSet<CondIdx> = rules.iter().flat_map(|r| r.body.clinical_mentions()).collect();
        for c in &clinical {
            if mentioned.contains(c) {
                continue;
            }
            let r = rng.gen_range(0..rules.len());
            rules[r].body.c_present.insert(*c);
        }
    }

    RuleBase::new(catalog, rules).expect("random rules respect kinds")
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("rule count must be positive")]
    NoRules,
    #[error("clinical condition count must be positive")]
    NoClinical,
    #[error("drug count must be positive")]
    NoDrugs,
    #[error("stopp fraction {0} is outside [0, 1]")]
    Fraction(f64),
    #[error("{clinical} clinical conditions cannot all be used by {rules} rules of at most {per_rule} conditions")]
    Infeasible {
        clinical: usize,
        rules: usize,
        per_rule: usize,
    },
}

/// Parameters for a guideline-scale synthetic rulebase.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub rule_count: usize,
    pub clinical_count: usize,
    pub drug_count: usize,
    /// Share of rules that require a present drug (STOPP-like); the rest
    /// require an absent drug (START-like).
    pub stopp_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// 124 rules over 73 clinical conditions and 40 drugs.
    pub fn guideline_scale(seed: u64) -> Self {
        SynthSpec {
            rule_count: 124,
            clinical_count: 73,
            drug_count: 40,
            stopp_fraction: 0.69,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticFiles {
    pub catalog_json: String,
    pub rules_text: String,
}

impl SyntheticFiles {
    pub fn load(&self) -> Result<RuleBase, crate::Error> {
        let catalog = Arc::new(Catalog::load(&self.catalog_json)?);
        Ok(crate::rules::parse_rulebase(&self.rules_text, catalog)?)
    }
}

const MAX_CLINICAL_PER_RULE: usize = 4;

// Zipf-like pick: low indices are more popular.
fn skewed(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u: f64 = rng.gen();
    (((n + 1) as f64).powf(u) - 1.0).floor().min((n - 1) as f64) as usize
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SyntheticFiles, SynthError> {
    if spec.rule_count == 0 {
        return Err(SynthError::NoRules);
    }
    if spec.clinical_count == 0 {
        return Err(SynthError::NoClinical);
    }
    if spec.drug_count == 0 {
        return Err(SynthError::NoDrugs);
    }
    if !(0.0..=1.0).contains(&spec.stopp_fraction) {
        return Err(SynthError::Fraction(spec.stopp_fraction));
    }
    if spec.clinical_count > spec.rule_count * MAX_CLINICAL_PER_RULE {
        return Err(SynthError::Infeasible {
            clinical: spec.clinical_count,
            rules: spec.rule_count,
            per_rule: MAX_CLINICAL_PER_RULE,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c_ids: Vec<String> = (1..=spec.clinical_count).map(|i| format!("cond_{i:03}")).collect();
    let d_ids: Vec<String> = (1..=spec.drug_count).map(|i| format!("drug_{i:03}")).collect();

    let mut conditions = Vec::new();
    for (i, id) in c_ids.iter().enumerate() {
        let n_codes = if rng.gen_bool(0.2) { 3 } else { 1 };
        let codes: Vec<_> = (0..n_codes)
            .map(|k| {
                json!({"system": "ICD10", "value": format!("S{i:02}.{k}"),
                       "label": format!("Synthetic condition {} code {k}", i + 1),
                       "general": k == n_codes - 1})
            })
            .collect();
        conditions.push(json!({
            "id": id, "kind": "clinical", "label": format!("Synthetic condition {}", i + 1),
            "category": DEFAULT_CATEGORIES[i % 13].0, "codes": codes
        }));
    }
    for (i, id) in d_ids.iter().enumerate() {
        conditions.push(json!({
            "id": id, "kind": "drug", "label": format!("Synthetic drug {}", i + 1),
            "codes": [{"system": "ATC", "value": format!("Y{i:02}"), "label": format!("Synthetic drug {}", i + 1), "general": true}]
        }));
    }
    let catalog_json = serde_json::to_string_pretty(&json!({
        "categories": categories_json(),
        "conditions": conditions,
    }))
    .expect("json serializes");

    // Plan per-rule clinical slot sizes first so coverage can be guaranteed.
    struct Plan {
        stopp: bool,
        present: usize,
        absent: usize,
        union: usize,
    }
    let stopp_rules = (spec.stopp_fraction * spec.rule_count as f64).round() as usize;
    let mut plans: Vec<Plan> = (0..spec.rule_count)
        .map(|r| {
            let cap = spec.clinical_count.min(MAX_CLINICAL_PER_RULE);
            let mut present = rng.gen_range(1..=2usize);
            let mut union = if rng.gen_bool(0.2) { 2 } else { 0 };
            let mut absent = usize::from(rng.gen_bool(0.15));
            while present + union + absent > cap {
                if union > 0 {
                    union = 0;
                } else if absent > 0 {
                    absent = 0;
                } else {
                    present -= 1;
                }
            }
            if present + union == 0 {
                present = 1;
            }
            Plan {
                stopp: r < stopp_rules,
                present,
                absent,
                union,
            }
        })
        .collect();
    let mut total: usize = plans.iter().map(|p| p.present + p.absent + p.union).sum();
    let mut r = 0;
    while total < spec.clinical_count {
        let cap = spec.clinical_count.min(MAX_CLINICAL_PER_RULE);
        let len = plans.len();
        let p = &mut plans[r % len];
        if p.present + p.absent + p.union < cap {
            p.present += 1;
            total += 1;
        }
        r += 1;
    }

    let mut unused: Vec<usize> = (0..spec.clinical_count).collect();
    unused.shuffle(&mut rng);
    let mut popularity: Vec<usize> = (0..spec.clinical_count).collect();
    popularity.shuffle(&mut rng);
    let mut drug_popularity: Vec<usize> = (0..spec.drug_count).collect();
    drug_popularity.shuffle(&mut rng);

    let mut text = String::from("# Synthetic rulebase\n");
    for (r, plan) in plans.iter().enumerate() {
        let mut taken: BTreeSet<usize> = BTreeSet::new();
        let mut draw = |rng: &mut ChaCha8Rng| -> usize {
            if let Some(c) = unused.pop() {
                if taken.insert(c) {
                    return c;
                }
                unused.insert(0, c);
            }
            loop {
                let c = popularity[skewed(rng, spec.clinical_count)];
                if taken.insert(c) {
                    return c;
                }
            }
        };
        let present: Vec<usize> = (0..plan.present).map(|_| draw(&mut rng)).collect();
        let union: Vec<usize> = (0..plan.union).map(|_| draw(&mut rng)).collect();
        let absent: Vec<usize> = (0..plan.absent).map(|_| draw(&mut rng)).collect();
        let drug = drug_popularity[skewed(&mut rng, spec.drug_count)];

        let names = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort();
            v.iter().map(|i| c_ids[*i].as_str()).collect::<Vec<_>>().join(", ")
        };
        let kind = if plan.stopp { "STOPP" } else { "START" };
        text.push_str(&format!("\n# {kind}\nrule R{:03} {{\n", r + 1));
        let mut present_line = String::new();
        if !present.is_empty() {
            present_line.push_str(&format!(" clinical {}", names(&present)));
        }
        if plan.stopp {
            present_line.push_str(&format!(" drug {}", d_ids[drug]));
        }
        if !present_line.is_empty() {
            text.push_str(&format!("  present{present_line}\n"));
        }
        let mut absent_line = String::new();
        if !absent.is_empty() {
            absent_line.push_str(&format!(" clinical {}", names(&absent)));
        }
        if !plan.stopp {
            absent_line.push_str(&format!(" drug {}", d_ids[drug]));
        }
        if !absent_line.is_empty() {
            text.push_str(&format!("  absent{absent_line}\n"));
        }
        if !union.is_empty() {
            text.push_str(&format!("  any_of clinical {}\n", names(&union)));
        }
        let verb = if plan.stopp { "stop" } else { "start" };
        text.push_str(&format!("  action {verb} {}\n}}\n", d_ids[drug]));
    }

    Ok(SyntheticFiles {
        catalog_json,
        rules_text: text,
    })
}

/// Parameters for synthetic patients.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub count: usize,
    /// Drug list sizes are uniform in `min_drugs..=max_drugs`.
    pub min_drugs: usize,
    pub max_drugs: usize,
    /// Probability that each clinical condition is true.
    pub prevalence: f64,
    pub seed: u64,
}

impl CaseSpec {
    /// Drug lists of 6 to 17 drugs (mean 11.5).
    pub fn polypharmacy(count: usize, seed: u64) -> Self {
        CaseSpec {
            count,
            min_drugs: 6,
            max_drugs: 17,
            prevalence: 0.15,
            seed,
        }
    }
}

pub fn generate_cases(catalog: &Catalog, spec: &CaseSpec) -> Vec<ClinicalCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let drugs: Vec<&str> = catalog
        .conditions()
        .iter()
        .filter(|c| !c.is_clinical())
        .map(|c| c.id.as_str())
        .collect();
    let clinical: Vec<&str> = catalog
        .conditions()
        .iter()
        .filter(|c| c.is_clinical())
        .map(|c| c.id.as_str())
        .collect();
    (0..spec.count)
        .map(|i| {
            let k = rng
                .gen_range(spec.min_drugs..=spec.max_drugs.max(spec.min_drugs))
                .min(drugs.len());
            let mut chosen: Vec<String> = drugs
                .choose_multiple(&mut rng, k)
                .map(|s| s.to_string())
                .collect();
            chosen.sort();
            let truth: Vec<String> = clinical
                .iter()
                .filter(|_| rng.gen_bool(spec.prevalence))
                .map(|s| s.to_string())
                .collect();
            ClinicalCase {
                id: format!("case_{:03}", i + 1),
                drugs: chosen,
                ground_truth: truth,
            }
        })
        .collect()
}
