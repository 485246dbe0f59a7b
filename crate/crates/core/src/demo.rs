//! Bundled example data: the two worked STOPP/START rules (D2, D6) and a
//! slightly larger demonstration rulebase over a 13-category catalog.

use std::sync::Arc;

use crate::catalog::Catalog;
use crate::rules::{parse_rulebase, RuleBase};

pub const D2_D6_CATALOG: &str = include_str!("../data/d2_d6.catalog.json");
pub const D2_D6_RULES: &str = include_str!("../data/d2_d6.rules");
pub const DEMO_CATALOG: &str = include_str!("../data/demo.catalog.json");
pub const DEMO_RULES: &str = include_str!("../data/demo.rules");

pub fn d2_d6_catalog() -> Arc<Catalog> {
    Arc::new(Catalog::load(D2_D6_CATALOG).expect("bundled catalog is valid"))
}

pub fn d2_d6_rulebase() -> RuleBase {
    parse_rulebase(D2_D6_RULES, d2_d6_catalog()).expect("bundled rules are valid")
}

pub fn demo_catalog() -> Arc<Catalog> {
    Arc::new(Catalog::load(DEMO_CATALOG).expect("bundled catalog is valid"))
}

pub fn demo_rulebase() -> RuleBase {
    parse_rulebase(DEMO_RULES, demo_catalog()).expect("bundled rules are valid")
}

/// Subset of the D2+D6 rulebase holding only the named rules.
pub fn d2_d6_only(rule: &str) -> RuleBase {
    let rb = d2_d6_rulebase();
    let kept = rb.rules().iter().filter(|r| r.id == rule).cloned().collect();
    RuleBase::new(rb.catalog().clone(), kept).expect("subset of a valid rulebase")
}
