//! Choosing the priority order ≺ that keeps the initial questionnaire small.
//!
//! The objective counts the clinical conditions displayed before any
//! clinical answer is given. Three solvers are provided: a frequency
//! heuristic, an exhaustive search for small instances and a seeded
//! population-based local search. [`gtsp`] holds the reduction of the
//! restricted problem to a generalized travelling salesman instance.

pub mod gtsp;
mod optimizer;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::catalog::CondIdx;
use crate::display::{compile_display_rules, Order};
use crate::rules::{PatientState, RuleBase};

pub use optimizer::{optimize_order, OptimizerConfig};

/// Default cap on rule-referenced clinical conditions for exhaustive search.
pub const BRUTE_FORCE_CAP: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderingError {
    #[error("{count} rule-referenced clinical conditions exceed the exhaustive-search cap of {cap}")]
    TooLarge { count: usize, cap: usize },
    #[error("`{0}` is not a non-clinical condition")]
    NotNonClinical(String),
}

/// A rulebase plus the non-clinical facts assumed known when the form opens.
/// An empty fact set gives the global, patient-independent problem.
#[derive(Debug, Clone)]
pub struct OrderingInstance<'a> {
    rulebase: &'a RuleBase,
    state: PatientState,
}

impl<'a> OrderingInstance<'a> {
    pub fn global(rulebase: &'a RuleBase) -> Self {
        OrderingInstance {
            rulebase,
            state: PatientState::new(),
        }
    }

    pub fn for_patient(
        rulebase: &'a RuleBase,
        non_clinical: impl IntoIterator<Item = CondIdx>,
    ) -> Result<Self, OrderingError> {
        let catalog = rulebase.catalog();
        let mut state = PatientState::new();
        for idx in non_clinical {
            state
                .add_present(catalog, idx)
                .map_err(|_| OrderingError::NotNonClinical(
                    catalog.try_get(idx).map(|c| c.id.clone()).unwrap_or_else(|| format!("#{}", idx.0)),
                ))?;
        }
        Ok(OrderingInstance { rulebase, state })
    }

    pub fn rulebase(&self) -> &'a RuleBase {
        self.rulebase
    }

    pub fn non_clinical(&self) -> &BTreeSet<CondIdx> {
        self.state.present()
    }

    /// The state the objective is evaluated in: facts only, no answers.
    pub fn initial_state(&self) -> &PatientState {
        &self.state
    }
}

/// Number of clinical conditions displayed on the initial form under `order`.
pub fn objective(inst: &OrderingInstance<'_>, order: &Order) -> usize {
    let drs = compile_display_rules(inst.rulebase, order)
        .expect("orders cover every clinical condition of their catalog");
    drs.displayed_count(&inst.state)
}

/// Occurrences of each clinical condition across `Cp`, `Ca` and union slots.
pub fn occurrence_counts(rb: &RuleBase) -> BTreeMap<CondIdx, usize> {
    let mut counts = BTreeMap::new();
    for rule in rb.rules() {
        for c in rule.body.clinical_mentions() {
            *counts.entry(c).or_insert(0) += 1;
        }
    }
    counts
}

/// Most frequently mentioned conditions first; ties by ascending id.
pub fn condition_frequency_order(rb: &RuleBase) -> Order {
    let catalog = rb.catalog();
    let counts = occurrence_counts(rb);
    let mut seq: Vec<CondIdx> = catalog.clinical().collect();
    seq.sort_by(|a, b| {
        let ca = counts.get(a).copied().unwrap_or(0);
        let cb = counts.get(b).copied().unwrap_or(0);
        cb.cmp(&ca).then_with(|| catalog.id_of(*a).cmp(catalog.id_of(*b)))
    });
    Order::new(catalog, seq).expect("every clinical condition listed once")
}

/// Rule-referenced clinical conditions sorted by id. Only their relative
/// order influences the objective.
pub(crate) fn referenced_by_id(rb: &RuleBase) -> Vec<CondIdx> {
    let catalog = rb.catalog();
    let mut v: Vec<CondIdx> = rb.referenced_clinical().into_iter().collect();
    v.sort_by(|a, b| catalog.id_of(*a).cmp(catalog.id_of(*b)));
    v
}

/// Full order from a permutation of the referenced conditions, with the
/// unreferenced ones appended by id.
pub(crate) fn complete_order(rb: &RuleBase, head: &[CondIdx]) -> Order {
    let catalog = rb.catalog();
    let in_head: BTreeSet<CondIdx> = head.iter().copied().collect();
    let mut tail: Vec<CondIdx> = catalog.clinical().filter(|c| !in_head.contains(c)).collect();
    tail.sort_by(|a, b| catalog.id_of(*a).cmp(catalog.id_of(*b)));
    let mut seq = head.to_vec();
    seq.extend(tail);
    Order::new(catalog, seq).expect("head and tail partition the clinical conditions")
}

/// Exhaustive minimisation over all permutations of the rule-referenced
/// clinical conditions. Returns the first minimiser in lexicographic
/// permutation order.
pub fn brute_force_order(inst: &OrderingInstance<'_>) -> Result<(Order, usize), OrderingError> {
    brute_force_order_capped(inst, BRUTE_FORCE_CAP)
}

pub fn brute_force_order_capped(
    inst: &OrderingInstance<'_>,
    cap: usize,
) -> Result<(Order, usize), OrderingError> {
    let base = referenced_by_id(inst.rulebase);
    if base.len() > cap {
        return Err(OrderingError::TooLarge {
            count: base.len(),
            cap,
        });
    }
    let mut perm: Vec<usize> = (0..base.len()).collect();
    let mut head = base.clone();
    let mut best: Option<(Order, usize)> = None;
    loop {
        for (slot, &i) in head.iter_mut().zip(&perm) {
            *slot = base[i];
        }
        let order = complete_order(inst.rulebase, &head);
        let value = objective(inst, &order);
        if best.as_ref().map_or(true, |(_, b)| value < *b) {
            best = Some((order, value));
            if value == 0 {
                break;
            }
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best.expect("at least one permutation is evaluated"))
}

/// Advances `items` to its lexicographic successor; false once the last
/// permutation has been reached.
pub(crate) fn next_permutation<T: Ord>(items: &mut [T]) -> bool {
    let n = items.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && items[i - 1] >= items[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while items[j] <= items[i - 1] {
        j -= 1;
    }
    items.swap(i - 1, j);
    items[i..].reverse();
    true
}
