//! Reduction of the restricted ordering problem to a generalized travelling
//! salesman problem (GTSP).
//!
//! Only rules of the form `(Cp, ∅, ∅, ∅, ∅, A)` are considered and every
//! clinical condition is assumed false. A town is a subset `t ⊆ C` of the
//! conditions already placed in the order; area `A_k` holds the towns of
//! cardinality `k`. Travelling from `i` to `j` costs:
//!
//! * `0` when `i = C` and `j = ∅` (closing the loop),
//! * `+∞` unless `|j| = |i| + 1`,
//! * `1` when some rule `r` has `j ∖ i ⊆ Cp_r` and `i ∩ Cp_r = ∅`,
//! * `0` otherwise.
//!
//! Taken literally, these cases also give finite cost to moves where `j`
//! is not a superset of `i`. Such tours do not describe an order and can be
//! cheaper than every order (rules `{A}`, `{B}`, `{C}`: the tour
//! `∅ → {A} → {B,C} → {A,B,C}` costs 2 while every order displays 3 conditions).
//! [`Transitions::Nested`] therefore adds `+∞` for `i ⊄ j`; it is the
//! default. [`Transitions::Literal`] keeps the literal matrix so the
//! discrepancy can be measured.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::catalog::{Catalog, CondIdx};
use crate::display::Order;
use crate::rules::RuleBase;

/// Largest number of clinical conditions [`gtsp_reduce`] accepts (4096 towns).
pub const REDUCE_CAP: usize = 12;
/// Largest instance [`gtsp_brute_solve`] enumerates.
pub const SOLVE_CAP: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GtspError {
    #[error("rule `{0}` is not of the form (Cp, ∅, ∅, ∅, ∅, A)")]
    NotRestricted(String),
    #[error("{count} clinical conditions exceed the cap of {cap}")]
    TooLarge { count: usize, cap: usize },
    #[error("tour step {step} does not add exactly one condition to the previous town")]
    NonChain { step: usize },
    #[error("tour visits {got} towns, expected {expected}")]
    WrongLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transitions {
    /// Finite distances only between nested towns (`i ⊂ j`).
    Nested,
    /// The piecewise matrix applied literally.
    Literal,
}

/// A town: bit `k` set when the instance's `k`-th condition is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Town(pub u32);

impl Town {
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: Town) -> bool {
        self.0 & !other.0 == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Distance {
    Finite(u32),
    Infinite,
}

impl Distance {
    pub fn finite(self) -> Option<u32> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => f.write_str("∞"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GtspInstance {
    catalog: Arc<Catalog>,
    conditions: Vec<CondIdx>,
    // Cp of every rule as a town mask
    rule_masks: Vec<u32>,
    transitions: Transitions,
}

pub fn gtsp_reduce(rb: &RuleBase) -> Result<GtspInstance, GtspError> {
    gtsp_reduce_with(rb, Transitions::Nested, REDUCE_CAP)
}

pub fn gtsp_reduce_with(
    rb: &RuleBase,
    transitions: Transitions,
    cap: usize,
) -> Result<GtspInstance, GtspError> {
    let catalog = rb.catalog().clone();
    for rule in rb.rules() {
        let b = &rule.body;
        if !(b.d_present.is_empty() && b.c_absent.is_empty() && b.d_absent.is_empty() && b.unions.is_empty()) {
            return Err(GtspError::NotRestricted(rule.id.clone()));
        }
    }
    let conditions: Vec<CondIdx> = catalog.clinical().collect();
    if conditions.len() > cap.min(31) {
        return Err(GtspError::TooLarge {
            count: conditions.len(),
            cap,
        });
    }
    let bit = |c: &CondIdx| -> u32 {
        1 << conditions.iter().position(|x| x == c).expect("clinical condition")
    };
    let rule_masks = rb
        .rules()
        .iter()
        .map(|r| r.body.c_present.iter().map(bit).fold(0, |a, b| a | b))
        .collect();
    Ok(GtspInstance {
        catalog,
        conditions,
        rule_masks,
        transitions,
    })
}

impl GtspInstance {
    /// Number of clinical conditions.
    pub fn n(&self) -> usize {
        self.conditions.len()
    }

    pub fn conditions(&self) -> &[CondIdx] {
        &self.conditions
    }

    pub fn transitions(&self) -> Transitions {
        self.transitions
    }

    pub fn town_count(&self) -> usize {
        1 << self.n()
    }

    pub fn towns(&self) -> impl Iterator<Item = Town> {
        (0..self.town_count() as u32).map(Town)
    }

    pub fn full(&self) -> Town {
        Town(((1u64 << self.n()) - 1) as u32)
    }

    /// `A_k` for `k = 0..=n`, towns in increasing mask order.
    pub fn areas(&self) -> Vec<Vec<Town>> {
        let mut areas = vec![Vec::new(); self.n() + 1];
        for t in self.towns() {
            areas[t.len()].push(t);
        }
        areas
    }

    pub fn town_of(&self, ids: &[&str]) -> Option<Town> {
        let mut mask = 0;
        for id in ids {
            let idx = self.catalog.lookup(id)?;
            mask |= 1 << self.conditions.iter().position(|c| *c == idx)?;
        }
        Some(Town(mask))
    }

    pub fn town_conditions(&self, t: Town) -> BTreeSet<CondIdx> {
        self.conditions
            .iter()
            .enumerate()
            .filter(|(k, _)| t.0 & (1 << k) != 0)
            .map(|(_, c)| *c)
            .collect()
    }

    pub fn distance(&self, i: Town, j: Town) -> Distance {
        let n = self.n();
        if i.len() == n && j.is_empty() {
            return Distance::Finite(0);
        }
        if j.len() != i.len() + 1 {
            return Distance::Infinite;
        }
        if self.transitions == Transitions::Nested && !i.is_subset(j) {
            return Distance::Infinite;
        }
        let added = j.0 & !i.0;
        let opens_rule = self
            .rule_masks
            .iter()
            .any(|&cp| added & !cp == 0 && i.0 & cp == 0);
        Distance::Finite(u32::from(opens_rule))
    }

    /// Dense matrix indexed by town mask.
    pub fn matrix(&self) -> Vec<Vec<Distance>> {
        self.towns()
            .map(|i| self.towns().map(|j| self.distance(i, j)).collect())
            .collect()
    }

    pub fn tour_cost(&self, towns: &[Town]) -> Distance {
        if towns.is_empty() {
            return Distance::Infinite;
        }
        let mut total = 0;
        for k in 0..towns.len() {
            let next = towns[(k + 1) % towns.len()];
            match self.distance(towns[k], next) {
                Distance::Finite(d) => total += d,
                Distance::Infinite => return Distance::Infinite,
            }
        }
        Distance::Finite(total)
    }

    /// Order of first appearance along a chain tour, completed to a full
    /// [`Order`] over the catalog.
    pub fn order_from_tour(&self, tour: &GtspTour) -> Result<Order, GtspError> {
        let positions = order_from_tour(tour)?;
        if tour.towns.len() != self.n() + 1 {
            return Err(GtspError::WrongLength {
                got: tour.towns.len(),
                expected: self.n() + 1,
            });
        }
        let seq = positions.iter().map(|k| self.conditions[*k]).collect();
        Ok(Order::new(&self.catalog, seq).expect("chain tour covers every condition"))
    }
}

/// A tour visiting one town per area, `A_0` first; the closing move back
/// to `A_0` is implied and included in `cost`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtspTour {
    pub towns: Vec<Town>,
    pub cost: u32,
}

impl GtspTour {
    pub fn is_chain(&self) -> bool {
        order_from_tour(self).is_ok()
    }
}

/// Bit positions in order of first appearance. A trailing return to the
/// empty town is ignored.
pub fn order_from_tour(tour: &GtspTour) -> Result<Vec<usize>, GtspError> {
    let mut towns = tour.towns.as_slice();
    if towns.len() > 1 && towns[towns.len() - 1].is_empty() {
        towns = &towns[..towns.len() - 1];
    }
    let mut out = Vec::new();
    let mut prev = Town(0);
    for (step, &t) in towns.iter().enumerate() {
        if step == 0 {
            if !t.is_empty() {
                return Err(GtspError::NonChain { step });
            }
            continue;
        }
        let added = t.0 & !prev.0;
        if !prev.is_subset(t) || added.count_ones() != 1 {
            return Err(GtspError::NonChain { step });
        }
        out.push(added.trailing_zeros() as usize);
        prev = t;
    }
    Ok(out)
}

/// Exact minimum-cost tour by depth-first enumeration.
pub fn gtsp_brute_solve(g: &GtspInstance) -> Result<GtspTour, GtspError> {
    gtsp_brute_solve_capped(g, SOLVE_CAP)
}

pub fn gtsp_brute_solve_capped(g: &GtspInstance, cap: usize) -> Result<GtspTour, GtspError> {
    if g.n() > cap {
        return Err(GtspError::TooLarge { count: g.n(), cap });
    }
    let areas = g.areas();
    let mut best: Option<GtspTour> = None;
    let mut path = vec![Town(0)];
    search(g, &areas, &mut path, 0, &mut best);
    Ok(best.expect("the chain tours always have finite cost"))
}

fn search(g: &GtspInstance, areas: &[Vec<Town>], path: &mut Vec<Town>, cost: u32, best: &mut Option<GtspTour>) {
    let here = *path.last().expect("path starts at the empty town");
    let k = path.len() - 1;
    if k == g.n() {
        let close = g.distance(here, Town(0)).finite().expect("closing move is free");
        let total = cost + close;
        if best.as_ref().map_or(true, |b| total < b.cost) {
            *best = Some(GtspTour {
                towns: path.clone(),
                cost: total,
            });
        }
        return;
    }
    for &next in &areas[k + 1] {
        if let Distance::Finite(d) = g.distance(here, next) {
            if best.as_ref().is_some_and(|b| cost + d >= b.cost) {
                continue;
            }
            path.push(next);
            search(g, areas, path, cost + d, best);
            path.pop();
        }
    }
}
