//! Seeded flock local search over condition permutations.
//!
//! A small flock of birds walks the permutation space. Each step a bird
//! either keeps walking (adjacent swap or relocation of one condition),
//! flies to a random permutation, or flies back to a remembered good
//! position (its own memory or the flock's best). A bird whose last step
//! improved keeps walking. Bird 0 starts on the frequency-heuristic order
//! and the best position seen is returned, so the result is never worse
//! than the heuristic.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{complete_order, condition_frequency_order, objective, OrderingInstance};
use crate::catalog::CondIdx;
use crate::display::Order;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub seed: u64,
    /// Budget of distinct objective evaluations.
    pub max_evaluations: usize,
    /// Consecutive bird steps without a new flock best before stopping.
    pub stagnation_limit: usize,
    pub flock_size: usize,
    pub p_restart: f64,
    pub p_own_memory: f64,
    pub p_flock_memory: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            seed: 0,
            max_evaluations: 4000,
            stagnation_limit: 2000,
            flock_size: 8,
            p_restart: 0.05,
            p_own_memory: 0.1,
            p_flock_memory: 0.1,
        }
    }
}

impl OptimizerConfig {
    pub fn with_seed(seed: u64) -> Self {
        OptimizerConfig {
            seed,
            ..Default::default()
        }
    }
}

struct Bird {
    position: Vec<CondIdx>,
    value: usize,
    memory: Vec<CondIdx>,
    memory_value: usize,
    improved: bool,
}

struct Evaluator<'i, 'a> {
    inst: &'i OrderingInstance<'a>,
    cache: HashMap<Vec<CondIdx>, usize>,
    evaluations: usize,
}

impl Evaluator<'_, '_> {
    fn value(&mut self, head: &[CondIdx]) -> usize {
        if let Some(v) = self.cache.get(head) {
            return *v;
        }
        self.evaluations += 1;
        let v = objective(self.inst, &complete_order(self.inst.rulebase(), head));
        self.cache.insert(head.to_vec(), v);
        v
    }
}

fn walk(position: &mut [CondIdx], rng: &mut ChaCha8Rng) {
    let n = position.len();
    if rng.gen_bool(0.5) {
        let i = rng.gen_range(0..n - 1);
        position.swap(i, i + 1);
    } else {
        let from = rng.gen_range(0..n);
        let mut to = rng.gen_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        if from < to {
            position[from..=to].rotate_left(1);
        } else {
            position[to..=from].rotate_right(1);
        }
    }
}

pub fn optimize_order(inst: &OrderingInstance<'_>, config: &OptimizerConfig) -> Order {
    let rb = inst.rulebase();
    let referenced = rb.referenced_clinical();
    let seed_order = condition_frequency_order(rb);
    let seed_head: Vec<CondIdx> = seed_order
        .sequence()
        .iter()
        .copied()
        .filter(|c| referenced.contains(c))
        .collect();
    if seed_head.len() < 2 {
        return seed_order;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eval = Evaluator {
        inst,
        cache: HashMap::new(),
        evaluations: 0,
    };

    let flock_size = config.flock_size.max(1);
    let mut flock: Vec<Bird> = Vec::with_capacity(flock_size);
    for i in 0..flock_size {
        let mut position = seed_head.clone();
        if i > 0 {
            position.shuffle(&mut rng);
        }
        let value = eval.value(&position);
        flock.push(Bird {
            memory: position.clone(),
            memory_value: value,
            position,
            value,
            improved: false,
        });
    }

    // The heuristic order wins ties so the result never regresses.
    let mut best = (seed_head.clone(), flock[0].value);
    for bird in &flock[1..] {
        if bird.value < best.1 {
            best = (bird.position.clone(), bird.value);
        }
    }

    let mut stagnation = 0usize;
    'search: while best.1 > 0 {
        for bird in flock.iter_mut() {
            if eval.evaluations >= config.max_evaluations || stagnation >= config.stagnation_limit {
                break 'search;
            }
            let mut next = if bird.improved {
                let mut p = bird.position.clone();
                walk(&mut p, &mut rng);
                p
            } else {
                let r: f64 = rng.gen();
                if r < config.p_restart {
                    let mut p = bird.position.clone();
                    p.shuffle(&mut rng);
                    p
                } else if r < config.p_restart + config.p_own_memory {
                    bird.memory.clone()
                } else if r < config.p_restart + config.p_own_memory + config.p_flock_memory {
                    best.0.clone()
                } else {
                    let mut p = bird.position.clone();
                    walk(&mut p, &mut rng);
                    p
                }
            };
            // Flying to a memory the bird already sits on wastes the step.
            if next == bird.position {
                walk(&mut next, &mut rng);
            }
            let value = eval.value(&next);
            bird.improved = value < bird.value;
            bird.position = next;
            bird.value = value;
            if value < bird.memory_value {
                bird.memory = bird.position.clone();
                bird.memory_value = value;
            }
            if value < best.1 {
                best = (bird.position.clone(), value);
                stagnation = 0;
                if value == 0 {
                    break 'search;
                }
            } else {
                stagnation += 1;
            }
        }
    }
    log::debug!(
        "optimizer: {} evaluations, best objective {}",
        eval.evaluations,
        best.1
    );
    complete_order(rb, &best.0)
}
