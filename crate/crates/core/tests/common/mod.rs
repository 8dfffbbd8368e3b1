//! Brute-force oracles and generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use regime_kernel::symbolic::{Atom, Goal, HornClause, Theory};

pub fn atom(name: &str) -> Atom {
    Atom::new(name).unwrap()
}

pub fn atoms(n: usize) -> Vec<Atom> {
    (0..n).map(|i| atom(&format!("a{i}"))).collect()
}

/// Least model by truth-table enumeration: the intersection of all models
/// over the theory's vocabulary.
pub fn truth_table_least_model(theory: &Theory) -> BTreeSet<Atom> {
    let vocab: Vec<Atom> = theory.vocabulary().into_iter().collect();
    assert!(vocab.len() <= 16, "oracle is exponential in the vocabulary");
    let index = |a: &Atom| vocab.iter().position(|v| v == a).unwrap();
    let clauses: Vec<(u32, u32)> = theory
        .clauses()
        .map(|c| {
            (
                c.body.iter().fold(0u32, |m, a| m | 1 << index(a)),
                1u32 << index(&c.head),
            )
        })
        .collect();
    let mut meet = if vocab.is_empty() {
        0
    } else {
        u32::MAX >> (32 - vocab.len())
    };
    for assignment in 0u32..(1u32 << vocab.len()) {
        let model = clauses
            .iter()
            .all(|(body, head)| assignment & body != *body || assignment & head != 0);
        if model {
            meet &= assignment;
        }
    }
    vocab
        .iter()
        .enumerate()
        .filter(|(i, _)| meet & (1 << i) != 0)
        .map(|(_, a)| a.clone())
        .collect()
}

pub fn oracle_entails(theory: &Theory, goal: &Goal) -> bool {
    let model = truth_table_least_model(theory);
    goal.atoms().iter().all(|a| model.contains(a))
}

pub fn random_clause<R: Rng>(rng: &mut R, pool: &[Atom]) -> HornClause {
    let head = pool.choose(rng).unwrap().clone();
    let body_len = if rng.gen_bool(0.3) {
        0
    } else {
        rng.gen_range(1..=3.min(pool.len()))
    };
    let body: Vec<Atom> = pool.choose_multiple(rng, body_len).cloned().collect();
    HornClause::rule(body, head)
}

pub fn random_theory<R: Rng>(rng: &mut R, pool: &[Atom], max_clauses: usize) -> Theory {
    let n = rng.gen_range(0..=max_clauses);
    Theory::from_clauses((0..n).map(|_| random_clause(rng, pool)))
}

pub fn random_goal<R: Rng>(rng: &mut R, pool: &[Atom]) -> Goal {
    let k = rng.gen_range(1..=2.min(pool.len()));
    Goal::new(pool.choose_multiple(rng, k).cloned()).unwrap()
}

/// Size of a greedy `eps`-net of a uniform grid with `per_axis` points per
/// axis on the cube `[0, side]^d`.
pub fn greedy_net_size(d: usize, side: f64, per_axis: usize, eps: f64) -> usize {
    let mut points = vec![Vec::new()];
    for _ in 0..d {
        points = points
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                (0..per_axis).map(move |i| {
                    let mut q = p.clone();
                    q.push(side * i as f64 / (per_axis - 1) as f64);
                    q
                })
            })
            .collect();
    }
    let mut centres: Vec<Vec<f64>> = Vec::new();
    for p in points {
        let covered = centres.iter().any(|c| {
            let d2: f64 = c.iter().zip(&p).map(|(x, y)| (x - y) * (x - y)).sum();
            d2.sqrt() <= eps
        });
        if !covered {
            centres.push(p);
        }
    }
    centres.len()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
