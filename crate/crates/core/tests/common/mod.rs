#![allow(dead_code)]

use bnsurrogate_core::bif::parse_network;
use bnsurrogate_core::{Evidence, Network};

pub const ASIA: &str = include_str!("../../../../networks/asia.bif");
pub const SURVEY: &str = include_str!("../../../../networks/survey.bif");
pub const ALARM: &str = include_str!("../../../../networks/alarm.bif");
pub const INSURANCE: &str = include_str!("../../../../networks/insurance.bif");

pub fn asia() -> Network {
    parse_network(ASIA).unwrap()
}

pub fn survey() -> Network {
    parse_network(SURVEY).unwrap()
}

pub fn alarm() -> Network {
    parse_network(ALARM).unwrap()
}

pub fn insurance() -> Network {
    parse_network(INSURANCE).unwrap()
}

/// Product of CPT entries, looked up by explicit parent-tuple arithmetic.
pub fn brute_joint(net: &Network, x: &[usize]) -> f64 {
    let mut p = 1.0;
    for i in 0..net.num_variables() {
        let mut row = 0;
        for &pa in net.parents(i) {
            row = row * net.cardinality(pa) + x[pa];
        }
        p *= net.cpt(i)[row * net.cardinality(i) + x[i]];
    }
    p
}

/// Every full assignment, first variable slowest.
pub fn all_assignments(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &c in cards {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..c).map(move |v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    out
}

/// Posterior marginals and P(O) by summing the full joint.
pub fn enumerate_posteriors(net: &Network, ev: &Evidence) -> (Vec<Vec<f64>>, f64) {
    let mut marg: Vec<Vec<f64>> = net.cardinalities().iter().map(|&c| vec![0.0; c]).collect();
    let mut total = 0.0;
    for x in all_assignments(&net.cardinalities()) {
        if ev.iter().any(|(v, val)| x[v] != val) {
            continue;
        }
        let p = brute_joint(net, &x);
        total += p;
        for (i, &xi) in x.iter().enumerate() {
            marg[i][xi] += p;
        }
    }
    for m in &mut marg {
        m.iter_mut().for_each(|v| *v /= total);
    }
    (marg, total)
}
