//! Random system generators shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use syncstab::config::{AnalysisOptions, Branch, ConverterSpec, PowerSetpoint};
use syncstab::frequency::{LoopModel, OperatingPoint, PllGains};
use syncstab::network::reduce_spec;
use syncstab::SystemSpec;

pub const KP: f64 = 6.5;
pub const KI: f64 = 15782.0;
pub const W0: f64 = 100.0 * PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Connected network with `n` converters, up to two interior nodes and a
/// slack node. Operating points are drawn from `p_range`/`q_range`.
pub fn random_spec(r: &mut ChaCha8Rng, n: usize, p_range: (f64, f64), q_range: (f64, f64)) -> SystemSpec {
    let interior = r.gen_range(0..=2);
    let mut nodes: Vec<String> = (1..=n).map(|i| format!("c{i}")).collect();
    nodes.extend((1..=interior).map(|i| format!("m{i}")));
    let mut order = nodes.clone();
    order.shuffle(r);
    order.insert(0, "g".into());

    let mut branches = Vec::new();
    let mut link = |a: &str, b: &str, r: &mut ChaCha8Rng| {
        branches.push(Branch {
            from: a.into(),
            to: b.into(),
            inductance_pu: r.gen_range(0.02..0.25),
        })
    };
    for k in 1..order.len() {
        let j = r.gen_range(0..k);
        link(&order[k], &order[j], r);
    }
    for _ in 0..r.gen_range(0..=n) {
        let a = r.gen_range(0..order.len());
        let b = r.gen_range(0..order.len());
        if a != b {
            link(&order[a], &order[b], r);
        }
    }
    nodes.push("g".into());

    let converters = (1..=n)
        .map(|i| ConverterSpec {
            name: format!("C{i}"),
            node: format!("c{i}"),
            pll_kp: KP,
            pll_ki: KI,
        })
        .collect();
    let operating_point = (0..n)
        .map(|_| PowerSetpoint {
            p_pu: r.gen_range(p_range.0..=p_range.1),
            q_pu: r.gen_range(q_range.0..=q_range.1),
        })
        .collect();
    SystemSpec {
        rated_frequency_hz: 50.0,
        nodes,
        branches,
        slack_node: "g".into(),
        converters,
        operating_point,
        cases: Vec::new(),
        options: AnalysisOptions {
            flat_voltage: true,
            ..AnalysisOptions::default()
        },
    }
}

/// Loop model with random powers and voltages on a random network.
pub fn random_model(r: &mut ChaCha8Rng, max_n: usize) -> LoopModel {
    let n = r.gen_range(1..=max_n);
    let spec = random_spec(r, n, (-1.0, 1.0), (-0.5, 0.5));
    let net = reduce_spec(&spec).expect("connected network reduces");
    let u = (0..n).map(|_| r.gen_range(0.9..1.1)).collect();
    let op = OperatingPoint::new(spec.p_vector(), spec.q_vector(), u).unwrap();
    LoopModel::new(net, op, PllGains { kp: KP, ki: KI }, W0).unwrap()
}

/// Largest distance after greedy nearest matching of two multisets.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut left: Vec<Complex64> = b.to_vec();
    let mut worst = 0.0f64;
    for x in a {
        let (k, d) = left
            .iter()
            .enumerate()
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        worst = worst.max(d);
        left.swap_remove(k);
    }
    worst
}

pub fn scale(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(1.0, f64::max)
}
