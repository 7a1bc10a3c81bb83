mod common;

use congest_apsp::blocker::{beta_pass, compute_scores, v_i, Params};
use congest_apsp::csssp::{build_csssp, Direction};
use congest_apsp::derand::{find_good_point, PrimeSpace, SampleSpace, Selection, XorSpace};
use congest_apsp::engine::{EngineConfig, Sim};
use congest_apsp::fraction::big;
use congest_apsp::oracle::depth_h_paths;
use congest_apsp::NodeId;
use num_rational::Rational64;
use proptest::prelude::*;

/// For every pair of distinct ids, joint counts times the space size equal the
/// product of the marginal counts.
fn assert_pairwise(space: &dyn SampleSpace, n: u32) {
    let m = space.size();
    for u in 1..=n {
        for v in 1..=n {
            if u == v {
                continue;
            }
            let mut joint = [[0u64; 2]; 2];
            for mu in 0..m {
                joint[space.indicator(mu, NodeId(u)) as usize][space.indicator(mu, NodeId(v)) as usize] += 1;
            }
            for a in 0..2 {
                for b in 0..2 {
                    let mu = joint[a][0] + joint[a][1];
                    let mv = joint[0][b] + joint[1][b];
                    assert_eq!(joint[a][b] * m, mu * mv, "ids {u},{v} values {a},{b}");
                }
            }
        }
    }
}

#[test]
fn spaces_are_pairwise_independent() {
    for n in 2..=8 {
        assert_pairwise(&XorSpace::new(n as usize), n);
        for p in [Rational64::new(1, 2), Rational64::new(1, 3), Rational64::new(1, 12), Rational64::new(1, 26)] {
            let s = PrimeSpace::new(n as usize, &big(&p)).unwrap();
            assert_pairwise(&s, n);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn leader_totals_equal_brute_force(g in common::small_graph(12), h in 1u32..3, xor in any::<bool>()) {
        let mut sim = Sim::new(&g, EngineConfig::default());
        let all: Vec<NodeId> = g.nodes().collect();
        let trees = build_csssp(&mut sim, &all, h, Direction::Out).unwrap();
        let params = Params::default();
        let scores = compute_scores(&mut sim, &trees).unwrap();
        let members = v_i(&scores, 1, &params);
        let beta = beta_pass(&mut sim, &trees, &members).unwrap();
        let paths = depth_h_paths(&trees, h);
        let meets = |p: &Vec<NodeId>| p.iter().filter(|v| members.contains(v)).count() as u64;
        let pi: Vec<&Vec<NodeId>> = paths.iter().filter(|p| meets(p) >= 1).collect();
        let pij: Vec<&Vec<NodeId>> = paths.iter().filter(|p| meets(p) >= 2).collect();
        let sel = Selection {
            trees: &trees,
            beta: &beta,
            pij_min: 2,
            v_i: &members,
            i: 1,
            j: 2,
            pi_size: pi.len() as u64,
            pij_size: pij.len() as u64,
            params: &params,
        };
        let space: Box<dyn SampleSpace> = if xor {
            Box::new(XorSpace::new(g.n()))
        } else {
            Box::new(PrimeSpace::new(g.n(), &big(&Rational64::new(1, 4))).unwrap())
        };
        let point = find_good_point(&mut sim, space.as_ref(), &sel).unwrap();
        prop_assert_eq!(point.nu.len() as u64, space.size());
        for (mu, &(nu_pi, nu_pij)) in point.nu.iter().enumerate() {
            let chosen = |v: &NodeId| members.contains(v) && space.indicator(mu as u64, *v);
            let hit = |p: &&&Vec<NodeId>| p.iter().any(chosen);
            prop_assert_eq!(nu_pi, pi.iter().filter(hit).count() as u64);
            prop_assert_eq!(nu_pij, pij.iter().filter(hit).count() as u64);
        }
        let expected: Vec<NodeId> = members.iter().copied().filter(|v| space.indicator(point.report.chosen_mu, *v)).collect();
        prop_assert_eq!(point.selected, expected);
    }
}
