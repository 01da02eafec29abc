//! Hand-built instances with values computed by hand and frozen here.

mod common;

use common::{close, load_fixture};
use pro_core::gpro::{self, Edge, GproInstance, Policy, Zapping};
use pro_core::hitting;
use pro_core::oracle::{self, DEFAULT_CAP};
use pro_core::pri::{self, Sense};

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("n{i}")).collect()
}

#[test]
fn barrier_fixture_walks_through_every_policy_step() {
    let inst = load_fixture("barrier_hit.json");
    assert!(gpro::validate(&inst).is_empty());
    assert_eq!(inst.free_count(), 3);

    let trace = pri::solve_default(&inst, Sense::MaximizePagerank).unwrap();
    let bits: Vec<String> = trace.steps.iter().map(|s| s.policy.bitstring(&inst)).collect();
    assert_eq!(bits, ["111", "001", "000", "100"]);

    let phi0 = &trace.steps[0].phi;
    let want = [31.0 / 12.0, 3.0, 1.0, 7.0 / 3.0, 0.0];
    for (got, want) in phi0.iter().zip(want) {
        assert!(close(*got, want, 1e-12), "{phi0:?}");
    }
    assert!(close(trace.steps[1].phi[0], 7.0 / 3.0, 1e-12));
    assert!(close(trace.steps[1].phi[3], 1.5, 1e-12));
    assert!(close(trace.steps[2].phi[0], 7.0 / 3.0, 1e-12));
    assert!(close(trace.steps[2].phi[3], 1.0, 1e-12));
    assert!(close(trace.objective(&inst), 9.0 / 4.0, 1e-12));

    assert_eq!(pri::iterations_of(&trace), 3);
    assert_eq!(trace.evaluations(), 4);
    assert!(trace.converged());

    let opt = oracle::brute_force_optimum(&inst, Sense::MaximizePagerank, DEFAULT_CAP).unwrap();
    assert!(close(opt.optimum, 9.0 / 4.0, 1e-12));
    assert_eq!(opt.argopt, vec![trace.final_policy().clone()]);
}

#[test]
fn barrier_fixture_pagerank_is_reciprocal_return_time() {
    let inst = load_fixture("barrier_hit.json");
    let trace = pri::solve_default(&inst, Sense::MaximizePagerank).unwrap();
    let pr = hitting::pagerank(&inst, trace.final_policy()).unwrap();
    assert!(close(pr.of(inst.start()), 4.0 / 9.0, 1e-12));
}

#[test]
fn weighted_parallel_edges_split_mass() {
    // s -> t (weight 1, cost 2) and s -> a (weight 3, cost 1), a -> t (cost 4)
    let edges = vec![
        Edge::fixed(0, 2).with_cost(2.0),
        Edge::fixed(0, 1).with_weight(3.0),
        Edge::fixed(1, 2).with_cost(4.0),
        Edge::fixed(2, 2).with_cost(0.0),
    ];
    let inst = GproInstance::new(names(3), 0, 2, edges, vec![], None).unwrap();
    let phi = hitting::hitting_times(&inst, &Policy::initial(&inst)).unwrap();
    // phi_a = 4, phi_s = 1/4 * 2 + 3/4 * (1 + 4)
    assert_eq!(phi.phi, vec![4.25, 4.0, 0.0]);
}

#[test]
fn zapping_chain_has_frozen_values() {
    // s -> a -> t, c = 1/2, restarts uniform over all three nodes at cost 1
    let edges = vec![Edge::fixed(0, 1), Edge::fixed(1, 2), Edge::fixed(2, 2).with_cost(0.0)];
    let inst = GproInstance::new(names(3), 0, 2, edges, vec![], Some(Zapping::new(0.5))).unwrap();
    let phi = hitting::hitting_times(&inst, &Policy::initial(&inst)).unwrap();
    assert!(close(phi.phi[0], 18.0 / 7.0, 1e-12), "{:?}", phi.phi);
    assert!(close(phi.phi[1], 12.0 / 7.0, 1e-12), "{:?}", phi.phi);
}

#[test]
fn exclusive_pair_picks_cheaper_branch() {
    // s chooses exactly one of s -> a (then a -> t costs 5) or s -> t (cost 3)
    let edges = vec![
        Edge::free(0, 1),
        Edge::free(0, 2).with_cost(3.0),
        Edge::fixed(1, 2).with_cost(5.0),
        Edge::fixed(2, 2).with_cost(0.0),
    ];
    let inst = GproInstance::new(names(3), 0, 2, edges, vec![[0, 1]], None).unwrap();
    assert!(gpro::validate(&inst).is_empty());
    assert_eq!(inst.policy_count(), 2.0);
    let best = pri::solve_default(&inst, Sense::MaximizePagerank).unwrap();
    assert_eq!(best.objective(&inst), 3.0);
    let worst = pri::solve_default(&inst, Sense::MinimizePagerank).unwrap();
    assert_eq!(worst.objective(&inst), 6.0);
}

#[test]
fn no_free_edges_means_no_iterations() {
    let edges = vec![Edge::fixed(0, 1), Edge::fixed(1, 2), Edge::fixed(2, 2).with_cost(0.0)];
    let inst = GproInstance::new(names(3), 0, 2, edges, vec![], None).unwrap();
    let trace = pri::solve_default(&inst, Sense::MaximizePagerank).unwrap();
    assert_eq!(pri::iterations_of(&trace), 0);
    assert_eq!(trace.evaluations(), 1);
    assert_eq!(trace.objective(&inst), 2.0);
}
