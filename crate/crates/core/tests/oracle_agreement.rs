mod common;

use common::random_feasibility_case;
use onebit::recovery::{
    check_feasible, recover_bnb, recover_exhaustive, search_tree_size, BranchAndBound, BranchOrder,
    FeasibilityInstance,
};

#[test]
fn branch_and_bound_agrees_with_enumeration() {
    let mut found = 0;
    let mut infeasible = 0;
    for seed in 1000..1500u64 {
        let (a, u, k) = random_feasibility_case(seed);
        let inst = FeasibilityInstance::new(&a, &u, k).unwrap();
        let oracle = recover_exhaustive(&inst).unwrap();
        let limit = search_tree_size(a.n(), k) as u64;
        for order in [BranchOrder::ColumnInfluence, BranchOrder::Index] {
            let bb = BranchAndBound::new(a.clone(), k, order).unwrap().solve(&u).unwrap();
            assert_eq!(bb.is_found(), oracle.is_found(), "seed {seed}");
            if let Some(z) = bb.solution() {
                assert!(check_feasible(&a, &u, z, k));
            }
            if order == BranchOrder::Index {
                assert_eq!(bb.status, oracle.status);
            }
            assert!(bb.nodes_explored <= limit, "{} > {limit}", bb.nodes_explored);
        }
        if seed.is_multiple_of(2) {
            assert!(oracle.is_found());
        }
        if oracle.is_found() {
            found += 1;
        } else {
            infeasible += 1;
        }
        assert_eq!(recover_bnb(&inst).unwrap(), recover_bnb(&inst).unwrap());
    }
    assert!(found > 250 && infeasible > 20, "found {found}, infeasible {infeasible}");
}
