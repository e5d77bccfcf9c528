//! Action enumeration against a brute-force scan of all facts.

mod common;

#[test]
fn enumerate_actions_matches_brute_force() {
    common::oracle::action_space(1000, 11);
}

#[test]
fn rollouts_satisfy_time_constraints() {
    common::oracle::rollout_constraints(300, 12);
}
