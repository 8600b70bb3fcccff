mod support;

#[test]
fn chain_ranks_are_monotone() {
    support::chain_rank_is_monotone().unwrap();
}
