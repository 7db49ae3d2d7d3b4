mod common;

use common::{run_bubble_case, BubbleCase};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn processes_never_read_each_other(seed in any::<u64>()) {
        let reads = run_bubble_case(&BubbleCase::seeded(seed));
        prop_assert_eq!(reads.cross, 0);
    }
}

#[test]
fn processes_do_read_their_own_neighbours() {
    let total: u64 = (0..50).map(|s| run_bubble_case(&BubbleCase::seeded(s)).total).sum();
    assert!(total > 0);
}
