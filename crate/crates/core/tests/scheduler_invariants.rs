//! Randomized operation sequences against every discipline.

use proptest::prelude::*;
use qosim::conformance::{check_ops, random_scheduler_suite, Discipline, Op, MAX_PACKET_BYTES};

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        11 => (0u8..8, 40u32..=MAX_PACKET_BYTES).prop_map(|(precedence, bytes)| Op::Enqueue { precedence, bytes }),
        9 => Just(Op::Dequeue),
    ]
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    (prop::collection::vec(op(), 1..240), 0usize..80).prop_map(|(mut v, drain)| {
        v.extend(std::iter::repeat_n(Op::Dequeue, drain));
        v
    })
}

macro_rules! invariant_suite {
    ($($name:ident => $d:expr),* $(,)?) => {
        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            $(
                #[test]
                fn $name(ops in ops()) {
                    if let Err(e) = check_ops($d, &ops) {
                        prop_assert!(false, "{}", e);
                    }
                }
            )*
        }
    };
}

invariant_suite! {
    fifo_invariants => Discipline::Fifo,
    pq_invariants => Discipline::Pq,
    cq_invariants => Discipline::Cq,
    wfq_invariants => Discipline::Wfq,
    cq_llq_invariants => Discipline::CqLlq,
    wfq_llq_invariants => Discipline::WfqLlq,
    pwfq_rr_invariants => Discipline::PwfqRr,
}

#[test]
fn seeded_suite_covers_every_discipline() {
    assert_eq!(random_scheduler_suite(1000, 0x5eed).unwrap(), 7000);
}

#[test]
fn partial_drain_leaves_the_rest_queued() {
    let ops = [
        Op::Enqueue { precedence: 0, bytes: 100 },
        Op::Enqueue { precedence: 0, bytes: 100 },
        Op::Dequeue,
    ];
    for d in Discipline::ALL {
        let s = check_ops(d, &ops).unwrap();
        assert_eq!((s.accepted, s.departed), (2, 1));
    }
}
