use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use qosim::pwfq::PwfqRule;
use qosim::sched::{self, Scheduler};
use qosim::{FlowId, Ipv6Marking, NodeId, Packet, PacketId, PwfqConfig, PwfqRr, QueueConfig, SimTime, TrafficClass};

const OPS: u64 = 10_000;

type Builder<'a> = Box<dyn Fn() -> Box<dyn Scheduler> + 'a>;

fn packets() -> Vec<Packet> {
    (0..OPS)
        .map(|i| {
            let precedence = (i * 5 % 8) as u8;
            let bytes = 64 + (i * 389 % 1437);
            let marking = Ipv6Marking::new(precedence << 3, 0, 0).unwrap();
            Packet::new(PacketId(i), FlowId(0), NodeId(0), NodeId(1), bytes * 8, marking, TrafficClass::Data, SimTime::ZERO)
                .unwrap()
        })
        .collect()
}

/// Alternates two enqueues with one dequeue, then drains.
fn churn(s: &mut dyn Scheduler, pkts: Vec<Packet>) -> usize {
    let mut out = 0;
    for (k, p) in pkts.into_iter().enumerate() {
        s.enqueue(p, SimTime::ZERO);
        if k % 2 == 1 && s.dequeue(SimTime::ZERO).is_some() {
            out += 1;
        }
    }
    while s.dequeue(SimTime::ZERO).is_some() {
        out += 1;
    }
    out
}

fn pwfq() -> PwfqRr {
    let cfg = PwfqConfig {
        weights: vec![3.0, 2.0, 1.0],
        priorities: vec![vec![2.0, 1.0], vec![1.0], vec![1.0]],
        base_slice_s: 0.020,
        classifier: vec![
            PwfqRule { precedences: vec![7, 6, 5], queue: [0, 0] },
            PwfqRule { precedences: vec![4], queue: [0, 1] },
            PwfqRule { precedences: vec![3], queue: [1, 0] },
            PwfqRule { precedences: vec![2, 1, 0], queue: [2, 0] },
        ],
        capacity: 256,
    };
    PwfqRr::new(cfg, 1_544_000).unwrap()
}

fn bench_disciplines(c: &mut Criterion) {
    let cfg = QueueConfig { capacity: 256, ..Default::default() };
    let builders: [(&str, Builder); 7] = [
        ("fifo", Box::new(|| Box::new(sched::fifo(&QueueConfig { capacity: 768, ..Default::default() }).unwrap()))),
        ("pq", Box::new(|| Box::new(sched::pq(&cfg).unwrap()))),
        ("cq", Box::new(|| Box::new(sched::cq(&cfg).unwrap()))),
        ("wfq", Box::new(|| Box::new(sched::wfq(&cfg).unwrap()))),
        ("cq_llq", Box::new(|| Box::new(sched::with_llq(sched::cq(&cfg).unwrap(), &[5, 6, 7], 256).unwrap()))),
        ("wfq_llq", Box::new(|| Box::new(sched::with_llq(sched::wfq(&cfg).unwrap(), &[5, 6, 7], 256).unwrap()))),
        ("pwfq_rr", Box::new(|| Box::new(pwfq()))),
    ];
    let pkts = packets();
    let mut group = c.benchmark_group("enqueue_dequeue");
    group.throughput(Throughput::Elements(OPS));
    for (name, build) in &builders {
        group.bench_function(*name, |b| {
            b.iter_batched(|| (build(), pkts.clone()), |(mut s, p)| churn(&mut *s, p), BatchSize::SmallInput)
        });
    }
    group.finish();
}

criterion_group!(benches, bench_disciplines);
criterion_main!(benches);
