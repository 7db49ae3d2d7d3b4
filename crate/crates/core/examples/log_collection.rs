//! Redundant log collection on a 5x5 grid with one sink per group. Each
//! log is reported by both sinks.
//!
//!     cargo run --example log_collection

use fieldcalc::calculus::DeviceId;
use fieldcalc::simulator::Lockstep;
use fieldcalc::warehouse::{
    device_program, sink_group, DeviceInput, LogEvent, LogRecord, ServiceParams,
};

fn main() {
    let sinks = [DeviceId(1), DeviceId(24)];
    let params = ServiceParams::default();
    let mut net = Lockstep::grid(5, 5);
    let log = |origin: u32, round: u32| LogRecord {
        origin: DeviceId(origin),
        seq: round as u16,
        event: LogEvent::Load,
        created_at: round * 1000,
    };
    let mut seen = std::collections::BTreeSet::new();
    for round in 1..=20u32 {
        let out = net
            .step(|c| {
                let me = c.uid();
                let sink = sinks.contains(&me);
                let new_logs = match (me.0, round) {
                    (12, 5) => vec![log(12, round)],
                    (20, 8) => vec![log(20, round)],
                    _ => vec![],
                };
                let input = DeviceInput {
                    forklift: sink,
                    sink_group: sink.then(|| sink_group(me)),
                    new_logs,
                    ..DeviceInput::default()
                };
                device_program(c, &input, &params)
            })
            .unwrap();
        for sink in sinks {
            let g = sink_group(sink) as usize - 1;
            for l in &out[&sink].collected[g] {
                if seen.insert((sink, l.id())) {
                    println!(
                        "round {round:2}: sink {sink} (group {}) got log {}#{} created in round {}",
                        g + 1,
                        l.origin,
                        l.seq,
                        l.created_at / 1000
                    );
                }
            }
        }
    }
}
