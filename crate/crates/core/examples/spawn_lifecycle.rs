//! An aggregate process spreading along a line of 12 devices and then
//! shutting down after its origin returns `terminated`.
//!
//!     cargo run --example spawn_lifecycle

use fieldcalc::blocks::abf_hops;
use fieldcalc::calculus::DeviceId;
use fieldcalc::processes::Status;
use fieldcalc::simulator::Lockstep;

fn main() {
    let mut net = Lockstep::line(12);
    for round in 1..=30u32 {
        let out = net
            .step(|c| {
                let origin = c.uid() == DeviceId(0);
                let keys = if origin { vec![7u32] } else { vec![] };
                c.spawn(keys, |c, _key| {
                    let d = abf_hops(c, origin);
                    let status = if origin && round >= 14 {
                        Status::TERMINATED
                    } else {
                        Status::INTERNAL_OUTPUT
                    };
                    (d, status)
                })
            })
            .unwrap();
        let row: String = out
            .values()
            .map(|m| if m.contains_key(&7) { '#' } else { '.' })
            .collect();
        println!("round {round:2}  {row}");
    }
}
