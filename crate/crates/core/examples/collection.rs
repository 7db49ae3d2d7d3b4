//! Single-path collection: every device of an 8x8 grid contributes 1 and
//! its temperature reading; the corner device ends up with the count and
//! the maximum.
//!
//!     cargo run --example collection

use fieldcalc::blocks::{abf_hops, sp_collection};
use fieldcalc::calculus::DeviceId;
use fieldcalc::simulator::Lockstep;

fn main() {
    let mut net = Lockstep::grid(8, 8);
    let temperature = |id: DeviceId| 180 + (id.0 * 37) % 55;
    for round in 1..=18 {
        let out = net
            .step(|c| {
                let me = c.uid();
                let d = abf_hops(c, me == DeviceId(0));
                let count = sp_collection(c, d, 1u32, 0, |a, b| a + b);
                let hottest = sp_collection(c, d, temperature(me), 0, |a, b| *a.max(b));
                (count, hottest)
            })
            .unwrap();
        let (count, hottest) = out[&DeviceId(0)];
        println!("round {round:2}: {count:2} devices counted, max {:.1} C", f64::from(hottest) / 10.0);
    }
}
