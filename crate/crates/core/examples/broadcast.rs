//! Two sources broadcast their value along a gradient; every device takes
//! the value of the nearer one.
//!
//!     cargo run --example broadcast

use fieldcalc::blocks::{abf_hops, broadcast};
use fieldcalc::calculus::DeviceId;
use fieldcalc::simulator::Lockstep;

fn main() {
    let sources = [(DeviceId(0), 100u32), (DeviceId(9), 900)];
    let mut net = Lockstep::line(10);
    let out = net
        .run(12, |c| {
            let me = c.uid();
            let own = sources.iter().find(|(s, _)| *s == me).map(|(_, v)| *v);
            let d = abf_hops(c, own.is_some());
            broadcast(c, d, own.unwrap_or(u32::MAX))
        })
        .unwrap();
    for (id, v) in &out {
        println!("device {id}: {v}");
    }
}
