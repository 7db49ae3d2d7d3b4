//! Hop-count gradient on a 6x4 grid, before and after the source moves.
//!
//!     cargo run --example gradient

use fieldcalc::blocks::abf_hops;
use fieldcalc::calculus::DeviceId;
use fieldcalc::simulator::Lockstep;

const W: usize = 6;
const H: usize = 4;

fn show(label: &str, hops: &std::collections::BTreeMap<DeviceId, fieldcalc::blocks::Hops>) {
    println!("{label}");
    for y in (0..H).rev() {
        let row: Vec<String> = (0..W)
            .map(|x| format!("{:>4}", hops[&DeviceId((y * W + x) as u32)]))
            .collect();
        println!("{}", row.concat());
    }
}

fn main() {
    let mut net = Lockstep::grid(W, H);
    let hops = net.run(10, |c| abf_hops(c, c.uid() == DeviceId(0))).unwrap();
    show("source at the bottom-left corner:", &hops);

    // The gradient repairs itself once the source moves; no reset needed.
    let far = DeviceId((W * H - 1) as u32);
    let hops = net.run(10, |c| abf_hops(c, c.uid() == far)).unwrap();
    show("\nsource moved to the top-right corner:", &hops);
}
