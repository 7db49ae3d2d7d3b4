//! Branches split the network into domains that do not see each other:
//! each device counts its neighbours inside the branch it took.
//!
//!     cargo run --example branching

use fieldcalc::calculus::DeviceId;
use fieldcalc::simulator::Lockstep;

fn main() {
    let mut net = Lockstep::grid(4, 3);
    let out = net
        .run(3, |c| {
            let left = c.uid().0 % 4 < 2;
            let everyone = c.nbr_uid().len() - 1;
            let same_side = c.branch(
                left,
                |c| c.nbr(0u8, 1).len() - 1,
                |c| c.nbr(0u8, 1).len() - 1,
            );
            (left, everyone, same_side)
        })
        .unwrap();
    for y in (0..3u32).rev() {
        let row: Vec<String> = (0..4u32)
            .map(|x| {
                let (left, all, same) = out[&DeviceId(y * 4 + x)];
                format!("{}{}/{}", if left { 'L' } else { 'R' }, same, all)
            })
            .collect();
        println!("{}", row.join("  "));
    }
    println!("(side, neighbours in the same branch / all neighbours)");
}
