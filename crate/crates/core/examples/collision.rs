//! Two forklifts drive head-on at a combined 2 m/s, turn back 2 m apart,
//! and separate again. Prints what each one's collision service reports.
//!
//!     cargo run --example collision

use fieldcalc::calculus::DeviceId;
use fieldcalc::simulator::{SimConfig, Simulator};
use fieldcalc::warehouse::ApproachScenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = ApproachScenario::new(21.0, 2.0, 2.0);
    let radius = scenario.params().safety_radius;
    let config = SimConfig {
        duration: 16.0,
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(config, scenario)?;
    sim.run()?;
    let s = sim.scenario();
    let trace = s.trace();
    println!(" time  distance  warn(1)  warn(2)");
    for (a, b) in trace.of(DeviceId(1)).zip(trace.of(DeviceId(2))) {
        println!(
            "{:5.1}  {:7.2}   {:6}   {:6}",
            a.time, a.distance, a.warning, b.warning
        );
    }
    println!(
        "radius entry at {:.1} s, turn at {:.1} s",
        s.entry_time(radius),
        s.turn_time()
    );
    Ok(())
}
