//! A forklift asks for kind 5 at one end of a line of 12 pallets. Pallets
//! on the route light up; the matching pallet blinks once the forklift is
//! next to it.
//!
//!     cargo run --example routing_query

use fieldcalc::calculus::DeviceId;
use fieldcalc::simulator::Lockstep;
use fieldcalc::warehouse::{device_program, DeviceInput, Led, Query, RequestKey, ServiceParams};

fn main() {
    let forklift = DeviceId(0);
    let target = DeviceId(6);
    let key = RequestKey {
        requester: forklift,
        seq: 1,
        query: Query::Kind(5),
    };
    let params = ServiceParams::default();
    let mut net = Lockstep::line(13);
    for round in 1..=40 {
        // The forklift drives up to the target from round 25.
        if round == 25 {
            net.link(forklift, target, 1.0);
        }
        let out = net
            .step(|c| {
                let me = c.uid();
                let input = DeviceInput {
                    forklift: me == forklift,
                    requests: if me == forklift { vec![(key, false)] } else { vec![] },
                    stored_content: (me == target).then_some(5),
                    ..DeviceInput::default()
                };
                device_program(c, &input, &params)
            })
            .unwrap();
        let leds: String = out
            .iter()
            .skip(1)
            .map(|(_, o)| match o.led {
                Led::Off => '.',
                Led::On => 'o',
                Led::Blink => '*',
            })
            .collect();
        let hint = out[&forklift].hints[&key];
        println!(
            "round {round:2}  {leds}  hint: {} hops via {}",
            hint.hops, hint.parent
        );
    }
}
