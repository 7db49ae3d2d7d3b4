//! Desk-scale smart warehouse: 6x2 aisles, 4 forklifts, 500 simulated
//! seconds. Prints log delivery and message size figures.
//!
//!     cargo run --release --example warehouse -- [seed]

use fieldcalc::simulator::{SimConfig, Simulator, MESSAGE_BUDGET};
use fieldcalc::warehouse::WarehouseScenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let config = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let scenario = WarehouseScenario::new(&config);
    println!(
        "{} pallets, {} forklifts",
        scenario.pallet_count(),
        scenario.forklift_count()
    );
    let mut sim = Simulator::new(config.clone(), scenario)?;
    let series = sim.run()?;
    let report = sim.scenario().report(config.duration);

    let mut sizes = series.message_sizes.clone();
    sizes.sort_unstable();
    let pct = |p: f64| sizes[((sizes.len() - 1) as f64 * p) as usize];
    println!(
        "messages: {} sent, median {} B, p95 {} B, max {} B, {:.2}% within {} B",
        series.messages_sent,
        pct(0.5),
        pct(0.95),
        series.max_message_size,
        100.0 * series.within_budget_fraction(),
        MESSAGE_BUDGET
    );
    println!(
        "logs: {} created, {:.1}% received, {:.1}% received twice, delay avg {:.2} s max {:.2} s",
        report.logs_created,
        100.0 * report.once_fraction(),
        100.0 * report.twice_fraction(),
        report.avg_delay_s,
        report.max_delay_s
    );
    println!(
        "tasks: {} completed, {} not found, {} abandoned; {} collision warnings",
        report.tasks_completed, report.tasks_not_found, report.tasks_abandoned, report.warning_onsets
    );
    Ok(())
}
