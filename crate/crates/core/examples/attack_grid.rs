//! Desk-scale grid: mean, median, Krum and HC-Krum against no attack,
//! limited-norm and seesaw, averaged over three seeds.
//!
//! cargo run --release --example attack_grid

use garlab::harness::{run_grid, ExperimentConfig};
use garlab::{AttackSpec, GarRule};

fn main() {
    let gars = [GarRule::WeightedMean, GarRule::Median, GarRule::Krum, GarRule::HcKrum { clusters: 5 }];
    let attacks = [AttackSpec::limited_norm(), AttackSpec::seesaw()];
    let seeds = [1u64, 2, 3];
    let configs: Vec<ExperimentConfig> = gars
        .iter()
        .flat_map(|&gar| attacks.iter().map(move |&attack| (gar, attack)))
        .flat_map(|(gar, attack)| seeds.iter().map(move |&seed| (gar, attack, seed)))
        .map(|(gar, attack, seed)| ExperimentConfig { gar, attack, ..ExperimentConfig::desk(seed) })
        .collect();

    let start = std::time::Instant::now();
    let summary = run_grid(&configs);
    println!("{:<14} {:<13} {:>6} {:>9} {:>9} {:>9}", "gar", "attack", "seed", "accuracy", "baseline", "drop(pp)");
    for e in &summary.entries {
        println!(
            "{:<14} {:<13} {:>6} {:>9.4} {:>9.4} {:>9.3}",
            e.config.gar.name(),
            e.config.attack.name(),
            e.config.seed,
            e.final_accuracy.unwrap_or(f64::NAN),
            e.baseline_accuracy.unwrap_or(f64::NAN),
            e.accuracy_drop.map_or(f64::NAN, |d| d * 100.0),
        );
    }
    println!("\nseed-averaged drop (pp):");
    for gar in gars {
        for attack in attacks {
            let drops: Vec<f64> = seeds
                .iter()
                .filter_map(|&s| summary.find(gar.name(), attack.name(), s).and_then(|e| e.accuracy_drop))
                .collect();
            let avg = drops.iter().sum::<f64>() / drops.len() as f64 * 100.0;
            println!("  {:<14} {:<13} {avg:>8.3}", gar.name(), attack.name());
        }
    }
    println!("\n{:.1}s", start.elapsed().as_secs_f64());
}
