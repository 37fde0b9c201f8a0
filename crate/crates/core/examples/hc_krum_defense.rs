//! HC-Krum against plain Krum under the limited-norm attack at desk scale.
//!
//! cargo run --release --example hc_krum_defense

use garlab::harness::{final_accuracy, run_experiment, ExperimentConfig};
use garlab::{AttackSpec, GarRule};

fn main() {
    for gar in [GarRule::Krum, GarRule::HcKrum { clusters: 5 }] {
        for attack in [AttackSpec::None, AttackSpec::limited_norm()] {
            let config = ExperimentConfig { gar, attack, ..ExperimentConfig::desk(1) };
            let records = run_experiment(&config).unwrap();
            let chosen = records.iter().filter(|r| r.byzantine_selected).count();
            println!(
                "{:<8} {:<13} accuracy {:.4}   rounds using a Byzantine report {chosen}/{}",
                gar.name(),
                attack.name(),
                final_accuracy(&records).unwrap(),
                records.len()
            );
        }
    }
}
