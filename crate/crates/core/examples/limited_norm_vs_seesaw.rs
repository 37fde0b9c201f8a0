//! Limited-norm and seesaw reports side by side: how far each sits from the
//! honest mean and which one Krum and the mean end up using.
//!
//! cargo run --example limited_norm_vs_seesaw

use garlab::attack::{self, AdversaryView};
use garlab::gar::{GarRule, GarSpec};
use garlab::vecmath::{self, euclidean_distance};
use garlab::{AttackSpec, GradientVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() {
    let (n, f, d) = (7, 2, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let signal: Vec<f64> = (0..d).map(|k| (k as f64 * 0.3).sin()).collect();
    let honest: Vec<GradientVector> = (0..n - f)
        .map(|_| GradientVector::new(signal.iter().map(|s| s + noise.sample(&mut rng)).collect()).unwrap())
        .collect();
    let mean = vecmath::mean(&honest).unwrap();
    let view = AdversaryView { honest: &honest, params: &[], round: 0, seed: 0 };

    for spec in [AttackSpec::limited_norm(), AttackSpec::seesaw()] {
        let forged = attack::craft(&spec, &view, f).unwrap();
        let mut reports = honest.clone();
        reports.extend(forged.iter().cloned());
        println!("{}:", spec.name());
        println!("  forged report distance to honest mean {:.4}", euclidean_distance(&forged[0], &mean).unwrap());
        println!(
            "  distance between the two forged reports {:.2e}",
            euclidean_distance(&forged[0], &forged[1]).unwrap()
        );
        for rule in [GarRule::Krum, GarRule::WeightedMean] {
            let out = GarSpec::new(rule, f).aggregate(&reports).unwrap();
            println!(
                "  {:<5} picks {:?}, aggregate off the honest mean by {:.4}",
                rule.name(),
                out.selected_indices,
                euclidean_distance(&out.aggregate, &mean).unwrap()
            );
        }
    }
}
