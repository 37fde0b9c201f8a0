//! The seesaw attack against Krum: two near-copies of the honest medoid
//! plus the medoid itself form the tightest cluster, so Krum's pick is
//! always one of them.
//!
//! cargo run --example krum_under_seesaw

use garlab::attack::{self, AdversaryView};
use garlab::gar::{GarRule, GarSpec};
use garlab::vecmath;
use garlab::{AttackSpec, GradientVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let (n, f, d) = (7, 2, 20);
    let spec = AttackSpec::seesaw();
    let krum = GarSpec::new(GarRule::Krum, f);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut copies, mut medoid_owner) = (0, 0);
    let rounds = 200;

    for round in 0..rounds {
        let honest: Vec<GradientVector> = (0..n - f)
            .map(|_| GradientVector::new((0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap())
            .collect();
        let view = AdversaryView { honest: &honest, params: &[], round, seed: 1 };
        let mut reports = honest.clone();
        reports.extend(attack::craft(&spec, &view, f).unwrap());

        let chosen = krum.aggregate(&reports).unwrap().selected_indices[0];
        let (owner, _) = vecmath::medoid(&honest).unwrap();
        if chosen >= n - f {
            copies += 1;
        } else if chosen == owner {
            medoid_owner += 1;
        }
        if round == 0 {
            let scores: Vec<String> =
                garlab::reference::krum_scores(&reports, f).iter().map(|s| format!("{s:.3}")).collect();
            println!("round 0 Krum scores: [{}] (nodes 5, 6 are Byzantine)", scores.join(", "));
        }
    }
    println!(
        "{rounds} rounds: Byzantine copy chosen {copies}, medoid owner chosen {medoid_owner}, other {}",
        rounds - copies - medoid_owner
    );
}
