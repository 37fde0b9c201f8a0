//! Mean aggregation under the sign-flip attack. With identical honest
//! gradients g the mean is ((n - m) g - m c g) / n exactly.
//!
//! cargo run --example sign_flip_dilution

use garlab::gar::{GarRule, GarSpec};
use garlab::harness::aggregate_round;
use garlab::{AttackSpec, GradientVector};

fn main() {
    let n = 10;
    let g = GradientVector::from_slice(&[1.0, -0.5, 0.25]).unwrap();
    println!("{:>2} {:>5} {:>10} {:>10}", "m", "c", "aggregate", "formula");
    for m in [1, 2, 3, 4] {
        let honest = vec![g.clone(); n - m];
        for c in [1.0, 2.0, 4.0] {
            let out = aggregate_round(
                &GarSpec::new(GarRule::WeightedMean, m),
                &AttackSpec::sign_flip(c),
                m,
                &honest,
                &[],
                0,
                0,
            )
            .unwrap()
            .outcome
            .aggregate;
            let formula = ((n - m) as f64 - m as f64 * c) / n as f64 * g[0];
            println!("{m:>2} {c:>5} {:>10.4} {formula:>10.4}", out[0]);
        }
    }
}
