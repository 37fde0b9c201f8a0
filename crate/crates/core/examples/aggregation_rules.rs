//! Every aggregation rule on the same seven reports, two of them outliers.
//!
//! cargo run --example aggregation_rules

use garlab::gar::{GarRule, GarSpec};
use garlab::GradientVector;

fn main() {
    let reports: Vec<GradientVector> =
        [[1.0, 0.9], [1.1, 1.0], [0.9, 1.1], [1.0, 1.2], [1.2, 0.8], [9.0, -9.0], [8.5, -8.0]]
            .iter()
            .map(|r| GradientVector::from_slice(r).unwrap())
            .collect();

    let f = 2;
    let rules = [
        GarRule::WeightedMean,
        GarRule::TrimmedMean,
        GarRule::Median,
        GarRule::Krum,
        GarRule::Faba,
        GarRule::GeoMedianCosine,
        GarRule::HcKrum { clusters: 5 },
    ];
    println!("n = {}, f = {f}; reports 5 and 6 are outliers\n", reports.len());
    for rule in rules {
        let out = GarSpec::new(rule, f).aggregate(&reports).unwrap();
        let agg = out.aggregate.as_slice();
        println!("{:<17} ({:>7.4}, {:>7.4})  from {:?}", rule.name(), agg[0], agg[1], out.selected_indices);
    }
}
