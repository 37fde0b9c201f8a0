use garlab::attack::{self, AdversaryView};
use garlab::gar::{self, GarRule, GarSpec};
use garlab::learner::{self, Dataset, MlpShape, ModelParams, SyntheticSpec};
use garlab::vecmath::{self, GradientVector, GEOMEDIAN_MAX_ITER, GEOMEDIAN_TOL};
use garlab::AttackSpec;
use proptest::prelude::*;

fn vectors(
    n: std::ops::RangeInclusive<usize>,
    d: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Vec<GradientVector>> {
    (n, d).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, d), n)
            .prop_map(|rows| rows.into_iter().map(|r| GradientVector::new(r).unwrap()).collect())
    })
}

fn vec_pair(d: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    d.prop_flat_map(|d| {
        let v = || prop::collection::vec(-1e3f64..1e3, d);
        (v(), v(), v())
    })
}

fn in_box(aggregate: &GradientVector, reports: &[GradientVector]) -> bool {
    (0..aggregate.len()).all(|k| {
        let lo = reports.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
        let hi = reports.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
        aggregate[k] >= lo - slack && aggregate[k] <= hi + slack
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

/// Reverses the node order.
fn reversed(reports: &[GradientVector]) -> Vec<GradientVector> {
    reports.iter().rev().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn distance_is_a_metric((a, b, c) in vec_pair(1..=8)) {
        let (a, b, c) = (GradientVector::new(a).unwrap(), GradientVector::new(b).unwrap(), GradientVector::new(c).unwrap());
        let ab = vecmath::euclidean_distance(&a, &b).unwrap();
        let ba = vecmath::euclidean_distance(&b, &a).unwrap();
        let bc = vecmath::euclidean_distance(&b, &c).unwrap();
        let ac = vecmath::euclidean_distance(&a, &c).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert!(ac <= ab + bc + 1e-9 * (ab + bc));
        prop_assert_eq!(vecmath::euclidean_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn cosine_in_unit_interval((a, b, _) in vec_pair(1..=8)) {
        let (a, b) = (GradientVector::new(a).unwrap(), GradientVector::new(b).unwrap());
        if a.norm() > 0.0 && b.norm() > 0.0 {
            let c = vecmath::cosine_similarity(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn coordinate_median_ignores_order(vs in vectors(1..=9, 1..=5)) {
        let m = vecmath::coordinate_median(&vs).unwrap();
        prop_assert_eq!(&m, &vecmath::coordinate_median(&reversed(&vs)).unwrap());
        prop_assert!(in_box(&m, &vs));
    }

    #[test]
    fn geometric_median_beats_inputs_and_mean(vs in vectors(1..=12, 1..=4)) {
        let gm = vecmath::geometric_median(&vs, GEOMEDIAN_TOL, GEOMEDIAN_MAX_ITER).unwrap();
        let obj = vecmath::sum_of_distances(gm.point.as_slice(), &vs);
        prop_assert!((obj - gm.objective).abs() <= 1e-9 * (1.0 + obj));
        let mean = vecmath::mean(&vs).unwrap();
        for p in vs.iter().chain(std::iter::once(&mean)) {
            prop_assert!(obj <= vecmath::sum_of_distances(p.as_slice(), &vs) + 1e-6);
        }
    }

    #[test]
    fn medoid_is_a_member(vs in vectors(1..=10, 1..=4)) {
        let (idx, m) = vecmath::medoid(&vs).unwrap();
        prop_assert_eq!(&vs[idx], &m);
        prop_assert!(vs[..idx].iter().all(|v| v != &m));
    }

    #[test]
    fn krum_returns_an_input_and_ignores_order(vs in vectors(4..=10, 1..=6), f_frac in 0.0f64..1.0) {
        let f = ((vs.len() - 3) as f64 * f_frac) as usize;
        let out = gar::krum(&vs, f).unwrap();
        let idx = out.selected_indices[0];
        prop_assert_eq!(&out.aggregate, &vs[idx]);
        let scores = garlab::reference::krum_scores(&vs, f);
        let best = scores[idx];
        if scores.iter().filter(|&&s| s == best).count() == 1 {
            prop_assert_eq!(gar::krum(&reversed(&vs), f).unwrap().aggregate, out.aggregate);
        }
    }

    #[test]
    fn robust_aggregates_stay_in_the_box(vs in vectors(3..=10, 1..=6), f_frac in 0.0f64..1.0) {
        let n = vs.len();
        let f_trim = ((n - 1) / 2) as f64 * f_frac;
        let tm = gar::trimmed_mean(&vs, f_trim as usize).unwrap();
        prop_assert!(in_box(&tm.aggregate, &vs));
        prop_assert!(in_box(&gar::median_aggregate(&vs).unwrap().aggregate, &vs));
        prop_assert!(in_box(&gar::faba(&vs, ((n - 1) as f64 * f_frac) as usize).unwrap().aggregate, &vs));
        prop_assert!(in_box(&gar::weighted_mean(&vs, &vec![1.0; n]).unwrap().aggregate, &vs));
    }

    #[test]
    fn aggregates_ignore_node_order(vs in vectors(3..=9, 1..=5), f_frac in 0.0f64..1.0) {
        let n = vs.len();
        let f = (((n - 1) / 2) as f64 * f_frac) as usize;
        let back = reversed(&vs);
        let tm = gar::trimmed_mean(&vs, f).unwrap().aggregate;
        prop_assert!(close(tm.as_slice(), gar::trimmed_mean(&back, f).unwrap().aggregate.as_slice(), 1e-12));
        let med = gar::median_aggregate(&vs).unwrap().aggregate;
        prop_assert_eq!(med, gar::median_aggregate(&back).unwrap().aggregate);
        let fb = gar::faba(&vs, f).unwrap().aggregate;
        prop_assert!(close(fb.as_slice(), gar::faba(&back, f).unwrap().aggregate.as_slice(), 1e-12));
    }

    #[test]
    fn zero_faults_collapse_to_the_mean(vs in vectors(1..=9, 1..=5)) {
        let mean = gar::weighted_mean(&vs, &vec![1.0; vs.len()]).unwrap().aggregate;
        prop_assert_eq!(&gar::trimmed_mean(&vs, 0).unwrap().aggregate, &mean);
        prop_assert_eq!(&gar::faba(&vs, 0).unwrap().aggregate, &mean);
    }

    #[test]
    fn hc_krum_picks_a_cluster_average(vs in vectors(5..=10, 1..=4), f in 0usize..4) {
        let out = gar::hc_krum(&vs, f, 5).unwrap();
        let members: Vec<GradientVector> = out.selected_indices.iter().map(|&i| vs[i].clone()).collect();
        prop_assert!(!members.is_empty());
        let avg = vecmath::mean(&members).unwrap();
        prop_assert!(close(out.aggregate.as_slice(), avg.as_slice(), 1e-12));
    }

    #[test]
    fn clusters_partition_the_points(vs in vectors(3..=12, 1..=3), k_frac in 0.0f64..1.0) {
        let k = 1 + ((vs.len() - 1) as f64 * k_frac) as usize;
        let rows: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        let clusters = gar::average_linkage_clusters(&rows, k);
        prop_assert_eq!(clusters.len(), k);
        let mut all: Vec<usize> = clusters.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..vs.len()).collect::<Vec<_>>());
    }

    #[test]
    fn seesaw_stays_within_budget(vs in vectors(3..=8, 1..=6), eps in 1e-6f64..1e-1, round in 0u64..1000, f in 1usize..4) {
        let spec = AttackSpec::Seesaw { epsilon: eps, reference: Default::default() };
        let view = AdversaryView { honest: &vs, params: &[], round, seed: 17 };
        let forged = attack::craft(&spec, &view, f).unwrap();
        let again = attack::craft(&spec, &view, f).unwrap();
        prop_assert_eq!(&forged, &again);
        let (_, reference) = vecmath::medoid(&vs).unwrap();
        let budget = eps * (1.0 + reference.norm());
        for b in &forged {
            prop_assert!(vecmath::euclidean_distance(b, &reference).unwrap() <= budget);
        }
    }

    #[test]
    fn gar_spec_feasibility_matches_aggregate(vs in vectors(1..=9, 1..=3), f in 0usize..6, which in 0usize..7) {
        let rule = [
            GarRule::WeightedMean, GarRule::TrimmedMean, GarRule::Median, GarRule::Krum,
            GarRule::Faba, GarRule::GeoMedianCosine, GarRule::HcKrum { clusters: 5 },
        ][which];
        let spec = GarSpec::new(rule, f);
        if spec.check_feasible(vs.len()).is_err() {
            prop_assert!(spec.aggregate(&vs).is_err());
        }
    }
}

fn batch_strategy() -> impl Strategy<Value = (ModelParams, Dataset)> {
    (1usize..=4, 1usize..=6, 2usize..=4, 1usize..=5, any::<u64>()).prop_map(|(input, hidden, classes, rows, seed)| {
        let shape = MlpShape::new(input, hidden, classes);
        let data = SyntheticSpec { num_classes: classes, per_class: rows, input_dim: input, spread: 1.0, seed }
            .generate()
            .unwrap();
        (ModelParams::init(shape, seed), data)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn backward_matches_finite_differences((params, batch) in batch_strategy()) {
        let grad = learner::backward(&params, &batch).unwrap();
        let h = 1e-5;
        for k in 0..params.len() {
            let at = |delta: f64| {
                let mut v = params.values().to_vec();
                v[k] += delta;
                learner::forward_loss(&ModelParams::from_values(params.shape(), v).unwrap(), &batch).unwrap().0
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
            prop_assert!(rel < 1e-4, "param {} analytic {} numeric {}", k, grad[k], numeric);
        }
    }
}

proptest! {
    #[test]
    fn loss_is_nonnegative((params, batch) in batch_strategy()) {
        let (loss, correct) = learner::forward_loss(&params, &batch).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
        prop_assert!(correct <= batch.len());
    }

    #[test]
    fn partition_covers_every_row(size in 1usize..200, n in 1usize..12, tf in 0.0f64..0.5, seed in any::<u64>()) {
        prop_assume!(size >= n);
        let data = Dataset::new(vec![0.0; size], (0..size).map(|i| i % 2).collect(), 1, 2).unwrap();
        let shards = learner::partition(&data, n, tf, seed).unwrap();
        prop_assert_eq!(shards.len(), n);
        let mut rows: Vec<usize> = shards.iter().flat_map(|s| s.train_rows.iter().chain(&s.test_rows).copied()).collect();
        rows.sort_unstable();
        prop_assert_eq!(rows, (0..size).collect::<Vec<_>>());
        let sizes: Vec<usize> = shards.iter().map(|s| s.train.len() + s.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
