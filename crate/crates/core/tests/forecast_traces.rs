use chrono::{NaiveDate, NaiveDateTime};
use prognosis_core::cohort::{BiomarkerRecord, Biomarkers, CohortDataset, Outcome, OutcomeTime, PatientTimeline};
use prognosis_core::forecast::{
    build_daily_samples, consistent_suffix, evaluate_forecast, histogram_bins, horizon_metrics, patient_forecasts,
};
use prognosis_core::glm::published_model;

// Under the published model these score well above and well below 0.8.
fn high() -> Biomarkers {
    Biomarkers::new(600.0, 5.0, 100.0).unwrap()
}
fn low() -> Biomarkers {
    Biomarkers::new(200.0, 30.0, 5.0).unwrap()
}

fn at(day: u32, hour: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2020, 2, day).unwrap().and_hms_opt(hour, 0, 0).unwrap()
}

fn patient(id: &str, records: &[(u32, Biomarkers)], outcome: Outcome, outcome_day: u32) -> PatientTimeline {
    let records = records.iter().map(|&(d, m)| BiomarkerRecord::complete(id, at(d, 9), m)).collect();
    PatientTimeline::new(
        id,
        records,
        outcome,
        OutcomeTime::Date(NaiveDate::from_ymd_opt(2020, 2, outcome_day).unwrap()),
    )
}

#[test]
fn wrong_then_correct_suffix_gives_m7_big_m9() {
    let cohort =
        CohortDataset::new("trace", vec![patient("A", &[(1, low()), (3, high()), (7, high())], Outcome::Death, 10)])
            .unwrap();
    let daily = build_daily_samples(&cohort, &published_model());
    let preds: Vec<Outcome> = daily.samples.iter().map(|s| s.predicted).collect();
    assert_eq!(preds, vec![Outcome::Survival, Outcome::Death, Outcome::Death]);

    let f = &patient_forecasts(&daily.samples)[0];
    assert_eq!((f.n_records, f.n_consistent), (3, 2));
    assert_eq!(f.suffix_start, Some(at(3, 9)));
    assert_eq!(f.days_ahead, Some(7.0));
    assert_eq!(f.max_possible_days, Some(9.0));
}

#[test]
fn last_prediction_wrong_voids_suffix() {
    let cohort =
        CohortDataset::new("trace", vec![patient("B", &[(1, high()), (2, low())], Outcome::Death, 5)]).unwrap();
    let f = &patient_forecasts(&build_daily_samples(&cohort, &published_model()).samples)[0];
    assert_eq!(f.n_consistent, 0);
    assert_eq!(f.days_ahead, None);
    assert_eq!(f.max_possible_days, Some(4.0));

    let report = evaluate_forecast(&cohort, &published_model(), 1.0).unwrap();
    assert_eq!(report.patients_correct, 0);
    assert!(report.histogram.is_empty());
}

#[test]
fn suffix_examples() {
    use Outcome::*;
    let s = consistent_suffix(&[Survival, Death, Death], Death);
    assert_eq!((s.len, s.start), (2, Some(1)));
    assert_eq!(consistent_suffix(&[Death, Survival], Death).len, 0);
    let s = consistent_suffix(&[Survival; 4], Survival);
    assert_eq!((s.len, s.start), (4, Some(0)));
    assert_eq!(consistent_suffix(&[], Death).start, None);
}

#[test]
fn fractional_days_with_timestamped_outcome() {
    let id = "C";
    let rec = BiomarkerRecord::complete(id, at(1, 12), low());
    let outcome = OutcomeTime::DateTime(at(6, 0));
    let cohort =
        CohortDataset::new("t", vec![PatientTimeline::new(id, vec![rec], Outcome::Survival, outcome)]).unwrap();
    let f = &patient_forecasts(&build_daily_samples(&cohort, &published_model()).samples)[0];
    assert_eq!(f.days_ahead, Some(4.5));
    assert_eq!(f.max_possible_days, Some(4.5));
}

#[test]
fn records_after_outcome_are_excluded_and_counted() {
    let cohort = CohortDataset::new(
        "t",
        vec![
            patient("D", &[(1, low()), (4, low()), (9, low())], Outcome::Survival, 6),
            patient("E", &[(2, high()), (5, high())], Outcome::Death, 7),
        ],
    )
    .unwrap();
    let daily = build_daily_samples(&cohort, &published_model());
    assert_eq!(daily.samples.len(), 4);
    assert_eq!(daily.negative_days.len(), 1);
    assert_eq!(daily.negative_days[0].days_to_outcome, Some(-3.0));
    assert_eq!(daily.total_records(), 5);
    let days: Vec<f64> = daily.samples.iter().map(|s| s.days_to_outcome).collect();
    assert_eq!(days, vec![5.0, 2.0, 5.0, 2.0]);

    let report = evaluate_forecast(&cohort, &published_model(), 1.0).unwrap();
    assert_eq!(
        report.included + report.excluded_negative_days.len() + report.excluded_incomplete,
        report.total_records
    );
    let counts: usize = report.metrics.buckets.iter().map(|b| b.n).sum();
    assert_eq!(counts, report.included);
}

#[test]
fn cumulative_accuracy_hand_trace() {
    // Correct at 1 day out, wrong at 5 days out.
    let cohort = CohortDataset::new(
        "t",
        vec![patient("F", &[(9, high())], Outcome::Death, 10), patient("G", &[(5, high())], Outcome::Survival, 10)],
    )
    .unwrap();
    let m = horizon_metrics(&build_daily_samples(&cohort, &published_model()).samples);
    assert_eq!(m.buckets.len(), 6);
    assert_eq!(m.buckets[1].cum_accuracy, Some(1.0));
    assert_eq!(m.buckets[5].cum_accuracy, Some(0.5));
    for d in [0, 2, 3, 4] {
        assert_eq!(m.buckets[d].n, 0);
        assert_eq!(m.buckets[d].accuracy, None);
    }
    assert_eq!(m.buckets[5].cum_accuracy, m.accuracy);
}

#[test]
fn histogram_examples() {
    let bins = histogram_bins(&[0.5, 1.5, 1.7], 1.0).unwrap();
    let counts: Vec<(f64, f64, usize)> = bins.iter().map(|b| (b.bin_start, b.bin_end, b.count)).collect();
    assert_eq!(counts, vec![(0.0, 1.0, 1), (1.0, 2.0, 2)]);
    assert!(histogram_bins(&[], 1.0).unwrap().is_empty());
    assert!(histogram_bins(&[1.0], 0.0).is_err());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn arb_outcomes() -> impl Strategy<Value = (Vec<Outcome>, Outcome)> {
        let o = prop_oneof![Just(Outcome::Death), Just(Outcome::Survival)];
        (proptest::collection::vec(o.clone(), 0..12), o)
    }

    proptest! {
        #[test]
        fn suffix_bounds_and_monotonicity((preds, truth) in arb_outcomes(), flip in any::<prop::sample::Index>()) {
            let s = consistent_suffix(&preds, truth);
            prop_assert!(s.len <= preds.len());
            if preds.is_empty() {
                return Ok(());
            }
            // Correcting a wrong prediction never shortens the suffix.
            let i = flip.index(preds.len());
            let mut fixed = preds.clone();
            fixed[i] = truth;
            prop_assert!(consistent_suffix(&fixed, truth).len >= s.len);
            // Making the final prediction wrong empties it.
            let mut broken = preds.clone();
            *broken.last_mut().unwrap() = if truth == Outcome::Death { Outcome::Survival } else { Outcome::Death };
            prop_assert_eq!(consistent_suffix(&broken, truth).len, 0);
        }

        #[test]
        fn lead_never_exceeds_maximum(
            days in proptest::collection::btree_set(1u32..28, 1..8),
            kinds in proptest::collection::vec(any::<bool>(), 8),
            death in any::<bool>(),
        ) {
            let records: Vec<(u32, Biomarkers)> =
                days.iter().zip(&kinds).map(|(&d, &h)| (d, if h { high() } else { low() })).collect();
            let outcome = if death { Outcome::Death } else { Outcome::Survival };
            let cohort = CohortDataset::new("p", vec![patient("Q", &records, outcome, 28)]).unwrap();
            let report = evaluate_forecast(&cohort, &published_model(), 2.0).unwrap();
            let f = &report.patients[0];
            prop_assert!(f.n_consistent <= f.n_records);
            if let Some(m) = f.days_ahead {
                prop_assert!(0.0 <= m && m <= f.max_possible_days.unwrap());
            }
            let last = report.metrics.buckets.last().unwrap();
            prop_assert_eq!(last.cum_accuracy, report.metrics.accuracy);
            prop_assert_eq!(last.cum_n, report.included);
            let hist: usize = report.histogram.iter().map(|b| b.count).sum();
            prop_assert_eq!(hist, report.patients_correct);
        }
    }
}

#[test]
fn histogram_matches_independent_rebinning() {
    use prognosis_core::synth::{generate_synthetic_cohort, CohortSpec};
    let spec = CohortSpec { seed: 7, decision_boundary: 0.8, ..CohortSpec::default() };
    let cohort = generate_synthetic_cohort(&spec).unwrap();
    let report = evaluate_forecast(&cohort, &published_model(), 1.0).unwrap();
    let lead: Vec<f64> = report.patients.iter().filter_map(|p| p.days_ahead).collect();
    assert!(!lead.is_empty());
    for bin in &report.histogram {
        let count = lead.iter().filter(|&&v| bin.bin_start <= v && v < bin.bin_end).count();
        assert_eq!(bin.count, count, "bin [{}, {})", bin.bin_start, bin.bin_end);
    }
    assert_eq!(report.histogram.iter().map(|b| b.count).sum::<usize>(), lead.len());
}
