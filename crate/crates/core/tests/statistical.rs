use prognosis_core::features::Feature;
use prognosis_core::glm::{fit_mle, forward_select, sigmoid, wald_inference, Column, Dataset, Design, FittedModel};
use prognosis_core::selection::{random_search_cv, CvPlan};
use prognosis_core::synth::{generate_synthetic_cohort, generate_with_model, CohortSpec};
use prognosis_core::FeatureSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn logistic_sample(rng: &mut ChaCha8Rng, n: usize, truth: &[f64]) -> (Vec<Vec<f64>>, Vec<u8>) {
    let k = truth.len() - 1;
    let mut cols = vec![Vec::with_capacity(n); k];
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut l = truth[0];
        for (j, col) in cols.iter_mut().enumerate() {
            let x: f64 = rng.sample(StandardNormal);
            l += truth[j + 1] * x;
            col.push(x);
        }
        y.push(u8::from(rng.random::<f64>() < sigmoid(l)));
    }
    (cols, y)
}

#[test]
fn wald_intervals_cover_the_truth() {
    let truth = [-0.5, 1.0, -0.7, 0.3];
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let set = FeatureSet::catalog_set(3).unwrap();
    let (mut inside, mut total) = (0, 0);
    for _ in 0..100 {
        let (cols, y) = logistic_sample(&mut rng, 10_000, &truth);
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let ds = Dataset { feature_set: set.clone(), design: Design::from_columns(&refs, y).unwrap() };
        let fit = fit_mle(&ds).unwrap();
        assert!(fit.diagnostics.converged);
        let report = wald_inference(&fit.model, &ds).unwrap();
        for (term, b) in report.terms.iter().zip(truth) {
            total += 1;
            inside += usize::from((term.coefficient - b).abs() <= 3.0 * term.std_error);
        }
    }
    let share = inside as f64 / total as f64;
    assert!(share >= 0.99, "{inside}/{total} within 3 SE");
}

#[test]
fn pure_noise_candidate_is_not_selected() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (cols, y) = logistic_sample(&mut rng, 2_000, &[-0.3, 0.8]);
    let noise: Vec<f64> = (0..2_000).map(|_| rng.sample(StandardNormal)).collect();
    let base = [Column::new("x", cols[0].clone())];
    let result = forward_select(&base, &[Column::new("noise", noise)], &y).unwrap();
    assert!(result.selected.is_empty(), "{:?}", result.steps);
}

#[test]
fn informative_candidate_enters_when_log_likelihood_gains_more_than_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let (cols, y) = logistic_sample(&mut rng, 2_000, &[-0.3, 0.8, 0.6]);
    let base = [Column::new("x", cols[0].clone())];
    let result = forward_select(&base, &[Column::new("z", cols[1].clone())], &y).unwrap();
    assert_eq!(result.selected, vec!["z".to_string()]);
    let gain = result.steps[1].inference.log_likelihood - result.steps[0].inference.log_likelihood;
    assert!(gain > 1.0);
}

fn main_effects_model() -> FittedModel {
    let set = FeatureSet::new(vec![Feature::Ldh, Feature::Lymphocyte, Feature::HsCrp]).unwrap();
    FittedModel::new(set, vec![-3.0, 0.008, -0.12, 0.015], 0.5, "main effects only").unwrap()
}

// Under the null each interaction enters with probability P(χ²₁ > 2) ≈ 0.16,
// so "none selected" holds in roughly 60% of seeds, not 95%.
#[test]
#[ignore = "expected to fail: the ΔLL > 1 entry rule admits null interactions in about 40% of seeds"]
fn main_effects_generator_selects_no_interaction_in_95_percent_of_seeds() {
    let model = main_effects_model();
    let seeds = 20;
    let clean = (0..seeds)
        .filter(|&seed| {
            let spec = CohortSpec { n_patients: 2_000, seed, ..CohortSpec::default() };
            let samples = generate_with_model(&spec, &model).unwrap().final_samples();
            prognosis_core::glm::stepwise_select(&samples).unwrap().result.selected.is_empty()
        })
        .count();
    assert!(clean as f64 >= 0.95 * seeds as f64, "{clean}/{seeds} seeds selected no interaction");
}

#[test]
fn forced_final_probability_labels_nearly_everyone_dead() {
    let spec = CohortSpec {
        n_patients: 5_000,
        noise_scale: 0.0,
        final_probability: Some(0.999),
        seed: 4,
        ..CohortSpec::default()
    };
    let cohort = generate_synthetic_cohort(&spec).unwrap();
    // Binomial(5000, 0.999): mean 4995, sd ≈ 2.2.
    assert!((4_985..=5_000).contains(&cohort.deaths()), "{}", cohort.deaths());
    for p in cohort.patients() {
        let last = p.records.last().unwrap();
        assert!(p.records.iter().all(|r| r.biomarkers() == last.biomarkers()));
    }
}

#[test]
fn each_cell_keeps_its_best_converged_draw() {
    let spec = CohortSpec { n_patients: 200, seed: 12, decision_boundary: 0.8, ..CohortSpec::default() };
    let samples = generate_synthetic_cohort(&spec).unwrap().final_samples();
    let ds = Dataset::from_samples(&samples, &FeatureSet::catalog_set(3).unwrap()).unwrap();
    let plan = CvPlan::new(5, 2, 99, true).unwrap();
    let report = random_search_cv(&ds, &plan, 8).unwrap();
    assert_eq!(report.cells.len(), 10);
    assert_eq!(report.coefficient_vectors().len(), 10);
    for cell in &report.cells {
        let best =
            cell.draws.iter().filter(|d| d.converged).filter_map(|d| d.val_auc).fold(f64::NEG_INFINITY, f64::max);
        let chosen = &cell.draws[cell.chosen];
        assert!(chosen.converged && !cell.flagged);
        assert_eq!(chosen.val_auc, Some(best));
        assert_eq!(cell.val_auc, best);
        // First draw wins a tie.
        let first = cell.draws.iter().position(|d| d.converged && d.val_auc == Some(best)).unwrap();
        assert_eq!(cell.chosen, first);
    }
    assert_eq!(report, random_search_cv(&ds, &plan, 8).unwrap());
}
