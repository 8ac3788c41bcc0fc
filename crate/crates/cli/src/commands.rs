use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use prognosis_core::cohort::{
    aggregate_cohort, filter_complete_cases, load_cohort, CohortDataset, ExclusionReason, ExclusionReport, RowIssue,
    Schema,
};
use prognosis_core::forecast::{build_daily_samples, evaluate_forecast, write_histogram_csv, write_horizon_csv};
use prognosis_core::glm::{
    fit, fit_mle, stepwise_select, wald_inference, Dataset, FitConfig, FittedModel, PenaltySpec,
};
use prognosis_core::metrics::{evaluate, write_metric_rows};
use prognosis_core::selection::{
    default_grid, random_search_cv, table1_experiment, tune_threshold, write_table1_csv, CvPlan, CvReport, ScoredSet,
    Table1Row, ThresholdObjective,
};
use prognosis_core::synth::{generate_with_model, CohortSpec};
use prognosis_core::FeatureSet;
use serde::Serialize;
use serde_json::json;

use crate::config::ConfigFile;
use crate::run::Run;
use crate::service::{self, LoadedModel, ScoreRequest};
use crate::{
    Command, CvArgs, DataArgs, EvaluateArgs, FitArgs, ForecastArgs, IngestArgs, PenaltyArg, PlanArgs, ScoreArgs,
    SelectArgs, ServeArgs, SynthArgs, Table1Args, TuneArgs,
};

pub fn dispatch(command: Command, args: Vec<String>, config: Option<ConfigFile>) -> Result<()> {
    let name = args.first().cloned().unwrap_or_default();
    let mut run = Run::new(&name, args, config);
    match command {
        Command::Ingest(a) => ingest(&mut run, &a),
        Command::Synth(a) => synth(&mut run, &a),
        Command::Fit(a) => fit_command(&mut run, &a),
        Command::Cv(a) => cv(&mut run, &a),
        Command::Table1(a) => table1(&mut run, &a),
        Command::SelectFeatures(a) => select_features(&mut run, &a),
        Command::TuneThreshold(a) => tune(&mut run, &a),
        Command::Evaluate(a) => evaluate_command(&mut run, &a),
        Command::Forecast(a) => forecast(&mut run, &a),
        Command::Score(a) => score(&mut run, &a),
        Command::Serve(a) => return serve(&a),
    }?;
    run.finish()
}

fn schema(columns: &[String]) -> Result<Schema> {
    let mut s = Schema::default();
    for c in columns {
        let Some((field, header)) = c.split_once('=') else {
            bail!("--column expects FIELD=HEADER, got `{c}`");
        };
        let slot = match field.trim() {
            "patient_id" => &mut s.patient_id,
            "recorded_at" => &mut s.recorded_at,
            "ldh" => &mut s.ldh,
            "lymphocyte_pct" => &mut s.lymphocyte_pct,
            "hs_crp" => &mut s.hs_crp,
            "outcome" => &mut s.outcome,
            "outcome_date" => &mut s.outcome_date,
            other => bail!("unknown schema field `{other}`"),
        };
        *slot = header.trim().to_string();
    }
    Ok(s)
}

pub struct Prepared {
    pub raw: CohortDataset,
    pub issues: Vec<RowIssue>,
    /// Completeness-filtered and daily-aggregated.
    pub cohort: CohortDataset,
    pub exclusions: ExclusionReport,
}

/// Load, filter and aggregate a cohort the same way for every command.
pub fn prepare(data: &DataArgs, default_label: &str) -> Result<Prepared> {
    let label = data.label.as_deref().unwrap_or(default_label);
    let loaded = load_cohort(&data.data, &schema(&data.columns)?, label)
        .with_context(|| format!("loading {}", data.data.display()))?;
    let mut exclusions = loaded.issue_report();
    let (filtered, report) = filter_complete_cases(&loaded.cohort, data.completeness.into());
    exclusions.extend(report);
    let (cohort, report) = aggregate_cohort(&filtered);
    exclusions.extend(report);
    Ok(Prepared { raw: loaded.cohort, issues: loaded.issues, cohort, exclusions })
}

fn prepare_noting_issues(data: &DataArgs, default_label: &str) -> Result<Prepared> {
    let p = prepare(data, default_label)?;
    if !p.issues.is_empty() {
        eprintln!("warning: {} unparseable rows dropped from {}", p.issues.len(), data.data.display());
    }
    Ok(p)
}

fn ingest(run: &mut Run, a: &IngestArgs) -> Result<()> {
    let p = prepare(&a.data, "cohort")?;
    run.output_dir(&a.out_dir)?;
    run.write(&a.out_dir.join("cohort.csv"), p.cohort.to_csv_string().as_bytes())?;
    let mut buf = Vec::new();
    p.exclusions.write_csv(&mut buf)?;
    run.write(&a.out_dir.join("exclusions.csv"), &buf)?;
    let count = |r| p.exclusions.count(r);
    run.write_json(
        &a.out_dir.join("summary.json"),
        &json!({
            "label": p.cohort.label,
            "loaded": { "patients": p.raw.len(), "deaths": p.raw.deaths(), "records": p.raw.record_count() },
            "retained": { "patients": p.cohort.len(), "deaths": p.cohort.deaths(), "daily_records": p.cohort.record_count() },
            "exclusions": {
                "unparseable_row": count(ExclusionReason::UnparseableRow),
                "no_complete_record": count(ExclusionReason::NoCompleteRecord),
                "incomplete_record": count(ExclusionReason::IncompleteRecord),
                "same_day_superseded": count(ExclusionReason::SameDaySuperseded),
                "incomplete_day": count(ExclusionReason::IncompleteDay),
            },
            "issues": p.issues,
        }),
    )
}

fn synth(run: &mut Run, a: &SynthArgs) -> Result<()> {
    run.seed = Some(a.seed);
    let spec = CohortSpec {
        n_patients: a.n,
        death_rate: a.death_rate,
        records_mean: a.records_mean,
        noise_scale: a.noise,
        spread: a.spread,
        seed: a.seed,
        decision_boundary: a.boundary,
        final_probability: a.final_probability,
        label: a.label.clone(),
        id_prefix: a.id_prefix.clone(),
        ..CohortSpec::default()
    };
    let model = match &a.model {
        Some(p) => LoadedModel::load(p)?.model,
        None => prognosis_core::glm::published_model(),
    };
    let cohort = generate_with_model(&spec, &model)?;
    run.output_file(&a.out)?;
    run.write(&a.out, cohort.to_csv_string().as_bytes())
}

fn feature_set(id: &str) -> Result<FeatureSet> {
    id.parse().with_context(|| format!("feature set `{id}`"))
}

fn fit_command(run: &mut Run, a: &FitArgs) -> Result<()> {
    let p = prepare_noting_issues(&a.data, "training")?;
    let samples = p.cohort.final_samples();
    let ds = Dataset::from_samples(&samples, &feature_set(&a.feature_set)?)?;
    let fitted = match a.penalty {
        PenaltyArg::None => fit_mle(&ds)?,
        PenaltyArg::L1 | PenaltyArg::L2 => {
            let kind = if a.penalty == PenaltyArg::L1 { "l1" } else { "l2" };
            let mut cfg = FitConfig::new(PenaltySpec::new(kind.parse().expect("valid kind"), a.c)?);
            cfg.max_iterations = a.max_iterations;
            cfg.tolerance = a.tolerance;
            fit(&ds, &cfg)?
        }
    };
    if !fitted.diagnostics.converged {
        eprintln!(
            "warning: solver stopped after {} iterations with residual {:e} (not converged)",
            fitted.diagnostics.iterations, fitted.diagnostics.residual
        );
    }
    let model = fitted.model.with_threshold(a.threshold)?;
    run.output_dir(&a.out_dir)?;
    run.write(&a.out_dir.join("model.json"), model.to_json().as_bytes())?;
    run.write_json(
        &a.out_dir.join("fit.json"),
        &json!({
            "penalty": format!("{:?}", a.penalty).to_lowercase(),
            "c": (a.penalty != PenaltyArg::None).then_some(a.c),
            "n": samples.len(),
            "deaths": ds.design.positives(),
            "diagnostics": fitted.diagnostics,
        }),
    )?;
    if a.inference {
        let mle = fit_mle(&ds)?;
        let report = wald_inference(&mle.model, &ds)?;
        run.write_json(&a.out_dir.join("inference.json"), &json!({ "mle": mle.diagnostics, "report": report }))?;
    }
    Ok(())
}

fn plan(a: &PlanArgs) -> Result<CvPlan> {
    if a.draws == 0 {
        bail!("--draws must be at least 1");
    }
    Ok(CvPlan::new(a.folds, a.rounds, a.seed, !a.no_stratify)?)
}

fn coefficients_csv(report: &CvReport) -> String {
    let mut s = String::from("round,fold,intercept");
    for n in report.feature_set.names() {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for c in &report.cells {
        write!(s, "{},{}", c.round, c.fold).unwrap();
        for b in &c.coefficients {
            write!(s, ",{b}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn cells_csv(report: &CvReport) -> String {
    let mut s = String::from("round,fold,penalty,c,train_auc,val_auc,converged_draws,flagged\n");
    for c in &report.cells {
        let converged = c.draws.iter().filter(|d| d.converged).count();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            c.round, c.fold, c.penalty.kind, c.penalty.c, c.train_auc, c.val_auc, converged, c.flagged
        )
        .unwrap();
    }
    s
}

fn cv(run: &mut Run, a: &CvArgs) -> Result<()> {
    run.seed = Some(a.plan.seed);
    let p = prepare_noting_issues(&a.data, "training")?;
    let ds = Dataset::from_samples(&p.cohort.final_samples(), &feature_set(&a.feature_set)?)?;
    let report = random_search_cv(&ds, &plan(&a.plan)?, a.plan.draws)?;
    let median = report.median_model()?;
    run.output_dir(&a.out_dir)?;
    run.write_json(&a.out_dir.join("cv_report.json"), &report)?;
    run.write(&a.out_dir.join("cells.csv"), cells_csv(&report).as_bytes())?;
    run.write(&a.out_dir.join("coefficients.csv"), coefficients_csv(&report).as_bytes())?;
    run.write(&a.out_dir.join("median_model.json"), median.to_json().as_bytes())
}

#[derive(Serialize)]
struct Table1Entry<'a> {
    row: usize,
    #[serde(flatten)]
    stats: Table1Row,
    census: &'a prognosis_core::selection::ConvergenceCensus,
}

fn table1(run: &mut Run, a: &Table1Args) -> Result<()> {
    run.seed = Some(a.plan.seed);
    let sets = a.sets.iter().map(|&r| FeatureSet::catalog_set(r)).collect::<Result<Vec<_>, _>>()?;
    let p = prepare_noting_issues(&a.data, "training")?;
    let reports = table1_experiment(&p.cohort.final_samples(), &sets, &plan(&a.plan)?, a.plan.draws)?;
    let rows: Vec<Table1Row> = reports.iter().map(Table1Row::of).collect();
    let mut buf = Vec::new();
    write_table1_csv(&rows, &mut buf)?;
    let entries: Vec<Table1Entry> = reports
        .iter()
        .zip(&a.sets)
        .map(|(r, &row)| Table1Entry { row, stats: Table1Row::of(r), census: &r.census })
        .collect();
    run.output_dir(&a.out_dir)?;
    run.write(&a.out_dir.join("table1.csv"), &buf)?;
    run.write_json(
        &a.out_dir.join("table1.json"),
        &json!({
            "plan": plan(&a.plan)?,
            "draws_per_fold": a.plan.draws,
            "selection_protocol": reports.first().map(|r| r.selection_protocol),
            "rows": entries,
        }),
    )
}

fn select_features(run: &mut Run, a: &SelectArgs) -> Result<()> {
    let p = prepare_noting_issues(&a.data, "training")?;
    let sel = stepwise_select(&p.cohort.final_samples())?;
    let mut csv = String::from("term,coefficient,std_error,z,p_value\n");
    for t in &sel.result.final_inference().terms {
        writeln!(csv, "{},{},{},{},{}", t.name, t.coefficient, t.std_error, t.z, t.p_value).unwrap();
    }
    run.output_dir(&a.out_dir)?;
    run.write_json(&a.out_dir.join("stepwise.json"), &sel)?;
    run.write(&a.out_dir.join("inference.csv"), csv.as_bytes())?;
    println!("{}", sel.feature_set.names().join(" + "));
    Ok(())
}

fn load_cohort_default(path: &Path, label: &str) -> Result<CohortDataset> {
    let data = DataArgs {
        data: path.to_path_buf(),
        label: Some(label.to_string()),
        columns: Vec::new(),
        completeness: crate::Completeness::PerPatient,
    };
    Ok(prepare_noting_issues(&data, label)?.cohort)
}

fn tune(run: &mut Run, a: &TuneArgs) -> Result<()> {
    let loaded = LoadedModel::load(&a.model)?;
    let model = &loaded.model;
    let objective: ThresholdObjective = a.objective.parse().map_err(anyhow::Error::msg)?;
    let mut sets = Vec::new();
    for path in &a.final_data {
        let name = format!("final:{}", path.display());
        let cohort = load_cohort_default(path, &name)?;
        sets.push(ScoredSet::from_samples(name, model, &cohort.final_samples()));
    }
    for path in &a.daily_data {
        let name = format!("daily:{}", path.display());
        let daily = build_daily_samples(&load_cohort_default(path, &name)?, model);
        sets.push(ScoredSet {
            scores: daily.samples.iter().map(|s| s.probability).collect(),
            labels: daily.samples.iter().map(|s| s.truth.code()).collect(),
            name,
        });
    }
    if sets.is_empty() {
        bail!("no datasets: pass --final and/or --daily");
    }
    let grid = if a.grid.is_empty() { default_grid() } else { a.grid.clone() };
    let tuning = tune_threshold(&sets, objective, &grid)?;
    let tuned = model.with_threshold(tuning.threshold)?;
    let datasets: Vec<_> = sets.iter().map(|s| json!({ "name": s.name, "n": s.scores.len() })).collect();
    run.output_dir(&a.out_dir)?;
    run.write_json(&a.out_dir.join("threshold.json"), &json!({ "datasets": datasets, "tuning": tuning }))?;
    run.write(&a.out_dir.join("model.json"), tuned.to_json().as_bytes())?;
    println!("{}", tuning.threshold);
    Ok(())
}

fn with_threshold(model: FittedModel, threshold: Option<f64>) -> Result<FittedModel> {
    Ok(match threshold {
        Some(t) => model.with_threshold(t)?,
        None => model,
    })
}

fn evaluate_command(run: &mut Run, a: &EvaluateArgs) -> Result<()> {
    let loaded = LoadedModel::load(&a.model)?;
    let model = with_threshold(loaded.model.clone(), a.threshold)?;
    let p = prepare_noting_issues(&a.data, "external_test")?;
    let samples = p.cohort.final_samples();
    let scores: Vec<f64> = samples.iter().map(|s| model.score(&s.biomarkers).probability).collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.outcome.code()).collect();
    let eval = evaluate(&scores, &labels, model.threshold())?;
    let mut buf = Vec::new();
    write_metric_rows(&eval.rows(&p.cohort.label), &mut buf)?;
    run.output_dir(&a.out_dir)?;
    run.write_json(
        &a.out_dir.join("metrics.json"),
        &json!({ "cohort": p.cohort.label, "model_hash": loaded.hash, "evaluation": eval }),
    )?;
    run.write(&a.out_dir.join("metrics.csv"), &buf)
}

fn forecast(run: &mut Run, a: &ForecastArgs) -> Result<()> {
    let model = with_threshold(LoadedModel::load(&a.model)?.model, a.threshold)?;
    let p = prepare_noting_issues(&a.data, "forecast")?;
    let report = evaluate_forecast(&p.cohort, &model, a.bin_width)?;
    let mut horizon = Vec::new();
    write_horizon_csv(&report.metrics, &mut horizon)?;
    let mut hist = Vec::new();
    write_histogram_csv(&report.histogram, &mut hist)?;
    run.output_dir(&a.out_dir)?;
    run.write_json(&a.out_dir.join("horizon.json"), &report)?;
    run.write(&a.out_dir.join("horizon.csv"), &horizon)?;
    run.write(&a.out_dir.join("histogram.csv"), &hist)
}

fn score(run: &mut Run, a: &ScoreArgs) -> Result<()> {
    let loaded = LoadedModel::load(&a.model)?;
    let req = ScoreRequest { ldh: a.ldh, lymphocyte_pct: a.lymphocyte_pct, hs_crp: a.hs_crp };
    let resp = loaded.score(&req)?;
    println!("{}", serde_json::to_string(&resp)?);
    if let Some(dir) = &a.out_dir {
        run.output_dir(dir)?;
        run.write_json(&dir.join("score.json"), &resp)?;
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let model = LoadedModel::load(&a.model)?;
    if let Some(dir) = &a.ui_dir {
        if !dir.is_dir() {
            bail!("UI directory {} does not exist", dir.display());
        }
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(model, &a.bind, a.ui_dir.clone()))
}
