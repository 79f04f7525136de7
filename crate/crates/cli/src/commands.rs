//! One function per subcommand. Each returns the artifacts it wrote and a
//! short human-readable report.

use std::path::{Path, PathBuf};

use refnet::centrality::CentralityTable;
use refnet::embed::{embed, write_projection_csv, FeatureSet};
use refnet::explain::{run_explain, ExplainOutput};
use refnet::ingest::{load_consultations, load_physicians, write_consultations, write_physicians, ConsultationRecord, PhysicianTable};
use refnet::linkpred::{run_experiment, summarize, summary_text, write_predictions_csv, write_report_csv, ExperimentData, MetricSummary};
use refnet::netbuild::{
    build_professional_network, build_referral_network, extract_interactions, fit_power_law_exponent,
    interval_distribution, physicians_per_patient_histogram, school_birth_decade_gender, specialty_year_counts,
    write_histogram, write_interactions, write_summary_tables, ExtractConfig,
};
use refnet::numkit::rng::{derive_seed, label};
use refnet::synth::{generate, ingest_config};

use crate::config::RunConfig;
use crate::output::{Provenance, Stage};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Synth,
    Ingest,
    BuildReferral,
    BuildProfessional,
    Eda,
    Centrality,
    Embed,
    Experiment,
    Explain,
    Reproduce,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub report: String,
}

impl Outcome {
    fn add(&mut self, files: Vec<PathBuf>, report: impl AsRef<str>) {
        self.files.extend(files);
        self.report.push_str(report.as_ref());
    }
}

/// Runs `cmd` on an already resolved config, on a dedicated pool of
/// `threads` workers when given.
pub fn run(cmd: Command, cfg: &RunConfig, threads: Option<usize>) -> Result<Outcome, CliError> {
    match threads {
        None => dispatch(cmd, cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(cmd, cfg)),
    }
}

fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let prov = Provenance {
        digest: cfg.digest(),
        seed: cfg.seed,
    };
    let dir = cfg.out_dir.as_path();
    match cmd {
        Command::Synth => synth(cfg, &prov, dir),
        Command::Reproduce => reproduce(cfg, &prov, dir),
        Command::Ingest => ingest(cfg, &prov, dir),
        _ => {
            let (records, table) = inputs(cfg)?;
            match cmd {
                Command::BuildReferral => build_referral(cfg, &prov, dir, &records, &table),
                Command::BuildProfessional => build_professional(&prov, dir, &table),
                Command::Eda => eda(cfg, &prov, dir, &records, &table),
                Command::Centrality => centrality(cfg, &prov, dir, &table),
                Command::Embed => {
                    let data = prepare(cfg, &records, table, cfg.ingest.window.end_year())?;
                    embeddings(cfg, &prov, dir, &data)
                }
                Command::Experiment => {
                    let data = prepare(cfg, &records, table, cfg.ingest.window.end_year())?;
                    experiment(cfg, &prov, dir, &data, "table2.csv")
                }
                Command::Explain => {
                    let data = prepare(cfg, &records, table, cfg.ingest.window.end_year())?;
                    explain(cfg, &prov, dir, &data).map(|(o, _)| o)
                }
                Command::Synth | Command::Reproduce | Command::Ingest => unreachable!(),
            }
        }
    }
}

fn input_paths(cfg: &RunConfig) -> Result<(&Path, &Path), CliError> {
    match (&cfg.paths.consultations, &cfg.paths.physicians) {
        (Some(c), Some(p)) => Ok((c, p)),
        _ => Err(CliError::Config(
            "paths.consultations and paths.physicians are required for this subcommand".into(),
        )),
    }
}

fn inputs(cfg: &RunConfig) -> Result<(Vec<ConsultationRecord>, PhysicianTable), CliError> {
    let (c, p) = input_paths(cfg)?;
    let table = load_consultations(c, cfg.ingest.window).map_err(|e| CliError::stage("ingest", e))?;
    let physicians = load_physicians(p, &cfg.ingest).map_err(|e| CliError::stage("ingest", e))?;
    Ok((table.records, physicians))
}

fn prepare(
    cfg: &RunConfig,
    records: &[ConsultationRecord],
    table: PhysicianTable,
    end_year: i32,
) -> Result<ExperimentData, CliError> {
    ExperimentData::prepare(records, table, &cfg.extract, cfg.linkpred.eigen, end_year)
        .map_err(|e| CliError::stage("prepare", e))
}

fn synth(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Outcome, CliError> {
    let mut stage = Stage::new("synth", dir, prov)?;
    let out = generate(&cfg.synth).map_err(|e| stage.err(e))?;
    stage.write("consultations.csv", |b| write_consultations(&out.consultations, b))?;
    stage.write("physicians.csv", |b| write_physicians(&out.physicians, b))?;
    stage.write("manifest.csv", |b| out.write_manifest(b))?;
    stage.write("propensity.csv", |b| out.propensity.write_csv(b))?;
    stage.write("true_referrals.csv", |b| write_interactions(&out.referrals, b))?;
    let report = format!(
        "synth: {} physicians, {} consultations, {} planted referrals, {:.3} within 30 days\n",
        out.physicians.len(),
        out.consultations.len(),
        out.referrals.len(),
        out.realized_within_30()
    );
    let mut o = Outcome::default();
    o.add(stage.commit()?, report);
    Ok(o)
}

fn ingest(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Outcome, CliError> {
    let (c, p) = input_paths(cfg)?;
    let mut stage = Stage::new("ingest", dir, prov)?;
    let table = load_consultations(c, cfg.ingest.window).map_err(|e| stage.err(e))?;
    let physicians = load_physicians(p, &cfg.ingest).map_err(|e| stage.err(e))?;
    stage.write("clean_consultations.csv", |b| write_consultations(&table.records, b))?;
    stage.write("clean_physicians.csv", |b| write_physicians(&physicians.profiles, b))?;
    stage.write("rejections.csv", |b| table.write_rejections(b))?;
    let census = physicians.census();
    let report = format!(
        "ingest: {} of {} rows kept; physicians PC {} SC {} unknown {}\n",
        table.records.len(),
        table.input_rows(),
        census.pc,
        census.sc,
        census.unknown
    );
    let mut o = Outcome::default();
    o.add(stage.commit()?, report);
    Ok(o)
}

fn build_referral(
    cfg: &RunConfig,
    prov: &Provenance,
    dir: &Path,
    records: &[ConsultationRecord],
    table: &PhysicianTable,
) -> Result<Outcome, CliError> {
    let mut stage = Stage::new("build-referral", dir, prov)?;
    let interactions = extract_interactions(records, table, cfg.extract);
    let net = build_referral_network(&interactions).map_err(|e| stage.err(e))?;
    stage.write("interactions.csv", |b| write_interactions(&interactions, b))?;
    stage.write("referral_edges.csv", |b| net.write_edge_csv(b))?;
    stage.write("referral_nodes.csv", |b| net.write_node_csv(b))?;
    let report = format!(
        "build-referral: {} interactions, {} nodes, {} edges\n",
        interactions.len(),
        net.node_count(),
        net.edge_count()
    );
    let mut o = Outcome::default();
    o.add(stage.commit()?, report);
    Ok(o)
}

fn build_professional(prov: &Provenance, dir: &Path, table: &PhysicianTable) -> Result<Outcome, CliError> {
    let mut stage = Stage::new("build-professional", dir, prov)?;
    let net = build_professional_network(table).map_err(|e| stage.err(e))?;
    stage.write("professional_edges.csv", |b| net.write_edge_csv(b))?;
    stage.write("professional_nodes.csv", |b| net.write_node_csv(b))?;
    let report = format!(
        "build-professional: {} nodes, {} edges\n",
        net.node_count(),
        net.edge_count()
    );
    let mut o = Outcome::default();
    o.add(stage.commit()?, report);
    Ok(o)
}

fn eda(
    cfg: &RunConfig,
    prov: &Provenance,
    dir: &Path,
    records: &[ConsultationRecord],
    table: &PhysicianTable,
) -> Result<Outcome, CliError> {
    let mut stage = Stage::new("eda", dir, prov)?;
    let unbounded = ExtractConfig {
        max_gap_days: None,
        ..cfg.extract
    };
    let all = extract_interactions(records, table, unbounded);
    let intervals = interval_distribution(&all).map_err(|e| stage.err(e))?;
    let hist = physicians_per_patient_histogram(records);
    let k_max = hist.keys().next_back().copied().unwrap_or(1);
    let exponent = fit_power_law_exponent(&hist, 1, k_max).map_err(|e| stage.err(e))?;
    stage.write("interval_distribution.csv", |b| intervals.write_csv(b))?;
    stage.write("physicians_per_patient.csv", |b| write_histogram(&hist, b))?;
    stage.write("specialty_years.csv", |b| {
        write_summary_tables(&specialty_year_counts(records, table), b)
    })?;
    stage.write("school_decade_gender.csv", |b| {
        let mut wtr = csv::Writer::from_writer(b);
        wtr.write_record(["school", "birth_decade", "gender", "physicians"])?;
        for ((s, d, g), n) in school_birth_decade_gender(table) {
            wtr.write_record([s, d.to_string(), g, n.to_string()])?;
        }
        wtr.flush().map_err(|e| refnet::Error::Csv(e.into()))
    })?;
    let report = format!(
        "eda: {} interactions, {:.3} within 30 days, physicians-per-patient exponent {:.3}\n",
        all.len(),
        intervals.cumulative_at(30).unwrap_or(f64::NAN),
        exponent
    );
    let mut o = Outcome::default();
    o.add(stage.commit()?, report);
    Ok(o)
}

fn centrality(cfg: &RunConfig, prov: &Provenance, dir: &Path, table: &PhysicianTable) -> Result<Outcome, CliError> {
    let mut stage = Stage::new("centrality", dir, prov)?;
    let net = build_professional_network(table).map_err(|e| stage.err(e))?;
    let c = CentralityTable::compute(&net, cfg.linkpred.eigen).map_err(|e| stage.err(e))?;
    stage.write("centrality.csv", |b| c.write_csv(b))?;
    let report = format!("centrality: {} physicians\n", c.physician_ids.len());
    let mut o = Outcome::default();
    o.add(stage.commit()?, report);
    Ok(o)
}

fn embeddings(cfg: &RunConfig, prov: &Provenance, dir: &Path, data: &ExperimentData) -> Result<Outcome, CliError> {
    let mut stage = Stage::new("embed", dir, prov)?;
    let mut report = String::new();
    for &model in &cfg.selection.models {
        for &set in &cfg.selection.features {
            let x = data.features(set).map_err(|e| stage.err(e))?;
            let seed = derive_seed(cfg.seed, &[label("embed"), model as u64]);
            let out = embed(&data.referral, &x, model, set, &cfg.linkpred.embed, seed).map_err(|e| stage.err(e))?;
            stage.write(&format!("embedding_{model}_{set}.csv"), |b| out.matrix.write_csv(b))?;
            stage.write(&format!("projection_{model}_{set}.csv"), |b| {
                write_projection_csv(&out.matrix, &data.profiles, b)
            })?;
            report.push_str(&format!(
                "embed: {model} {set} dim {} final loss {:.4}\n",
                out.matrix.dim(),
                out.loss_curve.last().copied().unwrap_or(f64::NAN)
            ));
        }
    }
    let mut o = Outcome::default();
    o.add(stage.commit()?, report);
    Ok(o)
}

fn write_table2(summaries: &[MetricSummary], b: &mut Vec<u8>) -> refnet::Result<()> {
    let mut wtr = csv::Writer::from_writer(b);
    wtr.write_record([
        "model",
        "features",
        "runs",
        "mean_accuracy",
        "sd_accuracy",
        "mean_auc",
        "sd_auc",
        "mean_loss",
    ])?;
    for m in summaries {
        wtr.write_record([
            m.model.as_str().to_string(),
            m.features.as_str().to_string(),
            m.runs.to_string(),
            format!("{:.6}", m.mean_accuracy),
            format!("{:.6}", m.sd_accuracy),
            format!("{:.6}", m.mean_auc),
            format!("{:.6}", m.sd_auc),
            format!("{:.6}", m.mean_loss),
        ])?;
    }
    wtr.flush().map_err(|e| refnet::Error::Csv(e.into()))
}

fn experiment(
    cfg: &RunConfig,
    prov: &Provenance,
    dir: &Path,
    data: &ExperimentData,
    table_name: &str,
) -> Result<Outcome, CliError> {
    let mut stage = Stage::new("experiment", dir, prov)?;
    let runs = run_experiment(
        data,
        &cfg.selection.models,
        &cfg.selection.features,
        &cfg.experiment_seeds(),
        &cfg.linkpred,
        &prov.digest,
    )
    .map_err(|e| stage.err(e))?;
    let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
    let summaries = summarize(&reports);
    stage.write(table_name, |b| write_table2(&summaries, b))?;
    stage.write("link_prediction_runs.csv", |b| write_report_csv(&reports, b))?;
    stage.write("predictions.csv", |b| write_predictions_csv(&runs, b))?;
    let mut o = Outcome::default();
    o.add(stage.commit()?, summary_text(&summaries));
    Ok(o)
}

fn explain(
    cfg: &RunConfig,
    prov: &Provenance,
    dir: &Path,
    data: &ExperimentData,
) -> Result<(Outcome, ExplainOutput), CliError> {
    let mut stage = Stage::new("explain", dir, prov)?;
    let out = run_explain(data, &cfg.explain, cfg.explain_seed()).map_err(|e| stage.err(e))?;
    stage.write("shap_ranking.csv", |b| out.report.write_ranking_csv(b))?;
    stage.write("shap_values.csv", |b| out.report.write_values_csv(b))?;
    let mut report = format!(
        "explain: {} pairs ({} features), held-out AUC {:.4}\n",
        out.dataset.labels.len(),
        cfg.explain.mode,
        out.test_auc
    );
    for f in &out.report.ranking {
        report.push_str(&format!("  {:>2}. {:<14} {:.6}\n", f.rank, f.feature, f.mean_abs_phi));
    }
    let mut o = Outcome::default();
    o.add(stage.commit()?, report);
    Ok((o, out))
}

const SYNTH_FILES: [&str; 5] = [
    "consultations.csv",
    "physicians.csv",
    "manifest.csv",
    "propensity.csv",
    "true_referrals.csv",
];
const EXPERIMENT_FILES: [&str; 3] = ["table2_synthetic.csv", "link_prediction_runs.csv", "predictions.csv"];
const EXPLAIN_FILES: [&str; 2] = ["shap_ranking.csv", "shap_values.csv"];

fn cached(prov: &Provenance, dir: &Path, files: &[&str]) -> bool {
    files.iter().all(|f| prov.matches(&dir.join(f)))
}

/// Synthetic data, the with/without link-prediction table and the SHAP
/// ranking. Stages whose artifacts already carry this run's provenance are
/// skipped.
fn reproduce(cfg: &RunConfig, prov: &Provenance, dir: &Path) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    if cached(prov, dir, &SYNTH_FILES) {
        o.report.push_str("synth: cached\n");
    } else {
        let s = synth(cfg, prov, dir)?;
        o.add(s.files, s.report);
    }
    let need_experiment = !cached(prov, dir, &EXPERIMENT_FILES);
    let need_explain = !cached(prov, dir, &EXPLAIN_FILES);
    if need_experiment || need_explain {
        let icfg = ingest_config(&cfg.synth);
        let records = load_consultations(dir.join("consultations.csv"), icfg.window)
            .map_err(|e| CliError::stage("reproduce", e))?
            .records;
        let table = load_physicians(dir.join("physicians.csv"), &icfg).map_err(|e| CliError::stage("reproduce", e))?;
        let data = prepare(cfg, &records, table, cfg.synth.window.end_year())?;
        if need_experiment {
            let e = experiment(cfg, prov, dir, &data, "table2_synthetic.csv")?;
            o.add(e.files, e.report);
        }
        if need_explain {
            let (e, _) = explain(cfg, prov, dir, &data)?;
            o.add(e.files, e.report);
        }
    } else {
        o.report.push_str("experiment: cached\nexplain: cached\n");
    }
    let mut stage = Stage::new("summary", dir, prov)?;
    let text = summary(dir).map_err(|e| stage.err(e))?;
    stage.write_text("summary.txt", &text)?;
    o.add(stage.commit()?, "");
    Ok(o)
}

fn read_rows(path: &Path) -> Result<Vec<csv::StringRecord>, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    rdr.records().collect()
}

/// Rebuilt from the artifacts on disk so cached and fresh runs agree byte for byte.
fn summary(dir: &Path) -> Result<String, csv::Error> {
    let table = read_rows(&dir.join("table2_synthetic.csv"))?;
    let ranking = read_rows(&dir.join("shap_ranking.csv"))?;
    let mut s = String::from("Link prediction on synthetic referrals (mean over seeds)\n\n");
    s.push_str("model      features        runs  accuracy  sd        auc       sd\n");
    for r in &table {
        s.push_str(&format!(
            "{:<10} {:<15} {:>4}  {:<8}  {:<8}  {:<8}  {:<8}\n",
            &r[0],
            &r[1],
            &r[2],
            &r[3][..8.min(r[3].len())],
            &r[4][..8.min(r[4].len())],
            &r[5][..8.min(r[5].len())],
            &r[6][..8.min(r[6].len())],
        ));
    }
    s.push_str("\nAccuracy gain from professional-network features\n\n");
    let acc = |model: &str, set: FeatureSet| -> Option<f64> {
        table
            .iter()
            .find(|r| &r[0] == model && &r[1] == set.as_str())
            .and_then(|r| r[3].parse().ok())
    };
    let mut models: Vec<&str> = table.iter().map(|r| &r[0]).collect();
    models.dedup();
    for m in models {
        if let (Some(w), Some(wo)) = (acc(m, FeatureSet::WithSocial), acc(m, FeatureSet::WithoutSocial)) {
            s.push_str(&format!("{m:<10} {:+.4}\n", w - wo));
        }
    }
    s.push_str("\nPair-classifier feature ranking by mean |SHAP|\n\n");
    for r in &ranking {
        let phi: f64 = r[1].parse().unwrap_or(f64::NAN);
        s.push_str(&format!("{:>2}. {:<14} {phi:.6}\n", &r[2], &r[0]));
    }
    s.push_str(
        "\nCaveat: consultations, referral pairs and test edges share patients and \
         physicians, so they are not independent observations. Seed-to-seed spread \
         reflects split and training variation only and does not support significance \
         claims.\n",
    );
    Ok(s)
}
